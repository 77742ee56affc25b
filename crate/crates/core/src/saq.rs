//! Tabular single-agent Q-learning over joint placement, allocation and caching.
//!
//! A state is a decision configuration: one placement bit per user, an owner for
//! each of the `N_f` resource slices, and (outside strict sizing) the cached set.
//! Actions are elementary moves: give one slice to a user, optionally flipping
//! that user's placement, or toggle one task's cache flag.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::env::Scenario;
use crate::sysmodel::{DecisionVector, Placement, SystemConfig, GRID_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct ActionId(pub usize);

/// A decoded state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub local: Vec<bool>,
    /// Owner of every resource slice.
    pub slice_owner: Vec<usize>,
    /// Cached tasks, present only when caching is part of the state.
    pub cache: Option<Vec<bool>>,
}

/// Elementary move encoded by an [`ActionId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Assign { user: usize, slice: usize },
    FlipAndAssign { user: usize, slice: usize },
    ToggleCache { task: usize },
}

/// Encoding of states and actions for one problem size.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub n_users: usize,
    pub n_slices: usize,
    pub n_tasks: usize,
    pub cache_slots: usize,
    pub table2_strict: bool,
    pub strict_c4: bool,
    cache_sets: Vec<u64>,
    cache_rank: HashMap<u64, usize>,
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

impl StateSpace {
    pub fn new(cfg: &SystemConfig, table2_strict: bool, strict_c4: bool) -> Result<Self> {
        let mut cache_sets = Vec::new();
        if !table2_strict {
            if cfg.n_tasks > 30 {
                return Err(Error::Size(format!("{} tasks are too many to fold caching into the state", cfg.n_tasks)));
            }
            let mut masks: Vec<u64> = (0u64..1 << cfg.n_tasks)
                .filter(|m| m.count_ones() as usize <= cfg.c_cache_slots)
                .collect();
            masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
            cache_sets = masks;
        }
        let cache_rank = cache_sets.iter().enumerate().map(|(r, &m)| (m, r)).collect();
        Ok(Self {
            n_users: cfg.n_users,
            n_slices: cfg.n_freq_slices,
            n_tasks: cfg.n_tasks,
            cache_slots: cfg.c_cache_slots,
            table2_strict,
            strict_c4,
            cache_sets,
            cache_rank,
        })
    }

    fn x_range(&self) -> Option<usize> {
        checked_pow(2, self.n_users)
    }

    fn owner_range(&self) -> Option<usize> {
        checked_pow(self.n_users, self.n_slices)
    }

    fn cache_range(&self) -> usize {
        if self.table2_strict {
            1
        } else {
            self.cache_sets.len()
        }
    }

    /// `2^{N_u} N_u^{N_f}`, times the number of cache sets when caching is folded in.
    pub fn n_states(&self) -> Option<usize> {
        self.x_range()?.checked_mul(self.owner_range()?)?.checked_mul(self.cache_range())
    }

    /// `2 N_u N_f`, plus one toggle per task when caching is folded in.
    pub fn n_actions(&self) -> usize {
        2 * self.n_users * self.n_slices + if self.table2_strict { 0 } else { self.n_tasks }
    }

    pub fn encode(&self, c: &Configuration) -> Result<StateId> {
        if c.local.len() != self.n_users || c.slice_owner.len() != self.n_slices {
            return Err(Error::Dimension("configuration shape mismatch".into()));
        }
        let mut id = 0usize;
        for &l in &c.local {
            id = id * 2 + usize::from(l);
        }
        for &o in &c.slice_owner {
            if o >= self.n_users {
                return Err(Error::Domain(format!("slice owner {o} out of range")));
            }
            id = id * self.n_users + o;
        }
        let rank = match (&c.cache, self.table2_strict) {
            (None, true) => 0,
            (Some(z), false) => {
                let mask = z.iter().enumerate().fold(0u64, |m, (j, &b)| if b { m | 1 << j } else { m });
                *self
                    .cache_rank
                    .get(&mask)
                    .ok_or_else(|| Error::Infeasible(vec![crate::Constraint::C5]))?
            }
            _ => return Err(Error::Dimension("cache part does not match the state space".into())),
        };
        Ok(StateId(id * self.cache_range() + rank))
    }

    pub fn decode(&self, s: StateId) -> Result<Configuration> {
        let n = self.n_states().ok_or_else(|| Error::Size("state space overflows".into()))?;
        if s.0 >= n {
            return Err(Error::Domain(format!("state {} out of range {n}", s.0)));
        }
        let mut id = s.0;
        let cache = if self.table2_strict {
            None
        } else {
            let r = id % self.cache_range();
            id /= self.cache_range();
            let mask = self.cache_sets[r];
            Some((0..self.n_tasks).map(|j| mask >> j & 1 == 1).collect())
        };
        let mut slice_owner = vec![0; self.n_slices];
        for k in (0..self.n_slices).rev() {
            slice_owner[k] = id % self.n_users;
            id /= self.n_users;
        }
        let mut local = vec![false; self.n_users];
        for i in (0..self.n_users).rev() {
            local[i] = id % 2 == 1;
            id /= 2;
        }
        Ok(Configuration { local, slice_owner, cache })
    }

    /// Placement and shares of a configuration. Without strict C4, slices held by
    /// local users are wasted (and leave the allocation invalid if anyone offloads).
    pub fn placement_and_shares(&self, c: &Configuration) -> (Vec<Placement>, Vec<f64>) {
        let x: Vec<Placement> =
            c.local.iter().map(|&l| if l { Placement::Local } else { Placement::Offload }).collect();
        let mut owned = vec![0usize; self.n_users];
        for &o in &c.slice_owner {
            owned[o] += 1;
        }
        let y = (0..self.n_users)
            .map(|i| {
                if self.strict_c4 || x[i].is_offload() {
                    owned[i] as f64 / self.n_slices as f64
                } else {
                    0.0
                }
            })
            .collect();
        (x, y)
    }

    /// Configuration of a decision with slices handed out in user order.
    pub fn configuration_of(&self, d: &DecisionVector) -> Result<Configuration> {
        if d.x.len() != self.n_users || d.y.len() != self.n_users || d.z.len() != self.n_tasks {
            return Err(Error::Dimension("decision shape mismatch".into()));
        }
        let nf = self.n_slices as f64;
        let mut slice_owner = Vec::with_capacity(self.n_slices);
        let any_off = d.x.iter().any(|p| p.is_offload());
        for (i, &y) in d.y.iter().enumerate() {
            let k = (y * nf).round();
            if (y * nf - k).abs() > GRID_TOL * nf || k < 0.0 {
                return Err(Error::Infeasible(vec![crate::Constraint::C2]));
            }
            if !self.strict_c4 && !d.x[i].is_offload() && k > 0.0 {
                return Err(Error::Infeasible(vec![crate::Constraint::C4]));
            }
            slice_owner.extend(std::iter::repeat(i).take(k as usize));
        }
        let need_full = self.strict_c4 || any_off;
        if slice_owner.len() > self.n_slices || (need_full && slice_owner.len() != self.n_slices) {
            return Err(Error::Infeasible(vec![crate::Constraint::C4]));
        }
        slice_owner.resize(self.n_slices, 0);
        let cache = if self.table2_strict { None } else { Some(d.z.clone()) };
        Ok(Configuration { local: d.x.iter().map(|p| !p.is_offload()).collect(), slice_owner, cache })
    }

    pub fn decode_move(&self, a: ActionId) -> Result<Move> {
        let per_kind = self.n_users * self.n_slices;
        if a.0 >= self.n_actions() {
            return Err(Error::Domain(format!("action {} out of range {}", a.0, self.n_actions())));
        }
        if a.0 >= 2 * per_kind {
            return Ok(Move::ToggleCache { task: a.0 - 2 * per_kind });
        }
        let (kind, rem) = (a.0 / per_kind, a.0 % per_kind);
        let (user, slice) = (rem / self.n_slices, rem % self.n_slices);
        Ok(if kind == 0 { Move::Assign { user, slice } } else { Move::FlipAndAssign { user, slice } })
    }

    /// Successor configuration, or `None` when the move breaks the cache limit.
    pub fn apply(&self, c: &Configuration, a: ActionId) -> Result<Option<Configuration>> {
        let mut n = c.clone();
        match self.decode_move(a)? {
            Move::Assign { user, slice } => n.slice_owner[slice] = user,
            Move::FlipAndAssign { user, slice } => {
                n.local[user] = !n.local[user];
                n.slice_owner[slice] = user;
            }
            Move::ToggleCache { task } => {
                let z = n.cache.as_mut().expect("toggle actions exist only with folded caching");
                z[task] = !z[task];
                if z.iter().filter(|&&b| b).count() > self.cache_slots {
                    return Ok(None);
                }
            }
        }
        Ok(Some(n))
    }

    /// Feasibility mask over actions from configuration `c`.
    pub fn action_mask(&self, c: &Configuration) -> Result<Vec<bool>> {
        (0..self.n_actions()).map(|a| Ok(self.apply(c, ActionId(a))?.is_some())).collect()
    }

    /// Everyone local, every slice with user 0, nothing cached.
    pub fn initial(&self) -> Configuration {
        Configuration {
            local: vec![true; self.n_users],
            slice_owner: vec![0; self.n_slices],
            cache: (!self.table2_strict).then(|| vec![false; self.n_tasks]),
        }
    }

    /// Full decision for a slot; the scenario fills the cache in strict sizing.
    pub fn to_decision(&self, c: &Configuration, scenario: &Scenario, slot: usize) -> Result<DecisionVector> {
        let (x, y) = self.placement_and_shares(c);
        match &c.cache {
            Some(z) => Ok(DecisionVector { x, y, z: z.clone() }),
            None => scenario.complete(slot, x, y),
        }
    }
}

/// `r = E_prev - E_cur`.
pub fn reward(prev_energy: f64, cur_energy: f64) -> f64 {
    prev_energy - cur_energy
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SaqHyper {
    /// Learning rate of the update.
    pub gamma: f64,
    /// Discount factor.
    pub beta: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub episodes: usize,
    /// Keep the state at `2^{N_u} N_u^{N_f}` and choose the cache greedily.
    pub table2_strict: bool,
    pub max_cells: usize,
}

impl Default for SaqHyper {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            beta: 0.9,
            eps_start: 0.5,
            eps_end: 0.01,
            episodes: 500,
            table2_strict: true,
            max_cells: 50_000_000,
        }
    }
}

impl SaqHyper {
    /// Linear decay from `eps_start` at the first episode to `eps_end` at the last.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.eps_end;
        }
        let frac = episode as f64 / (self.episodes - 1) as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub visits: Vec<u32>,
    pub gamma: f64,
    pub beta: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, max_cells: usize) -> Result<Self> {
        let cells = n_states.checked_mul(n_actions).filter(|&c| c <= max_cells);
        let Some(cells) = cells else {
            return Err(Error::Size(format!(
                "Q-table of {n_states} states x {n_actions} actions exceeds {max_cells} cells"
            )));
        };
        Ok(Self { n_states, n_actions, values: vec![0.0; cells], visits: vec![0; cells], gamma: 0.1, beta: 0.9 })
    }

    pub fn for_space(space: &StateSpace, hyper: &SaqHyper) -> Result<Self> {
        let n1 = space.n_states().ok_or_else(|| Error::Size("state count overflows".into()))?;
        let mut q = Self::new(n1, space.n_actions(), hyper.max_cells)?;
        q.gamma = hyper.gamma;
        q.beta = hyper.beta;
        Ok(q)
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.n_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    /// Best action among `mask` (all if `None`); ties go to the lowest id.
    pub fn argmax(&self, s: StateId, mask: Option<&[bool]>) -> Option<ActionId> {
        let mut best: Option<(usize, f64)> = None;
        for (a, &v) in self.row(s).iter().enumerate() {
            if mask.is_some_and(|m| !m[a]) {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| ActionId(a))
    }

    pub fn max_value(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Q(s,a) <- (1-gamma) Q(s,a) + gamma [r + beta max_a' Q(s',a')]`.
    pub fn update(&mut self, s: StateId, a: ActionId, r: f64, s_next: StateId) {
        let target = r + self.beta * self.max_value(s_next);
        let idx = s.0 * self.n_actions + a.0;
        self.values[idx] = (1.0 - self.gamma) * self.values[idx] + self.gamma * target;
        self.visits[idx] = self.visits[idx].saturating_add(1);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(QTABLE_MAGIC)?;
        w.write_all(&(self.n_states as u64).to_le_bytes())?;
        w.write_all(&(self.n_actions as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != QTABLE_MAGIC {
            return Err(Error::Format("not a Q-table file".into()));
        }
        let mut dims = [0usize; 2];
        for d in &mut dims {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("dimension overflow".into()))?;
        }
        let mut q = Self::new(dims[0], dims[1], usize::MAX)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * q.values.len() {
            return Err(Error::Format(format!("expected {} value bytes, found {}", 8 * q.values.len(), bytes.len())));
        }
        for (v, chunk) in q.values.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            if !v.is_finite() {
                return Err(Error::Format("non-finite Q value".into()));
            }
        }
        Ok(q)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub const QTABLE_MAGIC: &[u8; 5] = b"QTBL1";

/// With probability `1 - eps` the best feasible action, otherwise a uniform feasible one.
pub fn select_action_eps_greedy<R: Rng + ?Sized>(
    q: &QTable,
    s: StateId,
    eps: f64,
    mask: Option<&[bool]>,
    rng: &mut R,
) -> ActionId {
    if eps > 0.0 && rng.random::<f64>() < eps {
        let feasible: Vec<usize> = (0..q.n_actions).filter(|&a| mask.is_none_or(|m| m[a])).collect();
        assert!(!feasible.is_empty(), "no feasible action");
        return ActionId(feasible[rng.random_range(0..feasible.len())]);
    }
    q.argmax(s, mask).expect("no feasible action")
}

/// Greedy action of every state.
pub fn extract_policy(q: &QTable) -> Vec<ActionId> {
    (0..q.n_states).map(|s| q.argmax(StateId(s), None).expect("nonempty action set")).collect()
}

#[derive(Debug, Clone)]
pub struct SaqOutcome {
    pub space: StateSpace,
    pub q: QTable,
    /// Mean energy per slot of every training episode.
    pub trace: Vec<f64>,
}

fn mask_for(space: &StateSpace, c: &Configuration) -> Result<Option<Vec<bool>>> {
    if space.table2_strict {
        Ok(None)
    } else {
        space.action_mask(c).map(Some)
    }
}

/// Q-learning over `hyper.episodes` passes through the scenario horizon.
pub fn train<R: Rng + ?Sized>(scenario: &Scenario, hyper: &SaqHyper, rng: &mut R) -> Result<SaqOutcome> {
    let space = StateSpace::new(&scenario.cfg, hyper.table2_strict, scenario.opts.eval.strict_c4)?;
    let mut q = QTable::for_space(&space, hyper)?;
    let mut trace = Vec::with_capacity(hyper.episodes);
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let horizon = scenario.horizon();
    for ep in 0..hyper.episodes {
        let eps = hyper.epsilon(ep);
        let mut conf = space.initial();
        let mut s = space.encode(&conf)?;
        let mut prev = energy_of(&space, &conf, s, scenario, 0, &mut cache)?;
        let mut acc = 0.0;
        for t in 0..horizon {
            let mask = mask_for(&space, &conf)?;
            let a = select_action_eps_greedy(&q, s, eps, mask.as_deref(), rng);
            let next = space.apply(&conf, a)?.expect("masked actions are feasible");
            let s_next = space.encode(&next)?;
            let e = energy_of(&space, &next, s_next, scenario, t, &mut cache)?;
            q.update(s, a, reward(prev, e), s_next);
            acc += e;
            prev = e;
            conf = next;
            s = s_next;
        }
        trace.push(acc / horizon as f64);
    }
    Ok(SaqOutcome { space, q, trace })
}

fn energy_of(
    space: &StateSpace,
    conf: &Configuration,
    s: StateId,
    scenario: &Scenario,
    slot: usize,
    cache: &mut HashMap<(usize, usize), f64>,
) -> Result<f64> {
    if let Some(&e) = cache.get(&(s.0, slot)) {
        return Ok(e);
    }
    let d = space.to_decision(conf, scenario, slot)?;
    let e = scenario.penalized_total(slot, &d)?;
    cache.insert((s.0, slot), e);
    Ok(e)
}

/// Follows the greedy policy from the initial state; returns per-slot energies
/// and the decisions taken.
pub fn greedy_rollout(space: &StateSpace, q: &QTable, scenario: &Scenario) -> Result<(Vec<f64>, Vec<DecisionVector>)> {
    let mut conf = space.initial();
    let mut energies = Vec::with_capacity(scenario.horizon());
    let mut decisions = Vec::with_capacity(scenario.horizon());
    for t in 0..scenario.horizon() {
        let s = space.encode(&conf)?;
        let mask = mask_for(space, &conf)?;
        let a = q.argmax(s, mask.as_deref()).expect("feasible action");
        conf = space.apply(&conf, a)?.expect("masked actions are feasible");
        let d = space.to_decision(&conf, scenario, t)?;
        energies.push(scenario.penalized_total(t, &d)?);
        decisions.push(d);
    }
    Ok((energies, decisions))
}
