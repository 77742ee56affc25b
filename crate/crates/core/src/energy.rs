//! Local and MEC computing cost, the expected per-user energy objective,
//! constraint checking, and an exhaustive optimum for small instances.

use std::io::Write;
use std::path::Path;

use crate::noma::{build_uplink_set, offload_energy, offload_time};
use crate::sysmodel::{ChannelState, DecisionVector, Placement, SystemConfig, TaskSpec, GRID_TOL};
use crate::{Constraint, Error, Result};

/// Per-user request probabilities over tasks for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityMatrix {
    /// `probs[i][j]` is the probability that user `i` requests task `j`.
    pub probs: Vec<Vec<f64>>,
    pub slot: usize,
}

/// Row-sum tolerance for popularity vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

impl PopularityMatrix {
    pub fn new(probs: Vec<Vec<f64>>, slot: usize) -> Result<Self> {
        for (i, row) in probs.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Domain(format!("row {i} has an entry outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Domain(format!("row {i} sums to {s}, not 1")));
            }
        }
        if probs.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::Dimension("ragged popularity rows".into()));
        }
        Ok(Self { probs, slot })
    }

    /// Every user shares the same task distribution.
    pub fn shared(row: &[f64], n_users: usize, slot: usize) -> Result<Self> {
        Self::new(vec![row.to_vec(); n_users], slot)
    }

    pub fn uniform(n_users: usize, n_tasks: usize, slot: usize) -> Self {
        Self { probs: vec![vec![1.0 / n_tasks as f64; n_tasks]; n_users], slot }
    }

    pub fn n_users(&self) -> usize {
        self.probs.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    /// Column sums: aggregate demand for each task.
    pub fn task_demand(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_tasks()];
        for row in &self.probs {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }
}

/// How the MEC term of the per-user objective is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum FormulaMode {
    /// MEC energy weighted by `(1 - x_i)`: charged only for offloaded tasks.
    #[default]
    Consistent,
    /// MEC energy weighted by `(1 - y_i)` exactly as the objective is printed.
    /// A zero share contributes no MEC term for users computing locally.
    AsPrinted,
}

/// Evaluation switches shared by every consumer of the energy model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalOptions {
    pub formula: FormulaMode,
    /// Require the shares to sum to one over all users, not just offloaders.
    pub strict_c4: bool,
    /// Also require local computing time to meet the latency limit.
    pub strict_local_latency: bool,
    /// Infeasible decisions cost this multiple of the all-local energy.
    pub penalty_factor: f64,
    /// Optional cache capacity in result bits, replacing the slot-count form of C5.
    pub cache_capacity_bits: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            formula: FormulaMode::Consistent,
            strict_c4: false,
            strict_local_latency: true,
            penalty_factor: 10.0,
            cache_capacity_bits: None,
        }
    }
}

pub fn local_time(task: &TaskSpec, local_cpu_hz: f64) -> Result<f64> {
    if !(local_cpu_hz > 0.0) {
        return Err(Error::Domain(format!("local CPU frequency must be > 0, got {local_cpu_hz}")));
    }
    Ok(task.cycles / local_cpu_hz)
}

pub fn local_energy(task: &TaskSpec, local_cpu_hz: f64, p_local_w: f64) -> Result<f64> {
    if p_local_w < 0.0 {
        return Err(Error::Domain(format!("local power must be >= 0, got {p_local_w}")));
    }
    Ok(p_local_w * local_time(task, local_cpu_hz)?)
}

/// MEC computing time `omega_j / (y_i C_MEC)`. A zero share cannot serve a task.
pub fn mec_time(task: &TaskSpec, y_frac: f64, c_mec_hz: f64) -> Result<f64> {
    if !(c_mec_hz > 0.0) {
        return Err(Error::Domain(format!("MEC capacity must be > 0, got {c_mec_hz}")));
    }
    if y_frac > 1.0 + GRID_TOL || y_frac.is_nan() {
        return Err(Error::Domain(format!("share must be in (0,1], got {y_frac}")));
    }
    if y_frac <= 0.0 {
        return Err(Error::Infeasible(vec![Constraint::C6]));
    }
    Ok(task.cycles / (y_frac * c_mec_hz))
}

pub fn mec_energy(task: &TaskSpec, y_frac: f64, cfg: &SystemConfig) -> Result<f64> {
    Ok(cfg.p_mec_w * mec_time(task, y_frac, cfg.c_mec_hz)?)
}

/// Completion-time check `T_offload + T_mec <= T` (inclusive).
pub fn check_latency(t_offload: f64, t_mec: f64, cfg: &SystemConfig) -> bool {
    t_offload + t_mec <= cfg.latency_limit_s
}

/// Joule split of one user's expected energy.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct EnergyComponents {
    pub local: f64,
    pub offload: f64,
    pub mec: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.local + self.offload + self.mec
    }
}

/// Expected energy of one slot's decision, per user and in total.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EnergyBreakdown {
    pub per_user: Vec<f64>,
    pub total: f64,
    pub components: Vec<EnergyComponents>,
    pub feasible: bool,
    pub violations: Vec<Constraint>,
}

impl EnergyBreakdown {
    /// Total energy, or `penalty` when the decision is infeasible.
    pub fn penalized(&self, penalty: f64) -> f64 {
        if self.feasible {
            self.total
        } else {
            penalty
        }
    }
}

/// One CSV row of an energy breakdown.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyRow {
    pub slot: usize,
    pub user: usize,
    #[serde(rename = "local_J")]
    pub local_j: f64,
    #[serde(rename = "offload_J")]
    pub offload_j: f64,
    #[serde(rename = "mec_J")]
    pub mec_j: f64,
    #[serde(rename = "total_J")]
    pub total_j: f64,
    pub feasible: bool,
}

impl EnergyBreakdown {
    pub fn rows(&self, slot: usize) -> Vec<EnergyRow> {
        self.components
            .iter()
            .enumerate()
            .map(|(user, c)| EnergyRow {
                slot,
                user,
                local_j: c.local,
                offload_j: c.offload,
                mec_j: c.mec,
                total_j: self.per_user[user],
                feasible: self.feasible,
            })
            .collect()
    }
}

pub fn write_energy_csv<'a, W: Write>(
    out: W,
    slots: impl IntoIterator<Item = (usize, &'a EnergyBreakdown)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (slot, b) in slots {
        for row in b.rows(slot) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_energy_csv_file<'a>(
    path: impl AsRef<Path>,
    slots: impl IntoIterator<Item = (usize, &'a EnergyBreakdown)>,
) -> Result<()> {
    write_energy_csv(std::fs::File::create(path)?, slots)
}

fn check_inputs(
    decision: &DecisionVector,
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
) -> Result<()> {
    decision.check_dims(cfg)?;
    if pop.n_users() != cfg.n_users || pop.n_tasks() != cfg.n_tasks {
        return Err(Error::Dimension(format!(
            "popularity is {}x{}, expected {}x{}",
            pop.n_users(),
            pop.n_tasks(),
            cfg.n_users,
            cfg.n_tasks
        )));
    }
    if chan.gains.len() != cfg.n_users || tasks.len() != cfg.n_tasks {
        return Err(Error::Dimension("channel or task list length mismatch".into()));
    }
    Ok(())
}

/// Per user and task, the bracketed cost `[x E_loc + (1-x) E_off + c E_mec]`
/// before popularity and caching are applied, split into components.
struct TaskCosts {
    costs: Vec<Vec<EnergyComponents>>,
    violations: Vec<Constraint>,
}

fn task_costs(
    decision: &DecisionVector,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<TaskCosts> {
    let uplink = build_uplink_set(decision, chan, cfg);
    let rates = uplink.rates(cfg);
    let mut rate_of = vec![f64::NAN; cfg.n_users];
    for (k, &m) in uplink.members.iter().enumerate() {
        rate_of[m] = rates[k];
    }
    let mut latency_ok = true;
    let mut costs = Vec::with_capacity(cfg.n_users);
    for i in 0..cfg.n_users {
        let placement = decision.x[i];
        let y = decision.y[i];
        let mec_coef = match opts.formula {
            FormulaMode::Consistent => 1.0 - placement.x(),
            FormulaMode::AsPrinted => 1.0 - y,
        };
        let mut row = Vec::with_capacity(tasks.len());
        for (j, task) in tasks.iter().enumerate() {
            let cached = decision.z[j];
            let mut c = EnergyComponents::default();
            match placement {
                Placement::Local => {
                    c.local = local_energy(task, cfg.local_cpu_hz, cfg.p_local_w)?;
                    if opts.strict_local_latency && !cached {
                        latency_ok &= local_time(task, cfg.local_cpu_hz)? <= cfg.latency_limit_s;
                    }
                }
                Placement::Offload => {
                    c.offload = offload_energy(task, rate_of[i], cfg.user_tx_power_w)?;
                    if !cached {
                        let t_mec = if y > 0.0 { mec_time(task, y, cfg.c_mec_hz)? } else { f64::INFINITY };
                        latency_ok &= check_latency(offload_time(task, rate_of[i])?, t_mec, cfg);
                    }
                }
            }
            if mec_coef > 0.0 {
                c.mec = if y > 0.0 {
                    mec_coef * mec_energy(task, y, cfg)?
                } else if placement.is_offload() {
                    f64::INFINITY
                } else {
                    0.0
                };
            }
            row.push(c);
        }
        costs.push(row);
    }
    let cap = opts.cache_capacity_bits.map(|c| (c, tasks));
    let mut violations = decision.structural_violations(cfg, opts.strict_c4, cap);
    if !latency_ok {
        violations.push(Constraint::C6);
    }
    Ok(TaskCosts { costs, violations })
}

/// Expected energy of every user and their sum, with feasibility of C1-C6.
pub fn total_energy(
    decision: &DecisionVector,
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<EnergyBreakdown> {
    check_inputs(decision, pop, chan, tasks, cfg)?;
    let TaskCosts { costs, violations } = task_costs(decision, chan, tasks, cfg, opts)?;
    let mut components = Vec::with_capacity(cfg.n_users);
    for (i, row) in costs.iter().enumerate() {
        let mut acc = EnergyComponents::default();
        for (j, c) in row.iter().enumerate() {
            if decision.z[j] {
                continue;
            }
            let w = pop.probs[i][j];
            if w == 0.0 {
                continue;
            }
            acc.local += w * c.local;
            acc.offload += w * c.offload;
            acc.mec += w * c.mec;
        }
        components.push(acc);
    }
    let per_user: Vec<f64> = components.iter().map(EnergyComponents::total).collect();
    let total = per_user.iter().sum();
    Ok(EnergyBreakdown { per_user, total, components, feasible: violations.is_empty(), violations })
}

/// One user's expected energy; infeasible decisions are an error.
pub fn expected_user_energy(
    user: usize,
    decision: &DecisionVector,
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<f64> {
    if user >= cfg.n_users {
        return Err(Error::Dimension(format!("user {user} out of range")));
    }
    let b = total_energy(decision, pop, chan, tasks, cfg, opts)?;
    if !b.feasible {
        return Err(Error::Infeasible(b.violations));
    }
    Ok(b.per_user[user])
}

/// Energy of the all-local decision with an empty cache; the basis of the penalty.
pub fn all_local_energy(
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<EnergyBreakdown> {
    let d = DecisionVector::all_local(cfg.n_users, cfg.n_tasks);
    total_energy(&d, pop, chan, tasks, cfg, opts)
}

/// Expected energy each task would cost this slot if left uncached.
pub fn task_expected_costs(
    decision: &DecisionVector,
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<Vec<f64>> {
    let TaskCosts { costs, .. } = task_costs(decision, chan, tasks, cfg, opts)?;
    Ok((0..tasks.len())
        .map(|j| (0..cfg.n_users).map(|i| pop.probs[i][j] * costs[i][j].total()).sum())
        .collect())
}

/// Picks cache flags greedily by a per-task score, highest first (ties by index),
/// filling the slot count or the optional bit capacity.
pub fn greedy_cache(
    scores: &[f64],
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut z = vec![false; scores.len()];
    match opts.cache_capacity_bits {
        None => {
            for &j in order.iter().take(cfg.c_cache_slots) {
                z[j] = true;
            }
        }
        Some(cap) => {
            let mut used = 0.0;
            for &j in &order {
                if used + tasks[j].result_bits <= cap {
                    used += tasks[j].result_bits;
                    z[j] = true;
                }
            }
        }
    }
    z
}

/// Upper bound on candidates enumerated by [`brute_force_optimum`].
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Number of raw candidates the exhaustive search visits.
pub fn brute_force_size(cfg: &SystemConfig) -> u128 {
    let x = 1u128 << cfg.n_users.min(100);
    let y = (cfg.n_freq_slices as u128 + 1).saturating_pow(cfg.n_users as u32);
    let z: u128 = (0..=cfg.c_cache_slots).map(|k| binomial(cfg.n_tasks, k)).sum();
    x.saturating_mul(y).saturating_mul(z)
}

/// Advances base-`(max+1)` digits, last digit fastest. False once wrapped.
pub(crate) fn advance_odometer(digits: &mut [usize], max: usize) -> bool {
    for d in digits.iter_mut().rev() {
        if *d < max {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

/// Exhaustive minimiser of [`total_energy`] over feasible decisions with shares
/// on the `1/n_freq_slices` grid.
///
/// Candidates are visited in lexicographic order of `(x, slices, z)` with
/// `x_i` as 0/1 (1 = local); the first minimum found wins.
pub fn brute_force_optimum(
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    opts: &EvalOptions,
) -> Result<(DecisionVector, f64)> {
    let size = brute_force_size(cfg);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::Size(format!("{size} candidate decisions exceed {BRUTE_FORCE_LIMIT}")));
    }
    let (nu, nt, nf) = (cfg.n_users, cfg.n_tasks, cfg.n_freq_slices);
    let cache_sets: Vec<Vec<bool>> = (0u64..1 << nt)
        .map(|mask| {
            // most significant task first so that the order is lexicographic in z
            (0..nt).map(|j| mask >> (nt - 1 - j) & 1 == 1).collect::<Vec<bool>>()
        })
        .filter(|z| {
            let cached = z.iter().filter(|&&b| b).count();
            match opts.cache_capacity_bits {
                None => cached <= cfg.c_cache_slots,
                Some(cap) => {
                    tasks.iter().zip(z).filter(|(_, &b)| b).map(|(t, _)| t.result_bits).sum::<f64>() <= cap
                }
            }
        })
        .collect();

    let mut best: Option<(DecisionVector, f64)> = None;
    for xmask in 0u64..1 << nu {
        let x: Vec<Placement> = (0..nu)
            .map(|i| if xmask >> (nu - 1 - i) & 1 == 1 { Placement::Local } else { Placement::Offload })
            .collect();
        let mut slices = vec![0usize; nu];
        loop {
            let y: Vec<f64> = slices.iter().map(|&k| k as f64 / nf as f64).collect();
            let probe = DecisionVector { x: x.clone(), y, z: vec![false; nt] };
            if probe.structural_violations(cfg, opts.strict_c4, None).iter().all(|c| *c == Constraint::C5) {
                for z in &cache_sets {
                    let d = DecisionVector { z: z.clone(), ..probe.clone() };
                    let b = total_energy(&d, pop, chan, tasks, cfg, opts)?;
                    if b.feasible && best.as_ref().map_or(true, |(_, e)| b.total < *e) {
                        best = Some((d, b.total));
                    }
                }
            }
            if !advance_odometer(&mut slices, nf) {
                break;
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible(vec![Constraint::C6]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{generate_tasks, generate_topology, ChannelSampler};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(cycles: f64) -> TaskSpec {
        TaskSpec::new(1, 500.0, cycles, 50.0).unwrap()
    }

    #[test]
    fn local_cost() {
        let t = task(1e9);
        assert_eq!(local_time(&t, 1e9).unwrap(), 1.0);
        assert_eq!(local_time(&t, 2e9).unwrap(), 0.5);
        assert_eq!(local_energy(&t, 1e9, 0.5).unwrap(), 0.5);
        assert_eq!(local_energy(&t, 1e9, 0.0).unwrap(), 0.0);
        assert!(local_time(&t, 0.0).is_err());
        let e = local_energy(&t, 3e9, 0.7).unwrap();
        assert!((e / local_time(&t, 3e9).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mec_cost() {
        let t = task(1e9);
        assert!((mec_time(&t, 0.5, 10e9).unwrap() - 0.2).abs() < 1e-15);
        assert!((mec_time(&t, 0.25, 10e9).unwrap() - 0.4).abs() < 1e-15);
        assert!(mec_time(&t, 1.0, 10e9).unwrap() < mec_time(&t, 0.75, 10e9).unwrap());
        let cfg = SystemConfig::default();
        assert!((mec_energy(&t, 0.5, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(mec_time(&t, 0.0, 10e9), Err(Error::Infeasible(_))));
        assert!(mec_time(&t, 1.5, 10e9).is_err());
    }

    #[test]
    fn latency_boundary() {
        let cfg = SystemConfig { latency_limit_s: 0.5, ..Default::default() };
        assert!(check_latency(0.2, 0.3, &cfg));
        assert!(!check_latency(0.4, 0.2, &cfg));
        assert!(check_latency(0.0, 0.0, &cfg));
    }

    fn one_user_cfg() -> SystemConfig {
        SystemConfig { n_users: 1, n_tasks: 1, c_cache_slots: 1, ..Default::default() }
    }

    #[test]
    fn single_user_cases() {
        let cfg = one_user_cfg();
        let opts = EvalOptions::default();
        let t = vec![TaskSpec::new(1, 4e6, 4e9, 4e5).unwrap()];
        let pop = PopularityMatrix::uniform(1, 1, 0);
        let ch = ChannelState { gains: vec![1e-6], slot: 0 };
        let local = DecisionVector::all_local(1, 1);
        let e = expected_user_energy(0, &local, &pop, &ch, &t, &cfg, &opts).unwrap();
        assert!((e - local_energy(&t[0], 1e9, 0.5).unwrap()).abs() < 1e-12);

        let cached = DecisionVector { z: vec![true], ..local.clone() };
        assert_eq!(total_energy(&cached, &pop, &ch, &t, &cfg, &opts).unwrap().total, 0.0);

        let off = DecisionVector { x: vec![Placement::Offload], y: vec![1.0], z: vec![false] };
        let e = expected_user_energy(0, &off, &pop, &ch, &t, &cfg, &opts).unwrap();
        let set = build_uplink_set(&off, &ch, &cfg);
        let r = crate::noma::noma_rate(&set, 0, &cfg).unwrap();
        let want = offload_energy(&t[0], r, cfg.user_tx_power_w).unwrap() + mec_energy(&t[0], 1.0, &cfg).unwrap();
        assert!((e - want).abs() < 1e-12 * want);
    }

    #[test]
    fn printed_mode_charges_by_share() {
        let cfg = SystemConfig { n_users: 2, n_tasks: 1, c_cache_slots: 0, n_freq_slices: 2, ..Default::default() };
        let opts = EvalOptions { formula: FormulaMode::AsPrinted, strict_c4: true, ..Default::default() };
        let t = vec![TaskSpec::new(1, 4e6, 4e9, 4e5).unwrap()];
        let pop = PopularityMatrix::uniform(2, 1, 0);
        let ch = ChannelState { gains: vec![1e-6, 2e-6], slot: 0 };
        let d = DecisionVector { x: vec![Placement::Local, Placement::Offload], y: vec![0.5, 0.5], z: vec![false] };
        let b = total_energy(&d, &pop, &ch, &t, &cfg, &opts).unwrap();
        assert!(b.feasible);
        // local user still pays half of the MEC energy at share 0.5
        let mec = mec_energy(&t[0], 0.5, &cfg).unwrap();
        assert!((b.components[0].mec - 0.5 * mec).abs() < 1e-12);
        assert!((b.components[0].local - local_energy(&t[0], 1e9, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported_not_thrown() {
        let cfg = SystemConfig { n_users: 2, n_tasks: 2, c_cache_slots: 1, n_freq_slices: 2, ..Default::default() };
        let t = generate_tasks(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let pop = PopularityMatrix::uniform(2, 2, 0);
        let ch = ChannelState { gains: vec![1e-6, 2e-6], slot: 0 };
        let d = DecisionVector { x: vec![Placement::Offload; 2], y: vec![1.0, 0.0], z: vec![true, true] };
        let b = total_energy(&d, &pop, &ch, &t, &cfg, &EvalOptions::default()).unwrap();
        assert!(!b.feasible);
        assert!(b.violations.contains(&Constraint::C5));
        let d = DecisionVector { z: vec![false, false], ..d };
        let b = total_energy(&d, &pop, &ch, &t, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(b.violations, vec![Constraint::C6]);
        assert!(matches!(
            expected_user_energy(0, &d, &pop, &ch, &t, &cfg, &EvalOptions::default()),
            Err(Error::Infeasible(_))
        ));
        assert_eq!(b.penalized(123.0), 123.0);
    }

    #[test]
    fn local_latency_flag() {
        let cfg = SystemConfig { n_users: 1, n_tasks: 1, c_cache_slots: 0, latency_limit_s: 1.0, ..Default::default() };
        let t = vec![TaskSpec::new(1, 4e6, 4e9, 4e5).unwrap()];
        let pop = PopularityMatrix::uniform(1, 1, 0);
        let ch = ChannelState { gains: vec![1e-6], slot: 0 };
        let d = DecisionVector::all_local(1, 1);
        let strict = total_energy(&d, &pop, &ch, &t, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(strict.violations, vec![Constraint::C6]);
        let lax = EvalOptions { strict_local_latency: false, ..Default::default() };
        assert!(total_energy(&d, &pop, &ch, &t, &cfg, &lax).unwrap().feasible);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let cfg = one_user_cfg();
        let t = vec![TaskSpec::new(1, 4e6, 4e9, 4e5).unwrap()];
        let pop = PopularityMatrix::uniform(2, 1, 0);
        let ch = ChannelState { gains: vec![1e-6], slot: 0 };
        let d = DecisionVector::all_local(1, 1);
        assert!(matches!(
            total_energy(&d, &pop, &ch, &t, &cfg, &EvalOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn byte_weighted_cache() {
        let cfg = SystemConfig { n_users: 1, n_tasks: 3, c_cache_slots: 3, ..Default::default() };
        let tasks: Vec<TaskSpec> = (1..=3).map(|id| TaskSpec::new(id, 1000.0, 1e9, 100.0 * id as f64).unwrap()).collect();
        let opts = EvalOptions { cache_capacity_bits: Some(350.0), ..Default::default() };
        let z = greedy_cache(&[3.0, 2.0, 1.0], &tasks, &cfg, &opts);
        assert_eq!(z, vec![true, true, false]);
        let z = greedy_cache(&[1.0, 2.0, 3.0], &tasks, &cfg, &opts);
        assert_eq!(z, vec![false, false, true]);
        let slot_opts = EvalOptions::default();
        let z = greedy_cache(&[1.0, 3.0, 2.0], &tasks, &SystemConfig { c_cache_slots: 1, ..cfg }, &slot_opts);
        assert_eq!(z, vec![false, true, false]);
    }

    #[test]
    fn brute_force_single_user_caches() {
        let cfg = one_user_cfg();
        let t = vec![TaskSpec::new(1, 4e6, 4e9, 4e5).unwrap()];
        let pop = PopularityMatrix::uniform(1, 1, 0);
        let ch = ChannelState { gains: vec![1e-6], slot: 0 };
        let (d, e) = brute_force_optimum(&pop, &ch, &t, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(d.z, vec![true]);
        // lexicographic tie-break: x = 0 (offload) precedes x = 1, and with z = 1
        // every allocation costs nothing; the first feasible is offload with y = 1
        assert_eq!(d.x, vec![Placement::Offload]);
    }

    #[test]
    fn brute_force_prefers_local_when_mec_is_dearer() {
        let cfg = SystemConfig { n_users: 2, n_tasks: 2, c_cache_slots: 0, n_freq_slices: 2, ..Default::default() };
        let t = generate_tasks(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let topo = generate_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let ch = ChannelSampler::new(9).channel(&cfg, &topo, 0);
        let pop = PopularityMatrix::uniform(2, 2, 0);
        let opts = EvalOptions::default();
        // per-cycle MEC energy equals local at y = 1, so upload energy tips it local
        let (d, e) = brute_force_optimum(&pop, &ch, &t, &cfg, &opts).unwrap();
        assert_eq!(d.x, vec![Placement::Local; 2]);
        let all_local = all_local_energy(&pop, &ch, &t, &cfg, &opts).unwrap();
        assert!((e - all_local.total).abs() < 1e-12);
    }

    #[test]
    fn brute_force_guard() {
        let cfg = SystemConfig { n_users: 8, n_tasks: 10, c_cache_slots: 5, n_freq_slices: 8, ..Default::default() };
        let pop = PopularityMatrix::uniform(8, 10, 0);
        let ch = ChannelState { gains: vec![1e-6; 8], slot: 0 };
        let t = generate_tasks(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(
            brute_force_optimum(&pop, &ch, &t, &cfg, &EvalOptions::default()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn popularity_validation() {
        assert!(PopularityMatrix::new(vec![vec![0.5, 0.4]], 0).is_err());
        assert!(PopularityMatrix::new(vec![vec![1.5, -0.5]], 0).is_err());
        let p = PopularityMatrix::shared(&[0.25, 0.75], 3, 0).unwrap();
        assert_eq!(p.task_demand(), vec![0.75, 2.25]);
    }

    #[test]
    fn energy_csv_rows() {
        let b = EnergyBreakdown {
            per_user: vec![1.5],
            total: 1.5,
            components: vec![EnergyComponents { local: 1.0, offload: 0.25, mec: 0.25 }],
            feasible: true,
            violations: vec![],
        };
        let mut buf = Vec::new();
        write_energy_csv(&mut buf, [(7, &b)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "slot,user,local_J,offload_J,mec_J,total_J,feasible\n7,0,1.0,0.25,0.25,1.5,true\n");
    }
}
