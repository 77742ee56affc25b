use std::io::Write;

use rand::Rng;

use super::{p_local, sample_and_select, update_arm, Action, BetaArmState, Outcome};
use crate::env::{equal_split_shares, Scenario};
use crate::sysmodel::Placement;
use crate::Result;

/// What the multi-agent loop needs from the world: per-user energies of a joint
/// placement in a slot.
pub trait OffloadEnvironment {
    fn n_agents(&self) -> usize;
    fn horizon(&self) -> usize;
    fn energies(&self, slot: usize, placement: &[Placement]) -> Result<Vec<f64>>;
    /// Typical per-user energy, used to place the state bins.
    fn reference_energy(&self) -> f64;
}

impl OffloadEnvironment for Scenario {
    fn n_agents(&self) -> usize {
        self.cfg.n_users
    }

    fn horizon(&self) -> usize {
        Scenario::horizon(self)
    }

    /// Shares split equally among offloaders, cache from the scenario policy,
    /// infeasible slots charged the penalty.
    fn energies(&self, slot: usize, placement: &[Placement]) -> Result<Vec<f64>> {
        let y = equal_split_shares(placement, &self.channels[slot].gains, self.cfg.n_freq_slices);
        let d = self.complete(slot, placement.to_vec(), y)?;
        self.penalized_per_user(slot, &d)
    }

    fn reference_energy(&self) -> f64 {
        let n = (Scenario::horizon(self) * self.cfg.n_users) as f64;
        (0..Scenario::horizon(self)).map(|t| self.all_local(t).total).sum::<f64>() / n
    }
}

/// Log-spaced bins over `[reference / span, reference * span]`; values outside
/// fall in the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBins {
    pub n_bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl EnergyBins {
    pub fn around(reference: f64, span: f64, n_bins: usize) -> Self {
        let r = if reference > 0.0 && reference.is_finite() { reference } else { 1.0 };
        Self { n_bins: n_bins.max(1), lo: r / span, hi: r * span }
    }

    pub fn bin(&self, energy: f64) -> usize {
        if !(energy > self.lo) {
            return 0;
        }
        if energy >= self.hi {
            return self.n_bins - 1;
        }
        let f = (energy / self.lo).ln() / (self.hi / self.lo).ln();
        ((f * self.n_bins as f64) as usize).min(self.n_bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaqHyper {
    pub episodes: usize,
    pub n_bins: usize,
    /// Bins cover `reference / span .. reference * span`.
    pub bin_span: f64,
    /// Reward iff the energy drop exceeds this.
    pub reward_threshold: f64,
    /// Judge every agent by the drop in total energy instead of its own.
    pub team_reward: bool,
}

impl Default for MaqHyper {
    fn default() -> Self {
        Self { episodes: 500, n_bins: 8, bin_span: 100.0, reward_threshold: 0.0, team_reward: false }
    }
}

/// One learning user: an arm pair per energy bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub user: usize,
    pub bin: usize,
    pub arms: Vec<BetaArmState>,
    pub last_action: Option<Action>,
}

impl AgentState {
    pub fn new(user: usize, n_bins: usize) -> Self {
        Self { user, bin: 0, arms: vec![BetaArmState::default(); n_bins], last_action: None }
    }

    /// Local iff the closed-form local probability of the bin is at least one half.
    pub fn greedy(&self, bin: usize) -> Result<Action> {
        Ok(if p_local(&self.arms[bin])? >= 0.5 { Action::Local } else { Action::Offload })
    }
}

#[derive(Debug, Clone)]
pub struct MaqOutcome {
    pub agents: Vec<AgentState>,
    pub bins: EnergyBins,
    /// Mean total energy per slot of every episode.
    pub trace: Vec<f64>,
    /// Arm selections plus arm updates performed.
    pub arm_operations: u64,
}

fn placement_of(actions: &[Action]) -> Vec<Placement> {
    actions
        .iter()
        .map(|a| if *a == Action::Local { Placement::Local } else { Placement::Offload })
        .collect()
}

/// Episodes of simultaneous BLA choices; each agent is rewarded iff its energy
/// dropped relative to the previous slot.
pub fn run_bla_maq<E: OffloadEnvironment, R: Rng + ?Sized>(env: &E, hyper: &MaqHyper, rng: &mut R) -> Result<MaqOutcome> {
    let n = env.n_agents();
    let bins = EnergyBins::around(env.reference_energy(), hyper.bin_span, hyper.n_bins);
    let mut agents: Vec<AgentState> = (0..n).map(|i| AgentState::new(i, hyper.n_bins)).collect();
    let mut trace = Vec::with_capacity(hyper.episodes);
    let mut ops = 0u64;
    for _ in 0..hyper.episodes {
        let mut prev: Option<Vec<f64>> = None;
        let mut acc = 0.0;
        for a in agents.iter_mut() {
            a.bin = bins.bin(env.reference_energy());
        }
        for t in 0..env.horizon() {
            let actions: Vec<Action> = agents.iter().map(|a| sample_and_select(&a.arms[a.bin], rng)).collect();
            ops += n as u64;
            let e = env.energies(t, &placement_of(&actions))?;
            let total: f64 = e.iter().sum();
            acc += total;
            if let Some(p) = &prev {
                let prev_total: f64 = p.iter().sum();
                for (i, a) in agents.iter_mut().enumerate() {
                    let drop = if hyper.team_reward { prev_total - total } else { p[i] - e[i] };
                    let outcome = if drop > hyper.reward_threshold { Outcome::Reward } else { Outcome::Penalty };
                    a.arms[a.bin] = update_arm(&a.arms[a.bin], actions[i], outcome);
                }
                ops += n as u64;
            }
            for (i, a) in agents.iter_mut().enumerate() {
                a.last_action = Some(actions[i]);
                a.bin = bins.bin(e[i]);
            }
            prev = Some(e);
        }
        trace.push(acc / env.horizon() as f64);
    }
    Ok(MaqOutcome { agents, bins, trace, arm_operations: ops })
}

/// Per-slot total energy when every agent plays its greedy action.
pub fn maq_rollout<E: OffloadEnvironment>(env: &E, outcome: &MaqOutcome) -> Result<Vec<f64>> {
    let mut bins: Vec<usize> = vec![outcome.bins.bin(env.reference_energy()); env.n_agents()];
    let mut out = Vec::with_capacity(env.horizon());
    for t in 0..env.horizon() {
        let actions: Vec<Action> =
            outcome.agents.iter().zip(&bins).map(|(a, &b)| a.greedy(b)).collect::<Result<_>>()?;
        let e = env.energies(t, &placement_of(&actions))?;
        out.push(e.iter().sum());
        bins = e.iter().map(|&v| outcome.bins.bin(v)).collect();
    }
    Ok(out)
}

/// Rows `(agent, state_bin, a1, b1, a2, b2)`.
pub fn write_arms_csv<W: Write>(out: W, agents: &[AgentState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "state_bin", "a1", "b1", "a2", "b2"])?;
    for a in agents {
        for (bin, s) in a.arms.iter().enumerate() {
            w.write_record([a.user, bin, s.a1 as usize, s.b1 as usize, s.a2 as usize, s.b2 as usize].map(|v| v.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
