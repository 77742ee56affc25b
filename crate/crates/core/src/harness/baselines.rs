use rand::Rng;

use crate::energy::EnergyBreakdown;
use crate::env::{equal_split_shares, Scenario};
use crate::saq::{greedy_rollout, train, SaqHyper, SaqOutcome};
use crate::sysmodel::{DecisionVector, Placement};
use crate::Result;

/// Per-slot breakdowns of a fixed policy, with infeasible slots also charged
/// the scenario penalty.
#[derive(Debug, Clone)]
pub struct BaselineTrace {
    pub slots: Vec<EnergyBreakdown>,
    pub penalized: Vec<f64>,
}

impl BaselineTrace {
    fn collect(scenario: &Scenario, decide: impl Fn(usize) -> DecisionVector) -> Result<Self> {
        let mut slots = Vec::with_capacity(scenario.horizon());
        let mut penalized = Vec::with_capacity(scenario.horizon());
        for t in 0..scenario.horizon() {
            let b = scenario.evaluate(t, &decide(t))?;
            penalized.push(b.penalized(scenario.penalty(t)));
            slots.push(b);
        }
        Ok(Self { slots, penalized })
    }

    pub fn infeasible_slots(&self) -> usize {
        self.slots.iter().filter(|b| !b.feasible).count()
    }
}

/// Every user computes locally and nothing is cached.
pub fn baseline_full_local(scenario: &Scenario) -> Result<BaselineTrace> {
    let cfg = &scenario.cfg;
    BaselineTrace::collect(scenario, |_| DecisionVector::all_local(cfg.n_users, cfg.n_tasks))
}

/// Every user offloads with equal shares and nothing is cached.
pub fn baseline_full_offload(scenario: &Scenario) -> Result<BaselineTrace> {
    let cfg = &scenario.cfg;
    BaselineTrace::collect(scenario, |t| {
        let x = vec![Placement::Offload; cfg.n_users];
        let y = equal_split_shares(&x, &scenario.channels[t].gains, cfg.n_freq_slices);
        DecisionVector { x, y, z: vec![false; cfg.n_tasks] }
    })
}

/// The same scenario without a cache.
pub fn without_cache(scenario: &Scenario) -> Result<Scenario> {
    let mut cfg = scenario.cfg.clone();
    cfg.c_cache_slots = 0;
    let mut opts = scenario.opts.clone();
    opts.eval.cache_capacity_bits = None;
    let mut sc = Scenario::from_parts(
        cfg,
        opts,
        scenario.tasks.clone(),
        scenario.topology.clone(),
        scenario.popularity.clone(),
        scenario.channels.clone(),
    )?;
    if let Some(p) = &scenario.predicted {
        sc.set_predicted(p.clone())?;
    }
    Ok(sc)
}

/// Q-learning allocation on the cacheless scenario; returns the greedy
/// per-slot energies and the trained learner.
pub fn baseline_conventional_mec<R: Rng + ?Sized>(
    scenario: &Scenario,
    hyper: &SaqHyper,
    rng: &mut R,
) -> Result<(Vec<f64>, SaqOutcome)> {
    let sc = without_cache(scenario)?;
    let out = train(&sc, hyper, rng)?;
    let (energies, _) = greedy_rollout(&out.space, &out.q, &sc)?;
    Ok((energies, out))
}
