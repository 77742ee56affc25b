//! A seeded simulation scenario: tasks, topology, and per-slot popularity and
//! channels over the horizon, with the evaluation helpers every learner uses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{
    all_local_energy, brute_force_optimum, greedy_cache, task_expected_costs, total_energy, EnergyBreakdown, EvalOptions,
    PopularityMatrix,
};
use crate::lstm::random_walk;
use crate::sysmodel::{generate_tasks, generate_topology, ChannelSampler, ChannelState, DecisionVector, Placement, SystemConfig, TaskSpec, Topology};
use crate::{Error, Result};

/// How cache flags are filled once placement and shares are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum CachePolicy {
    /// Highest expected energy saved given the placement and shares.
    #[default]
    ExpectedEnergy,
    /// Highest aggregate request probability.
    Popularity,
}

/// How the popularity series is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    pub step_scale: f64,
    /// One independent series per user instead of a shared one.
    pub per_user: bool,
}

impl Default for PopularityModel {
    fn default() -> Self {
        Self { step_scale: 0.05, per_user: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioOptions {
    pub eval: EvalOptions,
    pub cache_policy: CachePolicy,
    pub popularity: PopularityModel,
}

const STREAM_TASKS: u64 = 1;
const STREAM_TOPOLOGY: u64 = 2;
const STREAM_POPULARITY: u64 = 3;
const CHANNEL_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent generator for one purpose derived from a run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub opts: ScenarioOptions,
    pub tasks: Vec<TaskSpec>,
    pub topology: Topology,
    /// True request probabilities, one matrix per slot.
    pub popularity: Vec<PopularityMatrix>,
    /// Forecasts used for decisions when present; evaluation always uses the truth.
    pub predicted: Option<Vec<PopularityMatrix>>,
    pub channels: Vec<ChannelState>,
    baseline: Vec<EnergyBreakdown>,
}

impl Scenario {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        Self::with_options(cfg, ScenarioOptions::default())
    }

    pub fn with_options(cfg: SystemConfig, opts: ScenarioOptions) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.rng_seed;
        let tasks = generate_tasks(&cfg, &mut stream_rng(seed, STREAM_TASKS));
        let topology = generate_topology(&cfg, &mut stream_rng(seed, STREAM_TOPOLOGY));
        let horizon = cfg.horizon_slots;
        let mut prng = stream_rng(seed, STREAM_POPULARITY);
        let walk_len = horizon.max(2);
        let popularity: Vec<PopularityMatrix> = if opts.popularity.per_user {
            let series: Vec<Vec<Vec<f64>>> = (0..cfg.n_users)
                .map(|_| random_walk(cfg.n_tasks, walk_len, opts.popularity.step_scale, &mut prng))
                .collect::<Result<_>>()?;
            (0..horizon)
                .map(|t| PopularityMatrix::new(series.iter().map(|s| s[t].clone()).collect(), t))
                .collect::<Result<_>>()?
        } else {
            let series = random_walk(cfg.n_tasks, walk_len, opts.popularity.step_scale, &mut prng)?;
            (0..horizon).map(|t| PopularityMatrix::shared(&series[t], cfg.n_users, t)).collect::<Result<_>>()?
        };
        let sampler = ChannelSampler::new(seed ^ CHANNEL_SEED_SALT);
        let channels: Vec<ChannelState> = (0..horizon).map(|t| sampler.channel(&cfg, &topology, t)).collect();
        Self::from_parts(cfg, opts, tasks, topology, popularity, channels)
    }

    /// Assembles a scenario from explicit inputs.
    pub fn from_parts(
        cfg: SystemConfig,
        opts: ScenarioOptions,
        tasks: Vec<TaskSpec>,
        topology: Topology,
        popularity: Vec<PopularityMatrix>,
        channels: Vec<ChannelState>,
    ) -> Result<Self> {
        if popularity.len() != channels.len() || popularity.is_empty() {
            return Err(Error::Dimension(format!(
                "{} popularity slots but {} channel slots",
                popularity.len(),
                channels.len()
            )));
        }
        let baseline = popularity
            .iter()
            .zip(&channels)
            .map(|(p, c)| all_local_energy(p, c, &tasks, &cfg, &opts.eval))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, opts, tasks, topology, popularity, predicted: None, channels, baseline })
    }

    pub fn horizon(&self) -> usize {
        self.channels.len()
    }

    /// Replaces the forecasts used for decisions.
    pub fn set_predicted(&mut self, predicted: Vec<PopularityMatrix>) -> Result<()> {
        if predicted.len() != self.horizon() {
            return Err(Error::Dimension(format!("{} forecasts for {} slots", predicted.len(), self.horizon())));
        }
        self.predicted = Some(predicted);
        Ok(())
    }

    pub fn decision_popularity(&self, slot: usize) -> &PopularityMatrix {
        match &self.predicted {
            Some(p) => &p[slot],
            None => &self.popularity[slot],
        }
    }

    pub fn evaluate(&self, slot: usize, d: &DecisionVector) -> Result<EnergyBreakdown> {
        total_energy(d, &self.popularity[slot], &self.channels[slot], &self.tasks, &self.cfg, &self.opts.eval)
    }

    /// All-local energy with an empty cache.
    pub fn all_local(&self, slot: usize) -> &EnergyBreakdown {
        &self.baseline[slot]
    }

    pub fn penalty(&self, slot: usize) -> f64 {
        self.opts.eval.penalty_factor * self.baseline[slot].total
    }

    /// Total energy, with infeasible decisions charged the penalty.
    pub fn penalized_total(&self, slot: usize, d: &DecisionVector) -> Result<f64> {
        Ok(self.evaluate(slot, d)?.penalized(self.penalty(slot)))
    }

    /// Per-user energies; under infeasibility each user is charged the penalty
    /// factor times its own all-local energy.
    pub fn penalized_per_user(&self, slot: usize, d: &DecisionVector) -> Result<Vec<f64>> {
        let b = self.evaluate(slot, d)?;
        if b.feasible {
            return Ok(b.per_user);
        }
        let f = self.opts.eval.penalty_factor;
        Ok(self.baseline[slot].per_user.iter().map(|e| f * e).collect())
    }

    /// Cache flags for a placement and shares under the scenario's policy.
    pub fn choose_cache(&self, slot: usize, x: &[Placement], y: &[f64]) -> Result<Vec<bool>> {
        let pop = self.decision_popularity(slot);
        let scores = match self.opts.cache_policy {
            CachePolicy::Popularity => pop.task_demand(),
            CachePolicy::ExpectedEnergy => {
                let probe = DecisionVector { x: x.to_vec(), y: y.to_vec(), z: vec![false; self.cfg.n_tasks] };
                task_expected_costs(&probe, pop, &self.channels[slot], &self.tasks, &self.cfg, &self.opts.eval)?
            }
        };
        Ok(greedy_cache(&scores, &self.tasks, &self.cfg, &self.opts.eval))
    }

    /// Completes a placement and shares with the policy's cache flags.
    pub fn complete(&self, slot: usize, x: Vec<Placement>, y: Vec<f64>) -> Result<DecisionVector> {
        let z = self.choose_cache(slot, &x, &y)?;
        Ok(DecisionVector { x, y, z })
    }

    pub fn brute_force(&self, slot: usize) -> Result<(DecisionVector, f64)> {
        brute_force_optimum(&self.popularity[slot], &self.channels[slot], &self.tasks, &self.cfg, &self.opts.eval)
    }
}

/// Splits the `n_slices` grid equally among offloaders; leftover slices go one
/// each to the strongest channels (ties by index). Local users get zero.
pub fn equal_split_shares(x: &[Placement], gains: &[f64], n_slices: usize) -> Vec<f64> {
    let mut off: Vec<usize> = (0..x.len()).filter(|&i| x[i].is_offload()).collect();
    let mut y = vec![0.0; x.len()];
    if off.is_empty() {
        return y;
    }
    off.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let m = off.len();
    let (base, rem) = (n_slices / m, n_slices % m);
    for (rank, &i) in off.iter().enumerate() {
        let k = base + usize::from(rank < rem);
        y[i] = k as f64 / n_slices as f64;
    }
    y
}
