//! Domain types shared by every other module: configuration, tasks, topology,
//! channel realisations and the per-slot decision vector.

mod config;

pub use config::{dbm_to_watts, SystemConfig, BITS_PER_KB, CONFIG_KEYS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::{Constraint, Error, Result};

/// A computation task: input size, CPU cycles, and result size.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TaskSpec {
    /// 1-based task identity.
    pub id: usize,
    pub input_bits: f64,
    pub cycles: f64,
    pub result_bits: f64,
}

impl TaskSpec {
    pub fn new(id: usize, input_bits: f64, cycles: f64, result_bits: f64) -> Result<Self> {
        if id == 0 {
            return Err(Error::Domain("task ids are 1-based".into()));
        }
        for (name, v) in [("input_bits", input_bits), ("cycles", cycles), ("result_bits", result_bits)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("task {id}: {name} must be > 0, got {v}")));
            }
        }
        if result_bits > input_bits {
            return Err(Error::Domain(format!(
                "task {id}: result ({result_bits}) larger than input ({input_bits})"
            )));
        }
        Ok(Self { id, input_bits, cycles, result_bits })
    }
}

/// Draws `n_tasks` tasks: input size uniform in the configured range, cycles
/// equal to input size times a uniform cycles-per-bit factor.
pub fn generate_tasks<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<TaskSpec> {
    (1..=cfg.n_tasks)
        .map(|id| {
            let input = uniform(rng, cfg.task_input_min_bits, cfg.task_input_max_bits);
            let cpb = uniform(rng, cfg.cycles_per_bit_min, cfg.cycles_per_bit_max);
            TaskSpec::new(id, input, input * cpb, input * cfg.result_ratio)
                .expect("validated config yields valid tasks")
        })
        .collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// User and AP positions in metres.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Topology {
    pub user_positions: Vec<[f64; 2]>,
    pub ap_position: [f64; 2],
}

impl Topology {
    pub fn distance(&self, user: usize) -> f64 {
        let [x, y] = self.user_positions[user];
        let [ax, ay] = self.ap_position;
        ((x - ax).powi(2) + (y - ay).powi(2)).sqrt()
    }
}

/// Places users uniformly in the square; the AP sits at its centre.
pub fn generate_topology<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Topology {
    let side = cfg.area_side_m;
    let user_positions = (0..cfg.n_users)
        .map(|_| [rng.random_range(0.0..=side), rng.random_range(0.0..=side)])
        .collect();
    Topology { user_positions, ap_position: [side / 2.0, side / 2.0] }
}

/// Per-user channel power gains `|h_i(t)|^2` for one slot.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ChannelState {
    pub gains: Vec<f64>,
    pub slot: usize,
}

/// Minimum user-AP distance used by the path-loss model.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Path-loss times small-scale fading: `max(d, 1)^(-exponent) * fading`.
pub fn channel_gain(distance_m: f64, exponent: f64, fading: f64) -> f64 {
    distance_m.max(MIN_DISTANCE_M).powf(-exponent) * fading
}

/// Draws one slot of channel gains with unit-mean exponential (Rayleigh power) fading.
pub fn draw_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    topo: &Topology,
    slot: usize,
    rng: &mut R,
) -> ChannelState {
    let gains = (0..topo.user_positions.len())
        .map(|i| {
            let fading: f64 = Exp1.sample(rng);
            // exponential draws can be exactly zero in principle
            channel_gain(topo.distance(i), cfg.pathloss_exponent, fading.max(f64::MIN_POSITIVE))
        })
        .collect();
    ChannelState { gains, slot }
}

/// Channel source whose draw for a slot depends only on `(seed, slot)`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSampler {
    seed: u64,
}

impl ChannelSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn channel(&self, cfg: &SystemConfig, topo: &Topology, slot: usize) -> ChannelState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(slot as u64 + 1);
        draw_channel(cfg, topo, slot, &mut rng)
    }
}

/// Where a user's task is computed. `Local` corresponds to `x_i = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Placement {
    Local,
    Offload,
}

impl Placement {
    /// The numeric offloading flag `x_i` (1 = local).
    pub fn x(self) -> f64 {
        match self {
            Placement::Local => 1.0,
            Placement::Offload => 0.0,
        }
    }

    pub fn is_offload(self) -> bool {
        self == Placement::Offload
    }
}

/// One slot's joint decision: placement per user, MEC share per user, cache flag per task.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DecisionVector {
    pub x: Vec<Placement>,
    pub y: Vec<f64>,
    pub z: Vec<bool>,
}

/// Tolerance used when checking that shares lie on the slice grid and sum to one.
pub const GRID_TOL: f64 = 1e-9;

impl DecisionVector {
    /// Everyone computes locally, nothing is allocated or cached.
    pub fn all_local(n_users: usize, n_tasks: usize) -> Self {
        Self {
            x: vec![Placement::Local; n_users],
            y: vec![0.0; n_users],
            z: vec![false; n_tasks],
        }
    }

    pub fn n_offloading(&self) -> usize {
        self.x.iter().filter(|p| p.is_offload()).count()
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        if self.x.len() != cfg.n_users || self.y.len() != cfg.n_users || self.z.len() != cfg.n_tasks {
            return Err(Error::Dimension(format!(
                "decision has |x|={}, |y|={}, |z|={}; expected {} users and {} tasks",
                self.x.len(),
                self.y.len(),
                self.z.len(),
                cfg.n_users,
                cfg.n_tasks
            )));
        }
        Ok(())
    }

    /// Structural constraints C2, C4 and C5 (C1 and C3 hold by construction).
    ///
    /// With `strict_c4` the shares must sum to one over all users; otherwise they
    /// must sum to one over offloading users and be zero when nobody offloads.
    pub fn structural_violations(
        &self,
        cfg: &SystemConfig,
        strict_c4: bool,
        cache_capacity_bits: Option<(f64, &[TaskSpec])>,
    ) -> Vec<Constraint> {
        let mut out = Vec::new();
        let nf = cfg.n_freq_slices as f64;
        let off_grid = self.y.iter().any(|&y| {
            let k = y * nf;
            !(-GRID_TOL..=1.0 + GRID_TOL).contains(&y) || (k - k.round()).abs() > GRID_TOL * nf
        });
        if off_grid {
            out.push(Constraint::C2);
        }
        let c4_ok = if strict_c4 {
            (self.y.iter().sum::<f64>() - 1.0).abs() <= GRID_TOL
        } else {
            let off: f64 = self.x.iter().zip(&self.y).filter(|(p, _)| p.is_offload()).map(|(_, y)| y).sum();
            let local: f64 = self.x.iter().zip(&self.y).filter(|(p, _)| !p.is_offload()).map(|(_, y)| y).sum();
            let target = if self.n_offloading() > 0 { 1.0 } else { 0.0 };
            (off - target).abs() <= GRID_TOL && local.abs() <= GRID_TOL
        };
        if !c4_ok {
            out.push(Constraint::C4);
        }
        let cached = self.z.iter().filter(|&&z| z).count();
        let c5_ok = match cache_capacity_bits {
            None => cached <= cfg.c_cache_slots,
            Some((cap, tasks)) => {
                let used: f64 = tasks.iter().zip(&self.z).filter(|(_, &z)| z).map(|(t, _)| t.result_bits).sum();
                used <= cap
            }
        };
        if !c5_ok {
            out.push(Constraint::C5);
        }
        out
    }
}
