//! Reference evaluators written directly from the model formulas, sharing no
//! code with the library beyond its data types.

#![allow(dead_code)]

use nomamec_core::sysmodel::{ChannelState, DecisionVector, Placement, SystemConfig, TaskSpec};
use nomamec_core::{EvalOptions, FormulaMode, PopularityMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

/// Per-user expected energy and whether every latency limit holds.
pub struct Reference {
    pub per_user: Vec<f64>,
    pub latency_ok: bool,
}

pub fn reference_energy(
    d: &DecisionVector,
    pop: &PopularityMatrix,
    chan: &ChannelState,
    tasks: &[TaskSpec],
    cfg: &SystemConfig,
    mode: FormulaMode,
) -> Reference {
    let n = cfg.n_users;
    let offloading: Vec<usize> = (0..n).filter(|&i| d.x[i] == Placement::Offload).collect();
    // decoded strongest first; a user hears everyone decoded after it
    let mut rate = vec![0.0; n];
    for &i in &offloading {
        let later = |k: usize| chan.gains[k] < chan.gains[i] || (chan.gains[k] == chan.gains[i] && k > i);
        let interference: f64 =
            offloading.iter().filter(|&&k| k != i && later(k)).map(|&k| cfg.user_tx_power_w * chan.gains[k]).sum();
        let sinr = cfg.user_tx_power_w * chan.gains[i] / (interference + cfg.noise_power_w);
        rate[i] = cfg.bandwidth_hz * (1.0 + sinr).log2();
    }
    let mut latency_ok = true;
    let mut per_user = vec![0.0; n];
    for i in 0..n {
        let local = d.x[i] == Placement::Local;
        let xi = if local { 1.0 } else { 0.0 };
        let yi = d.y[i];
        for (j, task) in tasks.iter().enumerate() {
            let e_loc = cfg.p_local_w * task.cycles / cfg.local_cpu_hz;
            let e_off = if local { 0.0 } else { cfg.user_tx_power_w * task.input_bits / rate[i] };
            let e_mec = if yi > 0.0 { cfg.p_mec_w * task.cycles / (yi * cfg.c_mec_hz) } else { 0.0 };
            let coef = match mode {
                FormulaMode::Consistent => 1.0 - xi,
                FormulaMode::AsPrinted => 1.0 - yi,
            };
            let cached = d.z[j];
            if !cached {
                if local {
                    latency_ok &= task.cycles / cfg.local_cpu_hz <= cfg.latency_limit_s;
                } else {
                    latency_ok &= task.input_bits / rate[i] + task.cycles / (yi * cfg.c_mec_hz) <= cfg.latency_limit_s;
                }
            }
            let z = if cached { 1.0 } else { 0.0 };
            per_user[i] += pop.probs[i][j] * (1.0 - z) * (xi * e_loc + (1.0 - xi) * e_off + coef * e_mec);
        }
    }
    Reference { per_user, latency_ok }
}

/// A random small instance with a structurally valid decision.
pub struct Instance {
    pub cfg: SystemConfig,
    pub tasks: Vec<TaskSpec>,
    pub pop: PopularityMatrix,
    pub chan: ChannelState,
    pub decision: DecisionVector,
    pub opts: EvalOptions,
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let n_users = rng.random_range(1..=4);
    let n_tasks = rng.random_range(1..=5);
    let n_freq_slices = rng.random_range(n_users..=6);
    let cfg = SystemConfig {
        n_users,
        n_tasks,
        n_freq_slices,
        c_cache_slots: rng.random_range(0..=n_tasks),
        c_mec_hz: 10f64.powf(rng.random_range(9.5..11.5)),
        local_cpu_hz: 10f64.powf(rng.random_range(8.5..9.5)),
        p_local_w: rng.random_range(0.1..2.0),
        p_mec_w: rng.random_range(1.0..10.0),
        user_tx_power_w: rng.random_range(0.01..0.5),
        latency_limit_s: rng.random_range(1.0..20.0),
        ..SystemConfig::default()
    };
    let tasks: Vec<TaskSpec> = (0..n_tasks)
        .map(|j| {
            let bits = rng.random_range(1e5..8e6);
            TaskSpec::new(j + 1, bits, bits * rng.random_range(500.0..2000.0), 0.1 * bits).unwrap()
        })
        .collect();
    let probs: Vec<Vec<f64>> = (0..n_users)
        .map(|_| {
            let w: Vec<f64> = (0..n_tasks).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    let pop = PopularityMatrix::new(probs, 0).unwrap();
    let gains: Vec<f64> = (0..n_users).map(|_| 10f64.powf(rng.random_range(-13.0..-7.0))).collect();
    let chan = ChannelState { gains, slot: 0 };
    let x: Vec<Placement> =
        (0..n_users).map(|_| if rng.random_bool(0.5) { Placement::Local } else { Placement::Offload }).collect();
    // every offloader gets at least one slice; the rest are spread at random
    let off: Vec<usize> = (0..n_users).filter(|&i| x[i].is_offload()).collect();
    let mut slices = vec![0usize; n_users];
    if !off.is_empty() {
        for &i in &off {
            slices[i] = 1;
        }
        for _ in off.len()..n_freq_slices {
            slices[off[rng.random_range(0..off.len())]] += 1;
        }
    }
    let y: Vec<f64> = slices.iter().map(|&k| k as f64 / n_freq_slices as f64).collect();
    let mut z = vec![false; n_tasks];
    let mut order: Vec<usize> = (0..n_tasks).collect();
    for k in 0..n_tasks {
        let r = rng.random_range(k..n_tasks);
        order.swap(k, r);
    }
    let n_cached = rng.random_range(0..=cfg.c_cache_slots);
    for &j in &order[..n_cached] {
        z[j] = true;
    }
    let formula = if rng.random_bool(0.5) { FormulaMode::Consistent } else { FormulaMode::AsPrinted };
    let opts = EvalOptions { formula, ..EvalOptions::default() };
    Instance { cfg, tasks, pop, chan, decision: DecisionVector { x, y, z }, opts }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn factorials(n: usize) -> Vec<BigInt> {
    let mut f = vec![BigInt::one()];
    for k in 1..=n {
        let next = &f[k - 1] * BigInt::from(k);
        f.push(next);
    }
    f
}

/// Exact rational arithmetic for Beta-arm probabilities with integer parameters.
pub struct ExactBeta {
    fact: Vec<BigInt>,
}

impl ExactBeta {
    pub fn new(max: usize) -> Self {
        Self { fact: factorials(max) }
    }

    fn f(&self, n: u64) -> &BigInt {
        &self.fact[n as usize]
    }

    /// `P(X1 > X2)` for `X1 ~ Beta(a1, b1)`, `X2 ~ Beta(a2, b2)`, from
    /// `sum_{i<a1} B(a2+i, b1+b2) / ((b1+i) B(1+i, b1) B(a2, b2))` with every
    /// Beta function an exact factorial ratio.
    pub fn superiority(&self, a1: u64, b1: u64, a2: u64, b2: u64) -> BigRational {
        let mut sum = BigRational::zero();
        for i in 0..a1 {
            let num = self.f(a2 + i - 1) * self.f(b1 + b2 - 1) * self.f(i + b1 - 1) * self.f(a2 + b2 - 1);
            let den = self.f(a2 + i + b1 + b2 - 1) * self.f(i) * self.f(b1 - 1) * self.f(a2 - 1) * self.f(b2 - 1);
            sum += BigRational::new(num, den);
        }
        sum
    }

    /// `P(X > k/q)` for `X ~ Beta(a, b)`: the binomial lower tail
    /// `sum_{m<a} C(n, m) x^m (1-x)^(n-m)` with `n = a + b - 1`.
    pub fn above_threshold(&self, a: u64, b: u64, k: u64, q: u64) -> BigRational {
        let n = a + b - 1;
        let mut num = BigInt::zero();
        for m in 0..a {
            let choose = self.f(n) / (self.f(m) * self.f(n - m));
            num += choose * BigInt::from(k).pow(m as u32) * BigInt::from(q - k).pow((n - m) as u32);
        }
        BigRational::new(num, BigInt::from(q).pow(n as u32))
    }
}
