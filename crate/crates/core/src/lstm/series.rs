use rand::Rng;
use rand_distr::StandardNormal;

use crate::sysmodel::SystemConfig;
use crate::{Error, Result};

/// Floor applied to every component before renormalising a random-walk step.
pub const WALK_FLOOR: f64 = 1e-4;

/// A popularity time series with a train/test boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    pub series: Vec<Vec<f64>>,
    /// Slots `[0, split)` are training data.
    pub split: usize,
}

impl SeriesDataset {
    pub fn new(series: Vec<Vec<f64>>, split: usize) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::Precondition("series needs at least two slots".into()));
        }
        if split < 2 || split > series.len() {
            return Err(Error::Precondition(format!("split {split} invalid for length {}", series.len())));
        }
        let n = series[0].len();
        for (t, p) in series.iter().enumerate() {
            if p.len() != n {
                return Err(Error::Dimension(format!("slot {t} has {} entries, expected {n}", p.len())));
            }
            let s: f64 = p.iter().sum();
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("slot {t} is not a probability vector")));
            }
        }
        Ok(Self { series, split })
    }

    /// Splits with the first 80% of slots for training.
    pub fn with_default_split(series: Vec<Vec<f64>>) -> Result<Self> {
        let split = ((series.len() as f64 * 0.8).round() as usize).clamp(2, series.len());
        Self::new(series, split)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn n_tasks(&self) -> usize {
        self.series[0].len()
    }

    /// One-step-ahead pairs `(x_t, x_{t+1})` inside the training split.
    pub fn train_pairs(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.series[..self.split - 1], &self.series[1..self.split])
    }

    /// Pairs whose target lies in the test split.
    pub fn test_pairs(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.series[self.split - 1..self.len() - 1], &self.series[self.split..])
    }
}

/// Clamp at zero and renormalise; an all-zero vector maps to uniform.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    let s: f64 = clamped.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return vec![1.0 / v.len() as f64; v.len()];
    }
    clamped.iter().map(|x| x / s).collect()
}

/// Gaussian random walk on the simplex starting from the uniform vector.
pub fn random_walk<R: Rng + ?Sized>(n_tasks: usize, length: usize, step_scale: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if length < 2 {
        return Err(Error::Precondition(format!("length must be >= 2, got {length}")));
    }
    if !(step_scale > 0.0 && step_scale <= 0.5) {
        return Err(Error::Precondition(format!("step scale must be in (0, 0.5], got {step_scale}")));
    }
    let mut p = vec![1.0 / n_tasks as f64; n_tasks];
    let mut out = Vec::with_capacity(length);
    out.push(p.clone());
    for _ in 1..length {
        let stepped: Vec<f64> = p
            .iter()
            .map(|&v| {
                let g: f64 = rng.sample(StandardNormal);
                (v + step_scale * g).max(WALK_FLOOR)
            })
            .collect();
        let s: f64 = stepped.iter().sum();
        p = stepped.iter().map(|v| v / s).collect();
        out.push(p.clone());
    }
    Ok(out)
}

pub fn random_walk_series<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    length: usize,
    step_scale: f64,
    rng: &mut R,
) -> Result<SeriesDataset> {
    SeriesDataset::with_default_split(random_walk(cfg.n_tasks, length, step_scale, rng)?)
}
