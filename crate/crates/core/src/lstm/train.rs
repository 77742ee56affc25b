use rand::Rng;

use super::grad::{bptt_gradients, rtrl_update_candidate, rtrl_update_output, sequence_loss, RtrlSensitivity};
use super::{block, forward_step, LstmParams, LstmState, SeriesDataset};
use crate::{Error, Result};

/// Which rule trains which weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    /// Full-sequence BPTT for every parameter.
    Bptt,
    /// Online RTRL for `w_out` and `W_C` only; other weights stay at initialisation.
    Rtrl,
    /// RTRL for `w_out` and `W_C`, BPTT for the rest.
    #[default]
    Hybrid,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bptt" => Ok(Self::Bptt),
            "rtrl" => Ok(Self::Rtrl),
            "hybrid" => Ok(Self::Hybrid),
            _ => Err(Error::Config(format!("unknown training mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

/// Step size of the online rules at slot `t` (1-based within an epoch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtrlSchedule {
    /// `1 / t`, restarting every epoch.
    InverseSlot,
    /// `1 / t` over a counter that runs across epochs.
    InverseGlobal,
    Constant(f64),
}

impl Default for RtrlSchedule {
    fn default() -> Self {
        Self::InverseSlot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub hidden_size: usize,
    pub epochs: usize,
    /// Constant step for the BPTT updates.
    pub learning_rate: f64,
    pub mode: TrainMode,
    pub optimizer: Optimizer,
    pub rtrl_schedule: RtrlSchedule,
    /// Global-norm clip on BPTT gradients.
    pub clip_norm: Option<f64>,
    /// Stop once the training loss falls to this value.
    pub goal: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            epochs: 500,
            learning_rate: 0.01,
            mode: TrainMode::Hybrid,
            optimizer: Optimizer::Sgd,
            rtrl_schedule: RtrlSchedule::InverseSlot,
            clip_norm: Some(10.0),
            goal: None,
        }
    }
}

/// Per-epoch losses summed over slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &LstmParams) -> Self {
        let m: Vec<Vec<f64>> = p.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

fn bptt_blocks(mode: TrainMode) -> &'static [usize] {
    const ALL: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    const GATES: [usize; 7] = [block::W_F, block::W_I, block::W_O, block::B_F, block::B_I, block::B_C, block::B_O];
    match mode {
        TrainMode::Bptt => &ALL,
        TrainMode::Hybrid => &GATES,
        TrainMode::Rtrl => &[],
    }
}

fn apply_gradient(params: &mut LstmParams, grad: &LstmParams, blocks: &[usize], hyper: &TrainHyper, adam: &mut Adam) {
    let mut scale = 1.0;
    if let Some(c) = hyper.clip_norm {
        let norm = blocks.iter().flat_map(|&b| grad.blocks()[b].iter()).map(|g| g * g).sum::<f64>().sqrt();
        if norm > c {
            scale = c / norm;
        }
    }
    adam.t += 1;
    let lr = hyper.learning_rate;
    let (bc1, bc2) = (1.0 - Adam::B1.powi(adam.t), 1.0 - Adam::B2.powi(adam.t));
    let gblocks = grad.blocks();
    let pblocks = params.blocks_mut();
    for &b in blocks {
        for (idx, w) in pblocks[b].iter_mut().enumerate() {
            let g = scale * gblocks[b][idx];
            match hyper.optimizer {
                Optimizer::Sgd => *w -= lr * g,
                Optimizer::Adam => {
                    let m = &mut adam.m[b][idx];
                    let v = &mut adam.v[b][idx];
                    *m = Adam::B1 * *m + (1.0 - Adam::B1) * g;
                    *v = Adam::B2 * *v + (1.0 - Adam::B2) * g * g;
                    *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + Adam::EPS);
                }
            }
        }
    }
}

/// Test loss after warming the state through the training inputs.
fn test_loss(params: &LstmParams, data: &SeriesDataset) -> Result<f64> {
    let (tx, _) = data.train_pairs();
    let mut state = LstmState::zeros(params.hidden_size);
    for x in tx {
        state = forward_step(params, &state, x)?;
    }
    let (x, y) = data.test_pairs();
    sequence_loss(params, &state, x, y)
}

/// Trains on the training split and records train and test loss every epoch.
pub fn train<R: Rng + ?Sized>(data: &SeriesDataset, hyper: &TrainHyper, rng: &mut R) -> Result<(LstmParams, LossCurve)> {
    if hyper.hidden_size == 0 || hyper.epochs == 0 {
        return Err(Error::Precondition("hidden size and epochs must be positive".into()));
    }
    let n = data.n_tasks();
    let mut params = LstmParams::random(hyper.hidden_size, n, n, rng);
    let mut adam = Adam::new(&params);
    let mut curve = LossCurve::default();
    let (xs, ys) = data.train_pairs();
    let init = LstmState::zeros(hyper.hidden_size);
    let mut global_t = 0usize;
    for epoch in 1..=hyper.epochs {
        let blocks = bptt_blocks(hyper.mode);
        if !blocks.is_empty() {
            let (_, g) = bptt_gradients(&params, &init, xs, ys)?;
            apply_gradient(&mut params, &g, blocks, hyper, &mut adam);
        }
        if hyper.mode != TrainMode::Bptt {
            let mut sens = RtrlSensitivity::zeros(&params);
            let mut state = init.clone();
            for (t, (x, y)) in xs.iter().zip(ys).enumerate() {
                global_t += 1;
                let mu = match hyper.rtrl_schedule {
                    RtrlSchedule::InverseSlot => 1.0 / (t + 1) as f64,
                    RtrlSchedule::InverseGlobal => 1.0 / global_t as f64,
                    RtrlSchedule::Constant(c) => c,
                };
                let next = forward_step(&params, &state, x)?;
                sens.advance(&params, &state, &next, x);
                rtrl_update_candidate(&mut params, &sens, &next, y, mu);
                rtrl_update_output(&mut params, &next, y, mu);
                state = next;
            }
        }
        let tr = sequence_loss(&params, &init, xs, ys)?;
        let te = test_loss(&params, data)?;
        if !tr.is_finite() || !te.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.train.push(tr);
        curve.test.push(te);
        if hyper.goal.is_some_and(|g| tr <= g) {
            break;
        }
    }
    Ok((params, curve))
}
