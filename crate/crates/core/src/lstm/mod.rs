//! LSTM task-popularity predictor with a linear readout.
//!
//! Gates follow the usual layout: every gate matrix has shape
//! `hidden x (hidden + input)` and multiplies the concatenation `[h_prev, x]`.
//! Matrices are stored row-major in flat vectors.

mod grad;
mod io;
mod series;
mod train;

use rand::Rng;

use crate::energy::PopularityMatrix;
use crate::{Error, Result};

pub use grad::{
    bptt_backward, bptt_gradients, forward_trace, rtrl_candidate_gradient, rtrl_update_candidate, rtrl_update_output,
    sequence_loss, RtrlSensitivity,
};
pub use io::{read_loss_curve, write_loss_curve, LOSS_CURVE_HEADER, WEIGHTS_MAGIC};
pub use series::{random_walk, random_walk_series, simplex_project, SeriesDataset, WALK_FLOOR};
pub use train::{train, LossCurve, Optimizer, RtrlSchedule, TrainHyper, TrainMode};

/// Pre-activations are clamped to this magnitude before `exp`/`tanh`.
pub const ACTIVATION_CLAMP: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP)).exp())
}

pub fn tanh(x: f64) -> f64 {
    x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP).tanh()
}

/// Weights and biases of one LSTM layer plus its output regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub output_size: usize,
    pub w_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    /// `output x hidden` readout.
    pub w_out: Vec<f64>,
}

/// Index of each parameter block in [`LstmParams::blocks`].
pub mod block {
    pub const W_F: usize = 0;
    pub const W_I: usize = 1;
    pub const W_C: usize = 2;
    pub const W_O: usize = 3;
    pub const B_F: usize = 4;
    pub const B_I: usize = 5;
    pub const B_C: usize = 6;
    pub const B_O: usize = 7;
    pub const W_OUT: usize = 8;
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize, output_size: usize) -> Self {
        let gate = vec![0.0; hidden_size * (hidden_size + input_size)];
        let bias = vec![0.0; hidden_size];
        Self {
            hidden_size,
            input_size,
            output_size,
            w_f: gate.clone(),
            w_i: gate.clone(),
            w_c: gate.clone(),
            w_o: gate,
            b_f: bias.clone(),
            b_i: bias.clone(),
            b_c: bias.clone(),
            b_o: bias,
            w_out: vec![0.0; output_size * hidden_size],
        }
    }

    /// Every entry drawn uniformly from `[-0.1, 0.1]`.
    pub fn random<R: Rng + ?Sized>(hidden_size: usize, input_size: usize, output_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden_size, input_size, output_size);
        for b in p.blocks_mut() {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.1..=0.1);
            }
        }
        p
    }

    pub fn cols(&self) -> usize {
        self.hidden_size + self.input_size
    }

    pub fn blocks(&self) -> [&Vec<f64>; 9] {
        [&self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o, &self.w_out]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
            &mut self.w_out,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn check(&self) -> Result<()> {
        let g = self.hidden_size * self.cols();
        let want = [g, g, g, g, self.hidden_size, self.hidden_size, self.hidden_size, self.hidden_size, self.output_size * self.hidden_size];
        for (k, (b, w)) in self.blocks().iter().zip(want).enumerate() {
            if b.len() != w {
                return Err(Error::Dimension(format!("parameter block {k} has {} entries, expected {w}", b.len())));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameter block {k} has a non-finite entry")));
            }
        }
        Ok(())
    }
}

/// Memory cell, hidden output and the gate activations of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub d: Vec<f64>,
    pub o: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        let z = vec![0.0; hidden_size];
        Self { c: z.clone(), h: z.clone(), f: z.clone(), i: z.clone(), d: z.clone(), o: z }
    }
}

fn affine(w: &[f64], b: &[f64], z: &[f64], row: usize) -> f64 {
    let cols = z.len();
    b[row] + w[row * cols..(row + 1) * cols].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
}

/// One recurrent step on input `x`.
pub fn forward_step(params: &LstmParams, state: &LstmState, x: &[f64]) -> Result<LstmState> {
    let h = params.hidden_size;
    if x.len() != params.input_size || state.c.len() != h || state.h.len() != h {
        return Err(Error::Dimension(format!(
            "input {} / state {} do not match input {} / hidden {h}",
            x.len(),
            state.c.len(),
            params.input_size
        )));
    }
    let z: Vec<f64> = state.h.iter().chain(x).copied().collect();
    let mut next = LstmState::zeros(h);
    for k in 0..h {
        let f = sigmoid(affine(&params.w_f, &params.b_f, &z, k));
        let i = sigmoid(affine(&params.w_i, &params.b_i, &z, k));
        let d = tanh(affine(&params.w_c, &params.b_c, &z, k));
        let o = sigmoid(affine(&params.w_o, &params.b_o, &z, k));
        let c = f * state.c[k] + i * d;
        next.f[k] = f;
        next.i[k] = i;
        next.d[k] = d;
        next.o[k] = o;
        next.c[k] = c;
        next.h[k] = o * tanh(c);
    }
    Ok(next)
}

/// Readout before and after projection onto the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub raw: Vec<f64>,
    pub projected: Vec<f64>,
}

pub fn readout(params: &LstmParams, h: &[f64]) -> Vec<f64> {
    let hs = params.hidden_size;
    (0..params.output_size)
        .map(|o| params.w_out[o * hs..(o + 1) * hs].iter().zip(h).map(|(w, v)| w * v).sum())
        .collect()
}

pub fn predict(params: &LstmParams, state: &LstmState) -> Prediction {
    let raw = readout(params, &state.h);
    let projected = simplex_project(&raw);
    Prediction { raw, projected }
}

/// Sum of squared errors.
pub fn loss(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum()
}

/// Warms up on the whole series, then rolls forward closed-loop for `horizon`
/// slots, feeding each projected prediction back as the next input.
pub fn predict_horizon(params: &LstmParams, dataset: &SeriesDataset, horizon: usize) -> Result<Vec<Vec<f64>>> {
    let mut state = LstmState::zeros(params.hidden_size);
    for x in &dataset.series {
        state = forward_step(params, &state, x)?;
    }
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if t > 0 {
            let x: &Vec<f64> = out.last().expect("previous prediction");
            state = forward_step(params, &state, &x.clone())?;
        }
        out.push(predict(params, &state).projected);
    }
    Ok(out)
}

/// Shares each predicted task distribution across `n_users` identical rows.
pub fn to_popularity(predictions: &[Vec<f64>], n_users: usize, first_slot: usize) -> Result<Vec<PopularityMatrix>> {
    predictions
        .iter()
        .enumerate()
        .map(|(t, p)| PopularityMatrix::shared(p, n_users, first_slot + t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_step() {
        let p = LstmParams::zeros(3, 2, 2);
        let s = forward_step(&p, &LstmState::zeros(3), &[0.4, 0.6]).unwrap();
        assert_eq!(s.f, vec![0.5; 3]);
        assert_eq!(s.i, vec![0.5; 3]);
        assert_eq!(s.o, vec![0.5; 3]);
        assert_eq!(s.d, vec![0.0; 3]);
        assert_eq!(s.c, vec![0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
        let pr = predict(&p, &s);
        assert_eq!(pr.raw, vec![0.0, 0.0]);
        assert_eq!(pr.projected, vec![0.5, 0.5]);
    }

    #[test]
    fn saturated_forget_keeps_cell() {
        let mut p = LstmParams::zeros(2, 1, 1);
        p.b_f = vec![20.0; 2];
        let mut s = LstmState::zeros(2);
        s.c = vec![0.7, -0.3];
        let n = forward_step(&p, &s, &[0.5]).unwrap();
        assert!((n.c[0] - 0.7).abs() < 1e-8);
        assert!((n.c[1] + 0.3).abs() < 1e-8);
    }

    #[test]
    fn scalar_recomputation() {
        let p = LstmParams::random(1, 1, 1, &mut ChaCha8Rng::seed_from_u64(3));
        let mut s = LstmState::zeros(1);
        s.c = vec![0.2];
        s.h = vec![-0.1];
        let x = 0.3;
        let n = forward_step(&p, &s, &[x]).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = sig(p.w_f[0] * -0.1 + p.w_f[1] * x + p.b_f[0]);
        let i = sig(p.w_i[0] * -0.1 + p.w_i[1] * x + p.b_i[0]);
        let d = (p.w_c[0] * -0.1 + p.w_c[1] * x + p.b_c[0]).tanh();
        let o = sig(p.w_o[0] * -0.1 + p.w_o[1] * x + p.b_o[0]);
        let c = f * 0.2 + i * d;
        assert!((n.c[0] - c).abs() < 1e-12);
        assert!((n.h[0] - o * c.tanh()).abs() < 1e-12);
    }

    #[test]
    fn identity_readout() {
        let mut p = LstmParams::zeros(2, 2, 2);
        p.w_out = vec![1.0, 0.0, 0.0, 1.0];
        let mut s = LstmState::zeros(2);
        s.h = vec![0.3, 0.1];
        assert_eq!(predict(&p, &s).raw, vec![0.3, 0.1]);
    }

    #[test]
    fn loss_cases() {
        assert_eq!(loss(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert!((loss(&[0.6, 0.4], &[0.5, 0.5]) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(2, 3, 3);
        assert!(matches!(forward_step(&p, &LstmState::zeros(2), &[0.0; 2]), Err(Error::Dimension(_))));
        let mut bad = p.clone();
        bad.b_o.pop();
        assert!(bad.check().is_err());
        assert!(p.check().is_ok());
    }

    #[test]
    fn horizon_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::random(4, 3, 3, &mut rng);
        let d = SeriesDataset::with_default_split(random_walk(3, 20, 0.05, &mut rng).unwrap()).unwrap();
        assert!(predict_horizon(&p, &d, 0).unwrap().is_empty());
        let out = predict_horizon(&p, &d, 6).unwrap();
        assert_eq!(out.len(), 6);
        for v in &out {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut s = LstmState::zeros(4);
        for x in &d.series {
            s = forward_step(&p, &s, x).unwrap();
        }
        assert_eq!(predict_horizon(&p, &d, 1).unwrap()[0], predict(&p, &s).projected);
        let pm = to_popularity(&out, 3, 20).unwrap();
        assert_eq!(pm[0].probs[2], out[0]);
        assert_eq!(pm[5].slot, 25);
    }

    proptest::proptest! {
        #[test]
        fn gate_ranges(seed in 0u64..1000, x0 in -5.0f64..5.0, x1 in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = LstmParams::random(3, 2, 2, &mut rng);
            for v in p.w_c.iter_mut() { *v *= 50.0; }
            let mut s = LstmState::zeros(3);
            for _ in 0..4 {
                s = forward_step(&p, &s, &[x0, x1]).unwrap();
                for k in 0..3 {
                    proptest::prop_assert!(s.f[k] > 0.0 && s.f[k] < 1.0);
                    proptest::prop_assert!(s.i[k] > 0.0 && s.i[k] < 1.0);
                    proptest::prop_assert!(s.o[k] > 0.0 && s.o[k] < 1.0);
                    proptest::prop_assert!(s.d[k].abs() <= 1.0);
                    proptest::prop_assert!(s.c[k].tanh().abs() < 1.0);
                }
            }
        }
    }
}
