//! Reverse-mode (BPTT) and forward-mode (RTRL) derivatives of the
//! sum-of-squares prediction loss.

use super::{forward_step, readout, tanh, LstmParams, LstmState};
use crate::{Error, Result};

/// Runs the sequence; `states[0]` is `init` and `states[t + 1]` follows `inputs[t]`.
pub fn forward_trace(params: &LstmParams, init: &LstmState, inputs: &[Vec<f64>]) -> Result<Vec<LstmState>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(init.clone());
    for x in inputs {
        let next = forward_step(params, states.last().expect("nonempty"), x)?;
        states.push(next);
    }
    Ok(states)
}

fn check_pairs(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::Dimension(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    Ok(())
}

/// Summed squared error of the raw readout over a sequence.
pub fn sequence_loss(params: &LstmParams, init: &LstmState, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_pairs(inputs, targets)?;
    let states = forward_trace(params, init, inputs)?;
    Ok(states[1..]
        .iter()
        .zip(targets)
        .map(|(s, t)| super::loss(&readout(params, &s.h), t))
        .sum())
}

/// Backpropagates per-step readout seeds `dy[t] = dL/dŷ_t` through a recorded trace.
pub fn bptt_backward(params: &LstmParams, states: &[LstmState], inputs: &[Vec<f64>], dy: &[Vec<f64>]) -> LstmParams {
    let hs = params.hidden_size;
    let cols = params.cols();
    let mut g = LstmParams::zeros(hs, params.input_size, params.output_size);
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];
    let mut da = [vec![0.0; hs], vec![0.0; hs], vec![0.0; hs], vec![0.0; hs]];
    for t in (0..inputs.len()).rev() {
        let (prev, cur) = (&states[t], &states[t + 1]);
        let mut dh = dh_next.clone();
        for (o, &e) in dy[t].iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            for k in 0..hs {
                g.w_out[o * hs + k] += e * cur.h[k];
                dh[k] += params.w_out[o * hs + k] * e;
            }
        }
        for k in 0..hs {
            let tc = tanh(cur.c[k]);
            let dc = dh[k] * cur.o[k] * (1.0 - tc * tc) + dc_next[k];
            da[0][k] = dc * prev.c[k] * cur.f[k] * (1.0 - cur.f[k]);
            da[1][k] = dc * cur.d[k] * cur.i[k] * (1.0 - cur.i[k]);
            da[2][k] = dc * cur.i[k] * (1.0 - cur.d[k] * cur.d[k]);
            da[3][k] = dh[k] * tc * cur.o[k] * (1.0 - cur.o[k]);
            dc_next[k] = dc * cur.f[k];
        }
        let z: Vec<f64> = prev.h.iter().chain(&inputs[t]).copied().collect();
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let weights = [&params.w_f, &params.w_i, &params.w_c, &params.w_o];
        for (gate, w) in weights.iter().enumerate() {
            for k in 0..hs {
                let a = da[gate][k];
                if a == 0.0 {
                    continue;
                }
                let row = k * cols;
                let gw = match gate {
                    0 => &mut g.w_f,
                    1 => &mut g.w_i,
                    2 => &mut g.w_c,
                    _ => &mut g.w_o,
                };
                for m in 0..cols {
                    gw[row + m] += a * z[m];
                }
                for j in 0..hs {
                    dh_next[j] += w[row + j] * a;
                }
            }
        }
        for k in 0..hs {
            g.b_f[k] += da[0][k];
            g.b_i[k] += da[1][k];
            g.b_c[k] += da[2][k];
            g.b_o[k] += da[3][k];
        }
    }
    g
}

/// Loss and its gradient with respect to every parameter.
pub fn bptt_gradients(
    params: &LstmParams,
    init: &LstmState,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, LstmParams)> {
    check_pairs(inputs, targets)?;
    let states = forward_trace(params, init, inputs)?;
    let mut total = 0.0;
    let dy: Vec<Vec<f64>> = states[1..]
        .iter()
        .zip(targets)
        .map(|(s, t)| {
            let y = readout(params, &s.h);
            total += super::loss(&y, t);
            y.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect()
        })
        .collect();
    Ok((total, bptt_backward(params, &states, inputs, &dy)))
}

/// Forward sensitivities of `h` and `C` with respect to every entry of `W_C`.
///
/// Row `p` of `s_h` (length `hidden`) holds `dh/dW_C[p]`, with `p` indexing
/// `W_C` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RtrlSensitivity {
    pub hidden: usize,
    pub s_h: Vec<f64>,
    pub s_c: Vec<f64>,
}

impl RtrlSensitivity {
    pub fn zeros(params: &LstmParams) -> Self {
        let n = params.w_c.len() * params.hidden_size;
        Self { hidden: params.hidden_size, s_h: vec![0.0; n], s_c: vec![0.0; n] }
    }

    /// `dh_k / dW_C[p]` for the latest step.
    pub fn dh(&self, p: usize, k: usize) -> f64 {
        self.s_h[p * self.hidden + k]
    }

    /// Carries the sensitivities through the step `prev -> next` driven by `x`.
    pub fn advance(&mut self, params: &LstmParams, prev: &LstmState, next: &LstmState, x: &[f64]) {
        let hs = params.hidden_size;
        let cols = params.cols();
        let z: Vec<f64> = prev.h.iter().chain(x).copied().collect();
        let tc: Vec<f64> = next.c.iter().map(|&c| tanh(c)).collect();
        let mut new_h = vec![0.0; self.s_h.len()];
        let mut new_c = vec![0.0; self.s_c.len()];
        for p in 0..params.w_c.len() {
            let (r, m) = (p / cols, p % cols);
            let sh = &self.s_h[p * hs..(p + 1) * hs];
            for k in 0..hs {
                let row = k * cols;
                let (mut af, mut ai, mut ac, mut ao) = (0.0, 0.0, 0.0, 0.0);
                for (j, &s) in sh.iter().enumerate() {
                    if s != 0.0 {
                        af += params.w_f[row + j] * s;
                        ai += params.w_i[row + j] * s;
                        ac += params.w_c[row + j] * s;
                        ao += params.w_o[row + j] * s;
                    }
                }
                if k == r {
                    ac += z[m];
                }
                let (f, i, d, o) = (next.f[k], next.i[k], next.d[k], next.o[k]);
                let df = f * (1.0 - f) * af;
                let di = i * (1.0 - i) * ai;
                let dd = (1.0 - d * d) * ac;
                let d_o = o * (1.0 - o) * ao;
                let sc = prev.c[k] * df + f * self.s_c[p * hs + k] + d * di + i * dd;
                new_c[p * hs + k] = sc;
                new_h[p * hs + k] = d_o * tc[k] + o * (1.0 - tc[k] * tc[k]) * sc;
            }
        }
        self.s_h = new_h;
        self.s_c = new_c;
    }

    /// `dL/dW_C` of the current step's loss given readout seed `dy = dL/dŷ`.
    pub fn candidate_gradient(&self, params: &LstmParams, dy: &[f64]) -> Vec<f64> {
        let hs = params.hidden_size;
        let dh: Vec<f64> = (0..hs)
            .map(|k| dy.iter().enumerate().map(|(o, e)| e * params.w_out[o * hs + k]).sum())
            .collect();
        (0..params.w_c.len())
            .map(|p| self.s_h[p * hs..(p + 1) * hs].iter().zip(&dh).map(|(s, g)| s * g).sum())
            .collect()
    }
}

/// Output-weight rule `w_out += 2 mu (x - x̂) h^T`. Returns the step loss.
pub fn rtrl_update_output(params: &mut LstmParams, state: &LstmState, target: &[f64], lr: f64) -> f64 {
    let hs = params.hidden_size;
    let y = readout(params, &state.h);
    for (o, (yo, to)) in y.iter().zip(target).enumerate() {
        let e = to - yo;
        for k in 0..hs {
            params.w_out[o * hs + k] += 2.0 * lr * e * state.h[k];
        }
    }
    super::loss(&y, target)
}

/// Candidate-weight rule `W_C += 2 mu (x - x̂) w_out dh/dW_C` using sensitivities
/// already advanced to the current step.
pub fn rtrl_update_candidate(params: &mut LstmParams, sens: &RtrlSensitivity, state: &LstmState, target: &[f64], lr: f64) {
    let y = readout(params, &state.h);
    let dy: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
    let g = sens.candidate_gradient(params, &dy);
    for (w, gi) in params.w_c.iter_mut().zip(g) {
        *w -= lr * gi;
    }
}

/// Total-loss gradient for `W_C` accumulated by forward sensitivities with
/// parameters held fixed.
pub fn rtrl_candidate_gradient(
    params: &LstmParams,
    init: &LstmState,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_pairs(inputs, targets)?;
    let mut sens = RtrlSensitivity::zeros(params);
    let mut grad = vec![0.0; params.w_c.len()];
    let mut state = init.clone();
    for (x, t) in inputs.iter().zip(targets) {
        let next = forward_step(params, &state, x)?;
        sens.advance(params, &state, &next, x);
        let y = readout(params, &next.h);
        let dy: Vec<f64> = y.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect();
        for (g, s) in grad.iter_mut().zip(sens.candidate_gradient(params, &dy)) {
            *g += s;
        }
        state = next;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{random_walk, LstmParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(hidden: usize, steps: usize, seed: u64) -> (LstmParams, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::random(hidden, 3, 3, &mut rng);
        for b in p.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= 5.0);
        }
        let s = random_walk(3, steps + 1, 0.1, &mut rng).unwrap();
        (p, s[..steps].to_vec(), s[1..].to_vec())
    }

    fn fd(p: &LstmParams, block: usize, idx: usize, x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        let h = 1e-6;
        let init = LstmState::zeros(p.hidden_size);
        let mut a = p.clone();
        a.blocks_mut()[block][idx] += h;
        let mut b = p.clone();
        b.blocks_mut()[block][idx] -= h;
        (sequence_loss(&a, &init, x, y).unwrap() - sequence_loss(&b, &init, x, y).unwrap()) / (2.0 * h)
    }

    #[test]
    fn output_rule_scalar() {
        let mut p = LstmParams::zeros(1, 1, 1);
        p.w_out = vec![0.5];
        let mut s = LstmState::zeros(1);
        s.h = vec![0.4];
        // x̂ = 0.2, target 0.7, e = 0.5, g = 0.4, mu = 0.1 -> dw = 2 * 0.1 * 0.5 * 0.4
        rtrl_update_output(&mut p, &s, &[0.7], 0.1);
        assert!((p.w_out[0] - (0.5 + 0.04)).abs() < 1e-15);
        let before = p.clone();
        let y = readout(&p, &s.h);
        rtrl_update_output(&mut p, &s, &y, 0.1);
        assert_eq!(p, before);
    }

    #[test]
    fn output_rule_follows_negative_gradient() {
        let (p, x, y) = instance(3, 1, 11);
        let init = LstmState::zeros(3);
        let s = forward_step(&p, &init, &x[0]).unwrap();
        let mut q = p.clone();
        let lr = 1e-3;
        rtrl_update_output(&mut q, &s, &y[0], lr);
        for idx in 0..p.w_out.len() {
            let step = q.w_out[idx] - p.w_out[idx];
            let g = fd(&p, crate::lstm::block::W_OUT, idx, &x, &y);
            assert!((step + lr * g).abs() <= 1e-4 * (lr * g).abs().max(1e-12), "entry {idx}");
        }
    }

    #[test]
    fn one_step_candidate_sensitivity() {
        let (p, x, _) = instance(1, 1, 2);
        let init = LstmState::zeros(1);
        let s = forward_step(&p, &init, &x[0]).unwrap();
        let mut sens = RtrlSensitivity::zeros(&p);
        sens.advance(&p, &init, &s, &x[0]);
        // h_prev = 0 and C_prev = 0: dC/dw = i * (1 - d^2) * z[m], dh/dw = o (1 - tanh^2 C) dC/dw
        let z = [0.0, x[0][0], x[0][1], x[0][2]];
        for m in 0..4 {
            let dc = s.i[0] * (1.0 - s.d[0] * s.d[0]) * z[m];
            let dh = s.o[0] * (1.0 - s.c[0].tanh().powi(2)) * dc;
            assert!((sens.dh(m, 0) - dh).abs() < 1e-15);
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let (p, x, y) = instance(3, 4, 7);
        let (_, g) = bptt_gradients(&p, &LstmState::zeros(3), &x, &y).unwrap();
        for block in 0..9 {
            for idx in 0..g.blocks()[block].len() {
                let num = fd(&p, block, idx, &x, &y);
                let ana = g.blocks()[block][idx];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-7);
                assert!(rel <= 1e-4, "block {block} idx {idx}: {ana} vs {num}");
            }
        }
    }

    #[test]
    fn rtrl_matches_finite_differences() {
        let (p, x, y) = instance(2, 5, 13);
        let g = rtrl_candidate_gradient(&p, &LstmState::zeros(2), &x, &y).unwrap();
        for (idx, ana) in g.iter().enumerate() {
            let num = fd(&p, crate::lstm::block::W_C, idx, &x, &y);
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-7);
            assert!(rel <= 1e-3, "idx {idx}: {ana} vs {num}");
        }
    }

    #[test]
    fn rtrl_agrees_with_bptt_per_step_on_scalar_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = LstmParams::random(1, 1, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|t| vec![0.3 * (t as f64).sin()]).collect();
        let init = LstmState::zeros(1);
        let states = forward_trace(&p, &init, &xs).unwrap();
        let mut sens = RtrlSensitivity::zeros(&p);
        for t in 0..xs.len() {
            sens.advance(&p, &states[t], &states[t + 1], &xs[t]);
            // seed dh_t by a unit readout at step t only (w_out is 1x1)
            let mut q = p.clone();
            q.w_out = vec![1.0];
            let dy: Vec<Vec<f64>> = (0..=t).map(|s| vec![if s == t { 1.0 } else { 0.0 }]).collect();
            let g = bptt_backward(&q, &states[..=t + 1], &xs[..=t], &dy);
            for pidx in 0..p.w_c.len() {
                assert!((g.w_c[pidx] - sens.dh(pidx, 0)).abs() < 1e-8, "step {t} entry {pidx}");
            }
        }
    }

    #[test]
    fn zero_error_leaves_candidate_weights() {
        let (mut p, x, _) = instance(2, 1, 3);
        let init = LstmState::zeros(2);
        let s = forward_step(&p, &init, &x[0]).unwrap();
        let mut sens = RtrlSensitivity::zeros(&p);
        sens.advance(&p, &init, &s, &x[0]);
        let y = readout(&p, &s.h);
        let before = p.w_c.clone();
        rtrl_update_candidate(&mut p, &sens, &s, &y, 0.5);
        assert_eq!(p.w_c, before);
        assert!(sens.s_h.iter().any(|v| *v != 0.0));
    }
}
