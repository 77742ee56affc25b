//! Bayesian learning automata for the two-action local/offload choice and the
//! multi-agent learning loop built on them.
//!
//! Arm 1 is local computing, arm 2 is offloading. Each arm keeps a Beta
//! posterior over its reward probability; an action is chosen by sampling both
//! posteriors and taking the larger draw.

mod beta;
mod maq;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::{Error, Result};
use beta::{ln_beta_int, ln_factorial, log_sum_exp, LogAcc};

pub use beta::{beta_cdf, beta_cdf_integer_sum, beta_pdf};
pub use maq::{
    maq_rollout, run_bla_maq, write_arms_csv, AgentState, EnergyBins, MaqHyper, MaqOutcome, OffloadEnvironment,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Action {
    Local,
    Offload,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Local => "local",
            Action::Offload => "offload",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Outcome {
    Reward,
    Penalty,
}

/// Beta posteriors `(a1, b1)` for local and `(a2, b2)` for offload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct BetaArmState {
    pub a1: u64,
    pub b1: u64,
    pub a2: u64,
    pub b2: u64,
}

impl Default for BetaArmState {
    fn default() -> Self {
        Self { a1: 1, b1: 1, a2: 1, b2: 1 }
    }
}

/// Largest parameter sum accepted by the closed forms.
pub const MAX_PARAMETER_SUM: u64 = 1_000_000;

impl BetaArmState {
    pub fn new(a1: u64, b1: u64, a2: u64, b2: u64) -> Result<Self> {
        let s = Self { a1, b1, a2, b2 };
        s.check()?;
        Ok(s)
    }

    pub fn total(&self) -> u64 {
        self.a1 + self.b1 + self.a2 + self.b2
    }

    fn check(&self) -> Result<()> {
        if [self.a1, self.b1, self.a2, self.b2].contains(&0) {
            return Err(Error::Domain(format!("arm parameters must be >= 1: {self:?}")));
        }
        if self.total() > MAX_PARAMETER_SUM {
            return Err(Error::Size(format!("parameter sum {} exceeds {MAX_PARAMETER_SUM}", self.total())));
        }
        Ok(())
    }

    /// Posterior mean of arm 1.
    pub fn mean_local(&self) -> f64 {
        self.a1 as f64 / (self.a1 + self.b1) as f64
    }
}

fn beta_sample<R: Rng + ?Sized>(a: u64, b: u64, rng: &mut R) -> f64 {
    let g = |s: u64, rng: &mut R| Gamma::new(s as f64, 1.0).expect("positive shape").sample(rng);
    let x = g(a, rng);
    let y = g(b, rng);
    x / (x + y)
}

/// Draws `X1 ~ Beta(a1,b1)` and `X2 ~ Beta(a2,b2)`; local iff `X1 > X2`.
pub fn sample_and_select<R: Rng + ?Sized>(arm: &BetaArmState, rng: &mut R) -> Action {
    let x1 = beta_sample(arm.a1, arm.b1, rng);
    let x2 = beta_sample(arm.a2, arm.b2, rng);
    if x1 > x2 {
        Action::Local
    } else {
        Action::Offload
    }
}

/// A reward raises the taken arm's `a`, a penalty its `b`.
pub fn update_arm(arm: &BetaArmState, action: Action, outcome: Outcome) -> BetaArmState {
    let mut n = *arm;
    match (action, outcome) {
        (Action::Local, Outcome::Reward) => n.a1 += 1,
        (Action::Local, Outcome::Penalty) => n.b1 += 1,
        (Action::Offload, Outcome::Reward) => n.a2 += 1,
        (Action::Offload, Outcome::Penalty) => n.b2 += 1,
    }
    n
}

/// `P(X1 > X2)` by the factorial sum over `j = a2 .. a2+b2-1`, in log space.
pub fn p_arm1_closed_form(arm: &BetaArmState) -> Result<f64> {
    arm.check()?;
    let BetaArmState { a1, b1, a2, b2 } = *arm;
    let s = a2 + b2;
    let logs: Vec<f64> = (a2..s).map(|j| closed_form_term(j, a1, b1, s)).collect();
    Ok((closed_form_prefactor(a1, b1, s) + log_sum_exp(&logs)).exp().clamp(0.0, 1.0))
}

fn closed_form_prefactor(a1: u64, b1: u64, s: u64) -> f64 {
    let lf = ln_factorial;
    lf(a1 + b1 - 1) + lf(s - 1) - lf(a1 - 1) - lf(b1 - 1) - lf(a1 + b1 + s - 2)
}

fn closed_form_term(j: u64, a1: u64, b1: u64, s: u64) -> f64 {
    let lf = ln_factorial;
    lf(j + a1 - 1) + lf(b1 + s - j - 2) - lf(j) - lf(s - 1 - j)
}

/// First summation form, `alpha_1` terms.
pub fn superiority_sum_over_a1(arm: &BetaArmState) -> Result<f64> {
    arm.check()?;
    let BetaArmState { b1, a2, b2, .. } = *arm;
    let logs: Vec<f64> = (0..arm.a1).map(|i| term_over_a1(i, b1, a2, b2)).collect();
    Ok(log_sum_exp(&logs).exp())
}

fn term_over_a1(i: u64, b1: u64, a2: u64, b2: u64) -> f64 {
    ln_beta_int(a2 + i, b1 + b2) - ((b1 + i) as f64).ln() - ln_beta_int(1 + i, b1) - ln_beta_int(a2, b2)
}

/// Second summation form, `beta_2` terms.
pub fn superiority_sum_over_b2(arm: &BetaArmState) -> Result<f64> {
    arm.check()?;
    let BetaArmState { a1, b1, a2, .. } = *arm;
    let logs: Vec<f64> = (0..arm.b2).map(|i| term_over_b2(i, a1, b1, a2)).collect();
    Ok(log_sum_exp(&logs).exp())
}

fn term_over_b2(i: u64, a1: u64, b1: u64, a2: u64) -> f64 {
    ln_beta_int(b1 + i, a1 + a2) - ((a2 + i) as f64).ln() - ln_beta_int(1 + i, a2) - ln_beta_int(a1, b1)
}

/// Agreement required between the two summation forms.
pub const FORM_AGREEMENT_TOL: f64 = 1e-10;

/// `P(X1 > X2)` from both summation forms, which must agree.
pub fn exact_superiority_prob(arm: &BetaArmState) -> Result<f64> {
    let p = superiority_sum_over_a1(arm)?;
    let q = superiority_sum_over_b2(arm)?;
    if (p - q).abs() > FORM_AGREEMENT_TOL {
        return Err(Error::Numeric(format!("summation forms disagree for {arm:?}: {p} vs {q}")));
    }
    Ok(0.5 * (p + q))
}

/// Visits every state with parameter sum at most `max_sum` together with
/// `[closed form, sum over alpha_1, sum over beta_2]`. Each form is accumulated
/// along its own summation index, so the cost is constant per state.
pub fn sweep_superiority_forms(max_sum: u64, mut visit: impl FnMut(BetaArmState, [f64; 3])) {
    if max_sum < 4 {
        return;
    }
    let n = max_sum;
    let w = (n + 1) as usize;
    let at = |a2: u64, b2: u64| a2 as usize * w + b2 as usize;
    let mut over_a1 = vec![LogAcc::EMPTY; w * w];
    let mut closed = vec![0.0; w * w];
    for b1 in 1..=n - 3 {
        over_a1.fill(LogAcc::EMPTY);
        for a1 in 1..=n - 2 - b1 {
            let rest = n - a1 - b1;
            for a2 in 1..rest {
                for b2 in 1..=rest - a2 {
                    over_a1[at(a2, b2)].add(term_over_a1(a1 - 1, b1, a2, b2));
                }
            }
            for s in 2..=rest {
                let pre = closed_form_prefactor(a1, b1, s);
                let mut acc = LogAcc::EMPTY;
                for a2 in (1..s).rev() {
                    acc.add(closed_form_term(a2, a1, b1, s));
                    closed[at(a2, s - a2)] = (pre + acc.ln()).exp().clamp(0.0, 1.0);
                }
            }
            for a2 in 1..rest {
                let mut acc = LogAcc::EMPTY;
                for b2 in 1..=rest - a2 {
                    acc.add(term_over_b2(b2 - 1, a1, b1, a2));
                    let k = at(a2, b2);
                    visit(BetaArmState { a1, b1, a2, b2 }, [closed[k], over_a1[k].ln().exp(), acc.ln().exp()]);
                }
            }
        }
    }
}

/// `P(X1 > X2)` from whichever summation form has fewer terms.
pub fn p_local(arm: &BetaArmState) -> Result<f64> {
    if arm.a1 <= arm.b2 {
        superiority_sum_over_a1(arm)
    } else {
        superiority_sum_over_b2(arm)
    }
}

/// Probability of selecting local when arm 2 is a known reward rate `r2`:
/// `P(X1 > r2) = 1 - I_{r2}(a1, b1)`.
pub fn p_local_vs_threshold(a1: u64, b1: u64, r2: f64) -> Result<f64> {
    Ok(1.0 - beta_cdf(r2, a1 as f64, b1 as f64)?)
}

/// Expected one-pull change of the local-selection probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCorrection {
    pub current: f64,
    /// `r1 p(a1+1, b1) + (1 - r1) p(a1, b1+1)`.
    pub expected_next: f64,
    /// `expected_next - current`, evaluated as
    /// `c ((a1 + b1) r1 - a1) / (a1 b1)` with `c > 0` kept in log space so that
    /// the sign survives when both probabilities round to the same value.
    pub delta: f64,
    pub increases: bool,
    /// `a1 / (a1 + b1) < r1`.
    pub criterion: bool,
}

fn self_correction(
    p: impl Fn(u64, u64) -> Result<f64>,
    ln_c: f64,
    a1: u64,
    b1: u64,
    r1: f64,
) -> Result<SelfCorrection> {
    if !(r1 > 0.0 && r1 < 1.0) {
        return Err(Error::Precondition(format!("r1 must lie in (0,1), got {r1}")));
    }
    let current = p(a1, b1)?;
    let expected_next = r1 * p(a1 + 1, b1)? + (1.0 - r1) * p(a1, b1 + 1)?;
    let (a, b) = (a1 as f64, b1 as f64);
    let delta = ln_c.exp() * ((a + b) * r1 - a) / (a * b);
    Ok(SelfCorrection { current, expected_next, delta, increases: delta > 0.0, criterion: a < r1 * (a + b) })
}

/// One local pull against a fixed offload reward rate `r2`.
pub fn self_correction_check(arm: &BetaArmState, r1: f64, r2: f64) -> Result<SelfCorrection> {
    arm.check()?;
    if !(r2 > 0.0 && r2 < 1.0) {
        return Err(Error::Precondition(format!("r2 must lie in (0,1), got {r2}")));
    }
    let (a, b) = (arm.a1, arm.b1);
    let ln_c = a as f64 * r2.ln() + b as f64 * (1.0 - r2).ln() - ln_beta_int(a, b);
    self_correction(|a, b| p_local_vs_threshold(a, b, r2), ln_c, a, b, r1)
}

/// One local pull with arm 2 held at its Beta posterior.
pub fn self_correction_check_posterior(arm: &BetaArmState, r1: f64) -> Result<SelfCorrection> {
    arm.check()?;
    let BetaArmState { a1, b1, a2, b2 } = *arm;
    let ln_c = ln_beta_int(a2 + a1, b2 + b1) - ln_beta_int(a2, b2) - ln_beta_int(a1, b1);
    let p = |a1, b1| p_local(&BetaArmState { a1, b1, ..*arm });
    self_correction(p, ln_c, a1, b1, r1)
}

/// One step of a two-armed Bernoulli bandit run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConvergencePoint {
    pub step: usize,
    /// Closed-form `P(local)` before the step's selection.
    pub p_local_closed_form: f64,
    pub action_taken: Action,
}

/// Runs BLA on arms with reward rates `r1` (local) and `r2` (offload) from
/// uniform priors. Returns the trajectory and the final arm state.
pub fn convergence_check<R: Rng + ?Sized>(
    r1: f64,
    r2: f64,
    steps: usize,
    rng: &mut R,
) -> Result<(Vec<ConvergencePoint>, BetaArmState)> {
    if r1 == r2 {
        return Err(Error::Precondition("reward rates must differ".into()));
    }
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) {
        return Err(Error::Precondition("reward rates must lie in [0,1]".into()));
    }
    let mut arm = BetaArmState::default();
    let mut traj = Vec::with_capacity(steps);
    for step in 0..steps {
        let p = p_local(&arm)?;
        let action = sample_and_select(&arm, rng);
        let r = if action == Action::Local { r1 } else { r2 };
        let outcome = if rng.random::<f64>() < r { Outcome::Reward } else { Outcome::Penalty };
        arm = update_arm(&arm, action, outcome);
        traj.push(ConvergencePoint { step, p_local_closed_form: p, action_taken: action });
    }
    Ok((traj, arm))
}

pub fn write_convergence_csv<W: Write>(out: W, traj: &[ConvergencePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "p_local_closed_form", "action_taken"])?;
    for p in traj {
        w.write_record([p.step.to_string(), p.p_local_closed_form.to_string(), p.action_taken.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
