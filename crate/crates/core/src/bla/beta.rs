use statrs::function::beta::{beta_reg, ln_beta};
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

fn check(x: f64, a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("Beta parameters must be positive, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x must lie in [0,1], got {x}")));
    }
    Ok(())
}

fn xlogy(k: f64, y: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * y.ln()
    }
}

pub fn beta_pdf(x: f64, a: f64, b: f64) -> Result<f64> {
    check(x, a, b)?;
    Ok((xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - ln_beta(a, b)).exp())
}

/// Regularised incomplete Beta function `I_x(a, b)`.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> Result<f64> {
    check(x, a, b)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    Ok(beta_reg(a, b, x))
}

const LN_FACTORIAL_TABLE: usize = 1 << 16;

/// `ln n!`, tabulated for small `n`.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if (n as usize) < LN_FACTORIAL_TABLE {
        let t = TABLE.get_or_init(|| (0..LN_FACTORIAL_TABLE).map(|k| ln_gamma(k as f64 + 1.0)).collect());
        t[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln B(a, b)` for positive integers.
pub(crate) fn ln_beta_int(a: u64, b: u64) -> f64 {
    ln_factorial(a - 1) + ln_factorial(b - 1) - ln_factorial(a + b - 1)
}

/// `ln C(n, k)`.
pub(crate) fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Integer-parameter CDF as a binomial tail:
/// `sum_{k=a}^{a+b-1} C(a+b-1, k) x^k (1-x)^{a+b-1-k}`.
pub fn beta_cdf_integer_sum(x: f64, a: u64, b: u64) -> Result<f64> {
    if a == 0 || b == 0 {
        return Err(Error::Domain("integer Beta parameters must be >= 1".into()));
    }
    check(x, a as f64, b as f64)?;
    let n = a + b - 1;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let (lx, l1x) = (x.ln(), (1.0 - x).ln());
    let logs: Vec<f64> = (a..=n).map(|k| ln_choose(n, k) + k as f64 * lx + (n - k) as f64 * l1x).collect();
    Ok(log_sum_exp(&logs).exp().min(1.0))
}

/// Streaming `ln sum exp`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogAcc {
    max: f64,
    scaled: f64,
}

impl LogAcc {
    pub(crate) const EMPTY: LogAcc = LogAcc { max: f64::NEG_INFINITY, scaled: 0.0 };

    pub(crate) fn add(&mut self, x: f64) {
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub(crate) fn ln(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
