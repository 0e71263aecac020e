//! Deterministic scalar functions of time: polynomials, exponentials and
//! sums thereof. These are the only time-dependencies the model accepts,
//! so coefficients stay serializable and evaluation is exact.

use serde::{Deserialize, Serialize};

/// A deterministic function of time on `[0, T]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TimeFn {
    /// Constant value.
    Const(f64),
    /// Polynomial with coefficients in increasing degree: `poly[0] + poly[1] t + ...`
    Poly { poly: Vec<f64> },
    /// `scale * exp(rate * t)`
    Exp { scale: f64, rate: f64 },
    /// Sum of terms.
    Sum { sum: Vec<TimeFn> },
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Const(c) => *c,
            TimeFn::Poly { poly } => poly.iter().rev().fold(0.0, |acc, c| acc * t + c),
            TimeFn::Exp { scale, rate } => scale * (rate * t).exp(),
            TimeFn::Sum { sum } => sum.iter().map(|f| f.eval(t)).sum(),
        }
    }

    pub fn is_const(&self) -> bool {
        match self {
            TimeFn::Const(_) => true,
            TimeFn::Poly { poly } => poly.iter().skip(1).all(|c| *c == 0.0),
            TimeFn::Exp { scale, rate } => *scale == 0.0 || *rate == 0.0,
            TimeFn::Sum { sum } => sum.iter().all(|f| f.is_const()),
        }
    }

    /// `\int_a^b f(s) ds` by adaptive Simpson, absolute tolerance 1e-12.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        integrate(&|t| self.eval(t), a, b)
    }

    /// An upper bound for `f` on `[a, b]`, by dense sampling with a safety
    /// margin. Used as a thinning majorant, so overestimating is harmless.
    pub fn sup_bound(&self, a: f64, b: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        let n = 64;
        for i in 0..=n {
            let t = a + (b - a) * (i as f64) / (n as f64);
            m = m.max(self.eval(t));
        }
        m + m.abs() * 0.05 + 1e-12
    }
}

/// Adaptive Simpson quadrature with absolute tolerance 1e-12.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, 1e-12, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1)
    }
}
