//! Resolvent and regularized drivers of monotone maps.
//!
//! For a non-increasing `phi(t, .)` the map `J -> J - delta phi(t, J)` is
//! strictly increasing, so the resolvent equation `J - delta phi(t, J) = y`
//! has a unique root found by safeguarded Newton with a bisection fallback.

use crate::error::{Error, Result};

pub const RESOLVENT_TOL: f64 = 1e-12;
const MAX_BRACKET_EXPANSIONS: u32 = 60;

/// Root of the strictly increasing map `psi` with `psi(root) = target`,
/// starting the bracket around `guess`. The residual satisfies
/// `|psi(root) - target| <= tol (1 + |target|)`.
pub fn solve_increasing(
    psi: &dyn Fn(f64) -> f64,
    target: f64,
    guess: f64,
    tol: f64,
) -> Result<f64> {
    let g = |y: f64| psi(y) - target;
    let mut lo = guess - 1.0;
    let mut hi = guess + 1.0;
    let mut glo = g(lo);
    let mut ghi = g(hi);
    let mut width = 1.0;
    let mut expansions = 0;
    while glo > 0.0 || ghi < 0.0 {
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS || !glo.is_finite() || !ghi.is_finite() {
            return Err(Error::BracketExpansion(expansions));
        }
        width *= 2.0;
        if glo > 0.0 {
            lo -= width;
            glo = g(lo);
        }
        if ghi < 0.0 {
            hi += width;
            ghi = g(hi);
        }
    }
    let scale = tol * (1.0 + target.abs());
    let mut x = guess.clamp(lo, hi);
    let mut gx = g(x);
    for _ in 0..200 {
        if gx.abs() <= scale {
            return Ok(x);
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // secant/Newton proposal with numeric slope, kept inside the bracket
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (g(x + h) - gx) / h;
        let mut next = if slope > 1e-14 { x - gx / slope } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        x = next;
        gx = g(x);
    }
    if gx.abs() <= scale * 100.0 {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "root refinement stalled (residual {gx:.3e})"
        )))
    }
}

/// Resolvent `J_delta(y)`: the unique solution of `J - delta phi(J) = y`.
pub fn resolvent(phi: &dyn Fn(f64) -> f64, y: f64, delta: f64) -> Result<f64> {
    debug_assert!(delta > 0.0);
    solve_increasing(&|j| j - delta * phi(j), y, y, RESOLVENT_TOL)
}

/// Regularized driver value `phi_delta(y) = (J_delta(y) - y) / delta`.
pub fn yosida_apply(phi: &dyn Fn(f64) -> f64, y: f64, delta: f64) -> Result<f64> {
    Ok((resolvent(phi, y, delta)? - y) / delta)
}

/// Cap the level `phi(t, 0)` at `p` while preserving differences:
/// returns `phi(y) - phi0 + (|phi0| ^ p) sign(phi0)` when `phi0 != 0`.
pub fn truncate_level(phi: &dyn Fn(f64) -> f64, p: f64, y: f64) -> f64 {
    let phi0 = phi(0.0);
    if phi0 == 0.0 {
        phi(y)
    } else {
        phi(y) - phi0 + (phi0.abs().min(p) / phi0.abs()) * phi0
    }
}
