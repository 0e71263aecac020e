//! Least-squares conditional expectations on polynomial state features.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Backend for the per-step conditional expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondExpectation {
    /// The problem carries no state randomness; conditioning is the
    /// identity per path and the martingale components vanish exactly.
    Pathwise,
    /// Projection onto polynomial features of the forward state.
    Regression { degree: usize },
}

/// Build the monomial feature row for one state.
fn features(state: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if state.len() == 1 {
        let mut p = 1.0;
        for _ in 0..degree {
            p *= state[0];
            out.push(p);
        }
    } else {
        for &s in state {
            out.push(s);
        }
        if degree >= 2 {
            for i in 0..state.len() {
                for j in i..state.len() {
                    out.push(state[i] * state[j]);
                }
            }
        }
    }
}

/// Least-squares fit of several targets against the features of the sampled
/// states, returning fitted values per path and target.
///
/// Columns that are (numerically) constant carry no information beyond the
/// intercept and are dropped before the solve; a genuine rank deficiency in
/// what remains is an error.
pub struct FittedValues {
    /// Row-major `[path][target]`.
    pub values: Vec<f64>,
    pub n_targets: usize,
}

pub fn fit_targets(
    states: &[f64],
    state_dim: usize,
    degree: usize,
    targets: &[Vec<f64>],
) -> Result<FittedValues> {
    let n_targets = targets.len();
    let n = targets.first().map(|t| t.len()).unwrap_or(0);
    debug_assert!(states.len() == n * state_dim);

    let mut row = Vec::new();
    features(&states[0..state_dim], degree, &mut row);
    let n_feat = row.len();
    let mut design = DMatrix::zeros(n, n_feat);
    for p in 0..n {
        features(&states[p * state_dim..(p + 1) * state_dim], degree, &mut row);
        for (c, v) in row.iter().enumerate() {
            design[(p, c)] = *v;
        }
    }

    // drop constant columns (other than the intercept)
    let mut keep: Vec<usize> = vec![0];
    for c in 1..n_feat {
        let col = design.column(c);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let scale = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if var > 1e-24 * (1.0 + scale) {
            keep.push(c);
        }
    }
    let reduced = DMatrix::from_fn(n, keep.len(), |r, c| design[(r, keep[c])]);
    if n < keep.len() {
        return Err(Error::RankDeficient { rank: n, cols: keep.len() });
    }
    // truncated SVD: collinear columns (discrete states visit few values)
    // still yield the unique projection of the targets
    let svd = reduced.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();

    let mut values = vec![0.0; n * n_targets];
    for (ti, target) in targets.iter().enumerate() {
        let rhs = DVector::from_column_slice(target);
        let beta = svd
            .solve(&rhs, tol)
            .map_err(|e| Error::Numerical(format!("regression solve: {e}")))?;
        let fitted = &reduced * beta;
        for p in 0..n {
            values[p * n_targets + ti] = fitted[p];
        }
    }
    Ok(FittedValues { values, n_targets })
}
