//! Weighted solution norms and the a-priori inequality harness.

use super::{Problem, ProblemPaths, SolutionGrid};
use crate::error::{Error, Result};
use serde::Serialize;

/// Exponential weights `Phi_i = exp(theta V_i + mu kappa_i)` per path/node,
/// with `V` the integral of the declared density `a^2`.
#[derive(Clone, Debug)]
pub struct WeightProcess {
    pub theta: f64,
    pub mu: f64,
    /// `[node]`: deterministic `V` values.
    pub v: Vec<f64>,
    /// `[path][node]` weights.
    pub phi: Vec<f64>,
    /// `a^2` sampled at the nodes.
    pub a_sq: Vec<f64>,
}

impl WeightProcess {
    pub fn build(problem: &Problem, paths: &ProblemPaths, theta: f64, mu: f64) -> Self {
        let n = paths.grid.n_steps();
        let bounds = &problem.drivers.bounds;
        let a_sq: Vec<f64> = paths.grid.nodes.iter().map(|&t| bounds.a_squared(t)).collect();
        let mut v = vec![0.0; n + 1];
        for i in 0..n {
            v[i + 1] = v[i] + crate::timefn::integrate(&|t| bounds.a_squared(t), paths.grid.nodes[i], paths.grid.nodes[i + 1]);
        }
        let mut phi = vec![0.0; paths.n_paths * (n + 1)];
        for p in 0..paths.n_paths {
            for node in 0..=n {
                let kap = paths.kappa[p * (n + 1) + node];
                phi[p * (n + 1) + node] = (theta * v[node] + mu * kap).exp();
            }
        }
        WeightProcess { theta, mu, v, phi, a_sq }
    }

    pub fn at(&self, paths: &ProblemPaths, path: usize, node: usize) -> f64 {
        self.phi[path * (paths.grid.n_steps() + 1) + node]
    }
}

/// Monte Carlo estimates of the four weighted solution norms.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    /// `E sup_t Phi_t |Y_t|^2`.
    pub y_sup: f64,
    /// `E int Phi |Y|^2 dQ`.
    pub y_q: f64,
    /// `E int Phi |gamma Z|^2 ds`.
    pub z_l2: f64,
    /// `E |K_T|^2`.
    pub k_terminal: f64,
}

impl NormReport {
    pub fn total(&self) -> f64 {
        self.y_sup + self.y_q + self.z_l2 + self.k_terminal
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

pub fn weighted_norms(
    solution: &SolutionGrid,
    weights: &WeightProcess,
    paths: &ProblemPaths,
) -> NormReport {
    let n = paths.grid.n_steps();
    let n_paths = solution.n_paths;
    let dim = solution.dim;
    let mut y_sup = 0.0;
    let mut y_q = 0.0;
    let mut z_l2 = 0.0;
    let mut k_t = 0.0;
    for p in 0..n_paths {
        let mut sup = 0.0f64;
        for node in 0..=n {
            let w = weights.at(paths, p, node);
            let yv = solution.y[p * (n + 1) + node];
            sup = sup.max(w * yv * yv);
        }
        y_sup += sup;
        for i in 0..n {
            let w = weights.at(paths, p, i);
            let yv = solution.y[p * (n + 1) + i];
            let dq = weights.a_sq[i] * paths.grid.dt(i) + paths.dkappa(p, i);
            y_q += w * yv * yv * dq;
            let mut zsq = 0.0;
            for k in 0..dim {
                let zv = solution.z[(p * n + i) * dim + k];
                zsq += zv * zv;
            }
            z_l2 += w * zsq * paths.gamma_sq[i];
        }
        let kt = solution.k[p * (n + 1) + n];
        k_t += kt * kt;
    }
    let m = n_paths as f64;
    NormReport { y_sup: y_sup / m, y_q: y_q / m, z_l2: z_l2 / m, k_terminal: k_t / m }
}

/// Difference norms driving the Picard stopping rule:
/// `||dY||^2_{H^{2,Q}} + ||dZ||^2_{H^{2,l2}}`.
pub fn difference_norm(
    y_new: &[f64],
    y_old: &[f64],
    z_new: &[f64],
    z_old: &[f64],
    weights: &WeightProcess,
    paths: &ProblemPaths,
) -> f64 {
    let n = paths.grid.n_steps();
    let dim = paths.dim;
    let mut acc = 0.0;
    for p in 0..paths.n_paths {
        for i in 0..n {
            let w = weights.at(paths, p, i);
            let dy = y_new[p * (n + 1) + i] - y_old[p * (n + 1) + i];
            let dq = weights.a_sq[i] * paths.grid.dt(i) + paths.dkappa(p, i);
            acc += w * dy * dy * dq;
            let mut zsq = 0.0;
            for k in 0..dim {
                let dz = z_new[(p * n + i) * dim + k] - z_old[(p * n + i) * dim + k];
                zsq += dz * dz;
            }
            acc += w * zsq * paths.gamma_sq[i];
        }
    }
    acc / paths.n_paths as f64
}

/// Evaluation of the a-priori inequality: the four norm terms against the
/// data functional. The proportionality constant is existential, so only
/// finiteness and the empirical ratio are reported.
#[derive(Clone, Debug, Serialize)]
pub struct AprioriReport {
    pub lhs: f64,
    pub rhs_data: f64,
    /// `lhs / rhs_data`, `0` when both vanish.
    pub ratio: f64,
    pub trivially_zero: bool,
}

pub fn apriori_check(
    problem: &Problem,
    paths: &ProblemPaths,
    solution: &SolutionGrid,
    weights: &WeightProcess,
) -> Result<AprioriReport> {
    let alpha = problem.drivers.bounds.alpha;
    let theta_min = 4.0 + 2.0 / (1.0 - 2.0 * alpha);
    if weights.theta <= theta_min {
        return Err(Error::ThetaOutOfRange { theta: weights.theta, bound: theta_min });
    }
    let norms = weighted_norms(solution, weights, paths);
    let lhs = norms.total();

    let n = paths.grid.n_steps();
    let b = &problem.drivers.bounds;
    let mut rhs = 0.0;
    let zeros = vec![0.0; paths.dim];
    for p in 0..paths.n_paths {
        let ctx = paths.ctx(p, n);
        let xi = (problem.terminal)(&ctx);
        rhs += weights.at(paths, p, n) * xi * xi;
        let mut sup_s = 0.0f64;
        for i in 0..n {
            let w = weights.at(paths, p, i);
            let t = paths.grid.nodes[i];
            let phi_over_a = b.phi.eval(t) / b.a_squared(t).sqrt();
            rhs += w * phi_over_a * phi_over_a * paths.grid.dt(i);
            let psi = b.psi.eval(t);
            rhs += w * psi * psi * paths.dkappa(p, i);
            let g0 = (problem.drivers.g)(&paths.ctx(p, i), 0.0, &zeros);
            rhs += w * g0 * g0 * paths.grid.dt(i);
            if let Some(s) = &problem.obstacle {
                let sv = s(&paths.ctx(p, i)).max(0.0);
                sup_s = sup_s.max((w * sv) * (w * sv));
            }
        }
        rhs += sup_s;
    }
    rhs /= paths.n_paths as f64;

    let trivially_zero = rhs <= 1e-300 && lhs <= 1e-300;
    let ratio = if trivially_zero { 0.0 } else { lhs / rhs.max(1e-300) };
    Ok(AprioriReport { lhs, rhs_data: rhs, ratio, trivially_zero })
}
