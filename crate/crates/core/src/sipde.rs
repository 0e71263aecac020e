//! Solution fields of the obstacle integro-PDE with nonlinear Neumann
//! boundary data: the probabilistic representation evaluated point by point
//! against a deterministic finite-difference oracle.
//!
//! The driving noise here has no Brownian part and bounded jump sizes, and
//! the forward state is confined to a one-dimensional interval for the
//! oracle. The representation solves a reflected forward path batch from
//! each `(t, x)` and feeds it to the backward solver.

use crate::basis::MartingaleBasis;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::levy::LevyCharacteristics;
use crate::paths::{simulate_batch, splitmix};
use crate::reflect::{solve_reflected_paths, validate_jump_invariance, DomainShape, SmoothDomain};
use crate::solver::{
    solve_lipschitz, solve_reflected, CondExpectation, DriverSet, KappaSource, Problem,
    ProblemPaths, ScalarField, SchemeConfig, SolutionGrid, StepCtx, WeightProcess,
};
use serde::Serialize;
use std::sync::Arc;

pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Data of the obstacle problem.
#[derive(Clone)]
pub struct SipdeProblem {
    pub domain: SmoothDomain,
    pub sigma: SpaceFn,
    /// `f(t, x, y, (u1_k))`.
    pub f: GeneratorFn,
    /// `g(t, x, y)`; must vanish for the finite-difference oracle.
    pub g: BoundaryFn,
    /// `h(t, x, y)` entering the Neumann condition.
    pub h: BoundaryFn,
    /// Terminal data `H(x)`.
    pub terminal: SpaceFn,
    pub obstacle: Option<SpaceTimeFn>,
    /// Declared driver bounds for the backward solver.
    pub bounds: crate::solver::DriverBounds,
    /// Growth constants: `|H(x)| <= growth_c (1 + |x|^growth_p)`.
    pub growth_c: f64,
    pub growth_p: i32,
}

impl SipdeProblem {
    /// Checks the structural restrictions: no Brownian part, jump sizes at
    /// most one, jump invariance of the domain, the obstacle/terminal order
    /// and the declared growth.
    pub fn validate(&self, chars: &LevyCharacteristics) -> Result<()> {
        if chars.has_diffusion() {
            return Err(Error::InvalidModel(
                "the representation requires a noise without Brownian part (c = 0)".into(),
            ));
        }
        for atom in &chars.atoms {
            if atom.size.abs() > 1.0 {
                return Err(Error::InvalidModel(format!(
                    "jump size {} exceeds 1; bounded jumps are required",
                    atom.size
                )));
            }
        }
        let sigma = self.sigma.clone();
        validate_jump_invariance(&self.domain, chars, &move |x: &[f64]| vec![sigma(x[0])], 129)?;
        let (a, b) = match self.domain.shape {
            DomainShape::Interval { a, b } => (a, b),
            _ => {
                return Err(Error::InvalidConfig(
                    "the field evaluation is one-dimensional; use an interval domain".into(),
                ))
            }
        };
        for i in 0..=64 {
            let x = a + (b - a) * i as f64 / 64.0;
            let hx = (self.terminal)(x);
            if hx.abs() > self.growth_c * (1.0 + x.abs().powi(self.growth_p)) + 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "terminal data violates the declared growth at x = {x}"
                )));
            }
            if let Some(s) = &self.obstacle {
                if s(chars.horizon, x) > hx + 1e-10 {
                    return Err(Error::InvalidModel(format!(
                        "obstacle above the terminal data at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn backward_problem(&self) -> Problem {
        let f = self.f.clone();
        let drivers = DriverSet {
            f: Arc::new(move |ctx: &StepCtx, y, z| f(ctx.t, ctx.state[0], y, z)),
            h: {
                let h = self.h.clone();
                Arc::new(move |ctx: &StepCtx, y| h(ctx.t, ctx.state[0], y))
            },
            g: {
                let g = self.g.clone();
                Arc::new(move |ctx: &StepCtx, y, _| g(ctx.t, ctx.state[0], y))
            },
            bounds: self.bounds.clone(),
        };
        let terminal: ScalarField = {
            let h = self.terminal.clone();
            Arc::new(move |ctx: &StepCtx| h(ctx.state[0]))
        };
        let mut problem = Problem::new(drivers, terminal);
        if let Some(s) = &self.obstacle {
            let s = s.clone();
            problem = problem.with_obstacle(Arc::new(move |ctx: &StepCtx| s(ctx.t, ctx.state[0])));
        }
        problem
    }
}

/// Numerical parameters of the representation.
#[derive(Clone, Debug, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub regression_degree: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 20_000, n_steps: 64, seed: 7, regression_degree: 2 }
    }
}

/// Tabulated field with per-point standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionField {
    pub t_points: Vec<f64>,
    pub x_points: Vec<f64>,
    /// Row-major `[t][x]`.
    pub u: Vec<f64>,
    pub se: Vec<f64>,
    /// Per-point failures, recorded instead of aborting the sweep.
    pub failures: Vec<(usize, usize, String)>,
    /// Largest adjacent-cell jump of the field.
    pub continuity_modulus: f64,
    /// Empirical p = 4 weighted-moment bound of the backward solution,
    /// recorded per run.
    pub p4_moment: f64,
}

impl SolutionField {
    pub fn at(&self, ti: usize, xi: usize) -> f64 {
        self.u[ti * self.x_points.len() + xi]
    }

    fn compute_modulus(&mut self) {
        let nt = self.t_points.len();
        let nx = self.x_points.len();
        let mut m = 0.0f64;
        for ti in 0..nt {
            for xi in 0..nx {
                let v = self.u[ti * nx + xi];
                if xi + 1 < nx {
                    m = m.max((v - self.u[ti * nx + xi + 1]).abs());
                }
                if ti + 1 < nt {
                    m = m.max((v - self.u[(ti + 1) * nx + xi]).abs());
                }
            }
        }
        self.continuity_modulus = m;
    }
}

/// Evaluate `u(t, x) = Y_t` on a probe grid: reflected forward paths from
/// each point, then the backward solve with the path local time and the
/// obstacle evaluated along the state.
pub fn mc_representation(
    problem: &SipdeProblem,
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    t_points: &[f64],
    x_points: &[f64],
    config: &McConfig,
) -> Result<SolutionField> {
    problem.validate(chars)?;
    let backward = problem.backward_problem();
    let scheme = SchemeConfig {
        ce: CondExpectation::Regression { degree: config.regression_degree },
        ..SchemeConfig::default()
    };
    let mut u = vec![f64::NAN; t_points.len() * x_points.len()];
    let mut se = vec![f64::NAN; t_points.len() * x_points.len()];
    let mut failures = Vec::new();
    let mut p4 = 0.0f64;
    for (ti, &t) in t_points.iter().enumerate() {
        for (xi, &x) in x_points.iter().enumerate() {
            let point_seed = splitmix(config.seed ^ splitmix((ti as u64) << 32 | xi as u64));
            match representation_point(
                problem, &backward, chars, basis, t, x, config, &scheme, point_seed,
            ) {
                Ok((mean, stderr, p4_point)) => {
                    u[ti * x_points.len() + xi] = mean;
                    se[ti * x_points.len() + xi] = stderr;
                    p4 = p4.max(p4_point);
                }
                Err(e) => failures.push((ti, xi, e.to_string())),
            }
        }
    }
    let mut field = SolutionField {
        t_points: t_points.to_vec(),
        x_points: x_points.to_vec(),
        u,
        se,
        failures,
        continuity_modulus: 0.0,
        p4_moment: p4,
    };
    field.compute_modulus();
    Ok(field)
}

#[allow(clippy::too_many_arguments)]
fn representation_point(
    problem: &SipdeProblem,
    backward: &Problem,
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    t: f64,
    x: f64,
    config: &McConfig,
    scheme: &SchemeConfig,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let grid = TimeGrid::uniform(t, chars.horizon, config.n_steps)?;
    let batch = simulate_batch(chars, basis, &grid, config.n_paths, seed)?;
    let sigma = problem.sigma.clone();
    let reflected = solve_reflected_paths(
        &problem.domain,
        chars,
        &batch,
        &move |s: &[f64]| vec![sigma(s[0])],
        &[x],
        0,
    )?;
    let paths = ProblemPaths::assemble(&batch, &KappaSource::Reflected, Some(&reflected), false)?;
    let solution = if problem.obstacle.is_some() {
        solve_reflected(backward, &paths, scheme)?
    } else {
        solve_lipschitz(backward, &paths, scheme)?
    };
    let p4 = p4_moment(&solution, backward, &paths, scheme);
    Ok((solution.y0_mean(), solution.y0_standard_error, p4))
}

/// Empirical `p = 4` weighted moment of the backward solution.
fn p4_moment(
    solution: &SolutionGrid,
    problem: &Problem,
    paths: &ProblemPaths,
    scheme: &SchemeConfig,
) -> f64 {
    let weights = WeightProcess::build(problem, paths, scheme.theta, scheme.mu);
    let n = paths.grid.n_steps();
    let mut acc = 0.0;
    for p in 0..paths.n_paths {
        let mut sup = 0.0f64;
        for node in 0..=n {
            let w = weights.at(paths, p, node);
            let y = solution.y[p * (n + 1) + node];
            sup = sup.max(w * w * y.powi(4));
        }
        acc += sup;
    }
    acc / paths.n_paths as f64
}

/// Cubic Lagrange interpolation on a uniform grid (linear below 4 points).
fn interp_cubic(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let h = grid[1] - grid[0];
    let pos = ((x - grid[0]) / h).clamp(0.0, (n - 1) as f64);
    if n < 4 {
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        return values[i] * (1.0 - w) + values[i + 1] * w;
    }
    let mut i0 = pos.floor() as usize;
    i0 = i0.saturating_sub(1).min(n - 4);
    let mut acc = 0.0;
    for j in 0..4 {
        let xj = grid[i0 + j];
        let mut lj = 1.0;
        for k in 0..4 {
            if k != j {
                lj *= (x - grid[i0 + k]) / (xj - grid[i0 + k]);
            }
        }
        acc += lj * values[i0 + j];
    }
    acc
}

/// Nonlocal generator applied to a tabulated time slice:
/// `b sigma u_x + sum_j [u(x + sigma e_j) - u - u_x sigma e_j] lambda_j`.
pub fn generator_apply(
    chars: &LevyCharacteristics,
    sigma: &dyn Fn(f64) -> f64,
    domain: &SmoothDomain,
    x_grid: &[f64],
    u_slice: &[f64],
    t: f64,
    x: f64,
) -> Result<f64> {
    if x_grid.len() < 4 {
        return Err(Error::InvalidConfig("need at least 4 grid points".into()));
    }
    let h = x_grid[1] - x_grid[0];
    let i = ((x - x_grid[0]) / h).round() as usize;
    let du = if i == 0 {
        (u_slice[1] - u_slice[0]) / h
    } else if i + 1 >= x_grid.len() {
        (u_slice[i] - u_slice[i - 1]) / h
    } else {
        (u_slice[i + 1] - u_slice[i - 1]) / (2.0 * h)
    };
    let s = sigma(x);
    let u0 = interp_cubic(x_grid, u_slice, x);
    let mut acc = chars.b(t) * s * du;
    for atom in &chars.atoms {
        let xs = x + s * atom.size;
        if !domain.contains(&[xs]) {
            return Err(Error::JumpLeavesDomain { x: vec![x], atom: atom.size });
        }
        let shifted = interp_cubic(x_grid, u_slice, xs);
        acc += (shifted - u0 - du * s * atom.size) * atom.intensity.eval(t);
    }
    Ok(acc)
}

/// Basis projections of the nonlocal differences:
/// component `k` is `sum_j [u(x + sigma e_j) - u - u_x e_j] p_k(e_j) lambda_j`.
pub fn u1k_terms(
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    sigma: &dyn Fn(f64) -> f64,
    domain: &SmoothDomain,
    x_grid: &[f64],
    u_slice: &[f64],
    t: f64,
    x: f64,
) -> Result<Vec<f64>> {
    let h = x_grid[1] - x_grid[0];
    let i = ((x - x_grid[0]) / h).round() as usize;
    let du = if i == 0 {
        (u_slice[1] - u_slice[0]) / h
    } else if i + 1 >= x_grid.len() {
        (u_slice[i] - u_slice[i - 1]) / h
    } else {
        (u_slice[i + 1] - u_slice[i - 1]) / (2.0 * h)
    };
    let s = sigma(x);
    let u0 = interp_cubic(x_grid, u_slice, x);
    let mut out = vec![0.0; basis.dim];
    for atom in &chars.atoms {
        let xs = x + s * atom.size;
        if !domain.contains(&[xs]) {
            return Err(Error::JumpLeavesDomain { x: vec![x], atom: atom.size });
        }
        let shifted = interp_cubic(x_grid, u_slice, xs);
        let bracket = shifted - u0 - du * atom.size;
        for k in 0..basis.dim {
            out[k] += bracket * basis.p(k, atom.size) * atom.intensity.eval(t);
        }
    }
    Ok(out)
}

/// Finite-difference configuration for the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct FdConfig {
    pub nx: usize,
    pub nt: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { nx: 201, nt: 400 }
    }
}

/// Implicit-Euler finite-difference oracle for the deterministic problem
/// (`g = 0`, one-dimensional interval): implicit upwind transport and
/// implicit zero-order term, explicit nonlocal part, second-order one-sided
/// Neumann rows, obstacle by projection.
pub fn fd_obstacle_solve(
    problem: &SipdeProblem,
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    t0: f64,
    config: &FdConfig,
) -> Result<SolutionField> {
    problem.validate(chars)?;
    for probe in [0.0, 0.3, 0.9] {
        for xp in [0.1, 0.5, 0.9] {
            if (problem.g)(probe, xp, 0.3).abs() > 0.0 {
                return Err(Error::InvalidConfig(
                    "the finite-difference oracle requires g = 0".into(),
                ));
            }
        }
    }
    let (a, b) = match problem.domain.shape {
        DomainShape::Interval { a, b } => (a, b),
        _ => return Err(Error::InvalidConfig("oracle is one-dimensional".into())),
    };
    let mut nt = config.nt;
    let horizon = chars.horizon;
    // explicit nonlocal part: crude intensity bound for the step restriction
    let lam_total: f64 = chars
        .atoms
        .iter()
        .map(|at| at.intensity.sup_bound(t0, horizon))
        .sum();
    let mut dt = (horizon - t0) / nt as f64;
    if 2.0 * lam_total * dt > 1.0 {
        nt *= 2;
        dt = (horizon - t0) / nt as f64;
        if 2.0 * lam_total * dt > 1.0 {
            return Err(Error::Numerical(format!(
                "nonlocal step restriction violated: lambda = {lam_total}, dt = {dt}"
            )));
        }
    }
    let nx = config.nx;
    let dx = (b - a) / (nx - 1) as f64;
    let x_grid: Vec<f64> = (0..nx).map(|i| a + dx * i as f64).collect();
    let t_grid: Vec<f64> = (0..=nt).map(|i| t0 + dt * i as f64).collect();

    let mut field = vec![0.0; (nt + 1) * nx];
    for (i, &x) in x_grid.iter().enumerate() {
        field[nt * nx + i] = (problem.terminal)(x);
    }
    if let Some(s) = &problem.obstacle {
        for (i, &x) in x_grid.iter().enumerate() {
            let idx = nt * nx + i;
            field[idx] = field[idx].max(s(horizon, x));
        }
    }

    let mut u_next = vec![0.0; nx];
    let mut u_cur = vec![0.0; nx];
    for step in (0..nt).rev() {
        let t = t_grid[step];
        u_next.copy_from_slice(&field[(step + 1) * nx..(step + 2) * nx]);
        // explicit nonlocal term at the old level
        let mut nonlocal = vec![0.0; nx];
        let mut u1 = vec![vec![0.0; basis.dim]; nx];
        for (i, &x) in x_grid.iter().enumerate() {
            let s = (problem.sigma)(x);
            let du = if i == 0 {
                (u_next[1] - u_next[0]) / dx
            } else if i + 1 == nx {
                (u_next[nx - 1] - u_next[nx - 2]) / dx
            } else {
                (u_next[i + 1] - u_next[i - 1]) / (2.0 * dx)
            };
            for atom in &chars.atoms {
                let xs = x + s * atom.size;
                let shifted = interp_cubic(&x_grid, &u_next, xs);
                let lam = atom.intensity.eval(t);
                nonlocal[i] += (shifted - u_next[i] - du * s * atom.size) * lam;
                let bracket = shifted - u_next[i] - du * atom.size;
                for k in 0..basis.dim {
                    u1[i][k] += bracket * basis.p(k, atom.size) * lam;
                }
            }
        }
        // fixed-point sweeps on the implicit transport + zero-order term
        u_cur.copy_from_slice(&u_next);
        for _sweep in 0..40 {
            let mut max_change = 0.0f64;
            // boundary rows: second-order one-sided Neumann with the
            // nonlinear flux solved by a few Newton steps
            let solve_boundary = |u0: f64, u1v: f64, u2v: f64, left: bool, t: f64, x: f64| -> f64 {
                let mut v = u0;
                for _ in 0..30 {
                    let (res, slope) = if left {
                        (
                            (-3.0 * v + 4.0 * u1v - u2v) / (2.0 * dx) + (problem.h)(t, x, v),
                            -3.0 / (2.0 * dx) + dh_dy(&problem.h, t, x, v),
                        )
                    } else {
                        (
                            (3.0 * v - 4.0 * u1v + u2v) / (2.0 * dx) - (problem.h)(t, x, v),
                            3.0 / (2.0 * dx) - dh_dy(&problem.h, t, x, v),
                        )
                    };
                    if res.abs() < 1e-12 {
                        break;
                    }
                    v -= res / slope;
                }
                v
            };
            let new_left = solve_boundary(u_cur[0], u_cur[1], u_cur[2], true, t, x_grid[0]);
            let new_right = solve_boundary(
                u_cur[nx - 1],
                u_cur[nx - 2],
                u_cur[nx - 3],
                false,
                t,
                x_grid[nx - 1],
            );
            max_change = max_change.max((new_left - u_cur[0]).abs());
            max_change = max_change.max((new_right - u_cur[nx - 1]).abs());
            u_cur[0] = new_left;
            u_cur[nx - 1] = new_right;
            // interior: (I - dt (transport + f)) u = u_next + dt nonlocal,
            // with f frozen at the current iterate (Jacobi-style update)
            for i in 1..nx - 1 {
                let x = x_grid[i];
                let adv = chars.b(t) * (problem.sigma)(x);
                let fv = (problem.f)(t, x, u_cur[i], &u1[i]);
                let rhs = u_next[i] + dt * nonlocal[i] + dt * fv;
                let new_v = if adv >= 0.0 {
                    // forward difference: u_i (1 + dt adv/dx) - dt adv/dx u_{i+1}
                    (rhs + dt * adv / dx * u_cur[i + 1]) / (1.0 + dt * adv / dx)
                } else {
                    (rhs - dt * adv / dx * u_cur[i - 1]) / (1.0 - dt * adv / dx)
                };
                max_change = max_change.max((new_v - u_cur[i]).abs());
                u_cur[i] = new_v;
            }
            if max_change < 1e-12 {
                break;
            }
        }
        if let Some(s) = &problem.obstacle {
            for (i, &x) in x_grid.iter().enumerate() {
                u_cur[i] = u_cur[i].max(s(t, x));
            }
        }
        field[step * nx..(step + 1) * nx].copy_from_slice(&u_cur);
    }

    let mut out = SolutionField {
        t_points: t_grid,
        x_points: x_grid,
        u: field,
        se: Vec::new(),
        failures: Vec::new(),
        continuity_modulus: 0.0,
        p4_moment: 0.0,
    };
    out.se = vec![0.0; out.u.len()];
    out.compute_modulus();
    Ok(out)
}

fn dh_dy(h: &BoundaryFn, t: f64, x: f64, y: f64) -> f64 {
    let e = 1e-6 * (1.0 + y.abs());
    (h(t, x, y + e) - h(t, x, y - e)) / (2.0 * e)
}

/// Interpolate a field at an arbitrary `(t, x)` (linear in `t`, cubic in `x`).
pub fn field_value(field: &SolutionField, t: f64, x: f64) -> f64 {
    let nt = field.t_points.len();
    let nx = field.x_points.len();
    let mut ti = field.t_points.partition_point(|v| *v <= t);
    ti = ti.clamp(1, nt - 1);
    let (t0, t1) = (field.t_points[ti - 1], field.t_points[ti]);
    let w = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
    let lo = interp_cubic(&field.x_points, &field.u[(ti - 1) * nx..ti * nx], x);
    let hi = interp_cubic(&field.x_points, &field.u[ti * nx..(ti + 1) * nx], x);
    lo * (1.0 - w) + hi * w
}

/// One row of the comparison report.
#[derive(Clone, Debug, Serialize)]
pub struct ComparePoint {
    pub t: f64,
    pub x: f64,
    pub mc: f64,
    pub oracle: f64,
    pub diff: f64,
    pub mc_se: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub max_diff: f64,
    pub all_pass: bool,
    pub scheme_tol: f64,
}

/// Compare the probabilistic field against the oracle at the probe points
/// of the former; tolerance `3 (SE + scheme_tol)` per point.
pub fn compare_report(mc: &SolutionField, oracle: &SolutionField, scheme_tol: f64) -> CompareReport {
    let mut points = Vec::new();
    let mut max_diff = 0.0f64;
    let mut all_pass = true;
    for (ti, &t) in mc.t_points.iter().enumerate() {
        for (xi, &x) in mc.x_points.iter().enumerate() {
            let v = mc.u[ti * mc.x_points.len() + xi];
            if !v.is_finite() {
                all_pass = false;
                continue;
            }
            let se = mc.se[ti * mc.x_points.len() + xi];
            let o = field_value(oracle, t, x);
            let diff = (v - o).abs();
            let tolerance = 3.0 * (se + scheme_tol);
            let pass = diff <= tolerance;
            all_pass &= pass;
            max_diff = max_diff.max(diff);
            points.push(ComparePoint { t, x, mc: v, oracle: o, diff, mc_se: se, tolerance, pass });
        }
    }
    CompareReport { points, max_diff, all_pass, scheme_tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::levy::{JumpAtom, Modulation};
    use crate::reflect::interval_domain;
    use crate::solver::DriverBounds;
    use crate::timefn::TimeFn;
    use approx::assert_abs_diff_eq;

    fn wide_domain() -> SmoothDomain {
        interval_domain(-10.0, 10.0).unwrap()
    }

    fn poisson_chars() -> LevyCharacteristics {
        LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, 2.0)],
            Modulation::Proportional,
        )
    }

    fn grid_on(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn generator_examples() {
        let chars = poisson_chars();
        let domain = wide_domain();
        let x_grid = grid_on(-6.0, 6.0, 49);
        // affine field: the nonlocal bracket cancels exactly
        let affine: Vec<f64> = x_grid.iter().map(|x| 3.0 * x + 1.0).collect();
        let mut chars_b = chars.clone();
        chars_b.drift = TimeFn::Const(0.4);
        let v = generator_apply(&chars_b, &|_| 1.0, &domain, &x_grid, &affine, 0.5, 0.25).unwrap();
        assert_abs_diff_eq!(v, 0.4 * 3.0, epsilon = 1e-9);
        // quadratic field, sigma = 1, e = 1, lambda = 2, b = 0: value 2
        let quad: Vec<f64> = x_grid.iter().map(|x| x * x).collect();
        let v = generator_apply(&chars, &|_| 1.0, &domain, &x_grid, &quad, 0.5, 0.25).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        // constant field: zero
        let constant = vec![5.0; x_grid.len()];
        let v = generator_apply(&chars, &|_| 1.0, &domain, &x_grid, &constant, 0.5, 0.25).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn u1k_examples() {
        let chars = poisson_chars();
        let basis = build_basis(&chars).unwrap();
        let domain = wide_domain();
        let x_grid = grid_on(-6.0, 6.0, 49);
        // affine with unit slope and sigma = 1: brackets vanish
        let affine: Vec<f64> = x_grid.iter().map(|x| x + 2.0).collect();
        let v = u1k_terms(&chars, &basis, &|_| 1.0, &domain, &x_grid, &affine, 0.3, 0.5).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-9);
        // quadratic: component = 1 * p1(1) * lambda = 2 / sqrt(2)
        let quad: Vec<f64> = x_grid.iter().map(|x| x * x).collect();
        let v = u1k_terms(&chars, &basis, &|_| 1.0, &domain, &x_grid, &quad, 0.3, 0.5).unwrap();
        assert_abs_diff_eq!(v[0], 2.0 / 2.0f64.sqrt(), epsilon = 1e-9);
        // no atoms: zero vector
        let empty = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![],
            Modulation::General,
        );
        let v = u1k_terms(&empty, &basis, &|_| 1.0, &domain, &x_grid, &quad, 0.3, 0.5).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
    }

    fn zero_problem(c: f64) -> SipdeProblem {
        SipdeProblem {
            domain: interval_domain(0.0, 1.0).unwrap(),
            sigma: Arc::new(|x| 0.3 * (1.0 - x)),
            f: Arc::new(|_, _, _, _| 0.0),
            g: Arc::new(|_, _, _| 0.0),
            h: Arc::new(|_, _, _| 0.0),
            terminal: Arc::new(move |_| c),
            obstacle: None,
            bounds: DriverBounds::default(),
            growth_c: c.abs() + 1.0,
            growth_p: 2,
        }
    }

    fn unit_atom_chars(lambda: f64, b: f64) -> LevyCharacteristics {
        LevyCharacteristics::new(
            1.0,
            TimeFn::Const(b),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, lambda)],
            Modulation::Proportional,
        )
    }

    #[test]
    fn fd_constant_field_is_preserved() {
        let problem = zero_problem(2.5);
        let chars = unit_atom_chars(1.0, 0.2);
        let basis = build_basis(&chars).unwrap();
        let field =
            fd_obstacle_solve(&problem, &chars, &basis, 0.0, &FdConfig { nx: 41, nt: 40 }).unwrap();
        for v in &field.u {
            assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn fd_binding_obstacle_is_projection_fixed_point() {
        // strong decay pulls u below the flat obstacle away from T, so the
        // projection pins u at the obstacle level there
        let mut problem = zero_problem(1.0);
        problem.f = Arc::new(|_, _, y, _| -5.0 * y);
        problem.obstacle = Some(Arc::new(|_, _| 0.8));
        let chars = unit_atom_chars(0.5, 0.1);
        let basis = build_basis(&chars).unwrap();
        let field =
            fd_obstacle_solve(&problem, &chars, &basis, 0.0, &FdConfig { nx: 41, nt: 80 }).unwrap();
        // early times: unconstrained decay of exp(-5 (T-t)) from 1 dives far
        // below 0.8, so the obstacle binds
        let v = field.at(0, 20);
        assert_abs_diff_eq!(v, 0.8, epsilon = 1e-9);
        // at T the terminal dominates
        assert_abs_diff_eq!(field.at(field.t_points.len() - 1, 20), 1.0, epsilon = 1e-12);
    }

    fn standard_model() -> (SipdeProblem, LevyCharacteristics) {
        let problem = SipdeProblem {
            domain: interval_domain(0.0, 1.0).unwrap(),
            sigma: Arc::new(|x| 0.3 * (1.0 - x)),
            f: Arc::new(|_, x, y, _| x - y),
            g: Arc::new(|_, _, _| 0.0),
            h: Arc::new(|_, _, y| 0.4 - 0.5 * y),
            terminal: Arc::new(|x| x * x),
            obstacle: Some(Arc::new(|t, x| 0.3 + 0.2 * x - 0.35 * t)),
            bounds: {
                let mut b = DriverBounds::default();
                b.lambda = TimeFn::Const(-1.0);
                b.varrho = TimeFn::Const(-0.5);
                b.phi = TimeFn::Const(1.0);
                b.phi_hat = TimeFn::Const(1.0);
                b.psi = TimeFn::Const(1.0);
                b.zeta = 0.5;
                b
            },
            growth_c: 1.0,
            growth_p: 2,
        };
        (problem, unit_atom_chars(1.0, 0.2))
    }

    #[test]
    fn fd_self_convergence() {
        let (problem, chars) = standard_model();
        let basis = build_basis(&chars).unwrap();
        let coarse =
            fd_obstacle_solve(&problem, &chars, &basis, 0.0, &FdConfig { nx: 51, nt: 50 }).unwrap();
        let mid =
            fd_obstacle_solve(&problem, &chars, &basis, 0.0, &FdConfig { nx: 101, nt: 100 })
                .unwrap();
        let fine =
            fd_obstacle_solve(&problem, &chars, &basis, 0.0, &FdConfig { nx: 201, nt: 200 })
                .unwrap();
        let probes = [(0.0, 0.3), (0.25, 0.5), (0.5, 0.7)];
        let d1: f64 = probes
            .iter()
            .map(|&(t, x)| (field_value(&coarse, t, x) - field_value(&mid, t, x)).abs())
            .fold(0.0, f64::max);
        let d2: f64 = probes
            .iter()
            .map(|&(t, x)| (field_value(&mid, t, x) - field_value(&fine, t, x)).abs())
            .fold(0.0, f64::max);
        assert!(d2 <= 0.6 * d1 + 1e-12, "no self convergence: {d1} vs {d2}");
    }

    #[test]
    fn mc_constant_terminal() {
        let problem = zero_problem(3.0);
        let chars = unit_atom_chars(1.0, 0.2);
        let basis = build_basis(&chars).unwrap();
        let config = McConfig { n_paths: 64, n_steps: 16, seed: 5, regression_degree: 2 };
        let field =
            mc_representation(&problem, &chars, &basis, &[0.0, 0.5], &[0.3, 0.6], &config).unwrap();
        assert!(field.failures.is_empty());
        for v in &field.u {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mc_deterministic_snell_envelope() {
        let mut problem = zero_problem(0.0);
        problem.obstacle = Some(Arc::new(|t, _| 0.9 * (1.0 - t)));
        let chars = unit_atom_chars(1.0, 0.2);
        let basis = build_basis(&chars).unwrap();
        let config = McConfig { n_paths: 64, n_steps: 32, seed: 6, regression_degree: 2 };
        let field =
            mc_representation(&problem, &chars, &basis, &[0.0, 0.25], &[0.4, 0.7], &config)
                .unwrap();
        for (ti, &t) in field.t_points.clone().iter().enumerate() {
            for xi in 0..field.x_points.len() {
                assert_abs_diff_eq!(field.at(ti, xi), 0.9 * (1.0 - t), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn compare_report_trivial_cases() {
        let mk = |vals: Vec<f64>, se: Vec<f64>| SolutionField {
            t_points: vec![0.0, 0.5],
            x_points: vec![0.3, 0.6],
            u: vals,
            se,
            failures: vec![],
            continuity_modulus: 0.0,
            p4_moment: 0.0,
        };
        let a = mk(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]);
        let rep = compare_report(&a, &a, 0.01);
        assert!(rep.all_pass);
        assert_eq!(rep.max_diff, 0.0);
        let shifted = mk(vec![1.5, 2.5, 3.5, 4.5], vec![0.0; 4]);
        let rep = compare_report(&shifted, &a, 0.01);
        assert!(!rep.all_pass);
        assert_abs_diff_eq!(rep.max_diff, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn validation_rejects_structural_violations() {
        let (problem, chars) = standard_model();
        // Brownian part
        let mut with_c = chars.clone();
        with_c.diffusion = TimeFn::Const(0.5);
        assert!(problem.validate(&with_c).is_err());
        // oversized jumps
        let big = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.5, 1.0)],
            Modulation::Proportional,
        );
        assert!(problem.validate(&big).is_err());
        // obstacle above terminal
        let mut bad = problem.clone();
        bad.obstacle = Some(Arc::new(|_, _| 5.0));
        assert!(bad.validate(&chars).is_err());
        // the standard model itself is fine
        problem.validate(&chars).unwrap();
    }
}
