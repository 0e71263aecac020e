//! Backward solvers for (reflected) generalized doubly stochastic equations
//! driven by the orthonormalized martingale basis.
//!
//! The discrete step over `[tau_i, tau_{i+1}]` is
//!
//! ```text
//! Z_i^k  = E[ Y_{i+1} dH_i^k | G_i ] / int_i gamma_k^2
//! Yhat_i = E[ Y_{i+1} | G_i ] + g_i dB_i + f(tau_i, ., Y_i, Z_i) dt + h(tau_i, ., Y_i) dkappa_i
//! Y_i    = max(Yhat_i, S_i),   dK_i = Y_i - Yhat_i
//! ```
//!
//! with the y-implicit part solved as a resolvent equation, so monotone
//! non-Lipschitz drivers are stepped without a contraction condition. The
//! conditional expectation is exact (pathwise) for problems with no state
//! randomness and a polynomial least-squares projection otherwise; the
//! backward-integral term stays pathwise in both cases.

pub mod regression;
pub mod yosida;

mod norms;
mod picard;


pub use norms::{apriori_check, weighted_norms, AprioriReport, NormReport, WeightProcess};
pub use picard::{picard_solve, PicardInit, PicardOutcome};
pub use regression::CondExpectation;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::PathBatch;
use crate::reflect::ReflectedPath;
use crate::timefn::TimeFn;
use std::sync::Arc;

/// Everything a driver may see at one node of one path.
#[derive(Clone, Copy, Debug)]
pub struct StepCtx<'a> {
    pub t: f64,
    pub state: &'a [f64],
    pub kappa: f64,
}

pub type ScalarField = Arc<dyn Fn(&StepCtx) -> f64 + Send + Sync>;
pub type DriverF = Arc<dyn Fn(&StepCtx, f64, &[f64]) -> f64 + Send + Sync>;
pub type DriverH = Arc<dyn Fn(&StepCtx, f64) -> f64 + Send + Sync>;
pub type DriverG = Arc<dyn Fn(&StepCtx, f64, &[f64]) -> f64 + Send + Sync>;

/// Declared structural bounds of the drivers; spot-checked on probes and
/// used to build the weight process.
#[derive(Clone, Debug)]
pub struct DriverBounds {
    /// Monotonicity constant of `f` in `y`.
    pub lambda: TimeFn,
    /// Monotonicity constant of `h` in `y` (negative where `kappa` charges).
    pub varrho: TimeFn,
    /// Lipschitz constant of `f` in `z` (against the scaled norm).
    pub eta: TimeFn,
    /// `y`-Lipschitz constant of `|g|^2`.
    pub rho: TimeFn,
    /// `z`-contraction constant of `|g|^2`; must stay below 1/2.
    pub alpha: f64,
    /// `|h|` growth slope.
    pub zeta: f64,
    /// State-free growth level of `f`.
    pub phi: TimeFn,
    /// `|y|` growth slope of `f`.
    pub phi_hat: TimeFn,
    /// State-free growth level of `h`.
    pub psi: TimeFn,
    /// Floor for the weight density `a^2`.
    pub epsilon: f64,
}

impl Default for DriverBounds {
    fn default() -> Self {
        DriverBounds {
            lambda: TimeFn::Const(0.0),
            varrho: TimeFn::Const(0.0),
            eta: TimeFn::Const(0.0),
            rho: TimeFn::Const(0.0),
            alpha: 0.25,
            zeta: 0.0,
            phi: TimeFn::Const(0.0),
            phi_hat: TimeFn::Const(0.0),
            psi: TimeFn::Const(0.0),
            epsilon: 1e-6,
        }
    }
}

impl DriverBounds {
    /// Weight density `a^2(t) = |lambda| + phi_hat + phi_hat^2 + rho + eta^2`,
    /// floored at `epsilon`.
    pub fn a_squared(&self, t: f64) -> f64 {
        let ph = self.phi_hat.eval(t);
        (self.lambda.eval(t).abs() + ph + ph * ph + self.rho.eval(t) + self.eta.eval(t).powi(2))
            .max(self.epsilon)
    }
}

/// Driver triple with its declared bounds.
#[derive(Clone)]
pub struct DriverSet {
    pub f: DriverF,
    pub h: DriverH,
    pub g: DriverG,
    pub bounds: DriverBounds,
}

impl DriverSet {
    /// Drivers that vanish identically.
    pub fn zero() -> Self {
        DriverSet {
            f: Arc::new(|_, _, _| 0.0),
            h: Arc::new(|_, _| 0.0),
            g: Arc::new(|_, _, _| 0.0),
            bounds: DriverBounds::default(),
        }
    }
}

/// Where the nondecreasing integrator `kappa` comes from.
#[derive(Clone)]
pub enum KappaSource {
    Zero,
    /// Deterministic cumulative `kappa(t)`, shared by all paths.
    Deterministic(TimeFn),
    /// Boundary local time of solved reflected paths (also supplies the state).
    Reflected,
}

/// Problem data for one solve.
#[derive(Clone)]
pub struct Problem {
    pub drivers: DriverSet,
    pub terminal: ScalarField,
    pub obstacle: Option<ScalarField>,
}

impl Problem {
    pub fn new(drivers: DriverSet, terminal: ScalarField) -> Self {
        Problem { drivers, terminal, obstacle: None }
    }

    pub fn with_obstacle(mut self, obstacle: ScalarField) -> Self {
        self.obstacle = Some(obstacle);
        self
    }
}

/// Flattened per-path data consumed by the backward sweep.
#[derive(Clone, Debug)]
pub struct ProblemPaths {
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub state_dim: usize,
    /// `[path][node][coord]`, empty when `state_dim = 0`.
    pub state: Vec<f64>,
    /// `[path][node]`.
    pub kappa: Vec<f64>,
    /// `[path][interval]`.
    pub db: Vec<f64>,
    /// `[path][interval][k]`.
    pub dh: Vec<f64>,
    /// `int_i gamma^2 ds` per interval.
    pub gamma_sq: Vec<f64>,
}

impl ProblemPaths {
    /// Assemble from simulated noise. The forward state is either absent,
    /// the raw noise path itself, or externally solved reflected paths
    /// (which then also provide `kappa`).
    pub fn assemble(
        batch: &PathBatch,
        kappa: &KappaSource,
        reflected: Option<&[ReflectedPath]>,
        use_levy_state: bool,
    ) -> Result<Self> {
        let n = batch.grid.n_steps();
        let n_paths = batch.paths.len();
        let dim = batch.dim;
        let mut state_dim = 0;
        let mut state = Vec::new();
        if let Some(rp) = reflected {
            if rp.len() != n_paths {
                return Err(Error::LengthMismatch { expected: n_paths, got: rp.len() });
            }
            state_dim = rp[0].dim;
            state.reserve(n_paths * (n + 1) * state_dim);
            for p in rp {
                state.extend_from_slice(&p.x);
            }
        } else if use_levy_state {
            state_dim = 1;
            state.reserve(n_paths * (n + 1));
            for p in &batch.paths {
                state.extend_from_slice(&p.l_values);
            }
        }
        let mut kap = vec![0.0; n_paths * (n + 1)];
        match kappa {
            KappaSource::Zero => {}
            KappaSource::Deterministic(f) => {
                for p in 0..n_paths {
                    for (j, &t) in batch.grid.nodes.iter().enumerate() {
                        kap[p * (n + 1) + j] = f.eval(t) - f.eval(batch.grid.t0());
                    }
                }
            }
            KappaSource::Reflected => {
                let rp = reflected.ok_or_else(|| {
                    Error::InvalidConfig("reflected kappa source needs reflected paths".into())
                })?;
                for (p, path) in rp.iter().enumerate() {
                    kap[p * (n + 1)..(p + 1) * (n + 1)].copy_from_slice(&path.kappa);
                }
            }
        }
        let mut db = Vec::with_capacity(n_paths * n);
        let mut dh = Vec::with_capacity(n_paths * n * dim);
        for p in &batch.paths {
            db.extend_from_slice(&p.db);
            dh.extend_from_slice(&p.dh);
        }
        Ok(ProblemPaths {
            grid: batch.grid.clone(),
            dim,
            n_paths,
            state_dim,
            state,
            kappa: kap,
            db,
            dh,
            gamma_sq: batch.gamma_sq.clone(),
        })
    }

    /// Stateless single-path data with silent noise; for deterministic
    /// recursions (unit tests, closed-form checks).
    pub fn deterministic(grid: &TimeGrid, kappa: &KappaSource) -> Result<Self> {
        let n = grid.n_steps();
        let mut kap = vec![0.0; n + 1];
        if let KappaSource::Deterministic(f) = kappa {
            for (j, &t) in grid.nodes.iter().enumerate() {
                kap[j] = f.eval(t) - f.eval(grid.t0());
            }
        }
        Ok(ProblemPaths {
            grid: grid.clone(),
            dim: 1,
            n_paths: 1,
            state_dim: 0,
            state: Vec::new(),
            kappa: kap,
            db: vec![0.0; n],
            dh: vec![0.0; n],
            gamma_sq: (0..n).map(|i| grid.dt(i)).collect(),
        })
    }

    pub fn ctx(&self, path: usize, node: usize) -> StepCtx<'_> {
        let n1 = self.grid.n_steps() + 1;
        let state = if self.state_dim == 0 {
            &[][..]
        } else {
            let base = (path * n1 + node) * self.state_dim;
            &self.state[base..base + self.state_dim]
        };
        StepCtx { t: self.grid.nodes[node], state, kappa: self.kappa[path * n1 + node] }
    }

    pub fn dkappa(&self, path: usize, interval: usize) -> f64 {
        let n1 = self.grid.n_steps() + 1;
        self.kappa[path * n1 + interval + 1] - self.kappa[path * n1 + interval]
    }

    fn db_at(&self, path: usize, interval: usize) -> f64 {
        self.db[path * self.grid.n_steps() + interval]
    }

    fn dh_at(&self, path: usize, interval: usize, k: usize) -> f64 {
        self.dh[(path * self.grid.n_steps() + interval) * self.dim + k]
    }
}

/// Scheme configuration.
#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub ce: CondExpectation,
    /// Weight exponents used for norms and Picard residuals.
    pub theta: f64,
    pub mu: f64,
    pub root_tol: f64,
    pub reflect_tol: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            ce: CondExpectation::Regression { degree: 2 },
            theta: 8.0,
            mu: 1.0,
            root_tol: 1e-12,
            reflect_tol: 1e-8,
        }
    }
}

/// Discrete solution triple with diagnostics.
#[derive(Clone, Debug)]
pub struct SolutionGrid {
    pub n_paths: usize,
    pub dim: usize,
    /// `[path][node]`.
    pub y: Vec<f64>,
    /// `[path][interval][k]`.
    pub z: Vec<f64>,
    /// `[path][node]`, nondecreasing from zero.
    pub k: Vec<f64>,
    /// `sum_i (Y_i - S_i) dK_i` averaged over paths.
    pub skorokhod_defect: f64,
    /// Standard error proxy for the value at the first node.
    pub y0_standard_error: f64,
}

impl SolutionGrid {
    pub fn y_at(&self, path: usize, node: usize, n_nodes: usize) -> f64 {
        self.y[path * n_nodes + node]
    }

    pub fn y0_mean(&self) -> f64 {
        let n_nodes = self.y.len() / self.n_paths;
        (0..self.n_paths).map(|p| self.y[p * n_nodes]).sum::<f64>() / self.n_paths as f64
    }
}

/// Pathwise values of the backward-integral coefficient, one per
/// `(path, interval)`, evaluated at the right endpoint.
pub fn freeze_g(
    problem: &Problem,
    paths: &ProblemPaths,
    y: Option<&[f64]>,
    z: Option<&[f64]>,
) -> Vec<f64> {
    let n = paths.grid.n_steps();
    let mut out = vec![0.0; paths.n_paths * n];
    let zeros = vec![0.0; paths.dim];
    for p in 0..paths.n_paths {
        for i in 0..n {
            let ctx = paths.ctx(p, i + 1);
            let yv = y.map(|rows| rows[p * (n + 1) + i + 1]).unwrap_or(0.0);
            let zv: &[f64] = match z {
                Some(rows) if i + 1 < n => &rows[(p * n + i + 1) * paths.dim..(p * n + i + 2) * paths.dim],
                _ => &zeros,
            };
            out[p * n + i] = (problem.drivers.g)(&ctx, yv, zv);
        }
    }
    out
}

/// One backward sweep with the generator's z-slot and the backward-integral
/// coefficient frozen pathwise (`g_frozen[path][interval]`); `z_frozen`
/// replaces the extracted `Z` inside `f` when given.
pub fn solve_inner(
    problem: &Problem,
    paths: &ProblemPaths,
    scheme: &SchemeConfig,
    g_frozen: &[f64],
    z_frozen: Option<&[f64]>,
) -> Result<SolutionGrid> {
    let n = paths.grid.n_steps();
    let n_paths = paths.n_paths;
    let dim = paths.dim;
    if g_frozen.len() != n_paths * n {
        return Err(Error::LengthMismatch { expected: n_paths * n, got: g_frozen.len() });
    }

    let mut y = vec![0.0; n_paths * (n + 1)];
    let mut z = vec![0.0; n_paths * n * dim];
    let mut dk = vec![0.0; n_paths * n];

    for p in 0..n_paths {
        let ctx = paths.ctx(p, n);
        let xi = (problem.terminal)(&ctx);
        if let Some(s) = &problem.obstacle {
            let st = s(&ctx);
            if xi < st - 1e-12 * (1.0 + st.abs()) {
                return Err(Error::InvalidConfig(format!(
                    "terminal value {xi} below the obstacle {st} at path {p}"
                )));
            }
        }
        y[p * (n + 1) + n] = xi;
    }

    // contraction budget for positive monotonicity constants
    let lam_sup = (0..=n)
        .map(|i| problem.drivers.bounds.lambda.eval(paths.grid.nodes[i]))
        .fold(0.0f64, f64::max);
    let dt_max = (0..n).map(|i| paths.grid.dt(i)).fold(0.0f64, f64::max);
    if lam_sup > 0.0 && lam_sup * dt_max >= 1.0 {
        return Err(Error::StepNotContractive { budget: lam_sup * dt_max });
    }

    let mut se_proxy = 0.0;
    for i in (0..n).rev() {
        let dt = paths.grid.dt(i);
        // conditional expectations of Y_{i+1} and Y_{i+1} dH^k
        let mut cond_y = vec![0.0; n_paths];
        let mut cond_z = vec![0.0; n_paths * dim];
        match scheme.ce {
            CondExpectation::Pathwise => {
                for p in 0..n_paths {
                    cond_y[p] = y[p * (n + 1) + i + 1];
                }
                // martingale components vanish exactly under the true
                // conditional expectation; keep Z = 0
            }
            CondExpectation::Regression { degree } => {
                let mut targets: Vec<Vec<f64>> = Vec::with_capacity(1 + dim);
                targets.push((0..n_paths).map(|p| y[p * (n + 1) + i + 1]).collect());
                for k in 0..dim {
                    targets.push(
                        (0..n_paths)
                            .map(|p| y[p * (n + 1) + i + 1] * paths.dh_at(p, i, k))
                            .collect(),
                    );
                }
                let n1 = n + 1;
                let states: Vec<f64> = (0..n_paths)
                    .flat_map(|p| {
                        let base = (p * n1 + i) * paths.state_dim;
                        paths.state[base..base + paths.state_dim].iter().copied()
                    })
                    .collect();
                if paths.state_dim == 0 {
                    return Err(Error::InvalidConfig(
                        "regression mode needs a forward state; use pathwise mode".into(),
                    ));
                }
                let fit = regression::fit_targets(&states, paths.state_dim, degree, &targets)?;
                for p in 0..n_paths {
                    cond_y[p] = fit.values[p * fit.n_targets];
                    for k in 0..dim {
                        cond_z[p * dim + k] = fit.values[p * fit.n_targets + 1 + k]
                            / paths.gamma_sq[i].max(1e-300);
                    }
                }
            }
        }

        for p in 0..n_paths {
            let ctx = paths.ctx(p, i);
            let dkap = paths.dkappa(p, i);
            let rhs = cond_y[p] + g_frozen[p * n + i] * paths.db_at(p, i);
            let z_row: &[f64] = match z_frozen {
                Some(rows) => &rows[(p * n + i) * dim..(p * n + i + 1) * dim],
                None => &cond_z[p * dim..(p + 1) * dim],
            };
            let f = &problem.drivers.f;
            let h = &problem.drivers.h;
            let map = |yv: f64| yv - dt * f(&ctx, yv, z_row) - dkap * h(&ctx, yv);
            let y_hat = yosida::solve_increasing(&map, rhs, rhs, scheme.root_tol)?;
            let (y_i, dki) = match &problem.obstacle {
                Some(s) => {
                    let st = s(&ctx);
                    if y_hat < st {
                        (st, st - y_hat)
                    } else {
                        (y_hat, 0.0)
                    }
                }
                None => (y_hat, 0.0),
            };
            y[p * (n + 1) + i] = y_i;
            dk[p * n + i] = dki;
            z[(p * n + i) * dim..(p * n + i + 1) * dim].copy_from_slice(&cond_z[p * dim..(p + 1) * dim]);
            if i == 0 {
                // sampling error of the first-node mean: the regression
                // collapses to a plain average when the start state is a
                // point, so the target spread is the right scale
                se_proxy += (y[p * (n + 1) + 1] + g_frozen[p * n + i] * paths.db_at(p, i)).powi(2);
            }
        }
    }

    // cumulative K and the Skorokhod defect
    let mut k = vec![0.0; n_paths * (n + 1)];
    let mut defect = 0.0;
    for p in 0..n_paths {
        let mut acc = 0.0;
        for i in 0..n {
            let s_val = problem
                .obstacle
                .as_ref()
                .map(|s| s(&paths.ctx(p, i)))
                .unwrap_or(f64::NEG_INFINITY);
            if problem.obstacle.is_some() {
                defect += (y[p * (n + 1) + i] - s_val) * dk[p * n + i];
            }
            acc += dk[p * n + i];
            k[p * (n + 1) + i + 1] = acc;
        }
    }
    defect /= n_paths as f64;

    // crude standard error of the first-node estimate from the final target
    let y0_mean = (0..n_paths).map(|p| y[p * (n + 1)]).sum::<f64>() / n_paths as f64;
    let var = (0..n_paths)
        .map(|p| (y[p * (n + 1)] - y0_mean).powi(2))
        .sum::<f64>()
        / (n_paths.max(2) - 1) as f64;
    let se_from_targets = {
        let mean_t = se_proxy / n_paths as f64;
        (mean_t - y0_mean * y0_mean).max(0.0) / n_paths as f64
    };
    let y0_se = (var / n_paths as f64).max(se_from_targets).sqrt();

    Ok(SolutionGrid {
        n_paths,
        dim,
        y,
        z,
        k,
        skorokhod_defect: defect,
        y0_standard_error: y0_se,
    })
}

/// Solve with `g` independent of `(y, z)` and `f` explicit in `z`.
pub fn solve_lipschitz(
    problem: &Problem,
    paths: &ProblemPaths,
    scheme: &SchemeConfig,
) -> Result<SolutionGrid> {
    if problem.obstacle.is_some() {
        return Err(Error::InvalidConfig("use solve_reflected for obstacle problems".into()));
    }
    let g_frozen = freeze_g(problem, paths, None, None);
    solve_inner(problem, paths, scheme, &g_frozen, None)
}

/// Reflected variant: projection on the obstacle with minimal push.
pub fn solve_reflected(
    problem: &Problem,
    paths: &ProblemPaths,
    scheme: &SchemeConfig,
) -> Result<SolutionGrid> {
    if problem.obstacle.is_none() {
        return Err(Error::InvalidConfig("solve_reflected needs an obstacle".into()));
    }
    let g_frozen = freeze_g(problem, paths, None, None);
    solve_inner(problem, paths, scheme, &g_frozen, None)
}

/// Per-node mean of the full backward-equation residual, with its standard
/// error; a martingale-consistency diagnostic.
pub fn residual_by_node(
    problem: &Problem,
    paths: &ProblemPaths,
    solution: &SolutionGrid,
    g_frozen: &[f64],
) -> Vec<(f64, f64)> {
    let n = paths.grid.n_steps();
    let n_paths = paths.n_paths;
    let dim = paths.dim;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for p in 0..n_paths {
            let ctx = paths.ctx(p, i);
            let z_row = &solution.z[(p * n + i) * dim..(p * n + i + 1) * dim];
            let dki = solution.k[p * (n + 1) + i + 1] - solution.k[p * (n + 1) + i];
            let mut res = solution.y[p * (n + 1) + i]
                - solution.y[p * (n + 1) + i + 1]
                - paths.grid.dt(i)
                    * (problem.drivers.f)(&ctx, solution.y[p * (n + 1) + i], z_row)
                - paths.dkappa(p, i) * (problem.drivers.h)(&ctx, solution.y[p * (n + 1) + i])
                - g_frozen[p * n + i] * paths.db_at(p, i)
                - dki;
            for k in 0..dim {
                res += z_row[k] * paths.dh_at(p, i, k);
            }
            mean += res;
            m2 += res * res;
        }
        mean /= n_paths as f64;
        let var = (m2 / n_paths as f64 - mean * mean).max(0.0);
        out.push((mean, (var / n_paths as f64).sqrt()));
    }
    out
}

/// Probe-based validation of the declared driver bounds; a violation is a
/// configuration error. The monotonicity bound of `h` is checked only where
/// `kappa` actually charges mass.
pub fn validate_drivers(
    problem: &Problem,
    paths: &ProblemPaths,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    use rand::Rng;
    let mut rng = crate::paths::stream_rng(seed, 17, 0, 5);
    let b = &problem.drivers.bounds;
    if !(b.alpha > 0.0 && b.alpha < 0.5) {
        return Err(Error::InvalidConfig(format!("alpha = {} outside (0, 1/2)", b.alpha)));
    }
    let n = paths.grid.n_steps();
    let kappa_active = (0..paths.n_paths)
        .any(|p| (0..n).any(|i| paths.dkappa(p, i) > 0.0));
    let tol = 1e-9;
    for _ in 0..n_probes {
        let p = rng.gen_range(0..paths.n_paths);
        let node = rng.gen_range(0..=n);
        let ctx = paths.ctx(p, node);
        let t = ctx.t;
        let y1 = rng.gen_range(-3.0..3.0);
        let y2 = rng.gen_range(-3.0..3.0);
        let mut z1 = vec![0.0; paths.dim];
        let mut z2 = vec![0.0; paths.dim];
        for v in z1.iter_mut().chain(z2.iter_mut()) {
            *v = rng.gen_range(-2.0..2.0);
        }
        let f = &problem.drivers.f;
        let g = &problem.drivers.g;
        let h = &problem.drivers.h;
        let gamma_sq = paths.gamma_sq[node.min(n - 1)] / paths.grid.dt(node.min(n - 1));
        let gnorm = |za: &[f64], zb: &[f64]| -> f64 {
            za.iter()
                .zip(zb)
                .map(|(a, bb)| gamma_sq * (a - bb) * (a - bb))
                .sum::<f64>()
                .sqrt()
        };
        // monotonicity of f in y
        let lhs = (y1 - y2) * (f(&ctx, y1, &z1) - f(&ctx, y2, &z1));
        if lhs > b.lambda.eval(t) * (y1 - y2) * (y1 - y2) + tol {
            return Err(Error::InvalidConfig(format!(
                "f violates the declared monotonicity bound at t = {t}: {lhs}"
            )));
        }
        // z-Lipschitz of f
        let df = (f(&ctx, y1, &z1) - f(&ctx, y1, &z2)).abs();
        if df > b.eta.eval(t) * gnorm(&z1, &z2) + tol {
            return Err(Error::InvalidConfig(format!(
                "f violates the declared z-Lipschitz bound at t = {t}"
            )));
        }
        // g contraction
        let dg = g(&ctx, y1, &z1) - g(&ctx, y2, &z2);
        let bound = b.rho.eval(t) * (y1 - y2) * (y1 - y2)
            + b.alpha * z1.iter().zip(&z2).map(|(a, c)| gamma_sq * (a - c) * (a - c)).sum::<f64>();
        if dg * dg > bound + tol {
            return Err(Error::InvalidConfig(format!(
                "g violates the declared contraction bound at t = {t}"
            )));
        }
        // growth
        let zeros = vec![0.0; paths.dim];
        if f(&ctx, y1, &zeros).abs() > b.phi.eval(t) + b.phi_hat.eval(t) * y1.abs() + tol {
            return Err(Error::InvalidConfig(format!("f violates the declared growth at t = {t}")));
        }
        if h(&ctx, y1).abs() > b.psi.eval(t) + b.zeta * y1.abs() + tol {
            return Err(Error::InvalidConfig(format!("h violates the declared growth at t = {t}")));
        }
        // monotonicity of h where kappa charges
        if kappa_active {
            let dh = (y1 - y2) * (h(&ctx, y1) - h(&ctx, y2));
            if dh > b.varrho.eval(t) * (y1 - y2) * (y1 - y2) + tol {
                return Err(Error::InvalidConfig(format!(
                    "h violates the declared monotonicity bound at t = {t}"
                )));
            }
        }
    }
    Ok(())
}

/// Comparison report between two coupled solves.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub violation_fraction: f64,
    pub max_violation: f64,
    pub y0_gap: f64,
}

/// Solve both problems on the shared paths and report where the first
/// solution exceeds the second. Preconditions (ordered terminals, ordered
/// `f`) are probed first.
pub fn compare_solutions(
    problem_lo: &Problem,
    problem_hi: &Problem,
    paths: &ProblemPaths,
    scheme: &SchemeConfig,
    comparison_tol: f64,
) -> Result<ComparisonReport> {
    use rand::Rng;
    let mut rng = crate::paths::stream_rng(3, 1, 4, 1);
    let n = paths.grid.n_steps();
    for p in 0..paths.n_paths {
        let ctx = paths.ctx(p, n);
        if (problem_lo.terminal)(&ctx) > (problem_hi.terminal)(&ctx) + 1e-12 {
            return Err(Error::InvalidConfig("terminal ordering violated".into()));
        }
    }
    for _ in 0..256 {
        let p = rng.gen_range(0..paths.n_paths);
        let node = rng.gen_range(0..=n);
        let ctx = paths.ctx(p, node);
        let y = rng.gen_range(-3.0..3.0);
        let z = vec![rng.gen_range(-2.0..2.0); paths.dim];
        if (problem_lo.drivers.f)(&ctx, y, &z) > (problem_hi.drivers.f)(&ctx, y, &z) + 1e-12 {
            return Err(Error::InvalidConfig("driver ordering violated".into()));
        }
    }
    let lo = if problem_lo.obstacle.is_some() {
        solve_reflected(problem_lo, paths, scheme)?
    } else {
        solve_lipschitz(problem_lo, paths, scheme)?
    };
    let hi = if problem_hi.obstacle.is_some() {
        solve_reflected(problem_hi, paths, scheme)?
    } else {
        solve_lipschitz(problem_hi, paths, scheme)?
    };
    let mut violations = 0usize;
    let mut max_violation = 0.0f64;
    let total = paths.n_paths * (n + 1);
    for idx in 0..total {
        let gap = lo.y[idx] - hi.y[idx];
        if gap > comparison_tol {
            violations += 1;
            max_violation = max_violation.max(gap);
        }
    }
    Ok(ComparisonReport {
        violation_fraction: violations as f64 / total as f64,
        max_violation,
        y0_gap: hi.y0_mean() - lo.y0_mean(),
    })
}

/// Exponential change of variables that removes the `lambda` monotonicity
/// constant (and shifts the `h` constant by `-mu_shift`): solving the
/// transformed problem and mapping back through `unmap` reproduces the
/// original solution up to scheme error.
pub struct ZeroLambdaMap {
    pub lambda_integral: TimeFn,
    pub mu_shift: f64,
    pub t0: f64,
}

impl ZeroLambdaMap {
    pub fn weight(&self, ctx: &StepCtx) -> f64 {
        (self.lambda_integral.eval(ctx.t) - self.lambda_integral.eval(self.t0)
            + self.mu_shift * ctx.kappa)
            .exp()
    }

    /// Map a transformed solution back to the original variables.
    pub fn unmap(&self, paths: &ProblemPaths, solution: &mut SolutionGrid) {
        let n = paths.grid.n_steps();
        for p in 0..solution.n_paths {
            for node in 0..=n {
                let w = self.weight(&paths.ctx(p, node));
                solution.y[p * (n + 1) + node] /= w;
            }
            for i in 0..n {
                let w = self.weight(&paths.ctx(p, i));
                for k in 0..solution.dim {
                    solution.z[(p * n + i) * solution.dim + k] /= w;
                }
            }
            let mut acc = 0.0;
            for i in 0..n {
                let w = self.weight(&paths.ctx(p, i));
                let dk = solution.k[p * (n + 1) + i + 1] - solution.k[p * (n + 1) + i];
                acc += dk / w;
                solution.k[p * (n + 1) + i + 1] = acc;
            }
        }
    }
}

/// Build the transformed problem of the exponential change of variables.
/// `lambda_integral` must be the antiderivative of the declared `lambda`.
pub fn zero_lambda_transform(
    problem: &Problem,
    lambda_integral: TimeFn,
    mu_shift: f64,
    t0: f64,
) -> (Problem, ZeroLambdaMap) {
    let map = ZeroLambdaMap { lambda_integral: lambda_integral.clone(), mu_shift, t0 };
    let lam = problem.drivers.bounds.lambda.clone();
    let li = lambda_integral.clone();
    let weight = move |ctx: &StepCtx| -> f64 {
        (li.eval(ctx.t) - li.eval(t0) + mu_shift * ctx.kappa).exp()
    };
    let f0 = problem.drivers.f.clone();
    let w1 = weight.clone();
    let lam1 = lam.clone();
    let f: DriverF = Arc::new(move |ctx, y, z| {
        let w = w1(ctx);
        let zs: Vec<f64> = z.iter().map(|v| v / w).collect();
        w * f0(ctx, y / w, &zs) - lam1.eval(ctx.t) * y
    });
    let h0 = problem.drivers.h.clone();
    let w2 = weight.clone();
    let h: DriverH = Arc::new(move |ctx, y| {
        let w = w2(ctx);
        w * h0(ctx, y / w) - mu_shift * y
    });
    let g0 = problem.drivers.g.clone();
    let w3 = weight.clone();
    let g: DriverG = Arc::new(move |ctx, y, z| {
        let w = w3(ctx);
        let zs: Vec<f64> = z.iter().map(|v| v / w).collect();
        w * g0(ctx, y / w, &zs)
    });
    let term0 = problem.terminal.clone();
    let w4 = weight.clone();
    let terminal: ScalarField = Arc::new(move |ctx| w4(ctx) * term0(ctx));
    let obstacle = problem.obstacle.clone().map(|s0| {
        let w5 = weight.clone();
        let s: ScalarField = Arc::new(move |ctx| w5(ctx) * s0(ctx));
        s
    });
    let mut bounds = problem.drivers.bounds.clone();
    bounds.lambda = TimeFn::Const(0.0);
    (
        Problem {
            drivers: DriverSet { f, h, g, bounds },
            terminal,
            obstacle,
        },
        map,
    )
}
