//! Pathwise flow of the backward Brownian driver and the transformed
//! coefficients that remove the stochastic integral.
//!
//! The flow solves `chi(t,x,y) = y + int_t^T g(s,x,chi(s,x,y)) o dB_s` in
//! the Stratonovich sense. Numerically the Brownian path is taken piecewise
//! linear on the grid (whose limit is the Stratonovich solution) and each
//! interval ODE is integrated by Runge-Kutta substeps together with its
//! y-variational equation, so the tabulated derivative is independent of
//! finite differencing.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::levy::LevyCharacteristics;

/// `g(t, x, y)` driving the flow.
pub type FlowDriver = dyn Fn(f64, f64, f64) -> f64 + Sync;

/// Targeted Brownian increment per Runge-Kutta substep; the default keeps
/// interval errors near 1e-12 for smooth `g`.
pub const DEFAULT_RESOLUTION: f64 = 0.0125;

fn g_dy(g: &FlowDriver, t: f64, x: f64, y: f64) -> f64 {
    let h = 1e-5 * (1.0 + y.abs());
    (g(t, x, y + h) - g(t, x, y - h)) / (2.0 * h)
}

/// Integrate `(chi, D_y chi)` across one interval, from the right node to
/// the left one, along a linear Brownian segment with increment `db`.
fn flow_interval_step(
    g: &FlowDriver,
    t_right: f64,
    dt: f64,
    db: f64,
    x: f64,
    chi: &mut f64,
    dychi: &mut f64,
    resolution: f64,
) {
    if db == 0.0 {
        return;
    }
    let m = ((db.abs() / resolution).ceil() as usize).max(4);
    let slope = db / dt;
    let h = dt / m as f64;
    // state u = (chi, dychi); du/dv = (g(t, x, chi) slope, g_y(t, x, chi) slope dychi)
    // with t = t_right - v
    for step in 0..m {
        let v0 = step as f64 * h;
        let t_at = |v: f64| t_right - v;
        let f1c = g(t_at(v0), x, *chi) * slope;
        let f1d = g_dy(g, t_at(v0), x, *chi) * slope * *dychi;
        let f2c = g(t_at(v0 + 0.5 * h), x, *chi + 0.5 * h * f1c) * slope;
        let f2d = g_dy(g, t_at(v0 + 0.5 * h), x, *chi + 0.5 * h * f1c)
            * slope
            * (*dychi + 0.5 * h * f1d);
        let f3c = g(t_at(v0 + 0.5 * h), x, *chi + 0.5 * h * f2c) * slope;
        let f3d = g_dy(g, t_at(v0 + 0.5 * h), x, *chi + 0.5 * h * f2c)
            * slope
            * (*dychi + 0.5 * h * f2d);
        let f4c = g(t_at(v0 + h), x, *chi + h * f3c) * slope;
        let f4d = g_dy(g, t_at(v0 + h), x, *chi + h * f3c) * slope * (*dychi + h * f3d);
        *chi += h / 6.0 * (f1c + 2.0 * f2c + 2.0 * f3c + f4c);
        *dychi += h / 6.0 * (f1d + 2.0 * f2d + 2.0 * f3d + f4d);
    }
}

/// Evaluate the flow along one Brownian path at a single `(x, y)`, returning
/// `(chi, D_y chi)` at every grid node.
pub fn flow_chi(
    g: &FlowDriver,
    grid: &TimeGrid,
    db: &[f64],
    x: f64,
    y: f64,
    resolution: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.n_steps();
    if db.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: db.len() });
    }
    let mut chi = vec![0.0; n + 1];
    let mut dychi = vec![0.0; n + 1];
    chi[n] = y;
    dychi[n] = 1.0;
    let mut c = y;
    let mut d = 1.0;
    for i in (0..n).rev() {
        flow_interval_step(g, grid.nodes[i + 1], grid.dt(i), db[i], x, &mut c, &mut d, resolution);
        chi[i] = c;
        dychi[i] = d;
        if d <= 0.0 {
            return Err(Error::Numerical(format!(
                "flow derivative lost positivity at node {i} (D_y chi = {d})"
            )));
        }
    }
    Ok((chi, dychi))
}

/// Tabulated flow on a `(t-node, x, y)` lattice for one Brownian path.
pub struct FlowField {
    pub grid: TimeGrid,
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    /// `[node][x][y]`.
    pub chi: Vec<f64>,
    /// `[node][x][y]`.
    pub dychi: Vec<f64>,
}

impl FlowField {
    pub fn tabulate(
        g: &FlowDriver,
        grid: &TimeGrid,
        db: &[f64],
        x_grid: Vec<f64>,
        y_grid: Vec<f64>,
        resolution: f64,
    ) -> Result<FlowField> {
        let n = grid.n_steps();
        if db.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: db.len() });
        }
        let nx = x_grid.len();
        let ny = y_grid.len();
        let mut chi = vec![0.0; (n + 1) * nx * ny];
        let mut dychi = vec![0.0; (n + 1) * nx * ny];
        for (xi, &x) in x_grid.iter().enumerate() {
            for (yi, &y) in y_grid.iter().enumerate() {
                let mut c = y;
                let mut d = 1.0;
                chi[(n * nx + xi) * ny + yi] = c;
                dychi[(n * nx + xi) * ny + yi] = d;
                for i in (0..n).rev() {
                    flow_interval_step(
                        g,
                        grid.nodes[i + 1],
                        grid.dt(i),
                        db[i],
                        x,
                        &mut c,
                        &mut d,
                        resolution,
                    );
                    chi[(i * nx + xi) * ny + yi] = c;
                    dychi[(i * nx + xi) * ny + yi] = d;
                }
            }
        }
        let field = FlowField { grid: grid.clone(), x_grid, y_grid, chi, dychi };
        let min_d = field.dychi.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_d <= 0.0 {
            return Err(Error::Numerical(format!(
                "flow derivative lost positivity on the lattice (min D_y chi = {min_d})"
            )));
        }
        Ok(field)
    }

    fn x_index(&self, x: f64) -> Result<usize> {
        let nx = self.x_grid.len();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &g) in self.x_grid.iter().enumerate() {
            let d = (g - x).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        if best_d > 1e-9 * (1.0 + x.abs()) && nx > 1 {
            return Err(Error::InvalidConfig(format!(
                "x = {x} is not a lattice point; tabulate the flow on the evaluation lattice"
            )));
        }
        Ok(best)
    }

    fn cell(&self, node: usize, xi: usize, yi: usize) -> (f64, f64) {
        let ny = self.y_grid.len();
        let idx = (node * self.x_grid.len() + xi) * ny + yi;
        (self.chi[idx], self.dychi[idx])
    }

    /// Monotone cubic Hermite interpolation of `y -> chi(node, x, y)`.
    pub fn chi_at(&self, node: usize, x: f64, y: f64) -> Result<f64> {
        let xi = self.x_index(x)?;
        Ok(self.hermite(node, xi, y).0)
    }

    pub fn dychi_at(&self, node: usize, x: f64, y: f64) -> Result<f64> {
        let xi = self.x_index(x)?;
        Ok(self.hermite(node, xi, y).1)
    }

    fn hermite(&self, node: usize, xi: usize, y: f64) -> (f64, f64) {
        let yg = &self.y_grid;
        let ny = yg.len();
        if y <= yg[0] {
            let (c, d) = self.cell(node, xi, 0);
            return (c + d * (y - yg[0]), d);
        }
        if y >= yg[ny - 1] {
            let (c, d) = self.cell(node, xi, ny - 1);
            return (c + d * (y - yg[ny - 1]), d);
        }
        let j = yg.partition_point(|v| *v <= y).min(ny - 1) - 1;
        let (c0, d0) = self.cell(node, xi, j);
        let (c1, d1) = self.cell(node, xi, j + 1);
        let h = yg[j + 1] - yg[j];
        let s = (y - yg[j]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let value = h00 * c0 + h10 * h * d0 + h01 * c1 + h11 * h * d1;
        let dh00 = 6.0 * s * (s - 1.0) / h;
        let dh10 = (1.0 - s) * (1.0 - 3.0 * s);
        let dh01 = -6.0 * s * (s - 1.0) / h;
        let dh11 = s * (3.0 * s - 2.0);
        let deriv = dh00 * c0 + dh10 * d0 + dh01 * c1 + dh11 * d1;
        (value, deriv)
    }

    /// `y`-inverse: the unique `v` with `chi(node, x, v) = y`, by bracketed
    /// Newton on the monotone interpolant; residual below 1e-9.
    pub fn pi_at(&self, node: usize, x: f64, y: f64) -> Result<f64> {
        let xi = self.x_index(x)?;
        let ny = self.y_grid.len();
        let lo_val = self.cell(node, xi, 0).0;
        let hi_val = self.cell(node, xi, ny - 1).0;
        let (mut lo, mut hi);
        if y < lo_val {
            // linear extension below the table
            let d = self.cell(node, xi, 0).1;
            return Ok(self.y_grid[0] + (y - lo_val) / d);
        } else if y > hi_val {
            let d = self.cell(node, xi, ny - 1).1;
            return Ok(self.y_grid[ny - 1] + (y - hi_val) / d);
        } else {
            let j = (0..ny - 1)
                .find(|&j| self.cell(node, xi, j).0 <= y && y <= self.cell(node, xi, j + 1).0)
                .ok_or_else(|| Error::Numerical("tabulated flow is not monotone".into()))?;
            lo = self.y_grid[j];
            hi = self.y_grid[j + 1];
        }
        let mut v = 0.5 * (lo + hi);
        for _ in 0..100 {
            let (c, d) = self.hermite(node, xi, v);
            let res = c - y;
            if res.abs() <= 1e-9 * (1.0 + y.abs()) {
                return Ok(v);
            }
            if res > 0.0 {
                hi = v;
            } else {
                lo = v;
            }
            let mut next = v - res / d.max(1e-12);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            v = next;
        }
        Ok(v)
    }

    /// Centered finite difference `D_x chi` on the lattice.
    pub fn dxchi_at(&self, node: usize, x: f64, y: f64) -> Result<f64> {
        let xi = self.x_index(x)?;
        let nx = self.x_grid.len();
        if nx == 1 {
            return Ok(0.0);
        }
        let (il, ir) = if xi == 0 {
            (0, 1)
        } else if xi == nx - 1 {
            (nx - 2, nx - 1)
        } else {
            (xi - 1, xi + 1)
        };
        let cl = self.hermite(node, il, y).0;
        let cr = self.hermite(node, ir, y).0;
        Ok((cr - cl) / (self.x_grid[ir] - self.x_grid[il]))
    }

    /// Remaining Brownian increment `B_T - B_t` is not stored here; the
    /// caller owns the path. This helper exposes the time index for a node
    /// value `t` on the grid.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        self.grid
            .nodes
            .iter()
            .position(|&v| (v - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::InvalidConfig(format!("t = {t} is not a grid node")))
    }
}

/// Transformed drift of the reduction: evaluates, at `(t-node, x, y, z)`,
///
/// ```text
/// (1/D_y chi) [ f(t, x, chi, (psi1_k)) - g D_y g / 2 + L^x chi
///               + sum_j ( chi(t, x + sigma e_j, phi(t, x + sigma e_j))
///                         - chi - (D_x chi + D_y chi z) sigma e_j ) lambda_j ]
/// ```
///
/// with the test field `phi` entering the shifted flow arguments and
/// `psi1_k` the basis projections of the same shifted differences.
#[allow(clippy::too_many_arguments)]
pub fn transformed_f(
    f: &dyn Fn(f64, f64, f64, &[f64]) -> f64,
    g: &FlowDriver,
    flow: &FlowField,
    basis: &crate::basis::MartingaleBasis,
    chars: &LevyCharacteristics,
    sigma: &dyn Fn(f64) -> f64,
    phi: &dyn Fn(f64, f64) -> f64,
    node: usize,
    x: f64,
    y: f64,
    z: f64,
) -> Result<f64> {
    let t = flow.grid.nodes[node];
    let chi = flow.chi_at(node, x, y)?;
    let dychi = flow.dychi_at(node, x, y)?;
    if dychi <= 0.0 {
        return Err(Error::Numerical("flow derivative is not positive".into()));
    }
    let dxchi = flow.dxchi_at(node, x, y)?;
    let s = sigma(x);

    // generator of the forward state applied to chi in x at frozen y
    let mut gen = chars.b(t) * s * dxchi;
    for atom in &chars.atoms {
        let shifted = flow.chi_at(node, x + s * atom.size, y)?;
        gen += (shifted - chi - dxchi * s * atom.size) * atom.intensity.eval(t);
    }

    // nonlocal differences with the test field inside the shifted flow
    let mut nonlocal = 0.0;
    let mut psi1 = vec![0.0; basis.dim];
    let hx = 1e-5 * (1.0 + x.abs());
    let dxphi = (phi(t, x + hx) - phi(t, x - hx)) / (2.0 * hx);
    for atom in &chars.atoms {
        let xs = x + s * atom.size;
        let shifted = flow.chi_at(node, xs, phi(t, xs))?;
        nonlocal += (shifted - chi - (dxchi + dychi * z) * s * atom.size) * atom.intensity.eval(t);
        for k in 0..basis.dim {
            psi1[k] += (shifted - chi - (dxchi + dychi * dxphi) * atom.size)
                * basis.p(k, atom.size)
                * atom.intensity.eval(t);
        }
    }

    let gval = g(t, x, chi);
    let gdy = g_dy(g, t, x, chi);
    Ok((f(t, x, chi, &psi1) - 0.5 * gval * gdy + gen + nonlocal) / dychi)
}

/// Transformed boundary coefficient
/// `h~ = (1/D_y chi) ( h(t, x, chi) + <D_x chi, grad psi> )` for boundary
/// points of a one-dimensional domain.
pub fn transformed_h(
    h: &dyn Fn(f64, f64, f64) -> f64,
    flow: &FlowField,
    grad_psi: f64,
    node: usize,
    x: f64,
    y: f64,
) -> Result<f64> {
    let t = flow.grid.nodes[node];
    let chi = flow.chi_at(node, x, y)?;
    let dychi = flow.dychi_at(node, x, y)?;
    if dychi <= 0.0 {
        return Err(Error::Numerical("flow derivative is not positive".into()));
    }
    let dxchi = flow.dxchi_at(node, x, y)?;
    Ok((h(t, x, chi) + dxchi * grad_psi) / dychi)
}
