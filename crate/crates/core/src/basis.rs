//! Orthonormalized power-jump martingale basis.
//!
//! Monomials `1, e, e^2, ...` are orthonormalized against the reference
//! measure `pi0 = c0 delta_0 + sum_j e_j^2 lambda_j delta_{e_j}` (weights
//! taken at `t = 0`, modulation normalized to `r(0) = 1`). The resulting
//! polynomials `q_n` define `p_n(e) = e q_n(e)` and the basis increments
//! carry all time dependence through the scaling `gamma(t) = sqrt(r(t))`.

use crate::error::{Error, Result};
use crate::levy::{LevyCharacteristics, Modulation};
use serde::Serialize;

const ORTHO_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-12;

/// Polynomials of the basis, as coefficient vectors in increasing degree.
#[derive(Clone, Debug, Serialize)]
pub struct BasisPolynomials {
    /// `q_n(e) = sum_k alpha_{n,k} e^{k-1}`, one vector per n.
    pub q: Vec<Vec<f64>>,
    /// `p_n(e) = e q_n(e)`.
    pub p: Vec<Vec<f64>>,
}

/// One support point of the reference measure.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeasurePoint {
    pub location: f64,
    pub weight: f64,
    /// Index into `LevyCharacteristics::atoms`, or `None` for the diffusion
    /// weight at the origin.
    pub atom_index: Option<usize>,
}

/// The orthonormalized basis built from a set of characteristics.
#[derive(Clone, Debug, Serialize)]
pub struct MartingaleBasis {
    /// Basis dimension: number of strictly positive quadrature weights.
    pub dim: usize,
    /// Lower-triangular orthonormalization coefficients `alpha[n][k]`,
    /// `k <= n`, with `alpha[n][n] > 0`.
    pub alpha: Vec<Vec<f64>>,
    pub polynomials: BasisPolynomials,
    pub reference_measure: Vec<MeasurePoint>,
    /// True when a rank drop was detected and the dimension was reduced.
    pub rank_reduced: bool,
    proportional: bool,
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl MartingaleBasis {
    pub fn q(&self, n: usize, e: f64) -> f64 {
        eval_poly(&self.polynomials.q[n], e)
    }

    pub fn p(&self, n: usize, e: f64) -> f64 {
        eval_poly(&self.polynomials.p[n], e)
    }

    /// `alpha_{n,1}`: the coefficient multiplying the Brownian direction in
    /// the n-th basis martingale.
    pub fn alpha_n1(&self, n: usize) -> f64 {
        self.alpha[n][0]
    }

    /// Scaling `gamma^(k)(t) = sqrt(r(t))`; identical across `k` in
    /// proportional mode.
    pub fn gamma(&self, chars: &LevyCharacteristics, k: usize, t: f64) -> Result<f64> {
        if k >= self.dim {
            return Err(Error::InvalidModel(format!("basis index {k} out of 0..{}", self.dim)));
        }
        if !self.proportional {
            return Err(Error::NonDiagonalBracket { max_off: f64::NAN });
        }
        Ok(chars.modulation_ratio(t).max(0.0).sqrt())
    }

    /// `\int_a^b gamma^(k)(s)^2 ds`.
    pub fn gamma_sq_integral(&self, chars: &LevyCharacteristics, _k: usize, a: f64, b: f64) -> f64 {
        crate::timefn::integrate(&|t| chars.modulation_ratio(t), a, b)
    }

    /// Instantaneous Gram matrix
    /// `G_ij(t) = c(t) q_i(0) q_j(0) + sum_j' q_i(e_j') q_j(e_j') e_j'^2 lambda_j'(t)`.
    pub fn instantaneous_gram(&self, chars: &LevyCharacteristics, t: f64) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut g = vec![vec![0.0; d]; d];
        let c = chars.c(t);
        for i in 0..d {
            for j in 0..d {
                let mut v = c * self.q(i, 0.0) * self.q(j, 0.0);
                for atom in &chars.atoms {
                    v += self.q(i, atom.size)
                        * self.q(j, atom.size)
                        * atom.size
                        * atom.size
                        * atom.intensity.eval(t);
                }
                g[i][j] = v;
            }
        }
        g
    }

    /// True iff the off-diagonal bracket density stays below 1e-8 across the
    /// grid; returns the largest off-diagonal magnitude seen.
    pub fn check_diagonal_bracket(&self, chars: &LevyCharacteristics, grid: &[f64]) -> (bool, f64) {
        let mut max_off = 0.0f64;
        for &t in grid {
            let g = self.instantaneous_gram(chars, t);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    if i != j {
                        max_off = max_off.max(g[i][j].abs());
                    }
                }
            }
        }
        (max_off <= 1e-8, max_off)
    }

    /// Projection of a jump functional onto the basis: component `i` is the
    /// per-unit-time density `sum_j hbar(t, e_j) p_i(e_j) lambda_j(t)`.
    pub fn project(
        &self,
        chars: &LevyCharacteristics,
        hbar: &dyn Fn(f64, f64) -> f64,
        t: f64,
    ) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                chars
                    .atoms
                    .iter()
                    .map(|a| hbar(t, a.size) * self.p(i, a.size) * a.intensity.eval(t))
                    .sum()
            })
            .collect()
    }

    /// Orthonormality defect `max_{n,m} |<q_n, q_m>_{pi0} - delta_nm|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.dim {
            for m in 0..self.dim {
                let mut ip = 0.0;
                for pt in &self.reference_measure {
                    ip += pt.weight * self.q(n, pt.location) * self.q(m, pt.location);
                }
                let target = if n == m { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// Build the basis by Gram-Schmidt of monomials against `pi0`, with one
/// re-orthogonalization pass. Atoms are sorted canonically by size first so
/// the output does not depend on their declaration order.
pub fn build_basis(chars: &LevyCharacteristics) -> Result<MartingaleBasis> {
    let proportional = chars.modulation == Modulation::Proportional;

    // Support points with base weights at t = 0 (r(0) = 1 normalization).
    // If everything vanishes at t = 0 fall back to time-averaged weights.
    let weight_at = |f: &dyn Fn(f64) -> f64| -> f64 {
        let w0 = f(0.0);
        if w0 > 0.0 {
            w0
        } else {
            crate::timefn::integrate(f, 0.0, chars.horizon) / chars.horizon
        }
    };
    let total0 = chars.c(0.0)
        + chars
            .atoms
            .iter()
            .map(|a| a.size * a.size * a.intensity.eval(0.0))
            .sum::<f64>();
    let use_avg = total0 <= 0.0;

    let mut points: Vec<MeasurePoint> = Vec::new();
    let c0 = if use_avg {
        weight_at(&|t| chars.c(t))
    } else {
        chars.c(0.0)
    };
    if c0 > 0.0 {
        points.push(MeasurePoint { location: 0.0, weight: c0, atom_index: None });
    }
    let mut order: Vec<usize> = (0..chars.atoms.len()).collect();
    order.sort_by(|&i, &j| chars.atoms[i].size.partial_cmp(&chars.atoms[j].size).unwrap());
    for idx in order {
        let a = &chars.atoms[idx];
        let lam = if use_avg {
            weight_at(&|t| a.intensity.eval(t))
        } else {
            a.intensity.eval(0.0)
        };
        let w = a.size * a.size * lam;
        if w > 0.0 {
            points.push(MeasurePoint { location: a.size, weight: w, atom_index: Some(idx) });
        }
    }
    if points.is_empty() {
        return Err(Error::DegenerateMeasure);
    }

    let max_dim = points.len();
    let ip = |pa: &[f64], pb: &[f64]| -> f64 {
        points
            .iter()
            .map(|pt| pt.weight * eval_poly(pa, pt.location) * eval_poly(pb, pt.location))
            .sum::<f64>()
    };

    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut rank_reduced = false;
    let total_weight: f64 = points.iter().map(|p| p.weight).sum();
    for n in 0..max_dim {
        // monomial e^n as a coefficient vector
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for prev in &q {
                let c = ip(&v, prev);
                for (vi, pi) in v.iter_mut().zip(prev.iter()) {
                    *vi -= c * pi;
                }
            }
        }
        let norm2 = ip(&v, &v);
        if norm2 <= RANK_TOL * total_weight {
            rank_reduced = true;
            continue;
        }
        let norm = norm2.sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        // sign convention: leading coefficient positive
        if v[n] < 0.0 {
            for vi in v.iter_mut() {
                *vi = -*vi;
            }
        }
        q.push(v);
    }
    if q.is_empty() {
        return Err(Error::DegenerateMeasure);
    }

    let dim = q.len();
    let alpha: Vec<Vec<f64>> = q
        .iter()
        .map(|poly| poly.clone())
        .collect();
    let p: Vec<Vec<f64>> = q
        .iter()
        .map(|poly| {
            let mut shifted = vec![0.0];
            shifted.extend_from_slice(poly);
            shifted
        })
        .collect();

    let basis = MartingaleBasis {
        dim,
        alpha,
        polynomials: BasisPolynomials { q, p },
        reference_measure: points,
        rank_reduced,
        proportional,
    };
    let defect = basis.orthonormality_defect();
    if defect > ORTHO_TOL {
        return Err(Error::Numerical(format!(
            "orthonormalization defect {defect:.3e} exceeds {ORTHO_TOL:.0e}"
        )));
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpAtom, LevyCharacteristics, Modulation};
    use crate::timefn::TimeFn;
    use approx::assert_abs_diff_eq;

    fn model(atoms: Vec<JumpAtom>, c: f64) -> LevyCharacteristics {
        LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(c),
            atoms,
            Modulation::Proportional,
        )
    }

    /// Brute-force Gram matrix of the returned q-polynomials against the
    /// discrete measure; independent of the Gram-Schmidt path.
    fn brute_force_gram(basis: &MartingaleBasis) -> Vec<Vec<f64>> {
        let d = basis.dim;
        let mut g = vec![vec![0.0; d]; d];
        for n in 0..d {
            for m in 0..d {
                g[n][m] = basis
                    .reference_measure
                    .iter()
                    .map(|pt| pt.weight * basis.q(n, pt.location) * basis.q(m, pt.location))
                    .sum();
            }
        }
        g
    }

    #[test]
    fn poisson_basis_is_one_over_sqrt2() {
        let chars = model(vec![JumpAtom::constant(1.0, 2.0)], 0.0);
        let basis = build_basis(&chars).unwrap();
        assert_eq!(basis.dim, 1);
        // q1 = 1/sqrt(2): weight 2 at e = 1, so (1/sqrt2)^2 * 2 = 1
        assert_abs_diff_eq!(basis.q(0, 1.0), 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(basis.gamma(&chars, 0, 0.7).unwrap(), 1.0, epsilon = 1e-12);
        let g = brute_force_gram(&basis);
        assert_abs_diff_eq!(g[0][0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_two_atom_basis() {
        let chars = model(
            vec![JumpAtom::constant(1.0, 1.0), JumpAtom::constant(-1.0, 1.0)],
            0.0,
        );
        let basis = build_basis(&chars).unwrap();
        assert_eq!(basis.dim, 2);
        let s = 1.0 / 2.0f64.sqrt();
        // q1 constant, q2 odd; cross moment vanishes by symmetry
        assert_abs_diff_eq!(basis.q(0, 1.0), s, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.q(0, -1.0), s, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.q(1, 1.0), s, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.q(1, -1.0), -s, epsilon = 1e-12);
        // alpha_{2,1} = 0
        assert_abs_diff_eq!(basis.alpha[1][0], 0.0, epsilon = 1e-14);
        let g = brute_force_gram(&basis);
        for n in 0..2 {
            for m in 0..2 {
                let target = if n == m { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g[n][m], target, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pure_diffusion_basis() {
        let chars = model(vec![], 1.0);
        let basis = build_basis(&chars).unwrap();
        assert_eq!(basis.dim, 1);
        assert_abs_diff_eq!(basis.q(0, 0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_scales_with_modulation() {
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::new(1.0, TimeFn::Poly { poly: vec![2.0, 2.0] })],
            Modulation::Proportional,
        );
        let basis = build_basis(&chars).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(
                basis.gamma(&chars, 0, t).unwrap(),
                (1.0 + t).sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn gram_is_modulated_identity_in_proportional_mode() {
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Poly { poly: vec![0.5, 0.5] },
            vec![JumpAtom::new(1.0, TimeFn::Poly { poly: vec![1.0, 1.0] })],
            Modulation::Proportional,
        );
        let basis = build_basis(&chars).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let g = basis.instantaneous_gram(&chars, t);
            let r = chars.modulation_ratio(t);
            for i in 0..basis.dim {
                for j in 0..basis.dim {
                    let target = if i == j { r } else { 0.0 };
                    assert_abs_diff_eq!(g[i][j], target, epsilon = 1e-10);
                }
            }
        }
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let (ok, off) = basis.check_diagonal_bracket(&chars, &grid);
        assert!(ok, "off diagonal {off}");
    }

    #[test]
    fn general_mode_gram_has_off_diagonal() {
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![
                JumpAtom::constant(1.0, 1.0),
                JumpAtom::new(-1.0, TimeFn::Poly { poly: vec![1.0, 1.0] }),
            ],
            Modulation::General,
        );
        let basis = build_basis(&chars).unwrap();
        // direct 2-atom sum at t = 1: weights 1 (at +1) and 2 (at -1)
        let g = basis.instantaneous_gram(&chars, 1.0);
        let expect = basis.q(0, 1.0) * basis.q(1, 1.0) * 1.0
            + basis.q(0, -1.0) * basis.q(1, -1.0) * 2.0;
        assert_abs_diff_eq!(g[0][1], expect, epsilon = 1e-12);
        assert!(g[0][1].abs() > 1e-3);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let (ok, off) = basis.check_diagonal_bracket(&chars, &grid);
        assert!(!ok);
        assert!(off > 1e-3);
        assert!(basis.gamma(&chars, 0, 0.5).is_err());
    }

    #[test]
    fn single_atom_bracket_diagonal_vacuously() {
        let chars = model(vec![JumpAtom::constant(1.0, 2.0)], 0.0);
        let basis = build_basis(&chars).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let (ok, off) = basis.check_diagonal_bracket(&chars, &grid);
        assert!(ok);
        assert_abs_diff_eq!(off, 0.0);
    }

    #[test]
    fn coincident_atoms_reduce_rank() {
        // two atoms at nearly the same location: measure has 2 points but the
        // polynomial family loses rank only for exactly coincident support;
        // use exactly equal weights at the same point via a tiny perturbation
        // of zero to exercise the rank path.
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, 1.0), JumpAtom::constant(1.0 + 1e-15, 1.0)],
            Modulation::Proportional,
        );
        let basis = build_basis(&chars).unwrap();
        assert_eq!(basis.dim, 1);
        assert!(basis.rank_reduced);
    }

    #[test]
    fn projection_examples() {
        let chars = model(vec![JumpAtom::constant(1.0, 2.0)], 0.0);
        let basis = build_basis(&chars).unwrap();
        // hbar = 0
        let z = basis.project(&chars, &|_, _| 0.0, 0.5);
        assert_abs_diff_eq!(z[0], 0.0);
        // hbar = p1: component = p1(1)^2 * lambda = 1/2 * 2 = 1
        let b2 = basis.clone();
        let v = basis.project(&chars, &move |_, e| b2.p(0, e), 0.5);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);

        // parity: hbar = e^2 is even, so its projection on the direction with
        // odd p vanishes on the symmetric two-atom basis (2-point sum: p1 is
        // odd since q1 is constant, p2 is even)
        let sym = model(
            vec![JumpAtom::constant(1.0, 1.0), JumpAtom::constant(-1.0, 1.0)],
            0.0,
        );
        let sb = build_basis(&sym).unwrap();
        let v = sb.project(&sym, &|_, e| e * e, 0.3);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(v[1], 2.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn atom_order_does_not_change_basis() {
        let a = JumpAtom::constant(0.7, 1.3);
        let b = JumpAtom::constant(-0.4, 0.6);
        let c = JumpAtom::constant(1.5, 0.2);
        let m1 = model(vec![a.clone(), b.clone(), c.clone()], 0.3);
        let m2 = model(vec![c, a, b], 0.3);
        let b1 = build_basis(&m1).unwrap();
        let b2 = build_basis(&m2).unwrap();
        assert_eq!(b1.dim, b2.dim);
        for n in 0..b1.dim {
            for (x, y) in b1.polynomials.q[n].iter().zip(&b2.polynomials.q[n]) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn orthonormality_defect_small_on_random_models() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let strat = proptest::collection::vec((-2.0f64..2.0, 0.01f64..3.0), 1..5);
        runner
            .run(&(strat, 0.0f64..2.0), |(raw, c)| {
                let mut atoms: Vec<JumpAtom> = Vec::new();
                for (e, lam) in raw {
                    let e = if e.abs() < 1e-3 { e + 0.1 } else { e };
                    if atoms.iter().all(|a: &JumpAtom| (a.size - e).abs() > 1e-6) {
                        atoms.push(JumpAtom::constant(e, lam));
                    }
                }
                prop_assume!(!atoms.is_empty() || c > 0.0);
                let chars = model(atoms, c);
                let basis = build_basis(&chars).unwrap();
                prop_assert!(basis.orthonormality_defect() <= 1e-10);
                Ok(())
            })
            .unwrap();
    }
}
