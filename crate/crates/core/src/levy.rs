//! Non-homogeneous Levy models with finitely many jump sizes.
//!
//! A model is the characteristic triplet `(b_t, c_t, F_t)` where the jump
//! measure `F_t` is a finite collection of atoms with time-dependent
//! intensities. Everything downstream (basis construction, simulation,
//! solvers) consumes these characteristics, so validation lives here.

use crate::error::{Error, Result};
use crate::timefn::{integrate, TimeFn};
use serde::{Deserialize, Serialize};

/// One jump size with its time-dependent rate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JumpAtom {
    /// Jump magnitude; never zero.
    pub size: f64,
    /// Jumps per unit time at time `t`.
    pub intensity: TimeFn,
}

impl JumpAtom {
    pub fn new(size: f64, intensity: TimeFn) -> Self {
        JumpAtom { size, intensity }
    }

    pub fn constant(size: f64, rate: f64) -> Self {
        JumpAtom { size, intensity: TimeFn::Const(rate) }
    }
}

/// How the triplet varies in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// `c(t) = c0 r(t)` and every intensity is `lambda_j r(t)` for one
    /// common `r > 0`. The bracket of the basis stays diagonal.
    Proportional,
    /// Arbitrary time dependence; accepted for simulation but the solver
    /// refuses it unless the bracket check passes.
    General,
}

/// Characteristic triplet of the driving process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevyCharacteristics {
    pub horizon: f64,
    pub drift: TimeFn,
    pub diffusion: TimeFn,
    pub atoms: Vec<JumpAtom>,
    pub modulation: Modulation,
}

/// Outcome of `validate`, listing the integrability quantities.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    /// `\int_0^T (|b| + |c| + \int (1 ^ e^2) F) ds` — finite by construction,
    /// reported anyway.
    pub nl1_integral: f64,
    /// `sup_u \int_0^T \int_{|e|>1} e^{ue} F_s(de) ds` over the reported range.
    pub nl2_bound: f64,
    /// The `u`-range `[-(1+eps) C, (1+eps) C]` used for the bound, with
    /// `eps = 1`, `C = 1` (any finite choice works for bounded atoms).
    pub nl2_range: (f64, f64),
    /// Sampled values of the common modulation `r(t)` in proportional mode.
    pub modulation_samples: Option<Vec<(f64, f64)>>,
}

const RATIO_TOL: f64 = 1e-10;

impl LevyCharacteristics {
    pub fn new(
        horizon: f64,
        drift: TimeFn,
        diffusion: TimeFn,
        atoms: Vec<JumpAtom>,
        modulation: Modulation,
    ) -> Self {
        LevyCharacteristics { horizon, drift, diffusion, atoms, modulation }
    }

    /// Diffusion coefficient at time `t`.
    pub fn c(&self, t: f64) -> f64 {
        self.diffusion.eval(t)
    }

    /// Triplet drift at time `t`.
    pub fn b(&self, t: f64) -> f64 {
        self.drift.eval(t)
    }

    pub fn has_diffusion(&self) -> bool {
        !(self.diffusion.is_const() && self.c(0.0) == 0.0)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutsideHorizon { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Validate the model and report the integrability quantities.
    ///
    /// Rejects zero jump sizes, negative intensities and a proportional flag
    /// whose intensity/diffusion ratios are not constant in time (sampled
    /// ratio variation above 1e-10). Atoms with coincident sizes are rejected
    /// here; merge them before constructing the model.
    pub fn validate(&self) -> Result<ValidationReport> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        let n_samples = 65usize;
        let ts: Vec<f64> = (0..n_samples)
            .map(|i| self.horizon * i as f64 / (n_samples - 1) as f64)
            .collect();

        for atom in &self.atoms {
            if atom.size == 0.0 {
                return Err(Error::InvalidModel("jump atom with size 0".into()));
            }
            if !atom.size.is_finite() {
                return Err(Error::InvalidModel("jump atom with non-finite size".into()));
            }
            for &t in &ts {
                let lam = atom.intensity.eval(t);
                if !(lam >= 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "negative intensity {lam} at t = {t} for atom {}",
                        atom.size
                    )));
                }
            }
        }
        for i in 0..self.atoms.len() {
            for j in (i + 1)..self.atoms.len() {
                if self.atoms[i].size == self.atoms[j].size {
                    return Err(Error::InvalidModel(format!(
                        "coincident atom sizes {}; merge intensities",
                        self.atoms[i].size
                    )));
                }
            }
        }
        for &t in &ts {
            if self.c(t) < 0.0 {
                return Err(Error::InvalidModel(format!("negative diffusion at t = {t}")));
            }
        }

        if self.modulation == Modulation::Proportional {
            self.check_proportional(&ts)?;
        }

        let nl1 = integrate(
            &|t| {
                let jump: f64 = self
                    .atoms
                    .iter()
                    .map(|a| (1.0f64).min(a.size * a.size) * a.intensity.eval(t))
                    .sum();
                self.b(t).abs() + self.c(t).abs() + jump
            },
            0.0,
            self.horizon,
        );

        // (NL2): with bounded atoms every exponential moment is finite; we
        // report the bound on the canonical range eps = 1, C = 1.
        let (lo, hi) = (-2.0, 2.0);
        let mut nl2 = 0.0f64;
        for k in 0..=32 {
            let u = lo + (hi - lo) * k as f64 / 32.0;
            let v = integrate(
                &|t| {
                    self.atoms
                        .iter()
                        .filter(|a| a.size.abs() > 1.0)
                        .map(|a| (u * a.size).exp() * a.intensity.eval(t))
                        .sum()
                },
                0.0,
                self.horizon,
            );
            nl2 = nl2.max(v);
        }

        let modulation_samples = if self.modulation == Modulation::Proportional {
            Some(ts.iter().map(|&t| (t, self.modulation_ratio(t))).collect())
        } else {
            None
        };

        Ok(ValidationReport {
            nl1_integral: nl1,
            nl2_bound: nl2,
            nl2_range: (lo, hi),
            modulation_samples,
        })
    }

    /// Common modulation `r(t)`, normalized so `r(0) = 1`; meaningful in
    /// proportional mode only.
    pub fn modulation_ratio(&self, t: f64) -> f64 {
        let total0 = self.total_weight(0.0);
        if total0 <= 0.0 {
            return 1.0;
        }
        self.total_weight(t) / total0
    }

    /// Total reference-measure mass `c(t) + sum e_j^2 lambda_j(t)`.
    fn total_weight(&self, t: f64) -> f64 {
        self.c(t)
            + self
                .atoms
                .iter()
                .map(|a| a.size * a.size * a.intensity.eval(t))
                .sum::<f64>()
    }

    fn check_proportional(&self, ts: &[f64]) -> Result<()> {
        // Each component must be a constant multiple of the common total;
        // check the sampled ratio variation component by component.
        let mut components: Vec<(String, Vec<f64>)> = Vec::new();
        if self.has_diffusion() {
            components.push(("c".into(), ts.iter().map(|&t| self.c(t)).collect()));
        }
        for a in &self.atoms {
            components.push((
                format!("lambda({})", a.size),
                ts.iter().map(|&t| a.intensity.eval(t)).collect(),
            ));
        }
        let totals: Vec<f64> = ts.iter().map(|&t| self.total_weight(t)).collect();
        let scale = totals.iter().cloned().fold(0.0f64, f64::max);
        if scale <= 0.0 {
            return Err(Error::DegenerateMeasure);
        }
        for (name, vals) in components {
            let mut ratio: Option<f64> = None;
            for (v, tot) in vals.iter().zip(&totals) {
                if *tot <= scale * 1e-14 {
                    continue;
                }
                let r = v / tot;
                match ratio {
                    None => ratio = Some(r),
                    Some(r0) => {
                        if (r - r0).abs() > RATIO_TOL * (1.0 + r0.abs()) {
                            return Err(Error::InvalidModel(format!(
                                "proportional flag rejected: ratio of {name} to the total weight varies ({r0} vs {r})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean drift `b(t) + sum_{|e_j| > 1} e_j lambda_j(t)` of the canonical
    /// decomposition.
    pub fn mean_drift(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.b(t)
            + self
                .atoms
                .iter()
                .filter(|a| a.size.abs() > 1.0)
                .map(|a| a.size * a.intensity.eval(t))
                .sum::<f64>())
    }

    /// Drift of the sample paths: `b(t) - sum_{|e_j| <= 1} e_j lambda_j(t)`.
    /// Together with raw jumps and the diffusion part this reproduces the
    /// canonical decomposition, and the path mean matches `power_moment(1, .)`.
    pub fn path_drift(&self, t: f64) -> f64 {
        self.b(t)
            - self
                .atoms
                .iter()
                .filter(|a| a.size.abs() <= 1.0)
                .map(|a| a.size * a.intensity.eval(t))
                .sum::<f64>()
    }

    /// Power moment `m^(i)(t)`: the compensator integral of i-th jump powers
    /// for `i >= 2`, and the integrated mean drift for `i = 1`.
    pub fn power_moment(&self, order: u32, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if order == 0 {
            return Err(Error::InvalidModel("moment order must be >= 1".into()));
        }
        if order == 1 {
            return Ok(integrate(&|s| self.mean_drift(s).unwrap_or(0.0), 0.0, t));
        }
        Ok(self
            .atoms
            .iter()
            .map(|a| a.size.powi(order as i32) * a.intensity.integrate(0.0, t))
            .sum())
    }

    /// Table of `m^(i)` up to `i_max`, sampled lazily through `power_moment`.
    pub fn moment_table(&self, i_max: u32) -> MomentTable<'_> {
        MomentTable { chars: self, i_max }
    }
}

/// Lazy view over the moments `m^(i)(t)`, `i = 1..=i_max`.
pub struct MomentTable<'a> {
    chars: &'a LevyCharacteristics,
    pub i_max: u32,
}

impl MomentTable<'_> {
    pub fn value(&self, order: u32, t: f64) -> Result<f64> {
        if order == 0 || order > self.i_max {
            return Err(Error::InvalidModel(format!("moment order {order} out of 1..={}", self.i_max)));
        }
        self.chars.power_moment(order, t)
    }
}
