//! Time discretization.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Strictly increasing grid `t0 = tau_0 < ... < tau_N = t_end`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` intervals.
    pub fn uniform(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > t0) || n_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "bad grid: [{t0}, {t_end}] with {n_steps} steps"
            )));
        }
        let nodes = (0..=n_steps)
            .map(|i| t0 + (t_end - t0) * i as f64 / n_steps as f64)
            .collect();
        Ok(TimeGrid { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("grid nodes must be strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Halved-step refinement (each interval split in two).
    pub fn refine(&self) -> TimeGrid {
        let mut nodes = Vec::with_capacity(self.nodes.len() * 2 - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.t_end());
        TimeGrid { nodes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_spans_interval() {
        let g = TimeGrid::uniform(0.5, 1.5, 4).unwrap();
        assert_eq!(g.nodes.len(), 5);
        assert_eq!(g.t0(), 0.5);
        assert_eq!(g.t_end(), 1.5);
        assert!((g.dt(2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::uniform(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn refine_halves_steps() {
        let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let r = g.refine();
        assert_eq!(r.n_steps(), 6);
        assert_eq!(r.t_end(), 1.0);
    }
}
