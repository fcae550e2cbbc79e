use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of grid points a certificate will evaluate.
pub const MAX_GRID_POINTS: usize = 4_000_000;

pub const DEFAULT_POINTS: usize = 201;
pub const DEFAULT_HALF_WIDTH: f64 = 2.0;

/// Tensor grid of evaluation points on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    /// `points` per dimension on [-half_width, half_width]^n.
    pub fn symmetric(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        let g = Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            points: vec![points; dim],
        };
        g.validate()?;
        Ok(g)
    }

    /// Default box with the default resolution, coarsened in high dimension
    /// to respect the point limit. Point counts stay odd so the origin is on
    /// the grid.
    pub fn default_for(dim: usize) -> Result<Self> {
        let mut points = DEFAULT_POINTS;
        while points > 3 && (points as f64).powi(dim as i32) > MAX_GRID_POINTS as f64 {
            points -= 2;
        }
        Self::symmetric(dim, DEFAULT_HALF_WIDTH, points)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.upper.len() != n || self.points.len() != n {
            return Err(Error::input(
                "grid bounds and point counts must share one nonzero dimension",
            ));
        }
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && hi >= 0.0 && lo < hi) {
                return Err(Error::input(format!(
                    "grid box [{lo}, {hi}] in dimension {} must contain the origin",
                    i + 1
                )));
            }
            if self.points[i] < 3 {
                return Err(Error::input("grid needs at least 3 points per dimension"));
            }
        }
        let total = self
            .points
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(p))
            .unwrap_or(usize::MAX);
        if total > MAX_GRID_POINTS {
            return Err(Error::input(format!(
                "grid has {total} points, above the limit of {MAX_GRID_POINTS}; reduce the resolution"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn total(&self) -> usize {
        self.points.iter().product()
    }

    fn coordinate(&self, i: usize, k: usize) -> f64 {
        // Weighted form keeps symmetric grids exactly symmetric, origin included.
        let last = (self.points[i] - 1) as f64;
        let k = k as f64;
        (self.lower[i] * (last - k) + self.upper[i] * k) / last
    }

    /// Point with linear index `idx`; the first coordinate varies fastest.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let p = self.points[i];
            x.push(self.coordinate(i, idx % p));
            idx /= p;
        }
        x
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.upper[i] - self.lower[i]) / (self.points[i] - 1) as f64)
            .product()
    }

    /// Distance from the origin to the nearest face, per dimension.
    pub fn half_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (-lo).min(*hi))
            .collect()
    }

    /// Evaluates `f` at every grid point, in index order.
    pub fn evaluate<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        (0..self.total())
            .into_par_iter()
            .map(|k| f(&self.point(k)))
            .collect()
    }
}

pub fn is_origin(x: &[f64]) -> bool {
    x.iter().all(|v| *v == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_contains_origin_exactly() {
        let g = GridSpec::default_for(2).unwrap();
        assert_eq!(g.total(), 201 * 201);
        let origins = (0..g.total()).filter(|&k| is_origin(&g.point(k))).count();
        assert_eq!(origins, 1);
        assert_eq!(g.point(0), vec![-2.0, -2.0]);
        assert_eq!(g.point(g.total() - 1), vec![2.0, 2.0]);
        assert!((g.cell_volume() - 0.02 * 0.02).abs() < 1e-15);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(GridSpec::symmetric(2, 1.0, 2).is_err());
        assert!(GridSpec::symmetric(3, 1.0, 201).is_err());
        let g3 = GridSpec::default_for(3).unwrap();
        assert!(g3.total() <= MAX_GRID_POINTS && g3.points[0] % 2 == 1);
        let g = GridSpec {
            lower: vec![0.5],
            upper: vec![1.0],
            points: vec![5],
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn evaluation_follows_index_order() {
        let g = GridSpec::symmetric(2, 1.0, 3).unwrap();
        let v = g.evaluate(|x| x[0] + 10.0 * x[1]);
        assert_eq!(v[1], 0.0 - 10.0);
        assert_eq!(v[3], -1.0);
    }
}
