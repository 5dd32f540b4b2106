//! Origin-centred tensor grids on `[-L, L]^d`.

use alloc::vec::Vec;

use crate::error::{precondition, Error, Result};

/// Default cap on the number of unknowns `N^d` of a single grid.
pub const DEFAULT_UNKNOWN_BUDGET: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Boundary {
    /// Nodes `-L + i h`, `i = 0..N`, wrapping around.
    Periodic,
    /// Interior nodes `-L + i h`, `i = 1..N-1`; the boundary nodes are eliminated.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    #[cfg_attr(feature = "serde", serde(rename = "d"))]
    pub dimension: usize,
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub half_length: f64,
    #[cfg_attr(feature = "serde", serde(rename = "N"))]
    pub points: usize,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(dimension: usize, half_length: f64, points: usize, boundary: Boundary) -> Result<Self> {
        let g = GridSpec {
            dimension,
            half_length,
            points,
            boundary,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 3 {
            return Err(precondition!("grid dimension must be 1, 2 or 3, got {}", self.dimension));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(precondition!("half-length L must be positive, got {}", self.half_length));
        }
        if self.points < 2 || self.points % 2 != 0 {
            return Err(precondition!("points per axis N must be positive and even, got {}", self.points));
        }
        Ok(())
    }

    pub fn check_budget(&self, budget: u64) -> Result<()> {
        let unknowns = (self.axis_len() as u64).saturating_pow(self.dimension as u32);
        if unknowns > budget {
            return Err(Error::Resource { unknowns, budget });
        }
        Ok(())
    }

    /// `h = 2L / N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Unknowns per axis.
    pub fn axis_len(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.points,
            Boundary::Dirichlet => self.points - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.axis_len().pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of axis index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        let offset = match self.boundary {
            Boundary::Periodic => 0,
            Boundary::Dirichlet => 1,
        };
        -self.half_length + (i + offset) as f64 * self.spacing()
    }

    /// Stride of axis `j` in the flat layout (axis 0 varies fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.axis_len().pow(axis as u32)
    }

    /// Axis index of `flat` along `axis`.
    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.axis_len()
    }

    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let n = self.axis_len();
        let mut rest = flat;
        for o in out.iter_mut().take(self.dimension) {
            *o = self.coord(rest % n);
            rest /= n;
        }
    }

    /// All grid points, flattened `d` coordinates per point.
    pub fn points(&self) -> Vec<f64> {
        let d = self.dimension;
        let mut out = alloc::vec![0.0; self.len() * d];
        for (flat, chunk) in out.chunks_mut(d).enumerate() {
            self.point(flat, chunk);
        }
        out
    }

    /// Evaluates `field` at every grid point.
    pub fn sample(&self, mut field: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut x = alloc::vec![0.0; self.dimension];
        (0..self.len())
            .map(|flat| {
                self.point(flat, &mut x);
                field(&x)
            })
            .collect()
    }

    /// Whether the point lies in the outer layer `max_j |x_j| > L - w`,
    /// `w = L / 8`, used for boundary-weight diagnostics.
    pub fn in_boundary_layer(&self, flat: usize) -> bool {
        let cut = self.half_length * (1.0 - BOUNDARY_LAYER_FRACTION);
        (0..self.dimension).any(|j| self.coord(self.axis_index(flat, j)).abs() > cut)
    }

    /// Fraction of `sum |f_i|^2` carried by the boundary layer.
    pub fn boundary_weight<T: Modulus>(&self, f: &[T]) -> f64 {
        let mut total = 0.0;
        let mut layer = 0.0;
        for (i, v) in f.iter().enumerate() {
            let m = v.modulus_sqr();
            total += m;
            if self.in_boundary_layer(i) {
                layer += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            layer / total
        }
    }
}

/// Width of the boundary layer as a fraction of `L`.
pub const BOUNDARY_LAYER_FRACTION: f64 = 0.125;

/// Squared modulus for real and complex grid values.
pub trait Modulus {
    fn modulus_sqr(&self) -> f64;
}

impl Modulus for f64 {
    fn modulus_sqr(&self) -> f64 {
        self * self
    }
}

impl Modulus for num_complex::Complex64 {
    fn modulus_sqr(&self) -> f64 {
        self.norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_nodes_are_symmetric_about_origin() {
        let g = GridSpec::new(1, 4.0, 8, Boundary::Dirichlet).unwrap();
        assert_eq!(g.axis_len(), 7);
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.coord(0), -3.0);
        assert_eq!(g.coord(3), 0.0);
        assert_eq!(g.coord(6), 3.0);
    }

    #[test]
    fn periodic_layout_and_points() {
        let g = GridSpec::new(2, 1.0, 4, Boundary::Periodic).unwrap();
        assert_eq!(g.len(), 16);
        let mut x = [0.0; 2];
        g.point(6, &mut x);
        assert_eq!(x, [0.0, -0.5]);
        assert_eq!(g.axis_index(6, 0), 2);
        assert_eq!(g.axis_index(6, 1), 1);
    }

    #[test]
    fn rejects_odd_or_empty_grids_and_budget() {
        assert!(GridSpec::new(1, 1.0, 7, Boundary::Periodic).is_err());
        assert!(GridSpec::new(0, 1.0, 8, Boundary::Periodic).is_err());
        assert!(GridSpec::new(1, 0.0, 8, Boundary::Periodic).is_err());
        let g = GridSpec::new(3, 1.0, 256, Boundary::Periodic).unwrap();
        match g.check_budget(1 << 20) {
            Err(Error::Resource { unknowns, .. }) => assert_eq!(unknowns, 1 << 24),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn boundary_weight_of_edge_delta() {
        let g = GridSpec::new(1, 8.0, 64, Boundary::Dirichlet).unwrap();
        let mut f = alloc::vec![0.0; g.len()];
        f[0] = 1.0;
        assert_eq!(g.boundary_weight(&f), 1.0);
        f[0] = 0.0;
        f[31] = 1.0;
        assert_eq!(g.boundary_weight(&f), 0.0);
    }
}
