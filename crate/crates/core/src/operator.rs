//! Finite-difference Schrödinger operators `H = -Δ_h + V` and the discrete
//! dilation generator on origin-centred grids.
//!
//! The dilation generator is `A = -i K` with the real antisymmetric
//! `K = ½ Σ_j (X_j D_j + D_j X_j)`, `D_j` the central difference. Hence
//! `i[H, A] = [H, K]` is a real operator and all commutator checks run in
//! real arithmetic.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{precondition, Result};
use crate::grid::{Boundary, GridSpec};
use crate::linalg::{BandedSymmetric, SymmetricOperator};

/// Values the stencils act on: `f64` and `Complex64`.
pub trait GridScalar: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> GridScalar for T where T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Neighbour of `flat` one step along `axis` (`forward` or backward), or
/// `None` if it falls on an eliminated Dirichlet node.
#[inline]
fn neighbour(grid: &GridSpec, flat: usize, axis: usize, forward: bool) -> Option<usize> {
    let n = grid.axis_len();
    let stride = grid.stride(axis);
    let i = (flat / stride) % n;
    match (forward, grid.boundary) {
        (true, _) if i + 1 < n => Some(flat + stride),
        (false, _) if i > 0 => Some(flat - stride),
        (_, Boundary::Dirichlet) => None,
        (true, Boundary::Periodic) => Some(flat - i * stride),
        (false, Boundary::Periodic) => Some(flat + (n - 1) * stride),
    }
}

/// `-Δ_h f` with the second-order central stencil.
pub fn apply_negative_laplacian<T: GridScalar>(grid: &GridSpec, f: &[T], out: &mut [T]) {
    let h2 = grid.spacing() * grid.spacing();
    let diag = 2.0 * grid.dimension as f64 / h2;
    let off = 1.0 / h2;
    for (flat, o) in out.iter_mut().enumerate() {
        let mut acc = f[flat] * diag;
        for axis in 0..grid.dimension {
            if let Some(j) = neighbour(grid, flat, axis, true) {
                acc = acc - f[j] * off;
            }
            if let Some(j) = neighbour(grid, flat, axis, false) {
                acc = acc - f[j] * off;
            }
        }
        *o = acc;
    }
}

/// `K f = ½ Σ_j (x_j D_j f + D_j(x_j f))`, so that `A f = -i K f`.
pub fn apply_dilation_kernel<T: GridScalar>(grid: &GridSpec, f: &[T], out: &mut [T]) {
    let inv = 0.25 / grid.spacing();
    for (flat, o) in out.iter_mut().enumerate() {
        let mut acc = T::default();
        for axis in 0..grid.dimension {
            let xi = grid.coord(grid.axis_index(flat, axis));
            let mut term = T::default();
            if let Some(j) = neighbour(grid, flat, axis, true) {
                let xj = grid.coord(grid.axis_index(j, axis));
                term = term + f[j] * (xi + xj);
            }
            if let Some(j) = neighbour(grid, flat, axis, false) {
                let xj = grid.coord(grid.axis_index(j, axis));
                term = term - f[j] * (xi + xj);
            }
            acc = acc + term * inv;
        }
        *o = acc;
    }
}

/// Symmetrized discrete dilation generator `A f = -(i/2)(x·∇_h f + ∇_h·(x f))`.
pub fn apply_dilation_generator(grid: &GridSpec, f: &[Complex64]) -> Vec<Complex64> {
    let mut k = vec![Complex64::default(); f.len()];
    apply_dilation_kernel(grid, f, &mut k);
    k.into_iter().map(|v| Complex64::new(v.im, -v.re)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHamiltonian {
    grid: GridSpec,
    potential: Vec<f64>,
}

impl DiscreteHamiltonian {
    /// Uses `values` as the diagonal potential, one value per unknown.
    pub fn from_values(grid: GridSpec, values: Vec<f64>, budget: u64) -> Result<Self> {
        grid.validate()?;
        grid.check_budget(budget)?;
        if values.len() != grid.len() {
            return Err(precondition!(
                "potential has {} values for {} grid unknowns",
                values.len(),
                grid.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(precondition!("potential value {v} is not finite"));
        }
        Ok(DiscreteHamiltonian {
            grid,
            potential: values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn apply_generic<T: GridScalar>(&self, f: &[T], out: &mut [T]) {
        apply_negative_laplacian(&self.grid, f, out);
        for ((o, fi), v) in out.iter_mut().zip(f).zip(&self.potential) {
            *o = *o + *fi * *v;
        }
    }

    /// Entry `H(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let h2 = self.grid.spacing() * self.grid.spacing();
        let mut v = 0.0;
        if i == j {
            v += 2.0 * self.grid.dimension as f64 / h2 + self.potential[i];
        }
        for axis in 0..self.grid.dimension {
            for fwd in [true, false] {
                if neighbour(&self.grid, i, axis, fwd) == Some(j) {
                    v -= 1.0 / h2;
                }
            }
        }
        v
    }
}

/// Samples `field` at every unknown and builds `-Δ_h + V`.
pub fn assemble_hamiltonian(
    grid: GridSpec,
    budget: u64,
    field: impl FnMut(&[f64]) -> f64,
) -> Result<DiscreteHamiltonian> {
    grid.validate()?;
    grid.check_budget(budget)?;
    let values = grid.sample(field);
    DiscreteHamiltonian::from_values(grid, values, budget)
}

impl SymmetricOperator for DiscreteHamiltonian {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_generic(x, y);
    }

    fn banded(&self) -> BandedSymmetric {
        let g = &self.grid;
        let top = g.stride(g.dimension - 1);
        let bw = match g.boundary {
            Boundary::Dirichlet => top,
            Boundary::Periodic => (g.axis_len() - 1) * top,
        };
        let h2 = g.spacing() * g.spacing();
        let mut b = BandedSymmetric::zeros(g.len(), bw);
        for i in 0..g.len() {
            b.add(i, i, 2.0 * g.dimension as f64 / h2 + self.potential[i]);
            for axis in 0..g.dimension {
                if let Some(j) = neighbour(g, i, axis, false) {
                    b.add(i, j, -1.0 / h2);
                }
            }
        }
        b
    }

    fn scale(&self) -> f64 {
        let h = self.grid.spacing();
        4.0 * self.grid.dimension as f64 / (h * h) + self.potential.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Largest boundary weight accepted by [`commutator_residual`].
pub const COMMUTATOR_BOUNDARY_WEIGHT: f64 = 1e-8;

/// `||[H, K] f - (2H + B) f|| / ||f||`, i.e. the defect of
/// `i[H, A] = 2H + B` on `f`, with `b` the grid samples of `B`.
pub fn commutator_residual(h: &DiscreteHamiltonian, b: &[f64], f: &[f64]) -> Result<f64> {
    let g = h.grid();
    if b.len() != g.len() || f.len() != g.len() {
        return Err(precondition!("field and test function must have {} values", g.len()));
    }
    let w = g.boundary_weight(f);
    if w >= COMMUTATOR_BOUNDARY_WEIGHT {
        return Err(precondition!(
            "test function boundary weight {w:e} is not below {COMMUTATOR_BOUNDARY_WEIGHT:e}"
        ));
    }
    let nf = crate::linalg::norm2(f);
    if nf == 0.0 {
        return Err(precondition!("test function is zero"));
    }
    let n = f.len();
    let mut kf = vec![0.0; n];
    let mut hkf = vec![0.0; n];
    let mut hf = vec![0.0; n];
    let mut khf = vec![0.0; n];
    apply_dilation_kernel(g, f, &mut kf);
    h.apply_generic(&kf, &mut hkf);
    h.apply_generic(f, &mut hf);
    apply_dilation_kernel(g, &hf, &mut khf);
    let mut sq = 0.0;
    for i in 0..n {
        let r = hkf[i] - khf[i] - 2.0 * hf[i] - b[i] * f[i];
        sq += r * r;
    }
    Ok(sq.sqrt() / nf)
}

/// `i[H, A] f = [H, K] f`.
pub fn commutator_apply(h: &DiscreteHamiltonian, f: &[f64]) -> Vec<f64> {
    let g = h.grid();
    let n = f.len();
    let mut kf = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut hf = vec![0.0; n];
    let mut khf = vec![0.0; n];
    apply_dilation_kernel(g, f, &mut kf);
    h.apply_generic(&kf, &mut out);
    h.apply_generic(f, &mut hf);
    apply_dilation_kernel(g, &hf, &mut khf);
    for (o, k) in out.iter_mut().zip(&khf) {
        *o -= k;
    }
    out
}
