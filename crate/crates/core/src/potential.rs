//! The island potential `V(x) = sum_n omega_n |n|^-alpha phi((x - n) / r(n))`,
//! its dilation-commutator fields and the threshold `E0`.
//!
//! With `A = -i (x . grad + d/2)`:
//!
//! * `i[V, A] = -(x . grad V)`, returned by [`IslandPotential::commutator_field`];
//! * `(x . grad)^2 V = x . grad V + x^T (Hess V) x`, returned by
//!   [`IslandPotential::double_commutator_field`];
//! * `i[H, A] = 2H + B` with `B = i[V, A] - 2V`, and `E0 = sup |B| / 2`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;


use crate::disorder::DisorderRealization;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{precondition, Result};
use crate::geometry::{norm, IslandSet};

/// A profile supported in the closed unit ball with `value(0) = 1`.
pub trait BumpProfile {
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64], out: &mut [f64]);
    /// Row-major `d x d` Hessian.
    fn hessian(&self, u: &[f64], out: &mut [f64]);
    /// `sup |grad phi|`.
    fn gradient_sup(&self) -> f64;
    /// `sup ||Hess phi||` in the operator 2-norm.
    fn hessian_sup(&self) -> f64;
}

/// Radial mollifier `phi(u) = exp(1 - 1 / (1 - k^2 |u|^2))` on `|u| < 1/k`.
///
/// `k = 1` is the standard normalized mollifier. A contraction `k > 1` keeps
/// `phi(0) = 1` and the support inside the unit ball while scaling
/// `sup |grad phi|` by exactly `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MollifierBump {
    pub contraction: f64,
    grad_sup: f64,
    hess_sup: f64,
}

impl Default for MollifierBump {
    fn default() -> Self {
        MollifierBump::new(1.0)
    }
}

impl MollifierBump {
    pub fn new(contraction: f64) -> Self {
        assert!(contraction >= 1.0, "contraction must be >= 1");
        let (g, h) = Self::radial_sups();
        MollifierBump {
            contraction,
            grad_sup: contraction * g,
            hess_sup: contraction * contraction * h,
        }
    }

    /// `(phi, g', g'')` of the uncontracted profile as functions of
    /// `q = |v|^2`, where `phi = exp(g(q))`.
    #[inline]
    fn radial(q: f64) -> Option<(f64, f64, f64)> {
        if q >= 1.0 {
            return None;
        }
        let inv = 1.0 / (1.0 - q);
        let phi = (1.0 - inv).exp();
        Some((phi, -inv * inv, -2.0 * inv * inv * inv))
    }

    /// Sups of `|phi'(rho)|` and of the largest Hessian eigenvalue modulus for
    /// `k = 1`, scanned along a ray (the profile is radial) then zoomed.
    fn radial_sups() -> (f64, f64) {
        let grad = |rho: f64| -> f64 {
            Self::radial(rho * rho).map_or(0.0, |(phi, g1, _)| (phi * g1 * 2.0 * rho).abs())
        };
        // Hessian eigenvalues of a radial function: phi'' (radial) and phi'/rho (tangential).
        let hess = |rho: f64| -> f64 {
            Self::radial(rho * rho).map_or(0.0, |(phi, g1, g2)| {
                let q = rho * rho;
                let tangential = (2.0 * phi * g1).abs();
                let radial = (phi * (4.0 * g1 * g1 * q + 4.0 * g2 * q + 2.0 * g1)).abs();
                tangential.max(radial)
            })
        };
        (scan_max_1d(grad, 0.0, 1.0), scan_max_1d(hess, 0.0, 1.0))
    }

    #[inline]
    fn contracted_q(&self, u: &[f64]) -> f64 {
        let k2 = self.contraction * self.contraction;
        k2 * u.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Maximum of a smooth function on `[a, b]`: dense scan then three zooms.
pub(crate) fn scan_max_1d(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut lo = a;
    let mut hi = b;
    let mut best = f64::NEG_INFINITY;
    let mut arg = a;
    for _ in 0..4 {
        let n = 2000;
        let step = (hi - lo) / n as f64;
        for i in 0..=n {
            let x = lo + step * i as f64;
            let v = f(x);
            if v > best {
                best = v;
                arg = x;
            }
        }
        lo = (arg - step).max(a);
        hi = (arg + step).min(b);
    }
    best
}

impl BumpProfile for MollifierBump {
    fn value(&self, u: &[f64]) -> f64 {
        Self::radial(self.contracted_q(u)).map_or(0.0, |(phi, _, _)| phi)
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let k = self.contraction;
        match Self::radial(self.contracted_q(u)) {
            Some((phi, g1, _)) => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = phi * g1 * 2.0 * k * k * x;
                }
            }
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    fn hessian(&self, u: &[f64], out: &mut [f64]) {
        let d = u.len();
        let k2 = self.contraction * self.contraction;
        match Self::radial(self.contracted_q(u)) {
            Some((phi, g1, g2)) => {
                let c = 4.0 * (g1 * g1 + g2) * k2 * k2;
                for j in 0..d {
                    for l in 0..d {
                        let delta = if j == l { 2.0 * g1 * k2 } else { 0.0 };
                        out[j * d + l] = phi * (c * u[j] * u[l] + delta);
                    }
                }
            }
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    fn gradient_sup(&self) -> f64 {
        self.grad_sup
    }

    fn hessian_sup(&self) -> f64 {
        self.hess_sup
    }
}

/// Index locating the (unique) island whose ball contains a point.
///
/// Islands are sorted by inner radial extent `|n| - r`; a running maximum of
/// the outer extent `|n| + r` bounds the candidate range from below.
#[derive(Debug, Clone)]
struct RadialIndex {
    order: Vec<usize>,
    inner: Vec<f64>,
    outer_prefix_max: Vec<f64>,
}

impl RadialIndex {
    fn new(set: &IslandSet) -> Self {
        let mut order: Vec<usize> = (0..set.len()).collect();
        let inner_of = |i: usize| set.islands[i].center_norm() - set.islands[i].radius;
        order.sort_by(|&a, &b| inner_of(a).partial_cmp(&inner_of(b)).unwrap_or(Ordering::Equal));
        let inner: Vec<f64> = order.iter().map(|&i| inner_of(i)).collect();
        let mut outer_prefix_max = Vec::with_capacity(order.len());
        let mut running = f64::NEG_INFINITY;
        for &i in &order {
            let isl = &set.islands[i];
            running = running.max(isl.center_norm() + isl.radius);
            outer_prefix_max.push(running);
        }
        RadialIndex {
            order,
            inner,
            outer_prefix_max,
        }
    }

    /// Islands that might contain a point at distance `rho` from the origin.
    fn candidates(&self, rho: f64) -> impl Iterator<Item = usize> + '_ {
        let hi = self.inner.partition_point(|&v| v <= rho);
        let lo = self.outer_prefix_max[..hi].partition_point(|&v| v < rho);
        self.order[lo..hi].iter().copied()
    }
}

/// `V(x) = sum_n omega_n |n|^-alpha phi((x - n)/r(n))` on a finite island set.
#[derive(Debug, Clone)]
pub struct IslandPotential<P: BumpProfile = MollifierBump> {
    islands: IslandSet,
    couplings: Vec<f64>,
    coupling_bound: f64,
    alpha: f64,
    profile: P,
    weights: Vec<f64>,
    index: RadialIndex,
}

impl<P: BumpProfile> IslandPotential<P> {
    pub fn new(
        islands: IslandSet,
        couplings: &DisorderRealization,
        alpha: f64,
        profile: P,
    ) -> Result<Self> {
        Self::with_couplings(
            islands,
            couplings.couplings.clone(),
            couplings.sup_bound(),
            alpha,
            profile,
        )
    }

    pub fn with_couplings(
        islands: IslandSet,
        couplings: Vec<f64>,
        coupling_bound: f64,
        alpha: f64,
        profile: P,
    ) -> Result<Self> {
        islands.check_parameters()?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(precondition!("alpha must be >= 0, got {alpha}"));
        }
        if couplings.len() != islands.len() {
            return Err(precondition!(
                "{} couplings for {} islands",
                couplings.len(),
                islands.len()
            ));
        }
        if let Some(w) = couplings.iter().find(|w| w.abs() > coupling_bound) {
            return Err(precondition!("coupling {w} exceeds the bound M = {coupling_bound}"));
        }
        let mut weights = Vec::with_capacity(islands.len());
        for (i, isl) in islands.islands.iter().enumerate() {
            let m = isl.center_norm();
            if m == 0.0 && alpha > 0.0 {
                return Err(precondition!(
                    "island {i} sits at the origin, where |n|^-alpha is undefined"
                ));
            }
            weights.push(if alpha == 0.0 { 1.0 } else { m.powf(-alpha) });
        }
        let index = RadialIndex::new(&islands);
        Ok(IslandPotential {
            islands,
            couplings,
            coupling_bound,
            alpha,
            profile,
            weights,
            index,
        })
    }

    pub fn islands(&self) -> &IslandSet {
        &self.islands
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn coupling_bound(&self) -> f64 {
        self.coupling_bound
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn profile(&self) -> &P {
        &self.profile
    }

    pub fn dimension(&self) -> usize {
        self.islands.dimension
    }

    /// Index of the island whose open support ball contains `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let rho = norm(x);
        self.index.candidates(rho).find(|&i| {
            let isl = &self.islands.islands[i];
            let d2: f64 = x
                .iter()
                .zip(&isl.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 < isl.radius * isl.radius
        })
    }

    fn scaled(&self, i: usize, x: &[f64], u: &mut [f64]) -> f64 {
        let isl = &self.islands.islands[i];
        for ((uj, xj), cj) in u.iter_mut().zip(x).zip(&isl.center) {
            *uj = (xj - cj) / isl.radius;
        }
        isl.radius
    }

    /// `V(x)`; at most one summand is nonzero.
    pub fn value(&self, x: &[f64]) -> f64 {
        let Some(i) = self.locate(x) else {
            return 0.0;
        };
        let mut u = vec![0.0; x.len()];
        self.scaled(i, x, &mut u);
        self.couplings[i] * self.weights[i] * self.profile.value(&u)
    }

    /// `b1(x) = -(x . grad V)(x)`, the multiplication operator `i[V, A]`.
    pub fn commutator_field(&self, x: &[f64]) -> f64 {
        let Some(i) = self.locate(x) else {
            return 0.0;
        };
        self.couplings[i] * self.unit_commutator(i, x)
    }

    /// `(x . grad)(x . grad) V (x)`.
    pub fn double_commutator_field(&self, x: &[f64]) -> f64 {
        let Some(i) = self.locate(x) else {
            return 0.0;
        };
        let d = x.len();
        let mut u = vec![0.0; d];
        let r = self.scaled(i, x, &mut u);
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        self.profile.gradient(&u, &mut grad);
        self.profile.hessian(&u, &mut hess);
        let x_grad: f64 = x.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mut x_hess_x = 0.0;
        for j in 0..d {
            for k in 0..d {
                x_hess_x += x[j] * hess[j * d + k] * x[k];
            }
        }
        self.couplings[i] * self.weights[i] * (x_grad / r + x_hess_x / (r * r))
    }

    /// `B(x) = b1(x) - 2 V(x)`, so that `i[H, A] = 2H + B`.
    pub fn b_field(&self, x: &[f64]) -> f64 {
        let Some(i) = self.locate(x) else {
            return 0.0;
        };
        self.couplings[i] * self.unit_b(i, x)
    }

    /// `-x . grad v_i` for the unit-coupling summand `v_i`.
    fn unit_commutator(&self, i: usize, x: &[f64]) -> f64 {
        let d = x.len();
        let mut u = vec![0.0; d];
        let r = self.scaled(i, x, &mut u);
        let mut grad = vec![0.0; d];
        self.profile.gradient(&u, &mut grad);
        let x_grad: f64 = x.iter().zip(&grad).map(|(a, b)| a * b).sum();
        -self.weights[i] * x_grad / r
    }

    fn unit_b(&self, i: usize, x: &[f64]) -> f64 {
        let d = x.len();
        let mut u = vec![0.0; d];
        self.scaled(i, x, &mut u);
        self.unit_commutator(i, x) - 2.0 * self.weights[i] * self.profile.value(&u)
    }

    /// `|B_i|` for unit coupling at scaled coordinate `u` of island `i`.
    fn unit_b_at_scaled(&self, i: usize, u: &[f64], x: &mut [f64]) -> f64 {
        let isl = &self.islands.islands[i];
        for ((xj, uj), cj) in x.iter_mut().zip(u).zip(&isl.center) {
            *xj = cj + isl.radius * uj;
        }
        if u.iter().map(|v| v * v).sum::<f64>() >= 1.0 {
            return 0.0;
        }
        self.unit_b(i, x).abs()
    }
}

/// Resolution of the per-island probe grids used for `E0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeResolution {
    /// Probe points per axis per unit of scaled radius.
    pub points_per_unit: usize,
    /// Number of local zoom passes around the running argmax.
    pub zoom_passes: usize,
}

impl Default for ProbeResolution {
    fn default() -> Self {
        ProbeResolution {
            points_per_unit: 64,
            zoom_passes: 4,
        }
    }
}

/// Outcome of [`compute_e0`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct E0Report {
    /// `E0` including the tail bound when it applies; `+inf` when unbounded.
    pub e0: f64,
    /// `M/2` times the largest per-island probe-grid sup.
    pub e0_truncated: f64,
    /// `M/2` times the analytic bound for islands beyond the truncation.
    pub tail_bound: Option<f64>,
    pub argmax_island: Option<usize>,
    pub coupling_bound: f64,
    pub resolution: ProbeResolution,
}

impl E0Report {
    pub fn is_bounded(&self) -> bool {
        self.e0.is_finite()
    }
}

/// Whether the finite island set stands for itself or truncates an infinite family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Truncation {
    Finite,
    /// More islands exist beyond the largest `|n|` present.
    Infinite,
}

/// Largest `|b1 - 2V|` over one island with unit coupling.
pub fn island_b_sup<P: BumpProfile>(
    p: &IslandPotential<P>,
    island: usize,
    resolution: ProbeResolution,
) -> f64 {
    let d = p.dimension();
    let mut x = vec![0.0; d];
    let mut u = vec![0.0; d];
    let per_axis = 2 * resolution.points_per_unit + 1;
    let mut step = 1.0 / resolution.points_per_unit as f64;
    let mut best = 0.0;
    let mut best_u = vec![0.0; d];
    let mut idx = vec![0usize; d];
    // coarse pass over [-1, 1]^d
    loop {
        for j in 0..d {
            u[j] = -1.0 + step * idx[j] as f64;
        }
        let v = p.unit_b_at_scaled(island, &u, &mut x);
        if v > best {
            best = v;
            best_u.copy_from_slice(&u);
        }
        if !odometer(&mut idx, per_axis) {
            break;
        }
    }
    // zoom passes: 9^d sub-grid spanning one coarse cell on each side
    let sub = 9;
    for _ in 0..resolution.zoom_passes {
        let center = best_u.clone();
        let fine = 2.0 * step / (sub - 1) as f64;
        let mut idx = vec![0usize; d];
        loop {
            for j in 0..d {
                u[j] = center[j] - step + fine * idx[j] as f64;
            }
            let v = p.unit_b_at_scaled(island, &u, &mut x);
            if v > best {
                best = v;
                best_u.copy_from_slice(&u);
            }
            if !odometer(&mut idx, sub) {
                break;
            }
        }
        step = fine;
    }
    best
}

/// Advances a mixed-radix counter; returns false after the last state.
pub(crate) fn odometer(idx: &mut [usize], radix: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < radix {
            return true;
        }
        *v = 0;
    }
    false
}

/// `E0 = (1/2) sup_x sup_{|omega| <= M} |b1(x) - 2V(x)|`.
///
/// The couplings stored in `p` are ignored; only the geometry, `alpha`, the
/// profile and the bound `coupling_bound` enter. For an infinite family with
/// `alpha + beta < 1` the sup is unbounded and `+inf` is returned.
pub fn compute_e0<P: BumpProfile>(
    p: &IslandPotential<P>,
    coupling_bound: f64,
    truncation: Truncation,
    resolution: ProbeResolution,
) -> Result<E0Report> {
    if !(coupling_bound >= 0.0 && coupling_bound.is_finite()) {
        return Err(precondition!("M must be finite and >= 0, got {coupling_bound}"));
    }
    let set = p.islands();
    let mut best = 0.0;
    let mut argmax = None;
    for i in 0..set.len() {
        let v = island_b_sup(p, i, resolution);
        if v > best {
            best = v;
            argmax = Some(i);
        }
    }
    let half = 0.5 * coupling_bound;
    let e0_truncated = half * best;
    let mut report = E0Report {
        e0: e0_truncated,
        e0_truncated,
        tail_bound: None,
        argmax_island: argmax,
        coupling_bound,
        resolution,
    };
    if truncation == Truncation::Infinite {
        let decay = p.alpha() + set.beta;
        if decay < 1.0 {
            report.e0 = f64::INFINITY;
            return Ok(report);
        }
        // |x|/r <= |n|^(1-beta)/c1 + 1 on a support ball and 0 <= phi <= 1, so the
        // unit summand obeys |B| <= |n|^-alpha (|n|^(1-beta) G / c1 + G + 2),
        // nonincreasing in |n| once alpha + beta >= 1.
        let rho = set
            .islands
            .iter()
            .map(|i| i.center_norm())
            .fold(0.0, f64::max);
        if rho > 0.0 {
            let g = p.profile().gradient_sup();
            let bound = rho.powf(-p.alpha()) * (rho.powf(1.0 - set.beta) * g / set.c1 + g + 2.0);
            let tail = half * bound;
            report.tail_bound = Some(tail);
            if p.alpha() > 0.0 {
                report.e0 = report.e0.max(tail);
            }
        }
    }
    Ok(report)
}
