//! Island sets: centers with radii comparable to `|x|^beta` whose shrunken
//! balls `B(x, gamma r(x))` are pairwise disjoint.

use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::disorder::index_rng;
use crate::error::{precondition, Error, Result};

/// Relative slack used when a constraint is met with equality in exact
/// arithmetic (tangent discs, extremal radii of the square packing).
pub const GEOMETRY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Island {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Island {
    pub fn center_norm(&self) -> f64 {
        norm(&self.center)
    }
}

/// How a set was produced; only used to locate annuli for density estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Layout {
    /// Square-annulus packing with base scale `scale` and annuli `1..=k_max`.
    Example1 { scale: f64, k_max: u32 },
    Greedy,
    #[default]
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IslandSet {
    #[cfg_attr(feature = "serde", serde(rename = "d"))]
    pub dimension: usize,
    pub beta: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub islands: Vec<Island>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub layout: Layout,
}

impl IslandSet {
    pub fn len(&self) -> usize {
        self.islands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.islands.is_empty()
    }

    /// Checks the scalar parameters (not the geometric invariants, see
    /// [`validate_island_set`]).
    pub fn check_parameters(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(precondition!("dimension must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(precondition!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(precondition!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.c1 > 0.0 && self.c1 <= self.c2 && self.c2.is_finite()) {
            return Err(precondition!(
                "need 0 < c1 <= c2 < inf, got c1 = {}, c2 = {}",
                self.c1,
                self.c2
            ));
        }
        for (i, isl) in self.islands.iter().enumerate() {
            if isl.center.len() != self.dimension {
                return Err(precondition!(
                    "island {i} has a {}-dimensional center in a {}-dimensional set",
                    isl.center.len(),
                    self.dimension
                ));
            }
            if !(isl.radius > 0.0 && isl.radius.is_finite()) {
                return Err(precondition!("island {i} has non-positive radius {}", isl.radius));
            }
        }
        Ok(())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The two-dimensional packing of square annuli `A_k = B_{k+1} \ B_k` by
/// twelve inscribed discs of radius `2^(k-1) R` per annulus, `k = 1..=k_max`.
pub fn build_example1_islands(scale: f64, k_max: u32) -> Result<IslandSet> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(precondition!("R must be positive, got {scale}"));
    }
    let mut islands = Vec::with_capacity(12 * k_max as usize);
    for k in 1..=k_max {
        let s = scale * (2.0).powi(k as i32 - 1);
        let mut centers: Vec<[f64; 2]> = Vec::with_capacity(12);
        let offsets = [-3.0 * s, -s, s, 3.0 * s];
        // x2 = +-3s rows, then x1 = +-3s columns; the four corners appear in both.
        for &x2 in &[-3.0 * s, 3.0 * s] {
            for &x1 in &offsets {
                centers.push([x1, x2]);
            }
        }
        for &x1 in &[-3.0 * s, 3.0 * s] {
            for &x2 in &offsets {
                if !centers.contains(&[x1, x2]) {
                    centers.push([x1, x2]);
                }
            }
        }
        debug_assert_eq!(centers.len(), 12);
        islands.extend(centers.into_iter().map(|c| Island {
            center: c.to_vec(),
            radius: s,
        }));
    }
    Ok(IslandSet {
        dimension: 2,
        beta: 1.0,
        gamma: 1.0,
        c1: 1.0 / (3.0 * 2.0.sqrt()),
        c2: 1.0 / 10.0.sqrt(),
        islands,
        layout: Layout::Example1 { scale, k_max },
    })
}

/// Parameters of the greedy lattice packing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GreedySpec {
    pub dimension: usize,
    pub beta: f64,
    /// Radius law `r(x) = c |x|^beta`, so `c1 = c2 = c`.
    pub c: f64,
    pub gamma: f64,
    /// Lattice spacing of candidate centers.
    pub spacing: f64,
    /// Every accepted ball `B(x, r(x))` lies inside `|y| <= extent`.
    pub extent: f64,
}

/// Greedy packing: walk lattice candidates outward from the origin and keep a
/// candidate when its shrunken ball misses every ball accepted so far.
pub fn greedy_islands(spec: &GreedySpec) -> Result<IslandSet> {
    let GreedySpec {
        dimension,
        beta,
        c,
        gamma,
        spacing,
        extent,
    } = *spec;
    if dimension == 0 || dimension > 4 {
        return Err(precondition!("greedy packing supports 1 <= d <= 4, got {dimension}"));
    }
    if !(spacing > 0.0 && extent > 0.0 && c > 0.0) {
        return Err(precondition!("spacing, extent and c must be positive"));
    }
    let per_axis = (extent / spacing).floor() as i64;
    let side = (2 * per_axis + 1) as u64;
    let total = side.saturating_pow(dimension as u32);
    if total > 5_000_000 {
        return Err(Error::Resource {
            unknowns: total,
            budget: 5_000_000,
        });
    }
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = alloc::vec![-per_axis; dimension];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
        let r = norm(&x);
        if r > 0.0 && r + c * r.powf(beta) <= extent {
            candidates.push((r, x));
        }
        // odometer increment
        let mut axis = 0;
        loop {
            if axis == dimension {
                break;
            }
            idx[axis] += 1;
            if idx[axis] > per_axis {
                idx[axis] = -per_axis;
                axis += 1;
            } else {
                break;
            }
        }
        if axis == dimension {
            break;
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });
    let mut islands: Vec<Island> = Vec::new();
    for (r, x) in candidates {
        let radius = c * r.powf(beta);
        let clear = islands
            .iter()
            .all(|other| distance(&x, &other.center) > gamma * (radius + other.radius));
        if clear {
            islands.push(Island { center: x, radius });
        }
    }
    Ok(IslandSet {
        dimension,
        beta,
        gamma,
        c1: c,
        c2: c,
        islands,
        layout: Layout::Greedy,
    })
}

/// One broken invariant, with the measured margin (negative = violated by).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Violation {
    Disjointness {
        first: usize,
        second: usize,
        distance: f64,
        required: f64,
        margin: f64,
    },
    Comparability {
        island: usize,
        radius: f64,
        lower: f64,
        upper: f64,
        margin: f64,
    },
}

/// Checks both island-set invariants. Balls may touch (tangency) but their
/// interiors must be disjoint; comparability uses `c1 |x|^beta <= r <= c2 |x|^beta`.
/// Never fails: malformed input simply yields violations.
pub fn validate_island_set(s: &IslandSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = 1.0 - GEOMETRY_REL_TOL;
    for i in 0..s.islands.len() {
        for j in (i + 1)..s.islands.len() {
            let (a, b) = (&s.islands[i], &s.islands[j]);
            let d = distance(&a.center, &b.center);
            let required = s.gamma * (a.radius + b.radius);
            if !(d >= required * tol) {
                out.push(Violation::Disjointness {
                    first: i,
                    second: j,
                    distance: d,
                    required,
                    margin: d - required,
                });
            }
        }
    }
    for (i, isl) in s.islands.iter().enumerate() {
        let r = isl.center_norm();
        if r == 0.0 {
            continue;
        }
        let scale = r.powf(s.beta);
        let lower = s.c1 * scale;
        let upper = s.c2 * scale;
        let below = isl.radius < lower * tol;
        let above = isl.radius > upper * (1.0 + GEOMETRY_REL_TOL);
        if below || above || isl.radius.is_nan() {
            let margin = if below {
                isl.radius - lower
            } else {
                upper - isl.radius
            };
            out.push(Violation::Comparability {
                island: i,
                radius: isl.radius,
                lower,
                upper,
                margin,
            });
        }
    }
    out
}

/// Monte Carlo estimate of the covered fraction of an annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityEstimate {
    pub annulus: u32,
    pub fraction: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Fraction of the square annulus `A_k` covered by the discs of `C_k`.
///
/// Points are drawn uniformly in `A_k` by rejection from `B_{k+1}`; the stream
/// is keyed by `(seed, k)` so different annuli can be estimated in parallel.
pub fn island_density(s: &IslandSet, k: u32, samples: u64, seed: u64) -> Result<DensityEstimate> {
    if samples == 0 {
        return Err(precondition!("samples must be positive"));
    }
    if s.is_empty() {
        return Ok(DensityEstimate {
            annulus: k,
            fraction: 0.0,
            std_error: 0.0,
            samples,
        });
    }
    let (scale, k_max) = match s.layout {
        Layout::Example1 { scale, k_max } => (scale, k_max),
        _ => {
            return Err(precondition!(
                "annulus density is defined for the square-annulus packing only"
            ))
        }
    };
    if k == 0 || k > k_max {
        return Err(Error::OutOfRange(alloc::format!(
            "annulus k = {k} outside 1..={k_max}"
        )));
    }
    let inner = scale * (2.0).powi(k as i32);
    let outer = 2.0 * inner;
    let radius = inner / 2.0;
    let discs: Vec<&Island> = s
        .islands
        .iter()
        .filter(|isl| (isl.radius - radius).abs() <= GEOMETRY_REL_TOL * radius)
        .collect();
    let mut rng = index_rng(seed, k as u64);
    let mut hits = 0u64;
    let mut drawn = 0u64;
    while drawn < samples {
        let x = rng.random_range(-outer..outer);
        let y = rng.random_range(-outer..outer);
        if x.abs() <= inner && y.abs() <= inner {
            continue;
        }
        drawn += 1;
        let covered = discs.iter().any(|isl| {
            let dx = x - isl.center[0];
            let dy = y - isl.center[1];
            dx * dx + dy * dy < isl.radius * isl.radius
        });
        if covered {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(DensityEstimate {
        annulus: k,
        fraction: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn first_annulus_has_twelve_centers_with_two_moduli() {
        let s = build_example1_islands(1.0, 1).unwrap();
        assert_eq!(s.len(), 12);
        for isl in &s.islands {
            assert_eq!(isl.radius, 1.0);
            let m = isl.center_norm();
            assert!(
                (m - 10f64.sqrt()).abs() < 1e-14 || (m - 18f64.sqrt()).abs() < 1e-14,
                "modulus {m}"
            );
        }
        let corners = s
            .islands
            .iter()
            .filter(|i| (i.center_norm() - 18f64.sqrt()).abs() < 1e-14)
            .count();
        assert_eq!(corners, 4);
    }

    #[test]
    fn empty_for_zero_annuli() {
        let s = build_example1_islands(1.0, 0).unwrap();
        assert!(s.is_empty());
        assert!(validate_island_set(&s).is_empty());
        assert_eq!(island_density(&s, 1, 100, 0).unwrap().fraction, 0.0);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(build_example1_islands(0.0, 2).is_err());
        assert!(build_example1_islands(-1.0, 2).is_err());
    }

    #[test]
    fn three_annuli_pairwise_disjoint_by_exhaustion() {
        let s = build_example1_islands(1.0, 3).unwrap();
        assert_eq!(s.len(), 36);
        // Independent brute force: open discs intersect iff d < r1 + r2.
        for (i, a) in s.islands.iter().enumerate() {
            for b in &s.islands[i + 1..] {
                let dx = a.center[0] - b.center[0];
                let dy = a.center[1] - b.center[1];
                let d2 = dx * dx + dy * dy;
                let rr = a.radius + b.radius;
                assert!(d2 >= rr * rr, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn example1_validates_for_four_annuli() {
        let s = build_example1_islands(1.0, 4).unwrap();
        assert_eq!(s.len(), 48);
        assert_eq!(validate_island_set(&s), Vec::new());
        // Irrational scale: tangencies are no longer exact in floating point.
        let s = build_example1_islands(0.3, 6).unwrap();
        assert_eq!(validate_island_set(&s), Vec::new());
    }

    #[test]
    fn shared_center_is_one_disjointness_violation() {
        let s = IslandSet {
            dimension: 2,
            beta: 1.0,
            gamma: 1.0,
            c1: 0.1,
            c2: 0.5,
            islands: alloc::vec![
                Island { center: alloc::vec![4.0, 0.0], radius: 1.0 },
                Island { center: alloc::vec![4.0, 0.0], radius: 1.0 },
            ],
            layout: Layout::Custom,
        };
        let v = validate_island_set(&s);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Disjointness { first: 0, second: 1, .. }));
    }

    #[test]
    fn oversized_radius_is_one_comparability_violation() {
        let mut s = build_example1_islands(1.0, 1).unwrap();
        s.islands.truncate(1);
        let m = s.islands[0].center_norm();
        s.islands[0].radius = 10.0 * s.c2 * m;
        let v = validate_island_set(&s);
        assert_eq!(v.len(), 1);
        match v[0] {
            Violation::Comparability { island, margin, .. } => {
                assert_eq!(island, 0);
                assert!(margin < 0.0);
            }
            _ => panic!("expected comparability violation"),
        }
    }

    #[test]
    fn comparability_bounds_are_attained() {
        let s = build_example1_islands(1.0, 5).unwrap();
        for isl in &s.islands {
            let m = isl.center_norm();
            assert!(isl.radius >= m / (3.0 * 2f64.sqrt()) * (1.0 - 1e-14));
            assert!(isl.radius <= m / 10f64.sqrt() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn density_first_two_annuli() {
        let s = build_example1_islands(1.0, 2).unwrap();
        for k in [1, 2] {
            let est = island_density(&s, k, 1_000_000, 11).unwrap();
            let z = (est.fraction - PI / 4.0) / est.std_error;
            assert!(z.abs() < 3.0, "k={k} estimate {est:?}");
        }
        assert!(matches!(island_density(&s, 3, 10, 0), Err(Error::OutOfRange(_))));
        assert!(matches!(island_density(&s, 0, 10, 0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn greedy_packing_is_valid() {
        for d in 1..=3 {
            let s = greedy_islands(&GreedySpec {
                dimension: d,
                beta: 1.0,
                c: 0.25,
                gamma: 1.0,
                spacing: 1.0,
                extent: 30.0,
            })
            .unwrap();
            assert!(!s.is_empty());
            assert_eq!(validate_island_set(&s), Vec::new(), "d = {d}");
            assert!(s
                .islands
                .iter()
                .all(|i| i.center_norm() + i.radius <= 30.0 + 1e-12));
        }
    }

    #[test]
    fn greedy_with_zero_beta_is_a_sparse_lattice() {
        let s = greedy_islands(&GreedySpec {
            dimension: 2,
            beta: 0.0,
            c: 0.5,
            gamma: 1.0,
            spacing: 1.0,
            extent: 5.0,
        })
        .unwrap();
        assert_eq!(validate_island_set(&s), Vec::new());
        assert!(s.islands.iter().all(|i| i.radius == 0.5));
    }
}
