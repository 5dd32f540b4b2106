//! Eigenpair diagnostics: inverse participation ratio, exponential decay,
//! virial residual, Mourre window matrix, IDS histograms and level-spacing
//! ratios, together with the synthetic reference ensembles they are compared
//! against.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::disorder::index_rng;
use crate::error::{precondition, Result};
use crate::grid::GridSpec;
use crate::linalg::{dot, EigenPair, SolverProvenance, SymmetricOperator};
use crate::operator::DiscreteHamiltonian;

pub use crate::linalg::{solve_window, SolverOptions};

/// Largest boundary weight for which a virial residual is considered reliable.
pub const VIRIAL_BOUNDARY_WEIGHT: f64 = 1e-6;

/// `Σ|f_i|⁴ / (Σ|f_i|²)²`: 1 for a delta, `1/n` for a uniform vector.
pub fn ipr(f: &[f64]) -> Result<f64> {
    let n2: f64 = f.iter().map(|v| v * v).sum();
    if !(n2 > 0.0) {
        return Err(precondition!("IPR of the zero vector is undefined"));
    }
    let n4: f64 = f.iter().map(|v| (v * v) * (v * v)).sum();
    Ok(n4 / (n2 * n2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VirialResidual {
    pub value: f64,
    pub boundary_weight: f64,
    /// Boundary weight above [`VIRIAL_BOUNDARY_WEIGHT`]: the value is reported
    /// but the state is not a trustworthy localized eigenstate.
    pub flagged: bool,
}

/// `|2λ + ⟨f, B f⟩|` for a unit eigenvector `f`, `b` the grid samples of `B`.
pub fn virial_residual(grid: &GridSpec, pair: &EigenPair, b: &[f64]) -> Result<VirialResidual> {
    let f = &pair.eigenvector;
    if f.len() != b.len() || f.len() != grid.len() {
        return Err(precondition!("eigenvector, field and grid sizes differ"));
    }
    let norm2 = dot(f, f);
    if !(norm2 > 0.0) {
        return Err(precondition!("eigenvector is zero"));
    }
    let fbf: f64 = f.iter().zip(b).map(|(v, w)| v * v * w).sum::<f64>() / norm2;
    let boundary_weight = grid.boundary_weight(f);
    Ok(VirialResidual {
        value: (2.0 * pair.eigenvalue + fbf).abs(),
        boundary_weight,
        flagged: boundary_weight >= VIRIAL_BOUNDARY_WEIGHT,
    })
}

/// Minimum eigenvalue of `M_jk = ⟨f_j, (2H + B) f_k⟩` over the given pairs.
pub fn mourre_gap(h: &DiscreteHamiltonian, pairs: &[EigenPair], b: &[f64]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(precondition!("Mourre gap needs at least one eigenpair in the window"));
    }
    let n = h.dim();
    if b.len() != n {
        return Err(precondition!("field has {} values for {n} unknowns", b.len()));
    }
    let m = pairs.len();
    let mut images = Vec::with_capacity(m);
    let mut hf = vec![0.0; n];
    for p in pairs {
        h.apply(&p.eigenvector, &mut hf);
        let img: Vec<f64> = hf
            .iter()
            .zip(&p.eigenvector)
            .zip(b)
            .map(|((hv, fv), bv)| 2.0 * hv + bv * fv)
            .collect();
        images.push(img);
    }
    let mut mat = DMatrix::from_fn(m, m, |j, k| dot(&pairs[j].eigenvector, &images[k]));
    mat = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(mat);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    /// `-slope` of `log max|f|` against distance; positive for decaying states.
    pub rate: f64,
    /// Coefficient of determination of the fit.
    pub goodness: f64,
    pub shells: usize,
}

/// Number of distance shells per half-length used by [`decay_fit`].
pub const DECAY_SHELLS_PER_HALF_LENGTH: usize = 32;

/// Shell maxima of `|f|` at distances from `center` in shells of width
/// `L / 32`; each shell contributes `(r, log|f|)` at its maximizing point.
/// Shells whose maximum is below `1e-14` of the global maximum are dropped as
/// round-off.
pub fn decay_fit(grid: &GridSpec, f: &[f64], center: &[f64]) -> Result<DecayFit> {
    if f.len() != grid.len() || center.len() != grid.dimension {
        return Err(precondition!("vector or center does not match the grid"));
    }
    let width = grid.half_length / DECAY_SHELLS_PER_HALF_LENGTH as f64;
    let count = (2.0 * grid.half_length * (grid.dimension as f64).sqrt() / width) as usize + 2;
    let mut best: Vec<(f64, f64)> = vec![(0.0, -1.0); count];
    let mut x = vec![0.0; grid.dimension];
    let mut global = 0.0_f64;
    for (flat, v) in f.iter().enumerate() {
        grid.point(flat, &mut x);
        let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        let s = ((r / width) as usize).min(count - 1);
        let a = v.abs();
        global = global.max(a);
        if a > best[s].1 {
            best[s] = (r, a);
        }
    }
    if !(global > 0.0) {
        return Err(precondition!("decay fit of the zero vector"));
    }
    let pts: Vec<(f64, f64)> = best
        .into_iter()
        .filter(|&(_, a)| a > 1e-14 * global)
        .map(|(r, a)| (r, a.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(precondition!("decay fit needs at least 4 shells, got {}", pts.len()));
    }
    let fit = linear_fit(&pts);
    Ok(DecayFit {
        rate: -fit.slope,
        goodness: fit.r_squared,
        shells: pts.len(),
    })
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_std_error: f64,
}

pub fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - intercept - slope * p.0;
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_std_error = if pts.len() > 2 && sxx > 0.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
        slope_std_error,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdsHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `counts / total`, the normalized counting measure.
    pub fraction: Vec<f64>,
    pub total: usize,
}

/// Histogram of `eigs` on `bins` equal bins over `range` (default: the data range).
/// Eigenvalues outside the range are counted in `total` but in no bin.
pub fn ids_histogram(eigs: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<IdsHistogram> {
    if bins == 0 {
        return Err(precondition!("histogram needs at least one bin"));
    }
    if eigs.is_empty() {
        return Err(precondition!("histogram needs at least one eigenvalue"));
    }
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi } else { lo + 1.0 })
    });
    if !(hi > lo) {
        return Err(precondition!("histogram range [{lo}, {hi}] is empty"));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &e in eigs {
        if e < lo || e > hi {
            continue;
        }
        let k = (((e - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = eigs.len();
    Ok(IdsHistogram {
        edges: (0..=bins).map(|k| lo + k as f64 * width).collect(),
        fraction: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        counts,
        total,
    })
}

/// Mean of `min(s_i, s_{i+1}) / max(s_i, s_{i+1})` over consecutive spacings.
pub fn spacing_ratio_stats(eigs: &[f64]) -> Result<f64> {
    if eigs.len() < 10 {
        return Err(precondition!("spacing ratios need at least 10 eigenvalues, got {}", eigs.len()));
    }
    let mut e = eigs.to_vec();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(mean_ratio(&e))
}

fn mean_ratio(sorted: &[f64]) -> f64 {
    let s: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in s.windows(2) {
        let (a, b) = (w[0], w[1]);
        let hi = a.max(b);
        sum += if hi > 0.0 { a.min(b) / hi } else { 1.0 };
        n += 1;
    }
    sum / n as f64
}

/// Mean and standard error of a per-sample statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn estimate(values: &[f64]) -> EnsembleEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    EnsembleEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: values.len(),
    }
}

/// Mean spacing ratio of `samples` sorted i.i.d. uniform spectra of `levels` levels.
pub fn poisson_reference(levels: usize, samples: usize, seed: u64) -> EnsembleEstimate {
    let per: Vec<f64> = (0..samples)
        .map(|s| {
            let mut rng = index_rng(seed, s as u64);
            let mut e: Vec<f64> = (0..levels).map(|_| rng.random::<f64>()).collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            mean_ratio(&e)
        })
        .collect();
    estimate(&per)
}

/// Mean spacing ratio of the central half of the spectra of `samples` GOE
/// matrices of size `dim`.
pub fn goe_reference(dim: usize, samples: usize, seed: u64) -> EnsembleEstimate {
    let per: Vec<f64> = (0..samples)
        .map(|s| {
            let mut rng = index_rng(seed, s as u64);
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = (&g + g.transpose()) * 0.5;
            let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            mean_ratio(&e[dim / 4..dim - dim / 4])
        })
        .collect();
    estimate(&per)
}

/// i.i.d. uniform `[-W/2, W/2]` value per grid cell, keyed by cell index.
pub fn anderson_field(grid: &GridSpec, disorder: f64, seed: u64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| disorder * (index_rng(seed, i as u64).random::<f64>() - 0.5))
        .collect()
}

/// Per-state localization diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateDiagnostics {
    pub eigenvalue: f64,
    pub residual: f64,
    pub ipr: f64,
    pub decay_rate: f64,
    pub decay_goodness: f64,
    pub boundary_weight: f64,
    pub virial_residual: f64,
    pub virial_flagged: bool,
}

pub fn diagnose(
    grid: &GridSpec,
    pair: &EigenPair,
    b: &[f64],
    center: &[f64],
) -> Result<StateDiagnostics> {
    let v = virial_residual(grid, pair, b)?;
    let (rate, goodness) = match decay_fit(grid, &pair.eigenvector, center) {
        Ok(fit) => (fit.rate, fit.goodness),
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok(StateDiagnostics {
        eigenvalue: pair.eigenvalue,
        residual: pair.residual,
        ipr: ipr(&pair.eigenvector)?,
        decay_rate: rate,
        decay_goodness: goodness,
        boundary_weight: v.boundary_weight,
        virial_residual: v.value,
        virial_flagged: v.flagged,
    })
}

/// Serializable result of a windowed spectral run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralReport {
    pub grid: GridSpec,
    pub window: (f64, f64),
    pub e0: f64,
    pub e1: Option<f64>,
    pub states: Vec<StateDiagnostics>,
    pub mourre_gap: Option<f64>,
    /// Margin `ε` used for "localized states only below `E₀ + ε`".
    pub virial_margin: f64,
    pub solver: SolverProvenance,
}

impl SpectralReport {
    /// States that look localized (small boundary weight and virial residual)
    /// but sit above `E₀ + ε`.
    pub fn localized_above_threshold(&self, virial_tol: f64) -> Vec<&StateDiagnostics> {
        self.states
            .iter()
            .filter(|s| {
                s.boundary_weight < VIRIAL_BOUNDARY_WEIGHT
                    && s.virial_residual < virial_tol * s.eigenvalue.abs().max(1.0)
                    && s.eigenvalue > self.e0 + self.virial_margin
            })
            .collect()
    }
}
