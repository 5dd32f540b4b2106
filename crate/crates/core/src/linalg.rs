//! Banded symmetric LDLᵀ with Sylvester inertia, and a shift-invert Lanczos
//! eigensolver with full reorthogonalization and locking.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::disorder::index_rng;
use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: `band[i * (bw + 1) + k] = A(i, i - bw + k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetric {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSymmetric {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        BandedSymmetric {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            None
        } else {
            Some(i * (self.bw + 1) + (self.bw + j - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.band[s])
    }

    /// Adds `v` to `A(i, j)` (and, implicitly, `A(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bw));
        self.band[s] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `LDLᵀ` of `A - shift I` without pivoting. A pivot smaller than
    /// `pivot_floor` is reported as a failure so the caller can move the shift.
    pub fn ldlt(&self, shift: f64, pivot_floor: f64) -> Result<BandLdlt> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        let mut d = vec![0.0; n];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                // L(i, j) = (A(i, j) - sum_k L(i, k) d_k L(j, k)) / d_j
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + bw + j - i];
                for k in k0..j {
                    s -= l[i * w + bw + k - i] * d[k] * l[j * w + bw + k - j];
                }
                l[i * w + bw + j - i] = s / d[j];
            }
            let mut s = l[i * w + bw] - shift;
            for k in j0..i {
                let lik = l[i * w + bw + k - i];
                s -= lik * lik * d[k];
            }
            if !(s.abs() > pivot_floor) {
                return Err(Error::Solver(alloc::format!(
                    "pivot {s:e} at row {i} below {pivot_floor:e} for shift {shift}"
                )));
            }
            d[i] = s;
        }
        Ok(BandLdlt { n, bw, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdlt {
    /// Number of negative pivots, i.e. eigenvalues of `A` below the shift.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + bw + k - i] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for r in (i + 1)..(i + 1 + bw).min(n) {
                s -= self.l[r * w + bw + i - r] * x[r];
            }
            x[i] = s;
        }
    }
}

/// A symmetric operator that the eigensolver can apply and factor.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn banded(&self) -> BandedSymmetric;
    /// Upper bound on the spectral radius; tolerances are relative to it.
    fn scale(&self) -> f64;
}

/// Eigenvalue with unit eigenvector and its residual `||Hf - λf||`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverOptions {
    /// Accepted residual relative to [`SymmetricOperator::scale`].
    pub tol: f64,
    /// Largest number of eigenvalues solved for in one shift.
    pub slice_size: usize,
    /// Deterministic seed of the Lanczos start vectors.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            slice_size: 24,
            seed: 0x5EED,
        }
    }
}

/// Statistics about how a window was solved.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverProvenance {
    pub method: String,
    pub eigenvalues_in_window: usize,
    pub factorizations: usize,
    pub shift_retries: usize,
    pub lanczos_steps: usize,
}

struct Factored {
    ldlt: BandLdlt,
    shift: f64,
}

struct WindowSolver<'a, H: SymmetricOperator> {
    h: &'a H,
    band: BandedSymmetric,
    opts: SolverOptions,
    scale: f64,
    prov: SolverProvenance,
    slice_counter: u64,
}

impl<'a, H: SymmetricOperator> WindowSolver<'a, H> {
    /// Factors `H - shift`, nudging the shift on a tiny pivot.
    fn factor(&mut self, shift: f64) -> Result<Factored> {
        let floor = 1e-13 * self.scale;
        let mut nudge = 1e-10 * self.scale.max(1.0);
        for attempt in 0..8 {
            let s = if attempt == 0 {
                shift
            } else {
                shift + if attempt % 2 == 1 { nudge } else { -nudge }
            };
            self.prov.factorizations += 1;
            match self.band.ldlt(s, floor) {
                Ok(ldlt) => return Ok(Factored { ldlt, shift: s }),
                Err(_) => {
                    self.prov.shift_retries += 1;
                    if attempt % 2 == 0 && attempt > 0 {
                        nudge *= 10.0;
                    }
                }
            }
        }
        Err(Error::Solver(alloc::format!(
            "factorization of H - sigma failed near sigma = {shift} after shift perturbation"
        )))
    }

    fn count_below(&mut self, shift: f64) -> Result<(usize, f64)> {
        let f = self.factor(shift)?;
        Ok((f.ldlt.negative_count(), f.shift))
    }

    /// Eigenpairs with eigenvalues in `[a, b)`, known to number `m`.
    fn solve_slice(&mut self, a: f64, b: f64, m: usize, locked_global: &[Vec<f64>]) -> Result<Vec<EigenPair>> {
        let n = self.h.dim();
        let fac = self.factor(0.5 * (a + b))?;
        let mut found: Vec<EigenPair> = Vec::new();
        let mut kdim = (2 * m + 20).max(40).min(n);
        self.slice_counter += 1;
        let mut rng = index_rng(self.opts.seed, self.slice_counter);
        let tol = self.opts.tol * self.scale;
        let mut stalls = 0;
        while found.len() < m {
            let locked: Vec<&[f64]> = locked_global
                .iter()
                .map(|v| v.as_slice())
                .chain(found.iter().map(|p| p.eigenvector.as_slice()))
                .collect();
            let available = n.saturating_sub(locked.len());
            if available == 0 {
                break;
            }
            let kmax = kdim.min(available);
            let new = self.lanczos_run(&fac, a, b, m - found.len(), kmax, &locked, &mut rng, tol)?;
            if new.is_empty() {
                stalls += 1;
                if kmax == available || stalls > 6 {
                    break;
                }
                kdim = (kdim * 2).min(n);
            }
            found.extend(new);
        }
        if found.len() < m {
            return Err(Error::Solver(alloc::format!(
                "found {} of {m} eigenvalues in [{a}, {b})",
                found.len()
            )));
        }
        found.truncate(m);
        Ok(found)
    }

    #[allow(clippy::too_many_arguments)]
    fn lanczos_run<R: Rng>(
        &mut self,
        fac: &Factored,
        a: f64,
        b: f64,
        wanted: usize,
        kmax: usize,
        locked: &[&[f64]],
        rng: &mut R,
        tol: f64,
    ) -> Result<Vec<EigenPair>> {
        let n = self.h.dim();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(kmax);
        let mut alphas: Vec<f64> = Vec::with_capacity(kmax);
        let mut betas: Vec<f64> = Vec::with_capacity(kmax);
        let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut q, locked.iter().copied());
        if normalize(&mut q) == 0.0 {
            return Ok(Vec::new());
        }
        let mut w = vec![0.0; n];
        let mut accepted: Vec<EigenPair>;
        loop {
            basis.push(q.clone());
            w.copy_from_slice(&q);
            fac.ldlt.solve_in_place(&mut w);
            self.prov.lanczos_steps += 1;
            let alpha = dot(&w, &q);
            alphas.push(alpha);
            // full reorthogonalization, twice
            for _ in 0..2 {
                orthogonalize(&mut w, locked.iter().copied());
                orthogonalize(&mut w, basis.iter().map(|v| v.as_slice()));
            }
            let beta = norm2(&w);
            let j = basis.len();
            let done = j >= kmax || beta <= 1e-12 * alpha.abs().max(1e-300);
            if done || j % 10 == 0 {
                accepted = self.extract(fac, &basis, &alphas, &betas, a, b, tol);
                if accepted.len() >= wanted || done {
                    break;
                }
            }
            betas.push(beta);
            for (qi, wi) in q.iter_mut().zip(&w) {
                *qi = wi / beta;
            }
        }
        accepted.truncate(wanted);
        Ok(accepted)
    }

    /// Ritz pairs of the current Krylov basis with eigenvalue in `[a, b)` and
    /// true residual below `tol`.
    #[allow(clippy::too_many_arguments)]
    fn extract(
        &self,
        fac: &Factored,
        basis: &[Vec<f64>],
        alphas: &[f64],
        betas: &[f64],
        a: f64,
        b: f64,
        tol: f64,
    ) -> Vec<EigenPair> {
        let j = basis.len();
        let n = self.h.dim();
        let t = DMatrix::from_fn(j, j, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut out = Vec::new();
        let mut hv = vec![0.0; n];
        for (idx, &theta) in eig.eigenvalues.iter().enumerate() {
            if theta.abs() < 1e-300 {
                continue;
            }
            let lambda = fac.shift + 1.0 / theta;
            if !(lambda >= a && lambda < b) {
                continue;
            }
            let s = eig.eigenvectors.column(idx);
            let mut v = vec![0.0; n];
            for (k, qk) in basis.iter().enumerate() {
                let c = s[k];
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi += c * qi;
                }
            }
            normalize(&mut v);
            let lambda = rayleigh(self.h, &v, &mut hv);
            let res = residual_norm(&hv, &v, lambda);
            if res <= tol && lambda >= a && lambda < b {
                canonical_sign(&mut v);
                out.push(EigenPair {
                    eigenvalue: lambda,
                    eigenvector: v,
                    residual: res,
                });
            }
        }
        out.sort_by(|p, q| p.eigenvalue.partial_cmp(&q.eigenvalue).unwrap());
        out
    }
}

fn rayleigh<H: SymmetricOperator>(h: &H, v: &[f64], hv: &mut [f64]) -> f64 {
    h.apply(v, hv);
    dot(v, hv)
}

fn residual_norm(hv: &[f64], v: &[f64], lambda: f64) -> f64 {
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
        .sum::<f64>()
        .sqrt()
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize<'b>(v: &mut [f64], against: impl Iterator<Item = &'b [f64]>) {
    for u in against {
        let c = dot(v, u);
        for (vi, ui) in v.iter_mut().zip(u) {
            *vi -= c * ui;
        }
    }
}

/// Eigenpairs of `h` with eigenvalues in `[lo, hi)`, ascending, at most `k_max`.
///
/// Sylvester inertia of `H - sigma` counts the eigenvalues in each slice, so
/// the window is bisected until every slice holds at most `slice_size` of
/// them; each slice is then solved by shift-invert Lanczos about its midpoint
/// with locking, which also resolves degenerate eigenvalues.
pub fn solve_window<H: SymmetricOperator>(
    h: &H,
    lo: f64,
    hi: f64,
    k_max: usize,
    opts: SolverOptions,
) -> Result<(Vec<EigenPair>, SolverProvenance)> {
    let mut prov = SolverProvenance {
        method: "banded-ldlt shift-invert lanczos".into(),
        ..Default::default()
    };
    if !(lo < hi) || k_max == 0 || h.dim() == 0 {
        return Ok((Vec::new(), prov));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Precondition(alloc::format!(
            "window [{lo}, {hi}] must be finite"
        )));
    }
    let mut solver = WindowSolver {
        h,
        band: h.banded(),
        opts,
        scale: h.scale().max(f64::MIN_POSITIVE),
        prov: core::mem::take(&mut prov),
        slice_counter: 0,
    };
    let (c_lo, lo) = solver.count_below(lo)?;
    let (c_hi, hi) = solver.count_below(hi)?;
    let total = c_hi.saturating_sub(c_lo);
    solver.prov.eigenvalues_in_window = total;
    let want = total.min(k_max);
    let mut out: Vec<EigenPair> = Vec::with_capacity(want);
    let mut stack = vec![(lo, hi, c_lo, c_hi)];
    // depth-first, lower half first, so eigenvalues come out ascending
    while let Some((a, b, ca, cb)) = stack.pop() {
        if out.len() >= want {
            break;
        }
        let m = cb.saturating_sub(ca);
        if m == 0 {
            continue;
        }
        let narrow = (b - a) <= 1e-12 * solver.scale;
        if m <= solver.opts.slice_size || narrow {
            let locked: Vec<Vec<f64>> = Vec::new();
            let mut pairs = solver.solve_slice(a, b, m, &locked)?;
            pairs.sort_by(|p, q| p.eigenvalue.partial_cmp(&q.eigenvalue).unwrap());
            out.extend(pairs);
            continue;
        }
        let mid = 0.5 * (a + b);
        let (cm, mid) = solver.count_below(mid)?;
        stack.push((mid, b, cm, cb));
        stack.push((a, mid, ca, cm));
    }
    out.truncate(want);
    Ok((out, solver.prov))
}
