//! Free propagation `e^{iΔt}` with the continuum symbol on periodic grids,
//! band-limited test packets, Cook integrands and power-law fits.
//!
//! Fourier convention: `f̂(ξ) = ∫ f(x) e^{-ixξ} dx`, so
//! `f(x) = (2π)^{-d} ∫ f̂(ξ) e^{ixξ} dξ` and `e^{iΔt}` multiplies `f̂` by
//! `e^{-i|ξ|²t}`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{precondition, Error, Result};
use crate::fft::{fft_nd, signed_index};
use crate::grid::{Boundary, GridSpec};
use crate::spectral::linear_fit;

/// The envelope of a packet of Fourier width `w` is taken to be `32 / w` wide.
pub const ENVELOPE_FACTOR: f64 = 32.0;
/// Required gap `|c_j| - w` between the Fourier support and each axis, in units of `w`.
pub const AXIS_MARGIN_FRACTION: f64 = 0.05;
/// Smallest number of frequency bins across a Fourier support half-width.
pub const MIN_BINS_PER_WIDTH: f64 = 8.0;

/// `exp(1 - 1/(1 - u²))` on `|u| < 1`, zero elsewhere.
pub fn fourier_bump(u: f64) -> f64 {
    let s = u * u;
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s)).exp()
    }
}

fn check_fft_grid(grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if grid.boundary != Boundary::Periodic {
        return Err(precondition!("free propagation needs a periodic grid"));
    }
    if !grid.points.is_power_of_two() {
        return Err(precondition!("free propagation needs N a power of two, got {}", grid.points));
    }
    Ok(())
}

/// Angular frequency of FFT bin `m` on `grid`.
pub fn frequency(grid: &GridSpec, m: usize) -> f64 {
    PI / grid.half_length * signed_index(m, grid.points) as f64
}

/// Unit-norm packet whose Fourier transform is
/// `amplitude · Π_j bump((ξ_j - c_j) / w)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandLimitedTestFunction {
    pub grid: GridSpec,
    pub centers: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

pub fn make_test_function(grid: GridSpec, centers: &[f64], width: f64) -> Result<BandLimitedTestFunction> {
    check_fft_grid(&grid)?;
    if centers.len() != grid.dimension {
        return Err(precondition!(
            "{} Fourier centers given for dimension {}",
            centers.len(),
            grid.dimension
        ));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(precondition!("Fourier width must be positive, got {width}"));
    }
    let nyquist = PI / grid.spacing();
    let dk = PI / grid.half_length;
    if width < MIN_BINS_PER_WIDTH * dk {
        return Err(precondition!(
            "Fourier width {width} spans fewer than {MIN_BINS_PER_WIDTH} bins of {dk}; enlarge L"
        ));
    }
    for (j, &c) in centers.iter().enumerate() {
        if !(c.abs() - width >= AXIS_MARGIN_FRACTION * width) {
            return Err(precondition!(
                "Fourier support [{}, {}] on axis {j} touches the coordinate axis",
                c - width,
                c + width
            ));
        }
        if !(c.abs() + width < nyquist) {
            return Err(precondition!(
                "Fourier support on axis {j} reaches {} beyond the Nyquist frequency {nyquist}",
                c.abs() + width
            ));
        }
    }
    // discrete Parseval: h^d Σ|f_i|² = (2L)^{-d} Π_j Σ_m bump_j(k_m)² · amplitude²
    let mut prod = 1.0;
    for &c in centers {
        let s: f64 = (0..grid.points)
            .map(|m| fourier_bump((frequency(&grid, m) - c) / width).powi(2))
            .sum();
        prod *= s;
    }
    let amplitude = ((2.0 * grid.half_length).powi(grid.dimension as i32) / prod).sqrt();
    Ok(BandLimitedTestFunction {
        grid,
        centers: centers.to_vec(),
        width,
        amplitude,
    })
}

impl BandLimitedTestFunction {
    pub fn dimension(&self) -> usize {
        self.grid.dimension
    }

    /// `f̂(ξ)`.
    pub fn fourier(&self, xi: &[f64]) -> f64 {
        self.amplitude
            * self
                .centers
                .iter()
                .zip(xi)
                .map(|(c, x)| fourier_bump((x - c) / self.width))
                .product::<f64>()
    }

    /// Factor of `f̂` along `axis`, with `amplitude^{1/d}` folded into each axis.
    pub fn axis_fourier(&self, axis: usize, xi: f64) -> f64 {
        self.amplitude.powf(1.0 / self.dimension() as f64) * fourier_bump((xi - self.centers[axis]) / self.width)
    }

    /// Fourier support `[c_j - w, c_j + w]` along `axis`.
    pub fn support(&self, axis: usize) -> (f64, f64) {
        (self.centers[axis] - self.width, self.centers[axis] + self.width)
    }

    /// Largest `|ξ|` on the support.
    pub fn xi_max(&self) -> f64 {
        self.centers
            .iter()
            .map(|c| (c.abs() + self.width).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn envelope_width(&self) -> f64 {
        ENVELOPE_FACTOR / self.width
    }

    /// Smallest `L` keeping the packet inside the box up to time `t`.
    pub fn required_half_length(&self, t: f64) -> f64 {
        2.0 * self.xi_max() * t.abs() + self.envelope_width()
    }

    pub fn check_box(&self, t: f64) -> Result<()> {
        let need = self.required_half_length(t);
        if need > self.grid.half_length {
            return Err(Error::BoxExit {
                needed_half_length: need,
                half_length: self.grid.half_length,
            });
        }
        Ok(())
    }

    /// Grid values of `e^{iΔt} f`.
    pub fn evolve(&self, t: f64) -> Result<Vec<Complex64>> {
        self.check_box(t)?;
        let g = &self.grid;
        let n = g.points;
        let d = g.dimension;
        let total = g.len();
        // f_i = (2L)^{-d} Σ_m f̂(k_m) e^{-i|k_m|²t} e^{ik_m x_i}, x_i = -L + ih
        let scale = (n as f64 / (2.0 * g.half_length)).powi(d as i32);
        let axis_k: Vec<f64> = (0..n).map(|m| frequency(g, m)).collect();
        let mut data = vec![Complex64::default(); total];
        let mut xi = vec![0.0; d];
        for (flat, v) in data.iter_mut().enumerate() {
            let mut rest = flat;
            let mut parity = 0i64;
            for x in xi.iter_mut() {
                let m = rest % n;
                *x = axis_k[m];
                parity += signed_index(m, n);
                rest /= n;
            }
            let fh = self.fourier(&xi);
            if fh == 0.0 {
                continue;
            }
            let k2: f64 = xi.iter().map(|x| x * x).sum();
            let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            *v = Complex64::from_polar(sign * fh * scale, -k2 * t);
        }
        fft_nd(&mut data, n, d, true)?;
        Ok(data)
    }

    pub fn values(&self) -> Result<Vec<Complex64>> {
        self.evolve(0.0)
    }
}

/// `e^{iΔt} g` for an arbitrary grid function, by FFT with the continuum symbol.
pub fn propagate(grid: &GridSpec, g: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    check_fft_grid(grid)?;
    if g.len() != grid.len() {
        return Err(precondition!("grid function has {} values, grid has {}", g.len(), grid.len()));
    }
    let n = grid.points;
    let mut data = g.to_vec();
    fft_nd(&mut data, n, grid.dimension, false)?;
    let axis_k2: Vec<f64> = (0..n).map(|m| frequency(grid, m).powi(2)).collect();
    for (flat, v) in data.iter_mut().enumerate() {
        let mut rest = flat;
        let mut k2 = 0.0;
        for _ in 0..grid.dimension {
            k2 += axis_k2[rest % n];
            rest /= n;
        }
        *v *= Complex64::from_polar(1.0, -k2 * t);
    }
    fft_nd(&mut data, n, grid.dimension, true)?;
    Ok(data)
}

/// `‖g‖² = h^d Σ|g_i|²`.
pub fn grid_norm(grid: &GridSpec, g: &[Complex64]) -> f64 {
    (grid.spacing().powi(grid.dimension as i32) * g.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// A potential acting on grid functions.
pub trait PotentialApplier {
    fn apply(&self, grid: &GridSpec, g: &[Complex64]) -> Result<Vec<Complex64>>;
}

/// Multiplication by grid samples of a real potential.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicationPotential {
    pub values: Vec<f64>,
}

impl PotentialApplier for MultiplicationPotential {
    fn apply(&self, grid: &GridSpec, g: &[Complex64]) -> Result<Vec<Complex64>> {
        if g.len() != self.values.len() || g.len() != grid.len() {
            return Err(precondition!("potential and grid function sizes differ"));
        }
        Ok(g.iter().zip(&self.values).map(|(a, v)| a * v).collect())
    }
}

/// `‖V e^{iΔt} f‖`.
pub fn cook_integrand<V: PotentialApplier + ?Sized>(v: &V, f: &BandLimitedTestFunction, t: f64) -> Result<f64> {
    let g = f.evolve(t)?;
    let vg = v.apply(&f.grid, &g)?;
    Ok(grid_norm(&f.grid, &vg))
}

/// `points` log-uniform times from `lo` to `hi` inclusive.
pub fn geometric_times(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(precondition!("time grid needs 0 < lo < hi and at least 2 points"));
    }
    let r = (hi / lo).ln() / (points - 1) as f64;
    let mut ts: Vec<f64> = (0..points).map(|k| lo * (r * k as f64).exp()).collect();
    ts[points - 1] = hi;
    Ok(ts)
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(ts: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ts.len());
    let mut acc = 0.0;
    for k in 0..ts.len() {
        if k > 0 {
            acc += 0.5 * (ts[k] - ts[k - 1]) * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Increments of the cumulative integral over `[T, 2T]` for `T = t_0 2^k`,
/// `2T ≤ t_max`, with linear interpolation between samples.
pub fn dyadic_increments(ts: &[f64], cumulative: &[f64]) -> Vec<(f64, f64)> {
    let interp = |t: f64| -> f64 {
        let k = ts.partition_point(|&s| s < t).clamp(1, ts.len() - 1);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let s = (t - t0) / (t1 - t0);
        cumulative[k - 1] + s * (cumulative[k] - cumulative[k - 1])
    };
    let mut out = Vec::new();
    if ts.len() < 2 {
        return out;
    }
    let mut t = ts[0];
    let hi = ts[ts.len() - 1];
    while 2.0 * t <= hi * (1.0 + 1e-12) {
        out.push((t, interp((2.0 * t).min(hi)) - interp(t)));
        t *= 2.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerLawFit {
    pub slope: f64,
    /// Two standard errors of the slope.
    pub half_width: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log value` against `log t`.
pub fn decay_slope(ts: &[f64], values: &[f64]) -> Result<PowerLawFit> {
    if ts.len() != values.len() {
        return Err(precondition!("{} times but {} values", ts.len(), values.len()));
    }
    if ts.len() < 8 {
        return Err(precondition!("decay fit needs at least 8 time points, got {}", ts.len()));
    }
    let mut pts = Vec::with_capacity(ts.len());
    for (&t, &v) in ts.iter().zip(values) {
        if !(t > 0.0) {
            return Err(precondition!("time {t} is not positive"));
        }
        if !(v > 0.0) {
            return Err(precondition!("value {v} at t = {t} is not positive"));
        }
        pts.push((t.ln(), v.ln()));
    }
    let fit = linear_fit(&pts);
    Ok(PowerLawFit {
        slope: fit.slope,
        half_width: 2.0 * fit.slope_std_error,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
    })
}
