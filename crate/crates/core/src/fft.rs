//! Radix-2 complex FFT and its tensor-product extension to `d` axes.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{precondition, Result};

/// In-place DFT `X_m = Σ_j x_j e^{∓2πi jm/n}` (minus sign forward). The
/// inverse includes the `1/n` factor.
pub fn fft_in_place(data: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = data.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(precondition!("FFT length {n} is not a power of two"));
    }
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * TAU * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = data[start + k];
                let b = data[start + k + half] * twiddles[k];
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let s = 1.0 / n as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
    Ok(())
}

/// DFT along every axis of an `n^d` array stored with axis 0 fastest.
pub fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) -> Result<()> {
    if data.len() != n.pow(d as u32) {
        return Err(precondition!("array of length {} is not {n}^{d}", data.len()));
    }
    let mut line = alloc::vec![Complex64::default(); n];
    for axis in 0..d {
        let stride = n.pow(axis as u32);
        let block = stride * n;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft_in_place(&mut line, inverse)?;
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
    Ok(())
}

/// Signed frequency index of FFT bin `m` of `n`: `0, 1, …, n/2 - 1, -n/2, …, -1`.
pub fn signed_index(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|m| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * Complex64::from_polar(1.0, -TAU * (j * m) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_and_inverts() {
        for n in [1, 2, 8, 64] {
            let x: Vec<Complex64> = (0..n)
                .map(|j| Complex64::new((j as f64 * 0.7).sin(), (j as f64 * 1.3).cos()))
                .collect();
            let mut y = x.clone();
            fft_in_place(&mut y, false).unwrap();
            for (a, b) in y.iter().zip(naive(&x)) {
                assert!((a - b).norm() < 1e-12);
            }
            fft_in_place(&mut y, true).unwrap();
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        assert!(fft_in_place(&mut [Complex64::default(); 6], false).is_err());
    }

    #[test]
    fn two_dimensional_plane_wave() {
        let n = 16;
        let mut a = alloc::vec![Complex64::default(); n * n];
        for j1 in 0..n {
            for j0 in 0..n {
                a[j0 + n * j1] = Complex64::from_polar(1.0, TAU * (3 * j0 + 5 * j1) as f64 / n as f64);
            }
        }
        fft_nd(&mut a, n, 2, false).unwrap();
        for (idx, v) in a.iter().enumerate() {
            let expect = if idx == 3 + 5 * n { (n * n) as f64 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-10);
        }
    }
}
