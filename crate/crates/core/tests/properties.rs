use num_complex::Complex64;
use proptest::prelude::*;

use mourre_core::disorder::{sample_disorder, CompactDistribution};
use mourre_core::evolution::{grid_norm, make_test_function, propagate};
use mourre_core::geometry::build_example1_islands;
use mourre_core::grid::{Boundary, GridSpec, DEFAULT_UNKNOWN_BUDGET};
use mourre_core::linalg::EigenPair;
use mourre_core::operator::DiscreteHamiltonian;
use mourre_core::potential::{compute_e0, IslandPotential, MollifierBump, ProbeResolution, Truncation};
use mourre_core::spectral::{ipr, virial_residual};
use mourre_core::wavelet::{
    admissible_scales, f_elements, gram_matrix, meyer_scaling_hat, meyer_wavelet_modulus, ProjectionPotential,
    QuadratureOptions, WaveletFamily, WaveletIndex,
};

fn distribution() -> impl Strategy<Value = CompactDistribution> {
    (-5.0..5.0f64, 0.0..5.0f64, 0.2..4.0f64, 0.2..4.0f64, 0..3u8).prop_map(|(a, span, sa, sb, kind)| {
        let b = a + span;
        match kind {
            0 => CompactDistribution::Uniform { a, b },
            1 => CompactDistribution::ScaledBeta { a, b, shape_a: sa, shape_b: sb },
            _ => CompactDistribution::TwoPoint { a, b },
        }
    })
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn power_norm(v: &ProjectionPotential, grid: &GridSpec, start: Vec<Complex64>) -> f64 {
    use mourre_core::evolution::PotentialApplier;
    let mut x = start;
    let mut est = 0.0;
    for _ in 0..60 {
        let n = grid_norm(grid, &x);
        if n == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|z| *z /= n);
        x = v.apply(grid, &x).unwrap();
        est = grid_norm(grid, &x);
    }
    est
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ipr_between_inverse_count_and_one(v in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        let p = ipr(&v).unwrap();
        let n = v.len() as f64;
        prop_assert!(p >= 1.0 / n * (1.0 - 1e-12) && p <= 1.0 + 1e-12);
    }

    #[test]
    fn couplings_are_bounded_and_regenerate(dist in distribution(), seed in any::<u64>(), count in 1usize..300) {
        let r = sample_disorder(dist, count, seed).unwrap();
        let (a, b) = dist.support();
        let m = dist.sup_bound();
        for (i, w) in r.couplings.iter().enumerate() {
            prop_assert!(*w >= a && *w <= b && w.abs() <= m);
            prop_assert_eq!(w.to_bits(), r.regenerate(i).to_bits());
        }
        let again = sample_disorder(dist, count, seed).unwrap();
        prop_assert_eq!(&r, &again);
        // a prefix of the index set reproduces the same couplings
        let prefix = sample_disorder(dist, count / 2 + 1, seed).unwrap();
        prop_assert_eq!(&prefix.couplings[..], &r.couplings[..count / 2 + 1]);
    }

    #[test]
    fn hamiltonian_entries_are_exactly_symmetric(
        d in 1usize..=2,
        half in 1usize..=6,
        periodic in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Dirichlet };
        let grid = GridSpec::new(d, 3.7, 2 * half + 2, boundary).unwrap();
        let field = mourre_core::spectral::anderson_field(&grid, 7.0, seed);
        let h = DiscreteHamiltonian::from_values(grid, field, DEFAULT_UNKNOWN_BUDGET).unwrap();
        let n = grid.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(h.entry(i, j).to_bits(), h.entry(j, i).to_bits());
            }
        }
    }

    #[test]
    fn virial_residual_ignores_global_sign(v in prop::collection::vec(-1.0..1.0f64, 31), lambda in -5.0..5.0f64) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        let grid = GridSpec::new(1, 4.0, 32, Boundary::Dirichlet).unwrap();
        let b = grid.sample(|x| (x[0] * 1.3).sin());
        let pair = EigenPair { eigenvalue: lambda, eigenvector: v.clone(), residual: 0.0 };
        let flipped = EigenPair { eigenvector: v.iter().map(|x| -x).collect(), ..pair.clone() };
        let doubled = EigenPair { eigenvector: v.iter().map(|x| 2.0 * x).collect(), ..pair.clone() };
        let r = virial_residual(&grid, &pair, &b).unwrap().value;
        prop_assert_eq!(r.to_bits(), virial_residual(&grid, &flipped, &b).unwrap().value.to_bits());
        prop_assert!((r - virial_residual(&grid, &doubled, &b).unwrap().value).abs() <= 1e-12 * r.max(1.0));
    }

    #[test]
    fn free_propagation_is_unitary_and_reversible(g in complex_vec(64), t in -50.0..50.0f64) {
        let grid = GridSpec::new(1, 8.0, 64, Boundary::Periodic).unwrap();
        let n0 = grid_norm(&grid, &g);
        let gt = propagate(&grid, &g, t).unwrap();
        prop_assert!((grid_norm(&grid, &gt) - n0).abs() <= 1e-12 * n0.max(1.0));
        let back = propagate(&grid, &gt, -t).unwrap();
        let err = back.iter().zip(&g).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn e0_is_homogeneous_in_the_coupling_bound(m in 0.0..10.0f64, scale in 0.1..8.0f64) {
        let set = build_example1_islands(1.0, 1).unwrap();
        let n = set.len();
        let p = IslandPotential::with_couplings(set, vec![0.0; n], 0.0, 0.0, MollifierBump::default()).unwrap();
        let res = ProbeResolution { points_per_unit: 24, zoom_passes: 2 };
        let a = compute_e0(&p, m, Truncation::Finite, res).unwrap().e0;
        let b = compute_e0(&p, 2.0 * m, Truncation::Finite, res).unwrap().e0;
        let c = compute_e0(&p, scale * m, Truncation::Finite, res).unwrap().e0;
        prop_assert_eq!(b.to_bits(), (2.0 * a).to_bits());
        prop_assert!((c - scale * a).abs() <= 1e-14 * c.max(1.0));
    }

    #[test]
    fn gram_matrix_is_identity(
        d in 1usize..=2,
        picks in prop::collection::btree_set((0usize..3, -2i32..=2, -3i64..=3, -3i64..=3), 1..12),
    ) {
        let elements = f_elements(d);
        let indices: Vec<WaveletIndex> = picks
            .into_iter()
            .map(|(c, n1, a, b)| {
                let n2 = if d == 1 { vec![a] } else { vec![a, b] };
                WaveletIndex::new(elements[c % elements.len()].clone(), n1, n2).unwrap()
            })
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let (_, dev) = gram_matrix(&indices, &QuadratureOptions::default()).unwrap();
        prop_assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn overlaps_vanish_exactly_off_the_selection_window(
        cx in 0.6..1.6f64,
        cy in -1.6..-0.6f64,
        frac in 0.1..0.9f64,
        t in 0.0..20.0f64,
        k in -5i64..=5,
    ) {
        let grid = GridSpec::new(2, 512.0, 1024, Boundary::Periodic).unwrap();
        let w = frac * cx.abs().min(cy.abs()) / 1.05;
        let f = make_test_function(grid, &[cx, cy], w).unwrap();
        let fam = WaveletFamily::new(2, 0, 3, 8).unwrap();
        for c in f_elements(2) {
            let window = admissible_scales(&c, &f);
            for n1 in -9..=6 {
                let v = fam.overlap(&WaveletIndex::new(c.clone(), n1, vec![k, -k]).unwrap(), &f, t).unwrap();
                if !window.contains(&n1) {
                    prop_assert_eq!(v, Complex64::default());
                }
            }
        }
    }

    #[test]
    fn projection_norm_is_bounded_by_largest_coupling(
        picks in prop::collection::btree_set((0i32..=1, -6i64..=6), 1..8),
        weights in prop::collection::vec(-3.0..3.0f64, 8),
        start in complex_vec(256),
    ) {
        let grid = GridSpec::new(1, 16.0, 256, Boundary::Periodic).unwrap();
        let terms: Vec<(WaveletIndex, f64)> = picks
            .into_iter()
            .zip(&weights)
            .map(|((n1, k), w)| (WaveletIndex::new(vec![1], n1, vec![k]).unwrap(), *w))
            .collect();
        let top = terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
        let v = ProjectionPotential::new(grid, terms).unwrap();
        let est = power_norm(&v, &grid, start);
        prop_assert!(est <= top * (1.0 + 1e-8) + 1e-12, "{est} > {top}");
    }
}

/// Finite-difference derivative of order `k` with step `h`.
fn central_difference(f: &dyn Fn(f64) -> f64, x: f64, k: usize, h: f64) -> f64 {
    let mut binom = 1.0;
    let mut s = 0.0;
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binom * f(x + (k as f64 / 2.0 - j as f64) * h);
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    s / h.powi(k as i32)
}

#[test]
fn meyer_derivative_towers_stay_bounded() {
    // 2d + 2 derivatives for d = 3
    let profiles: [(&str, &dyn Fn(f64) -> f64, f64, f64); 2] = [
        ("scaling", &meyer_scaling_hat, 1.8, 4.5),
        ("wavelet", &meyer_wavelet_modulus, 1.8, 8.7),
    ];
    for (name, f, lo, hi) in profiles {
        for k in 1..=8 {
            let tower = |h: f64| {
                (0..=400)
                    .map(|i| central_difference(f, lo + (hi - lo) * i as f64 / 400.0, k, h).abs())
                    .fold(0.0, f64::max)
            };
            let (coarse, fine) = (tower(0.01), tower(0.005));
            assert!(coarse.is_finite() && fine.is_finite(), "{name} order {k}");
            assert!(
                fine <= 2.0 * coarse && coarse <= 2.0 * fine,
                "{name} order {k}: {coarse:e} vs {fine:e}"
            );
        }
    }
}
