mod common;

use std::f64::consts::PI;

use common::{implied_w, ks_one_sample, ks_two_sample, multiset_distance};
use faer::linalg::solvers::Solve;
use faer::Mat;
use linres::dpg::{
    golden_eigenvalues, random_eigenvectors, real_count, sim_eigenvalues, split_layout_p,
    uniform_eigenvalues, DEFAULT_SIGMA,
};
use linres::linalg::eigenvalues;
use linres::{build_dpg, diagonalize, generate_dense, Distribution, EsnConfig, EsnError};
use num_complex::Complex64;
use proptest::prelude::*;

fn config(units: usize, sr: f64, seed: u64) -> EsnConfig {
    EsnConfig {
        units,
        spectral_radius: sr,
        seed,
        ..EsnConfig::default()
    }
}

const DISTRIBUTIONS: [Distribution; 4] = [
    Distribution::Uniform,
    Distribution::Golden,
    Distribution::NoisyGolden {
        sigma: DEFAULT_SIGMA,
    },
    Distribution::Sim,
];

#[test]
fn real_count_parity_for_every_size() {
    for n in 1..5000 {
        let r = real_count(n);
        assert_eq!(r % 2, n % 2, "n = {n}");
        assert!(r <= n);
        let base = (2.0 * n as f64 / PI).sqrt().floor() as usize;
        assert!(
            r == base || r == base + 1,
            "n = {n}: {r} vs ⌊√(2n/π)⌋ = {base}"
        );
    }
}

#[test]
fn real_count_examples() {
    assert_eq!(real_count(1), 1);
    assert_eq!(real_count(2), 2);
    assert_eq!(real_count(100), 8);
    assert_eq!(real_count(101), 9);
}

#[test]
fn uniform_squared_moduli_are_uniform() {
    let mut sample = Vec::new();
    let mut seed = 0;
    while sample.len() < 10_000 {
        sample.extend(
            uniform_eigenvalues(1000, 0.7, seed)
                .cpx
                .iter()
                .map(|z| (z.norm() / 0.7).powi(2)),
        );
        seed += 1;
    }
    sample.truncate(10_000);
    let d = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0));
    let critical = 1.628 / (sample.len() as f64).sqrt();
    assert!(d < critical, "KS statistic {d} above {critical}");
}

#[test]
fn uniform_phases_cover_the_upper_half_plane() {
    let s = uniform_eigenvalues(4000, 1.0, 3);
    let phases: Vec<f64> = s.cpx.iter().map(|z| z.arg() / PI).collect();
    assert!(phases.iter().all(|p| (0.0..=1.0).contains(p)));
    let d = ks_one_sample(&phases, |x| x.clamp(0.0, 1.0));
    assert!(d < 1.628 / (phases.len() as f64).sqrt());
}

#[test]
fn noisy_golden_moduli_resemble_dense_spectra() {
    let n = 1000;
    let dense = eigenvalues(
        generate_dense(&config(n, 1.0, 5))
            .unwrap()
            .w
            .to_dense()
            .as_ref(),
    )
    .unwrap();
    let golden = build_dpg(
        &config(n, 1.0, 5),
        Distribution::NoisyGolden {
            sigma: DEFAULT_SIGMA,
        },
    )
    .unwrap();
    let a: Vec<f64> = dense.iter().map(|z| z.norm()).collect();
    let b: Vec<f64> = golden.eigenvalues().iter().map(|z| z.norm()).collect();
    let d = ks_two_sample(&a, &b);
    assert!(d < 0.2, "two-sample KS statistic {d}");
}

#[test]
fn sim_real_count_follows_the_square_root_law() {
    let n = 400;
    let counts: Vec<usize> = (0..50)
        .map(|s| sim_eigenvalues(&config(n, 1.0, s)).unwrap().real.len())
        .collect();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let law = (2.0 * n as f64 / PI).sqrt();
    assert!(
        (0.5 * law..=1.5 * law).contains(&mean),
        "mean {mean} against {law}"
    );
}

#[test]
fn sim_spectrum_matches_diagonalization() {
    for seed in 0..5 {
        let cfg = config(80, 0.9, seed);
        let sim = build_dpg(&cfg, Distribution::Sim).unwrap();
        let diag = diagonalize(&generate_dense(&cfg).unwrap()).unwrap();
        assert!(multiset_distance(&sim.eigenvalues(), &diag.eigenvalues()) <= 1e-10);
    }
}

#[test]
fn golden_without_noise_is_a_fixed_spiral() {
    let a = golden_eigenvalues(300, 0.8, 0.0, 11);
    assert_eq!(a, golden_eigenvalues(300, 0.8, 0.0, 11));
    assert!((a.max_modulus() - 0.8).abs() < 1e-15);
    // consecutive kept points sit on radii √(k/(2m))·f with increasing k
    let radii: Vec<f64> = a.cpx.iter().map(|z| z.norm()).collect();
    assert!(radii.windows(2).all(|w| w[0] < w[1]));
    assert!(a.cpx.iter().all(|z| z.im >= 0.0));
}

#[test]
fn spectrum_sizes_add_up() {
    for n in [1usize, 2, 3, 10, 99, 100] {
        for s in [
            uniform_eigenvalues(n, 1.0, 0),
            golden_eigenvalues(n, 1.0, 0.2, 0),
        ] {
            assert_eq!(s.units(), n);
            assert_eq!(s.real.len(), real_count(n));
        }
    }
}

#[test]
fn eigenvector_layout_rejects_odd_remainders() {
    assert!(matches!(
        random_eigenvectors(5, 2, 0),
        Err(EsnError::InvalidConfig(_))
    ));
    assert!(matches!(
        random_eigenvectors(3, 4, 0),
        Err(EsnError::InvalidConfig(_))
    ));
}

#[test]
fn negative_sigma_is_rejected() {
    let r = build_dpg(
        &config(10, 1.0, 0),
        Distribution::NoisyGolden { sigma: -0.1 },
    );
    assert!(matches!(r, Err(EsnError::InvalidConfig(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uniform_stays_inside_the_radius(n in 1usize..400, sr in 0.01f64..2.0, seed in any::<u64>()) {
        prop_assert!(uniform_eigenvalues(n, sr, seed).max_modulus() <= sr);
    }

    #[test]
    fn noisy_golden_stays_near_the_radius(n in 1usize..400, sr in 0.01f64..2.0, seed in any::<u64>()) {
        let sigma = DEFAULT_SIGMA;
        prop_assert!(golden_eigenvalues(n, sr, sigma, seed).max_modulus() <= sr + 5.0 * sigma);
    }

    #[test]
    fn implied_matrix_is_real_with_the_generated_spectrum(n in 2usize..=64, which in 0usize..4, seed in any::<u64>()) {
        let cfg = config(n, 0.9, seed);
        let spec = build_dpg(&cfg, DISTRIBUTIONS[which]).unwrap();
        // P·Λ·P⁻¹ in complex arithmetic: its imaginary part must vanish
        let n_r = spec.n_real();
        let q = spec.basis_q().unwrap().to_owned();
        let p = split_layout_p(&q, n_r);
        let m = spec.n_pairs();
        let lambda: Vec<Complex64> = spec.lambda_real().iter().map(|&l| Complex64::new(l, 0.0))
            .chain(spec.lambda_cpx().iter().copied())
            .chain(spec.lambda_cpx().iter().map(|z| z.conj()))
            .collect();
        prop_assert_eq!(lambda.len(), n_r + 2 * m);
        let p_lambda = Mat::from_fn(n, n, |i, j| p[(i, j)] * lambda[j]);
        // W = PΛP⁻¹  ⇔  Pᵀ·Wᵀ = (PΛ)ᵀ
        let w = p.partial_piv_lu().solve_transpose(p_lambda.transpose()).transpose().to_owned();
        let values = common::cmat_values(&w);
        let re = values.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let im = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        prop_assert!(im <= 1e-8 * re, "imaginary part {im} against {re}");
        // the real Q·M·Q⁻¹ route gives the same matrix
        let real_w = implied_w(&spec);
        let diff = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (real_w[(i, j)] - w[(i, j)].re).abs())
            .fold(0.0, f64::max);
        prop_assert!(diff <= 1e-8 * re);
    }

    #[test]
    fn construction_is_deterministic(n in 1usize..100, which in 0usize..4, seed in any::<u64>()) {
        let cfg = EsnConfig { use_feedback: true, ..config(n, 0.9, seed) };
        let a = build_dpg(&cfg, DISTRIBUTIONS[which]).unwrap();
        let b = build_dpg(&cfg, DISTRIBUTIONS[which]).unwrap();
        prop_assert_eq!(a.lambda_real(), b.lambda_real());
        prop_assert_eq!(a.lambda_cpx(), b.lambda_cpx());
        prop_assert_eq!(a.w_in_q(), b.w_in_q());
        prop_assert_eq!(a.w_fb_q(), b.w_fb_q());
        prop_assert_eq!(a.basis_q(), b.basis_q());
    }

    #[test]
    fn eigenvector_columns_have_unit_norm(n in 1usize..120, seed in any::<u64>()) {
        let n_r = real_count(n);
        let draw = random_eigenvectors(n, n_r, seed).unwrap();
        let p = split_layout_p(&draw.q, n_r);
        for j in 0..n {
            let norm = (0..n).map(|i| p[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-12, "column {j} has norm {norm}");
        }
    }

    #[test]
    fn generated_spectral_radius_is_respected(n in 2usize..200, sr in 0.1f64..1.5, seed in any::<u64>()) {
        for d in [Distribution::Uniform, Distribution::Golden, Distribution::Sim] {
            let spec = build_dpg(&config(n, sr, seed), d).unwrap();
            prop_assert!(spec.spectral_radius() <= sr * (1.0 + 1e-6));
            prop_assert!(spec.lambda_cpx().iter().all(|z| z.im >= 0.0));
        }
    }
}
