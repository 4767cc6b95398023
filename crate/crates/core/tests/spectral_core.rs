mod common;

use std::sync::Arc;

use common::{
    cmat_values, complex_diag_run, complexify, multiset_distance, q_transition, rel_err,
    rel_err_mat, rel_err_states, test_inputs,
};
use faer::linalg::solvers::Solve;
use faer::Mat;
use linres::bench::{gen_mso, rmse};
use linres::spectral::QBasis;
use linres::{
    apply_leak, diagonalize, eet_train, ewt_transform, generate_dense, run_diagonal, run_reservoir,
    train_readout, Basis, DenseReservoir, EsnConfig, Feedback, Readout, ReadoutFlags,
    RecurrentMatrix, SpectralReservoir, StateSeq, TrainSpec,
};
use num_complex::Complex64;
use proptest::prelude::*;

const FLAGS: ReadoutFlags = ReadoutFlags {
    use_bias: true,
    use_feedback: false,
};

fn instance(n: usize, d_in: usize, seed: u64) -> (DenseReservoir, SpectralReservoir) {
    let config = EsnConfig {
        units: n,
        d_in,
        seed,
        ..EsnConfig::default()
    };
    let dense = generate_dense(&config).unwrap();
    let spec = diagonalize(&dense).unwrap();
    (dense, spec)
}

fn delayed(u: &Mat<f64>, k: usize) -> Mat<f64> {
    Mat::from_fn(
        u.nrows(),
        1,
        |t, _| if t >= k { u[(t - k, 0)] } else { 0.0 },
    )
}

/// Eigenvalues in the interleaved P layout `[reals, μ₁, μ̄₁, …]`.
fn p_lambda(spec: &SpectralReservoir) -> Vec<Complex64> {
    let mut lambda: Vec<Complex64> = spec
        .lambda_real()
        .iter()
        .map(|&l| Complex64::new(l, 0.0))
        .collect();
    for z in spec.lambda_cpx() {
        lambda.push(*z);
        lambda.push(z.conj());
    }
    lambda
}

fn complex_inverse(p: &Mat<Complex64>) -> Mat<Complex64> {
    let n = p.nrows();
    p.partial_piv_lu().solve(Mat::<Complex64>::identity(n, n))
}

#[test]
fn real_lane_geometric_recursion() {
    let spec = SpectralReservoir::from_parts(
        vec![0.5],
        vec![],
        Mat::from_fn(1, 1, |_, _| 1.0).as_ref(),
        None,
        None,
    )
    .unwrap();
    let u = Mat::from_fn(3, 1, |_, _| 1.0);
    let states = run_diagonal(&spec, u.as_ref(), Feedback::None)
        .unwrap()
        .states;
    assert_eq!(states.as_slice(), &[1.0, 1.5, 1.75]);
}

#[test]
fn quarter_rotation_cycles_the_pair() {
    let w_in = Mat::from_fn(1, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
    let spec = SpectralReservoir::from_parts(
        vec![],
        vec![Complex64::new(0.0, 1.0)],
        w_in.as_ref(),
        None,
        None,
    )
    .unwrap();
    let u = Mat::from_fn(4, 1, |t, _| if t == 0 { 1.0 } else { 0.0 });
    let states = run_diagonal(&spec, u.as_ref(), Feedback::None)
        .unwrap()
        .states;
    let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    for (t, e) in expect.iter().enumerate() {
        assert!((states.row(t)[0] - e[0]).abs() < 1e-15 && (states.row(t)[1] - e[1]).abs() < 1e-15);
    }
}

fn readout_with(res: Mat<f64>) -> Readout {
    Readout {
        bias: Some(vec![0.25]),
        out_block: None,
        res_block: res,
        basis: Basis::Original,
    }
}

fn spec_with_basis(q: Mat<f64>) -> SpectralReservoir {
    let n = q.nrows();
    SpectralReservoir::from_parts(
        vec![0.5; n],
        vec![],
        Mat::<f64>::zeros(1, n).as_ref(),
        None,
        Some(Arc::new(QBasis::new(q))),
    )
    .unwrap()
}

#[test]
fn ewt_of_scalar_basis_divides() {
    let res = Mat::from_fn(3, 1, |i, _| (i + 1) as f64);
    let spec = spec_with_basis(Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 0.0 }));
    let out = ewt_transform(&readout_with(res.clone()), &spec).unwrap();
    assert_eq!(out.basis, Basis::Q);
    assert_eq!(out.bias, Some(vec![0.25]));
    for i in 0..3 {
        assert!((out.res_block[(i, 0)] - res[(i, 0)] / 4.0).abs() < 1e-15);
    }
}

#[test]
fn ewt_of_permutation_permutes_rows_back() {
    // Q e_j = e_{π(j)} with π = (1 2 0)
    let pi = [1usize, 2, 0];
    let q = Mat::from_fn(3, 3, |i, j| if i == pi[j] { 1.0 } else { 0.0 });
    let res = Mat::from_fn(3, 1, |i, _| [10.0, 20.0, 30.0][i]);
    let out = ewt_transform(&readout_with(res.clone()), &spec_with_basis(q)).unwrap();
    for j in 0..3 {
        assert_eq!(out.res_block[(j, 0)], res[(pi[j], 0)]);
    }
}

#[test]
fn ewt_rejects_q_basis_readouts() {
    let (_, spec) = instance(6, 1, 0);
    let mut r = readout_with(Mat::zeros(6, 1));
    r.basis = Basis::Q;
    assert!(ewt_transform(&r, &spec).is_err());
}

#[test]
fn eet_with_identity_basis_is_plain_ridge() {
    let n = 12;
    let spec = spec_with_basis(Mat::identity(n, n));
    let x = StateSeq::from_vec(n, common::mat_values(test_inputs(200, n, 3).as_ref()));
    let y = test_inputs(200, 2, 4);
    let train = TrainSpec {
        targets: y.as_ref(),
        rows: 20..200,
        alpha: 1e-3,
        flags: FLAGS,
    };
    let eet = eet_train(&x, train.clone(), &spec).unwrap().readout;
    let ridge = train_readout(&x, train).unwrap().readout;
    assert!(rel_err_mat(eet.weights().as_ref(), ridge.weights().as_ref()) < 1e-14);
}

#[test]
fn eet_least_squares_with_orthogonal_basis() {
    // Q = rotation in the (0,1) plane and a reflection on axis 3
    let (c, s) = (0.6f64, 0.8f64);
    let q = Mat::from_fn(4, 4, |i, j| match (i, j) {
        (0, 0) | (1, 1) => c,
        (0, 1) => -s,
        (1, 0) => s,
        (2, 2) => 1.0,
        (3, 3) => -1.0,
        _ => 0.0,
    });
    let spec = spec_with_basis(q.clone());
    let x_q = test_inputs(40, 4, 9);
    let y = test_inputs(40, 1, 10);
    let q_states = StateSeq::from_vec(4, common::mat_values(x_q.as_ref()));
    let flags = ReadoutFlags {
        use_bias: false,
        use_feedback: false,
    };
    let train = |targets| TrainSpec {
        targets,
        rows: 0..40,
        alpha: 0.0,
        flags,
    };
    let eet = eet_train(&q_states, train(y.as_ref()), &spec)
        .unwrap()
        .readout;
    // neuron coordinates: r = x_Q·Q⁻¹ = x_Q·Qᵀ
    let r = &x_q * q.transpose();
    let r_states = StateSeq::from_vec(4, common::mat_values(r.as_ref()));
    let ols = train_readout(&r_states, train(y.as_ref())).unwrap().readout;
    let expect = q.transpose() * &ols.res_block;
    assert!(rel_err_mat(eet.res_block.as_ref(), expect.as_ref()) < 1e-12);
}

#[test]
fn mso1_transformed_readout_keeps_test_rmse() {
    let data = gen_mso(1, 1000).unwrap();
    let (dense, spec) = instance(100, 1, 0);
    let r = run_reservoir(&dense, data.inputs.as_ref(), Feedback::None)
        .unwrap()
        .states;
    let x = run_diagonal(&spec, data.inputs.as_ref(), Feedback::None)
        .unwrap()
        .states;
    let train = TrainSpec {
        targets: data.targets.as_ref(),
        rows: data.split.train(),
        alpha: 1e-8,
        flags: FLAGS,
    };
    let readout = train_readout(&r, train).unwrap().readout;
    let q_readout = ewt_transform(&readout, &spec).unwrap();
    let test = data.split.test();
    let target = data.targets.subrows(test.start, test.len());
    let a = rmse(
        readout.predict(&r, None, test.clone()).unwrap().as_ref(),
        target,
    )
    .unwrap();
    let b = rmse(q_readout.predict(&x, None, test).unwrap().as_ref(), target).unwrap();
    assert!(a < 1e-8, "dense MSO1 rmse {a}");
    assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Random real basis B: W_B = B⁻¹WB, W_in·B, readout B⁻¹·res.
    #[test]
    fn random_basis_preserves_outputs(n in 2usize..40, seed in any::<u64>()) {
        let (dense, _) = instance(n, 1, seed);
        let noise = test_inputs(n, n, seed ^ 0x55);
        let b = Mat::from_fn(n, n, |i, j| noise[(i, j)] + if i == j { 3.0 } else { 0.0 });
        let lu = b.partial_piv_lu();
        let moved = DenseReservoir::new(
            RecurrentMatrix::Dense(lu.solve(dense.w.to_dense() * &b)),
            &dense.w_in * &b,
            None,
        ).unwrap();
        let u = test_inputs(300, 1, seed);
        let y = delayed(&u, 2);
        let r = run_reservoir(&dense, u.as_ref(), Feedback::None).unwrap().states;
        let r_b = run_reservoir(&moved, u.as_ref(), Feedback::None).unwrap().states;
        let readout = train_readout(&r, TrainSpec { targets: y.as_ref(), rows: 50..300, alpha: 1e-6, flags: FLAGS }).unwrap().readout;
        let mut moved_readout = readout.clone();
        moved_readout.res_block = lu.solve(&readout.res_block);
        let a = readout.predict(&r, None, 0..300).unwrap();
        let c = moved_readout.predict(&r_b, None, 0..300).unwrap();
        prop_assert!(rel_err_mat(c.as_ref(), a.as_ref()) <= 1e-8);
    }

    /// Complex eigenbasis P: z = r·P evolves by diag(Λ), outputs use P⁻¹·res.
    #[test]
    fn eigenbasis_preserves_outputs(n in 2usize..40, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let p = spec.basis_p().unwrap();
        let u = test_inputs(300, 1, seed);
        let z = complex_diag_run(&p_lambda(&spec), &(complexify(dense.w_in.as_ref()) * &p), u.as_ref());
        let r = run_reservoir(&dense, u.as_ref(), Feedback::None).unwrap().states;
        let readout = train_readout(&r, TrainSpec { targets: delayed(&u, 2).as_ref(), rows: 50..300, alpha: 1e-6, flags: FLAGS }).unwrap().readout;
        let res_p = complex_inverse(&p) * complexify(readout.res_block.as_ref());
        let bias = readout.bias.as_ref().unwrap()[0];
        let from_p: Vec<f64> = z.iter().map(|row| {
            let acc: Complex64 = row.iter().enumerate().map(|(j, v)| v * res_p[(j, 0)]).sum();
            bias + acc.re
        }).collect();
        let direct = common::mat_values(readout.predict(&r, None, 0..300).unwrap().as_ref());
        prop_assert!(rel_err(&from_p, &direct) <= 1e-8);
    }

    #[test]
    fn q_basis_preserves_outputs(n in 2usize..60, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let u = test_inputs(300, 1, seed);
        let r = run_reservoir(&dense, u.as_ref(), Feedback::None).unwrap().states;
        let x = run_diagonal(&spec, u.as_ref(), Feedback::None).unwrap().states;
        let readout = train_readout(&r, TrainSpec { targets: delayed(&u, 1).as_ref(), rows: 50..300, alpha: 1e-6, flags: FLAGS }).unwrap().readout;
        let q_readout = ewt_transform(&readout, &spec).unwrap();
        let a = readout.predict(&r, None, 0..300).unwrap();
        let b = q_readout.predict(&x, None, 0..300).unwrap();
        prop_assert!(rel_err_mat(b.as_ref(), a.as_ref()) <= 1e-8);
        prop_assert!(rel_err_states(&spec.to_original(&x).unwrap(), &r) <= 1e-8);
    }

    #[test]
    fn pointwise_update_equals_matrix_update(n in 1usize..50, d_in in 1usize..3, seed in any::<u64>()) {
        let (_, spec) = instance(n, d_in, seed);
        let u = test_inputs(200, d_in, seed);
        let x = run_diagonal(&spec, u.as_ref(), Feedback::None).unwrap().states;
        let m = q_transition(&spec);
        let drive = &u * spec.w_in_q();
        let mut prev = Mat::<f64>::zeros(1, n);
        let mut expect = Vec::with_capacity(200 * n);
        for t in 0..200 {
            let next = &prev * &m + drive.subrows(t, 1);
            expect.extend((0..n).map(|j| next[(0, j)]));
            prev = next;
        }
        prop_assert!(rel_err(x.as_slice(), &expect) <= 1e-12);
    }

    #[test]
    fn recovered_states_are_real(n in 2usize..40, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let p = spec.basis_p().unwrap();
        let u = test_inputs(200, 1, seed);
        let z = complex_diag_run(&p_lambda(&spec), &(complexify(dense.w_in.as_ref()) * &p), u.as_ref());
        let z = Mat::from_fn(z.len(), n, |t, j| z[t][j]);
        let r = z * complex_inverse(&p);
        let values = cmat_values(&r);
        let re = values.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let im = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        prop_assert!(im <= 1e-10 * re, "imaginary {im} against {re}");
    }

    #[test]
    fn conjugate_pairs_stay_conjugate(n in 2usize..60, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let p = spec.basis_p().unwrap();
        let u = test_inputs(300, 1, seed);
        let z = complex_diag_run(&p_lambda(&spec), &(complexify(dense.w_in.as_ref()) * &p), u.as_ref());
        let n_r = spec.n_real();
        let scale = z.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for row in &z {
            for k in 0..spec.n_pairs() {
                let (v, vb) = (row[n_r + 2 * k], row[n_r + 2 * k + 1]);
                prop_assert!((vb - v.conj()).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn eet_equals_ewt(n in 2usize..60, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let u = test_inputs(400, 1, seed);
        let y = delayed(&u, 3);
        let r = run_reservoir(&dense, u.as_ref(), Feedback::None).unwrap().states;
        let x = run_diagonal(&spec, u.as_ref(), Feedback::None).unwrap().states;
        let train = TrainSpec { targets: y.as_ref(), rows: 100..400, alpha: 1.0, flags: FLAGS };
        let ewt = ewt_transform(&train_readout(&r, train.clone()).unwrap().readout, &spec).unwrap();
        let eet = eet_train(&x, train, &spec).unwrap().readout;
        prop_assert!(rel_err_mat(eet.weights().as_ref(), ewt.weights().as_ref()) <= 1e-8);
    }

    #[test]
    fn leak_commutes_with_diagonalization(n in 2usize..40, lr in 0.05f64..1.0, seed in any::<u64>()) {
        let (dense, spec) = instance(n, 1, seed);
        let leaky = diagonalize(&apply_leak(&dense, lr)).unwrap();
        let mapped: Vec<Complex64> = spec.eigenvalues().iter().map(|z| z * lr + (1.0 - lr)).collect();
        prop_assert!(multiset_distance(&leaky.eigenvalues(), &mapped) <= 1e-8);
        let direct: Vec<Complex64> = spec.apply_leak(lr).eigenvalues();
        prop_assert!(multiset_distance(&direct, &mapped) <= 1e-12);
    }
}
