mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::plant::{rng_stream, DisturbanceModel, ImpulseResponse};
use sparse_ampc::recovery::{
    bpdn_recover, build_fsps, collect_offline_outputs, generate_offline_regressors, read_fsps, required_sample_count,
    run_offline, write_fsps, OfflineDesign,
};
use sparse_ampc::Error;

use common::{brute_force_sparse, min_l1_basic_solution};

const TWO_SQRT_TWO: f64 = 2.828_427_124_746_190_3;

fn tol() -> SolverTolerances {
    SolverTolerances::default()
}

fn table_truth() -> ImpulseResponse {
    let mut row = vec![0.0; 10];
    row[0] = -1.0;
    row[8] = -2.0;
    ImpulseResponse::new(DMatrix::from_row_slice(1, 10, &row), 2).unwrap()
}

fn design() -> OfflineDesign {
    OfflineDesign {
        sparsity: 2,
        rip_delta: 0.1,
        sample_constant: 1.0,
        samples: None,
        c_bar: TWO_SQRT_TWO,
        input_std: Some(1.0),
    }
}

#[test]
fn sample_count_for_the_reference_design() {
    let raw = 2.0 * 1.0 * 2.0 * (10.0f64 / 4.0).ln() / (0.1 * 0.1);
    assert!((raw - 366.516).abs() < 1e-3);
    assert_eq!(required_sample_count(2, 10, 0.1, 1.0).unwrap(), 367);
}

#[test]
fn halving_the_rip_level_quadruples_the_sample_count() {
    let q1 = required_sample_count(2, 10, 0.1, 1.0).unwrap() as f64;
    let q2 = required_sample_count(2, 10, 0.05, 1.0).unwrap() as f64;
    assert!((q2 - 4.0 * q1).abs() <= 4.0);
}

#[test]
fn invalid_sample_design_is_rejected() {
    assert!(matches!(required_sample_count(2, 10, 0.1, 0.0), Err(Error::InvalidArgument(_))));
    assert!(matches!(required_sample_count(5, 10, 0.1, 1.0), Err(Error::InvalidSparsity { .. })));
    assert!(required_sample_count(2, 10, 0.5, 1.0).is_err());
}

#[test]
fn regressor_entries_have_variance_one_over_q() {
    let q = 10_000;
    let a = generate_offline_regressors(q, 3, &mut rng_stream(1, 0));
    for col in a.column_iter() {
        let var = col.iter().map(|v| v * v).sum::<f64>() / q as f64;
        assert!((var * q as f64 - 1.0).abs() < 0.1, "variance {var}");
    }
}

#[test]
fn single_sample_rows_are_standard_normal() {
    let mut rng = rng_stream(2, 0);
    let mut sum_sq = 0.0;
    let draws = 20_000;
    for _ in 0..draws {
        let a = generate_offline_regressors(1, 1, &mut rng);
        assert_eq!(a.shape(), (1, 1));
        sum_sq += a[(0, 0)] * a[(0, 0)];
    }
    assert!((sum_sq / draws as f64 - 1.0).abs() < 0.05);
}

#[test]
fn restricted_isometry_spot_check() {
    let q = required_sample_count(2, 10, 0.1, 1.0).unwrap();
    let mut rng = rng_stream(5, 0);
    let a = generate_offline_regressors(q, 10, &mut rng);
    let mut pass = 0;
    for _ in 0..100 {
        let mut x = DVector::zeros(10);
        let mut picked = 0;
        while picked < 4 {
            let i = rng.random_range(0..10);
            if x[i] == 0.0 {
                x[i] = rng.random_range(-1.0..1.0);
                picked += 1;
            }
        }
        x /= x.norm();
        let ratio = (&a * &x).norm();
        pass += usize::from((0.9..=1.1).contains(&ratio));
    }
    assert!(pass >= 99, "{pass} of 100 within the isometry band");
}

#[test]
fn noiseless_outputs_are_exact() {
    let truth = table_truth();
    let a = generate_offline_regressors(50, 10, &mut rng_stream(0, 0));
    let silent = DisturbanceModel::uniform(DVector::zeros(1)).unwrap();
    let y = collect_offline_outputs(&truth, &a, &silent, &mut rng_stream(0, 1)).unwrap();
    assert_eq!(y.column(0).into_owned(), &a * truth.coefficients().row(0).transpose());

    let zero = ImpulseResponse::dense(DMatrix::zeros(1, 10));
    let y = collect_offline_outputs(&zero, &a, &silent, &mut rng_stream(0, 1)).unwrap();
    assert_eq!(y, DMatrix::zeros(50, 1));
}

#[test]
fn offline_noise_respects_the_l2_budget() {
    let truth = table_truth();
    let q = 367;
    let noise = DisturbanceModel::uniform(DVector::from_element(1, 0.1)).unwrap();
    for seed in 0..10 {
        let a = generate_offline_regressors(q, 10, &mut rng_stream(seed, 0));
        let y = collect_offline_outputs(&truth, &a, &noise, &mut rng_stream(seed, 1)).unwrap();
        let residual = y.column(0) - &a * truth.coefficients().row(0).transpose();
        assert!(residual.norm() <= (q as f64).sqrt() * 0.1 + 1e-12);
        assert!(residual.amax() <= 0.1 + 1e-12);
    }
}

#[test]
fn identity_sensing_without_budget_returns_the_data() {
    let x = bpdn_recover(&DMatrix::identity(3, 3), &DVector::from_row_slice(&[3.0, 0.0, 0.0]), 0.0, &tol()).unwrap();
    assert!((x - DVector::from_row_slice(&[3.0, 0.0, 0.0])).amax() < 1e-7);
}

#[test]
fn identity_sensing_shrinks_along_the_residual_ball() {
    let x = bpdn_recover(&DMatrix::identity(3, 3), &DVector::from_row_slice(&[3.0, 0.0, 0.0]), 1.0, &tol()).unwrap();
    assert!((&x - DVector::from_row_slice(&[2.0, 0.0, 0.0])).amax() < 1e-6, "{x}");
}

#[test]
fn noiseless_reference_row_is_recovered_exactly() {
    let truth = table_truth();
    let q = 367;
    let a = generate_offline_regressors(q, 10, &mut rng_stream(0, 0));
    let y = &a * truth.coefficients().row(0).transpose();
    let x = bpdn_recover(&a, &y, 0.0, &tol()).unwrap();
    let oracle = brute_force_sparse(&a, &y, 2).unwrap();
    assert!((&x - &oracle).amax() < 1e-6);
    assert!((&x - truth.vectorize()).amax() < 1e-6);
}

#[test]
fn too_small_budget_is_reported() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let y = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
    assert!(matches!(bpdn_recover(&a, &y, 0.5, &tol()), Err(Error::InfeasibleBudget { .. })));
    assert!(bpdn_recover(&a, &y, 1.0 + 1e-6, &tol()).is_ok());
}

#[test]
fn radius_follows_the_error_bound() {
    let fsps = build_fsps(DMatrix::zeros(1, 10), &DVector::from_element(1, 0.1), 367, TWO_SQRT_TWO, 0).unwrap();
    assert!((fsps.radii[0] - 5.418_487_4).abs() < 1e-6);
    let singleton = build_fsps(DMatrix::from_element(1, 3, 0.5), &DVector::zeros(1), 367, TWO_SQRT_TWO, 0).unwrap();
    assert_eq!(singleton.radii[0], 0.0);
    let (lo, hi) = singleton.box_outer(0);
    assert_eq!(lo, hi);
}

#[test]
fn recovered_rows_stay_within_the_radius_on_seeded_runs() {
    let truth = table_truth();
    let noise = DisturbanceModel::uniform(DVector::from_element(1, 0.1)).unwrap();
    for seed in 0..20 {
        let (data, fsps) = run_offline(&truth, &noise, &design(), seed, &tol()).unwrap();
        assert_eq!(data.samples(), 367);
        assert!(fsps.contains(&truth, 0.0), "seed {seed}");
        let literal = TWO_SQRT_TWO * (367f64).sqrt() * 0.1;
        assert!((fsps.centers.row(0).transpose() - truth.vectorize()).norm() <= literal);
    }
}

#[test]
fn normalized_excitation_gives_the_literal_radius() {
    let truth = table_truth();
    let noise = DisturbanceModel::uniform(DVector::from_element(1, 0.1)).unwrap();
    let normalized = OfflineDesign {
        input_std: None,
        ..design()
    };
    let (data, fsps) = run_offline(&truth, &noise, &normalized, 0, &tol()).unwrap();
    assert_eq!(data.excitation_gain, 1.0);
    assert!((fsps.radii[0] - TWO_SQRT_TWO * (367f64).sqrt() * 0.1).abs() < 1e-12);
    assert!(fsps.contains(&truth, 0.0));
}

#[test]
fn ball_lies_inside_its_outer_box() {
    let mut rng = rng_stream(4, 0);
    let centers = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
    let fsps = build_fsps(centers, &DVector::from_row_slice(&[0.1, 0.3]), 100, TWO_SQRT_TWO, 0).unwrap();
    for row in 0..2 {
        let (lo, hi) = fsps.box_outer(row);
        for _ in 0..500 {
            let d = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let p = fsps.centers.row(row).transpose() + d.normalize() * fsps.radii[row];
            assert!(fsps.ball_contains(row, &p, 1e-12));
            assert!(p.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *l <= *v && *v <= *h));
        }
    }
}

#[test]
fn fsps_file_round_trips_exactly() {
    let truth = table_truth();
    let noise = DisturbanceModel::uniform(DVector::from_element(1, 0.1)).unwrap();
    let (_, fsps) = run_offline(&truth, &noise, &design(), 7, &tol()).unwrap();
    let dir = tempdir("roundtrip");
    let path = dir.join("fsps.txt");
    write_fsps(&fsps, &path).unwrap();
    assert_eq!(read_fsps(&path).unwrap(), fsps);
}

#[test]
fn malformed_fsps_file_is_rejected() {
    let dir = tempdir("malformed");
    let path = dir.join("fsps.txt");
    std::fs::write(&path, "fsps 1\noutputs 1\ndim 3\nsamples 10\nc_bar 2\nseed 0\nradius 0.1\ncenter 1 2\n").unwrap();
    assert!(matches!(read_fsps(&path), Err(Error::FspsFormat { .. })));
    std::fs::write(&path, "fsps 99\n").unwrap();
    assert!(matches!(read_fsps(&path), Err(Error::FspsFormat { .. })));
    assert!(matches!(read_fsps(&dir.join("absent.txt")), Err(Error::Io(_))));
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("sparse-ampc-recovery-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_pursuit_matches_vertex_enumeration(seed in any::<u64>(), rows in 2usize..5, dim in 3usize..7) {
        prop_assume!(rows < dim);
        let mut rng = rng_stream(seed, 0);
        let a = DMatrix::from_fn(rows, dim, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        let x = bpdn_recover(&a, &y, 0.0, &tol()).unwrap();
        let oracle = min_l1_basic_solution(&a, &y).unwrap();
        prop_assert!((&a * &x - &y).norm() < 1e-7);
        prop_assert!((x.lp_norm(1) - oracle.lp_norm(1)).abs() < 1e-6, "{} vs {}", x.lp_norm(1), oracle.lp_norm(1));
    }

    #[test]
    fn larger_budget_never_increases_the_l1_norm(seed in any::<u64>(), b1 in 0.01f64..0.5, extra in 0.0f64..0.5) {
        let mut rng = rng_stream(seed, 0);
        let a = DMatrix::from_fn(8, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let distance = {
            let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
            (&a * (pinv * &y) - &y).norm()
        };
        let (lo, hi) = (distance + b1, distance + b1 + extra);
        let x_lo = bpdn_recover(&a, &y, lo, &tol()).unwrap();
        let x_hi = bpdn_recover(&a, &y, hi, &tol()).unwrap();
        prop_assert!((&a * &x_lo - &y).norm() <= lo * (1.0 + 1e-6));
        prop_assert!(x_hi.lp_norm(1) <= x_lo.lp_norm(1) + 1e-6);
    }
}
