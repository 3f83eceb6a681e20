mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::estimator::{
    lift_regressor, point_estimate_domain, project_mean, reshape_mean, RlsState, SparseSetShape,
};
use sparse_ampc::plant::{rng_stream, ImpulseResponse};
use sparse_ampc::polytope::{init_fps, Polytope};
use sparse_ampc::recovery::Fsps;
use sparse_ampc::Error;

use common::{batch_least_squares, brute_force_vertices, random_polytope};

fn tol() -> SolverTolerances {
    SolverTolerances::default()
}

fn square(half: f64) -> Polytope {
    init_fps(&DVector::from_element(2, -half), &DVector::from_element(2, half)).unwrap()
}

fn fsps(centers: DMatrix<f64>, radius: f64) -> Fsps {
    let rows = centers.nrows();
    Fsps {
        centers,
        radii: DVector::from_element(rows, radius),
        c_bar: 1.0,
        samples: 1,
        seed: 0,
    }
}

fn weighted(m: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    d.dot(&(m * d))
}

/// Exact projection onto a planar polygon under the metric `m`: the minimizer
/// is the mean, a vertex, or the metric projection onto one edge line.
fn planar_projection_oracle(p: &Polytope, m: &DMatrix<f64>, mean: &DVector<f64>) -> DVector<f64> {
    if p.contains(mean, 0.0) {
        return mean.clone();
    }
    let m_inv = m.clone().try_inverse().unwrap();
    let mut candidates = brute_force_vertices(p.normals(), p.offsets(), 1e-12);
    for i in 0..p.len() {
        let a = p.normals().row(i).transpose();
        let step = (a.dot(mean) - p.offsets()[i]) / a.dot(&(&m_inv * &a));
        let x = mean - &m_inv * &a * step;
        if p.contains(&x, 1e-12) {
            candidates.push(x);
        }
    }
    candidates
        .into_iter()
        .min_by(|a, b| weighted(m, &(a - mean)).total_cmp(&weighted(m, &(b - mean))))
        .unwrap()
}

#[test]
fn lifted_regressor_is_block_diagonal() {
    let phi = DVector::from_row_slice(&[1.0, 2.0]);
    assert_eq!(lift_regressor(&phi, 1), DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
    assert_eq!(
        lift_regressor(&phi, 2),
        DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0])
    );
}

#[test]
fn lifting_matches_the_matrix_product() {
    let h = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
    let phi = DVector::from_row_slice(&[0.3, -0.7, 2.0]);
    let vec_h = ImpulseResponse::dense(h.clone()).vectorize();
    assert_eq!(lift_regressor(&phi, 2) * vec_h, &h * &phi);
}

#[test]
fn reshape_inverts_vectorization() {
    let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let vec_h = ImpulseResponse::dense(h.clone()).vectorize();
    assert_eq!(vec_h.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(*reshape_mean(&vec_h, 2, 3).unwrap().coefficients(), h);
    assert!(matches!(reshape_mean(&vec_h, 2, 2), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn scalar_update_matches_closed_form() {
    let s = RlsState::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    let next = s
        .update(&DVector::from_element(1, 1.0), &DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 0.25))
        .unwrap();
    assert!((next.mean[0] - 0.8).abs() < 1e-15);
    assert!((next.covariance[(0, 0)] - 0.2).abs() < 1e-15);
}

#[test]
fn zero_regressor_leaves_the_state_unchanged() {
    let s = RlsState::new(DVector::from_element(3, 1.0), DMatrix::identity(3, 3) * 0.1).unwrap();
    let next = s.update(&DVector::zeros(3), &DVector::from_element(1, 5.0), &DMatrix::from_element(1, 1, 0.01)).unwrap();
    assert_eq!(next, s);
}

#[test]
fn indefinite_prior_is_rejected() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(RlsState::new(DVector::zeros(2), cov).is_err());
}

#[test]
fn recursive_updates_match_batch_least_squares() {
    let mut rng = rng_stream(21, 0);
    let dim = 10;
    let truth = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let mean0 = DVector::from_element(dim, 1.0);
    let cov0 = DMatrix::identity(dim, dim) * 0.1;
    let var = 0.01 / 3.0;
    let mut state = RlsState::new(mean0.clone(), cov0.clone()).unwrap();
    let (mut regressors, mut outputs) = (Vec::new(), Vec::new());
    for _ in 0..50 {
        let phi = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let y = phi.dot(&truth) + rng.random_range(-0.1..0.1);
        state = state.update(&phi, &DVector::from_element(1, y), &DMatrix::from_element(1, 1, var)).unwrap();
        regressors.push(phi);
        outputs.push(y);
    }
    let (mean, cov) = batch_least_squares(&mean0, &cov0, &regressors, &outputs, var);
    assert!((&state.mean - mean).amax() < 1e-8);
    assert!((&state.covariance - cov).amax() < 1e-8);
}

#[test]
fn projection_is_identity_inside_the_domain() {
    let domain = point_estimate_domain(&square(1.0), None, SparseSetShape::Box).unwrap();
    let state = RlsState::new(DVector::from_row_slice(&[0.3, -0.2]), DMatrix::identity(2, 2)).unwrap();
    assert_eq!(project_mean(&state, &domain, &tol()).unwrap(), state.mean);
}

#[test]
fn isotropic_projection_onto_a_box_clamps() {
    let domain = point_estimate_domain(&square(1.0), None, SparseSetShape::Box).unwrap();
    let state = RlsState::new(DVector::from_row_slice(&[2.0, -0.5]), DMatrix::identity(2, 2)).unwrap();
    let x = project_mean(&state, &domain, &tol()).unwrap();
    assert!((x - DVector::from_row_slice(&[1.0, -0.5])).amax() < 1e-7);
}

#[test]
fn anisotropic_projection_matches_the_planar_oracle() {
    let mut rng = rng_stream(22, 0);
    for _ in 0..20 {
        let (p, _) = random_polytope(&mut rng, 2, 1.0, 3);
        let l = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let cov = &l * l.transpose() + DMatrix::identity(2, 2) * 0.05;
        let mean = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let state = RlsState::new(mean.clone(), cov.clone()).unwrap();
        let domain = point_estimate_domain(&p, None, SparseSetShape::Box).unwrap();
        let x = project_mean(&state, &domain, &tol()).unwrap();
        let oracle = planar_projection_oracle(&p, &cov.try_inverse().unwrap(), &mean);
        assert!((&x - &oracle).amax() < 1e-6, "{x} vs {oracle}");
    }
}

#[test]
fn domain_without_sparse_set_is_the_feasible_set() {
    let p = square(1.0);
    let domain = point_estimate_domain(&p, None, SparseSetShape::Box).unwrap();
    assert_eq!(domain.combined, p);
    assert!(domain.fsps_box.is_none());
}

#[test]
fn sparse_box_inside_the_feasible_set_dominates() {
    let set = fsps(DMatrix::from_row_slice(1, 2, &[0.2, -0.1]), 0.3);
    let domain = point_estimate_domain(&square(1.0), Some(&set), SparseSetShape::Box).unwrap();
    let (lower, upper) = domain.combined.bounding_box().unwrap();
    assert!((lower - DVector::from_row_slice(&[-0.1, -0.4])).amax() < 1e-7);
    assert!((upper - DVector::from_row_slice(&[0.5, 0.2])).amax() < 1e-7);
}

#[test]
fn disjoint_sets_give_an_empty_domain() {
    let set = fsps(DMatrix::from_row_slice(1, 2, &[5.0, 5.0]), 0.5);
    assert!(matches!(
        point_estimate_domain(&square(1.0), Some(&set), SparseSetShape::Box),
        Err(Error::EmptyDomain)
    ));
}

#[test]
fn ball_shape_projects_onto_the_sphere() {
    let set = fsps(DMatrix::from_row_slice(1, 2, &[0.0, 0.0]), 0.5);
    let domain = point_estimate_domain(&square(1.0), Some(&set), SparseSetShape::Ball).unwrap();
    let state = RlsState::new(DVector::from_row_slice(&[0.9, 0.9]), DMatrix::identity(2, 2)).unwrap();
    let x = project_mean(&state, &domain, &tol()).unwrap();
    let expected = DVector::from_element(2, 0.5 / 2f64.sqrt());
    assert!((&x - expected).amax() < 1e-6);
    assert!(domain.contains(&x, 1e-7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_never_grows(seed in any::<u64>()) {
        let mut rng = rng_stream(seed, 0);
        let dim = 4;
        let mut state = RlsState::new(DVector::zeros(dim), DMatrix::identity(dim, dim) * 0.1).unwrap();
        for _ in 0..10 {
            let phi = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let next = state
                .update(&phi, &DVector::from_element(1, rng.random_range(-1.0..1.0)), &DMatrix::from_element(1, 1, 0.01))
                .unwrap();
            let drop = &state.covariance - &next.covariance;
            prop_assert!(drop.symmetric_eigenvalues().min() >= -1e-12);
            state = next;
        }
    }

    #[test]
    fn projection_is_optimal_against_sampled_points(seed in any::<u64>()) {
        let mut rng = rng_stream(seed, 0);
        let (p, _) = random_polytope(&mut rng, 3, 1.0, 4);
        let l = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let cov = &l * l.transpose() + DMatrix::identity(3, 3) * 0.05;
        let weight = cov.clone().try_inverse().unwrap();
        let mean = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
        let state = RlsState::new(mean.clone(), cov).unwrap();
        let domain = point_estimate_domain(&p, None, SparseSetShape::Box).unwrap();
        let x = project_mean(&state, &domain, &tol()).unwrap();
        prop_assert!(p.contains(&x, 1e-7));
        let best = weighted(&weight, &(&x - &mean));
        let mut checked = 0;
        while checked < 1000 {
            let z = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if p.contains(&z, 0.0) {
                prop_assert!(weighted(&weight, &(&z - &mean)) >= best - 1e-6 * (1.0 + best));
                checked += 1;
            }
        }
    }
}
