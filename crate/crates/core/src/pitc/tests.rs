use super::*;
use crate::covariance::tests::{loc, tl};
use crate::covariance::{gaussian_density, output_cov};
use crate::exact::exact_posterior;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hyper(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Hyperparams {
    Hyperparams {
        num_types: m,
        target_types: vec![0],
        signal_var: (0..m).map(|_| rng.random_range(0.5..2.0)).collect(),
        noise_var: (0..m).map(|_| rng.random_range(0.06..0.5)).collect(),
        latent_precision_inv: (0..d).map(|_| rng.random_range(0.05..0.5)).collect(),
        smoothing_precision_inv: (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(0.05..0.5)).collect())
            .collect(),
        prior_mean: vec![],
    }
}

fn random_tuples(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> Vec<TypedLocation> {
    let mut out: Vec<TypedLocation> = Vec::new();
    while out.len() < n {
        let c: Vec<f64> = (0..d).map(|_| (rng.random_range(0..12) as f64) * 0.25).collect();
        let p = tl(&c, rng.random_range(0..m));
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn random_model(seed: u64, m: usize, d: usize, n_inducing: usize) -> PitcModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hyper(&mut rng, m, d);
    let u: Vec<Location> = (0..n_inducing)
        .map(|k| {
            let c: Vec<f64> = (0..d).map(|j| (k as f64 * 0.9 + j as f64 * 0.37) % 3.0).collect();
            loc(&c)
        })
        .collect();
    let mut v = vec![Vec::new(); m];
    for p in random_tuples(&mut rng, 10, m, d) {
        v[p.type_index].push(p);
    }
    v[0].push(tl(&vec![10.0; d], 0));
    PitcModel::build(h, InducingSet::from_locations(u), v).unwrap()
}

fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1e-300);
    (a - b).amax() / scale
}

#[test]
fn single_inducing_location_gives_scalar_latent_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = random_hyper(&mut rng, 2, 2);
    let model = PitcModel::build(
        h.clone(),
        InducingSet::from_locations(vec![loc(&[0.3, 0.1])]),
        vec![vec![tl(&[0.0, 0.0], 0)], vec![]],
    )
    .unwrap();
    assert_eq!(model.kuu().shape(), (1, 1));
    assert_relative_eq!(
        model.kuu()[(0, 0)],
        gaussian_density(&[0.0, 0.0], &h.latent_precision_inv).unwrap(),
        epsilon = 1e-14
    );
}

#[test]
fn duplicate_inducing_locations_fail_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_hyper(&mut rng, 1, 1);
    let err = PitcModel::build(
        h,
        InducingSet::from_locations(vec![loc(&[0.5]), loc(&[0.5])]),
        vec![vec![tl(&[0.0], 0)]],
    );
    assert!(matches!(err, Err(Error::IllConditioned { .. })));
}

#[test]
fn missing_target_candidates_fail_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_hyper(&mut rng, 2, 1);
    let err = PitcModel::build(
        h,
        InducingSet::from_locations(vec![loc(&[0.5])]),
        vec![vec![], vec![tl(&[0.0], 1)]],
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn build_is_deterministic() {
    let a = random_model(5, 2, 2, 4);
    let b = random_model(5, 2, 2, 4);
    assert_eq!(a.kuu(), b.kuu());
    assert_eq!(a.candidate_psi(), b.candidate_psi());
}

#[test]
fn gamma_is_low_rank_psd_and_transposes() {
    let model = random_model(2, 3, 2, 3);
    let a: Vec<TypedLocation> = model.candidates().to_vec();
    let g = model.gamma(&a, &a);
    let eig = g.clone().symmetric_eigen().eigenvalues;
    assert!(eig.min() > -1e-10);
    assert!(eig.iter().filter(|e| **e > 1e-9 * eig.max()).count() <= 3);
    let b = &a[..4];
    assert_eq!(model.gamma(&a, b), model.gamma(b, &a).transpose());
    let far = vec![tl(&[500.0, 500.0], 1)];
    assert!(model.gamma(&far, &far).amax() < 1e-300);
}

#[test]
fn lambda_structure() {
    let model = random_model(3, 3, 1, 4);
    let a: Vec<TypedLocation> = model.candidates().to_vec();
    let lam = model.lambda_blocks(&a);
    for r in 0..a.len() {
        assert!(lam[(r, r)] >= model.hyperparams().noise_var[a[r].type_index] - 1e-12);
        for c in 0..a.len() {
            if a[r].type_index != a[c].type_index {
                assert_eq!(lam[(r, c)], 0.0);
            }
        }
    }
    let single = random_model(3, 1, 1, 4);
    let a: Vec<TypedLocation> = single.candidates().to_vec();
    let sigma = crate::covariance::cov_matrix(&a, &a, single.hyperparams()).unwrap();
    let expect = &sigma - single.gamma(&a, &a);
    assert!(max_rel_diff(&single.lambda_blocks(&a), &expect) < 1e-12);
}

#[test]
fn single_type_matches_exact_posterior() {
    for seed in 0..20 {
        let model = random_model(100 + seed, 1, 2, 3);
        let all = model.candidates().to_vec();
        let (x, z) = all.split_at(6);
        let y = DVector::from_fn(x.len(), |i, _| (i as f64 * 0.7).sin());
        let fast = model.pitc_posterior(x, &y, z).unwrap();
        let exact = exact_posterior(x, &y, z, model.hyperparams()).unwrap();
        assert!(max_rel_diff(&fast.cov, &exact.cov) < 1e-8);
        let dm = (&fast.mean - &exact.mean).amax() / exact.mean.amax().max(1e-300);
        assert!(dm < 1e-8, "mean diff {dm}");
    }
}

#[test]
fn no_observations_gives_sparse_prior() {
    let model = random_model(7, 2, 2, 3);
    let z = model.candidates().to_vec();
    let p = model.pitc_posterior(&[], &DVector::zeros(0), &z).unwrap();
    let expect = model.gamma(&z, &z) + model.lambda_blocks(&z);
    assert!(max_rel_diff(&p.cov, &expect) < 1e-12);
}

#[test]
fn covariance_ignores_observed_values() {
    let model = random_model(8, 3, 2, 4);
    let all = model.candidates().to_vec();
    let (x, z) = all.split_at(5);
    let a = model.pitc_posterior(x, &DVector::from_element(5, 1.0), z).unwrap();
    let b = model.pitc_posterior(x, &DVector::from_element(5, -7.5), z).unwrap();
    assert_eq!(a.cov, b.cov);
}

#[test]
fn fast_route_matches_dense_route() {
    for seed in 0..30 {
        let m = 1 + (seed as usize % 3);
        let model = random_model(200 + seed, m, 2, 4);
        let all = model.candidates().to_vec();
        let (x, z) = all.split_at(4 + seed as usize % 5);
        let y = DVector::from_fn(x.len(), |i, _| (i as f64 * 1.3 + seed as f64).cos());
        for coupling in [Coupling::SharedBlocks, Coupling::IndependentQueries] {
            let fast = model.pitc_posterior_with(x, &y, z, coupling).unwrap();
            let dense = model.pitc_posterior_dense(x, &y, z, coupling).unwrap();
            assert!(max_rel_diff(&fast.cov, &dense.cov) < 1e-8, "{coupling:?}");
            assert!((&fast.mean - &dense.mean).amax() <= 1e-8 * dense.mean.amax().max(1.0));
        }
        let vars = model.posterior_variances(x, z).unwrap();
        let full = model.pitc_posterior(x, &y, z).unwrap();
        for (k, v) in vars.iter().enumerate() {
            assert_relative_eq!(*v, full.cov[(k, k)], max_relative = 1e-12);
        }
    }
}

#[test]
fn variance_floor_and_conditioning_monotonicity() {
    for seed in 0..10 {
        let model = random_model(300 + seed, 3, 1, 3);
        let all = model.candidates().to_vec();
        let z = &all[all.len() - 3..];
        let pool = &all[..all.len() - 3];
        let mut prev: Option<Vec<f64>> = None;
        for n in 0..=pool.len() {
            let v = model.posterior_variances(&pool[..n], z).unwrap();
            for (k, p) in z.iter().enumerate() {
                assert!(v[k] >= model.hyperparams().noise_var[p.type_index] - 1e-10);
            }
            if let Some(prev) = &prev {
                for k in 0..z.len() {
                    assert!(v[k] <= prev[k] + 1e-10);
                }
            }
            prev = Some(v);
        }
    }
}

#[test]
fn select_inducing_dedups_pooled_locations() {
    let locs = vec![loc(&[0.0]), loc(&[0.0]), loc(&[1.0]), loc(&[2.0])];
    let u = select_inducing(&locs, 3, 4).unwrap();
    assert_eq!(u.len(), 3);
    assert_eq!(u.provenance.as_ref().unwrap().inertia, 0.0);
    assert!(select_inducing(&locs, 4, 4).is_err());
}

#[test]
fn output_cov_consistent_with_pitc_prior_for_single_type() {
    let model = random_model(9, 1, 1, 2);
    let a = &model.candidates()[..3];
    let k = model.prior_cov(a, a);
    for r in 0..3 {
        for c in 0..3 {
            assert_relative_eq!(k[(r, c)], output_cov(&a[r], &a[c], model.hyperparams()).unwrap(), max_relative = 1e-10);
        }
    }
}
