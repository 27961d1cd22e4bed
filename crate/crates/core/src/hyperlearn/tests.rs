use super::*;
use crate::covariance::tests::{loc, tl, two_type_1d};
use crate::covariance::{cov_matrix, output_cov};
use crate::exact::{sample_prior, ExactPrior, PriorCovariance};
use approx::assert_relative_eq;
use nalgebra::DMatrix;

fn one_type(signal: f64, noise: f64) -> Hyperparams {
    Hyperparams {
        num_types: 1,
        target_types: vec![0],
        signal_var: vec![signal],
        noise_var: vec![noise],
        latent_precision_inv: vec![0.25],
        smoothing_precision_inv: vec![vec![0.25]],
        prior_mean: vec![],
    }
}

/// Log density by explicit inverse and determinant.
fn gaussian_logpdf(c: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let inv = c.clone().try_inverse().unwrap();
    -0.5 * (y.transpose() * inv * y)[(0, 0)] - 0.5 * c.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn single_point_at_zero() {
    let h = two_type_1d();
    let x = [tl(&[0.3], 1)];
    let v = output_cov(&x[0], &x[0], &h).unwrap();
    let l = log_marginal_likelihood(&h, &x, &DVector::zeros(1), LikelihoodMode::Exact, None).unwrap();
    assert_relative_eq!(l, -0.5 * (2.0 * std::f64::consts::PI * v).ln(), max_relative = 1e-14);
}

#[test]
fn far_apart_points_factorize() {
    let h = two_type_1d();
    let x = [tl(&[0.0], 0), tl(&[100.0], 1), tl(&[200.0], 0)];
    let y = DVector::from_vec(vec![0.4, -1.2, 2.0]);
    let l = log_marginal_likelihood(&h, &x, &y, LikelihoodMode::Exact, None).unwrap();
    let sum: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(p, v)| {
            let one = std::slice::from_ref(p);
            log_marginal_likelihood(&h, one, &DVector::from_element(1, *v), LikelihoodMode::Exact, None).unwrap()
        })
        .sum();
    assert_relative_eq!(l, sum, max_relative = 1e-12);
}

#[test]
fn exact_mode_matches_dense_density() {
    let mut h = two_type_1d();
    h.prior_mean = vec![0.5, -1.0];
    let x: Vec<TypedLocation> = (0..9).map(|k| tl(&[k as f64 * 0.37], k % 2)).collect();
    let y = DVector::from_iterator(9, (0..9).map(|k| (k as f64 * 0.7).sin()));
    let c = cov_matrix(&x, &x, &h).unwrap();
    let centered = DVector::from_iterator(9, (0..9).map(|k| y[k] - h.prior_mean[k % 2]));
    let expected = gaussian_logpdf(&c, &centered);
    let got = log_marginal_likelihood(&h, &x, &y, LikelihoodMode::Exact, None).unwrap();
    assert_relative_eq!(got, expected, max_relative = 1e-10);
}

#[test]
fn pitc_mode_matches_dense_sparse_prior() {
    let h = two_type_1d();
    let x: Vec<TypedLocation> = (0..10).map(|k| tl(&[k as f64 * 0.3], k % 2)).collect();
    let y = DVector::from_iterator(10, (0..10).map(|k| (k as f64).cos()));
    let u = InducingSet::from_locations(vec![loc(&[0.0]), loc(&[1.5]), loc(&[2.7])]);
    let model = PitcModel::build(h.clone(), u.clone(), vec![
        x.iter().filter(|p| p.type_index == 0).cloned().collect(),
        x.iter().filter(|p| p.type_index == 1).cloned().collect(),
    ])
    .unwrap();
    let expected = gaussian_logpdf(&model.prior_cov_sym(&x), &y);
    let got = log_marginal_likelihood(&h, &x, &y, LikelihoodMode::Pitc, Some(&u)).unwrap();
    assert_relative_eq!(got, expected, max_relative = 1e-9);
}

#[test]
fn pitc_mode_equals_exact_for_one_type() {
    let h = one_type(1.3, 0.2);
    for m in [1, 3, 6] {
        let x: Vec<TypedLocation> = (0..12).map(|k| tl(&[k as f64 * 0.21], 0)).collect();
        let y = DVector::from_iterator(12, (0..12).map(|k| (k as f64 * 1.3).sin()));
        let u = InducingSet::from_locations((0..m).map(|k| loc(&[k as f64 * 0.5])).collect());
        let e = log_marginal_likelihood(&h, &x, &y, LikelihoodMode::Exact, None).unwrap();
        let p = log_marginal_likelihood(&h, &x, &y, LikelihoodMode::Pitc, Some(&u)).unwrap();
        assert!(((e - p) / e).abs() < 1e-8, "m {m}: {e} vs {p}");
    }
}

#[test]
fn input_errors() {
    let h = one_type(1.0, 0.1);
    let x = [tl(&[0.0], 0)];
    assert!(log_marginal_likelihood(&h, &x, &DVector::zeros(2), LikelihoodMode::Exact, None).is_err());
    assert!(log_marginal_likelihood(&h, &x, &DVector::zeros(1), LikelihoodMode::Pitc, None).is_err());
    assert!(log_marginal_likelihood(&h, &[tl(&[0.0], 3)], &DVector::zeros(1), LikelihoodMode::Exact, None).is_err());
}

#[test]
fn singular_sparse_prior_is_penalized() {
    let h = one_type(1.0, 0.1);
    let u = InducingSet::from_locations(vec![loc(&[0.0]), loc(&[0.0])]);
    let l = log_marginal_likelihood(&h, &[tl(&[0.0], 0)], &DVector::zeros(1), LikelihoodMode::Pitc, Some(&u)).unwrap();
    assert_eq!(l, NON_SPD_PENALTY);
}

#[test]
fn nelder_mead_finds_quadratic_and_rosenbrock_minima() {
    let q = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 2000, 1e-8);
    assert!(q.converged);
    assert!((q.x[0] - 1.0).abs() < 1e-6 && (q.x[1] + 2.0).abs() < 1e-6);
    let r = nelder_mead(
        |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
        &[-1.2, 1.0],
        0.5,
        5000,
        1e-9,
    );
    assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    assert!(r.evaluations <= 5000 + 2);
}

#[test]
fn nelder_mead_respects_budget_and_ignores_nan() {
    let r = nelder_mead(|x| if x[0] > 2.0 { f64::NAN } else { (x[0] - 3.0).powi(2) }, &[0.0], 0.5, 50, 1e-12);
    assert!(r.evaluations <= 52);
    assert!(r.x[0] <= 2.0);
    let one = nelder_mead(|x| x[0] * x[0], &[1.0], 0.5, 1, 1e-12);
    assert_eq!(one.x, vec![1.0]);
}

#[test]
fn encode_decode_round_trip() {
    let h = Hyperparams {
        num_types: 2,
        target_types: vec![1],
        signal_var: vec![1.5, 0.7],
        noise_var: vec![0.2, 0.3],
        latent_precision_inv: vec![0.4, 0.9],
        smoothing_precision_inv: vec![vec![0.1, 0.2], vec![0.3, 0.5]],
        prior_mean: vec![1.0, 2.0],
    };
    let back = decode(&encode(&h, false), &h, false);
    for (a, b) in h.smoothing_precision_inv.iter().flatten().zip(back.smoothing_precision_inv.iter().flatten()) {
        assert_relative_eq!(a, b, max_relative = 1e-14);
    }
    assert_eq!(back.target_types, h.target_types);
    assert_eq!(back.prior_mean, h.prior_mean);
    let tied = encode(&h, true);
    assert_eq!(tied.len(), 2 + 2 + 1 + 2);
    let d = decode(&tied, &h, true);
    assert_relative_eq!(d.latent_precision_inv[0], (0.4f64 * 0.9).sqrt(), max_relative = 1e-14);
    assert_eq!(d.latent_precision_inv[0], d.latent_precision_inv[1]);
}

fn synthetic(h: &Hyperparams, n: usize, seed: u64) -> (Vec<TypedLocation>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<TypedLocation> = Vec::new();
    while x.len() < n {
        let p = tl(&[rng.random_range(0.0..20.0)], rng.random_range(0..h.num_types));
        if !x.contains(&p) {
            x.push(p);
        }
    }
    let y = sample_prior(&ExactPrior::new(h.clone()).unwrap(), &x, &mut rng).unwrap();
    (x, y)
}

#[test]
fn fit_never_worsens_and_is_deterministic() {
    let truth = two_type_1d();
    let (x, y) = synthetic(&truth, 40, 3);
    let opts = FitOptions {
        budget: 300,
        restarts: 3,
        seed: 11,
        ..FitOptions::default()
    };
    let a = fit_hyperparams(&x, &y, &truth, None, &opts).unwrap();
    assert!(a.final_nll <= a.initial_nll);
    assert!(a.h.signal_var.iter().chain(&a.h.noise_var).all(|v| *v > 0.0));
    a.h.validate().unwrap();
    let b = fit_hyperparams(&x, &y, &truth, None, &opts).unwrap();
    assert_eq!(a, b);
    let text = a.to_toml_string();
    assert_eq!(Hyperparams::from_toml_str(&text).unwrap(), a.h);
}

#[test]
fn fit_in_pitc_mode_runs() {
    let truth = two_type_1d();
    let (x, y) = synthetic(&truth, 30, 4);
    let u = InducingSet::from_locations((0..8).map(|k| loc(&[k as f64 * 2.5])).collect());
    let opts = FitOptions {
        mode: LikelihoodMode::Pitc,
        budget: 200,
        restarts: 2,
        ..FitOptions::default()
    };
    let r = fit_hyperparams(&x, &y, &truth, Some(&u), &opts).unwrap();
    assert!(r.final_nll <= r.initial_nll);
    assert!(fit_hyperparams(&x, &y, &truth, None, &opts).is_err());
}

#[test]
fn bad_options_are_rejected() {
    let h = one_type(1.0, 0.1);
    let x = [tl(&[0.0], 0)];
    let opts = FitOptions {
        budget: 0,
        ..FitOptions::default()
    };
    assert!(fit_hyperparams(&x, &DVector::zeros(1), &h, None, &opts).is_err());
}

#[test]
fn noise_variance_is_recovered() {
    let truth = one_type(1.0, 0.1);
    let start = Hyperparams {
        signal_var: vec![2.0],
        noise_var: vec![0.4],
        latent_precision_inv: vec![0.6],
        smoothing_precision_inv: vec![vec![0.6]],
        ..truth.clone()
    };
    let opts = FitOptions {
        budget: 400,
        restarts: 2,
        ..FitOptions::default()
    };
    let mut ratios: Vec<f64> = (0..10)
        .into_par_iter()
        .map(|seed| {
            let (x, y) = synthetic(&truth, 200, 100 + seed);
            let r = fit_hyperparams(&x, &y, &start, None, &opts).unwrap();
            r.h.noise_var[0] / truth.noise_var[0]
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[4] + ratios[5]);
    assert!((0.5..=2.0).contains(&median), "noise ratios {ratios:?}");
}
