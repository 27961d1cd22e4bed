//! Exact multi-output posterior and Gaussian entropies.
//!
//! [`posterior_dense`] conditions any [`PriorCovariance`] by brute-force
//! Schur complement; it is the oracle against which the sparse fast paths are
//! checked.

use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::{Hyperparams, Kernel, TypedLocation};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdFactor};

/// Predictive mean and covariance over a list of queried tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPrediction {
    pub fn variances(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }
}

/// A joint Gaussian prior over typed measurements.
pub trait PriorCovariance: Sync {
    fn hyperparams(&self) -> &Hyperparams;

    fn prior_cov(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64>;

    fn prior_cov_sym(&self, a: &[TypedLocation]) -> DMatrix<f64> {
        let mut k = self.prior_cov(a, a);
        symmetrize(&mut k);
        k
    }

    fn prior_mean(&self, a: &[TypedLocation]) -> DVector<f64> {
        let h = self.hyperparams();
        DVector::from_iterator(a.len(), a.iter().map(|p| h.prior_mean_of(p.type_index)))
    }
}

/// The full (non-sparse) convolved prior.
#[derive(Clone, Debug)]
pub struct ExactPrior {
    h: Hyperparams,
    kernel: Kernel,
}

impl ExactPrior {
    pub fn new(h: Hyperparams) -> Result<Self> {
        h.validate()?;
        let kernel = Kernel::new(&h);
        Ok(ExactPrior { h, kernel })
    }
}

impl PriorCovariance for ExactPrior {
    fn hyperparams(&self) -> &Hyperparams {
        &self.h
    }

    fn prior_cov(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64> {
        self.kernel.cov_matrix(a, b)
    }

    fn prior_cov_sym(&self, a: &[TypedLocation]) -> DMatrix<f64> {
        self.kernel.cov_matrix_sym(a)
    }
}

pub(crate) fn validate_tuples(h: &Hyperparams, tuples: &[TypedLocation]) -> Result<()> {
    for p in tuples {
        if p.type_index >= h.num_types {
            return Err(Error::domain(format!(
                "tuple {p} has type index outside 0..{}",
                h.num_types
            )));
        }
        if p.location.dim() != h.dim() {
            return Err(Error::Dimension {
                expected: h.dim(),
                got: p.location.dim(),
            });
        }
    }
    Ok(())
}

/// Duplicate tuples make the noisy covariance exactly singular.
pub(crate) fn check_distinct(tuples: &[TypedLocation], what: &str) -> Result<()> {
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    order.sort_by(|&a, &b| tuples[a].lex_cmp(&tuples[b]));
    let dups: Vec<String> = order
        .windows(2)
        .filter(|w| tuples[w[0]] == tuples[w[1]])
        .map(|w| tuples[w[0]].to_string())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::IllConditioned {
            what: what.to_string(),
            detail: format!("duplicate tuples {}", dups.join(", ")),
        })
    }
}

pub(crate) fn check_disjoint(x: &[TypedLocation], z: &[TypedLocation]) -> Result<()> {
    if let Some(p) = z.iter().find(|p| x.contains(p)) {
        return Err(Error::domain(format!("query tuple {p} is also observed")));
    }
    Ok(())
}

/// Conditions `prior` on `y_x` at `x` and predicts at `z` by dense Schur complement.
pub fn posterior_dense<P: PriorCovariance + ?Sized>(
    prior: &P,
    x: &[TypedLocation],
    y_x: &DVector<f64>,
    z: &[TypedLocation],
) -> Result<GaussianPrediction> {
    let h = prior.hyperparams();
    if y_x.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y_x.len(),
        });
    }
    validate_tuples(h, x)?;
    validate_tuples(h, z)?;
    check_disjoint(x, z)?;
    check_distinct(x, "observation covariance")?;

    let mu_z = prior.prior_mean(z);
    let kzz = prior.prior_cov_sym(z);
    if x.is_empty() {
        return Ok(GaussianPrediction {
            mean: mu_z,
            cov: kzz,
        });
    }
    let kxx = SpdFactor::new(prior.prior_cov_sym(x), "observation covariance")?;
    let kxz = prior.prior_cov(x, z);
    let resid = y_x - prior.prior_mean(x);
    let alpha = kxx.solve_vec(&resid);
    let mean = mu_z + kxz.transpose() * alpha;
    let w = kxx.whiten(&kxz);
    let mut cov = kzz - w.transpose() * w;
    symmetrize(&mut cov);
    Ok(GaussianPrediction { mean, cov })
}

/// Exact posterior under the full convolved prior.
pub fn exact_posterior(
    x: &[TypedLocation],
    y_x: &DVector<f64>,
    z: &[TypedLocation],
    h: &Hyperparams,
) -> Result<GaussianPrediction> {
    posterior_dense(&ExactPrior::new(h.clone())?, x, y_x, z)
}

/// One joint draw of noisy measurements at `tuples` from `prior`.
pub fn sample_prior<P: PriorCovariance + ?Sized, R: Rng + ?Sized>(
    prior: &P,
    tuples: &[TypedLocation],
    rng: &mut R,
) -> Result<DVector<f64>> {
    validate_tuples(prior.hyperparams(), tuples)?;
    check_distinct(tuples, "sampled covariance")?;
    let f = SpdFactor::new(prior.prior_cov_sym(tuples), "sampled covariance")?;
    let z = DVector::from_iterator(tuples.len(), (0..tuples.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(prior.prior_mean(tuples) + f.color_vec(&z))
}

pub(crate) fn half_log_2pie() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

/// `1/2 log((2 pi e)^n |cov|)`; zero for an empty matrix.
pub fn joint_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    if n != cov.ncols() {
        return Err(Error::Dimension {
            expected: n,
            got: cov.ncols(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite covariance entry"));
    }
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::domain("covariance is not positive definite"))?;
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok(n as f64 * half_log_2pie() + 0.5 * log_det)
}

/// `H(Y_z | Y_x)` under any prior; independent of the observed values.
pub fn conditional_entropy_under<P: PriorCovariance + ?Sized>(
    prior: &P,
    x: &[TypedLocation],
    z: &[TypedLocation],
) -> Result<f64> {
    let y = DVector::zeros(x.len());
    joint_entropy(&posterior_dense(prior, x, &y, z)?.cov)
}

/// `H(Y_z | Y_x)` under the exact prior.
pub fn conditional_entropy(x: &[TypedLocation], z: &[TypedLocation], h: &Hyperparams) -> Result<f64> {
    conditional_entropy_under(&ExactPrior::new(h.clone())?, x, z)
}
