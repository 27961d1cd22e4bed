//! Maximum-likelihood fitting of [`Hyperparams`] with a restarted Nelder–Mead
//! search over log-transformed parameters.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{Hyperparams, Kernel, TypedLocation};
use crate::error::{Error, Result};
use crate::exact::validate_tuples;
use crate::linalg::SpdFactor;
use crate::pitc::{InducingSet, PitcModel};

/// Log likelihood reported when the prior covariance cannot be factorized.
pub const NON_SPD_PENALTY: f64 = -1e18;

/// Log-parameters are clamped to `±LOG_BOUND` before decoding.
const LOG_BOUND: f64 = 20.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMode {
    #[default]
    Exact,
    Pitc,
}

fn penalize(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::IllConditioned { .. }) => Ok(NON_SPD_PENALTY),
        other => other,
    }
}

/// Gaussian log density of `y` under the prior of `x`, `Σ_XX` in exact mode
/// and `Γ_XX + Λ_X` in PITC mode.
pub fn log_marginal_likelihood(
    h: &Hyperparams,
    x: &[TypedLocation],
    y: &DVector<f64>,
    mode: LikelihoodMode,
    inducing: Option<&InducingSet>,
) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    h.validate()?;
    validate_tuples(h, x)?;
    let resid = DVector::from_iterator(x.len(), x.iter().zip(y.iter()).map(|(p, v)| v - h.prior_mean_of(p.type_index)));
    let n = x.len() as f64;
    let norm = 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    match mode {
        LikelihoodMode::Exact => penalize((|| {
            let c = SpdFactor::new(Kernel::new(h).cov_matrix_sym(x), "marginal covariance")?;
            Ok(-0.5 * c.quad_form(&resid) - 0.5 * c.log_det() - norm)
        })()),
        LikelihoodMode::Pitc => {
            let u = inducing.ok_or_else(|| Error::config("PITC likelihood needs inducing locations"))?;
            penalize((|| {
                let mut v = vec![Vec::new(); h.num_types];
                for p in x {
                    v[p.type_index].push(p.clone());
                }
                let model = PitcModel::build_any(h.clone(), u.clone(), v)?;
                let psi = model.psi(x);
                let obs = model.observe(x, &psi)?;
                let m = model.num_inducing();
                let mut quad = 0.0;
                let mut log_det = 0.0;
                let mut b = DVector::zeros(m);
                for g in &obs.groups {
                    let rg = DVector::from_iterator(g.members.len(), g.members.iter().map(|&k| resid[k]));
                    quad += g.lambda.quad_form(&rg);
                    log_det += g.lambda.log_det();
                    b += g.lambda_inv_psi.transpose() * rg;
                }
                let q = SpdFactor::new(nalgebra::DMatrix::identity(m, m) + &obs.summary, "inducing posterior precision")?;
                quad -= q.quad_form(&b);
                log_det += q.log_det();
                Ok(-0.5 * quad - 0.5 * log_det - norm)
            })())
        }
    }
}

/// Outcome of a Nelder–Mead run.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge `step`.
/// Stops when every vertex lies within `tol` (max norm) of the best one or
/// after `budget` evaluations.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, budget: usize, tol: f64) -> Minimum {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evaluations = 1;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), eval(x0))];
    for i in 0..n {
        if evaluations >= budget {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        evaluations += 1;
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    let diameter = |s: &[(Vec<f64>, f64)]| {
        s[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&s[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };
    order(&mut simplex);
    let mut iterations = 0;
    let mut converged = n == 0;
    if simplex.len() == n + 1 {
        while evaluations < budget {
            if diameter(&simplex) < tol {
                converged = true;
                break;
            }
            iterations += 1;
            let worst = simplex[n].clone();
            let centroid: Vec<f64> = (0..n)
                .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(1.0);
            let fr = eval(&xr);
            evaluations += 1;
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe);
                evaluations += 1;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = along(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                evaluations += 1;
                if fc < worst.1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                        let fx = eval(&x);
                        *v = (x, fx);
                    }
                    evaluations += n;
                }
            }
            order(&mut simplex);
        }
        if !converged {
            converged = diameter(&simplex) < tol;
        }
    }
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub mode: LikelihoodMode,
    /// Objective evaluations per restart.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    /// One length scale shared by all input dimensions, per kernel.
    pub tie_dimensions: bool,
    /// Restarts after the first start from the initial point shifted
    /// uniformly by up to this much per log-parameter.
    pub perturbation: f64,
    pub initial_step: f64,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            mode: LikelihoodMode::Exact,
            budget: 2000,
            restarts: 5,
            seed: 0,
            tie_dimensions: false,
            perturbation: 0.5,
            initial_step: 0.5,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub h: Hyperparams,
    pub final_nll: f64,
    pub initial_nll: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

impl FitResult {
    /// Hyperparameter TOML preceded by comment lines describing the fit.
    pub fn to_toml_string(&self) -> String {
        format!(
            "# final_nll = {}\n# initial_nll = {}\n# iterations = {}\n# converged = {}\n# restarts_used = {}\n{}",
            self.final_nll,
            self.initial_nll,
            self.iterations,
            self.converged,
            self.restarts_used,
            self.h.to_toml_string()
        )
    }
}

/// Positive parameters in the order signal, noise, latent, smoothing.
fn encode(h: &Hyperparams, tied: bool) -> Vec<f64> {
    let shrink = |v: &[f64]| -> Vec<f64> {
        let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        if tied {
            vec![logs.iter().sum::<f64>() / logs.len() as f64]
        } else {
            logs
        }
    };
    let mut theta: Vec<f64> = h.signal_var.iter().chain(&h.noise_var).map(|v| v.ln()).collect();
    theta.extend(shrink(&h.latent_precision_inv));
    for s in &h.smoothing_precision_inv {
        theta.extend(shrink(s));
    }
    theta
}

fn decode(theta: &[f64], template: &Hyperparams, tied: bool) -> Hyperparams {
    let m = template.num_types;
    let d = template.dim();
    let mut it = theta.iter().map(|t| t.clamp(-LOG_BOUND, LOG_BOUND).exp());
    let mut take = |k: usize| -> Vec<f64> { (0..k).map(|_| it.next().expect("parameter vector length")).collect() };
    let signal_var = take(m);
    let noise_var = take(m);
    let mut widen = |take_one: Vec<f64>| if tied { vec![take_one[0]; d] } else { take_one };
    let width = if tied { 1 } else { d };
    let latent = take(width);
    let latent_precision_inv = widen(latent);
    let smoothing_precision_inv = (0..m).map(|_| take(width)).map(&mut widen).collect();
    Hyperparams {
        num_types: m,
        target_types: template.target_types.clone(),
        signal_var,
        noise_var,
        latent_precision_inv,
        smoothing_precision_inv,
        prior_mean: template.prior_mean.clone(),
    }
}

/// Minimizes the negative log marginal likelihood of `y` from `init` and
/// `opts.restarts - 1` perturbed starts; the lowest value wins, ties going to
/// the earlier restart.
pub fn fit_hyperparams(
    x: &[TypedLocation],
    y: &DVector<f64>,
    init: &Hyperparams,
    inducing: Option<&InducingSet>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if opts.budget == 0 || opts.restarts == 0 {
        return Err(Error::config("fit budget and restarts must be >= 1"));
    }
    if opts.mode == LikelihoodMode::Pitc && inducing.is_none() {
        return Err(Error::config("PITC likelihood needs inducing locations"));
    }
    let tied = opts.tie_dimensions;
    let nll = |theta: &[f64]| -> f64 {
        match log_marginal_likelihood(&decode(theta, init, tied), x, y, opts.mode, inducing) {
            Ok(v) => -v,
            Err(_) => -NON_SPD_PENALTY,
        }
    };
    // surface input errors before searching
    let initial_nll = -log_marginal_likelihood(init, x, y, opts.mode, inducing)?;
    let theta0 = encode(init, tied);
    let runs: Vec<Minimum> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut start = theta0.clone();
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                for t in &mut start {
                    *t += rng.random_range(-opts.perturbation..=opts.perturbation);
                }
            }
            nelder_mead(nll, &start, opts.initial_step, opts.budget, opts.tolerance)
        })
        .collect();
    let (best, run) = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    if !(run.value < -NON_SPD_PENALTY / 10.0) {
        return Err(Error::FitDiverged {
            restarts: opts.restarts,
            best_nll: run.value,
        });
    }
    log::debug!("fit: restart {best} won with nll {:.6}", run.value);
    Ok(FitResult {
        h: decode(&run.x, init, tied),
        final_nll: run.value,
        initial_nll,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        converged: run.converged,
        restarts_used: opts.restarts,
    })
}

#[cfg(test)]
mod tests;
