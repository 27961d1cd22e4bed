//! The selection objective
//!
//! ```text
//! F(X) = H(Y_{X_t} | L_U) - I(L_U; Y_{V_t \ X_t} | Y_X) + I(L_U; Y_{V_t})
//! ```
//!
//! evaluated in the PITC joint model. Inducing-value entropies reduce to
//! log-determinants of `I + Ψ_Aᵀ Λ_A⁻¹ Ψ_A` in whitened coordinates; the
//! target-candidate term of that sum is fixed and cached once, so evaluations
//! after [`CriterionCache::new`] never touch `|V_t|`-sized matrices.
//!
//! With several target types, `t` stands for their union throughout.

use nalgebra::{DMatrix, DVector};

use crate::covariance::TypedLocation;
use crate::error::{Error, Result};
use crate::exact::{conditional_entropy_under, half_log_2pie, ExactPrior};
use crate::linalg::{select_rows, symmetrize, SpdFactor};
use crate::pitc::{floor, ObservedBlocks, PitcModel};

/// Quantities that do not depend on the selected set.
#[derive(Clone, Debug)]
pub struct CriterionCache {
    /// `Ψ_{V_t}ᵀ Λ_{V_t}⁻¹ Ψ_{V_t}`, the whitened form of `Σ_{UV_t} Σ_{V_tV_t|U}⁻¹ Σ_{V_tU}`.
    target_summary: DMatrix<f64>,
    /// `I(L_U; Y_{V_t})`.
    f_constant: f64,
}

impl CriterionCache {
    /// One-off `O(|V_t|³)` precomputation.
    pub fn new(model: &PitcModel) -> Result<Self> {
        let target_summary = target_summary(model)?;
        let m = model.num_inducing();
        let f_constant = mi_from_summaries(&(DMatrix::identity(m, m) + &target_summary), &DMatrix::identity(m, m))?;
        Ok(CriterionCache {
            target_summary,
            f_constant,
        })
    }

    pub fn target_summary(&self) -> &DMatrix<f64> {
        &self.target_summary
    }

    /// `Σ_{UV_t} Σ_{V_tV_t|U}⁻¹ Σ_{V_tU}` in the original inducing coordinates.
    pub fn target_summary_unwhitened(&self, model: &PitcModel) -> DMatrix<f64> {
        let m = model.num_inducing();
        let l_inv = model.kuu_factor().whiten(&DMatrix::identity(m, m));
        // Σ_UU L⁻ᵀ = L
        let l = model.kuu() * l_inv.transpose();
        &l * &self.target_summary * l.transpose()
    }

    pub fn f_constant(&self) -> f64 {
        self.f_constant
    }
}

fn target_summary(model: &PitcModel) -> Result<DMatrix<f64>> {
    let idx = model.target_candidates();
    let tuples: Vec<TypedLocation> = idx.iter().map(|&k| model.candidates()[k].clone()).collect();
    let psi = select_rows(model.candidate_psi(), &idx);
    Ok(model.observe(&tuples, &psi)?.summary)
}

/// `½ log |with| - ½ log |without|` for two whitened posterior precisions.
fn mi_from_summaries(with: &DMatrix<f64>, without: &DMatrix<f64>) -> Result<f64> {
    let a = SpdFactor::new(with.clone(), "inducing posterior precision")?;
    let b = SpdFactor::new(without.clone(), "inducing posterior precision")?;
    Ok(0.5 * (a.log_det() - b.log_det()))
}

pub(crate) fn indices_of(model: &PitcModel, x: &[TypedLocation]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.len());
    for p in x {
        let k = model
            .candidate_index(p)
            .ok_or_else(|| Error::domain(format!("tuple {p} is not a candidate")))?;
        if out.contains(&k) {
            return Err(Error::domain(format!("tuple {p} selected twice")));
        }
        out.push(k);
    }
    Ok(out)
}

fn observe_indices(model: &PitcModel, idx: &[usize]) -> Result<ObservedBlocks> {
    let tuples: Vec<TypedLocation> = idx.iter().map(|&k| model.candidates()[k].clone()).collect();
    model.observe(&tuples, &select_rows(model.candidate_psi(), idx))
}

/// `H(Y_{X_t} | L_U)` for target-type tuples (any tuples, not only candidates).
pub fn entropy_given_inducing(model: &PitcModel, x_t: &[TypedLocation]) -> Result<f64> {
    let h = model.hyperparams();
    if let Some(p) = x_t.iter().find(|p| !h.is_target(p.type_index)) {
        return Err(Error::domain(format!("{p} is not of a target type")));
    }
    let lam = model.lambda_blocks(x_t);
    let f = SpdFactor::new(lam, "residual block")?;
    Ok(x_t.len() as f64 * half_log_2pie() + 0.5 * f.log_det())
}

fn entropy_given_inducing_idx(model: &PitcModel, obs: &ObservedBlocks) -> f64 {
    let h = model.hyperparams();
    obs.groups
        .iter()
        .filter(|g| h.is_target(g.type_index))
        .map(|g| g.members.len() as f64 * half_log_2pie() + 0.5 * g.lambda.log_det())
        .sum()
}

/// Whitened `I + Σ_{i ∉ t} S_{X_i}` and `I + Σ_i S_{X_i}` for a factorized selection.
fn precisions(model: &PitcModel, obs: &ObservedBlocks) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = model.num_inducing();
    let h = model.hyperparams();
    let mut aux = DMatrix::identity(m, m);
    for g in obs.groups.iter().filter(|g| !h.is_target(g.type_index)) {
        aux += g.psi.transpose() * &g.lambda_inv_psi;
    }
    symmetrize(&mut aux);
    let all = DMatrix::identity(m, m) + &obs.summary;
    (aux, all)
}

fn covers_all_targets(model: &PitcModel, idx: &[usize]) -> bool {
    let h = model.hyperparams();
    let selected_targets = idx.iter().filter(|&&k| h.is_target(model.candidates()[k].type_index)).count();
    selected_targets == model.target_candidates().len()
}

fn mi_idx(model: &PitcModel, target_summary: &DMatrix<f64>, obs: &ObservedBlocks, idx: &[usize]) -> Result<f64> {
    if covers_all_targets(model, idx) {
        return Ok(0.0);
    }
    let (aux, all) = precisions(model, obs);
    // H(L_U|Y_X) - H(L_U|Y_{X_-t ∪ V_t}) = ½ log|Q_A| - ½ log|Q_X|
    let mi = mi_from_summaries(&(aux + target_summary), &all)?;
    debug_assert!(mi > -1e-8, "negative conditional mutual information {mi}");
    Ok(mi.max(0.0))
}

/// `I(L_U; Y_{V_t \ X_t} | Y_X)` using the cached target summary.
pub fn mi_inducing_given(model: &PitcModel, cache: &CriterionCache, x: &[TypedLocation]) -> Result<f64> {
    let idx = indices_of(model, x)?;
    let obs = observe_indices(model, &idx)?;
    mi_idx(model, &cache.target_summary, &obs, &idx)
}

/// As [`mi_inducing_given`] but recomputing the target summary from scratch.
pub fn mi_inducing_given_uncached(model: &PitcModel, x: &[TypedLocation]) -> Result<f64> {
    let idx = indices_of(model, x)?;
    let obs = observe_indices(model, &idx)?;
    mi_idx(model, &target_summary(model)?, &obs, &idx)
}

pub(crate) fn criterion_f_idx(model: &PitcModel, cache: &CriterionCache, idx: &[usize]) -> Result<f64> {
    let obs = observe_indices(model, idx)?;
    let h = entropy_given_inducing_idx(model, &obs);
    Ok(h - mi_idx(model, &cache.target_summary, &obs, idx)? + cache.f_constant)
}

/// `F(X)`.
pub fn criterion_f(model: &PitcModel, cache: &CriterionCache, x: &[TypedLocation]) -> Result<f64> {
    criterion_f_idx(model, cache, &indices_of(model, x)?)
}

/// Per-iteration factorization of the selected set, from which every
/// candidate's greedy gain follows in `O(m² + |X_i|²)`.
pub struct GainEvaluator<'a> {
    model: &'a PitcModel,
    obs: ObservedBlocks,
    /// `I + S_X`
    q_selected: SpdFactor,
    /// `I + S_{X_-t} + S_{V_t}`; absent when only entropies are needed
    q_augmented: Option<SpdFactor>,
    selected: Vec<bool>,
    selected_order: Vec<usize>,
}

impl<'a> GainEvaluator<'a> {
    pub fn new(model: &'a PitcModel, cache: &CriterionCache, selected: &[usize]) -> Result<Self> {
        Self::build(model, Some(cache), selected)
    }

    /// Evaluator supporting [`entropy`](Self::entropy) and variances but not gains.
    pub fn entropy_only(model: &'a PitcModel, selected: &[usize]) -> Result<Self> {
        Self::build(model, None, selected)
    }

    fn build(model: &'a PitcModel, cache: Option<&CriterionCache>, selected: &[usize]) -> Result<Self> {
        let obs = observe_indices(model, selected)?;
        let (aux, all) = precisions(model, &obs);
        let q_selected = SpdFactor::new(all, "inducing posterior precision")?;
        let q_augmented = cache
            .map(|c| SpdFactor::new(aux + &c.target_summary, "inducing posterior precision"))
            .transpose()?;
        let mut mask = vec![false; model.candidates().len()];
        for &k in selected {
            mask[k] = true;
        }
        Ok(GainEvaluator {
            model,
            obs,
            q_selected,
            q_augmented,
            selected: mask,
            selected_order: selected.to_vec(),
        })
    }

    pub fn is_selected(&self, candidate: usize) -> bool {
        self.selected[candidate]
    }

    /// Residual-adjusted projection `g` and residual variance `r` of a candidate
    /// against the selected tuples of its own type.
    fn project(&self, candidate: usize) -> (DVector<f64>, f64) {
        let model = self.model;
        let p = &model.candidates()[candidate];
        let psi_c: DVector<f64> = model.candidate_psi().row(candidate).transpose();
        let kernel = model.kernel();
        let mut r = kernel.output_cov(p, p) - psi_c.norm_squared();
        let mut g = psi_c.clone();
        if let Some(group) = self.obs.groups.iter().find(|g| g.type_index == p.type_index) {
            let cands = model.candidates();
            let lam_xc = DVector::from_iterator(
                group.members.len(),
                group.members.iter().enumerate().map(|(row, _)| {
                    let q = &cands[self.member_candidate(group, row)];
                    kernel.output_cov(q, p) - group.psi.row(row).dot(&psi_c.transpose())
                }),
            );
            let b = group.lambda.solve_vec(&lam_xc);
            g -= group.psi.transpose() * &b;
            r -= lam_xc.dot(&b);
        }
        (g, r)
    }

    fn member_candidate(&self, group: &crate::pitc::ObservedGroup, row: usize) -> usize {
        self.selected_order[group.members[row]]
    }

    /// Posterior variance of a candidate given the selected tuples.
    pub fn variance_given_selected(&self, candidate: usize) -> f64 {
        let (g, r) = self.project(candidate);
        let var = self.q_selected.quad_form(&g) + r;
        self.record_floor(candidate, var);
        var
    }

    fn record_floor(&self, candidate: usize, var: f64) {
        let type_index = self.model.candidates()[candidate].type_index;
        floor::record(var, self.model.hyperparams().noise_var[type_index]);
    }

    /// `H(Y_c | Y_X)`.
    pub fn entropy(&self, candidate: usize) -> f64 {
        half_log_2pie() + 0.5 * self.variance_given_selected(candidate).ln()
    }

    /// `F(X ∪ {c}) - F(X)`.
    pub fn gain(&self, candidate: usize) -> f64 {
        let (g, r) = self.project(candidate);
        let var_x = self.q_selected.quad_form(&g) + r;
        self.record_floor(candidate, var_x);
        let type_index = self.model.candidates()[candidate].type_index;
        if self.model.hyperparams().is_target(type_index) {
            half_log_2pie() + 0.5 * var_x.ln()
        } else {
            let q_augmented = self.q_augmented.as_ref().expect("gain needs a criterion cache");
            let var_a = q_augmented.quad_form(&g) + r;
            self.record_floor(candidate, var_a);
            0.5 * (var_x / var_a).ln()
        }
    }
}

/// `F(X ∪ {c}) - F(X)` by the closed form of the greedy rule.
pub fn greedy_gain(
    model: &PitcModel,
    cache: &CriterionCache,
    selected: &[TypedLocation],
    candidate: &TypedLocation,
) -> Result<f64> {
    let idx = indices_of(model, selected)?;
    let c = model
        .candidate_index(candidate)
        .ok_or_else(|| Error::domain(format!("tuple {candidate} is not a candidate")))?;
    if idx.contains(&c) {
        return Err(Error::domain(format!("tuple {candidate} is already selected")));
    }
    Ok(GainEvaluator::new(model, cache, &idx)?.gain(c))
}

/// Which joint prior a dense entropy is evaluated under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosteriorRoute {
    Pitc,
    Exact,
}

/// `H(Y_{V_t \ X_t} | Y_X)` by dense conditioning.
pub fn old_criterion(model: &PitcModel, x: &[TypedLocation], route: PosteriorRoute) -> Result<f64> {
    let idx = indices_of(model, x)?;
    let remaining: Vec<TypedLocation> = model
        .target_candidates()
        .into_iter()
        .filter(|k| !idx.contains(k))
        .map(|k| model.candidates()[k].clone())
        .collect();
    match route {
        PosteriorRoute::Pitc => conditional_entropy_under(model, x, &remaining),
        PosteriorRoute::Exact => {
            conditional_entropy_under(&ExactPrior::new(model.hyperparams().clone())?, x, &remaining)
        }
    }
}
