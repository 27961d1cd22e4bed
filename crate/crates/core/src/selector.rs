//! Budgeted selection: the multi-output greedy rule and the m-Var, s-Var and
//! s-MI baselines, plus the spaced-candidate construction that bounds the
//! submodularity defect.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{gaussian_density, Hyperparams, Kernel, Location, TypedLocation};
use crate::criterion::{CriterionCache, GainEvaluator};
use crate::error::{Error, Result};
use crate::exact::half_log_2pie;
use crate::linalg::{symmetrize, SpdFactor};
use crate::pitc::PitcModel;

/// Scores within this relative distance of the best are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MGreedy,
    MVar,
    SVar,
    SMi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::MGreedy, Algorithm::MVar, Algorithm::SVar, Algorithm::SMi];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MGreedy => "m-greedy",
            Algorithm::MVar => "m-var",
            Algorithm::SVar => "s-var",
            Algorithm::SMi => "s-mi",
        }
    }

    /// Whether the algorithm only ever picks target-type tuples.
    pub fn target_only(self) -> bool {
        matches!(self, Algorithm::SVar | Algorithm::SMi)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}' (expected m-greedy, m-var, s-var or s-mi)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainRecord {
    pub iteration: usize,
    pub tuple: TypedLocation,
    /// The score the algorithm maximized at this step.
    pub gain: f64,
    /// Running sum of scores; for m-greedy this is `F` of the selection so far.
    pub cumulative: f64,
}

#[derive(Clone, Debug)]
pub struct SelectionState {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub selected: Vec<TypedLocation>,
    pub log: Vec<GainRecord>,
    /// Wall time of each iteration; not part of any deterministic output.
    pub iteration_times: Vec<Duration>,
}

impl SelectionState {
    fn new(algorithm: Algorithm, budget: usize) -> Self {
        SelectionState {
            algorithm,
            budget,
            selected: Vec::with_capacity(budget),
            log: Vec::with_capacity(budget),
            iteration_times: Vec::with_capacity(budget),
        }
    }

    fn push(&mut self, tuple: TypedLocation, gain: f64, elapsed: Duration) {
        let cumulative = self.log.last().map_or(0.0, |r| r.cumulative) + gain;
        self.log.push(GainRecord {
            iteration: self.log.len() + 1,
            tuple: tuple.clone(),
            gain,
            cumulative,
        });
        self.selected.push(tuple);
        self.iteration_times.push(elapsed);
    }

    pub fn write_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "type", "coordinates", "gain", "cumulative_f"])?;
        for r in &self.log {
            let coords: Vec<String> = r.tuple.location.coords().iter().map(|c| c.to_string()).collect();
            w.write_record([
                r.iteration.to_string(),
                r.tuple.type_index.to_string(),
                coords.join(" "),
                r.gain.to_string(),
                r.cumulative.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_log(&self, path: &Path) -> Result<()> {
        self.write_log(std::fs::File::create(path)?)
    }
}

/// Parses a selection log written by [`SelectionState::write_log`].
pub fn read_log<R: Read>(input: R) -> Result<Vec<GainRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let bad = |msg: String| Error::Parse {
            path: "selection log".into(),
            line,
            msg,
        };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("field {i}: {e}")));
        let coords = rec[2]
            .split_whitespace()
            .map(|c| c.parse::<f64>().map_err(|e| bad(format!("coordinate '{c}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(GainRecord {
            iteration: rec[0].parse().map_err(|e| bad(format!("iteration: {e}")))?,
            tuple: TypedLocation::new(
                Location::new(coords)?,
                rec[1].parse().map_err(|e| bad(format!("type: {e}")))?,
            ),
            gain: num(3)?,
            cumulative: num(4)?,
        });
    }
    Ok(out)
}

/// Best score with ties broken towards the smallest `(type_index, coordinates)`.
pub(crate) fn pick_best(candidates: &[TypedLocation], scores: &[(usize, f64)]) -> Option<(usize, f64)> {
    let max = scores
        .iter()
        .map(|s| s.1)
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if scores.iter().all(|s| s.1.is_nan()) {
        return None;
    }
    let threshold = max - TIE_TOLERANCE * max.abs().max(1.0);
    scores
        .iter()
        .filter(|s| s.1 >= threshold)
        .min_by(|a, b| candidates[a.0].lex_cmp(&candidates[b.0]))
        .copied()
}

fn check_budget(n: usize, available: usize) -> Result<()> {
    if n > available {
        return Err(Error::config(format!("budget {n} exceeds the {available} available candidates")));
    }
    Ok(())
}

fn run_greedy<'a, F, S>(model: &'a PitcModel, n: usize, algorithm: Algorithm, evaluator: F, score: S) -> Result<SelectionState>
where
    F: Fn(&[usize]) -> Result<GainEvaluator<'a>>,
    S: Fn(&GainEvaluator<'a>, usize) -> f64 + Sync,
{
    let nv = model.candidates().len();
    check_budget(n, nv)?;
    let mut state = SelectionState::new(algorithm, n);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..n {
        let start = Instant::now();
        let ev = evaluator(&idx)?;
        let scores: Vec<(usize, f64)> = (0..nv)
            .into_par_iter()
            .filter(|&c| !ev.is_selected(c))
            .map(|c| (c, score(&ev, c)))
            .collect();
        let (c, gain) = pick_best(model.candidates(), &scores)
            .ok_or_else(|| Error::domain("no candidate has a finite score"))?;
        idx.push(c);
        state.push(model.candidates()[c].clone(), gain, start.elapsed());
    }
    Ok(state)
}

/// Greedy maximization of `F`: each step takes the candidate with the largest gain.
pub fn select_greedy(model: &PitcModel, cache: &CriterionCache, n: usize) -> Result<SelectionState> {
    run_greedy(
        model,
        n,
        Algorithm::MGreedy,
        |idx| GainEvaluator::new(model, cache, idx),
        |ev, c| ev.gain(c),
    )
}

/// Each step takes the tuple of any type with the largest posterior entropy.
pub fn select_mvar(model: &PitcModel, n: usize) -> Result<SelectionState> {
    run_greedy(
        model,
        n,
        Algorithm::MVar,
        |idx| GainEvaluator::entropy_only(model, idx),
        |ev, c| ev.entropy(c),
    )
}

/// Independent single-output GPs, one per target type, used by the
/// target-only baselines.
#[derive(Clone, Debug)]
pub struct TargetOnlyModel {
    /// `(type index in the multi-output model, single-output parameters)`
    parts: Vec<(usize, Hyperparams)>,
}

impl TargetOnlyModel {
    /// Each target type's marginal kernel taken from the multi-output parameters.
    pub fn shared(h: &Hyperparams) -> Self {
        TargetOnlyModel {
            parts: h.target_types.iter().map(|&t| (t, h.restrict_to_type(t))).collect(),
        }
    }

    /// Separately fitted single-output parameters.
    pub fn from_parts(parts: Vec<(usize, Hyperparams)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::config("need at least one target type"));
        }
        for (t, h) in &parts {
            h.validate()?;
            if h.num_types != 1 {
                return Err(Error::config(format!("single-output parameters for type {t} have {} types", h.num_types)));
            }
        }
        Ok(TargetOnlyModel { parts })
    }

    pub fn parts(&self) -> &[(usize, Hyperparams)] {
        &self.parts
    }

    pub fn hyperparams_for(&self, type_index: usize) -> Option<&Hyperparams> {
        self.parts.iter().find(|(t, _)| *t == type_index).map(|(_, h)| h)
    }

    /// Prior covariance over `tuples`; tuples of different types are independent.
    pub fn cov_matrix(&self, tuples: &[TypedLocation]) -> Result<DMatrix<f64>> {
        let kernels: Vec<(usize, Kernel)> = self.parts.iter().map(|(t, h)| (*t, Kernel::new(h))).collect();
        let mut slot = Vec::with_capacity(tuples.len());
        for p in tuples {
            let k = kernels
                .iter()
                .position(|(t, _)| *t == p.type_index)
                .ok_or_else(|| Error::domain(format!("{p} is not covered by the target-only model")))?;
            if p.location.dim() != self.parts[k].1.dim() {
                return Err(Error::Dimension {
                    expected: self.parts[k].1.dim(),
                    got: p.location.dim(),
                });
            }
            slot.push((k, TypedLocation::new(p.location.clone(), 0)));
        }
        let n = tuples.len();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                if slot[a].0 == slot[b].0 {
                    let v = kernels[slot[a].0].1.output_cov(&slot[a].1, &slot[b].1);
                    out[(a, b)] = v;
                    out[(b, a)] = v;
                }
            }
        }
        Ok(out)
    }
}

/// Posterior variances of every column given the rows in `x` (positions into `k`).
fn variances_given(k: &DMatrix<f64>, x: &[usize]) -> Result<Vec<f64>> {
    let n = k.nrows();
    let diag: Vec<f64> = (0..n).map(|c| k[(c, c)]).collect();
    if x.is_empty() {
        return Ok(diag);
    }
    let kxx = DMatrix::from_fn(x.len(), x.len(), |r, c| k[(x[r], x[c])]);
    let kxa = DMatrix::from_fn(x.len(), n, |r, c| k[(x[r], c)]);
    let w = SpdFactor::new(kxx, "target-only covariance")?.whiten(&kxa);
    Ok((0..n).map(|c| diag[c] - w.column(c).norm_squared()).collect())
}

fn run_target_only(
    model: &PitcModel,
    single: &TargetOnlyModel,
    n: usize,
    algorithm: Algorithm,
) -> Result<SelectionState> {
    let vt_idx = model.target_candidates();
    let vt: Vec<TypedLocation> = vt_idx.iter().map(|&k| model.candidates()[k].clone()).collect();
    let k = single.cov_matrix(&vt)?;
    let n = n.min(vt.len());
    let mut state = SelectionState::new(algorithm, n);
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut is_chosen = vec![false; vt.len()];
    for _ in 0..n {
        let start = Instant::now();
        let var_x = variances_given(&k, &chosen)?;
        let rest: Vec<usize> = (0..vt.len()).filter(|&c| !is_chosen[c]).collect();
        let scores: Vec<(usize, f64)> = match algorithm {
            Algorithm::SVar => rest.iter().map(|&c| (c, half_log_2pie() + 0.5 * var_x[c].ln())).collect(),
            Algorithm::SMi => {
                // Var(c | R \ c) = 1 / (K_RR⁻¹)_cc
                let mut krr = DMatrix::from_fn(rest.len(), rest.len(), |r, c| k[(rest[r], rest[c])]);
                symmetrize(&mut krr);
                let prec = SpdFactor::new(krr, "target-only covariance")?.inverse();
                rest.iter()
                    .enumerate()
                    .map(|(r, &c)| (c, 0.5 * (var_x[c] * prec[(r, r)]).ln()))
                    .collect()
            }
            _ => unreachable!("not a target-only algorithm"),
        };
        let (c, gain) = pick_best(&vt, &scores).ok_or_else(|| Error::domain("no candidate has a finite score"))?;
        chosen.push(c);
        is_chosen[c] = true;
        state.push(vt[c].clone(), gain, start.elapsed());
    }
    Ok(state)
}

/// Maximum-entropy sampling over the target candidates only; stops early
/// once every target candidate is selected.
pub fn select_svar(model: &PitcModel, single: &TargetOnlyModel, n: usize) -> Result<SelectionState> {
    run_target_only(model, single, n, Algorithm::SVar)
}

/// Mutual-information sampling over the target candidates only.
pub fn select_smi(model: &PitcModel, single: &TargetOnlyModel, n: usize) -> Result<SelectionState> {
    run_target_only(model, single, n, Algorithm::SMi)
}

/// Parameters of the spacing scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingParams {
    /// Smallest discretization width.
    pub omega: f64,
    /// Spacing multiplier; kept tuples are at least `p * omega` apart.
    pub p: f64,
    pub epsilon1: f64,
    /// `exp(-omega² / (2 ell))`
    pub xi: f64,
    /// Largest first diagonal entry of `P0⁻¹ + P_i⁻¹ + P_j⁻¹` over type pairs.
    pub ell: f64,
    pub sigma2_s_star: f64,
    pub sigma2_n_star: f64,
}

impl SpacingParams {
    /// Derives `ell`, `xi` and the variance extremes from `h`; `p` starts at 0.
    pub fn from_hyperparams(h: &Hyperparams, omega: f64, epsilon1: f64) -> Result<Self> {
        h.validate()?;
        let mut ell: f64 = 0.0;
        for i in 0..h.num_types {
            for j in 0..h.num_types {
                ell = ell.max(h.output_diag(i, j)[0]);
            }
        }
        let sp = SpacingParams {
            omega,
            p: 0.0,
            epsilon1,
            xi: (-omega * omega / (2.0 * ell)).exp(),
            ell,
            sigma2_s_star: h.max_signal_var(),
            sigma2_n_star: h.min_noise_var(),
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::domain(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.p >= 0.0) {
            return Err(Error::domain(format!("p must be >= 0, got {}", self.p)));
        }
        if !(self.epsilon1 >= 0.0) {
            return Err(Error::domain(format!("epsilon1 must be >= 0, got {}", self.epsilon1)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::domain(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        if !(self.sigma2_s_star > 0.0 && self.sigma2_n_star > 0.0) {
            return Err(Error::domain("variance extremes must be > 0"));
        }
        Ok(())
    }

    /// Copy with `p` set to [`min_spacing_p`] for budget `n`.
    pub fn with_min_spacing(&self, n: usize) -> Result<Self> {
        Ok(SpacingParams {
            p: min_spacing_p(self, n)?,
            ..self.clone()
        })
    }
}

/// Smallest spacing multiplier `p` with
///
/// ```text
/// p² > log{ min(σ²_n*/N, ½(√(ε₁² + 4ε₁σ²_n*/N) − ε₁)) / (2σ²_s*) } / log ξ
/// ```
///
/// inflated by a relative `1e-9`. Returns 0 when the right side is not
/// positive, since then every `p > 0` qualifies.
pub fn min_spacing_p(sp: &SpacingParams, n: usize) -> Result<f64> {
    if !(sp.epsilon1 > 0.0) {
        return Err(Error::domain(format!("epsilon1 must be > 0, got {}", sp.epsilon1)));
    }
    if !(sp.xi > 0.0 && sp.xi < 1.0) {
        return Err(Error::domain(format!("xi must lie in (0, 1), got {}", sp.xi)));
    }
    if n == 0 {
        return Err(Error::domain("budget must be >= 1"));
    }
    let nf = n as f64;
    let (e1, s2n) = (sp.epsilon1, sp.sigma2_n_star);
    let second = 0.5 * ((e1 * e1 + 4.0 * e1 * s2n / nf).sqrt() - e1);
    let arg = (s2n / nf).min(second) / (2.0 * sp.sigma2_s_star);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::domain(format!(
            "spacing bound needs a positive log argument, got {arg} (epsilon1 {e1}, noise {s2n}, signal {}, N {n})",
            sp.sigma2_s_star
        )));
    }
    let rhs = arg.ln() / sp.xi.ln();
    if rhs <= 0.0 {
        return Ok(0.0);
    }
    Ok(rhs.sqrt() * (1.0 + 1e-9))
}

/// Greedy packing in input order: keeps a tuple iff its location is new and
/// at least `p * omega` from every kept location.
pub fn construct_spaced_candidates(v: &[TypedLocation], sp: &SpacingParams) -> Vec<TypedLocation> {
    let min_dist = sp.p * sp.omega;
    let mut kept: Vec<TypedLocation> = Vec::new();
    for p in v {
        let ok = kept
            .iter()
            .all(|q| q.location != p.location && q.location.distance(&p.location) >= min_dist);
        if ok {
            kept.push(p.clone());
        }
    }
    if kept.len() < v.len() / 10 {
        log::info!("spacing {min_dist} keeps {} of {} candidates", kept.len(), v.len());
    }
    kept
}

/// Upper bound `½ log(1 + 4 ρ_i Σ_{x'} ρ_t N(x − x' | 0, P0⁻¹+P_i⁻¹+P_t⁻¹)²)` on an
/// auxiliary candidate's gain, with `ρ_t` taken per remaining target tuple.
pub fn prop1_bound(model: &PitcModel, candidate: &TypedLocation, remaining_targets: &[TypedLocation]) -> Result<f64> {
    let h = model.hyperparams();
    let i = candidate.type_index;
    if i >= h.num_types || h.is_target(i) {
        return Err(Error::domain(format!("{candidate} is not of an auxiliary type")));
    }
    let mut r = 0.0;
    for q in remaining_targets {
        if !h.is_target(q.type_index) {
            return Err(Error::domain(format!("{q} is not of a target type")));
        }
        let delta: Vec<f64> = candidate
            .location
            .coords()
            .iter()
            .zip(q.location.coords())
            .map(|(a, b)| a - b)
            .collect();
        let g = gaussian_density(&delta, &h.output_diag(i, q.type_index))?;
        r += h.signal_to_noise(q.type_index) * g * g;
    }
    Ok(0.5 * (1.0 + 4.0 * h.signal_to_noise(i) * r).ln())
}
