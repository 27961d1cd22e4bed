//! Brute-force oracles and checks of the greedy approximation guarantee.

pub mod instances;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::covariance::TypedLocation;
use crate::criterion::{criterion_f_idx, indices_of, CriterionCache, GainEvaluator};
use crate::error::{Error, Result};
use crate::pitc::PitcModel;
use crate::selector::{select_greedy, TIE_TOLERANCE};

use instances::{random_instance, InstanceSpec};

/// Most subsets [`brute_force_optimum`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Largest selection whose subsets [`estimate_epsilon1`] enumerates.
pub const EXHAUSTIVE_SUBSET_LIMIT: usize = 12;
/// Subset count of the sampled ε₁ estimate.
pub const EPSILON1_SAMPLES: usize = 1000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Best subset found by exhaustive search.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    /// Sorted by `(type_index, coordinates)`.
    pub selected: Vec<TypedLocation>,
    pub value: f64,
    pub evaluated: u128,
}

fn sorted_tuples(model: &PitcModel, idx: &[usize]) -> Vec<TypedLocation> {
    let mut t: Vec<TypedLocation> = idx.iter().map(|&k| model.candidates()[k].clone()).collect();
    t.sort_by(|a, b| a.lex_cmp(b));
    t
}

fn tuple_list_cmp(a: &[TypedLocation], b: &[TypedLocation]) -> std::cmp::Ordering {
    for (p, q) in a.iter().zip(b) {
        let o = p.lex_cmp(q);
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Maximizes `score` over all `n`-subsets of the candidates. Scores within
/// the selector's tie tolerance of the best go to the smallest sorted tuple list.
pub fn exhaustive_best<S>(model: &PitcModel, n: usize, score: S) -> Result<Optimum>
where
    S: Fn(&[usize]) -> Result<f64> + Sync,
{
    let nv = model.candidates().len();
    if n > nv {
        return Err(Error::config(format!("budget {n} exceeds the {nv} available candidates")));
    }
    let count = binomial(nv, n);
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let all = subsets(nv, n);
    let scored: Vec<(usize, f64)> = all
        .par_iter()
        .enumerate()
        .map(|(k, s)| score(s).map(|v| (k, v)))
        .collect::<Result<_>>()?;
    let best = scored
        .iter()
        .map(|s| s.1)
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::domain("no subset has a finite score"));
    }
    let threshold = best - TIE_TOLERANCE * best.abs().max(1.0);
    let (k, value) = scored
        .iter()
        .filter(|s| s.1 >= threshold)
        .map(|&(k, v)| (k, v, sorted_tuples(model, &all[k])))
        .min_by(|a, b| tuple_list_cmp(&a.2, &b.2))
        .map(|(k, v, _)| (k, v))
        .expect("best score is attained");
    Ok(Optimum {
        selected: sorted_tuples(model, &all[k]),
        value,
        evaluated: count,
    })
}

/// `argmax_{|X| = n} F(X)` by enumeration.
pub fn brute_force_optimum(model: &PitcModel, cache: &CriterionCache, n: usize) -> Result<Optimum> {
    exhaustive_best(model, n, |idx| criterion_f_idx(model, cache, idx))
}

/// Largest variance increase of an unselected auxiliary candidate when part of
/// the selection is withheld.
#[derive(Clone, Debug, PartialEq)]
pub struct Epsilon1Estimate {
    pub value: f64,
    /// Subsets examined, including the full selection.
    pub subsets: usize,
    /// Only some subsets were examined, so `value` is a lower bound.
    pub sampled: bool,
}

/// Variances of the unselected auxiliary candidates given `kept ∪ (V_t \ X_t)`.
fn aux_variances(model: &PitcModel, kept: &[usize], open_targets: &[usize], aux: &[TypedLocation]) -> Result<Vec<f64>> {
    let cond: Vec<TypedLocation> = kept
        .iter()
        .chain(open_targets)
        .map(|&k| model.candidates()[k].clone())
        .collect();
    model.posterior_variances(&cond, aux)
}

fn epsilon1_over<I>(model: &PitcModel, x: &[usize], subsets: I, sampled: bool) -> Result<Epsilon1Estimate>
where
    I: IntoParallelIterator<Item = Vec<usize>>,
{
    let h = model.hyperparams();
    let aux: Vec<TypedLocation> = model
        .candidates()
        .iter()
        .enumerate()
        .filter(|(k, p)| !h.is_target(p.type_index) && !x.contains(k))
        .map(|(_, p)| p.clone())
        .collect();
    let selected_targets: Vec<usize> = x.iter().copied().filter(|&k| h.is_target(model.candidates()[k].type_index)).collect();
    let open_targets: Vec<usize> = model
        .target_candidates()
        .into_iter()
        .filter(|k| !selected_targets.contains(k))
        .collect();
    let subsets: Vec<Vec<usize>> = subsets.into_par_iter().collect();
    if aux.is_empty() {
        return Ok(Epsilon1Estimate {
            value: 0.0,
            subsets: subsets.len(),
            sampled,
        });
    }
    let base = aux_variances(model, x, &open_targets, &aux)?;
    let value = subsets
        .par_iter()
        .map(|s| {
            let kept: Vec<usize> = s.iter().map(|&k| x[k]).collect();
            let vars = aux_variances(model, &kept, &open_targets, &aux)?;
            Ok(vars.iter().zip(&base).map(|(v, b)| v - b).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Epsilon1Estimate {
        value,
        subsets: subsets.len(),
        sampled,
    })
}

/// `max` over `X̃ ⊆ X` and unselected auxiliary candidates `a` of
/// `Var(a | X̃ ∪ V_t \ X_t) - Var(a | X ∪ V_t \ X_t)`, floored at 0. Enumerates
/// every subset; refuses selections above [`EXHAUSTIVE_SUBSET_LIMIT`].
pub fn estimate_epsilon1(model: &PitcModel, x: &[TypedLocation]) -> Result<Epsilon1Estimate> {
    let idx = indices_of(model, x)?;
    if idx.len() > EXHAUSTIVE_SUBSET_LIMIT {
        return Err(Error::GuardExceeded {
            count: 1u128 << idx.len().min(127),
            limit: 1u128 << EXHAUSTIVE_SUBSET_LIMIT,
        });
    }
    let n = idx.len();
    let all = (0u64..1 << n).into_par_iter().map(move |mask| (0..n).filter(|&b| mask >> b & 1 == 1).collect::<Vec<usize>>());
    epsilon1_over(model, &idx, all, false)
}

/// As [`estimate_epsilon1`] over `samples` uniformly random subsets plus the
/// empty one. The result is a lower bound.
pub fn estimate_epsilon1_sampled(model: &PitcModel, x: &[TypedLocation], samples: usize, seed: u64) -> Result<Epsilon1Estimate> {
    let idx = indices_of(model, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..samples {
        chosen.push((0..idx.len()).filter(|_| rng.random::<bool>()).collect());
    }
    epsilon1_over(model, &idx, chosen, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuaranteeStatus {
    Pass,
    Fail,
    /// The bound failed but `ε₁` was only sampled.
    Inconclusive,
}

impl GuaranteeStatus {
    pub fn name(self) -> &'static str {
        match self {
            GuaranteeStatus::Pass => "pass",
            GuaranteeStatus::Fail => "fail",
            GuaranteeStatus::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for GuaranteeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GuaranteeStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pass" => Ok(GuaranteeStatus::Pass),
            "fail" => Ok(GuaranteeStatus::Fail),
            "inconclusive" => Ok(GuaranteeStatus::Inconclusive),
            _ => Err(Error::domain(format!("unknown status '{s}'"))),
        }
    }
}

/// Outcome of comparing a greedy selection with the exhaustive optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct GuaranteeReport {
    pub instance: String,
    pub n: usize,
    pub f_greedy: f64,
    pub f_opt: f64,
    pub epsilon1_hat: f64,
    pub epsilon1_sampled: bool,
    pub sigma2_n_star: f64,
    /// `½ log(1 + ε̂₁ / σ²_n*)`
    pub epsilon: f64,
    /// `(1 - 1/e)(F_opt - N ε)`
    pub bound: f64,
    pub satisfied: bool,
    pub status: GuaranteeStatus,
}

const REPORT_KEYS: [&str; 11] = [
    "instance",
    "n",
    "f_greedy",
    "f_opt",
    "epsilon1_hat",
    "epsilon1_sampled",
    "sigma2_n_star",
    "epsilon",
    "bound",
    "satisfied",
    "status",
];

impl GuaranteeReport {
    fn assemble(instance: String, n: usize, f_greedy: f64, f_opt: f64, eps1: &Epsilon1Estimate, sigma2_n_star: f64) -> Self {
        let epsilon = 0.5 * (1.0 + eps1.value / sigma2_n_star).ln();
        let bound = (1.0 - (-1.0f64).exp()) * (f_opt - n as f64 * epsilon);
        let satisfied = f_greedy >= bound - 1e-9;
        let beats_optimum = f_greedy > f_opt + 1e-9;
        let status = if beats_optimum {
            GuaranteeStatus::Fail
        } else if satisfied {
            GuaranteeStatus::Pass
        } else if eps1.sampled {
            GuaranteeStatus::Inconclusive
        } else {
            GuaranteeStatus::Fail
        };
        GuaranteeReport {
            instance,
            n,
            f_greedy,
            f_opt,
            epsilon1_hat: eps1.value,
            epsilon1_sampled: eps1.sampled,
            sigma2_n_star,
            epsilon,
            bound,
            satisfied,
            status,
        }
    }

    /// One `key=value` record, space separated. The instance descriptor must not contain spaces.
    pub fn to_record(&self) -> String {
        format!(
            "instance={} n={} f_greedy={} f_opt={} epsilon1_hat={} epsilon1_sampled={} sigma2_n_star={} epsilon={} bound={} satisfied={} status={}",
            self.instance,
            self.n,
            self.f_greedy,
            self.f_opt,
            self.epsilon1_hat,
            self.epsilon1_sampled,
            self.sigma2_n_star,
            self.epsilon,
            self.bound,
            self.satisfied,
            self.status
        )
    }

    pub fn parse_record(line: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::domain(format!("field '{part}' is not key=value")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::domain(format!("missing key '{k}'")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| Error::domain(format!("{k}: {e}"))) };
        let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|e| Error::domain(format!("{k}: {e}"))) };
        if let Some(k) = fields.keys().find(|k| !REPORT_KEYS.contains(k)) {
            return Err(Error::domain(format!("unknown key '{k}'")));
        }
        Ok(GuaranteeReport {
            instance: get("instance")?.to_string(),
            n: get("n")?.parse().map_err(|e| Error::domain(format!("n: {e}")))?,
            f_greedy: num("f_greedy")?,
            f_opt: num("f_opt")?,
            epsilon1_hat: num("epsilon1_hat")?,
            epsilon1_sampled: flag("epsilon1_sampled")?,
            sigma2_n_star: num("sigma2_n_star")?,
            epsilon: num("epsilon")?,
            bound: num("bound")?,
            satisfied: flag("satisfied")?,
            status: get("status")?.parse()?,
        })
    }
}

fn describe(model: &PitcModel) -> String {
    let h = model.hyperparams();
    format!(
        "M{}-V{}-Vt{}-U{}",
        h.num_types,
        model.candidates().len(),
        model.target_candidates().len(),
        model.num_inducing()
    )
}

/// Runs greedy and exhaustive selection for budget `n` and checks
/// `F_greedy >= (1 - 1/e)(F_opt - N ε)` with `ε` from `ε̂₁` on the greedy selection.
pub fn check_guarantee(model: &PitcModel, cache: &CriterionCache, n: usize) -> Result<GuaranteeReport> {
    let greedy = select_greedy(model, cache, n)?;
    let f_greedy = criterion_f_idx(model, cache, &indices_of(model, &greedy.selected)?)?;
    let opt = brute_force_optimum(model, cache, n)?;
    let eps1 = if n <= EXHAUSTIVE_SUBSET_LIMIT {
        estimate_epsilon1(model, &greedy.selected)?
    } else {
        estimate_epsilon1_sampled(model, &greedy.selected, EPSILON1_SAMPLES, 0)?
    };
    Ok(GuaranteeReport::assemble(
        describe(model),
        n,
        f_greedy,
        opt.value,
        &eps1,
        model.hyperparams().min_noise_var(),
    ))
}

/// Result of sampling nested pairs `A ⊆ A′` and an outside candidate `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmodularityAudit {
    pub pairs: usize,
    /// Largest `gain(a | A′) - gain(a | A)`, 0 if never positive.
    pub max_excess: f64,
    /// Largest per-pair `½ log(1 + ε̂₁ / σ²_n*)`.
    pub epsilon_required: f64,
    /// Pairs whose excess exceeds their own bound by more than `1e-9`.
    pub violations: usize,
}

/// Samples nested pairs and compares each gain excess with the bound
/// `½ log(1 + ε̂₁ / σ²_n*)`, where `ε̂₁ = Var(a | A ∪ V_t \ A′_t) - Var(a | A′ ∪ V_t \ A′_t)`.
/// Target candidates have a non-positive excess and a zero bound.
pub fn audit_eps_submodularity(model: &PitcModel, cache: &CriterionCache, samples: usize, seed: u64) -> Result<SubmodularityAudit> {
    let nv = model.candidates().len();
    let h = model.hyperparams();
    let sigma2_n_star = h.min_noise_var();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    let all: Vec<usize> = (0..nv).collect();
    if nv == 0 {
        return Ok(SubmodularityAudit {
            pairs: 0,
            max_excess: 0.0,
            epsilon_required: 0.0,
            violations: 0,
        });
    }
    for _ in 0..samples {
        let size = rng.random_range(0..nv);
        let big: Vec<usize> = all.choose_multiple(&mut rng, size).copied().collect();
        let small: Vec<usize> = big.iter().copied().filter(|_| rng.random::<bool>()).collect();
        let outside: Vec<usize> = all.iter().copied().filter(|k| !big.contains(k)).collect();
        let a = *outside.choose(&mut rng).expect("big leaves at least one candidate");
        draws.push((small, big, a));
    }
    let results: Vec<(f64, f64)> = draws
        .par_iter()
        .map(|(small, big, a)| {
            let g_big = GainEvaluator::new(model, cache, big)?.gain(*a);
            let g_small = GainEvaluator::new(model, cache, small)?.gain(*a);
            let tuple = &model.candidates()[*a];
            let eps = if h.is_target(tuple.type_index) {
                0.0
            } else {
                let open: Vec<usize> = model
                    .target_candidates()
                    .into_iter()
                    .filter(|k| !big.contains(k))
                    .collect();
                let z = [tuple.clone()];
                let v_small = aux_variances(model, small, &open, &z)?[0];
                let v_big = aux_variances(model, big, &open, &z)?[0];
                0.5 * (1.0 + (v_small - v_big).max(0.0) / sigma2_n_star).ln()
            };
            Ok((g_big - g_small, eps))
        })
        .collect::<Result<_>>()?;
    Ok(SubmodularityAudit {
        pairs: results.len(),
        max_excess: results.iter().map(|r| r.0).fold(0.0, f64::max),
        epsilon_required: results.iter().map(|r| r.1).fold(0.0, f64::max),
        violations: results.iter().filter(|r| r.0 > r.1 + 1e-9).count(),
    })
}

/// Family of small seeded instances checked by [`run_sweep`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub instances: usize,
    pub seed: u64,
    pub max_types: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub max_budget: usize,
    pub max_inducing: usize,
    /// Far-separated independent candidates instead of random ones.
    pub modular: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            instances: 200,
            seed: 0,
            max_types: 3,
            min_candidates: 4,
            max_candidates: 12,
            max_budget: 3,
            max_inducing: 6,
            modular: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_types == 0 || self.max_budget == 0 || self.max_inducing == 0 {
            return Err(Error::config("sweep needs max_types, max_budget and max_inducing >= 1"));
        }
        if self.min_candidates < self.max_budget || self.min_candidates > self.max_candidates {
            return Err(Error::config(format!(
                "sweep candidate range {}..={} must start at or above max_budget {}",
                self.min_candidates, self.max_candidates, self.max_budget
            )));
        }
        Ok(())
    }

    /// Instance `k` of the family and its budget.
    pub fn instance(&self, k: usize) -> Result<(PitcModel, usize)> {
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_types = rng.random_range(1..=self.max_types);
        let num_candidates = rng.random_range(self.min_candidates..=self.max_candidates);
        let n = rng.random_range(1..=self.max_budget);
        let model = if self.modular {
            instances::modular_instance(num_types, num_candidates, seed)?
        } else {
            let spec = InstanceSpec {
                num_types,
                num_candidates,
                num_inducing: rng.random_range(1..=self.max_inducing),
                ..InstanceSpec::default()
            };
            random_instance(&spec, seed)?
        };
        Ok((model, n))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

impl SweepSummary {
    pub fn of(reports: &[GuaranteeReport]) -> Self {
        let mut s = SweepSummary::default();
        for r in reports {
            match r.status {
                GuaranteeStatus::Pass => s.pass += 1,
                GuaranteeStatus::Fail => s.fail += 1,
                GuaranteeStatus::Inconclusive => s.inconclusive += 1,
            }
        }
        s
    }

    pub fn to_record(&self) -> String {
        format!("summary pass={} fail={} inconclusive={}", self.pass, self.fail, self.inconclusive)
    }
}

/// [`check_guarantee`] on every instance of the family, in instance order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<GuaranteeReport>> {
    spec.validate()?;
    (0..spec.instances)
        .into_par_iter()
        .map(|k| {
            let (model, n) = spec.instance(k)?;
            let cache = CriterionCache::new(&model)?;
            let mut report = check_guarantee(&model, &cache, n)?;
            report.instance = format!("{k}:{}", report.instance);
            Ok(report)
        })
        .collect()
}

/// One record per report followed by the summary line.
pub fn write_reports<W: Write>(mut out: W, reports: &[GuaranteeReport]) -> Result<()> {
    for r in reports {
        writeln!(out, "{}", r.to_record())?;
    }
    writeln!(out, "{}", SweepSummary::of(reports).to_record())?;
    Ok(())
}

/// Reads records written by [`write_reports`]; the summary line is skipped.
pub fn read_reports<R: BufRead>(input: R) -> Result<Vec<GuaranteeReport>> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with("summary ") {
            continue;
        }
        out.push(GuaranteeReport::parse_record(t).map_err(|e| Error::Parse {
            path: "verify report".into(),
            line: k + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
