//! Experiment configuration and the end-to-end runner: split, fit, select,
//! predict, score.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{Hyperparams, Location, TypedLocation};
use crate::criterion::CriterionCache;
use crate::data::{self, normalize, split_test, Dataset, DatasetSchema, Normalization, Split, SplitSpec, Transform};
use crate::error::{Error, Result};
use crate::exact::{exact_posterior, sample_prior, ExactPrior};
use crate::hyperlearn::{fit_hyperparams, FitOptions, LikelihoodMode};
use crate::pitc::{distinct_locations, select_inducing, InducingSet, PitcModel};
use crate::selector::{select_greedy, select_mvar, select_smi, select_svar, Algorithm, SelectionState, TargetOnlyModel};
use crate::verify::{run_sweep, write_reports, SweepSpec, SweepSummary};

/// Largest number of tuples [`generate_synthetic`] samples jointly.
pub const SYNTHETIC_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// Random locations in a box with a realization of a known prior on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub truth: Hyperparams,
    #[serde(default)]
    pub type_names: Vec<String>,
    /// Locations per type.
    pub counts: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Every type is measured at the same `counts[0]` locations.
    #[serde(default)]
    pub shared_locations: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        let m = self.truth.num_types;
        let d = self.truth.dim();
        if self.counts.len() != m {
            return Err(Error::config(format!("{} counts for {m} types", self.counts.len())));
        }
        if !self.type_names.is_empty() && self.type_names.len() != m {
            return Err(Error::config(format!("{} type names for {m} types", self.type_names.len())));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::config("synthetic box needs finite lower < upper in every dimension"));
        }
        if self.shared_locations && self.counts.iter().any(|&c| c != self.counts[0]) {
            return Err(Error::config("shared locations need equal counts"));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::config("every type needs at least one location"));
        }
        let total: usize = self.counts.iter().sum();
        if total > SYNTHETIC_LIMIT {
            return Err(Error::GuardExceeded {
                count: total as u128,
                limit: SYNTHETIC_LIMIT as u128,
            });
        }
        Ok(())
    }

    pub fn type_names(&self) -> Vec<String> {
        if self.type_names.is_empty() {
            (0..self.truth.num_types).map(|t| format!("type{t}")).collect()
        } else {
            self.type_names.clone()
        }
    }
}

/// Samples locations and one joint draw of noisy measurements.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.truth.dim();
    let draw_location = |rng: &mut ChaCha8Rng| -> Result<Location> {
        Location::new((0..d).map(|k| rng.random_range(spec.lower[k]..spec.upper[k])).collect())
    };
    let mut locations: Vec<Location> = Vec::new();
    let mut tuples: Vec<(usize, TypedLocation)> = Vec::new();
    if spec.shared_locations {
        for _ in 0..spec.counts[0] {
            let l = draw_location(&mut rng)?;
            if locations.contains(&l) {
                continue;
            }
            for t in 0..spec.truth.num_types {
                tuples.push((locations.len(), TypedLocation::new(l.clone(), t)));
            }
            locations.push(l);
        }
    } else {
        for (t, &count) in spec.counts.iter().enumerate() {
            for _ in 0..count {
                let l = draw_location(&mut rng)?;
                if locations.contains(&l) {
                    continue;
                }
                tuples.push((locations.len(), TypedLocation::new(l.clone(), t)));
                locations.push(l);
            }
        }
    }
    let all: Vec<TypedLocation> = tuples.iter().map(|(_, p)| p.clone()).collect();
    let y = sample_prior(&ExactPrior::new(spec.truth.clone())?, &all, &mut rng)?;
    let measurements = tuples
        .iter()
        .zip(y.iter())
        .map(|((l, p), v)| ((*l, p.type_index), *v))
        .collect();
    let ds = Dataset {
        coordinate_names: (0..d).map(|k| format!("x{k}")).collect(),
        type_names: spec.type_names(),
        transforms: vec![Transform::Identity; spec.truth.num_types],
        locations,
        measurements,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub target_types: Vec<usize>,
    pub test_count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperSource {
    /// Read from `hyperparams.file`, in normalized units.
    #[default]
    File,
    /// Fitted on each repeat's training split, starting from `hyperparams.file`.
    Fit,
    /// The synthetic generator's parameters, rescaled to normalized units.
    Truth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineParams {
    /// Target-only baselines use each target type's marginal kernel.
    #[default]
    Shared,
    /// Target-only baselines fit their own single-output parameters.
    Fit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamsConfig {
    pub source: HyperSource,
    pub file: Option<PathBuf>,
    pub fit: FitOptions,
    pub baselines: BaselineParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InducingConfig {
    pub count: usize,
}

impl Default for InducingConfig {
    fn default() -> Self {
        InducingConfig { count: 50 }
    }
}

fn one() -> usize {
    1
}

/// Everything a run, fit, sweep or synthesis needs. Relative paths are taken
/// relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub hyperparams: HyperparamsConfig,
    #[serde(default)]
    pub inducing: InducingConfig,
    #[serde(default)]
    pub verify: SweepSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.data.as_mut() {
            resolve(&mut d.csv);
            resolve(&mut d.schema);
        }
        if let Some(f) = cfg.hyperparams.file.as_mut() {
            resolve(f);
        }
        if let Some(o) = cfg.output.as_mut() {
            resolve(o);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate_source(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::config("give either [data] or [synthetic], not both")),
            (None, None) => Err(Error::config("missing [data] or [synthetic] section")),
            (None, Some(s)) => s.validate(),
            (Some(_), None) => Ok(()),
        }
    }

    /// Checks the parts [`run_experiment`] uses.
    pub fn validate_run(&self) -> Result<()> {
        self.validate_source()?;
        if self.repeats == 0 {
            return Err(Error::config("repeats must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms must be nonempty"));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..k].contains(a) {
                return Err(Error::config(format!("algorithm {a} listed twice")));
            }
        }
        if self.checkpoints.is_empty() || self.checkpoints[0] == 0 {
            return Err(Error::config("checkpoints must be nonempty and start at >= 1"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("checkpoints must be strictly increasing: {:?}", self.checkpoints)));
        }
        if self.split.is_none() {
            return Err(Error::config("missing [split] section"));
        }
        if self.inducing.count == 0 {
            return Err(Error::config("inducing.count must be >= 1"));
        }
        match self.hyperparams.source {
            HyperSource::File | HyperSource::Fit if self.hyperparams.file.is_none() => Err(Error::config(
                "hyperparams.file is required unless hyperparams.source = \"truth\"",
            )),
            HyperSource::Truth if self.synthetic.is_none() => {
                Err(Error::config("hyperparams.source = \"truth\" needs a [synthetic] section"))
            }
            _ => Ok(()),
        }
    }
}

fn load_source(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match (&cfg.data, &cfg.synthetic) {
        (Some(d), _) => data::load_dataset(&d.csv, &DatasetSchema::load(&d.schema)?),
        (None, Some(s)) => generate_synthetic(s, seed),
        (None, None) => Err(Error::config("missing [data] or [synthetic] section")),
    }
}

/// Parameters of a raw-unit model after normalization.
fn normalized_truth(h: &Hyperparams, stats: &Normalization) -> Hyperparams {
    let mut raw = h.clone();
    raw.prior_mean = (0..h.num_types).map(|i| h.prior_mean_of(i)).collect();
    raw.rescaled(&stats.mean, &stats.std)
}

fn with_targets(mut h: Hyperparams, split: &SplitConfig) -> Result<Hyperparams> {
    if h.target_types != split.target_types {
        log::info!("using split target types {:?} in place of {:?}", split.target_types, h.target_types);
        h.target_types = split.target_types.clone();
    }
    h.validate()?;
    Ok(h)
}

fn initial_hyperparams(cfg: &ExperimentConfig, stats: &Normalization) -> Result<Hyperparams> {
    match cfg.hyperparams.source {
        HyperSource::Truth => {
            let s = cfg.synthetic.as_ref().ok_or_else(|| Error::config("missing [synthetic] section"))?;
            Ok(normalized_truth(&s.truth, stats))
        }
        HyperSource::File | HyperSource::Fit => {
            let path = cfg.hyperparams.file.as_ref().ok_or_else(|| Error::config("missing hyperparams.file"))?;
            Hyperparams::load(path)
        }
    }
}

fn inducing_for(split: &Split, count: usize, seed: u64) -> Result<InducingSet> {
    let locs = distinct_locations(split.train.iter().flatten().map(|m| &m.tuple.location));
    select_inducing(&locs, count.min(locs.len()), seed)
}

/// One prepared repeat: normalized split, parameters and model.
pub struct Prepared {
    pub dataset: Dataset,
    pub stats: Normalization,
    pub split: Split,
    pub h: Hyperparams,
    pub model: PitcModel,
    pub single: TargetOnlyModel,
}

/// Loads or generates the data for repeat seed `seed`, normalizes, splits,
/// obtains parameters and builds the sparse model.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let raw = load_source(cfg, seed)?;
    let (dataset, stats) = normalize(&raw)?;
    let split_cfg = cfg.split.as_ref().ok_or_else(|| Error::config("missing [split] section"))?;
    let split = split_test(
        &dataset,
        &SplitSpec {
            target_types: split_cfg.target_types.clone(),
            test_count: split_cfg.test_count,
            seed,
        },
    )?;
    let inducing = inducing_for(&split, cfg.inducing.count, seed)?;
    let init = with_targets(initial_hyperparams(cfg, &stats)?, split_cfg)?;
    let fit_opts = FitOptions {
        seed,
        ..cfg.hyperparams.fit.clone()
    };
    let h = if cfg.hyperparams.source == HyperSource::Fit {
        let (x, y) = split.all_train();
        let u = (fit_opts.mode == LikelihoodMode::Pitc).then_some(&inducing);
        fit_hyperparams(&x, &y, &init, u, &fit_opts)?.h
    } else {
        init
    };
    let single = match cfg.hyperparams.baselines {
        BaselineParams::Shared => TargetOnlyModel::shared(&h),
        BaselineParams::Fit => {
            let mut parts = Vec::new();
            for &t in &h.target_types {
                let x: Vec<TypedLocation> = split.train[t]
                    .iter()
                    .map(|m| TypedLocation::new(m.tuple.location.clone(), 0))
                    .collect();
                let y = DVector::from_iterator(x.len(), split.train[t].iter().map(|m| m.value));
                let opts = FitOptions {
                    mode: LikelihoodMode::Exact,
                    ..fit_opts.clone()
                };
                parts.push((t, fit_hyperparams(&x, &y, &h.restrict_to_type(t), None, &opts)?.h));
            }
            TargetOnlyModel::from_parts(parts)?
        }
    };
    let model = PitcModel::build(h.clone(), inducing, split.candidates())?;
    Ok(Prepared {
        dataset,
        stats,
        split,
        h,
        model,
        single,
    })
}

/// Average over target types of the RMSE in original units.
fn score(prep: &Prepared, algorithm: Algorithm, selected: &[TypedLocation]) -> Result<f64> {
    let y_x = prep.split.values_at(selected)?;
    let mut per_type = Vec::new();
    for &t in &prep.h.target_types {
        let test: Vec<&data::Measurement> = prep.split.test.iter().filter(|m| m.tuple.type_index == t).collect();
        let z: Vec<TypedLocation> = test.iter().map(|m| m.tuple.clone()).collect();
        let mean = if algorithm.target_only() {
            let h1 = prep
                .single
                .hyperparams_for(t)
                .ok_or_else(|| Error::domain(format!("no single-output model for type {t}")))?;
            let own: Vec<usize> = (0..selected.len()).filter(|&k| selected[k].type_index == t).collect();
            let x1: Vec<TypedLocation> = own.iter().map(|&k| TypedLocation::new(selected[k].location.clone(), 0)).collect();
            let y1 = DVector::from_iterator(own.len(), own.iter().map(|&k| y_x[k]));
            let z1: Vec<TypedLocation> = z.iter().map(|p| TypedLocation::new(p.location.clone(), 0)).collect();
            exact_posterior(&x1, &y1, &z1, h1)?.mean
        } else {
            prep.model.pitc_posterior(selected, &y_x, &z)?.mean
        };
        let pred: Vec<f64> = mean.iter().map(|v| prep.stats.denormalize(t, *v)).collect();
        let truth: Vec<f64> = test.iter().map(|m| prep.stats.denormalize(t, m.value)).collect();
        per_type.push(data::rmse(&pred, &truth)?);
    }
    Ok(per_type.iter().sum::<f64>() / per_type.len() as f64)
}

fn select(prep: &Prepared, algorithm: Algorithm, n: usize) -> Result<(SelectionState, Duration)> {
    let start = Instant::now();
    let state = match algorithm {
        Algorithm::MGreedy => {
            let cache = CriterionCache::new(&prep.model)?;
            select_greedy(&prep.model, &cache, n)?
        }
        Algorithm::MVar => select_mvar(&prep.model, n)?,
        Algorithm::SVar => select_svar(&prep.model, &prep.single, n)?,
        Algorithm::SMi => select_smi(&prep.model, &prep.single, n)?,
    };
    Ok((state, start.elapsed()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub repeat: usize,
    pub seed: u64,
    pub n: usize,
    pub rmse: f64,
    /// Selected tuples of non-target types among the first `n`.
    pub auxiliary: usize,
    /// Selection time up to this checkpoint; not part of the deterministic table.
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub repeat: usize,
    pub algorithm: Option<Algorithm>,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    /// Selection states by `(algorithm, repeat)`.
    pub selections: BTreeMap<(Algorithm, usize), SelectionState>,
}

impl ResultTable {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Mean RMSE at checkpoint `n` over the repeats that reached it.
    pub fn mean_rmse(&self, algorithm: Algorithm, n: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.n == n)
            .map(|r| r.rmse)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Deterministic columns only.
    pub fn write_results<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "repeat", "seed", "n", "rmse", "auxiliary"])?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.name().to_string(),
                r.repeat.to_string(),
                r.seed.to_string(),
                r.n.to_string(),
                r.rmse.to_string(),
                r.auxiliary.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "repeat", "n", "wall_ms"])?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.name().to_string(),
                r.repeat.to_string(),
                r.n.to_string(),
                format!("{:.3}", r.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `results.csv`, `timings.csv`, `logs/<algorithm>-r<repeat>.csv`
    /// and, for partial tables, `failures.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("logs"))?;
        self.write_results(fs::File::create(dir.join("results.csv"))?)?;
        self.write_timings(fs::File::create(dir.join("timings.csv"))?)?;
        for ((a, r), s) in &self.selections {
            s.save_log(&dir.join("logs").join(format!("{}-r{r}.csv", a.name())))?;
        }
        let failures = dir.join("failures.txt");
        if self.is_partial() {
            let mut f = fs::File::create(failures)?;
            for x in &self.failures {
                let alg = x.algorithm.map_or("none", |a| a.name());
                writeln!(f, "repeat={} algorithm={alg} error={:?}", x.repeat, x.message)?;
            }
        } else if failures.exists() {
            fs::remove_file(failures)?;
        }
        Ok(())
    }
}

struct RepeatOutcome {
    rows: Vec<ResultRow>,
    failures: Vec<Failure>,
    selections: Vec<((Algorithm, usize), SelectionState)>,
}

fn run_repeat(cfg: &ExperimentConfig, repeat: usize) -> RepeatOutcome {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let mut out = RepeatOutcome {
        rows: Vec::new(),
        failures: Vec::new(),
        selections: Vec::new(),
    };
    let prep = match prepare(cfg, seed) {
        Ok(p) => p,
        Err(e) => {
            log::error!("repeat {repeat}: {e}");
            out.failures.push(Failure {
                repeat,
                algorithm: None,
                message: e.to_string(),
            });
            return out;
        }
    };
    let budget = *cfg.checkpoints.last().expect("validated checkpoints");
    for &algorithm in &cfg.algorithms {
        let mut attempt = || -> Result<Vec<ResultRow>> {
            let (state, _) = select(&prep, algorithm, budget)?;
            let mut rows = Vec::new();
            for &n in &cfg.checkpoints {
                let k = n.min(state.selected.len());
                let chosen = &state.selected[..k];
                rows.push(ResultRow {
                    algorithm,
                    repeat,
                    seed,
                    n,
                    rmse: score(&prep, algorithm, chosen)?,
                    auxiliary: chosen.iter().filter(|p| !prep.h.is_target(p.type_index)).count(),
                    wall_ms: state.iteration_times[..k].iter().sum::<Duration>().as_secs_f64() * 1e3,
                });
            }
            out.selections.push(((algorithm, repeat), state));
            Ok(rows)
        };
        match attempt() {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => {
                log::error!("repeat {repeat}, {algorithm}: {e}");
                out.failures.push(Failure {
                    repeat,
                    algorithm: Some(algorithm),
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// Runs every repeat (concurrently) and every algorithm; rows are ordered by
/// repeat, then algorithm as configured, then checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate_run()?;
    let outcomes: Vec<RepeatOutcome> = (0..cfg.repeats).into_par_iter().map(|r| run_repeat(cfg, r)).collect();
    let mut table = ResultTable::default();
    for o in outcomes {
        table.rows.extend(o.rows);
        table.failures.extend(o.failures);
        table.selections.extend(o.selections);
    }
    if table.rows.is_empty() && table.is_partial() {
        return Err(Error::domain(format!(
            "every repeat failed; first error: {}",
            table.failures[0].message
        )));
    }
    Ok(table)
}

/// Fits parameters on the training split of the first repeat (or on all
/// data without a split), in normalized units.
pub fn fit_from_config(cfg: &ExperimentConfig) -> Result<crate::hyperlearn::FitResult> {
    cfg.validate_source()?;
    let raw = load_source(cfg, cfg.seed)?;
    let (dataset, stats) = normalize(&raw)?;
    let (tuples, values, inducing_locs) = match &cfg.split {
        Some(s) => {
            let split = split_test(
                &dataset,
                &SplitSpec {
                    target_types: s.target_types.clone(),
                    test_count: s.test_count,
                    seed: cfg.seed,
                },
            )?;
            let (x, y) = split.all_train();
            let locs = distinct_locations(x.iter().map(|p| &p.location));
            (x, y, locs)
        }
        None => {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (&(l, t), v) in &dataset.measurements {
                x.push(TypedLocation::new(dataset.locations[l].clone(), t));
                y.push(*v);
            }
            (x, DVector::from_vec(y), dataset.locations.clone())
        }
    };
    let mut init = initial_hyperparams(cfg, &stats)?;
    if let Some(s) = &cfg.split {
        init = with_targets(init, s)?;
    }
    let opts = FitOptions {
        seed: cfg.seed,
        ..cfg.hyperparams.fit.clone()
    };
    let inducing = if opts.mode == LikelihoodMode::Pitc {
        Some(select_inducing(&inducing_locs, cfg.inducing.count.min(inducing_locs.len()), cfg.seed)?)
    } else {
        None
    };
    fit_hyperparams(&tuples, &values, &init, inducing.as_ref(), &opts)
}

/// Runs the configured guarantee sweep and writes one record per instance
/// plus a summary line to `path`.
pub fn verify_sweep(spec: &SweepSpec, path: &Path) -> Result<SweepSummary> {
    let reports = run_sweep(spec)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_reports(fs::File::create(path)?, &reports)?;
    Ok(SweepSummary::of(&reports))
}
