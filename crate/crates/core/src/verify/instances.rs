//! Seeded random model instances shared by tests, sweeps and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::{Hyperparams, Location, TypedLocation};
use crate::error::{Error, Result};
use crate::pitc::{distinct_locations, select_inducing, InducingSet, PitcModel};

/// Shape of a random instance. Ranges are half-open `(lo, hi)`.
#[derive(Clone, Debug)]
pub struct InstanceSpec {
    pub num_types: usize,
    pub dim: usize,
    pub num_candidates: usize,
    pub num_inducing: usize,
    /// Coordinates are drawn on a grid of this step inside `[0, extent)`.
    pub extent: f64,
    pub grid_step: f64,
    pub signal_var: (f64, f64),
    pub noise_var: (f64, f64),
    pub latent_precision_inv: (f64, f64),
    pub smoothing_precision_inv: (f64, f64),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            num_types: 2,
            dim: 2,
            num_candidates: 10,
            num_inducing: 4,
            extent: 3.0,
            grid_step: 0.25,
            signal_var: (0.5, 2.0),
            noise_var: (0.06, 0.5),
            latent_precision_inv: (0.05, 0.5),
            smoothing_precision_inv: (0.05, 0.5),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

pub fn random_hyperparams(spec: &InstanceSpec, rng: &mut ChaCha8Rng) -> Hyperparams {
    let (m, d) = (spec.num_types, spec.dim);
    Hyperparams {
        num_types: m,
        target_types: vec![0],
        signal_var: (0..m).map(|_| draw(rng, spec.signal_var)).collect(),
        noise_var: (0..m).map(|_| draw(rng, spec.noise_var)).collect(),
        latent_precision_inv: (0..d).map(|_| draw(rng, spec.latent_precision_inv)).collect(),
        smoothing_precision_inv: (0..m)
            .map(|_| (0..d).map(|_| draw(rng, spec.smoothing_precision_inv)).collect())
            .collect(),
        prior_mean: vec![],
    }
}

/// Distinct random tuples on the grid; the first one is always of type 0.
pub fn random_candidates(spec: &InstanceSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<TypedLocation>>> {
    let steps = (spec.extent / spec.grid_step).floor().max(1.0) as usize;
    let capacity = (steps as f64).powi(spec.dim as i32) * spec.num_types as f64;
    if (spec.num_candidates as f64) > capacity {
        return Err(Error::config(format!(
            "{} candidates do not fit on a grid with {capacity} tuples",
            spec.num_candidates
        )));
    }
    let mut all: Vec<TypedLocation> = Vec::with_capacity(spec.num_candidates);
    while all.len() < spec.num_candidates {
        let coords: Vec<f64> = (0..spec.dim)
            .map(|_| rng.random_range(0..steps) as f64 * spec.grid_step)
            .collect();
        let t = if all.is_empty() { 0 } else { rng.random_range(0..spec.num_types) };
        let p = TypedLocation::new(Location::new(coords)?, t);
        if !all.contains(&p) {
            all.push(p);
        }
    }
    let mut v = vec![Vec::new(); spec.num_types];
    for p in all {
        v[p.type_index].push(p);
    }
    Ok(v)
}

/// Builds a model with k-means inducing locations over the pooled candidates.
pub fn model_from_candidates(h: Hyperparams, v: Vec<Vec<TypedLocation>>, m: usize, seed: u64) -> Result<PitcModel> {
    let locs = distinct_locations(v.iter().flatten().map(|p| &p.location));
    let inducing = select_inducing(&locs, m.min(locs.len()), seed)?;
    PitcModel::build(h, inducing, v)
}

/// A random instance; a draw whose inducing covariance cannot be factorized
/// is replaced by the next one from the same stream.
pub fn random_instance(spec: &InstanceSpec, seed: u64) -> Result<PitcModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for attempt in 0..8 {
        let h = random_hyperparams(spec, &mut rng);
        let v = random_candidates(spec, &mut rng)?;
        match model_from_candidates(h, v, spec.num_inducing, seed.wrapping_add(attempt)) {
            Ok(model) => return Ok(model),
            Err(e @ Error::IllConditioned { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Candidates spaced so far apart that all tuples are mutually independent,
/// one inducing location per candidate. `F` is modular on such instances.
pub fn modular_instance(num_types: usize, num_candidates: usize, seed: u64) -> Result<PitcModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = InstanceSpec {
        num_types,
        dim: 1,
        ..InstanceSpec::default()
    };
    let h = random_hyperparams(&spec, &mut rng);
    let mut v = vec![Vec::new(); num_types];
    let mut locs = Vec::with_capacity(num_candidates);
    for k in 0..num_candidates {
        let t = if k == 0 { 0 } else { rng.random_range(0..num_types) };
        let loc = Location::new(vec![k as f64 * 100.0])?;
        locs.push(loc.clone());
        v[t].push(TypedLocation::new(loc, t));
    }
    PitcModel::build(h, InducingSet::from_locations(locs), v)
}
