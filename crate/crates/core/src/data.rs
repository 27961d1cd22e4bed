//! Multi-type point datasets: CSV loading with a schema, per-type
//! normalization, test splits and RMSE.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{Location, TypedLocation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    Log10,
}

impl Transform {
    fn apply(self, v: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(v),
            Transform::Log10 if v > 0.0 => Some(v.log10()),
            Transform::Log10 => None,
        }
    }

    fn invert(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log10 => 10f64.powf(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeColumn {
    pub name: String,
    /// CSV header of the column; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default)]
    pub transform: Transform,
}

impl TypeColumn {
    pub fn header(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

/// Which CSV columns hold coordinates and which hold measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub coordinates: Vec<String>,
    pub types: Vec<TypeColumn>,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.coordinates.is_empty() {
            return Err(Error::config("schema needs at least one coordinate column"));
        }
        if self.types.is_empty() {
            return Err(Error::config("schema needs at least one type column"));
        }
        let mut headers: Vec<&str> = self.coordinates.iter().map(String::as_str).collect();
        headers.extend(self.types.iter().map(TypeColumn::header));
        for (k, h) in headers.iter().enumerate() {
            if headers[..k].contains(h) {
                return Err(Error::config(format!("column '{h}' is used twice in the schema")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: DatasetSchema = toml::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

/// Locations with a sparse set of per-type measurements. Values are stored
/// after the schema's transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub coordinate_names: Vec<String>,
    pub type_names: Vec<String>,
    pub transforms: Vec<Transform>,
    pub locations: Vec<Location>,
    /// `(location index, type index) -> value`
    pub measurements: BTreeMap<(usize, usize), f64>,
}

impl Dataset {
    pub fn num_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn dim(&self) -> usize {
        self.coordinate_names.len()
    }

    pub fn count_of_type(&self, t: usize) -> usize {
        self.measurements.keys().filter(|k| k.1 == t).count()
    }

    /// Measured tuples of type `t` with their values, in location order.
    pub fn of_type(&self, t: usize) -> Vec<(TypedLocation, f64)> {
        self.measurements
            .iter()
            .filter(|(k, _)| k.1 == t)
            .map(|(&(l, _), &v)| (TypedLocation::new(self.locations[l].clone(), t), v))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_types();
        if self.transforms.len() != m {
            return Err(Error::config(format!("{} transforms for {m} types", self.transforms.len())));
        }
        for l in &self.locations {
            if l.dim() != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: l.dim(),
                });
            }
        }
        for (&(l, t), v) in &self.measurements {
            if l >= self.locations.len() || t >= m || !v.is_finite() {
                return Err(Error::config(format!("invalid measurement ({l}, {t}) = {v}")));
            }
        }
        for t in 0..m {
            if self.count_of_type(t) == 0 {
                return Err(Error::config(format!("type '{}' has no measurements", self.type_names[t])));
            }
        }
        Ok(())
    }

    /// Schema that reads back what [`write_dataset`] produces.
    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            coordinates: self.coordinate_names.clone(),
            types: self
                .type_names
                .iter()
                .zip(&self.transforms)
                .map(|(n, t)| TypeColumn {
                    name: n.clone(),
                    column: None,
                    transform: *t,
                })
                .collect(),
        }
    }
}

/// Reads a headered CSV; `label` names the source in errors. Empty cells are
/// missing measurements. Columns not named in the schema are ignored.
pub fn parse_dataset<R: Read>(input: R, schema: &DatasetSchema, label: &str) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let column = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: label.to_string(),
            line: 1,
            msg: format!("missing column '{name}'"),
        })
    };
    let coord_cols: Vec<usize> = schema.coordinates.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let type_cols: Vec<usize> = schema.types.iter().map(|t| column(t.header())).collect::<Result<_>>()?;
    let mut locations: Vec<Location> = Vec::new();
    let mut first_line: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut measurements = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let bad = |msg: String| Error::Parse {
            path: label.to_string(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let coords = coord_cols
            .iter()
            .zip(&schema.coordinates)
            .map(|(&c, name)| {
                let v: f64 = rec[c].parse().map_err(|_| bad(format!("coordinate '{name}' = '{}' is not a number", &rec[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("coordinate '{name}' is not finite")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let key: Vec<u64> = coords.iter().map(|c| c.to_bits()).collect();
        if let Some(prev) = first_line.insert(key, line) {
            return Err(bad(format!("location repeats the one on line {prev}")));
        }
        let li = locations.len();
        locations.push(Location::new(coords).map_err(|e| bad(e.to_string()))?);
        for (t, (&c, tc)) in type_cols.iter().zip(&schema.types).enumerate() {
            let cell = &rec[c];
            if cell.is_empty() {
                continue;
            }
            let raw: f64 = cell
                .parse()
                .map_err(|_| bad(format!("'{}' = '{cell}' is not a number", tc.header())))?;
            if !raw.is_finite() {
                return Err(bad(format!("'{}' is not finite", tc.header())));
            }
            let v = tc
                .transform
                .apply(raw)
                .ok_or_else(|| bad(format!("'{}' = {raw} must be > 0 for a log10 transform", tc.header())))?;
            measurements.insert((li, t), v);
        }
    }
    let ds = Dataset {
        coordinate_names: schema.coordinates.clone(),
        type_names: schema.types.iter().map(|t| t.name.clone()).collect(),
        transforms: schema.types.iter().map(|t| t.transform).collect(),
        locations,
        measurements,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    parse_dataset(std::fs::File::open(path)?, schema, &path.display().to_string())
}

/// Canonical CSV: coordinate columns then one column per type, named by the
/// type names, values mapped back through the transforms, empty cells for
/// missing measurements.
pub fn write_dataset<W: Write>(out: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ds.coordinate_names.iter().chain(&ds.type_names))?;
    for (l, loc) in ds.locations.iter().enumerate() {
        let mut row: Vec<String> = loc.coords().iter().map(|c| c.to_string()).collect();
        for (t, tr) in ds.transforms.iter().enumerate() {
            row.push(ds.measurements.get(&(l, t)).map_or_else(String::new, |v| tr.invert(*v).to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_dataset(std::fs::File::create(path)?, ds)
}

/// Per-type mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn normalize(&self, t: usize, v: f64) -> f64 {
        (v - self.mean[t]) / self.std[t]
    }

    pub fn denormalize(&self, t: usize, v: f64) -> f64 {
        v * self.std[t] + self.mean[t]
    }
}

/// Z-scores every type over its available measurements.
pub fn normalize(ds: &Dataset) -> Result<(Dataset, Normalization)> {
    let m = ds.num_types();
    let mut mean = vec![0.0; m];
    let mut std = vec![0.0; m];
    for t in 0..m {
        let vals: Vec<f64> = ds.measurements.iter().filter(|(k, _)| k.1 == t).map(|(_, v)| *v).collect();
        if vals.is_empty() {
            return Err(Error::config(format!("type '{}' has no measurements", ds.type_names[t])));
        }
        let n = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        if !(var.sqrt() > 1e-300) {
            return Err(Error::domain(format!("type '{}' has zero standard deviation", ds.type_names[t])));
        }
        mean[t] = mu;
        std[t] = var.sqrt();
    }
    let stats = Normalization { mean, std };
    let mut out = ds.clone();
    for (&(_, t), v) in out.measurements.iter_mut() {
        *v = stats.normalize(t, *v);
    }
    Ok((out, stats))
}

/// Inverse of [`normalize`].
pub fn denormalize(ds: &Dataset, stats: &Normalization) -> Dataset {
    let mut out = ds.clone();
    for (&(_, t), v) in out.measurements.iter_mut() {
        *v = stats.denormalize(t, *v);
    }
    out
}

/// Test tuples are drawn from each target type; other types stay whole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub target_types: Vec<usize>,
    /// Test tuples per target type.
    pub test_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub tuple: TypedLocation,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Candidate pool per type.
    pub train: Vec<Vec<Measurement>>,
    pub test: Vec<Measurement>,
}

fn tuple_key(p: &TypedLocation) -> (usize, Vec<u64>) {
    (p.type_index, p.location.coords().iter().map(|c| c.to_bits()).collect())
}

impl Split {
    pub fn candidates(&self) -> Vec<Vec<TypedLocation>> {
        self.train
            .iter()
            .map(|v| v.iter().map(|m| m.tuple.clone()).collect())
            .collect()
    }

    /// Training values at `tuples`, in order.
    pub fn values_at(&self, tuples: &[TypedLocation]) -> Result<DVector<f64>> {
        let lookup: BTreeMap<(usize, Vec<u64>), f64> =
            self.train.iter().flatten().map(|m| (tuple_key(&m.tuple), m.value)).collect();
        let vals = tuples
            .iter()
            .map(|p| {
                lookup
                    .get(&tuple_key(p))
                    .copied()
                    .ok_or_else(|| Error::domain(format!("no training value at {p}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(vals))
    }

    pub fn all_train(&self) -> (Vec<TypedLocation>, DVector<f64>) {
        let tuples: Vec<TypedLocation> = self.train.iter().flatten().map(|m| m.tuple.clone()).collect();
        let values = DVector::from_iterator(tuples.len(), self.train.iter().flatten().map(|m| m.value));
        (tuples, values)
    }
}

/// Removes `test_count` seeded-uniform tuples of each target type from the pool.
pub fn split_test(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let m = ds.num_types();
    if spec.target_types.is_empty() {
        return Err(Error::config("split needs at least one target type"));
    }
    for (k, &t) in spec.target_types.iter().enumerate() {
        if t >= m {
            return Err(Error::config(format!("target type {t} out of range 0..{m}")));
        }
        if spec.target_types[..k].contains(&t) {
            return Err(Error::config(format!("target type {t} listed twice")));
        }
        let have = ds.count_of_type(t);
        if spec.test_count >= have {
            return Err(Error::config(format!(
                "test_count {} leaves no candidates of type '{}' ({have} measurements)",
                spec.test_count, ds.type_names[t]
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::with_capacity(m);
    let mut test = Vec::new();
    for t in 0..m {
        let all: Vec<Measurement> = ds
            .of_type(t)
            .into_iter()
            .map(|(tuple, value)| Measurement { tuple, value })
            .collect();
        if spec.target_types.contains(&t) {
            let mut order: Vec<usize> = (0..all.len()).collect();
            order.shuffle(&mut rng);
            let mut is_test = vec![false; all.len()];
            for &k in &order[..spec.test_count] {
                is_test[k] = true;
            }
            let mut keep = Vec::with_capacity(all.len() - spec.test_count);
            for (k, meas) in all.into_iter().enumerate() {
                if is_test[k] {
                    test.push(meas);
                } else {
                    keep.push(meas);
                }
            }
            train.push(keep);
        } else {
            train.push(all);
        }
    }
    Ok(Split { train, test })
}

/// `sqrt(mean((p - y)²))`.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::domain("rmse of an empty set"));
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sse / truths.len() as f64).sqrt())
}

#[cfg(test)]
mod tests;
