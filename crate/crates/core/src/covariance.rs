//! Convolved multi-output covariance: a single latent GP with a Gaussian
//! covariance, smoothed per output type by a Gaussian kernel.
//!
//! All precision matrices are diagonal and stored as their inverses, since only
//! sums of inverse precisions enter the covariance.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the spatial domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Location(Vec<f64>);

impl Location {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("location needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Location(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Location) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn lex_cmp(&self, other: &Location) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl From<Location> for Vec<f64> {
    fn from(l: Location) -> Self {
        l.0
    }
}

/// A location paired with a measurement type: the unit of selection.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedLocation {
    pub location: Location,
    pub type_index: usize,
}

impl TypedLocation {
    pub fn new(location: Location, type_index: usize) -> Self {
        TypedLocation {
            location,
            type_index,
        }
    }

    /// Deterministic tie-break order: type index, then coordinates.
    pub fn lex_cmp(&self, other: &TypedLocation) -> Ordering {
        self.type_index
            .cmp(&other.type_index)
            .then_with(|| self.location.lex_cmp(&other.location))
    }
}

impl fmt::Display for TypedLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{:?}, {}>", self.location.coords(), self.type_index)
    }
}

/// Kernel and noise parameters for `num_types` output types over a `d`-dimensional domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub num_types: usize,
    pub target_types: Vec<usize>,
    /// Per-type signal variance.
    pub signal_var: Vec<f64>,
    /// Per-type noise variance.
    pub noise_var: Vec<f64>,
    /// Diagonal of the inverse latent precision, length `d`.
    pub latent_precision_inv: Vec<f64>,
    /// Per-type diagonal of the inverse smoothing precision, each of length `d`.
    pub smoothing_precision_inv: Vec<Vec<f64>>,
    /// Per-type constant prior mean; zero for normalized data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_mean: Vec<f64>,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let m = self.num_types;
        if m == 0 {
            return Err(Error::config("num_types must be at least 1"));
        }
        let per_type = |name: &str, len: usize| {
            if len == m {
                Ok(())
            } else {
                Err(Error::config(format!("{name} has {len} entries, expected {m}")))
            }
        };
        per_type("signal_var", self.signal_var.len())?;
        per_type("noise_var", self.noise_var.len())?;
        per_type("smoothing_precision_inv", self.smoothing_precision_inv.len())?;
        if !self.prior_mean.is_empty() {
            per_type("prior_mean", self.prior_mean.len())?;
        }
        if self.target_types.is_empty() {
            return Err(Error::config("target_types must be nonempty"));
        }
        let mut seen = vec![false; m];
        for &t in &self.target_types {
            if t >= m {
                return Err(Error::config(format!("target type {t} out of range 0..{m}")));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::config(format!("target type {t} listed twice")));
            }
        }
        let positive = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be finite and > 0: {v:?}")))
            }
        };
        if !self.signal_var.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::config(format!("signal_var must be finite and >= 0: {:?}", self.signal_var)));
        }
        positive("noise_var", &self.noise_var)?;
        let d = self.latent_precision_inv.len();
        if d == 0 {
            return Err(Error::config("latent_precision_inv must have length d >= 1"));
        }
        positive("latent_precision_inv", &self.latent_precision_inv)?;
        for (i, p) in self.smoothing_precision_inv.iter().enumerate() {
            if p.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: p.len(),
                });
            }
            positive(&format!("smoothing_precision_inv[{i}]"), p)?;
        }
        if self.prior_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("prior_mean must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.latent_precision_inv.len()
    }

    pub fn is_target(&self, type_index: usize) -> bool {
        self.target_types.contains(&type_index)
    }

    pub fn prior_mean_of(&self, type_index: usize) -> f64 {
        self.prior_mean.get(type_index).copied().unwrap_or(0.0)
    }

    /// `P0^{-1} + P_i^{-1} + P_j^{-1}`.
    pub fn output_diag(&self, i: usize, j: usize) -> Vec<f64> {
        // fixed summation order keeps the kernel exactly symmetric
        let (i, j) = (i.min(j), i.max(j));
        (0..self.dim())
            .map(|k| {
                self.latent_precision_inv[k]
                    + self.smoothing_precision_inv[i][k]
                    + self.smoothing_precision_inv[j][k]
            })
            .collect()
    }

    /// `P0^{-1} + P_i^{-1}`.
    pub fn cross_diag(&self, i: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.latent_precision_inv[k] + self.smoothing_precision_inv[i][k])
            .collect()
    }

    /// Smallest noise variance over all types.
    pub fn min_noise_var(&self) -> f64 {
        self.noise_var.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest signal variance over all types.
    pub fn max_signal_var(&self) -> f64 {
        self.signal_var.iter().copied().fold(0.0, f64::max)
    }

    pub fn signal_to_noise(&self, type_index: usize) -> f64 {
        self.signal_var[type_index] / self.noise_var[type_index]
    }

    /// Single-output parameters for one type; reproduces that type's marginal kernel exactly.
    pub fn restrict_to_type(&self, type_index: usize) -> Hyperparams {
        Hyperparams {
            num_types: 1,
            target_types: vec![0],
            signal_var: vec![self.signal_var[type_index]],
            noise_var: vec![self.noise_var[type_index]],
            latent_precision_inv: self.latent_precision_inv.clone(),
            smoothing_precision_inv: vec![self.smoothing_precision_inv[type_index].clone()],
            prior_mean: if self.prior_mean.is_empty() {
                Vec::new()
            } else {
                vec![self.prior_mean[type_index]]
            },
        }
    }

    /// Parameters for data transformed as `(y - shift_i) / scale_i` per type.
    pub fn rescaled(&self, shift: &[f64], scale: &[f64]) -> Hyperparams {
        let mut h = self.clone();
        for i in 0..self.num_types {
            h.signal_var[i] /= scale[i] * scale[i];
            h.noise_var[i] /= scale[i] * scale[i];
        }
        if !self.prior_mean.is_empty() {
            for i in 0..self.num_types {
                h.prior_mean[i] = (self.prior_mean[i] - shift[i]) / scale[i];
            }
        }
        h
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let h: Hyperparams = toml::from_str(s)?;
        h.validate()?;
        Ok(h)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("hyperparameters serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

/// `N(delta | 0, diag(diag_cov))`.
pub fn gaussian_density(delta: &[f64], diag_cov: &[f64]) -> Result<f64> {
    if delta.len() != diag_cov.len() {
        return Err(Error::Dimension {
            expected: diag_cov.len(),
            got: delta.len(),
        });
    }
    if delta.iter().any(|v| !v.is_finite()) || diag_cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite input to gaussian_density"));
    }
    if diag_cov.iter().any(|v| *v <= 0.0) {
        return Err(Error::domain("gaussian_density needs positive variances"));
    }
    Ok(density_unchecked(delta, diag_cov))
}

fn density_unchecked(delta: &[f64], diag_cov: &[f64]) -> f64 {
    let d = delta.len() as f64;
    let log_det: f64 = diag_cov.iter().map(|v| v.ln()).sum();
    let maha: f64 = delta.iter().zip(diag_cov).map(|(x, v)| x * x / v).sum();
    (-0.5 * (d * (2.0 * PI).ln() + log_det + maha)).exp()
}

fn check_types(h: &Hyperparams, tuples: &[&TypedLocation]) -> Result<()> {
    for p in tuples {
        if p.type_index >= h.num_types {
            return Err(Error::domain(format!(
                "type index {} out of range 0..{}",
                p.type_index, h.num_types
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

/// Prior covariance between two typed measurements, noise included.
pub fn output_cov(p: &TypedLocation, q: &TypedLocation, h: &Hyperparams) -> Result<f64> {
    check_types(h, &[p, q])?;
    Ok(Kernel::new(h).output_cov(p, q))
}

/// Covariance between a typed measurement and the latent function at `u`.
pub fn latent_cross_cov(p: &TypedLocation, u: &Location, h: &Hyperparams) -> Result<f64> {
    check_types(h, &[p])?;
    if u.dim() != h.dim() {
        return Err(Error::Dimension {
            expected: h.dim(),
            got: u.dim(),
        });
    }
    Ok(Kernel::new(h).latent_cross_cov(p, u))
}

/// Latent prior covariance.
pub fn latent_cov(u: &Location, u2: &Location, h: &Hyperparams) -> Result<f64> {
    for l in [u, u2] {
        if l.dim() != h.dim() {
            return Err(Error::Dimension {
                expected: h.dim(),
                got: l.dim(),
            });
        }
    }
    Ok(Kernel::new(h).latent_cov(u, u2))
}

/// `|A| x |B|` matrix of [`output_cov`] values.
pub fn cov_matrix(a: &[TypedLocation], b: &[TypedLocation], h: &Hyperparams) -> Result<DMatrix<f64>> {
    let refs: Vec<&TypedLocation> = a.iter().chain(b).collect();
    check_types(h, &refs)?;
    Ok(Kernel::new(h).cov_matrix(a, b))
}

/// Precomputed per-type-pair constants for fast covariance evaluation.
#[derive(Clone, Debug)]
pub(crate) struct Kernel {
    m: usize,
    noise_var: Vec<f64>,
    // indexed [i * m + j]
    pair_inv_diag: Vec<Vec<f64>>,
    pair_scale: Vec<f64>,
    cross_inv_diag: Vec<Vec<f64>>,
    cross_scale: Vec<f64>,
    latent_inv_diag: Vec<f64>,
    latent_scale: f64,
}

fn normalizer(diag: &[f64]) -> f64 {
    let d = diag.len() as f64;
    let log_det: f64 = diag.iter().map(|v| v.ln()).sum();
    (-0.5 * (d * (2.0 * PI).ln() + log_det)).exp()
}

impl Kernel {
    pub(crate) fn new(h: &Hyperparams) -> Self {
        let m = h.num_types;
        let mut pair_inv_diag = Vec::with_capacity(m * m);
        let mut pair_scale = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let diag = h.output_diag(i, j);
                pair_scale.push((h.signal_var[i] * h.signal_var[j]).sqrt() * normalizer(&diag));
                pair_inv_diag.push(diag.iter().map(|v| 1.0 / v).collect());
            }
        }
        let mut cross_inv_diag = Vec::with_capacity(m);
        let mut cross_scale = Vec::with_capacity(m);
        for i in 0..m {
            let diag = h.cross_diag(i);
            cross_scale.push(h.signal_var[i].sqrt() * normalizer(&diag));
            cross_inv_diag.push(diag.iter().map(|v| 1.0 / v).collect());
        }
        Kernel {
            m,
            noise_var: h.noise_var.clone(),
            pair_inv_diag,
            pair_scale,
            cross_inv_diag,
            cross_scale,
            latent_inv_diag: h.latent_precision_inv.iter().map(|v| 1.0 / v).collect(),
            latent_scale: normalizer(&h.latent_precision_inv),
        }
    }

    #[inline]
    fn gauss(a: &[f64], b: &[f64], inv_diag: &[f64]) -> f64 {
        let mut maha = 0.0;
        for k in 0..inv_diag.len() {
            let d = a[k] - b[k];
            maha += d * d * inv_diag[k];
        }
        (-0.5 * maha).exp()
    }

    /// Noise-free part of the output covariance.
    #[inline]
    pub(crate) fn signal_cov(&self, p: &TypedLocation, q: &TypedLocation) -> f64 {
        let k = p.type_index * self.m + q.type_index;
        self.pair_scale[k]
            * Self::gauss(p.location.coords(), q.location.coords(), &self.pair_inv_diag[k])
    }

    #[inline]
    pub(crate) fn output_cov(&self, p: &TypedLocation, q: &TypedLocation) -> f64 {
        let mut v = self.signal_cov(p, q);
        if p.type_index == q.type_index && p.location == q.location {
            v += self.noise_var[p.type_index];
        }
        v
    }

    #[inline]
    pub(crate) fn latent_cross_cov(&self, p: &TypedLocation, u: &Location) -> f64 {
        let i = p.type_index;
        self.cross_scale[i]
            * Self::gauss(p.location.coords(), u.coords(), &self.cross_inv_diag[i])
    }

    #[inline]
    pub(crate) fn latent_cov(&self, u: &Location, v: &Location) -> f64 {
        self.latent_scale * Self::gauss(u.coords(), v.coords(), &self.latent_inv_diag)
    }

    pub(crate) fn cov_matrix(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |r, c| self.output_cov(&a[r], &b[c]))
    }

    /// Symmetric covariance of one set with itself, filled from the upper triangle.
    pub(crate) fn cov_matrix_sym(&self, a: &[TypedLocation]) -> DMatrix<f64> {
        let n = a.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.output_cov(&a[i], &a[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn loc(c: &[f64]) -> Location {
        Location::new(c.to_vec()).unwrap()
    }

    pub(crate) fn tl(c: &[f64], t: usize) -> TypedLocation {
        TypedLocation::new(loc(c), t)
    }

    pub(crate) fn two_type_1d() -> Hyperparams {
        Hyperparams {
            num_types: 2,
            target_types: vec![0],
            signal_var: vec![1.0, 2.0],
            noise_var: vec![0.25, 0.1],
            latent_precision_inv: vec![0.1],
            smoothing_precision_inv: vec![vec![0.2], vec![0.4]],
            prior_mean: vec![],
        }
    }

    #[test]
    fn gaussian_density_closed_forms() {
        assert_relative_eq!(
            gaussian_density(&[0.0], &[1.0 / (2.0 * PI)]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            gaussian_density(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            0.159_154_943_091_895_3,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            gaussian_density(&[1.0], &[1.0]).unwrap(),
            0.241_970_724_519_143_37,
            epsilon = 1e-14
        );
    }

    #[test]
    fn gaussian_density_rejects_bad_input() {
        assert!(gaussian_density(&[f64::NAN], &[1.0]).is_err());
        assert!(gaussian_density(&[0.0], &[0.0]).is_err());
        assert!(gaussian_density(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn output_cov_same_tuple_includes_noise() {
        let h = Hyperparams {
            num_types: 1,
            target_types: vec![0],
            signal_var: vec![1.0],
            noise_var: vec![0.25],
            latent_precision_inv: vec![0.1],
            smoothing_precision_inv: vec![vec![0.2]],
            prior_mean: vec![],
        };
        let p = tl(&[0.3], 0);
        // density at zero with variance 0.5 is 1/sqrt(pi)
        assert_relative_eq!(
            output_cov(&p, &p, &h).unwrap(),
            0.564_189_583_547_756_3 + 0.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn output_cov_cross_type_has_no_noise() {
        let h = two_type_1d();
        let p = tl(&[0.0], 0);
        let q = tl(&[0.0], 1);
        let expected = (1.0f64 * 2.0).sqrt() * gaussian_density(&[0.0], &[0.1 + 0.2 + 0.4]).unwrap();
        assert_relative_eq!(output_cov(&p, &q, &h).unwrap(), expected, epsilon = 1e-14);
        let far = tl(&[1e3], 1);
        assert!(output_cov(&p, &far, &h).unwrap() < 1e-300);
    }

    #[test]
    fn latent_cross_cov_closed_form() {
        let mut h = two_type_1d();
        h.signal_var = vec![4.0, 1.0];
        h.latent_precision_inv = vec![0.25];
        h.smoothing_precision_inv = vec![vec![0.75], vec![0.5]];
        let v = latent_cross_cov(&tl(&[1.0], 0), &loc(&[0.0]), &h).unwrap();
        assert_relative_eq!(v, 2.0 * 0.241_970_724_519_143_37, epsilon = 1e-14);
        h.latent_precision_inv = vec![1.0 / (4.0 * PI)];
        h.smoothing_precision_inv = vec![vec![1.0 / (4.0 * PI)], vec![1.0]];
        h.signal_var = vec![1.0, 1.0];
        let peak = latent_cross_cov(&tl(&[2.0], 0), &loc(&[2.0]), &h).unwrap();
        assert_relative_eq!(peak, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn latent_cov_closed_form() {
        let mut h = two_type_1d();
        h.latent_precision_inv = vec![1.0, 1.0];
        h.smoothing_precision_inv = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let v = latent_cov(&loc(&[0.5, 0.5]), &loc(&[0.5, 0.5]), &h).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * PI), epsilon = 1e-14);
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let h = two_type_1d();
        assert!(output_cov(&tl(&[0.0, 1.0], 0), &tl(&[0.0], 0), &h).is_err());
        assert!(output_cov(&tl(&[0.0], 2), &tl(&[0.0], 0), &h).is_err());
    }

    #[test]
    fn hyperparams_toml_round_trip() {
        let h = two_type_1d();
        let back = Hyperparams::from_toml_str(&h.to_toml_string()).unwrap();
        assert_eq!(h, back);
        let mut bad = h.clone();
        bad.noise_var[1] = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = h;
        bad.target_types = vec![];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn restricted_type_reproduces_marginal_kernel() {
        let h = two_type_1d();
        let r = h.restrict_to_type(1);
        let a = tl(&[0.1], 1);
        let b = tl(&[0.7], 1);
        let a1 = tl(&[0.1], 0);
        let b1 = tl(&[0.7], 0);
        assert_relative_eq!(
            output_cov(&a, &b, &h).unwrap(),
            output_cov(&a1, &b1, &r).unwrap(),
            epsilon = 1e-15
        );
    }

    fn arb_hyper() -> impl Strategy<Value = Hyperparams> {
        (
            prop::collection::vec(0.1f64..3.0, 3),
            prop::collection::vec(0.05f64..1.0, 3),
            prop::collection::vec(0.05f64..2.0, 2),
            prop::collection::vec(prop::collection::vec(0.05f64..2.0, 2), 3),
        )
            .prop_map(|(s, n, p0, pi)| Hyperparams {
                num_types: 3,
                target_types: vec![0],
                signal_var: s,
                noise_var: n,
                latent_precision_inv: p0,
                smoothing_precision_inv: pi,
                prior_mean: vec![],
            })
    }

    fn arb_tuple() -> impl Strategy<Value = TypedLocation> {
        (prop::collection::vec(-3.0f64..3.0, 2), 0usize..3)
            .prop_map(|(c, t)| TypedLocation::new(Location::new(c).unwrap(), t))
    }

    proptest! {
        #[test]
        fn symmetric_and_stationary(h in arb_hyper(), p in arb_tuple(), q in arb_tuple(),
                                    shift in prop::collection::vec(-5.0f64..5.0, 2)) {
            let a = output_cov(&p, &q, &h).unwrap();
            let b = output_cov(&q, &p, &h).unwrap();
            prop_assert_eq!(a, b);
            let mv = |t: &TypedLocation| {
                let c: Vec<f64> = t.location.coords().iter().zip(&shift).map(|(x, s)| x + s).collect();
                TypedLocation::new(Location::new(c).unwrap(), t.type_index)
            };
            let c = output_cov(&mv(&p), &mv(&q), &h).unwrap();
            prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1e-300));
        }

        #[test]
        fn noise_decomposition(h in arb_hyper(), p in arb_tuple()) {
            let full = output_cov(&p, &p, &h).unwrap();
            let diag = h.output_diag(p.type_index, p.type_index);
            let signal = h.signal_var[p.type_index] * gaussian_density(&vec![0.0; 2], &diag).unwrap();
            prop_assert!((full - h.noise_var[p.type_index] - signal).abs() <= 1e-12 * full);
        }

        #[test]
        fn cov_matrix_min_eigenvalue_above_noise_floor(h in arb_hyper(),
                                                       pts in prop::collection::vec(arb_tuple(), 1..20)) {
            let mut uniq: Vec<TypedLocation> = Vec::new();
            for p in pts {
                if !uniq.contains(&p) { uniq.push(p); }
            }
            let k = cov_matrix(&uniq, &uniq, &h).unwrap();
            prop_assert_eq!(&k, &k.transpose());
            let min_eig = k.symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= h.min_noise_var() - 1e-9, "min eig {} < {}", min_eig, h.min_noise_var());
        }
    }

    #[test]
    fn small_cov_matrix_is_positive_definite() {
        let h = two_type_1d();
        let pts = vec![tl(&[0.0], 0), tl(&[0.3], 1), tl(&[0.9], 0)];
        let k = cov_matrix(&pts, &pts, &h).unwrap();
        assert!(k.symmetric_eigen().eigenvalues.min() > 0.0);
        assert_eq!(cov_matrix(&pts[..1], &pts[..1], &h).unwrap()[(0, 0)], output_cov(&pts[0], &pts[0], &h).unwrap());
    }
}
