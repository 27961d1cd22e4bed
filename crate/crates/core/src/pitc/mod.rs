//! Sparse PITC model over a set of inducing locations.
//!
//! Everything is expressed in whitened inducing coordinates: with
//! `Σ_UU = L Lᵀ`, each tuple `p` gets a row `ψ_p = (L⁻¹ Σ_Up)ᵀ`, so
//! `Γ_AB = Ψ_A Ψ_Bᵀ`. The joint prior over any tuple set `A` is
//! `Γ_AA + Λ_A`, where `Λ_A` keeps the exact residual `Σ - Γ` between tuples of
//! the same type and zeroes it across types. Conditioning in this joint model
//! is what [`PitcModel::pitc_posterior`] computes.

pub mod floor;
mod kmeans;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub use kmeans::{kmeans, Clustering, KMeansRun};

use crate::covariance::{Hyperparams, Kernel, Location, TypedLocation};
use crate::error::{Error, Result};
use crate::exact::{
    check_disjoint, check_distinct, posterior_dense, validate_tuples, GaussianPrediction,
    PriorCovariance,
};
use crate::linalg::{symmetrize, SpdFactor};

/// `(2 pi e)^{-1}`: below this noise level entropies can go negative and `F`
/// loses its monotonicity.
pub const NOISE_FLOOR: f64 = 0.058_549_831_524_319_16;

/// Inducing locations and how they were obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct InducingSet {
    pub locations: Vec<Location>,
    pub provenance: Option<KMeansRun>,
}

impl InducingSet {
    pub fn from_locations(locations: Vec<Location>) -> Self {
        InducingSet {
            locations,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Distinct locations, first occurrence order.
pub fn distinct_locations<'a>(locs: impl IntoIterator<Item = &'a Location>) -> Vec<Location> {
    let mut out: Vec<Location> = Vec::new();
    let mut seen: BTreeMap<Vec<u64>, ()> = BTreeMap::new();
    for l in locs {
        let key: Vec<u64> = l.coords().iter().map(|c| c.to_bits()).collect();
        if seen.insert(key, ()).is_none() {
            out.push(l.clone());
        }
    }
    out
}

/// k-means centers over the pooled, deduplicated candidate locations.
pub fn select_inducing(candidates: &[Location], m: usize, seed: u64) -> Result<InducingSet> {
    let pool = distinct_locations(candidates);
    let c = kmeans(&pool, m, seed)?;
    Ok(InducingSet {
        locations: c.centers,
        provenance: Some(c.run),
    })
}

/// How query residuals couple to observed residuals of the same type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Coupling {
    /// Queries and observations of one type share a residual block.
    #[default]
    SharedBlocks,
    /// Query residuals are independent of observed residuals.
    IndependentQueries,
}

#[derive(Clone, Debug)]
pub struct PitcModel {
    h: Hyperparams,
    kernel: Kernel,
    inducing: InducingSet,
    kuu: DMatrix<f64>,
    kuu_factor: SpdFactor,
    candidates: Vec<TypedLocation>,
    by_type: Vec<Vec<usize>>,
    candidate_psi: DMatrix<f64>,
    noise_floor_ok: bool,
}

/// Per-type factorization of an observed set: the shared building block of
/// every fast-path computation.
pub(crate) struct ObservedBlocks {
    /// present types, each with member rows (into the observed list) and factor of `Λ`
    pub(crate) groups: Vec<ObservedGroup>,
    /// `Σ_i Ψ_iᵀ Λ_i⁻¹ Ψ_i`
    pub(crate) summary: DMatrix<f64>,
}

pub(crate) struct ObservedGroup {
    pub(crate) type_index: usize,
    pub(crate) members: Vec<usize>,
    pub(crate) lambda: SpdFactor,
    /// `Λ_i⁻¹ Ψ_i`
    pub(crate) lambda_inv_psi: DMatrix<f64>,
    pub(crate) psi: DMatrix<f64>,
}

impl PitcModel {
    /// Precomputes `Σ_UU`, its factor, and whitened cross-covariances of every candidate.
    pub fn build(h: Hyperparams, inducing: InducingSet, v_per_type: Vec<Vec<TypedLocation>>) -> Result<Self> {
        for &t in &h.target_types {
            if v_per_type.get(t).is_some_and(|v| v.is_empty()) {
                return Err(Error::config(format!("no candidates for target type {t}")));
            }
        }
        Self::build_any(h, inducing, v_per_type)
    }

    /// As [`build`](Self::build) without requiring target candidates.
    pub(crate) fn build_any(h: Hyperparams, inducing: InducingSet, v_per_type: Vec<Vec<TypedLocation>>) -> Result<Self> {
        h.validate()?;
        if inducing.is_empty() {
            return Err(Error::config("need at least one inducing location"));
        }
        for u in &inducing.locations {
            if u.dim() != h.dim() {
                return Err(Error::Dimension {
                    expected: h.dim(),
                    got: u.dim(),
                });
            }
        }
        for (a, u) in inducing.locations.iter().enumerate() {
            if inducing.locations[..a].contains(u) {
                return Err(Error::IllConditioned {
                    what: "inducing covariance".into(),
                    detail: format!("inducing location {:?} appears twice", u.coords()),
                });
            }
        }
        if v_per_type.len() != h.num_types {
            return Err(Error::config(format!(
                "candidate lists for {} types, expected {}",
                v_per_type.len(),
                h.num_types
            )));
        }
        let mut candidates = Vec::new();
        let mut by_type = vec![Vec::new(); h.num_types];
        for (i, list) in v_per_type.into_iter().enumerate() {
            for p in list {
                if p.type_index != i {
                    return Err(Error::config(format!("tuple {p} listed under type {i}")));
                }
                by_type[i].push(candidates.len());
                candidates.push(p);
            }
        }
        validate_tuples(&h, &candidates)?;
        check_distinct(&candidates, "candidate set")?;

        let kernel = Kernel::new(&h);
        let m = inducing.len();
        let u = &inducing.locations;
        let mut kuu = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = kernel.latent_cov(&u[a], &u[b]);
                kuu[(a, b)] = v;
                kuu[(b, a)] = v;
            }
        }
        let kuu_factor = SpdFactor::new(kuu.clone(), "inducing covariance").map_err(|e| match e {
            Error::IllConditioned { detail, .. } => Error::IllConditioned {
                what: "inducing covariance".into(),
                detail: format!("{detail}; inducing locations may coincide"),
            },
            other => other,
        })?;
        let noise_floor_ok = h.min_noise_var() >= NOISE_FLOOR;
        if !noise_floor_ok {
            log::warn!(
                "smallest noise variance {:.4} is below (2 pi e)^-1; the selection criterion may decrease",
                h.min_noise_var()
            );
        }
        let mut model = PitcModel {
            h,
            kernel,
            inducing,
            kuu,
            kuu_factor,
            candidates: Vec::new(),
            by_type,
            candidate_psi: DMatrix::zeros(0, m),
            noise_floor_ok,
        };
        model.candidate_psi = model.psi(&candidates);
        model.candidates = candidates;
        Ok(model)
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.h
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn kuu(&self) -> &DMatrix<f64> {
        &self.kuu
    }

    pub fn kuu_factor(&self) -> &SpdFactor {
        &self.kuu_factor
    }

    pub fn noise_floor_ok(&self) -> bool {
        self.noise_floor_ok
    }

    /// All candidate tuples `V`, grouped by type.
    pub fn candidates(&self) -> &[TypedLocation] {
        &self.candidates
    }

    /// Indices into [`candidates`](Self::candidates) of type `i`.
    pub fn candidates_of_type(&self, i: usize) -> &[usize] {
        &self.by_type[i]
    }

    /// Indices of all target-type candidates.
    pub fn target_candidates(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.h.target_types.iter().flat_map(|&t| self.by_type[t].iter().copied()).collect();
        v.sort_unstable();
        v
    }

    pub fn candidate_index(&self, p: &TypedLocation) -> Option<usize> {
        self.by_type.get(p.type_index)?.iter().copied().find(|&k| self.candidates[k] == *p)
    }

    pub(crate) fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub(crate) fn candidate_psi(&self) -> &DMatrix<f64> {
        &self.candidate_psi
    }

    /// Whitened cross-covariance rows `(L⁻¹ Σ_{U,A})ᵀ`, `|A| x m`.
    pub fn psi(&self, a: &[TypedLocation]) -> DMatrix<f64> {
        let u = &self.inducing.locations;
        let kua = DMatrix::from_fn(u.len(), a.len(), |r, c| self.kernel.latent_cross_cov(&a[c], &u[r]));
        self.kuu_factor.whiten(&kua).transpose()
    }

    /// `Γ_AB = Σ_AU Σ_UU⁻¹ Σ_UB`.
    pub fn gamma(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64> {
        self.psi(a) * self.psi(b).transpose()
    }

    pub(crate) fn residual_from_psi(
        &self,
        a: &[TypedLocation],
        psi_a: &DMatrix<f64>,
        b: &[TypedLocation],
        psi_b: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |r, c| {
            if a[r].type_index == b[c].type_index {
                self.kernel.output_cov(&a[r], &b[c]) - psi_a.row(r).dot(&psi_b.row(c))
            } else {
                0.0
            }
        })
    }

    /// Residual covariance `Σ - Γ` kept within types and zeroed across types.
    pub fn residual_cov(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64> {
        self.residual_from_psi(a, &self.psi(a), b, &self.psi(b))
    }

    /// Block-diagonal `Λ_A` in the order of `a` (cross-type entries are zero).
    pub fn lambda_blocks(&self, a: &[TypedLocation]) -> DMatrix<f64> {
        let psi = self.psi(a);
        let mut l = self.residual_from_psi(a, &psi, a, &psi);
        symmetrize(&mut l);
        l
    }

    /// Factorizes the observed set type by type.
    pub(crate) fn observe(&self, x: &[TypedLocation], psi_x: &DMatrix<f64>) -> Result<ObservedBlocks> {
        let m = self.num_inducing();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, p) in x.iter().enumerate() {
            groups.entry(p.type_index).or_default().push(k);
        }
        let mut summary = DMatrix::zeros(m, m);
        let mut out = Vec::with_capacity(groups.len());
        for (type_index, members) in groups {
            let tuples: Vec<TypedLocation> = members.iter().map(|&k| x[k].clone()).collect();
            let psi = crate::linalg::select_rows(psi_x, &members);
            let mut lam = self.residual_from_psi(&tuples, &psi, &tuples, &psi);
            symmetrize(&mut lam);
            let lambda = SpdFactor::new(lam, "residual block")?;
            let lambda_inv_psi = lambda.solve(&psi);
            summary += psi.transpose() * &lambda_inv_psi;
            out.push(ObservedGroup {
                type_index,
                members,
                lambda,
                lambda_inv_psi,
                psi,
            });
        }
        symmetrize(&mut summary);
        Ok(ObservedBlocks {
            groups: out,
            summary,
        })
    }

    /// Posterior under the PITC joint prior, by the inversion-lemma route.
    pub fn pitc_posterior(
        &self,
        x: &[TypedLocation],
        y_x: &DVector<f64>,
        z: &[TypedLocation],
    ) -> Result<GaussianPrediction> {
        self.pitc_posterior_with(x, y_x, z, Coupling::SharedBlocks)
    }

    /// Fast-route posterior with an explicit residual coupling for the queries.
    pub fn pitc_posterior_with(
        &self,
        x: &[TypedLocation],
        y_x: &DVector<f64>,
        z: &[TypedLocation],
        coupling: Coupling,
    ) -> Result<GaussianPrediction> {
        if y_x.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y_x.len(),
            });
        }
        validate_tuples(&self.h, x)?;
        validate_tuples(&self.h, z)?;
        check_disjoint(x, z)?;
        check_distinct(x, "observation covariance")?;
        let (mean, cov) = self.condition(x, Some(y_x), z, coupling, false)?;
        Ok(GaussianPrediction {
            mean: mean.expect("mean requested"),
            cov: cov.expect("full covariance requested"),
        })
    }

    /// Posterior marginal variances only; `O(|Z| m²)` beyond the per-set cost.
    pub fn posterior_variances(&self, x: &[TypedLocation], z: &[TypedLocation]) -> Result<Vec<f64>> {
        validate_tuples(&self.h, x)?;
        validate_tuples(&self.h, z)?;
        check_disjoint(x, z)?;
        check_distinct(x, "observation covariance")?;
        let (_, var) = self.condition(x, None, z, Coupling::SharedBlocks, true)?;
        Ok(var.expect("diagonal requested").diagonal().iter().copied().collect())
    }

    /// Dense evaluation of the same posterior, for cross-checking the fast route.
    pub fn pitc_posterior_dense(
        &self,
        x: &[TypedLocation],
        y_x: &DVector<f64>,
        z: &[TypedLocation],
        coupling: Coupling,
    ) -> Result<GaussianPrediction> {
        match coupling {
            Coupling::SharedBlocks => posterior_dense(self, x, y_x, z),
            Coupling::IndependentQueries => {
                if y_x.len() != x.len() {
                    return Err(Error::Dimension {
                        expected: x.len(),
                        got: y_x.len(),
                    });
                }
                check_disjoint(x, z)?;
                check_distinct(x, "observation covariance")?;
                let mu_z = self.prior_mean(z);
                let base = self.gamma(z, z) + self.lambda_blocks(z);
                if x.is_empty() {
                    return Ok(GaussianPrediction { mean: mu_z, cov: base });
                }
                let kxx = SpdFactor::new(self.prior_cov_sym(x), "observation covariance")?;
                let gxz = self.gamma(x, z);
                let mean = mu_z + gxz.transpose() * kxx.solve_vec(&(y_x - self.prior_mean(x)));
                let w = kxx.whiten(&gxz);
                let mut cov = base - w.transpose() * w;
                symmetrize(&mut cov);
                Ok(GaussianPrediction { mean, cov })
            }
        }
    }

    /// Core of the fast route. With `diag_only`, the returned matrix is diagonal.
    fn condition(
        &self,
        x: &[TypedLocation],
        y_x: Option<&DVector<f64>>,
        z: &[TypedLocation],
        coupling: Coupling,
        diag_only: bool,
    ) -> Result<(Option<DVector<f64>>, Option<DMatrix<f64>>)> {
        let m = self.num_inducing();
        let psi_x = self.psi(x);
        let psi_z = self.psi(z);
        let obs = self.observe(x, &psi_x)?;
        let q = SpdFactor::new(DMatrix::identity(m, m) + &obs.summary, "inducing posterior precision")?;

        // whitened posterior mean of the inducing values
        let resid = y_x.map(|y| y - self.prior_mean(x));
        let mut lam_inv_resid: Vec<DVector<f64>> = Vec::new();
        let m_v = resid.as_ref().map(|r| {
            let mut b = DVector::zeros(m);
            for g in &obs.groups {
                let rg = DVector::from_iterator(g.members.len(), g.members.iter().map(|&k| r[k]));
                let sol = g.lambda.solve_vec(&rg);
                b += g.psi.transpose() * &sol;
                lam_inv_resid.push(sol);
            }
            q.solve_vec(&b)
        });

        let nz = z.len();
        let mut g_rows = psi_z.clone();
        let mut r_block = DMatrix::zeros(nz, nz);
        let mut mean = m_v.as_ref().map(|_| self.prior_mean(z));

        let mut z_groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, p) in z.iter().enumerate() {
            z_groups.entry(p.type_index).or_default().push(k);
        }
        for (type_index, zk) in &z_groups {
            let zt: Vec<TypedLocation> = zk.iter().map(|&k| z[k].clone()).collect();
            let psi_zt = crate::linalg::select_rows(&psi_z, zk);
            let lam_zz = self.residual_from_psi(&zt, &psi_zt, &zt, &psi_zt);
            let group = match coupling {
                Coupling::SharedBlocks => obs
                    .groups
                    .iter()
                    .enumerate()
                    .find(|(_, g)| g.type_index == *type_index),
                Coupling::IndependentQueries => None,
            };
            let mut r = lam_zz;
            if let Some((gi, g)) = group {
                let xt: Vec<TypedLocation> = g.members.iter().map(|&k| x[k].clone()).collect();
                // Λ_{X_i Z_i} and C = Λ_{X_i}⁻¹ Λ_{X_i Z_i}
                let lam_xz = self.residual_from_psi(&xt, &g.psi, &zt, &psi_zt);
                let c = g.lambda.solve(&lam_xz);
                let g_adj = c.transpose() * &g.psi;
                for (row, &k) in zk.iter().enumerate() {
                    for col in 0..m {
                        g_rows[(k, col)] -= g_adj[(row, col)];
                    }
                }
                r -= lam_xz.transpose() * &c;
                if let (Some(mean), Some(_)) = (mean.as_mut(), m_v.as_ref()) {
                    let shift = lam_xz.transpose() * &lam_inv_resid[gi];
                    for (row, &k) in zk.iter().enumerate() {
                        mean[k] += shift[row];
                    }
                }
            }
            for (a, &ka) in zk.iter().enumerate() {
                if diag_only {
                    r_block[(ka, ka)] = r[(a, a)];
                } else {
                    for (b, &kb) in zk.iter().enumerate() {
                        r_block[(ka, kb)] = r[(a, b)];
                    }
                }
            }
        }
        if let (Some(mean), Some(m_v)) = (mean.as_mut(), m_v.as_ref()) {
            *mean += &g_rows * m_v;
        }
        let w = q.whiten(&g_rows.transpose());
        let cov = if diag_only {
            let mut d = r_block;
            for k in 0..nz {
                d[(k, k)] += w.column(k).norm_squared();
            }
            d
        } else {
            let mut c = w.transpose() * w + r_block;
            symmetrize(&mut c);
            c
        };
        for (k, p) in z.iter().enumerate() {
            floor::record(cov[(k, k)], self.h.noise_var[p.type_index]);
        }
        Ok((mean, Some(cov)))
    }
}

impl PriorCovariance for PitcModel {
    fn hyperparams(&self) -> &Hyperparams {
        &self.h
    }

    fn prior_cov(&self, a: &[TypedLocation], b: &[TypedLocation]) -> DMatrix<f64> {
        let psi_a = self.psi(a);
        let psi_b = self.psi(b);
        &psi_a * psi_b.transpose() + self.residual_from_psi(a, &psi_a, b, &psi_b)
    }
}

#[cfg(test)]
mod tests;
