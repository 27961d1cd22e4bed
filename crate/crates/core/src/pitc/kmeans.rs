//! Seeded Lloyd's k-means with k-means++ seeding, used to place inducing locations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::Location;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const REL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub seed: u64,
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Location>,
    pub run: KMeansRun,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Clusters `points` (assumed pairwise distinct) into `k` groups.
pub fn kmeans(points: &[Location], k: usize, seed: u64) -> Result<Clustering> {
    let n = points.len();
    if k == 0 {
        return Err(Error::config("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::config(format!(
            "cannot place {k} inducing locations among {n} distinct candidate locations"
        )));
    }
    let data: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if target < *w {
                    chosen = Some(i);
                    break;
                }
                target -= w;
            }
            // round-off can exhaust the walk; fall back to the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick].to_vec();
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centers.push(c);
    }

    let dim = data[0].len();
    let mut assignment = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut new_inertia = 0.0;
        for (i, p) in data.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            assignment[i] = c;
            new_inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in data.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(data[a], &centers[assignment[a]])
                            .total_cmp(&sq_dist(data[b], &centers[assignment[b]]))
                    })
                    .expect("n >= k >= 1");
                centers[c] = data[far].to_vec();
                assignment[far] = c;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let converged = inertia.is_finite()
            && (inertia - new_inertia).abs() <= REL_TOLERANCE * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if converged || inertia == 0.0 {
            break;
        }
    }
    // inertia of the final centers
    inertia = data.iter().map(|p| nearest(p, &centers).1).sum();

    let centers = centers
        .into_iter()
        .map(Location::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering {
        centers,
        run: KMeansRun {
            seed,
            iterations,
            inertia,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(v: &[[f64; 2]]) -> Vec<Location> {
        v.iter().map(|c| Location::new(c.to_vec()).unwrap()).collect()
    }

    #[test]
    fn k_equal_n_returns_the_points() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [5.0, 5.0]]);
        let c = kmeans(&p, 4, 3).unwrap();
        assert_eq!(c.run.inertia, 0.0);
        for q in &p {
            assert!(c.centers.contains(q));
        }
    }

    #[test]
    fn separated_clusters_recover_means() {
        let a = [[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [0.4, 0.0], [0.3, 0.2]];
        let b = [[10.0, 10.0], [10.5, 10.1], [10.2, 9.8], [9.9, 10.4], [10.4, 9.7]];
        let mut all = pts(&a);
        all.extend(pts(&b));
        let mean = |g: &[[f64; 2]]| -> [f64; 2] {
            let n = g.len() as f64;
            [g.iter().map(|p| p[0]).sum::<f64>() / n, g.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let (ma, mb) = (mean(&a), mean(&b));
        for seed in 0..5 {
            let mut c = kmeans(&all, 2, seed).unwrap().centers;
            c.sort_by(|x, y| x.lex_cmp(y));
            assert_relative_eq!(c[0].coords()[0], ma[0], epsilon = 1e-12);
            assert_relative_eq!(c[0].coords()[1], ma[1], epsilon = 1e-12);
            assert_relative_eq!(c[1].coords()[0], mb[0], epsilon = 1e-12);
            assert_relative_eq!(c[1].coords()[1], mb[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p: Vec<Location> = (0..60)
            .map(|i| Location::new(vec![(i as f64 * 0.731).sin() * 4.0, (i as f64 * 1.37).cos() * 3.0]).unwrap())
            .collect();
        assert_eq!(kmeans(&p, 7, 11).unwrap(), kmeans(&p, 7, 11).unwrap());
    }

    #[test]
    fn too_many_clusters_is_a_config_error() {
        let p = pts(&[[0.0, 0.0]]);
        assert!(matches!(kmeans(&p, 2, 0), Err(Error::Config(_))));
    }
}
