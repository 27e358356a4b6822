//! Starting partitions for EM, computed on the vectorized units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ThreeWayData;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// Agglomerative clustering, Ward linkage, Euclidean distances.
    #[default]
    Ward,
    /// Seeded k-means++ followed by Lloyd iterations.
    KMeansPlusPlus,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(InitMethod::Ward),
            "kmeans++" | "kmeans-plus-plus" => Ok(InitMethod::KMeansPlusPlus),
            other => Err(Error::InvalidArgument(format!("unknown init method `{other}`"))),
        }
    }
}

/// Hard partition into `k` non-empty groups, labels `0..k`. The seed only
/// matters for k-means++.
pub fn initialize<F: Scalar>(data: &ThreeWayData<F>, k: usize, method: InitMethod, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if data.n() < k {
        return Err(Error::InvalidArgument(format!("n = {} is smaller than K = {k}", data.n())));
    }
    let points: Vec<Vec<f64>> = (0..data.n())
        .map(|i| data.unit(i).iter().map(|v| v.as_f64()).collect())
        .collect();
    Ok(match method {
        InitMethod::Ward => ward(&points, k),
        InitMethod::KMeansPlusPlus => kmeans_pp(&points, k, seed),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Naive O(n³) Ward agglomeration with Lance–Williams updates on squared
/// distances. Ties go to the lexicographically smallest pair.
pub(crate) fn ward(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    while active.len() > k {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[i * n + j];
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &h in &active {
            if h == i || h == j {
                continue;
            }
            let nh = size[h] as f64;
            let d = ((ni + nh) * dist[i * n + h] + (nj + nh) * dist[j * n + h] - nh * dij) / (ni + nj + nh);
            dist[i * n + h] = d;
            dist[h * n + i] = d;
        }
        size[i] += size[j];
        active.retain(|&a| a != j);
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
    }
    relabel_by_first_member(&owner)
}

/// Renumbers cluster ids in order of their smallest member.
fn relabel_by_first_member(owner: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    owner
        .iter()
        .map(|o| {
            let next = map.len();
            *map.entry(*o).or_insert(next)
        })
        .collect()
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .map(|c| (sq_dist(p, &centers[c]), c))
                .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
                .1;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        fill_empty_clusters(points, &centers, &mut labels, k);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
        }
        centers = sums;
        if !changed {
            break;
        }
    }
    relabel_by_first_member(&labels)
}

/// Moves the point farthest from its center into each empty cluster.
fn fill_empty_clusters(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (sq_dist(&points[i], &centers[labels[i]]), i))
            .fold((-1.0, 0), |a, b| if b.0 > a.0 { b } else { a })
            .1;
        labels[far] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn data_from(values: &[f64]) -> ThreeWayData<f64> {
        ThreeWayData::new(values.iter().map(|&v| Array2::from_elem((1, 1), v)).collect()).unwrap()
    }

    #[test]
    fn n_equals_k_gives_singletons() {
        let d = data_from(&[0.0, 5.0, -3.0, 2.0]);
        let labels = initialize(&d, 4, InitMethod::Ward, 0).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn identical_units_split_deterministically() {
        let d = data_from(&[1.0; 6]);
        let a = initialize(&d, 2, InitMethod::Ward, 0).unwrap();
        let b = initialize(&d, 2, InitMethod::Ward, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(&0) && a.contains(&1));
    }

    #[test]
    fn too_few_units() {
        let d = data_from(&[1.0, 2.0]);
        assert!(initialize(&d, 3, InitMethod::Ward, 0).is_err());
    }

    #[test]
    fn kmeans_pp_nonempty_groups() {
        let d = data_from(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2, 20.0]);
        let labels = initialize(&d, 3, InitMethod::KMeansPlusPlus, 3).unwrap();
        for c in 0..3 {
            assert!(labels.contains(&c));
        }
    }

    #[test]
    fn ward_matches_simple_merge_order() {
        // 0, 1 merge first (distance 1); then {0,1} vs 10: Ward cost 2/3 * 90.25.
        let d = data_from(&[0.0, 1.0, 10.0, 30.0]);
        assert_eq!(initialize(&d, 3, InitMethod::Ward, 0).unwrap(), vec![0, 0, 1, 2]);
        assert_eq!(initialize(&d, 2, InitMethod::Ward, 0).unwrap(), vec![0, 0, 0, 1]);
    }
}
