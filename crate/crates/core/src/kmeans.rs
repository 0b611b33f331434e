//! Lloyd's k-means with distance-weighted (k-means++) seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, invalid, Result, WeldError};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds<X: AsRef<[f64]>>(data: &[X], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x.as_ref(), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            // fewer distinct points than k
            rng.random_range(0..n)
        };
        let c = data[pick].as_ref().to_vec();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

/// Clusters `data` into `k` groups. Stops when assignments no longer change
/// or after [`MAX_ITERATIONS`] Lloyd steps. A cluster left empty is moved
/// onto the point lying farthest from its own center.
pub fn kmeans<X: AsRef<[f64]>>(data: &[X], k: usize, seed: u64) -> Result<KMeansResult> {
    if data.is_empty() {
        return Err(WeldError::EmptyInput("k-means needs data".into()));
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let dim = data[0].as_ref().len();
    for x in data {
        check_dim(dim, x.as_ref().len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(data, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut inertia = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut dists = Vec::with_capacity(data.len());
        let next: Vec<usize> = data
            .iter()
            .map(|x| {
                let (j, d) = nearest(&centers, x.as_ref());
                dists.push(d);
                j
            })
            .collect();
        inertia.push(dists.iter().sum());
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in data.iter().zip(&assignments) {
            counts[j] += 1;
            sums[j].iter_mut().zip(x.as_ref()).for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; data.len()];
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centers[j] = sums[j].iter().map(|s| s / n).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..data.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    if dists[i] > 0.0 {
                        taken[i] = true;
                        centers[j] = data[i].as_ref().to_vec();
                    }
                }
            }
        }
    }

    Ok(KMeansResult {
        centers,
        assignments,
        inertia,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, [Vec<f64>; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (20.0, -5.0)] {
            for _ in 0..100 {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                data.push(vec![cx + dx, cy + dy]);
            }
        }
        let mean = |s: &[Vec<f64>]| {
            let n = s.len() as f64;
            vec![s.iter().map(|p| p[0]).sum::<f64>() / n, s.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let m = [mean(&data[..100]), mean(&data[100..])];
        (data, m)
    }

    #[test]
    fn distinct_points_become_centers() {
        let pts = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![-3.0, 8.0], vec![10.0, 10.0]];
        let data: Vec<Vec<f64>> = pts.iter().cycle().take(40).cloned().collect();
        let r = kmeans(&data, 4, 3).unwrap();
        let mut centers = r.centers.clone();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = pts.clone();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers, expected);
        assert_eq!(*r.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn two_blobs_recover_means() {
        let (data, means) = blobs(4);
        let r = kmeans(&data, 2, 1).unwrap();
        for m in &means {
            let d = r.centers.iter().map(|c| sq_dist(c, m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(d < 0.1, "center off blob mean by {d}");
        }
    }

    #[test]
    fn inertia_never_increases() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..3).map(|_| rng.random::<f64>() * 10.0).collect())
                .collect();
            let r = kmeans(&data, 7, seed).unwrap();
            for w in r.inertia.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.inertia);
            }
        }
    }

    #[test]
    fn more_clusters_than_distinct_points() {
        let data = vec![vec![1.0], vec![1.0], vec![2.0]];
        let r = kmeans(&data, 3, 0).unwrap();
        assert_eq!(r.centers.len(), 3);
        assert_eq!(*r.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn errors_and_determinism() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(kmeans(&empty, 2, 0).is_err());
        assert!(kmeans(&[vec![1.0]], 0, 0).is_err());
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 0).is_err());
        let (data, _) = blobs(8);
        assert_eq!(kmeans(&data, 5, 2).unwrap(), kmeans(&data, 5, 2).unwrap());
    }
}
