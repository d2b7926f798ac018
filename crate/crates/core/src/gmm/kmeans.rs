//! k-means++ seeding plus a short Lloyd refinement, used to initialise EM.

use nalgebra::DMatrix;

use super::{check_sample_count, embeddings_to_matrix, GmmConfig};
use crate::embedding::EmbeddingVector;
use crate::error::Result;
use crate::rng::{prng, unit_f64};

pub const LLOYD_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansInit {
    /// Row-major centers, one per component.
    pub centers: Vec<Vec<f64>>,
    /// Indices of the samples picked by k-means++ seeding, in pick order.
    pub seeded_from: Vec<usize>,
    pub labels: Vec<usize>,
    /// One-hot `N x M` responsibilities matching `labels`.
    pub responsibilities: DMatrix<f64>,
}

pub fn kmeans_init(config: &GmmConfig, data: &[EmbeddingVector]) -> Result<KmeansInit> {
    config.validate()?;
    let x = embeddings_to_matrix(data)?;
    check_sample_count(config, &x)?;
    kmeans_init_matrix(config.n_components, &x, config.seed)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub(crate) fn kmeans_init_matrix(m: usize, x: &DMatrix<f64>, seed: u64) -> Result<KmeansInit> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut rng = prng(seed);

    // k-means++: first pick uniform, then proportional to squared distance
    // from the nearest chosen center. When every remaining sample coincides
    // with a chosen center the lowest unchosen index is taken.
    let mut chosen = vec![false; n];
    let first = ((unit_f64(&mut rng) * n as f64) as usize).min(n - 1);
    let mut seeded_from = vec![first];
    chosen[first] = true;
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[first])).collect();
    while seeded_from.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = unit_f64(&mut rng) * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = None;
            for (i, &v) in d2.iter().enumerate() {
                if v <= 0.0 {
                    continue;
                }
                last_positive = Some(i);
                acc += v;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.or(last_positive)
                .expect("positive total implies a positive entry")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("n >= m")
        };
        chosen[next] = true;
        seeded_from.push(next);
        for (i, r) in rows.iter().enumerate() {
            let dist = sq_dist(r, &rows[next]);
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
    }

    let mut centers: Vec<Vec<f64>> = seeded_from.iter().map(|&i| rows[i].clone()).collect();
    let mut labels = assign(&rows, &centers);
    for _ in 0..LLOYD_ITERATIONS {
        update_centers(&rows, &labels, &mut centers);
        let next = assign(&rows, &centers);
        if next == labels {
            break;
        }
        labels = next;
    }

    let mut responsibilities = DMatrix::zeros(n, m);
    for (i, &k) in labels.iter().enumerate() {
        responsibilities[(i, k)] = 1.0;
    }
    Ok(KmeansInit {
        centers,
        seeded_from,
        labels,
        responsibilities,
    })
}

fn assign(rows: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|r| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = sq_dist(r, c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Clusters that lost all members keep their previous center.
fn update_centers(rows: &[Vec<f64>], labels: &[usize], centers: &mut [Vec<f64>]) {
    let d = rows[0].len();
    let mut sums = vec![vec![0.0; d]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (r, &k) in rows.iter().zip(labels) {
        counts[k] += 1;
        for (s, v) in sums[k].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (k, c) in centers.iter_mut().enumerate() {
        if counts[k] > 0 {
            for (cv, s) in c.iter_mut().zip(&sums[k]) {
                *cv = s / counts[k] as f64;
            }
        }
    }
}
