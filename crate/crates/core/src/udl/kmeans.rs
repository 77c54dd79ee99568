//! Lloyd's k-means with seeded row initialization.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::{rng, Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub inertia: f64,
    /// Objective after initialization, then after each update/assign round.
    pub inertia_history: Vec<f64>,
    pub assignments: Vec<usize>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (ties go to the lower index) and the inertia.
fn assign(z: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(z.rows());
    let mut dists = Vec::with_capacity(z.rows());
    for row in z.iter_rows() {
        let (best, d) = centroids
            .iter_rows()
            .map(|c| sq_dist(row, c))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (j, d)| if d < acc.1 { (j, d) } else { acc },
            );
        labels.push(best);
        dists.push(d);
    }
    let inertia = dists.iter().sum();
    (labels, dists, inertia)
}

/// Cluster means; an empty cluster is moved onto the point currently
/// farthest from its own centroid.
fn update(z: &Matrix, labels: &[usize], dists: &[f64], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, z.cols());
    let mut counts = vec![0usize; k];
    for (row, &l) in z.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut dists = dists.to_vec();
    for (j, &count) in counts.iter().enumerate() {
        if count == 0 {
            let far = dists
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
                )
                .0;
            sums.row_mut(j).copy_from_slice(z.row(far));
            dists[far] = f64::NEG_INFINITY;
        } else {
            let n = count as f64;
            sums.row_mut(j).iter_mut().for_each(|s| *s /= n);
        }
    }
    sums
}

pub fn kmeans(z: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if z.rows() < k {
        return Err(Error::InsufficientData(format!(
            "{} points cannot form {k} clusters",
            z.rows()
        )));
    }
    let mut rng = rng::rng_for(seed, "kmeans-init");
    let init = index::sample(&mut rng, z.rows(), k).into_vec();
    let mut centroids = z.select_rows(&init)?;

    let (mut labels, mut dists, mut inertia) = assign(z, &centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iters {
        centroids = update(z, &labels, &dists, k);
        let (new_labels, new_dists, new_inertia) = assign(z, &centroids);
        history.push(new_inertia);
        let fixed = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        inertia = new_inertia;
        if fixed {
            break;
        }
    }
    Ok(KMeansModel {
        centroids,
        inertia,
        inertia_history: history,
        assignments: labels,
    })
}

/// `dist(z, c₀) − dist(z, c₁)`: positive when a point sits nearer `c₁`.
pub fn anomaly_score(z: &Matrix, km: &KMeansModel) -> Result<Vec<f64>> {
    if km.k() != 2 {
        return Err(Error::Config(format!(
            "anomaly scores need exactly 2 centroids, model has {}",
            km.k()
        )));
    }
    if z.cols() != km.centroids.cols() {
        return Err(Error::Dimension(format!(
            "points have {} dims, centroids {}",
            z.cols(),
            km.centroids.cols()
        )));
    }
    let (c0, c1) = (km.centroids.row(0), km.centroids.row(1));
    Ok(z.iter_rows()
        .map(|p| sq_dist(p, c0).sqrt() - sq_dist(p, c1).sqrt())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let z = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]]).unwrap();
        let km = kmeans(&z, 1, 0, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(km.centroids.row(0), &[2.0, 1.0]);
    }

    #[test]
    fn identical_points_have_zero_inertia() {
        let z = Matrix::from_rows(&[[0.5, 0.5]; 6]).unwrap();
        let km = kmeans(&z, 2, 3, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(km.inertia, 0.0);
        assert_eq!(km.inertia_history[1], 0.0);
    }

    #[test]
    fn too_few_rows() {
        let z = Matrix::zeros(1, 2);
        assert!(matches!(
            kmeans(&z, 2, 0, 10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn score_geometry() {
        let km = KMeansModel {
            centroids: Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap(),
            inertia: 0.0,
            inertia_history: vec![],
            assignments: vec![],
        };
        let z = Matrix::from_rows(&[[1.5, 2.0], [3.0, 4.0]]).unwrap();
        let s = anomaly_score(&z, &km).unwrap();
        assert_eq!(s, vec![0.0, 5.0]);

        let swapped = KMeansModel {
            centroids: Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap(),
            ..km.clone()
        };
        let t = anomaly_score(&z, &swapped).unwrap();
        assert!(s.iter().zip(&t).all(|(a, b)| *a == -*b));

        let three = KMeansModel {
            centroids: Matrix::zeros(3, 2),
            ..km
        };
        assert!(matches!(anomaly_score(&z, &three), Err(Error::Config(_))));
    }
}
