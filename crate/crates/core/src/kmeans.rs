//! Lloyd's K-Means with K-Means++ seeding.
//!
//! The objective is the total within-cluster squared Euclidean distance.
//! Assignment ties go to the lowest centroid index; an empty cluster is
//! re-seeded to the point farthest from its current centroid so `k` is kept.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KMeansError {
    #[error("k = {k} exceeds the {distinct} distinct points available")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("initial centroids have {got} columns, points have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Objective values recorded during one Lloyd iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Objective right after assigning points to the current centroids.
    pub after_assign: f64,
    /// Objective with the same labels against the updated centroids.
    pub after_update: f64,
    pub max_shift: f64,
    /// An empty cluster was re-seeded in this iteration.
    pub reseeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub labels: Vec<usize>,
    pub trace: Vec<IterationRecord>,
}

/// Number of distinct rows.
pub fn distinct_count(points: &Matrix) -> usize {
    let mut rows: Vec<&[f64]> = points.iter_rows().collect();
    rows.sort_by(|a, b| lex_cmp(a, b));
    rows.dedup_by(|a, b| lex_cmp(a, b) == Ordering::Equal);
    rows.len()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// K-Means++ seeding: first centroid uniform, each next one drawn with
/// probability proportional to its squared distance from the nearest chosen
/// centroid. Always returns `k` distinct input points.
pub fn kmeans_init_pp(points: &Matrix, k: usize, seed: u64) -> Result<Matrix, KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(KMeansError::TooFewDistinct { k, distinct });
    }
    let n = points.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Matrix::zeros(0, points.cols());

    let first = rng.random_range(0..n);
    centroids.push_row(points.row(first));
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(first))).collect();

    while centroids.rows() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let chosen = pick.expect("a point with positive distance exists while k <= distinct");
        centroids.push_row(points.row(chosen));
        let c = points.row(chosen);
        for (i, p) in points.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c));
        }
    }
    Ok(centroids)
}

/// Index of the nearest centroid for each point; ties go to the lowest index.
pub fn kmeans_assign(points: &Matrix, centroids: &Matrix) -> Vec<usize> {
    points
        .iter_rows()
        .map(|p| nearest(p, centroids).0)
        .collect()
}

fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mean of each cluster. Empty clusters take the point farthest from its
/// current centroid (in `prev`), never reusing a point. Returns the new
/// centroids and the indices of re-seeded clusters.
pub fn kmeans_update(points: &Matrix, labels: &[usize], prev: &Matrix) -> (Matrix, Vec<usize>) {
    let k = prev.rows();
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = alloc::vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut reseeded = Vec::new();
    let mut taken: Vec<usize> = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for s in sums.row_mut(c) {
                *s /= n;
            }
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, (p, &l)) in points.iter_rows().zip(labels).enumerate() {
            if taken.contains(&i) {
                continue;
            }
            let d = sq_dist(p, prev.row(l));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            sums.row_mut(c).copy_from_slice(points.row(i));
            taken.push(i);
        } else {
            sums.row_mut(c).copy_from_slice(prev.row(c));
        }
        reseeded.push(c);
    }
    (sums, reseeded)
}

/// Total within-cluster squared distance of `labels` against `centroids`.
pub fn inertia(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    points
        .iter_rows()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum()
}

/// Seeds with K-Means++ and runs Lloyd iterations to convergence.
pub fn kmeans_fit(points: &Matrix, k: usize, params: &KMeansParams, seed: u64) -> Result<KMeansModel, KMeansError> {
    kmeans_fit_traced(points, k, params, seed).map(|f| f.model)
}

pub fn kmeans_fit_traced(
    points: &Matrix,
    k: usize,
    params: &KMeansParams,
    seed: u64,
) -> Result<KMeansFit, KMeansError> {
    let init = kmeans_init_pp(points, k, seed)?;
    let mut fit = kmeans_fit_from(points, init, params)?;
    fit.model.seed = seed;
    Ok(fit)
}

/// Lloyd iterations from explicit initial centroids.
pub fn kmeans_fit_from(points: &Matrix, init: Matrix, params: &KMeansParams) -> Result<KMeansFit, KMeansError> {
    if init.rows() == 0 {
        return Err(KMeansError::ZeroK);
    }
    if init.cols() != points.cols() {
        return Err(KMeansError::DimensionMismatch {
            expected: points.cols(),
            got: init.cols(),
        });
    }
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        let labels = kmeans_assign(points, &centroids);
        let after_assign = inertia(points, &centroids, &labels);
        let (next, reseeded) = kmeans_update(points, &labels, &centroids);
        let max_shift = centroids
            .iter_rows()
            .zip(next.iter_rows())
            .map(|(a, b)| math::sqrt(sq_dist(a, b)))
            .fold(0.0, f64::max);
        let after_update = inertia(points, &next, &labels);
        trace.push(IterationRecord {
            after_assign,
            after_update,
            max_shift,
            reseeded: !reseeded.is_empty(),
        });
        centroids = next;
        if max_shift < params.tol && reseeded.is_empty() {
            break;
        }
    }
    let labels = kmeans_assign(points, &centroids);
    let j = inertia(points, &centroids, &labels);
    Ok(KMeansFit {
        model: KMeansModel {
            k: centroids.rows(),
            centroids,
            inertia: j,
            iterations,
            seed: 0,
        },
        labels,
        trace,
    })
}

/// Best of `restarts` seeded fits (lowest inertia, earliest on ties).
pub fn kmeans_best_of(
    points: &Matrix,
    k: usize,
    params: &KMeansParams,
    seed: u64,
    restarts: usize,
) -> Result<KMeansFit, KMeansError> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) as u64 {
        let fit = kmeans_fit_traced(points, k, params, seed.wrapping_add(r))?;
        if best.as_ref().is_none_or(|b| fit.model.inertia < b.model.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Inertia for k = 1..=k_max (capped at the distinct-point count).
///
/// Each k takes the best of `restarts` seeded fits plus one warm start from the
/// previous k's centroids extended by the point farthest from them, so the
/// table never increases with k.
pub fn elbow(
    points: &Matrix,
    k_max: usize,
    params: &KMeansParams,
    seed: u64,
    restarts: usize,
) -> Result<Vec<(usize, f64)>, KMeansError> {
    let k_max = k_max.min(distinct_count(points));
    let mut table = Vec::with_capacity(k_max);
    let mut prev: Option<KMeansFit> = None;
    for k in 1..=k_max {
        let mut best = kmeans_best_of(points, k, params, seed, restarts)?;
        if let Some(p) = &prev {
            let mut init = p.model.centroids.clone();
            let far = points
                .iter_rows()
                .zip(&p.labels)
                .map(|(x, &l)| sq_dist(x, p.model.centroids.row(l)))
                .enumerate()
                .fold((0, -1.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc })
                .0;
            init.push_row(points.row(far));
            let mut warm = kmeans_fit_from(points, init, params)?;
            warm.model.seed = seed;
            if warm.model.inertia < best.model.inertia {
                best = warm;
            }
        }
        table.push((k, best.model.inertia));
        prev = Some(best);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_points_two_clusters() {
        let pts = m(&[[0.0, 0.0], [5.0, 5.0]]);
        let c = kmeans_init_pp(&pts, 2, 3).unwrap();
        let mut rows: Vec<Vec<f64>> = c.iter_rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| lex_cmp(a, b));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![5.0, 5.0]]);
    }

    #[test]
    fn too_many_clusters() {
        let pts = m(&[[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(
            kmeans_init_pp(&pts, 3, 0),
            Err(KMeansError::TooFewDistinct { k: 3, distinct: 2 })
        );
    }

    #[test]
    fn assign_exact_and_tie() {
        let cents = m(&[[0.0, 0.0], [2.0, 0.0], [9.0, 9.0]]);
        let pts = m(&[[9.0, 9.0], [1.0, 0.0]]);
        assert_eq!(kmeans_assign(&pts, &cents), vec![2, 0]);
    }

    #[test]
    fn update_means_and_singletons() {
        let pts = m(&[[0.0, 0.0], [2.0, 2.0], [7.0, 7.0]]);
        let prev = m(&[[0.0, 0.0], [7.0, 7.0]]);
        let (c, reseeded) = kmeans_update(&pts, &[0, 0, 1], &prev);
        assert_eq!(c.row(0), &[1.0, 1.0]);
        assert_eq!(c.row(1), &[7.0, 7.0]);
        assert!(reseeded.is_empty());
    }

    #[test]
    fn empty_cluster_takes_farthest_point() {
        let pts = m(&[[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]);
        let prev = m(&[[0.0, 0.0], [50.0, 50.0]]);
        let (c, reseeded) = kmeans_update(&pts, &[0, 0, 0], &prev);
        assert_eq!(reseeded, vec![1]);
        assert_eq!(c.row(1), &[10.0, 0.0]);
    }

    #[test]
    fn exact_locations_converge_in_one_iteration() {
        let pts = m(&[[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [3.0, 3.0], [8.0, 1.0]]);
        let model = kmeans_fit(&pts, 3, &KMeansParams::default(), 11).unwrap();
        assert_eq!(model.inertia, 0.0);
        assert_eq!(model.iterations, 1);
    }

    #[test]
    fn single_cluster_is_global_mean() {
        let pts = m(&[[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]]);
        let model = kmeans_fit(&pts, 1, &KMeansParams::default(), 0).unwrap();
        assert_eq!(model.centroids.row(0), &[2.0, 2.0]);
        // total variance · m = Σ‖x − mean‖²
        assert!((model.inertia - (8.0 + 4.0 + 20.0)).abs() < 1e-12);
    }

    #[test]
    fn elbow_is_nonincreasing() {
        let pts = m(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.2, 5.1], [9.0, 0.0], [9.0, 0.3], [2.0, 8.0]]);
        let t = elbow(&pts, 10, &KMeansParams::default(), 1, 3).unwrap();
        assert_eq!(t.len(), 7);
        assert!(t.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(t.last().unwrap().1, 0.0);
    }
}
