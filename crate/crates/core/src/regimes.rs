//! Congestion regimes: K-Means over (congestion index, hour, day) of grid cells.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kmeans::{kmeans_best_of, KMeansError, KMeansModel, KMeansParams};
use crate::math;
use crate::matrix::Matrix;
use crate::spatiotemporal::CongestionCell;
use crate::trips::{normalize, NormStats};

/// Default number of regimes (free-flow, moderate, heavy, extreme).
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: usize,
    pub cells: usize,
    pub mean_congestion_index: f64,
    /// Up to three most frequent hours, most frequent first.
    pub dominant_hours: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionRegimes {
    /// Centroids live in the scaled feature space; regime 0 is the least congested.
    pub model: KMeansModel,
    pub scaler: NormStats,
    pub labels: Vec<usize>,
    pub summaries: Vec<RegimeSummary>,
}

pub fn regime_feature_names() -> Vec<String> {
    ["congestion_index", "hour", "day"].iter().map(|s| s.to_string()).collect()
}

fn raw_features(c: &CongestionCell) -> [f64; 3] {
    [c.congestion_index, f64::from(c.bin.hour), f64::from(c.bin.day)]
}

/// Z-score scaler that leaves constant columns unscaled instead of failing.
fn lenient_scaler(rows: &[[f64; 3]]) -> NormStats {
    let names = regime_feature_names();
    let m = rows.len().max(1) as f64;
    let mut mean = vec![0.0; 3];
    let mut std = vec![1.0; 3];
    for j in 0..3 {
        mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / m;
        let var = rows.iter().map(|r| (r[j] - mean[j]) * (r[j] - mean[j])).sum::<f64>() / m;
        let sd = math::sqrt(var);
        if sd > 0.0 {
            std[j] = sd;
        }
    }
    NormStats { names, mean, std }
}

/// Clusters cells into `k` regimes, ordered by ascending mean congestion index.
pub fn cluster_congestion(
    cells: &[CongestionCell],
    k: usize,
    seed: u64,
    params: &KMeansParams,
    restarts: usize,
) -> Result<CongestionRegimes, KMeansError> {
    let raw: Vec<[f64; 3]> = cells.iter().map(raw_features).collect();
    let scaler = lenient_scaler(&raw);
    let scaled: Vec<Vec<f64>> = raw.iter().map(|r| normalize(r, &scaler)).collect();
    let points = Matrix::from_rows(&scaled).unwrap_or_else(|| Matrix::zeros(0, 3));
    let fit = kmeans_best_of(&points, k, params, seed, restarts)?;

    let k = fit.model.k;
    let mut means = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (c, &l) in cells.iter().zip(&fit.labels) {
        means[l] += c.congestion_index;
        counts[l] += 1;
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        if *n > 0 {
            *m /= *n as f64;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| means[*a].total_cmp(&means[*b]).then(a.cmp(b)));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }

    let mut centroids = Matrix::zeros(0, fit.model.centroids.cols());
    for &old in &order {
        centroids.push_row(fit.model.centroids.row(old));
    }
    let labels: Vec<usize> = fit.labels.iter().map(|l| rank[*l]).collect();

    let summaries = order
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let mut hours = [0usize; 24];
            for (c, &l) in cells.iter().zip(&labels) {
                if l == new {
                    hours[c.bin.hour as usize] += 1;
                }
            }
            let mut ranked: Vec<u8> = (0..24u8).filter(|h| hours[*h as usize] > 0).collect();
            ranked.sort_by(|a, b| hours[*b as usize].cmp(&hours[*a as usize]).then(a.cmp(b)));
            ranked.truncate(3);
            RegimeSummary {
                regime: new,
                cells: counts[old],
                mean_congestion_index: means[old],
                dominant_hours: ranked,
            }
        })
        .collect();

    Ok(CongestionRegimes {
        model: KMeansModel {
            centroids,
            ..fit.model
        },
        scaler,
        labels,
        summaries,
    })
}
