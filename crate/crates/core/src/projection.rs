//! 2D neighbour-preserving projection of weighted indicator vectors.
//!
//! Exact t-SNE: perplexity-calibrated Gaussian affinities in the input space,
//! Student-t affinities in the plane, gradient descent with momentum, gains
//! and early exaggeration. The start layout comes from the two leading
//! principal directions; only an axis without variance is filled with seeded
//! noise. Bit-identical rows are tied to one shared point throughout.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, NormalizedMatrix};
use crate::scoring::{ScoreError, WeightScheme};

const EARLY_EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const INIT_STD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("at least 4 entities are needed for a projection, found {0}")]
    TooFewEntities(usize),
    #[error("perplexity {perplexity} is too large for {n} entities (must be below n/3); try {suggested}")]
    PerplexityTooLarge {
        perplexity: f64,
        n: usize,
        suggested: f64,
    },
    #[error("invalid projection parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ProjectionParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            perplexity: 10.0,
            iterations: 500,
            seed: 42,
        }
    }
}

impl ProjectionParams {
    pub fn check(&self, n: usize) -> Result<(), ProjectionError> {
        if n < 4 {
            return Err(ProjectionError::TooFewEntities(n));
        }
        if !(self.perplexity > 0.0 && self.perplexity.is_finite()) {
            return Err(ProjectionError::InvalidParams(format!(
                "perplexity must be positive, got {}",
                self.perplexity
            )));
        }
        if self.iterations == 0 {
            return Err(ProjectionError::InvalidParams("iterations must be at least 1".into()));
        }
        if self.perplexity >= n as f64 / 3.0 {
            return Err(ProjectionError::PerplexityTooLarge {
                perplexity: self.perplexity,
                n,
                suggested: ((n as f64 - 1.0) / 3.0).floor().max(1.0),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectedPoint {
    pub entity_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectionResult {
    pub scheme_id: String,
    pub points: Vec<ProjectedPoint>,
    pub params: ProjectionParams,
}

/// Weighted input rows `v_ij = w_j · d_ij`, using each entity's own weight
/// vector for per-type schemes.
pub fn weighted_rows(nm: &NormalizedMatrix, ds: &Dataset, scheme: &WeightScheme) -> Result<Vec<Vec<f64>>, ScoreError> {
    scheme.validate(ds.m())?;
    let (weights, _) = scheme.entity_weights(ds);
    Ok(weights
        .iter()
        .enumerate()
        .map(|(i, w)| w.iter().zip(nm.row(i)).map(|(a, b)| a * b).collect())
        .collect())
}

pub fn project(
    nm: &NormalizedMatrix,
    ds: &Dataset,
    scheme: &WeightScheme,
    params: &ProjectionParams,
) -> Result<ProjectionResult, ProjectionError> {
    params.check(ds.n())?;
    let rows = weighted_rows(nm, ds, scheme)?;
    let coords = embed(&rows, params)?;
    Ok(ProjectionResult {
        scheme_id: scheme.id.clone(),
        points: ds
            .entities()
            .iter()
            .zip(coords)
            .map(|(e, [x, y])| ProjectedPoint {
                entity_id: e.id.clone(),
                x,
                y,
            })
            .collect(),
        params: *params,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional affinities `p_{j|i}` for one row of squared distances, with the
/// Gaussian precision tuned so the row entropy equals `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let n = dist.len();
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut p = vec![0.0; n];
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            p[j] = if j == i { 0.0 } else { (-(dist[j] - d_min) * beta).exp() };
            sum += p[j];
            weighted += (dist[j] - d_min) * p[j];
        }
        let entropy = sum.ln() + beta * weighted / sum;
        for v in &mut p {
            *v /= sum;
        }
        let diff = entropy - target;
        if diff.abs() < 1e-10 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Two leading principal directions of the centred rows, signs fixed so the
/// largest-magnitude loading is positive, scaled to a small spread.
fn pca_init(rows: &[Vec<f64>], seed: u64) -> Vec<[f64; 2]> {
    let n = rows.len();
    let m = rows[0].len();
    let mean: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centred = DMatrix::from_fn(n, m, |i, j| rows[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut y = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, yi) in y.iter_mut().enumerate() {
            yi[axis] = centred.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
        }
    }
    let spread = |axis: usize| {
        let mu = y.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
        (y.iter().map(|p| (p[axis] - mu).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let spreads = [spread(0), spread(1)];
    let scale = if spreads[0] > 0.0 { INIT_STD / spreads[0] } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for axis in 0..2 {
        // an axis with no variance gets seeded noise so the points can separate
        let degenerate = spreads[0] == 0.0 || spreads[axis] <= 1e-12 * spreads[0];
        for p in &mut y {
            p[axis] = if degenerate {
                rng.random_range(-INIT_STD..INIT_STD)
            } else {
                p[axis] * scale
            };
        }
    }
    y
}

/// Embeds `rows` into the plane. Output is centred at the origin and fully
/// determined by the rows and `params`.
pub fn embed(rows: &[Vec<f64>], params: &ProjectionParams) -> Result<Vec<[f64; 2]>, ProjectionError> {
    let n = rows.len();
    params.check(n)?;

    let dist: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| sq_dist(a, b)).collect())
        .collect();
    let cond: Vec<Vec<f64>> = (0..n)
        .map(|i| conditional_row(&dist[i], i, params.perplexity))
        .collect();
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12))
                .collect()
        })
        .collect();

    let ties = duplicate_groups(rows);
    let mut y = pca_init(rows, params.seed);
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let learning_rate = (n as f64 / EARLY_EXAGGERATION / 4.0).max(50.0);
    let exaggeration_iters = EXAGGERATION_ITERS.min(params.iterations / 2);
    let mut num = vec![vec![0.0; n]; n];

    for iter in 0..params.iterations {
        let exaggeration = if iter < exaggeration_iters { EARLY_EXAGGERATION } else { 1.0 };
        let momentum = if iter < exaggeration_iters { 0.5 } else { 0.8 };

        let mut num_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i][j] = v;
                num[j][i] = v;
                num_sum += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i][j] / num_sum).max(1e-12);
                let f = 4.0 * (exaggeration * p[i][j] - q) * num[i][j];
                grad[0] += f * (y[i][0] - y[j][0]);
                grad[1] += f * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                gains[i][d] = if (grad[d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - learning_rate * gains[i][d] * grad[d];
            }
        }
        for (yi, ui) in y.iter_mut().zip(&update) {
            yi[0] += ui[0];
            yi[1] += ui[1];
        }
        for group in &ties {
            tie(&mut y, group);
            tie(&mut update, group);
            tie(&mut gains, group);
        }
        centre(&mut y);
    }
    centre(&mut y);
    Ok(y)
}

/// Index groups of bit-identical rows, singletons left out.
fn duplicate_groups(rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.iter().map(|v| v.to_bits()).collect()).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() > 1).collect()
}

/// Replaces the members of `group` by their mean, keeping identical rows on one point.
fn tie(v: &mut [[f64; 2]], group: &[usize]) {
    let k = group.len() as f64;
    let mean = [
        group.iter().map(|&i| v[i][0]).sum::<f64>() / k,
        group.iter().map(|&i| v[i][1]).sum::<f64>() / k,
    ];
    for &i in group {
        v[i] = mean;
    }
}

fn centre(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let cx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= cx;
        p[1] -= cy;
    }
}
