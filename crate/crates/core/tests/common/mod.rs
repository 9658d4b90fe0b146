//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use dragrank_core::{ingest_str, normalize, Dataset, NormalizedMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TYPES: [&str; 4] = ["Large", "Joint", "City", "Rural"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dataset with ids `e00..`, types cycling through [`TYPES`] and
/// indicator values drawn uniformly from [0, 100).
pub fn synthetic(n: usize, m: usize, seed: u64) -> (Dataset, NormalizedMatrix) {
    let mut r = rng(seed);
    let mut csv = String::from("id,type");
    for j in 0..m {
        csv.push_str(&format!(",x{j}"));
    }
    csv.push('\n');
    for i in 0..n {
        csv.push_str(&format!("e{i:02},{}", TYPES[i % TYPES.len()]));
        for _ in 0..m {
            csv.push_str(&format!(",{}", r.random_range(0.0..100.0)));
        }
        csv.push('\n');
    }
    let ds = ingest_str(&csv).expect("synthetic csv");
    let nm = normalize(&ds);
    (ds, nm)
}

/// Min-max normalization written out longhand.
pub fn normalized_column(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Ids ordered by descending `score(id)`, ties by id.
pub fn ranking_by(ids: &[String], score: impl Fn(&str) -> f64) -> Vec<String> {
    let mut out = ids.to_vec();
    out.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.cmp(b)));
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kendall tau-a by counting pair orders through rank positions.
pub fn tau_oracle(a: &[String], b: &[String]) -> f64 {
    let pa: HashMap<&str, i64> = a.iter().enumerate().map(|(i, s)| (s.as_str(), i as i64)).collect();
    let pb: HashMap<&str, i64> = b.iter().enumerate().map(|(i, s)| (s.as_str(), i as i64)).collect();
    let ids: Vec<&str> = a.iter().map(String::as_str).collect();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for x in 0..ids.len() {
        for y in 0..ids.len() {
            if x == y {
                continue;
            }
            let s = (pa[ids[x]] - pa[ids[y]]) * (pb[ids[x]] - pb[ids[y]]);
            if s > 0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (concordant + discordant) as f64
}

fn entropy_of(segment: &[u32]) -> f64 {
    let mut counts: HashMap<u32, f64> = HashMap::new();
    for v in segment {
        *counts.entry(*v).or_default() += 1.0;
    }
    let n = segment.len() as f64;
    counts.values().map(|c| -(c / n) * (c / n).ln()).sum()
}

/// Size-weighted entropy of `values` cut at `breakpoints` (`x ≤ b` goes below `b`).
pub fn segmented_entropy(values: &[u32], breakpoints: &[u32]) -> f64 {
    let mut bps = breakpoints.to_vec();
    bps.sort_unstable();
    let mut segments: Vec<Vec<u32>> = vec![Vec::new(); bps.len() + 1];
    for &v in values {
        let seg = bps.iter().filter(|&&b| v > b).count();
        segments[seg].push(v);
    }
    let n = values.len() as f64;
    segments
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.len() as f64 / n * entropy_of(s))
        .sum()
}

/// Replays the greedy split step by step, rebuilding every segment from the
/// raw values at each candidate.
pub fn entropy_split_oracle(values: &[u32], max_breaks: usize, tie_eps: f64) -> Vec<f64> {
    let mut distinct: Vec<u32> = values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let candidates: Vec<u32> = distinct[..distinct.len().saturating_sub(1)].to_vec();
    let mut chosen: Vec<u32> = Vec::new();
    while chosen.len() < max_breaks {
        let mut best: Option<(f64, u32)> = None;
        for &u in &candidates {
            if chosen.contains(&u) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(u);
            let h = segmented_entropy(values, &trial);
            match best {
                Some((bh, _)) if h >= bh - tie_eps => {}
                _ => best = Some((h, u)),
            }
        }
        match best {
            Some((_, u)) => chosen.push(u),
            None => break,
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(f64::from).collect()
}

/// Lloyd's k-means with farthest-point initialisation; returns cluster labels.
pub fn kmeans(points: &[[f64; 2]], k: usize, iterations: usize) -> Vec<usize> {
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut centres = vec![points[0]];
    while centres.len() < k {
        let far = points
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let da = centres.iter().map(|&c| d2(a, c)).fold(f64::INFINITY, f64::min);
                let db = centres.iter().map(|&c| d2(b, c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centres.push(far);
    }
    let mut labels = vec![0; points.len()];
    for _ in 0..iterations {
        for (i, &p) in points.iter().enumerate() {
            labels[i] = (0..k).min_by(|&a, &b| d2(p, centres[a]).total_cmp(&d2(p, centres[b]))).unwrap();
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<[f64; 2]> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
            if !members.is_empty() {
                let len = members.len() as f64;
                *centre = [
                    members.iter().map(|p| p[0]).sum::<f64>() / len,
                    members.iter().map(|p| p[1]).sum::<f64>() / len,
                ];
            }
        }
    }
    labels
}

/// Fraction of points whose cluster's majority truth label matches their own.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for (&l, &t) in labels.iter().zip(truth) {
        *counts.entry((l, t)).or_default() += 1;
    }
    let clusters: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    let majority: usize = clusters
        .iter()
        .map(|&c| counts.iter().filter(|((l, _), _)| *l == c).map(|(_, &n)| n).max().unwrap_or(0))
        .sum();
    majority as f64 / labels.len() as f64
}
