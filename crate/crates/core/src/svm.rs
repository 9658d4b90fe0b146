//! Soft-margin linear Ranking SVM over difference vectors.
//!
//! Minimizes `½‖w‖² + C·Σ max(0, 1 − yₜ·(w·xₜ))` with no bias term, using dual
//! coordinate descent on the box-constrained dual
//! `max Σα − ½‖Σ αₜ yₜ xₜ‖²,  0 ≤ αₜ ≤ C`. The coordinate order is reshuffled
//! every epoch from a seeded ChaCha stream, so results depend only on the
//! pairs and the config. Training stops once the duality gap falls below
//! `tol` relative to the primal objective, or after `max_iter` epochs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintSet, PairSet, TrainingPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no constraints")]
    NoConstraints,
    #[error("degenerate constraints: every difference vector is zero")]
    DegenerateConstraints,
    #[error("pair {index} has {found} components, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("pair {0} contains a non-finite component")]
    NonFinite(usize),
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("constraint set is not per-type")]
    NotPerType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TrainerConfig {
    /// Soft-margin penalty.
    pub c: f64,
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Maximum number of epochs over the pairs.
    #[serde(alias = "max_iter")]
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            c: 1.0,
            tol: 1e-6,
            max_iter: 10_000,
            seed: 42,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(TrainError::InvalidConfig("maxIter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    /// Primal objective at `w`.
    pub objective: f64,
    pub iterations: usize,
}

impl WeightVector {
    /// A fixed weight vector that did not come out of training.
    pub fn fixed(w: Vec<f64>) -> Self {
        WeightVector {
            w,
            objective: 0.0,
            iterations: 0,
        }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }
}

/// Result of [`train_with_trace`]: the weights plus the best-so-far primal
/// objective after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: WeightVector,
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn primal_objective(w: &[f64], pairs: &[TrainingPair], c: f64) -> f64 {
    let hinge: f64 = pairs
        .iter()
        .map(|p| (1.0 - f64::from(p.label) * dot(w, &p.diff)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

pub fn train(pairs: &[TrainingPair], cfg: &TrainerConfig) -> Result<WeightVector, TrainError> {
    train_with_trace(pairs, cfg).map(|o| o.weights)
}

pub fn train_with_trace(pairs: &[TrainingPair], cfg: &TrainerConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let first = pairs.first().ok_or(TrainError::NoConstraints)?;
    let m = first.diff.len();
    for (index, p) in pairs.iter().enumerate() {
        if p.diff.len() != m {
            return Err(TrainError::DimensionMismatch {
                index,
                expected: m,
                found: p.diff.len(),
            });
        }
        if p.diff.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(index));
        }
    }

    let sq_norms: Vec<f64> = pairs.iter().map(|p| dot(&p.diff, &p.diff)).collect();
    let mut active: Vec<usize> = (0..pairs.len()).filter(|&i| sq_norms[i] > 0.0).collect();
    if active.is_empty() {
        return Err(TrainError::DegenerateConstraints);
    }

    // zero-difference pairs sit at the upper bound: they add C to the dual
    // and a constant hinge of 1 to the primal
    let mut alpha: Vec<f64> = sq_norms
        .iter()
        .map(|&q| if q > 0.0 { 0.0 } else { cfg.c })
        .collect();
    let mut w = vec![0.0; m];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best_w = w.clone();
    let mut best_obj = primal_objective(&w, pairs, cfg.c);
    let mut trace = Vec::new();
    let mut epochs = 0;

    while epochs < cfg.max_iter {
        epochs += 1;
        active.shuffle(&mut rng);
        for &i in &active {
            let p = &pairs[i];
            let y = f64::from(p.label);
            let grad = y * dot(&w, &p.diff) - 1.0;
            let updated = (alpha[i] - grad / sq_norms[i]).clamp(0.0, cfg.c);
            let step = updated - alpha[i];
            if step != 0.0 {
                for (wj, xj) in w.iter_mut().zip(&p.diff) {
                    *wj += step * y * xj;
                }
                alpha[i] = updated;
            }
        }

        let primal = primal_objective(&w, pairs, cfg.c);
        if primal < best_obj {
            best_obj = primal;
            best_w.clone_from(&w);
        }
        trace.push(best_obj);
        let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
        if best_obj - dual <= cfg.tol * best_obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    debug_assert!(trace.windows(2).all(|t| t[1] <= t[0]));
    Ok(TrainOutcome {
        weights: WeightVector {
            w: best_w,
            objective: best_obj,
            iterations: epochs,
        },
        trace,
    })
}

/// Per-type training results. A type whose training fails is reported in
/// `failures` without affecting the others.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerTypeWeights {
    pub weights: BTreeMap<String, WeightVector>,
    pub failures: BTreeMap<String, TrainError>,
}

pub fn train_per_type(cs: &ConstraintSet, cfg: &TrainerConfig) -> Result<PerTypeWeights, TrainError> {
    let PairSet::PerType(map) = &cs.pairs else {
        return Err(TrainError::NotPerType);
    };
    cfg.validate()?;
    let results: Vec<(String, Result<WeightVector, TrainError>)> = map
        .par_iter()
        .map(|(label, pairs)| (label.clone(), train(pairs, cfg)))
        .collect();
    let mut out = PerTypeWeights::default();
    for (label, result) in results {
        match result {
            Ok(w) => {
                out.weights.insert(label, w);
            }
            Err(e) => {
                out.failures.insert(label, e);
            }
        }
    }
    Ok(out)
}
