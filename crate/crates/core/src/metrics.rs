//! Agreement between rankings.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("rankings cover different entity sets")]
    EntityMismatch,
    #[error("at least 2 entities are needed, found {0}")]
    TooFew(usize),
}

/// Kendall tau-a between two rankings of the same entities, each given as
/// ids in rank order: `(concordant − discordant) / (n(n−1)/2)`.
pub fn kendall_tau<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::EntityMismatch);
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricError::TooFew(n));
    }
    let pos_b: HashMap<&str, usize> = b.iter().enumerate().map(|(i, id)| (id.as_ref(), i)).collect();
    if pos_b.len() != n {
        return Err(MetricError::EntityMismatch);
    }
    let mapped = a
        .iter()
        .map(|id| pos_b.get(id.as_ref()).copied())
        .collect::<Option<Vec<usize>>>()
        .ok_or(MetricError::EntityMismatch)?;
    let mut seen = vec![false; n];
    for &p in &mapped {
        if std::mem::replace(&mut seen[p], true) {
            return Err(MetricError::EntityMismatch);
        }
    }
    let mut score: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            score += if mapped[i] < mapped[j] { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}
