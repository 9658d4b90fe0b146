//! Rank scores, per-indicator contributions and entropy-based ratings.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintScheme, DragEvent};
use crate::data::{Dataset, NormalizedMatrix};
use crate::svm::WeightVector;

/// Number of breakpoints searched for; yields five ratings.
pub const BREAKPOINTS: usize = 4;

/// Split-quality comparisons closer than this are treated as ties.
pub const ENTROPY_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("scheme `{scheme}` has {found} weights, dataset has {expected} indicators")]
    DimensionMismatch {
        scheme: String,
        expected: usize,
        found: usize,
    },
    #[error("scheme `{scheme}` is malformed: {reason}")]
    InvalidScheme { scheme: String, reason: String },
    #[error("no entities to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Default,
    Local,
    Global,
    Type,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Default => "default",
            SchemeKind::Local => "local",
            SchemeKind::Global => "global",
            SchemeKind::Type => "type",
        }
    }
}

impl From<ConstraintScheme> for SchemeKind {
    fn from(s: ConstraintScheme) -> Self {
        match s {
            ConstraintScheme::Local => SchemeKind::Local,
            ConstraintScheme::Global => SchemeKind::Global,
            ConstraintScheme::Type => SchemeKind::Type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SchemeWeights {
    Single(WeightVector),
    PerType(BTreeMap<String, WeightVector>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightScheme {
    pub id: String,
    pub kind: SchemeKind,
    pub label: String,
    pub weights: SchemeWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_from: Option<DragEvent>,
}

pub const DEFAULT_SCHEME_ID: &str = "default";

pub fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

impl WeightScheme {
    /// The uniform `(1/m, ..., 1/m)` scheme every session starts from.
    pub fn default_for(m: usize) -> Self {
        WeightScheme {
            id: DEFAULT_SCHEME_ID.to_string(),
            kind: SchemeKind::Default,
            label: "Default".to_string(),
            weights: SchemeWeights::Single(WeightVector::fixed(uniform_weights(m))),
            created_from: None,
        }
    }

    pub fn validate(&self, m: usize) -> Result<(), ScoreError> {
        let invalid = |reason: &str| ScoreError::InvalidScheme {
            scheme: self.id.clone(),
            reason: reason.to_string(),
        };
        let check = |w: &WeightVector| {
            if w.w.len() != m {
                return Err(ScoreError::DimensionMismatch {
                    scheme: self.id.clone(),
                    expected: m,
                    found: w.w.len(),
                });
            }
            if w.w.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite weight"));
            }
            Ok(())
        };
        match (&self.weights, self.kind) {
            (SchemeWeights::PerType(map), SchemeKind::Type) => map.values().try_for_each(check),
            (SchemeWeights::PerType(_), _) => Err(invalid("only type schemes carry per-type weights")),
            (SchemeWeights::Single(_), SchemeKind::Type) => Err(invalid("type schemes need per-type weights")),
            (SchemeWeights::Single(w), SchemeKind::Default) => {
                check(w)?;
                if w.w != uniform_weights(m) {
                    return Err(invalid("default scheme must be uniform"));
                }
                Ok(())
            }
            (SchemeWeights::Single(w), _) => check(w),
        }
    }

    /// The weight vector applied to entities of `type_label`, if the scheme has one.
    pub fn weights_for(&self, type_label: &str) -> Option<&WeightVector> {
        match &self.weights {
            SchemeWeights::Single(w) => Some(w),
            SchemeWeights::PerType(map) => map.get(type_label),
        }
    }

    /// Per-entity weight vectors in dataset order, falling back to uniform
    /// weights for types the scheme does not cover. Returns the vectors and a
    /// warning per uncovered type.
    pub fn entity_weights(&self, ds: &Dataset) -> (Vec<Vec<f64>>, Vec<String>) {
        let uniform = uniform_weights(ds.m());
        let mut missing = BTreeSet::new();
        let rows = ds
            .entities()
            .iter()
            .map(|e| match self.weights_for(&e.type_label) {
                Some(w) => w.w.clone(),
                None => {
                    missing.insert(e.type_label.clone());
                    uniform.clone()
                }
            })
            .collect();
        let warnings = missing
            .into_iter()
            .map(|t| format!("scheme `{}` has no weights for type `{t}`; uniform weights used", self.id))
            .collect();
        (rows, warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoredEntity {
    pub entity_id: String,
    pub score: f64,
    /// `w_j · d_ij` per indicator; sums to `score`.
    pub contributions: Vec<f64>,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundedScore {
    pub entity_id: String,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatingSegmentation {
    /// Rounded-score thresholds, strictly increasing. A score `x` falls in the
    /// segment above every breakpoint `b` with `x > b`.
    pub breakpoints: Vec<f64>,
    pub rounded_scores: Vec<RoundedScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankingResult {
    pub scheme_id: String,
    /// Entities in rank order.
    pub entities: Vec<ScoredEntity>,
    pub segmentation: RatingSegmentation,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RankingResult {
    pub fn ranking(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.entity_id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ScoredEntity> {
        self.entities.iter().find(|e| e.entity_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    /// Entities in rank order, without ratings.
    pub entities: Vec<ScoredEntity>,
    pub warnings: Vec<String>,
}

/// Scores every entity under `scheme` and orders them by descending score,
/// ties broken by ascending id.
pub fn score(nm: &NormalizedMatrix, ds: &Dataset, scheme: &WeightScheme) -> Result<Scored, ScoreError> {
    scheme.validate(ds.m())?;
    let (weights, warnings) = scheme.entity_weights(ds);
    let mut entities: Vec<ScoredEntity> = ds
        .entities()
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(i, (e, w))| {
            let contributions: Vec<f64> = w.iter().zip(nm.row(i)).map(|(wj, dj)| wj * dj).collect();
            ScoredEntity {
                entity_id: e.id.clone(),
                score: contributions.iter().sum(),
                contributions,
                rank: 0,
                rating: None,
            }
        })
        .collect();
    entities.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    for (i, e) in entities.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(Scored { entities, warnings })
}

/// Rescales scores linearly onto `[0, 100]` and floors each to a multiple of 5.
/// If every score is equal, all round to 50.
pub fn round_scores(scored: &[ScoredEntity]) -> RatingSegmentation {
    let (min, max) = scored.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.score), hi.max(e.score))
    });
    let span = max - min;
    let rounded_scores = scored
        .iter()
        .map(|e| {
            let rescaled = if span > 0.0 {
                (e.score - min) / span * 100.0
            } else {
                50.0
            };
            RoundedScore {
                entity_id: e.entity_id.clone(),
                value: floor_to_five(rescaled),
            }
        })
        .collect();
    RatingSegmentation {
        breakpoints: Vec::new(),
        rounded_scores,
    }
}

fn floor_to_five(x: f64) -> u32 {
    let x = x.clamp(0.0, 100.0);
    ((x / 5.0).floor() as u32) * 5
}

/// Shannon entropy (natural log) of the empirical distribution of `values`.
pub fn shannon_entropy(values: &[u32]) -> f64 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `n_seg · H(seg)` for a run of distinct-value counts, via
/// `n ln n − Σ c ln c`.
fn scaled_entropy(counts: &[usize]) -> f64 {
    let xlnx = |c: usize| {
        let c = c as f64;
        if c > 0.0 {
            c * c.ln()
        } else {
            0.0
        }
    };
    let total: usize = counts.iter().sum();
    xlnx(total) - counts.iter().map(|&c| xlnx(c)).sum::<f64>()
}

/// Greedy entropy-minimizing segmentation of rounded scores.
///
/// Every distinct value except the largest is a candidate breakpoint `u`,
/// splitting its segment into `{x ≤ u}` and `{x > u}`. Each round picks the
/// unused candidate that minimizes the size-weighted entropy summed over all
/// segments, smaller `u` winning ties, until [`BREAKPOINTS`] are placed or
/// candidates run out.
pub fn entropy_split(rounded: &[u32]) -> Vec<f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in rounded {
        *counts.entry(v).or_default() += 1;
    }
    let values: Vec<u32> = counts.keys().copied().collect();
    let freq: Vec<usize> = counts.values().copied().collect();
    let k = values.len();

    // `cuts` holds indices i meaning "split between values[i] and values[i+1]"
    let mut cuts: BTreeSet<usize> = BTreeSet::new();
    for _ in 0..BREAKPOINTS {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..k.saturating_sub(1) {
            if cuts.contains(&cand) {
                continue;
            }
            let lo = cuts.range(..cand).next_back().map_or(0, |c| c + 1);
            let hi = cuts.range(cand..).next().copied().unwrap_or(k - 1);
            // change in n·(weighted entropy); the common 1/n factor does not move the argmin
            let delta = scaled_entropy(&freq[lo..=cand]) + scaled_entropy(&freq[cand + 1..=hi])
                - scaled_entropy(&freq[lo..=hi]);
            let delta = delta / rounded.len() as f64;
            if best.is_none_or(|(d, _)| delta < d - ENTROPY_TIE_EPS) {
                best = Some((delta, cand));
            }
        }
        match best {
            Some((_, cand)) => {
                cuts.insert(cand);
            }
            None => break,
        }
    }
    cuts.into_iter().map(|i| f64::from(values[i])).collect()
}

/// Rating for a rounded score: 1 for the top segment down to
/// `breakpoints.len() + 1` for the bottom one.
pub fn rating_for(value: u32, breakpoints: &[f64]) -> u8 {
    let above = breakpoints.iter().filter(|&&b| f64::from(value) > b).count();
    (breakpoints.len() + 1 - above) as u8
}

/// Fills in ratings for `scored` from `seg`, which must have been computed
/// from the same list.
pub fn assign_ratings(mut scored: Vec<ScoredEntity>, seg: &RatingSegmentation) -> Vec<ScoredEntity> {
    let lookup: BTreeMap<&str, u32> = seg
        .rounded_scores
        .iter()
        .map(|r| (r.entity_id.as_str(), r.value))
        .collect();
    for e in &mut scored {
        let value = lookup[e.entity_id.as_str()];
        e.rating = Some(rating_for(value, &seg.breakpoints));
    }
    scored
}

/// Scores, rounds, segments and rates in one pass.
pub fn rank(nm: &NormalizedMatrix, ds: &Dataset, scheme: &WeightScheme) -> Result<RankingResult, ScoreError> {
    let Scored { entities, warnings } = score(nm, ds, scheme)?;
    if entities.is_empty() {
        return Err(ScoreError::Empty);
    }
    let mut seg = round_scores(&entities);
    let rounded: Vec<u32> = seg.rounded_scores.iter().map(|r| r.value).collect();
    seg.breakpoints = entropy_split(&rounded);
    let entities = assign_ratings(entities, &seg);
    Ok(RankingResult {
        scheme_id: scheme.id.clone(),
        entities,
        segmentation: seg,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, Entity, Indicator, IndicatorSchema};
    use proptest::prelude::*;

    fn dataset(rows: &[(&str, &str, [f64; 2])]) -> (Dataset, NormalizedMatrix) {
        let schema = IndicatorSchema::new(
            "name",
            "type",
            vec![
                Indicator { name: "a".into(), unit: String::new() },
                Indicator { name: "b".into(), unit: String::new() },
            ],
        )
        .unwrap();
        let entities = rows
            .iter()
            .map(|(id, t, raw)| Entity {
                id: id.to_string(),
                name: id.to_string(),
                type_label: t.to_string(),
                raw: raw.to_vec(),
            })
            .collect();
        let ds = Dataset::new(schema, entities).unwrap();
        let nm = normalize(&ds);
        (ds, nm)
    }

    fn single(id: &str, kind: SchemeKind, w: Vec<f64>) -> WeightScheme {
        WeightScheme {
            id: id.into(),
            kind,
            label: id.into(),
            weights: SchemeWeights::Single(WeightVector::fixed(w)),
            created_from: None,
        }
    }

    fn scored(scores: &[f64]) -> Vec<ScoredEntity> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoredEntity {
                entity_id: format!("e{i}"),
                score: s,
                contributions: vec![s],
                rank: i + 1,
                rating: None,
            })
            .collect()
    }

    fn values(seg: &RatingSegmentation) -> Vec<u32> {
        seg.rounded_scores.iter().map(|r| r.value).collect()
    }

    #[test]
    fn identical_rows_tie_by_id() {
        let (ds, nm) = dataset(&[("b", "T", [1.0, 1.0]), ("a", "T", [1.0, 1.0]), ("c", "T", [0.0, 0.0])]);
        let out = score(&nm, &ds, &WeightScheme::default_for(2)).unwrap();
        let ids: Vec<&str> = out.entities.iter().map(|e| e.entity_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(out.entities[0].score, out.entities[1].score);
        assert_eq!(out.entities.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn single_axis_dominance() {
        // normalized rows come out as [0.2, 0.9] and [0.5, 0.1] given these extremes
        let (ds, nm) = dataset(&[
            ("x", "T", [0.2, 0.9]),
            ("y", "T", [0.5, 0.1]),
            ("lo", "T", [0.0, 0.0]),
            ("hi", "T", [1.0, 1.0]),
        ]);
        let out = score(&nm, &ds, &single("s", SchemeKind::Local, vec![1.0, 0.0])).unwrap();
        let x = out.entities.iter().find(|e| e.entity_id == "x").unwrap();
        let y = out.entities.iter().find(|e| e.entity_id == "y").unwrap();
        assert_eq!((x.score, y.score), (0.2, 0.5));
        assert!(y.rank < x.rank);
        assert_eq!(x.contributions, vec![0.2, 0.0]);
    }

    #[test]
    fn per_type_weights_apply_per_entity() {
        let (ds, nm) = dataset(&[
            ("a1", "A", [0.2, 0.9]),
            ("a2", "A", [0.7, 0.3]),
            ("b1", "B", [0.5, 0.1]),
            ("b2", "B", [1.0, 0.0]),
            ("c1", "C", [0.0, 1.0]),
        ]);
        let make = |wb: Vec<f64>| WeightScheme {
            id: "t".into(),
            kind: SchemeKind::Type,
            label: "t".into(),
            weights: SchemeWeights::PerType(BTreeMap::from([
                ("A".to_string(), WeightVector::fixed(vec![1.0, 0.0])),
                ("B".to_string(), WeightVector::fixed(wb)),
            ])),
            created_from: None,
        };
        let first = score(&nm, &ds, &make(vec![0.0, 1.0])).unwrap();
        let second = score(&nm, &ds, &make(vec![3.0, -2.0])).unwrap();
        for id in ["a1", "a2"] {
            let s1 = first.entities.iter().find(|e| e.entity_id == id).unwrap().score;
            let s2 = second.entities.iter().find(|e| e.entity_id == id).unwrap().score;
            assert_eq!(s1, s2);
        }
        // C has no weights and falls back to uniform
        assert_eq!(first.warnings.len(), 1);
        assert!(first.warnings[0].contains("`C`"));
        let c1 = first.entities.iter().find(|e| e.entity_id == "c1").unwrap();
        assert_eq!(c1.score, 0.5);
    }

    #[test]
    fn dimension_mismatch_names_scheme() {
        let (ds, nm) = dataset(&[("a", "T", [0.0, 1.0]), ("b", "T", [1.0, 0.0])]);
        let err = score(&nm, &ds, &single("mine", SchemeKind::Global, vec![1.0])).unwrap_err();
        assert!(err.to_string().contains("`mine`"));
        let err = score(&nm, &ds, &single("d", SchemeKind::Default, vec![0.9, 0.1])).unwrap_err();
        assert!(matches!(err, ScoreError::InvalidScheme { .. }));
    }

    #[test]
    fn rounding_examples() {
        let seg = round_scores(&scored(&[-3.0, 7.0, 2.0]));
        assert_eq!(values(&seg), vec![0, 100, 50]);
        let seg = round_scores(&scored(&[4.0, 4.0, 4.0]));
        assert_eq!(values(&seg), vec![50, 50, 50]);
        let seg = round_scores(&scored(&[0.0, 0.049, 0.051, 1.0]));
        assert_eq!(values(&seg), vec![0, 0, 5, 100]);
    }

    #[test]
    fn entropy_of_uniform_multiset() {
        for k in 1..=12u32 {
            let values: Vec<u32> = (0..k).flat_map(|v| [v * 5, v * 5, v * 5]).collect();
            assert!((shannon_entropy(&values) - f64::from(k).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_single_split() {
        assert_eq!(entropy_split(&[0, 0, 5, 5]), vec![0.0]);
        assert_eq!(entropy_split(&[50, 50]), Vec::<f64>::new());
        let seg = RatingSegmentation {
            breakpoints: vec![0.0],
            rounded_scores: vec![],
        };
        assert_eq!(rating_for(5, &seg.breakpoints), 1);
        assert_eq!(rating_for(0, &seg.breakpoints), 2);
    }

    #[test]
    fn five_ratings_from_many_values() {
        let rounded: Vec<u32> = (0..=20).map(|i| i * 5).collect();
        let bps = entropy_split(&rounded);
        assert_eq!(bps.len(), 4);
        assert!(bps.windows(2).all(|w| w[0] < w[1]));
        let ratings: BTreeSet<u8> = rounded.iter().map(|&v| rating_for(v, &bps)).collect();
        assert_eq!(ratings, BTreeSet::from([1, 2, 3, 4, 5]));
    }

    #[test]
    fn all_equal_scores_rate_one() {
        let (ds, nm) = dataset(&[("a", "T", [1.0, 1.0]), ("b", "T", [1.0, 1.0])]);
        let result = rank(&nm, &ds, &WeightScheme::default_for(2)).unwrap();
        assert!(result.segmentation.breakpoints.is_empty());
        assert!(result.entities.iter().all(|e| e.rating == Some(1)));
    }

    #[test]
    fn top_segment_rates_one() {
        let scores: Vec<f64> = (0..30).map(|i| f64::from(i * i % 37)).collect();
        let mut list = scored(&scores);
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut seg = round_scores(&list);
        seg.breakpoints = entropy_split(&values(&seg));
        let rated = assign_ratings(list, &seg);
        assert_eq!(rated[0].rating, Some(1));
        assert_eq!(rated.last().unwrap().rating, Some(seg.breakpoints.len() as u8 + 1));
    }

    proptest! {
        #[test]
        fn ranking_invariants(
            rows in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0usize..3), 2..40),
            w in prop::collection::vec(-2.0f64..2.0, 2),
            scale_exp in -6i32..7,
        ) {
            let types = ["A", "B", "C"];
            let owned: Vec<(String, &str, [f64; 2])> = rows
                .iter()
                .enumerate()
                .map(|(i, (a, b, t))| (format!("e{i:02}"), types[*t], [*a, *b]))
                .collect();
            let borrowed: Vec<(&str, &str, [f64; 2])> = owned.iter().map(|(i, t, r)| (i.as_str(), *t, *r)).collect();
            let (ds, nm) = dataset(&borrowed);
            let scheme = single("s", SchemeKind::Global, w.clone());
            let result = rank(&nm, &ds, &scheme).unwrap();
            let n = result.entities.len();
            for (i, e) in result.entities.iter().enumerate() {
                prop_assert_eq!(e.rank, i + 1);
                prop_assert!((e.score - e.contributions.iter().sum::<f64>()).abs() <= 1e-9);
                let row = nm.row_of(&e.entity_id).unwrap();
                for j in 0..2 {
                    prop_assert_eq!(e.contributions[j] > 0.0, w[j] * row[j] > 0.0);
                }
            }
            for pair in result.entities.windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
                prop_assert!(pair[0].rating <= pair[1].rating);
            }
            let distinct: BTreeSet<u32> = result.segmentation.rounded_scores.iter().map(|r| r.value).collect();
            prop_assert_eq!(result.segmentation.breakpoints.len(), (distinct.len() - 1).min(4));
            prop_assert!(n == ds.n());

            // positive (power-of-two, so exact) scaling keeps ranks and ratings
            let scale = 2f64.powi(scale_exp);
            let scaled = single("s", SchemeKind::Global, w.iter().map(|v| v * scale).collect());
            let other = rank(&nm, &ds, &scaled).unwrap();
            let key = |r: &RankingResult| r.entities.iter().map(|e| (e.entity_id.clone(), e.rating)).collect::<Vec<_>>();
            prop_assert_eq!(key(&result), key(&other));
        }

        #[test]
        fn rounding_is_idempotent(scores in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let first = round_scores(&scored(&scores));
            let as_scores: Vec<f64> = values(&first).into_iter().map(f64::from).collect();
            let second = round_scores(&scored(&as_scores));
            prop_assert_eq!(values(&first), values(&second));
            for v in values(&first) {
                prop_assert!(v % 5 == 0 && v <= 100);
            }
        }
    }
}
