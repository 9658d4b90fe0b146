//! Turns a drag interaction into labeled pairwise difference vectors.
//!
//! Three derivations exist, one per weight scheme:
//!
//! * **local**: the dragged entity and its five nearest neighbours in the
//!   post-drag ranking, all ordered pairs among them;
//! * **global**: up to six entities sampled from above and six from below the
//!   drop position, allocated across type labels in proportion to their
//!   frequency in each segment, each paired with the dragged entity;
//! * **type**: for every type label, adjacent-pair constraints from the
//!   per-type ranking around the drop position.
//!
//! Each emitted pair is followed by its mirror (negated diff and label) except
//! in the local scheme, where the full set of ordered pairs already contains it.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, NormalizedMatrix};

/// Number of marked rows used to build local constraints, and the per-side
/// sampling budget of the global scheme.
pub const MARKED_ROWS: usize = 6;

/// Half-width of the per-type adjacent-pair window (3 above, 3 below).
const TYPE_WINDOW_HALF: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("insufficient entities: need at least 2, found {0}")]
    InsufficientEntities(usize),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("rank {rank} out of range 1..={n}")]
    RankOutOfRange { rank: usize, n: usize },
    #[error("fromRank {given} does not match position {actual} of `{id}` in the base ranking")]
    FromRankMismatch { id: String, given: usize, actual: usize },
    #[error("base ranking does not cover the dataset's entities")]
    RankingMismatch,
    #[error("no trainable type")]
    NoTrainableType,
}

/// The analyst's interaction: `entity_id` moved from `from_rank` to `to_rank`
/// (both 1-based) in `base_ranking`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DragEvent {
    pub entity_id: String,
    pub from_rank: usize,
    pub to_rank: usize,
    pub base_ranking: Vec<String>,
}

impl DragEvent {
    /// Builds a drag, filling `from_rank` from the entity's position in `base_ranking`.
    pub fn new(
        entity_id: impl Into<String>,
        to_rank: usize,
        base_ranking: Vec<String>,
    ) -> Result<Self, ConstraintError> {
        let entity_id = entity_id.into();
        let from = base_ranking
            .iter()
            .position(|id| *id == entity_id)
            .ok_or_else(|| ConstraintError::UnknownEntity(entity_id.clone()))?;
        let drag = DragEvent {
            entity_id,
            from_rank: from + 1,
            to_rank,
            base_ranking,
        };
        drag.validate()?;
        Ok(drag)
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        let n = self.base_ranking.len();
        if n < 2 {
            return Err(ConstraintError::InsufficientEntities(n));
        }
        let actual = self
            .base_ranking
            .iter()
            .position(|id| *id == self.entity_id)
            .ok_or_else(|| ConstraintError::UnknownEntity(self.entity_id.clone()))?
            + 1;
        for rank in [self.from_rank, self.to_rank] {
            if rank == 0 || rank > n {
                return Err(ConstraintError::RankOutOfRange { rank, n });
            }
        }
        if actual != self.from_rank {
            return Err(ConstraintError::FromRankMismatch {
                id: self.entity_id.clone(),
                given: self.from_rank,
                actual,
            });
        }
        Ok(())
    }

    /// The base ranking with the dragged entity moved to `to_rank`.
    pub fn post_ranking(&self) -> Vec<String> {
        let mut ranking = self.base_ranking.clone();
        let moved = ranking.remove(self.from_rank - 1);
        ranking.insert(self.to_rank - 1, moved);
        ranking
    }

    fn check_against(&self, nm: &NormalizedMatrix) -> Result<(), ConstraintError> {
        self.validate()?;
        if self.base_ranking.len() != nm.n() {
            return Err(ConstraintError::RankingMismatch);
        }
        let mut seen = HashSet::with_capacity(nm.n());
        for id in &self.base_ranking {
            if nm.position(id).is_none() || !seen.insert(id.as_str()) {
                return Err(ConstraintError::RankingMismatch);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintScheme {
    Local,
    Global,
    Type,
}

impl ConstraintScheme {
    pub const ALL: [ConstraintScheme; 3] = [Self::Local, Self::Global, Self::Type];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::Global => "global",
            Self::Type => "type",
        }
    }
}

impl std::fmt::Display for ConstraintScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ConstraintScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Self::Local),
            "global" => Ok(Self::Global),
            "type" => Ok(Self::Type),
            other => Err(format!("unknown scheme `{other}` (expected local, global or type)")),
        }
    }
}

/// Relation of a pair (or an entity) to the dragged entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleRole {
    /// Ranked above the dragged entity.
    PositiveSample,
    /// Ranked below the dragged entity.
    NegativeSample,
    /// A pair between two entities that are both distinct from the dragged one.
    Context,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingPair {
    pub diff: Vec<f64>,
    pub label: i8,
    pub left_id: String,
    pub right_id: String,
    pub role: SampleRole,
    /// True for the negated copy of another emitted pair.
    pub mirrored: bool,
}

impl TrainingPair {
    fn between(
        nm: &NormalizedMatrix,
        left: &str,
        right: &str,
        label: i8,
        role: SampleRole,
        mirrored: bool,
    ) -> Self {
        let l = nm.row_of(left).expect("validated id");
        let r = nm.row_of(right).expect("validated id");
        TrainingPair {
            diff: l.iter().zip(r).map(|(a, b)| a - b).collect(),
            label,
            left_id: left.to_string(),
            right_id: right.to_string(),
            role,
            mirrored,
        }
    }

    /// Appends this pair and its mirror.
    fn push_with_mirror(
        out: &mut Vec<TrainingPair>,
        nm: &NormalizedMatrix,
        left: &str,
        right: &str,
        label: i8,
        role: SampleRole,
    ) {
        out.push(Self::between(nm, left, right, label, role, false));
        out.push(Self::between(nm, right, left, -label, role, true));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PairSet {
    Flat(Vec<TrainingPair>),
    PerType(BTreeMap<String, Vec<TrainingPair>>),
}

impl PairSet {
    pub fn iter(&self) -> Box<dyn Iterator<Item = &TrainingPair> + '_> {
        match self {
            PairSet::Flat(pairs) => Box::new(pairs.iter()),
            PairSet::PerType(map) => Box::new(map.values().flatten()),
        }
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConstraintSet {
    pub scheme: ConstraintScheme,
    pub pairs: PairSet,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub source_drag: DragEvent,
}

impl ConstraintSet {
    /// Positive/negative role of every non-dragged entity that appears in a
    /// pair, by which side of the drop position it sits on.
    pub fn sample_roles(&self) -> BTreeMap<String, SampleRole> {
        let post = self.source_drag.post_ranking();
        let drop = self.source_drag.to_rank - 1;
        let mut roles = BTreeMap::new();
        for pair in self.pairs.iter() {
            for id in [&pair.left_id, &pair.right_id] {
                if *id == self.source_drag.entity_id || roles.contains_key(id) {
                    continue;
                }
                let pos = post.iter().position(|p| p == id).expect("pair ids come from the ranking");
                let role = if pos < drop {
                    SampleRole::PositiveSample
                } else {
                    SampleRole::NegativeSample
                };
                roles.insert(id.clone(), role);
            }
        }
        roles
    }
}

fn side_of(pos: usize, drop: usize) -> SampleRole {
    if pos < drop {
        SampleRole::PositiveSample
    } else {
        SampleRole::NegativeSample
    }
}

/// Local scheme: all ordered pairs over the dragged entity plus its five
/// nearest post-drag neighbours (two above, three below, shifted at the ends).
pub fn derive_local(drag: &DragEvent, nm: &NormalizedMatrix) -> Result<ConstraintSet, ConstraintError> {
    drag.check_against(nm)?;
    let post = drag.post_ranking();
    let n = post.len();
    let width = n.min(MARKED_ROWS);
    let drop = drag.to_rank - 1;
    let start = drop.saturating_sub(2).min(n - width);
    let marked = &post[start..start + width];

    let mut pairs = Vec::with_capacity(width * (width - 1));
    for (a, left) in marked.iter().enumerate() {
        for (b, right) in marked.iter().enumerate() {
            if a == b {
                continue;
            }
            let role = if *left == drag.entity_id {
                side_of(start + b, drop)
            } else if *right == drag.entity_id {
                side_of(start + a, drop)
            } else {
                SampleRole::Context
            };
            let label = if a < b { 1 } else { -1 };
            pairs.push(TrainingPair::between(nm, left, right, label, role, a > b));
        }
    }
    Ok(ConstraintSet {
        scheme: ConstraintScheme::Local,
        pairs: PairSet::Flat(pairs),
        warnings: Vec::new(),
        source_drag: drag.clone(),
    })
}

/// Splits `budget` across labels in proportion to `counts` with
/// largest-remainder rounding. Remainder ties go to the larger count, then to
/// the smaller label.
pub fn proportional_allocation<'a>(
    counts: &BTreeMap<&'a str, usize>,
    budget: usize,
) -> BTreeMap<&'a str, usize> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return counts.keys().map(|&k| (k, 0)).collect();
    }
    let budget = budget.min(total);
    let mut alloc: BTreeMap<&str, usize> = counts
        .iter()
        .map(|(&k, &c)| (k, budget * c / total))
        .collect();
    let assigned: usize = alloc.values().sum();
    // remainders as exact integers over the common denominator `total`
    let mut order: Vec<(&str, usize, usize)> = counts
        .iter()
        .map(|(&k, &c)| (k, (budget * c) % total, c))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    for (label, _, _) in order.into_iter().take(budget - assigned) {
        *alloc.get_mut(label).expect("label present") += 1;
    }
    alloc
}

/// Samples up to [`MARKED_ROWS`] entities from `segment` (ordered nearest to
/// the drop position first), proportionally by type.
fn sample_segment<'a>(ds: &Dataset, segment: &[&'a String]) -> Vec<&'a String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in segment {
        *counts.entry(type_of(ds, id)).or_default() += 1;
    }
    let alloc = proportional_allocation(&counts, MARKED_ROWS.min(segment.len()));
    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    segment
        .iter()
        .filter(|id| {
            let t = type_of(ds, id);
            let used = taken.entry(t).or_default();
            if *used < alloc[t] {
                *used += 1;
                true
            } else {
                false
            }
        })
        .copied()
        .collect()
}

fn type_of<'d>(ds: &'d Dataset, id: &str) -> &'d str {
    ds.entity(id)
        .map(|e| e.type_label.as_str())
        .expect("validated id")
}

/// Global scheme: type-proportional samples from above and below the drop
/// position, each paired with the dragged entity.
pub fn derive_global(
    drag: &DragEvent,
    ds: &Dataset,
    nm: &NormalizedMatrix,
) -> Result<ConstraintSet, ConstraintError> {
    drag.check_against(nm)?;
    let post = drag.post_ranking();
    let drop = drag.to_rank - 1;
    let dragged = drag.entity_id.as_str();

    let above: Vec<&String> = post[..drop].iter().rev().collect();
    let below: Vec<&String> = post[drop + 1..].iter().collect();
    let mut sampled_above = sample_segment(ds, &above);
    sampled_above.reverse();
    let sampled_below = sample_segment(ds, &below);

    let mut pairs = Vec::with_capacity(2 * (sampled_above.len() + sampled_below.len()));
    for q in sampled_above {
        TrainingPair::push_with_mirror(&mut pairs, nm, q, dragged, 1, SampleRole::PositiveSample);
    }
    for p in sampled_below {
        TrainingPair::push_with_mirror(&mut pairs, nm, p, dragged, -1, SampleRole::NegativeSample);
    }
    Ok(ConstraintSet {
        scheme: ConstraintScheme::Global,
        pairs: PairSet::Flat(pairs),
        warnings: Vec::new(),
        source_drag: drag.clone(),
    })
}

/// 1-based window `[start, end]` of up to `2 * TYPE_WINDOW_HALF + 1` positions
/// centred on `center` in a ranking of `len`, shifted inward at the ends.
pub fn type_window(center: usize, len: usize) -> (usize, usize) {
    let size = len.min(2 * TYPE_WINDOW_HALF + 1);
    let center = center.clamp(1, len);
    let start = center
        .saturating_sub(TYPE_WINDOW_HALF)
        .max(1)
        .min(len - size + 1);
    (start, start + size - 1)
}

/// Type scheme: one adjacent-pair constraint set per type label.
pub fn derive_type(
    drag: &DragEvent,
    ds: &Dataset,
    nm: &NormalizedMatrix,
) -> Result<ConstraintSet, ConstraintError> {
    drag.check_against(nm)?;
    let post = drag.post_ranking();
    let drop = drag.to_rank - 1;

    let mut map = BTreeMap::new();
    let mut warnings = Vec::new();
    for label in ds.type_labels() {
        let per_type: Vec<(usize, &String)> = post
            .iter()
            .enumerate()
            .filter(|(_, id)| type_of(ds, id) == label)
            .collect();
        if per_type.len() < 2 {
            warnings.push(format!(
                "type `{label}` has {} entity; at least 2 are needed, skipped",
                per_type.len()
            ));
            continue;
        }
        // insertion point of the drop position in this type's ranking
        let center = 1 + per_type.iter().filter(|(pos, _)| *pos < drop).count();
        let (start, end) = type_window(center, per_type.len());
        let mut pairs = Vec::with_capacity(2 * (end - start));
        for t in start..end {
            let (pos_hi, hi) = per_type[t - 1];
            let (pos_lo, lo) = per_type[t];
            let role = if *hi == drag.entity_id {
                side_of(pos_lo, drop)
            } else if *lo == drag.entity_id {
                side_of(pos_hi, drop)
            } else {
                SampleRole::Context
            };
            TrainingPair::push_with_mirror(&mut pairs, nm, hi, lo, 1, role);
        }
        map.insert(label.to_string(), pairs);
    }
    if map.is_empty() {
        return Err(ConstraintError::NoTrainableType);
    }
    Ok(ConstraintSet {
        scheme: ConstraintScheme::Type,
        pairs: PairSet::PerType(map),
        warnings,
        source_drag: drag.clone(),
    })
}

pub fn derive(
    scheme: ConstraintScheme,
    drag: &DragEvent,
    ds: &Dataset,
    nm: &NormalizedMatrix,
) -> Result<ConstraintSet, ConstraintError> {
    match scheme {
        ConstraintScheme::Local => derive_local(drag, nm),
        ConstraintScheme::Global => derive_global(drag, ds, nm),
        ConstraintScheme::Type => derive_type(drag, ds, nm),
    }
}
