//! Session state shared by the HTTP service and the script runner.
//!
//! A session owns one dataset and an ordered list of saved weight schemes,
//! starting with the uniform default. A drag produces a preview holding one
//! candidate per constraint scheme; saving consumes the preview and appends
//! the chosen candidate. Every drag and save is recorded in the audit log, and
//! replaying that log on the same dataset and config reproduces the session.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{self, ConstraintError, ConstraintScheme, ConstraintSet, DragEvent, SampleRole};
use crate::data::{normalize, Dataset, NormalizedMatrix};
use crate::projection::{self, ProjectionError, ProjectionParams, ProjectionResult};
use crate::scoring::{self, RankingResult, SchemeKind, SchemeWeights, ScoreError, WeightScheme};
use crate::svm::{self, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    NotFound,
    Conflict,
    Internal,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid drag: {0}")]
    InvalidDrag(#[source] ConstraintError),
    #[error("no pending preview to save")]
    NoPendingPreview,
    #[error("the {which} scheme could not be trained for this drag: {reason}")]
    SchemeUnavailable { which: ConstraintScheme, reason: String },
    #[error("comparison needs at least one saved scheme beyond the default")]
    NothingToCompare,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

impl SessionError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SessionError::UnknownEntity(_) | SessionError::UnknownScheme(_) => ErrorKind::NotFound,
            SessionError::InvalidDrag(_) => ErrorKind::BadRequest,
            SessionError::NoPendingPreview
            | SessionError::SchemeUnavailable { .. }
            | SessionError::NothingToCompare => ErrorKind::Conflict,
            SessionError::Projection(ProjectionError::TooFewEntities(_) | ProjectionError::InvalidParams(_)) => {
                ErrorKind::BadRequest
            }
            SessionError::Score(_) | SessionError::Projection(_) => ErrorKind::Internal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SessionConfig {
    pub trainer: TrainerConfig,
    pub projection: ProjectionParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DragRequest {
    pub entity_id: String,
    pub to_rank: usize,
    /// If given, must match the entity's position in the base ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_rank: Option<usize>,
    /// Scheme whose ranking the drag was made on; the latest saved scheme by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_scheme: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Candidate {
    pub scheme: WeightScheme,
    pub result: RankingResult,
    pub constraints: ConstraintSet,
    /// Types whose per-type training failed, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Preview {
    pub drag: DragEvent,
    pub local: Option<Candidate>,
    pub global: Option<Candidate>,
    #[serde(rename = "type")]
    pub type_: Option<Candidate>,
    /// Why a slot is empty, keyed by scheme name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

impl Preview {
    pub fn slot(&self, which: ConstraintScheme) -> Option<&Candidate> {
        match which {
            ConstraintScheme::Local => self.local.as_ref(),
            ConstraintScheme::Global => self.global.as_ref(),
            ConstraintScheme::Type => self.type_.as_ref(),
        }
    }

    fn take_slot(&mut self, which: ConstraintScheme) -> Option<Candidate> {
        match which {
            ConstraintScheme::Local => self.local.take(),
            ConstraintScheme::Global => self.global.take(),
            ConstraintScheme::Type => self.type_.take(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "camelCase")]
pub enum AuditAction {
    Drag { drag: DragEvent },
    Save { which: ConstraintScheme, label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub action: AuditAction,
}

impl AuditEntry {
    fn now(action: AuditAction) -> Self {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        AuditEntry { timestamp_ms, action }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityRole {
    PositiveSample,
    NegativeSample,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AxisPoint {
    pub entity_id: String,
    pub rank: usize,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Axis {
    pub scheme_id: String,
    pub label: String,
    pub kind: SchemeKind,
    /// One point per entity, in dataset order.
    pub points: Vec<AxisPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityDelta {
    pub entity_id: String,
    /// Previous rank minus next rank: positive when the entity moved up.
    pub delta: i64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankDeltas {
    pub from_scheme: String,
    pub to_scheme: String,
    pub deltas: Vec<EntityDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(FiveNumber {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndicatorBoxes {
    pub indicator: String,
    /// Normalized values of the negative samples.
    pub negative: Option<FiveNumber>,
    /// Normalized values of the positive samples.
    pub positive: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CurveWeights {
    Single(Vec<f64>),
    PerType(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightsCurve {
    pub scheme_id: String,
    pub weights: CurveWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonBundle {
    pub axes: Vec<Axis>,
    pub rank_deltas: Vec<RankDeltas>,
    pub dragged_entity: Option<String>,
    pub sample_roles: BTreeMap<String, EntityRole>,
    pub box_stats: Vec<IndicatorBoxes>,
    pub weights_curve: Vec<WeightsCurve>,
    pub indicators: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    dataset: Arc<Dataset>,
    normalized: Arc<NormalizedMatrix>,
    schemes: Vec<WeightScheme>,
    results: BTreeMap<String, RankingResult>,
    constraints: BTreeMap<String, ConstraintSet>,
    projections: BTreeMap<String, ProjectionResult>,
    audit_log: Vec<AuditEntry>,
    pending: Option<Preview>,
}

impl Session {
    /// Opens a session on `dataset` with the default scheme scored and rated.
    pub fn new(id: impl Into<String>, dataset: Dataset, config: SessionConfig) -> Result<Self, SessionError> {
        let normalized = normalize(&dataset);
        let default = WeightScheme::default_for(dataset.m());
        let result = scoring::rank(&normalized, &dataset, &default)?;
        let mut session = Session {
            id: id.into(),
            config,
            dataset: Arc::new(dataset),
            normalized: Arc::new(normalized),
            schemes: Vec::new(),
            results: BTreeMap::new(),
            constraints: BTreeMap::new(),
            projections: BTreeMap::new(),
            audit_log: Vec::new(),
            pending: None,
        };
        session.results.insert(default.id.clone(), result);
        session.schemes.push(default);
        session.cache_projection(scoring::DEFAULT_SCHEME_ID);
        Ok(session)
    }

    /// Rebuilds a session by re-executing `log` on a fresh session.
    pub fn replay(
        id: impl Into<String>,
        dataset: Dataset,
        config: SessionConfig,
        log: &[AuditEntry],
    ) -> Result<Self, SessionError> {
        let mut session = Session::new(id, dataset, config)?;
        for entry in log {
            session.apply(entry.action.clone())?;
        }
        Ok(session)
    }

    /// Applies one audit action, recording it in this session's log.
    pub fn apply(&mut self, action: AuditAction) -> Result<(), SessionError> {
        match action {
            AuditAction::Drag { drag } => {
                self.preview_drag(drag)?;
            }
            AuditAction::Save { which, label } => {
                self.save_scheme(which, &label)?;
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn normalized(&self) -> &NormalizedMatrix {
        &self.normalized
    }

    pub fn schemes(&self) -> &[WeightScheme] {
        &self.schemes
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.audit_log
    }

    pub fn pending(&self) -> Option<&Preview> {
        self.pending.as_ref()
    }

    pub fn scheme(&self, id: &str) -> Option<&WeightScheme> {
        self.schemes.iter().find(|s| s.id == id)
    }

    pub fn latest_scheme(&self) -> &WeightScheme {
        self.schemes.last().expect("the default scheme is always present")
    }

    /// Ranking result of `scheme_id`, or of the latest saved scheme.
    pub fn ranking(&self, scheme_id: Option<&str>) -> Result<&RankingResult, SessionError> {
        let id = scheme_id.unwrap_or(&self.latest_scheme().id);
        self.results
            .get(id)
            .ok_or_else(|| SessionError::UnknownScheme(id.to_string()))
    }

    pub fn constraints_for(&self, scheme_id: &str) -> Option<&ConstraintSet> {
        self.constraints.get(scheme_id)
    }

    /// Resolves a drag request against a saved ranking and previews all three schemes.
    pub fn submit_drag(&mut self, req: &DragRequest) -> Result<&Preview, SessionError> {
        if self.dataset.entity(&req.entity_id).is_none() {
            return Err(SessionError::UnknownEntity(req.entity_id.clone()));
        }
        let base = self.ranking(req.base_scheme.as_deref())?.ranking();
        let drag = DragEvent::new(req.entity_id.clone(), req.to_rank, base).map_err(SessionError::InvalidDrag)?;
        if let Some(from) = req.from_rank {
            if from != drag.from_rank {
                return Err(SessionError::InvalidDrag(ConstraintError::FromRankMismatch {
                    id: drag.entity_id.clone(),
                    given: from,
                    actual: drag.from_rank,
                }));
            }
        }
        self.preview_drag(drag)
    }

    /// Trains and ranks the three candidate schemes for `drag`, replacing any
    /// earlier preview. Saved schemes are untouched.
    pub fn preview_drag(&mut self, drag: DragEvent) -> Result<&Preview, SessionError> {
        for id in &drag.base_ranking {
            if self.dataset.entity(id).is_none() {
                return Err(SessionError::UnknownEntity(id.clone()));
            }
        }
        drag.validate().map_err(SessionError::InvalidDrag)?;
        let mut preview = Preview {
            drag: drag.clone(),
            local: None,
            global: None,
            type_: None,
            errors: BTreeMap::new(),
        };
        for which in ConstraintScheme::ALL {
            match self.candidate(which, &drag) {
                Ok(c) => match which {
                    ConstraintScheme::Local => preview.local = Some(c),
                    ConstraintScheme::Global => preview.global = Some(c),
                    ConstraintScheme::Type => preview.type_ = Some(c),
                },
                Err(reason) => {
                    if let CandidateError::Fatal(e) = reason {
                        return Err(e);
                    }
                    preview.errors.insert(which.as_str().to_string(), reason.to_string());
                }
            }
        }
        self.audit_log.push(AuditEntry::now(AuditAction::Drag { drag }));
        Ok(self.pending.insert(preview))
    }

    fn next_scheme_id(&self, which: ConstraintScheme) -> String {
        format!("s{}-{}", self.schemes.len(), which.as_str())
    }

    fn candidate(&self, which: ConstraintScheme, drag: &DragEvent) -> Result<Candidate, CandidateError> {
        let ds = &*self.dataset;
        let nm = &*self.normalized;
        let cs = constraints::derive(which, drag, ds, nm).map_err(|e| match e {
            ConstraintError::NoTrainableType | ConstraintError::InsufficientEntities(_) => {
                CandidateError::Slot(e.to_string())
            }
            other => CandidateError::Fatal(SessionError::InvalidDrag(other)),
        })?;
        let mut failures = BTreeMap::new();
        let weights = match &cs.pairs {
            constraints::PairSet::Flat(pairs) => SchemeWeights::Single(
                svm::train(pairs, &self.config.trainer).map_err(|e| CandidateError::Slot(e.to_string()))?,
            ),
            constraints::PairSet::PerType(_) => {
                let out = svm::train_per_type(&cs, &self.config.trainer)
                    .map_err(|e| CandidateError::Slot(e.to_string()))?;
                failures = out
                    .failures
                    .into_iter()
                    .map(|(t, e)| (t, e.to_string()))
                    .collect();
                if out.weights.is_empty() {
                    return Err(CandidateError::Slot("no type could be trained".into()));
                }
                SchemeWeights::PerType(out.weights)
            }
        };
        let kind = SchemeKind::from(which);
        let scheme = WeightScheme {
            id: self.next_scheme_id(which),
            kind,
            label: String::new(),
            weights,
            created_from: Some(drag.clone()),
        };
        let result = scoring::rank(nm, ds, &scheme).map_err(|e| CandidateError::Fatal(e.into()))?;
        Ok(Candidate {
            scheme,
            result,
            constraints: cs,
            failures,
        })
    }

    /// Appends the chosen candidate of the pending preview as a saved scheme.
    /// An empty label becomes `Scheme N (<kind>)`.
    pub fn save_scheme(&mut self, which: ConstraintScheme, label: &str) -> Result<WeightScheme, SessionError> {
        let preview = self.pending.as_mut().ok_or(SessionError::NoPendingPreview)?;
        if preview.slot(which).is_none() {
            return Err(SessionError::SchemeUnavailable {
                which,
                reason: preview
                    .errors
                    .get(which.as_str())
                    .cloned()
                    .unwrap_or_else(|| "no candidate".into()),
            });
        }
        let Candidate {
            mut scheme,
            mut result,
            constraints,
            ..
        } = preview.take_slot(which).expect("checked above");
        self.pending = None;

        let label = if label.trim().is_empty() {
            format!("Scheme {} ({})", self.schemes.len(), scheme.kind.as_str())
        } else {
            label.trim().to_string()
        };
        scheme.label.clone_from(&label);
        result.scheme_id.clone_from(&scheme.id);
        self.results.insert(scheme.id.clone(), result);
        self.constraints.insert(scheme.id.clone(), constraints);
        self.schemes.push(scheme.clone());
        self.cache_projection(&scheme.id);
        self.audit_log.push(AuditEntry::now(AuditAction::Save { which, label }));
        Ok(scheme)
    }

    /// Parameters actually used for projections of this session: the
    /// configured perplexity is lowered when the dataset is too small for it.
    pub fn projection_params(&self) -> ProjectionParams {
        let mut params = self.config.projection;
        let n = self.dataset.n();
        if params.perplexity >= n as f64 / 3.0 {
            params.perplexity = ((n as f64 - 1.0) / 3.0).floor().max(1.0);
        }
        params
    }

    /// Computes the projection of a saved scheme without touching the cache.
    pub fn compute_projection(&self, scheme_id: &str) -> Result<ProjectionResult, SessionError> {
        let scheme = self
            .scheme(scheme_id)
            .ok_or_else(|| SessionError::UnknownScheme(scheme_id.to_string()))?;
        Ok(projection::project(
            &self.normalized,
            &self.dataset,
            scheme,
            &self.projection_params(),
        )?)
    }

    fn cache_projection(&mut self, scheme_id: &str) {
        if let Ok(p) = self.compute_projection(scheme_id) {
            self.projections.insert(scheme_id.to_string(), p);
        }
    }

    pub fn cached_projection(&self, scheme_id: &str) -> Option<&ProjectionResult> {
        self.projections.get(scheme_id)
    }

    /// Cached projection of a saved scheme, computing it on a miss.
    pub fn projection(&mut self, scheme_id: &str) -> Result<ProjectionResult, SessionError> {
        if let Some(p) = self.projections.get(scheme_id) {
            return Ok(p.clone());
        }
        let p = self.compute_projection(scheme_id)?;
        self.projections.insert(scheme_id.to_string(), p.clone());
        Ok(p)
    }

    /// Comparison data over all saved schemes in save order. Sample roles and
    /// box plots describe the constraints of the most recently saved scheme.
    pub fn comparison(&self) -> Result<ComparisonBundle, SessionError> {
        if self.schemes.len() < 2 {
            return Err(SessionError::NothingToCompare);
        }
        let ids = self.dataset.ids();
        let axes: Vec<Axis> = self
            .schemes
            .iter()
            .map(|s| {
                let result = &self.results[&s.id];
                let by_id: BTreeMap<&str, (usize, u8)> = result
                    .entities
                    .iter()
                    .map(|e| (e.entity_id.as_str(), (e.rank, e.rating.unwrap_or(0))))
                    .collect();
                Axis {
                    scheme_id: s.id.clone(),
                    label: s.label.clone(),
                    kind: s.kind,
                    points: ids
                        .iter()
                        .map(|id| {
                            let (rank, rating) = by_id[id.as_str()];
                            AxisPoint {
                                entity_id: id.clone(),
                                rank,
                                rating,
                            }
                        })
                        .collect(),
                }
            })
            .collect();

        let rank_deltas = axes
            .windows(2)
            .map(|pair| RankDeltas {
                from_scheme: pair[0].scheme_id.clone(),
                to_scheme: pair[1].scheme_id.clone(),
                deltas: pair[0]
                    .points
                    .iter()
                    .zip(&pair[1].points)
                    .map(|(a, b)| {
                        let delta = a.rank as i64 - b.rank as i64;
                        EntityDelta {
                            entity_id: a.entity_id.clone(),
                            delta,
                            sign: delta.signum() as i8,
                        }
                    })
                    .collect(),
            })
            .collect();

        let latest = self.latest_scheme();
        let cs = self.constraints.get(&latest.id);
        let roles = cs.map(ConstraintSet::sample_roles).unwrap_or_default();
        let sample_roles = ids
            .iter()
            .map(|id| {
                let role = match roles.get(id) {
                    Some(SampleRole::PositiveSample) => EntityRole::PositiveSample,
                    Some(SampleRole::NegativeSample) => EntityRole::NegativeSample,
                    _ => EntityRole::None,
                };
                (id.clone(), role)
            })
            .collect::<BTreeMap<_, _>>();

        let values_for = |role: EntityRole, j: usize| -> Vec<f64> {
            sample_roles
                .iter()
                .filter(|(_, r)| **r == role)
                .map(|(id, _)| self.normalized.row_of(id).expect("known id")[j])
                .collect()
        };
        let indicators: Vec<String> = self.dataset.schema().names().map(str::to_string).collect();
        let box_stats = indicators
            .iter()
            .enumerate()
            .map(|(j, name)| IndicatorBoxes {
                indicator: name.clone(),
                negative: FiveNumber::of(&values_for(EntityRole::NegativeSample, j)),
                positive: FiveNumber::of(&values_for(EntityRole::PositiveSample, j)),
            })
            .collect();

        let weights_curve = self
            .schemes
            .iter()
            .map(|s| WeightsCurve {
                scheme_id: s.id.clone(),
                weights: match &s.weights {
                    SchemeWeights::Single(w) => CurveWeights::Single(w.w.clone()),
                    SchemeWeights::PerType(map) => {
                        CurveWeights::PerType(map.iter().map(|(t, w)| (t.clone(), w.w.clone())).collect())
                    }
                },
            })
            .collect();

        Ok(ComparisonBundle {
            axes,
            rank_deltas,
            dragged_entity: cs.map(|c| c.source_drag.entity_id.clone()),
            sample_roles,
            box_stats,
            weights_curve,
            indicators,
        })
    }
}

#[derive(Debug, Error)]
enum CandidateError {
    #[error("{0}")]
    Slot(String),
    #[error(transparent)]
    Fatal(SessionError),
}
