//! Interactive weight elicitation for multi-attribute ratings.
//!
//! A user drags an entity to a new rank; the drag becomes pairwise
//! constraints, a linear Ranking SVM learns indicator weights from them, and
//! the weights produce scores, per-indicator contributions, 1-5 ratings and a
//! 2D projection.

pub mod constraints;
pub mod data;
pub mod metrics;
pub mod projection;
pub mod scoring;
pub mod script;
pub mod session;
pub mod svm;

pub use constraints::{ConstraintError, ConstraintScheme, ConstraintSet, DragEvent, PairSet, SampleRole, TrainingPair};
pub use data::{ingest, ingest_str, normalize, DataError, Dataset, Entity, Indicator, IndicatorSchema, NormalizedMatrix};
pub use metrics::kendall_tau;
pub use projection::{ProjectionError, ProjectionParams, ProjectionResult};
pub use scoring::{RankingResult, SchemeKind, SchemeWeights, ScoredEntity, WeightScheme};
pub use session::{ComparisonBundle, DragRequest, ErrorKind, Preview, Session, SessionConfig, SessionError};
pub use svm::{train, TrainerConfig, WeightVector};
