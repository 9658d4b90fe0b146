//! Headless interaction scripts: load a dataset, apply drags and saves in
//! order, and write the resulting reports to disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::ConstraintScheme;
use crate::data::{ingest, DataError, Dataset};
use crate::metrics::kendall_tau;
use crate::scoring::RankingResult;
use crate::session::{DragRequest, ErrorKind, Session, SessionConfig, SessionError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScriptStep {
    #[serde(rename_all = "camelCase")]
    Drag { entity_id: String, to_rank: usize },
    Save {
        which: ConstraintScheme,
        #[serde(default)]
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InteractionScript {
    /// Relative paths resolve against the script's own directory.
    pub dataset_path: PathBuf,
    pub steps: Vec<ScriptStep>,
    pub output_dir: PathBuf,
}

impl InteractionScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        serde_json::from_str(text).map_err(|e| ScriptError::Malformed(e.to_string()))
    }

    /// Reads a script file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path).map_err(|e| ScriptError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut script = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if script.dataset_path.is_relative() {
            script.dataset_path = base.join(&script.dataset_path);
        }
        if script.output_dir.is_relative() {
            script.output_dir = base.join(&script.output_dir);
        }
        Ok(script)
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("malformed script: {0}")]
    Malformed(String),
    #[error("cannot read dataset: {0}")]
    Dataset(#[from] DataError),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: SessionError,
    },
    #[error(transparent)]
    Session(SessionError),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl ScriptError {
    /// Whether the failure comes from bad input rather than from the program.
    pub fn is_validation(&self) -> bool {
        match self {
            ScriptError::Malformed(_) | ScriptError::Dataset(_) => true,
            ScriptError::Step { source, .. } | ScriptError::Session(source) => source.kind() != ErrorKind::Internal,
            ScriptError::Io { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauMatrix {
    pub schemes: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl TauMatrix {
    pub fn of(results: &[&RankingResult]) -> Self {
        let rankings: Vec<Vec<String>> = results.iter().map(|r| r.ranking()).collect();
        let matrix = rankings
            .iter()
            .map(|a| {
                rankings
                    .iter()
                    .map(|b| kendall_tau(a, b).unwrap_or(1.0))
                    .collect()
            })
            .collect();
        TauMatrix {
            schemes: results.iter().map(|r| r.scheme_id.clone()).collect(),
            matrix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptReport {
    pub schemes: Vec<String>,
    pub files: Vec<PathBuf>,
    pub tau: TauMatrix,
    pub warnings: Vec<String>,
}

/// Applies the script steps to a fresh session on `dataset`.
pub fn execute(steps: &[ScriptStep], dataset: Dataset, config: SessionConfig) -> Result<Session, ScriptError> {
    let mut session = Session::new("script", dataset, config).map_err(ScriptError::Session)?;
    for (step, s) in steps.iter().enumerate() {
        let outcome = match s {
            ScriptStep::Drag { entity_id, to_rank } => session
                .submit_drag(&DragRequest {
                    entity_id: entity_id.clone(),
                    to_rank: *to_rank,
                    from_rank: None,
                    base_scheme: None,
                })
                .map(|_| ()),
            ScriptStep::Save { which, label } => session.save_scheme(*which, label).map(|_| ()),
        };
        outcome.map_err(|source| ScriptError::Step { step, source })?;
    }
    Ok(session)
}

/// Runs a script and writes `rankings/<scheme>.csv` (plus the full result as
/// `rankings/<scheme>.json`), `projections/<scheme>.json`,
/// `comparison.json` (when a scheme was saved) and `tau.json` under its output directory.
pub fn run_script(script: &InteractionScript, config: SessionConfig) -> Result<ScriptReport, ScriptError> {
    let file = fs::File::open(&script.dataset_path).map_err(|e| ScriptError::Io {
        path: script.dataset_path.clone(),
        message: e.to_string(),
    })?;
    let dataset = ingest(file, None)?;
    let mut session = execute(&script.steps, dataset, config)?;
    write_reports(&mut session, &script.output_dir)
}

pub fn write_reports(session: &mut Session, out: &Path) -> Result<ScriptReport, ScriptError> {
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let write = |path: PathBuf, contents: String, files: &mut Vec<PathBuf>| -> Result<(), ScriptError> {
        let io = |e: std::io::Error| ScriptError::Io {
            path: path.clone(),
            message: e.to_string(),
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(&path, contents).map_err(io)?;
        files.push(path);
        Ok(())
    };

    let ids: Vec<String> = session.schemes().iter().map(|s| s.id.clone()).collect();
    for id in &ids {
        let result = session.ranking(Some(id)).map_err(ScriptError::Session)?;
        write(out.join("rankings").join(format!("{id}.csv")), ranking_csv(session, result), &mut files)?;
        write(out.join("rankings").join(format!("{id}.json")), to_json(result), &mut files)?;
        match session.projection(id) {
            Ok(p) => write(
                out.join("projections").join(format!("{id}.json")),
                to_json(&p),
                &mut files,
            )?,
            Err(e) => warnings.push(format!("no projection for {id}: {e}")),
        }
    }
    match session.comparison() {
        Ok(bundle) => write(out.join("comparison.json"), to_json(&bundle), &mut files)?,
        Err(e) => warnings.push(format!("no comparison: {e}")),
    }
    let results: Vec<&RankingResult> = ids
        .iter()
        .map(|id| session.ranking(Some(id)))
        .collect::<Result<_, _>>()
        .map_err(ScriptError::Session)?;
    let tau = TauMatrix::of(&results);
    write(out.join("tau.json"), to_json(&tau), &mut files)?;
    Ok(ScriptReport {
        schemes: ids,
        files,
        tau,
        warnings,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

/// Ranking as CSV: rank, id, type, score, rating, then one contribution column per indicator.
pub fn ranking_csv(session: &Session, result: &RankingResult) -> String {
    let ds = session.dataset();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "id".into(), "type".into(), "score".into(), "rating".into()];
    header.extend(ds.schema().names().map(|n| format!("contribution:{n}")));
    w.write_record(&header).expect("in-memory write");
    for e in &result.entities {
        let type_label = ds.entity(&e.entity_id).map(|x| x.type_label.as_str()).unwrap_or("");
        let mut row = vec![
            e.rank.to_string(),
            e.entity_id.clone(),
            type_label.to_string(),
            e.score.to_string(),
            e.rating.map(|r| r.to_string()).unwrap_or_default(),
        ];
        row.extend(e.contributions.iter().map(f64::to_string));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
