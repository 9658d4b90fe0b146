//! Dataset model, delimited-text ingestion and min-max normalization.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed input: {0}")]
    Csv(String),
    #[error("missing header row")]
    MissingHeader,
    #[error("column `{0}` not found in header")]
    UnknownColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column} (`{header}`): `{value}` is not a finite number")]
    NonNumeric {
        row: u64,
        column: usize,
        header: String,
        value: String,
    },
    #[error("row {0}: empty entity id")]
    EmptyId(u64),
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("no entities")]
    NoEntities,
    #[error("at least 2 entities are required, found {0}")]
    TooFewEntities(usize),
    #[error("at least 2 indicators are required, found {0}")]
    TooFewIndicators(usize),
    #[error("indicator names must be non-empty")]
    EmptyIndicatorName,
    #[error("duplicate indicator `{0}`")]
    DuplicateIndicator(String),
    #[error("entity `{id}` has {found} indicator values, expected {expected}")]
    Dimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("entity `{0}` has a non-finite indicator value")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for DataError {
    fn from(err: csv::Error) -> Self {
        DataError::Csv(err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub name: String,
    #[serde(default)]
    pub unit: String,
}

impl Indicator {
    /// Parses a header cell of the form `name` or `name[unit]`.
    fn from_header(cell: &str) -> Self {
        let cell = cell.trim();
        if let Some(open) = cell.find('[') {
            if cell.ends_with(']') {
                return Indicator {
                    name: cell[..open].trim().to_string(),
                    unit: cell[open + 1..cell.len() - 1].trim().to_string(),
                };
            }
        }
        Indicator {
            name: cell.to_string(),
            unit: String::new(),
        }
    }

    fn header(&self) -> String {
        if self.unit.is_empty() {
            self.name.clone()
        } else {
            format!("{}[{}]", self.name, self.unit)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSchema {
    indicators: Vec<Indicator>,
    id_field: String,
    type_field: String,
}

impl IndicatorSchema {
    pub fn new(
        id_field: impl Into<String>,
        type_field: impl Into<String>,
        indicators: Vec<Indicator>,
    ) -> Result<Self, DataError> {
        if indicators.len() < 2 {
            return Err(DataError::TooFewIndicators(indicators.len()));
        }
        let mut seen = HashSet::new();
        for ind in &indicators {
            if ind.name.trim().is_empty() {
                return Err(DataError::EmptyIndicatorName);
            }
            if !seen.insert(ind.name.as_str()) {
                return Err(DataError::DuplicateIndicator(ind.name.clone()));
            }
        }
        Ok(IndicatorSchema {
            indicators,
            id_field: id_field.into(),
            type_field: type_field.into(),
        })
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.indicators.iter().map(|i| i.name.as_str())
    }

    pub fn id_field(&self) -> &str {
        &self.id_field
    }

    pub fn type_field(&self) -> &str {
        &self.type_field
    }

    /// Number of indicators.
    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }
}

/// One rateable item. The first column of the input serves as both id and display name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub type_label: String,
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: IndicatorSchema,
    entities: Vec<Entity>,
    norm_stats: Vec<NormStats>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(schema: IndicatorSchema, entities: Vec<Entity>) -> Result<Self, DataError> {
        match entities.len() {
            0 => return Err(DataError::NoEntities),
            1 => return Err(DataError::TooFewEntities(1)),
            _ => {}
        }
        let m = schema.len();
        let mut index = HashMap::with_capacity(entities.len());
        for (row, e) in entities.iter().enumerate() {
            if e.raw.len() != m {
                return Err(DataError::Dimension {
                    id: e.id.clone(),
                    expected: m,
                    found: e.raw.len(),
                });
            }
            if e.raw.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite(e.id.clone()));
            }
            if index.insert(e.id.clone(), row).is_some() {
                return Err(DataError::DuplicateId(e.id.clone()));
            }
        }
        let norm_stats = (0..m)
            .map(|j| {
                let (min, max) = entities.iter().map(|e| e.raw[j]).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), v| (lo.min(v), hi.max(v)),
                );
                NormStats { min, max }
            })
            .collect();
        Ok(Dataset {
            schema,
            entities,
            norm_stats,
            index,
        })
    }

    pub fn schema(&self) -> &IndicatorSchema {
        &self.schema
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn norm_stats(&self) -> &[NormStats] {
        &self.norm_stats
    }

    pub fn n(&self) -> usize {
        self.entities.len()
    }

    pub fn m(&self) -> usize {
        self.schema.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.position(id).map(|i| &self.entities[i])
    }

    /// Distinct type labels in ascending order.
    pub fn type_labels(&self) -> BTreeSet<&str> {
        self.entities.iter().map(|e| e.type_label.as_str()).collect()
    }

    /// Entity ids in ingestion order.
    pub fn ids(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.id.clone()).collect()
    }

    /// Writes the dataset back out in the ingestion format. Values use the
    /// shortest decimal representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec![
            self.schema.id_field.clone(),
            self.schema.type_field.clone(),
        ];
        header.extend(self.schema.indicators.iter().map(Indicator::header));
        out.write_record(&header)?;
        for e in &self.entities {
            let mut record = vec![e.id.clone(), e.type_label.clone()];
            record.extend(e.raw.iter().map(|v| v.to_string()));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Optional column mapping for inputs whose columns are not in the default
/// `id, type, indicators...` order. Columns are referenced by header name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnHints {
    pub id_column: Option<String>,
    pub type_column: Option<String>,
    pub indicator_columns: Option<Vec<String>>,
}

/// Parses comma-delimited UTF-8 text with a header row into a [`Dataset`].
pub fn ingest<R: Read>(source: R, hints: Option<&ColumnHints>) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(DataError::MissingHeader);
    }

    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name || Indicator::from_header(h).name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let hints = hints.cloned().unwrap_or_default();
    let id_col = match &hints.id_column {
        Some(name) => find(name)?,
        None => 0,
    };
    let type_col = match &hints.type_column {
        Some(name) => find(name)?,
        None => 1,
    };
    if header.len() < 2 {
        return Err(DataError::TooFewIndicators(0));
    }
    let indicator_cols: Vec<usize> = match &hints.indicator_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_, _>>()?,
        None => (0..header.len())
            .filter(|&c| c != id_col && c != type_col)
            .collect(),
    };
    let indicators = indicator_cols
        .iter()
        .map(|&c| Indicator::from_header(&header[c]))
        .collect();
    let schema = IndicatorSchema::new(header[id_col].clone(), header[type_col].clone(), indicators)?;

    let mut entities = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::Arity {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = record[id_col].to_string();
        if id.is_empty() {
            return Err(DataError::EmptyId(row));
        }
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        let raw = indicator_cols
            .iter()
            .map(|&c| {
                record[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::NonNumeric {
                        row,
                        column: c + 1,
                        header: header[c].clone(),
                        value: record[c].to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        entities.push(Entity {
            name: id.clone(),
            id,
            type_label: record[type_col].to_string(),
            raw,
        });
    }
    Dataset::new(schema, entities)
}

pub fn ingest_str(text: &str) -> Result<Dataset, DataError> {
    ingest(text.as_bytes(), None)
}

/// Row-major n×m matrix of normalized indicator values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    values: Vec<f64>,
    m: usize,
    entity_order: Vec<String>,
    index: HashMap<String, usize>,
}

impl NormalizedMatrix {
    pub fn n(&self) -> usize {
        self.entity_order.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn entity_order(&self) -> &[String] {
        &self.entity_order
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }
}

/// Per-indicator min-max scaling; constant columns map to 0.
pub fn normalize(ds: &Dataset) -> NormalizedMatrix {
    let m = ds.m();
    let mut values = Vec::with_capacity(ds.n() * m);
    for e in ds.entities() {
        for (j, &x) in e.raw.iter().enumerate() {
            let NormStats { min, max } = ds.norm_stats[j];
            let span = max - min;
            values.push(if span > 0.0 {
                ((x - min) / span).clamp(0.0, 1.0)
            } else {
                0.0
            });
        }
    }
    NormalizedMatrix {
        values,
        m,
        entity_order: ds.ids(),
        index: ds.index.clone(),
    }
}
