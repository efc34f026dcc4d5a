//! CSV loading, schema inference and preprocessing into an immutable
//! [`Dataset`].
//!
//! Numeric columns are median-imputed and z-scored; categorical columns are
//! mode-imputed and ordinally encoded with their level names retained, so a
//! categorical variable stays a single persona variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of non-missing cells that must parse as numbers for a column to
/// be treated as numeric.
pub const NUMERIC_FRACTION: f64 = 0.9;

const MISSING_MARKERS: [&str; 3] = ["na", "nan", "null"];

/// A header plus rows of string cells; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub source: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.rows[row][col].as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Writes the table back out as CSV, with missing cells left empty.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Csv {
            path: self.source.clone(),
            message: e.to_string(),
        };
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&self.source, e))?;
        Ok(())
    }
}

pub fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || MISSING_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string())
}

/// Parses RFC-4180 CSV with a header row. Row numbers in errors count data
/// rows from 1.
pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let csv_err = |e: csv::Error| Error::Csv {
        path: source.to_string(),
        message: e.to_string(),
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(
            record
                .iter()
                .map(|c| (!is_missing(c)).then(|| c.trim().to_string()))
                .collect(),
        );
    }
    Ok(RawTable {
        source: source.to_string(),
        header,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted distinct levels; empty for numeric columns.
    pub categories: Vec<String>,
    pub missing_count: usize,
}

/// How the outcome column maps to {0, 1}.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub column: String,
    /// Explicit label map, e.g. `yes -> 1, no -> 0`. When absent the cells
    /// must parse as the numbers 0 or 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, u8>>,
}

impl OutcomeSpec {
    pub fn new(column: impl Into<String>) -> Self {
        OutcomeSpec {
            column: column.into(),
            labels: None,
        }
    }

    fn parse(&self, cell: Option<&str>, row: usize) -> Result<u8> {
        let bad = || Error::NonBinaryOutcome {
            column: self.column.clone(),
            row,
            value: cell.unwrap_or("").to_string(),
        };
        let cell = cell.ok_or_else(bad)?;
        match &self.labels {
            Some(map) => map.get(cell).copied().filter(|v| *v <= 1).ok_or_else(bad),
            None => match cell.parse::<f64>() {
                Ok(v) if v == 0.0 => Ok(0),
                Ok(v) if v == 1.0 => Ok(1),
                _ => Err(bad()),
            },
        }
    }
}

/// Roles of the non-feature columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub outcome: OutcomeSpec,
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default)]
    pub arm_column: Option<String>,
    /// Optional continuous response used as the observed-benefit channel.
    #[serde(default)]
    pub response_column: Option<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl PreprocessConfig {
    pub fn new(outcome: impl Into<String>) -> Self {
        PreprocessConfig {
            outcome: OutcomeSpec::new(outcome),
            ..Default::default()
        }
    }

    fn is_feature(&self, name: &str) -> bool {
        name != self.outcome.column
            && self.id_column.as_deref() != Some(name)
            && self.arm_column.as_deref() != Some(name)
            && self.response_column.as_deref() != Some(name)
            && !self.exclude.iter().any(|e| e == name)
    }

    fn require(&self, table: &RawTable) -> Result<()> {
        let named = std::iter::once(Some(&self.outcome.column))
            .chain([
                self.id_column.as_ref(),
                self.arm_column.as_ref(),
                self.response_column.as_ref(),
            ])
            .flatten();
        for name in named {
            if table.column_index(name).is_none() {
                return Err(Error::MissingColumn(name.clone()));
            }
        }
        Ok(())
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Types every feature column and parses the outcome vector.
pub fn infer_schema(
    table: &RawTable,
    config: &PreprocessConfig,
) -> Result<(Vec<ColumnSchema>, Vec<u8>)> {
    config.require(table)?;
    let outcome_idx = table.column_index(&config.outcome.column).unwrap();
    let outcome = (0..table.n_rows())
        .map(|r| config.outcome.parse(table.cell(r, outcome_idx), r + 1))
        .collect::<Result<Vec<u8>>>()?;

    let mut schema = Vec::new();
    for (c, name) in table.header.iter().enumerate() {
        if !config.is_feature(name) {
            continue;
        }
        let present: Vec<&str> = (0..table.n_rows())
            .filter_map(|r| table.cell(r, c))
            .collect();
        let missing_count = table.n_rows() - present.len();
        let parsed = present.iter().filter(|s| parse_number(s).is_some()).count();
        let numeric =
            !present.is_empty() && parsed as f64 >= NUMERIC_FRACTION * present.len() as f64;
        let (kind, categories) = if numeric {
            (ColumnKind::Numeric, Vec::new())
        } else {
            let levels: BTreeSet<&str> = present.iter().copied().collect();
            (
                ColumnKind::Categorical,
                levels.into_iter().map(str::to_string).collect(),
            )
        };
        schema.push(ColumnSchema {
            name: name.clone(),
            kind,
            categories,
            missing_count,
        });
    }
    Ok((schema, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

/// Per-column normalisation record, used to map thresholds back to original
/// units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
    /// Value written into missing cells (median, or mode level index).
    pub fill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub row: usize,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows: usize,
    pub imputations: Vec<Imputation>,
    pub constant_columns: Vec<String>,
    pub non_feature_columns: Vec<String>,
}

/// Preprocessed cohort. Immutable after construction; share it by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    columns: Vec<ColumnSchema>,
    stats: Vec<ColumnStats>,
    /// Column-major normalised values (z-scores or level indices).
    values: Vec<Vec<f64>>,
    /// Column-major imputed values in original units.
    original: Vec<Vec<f64>>,
    outcome: Vec<u8>,
    arm: Option<Vec<Arm>>,
    arm_levels: Option<[String; 2]>,
    response: Option<Vec<f64>>,
    provenance: Provenance,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn preprocess(
    table: &RawTable,
    schema: &[ColumnSchema],
    outcome: Vec<u8>,
    config: &PreprocessConfig,
) -> Result<Dataset> {
    config.require(table)?;
    let n = table.n_rows();
    if outcome.len() != n {
        return Err(Error::InvalidInput(format!(
            "outcome has {} entries for {n} rows",
            outcome.len()
        )));
    }
    let empty: Vec<String> = schema
        .iter()
        .filter(|c| c.missing_count >= n)
        .map(|c| c.name.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyColumns(empty));
    }

    let mut provenance = Provenance {
        source: table.source.clone(),
        rows: n,
        ..Default::default()
    };
    let mut values = Vec::with_capacity(schema.len());
    let mut original = Vec::with_capacity(schema.len());
    let mut stats = Vec::with_capacity(schema.len());

    for col in schema {
        let c = table
            .column_index(&col.name)
            .ok_or_else(|| Error::MissingColumn(col.name.clone()))?;
        match col.kind {
            ColumnKind::Numeric => {
                let parsed: Vec<Option<f64>> = (0..n)
                    .map(|r| table.cell(r, c).and_then(parse_number))
                    .collect();
                let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
                if present.is_empty() {
                    return Err(Error::EmptyColumns(vec![col.name.clone()]));
                }
                present.sort_by(f64::total_cmp);
                let fill = median(&present);
                let raw: Vec<f64> = parsed
                    .iter()
                    .enumerate()
                    .map(|(r, v)| {
                        v.unwrap_or_else(|| {
                            provenance.imputations.push(Imputation {
                                row: r + 1,
                                column: col.name.clone(),
                                value: fill.to_string(),
                            });
                            fill
                        })
                    })
                    .collect();
                let mean = raw.iter().sum::<f64>() / n as f64;
                let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let std = var.sqrt();
                let constant = std <= 1e-12 * mean.abs().max(1.0);
                let z = if constant {
                    provenance.constant_columns.push(col.name.clone());
                    vec![0.0; n]
                } else {
                    raw.iter().map(|v| (v - mean) / std).collect()
                };
                values.push(z);
                original.push(raw);
                stats.push(ColumnStats {
                    mean,
                    std,
                    constant,
                    fill,
                });
            }
            ColumnKind::Categorical => {
                let index: BTreeMap<&str, usize> = col
                    .categories
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i))
                    .collect();
                let mut counts = vec![0usize; col.categories.len()];
                let cells: Vec<Option<usize>> = (0..n)
                    .map(|r| table.cell(r, c).and_then(|s| index.get(s).copied()))
                    .collect();
                for v in cells.iter().flatten() {
                    counts[*v] += 1;
                }
                // Mode; ties go to the earliest level.
                let mode = counts
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .ok_or_else(|| Error::EmptyColumns(vec![col.name.clone()]))?;
                let coded: Vec<f64> = cells
                    .iter()
                    .enumerate()
                    .map(|(r, v)| {
                        v.unwrap_or_else(|| {
                            provenance.imputations.push(Imputation {
                                row: r + 1,
                                column: col.name.clone(),
                                value: col.categories[mode].clone(),
                            });
                            mode
                        }) as f64
                    })
                    .collect();
                let constant = col.categories.len() < 2;
                if constant {
                    provenance.constant_columns.push(col.name.clone());
                }
                values.push(coded.clone());
                original.push(coded);
                stats.push(ColumnStats {
                    mean: 0.0,
                    std: 1.0,
                    constant,
                    fill: mode as f64,
                });
            }
        }
    }

    let ids = match &config.id_column {
        Some(name) => {
            let c = table.column_index(name).unwrap();
            (0..n)
                .map(|r| table.cell(r, c).unwrap_or("").to_string())
                .collect()
        }
        None => (0..n).map(|r| r.to_string()).collect(),
    };

    let (arm, arm_levels) = match &config.arm_column {
        Some(name) => {
            let c = table.column_index(name).unwrap();
            let cells: Vec<Option<&str>> = (0..n).map(|r| table.cell(r, c)).collect();
            let levels: BTreeSet<&str> = cells.iter().flatten().copied().collect();
            if levels.len() != 2 || cells.iter().any(Option::is_none) {
                return Err(Error::BadArms {
                    column: name.clone(),
                    found: levels.into_iter().map(str::to_string).collect(),
                });
            }
            let levels: Vec<&str> = levels.into_iter().collect();
            let arms = cells
                .iter()
                .map(|c| if c.unwrap() == levels[0] { Arm::A } else { Arm::B })
                .collect();
            (
                Some(arms),
                Some([levels[0].to_string(), levels[1].to_string()]),
            )
        }
        None => (None, None),
    };

    let response = match &config.response_column {
        Some(name) => {
            let c = table.column_index(name).unwrap();
            let parsed = (0..n)
                .map(|r| {
                    table.cell(r, c).and_then(parse_number).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "response column `{name}` row {} is not a number",
                            r + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(parsed)
        }
        None => None,
    };

    provenance.non_feature_columns = table
        .header
        .iter()
        .filter(|h| !config.is_feature(h))
        .cloned()
        .collect();

    Ok(Dataset {
        ids,
        columns: schema.to_vec(),
        stats,
        values,
        original,
        outcome,
        arm,
        arm_levels,
        response,
        provenance,
    })
}

/// `load_csv` + `infer_schema` + `preprocess`.
pub fn load_dataset(path: impl AsRef<Path>, config: &PreprocessConfig) -> Result<Dataset> {
    let table = load_csv(path)?;
    Dataset::from_table(&table, config)
}

impl Dataset {
    pub fn from_table(table: &RawTable, config: &PreprocessConfig) -> Result<Dataset> {
        let (schema, outcome) = infer_schema(table, config)?;
        preprocess(table, &schema, outcome, config)
    }

    /// Builds an all-numeric dataset from column-major values. Test and
    /// example convenience; goes through the regular preprocessing path.
    pub fn from_numeric(names: &[&str], columns: &[Vec<f64>], outcome: &[u8]) -> Result<Dataset> {
        let n = outcome.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("column length mismatch".into()));
        }
        let mut header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        header.push("outcome".into());
        let rows = (0..n)
            .map(|r| {
                columns
                    .iter()
                    .map(|c| Some(format!("{:?}", c[r])))
                    .chain(std::iter::once(Some(outcome[r].to_string())))
                    .collect()
            })
            .collect();
        let table = RawTable {
            source: "<memory>".into(),
            header,
            rows,
        };
        Dataset::from_table(&table, &PreprocessConfig::new("outcome"))
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn column(&self, f: usize) -> &ColumnSchema {
        &self.columns[f]
    }

    pub fn stats(&self, f: usize) -> &ColumnStats {
        &self.stats[f]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn is_categorical(&self, f: usize) -> bool {
        self.columns[f].kind == ColumnKind::Categorical
    }

    /// Normalised values of feature `f` (z-scores, or level indices).
    pub fn values(&self, f: usize) -> &[f64] {
        &self.values[f]
    }

    /// Imputed values of feature `f` in original units (level indices for
    /// categorical columns).
    pub fn original(&self, f: usize) -> &[f64] {
        &self.original[f]
    }

    pub fn value(&self, row: usize, f: usize) -> f64 {
        self.values[f][row]
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn positives(&self) -> usize {
        self.outcome.iter().map(|&y| y as usize).sum()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn arm(&self) -> Option<&[Arm]> {
        self.arm.as_deref()
    }

    pub fn arm_levels(&self) -> Option<&[String; 2]> {
        self.arm_levels.as_ref()
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Row-major feature vector of one patient over a feature subset.
    pub fn row(&self, i: usize, features: &[usize]) -> Vec<f64> {
        features.iter().map(|&f| self.values[f][i]).collect()
    }

    /// Copy of the dataset with the outcome vector replaced.
    pub fn with_outcome(&self, outcome: Vec<u8>) -> Result<Dataset> {
        if outcome.len() != self.n() || outcome.iter().any(|&y| y > 1) {
            return Err(Error::InvalidInput("replacement outcome invalid".into()));
        }
        Ok(Dataset {
            outcome,
            ..self.clone()
        })
    }

    /// Renders the normalised dataset back into a raw table (categorical
    /// columns as level names), e.g. to check idempotence.
    pub fn to_table(&self) -> RawTable {
        let mut header: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        header.push("outcome".into());
        let rows = (0..self.n())
            .map(|r| {
                self.columns
                    .iter()
                    .enumerate()
                    .map(|(f, c)| {
                        Some(match c.kind {
                            ColumnKind::Numeric => format!("{:?}", self.values[f][r]),
                            ColumnKind::Categorical => {
                                c.categories[self.values[f][r] as usize].clone()
                            }
                        })
                    })
                    .chain(std::iter::once(Some(self.outcome[r].to_string())))
                    .collect()
            })
            .collect();
        RawTable {
            source: self.provenance.source.clone(),
            header,
            rows,
        }
    }
}
