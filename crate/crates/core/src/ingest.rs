//! Reads the row-wise episode corpus from an XLSX workbook (or a CSV file
//! with the same columns).
//!
//! Header names are matched case-insensitively after trimming. Required:
//! `episode_id`, `description`. Known optional columns: `jurisdiction`,
//! `year`, `policy_type`, `macro_conditions`, `government_focus`,
//! `relevance_set`. Any other column lands in the episode context. Indicator
//! set cells hold semicolon-separated ids. Fully blank rows are ignored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use calamine::{open_workbook_auto, Data, Reader};
use thiserror::Error;

use crate::model::{validate_episode, PolicyEpisode, Violation};
use crate::vocab::IndicatorVocabulary;

pub const REQUIRED_COLUMNS: [&str; 2] = ["episode_id", "description"];
pub const CONTEXT_COLUMNS: [&str; 4] = ["jurisdiction", "year", "policy_type", "macro_conditions"];
pub const FOCUS_COLUMN: &str = "government_focus";
pub const RELEVANCE_COLUMN: &str = "relevance_set";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {message}")]
    Open { path: String, message: String },
    #[error("sheet {0:?} not found")]
    NoSheet(String),
    #[error("workbook has no sheets")]
    EmptyWorkbook,
    #[error("missing header row")]
    NoHeader,
    #[error("required column {0:?} missing from header")]
    MissingColumn(&'static str),
    #[error("column {0:?} appears more than once")]
    DuplicateColumn(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowOutcome {
    Episode(PolicyEpisode),
    /// The row as read, with the reasons it cannot be processed.
    Skip {
        episode: PolicyEpisode,
        violations: Vec<Violation>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRow {
    /// 1-based row number in the sheet (the header is row 1 in a normal
    /// workbook).
    pub row: usize,
    pub outcome: RowOutcome,
}

impl CorpusRow {
    pub fn episode(&self) -> &PolicyEpisode {
        match &self.outcome {
            RowOutcome::Episode(e) | RowOutcome::Skip { episode: e, .. } => e,
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self.outcome, RowOutcome::Skip { .. })
    }
}

/// Trimmed, deduplicated ids from a `;`-separated cell.
pub fn parse_id_list(cell: &str) -> BTreeSet<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn normalize_header(h: &str) -> String {
    h.trim().to_lowercase()
}

/// Turns a header and string rows into validated episodes or skips.
pub fn rows_to_corpus(
    header: &[String],
    rows: impl IntoIterator<Item = (usize, Vec<String>)>,
    vocab: &IndicatorVocabulary,
) -> Result<Vec<CorpusRow>, IngestError> {
    let names: Vec<String> = header.iter().map(|h| normalize_header(h)).collect();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            continue;
        }
        if index.insert(name.as_str(), i).is_some() {
            return Err(IngestError::DuplicateColumn(name.clone()));
        }
    }
    for required in REQUIRED_COLUMNS {
        if !index.contains_key(required) {
            return Err(IngestError::MissingColumn(required));
        }
    }

    let mut seen_ids = HashSet::new();
    let mut out = Vec::new();
    for (row, cells) in rows {
        if cells.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let get = |col: &str| -> String {
            index
                .get(col)
                .and_then(|&i| cells.get(i))
                .map(|c| c.trim().to_string())
                .unwrap_or_default()
        };
        let mut episode = PolicyEpisode::new(get("episode_id"), get("description"));
        episode.government_focus = parse_id_list(&get(FOCUS_COLUMN));
        episode.relevance_set = parse_id_list(&get(RELEVANCE_COLUMN));
        for (i, name) in names.iter().enumerate() {
            let reserved = name.is_empty()
                || REQUIRED_COLUMNS.contains(&name.as_str())
                || name == FOCUS_COLUMN
                || name == RELEVANCE_COLUMN;
            if reserved {
                continue;
            }
            let value = cells.get(i).map(|c| c.trim()).unwrap_or("");
            if !value.is_empty() {
                episode.context.insert(name.clone(), value.to_string());
            }
        }

        let mut violations = validate_episode(&episode, vocab);
        if !episode.episode_id.is_empty() && !seen_ids.insert(episode.episode_id.clone()) {
            violations.push(Violation::DuplicateEpisodeId(episode.episode_id.clone()));
        }
        let outcome = if violations.is_empty() {
            RowOutcome::Episode(episode)
        } else {
            RowOutcome::Skip { episode, violations }
        };
        out.push(CorpusRow { row, outcome });
    }
    Ok(out)
}

fn cell_text(cell: &Data) -> String {
    match cell {
        Data::Empty => String::new(),
        Data::String(s) | Data::DateTimeIso(s) | Data::DurationIso(s) => s.clone(),
        // whole numbers (years typed as numbers) should not grow a ".0"
        Data::Float(f) if f.fract() == 0.0 && f.abs() < 1e15 => format!("{}", *f as i64),
        Data::Float(f) => f.to_string(),
        Data::Int(i) => i.to_string(),
        Data::Bool(b) => b.to_string(),
        Data::DateTime(d) => d.to_string(),
        Data::Error(e) => format!("{e:?}"),
    }
}

/// Header cells, then each data row with its 1-based sheet row number.
type RawSheet = (Vec<String>, Vec<(usize, Vec<String>)>);

fn read_xlsx(path: &Path, sheet: Option<&str>) -> Result<RawSheet, IngestError> {
    let open_err = |e: &dyn std::fmt::Display| IngestError::Open {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut workbook = open_workbook_auto(path).map_err(|e| open_err(&e))?;
    let name = match sheet {
        Some(s) => s.to_string(),
        None => workbook
            .sheet_names()
            .first()
            .cloned()
            .ok_or(IngestError::EmptyWorkbook)?,
    };
    if !workbook.sheet_names().contains(&name) {
        return Err(IngestError::NoSheet(name));
    }
    let range = workbook.worksheet_range(&name).map_err(|e| open_err(&e))?;
    let (first_row, first_col) = range.start().unwrap_or((0, 0));
    // pad so that column positions match the sheet even if column A is blank
    let pad = first_col as usize;
    let mut rows = range.rows().enumerate().map(|(i, cells)| {
        let mut texts = vec![String::new(); pad];
        texts.extend(cells.iter().map(cell_text));
        (first_row as usize + i + 1, texts)
    });
    let (_, header) = rows.next().ok_or(IngestError::NoHeader)?;
    Ok((header, rows.collect()))
}

fn read_csv(path: &Path) -> Result<RawSheet, IngestError> {
    let open_err = |e: csv::Error| IngestError::Open {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(open_err)?;
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(rec) => rec.map_err(open_err)?.iter().map(str::to_string).collect(),
        None => return Err(IngestError::NoHeader),
    };
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(open_err)?;
        rows.push((i + 2, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}

/// Reads the corpus at `path`. Files ending in `.csv` use the CSV reader;
/// anything else is opened as a workbook (first sheet unless `sheet` is set).
///
/// Unreadable files and missing required columns are fatal; row-level
/// problems become [`RowOutcome::Skip`].
pub fn read_corpus(
    path: impl AsRef<Path>,
    vocab: &IndicatorVocabulary,
    sheet: Option<&str>,
) -> Result<Vec<CorpusRow>, IngestError> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (header, rows) = if is_csv {
        read_csv(path)?
    } else {
        read_xlsx(path, sheet)?
    };
    rows_to_corpus(&header, rows, vocab)
}
