use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{is_known_country, Manifest, UtteranceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestFormat {
    Jsonl,
    Csv,
}

impl ManifestFormat {
    /// Guesses the format from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ManifestFormat::Csv,
            _ => ManifestFormat::Jsonl,
        }
    }
}

impl FromStr for ManifestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(ManifestFormat::Jsonl),
            "csv" => Ok(ManifestFormat::Csv),
            other => Err(format!("unknown manifest format '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate utterance_id '{id}' on rows {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("line {line}: utterance '{id}' has duration_s {value}; durations must be positive")]
    NonPositiveDuration { line: usize, id: String, value: f64 },
    #[error("line {line}: utterance '{id}' has unknown country code '{code}'")]
    UnknownCountry {
        line: usize,
        id: String,
        code: String,
    },
    #[error("line {line}: utterance '{id}' has an empty {field}")]
    EmptyField {
        line: usize,
        id: String,
        field: &'static str,
    },
    #[error("line {line}: utterance '{id}' has sample_rate_hz 0")]
    ZeroSampleRate { line: usize, id: String },
}

/// Reads and validates a manifest. Row order is preserved.
pub fn load_manifest(path: &Path, format: ManifestFormat) -> Result<Manifest, ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let rows = match format {
        ManifestFormat::Jsonl => read_jsonl(BufReader::new(file))?,
        ManifestFormat::Csv => read_csv(file)?,
    };
    let records = validate_rows(rows)?;
    let base_dir = path.parent().map(Path::to_path_buf);
    Ok(Manifest {
        records,
        source_uri: path.display().to_string(),
        base_dir,
    })
}

/// Writes a manifest as JSON Lines.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in &manifest.records {
        let line = serde_json::to_string(record).expect("records always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<(usize, UtteranceRecord)>, ManifestError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ManifestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        rows.push((line_no, record));
    }
    Ok(rows)
}

fn read_csv(file: File) -> Result<Vec<(usize, UtteranceRecord)>, ManifestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for result in reader.deserialize::<UtteranceRecord>() {
        match result {
            Ok(record) => {
                let line = rows.len() + 2;
                rows.push((line, record));
            }
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(rows.len() + 2);
                return Err(ManifestError::Parse {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(rows)
}

pub(crate) fn validate_rows(
    rows: Vec<(usize, UtteranceRecord)>,
) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for (line, mut r) in rows {
        if r.utterance_id.is_empty() {
            return Err(ManifestError::EmptyField {
                line,
                id: r.utterance_id,
                field: "utterance_id",
            });
        }
        if let Some(&first) = seen.get(&r.utterance_id) {
            return Err(ManifestError::DuplicateId {
                id: r.utterance_id,
                first,
                second: line,
            });
        }
        if !(r.duration_s.is_finite() && r.duration_s > 0.0) {
            return Err(ManifestError::NonPositiveDuration {
                line,
                id: r.utterance_id,
                value: r.duration_s,
            });
        }
        r.country = r.country.trim().to_ascii_uppercase();
        if !is_known_country(&r.country) {
            return Err(ManifestError::UnknownCountry {
                line,
                id: r.utterance_id,
                code: r.country,
            });
        }
        for (field, value) in [("accent", &r.accent), ("speaker_id", &r.speaker_id)] {
            if value.is_empty() {
                return Err(ManifestError::EmptyField {
                    line,
                    id: r.utterance_id.clone(),
                    field,
                });
            }
        }
        if r.sample_rate_hz == 0 {
            return Err(ManifestError::ZeroSampleRate {
                line,
                id: r.utterance_id,
            });
        }
        seen.insert(r.utterance_id.clone(), line);
        records.push(r);
    }
    Ok(records)
}
