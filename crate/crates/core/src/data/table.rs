use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::DataError;

/// CSV contents as strings, before any typing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source_path: String,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.header.iter().position(|h| h == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[index].as_str())
    }
}

/// Loads a comma-separated flow table.
pub fn load_flow_csv(path: impl AsRef<Path>) -> Result<RawTable, DataError> {
    load_flow_csv_with(path, b',')
}

pub fn load_flow_csv_with(path: impl AsRef<Path>, delimiter: u8) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(io_err)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err)?;
    parse_flow_csv(&bytes, delimiter, &path.display().to_string())
}

/// Parses CSV bytes; `source` is only used for reporting.
pub fn parse_flow_csv(bytes: &[u8], delimiter: u8, source: &str) -> Result<RawTable, DataError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(bytes);

    let mut records = reader.records();
    let header_record = match records.next() {
        None => {
            return Err(DataError::Format {
                line: 1,
                message: format!("{source}: empty file, header row required"),
            })
        }
        Some(r) => r.map_err(|e| csv_error(e, source))?,
    };
    let header = dedupe_header(
        header_record
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
            .collect(),
    );
    if header.iter().all(String::is_empty) {
        return Err(DataError::Format {
            line: 1,
            message: format!("{source}: blank header row"),
        });
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(e, source))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        // Fully blank trailing lines are common in exported captures.
        if record.len() == 1 && record[0].trim().is_empty() && header.len() > 1 {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::Format {
                line,
                message: format!(
                    "{source}: expected {} cells, found {}",
                    header.len(),
                    record.len()
                ),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable {
        header,
        rows,
        source_path: source.to_string(),
    })
}

fn csv_error(e: csv::Error, source: &str) -> DataError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    DataError::Format {
        line,
        message: format!("{source}: {e}"),
    }
}

/// Repeated column names get `.1`, `.2`, ... suffixes, as CICFlowMeter exports
/// contain a duplicated `Fwd Header Length` column.
fn dedupe_header(names: Vec<String>) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let mut candidate = name.clone();
        let mut n = 1;
        while seen.contains(&candidate) {
            candidate = format!("{name}.{n}");
            n += 1;
        }
        if candidate != name {
            log::warn!("duplicate column {name:?} renamed to {candidate:?}");
        }
        seen.insert(candidate.clone());
        out.push(candidate);
    }
    out
}
