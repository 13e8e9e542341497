//! Versioned JSON documents for trained models and pipelines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed document: {0}")]
    Schema(String),
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, PersistError> {
    serde_json::to_string_pretty(value).map_err(|e| PersistError::Schema(e.to_string()))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PersistError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| PersistError::Schema(e.to_string()))?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Parses a document whose top-level `format_version` must equal `expected`.
pub fn from_json_str<T: DeserializeOwned>(text: &str, expected: u32) -> Result<T, PersistError> {
    let header: Header = parse(text)?;
    if header.format_version != expected {
        return Err(PersistError::VersionMismatch {
            found: header.format_version,
            expected,
        });
    }
    parse(text)
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, PersistError> {
    let mut de = serde_json::Deserializer::from_str(text);
    // Deep trees nest well past serde_json's default limit of 128.
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de).map_err(|e| PersistError::Schema(e.to_string()))?;
    de.end().map_err(|e| PersistError::Schema(e.to_string()))?;
    Ok(value)
}

pub fn load_json<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T, PersistError> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(File::open(path).map_err(io_err(path))?), &mut text)
        .map_err(io_err(path))?;
    from_json_str(&text, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Doc {
        format_version: u32,
        x: f64,
    }

    #[test]
    fn round_trip_and_errors() {
        let doc = Doc {
            format_version: 1,
            x: 0.1 + 0.2,
        };
        let text = to_json_string(&doc).unwrap();
        assert_eq!(from_json_str::<Doc>(&text, 1).unwrap(), doc);
        assert!(matches!(
            from_json_str::<Doc>(&text, 2),
            Err(PersistError::VersionMismatch { found: 1, expected: 2 })
        ));
        assert!(matches!(
            from_json_str::<Doc>(&text[..text.len() / 2], 1),
            Err(PersistError::Schema(_))
        ));
        assert!(matches!(from_json_str::<Doc>("{\"x\": 1.0}", 1), Err(PersistError::Schema(_))));
    }
}
