//! Line-delimited JSON helpers shared by the packet, flow and dataset formats.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Iterates the non-blank lines of `reader`, decoding each as `T`.
/// Line numbers in errors are 1-based.
pub fn read_lines<T, R>(reader: R) -> impl Iterator<Item = Result<T, JsonlError>>
where
    T: DeserializeOwned,
    R: BufRead,
{
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(JsonlError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map_err(|e| JsonlError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })),
        })
}

/// Decodes a whole in-memory buffer. Used by the fuzz targets.
pub fn parse_all<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, JsonlError> {
    read_lines(bytes).collect()
}

pub fn write_line<T: Serialize, W: Write>(mut writer: W, value: &T) -> Result<(), JsonlError> {
    serde_json::to_writer(&mut writer, value).map_err(|e| JsonlError::Malformed {
        line: 0,
        message: e.to_string(),
    })?;
    writer.write_all(b"\n")?;
    Ok(())
}
