//! CSV helpers shared by the dataset readers and writers.
//!
//! Lines starting with `#` are comments; artifact writers use one to stamp
//! provenance (config hash and seed) above the header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },
}

impl DataError {
    pub fn parse(source_name: &str, line: u64, message: impl Into<String>) -> Self {
        DataError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}

fn csv_error(source_name: &str, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    DataError::parse(source_name, line, message)
}

/// Deserializes every record of a headed CSV stream, returning each row with
/// its 1-based line number.
pub fn read_rows<T: DeserializeOwned, R: Read>(
    reader: R,
    source_name: &str,
) -> Result<Vec<(u64, T)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(source_name, e))?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source_name, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .deserialize(Some(&headers))
            .map_err(|e| DataError::parse(source_name, line, csv_error(source_name, e).to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn read_rows_from_path<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_rows(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes rows as CSV with an optional leading `# ...` comment line.
pub fn write_rows<T: Serialize, W: Write>(
    writer: W,
    comment: Option<&str>,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), csv::Error> {
    let mut writer = writer;
    if let Some(c) = comment {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize, PartialEq)]
    struct Row {
        id: String,
        v: f64,
    }

    #[test]
    fn comments_and_line_numbers() {
        let text = "# stamp\nid,v\na,1.5\nb,oops\n";
        let err = read_rows::<Row, _>(text.as_bytes(), "t.csv").unwrap_err();
        assert!(err.to_string().starts_with("t.csv:4:"), "{err}");
        let ok = read_rows::<Row, _>("id,v\na, 2\n".as_bytes(), "t.csv").unwrap();
        assert_eq!(ok, vec![(2, Row { id: "a".into(), v: 2.0 })]);
    }

    #[test]
    fn extra_columns_are_ignored() {
        let rows = read_rows::<Row, _>("id,v,extra\na,1,zzz\n".as_bytes(), "t").unwrap();
        assert_eq!(rows[0].1.v, 1.0);
    }
}
