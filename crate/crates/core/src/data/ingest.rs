use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::AttributeRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// Comma-separated with a `source,attribute,value` header.
    Delimited,
    /// One JSON object per line with `source`, `attribute` and `value` keys.
    RecordPerLine,
}

impl InputFormat {
    /// Guesses from the file extension; anything that is not `.jsonl`/`.ndjson`/`.json` is delimited.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => InputFormat::RecordPerLine,
            _ => InputFormat::Delimited,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "delimited" => Ok(InputFormat::Delimited),
            "jsonl" | "ndjson" | "record-per-line" => Ok(InputFormat::RecordPerLine),
            other => Err(Error::arg(format!("unknown input format {other:?}"))),
        }
    }
}

pub fn ingest(path: &Path, format: InputFormat) -> Result<Vec<AttributeRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_str(&text, format, path)
}

/// Parses already-loaded text; `origin` is only used in error messages.
pub fn ingest_str(text: &str, format: InputFormat, origin: &Path) -> Result<Vec<AttributeRecord>> {
    let records = match format {
        InputFormat::Delimited => parse_delimited(text, origin)?,
        InputFormat::RecordPerLine => parse_lines(text, origin)?,
    };
    if records.is_empty() {
        return Err(Error::arg(format!("{}: no records", origin.display())));
    }
    Ok(records)
}

fn row_error(origin: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        path: PathBuf::from(origin),
        line,
        message: message.into(),
    }
}

fn parse_delimited(text: &str, origin: &Path) -> Result<Vec<AttributeRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| row_error(origin, 1, e.to_string()))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| row_error(origin, 1, format!("header is missing the {name:?} column")))
    };
    let (src, attr, val) = (column("source")?, column("attribute")?, column("value")?);

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_error(origin, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            row.get(i)
                .map(str::to_owned)
                .ok_or_else(|| row_error(origin, line, format!("missing {name} field")))
        };
        let record = AttributeRecord {
            source: field(src, "source")?,
            attribute: field(attr, "attribute")?,
            value: field(val, "value")?,
        };
        if record.attribute.is_empty() {
            return Err(row_error(origin, line, "empty attribute label"));
        }
        out.push(record);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct LineRecord {
    source: Option<String>,
    attribute: Option<String>,
    value: Option<String>,
}

fn parse_lines(text: &str, origin: &Path) -> Result<Vec<AttributeRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: LineRecord =
            serde_json::from_str(line).map_err(|e| row_error(origin, lineno, e.to_string()))?;
        let missing = |name: &str| row_error(origin, lineno, format!("missing {name} field"));
        let record = AttributeRecord {
            source: raw.source.ok_or_else(|| missing("source"))?,
            attribute: raw.attribute.ok_or_else(|| missing("attribute"))?,
            value: raw.value.ok_or_else(|| missing("value"))?,
        };
        if record.attribute.is_empty() {
            return Err(row_error(origin, lineno, "empty attribute label"));
        }
        out.push(record);
    }
    Ok(out)
}

/// Writes records in the delimited format, quoting as needed.
pub fn write_delimited<W: std::io::Write>(records: &[AttributeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "attribute", "value"])
        .map_err(|e| Error::Internal(e.to_string()))?;
    for r in records {
        w.write_record([&r.source, &r.attribute, &r.value])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes records one JSON object per line.
pub fn write_lines<W: std::io::Write>(records: &[AttributeRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn delimited_keeps_value_exactly() {
        let text = "source,attribute,value\ncarfax,mpg,\"21 city / 32 hwy EPA Fuel Economy Guide\"\n";
        let r = ingest_str(text, InputFormat::Delimited, p()).unwrap();
        assert_eq!(r, vec![AttributeRecord::new("carfax", "mpg", "21 city / 32 hwy EPA Fuel Economy Guide")]);
    }

    #[test]
    fn empty_value_and_duplicates() {
        let text = "source,attribute,value\na,x,\"\"\na,x,\"\"\n";
        let r = ingest_str(text, InputFormat::Delimited, p()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].value, "");
        assert_eq!(r[0], r[1]);
    }

    #[test]
    fn missing_field_reports_line() {
        let text = "source,attribute,value\na,x,1\nb,y\n";
        match ingest_str(text, InputFormat::Delimited, p()) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected row error, got {other:?}"),
        }
        let text = "{\"source\":\"a\",\"attribute\":\"x\",\"value\":\"1\"}\n{\"source\":\"a\",\"value\":\"1\"}\n";
        match ingest_str(text, InputFormat::RecordPerLine, p()) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            ingest_str("", InputFormat::RecordPerLine, p()),
            Err(Error::Argument(_))
        ));
        assert!(ingest_str("source,attribute,value\n", InputFormat::Delimited, p()).is_err());
    }

    #[test]
    fn header_column_order_is_free() {
        let text = "value,source,attribute\n\"$1,200\",s1,price\n";
        let r = ingest_str(text, InputFormat::Delimited, p()).unwrap();
        assert_eq!(r[0], AttributeRecord::new("s1", "price", "$1,200"));
    }

    #[test]
    fn writers_roundtrip() {
        let recs = vec![
            AttributeRecord::new("s", "a", "x, \"quoted\"\nnewline"),
            AttributeRecord::new("t", "b", "72°F"),
        ];
        let mut buf = Vec::new();
        write_delimited(&recs, &mut buf).unwrap();
        let back = ingest_str(std::str::from_utf8(&buf).unwrap(), InputFormat::Delimited, p()).unwrap();
        assert_eq!(back, recs);
        let mut buf = Vec::new();
        write_lines(&recs, &mut buf).unwrap();
        let back = ingest_str(std::str::from_utf8(&buf).unwrap(), InputFormat::RecordPerLine, p()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn format_from_path() {
        assert_eq!(InputFormat::from_path(Path::new("a.jsonl")), InputFormat::RecordPerLine);
        assert_eq!(InputFormat::from_path(Path::new("a.csv")), InputFormat::Delimited);
    }
}
