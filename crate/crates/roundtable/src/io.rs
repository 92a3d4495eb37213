//! Dataset files: RFC-4180 CSV with a `\N` null sentinel, and JSONL with one
//! flat object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use roundtable_core::table::is_identifier;
use roundtable_core::{Cell, ReviewTable};
use serde_json::Value;

/// How a null cell is written in CSV.
pub const CSV_NULL: &str = "\\N";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl`/`.ndjson` are JSONL, everything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jsonl" | "ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub table: ReviewTable,
    pub format: Format,
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate header `{0}`")]
    DuplicateHeader(String),
    #[error("header `{0}` is not a valid column name")]
    BadHeader(String),
    #[error("input has no header")]
    NoHeader,
    #[error("row {row}, column `{column}`: the text `\\N` is reserved for null in CSV")]
    ReservedText { row: usize, column: String },
}

fn check_headers(headers: &[String]) -> Result<(), IoError> {
    for (i, h) in headers.iter().enumerate() {
        if !is_identifier(h) {
            return Err(IoError::BadHeader(h.clone()));
        }
        if headers[..i].contains(h) {
            return Err(IoError::DuplicateHeader(h.clone()));
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Malformed {
        line,
        message: e.to_string(),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<ReviewTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if headers.is_empty() || headers == [""] {
        return Err(IoError::NoHeader);
    }
    check_headers(&headers)?;
    let mut table = ReviewTable::new(headers).map_err(|e| IoError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let row: Vec<Cell> = record
            .iter()
            .map(|c| (c != CSV_NULL).then(|| c.to_string()))
            .collect();
        let line = record.position().map_or(0, |p| p.line());
        table.push_row(row).map_err(|e| IoError::Malformed {
            line,
            message: e.to_string(),
        })?;
    }
    Ok(table)
}

pub fn write_csv<W: Write>(table: &ReviewTable, writer: W) -> Result<(), IoError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(writer);
    let io = |e: csv::Error| IoError::Io {
        path: "<output>".into(),
        source: e.into(),
    };
    wtr.write_record(table.columns()).map_err(io)?;
    for (r, row) in table.rows().iter().enumerate() {
        let mut record = Vec::with_capacity(row.len());
        for (c, cell) in row.iter().enumerate() {
            record.push(match cell {
                None => CSV_NULL,
                Some(s) if s == CSV_NULL => {
                    return Err(IoError::ReservedText {
                        row: r,
                        column: table.columns()[c].clone(),
                    })
                }
                Some(s) => s.as_str(),
            });
        }
        wtr.write_record(&record).map_err(io)?;
    }
    wtr.flush().map_err(|e| IoError::Io {
        path: "<output>".into(),
        source: e,
    })
}

fn json_cell(line: u64, key: &str, v: Value) -> Result<Cell, IoError> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s)),
        Value::Bool(b) => Ok(Some(b.to_string())),
        Value::Number(n) => Ok(Some(n.to_string())),
        Value::Array(_) | Value::Object(_) => Err(IoError::Malformed {
            line,
            message: format!("key `{key}` holds a nested value"),
        }),
    }
}

/// Columns are the union of keys in order of first appearance; a missing key
/// is null.
pub fn read_jsonl<R: Read>(reader: R) -> Result<ReviewTable, IoError> {
    let mut columns: Vec<String> = Vec::new();
    let mut records: Vec<IndexMap<String, Cell>> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let n = i as u64 + 1;
        let line = line.map_err(|e| IoError::Malformed {
            line: n,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: IndexMap<String, Value> = serde_json::from_str(&line).map_err(|e| IoError::Malformed {
            line: n,
            message: e.to_string(),
        })?;
        let mut record = IndexMap::with_capacity(obj.len());
        for (k, v) in obj {
            if !columns.contains(&k) {
                if !is_identifier(&k) {
                    return Err(IoError::BadHeader(k));
                }
                columns.push(k.clone());
            }
            let cell = json_cell(n, &k, v)?;
            record.insert(k, cell);
        }
        records.push(record);
    }
    let rows = records
        .into_iter()
        .map(|mut r| columns.iter().map(|c| r.swap_remove(c).flatten()).collect())
        .collect();
    ReviewTable::from_rows(columns, rows).map_err(|e| IoError::Malformed {
        line: 0,
        message: e.to_string(),
    })
}

/// Null keys are omitted, except on the first line, which lists every column
/// so that column order and all-null columns survive a round trip.
pub fn write_jsonl<W: Write>(table: &ReviewTable, writer: W) -> Result<(), IoError> {
    let mut w = BufWriter::new(writer);
    let io = |e: std::io::Error| IoError::Io {
        path: "<output>".into(),
        source: e,
    };
    for (r, row) in table.rows().iter().enumerate() {
        let obj: IndexMap<&str, &Cell> = table
            .columns()
            .iter()
            .zip(row)
            .filter(|(_, cell)| r == 0 || cell.is_some())
            .map(|(c, cell)| (c.as_str(), cell))
            .collect();
        serde_json::to_writer(&mut w, &obj).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path, format: Format) -> Result<Dataset, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let table = match format {
        Format::Csv => read_csv(file)?,
        Format::Jsonl => read_jsonl(file)?,
    };
    Ok(Dataset { table, format })
}

pub fn write_dataset(table: &ReviewTable, path: &Path, format: Format) -> Result<(), IoError> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(table, &mut buf)?,
        Format::Jsonl => write_jsonl(table, &mut buf)?,
    }
    std::fs::write(path, buf).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<ReviewTable, IoError> {
        read_csv(text.as_bytes())
    }

    fn to_csv(t: &ReviewTable) -> String {
        let mut out = Vec::new();
        write_csv(t, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn minimal_csv() {
        let t = csv("title,abstract\nA,B").unwrap();
        assert_eq!((t.num_rows(), t.num_columns()), (1, 2));
        assert_eq!(t.cell(0, "abstract"), Some(Some("B")));
    }

    #[test]
    fn csv_nulls_and_empty_strings() {
        let t = csv("a,b\n\\N,\n").unwrap();
        assert_eq!(t.cell(0, "a"), Some(None));
        assert_eq!(t.cell(0, "b"), Some(Some("")));
        assert_eq!(to_csv(&t), "a,b\r\n\\N,\r\n");
    }

    #[test]
    fn duplicate_header() {
        assert!(matches!(csv("a,a\n1,2\n"), Err(IoError::DuplicateHeader(h)) if h == "a"));
    }

    #[test]
    fn ragged_row_reports_line() {
        match csv("a,b\n1,2\n3\n") {
            Err(IoError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_cells_are_quoted() {
        let t = ReviewTable::from_rows(
            ["output"],
            vec![vec![Some(r#"{"a":"x, \"y\""}"#.into())]],
        )
        .unwrap();
        let text = to_csv(&t);
        assert_eq!(text, "output\r\n\"{\"\"a\"\":\"\"x, \\\"\"y\\\"\"\"\"}\"\r\n");
        assert_eq!(csv(&text).unwrap(), t);
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ReviewTable::new(["a", "b"]).unwrap();
        assert_eq!(to_csv(&t), "a,b\r\n");
        assert_eq!(csv("a,b\r\n").unwrap(), t);
    }

    #[test]
    fn reserved_text_is_rejected() {
        let t = ReviewTable::from_rows(["a"], vec![vec![Some("\\N".into())]]).unwrap();
        assert!(matches!(write_csv(&t, Vec::new()), Err(IoError::ReservedText { .. })));
    }

    #[test]
    fn jsonl_key_union() {
        let t = read_jsonl(&b"{\"title\":\"A\"}\n{\"title\":\"B\",\"abstract\":\"C\"}\n"[..]).unwrap();
        assert_eq!(t.columns(), ["title", "abstract"]);
        assert_eq!(t.cell(0, "abstract"), Some(None));
        assert_eq!(t.cell(1, "abstract"), Some(Some("C")));
    }

    #[test]
    fn jsonl_scalars_and_nesting() {
        let t = read_jsonl(&b"{\"n\":4,\"b\":true,\"z\":null}\n"[..]).unwrap();
        assert_eq!(t.cell(0, "n"), Some(Some("4")));
        assert_eq!(t.cell(0, "b"), Some(Some("true")));
        assert_eq!(t.cell(0, "z"), Some(None));
        assert!(read_jsonl(&b"{\"a\":[1]}\n"[..]).is_err());
        assert!(matches!(read_jsonl(&b"{}\nnope\n"[..]), Err(IoError::Malformed { line: 2, .. })));
    }

    #[test]
    fn jsonl_omits_nulls_after_first_line() {
        let t = ReviewTable::from_rows(
            ["a", "b"],
            vec![vec![None, Some("1".into())], vec![Some("2".into()), None]],
        )
        .unwrap();
        let mut out = Vec::new();
        write_jsonl(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "{\"a\":null,\"b\":\"1\"}\n{\"a\":\"2\"}\n");
        assert_eq!(read_jsonl(&out[..]).unwrap(), t);
    }

    #[test]
    fn format_from_path() {
        assert_eq!(Format::from_path(Path::new("x.JSONL")), Format::Jsonl);
        assert_eq!(Format::from_path(Path::new("x.csv")), Format::Csv);
        assert_eq!("jsonl".parse::<Format>(), Ok(Format::Jsonl));
    }
}
