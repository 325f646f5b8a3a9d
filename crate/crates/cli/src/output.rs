use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::args::Format;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-5, 1e16)` so no value prints as a long run of zeros.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format_number(*v),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

pub type Row = Vec<Cell>;

/// Everything a command hands back: column names, a (possibly lazy) row
/// stream, and whether the run counts as a pass.
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Box<dyn Iterator<Item = Row>>,
    pub notes: Vec<String>,
    pub passed: bool,
    /// Extra flat fields for the JSON body and the manifest.
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn new(columns: Vec<&'static str>, rows: impl Iterator<Item = Row> + 'static) -> Self {
        Self {
            columns,
            rows: Box::new(rows),
            notes: Vec::new(),
            passed: true,
            summary: Map::new(),
        }
    }

    pub fn eager(columns: Vec<&'static str>, rows: Vec<Row>) -> Self {
        Self::new(columns, rows.into_iter())
    }
}

pub struct Manifest {
    pub command: &'static str,
    pub parameters: Map<String, Value>,
    pub seed: u64,
    pub version: &'static str,
    pub timestamp: String,
}

impl Manifest {
    fn fields(
        &self,
        checksum: &str,
        passed: bool,
        notes: &[String],
        summary: &Map<String, Value>,
    ) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
        m.insert("command".into(), json!(self.command));
        m.insert("version".into(), json!(self.version));
        m.insert("seed".into(), json!(self.seed));
        m.insert("timestamp".into(), json!(self.timestamp));
        m.insert("parameters".into(), Value::Object(self.parameters.clone()));
        m.insert("checksum".into(), json!(checksum));
        m.insert("passed".into(), json!(passed));
        m.insert("notes".into(), json!(notes));
        for (k, v) in summary {
            m.insert(k.clone(), v.clone());
        }
        m
    }
}

fn csv_line(cells: impl Iterator<Item = String>) -> String {
    let mut s = cells.collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the report. The checksum is the SHA-256 of the CSV rendering of the
/// data (header plus rows), whatever the output format, so it never depends
/// on the timestamp.
pub fn emit(
    report: Report,
    manifest: &Manifest,
    format: Format,
    output: Option<&Path>,
) -> io::Result<String> {
    let sink: Box<dyn Write> = match output {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    let mut hasher = Sha256::new();
    let header = csv_line(report.columns.iter().map(|c| c.to_string()));
    hasher.update(header.as_bytes());

    let Report {
        columns,
        rows: mut rows_iter,
        notes,
        passed,
        summary,
    } = report;

    match format {
        Format::Csv => {
            out.write_all(header.as_bytes())?;
            for row in &mut rows_iter {
                let line = csv_line(row.iter().map(Cell::csv));
                hasher.update(line.as_bytes());
                out.write_all(line.as_bytes())?;
            }
        }
        Format::Json => {
            // rows first so the checksum is known when the trailer is written
            out.write_all(b"{\"columns\":")?;
            serde_json::to_writer(&mut out, &columns)?;
            out.write_all(b",\"rows\":[")?;
            let mut first = true;
            for row in &mut rows_iter {
                let line = csv_line(row.iter().map(Cell::csv));
                hasher.update(line.as_bytes());
                let obj: Map<String, Value> = columns
                    .iter()
                    .zip(&row)
                    .map(|(c, v)| (c.to_string(), v.json()))
                    .collect();
                if !first {
                    out.write_all(b",")?;
                }
                first = false;
                out.write_all(b"\n")?;
                serde_json::to_writer(&mut out, &obj)?;
            }
            out.write_all(b"]")?;
        }
    }
    let checksum = hex(&hasher.finalize());
    let fields = manifest.fields(&checksum, passed, &notes, &summary);
    match format {
        Format::Csv => {
            out.flush()?;
            if let Some(p) = output {
                let f = File::create(sidecar_path(p))?;
                serde_json::to_writer_pretty(&f, &Value::Object(fields))?;
            }
        }
        Format::Json => {
            for (k, v) in &fields {
                write!(out, ",\n{}:{}", json!(k), v)?;
            }
            out.write_all(b"\n}\n")?;
            out.flush()?;
        }
    }
    Ok(checksum)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
