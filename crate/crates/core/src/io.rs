//! File formats: dense CSV matrices, sparse `i,j,value` triplets, forest
//! JSON and JSON-lines expansion logs.
//!
//! Dense CSV is comma separated with `.` decimals. A first line containing
//! any non-numeric field is taken as a header; its fields become labels.
//! Numbers are written in Rust's shortest round-trip form, so writing and
//! reading back is lossless and output is byte-stable across platforms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{CliqueForest, ForestJson};
use crate::mfcf::ExpansionLog;

/// A dense matrix read from CSV, with header labels when present.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledMatrix {
    pub values: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Parse dense CSV text.
pub fn parse_matrix_csv(text: &str) -> Result<LabelledMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(parse_field).collect();
        if line == 0 && parsed.iter().any(Option::is_none) {
            labels = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let row: Vec<f64> = parsed
            .into_iter()
            .enumerate()
            .map(|(col, x)| {
                x.ok_or_else(|| {
                    Error::Parse(format!("line {}, column {}: not a number", line + 1, col + 1))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows".into()));
    }
    let ncols = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "row {} has {} fields, expected {ncols}",
            bad + 1,
            rows[bad].len()
        )));
    }
    if let Some(l) = &labels {
        if l.len() != ncols {
            return Err(Error::Parse(format!(
                "header has {} fields, data has {ncols}",
                l.len()
            )));
        }
    }
    let values = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    Ok(LabelledMatrix { values, labels })
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<LabelledMatrix> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_matrix_csv(&text)
}

pub fn format_matrix_csv(m: &DMatrix<f64>, labels: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(l) = labels {
        out.push_str(&l.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(
    path: impl AsRef<Path>,
    m: &DMatrix<f64>,
    labels: Option<&[String]>,
) -> Result<()> {
    std::fs::write(path, format_matrix_csv(m, labels))?;
    Ok(())
}

/// Upper-triangle entries (diagonal included) with `|x| > zero_tol` as
/// `i,j,value` lines under an `i,j,value` header.
pub fn format_triplets(m: &DMatrix<f64>, zero_tol: f64) -> String {
    let mut out = String::from("i,j,value\n");
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let x = m[(i, j)];
            if x.abs() > zero_tol {
                out.push_str(&format!("{i},{j},{}\n", fmt_f64(x)));
            }
        }
    }
    out
}

pub fn write_triplets(path: impl AsRef<Path>, m: &DMatrix<f64>, zero_tol: f64) -> Result<()> {
    std::fs::write(path, format_triplets(m, zero_tol))?;
    Ok(())
}

/// Symmetric `p × p` matrix from triplets; missing entries are zero.
pub fn parse_triplets(text: &str, p: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(p, p);
    for (line, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() || (line == 0 && raw.starts_with('i')) {
            continue;
        }
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("line {}: expected i,j,value", line + 1));
        if f.len() != 3 {
            return Err(bad());
        }
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        let x: f64 = f[2].parse().map_err(|_| bad())?;
        if i >= p || j >= p {
            return Err(Error::Parse(format!("line {}: index out of range for p = {p}", line + 1)));
        }
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    Ok(m)
}

/// Forest JSON with one clique, separator or tree edge per line.
pub fn forest_to_string(forest: &CliqueForest) -> Result<String> {
    let json = forest.to_json();
    fn rows<T: serde::Serialize>(items: &[T]) -> Result<String> {
        if items.is_empty() {
            return Ok("[]".into());
        }
        let lines: Vec<String> = items
            .iter()
            .map(|x| serde_json::to_string(x).map(|s| format!("    {s}")))
            .collect::<std::result::Result<_, _>>()?;
        Ok(format!("[\n{}\n  ]", lines.join(",\n")))
    }
    let mut s = format!("{{\n  \"p\": {},\n", json.p);
    s += &format!("  \"cliques\": {},\n", rows(&json.cliques)?);
    s += &format!("  \"separators\": {},\n", rows(&json.separators)?);
    s += &format!("  \"tree\": {},\n", rows(&json.tree)?);
    s += &format!("  \"vertex_order\": {}", serde_json::to_string(&json.vertex_order)?);
    if let Some(labels) = &json.labels {
        s += &format!(",\n  \"labels\": {}", serde_json::to_string(labels)?);
    }
    s += "\n}\n";
    Ok(s)
}

pub fn write_forest(path: impl AsRef<Path>, forest: &CliqueForest) -> Result<()> {
    std::fs::write(path, forest_to_string(forest)?)?;
    Ok(())
}

/// Parse forest JSON. Structure is not checked; see [`CliqueForest::check`].
pub fn parse_forest(text: &str) -> Result<CliqueForest> {
    if text.trim().is_empty() {
        return Err(Error::Parse("empty forest file".into()));
    }
    let json: ForestJson = serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("forest JSON at line {}, column {}: {e}", e.line(), e.column()))
    })?;
    CliqueForest::from_json(json)
}

pub fn read_forest(path: impl AsRef<Path>) -> Result<CliqueForest> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_forest(&text)
}

/// One JSON object per expansion step.
pub fn write_log_jsonl(path: impl AsRef<Path>, log: &ExpansionLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for step in &log.steps {
        serde_json::to_writer(&mut w, step)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip decimal; negative zero is written as `0`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}
