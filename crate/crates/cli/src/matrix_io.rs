//! CSV matrices: one matrix row per line, comma separated. Data points are
//! columns. An optional first line `# d n` declares the shape.

use std::fs;
use std::io::Write;
use std::path::Path;

use csa_core::linalg::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Line { path: String, line: u64, message: String },
    #[error("{path}: {message}")]
    Matrix { path: String, message: String },
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.trim_start_matches('#').split_whitespace();
    let d = it.next()?.parse().ok()?;
    let n = it.next()?.parse().ok()?;
    it.next().is_none().then_some((d, n))
}

pub fn parse_matrix_csv(path: &Path) -> Result<DenseMatrix, ParseError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_matrix_str(&text, &shown)
}

pub fn parse_matrix_str(text: &str, path: &str) -> Result<DenseMatrix, ParseError> {
    let line_err = |line: u64, message: String| ParseError::Line {
        path: path.to_string(),
        line,
        message,
    };
    let (header, body, offset) = match text.lines().next() {
        Some(first) if first.trim_start().starts_with('#') => {
            let shape = parse_header(first.trim())
                .ok_or_else(|| line_err(1, format!("expected header `# d n`, found `{}`", first.trim())))?;
            let rest = text.split_once('\n').map_or("", |(_, r)| r);
            (Some(shape), rest, 1)
        }
        _ => (None, text, 0),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line()) + offset;
            line_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line()) + offset;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| line_err(line, format!("column {}: `{cell}` is not a finite number", j + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(line_err(
                    line,
                    format!("expected {} values, found {}", first.len(), values.len()),
                ));
            }
        }
        rows.push(values);
    }
    let matrix = DenseMatrix::from_rows(&rows).map_err(|e| ParseError::Matrix {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    if let Some((d, n)) = header {
        if (d, n) != (matrix.rows(), matrix.cols()) {
            return Err(ParseError::Matrix {
                path: path.to_string(),
                message: format!("header declares {d}x{n}, data is {}x{}", matrix.rows(), matrix.cols()),
            });
        }
    }
    Ok(matrix)
}

/// Writes `m` with a `# d n` header; values use the shortest round-trip form.
pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> std::io::Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "# {} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.as_matrix()[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
