//! Reading labelled numeric tables and writing result bundles.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Alignment, Side};
use crate::inference::Method;
use crate::pca::Dataset;
use crate::simulation::CoverageTable;

#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    /// `None` picks whichever of `,` `;` and tab occurs most in the header.
    pub delimiter: Option<u8>,
    pub decimal: char,
    /// First column holds row labels.
    pub row_labels: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: None,
            decimal: '.',
            row_labels: true,
        }
    }
}

fn detect_delimiter(text: &str, decimal: char) -> u8 {
    let header = text.lines().next().unwrap_or("");
    [b',', b';', b'\t']
        .into_iter()
        .filter(|&d| !(decimal == ',' && d == b','))
        .max_by_key(|&d| header.bytes().filter(|&b| b == d).count())
        .unwrap_or(b',')
}

pub fn read_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string(), opts)
}

/// Parses CSV text; `source` names the input in error messages.
pub fn parse_csv(text: &str, source: &str, opts: &CsvOptions) -> Result<Dataset> {
    let delimiter = opts
        .delimiter
        .unwrap_or_else(|| detect_delimiter(text, opts.decimal));
    let malformed = |message: String| Error::Malformed {
        path: source.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    let skip = opts.row_labels as usize;
    let col_labels: Vec<String> = header.iter().skip(skip).map(str::to_string).collect();
    let width = header.len();

    let mut row_labels = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(k + 2);
        if record.len() != width {
            return Err(malformed(format!(
                "line {line} has {} fields, header has {width}",
                record.len()
            )));
        }
        row_labels.push(if opts.row_labels {
            record[0].to_string()
        } else {
            format!("R{}", k + 1)
        });
        for (c, field) in record.iter().enumerate().skip(skip) {
            let normalized = if opts.decimal == '.' {
                field.to_string()
            } else {
                field.replace(opts.decimal, ".")
            };
            let v: f64 = normalized.parse().map_err(|_| Error::ParseNumber {
                path: source.to_string(),
                line,
                column: c + 1,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseNumber {
                    path: source.to_string(),
                    line,
                    column: c + 1,
                    value: field.to_string(),
                });
            }
            values.push(v);
        }
    }
    let (n, p) = (row_labels.len(), col_labels.len());
    let matrix = DMatrix::from_row_iterator(n, p, values);
    Dataset::new(matrix, row_labels, col_labels)
}

/// Fit-level numbers reported for a data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub rank: usize,
    pub scaled: bool,
    /// Every eigenvalue of the centered (and scaled) matrix.
    pub eigenvalues: Vec<f64>,
    pub explained_percent: Vec<f64>,
    /// `n x S` row scores.
    pub scores: Vec<Vec<f64>>,
    /// `p x S` column loadings.
    pub loadings: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub df: i64,
    pub curvature: Option<f64>,
    pub sigma_curvature: Option<f64>,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub method: Method,
    pub replicates: usize,
    pub seed: Option<u64>,
    pub level: f64,
    pub alignment: Alignment,
    pub skipped_cells: Vec<(String, String)>,
    pub flagged_replicates: usize,
}

/// A 2-D confidence ellipse around one row or column point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseRecord {
    pub side: Side,
    pub label: String,
    /// 1-based dimensions `(x, y)`.
    pub dims: [usize; 2],
    pub point: [f64; 2],
    pub center: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub level: f64,
    pub radius2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub summary: FitSummary,
    pub inference: Option<InferenceSummary>,
    pub ellipses: Vec<EllipseRecord>,
    pub coverage: Option<CoverageTable>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn coordinate_table(
    path: &Path,
    first: &str,
    labels: &[String],
    coords: &[Vec<f64>],
) -> Result<()> {
    let width = coords.first().map_or(0, Vec::len);
    let mut header = vec![first.to_string()];
    header.extend((1..=width).map(|k| format!("Dim{k}")));
    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(coords)
        .map(|(l, c)| {
            std::iter::once(l.clone())
                .chain(c.iter().map(f64::to_string))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Writes `results.json`, `scores.csv`, `loadings.csv`, `ellipses.csv` and,
/// when present, `coverage.csv`.
pub fn write_results(bundle: &ResultBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let json = serde_json::to_string_pretty(bundle)?;
    write_file(&dir.join("results.json"), &(json + "\n"))?;
    let s = &bundle.summary;
    coordinate_table(&dir.join("scores.csv"), "row", &s.rows, &s.scores)?;
    coordinate_table(&dir.join("loadings.csv"), "column", &s.columns, &s.loadings)?;

    let header: Vec<String> = [
        "side", "label", "dim_x", "dim_y", "point_x", "point_y", "center_x", "center_y", "cov_xx",
        "cov_xy", "cov_yy", "level", "radius2",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = bundle
        .ellipses
        .iter()
        .map(|e| {
            let side = match e.side {
                Side::Rows => "row",
                Side::Columns => "column",
            };
            vec![
                side.to_string(),
                e.label.clone(),
                e.dims[0].to_string(),
                e.dims[1].to_string(),
                e.point[0].to_string(),
                e.point[1].to_string(),
                e.center[0].to_string(),
                e.center[1].to_string(),
                e.cov[0][0].to_string(),
                e.cov[0][1].to_string(),
                e.cov[1][1].to_string(),
                e.level.to_string(),
                e.radius2.to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("ellipses.csv"), &header, &rows)?;
    if let Some(cov) = &bundle.coverage {
        write_coverage_csv(cov, &dir.join("coverage.csv"))?;
    }
    Ok(())
}

/// Reads `results.json` from a directory or a direct path to the file.
pub fn read_results(path: impl AsRef<Path>) -> Result<ResultBundle> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join("results.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row per condition, one column per method, coverage as a fraction.
pub fn write_coverage_csv(table: &CoverageTable, path: &Path) -> Result<()> {
    let mut header = vec!["condition".to_string()];
    header.extend(table.methods.iter().map(|m| m.name().to_string()));
    let rows: Vec<Vec<String>> = table
        .conditions
        .iter()
        .map(|c| {
            std::iter::once(c.clone())
                .chain(table.methods.iter().map(|&m| {
                    table
                        .get(c, m)
                        .map_or_else(|| "NA".to_string(), |cell| format!("{:.4}", cell.coverage))
                }))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// `coverage.csv` and `coverage.json` for a simulation run.
pub fn write_coverage(table: &CoverageTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    write_coverage_csv(table, &dir.join("coverage.csv"))?;
    let json = serde_json::to_string_pretty(table)?;
    write_file(&dir.join("coverage.json"), &(json + "\n"))
}
