//! CSV and JSON readers and writers.
//!
//! - Dataset CSV: header row, one label column (default `y`), every other
//!   column a numeric feature.
//! - Draws CSV: header of parameter names, one row per draw.
//! - Prior-scale CSV: an `sd` column with one row per parameter and an
//!   optional `param` column that must list the draw names in order.
//! - Variational CSV: `mean` and `sd` columns, same row convention.
//! - Run configuration: JSON, every field optional.

use std::fs;
use std::path::{Path, PathBuf};

use loo_adapt_core::{
    validate_dataset, Dataset, GaussianPrior, MeanFieldGaussian, PosteriorDraws, RawTable, RowMatrix, RunConfig,
};
use serde::Serialize;

use crate::envelope::fingerprint;
use crate::error::{Error, Result};

/// A parsed input together with the hash of its bytes.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub fingerprint: String,
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses CSV bytes into a header and string cells. Ragged rows are kept so
/// that validation can report them.
pub fn parse_table(path: &Path, bytes: &[u8]) -> Result<RawTable> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn load_dataset(path: &Path, label_column: &str) -> Result<Loaded<Dataset>> {
    let bytes = read_bytes(path)?;
    let table = parse_table(path, &bytes)?;
    let value = validate_dataset(&table, label_column)?;
    Ok(Loaded {
        value,
        fingerprint: fingerprint(&bytes),
    })
}

fn numeric_matrix(path: &Path, table: &RawTable) -> Result<RowMatrix> {
    let width = table.header.len();
    let mut values = Vec::with_capacity(table.rows.len() * width);
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != width {
            return Err(format_err(
                path,
                format!("row {}: expected {width} cells, found {}", r + 1, row.len()),
            ));
        }
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                format_err(
                    path,
                    format!("row {}, column '{}': '{cell}' is not numeric", r + 1, table.header[c]),
                )
            })?;
            values.push(v);
        }
    }
    Ok(RowMatrix::from_vec(table.rows.len(), width, values)?)
}

pub fn load_draws(path: &Path) -> Result<Loaded<PosteriorDraws>> {
    let bytes = read_bytes(path)?;
    let table = parse_table(path, &bytes)?;
    let values = numeric_matrix(path, &table)?;
    let value = PosteriorDraws::new(values, table.header.clone())?;
    Ok(Loaded {
        value,
        fingerprint: fingerprint(&bytes),
    })
}

/// Reads the named numeric columns of a per-parameter table, checking the
/// row count and, when present, the `param` column against `names`.
fn per_parameter_columns(path: &Path, names: &[String], wanted: &[&str]) -> Result<Vec<Vec<f64>>> {
    let bytes = read_bytes(path)?;
    let table = parse_table(path, &bytes)?;
    if table.rows.len() != names.len() {
        return Err(format_err(
            path,
            format!(
                "expected {} rows (one per parameter), found {}",
                names.len(),
                table.rows.len()
            ),
        ));
    }
    let col = |name: &str| table.header.iter().position(|h| h == name);
    if let Some(pc) = col("param") {
        for (r, (row, name)) in table.rows.iter().zip(names).enumerate() {
            if row.get(pc).map(String::as_str) != Some(name.as_str()) {
                return Err(format_err(
                    path,
                    format!(
                        "row {}: param '{}' does not match draws column '{name}'",
                        r + 1,
                        row.get(pc).map_or("", |s| s)
                    ),
                ));
            }
        }
    }
    wanted
        .iter()
        .map(|&w| {
            let c = col(w).ok_or_else(|| format_err(path, format!("missing column '{w}'")))?;
            table
                .rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let cell = row.get(c).map_or("", |s| s.as_str());
                    cell.parse::<f64>()
                        .map_err(|_| format_err(path, format!("row {}, column '{w}': '{cell}' is not numeric", r + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn load_prior_sd(path: &Path, names: &[String]) -> Result<GaussianPrior> {
    let mut cols = per_parameter_columns(path, names, &["sd"])?;
    Ok(GaussianPrior::new(cols.remove(0))?)
}

pub fn load_variational(path: &Path, names: &[String]) -> Result<MeanFieldGaussian> {
    let mut cols = per_parameter_columns(path, names, &["mean", "sd"])?;
    let sd = cols.remove(1);
    Ok(MeanFieldGaussian::new(cols.remove(0), sd)?)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let bytes = read_bytes(path)?;
    let cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a dataset in the format [`load_dataset`] reads, label column last.
pub fn write_dataset(path: &Path, data: &Dataset, label_column: &str) -> Result<()> {
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push(label_column.to_string());
    let rows = (0..data.n()).map(|i| {
        let mut row: Vec<String> = data.x(i).iter().map(|v| format_f64(*v)).collect();
        row.push(data.y(i).to_string());
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let rows = draws
        .values()
        .iter_rows()
        .map(|r| r.iter().map(|v| format_f64(*v)).collect::<Vec<_>>());
    write_csv(path, draws.param_names(), rows)
}

/// Writes `param,sd` rows.
pub fn write_prior_sd(path: &Path, names: &[String], sd: &[f64]) -> Result<()> {
    let rows = names.iter().zip(sd).map(|(n, s)| vec![n.clone(), format_f64(*s)]);
    write_csv(path, &["param".to_string(), "sd".to_string()], rows)
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |source| Error::Csv {
        path: PathBuf::from(path),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that parses back to the same value.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}
