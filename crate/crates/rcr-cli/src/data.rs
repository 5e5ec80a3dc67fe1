//! CSV ingestion and atomic file output.
//!
//! Dialect: comma-separated, UTF-8, header row required, `.` decimal point.
//! Unknown columns are ignored so simulated files (which carry a `label`
//! column) feed straight back into `reject` and `fit`.

use std::path::Path;

use rcr::{DataPoint, DataSet, Sample};

use crate::CliError;

pub struct SampleCsv {
    pub sample: Sample,
    pub had_weights: bool,
    pub had_error_bars: bool,
}

/// Read a one-dimensional sample: column `y`, optional `w` and `sy`. Error
/// bars without explicit weights imply inverse-variance weights 1/sy^2.
pub fn read_sample(path: &Path) -> Result<SampleCsv, CliError> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let y_col = find_column(&headers, "y")
        .ok_or_else(|| CliError::data(format!("{}: missing column 'y'", path.display())))?;
    let w_col = find_column(&headers, "w");
    let sy_col = find_column(&headers, "sy");

    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut error_bars = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        values.push(parse_field(path, row, &record, y_col)?);
        if let Some(col) = w_col {
            weights.push(parse_field(path, row, &record, col)?);
        }
        if let Some(col) = sy_col {
            error_bars.push(parse_field(path, row, &record, col)?);
        }
    }
    if values.is_empty() {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    let had_weights = w_col.is_some();
    let had_error_bars = sy_col.is_some();
    let weights = if had_weights {
        Some(weights)
    } else if had_error_bars {
        // Inverse-variance weights from the error bars.
        Some(error_bars.iter().map(|s| 1.0 / (s * s)).collect())
    } else {
        None
    };
    let sample = Sample::new(values, weights, had_error_bars.then_some(error_bars))
        .map_err(CliError::from)?;
    Ok(SampleCsv {
        sample,
        had_weights,
        had_error_bars,
    })
}

/// Read an n-dimensional dataset: columns `x` or `x1..xn`, `y`, optional
/// `sy` and `w`.
pub fn read_dataset(path: &Path) -> Result<DataSet, CliError> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();

    let mut x_cols: Vec<(usize, usize)> = Vec::new(); // (dimension, column)
    for (col, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name == "x" {
            x_cols.push((1, col));
        } else if let Some(rest) = name.strip_prefix('x') {
            if let Ok(dim) = rest.parse::<usize>() {
                if dim >= 1 {
                    x_cols.push((dim, col));
                }
            }
        }
    }
    x_cols.sort_unstable();
    if x_cols.is_empty() {
        return Err(CliError::data(format!(
            "{}: missing x column(s) ('x' or 'x1'..'xn')",
            path.display()
        )));
    }
    let y_col = find_column(&headers, "y")
        .ok_or_else(|| CliError::data(format!("{}: missing column 'y'", path.display())))?;
    let w_col = find_column(&headers, "w");
    let sy_col = find_column(&headers, "sy");

    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut x = Vec::with_capacity(x_cols.len());
        for &(_, col) in &x_cols {
            x.push(parse_field(path, row, &record, col)?);
        }
        let y = parse_field(path, row, &record, y_col)?;
        let sigma_y = match sy_col {
            Some(col) => Some(parse_field(path, row, &record, col)?),
            None => None,
        };
        let weight = match w_col {
            Some(col) => Some(parse_field(path, row, &record, col)?),
            None => None,
        };
        points.push(DataPoint {
            x,
            y,
            sigma_y,
            weight,
        });
    }
    if points.is_empty() {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    DataSet::new(points).map_err(CliError::from)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_field(
    path: &Path,
    row: usize,
    record: &csv::StringRecord,
    col: usize,
) -> Result<f64, CliError> {
    let field = record.get(col).ok_or_else(|| {
        CliError::data(format!(
            "{}: row {} is missing column {}",
            path.display(),
            row + 2,
            col + 1
        ))
    })?;
    field.parse().map_err(|_| {
        CliError::data(format!(
            "{}: row {}: '{}' is not a number",
            path.display(),
            row + 2,
            field
        ))
    })
}

/// Write via a temp file in the target directory, then rename into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    use std::io::Write;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .map_err(|e| CliError::data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Either print to stdout or write atomically to the given path.
pub fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Sidecar path: `report.json` -> `report.kept.csv` etc.
pub fn sidecar(path: &Path, tag: &str) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    path.with_file_name(format!("{stem}.{tag}.csv"))
}
