//! CSV ingestion and output helpers.

use std::fs::File;
use std::path::Path;

use hankel_path::ImpulseResponse;

use crate::error::CliError;

/// Reads a single-column CSV of samples. A non-numeric first row is taken
/// as a header.
pub fn read_samples(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_samples(file).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_samples<R: std::io::Read>(reader: R) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("row {}: {e}", row + 1)))?;
        if record.len() != 1 {
            return Err(CliError::Input(format!(
                "row {}: expected a single column, found {}",
                row + 1,
                record.len()
            )));
        }
        let field = &record[0];
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => samples.push(v),
            Ok(v) => return Err(CliError::Input(format!("row {}: non-finite sample {v}", row + 1))),
            Err(_) if row == 0 => continue,
            Err(_) => return Err(CliError::Input(format!("row {}: cannot parse {field:?} as a number", row + 1))),
        }
    }
    if samples.is_empty() {
        return Err(CliError::Input("no samples found".into()));
    }
    Ok(samples)
}

/// Builds the impulse response, optionally dropping a trailing sample to
/// make the length odd.
pub fn impulse_response(mut samples: Vec<f64>, truncate: bool) -> Result<ImpulseResponse, CliError> {
    if samples.len().is_multiple_of(2) {
        if !truncate {
            return Err(CliError::Input(format!(
                "{} samples given; the length must be odd (pass --truncate to drop the last sample)",
                samples.len()
            )));
        }
        samples.pop();
    }
    Ok(ImpulseResponse::new(samples)?)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Full round-trip precision for CSV output.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
