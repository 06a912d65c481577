use std::fs;
use std::path::Path;

use super::{DataError, Dataset, FactorKind, Result, Schema, LABEL_COLUMN};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let schema: Schema = serde_json::from_str(&text)?;
    schema.validate()?;
    Ok(schema)
}

pub fn save_schema(path: &Path, schema: &Schema) -> Result<()> {
    let text = serde_json::to_string_pretty(schema)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Reads a factor CSV whose header is the schema's factor names followed by
/// `label`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut expected: Vec<String> = schema.factors.iter().map(|f| f.name.clone()).collect();
    expected.push(LABEL_COLUMN.to_string());
    if found != expected {
        return Err(DataError::HeaderMismatch { expected, found });
    }

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut values = Vec::with_capacity(schema.factors.len());
        for (f, cell) in schema.factors.iter().zip(record.iter()) {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                factor: f.name.clone(),
                value: cell.to_string(),
            })?;
            match &f.kind {
                FactorKind::Continuous { .. } if !v.is_finite() => {
                    return Err(DataError::NonNumeric {
                        row,
                        factor: f.name.clone(),
                        value: cell.to_string(),
                    })
                }
                FactorKind::Discrete { .. } if f.state_index(v).is_none() => {
                    return Err(DataError::UnknownState {
                        factor: f.name.clone(),
                        value: v,
                    })
                }
                _ => {}
            }
            values.push(v);
        }
        let label = record.get(schema.factors.len()).unwrap_or("").trim();
        labels.push(match label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DataError::BadLabel {
                    row,
                    value: other.to_string(),
                })
            }
        });
        raw.push(values);
    }
    if raw.is_empty() {
        return Err(DataError::Empty);
    }
    Dataset::new(schema.clone(), raw, labels)
}

/// Writes raw rows in the format `load_csv` reads. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = dataset.schema().factors.iter().map(|f| f.name.as_str()).collect();
    header.push(LABEL_COLUMN);
    writer.write_record(&header)?;
    for (row, &label) in dataset.raw().iter().zip(dataset.labels()) {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        cells.push(label.to_string());
        writer.write_record(&cells)?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}
