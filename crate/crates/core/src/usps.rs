//! USPS handwritten digits in whitespace-separated text form.
//!
//! One image per line: an integer label `0..=9` followed by 256 pixel
//! intensities in `[-1, 1]`. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Label, Object, Observation};

pub const USPS_DIM: usize = 256;
pub const USPS_CLASSES: u32 = 10;
const RANGE_TOLERANCE: f64 = 1e-6;

fn parse_line(line: &str) -> std::result::Result<Option<Observation>, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != USPS_DIM + 1 {
        return Err(format!("expected {} fields, found {}", USPS_DIM + 1, fields.len()));
    }
    let label: u32 = fields[0]
        .parse()
        .map_err(|_| format!("label {:?} is not a non-negative integer", fields[0]))?;
    if label >= USPS_CLASSES {
        return Err(format!("label {label} outside 0..={}", USPS_CLASSES - 1));
    }
    let mut features = Vec::with_capacity(USPS_DIM);
    for (k, field) in fields[1..].iter().enumerate() {
        let v: f64 = field
            .parse()
            .map_err(|_| format!("feature {} ({field:?}) is not a number", k + 1))?;
        if !v.is_finite() || v.abs() > 1.0 + RANGE_TOLERANCE {
            return Err(format!("feature {} = {v} outside [-1, 1]", k + 1));
        }
        features.push(v);
    }
    let object = Object::new(features).map_err(|e| e.to_string())?;
    Ok(Some(Observation::new(object, Label(label))))
}

/// Parses one file, appending rows in file order.
pub fn read_usps_file(path: &Path, out: &mut Vec<Observation>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match parse_line(&line) {
            Ok(Some(obs)) => out.push(obs),
            Ok(None) => {}
            Err(message) => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    message,
                })
            }
        }
    }
    Ok(())
}

/// Training rows followed by test rows, each in file order.
pub fn load_usps(train_path: &Path, test_path: &Path) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    read_usps_file(train_path, &mut out)?;
    read_usps_file(test_path, &mut out)?;
    if out.is_empty() {
        return Err(Error::NoObservations);
    }
    Ok(out)
}
