use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub struct CsvRow<'a> {
    pub sample_id: u64,
    pub label: usize,
    pub predicted: usize,
    pub values: &'a [f64],
}

/// `sample_id,label,predicted,v0,v1,...` with a header line.
pub fn write_csv(path: &Path, rows: &[CsvRow<'_>]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::from("sample_id,label,predicted");
    for i in 0..width {
        write!(out, ",v{i}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{},{},{}", r.sample_id, r.label, r.predicted).unwrap();
        for v in r.values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary greyscale PGM of `|values|` summed over `channels`, scaled so
/// the largest magnitude maps to 255.
pub fn write_pgm(path: &Path, values: &[f64], channels: usize, height: usize, width: usize) -> Result<()> {
    let plane = height * width;
    if values.len() != channels * plane {
        return Err(Error::Shape(format!(
            "{} values for {channels}x{height}x{width}",
            values.len()
        )));
    }
    let mag: Vec<f64> = (0..plane)
        .map(|p| (0..channels).map(|c| values[c * plane + p].abs()).sum())
        .collect();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(mag.iter().map(|&m| if max > 0.0 { (m / max * 255.0).round() as u8 } else { 0 }));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
