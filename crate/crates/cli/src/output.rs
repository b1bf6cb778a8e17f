//! Fixed-format CSV and JSON emission.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use wolffkit::embedding::fmt17;
use wolffkit::extended::ExtendedValue;

pub fn num(x: f64) -> String {
    if x.is_finite() {
        fmt17(x)
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn ext(v: ExtendedValue) -> String {
    match v {
        ExtendedValue::Finite(x) => num(x),
        ExtendedValue::Infinite(_) => "inf".into(),
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// `x1 .. xn` followed by `rest`.
pub fn point_header(n: usize, rest: &[&str]) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).chain(rest.iter().map(|c| c.to_string())).collect()
}
