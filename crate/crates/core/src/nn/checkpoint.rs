//! Plain-text parameter checkpoints.
//!
//! ```text
//! contextda-params 1
//! param <name> <rows> <cols>
//! <row 0 values, space separated>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact. Loading validates names and shapes against the
//! receiving [`ParameterSet`].

use std::fmt::Write as _;
use std::path::Path;

use super::params::ParameterSet;
use crate::error::{Error, Result};

const MAGIC: &str = "contextda-params 1";

pub fn to_text(params: &ParameterSet) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for p in params.iter() {
        let _ = writeln!(out, "param {} {} {}", p.name, p.rows, p.cols);
        for r in 0..p.rows {
            let row = &p.values[r * p.cols..(r + 1) * p.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Overwrites `params` with the values in `text`.
pub fn from_text(params: &mut ParameterSet, text: &str) -> Result<()> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing header line".into()));
    }
    let mut loaded = params.clone();
    for p in loaded.iter_mut() {
        let header = lines
            .next()
            .ok_or_else(|| bad(format!("missing record for {}", p.name)))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let expected = [p.rows.to_string(), p.cols.to_string()];
        if fields.len() != 4
            || fields[0] != "param"
            || fields[1] != p.name
            || fields[2] != expected[0]
            || fields[3] != expected[1]
        {
            return Err(bad(format!(
                "expected `param {} {} {}`, found `{header}`",
                p.name, p.rows, p.cols
            )));
        }
        for r in 0..p.rows {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("{} truncated at row {r}", p.name)))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("{} row {r}: {e}", p.name)))?;
            if row.len() != p.cols || row.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("{} row {r} has a bad value count or non-finite entry", p.name)));
            }
            p.values[r * p.cols..(r + 1) * p.cols].copy_from_slice(&row);
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing records".into()));
    }
    *params = loaded;
    Ok(())
}

pub fn save(params: &ParameterSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(params)).map_err(|e| Error::io(path, e))
}

pub fn load(params: &mut ParameterSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(params, &text)
}
