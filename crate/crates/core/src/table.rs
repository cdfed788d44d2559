//! Comma-separated numeric tables with a header line.
//!
//! Values are written in Rust's shortest round-trip form, so reading a table
//! back reproduces the numbers bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes equally long columns under `header`.
pub fn write_table(path: &Path, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    if header.len() != cols.len() {
        return Err(Error::Dimension(format!("{} column names for {} columns", header.len(), cols.len())));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::Dimension("table columns differ in length".into()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        for (k, c) in cols.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{:e}", c[r]).expect("writing to a string");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a table written by [`write_table`], returning the header and the
/// columns.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty table", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0;
        for (k, cell) in line.split(',').enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 2)))?;
            cols.get_mut(k)
                .ok_or_else(|| Error::Parse(format!("{}:{}: too many columns", path.display(), ln + 2)))?
                .push(v);
            n += 1;
        }
        if n != header.len() {
            return Err(Error::Parse(format!("{}:{}: expected {} columns", path.display(), ln + 2, header.len())));
        }
    }
    Ok((header, cols))
}

/// Looks up a column by name.
pub fn column<'a>(header: &[String], cols: &'a [Vec<f64>], name: &str) -> Result<&'a [f64]> {
    header
        .iter()
        .position(|h| h == name)
        .map(|k| cols[k].as_slice())
        .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let a = [0.1, -1.0 / 3.0, 1e-300, f64::MAX];
        let b = [1.0, 2.0, 3.0, 4.0];
        write_table(&p, &["a", "b"], &[&a, &b]).unwrap();
        let (h, c) = read_table(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(column(&h, &c, "a").unwrap(), &a);
        assert!(column(&h, &c, "z").is_err());
        assert!(write_table(&p, &["a"], &[&a, &b]).is_err());
    }
}
