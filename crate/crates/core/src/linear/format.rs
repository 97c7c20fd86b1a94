//! `gfmat v1` text format.
//!
//! ```text
//! gfmat v1 q=2 l=2 n=4
//! 0:1 3:1
//!
//! ```
//! One line per row after the header, `col:coeff` pairs with ascending
//! 0-based columns; a zero row is an empty line.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gf::Field;

use super::SparseMatrix;

pub fn write_gfmat(a: &SparseMatrix) -> String {
    let mut s = format!(
        "gfmat v1 q={} l={} n={}\n",
        a.field().order(),
        a.rows(),
        a.cols()
    );
    for i in 0..a.rows() {
        let mut first = true;
        for &(j, v) in a.row(i) {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{j}:{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_gfmat(text: &str) -> Result<SparseMatrix> {
    let mut lines = text.split('\n');
    let header = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 5 || parts[0] != "gfmat" || parts[1] != "v1" {
        return Err(parse_err(1, format!("bad header {header:?}")));
    }
    let field_value = |part: &str, key: &str| -> Result<u64> {
        part.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(1, format!("expected {key}=<int>, got {part:?}")))
    };
    let q = field_value(parts[2], "q")?;
    let l = field_value(parts[3], "l")? as usize;
    let n = field_value(parts[4], "n")? as usize;
    let field = Field::new(q as u32).map_err(|e| parse_err(1, e.to_string()))?;

    let mut rows = Vec::with_capacity(l);
    for i in 0..l {
        let lineno = i + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(lineno, format!("expected {l} rows, found {i}")))?;
        let mut row = Vec::new();
        let mut last: Option<u32> = None;
        if !line.is_empty() {
            for tok in line.split(' ') {
                let (c, v) = tok
                    .split_once(':')
                    .ok_or_else(|| parse_err(lineno, format!("bad entry {tok:?}")))?;
                let c: u32 = c
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad column {c:?}")))?;
                let v: u16 = v
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad coefficient {v:?}")))?;
                if c as usize >= n {
                    return Err(parse_err(lineno, format!("column {c} >= n={n}")));
                }
                if v == 0 || v >= field.order() {
                    return Err(parse_err(lineno, format!("coefficient {v} not a nonzero element of {field}")));
                }
                if last.is_some_and(|p| p >= c) {
                    return Err(parse_err(lineno, "columns must be strictly ascending"));
                }
                last = Some(c);
                row.push((c, v));
            }
        }
        rows.push(row);
    }
    match (lines.next(), lines.next()) {
        (Some(""), None) => {}
        _ => return Err(parse_err(l + 2, "trailing content after last row")),
    }
    SparseMatrix::from_entries(field, l, n, rows)
}
