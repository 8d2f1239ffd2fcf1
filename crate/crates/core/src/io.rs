//! Plain-text formats.
//!
//! Edge list (1-based states, `#` starts a comment):
//!
//! ```text
//! masterq v1 M=3
//! 1 2 0.5
//! 2 1 0.25
//! ```
//!
//! Matrix dump: the size on the first line, then one row per line with 17
//! significant digits in scientific notation.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::generator::{build_generator, GeneratorMatrix, Rate};
use crate::{Error, Result};

pub const EDGE_LIST_MAGIC: &str = "masterq v1";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Lines with comments stripped, paired with their 1-based line number.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub fn parse_edge_list(text: &str) -> Result<GeneratorMatrix> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let size_field = header
        .strip_prefix(EDGE_LIST_MAGIC)
        .map(str::trim)
        .and_then(|rest| rest.strip_prefix("M="))
        .ok_or_else(|| parse_err(hline, format!("expected header `{EDGE_LIST_MAGIC} M=<size>`")))?;
    let size: usize = size_field
        .trim()
        .parse()
        .map_err(|_| parse_err(hline, format!("invalid size `{size_field}`")))?;
    if size == 0 {
        return Err(parse_err(hline, "size must be positive"));
    }

    let mut rates = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(ln, format!("expected `from to rate`, got {} fields", fields.len())));
        }
        let index = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| parse_err(ln, format!("invalid state `{s}`")))?;
            if v == 0 || v > size {
                return Err(parse_err(ln, format!("state {v} out of range 1..={size}")));
            }
            Ok(v - 1)
        };
        let from = index(fields[0])?;
        let to = index(fields[1])?;
        let rate: f64 = fields[2].parse().map_err(|_| parse_err(ln, format!("invalid rate `{}`", fields[2])))?;
        rates.push((ln, Rate::new(from, to, rate)));
    }
    let plain: Vec<Rate> = rates.iter().map(|(_, r)| *r).collect();
    build_generator(size, &plain).map_err(|e| {
        let line = match &e {
            Error::NonPositiveRate { from, to, .. } | Error::DuplicateEdge { from, to } => rates
                .iter()
                .filter(|(_, r)| r.from == *from && r.to == *to)
                .map(|(l, _)| *l)
                .last(),
            Error::SelfLoop(s) => rates.iter().find(|(_, r)| r.from == *s && r.to == *s).map(|(l, _)| *l),
            _ => None,
        };
        parse_err(line.unwrap_or(hline), e.to_string())
    })
}

pub fn write_edge_list(l: &GeneratorMatrix) -> String {
    let mut out = format!("{EDGE_LIST_MAGIC} M={}\n", l.size());
    for r in l.rates() {
        let _ = writeln!(out, "{} {} {:.16e}", r.from + 1, r.to + 1, r.rate);
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let n: usize = header.parse().map_err(|_| parse_err(hline, format!("invalid size `{header}`")))?;
    if n == 0 {
        return Err(parse_err(hline, "size must be positive"));
    }
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    let mut last = hline;
    for (ln, line) in lines {
        last = ln;
        if rows == n {
            return Err(parse_err(ln, "more rows than declared"));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(ln, format!("invalid entry `{s}`"))))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(parse_err(ln, format!("expected {n} entries, got {}", row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(last, format!("expected {n} rows, got {rows}")));
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}

pub fn write_matrix(m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let mut out = format!("{n}\n");
    for i in 0..n {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Input file kinds accepted by the analysis commands.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Generator(GeneratorMatrix),
    Matrix(DMatrix<f64>),
}

/// Dispatch on the header: edge lists start with the magic string, matrices with the size.
pub fn parse_input(text: &str) -> Result<Input> {
    match content_lines(text).next() {
        None => Err(parse_err(1, "empty input")),
        Some((_, h)) if h.starts_with(EDGE_LIST_MAGIC) => parse_edge_list(text).map(Input::Generator),
        Some(_) => parse_matrix(text).map(Input::Matrix),
    }
}
