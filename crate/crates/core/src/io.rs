//! Text exchange formats.
//!
//! Matrix: a header line `n p`, then `n` rows of `p` entries `re,im`
//! separated by single spaces.
//!
//! Signal: a header line `p k`, then `k` lines `index re,im` with 1-based
//! indices.
//!
//! Observation: a header line `n`, then `n` lines `re,im`.
//!
//! Numbers are written with 17 significant digits so that a write/read
//! round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::model::{CMatrix, CVector, SensingMatrix, SparseSignal, UNIT_NORM_TOL, C64};
use crate::{Error, Result};

/// Column norms further than this from 1 are rejected on read.
pub const READ_NORM_TOL: f64 = 1e-6;

fn fmt_complex(out: &mut String, z: C64) {
    write!(out, "{:.16e},{:.16e}", z.re, z.im).expect("writing to String");
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_complex(tok: &str, line: usize) -> Result<C64> {
    let (re, im) = tok
        .split_once(',')
        .ok_or_else(|| parse_err(line, format!("expected `re,im`, found {tok:?}")))?;
    let re: f64 = re
        .parse()
        .map_err(|_| parse_err(line, format!("non-numeric token {tok:?}")))?;
    let im: f64 = im
        .parse()
        .map_err(|_| parse_err(line, format!("non-numeric token {tok:?}")))?;
    if !re.is_finite() || !im.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(C64::new(re, im))
}

fn parse_header<const N: usize>(line: Option<&str>) -> Result<[usize; N]> {
    let line = line.ok_or_else(|| parse_err(1, "missing header"))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != N {
        return Err(parse_err(
            1,
            format!("malformed header {line:?}: expected {N} integers"),
        ));
    }
    let mut out = [0usize; N];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = f
            .parse()
            .map_err(|_| parse_err(1, format!("malformed header {line:?}")))?;
    }
    Ok(out)
}

/// Data lines, skipping a trailing empty line.
fn body_lines(text: &str) -> (Option<&str>, Vec<&str>) {
    let mut lines = text.lines();
    let header = lines.next();
    let mut body: Vec<&str> = lines.collect();
    while body.last().is_some_and(|l| l.trim().is_empty()) {
        body.pop();
    }
    (header, body)
}

pub fn format_matrix(matrix: &SensingMatrix) -> String {
    let x = matrix.as_matrix();
    let mut out = format!("{} {}\n", x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if j > 0 {
                out.push(' ');
            }
            fmt_complex(&mut out, x[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Parses the matrix format. Rows in errors are 1-based data rows (the
/// header is line 1, data row `r` is line `r + 1`); `Error::Parse::line`
/// reports the data row.
pub fn parse_matrix(text: &str, label: &str) -> Result<SensingMatrix> {
    let (header, body) = body_lines(text);
    let [n, p] = parse_header::<2>(header)?;
    if n == 0 || p == 0 {
        return Err(parse_err(1, format!("malformed header: n = {n}, p = {p}")));
    }
    if body.len() != n {
        return Err(parse_err(
            body.len().min(n) + 1,
            format!("expected {n} rows, found {}", body.len()),
        ));
    }
    let mut data = CMatrix::zeros(n, p);
    for (r, line) in body.iter().enumerate() {
        let row = r + 1;
        let toks: Vec<&str> = line.split(' ').filter(|t| !t.is_empty()).collect();
        if toks.len() != p {
            return Err(parse_err(
                row,
                format!("row {row} has {} entries, expected {p}", toks.len()),
            ));
        }
        for (j, tok) in toks.iter().enumerate() {
            data[(r, j)] = parse_complex(tok, row)?;
        }
    }
    for (j, col) in data.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > READ_NORM_TOL {
            return Err(Error::ColumnNorm {
                column: j + 1,
                norm,
            });
        }
    }
    if data
        .column_iter()
        .any(|c| (c.norm() - 1.0).abs() > UNIT_NORM_TOL)
    {
        SensingMatrix::normalized(data, label)
    } else {
        SensingMatrix::new(data, label)
    }
}

pub fn write_matrix(matrix: &SensingMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_matrix(matrix))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<SensingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn format_signal(signal: &SparseSignal) -> String {
    let mut out = format!("{} {}\n", signal.p(), signal.k());
    for (&i, &v) in signal.support().iter().zip(signal.values()) {
        write!(out, "{} ", i + 1).expect("writing to String");
        fmt_complex(&mut out, v);
        out.push('\n');
    }
    out
}

pub fn parse_signal(text: &str) -> Result<SparseSignal> {
    let (header, body) = body_lines(text);
    let [p, k] = parse_header::<2>(header)?;
    if body.len() != k {
        return Err(parse_err(
            body.len().min(k) + 1,
            format!("expected {k} entries, found {}", body.len()),
        ));
    }
    let mut entries = Vec::with_capacity(k);
    for (r, line) in body.iter().enumerate() {
        let row = r + 1;
        let (idx, val) = line
            .trim()
            .split_once(' ')
            .ok_or_else(|| parse_err(row, "expected `index re,im`"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(row, format!("non-numeric index {idx:?}")))?;
        if idx == 0 {
            return Err(parse_err(row, "indices are 1-based"));
        }
        entries.push((idx - 1, parse_complex(val.trim(), row)?));
    }
    SparseSignal::new(p, entries)
}

pub fn write_signal(signal: &SparseSignal, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_signal(signal))?;
    Ok(())
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<SparseSignal> {
    parse_signal(&fs::read_to_string(path)?)
}

pub fn format_vector(v: &CVector) -> String {
    let mut out = format!("{}\n", v.len());
    for &z in v.iter() {
        fmt_complex(&mut out, z);
        out.push('\n');
    }
    out
}

pub fn parse_vector(text: &str) -> Result<CVector> {
    let (header, body) = body_lines(text);
    let [n] = parse_header::<1>(header)?;
    if body.len() != n {
        return Err(parse_err(
            body.len().min(n) + 1,
            format!("expected {n} entries, found {}", body.len()),
        ));
    }
    let vals = body
        .iter()
        .enumerate()
        .map(|(r, l)| parse_complex(l.trim(), r + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(vals))
}

pub fn write_vector(v: &CVector, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_vector(v))?;
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<CVector> {
    parse_vector(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::gaussian_matrix;

    #[test]
    fn matrix_round_trip_is_exact() {
        let x = gaussian_matrix(3, 5, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_matrix(&x, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.as_matrix(), x.as_matrix());
    }

    #[test]
    fn row_length_mismatch_names_row_one() {
        let text = "2 3\n1,0 0,0 0,0 0,0\n0,0 1,0 0,0 0,0\n";
        match parse_matrix(text, "") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("row 1"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_column_is_rejected_with_its_index() {
        let text = "2 2\n1,0 0.5,0\n0,0 0,0\n";
        match parse_matrix(text, "") {
            Err(Error::ColumnNorm { column, norm }) => {
                assert_eq!(column, 2);
                assert!((norm - 0.5).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_matrix("2\n", ""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("a b\n", ""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_matrix("1 1\nx,0\n", ""),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_matrix("2 1\n1,0\n", ""),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn signal_round_trip() {
        let s = SparseSignal::new(7, [(0, C64::new(1.5, -0.25)), (6, C64::new(0.0, 3.0))])
            .unwrap();
        let text = format_signal(&s);
        assert!(text.starts_with("7 2\n1 "));
        assert_eq!(parse_signal(&text).unwrap(), s);
        assert!(parse_signal("3 1\n0 1,0\n").is_err());
    }

    #[test]
    fn vector_round_trip() {
        let v = CVector::from_vec(vec![C64::new(0.1, 0.2), C64::new(-1.0 / 3.0, 1e-300)]);
        assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
    }
}
