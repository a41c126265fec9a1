//! Matrix Market reader and writer for real matrices in array and
//! coordinate layout, general or symmetric.
//!
//! Everything is densified on load.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Array,
    Coordinate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

#[derive(Clone, Debug)]
pub struct MatrixFile {
    pub layout: Layout,
    pub symmetry: Symmetry,
    pub matrix: Matrix,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens of a line with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: (usize, &str), line: usize, what: &str) -> Result<T> {
    tok.1
        .parse()
        .map_err(|_| parse_err(line, tok.0, format!("expected {what}, found `{}`", tok.1)))
}

pub fn read_matrix_market(text: &str) -> Result<MatrixFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let head: Vec<String> = tokens(header)
        .iter()
        .map(|t| t.1.to_ascii_lowercase())
        .collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" {
        return Err(parse_err(
            hline,
            1,
            "expected `%%MatrixMarket matrix <layout> real <symmetry>`",
        ));
    }
    let layout = match head[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(hline, 1, format!("unsupported layout `{other}`"))),
    };
    if head[3] != "real" && head[3] != "double" && head[3] != "integer" {
        return Err(parse_err(
            hline,
            1,
            format!("unsupported field `{}`", head[3]),
        ));
    }
    let symmetry = match head[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => {
            return Err(parse_err(
                hline,
                1,
                format!("unsupported symmetry `{other}`"),
            ))
        }
    };
    let mut data = lines.filter(|(_, l)| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = data
        .next()
        .ok_or_else(|| parse_err(hline + 1, 1, "missing size line"))?;
    let st = tokens(size);
    let want = if layout == Layout::Array { 2 } else { 3 };
    if st.len() != want {
        return Err(parse_err(
            sline,
            1,
            format!("size line needs {want} integers, found {}", st.len()),
        ));
    }
    let rows: usize = parse_num(st[0], sline, "row count")?;
    let cols: usize = parse_num(st[1], sline, "column count")?;
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(parse_err(sline, 1, "symmetric matrix must be square"));
    }
    let mut m = Matrix::zeros(rows, cols);
    match layout {
        Layout::Array => {
            // column-major; symmetric files list the lower triangle only
            let mut slots = Vec::new();
            for j in 0..cols {
                let start = if symmetry == Symmetry::Symmetric {
                    j
                } else {
                    0
                };
                for i in start..rows {
                    slots.push((i, j));
                }
            }
            let mut next = 0;
            let mut last_line = sline;
            for (ln, l) in data {
                last_line = ln;
                let t = tokens(l);
                if t.len() != 1 {
                    return Err(parse_err(
                        ln,
                        t.get(1).map_or(1, |x| x.0),
                        "array entries take one value per line",
                    ));
                }
                if next >= slots.len() {
                    return Err(parse_err(ln, t[0].0, "more values than the declared size"));
                }
                let v: f64 = parse_num(t[0], ln, "a real value")?;
                let (i, j) = slots[next];
                m[(i, j)] = v;
                if symmetry == Symmetry::Symmetric {
                    m[(j, i)] = v;
                }
                next += 1;
            }
            if next != slots.len() {
                return Err(parse_err(
                    last_line + 1,
                    1,
                    format!("expected {} values, found {next}", slots.len()),
                ));
            }
        }
        Layout::Coordinate => {
            let nnz: usize = parse_num(st[2], sline, "entry count")?;
            let mut count = 0;
            let mut last_line = sline;
            for (ln, l) in data {
                last_line = ln;
                let t = tokens(l);
                if t.len() != 3 {
                    let col = t.get(3).or(t.last()).map_or(1, |x| x.0);
                    return Err(parse_err(
                        ln,
                        col,
                        format!(
                            "coordinate entries need `i j value`, found {} fields",
                            t.len()
                        ),
                    ));
                }
                let i: usize = parse_num(t[0], ln, "a row index")?;
                let j: usize = parse_num(t[1], ln, "a column index")?;
                if i == 0 || i > rows {
                    return Err(parse_err(
                        ln,
                        t[0].0,
                        format!("row index {i} outside 1..={rows}"),
                    ));
                }
                if j == 0 || j > cols {
                    return Err(parse_err(
                        ln,
                        t[1].0,
                        format!("column index {j} outside 1..={cols}"),
                    ));
                }
                let v: f64 = parse_num(t[2], ln, "a real value")?;
                m[(i - 1, j - 1)] += v;
                if symmetry == Symmetry::Symmetric && i != j {
                    m[(j - 1, i - 1)] += v;
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(
                    last_line + 1,
                    1,
                    format!("expected {nnz} entries, found {count}"),
                ));
            }
        }
    }
    Ok(MatrixFile {
        layout,
        symmetry,
        matrix: m,
    })
}

/// Column-major array layout. Symmetric matrices store the lower triangle.
pub fn write_array(m: &Matrix, symmetric: bool) -> String {
    let mut s = String::new();
    let kind = if symmetric { "symmetric" } else { "general" };
    s.push_str(&format!("%%MatrixMarket matrix array real {kind}\n"));
    s.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for j in 0..m.cols() {
        let start = if symmetric { j } else { 0 };
        for i in start..m.rows() {
            s.push_str(&format!("{:e}\n", m[(i, j)]));
        }
    }
    s
}

/// Coordinate layout with the nonzero lower triangle.
pub fn write_coordinate_symmetric(m: &SymMatrix) -> String {
    let mut entries = Vec::new();
    for j in 0..m.n() {
        for i in j..m.n() {
            let v = m[(i, j)];
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    let mut s = String::with_capacity(entries.len() * 32);
    s.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
    s.push_str(&format!("{} {} {}\n", m.n(), m.n(), entries.len()));
    for (i, j, v) in entries {
        s.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
    }
    s
}

/// Loads a symmetric matrix. General-layout input is accepted when its
/// asymmetry is below `1e-10` relative; it is then averaged with its
/// transpose.
pub fn read_symmetric(text: &str) -> Result<(SymMatrix, bool)> {
    let f = read_matrix_market(text)?;
    let m = f.matrix;
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "matrix must be square",
            expected: m.rows(),
            found: m.cols(),
        });
    }
    if f.symmetry == Symmetry::Symmetric {
        return Ok((SymMatrix::from_matrix_unchecked(m), false));
    }
    let asym = m.asymmetry();
    if asym > 1e-10 * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let symmetrized = asym > 0.0;
    Ok((SymMatrix::symmetrized(&m), symmetrized))
}
