//! Observed-sample container, validation, and the CSV interchange schema.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMat {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl RowMat {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::validation(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMat { data, rows: n, cols })
    }

    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        RowMat { data, rows, cols }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMat { data: vec![0.0; rows * cols], rows, cols }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }
}

/// Observed sample `(Y, A, X, M)`.
///
/// Covariates and mediators are stored as one concatenated row-major matrix
/// so that the joint feature vector `S = (X, M)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<u8>,
    s: RowMat,
    d1: usize,
    d2: usize,
    intercept_flag: bool,
}

impl Dataset {
    /// Assemble and validate a dataset from its parts.
    pub fn new(
        y: Vec<f64>,
        a: Vec<f64>,
        x: RowMat,
        m: RowMat,
        intercept_flag: bool,
    ) -> Result<Self> {
        let n = y.len();
        if a.len() != n || x.n_rows() != n || m.n_rows() != n {
            return Err(Error::validation(format!(
                "length mismatch: y={n}, a={}, x rows={}, m rows={}",
                a.len(),
                x.n_rows(),
                m.n_rows()
            )));
        }
        let d1 = x.n_cols();
        let d2 = m.n_cols();
        if d1 == 0 {
            return Err(Error::validation("covariate matrix has zero columns"));
        }
        let mut a_bin = Vec::with_capacity(n);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                a_bin.push(0u8);
            } else if ai == 1.0 {
                a_bin.push(1u8);
            } else {
                return Err(Error::validation(format!(
                    "non-binary treatment at row {i}: a={ai}"
                )));
            }
        }
        let mut s = RowMat::zeros(n, d1 + d2);
        for i in 0..n {
            let row = s.row_mut(i);
            row[..d1].copy_from_slice(x.row(i));
            row[d1..].copy_from_slice(m.row(i));
        }
        let ds = Dataset { y, a: a_bin, s, d1, d2, intercept_flag };
        validate_dataset(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn d(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn intercept_flag(&self) -> bool {
        self.intercept_flag
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    /// Treatment indicator as 0/1.
    #[inline]
    pub fn a(&self, i: usize) -> u8 {
        self.a[i]
    }

    #[inline]
    pub fn a_f64(&self, i: usize) -> f64 {
        self.a[i] as f64
    }

    /// Joint feature row `S_i = (X_i, M_i)`.
    #[inline]
    pub fn s_row(&self, i: usize) -> &[f64] {
        self.s.row(i)
    }

    /// Covariate row `X_i`.
    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.s.row(i)[..self.d1]
    }

    /// Mediator row `M_i`.
    #[inline]
    pub fn m_row(&self, i: usize) -> &[f64] {
        &self.s.row(i)[self.d1..]
    }

    pub fn y_all(&self) -> &[f64] {
        &self.y
    }

    /// Indices of the given rows that fall in treatment group `arm`.
    pub fn arm_rows(&self, rows: &[usize], arm: u8) -> Vec<usize> {
        rows.iter().copied().filter(|&i| self.a[i] == arm).collect()
    }

    /// Returns a copy with the outcome multiplied by `c`.
    pub fn scale_outcome(&self, c: f64) -> Dataset {
        let mut out = self.clone();
        for v in &mut out.y {
            *v *= c;
        }
        out
    }
}

/// Checks every dataset invariant and hands the dataset back on success.
///
/// Idempotent: validating an already valid dataset is a no-op.
pub fn validate_dataset(ds: Dataset) -> Result<Dataset> {
    let n = ds.y.len();
    if n == 0 {
        return Err(Error::validation("empty dataset"));
    }
    for (i, &v) in ds.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::validation(format!("non-finite outcome at row {i}: {v}")));
        }
    }
    for i in 0..n {
        for (j, &v) in ds.s.row(i).iter().enumerate() {
            if !v.is_finite() {
                let (name, col) =
                    if j < ds.d1 { ("x", j + 1) } else { ("m", j - ds.d1 + 1) };
                return Err(Error::validation(format!(
                    "non-finite entry at row {i}, column {name}{col}: {v}"
                )));
            }
        }
    }
    let n_treated = ds.a.iter().filter(|&&a| a == 1).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::validation(format!(
            "single-group sample: {n_treated} of {n} rows treated"
        )));
    }
    if ds.intercept_flag {
        for i in 0..n {
            if ds.s.row(i)[0] != 1.0 {
                return Err(Error::validation(format!(
                    "intercept flag set but x1 != 1 at row {i}"
                )));
            }
        }
    }
    Ok(ds)
}

/// Reads the CSV interchange schema `y,a,x1..x{d1},m1..m{d2}`.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(format!("{}:1", path.display()), "empty file"))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let (d1, d2) = parse_header(&cols, path)?;

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut x_rows = Vec::new();
    let mut m_rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let lineno = lineno + 2; // 1-based, after header
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 2 + d1 + d2 {
            return Err(Error::parse(
                format!("{}:{lineno}", path.display()),
                format!("expected {} fields, found {}", 2 + d1 + d2, fields.len()),
            ));
        }
        let parse = |s: &str, col: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| {
                Error::parse(
                    format!("{}:{lineno}:{}", path.display(), col + 1),
                    format!("not a number: {s:?}"),
                )
            })
        };
        y.push(parse(fields[0], 0)?);
        a.push(parse(fields[1], 1)?);
        x_rows.push(
            (0..d1).map(|j| parse(fields[2 + j], 2 + j)).collect::<Result<Vec<f64>>>()?,
        );
        m_rows.push(
            (0..d2)
                .map(|j| parse(fields[2 + d1 + j], 2 + d1 + j))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let intercept = x_rows.iter().all(|r| r[0] == 1.0);
    Dataset::new(y, a, RowMat::from_rows(x_rows)?, RowMat::from_rows(m_rows)?, intercept)
}

fn parse_header(cols: &[&str], path: &Path) -> Result<(usize, usize)> {
    let loc = format!("{}:1", path.display());
    if cols.len() < 4 || cols[0].trim() != "y" || cols[1].trim() != "a" {
        return Err(Error::parse(loc, "header must start with y,a,x1..,m1.."));
    }
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    for (idx, c) in cols[2..].iter().enumerate() {
        let c = c.trim();
        if d2 == 0 && c == format!("x{}", d1 + 1) {
            d1 += 1;
        } else if c == format!("m{}", d2 + 1) {
            d2 += 1;
        } else {
            return Err(Error::parse(
                format!("{}:1:{}", path.display(), idx + 3),
                format!("unexpected column name {c:?}"),
            ));
        }
    }
    if d1 == 0 || d2 == 0 {
        return Err(Error::parse(loc, "need at least one x and one m column"));
    }
    Ok((d1, d2))
}

/// Writes the CSV schema; inverse of [`read_csv`] up to float formatting.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("y,a");
    for j in 1..=ds.d1() {
        header.push_str(&format!(",x{j}"));
    }
    for j in 1..=ds.d2() {
        header.push_str(&format!(",m{j}"));
    }
    writeln!(w, "{header}")?;
    for i in 0..ds.n() {
        let mut line = format!("{},{}", fmt_full(ds.y(i)), ds.a(i));
        for v in ds.s_row(i) {
            line.push(',');
            line.push_str(&fmt_full(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

// Shortest representation that round-trips the f64 exactly.
fn fmt_full(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
