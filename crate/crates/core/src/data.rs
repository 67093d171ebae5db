//! Row-major numeric matrices and their CSV form.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `x` with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    d: usize,
    values: Vec<f64>,
    header: Vec<String>,
}

impl DataMatrix {
    pub fn from_flat(d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || values.len() % d != 0 {
            return Err(Error::Argument(format!(
                "{} values do not fill rows of width {d}",
                values.len()
            )));
        }
        Ok(Self {
            d,
            values,
            header: (1..=d).map(|j| format!("u{j}")).collect(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyData)?;
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(d, values)
    }

    pub fn with_header(mut self, header: Vec<String>) -> Result<Self> {
        if header.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: header.len(),
            });
        }
        self.header = header;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn map_columns(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| f(i % self.d, x))
            .collect();
        Self {
            d: self.d,
            values,
            header: self.header.clone(),
        }
    }

    /// Rows in `range` (0-based, half open).
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.nrows() {
            return Err(Error::Argument(format!(
                "row range {}..{} outside 0..{}",
                range.start,
                range.end,
                self.nrows()
            )));
        }
        Ok(Self {
            d: self.d,
            values: self.values[range.start * self.d..range.end * self.d].to_vec(),
            header: self.header.clone(),
        })
    }

    /// Errors unless every entry lies in `[0, 1]` (with the basis tolerance).
    pub fn check_unit_cube(&self) -> Result<()> {
        for &x in &self.values {
            crate::basis::check_unit(x, "pseudo-observation")?;
        }
        Ok(())
    }

    /// CSV with a header row; `comments` are written first as `# ` lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Parses CSV with a mandatory header. Lines starting with `#` are
    /// returned separately; any non-numeric cell is an error.
    pub fn parse_csv(reader: impl Read) -> Result<(Self, Vec<String>)> {
        let mut comments = Vec::new();
        let mut header: Option<Vec<String>> = None;
        let mut values = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(c) = trimmed.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            match &header {
                None => header = Some(cells.iter().map(|s| s.to_string()).collect()),
                Some(h) => {
                    if cells.len() != h.len() {
                        return Err(Error::Parse(format!(
                            "line {}: expected {} cells, found {}",
                            lineno + 1,
                            h.len(),
                            cells.len()
                        )));
                    }
                    for c in cells {
                        let x: f64 = c.parse().map_err(|_| {
                            Error::Parse(format!("line {}: non-numeric cell {c:?}", lineno + 1))
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Parse(format!(
                                "line {}: non-finite cell {c:?}",
                                lineno + 1
                            )));
                        }
                        values.push(x);
                    }
                }
            }
        }
        let header = header.ok_or(Error::EmptyData)?;
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        let m = Self::from_flat(header.len(), values)?.with_header(header)?;
        Ok((m, comments))
    }

    pub fn read_csv(path: &Path) -> Result<(Self, Vec<String>)> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(f)
    }
}
