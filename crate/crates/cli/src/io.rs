//! CSV input and output. Every numeric file is plain comma-separated rows with
//! an optional single header row, detected by the first row failing to parse.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ddpca_core::lda::LabeledDataset;
use ddpca_core::portfolio::{Date, ReturnSeries};
use ddpca_core::{Matrix, SymmetricMatrix};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Largest `|m_ij − m_ji|` silently repaired by symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// An output file before it is written, addressed relative to the run prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Artifact { name: name.into(), bytes }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    /// Empty for header-less numeric files.
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        if !self.header.is_empty() {
            w.write_record(&self.header).expect("writing to memory");
        }
        for row in &self.rows {
            w.write_record(row).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }

    pub fn artifact(&self, name: &str) -> Artifact {
        Artifact::new(name, self.to_csv())
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn matrix_table(m: &Matrix) -> Table {
    Table {
        header: Vec::new(),
        rows: (0..m.rows()).map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect()).collect(),
    }
}

pub fn symmetric_table(m: &SymmetricMatrix) -> Table {
    matrix_table(&Matrix::from_fn(m.dim(), m.dim(), |i, j| m[(i, j)]))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn records(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec.iter().map(str::to_owned).collect());
    }
    if out.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

fn parse_num(path: &Path, line: usize, field: &str) -> CliResult<f64> {
    field.parse::<f64>().map_err(|_| {
        CliError::usage(format!("{}: row {line}: '{field}' is not a number", path.display()))
    })
}

/// Drops the first row when `is_data` rejects it.
fn strip_header(mut rows: Vec<Vec<String>>, is_data: impl Fn(&[String]) -> bool) -> Vec<Vec<String>> {
    if !is_data(&rows[0]) {
        log::debug!("treating first row as a header");
        rows.remove(0);
    }
    rows
}

fn all_numeric(fields: &[String]) -> bool {
    fields.iter().all(|f| f.parse::<f64>().is_ok())
}

fn numeric_rows(path: &Path, rows: &[Vec<String>], skip: usize) -> CliResult<Matrix> {
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    let cols = rows[0].len() - skip;
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() - skip != cols {
            return Err(CliError::usage(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                i + 1,
                row.len() - skip,
                cols
            )));
        }
        for f in &row[skip..] {
            let v = parse_num(path, i + 1, f)?;
            if !v.is_finite() {
                return Err(CliError::usage(format!("{}: row {}: non-finite value", path.display(), i + 1)));
            }
            data.push(v);
        }
    }
    Ok(Matrix::from_vec(rows.len(), cols, data)?)
}

pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let rows = strip_header(records(path)?, all_numeric);
    numeric_rows(path, &rows, 0)
}

/// Square symmetric matrix. Asymmetry up to [`SYMMETRY_TOL`] is averaged away
/// with a warning; anything larger is rejected.
pub fn read_symmetric(path: &Path) -> CliResult<(SymmetricMatrix, Option<String>)> {
    let m = read_matrix(path)?;
    let p = m.rows();
    if m.cols() != p {
        return Err(CliError::usage(format!("{}: matrix is {p} × {}, not square", path.display(), m.cols())));
    }
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in i + 1..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst >= SYMMETRY_TOL {
        return Err(CliError::usage(format!(
            "{}: matrix is not symmetric (max |a_ij - a_ji| = {worst:.3e})",
            path.display()
        )));
    }
    let warning = (worst > 0.0).then(|| {
        let msg = format!("{}: symmetrized (max asymmetry {worst:.3e})", path.display());
        log::warn!("{msg}");
        msg
    });
    Ok((m.sym_part(), warning))
}

/// Values of a single-row or single-column file.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(CliError::usage(format!(
            "{}: expected a single row or column, found {} × {}",
            path.display(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.as_slice().to_vec())
}

/// `YYYY-MM-DD` or `YYYYMMDD`.
pub fn parse_date(s: &str) -> Option<Date> {
    let (y, m, d) = if s.len() == 10 && s.as_bytes()[4] == b'-' && s.as_bytes()[7] == b'-' {
        (&s[..4], &s[5..7], &s[8..])
    } else if s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()) {
        (&s[..4], &s[4..6], &s[6..])
    } else {
        return None;
    };
    Date::new(y.parse().ok()?, m.parse().ok()?, d.parse().ok()?).ok()
}

/// Daily returns with a leading date column.
pub fn read_returns(path: &Path) -> CliResult<ReturnSeries> {
    let rows = strip_header(records(path)?, |r| parse_date(&r[0]).is_some() && all_numeric(&r[1..]));
    let mut dates = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let d = parse_date(&r[0])
            .ok_or_else(|| CliError::usage(format!("{}: row {}: bad date '{}'", path.display(), i + 1, r[0])))?;
        dates.push(d);
    }
    let returns = numeric_rows(path, &rows, 1)?;
    Ok(ReturnSeries::new(dates, returns)?)
}

/// Samples with a leading class label (1 or 2).
pub fn read_labeled(path: &Path) -> CliResult<LabeledDataset> {
    let rows = strip_header(records(path)?, all_numeric);
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let l = match r[0].parse::<f64>() {
            Ok(v) if v == 1.0 => 1,
            Ok(v) if v == 2.0 => 2,
            _ => {
                return Err(CliError::usage(format!(
                    "{}: row {}: label must be 1 or 2, found '{}'",
                    path.display(),
                    i + 1,
                    r[0]
                )))
            }
        };
        labels.push(l);
    }
    let features = numeric_rows(path, &rows, 1)?;
    Ok(LabeledDataset::new(features, labels)?)
}
