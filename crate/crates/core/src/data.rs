//! Datasets, boundedness clipping, synthetic generation and CSV I/O.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::support::Support;

/// Feature matrix `x` (n x p) and response `y` (length n).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "x has {} rows but y has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Dataset { x, y })
    }

    /// Builds a dataset from row vectors of features.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let p = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: p,
                    found: r.len(),
                });
            }
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(x, DVector::from_vec(y))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// Copy of the dataset with row `i` replaced.
    pub fn with_row(&self, i: usize, x_row: &[f64], y_val: f64) -> Result<Self> {
        if x_row.len() != self.p() || i >= self.n() {
            return Err(Error::invalid("replacement row does not fit the dataset"));
        }
        let mut out = self.clone();
        for (j, &v) in x_row.iter().enumerate() {
            out.x[(i, j)] = v;
        }
        out.y[i] = y_val;
        Ok(out)
    }

    /// Number of rows in which the two datasets differ. Errors on shape
    /// mismatch.
    pub fn rows_differing(&self, other: &Dataset) -> Result<usize> {
        if self.n() != other.n() || self.p() != other.p() {
            return Err(Error::invalid("datasets have different shapes"));
        }
        Ok((0..self.n())
            .filter(|&i| {
                self.y[i] != other.y[i] || (0..self.p()).any(|j| self.x[(i, j)] != other.x[(i, j)])
            })
            .count())
    }
}

/// Declared bounds `|x_ij| <= bx`, `|y_i| <= by`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataBounds {
    pub bx: f64,
    pub by: f64,
}

impl DataBounds {
    pub fn new(bx: f64, by: f64) -> Result<Self> {
        if !(bx > 0.0 && by > 0.0 && bx.is_finite() && by.is_finite()) {
            return Err(Error::invalid("data bounds must be positive and finite"));
        }
        Ok(DataBounds { bx, by })
    }
}

impl Default for DataBounds {
    fn default() -> Self {
        DataBounds { bx: 0.5, by: 0.5 }
    }
}

/// Clamps every feature to `[-bx, bx]` and every response to `[-by, by]`.
pub fn clip_dataset(d: &Dataset, bounds: DataBounds) -> Dataset {
    Dataset {
        x: d.x.map(|v| v.clamp(-bounds.bx, bounds.bx)),
        y: d.y.map(|v| v.clamp(-bounds.by, bounds.by)),
    }
}

/// Clamps features only. Classification labels stay at `{-1, +1}`.
pub fn clip_features(d: &Dataset, bx: f64) -> Dataset {
    Dataset { x: d.x.map(|v| v.clamp(-bx, bx)), y: d.y.clone() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    /// AR(1) correlation of the feature covariance.
    pub rho: f64,
    /// Realized `||X beta*||^2 / ||noise||^2`.
    pub snr: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.s == 0 {
            return Err(Error::invalid("n, p and s must be positive"));
        }
        if 2 * self.s - 1 > self.p {
            return Err(Error::invalid(format!(
                "2s-1 = {} exceeds p = {}",
                2 * self.s - 1,
                self.p
            )));
        }
        if self.s > self.n {
            return Err(Error::invalid("s must not exceed n"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1)"));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid("snr must be positive and finite"));
        }
        Ok(())
    }
}

/// The planted model behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueModel {
    pub support: Support,
    pub beta: DVector<f64>,
}

impl TrueModel {
    /// `1/sqrt(s)` on 0-based indices `0, 2, ..., 2s-2`.
    pub fn planted(p: usize, s: usize) -> Self {
        let value = 1.0 / (s as f64).sqrt();
        let mut beta = DVector::zeros(p);
        let idx: Vec<usize> = (0..s).map(|k| 2 * k).collect();
        for &i in &idx {
            beta[i] = value;
        }
        TrueModel {
            support: Support::from_sorted(idx),
            beta,
        }
    }
}

/// `Sigma_ij = rho^|i-j|`.
pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Draws `X` with i.i.d. `N(0, Sigma)` rows, the planted `beta*`, and the
/// latent `X beta* + noise` with noise rescaled so the realized SNR is exact.
fn draw_latent(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<(DMatrix<f64>, DVector<f64>, TrueModel)> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let chol = ar1_covariance(p, cfg.rho)
        .cholesky()
        .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
    let lower = chol.l();
    let g = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    // Row i of X is L g_i, i.e. X = G L^T.
    let x = g * lower.transpose();
    let truth = TrueModel::planted(p, cfg.s);
    let signal = &x * &truth.beta;
    let mut noise = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let noise_sq = noise.norm_squared();
    if noise_sq > 0.0 {
        noise *= (signal.norm_squared() / (cfg.snr * noise_sq)).sqrt();
    }
    Ok((x, signal + noise, truth))
}

/// Regression data `y = X beta* + noise` with exact realized SNR.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, TrueModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (x, latent, truth) = draw_latent(cfg, &mut rng)?;
    Ok((Dataset::new(x, latent)?, truth))
}

/// Classification data: the latent `z_i = x_i' beta* + noise_i` is turned
/// into a label with `u_i ~ U[0,1]`: `y_i = +1` if `u_i > sigmoid(z_i)`, else
/// `-1`.
pub fn generate_classification(cfg: &SynthConfig) -> Result<(Dataset, TrueModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (x, latent, truth) = draw_latent(cfg, &mut rng)?;
    let y = latent.map(|z| {
        let u: f64 = rng.random();
        if u > 1.0 / (1.0 + (-z).exp()) {
            1.0
        } else {
            -1.0
        }
    });
    Ok((Dataset::new(x, y)?, truth))
}

/// Parses a dataset CSV: header `y,x1,...,xp`, then one numeric row per
/// observation.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(h) => h?,
    };
    check_header(&header)?;
    let p = header.len() - 1;
    let mut x_vals: Vec<f64> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for (row_no, rec) in records.enumerate() {
        let rec = rec?;
        let line = row_no + 2;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != p + 1 {
            return Err(Error::DimensionMismatch {
                line,
                expected: p + 1,
                found: rec.len(),
            });
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                line,
                column: col + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite("dataset cell"));
            }
            if col == 0 {
                y.push(v);
            } else {
                x_vals.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let x = DMatrix::from_row_slice(y.len(), p, &x_vals);
    Dataset::new(x, DVector::from_vec(y))
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    if header.len() < 2 {
        return Err(Error::MalformedHeader(
            "expected y followed by at least one feature column".into(),
        ));
    }
    if header.get(0) != Some("y") {
        return Err(Error::MalformedHeader(format!(
            "first column must be y, found {:?}",
            header.get(0).unwrap_or("")
        )));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(Error::MalformedHeader(format!(
                "column {} must be x{}, found {name:?}",
                j + 2,
                j + 1
            )));
        }
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(std::fs::File::open(path)?)
}

/// Writes `d` in the dataset CSV format. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_dataset_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut row = vec![d.y[i].to_string()];
        row.extend((0..d.p()).map(|j| d.x[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(d, std::fs::File::create(path)?)
}

/// Writes a header plus rows of preformatted cells.
pub fn write_results<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficient file: header `index,beta` with 1-based indices; unlisted
/// coefficients are zero.
pub fn parse_coefficients<R: Read>(reader: R, p: usize) -> Result<DVector<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records.next().ok_or(Error::EmptyInput)??;
    if header.len() != 2 || header.get(0) != Some("index") || header.get(1) != Some("beta") {
        return Err(Error::MalformedHeader("expected index,beta".into()));
    }
    let mut beta = DVector::zeros(p);
    for (row_no, rec) in records.enumerate() {
        let rec = rec?;
        let line = row_no + 2;
        if rec.len() != 2 {
            return Err(Error::DimensionMismatch {
                line,
                expected: 2,
                found: rec.len(),
            });
        }
        let idx: usize = rec[0].parse().map_err(|_| Error::NonNumeric {
            line,
            column: 1,
            value: rec[0].to_string(),
        })?;
        let v: f64 = rec[1].parse().map_err(|_| Error::NonNumeric {
            line,
            column: 2,
            value: rec[1].to_string(),
        })?;
        if idx == 0 || idx > p {
            return Err(Error::invalid(format!("coefficient index {idx} outside 1..={p}")));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("coefficient"));
        }
        beta[idx - 1] = v;
    }
    Ok(beta)
}

pub fn write_coefficients<W: Write>(beta: &DVector<f64>, writer: W) -> Result<()> {
    let rows: Vec<Vec<String>> = beta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()])
        .collect();
    write_results(writer, &["index", "beta"], &rows)
}
