//! Synthetic union-of-subspaces data and the on-disk dataset layout.
//!
//! A dataset directory holds `values.csv`, `mask.csv` and optionally
//! `labels.csv`. Each file starts with a header line `# d=<rows> n=<cols>`
//! followed by `rows` comma-separated lines of `cols` entries; column `i` is
//! sample `i`. Values are written with 17 significant digits, mask entries as
//! `0`/`1`, labels as a single row of non-negative integers (`d=1`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{qr_orthonormal, stream, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of subspaces.
    pub k: usize,
    /// Intrinsic dimension of each subspace.
    pub r: usize,
    /// Ambient dimension.
    pub d: usize,
    pub n_total: usize,
    pub sigma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            k: 5,
            r: 10,
            d: 128,
            n_total: 5000,
            sigma: 0.1,
            rho: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.r == 0 || self.r > self.d {
            return Err(Error::config(format!(
                "need 1 <= r <= d, got r={} d={}",
                self.r, self.d
            )));
        }
        if self.n_total == 0 || !self.n_total.is_multiple_of(self.k) {
            return Err(Error::config(format!(
                "n_total={} must be a positive multiple of k={}",
                self.n_total, self.k
            )));
        }
        validate_noise(self.sigma, self.rho)
    }
}

fn validate_noise(sigma: f64, rho: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::config(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGroundTruth {
    /// One orthonormal d×r basis per subspace.
    pub bases: Vec<Matrix>,
    /// d×n noiseless samples.
    pub clean: Matrix,
    pub labels: Vec<usize>,
    /// r×n coefficients, `clean[:, i] = bases[labels[i]] * coefficients[:, i]`.
    pub coefficients: Matrix,
}

/// Draws `k` orthonormal bases and `n_total / k` Gaussian-coefficient samples in each.
///
/// Labels are contiguous: samples `j*n/k .. (j+1)*n/k` belong to subspace `j`.
pub fn generate_clean(cfg: &SyntheticConfig) -> Result<SyntheticGroundTruth> {
    cfg.validate()?;
    let SyntheticConfig { k, r, d, n_total, .. } = *cfg;

    let mut basis_rng = Rng::with_stream(cfg.seed, stream::BASES);
    let bases = (0..k)
        .map(|_| {
            let g = Matrix::from_fn(d, r, |_, _| basis_rng.normal());
            qr_orthonormal(&g)
        })
        .collect::<Result<Vec<_>>>()?;

    let per_class = n_total / k;
    let labels: Vec<usize> = (0..n_total).map(|i| i / per_class).collect();

    let mut coef_rng = Rng::with_stream(cfg.seed, stream::COEFFICIENTS);
    let mut coefficients = Matrix::zeros(r, n_total);
    let mut clean = Matrix::zeros(d, n_total);
    for (i, &label) in labels.iter().enumerate() {
        let a: Vec<f64> = (0..r).map(|_| coef_rng.normal()).collect();
        let x = bases[label].matvec(&a);
        coefficients.set_col(i, &a);
        clean.set_col(i, &x);
    }
    Ok(SyntheticGroundTruth {
        bases,
        clean,
        labels,
        coefficients,
    })
}

/// Partially observed data: `values = mask ⊙ data`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    values: Matrix,
    mask: Matrix,
    labels: Option<Vec<usize>>,
}

impl ObservedDataset {
    /// Validates shapes, mask binarity and that unobserved values are zero.
    pub fn new(values: Matrix, mask: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::DimensionMismatch(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} samples",
                    l.len(),
                    values.cols()
                )));
            }
        }
        for (v, m) in values.as_slice().iter().zip(mask.as_slice()) {
            if *m != 0.0 && *m != 1.0 {
                return Err(Error::InvalidInput(format!("mask entry {m} is not 0 or 1")));
            }
            if *m == 0.0 && *v != 0.0 {
                return Err(Error::InvalidInput(
                    "values must be zero wherever the mask is zero".into(),
                ));
            }
        }
        Ok(Self { values, mask, labels })
    }

    /// Fully observed dataset.
    pub fn complete(values: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let mask = Matrix::from_fn(values.rows(), values.cols(), |_, _| 1.0);
        Self::new(values, mask, labels)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of samples with no observed entry at all.
    pub fn empty_columns(&self) -> usize {
        (0..self.len())
            .filter(|&j| (0..self.dim()).all(|i| self.mask[(i, j)] == 0.0))
            .count()
    }

    pub fn observed_fraction(&self) -> f64 {
        let total = self.mask.as_slice().len();
        if total == 0 {
            return 0.0;
        }
        self.mask.as_slice().iter().sum::<f64>() / total as f64
    }

    pub fn sample(&self, j: usize) -> Vec<f64> {
        self.values.col(j)
    }

    pub fn sample_mask(&self, j: usize) -> Vec<f64> {
        self.mask.col(j)
    }

    /// Dataset restricted to the given columns, in order.
    pub fn select(&self, idx: &[usize]) -> ObservedDataset {
        ObservedDataset {
            values: self.values.select_cols(idx),
            mask: self.mask.select_cols(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Hides each currently observed entry independently with probability `1 - rho`.
    pub fn resample_mask(&self, rho: f64, seed: u64) -> Result<ObservedDataset> {
        validate_noise(0.0, rho)?;
        let mut rng = Rng::with_stream(seed, stream::MASK);
        let mut values = self.values.clone();
        let mut mask = self.mask.clone();
        for (v, m) in values.as_mut_slice().iter_mut().zip(mask.as_mut_slice()) {
            if !rng.bernoulli(rho) {
                *v = 0.0;
                *m = 0.0;
            }
        }
        Ok(ObservedDataset {
            values,
            mask,
            labels: self.labels.clone(),
        })
    }

    /// Scales every nonzero column of `values` to unit Euclidean norm.
    pub fn normalize_columns(&mut self) {
        let (d, n) = self.values.shape();
        for j in 0..n {
            let norm = (0..d).map(|i| self.values[(i, j)].powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..d {
                    self.values[(i, j)] /= norm;
                }
            }
        }
    }
}

/// Adds N(0, σ²) noise to every entry of the clean data, then hides each entry
/// independently with probability `1 - rho`.
///
/// Noise is drawn from stream `NOISE` and the mask from stream `MASK` of `seed`,
/// both in row-major order. Columns that end up with no observed entries stay
/// in the dataset as all-zero columns; see [`ObservedDataset::empty_columns`].
pub fn observe(gt: &SyntheticGroundTruth, sigma: f64, rho: f64, seed: u64) -> Result<ObservedDataset> {
    validate_noise(sigma, rho)?;
    let (d, n) = gt.clean.shape();
    let mut noise_rng = Rng::with_stream(seed, stream::NOISE);
    let mut mask_rng = Rng::with_stream(seed, stream::MASK);
    let mut values = Matrix::zeros(d, n);
    let mut mask = Matrix::zeros(d, n);
    for ((v, m), x) in values
        .as_mut_slice()
        .iter_mut()
        .zip(mask.as_mut_slice())
        .zip(gt.clean.as_slice())
    {
        let noisy = if sigma > 0.0 {
            x + sigma * noise_rng.normal()
        } else {
            *x
        };
        if mask_rng.bernoulli(rho) {
            *v = noisy;
            *m = 1.0;
        }
    }
    Ok(ObservedDataset {
        values,
        mask,
        labels: Some(gt.labels.clone()),
    })
}

pub const VALUES_FILE: &str = "values.csv";
pub const MASK_FILE: &str = "mask.csv";
pub const LABELS_FILE: &str = "labels.csv";

pub fn save_dataset(ds: &ObservedDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(&dir.join(VALUES_FILE), &ds.values, |v| format!("{v:.16e}"))?;
    write_matrix_csv(&dir.join(MASK_FILE), &ds.mask, |v| {
        if v == 0.0 { "0" } else { "1" }.to_string()
    })?;
    match &ds.labels {
        Some(labels) => write_labels_csv(&dir.join(LABELS_FILE), labels)?,
        None => {
            let path = dir.join(LABELS_FILE);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<ObservedDataset> {
    let dir = dir.as_ref();
    let values_path = dir.join(VALUES_FILE);
    let mask_path = dir.join(MASK_FILE);
    let values = read_matrix_csv(&values_path)?;
    let mask = read_matrix_csv(&mask_path)?;
    if values.rows != mask.rows || values.cols != mask.cols {
        return Err(Error::DimensionMismatch(format!(
            "{} is {}x{} but {} is {}x{}",
            values_path.display(),
            values.rows,
            values.cols,
            mask_path.display(),
            mask.rows,
            mask.cols
        )));
    }
    for (idx, m) in mask.data.iter().enumerate() {
        if *m != 0.0 && *m != 1.0 {
            return Err(Error::Parse {
                path: mask_path,
                line: 2 + idx / mask.cols,
                message: format!("mask entry {m} is not 0 or 1"),
            });
        }
    }
    let mut data = values.data;
    for (idx, (v, m)) in data.iter_mut().zip(&mask.data).enumerate() {
        if *m == 0.0 {
            *v = 0.0;
        } else if !v.is_finite() {
            return Err(Error::Parse {
                path: values_path,
                line: 2 + idx / values.cols,
                message: format!("non-finite observed value {v}"),
            });
        }
    }
    let values = Matrix::from_vec(values.rows, values.cols, data)?;
    let mask = Matrix::from_vec(mask.rows, mask.cols, mask.data)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let raw = read_matrix_csv(&labels_path)?;
        if raw.rows != 1 || raw.cols != values.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{}, expected 1x{}",
                labels_path.display(),
                raw.rows,
                raw.cols,
                values.cols()
            )));
        }
        let mut labels = Vec::with_capacity(raw.cols);
        for v in raw.data {
            if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::Parse {
                    path: labels_path,
                    line: 2,
                    message: format!("label {v} is not a non-negative integer"),
                });
            }
            labels.push(v as usize);
        }
        Some(labels)
    } else {
        None
    };
    ObservedDataset::new(values, mask, labels)
}

fn write_matrix_csv(path: &Path, m: &Matrix, fmt: impl Fn(f64) -> String) -> Result<()> {
    let mut out = format!("# d={} n={}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| fmt(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a 1×n matrix of labels.
pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let row: Vec<String> = labels.iter().map(usize::to_string).collect();
    let out = format!("# d=1 n={}\n{}\n", labels.len(), row.join(","));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let raw = read_matrix_csv(path)?;
    if raw.rows != 1 {
        return Err(Error::DimensionMismatch(format!(
            "{}: labels file must have one row, found {}",
            path.display(),
            raw.rows
        )));
    }
    raw.data
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 2,
                    message: format!("label {v} is not a non-negative integer"),
                })
            }
        })
        .collect()
}

/// Writes a dense matrix in the dataset CSV layout.
pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_matrix_csv(path, m, |v| format!("{v:.16e}"))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let raw = read_matrix_csv(path)?;
    Matrix::from_vec(raw.rows, raw.cols, raw.data).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "matrix contains non-finite values".into(),
    })
}

struct RawCsv {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.trim().strip_prefix('#')?.trim();
    let mut d = None;
    let mut n = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("d=") {
            d = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("n=") {
            n = v.parse().ok();
        }
    }
    Some((d?, n?))
}

fn read_matrix_csv(path: &Path) -> Result<RawCsv> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let (rows, cols) =
        parse_header(header).ok_or_else(|| parse_err(1, format!("expected header `# d=<d> n=<n>`, got {header:?}")))?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen_rows == rows {
            return Err(parse_err(lineno, format!("more than {rows} data rows")));
        }
        let before = data.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("cannot parse {tok:?} as a number")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(parse_err(
                lineno,
                format!("expected {cols} entries, found {}", data.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {rows} data rows, found {seen_rows}"),
        ));
    }
    Ok(RawCsv { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, r: usize, d: usize, n: usize) -> SyntheticConfig {
        SyntheticConfig {
            k,
            r,
            d,
            n_total: n,
            sigma: 0.0,
            rho: 1.0,
            seed: 17,
        }
    }

    fn subspace_residual(gt: &SyntheticGroundTruth, i: usize) -> f64 {
        let u = &gt.bases[gt.labels[i]];
        let x = gt.clean.col(i);
        let coeffs = u.transpose().matvec(&x);
        let proj = u.matvec(&coeffs);
        x.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rank_one_case() {
        let gt = generate_clean(&cfg(1, 1, 2, 4)).unwrap();
        let u = gt.bases[0].col(0);
        for i in 0..4 {
            let x = gt.clean.col(i);
            // x parallel to u: 2D cross product vanishes.
            assert!((x[0] * u[1] - x[1] * u[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn columns_lie_in_their_subspace() {
        let gt = generate_clean(&cfg(5, 10, 128, 5000)).unwrap();
        let worst = (0..5000).map(|i| subspace_residual(&gt, i)).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
        let mut counts = [0usize; 5];
        gt.labels.iter().for_each(|&l| counts[l] += 1);
        assert_eq!(counts, [1000; 5]);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg(3, 2, 10, 30);
        assert_eq!(generate_clean(&c).unwrap(), generate_clean(&c).unwrap());
        let gt = generate_clean(&c).unwrap();
        assert_eq!(observe(&gt, 0.2, 0.5, 9).unwrap(), observe(&gt, 0.2, 0.5, 9).unwrap());
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_clean(&cfg(3, 4, 3, 30)).is_err());
        assert!(generate_clean(&cfg(3, 2, 10, 31)).is_err());
        assert!(generate_clean(&cfg(0, 2, 10, 30)).is_err());
        let gt = generate_clean(&cfg(1, 1, 2, 4)).unwrap();
        assert!(observe(&gt, 0.0, 0.0, 1).is_err());
        assert!(observe(&gt, -1.0, 0.5, 1).is_err());
        assert!(observe(&gt, 0.0, 1.5, 1).is_err());
    }

    #[test]
    fn full_observation_without_noise() {
        let gt = generate_clean(&cfg(2, 2, 6, 10)).unwrap();
        let ds = observe(&gt, 0.0, 1.0, 3).unwrap();
        assert_eq!(ds.values(), &gt.clean);
        assert!(ds.mask().as_slice().iter().all(|&m| m == 1.0));
        assert_eq!(ds.labels(), Some(gt.labels.as_slice()));
    }

    #[test]
    fn observed_fraction_is_binomial() {
        let gt = generate_clean(&cfg(5, 10, 128, 5000)).unwrap();
        let ds = observe(&gt, 0.1, 0.5, 4).unwrap();
        let total = (128 * 5000) as f64;
        let observed = ds.observed_fraction() * total;
        let sd = (total * 0.25).sqrt();
        assert!((observed - 0.5 * total).abs() < 3.0 * sd);
        for (v, m) in ds.values().as_slice().iter().zip(ds.mask().as_slice()) {
            if *m == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn noise_has_requested_std() {
        let gt = generate_clean(&cfg(2, 3, 50, 2000)).unwrap();
        let ds = observe(&gt, 0.3, 1.0, 5).unwrap();
        let res: Vec<f64> = ds
            .values()
            .as_slice()
            .iter()
            .zip(gt.clean.as_slice())
            .map(|(y, x)| y - x)
            .collect();
        let n = res.len() as f64;
        let mean = res.iter().sum::<f64>() / n;
        let sd = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.3).abs() < 0.05 * 0.3, "{sd}");
    }

    #[test]
    fn empty_columns_are_kept() {
        let gt = generate_clean(&cfg(2, 1, 2, 400)).unwrap();
        let ds = observe(&gt, 0.0, 0.1, 6).unwrap();
        assert_eq!(ds.len(), 400);
        let recount = (0..400)
            .filter(|&j| ds.sample_mask(j).iter().all(|&m| m == 0.0))
            .count();
        assert!(recount > 0);
        assert_eq!(ds.empty_columns(), recount);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values = Matrix::from_rows(&[vec![0.1, 0.0], vec![-1.0 / 3.0, 2.5e-300]]).unwrap();
        let mask = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let ds = ObservedDataset::new(values, mask, Some(vec![0, 1])).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);

        let gt = generate_clean(&cfg(2, 2, 5, 6)).unwrap();
        let ds = observe(&gt, 0.3, 0.6, 2).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn rejects_non_binary_mask() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(VALUES_FILE), "# d=2 n=2\n1,2\n3,4\n").unwrap();
        fs::write(dir.path().join(MASK_FILE), "# d=2 n=2\n1,1\n2,1\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(VALUES_FILE), "# d=2 n=2\n1,2\n3,4\n").unwrap();
        fs::write(dir.path().join(MASK_FILE), "# d=2 n=1\n1\n1\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn reports_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(VALUES_FILE), "# d=2 n=2\n1,2\n3,x\n").unwrap();
        fs::write(dir.path().join(MASK_FILE), "# d=2 n=2\n1,1\n1,1\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(dir.path().join(VALUES_FILE), "d=2 n=2\n1,2\n3,4\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 1, .. })));
    }
}
