//! Clustering error under the best one-to-one label alignment, evaluation
//! subsampling and aggregation of sweep results into accuracy tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{stream, Rng};

/// Label sets up to this size are aligned by exhaustive permutation search.
pub const BRUTE_FORCE_MAX_CLUSTERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
    /// Misclassified fraction under `alignment`.
    pub error: f64,
    /// `(predicted label, matched truth label)`; `None` when the predicted
    /// cluster has no partner (more predicted than true clusters).
    pub alignment: Vec<(usize, Option<usize>)>,
}

impl ClusteringResult {
    pub fn accuracy(&self) -> f64 {
        1.0 - self.error
    }
}

struct Confusion {
    pred_labels: Vec<usize>,
    truth_labels: Vec<usize>,
    /// Square, padded with zeros to max(kp, kt).
    counts: Vec<Vec<i64>>,
}

fn confusion(pred: &[usize], truth: &[usize]) -> Confusion {
    let pred_labels: Vec<usize> = pred.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let truth_labels: Vec<usize> = truth.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let size = pred_labels.len().max(truth_labels.len());
    let mut counts = vec![vec![0i64; size]; size];
    for (p, t) in pred.iter().zip(truth) {
        let pi = pred_labels.binary_search(p).expect("label present");
        let ti = truth_labels.binary_search(t).expect("label present");
        counts[pi][ti] += 1;
    }
    Confusion {
        pred_labels,
        truth_labels,
        counts,
    }
}

/// Maximum-weight perfect matching on a square count matrix by exhaustive
/// search over permutations. Returns `assignment[row] = col`.
pub fn best_assignment_brute_force(counts: &[Vec<i64>]) -> (i64, Vec<usize>) {
    fn recurse(
        counts: &[Vec<i64>],
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        score: i64,
        best: &mut (i64, Vec<usize>),
    ) {
        let n = counts.len();
        if row == n {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                current.push(col);
                recurse(counts, row + 1, used, current, score + counts[row][col], best);
                current.pop();
                used[col] = false;
            }
        }
    }
    let n = counts.len();
    let mut best = (i64::MIN, Vec::new());
    recurse(counts, 0, &mut vec![false; n], &mut Vec::with_capacity(n), 0, &mut best);
    if n == 0 {
        best.0 = 0;
    }
    best
}

/// Maximum-weight perfect matching by the Hungarian method (shortest
/// augmenting paths with potentials), O(n³).
pub fn best_assignment_hungarian(counts: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = counts.len();
    if n == 0 {
        return (0, Vec::new());
    }
    // Minimize cost = -count; 1-based arrays with a virtual column 0.
    let cost = |i: usize, j: usize| -counts[i - 1][j - 1];
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    let score = (0..n).map(|i| counts[i][assignment[i]]).sum();
    (score, assignment)
}

fn score_with(
    pred: &[usize],
    truth: &[usize],
    solver: impl Fn(&[Vec<i64>]) -> (i64, Vec<usize>),
) -> Result<ClusteringResult> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted labels vs {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty labelling".into()));
    }
    let conf = confusion(pred, truth);
    let (matched, assignment) = solver(&conf.counts);
    let alignment = conf
        .pred_labels
        .iter()
        .enumerate()
        .map(|(pi, &p)| (p, conf.truth_labels.get(assignment[pi]).copied()))
        .collect();
    Ok(ClusteringResult {
        predicted: pred.to_vec(),
        truth: truth.to_vec(),
        error: (pred.len() as i64 - matched) as f64 / pred.len() as f64,
        alignment,
    })
}

/// Clustering error after the best one-to-one alignment of predicted to true labels.
///
/// Exhaustive permutation search when both label sets have at most eight
/// distinct values, the Hungarian method otherwise.
pub fn align_and_score(pred: &[usize], truth: &[usize]) -> Result<ClusteringResult> {
    let kp = pred.iter().collect::<BTreeSet<_>>().len();
    let kt = truth.iter().collect::<BTreeSet<_>>().len();
    if kp <= BRUTE_FORCE_MAX_CLUSTERS && kt <= BRUTE_FORCE_MAX_CLUSTERS {
        score_with(pred, truth, best_assignment_brute_force)
    } else {
        score_with(pred, truth, best_assignment_hungarian)
    }
}

/// Scores with the Hungarian method regardless of the number of clusters.
pub fn align_and_score_hungarian(pred: &[usize], truth: &[usize]) -> Result<ClusteringResult> {
    score_with(pred, truth, best_assignment_hungarian)
}

/// Scores by exhaustive search regardless of the number of clusters.
pub fn align_and_score_brute_force(pred: &[usize], truth: &[usize]) -> Result<ClusteringResult> {
    score_with(pred, truth, best_assignment_brute_force)
}

/// `n_eval` distinct sample indices drawn uniformly from `0..n`, sorted.
pub fn subsample_eval(n: usize, n_eval: usize, seed: u64) -> Result<Vec<usize>> {
    if n_eval > n {
        return Err(Error::InvalidInput(format!(
            "cannot draw {n_eval} evaluation samples from {n}"
        )));
    }
    let mut rng = Rng::with_stream(seed, stream::SUBSAMPLE);
    let mut idx = rng.sample_indices(n, n_eval);
    idx.sort_unstable();
    Ok(idx)
}

/// One (method, ρ, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub rho: f64,
    pub seed: u64,
    pub error: f64,
    pub accuracy: f64,
    pub seconds: f64,
    /// Failure reason; `error` and `accuracy` are NaN when set.
    pub reason: Option<String>,
}

impl SweepRow {
    pub fn ok(method: &str, rho: f64, seed: u64, error: f64, seconds: f64) -> Self {
        Self {
            method: method.to_string(),
            rho,
            seed,
            error,
            accuracy: 1.0 - error,
            seconds,
            reason: None,
        }
    }

    pub fn failed(method: &str, rho: f64, seed: u64, seconds: f64, reason: impl Into<String>) -> Self {
        Self {
            method: method.to_string(),
            rho,
            seed,
            error: f64::NAN,
            accuracy: f64::NAN,
            seconds,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Mean accuracy over seeds at each grid point (NaN if no successful cell).
    pub accuracy: Vec<f64>,
    /// Mean error over seeds at each grid point.
    pub error: Vec<f64>,
    /// Mean of the per-ρ mean accuracies over the grid points this method ran.
    pub mean_accuracy: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Rows sorted by (method, ρ, seed).
    pub rows: Vec<SweepRow>,
    /// Sorted distinct ρ values present in the rows.
    pub grid: Vec<f64>,
    /// Methods ordered by descending mean accuracy.
    pub methods: Vec<MethodSummary>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn rho_key(rho: f64) -> u64 {
    rho.to_bits()
}

pub fn aggregate_sweep(rows: &[SweepRow]) -> Result<SweepResult> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no sweep rows to aggregate".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.rho.total_cmp(&b.rho))
            .then(a.seed.cmp(&b.seed))
            .then(a.error.total_cmp(&b.error))
    });
    let mut grid: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by_key(|r| rho_key(*r));

    let mut by_method: BTreeMap<&str, BTreeMap<u64, Vec<&SweepRow>>> = BTreeMap::new();
    for row in &rows {
        by_method
            .entry(&row.method)
            .or_default()
            .entry(rho_key(row.rho))
            .or_default()
            .push(row);
    }
    let mut methods: Vec<MethodSummary> = by_method
        .into_iter()
        .map(|(method, cells)| {
            let per_rho = |f: fn(&SweepRow) -> f64| -> Vec<f64> {
                grid.iter()
                    .map(|rho| {
                        cells
                            .get(&rho_key(*rho))
                            .map_or(f64::NAN, |rs| mean(rs.iter().map(|r| f(r))))
                    })
                    .collect()
            };
            let accuracy = per_rho(|r| r.accuracy);
            let error = per_rho(|r| r.error);
            MethodSummary {
                method: method.to_string(),
                mean_accuracy: mean(accuracy.iter().copied()),
                mean_error: mean(error.iter().copied()),
                accuracy,
                error,
            }
        })
        .collect();
    methods.sort_by(|a, b| {
        let key = |m: &MethodSummary| {
            if m.mean_accuracy.is_nan() {
                f64::NEG_INFINITY
            } else {
                m.mean_accuracy
            }
        };
        key(b).total_cmp(&key(a)).then(a.method.cmp(&b.method))
    });
    Ok(SweepResult { rows, grid, methods })
}

pub const SWEEP_HEADER: &str = "method,rho,seed,error,accuracy,seconds,reason";

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepResult {
    pub fn grid_label(&self) -> String {
        self.grid.iter().map(|r| format!("{r}")).collect::<Vec<_>>().join(";")
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},{}",
                csv_field(&r.method),
                r.rho,
                r.seed,
                fmt_num(r.error),
                fmt_num(r.accuracy),
                r.seconds,
                csv_field(r.reason.as_deref().unwrap_or(""))
            );
        }
        out
    }

    /// Per-method mean accuracy at every ρ plus the grid mean, best method first.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method");
        for rho in &self.grid {
            let _ = write!(out, ",{rho}");
        }
        out.push_str(",mean,grid\n");
        let grid = self.grid_label();
        for m in &self.methods {
            out.push_str(&csv_field(&m.method));
            for a in &m.accuracy {
                let _ = write!(out, ",{}", fmt_num(*a));
            }
            let _ = writeln!(out, ",{},{}", fmt_num(m.mean_accuracy), grid);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sweep = dir.join("sweep.csv");
        std::fs::write(&sweep, self.sweep_csv()).map_err(|e| Error::io(&sweep, e))?;
        let summary = dir.join("summary.csv");
        std::fs::write(&summary, self.summary_csv()).map_err(|e| Error::io(&summary, e))
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}
