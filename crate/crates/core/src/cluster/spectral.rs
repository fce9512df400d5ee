use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix};

use super::kmeans::kmeans_rows;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOutcome {
    pub labels: Vec<usize>,
    /// Vertices with zero degree; their spectral embedding rows are zero.
    pub isolated: usize,
}

/// Normalized spectral clustering of a symmetric nonnegative affinity.
///
/// Uses the `k` smallest eigenvectors of `I − D^{-1/2} W D^{-1/2}`, row
/// normalizes them and runs k-means on the rows.
pub fn spectral_clustering(w: &Matrix, k: usize, seed: u64) -> Result<SpectralOutcome> {
    let n = w.rows();
    if w.cols() != n {
        return Err(Error::DimensionMismatch("affinity must be square".into()));
    }
    if k == 0 || k > n {
        return Err(Error::config(format!("cannot form {k} clusters from {n} points")));
    }
    if w.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("affinity has negative entries".into()));
    }

    let degree: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let isolated = degree.iter().filter(|&&d| d == 0.0).count();

    let laplacian = Matrix::from_fn(n, n, |i, j| {
        let a = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - a
        } else {
            -a
        }
    });
    let eig = sym_eig(&laplacian)?;

    let mut embedding = Matrix::from_fn(n, k, |i, c| if degree[i] > 0.0 { eig.vectors[(i, c)] } else { 0.0 });
    for i in 0..n {
        let row = embedding.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let km = kmeans_rows(&embedding, k, seed)?;
    Ok(SpectralOutcome {
        labels: km.labels,
        isolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn two_blocks_of_ones() {
        let truth = [0, 0, 0, 1, 1, 1, 1];
        let w = Matrix::from_fn(7, 7, |i, j| if i != j && truth[i] == truth[j] { 1.0 } else { 0.0 });
        let out = spectral_clustering(&w, 2, 0).unwrap();
        assert!(same_partition(&out.labels, &truth));
        assert_eq!(out.isolated, 0);
    }

    #[test]
    fn zero_affinity_is_tolerated() {
        let out = spectral_clustering(&Matrix::zeros(5, 5), 2, 0).unwrap();
        assert_eq!(out.isolated, 5);
        assert!(out.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(
            spectral_clustering(&Matrix::zeros(3, 3), 4, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    // Normalized-cut value of a labelling, used as the brute-force objective.
    fn ncut(w: &Matrix, labels: &[usize], k: usize) -> f64 {
        let n = w.rows();
        let mut total = 0.0;
        for c in 0..k {
            let vol: f64 = (0..n)
                .filter(|&i| labels[i] == c)
                .map(|i| w.row(i).iter().sum::<f64>())
                .sum();
            let cut: f64 = (0..n)
                .filter(|&i| labels[i] == c)
                .flat_map(|i| (0..n).filter(move |&j| labels[j] != c).map(move |j| (i, j)))
                .map(|(i, j)| w[(i, j)])
                .sum();
            if vol == 0.0 {
                return f64::INFINITY;
            }
            total += cut / vol;
        }
        total
    }

    #[test]
    fn planted_partition_with_noise_edges() {
        let mut rng = Rng::new(21);
        let n = 12;
        let truth: Vec<usize> = (0..n).map(|i| i / 4).collect();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = if truth[i] == truth[j] {
                    0.5 + 0.5 * rng.uniform()
                } else if rng.bernoulli(0.05) {
                    0.2 * rng.uniform()
                } else {
                    0.0
                };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        // Brute force: best normalized cut over all 3-labelings with node 0 fixed.
        let mut labels = vec![0usize; n];
        let mut best = (f64::INFINITY, labels.clone());
        'outer: loop {
            let v = ncut(&w, &labels, 3);
            if v < best.0 {
                best = (v, labels.clone());
            }
            let mut pos = 1;
            loop {
                if pos == n {
                    break 'outer;
                }
                labels[pos] += 1;
                if labels[pos] < 3 {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
        }
        assert!(
            same_partition(&best.1, &truth),
            "oracle disagrees with planted partition"
        );
        let out = spectral_clustering(&w, 3, 2).unwrap();
        assert!(same_partition(&out.labels, &truth));
    }
}
