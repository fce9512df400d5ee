use crate::error::{Error, Result};
use crate::numerics::{stream, Matrix, Rng};

pub const RESTARTS: usize = 10;
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k×m matrix, one centroid per row.
    pub centroids: Matrix,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

/// k-means on the columns of `x` (m×n_points): k-means++ seeding, Lloyd
/// iterations to a fixed point (at most 300), best of 10 restarts.
///
/// Assignment ties go to the lowest centroid index. Duplicate centroids are
/// allowed when there are fewer distinct points than `k`.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let points = x.transpose();
    kmeans_rows(&points, k, seed)
}

/// Same as [`kmeans`] but with one point per row.
pub fn kmeans_rows(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if n < k {
        return Err(Error::config(format!("cannot form {k} clusters from {n} points")));
    }
    let mut rng = Rng::with_stream(seed, stream::KMEANS);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, MAX_LLOYD_ITERS, |_| {});
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first centre uniform, then proportional to squared distance.
pub(crate) fn plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let (n, m) = points.shape();
    let mut centroids = Matrix::zeros(k, m);
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let p = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = sq_dist(p, centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
        inertia += best_d;
    }
    (changed, inertia)
}

/// Lloyd iterations from the given centroids. `on_iter` sees the inertia
/// after every assignment step. Empty clusters keep their previous centroid.
pub(crate) fn lloyd(
    points: &Matrix,
    mut centroids: Matrix,
    max_iter: usize,
    mut on_iter: impl FnMut(f64),
) -> KMeansResult {
    let (n, m) = points.shape();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; n];
    let (_, mut inertia) = assign(points, &centroids, &mut labels);
    on_iter(inertia);
    for _ in 0..max_iter {
        let mut sums = Matrix::zeros(k, m);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let (changed, new_inertia) = assign(points, &centroids, &mut labels);
        inertia = new_inertia;
        on_iter(inertia);
        if !changed {
            break;
        }
    }
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn separated_pairs() {
        let p = points(&[[0.0, 0.0], [10.0, 10.0], [0.1, 0.0], [10.0, 10.1]]);
        let res = kmeans_rows(&p, 2, 1).unwrap();
        assert_eq!(res.labels[0], res.labels[2]);
        assert_eq!(res.labels[1], res.labels[3]);
        assert_ne!(res.labels[0], res.labels[1]);
        // Column layout gives the same answer.
        assert_eq!(kmeans(&p.transpose(), 2, 1).unwrap().labels, res.labels);
    }

    #[test]
    fn identical_points() {
        let p = points(&[[1.0, 2.0]; 6]);
        let res = kmeans_rows(&p, 2, 3).unwrap();
        assert_eq!(res.inertia, 0.0);
        assert!(res.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn too_many_clusters() {
        let p = points(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(kmeans_rows(&p, 3, 0).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = Rng::new(5);
        let p = Matrix::from_fn(60, 3, |_, _| rng.normal());
        let init = plus_plus(&p, 4, &mut rng);
        let mut trace = Vec::new();
        lloyd(&p, init, 300, |v| trace.push(v));
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{trace:?}");
    }

    // Exhaustive search over all labelings of n points into at most k groups.
    fn brute_force_inertia(p: &Matrix, k: usize) -> f64 {
        let n = p.rows();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            let mut cost = 0.0;
            for c in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                let m = p.cols();
                let mut mean = vec![0.0; m];
                for &i in &members {
                    for (a, v) in mean.iter_mut().zip(p.row(i)) {
                        *a += v / members.len() as f64;
                    }
                }
                cost += members.iter().map(|&i| sq_dist(p.row(i), &mean)).sum::<f64>();
            }
            best = best.min(cost);
            // Next labeling in base k; fix label of point 0 to break symmetry.
            let mut pos = 1;
            loop {
                if pos == n {
                    return best;
                }
                labels[pos] += 1;
                if labels[pos] < k {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn matches_exhaustive_optimum_on_blobs() {
        let mut rng = Rng::new(12);
        let centres = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let p = Matrix::from_fn(15, 2, |i, j| centres[i % 3][j] + 0.3 * rng.normal());
        let res = kmeans_rows(&p, 3, 4).unwrap();
        let optimum = brute_force_inertia(&p, 3);
        assert!((res.inertia - optimum).abs() < 1e-9, "{} vs {}", res.inertia, optimum);
        for i in 0..15 {
            assert_eq!(res.labels[i], res.labels[i % 3]);
        }
    }
}
