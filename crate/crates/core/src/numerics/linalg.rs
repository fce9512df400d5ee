use crate::error::{Error, Result};

use super::Matrix;

/// Pivot magnitude below which a Householder QR is declared rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Largest asymmetry accepted by the symmetric eigensolver.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Orthonormal basis for the column span of `g` (d×r, d ≥ r) by Householder QR.
///
/// Columns are sign-fixed so that the implicit triangular factor has a
/// positive diagonal, which makes the result a deterministic function of `g`.
pub fn qr_orthonormal(g: &Matrix) -> Result<Matrix> {
    let (d, r) = g.shape();
    if r == 0 || d < r {
        return Err(Error::InvalidInput(format!(
            "qr_orthonormal needs d >= r >= 1, got {d}x{r}"
        )));
    }
    let mut a = g.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut diag = vec![0.0; r];

    for j in 0..r {
        let x: Vec<f64> = (j..d).map(|i| a[(i, j)]).collect();
        let norm_x = super::norm(&x);
        let alpha = if x[0] > 0.0 { -norm_x } else { norm_x };
        let mut v = x;
        v[0] -= alpha;
        let norm_v = super::norm(&v);
        if norm_v > 0.0 {
            v.iter_mut().for_each(|e| *e /= norm_v);
            // A[j.., j..] -= 2 v (vᵀ A[j.., j..])
            for c in j..r {
                let s: f64 = (j..d).map(|i| v[i - j] * a[(i, c)]).sum();
                for i in j..d {
                    a[(i, c)] -= 2.0 * s * v[i - j];
                }
            }
        }
        diag[j] = a[(j, j)];
        if diag[j].abs() < RANK_TOL {
            return Err(Error::RankDeficient {
                index: j,
                value: diag[j].abs(),
            });
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{r-1} applied to the first r columns of the identity.
    let mut q = Matrix::zeros(d, r);
    for j in 0..r {
        q[(j, j)] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        for c in 0..r {
            let s: f64 = (j..d).map(|i| v[i - j] * q[(i, c)]).sum();
            if s != 0.0 {
                for i in j..d {
                    q[(i, c)] -= 2.0 * s * v[i - j];
                }
            }
        }
    }
    for (j, &rjj) in diag.iter().enumerate() {
        if rjj < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Full eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unit eigenvectors stored as columns, in the order of `values`.
    pub vectors: Matrix,
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            s.cols()
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Householder tridiagonalization followed by implicit QL iteration.
pub fn sym_eig(s: &Matrix) -> Result<SymEigen> {
    check_symmetric(s)?;
    let n = s.rows();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    // Symmetrize exactly so tiny asymmetries do not bias the reduction.
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (s[(i, j)] + s[(j, i)])).collect())
        .collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r][order[c]]);
    Ok(SymEigen { values, vectors })
}

/// The `k` eigenvectors of `s` with smallest eigenvalues, as columns of an n×k matrix.
pub fn sym_eig_ascending(s: &Matrix, k: usize) -> Result<Matrix> {
    let n = s.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "requested {k} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let eig = sym_eig(s)?;
    Ok(Matrix::from_fn(n, k, |r, c| eig.vectors[(r, c)]))
}

// Reduction to tridiagonal form (Householder), accumulating the transform in `v`.
// On exit `d` holds the diagonal and `e[1..]` the subdiagonal.
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1]);

    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d[..i].iter_mut() {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);

            for j in 0..i {
                let f = d[j];
                v[j][i] = f;
                let mut g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let g: f64 = (0..=i).map(|k| v[k][i + 1] * v[k][j]).sum();
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL with Wilkinson-style shifts on the tridiagonal (d, e).
fn tridiagonal_ql(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    const MAX_SWEEPS: usize = 64;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::InvalidInput("symmetric eigensolver failed to converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d[(l + 2)..].iter_mut() {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Proximal operator of `lam * |x|`.
#[inline]
pub fn soft_threshold(x: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    x.signum() * (x.abs() - lam).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    fn gram_error(q: &Matrix) -> f64 {
        q.t_matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn qr_identity_is_fixed_point() {
        let q = qr_orthonormal(&Matrix::identity(3)).unwrap();
        assert!(q.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn qr_single_column_normalizes() {
        let g = Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        let q = qr_orthonormal(&g).unwrap();
        assert!((q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((q[(1, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn qr_tall_gaussian_is_orthonormal() {
        let g = gaussian(128, 10, 11);
        let q = qr_orthonormal(&g).unwrap();
        // Explicit Gram check, entry by entry.
        let mut worst = 0.0f64;
        for a in 0..10 {
            for b in 0..10 {
                let s: f64 = (0..128).map(|i| q[(i, a)] * q[(i, b)]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
        // Span preserved: projecting g onto span(Q) reproduces g.
        let proj = q.matmul(&q.t_matmul(&g));
        assert!(proj.max_abs_diff(&g) < 1e-8);
    }

    #[test]
    fn qr_rank_deficient() {
        let g = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(qr_orthonormal(&g), Err(Error::RankDeficient { index: 1, .. })));
    }

    #[test]
    fn qr_positive_diagonal_convention() {
        let g = gaussian(6, 3, 5);
        let q = qr_orthonormal(&g).unwrap();
        let r = q.t_matmul(&g);
        for j in 0..3 {
            assert!(r[(j, j)] > 0.0);
        }
    }

    #[test]
    fn eig_diagonal() {
        let s = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let v = sym_eig_ascending(&s, 1).unwrap();
        assert!((v[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(v[(1, 0)].abs() < 1e-12 && v[(2, 0)].abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two() {
        let s = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&s).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
        let v0 = eig.vectors.col(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v0[0].abs() - h).abs() < 1e-12);
        assert!((v0[0] + v0[1]).abs() < 1e-12);
    }

    #[test]
    fn eig_random_residuals_and_reconstruction() {
        for seed in 0..5 {
            let g = gaussian(10, 10, seed);
            let s = Matrix::from_fn(10, 10, |i, j| g[(i, j)] + g[(j, i)]);
            let eig = sym_eig(&s).unwrap();
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            for c in 0..10 {
                let v = eig.vectors.col(c);
                let sv = s.matvec(&v);
                let res: f64 = sv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - eig.values[c] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res < 1e-8, "residual {res}");
            }
            assert!(gram_error(&eig.vectors) < 1e-8);
            let lam = Matrix::from_fn(10, 10, |i, j| if i == j { eig.values[i] } else { 0.0 });
            let rebuilt = eig.vectors.matmul(&lam).matmul(&eig.vectors.transpose());
            assert!(rebuilt.max_abs_diff(&s) < 1e-7);
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn eig_degenerate_spectrum() {
        // Two disconnected all-ones blocks: eigenvalue 2 twice, 0 twice.
        let s = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let eig = sym_eig(&s).unwrap();
        let expected = [0.0, 0.0, 2.0, 2.0];
        for (a, b) in eig.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(gram_error(&eig.vectors) < 1e-12);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }
}
