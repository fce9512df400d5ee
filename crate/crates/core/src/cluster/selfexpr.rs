use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{soft_threshold, sym_eig, Matrix};

use super::SscConfig;

/// Self-expression coefficients; column `i` represents sample `i` in terms of
/// the others, so `C[i][i] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfExpressionMatrix {
    c: Matrix,
    /// Samples whose column was identically zero.
    pub zero_columns: usize,
}

impl SelfExpressionMatrix {
    pub fn new(c: Matrix) -> Result<Self> {
        if c.rows() != c.cols() {
            return Err(Error::DimensionMismatch("coefficient matrix must be square".into()));
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("self-expression coefficients"));
        }
        if (0..c.rows()).any(|i| c[(i, i)] != 0.0) {
            return Err(Error::InvalidInput("self-expression diagonal must be zero".into()));
        }
        Ok(Self { c, zero_columns: 0 })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.c.rows() == 0
    }
}

/// Per-column lasso problem `min ½‖h_i − H c‖² + λ‖c‖₁, c_i = 0`, written in
/// terms of the Gram matrix `G = HᵀH`.
pub(crate) struct ColumnLasso<'a> {
    gram: &'a Matrix,
    target: usize,
    lambda: f64,
    step: f64,
}

impl ColumnLasso<'_> {
    fn gram_times(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &cj) in c.iter().enumerate() {
            if cj != 0.0 {
                for (o, g) in out.iter_mut().zip(self.gram.row(j)) {
                    *o += cj * g;
                }
            }
        }
    }

    /// Objective value given `Gc` for the same `c`.
    fn objective_with(&self, c: &[f64], gc: &[f64]) -> f64 {
        let i = self.target;
        let hh = self.gram[(i, i)];
        let b = self.gram.row(i);
        let quad: f64 = c.iter().zip(gc).map(|(x, y)| x * y).sum();
        let lin: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
        let l1: f64 = c.iter().map(|x| x.abs()).sum();
        0.5 * (hh - 2.0 * lin + quad) + self.lambda * l1
    }

    fn prox_grad(&self, y: &[f64], gy: &[f64], out: &mut [f64]) {
        let b = self.gram.row(self.target);
        let thresh = self.lambda * self.step;
        for j in 0..y.len() {
            let g = gy[j] - b[j];
            out[j] = soft_threshold(y[j] - self.step * g, thresh);
        }
        out[self.target] = 0.0;
    }

    /// Monotone (accelerated or plain) proximal gradient from `c = 0`.
    /// `on_iter` receives the objective of the accepted iterate.
    pub(crate) fn solve(&self, max_iter: usize, tol: f64, accelerate: bool, mut on_iter: impl FnMut(f64)) -> Vec<f64> {
        let n = self.gram.rows();
        let mut x = vec![0.0; n];
        let mut gx = vec![0.0; n];
        let mut fx = self.objective_with(&x, &gx);
        on_iter(fx);
        let mut y = x.clone();
        let mut gy = gx.clone();
        let mut z = vec![0.0; n];
        let mut gz = vec![0.0; n];
        let mut t = 1.0f64;

        for _ in 0..max_iter {
            self.prox_grad(&y, &gy, &mut z);
            self.gram_times(&z, &mut gz);
            let fz = self.objective_with(&z, &gz);

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let accept = fz <= fx;
            let diff: f64 = z.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = z.iter().map(|a| a * a).sum::<f64>().sqrt();

            if accelerate {
                // y = x⁺ + (t/t')(z − x⁺) + ((t − 1)/t')(x⁺ − x)
                let (a, bcoef) = (t / t_next, (t - 1.0) / t_next);
                for j in 0..n {
                    let x_new = if accept { z[j] } else { x[j] };
                    y[j] = x_new + a * (z[j] - x_new) + bcoef * (x_new - x[j]);
                }
                y[self.target] = 0.0;
                self.gram_times(&y, &mut gy);
            }
            if accept {
                std::mem::swap(&mut x, &mut z);
                std::mem::swap(&mut gx, &mut gz);
                fx = fz;
            }
            if !accelerate {
                y.copy_from_slice(&x);
                gy.copy_from_slice(&gx);
            }
            t = if accelerate { t_next } else { 1.0 };
            on_iter(fx);
            if accept && diff <= tol * scale.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        x
    }
}

/// Largest eigenvalue of `HᵀH`, computed on the smaller of `HHᵀ` and `HᵀH`.
fn squared_spectral_norm(h: &Matrix, gram: &Matrix) -> Result<f64> {
    let small = if h.rows() < h.cols() {
        h.matmul_t(h)
    } else {
        gram.clone()
    };
    let eig = sym_eig(&small)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0))
}

/// Sparse self-expression of the columns of `h` (p×n).
///
/// Column `i` solves `min ½‖h_i − H c‖² + λ_i‖c‖₁` with `c_i = 0` and
/// `λ_i = lambda_rel · max_{j≠i} |h_jᵀ h_i|`, by proximal gradient with step
/// `1 / ‖H‖₂²`. Iteration stops when the relative change of the iterate drops
/// below `tol` or after `max_iter` steps. Zero columns get zero coefficients.
pub fn self_expression(h: &Matrix, cfg: &SscConfig) -> Result<SelfExpressionMatrix> {
    cfg.validate_solver()?;
    let n = h.cols();
    if n < 2 {
        return Err(Error::InvalidInput("self-expression needs at least two samples".into()));
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("embedding"));
    }
    let gram = h.t_matmul(h);
    let lip = squared_spectral_norm(h, &gram)? * (1.0 + 1e-12);
    if lip == 0.0 {
        return Err(Error::InvalidInput("all samples are zero".into()));
    }
    let step = 1.0 / lip;

    let columns: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if gram[(i, i)] == 0.0 {
                return None;
            }
            let lambda_max = (0..n)
                .filter(|&j| j != i)
                .map(|j| gram[(j, i)].abs())
                .fold(0.0, f64::max);
            let problem = ColumnLasso {
                gram: &gram,
                target: i,
                lambda: cfg.lambda_rel * lambda_max,
                step,
            };
            Some(problem.solve(cfg.max_iter, cfg.tol, cfg.accelerate, |_| {}))
        })
        .collect();

    let mut c = Matrix::zeros(n, n);
    let mut zero_columns = 0;
    for (i, col) in columns.into_iter().enumerate() {
        match col {
            Some(v) => c.set_col(i, &v),
            None => zero_columns += 1,
        }
    }
    let mut out = SelfExpressionMatrix::new(c)?;
    out.zero_columns = zero_columns;
    Ok(out)
}

/// Symmetric affinity `W = |C| + |C|ᵀ`.
pub fn build_affinity(c: &SelfExpressionMatrix) -> Matrix {
    let c = c.matrix();
    let n = c.rows();
    Matrix::from_fn(n, n, |i, j| c[(i, j)].abs() + c[(j, i)].abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn cfg(lambda_rel: f64) -> SscConfig {
        SscConfig {
            lambda_rel,
            ..SscConfig::new(2)
        }
    }

    #[test]
    fn orthogonal_columns_give_zero() {
        let h = Matrix::identity(2);
        for rel in [0.1, 0.5, 0.9] {
            let c = self_expression(&h, &cfg(rel)).unwrap();
            assert!(c.matrix().as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn duplicate_pair_closed_form() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = Matrix::from_rows(&[vec![s, s], vec![s, s]]).unwrap();
        let c = self_expression(&h, &cfg(0.5)).unwrap();
        assert!((c.matrix()[(0, 1)] - 0.5).abs() < 1e-4);
        assert!((c.matrix()[(1, 0)] - 0.5).abs() < 1e-4);
        assert_eq!(c.matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn zero_column_is_counted() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 0.0, 0.5]]).unwrap();
        let c = self_expression(&h, &cfg(0.2)).unwrap();
        assert_eq!(c.zero_columns, 1);
        assert!(c.matrix().col(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_is_monotone() {
        let mut rng = Rng::new(8);
        let h = Matrix::from_fn(6, 25, |_, _| rng.normal());
        let gram = h.t_matmul(&h);
        let lip = squared_spectral_norm(&h, &gram).unwrap();
        for accelerate in [false, true] {
            for target in [0, 7, 24] {
                let lambda_max = (0..25)
                    .filter(|&j| j != target)
                    .map(|j| gram[(j, target)].abs())
                    .fold(0.0, f64::max);
                let problem = ColumnLasso {
                    gram: &gram,
                    target,
                    lambda: 0.1 * lambda_max,
                    step: 1.0 / lip,
                };
                let mut trace = Vec::new();
                let sol = problem.solve(20_000, 1e-12, accelerate, |f| trace.push(f));
                assert!(trace.windows(2).all(|w| w[1] <= w[0]), "accelerate={accelerate}");
                assert_eq!(sol[target], 0.0);
                // Optimality: subgradient condition within tolerance.
                let mut gc = vec![0.0; 25];
                problem.gram_times(&sol, &mut gc);
                for j in (0..25).filter(|&j| j != target) {
                    let g = gc[j] - gram[(target, j)];
                    if sol[j] != 0.0 {
                        assert!((g + problem.lambda * sol[j].signum()).abs() < 1e-5);
                    } else {
                        assert!(g.abs() <= problem.lambda + 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn affinity_is_symmetric_nonnegative() {
        let c = Matrix::from_rows(&[vec![0.0, -0.5, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let w = build_affinity(&SelfExpressionMatrix::new(c).unwrap());
        assert_eq!(w[(0, 1)], 0.5);
        assert_eq!(w[(1, 0)], 0.5);
        assert_eq!(w, w.transpose());

        let zero = build_affinity(&SelfExpressionMatrix::new(Matrix::zeros(3, 3)).unwrap());
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));

        let mut rng = Rng::new(3);
        let c = Matrix::from_fn(7, 7, |i, j| if i == j { 0.0 } else { rng.normal() });
        let w = build_affinity(&SelfExpressionMatrix::new(c).unwrap());
        assert_eq!(w, w.transpose());
        assert!(w.as_slice().iter().all(|&v| v >= 0.0));
        assert!((0..7).all(|i| w[(i, i)] == 0.0));
    }
}
