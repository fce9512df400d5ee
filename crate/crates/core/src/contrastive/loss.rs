use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};

#[derive(Debug, Clone)]
pub struct NtXent {
    pub loss: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

/// NT-Xent over `N` positive pairs `(z_a[i], z_b[i])`.
///
/// Each of the `2N` projections is an anchor whose positive is its partner
/// and whose softmax runs over the other `2N - 1` projections, using cosine
/// similarity divided by `tau`. The returned loss is the mean over the `2N`
/// anchors; gradients are exact partials w.r.t. every row of `z_a` and `z_b`.
pub fn nt_xent_loss(z_a: &Matrix, z_b: &Matrix, tau: f64) -> Result<NtXent> {
    if z_a.shape() != z_b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "view projections {:?} vs {:?}",
            z_a.shape(),
            z_b.shape()
        )));
    }
    let n = z_a.rows();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    let q = z_a.cols();
    let m = 2 * n;
    let row = |k: usize| if k < n { z_a.row(k) } else { z_b.row(k - n) };

    let mut norms = Vec::with_capacity(m);
    let mut unit = Matrix::zeros(m, q);
    for k in 0..m {
        let z = row(k);
        let nz = norm(z);
        if nz == 0.0 {
            return Err(Error::DegenerateProjection(k));
        }
        norms.push(nz);
        for (u, v) in unit.row_mut(k).iter_mut().zip(z) {
            *u = v / nz;
        }
    }

    let partner = |k: usize| (k + n) % m;
    let inv_tau = 1.0 / tau;
    let sim = unit.matmul_t(&unit);

    // coeff[k][l] = dL/ds_kl, where s_kl = sim_kl / tau and the diagonal is excluded.
    let mut coeff = Matrix::zeros(m, m);
    let mut total = 0.0;
    for k in 0..m {
        let logits: Vec<f64> = (0..m).map(|l| sim[(k, l)] * inv_tau).collect();
        let max = (0..m)
            .filter(|&l| l != k)
            .map(|l| logits[l])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..m).filter(|&l| l != k).map(|l| (logits[l] - max).exp()).sum();
        let log_denom = max + denom.ln();
        let p = partner(k);
        total += log_denom - logits[p];
        for l in (0..m).filter(|&l| l != k) {
            let soft = (logits[l] - log_denom).exp();
            coeff[(k, l)] = (soft - if l == p { 1.0 } else { 0.0 }) / m as f64;
        }
    }
    let loss = total / m as f64;

    // dL/du_k = (1/tau) Σ_l (coeff_kl + coeff_lk) u_l, then project out the radial part.
    let mut grad_a = Matrix::zeros(n, q);
    let mut grad_b = Matrix::zeros(n, q);
    for k in 0..m {
        let mut du = vec![0.0; q];
        for l in (0..m).filter(|&l| l != k) {
            let w = (coeff[(k, l)] + coeff[(l, k)]) * inv_tau;
            if w != 0.0 {
                for (d, u) in du.iter_mut().zip(unit.row(l)) {
                    *d += w * u;
                }
            }
        }
        let uk = unit.row(k);
        let radial = dot(uk, &du);
        let target = if k < n {
            grad_a.row_mut(k)
        } else {
            grad_b.row_mut(k - n)
        };
        for ((t, d), u) in target.iter_mut().zip(&du).zip(uk) {
            *t = (d - radial * u) / norms[k];
        }
    }
    Ok(NtXent { loss, grad_a, grad_b })
}

#[cfg(test)]
pub(crate) mod oracle {
    use crate::numerics::Matrix;

    fn cosine(u: &[f64], v: &[f64]) -> f64 {
        let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        d / (nu * nv)
    }

    /// Direct summation of the two-term per-pair expression, no shared softmax machinery.
    pub fn nt_xent_direct(z_a: &Matrix, z_b: &Matrix, tau: f64) -> f64 {
        let n = z_a.rows();
        let all: Vec<(usize, char, Vec<f64>)> = (0..n)
            .map(|i| (i, 'a', z_a.row(i).to_vec()))
            .chain((0..n).map(|i| (i, 'b', z_b.row(i).to_vec())))
            .collect();
        let mut sum = 0.0;
        for i in 0..n {
            let za = z_a.row(i);
            let zb = z_b.row(i);
            let mut den_a = 0.0;
            let mut den_b = 0.0;
            for (j, s, z) in &all {
                if !(*j == i && *s == 'a') {
                    den_a += (cosine(za, z) / tau).exp();
                }
                if !(*j == i && *s == 'b') {
                    den_b += (cosine(zb, z) / tau).exp();
                }
            }
            let pos_a = (cosine(za, zb) / tau).exp();
            let pos_b = (cosine(zb, za) / tau).exp();
            sum += -(pos_a / den_a).ln() - (pos_b / den_b).ln();
        }
        sum / (2.0 * n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::nt_xent_direct;
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn random(n: usize, q: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(n, q, |_, _| rng.normal())
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let za = Matrix::from_rows(&[vec![1.0, 2.0, -0.5]]).unwrap();
        let zb = Matrix::from_rows(&[vec![-3.0, 0.1, 0.7]]).unwrap();
        let out = nt_xent_loss(&za, &zb, 0.5).unwrap();
        assert!(out.loss.abs() < 1e-12);
        assert!(out.grad_a.as_slice().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn identical_rows_give_log_2n_minus_1() {
        for n in [2usize, 4, 8] {
            let z = Matrix::from_fn(n, 3, |_, j| [0.3, -1.0, 2.0][j]);
            let out = nt_xent_loss(&z, &z, 0.5).unwrap();
            assert!((out.loss - ((2 * n - 1) as f64).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_direct_summation_and_finite_differences() {
        let za = Matrix::from_rows(&[vec![0.5, -0.2], vec![0.1, 0.9]]).unwrap();
        let zb = Matrix::from_rows(&[vec![0.4, 0.3], vec![-0.7, 0.2]]).unwrap();
        let tau = 0.5;
        let out = nt_xent_loss(&za, &zb, tau).unwrap();
        assert!((out.loss - nt_xent_direct(&za, &zb, tau)).abs() < 1e-12);
        let h = 1e-6;
        for (which, grad) in [(0, &out.grad_a), (1, &out.grad_b)] {
            for idx in 0..4 {
                let mut up = [za.clone(), zb.clone()];
                let mut down = [za.clone(), zb.clone()];
                up[which].as_mut_slice()[idx] += h;
                down[which].as_mut_slice()[idx] -= h;
                let fd = (nt_xent_direct(&up[0], &up[1], tau) - nt_xent_direct(&down[0], &down[1], tau)) / (2.0 * h);
                assert!((fd - grad.as_slice()[idx]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_row_is_an_error() {
        let za = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let zb = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            nt_xent_loss(&za, &zb, 0.5),
            Err(Error::DegenerateProjection(0))
        ));
    }

    #[test]
    fn aligned_positives_beat_uniform() {
        // Each positive pair is identical and pairs are mutually orthogonal.
        let za = Matrix::identity(3);
        let out = nt_xent_loss(&za, &za, 0.5).unwrap();
        assert!(out.loss < (5.0f64).ln());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invariant_to_row_rescaling(seed in any::<u64>(), n in 1usize..5, q in 1usize..8, c in 0.01f64..100.0, row in 0usize..8) {
            let mut rng = Rng::new(seed);
            let za = random(n, q, &mut rng);
            let zb = random(n, q, &mut rng);
            let base = nt_xent_loss(&za, &zb, 0.5).unwrap().loss;
            let mut scaled = za.clone();
            let r = row % n;
            scaled.row_mut(r).iter_mut().for_each(|v| *v *= c);
            let after = nt_xent_loss(&scaled, &zb, 0.5).unwrap().loss;
            prop_assert!((base - after).abs() < 1e-9);
        }

        #[test]
        fn agrees_with_direct_summation(seed in any::<u64>(), n in 1usize..5, q in 1usize..8, tau in 0.1f64..2.0) {
            let mut rng = Rng::new(seed);
            let za = random(n, q, &mut rng);
            let zb = random(n, q, &mut rng);
            let fast = nt_xent_loss(&za, &zb, tau).unwrap().loss;
            prop_assert!((fast - nt_xent_direct(&za, &zb, tau)).abs() < 1e-10);
        }

        #[test]
        fn positives_most_similar_implies_below_uniform(seed in any::<u64>(), n in 2usize..5) {
            // Pairs near distinct one-hot directions: the positive is strictly the most similar.
            let mut rng = Rng::new(seed);
            let q = n + 1;
            let za = Matrix::from_fn(n, q, |i, j| if i == j { 1.0 } else { 0.05 * rng.normal() });
            let zb = Matrix::from_fn(n, q, |i, j| if i == j { 1.0 } else { 0.05 * rng.normal() });
            let loss = nt_xent_loss(&za, &zb, 0.5).unwrap().loss;
            prop_assert!(loss < ((2 * n - 1) as f64).ln());
        }
    }
}
