//! Dense linear algebra and seeded randomness shared by every other module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{qr_orthonormal, soft_threshold, sym_eig, sym_eig_ascending, SymEigen};
pub use matrix::{dot, norm, Matrix};
pub use rng::{fnv1a, mix_seed, splitmix64, stream, Rng};

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn soft_threshold_is_odd_and_lipschitz(x in -10.0f64..10.0, y in -10.0f64..10.0, lam in 0.0f64..5.0) {
            prop_assert_eq!(soft_threshold(-x, lam), -soft_threshold(x, lam));
            prop_assert!((soft_threshold(x, lam) - soft_threshold(y, lam)).abs() <= (x - y).abs() + 1e-15);
        }

        #[test]
        fn qr_orthonormal_for_full_rank(seed in any::<u64>(), d in 2usize..20, r_frac in 0.1f64..1.0) {
            let r = ((d as f64 * r_frac).ceil() as usize).clamp(1, d);
            let mut rng = Rng::new(seed);
            let g = Matrix::from_fn(d, r, |_, _| rng.normal());
            let q = qr_orthonormal(&g).unwrap();
            prop_assert!(q.t_matmul(&q).max_abs_diff(&Matrix::identity(r)) < 1e-10);
            prop_assert!(q.matmul(&q.t_matmul(&g)).max_abs_diff(&g) < 1e-8);
        }

        #[test]
        fn sym_eig_residuals(seed in any::<u64>(), n in 1usize..16) {
            let mut rng = Rng::new(seed);
            let g = Matrix::from_fn(n, n, |_, _| rng.normal());
            let s = Matrix::from_fn(n, n, |i, j| g[(i, j)] + g[(j, i)]);
            let eig = sym_eig(&s).unwrap();
            prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            for c in 0..n {
                let v = eig.vectors.col(c);
                let sv = s.matvec(&v);
                let res = sv.iter().zip(&v).map(|(a, b)| (a - eig.values[c] * b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(res < 1e-8);
            }
        }
    }
}
