//! Disjoint masked views used as contrastive positive pairs.

use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_a: Vec<f64>,
    pub mask_a: Vec<f64>,
    pub view_b: Vec<f64>,
    pub mask_b: Vec<f64>,
}

/// Splits the observed entries of `y` into two disjoint views.
///
/// Every entry with `m == 1` goes to view a or view b with probability ½ each;
/// unobserved entries belong to neither view.
pub fn sample_disjoint_views(y: &[f64], m: &[f64], rng: &mut Rng) -> ViewPair {
    sample_disjoint_views_with(y, m, 1.0, rng)
}

/// Like [`sample_disjoint_views`], but each assigned entry is then kept with
/// probability `keep_prob`, so the views may cover strictly less than `m`.
pub fn sample_disjoint_views_with(y: &[f64], m: &[f64], keep_prob: f64, rng: &mut Rng) -> ViewPair {
    assert_eq!(y.len(), m.len());
    let d = y.len();
    let mut pair = ViewPair {
        view_a: vec![0.0; d],
        mask_a: vec![0.0; d],
        view_b: vec![0.0; d],
        mask_b: vec![0.0; d],
    };
    for i in 0..d {
        if m[i] == 0.0 {
            continue;
        }
        let to_a = rng.bernoulli(0.5);
        if keep_prob < 1.0 && !rng.bernoulli(keep_prob) {
            continue;
        }
        let (view, mask) = if to_a {
            (&mut pair.view_a, &mut pair.mask_a)
        } else {
            (&mut pair.view_b, &mut pair.mask_b)
        };
        view[i] = y[i];
        mask[i] = 1.0;
    }
    pair
}
