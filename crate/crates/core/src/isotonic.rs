//! Pool-adjacent-violators regression.

use alloc::vec::Vec;

/// Least-squares nondecreasing fit of `values` with positive `weights`.
pub fn nondecreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, n)| core::iter::repeat(m).take(n)).collect()
}

/// Least-squares nonincreasing fit.
pub fn nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    nondecreasing(&neg, weights).into_iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn pools_a_single_violation() {
        assert_eq!(nondecreasing(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(nonincreasing(&[4.0, 2.0, 3.0, 1.0], &[1.0; 4]), vec![4.0, 2.5, 2.5, 1.0]);
    }

    #[test]
    fn weights_shift_the_pooled_mean() {
        assert_eq!(nondecreasing(&[3.0, 1.0], &[3.0, 1.0]), vec![2.5, 2.5]);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_mean_preserving(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let w = vec![1.0; v.len()];
            let fit = nondecreasing(&v, &w);
            prop_assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-12));
            let (a, b): (f64, f64) = (v.iter().sum(), fit.iter().sum());
            prop_assert!((a - b).abs() < 1e-9);
            // already monotone input is a fixed point
            let again = nondecreasing(&fit, &w);
            for (x, y) in fit.iter().zip(&again) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
