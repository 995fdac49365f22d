//! Weighted pool-adjacent-violators.

/// Non-decreasing least-squares fit to `values` with positive `weights`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // Stack of pooled blocks: (weighted mean, total weight, row count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(mean, weight, count)) = blocks.last() {
            if mean <= cur.0 {
                break;
            }
            blocks.pop();
            let total = weight + cur.1;
            cur = ((mean * weight + cur.0 * cur.1) / total, total, count + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, count)| std::iter::repeat_n(mean, count))
        .collect()
}

/// Unweighted convenience wrapper.
pub fn pava_unweighted(values: &[f64]) -> Vec<f64> {
    pava(values, &vec![1.0; values.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn already_monotone_is_unchanged() {
        assert_eq!(pava_unweighted(&[0.0, 0.0, 1.0, 1.0]), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn single_violation_is_pooled() {
        assert_eq!(pava_unweighted(&[0.0, 1.0, 0.0, 1.0]), vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn constant_input() {
        assert_eq!(pava_unweighted(&[0.4; 5]), vec![0.4; 5]);
    }

    #[test]
    fn weights_enter_pooled_means() {
        let got = pava(&[1.0, 0.0], &[3.0, 1.0]);
        assert_abs_diff_eq!(got[0], 0.75);
        assert_abs_diff_eq!(got[1], 0.75);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_mean_preserving(v in prop::collection::vec(-3.0f64..3.0, 1..50)) {
            let fit = pava_unweighted(&v);
            prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let m0 = v.iter().sum::<f64>() / v.len() as f64;
            let m1 = fit.iter().sum::<f64>() / fit.len() as f64;
            prop_assert!((m0 - m1).abs() < 1e-10);
        }
    }
}
