use crate::measures::QuantileGrid;

/// Euclidean projection onto nondecreasing sequences (pool adjacent violators).
pub fn isotonic_project(y: &[f64]) -> QuantileGrid {
    QuantileGrid::from_sorted(pava(y))
}

pub(crate) fn pava(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in blocks {
        let v = s / c as f64;
        out.extend(std::iter::repeat_n(v, c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Minimize Σ (x_i - y_i)² over a fine lattice of nondecreasing triples.
    fn brute_force_3(y: [f64; 3]) -> [f64; 3] {
        let lattice: Vec<f64> = (0..=160).map(|k| k as f64 * 0.025).collect();
        let mut best = (f64::INFINITY, [0.0; 3]);
        for (a_idx, &a) in lattice.iter().enumerate() {
            for (b_idx, &b) in lattice.iter().enumerate().skip(a_idx) {
                for &c in &lattice[b_idx..] {
                    let d = (a - y[0]).powi(2) + (b - y[1]).powi(2) + (c - y[2]).powi(2);
                    if d < best.0 {
                        best = (d, [a, b, c]);
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn monotone_input_unchanged() {
        assert_eq!(
            isotonic_project(&[1.0, 2.0, 3.0]).values(),
            &[1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn small_examples_match_brute_force() {
        assert_eq!(brute_force_3([2.0, 1.0, 3.0]), [1.5, 1.5, 3.0]);
        assert_eq!(brute_force_3([3.0, 2.0, 1.0]), [2.0, 2.0, 2.0]);
        assert_eq!(
            isotonic_project(&[2.0, 1.0, 3.0]).values(),
            &[1.5, 1.5, 3.0]
        );
        assert_eq!(
            isotonic_project(&[3.0, 2.0, 1.0]).values(),
            &[2.0, 2.0, 2.0]
        );
    }

    proptest! {
        #[test]
        fn projection_is_monotone_idempotent_and_mean_preserving(
            y in prop::collection::vec(-10.0f64..10.0, 1..60)
        ) {
            let p = isotonic_project(&y);
            prop_assert!(p.values().windows(2).all(|w| w[0] <= w[1]));
            let again = isotonic_project(p.values());
            prop_assert_eq!(again.values(), p.values());
            let s0: f64 = y.iter().sum();
            let s1: f64 = p.values().iter().sum();
            prop_assert!((s0 - s1).abs() < 1e-11);
        }

        #[test]
        fn projection_satisfies_obtuse_angle_condition(
            y in prop::collection::vec(-5.0f64..5.0, 2..30),
            z in prop::collection::vec(-5.0f64..5.0, 30)
        ) {
            // <y - P y, m - P y> <= 0 for any monotone m
            let p = isotonic_project(&y);
            let mut m: Vec<f64> = z[..y.len()].to_vec();
            m.sort_by(|a, b| a.total_cmp(b));
            let inner: f64 = y.iter().zip(p.values()).zip(&m)
                .map(|((yi, pi), mi)| (yi - pi) * (mi - pi))
                .sum();
            prop_assert!(inner <= 1e-9);
        }
    }
}
