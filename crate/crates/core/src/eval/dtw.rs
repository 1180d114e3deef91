use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;

/// Monotone alignment from converted frames `i` to target frames `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the frame distances along the path.
    pub cost: f64,
}

impl AlignmentPath {
    /// Checks the boundary, monotonicity and step-set conditions.
    pub fn is_valid(&self, converted_len: usize, target_len: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.pairs.first(), self.pairs.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (converted_len - 1, target_len - 1)
            && self.pairs.windows(2).all(|w| {
                let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }
}

pub fn frame_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimum-cost alignment under Euclidean frame distance with steps
/// (1,0), (0,1), (1,1). Ties prefer the diagonal step.
pub fn dtw_align(converted: &MelSpectrogram, target: &MelSpectrogram) -> AlignmentPath {
    let a: Vec<&[f32]> = converted.rows().collect();
    let b: Vec<&[f32]> = target.rows().collect();
    dtw_align_frames(&a, &b)
}

/// [`dtw_align`] over arbitrary equal-width frame sequences. Both must be
/// non-empty.
pub fn dtw_align_frames<F: AsRef<[f32]>>(a: &[F], b: &[F]) -> AlignmentPath {
    assert!(!a.is_empty() && !b.is_empty(), "DTW needs non-empty sequences");
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let d = frame_distance(a[i].as_ref(), b[j].as_ref());
            acc[at(i, j)] = if i == 0 && j == 0 {
                d
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = acc[at(i - 1, j - 1)];
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best + d
            };
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let mut choice = None;
        let mut best = f64::INFINITY;
        // Diagonal is examined first and only displaced by a strictly
        // smaller predecessor.
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i >= di && j >= dj {
                let c = acc[at(i - di, j - dj)];
                if c < best {
                    best = c;
                    choice = Some((i - di, j - dj));
                }
            }
        }
        (i, j) = choice.expect("a predecessor always exists");
        pairs.push((i, j));
    }
    pairs.reverse();
    AlignmentPath {
        pairs,
        cost: acc[at(n - 1, m - 1)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(values: &[f32]) -> Vec<Vec<f32>> {
        values.iter().map(|&v| vec![v, 0.0]).collect()
    }

    /// Minimum over every admissible path, each summed from the start.
    pub(crate) fn brute_force(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
        fn walk(a: &[Vec<f32>], b: &[Vec<f32>], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + frame_distance(&a[i], &b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, best);
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let a = seq(&[1.0, 2.0, 3.0, 4.0]);
        let p = dtw_align_frames(&a, &a);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn duplicated_target_frame_adds_one_horizontal_step() {
        let a = seq(&[1.0, 5.0, 9.0]);
        let b = seq(&[1.0, 5.0, 5.0, 9.0]);
        let p = dtw_align_frames(&a, &b);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
        let horizontal = p.pairs.windows(2).filter(|w| w[1].0 == w[0].0).count();
        assert_eq!(horizontal, 1);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn ties_prefer_the_diagonal() {
        // Every frame is identical, so every path of the same length costs 0;
        // the diagonal-first path is the shortest.
        let a = seq(&[0.0; 3]);
        let b = seq(&[0.0; 3]);
        assert_eq!(dtw_align_frames(&a, &b).pairs.len(), 3);
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_paths_are_valid(
            a in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 2), 1..=6),
            b in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 2), 1..=6),
        ) {
            let p = dtw_align_frames(&a, &b);
            prop_assert_eq!(p.cost, brute_force(&a, &b));
            prop_assert!(p.is_valid(a.len(), b.len()));
            let along: f64 = p.pairs.iter().fold(0.0, |acc, &(i, j)| acc + frame_distance(&a[i], &b[j]));
            prop_assert_eq!(along, p.cost);
        }
    }
}
