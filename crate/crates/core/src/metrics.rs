//! Precision-recall curves and average precision over scored decisions.
//!
//! Both the detection and identification evaluators reduce to a list of
//! `(score, is_positive)` pairs plus the number of positives that could have
//! been retrieved. Operating points are taken at every distinct score, so
//! tied scores enter the curve together and the result does not depend on
//! input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Area under the step curve: `sum_k (R_k - R_{k-1}) P_k`.
    pub average_precision: f64,
}

/// PR curve and AP. `n_positive` is the number of retrievable positives
/// (recall denominator); it may exceed the number of positive entries when
/// some positives were never retrieved.
pub fn pr_curve(scored: &[(f64, bool)], n_positive: usize) -> PrCurve {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scored[order[k]].0;
        while k < order.len() && scored[order[k]].0 == threshold {
            if scored[order[k]].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = if n_positive == 0 {
            0.0
        } else {
            tp as f64 / n_positive as f64
        };
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold,
            precision,
            recall,
        });
    }
    PrCurve {
        points,
        average_precision: ap,
    }
}

pub fn average_precision(scored: &[(f64, bool)], n_positive: usize) -> f64 {
    pr_curve(scored, n_positive).average_precision
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let s = [(0.9, true), (0.8, true), (0.1, false)];
        assert_eq!(average_precision(&s, 2), 1.0);
    }

    #[test]
    fn hand_integrated() {
        // Ranking: +, -, +, -  with 2 positives.
        // P@R=0.5 is 1, P@R=1 is 2/3.
        let s = [(4.0, true), (3.0, false), (2.0, true), (1.0, false)];
        let ap = average_precision(&s, 2);
        assert!((ap - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn ties_enter_together() {
        let s = [(1.0, false), (1.0, true)];
        let c = pr_curve(&s, 1);
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.average_precision, 0.5);
        let swapped = [(1.0, true), (1.0, false)];
        assert_eq!(average_precision(&swapped, 1), 0.5);
    }

    #[test]
    fn unretrieved_positives_cap_recall() {
        let s = [(1.0, true)];
        assert_eq!(average_precision(&s, 4), 0.25);
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[(1.0, false)], 0), 0.0);
    }
}
