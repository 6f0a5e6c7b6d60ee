//! Boundary F-measure between rasterized contours.
//!
//! Curves are drawn into integer pixel sets and the two sets are matched
//! one-to-one, pairing pixels no farther apart than a tolerance. Precision
//! and recall are the matched fractions of candidate and truth pixels.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::curve::PlanarCurve;
use crate::error::{Error, Result};

pub type Pixel = (i64, i64);

/// Above this many pixels on either side matching falls back to a greedy
/// nearest-pair pass.
pub const EXACT_MATCH_LIMIT: usize = 4096;

/// Default pairing tolerance in pixels.
pub const DEFAULT_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMeasure {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub matched: usize,
    pub candidate_pixels: usize,
    pub truth_pixels: usize,
    /// False when the greedy fallback was used.
    pub exact: bool,
}

/// Pixels visited by the polyline (closing segment included for closed
/// curves), sorted and de-duplicated.
pub fn rasterize(curve: &PlanarCurve) -> Vec<Pixel> {
    let pts = curve.points();
    let mut set = BTreeSet::new();
    let segs = if curve.is_closed() {
        pts.len()
    } else {
        pts.len() - 1
    };
    set.insert((pts[0].x.round() as i64, pts[0].y.round() as i64));
    for i in 0..segs {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
        for t in 0..=steps {
            let p = a.lerp(b, t as f64 / steps as f64);
            set.insert((p.x.round() as i64, p.y.round() as i64));
        }
    }
    set.into_iter().collect()
}

fn neighbours(candidate: &[Pixel], truth: &[Pixel], tol: f64) -> Vec<Vec<usize>> {
    let lookup: HashMap<Pixel, usize> = truth.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let r = tol.floor() as i64;
    let tol2 = tol * tol;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= tol2 {
                offsets.push((dx, dy));
            }
        }
    }
    candidate
        .iter()
        .map(|&(x, y)| {
            offsets
                .iter()
                .filter_map(|&(dx, dy)| lookup.get(&(x + dx, y + dy)).copied())
                .collect()
        })
        .collect()
}

/// Maximum-cardinality bipartite matching (Hopcroft-Karp).
fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> usize {
    const NIL: usize = usize::MAX;
    let n_left = adj.len();
    let mut pair_l = vec![NIL; n_left];
    let mut pair_r = vec![NIL; n_right];
    let mut dist = vec![0usize; n_left];
    let mut matched = 0;

    loop {
        // BFS layering from free left vertices.
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if pair_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = pair_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        // Iterative DFS along the layered graph.
        let mut it = vec![0usize; n_left];
        for root in 0..n_left {
            if pair_l[root] != NIL {
                continue;
            }
            let mut stack = vec![root];
            let mut augmented = false;
            while let Some(&u) = stack.last() {
                if it[u] == adj[u].len() {
                    dist[u] = usize::MAX;
                    stack.pop();
                    continue;
                }
                let v = adj[u][it[u]];
                it[u] += 1;
                let w = pair_r[v];
                if w == NIL {
                    // Flip the path recorded on the stack.
                    let mut v = v;
                    while let Some(u) = stack.pop() {
                        let prev = pair_l[u];
                        pair_l[u] = v;
                        pair_r[v] = u;
                        v = prev;
                    }
                    augmented = true;
                    break;
                } else if dist[w] == dist[u] + 1 {
                    stack.push(w);
                }
            }
            if augmented {
                matched += 1;
            }
        }
    }
    matched
}

fn greedy_match(candidate: &[Pixel], truth: &[Pixel], adj: &[Vec<usize>]) -> usize {
    let mut used = vec![false; truth.len()];
    let mut matched = 0;
    for (i, &(x, y)) in candidate.iter().enumerate() {
        let best = adj[i].iter().filter(|&&j| !used[j]).min_by_key(|&&j| {
            let (tx, ty) = truth[j];
            ((tx - x).pow(2) + (ty - y).pow(2), j)
        });
        if let Some(&j) = best {
            used[j] = true;
            matched += 1;
        }
    }
    matched
}

/// F-measure of pixel sets directly.
pub fn pixel_f_measure(candidate: &[Pixel], truth: &[Pixel], tol: f64) -> Result<FMeasure> {
    if truth.is_empty() {
        return Err(Error::InsufficientData(
            "empty ground-truth pixel set".into(),
        ));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be >= 0, got {tol}"
        )));
    }
    let adj = neighbours(candidate, truth, tol);
    let exact = candidate.len() <= EXACT_MATCH_LIMIT && truth.len() <= EXACT_MATCH_LIMIT;
    let matched = if exact {
        hopcroft_karp(&adj, truth.len())
    } else {
        greedy_match(candidate, truth, &adj)
    };
    let precision = if candidate.is_empty() {
        0.0
    } else {
        matched as f64 / candidate.len() as f64
    };
    let recall = matched as f64 / truth.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FMeasure {
        precision,
        recall,
        f,
        matched,
        candidate_pixels: candidate.len(),
        truth_pixels: truth.len(),
        exact,
    })
}

pub fn contour_f_measure(
    candidate: &PlanarCurve,
    truth: &PlanarCurve,
    tol: f64,
) -> Result<FMeasure> {
    pixel_f_measure(&rasterize(candidate), &rasterize(truth), tol)
}
