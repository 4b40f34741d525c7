//! One-dimensional score allocators: sequential groups of `c_B`, scaled
//! allocation into a fixed number of blocks, and coordinate-descent cut
//! optimization.
//!
//! All three sort units by score and cut the sorted order into contiguous
//! segments. Runs of identical scores are never split: a boundary that
//! would land inside a run slides past it, and any block left under `c_B`
//! by that slide (or by the tail remainder) is merged into its neighbor.

use crate::blocking::partition::{score_feature_matrix, Partition, PartitionDefinition, ScoreModelRef};
use crate::error::{Error, Result};

fn sorted_order(scores: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&i| scores[i]).collect();
    (order, vals)
}

/// Build the interval partition from block end-positions over the sorted
/// score order. Every boundary must fall between distinct score values.
fn partition_from_bounds(
    scores: &[f64],
    vals: &[f64],
    bounds: &[usize],
    c_b: usize,
    score_model: Option<ScoreModelRef>,
) -> Result<Partition> {
    let cuts: Vec<f64> = bounds[..bounds.len() - 1]
        .iter()
        .map(|&p| 0.5 * (vals[p - 1] + vals[p]))
        .collect();
    let definition = PartitionDefinition::Intervals { cuts, score_model };
    Partition::from_definition(definition, &score_feature_matrix(scores), c_b)
}

/// Arrange units by score and cut consecutive groups of `c_B`, extending a
/// group to absorb any run of identical scores crossing its boundary. A
/// trailing remainder below `c_B` merges into the final block.
pub fn sequential_allocate(scores: &[f64], c_b: usize) -> Result<Partition> {
    sequential_with_model(scores, c_b, None)
}

pub(crate) fn sequential_with_model(
    scores: &[f64],
    c_b: usize,
    score_model: Option<ScoreModelRef>,
) -> Result<Partition> {
    let n = scores.len();
    if c_b == 0 {
        return Err(Error::Internal("c_b must be at least 1".into()));
    }
    if n < c_b {
        return Err(Error::TooFewUnits { need: c_b, have: n });
    }
    let (_, vals) = sorted_order(scores);

    let mut bounds: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + c_b;
        if j >= n {
            j = n;
        } else {
            while j < n && vals[j] == vals[j - 1] {
                j += 1;
            }
        }
        bounds.push(j);
        i = j;
    }
    // merge an undersized trailing block upward
    while bounds.len() > 1 {
        let last = *bounds.last().unwrap() - bounds[bounds.len() - 2];
        if last >= c_b {
            break;
        }
        bounds.remove(bounds.len() - 2);
    }
    partition_from_bounds(scores, &vals, &bounds, c_b, score_model)
}

/// Cut sorted scores into `b` contiguous blocks of sizes ⌊n/b⌋ or ⌈n/b⌉
/// (the first `n mod b` blocks take the extra unit), keeping tie runs whole
/// and merging any block that falls below `c_B`.
pub fn scaled_sequential_allocate(scores: &[f64], b: usize, c_b: usize) -> Result<Partition> {
    scaled_with_model(scores, b, c_b, None)
}

pub(crate) fn scaled_with_model(
    scores: &[f64],
    b: usize,
    c_b: usize,
    score_model: Option<ScoreModelRef>,
) -> Result<Partition> {
    let n = scores.len();
    let max = n / c_b.max(1);
    if b == 0 || b > max {
        return Err(Error::BadBlockCount { b, max });
    }
    let (_, vals) = sorted_order(scores);

    let base = n / b;
    let extra = n % b;
    let mut bounds: Vec<usize> = Vec::new();
    let mut end = 0usize;
    for i in 0..b {
        end += base + usize::from(i < extra);
        let mut j = end.min(n);
        while j < n && vals[j] == vals[j - 1] {
            j += 1; // keep the tie run in the earlier block
        }
        if j >= n {
            bounds.push(n);
            break;
        }
        if bounds.last() != Some(&j) {
            bounds.push(j);
        }
    }
    if *bounds.last().unwrap() != n {
        bounds.push(n);
    }
    // repair: merge undersized blocks into a neighbor until all satisfy c_B
    loop {
        let mut sizes = Vec::with_capacity(bounds.len());
        let mut prev = 0;
        for &p in &bounds {
            sizes.push(p - prev);
            prev = p;
        }
        match sizes.iter().position(|&s| s < c_b) {
            None => break,
            Some(0) => {
                bounds.remove(0); // merge first block into the second
            }
            Some(i) => {
                bounds.remove(i - 1); // merge block i into its predecessor
            }
        }
        if bounds.len() == 1 {
            break;
        }
    }
    partition_from_bounds(scores, &vals, &bounds, c_b, score_model)
}

/// Partition scores into `b` blocks minimizing within-block SSE of
/// `y_target`: start from quantile cuts, then sweep each cut over its
/// admissible positions (respecting `c_B` and tie runs) until a full sweep
/// moves nothing.
pub fn optimize_1d_partition(
    scores: &[f64],
    y_target: &[f64],
    b: usize,
    c_b: usize,
) -> Result<Partition> {
    optimize_1d_with_model(scores, y_target, b, c_b, None)
}

pub(crate) fn optimize_1d_with_model(
    scores: &[f64],
    y_target: &[f64],
    b: usize,
    c_b: usize,
    score_model: Option<ScoreModelRef>,
) -> Result<Partition> {
    let n = scores.len();
    if y_target.len() != n {
        return Err(Error::Internal("y_target length mismatch".into()));
    }
    let max = n / c_b.max(1);
    if b == 0 || b > max {
        return Err(Error::BadBlockCount { b, max });
    }
    let (order, vals) = sorted_order(scores);
    let ys: Vec<f64> = order.iter().map(|&i| y_target[i]).collect();

    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    for i in 0..n {
        p1[i + 1] = p1[i] + ys[i];
        p2[i + 1] = p2[i] + ys[i] * ys[i];
    }
    let sse = |a: usize, bb: usize| -> f64 {
        let len = (bb - a) as f64;
        let s = p1[bb] - p1[a];
        (p2[bb] - p2[a] - s * s / len).max(0.0)
    };

    // positions where a cut may fall: strictly between distinct scores
    let admissible: Vec<usize> = (1..n).filter(|&p| vals[p - 1] < vals[p]).collect();

    // quantile initialization, snapped to the nearest admissible position
    // inside the c_B-feasible window
    let mut cuts: Vec<usize> = Vec::with_capacity(b - 1);
    let mut prev = 0usize;
    for i in 1..b {
        let lo = prev + c_b;
        let hi = n - (b - i) * c_b;
        let target = (i * n + b / 2) / b;
        let best = admissible
            .iter()
            .copied()
            .filter(|&p| p >= lo && p <= hi)
            .min_by_key(|&p| (p.abs_diff(target), p));
        match best {
            Some(p) => {
                cuts.push(p);
                prev = p;
            }
            None => return Err(Error::BadBlockCount { b, max }),
        }
    }

    // coordinate descent over cut positions
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..cuts.len() {
            let left = if i == 0 { 0 } else { cuts[i - 1] };
            let right = if i + 1 == cuts.len() { n } else { cuts[i + 1] };
            let lo = left + c_b;
            let hi = right - c_b;
            let current = cuts[i];
            let mut best = current;
            let mut best_sse = sse(left, current) + sse(current, right);
            for &p in admissible.iter().filter(|&&p| p >= lo && p <= hi) {
                let cand = sse(left, p) + sse(p, right);
                if cand < best_sse - 1e-12 * (1.0 + best_sse.abs()) {
                    best_sse = cand;
                    best = p;
                }
            }
            if best != current {
                cuts[i] = best;
                improved = true;
            }
        }
    }

    let mut bounds = cuts;
    bounds.push(n);
    partition_from_bounds(scores, &vals, &bounds, c_b, score_model)
}
