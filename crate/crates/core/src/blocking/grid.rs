//! Grid partitions: per-variable quantile bins with bin counts roughly
//! proportional to importance weights, plus the uniform grid used by the
//! zero-pre-period fallback.

use crate::blocking::partition::{GridProjection, Partition, PartitionDefinition};
use crate::cv::FoldPlan;
use crate::dataset::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};

#[inline]
fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|e| *e <= v)
}

fn route_rows(data: &Matrix, edges: &[Vec<f64>]) -> Vec<usize> {
    (0..data.n_rows())
        .map(|i| {
            let mut cell = 0usize;
            for (j, e) in edges.iter().enumerate() {
                cell = cell * (e.len() + 1) + bin_of(e, data.get(i, j));
            }
            cell
        })
        .collect()
}

/// Inner quantile edges for one variable: cuts at positions `round(i·n/bins)`
/// in the sorted order, placed at midpoints between distinct neighbors. An
/// edge that lands inside a tie run slides to the nearest distinct gap;
/// duplicate edges collapse, so the effective bin count may be smaller.
fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut edges: Vec<f64> = Vec::new();
    for i in 1..bins {
        let target = ((i * n + bins / 2) / bins).clamp(1, n - 1);
        let mut pos = None;
        for offset in 0..n {
            let lo = target.saturating_sub(offset).max(1);
            let hi = (target + offset).min(n - 1);
            if sorted[lo - 1] < sorted[lo] {
                pos = Some(lo);
                break;
            }
            if sorted[hi - 1] < sorted[hi] {
                pos = Some(hi);
                break;
            }
        }
        if let Some(p) = pos {
            edges.push(0.5 * (sorted[p - 1] + sorted[p]));
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    edges
}

/// Choose per-variable bin counts maximizing log-scale proportionality to
/// the weights subject to `Π bins ≤ budget`. Zero-weight variables get one
/// bin; ties in deviation prefer the finer grid.
pub fn allocate_bins(weights: &[f64], budget: usize) -> Vec<usize> {
    let m = weights.len();
    let mut best: Option<(f64, usize, Vec<usize>)> = None; // (deviation, total, bins)
    let mut current = vec![1usize; m];

    fn recurse(
        weights: &[f64],
        budget: usize,
        j: usize,
        product: usize,
        current: &mut Vec<usize>,
        best: &mut Option<(f64, usize, Vec<usize>)>,
    ) {
        if j == weights.len() {
            let logs: Vec<f64> = weights
                .iter()
                .zip(current.iter())
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, b)| (*b as f64).ln() - w.ln())
                .collect();
            let dev = if logs.is_empty() {
                0.0
            } else {
                let mean = logs.iter().sum::<f64>() / logs.len() as f64;
                logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>()
            };
            let better = match best {
                None => true,
                Some((bd, bp, _)) => {
                    dev < *bd - 1e-12 || ((dev - *bd).abs() <= 1e-12 && product > *bp)
                }
            };
            if better {
                *best = Some((dev, product, current.clone()));
            }
            return;
        }
        if weights[j] == 0.0 {
            current[j] = 1;
            recurse(weights, budget, j + 1, product, current, best);
            return;
        }
        let mut b = 1usize;
        while product * b <= budget {
            current[j] = b;
            recurse(weights, budget, j + 1, product * b, current, best);
            b += 1;
        }
        current[j] = 1;
    }

    recurse(weights, budget.max(1), 0, 1, &mut current, &mut best);
    best.map(|(_, _, bins)| bins).unwrap_or(vec![1; m])
}

/// Union-find based merge of undersized cells: the smallest block below
/// `c_b` merges with a neighbor along the least important variable
/// (preferring the lower-index bin) until every block reaches `c_b`.
fn merge_cells(
    dims: &[usize],
    counts: &[usize],
    weights: &[f64],
    c_b: usize,
) -> Vec<usize> {
    let total = counts.len();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    // axis priority: ascending weight, ties to the lower index
    let mut axes: Vec<usize> = (0..dims.len()).collect();
    axes.sort_by(|&a, &b| {
        weights[a]
            .partial_cmp(&weights[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let strides = {
        let mut s = vec![1usize; dims.len()];
        for j in (0..dims.len().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * dims[j + 1];
        }
        s
    };
    let unflatten = |cell: usize| -> Vec<usize> {
        let mut idx = Vec::with_capacity(dims.len());
        let mut rest = cell;
        for &s in &strides {
            idx.push(rest / s);
            rest %= s;
        }
        idx
    };

    loop {
        let mut root_count = std::collections::BTreeMap::<usize, usize>::new();
        for cell in 0..total {
            let r = find(&mut parent, cell);
            *root_count.entry(r).or_insert(0) += counts[cell];
        }
        if root_count.len() <= 1 {
            break;
        }
        let victim = root_count
            .iter()
            .filter(|(_, &c)| c < c_b)
            .min_by_key(|(&r, &c)| (c, r))
            .map(|(&r, _)| r);
        let Some(victim) = victim else { break };

        let mut merged = false;
        'axis: for &axis in &axes {
            // member cells of the victim block, ascending
            for cell in 0..total {
                if find(&mut parent, cell) != victim {
                    continue;
                }
                let idx = unflatten(cell);
                for dir in [-1isize, 1] {
                    let bi = idx[axis] as isize + dir;
                    if bi < 0 || bi as usize >= dims[axis] {
                        continue;
                    }
                    let neighbor = cell.wrapping_add_signed(dir * strides[axis] as isize);
                    let nroot = find(&mut parent, neighbor);
                    if nroot != victim {
                        let target = nroot.min(victim);
                        let other = nroot.max(victim);
                        parent[other] = target;
                        merged = true;
                        break 'axis;
                    }
                }
            }
        }
        if !merged {
            break;
        }
    }

    // dense relabel by first occurrence
    let mut label = std::collections::BTreeMap::<usize, usize>::new();
    let mut out = vec![0usize; total];
    for cell in 0..total {
        let r = find(&mut parent, cell);
        let next = label.len();
        out[cell] = *label.entry(r).or_insert(next);
    }
    out
}

fn build_grid_definition(
    data: &Matrix,
    names: &[String],
    bins: &[usize],
    weights: &[f64],
    c_b: usize,
    projection: Option<GridProjection>,
) -> PartitionDefinition {
    let edges: Vec<Vec<f64>> = (0..data.n_cols())
        .map(|j| quantile_edges(&data.column(j), bins[j]))
        .collect();
    let dims: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
    let total: usize = dims.iter().product();
    let mut counts = vec![0usize; total];
    for cell in route_rows(data, &edges) {
        counts[cell] += 1;
    }
    let cell_to_block = merge_cells(&dims, &counts, weights, c_b);
    PartitionDefinition::Grid {
        features: names.to_vec(),
        edges,
        cell_to_block,
        projection,
    }
}

/// Adaptive grid partition: quantile bins per variable, counts proportional
/// to importance weights, overall granularity chosen by cross-validated
/// block-mean prediction of `y_target`, undersized cells merged along the
/// least important variable.
pub fn adaptive_grid(
    fm: &FeatureMatrix,
    weights: &[f64],
    y_target: &[f64],
    budget_grid: &[usize],
    c_b: usize,
    cv_plan: &FoldPlan,
) -> Result<Partition> {
    let m = fm.values.n_cols();
    let n = fm.n_rows();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if weights.len() != m || y_target.len() != n || cv_plan.n() != n {
        return Err(Error::Internal("adaptive_grid input shape mismatch".into()));
    }
    let mut budgets: Vec<usize> = budget_grid.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.is_empty() || budgets[0] == 0 {
        return Err(Error::BudgetTooSmall(format!(
            "budget grid {budget_grid:?} has no usable entry"
        )));
    }

    let mut best: Option<(f64, usize)> = None; // (mspe, budget)
    for &budget in &budgets {
        let bins = allocate_bins(weights, budget);
        let mut pooled = 0.0;
        for fold in 0..cv_plan.k {
            let train = cv_plan.train_indices(fold);
            let test = cv_plan.fold_indices(fold);
            let data_train = fm.values.rows_subset(&train);
            let def = build_grid_definition(&data_train, &fm.names, &bins, weights, c_b, None);
            let y_train: Vec<f64> = train.iter().map(|&i| y_target[i]).collect();
            let blocks_train = def.assign(&FeatureMatrix::new(fm.names.clone(), data_train))?;
            let n_blocks = def.n_blocks();
            let mut sums = vec![0.0; n_blocks];
            let mut cnts = vec![0usize; n_blocks];
            for (pos, &b) in blocks_train.iter().enumerate() {
                sums[b] += y_train[pos];
                cnts[b] += 1;
            }
            let overall = y_train.iter().sum::<f64>() / y_train.len() as f64;
            let test_rows = fm.rows_subset(&test);
            let blocks_test = def.assign(&test_rows)?;
            for (pos, &i) in test.iter().enumerate() {
                let b = blocks_test[pos];
                let pred = if cnts[b] > 0 {
                    sums[b] / cnts[b] as f64
                } else {
                    overall
                };
                let err = y_target[i] - pred;
                pooled += err * err;
            }
        }
        let mspe = pooled / n as f64;
        if best.is_none() || mspe < best.unwrap().0 {
            best = Some((mspe, budget));
        }
    }

    let (_, chosen) = best.unwrap();
    let bins = allocate_bins(weights, chosen);
    let def = build_grid_definition(&fm.values, &fm.names, &bins, weights, c_b, None);
    Partition::from_definition(def, fm, c_b)
}

/// Partition from explicit per-variable cut points, merging undersized
/// cells with equal axis priority.
pub fn merged_grid_partition(
    fm: &FeatureMatrix,
    edges: &[Vec<f64>],
    c_b: usize,
) -> Result<Partition> {
    if edges.len() != fm.values.n_cols() {
        return Err(Error::Internal("one edge list per feature required".into()));
    }
    let mut edges: Vec<Vec<f64>> = edges.to_vec();
    for e in &mut edges {
        e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        e.dedup();
    }
    let dims: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
    let total: usize = dims.iter().product();
    let mut counts = vec![0usize; total];
    for cell in route_rows(&fm.values, &edges) {
        counts[cell] += 1;
    }
    let weights = vec![1.0; dims.len()];
    let cell_to_block = merge_cells(&dims, &counts, &weights, c_b);
    let def = PartitionDefinition::Grid {
        features: fm.names.clone(),
        edges,
        cell_to_block,
        projection: None,
    };
    Partition::from_definition(def, fm, c_b)
}

/// Evenly-weighted quantile grid at the largest per-variable granularity
/// whose smallest cell still holds `c_b` units. `grid_space` holds the
/// values actually binned (component scores for the PCA fallback); `raw_fm`
/// carries the replay columns.
pub fn uniform_quantile_grid(
    raw_fm: &FeatureMatrix,
    grid_space: &Matrix,
    projection: Option<GridProjection>,
    c_b: usize,
) -> Result<Partition> {
    let n = grid_space.n_rows();
    let m = grid_space.n_cols();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    if n < c_b {
        return Err(Error::TooFewUnits { need: c_b, have: n });
    }
    let names: Vec<String> = match &projection {
        Some(_) => (0..m).map(|j| format!("__component{}", j + 1)).collect(),
        None => raw_fm.names.clone(),
    };

    let mut chosen_edges: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut g = 2usize;
    while g <= n / c_b + 1 {
        let edges: Vec<Vec<f64>> = (0..m)
            .map(|j| quantile_edges(&grid_space.column(j), g))
            .collect();
        let dims: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
        let total: usize = dims.iter().product();
        let mut counts = vec![0usize; total];
        for cell in route_rows(grid_space, &edges) {
            counts[cell] += 1;
        }
        if counts.iter().any(|&c| c < c_b) {
            break;
        }
        chosen_edges = edges;
        g += 1;
    }

    let dims: Vec<usize> = chosen_edges.iter().map(|e| e.len() + 1).collect();
    let total: usize = dims.iter().product();
    let def = PartitionDefinition::Grid {
        features: names,
        edges: chosen_edges,
        cell_to_block: (0..total).collect(),
        projection,
    };
    Partition::from_definition(def, raw_fm, c_b)
}
