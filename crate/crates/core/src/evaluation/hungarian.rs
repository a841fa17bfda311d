//! Minimum-cost assignment.
//!
//! Shortest augmenting paths with row/column potentials, O(n^3) on the
//! zero-padded square matrix. Among all optimal assignments the
//! lexicographically smallest (by column of row 0, then row 1, ...) is
//! returned: optimal assignments are exactly the perfect matchings on edges
//! with zero reduced cost under the final potentials, so rows are fixed
//! greedily to their smallest tight column that still admits a perfect
//! matching of the remaining rows.

use super::EvalError;

/// Returns `min(n, m)` `(row, col)` pairs sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>, EvalError> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    if cost.iter().any(|r| r.len() != m) {
        return Err(EvalError::RaggedMatrix);
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(EvalError::NonFiniteCost);
    }

    let size = n.max(m);
    let a = |i: usize, j: usize| -> f64 {
        if i < n && j < m {
            cost[i][j]
        } else {
            0.0
        }
    };

    // 1-indexed potentials; index 0 is the virtual source column.
    let mut u = vec![0.0f64; size + 1];
    let mut v = vec![0.0f64; size + 1];
    let mut row_of = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let scale = cost
        .iter()
        .flatten()
        .fold(1.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-9 * scale * size as f64;
    let tight: Vec<Vec<bool>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| (a(i, j) - u[i + 1] - v[j + 1]).abs() <= eps)
                .collect()
        })
        .collect();

    let mut col_of = vec![0usize; size];
    let mut row_at = vec![0usize; size];
    for j in 1..=size {
        col_of[row_of[j] - 1] = j - 1;
        row_at[j - 1] = row_of[j] - 1;
    }
    lexicographic_min(&tight, &mut col_of, &mut row_at);

    Ok((0..n)
        .filter(|&i| col_of[i] < m)
        .map(|i| (i, col_of[i]))
        .collect())
}

fn lexicographic_min(tight: &[Vec<bool>], col_of: &mut [usize], row_at: &mut [usize]) {
    let size = tight.len();
    let mut col_fixed = vec![false; size];
    for i in 0..size {
        for j in 0..size {
            if !tight[i][j] || col_fixed[j] {
                continue;
            }
            if col_of[i] == j {
                break;
            }
            // Move row i onto column j; the displaced row must reach i's old
            // column through an alternating path over unfixed rows.
            let displaced = row_at[j];
            let target = col_of[i];
            let mut visited = vec![false; size];
            visited[j] = true;
            let mut path = Vec::new();
            if augment(tight, displaced, target, i, &col_fixed, row_at, &mut visited, &mut path) {
                // path holds (row, new column) pairs from `displaced` onward.
                for &(r, c) in &path {
                    col_of[r] = c;
                    row_at[c] = r;
                }
                col_of[i] = j;
                row_at[j] = i;
                break;
            }
        }
        col_fixed[col_of[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn augment(
    tight: &[Vec<bool>],
    row: usize,
    target: usize,
    skip_row: usize,
    col_fixed: &[bool],
    row_at: &[usize],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..tight.len() {
        if !tight[row][c] || col_fixed[c] || visited[c] {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = row_at[c];
        if next == skip_row {
            continue;
        }
        path.push((row, c));
        if augment(tight, next, target, skip_row, col_fixed, row_at, visited, path) {
            return true;
        }
        path.pop();
    }
    false
}

pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}
