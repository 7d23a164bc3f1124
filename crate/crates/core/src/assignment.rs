//! Kuhn-Munkres (Hungarian) assignment for rectangular cost matrices.

/// Minimum-cost assignment. `cost` is row-major `rows x cols`; every row is
/// matched when `rows <= cols`, otherwise every column is. Returns, for each
/// row, the matched column.
pub fn min_cost_assignment(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(cost.len(), rows * cols, "cost matrix has wrong size");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<f64> = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| (r, c)))
            .map(|(r, c)| cost[r * cols + c])
            .collect();
        let by_col = min_cost_assignment(&transposed, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    // Shortest augmenting paths with row/column potentials; 1-based
    // internal indexing with column 0 as the virtual root.
    let n = rows;
    let m = cols;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Total cost of an assignment returned by [`min_cost_assignment`].
pub fn assignment_cost(cost: &[f64], cols: usize, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r * cols + c]))
        .sum()
}

#[cfg(test)]
pub(crate) mod brute {
    /// Minimum over all injective maps from the smaller side into the larger.
    pub fn min_cost(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn rec(cost: &[f64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if r == rows {
                *best = best.min(acc);
                return;
            }
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    rec(cost, rows, cols, r + 1, used, acc + cost[r * cols + c], best);
                    used[c] = false;
                }
            }
        }
        if rows > cols {
            let t: Vec<f64> = (0..cols)
                .flat_map(|c| (0..rows).map(move |r| (r, c)))
                .map(|(r, c)| cost[r * cols + c])
                .collect();
            return min_cost(&t, cols, rows);
        }
        let mut best = f64::INFINITY;
        rec(cost, rows, cols, 0, &mut vec![false; cols], 0.0, &mut best);
        if rows == 0 { 0.0 } else { best }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_example() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&cost, 3, 3);
        assert_eq!(a, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(assignment_cost(&cost, 3, &a), 5.0);
    }

    #[test]
    fn rectangular_and_empty() {
        let cost = [1.0, 9.0, 9.0, 9.0, 9.0, 2.0];
        assert_eq!(min_cost_assignment(&cost, 2, 3), vec![Some(0), Some(2)]);
        let t = [1.0, 9.0, 9.0, 9.0, 9.0, 2.0];
        assert_eq!(min_cost_assignment(&t, 3, 2), vec![Some(0), None, Some(1)]);
        assert!(min_cost_assignment(&[], 0, 4).is_empty());
        assert_eq!(min_cost_assignment(&[], 2, 0), vec![None, None]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(rows in 0usize..6, cols in 0usize..6, seed in prop::collection::vec(-10.0f64..10.0, 36)) {
            let cost: Vec<f64> = seed[..rows * cols].to_vec();
            let a = min_cost_assignment(&cost, rows, cols);
            let got = assignment_cost(&cost, cols, &a);
            let expected = brute::min_cost(&cost, rows, cols);
            prop_assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
            let matched = a.iter().filter(|c| c.is_some()).count();
            prop_assert_eq!(matched, rows.min(cols));
        }
    }
}
