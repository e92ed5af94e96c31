//! Gated linear assignment (Kuhn-Munkres with row/column potentials).
//!
//! Pairs whose cost exceeds the gate are infeasible. The solver returns a
//! matching of maximum cardinality among feasible pairs and, among those,
//! minimum total cost.

use nalgebra::{DMatrix, Vector3};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub cost: T,
}

impl<T: Scalar> Assignment<T> {
    fn empty(rows: usize, cols: usize) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
            cost: T::zero(),
        }
    }
}

/// Solves a square min-cost assignment; returns `col_of_row`.
fn hungarian_square<T: Scalar>(a: &DMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let inf = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    // 1-indexed potentials; index 0 is the virtual source column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Min-cost assignment over a rectangular cost matrix with a feasibility gate.
///
/// Entries that are not finite or exceed `gate` are never paired.
pub fn solve_gated<T: Scalar>(cost: &DMatrix<T>, gate: T) -> Assignment<T> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Assignment::empty(rows, cols);
    }
    let feasible = |c: T| c.is_finite() && c <= gate;
    let mut total = T::zero();
    let mut any = false;
    for &c in cost.iter() {
        if feasible(c) {
            total += c.abs();
            any = true;
        }
    }
    if !any {
        return Assignment::empty(rows, cols);
    }
    // Any single infeasible pair costs more than every feasible matching.
    let big = (total + T::one()) * T::lit(2.0);
    let n = rows.max(cols);
    let square = DMatrix::from_fn(n, n, |i, j| {
        if i < rows && j < cols && feasible(cost[(i, j)]) {
            cost[(i, j)]
        } else {
            big
        }
    });
    let col_of_row = hungarian_square(&square);

    let mut pairs = Vec::new();
    let mut col_used = vec![false; cols];
    let mut row_used = vec![false; rows];
    let mut sum = T::zero();
    for (i, &j) in col_of_row.iter().enumerate().take(rows) {
        if j < cols && feasible(cost[(i, j)]) {
            pairs.push((i, j));
            row_used[i] = true;
            col_used[j] = true;
            sum += cost[(i, j)];
        }
    }
    Assignment {
        pairs,
        unmatched_rows: (0..rows).filter(|i| !row_used[*i]).collect(),
        unmatched_cols: (0..cols).filter(|j| !col_used[*j]).collect(),
        cost: sum,
    }
}

/// Euclidean centroid-distance cost matrix between two point sets.
pub fn distance_matrix<T: Scalar>(rows: &[Vector3<T>], cols: &[Vector3<T>]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| (rows[i] - cols[j]).norm())
}

#[cfg(test)]
pub(crate) mod oracle {
    use nalgebra::DMatrix;

    /// Exhaustive search over all partial matchings: maximize the number of
    /// gated pairs, then minimize their total cost.
    pub fn brute_force(cost: &DMatrix<f64>, gate: f64) -> (usize, f64) {
        fn rec(
            cost: &DMatrix<f64>,
            gate: f64,
            row: usize,
            used: &mut Vec<bool>,
            count: usize,
            sum: f64,
            best: &mut (usize, f64),
        ) {
            if row == cost.nrows() {
                if count > best.0 || (count == best.0 && sum < best.1) {
                    *best = (count, sum);
                }
                return;
            }
            rec(cost, gate, row + 1, used, count, sum, best);
            for j in 0..cost.ncols() {
                let c = cost[(row, j)];
                if !used[j] && c <= gate {
                    used[j] = true;
                    rec(cost, gate, row + 1, used, count + 1, sum + c, best);
                    used[j] = false;
                }
            }
        }
        let mut best = (0usize, f64::INFINITY);
        rec(cost, gate, 0, &mut vec![false; cost.ncols()], 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    /// Minimum over all n! full permutations of a square matrix.
    pub fn permutation_min(cost: &DMatrix<f64>) -> f64 {
        fn permute(k: usize, perm: &mut Vec<usize>, cost: &DMatrix<f64>, best: &mut f64) {
            if k == perm.len() {
                let s: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
                if s < *best {
                    *best = s;
                }
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, cost, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..cost.nrows()).collect();
        let mut best = f64::INFINITY;
        permute(0, &mut perm, cost, &mut best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::{brute_force, permutation_min};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_inputs() {
        let a = solve_gated(&DMatrix::<f64>::zeros(0, 3), 1.0);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn single_pair_within_gate() {
        let a = solve_gated(&DMatrix::from_element(1, 1, 0.5), 4.0);
        assert_eq!(a.pairs, vec![(0, 0)]);
        let b = solve_gated(&DMatrix::from_element(1, 1, 5.0), 4.0);
        assert!(b.pairs.is_empty());
        assert_eq!(b.unmatched_rows, vec![0]);
    }

    #[test]
    fn known_three_by_three() {
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let a = solve_gated(&c, 100.0);
        assert_eq!(a.cost, 5.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
    }

    #[test]
    fn prefers_more_pairs_over_lower_cost() {
        // Pairing (0,0) alone costs 1; pairing (0,1),(1,0) costs 7 but matches two.
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 3.5, 3.5, 9.0]);
        let a = solve_gated(&c, 4.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn works_for_f32() {
        let c = DMatrix::<f32>::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 0.2, 3.0, 3.0]);
        let a = solve_gated(&c, 10.0);
        assert_eq!(a.pairs, vec![(0, 2), (1, 0)]);
        assert_eq!(a.unmatched_cols, vec![1]);
    }

    proptest! {
        #[test]
        fn five_by_five_matches_permutation_minimum(vals in prop::collection::vec(0.0..10.0f64, 25)) {
            let c = DMatrix::from_row_slice(5, 5, &vals);
            let a = solve_gated(&c, 1e9);
            prop_assert_eq!(a.pairs.len(), 5);
            prop_assert!((a.cost - permutation_min(&c)).abs() < 1e-9);
        }

        #[test]
        fn gated_rectangular_matches_exhaustive(
            rows in 1usize..6, cols in 1usize..6,
            vals in prop::collection::vec(0.0..10.0f64, 36),
            gate in 1.0..10.0f64,
        ) {
            let c = DMatrix::from_fn(rows, cols, |i, j| vals[i * 6 + j]);
            let a = solve_gated(&c, gate);
            let (count, best) = brute_force(&c, gate);
            prop_assert_eq!(a.pairs.len(), count);
            prop_assert!((a.cost - best).abs() < 1e-9);
            for &(i, j) in &a.pairs {
                prop_assert!(c[(i, j)] <= gate);
            }
            prop_assert_eq!(a.pairs.len() + a.unmatched_rows.len(), rows);
            prop_assert_eq!(a.pairs.len() + a.unmatched_cols.len(), cols);
        }
    }
}
