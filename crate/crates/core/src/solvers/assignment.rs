//! Minimum-cost perfect matching: shortest-augmenting-path Hungarian
//! solver and an exhaustive oracle for small inputs.
//!
//! Both return the lexicographically smallest optimal permutation.

use std::collections::VecDeque;

use ndarray::ArrayView2;

use crate::cost::AugmentedCost;
use crate::error::{Error, Result};

/// Largest `n` the brute-force oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Hard matching of predictions to ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(prediction, ground_truth)` pairs, sorted by prediction.
    pub pairs: Vec<(usize, usize)>,
    /// Predictions matched to no ground truth.
    pub background: Vec<usize>,
    pub total_cost: f64,
    /// False when the pairs came from a rule that may reuse an index.
    pub one_to_one: bool,
}

impl Assignment {
    pub(crate) fn from_permutation(row_to_col: &[usize], n_real: usize, total_cost: f64) -> Self {
        let mut pairs = Vec::with_capacity(n_real);
        let mut background = Vec::new();
        for (row, &col) in row_to_col.iter().enumerate() {
            if col < n_real {
                pairs.push((row, col));
            } else {
                background.push(row);
            }
        }
        Self {
            pairs,
            background,
            total_cost,
            one_to_one: true,
        }
    }

    /// Ground truth matched to prediction `j`, if any.
    pub fn ground_truth_of(&self, j: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == j).map(|(_, g)| *g)
    }
}

fn check_square(cost: ArrayView2<'_, f64>) -> Result<usize> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if let Some(((j, i), v)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidCost(format!(
            "entry ({j}, {i}) = {v} is not finite"
        )));
    }
    Ok(rows)
}

fn permutation_cost(cost: ArrayView2<'_, f64>, row_to_col: &[usize]) -> f64 {
    row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[[r, c]])
        .sum()
}

/// Minimum-total-cost perfect matching on a square matrix; every column is
/// treated as a real ground truth.
pub fn hungarian(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let n = check_square(cost)?;
    let row_to_col = solve_lsap(cost);
    Ok(Assignment::from_permutation(
        &row_to_col,
        n,
        permutation_cost(cost, &row_to_col),
    ))
}

/// Hungarian matching on a background-augmented matrix; rows landing on
/// the virtual columns are reported as background.
pub fn hungarian_augmented(aug: &AugmentedCost) -> Result<Assignment> {
    let view = aug.matrix.view();
    check_square(view)?;
    let row_to_col = solve_lsap(view);
    Ok(Assignment::from_permutation(
        &row_to_col,
        aug.n_gt,
        permutation_cost(view, &row_to_col),
    ))
}

/// Exhaustive search over all `n!` permutations in lexicographic order,
/// keeping the first strict minimum.
pub fn brute_force_assignment(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let n = check_square(cost)?;
    brute_force_impl(cost, n)
}

/// Exhaustive oracle on a background-augmented matrix.
pub fn brute_force_augmented(aug: &AugmentedCost) -> Result<Assignment> {
    check_square(aug.matrix.view())?;
    brute_force_impl(aug.matrix.view(), aug.n_gt)
}

fn brute_force_impl(cost: ArrayView2<'_, f64>, n_real: usize) -> Result<Assignment> {
    let n = cost.nrows();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLargeForBruteForce(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = permutation_cost(cost, &perm);
    while next_permutation(&mut perm) {
        let c = permutation_cost(cost, &perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    Ok(Assignment::from_permutation(&best, n_real, best_cost))
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Returns `row_to_col` for a minimum-cost assignment, then canonicalizes
/// it to the lexicographically smallest optimum.
fn solve_lsap(cost: ArrayView2<'_, f64>) -> Vec<usize> {
    let n = cost.nrows();
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed potentials; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
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
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }

    let scale = cost.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-11 * scale;
    let tight = |r: usize, c: usize| (cost[[r, c]] - u[r + 1] - v[c + 1]).abs() <= tol;
    lexicographic_refine(n, &mut row_to_col, tight);
    row_to_col
}

/// Every optimal assignment uses only edges with zero reduced cost under
/// any optimal dual, so the lexicographically smallest optimum is the
/// lexicographically smallest perfect matching of the tight-edge graph.
/// Rows are fixed greedily, rerouting displaced rows along alternating
/// paths of tight edges.
fn lexicographic_refine(n: usize, row_to_col: &mut [usize], tight: impl Fn(usize, usize) -> bool) {
    let mut col_to_row = vec![0usize; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut col_fixed = vec![false; n];

    for r in 0..n {
        for c in 0..n {
            if col_fixed[c] || !tight(r, c) {
                continue;
            }
            if row_to_col[r] == c {
                break;
            }
            // Move r onto c; the displaced row must reach r's old column.
            let displaced = col_to_row[c];
            let target = row_to_col[r];
            if let Some(path) = alternating_path(
                n,
                displaced,
                target,
                r,
                c,
                row_to_col,
                &col_to_row,
                &col_fixed,
                &tight,
            ) {
                row_to_col[r] = c;
                col_to_row[c] = r;
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                break;
            }
        }
        col_fixed[row_to_col[r]] = true;
    }
}

/// BFS from `start_row` to `target_col` over tight edges, avoiding fixed
/// columns, the row `skip_row` and the column `skip_col`. Returns the
/// `(row, col)` reassignments along the path.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    start_row: usize,
    target_col: usize,
    skip_row: usize,
    skip_col: usize,
    row_to_col: &[usize],
    col_to_row: &[usize],
    col_fixed: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    let mut parent_row = vec![usize::MAX; n];
    let mut seen_col = vec![false; n];
    let mut queue = VecDeque::from([start_row]);
    while let Some(row) = queue.pop_front() {
        for col in 0..n {
            if seen_col[col] || col_fixed[col] || col == skip_col || !tight(row, col) {
                continue;
            }
            seen_col[col] = true;
            parent_row[col] = row;
            if col == target_col {
                let mut path = Vec::new();
                let mut c = col;
                loop {
                    let r = parent_row[c];
                    path.push((r, c));
                    if r == start_row {
                        return Some(path);
                    }
                    c = row_to_col[r];
                }
            }
            let next = col_to_row[col];
            if next != skip_row {
                queue.push_back(next);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{background_augmented_cost, CostMatrix};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        let a = hungarian(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);

        let c = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = hungarian(c.view()).unwrap();
        assert_eq!(a.total_cost, 5.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(brute_force_assignment(c.view()).unwrap(), a);
    }

    #[test]
    fn brute_force_examples() {
        let a = brute_force_assignment(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(a.total_cost, 0.0);
        // c * (J - I): zero diagonal is optimal.
        let mut c = Array2::from_elem((5, 5), 3.0);
        for i in 0..5 {
            c[[i, i]] = 0.0;
        }
        let a = brute_force_assignment(c.view()).unwrap();
        assert_eq!(a.pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(matches!(
            brute_force_assignment(Array2::zeros((9, 9)).view()),
            Err(Error::TooLargeForBruteForce(9))
        ));
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let zeros = Array2::<f64>::zeros((4, 4));
        let a = hungarian(zeros.view()).unwrap();
        assert_eq!(a.pairs, (0..4).map(|i| (i, i)).collect::<Vec<_>>());

        let c = array![[1.0, 1.0, 2.0], [1.0, 1.0, 2.0], [2.0, 2.0, 0.0]];
        let h = hungarian(c.view()).unwrap();
        assert_eq!(h.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(h, brute_force_assignment(c.view()).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(2..=6);
            let c = Array2::from_shape_fn((n, n), |_| rng.gen_range(0..3) as f64);
            assert_eq!(
                hungarian(c.view()).unwrap(),
                brute_force_assignment(c.view()).unwrap()
            );
        }
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        let err = hungarian(Array2::<f64>::zeros((2, 3)).view()).unwrap_err();
        assert!(err.to_string().contains("background_augmented_cost"));
        assert!(hungarian(array![[f64::INFINITY]].view()).is_err());
    }

    #[test]
    fn augmented_reports_background() {
        let c = CostMatrix::from_rows(&[
            vec![0.1, 0.9, 0.9, 0.9],
            vec![0.9, 0.1, 0.9, 0.9],
            vec![0.9, 0.9, 0.1, 0.9],
            vec![0.9, 0.9, 0.9, 0.1],
            vec![0.2, 0.9, 0.9, 0.9],
            vec![0.9, 0.9, 0.9, 0.9],
        ])
        .unwrap();
        let aug = background_augmented_cost(&c, 0.5).unwrap();
        let a = hungarian_augmented(&aug).unwrap();
        assert_eq!(a.background, vec![4, 5]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn handles_larger_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let c = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
        let a = hungarian(c.view()).unwrap();
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        cols.sort_unstable();
        assert_eq!(cols, (0..n).collect::<Vec<_>>());
    }
}
