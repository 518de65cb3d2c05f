//! Optimal one-to-one matching on similarity matrices.
//!
//! Maximization is solved as a min-cost Hungarian problem on `1 - s`. Among
//! all optimal matchings the lexicographically smallest column sequence is
//! returned, so results do not depend on the order the solver explores ties.

use thiserror::Error;

/// Reduced costs below this are treated as tight edges.
const TIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {found}")]
    Shape { rows: usize, cols: usize, expected: usize, found: usize },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("assignment requires a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Row-major matrix of similarities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, AssignmentError> {
        if rows == 0 || cols == 0 {
            return Err(AssignmentError::Empty);
        }
        if entries.len() != rows * cols {
            return Err(AssignmentError::Shape { rows, cols, expected: rows * cols, found: entries.len() });
        }
        if let Some(k) = entries.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(AssignmentError::OutOfRange { row: k / cols, col: k % cols, value: entries[k] });
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(AssignmentError::Shape {
                rows: rows.len(),
                cols,
                expected: rows.len() * cols,
                found: rows.len() * cols - cols + bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Fills an `rows x cols` matrix from a pairwise function.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, AssignmentError> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of matched entries, accumulated in row order.
    pub total: f64,
}

/// Appends zero rows or columns (null items) until the matrix is square.
pub fn pad_square(m: &SimilarityMatrix) -> SimilarityMatrix {
    if m.is_square() {
        return m.clone();
    }
    let n = m.rows.max(m.cols);
    let mut entries = vec![0.0; n * n];
    for i in 0..m.rows {
        entries[i * n..i * n + m.cols].copy_from_slice(&m.entries[i * m.cols..(i + 1) * m.cols]);
    }
    SimilarityMatrix { rows: n, cols: n, entries }
}

/// Maximum-total one-to-one assignment on a square matrix.
pub fn optimal_assignment(m: &SimilarityMatrix) -> Result<Assignment, AssignmentError> {
    if !m.is_square() {
        return Err(AssignmentError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let n = m.rows;
    let cost: Vec<f64> = m.entries.iter().map(|s| 1.0 - s).collect();
    let (row_pot, col_pot) = hungarian_potentials(n, &cost);

    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cost[i * n + j] - row_pot[i] - col_pot[j] <= TIGHT_EPS).collect())
        .collect();
    let cols = lexicographic_perfect_matching(&tight);

    let pairs: Vec<(usize, usize)> = cols.iter().copied().enumerate().collect();
    let total = pairs.iter().map(|&(i, j)| m.get(i, j)).sum();
    Ok(Assignment { pairs, total })
}

/// O(n^3) Hungarian algorithm (shortest augmenting paths with potentials).
/// Returns feasible optimal dual potentials for rows and columns.
fn hungarian_potentials(n: usize, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching in a bipartite graph that is
/// known to have one. `tight[i][j]` marks allowed edges.
///
/// Every optimal assignment uses only tight edges of an optimal dual, so this
/// selects the smallest optimum.
fn lexicographic_perfect_matching(tight: &[Vec<bool>]) -> Vec<usize> {
    let n = tight.len();
    let mut row_of = vec![usize::MAX; n];
    let mut col_of = vec![usize::MAX; n];
    for r in 0..n {
        let mut seen = vec![false; n];
        let found = augment(r, tight, &mut row_of, &mut col_of, &mut seen, 0);
        debug_assert!(found, "tight graph must contain a perfect matching");
    }

    // Fix rows in order, moving each to its smallest feasible column.
    for r in 0..n {
        for c in 0..n {
            if !tight[r][c] {
                continue;
            }
            if col_of[r] == c {
                break;
            }
            // Force (r, c): the row currently holding c must reach r's old
            // column along an alternating path avoiding fixed rows 0..=r.
            let old_col = col_of[r];
            let displaced = row_of[c];
            if displaced < r {
                continue;
            }
            let mut trial_row_of = row_of.clone();
            let mut trial_col_of = col_of.clone();
            trial_col_of[r] = c;
            trial_row_of[c] = r;
            trial_row_of[old_col] = usize::MAX;
            trial_col_of[displaced] = usize::MAX;
            let mut seen = vec![false; n];
            seen[c] = true;
            if augment(displaced, tight, &mut trial_row_of, &mut trial_col_of, &mut seen, r + 1) {
                row_of = trial_row_of;
                col_of = trial_col_of;
                break;
            }
        }
    }
    col_of
}

/// Kuhn-style augmenting path from `row`. Rows below `min_row` are frozen.
fn augment(
    row: usize,
    tight: &[Vec<bool>],
    row_of: &mut [usize],
    col_of: &mut [usize],
    seen: &mut [bool],
    min_row: usize,
) -> bool {
    for c in 0..tight.len() {
        if !tight[row][c] || seen[c] {
            continue;
        }
        seen[c] = true;
        let holder = row_of[c];
        if holder == usize::MAX
            || (holder >= min_row && augment(holder, tight, row_of, col_of, seen, min_row))
        {
            row_of[c] = row;
            col_of[row] = c;
            return true;
        }
    }
    false
}
