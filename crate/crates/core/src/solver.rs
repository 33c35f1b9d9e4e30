//! Compressed-row sparse matrices and the direct solver.

use faer::sparse::{SparseColMat, Triplet};

use crate::assembly::SaddleSystem;
use crate::{Error, Result};

/// Entries with magnitude below this are dropped on compression.
pub const PURGE_TOL: f64 = 1e-300;

/// Relative residual the solver guarantees.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Square or rectangular matrix in compressed row storage with sorted,
/// deduplicated column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Compresses `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite entry at ({r}, {c})"
                )));
            }
        }
        sorted.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut iter = sorted.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v.abs() >= PURGE_TOL {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            x.len(),
            self.ncols,
            "dimension mismatch in matrix-vector product"
        );
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.ncols, self.nrows, &triplets)
            .expect("transpose of a valid matrix")
    }

    /// `max |A_rc − A_cr|`.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut entries: Vec<_> = self.iter().collect();
        entries.extend(t.iter().map(|(r, c, v)| (r, c, -v)));
        let diff = SparseMatrix::from_triplets(self.nrows, self.ncols, &entries)
            .expect("valid difference");
        diff.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            out[r][c] = v;
        }
        out
    }

    /// Writes `i j value` lines.
    pub fn write_coordinate(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.iter() {
            writeln!(out, "{r} {c} {v:.17e}")?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖Ax − b‖₂ / max(‖b‖₂, 1e-30)`.
pub fn relative_residual(matrix: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = matrix.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    norm(&r) / norm(b).max(1e-30)
}

/// Residual of `x` for an assembled system.
pub fn residual(system: &SaddleSystem, x: &[f64]) -> f64 {
    relative_residual(&system.matrix, x, &system.rhs)
}

/// Solves `Ax = b` by sparse LU with a fill-reducing ordering and partial
/// pivoting, followed by a few steps of iterative refinement.
pub fn solve_sparse(matrix: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if matrix.ncols() != n || b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "cannot solve a {}x{} system with a right-hand side of length {}",
            n,
            matrix.ncols(),
            b.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = matrix
        .iter()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Singular(format!("matrix conversion failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
    let apply = |rhs: &[f64]| -> Vec<f64> {
        let col = faer::Col::<f64>::from_fn(n, |i| rhs[i]);
        let sol = faer::linalg::solvers::Solve::solve(&lu, &col);
        (0..n).map(|i| sol[i]).collect()
    };
    let mut x = apply(b);
    let mut res = relative_residual(matrix, &x, b);
    for _ in 0..3 {
        if !res.is_finite() || res <= 1e-14 {
            break;
        }
        let ax = matrix.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = apply(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
        let cand_res = relative_residual(matrix, &candidate, b);
        if cand_res.is_finite() && cand_res < res {
            x = candidate;
            res = cand_res;
        } else {
            break;
        }
    }
    if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "factorization produced non-finite values".into(),
        ));
    }
    if res > RESIDUAL_TOL {
        return Err(Error::Singular(format!(
            "relative residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(x)
}

/// Solves an assembled saddle-point system.
pub fn solve(system: &SaddleSystem) -> Result<Vec<f64>> {
    if !system.has_mean_constraint() {
        return Err(Error::InvalidArgument(
            "the mean-pressure constraint has not been applied".into(),
        ));
    }
    solve_sparse(&system.matrix, &system.rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            let pivot = a[k].clone();
            for i in k + 1..n {
                let f = a[i][k] / pivot[k];
                for (aij, pj) in a[i][k..].iter_mut().zip(&pivot[k..]) {
                    *aij -= f * pj;
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn compression_sorts_sums_and_purges() {
        let m = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (2, 1, 1.0),
                (0, 2, 3.0),
                (0, 0, 1.0),
                (2, 1, 2.0),
                (1, 1, 1e-310),
                (0, 2, -3.0),
            ],
        )
        .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(2, 1), 3.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.row(0).0, &[0]);
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_and_diagonal() {
        let b = vec![3.0, -1.0, 0.5, 7.0];
        let x = solve_sparse(&SparseMatrix::identity(4), &b).unwrap();
        assert_eq!(x, b);
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        let x = solve_sparse(&m, &[2.0, 8.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_examples() {
        let m =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0), (0, 1, 1.0)]).unwrap();
        let b = [3.0, 4.0];
        assert_abs_diff_eq!(relative_residual(&m, &[0.0, 0.0], &b), 1.0, epsilon = 1e-15);
        let x = solve_sparse(&m, &b).unwrap();
        assert!(relative_residual(&m, &x, &b) <= 1e-10);
        let mut last = 0.0;
        for scale in [1e-6, 1e-4, 1e-2, 1.0] {
            let r = relative_residual(&m, &[x[0] + scale, x[1] + scale], &b);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            solve_sparse(&m, &[1.0, 0.0]),
            Err(Error::Singular(_))
        ));
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            solve_sparse(&m, &[1.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn random_dense_system_matches_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let n = 50;
        let mut triplets = Vec::new();
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                let v = rng.random_range(-1.0..1.0) + if i == j { n as f64 } else { 0.0 };
                *entry = v;
                triplets.push((i, j, v));
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let x = solve_sparse(&m, &b).unwrap();
        let oracle = dense_solve(dense, b);
        for (a, e) in x.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-9);
        }
    }

    #[test]
    fn random_sparse_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let n = rng.random_range(1..=200);
            // B Bᵀ + n I with a sparse B
            let mut b = vec![Vec::new(); n];
            for row in b.iter_mut() {
                for _ in 0..3 {
                    row.push((rng.random_range(0..n), rng.random_range(-1.0..1.0)));
                }
            }
            let mut dense = vec![vec![0.0; n]; n];
            for (i, row) in dense.iter_mut().enumerate() {
                row[i] += n as f64;
            }
            for ri in &b {
                for &(ci, vi) in ri {
                    for &(cj, vj) in ri {
                        dense[ci][cj] += vi * vj;
                    }
                }
            }
            let triplets: Vec<_> = dense
                .iter()
                .enumerate()
                .flat_map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(move |(j, &v)| (i, j, v))
                })
                .collect();
            let m = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
            assert!(m.max_asymmetry() < 1e-14);
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_sparse(&m, &rhs).unwrap();
            let oracle = dense_solve(dense, rhs);
            for (a, e) in x.iter().zip(&oracle) {
                assert_abs_diff_eq!(a, e, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 120;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 4.0));
            for _ in 0..4 {
                triplets.push((i, rng.random_range(0..n), rng.random_range(-1.0..1.0)));
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x1 = solve_sparse(&m, &b).unwrap();
        let x2 = solve_sparse(&m, &b).unwrap();
        assert_eq!(
            x1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            x2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn asymmetry_and_transpose() {
        let m =
            SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 0.75), (1, 1, 2.0)]).unwrap();
        assert_abs_diff_eq!(m.max_asymmetry(), 0.25);
        assert_eq!(m.transpose().get(0, 1), 0.75);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![2.0, 4.75]);
    }
}
