//! Symmetric sparse matrices and their direct or iterative solution.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("matrix not SPD")]
    NotSpd,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparse backend failure: {0}")]
    Backend(String),
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Square sparse matrix in compressed rows with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries in the order they appear, so the result is
    /// bit-identical for identical input sequences.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            count[i + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        let mut next = count.clone();
        for &(i, j, v) in triplets {
            by_row[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut by_row[count[i]..count[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in row.iter() {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_diff = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                max_entry = max_entry.max(v.abs());
                max_diff = max_diff.max((v - self.get(j, i)).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_diff / max_entry
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Sparse Cholesky factorization with a fill-reducing ordering.
pub struct Factorization {
    llt: Llt<usize, f64>,
    matrix: CsrMatrix,
}

/// The stored rows of a symmetric matrix are also its columns, so the CSR
/// arrays are passed to the column-major backend unchanged.
pub fn factorize(matrix: &CsrMatrix) -> Result<Factorization, SolverError> {
    let n = matrix.n;
    let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &matrix.row_ptr, None, &matrix.col_idx);
    let view = SparseColMatRef::new(symbolic, &matrix.values);
    let llt = view.sp_cholesky(Side::Lower).map_err(|e| match e {
        LltError::Numeric(_) => SolverError::NotSpd,
        LltError::Generic(g) => SolverError::Backend(format!("{g:?}")),
    })?;
    Ok(Factorization { llt, matrix: matrix.clone() })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        let n = x.len();
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    /// Direct solve followed by one step of iterative refinement whenever
    /// the relative residual exceeds the tolerance.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        if rhs.len() != self.matrix.n {
            return Err(SolverError::DimensionMismatch { expected: self.matrix.n, found: rhs.len() });
        }
        let b_norm = norm2(rhs);
        if b_norm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let mut x = self.apply_inverse(rhs);
        let residual: Vec<f64> = self.matrix.matvec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        if norm2(&residual) > RESIDUAL_TOL * b_norm {
            let dx = self.apply_inverse(&residual);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Ok(x)
    }

    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let r: Vec<f64> = self.matrix.matvec(x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        norm2(&r) / norm2(rhs).max(f64::MIN_POSITIVE)
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn solve_cg(matrix: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, SolverError> {
    let n = matrix.n;
    if rhs.len() != n {
        return Err(SolverError::DimensionMismatch { expected: n, found: rhs.len() });
    }
    let b_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = matrix.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        let ap = matrix.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolverError::NotSpd);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r) / b_norm;
        if res <= tol {
            return Ok(x);
        }
        if it + 1 == max_iter {
            return Err(SolverError::NotConverged { iterations: max_iter, residual: res });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::NotConverged { iterations: max_iter, residual: norm2(&r) / b_norm })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverKind {
    #[default]
    Cholesky,
    ConjugateGradient,
}

/// A matrix prepared for repeated solves.
pub enum SystemSolver {
    Direct(Factorization),
    Iterative(CsrMatrix),
}

impl SystemSolver {
    pub fn new(kind: SolverKind, matrix: &CsrMatrix) -> Result<Self, SolverError> {
        Ok(match kind {
            SolverKind::Cholesky => SystemSolver::Direct(factorize(matrix)?),
            SolverKind::ConjugateGradient => SystemSolver::Iterative(matrix.clone()),
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        match self {
            SystemSolver::Direct(f) => f.solve(rhs),
            SystemSolver::Iterative(m) => solve_cg(m, rhs, RESIDUAL_TOL, 10 * m.dim().max(1)),
        }
    }
}

/// Caps the worker threads of the sparse backend and the element loops.
pub fn set_thread_count(threads: usize) {
    let threads = threads.max(1);
    faer::set_global_parallelism(if threads == 1 { faer::Par::Seq } else { faer::Par::rayon(threads) });
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
        // Sparse B^T B + n I with a banded B.
        let mut dense = vec![vec![0.0; n]; n];
        let b: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i.abs_diff(j) <= 2 { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>();
            }
            dense[i][i] += 1.0;
        }
        CsrMatrix::from_dense(&dense)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0), (1, 1, 5.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.asymmetry(), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![6.0, 7.0]);
        assert_eq!(m.quad_form(&[1.0, 1.0]), 13.0);
    }

    #[test]
    fn identity_factorization() {
        let f = factorize(&CsrMatrix::identity(2)).unwrap();
        assert_eq!(f.solve(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(factorize(&m).err(), Some(SolverError::NotSpd));
    }

    #[test]
    fn recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let m = random_spd(50, &mut rng);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = m.matvec(&x);
        let f = factorize(&m).unwrap();
        let y = f.solve(&b).unwrap();
        let err = norm2(&y.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm2(&x);
        assert!(err < 1e-9, "{err}");
        assert!(f.relative_residual(&y, &b) <= 1e-10);
    }

    #[test]
    fn factorization_reproduces_identity_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_spd(20, &mut rng);
        let f = factorize(&m).unwrap();
        for i in 0..20 {
            let mut e = vec![0.0; 20];
            e[i] = 1.0;
            let col = m.matvec(&f.solve(&e).unwrap());
            for (j, v) in col.iter().enumerate() {
                assert!((v - e[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_rhs_and_independent_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_spd(10, &mut rng);
        let f = factorize(&m).unwrap();
        assert_eq!(f.solve(&[0.0; 10]).unwrap(), vec![0.0; 10]);
        let b1: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b2: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let x1 = f.solve(&b1).unwrap();
        let _ = f.solve(&b2).unwrap();
        assert_eq!(f.solve(&b1).unwrap(), x1);
    }

    #[test]
    fn dimension_mismatch() {
        let f = factorize(&CsrMatrix::identity(3)).unwrap();
        assert_eq!(f.solve(&[1.0]).err(), Some(SolverError::DimensionMismatch { expected: 3, found: 1 }));
    }

    #[test]
    fn cg_agrees_with_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_spd(40, &mut rng);
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = factorize(&m).unwrap().solve(&b).unwrap();
        let cg = solve_cg(&m, &b, 1e-12, 400).unwrap();
        for (a, c) in direct.iter().zip(&cg) {
            assert!((a - c).abs() < 1e-9);
        }
    }
}
