//! Hermitian eigensolvers: dense (nalgebra) for small matrices, restarted
//! Lanczos with full reorthogonalization for large sparse ones.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::C64;

/// Matrices up to this dimension are diagonalized densely.
pub const DENSE_LIMIT: usize = 2000;

/// Residual norm at which Lanczos stops.
pub const LANCZOS_TOLERANCE: f64 = 1e-10;

/// Eigenvalues ascending with matching eigenvector columns.
pub fn eigh(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        fix_phase(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Rotates a vector so its largest-magnitude component (first on ties) is
/// real and positive. Makes eigenvectors reproducible up to degeneracy.
pub fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    let mut best_norm = -1.0;
    for (i, z) in v.iter().enumerate() {
        let n = z.norm();
        if n > best_norm * (1.0 + 1e-9) {
            best = i;
            best_norm = n;
        }
    }
    if best_norm > 0.0 {
        let phase = v[best].conj() / best_norm;
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Compressed sparse rows with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseHermitian {
    /// Builds from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, C64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().expect("previous entry") += v;
                } else {
                    cols.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[span.clone()].binary_search(&col) {
            Ok(i) => self.values[span.start + i],
            Err(_) => C64::default(),
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + A†) / 2`.
    pub fn symmetrize(&mut self) {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                rows[r].push((c, v * 0.5));
                rows[c].push((r, v.conj() * 0.5));
            }
        }
        *self = Self::from_rows(rows);
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn has_non_finite(&self) -> bool {
        self.values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))
    }
}

/// Lowest eigenpair of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct LowestEigenpair {
    pub value: f64,
    pub vector: Vec<C64>,
    /// Next eigenvalue when the solver resolved it.
    pub next_value: Option<f64>,
}

pub fn lowest_eigenpair(m: &SparseHermitian) -> Result<LowestEigenpair> {
    if m.has_non_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if m.dim() == 0 {
        return Err(Error::Numeric("cannot diagonalize an empty matrix".into()));
    }
    if m.dim() <= DENSE_LIMIT {
        let (values, vectors) = eigh(&m.to_dense())?;
        return Ok(LowestEigenpair {
            value: values[0],
            vector: vectors.column(0).iter().copied().collect(),
            next_value: values.get(1).copied(),
        });
    }
    lanczos_lowest(m, LANCZOS_TOLERANCE)
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted Lanczos with full reorthogonalization. Deterministic: the start
/// vector comes from a fixed seed.
pub fn lanczos_lowest(m: &SparseHermitian, tol: f64) -> Result<LowestEigenpair> {
    const MAX_RESTARTS: usize = 200;
    let n = m.dim();
    let krylov = n.min(120);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let s = norm(&start);
    start.iter_mut().for_each(|z| *z /= s);

    let mut w = vec![C64::default(); n];
    for _ in 0..MAX_RESTARTS {
        let mut basis: Vec<Vec<C64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut breakdown = false;
        for j in 0..krylov {
            m.matvec(&basis[j], &mut w);
            alphas.push(dot(&basis[j], &w).re);
            for _ in 0..2 {
                for v in &basis {
                    let overlap = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= overlap * y);
                }
            }
            let beta = norm(&w);
            if j + 1 == krylov || beta < 1e-14 {
                breakdown = beta < 1e-14;
                break;
            }
            betas.push(beta);
            basis.push(w.iter().map(|z| z / beta).collect());
        }
        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lowest = order[0];
        let mut ritz = vec![C64::default(); n];
        for (i, v) in basis.iter().enumerate().take(k) {
            let c = eig.eigenvectors[(i, lowest)];
            ritz.iter_mut().zip(v).for_each(|(x, y)| *x += y * c);
        }
        let r = norm(&ritz);
        ritz.iter_mut().for_each(|z| *z /= r);
        m.matvec(&ritz, &mut w);
        let value = dot(&ritz, &w).re;
        let residual = w
            .iter()
            .zip(&ritz)
            .map(|(a, b)| (a - b * value).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual < tol || breakdown {
            fix_phase(&mut ritz);
            return Ok(LowestEigenpair {
                value,
                vector: ritz,
                next_value: order.get(1).map(|&i| eig.eigenvalues[i]),
            });
        }
        start = ritz;
    }
    Err(Error::Numeric(format!(
        "Lanczos did not reach residual {tol:e} within {MAX_RESTARTS} restarts"
    )))
}
