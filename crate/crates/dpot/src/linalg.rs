//! Sparse storage, SPD solvers and Krylov matrix functions.

use crate::error::{Error, Result};
use crate::num::{dot, norm2, Real};
use nalgebra::{DMatrix, DVector};

/// Interior sizes up to this bound use dense factorizations.
pub const DENSE_LIMIT: usize = 4000;
/// Dense symmetric eigendecompositions are restricted further.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < n_rows && c < n_cols, "triplet out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate over the stored entries of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(j, _)| j == c).map(|(_, v)| v).unwrap_or_else(T::zero)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| self.row(r).fold(T::zero(), |s, (c, v)| s + v * x[c]))
            .collect()
    }

    /// y = Aᵀx
    pub fn mul_vec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![T::zero(); self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Left-multiply by diag(d).
    pub fn scale_rows(&self, d: &[T]) -> Self {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] *= d[r];
            }
        }
        out
    }

    /// Right-multiply by diag(d).
    pub fn scale_cols(&self, d: &[T]) -> Self {
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] *= d[out.indices[k]];
        }
        out
    }

    /// Principal submatrix on the given (sorted or unsorted) index list.
    pub fn principal(&self, idx: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n_cols];
        for (k, &i) in idx.iter().enumerate() {
            map[i] = k;
        }
        let mut trip = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            for (c, v) in self.row(i) {
                if map[c] != usize::MAX {
                    trip.push((k, map[c], v));
                }
            }
        }
        Self::from_triplets(idx.len(), idx.len(), trip)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n_rows)
            .map(|r| self.row(r).fold(T::zero(), |s, (_, v)| s + v.abs()))
            .fold(T::zero(), |m, x| m.max(x))
    }
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
///
/// Stops when ‖b − Ax‖₂ ≤ tol·‖b‖₂. Fails on a non-positive curvature
/// direction or when the iteration cap is hit.
pub fn conjugate_gradient<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let dinv: Vec<T> = a.diagonal().iter().map(|&d| T::one() / d).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let ax = a.mul_vec(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut z: Vec<T> = r.iter().zip(&dinv).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if norm2(&r) <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::Solver("non-positive curvature in conjugate gradients".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&r) <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "conjugate gradients stalled at relative residual {:e}",
            (norm2(&r) / bnorm).as_f64()
        )))
    }
}

/// Solver for a symmetric positive definite sparse system.
#[derive(Debug, Clone)]
pub enum SpdSolver<T: Real> {
    Dense(nalgebra::Cholesky<T, nalgebra::Dyn>),
    Iterative(CsrMatrix<T>),
}

impl<T: Real> SpdSolver<T> {
    /// Dense Cholesky up to [`DENSE_LIMIT`], iterative otherwise.
    /// Fails with `NotPositive` when the dense factorization breaks down;
    /// the caller computes the actual eigenvalue if needed.
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        if a.n_rows() <= DENSE_LIMIT {
            nalgebra::Cholesky::new(a.to_dense())
                .map(SpdSolver::Dense)
                .ok_or(Error::NotPositive { lambda_min: f64::NAN })
        } else {
            if a.diagonal().iter().any(|&d| d <= T::zero()) {
                return Err(Error::NotPositive { lambda_min: f64::NAN });
            }
            Ok(SpdSolver::Iterative(a.clone()))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Dense(c) => c.l_dirty().nrows(),
            SpdSolver::Iterative(a) => a.n_rows(),
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        match self {
            SpdSolver::Dense(c) => Ok(c.solve(&DVector::from_column_slice(b)).as_slice().to_vec()),
            SpdSolver::Iterative(a) => {
                let n = a.n_rows();
                let cap = 20 * n + 1000;
                let x = conjugate_gradient(a, b, None, T::lit(T::SOLVE_TOL), cap)?;
                Ok(x)
            }
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, SpdSolver::Dense(_))
    }
}

/// Eigenpairs of a symmetric tridiagonal matrix (ascending).
fn tridiagonal_eigen<T: Real>(alpha: &[T], beta: &[T]) -> (Vec<T>, DMatrix<T>) {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// f(A)v for a symmetric operator A given as a closure, by two-pass Lanczos.
///
/// The first pass builds the tridiagonal projection until the Krylov
/// coordinates of the approximation settle to `tol` (relative); the second
/// pass regenerates the basis to assemble the result without storing it.
pub fn lanczos_function<T, A, F>(apply: A, v: &[T], f: F, tol: T, max_iter: usize) -> Result<Vec<T>>
where
    T: Real,
    A: Fn(&[T]) -> Vec<T>,
    F: Fn(T) -> T,
{
    let n = v.len();
    let vnorm = norm2(v);
    if vnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let max_iter = max_iter.min(n).max(1);
    let coords = |alpha: &[T], beta: &[T]| -> Vec<T> {
        let (vals, q) = tridiagonal_eigen(alpha, beta);
        let k = alpha.len();
        let mut c = vec![T::zero(); k];
        for j in 0..k {
            let w = f(vals[j]) * q[(0, j)] * vnorm;
            for i in 0..k {
                c[i] += q[(i, j)] * w;
            }
        }
        c
    };

    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut q_prev = vec![T::zero(); n];
    let mut q: Vec<T> = v.iter().map(|&x| x / vnorm).collect();
    let mut prev_c: Option<Vec<T>> = None;
    let mut final_c = None;
    for j in 0..max_iter {
        let mut w = apply(&q);
        let a = dot(&w, &q);
        alpha.push(a);
        let b_prev = if j > 0 { beta[j - 1] } else { T::zero() };
        for i in 0..n {
            w[i] -= a * q[i] + b_prev * q_prev[i];
        }
        let b = norm2(&w);
        let breakdown = b <= T::lit(1e-14) * (a.abs() + b_prev);
        let check = breakdown || j + 1 == max_iter || (j + 1) % 8 == 0;
        if check {
            let c = coords(&alpha, &beta);
            let settled = match &prev_c {
                Some(p) => {
                    let mut diff = T::zero();
                    for i in 0..c.len() {
                        let pi = if i < p.len() { p[i] } else { T::zero() };
                        diff += (c[i] - pi) * (c[i] - pi);
                    }
                    diff.sqrt() <= tol * norm2(&c)
                }
                None => false,
            };
            if settled || breakdown || j + 1 == max_iter {
                if !(settled || breakdown) {
                    return Err(Error::Solver("Lanczos matrix function did not converge".into()));
                }
                final_c = Some(c);
                break;
            }
            prev_c = Some(c);
        }
        beta.push(b);
        let q_next: Vec<T> = w.iter().map(|&x| x / b).collect();
        q_prev = std::mem::replace(&mut q, q_next);
    }
    let c = final_c.expect("loop sets coordinates");
    let k = c.len();

    // Second pass: rebuild the basis with the stored coefficients.
    let mut out = vec![T::zero(); n];
    let mut q_prev = vec![T::zero(); n];
    let mut q: Vec<T> = v.iter().map(|&x| x / vnorm).collect();
    for j in 0..k {
        for i in 0..n {
            out[i] += c[j] * q[i];
        }
        if j + 1 == k {
            break;
        }
        let mut w = apply(&q);
        let b_prev = if j > 0 { beta[j - 1] } else { T::zero() };
        for i in 0..n {
            w[i] -= alpha[j] * q[i] + b_prev * q_prev[i];
        }
        let q_next: Vec<T> = w.iter().map(|&x| x / beta[j]).collect();
        q_prev = std::mem::replace(&mut q, q_next);
    }
    Ok(out)
}

/// Extreme eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalization. `smallest` selects the bottom of the spectrum.
pub fn lanczos_extreme<T, A>(apply: A, start: &[T], smallest: bool, tol: T, max_iter: usize) -> Result<(T, Vec<T>)>
where
    T: Real,
    A: Fn(&[T]) -> Vec<T>,
{
    let n = start.len();
    let max_iter = max_iter.min(n).max(1);
    let s = norm2(start);
    if s == T::zero() {
        return Err(Error::Degenerate("zero Lanczos start".into()));
    }
    let mut basis: Vec<Vec<T>> = vec![start.iter().map(|&x| x / s).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut best = None;
    for j in 0..max_iter {
        let mut w = apply(&basis[j]);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                for i in 0..n {
                    w[i] -= c * q[i];
                }
            }
        }
        let b = norm2(&w);
        if (j + 1) % 5 == 0 || j + 1 == max_iter || b <= T::lit(1e-14) {
            let (vals, vecs) = tridiagonal_eigen(&alpha, &beta);
            let k = alpha.len();
            let idx = if smallest { 0 } else { k - 1 };
            let theta = vals[idx];
            let resid = (b * vecs[(k - 1, idx)]).abs();
            let scale = vals[0].abs().max(vals[k - 1].abs()).max(T::lit(1e-300));
            if resid <= tol * scale || b <= T::lit(1e-14) || j + 1 == max_iter {
                let mut y = vec![T::zero(); n];
                for (m, q) in basis.iter().enumerate() {
                    let c = vecs[(m, idx)];
                    for i in 0..n {
                        y[i] += c * q[i];
                    }
                }
                best = Some((theta, y, resid <= tol * scale || b <= T::lit(1e-14)));
                break;
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|&x| x / b).collect());
    }
    match best {
        Some((theta, y, true)) => Ok((theta, y)),
        Some((theta, y, false)) => {
            // Accept a loosely converged pair; callers only need the sign and a
            // positive ground-state representative.
            let _ = theta;
            let ay = apply(&y);
            let rq = dot(&ay, &y) / dot(&y, &y);
            Ok((rq, y))
        }
        None => Err(Error::Solver("Lanczos produced no Ritz pair".into())),
    }
}

/// Truncated Chebyshev expansion of a scalar function on [a, b], applied to
/// symmetric operators whose spectrum lies in that interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevSeries<T> {
    a: T,
    b: T,
    coeffs: Vec<T>,
}

impl<T: Real> ChebyshevSeries<T> {
    /// Keeps coefficients down to `tol` relative to the largest one.
    pub fn fit(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_degree: usize) -> Result<Self> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return Err(Error::Degenerate(format!("empty Chebyshev interval [{a}, {b}]")));
        }
        let mut n = 64usize;
        loop {
            let theta: Vec<f64> = (0..n).map(|j| std::f64::consts::PI * (j as f64 + 0.5) / n as f64).collect();
            let fx: Vec<f64> = theta.iter().map(|t| f(0.5 * (b - a) * t.cos() + 0.5 * (b + a))).collect();
            let c: Vec<f64> = (0..n)
                .map(|k| 2.0 / n as f64 * fx.iter().zip(&theta).map(|(v, t)| v * (k as f64 * t).cos()).sum::<f64>())
                .collect();
            let top = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let keep = c.iter().rposition(|x| x.abs() > tol * top).map_or(1, |k| k + 1);
            if keep < n / 2 {
                return Ok(Self { a: T::lit(a), b: T::lit(b), coeffs: c[..keep].iter().map(|&x| T::lit(x)).collect() });
            }
            if n >= max_degree {
                return Err(Error::Solver(format!("Chebyshev expansion needs more than {max_degree} terms")));
            }
            n *= 2;
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// f(A)v by the three-term recurrence.
    pub fn apply(&self, apply: impl Fn(&[T]) -> Vec<T>, v: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        let (s, m) = (two / (self.b - self.a), (self.a + self.b) / (self.b - self.a));
        let mapped = |x: &[T]| -> Vec<T> { apply(x).iter().zip(x).map(|(&ax, &xi)| s * ax - m * xi).collect() };
        let mut out: Vec<T> = v.iter().map(|&x| x * self.coeffs[0] / two).collect();
        if self.coeffs.len() == 1 {
            return out;
        }
        let mut prev = v.to_vec();
        let mut cur = mapped(v);
        for (o, &c) in out.iter_mut().zip(&cur) {
            *o += self.coeffs[1] * c;
        }
        for &ck in &self.coeffs[2..] {
            let next: Vec<T> = mapped(&cur).iter().zip(&prev).map(|(&x, &p)| two * x - p).collect();
            for (o, &c) in out.iter_mut().zip(&next) {
                *o += ck * c;
            }
            prev = std::mem::replace(&mut cur, next);
        }
        out
    }
}

/// Smallest eigenvalue and eigenvector of a dense symmetric matrix.
pub fn dense_min_eigen<T: Real>(m: &DMatrix<T>) -> (T, Vec<T>) {
    let eig = m.clone().symmetric_eigen();
    let (i, &v) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("non-empty matrix");
    (v, eig.eigenvectors.column(i).iter().copied().collect())
}

/// Largest eigenvalue of a dense symmetric matrix.
pub fn dense_max_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.clone().symmetric_eigen().eigenvalues.iter().fold(T::lit(f64::NEG_INFINITY), |a, &b| a.max(b))
}
