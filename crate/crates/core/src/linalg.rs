//! Dense complex linear algebra over a generic real format.
//!
//! Factorizations skip structurally zero multipliers, so banded truth
//! matrices (the 1D finite element problem) factor in O(n^2) even though
//! storage stays dense. Singular values are only needed in double precision
//! and come from `nalgebra`.

use serde::{Deserialize, Serialize};

use crate::error::{RbError, Result};
use crate::scalar::{Cplx, Real, C64};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![Cplx::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cplx::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cplx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<Cplx<T>>]) -> Self {
        let n = cols.first().map_or(0, |c| c.len());
        Self::from_fn(n, cols.len(), |i, j| cols[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Cplx<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Cplx<T>] {
        &self.data
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.cast()).collect(),
        }
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scaled(&self, s: Cplx<T>) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Cplx<T>, other: &Mat<T>) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn mul_vec(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dotu(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other[(k, j)];
                    out[(i, j)] += a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.abs1()))
    }

    /// Induced 1-norm (max column sum of moduli), in double.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].to_c64().abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.to_c64().norm_sqr()).sum::<f64>().sqrt()
    }

    /// Leading `k x k` block.
    pub fn leading(&self, k: usize) -> Mat<T> {
        Self::from_fn(k, k, |i, j| self[(i, j)])
    }
}

impl Mat<f64> {
    /// `A x` with the double entries of `A` converted to `T` on the fly.
    /// Zero entries are skipped, so banded matrices cost O(nnz).
    pub fn mul_vec_as<T: Real>(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut acc = Cplx::zero();
                for (a, &xj) in self.row(i).iter().zip(x) {
                    if !a.is_zero() {
                        acc += Cplx::<T>::from_c64(*a) * xj;
                    }
                }
                acc
            })
            .collect()
    }

    /// `A^H x`, same conventions as [`Mat::mul_vec_as`].
    pub fn conj_mul_vec_as<T: Real>(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![Cplx::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                if !a.is_zero() {
                    *o += Cplx::<T>::from_c64(a.conj()) * xi;
                }
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = Cplx<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cplx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cplx<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// Unconjugated product `sum a_i b_i`.
#[inline]
pub fn dotu<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    let mut acc = Cplx::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Hermitian product `a^H b`.
#[inline]
pub fn dotc<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    let mut acc = Cplx::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

pub fn norm2<T: Real>(a: &[Cplx<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// `y += s * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [Cplx<T>], s: Cplx<T>, x: &[Cplx<T>]) {
    for (a, &b) in y.iter_mut().zip(x) {
        *a += s * b;
    }
}

pub fn cast_vec<T: Real, U: Real>(v: &[Cplx<T>]) -> Vec<Cplx<U>> {
    v.iter().map(|z| z.cast()).collect()
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
    swaps: usize,
}

impl<T: Real> Lu<T> {
    /// Factorizes `a`; fails only on an exactly zero pivot column.
    pub fn new(a: &Mat<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(RbError::Dimension(format!("LU of {}x{} matrix", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut nz_rows = Vec::with_capacity(n);
        let mut nz_cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut p = j;
            let mut best = lu[(j, j)].abs1();
            for i in j + 1..n {
                let v = lu[(i, j)].abs1();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(RbError::Singular(format!("zero pivot in column {j}")));
            }
            if p != j {
                for c in 0..n {
                    lu.data.swap(j * n + c, p * n + c);
                }
                perm.swap(j, p);
                swaps += 1;
            }
            let piv = lu[(j, j)];
            nz_rows.clear();
            for i in j + 1..n {
                if !lu[(i, j)].is_zero() {
                    nz_rows.push(i);
                }
            }
            if nz_rows.is_empty() {
                continue;
            }
            nz_cols.clear();
            for c in j + 1..n {
                if !lu[(j, c)].is_zero() {
                    nz_cols.push(c);
                }
            }
            for &i in &nz_rows {
                let l = lu[(i, j)] / piv;
                lu[(i, j)] = l;
                for &c in &nz_cols {
                    let u = lu[(j, c)];
                    lu[(i, c)] -= l * u;
                }
            }
        }
        Ok(Lu { lu, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<Cplx<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for k in 0..i {
                if !row[k].is_zero() {
                    acc -= row[k] * x[k];
                }
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for k in i + 1..n {
                if !row[k].is_zero() {
                    acc -= row[k] * x[k];
                }
            }
            x[i] = acc / row[i];
        }
        x
    }

    /// Moduli of the pivots (diagonal of U).
    pub fn pivots(&self) -> Vec<T> {
        (0..self.lu.rows).map(|i| self.lu[(i, i)].abs()).collect()
    }

    pub fn min_pivot(&self) -> T {
        self.pivots().into_iter().fold(None, |m: Option<T>, p| match m {
            Some(v) if v <= p => Some(v),
            _ => Some(p),
        })
        .unwrap_or_else(T::zero)
    }

    pub fn det(&self) -> Cplx<T> {
        let mut d = Cplx::one();
        for i in 0..self.lu.rows {
            d *= self.lu[(i, i)];
        }
        if self.swaps % 2 == 1 {
            -d
        } else {
            d
        }
    }

    pub fn inverse(&self) -> Mat<T> {
        let n = self.dim();
        let cols: Vec<Vec<Cplx<T>>> = (0..n)
            .map(|j| {
                let mut e = vec![Cplx::zero(); n];
                e[j] = Cplx::one();
                self.solve(&e)
            })
            .collect();
        Mat::from_columns(&cols)
    }
}

/// LU with complete pivoting, `P A Q = L U`, truncated at the numerical rank.
///
/// Elimination stops once the largest remaining entry is below
/// `rel_tol * max |A_ij|`. [`RankRevealingLu::solve`] returns the basic
/// solution of a consistent system: unknowns beyond the rank are zero and
/// the trailing equations are not used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankRevealingLu<T> {
    lu: Mat<T>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    rank: usize,
}

impl<T: Real> RankRevealingLu<T> {
    pub fn new(a: &Mat<T>, rel_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(RbError::Dimension(format!("LU of {}x{} matrix", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        let tol = T::from_f64(rel_tol) * a.max_abs();
        let mut rank = n;
        for j in 0..n {
            let (mut pi, mut pj, mut best) = (j, j, T::zero());
            for i in j..n {
                for c in j..n {
                    let v = lu[(i, c)].abs1();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = c;
                    }
                }
            }
            if !(best > tol) || best == T::zero() {
                rank = j;
                break;
            }
            if pi != j {
                for c in 0..n {
                    lu.data.swap(j * n + c, pi * n + c);
                }
                row_perm.swap(j, pi);
            }
            if pj != j {
                for r in 0..n {
                    lu.data.swap(r * n + j, r * n + pj);
                }
                col_perm.swap(j, pj);
            }
            let piv = lu[(j, j)];
            for i in j + 1..n {
                if lu[(i, j)].is_zero() {
                    continue;
                }
                let l = lu[(i, j)] / piv;
                lu[(i, j)] = l;
                for c in j + 1..n {
                    let u = lu[(j, c)];
                    if !u.is_zero() {
                        lu[(i, c)] -= l * u;
                    }
                }
            }
        }
        Ok(RankRevealingLu { lu, row_perm, col_perm, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Moduli of the retained pivots.
    pub fn pivots(&self) -> Vec<T> {
        (0..self.rank).map(|i| self.lu[(i, i)].abs()).collect()
    }

    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.lu.rows;
        let r = self.rank;
        assert_eq!(b.len(), n);
        let mut y: Vec<Cplx<T>> = self.row_perm[..r].iter().map(|&p| b[p]).collect();
        for i in 0..r {
            let mut acc = y[i];
            for k in 0..i {
                acc -= self.lu[(i, k)] * y[k];
            }
            y[i] = acc;
        }
        for i in (0..r).rev() {
            let mut acc = y[i];
            for k in i + 1..r {
                acc -= self.lu[(i, k)] * y[k];
            }
            y[i] = acc / self.lu[(i, i)];
        }
        let mut x = vec![Cplx::zero(); n];
        for (i, v) in y.into_iter().enumerate() {
            x[self.col_perm[i]] = v;
        }
        x
    }
}

/// 1-norm condition number `||A||_1 ||A^-1||_1`, via an explicit inverse.
pub fn cond1<T: Real>(a: &Mat<T>) -> Result<f64> {
    let lu = Lu::new(a)?;
    Ok(a.norm1() * lu.inverse().norm1())
}

/// Cholesky factorization `G = L L^H` of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(g: &Mat<T>) -> Result<Self> {
        if !g.is_square() {
            return Err(RbError::Dimension(format!("Cholesky of {}x{} matrix", g.rows, g.cols)));
        }
        let n = g.rows;
        // lower triangle of `a` is overwritten by L
        let mut a = g.clone();
        let mut nz = Vec::with_capacity(n);
        for j in 0..n {
            let d = a[(j, j)].re;
            if !(d > T::zero()) || !d.is_finite() {
                return Err(RbError::NotPositiveDefinite(format!(
                    "non-positive pivot {:e} in column {j}",
                    d.to_f64()
                )));
            }
            let ljj = d.sqrt();
            a[(j, j)] = Cplx::real(ljj);
            nz.clear();
            for i in j + 1..n {
                if !a[(i, j)].is_zero() {
                    let v = a[(i, j)].scale(T::one() / ljj);
                    a[(i, j)] = v;
                    nz.push(i);
                }
            }
            for (ii, &i) in nz.iter().enumerate() {
                let lij = a[(i, j)];
                for &k in &nz[..=ii] {
                    let lkj = a[(k, j)];
                    a[(i, k)] -= lij * lkj.conj();
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                a[(i, j)] = Cplx::zero();
            }
        }
        Ok(Cholesky { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn factor(&self) -> &Mat<T> {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut acc = y[i];
            for k in 0..i {
                if !row[k].is_zero() {
                    acc -= row[k] * y[k];
                }
            }
            y[i] = acc.scale(T::one() / row[i].re);
        }
        y
    }

    /// Solves `L^H x = y`.
    pub fn backward(&self, y: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.l.rows;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let xi = x[i].scale(T::one() / self.l[(i, i)].re);
            x[i] = xi;
            let row = self.l.row(i);
            for k in 0..i {
                if !row[k].is_zero() {
                    x[k] -= row[k].conj() * xi;
                }
            }
        }
        x
    }

    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.backward(&self.forward(b))
    }
}

fn to_nalgebra(a: &Mat<f64>) -> nalgebra::DMatrix<nalgebra::Complex<f64>> {
    nalgebra::DMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        let z = a[(i, j)];
        nalgebra::Complex::new(z.re, z.im)
    })
}

fn from_nalgebra(a: &nalgebra::DMatrix<nalgebra::Complex<f64>>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        C64::new(z.re, z.im)
    })
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Mat<f64>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Spectral condition number.
pub fn cond2(a: &Mat<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Full SVD `A = U diag(s) V^H`, singular values in decreasing order.
pub fn svd(a: &Mat<f64>) -> (Mat<f64>, Vec<f64>, Mat<f64>) {
    let m = to_nalgebra(a);
    let dec = m.svd(true, true);
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V^T");
    let s: Vec<f64> = dec.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let u = from_nalgebra(&u);
    let vh = from_nalgebra(&v_t);
    let k = s.len();
    let u_sorted = Mat::from_fn(u.rows(), k, |i, j| u[(i, order[j])]);
    let v_sorted = Mat::from_fn(vh.cols(), k, |i, j| vh[(order[j], i)].conj());
    let s_sorted = order.iter().map(|&i| s[i]).collect();
    (u_sorted, s_sorted, v_sorted)
}
