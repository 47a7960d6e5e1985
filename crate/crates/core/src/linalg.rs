//! Dense symmetric-matrix primitives used by every solver.
//!
//! Matrices here are small (a few hundred rows at most), so everything is
//! stored densely in row-major order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense symmetric matrix. Both triangles are stored and kept identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix by evaluating `f(i, j)` on the upper triangle and mirroring.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Builds from square rows; the upper triangle is authoritative.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
        }
        Ok(Self::from_upper_fn(dim, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Sets `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mat_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.dim, x.len())?;
        Ok((0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| v * c).collect() }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<()> {
        check_len(self.dim, other.dim)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// Frobenius-norm-free max absolute entry, handy for tolerances.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Dense row-major rectangular matrix (test-versus-train kernel blocks, data).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_len(cols, r.len())?;
        }
        Ok(Self { rows: rows.len(), cols, data: rows.iter().flatten().copied().collect() })
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mat_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn axpy(&mut self, c: T, other: &Self) -> Result<()> {
        check_len(self.rows, other.rows)?;
        check_len(self.cols, other.cols)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        check_len(self.rows, other.rows)?;
        check_len(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        })
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }
}

#[inline]
pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

enum Factor<T> {
    /// Lower-triangular Cholesky factor, row-major.
    Cholesky(Vec<T>),
    /// LU with partial pivoting: packed factors and row permutation.
    Lu(Vec<T>, Vec<usize>),
}

/// Factorization of `A + shift * I`, reusable across right-hand sides.
pub struct ShiftedFactor<T> {
    n: usize,
    shifted: Vec<T>,
    factor: Factor<T>,
}

impl<T: Scalar> ShiftedFactor<T> {
    pub fn new(a: &SymMatrix<T>, shift: T) -> Result<Self> {
        if !(shift > T::zero()) || !shift.is_finite() {
            return Err(Error::InvalidArgument(format!("shift must be positive, got {shift}")));
        }
        let n = a.dim();
        let mut shifted = a.as_slice().to_vec();
        for i in 0..n {
            shifted[i * n + i] += shift;
        }
        if shifted.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite matrix entry".into()));
        }
        let factor = match cholesky(&shifted, n) {
            Some(l) => Factor::Cholesky(l),
            None => {
                let (lu, perm) = lu_partial_pivot(&shifted, n).ok_or_else(|| {
                    Error::NumericalFailure("A + shift*I is singular to working precision".into())
                })?;
                Factor::Lu(lu, perm)
            }
        };
        Ok(Self { n, shifted, factor })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Cholesky(_))
    }

    /// Solves `(A + shift I) x = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        check_len(self.n, b.len())?;
        let mut x = self.solve_raw(b);
        let r: Vec<T> = (0..self.n)
            .map(|i| {
                let row = &self.shifted[i * self.n..(i + 1) * self.n];
                b[i] - row.iter().zip(&x).map(|(&a, &v)| a * v).sum::<T>()
            })
            .collect();
        let dx = self.solve_raw(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite solution".into()));
        }
        Ok(x)
    }

    fn solve_raw(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        match &self.factor {
            Factor::Cholesky(l) => {
                let mut z = b.to_vec();
                for i in 0..n {
                    let mut s = z[i];
                    for k in 0..i {
                        s -= l[i * n + k] * z[k];
                    }
                    z[i] = s / l[i * n + i];
                }
                for i in (0..n).rev() {
                    let mut s = z[i];
                    for k in i + 1..n {
                        s -= l[k * n + i] * z[k];
                    }
                    z[i] = s / l[i * n + i];
                }
                z
            }
            Factor::Lu(lu, perm) => {
                let mut z: Vec<T> = perm.iter().map(|&p| b[p]).collect();
                for i in 0..n {
                    let mut s = z[i];
                    for k in 0..i {
                        s -= lu[i * n + k] * z[k];
                    }
                    z[i] = s;
                }
                for i in (0..n).rev() {
                    let mut s = z[i];
                    for k in i + 1..n {
                        s -= lu[i * n + k] * z[k];
                    }
                    z[i] = s / lu[i * n + i];
                }
                z
            }
        }
    }
}

fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

fn lu_partial_pivot<T: Scalar>(a: &[T], n: usize) -> Option<(Vec<T>, Vec<usize>)> {
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = lu.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > tiny) {
            return None;
        }
        if piv != k {
            for j in 0..n {
                lu.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            lu[i * n + k] = f;
            for j in k + 1..n {
                let u = lu[k * n + j];
                lu[i * n + j] -= f * u;
            }
        }
    }
    Some((lu, perm))
}

/// Solves `(A + shift I) x = b`.
pub fn spd_solve<T: Scalar>(a: &SymMatrix<T>, shift: T, b: &[T]) -> Result<Vec<T>> {
    check_len(a.dim(), b.len())?;
    ShiftedFactor::new(a, shift)?.solve(b)
}

/// Elementwise (Schur) product.
pub fn hadamard<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    check_len(a.dim(), b.dim())?;
    Ok(SymMatrix {
        dim: a.dim,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect(),
    })
}

/// `x^T A x` evaluated as the plain double sum.
pub fn quadratic_form<T: Scalar>(x: &[T], a: &SymMatrix<T>) -> Result<T> {
    check_len(a.dim(), x.len())?;
    let mut acc = T::zero();
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = a.row(i);
        let inner: T = row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum();
        acc += xi * inner;
    }
    Ok(acc)
}

/// Smallest and largest eigenvalue.
pub fn extremal_eigs<T: Scalar>(a: &SymMatrix<T>) -> Result<(T, T)> {
    let ev = eigenvalues(a)?;
    Ok((ev[0], ev[ev.len() - 1]))
}

/// All eigenvalues in ascending order (Householder tridiagonalization followed
/// by implicit QL). Eigenvectors are not formed.
pub fn eigenvalues<T: Scalar>(a: &SymMatrix<T>) -> Result<Vec<T>> {
    let n = a.dim();
    if n == 1 {
        return Ok(vec![a.get(0, 0)]);
    }
    let mut w: Vec<Vec<T>> = a.to_rows();
    let (mut d, mut e) = tridiagonalize(&mut w);
    tql(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(d)
}

const QL_MAX_SWEEPS: usize = 60;

/// Reduces `a` in place; returns (diagonal, subdiagonal) with `e[i]` coupling
/// `i - 1` and `i` (`e[0] == 0`).
fn tridiagonalize<T: Scalar>(a: &mut [Vec<T>]) -> (Vec<T>, Vec<T>) {
    let n = a.len();
    let two = T::of(2.0);
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let scale: T = (0..=l).map(|k| a[i][k].abs()).sum();
            if scale == T::zero() {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f = T::zero();
                for j in 0..=l {
                    let mut g = T::zero();
                    for k in 0..=j {
                        g += a[j][k] * a[i][k];
                    }
                    for k in j + 1..=l {
                        g += a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i][j];
                }
                let hh = f / (h * two);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let upd = f * e[k] + g * a[i][k];
                        a[j][k] -= upd;
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i][i];
    }
    e[0] = T::zero();
    (d, e)
}

fn tql<T: Scalar>(d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    let two = T::of(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_SWEEPS {
                return Err(Error::ConvergenceFailure(QL_MAX_SWEEPS));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed_r = if g >= T::zero() { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix<f64> {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix<f64> {
        let k = rng.gen_range(1..=n);
        let g: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        SymMatrix::from_upper_fn(n, |i, j| g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum())
    }

    #[test]
    fn solve_examples() {
        let x = spd_solve(&SymMatrix::zeros(2), 1.0, &[3.0, -2.0]).unwrap();
        assert_eq!(x, vec![3.0, -2.0]);
        let x = spd_solve(&SymMatrix::identity(2), 1.0, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-15);
        let x = spd_solve(&m2(2.0, 1.0, 2.0), 1.0, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(x[0], 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -1.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_errors() {
        assert!(matches!(
            spd_solve(&SymMatrix::<f64>::identity(2), 1.0, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(spd_solve(&SymMatrix::<f64>::identity(2), 0.0, &[1.0, 1.0]).is_err());
        // -I shifted by 1 is exactly singular
        let neg = SymMatrix::<f64>::identity(2).scaled(-1.0);
        assert!(matches!(spd_solve(&neg, 1.0, &[1.0, 1.0]), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn indefinite_system_uses_pivoted_fallback() {
        let a = m2(-3.0, 0.0, 1.0);
        let f = ShiftedFactor::new(&a, 1.0).unwrap();
        assert!(!f.is_cholesky());
        let x = f.solve(&[4.0, 2.0]).unwrap();
        assert_abs_diff_eq!(x[0], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_residual_on_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..=30);
            let a = random_psd(&mut rng, n);
            let lambda = 10f64.powf(rng.gen_range(-4.0..1.0));
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = spd_solve(&a, lambda, &b).unwrap();
            let ax = a.mat_vec(&x).unwrap();
            let res: f64 = ax
                .iter()
                .zip(&x)
                .zip(&b)
                .map(|((ax, x), b)| (ax + lambda * x - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-10 * bn, "residual {res} vs {bn}");
        }
    }

    #[test]
    fn hadamard_examples() {
        let a = m2(1.0, 2.0, 3.0);
        let ones = m2(1.0, 1.0, 1.0);
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        let c = hadamard(&m2(1.0, 2.0, 4.0), &m2(2.0, 0.0, 2.0)).unwrap();
        assert_eq!(c, m2(2.0, 0.0, 8.0));
        assert_eq!(hadamard(&a, &a).unwrap(), m2(1.0, 4.0, 9.0));
        assert!(hadamard(&a, &SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn quadratic_form_examples() {
        let a = m2(2.0, 1.0, 2.0);
        assert_eq!(quadratic_form(&[0.0, 0.0], &a).unwrap(), 0.0);
        assert_eq!(quadratic_form(&[1.0, 1.0], &SymMatrix::identity(2)).unwrap(), 2.0);
        assert_eq!(quadratic_form(&[1.0, 0.0], &a).unwrap(), 2.0);
        assert!(quadratic_form(&[1.0], &a).is_err());
    }

    #[test]
    fn eig_examples() {
        let (lo, hi) = extremal_eigs(&SymMatrix::<f64>::identity(3)).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        let (lo, hi) = extremal_eigs(&SymMatrix::from_diag(&[1.0, 5.0])).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 5.0, epsilon = 1e-12);
        let (lo, hi) = extremal_eigs(&m2(2.0, 1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_match_trace_and_known_spectrum() {
        // Q diag(ev) Q^T with a Householder Q has a known spectrum.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 3, 5, 10, 25] {
            let ev: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let q = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - 2.0 * v[i] * v[j] / vv;
            let a = SymMatrix::from_upper_fn(n, |i, j| (0..n).map(|k| q(i, k) * ev[k] * q(j, k)).sum());
            let got = eigenvalues(&a).unwrap();
            let mut want = ev.clone();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn schur_product_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..=15);
            let a = random_psd(&mut rng, n);
            let b = random_psd(&mut rng, n);
            let (lo, _) = extremal_eigs(&hadamard(&a, &b).unwrap()).unwrap();
            assert!(lo >= -1e-8, "{lo}");
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = spd_solve(&a, 1.0, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.375).abs() < 1e-6 && (x[1] + 0.125).abs() < 1e-6);
        let (lo, hi) = extremal_eigs(&a).unwrap();
        assert!((lo - 1.0).abs() < 1e-5 && (hi - 3.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn hadamard_commutes(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let a = SymMatrix::from_upper_fn(3, |i, j| vals[i * 3 + j]);
            let b = SymMatrix::from_upper_fn(3, |i, j| vals[3 + i + j]);
            prop_assert_eq!(hadamard(&a, &b).unwrap(), hadamard(&b, &a).unwrap());
        }

        #[test]
        fn quadratic_form_matches_mat_vec(
            vals in proptest::collection::vec(-10.0f64..10.0, 16),
            x in proptest::collection::vec(-10.0f64..10.0, 4),
        ) {
            let a = SymMatrix::from_upper_fn(4, |i, j| vals[i * 4 + j]);
            let q = quadratic_form(&x, &a).unwrap();
            let ax = a.mat_vec(&x).unwrap();
            let r: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            let scale = 1.0 + q.abs().max(r.abs());
            prop_assert!((q - r).abs() <= 1e-12 * scale);
        }
    }
}
