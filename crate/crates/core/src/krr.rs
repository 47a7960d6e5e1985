//! Kernel ridge regression in the dual, and the kernel-learning objective
//!
//! ```text
//! F(mu) = y^T (K_mu + lambda I)^{-1} y + beta * |mu|^2
//! ```
//!
//! together with its gradient and Hessian for linear and quadratic
//! combinations. `alpha = (K_mu + lambda I)^{-1} y` is recomputed from the
//! current weights on every call.
//!
//! Derivatives, with `A = K_mu + lambda I` and `L = sum_k mu_k K_k`:
//!
//! * linear: `dF/dmu_k = -a^T K_k a + 2 beta mu_k`,
//!   `d2F/dmu_j dmu_k = 2 (K_j a)^T A^{-1} (K_k a) + 2 beta delta_jk`.
//! * quadratic, with `U_k = L o K_k`: `dF/dmu_k = -2 a^T U_k a + 2 beta mu_k`,
//!   `d2F/dmu_j dmu_k = 8 (U_j a)^T A^{-1} (U_k a) - 2 a^T (K_j o K_k) a + 2 beta delta_jk`.
//!
//! The linear-case Hessian carries a factor 2 on the first term; it is what
//! differentiating the gradient gives and what finite differences confirm.

use crate::error::{Error, Result};
use crate::kernels::{BaseKernelBank, CombinationParams, Degree};
use crate::linalg::{check_len, quadratic_form, ShiftedFactor, SymMatrix};
use crate::scalar::{dot, Scalar};

/// A fitted dual KRR model.
#[derive(Debug, Clone)]
pub struct KrrModel<T> {
    pub alpha: Vec<T>,
    pub lambda: T,
    pub params: CombinationParams<T>,
}

/// `alpha = (K_mu + lambda I)^{-1} y`.
pub fn fit<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
) -> Result<KrrModel<T>> {
    check_len(bank.num_train(), y.len())?;
    let gram = bank.combined_gram(params)?;
    let alpha = ShiftedFactor::new(&gram, lambda)?.solve(y)?;
    Ok(KrrModel { alpha, lambda, params: params.clone() })
}

/// Fits directly on a Gram matrix.
pub fn fit_gram<T: Scalar>(gram: &SymMatrix<T>, lambda: T, y: &[T]) -> Result<Vec<T>> {
    check_len(gram.dim(), y.len())?;
    ShiftedFactor::new(gram, lambda)?.solve(y)
}

/// Test predictions `K_cross(mu) alpha`.
pub fn predict<T: Scalar>(model: &KrrModel<T>, bank: &BaseKernelBank<T>) -> Result<Vec<T>> {
    let cross = bank.combined_cross(&model.params)?;
    cross.mat_vec(&model.alpha)
}

/// Value of the dual objective `2 a^T y - a^T (K + lambda I) a`.
pub fn dual_value<T: Scalar>(gram: &SymMatrix<T>, lambda: T, y: &[T], alpha: &[T]) -> Result<T> {
    check_len(gram.dim(), y.len())?;
    let two = T::of(2.0);
    Ok(two * dot(alpha, y) - quadratic_form(alpha, gram)? - lambda * dot(alpha, alpha))
}

/// Objective, dual vector and gradient from a single factorization.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub objective: T,
    pub alpha: Vec<T>,
    pub gradient: Vec<T>,
}

struct Prepared<T> {
    lin: SymMatrix<T>,
    factor: ShiftedFactor<T>,
    alpha: Vec<T>,
}

fn prepare<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
) -> Result<Prepared<T>> {
    check_len(bank.num_train(), y.len())?;
    check_len(bank.num_kernels(), params.mu.len())?;
    let lin = bank.linear_gram(&params.mu)?;
    let factor = match params.degree {
        Degree::Linear => ShiftedFactor::new(&lin, lambda)?,
        Degree::Quadratic => ShiftedFactor::new(&crate::linalg::hadamard(&lin, &lin)?, lambda)?,
    };
    let alpha = factor.solve(y)?;
    Ok(Prepared { lin, factor, alpha })
}

/// `(dK_mu/dmu_k) alpha` for every `k`: `K_k alpha` (linear) or `2 U_k alpha`
/// (quadratic).
fn derivative_products<T: Scalar>(
    bank: &BaseKernelBank<T>,
    degree: Degree,
    lin: &SymMatrix<T>,
    alpha: &[T],
) -> Vec<Vec<T>> {
    let m = alpha.len();
    let two = T::of(2.0);
    bank.train_grams()
        .iter()
        .map(|g| match degree {
            Degree::Linear => g.mat_vec(alpha).expect("matching dims"),
            Degree::Quadratic => (0..m)
                .map(|i| {
                    let (lr, gr) = (lin.row(i), g.row(i));
                    two * (0..m).map(|j| lr[j] * gr[j] * alpha[j]).sum::<T>()
                })
                .collect(),
        })
        .collect()
}

pub fn evaluate<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
) -> Result<Evaluation<T>> {
    let prep = prepare(bank, params, lambda, y)?;
    let two = T::of(2.0);
    let products = derivative_products(bank, params.degree, &prep.lin, &prep.alpha);
    let gradient = products
        .iter()
        .zip(&params.mu)
        .map(|(d, &mu)| -dot(&prep.alpha, d) + two * beta * mu)
        .collect();
    let objective = dot(y, &prep.alpha) + beta * dot(&params.mu, &params.mu);
    Ok(Evaluation { objective, alpha: prep.alpha, gradient })
}

/// `F(mu) = y^T (K_mu + lambda I)^{-1} y + beta |mu|^2`.
pub fn objective<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
) -> Result<T> {
    let prep = prepare(bank, params, lambda, y)?;
    Ok(dot(y, &prep.alpha) + beta * dot(&params.mu, &params.mu))
}

pub fn gradient<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
) -> Result<Vec<T>> {
    Ok(evaluate(bank, params, lambda, y, beta)?.gradient)
}

/// Full `p x p` Euclidean Hessian of `F`.
pub fn hessian<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
) -> Result<Vec<Vec<T>>> {
    let prep = prepare(bank, params, lambda, y)?;
    let p = bank.num_kernels();
    let two = T::of(2.0);
    let products = derivative_products(bank, params.degree, &prep.lin, &prep.alpha);
    let solved: Vec<Vec<T>> = products.iter().map(|d| prep.factor.solve(d)).collect::<Result<_>>()?;
    let mut h = vec![vec![T::zero(); p]; p];
    for j in 0..p {
        for k in j..p {
            // 2 (G_j a)^T A^{-1} (G_k a), G_k = dK_mu/dmu_k
            let mut v = two * dot(&products[j], &solved[k]);
            if params.degree == Degree::Quadratic {
                // second derivative of K_mu is 2 K_j o K_k
                v -= two * hadamard_form(&prep.alpha, bank.train_gram(j), bank.train_gram(k));
            }
            if j == k {
                v += two * beta;
            }
            h[j][k] = v;
            h[k][j] = v;
        }
    }
    Ok(h)
}

/// `a^T (A o B) a`
fn hadamard_form<T: Scalar>(a: &[T], x: &SymMatrix<T>, z: &SymMatrix<T>) -> T {
    let m = a.len();
    (0..m)
        .map(|i| {
            let (xr, zr) = (x.row(i), z.row(i));
            a[i] * (0..m).map(|j| xr[j] * zr[j] * a[j]).sum::<T>()
        })
        .sum()
}

/// `u^T Hess F(mu) u` for a unit vector `u`.
pub fn hessian_quadratic_form<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
    u: &[T],
) -> Result<T> {
    check_len(bank.num_kernels(), u.len())?;
    let n = dot(u, u).sqrt();
    if (n - T::one()).abs() > T::of(1e-10).max(T::epsilon() * T::of(16.0)) {
        return Err(Error::InvalidArgument(format!("direction must have unit norm, got {n}")));
    }
    let h = hessian(bank, params, lambda, y, beta)?;
    Ok(h.iter().zip(u).map(|(row, &ui)| ui * dot(row, u)).sum())
}

/// Euclidean Hessian-vector product.
pub fn hessian_vec<T: Scalar>(
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    lambda: T,
    y: &[T],
    beta: T,
    v: &[T],
) -> Result<Vec<T>> {
    check_len(bank.num_kernels(), v.len())?;
    let h = hessian(bank, params, lambda, y, beta)?;
    Ok(h.iter().map(|row| dot(row, v)).collect())
}
