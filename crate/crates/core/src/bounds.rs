//! Rademacher and margin generalization bounds for learned kernel
//! combinations, and Monte-Carlo estimates of the curvature constants that
//! separate the convex and concave regimes of the quadratic-combination
//! KRR objective.
//!
//! With `K_u = sum_k u_k K_k` (unit `u`) and `K_mu = sum_k mu_k K_k`:
//!   B = max_u lmax(K_u o K_u)          D = min_u lmin(K_u o K_u)
//!   C = max_{u,mu} |K_mu o K_u|^2      H = max_{u,mu} |(K_mu o K_u)^-1|^2
//!   E = max_mu lmax(K_mu o K_mu)
//! The objective is concave on the region for `lambda >= 4C/D` (when D > 0)
//! and convex for `lambda <= E log(4 / (E H B))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BaseKernelBank, CombinationParams, Degree};
use crate::krr;
use crate::linalg::{eigenvalues, hadamard, SymMatrix};
use crate::mkl::{FeasibleRegion, NormOrder};
use crate::scalar::{dot, Scalar};

/// `sqrt(23/11)`.
pub fn eta0<T: Scalar>() -> T {
    T::of(23.0 / 11.0).sqrt()
}

/// `sqrt(46/11)`.
pub fn eta1<T: Scalar>() -> T {
    T::of(46.0 / 11.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs<T> {
    pub p: usize,
    /// Bound on `sqrt(K_k(x, x))`.
    #[serde(rename = "R")]
    pub r: T,
    pub m: usize,
    pub rho: T,
    pub delta: T,
    pub family: Family,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.p == 0 {
            return bad("p must be positive");
        }
        if self.m == 0 {
            return bad("m must be positive");
        }
        if !(self.r > T::zero()) || !self.r.is_finite() {
            return bad("R must be positive");
        }
        if !(self.rho > T::zero()) || !self.rho.is_finite() {
            return bad("rho must be positive");
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return bad("delta must lie in (0, 1)");
        }
        Ok(())
    }

    /// `p^{1/4} R` (linear) or `p^{1/2} R^2` (polynomial).
    fn capacity(&self) -> T {
        let p = T::from_usize_lossy(self.p);
        match self.family {
            Family::Linear => p.sqrt().sqrt() * self.r,
            Family::Polynomial => p.sqrt() * self.r * self.r,
        }
    }
}

/// Empirical Rademacher complexity bound of the combined-kernel family.
pub fn rademacher_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    inputs.validate()?;
    Ok(eta0::<T>() * inputs.capacity() / T::from_usize_lossy(inputs.m).sqrt())
}

/// Margin bound: `R_rho + eta1 * capacity / (rho sqrt m) + 3 sqrt(log(2/delta) / (2m))`.
pub fn generalization_bound<T: Scalar>(inputs: &BoundInputs<T>, empirical_margin_loss: T) -> Result<T> {
    inputs.validate()?;
    if !(empirical_margin_loss >= T::zero() && empirical_margin_loss <= T::one()) {
        return Err(Error::InvalidArgument("empirical margin loss must lie in [0, 1]".into()));
    }
    let m = T::from_usize_lossy(inputs.m);
    let two = T::of(2.0);
    let complexity = eta1::<T>() * inputs.capacity() / (inputs.rho * m.sqrt());
    let confidence = T::of(3.0) * ((two / inputs.delta).ln() / (two * m)).sqrt();
    Ok(empirical_margin_loss + complexity + confidence)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureConstants<T> {
    /// Lower estimate of the max-constant.
    pub b: T,
    pub c: T,
    /// `max(d_raw, 0)`; upper estimate of the min-constant.
    pub d: T,
    /// Smallest sampled `lmin(K_u o K_u)`, possibly negative.
    pub d_raw: T,
    pub e: T,
    pub h: T,
    /// `4C/D`, or infinite when `D = 0`.
    pub concavity_threshold: T,
    pub concavity_unbounded: bool,
    /// `E log(4/(E H B))`; `None` when `E H B >= 4`.
    pub convexity_threshold: Option<T>,
    pub sample_count: usize,
    /// Samples skipped in the `H` estimate because `K_mu o K_u` was singular.
    pub singular_samples: usize,
    pub seed: u64,
}

/// Per-index generator, so that sample `i` does not depend on the sample count.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn unit_vector<T: Scalar>(rng: &mut ChaCha8Rng, p: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| T::of(x / n)).collect();
        }
    }
}

/// Uniform on the boundary of the region, restricted to the orthant by
/// rejection; falls back to projecting the last draw.
fn boundary_point<T: Scalar>(rng: &mut ChaCha8Rng, region: &FeasibleRegion<T>) -> Result<Vec<T>> {
    let p = region.dim();
    let mut last = Vec::new();
    for _ in 0..256 {
        let dir: Vec<T> = match region.q {
            NormOrder::L2 => unit_vector(rng, p),
            NormOrder::L1 => {
                // exponential magnitudes normalized to unit L1 norm, random signs
                let e: Vec<f64> = (0..p).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|&x| T::of(if rng.gen_bool(0.5) { x / s } else { -x / s })).collect()
            }
        };
        let mu: Vec<T> = region.mu0.iter().zip(&dir).map(|(&c, &d)| c + region.radius * d).collect();
        if mu.iter().all(|&v| v >= T::zero()) {
            return Ok(mu);
        }
        last = mu;
    }
    region.project(&last)
}

struct Sample<T> {
    b: T,
    d: T,
    c: T,
    e: T,
    h: Option<T>,
}

fn combine<T: Scalar>(bank: &BaseKernelBank<T>, w: &[T]) -> Result<SymMatrix<T>> {
    bank.linear_gram(w)
}

fn one_sample<T: Scalar>(bank: &BaseKernelBank<T>, region: &FeasibleRegion<T>, seed: u64, i: usize) -> Result<Sample<T>> {
    let mut rng = sample_rng(seed, i);
    let u = unit_vector::<T>(&mut rng, bank.num_kernels());
    let mu = boundary_point(&mut rng, region)?;
    let ku = combine(bank, &u)?;
    let kmu = combine(bank, &mu)?;
    let su = eigenvalues(&hadamard(&ku, &ku)?)?;
    let smu = eigenvalues(&hadamard(&kmu, &kmu)?)?;
    let mixed = eigenvalues(&hadamard(&kmu, &ku)?)?;
    let top = mixed.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let bottom = mixed.iter().fold(T::infinity(), |a, &v| a.min(v.abs()));
    // singular relative to the working precision
    let scale = top.max(T::min_positive_value());
    let h = if bottom > scale * T::epsilon() * T::from_usize_lossy(bank.num_train()) * T::of(16.0) {
        Some(T::one() / (bottom * bottom))
    } else {
        None
    };
    Ok(Sample { b: *su.last().expect("m >= 1"), d: su[0], c: top * top, e: *smu.last().expect("m >= 1"), h })
}

/// Monte-Carlo estimates from `n_samples` pairs `(u, mu)`; `u` uniform on
/// the unit sphere, `mu` uniform on the region boundary. Sample `i` is a
/// function of `(seed, i)` only, so running extremes are monotone in the
/// sample count.
pub fn estimate_curvature_constants<T: Scalar>(
    bank: &BaseKernelBank<T>,
    region: &FeasibleRegion<T>,
    n_samples: usize,
    seed: u64,
) -> Result<CurvatureConstants<T>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if region.dim() != bank.num_kernels() {
        return Err(Error::DimensionMismatch { expected: bank.num_kernels(), got: region.dim() });
    }
    let samples: Vec<Sample<T>> =
        (0..n_samples).into_par_iter().map(|i| one_sample(bank, region, seed, i)).collect::<Result<_>>()?;
    let mut b = T::neg_infinity();
    let mut d_raw = T::infinity();
    let mut c = T::zero();
    let mut e = T::neg_infinity();
    let mut h = T::zero();
    let mut singular = 0;
    for s in &samples {
        b = b.max(s.b);
        d_raw = d_raw.min(s.d);
        c = c.max(s.c);
        e = e.max(s.e);
        match s.h {
            Some(v) => h = h.max(v),
            None => singular += 1,
        }
    }
    let d = d_raw.max(T::zero());
    let concavity_unbounded = !(d > T::zero());
    let concavity_threshold = if concavity_unbounded { T::infinity() } else { T::of(4.0) * c / d };
    let ehb = e * h * b;
    let convexity_threshold = if ehb > T::zero() && ehb < T::of(4.0) && singular < n_samples {
        Some(e * (T::of(4.0) / ehb).ln())
    } else {
        None
    };
    Ok(CurvatureConstants {
        b,
        c,
        d,
        d_raw,
        e,
        h,
        concavity_threshold,
        concavity_unbounded,
        convexity_threshold,
        sample_count: n_samples,
        singular_samples: singular,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignProbe<T> {
    pub frac_nonneg: T,
    pub frac_nonpos: T,
}

/// Fractions of random unit directions along which the quadratic-combination
/// Hessian (`beta = 0`) is `>= -1e-8` and `<= 1e-8`.
pub fn hessian_sign_probe<T: Scalar>(
    bank: &BaseKernelBank<T>,
    mu: &[T],
    lambda: T,
    y: &[T],
    n_directions: usize,
    seed: u64,
) -> Result<SignProbe<T>> {
    if n_directions == 0 {
        return Err(Error::InvalidArgument("n_directions must be at least 1".into()));
    }
    let h = krr::hessian(bank, &CombinationParams::new(mu.to_vec(), Degree::Quadratic), lambda, y, T::zero())?;
    let tol = T::of(1e-8);
    let (mut nonneg, mut nonpos) = (0usize, 0usize);
    for i in 0..n_directions {
        let u = unit_vector::<T>(&mut sample_rng(seed, i), mu.len());
        let v: T = h.iter().zip(&u).map(|(row, &ui)| ui * dot(row, &u)).sum();
        nonneg += usize::from(v >= -tol);
        nonpos += usize::from(v <= tol);
    }
    let n = T::from_usize_lossy(n_directions);
    Ok(SignProbe { frac_nonneg: T::from_usize_lossy(nonneg) / n, frac_nonpos: T::from_usize_lossy(nonpos) / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn inputs(p: usize, r: f64, m: usize, family: Family) -> BoundInputs<f64> {
        BoundInputs { p, r, m, rho: 1.0, delta: 0.05, family }
    }

    #[test]
    fn rademacher_examples() {
        let c = (23.0f64 / 11.0).sqrt();
        assert_abs_diff_eq!(rademacher_bound(&inputs(1, 1.0, 1, Family::Linear)).unwrap(), c, epsilon = 1e-15);
        assert_abs_diff_eq!(rademacher_bound(&inputs(1, 1.0, 1, Family::Polynomial)).unwrap(), c, epsilon = 1e-15);
        assert_abs_diff_eq!(rademacher_bound(&inputs(16, 1.0, 100, Family::Linear)).unwrap(), 2.0 * c / 10.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 1.445998, epsilon = 1e-6);
    }

    #[test]
    fn generalization_examples() {
        let mut bad = inputs(1, 1.0, 100, Family::Linear);
        bad.delta = 2.0;
        assert!(generalization_bound(&bad, 0.0).is_err());
        let big = BoundInputs { m: 100_000_000, ..inputs(1, 1.0, 1, Family::Linear) };
        assert!(generalization_bound(&big, 0.0).unwrap() < 1e-3);
        let want = 0.1 + (46.0f64 / 11.0).sqrt() / 10.0 + 3.0 * (40.0f64.ln() / 200.0).sqrt();
        let got = generalization_bound(&inputs(1, 1.0, 100, Family::Linear), 0.1).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        assert!(generalization_bound(&inputs(1, 1.0, 100, Family::Linear), 1.5).is_err());
    }

    #[test]
    fn bounds_are_monotone_and_polynomial_dominates() {
        for p in [1, 2, 5, 16] {
            for r in [1.0, 1.5, 3.0] {
                let mut prev = f64::INFINITY;
                for m in [1, 10, 100, 1000] {
                    let lin = rademacher_bound(&inputs(p, r, m, Family::Linear)).unwrap();
                    let poly = rademacher_bound(&inputs(p, r, m, Family::Polynomial)).unwrap();
                    assert!(poly >= lin);
                    assert!(lin < prev);
                    prev = lin;
                    assert!(rademacher_bound(&inputs(p + 1, r, m, Family::Linear)).unwrap() > lin);
                    assert!(rademacher_bound(&inputs(p, r * 1.1, m, Family::Linear)).unwrap() > lin);
                }
            }
        }
    }

    fn identity_bank(m: usize) -> BaseKernelBank<f64> {
        BaseKernelBank::from_grams(vec![SymMatrix::identity(m)], None).unwrap()
    }

    #[test]
    fn single_identity_kernel_constants_are_closed_form() {
        let region = FeasibleRegion::new(vec![2.0], 0.5, NormOrder::L2).unwrap();
        for n in [1, 5, 50] {
            let k = estimate_curvature_constants(&identity_bank(4), &region, n, 3).unwrap();
            assert_eq!(k.b, 1.0);
            assert_eq!(k.d, 1.0);
            // mu is on the boundary {1.5, 2.5}; the maxima are attained by 2.5
            // only once that side has been drawn
            assert!(k.c == 2.5f64.powi(2) || k.c == 1.5f64.powi(2));
            assert_eq!(k.e, k.c);
        }
        let k = estimate_curvature_constants(&identity_bank(4), &region, 200, 3).unwrap();
        assert_eq!(k.c, 6.25);
        assert_abs_diff_eq!(k.concavity_threshold, 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.h, 1.0 / 1.5f64.powi(2), epsilon = 1e-12);
    }

    fn random_bank(seed: u64, m: usize, p: usize) -> (BaseKernelBank<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grams = (0..p)
            .map(|_| {
                let g: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                SymMatrix::from_upper_fn(m, |i, j| dot(&g[i], &g[j]) / m as f64)
            })
            .collect();
        let y = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (BaseKernelBank::from_grams(grams, None).unwrap(), y)
    }

    #[test]
    fn estimates_are_deterministic_and_monotone_in_sample_count() {
        let (bank, _) = random_bank(41, 6, 2);
        let region = FeasibleRegion::new(vec![1.0, 1.0], 0.5, NormOrder::L2).unwrap();
        let a = estimate_curvature_constants(&bank, &region, 1, 7).unwrap();
        let b = estimate_curvature_constants(&bank, &region, 1, 7).unwrap();
        assert_eq!(a, b);
        let small = estimate_curvature_constants(&bank, &region, 10, 7).unwrap();
        let large = estimate_curvature_constants(&bank, &region, 1000, 7).unwrap();
        assert!(large.b >= small.b && large.c >= small.c && large.e >= small.e && large.h >= small.h);
        assert!(large.d_raw <= small.d_raw);
        assert!(large.b >= large.d);
        assert!(estimate_curvature_constants(&bank, &region, 0, 7).is_err());
    }

    #[test]
    fn sign_probe_regimes() {
        let (bank, y) = random_bank(42, 10, 1);
        let mu = [1.5];
        let z = hessian_sign_probe(&bank, &mu, 0.1, &[0.0; 10], 50, 1).unwrap();
        assert_eq!((z.frac_nonneg, z.frac_nonpos), (1.0, 1.0));
        let hi = hessian_sign_probe(&bank, &mu, 1e6, &y, 50, 1).unwrap();
        assert_eq!(hi.frac_nonpos, 1.0);
        let lo = hessian_sign_probe(&bank, &mu, 1e-6, &y, 50, 1).unwrap();
        assert_eq!(lo.frac_nonneg, 1.0);
    }
}
