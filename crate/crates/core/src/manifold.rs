//! Riemannian trust region on the offset sphere `|mu - mu0|_2 = Lambda`.
//!
//! With `v = mu - mu0` and `P = I - v v^T / Lambda^2`:
//!   grad F = P gradF
//!   Hess F[e] = P hessF e - (v^T gradF / Lambda^2) e
//! and the retraction is `mu0 + Lambda (mu + xi - mu0) / |mu + xi - mu0|`.

use crate::error::{Error, Result};
use crate::kernels::{BaseKernelBank, CombinationParams, Degree};
use crate::krr;
use crate::linalg::check_len;
use crate::mkl::{FeasibleRegion, IterRecord, NormOrder, SolveResult, Status};
use crate::scalar::{dot, norm2, Scalar};

const SPHERE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint<T> {
    pub mu: Vec<T>,
    pub region: FeasibleRegion<T>,
}

impl<T: Scalar> SpherePoint<T> {
    pub fn new(mu: Vec<T>, region: FeasibleRegion<T>) -> Result<Self> {
        if region.q != NormOrder::L2 {
            return Err(Error::InvalidArgument("sphere points require q = 2".into()));
        }
        check_len(region.dim(), mu.len())?;
        let off = (region.offset_norm(&mu) - region.radius).abs();
        if off > T::of(SPHERE_TOL) * (T::one() + region.radius) {
            return Err(Error::InvalidArgument(format!("point is {off} away from the sphere")));
        }
        Ok(Self { mu, region })
    }

    /// `mu - mu0`.
    pub fn normal(&self) -> Vec<T> {
        self.mu.iter().zip(&self.region.mu0).map(|(&a, &b)| a - b).collect()
    }

    pub fn radius(&self) -> T {
        self.region.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T> {
    pub xi: Vec<T>,
}

impl<T: Scalar> TangentVector<T> {
    pub fn norm(&self) -> T {
        norm2(&self.xi)
    }
}

pub fn tangent_project<T: Scalar>(point: &SpherePoint<T>, xi: &[T]) -> Result<TangentVector<T>> {
    check_len(point.mu.len(), xi.len())?;
    let v = point.normal();
    let c = dot(&v, xi) / (point.radius() * point.radius());
    Ok(TangentVector { xi: xi.iter().zip(&v).map(|(&x, &n)| x - c * n).collect() })
}

pub fn retract<T: Scalar>(point: &SpherePoint<T>, v: &TangentVector<T>) -> Result<SpherePoint<T>> {
    check_len(point.mu.len(), v.xi.len())?;
    let r = &point.region;
    let dir: Vec<T> = point.mu.iter().zip(&v.xi).zip(&r.mu0).map(|((&m, &x), &c)| m + x - c).collect();
    let n = norm2(&dir);
    if !(n > T::of(1e-14)) {
        return Err(Error::DegenerateDirection);
    }
    let mu = r.mu0.iter().zip(&dir).map(|(&c, &d)| c + r.radius * d / n).collect();
    Ok(SpherePoint { mu, region: r.clone() })
}

/// A smooth objective on the ambient space, queried only on the sphere.
pub trait SphereObjective<T> {
    fn value(&mut self, mu: &[T]) -> Result<T>;
    /// Euclidean gradient.
    fn gradient(&mut self, mu: &[T]) -> Result<Vec<T>>;
    /// Euclidean Hessian-vector product.
    fn hessian_vec(&mut self, mu: &[T], v: &[T]) -> Result<Vec<T>>;
    /// Dual coefficients reported alongside the final weights.
    fn solution(&mut self, _mu: &[T]) -> Result<Vec<T>> {
        Ok(Vec::new())
    }
}

/// `F(mu) = y^T (K_mu + lambda I)^{-1} y`; caches the Hessian of the last point.
pub struct KrrObjective<'a, T> {
    bank: &'a BaseKernelBank<T>,
    y: &'a [T],
    lambda: T,
    degree: Degree,
    cached: Option<(Vec<T>, Vec<Vec<T>>)>,
}

impl<'a, T: Scalar> KrrObjective<'a, T> {
    pub fn new(bank: &'a BaseKernelBank<T>, y: &'a [T], lambda: T, degree: Degree) -> Self {
        Self { bank, y, lambda, degree, cached: None }
    }

    fn params(&self, mu: &[T]) -> CombinationParams<T> {
        CombinationParams::new(mu.to_vec(), self.degree)
    }
}

impl<T: Scalar> SphereObjective<T> for KrrObjective<'_, T> {
    fn value(&mut self, mu: &[T]) -> Result<T> {
        krr::objective(self.bank, &self.params(mu), self.lambda, self.y, T::zero())
    }

    fn gradient(&mut self, mu: &[T]) -> Result<Vec<T>> {
        krr::gradient(self.bank, &self.params(mu), self.lambda, self.y, T::zero())
    }

    fn hessian_vec(&mut self, mu: &[T], v: &[T]) -> Result<Vec<T>> {
        if !matches!(&self.cached, Some((at, _)) if at.as_slice() == mu) {
            let h = krr::hessian(self.bank, &self.params(mu), self.lambda, self.y, T::zero())?;
            self.cached = Some((mu.to_vec(), h));
        }
        let (_, h) = self.cached.as_ref().expect("filled above");
        Ok(h.iter().map(|row| dot(row, v)).collect())
    }

    fn solution(&mut self, mu: &[T]) -> Result<Vec<T>> {
        Ok(krr::evaluate(self.bank, &self.params(mu), self.lambda, self.y, T::zero())?.alpha)
    }
}

/// `F(mu) = c^T mu`.
pub struct LinearObjective<T> {
    pub c: Vec<T>,
}

impl<T: Scalar> SphereObjective<T> for LinearObjective<T> {
    fn value(&mut self, mu: &[T]) -> Result<T> {
        Ok(dot(&self.c, mu))
    }

    fn gradient(&mut self, _mu: &[T]) -> Result<Vec<T>> {
        Ok(self.c.clone())
    }

    fn hessian_vec(&mut self, _mu: &[T], v: &[T]) -> Result<Vec<T>> {
        Ok(vec![T::zero(); v.len()])
    }
}

fn riemannian_grad_with<T: Scalar>(obj: &mut impl SphereObjective<T>, point: &SpherePoint<T>) -> Result<(TangentVector<T>, Vec<T>)> {
    let g = obj.gradient(&point.mu)?;
    Ok((tangent_project(point, &g)?, g))
}

fn hess_vec_with<T: Scalar>(
    obj: &mut impl SphereObjective<T>,
    point: &SpherePoint<T>,
    euclid_grad: &[T],
    eta: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    let hv = obj.hessian_vec(&point.mu, &eta.xi)?;
    let mut out = tangent_project(point, &hv)?;
    let r2 = point.radius() * point.radius();
    let w = dot(&point.normal(), euclid_grad) / r2;
    out.xi.iter_mut().zip(&eta.xi).for_each(|(o, &e)| *o -= w * e);
    // re-project to remove rounding drift
    tangent_project(point, &out.xi)
}

pub fn riemannian_grad<T: Scalar>(
    bank: &BaseKernelBank<T>,
    point: &SpherePoint<T>,
    lambda: T,
    y: &[T],
    degree: Degree,
) -> Result<TangentVector<T>> {
    Ok(riemannian_grad_with(&mut KrrObjective::new(bank, y, lambda, degree), point)?.0)
}

pub fn hess_vec<T: Scalar>(
    bank: &BaseKernelBank<T>,
    point: &SpherePoint<T>,
    lambda: T,
    y: &[T],
    degree: Degree,
    eta: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    let mut obj = KrrObjective::new(bank, y, lambda, degree);
    let g = obj.gradient(&point.mu)?;
    hess_vec_with(&mut obj, point, &g, eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrConfig<T> {
    /// Largest radius; defaults to `Lambda`.
    pub delta_max: Option<T>,
    /// Initial radius; defaults to `Lambda / 8`.
    pub delta0: Option<T>,
    /// Accept the step when `rho` exceeds this.
    pub accept: T,
    pub grad_tol: T,
    pub max_iter: usize,
    pub mu_init: Option<Vec<T>>,
}

impl<T: Scalar> Default for TrConfig<T> {
    fn default() -> Self {
        Self { delta_max: None, delta0: None, accept: T::of(0.1), grad_tol: T::of(1e-5), max_iter: 200, mu_init: None }
    }
}

/// Radius update: shrink by 4 on poor agreement, double (capped) on good
/// agreement when the step reached the boundary, otherwise keep.
pub fn update_radius<T: Scalar>(rho: T, step_norm: T, delta: T, delta_max: T) -> T {
    let quarter = T::of(0.25);
    if !(rho >= quarter) {
        quarter * delta
    } else if rho > T::of(0.75) && (step_norm - delta).abs() <= T::of(1e-10) * delta {
        (T::of(2.0) * delta).min(delta_max)
    } else {
        delta
    }
}

/// Step to the trust boundary from `z` along `d`: the `tau >= 0` with `|z + tau d| = delta`.
fn to_boundary<T: Scalar>(z: &[T], d: &[T], delta: T) -> Vec<T> {
    let a = dot(d, d);
    let b = T::of(2.0) * dot(z, d);
    let c = dot(z, z) - delta * delta;
    let disc = (b * b - T::of(4.0) * a * c).max(T::zero());
    let tau = (-b + disc.sqrt()) / (T::of(2.0) * a);
    z.iter().zip(d).map(|(&zi, &di)| zi + tau * di).collect()
}

/// Truncated CG for `min <g,s> + <s, H s>/2` over `|s| <= delta`.
fn steihaug<T: Scalar>(
    g: &[T],
    delta: T,
    max_steps: usize,
    mut hv: impl FnMut(&[T]) -> Result<Vec<T>>,
) -> Result<Vec<T>> {
    let gnorm = norm2(g);
    let tol = gnorm * T::of(0.1).min(gnorm.sqrt()).max(T::of(1e-12));
    let mut z = vec![T::zero(); g.len()];
    let mut r = g.to_vec();
    let mut d: Vec<T> = g.iter().map(|&x| -x).collect();
    let mut rr = dot(&r, &r);
    for _ in 0..max_steps {
        let hd = hv(&d)?;
        let dhd = dot(&d, &hd);
        if dhd <= T::zero() {
            return Ok(to_boundary(&z, &d, delta));
        }
        let a = rr / dhd;
        let next: Vec<T> = z.iter().zip(&d).map(|(&zi, &di)| zi + a * di).collect();
        if norm2(&next) >= delta {
            return Ok(to_boundary(&z, &d, delta));
        }
        z = next;
        r.iter_mut().zip(&hd).for_each(|(ri, &h)| *ri += a * h);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= tol {
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        d.iter_mut().zip(&r).for_each(|(di, &ri)| *di = -ri + beta * *di);
    }
    Ok(z)
}

/// Checks the trust-region preconditions and that the sphere lies in the orthant.
pub fn validate_sphere_region<T: Scalar>(region: &FeasibleRegion<T>) -> Result<()> {
    if region.q != NormOrder::L2 {
        return Err(Error::InvalidArgument("the trust-region solver requires q = 2".into()));
    }
    let lo = region.mu0.iter().copied().fold(T::infinity(), T::min);
    if region.radius > lo {
        return Err(Error::InvalidArgument(format!(
            "radius {} exceeds min(mu0) = {lo}; the sphere would leave the non-negative orthant",
            region.radius
        )));
    }
    Ok(())
}

/// Riemannian trust region for a generic objective.
pub fn trust_region_with<T: Scalar>(
    obj: &mut impl SphereObjective<T>,
    region: &FeasibleRegion<T>,
    config: &TrConfig<T>,
) -> Result<SolveResult<T>> {
    validate_sphere_region(region)?;
    let delta_max = config.delta_max.unwrap_or(region.radius);
    let mut delta = config.delta0.unwrap_or(region.radius / T::of(8.0));
    if !(delta > T::zero() && delta <= delta_max) {
        return Err(Error::InvalidArgument("need 0 < delta0 <= delta_max".into()));
    }
    if !(config.accept >= T::zero() && config.accept < T::of(0.25)) {
        return Err(Error::InvalidArgument("acceptance threshold must lie in [0, 1/4)".into()));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let start = config.mu_init.clone().unwrap_or_else(|| region.default_start());
    let mut point = SpherePoint::new(start, region.clone())?;
    let mut f = obj.value(&point.mu)?;
    if !f.is_finite() {
        return Err(Error::Diverged);
    }
    let mut trace = vec![IterRecord { iter: 0, objective: f, mu: point.mu.clone(), eta: delta }];
    let mut status = Status::MaxIter;
    let mut gnorm = T::infinity();
    let mut iterations = 0;
    let p = region.dim();
    while iterations < config.max_iter {
        let (grad, egrad) = riemannian_grad_with(obj, &point)?;
        gnorm = grad.norm();
        if gnorm <= config.grad_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let step = {
            let pt = &point;
            let eg = &egrad;
            let objr = &mut *obj;
            steihaug(&grad.xi, delta, p + 1, |d| Ok(hess_vec_with(objr, pt, eg, &TangentVector { xi: d.to_vec() })?.xi))?
        };
        let hs = hess_vec_with(obj, &point, &egrad, &TangentVector { xi: step.clone() })?;
        let predicted = -(dot(&grad.xi, &step) + T::of(0.5) * dot(&step, &hs.xi));
        let candidate = retract(&point, &TangentVector { xi: step.clone() })?;
        let f_new = obj.value(&candidate.mu)?;
        if !f_new.is_finite() {
            return Err(Error::Diverged);
        }
        let rho = if predicted > T::zero() { (f - f_new) / predicted } else { T::neg_infinity() };
        delta = update_radius(rho, norm2(&step), delta, delta_max);
        if rho > config.accept {
            point = candidate;
            f = f_new;
            trace.push(IterRecord { iter: iterations, objective: f, mu: point.mu.clone(), eta: delta });
        }
        if delta < T::epsilon() * region.radius {
            // model cannot make progress at machine resolution
            break;
        }
    }
    let alpha_star = obj.solution(&point.mu)?;
    Ok(SolveResult {
        mu_star: point.mu,
        alpha_star,
        trace,
        iterations,
        converged: status == Status::Converged,
        status,
        residual: gnorm,
    })
}

/// Trust region on the KRR objective (`beta = 0`).
pub fn trust_region<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    region: &FeasibleRegion<T>,
    degree: Degree,
    config: &TrConfig<T>,
) -> Result<SolveResult<T>> {
    check_len(bank.num_train(), y.len())?;
    check_len(bank.num_kernels(), region.dim())?;
    trust_region_with(&mut KrrObjective::new(bank, y, lambda, degree), region, config)
}
