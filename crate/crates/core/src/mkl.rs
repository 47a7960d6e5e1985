//! Kernel-learning solvers for KRR: the generic projected-gradient driver
//! and its linear/quadratic instantiations, plus the two interpolated
//! fixed-point iterations (constrained and ridge-regularized).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BaseKernelBank, CombinationParams, Degree};
use crate::krr::{self, Evaluation};
use crate::linalg::{check_len, ShiftedFactor};
use crate::scalar::{dist2, dot, norm2, Scalar};

/// Objective values above this are treated as divergence.
const DIVERGENCE_CEILING: f64 = 1e12;
const DEGENERATE_NORM: f64 = 1e-14;

/// `q` in `|mu - mu0|_q <= Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NormOrder {
    L1,
    L2,
}

impl TryFrom<u8> for NormOrder {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            _ => Err(format!("norm order must be 1 or 2, got {v}")),
        }
    }
}

impl From<NormOrder> for u8 {
    fn from(q: NormOrder) -> u8 {
        match q {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }
}

impl NormOrder {
    pub fn norm<T: Scalar>(self, v: &[T]) -> T {
        match self {
            NormOrder::L1 => v.iter().map(|x| x.abs()).sum(),
            NormOrder::L2 => norm2(v),
        }
    }

    /// `|x|^q`, additive across coordinates.
    fn pow<T: Scalar>(self, x: T) -> T {
        match self {
            NormOrder::L1 => x.abs(),
            NormOrder::L2 => x * x,
        }
    }

    fn root<T: Scalar>(self, s: T) -> T {
        match self {
            NormOrder::L1 => s,
            NormOrder::L2 => s.sqrt(),
        }
    }
}

/// `M = { mu >= 0 : |mu - mu0|_q <= Lambda }`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion<T> {
    pub mu0: Vec<T>,
    pub radius: T,
    pub q: NormOrder,
}

impl<T: Scalar> FeasibleRegion<T> {
    pub fn new(mu0: Vec<T>, radius: T, q: NormOrder) -> Result<Self> {
        if mu0.is_empty() {
            return Err(Error::InvalidArgument("mu0 must be non-empty".into()));
        }
        if mu0.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument("mu0 must be non-negative".into()));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { mu0, radius, q })
    }

    /// `mu0 = c * 1`.
    pub fn constant(p: usize, mu0: T, radius: T, q: NormOrder) -> Result<Self> {
        Self::new(vec![mu0; p], radius, q)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn offset_norm(&self, mu: &[T]) -> T {
        let d: Vec<T> = mu.iter().zip(&self.mu0).map(|(&a, &b)| a - b).collect();
        self.q.norm(&d)
    }

    /// `mu0 + Lambda * 1 / |1|_q`: the boundary point along the uniform direction.
    pub fn default_start(&self) -> Vec<T> {
        let p = self.dim();
        let ones = vec![T::one(); p];
        let n = self.q.norm(&ones);
        self.mu0.iter().map(|&m| m + self.radius / n).collect()
    }

    /// Clips to the orthant, then rescales the offset from `mu0` to length
    /// `Lambda`. Coordinates the rescale would push below zero are pinned at
    /// zero and the remaining radius is redistributed over the free ones,
    /// so the output is non-negative and exactly on the boundary.
    pub fn project(&self, mu: &[T]) -> Result<Vec<T>> {
        check_len(self.dim(), mu.len())?;
        let q = self.q;
        let dir: Vec<T> = mu.iter().zip(&self.mu0).map(|(&v, &c)| v.max(T::zero()) - c).collect();
        if !(q.norm(&dir) > T::of(DEGENERATE_NORM)) {
            return Err(Error::DegenerateDirection);
        }
        let p = self.dim();
        let mut pinned = vec![false; p];
        loop {
            let budget = q.pow(self.radius)
                - (0..p).filter(|&k| pinned[k]).map(|k| q.pow(self.mu0[k])).sum::<T>();
            let free: Vec<T> = (0..p).map(|k| if pinned[k] { T::zero() } else { dir[k] }).collect();
            let free_norm = q.norm(&free);
            if !(free_norm > T::of(DEGENERATE_NORM)) || !(budget > T::zero()) {
                return Err(Error::DegenerateDirection);
            }
            let s = q.root(budget) / free_norm;
            let out: Vec<T> = (0..p)
                .map(|k| if pinned[k] { T::zero() } else { self.mu0[k] + s * dir[k] })
                .collect();
            let newly: Vec<usize> = (0..p).filter(|&k| !pinned[k] && out[k] < T::zero()).collect();
            if newly.is_empty() {
                return Ok(out);
            }
            for k in newly {
                pinned[k] = true;
            }
        }
    }
}

/// Free-function form of [`FeasibleRegion::project`].
pub fn project<T: Scalar>(mu: &[T], region: &FeasibleRegion<T>) -> Result<Vec<T>> {
    region.project(mu)
}

/// The set projected onto after every gradient step.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint<T> {
    /// Boundary of a [`FeasibleRegion`].
    Sphere(FeasibleRegion<T>),
    /// `mu >= 0`.
    Orthant,
}

impl<T: Scalar> Constraint<T> {
    pub fn project(&self, mu: &[T]) -> Result<Vec<T>> {
        match self {
            Constraint::Sphere(region) => region.project(mu),
            Constraint::Orthant => Ok(mu.iter().map(|v| v.max(T::zero())).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub eta: T,
    pub eps: T,
    pub max_iter: usize,
    /// Step-size multiplier applied whenever a step would raise the objective.
    pub backoff: T,
    pub seed: u64,
    /// Starting weights; defaults to the region's uniform boundary point
    /// (or `1` on the orthant).
    pub mu_init: Option<Vec<T>>,
    /// Regularized quadratic PGD only: use the update sign exactly as
    /// printed in the original pseudo-code, which ascends the objective.
    pub printed_step_sign: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            eta: T::one(),
            eps: T::of(1e-6),
            max_iter: 50,
            backoff: T::of(0.8),
            seed: 0,
            mu_init: None,
            printed_step_sign: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults for the interpolated iterations (`eta = 1/2`).
    pub fn interpolated() -> Self {
        Self { eta: T::of(0.5), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        if !(self.eps > T::zero()) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.backoff > T::zero() && self.backoff < T::one()) {
            return Err(Error::InvalidArgument("backoff must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord<T> {
    pub iter: usize,
    pub objective: T,
    pub mu: Vec<T>,
    pub eta: T,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub mu_star: Vec<T>,
    pub alpha_star: Vec<T>,
    pub trace: Vec<IterRecord<T>>,
    /// Number of objective evaluations (the starting point counts as one).
    pub iterations: usize,
    pub converged: bool,
    pub status: Status,
    /// Solver-specific optimality residual: fixed-point residual for the
    /// interpolated iterations, projected-gradient norm for the orthant
    /// solver, `|mu' - mu|` of the last step otherwise.
    pub residual: T,
}

impl<T: Scalar> SolveResult<T> {
    pub fn objective_trace(&self) -> Vec<T> {
        self.trace.iter().map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> T {
        self.trace.last().map(|r| r.objective).unwrap_or_else(T::nan)
    }
}

fn diverged<T: Scalar>(v: T) -> bool {
    !v.is_finite() || v > T::of(DIVERGENCE_CEILING)
}

/// Projected gradient descent driven by an objective/gradient oracle.
///
/// Each pass takes `mu' = project(mu - eta * grad)`. A step that raises the
/// objective is rejected and `eta` shrinks by `config.backoff`, so the
/// recorded trace is non-increasing and ends at its minimum. Stops once
/// `|mu' - mu| < eps`; `max_iter` bounds the number of oracle calls.
pub fn gmkl<T, F>(mu_init: &[T], constraint: &Constraint<T>, mut oracle: F, config: &SolverConfig<T>) -> Result<SolveResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Evaluation<T>>,
{
    config.validate()?;
    let mut mu = constraint.project(mu_init)?;
    let mut eval = oracle(&mu)?;
    let mut eta = config.eta;
    let mut trace = vec![IterRecord { iter: 1, objective: eval.objective, mu: mu.clone(), eta }];
    let mut iterations = 1;
    let mut status = Status::MaxIter;
    let mut last_step = T::infinity();
    if diverged(eval.objective) {
        status = Status::Diverged;
    } else {
        loop {
            let step: Vec<T> = mu.iter().zip(&eval.gradient).map(|(&m, &g)| m - eta * g).collect();
            let candidate = constraint.project(&step)?;
            last_step = dist2(&candidate, &mu);
            if last_step < config.eps {
                status = Status::Converged;
                break;
            }
            if iterations >= config.max_iter {
                break;
            }
            let cand_eval = oracle(&candidate)?;
            iterations += 1;
            if diverged(cand_eval.objective) {
                status = Status::Diverged;
                break;
            }
            if cand_eval.objective > eval.objective {
                eta *= config.backoff;
                continue;
            }
            mu = candidate;
            eval = cand_eval;
            trace.push(IterRecord { iter: iterations, objective: eval.objective, mu: mu.clone(), eta });
        }
    }
    Ok(SolveResult {
        mu_star: mu,
        alpha_star: eval.alpha,
        trace,
        iterations,
        converged: status == Status::Converged,
        status,
        residual: last_step,
    })
}

fn krr_oracle<'a, T: Scalar>(
    bank: &'a BaseKernelBank<T>,
    y: &'a [T],
    lambda: T,
    degree: Degree,
    beta: T,
) -> impl FnMut(&[T]) -> Result<Evaluation<T>> + 'a {
    move |mu: &[T]| krr::evaluate(bank, &CombinationParams::new(mu.to_vec(), degree), lambda, y, beta)
}

fn sphere_start<T: Scalar>(region: &FeasibleRegion<T>, config: &SolverConfig<T>) -> Vec<T> {
    config.mu_init.clone().unwrap_or_else(|| region.default_start())
}

fn check_problem<T: Scalar>(bank: &BaseKernelBank<T>, y: &[T], p: usize) -> Result<()> {
    check_len(bank.num_train(), y.len())?;
    check_len(bank.num_kernels(), p)
}

/// Linear combinations on the boundary of `M`: `mu_k += eta a^T K_k a`, then project.
pub fn pgd_linear<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    region: &FeasibleRegion<T>,
    config: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    check_problem(bank, y, region.dim())?;
    let oracle = krr_oracle(bank, y, lambda, Degree::Linear, T::zero());
    gmkl(&sphere_start(region, config), &Constraint::Sphere(region.clone()), oracle, config)
}

/// Quadratic combinations on the boundary of `M`: `mu_k += 2 eta a^T U_k a`, then project.
pub fn pgd_quadratic<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    region: &FeasibleRegion<T>,
    config: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    check_problem(bank, y, region.dim())?;
    let oracle = krr_oracle(bank, y, lambda, Degree::Quadratic, T::zero());
    gmkl(&sphere_start(region, config), &Constraint::Sphere(region.clone()), oracle, config)
}

/// Quadratic combinations with a ridge penalty `beta |mu|^2` over `mu >= 0`.
pub fn rpgd_quadratic<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    beta: T,
    config: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    if !(beta > T::zero()) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let p = bank.num_kernels();
    check_len(bank.num_train(), y.len())?;
    let start = config.mu_init.clone().unwrap_or_else(|| vec![T::one(); p]);
    check_len(p, start.len())?;
    let printed = config.printed_step_sign;
    let mut inner = krr_oracle(bank, y, lambda, Degree::Quadratic, beta);
    let oracle = move |mu: &[T]| {
        let mut e = inner(mu)?;
        if printed {
            e.gradient.iter_mut().for_each(|g| *g = -*g);
        }
        Ok(e)
    };
    let mut result = gmkl(&start, &Constraint::Orthant, oracle, config)?;
    let grad = krr::gradient(bank, &CombinationParams::new(result.mu_star.clone(), Degree::Quadratic), lambda, y, beta)?;
    result.residual = projected_gradient_norm(&result.mu_star, &grad);
    Ok(result)
}

/// Norm of the gradient with components zeroed where `mu_k = 0` and the
/// gradient points out of the orthant.
pub fn projected_gradient_norm<T: Scalar>(mu: &[T], grad: &[T]) -> T {
    mu.iter()
        .zip(grad)
        .map(|(&m, &g)| if m <= T::zero() && g > T::zero() { T::zero() } else { g * g })
        .sum::<T>()
        .sqrt()
}

/// `v_k = a^T K_k a`.
fn alignment<T: Scalar>(bank: &BaseKernelBank<T>, alpha: &[T]) -> Result<Vec<T>> {
    bank.train_grams().iter().map(|g| crate::linalg::quadratic_form(alpha, g)).collect()
}

fn solve_at<T: Scalar>(bank: &BaseKernelBank<T>, mu: &[T], lambda: T, y: &[T]) -> Result<Vec<T>> {
    let gram = bank.linear_gram(mu)?;
    ShiftedFactor::new(&gram, lambda)?.solve(y)
}

fn closed_form_weights<T: Scalar>(region: &FeasibleRegion<T>, v: &[T]) -> Result<Vec<T>> {
    let n = norm2(v);
    if !(n > T::of(DEGENERATE_NORM)) {
        return Err(Error::DegenerateDirection);
    }
    Ok(region.mu0.iter().zip(v).map(|(&c, &vk)| c + region.radius * vk / n).collect())
}

/// Shared interpolation loop: `mu = update(alpha)`,
/// `alpha' = eta alpha + (1 - eta) (K_mu + lambda I)^{-1} y`, until `|alpha' - alpha| < eps`.
fn interpolate<T, U>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    mu_init: &[T],
    config: &SolverConfig<T>,
    reg: impl Fn(&[T]) -> T,
    mut update: U,
) -> Result<SolveResult<T>>
where
    T: Scalar,
    U: FnMut(&[T]) -> Result<Vec<T>>,
{
    config.validate()?;
    let eta = config.eta;
    let mut alpha_next = solve_at(bank, mu_init, lambda, y)?;
    let mut trace = Vec::new();
    let mut mu = mu_init.to_vec();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let alpha = alpha_next;
        mu = update(&alpha)?;
        let sol = solve_at(bank, &mu, lambda, y)?;
        let objective = dot(y, &sol) + reg(&mu);
        trace.push(IterRecord { iter: iterations, objective, mu: mu.clone(), eta });
        if diverged(objective) {
            status = Status::Diverged;
            break;
        }
        alpha_next = alpha.iter().zip(&sol).map(|(&a, &s)| eta * a + (T::one() - eta) * s).collect();
        if dist2(&alpha_next, &alpha) < config.eps {
            status = Status::Converged;
            break;
        }
    }
    let alpha_star = solve_at(bank, &mu, lambda, y)?;
    Ok(SolveResult {
        mu_star: mu,
        alpha_star,
        trace,
        iterations,
        converged: status == Status::Converged,
        status,
        residual: T::nan(),
    })
}

/// Interpolated iteration for linear combinations on the `q = 2` sphere:
/// `mu = mu0 + Lambda v / |v|` with `v_k = a^T K_k a`.
pub fn iia<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    region: &FeasibleRegion<T>,
    config: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    if region.q != NormOrder::L2 {
        return Err(Error::InvalidArgument("the interpolated iteration requires q = 2".into()));
    }
    check_problem(bank, y, region.dim())?;
    let start = sphere_start(region, config);
    let mut result = interpolate(bank, y, lambda, &start, config, |_| T::zero(), |alpha| {
        closed_form_weights(region, &alignment(bank, alpha)?)
    })?;
    let target = closed_form_weights(region, &alignment(bank, &result.alpha_star)?)?;
    result.residual = max_abs_diff(&result.mu_star, &target);
    Ok(result)
}

/// Interpolated iteration for the ridge-regularized linear problem over
/// `mu >= 0`: `mu_k = a^T K_k a / (2 beta)`.
pub fn riia<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    beta: T,
    config: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    if !(beta > T::zero()) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let p = bank.num_kernels();
    check_len(bank.num_train(), y.len())?;
    let start = config.mu_init.clone().unwrap_or_else(|| vec![T::one(); p]);
    check_len(p, start.len())?;
    let two_beta = T::of(2.0) * beta;
    let weights = |alpha: &[T]| -> Result<Vec<T>> {
        Ok(alignment(bank, alpha)?.into_iter().map(|v| v / two_beta).collect())
    };
    let mut result = interpolate(bank, y, lambda, &start, config, |mu| beta * dot(mu, mu), weights)?;
    let target = weights(&result.alpha_star)?;
    result.residual = max_abs_diff(&result.mu_star, &target);
    Ok(result)
}

fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}
