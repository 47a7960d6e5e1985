//! 2-norm soft-margin SVM dual, pairwise solver, kernel learning on top of
//! it, and the gap to the KRR relaxation.
//!
//! The dual is `max 2<a,1> - a^T (Y K Y + lambda I) a` over `a >= 0`,
//! `<a,y> = 0`. With no upper box, each working-pair update has a closed form.

use crate::error::{Error, Result};
use crate::kernels::{BaseKernelBank, CombinationParams, Degree};
use crate::krr::Evaluation;
use crate::linalg::{check_len, spd_solve, SymMatrix};
use crate::mkl::{gmkl, Constraint, FeasibleRegion, SolveResult, SolverConfig};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig<T> {
    /// Maximal KKT violation accepted at termination.
    pub tol: T,
    pub max_updates: usize,
}

impl<T: Scalar> Default for SvmConfig<T> {
    fn default() -> Self {
        Self { tol: T::of(1e-6), max_updates: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmDualSolution<T> {
    pub alpha: Vec<T>,
    pub bias: T,
    pub objective_value: T,
    pub kkt_residual: T,
    pub updates: usize,
    /// False when the update cap was hit before the KKT tolerance.
    pub converged: bool,
}

fn check_labels<T: Scalar>(y: &[T]) -> Result<()> {
    let mut pos = false;
    let mut neg = false;
    for &v in y {
        if v == T::one() {
            pos = true;
        } else if v == -T::one() {
            neg = true;
        } else {
            return Err(Error::InvalidArgument(format!("labels must be +1 or -1, got {v}")));
        }
    }
    if pos && neg {
        Ok(())
    } else {
        Err(Error::SingleClass)
    }
}

pub fn svm_dual_solve<T: Scalar>(k: &SymMatrix<T>, y: &[T], lambda: T, config: &SvmConfig<T>) -> Result<SvmDualSolution<T>> {
    let m = k.dim();
    check_len(m, y.len())?;
    check_labels(y)?;
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let two = T::of(2.0);
    // Minimize a^T Q a - 2<a,1>; g = 2 Q a - 2.
    let q = |i: usize, j: usize| {
        let v = y[i] * y[j] * k.get(i, j);
        if i == j {
            v + lambda
        } else {
            v
        }
    };
    let mut alpha = vec![T::zero(); m];
    let mut grad = vec![-two; m];
    let mut updates = 0;
    let (mut viol, mut converged);
    loop {
        let (mut i, mut big) = (usize::MAX, T::neg_infinity());
        let (mut j, mut small) = (usize::MAX, T::infinity());
        for t in 0..m {
            let s = -y[t] * grad[t];
            let up = y[t] > T::zero() || alpha[t] > T::zero();
            let low = y[t] < T::zero() || alpha[t] > T::zero();
            if up && s > big {
                big = s;
                i = t;
            }
            if low && s < small {
                small = s;
                j = t;
            }
        }
        viol = (big - small).max(T::zero());
        converged = viol <= config.tol;
        if converged || updates >= config.max_updates {
            break;
        }
        // Move a_i by y_i t and a_j by -y_j t, t >= 0.
        let curv = two * (q(i, i) + q(j, j) - two * y[i] * y[j] * q(i, j));
        let mut t = if curv > T::zero() { (big - small) / curv } else { T::infinity() };
        if y[i] < T::zero() {
            t = t.min(alpha[i]);
        }
        if y[j] > T::zero() {
            t = t.min(alpha[j]);
        }
        if !t.is_finite() {
            return Err(Error::NumericalFailure("unbounded SVM dual direction".into()));
        }
        alpha[i] += y[i] * t;
        alpha[j] -= y[j] * t;
        alpha[i] = alpha[i].max(T::zero());
        alpha[j] = alpha[j].max(T::zero());
        for (r, g) in grad.iter_mut().enumerate() {
            *g += two * t * (y[i] * q(r, i) - y[j] * q(r, j));
        }
        updates += 1;
    }
    let qa: Vec<T> = (0..m).map(|r| (0..m).map(|c| q(r, c) * alpha[c]).sum()).collect();
    let objective_value = two * alpha.iter().copied().sum::<T>() - dot(&alpha, &qa);
    let support: Vec<usize> = (0..m).filter(|&t| alpha[t] > T::zero()).collect();
    let bias = if support.is_empty() {
        T::zero()
    } else {
        // y_i (K (Y a))_i + lambda a_i + b y_i = 1 on the support
        support.iter().map(|&t| y[t] * (T::one() - qa[t])).sum::<T>() / T::from_usize_lossy(support.len())
    };
    Ok(SvmDualSolution { alpha, bias, objective_value, kkt_residual: viol, updates, converged })
}

/// Optimal dual value as a function of the combined kernel.
fn svm_oracle<'a, T: Scalar>(
    bank: &'a BaseKernelBank<T>,
    y: &'a [T],
    lambda: T,
    degree: Degree,
    svm: &'a SvmConfig<T>,
) -> impl FnMut(&[T]) -> Result<Evaluation<T>> + 'a {
    move |mu: &[T]| {
        let params = CombinationParams::new(mu.to_vec(), degree);
        let gram = bank.combined_gram(&params)?;
        let sol = svm_dual_solve(&gram, y, lambda, svm)?;
        let v: Vec<T> = sol.alpha.iter().zip(y).map(|(&a, &l)| a * l).collect();
        let gradient = match degree {
            Degree::Linear => bank
                .train_grams()
                .iter()
                .map(|g| Ok(-crate::linalg::quadratic_form(&v, g)?))
                .collect::<Result<Vec<T>>>()?,
            Degree::Quadratic => {
                let lin = bank.linear_gram(mu)?;
                bank.train_grams().iter().map(|g| -T::of(2.0) * weighted_form(&v, &lin, g)).collect()
            }
        };
        Ok(Evaluation { objective: sol.objective_value, alpha: sol.alpha, gradient })
    }
}

/// `v^T (A o B) v`.
fn weighted_form<T: Scalar>(v: &[T], a: &SymMatrix<T>, b: &SymMatrix<T>) -> T {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (ra, rb) = (a.row(i), b.row(i));
            v[i] * (0..n).map(|j| ra[j] * rb[j] * v[j]).sum::<T>()
        })
        .sum()
}

/// Projected-gradient kernel learning on the optimal SVM dual value.
pub fn svm_gmkl<T: Scalar>(
    bank: &BaseKernelBank<T>,
    y: &[T],
    lambda: T,
    region: &FeasibleRegion<T>,
    degree: Degree,
    config: &SolverConfig<T>,
    svm: &SvmConfig<T>,
) -> Result<SolveResult<T>> {
    check_len(bank.num_train(), y.len())?;
    check_len(bank.num_kernels(), region.dim())?;
    check_labels(y)?;
    let start = config.mu_init.clone().unwrap_or_else(|| region.default_start());
    gmkl(&start, &Constraint::Sphere(region.clone()), svm_oracle(bank, y, lambda, degree, svm), config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationGap<T> {
    pub svm_value: T,
    pub krr_bound: T,
    pub gap: T,
}

/// Optimal SVM dual value against its KRR relaxation `y^T (K + lambda I)^{-1} y`.
pub fn relaxation_gap<T: Scalar>(k: &SymMatrix<T>, y: &[T], lambda: T) -> Result<RelaxationGap<T>> {
    let svm = svm_dual_solve(k, y, lambda, &SvmConfig::default())?;
    let krr_bound = dot(y, &spd_solve(k, lambda, y)?);
    Ok(RelaxationGap { svm_value: svm.objective_value, krr_bound, gap: krr_bound - svm.objective_value })
}

/// Raw decision values `sum_j a_j y_j K(t, j) + b` on the test block.
pub fn svm_decision<T: Scalar>(
    solution: &SvmDualSolution<T>,
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    y_train: &[T],
) -> Result<Vec<T>> {
    check_len(bank.num_train(), y_train.len())?;
    check_len(bank.num_train(), solution.alpha.len())?;
    let cross = bank.combined_cross(params)?;
    let v: Vec<T> = solution.alpha.iter().zip(y_train).map(|(&a, &l)| a * l).collect();
    Ok(cross.mat_vec(&v)?.into_iter().map(|f| f + solution.bias).collect())
}

/// Predicted labels; a zero decision value maps to +1.
pub fn svm_predict<T: Scalar>(
    solution: &SvmDualSolution<T>,
    bank: &BaseKernelBank<T>,
    params: &CombinationParams<T>,
    y_train: &[T],
) -> Result<Vec<T>> {
    Ok(svm_decision(solution, bank, params, y_train)?
        .into_iter()
        .map(|f| if f < T::zero() { -T::one() } else { T::one() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::mkl::NormOrder;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gram(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix<f64> {
        let g: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        SymMatrix::from_upper_fn(m, |i, j| (-0.5 * g[i].iter().zip(&g[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp())
    }

    fn random_labels(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        let mut y: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        y
    }

    /// Dense Gaussian elimination with partial pivoting; None if singular.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
            if a[p][c].abs() < 1e-12 {
                return None;
            }
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            x[r] = (b[r] - (r + 1..n).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
        }
        Some(x)
    }

    /// Enumerates supports S, solves the equality-constrained stationarity
    /// system on S, keeps non-negative solutions, returns the best value.
    fn brute_force_value(k: &SymMatrix<f64>, y: &[f64], lambda: f64) -> f64 {
        let m = y.len();
        let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j) + if i == j { lambda } else { 0.0 };
        let mut best = 0.0;
        for mask in 1u32..(1 << m) {
            let s: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
            let n = s.len();
            let mut a = vec![vec![0.0; n + 1]; n + 1];
            let mut b = vec![1.0; n + 1];
            for (r, &i) in s.iter().enumerate() {
                for (c, &j) in s.iter().enumerate() {
                    a[r][c] = q(i, j);
                }
                a[r][n] = y[i];
                a[n][r] = y[i];
            }
            b[n] = 0.0;
            let Some(x) = dense_solve(a, b) else { continue };
            if x[..n].iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut alpha = vec![0.0; m];
            for (r, &i) in s.iter().enumerate() {
                alpha[i] = x[r];
            }
            let val = 2.0 * alpha.iter().sum::<f64>()
                - (0..m).map(|i| (0..m).map(|j| alpha[i] * q(i, j) * alpha[j]).sum::<f64>()).sum::<f64>();
            best = f64::max(best, val);
        }
        best
    }

    #[test]
    fn two_point_closed_form() {
        let k = SymMatrix::<f64>::identity(2);
        let sol = svm_dual_solve(&k, &[1.0, -1.0], 1.0, &SvmConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.alpha[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.alpha[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.bias, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let k = SymMatrix::<f64>::identity(3);
        assert!(matches!(svm_dual_solve(&k, &[1.0, 1.0, 1.0], 1.0, &SvmConfig::default()), Err(Error::SingleClass)));
        assert!(svm_dual_solve(&k, &[1.0, 0.0, -1.0], 1.0, &SvmConfig::default()).is_err());
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for m in [4, 5, 6] {
            for _ in 0..20 {
                let k = random_gram(&mut rng, m);
                let y = random_labels(&mut rng, m);
                let lambda = rng.gen_range(0.05..2.0);
                let sol = svm_dual_solve(&k, &y, lambda, &SvmConfig::default()).unwrap();
                let best = brute_force_value(&k, &y, lambda);
                assert!((sol.objective_value - best).abs() <= 1e-5, "{} vs {best}", sol.objective_value);
            }
        }
    }

    #[test]
    fn feasibility_and_kkt_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let m = rng.gen_range(2..=30);
            let k = random_gram(&mut rng, m);
            let y = random_labels(&mut rng, m);
            let sol = svm_dual_solve(&k, &y, rng.gen_range(0.01..3.0), &SvmConfig::default()).unwrap();
            assert!(sol.converged);
            assert!(sol.kkt_residual <= 1e-6);
            assert!(sol.alpha.iter().all(|&a| a >= 0.0));
            let l1: f64 = sol.alpha.iter().sum();
            assert!(dot(&sol.alpha, &y).abs() <= 1e-8 * l1.max(1e-300));
        }
    }

    #[test]
    fn scaling_kernel_and_lambda_scales_value_inversely() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let m = rng.gen_range(3..15);
            let k = random_gram(&mut rng, m);
            let y = random_labels(&mut rng, m);
            let lambda = rng.gen_range(0.1..1.0);
            let c = rng.gen_range(0.1..10.0);
            let tight = SvmConfig { tol: 1e-10, max_updates: 100_000 };
            let a = svm_dual_solve(&k, &y, lambda, &tight).unwrap().objective_value;
            let b = svm_dual_solve(&k.scaled(c), &y, c * lambda, &tight).unwrap().objective_value;
            assert!((b * c - a).abs() <= 1e-6 * a.abs());
        }
    }

    #[test]
    fn relaxation_gap_examples() {
        let g = relaxation_gap(&SymMatrix::<f64>::identity(2), &[1.0, -1.0], 1.0).unwrap();
        assert_abs_diff_eq!(g.svm_value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.krr_bound, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.gap, 0.0, epsilon = 1e-12);
        // unbalanced labels: the KRR solution violates <a,y> = 0
        let g = relaxation_gap(&SymMatrix::<f64>::identity(3), &[1.0, 1.0, -1.0], 1.0).unwrap();
        assert_abs_diff_eq!(g.krr_bound, 1.5, epsilon = 1e-12);
        assert!(g.gap > 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let k = random_gram(&mut rng, 6);
        let y = random_labels(&mut rng, 6);
        let g = relaxation_gap(&k, &y, 1e6).unwrap();
        assert!(g.gap.abs() <= 1e-4 * g.krr_bound);
    }

    #[test]
    fn relaxation_gap_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..100 {
            let m = rng.gen_range(2..20);
            let k = random_gram(&mut rng, m);
            let y = random_labels(&mut rng, m);
            assert!(relaxation_gap(&k, &y, rng.gen_range(0.01..5.0)).unwrap().gap >= -1e-8);
        }
    }

    #[test]
    fn prediction_examples() {
        let bank = BaseKernelBank::from_grams(
            vec![SymMatrix::<f64>::identity(2)],
            Some(vec![Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap()]),
        )
        .unwrap();
        let params = CombinationParams::new(vec![1.0], Degree::Linear);
        let y = [1.0, -1.0];
        let mut sol = svm_dual_solve(bank.train_gram(0), &y, 1.0, &SvmConfig::default()).unwrap();
        assert_eq!(svm_predict(&sol, &bank, &params, &y).unwrap(), vec![1.0, -1.0, 1.0]);
        sol.alpha = vec![0.0, 0.0];
        sol.bias = 1.0;
        assert_eq!(svm_predict(&sol, &bank, &params, &y).unwrap(), vec![1.0; 3]);
        sol.bias = -1.0;
        assert_eq!(svm_predict(&sol, &bank, &params, &y).unwrap(), vec![-1.0; 3]);
        let no_cross = BaseKernelBank::from_grams(vec![SymMatrix::<f64>::identity(2)], None).unwrap();
        assert!(matches!(svm_predict(&sol, &no_cross, &params, &y), Err(Error::MissingCrossGrams)));
    }

    #[test]
    fn gmkl_single_kernel_hits_upper_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let k = random_gram(&mut rng, 8);
        let y = random_labels(&mut rng, 8);
        let bank = BaseKernelBank::from_grams(vec![k.clone()], None).unwrap();
        let region = FeasibleRegion::new(vec![1.0], 0.5, NormOrder::L2).unwrap();
        for d in [Degree::Linear, Degree::Quadratic] {
            let res = svm_gmkl(&bank, &y, 0.5, &region, d, &SolverConfig::default(), &SvmConfig::default()).unwrap();
            assert_abs_diff_eq!(res.mu_star[0], 1.5, epsilon = 1e-12);
        }
        let direct = svm_dual_solve(&k.scaled(1.5), &y, 0.5, &SvmConfig::default()).unwrap();
        let res =
            svm_gmkl(&bank, &y, 0.5, &region, Degree::Linear, &SolverConfig::default(), &SvmConfig::default()).unwrap();
        assert_abs_diff_eq!(res.final_objective(), direct.objective_value, epsilon = 1e-9);
    }

    #[test]
    fn gmkl_trace_descends_and_one_iteration_returns_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let bank = BaseKernelBank::from_grams(vec![random_gram(&mut rng, 10), random_gram(&mut rng, 10)], None).unwrap();
        let y = random_labels(&mut rng, 10);
        let region = FeasibleRegion::new(vec![1.0, 1.0], 0.8, NormOrder::L2).unwrap();
        let res =
            svm_gmkl(&bank, &y, 0.3, &region, Degree::Linear, &SolverConfig::default(), &SvmConfig::default()).unwrap();
        let t = res.objective_trace();
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
        let one = SolverConfig { max_iter: 1, ..SolverConfig::default() };
        let res = svm_gmkl(&bank, &y, 0.3, &region, Degree::Linear, &one, &SvmConfig::default()).unwrap();
        assert_eq!(res.mu_star, region.default_start());
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn gmkl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let bank = BaseKernelBank::from_grams(vec![random_gram(&mut rng, 7), random_gram(&mut rng, 7)], None).unwrap();
        let y = random_labels(&mut rng, 7);
        let svm = SvmConfig { tol: 1e-12, max_updates: 100_000 };
        for d in [Degree::Linear, Degree::Quadratic] {
            let mut oracle = svm_oracle(&bank, &y, 0.4, d, &svm);
            let mu = [0.7, 1.3];
            let g = oracle(&mu).unwrap().gradient;
            let h = 1e-6;
            for k in 0..2 {
                let mut a = mu;
                let mut b = mu;
                a[k] += h;
                b[k] -= h;
                let fd = (oracle(&a).unwrap().objective - oracle(&b).unwrap().objective) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "{fd} vs {}", g[k]);
            }
        }
    }
}
