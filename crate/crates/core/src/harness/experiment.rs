//! Cross-validated model selection, repeated random splits, baselines and metrics.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, Task};
use super::dataset::{standardize, Dataset};
use super::rng;
use crate::error::{Error, Result};
use crate::kernels::{build_bank, default_bank_specs, BaseKernelBank, CombinationParams, Degree, KernelSpec};
use crate::krr;
use crate::manifold::trust_region;
use crate::mkl::{self, FeasibleRegion, IterRecord, SolveResult, Status};
use crate::svm::{svm_decision, svm_dual_solve, svm_gmkl};

/// `sign` with `sign(0) = +1`.
pub fn label_of(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    let n = y.len().max(1) as f64;
    (pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt()
}

/// Misclassification fraction of `sign(pred)` against `sign(y)`.
pub fn msf(pred: &[f64], y: &[f64]) -> f64 {
    let n = y.len().max(1) as f64;
    pred.iter().zip(y).filter(|(&p, &t)| label_of(p) != label_of(t)).count() as f64 / n
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A learning algorithm paired with a combination degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Method {
    pub algorithm: Algorithm,
    pub degree: Degree,
}

impl Method {
    pub fn new(algorithm: Algorithm, degree: Degree) -> Self {
        Self { algorithm, degree: algorithm.fixed_degree().unwrap_or(degree) }
    }

    pub fn name(&self) -> &'static str {
        self.algorithm.name()
    }
}

/// One hyper-parameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    #[serde(rename = "Lambda", skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Base kernel index for the single-kernel baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    /// Final-fit lambda when decoupled from the learning lambda.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_lambda: Option<f64>,
}

impl GridPoint {
    pub fn lambda_only(lambda: f64) -> Self {
        Self { lambda, radius: None, beta: None, kernel: None, fit_lambda: None }
    }

    pub fn fit_lambda(&self) -> f64 {
        self.fit_lambda.unwrap_or(self.lambda)
    }
}

/// Grid in lexicographic order: lambda, then radius / beta / kernel, then fit lambda.
pub fn grid(cfg: &ExperimentConfig, method: Method, p: usize) -> Vec<GridPoint> {
    grid_for_lambdas(cfg, method, p, &cfg.lambda_grid)
}

fn grid_for_lambdas(cfg: &ExperimentConfig, method: Method, p: usize, lambdas: &[f64]) -> Vec<GridPoint> {
    let a = method.algorithm;
    let mut out = Vec::new();
    for &lambda in lambdas {
        let inner: Vec<GridPoint> = if a.uses_radius() {
            cfg.radius_grid.iter().map(|&r| GridPoint { radius: Some(r), ..GridPoint::lambda_only(lambda) }).collect()
        } else if a.uses_beta() {
            cfg.beta_grid.iter().map(|&b| GridPoint { beta: Some(b), ..GridPoint::lambda_only(lambda) }).collect()
        } else if a == Algorithm::Bm {
            (0..p).map(|k| GridPoint { kernel: Some(k), ..GridPoint::lambda_only(lambda) }).collect()
        } else {
            vec![GridPoint::lambda_only(lambda)]
        };
        for g in inner {
            if cfg.decouple_lambda && a != Algorithm::Bm && a != Algorithm::Unif {
                out.extend(cfg.lambda_grid.iter().map(|&f| GridPoint { fit_lambda: Some(f), ..g.clone() }));
            } else {
                out.push(g);
            }
        }
    }
    out
}

/// Standardized train/test blocks turned into a kernel bank.
pub struct Partition {
    pub bank: BaseKernelBank<f64>,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
}

pub fn kernel_specs(cfg: &ExperimentConfig, ds: &Dataset) -> Vec<KernelSpec> {
    cfg.kernels.clone().unwrap_or_else(|| default_bank_specs(ds.n_features()))
}

/// Standardizes with training statistics only and builds the bank with its cross block.
pub fn partition(ds: &Dataset, specs: &[KernelSpec], train: &[usize], test: &[usize]) -> Result<Partition> {
    let (xtr, ytr) = ds.subset(train);
    let (xte, yte) = ds.subset(test);
    let (xtr, xte) = standardize(&xtr, &xte)?;
    let bank = build_bank(specs, &xtr, Some(&xte))?;
    Ok(Partition { bank, y_train: ytr, y_test: yte })
}

/// Predictions on the test block plus whatever the learner recorded.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub predictions: Vec<f64>,
    pub mu: Vec<f64>,
    pub trace: Vec<IterRecord<f64>>,
}

/// Runs the kernel-learning step of a learning algorithm on `bank`.
pub fn learn(cfg: &ExperimentConfig, method: Method, point: &GridPoint, bank: &BaseKernelBank<f64>, y: &[f64]) -> Result<SolveResult<f64>> {
    let p = bank.num_kernels();
    let lambda = point.lambda;
    let region = || {
        let r = point.radius.ok_or_else(|| Error::Config("missing Lambda".into()))?;
        FeasibleRegion::constant(p, cfg.mu0, r, cfg.q)
    };
    let beta = || point.beta.ok_or_else(|| Error::Config("missing beta".into()));
    let solver = cfg.solver_config();
    match method.algorithm {
        Algorithm::Pgd => mkl::pgd_linear(bank, y, lambda, &region()?, &solver),
        Algorithm::Iia => mkl::iia(bank, y, lambda, &region()?, &solver),
        Algorithm::Pgd2 => mkl::pgd_quadratic(bank, y, lambda, &region()?, &solver),
        Algorithm::Riia => mkl::riia(bank, y, lambda, beta()?, &solver),
        Algorithm::Rpgd2 => mkl::rpgd_quadratic(bank, y, lambda, beta()?, &solver),
        Algorithm::Tr => trust_region(bank, y, lambda, &region()?, method.degree, &cfg.tr_config()),
        Algorithm::SvmGmkl => svm_gmkl(bank, y, lambda, &region()?, method.degree, &solver, &cfg.svm_config()),
        Algorithm::Bm | Algorithm::Unif => Err(Error::InvalidArgument(format!("{} does not learn weights", method.name()))),
    }
}

/// Learns the weights (if the method learns), fits the final predictor, predicts.
pub fn fit_predict(cfg: &ExperimentConfig, method: Method, point: &GridPoint, part: &Partition) -> Result<Fitted> {
    let p = part.bank.num_kernels();
    let y = &part.y_train;
    let single;
    let mut bank = &part.bank;
    let (mu, trace) = match method.algorithm {
        Algorithm::Unif => (vec![1.0 / p as f64; p], Vec::new()),
        Algorithm::Bm => {
            let k = point.kernel.ok_or_else(|| Error::Config("missing kernel index".into()))?;
            single = part.bank.single(k);
            bank = &single;
            (vec![1.0], Vec::new())
        }
        _ => {
            let res = learn(cfg, method, point, bank, y)?;
            if res.status == Status::Diverged {
                return Err(Error::Diverged);
            }
            (res.mu_star, res.trace)
        }
    };
    let params = CombinationParams::new(mu.clone(), method.degree);
    let predictions = if cfg.task == Task::SvmClassification {
        let gram = bank.combined_gram(&params)?;
        let sol = svm_dual_solve(&gram, y, point.fit_lambda(), &cfg.svm_config())?;
        svm_decision(&sol, bank, &params, y)?
    } else {
        let model = krr::fit(bank, &params, point.fit_lambda(), y)?;
        krr::predict(&model, bank)?
    };
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged);
    }
    Ok(Fitted { predictions, mu, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCell {
    pub point: GridPoint,
    /// Mean validation RMSE across folds; NaN when the cell failed.
    pub rmse: f64,
    pub msf: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOutcome {
    pub method: Method,
    pub table: Vec<CvCell>,
    /// Index into `table` of the lowest mean RMSE; the first wins ties.
    pub selected: Option<usize>,
}

impl CvOutcome {
    pub fn selected_point(&self) -> Option<&GridPoint> {
        self.selected.map(|i| &self.table[i].point)
    }
}

/// First index with the smallest finite value.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// k-fold CV over an explicit grid. Each fold's bank is built once and
/// reused across cells; a cell failing on any fold is excluded.
pub fn run_cv_grid(cfg: &ExperimentConfig, ds: &Dataset, method: Method, points: Vec<GridPoint>) -> Result<CvOutcome> {
    let specs = kernel_specs(cfg, ds);
    let folds = rng::folds(ds.len(), cfg.cv_folds.min(ds.len()), cfg.seed);
    let per_fold: Vec<Vec<Result<(f64, f64)>>> = folds
        .par_iter()
        .map(|val| {
            let train = rng::complement(ds.len(), val);
            let part = partition(ds, &specs, &train, val)?;
            Ok(points
                .iter()
                .map(|pt| {
                    fit_predict(cfg, method, pt, &part)
                        .map(|f| (rmse(&f.predictions, &part.y_test), msf(&f.predictions, &part.y_test)))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let table: Vec<CvCell> = points
        .into_iter()
        .enumerate()
        .map(|(c, point)| {
            let mut r = Vec::new();
            let mut m = Vec::new();
            let mut error = None;
            for fold in &per_fold {
                match &fold[c] {
                    Ok((a, b)) => {
                        r.push(*a);
                        m.push(*b);
                    }
                    Err(e) => {
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            if error.is_some() {
                CvCell { point, rmse: f64::NAN, msf: f64::NAN, error }
            } else {
                CvCell { point, rmse: mean_std(&r).0, msf: mean_std(&m).0, error }
            }
        })
        .collect();
    let selected = argmin_first(&table.iter().map(|c| c.rmse).collect::<Vec<_>>());
    Ok(CvOutcome { method, table, selected })
}

pub fn run_cv(cfg: &ExperimentConfig, ds: &Dataset, method: Method) -> Result<CvOutcome> {
    let p = kernel_specs(cfg, ds).len();
    run_cv_grid(cfg, ds, method, grid(cfg, method, p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub degree: u8,
    pub selected: Option<GridPoint>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub msf_mean: f64,
    pub msf_std: f64,
    /// One entry per split; NaN where the split failed.
    pub rmse_per_split: Vec<f64>,
    pub msf_per_split: Vec<f64>,
    pub effective_splits: usize,
    #[serde(skip)]
    pub traces: Vec<Vec<IterRecord<f64>>>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl MetricsReport {
    /// A report holding a single trace and no metrics.
    pub fn trace_only(method: Method, trace: Vec<IterRecord<f64>>) -> Self {
        Self {
            method: method.name().to_string(),
            degree: method.degree.as_u8(),
            selected: None,
            rmse_mean: f64::NAN,
            rmse_std: f64::NAN,
            msf_mean: f64::NAN,
            msf_std: f64::NAN,
            rmse_per_split: Vec::new(),
            msf_per_split: Vec::new(),
            effective_splits: 0,
            traces: vec![trace],
            wall_time: 0.0,
        }
    }

    fn from_splits(
        name: &str,
        degree: Degree,
        selected: Option<GridPoint>,
        outcomes: Vec<Result<Fitted>>,
        y_tests: &[Vec<f64>],
        wall_time: f64,
    ) -> Self {
        let mut rmse_per_split = Vec::new();
        let mut msf_per_split = Vec::new();
        let mut traces = Vec::new();
        for (o, y) in outcomes.into_iter().zip(y_tests) {
            match o {
                Ok(f) => {
                    rmse_per_split.push(rmse(&f.predictions, y));
                    msf_per_split.push(msf(&f.predictions, y));
                    traces.push(f.trace);
                }
                Err(_) => {
                    rmse_per_split.push(f64::NAN);
                    msf_per_split.push(f64::NAN);
                    traces.push(Vec::new());
                }
            }
        }
        let ok_r: Vec<f64> = rmse_per_split.iter().copied().filter(|v| v.is_finite()).collect();
        let ok_m: Vec<f64> = msf_per_split.iter().copied().filter(|v| v.is_finite()).collect();
        let (rmse_mean, rmse_std) = mean_std(&ok_r);
        let (msf_mean, msf_std) = mean_std(&ok_m);
        Self {
            method: name.to_string(),
            degree: degree.as_u8(),
            selected,
            rmse_mean,
            rmse_std,
            msf_mean,
            msf_std,
            rmse_per_split,
            msf_per_split,
            effective_splits: ok_r.len(),
            traces,
            wall_time,
        }
    }
}

/// Evaluates `predictor` on `cfg.n_splits` seeded train/test splits.
pub fn run_splits_with<F>(cfg: &ExperimentConfig, ds: &Dataset, name: &str, degree: Degree, selected: Option<GridPoint>, predictor: F) -> Result<MetricsReport>
where
    F: Fn(&Partition) -> Result<Fitted> + Sync,
{
    let start = Instant::now();
    let specs = kernel_specs(cfg, ds);
    let per_split: Vec<(Vec<f64>, Result<Fitted>)> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|s| {
            let (train, test) = rng::split(ds.len(), cfg.split_fraction, cfg.seed, s);
            let part = partition(ds, &specs, &train, &test)?;
            let out = predictor(&part);
            Ok((part.y_test, out))
        })
        .collect::<Result<_>>()?;
    let (y_tests, outcomes): (Vec<_>, Vec<_>) = per_split.into_iter().unzip();
    Ok(MetricsReport::from_splits(name, degree, selected, outcomes, &y_tests, start.elapsed().as_secs_f64()))
}

pub fn run_splits(cfg: &ExperimentConfig, ds: &Dataset, method: Method, point: &GridPoint) -> Result<MetricsReport> {
    run_splits_with(cfg, ds, method.name(), method.degree, Some(point.clone()), |part| fit_predict(cfg, method, point, part))
}

/// CV selection followed by split evaluation. Fails with `Diverged` when every cell failed.
pub fn select_and_evaluate(cfg: &ExperimentConfig, ds: &Dataset, method: Method) -> Result<(CvOutcome, MetricsReport)> {
    let cv = run_cv(cfg, ds, method)?;
    let point = cv.selected_point().cloned().ok_or(Error::Diverged)?;
    let report = run_splits(cfg, ds, method, &point)?;
    Ok((cv, report))
}

/// Best single kernel and uniform weights, both at `degree`.
pub fn run_baselines(cfg: &ExperimentConfig, ds: &Dataset, degree: Degree) -> Result<Vec<(CvOutcome, MetricsReport)>> {
    [Algorithm::Bm, Algorithm::Unif].into_iter().map(|a| select_and_evaluate(cfg, ds, Method::new(a, degree))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub degree: u8,
    pub lambda: f64,
    pub cv_rmse: f64,
    pub cv_msf: f64,
    pub test_rmse: Option<f64>,
    pub test_msf: Option<f64>,
}

/// Best CV cell per lambda value of a finished CV run.
pub fn sweep_from_cv(cfg: &ExperimentConfig, cv: &CvOutcome) -> Vec<SweepRow> {
    cfg.lambda_grid
        .iter()
        .map(|&lambda| {
            let cells: Vec<&CvCell> = cv.table.iter().filter(|c| c.point.lambda == lambda).collect();
            let best = argmin_first(&cells.iter().map(|c| c.rmse).collect::<Vec<_>>());
            let (cv_rmse, cv_msf) = best.map_or((f64::NAN, f64::NAN), |i| (cells[i].rmse, cells[i].msf));
            SweepRow {
                method: cv.method.name().to_string(),
                degree: cv.method.degree.as_u8(),
                lambda,
                cv_rmse,
                cv_msf,
                test_rmse: None,
                test_msf: None,
            }
        })
        .collect()
}

/// The same family of learner at another degree.
pub fn counterpart(algorithm: Algorithm, degree: Degree) -> Method {
    let a = match (algorithm, degree) {
        (Algorithm::Pgd | Algorithm::Iia, Degree::Quadratic) => Algorithm::Pgd2,
        (Algorithm::Pgd2, Degree::Linear) => Algorithm::Pgd,
        (Algorithm::Riia, Degree::Quadratic) => Algorithm::Rpgd2,
        (Algorithm::Rpgd2, Degree::Linear) => Algorithm::Riia,
        (a, _) => a,
    };
    Method::new(a, degree)
}

/// CV and test error as a function of lambda, per degree. Other
/// hyper-parameters are re-selected by CV at each lambda.
pub fn lambda_sweep(cfg: &ExperimentConfig, ds: &Dataset, lambdas: &[f64], degrees: &[Degree]) -> Result<Vec<SweepRow>> {
    let p = kernel_specs(cfg, ds).len();
    let mut rows = Vec::new();
    for &d in degrees {
        let method = counterpart(cfg.algorithm, d);
        for &lambda in lambdas {
            let cv = run_cv_grid(cfg, ds, method, grid_for_lambdas(cfg, method, p, &[lambda]))?;
            let Some(point) = cv.selected_point().cloned() else {
                rows.push(SweepRow {
                    method: method.name().into(),
                    degree: d.as_u8(),
                    lambda,
                    cv_rmse: f64::NAN,
                    cv_msf: f64::NAN,
                    test_rmse: None,
                    test_msf: None,
                });
                continue;
            };
            let best = &cv.table[cv.selected.expect("selected")];
            let report = run_splits(cfg, ds, method, &point)?;
            rows.push(SweepRow {
                method: method.name().into(),
                degree: d.as_u8(),
                lambda,
                cv_rmse: best.rmse,
                cv_msf: best.msf,
                test_rmse: Some(report.rmse_mean),
                test_msf: Some(report.msf_mean),
            });
        }
    }
    Ok(rows)
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cv: Vec<CvOutcome>,
    pub reports: Vec<MetricsReport>,
    pub sweep: Vec<SweepRow>,
}

/// Main method plus (optionally) both baselines at the same degree.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentOutput> {
    let main = Method::new(cfg.algorithm, cfg.degree());
    let mut methods = vec![main];
    if cfg.baselines {
        for a in [Algorithm::Bm, Algorithm::Unif] {
            if a != main.algorithm {
                methods.push(Method::new(a, main.degree));
            }
        }
    }
    let mut cv = Vec::new();
    let mut reports = Vec::new();
    for m in methods {
        let (c, r) = select_and_evaluate(cfg, ds, m)?;
        cv.push(c);
        reports.push(r);
    }
    let sweep = sweep_from_cv(cfg, &cv[0]);
    Ok(ExperimentOutput { cv, reports, sweep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::DataFormat;
    use crate::harness::config::DatasetConfig;
    use crate::kernels::KernelKind;
    use crate::linalg::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(algorithm: Algorithm, degree: Option<Degree>) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig { path: "unused.csv".into(), format: DataFormat::Csv },
            kernels: None,
            task: Task::Regression,
            algorithm,
            degree,
            lambda_grid: vec![0.1, 1.0],
            radius_grid: vec![0.5, 1.0],
            beta_grid: vec![0.5],
            mu0: 1.0,
            q: mkl::NormOrder::L2,
            cv_folds: 3,
            n_splits: 4,
            split_fraction: 0.5,
            seed: 7,
            rng: super::super::config::RNG_NAME.into(),
            solver: Default::default(),
            decouple_lambda: false,
            baselines: true,
        }
    }

    fn synthetic(m: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let y = (0..m).map(|i| label_of(x.get(i, 0) + 0.3 * x.get(i, 1))).collect();
        Dataset::new("synthetic", x, y).unwrap()
    }

    #[test]
    fn metrics_and_tie_rule() {
        assert_eq!(rmse(&[1.0, -1.0], &[1.0, -1.0]), 0.0);
        assert_eq!(msf(&[0.0, 0.0, 0.0, 0.0], &[1.0, -1.0, 1.0, -1.0]), 0.5);
        assert_eq!(label_of(0.0), 1.0);
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(argmin_first(&[2.0, 1.0, 1.0, f64::NAN]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN]), None);
    }

    #[test]
    fn oracle_and_zero_predictors() {
        let ds = synthetic(30, 3, 1);
        let cfg = config(Algorithm::Unif, Some(Degree::Linear));
        let oracle = run_splits_with(&cfg, &ds, "oracle", Degree::Linear, None, |p| {
            Ok(Fitted { predictions: p.y_test.clone(), mu: vec![], trace: vec![] })
        })
        .unwrap();
        assert_eq!((oracle.rmse_mean, oracle.msf_mean), (0.0, 0.0));
        assert_eq!(oracle.rmse_per_split.len(), cfg.n_splits);
        let zero = run_splits_with(&cfg, &ds, "zero", Degree::Linear, None, |p| {
            Ok(Fitted { predictions: vec![0.0; p.y_test.len()], mu: vec![], trace: vec![] })
        })
        .unwrap();
        for s in 0..cfg.n_splits {
            let (_, test) = rng::split(ds.len(), 0.5, cfg.seed, s);
            let negatives = test.iter().filter(|&&i| ds.y[i] < 0.0).count() as f64 / test.len() as f64;
            assert_eq!(zero.msf_per_split[s], negatives);
        }
        let (m, s) = mean_std(&zero.msf_per_split);
        assert_eq!((zero.msf_mean, zero.msf_std), (m, s));
    }

    #[test]
    fn splits_are_reproducible() {
        let ds = synthetic(24, 3, 2);
        let cfg = config(Algorithm::Pgd, None);
        let pt = GridPoint { radius: Some(0.5), ..GridPoint::lambda_only(0.1) };
        let m = Method::new(Algorithm::Pgd, Degree::Linear);
        let a = run_splits(&cfg, &ds, m, &pt).unwrap();
        let b = run_splits(&cfg, &ds, m, &pt).unwrap();
        assert_eq!(a.rmse_per_split, b.rmse_per_split);
        assert_eq!(a.traces, b.traces);
        assert!(a.msf_per_split.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cv_single_point_and_ties() {
        let ds = synthetic(20, 2, 3);
        let mut cfg = config(Algorithm::Unif, Some(Degree::Linear));
        cfg.lambda_grid = vec![0.5];
        let cv = run_cv(&cfg, &ds, Method::new(Algorithm::Unif, Degree::Linear)).unwrap();
        assert_eq!(cv.table.len(), 1);
        assert_eq!(cv.selected, Some(0));
        cfg.lambda_grid = vec![0.5, 0.5];
        let cv = run_cv(&cfg, &ds, Method::new(Algorithm::Unif, Degree::Linear)).unwrap();
        assert_eq!(cv.table[0].rmse, cv.table[1].rmse);
        assert_eq!(cv.selected, Some(0));
    }

    #[test]
    fn two_fold_cv_matches_hand_computed_krr() {
        // 4 rows, one linear kernel, standardization redone by hand
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let ds = Dataset::new("four", x, vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        let mut cfg = config(Algorithm::Unif, Some(Degree::Linear));
        cfg.kernels = Some(vec![KernelSpec::linear()]);
        cfg.cv_folds = 2;
        cfg.lambda_grid = vec![0.5];
        let cv = run_cv(&cfg, &ds, Method::new(Algorithm::Unif, Degree::Linear)).unwrap();
        let mut errs = Vec::new();
        for val in rng::folds(4, 2, cfg.seed) {
            let train = rng::complement(4, &val);
            // standardize the single feature on the two training rows
            let xs: Vec<f64> = train.iter().map(|&i| (i + 1) as f64).collect();
            let mean = (xs[0] + xs[1]) / 2.0;
            let sd = (((xs[0] - mean).powi(2) + (xs[1] - mean).powi(2)) / 2.0).sqrt();
            let z = |v: f64| (v - mean) / sd;
            let (a, b) = (z(xs[0]), z(xs[1]));
            // (K + lambda I)^{-1} y for the 2x2 linear Gram matrix
            let (k11, k12, k22) = (a * a + 0.5, a * b, b * b + 0.5);
            let det = k11 * k22 - k12 * k12;
            let (y1, y2) = (ds.y[train[0]], ds.y[train[1]]);
            let alpha = [(k22 * y1 - k12 * y2) / det, (k11 * y2 - k12 * y1) / det];
            let mut se = 0.0;
            for &v in &val {
                let t = z((v + 1) as f64);
                let pred = alpha[0] * t * a + alpha[1] * t * b;
                se += (pred - ds.y[v]).powi(2);
            }
            errs.push((se / val.len() as f64).sqrt());
        }
        let want = (errs[0] + errs[1]) / 2.0;
        assert!((cv.table[0].rmse - want).abs() <= 1e-8, "{} vs {want}", cv.table[0].rmse);
    }

    #[test]
    fn grid_order_and_decoupling() {
        let mut cfg = config(Algorithm::Pgd, None);
        let g = grid(&cfg, Method::new(Algorithm::Pgd, Degree::Linear), 3);
        assert_eq!(g.len(), 4);
        assert_eq!((g[1].lambda, g[1].radius), (0.1, Some(1.0)));
        cfg.decouple_lambda = true;
        assert_eq!(grid(&cfg, Method::new(Algorithm::Pgd, Degree::Linear), 3).len(), 8);
        assert_eq!(grid(&cfg, Method::new(Algorithm::Bm, Degree::Linear), 3).len(), 6);
    }

    #[test]
    fn single_kernel_baselines_coincide() {
        let ds = synthetic(20, 2, 4);
        let mut cfg = config(Algorithm::Unif, Some(Degree::Linear));
        cfg.kernels = Some(vec![KernelSpec::gaussian(0.5)]);
        let b = run_baselines(&cfg, &ds, Degree::Linear).unwrap();
        assert_eq!(b[0].1.rmse_per_split, b[1].1.rmse_per_split);
    }

    #[test]
    fn best_single_kernel_finds_the_generating_kernel() {
        // y depends on feature 0 only; single-feature kernels on 0 and 1
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(40, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..40).map(|i| 2.0 * x.get(i, 0)).collect();
        let ds = Dataset::new("gen", x, y).unwrap();
        let mut cfg = config(Algorithm::Bm, Some(Degree::Linear));
        let feat = |f| KernelSpec::new(KernelKind::SingleFeatureLinear { feature_index: f }, crate::kernels::Normalize::None).unwrap();
        cfg.kernels = Some(vec![feat(1), feat(0)]);
        let cv = run_cv(&cfg, &ds, Method::new(Algorithm::Bm, Degree::Linear)).unwrap();
        assert_eq!(cv.selected_point().unwrap().kernel, Some(1));
    }

    #[test]
    fn uniform_degrees_differ() {
        let ds = synthetic(16, 2, 6);
        let specs = vec![KernelSpec::gaussian(0.3), KernelSpec::gaussian(2.0)];
        let part = partition(&ds, &specs, &(0..8).collect::<Vec<_>>(), &(8..16).collect::<Vec<_>>()).unwrap();
        let lin = part.bank.combined_gram(&CombinationParams::uniform(2, Degree::Linear)).unwrap();
        let quad = part.bank.combined_gram(&CombinationParams::uniform(2, Degree::Quadratic)).unwrap();
        assert!(lin.as_slice().iter().zip(quad.as_slice()).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn no_leakage_from_test_rows() {
        // changing a test row must not change training-side quantities
        let ds = synthetic(12, 2, 8);
        let specs = vec![KernelSpec::gaussian(0.5)];
        let train: Vec<usize> = (0..6).collect();
        let test: Vec<usize> = (6..12).collect();
        let a = partition(&ds, &specs, &train, &test).unwrap();
        let mut ds2 = ds.clone();
        ds2.x.set(7, 0, 100.0);
        let b = partition(&ds2, &specs, &train, &test).unwrap();
        assert_eq!(a.bank.train_gram(0), b.bank.train_gram(0));
        let row = |p: &Partition, r: usize| p.bank.cross_grams().unwrap()[0].row(r).to_vec();
        assert_eq!(row(&a, 0), row(&b, 0));
        assert_ne!(row(&a, 1), row(&b, 1));
    }
}
