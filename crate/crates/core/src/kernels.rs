//! Base kernels, Gram-matrix banks, and the combined kernel for linear
//! (`d = 1`) and quadratic (`d = 2`) combinations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, hadamard, Matrix, ShiftedFactor, SymMatrix};
use crate::scalar::{dot, Scalar};

/// Diagonal tolerance for unit-diagonal normalization.
const DIAG_FLOOR: f64 = 1e-12;
/// PSD tolerance on the smallest eigenvalue of every base Gram matrix.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Gaussian { gamma: f64 },
    /// `x_f * x'_f` for a single feature `f`.
    SingleFeatureLinear { feature_index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    None,
    #[default]
    UnitDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRepr", into = "KernelSpecRepr")]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub normalize: Normalize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, normalize: Normalize) -> Result<Self> {
        match kind {
            KernelKind::Polynomial { degree, offset } if degree == 0 || !(offset >= 0.0) => {
                return Err(Error::InvalidArgument(format!(
                    "polynomial kernel needs degree >= 1 and offset >= 0 (got {degree}, {offset})"
                )))
            }
            KernelKind::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                return Err(Error::InvalidArgument(format!("gaussian gamma must be > 0, got {gamma}")))
            }
            _ => {}
        }
        Ok(Self { kind, normalize })
    }

    pub fn gaussian(gamma: f64) -> Self {
        Self::new(KernelKind::Gaussian { gamma }, Normalize::UnitDiagonal).expect("valid gamma")
    }

    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, normalize: Normalize::None }
    }

    /// Raw (unnormalized) kernel value.
    pub fn eval<T: Scalar>(&self, x: &[T], z: &[T]) -> T {
        match self.kind {
            KernelKind::Linear => dot(x, z),
            KernelKind::Polynomial { degree, offset } => {
                (dot(x, z) + T::of(offset)).powi(degree as i32)
            }
            KernelKind::Gaussian { gamma } => {
                let d2: T = x.iter().zip(z).map(|(&a, &b)| (a - b) * (a - b)).sum();
                (-T::of(gamma) * d2).exp()
            }
            KernelKind::SingleFeatureLinear { feature_index } => x[feature_index] * z[feature_index],
        }
    }

    fn check_features(&self, n_features: usize) -> Result<()> {
        if let KernelKind::SingleFeatureLinear { feature_index } = self.kind {
            if feature_index >= n_features {
                return Err(Error::InvalidArgument(format!(
                    "feature index {feature_index} out of range for {n_features} features"
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian bank with bandwidths `2^-3 .. 2^3`, each divided by the number of
/// features so the kernels stay informative on standardized data of any width.
pub fn default_bank_specs(n_features: usize) -> Vec<KernelSpec> {
    let n = n_features.max(1) as f64;
    (-3..=3).map(|e| KernelSpec::gaussian(2f64.powi(e) / n)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_index: Option<usize>,
    #[serde(default)]
    normalize: Option<Normalize>,
}

impl TryFrom<KernelSpecRepr> for KernelSpec {
    type Error = String;

    fn try_from(r: KernelSpecRepr) -> std::result::Result<Self, String> {
        let missing = |f: &str| format!("kernel kind '{}' requires field '{f}'", r.kind);
        let kind = match r.kind.as_str() {
            "linear" => KernelKind::Linear,
            "polynomial" => KernelKind::Polynomial {
                degree: r.degree.ok_or_else(|| missing("degree"))?,
                offset: r.offset.unwrap_or(0.0),
            },
            "gaussian" => KernelKind::Gaussian { gamma: r.gamma.ok_or_else(|| missing("gamma"))? },
            "single_feature_linear" => KernelKind::SingleFeatureLinear {
                feature_index: r.feature_index.ok_or_else(|| missing("feature_index"))?,
            },
            other => return Err(format!("unknown kernel kind '{other}'")),
        };
        let normalize = r.normalize.unwrap_or(match kind {
            KernelKind::Gaussian { .. } => Normalize::UnitDiagonal,
            _ => Normalize::None,
        });
        KernelSpec::new(kind, normalize).map_err(|e| e.to_string())
    }
}

impl From<KernelSpec> for KernelSpecRepr {
    fn from(s: KernelSpec) -> Self {
        let mut r = KernelSpecRepr {
            kind: String::new(),
            degree: None,
            offset: None,
            gamma: None,
            feature_index: None,
            normalize: Some(s.normalize),
        };
        match s.kind {
            KernelKind::Linear => r.kind = "linear".into(),
            KernelKind::Polynomial { degree, offset } => {
                r.kind = "polynomial".into();
                r.degree = Some(degree);
                r.offset = Some(offset);
            }
            KernelKind::Gaussian { gamma } => {
                r.kind = "gaussian".into();
                r.gamma = Some(gamma);
            }
            KernelKind::SingleFeatureLinear { feature_index } => {
                r.kind = "single_feature_linear".into();
                r.feature_index = Some(feature_index);
            }
        }
        r
    }
}

/// Degree of the kernel combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Degree {
    /// `sum_k mu_k K_k`
    Linear,
    /// `(sum_k mu_k K_k) o (sum_k mu_k K_k)`
    Quadratic,
}

impl Degree {
    pub fn as_u8(self) -> u8 {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }
}

impl TryFrom<u8> for Degree {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Degree::Linear),
            2 => Ok(Degree::Quadratic),
            _ => Err(format!("combination degree must be 1 or 2, got {v}")),
        }
    }
}

impl From<Degree> for u8 {
    fn from(d: Degree) -> u8 {
        d.as_u8()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationParams<T> {
    pub mu: Vec<T>,
    pub degree: Degree,
}

impl<T: Scalar> CombinationParams<T> {
    pub fn new(mu: Vec<T>, degree: Degree) -> Self {
        Self { mu, degree }
    }

    pub fn uniform(p: usize, degree: Degree) -> Self {
        Self { mu: vec![T::one() / T::from_usize_lossy(p); p], degree }
    }
}

/// The `p` base Gram matrices on a training set, plus optional
/// test-versus-train blocks.
#[derive(Debug, Clone)]
pub struct BaseKernelBank<T> {
    specs: Vec<KernelSpec>,
    train_grams: Vec<SymMatrix<T>>,
    cross_grams: Option<Vec<Matrix<T>>>,
}

impl<T: Scalar> BaseKernelBank<T> {
    /// Wraps precomputed Gram matrices. Every matrix must be PSD.
    pub fn from_grams(train_grams: Vec<SymMatrix<T>>, cross_grams: Option<Vec<Matrix<T>>>) -> Result<Self> {
        let p = train_grams.len();
        if p == 0 {
            return Err(Error::InvalidArgument("a kernel bank needs at least one kernel".into()));
        }
        let m = train_grams[0].dim();
        for g in &train_grams {
            check_len(m, g.dim())?;
        }
        if let Some(cross) = &cross_grams {
            check_len(p, cross.len())?;
            let t = cross[0].rows();
            for c in cross {
                check_len(m, c.cols())?;
                check_len(t, c.rows())?;
            }
        }
        for (k, g) in train_grams.iter().enumerate() {
            check_psd(k, g)?;
        }
        let specs = vec![KernelSpec::linear(); p];
        Ok(Self { specs, train_grams, cross_grams })
    }

    pub fn num_kernels(&self) -> usize {
        self.train_grams.len()
    }

    pub fn num_train(&self) -> usize {
        self.train_grams[0].dim()
    }

    pub fn num_test(&self) -> Option<usize> {
        self.cross_grams.as_ref().map(|c| c[0].rows())
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn train_grams(&self) -> &[SymMatrix<T>] {
        &self.train_grams
    }

    pub fn train_gram(&self, k: usize) -> &SymMatrix<T> {
        &self.train_grams[k]
    }

    pub fn cross_grams(&self) -> Option<&[Matrix<T>]> {
        self.cross_grams.as_deref()
    }

    /// A bank restricted to a single base kernel.
    pub fn single(&self, k: usize) -> Self {
        Self {
            specs: vec![self.specs[k]],
            train_grams: vec![self.train_grams[k].clone()],
            cross_grams: self.cross_grams.as_ref().map(|c| vec![c[k].clone()]),
        }
    }

    fn check_mu(&self, params: &CombinationParams<T>) -> Result<()> {
        check_len(self.num_kernels(), params.mu.len())
    }

    /// `sum_k mu_k K_k` on the training block, ignoring the degree.
    pub fn linear_gram(&self, mu: &[T]) -> Result<SymMatrix<T>> {
        check_len(self.num_kernels(), mu.len())?;
        let mut acc = SymMatrix::zeros(self.num_train());
        for (g, &w) in self.train_grams.iter().zip(mu) {
            if w != T::zero() {
                acc.axpy(w, g)?;
            }
        }
        Ok(acc)
    }

    /// Combined training Gram matrix `K_mu` for the requested degree.
    pub fn combined_gram(&self, params: &CombinationParams<T>) -> Result<SymMatrix<T>> {
        self.check_mu(params)?;
        let lin = self.linear_gram(&params.mu)?;
        match params.degree {
            Degree::Linear => Ok(lin),
            Degree::Quadratic => hadamard(&lin, &lin),
        }
    }

    /// Combined test-versus-train block for the requested degree.
    pub fn combined_cross(&self, params: &CombinationParams<T>) -> Result<Matrix<T>> {
        self.check_mu(params)?;
        let cross = self.cross_grams.as_ref().ok_or(Error::MissingCrossGrams)?;
        let mut acc = Matrix::zeros(cross[0].rows(), cross[0].cols());
        for (c, &w) in cross.iter().zip(&params.mu) {
            if w != T::zero() {
                acc.axpy(w, c)?;
            }
        }
        match params.degree {
            Degree::Linear => Ok(acc),
            Degree::Quadratic => acc.hadamard(&acc),
        }
    }
}

fn check_psd<T: Scalar>(k: usize, g: &SymMatrix<T>) -> Result<()> {
    // Cholesky of K + tol*I succeeds iff lambda_min(K) > -tol; fall back to
    // the eigensolver only to report the offending eigenvalue.
    let tol = T::of(PSD_TOL);
    match ShiftedFactor::new(g, tol) {
        Ok(f) if f.is_cholesky() => Ok(()),
        _ => {
            let (lo, _) = linalg::extremal_eigs(g)?;
            if lo >= -tol {
                Ok(())
            } else {
                Err(Error::NotPsd { kernel: k, min_eig: lo.to_f64_lossy() })
            }
        }
    }
}

fn check_finite<T: Scalar>(x: &Matrix<T>) -> Result<()> {
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Evaluates every base kernel on the training rows (and, when given, the
/// test rows against the training rows).
pub fn build_bank<T: Scalar>(
    specs: &[KernelSpec],
    x_train: &Matrix<T>,
    x_test: Option<&Matrix<T>>,
) -> Result<BaseKernelBank<T>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("a kernel bank needs at least one kernel".into()));
    }
    if x_train.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    check_finite(x_train)?;
    if let Some(xt) = x_test {
        check_finite(xt)?;
        check_len(x_train.cols(), xt.cols())?;
    }
    let m = x_train.rows();
    let mut train_grams = Vec::with_capacity(specs.len());
    let mut cross_grams = x_test.map(|_| Vec::with_capacity(specs.len()));
    for (k, spec) in specs.iter().enumerate() {
        spec.check_features(x_train.cols())?;
        let mut g = gram(spec, x_train);
        let diag = g.diag();
        if spec.normalize == Normalize::UnitDiagonal {
            if let Some(i) = diag.iter().position(|&d| !(d > T::of(DIAG_FLOOR))) {
                return Err(Error::DegenerateKernel { kernel: k, index: i });
            }
            let inv: Vec<T> = diag.iter().map(|d| T::one() / d.sqrt()).collect();
            g = SymMatrix::from_upper_fn(m, |i, j| {
                if i == j {
                    T::one()
                } else {
                    g.get(i, j) * inv[i] * inv[j]
                }
            });
        }
        check_psd(k, &g)?;
        if let (Some(xt), Some(cross)) = (x_test, cross_grams.as_mut()) {
            let mut c = Matrix::from_fn(xt.rows(), m, |t, j| spec.eval(xt.row(t), x_train.row(j)));
            if spec.normalize == Normalize::UnitDiagonal {
                for t in 0..xt.rows() {
                    let self_k = spec.eval(xt.row(t), xt.row(t));
                    if !(self_k > T::of(DIAG_FLOOR)) {
                        return Err(Error::DegenerateKernel { kernel: k, index: t });
                    }
                    let st = self_k.sqrt();
                    for j in 0..m {
                        let v = c.get(t, j) / (st * diag[j].sqrt());
                        c.set(t, j, v);
                    }
                }
            }
            cross.push(c);
        }
        train_grams.push(g);
    }
    Ok(BaseKernelBank { specs: specs.to_vec(), train_grams, cross_grams })
}

fn gram<T: Scalar>(spec: &KernelSpec, x: &Matrix<T>) -> SymMatrix<T> {
    let m = x.rows();
    match spec.kind {
        KernelKind::Gaussian { gamma } => {
            let g = T::of(gamma);
            SymMatrix::from_upper_fn(m, |i, j| {
                if i == j {
                    T::one()
                } else {
                    let d2: T = x.row(i).iter().zip(x.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
                    (-g * d2).exp()
                }
            })
        }
        _ => SymMatrix::from_upper_fn(m, |i, j| spec.eval(x.row(i), x.row(j))),
    }
}
