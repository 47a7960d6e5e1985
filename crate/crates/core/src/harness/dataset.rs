//! CSV and libsvm loaders, binary label coercion, and train-only standardization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.rows(), got: y.len() });
        }
        if x.rows() < 2 {
            return Err(Error::EmptyDataset);
        }
        for i in 0..x.rows() {
            if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature { row: i, col: j });
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse { line: i + 1, msg: "non-finite label".into() });
        }
        Ok(Self { name: name.into(), x, y, feature_names: None })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> (Matrix<f64>, Vec<f64>) {
        (self.x.select_rows(idx), idx.iter().map(|&i| self.y[i]).collect())
    }

    /// Maps a binary coding to `{-1, +1}` and requires both classes.
    pub fn into_binary(mut self) -> Result<Self> {
        self.y = coerce_labels(&self.y)?;
        Ok(self)
    }
}

/// `{-1,1}` passes through, `{0,1}` and `{1,2}` map low to -1 and high to +1.
pub fn coerce_labels(y: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in y {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() > 2 {
                return Err(Error::LabelCoercion(format!("more than two label values: {distinct:?}")));
            }
        }
    }
    distinct.sort_by(f64::total_cmp);
    let (lo, hi) = match distinct.as_slice() {
        [a, b] => (*a, *b),
        _ => return Err(Error::SingleClass),
    };
    let known = [(-1.0, 1.0), (0.0, 1.0), (1.0, 2.0)];
    if !known.contains(&(lo, hi)) {
        return Err(Error::LabelCoercion(format!("labels {lo} and {hi} are not a recognized binary coding")));
    }
    Ok(y.iter().map(|&v| if v == hi { 1.0 } else { -1.0 }).collect())
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match format {
        DataFormat::Csv => parse_csv(&text, &name),
        DataFormat::Libsvm => parse_libsvm(&text, &name, None),
    }
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: {:?}", field.trim()) })
}

/// Comma-separated, label in the last column. A first row with any
/// non-numeric field is taken as the header. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut header = None;
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rows.is_empty() && header.is_none() && record.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse { line, msg: "need at least one feature and a label".into() });
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse { line, msg: format!("expected {w} fields, found {}", record.len()) })
            }
            _ => width = Some(record.len()),
        }
        let vals = record.iter().map(|f| parse_number(f, line)).collect::<Result<Vec<f64>>>()?;
        let (label, feats) = vals.split_last().expect("len >= 2");
        y.push(*label);
        rows.push(feats.to_vec());
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ds = Dataset::new(name, Matrix::from_rows(&rows)?, y)?;
    ds.feature_names = header.map(|mut h| {
        h.pop();
        h
    });
    Ok(ds)
}

/// `label idx:val ...` with 1-based indices; missing entries are zero.
/// The width is the largest index seen unless `n_features` is given.
pub fn parse_libsvm(text: &str, name: &str, n_features: Option<usize>) -> Result<Dataset> {
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut y = Vec::new();
    let mut width = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let label = parse_number(parts.next().expect("non-empty"), line)?;
        let mut entries = Vec::new();
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse { line, msg: format!("expected idx:val, got {tok:?}") })?;
            let idx: usize = i.parse().map_err(|_| Error::Parse { line, msg: format!("bad index {i:?}") })?;
            if idx == 0 {
                return Err(Error::Parse { line, msg: "feature indices start at 1".into() });
            }
            if let Some(n) = n_features {
                if idx > n {
                    return Err(Error::Parse { line, msg: format!("index {idx} exceeds {n} features") });
                }
            }
            width = width.max(idx);
            entries.push((idx - 1, parse_number(v, line)?));
        }
        y.push(label);
        sparse.push(entries);
    }
    if sparse.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = n_features.unwrap_or(width);
    let mut x = Matrix::zeros(sparse.len(), n);
    for (r, entries) in sparse.iter().enumerate() {
        for &(c, v) in entries {
            x.set(r, c, v);
        }
    }
    Dataset::new(name, x, y)
}

/// Per-feature mean and population standard deviation of a training block.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix<f64>) -> Result<Self> {
        let (m, n) = (x.rows(), x.cols());
        if m == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut mean = vec![0.0; n];
        for i in 0..m {
            mean.iter_mut().zip(x.row(i)).for_each(|(a, &v)| *a += v);
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let mut var = vec![0.0; n];
        for i in 0..m {
            for (j, &v) in x.row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        let scale = var.into_iter().map(|v| (v / m as f64).sqrt()).collect();
        Ok(Self { mean, scale })
    }

    /// Centers every column; scales only columns with positive spread.
    pub fn apply(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: x.cols() });
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            let c = x.get(i, j) - self.mean[j];
            if self.scale[j] > 1e-12 {
                c / self.scale[j]
            } else {
                c
            }
        }))
    }
}

/// Standardizes `train` and `test` with statistics of `train` only.
pub fn standardize(train: &Matrix<f64>, test: &Matrix<f64>) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let s = Standardizer::fit(train)?;
    Ok((s.apply(train)?, s.apply(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn csv_examples() {
        let ds = parse_csv("1,0,1\n0,1,-1\n", "t").unwrap();
        assert_eq!(ds.x.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(ds.y, vec![1.0, -1.0]);
        let ds = parse_csv("a,b,label\n1,2,0\n3,4,1\n", "t").unwrap();
        assert_eq!(ds.feature_names, Some(vec!["a".to_string(), "b".to_string()]));
        assert_eq!(ds.len(), 2);
        match parse_csv("1,2,1\n3,x,1\n", "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_csv("1,2,1\n3,1\n", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("1,nan,1\n3,1,1\n", "t"), Err(Error::NonFiniteFeature { row: 0, col: 1 })));
    }

    #[test]
    fn libsvm_examples() {
        let ds = parse_libsvm("+1 1:0.5 3:2\n-1 2:1\n", "t", Some(3)).unwrap();
        assert_eq!(ds.x.row(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.x.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.y, vec![1.0, -1.0]);
        assert!(matches!(parse_libsvm("1 1:1\n1 0:2\n", "t", None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_libsvm("1 1:1\n1 4:2\n", "t", Some(3)), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn label_coercion() {
        assert_eq!(coerce_labels(&[0.0, 1.0, 1.0, 0.0]).unwrap(), vec![-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(coerce_labels(&[2.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(coerce_labels(&[-1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert!(matches!(coerce_labels(&[0.0, 3.0]), Err(Error::LabelCoercion(_))));
        assert!(matches!(coerce_labels(&[0.0, 1.0, 2.0]), Err(Error::LabelCoercion(_))));
        assert!(matches!(coerce_labels(&[1.0, 1.0]), Err(Error::SingleClass)));
    }

    #[test]
    fn load_from_disk() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2,1\n3,4,2").unwrap();
        let ds = load_dataset(f.path(), DataFormat::Csv).unwrap().into_binary().unwrap();
        assert_eq!(ds.y, vec![-1.0, 1.0]);
        assert!(matches!(load_dataset(Path::new("/nonexistent/file.csv"), DataFormat::Csv), Err(Error::Io(_))));
    }

    #[test]
    fn standardization_uses_train_statistics_only() {
        let train = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let test = Matrix::from_rows(&[vec![5.0, 7.0]]).unwrap();
        let (tr, te) = standardize(&train, &test).unwrap();
        assert_eq!(tr.to_rows(), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        // mean 2, std 1 from train; the constant column is only centered
        assert_eq!(te.to_rows(), vec![vec![3.0, 2.0]]);
        let again = Standardizer::fit(&tr).unwrap().apply(&tr).unwrap();
        for (a, b) in again.to_rows().iter().flatten().zip(tr.to_rows().iter().flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
