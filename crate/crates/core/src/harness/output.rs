//! Result files. Everything written here is a deterministic function of the
//! configuration and the data; timings are never emitted.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, RNG_NAME};
use super::experiment::{CvOutcome, ExperimentOutput, MetricsReport, SweepRow};
use crate::error::Result;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn results_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("method,degree,metric,mean,std,n_splits,n_effective,lambda,Lambda,beta,kernel,fit_lambda\n");
    for r in reports {
        let sel = r.selected.as_ref();
        let tail = format!(
            "{},{},{},{},{}",
            opt(sel.map(|g| g.lambda)),
            opt(sel.and_then(|g| g.radius)),
            opt(sel.and_then(|g| g.beta)),
            sel.and_then(|g| g.kernel).map(|k| k.to_string()).unwrap_or_default(),
            opt(sel.and_then(|g| g.fit_lambda)),
        );
        for (metric, mean, std) in [("rmse", r.rmse_mean, r.rmse_std), ("msf", r.msf_mean, r.msf_std)] {
            s += &format!(
                "{},{},{metric},{},{},{},{},{tail}\n",
                r.method,
                r.degree,
                num(mean),
                num(std),
                r.rmse_per_split.len(),
                r.effective_splits
            );
        }
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("method,degree,lambda,cv_rmse,cv_msf,test_rmse,test_msf\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.degree,
            num(r.lambda),
            num(r.cv_rmse),
            num(r.cv_msf),
            opt(r.test_rmse),
            opt(r.test_msf)
        );
    }
    s
}

pub fn cv_csv(outcomes: &[CvOutcome]) -> String {
    let mut s = String::from("method,degree,lambda,Lambda,beta,kernel,fit_lambda,cv_rmse,cv_msf,selected\n");
    for o in outcomes {
        for (i, c) in o.table.iter().enumerate() {
            let g = &c.point;
            s += &format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.method.name(),
                o.method.degree.as_u8(),
                num(g.lambda),
                opt(g.radius),
                opt(g.beta),
                g.kernel.map(|k| k.to_string()).unwrap_or_default(),
                opt(g.fit_lambda),
                num(c.rmse),
                num(c.msf),
                o.selected == Some(i)
            );
        }
    }
    s
}

#[derive(Serialize)]
struct TraceLine<'a> {
    method: &'a str,
    degree: u8,
    split: usize,
    iter: usize,
    objective: f64,
    mu_norm: f64,
    eta: f64,
    mu: &'a [f64],
}

pub fn trace_jsonl(reports: &[MetricsReport]) -> Result<String> {
    let mut s = String::new();
    for r in reports {
        for (split, trace) in r.traces.iter().enumerate() {
            for rec in trace {
                let line = TraceLine {
                    method: &r.method,
                    degree: r.degree,
                    split,
                    iter: rec.iter,
                    objective: rec.objective,
                    mu_norm: rec.mu.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    eta: rec.eta,
                    mu: &rec.mu,
                };
                s += &serde_json::to_string(&line)?;
                s.push('\n');
            }
        }
    }
    Ok(s)
}

pub fn resolved_config(cfg: &ExperimentConfig) -> Result<String> {
    let v = json!({
        "config": cfg,
        "sign_zero": "+1",
        "rng": RNG_NAME,
        "version": env!("CARGO_PKG_VERSION"),
    });
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes `results.csv`, `lambda_sweep.csv`, `trace.jsonl`, `cv.csv` and `config.resolved.json`.
pub fn emit_experiment(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "results.csv", &results_csv(&out.reports))?;
    write(dir, "lambda_sweep.csv", &sweep_csv(&out.sweep))?;
    write(dir, "trace.jsonl", &trace_jsonl(&out.reports)?)?;
    write(dir, "cv.csv", &cv_csv(&out.cv))?;
    write(dir, "config.resolved.json", &resolved_config(cfg)?)
}

pub fn emit_cv(dir: &Path, cfg: &ExperimentConfig, cv: &[CvOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "cv.csv", &cv_csv(cv))?;
    write(dir, "config.resolved.json", &resolved_config(cfg)?)
}

pub fn emit_sweep(dir: &Path, cfg: &ExperimentConfig, rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "lambda_sweep.csv", &sweep_csv(rows))?;
    write(dir, "config.resolved.json", &resolved_config(cfg)?)
}

pub fn emit_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::GridPoint;
    use crate::mkl::IterRecord;

    fn report() -> MetricsReport {
        MetricsReport {
            method: "pgd".into(),
            degree: 1,
            selected: Some(GridPoint { radius: Some(0.5), ..GridPoint::lambda_only(0.1) }),
            rmse_mean: 0.5,
            rmse_std: 0.25,
            msf_mean: 0.1,
            msf_std: f64::NAN,
            rmse_per_split: vec![0.25, 0.75, f64::NAN],
            msf_per_split: vec![0.1, 0.1, f64::NAN],
            effective_splits: 2,
            traces: vec![vec![IterRecord { iter: 0, objective: 2.0, mu: vec![3.0, 4.0], eta: 1.0 }], vec![], vec![]],
            wall_time: 12.0,
        }
    }

    #[test]
    fn results_rows() {
        let s = results_csv(&[report()]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "pgd,1,rmse,0.5,0.25,3,2,0.1,0.5,,,");
        assert_eq!(lines[2], "pgd,1,msf,0.1,nan,3,2,0.1,0.5,,,");
    }

    #[test]
    fn trace_lines_parse() {
        let s = trace_jsonl(&[report()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
        assert_eq!(v["mu_norm"], 5.0);
        assert_eq!(v["split"], 0);
        assert!(!s.contains("wall"));
    }
}
