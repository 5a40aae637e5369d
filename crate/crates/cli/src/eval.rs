//! Scoring predictions and the acceptability tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use degusta_core::acceptability::{objective_acceptance, parse_ratings_jsonl, subjective_acceptance, RatingRecord};
use degusta_core::dataset::{load_arrangement, read_case};
use degusta_core::evaluation::{evaluate_with, EvalReport, Matching};
use degusta_core::prompt::Method;
use degusta_core::simulation::Split;
use degusta_core::{Arrangement, Catalog};
use degusta_models::Prediction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exit::UsageError;
use crate::io::{self, Manifest};
use crate::{AcceptabilityArgs, Context, EvalArgs, EvalBatchArgs};

/// Anything that carries a predicted arrangement.
#[derive(Deserialize)]
#[serde(untagged)]
enum PredictedFile {
    Prediction(Box<Prediction>),
    Versioned { data: Arrangement },
    Plain(Arrangement),
}

fn read_predicted(path: &Path) -> anyhow::Result<Arrangement> {
    Ok(match io::read_json::<PredictedFile>(path)? {
        PredictedFile::Prediction(p) => p.arrangement,
        PredictedFile::Versioned { data } => data,
        PredictedFile::Plain(a) => a,
    })
}

fn read_truth(path: &Path) -> anyhow::Result<Arrangement> {
    load_arrangement(path)
        .map_err(anyhow::Error::from)
        .or_else(|_| read_predicted(path))
        .with_context(|| format!("reading {}", path.display()))
}

pub fn eval(ctx: &Context, a: EvalArgs) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let gt = read_truth(&a.gt)?;
    let pred = read_predicted(&a.pred)?;
    io::print_json(&evaluate_with(&gt, &pred, &catalog, a.matching.into()));
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseEval {
    pub case: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub method: Method,
    /// False when no prediction file existed and an empty one was scored.
    pub predicted: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
struct MethodSummary {
    method: Method,
    split: String,
    cases: usize,
    missing: usize,
    mean_accuracy: f64,
    /// Over cases with a defined RMSD.
    mean_rmsd: Option<f64>,
    rmsd_cases: usize,
    all_correct: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(method: Method, split: &str, rows: &[&CaseEval]) -> MethodSummary {
    let rmsds: Vec<f64> = rows.iter().filter_map(|r| r.report.rmsd).collect();
    MethodSummary {
        method,
        split: split.to_string(),
        cases: rows.len(),
        missing: rows.iter().filter(|r| !r.predicted).count(),
        mean_accuracy: mean(rows.iter().map(|r| r.report.accuracy)).unwrap_or(0.0),
        mean_rmsd: mean(rmsds.iter().copied()),
        rmsd_cases: rmsds.len(),
        all_correct: rows.iter().filter(|r| r.report.all_correct).count(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn case_csv(rows: &[CaseEval], summaries: &[MethodSummary]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "case",
        "split",
        "method",
        "predicted",
        "accuracy",
        "rmsd",
        "rotation_error",
        "matched",
        "gt_objects",
        "pred_objects",
    ])?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            r.split.map(|s| s.as_str().to_string()).unwrap_or_default(),
            r.method.as_str().to_string(),
            r.predicted.to_string(),
            r.report.accuracy.to_string(),
            fmt_opt(r.report.rmsd),
            fmt_opt(r.report.rotation_error),
            r.report.n().to_string(),
            r.report.gt_objects.to_string(),
            r.report.pred_objects.to_string(),
        ])?;
    }
    for s in summaries.iter().filter(|s| s.split == "all") {
        w.write_record([
            "mean".to_string(),
            String::new(),
            s.method.as_str().to_string(),
            String::new(),
            s.mean_accuracy.to_string(),
            fmt_opt(s.mean_rmsd),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn summary_csv(summaries: &[MethodSummary]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "split", "cases", "missing", "mean_accuracy", "mean_rmsd", "rmsd_cases", "all_correct"])?;
    for s in summaries {
        w.write_record([
            s.method.as_str().to_string(),
            s.split.clone(),
            s.cases.to_string(),
            s.missing.to_string(),
            s.mean_accuracy.to_string(),
            fmt_opt(s.mean_rmsd),
            s.rmsd_cases.to_string(),
            s.all_correct.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn score_case(
    dir: &Path,
    method: Method,
    catalog: &Catalog,
    matching: Matching,
    allow_missing: bool,
) -> anyhow::Result<CaseEval> {
    let case = read_case(dir).with_context(|| format!("reading case {}", dir.display()))?;
    let file = io::prediction_file(dir, method);
    let (pred, predicted) = if file.exists() {
        (read_predicted(&file)?, true)
    } else if allow_missing {
        (case.initial(), false)
    } else {
        anyhow::bail!("no {} prediction for case {} ({})", method, case.id, file.display());
    };
    Ok(CaseEval {
        report: evaluate_with(&case.ground_truth, &pred, catalog, matching),
        case: case.id,
        split: case.split,
        method,
        predicted,
    })
}

pub fn eval_batch(ctx: &Context, a: EvalBatchArgs) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let manifest = Manifest::load(&a.manifest)?;
    let dirs: Vec<PathBuf> = manifest.cases().map(|(_, d)| d).collect();
    let methods = if a.method.is_empty() {
        let found: Vec<Method> = Method::ALL
            .into_iter()
            .filter(|m| dirs.iter().any(|d| io::prediction_file(d, *m).exists()))
            .collect();
        if found.is_empty() {
            return Err(UsageError(format!("no prediction files under {}", manifest.root.display())).into());
        }
        found
    } else {
        a.method.clone()
    };
    let out = a.out.clone().unwrap_or_else(|| manifest.root.clone());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs.or(ctx.file.jobs) {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build()?;

    let mut all_summaries = Vec::new();
    for method in methods {
        let rows = pool.install(|| {
            dirs.par_iter()
                .map(|d| score_case(d, method, &catalog, a.matching.into(), a.allow_missing))
                .collect::<anyhow::Result<Vec<_>>>()
        })?;
        let mut groups: BTreeMap<String, Vec<&CaseEval>> = BTreeMap::new();
        groups.insert("all".into(), rows.iter().collect());
        for r in &rows {
            if let Some(split) = r.split {
                groups.entry(split.as_str().to_string()).or_default().push(r);
            }
        }
        let summaries: Vec<MethodSummary> = groups.iter().map(|(k, v)| summarize(method, k, v)).collect();
        let stem = format!("eval_{}", method.as_str().to_lowercase());
        io::write_text(&out.join(format!("{stem}.csv")), &case_csv(&rows, &summaries)?)?;
        io::write_json(&out.join(format!("{stem}.json")), &rows)?;
        all_summaries.extend(summaries);
    }
    io::write_text(&out.join("summary.csv"), &summary_csv(&all_summaries)?)?;
    io::print_json(&all_summaries);
    Ok(())
}

/// Evaluation reports as written by `eval` (one report) or `eval-batch` (per-case rows).
#[derive(Deserialize)]
#[serde(untagged)]
enum ReportFile {
    Rows(Vec<CaseEval>),
    Reports(Vec<EvalReport>),
    One(Box<EvalReport>),
}

fn read_reports(path: &Path) -> anyhow::Result<Vec<EvalReport>> {
    Ok(match io::read_json::<ReportFile>(path)? {
        ReportFile::Rows(rows) => rows.into_iter().map(|r| r.report).collect(),
        ReportFile::Reports(r) => r,
        ReportFile::One(r) => vec![*r],
    })
}

fn read_ratings(path: &Path) -> anyhow::Result<Vec<RatingRecord>> {
    if path.is_dir() {
        let records = io::load_records(path)?;
        return Ok(records.iter().filter_map(|r| r.rating_record()).collect());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_ratings_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn acceptability(a: AcceptabilityArgs) -> anyhow::Result<()> {
    if a.thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(UsageError("thresholds must be non-negative numbers".into()).into());
    }
    let ratings = read_ratings(&a.ratings)?;
    let mut predictions = Vec::new();
    for p in &a.predictions {
        predictions.extend(read_reports(p)?);
    }
    let report = subjective_acceptance(&ratings, &a.thresholds, &predictions);
    if let Some(path) = &a.csv {
        io::write_text(path, &report.to_csv())?;
    }
    if a.scatter.is_some() || a.correlation.is_some() {
        let summary = objective_acceptance(&ratings);
        if let Some(path) = &a.scatter {
            io::write_text(path, &summary.scatter_csv())?;
        }
        if let Some(path) = &a.correlation {
            io::write_json(path, &summary)?;
        }
    }
    io::print_json(&report);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_skip_undefined_rmsd() {
        assert_eq!(mean([1.0, 2.0, 6.0].into_iter()), Some(3.0));
        assert_eq!(mean(std::iter::empty()), None);
    }

    #[test]
    fn predicted_files_in_every_shape() {
        let dir = tempfile::tempdir().unwrap();
        let a = Arrangement::new("oak", vec![degusta_core::Placement::new(3, 0.2, 0.4, 90.0)]);
        let plain = dir.path().join("plain.json");
        std::fs::write(&plain, a.to_json()).unwrap();
        assert_eq!(read_predicted(&plain).unwrap(), a);
        let versioned = dir.path().join("versioned.json");
        degusta_core::dataset::save_arrangement(&versioned, &a).unwrap();
        assert_eq!(read_predicted(&versioned).unwrap(), a);
        assert_eq!(read_truth(&versioned).unwrap(), a);
    }
}
