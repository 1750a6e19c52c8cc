//! Whole experiments: cohort loading, all folds, aggregation, artifacts,
//! and the modality and fusion grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synthetic_cohort, load_cohort, CohortManifest, Label};
use crate::fusion::FusionMode;
use crate::model::ModalityMode;
use crate::numcore::derive_seed;

use super::config::{ExperimentConfig, Scheme};
use super::metrics::{mean_std, trapezoid};
use super::splits::{loso_split, stratified_kfold, SplitPlan};
use super::train::{train_fold, CohortFeatures, FoldOutcome, FoldReport};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl MeanStd {
    fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_folds: usize,
    pub accuracy: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub f1: MeanStd,
    pub auc: MeanStd,
    /// Accuracy over every stored test prediction.
    pub pooled_accuracy: Option<f64>,
}

impl Aggregate {
    pub fn from_folds(folds: &[FoldReport]) -> Self {
        let correct: usize = folds
            .iter()
            .flat_map(|f| &f.predictions)
            .filter(|p| p.predicted == p.label)
            .count();
        let total: usize = folds.iter().map(|f| f.predictions.len()).sum();
        Self {
            n_folds: folds.len(),
            accuracy: MeanStd::of(folds.iter().map(|f| f.metrics.accuracy)),
            sensitivity: MeanStd::of(folds.iter().map(|f| f.metrics.sensitivity)),
            specificity: MeanStd::of(folds.iter().map(|f| f.metrics.specificity)),
            f1: MeanStd::of(folds.iter().map(|f| f.metrics.f1)),
            auc: MeanStd::of(folds.iter().map(|f| f.auc)),
            pooled_accuracy: (total > 0).then(|| correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAccuracy {
    pub site: String,
    pub n_test: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub source: String,
    pub n_subjects: usize,
    pub n_asd: usize,
    pub sites: Vec<String>,
    pub func_regions: usize,
    pub struct_regions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub status: String,
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
    pub cohort: CohortSummary,
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
    /// Filled for leave-one-site-out runs.
    pub per_site: Vec<SiteAccuracy>,
    pub site_average_accuracy: Option<f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Loads the configured manifest or generates the synthetic cohort.
pub fn load_or_generate(config: &ExperimentConfig) -> Result<(CohortManifest, String), HarnessError> {
    match &config.cohort {
        Some(path) => Ok((load_cohort(path)?, path.display().to_string())),
        None => Ok((generate_synthetic_cohort(&config.synthetic)?, "synthetic".to_string())),
    }
}

fn summarize(cohort: &CohortManifest, source: String) -> CohortSummary {
    let mut sites: Vec<String> = cohort.sites().into_iter().map(str::to_string).collect();
    sites.sort_unstable();
    sites.dedup();
    CohortSummary {
        source,
        n_subjects: cohort.len(),
        n_asd: cohort.subjects.iter().filter(|s| s.label == Label::Asd).count(),
        sites,
        func_regions: cohort.func_regions,
        struct_regions: cohort.struct_regions,
    }
}

/// Split plan for one repeat.
pub fn plan_for(cohort: &CohortManifest, config: &ExperimentConfig, repeat: usize) -> Result<SplitPlan, HarnessError> {
    match config.scheme {
        Scheme::KFold => stratified_kfold(&cohort.labels(), config.folds, repeat_seed(config, repeat)),
        Scheme::Loso => loso_split(&cohort.sites()),
    }
}

pub fn repeat_seed(config: &ExperimentConfig, repeat: usize) -> u64 {
    config.seed.wrapping_add(repeat as u64)
}

pub fn fold_seed(repeat_seed: u64, fold: usize) -> u64 {
    derive_seed(repeat_seed, fold as u64)
}

fn site_table(folds: &[FoldReport]) -> (Vec<SiteAccuracy>, Option<f64>) {
    let mut by_site: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for f in folds {
        let Some(site) = &f.site else { continue };
        let e = by_site.entry(site.clone()).or_default();
        e.0 += f.predictions.len();
        e.1 += f.predictions.iter().filter(|p| p.predicted == p.label).count();
    }
    let rows: Vec<SiteAccuracy> = by_site
        .into_iter()
        .map(|(site, (n, correct))| SiteAccuracy {
            site,
            n_test: n,
            accuracy: (n > 0).then(|| correct as f64 / n as f64),
        })
        .collect();
    let avg = mean_std(rows.iter().map(|r| r.accuracy)).0;
    (rows, avg)
}

/// A finished experiment with the trained state of its first fold.
#[derive(Debug)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub first_fold: Option<FoldOutcome>,
}

/// Runs every fold of every repeat on `cohort` and writes artifacts when
/// `output_dir` is set. On a fold failure the completed folds are written
/// with `status = "failed"` before the error is returned.
pub fn run_on_cohort(
    config: &ExperimentConfig,
    cohort: &CohortManifest,
    source: String,
) -> Result<ExperimentRun, HarnessError> {
    config.validate()?;
    cohort.validate()?;
    let features = CohortFeatures::from_cohort(cohort)?;
    let mut folds = Vec::new();
    let mut first_fold = None;
    let mut failure = None;
    'outer: for repeat in 0..config.repeats {
        let plan = plan_for(cohort, config, repeat)?;
        let rseed = repeat_seed(config, repeat);
        for (k, fold) in plan.folds.iter().enumerate() {
            match train_fold(cohort, &features, fold, k, fold_seed(rseed, k), config) {
                Ok(mut outcome) => {
                    outcome.report.repeat = repeat;
                    folds.push(outcome.report.clone());
                    if first_fold.is_none() {
                        first_fold = Some(outcome);
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break 'outer;
                }
            }
        }
    }
    let (per_site, site_average_accuracy) = site_table(&folds);
    let report = ExperimentReport {
        status: if failure.is_some() { "failed" } else { "complete" }.to_string(),
        error: failure.as_ref().map(ToString::to_string),
        config: config.to_pairs().into_iter().collect(),
        cohort: summarize(cohort, source),
        aggregate: Aggregate::from_folds(&folds),
        folds,
        per_site,
        site_average_accuracy,
    };
    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, &report, first_fold.as_ref(), cohort)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(ExperimentRun { report, first_fold }),
    }
}

/// Loads or generates the cohort, then [`run_on_cohort`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let (cohort, source) = load_or_generate(config)?;
    Ok(run_on_cohort(config, &cohort, source)?.report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn metrics_csv(folds: &[FoldReport]) -> String {
    let mut s = String::from(
        "index,repeat,fold,site,seed,n_train,n_test,tp,tn,fp,fn,accuracy,sensitivity,specificity,f1,auc,final_train_loss\n",
    );
    for (i, f) in folds.iter().enumerate() {
        let c = f.confusion;
        let m = f.metrics;
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.repeat,
            f.fold,
            f.site.as_deref().unwrap_or(""),
            f.seed,
            f.n_train,
            f.n_test,
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            opt(m.accuracy),
            opt(m.sensitivity),
            opt(m.specificity),
            opt(m.f1),
            opt(f.auc),
            f.final_train_loss
        );
    }
    s
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

pub fn site_accuracy_csv(rows: &[SiteAccuracy], average: Option<f64>) -> String {
    let mut s = String::from("site,n_test,accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.site, r.n_test, opt(r.accuracy));
    }
    let n: usize = rows.iter().map(|r| r.n_test).sum();
    let _ = writeln!(s, "Average,{n},{}", opt(average));
    s
}

/// `report.json`, `metrics.csv`, `roc_fold{i}.csv`, `edges.csv` (first
/// fold's evaluation graph), and `site_accuracy.csv` for site-wise runs.
pub fn write_artifacts(
    dir: &Path,
    report: &ExperimentReport,
    first_fold: Option<&FoldOutcome>,
    cohort: &CohortManifest,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    write(&dir.join("report.json"), &report.to_json())?;
    write(&dir.join("metrics.csv"), &metrics_csv(&report.folds))?;
    for (i, f) in report.folds.iter().enumerate() {
        write(&dir.join(format!("roc_fold{i}.csv")), &roc_csv(&f.roc_points))?;
    }
    if let Some(outcome) = first_fold {
        let g = &outcome.prepared.eval_graph;
        let mut s = String::from("i,j,subject_i,subject_j,w\n");
        for (&(i, j), w) in g.candidate_edges.iter().zip(&outcome.eval_edge_weights) {
            let _ = writeln!(
                s,
                "{i},{j},{},{},{w}",
                cohort.subjects[g.node_ids[i]].subject_id,
                cohort.subjects[g.node_ids[j]].subject_id
            );
        }
        write(&dir.join("edges.csv"), &s)?;
    }
    if !report.per_site.is_empty() {
        write(
            &dir.join("site_accuracy.csv"),
            &site_accuracy_csv(&report.per_site, report.site_average_accuracy),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub name: String,
    pub aggregate: Aggregate,
}

fn dir_name(name: &str) -> String {
    name.replace('+', "_")
}

fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from(
        "configuration,accuracy_mean,accuracy_std,auc_mean,auc_std,sensitivity_mean,specificity_mean,f1_mean\n",
    );
    for r in rows {
        let a = &r.aggregate;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.name,
            opt(a.accuracy.mean),
            opt(a.accuracy.std),
            opt(a.auc.mean),
            opt(a.auc.std),
            opt(a.sensitivity.mean),
            opt(a.specificity.mean),
            opt(a.f1.mean)
        );
    }
    s
}

fn run_grid(
    base: &ExperimentConfig,
    variants: Vec<(String, ExperimentConfig)>,
    summary_name: &str,
) -> Result<Vec<GridRow>, HarnessError> {
    base.validate()?;
    let (cohort, source) = load_or_generate(base)?;
    let mut rows = Vec::with_capacity(variants.len());
    for (name, mut cfg) in variants {
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(dir_name(&name)));
        let run = run_on_cohort(&cfg, &cohort, source.clone())?;
        rows.push(GridRow {
            name,
            aggregate: run.report.aggregate,
        });
    }
    if let Some(dir) = &base.output_dir {
        write(&dir.join(summary_name), &grid_csv(&rows))?;
    }
    Ok(rows)
}

/// One row per modality mode; summary in `ablation.csv`.
pub fn ablation_grid(base: &ExperimentConfig) -> Result<Vec<GridRow>, HarnessError> {
    let variants = ModalityMode::ALL
        .into_iter()
        .map(|m| {
            let mut c = base.clone();
            c.modality = m;
            (m.to_string(), c)
        })
        .collect();
    run_grid(base, variants, "ablation.csv")
}

/// One multimodal row per fusion mode; summary in `fusion_grid.csv`.
pub fn fusion_grid(base: &ExperimentConfig) -> Result<Vec<GridRow>, HarnessError> {
    let variants = FusionMode::ALL
        .into_iter()
        .map(|m| {
            let mut c = base.clone();
            c.modality = ModalityMode::Multimodal;
            c.fusion = m;
            (m.to_string(), c)
        })
        .collect();
    run_grid(base, variants, "fusion_grid.csv")
}

/// Convenience: the output directory for a named grid row.
pub fn grid_row_dir(base: &Path, name: &str) -> PathBuf {
    base.join(dir_name(name))
}

/// Checks a stored ROC curve against its recorded AUC.
pub fn roc_consistent(fold: &FoldReport, tolerance: f64) -> bool {
    match fold.auc {
        Some(auc) => (trapezoid(&fold.roc_points) - auc).abs() <= tolerance,
        None => true,
    }
}
