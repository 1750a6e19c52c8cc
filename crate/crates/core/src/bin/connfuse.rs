use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use connfuse::dataio::{generate_synthetic_cohort, save_cohort, DataError};
use connfuse::featprep::{count_varying, signed_targets, FeatureError, FeaturePipeline, Modality};
use connfuse::fusion::FusionMode;
use connfuse::harness::{
    ablation_grid, fusion_grid, load_or_generate, run_experiment, CohortFeatures, ExperimentConfig,
    ExperimentReport, GradCheckInstance, GridRow, HarnessError, Scheme,
};
use connfuse::numcore::TensorError;
use connfuse::popgraph::{GraphError, PhenotypeEncoder, RawPhenotype};

/// Multimodal population-graph classifier for connectome cohorts.
#[derive(Parser)]
#[command(name = "connfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration overrides, each `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory from the synth_* keys.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit feature pipelines and the phenotype encoder on the whole cohort.
    Prep(Common),
    /// Cross-validate one configuration.
    Train(Common),
    /// Run every modality mode.
    Ablate(Common),
    /// Run every fusion mode in multimodal configuration.
    FusionGrid(Common),
    /// Leave-one-site-out evaluation.
    Loso(Common),
    /// Finite-difference check of the full network.
    Gradcheck(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply_overrides(&common.overrides)?;
    if config.output_dir.is_none() {
        config.output_dir = Some(PathBuf::from("connfuse-out"));
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(report: &ExperimentReport) {
    let a = &report.aggregate;
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    println!(
        "{}",
        json!({
            "status": report.status,
            "folds": a.n_folds,
            "accuracy": f(a.accuracy.mean),
            "accuracy_std": f(a.accuracy.std),
            "auc": f(a.auc.mean),
            "auc_std": f(a.auc.std),
            "sensitivity": f(a.sensitivity.mean),
            "specificity": f(a.specificity.mean),
            "f1": f(a.f1.mean),
            "site_average_accuracy": f(report.site_average_accuracy),
        })
    );
}

fn print_grid(rows: &[GridRow]) {
    println!("{:<14} {:>9} {:>9} {:>9} {:>9}", "configuration", "accuracy", "auc", "sens", "spec");
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        let a = &r.aggregate;
        println!(
            "{:<14} {:>9} {:>9} {:>9} {:>9}",
            r.name,
            f(a.accuracy.mean),
            f(a.auc.mean),
            f(a.sensitivity.mean),
            f(a.specificity.mean)
        );
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn prep(config: &ExperimentConfig) -> Result<()> {
    let (cohort, _) = load_or_generate(config)?;
    let features = CohortFeatures::from_cohort(&cohort)?;
    let y = signed_targets(&cohort.labels());
    let dir = config.output_dir.as_ref().expect("output dir");
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (modality, x, name) in [
        (Modality::Functional, &features.func, "func_pipeline.json"),
        (Modality::Structural, &features.structural, "struct_pipeline.json"),
    ] {
        let target = config.target_dim.min(count_varying(x));
        let p = FeaturePipeline::fit(modality, x, &y, target, config.ridge_alpha, config.rfe_drop_fraction)?;
        println!("{name}: {} of {} features kept", p.output_dim(), p.input_dim);
        std::fs::write(dir.join(name), p.to_json()).with_context(|| format!("writing {name}"))?;
    }
    let raw: Vec<RawPhenotype> = cohort.subjects.iter().map(RawPhenotype::from).collect();
    let enc = PhenotypeEncoder::fit(&raw)?;
    println!("phenotype encoder: {} channels, sites {:?}", enc.dim(), enc.site_vocabulary);
    write_json(&dir.join("phenotype_encoder.json"), &serde_json::to_value(&enc)?)
}

fn gradcheck(config: &ExperimentConfig) -> Result<bool> {
    let mut rows = Vec::new();
    let mut ok = true;
    for fusion in FusionMode::ALL {
        let r = GradCheckInstance {
            fusion,
            seed: config.seed,
            ..GradCheckInstance::default()
        }
        .run()?;
        let pass = r.max_rel_error < 1e-4;
        ok &= pass;
        println!(
            "{:<10} entries {:>5}  max rel error {:.3e}  {}",
            fusion.as_str(),
            r.entries_checked,
            r.max_rel_error,
            if pass { "ok" } else { "FAIL" }
        );
        rows.push(json!({
            "fusion": fusion.as_str(),
            "entries": r.entries_checked,
            "max_rel_error": r.max_rel_error,
            "worst_param": r.worst_param,
            "worst_index": [r.worst_index.0, r.worst_index.1],
            "pass": pass,
        }));
    }
    let dir = config.output_dir.as_ref().expect("output dir");
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("gradcheck.json"), &json!(rows))?;
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { out, common } => {
            let config = load_config(&common)?;
            let cohort = generate_synthetic_cohort(&config.synthetic)?;
            let manifest = save_cohort(&cohort, &out)?;
            println!("{}", manifest.display());
        }
        Command::Prep(common) => prep(&load_config(&common)?)?,
        Command::Train(common) => print_summary(&run_experiment(&load_config(&common)?)?),
        Command::Ablate(common) => print_grid(&ablation_grid(&load_config(&common)?)?),
        Command::FusionGrid(common) => print_grid(&fusion_grid(&load_config(&common)?)?),
        Command::Loso(common) => {
            let mut config = load_config(&common)?;
            config.scheme = Scheme::Loso;
            let report = run_experiment(&config)?;
            for s in &report.per_site {
                println!("{:<10} n={:<4} accuracy {}", s.site, s.n_test, s.accuracy.map_or("NA".into(), |a| format!("{a:.4}")));
            }
            print_summary(&report);
        }
        Command::Gradcheck(common) => return gradcheck(&load_config(&common)?),
    }
    Ok(true)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        h.kind()
    } else if e.is::<DataError>() {
        "data"
    } else if e.is::<FeatureError>() {
        "features"
    } else if e.is::<GraphError>() {
        "graph"
    } else if e.is::<TensorError>() {
        "tensor"
    } else {
        "io"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", json!({"status": "error", "kind": "check_failed", "message": "gradient check exceeded tolerance"}));
            ExitCode::from(1)
        }
        Err(e) => {
            let kind = error_kind(&e);
            eprintln!("{}", json!({"status": "error", "kind": kind, "message": format!("{e:#}")}));
            ExitCode::from(2)
        }
    }
}
