//! Stratified 10-fold evaluation of the multimodal model on a synthetic
//! cohort. Extra `--key=value` arguments override the configuration.

use std::time::Instant;

use connfuse::harness::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig {
        target_dim: 100,
        ..ExperimentConfig::default()
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    config.apply_overrides(&args)?;

    let start = Instant::now();
    let report = run_experiment(&config)?;
    for f in &report.folds {
        println!(
            "fold {:>2}  acc {:.3}  auc {:.3}  loss {:.4}",
            f.fold,
            f.metrics.accuracy.unwrap_or(f64::NAN),
            f.auc.unwrap_or(f64::NAN),
            f.final_train_loss
        );
    }
    let a = &report.aggregate;
    println!(
        "{} ({}): accuracy {:.3} ± {:.3}, AUC {:.3} ± {:.3}  [{:.1}s]",
        config.modality,
        config.fusion,
        a.accuracy.mean.unwrap_or(f64::NAN),
        a.accuracy.std.unwrap_or(f64::NAN),
        a.auc.mean.unwrap_or(f64::NAN),
        a.auc.std.unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
