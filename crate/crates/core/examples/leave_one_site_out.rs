//! Leave-one-site-out evaluation with per-site accuracy.

use connfuse::harness::{run_experiment, site_accuracy_csv, ExperimentConfig, Scheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig {
        scheme: Scheme::Loso,
        target_dim: 100,
        ..ExperimentConfig::default()
    };
    config.synthetic.site_effect = 0.6;
    let args: Vec<String> = std::env::args().skip(1).collect();
    config.apply_overrides(&args)?;
    let report = run_experiment(&config)?;
    print!("{}", site_accuracy_csv(&report.per_site, report.site_average_accuracy));
    println!("pooled accuracy {:.3}", report.aggregate.pooled_accuracy.unwrap_or(f64::NAN));
    Ok(())
}
