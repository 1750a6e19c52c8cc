//! Modality ablation and fusion-mode comparison on a cohort whose signal is
//! split between the two modalities.

use connfuse::harness::{ablation_grid, fusion_grid, ExperimentConfig, GridRow};

fn show(title: &str, rows: &[GridRow]) {
    println!("{title}");
    for r in rows {
        println!(
            "  {:<12} acc {:.3}  auc {:.3}",
            r.name,
            r.aggregate.accuracy.mean.unwrap_or(f64::NAN),
            r.aggregate.auc.mean.unwrap_or(f64::NAN)
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::default();
    config.apply_text(
        "synth_subjects = 120\nsynth_separation = 1.5\nsynth_func_informativeness = 0.6\n\
         synth_struct_informativeness = 0.6\nfolds = 5\nepochs = 150\ntarget_dim = 100\n",
    )?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    config.apply_overrides(&args)?;
    show("modalities", &ablation_grid(&config)?);
    show("fusion", &fusion_grid(&config)?);
    Ok(())
}
