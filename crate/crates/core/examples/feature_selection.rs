//! Recursive feature elimination on functional connectivity features, and
//! how a held-out ridge classifier responds to the number kept.

use connfuse::dataio::{generate_synthetic_cohort, SyntheticSpec};
use connfuse::featprep::{ridge_fit, signed_targets, FeaturePipeline, Modality};
use connfuse::harness::{stratified_kfold, CohortFeatures};
use ndarray::Axis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = generate_synthetic_cohort(&SyntheticSpec {
        class_separation: 1.0,
        ..SyntheticSpec::default()
    })?;
    let features = CohortFeatures::from_cohort(&cohort)?;
    let labels = cohort.labels();
    let plan = stratified_kfold(&labels, 5, 0)?;
    println!("{} subjects, {} functional features", cohort.len(), features.func.ncols());

    for target in [5, 20, 60, 150, features.func.ncols()] {
        let mut correct = 0;
        for fold in &plan.folds {
            let xtr = features.func.select(Axis(0), &fold.train);
            let xte = features.func.select(Axis(0), &fold.test);
            let y = signed_targets(&fold.train.iter().map(|&i| labels[i]).collect::<Vec<_>>());
            let pipe = FeaturePipeline::fit(Modality::Functional, &xtr, &y, target, 1.0, 0.1)?;
            let w = ridge_fit(&pipe.transform(&xtr)?, &y, 1.0)?;
            let zte = pipe.transform(&xte)?;
            for (row, &i) in zte.rows().into_iter().zip(&fold.test) {
                let score: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
                correct += usize::from((score > 0.0) == (labels[i].index() == 1));
            }
        }
        println!("keep {target:>4}: held-out ridge accuracy {:.3}", correct as f64 / cohort.len() as f64);
    }
    Ok(())
}
