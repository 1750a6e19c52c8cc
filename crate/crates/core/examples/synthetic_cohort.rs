//! Generates a synthetic cohort, writes it to disk, and reads it back.
//!
//! `cargo run --example synthetic_cohort [DIR]`

use std::collections::BTreeMap;

use connfuse::dataio::{generate_synthetic_cohort, load_cohort, save_cohort, Label, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("connfuse-synthetic"));
    let spec = SyntheticSpec::default();
    let cohort = generate_synthetic_cohort(&spec)?;
    let manifest = save_cohort(&cohort, &dir)?;
    let loaded = load_cohort(&manifest)?;
    assert_eq!(loaded, cohort);
    println!("{} subjects written to {}", loaded.len(), manifest.display());

    let mut per_site: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in &loaded.subjects {
        let e = per_site.entry(&s.site).or_default();
        match s.label {
            Label::Asd => e.0 += 1,
            Label::Td => e.1 += 1,
        }
    }
    for (site, (asd, td)) in &per_site {
        println!("{site:<8} ASD {asd:>3}  TD {td:>3}");
    }

    // class-mean difference of each functional edge
    let r = loaded.func_regions;
    let n_asd = loaded.subjects.iter().filter(|s| s.label == Label::Asd).count() as f64;
    let n_td = loaded.len() as f64 - n_asd;
    let mut gaps = Vec::new();
    for i in 0..r {
        for j in i + 1..r {
            let (mut asd, mut td) = (0.0, 0.0);
            for s in &loaded.subjects {
                let v = s.func_matrix.values()[[i, j]];
                match s.label {
                    Label::Asd => asd += v,
                    Label::Td => td += v,
                }
            }
            gaps.push((asd / n_asd - td / n_td).abs());
        }
    }
    gaps.sort_by(|a, b| b.total_cmp(a));
    println!(
        "{} functional edges; largest class-mean gaps {:.3?}, median {:.3}",
        gaps.len(),
        &gaps[..3],
        gaps[gaps.len() / 2]
    );
    Ok(())
}
