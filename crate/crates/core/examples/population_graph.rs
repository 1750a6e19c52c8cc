//! Candidate edges from phenotypes, edge weights from an untrained pairwise
//! association encoder, and the spectrum of the resulting Laplacian.

use std::rc::Rc;

use connfuse::dataio::{generate_synthetic_cohort, SyntheticSpec};
use connfuse::numcore::{ParamStore, Tape};
use connfuse::popgraph::{
    build_candidate_edges, scaled_laplacian, EdgePolicy, PairwiseAssociationEncoder, PhenotypeEncoder, RawPhenotype,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = generate_synthetic_cohort(&SyntheticSpec {
        n_subjects: 60,
        ..SyntheticSpec::default()
    })?;
    let raw: Vec<RawPhenotype> = cohort.subjects.iter().map(RawPhenotype::from).collect();
    let encoder = PhenotypeEncoder::fit(&raw)?;
    println!("phenotype channels: {} (sites {:?})", encoder.dim(), encoder.site_vocabulary);

    for policy in [EdgePolicy::Complete, EdgePolicy::PhenotypeMatch { age_threshold: 2.0 }] {
        println!("{policy:<16} {} candidate edges", build_candidate_edges(&raw, policy)?.len());
    }

    let edges: Rc<[(usize, usize)]> = build_candidate_edges(&raw, EdgePolicy::Complete)?.into();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let pae = PairwiseAssociationEncoder::new(&mut store, encoder.dim(), 128, 128, &mut rng);
    let tape = Tape::new();
    let binding = store.bind(&tape);
    let weights = pae.edge_weights(&binding, tape.constant(encoder.encode_all(&raw)), &edges)?;
    let w: Vec<f64> = weights.value().iter().copied().collect();

    let same_site: Vec<f64> = edges.iter().zip(&w).filter(|(e, _)| raw[e.0].site == raw[e.1].site).map(|p| *p.1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean weight {:.3}, same-site pairs {:.3}", mean(&w), mean(&same_site));

    let lap = scaled_laplacian(raw.len(), &edges, &w)?;
    let eig = SymmetricEigen::new(DMatrix::from_fn(lap.nrows(), lap.ncols(), |i, j| lap[[i, j]]));
    println!("Laplacian spectrum in [{:.4}, {:.4}]", eig.eigenvalues.min(), eig.eigenvalues.max());
    Ok(())
}
