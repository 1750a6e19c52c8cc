//! Small end-to-end instances for gradient verification.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::Sex;
use crate::fusion::{FusionConfig, FusionMode};
use crate::gcn::EncoderConfig;
use crate::model::{InputDims, ModalityMode, Model, ModelConfig, ModelObjective};
use crate::numcore::{grad_check, GradCheckOptions, GradCheckReport, Mat, ParamStore, TensorError};
use crate::popgraph::{build_candidate_edges, EdgePolicy, PhenotypeEncoder, PopulationGraph, RawPhenotype};

/// Shape of a gradient-check instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckInstance {
    pub n_subjects: usize,
    pub feature_dim: usize,
    /// Encoder output width; split evenly over four layers.
    pub embedding_dim: usize,
    pub modality: ModalityMode,
    pub fusion: FusionMode,
    pub seed: u64,
}

impl Default for GradCheckInstance {
    fn default() -> Self {
        Self {
            n_subjects: 12,
            feature_dim: 20,
            embedding_dim: 16,
            modality: ModalityMode::Multimodal,
            fusion: FusionMode::Asymmetric,
            seed: 0,
        }
    }
}

/// Everything needed to evaluate the training loss of a random model.
pub struct GradCheckSetup {
    pub model: Model,
    pub params: ParamStore,
    pub graph: PopulationGraph,
    pub labels: Vec<usize>,
    pub mask: Vec<usize>,
}

impl GradCheckInstance {
    pub fn build(&self) -> Result<GradCheckSetup, TensorError> {
        let n = self.n_subjects;
        if !self.embedding_dim.is_multiple_of(4) || n < 2 {
            return Err(TensorError::Param(
                "gradient-check instance needs N >= 2 and an embedding width divisible by 4".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let raw: Vec<RawPhenotype> = (0..n)
            .map(|i| RawPhenotype {
                age: rng.random_range(6.0..40.0),
                sex: if rng.random::<bool>() { Sex::Male } else { Sex::Female },
                site: format!("S{}", i % 3),
            })
            .collect();
        let encoder = PhenotypeEncoder::fit(&raw).map_err(|e| TensorError::Param(e.to_string()))?;
        let edges = build_candidate_edges(&raw, EdgePolicy::Complete).map_err(|e| TensorError::Param(e.to_string()))?;
        let mut features = || Mat::from_shape_simple_fn((n, self.feature_dim), || rng.random_range(-1.0..1.0));
        let graph = PopulationGraph {
            node_ids: (0..n).collect(),
            func_features: Some(features()),
            struct_features: Some(features()),
            phenotypes: encoder.encode_all(&raw),
            raw_phenotypes: raw,
            candidate_edges: Rc::from(edges),
        };
        let config = ModelConfig {
            modality: self.modality,
            encoder: EncoderConfig {
                layers: 4,
                hidden: self.embedding_dim / 4,
                order: 3,
                dropout: 0.0,
            },
            fusion: FusionConfig {
                mode: self.fusion,
                n_heads: 4,
                ffn_expansion: 4,
                dropout: 0.0,
            },
            pae_hidden: 16,
            pae_latent: 16,
        };
        let dims = InputDims {
            func: self.feature_dim,
            structural: self.feature_dim,
            phenotype: graph.phenotypes.ncols(),
        };
        let mut params = ParamStore::new();
        let model = Model::new(&mut params, config, dims, &mut rng)?;
        let labels = (0..n).map(|i| i % 2).collect();
        let mask = (0..n).filter(|i| i % 4 != 3).collect();
        Ok(GradCheckSetup {
            model,
            params,
            graph,
            labels,
            mask,
        })
    }

    /// Central differences on every parameter entry.
    pub fn run(&self) -> Result<GradCheckReport, TensorError> {
        let setup = self.build()?;
        let objective = ModelObjective {
            model: &setup.model,
            graph: &setup.graph,
            labels: &setup.labels,
            mask: &setup.mask,
        };
        grad_check(
            &objective,
            &setup.params,
            GradCheckOptions {
                samples_per_param: usize::MAX,
                ..GradCheckOptions::default()
            },
        )
    }
}
