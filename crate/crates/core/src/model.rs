//! The assembled network: phenotype-driven edge weights, one encoder per
//! modality on the shared Laplacian, fusion, and the classifier.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{masked_cross_entropy, Classifier, Fusion, FusionConfig};
use crate::gcn::{Encoder, EncoderConfig};
use crate::numcore::{derive_seed, Binding, Mat, Objective, ParamStore, Tape, TensorError, Var};
use crate::popgraph::{PairwiseAssociationEncoder, PopulationGraph, PAE_HIDDEN_DIM, PAE_LATENT_DIM};

/// Which modalities feed the classifier and whether edges are learned from
/// phenotypes (otherwise every candidate edge has weight 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModalityMode {
    Func,
    FuncPheno,
    Struct,
    StructPheno,
    Multimodal,
}

impl ModalityMode {
    pub const ALL: [ModalityMode; 5] = [
        ModalityMode::Func,
        ModalityMode::FuncPheno,
        ModalityMode::Struct,
        ModalityMode::StructPheno,
        ModalityMode::Multimodal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModalityMode::Func => "func",
            ModalityMode::FuncPheno => "func+pheno",
            ModalityMode::Struct => "struct",
            ModalityMode::StructPheno => "struct+pheno",
            ModalityMode::Multimodal => "multimodal",
        }
    }

    pub fn uses_func(self) -> bool {
        matches!(self, ModalityMode::Func | ModalityMode::FuncPheno | ModalityMode::Multimodal)
    }

    pub fn uses_struct(self) -> bool {
        matches!(self, ModalityMode::Struct | ModalityMode::StructPheno | ModalityMode::Multimodal)
    }

    pub fn uses_phenotypes(self) -> bool {
        matches!(self, ModalityMode::FuncPheno | ModalityMode::StructPheno | ModalityMode::Multimodal)
    }
}

impl fmt::Display for ModalityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ModalityMode {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModalityMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                TensorError::Param(format!(
                    "unknown modality mode `{s}` (expected func, func+pheno, struct, struct+pheno or multimodal)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub modality: ModalityMode,
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub pae_hidden: usize,
    pub pae_latent: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            modality: ModalityMode::Multimodal,
            encoder: EncoderConfig::default(),
            fusion: FusionConfig::default(),
            pae_hidden: PAE_HIDDEN_DIM,
            pae_latent: PAE_LATENT_DIM,
        }
    }
}

/// Input widths the model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputDims {
    pub func: usize,
    pub structural: usize,
    pub phenotype: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub pae: Option<PairwiseAssociationEncoder>,
    pub func_encoder: Option<Encoder>,
    pub struct_encoder: Option<Encoder>,
    pub fusion: Option<Fusion>,
    pub classifier: Classifier,
}

/// Tensors of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward<'t> {
    pub edge_weights: Var<'t>,
    pub laplacian: Var<'t>,
    pub embedding: Var<'t>,
    pub logits: Var<'t>,
}

impl Model {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        config: ModelConfig,
        dims: InputDims,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let mode = config.modality;
        let pae = mode.uses_phenotypes().then(|| {
            PairwiseAssociationEncoder::new(store, dims.phenotype, config.pae_hidden, config.pae_latent, rng)
        });
        let func_encoder = if mode.uses_func() {
            Some(Encoder::new(store, "func", dims.func, config.encoder, rng)?)
        } else {
            None
        };
        let struct_encoder = if mode.uses_struct() {
            Some(Encoder::new(store, "struct", dims.structural, config.encoder, rng)?)
        } else {
            None
        };
        let emb = config.encoder.layers * config.encoder.hidden;
        let fusion = if mode == ModalityMode::Multimodal {
            Some(Fusion::new(store, emb, &config.fusion, rng)?)
        } else {
            None
        };
        let clf_in = fusion.as_ref().map_or(emb, Fusion::output_dim);
        let classifier = Classifier::new(store, clf_in, rng);
        Ok(Self {
            config,
            pae,
            func_encoder,
            struct_encoder,
            fusion,
            classifier,
        })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &Binding<'t>,
        graph: &PopulationGraph,
        training: bool,
        seed: u64,
    ) -> Result<Forward<'t>, TensorError> {
        let n = graph.n_nodes();
        let edges = &graph.candidate_edges;
        let edge_weights = match &self.pae {
            Some(pae) => pae.edge_weights(params, tape.constant(graph.phenotypes.clone()), edges)?,
            None => tape.constant(Mat::ones((1, edges.len()))),
        };
        let laplacian = edge_weights.scaled_laplacian(n, edges.clone())?;
        let features = |m: &Option<Mat>, what: &str| {
            m.clone()
                .map(|x| tape.constant(x))
                .ok_or_else(|| TensorError::Param(format!("graph has no {what} features")))
        };
        let h_f = match &self.func_encoder {
            Some(enc) => Some(enc.encode(
                features(&graph.func_features, "functional")?,
                laplacian,
                params,
                training,
                derive_seed(seed, 1),
            )?),
            None => None,
        };
        let h_s = match &self.struct_encoder {
            Some(enc) => Some(enc.encode(
                features(&graph.struct_features, "structural")?,
                laplacian,
                params,
                training,
                derive_seed(seed, 2),
            )?),
            None => None,
        };
        let embedding = match (&self.fusion, h_f, h_s) {
            (Some(fusion), Some(f), Some(s)) => fusion.forward(f, s, params, training, derive_seed(seed, 3))?,
            (None, Some(h), None) | (None, None, Some(h)) => h,
            _ => return Err(TensorError::Param("model has an inconsistent modality layout".into())),
        };
        let logits = self.classifier.logits(embedding, params)?;
        Ok(Forward {
            edge_weights,
            laplacian,
            embedding,
            logits,
        })
    }
}

/// Training loss of a model on a graph, for gradient checking.
pub struct ModelObjective<'a> {
    pub model: &'a Model,
    pub graph: &'a PopulationGraph,
    pub labels: &'a [usize],
    pub mask: &'a [usize],
}

impl Objective for ModelObjective<'_> {
    fn loss<'t>(&self, tape: &'t Tape, params: &Binding<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.model.forward(tape, params, self.graph, false, 0)?;
        masked_cross_entropy(out.logits, self.labels, self.mask)
    }
}
