//! Multimodal population-graph learning for connectome classification.
//!
//! Subjects are nodes of a population graph whose edge weights are learned
//! from phenotypes (age, sex, acquisition site). Functional and structural
//! connectivity features feed two Chebyshev graph-convolution encoders, and
//! their embeddings are fused by cross-attention in which functional
//! embeddings query structural ones. The whole stack trains end to end on a
//! small reverse-mode differentiation engine.
//!
//! Modules, bottom-up:
//!
//! - [`numcore`]: tensors, autodiff tape, Adam, gradient checking
//! - [`dataio`]: cohort manifests, matrix files, synthetic cohorts
//! - [`featprep`]: upper-triangle vectorization, ridge RFE, z-scoring
//! - [`popgraph`]: phenotype encoding, pairwise association encoder, Laplacian
//! - [`gcn`]: Chebyshev convolution and the multi-scale encoder
//! - [`fusion`]: cross-attention fusion, classifier, loss, ablation variants
//! - [`model`]: the assembled network for each modality layout
//! - [`harness`]: splits, metrics, training, experiments

pub mod numcore;
pub mod dataio;
pub mod featprep;
pub mod popgraph;
pub mod gcn;
pub mod fusion;
pub mod model;
pub mod harness;
