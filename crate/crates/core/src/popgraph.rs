//! Population graph construction: phenotype encoding, the pairwise
//! association encoder (PAE) that turns phenotypes into edge weights, the
//! candidate edge set, and the rescaled Laplacian consumed by the encoders.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Sex, SubjectRecord};
use crate::numcore::{Binding, Mat, ParamId, ParamStore, Tape, TensorError, Var, NORM_FLOOR};

pub const PAE_LATENT_DIM: usize = 128;
pub const PAE_HIDDEN_DIM: usize = 128;
pub const DEFAULT_AGE_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

/// Age, sex and site of one subject, as read from the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPhenotype {
    pub age: f64,
    pub sex: Sex,
    pub site: String,
}

impl From<&SubjectRecord> for RawPhenotype {
    fn from(s: &SubjectRecord) -> Self {
        Self {
            age: s.age,
            sex: s.sex,
            site: s.site.clone(),
        }
    }
}

/// Phenotype encoding fitted on training subjects: z-scored age, sex as
/// `{F: 0, M: 1}`, and a one-hot block over the sorted training sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeEncoder {
    pub age_mean: f64,
    /// Zero when every training subject has the same age.
    pub age_std: f64,
    pub site_vocabulary: Vec<String>,
}

impl PhenotypeEncoder {
    pub fn fit(train: &[RawPhenotype]) -> Result<Self, GraphError> {
        if train.is_empty() {
            return Err(GraphError::Param("phenotype encoder needs training subjects".into()));
        }
        let n = train.len() as f64;
        let age_mean = train.iter().map(|p| p.age).sum::<f64>() / n;
        let age_std = (train.iter().map(|p| (p.age - age_mean).powi(2)).sum::<f64>() / n).sqrt();
        let site_vocabulary: Vec<String> = train
            .iter()
            .map(|p| p.site.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Self {
            age_mean,
            age_std,
            site_vocabulary,
        })
    }

    pub fn dim(&self) -> usize {
        2 + self.site_vocabulary.len()
    }

    pub fn encode(&self, p: &RawPhenotype) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        out[0] = if self.age_std > 0.0 {
            (p.age - self.age_mean) / self.age_std
        } else {
            0.0
        };
        out[1] = match p.sex {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        };
        if let Ok(k) = self.site_vocabulary.binary_search(&p.site) {
            out[2 + k] = 1.0;
        }
        out
    }

    pub fn encode_all(&self, ps: &[RawPhenotype]) -> Mat {
        let d = self.dim();
        let mut m = Mat::zeros((ps.len(), d));
        for (mut row, p) in m.rows_mut().into_iter().zip(ps) {
            row.assign(&ndarray::Array1::from(self.encode(p)));
        }
        m
    }
}

/// Fits the encoder on `train_ids` and encodes `all_ids` (indices into
/// `subjects`).
pub fn encode_phenotypes(
    subjects: &[SubjectRecord],
    train_ids: &[usize],
    all_ids: &[usize],
) -> Result<(PhenotypeEncoder, Mat), GraphError> {
    let raw = |ids: &[usize]| -> Vec<RawPhenotype> {
        ids.iter().map(|&i| RawPhenotype::from(&subjects[i])).collect()
    };
    let encoder = PhenotypeEncoder::fit(&raw(train_ids))?;
    let encoded = encoder.encode_all(&raw(all_ids));
    Ok((encoder, encoded))
}

/// Rescaled cosine similarity `hᵢᵀhⱼ / (2‖hᵢ‖‖hⱼ‖) + 1/2`, clamped to `[0, 1]`.
/// Norms below `1e-12` are clamped.
pub fn pae_edge_weight(h_i: &[f64], h_j: &[f64]) -> f64 {
    let dot: f64 = h_i.iter().zip(h_j).map(|(a, b)| a * b).sum();
    let ni = h_i.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    let nj = h_j.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    (dot / (2.0 * (ni * nj)) + 0.5).clamp(0.0, 1.0)
}

/// Differentiable version of [`pae_edge_weight`] for every listed pair of
/// latent rows; returns a `1×E` row.
pub fn pae_edge_weights<'t>(
    latent: Var<'t>,
    edges: &Rc<[(usize, usize)]>,
) -> Result<Var<'t>, TensorError> {
    let unit = latent.row_normalize();
    let cosine = unit.matmul(unit.t())?;
    Ok(cosine
        .sym_pairs(edges.clone())?
        .scale(0.5)
        .add_scalar(0.5)
        .clamp(0.0, 1.0))
}

/// Two-layer perceptron mapping encoded phenotypes to latents.
#[derive(Debug, Clone)]
pub struct PairwiseAssociationEncoder {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl PairwiseAssociationEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        input_dim: usize,
        hidden: usize,
        latent: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: store.add_glorot("pae.w1", input_dim, hidden, rng),
            b1: store.add_zeros("pae.b1", 1, hidden),
            w2: store.add_glorot("pae.w2", hidden, latent, rng),
            b2: store.add_zeros("pae.b2", 1, latent),
        }
    }

    pub fn latent<'t>(&self, params: &Binding<'t>, phenotypes: Var<'t>) -> Result<Var<'t>, TensorError> {
        let hidden = phenotypes.matmul(params[self.w1])?.add_row(params[self.b1])?.relu();
        hidden.matmul(params[self.w2])?.add_row(params[self.b2])
    }

    /// Edge weights for the candidate pairs.
    pub fn edge_weights<'t>(
        &self,
        params: &Binding<'t>,
        phenotypes: Var<'t>,
        edges: &Rc<[(usize, usize)]>,
    ) -> Result<Var<'t>, TensorError> {
        pae_edge_weights(self.latent(params, phenotypes)?, edges)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum EdgePolicy {
    /// All `N(N-1)/2` pairs.
    #[default]
    Complete,
    /// Same site, same sex, or ages within the threshold (years).
    PhenotypeMatch { age_threshold: f64 },
}

impl fmt::Display for EdgePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgePolicy::Complete => f.pad("complete"),
            EdgePolicy::PhenotypeMatch { .. } => f.pad("phenotype-match"),
        }
    }
}

impl FromStr for EdgePolicy {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "complete" => Ok(EdgePolicy::Complete),
            "phenotype-match" => Ok(EdgePolicy::PhenotypeMatch {
                age_threshold: DEFAULT_AGE_THRESHOLD,
            }),
            other => Err(GraphError::Param(format!(
                "unknown edge policy `{other}` (expected complete or phenotype-match)"
            ))),
        }
    }
}

/// Undirected candidate pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn build_candidate_edges(
    phenotypes: &[RawPhenotype],
    policy: EdgePolicy,
) -> Result<Vec<(usize, usize)>, GraphError> {
    let n = phenotypes.len();
    if n < 2 {
        return Err(GraphError::Param(format!(
            "a population graph needs at least 2 subjects, got {n}"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let keep = match policy {
                EdgePolicy::Complete => true,
                EdgePolicy::PhenotypeMatch { age_threshold } => {
                    let (a, b) = (&phenotypes[i], &phenotypes[j]);
                    a.site == b.site || a.sex == b.sex || (a.age - b.age).abs() <= age_threshold
                }
            };
            if keep {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// `-D^{-1/2}(W + I)D^{-1/2}`: the normalized Laplacian of the self-looped
/// graph, rescaled with `λ_max = 2`.
pub fn scaled_laplacian(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> Result<Mat, GraphError> {
    if edges.len() != weights.len() {
        return Err(GraphError::Param(format!(
            "{} edges but {} weights",
            edges.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(GraphError::Param(format!("edge weight {w} outside [0, 1]")));
    }
    let tape = Tape::new();
    let w = tape.constant(Mat::from_shape_vec((1, weights.len()), weights.to_vec()).expect("1×E"));
    let lap = w.scaled_laplacian(n, Rc::from(edges.to_vec()))?;
    let out = lap.value().clone();
    Ok(out)
}

/// Subjects of one graph with their modality features and phenotypes.
#[derive(Debug, Clone)]
pub struct PopulationGraph {
    /// Cohort indices of the nodes, in node order.
    pub node_ids: Vec<usize>,
    pub func_features: Option<Mat>,
    pub struct_features: Option<Mat>,
    pub phenotypes: Mat,
    pub raw_phenotypes: Vec<RawPhenotype>,
    pub candidate_edges: Rc<[(usize, usize)]>,
}

impl PopulationGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }
}

/// Writes `i,j,w` rows (node indices within the graph).
pub fn write_edges_csv(
    path: &Path,
    edges: &[(usize, usize)],
    weights: &[f64],
) -> Result<(), GraphError> {
    let mut out = String::from("i,j,w\n");
    for (&(i, j), w) in edges.iter().zip(weights) {
        out.push_str(&format!("{i},{j},{w}\n"));
    }
    std::fs::write(path, out).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
