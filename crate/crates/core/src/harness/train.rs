//! Per-fold preparation, training and evaluation.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{CohortManifest, Label};
use crate::featprep::{count_varying, signed_targets, vectorize_all, FeaturePipeline, Modality};
use crate::fusion::masked_cross_entropy;
use crate::model::{InputDims, Model};
use crate::numcore::{derive_seed, softmax_rows_values, AdamState, Mat, ParamStore, Tape, TensorError};
use crate::popgraph::{build_candidate_edges, PhenotypeEncoder, PopulationGraph, RawPhenotype};

use super::config::{ExperimentConfig, Protocol};
use super::metrics::{confusion_metrics, roc_auc, Confusion, ConfusionMetrics, Roc};
use super::splits::Fold;
use super::HarnessError;

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Upper-triangle features of every subject, computed once per cohort.
#[derive(Debug, Clone)]
pub struct CohortFeatures {
    pub func: Mat,
    pub structural: Mat,
}

impl CohortFeatures {
    pub fn from_cohort(cohort: &CohortManifest) -> Result<Self, HarnessError> {
        Ok(Self {
            func: vectorize_all(cohort.subjects.iter().map(|s| &s.func_matrix))?,
            structural: vectorize_all(cohort.subjects.iter().map(|s| &s.struct_matrix))?,
        })
    }
}

/// Everything fitted on the training subjects before the network sees a
/// gradient.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub func_pipeline: Option<FeaturePipeline>,
    pub struct_pipeline: Option<FeaturePipeline>,
    pub phenotype_encoder: PhenotypeEncoder,
    /// Graph used for gradient steps.
    pub train_graph: PopulationGraph,
    /// Node positions of the training subjects in `train_graph`.
    pub train_nodes: Vec<usize>,
    /// Graph used for the evaluation pass: training nodes first, then test.
    pub eval_graph: PopulationGraph,
    pub test_nodes: Vec<usize>,
    /// Label index per node of `eval_graph` (and of `train_graph`, which
    /// is a prefix or equal).
    pub labels: Vec<usize>,
}

fn fit_pipeline(
    modality: Modality,
    all: &Mat,
    train: &[usize],
    y: &[f64],
    config: &ExperimentConfig,
) -> Result<FeaturePipeline, HarnessError> {
    let x_train = all.select(ndarray::Axis(0), train);
    let target = config.target_dim.min(count_varying(&x_train));
    Ok(FeaturePipeline::fit(
        modality,
        &x_train,
        y,
        target,
        config.ridge_alpha,
        config.rfe_drop_fraction,
    )?)
}

fn build_graph(
    ids: &[usize],
    cohort: &CohortManifest,
    features: &CohortFeatures,
    func: Option<&FeaturePipeline>,
    structural: Option<&FeaturePipeline>,
    encoder: &PhenotypeEncoder,
    config: &ExperimentConfig,
) -> Result<PopulationGraph, HarnessError> {
    let raw: Vec<RawPhenotype> = ids.iter().map(|&i| RawPhenotype::from(&cohort.subjects[i])).collect();
    let edges = build_candidate_edges(&raw, config.resolved_edge_policy())?;
    let rows = |m: &Mat| m.select(ndarray::Axis(0), ids);
    Ok(PopulationGraph {
        node_ids: ids.to_vec(),
        func_features: func.map(|p| p.transform(&rows(&features.func))).transpose()?,
        struct_features: structural.map(|p| p.transform(&rows(&features.structural))).transpose()?,
        phenotypes: encoder.encode_all(&raw),
        raw_phenotypes: raw,
        candidate_edges: Rc::from(edges),
    })
}

/// Fits feature pipelines and the phenotype encoder on `fold.train` and
/// lays out the training and evaluation graphs.
pub fn prepare_fold(
    cohort: &CohortManifest,
    features: &CohortFeatures,
    fold: &Fold,
    config: &ExperimentConfig,
) -> Result<PreparedFold, HarnessError> {
    if fold.train.len() < 2 || fold.test.is_empty() {
        return Err(HarnessError::Param(format!(
            "fold needs at least 2 training and 1 test subject, got {} and {}",
            fold.train.len(),
            fold.test.len()
        )));
    }
    let train_labels: Vec<Label> = fold.train.iter().map(|&i| cohort.subjects[i].label).collect();
    let y = signed_targets(&train_labels);
    let mode = config.modality;
    let func_pipeline = mode
        .uses_func()
        .then(|| fit_pipeline(Modality::Functional, &features.func, &fold.train, &y, config))
        .transpose()?;
    let struct_pipeline = mode
        .uses_struct()
        .then(|| fit_pipeline(Modality::Structural, &features.structural, &fold.train, &y, config))
        .transpose()?;
    let train_raw: Vec<RawPhenotype> =
        fold.train.iter().map(|&i| RawPhenotype::from(&cohort.subjects[i])).collect();
    let phenotype_encoder = PhenotypeEncoder::fit(&train_raw)?;

    let all: Vec<usize> = fold.train.iter().chain(&fold.test).copied().collect();
    let graph = |ids: &[usize]| {
        build_graph(
            ids,
            cohort,
            features,
            func_pipeline.as_ref(),
            struct_pipeline.as_ref(),
            &phenotype_encoder,
            config,
        )
    };
    let eval_graph = graph(&all)?;
    let train_graph = match config.protocol {
        Protocol::Inductive => graph(&fold.train)?,
        Protocol::Transductive => eval_graph.clone(),
    };
    let n_train = fold.train.len();
    Ok(PreparedFold {
        func_pipeline,
        struct_pipeline,
        phenotype_encoder,
        train_graph,
        train_nodes: (0..n_train).collect(),
        eval_graph,
        test_nodes: (n_train..all.len()).collect(),
        labels: all.iter().map(|&i| cohort.subjects[i].label.index()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub site: String,
    pub label: usize,
    pub prob_asd: f64,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub repeat: usize,
    pub seed: u64,
    pub site: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub func_dim: Option<usize>,
    pub struct_dim: Option<usize>,
    pub final_train_loss: f64,
    pub confusion: Confusion,
    pub metrics: ConfusionMetrics,
    pub auc: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub predictions: Vec<Prediction>,
    /// SHA-256 over fitted preprocessing state, every epoch loss, and the
    /// trained parameters.
    pub state_hash: String,
}

/// Result of one fold: the report plus the trained state.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub epoch_losses: Vec<f64>,
    pub prepared: PreparedFold,
    pub model: Model,
    pub params: ParamStore,
    /// Learned weights on the evaluation graph's candidate edges.
    pub eval_edge_weights: Vec<f64>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of everything fitted during a fold.
pub fn state_hash(prepared: &PreparedFold, epoch_losses: &[f64], params: &ParamStore) -> String {
    let mut h = Sha256::new();
    for p in [&prepared.func_pipeline, &prepared.struct_pipeline] {
        h.update(p.as_ref().map(FeaturePipeline::to_json).unwrap_or_default());
        h.update([0u8]);
    }
    h.update(serde_json::to_string(&prepared.phenotype_encoder).expect("encoder serializes"));
    for l in epoch_losses {
        h.update(l.to_bits().to_le_bytes());
    }
    for (name, m) in params.names().iter().zip(params.values()) {
        h.update(name.as_bytes());
        for v in m.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Trains on `fold.train` and evaluates on `fold.test`.
pub fn train_fold(
    cohort: &CohortManifest,
    features: &CohortFeatures,
    fold: &Fold,
    fold_index: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<FoldOutcome, HarnessError> {
    let prepared = prepare_fold(cohort, features, fold, config)?;
    let dims = InputDims {
        func: prepared.func_pipeline.as_ref().map_or(0, FeaturePipeline::output_dim),
        structural: prepared.struct_pipeline.as_ref().map_or(0, FeaturePipeline::output_dim),
        phenotype: prepared.phenotype_encoder.dim(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut params = ParamStore::new();
    let model = Model::new(&mut params, config.model_config(), dims, &mut rng)?;
    let mut adam = AdamState::new(config.adam_config(), &params);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tape = Tape::new();
        let binding = params.bind(&tape);
        let out = model.forward(&tape, &binding, &prepared.train_graph, true, derive_seed(seed, 1 + epoch as u64))?;
        let loss = masked_cross_entropy(out.logits, &prepared.labels, &prepared.train_nodes)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(HarnessError::NonFiniteLoss {
                fold: fold_index,
                epoch,
                value,
            });
        }
        epoch_losses.push(value);
        let grads = tape.backward(loss)?;
        let grads = binding.collect(&grads);
        drop(binding);
        adam.step(&mut params, &grads).map_err(|e| match e {
            TensorError::NonFinite { name, .. } => HarnessError::NonFiniteGradient {
                fold: fold_index,
                epoch,
                param: name,
            },
            other => other.into(),
        })?;
    }

    let tape = Tape::new();
    let binding = params.bind(&tape);
    let out = model.forward(&tape, &binding, &prepared.eval_graph, false, 0)?;
    let probs = softmax_rows_values(&out.logits.value());
    let eval_edge_weights = out.edge_weights.value().iter().copied().collect();
    drop(binding);

    let mut scores = Vec::with_capacity(prepared.test_nodes.len());
    let mut truth = Vec::with_capacity(prepared.test_nodes.len());
    let mut predictions = Vec::with_capacity(prepared.test_nodes.len());
    for &node in &prepared.test_nodes {
        let subject = &cohort.subjects[prepared.eval_graph.node_ids[node]];
        let p = probs[[node, 1]];
        scores.push(p);
        truth.push(prepared.labels[node] == 1);
        predictions.push(Prediction {
            subject_id: subject.subject_id.clone(),
            site: subject.site.clone(),
            label: prepared.labels[node],
            prob_asd: p,
            predicted: usize::from(p >= DECISION_THRESHOLD),
        });
    }
    let confusion = Confusion::from_scores(&scores, &truth, DECISION_THRESHOLD);
    let Roc { auc, points } = roc_auc(&scores, &truth);
    let report = FoldReport {
        fold: fold_index,
        repeat: 0,
        seed,
        site: fold.site.clone(),
        n_train: fold.train.len(),
        n_test: fold.test.len(),
        func_dim: prepared.func_pipeline.as_ref().map(FeaturePipeline::output_dim),
        struct_dim: prepared.struct_pipeline.as_ref().map(FeaturePipeline::output_dim),
        final_train_loss: epoch_losses.last().copied().unwrap_or(f64::NAN),
        confusion,
        metrics: confusion_metrics(confusion),
        auc,
        roc_points: points,
        predictions,
        state_hash: state_hash(&prepared, &epoch_losses, &params),
    };
    Ok(FoldOutcome {
        report,
        epoch_losses,
        prepared,
        model,
        params,
        eval_edge_weights,
    })
}
