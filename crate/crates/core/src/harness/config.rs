//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key can be
//! overridden from the command line as `--key=value`; unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::SyntheticSpec;
use crate::fusion::{FusionConfig, FusionMode};
use crate::gcn::EncoderConfig;
use crate::model::{ModalityMode, ModelConfig};
use crate::numcore::AdamConfig;
use crate::popgraph::{EdgePolicy, DEFAULT_AGE_THRESHOLD, PAE_HIDDEN_DIM, PAE_LATENT_DIM};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Train on the training subjects alone; test nodes join afterwards.
    Inductive,
    /// Test nodes sit in the graph during training but carry no loss.
    Transductive,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Inductive => "inductive",
            Protocol::Transductive => "transductive",
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inductive" => Ok(Protocol::Inductive),
            "transductive" => Ok(Protocol::Transductive),
            _ => Err("expected inductive or transductive".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    KFold,
    Loso,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::KFold => "kfold",
            Scheme::Loso => "loso",
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kfold" => Ok(Scheme::KFold),
            "loso" => Ok(Scheme::Loso),
            _ => Err("expected kfold or loso".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Manifest to load; a synthetic cohort is generated when absent.
    pub cohort: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub output_dir: Option<PathBuf>,
    pub modality: ModalityMode,
    pub fusion: FusionMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub cheb_order: usize,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_expansion: usize,
    pub pae_hidden: usize,
    pub pae_latent: usize,
    /// Clipped to the number of non-constant features when larger.
    pub target_dim: usize,
    pub ridge_alpha: f64,
    pub rfe_drop_fraction: f64,
    pub edge_policy: EdgePolicy,
    /// Years; used by the phenotype-match policy.
    pub age_threshold: f64,
    pub protocol: Protocol,
    pub scheme: Scheme,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cohort: None,
            synthetic: SyntheticSpec::default(),
            output_dir: None,
            modality: ModalityMode::Multimodal,
            fusion: FusionMode::Asymmetric,
            lr: 0.01,
            weight_decay: 5e-5,
            epochs: 300,
            dropout: 0.2,
            cheb_order: 3,
            layers: 4,
            hidden: 16,
            heads: 4,
            ffn_expansion: 4,
            pae_hidden: PAE_HIDDEN_DIM,
            pae_latent: PAE_LATENT_DIM,
            target_dim: crate::featprep::DEFAULT_TARGET_DIM,
            ridge_alpha: crate::featprep::DEFAULT_RIDGE_ALPHA,
            rfe_drop_fraction: crate::featprep::DEFAULT_DROP_FRACTION,
            edge_policy: EdgePolicy::Complete,
            age_threshold: DEFAULT_AGE_THRESHOLD,
            protocol: Protocol::Inductive,
            scheme: Scheme::KFold,
            folds: 10,
            repeats: 1,
            seed: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "cohort",
    "output_dir",
    "modality",
    "fusion",
    "lr",
    "weight_decay",
    "epochs",
    "dropout",
    "cheb_order",
    "layers",
    "hidden",
    "heads",
    "ffn_expansion",
    "pae_hidden",
    "pae_latent",
    "target_dim",
    "ridge_alpha",
    "rfe_drop_fraction",
    "edge_policy",
    "age_threshold",
    "protocol",
    "scheme",
    "folds",
    "repeats",
    "seed",
    "synth_subjects",
    "synth_sites",
    "synth_func_regions",
    "synth_struct_regions",
    "synth_separation",
    "synth_func_informativeness",
    "synth_struct_informativeness",
    "synth_signature_fraction",
    "synth_site_effect",
    "synth_noise",
    "synth_seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| HarnessError::Config {
        key: key.to_string(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

impl ExperimentConfig {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "cohort" => self.cohort = path(),
            "output_dir" => self.output_dir = path(),
            "modality" => self.modality = parse(key, v)?,
            "fusion" => self.fusion = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "cheb_order" => self.cheb_order = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "ffn_expansion" => self.ffn_expansion = parse(key, v)?,
            "pae_hidden" => self.pae_hidden = parse(key, v)?,
            "pae_latent" => self.pae_latent = parse(key, v)?,
            "target_dim" => self.target_dim = parse(key, v)?,
            "ridge_alpha" => self.ridge_alpha = parse(key, v)?,
            "rfe_drop_fraction" => self.rfe_drop_fraction = parse(key, v)?,
            "edge_policy" => self.edge_policy = parse(key, v)?,
            "age_threshold" => self.age_threshold = parse(key, v)?,
            "protocol" => self.protocol = parse(key, v)?,
            "scheme" => self.scheme = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "synth_subjects" => self.synthetic.n_subjects = parse(key, v)?,
            "synth_sites" => self.synthetic.n_sites = parse(key, v)?,
            "synth_func_regions" => self.synthetic.func_regions = parse(key, v)?,
            "synth_struct_regions" => self.synthetic.struct_regions = parse(key, v)?,
            "synth_separation" => self.synthetic.class_separation = parse(key, v)?,
            "synth_func_informativeness" => self.synthetic.func_informativeness = parse(key, v)?,
            "synth_struct_informativeness" => self.synthetic.struct_informativeness = parse(key, v)?,
            "synth_signature_fraction" => self.synthetic.signature_fraction = parse(key, v)?,
            "synth_site_effect" => self.synthetic.site_effect = parse(key, v)?,
            "synth_noise" => self.synthetic.noise = parse(key, v)?,
            "synth_seed" => self.synthetic.seed = parse(key, v)?,
            other => {
                return Err(HarnessError::Config {
                    key: other.to_string(),
                    message: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses a whole configuration document on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                key: format!("line {}", lineno + 1),
                message: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Reads a file; relative `cohort` and `output_dir` paths resolve
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_text(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.cohort, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `--key=value` arguments.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<(), HarnessError> {
        for arg in args {
            let arg = arg.as_ref();
            let body = arg.strip_prefix("--").ok_or_else(|| HarnessError::Config {
                key: arg.to_string(),
                message: "overrides must look like --key=value".into(),
            })?;
            let (k, v) = body.split_once('=').ok_or_else(|| HarnessError::Config {
                key: body.to_string(),
                message: "overrides must look like --key=value".into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn resolved_edge_policy(&self) -> EdgePolicy {
        match self.edge_policy {
            EdgePolicy::Complete => EdgePolicy::Complete,
            EdgePolicy::PhenotypeMatch { .. } => EdgePolicy::PhenotypeMatch {
                age_threshold: self.age_threshold,
            },
        }
    }

    /// Every key with its current value, in [`KEYS`] order. Feeding the
    /// result back through [`ExperimentConfig::set`] reproduces `self`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let s = &self.synthetic;
        let values: BTreeMap<&str, String> = [
            ("cohort", path(&self.cohort)),
            ("output_dir", path(&self.output_dir)),
            ("modality", self.modality.to_string()),
            ("fusion", self.fusion.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("dropout", self.dropout.to_string()),
            ("cheb_order", self.cheb_order.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("heads", self.heads.to_string()),
            ("ffn_expansion", self.ffn_expansion.to_string()),
            ("pae_hidden", self.pae_hidden.to_string()),
            ("pae_latent", self.pae_latent.to_string()),
            ("target_dim", self.target_dim.to_string()),
            ("ridge_alpha", self.ridge_alpha.to_string()),
            ("rfe_drop_fraction", self.rfe_drop_fraction.to_string()),
            ("edge_policy", self.edge_policy.to_string()),
            ("age_threshold", self.age_threshold.to_string()),
            ("protocol", self.protocol.as_str().to_string()),
            ("scheme", self.scheme.as_str().to_string()),
            ("folds", self.folds.to_string()),
            ("repeats", self.repeats.to_string()),
            ("seed", self.seed.to_string()),
            ("synth_subjects", s.n_subjects.to_string()),
            ("synth_sites", s.n_sites.to_string()),
            ("synth_func_regions", s.func_regions.to_string()),
            ("synth_struct_regions", s.struct_regions.to_string()),
            ("synth_separation", s.class_separation.to_string()),
            ("synth_func_informativeness", s.func_informativeness.to_string()),
            ("synth_struct_informativeness", s.struct_informativeness.to_string()),
            ("synth_signature_fraction", s.signature_fraction.to_string()),
            ("synth_site_effect", s.site_effect.to_string()),
            ("synth_noise", s.noise.to_string()),
            ("synth_seed", s.seed.to_string()),
        ]
        .into_iter()
        .collect();
        KEYS.iter().map(|k| (k.to_string(), values[k].clone())).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |key: &str, message: String| {
            Err(HarnessError::Config {
                key: key.to_string(),
                message,
            })
        };
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("must lie in [0, 1), got {}", self.dropout));
        }
        for (key, v) in [
            ("epochs", self.epochs),
            ("cheb_order", self.cheb_order),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn_expansion", self.ffn_expansion),
            ("pae_hidden", self.pae_hidden),
            ("pae_latent", self.pae_latent),
            ("target_dim", self.target_dim),
            ("repeats", self.repeats),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1".into());
            }
        }
        if !(self.layers * self.hidden).is_multiple_of(self.heads) {
            return bad(
                "heads",
                format!(
                    "embedding width {} is not divisible by {} heads",
                    self.layers * self.hidden,
                    self.heads
                ),
            );
        }
        if self.scheme == Scheme::KFold && self.folds < 2 {
            return bad("folds", format!("must be at least 2, got {}", self.folds));
        }
        if !(self.age_threshold >= 0.0) {
            return bad("age_threshold", format!("must be non-negative, got {}", self.age_threshold));
        }
        if self.cohort.is_none() {
            self.synthetic.validate().map_err(|e| HarnessError::Config {
                key: "synth_*".into(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            modality: self.modality,
            encoder: EncoderConfig {
                layers: self.layers,
                hidden: self.hidden,
                order: self.cheb_order,
                dropout: self.dropout,
            },
            fusion: FusionConfig {
                mode: self.fusion,
                n_heads: self.heads,
                ffn_expansion: self.ffn_expansion,
                dropout: self.dropout,
            },
            pae_hidden: self.pae_hidden,
            pae_latent: self.pae_latent,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}
