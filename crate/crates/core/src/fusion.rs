//! Cross-attention fusion of the two modality embeddings, the feed-forward
//! refinement block, the linear classifier, and the fusion variants used by
//! the ablation grid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{concat_cols, derive_seed, Binding, Mat, ParamId, ParamStore, TensorError, Var};

pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_FFN_EXPANSION: usize = 4;
pub const NUM_CLASSES: usize = 2;

/// Query and output projections of one multi-head attention block.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_o: ParamId,
    pub dim: usize,
    pub n_heads: usize,
}

impl AttentionParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        if n_heads == 0 || !dim.is_multiple_of(n_heads) {
            return Err(TensorError::Param(format!(
                "embedding width {dim} is not divisible by {n_heads} heads"
            )));
        }
        Ok(Self {
            w_q: store.add_glorot(format!("{name}.w_q"), dim, dim, rng),
            w_o: store.add_glorot(format!("{name}.w_o"), dim, dim, rng),
            dim,
            n_heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }
}

/// Layer norm, expansion, GELU, dropout, projection.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub dropout: f64,
}

impl FeedForward {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        expansion: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        if expansion == 0 {
            return Err(TensorError::Param("feed-forward expansion must be positive".into()));
        }
        let wide = dim * expansion;
        Ok(Self {
            ln_gain: store.add(format!("{name}.ln_gain"), Mat::ones((1, dim))),
            ln_bias: store.add_zeros(format!("{name}.ln_bias"), 1, dim),
            w1: store.add_glorot(format!("{name}.w1"), dim, wide, rng),
            b1: store.add_zeros(format!("{name}.b1"), 1, wide),
            w2: store.add_glorot(format!("{name}.w2"), wide, dim, rng),
            b2: store.add_zeros(format!("{name}.b2"), 1, dim),
            dropout,
        })
    }
}

/// Intermediate tensors of one attention pass.
#[derive(Debug, Clone)]
pub struct Attended<'t> {
    /// Projected queries `H_q W_Q`.
    pub queries: Var<'t>,
    /// Heads concatenated and mapped by `W_O`.
    pub output: Var<'t>,
    /// One `N×N` row-stochastic matrix per head.
    pub weights: Vec<Var<'t>>,
}

/// Multi-head attention with queries `H_q W_Q` and keys = values = `H_kv`.
pub fn cross_attention<'t>(
    h_q: Var<'t>,
    h_kv: Var<'t>,
    attn: &AttentionParams,
    params: &Binding<'t>,
) -> Result<Attended<'t>, TensorError> {
    let (nq, dq) = h_q.shape();
    let (nk, dk) = h_kv.shape();
    if dq != attn.dim || dk != attn.dim || nq != nk {
        return Err(TensorError::Shape {
            op: "cross_attention",
            left: (nq, dq),
            right: (nk, dk),
        });
    }
    let queries = h_q.matmul(params[attn.w_q])?;
    let hd = attn.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut heads = Vec::with_capacity(attn.n_heads);
    let mut weights = Vec::with_capacity(attn.n_heads);
    for h in 0..attn.n_heads {
        let (lo, hi) = (h * hd, (h + 1) * hd);
        let q = queries.slice_cols(lo, hi)?;
        let kv = h_kv.slice_cols(lo, hi)?;
        let a = q.matmul(kv.t())?.scale(scale).softmax_rows();
        heads.push(a.matmul(kv)?);
        weights.push(a);
    }
    let output = concat_cols(&heads)?.matmul(params[attn.w_o])?;
    Ok(Attended {
        queries,
        output,
        weights,
    })
}

/// Functional embeddings query structural ones.
pub fn asymmetric_cross_attention<'t>(
    h_f: Var<'t>,
    h_s: Var<'t>,
    attn: &AttentionParams,
    params: &Binding<'t>,
) -> Result<Attended<'t>, TensorError> {
    cross_attention(h_f, h_s, attn, params)
}

/// `lin2(dropout(gelu(lin1(LN(Z + Q)))))`.
pub fn residual_refine<'t>(
    z: Var<'t>,
    queries: Var<'t>,
    ffn: &FeedForward,
    params: &Binding<'t>,
    training: bool,
    seed: u64,
) -> Result<Var<'t>, TensorError> {
    let residual = z.add(queries)?;
    let normed = residual.layer_norm(params[ffn.ln_gain], params[ffn.ln_bias])?;
    normed
        .matmul(params[ffn.w1])?
        .add_row(params[ffn.b1])?
        .gelu()
        .dropout(ffn.dropout, training, seed)?
        .matmul(params[ffn.w2])?
        .add_row(params[ffn.b2])
}

/// Attention followed by refinement.
#[derive(Debug, Clone)]
pub struct CrossAttentionBlock {
    pub attention: AttentionParams,
    pub ffn: FeedForward,
}

impl CrossAttentionBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        config: &FusionConfig,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            attention: AttentionParams::new(store, &format!("{name}.attn"), dim, config.n_heads, rng)?,
            ffn: FeedForward::new(
                store,
                &format!("{name}.ffn"),
                dim,
                config.ffn_expansion,
                config.dropout,
                rng,
            )?,
        })
    }

    pub fn forward<'t>(
        &self,
        h_q: Var<'t>,
        h_kv: Var<'t>,
        params: &Binding<'t>,
        training: bool,
        seed: u64,
    ) -> Result<Var<'t>, TensorError> {
        let att = cross_attention(h_q, h_kv, &self.attention, params)?;
        residual_refine(att.output, att.queries, &self.ffn, params, training, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    Concat,
    Symmetric,
    Asymmetric,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Concat, FusionMode::Symmetric, FusionMode::Asymmetric];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Concat => "concat",
            FusionMode::Symmetric => "symmetric",
            FusionMode::Asymmetric => "asymmetric",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "concat" => Ok(FusionMode::Concat),
            "symmetric" => Ok(FusionMode::Symmetric),
            "asymmetric" => Ok(FusionMode::Asymmetric),
            other => Err(TensorError::Param(format!(
                "unknown fusion mode `{other}` (expected concat, symmetric or asymmetric)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub n_heads: usize,
    pub ffn_expansion: usize,
    pub dropout: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Asymmetric,
            n_heads: DEFAULT_HEADS,
            ffn_expansion: DEFAULT_FFN_EXPANSION,
            dropout: 0.2,
        }
    }
}

/// The fusion stage for one of the three modes.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub mode: FusionMode,
    pub dim: usize,
    /// Empty for concat; `[f→s]` for asymmetric; `[f→s, s→f]` for symmetric.
    pub blocks: Vec<CrossAttentionBlock>,
}

impl Fusion {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        dim: usize,
        config: &FusionConfig,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let names: &[&str] = match config.mode {
            FusionMode::Concat => &[],
            FusionMode::Asymmetric => &["fusion.fs"],
            FusionMode::Symmetric => &["fusion.fs", "fusion.sf"],
        };
        let blocks = names
            .iter()
            .map(|n| CrossAttentionBlock::new(store, n, dim, config, rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            mode: config.mode,
            dim,
            blocks,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self.mode {
            FusionMode::Asymmetric => self.dim,
            FusionMode::Concat | FusionMode::Symmetric => 2 * self.dim,
        }
    }

    pub fn forward<'t>(
        &self,
        h_f: Var<'t>,
        h_s: Var<'t>,
        params: &Binding<'t>,
        training: bool,
        seed: u64,
    ) -> Result<Var<'t>, TensorError> {
        match self.mode {
            FusionMode::Concat => concat_cols(&[h_f, h_s]),
            FusionMode::Asymmetric => self.blocks[0].forward(h_f, h_s, params, training, seed),
            FusionMode::Symmetric => {
                let a = self.blocks[0].forward(h_f, h_s, params, training, derive_seed(seed, 0))?;
                let b = self.blocks[1].forward(h_s, h_f, params, training, derive_seed(seed, 1))?;
                concat_cols(&[a, b])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub w: ParamId,
    pub b: ParamId,
}

impl Classifier {
    pub fn new<R: Rng>(store: &mut ParamStore, input_dim: usize, rng: &mut R) -> Self {
        Self {
            w: store.add_glorot("classifier.w", input_dim, NUM_CLASSES, rng),
            b: store.add_zeros("classifier.b", 1, NUM_CLASSES),
        }
    }

    pub fn logits<'t>(&self, z: Var<'t>, params: &Binding<'t>) -> Result<Var<'t>, TensorError> {
        z.matmul(params[self.w])?.add_row(params[self.b])
    }
}

/// Mean cross-entropy over the masked nodes.
pub fn masked_cross_entropy<'t>(
    logits: Var<'t>,
    labels: &[usize],
    mask: &[usize],
) -> Result<Var<'t>, TensorError> {
    if mask.is_empty() {
        return Err(TensorError::Param("loss mask selects no nodes".into()));
    }
    let rows: Vec<(usize, usize)> = mask
        .iter()
        .map(|&i| {
            labels.get(i).map(|&c| (i, c)).ok_or_else(|| {
                TensorError::Param(format!("mask index {i} has no label ({} labels)", labels.len()))
            })
        })
        .collect::<Result<_, _>>()?;
    logits.cross_entropy(&rows)
}
