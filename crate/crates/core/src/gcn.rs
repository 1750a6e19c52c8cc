//! Edge-weighted Chebyshev graph convolution and the multi-scale encoder.

use rand::Rng;

use crate::numcore::{concat_cols, derive_seed, Binding, ParamId, ParamStore, TensorError, Var};

pub const DEFAULT_CHEB_ORDER: usize = 3;
pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_HIDDEN: usize = 16;

/// `K` coefficient matrices plus a bias for one Chebyshev layer.
#[derive(Debug, Clone)]
pub struct ChebLayer {
    pub thetas: Vec<ParamId>,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl ChebLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        order: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        if order < 1 {
            return Err(TensorError::Param(format!(
                "Chebyshev order must be at least 1, got {order}"
            )));
        }
        let thetas = (0..order)
            .map(|k| store.add_glorot(format!("{name}.theta{k}"), d_in, d_out, rng))
            .collect();
        let bias = store.add_zeros(format!("{name}.bias"), 1, d_out);
        Ok(Self {
            thetas,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn order(&self) -> usize {
        self.thetas.len()
    }
}

/// How the polynomial filter is evaluated. Both give the same result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChebEvaluation {
    /// Pick whichever is cheaper for the layer shape.
    Auto,
    /// `T_k(L̃)X` by the three-term recurrence, then multiply by `θ_k`.
    Recurrence,
    /// Clenshaw's backward recurrence over `Xθ_k`.
    Clenshaw,
}

/// `Σ_k T_k(L̃) X θ_k + bias`, never forming `T_k(L̃)` itself.
pub fn cheb_conv<'t>(
    x: Var<'t>,
    laplacian: Var<'t>,
    layer: &ChebLayer,
    params: &Binding<'t>,
) -> Result<Var<'t>, TensorError> {
    cheb_conv_with(x, laplacian, layer, params, ChebEvaluation::Auto)
}

pub fn cheb_conv_with<'t>(
    x: Var<'t>,
    laplacian: Var<'t>,
    layer: &ChebLayer,
    params: &Binding<'t>,
    mode: ChebEvaluation,
) -> Result<Var<'t>, TensorError> {
    let order = layer.order();
    if order < 1 {
        return Err(TensorError::Param("Chebyshev order must be at least 1".into()));
    }
    let thetas: Vec<Var<'t>> = layer.thetas.iter().map(|&id| params[id]).collect();
    let use_clenshaw = match mode {
        ChebEvaluation::Auto => layer.d_out < layer.d_in,
        ChebEvaluation::Recurrence => false,
        ChebEvaluation::Clenshaw => true,
    };
    let out = if use_clenshaw {
        clenshaw(x, laplacian, &thetas)?
    } else {
        recurrence(x, laplacian, &thetas)?
    };
    out.add_row(params[layer.bias])
}

fn recurrence<'t>(x: Var<'t>, lap: Var<'t>, thetas: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let mut acc = x.matmul(thetas[0])?;
    if thetas.len() == 1 {
        return Ok(acc);
    }
    let mut prev = x;
    let mut cur = lap.matmul(x)?;
    acc = acc.add(cur.matmul(thetas[1])?)?;
    for theta in &thetas[2..] {
        let next = lap.matmul(cur)?.scale(2.0).sub(prev)?;
        acc = acc.add(next.matmul(*theta)?)?;
        prev = cur;
        cur = next;
    }
    Ok(acc)
}

fn clenshaw<'t>(x: Var<'t>, lap: Var<'t>, thetas: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let k = thetas.len();
    let y: Vec<Var<'t>> = thetas.iter().map(|t| x.matmul(*t)).collect::<Result<_, _>>()?;
    if k == 1 {
        return Ok(y[0]);
    }
    // b_k = y_k + 2 L b_{k+1} - b_{k+2}, down to k = 1
    let mut b_next: Option<Var<'t>> = None;
    let mut b_next2: Option<Var<'t>> = None;
    for yk in y[1..].iter().rev() {
        let mut bk = *yk;
        if let Some(b1) = b_next {
            bk = bk.add(lap.matmul(b1)?.scale(2.0))?;
        }
        if let Some(b2) = b_next2 {
            bk = bk.sub(b2)?;
        }
        b_next2 = b_next;
        b_next = Some(bk);
    }
    let b1 = b_next.expect("k >= 2");
    let mut out = y[0].add(lap.matmul(b1)?)?;
    if let Some(b2) = b_next2 {
        out = out.sub(b2)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub order: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
            order: DEFAULT_CHEB_ORDER,
            dropout: 0.2,
        }
    }
}

/// Stacked Chebyshev layers whose outputs are concatenated.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<ChebLayer>,
    pub dropout: f64,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        config: EncoderConfig,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(TensorError::Param("encoder needs at least one non-empty layer".into()));
        }
        let mut layers = Vec::with_capacity(config.layers);
        let mut d_in = input_dim;
        for l in 0..config.layers {
            layers.push(ChebLayer::new(
                store,
                &format!("{name}.layer{l}"),
                d_in,
                config.hidden,
                config.order,
                rng,
            )?);
            d_in = config.hidden;
        }
        Ok(Self {
            layers,
            dropout: config.dropout,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().map(|l| l.d_out).sum()
    }

    /// `X_l = dropout(relu(cheb_conv(X_{l-1})))`; returns `[X_1 | ... | X_L]`.
    pub fn encode<'t>(
        &self,
        x: Var<'t>,
        laplacian: Var<'t>,
        params: &Binding<'t>,
        training: bool,
        seed: u64,
    ) -> Result<Var<'t>, TensorError> {
        let mut h = x;
        let mut scales = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            h = cheb_conv(h, laplacian, layer, params)?
                .relu()
                .dropout(self.dropout, training, derive_seed(seed, l as u64))?;
            scales.push(h);
        }
        concat_cols(&scales)
    }
}
