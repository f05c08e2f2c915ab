use rand::Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Feed-forward width as a multiple of the hidden size.
pub const FFN_MULT: usize = 4;

const INIT_STD: f32 = 0.02;

/// Parameter names of one encoder layer, relative to its prefix.
pub const LAYER_PARAM_NAMES: [&str; 16] = [
    "attn.q.w", "attn.q.b", "attn.k.w", "attn.k.b", "attn.v.w", "attn.v.b", "attn.o.w", "attn.o.b",
    "ln1.g", "ln1.b", "ffn.in.w", "ffn.in.b", "ffn.out.w", "ffn.out.b", "ln2.g", "ln2.b",
];

/// Weights of one post-norm Transformer encoder layer.
///
/// Projection weights are stored `[in, out]` so that `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: usize,
    pub tensors: Vec<Tensor>,
}

fn shapes(h: usize) -> [Vec<usize>; 16] {
    let f = FFN_MULT * h;
    [
        vec![h, h], vec![h], vec![h, h], vec![h], vec![h, h], vec![h], vec![h, h], vec![h],
        vec![h], vec![h], vec![h, f], vec![f], vec![f, h], vec![h], vec![h], vec![h],
    ]
}

impl LayerParams {
    pub fn init<R: Rng + ?Sized>(hidden: usize, heads: usize, rng: &mut R) -> Result<Self> {
        check_heads(hidden, heads)?;
        let tensors = LAYER_PARAM_NAMES
            .iter()
            .zip(shapes(hidden))
            .map(|(name, shape)| {
                if name.ends_with(".w") {
                    Tensor::randn(&shape, INIT_STD, rng)
                } else if name.ends_with(".g") {
                    Tensor::full(&shape, 1.0)
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        Ok(LayerParams { heads, tensors })
    }

    pub fn hidden(&self) -> usize {
        self.tensors[0].rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        check_heads(h, self.heads)?;
        for ((name, t), want) in LAYER_PARAM_NAMES.iter().zip(&self.tensors).zip(shapes(h)) {
            if t.shape() != want.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: expected {want:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn store_into(&self, store: &mut ParamStore, prefix: &str) {
        for (name, t) in LAYER_PARAM_NAMES.iter().zip(&self.tensors) {
            store.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    pub fn from_store(store: &ParamStore, prefix: &str, heads: usize) -> Result<Self> {
        let tensors = LAYER_PARAM_NAMES
            .iter()
            .map(|name| {
                let key = format!("{prefix}.{name}");
                store
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("missing parameter {key:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = LayerParams { heads, tensors };
        p.validate()?;
        Ok(p)
    }
}

fn check_heads(hidden: usize, heads: usize) -> Result<()> {
    if heads == 0 || hidden % heads != 0 {
        return Err(Error::Config(format!(
            "{heads} heads do not divide hidden size {hidden}"
        )));
    }
    Ok(())
}

/// A layer's parameters bound on a tape.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub heads: usize,
    vars: Vec<Var>,
}

impl LayerVars {
    pub fn bind(tape: &mut Tape, store: &ParamStore, prefix: &str, heads: usize) -> Result<Self> {
        let vars = LAYER_PARAM_NAMES
            .iter()
            .map(|name| tape.param(store, &format!("{prefix}.{name}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerVars { heads, vars })
    }

    /// Wraps existing tape variables, ordered as [`LAYER_PARAM_NAMES`].
    pub fn new(heads: usize, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != LAYER_PARAM_NAMES.len() {
            return Err(Error::Shape(format!(
                "{} layer variables, expected {}",
                vars.len(),
                LAYER_PARAM_NAMES.len()
            )));
        }
        Ok(LayerVars { heads, vars })
    }

    pub fn from_params(tape: &mut Tape, params: &LayerParams) -> Self {
        LayerVars {
            heads: params.heads,
            vars: params.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Output of one layer: the new hidden states and per-head attention
/// probability tables (`T x T`, rows are queries).
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub output: Var,
    pub attention: Vec<Var>,
}

/// Multi-head self-attention, residual and layer norm, then a GELU
/// feed-forward block, residual and layer norm.
///
/// `key_mask[j] == false` hides key `j` from every query.
pub fn transformer_layer(
    tape: &mut Tape,
    lv: &LayerVars,
    x: Var,
    key_mask: Option<&[bool]>,
) -> Result<LayerOutput> {
    let [qw, qb, kw, kb, vw, vb, ow, ob, g1, b1, fw1, fb1, fw2, fb2, g2, b2] =
        <[Var; 16]>::try_from(lv.vars.as_slice()).expect("16 layer params");
    let hidden = tape.value(x).cols();
    let head_dim = hidden / lv.heads;
    let scale = 1.0 / (head_dim as f32).sqrt();

    let q = tape.matmul(x, qw)?;
    let q = tape.add_row(q, qb)?;
    let k = tape.matmul(x, kw)?;
    let k = tape.add_row(k, kb)?;
    let v = tape.matmul(x, vw)?;
    let v = tape.add_row(v, vb)?;

    let mut heads = Vec::with_capacity(lv.heads);
    let mut attention = Vec::with_capacity(lv.heads);
    for h in 0..lv.heads {
        let qh = tape.slice_cols(q, h * head_dim, head_dim)?;
        let kh = tape.slice_cols(k, h * head_dim, head_dim)?;
        let vh = tape.slice_cols(v, h * head_dim, head_dim)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let probs = tape.softmax_rows(scores, key_mask)?;
        heads.push(tape.matmul(probs, vh)?);
        attention.push(probs);
    }
    let ctx = tape.concat_cols(&heads)?;
    let attn = tape.matmul(ctx, ow)?;
    let attn = tape.add_row(attn, ob)?;
    let res = tape.add(x, attn)?;
    let h1 = tape.layer_norm(res, g1, b1)?;

    let f = tape.matmul(h1, fw1)?;
    let f = tape.add_row(f, fb1)?;
    let f = tape.gelu(f);
    let f = tape.matmul(f, fw2)?;
    let f = tape.add_row(f, fb2)?;
    let res = tape.add(h1, f)?;
    let output = tape.layer_norm(res, g2, b2)?;
    Ok(LayerOutput { output, attention })
}

/// Forward-only evaluation of a single layer on `inputs` (`T x H`).
/// Returns the layer output and the per-head attention tables.
pub fn transformer_layer_forward(
    params: &LayerParams,
    inputs: &Tensor,
    attn_mask: Option<&[bool]>,
) -> Result<(Tensor, Vec<Tensor>)> {
    params.validate()?;
    if inputs.cols() != params.hidden() || inputs.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "layer input {:?} for hidden size {}",
            inputs.shape(),
            params.hidden()
        )));
    }
    if !inputs.is_finite() {
        return Err(Error::NonFinite { encoder: "input", layer: 0 });
    }
    let mut tape = Tape::new();
    let lv = LayerVars::from_params(&mut tape, params);
    let x = tape.constant(inputs.clone());
    let out = transformer_layer(&mut tape, &lv, x, attn_mask)?;
    let y = tape.value(out.output).clone();
    if !y.is_finite() {
        return Err(Error::NonFinite { encoder: "layer", layer: 0 });
    }
    let attn = out.attention.iter().map(|&a| tape.value(a).clone()).collect();
    Ok((y, attn))
}
