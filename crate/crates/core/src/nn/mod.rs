//! Dense tensors, reverse-mode autodiff and Transformer building blocks.

mod adam;
pub mod checkpoint;
mod layer;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layer::{
    transformer_layer, transformer_layer_forward, LayerOutput, LayerParams, LayerVars, FFN_MULT,
    LAYER_PARAM_NAMES,
};
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;
