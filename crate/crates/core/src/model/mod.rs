//! Encoder, adapters, heads and their assembly.

mod adapter;
mod assembly;
mod backbone;
mod checkpoint;
mod heads;
mod layers;
mod tensor;

pub use adapter::{Adapter, AdapterConfig, AdapterStack, ADAPTER_INIT_STD, DEFAULT_REDUCTION_FACTOR};
pub use assembly::{
    adapter_prefix, argmax, count_parameters, Forward, Head, LmVerbalizer, ModelAssembly, ParameterReport,
    ADAPTER_PREFIX, BACKBONE_PREFIX, HEAD_PREFIX,
};
pub use backbone::{Backbone, MiniBackbone, MiniBackboneConfig, INIT_STD};
pub use checkpoint::{
    deserialize_trainable, load_adapter, read_checkpoint, save_adapter, serialize_trainable, write_checkpoint,
    Checkpoint, Manifest, TensorEntry,
};
pub use heads::{verbalizer_class_backward, verbalizer_class_logits, PetHead, StandardHead, HEAD_INIT_STD};
pub use layers::{cross_entropy, gelu, softmax_in_place, LayerNorm, Linear, LAYER_NORM_EPS};
pub use tensor::{fingerprint, to_f32_grid, Param, Parameters, ParametersDyn, Tensor};
