//! Classifier architectures, their shape algebra and checkpoints.

mod builders;
mod checkpoint;
pub(crate) mod layers;
mod network;
mod segment;
mod spec;

pub use builders::{
    attach_city_adversary, build_dcnn, build_fcnn, build_hybrid, inception_param_count, with_dct_head, DcnnConfig,
    FcnnConfig, HybridVariant,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use layers::BnUpdate;
pub use network::{dct_temporal_head, Forward, Network};
pub use segment::{argmax, segment_predict, PredictionRecord};
pub use spec::{
    inception_branches, inception_widths, layer_out_shape, CityBranch, Family, InceptionKind, Layer, LayerSpec,
    NetworkSpec, RecurrentBranch, ShapeTrace,
};
