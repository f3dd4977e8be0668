//! Differentiable operations recorded on a [`Tape`](super::Tape).

mod basic;
mod conv;
mod dct;
mod loss;
mod norm;
mod recurrent;

pub use basic::*;
pub use conv::{
    conv1d, conv2d, conv_transpose2d, global_avg_pool, maxpool1d, maxpool2d, out_extent, Window2d,
};
pub use dct::{dct1d, dct_matrix, idct1d};
pub use loss::{softmax_rows, softmax_xent, Reduction};
pub use norm::{batchnorm, dropout, BatchStats, Normalization, BN_EPSILON, BN_MOMENTUM};
pub use recurrent::{recurrent_layer, CellKind, CellWeights, RecurrentOutput};

