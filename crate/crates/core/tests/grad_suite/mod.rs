//! Finite-difference gradient checks shared by the gradient and acceptance targets.

pub mod networks;
pub mod ops;

pub fn all() -> Vec<(&'static str, fn())> {
    vec![
        ("conv2d", ops::conv2d_gradients),
        ("conv1d", ops::conv1d_gradients),
        ("conv_transpose2d", ops::conv_transpose_gradients),
        ("maxpool2d", ops::maxpool_gradients),
        ("batchnorm", ops::batchnorm_gradients),
        ("relu", ops::relu_gradients_away_from_zero),
        ("linear", ops::linear_gradients),
        ("dropout", ops::dropout_gradients_with_fixed_mask),
        ("global_avg_pool", ops::global_avg_pool_gradients),
        ("softmax_xent", ops::softmax_xent_gradients),
        ("elementwise", ops::elementwise_and_shape_op_gradients),
        ("matmul/clamp/maxpool1d", ops::remaining_op_gradients),
        ("dct", ops::dct_gradients),
        ("recurrent", ops::recurrent_gradients),
        ("grad_reverse", ops::grad_reverse_scales_exactly),
        ("networks", networks::every_variant_passes_gradcheck),
    ]
}
