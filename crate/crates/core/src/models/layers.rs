//! Parameter instantiation and forward evaluation of [`LayerSpec`] sequences.

use rand_chacha::ChaCha8Rng;

use super::spec::{inception_branches, layer_out_shape, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::ops::{self, BatchStats, Normalization, Window2d, BN_MOMENTUM};
use crate::tensor::{bias_uniform, kaiming_uniform, Float, Mode, ParamStore, Tape, Tensor, Var};

/// A layer with the store indices of its parameters.
#[derive(Clone, Debug)]
pub(crate) enum Bound {
    Conv { w: usize, b: usize, pad: usize, stride: usize, kernel: usize },
    BatchNorm { gamma: usize, beta: usize, mean: usize, var: usize },
    Relu,
    MaxPool { size: usize, pad: usize, stride: usize },
    Dropout { p: Float },
    Inception { branches: Vec<Vec<Bound>>, temporal: bool },
    GlobalAvgPool,
    Linear { w: usize, b: usize },
}

/// Running-statistics update produced by a training-mode batchnorm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: usize,
    pub var: usize,
    pub stats: BatchStats,
}

pub(crate) fn instantiate(
    spec: &LayerSpec,
    label: &str,
    input: &[usize],
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<(Bound, Vec<usize>)> {
    let out = layer_out_shape(spec, input, label)?;
    let bound = match spec {
        LayerSpec::Conv { out: o, kernel, pad, stride } => {
            let cin = input[0];
            let mut shape = vec![*o, cin];
            shape.extend(std::iter::repeat(*kernel).take(input.len() - 1));
            let fan_in = cin * kernel.pow(input.len() as u32 - 1);
            Bound::Conv {
                w: store.add(format!("{label}.w"), kaiming_uniform(&shape, fan_in, rng), true),
                b: store.add(format!("{label}.b"), bias_uniform(&[*o], fan_in, rng), true),
                pad: *pad,
                stride: *stride,
                kernel: *kernel,
            }
        }
        LayerSpec::BatchNorm => {
            let c = input[0];
            Bound::BatchNorm {
                gamma: store.add(format!("{label}.gamma"), Tensor::ones(&[c]), true),
                beta: store.add(format!("{label}.beta"), Tensor::zeros(&[c]), true),
                mean: store.add(format!("{label}.running_mean"), Tensor::zeros(&[c]), false),
                var: store.add(format!("{label}.running_var"), Tensor::ones(&[c]), false),
            }
        }
        LayerSpec::Relu => Bound::Relu,
        LayerSpec::MaxPool { size, pad, stride } => Bound::MaxPool { size: *size, pad: *pad, stride: *stride },
        LayerSpec::Dropout { p } => Bound::Dropout { p: *p as Float },
        LayerSpec::Inception { kind, out: o, temporal } => {
            // temporal modules see (C, frames, extent); the frame axis never changes
            let branch_in: Vec<usize> = if *temporal {
                vec![input[0], 3, input[1]]
            } else {
                input.to_vec()
            };
            let mut branches = Vec::new();
            for (bi, layers) in inception_branches(*kind, *o).into_iter().enumerate() {
                let mut s = branch_in.clone();
                let mut bound = Vec::new();
                for (li, l) in layers.iter().enumerate() {
                    let (b, ns) = instantiate(l, &format!("{label}.b{bi}.{li}"), &s, store, rng)?;
                    bound.push(b);
                    s = ns;
                }
                branches.push(bound);
            }
            Bound::Inception { branches, temporal: *temporal }
        }
        LayerSpec::GlobalAvgPool => Bound::GlobalAvgPool,
        LayerSpec::Linear { out: o } => {
            let fan_in = input[0];
            Bound::Linear {
                w: store.add(format!("{label}.w"), kaiming_uniform(&[fan_in, *o], fan_in, rng), true),
                b: store.add(format!("{label}.b"), bias_uniform(&[*o], fan_in, rng), true),
            }
        }
    };
    Ok((bound, out))
}

/// Moves running statistics towards the batch statistics of a training pass.
pub(crate) fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        for (idx, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var)] {
            let v = store.get_mut(idx).value_mut();
            for (r, &s) in v.data_mut().iter_mut().zip(batch.iter()) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * s;
            }
        }
    }
}

/// Forward state shared by every layer of one pass.
pub(crate) struct Ctx<'a> {
    pub tape: &'a Tape,
    pub store: &'a ParamStore,
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
    /// Frames per clip, for temporal layers of frame-wise networks.
    pub frames: usize,
    pub bn: Vec<BnUpdate>,
}

impl Ctx<'_> {
    pub fn p(&self, i: usize) -> Var {
        self.tape.param(self.store, i)
    }
}

pub(crate) fn forward_seq(layers: &[Bound], x: Var, ctx: &mut Ctx<'_>) -> Result<Var> {
    layers.iter().try_fold(x, |x, l| forward_one(l, x, ctx))
}

pub(crate) fn forward_one(layer: &Bound, x: Var, ctx: &mut Ctx<'_>) -> Result<Var> {
    let rank = x.shape().len();
    match layer {
        Bound::Conv { w, b, pad, stride, kernel } => match rank {
            3 => ops::conv1d(&x, &ctx.p(*w), &ctx.p(*b), *pad, *stride),
            4 => ops::conv2d(&x, &ctx.p(*w), &ctx.p(*b), Window2d::square(*kernel, *pad, *stride)),
            _ => Err(Error::dim(format!("conv on rank-{rank} activations"))),
        },
        Bound::BatchNorm { gamma, beta, mean, var } => {
            let (g, bt) = (ctx.p(*gamma), ctx.p(*beta));
            match ctx.mode {
                Mode::Train => {
                    let (y, stats) = ops::batchnorm(&x, &g, &bt, Normalization::Batch)?;
                    ctx.bn.push(BnUpdate { mean: *mean, var: *var, stats: stats.expect("batch mode") });
                    Ok(y)
                }
                Mode::Eval => {
                    let (m, v) = (ctx.store.get(*mean).value(), ctx.store.get(*var).value());
                    Ok(ops::batchnorm(&x, &g, &bt, Normalization::Running { mean: m, var: v })?.0)
                }
            }
        }
        Bound::Relu => Ok(ops::relu(&x)),
        Bound::MaxPool { size, pad, stride } => match rank {
            3 => ops::maxpool1d(&x, *size, *pad, *stride),
            4 => ops::maxpool2d(&x, Window2d::square(*size, *pad, *stride)),
            _ => Err(Error::dim(format!("pooling on rank-{rank} activations"))),
        },
        Bound::Dropout { p } => ops::dropout(&x, *p, ctx.mode, ctx.rng),
        Bound::Inception { branches, temporal } => {
            let xin = if *temporal { frames_to_image(&x, ctx.frames)? } else { x };
            let outs = branches
                .iter()
                .map(|b| forward_seq(b, xin.clone(), ctx))
                .collect::<Result<Vec<_>>>()?;
            let y = ops::concat(&outs.iter().collect::<Vec<_>>(), 1)?;
            if *temporal {
                image_to_frames(&y)
            } else {
                Ok(y)
            }
        }
        Bound::GlobalAvgPool => ops::global_avg_pool(&x),
        Bound::Linear { w, b } => ops::linear(&x, &ctx.p(*w), &ctx.p(*b)),
    }
}

/// `(B·L, C, E)` frames → `(B, C, L, E)` clip images.
pub(crate) fn frames_to_image(x: &Var, frames: usize) -> Result<Var> {
    let s = x.shape();
    if s.len() != 3 || frames == 0 || s[0] % frames != 0 {
        return Err(Error::dim(format!("cannot group {s:?} into clips of {frames} frames")));
    }
    let r = ops::reshape(x, &[s[0] / frames, frames, s[1], s[2]])?;
    ops::permute(&r, &[0, 2, 1, 3])
}

/// Inverse of [`frames_to_image`].
pub(crate) fn image_to_frames(y: &Var) -> Result<Var> {
    let s = y.shape();
    let p = ops::permute(y, &[0, 2, 1, 3])?;
    ops::reshape(&p, &[s[0] * s[2], s[1], s[3]])
}
