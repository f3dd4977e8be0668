use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::array::{Float, Tensor};
use crate::tensor::tape::Var;
use crate::tensor::Mode;

pub const BN_EPSILON: Float = 1e-5;
pub const BN_MOMENTUM: Float = 0.1;

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<Float>,
    /// Unbiased variance, as used for the running estimate.
    pub var: Vec<Float>,
}

/// Statistics batchnorm normalises with.
pub enum Normalization<'a> {
    /// Batch statistics; the batch must hold at least two samples.
    Batch,
    /// Fixed running statistics.
    Running { mean: &'a Tensor, var: &'a Tensor },
}

/// Batch normalisation over channel axis 1 of `(B, C, ...)`.
///
/// Returns the batch statistics in [`Normalization::Batch`] mode so the
/// caller can update its running estimates.
pub fn batchnorm(
    x: &Var,
    gamma: &Var,
    beta: &Var,
    norm: Normalization<'_>,
) -> Result<(Var, Option<BatchStats>)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::dim(format!("batchnorm: need (B, C, ...), got {s:?}")));
    }
    let (b, c) = (s[0], s[1]);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim(format!("batchnorm: scale/shift must have {c} entries")));
    }
    let inner: usize = s[2..].iter().product();
    let n = b * inner;
    let xv = x.value();
    let gv = gamma.value();
    let bv = beta.value();
    let at = move |bi: usize, ch: usize| (bi * c + ch) * inner;

    let (mean, inv_std, stats) = match norm {
        Normalization::Batch => {
            if b < 2 {
                return Err(Error::DegenerateBatch(format!(
                    "batchnorm in train mode needs ≥ 2 samples, got {b}"
                )));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut acc = 0.0f64;
                for bi in 0..b {
                    acc += xv.data()[at(bi, ch)..at(bi, ch) + inner].iter().map(|&v| v as f64).sum::<f64>();
                }
                let m = acc / n as f64;
                let mut sq = 0.0f64;
                for bi in 0..b {
                    sq += xv.data()[at(bi, ch)..at(bi, ch) + inner]
                        .iter()
                        .map(|&v| (v as f64 - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = m as Float;
                var[ch] = (sq / n as f64) as Float;
            }
            let inv: Vec<Float> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let unbiased = var
                .iter()
                .map(|&v| if n > 1 { v * n as Float / (n - 1) as Float } else { v })
                .collect();
            (mean.clone(), inv, Some(BatchStats { mean, var: unbiased }))
        }
        Normalization::Running { mean, var } => {
            if mean.shape() != [c] || var.shape() != [c] {
                return Err(Error::dim("batchnorm: running statistics size"));
            }
            let inv = var.data().iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            (mean.data().to_vec(), inv, None)
        }
    };

    let mut out = vec![0.0; xv.numel()];
    let mut xhat = vec![0.0; xv.numel()];
    for bi in 0..b {
        for ch in 0..c {
            let r = at(bi, ch)..at(bi, ch) + inner;
            for ((o, h), &v) in out[r.clone()].iter_mut().zip(&mut xhat[r.clone()]).zip(&xv.data()[r]) {
                *h = (v - mean[ch]) * inv_std[ch];
                *o = *h * gv.data()[ch] + bv.data()[ch];
            }
        }
    }
    let batch_mode = stats.is_some();
    let y = x.tape().record(
        "batchnorm",
        Tensor::from_parts(s.clone(), out),
        &[x, gamma, beta],
        Box::new(move |g, inp, _| {
            let gamma = inp[1].data();
            let mut gg = vec![0.0; c];
            let mut gb = vec![0.0; c];
            for bi in 0..b {
                for ch in 0..c {
                    let r = at(bi, ch)..at(bi, ch) + inner;
                    for (&gv, &h) in g.data()[r.clone()].iter().zip(&xhat[r]) {
                        gg[ch] += gv * h;
                        gb[ch] += gv;
                    }
                }
            }
            let mut gx = vec![0.0; g.numel()];
            for ch in 0..c {
                let k = gamma[ch] * inv_std[ch];
                for bi in 0..b {
                    let r = at(bi, ch)..at(bi, ch) + inner;
                    for ((d, &gv), &h) in gx[r.clone()].iter_mut().zip(&g.data()[r.clone()]).zip(&xhat[r]) {
                        *d = if batch_mode {
                            k * (gv - gb[ch] / n as Float - h * gg[ch] / n as Float)
                        } else {
                            k * gv
                        };
                    }
                }
            }
            vec![
                Some(Tensor::from_parts(inp[0].shape().to_vec(), gx)),
                Some(Tensor::from_parts(vec![c], gg)),
                Some(Tensor::from_parts(vec![c], gb)),
            ]
        }),
    );
    Ok((y, stats))
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1−p)`; eval mode is the identity.
pub fn dropout(x: &Var, p: Float, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let shape = x.shape();
    let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f64>() < p as f64 { 0.0 } else { keep });
    let out = x.value().zip_map(&mask, |a, m| a * m);
    Ok(x.tape().record(
        "dropout",
        out,
        &[x],
        Box::new(move |g, _, _| vec![Some(g.zip_map(&mask, |a, m| a * m))]),
    ))
}
