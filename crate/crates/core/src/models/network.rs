use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{apply_bn_updates, forward_seq, instantiate, BnUpdate, Bound, Ctx};
use super::segment::segment_log_probs;
use super::spec::{Family, NetworkSpec, ShapeTrace};
use crate::error::{Error, Result};
use crate::tensor::ops::{self, softmax_rows, CellWeights, Reduction};
use crate::tensor::{bias_uniform, kaiming_uniform, Float, Mode, ParamStore, Tape, Tensor, Var};

struct CityParams {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

struct RecurrentLayerParams {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
}

/// A [`NetworkSpec`] with instantiated parameters.
pub struct Network {
    pub spec: NetworkSpec,
    pub store: ParamStore,
    trunk: Vec<Bound>,
    head: Vec<Bound>,
    output: Option<(usize, usize)>,
    attention: Option<usize>,
    city: Option<CityParams>,
    recurrent: Vec<RecurrentLayerParams>,
    trace: ShapeTrace,
}

/// Everything one forward pass produces.
pub struct Forward {
    /// `(B, K)` clip scores for clip-level networks and the DCT head.
    pub clip_logits: Option<Var>,
    /// `(B·L, K)` per-frame scores of frame-wise networks.
    pub frame_logits: Option<Var>,
    /// City scores, per frame (frame-wise) or per clip.
    pub city_logits: Option<Var>,
    /// Input to the final affine layer (FC path only, before the recurrent concat).
    pub features: Var,
    /// Trunk output, where the city branch attaches.
    pub trunk_out: Var,
    pub bn: Vec<BnUpdate>,
}

impl Network {
    /// Validates `spec` and draws parameters from `seed`.
    ///
    /// Parameters are created trunk, head, output, then branches, so the
    /// shared part of two specs that differ only in branches is identical
    /// under the same seed.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Network> {
        let trace = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut s = spec.item_shape();
        let mut trunk = Vec::new();
        for l in &spec.trunk {
            let (b, ns) = instantiate(&l.spec, &l.label, &s, &mut store, &mut rng)?;
            trunk.push(b);
            s = ns;
        }
        let trunk_shape = s;
        let mut s = trace.head_input.clone();
        let mut head = Vec::new();
        for l in &spec.head {
            let (b, ns) = instantiate(&l.spec, &l.label, &s, &mut store, &mut rng)?;
            head.push(b);
            s = ns;
        }
        let fc_width = s[0];
        let rec_width = spec.recurrent.as_ref().map_or(0, |r| r.hidden);
        let output = spec.output.map(|k| {
            let fan = fc_width + rec_width;
            (
                store.add("output.w", kaiming_uniform(&[fan, k], fan, &mut rng), true),
                store.add("output.b", bias_uniform(&[k], fan, &mut rng), true),
            )
        });
        let attention = spec
            .dct_head
            .then(|| store.add("dct.attention", Tensor::zeros(&[spec.frames(), spec.n_classes]), true));
        let trunk_flat: usize = trunk_shape.iter().product();
        let city = spec.city.as_ref().map(|c| CityParams {
            w1: store.add("city.fc1.w", kaiming_uniform(&[trunk_flat, c.hidden], trunk_flat, &mut rng), true),
            b1: store.add("city.fc1.b", bias_uniform(&[c.hidden], trunk_flat, &mut rng), true),
            w2: store.add("city.fc2.w", kaiming_uniform(&[c.hidden, c.n_cities], c.hidden, &mut rng), true),
            b2: store.add("city.fc2.b", bias_uniform(&[c.n_cities], c.hidden, &mut rng), true),
        });
        let mut recurrent = Vec::new();
        if let Some(r) = &spec.recurrent {
            let g = r.kind.gates() * r.hidden;
            let mut d = trunk_flat;
            for li in 0..r.layers {
                recurrent.push(RecurrentLayerParams {
                    w_ih: store.add(format!("rnn{li}.w_ih"), kaiming_uniform(&[d, g], d, &mut rng), true),
                    w_hh: store.add(format!("rnn{li}.w_hh"), kaiming_uniform(&[r.hidden, g], r.hidden, &mut rng), true),
                    b_ih: store.add(format!("rnn{li}.b_ih"), bias_uniform(&[g], r.hidden, &mut rng), true),
                    b_hh: store.add(format!("rnn{li}.b_hh"), bias_uniform(&[g], r.hidden, &mut rng), true),
                });
                d = r.hidden;
            }
        }
        Ok(Network { spec, store, trunk, head, output, attention, city, recurrent, trace })
    }

    pub fn shapes(&self) -> &ShapeTrace {
        &self.trace
    }

    pub fn num_params(&self) -> usize {
        self.store.num_trainable()
    }

    /// Forward pass over `x: (B, c, L, n)`.
    pub fn forward(&self, tape: &Tape, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Forward> {
        self.forward_with(tape, &self.store, x, mode, rng)
    }

    /// As [`Network::forward`], reading parameter values from `store`
    /// (same layout; used by gradient checks).
    pub fn forward_with(&self, tape: &Tape, store: &ParamStore, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Forward> {
        let [c, l, n] = self.spec.input;
        let s = x.shape();
        if s.len() != 4 || s[1..] != [c, l, n] {
            return Err(Error::dim(format!("{}: input {s:?}, expected (B, {c}, {l}, {n})", self.spec.name)));
        }
        let b = s[0];
        let mut ctx = Ctx { tape, store, mode, rng, frames: l, bn: Vec::new() };
        let input = tape.constant(x.clone());
        let k = self.spec.n_classes;
        let result = match self.spec.family {
            Family::Fcnn => {
                let t = forward_seq(&self.trunk, input, &mut ctx)?;
                let city_logits = self.city_branch(&t, &ctx)?;
                let logits = forward_seq(&self.head, t.clone(), &mut ctx)?;
                Forward {
                    clip_logits: Some(logits.clone()),
                    frame_logits: None,
                    city_logits,
                    features: logits,
                    trunk_out: t,
                    bn: Vec::new(),
                }
            }
            Family::Dcnn => {
                let frames = ops::reshape(&ops::permute(&input, &[0, 2, 1, 3])?, &[b * l, c, n])?;
                let t = forward_seq(&self.trunk, frames.clone(), &mut ctx)?;
                let city_logits = self.city_branch(&t, &ctx)?;
                let tf = ops::flatten(&t)?;
                let mut h = if self.spec.concat_input {
                    ops::concat(&[&ops::flatten(&frames)?, &tf], 1)?
                } else {
                    tf.clone()
                };
                h = forward_seq(&self.head, h, &mut ctx)?;
                let features = h.clone();
                if !self.recurrent.is_empty() {
                    let rw = tf.shape()[1];
                    let mut seq = ops::reshape(&tf, &[b, l, rw])?;
                    let kind = self.spec.recurrent.as_ref().expect("recurrent spec").kind;
                    let mut last = None;
                    for p in &self.recurrent {
                        let w = CellWeights { w_ih: ctx.p(p.w_ih), w_hh: ctx.p(p.w_hh), b_ih: ctx.p(p.b_ih), b_hh: ctx.p(p.b_hh) };
                        let out = ops::recurrent_layer(kind, &seq, &w)?;
                        seq = out.sequence;
                        last = Some(out.last_hidden);
                    }
                    let per_frame = ops::repeat_rows(&last.expect("≥ 1 layer"), l)?;
                    h = ops::concat(&[&h, &per_frame], 1)?;
                }
                let (ow, ob) = self.output.expect("frame-wise output layer");
                let frame_logits = ops::linear(&h, &ctx.p(ow), &ctx.p(ob))?;
                let clip_logits = match self.attention {
                    Some(a) => Some(dct_temporal_head(&ops::reshape(&frame_logits, &[b, l, k])?, &ctx.p(a))?),
                    None => None,
                };
                Forward { clip_logits, frame_logits: Some(frame_logits), city_logits, features, trunk_out: t, bn: Vec::new() }
            }
        };
        Ok(Forward { bn: ctx.bn, ..result })
    }

    fn city_branch(&self, t: &Var, ctx: &Ctx<'_>) -> Result<Option<Var>> {
        let (Some(p), Some(cfg)) = (&self.city, &self.spec.city) else { return Ok(None) };
        let r = ops::flatten(&ops::grad_reverse(t, cfg.lambda as Float))?;
        let h = ops::relu(&ops::linear(&r, &ctx.p(p.w1), &ctx.p(p.b1))?);
        Ok(Some(ops::linear(&h, &ctx.p(p.w2), &ctx.p(p.b2))?))
    }

    /// Training objective: scene cross-entropy (per frame for frame-wise nets
    /// without the DCT head) plus city cross-entropy when the adversary is attached.
    pub fn loss(&self, f: &Forward, labels: &[usize], cities: Option<&[usize]>) -> Result<Var> {
        match self.loss_parts(f, labels, cities)? {
            (scene, Some(city)) => ops::add(&scene, &city),
            (scene, None) => Ok(scene),
        }
    }

    /// Scene and city terms of [`Network::loss`].
    pub fn loss_parts(&self, f: &Forward, labels: &[usize], cities: Option<&[usize]>) -> Result<(Var, Option<Var>)> {
        let l = self.spec.frames();
        let per_frame = |v: &[usize]| v.iter().flat_map(|&x| std::iter::repeat(x).take(l)).collect::<Vec<_>>();
        let scene = match (&f.clip_logits, &f.frame_logits) {
            (Some(c), _) => ops::softmax_xent(c, labels, Reduction::Mean)?.1,
            (None, Some(fr)) => ops::softmax_xent(fr, &per_frame(labels), Reduction::Mean)?.1,
            _ => return Err(Error::Contract("forward produced no scene scores".into())),
        };
        match (&f.city_logits, cities) {
            (Some(cl), Some(cs)) => {
                let targets = if cl.shape()[0] == cs.len() { cs.to_vec() } else { per_frame(cs) };
                Ok((scene, Some(ops::softmax_xent(cl, &targets, Reduction::Mean)?.1)))
            }
            (Some(_), None) => Err(Error::input("city-adversary network needs city labels")),
            _ => Ok((scene, None)),
        }
    }

    /// Applies running-statistics updates collected by a training forward.
    pub fn apply_bn(&mut self, updates: &[BnUpdate]) {
        apply_bn_updates(&mut self.store, updates);
    }

    /// Class probabilities per clip in eval mode.
    ///
    /// Frame-wise networks without the DCT head accumulate frames by the
    /// renormalised mean of frame log-probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.forward(&tape, x, Mode::Eval, &mut rng)?;
        let k = self.spec.n_classes;
        if let Some(c) = &f.clip_logits {
            return Ok(softmax_rows(&c.value()).data().chunks(k).map(|r| r.iter().map(|&v| v as f64).collect()).collect());
        }
        let fr = f.frame_logits.expect("frame scores").value();
        let l = self.spec.frames();
        Ok(fr
            .data()
            .chunks(k * l)
            .map(|clip| {
                let logp: Vec<Vec<f64>> = clip.chunks(k).map(log_softmax).collect();
                segment_log_probs(&logp).expect("L ≥ 1")
            })
            .collect())
    }
}

fn log_softmax(row: &[Float]) -> Vec<f64> {
    let m = row.iter().copied().fold(Float::NEG_INFINITY, Float::max) as f64;
    let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v as f64 - lse).collect()
}

/// DCT temporal head over `(B, L, K)` frame scores with `(L, K)` attention logits.
///
/// DCT-II along frames, scaled by `sigmoid(attention)`, inverse DCT, mean over frames.
pub fn dct_temporal_head(frame_logits: &Var, attention: &Var) -> Result<Var> {
    let spec = ops::dct1d(frame_logits, 1)?;
    let filtered = ops::mul_trailing(&spec, &ops::sigmoid(attention))?;
    ops::mean_axis(&ops::idct1d(&filtered, 1)?, 1)
}
