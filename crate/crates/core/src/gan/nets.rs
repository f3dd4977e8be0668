//! Generator, discriminator and encoder networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::layers::{forward_one, forward_seq, instantiate, BnUpdate, Bound, Ctx};
use crate::models::{DcnnConfig, FcnnConfig, LayerSpec};
use crate::tensor::ops::{self, Window2d};
use crate::training::AdamState;
use crate::tensor::{bias_uniform, kaiming_uniform, Float, Mode, ParamStore, Tape, Tensor, Var};

/// What one generated unit is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanLayout {
    /// A whole `(c, L, n)` map, for the 2D classifier.
    Image,
    /// One `(c, n)` frame, for frame-wise classifiers; clips are assembled
    /// from `L` generated frames.
    Frames,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanMode {
    Acgan,
    Cvae,
}

impl GanMode {
    pub fn parse(s: &str) -> Result<GanMode> {
        match s {
            "acgan" => Ok(GanMode::Acgan),
            "cvae" | "cvae_acgan" => Ok(GanMode::Cvae),
            _ => Err(Error::config(format!("unknown GAN mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GanMode::Acgan => "acgan",
            GanMode::Cvae => "cvae_acgan",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub layout: GanLayout,
    pub mode: GanMode,
    pub channels: usize,
    pub frames: usize,
    pub filters: usize,
    /// Discriminator block widths; the generator mirrors them.
    pub widths: Vec<usize>,
    /// Width of the discriminator bottleneck `Dis_l`.
    pub hidden: usize,
    pub n_classes: usize,
    pub noise_dim: usize,
    pub embed_dim: usize,
}

fn halve(v: usize) -> usize {
    v.div_ceil(2).max(1)
}

impl GanConfig {
    /// Half-width, one-block-shallower counterpart of an FCNN classifier.
    pub fn for_fcnn(cfg: &FcnnConfig, mode: GanMode) -> GanConfig {
        GanConfig {
            layout: GanLayout::Image,
            mode,
            channels: cfg.c,
            frames: cfg.frames,
            filters: cfg.n,
            widths: cfg.multipliers[..3].iter().map(|m| halve(m * cfg.c)).collect(),
            hidden: 64,
            n_classes: cfg.n_classes,
            noise_dim: 64,
            embed_dim: 16,
        }
    }

    /// Frame-wise counterpart of a DCNN classifier.
    pub fn for_dcnn(cfg: &DcnnConfig, mode: GanMode) -> GanConfig {
        GanConfig {
            layout: GanLayout::Frames,
            mode,
            channels: cfg.c,
            frames: cfg.frames,
            filters: cfg.n,
            widths: cfg.multipliers[..3].iter().map(|m| halve(m * cfg.c)).collect(),
            hidden: 64,
            n_classes: cfg.n_classes,
            noise_dim: 64,
            embed_dim: 16,
        }
    }

    /// Shape of one generated unit without the batch axis.
    pub fn unit_shape(&self) -> Vec<usize> {
        match self.layout {
            GanLayout::Image => vec![self.channels, self.frames, self.filters],
            GanLayout::Frames => vec![self.channels, self.filters],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.channels, self.frames, self.filters, self.hidden, self.n_classes, self.noise_dim, self.embed_dim];
        if dims.contains(&0) || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config(format!("degenerate GAN configuration {self:?}")));
        }
        if self.n_classes < 2 {
            return Err(Error::config("a conditional GAN needs at least two classes"));
        }
        Ok(())
    }
}

/// Convolution blocks shared by the discriminator and encoder: conv, BN,
/// ReLU and 2-pooling while the extent allows it.
fn trunk_specs(cfg: &GanConfig) -> Vec<(String, LayerSpec)> {
    let mut out = Vec::new();
    let mut extent: Vec<usize> = cfg.unit_shape()[1..].to_vec();
    for (i, &w) in cfg.widths.iter().enumerate() {
        let p = format!("conv{}", i + 1);
        // the 2D trunk opens with the classifier's strided 5×5
        let (kernel, pad, stride) = if i == 0 && cfg.layout == GanLayout::Image { (5, 2, 2) } else { (3, 1, 1) };
        out.push((format!("{p}.conv"), LayerSpec::Conv { out: w, kernel, pad, stride }));
        extent.iter_mut().for_each(|e| *e = (*e + 2 * pad - kernel) / stride + 1);
        out.push((format!("{p}.bn"), LayerSpec::BatchNorm));
        out.push((format!("{p}.relu"), LayerSpec::Relu));
        if extent.iter().all(|&e| e >= 2) {
            out.push((format!("{p}.pool"), LayerSpec::MaxPool { size: 2, pad: 0, stride: 2 }));
            extent.iter_mut().for_each(|e| *e /= 2);
        }
    }
    out
}

fn build_seq(
    prefix: &str,
    specs: &[(String, LayerSpec)],
    input: &[usize],
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Bound>, Vec<usize>)> {
    let mut shape = input.to_vec();
    let mut layers = Vec::new();
    for (label, spec) in specs {
        let (b, s) = instantiate(spec, &format!("{prefix}.{label}"), &shape, store, rng)?;
        layers.push(b);
        shape = s;
    }
    Ok((layers, shape))
}

fn linear(prefix: &str, fan_in: usize, out: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Bound> {
    Ok(instantiate(&LayerSpec::Linear { out }, prefix, &[fan_in], store, rng)?.0)
}

/// Discriminator outputs for one batch of units.
pub struct DisOut {
    /// Real/fake probability `(N, 1)`.
    pub score: Var,
    pub logits: Var,
    /// Bottleneck feature `Dis_l`, `(N, hidden)`.
    pub feature: Var,
    pub bn: Vec<BnUpdate>,
}

#[derive(Clone, Debug)]
pub(crate) struct Discriminator {
    trunk: Vec<Bound>,
    fc: Bound,
    rf: Bound,
    scene: Bound,
}

impl Discriminator {
    fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (trunk, s) = build_seq("dis", &trunk_specs(cfg), &cfg.unit_shape(), store, rng)?;
        let flat = s.iter().product();
        Ok(Discriminator {
            trunk,
            fc: linear("dis.fc", flat, cfg.hidden, store, rng)?,
            rf: linear("dis.rf", cfg.hidden, 1, store, rng)?,
            scene: linear("dis.scene", cfg.hidden, cfg.n_classes, store, rng)?,
        })
    }

    pub(crate) fn forward(&self, tape: &Tape, store: &ParamStore, x: Var, rng: &mut ChaCha8Rng) -> Result<DisOut> {
        let mut ctx = Ctx { tape, store, mode: Mode::Train, rng, frames: 1, bn: Vec::new() };
        let feature = ops::flatten(&forward_seq(&self.trunk, x, &mut ctx)?)?;
        let h = ops::relu(&forward_one(&self.fc, feature.clone(), &mut ctx)?);
        let score = ops::sigmoid(&forward_one(&self.rf, h.clone(), &mut ctx)?);
        let logits = forward_one(&self.scene, h, &mut ctx)?;
        Ok(DisOut { score, logits, feature, bn: ctx.bn })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    trunk: Vec<Bound>,
    fc: Bound,
    mu: Bound,
    logvar: Bound,
}

impl Encoder {
    fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (trunk, s) = build_seq("enc", &trunk_specs(cfg), &cfg.unit_shape(), store, rng)?;
        let flat = s.iter().product();
        Ok(Encoder {
            trunk,
            fc: linear("enc.fc", flat, cfg.hidden, store, rng)?,
            mu: linear("enc.mu", cfg.hidden, cfg.noise_dim, store, rng)?,
            logvar: linear("enc.logvar", cfg.hidden, cfg.noise_dim, store, rng)?,
        })
    }

    /// `(μ, logvar, bn updates)` of the noise posterior.
    pub(crate) fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        x: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Var, Vec<BnUpdate>)> {
        let mut ctx = Ctx { tape, store, mode, rng, frames: 1, bn: Vec::new() };
        let h = ops::flatten(&forward_seq(&self.trunk, x, &mut ctx)?)?;
        let h = ops::relu(&forward_one(&self.fc, h, &mut ctx)?);
        let mu = forward_one(&self.mu, h.clone(), &mut ctx)?;
        let logvar = forward_one(&self.logvar, h, &mut ctx)?;
        Ok((mu, logvar, ctx.bn))
    }
}

#[derive(Clone, Debug)]
struct Up {
    w: usize,
    b: usize,
    bn: Bound,
}

#[derive(Clone, Debug)]
pub(crate) struct Generator {
    embed: usize,
    fc: Bound,
    seed_shape: [usize; 3],
    ups: Vec<Up>,
    up_win: Window2d,
    out_w: usize,
    out_b: usize,
    out_win: Window2d,
    layout: GanLayout,
    unit: Vec<usize>,
    n_classes: usize,
}

impl Generator {
    fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let m = cfg.widths.len();
        let grow = 1usize << m;
        let (h0, up_win, out_win) = match cfg.layout {
            GanLayout::Image => (cfg.frames.div_ceil(grow), Window2d::square(4, 1, 2), Window2d::square(3, 1, 1)),
            GanLayout::Frames => (1, Window2d { kernel: [1, 4], pad: [0, 1], stride: [1, 2] }, Window2d::line(3, 1, 1)),
        };
        let w0 = cfg.filters.div_ceil(grow);
        let mut chans: Vec<usize> = cfg.widths.iter().rev().copied().collect();
        chans.push(cfg.widths[0]);
        let embed = store.add(
            "gen.embed",
            Tensor::from_fn(&[cfg.n_classes, cfg.embed_dim], |_| rng.sample::<f64, _>(rand_distr::StandardNormal) as Float),
            true,
        );
        let seed_shape = [chans[0], h0, w0];
        let fc = linear("gen.fc", cfg.noise_dim + cfg.embed_dim, seed_shape.iter().product(), store, rng)?;
        let mut ups = Vec::new();
        let (mut h, mut w) = (h0, w0);
        for i in 0..m {
            let (cin, cout) = (chans[i], chans[i + 1]);
            let [kh, kw] = up_win.kernel;
            let fan_in = cin * kh * kw;
            let label = format!("gen.up{}", i + 1);
            let wi = store.add(format!("{label}.w"), kaiming_uniform(&[cin, cout, kh, kw], fan_in, rng), true);
            let bi = store.add(format!("{label}.b"), bias_uniform(&[cout], fan_in, rng), true);
            h = (h - 1) * up_win.stride[0] + kh - 2 * up_win.pad[0];
            w = (w - 1) * up_win.stride[1] + kw - 2 * up_win.pad[1];
            let (bn, _) = instantiate(&LayerSpec::BatchNorm, &format!("{label}.bn"), &[cout, h, w], store, rng)?;
            ups.push(Up { w: wi, b: bi, bn });
        }
        let cin = chans[m];
        let fan_in = cin * out_win.kernel[0] * out_win.kernel[1];
        let out_w = store.add("gen.out.w", kaiming_uniform(&[cfg.channels, cin, out_win.kernel[0], out_win.kernel[1]], fan_in, rng), true);
        let out_b = store.add("gen.out.b", bias_uniform(&[cfg.channels], fan_in, rng), true);
        Ok(Generator {
            embed,
            fc,
            seed_shape,
            ups,
            up_win,
            out_w,
            out_b,
            out_win,
            layout: cfg.layout,
            unit: cfg.unit_shape(),
            n_classes: cfg.n_classes,
        })
    }

    /// Generates one unit per label from noise `z: (N, noise_dim)`.
    pub(crate) fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        labels: &[usize],
        z: &Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<BnUpdate>)> {
        let n = labels.len();
        if z.shape().first() != Some(&n) {
            return Err(Error::dim(format!("generator: {n} labels for noise {:?}", z.shape())));
        }
        let k = self.n_classes;
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::input(format!("scene label {bad} outside {k} classes")));
        }
        let mut onehot = Tensor::zeros(&[n, k]);
        for (i, &y) in labels.iter().enumerate() {
            onehot.data_mut()[i * k + y] = 1.0;
        }
        let mut ctx = Ctx { tape, store, mode, rng, frames: 1, bn: Vec::new() };
        let e = ops::matmul(&tape.constant(onehot), &ctx.p(self.embed))?;
        let h = forward_one(&self.fc, ops::concat(&[z, &e], 1)?, &mut ctx)?;
        let [c0, h0, w0] = self.seed_shape;
        let mut x = ops::reshape(&ops::relu(&h), &[n, c0, h0, w0])?;
        for up in &self.ups {
            x = ops::conv_transpose2d(&x, &ctx.p(up.w), &ctx.p(up.b), self.up_win)?;
            x = ops::relu(&forward_one(&up.bn, x, &mut ctx)?);
        }
        x = ops::conv2d(&x, &ctx.p(self.out_w), &ctx.p(self.out_b), self.out_win)?;
        let y = match self.layout {
            GanLayout::Image => {
                let x = ops::narrow(&x, 2, 0, self.unit[1])?;
                ops::narrow(&x, 3, 0, self.unit[2])?
            }
            GanLayout::Frames => {
                let x = ops::narrow(&x, 3, 0, self.unit[1])?;
                ops::reshape(&x, &[n, self.unit[0], self.unit[1]])?
            }
        };
        Ok((y, ctx.bn))
    }
}

/// Generator, discriminator and (CVAE mode) encoder with their optimiser state.
#[derive(Clone, Debug)]
pub struct GanTriple {
    pub cfg: GanConfig,
    /// Completed training steps.
    pub steps: u64,
    pub(crate) opt_gen: AdamState,
    pub(crate) opt_dis: AdamState,
    pub(crate) opt_enc: Option<AdamState>,
    pub gen: ParamStore,
    pub dis: ParamStore,
    /// Present in CVAE mode only.
    pub enc: Option<ParamStore>,
    pub(crate) generator: Generator,
    pub(crate) discriminator: Discriminator,
    pub(crate) encoder: Option<Encoder>,
}

impl GanTriple {
    pub fn build(cfg: GanConfig, seed: u64) -> Result<GanTriple> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gen, mut dis) = (ParamStore::new(), ParamStore::new());
        let generator = Generator::build(&cfg, &mut gen, &mut rng)?;
        let discriminator = Discriminator::build(&cfg, &mut dis, &mut rng)?;
        let (enc, encoder) = match cfg.mode {
            GanMode::Cvae => {
                let mut s = ParamStore::new();
                let e = Encoder::build(&cfg, &mut s, &mut rng)?;
                (Some(s), Some(e))
            }
            GanMode::Acgan => (None, None),
        };
        Ok(GanTriple {
            cfg,
            steps: 0,
            opt_gen: AdamState::new(&gen),
            opt_dis: AdamState::new(&dis),
            opt_enc: enc.as_ref().map(AdamState::new),
            gen,
            dis,
            enc,
            generator,
            discriminator,
            encoder,
        })
    }

    /// Generated units for `labels` from explicit noise.
    pub fn generate(&self, tape: &Tape, labels: &[usize], z: &Var, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(Var, Vec<BnUpdate>)> {
        self.generator.forward(tape, &self.gen, labels, z, mode, rng)
    }

    pub fn discriminate(&self, tape: &Tape, x: Var, rng: &mut ChaCha8Rng) -> Result<DisOut> {
        self.discriminator.forward(tape, &self.dis, x, rng)
    }

    /// Real and fake units through the discriminator as one batch, so batch
    /// normalisation sees both and cannot hide a shift between them.
    pub fn discriminate_pair(&self, tape: &Tape, real: &Var, fake: &Var, rng: &mut ChaCha8Rng) -> Result<(DisOut, DisOut)> {
        let (nr, nf) = (real.shape()[0], fake.shape()[0]);
        let joint = self.discriminate(tape, ops::concat(&[real, fake], 0)?, rng)?;
        let split = |v: &Var| -> Result<(Var, Var)> { Ok((ops::narrow(v, 0, 0, nr)?, ops::narrow(v, 0, nr, nf)?)) };
        let (sr, sf) = split(&joint.score)?;
        let (lr, lf) = split(&joint.logits)?;
        let (fr, ff) = split(&joint.feature)?;
        Ok((
            DisOut { score: sr, logits: lr, feature: fr, bn: joint.bn },
            DisOut { score: sf, logits: lf, feature: ff, bn: Vec::new() },
        ))
    }

    /// `(μ, logvar)`; a contract error outside CVAE mode.
    pub fn encode(&self, tape: &Tape, x: Var, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(Var, Var, Vec<BnUpdate>)> {
        match (&self.encoder, &self.enc) {
            (Some(e), Some(s)) => e.forward(tape, s, x, mode, rng),
            _ => Err(Error::Contract("encoder requested outside CVAE mode".into())),
        }
    }

    /// `(B, c, L, n)` clips → `(N, unit…)` units.
    pub fn clips_to_units(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        let [c, l, n] = [self.cfg.channels, self.cfg.frames, self.cfg.filters];
        if s.len() != 4 || s[1..] != [c, l, n] {
            return Err(Error::dim(format!("GAN expects clips (B, {c}, {l}, {n}), got {s:?}")));
        }
        match self.cfg.layout {
            GanLayout::Image => Ok(x.clone()),
            GanLayout::Frames => {
                let b = s[0];
                let mut out = vec![0.0; x.numel()];
                let src = x.data();
                for bi in 0..b {
                    for ch in 0..c {
                        for t in 0..l {
                            let from = ((bi * c + ch) * l + t) * n;
                            let to = (((bi * l + t) * c) + ch) * n;
                            out[to..to + n].copy_from_slice(&src[from..from + n]);
                        }
                    }
                }
                Tensor::new(&[b * l, c, n], out)
            }
        }
    }

    /// Inverse of [`GanTriple::clips_to_units`].
    pub fn units_to_clips(&self, u: &Tensor) -> Result<Tensor> {
        let [c, l, n] = [self.cfg.channels, self.cfg.frames, self.cfg.filters];
        match self.cfg.layout {
            GanLayout::Image => Ok(u.clone()),
            GanLayout::Frames => {
                let s = u.shape();
                if s.len() != 3 || s[1..] != [c, n] || s[0] % l != 0 {
                    return Err(Error::dim(format!("cannot assemble {s:?} into clips of {l} frames")));
                }
                let b = s[0] / l;
                let mut out = vec![0.0; u.numel()];
                let src = u.data();
                for bi in 0..b {
                    for t in 0..l {
                        for ch in 0..c {
                            let from = (((bi * l + t) * c) + ch) * n;
                            let to = ((bi * c + ch) * l + t) * n;
                            out[to..to + n].copy_from_slice(&src[from..from + n]);
                        }
                    }
                }
                Tensor::new(&[b, c, l, n], out)
            }
        }
    }

    /// Clip labels repeated for every unit of the clip.
    pub fn unit_labels(&self, labels: &[usize]) -> Vec<usize> {
        match self.cfg.layout {
            GanLayout::Image => labels.to_vec(),
            GanLayout::Frames => labels.iter().flat_map(|&y| std::iter::repeat(y).take(self.cfg.frames)).collect(),
        }
    }
}
