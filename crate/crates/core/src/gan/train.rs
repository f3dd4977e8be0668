//! Alternating updates, training epochs and fake sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{
    loss_cvae_acgan, loss_gen_fake, loss_kl, loss_real_fake, loss_reco, loss_scene, reparameterize, LossParts,
    LossWeights,
};
use super::nets::{GanMode, GanTriple};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::models::layers::apply_bn_updates;
use crate::tensor::ops;
use crate::tensor::{Float, Mode, Tape, Tensor};
use crate::training::{adam_step, AdamConfig, Sample, SampleSet};

/// Component values of one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanReport {
    pub step: u64,
    pub dis_loss: f64,
    pub gen_loss: f64,
    pub enc_loss: Option<f64>,
    pub real_fake: f64,
    pub gen_fake: f64,
    pub scene: f64,
    pub kl: Option<f64>,
    pub reco: Option<f64>,
    /// Scores that hit the log clamp in this step.
    pub clamped: usize,
}

impl GanReport {
    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        [self.dis_loss, self.gen_loss, self.real_fake, self.gen_fake, self.scene]
            .into_iter()
            .chain(self.enc_loss)
            .chain(self.kl)
            .chain(self.reco)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Field-wise mean of several reports; `step` is the last one's.
    pub fn mean(reports: &[GanReport]) -> GanReport {
        let n = reports.len().max(1) as f64;
        let avg = |f: &dyn Fn(&GanReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&GanReport) -> Option<f64>| {
            reports.iter().map(f).collect::<Option<Vec<_>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        GanReport {
            step: reports.last().map_or(0, |r| r.step),
            dis_loss: avg(&|r| r.dis_loss),
            gen_loss: avg(&|r| r.gen_loss),
            enc_loss: avg_opt(&|r| r.enc_loss),
            real_fake: avg(&|r| r.real_fake),
            gen_fake: avg(&|r| r.gen_fake),
            scene: avg(&|r| r.scene),
            kl: avg_opt(&|r| r.kl),
            reco: avg_opt(&|r| r.reco),
            clamped: reports.iter().map(|r| r.clamped).sum(),
        }
    }
}

/// Standard-normal `(rows, dim)` latent codes.
pub fn noise(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(&[rows, dim], |_| rng.sample::<f64, _>(rand_distr::StandardNormal) as Float)
}

fn finite(v: f64, what: &str, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training(format!("GAN diverged at step {step}: {what} = {v}")))
    }
}

/// One discriminator update followed by one generator (and encoder) update.
///
/// `real` holds clips `(B, c, L, n)` with their scene labels. The generator
/// draws fakes for the same labels.
pub fn gan_train_step(
    t: &mut GanTriple,
    real: &Tensor,
    labels: &[usize],
    w: &LossWeights,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GanReport> {
    w.validate()?;
    if labels.len() < 2 || real.shape().first() != Some(&labels.len()) {
        return Err(Error::DegenerateBatch(format!(
            "GAN step needs at least two labelled clips, got {} labels for {:?}",
            labels.len(),
            real.shape()
        )));
    }
    let x = t.clips_to_units(real)?;
    let y = t.unit_labels(labels);
    let n = y.len();
    let nz = t.cfg.noise_dim;
    let step = t.steps + 1;
    let gamma = match t.cfg.mode {
        GanMode::Acgan => w.gamma,
        GanMode::Cvae => w.gamma1,
    };
    let adam = AdamConfig::default();
    let mut report = GanReport { step, ..GanReport::default() };

    // discriminator: fakes are detached so only its own parameters see this loss
    let bn = {
        let tape = Tape::new();
        let z = tape.constant(noise(n, nz, rng));
        let (fake, _) = t.generate(&tape, &y, &z, Mode::Train, rng)?;
        let (dr, df) = t.discriminate_pair(&tape, &tape.constant(x.clone()), &ops::detach(&fake), rng)?;
        let rf = loss_real_fake(&dr.score, &df.score)?;
        let scene = loss_scene(&dr.logits, &df.logits, &y)?;
        let dis = ops::add(&ops::scale(&rf.value, -1.0), &ops::scale(&scene, gamma as Float))?;
        report.dis_loss = finite(dis.item_f64(), "discriminator loss", step)?;
        report.clamped += rf.clamped;
        tape.backward(&dis)?;
        t.dis.zero_grad();
        t.dis.accumulate_grads(&tape);
        dr.bn
    };
    adam_step(&mut t.dis, &mut t.opt_dis, &adam, lr)?;
    apply_bn_updates(&mut t.dis, &bn);

    let tape = Tape::new();
    let z = tape.constant(noise(n, nz, rng));
    let (fake, mut bn_gen) = t.generate(&tape, &y, &z, Mode::Train, rng)?;
    let (dr, df) = t.discriminate_pair(&tape, &tape.constant(x.clone()), &fake, rng)?;
    let gen_fake = loss_gen_fake(&df.score)?;
    let rf = loss_real_fake(&dr.score, &df.score)?;
    let scene = loss_scene(&dr.logits, &df.logits, &y)?;
    let mut bn_enc = Vec::new();
    let (kl, reco) = match t.cfg.mode {
        GanMode::Acgan => (None, None),
        GanMode::Cvae => {
            let (mu, logvar, bn) = t.encode(&tape, tape.constant(x.clone()), Mode::Train, rng)?;
            bn_enc = bn;
            let zr = reparameterize(&mu, &logvar, rng)?;
            let (xr, bn) = t.generate(&tape, &y, &zr, Mode::Train, rng)?;
            bn_gen.extend(bn);
            // Dis_l of the originals and reconstructions from one joint batch
            let (d_orig, d_reco) = t.discriminate_pair(&tape, &tape.constant(x.clone()), &xr, rng)?;
            (Some(loss_kl(&mu, &logvar)?), Some(loss_reco(&d_orig.feature, &d_reco.feature)?))
        }
    };
    report.real_fake = rf.value.item_f64();
    report.gen_fake = gen_fake.value.item_f64();
    report.scene = scene.item_f64();
    report.clamped += gen_fake.clamped;
    let parts = LossParts { real_fake: rf.value, gen_fake: gen_fake.value, scene, kl, reco };
    // One backward pass serves both roles: KL has no generator path and
    // the prior-noise terms have no encoder path, so gen + γ₂·KL hands
    // each network exactly the gradient of its own target.
    let objective = match t.cfg.mode {
        GanMode::Acgan => {
            let gen = ops::add(&parts.gen_fake, &ops::scale(&parts.scene, gamma as Float))?;
            report.gen_loss = gen.item_f64();
            gen
        }
        GanMode::Cvae => {
            let (enc, gen, _) = loss_cvae_acgan(&parts, w)?;
            report.gen_loss = gen.item_f64();
            report.enc_loss = Some(finite(enc.item_f64(), "encoder loss", step)?);
            report.kl = parts.kl.as_ref().map(|v| v.item_f64());
            report.reco = parts.reco.as_ref().map(|v| v.item_f64());
            ops::add(&gen, &ops::scale(parts.kl.as_ref().expect("cvae"), w.gamma2 as Float))?
        }
    };
    finite(report.gen_loss, "generator loss", step)?;
    tape.backward(&objective)?;
    t.gen.zero_grad();
    t.gen.accumulate_grads(&tape);
    if let Some(enc) = t.enc.as_mut() {
        enc.zero_grad();
        enc.accumulate_grads(&tape);
    }
    drop(tape);
    adam_step(&mut t.gen, &mut t.opt_gen, &adam, lr)?;
    apply_bn_updates(&mut t.gen, &bn_gen);
    if let (Some(enc), Some(opt)) = (t.enc.as_mut(), t.opt_enc.as_mut()) {
        adam_step(enc, opt, &adam, lr)?;
        apply_bn_updates(enc, &bn_enc);
    }
    if !report.is_finite() {
        return Err(Error::Training(format!("GAN diverged at step {step}: {report:?}")));
    }
    t.steps = step;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig { epochs: 50, batch_size: 16, lr: 1e-3, weights: LossWeights::default() }
    }
}

/// Trains for `cfg.epochs` epochs; `on_epoch(epoch, triple)` runs after each
/// (1-based) epoch, which is where snapshot sampling happens. Returns the
/// mean report per epoch.
pub fn train_gan(
    t: &mut GanTriple,
    set: &SampleSet,
    cfg: &GanTrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &GanTriple) -> Result<()>,
) -> Result<Vec<GanReport>> {
    if cfg.epochs == 0 || cfg.batch_size < 2 || !(cfg.lr > 0.0) {
        return Err(Error::config(format!("invalid GAN training configuration {cfg:?}")));
    }
    if set.len() < 2 {
        return Err(Error::DegenerateBatch("GAN training needs at least two clips".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut reports = Vec::new();
        for idx in crate::training::train::batches(set.len(), cfg.batch_size, &mut rng) {
            let (x, labels, _) = set.batch(&idx);
            reports.push(gan_train_step(t, &x, &labels, &cfg.weights, cfg.lr, &mut rng)?);
        }
        let mean = GanReport::mean(&reports);
        log::debug!("gan epoch {epoch}: dis {:.4} gen {:.4}", mean.dis_loss, mean.gen_loss);
        history.push(mean);
        on_epoch(epoch, t)?;
    }
    Ok(history)
}

/// A generated clip with the generator epoch it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct FakeSample {
    pub sample: Sample,
    pub epoch: usize,
}

impl FakeSample {
    /// Feature-cache form, with provenance metadata.
    pub fn to_feature_map(&self, template: &FeatureMap) -> Result<FeatureMap> {
        let mut fm = FeatureMap::from_chw(&self.sample.x, template)?;
        fm.meta.retain(|(k, _)| !matches!(k.as_str(), "provenance" | "epoch" | "scene"));
        fm.set_meta("provenance", "generated");
        fm.set_meta("epoch", self.epoch.to_string());
        fm.set_meta("scene", self.sample.label.to_string());
        Ok(fm)
    }
}

/// `count_per_class` fakes for every label in `scene_labels`, drawn from the
/// generator in eval mode. Clip ids encode the epoch, scene and index. The
/// city field is 0; callers assign cities when mixing fakes into a split.
pub fn sample_fakes(
    t: &GanTriple,
    scene_labels: &[usize],
    count_per_class: usize,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<Vec<FakeSample>> {
    if t.steps == 0 {
        return Err(Error::Contract("sampling from an untrained generator".into()));
    }
    let k = t.cfg.n_classes;
    if let Some(&bad) = scene_labels.iter().find(|&&y| y >= k) {
        return Err(Error::input(format!("scene label {bad} outside {k} classes")));
    }
    let per_clip = match t.cfg.layout {
        super::nets::GanLayout::Image => 1,
        super::nets::GanLayout::Frames => t.cfg.frames,
    };
    let mut out = Vec::with_capacity(scene_labels.len() * count_per_class);
    for &scene in scene_labels {
        for i in 0..count_per_class {
            let tape = Tape::new();
            let z = tape.constant(noise(per_clip, t.cfg.noise_dim, rng));
            let (u, _) = t.generate(&tape, &vec![scene; per_clip], &z, Mode::Eval, rng)?;
            let clip = t.units_to_clips(&u.value())?;
            let [c, l, n] = [t.cfg.channels, t.cfg.frames, t.cfg.filters];
            let x = clip.reshape(&[c, l, n])?;
            if !x.is_finite() {
                return Err(Error::Training(format!("generator produced non-finite values for scene {scene}")));
            }
            out.push(FakeSample {
                sample: Sample { id: format!("gen-e{epoch}-s{scene}-{i}"), x, label: scene, city: 0 },
                epoch,
            });
        }
    }
    Ok(out)
}
