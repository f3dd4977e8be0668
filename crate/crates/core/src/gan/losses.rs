//! The adversarial, auxiliary-classifier and variational loss terms.
//!
//! Sign convention: every returned target is minimised by its owner.
//!
//! | target | value |
//! |---|---|
//! | discriminator | `−L_rf + γ·L_scene` |
//! | generator | `L_gen + γ·L_scene (+ γ₃·L_reco)` |
//! | encoder | `γ₂·L_KL + γ₃·L_reco` |
//!
//! `L_rf = Σ log D(x) + log(1 − D(G(y, z)))` is what the discriminator
//! maximises. The generator does not minimise `L_rf` itself but the
//! non-saturating `L_gen = −Σ log D(G(y, z))`, which has the same fixed
//! point and does not vanish while the discriminator wins. `γ` is `gamma`
//! for the ACGAN and `gamma1` for the CVAE/ACGAN composite.

use crate::error::{Error, Result};
use crate::tensor::ops::{self, Reduction};
use crate::tensor::{Float, Tensor, Var};

/// Scores closer than this to 0 or 1 are clamped before the logarithm.
pub const SCORE_EPS: Float = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { gamma: 1.0, gamma1: 1.0, gamma2: 1.0, gamma3: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("loss weight {name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// A log-likelihood term with the number of scores that hit the clamp.
#[derive(Clone, Debug)]
pub struct Clamped {
    pub value: Var,
    pub clamped: usize,
}

fn check_scores(v: &Tensor, what: &str) -> Result<usize> {
    if let Some(bad) = v.data().iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::input(format!("{what} score {bad} outside [0, 1]")));
    }
    Ok(v.data().iter().filter(|&&s| !(SCORE_EPS..=1.0 - SCORE_EPS).contains(&s)).count())
}

fn log_clamped(s: &Var) -> Var {
    ops::log(&ops::clamp(s, SCORE_EPS, 1.0 - SCORE_EPS))
}

fn one_minus(s: &Var) -> Var {
    ops::add_scalar(&ops::scale(s, -1.0), 1.0)
}

/// `Σ log D(x) + Σ log(1 − D(G(y, z)))` over real and fake scores.
pub fn loss_real_fake(dis_real: &Var, dis_fake: &Var) -> Result<Clamped> {
    let clamped = check_scores(&dis_real.value(), "real")? + check_scores(&dis_fake.value(), "fake")?;
    let real = ops::sum(&log_clamped(dis_real));
    let fake = ops::sum(&ops::log(&ops::clamp(&one_minus(dis_fake), SCORE_EPS, 1.0 - SCORE_EPS)));
    Ok(Clamped { value: ops::add(&real, &fake)?, clamped })
}

/// Non-saturating generator term `−Σ log D(G(y, z))`.
pub fn loss_gen_fake(dis_fake: &Var) -> Result<Clamped> {
    let clamped = check_scores(&dis_fake.value(), "fake")?;
    Ok(Clamped { value: ops::scale(&ops::sum(&log_clamped(dis_fake)), -1.0), clamped })
}

/// Auxiliary cross-entropy summed over the real samples and the fakes
/// generated for the same labels.
pub fn loss_scene(logits_real: &Var, logits_fake: &Var, labels: &[usize]) -> Result<Var> {
    let (_, real) = ops::softmax_xent(logits_real, labels, Reduction::Sum)?;
    let (_, fake) = ops::softmax_xent(logits_fake, labels, Reduction::Sum)?;
    ops::add(&real, &fake)
}

/// Closed-form `Σ KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − log σ² − 1)`.
pub fn loss_kl(mu: &Var, logvar: &Var) -> Result<Var> {
    if mu.shape() != logvar.shape() {
        return Err(Error::dim(format!("loss_kl: mu {:?} vs logvar {:?}", mu.shape(), logvar.shape())));
    }
    let t = ops::add(&ops::square(mu), &ops::exp(logvar))?;
    let t = ops::add_scalar(&ops::sub(&t, logvar)?, -1.0);
    Ok(ops::scale(&ops::sum(&t), 0.5))
}

/// `Σ ‖Dis_l(x) − Dis_l(x̃)‖²`.
pub fn loss_reco(dis_l_real: &Var, dis_l_reco: &Var) -> Result<Var> {
    if dis_l_real.shape() != dis_l_reco.shape() {
        return Err(Error::dim(format!(
            "loss_reco: features {:?} vs {:?}",
            dis_l_real.shape(),
            dis_l_reco.shape()
        )));
    }
    Ok(ops::sum(&ops::square(&ops::sub(dis_l_real, dis_l_reco)?)))
}

/// Independently computed loss components of one step.
#[derive(Clone, Debug)]
pub struct LossParts {
    pub real_fake: Var,
    pub gen_fake: Var,
    pub scene: Var,
    pub kl: Option<Var>,
    pub reco: Option<Var>,
}

fn weighted(a: &Var, b: &Var, w: f64) -> Result<Var> {
    ops::add(a, &ops::scale(b, w as Float))
}

/// `(gen_loss, dis_loss)` of the ACGAN objective.
pub fn loss_acgan(parts: &LossParts, w: &LossWeights) -> Result<(Var, Var)> {
    acgan_with(parts, w.gamma)
}

fn acgan_with(parts: &LossParts, gamma: f64) -> Result<(Var, Var)> {
    let gen = weighted(&parts.gen_fake, &parts.scene, gamma)?;
    let dis = weighted(&ops::scale(&parts.real_fake, -1.0), &parts.scene, gamma)?;
    Ok((gen, dis))
}

/// `(enc_loss, gen_loss, dis_loss)` of the CVAE/ACGAN objective.
pub fn loss_cvae_acgan(parts: &LossParts, w: &LossWeights) -> Result<(Var, Var, Var)> {
    let (kl, reco) = match (&parts.kl, &parts.reco) {
        (Some(k), Some(r)) => (k, r),
        _ => return Err(Error::Contract("CVAE/ACGAN objective needs KL and reconstruction terms".into())),
    };
    let (gen, dis) = acgan_with(parts, w.gamma1)?;
    let gen = weighted(&gen, reco, w.gamma3)?;
    let enc = weighted(&ops::scale(kl, w.gamma2 as Float), reco, w.gamma3)?;
    Ok((enc, gen, dis))
}

/// `z = μ + exp(½·logvar)·ε` with `ε` drawn from `rng`.
pub fn reparameterize(mu: &Var, logvar: &Var, rng: &mut impl rand::Rng) -> Result<Var> {
    if mu.shape() != logvar.shape() {
        return Err(Error::dim("reparameterize: mu and logvar shapes differ"));
    }
    let eps = Tensor::from_fn(&mu.shape(), |_| rng.sample::<f64, _>(rand_distr::StandardNormal) as Float);
    let sigma = ops::exp(&ops::scale(logvar, 0.5));
    ops::add(mu, &ops::mul(&sigma, &mu.tape().constant(eps))?)
}
