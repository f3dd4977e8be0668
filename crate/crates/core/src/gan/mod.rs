//! Conditional GAN (ACGAN) and CVAE/ACGAN feature-map generators.

mod losses;
mod nets;
mod train;

pub use losses::{
    loss_acgan, loss_cvae_acgan, loss_gen_fake, loss_kl, loss_real_fake, loss_reco, loss_scene, reparameterize,
    Clamped, LossParts, LossWeights, SCORE_EPS,
};
pub use nets::{DisOut, GanConfig, GanLayout, GanMode, GanTriple};
pub use train::{gan_train_step, noise, sample_fakes, train_gan, FakeSample, GanReport, GanTrainConfig};
