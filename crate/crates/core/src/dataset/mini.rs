//! Synthetic 10-scene × 4-city stand-in for the DCASE development set.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{parse_manifest, DatasetManifest, SCENES};
use super::wav::write_wav;
use crate::error::{Error, Result};
use crate::features::Audio;

pub const MINI_CITIES: [&str; 4] = ["barcelona", "helsinki", "lisbon", "london"];

#[derive(Clone, Debug)]
pub struct MiniConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub clips_per_city: usize,
    pub n_cities: usize,
    pub seed: u64,
}

impl Default for MiniConfig {
    fn default() -> Self {
        MiniConfig {
            sample_rate: 48_000,
            duration_s: 10.0,
            clips_per_city: 2,
            n_cities: 4,
            seed: 0,
        }
    }
}

/// RBJ band-pass biquad (constant peak gain).
struct BandPass {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl BandPass {
    fn new(fc: f64, q: f64, rate: f64) -> Self {
        let w = 2.0 * PI * fc / rate;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        BandPass {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w.cos() / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        // transposed direct form II
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// One clip of scene `scene` recorded in city `city`.
///
/// A scene is a band of filtered noise plus a two-tone mixture with its
/// own amplitude-modulation rate; cities add a broadband floor and a
/// stereo imbalance; clips jitter levels and frequencies.
pub fn synth_clip(scene: usize, city: usize, idx: usize, cfg: &MiniConfig) -> Audio {
    let seed = cfg.seed ^ ((scene as u64) << 40 | (city as u64) << 20 | idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = cfg.sample_rate as f64;
    let n = (cfg.duration_s * rate).round() as usize;
    let s = scene as f64;
    let nyq_guard = 0.4 * rate;
    let band_fc = (350.0 * 1.42f64.powf(s)).min(nyq_guard);
    let tones = [
        (210.0 * 1.37f64.powf(s) * rng.gen_range(0.98..1.02)).min(nyq_guard),
        (1330.0 * 1.23f64.powf(s) * rng.gen_range(0.98..1.02)).min(nyq_guard),
    ];
    let am_rate = 0.5 + 0.6 * s;
    let band_gain = 10f64.powf(rng.gen_range(-0.15..0.15));
    let tone_gain = 0.25 * 10f64.powf(rng.gen_range(-0.15..0.15));
    let floor_gain = 0.05 + 0.03 * city as f64;
    let balance = 0.8 + 0.1 * city as f64;
    let phase: [f64; 3] = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
    let mut bp = [BandPass::new(band_fc, 4.0, rate), BandPass::new(band_fc, 4.0, rate)];
    let mut ch = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let shared_w = 0.7;
    for i in 0..n {
        let t = i as f64 / rate;
        let am = 0.6 + 0.4 * (2.0 * PI * am_rate * t + phase[2]).sin();
        let tone = tone_gain * am * ((2.0 * PI * tones[0] * t + phase[0]).sin() + 0.6 * (2.0 * PI * tones[1] * t + phase[1]).sin());
        let shared: f64 = rng.sample(StandardNormal);
        for (c, out) in ch.iter_mut().enumerate() {
            let own: f64 = rng.sample(StandardNormal);
            let excite = shared_w * shared + (1.0 - shared_w) * own;
            let band = band_gain * bp[c].step(excite);
            let flo: f64 = floor_gain * rng.sample::<f64, _>(StandardNormal);
            let gain = if c == 0 { 1.0 } else { balance };
            out.push(0.2 * gain * (band + tone + flo));
        }
    }
    let chans = ch
        .into_iter()
        .map(|c| c.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect())
        .collect();
    Audio::new(cfg.sample_rate, chans).expect("equal channel lengths")
}

/// The held-out clips: index 1 of two cities that rotate with the scene.
pub fn is_eval_clip(scene: usize, city: usize, idx: usize, n_cities: usize) -> bool {
    idx == 1 && (city == scene % n_cities || city == (scene + 1) % n_cities)
}

/// Writes `audio/*.wav` and `manifest.tsv` under `out_dir`.
pub fn make_mini_dataset(out_dir: &Path, cfg: &MiniConfig) -> Result<DatasetManifest> {
    if cfg.n_cities < 2 || cfg.n_cities > MINI_CITIES.len() || cfg.clips_per_city < 2 {
        return Err(Error::config("mini dataset needs 2..=4 cities and at least 2 clips per city"));
    }
    let io = |e: std::io::Error| Error::Ingestion(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir.join("audio")).map_err(io)?;
    let mut tsv = String::from("filename\tscene_label\tfold\n");
    for (si, scene) in SCENES.iter().enumerate() {
        for (ci, city) in MINI_CITIES[..cfg.n_cities].iter().enumerate() {
            for idx in 0..cfg.clips_per_city {
                let rel = format!("audio/{scene}-{city}-{idx}-a.wav");
                write_wav(&out_dir.join(&rel), &synth_clip(si, ci, idx, cfg))?;
                let fold = if is_eval_clip(si, ci, idx, cfg.n_cities) { "evaluate" } else { "train" };
                tsv.push_str(&format!("{rel}\t{scene}\t{fold}\n"));
            }
        }
    }
    let manifest = out_dir.join("manifest.tsv");
    fs::write(&manifest, tsv).map_err(io)?;
    parse_manifest(&manifest)
}
