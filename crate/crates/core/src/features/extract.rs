use super::audio::Audio;
use super::channel::{channel_transform, ChannelMode};
use super::deltas::stack_deltas;
use super::filterbank::{mel_filterbank, wavelet_filterbank, FilterBank, WaveletLayout};
use super::map::{FeatureKind, FeatureMap};
use super::stft::{next_pow2, stft};
use crate::error::{Error, Result};

/// Energy floor applied before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FbankConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub channel_mode: ChannelMode,
    /// Stack Δ and ΔΔ onto the channel axis.
    pub deltas: bool,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            sample_rate: 48_000,
            win_ms: 40.0,
            hop_ms: 20.0,
            n_filters: 128,
            channel_mode: ChannelMode::LeftRight,
            deltas: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalogramConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub channel_mode: ChannelMode,
    pub layout: WaveletLayout,
}

impl Default for ScalogramConfig {
    fn default() -> Self {
        ScalogramConfig {
            sample_rate: 48_000,
            win_ms: 555.0,
            // 10 s at 175 ms gives the 58 frames of the reference shape
            hop_ms: 175.0,
            n_filters: 290,
            channel_mode: ChannelMode::LeftRight,
            layout: WaveletLayout::default(),
        }
    }
}

fn samples(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0).round() as usize
}

fn prepare(clip: &Audio, rate: u32, mode: ChannelMode) -> Result<Vec<Vec<f32>>> {
    clip.validate()?;
    if clip.duration_secs() < 1.0 {
        return Err(Error::input(format!("clip lasts {:.3} s, need at least 1 s", clip.duration_secs())));
    }
    let audio = if clip.sample_rate == rate {
        std::borrow::Cow::Borrowed(clip)
    } else {
        std::borrow::Cow::Owned(clip.resample(rate))
    };
    channel_transform(&audio.channels, mode)
}

/// Log filter energies of a power spectrogram, one plane per channel.
fn log_filtered(channels: &[Vec<f32>], win: usize, hop: usize, fb: &FilterBank) -> Result<(usize, Vec<f32>)> {
    let c = channels.len();
    let n = fb.n_filters();
    let mut frames = 0;
    let mut planes = Vec::with_capacity(c);
    for ch in channels {
        let spec = stft(ch, win, hop)?;
        frames = spec.frames;
        let mut plane = vec![0f32; spec.frames * n];
        let mut power = vec![0f64; spec.bins];
        let mut e = vec![0f64; n];
        for t in 0..spec.frames {
            for (p, m) in power.iter_mut().zip(spec.frame(t)) {
                *p = m * m;
            }
            fb.apply(&power, &mut e);
            for (o, v) in plane[t * n..(t + 1) * n].iter_mut().zip(&e) {
                *o = v.max(LOG_FLOOR).ln() as f32;
            }
        }
        planes.push(plane);
    }
    let mut data = vec![0f32; frames * c * n];
    for (ci, plane) in planes.iter().enumerate() {
        for t in 0..frames {
            data[(t * c + ci) * n..(t * c + ci + 1) * n].copy_from_slice(&plane[t * n..(t + 1) * n]);
        }
    }
    Ok((frames, data))
}

/// Per-channel log Mel energies, optionally with Δ/ΔΔ stacking.
pub fn extract_fbank(clip: &Audio, cfg: &FbankConfig) -> Result<FeatureMap> {
    let ch = prepare(clip, cfg.sample_rate, cfg.channel_mode)?;
    let (win, hop) = (samples(cfg.win_ms, cfg.sample_rate), samples(cfg.hop_ms, cfg.sample_rate));
    let fb = mel_filterbank(cfg.n_filters, next_pow2(win), cfg.sample_rate)?;
    fbank_with(&ch, win, hop, &fb, cfg)
}

pub(crate) fn fbank_with(ch: &[Vec<f32>], win: usize, hop: usize, fb: &FilterBank, cfg: &FbankConfig) -> Result<FeatureMap> {
    let (frames, data) = log_filtered(ch, win, hop, fb)?;
    let mut fm = FeatureMap::new(frames, ch.len(), fb.n_filters(), data, FeatureKind::Fbank)?;
    fm.channel_mode = cfg.channel_mode;
    fm.win_ms = cfg.win_ms;
    fm.hop_ms = cfg.hop_ms;
    if cfg.deltas {
        fm = stack_deltas(&fm)?;
    }
    Ok(fm)
}

/// Wavelet filterbank over a long-window spectrogram, log compressed.
pub fn extract_scalogram(clip: &Audio, cfg: &ScalogramConfig) -> Result<FeatureMap> {
    let ch = prepare(clip, cfg.sample_rate, cfg.channel_mode)?;
    let (win, hop) = (samples(cfg.win_ms, cfg.sample_rate), samples(cfg.hop_ms, cfg.sample_rate));
    let fb = wavelet_filterbank(cfg.n_filters, next_pow2(win), cfg.sample_rate, &cfg.layout)?;
    let (frames, data) = log_filtered(&ch, win, hop, &fb)?;
    let mut fm = FeatureMap::new(frames, ch.len(), fb.n_filters(), data, FeatureKind::Scalogram)?;
    fm.channel_mode = cfg.channel_mode;
    fm.win_ms = cfg.win_ms;
    fm.hop_ms = cfg.hop_ms;
    Ok(fm)
}
