use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Magnitude spectrogram, `frames × bins` in row-major order.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub nfft: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Frames produced by centre-padded framing: one frame per hop start.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Reflect an out-of-range index back into `0..len` (no edge repeat).
fn reflect(mut i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    i = i.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}

/// Short-time Fourier magnitude with a Hamming window.
///
/// Frame `t` is centred on sample `t·hop`; the signal is reflect-padded by
/// half a window on each side. The window is zero-padded to the next power
/// of two.
pub fn stft(signal: &[f32], win: usize, hop: usize) -> Result<Spectrogram> {
    if signal.is_empty() {
        return Err(Error::input("stft of an empty signal"));
    }
    if win == 0 || hop == 0 || win < hop {
        return Err(Error::config(format!("stft needs win ≥ hop ≥ 1, got win={win} hop={hop}")));
    }
    let nfft = next_pow2(win);
    let bins = nfft / 2 + 1;
    let frames = frame_count(signal.len(), hop);
    let window = hamming(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    let half = (win / 2) as isize;
    for t in 0..frames {
        let start = (t * hop) as isize - half;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = if k < win {
                let s = signal[reflect(start + k as isize, signal.len())] as f64;
                Complex::new(s * window[k], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram { frames, bins, nfft, data })
}
