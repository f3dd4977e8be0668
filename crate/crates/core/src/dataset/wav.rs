use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::features::Audio;

fn ingest(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Ingestion(format!("{}: {e}", path.display()))
}

/// Reads 16/24-bit integer or 32-bit float PCM.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut r = WavReader::open(path).map_err(|e| ingest(path, e))?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    if nch == 0 {
        return Err(ingest(path, "no channels"));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f32;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ingest(path, e))?
        }
        (SampleFormat::Float, 32) => r
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ingest(path, e))?,
        (fmt, bits) => return Err(ingest(path, format!("unsupported PCM format {fmt:?}/{bits}-bit"))),
    };
    if interleaved.len() % nch != 0 {
        return Err(ingest(path, "sample count not a multiple of the channel count"));
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    let audio = Audio::new(spec.sample_rate, channels)?;
    audio.validate()?;
    Ok(audio)
}

/// Duration from the header alone.
pub fn wav_duration(path: &Path) -> Result<f64> {
    let r = WavReader::open(path).map_err(|e| ingest(path, e))?;
    Ok(r.duration() as f64 / r.spec().sample_rate as f64)
}

/// Writes 16-bit PCM, clipping to [-1, 1].
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = WavSpec {
        channels: audio.channels.len() as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| ingest(path, e))?;
    for i in 0..audio.len() {
        for c in &audio.channels {
            let v = (c[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(v).map_err(|e| ingest(path, e))?;
        }
    }
    w.finalize().map_err(|e| ingest(path, e))?;
    Ok(())
}
