use crate::error::{Error, Result};

/// Multi-channel PCM audio as floats in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    /// One vector per channel, all of equal length.
    pub channels: Vec<Vec<f32>>,
}

impl Audio {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f32>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Ingestion("audio has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Ingestion("channels differ in length".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Ingestion("sample rate 0".into()));
        }
        Ok(Audio { sample_rate, channels })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Non-finite samples mark a corrupt decode.
    pub(crate) fn validate(&self) -> Result<()> {
        for (i, c) in self.channels.iter().enumerate() {
            if let Some(pos) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingestion(format!("channel {i} sample {pos} is not finite")));
            }
        }
        Ok(())
    }

    /// Linear-interpolation resampling.
    pub fn resample(&self, rate: u32) -> Audio {
        if rate == self.sample_rate || self.is_empty() {
            return Audio { sample_rate: rate, channels: self.channels.clone() };
        }
        let n_in = self.len();
        let n_out = ((n_in as u64 * rate as u64) / self.sample_rate as u64).max(1) as usize;
        let ratio = self.sample_rate as f64 / rate as f64;
        let channels = self
            .channels
            .iter()
            .map(|c| {
                (0..n_out)
                    .map(|i| {
                        let t = i as f64 * ratio;
                        let j = t.floor() as usize;
                        let frac = t - j as f64;
                        let a = c[j.min(n_in - 1)] as f64;
                        let b = c[(j + 1).min(n_in - 1)] as f64;
                        (a + (b - a) * frac) as f32
                    })
                    .collect()
            })
            .collect();
        Audio { sample_rate: rate, channels }
    }
}
