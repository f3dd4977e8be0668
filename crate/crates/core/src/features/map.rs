use super::channel::ChannelMode;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Fbank,
    Scalogram,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Fbank => "fbank",
            FeatureKind::Scalogram => "scalogram",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fbank" => Ok(FeatureKind::Fbank),
            "scalogram" => Ok(FeatureKind::Scalogram),
            _ => Err(Error::config(format!("unknown feature kind {s:?}"))),
        }
    }
}

/// `frames × channels × filters` feature array with its framing metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub frames: usize,
    pub channels: usize,
    pub filters: usize,
    pub data: Vec<f32>,
    pub kind: FeatureKind,
    pub channel_mode: ChannelMode,
    pub win_ms: f64,
    pub hop_ms: f64,
    /// Extra key=value pairs carried through the cache (provenance and so on).
    pub meta: Vec<(String, String)>,
}

impl FeatureMap {
    pub fn new(frames: usize, channels: usize, filters: usize, data: Vec<f32>, kind: FeatureKind) -> Result<Self> {
        if frames * channels * filters != data.len() {
            return Err(Error::dim(format!(
                "feature map {frames}×{channels}×{filters} needs {} values, got {}",
                frames * channels * filters,
                data.len()
            )));
        }
        Ok(FeatureMap {
            frames,
            channels,
            filters,
            data,
            kind,
            channel_mode: ChannelMode::LeftRight,
            win_ms: 0.0,
            hop_ms: 0.0,
            meta: Vec::new(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.channels, self.filters]
    }

    pub fn at(&self, t: usize, c: usize, f: usize) -> f32 {
        self.data[(t * self.channels + c) * self.filters + f]
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    /// One channel plane as `frames × filters`.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.frames * self.filters);
        for t in 0..self.frames {
            let s = (t * self.channels + c) * self.filters;
            out.extend_from_slice(&self.data[s..s + self.filters]);
        }
        out
    }

    /// `(channels, frames, filters)` layout, the image convention of the 2D models.
    pub fn to_chw(&self) -> Tensor {
        let (l, c, n) = (self.frames, self.channels, self.filters);
        let mut data = vec![0.0 as Float; l * c * n];
        for t in 0..l {
            for ch in 0..c {
                for f in 0..n {
                    data[(ch * l + t) * n + f] = self.at(t, ch, f) as Float;
                }
            }
        }
        Tensor::new(&[c, l, n], data).expect("shape matches")
    }

    /// Inverse of [`FeatureMap::to_chw`]; `template` supplies the metadata.
    pub fn from_chw(t: &Tensor, template: &FeatureMap) -> Result<FeatureMap> {
        let s = t.shape();
        if s != [template.channels, template.frames, template.filters] {
            return Err(Error::dim(format!("from_chw: shape {s:?} does not match template")));
        }
        let (l, c, n) = (template.frames, template.channels, template.filters);
        let mut data = vec![0f32; l * c * n];
        let src = t.data();
        for ch in 0..c {
            for ti in 0..l {
                for f in 0..n {
                    data[(ti * c + ch) * n + f] = src[(ch * l + ti) * n + f] as f32;
                }
            }
        }
        Ok(FeatureMap { data, ..template.clone() })
    }

    /// `(frames, channels, filters)` as stored.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.frames, self.channels, self.filters], self.data.iter().map(|&v| v as Float).collect())
            .expect("shape matches")
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chw_round_trip() {
        let fm = FeatureMap::new(3, 2, 4, (0..24).map(|v| v as f32).collect(), FeatureKind::Fbank).unwrap();
        let t = fm.to_chw();
        assert_eq!(t.shape(), &[2, 3, 4]);
        assert_eq!(t.data()[4] as f32, fm.at(1, 0, 0));
        assert_eq!(FeatureMap::from_chw(&t, &fm).unwrap(), fm);
    }

    #[test]
    fn shape_checked() {
        assert!(FeatureMap::new(2, 2, 2, vec![0.0; 7], FeatureKind::Fbank).is_err());
    }
}
