use crate::error::{Error, Result};

/// Class probabilities for one clip from one classifier run.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub probs: Vec<f64>,
    pub classifier: String,
    pub seed: u64,
}

impl PredictionRecord {
    /// Arg-max, ties to the lowest class.
    pub fn label(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Clip distribution from frame distributions: the mean of frame
/// log-probabilities, renormalised (a normalised geometric mean).
pub fn segment_predict(frame_probs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let logp: Vec<Vec<f64>> = frame_probs
        .iter()
        .map(|p| p.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect())
        .collect();
    segment_log_probs(&logp)
}

pub(crate) fn segment_log_probs(logp: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = logp.first() else {
        return Err(Error::input("segment prediction over zero frames"));
    };
    let k = first.len();
    let mut mean = vec![0.0; k];
    for f in logp {
        if f.len() != k {
            return Err(Error::dim("frames disagree on class count"));
        }
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / logp.len() as f64;
        }
    }
    let mx = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = mean.iter().map(|v| (v - mx).exp()).sum();
    Ok(mean.iter().map(|v| (v - mx).exp() / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_and_single_frame() {
        let p = vec![0.2, 0.5, 0.3];
        let s = segment_predict(&[p.clone(), p.clone(), p.clone()]).unwrap();
        assert!(s.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
        let s = segment_predict(&[p.clone()]).unwrap();
        assert!(s.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn geometric_mean_two_frames() {
        let s = segment_predict(&[vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let (a, b) = ((0.9f64 * 0.5).sqrt(), (0.1f64 * 0.5).sqrt());
        assert!((s[0] - a / (a + b)).abs() < 1e-12);
        assert!((s[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(segment_predict(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.3]), 1);
    }
}
