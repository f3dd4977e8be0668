use crate::error::{Error, Result};

/// Stereo channel coding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    LeftRight,
    /// `((L+R)/2, (L−R)/2)`.
    AveDiff,
}

impl ChannelMode {
    pub fn name(self) -> &'static str {
        match self {
            ChannelMode::LeftRight => "left-right",
            ChannelMode::AveDiff => "ave-diff",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left-right" | "lr" => Ok(ChannelMode::LeftRight),
            "ave-diff" | "ad" => Ok(ChannelMode::AveDiff),
            _ => Err(Error::config(format!("unknown channel mode {s:?}"))),
        }
    }
}

/// Recodes a stereo pair. Left-right is the identity.
pub fn channel_transform(channels: &[Vec<f32>], mode: ChannelMode) -> Result<Vec<Vec<f32>>> {
    match mode {
        ChannelMode::LeftRight => Ok(channels.to_vec()),
        ChannelMode::AveDiff => {
            let [l, r] = channels else {
                return Err(Error::input(format!("ave-diff needs 2 channels, got {}", channels.len())));
            };
            let ave = l.iter().zip(r).map(|(a, b)| (a + b) * 0.5).collect();
            let diff = l.iter().zip(r).map(|(a, b)| (a - b) * 0.5).collect();
            Ok(vec![ave, diff])
        }
    }
}

/// Recovers `(L, R)` from the coded pair.
pub fn inverse_channel_transform(channels: &[Vec<f32>], mode: ChannelMode) -> Result<Vec<Vec<f32>>> {
    match mode {
        ChannelMode::LeftRight => Ok(channels.to_vec()),
        ChannelMode::AveDiff => {
            let [a, d] = channels else {
                return Err(Error::input(format!("ave-diff needs 2 channels, got {}", channels.len())));
            };
            Ok(vec![
                a.iter().zip(d).map(|(x, y)| x + y).collect(),
                a.iter().zip(d).map(|(x, y)| x - y).collect(),
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ave_diff_values() {
        let out = channel_transform(&[vec![2.0], vec![0.0]], ChannelMode::AveDiff).unwrap();
        assert_eq!(out, vec![vec![1.0], vec![1.0]]);
        let same = channel_transform(&[vec![0.3, -0.1], vec![0.3, -0.1]], ChannelMode::AveDiff).unwrap();
        assert!(same[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mono_rejected() {
        assert!(matches!(channel_transform(&[vec![1.0]], ChannelMode::AveDiff), Err(Error::Input(_))));
    }

    #[test]
    fn pcm_round_trip_is_exact() {
        let l: Vec<f32> = (-300..300).map(|i| (i * 97 % 32768) as f32 / 32768.0).collect();
        let r: Vec<f32> = (-300..300).map(|i| (i * 31 % 32768) as f32 / 32768.0).collect();
        let st = vec![l, r];
        let coded = channel_transform(&st, ChannelMode::AveDiff).unwrap();
        assert_eq!(inverse_channel_transform(&coded, ChannelMode::AveDiff).unwrap(), st);
    }
}
