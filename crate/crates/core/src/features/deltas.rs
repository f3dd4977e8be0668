use super::map::FeatureMap;
use crate::error::{Error, Result};

/// Half-width of the regression window (5 taps).
pub const DELTA_HALF_WIDTH: usize = 2;

/// Regression-window time derivative along the frame axis, edges replicated.
///
/// `d_t = Σ_k k·(x_{t+k} − x_{t−k}) / (2 Σ_k k²)`. Order 2 applies it twice.
pub fn deltas(feat: &FeatureMap, order: usize) -> Result<FeatureMap> {
    let n = DELTA_HALF_WIDTH;
    if feat.frames < 2 * n + 1 {
        return Err(Error::input(format!(
            "deltas need at least {} frames, got {}",
            2 * n + 1,
            feat.frames
        )));
    }
    if !(1..=2).contains(&order) {
        return Err(Error::config(format!("delta order {order} not in 1..=2")));
    }
    let mut cur = feat.clone();
    for _ in 0..order {
        cur = delta_once(&cur);
    }
    Ok(cur)
}

fn delta_once(feat: &FeatureMap) -> FeatureMap {
    let (l, row) = (feat.frames, feat.channels * feat.filters);
    let n = DELTA_HALF_WIDTH as isize;
    let denom: f64 = 2.0 * (1..=n).map(|k| (k * k) as f64).sum::<f64>();
    let clampt = |t: isize| t.clamp(0, l as isize - 1) as usize;
    let mut out = vec![0f32; feat.data.len()];
    for t in 0..l as isize {
        for i in 0..row {
            let mut acc = 0.0f64;
            for k in 1..=n {
                let a = feat.data[clampt(t + k) * row + i] as f64;
                let b = feat.data[clampt(t - k) * row + i] as f64;
                acc += k as f64 * (a - b);
            }
            out[t as usize * row + i] = (acc / denom) as f32;
        }
    }
    FeatureMap { data: out, ..feat.clone() }
}

/// Stacks static, Δ and ΔΔ on the channel axis: `c → 3c`.
pub fn stack_deltas(feat: &FeatureMap) -> Result<FeatureMap> {
    let d1 = deltas(feat, 1)?;
    let d2 = delta_once(&d1);
    let (l, c, n) = (feat.frames, feat.channels, feat.filters);
    let mut data = Vec::with_capacity(3 * feat.data.len());
    for t in 0..l {
        for part in [feat, &d1, &d2] {
            data.extend_from_slice(&part.data[t * c * n..(t + 1) * c * n]);
        }
    }
    Ok(FeatureMap {
        channels: 3 * c,
        data,
        ..feat.clone()
    })
}
