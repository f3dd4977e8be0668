use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Mel,
    Wavelet,
}

/// Sparse nonnegative `n_filters × n_bins` weight matrix.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub kind: FilterKind,
    pub n_bins: usize,
    /// Centre frequency of every filter in Hz, ascending.
    pub centers: Vec<f64>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl FilterBank {
    fn from_dense_fn(kind: FilterKind, n_bins: usize, bin_hz: f64, centers: Vec<f64>, w: impl Fn(usize, f64) -> f64) -> Self {
        let rows = (0..centers.len())
            .map(|m| {
                let dense: Vec<f64> = (0..n_bins).map(|k| w(m, k as f64 * bin_hz).max(0.0)).collect();
                let first = dense.iter().position(|&v| v > 0.0);
                match first {
                    Some(s) => {
                        let e = dense.iter().rposition(|&v| v > 0.0).unwrap();
                        (s, dense[s..=e].to_vec())
                    }
                    // narrower than one bin: fall back to the nearest bin
                    None => (((centers[m] / bin_hz).round() as usize).min(n_bins - 1), vec![1.0]),
                }
            })
            .collect();
        FilterBank { kind, n_bins, centers, rows }
    }

    pub fn n_filters(&self) -> usize {
        self.rows.len()
    }

    /// Dense copy of row `m`.
    pub fn row(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        let (s, w) = &self.rows[m];
        out[*s..*s + w.len()].copy_from_slice(w);
        out
    }

    /// Support `[start, end)` of row `m`.
    pub fn support(&self, m: usize) -> (usize, usize) {
        let (s, w) = &self.rows[m];
        (*s, s + w.len())
    }

    /// Filter energies of one power spectrum frame.
    pub fn apply(&self, frame: &[f64], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.n_bins);
        for (o, (s, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&frame[*s..]).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the Mel scale over `0..Nyquist`, peak 1.
pub fn mel_filterbank(n_filters: usize, nfft: usize, sample_rate: u32) -> Result<FilterBank> {
    let n_bins = nfft / 2 + 1;
    if n_filters < 2 {
        return Err(Error::config("mel filterbank needs at least 2 filters"));
    }
    if n_filters > n_bins {
        return Err(Error::config(format!("{n_filters} mel filters exceed {n_bins} frequency bins")));
    }
    let nyq = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyq);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / nfft as f64;
    let centers = edges[1..=n_filters].to_vec();
    Ok(FilterBank::from_dense_fn(FilterKind::Mel, n_bins, bin_hz, centers, |m, f| {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        if f > lo && f < c {
            (f - lo) / (c - lo)
        } else if f >= c && f < hi {
            (hi - f) / (hi - c)
        } else {
            0.0
        }
    }))
}

/// Centre-frequency layout of the wavelet filterbank.
#[derive(Clone, Debug)]
pub struct WaveletLayout {
    /// Geometric resolution above the crossover.
    pub bins_per_octave: f64,
    /// Highest centre as a fraction of Nyquist.
    pub fmax_ratio: f64,
    /// Share of filters placed linearly below the crossover.
    pub linear_share: f64,
    /// Gaussian σ as a multiple of the local centre spacing.
    pub bandwidth: f64,
}

impl Default for WaveletLayout {
    fn default() -> Self {
        WaveletLayout {
            bins_per_octave: 32.0,
            fmax_ratio: 0.9,
            linear_share: 45.0 / 290.0,
            bandwidth: 1.0,
        }
    }
}

impl WaveletLayout {
    /// `(centres, spacings, number of linear filters)`.
    pub fn centers(&self, n_filters: usize, sample_rate: u32) -> (Vec<f64>, Vec<f64>, usize) {
        let n_lin = ((n_filters as f64 * self.linear_share).round() as usize).clamp(1, n_filters - 1);
        let n_geo = n_filters - n_lin;
        let r = 2f64.powf(-1.0 / self.bins_per_octave);
        let fmax = self.fmax_ratio * sample_rate as f64 / 2.0;
        let crossover = fmax * r.powi(n_geo as i32 - 1);
        let mut step = crossover * (1.0 - r);
        if crossover - n_lin as f64 * step <= 0.0 {
            step = crossover / (n_lin + 1) as f64;
        }
        let mut centers = Vec::with_capacity(n_filters);
        let mut spacing = Vec::with_capacity(n_filters);
        for j in (1..=n_lin).rev() {
            centers.push(crossover - j as f64 * step);
            spacing.push(step);
        }
        for k in (0..n_geo).rev() {
            let f = fmax * r.powi(k as i32);
            centers.push(f);
            spacing.push(f * (1.0 - r));
        }
        (centers, spacing, n_lin)
    }
}

/// Gaussian band-pass filters, linearly spaced at low frequency and
/// geometrically (constant Q) above a crossover.
pub fn wavelet_filterbank(n_filters: usize, nfft: usize, sample_rate: u32, layout: &WaveletLayout) -> Result<FilterBank> {
    if n_filters < 2 {
        return Err(Error::config("wavelet filterbank needs at least 2 filters"));
    }
    let (centers, spacing, _) = layout.centers(n_filters, sample_rate);
    let bin_hz = sample_rate as f64 / nfft as f64;
    let sigma: Vec<f64> = spacing.iter().map(|s| s * layout.bandwidth).collect();
    let c = centers.clone();
    Ok(FilterBank::from_dense_fn(FilterKind::Wavelet, nfft / 2 + 1, bin_hz, centers, move |m, f| {
        let d = (f - c[m]) / sigma[m];
        if d.abs() > 4.0 {
            0.0
        } else {
            (-0.5 * d * d).exp()
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_rows_and_order() {
        let fb = mel_filterbank(128, 2048, 48_000).unwrap();
        assert_eq!(fb.n_filters(), 128);
        assert!(fb.centers.windows(2).all(|w| w[0] < w[1]));
        assert!(*fb.centers.last().unwrap() <= 24_000.0);
        for m in 0..128 {
            let row = fb.row(m);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(row.iter().sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn mel_union_covers_interior_bins() {
        let fb = mel_filterbank(40, 512, 16_000).unwrap();
        let mut covered = vec![false; fb.n_bins];
        for m in 0..fb.n_filters() {
            for (k, v) in fb.row(m).into_iter().enumerate() {
                covered[k] |= v > 0.0;
            }
        }
        assert!(covered[1..fb.n_bins - 1].iter().all(|&c| c));
    }

    #[test]
    fn too_many_mel_filters() {
        assert!(matches!(mel_filterbank(200, 256, 16_000), Err(Error::Config(_))));
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 1000.0, 24_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9 * f.max(1.0));
        }
    }

    #[test]
    fn wavelet_spacing_linear_then_geometric() {
        let layout = WaveletLayout::default();
        let (c, _, n_lin) = layout.centers(290, 48_000);
        assert_eq!(c.len(), 290);
        assert_eq!(n_lin, 45);
        let d0 = c[1] - c[0];
        for w in c[..=n_lin].windows(2) {
            assert!((w[1] - w[0] - d0).abs() < 1e-9);
        }
        let r0 = c[n_lin + 1] / c[n_lin];
        for w in c[n_lin..].windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-9);
        }
        assert!(c[0] > 0.0 && *c.last().unwrap() <= 24_000.0);
    }

    #[test]
    fn wavelet_rows_positive() {
        let fb = wavelet_filterbank(290, 32_768, 48_000, &WaveletLayout::default()).unwrap();
        assert_eq!(fb.n_filters(), 290);
        for m in 0..290 {
            let (s, e) = fb.support(m);
            assert!(e > s);
            assert!(fb.row(m).iter().sum::<f64>() > 0.0);
        }
    }
}
