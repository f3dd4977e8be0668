//! The classifier families and their variants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::instantiate;
use super::spec::{CityBranch, Family, InceptionKind, Layer, LayerSpec, NetworkSpec, RecurrentBranch};
use crate::error::{Error, Result};
use crate::tensor::ops::CellKind;
use crate::tensor::ParamStore;

fn cbr(label: &str, out: usize, kernel: usize, pad: usize, stride: usize) -> [Layer; 3] {
    [
        Layer::new(format!("{label}.conv"), LayerSpec::Conv { out, kernel, pad, stride }),
        Layer::new(format!("{label}.bn"), LayerSpec::BatchNorm),
        Layer::new(format!("{label}.relu"), LayerSpec::Relu),
    ]
}

/// FCNN (VGG-style, fully convolutional) configuration.
#[derive(Clone, Debug)]
pub struct FcnnConfig {
    pub c: usize,
    pub frames: usize,
    pub n: usize,
    /// Per-block widths as multiples of `c`.
    pub multipliers: [usize; 4],
    /// Padding of the two Conv4 layers.
    pub conv4_pad: usize,
    pub n_classes: usize,
}

impl FcnnConfig {
    /// Reference widths `14c, 28c, 56c, 128c`.
    pub fn paper(c: usize, frames: usize, n: usize) -> Self {
        FcnnConfig { c, frames, n, multipliers: [14, 28, 56, 128], conv4_pad: 0, n_classes: 10 }
    }

    /// Narrow widths and padded Conv4 for CPU-scale runs.
    pub fn desk(c: usize, frames: usize, n: usize) -> Self {
        FcnnConfig { c, frames, n, multipliers: [2, 4, 8, 8], conv4_pad: 1, n_classes: 10 }
    }
}

pub fn build_fcnn(cfg: &FcnnConfig) -> Result<NetworkSpec> {
    if cfg.c == 0 || cfg.n < 8 {
        return Err(Error::config(format!("FCNN needs c ≥ 1 and n ≥ 8, got c={} n={}", cfg.c, cfg.n)));
    }
    let w = cfg.multipliers.map(|m| m * cfg.c);
    let pool = |label: &str| Layer::new(label, LayerSpec::MaxPool { size: 2, pad: 0, stride: 2 });
    let drop = |label: String, p: f32| Layer::new(label, LayerSpec::Dropout { p });
    let mut t = Vec::new();
    t.extend(cbr("conv1.a", w[0], 5, 2, 2));
    t.extend(cbr("conv1.b", w[0], 3, 1, 1));
    t.push(pool("conv1.pool"));
    t.extend(cbr("conv2.a", w[1], 3, 1, 1));
    t.extend(cbr("conv2.b", w[1], 3, 1, 1));
    t.push(pool("conv2.pool"));
    for i in 0..4 {
        t.extend(cbr(&format!("conv3.{i}"), w[2], 3, 1, 1));
        if i < 3 {
            t.push(drop(format!("conv3.{i}.drop"), 0.3));
        }
    }
    t.push(pool("conv3.pool"));
    for i in 0..2 {
        t.extend(cbr(&format!("conv4.{i}"), w[3], 3, cfg.conv4_pad, 1));
        t.push(drop(format!("conv4.{i}.drop"), 0.5));
    }
    let mut head: Vec<Layer> = cbr("pool.conv", cfg.n_classes, 1, 0, 1).into();
    head.push(Layer::new("pool.gap", LayerSpec::GlobalAvgPool));
    let spec = NetworkSpec {
        name: "fcnn".into(),
        family: Family::Fcnn,
        input: [cfg.c, cfg.frames, cfg.n],
        trunk: t,
        concat_input: false,
        head,
        output: None,
        n_classes: cfg.n_classes,
        dct_head: false,
        city: None,
        recurrent: None,
    };
    spec.validate()?;
    Ok(spec)
}

/// Frame-wise 1D DCNN configuration.
#[derive(Clone, Debug)]
pub struct DcnnConfig {
    pub c: usize,
    /// Frames per clip (the DCT head and recurrent channel work across them).
    pub frames: usize,
    pub n: usize,
    pub multipliers: [usize; 4],
    /// Padding of the four convolutions.
    pub conv_pad: usize,
    pub pool_pads: [usize; 4],
    pub dropout: f32,
    pub fc: [usize; 3],
    pub n_classes: usize,
}

impl DcnnConfig {
    /// Widths `2c … 16c` and three 1024-unit FC blocks.
    pub fn paper(c: usize, frames: usize, n: usize) -> Self {
        DcnnConfig {
            c,
            frames,
            n,
            multipliers: [2, 4, 8, 16],
            conv_pad: 0,
            pool_pads: [1, 0, 0, 0],
            dropout: 0.3,
            fc: [1024; 3],
            n_classes: 10,
        }
    }

    /// Reference convolutions with narrow FC blocks.
    pub fn desk(c: usize, frames: usize, n: usize) -> Self {
        DcnnConfig { fc: [64; 3], ..DcnnConfig::paper(c, frames, n) }
    }
}

fn dcnn_blocks(cfg: &DcnnConfig, inception: Option<([InceptionKind; 2], bool)>) -> Vec<Layer> {
    let mut t = Vec::new();
    for i in 0..4 {
        let out = cfg.multipliers[i] * cfg.c;
        let label = format!("conv{}", i + 1);
        match inception {
            Some((kinds, temporal)) if i >= 2 => t.push(Layer::new(
                format!("{label}.inception"),
                LayerSpec::Inception { kind: kinds[i - 2], out, temporal },
            )),
            _ => t.extend(cbr(&label, out, 3, cfg.conv_pad, 1)),
        }
        t.push(Layer::new(format!("{label}.pool"), LayerSpec::MaxPool { size: 2, pad: cfg.pool_pads[i], stride: 2 }));
        if i % 2 == 1 {
            t.push(Layer::new(format!("{label}.drop"), LayerSpec::Dropout { p: cfg.dropout }));
        }
    }
    t
}

fn dcnn_spec(cfg: &DcnnConfig, name: &str, trunk: Vec<Layer>) -> Result<NetworkSpec> {
    if cfg.c == 0 || cfg.frames == 0 {
        return Err(Error::config("DCNN needs c ≥ 1 and at least one frame"));
    }
    let mut head = Vec::new();
    for (i, &u) in cfg.fc.iter().enumerate() {
        let label = format!("fc{}", i + 1);
        head.push(Layer::new(format!("{label}.linear"), LayerSpec::Linear { out: u }));
        head.push(Layer::new(format!("{label}.bn"), LayerSpec::BatchNorm));
        head.push(Layer::new(format!("{label}.relu"), LayerSpec::Relu));
        if i < 2 {
            head.push(Layer::new(format!("{label}.drop"), LayerSpec::Dropout { p: cfg.dropout }));
        }
    }
    let spec = NetworkSpec {
        name: name.into(),
        family: Family::Dcnn,
        input: [cfg.c, cfg.frames, cfg.n],
        trunk,
        concat_input: true,
        head,
        output: Some(cfg.n_classes),
        n_classes: cfg.n_classes,
        dct_head: false,
        city: None,
        recurrent: None,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_dcnn(cfg: &DcnnConfig) -> Result<NetworkSpec> {
    dcnn_spec(cfg, "dcnn", dcnn_blocks(cfg, None))
}

/// Adds the DCT temporal head on the frame scores.
pub fn with_dct_head(mut spec: NetworkSpec) -> Result<NetworkSpec> {
    spec.dct_head = true;
    spec.name.push_str("_dct");
    spec.validate()?;
    Ok(spec)
}

/// Adds a gradient-reversal city classifier on the trunk output.
pub fn attach_city_adversary(mut spec: NetworkSpec, n_cities: usize, hidden: usize, lambda: f32) -> Result<NetworkSpec> {
    if n_cities < 2 {
        return Err(Error::config(format!("city adversary needs ≥ 2 cities, got {n_cities}")));
    }
    spec.city = Some(CityBranch { n_cities, hidden, lambda });
    spec.name = match spec.name.strip_prefix("dcnn") {
        Some(rest) => format!("city_adversary{rest}"),
        None => format!("{}_city", spec.name),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HybridVariant {
    IncepLstm,
    IncepGruV1,
    IncepGruV2,
    IncepGruV3,
}

impl HybridVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inceplstm" => Ok(HybridVariant::IncepLstm),
            "incepgru_v1" => Ok(HybridVariant::IncepGruV1),
            "incepgru_v2" => Ok(HybridVariant::IncepGruV2),
            "incepgru_v3" => Ok(HybridVariant::IncepGruV3),
            _ => Err(Error::config(format!("unknown hybrid variant {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HybridVariant::IncepLstm => "inceplstm",
            HybridVariant::IncepGruV1 => "incepgru_v1",
            HybridVariant::IncepGruV2 => "incepgru_v2",
            HybridVariant::IncepGruV3 => "incepgru_v3",
        }
    }
}

/// DCNN with Conv3/Conv4 replaced by inception modules and a 2-layer
/// recurrent channel beside the FC blocks.
pub fn build_hybrid(variant: HybridVariant, cfg: &DcnnConfig, rnn_hidden: usize) -> Result<NetworkSpec> {
    use InceptionKind::{I, II};
    let (kinds, temporal, cell) = match variant {
        HybridVariant::IncepLstm => ([I, I], false, CellKind::Lstm),
        HybridVariant::IncepGruV1 => ([II, II], false, CellKind::Gru),
        HybridVariant::IncepGruV2 => ([I, II], false, CellKind::Gru),
        HybridVariant::IncepGruV3 => ([II, II], true, CellKind::Gru),
    };
    let mut spec = dcnn_spec(cfg, variant.name(), dcnn_blocks(cfg, Some((kinds, temporal))))?;
    spec.recurrent = Some(RecurrentBranch { kind: cell, hidden: rnn_hidden, layers: 2 });
    spec.validate()?;
    Ok(spec)
}

/// Trainable parameters of one inception module with `dims` spatial axes.
pub fn inception_param_count(kind: InceptionKind, in_channels: usize, out: usize, dims: usize) -> Result<usize> {
    if in_channels % 4 != 0 || out % 4 != 0 {
        return Err(Error::config(format!("inception widths {in_channels}→{out} must be multiples of 4")));
    }
    if !(1..=2).contains(&dims) {
        return Err(Error::config(format!("inception dims {dims} not in 1..=2")));
    }
    let mut shape = vec![in_channels];
    shape.extend(std::iter::repeat(8).take(dims));
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    instantiate(&LayerSpec::Inception { kind, out, temporal: false }, "m", &shape, &mut store, &mut rng)?;
    Ok(store.num_trainable())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Network;

    // floor((in + 2p − k) / s) + 1, written out independently of the engine
    fn ext(i: usize, k: usize, p: usize, s: usize) -> usize {
        (i + 2 * p - k) / s + 1
    }

    fn extent_trace(spec: &NetworkSpec) -> Vec<usize> {
        spec.validate().unwrap().trunk.iter().map(|(_, s)| *s.last().unwrap()).collect()
    }

    #[test]
    fn dcnn_paper_scale_extents() {
        let spec = build_dcnn(&DcnnConfig::paper(2, 58, 290)).unwrap();
        let mut want = Vec::new();
        let mut e = 290;
        for (i, pp) in [1, 0, 0, 0].into_iter().enumerate() {
            e = ext(e, 3, 0, 1);
            want.extend([e, e, e]);
            e = ext(e, 2, pp, 2);
            want.push(e);
            if i % 2 == 1 {
                want.push(e);
            }
        }
        assert_eq!(extent_trace(&spec), want);
        assert_eq!(&want[..4], &[288, 288, 288, 145]);
        let t = spec.validate().unwrap();
        assert_eq!(t.trunk.last().unwrap().1, vec![32, 16]);
        assert_eq!(t.head_input, vec![2 * 290 + 32 * 16]);
        assert_eq!(t.output, vec![10]);
    }

    #[test]
    fn fcnn_paper_scale_extents() {
        let spec = build_fcnn(&FcnnConfig::paper(2, 500, 128)).unwrap();
        let t = spec.validate().unwrap();
        let (mut h, mut w) = (ext(500, 5, 2, 2), ext(128, 5, 2, 2));
        assert_eq!(t.trunk[0].1, vec![28, h, w]);
        for _ in 0..3 {
            h /= 2;
            w /= 2;
        }
        h = ext(ext(h, 3, 0, 1), 3, 0, 1);
        w = ext(ext(w, 3, 0, 1), 3, 0, 1);
        assert_eq!(t.trunk.last().unwrap().1, vec![256, h, w]);
        assert_eq!((h, w), (27, 4));
        assert_eq!(t.head.last().unwrap().1, vec![10]);
    }

    #[test]
    fn collapse_names_the_layer() {
        let e = build_fcnn(&FcnnConfig::paper(2, 58, 290)).unwrap_err().to_string();
        assert!(e.contains("conv4.1.conv"), "{e}");
        let mut cfg = DcnnConfig::desk(2, 4, 32);
        assert!(build_dcnn(&cfg).is_err());
        cfg.conv_pad = 1;
        assert!(build_dcnn(&cfg).is_ok());
    }

    #[test]
    fn inception_two_is_lighter() {
        for dims in 1..=2 {
            let one = inception_param_count(InceptionKind::I, 32, 32, dims).unwrap();
            let two = inception_param_count(InceptionKind::II, 32, 32, dims).unwrap();
            assert!(two < one, "dims {dims}: {two} vs {one}");
        }
        assert!(inception_param_count(InceptionKind::I, 30, 32, 1).is_err());
    }

    #[test]
    fn hybrids_at_paper_scale() {
        for v in ["inceplstm", "incepgru_v1", "incepgru_v2", "incepgru_v3"] {
            let v = HybridVariant::parse(v).unwrap();
            let spec = build_hybrid(v, &DcnnConfig::paper(2, 58, 290), 128).unwrap();
            assert_eq!(spec.name, v.name());
            // inception keeps extents: 290 → 288 → 145 → 143 → 71 → 71 → 35 → 35 → 17
            assert_eq!(spec.trunk_width().unwrap(), 32 * 17);
            assert_eq!(spec.recurrent.as_ref().unwrap().layers, 2);
        }
        assert!(HybridVariant::parse("incepgru_v4").is_err());
    }

    #[test]
    fn branch_builders() {
        let base = build_dcnn(&DcnnConfig::paper(2, 58, 290)).unwrap();
        assert!(attach_city_adversary(base.clone(), 1, 16, 1.0).is_err());
        let city = attach_city_adversary(base.clone(), 4, 16, 1.0).unwrap();
        let dct = with_dct_head(city).unwrap();
        assert!(dct.dct_head && dct.city.is_some());
        let fcnn = build_fcnn(&FcnnConfig::paper(2, 500, 128)).unwrap();
        assert!(with_dct_head(fcnn).is_err());
    }

    #[test]
    fn shared_parameters_survive_branches() {
        let base = build_dcnn(&DcnnConfig::desk(2, 4, 48)).unwrap();
        let a = Network::build(base.clone(), 5).unwrap();
        let b = Network::build(attach_city_adversary(with_dct_head(base).unwrap(), 3, 8, 0.5).unwrap(), 5).unwrap();
        for p in a.store.iter() {
            let q = b.store.get(b.store.find(p.name()).unwrap());
            assert_eq!(p.value(), q.value(), "{}", p.name());
        }
    }
}
