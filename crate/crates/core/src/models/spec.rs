//! Declarative network descriptions and the build-time shape calculator.

use crate::error::{Error, Result};
use crate::tensor::ops::{out_extent, CellKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InceptionKind {
    /// 1; 1→3; 1→5; pool→1.
    I,
    /// As I with the 5-kernel path factored into two stacked 3-kernels.
    II,
}

/// One layer. Convolution and pooling dimensionality follows the rank of the
/// incoming per-item shape: `(C, L)` is 1D, `(C, H, W)` is 2D.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv { out: usize, kernel: usize, pad: usize, stride: usize },
    BatchNorm,
    Relu,
    MaxPool { size: usize, pad: usize, stride: usize },
    Dropout { p: f32 },
    /// `temporal` runs 2D kernels over (frames, extent) inside a frame-wise network.
    Inception { kind: InceptionKind, out: usize, temporal: bool },
    GlobalAvgPool,
    Linear { out: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub label: String,
    pub spec: LayerSpec,
}

impl Layer {
    pub fn new(label: impl Into<String>, spec: LayerSpec) -> Self {
        Layer { label: label.into(), spec }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// 2D fully convolutional over the `(c, L, n)` image; clip-level output.
    Fcnn,
    /// 1D per frame over `(c, n)`; frame-level output accumulated per clip.
    Dcnn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CityBranch {
    pub n_cities: usize,
    pub hidden: usize,
    pub lambda: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentBranch {
    pub kind: CellKind,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub family: Family,
    /// `(c, L, n)`: channels, frames, filters.
    pub input: [usize; 3],
    pub trunk: Vec<Layer>,
    /// DCNN: concatenate the flattened input frame with the flattened trunk output.
    pub concat_input: bool,
    /// FCNN: the conv classification block; DCNN: the FC blocks.
    pub head: Vec<Layer>,
    /// Final affine layer width (DCNN family); `None` when the head already emits class scores.
    pub output: Option<usize>,
    pub n_classes: usize,
    pub dct_head: bool,
    pub city: Option<CityBranch>,
    pub recurrent: Option<RecurrentBranch>,
}

/// Per-layer output shapes, for reports and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTrace {
    pub trunk: Vec<(String, Vec<usize>)>,
    pub head: Vec<(String, Vec<usize>)>,
    /// Per-item shape entering the head.
    pub head_input: Vec<usize>,
    pub output: Vec<usize>,
}

/// Inception branch widths: `q = out/4` per branch, reductions `max(q/2, 1)`.
pub fn inception_widths(out: usize) -> (usize, usize) {
    let q = out / 4;
    (q, (q / 2).max(1))
}

/// Expanded inception branches as plain layer sequences.
pub fn inception_branches(kind: InceptionKind, out: usize) -> Vec<Vec<LayerSpec>> {
    let (q, r) = inception_widths(out);
    let cbr = |out: usize, k: usize| {
        vec![
            LayerSpec::Conv { out, kernel: k, pad: k / 2, stride: 1 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
        ]
    };
    let mut b3 = cbr(r, 1);
    match kind {
        InceptionKind::I => b3.extend(cbr(q, 5)),
        InceptionKind::II => {
            b3.extend(cbr(r, 3));
            b3.extend(cbr(q, 3));
        }
    }
    let mut b2 = cbr(r, 1);
    b2.extend(cbr(q, 3));
    let mut b4 = vec![LayerSpec::MaxPool { size: 3, pad: 1, stride: 1 }];
    b4.extend(cbr(q, 1));
    vec![cbr(q, 1), b2, b3, b4]
}

/// Output shape of one layer for a per-item input shape.
pub fn layer_out_shape(spec: &LayerSpec, s: &[usize], label: &str) -> Result<Vec<usize>> {
    let fail = |msg: String| Error::config(format!("layer {label}: {msg}"));
    let spatial = |s: &[usize], k: usize, pad: usize, stride: usize| -> Result<Vec<usize>> {
        s[1..]
            .iter()
            .map(|&e| out_extent(e, k, pad, stride).map_err(|e| fail(e.to_string())))
            .collect()
    };
    match spec {
        LayerSpec::Conv { out, kernel, pad, stride } => {
            if !(2..=3).contains(&s.len()) {
                return Err(fail(format!("convolution needs (C, L) or (C, H, W), got {s:?}")));
            }
            let mut o = vec![*out];
            o.extend(spatial(s, *kernel, *pad, *stride)?);
            Ok(o)
        }
        LayerSpec::MaxPool { size, pad, stride } => {
            if !(2..=3).contains(&s.len()) {
                return Err(fail(format!("pooling needs (C, L) or (C, H, W), got {s:?}")));
            }
            if *pad * 2 > *size {
                return Err(fail(format!("pool pad {pad} exceeds half the window {size}")));
            }
            let mut o = vec![s[0]];
            o.extend(spatial(s, *size, *pad, *stride)?);
            Ok(o)
        }
        LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(s.to_vec()),
        LayerSpec::Inception { out, .. } => {
            if *out % 4 != 0 || *out == 0 {
                return Err(fail(format!("inception width {out} is not a positive multiple of 4")));
            }
            if s.len() < 2 {
                return Err(fail(format!("inception needs a spatial axis, got {s:?}")));
            }
            let mut o = s.to_vec();
            o[0] = *out;
            Ok(o)
        }
        LayerSpec::GlobalAvgPool => {
            if s.len() < 2 {
                return Err(fail(format!("global pooling needs a spatial axis, got {s:?}")));
            }
            Ok(vec![s[0]])
        }
        LayerSpec::Linear { out } => {
            if s.len() != 1 {
                return Err(fail(format!("linear needs a flat input, got {s:?}")));
            }
            Ok(vec![*out])
        }
    }
}

fn validate_layers(layers: &[Layer], mut s: Vec<usize>, family: Family) -> Result<(Vec<(String, Vec<usize>)>, Vec<usize>)> {
    let mut trace = Vec::with_capacity(layers.len());
    for l in layers {
        if let LayerSpec::Inception { temporal: true, .. } = l.spec {
            if family != Family::Dcnn {
                return Err(Error::config(format!("layer {}: temporal inception needs a frame-wise network", l.label)));
            }
        }
        if let LayerSpec::Dropout { p } = l.spec {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(format!("layer {}: dropout p={p} outside [0, 1)", l.label)));
            }
        }
        s = layer_out_shape(&l.spec, &s, &l.label)?;
        trace.push((l.label.clone(), s.clone()));
    }
    Ok((trace, s))
}

impl NetworkSpec {
    /// Per-item shape entering the trunk.
    pub fn item_shape(&self) -> Vec<usize> {
        let [c, l, n] = self.input;
        match self.family {
            Family::Fcnn => vec![c, l, n],
            Family::Dcnn => vec![c, n],
        }
    }

    pub fn frames(&self) -> usize {
        self.input[1]
    }

    /// Shape calculator: every layer's output shape, or a configuration
    /// error naming the first layer that does not fit.
    pub fn validate(&self) -> Result<ShapeTrace> {
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("input shape {:?} has a zero extent", self.input)));
        }
        if self.n_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        let (trunk, ts) = validate_layers(&self.trunk, self.item_shape(), self.family)?;
        let head_input = match self.family {
            Family::Fcnn => ts.clone(),
            Family::Dcnn => {
                let mut flat = ts.iter().product::<usize>();
                if self.concat_input {
                    flat += self.item_shape().iter().product::<usize>();
                }
                vec![flat]
            }
        };
        let (head, hs) = validate_layers(&self.head, head_input.clone(), self.family)?;
        let output = match (self.family, self.output) {
            (Family::Fcnn, None) => {
                if hs != [self.n_classes] {
                    return Err(Error::config(format!(
                        "FCNN head must end in {} class maps, ends in {hs:?}",
                        self.n_classes
                    )));
                }
                hs
            }
            (Family::Dcnn, Some(k)) if k == self.n_classes => {
                if hs.len() != 1 {
                    return Err(Error::config(format!("DCNN head must be flat, got {hs:?}")));
                }
                vec![k]
            }
            _ => return Err(Error::config("output layer does not match the network family")),
        };
        if let Some(c) = &self.city {
            if c.n_cities < 2 {
                return Err(Error::config(format!("city adversary needs ≥ 2 cities, got {}", c.n_cities)));
            }
        }
        if self.recurrent.is_some() && self.family != Family::Dcnn {
            return Err(Error::config("recurrent channel requires a frame-wise network"));
        }
        if let Some(r) = &self.recurrent {
            if r.layers == 0 || r.hidden == 0 {
                return Err(Error::config("recurrent channel needs ≥ 1 layer and hidden width"));
            }
        }
        if self.dct_head && self.family != Family::Dcnn {
            return Err(Error::config("DCT temporal head requires a frame-wise network"));
        }
        Ok(ShapeTrace { trunk, head, head_input, output })
    }

    /// Flattened width of the trunk output (per item).
    pub fn trunk_width(&self) -> Result<usize> {
        let t = self.validate()?;
        Ok(t.trunk.last().map_or_else(|| self.item_shape().iter().product(), |(_, s)| s.iter().product()))
    }
}

// ---- text descriptor, stored in checkpoints ----

fn layer_to_text(l: &LayerSpec) -> String {
    match l {
        LayerSpec::Conv { out, kernel, pad, stride } => format!("conv {out} {kernel} {pad} {stride}"),
        LayerSpec::BatchNorm => "bn".into(),
        LayerSpec::Relu => "relu".into(),
        LayerSpec::MaxPool { size, pad, stride } => format!("maxpool {size} {pad} {stride}"),
        LayerSpec::Dropout { p } => format!("dropout {p}"),
        LayerSpec::Inception { kind, out, temporal } => {
            format!("inception {} {out} {}", if *kind == InceptionKind::I { "I" } else { "II" }, *temporal as u8)
        }
        LayerSpec::GlobalAvgPool => "gap".into(),
        LayerSpec::Linear { out } => format!("linear {out}"),
    }
}

fn layer_from_text(s: &str) -> Result<LayerSpec> {
    let bad = || Error::config(format!("bad layer descriptor {s:?}"));
    let t: Vec<&str> = s.split_whitespace().collect();
    let num = |i: usize| -> Result<usize> { t.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
    Ok(match *t.first().ok_or_else(bad)? {
        "conv" => LayerSpec::Conv { out: num(1)?, kernel: num(2)?, pad: num(3)?, stride: num(4)? },
        "bn" => LayerSpec::BatchNorm,
        "relu" => LayerSpec::Relu,
        "maxpool" => LayerSpec::MaxPool { size: num(1)?, pad: num(2)?, stride: num(3)? },
        "dropout" => LayerSpec::Dropout { p: t.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())? },
        "inception" => LayerSpec::Inception {
            kind: match *t.get(1).ok_or_else(bad)? {
                "I" => InceptionKind::I,
                "II" => InceptionKind::II,
                _ => return Err(bad()),
            },
            out: num(2)?,
            temporal: num(3)? == 1,
        },
        "gap" => LayerSpec::GlobalAvgPool,
        "linear" => LayerSpec::Linear { out: num(1)? },
        _ => return Err(bad()),
    })
}

impl NetworkSpec {
    /// One line per field and per layer.
    pub fn to_descriptor(&self) -> Vec<String> {
        let mut v = vec![
            format!("name {}", self.name),
            format!("family {}", if self.family == Family::Fcnn { "fcnn" } else { "dcnn" }),
            format!("input {} {} {}", self.input[0], self.input[1], self.input[2]),
            format!("concat_input {}", self.concat_input as u8),
            format!("output {}", self.output.map_or("none".to_string(), |o| o.to_string())),
            format!("classes {}", self.n_classes),
            format!("dct {}", self.dct_head as u8),
        ];
        if let Some(c) = &self.city {
            v.push(format!("city {} {} {}", c.n_cities, c.hidden, c.lambda));
        }
        if let Some(r) = &self.recurrent {
            let k = if r.kind == CellKind::Lstm { "lstm" } else { "gru" };
            v.push(format!("recurrent {k} {} {}", r.hidden, r.layers));
        }
        for l in &self.trunk {
            v.push(format!("trunk {}|{}", l.label, layer_to_text(&l.spec)));
        }
        for l in &self.head {
            v.push(format!("head {}|{}", l.label, layer_to_text(&l.spec)));
        }
        v
    }

    pub fn from_descriptor(lines: &[String]) -> Result<NetworkSpec> {
        let mut spec = NetworkSpec {
            name: String::new(),
            family: Family::Fcnn,
            input: [0; 3],
            trunk: Vec::new(),
            concat_input: false,
            head: Vec::new(),
            output: None,
            n_classes: 10,
            dct_head: false,
            city: None,
            recurrent: None,
        };
        for line in lines {
            let bad = || Error::config(format!("bad descriptor line {line:?}"));
            let (key, rest) = line.split_once(' ').ok_or_else(bad)?;
            let nums = |i: usize| -> Result<usize> {
                rest.split_whitespace().nth(i).ok_or_else(bad)?.parse().map_err(|_| bad())
            };
            match key {
                "name" => spec.name = rest.to_string(),
                "family" => {
                    spec.family = match rest {
                        "fcnn" => Family::Fcnn,
                        "dcnn" => Family::Dcnn,
                        _ => return Err(bad()),
                    }
                }
                "input" => spec.input = [nums(0)?, nums(1)?, nums(2)?],
                "concat_input" => spec.concat_input = nums(0)? == 1,
                "output" => spec.output = if rest == "none" { None } else { Some(nums(0)?) },
                "classes" => spec.n_classes = nums(0)?,
                "dct" => spec.dct_head = nums(0)? == 1,
                "city" => {
                    let lambda = rest.split_whitespace().nth(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
                    spec.city = Some(CityBranch { n_cities: nums(0)?, hidden: nums(1)?, lambda });
                }
                "recurrent" => {
                    let kind = match rest.split_whitespace().next() {
                        Some("lstm") => CellKind::Lstm,
                        Some("gru") => CellKind::Gru,
                        _ => return Err(bad()),
                    };
                    spec.recurrent = Some(RecurrentBranch { kind, hidden: nums(1)?, layers: nums(2)? });
                }
                "trunk" | "head" => {
                    let (label, l) = rest.split_once('|').ok_or_else(bad)?;
                    let layer = Layer::new(label, layer_from_text(l)?);
                    if key == "trunk" {
                        spec.trunk.push(layer);
                    } else {
                        spec.head.push(layer);
                    }
                }
                _ => return Err(bad()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}
