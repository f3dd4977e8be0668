//! Flat `key = value` pipeline configuration with dotted section prefixes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::MiniConfig;
use crate::ensemble::{EnsembleConfig, FusionMethod};
use crate::error::{Error, Result};
use crate::features::{ChannelMode, FbankConfig, FeatureKind, ScalogramConfig};
use crate::gan::{GanMode, GanTrainConfig, LossWeights};
use crate::models::HybridVariant;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    None,
    Acgan,
    CvaeAcgan,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Scheme::None),
            "acgan" => Ok(Scheme::Acgan),
            "cvae_acgan" => Ok(Scheme::CvaeAcgan),
            _ => Err(Error::config(format!("unknown augmentation scheme {s:?} (none | acgan | cvae_acgan)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Acgan => "acgan",
            Scheme::CvaeAcgan => "cvae_acgan",
        }
    }

    pub fn gan_mode(self) -> Option<GanMode> {
        match self {
            Scheme::None => None,
            Scheme::Acgan => Some(GanMode::Acgan),
            Scheme::CvaeAcgan => Some(GanMode::Cvae),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classifier {
    Fcnn,
    Dcnn,
    DcnnDct,
    CityAdversary,
    CityAdversaryDct,
    Hybrid(HybridVariant),
}

impl Classifier {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fcnn" => Classifier::Fcnn,
            "dcnn" => Classifier::Dcnn,
            "dcnn_dct" => Classifier::DcnnDct,
            "city_adversary" => Classifier::CityAdversary,
            "city_adversary_dct" => Classifier::CityAdversaryDct,
            _ => Classifier::Hybrid(HybridVariant::parse(s).map_err(|_| {
                Error::config(format!(
                    "unknown classifier variant {s:?} (fcnn | dcnn | dcnn_dct | city_adversary | city_adversary_dct | \
                     inceplstm | incepgru_v1 | incepgru_v2 | incepgru_v3)"
                ))
            })?),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Fcnn => "fcnn",
            Classifier::Dcnn => "dcnn",
            Classifier::DcnnDct => "dcnn_dct",
            Classifier::CityAdversary => "city_adversary",
            Classifier::CityAdversaryDct => "city_adversary_dct",
            Classifier::Hybrid(v) => v.name(),
        }
    }

    /// `fcnn` or `dcnn`: the section whose `train.*` overrides apply.
    pub fn family(self) -> &'static str {
        if self == Classifier::Fcnn {
            "fcnn"
        } else {
            "dcnn"
        }
    }
}

/// `{feature}-{channel}-{scheme}-{classifier}`, e.g. `fbank-left-right-none-fcnn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystemName {
    pub feature: FeatureKind,
    pub channel: ChannelMode,
    pub scheme: Scheme,
    pub classifier: Classifier,
}

impl SystemName {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        if parts.len() < 4 {
            return Err(Error::config(format!("system {s:?} is not feature-channel-scheme-classifier")));
        }
        let n = parts.len();
        let wrap = |e: Error| match e {
            Error::Config(m) => Error::config(format!("system {s:?}: {m}")),
            e => e,
        };
        Ok(SystemName {
            feature: FeatureKind::parse(parts[0]).map_err(wrap)?,
            channel: ChannelMode::parse(&parts[1..n - 2].join("-")).map_err(wrap)?,
            scheme: Scheme::parse(parts[n - 2]).map_err(wrap)?,
            classifier: Classifier::parse(parts[n - 1]).map_err(wrap)?,
        })
    }

    /// Directory name of the feature cache this system reads.
    pub fn feature_set(&self) -> String {
        format!("{}-{}", self.feature.name(), self.channel.name())
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}-{}", self.feature.name(), self.channel.name(), self.scheme.name(), self.classifier.name())
    }
}

#[derive(Clone, Debug)]
pub enum DataSource {
    /// Synthesise the mini dataset under `<out>/data`.
    Mini(MiniConfig),
    Manifest(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ModelSettings {
    pub fcnn_multipliers: [usize; 4],
    pub fcnn_conv4_pad: usize,
    pub dcnn_multipliers: [usize; 4],
    pub dcnn_conv_pad: usize,
    pub dcnn_fc: [usize; 3],
    pub dropout: f32,
    pub rnn_hidden: usize,
    pub city_hidden: usize,
    pub city_lambda: f32,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            fcnn_multipliers: [4, 8, 16, 16],
            fcnn_conv4_pad: 1,
            dcnn_multipliers: [2, 4, 8, 16],
            dcnn_conv_pad: 0,
            dcnn_fc: [64; 3],
            dropout: 0.3,
            rnn_hidden: 32,
            city_hidden: 32,
            city_lambda: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AugmentSettings {
    pub rounds: usize,
    pub gan: GanTrainConfig,
    /// GAN epochs at which candidates are sampled.
    pub snapshots: Vec<usize>,
    pub candidate_fraction: f64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        AugmentSettings { rounds: 1, gan: GanTrainConfig::default(), snapshots: vec![40, 45, 50], candidate_fraction: 0.25 }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub out: PathBuf,
    /// Split, augmentation and mini-dataset seed.
    pub seed: u64,
    pub jobs: usize,
    pub data: DataSource,
    pub systems: Vec<SystemName>,
    /// Channel mode is taken from each system.
    pub fbank: FbankConfig,
    pub scalogram: ScalogramConfig,
    pub model: ModelSettings,
    pub train_fcnn: TrainConfig,
    pub train_dcnn: TrainConfig,
    pub augment: AugmentSettings,
    pub ensemble: EnsembleConfig,
    /// Every key as given, defaults excluded; stage hashes read from it.
    pub raw: BTreeMap<String, String>,
}

struct Keys {
    map: BTreeMap<String, String>,
}

impl Keys {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.map.remove(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::config(format!("{key}: cannot parse {s:?}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn array<const N: usize>(&mut self, key: &str, slot: &mut [usize; N]) -> Result<()> {
        if let Some(v) = self.list::<usize>(key)? {
            *slot = v.try_into().map_err(|v: Vec<usize>| Error::config(format!("{key}: expected {N} values, got {}", v.len())))?;
        }
        Ok(())
    }
}

/// Prefixes a configuration error with the offending field.
fn field(name: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::config(format!("{name}: {m}")),
        e => e,
    }
}

/// Reads `key = value` lines; `#` starts a comment. Duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {line:?}", ln + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(format!("line {}: duplicate key {k}", ln + 1)));
        }
    }
    Ok(map)
}

const TRAIN_KEYS: [&str; 9] =
    ["max_epochs", "patience", "lr", "lr_decay_after", "lr_factor", "lr_floor", "batch_size", "val_fraction", "seeds"];

fn train_section(keys: &mut Keys, family: &str) -> Result<TrainConfig> {
    let mut t = TrainConfig::default();
    // family-specific keys win over the shared ones
    for prefix in ["train.".to_string(), format!("train.{family}.")] {
        let k = |name: &str| format!("{prefix}{name}");
        let peek = |keys: &Keys, name: &str| keys.map.get(&k(name)).cloned();
        let mut tmp = Keys { map: BTreeMap::new() };
        for name in TRAIN_KEYS {
            if let Some(v) = peek(keys, name) {
                tmp.map.insert(name.to_string(), v);
            }
        }
        tmp.set("max_epochs", &mut t.max_epochs)?;
        tmp.set("patience", &mut t.patience)?;
        tmp.set("lr", &mut t.lr)?;
        tmp.set("lr_decay_after", &mut t.lr_decay_after)?;
        tmp.set("lr_factor", &mut t.lr_factor)?;
        tmp.set("lr_floor", &mut t.lr_floor)?;
        tmp.set("batch_size", &mut t.batch_size)?;
        tmp.set("val_fraction", &mut t.val_fraction)?;
        if let Some(s) = tmp.list::<u64>("seeds")? {
            t.seeds = s;
        }
    }
    t.validate().map_err(|e| field(&format!("train ({family})"), e))?;
    if t.seeds.is_empty() {
        return Err(Error::config(format!("train ({family}): seeds is empty")));
    }
    Ok(t)
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<PipelineConfig> {
        Self::from_map(parse_kv(text)?)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_map(raw: BTreeMap<String, String>) -> Result<PipelineConfig> {
        let mut keys = Keys { map: raw.clone() };
        let mut out = PathBuf::from("out");
        keys.set("out", &mut out)?;
        let mut seed = 0u64;
        keys.set("seed", &mut seed)?;
        let mut jobs = 1usize;
        keys.set("jobs", &mut jobs)?;

        let data = match keys.take::<PathBuf>("data.manifest")? {
            Some(p) => DataSource::Manifest(p),
            None => {
                let mut m = MiniConfig { seed, ..MiniConfig::default() };
                keys.set("data.mini.sample_rate", &mut m.sample_rate)?;
                keys.set("data.mini.duration", &mut m.duration_s)?;
                keys.set("data.mini.clips_per_city", &mut m.clips_per_city)?;
                keys.set("data.mini.cities", &mut m.n_cities)?;
                keys.set("data.mini.seed", &mut m.seed)?;
                DataSource::Mini(m)
            }
        };

        let systems = match keys.list::<String>("systems")? {
            Some(s) => s.iter().map(|n| SystemName::parse(n).map_err(|e| field("systems", e))).collect::<Result<Vec<_>>>()?,
            None => vec![
                SystemName::parse("fbank-left-right-none-fcnn")?,
                SystemName::parse("scalogram-left-right-none-dcnn")?,
            ],
        };
        if systems.is_empty() {
            return Err(Error::config("systems: no systems listed"));
        }

        let mut fbank = FbankConfig::default();
        keys.set("feature.fbank.sample_rate", &mut fbank.sample_rate)?;
        keys.set("feature.fbank.win_ms", &mut fbank.win_ms)?;
        keys.set("feature.fbank.hop_ms", &mut fbank.hop_ms)?;
        keys.set("feature.fbank.filters", &mut fbank.n_filters)?;
        keys.set("feature.fbank.deltas", &mut fbank.deltas)?;
        let mut scalogram = ScalogramConfig::default();
        keys.set("feature.scalogram.sample_rate", &mut scalogram.sample_rate)?;
        keys.set("feature.scalogram.win_ms", &mut scalogram.win_ms)?;
        keys.set("feature.scalogram.hop_ms", &mut scalogram.hop_ms)?;
        keys.set("feature.scalogram.filters", &mut scalogram.n_filters)?;

        let mut model = ModelSettings::default();
        keys.array("model.fcnn.multipliers", &mut model.fcnn_multipliers)?;
        keys.set("model.fcnn.conv4_pad", &mut model.fcnn_conv4_pad)?;
        keys.array("model.dcnn.multipliers", &mut model.dcnn_multipliers)?;
        keys.set("model.dcnn.conv_pad", &mut model.dcnn_conv_pad)?;
        keys.array("model.dcnn.fc", &mut model.dcnn_fc)?;
        keys.set("model.dropout", &mut model.dropout)?;
        keys.set("model.rnn_hidden", &mut model.rnn_hidden)?;
        keys.set("model.city.hidden", &mut model.city_hidden)?;
        keys.set("model.city.lambda", &mut model.city_lambda)?;

        for k in keys.map.keys().filter(|k| k.starts_with("train.")) {
            let name = k.trim_start_matches("train.").trim_start_matches("fcnn.").trim_start_matches("dcnn.");
            if !TRAIN_KEYS.contains(&name) {
                return Err(Error::config(format!("unknown key {k}")));
            }
        }
        let train_fcnn = train_section(&mut keys, "fcnn")?;
        let train_dcnn = train_section(&mut keys, "dcnn")?;
        keys.map.retain(|k, _| !k.starts_with("train."));

        let mut augment = AugmentSettings::default();
        keys.set("augment.rounds", &mut augment.rounds)?;
        keys.set("augment.gan.epochs", &mut augment.gan.epochs)?;
        keys.set("augment.gan.batch_size", &mut augment.gan.batch_size)?;
        keys.set("augment.gan.lr", &mut augment.gan.lr)?;
        let w: &mut LossWeights = &mut augment.gan.weights;
        keys.set("augment.gan.gamma", &mut w.gamma)?;
        keys.set("augment.gan.gamma1", &mut w.gamma1)?;
        keys.set("augment.gan.gamma2", &mut w.gamma2)?;
        keys.set("augment.gan.gamma3", &mut w.gamma3)?;
        if let Some(s) = keys.list("augment.snapshots")? {
            augment.snapshots = s;
        }
        keys.set("augment.candidate_fraction", &mut augment.candidate_fraction)?;
        augment.gan.weights.validate()?;

        let names: Vec<String> = systems.iter().map(ToString::to_string).collect();
        let members = match keys.list::<String>("ensemble.members")? {
            Some(m) => m
                .iter()
                .map(|n| SystemName::parse(n).map(|s| s.to_string()).map_err(|e| field("ensemble.members", e)))
                .collect::<Result<Vec<_>>>()?,
            None => names.clone(),
        };
        if let Some(bad) = members.iter().find(|m| !names.contains(m)) {
            return Err(Error::config(format!("ensemble.members: {bad} is not in systems")));
        }
        let method = match keys.take::<String>("ensemble.method")?.as_deref() {
            None | Some("average") => FusionMethod::Average,
            Some("weighted") => FusionMethod::Weighted,
            Some(m) => return Err(Error::config(format!("ensemble.method: unknown fusion method {m:?}"))),
        };
        let weights = keys.list::<f64>("ensemble.weights")?;
        let ensemble = EnsembleConfig { members, method, weights };
        ensemble.validate().map_err(|e| field("ensemble", e))?;
        if method == FusionMethod::Weighted && ensemble.weights.is_none() && ensemble.members.len() < 2 {
            return Err(Error::config("ensemble: fitted weights need at least two members"));
        }

        if let Some(k) = keys.map.keys().next() {
            return Err(Error::config(format!("unknown key {k}")));
        }
        let cfg = PipelineConfig {
            out,
            seed,
            jobs,
            data,
            systems,
            fbank,
            scalogram,
            model,
            train_fcnn,
            train_dcnn,
            augment,
            ensemble,
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        if let DataSource::Manifest(p) = &self.data {
            if !p.is_file() {
                return Err(Error::config(format!("data.manifest: {} does not exist", p.display())));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.systems {
            if !seen.insert(s.to_string()) {
                return Err(Error::config(format!("systems: {s} listed twice")));
            }
        }
        if self.augment.rounds == 0 && self.systems.iter().any(|s| s.scheme != Scheme::None) {
            return Err(Error::config("augment.rounds: must be ≥ 1 for augmented systems"));
        }
        Ok(())
    }

    /// Overrides a key and re-parses, as the command-line flags do.
    pub fn with_override(&self, key: &str, value: &str) -> Result<PipelineConfig> {
        let mut raw = self.raw.clone();
        raw.insert(key.to_string(), value.to_string());
        Self::from_map(raw)
    }

    pub fn train_config(&self, c: Classifier) -> &TrainConfig {
        if c == Classifier::Fcnn {
            &self.train_fcnn
        } else {
            &self.train_dcnn
        }
    }

    /// `k=v` lines of every given key under `prefix`, sorted.
    pub fn section(&self, prefix: &str) -> String {
        self.raw
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_names_round_trip() {
        for n in [
            "fbank-left-right-none-fcnn",
            "scalogram-ave-diff-acgan-dcnn_dct",
            "fbank-left-right-cvae_acgan-incepgru_v3",
            "scalogram-left-right-none-city_adversary_dct",
        ] {
            assert_eq!(SystemName::parse(n).unwrap().to_string(), n);
        }
        assert_eq!(SystemName::parse("fbank-lr-none-fcnn").unwrap().to_string(), "fbank-left-right-none-fcnn");
    }

    #[test]
    fn invalid_variant_names_the_field() {
        let e = PipelineConfig::from_text("systems = fbank-left-right-none-resnet\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Config(_)));
        assert!(msg.contains("systems") && msg.contains("resnet"), "{msg}");
        let e = PipelineConfig::from_text("systems = fbank-left-right-mixup-fcnn\n").unwrap_err();
        assert!(e.to_string().contains("augmentation scheme"), "{e}");
        let e = PipelineConfig::from_text("train.lrr = 1\n").unwrap_err();
        assert!(e.to_string().contains("train.lrr"), "{e}");
    }

    #[test]
    fn family_sections_override_shared_keys() {
        let c = PipelineConfig::from_text("train.lr = 0.002\ntrain.fcnn.lr = 0.01\ntrain.seeds = 4, 5\n").unwrap();
        assert_eq!(c.train_fcnn.lr, 0.01);
        assert_eq!(c.train_dcnn.lr, 0.002);
        assert_eq!(c.train_dcnn.seeds, vec![4, 5]);
        assert_eq!(c.section("train."), "train.fcnn.lr=0.01\ntrain.lr=0.002\ntrain.seeds=4, 5\n");
    }

    #[test]
    fn paths_resolve_at_validation() {
        let e = PipelineConfig::from_text("data.manifest = /nonexistent/manifest.tsv\n").unwrap_err();
        assert!(e.to_string().contains("data.manifest"), "{e}");
        assert!(PipelineConfig::from_text("a = 1\na = 2\n").is_err());
        let e = PipelineConfig::from_text("ensemble.members = scalogram-left-right-none-fcnn\n").unwrap_err();
        assert!(e.to_string().contains("not in systems"), "{e}");
    }
}
