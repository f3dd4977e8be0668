//! Stage execution with config-hash stamps, an output lock and a failure marker.

use std::collections::HashMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{Classifier, DataSource, PipelineConfig, Scheme, SystemName};
use super::report::{format_report, report_rows};
use crate::augment::{
    append_ledger, apply_decision, read_ledger, run_round, write_candidate_set, AugmentedDatabase, CandidateSource,
    LedgerEntry, RoundConfig,
};
use crate::dataset::{make_mini_dataset, parse_manifest, read_wav, DatasetManifest, Fold};
use crate::ensemble::{average_vote, fit_weights, read_predictions, weighted_vote, write_predictions, EnsembleConfig, FusionMethod};
use crate::error::{Error, Result};
use crate::features::{extract_fbank, extract_scalogram, read_cache, write_cache, FeatureKind, FeatureMap};
use crate::gan::{GanConfig, GanMode};
use crate::models::{
    attach_city_adversary, build_dcnn, build_fcnn, build_hybrid, decode_checkpoint, encode_checkpoint, with_dct_head,
    DcnnConfig, FcnnConfig, Network, NetworkSpec, PredictionRecord,
};
use crate::training::{predict_set, stratified_split, train_model, Sample, SampleSet, Standardizer};

/// Pipeline stages in execution order; running one runs its predecessors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Mkdata,
    Extract,
    Augment,
    Train,
    Predict,
    Fuse,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Mkdata => "mkdata",
            Stage::Extract => "extract",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Fuse => "fuse",
            Stage::Eval => "eval",
        }
    }
}

/// What happened to one stage unit (a stage for one system or feature set).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRecord {
    pub label: String,
    pub hash: String,
    pub skipped: bool,
}

pub const LOCK_FILE: &str = ".lock";
pub const FAILURE_MARKER: &str = "FAILED";

/// Exclusive ownership of an output root for one invocation.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    /// A lock left by a process that no longer exists is taken over.
    pub fn acquire(root: &Path) -> Result<OutputLock> {
        fs::create_dir_all(root)?;
        let path = root.join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id())?;
                    return Ok(OutputLock { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path).unwrap_or_default();
                    let pid = owner.trim();
                    if process_alive(pid) {
                        return Err(Error::config(format!("output root {} is locked by process {pid}", root.display())));
                    }
                    log::warn!("removing stale lock of process {pid:?}");
                    fs::remove_file(&path)?;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::config(format!("could not lock output root {}", root.display())))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else { return false };
    if pid == std::process::id() {
        return true;
    }
    let proc_root = Path::new("/proc");
    // without procfs the owner cannot be checked, so the lock is honoured
    !proc_root.is_dir() || proc_root.join(pid.to_string()).exists()
}

fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a sibling temp file so readers never see a partial artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// In-parallel map over `items` with at most `jobs` threads; results keep
/// input order and the first error by index wins.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let jobs = jobs.min(items.len());
    let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                s.spawn(move || (j..items.len()).step_by(jobs).map(|i| (i, f(&items[i]))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index mapped")).collect()
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

/// Classifier spec of `sys` for `(c, L, n)` inputs.
pub fn build_spec(cfg: &PipelineConfig, sys: &SystemName, shape: [usize; 3], n_classes: usize, n_cities: usize) -> Result<NetworkSpec> {
    let [c, l, n] = shape;
    let m = &cfg.model;
    let dcnn = || DcnnConfig {
        multipliers: m.dcnn_multipliers,
        conv_pad: m.dcnn_conv_pad,
        fc: m.dcnn_fc,
        dropout: m.dropout,
        n_classes,
        ..DcnnConfig::desk(c, l, n)
    };
    let city = |spec| attach_city_adversary(spec, n_cities, m.city_hidden, m.city_lambda);
    let spec = match sys.classifier {
        Classifier::Fcnn => build_fcnn(&fcnn_config(cfg, shape, n_classes))?,
        Classifier::Dcnn => build_dcnn(&dcnn())?,
        Classifier::DcnnDct => with_dct_head(build_dcnn(&dcnn())?)?,
        Classifier::CityAdversary => city(build_dcnn(&dcnn())?)?,
        Classifier::CityAdversaryDct => city(with_dct_head(build_dcnn(&dcnn())?)?)?,
        Classifier::Hybrid(v) => build_hybrid(v, &dcnn(), m.rnn_hidden)?,
    };
    Ok(spec)
}

fn fcnn_config(cfg: &PipelineConfig, [c, l, n]: [usize; 3], n_classes: usize) -> FcnnConfig {
    FcnnConfig {
        multipliers: cfg.model.fcnn_multipliers,
        conv4_pad: cfg.model.fcnn_conv4_pad,
        n_classes,
        ..FcnnConfig::desk(c, l, n)
    }
}

fn gan_config(cfg: &PipelineConfig, sys: &SystemName, shape: [usize; 3], n_classes: usize, mode: GanMode) -> GanConfig {
    let [c, l, n] = shape;
    if sys.classifier == Classifier::Fcnn {
        GanConfig::for_fcnn(&fcnn_config(cfg, shape, n_classes), mode)
    } else {
        let d = DcnnConfig { multipliers: cfg.model.dcnn_multipliers, n_classes, ..DcnnConfig::desk(c, l, n) };
        GanConfig::for_dcnn(&d, mode)
    }
}

/// Real clips of one fold plus the standardiser fitted on the training fold.
struct Folds {
    train: SampleSet,
    eval: Option<SampleSet>,
    standardizer: Standardizer,
    template: FeatureMap,
}

struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    records: Vec<StageRecord>,
    current: String,
    manifest: Option<DatasetManifest>,
    features: HashMap<String, Vec<FeatureMap>>,
    data_hash: String,
    extract_hash: HashMap<String, String>,
    augment_hash: HashMap<String, String>,
    train_hash: HashMap<String, String>,
    predict_hash: HashMap<String, String>,
    fuse_hash: String,
}

/// Runs every stage up to and including `target`.
///
/// A stage unit whose stamp records the same config hash and whose listed
/// outputs all exist is skipped. On error the failure marker names the
/// stage; outputs already written are kept.
pub fn run_pipeline(cfg: &PipelineConfig, target: Stage) -> Result<Vec<StageRecord>> {
    let _lock = OutputLock::acquire(&cfg.out)?;
    let mut p = Pipeline {
        cfg,
        out: cfg.out.clone(),
        records: Vec::new(),
        current: String::new(),
        manifest: None,
        features: HashMap::new(),
        data_hash: String::new(),
        extract_hash: HashMap::new(),
        augment_hash: HashMap::new(),
        train_hash: HashMap::new(),
        predict_hash: HashMap::new(),
        fuse_hash: String::new(),
    };
    let marker = cfg.out.join(FAILURE_MARKER);
    match p.run(target) {
        Ok(()) => {
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
            Ok(p.records)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("stage={}\nerror={e}\n", p.current));
            Err(e)
        }
    }
}

impl Pipeline<'_> {
    fn run(&mut self, target: Stage) -> Result<()> {
        self.mkdata()?;
        if target >= Stage::Extract {
            self.extract()?;
        }
        if target >= Stage::Augment {
            self.augment()?;
        }
        if target >= Stage::Train {
            self.train()?;
        }
        if target >= Stage::Predict {
            self.predict()?;
        }
        if target >= Stage::Fuse {
            self.fuse()?;
        }
        if target >= Stage::Eval {
            self.eval()?;
        }
        Ok(())
    }

    fn stamp_path(&self, label: &str) -> PathBuf {
        self.out.join("stamps").join(format!("{label}.stamp"))
    }

    fn up_to_date(&self, label: &str, hash: &str) -> bool {
        let Ok(text) = fs::read_to_string(self.stamp_path(label)) else { return false };
        let mut lines = text.lines();
        if lines.next() != Some(&format!("hash={hash}")) {
            return false;
        }
        lines.filter_map(|l| l.strip_prefix("output=")).all(|p| self.out.join(p).exists())
    }

    /// Runs `body` unless the stamp is current; the stamp is written last.
    fn unit(&mut self, label: &str, hash: String, body: impl FnOnce(&mut Self) -> Result<Vec<PathBuf>>) -> Result<()> {
        self.current = label.to_string();
        if self.up_to_date(label, &hash) {
            log::info!("{label}: up to date ({hash})");
            self.records.push(StageRecord { label: label.to_string(), hash, skipped: true });
            return Ok(());
        }
        let stamp = self.stamp_path(label);
        if stamp.exists() {
            fs::remove_file(&stamp)?;
        }
        log::info!("{label}: running ({hash})");
        let outputs = body(self)?;
        let mut text = format!("hash={hash}\n");
        for o in &outputs {
            text.push_str(&format!("output={}\n", rel(&self.out, o)));
        }
        atomic_write(&stamp, text.as_bytes())?;
        self.records.push(StageRecord { label: label.to_string(), hash, skipped: false });
        Ok(())
    }

    fn manifest_path(&self) -> PathBuf {
        match &self.cfg.data {
            DataSource::Mini(_) => self.out.join("data").join("manifest.tsv"),
            DataSource::Manifest(p) => p.clone(),
        }
    }

    fn mkdata(&mut self) -> Result<()> {
        let hash = match &self.cfg.data {
            DataSource::Mini(_) => hash_parts(&["mkdata", &self.cfg.section("data."), &self.cfg.section("seed")]),
            DataSource::Manifest(p) => {
                let bytes = fs::read(p).map_err(|e| Error::Ingestion(format!("{}: {e}", p.display())))?;
                hash_parts(&["manifest", &String::from_utf8_lossy(&bytes)])
            }
        };
        self.data_hash = hash.clone();
        self.unit("mkdata", hash, |p| {
            let mut outputs = Vec::new();
            let manifest = match &p.cfg.data {
                DataSource::Mini(m) => {
                    let dir = p.out.join("data");
                    let man = make_mini_dataset(&dir, m)?;
                    outputs.extend(man.clips.iter().map(|c| c.path.clone()));
                    outputs.push(dir.join("manifest.tsv"));
                    man
                }
                DataSource::Manifest(path) => parse_manifest(path)?,
            };
            let labels = p.out.join("labels.tsv");
            atomic_write(&labels, labels_tsv(&manifest).as_bytes())?;
            outputs.push(labels);
            p.manifest = Some(manifest);
            Ok(outputs)
        })?;
        if self.manifest.is_none() {
            self.manifest = Some(parse_manifest(&self.manifest_path())?);
        }
        let m = self.manifest.as_ref().expect("loaded");
        for d in &m.diagnostics {
            log::warn!("manifest: {d}");
        }
        if m.clips.is_empty() {
            return Err(Error::Ingestion("manifest lists no usable clips".into()));
        }
        Ok(())
    }

    fn manifest(&self) -> &DatasetManifest {
        self.manifest.as_ref().expect("mkdata runs first")
    }

    fn feature_sets(&self) -> Vec<SystemName> {
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for s in &self.cfg.systems {
            if !seen.contains(&s.feature_set()) {
                seen.push(s.feature_set());
                out.push(*s);
            }
        }
        out
    }

    fn feature_path(&self, set: &str, clip: &str) -> PathBuf {
        self.out.join("features").join(set).join(format!("{clip}.scnf"))
    }

    fn extract(&mut self) -> Result<()> {
        for sys in self.feature_sets() {
            let set = sys.feature_set();
            let prefix = format!("feature.{}.", sys.feature.name());
            let hash = hash_parts(&["extract", &self.data_hash, &set, &self.cfg.section(&prefix)]);
            self.extract_hash.insert(set.clone(), hash.clone());
            self.unit(&format!("extract-{set}"), hash, |p| {
                let clips = p.manifest().clips.clone();
                let (cfg, out) = (p.cfg, &p.out);
                let paths = par_map(&clips, cfg.jobs, |clip| {
                    let audio = read_wav(&clip.path)?;
                    let mut fm = match sys.feature {
                        FeatureKind::Fbank => extract_fbank(&audio, &crate::features::FbankConfig { channel_mode: sys.channel, ..cfg.fbank.clone() })?,
                        FeatureKind::Scalogram => {
                            extract_scalogram(&audio, &crate::features::ScalogramConfig { channel_mode: sys.channel, ..cfg.scalogram.clone() })?
                        }
                    };
                    fm.set_meta("clip_id", clip.id.clone());
                    let path = out.join("features").join(&set).join(format!("{}.scnf", clip.id));
                    fs::create_dir_all(path.parent().expect("has parent"))?;
                    write_cache(&fm, &path)?;
                    Ok(path)
                })?;
                Ok(paths)
            })?;
        }
        Ok(())
    }

    fn load_features(&mut self, set: &str) -> Result<&[FeatureMap]> {
        if !self.features.contains_key(set) {
            let maps = self
                .manifest()
                .clips
                .iter()
                .map(|c| read_cache(&self.feature_path(set, &c.id)))
                .collect::<Result<Vec<_>>>()?;
            self.features.insert(set.to_string(), maps);
        }
        Ok(&self.features[set])
    }

    fn folds(&mut self, sys: &SystemName, standardizer: Option<Standardizer>) -> Result<Folds> {
        let cities = self.manifest().cities();
        let clips = self.manifest().clips.clone();
        let maps = self.load_features(&sys.feature_set())?.to_vec();
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for (clip, fm) in clips.iter().zip(&maps) {
            let city = cities.iter().position(|c| *c == clip.city).expect("city listed");
            let s = Sample::from_feature(&clip.id, fm, clip.scene, city);
            match clip.fold {
                Fold::Train => train.push(s),
                Fold::Evaluate => eval.push(s),
            }
        }
        let mut train = SampleSet::new(train).map_err(|e| Error::Ingestion(format!("training fold: {e}")))?;
        let mut eval = if eval.is_empty() { None } else { Some(SampleSet::new(eval)?) };
        let standardizer = standardizer.unwrap_or_else(|| Standardizer::fit(&train));
        standardizer.apply(&mut train)?;
        if let Some(e) = &mut eval {
            standardizer.apply(e)?;
        }
        Ok(Folds { train, eval, standardizer, template: maps[0].clone() })
    }

    fn systems_with(&self, f: impl Fn(&SystemName) -> bool) -> Vec<SystemName> {
        self.cfg.systems.iter().copied().filter(f).collect()
    }

    fn model_hash_parts(&self, sys: &SystemName) -> String {
        let c = self.cfg;
        format!("{}{}{}", c.section("model."), c.section("train."), c.section("seed"))
            + &format!("system={sys}\n")
    }

    fn augment(&mut self) -> Result<()> {
        for sys in self.systems_with(|s| s.scheme != Scheme::None) {
            let name = sys.to_string();
            let hash = hash_parts(&[
                "augment",
                &self.extract_hash[&sys.feature_set()],
                &self.model_hash_parts(&sys),
                &self.cfg.section("augment."),
            ]);
            self.augment_hash.insert(name.clone(), hash.clone());
            self.unit(&format!("augment-{name}"), hash, |p| p.augment_system(&sys))?;
        }
        Ok(())
    }

    fn augment_dir(&self, sys: &SystemName) -> PathBuf {
        self.out.join("augment").join(sys.to_string())
    }

    fn augment_system(&mut self, sys: &SystemName) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let dir = self.augment_dir(sys);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        let folds = self.folds(sys, None)?;
        let n_classes = self.manifest().labels.len();
        let n_cities = self.manifest().cities().len();
        let mode = sys.scheme.gan_mode().expect("augmented scheme");
        let shape = folds.train.shape;
        let a = &cfg.augment;
        let mut rc = RoundConfig::new(
            build_spec(cfg, sys, shape, n_classes, n_cities)?,
            cfg.train_config(sys.classifier).clone(),
            CandidateSource::Gan {
                config: gan_config(cfg, sys, shape, n_classes, mode),
                train: a.gan.clone(),
                snapshots: a.snapshots.clone(),
            },
        );
        rc.seed = cfg.seed;
        rc.candidate_fraction = a.candidate_fraction;
        let mut db = AugmentedDatabase::new(folds.train);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ledger = dir.join("ledger.tsv");
        let mut outputs = vec![ledger.clone()];
        for index in 0..a.rounds {
            let round = run_round(&db, index, &rc, &mut rng)?;
            let sub = format!("round{index}");
            if !round.candidates.is_empty() {
                outputs.extend(write_candidate_set(&dir.join(&sub), &round.candidates, &folds.template)?);
            }
            append_ledger(&ledger, &LedgerEntry::from_round(&round, &sub)?)?;
            if let Some(d) = &round.diagnostic {
                log::warn!("{sys} round {index}: {d}");
            }
            apply_decision(&mut db, &round)?;
        }
        Ok(outputs)
    }

    /// Accepted fakes of `sys`, in ledger order.
    fn accepted_fakes(&self, sys: &SystemName) -> Result<Vec<Sample>> {
        let dir = self.augment_dir(sys);
        let mut out = Vec::new();
        for entry in read_ledger(&dir.join("ledger.tsv"))? {
            if entry.decision != "accepted" {
                continue;
            }
            let mut files: Vec<PathBuf> = fs::read_dir(dir.join(&entry.candidates))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|f| f.extension().is_some_and(|x| x == "scnf"));
            files.sort();
            for f in files {
                let fm = read_cache(&f)?;
                let field = |k: &str| -> Result<usize> {
                    fm.meta(k)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::corrupt(f.display().to_string(), format!("missing {k}")))
                };
                let id = fm.meta("clip_id").unwrap_or_default().to_string();
                out.push(Sample::from_feature(id, &fm, field("scene")?, field("city")?));
            }
        }
        Ok(out)
    }

    fn model_dir(&self, sys: &SystemName) -> PathBuf {
        self.out.join("models").join(sys.to_string())
    }

    fn train(&mut self) -> Result<()> {
        for sys in self.cfg.systems.clone() {
            let name = sys.to_string();
            let aug = self.augment_hash.get(&name).cloned().unwrap_or_default();
            let hash = hash_parts(&["train", &self.extract_hash[&sys.feature_set()], &aug, &self.model_hash_parts(&sys)]);
            self.train_hash.insert(name.clone(), hash.clone());
            self.unit(&format!("train-{name}"), hash.clone(), |p| p.train_system(&sys, &hash))?;
        }
        Ok(())
    }

    /// (fit, validation) split of the real training fold, shared by every system.
    fn validation_split(&self, set: &SampleSet, frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
        stratified_split(&set.labels(), &set.cities(), frac, self.cfg.seed)
    }

    fn train_system(&mut self, sys: &SystemName, hash: &str) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let tc = cfg.train_config(sys.classifier).clone();
        let folds = self.folds(sys, None)?;
        let (fit_idx, val_idx) = self.validation_split(&folds.train, tc.val_fraction)?;
        let mut fit = folds.train.subset(&fit_idx);
        let val = folds.train.subset(&val_idx);
        if sys.scheme != Scheme::None {
            let fakes = self.accepted_fakes(sys)?;
            log::info!("{sys}: {} accepted fakes join training", fakes.len());
            fit.extend(&SampleSet { shape: fit.shape, samples: fakes })?;
        }
        let n_classes = self.manifest().labels.len();
        let n_cities = self.manifest().cities().len();
        let spec = build_spec(cfg, sys, fit.shape, n_classes, n_cities)?;
        let dir = self.model_dir(sys);
        fs::create_dir_all(&dir)?;
        let name = sys.to_string();
        let runs = par_map(&tc.seeds, cfg.jobs, |&seed| {
            let mut net = Network::build(spec.clone(), seed)?;
            let history = train_model(&mut net, &fit, &val, &tc, seed)?;
            let mut meta = vec![
                ("system".to_string(), name.clone()),
                ("seed".to_string(), seed.to_string()),
                ("config_hash".to_string(), hash.to_string()),
            ];
            meta.extend(folds.standardizer.to_meta());
            let ckpt = dir.join(format!("seed{seed}.ckpt"));
            atomic_write(&ckpt, &encode_checkpoint(&net, &meta))?;
            let hist = dir.join(format!("seed{seed}.history.csv"));
            atomic_write(&hist, history.to_csv().as_bytes())?;
            Ok([ckpt, hist])
        })?;
        Ok(runs.into_iter().flatten().collect())
    }

    fn predictions_dir(&self) -> PathBuf {
        self.out.join("predictions")
    }

    fn predict(&mut self) -> Result<()> {
        for sys in self.cfg.systems.clone() {
            let name = sys.to_string();
            let hash = hash_parts(&["predict", &self.train_hash[&name]]);
            self.predict_hash.insert(name.clone(), hash.clone());
            self.unit(&format!("predict-{name}"), hash, |p| p.predict_system(&sys))?;
        }
        Ok(())
    }

    fn predict_system(&mut self, sys: &SystemName) -> Result<Vec<PathBuf>> {
        let tc = self.cfg.train_config(sys.classifier).clone();
        let dir = self.model_dir(sys);
        let nets = tc
            .seeds
            .iter()
            .map(|s| {
                let path = dir.join(format!("seed{s}.ckpt"));
                let bytes = fs::read(&path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
                decode_checkpoint(&bytes)
            })
            .collect::<Result<Vec<_>>>()?;
        let st = Standardizer::from_meta(&nets[0].1)?
            .ok_or_else(|| Error::corrupt(dir.display().to_string(), "checkpoint lacks standardiser"))?;
        let folds = self.folds(sys, Some(st))?;
        let (_, val_idx) = self.validation_split(&folds.train, tc.val_fraction)?;
        let val = folds.train.subset(&val_idx);
        let name = sys.to_string();
        let mut outputs = Vec::new();
        let sets = [(folds.eval.as_ref(), format!("{name}.csv")), (Some(&val), format!("{name}.val.csv"))];
        for (set, file) in sets {
            let Some(set) = set.filter(|s| !s.is_empty()) else { continue };
            let per_seed =
                nets.iter().map(|(net, _)| predict_set(net, set, &name, 0)).collect::<Result<Vec<Vec<PredictionRecord>>>>()?;
            let mut avg = average_vote(&per_seed)?;
            avg.iter_mut().for_each(|r| r.classifier = name.clone());
            let path = self.predictions_dir().join(file);
            fs::create_dir_all(self.predictions_dir())?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            write_predictions(&avg, &tmp)?;
            fs::rename(&tmp, &path)?;
            outputs.push(path);
        }
        Ok(outputs)
    }

    fn fuse(&mut self) -> Result<()> {
        let e = &self.cfg.ensemble;
        let parts: Vec<&str> = e.members.iter().map(|m| self.predict_hash[m].as_str()).collect();
        let hash = hash_parts(&["fuse", &parts.join(","), &self.cfg.section("ensemble.")]);
        self.fuse_hash = hash.clone();
        let e = e.clone();
        self.unit("fuse", hash, |p| p.fuse_members(&e))
    }

    fn fuse_members(&mut self, e: &EnsembleConfig) -> Result<Vec<PathBuf>> {
        let dir = self.predictions_dir();
        let read = |suffix: &str| -> Result<Vec<Vec<PredictionRecord>>> {
            e.members.iter().map(|m| read_predictions(&dir.join(format!("{m}{suffix}")))).collect()
        };
        let eval_path = |m: &String| dir.join(format!("{m}.csv"));
        if !e.members.iter().all(|m| eval_path(m).exists()) {
            return Err(Error::Input("fusion needs evaluation-fold predictions for every member".into()));
        }
        let members = read(".csv")?;
        let (fused, weights) = match e.method {
            FusionMethod::Average => (average_vote(&members)?, None),
            FusionMethod::Weighted => {
                let w = match &e.weights {
                    Some(w) => w.clone(),
                    None => {
                        let val = read(".val.csv")?;
                        let labels = self.train_labels();
                        fit_weights(&val, &labels)?
                    }
                };
                (weighted_vote(&members, &w)?, Some(w))
            }
        };
        let method = if e.method == FusionMethod::Average { "average" } else { "weighted" };
        let path = dir.join(format!("fusion-{method}.csv"));
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        write_predictions(&fused, &tmp)?;
        fs::rename(&tmp, &path)?;
        let used = EnsembleConfig { weights, ..e.clone() };
        let conf = self.out.join("fuse").join("ensemble.conf");
        atomic_write(&conf, used.to_text().as_bytes())?;
        Ok(vec![path, conf])
    }

    fn train_labels(&self) -> HashMap<String, usize> {
        self.manifest().fold(Fold::Train).iter().map(|c| (c.id.clone(), c.scene)).collect()
    }

    fn eval(&mut self) -> Result<()> {
        let parts: Vec<&str> = self.cfg.systems.iter().map(|s| self.predict_hash[&s.to_string()].as_str()).collect();
        let hash = hash_parts(&["eval", &self.fuse_hash, &parts.join(",")]);
        self.unit("eval", hash, |p| {
            let rows = report_rows(&p.out)?;
            let path = p.out.join("eval").join("summary.txt");
            atomic_write(&path, format_report(&rows).as_bytes())?;
            Ok(vec![path])
        })
    }
}

/// `clip_id  scene  label  fold  city` for every clip.
fn labels_tsv(m: &DatasetManifest) -> String {
    let mut s = String::from("clip_id\tscene\tlabel\tfold\tcity\n");
    for c in &m.clips {
        s.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", c.id, c.scene, m.labels[c.scene], c.fold.name(), c.city));
    }
    s
}
