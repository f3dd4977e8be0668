use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::split::city_split;
use crate::error::{Error, Result};
use crate::gan::{sample_fakes, train_gan, GanConfig, GanTrainConfig, GanTriple};
use crate::models::{Network, NetworkSpec};
use crate::tensor::{Float, Tensor};
use crate::training::{accuracy, stratified_split, train_model, Sample, SampleSet, TrainConfig};

/// A candidate or accepted fake with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FakeRecord {
    pub sample: Sample,
    pub round: usize,
    /// Generator epoch; 0 for injected candidates.
    pub epoch: usize,
}

/// Real clips plus the fakes of accepted rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDatabase {
    pub real: SampleSet,
    pub fakes: Vec<FakeRecord>,
    /// Indices of the rounds whose candidates were added.
    pub accepted_rounds: BTreeSet<usize>,
}

impl AugmentedDatabase {
    pub fn new(real: SampleSet) -> AugmentedDatabase {
        AugmentedDatabase { real, fakes: Vec::new(), accepted_rounds: BTreeSet::new() }
    }

    /// Real clips followed by every accepted fake.
    pub fn training_set(&self) -> SampleSet {
        let mut s = self.real.clone();
        s.samples.extend(self.fakes.iter().map(|f| f.sample.clone()));
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accepted,
    Rejected,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Accepted => "accepted",
            Decision::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationRound {
    pub index: usize,
    pub sub_train: Vec<String>,
    pub sub_test: Vec<String>,
    pub split_hash: String,
    pub accuracy_a: f64,
    pub candidate_set: String,
    /// `None` when no candidate classifier was trained (GAN divergence).
    pub accuracy_b: Option<f64>,
    /// `None` until the round has completed.
    pub decision: Option<Decision>,
    pub candidates: Vec<FakeRecord>,
    pub diagnostic: Option<String>,
}

impl AugmentationRound {
    pub fn accepted(&self) -> bool {
        self.decision == Some(Decision::Accepted)
    }
}

/// Where a round's candidates come from.
#[derive(Clone, Debug)]
pub enum CandidateSource {
    /// A GAN trained on the round's sub-train clips, sampled at several epochs.
    Gan { config: GanConfig, train: GanTrainConfig, snapshots: Vec<usize> },
    /// Real clips kept out of the database (oracle injection).
    Pool(SampleSet),
    /// Gaussian noise maps of the given standard deviation.
    Noise { scale: f64 },
}

#[derive(Clone, Debug)]
pub struct RoundConfig {
    pub classifier: NetworkSpec,
    pub train: TrainConfig,
    /// Shared by classifiers A and B.
    pub seed: u64,
    /// Candidates per round as a fraction of the sub-train size.
    pub candidate_fraction: f64,
    pub source: CandidateSource,
}

impl RoundConfig {
    pub fn new(classifier: NetworkSpec, train: TrainConfig, source: CandidateSource) -> RoundConfig {
        RoundConfig { classifier, train, seed: 0, candidate_fraction: 0.25, source }
    }
}

fn split_hash(train: &[String], test: &[String]) -> String {
    let mut h = Sha256::new();
    for side in [train, test] {
        let mut ids = side.to_vec();
        ids.sort();
        for id in ids {
            h.update(id.as_bytes());
            h.update([0]);
        }
        h.update([1]);
    }
    hex16(&h.finalize())
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn candidate_hash(index: usize, c: &[FakeRecord]) -> String {
    let mut h = Sha256::new();
    for f in c {
        h.update(f.sample.id.as_bytes());
        h.update((f.sample.label as u64).to_le_bytes());
        for v in f.sample.x.data() {
            h.update(v.to_le_bytes());
        }
    }
    format!("round{index}-{}", hex16(&h.finalize()))
}

/// Trains a fresh classifier and returns its accuracy on `test`.
fn fit_and_score(cfg: &RoundConfig, train: &SampleSet, val: &SampleSet, test: &SampleSet) -> Result<f64> {
    let mut net = Network::build(cfg.classifier.clone(), cfg.seed)?;
    train_model(&mut net, train, val, &cfg.train, cfg.seed)?;
    accuracy(&net, test)
}

/// Spreads `total` over `parts` as evenly as possible, larger shares first.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

fn draw_candidates(
    cfg: &RoundConfig,
    index: usize,
    train: &SampleSet,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FakeRecord>> {
    let k = cfg.classifier.n_classes;
    let classes: Vec<usize> = (0..k).collect();
    let record = |sample: Sample, epoch: usize| FakeRecord { sample, round: index, epoch };
    match &cfg.source {
        CandidateSource::Gan { config, train: gcfg, snapshots } => {
            let mut snaps: Vec<usize> = snapshots.iter().copied().filter(|&e| e >= 1 && e <= gcfg.epochs).collect();
            if snaps.is_empty() {
                snaps.push(gcfg.epochs);
            }
            let per_snap = shares(per_class, snaps.len());
            let mut triple = GanTriple::build(config.clone(), rng.gen())?;
            let mut sample_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let mut out = Vec::new();
            train_gan(&mut triple, train, gcfg, rng.gen(), |epoch, t| {
                if let Some(pos) = snaps.iter().position(|&e| e == epoch) {
                    for f in sample_fakes(t, &classes, per_snap[pos], &mut sample_rng, epoch)? {
                        out.push(record(f.sample, f.epoch));
                    }
                }
                Ok(())
            })?;
            Ok(out)
        }
        CandidateSource::Pool(pool) => {
            let mut out = Vec::new();
            for &scene in &classes {
                let mut idx: Vec<usize> = (0..pool.len()).filter(|&i| pool.samples[i].label == scene).collect();
                idx.shuffle(rng);
                out.extend(idx.into_iter().take(per_class).map(|i| record(pool.samples[i].clone(), 0)));
            }
            Ok(out)
        }
        CandidateSource::Noise { scale } => {
            let shape = train.shape;
            let mut out = Vec::new();
            for &scene in &classes {
                for i in 0..per_class {
                    let x = Tensor::from_fn(&shape, |_| (scale * rng.sample::<f64, _>(rand_distr::StandardNormal)) as Float);
                    out.push(record(Sample { id: format!("noise-s{scene}-{i}"), x, label: scene, city: 0 }, 0));
                }
            }
            Ok(out)
        }
    }
}

/// One split / train A / generate / train B / compare round.
///
/// The split is over the real clips' cities; accepted fakes always join the
/// sub-train side so the sub-test side stays real. Validation clips for
/// early stopping come from the real sub-train clips and are the same for
/// both classifiers.
pub fn run_round(db: &AugmentedDatabase, index: usize, cfg: &RoundConfig, rng: &mut ChaCha8Rng) -> Result<AugmentationRound> {
    if db.real.is_empty() {
        return Err(Error::input("augmentation needs a non-empty database"));
    }
    if !(cfg.candidate_fraction > 0.0 && cfg.candidate_fraction.is_finite()) {
        return Err(Error::config(format!("candidate fraction {} must be positive", cfg.candidate_fraction)));
    }
    let (tr, te) = city_split(&db.real.cities(), rng)?;
    let real_train = db.real.subset(&tr);
    let sub_test = db.real.subset(&te);
    let (fit_idx, val_idx) = stratified_split(&real_train.labels(), &real_train.cities(), cfg.train.val_fraction, cfg.seed)?;
    let val = real_train.subset(&val_idx);
    let mut train = real_train.subset(&fit_idx);
    train.samples.extend(db.fakes.iter().map(|f| f.sample.clone()));

    let ids = |s: &SampleSet| s.samples.iter().map(|x| x.id.clone()).collect::<Vec<_>>();
    let mut sub_train_ids = ids(&real_train);
    sub_train_ids.extend(db.fakes.iter().map(|f| f.sample.id.clone()));
    let sub_test_ids = ids(&sub_test);
    let mut round = AugmentationRound {
        index,
        split_hash: split_hash(&sub_train_ids, &sub_test_ids),
        sub_train: sub_train_ids,
        sub_test: sub_test_ids,
        accuracy_a: f64::NAN,
        candidate_set: String::new(),
        accuracy_b: None,
        decision: None,
        candidates: Vec::new(),
        diagnostic: None,
    };

    round.accuracy_a = fit_and_score(cfg, &train, &val, &sub_test)?;
    let total = (cfg.candidate_fraction * (train.len() + val.len()) as f64).round().max(1.0) as usize;
    let per_class = total.div_ceil(cfg.classifier.n_classes);
    let mut candidates = match draw_candidates(cfg, index, &train, per_class, rng) {
        Ok(c) => c,
        Err(Error::Training(msg)) => {
            log::warn!("round {index}: generator failed, round rejected: {msg}");
            round.diagnostic = Some(msg);
            round.decision = Some(Decision::Rejected);
            return Ok(round);
        }
        Err(e) => return Err(e),
    };
    // ids unique across rounds; cities dealt round-robin over training cities
    let cities: Vec<usize> = real_train.cities().into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    for (i, c) in candidates.iter_mut().enumerate() {
        c.sample.id = format!("r{index}-{}", c.sample.id);
        c.sample.city = cities[i % cities.len()];
    }
    let seen: HashSet<&str> = train.samples.iter().chain(&val.samples).map(|s| s.id.as_str()).collect();
    if let Some(dup) = candidates.iter().find(|c| seen.contains(c.sample.id.as_str())) {
        return Err(Error::Contract(format!("candidate id {} collides with a training clip", dup.sample.id)));
    }
    round.candidate_set = candidate_hash(index, &candidates);

    let mut train_b = train.clone();
    train_b.samples.extend(candidates.iter().map(|c| c.sample.clone()));
    let b = fit_and_score(cfg, &train_b, &val, &sub_test)?;
    round.accuracy_b = Some(b);
    round.decision = Some(if b > round.accuracy_a { Decision::Accepted } else { Decision::Rejected });
    round.candidates = candidates;
    log::info!(
        "round {index}: A {:.4} B {b:.4} {}",
        round.accuracy_a,
        round.decision.expect("set").name()
    );
    Ok(round)
}

/// Adds an accepted round's candidates to `db`; returns whether `db` changed.
///
/// Rejected rounds leave `db` untouched. Applying a round twice is a no-op.
pub fn apply_decision(db: &mut AugmentedDatabase, round: &AugmentationRound) -> Result<bool> {
    let Some(decision) = round.decision else {
        return Err(Error::Contract(format!("round {} has not completed", round.index)));
    };
    if decision == Decision::Rejected {
        return Ok(false);
    }
    if db.accepted_rounds.contains(&round.index) {
        log::warn!("round {} already applied; ignoring", round.index);
        return Ok(false);
    }
    db.fakes.extend(round.candidates.iter().cloned());
    db.accepted_rounds.insert(round.index);
    Ok(true)
}
