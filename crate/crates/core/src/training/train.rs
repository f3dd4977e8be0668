use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::data::SampleSet;
use crate::error::{Error, Result};
use crate::models::{argmax, Network, PredictionRecord};
use crate::tensor::{Mode, ParamStore, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Consecutive non-improving validation epochs before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub lr: f64,
    /// Stagnant epochs before the learning rate is multiplied by `lr_factor`.
    pub lr_decay_after: usize,
    pub lr_factor: f64,
    pub lr_floor: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 5,
            adam: AdamConfig::default(),
            lr: 1e-3,
            lr_decay_after: 2,
            lr_factor: 0.5,
            lr_floor: 1e-5,
            batch_size: 32,
            val_fraction: 0.1,
            seeds: vec![0, 1, 2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::config(format!(
                "need 0 < patience ({}) < max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        // lr = 0 is allowed: it freezes the network
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || self.adam.eps <= 0.0 {
            return Err(Error::config("Adam needs β₁, β₂ in [0, 1) and ε > 0"));
        }
        if !(0.0 < self.lr_factor && self.lr_factor <= 1.0) {
            return Err(Error::config(format!("lr factor {} not in (0, 1]", self.lr_factor)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Everything mutable during one training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    pub best_val_loss: f64,
    pub since_improvement: usize,
    pub lr: f64,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
}

/// Clip batches in shuffled order; a trailing single clip joins the previous
/// batch so batch statistics never see one item.
pub(crate) fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

/// Mean scene cross-entropy over `set` in eval mode.
pub fn mean_loss(net: &Network, set: &SampleSet, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels, cities) = set.batch(chunk);
        let tape = Tape::new();
        let f = net.forward(&tape, &x, Mode::Eval, &mut rng)?;
        let (scene, _) = net.loss_parts(&f, &labels, net.spec.city.is_some().then_some(&cities[..]))?;
        total += scene.item_f64() * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

fn train_epoch(net: &mut Network, set: &SampleSet, cfg: &TrainConfig, st: &mut TrainState) -> Result<f64> {
    let wants_city = net.spec.city.is_some();
    let mut total = 0.0;
    for b in batches(set.len(), cfg.batch_size, &mut st.rng) {
        let (x, labels, cities) = set.batch(&b);
        let tape = Tape::new();
        let f = net.forward(&tape, &x, Mode::Train, &mut st.rng)?;
        let loss = net.loss(&f, &labels, wants_city.then_some(&cities[..]))?;
        let lv = loss.item_f64();
        if !lv.is_finite() {
            return Err(Error::Training(format!("non-finite training loss at epoch {}", st.epoch)));
        }
        total += lv * b.len() as f64;
        tape.backward(&loss)?;
        net.store.zero_grad();
        net.store.accumulate_grads(&tape);
        let bn = f.bn;
        drop(tape);
        if st.lr > 0.0 {
            adam_step(&mut net.store, &mut st.adam, &cfg.adam, st.lr)?;
            net.apply_bn(&bn);
        }
    }
    Ok(total / set.len() as f64)
}

/// Adam training with validation early stopping; the best-validation
/// parameters are restored before returning.
///
/// After `lr_decay_after` consecutive non-improving epochs the learning rate
/// is scaled by `lr_factor` (not below `lr_floor`), again after every further
/// `lr_decay_after`. With `lr = 0` nothing changes, batch-norm running
/// statistics included.
pub fn train_model(net: &mut Network, train: &SampleSet, val: &SampleSet, cfg: &TrainConfig, seed: u64) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::input("training and validation sets must be non-empty"));
    }
    let train_ids: std::collections::HashSet<&str> = train.samples.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = val.samples.iter().find(|s| train_ids.contains(s.id.as_str())) {
        return Err(Error::input(format!("clip {} is in both training and validation sets", s.id)));
    }
    let mut st = TrainState {
        epoch: 0,
        best_val_loss: f64::INFINITY,
        since_improvement: 0,
        lr: cfg.lr,
        adam: AdamState::new(&net.store),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut best: ParamStore = net.store.clone();
    let mut hist = History { epochs: Vec::new(), best_epoch: 0, best_val_loss: f64::INFINITY, stopped_early: false };
    while st.epoch < cfg.max_epochs {
        st.epoch += 1;
        let lr_used = st.lr;
        let train_loss = train_epoch(net, train, cfg, &mut st)?;
        let val_loss = mean_loss(net, val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {}", st.epoch)));
        }
        hist.epochs.push(EpochRecord { epoch: st.epoch, train_loss, val_loss, lr: lr_used });
        log::debug!("epoch {} train {train_loss:.4} val {val_loss:.4} lr {lr_used:e}", st.epoch);
        if val_loss < st.best_val_loss {
            st.best_val_loss = val_loss;
            st.since_improvement = 0;
            best.copy_values_from(&net.store)?;
            hist.best_epoch = st.epoch;
        } else {
            st.since_improvement += 1;
            if st.since_improvement >= cfg.patience {
                hist.stopped_early = true;
                break;
            }
            if st.since_improvement % cfg.lr_decay_after == 0 && st.lr > 0.0 {
                st.lr = (st.lr * cfg.lr_factor).max(cfg.lr_floor);
            }
        }
    }
    net.store.copy_values_from(&best)?;
    hist.best_val_loss = st.best_val_loss;
    Ok(hist)
}

/// Accuracy, `K×K` confusion (rows true, columns predicted) and per-clip records.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub records: Vec<PredictionRecord>,
}

pub fn confusion_from(records: &[PredictionRecord], labels: &[usize], k: usize) -> Evaluation {
    let mut confusion = vec![vec![0; k]; k];
    for (r, &l) in records.iter().zip(labels) {
        confusion[l][r.label()] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy = if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 };
    Evaluation { accuracy, confusion, records: records.to_vec() }
}

pub fn predict_set(net: &Network, set: &SampleSet, classifier: &str, seed: u64) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(32) {
        let (x, _, _) = set.batch(chunk);
        for (&i, probs) in chunk.iter().zip(net.predict(&x)?) {
            out.push(PredictionRecord { clip_id: set.samples[i].id.clone(), probs, classifier: classifier.to_string(), seed });
        }
    }
    Ok(out)
}

pub fn evaluate(net: &Network, set: &SampleSet) -> Result<Evaluation> {
    let records = predict_set(net, set, &net.spec.name, 0)?;
    Ok(confusion_from(&records, &set.labels(), net.spec.n_classes))
}

/// Training accuracy by argmax of eval-mode predictions.
pub fn accuracy(net: &Network, set: &SampleSet) -> Result<f64> {
    let recs = predict_set(net, set, "", 0)?;
    let ok = recs.iter().zip(&set.samples).filter(|(r, s)| argmax(&r.probs) == s.label).count();
    Ok(ok as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_dcnn, DcnnConfig};
    use crate::tensor::gradcheck::random_tensor;
    use crate::training::Sample;

    fn toy(n: usize, seed: u64, offset: usize) -> SampleSet {
        let samples = (0..n)
            .map(|i| {
                let label = i % 2;
                let mut x = random_tensor(&[1, 2, 16], 0.3, seed + i as u64);
                x.data_mut().iter_mut().take(16).for_each(|v| *v += if label == 0 { 1.0 } else { -1.0 });
                Sample { id: format!("c{}", i + offset), x, label, city: 0 }
            })
            .collect();
        SampleSet::new(samples).unwrap()
    }

    fn net() -> Network {
        let mut cfg = DcnnConfig::desk(1, 2, 16);
        cfg.conv_pad = 1;
        cfg.fc = [8; 3];
        cfg.n_classes = 2;
        Network::build(build_dcnn(&cfg).unwrap(), 1).unwrap()
    }

    #[test]
    fn frozen_network_stops_at_epoch_six() {
        let mut n = net();
        let before = n.store.flat_values();
        let cfg = TrainConfig { lr: 0.0, batch_size: 4, ..TrainConfig::default() };
        let h = train_model(&mut n, &toy(8, 0, 0), &toy(4, 50, 100), &cfg, 3).unwrap();
        assert_eq!(h.epochs.len(), 6);
        assert!(h.stopped_early);
        assert_eq!(h.best_epoch, 1);
        assert_eq!(before, n.store.flat_values());
    }

    #[test]
    fn city_adversary_validates_on_scene_loss() {
        let mut cfg = DcnnConfig::desk(1, 2, 16);
        cfg.conv_pad = 1;
        cfg.fc = [8; 3];
        cfg.n_classes = 2;
        let spec = crate::models::attach_city_adversary(build_dcnn(&cfg).unwrap(), 2, 4, 0.1).unwrap();
        let mut n = Network::build(spec, 1).unwrap();
        let with_cities = |s: SampleSet| SampleSet::new(s.samples.into_iter().enumerate().map(|(i, x)| Sample { city: i % 2, ..x }).collect()).unwrap();
        let (train, val) = (with_cities(toy(8, 0, 0)), with_cities(toy(4, 50, 100)));
        let cfg = TrainConfig { max_epochs: 3, patience: 2, batch_size: 4, ..TrainConfig::default() };
        let h = train_model(&mut n, &train, &val, &cfg, 3).unwrap();
        assert!(h.epochs.iter().all(|e| e.val_loss.is_finite()));
        assert_eq!(h.best_val_loss, mean_loss(&n, &val, 4).unwrap());
    }

    #[test]
    fn bookkeeping_and_determinism() {
        let cfg = TrainConfig { max_epochs: 12, batch_size: 4, lr: 3e-3, ..TrainConfig::default() };
        let run = || {
            let mut n = net();
            let h = train_model(&mut n, &toy(8, 0, 0), &toy(4, 50, 100), &cfg, 3).unwrap();
            (h, n.store.flat_values())
        };
        let (h, w) = run();
        let min = h.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_val_loss, min);
        assert_eq!(h.epochs[h.best_epoch - 1].val_loss, min);
        assert!(h.epochs.len() <= 12);
        let mut stagnant = 0;
        let mut best = f64::INFINITY;
        for r in &h.epochs {
            if r.val_loss < best {
                best = r.val_loss;
                stagnant = 0;
            } else {
                stagnant += 1;
            }
            assert!(stagnant <= 5);
        }
        assert_eq!(h.stopped_early, stagnant == 5);
        assert_eq!(run(), (h.clone(), w));
        assert!(h.to_csv().starts_with("epoch,train_loss,val_loss,lr\n1,"));
    }

    #[test]
    fn overlapping_or_empty_sets_rejected() {
        let mut n = net();
        let cfg = TrainConfig::default();
        assert!(matches!(train_model(&mut n, &toy(4, 0, 0), &toy(2, 0, 0), &cfg, 0), Err(Error::Input(_))));
        let empty = SampleSet { shape: [1, 2, 16], samples: Vec::new() };
        assert!(matches!(train_model(&mut n, &toy(4, 0, 0), &empty, &cfg, 0), Err(Error::Input(_))));
        assert!(TrainConfig { patience: 200, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn confusion_bookkeeping() {
        let rec = |l: usize, k: usize| {
            let mut p = vec![0.0; k];
            p[l] = 1.0;
            PredictionRecord { clip_id: String::new(), probs: p, classifier: String::new(), seed: 0 }
        };
        let labels: Vec<usize> = (0..30).map(|i| i % 10).collect();
        let perfect: Vec<_> = labels.iter().map(|&l| rec(l, 10)).collect();
        let e = confusion_from(&perfect, &labels, 10);
        assert_eq!(e.accuracy, 1.0);
        assert!((0..10).all(|i| e.confusion[i][i] == 3));
        let constant: Vec<_> = labels.iter().map(|_| rec(4, 10)).collect();
        let e = confusion_from(&constant, &labels, 10);
        assert!((e.accuracy - 0.1).abs() < 1e-12);
        assert!(e.confusion.iter().all(|row| row.iter().sum::<usize>() == 3));
    }
}
