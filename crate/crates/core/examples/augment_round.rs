//! One augmentation round with held-out real clips as candidates and one with
//! noise, each logged to a round ledger.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenegan::augment::{append_ledger, apply_decision, read_ledger, run_round, AugmentedDatabase, CandidateSource, LedgerEntry, RoundConfig};
use scenegan::models::{build_dcnn, DcnnConfig};
use scenegan::tensor::{Float, Tensor};
use scenegan::training::{Sample, SampleSet, TrainConfig};

fn toy(per_city: usize, sep: f64, rng: &mut ChaCha8Rng, tag: &str) -> SampleSet {
    let mut samples = Vec::new();
    for city in 0..4 {
        for i in 0..per_city {
            let label = i % 2;
            let centre = if label == 0 { -sep } else { sep };
            let x = Tensor::from_fn(&[1, 2, 16], |_| (centre + rng.sample::<f64, _>(rand_distr::StandardNormal)) as Float);
            samples.push(Sample { id: format!("{tag}{city}-{i}"), x, label, city });
        }
    }
    SampleSet::new(samples).unwrap()
}

fn main() -> scenegan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut db = AugmentedDatabase::new(toy(12, 0.25, &mut rng, "c"));
    let pool = toy(48, 0.25, &mut rng, "p");

    let mut cfg = DcnnConfig::desk(1, 2, 16);
    cfg.conv_pad = 1;
    cfg.fc = [8; 3];
    cfg.n_classes = 2;
    let train = TrainConfig { max_epochs: 60, patience: 8, batch_size: 8, val_fraction: 0.2, lr: 1e-2, ..TrainConfig::default() };

    let ledger = std::env::temp_dir().join("scenegan-ledger.tsv");
    let _ = std::fs::remove_file(&ledger);
    for (index, source) in [CandidateSource::Pool(pool), CandidateSource::Noise { scale: 3.0 }].into_iter().enumerate() {
        let mut rc = RoundConfig::new(build_dcnn(&cfg)?, train.clone(), source);
        rc.candidate_fraction = 4.0;
        rc.seed = 1;
        let round = run_round(&db, index, &rc, &mut ChaCha8Rng::seed_from_u64(1))?;
        append_ledger(&ledger, &LedgerEntry::from_round(&round, &format!("round{index}"))?)?;
        apply_decision(&mut db, &round)?;
        println!(
            "round {index}: A {:.3} B {:.3} -> {} ({} fakes in database)",
            round.accuracy_a,
            round.accuracy_b.unwrap_or(f64::NAN),
            round.decision.unwrap().name(),
            db.fakes.len()
        );
    }
    println!("{} ledger rows in {}", read_ledger(&ledger)?.len(), ledger.display());
    Ok(())
}
