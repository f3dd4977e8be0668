//! Split, train, generate, screen and accept: the iterative augmentation rounds.

mod ledger;
mod round;
mod split;

pub use ledger::{append_ledger, read_ledger, write_candidate_set, LedgerEntry};
pub use round::{
    apply_decision, run_round, AugmentationRound, AugmentedDatabase, CandidateSource, Decision, FakeRecord, RoundConfig,
};
pub use split::{city_split, imbalance, EXHAUSTIVE_CITIES};

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::{build_dcnn, DcnnConfig, NetworkSpec};
    use crate::tensor::{Float, Tensor};
    use crate::training::{Sample, SampleSet, TrainConfig};

    fn clips(per_city: &[usize]) -> Vec<usize> {
        per_city.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect()
    }

    fn side_sizes(cities: &[usize], a: &[usize]) -> (usize, usize) {
        (a.len(), cities.len() - a.len())
    }

    #[test]
    fn equal_cities_split_evenly() {
        let cities = clips(&[5, 5, 5, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, b) = city_split(&cities, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (10, 10));
        let ca: HashSet<usize> = a.iter().map(|&i| cities[i]).collect();
        assert_eq!(ca.len(), 2);
    }

    #[test]
    fn split_matches_exhaustive_oracle() {
        let sizes = [10, 10, 9, 11];
        let cities = clips(&sizes);
        let (a, _) = city_split(&cities, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (l, r) = side_sizes(&cities, &a);
        let best = (1u64..15).map(|m| imbalance(&sizes, m)).min().unwrap();
        assert_eq!(l.abs_diff(r), best);
        assert!(l.abs_diff(r) <= 2);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.gen_range(2..=7);
            let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..15)).collect();
            let cities = clips(&sizes);
            let (a, b) = city_split(&cities, &mut rng).unwrap();
            let ca: HashSet<usize> = a.iter().map(|&i| cities[i]).collect();
            let cb: HashSet<usize> = b.iter().map(|&i| cities[i]).collect();
            assert!(ca.is_disjoint(&cb) && !ca.is_empty() && !cb.is_empty());
            let ia: HashSet<usize> = a.iter().copied().collect();
            assert!(b.iter().all(|i| !ia.contains(i)) && a.len() + b.len() == cities.len());
            let best = (1u64..(1 << n) - 1).map(|m| imbalance(&sizes, m)).min().unwrap();
            assert_eq!(a.len().abs_diff(b.len()), best);
        }
    }

    #[test]
    fn split_errors_and_greedy_path() {
        assert!(matches!(city_split(&[3, 3, 3], &mut ChaCha8Rng::seed_from_u64(0)), Err(crate::Error::Split(_))));
        let sizes: Vec<usize> = (0..14).map(|i| 3 + i % 4).collect();
        let cities = clips(&sizes);
        let (a, b) = city_split(&cities, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(a.len().abs_diff(b.len()) <= *sizes.iter().max().unwrap());
    }

    fn toy_db(cities: usize, per: usize, sep: f64, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for c in 0..cities {
            for i in 0..per {
                let label = i % 2;
                let centre = if label == 0 { -sep } else { sep };
                let x = Tensor::from_fn(&[1, 2, 16], |_| (centre + rng.sample::<f64, _>(rand_distr::StandardNormal)) as Float);
                samples.push(Sample { id: format!("c{c}-{i}"), x, label, city: c });
            }
        }
        SampleSet::new(samples).unwrap()
    }

    fn tiny_spec() -> NetworkSpec {
        let mut cfg = DcnnConfig::desk(1, 2, 16);
        cfg.conv_pad = 1;
        cfg.fc = [8; 3];
        cfg.n_classes = 2;
        build_dcnn(&cfg).unwrap()
    }

    fn quick_train() -> TrainConfig {
        TrainConfig { max_epochs: 6, patience: 2, batch_size: 8, val_fraction: 0.2, lr: 1e-2, ..TrainConfig::default() }
    }

    #[test]
    fn rounds_follow_the_acceptance_rule() {
        let db = AugmentedDatabase::new(toy_db(4, 6, 0.4, 0));
        let cfg = RoundConfig::new(tiny_spec(), quick_train(), CandidateSource::Noise { scale: 3.0 });
        let r = run_round(&db, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(r.accepted(), r.accuracy_b.unwrap() > r.accuracy_a);
        let tr: HashSet<&String> = r.sub_train.iter().collect();
        assert!(r.sub_test.iter().all(|id| !tr.contains(id)));
        // 25% of the 12 sub-train clips, balanced over 2 scenes
        assert_eq!(r.candidates.len(), 4);
        assert!(r.candidates.iter().all(|c| c.sample.id.starts_with("r1-") && c.round == 1));

        let again = run_round(&db, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(r, again);

        let mut rejected = r.clone();
        rejected.decision = Some(Decision::Rejected);
        let mut d = db.clone();
        assert!(!apply_decision(&mut d, &rejected).unwrap());
        assert_eq!(d, db);

        let mut incomplete = r.clone();
        incomplete.decision = None;
        assert!(matches!(apply_decision(&mut d, &incomplete), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn accepting_adds_candidates_once() {
        let real = toy_db(2, 4, 1.0, 1);
        let mut db = AugmentedDatabase::new(real.clone());
        let fakes: Vec<FakeRecord> = (0..50)
            .map(|i| FakeRecord {
                sample: Sample { id: format!("r3-f{i}"), x: Tensor::zeros(&[1, 2, 16]), label: i % 2, city: 0 },
                round: 3,
                epoch: 40,
            })
            .collect();
        let round = AugmentationRound {
            index: 3,
            sub_train: vec![],
            sub_test: vec![],
            split_hash: String::new(),
            accuracy_a: 0.5,
            candidate_set: "round3-x".into(),
            accuracy_b: Some(0.6),
            decision: Some(Decision::Accepted),
            candidates: fakes,
            diagnostic: None,
        };
        assert!(apply_decision(&mut db, &round).unwrap());
        assert_eq!(db.fakes.len(), 50);
        assert!(!apply_decision(&mut db, &round).unwrap());
        assert_eq!(db.fakes.len(), 50);
        assert_eq!(db.real, real);
        assert_eq!(db.training_set().len(), 58);
    }

    #[test]
    fn gan_rounds_run_end_to_end() {
        let db = AugmentedDatabase::new(toy_db(2, 8, 1.0, 2));
        let spec = tiny_spec();
        let gan = crate::gan::GanConfig {
            layout: crate::gan::GanLayout::Frames,
            mode: crate::gan::GanMode::Acgan,
            channels: 1,
            frames: 2,
            filters: 16,
            widths: vec![2, 4],
            hidden: 8,
            n_classes: 2,
            noise_dim: 8,
            embed_dim: 4,
        };
        let source = CandidateSource::Gan {
            config: gan,
            train: crate::gan::GanTrainConfig { epochs: 4, batch_size: 4, ..Default::default() },
            snapshots: vec![2, 4],
        };
        let mut cfg = RoundConfig::new(spec, quick_train(), source);
        cfg.candidate_fraction = 1.0;
        let r = run_round(&db, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(r.decision.is_some());
        let epochs: HashSet<usize> = r.candidates.iter().map(|c| c.epoch).collect();
        assert_eq!(epochs, HashSet::from([2, 4]));

        let dir = tempfile::tempdir().unwrap();
        let template = crate::features::FeatureMap::new(2, 1, 16, vec![0.0; 32], crate::features::FeatureKind::Scalogram).unwrap();
        let paths = write_candidate_set(dir.path(), &r.candidates, &template).unwrap();
        let back = crate::features::read_cache(&paths[0]).unwrap();
        assert_eq!(back.meta("provenance"), Some("generated"));
        assert_eq!(back.meta("round"), Some("0"));
        assert_eq!(back.to_chw(), r.candidates[0].sample.x);

        let ledger = dir.path().join("ledger.tsv");
        let e = LedgerEntry::from_round(&r, "candidates/round0").unwrap();
        append_ledger(&ledger, &e).unwrap();
        append_ledger(&ledger, &e).unwrap();
        assert_eq!(read_ledger(&ledger).unwrap(), vec![e.clone(), e]);
    }

}
