//! Soft-voting fusion of classifier prediction sets.

mod io;
mod vote;

pub use io::{parse_predictions, predictions_to_csv, read_predictions, write_predictions, EnsembleConfig, FusionMethod};
pub use vote::{average_vote, check_weights, fit_weights, holdout_accuracy, weighted_vote};

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::{argmax, PredictionRecord};
    use crate::Error;

    fn rec(id: &str, probs: &[f64]) -> PredictionRecord {
        PredictionRecord { clip_id: id.into(), probs: probs.to_vec(), classifier: "m".into(), seed: 0 }
    }

    fn random_member(rng: &mut ChaCha8Rng, clips: usize, k: usize) -> Vec<PredictionRecord> {
        (0..clips)
            .map(|c| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                rec(&format!("c{c}"), &raw.iter().map(|x| x / s).collect::<Vec<_>>())
            })
            .collect()
    }

    #[test]
    fn average_of_opposites_ties_low() {
        let f = average_vote(&[vec![rec("a", &[1.0, 0.0])], vec![rec("a", &[0.0, 1.0])]]).unwrap();
        assert_eq!(f[0].probs, vec![0.5, 0.5]);
        assert_eq!(f[0].label(), 0);
    }

    #[test]
    fn votes_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let members: Vec<_> = (0..3).map(|_| random_member(&mut rng, 12, 10)).collect();
        let w = [0.2, 0.5, 1.3];
        let fa = average_vote(&members).unwrap();
        let fw = weighted_vote(&members, &w).unwrap();
        for c in 0..12 {
            let mut oa = [0.0f64; 10];
            let mut ow = [0.0f64; 10];
            for k in 0..10 {
                for (m, wi) in members.iter().zip(w) {
                    oa[k] += m[c].probs[k] / 3.0;
                    ow[k] += wi * m[c].probs[k] / 2.0;
                }
            }
            for k in 0..10 {
                assert!((fa[c].probs[k] - oa[k]).abs() < 1e-9);
                assert!((fw[c].probs[k] - ow[k]).abs() < 1e-9);
            }
        }
        assert_eq!(weighted_vote(&members, &[0.7; 3]).unwrap(), fa);
        let sel = weighted_vote(&members, &[0.0, 1.0, 0.0]).unwrap();
        for (s, m) in sel.iter().zip(&members[1]) {
            assert_eq!(s.probs, m.probs);
        }
    }

    #[test]
    fn misaligned_members_rejected() {
        let a = vec![rec("a", &[1.0, 0.0])];
        let b = vec![rec("b", &[1.0, 0.0])];
        assert!(matches!(average_vote(&[a.clone(), b]), Err(Error::Alignment(_))));
        assert!(matches!(weighted_vote(&[a.clone(), a.clone()], &[1.0]), Err(Error::Config(_))));
        assert!(weighted_vote(&[a.clone(), a], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn fit_weights_properties() {
        let labels: HashMap<String, usize> = (0..20).map(|c| (format!("c{c}"), c % 4)).collect();
        let onehot = |l: usize| {
            let mut p = vec![0.05; 4];
            p[l] = 0.85;
            p
        };
        let right: Vec<_> = (0..20).map(|c| rec(&format!("c{c}"), &onehot(c % 4))).collect();
        let wrong: Vec<_> = (0..20).map(|c| rec(&format!("c{c}"), &onehot((c + 1) % 4))).collect();
        let members = vec![wrong.clone(), right.clone(), wrong];
        let w = fit_weights(&members, &labels).unwrap();
        assert!(w[1] >= w[0] && w[1] >= w[2], "{w:?}");
        let acc = holdout_accuracy(&weighted_vote(&members, &w).unwrap(), &labels).unwrap();
        assert_eq!(acc, 1.0);

        let same = fit_weights(&[right.clone(), right.clone(), right.clone()], &labels).unwrap();
        assert!(same.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12), "{same:?}");

        let one_class: HashMap<String, usize> = (0..20).map(|c| (format!("c{c}"), 0)).collect();
        assert_eq!(fit_weights(&[right.clone(), right], &one_class).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn fitted_never_below_best_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let labels: HashMap<String, usize> = (0..30).map(|c| (format!("c{c}"), rng.gen_range(0..5))).collect();
            let members: Vec<_> = (0..3).map(|_| random_member(&mut rng, 30, 5)).collect();
            let best = members.iter().map(|m| holdout_accuracy(m, &labels).unwrap()).fold(0.0, f64::max);
            let w = fit_weights(&members, &labels).unwrap();
            let fused = holdout_accuracy(&weighted_vote(&members, &w).unwrap(), &labels).unwrap();
            assert!(fused >= best, "{fused} < {best}");
            assert!(fused >= holdout_accuracy(&average_vote(&members).unwrap(), &labels).unwrap());
        }
    }

    #[test]
    fn csv_and_config_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_member(&mut rng, 5, 10);
        let back = parse_predictions(&predictions_to_csv(&m), "m", 0).unwrap();
        assert_eq!(back, m);
        let cfg = EnsembleConfig::parse("# fusion\nmembers = a.csv, b.csv\nmethod = weighted\nweights = 0.25, 0.75\n").unwrap();
        assert_eq!(cfg.method, FusionMethod::Weighted);
        assert_eq!(EnsembleConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(EnsembleConfig::parse("members = a\nweights = 1, 2").is_err());
        assert!(EnsembleConfig::parse("method = vote").is_err());
        assert_eq!(argmax(&back[0].probs), m[0].label());
    }
}
