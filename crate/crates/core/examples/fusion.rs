//! Average, weighted and fitted-weight fusion of three noisy members.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenegan::ensemble::{average_vote, fit_weights, holdout_accuracy, weighted_vote};
use scenegan::models::PredictionRecord;

/// Probability `skill` on the true class for a fraction `hit` of the clips.
fn member(labels: &[usize], hit: f64, rng: &mut ChaCha8Rng) -> Vec<PredictionRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(c, &l)| {
            let target = if rng.gen_bool(hit) { l } else { rng.gen_range(0..10) };
            let mut probs: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..0.1)).collect();
            probs[target] += 0.5;
            let s: f64 = probs.iter().sum();
            PredictionRecord { clip_id: format!("clip{c}"), probs: probs.iter().map(|p| p / s).collect(), classifier: String::new(), seed: 0 }
        })
        .collect()
}

fn main() -> scenegan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let labels: Vec<usize> = (0..200).map(|i| i % 10).collect();
    let truth: HashMap<String, usize> = labels.iter().enumerate().map(|(c, &l)| (format!("clip{c}"), l)).collect();
    let members: Vec<_> = [0.55, 0.65, 0.75].iter().map(|&h| member(&labels, h, &mut rng)).collect();
    for (i, m) in members.iter().enumerate() {
        println!("member {i}: {:.1}%", 100.0 * holdout_accuracy(m, &truth)?);
    }
    println!("average: {:.1}%", 100.0 * holdout_accuracy(&average_vote(&members)?, &truth)?);
    println!("weighted 1:1:2: {:.1}%", 100.0 * holdout_accuracy(&weighted_vote(&members, &[1.0, 1.0, 2.0])?, &truth)?);
    let w = fit_weights(&members, &truth)?;
    println!("fitted {w:.2?}: {:.1}%", 100.0 * holdout_accuracy(&weighted_vote(&members, &w)?, &truth)?);
    Ok(())
}
