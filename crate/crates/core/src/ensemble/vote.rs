use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::models::{argmax, PredictionRecord};

fn align<'a>(members: &'a [Vec<PredictionRecord>]) -> Result<Vec<Vec<&'a PredictionRecord>>> {
    let first = members.first().ok_or_else(|| Error::config("ensemble needs at least one member"))?;
    let k = first.first().map_or(0, |r| r.probs.len());
    let mut out = Vec::with_capacity(members.len());
    for (mi, m) in members.iter().enumerate() {
        if m.len() != first.len() {
            return Err(Error::Alignment(format!("member {mi} has {} clips, member 0 has {}", m.len(), first.len())));
        }
        let by_id: HashMap<&str, &PredictionRecord> = m.iter().map(|r| (r.clip_id.as_str(), r)).collect();
        if by_id.len() != m.len() {
            return Err(Error::Alignment(format!("member {mi} repeats a clip id")));
        }
        let mut row = Vec::with_capacity(first.len());
        for r in first {
            let other = by_id
                .get(r.clip_id.as_str())
                .ok_or_else(|| Error::Alignment(format!("member {mi} lacks clip {}", r.clip_id)))?;
            if other.probs.len() != k {
                return Err(Error::Alignment(format!("member {mi} clip {} has {} classes, expected {k}", r.clip_id, other.probs.len())));
            }
            row.push(*other);
        }
        out.push(row);
    }
    Ok(out)
}

/// Vectors already summing to one within rounding are left bit-identical.
fn renormalise(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 1e-12 {
        p.iter_mut().for_each(|v| *v /= s);
    }
    p
}

fn fused(clip_id: &str, probs: Vec<f64>) -> PredictionRecord {
    PredictionRecord { clip_id: clip_id.to_string(), probs: renormalise(probs), classifier: "fusion".into(), seed: 0 }
}

/// Per-clip mean of the members' probability vectors.
pub fn average_vote(members: &[Vec<PredictionRecord>]) -> Result<Vec<PredictionRecord>> {
    let aligned = align(members)?;
    let m = aligned.len() as f64;
    Ok((0..aligned[0].len())
        .map(|c| {
            let k = aligned[0][c].probs.len();
            let mut acc = vec![0.0; k];
            for member in &aligned {
                acc.iter_mut().zip(&member[c].probs).for_each(|(a, p)| *a += p);
            }
            fused(&aligned[0][c].clip_id, acc.into_iter().map(|a| a / m).collect())
        })
        .collect())
}

pub fn check_weights(weights: &[f64], members: usize) -> Result<()> {
    if weights.len() != members {
        return Err(Error::config(format!("{} weights for {members} members", weights.len())));
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::config(format!("weights {weights:?} must be finite, ≥ 0 and not all zero")));
    }
    Ok(())
}

/// Per-clip weighted mean; equal weights reduce to [`average_vote`] exactly.
pub fn weighted_vote(members: &[Vec<PredictionRecord>], weights: &[f64]) -> Result<Vec<PredictionRecord>> {
    check_weights(weights, members.len())?;
    if weights.iter().all(|&w| w == weights[0]) {
        return average_vote(members);
    }
    let aligned = align(members)?;
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    Ok((0..aligned[0].len())
        .map(|c| {
            let k = aligned[0][c].probs.len();
            let mut acc = vec![0.0; k];
            for (member, &wi) in aligned.iter().zip(&w) {
                if wi == 0.0 {
                    continue;
                }
                acc.iter_mut().zip(&member[c].probs).for_each(|(a, p)| *a += wi * p);
            }
            fused(&aligned[0][c].clip_id, acc)
        })
        .collect())
}

/// Fraction of records whose argmax matches `labels[clip_id]`.
pub fn holdout_accuracy(records: &[PredictionRecord], labels: &HashMap<String, usize>) -> Result<f64> {
    let mut ok = 0;
    for r in records {
        let l = labels.get(&r.clip_id).ok_or_else(|| Error::Alignment(format!("no holdout label for {}", r.clip_id)))?;
        ok += (argmax(&r.probs) == *l) as usize;
    }
    Ok(ok as f64 / records.len().max(1) as f64)
}

fn nll(records: &[PredictionRecord], labels: &HashMap<String, usize>) -> f64 {
    records.iter().map(|r| -(r.probs[labels[&r.clip_id]].max(1e-300)).ln()).sum::<f64>() / records.len().max(1) as f64
}

/// Grid units per simplex (step 0.05).
const UNITS: usize = 20;

/// Holdout-fitted fusion weights.
///
/// Coordinate ascent over the simplex grid of step 0.05: each move shifts one
/// grid unit between two members and is taken when it raises holdout
/// accuracy, or keeps accuracy and lowers the holdout cross-entropy. Starts
/// are the uniform point and every vertex, so the result is never worse than
/// the best single member. Ties between starts go to the one nearest uniform.
pub fn fit_weights(members: &[Vec<PredictionRecord>], labels: &HashMap<String, usize>) -> Result<Vec<f64>> {
    let m = members.len();
    if m < 2 {
        return Err(Error::config("fit_weights needs at least two members"));
    }
    align(members)?;
    let uniform = vec![1.0 / m as f64; m];
    let mut classes: Vec<usize> = members[0].iter().filter_map(|r| labels.get(&r.clip_id).copied()).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        log::warn!("holdout has {} distinct class(es); using uniform weights", classes.len());
        return Ok(uniform);
    }
    let score = |units: &[f64]| -> Result<(f64, f64)> {
        let fused = weighted_vote(members, units)?;
        Ok((holdout_accuracy(&fused, labels)?, nll(&fused, labels)))
    };
    let better = |a: (f64, f64), b: (f64, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12);

    let mut starts: Vec<Vec<f64>> = vec![vec![UNITS as f64 / m as f64; m]];
    for i in 0..m {
        let mut v = vec![0.0; m];
        v[i] = UNITS as f64;
        starts.push(v);
    }
    let mut best: Option<(Vec<f64>, (f64, f64), f64)> = None;
    for start in starts {
        let mut w = start;
        let mut s = score(&w)?;
        loop {
            let mut step: Option<(Vec<f64>, (f64, f64))> = None;
            for from in 0..m {
                if w[from] < 1.0 - 1e-9 {
                    continue;
                }
                for to in 0..m {
                    if to == from {
                        continue;
                    }
                    let mut c = w.clone();
                    c[from] -= 1.0;
                    c[to] += 1.0;
                    if c.iter().sum::<f64>() <= 0.0 {
                        continue;
                    }
                    let cs = score(&c)?;
                    let target = step.as_ref().map_or(s, |x| x.1);
                    if better(cs, target) {
                        step = Some((c, cs));
                    }
                }
            }
            match step {
                Some((c, cs)) => {
                    w = c;
                    s = cs;
                }
                None => break,
            }
        }
        let total: f64 = w.iter().sum();
        let norm: Vec<f64> = w.iter().map(|x| x / total).collect();
        let dist: f64 = norm.iter().zip(&uniform).map(|(a, b)| (a - b).powi(2)).sum();
        let replace = match &best {
            None => true,
            Some((_, bs, bd)) => better(s, *bs) || (!better(*bs, s) && dist < *bd - 1e-12),
        };
        if replace {
            best = Some((norm, s, dist));
        }
    }
    let (w, s, _) = best.expect("at least one start");
    log::info!("fitted weights {w:?}: holdout accuracy {:.4}", s.0);
    Ok(w)
}
