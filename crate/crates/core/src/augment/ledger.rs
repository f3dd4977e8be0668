use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::round::{AugmentationRound, FakeRecord};
use crate::error::{Error, Result};
use crate::features::{write_cache, FeatureMap};
use crate::gan::FakeSample;

/// One line of the round ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub round: usize,
    pub split_hash: String,
    pub accuracy_a: f64,
    pub accuracy_b: Option<f64>,
    pub decision: String,
    pub candidates: String,
}

impl LedgerEntry {
    pub fn from_round(r: &AugmentationRound, candidate_path: &str) -> Result<LedgerEntry> {
        let decision = r
            .decision
            .ok_or_else(|| Error::Contract(format!("round {} has not completed", r.index)))?;
        Ok(LedgerEntry {
            round: r.index,
            split_hash: r.split_hash.clone(),
            accuracy_a: r.accuracy_a,
            accuracy_b: r.accuracy_b,
            decision: decision.name().to_string(),
            candidates: candidate_path.to_string(),
        })
    }

    /// Tab-separated `key=value` fields.
    pub fn to_line(&self) -> String {
        let b = self.accuracy_b.map_or_else(|| "none".to_string(), |b| b.to_string());
        format!(
            "round={}\tsplit={}\tacc_a={}\tacc_b={b}\tdecision={}\tcandidates={}",
            self.round, self.split_hash, self.accuracy_a, self.decision, self.candidates
        )
    }

    pub fn parse(line: &str) -> Result<LedgerEntry> {
        let bad = |why: &str| Error::Ingestion(format!("ledger line {line:?}: {why}"));
        let field = |key: &str| -> Result<&str> {
            line.split('\t')
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let num = |key: &str| -> Result<f64> { field(key)?.parse().map_err(|_| bad(&format!("bad {key}"))) };
        Ok(LedgerEntry {
            round: field("round")?.parse().map_err(|_| bad("bad round"))?,
            split_hash: field("split")?.to_string(),
            accuracy_a: num("acc_a")?,
            accuracy_b: match field("acc_b")? {
                "none" => None,
                _ => Some(num("acc_b")?),
            },
            decision: field("decision")?.to_string(),
            candidates: field("candidates")?.to_string(),
        })
    }
}

/// Appends one record; earlier lines are never rewritten.
pub fn append_ledger(path: &Path, entry: &LedgerEntry) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", entry.to_line())?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(LedgerEntry::parse).collect()
}

/// Writes each candidate as a feature cache `<id>.scnf` in `dir`, with
/// provenance metadata; returns the paths in candidate order.
pub fn write_candidate_set(dir: &Path, candidates: &[FakeRecord], template: &FeatureMap) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(candidates.len());
    for c in candidates {
        let mut fm = FakeSample { sample: c.sample.clone(), epoch: c.epoch }.to_feature_map(template)?;
        fm.set_meta("round", c.round.to_string());
        fm.set_meta("clip_id", c.sample.id.clone());
        fm.set_meta("city", c.sample.city.to_string());
        let p = dir.join(format!("{}.scnf", c.sample.id));
        write_cache(&fm, &p)?;
        paths.push(p);
    }
    Ok(paths)
}
