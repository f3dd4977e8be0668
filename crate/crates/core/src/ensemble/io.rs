use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::PredictionRecord;

/// `clip_id,p0,…,p{K−1}` rows under a header line. Values print in
/// shortest round-trip form, so reading back is exact.
pub fn predictions_to_csv(records: &[PredictionRecord]) -> String {
    let k = records.first().map_or(0, |r| r.probs.len());
    let mut s = String::from("clip_id");
    (0..k).for_each(|i| {
        let _ = write!(s, ",p{i}");
    });
    s.push('\n');
    for r in records {
        s.push_str(&r.clip_id);
        for p in &r.probs {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_predictions(text: &str, classifier: &str, seed: u64) -> Result<Vec<PredictionRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::input("empty prediction file"))?;
    let k = header.split(',').count().saturating_sub(1);
    if !header.starts_with("clip_id") || k == 0 {
        return Err(Error::input(format!("bad prediction header {header:?}")));
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut f = line.split(',');
        let id = f.next().unwrap_or_default().to_string();
        let probs = f
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::input(format!("line {}: bad probability {v:?}", ln + 2))))
            .collect::<Result<Vec<_>>>()?;
        if probs.len() != k {
            return Err(Error::input(format!("line {}: {} probabilities, header has {k}", ln + 2, probs.len())));
        }
        out.push(PredictionRecord { clip_id: id, probs, classifier: classifier.to_string(), seed });
    }
    Ok(out)
}

pub fn write_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    std::fs::write(path, predictions_to_csv(records))?;
    Ok(())
}

/// Reads a prediction file; the classifier name is the file stem.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("member");
    parse_predictions(&text, stem, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMethod {
    Average,
    Weighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub members: Vec<String>,
    pub method: FusionMethod,
    /// Weighted mode; `None` means fit on a labelled holdout.
    pub weights: Option<Vec<f64>>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::config("ensemble has no members"));
        }
        if let Some(w) = &self.weights {
            super::vote::check_weights(w, self.members.len())?;
        }
        Ok(())
    }

    /// `members = a, b`, `method = average | weighted`, optional `weights = …`;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<EnsembleConfig> {
        let mut members = None;
        let mut method = FusionMethod::Average;
        let mut weights = None;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("expected key = value, got {line:?}")))?;
            let list = || v.split(',').map(str::trim).filter(|s| !s.is_empty());
            match k.trim() {
                "members" => members = Some(list().map(String::from).collect()),
                "method" => {
                    method = match v.trim() {
                        "average" => FusionMethod::Average,
                        "weighted" => FusionMethod::Weighted,
                        m => return Err(Error::config(format!("unknown fusion method {m:?}"))),
                    }
                }
                "weights" => {
                    weights = Some(
                        list()
                            .map(|w| w.parse::<f64>().map_err(|_| Error::config(format!("bad weight {w:?}"))))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                other => return Err(Error::config(format!("unknown ensemble key {other:?}"))),
            }
        }
        let cfg = EnsembleConfig { members: members.unwrap_or_default(), method, weights };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "members = {}\nmethod = {}\n",
            self.members.join(", "),
            if self.method == FusionMethod::Average { "average" } else { "weighted" }
        );
        if let Some(w) = &self.weights {
            let _ = writeln!(s, "weights = {}", w.iter().map(f64::to_string).collect::<Vec<_>>().join(", "));
        }
        s
    }
}
