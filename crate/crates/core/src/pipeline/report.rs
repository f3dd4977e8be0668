//! Accuracy table over a results directory.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::ensemble::{holdout_accuracy, read_predictions};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub fusion: bool,
    pub clips: usize,
    /// `None` when some clip has no label.
    pub accuracy: Option<f64>,
}

/// Labels of `labels.tsv` under `dir`, or `None` when the file is absent.
pub fn read_labels(dir: &Path) -> Result<Option<HashMap<String, usize>>> {
    let path = dir.join("labels.tsv");
    let Ok(text) = fs::read_to_string(&path) else { return Ok(None) };
    let mut out = HashMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut f = line.split('\t');
        let (Some(id), Some(scene)) = (f.next(), f.next()) else {
            return Err(Error::Ingestion(format!("{}: bad row {line:?}", path.display())));
        };
        let scene = scene.parse().map_err(|_| Error::Ingestion(format!("{}: bad scene in {line:?}", path.display())))?;
        out.insert(id.to_string(), scene);
    }
    Ok(Some(out))
}

/// One row per `predictions/*.csv`, systems by name then fusion rows.
/// Validation-clip files (`*.val.csv`) are not reported.
pub fn report_rows(dir: &Path) -> Result<Vec<ReportRow>> {
    let labels = read_labels(dir)?.unwrap_or_default();
    let pred_dir = dir.join("predictions");
    let mut files: Vec<_> = fs::read_dir(&pred_dir)
        .map_err(|e| Error::Input(format!("{}: {e}", pred_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(".val.csv")
        })
        .collect();
    if files.is_empty() {
        return Err(Error::Input(format!("no prediction files in {}", pred_dir.display())));
    }
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        let recs = read_predictions(&f)?;
        let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let labelled = !recs.is_empty() && recs.iter().all(|r| labels.contains_key(&r.clip_id));
        let accuracy = if labelled { Some(holdout_accuracy(&recs, &labels)?) } else { None };
        rows.push(ReportRow { fusion: name.starts_with("fusion-"), name, clips: recs.len(), accuracy });
    }
    rows.sort_by_key(|r| r.fusion);
    Ok(rows)
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$}  {:>5}  {:>8}\n", "system", "clips", "accuracy");
    for r in rows {
        let acc = r.accuracy.map_or_else(|| "n/a".to_string(), |a| format!("{:.2}%", 100.0 * a));
        s.push_str(&format!("{:<width$}  {:>5}  {:>8}\n", r.name, r.clips, acc));
    }
    s
}

/// Formatted table for a results directory.
pub fn report(dir: &Path) -> Result<String> {
    Ok(format_report(&report_rows(dir)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{average_vote, write_predictions};
    use crate::models::PredictionRecord;

    fn rec(id: &str, p: f64) -> PredictionRecord {
        PredictionRecord { clip_id: id.into(), probs: vec![p, 1.0 - p], classifier: String::new(), seed: 0 }
    }

    fn setup(labels: bool) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let pd = dir.path().join("predictions");
        fs::create_dir_all(&pd).unwrap();
        let a = vec![rec("x", 0.9), rec("y", 0.6), rec("z", 0.2)];
        let b = vec![rec("x", 0.7), rec("y", 0.1), rec("z", 0.1)];
        write_predictions(&a, &pd.join("fbank-left-right-none-fcnn.csv")).unwrap();
        write_predictions(&b, &pd.join("scalogram-left-right-none-dcnn.csv")).unwrap();
        write_predictions(&a, &pd.join("fbank-left-right-none-fcnn.val.csv")).unwrap();
        write_predictions(&average_vote(&[a, b]).unwrap(), &pd.join("fusion-average.csv")).unwrap();
        if labels {
            fs::write(dir.path().join("labels.tsv"), "clip_id\tscene\nx\t0\ny\t1\nz\t1\n").unwrap();
        }
        dir
    }

    #[test]
    fn two_systems_and_fusion() {
        let dir = setup(true);
        let rows = report_rows(dir.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[2].fusion && !rows[0].fusion);
        assert_eq!(rows[0].accuracy, Some(2.0 / 3.0));
        assert_eq!(rows[1].accuracy, Some(1.0));
        let text = format_report(&rows);
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("66.67%"), "{text}");
    }

    #[test]
    fn missing_labels_read_na() {
        let dir = setup(false);
        let text = report(dir.path()).unwrap();
        assert_eq!(text.matches("n/a").count(), 3, "{text}");
    }
}
