use std::fs;
use std::path::{Path, PathBuf};

use super::wav::wav_duration;
use crate::error::{Error, Result};

/// Scene labels of the DCASE 2019 task 1A set.
pub const SCENES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Real,
    Generated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fold {
    Train,
    Evaluate,
}

impl Fold {
    pub fn name(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Evaluate => "evaluate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    /// File stem, unique within a manifest.
    pub id: String,
    pub path: PathBuf,
    /// Index into the manifest's label set.
    pub scene: usize,
    pub city: String,
    pub provenance: Provenance,
    /// Seconds, from the WAV header; 0 when the file was not readable at parse time.
    pub duration: f64,
    pub fold: Fold,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetManifest {
    pub clips: Vec<Clip>,
    pub labels: Vec<String>,
    /// One line per rejected row.
    pub diagnostics: Vec<String>,
}

/// City tag: the second hyphen-separated token of the file stem.
pub fn city_from_filename(path: &str) -> Option<String> {
    let stem = Path::new(path).file_stem()?.to_str()?;
    let city = stem.split('-').nth(1)?;
    (!city.is_empty()).then(|| city.to_string())
}

impl DatasetManifest {
    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn fold(&self, fold: Fold) -> Vec<&Clip> {
        self.clips.iter().filter(|c| c.fold == fold).collect()
    }

    pub fn cities(&self) -> Vec<String> {
        let mut c: Vec<String> = self.clips.iter().map(|c| c.city.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Tab-separated `path, scene, fold` with a header row.
    pub fn to_tsv(&self, root: &Path) -> String {
        let mut s = String::from("filename\tscene_label\tfold\n");
        for c in &self.clips {
            let rel = c.path.strip_prefix(root).unwrap_or(&c.path);
            s.push_str(&format!("{}\t{}\t{}\n", rel.display(), self.labels[c.scene], c.fold.name()));
        }
        s
    }
}

/// Parses a tab-separated manifest of `(relative path, scene[, fold])` rows.
///
/// Paths resolve against the manifest's directory. A header row is
/// optional. Malformed rows are itemised in `diagnostics`.
pub fn parse_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let root = path.parent().unwrap_or(Path::new("."));
    parse_manifest_str(&text, root)
}

pub fn parse_manifest_str(text: &str, root: &Path) -> Result<DatasetManifest> {
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if i == 0 && cols.first() == Some(&"filename") {
            continue;
        }
        if cols.len() < 2 || cols.len() > 3 || cols[0].is_empty() || cols[1].is_empty() {
            diagnostics.push(format!("line {}: expected 2 or 3 tab-separated fields", i + 1));
            continue;
        }
        let Some(city) = city_from_filename(cols[0]) else {
            diagnostics.push(format!("line {}: no city token in {:?}", i + 1, cols[0]));
            continue;
        };
        let fold = match cols.get(2).copied() {
            None | Some("train") => Fold::Train,
            Some("evaluate") | Some("test") => Fold::Evaluate,
            Some(other) => {
                diagnostics.push(format!("line {}: unknown fold {other:?}", i + 1));
                continue;
            }
        };
        rows.push((cols[0].to_string(), cols[1].to_string(), city, fold));
    }
    if rows.is_empty() {
        return Err(Error::Ingestion("manifest has no valid rows".into()));
    }
    let labels: Vec<String> = if rows.iter().all(|r| SCENES.contains(&r.1.as_str())) {
        SCENES.iter().map(|s| s.to_string()).collect()
    } else {
        let mut l: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
        l.sort();
        l.dedup();
        l
    };
    let clips = rows
        .into_iter()
        .map(|(rel, scene, city, fold)| {
            let path = root.join(&rel);
            let id = Path::new(&rel).file_stem().and_then(|s| s.to_str()).unwrap_or(&rel).to_string();
            Clip {
                id,
                duration: wav_duration(&path).unwrap_or(0.0),
                path,
                scene: labels.iter().position(|l| *l == scene).expect("label collected"),
                city,
                provenance: Provenance::Real,
                fold,
            }
        })
        .collect();
    Ok(DatasetManifest { clips, labels, diagnostics })
}
