//! Writes the synthetic mini dataset and reads its manifest back.

use std::collections::BTreeMap;

use scenegan::dataset::{make_mini_dataset, parse_manifest, Fold, MiniConfig};

fn main() -> scenegan::Result<()> {
    let dir = std::env::temp_dir().join("scenegan-mini");
    let cfg = MiniConfig { sample_rate: 8000, duration_s: 1.0, ..MiniConfig::default() };
    make_mini_dataset(&dir, &cfg)?;
    let m = parse_manifest(&dir.join("manifest.tsv"))?;
    let mut per: BTreeMap<(String, &str), usize> = BTreeMap::new();
    for c in &m.clips {
        let fold = if c.fold == Fold::Train { "train" } else { "eval" };
        *per.entry((c.city.clone(), fold)).or_default() += 1;
    }
    println!("{} clips, {} scenes", m.clips.len(), m.labels.len());
    for ((city, fold), n) in per {
        println!("{city:>10} {fold:<5} {n}");
    }
    for d in &m.diagnostics {
        println!("skipped: {d}");
    }
    Ok(())
}
