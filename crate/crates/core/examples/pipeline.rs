//! Full run of a pipeline config (default `configs/tiny.conf`) into a
//! scratch directory, then the results table.

use std::path::PathBuf;

use scenegan::pipeline::{report, run_pipeline, PipelineConfig, Stage};

fn main() -> scenegan::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let conf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("configs/tiny.conf"));
    let out = std::env::temp_dir().join("scenegan-pipeline");
    let cfg = PipelineConfig::load(&conf)?.with_override("out", &out.display().to_string())?;
    for rec in run_pipeline(&cfg, Stage::Eval)? {
        println!("{:<48} {}", rec.label, if rec.skipped { "up to date" } else { "ran" });
    }
    print!("{}", report(&out)?);
    Ok(())
}
