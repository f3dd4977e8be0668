//! Trains a narrow DCNN on FBank maps of the mini dataset, checkpoints it and
//! scores the evaluation clips from the reloaded checkpoint.

use scenegan::dataset::{make_mini_dataset, Fold, MiniConfig};
use scenegan::features::{extract_fbank, FbankConfig};
use scenegan::models::{build_dcnn, load_checkpoint, save_checkpoint, DcnnConfig, Network};
use scenegan::training::{accuracy, stratified_split, train_model, Sample, SampleSet, Standardizer, TrainConfig};

fn main() -> scenegan::Result<()> {
    let dir = std::env::temp_dir().join("scenegan-train");
    let mini = MiniConfig { sample_rate: 8000, duration_s: 2.0, ..MiniConfig::default() };
    let manifest = make_mini_dataset(&dir, &mini)?;
    let fb = FbankConfig { sample_rate: 8000, n_filters: 32, ..FbankConfig::default() };
    let cities: Vec<String> = {
        let mut c: Vec<String> = manifest.clips.iter().map(|c| c.city.clone()).collect();
        c.sort();
        c.dedup();
        c
    };
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for clip in &manifest.clips {
        let fm = extract_fbank(&scenegan::dataset::read_wav(&clip.path)?, &fb)?;
        let city = cities.iter().position(|c| *c == clip.city).unwrap();
        let s = Sample::from_feature(&clip.id, &fm, clip.scene, city);
        if clip.fold == Fold::Train { train.push(s) } else { eval.push(s) }
    }
    let (mut train, mut eval) = (SampleSet::new(train)?, SampleSet::new(eval)?);
    let std = Standardizer::fit(&train);
    std.apply(&mut train)?;
    std.apply(&mut eval)?;
    let (ti, vi) = stratified_split(&train.labels(), &train.cities(), 0.1, 0)?;

    let [c, frames, n] = train.samples[0].x.shape().try_into().unwrap();
    let mut cfg = DcnnConfig::desk(c, frames, n);
    cfg.conv_pad = 1;
    let mut net = Network::build(build_dcnn(&cfg)?, 0)?;
    let tc = TrainConfig { max_epochs: 30, patience: 8, batch_size: 16, ..TrainConfig::default() };
    let hist = train_model(&mut net, &train.subset(&ti), &train.subset(&vi), &tc, 0)?;
    println!("stopped after {} epochs, best {} (val loss {:.3})", hist.epochs.len(), hist.best_epoch, hist.best_val_loss);

    let ckpt = dir.join("dcnn.ckpt");
    save_checkpoint(&net, &std.to_meta(), &ckpt)?;
    let (back, _) = load_checkpoint(&ckpt)?;
    println!("eval accuracy {:.1}% from {}", 100.0 * accuracy(&back, &eval)?, ckpt.display());
    Ok(())
}
