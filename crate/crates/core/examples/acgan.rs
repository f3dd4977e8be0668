//! Trains an ACGAN on two-class toy maps and checks that the fakes carry the
//! class structure: class 0 is bright in the low filters, class 1 in the high.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenegan::gan::{sample_fakes, train_gan, GanConfig, GanLayout, GanMode, GanTrainConfig, GanTriple};
use scenegan::tensor::{Float, Tensor};
use scenegan::training::{Sample, SampleSet};

fn main() -> scenegan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples = (0..64)
        .map(|i| {
            let label = i % 2;
            let x = Tensor::from_fn(&[1, 16, 8], |j| {
                let m = if (j % 8 < 4) == (label == 0) { 1.0 } else { -1.0 };
                (m + rng.sample::<f64, _>(rand_distr::StandardNormal)) as Float
            });
            Sample { id: format!("r{i}"), x, label, city: 0 }
        })
        .collect();
    let real = SampleSet::new(samples)?;

    let cfg = GanConfig {
        layout: GanLayout::Image,
        mode: GanMode::Acgan,
        channels: 1,
        frames: 16,
        filters: 8,
        widths: vec![8, 16],
        hidden: 32,
        n_classes: 2,
        noise_dim: 16,
        embed_dim: 8,
    };
    let mut gan = GanTriple::build(cfg, 0)?;
    let tc = GanTrainConfig { epochs: 250, ..GanTrainConfig::default() };
    let reports = train_gan(&mut gan, &real, &tc, 0, |epoch, _| {
        if epoch % 50 == 0 {
            println!("epoch {epoch}");
        }
        Ok(())
    })?;
    let last = reports.last().unwrap();
    println!("after {} steps: dis {:.3} gen {:.3} scene {:.3}", last.step, last.dis_loss, last.gen_loss, last.scene);

    for class in 0..2 {
        let fakes = sample_fakes(&gan, &[class], 50, &mut rng, 1)?;
        let (mut low, mut high) = (0.0, 0.0);
        for f in &fakes {
            for (j, v) in f.sample.x.data().iter().enumerate() {
                if j % 8 < 4 { low += *v as f64 } else { high += *v as f64 }
            }
        }
        let per = (fakes.len() * 64) as f64;
        println!("class {class} fakes: low filters {:+.2}, high filters {:+.2}", low / per, high / per);
    }
    Ok(())
}
