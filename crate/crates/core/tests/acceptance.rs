//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance`; a single criterion with
//! `cargo test --release --test acceptance -- 8`.

mod grad_suite;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use scenegan::augment::{apply_decision, run_round, AugmentedDatabase, CandidateSource, RoundConfig};
use scenegan::ensemble::{average_vote, fit_weights, holdout_accuracy, weighted_vote};
use scenegan::features::{
    channel_transform, extract_fbank, extract_scalogram, inverse_channel_transform, Audio, ChannelMode, FbankConfig,
    ScalogramConfig, WaveletLayout,
};
use scenegan::gan::{
    gan_train_step, loss_acgan, loss_cvae_acgan, loss_gen_fake, loss_kl, noise, sample_fakes, GanConfig, GanLayout,
    GanMode, GanTriple, LossParts, LossWeights,
};
use scenegan::models::{
    attach_city_adversary, build_dcnn, build_fcnn, build_hybrid, with_dct_head, DcnnConfig, FcnnConfig, HybridVariant,
    LayerSpec, Network, NetworkSpec, PredictionRecord,
};
use scenegan::pipeline::{report_rows, run_pipeline, PipelineConfig, Stage};
use scenegan::tensor::ops::{self, dct_matrix, Reduction};
use scenegan::tensor::{Float, Mode, ParamStore, Tape, Tensor};
use scenegan::training::{accuracy, stratified_split, train_model, Sample, SampleSet, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let checks = grad_suite::all();
    let mut failed = Vec::new();
    for (name, check) in &checks {
        if catch_unwind(check).is_err() {
            failed.push(*name);
        }
    }
    let dt = t0.elapsed();
    ensure!(failed.is_empty(), "failing checks: {failed:?}");
    ensure!(dt < Duration::from_secs(120), "suite took {dt:?}");
    Ok(format!("{} checks, {:.1} s", checks.len(), dt.as_secs_f64()))
}

fn scalar(tape: &Tape, v: f64) -> scenegan::tensor::Var {
    tape.constant(Tensor::scalar(v as Float))
}

fn c2_losses() -> Outcome {
    // KL against a Monte-Carlo estimate of E_q[log q − log p]
    let mu = [0.3, -1.2, 0.8, 0.0];
    let logvar = [-0.5, 0.4, -1.5, 0.9];
    let tape = Tape::new();
    let to_var = |v: &[f64]| tape.constant(Tensor::from_vec(v.iter().map(|&x| x as Float).collect()));
    let closed = ok(loss_kl(&to_var(&mu), &to_var(&logvar)))?.item_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 1_000_000;
    let mut mc = 0.0;
    for (m, lv) in mu.iter().zip(logvar) {
        let s = (0.5 * lv).exp();
        let mut acc = 0.0;
        for _ in 0..draws {
            let e = normal(&mut rng);
            let z = m + s * e;
            acc += -0.5 * e * e - lv / 2.0 + 0.5 * z * z;
        }
        mc += acc / draws as f64;
    }
    let kl_err = (closed - mc).abs() / mc;
    ensure!(kl_err < 0.02, "KL closed {closed} vs MC {mc}");

    // objectives against their weighted sums, in f64
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w = LossWeights {
            gamma: rng.gen_range(0.0..2.0),
            gamma1: rng.gen_range(0.0..2.0),
            gamma2: rng.gen_range(0.0..2.0),
            gamma3: rng.gen_range(0.0..2.0),
        };
        let tape = Tape::new();
        let parts = LossParts {
            real_fake: scalar(&tape, v[0]),
            gen_fake: scalar(&tape, v[1]),
            scene: scalar(&tape, v[2]),
            kl: Some(scalar(&tape, v[3].abs())),
            reco: Some(scalar(&tape, v[4].abs())),
        };
        // the operands as the engine stores them
        let q: Vec<f64> = [&parts.real_fake, &parts.gen_fake, &parts.scene, parts.kl.as_ref().unwrap(), parts.reco.as_ref().unwrap()]
            .iter()
            .map(|p| p.item_f64())
            .collect();
        let (gen, dis) = ok(loss_acgan(&parts, &w))?;
        let (enc6, gen6, dis6) = ok(loss_cvae_acgan(&parts, &w))?;
        let want = [
            (gen.item_f64(), q[1] + w.gamma * q[2]),
            (dis.item_f64(), -q[0] + w.gamma * q[2]),
            (enc6.item_f64(), w.gamma2 * q[3] + w.gamma3 * q[4]),
            (gen6.item_f64(), q[1] + w.gamma1 * q[2] + w.gamma3 * q[4]),
            (dis6.item_f64(), -q[0] + w.gamma1 * q[2]),
        ];
        for (got, oracle) in want {
            worst = worst.max((got - oracle).abs() / oracle.abs().max(1.0));
        }

        let collapsed = LossWeights { gamma: w.gamma1, gamma2: 0.0, gamma3: 0.0, ..w };
        let (ga, da) = ok(loss_acgan(&parts, &collapsed))?;
        let (_, gc, dc) = ok(loss_cvae_acgan(&parts, &collapsed))?;
        ensure!(ga.item_f64() == gc.item_f64() && da.item_f64() == dc.item_f64(), "collapse not exact in trial {trial}");
    }
    ensure!(worst < 1e-6, "weighted-sum error {worst:e}");

    isolation()?;
    Ok(format!("KL rel err {kl_err:.2e} (1e6 draws/dim), sums within {worst:.1e}, collapse exact, isolation holds"))
}

fn grad_norm(s: &mut ParamStore, tape: &Tape) -> f64 {
    s.zero_grad();
    s.accumulate_grads(tape);
    s.iter().map(|p| p.grad().data().iter().map(|g| g.abs() as f64).sum::<f64>()).sum()
}

fn isolation() -> Result<(), String> {
    let cfg = GanConfig {
        layout: GanLayout::Image,
        mode: GanMode::Cvae,
        channels: 1,
        frames: 4,
        filters: 8,
        widths: vec![4, 8],
        hidden: 16,
        n_classes: 2,
        noise_dim: 8,
        embed_dim: 4,
    };
    let mut t = ok(GanTriple::build(cfg, 4))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(&[4, 1, 4, 8], |_| rng.gen_range(-1.0..1.0));
    let labels = [0, 1, 1, 0];
    let tape = Tape::new();
    let z = tape.constant(noise(4, 8, &mut rng));
    let (fake, _) = ok(t.generate(&tape, &labels, &z, Mode::Train, &mut rng))?;
    let dr = ok(t.discriminate(&tape, tape.constant(x.clone()), &mut rng))?;
    let df = ok(t.discriminate(&tape, fake, &mut rng))?;
    let (mu, lv, _) = ok(t.encode(&tape, tape.constant(x), Mode::Train, &mut rng))?;
    let scene_real = ok(ops::softmax_xent(&dr.logits, &labels, Reduction::Sum))?.1;
    let real_only = ok(ops::add(&ops::sum(&ops::log(&dr.score)), &scene_real))?;
    let kl = ok(loss_kl(&mu, &lv))?;
    let fake_term = ok(loss_gen_fake(&df.score))?.value;

    ok(tape.backward(&real_only))?;
    ensure!(grad_norm(&mut t.gen, &tape) == 0.0, "real-data terms reach the generator");
    ensure!(grad_norm(&mut t.dis, &tape) > 0.0, "real-data terms miss the discriminator");
    ok(tape.backward(&kl))?;
    ensure!(grad_norm(&mut t.dis, &tape) == 0.0, "KL reaches the discriminator");
    ensure!(grad_norm(&mut t.gen, &tape) == 0.0, "KL reaches the generator");
    ensure!(grad_norm(t.enc.as_mut().unwrap(), &tape) > 0.0, "KL misses the encoder");
    ok(tape.backward(&fake_term))?;
    ensure!(grad_norm(&mut t.gen, &tape) > 0.0, "generator term misses the generator");
    ensure!(grad_norm(t.enc.as_mut().unwrap(), &tape) == 0.0, "prior-noise fakes reach the encoder");
    Ok(())
}

fn c3_grad_reverse() -> Outcome {
    let mut cases = 0;
    for (i, lambda) in [0.0, 0.1, 0.5, 1.0, 2.5, 7.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let x0 = Tensor::from_fn(&[3, 7], |_| normal(&mut rng) as Float);
        let up = Tensor::from_fn(&[3, 7], |_| normal(&mut rng) as Float);
        let tape = Tape::new();
        let x = tape.leaf(x0.clone(), true);
        let y = ops::grad_reverse(&x, lambda);
        ensure!(y.value().data() == x0.data(), "forward differs at λ={lambda}");
        ok(ops::sum(&ok(ops::mul(&y, &tape.constant(up.clone())))?).backward())?;
        let g = x.grad().ok_or("no gradient")?;
        let want: Vec<Float> = up.data().iter().map(|u| -lambda * u).collect();
        ensure!(g.data() == &want[..], "backward at λ={lambda}: {:?} vs {:?}", &g.data()[..3], &want[..3]);
        cases += 1;
    }
    Ok(format!("{cases} λ values, forward and backward bit-exact"))
}

fn c4_dsp() -> Outcome {
    // the transform matrix itself
    let mut mat_err: f64 = 0.0;
    for n in [1, 2, 8, 58, 500] {
        let m = dct_matrix(n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                mat_err = mat_err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    ensure!(mat_err < 1e-9, "DCT matrix orthonormality error {mat_err:e}");

    // the op, round trip and energy
    let (mut rt, mut energy): (f64, f64) = (0.0, 0.0);
    for (seed, n) in [(1u64, 10usize), (2, 58), (3, 128)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = Tensor::from_fn(&[4, n], |_| normal(&mut rng) as Float);
        let tape = Tape::new();
        let x = tape.constant(x0.clone());
        let y = ok(ops::dct1d(&x, 1))?;
        let back = ok(ops::idct1d(&y, 1))?.value();
        for (a, b) in back.data().iter().zip(x0.data()) {
            rt = rt.max((*a as f64 - *b as f64).abs());
        }
        let ex: f64 = x0.data().iter().map(|&v| (v as f64).powi(2)).sum();
        let ey: f64 = y.value().data().iter().map(|&v| (v as f64).powi(2)).sum();
        energy = energy.max((ex - ey).abs() / ex);
    }
    ensure!(rt < 1e-6 && energy < 1e-6, "round trip {rt:e}, Parseval {energy:e}");

    // 10 s of stereo at the default rate
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let len = 480_000;
    let pcm = |rng: &mut ChaCha8Rng| (0..len).map(|_| rng.gen_range(-8192i32..8192) as f32 / 32768.0).collect::<Vec<_>>();
    let channels = vec![pcm(&mut rng), pcm(&mut rng)];
    let clip = ok(Audio::new(48_000, channels.clone()))?;
    let fb = ok(extract_fbank(&clip, &FbankConfig::default()))?;
    let sc = ok(extract_scalogram(&clip, &ScalogramConfig::default()))?;
    ensure!(fb.shape() == [500, 2, 128], "FBank shape {:?}", fb.shape());
    ensure!(sc.shape() == [58, 2, 290], "scalogram shape {:?}", sc.shape());

    let coded = ok(channel_transform(&channels, ChannelMode::AveDiff))?;
    ensure!(ok(inverse_channel_transform(&coded, ChannelMode::AveDiff))? == channels, "ave-diff inverse not exact");

    // linear below the crossover, constant ratio above
    let layout = WaveletLayout::default();
    let (centres, _, n_lin) = layout.centers(290, 48_000);
    let step = centres[1] - centres[0];
    let mut lin_err: f64 = 0.0;
    for j in 1..=n_lin {
        lin_err = lin_err.max(((centres[j] - centres[j - 1]) - step).abs() / step);
    }
    let ratio = 2f64.powf(1.0 / layout.bins_per_octave);
    let mut geo_err: f64 = 0.0;
    for k in n_lin + 1..centres.len() {
        geo_err = geo_err.max((centres[k] / centres[k - 1] - ratio).abs() / ratio);
    }
    ensure!(lin_err < 1e-9 && geo_err < 1e-9, "spacing errors linear {lin_err:e}, geometric {geo_err:e}");
    Ok(format!(
        "DCT round trip {rt:.1e}, Parseval {energy:.1e}; FBank {:?}, scalogram {:?}; ave-diff exact; {n_lin} linear + {} geometric centres",
        fb.shape(),
        sc.shape(),
        centres.len() - n_lin
    ))
}

/// Trunk shapes recomputed from the layer list with `⌊(n + 2p − k)/s⌋ + 1`.
fn oracle_trunk(spec: &NetworkSpec) -> Vec<Vec<usize>> {
    let [c, frames, n] = spec.input;
    let mut extents = match spec.family {
        scenegan::models::Family::Fcnn => vec![frames, n],
        scenegan::models::Family::Dcnn => vec![n],
    };
    let mut ch = c;
    let mut out = Vec::new();
    for layer in &spec.trunk {
        let f = |e: usize, k: usize, p: usize, s: usize| (e + 2 * p - k) / s + 1;
        match layer.spec {
            LayerSpec::Conv { out, kernel, pad, stride } => {
                ch = out;
                extents = extents.iter().map(|&e| f(e, kernel, pad, stride)).collect();
            }
            LayerSpec::MaxPool { size, pad, stride } => extents = extents.iter().map(|&e| f(e, size, pad, stride)).collect(),
            _ => {}
        }
        let mut s = vec![ch];
        s.extend(&extents);
        out.push(s);
    }
    out
}

fn c5_shapes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fcnn = ok(build_fcnn(&FcnnConfig::paper(2, 500, 128)))?;
    let dcnn = ok(build_dcnn(&DcnnConfig::paper(2, 58, 290)))?;
    let mut notes = Vec::new();
    for (spec, input, last) in [(fcnn, [1, 2, 500, 128], vec![256, 27, 4]), (dcnn, [1, 2, 58, 290], vec![32, 16])] {
        let trace = ok(spec.validate())?;
        let got: Vec<Vec<usize>> = trace.trunk.iter().map(|(_, s)| s.clone()).collect();
        let want = oracle_trunk(&spec);
        if let Some(i) = (0..want.len()).find(|&i| got.get(i) != Some(&want[i])) {
            return Err(format!("{} layer {}: {:?} vs oracle {:?}", spec.name, i, got.get(i), want[i]));
        }
        ensure!(got.len() == want.len() && got.last() == Some(&last), "{} trunk ends at {:?}", spec.name, got.last());
        let net = ok(Network::build(spec.clone(), 1))?;
        let x = Tensor::from_fn(&input, |_| normal(&mut rng) as Float);
        let tape = Tape::new();
        let f = ok(net.forward(&tape, &x, Mode::Eval, &mut rng))?;
        let logits = f.clip_logits.as_ref().or(f.frame_logits.as_ref()).ok_or("no logits")?;
        let rows = if spec.name == "fcnn" { 1 } else { 58 };
        ensure!(logits.shape() == [rows, 10], "{} logits {:?}", spec.name, logits.shape());
        ensure!(logits.value().data().iter().all(|v| v.is_finite()), "{} non-finite logits", spec.name);
        notes.push(format!("{} {} layers to {:?}", spec.name, got.len(), last));
    }
    Ok(notes.join(", "))
}

fn capacity_specs() -> Result<Vec<NetworkSpec>, String> {
    // the FCNN downsamples 16×, so its toy maps are larger
    let mut f = FcnnConfig::desk(1, 32, 32);
    f.n_classes = 4;
    let mut d = DcnnConfig::desk(1, 8, 16);
    d.conv_pad = 1;
    d.fc = [32; 3];
    d.n_classes = 4;
    let dcnn = ok(build_dcnn(&d))?;
    let mut specs = vec![
        ok(build_fcnn(&f))?,
        dcnn.clone(),
        ok(with_dct_head(dcnn.clone()))?,
        ok(attach_city_adversary(dcnn.clone(), 2, 16, 0.1))?,
        ok(attach_city_adversary(ok(with_dct_head(dcnn))?, 2, 16, 0.1))?,
    ];
    for v in [HybridVariant::IncepLstm, HybridVariant::IncepGruV1, HybridVariant::IncepGruV2, HybridVariant::IncepGruV3] {
        specs.push(ok(build_hybrid(v, &d, 8))?);
    }
    Ok(specs)
}

fn c6_capacity() -> Outcome {
    let mut notes = Vec::new();
    for spec in capacity_specs()? {
        let [c, frames, n] = spec.input;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<Sample> = (0..8)
            .map(|i| Sample {
                id: format!("t{i}"),
                x: Tensor::from_fn(&[c, frames, n], |_| normal(&mut rng) as Float),
                label: i % 4,
                city: i % 2,
            })
            .collect();
        let train = ok(SampleSet::new(samples.clone()))?;
        // the same clips under other ids, so early stopping tracks training loss
        let val = ok(SampleSet::new(samples.into_iter().map(|s| Sample { id: format!("v{}", s.id), ..s }).collect()))?;
        let tc = TrainConfig {
            max_epochs: 200,
            patience: 199,
            batch_size: 8,
            lr: 1e-2,
            lr_decay_after: 50,
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        let name = spec.name.clone();
        let mut net = ok(Network::build(spec, 0))?;
        let hist = ok(train_model(&mut net, &train, &val, &tc, 0))?;
        let acc = ok(accuracy(&net, &train))?;
        let dt = t0.elapsed();
        ensure!(acc == 1.0, "{name}: train accuracy {acc} after {} epochs", hist.epochs.len());
        ensure!(dt < Duration::from_secs(300), "{name} took {dt:?}");
        notes.push(format!("{name} {:.1}s", dt.as_secs_f64()));
    }
    Ok(format!("100% on 8 clips: {}", notes.join(", ")))
}

fn c7_mini() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let cfg = ok(PipelineConfig::load(&repo_root().join("configs/mini.conf")))?;
    let cfg = ok(cfg.with_override("out", &dir.path().display().to_string()))?;
    let t0 = Instant::now();
    ok(run_pipeline(&cfg, Stage::Eval))?;
    let dt = t0.elapsed();
    let rows = ok(report_rows(dir.path()))?;
    let singles: Vec<_> = rows.iter().filter(|r| !r.fusion).collect();
    let fusion = rows.iter().find(|r| r.fusion).ok_or("no fusion row")?;
    let mut best: f64 = 0.0;
    let mut notes = Vec::new();
    for r in &singles {
        let a = r.accuracy.ok_or(format!("{} unlabelled", r.name))?;
        best = best.max(a);
        notes.push(format!("{} {:.1}%", r.name, 100.0 * a));
    }
    let fa = fusion.accuracy.ok_or("fusion unlabelled")?;
    notes.push(format!("{} {:.1}%", fusion.name, 100.0 * fa));
    let summary = format!("{}, {:.0} s", notes.join(", "), dt.as_secs_f64());
    ensure!(singles.len() == 2, "expected two systems, got {}", singles.len());
    ensure!(singles.iter().all(|r| r.accuracy.unwrap() >= 0.9), "{summary}");
    ensure!(fa >= best - 0.02, "fusion below best single: {summary}");
    ensure!(dt < Duration::from_secs(600), "{summary}");
    Ok(summary)
}

fn toy(cities: usize, per: usize, sep: f64, rng: &mut ChaCha8Rng, tag: &str) -> SampleSet {
    let mut samples = Vec::new();
    for c in 0..cities {
        for i in 0..per {
            let label = i % 2;
            let centre = if label == 0 { -sep } else { sep };
            let x = Tensor::from_fn(&[1, 2, 16], |_| (centre + normal(rng)) as Float);
            samples.push(Sample { id: format!("{tag}{c}-{i}"), x, label, city: c });
        }
    }
    SampleSet::new(samples).unwrap()
}

fn c8_augmentation() -> Outcome {
    let mut cfg = DcnnConfig::desk(1, 2, 16);
    cfg.conv_pad = 1;
    cfg.fc = [8; 3];
    cfg.n_classes = 2;
    let spec = ok(build_dcnn(&cfg))?;
    let train = TrainConfig { max_epochs: 60, patience: 8, batch_size: 8, val_fraction: 0.2, lr: 1e-2, ..TrainConfig::default() };
    let (mut accepted, mut rejected, mut rounds) = (0, 0, 0);
    for trial in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        // a hard toy where extra real data helps, and an easy one that noise can only hurt
        let hard = AugmentedDatabase::new(toy(4, 12, 0.25, &mut rng, "c"));
        let pool = toy(4, 48, 0.25, &mut rng, "p");
        let easy = AugmentedDatabase::new(toy(4, 12, 1.0, &mut rng, "c"));
        for (db, source) in [(&hard, CandidateSource::Pool(pool)), (&easy, CandidateSource::Noise { scale: 3.0 })] {
            let oracle = matches!(source, CandidateSource::Pool(_));
            let mut rc = RoundConfig::new(spec.clone(), train.clone(), source);
            rc.candidate_fraction = 4.0;
            rc.seed = trial;
            let r = ok(run_round(db, 0, &rc, &mut ChaCha8Rng::seed_from_u64(trial)))?;
            rounds += 1;
            let b = r.accuracy_b.ok_or("round without classifier B")?;
            ensure!(r.accepted() == (b > r.accuracy_a), "trial {trial}: A {} B {b} decided {:?}", r.accuracy_a, r.decision);
            let mut after = db.clone();
            let changed = ok(apply_decision(&mut after, &r))?;
            if r.accepted() {
                ensure!(changed && after.fakes.len() == db.fakes.len() + r.candidates.len(), "accepted round not applied");
            } else {
                ensure!(!changed && &after == db, "rejected round changed the database");
            }
            match (oracle, r.accepted()) {
                (true, true) => accepted += 1,
                (false, false) => rejected += 1,
                _ => {}
            }
        }
    }
    ensure!(accepted >= 8 && rejected >= 8, "oracle accepted {accepted}/10, noise rejected {rejected}/10");
    Ok(format!("oracle accepted {accepted}/10, noise rejected {rejected}/10, invariants held in {rounds} rounds"))
}

fn c9_real(n: usize, rng: &mut ChaCha8Rng, tag: &str) -> SampleSet {
    let s = (0..n)
        .map(|i| {
            let label = i % 2;
            let x = Tensor::from_fn(&[1, 16, 8], |j| {
                let m = if (j % 8 < 4) == (label == 0) { 1.0 } else { -1.0 };
                (m + normal(rng)) as Float
            });
            Sample { id: format!("{tag}{i}"), x, label, city: i % 4 }
        })
        .collect();
    SampleSet::new(s).unwrap()
}

fn c9_acgan() -> Outcome {
    let t0 = Instant::now();
    let mut accs = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = c9_real(64, &mut rng, "t");
        let test = c9_real(200, &mut rng, "h");
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
        let mut t = ok(GanTriple::build(cfg, seed))?;
        let w = LossWeights::default();
        let mut steps = 0;
        while steps < 1000 {
            let mut idx: Vec<usize> = (0..train.len()).collect();
            rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
            for chunk in idx.chunks(16) {
                if steps == 1000 {
                    break;
                }
                let (x, y, _) = train.batch(chunk);
                ok(gan_train_step(&mut t, &x, &y, &w, 1e-3, &mut rng))?;
                steps += 1;
            }
        }
        let fakes = ok(sample_fakes(&t, &[0, 1], 100, &mut rng, 1))?;
        let fset = ok(SampleSet::new(fakes.into_iter().map(|f| f.sample).collect()))?;
        let (fi, vi) = ok(stratified_split(&fset.labels(), &fset.cities(), 0.2, seed))?;
        let mut dc = DcnnConfig::desk(1, 16, 8);
        dc.conv_pad = 1;
        dc.pool_pads = [1; 4];
        dc.fc = [8; 3];
        dc.n_classes = 2;
        let mut net = ok(Network::build(ok(build_dcnn(&dc))?, seed))?;
        let tc = TrainConfig { max_epochs: 30, patience: 5, batch_size: 16, lr: 1e-2, ..TrainConfig::default() };
        ok(train_model(&mut net, &fset.subset(&fi), &fset.subset(&vi), &tc, seed))?;
        accs.push(ok(accuracy(&net, &test))?);
    }
    let good = accs.iter().filter(|&&a| a >= 0.8).count();
    let shown: Vec<String> = accs.iter().map(|a| format!("{:.2}", a)).collect();
    let summary = format!("{good}/10 seeds ≥ 80% after 1000 steps [{}], {:.0} s", shown.join(" "), t0.elapsed().as_secs_f64());
    ensure!(good >= 7, "{summary}");
    Ok(summary)
}

fn member(rng: &mut ChaCha8Rng, clips: usize, k: usize) -> Vec<PredictionRecord> {
    (0..clips)
        .map(|c| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powi(3)).collect();
            let s: f64 = raw.iter().sum();
            PredictionRecord { clip_id: format!("c{c}"), probs: raw.iter().map(|x| x / s).collect(), classifier: "m".into(), seed: 0 }
        })
        .collect()
}

fn c10_ensemble() -> Outcome {
    let trials = 200;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let m = rng.gen_range(2..6);
        let k = rng.gen_range(2..11);
        let clips = rng.gen_range(5..60);
        let members: Vec<_> = (0..m).map(|_| member(&mut rng, clips, k)).collect();
        let labels: HashMap<String, usize> = (0..clips).map(|c| (format!("c{c}"), rng.gen_range(0..k))).collect();

        let uniform = ok(weighted_vote(&members, &vec![rng.gen_range(0.1..3.0); m]))?;
        ensure!(uniform == ok(average_vote(&members))?, "trial {trial}: uniform weights differ from the average");

        let pick = rng.gen_range(0..m);
        let mut onehot = vec![0.0; m];
        onehot[pick] = 1.0;
        let sel = ok(weighted_vote(&members, &onehot))?;
        ensure!(
            sel.iter().zip(&members[pick]).all(|(a, b)| a.clip_id == b.clip_id && a.probs == b.probs),
            "trial {trial}: one-hot weights do not reproduce member {pick}"
        );

        let best = members.iter().map(|mm| holdout_accuracy(mm, &labels).unwrap()).fold(0.0, f64::max);
        let w = ok(fit_weights(&members, &labels))?;
        let fitted = ok(holdout_accuracy(&ok(weighted_vote(&members, &w))?, &labels))?;
        ensure!(fitted >= best, "trial {trial}: fitted {fitted} < best member {best}");
    }
    Ok(format!("{trials} random trials: uniform == average, one-hot == member, fitted ≥ best"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let (ta, tb) = (tree(a), tree(b));
    let keys_a: Vec<_> = ta.keys().collect();
    let keys_b: Vec<_> = tb.keys().collect();
    ensure!(keys_a == keys_b, "file sets differ: {} vs {} files", keys_a.len(), keys_b.len());
    if let Some((p, _)) = ta.iter().find(|(p, bytes)| tb[*p] != **bytes) {
        return Err(format!("{} differs", p.display()));
    }
    Ok(ta.len())
}

fn c11_determinism() -> Outcome {
    let base = ok(PipelineConfig::load(&repo_root().join("configs/tiny.conf")))?;
    let dirs: Vec<_> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let cfg = |i: usize| base.with_override("out", &dirs[i].path().display().to_string()).unwrap();
    let stages = [Stage::Mkdata, Stage::Extract, Stage::Augment, Stage::Train, Stage::Predict, Stage::Fuse, Stage::Eval];
    let mut files = 0;
    // stage by stage in two directories
    for s in stages {
        ok(run_pipeline(&cfg(0), s))?;
        ok(run_pipeline(&cfg(1), s))?;
        files = same_tree(dirs[0].path(), dirs[1].path()).map_err(|e| format!("after {}: {e}", s.name()))?;
    }
    // parallel extraction and seeds
    ok(run_pipeline(&ok(cfg(2).with_override("jobs", "2"))?, Stage::Eval))?;
    same_tree(dirs[0].path(), dirs[2].path()).map_err(|e| format!("jobs=2: {e}"))?;
    // interrupted after extraction, then resumed
    ok(run_pipeline(&cfg(3), Stage::Extract))?;
    ok(run_pipeline(&cfg(3), Stage::Eval))?;
    same_tree(dirs[0].path(), dirs[3].path()).map_err(|e| format!("resumed: {e}"))?;
    // a repeat skips every unit and touches nothing
    let before = tree(dirs[0].path());
    let recs = ok(run_pipeline(&cfg(0), Stage::Eval))?;
    ensure!(recs.iter().all(|r| r.skipped), "repeat re-ran {:?}", recs.iter().filter(|r| !r.skipped).map(|r| &r.label).collect::<Vec<_>>());
    ensure!(tree(dirs[0].path()) == before, "repeat changed artifacts");
    Ok(format!("{files} files identical per stage, with --jobs 2, after resume; repeat skipped {} units", recs.len()))
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "gradient suite", c1_gradients),
        (2, "loss identities", c2_losses),
        (3, "gradient reversal", c3_grad_reverse),
        (4, "signal processing", c4_dsp),
        (5, "shape conformance", c5_shapes),
        (6, "capacity", c6_capacity),
        (7, "mini pipeline", c7_mini),
        (8, "augmentation protocol", c8_augmentation),
        (9, "ACGAN fakes", c9_acgan),
        (10, "ensemble", c10_ensemble),
        (11, "determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (n, title, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let dt = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail} [{dt:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {detail} [{dt:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
