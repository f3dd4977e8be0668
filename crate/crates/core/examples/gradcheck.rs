//! Finite-difference check of a city-adversary DCNN: the shared weights see
//! the reversed city gradient, the city branch its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenegan::models::{attach_city_adversary, build_dcnn, DcnnConfig, Network};
use scenegan::tensor::gradcheck::{check_split, default_tolerance, random_tensor, CheckOptions};
use scenegan::tensor::{ops, Float, Mode};

fn main() -> scenegan::Result<()> {
    let mut cfg = DcnnConfig::desk(1, 3, 16);
    cfg.conv_pad = 1;
    cfg.fc = [8; 3];
    let net = Network::build(attach_city_adversary(build_dcnn(&cfg)?, 3, 6, 0.5)?, 1)?;
    let x = random_tensor(&[3, 1, 3, 16], 1.0, 2);
    let (labels, cities) = ([0, 4, 7], [0, 1, 2]);
    let mut store = net.store.clone();
    let opts = CheckOptions { coords: 40, ..CheckOptions::default() };
    let report = check_split(&mut store, &opts, |tape, store, probe| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = net.forward_with(tape, store, &x, Mode::Train, &mut rng)?;
        let (scene, city) = net.loss_parts(&f, &labels, Some(&cities))?;
        let city = city.unwrap();
        match probe {
            Some(p) if !p.starts_with("city.") => ops::sub(&scene, &ops::scale(&city, 0.5 as Float)),
            _ => ops::add(&scene, &city),
        }
    })?;
    println!("{} probes, max relative error {:.2e} (tolerance {:.0e})", report.probes.len(), report.max_rel_err(), default_tolerance());
    if let Some(w) = report.worst() {
        println!("worst: {w:?}");
    }
    Ok(())
}
