//! Finite-difference checks through every classifier variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenegan::models::{
    attach_city_adversary, build_dcnn, build_fcnn, build_hybrid, with_dct_head, DcnnConfig, FcnnConfig, HybridVariant,
    Network, NetworkSpec,
};
use scenegan::tensor::gradcheck::{check_split, default_tolerance, random_tensor, CheckOptions};
use scenegan::tensor::{ops, Float, Mode};

fn tiny_dcnn() -> DcnnConfig {
    let mut cfg = DcnnConfig::desk(1, 3, 16);
    cfg.conv_pad = 1;
    cfg.fc = [8; 3];
    cfg
}

fn variants() -> Vec<NetworkSpec> {
    let d = build_dcnn(&tiny_dcnn()).unwrap();
    let mut v = vec![
        build_fcnn(&FcnnConfig::desk(1, 32, 32)).unwrap(),
        d.clone(),
        with_dct_head(d.clone()).unwrap(),
        attach_city_adversary(d.clone(), 3, 6, 0.7).unwrap(),
        attach_city_adversary(with_dct_head(d).unwrap(), 3, 6, 0.7).unwrap(),
    ];
    for h in [HybridVariant::IncepLstm, HybridVariant::IncepGruV1, HybridVariant::IncepGruV2, HybridVariant::IncepGruV3] {
        v.push(build_hybrid(h, &tiny_dcnn(), 5).unwrap());
    }
    v
}

fn check_network(spec: NetworkSpec, seed: u64) {
    let name = spec.name.clone();
    let net = Network::build(spec, seed).unwrap();
    let [c, l, n] = net.spec.input;
    let x = random_tensor(&[3, c, l, n], 1.0, seed + 100);
    let labels = [0, 4, 7];
    let cities = [0, 1, 2];
    let mut store = net.store.clone();
    let opts = CheckOptions { seed, ..CheckOptions::default() };
    let lambda = net.spec.city.as_ref().map_or(0.0, |c| c.lambda);
    let r = check_split(&mut store, &opts, |tape, store, probe| {
        // fixed rng: the same dropout masks on every evaluation
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = net.forward_with(tape, store, &x, Mode::Train, &mut rng)?;
        let (scene, city) = net.loss_parts(&f, &labels, net.spec.city.as_ref().map(|_| &cities[..]))?;
        match (city, probe) {
            (None, _) => Ok(scene),
            (Some(city), None) => ops::add(&scene, &city),
            // gradient reversal: shared weights descend scene − λ·city, the branch descends city
            (Some(city), Some(name)) if name.starts_with("city.") => ops::add(&scene, &city),
            (Some(city), Some(_)) => ops::sub(&scene, &ops::scale(&city, lambda as Float)),
        }
    })
    .unwrap();
    assert!(r.probes.len() >= 20);
    let tol = default_tolerance();
    assert!(r.max_rel_err() < tol, "{name}: {:.3e}, worst {:?}", r.max_rel_err(), r.worst());
    println!("{name}: max rel err {:.2e}, {} kink-crossing probes replaced", r.max_rel_err(), r.skipped);
}

pub fn every_variant_passes_gradcheck() {
    for (i, spec) in variants().into_iter().enumerate() {
        check_network(spec, i as u64);
    }
}
