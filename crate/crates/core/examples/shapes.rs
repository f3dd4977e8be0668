//! Layer-by-layer output shapes of the reference-width FCNN and DCNN.

use scenegan::models::{build_dcnn, build_fcnn, DcnnConfig, FcnnConfig, Network};

fn main() -> scenegan::Result<()> {
    for spec in [build_fcnn(&FcnnConfig::paper(2, 500, 128))?, build_dcnn(&DcnnConfig::paper(2, 58, 290))?] {
        let name = spec.name.clone();
        let net = Network::build(spec, 0)?;
        let t = net.shapes();
        println!("{name}: input {:?}, {} parameters", net.spec.input, net.num_params());
        for (label, shape) in t.trunk.iter().chain(&t.head) {
            println!("  {label:<16} {shape:?}");
        }
        println!("  output           {:?}\n", t.output);
    }
    Ok(())
}
