//! Deletion and mask insertion noise, then mask filling by the masked LM.

use uqkit::backend::{SyntheticBackend, SyntheticWorld};
use uqkit::noiser::{make_noised_inputs, pe_noise, NoiseConfig};
use uqkit::records::NoiseVariant;

fn main() -> uqkit::Result<()> {
    let backend = SyntheticBackend::new(SyntheticWorld::default());
    let x = backend.world().sentence("pe-demo");
    let cfg = NoiseConfig::default();
    println!("x:        {}", x.join(" "));
    for i in 0..cfg.n_variants {
        println!("masked {i}: {}", pe_noise(&x, &cfg, "pe-demo", i).join(" "));
    }
    let filled = make_noised_inputs("pe-demo", &x, None, NoiseVariant::Pe, &cfg, &backend)?;
    for (i, input) in filled.inputs.iter().enumerate() {
        println!("filled {i}: {}", input.join(" "));
    }
    Ok(())
}
