//! Translating, MC-dropout sampling and force-decoding with the synthetic model.

use uqkit::backend::{DecodeKey, ModelBackend, SyntheticBackend, SyntheticWorld};

fn main() -> uqkit::Result<()> {
    let world = SyntheticWorld {
        seed: 7,
        ..SyntheticWorld::default()
    };
    let backend = SyntheticBackend::new(world);
    let x = backend.world().sentence("demo");
    println!("source:  {}", x.join(" "));

    let hyp = backend.translate(DecodeKey::primary("demo"), &x)?;
    println!("mt:      {}", hyp.tokens.join(" "));
    println!(
        "reference accuracy: {:.3}",
        backend.world().token_accuracy(&x, &hyp.tokens)
    );

    let samples = backend.mc_sample("demo", &x, 4, 7)?;
    for (i, s) in samples.samples.iter().enumerate() {
        println!(
            "sample {i}: mean logprob {:.4}",
            s.mean_logprob().unwrap_or(f64::NAN)
        );
    }
    let forced = backend.force_decode("demo", &x, &hyp.tokens)?;
    println!("forced steps: {}", forced.len());
    Ok(())
}
