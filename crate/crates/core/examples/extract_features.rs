//! All five feature groups for a handful of synthetic records.

use uqkit::backend::{generate_dataset, SyntheticBackend, SyntheticWorld};
use uqkit::corpus_index::CorpusIndex;
use uqkit::evidence::GenerativeEvidence;
use uqkit::features::{extract_all, ExtractContext, FeatureGroupSelection, FeatureSpec};
use uqkit::noiser::NoiseConfig;

fn main() -> uqkit::Result<()> {
    let world = SyntheticWorld::default();
    let noise = NoiseConfig::default();
    let data = generate_dataset(&world, &[("demo", 3)], 200, &noise, 10)?;
    let index = CorpusIndex::build(&data.corpus)?;

    let backend = SyntheticBackend::new(world.clone());
    let source = GenerativeEvidence {
        backend: &backend,
        noise,
        mc_samples: 10,
        seed: world.seed,
    };
    let spec = FeatureSpec::default();
    let ctx = ExtractContext {
        index: Some(&index),
        spec: &spec,
    };
    let rows = extract_all(
        &data.splits[0].records,
        &source,
        ctx,
        &FeatureGroupSelection::all(),
    )?;

    let (id, fv) = &rows[0];
    println!("{id}: {} features, {} flagged", fv.len(), fv.flags().len());
    for (name, value) in fv.names().zip(fv.values()).take(12) {
        println!("  {name:<28} {value:>10.5}");
    }
    Ok(())
}
