//! Ridge fusion of an embedding with uncertainty features, saved and reloaded.

use uqkit::features::FeatureVector;
use uqkit::fusion::{train, Design, FusionModel, TrainOptions};
use uqkit::records::FeatureTable;

fn main() -> uqkit::Result<()> {
    let n = 200;
    let mut embeddings = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let t = i as f64 / n as f64;
        let noise = ((i * 7919) % 101) as f64 / 101.0 - 0.5;
        embeddings.push(vec![t + 0.3 * noise, 1.0 - t]);
        let mut fv = FeatureVector::new();
        fv.push("I.Psteps.E", -2.0 * t);
        rows.push((format!("r{i}"), fv));
        labels.push(3.0 * t + 1.0);
    }
    let features = FeatureTable::from_vectors(&rows)?;
    let design = Design {
        embeddings: &embeddings,
        features: &features,
    };
    for lambda in [0.01, 1.0, 100.0] {
        let model = train(
            design,
            &labels,
            TrainOptions {
                lambda,
                ..TrainOptions::default()
            },
        )?;
        println!(
            "lambda={lambda:<6} |w|={:.4} bias={:.4}",
            model.weight_norm(),
            model.bias
        );
    }

    let model = train(design, &labels, TrainOptions::default())?;
    let reloaded = FusionModel::from_text(&model.to_text())?;
    let p = reloaded.predict(&embeddings[10], &[features.column(0)[10]])?;
    println!("prediction for r10: {p:.4} (gold {:.4})", labels[10]);
    Ok(())
}
