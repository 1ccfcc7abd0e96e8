//! Reading an MLQE-style TSV file and scoring it with corpus features only.

use std::io::Write;

use uqkit::corpus_index::CorpusIndex;
use uqkit::features::{group3, FeatureSpec};
use uqkit::records::read_mlqe_tsv;
use uqkit::textmetrics::tokenize;

fn main() -> uqkit::Result<()> {
    let file = tempfile_path("mlqe.tsv");
    let tsv = "index\toriginal\ttranslation\tz_mean\n\
               0\tthe house is small\tdas haus ist klein\t0.8\n\
               1\tthe garden is wide\tder garten ist breit\t-0.2\n";
    std::fs::File::create(&file)
        .and_then(|mut f| f.write_all(tsv.as_bytes()))
        .map_err(|e| uqkit::Error::io(&file, e))?;
    let records = read_mlqe_tsv(&file)?;

    let corpus = [("the house is big", "das haus ist gross")]
        .iter()
        .map(|(s, t)| (tokenize(s), tokenize(t)))
        .collect::<Vec<_>>();
    let index = CorpusIndex::build(&corpus)?;
    let spec = FeatureSpec::default();
    for r in &records {
        let fv = group3(r, &index, &spec)?;
        println!(
            "{} gold={:?} 1-gram={:.3} x-K1={:.3}",
            r.id,
            r.gold_score,
            fv.get("III.DS-gram.1-gram").unwrap_or(f64::NAN),
            fv.get("III.DS-neighbors.x-K1").unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

fn tempfile_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("uqkit-{}-{name}", std::process::id()))
}
