//! N-gram coverage and nearest-neighbour distances against a parallel corpus.

use uqkit::corpus_index::{CorpusIndex, Side};
use uqkit::textmetrics::tokenize;

fn main() -> uqkit::Result<()> {
    let pairs: Vec<_> = [
        ("the house is small", "das haus ist klein"),
        ("the house is big", "das haus ist gross"),
        ("a cat sleeps", "eine katze schlaeft"),
    ]
    .iter()
    .map(|(s, t)| (tokenize(s), tokenize(t)))
    .collect();
    let index = CorpusIndex::build(&pairs)?;

    let x = tokenize("the house is green");
    for n in 1..=4 {
        let g = index.ds_gram(&x, n)?;
        println!(
            "{n}-gram coverage: {:.3} degenerate={}",
            g.value, g.degenerate
        );
    }
    for (d, i) in index.nearest(&x, 2, Side::Src)? {
        println!(
            "neighbour {i} at distance {d}: {:?}",
            index.sentences(Side::Src)[i]
        );
    }
    Ok(())
}
