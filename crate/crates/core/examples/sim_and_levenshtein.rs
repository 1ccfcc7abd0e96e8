//! Unigram-alignment similarity and edit distance on token sequences.

use uqkit::textmetrics::{levenshtein, sim, tokenize};

fn main() {
    let hyp = tokenize("the cat sat on the mat");
    let reference = tokenize("on the mat the cat sat");
    let other = tokenize("a dog barked");

    println!("sim(hyp, ref)   = {:.6}", sim(&hyp, &reference).value());
    println!("sim(hyp, hyp)   = {:.6}", sim(&hyp, &hyp).value());
    println!("sim(hyp, other) = {:.6}", sim(&hyp, &other).value());
    println!("levenshtein     = {}", levenshtein(&hyp, &reference));
}
