//! Tokenization, token-level edit distance, and the sentence similarity
//! used by every `*-Sim` feature.
//!
//! The similarity is an exact-match Meteor: unigram matches only, with the
//! classic recall-weighted harmonic mean and fragmentation penalty.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Meteor parameters: F = 10PR / (R + 9P), penalty = 0.5 * (chunks / m)^3.
const METEOR_RECALL_WEIGHT: f64 = 9.0;
const PENALTY_WEIGHT: f64 = 0.5;
const PENALTY_EXPONENT: i32 = 3;

/// NFC-normalize, then split on runs of whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect();
    normalized.split_whitespace().map(str::to_owned).collect()
}

/// Token-level Levenshtein distance (unit cost insert/delete/substitute).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // Keep the shorter sequence as the row to bound memory.
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ai) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let up = row[j + 1];
            let cost = usize::from(ai != bj);
            row[j + 1] = (diag + cost).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

/// Levenshtein distance if it is at most `max`, otherwise `None`.
///
/// Abandons the DP as soon as every cell in the current row exceeds `max`.
pub fn levenshtein_within<T: PartialEq>(a: &[T], b: &[T], max: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ai) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        let mut row_min = row[0];
        for (j, bj) in b.iter().enumerate() {
            let up = row[j + 1];
            let cost = usize::from(ai != bj);
            row[j + 1] = (diag + cost).min(up + 1).min(row[j] + 1);
            row_min = row_min.min(row[j + 1]);
            diag = up;
        }
        if row_min > max {
            return None;
        }
    }
    let d = row[b.len()];
    (d <= max).then_some(d)
}

/// Similarity score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct SimScore(f64);

impl SimScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(SimScore(value))
        } else {
            Err(Error::invalid(format!("similarity {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<SimScore> for f64 {
    fn from(s: SimScore) -> f64 {
        s.0
    }
}

/// Unigram alignment between a hypothesis and a reference.
///
/// Each hypothesis token, taken left to right, is matched to the smallest
/// still-unused reference position holding the same token. The resulting
/// pairs are sorted by hypothesis index.
pub fn align<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Vec<(usize, usize)> {
    let mut positions: HashMap<&T, VecDeque<usize>> = HashMap::new();
    for (j, tok) in reference.iter().enumerate() {
        positions.entry(tok).or_default().push_back(j);
    }
    hyp.iter()
        .enumerate()
        .filter_map(|(i, tok)| {
            positions
                .get_mut(tok)
                .and_then(VecDeque::pop_front)
                .map(|j| (i, j))
        })
        .collect()
}

/// Number of chunks: maximal runs of matches adjacent in both sequences.
pub fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Exact-match Meteor between `hyp` and `reference`.
pub fn sim<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> SimScore {
    if hyp.is_empty() || reference.is_empty() {
        return SimScore(0.0);
    }
    let alignment = align(hyp, reference);
    let m = alignment.len();
    if m == 0 {
        return SimScore(0.0);
    }
    let matches = m as f64;
    let precision = matches / hyp.len() as f64;
    let recall = matches / reference.len() as f64;
    let fmean = (1.0 + METEOR_RECALL_WEIGHT) * precision * recall
        / (recall + METEOR_RECALL_WEIGHT * precision);
    let chunks = count_chunks(&alignment) as f64;
    let penalty = PENALTY_WEIGHT * (chunks / matches).powi(PENALTY_EXPONENT);
    SimScore((fmean * (1.0 - penalty)).clamp(0.0, 1.0))
}

/// Similarity over all unordered pairs `i < j`.
///
/// Returns the mean and the per-pair scores in `(0,1), (0,2), ..., (1,2), ...`
/// order.
pub fn pairwise_mean_sim<S, T>(hyps: &[S]) -> Result<(SimScore, Vec<f64>)>
where
    S: AsRef<[T]>,
    T: Eq + Hash,
{
    if hyps.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: hyps.len(),
        });
    }
    let mut pairs = Vec::with_capacity(hyps.len() * (hyps.len() - 1) / 2);
    for (i, a) in hyps.iter().enumerate() {
        for b in &hyps[i + 1..] {
            pairs.push(sim(a.as_ref(), b.as_ref()).value());
        }
    }
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    Ok((SimScore(mean.clamp(0.0, 1.0)), pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    /// Full-matrix DP, written independently of the rolling-row version.
    fn levenshtein_oracle(a: &[u8], b: &[u8]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn tokenize_collapses_whitespace() {
        assert_eq!(toks("a  b\tc"), vec!["a", "b", "c"]);
        assert!(toks("").is_empty());
        assert!(toks(" \t\n ").is_empty());
    }

    #[test]
    fn tokenize_applies_nfc() {
        // "e" + combining acute composes to U+00E9.
        assert_eq!(toks("cafe\u{301}"), vec!["caf\u{e9}"]);
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&toks("a b c"), &toks("a b c")), 0);
        assert_eq!(levenshtein(&toks("a b c"), &toks("a x c")), 1);
        assert_eq!(levenshtein(&toks(""), &toks("a b")), 2);
        assert_eq!(levenshtein(&toks("a b c d"), &toks("b c d e")), 2);
    }

    #[test]
    fn sim_identical_three_tokens() {
        let a = toks("a b c");
        let expected = 1.0 - 0.5 * (1.0f64 / 3.0).powi(3);
        assert!((sim(&a, &a).value() - expected).abs() < 1e-15);
        assert!((expected - 0.981_481_481_481_481_5).abs() < 1e-15);
    }

    #[test]
    fn sim_one_substitution_example() {
        let s = sim(&toks("a b c d"), &toks("a b x d")).value();
        // m=3, P=R=0.75, F=0.75, chunks=2 -> 0.75 * (1 - 0.5 * (2/3)^3)
        let expected = 0.75 * (1.0 - 0.5 * (2.0f64 / 3.0).powi(3));
        assert!((s - expected).abs() < 1e-15);
        assert!((s - 0.638_888_888_888_889).abs() < 1e-12);
    }

    #[test]
    fn sim_degenerate_inputs_are_zero() {
        assert_eq!(sim(&toks("a b"), &toks("c d")).value(), 0.0);
        assert_eq!(sim(&toks(""), &toks("c d")).value(), 0.0);
        assert_eq!(sim(&toks("a"), &toks("")).value(), 0.0);
    }

    #[test]
    fn chunks_require_adjacency_on_both_sides() {
        // hyp positions 0 and 2 map to ref 0 and 1: not one chunk.
        let al = align(&toks("a z b"), &toks("a b q"));
        assert_eq!(al, vec![(0, 0), (2, 1)]);
        assert_eq!(count_chunks(&al), 2);
    }

    #[test]
    fn pairwise_counts_and_errors() {
        let h = vec![toks("a b c"); 4];
        let (mean, pairs) = pairwise_mean_sim(&h).unwrap();
        assert_eq!(pairs.len(), 6);
        assert!((mean.value() - 0.981_481_481_481_481_5).abs() < 1e-12);

        let (mean, pairs) = pairwise_mean_sim(&[toks("a"), toks("b")]).unwrap();
        assert_eq!(pairs, vec![0.0]);
        assert_eq!(mean.value(), 0.0);

        assert!(matches!(
            pairwise_mean_sim(&[toks("a")]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn sim_self_tends_to_one() {
        let short: Vec<u32> = (0..3).collect();
        let long: Vec<u32> = (0..500).collect();
        assert!(sim(&long, &long).value() > sim(&short, &short).value());
        assert!(sim(&long, &long).value() > 0.999_999);
    }

    fn small_seq(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..5, 0..max_len)
    }

    proptest! {
        #[test]
        fn levenshtein_matches_full_matrix(a in small_seq(12), b in small_seq(12)) {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b));
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        }

        #[test]
        fn levenshtein_within_agrees(a in small_seq(12), b in small_seq(12), max in 0usize..14) {
            let d = levenshtein(&a, &b);
            prop_assert_eq!(levenshtein_within(&a, &b, max), (d <= max).then_some(d));
        }

        #[test]
        fn levenshtein_triangle(a in small_seq(10), b in small_seq(10), c in small_seq(10)) {
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn sim_in_unit_interval(a in small_seq(15), b in small_seq(15)) {
            let s = sim(&a, &b).value();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn sim_symmetric_for_equal_lengths(
            (a, b) in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(0u8..4, n),
                prop::collection::vec(0u8..4, n),
            ))
        ) {
            prop_assert_eq!(sim(&a, &b).value(), sim(&b, &a).value());
        }

        #[test]
        fn sim_self_depends_only_on_length(
            (a, b) in (0usize..12).prop_flat_map(|n| (
                prop::collection::vec(0u8..5, n),
                prop::collection::vec(0u8..5, n),
            ))
        ) {
            prop_assert_eq!(sim(&a, &a).value(), sim(&b, &b).value());
        }

        #[test]
        fn tokenize_idempotent_on_join(s in "[ -~\t\n]{0,40}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }
}
