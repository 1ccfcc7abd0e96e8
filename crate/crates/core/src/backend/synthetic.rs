//! A deterministic toy MT world with known ground truth.
//!
//! Source token `s{i}` translates to target token `t{i}` (a cipher over a
//! vocabulary of `V` tokens). Each record has a difficulty `δ`: at every
//! output position the model assigns probability `1 - δ` to the correct
//! token and `δ / (V - 1)` to each other token, and the decoder draws from
//! that distribution. Whether a position is corrupted depends only on
//! `(seed, record, position)`, so dropout samples and noised decodes of the
//! same record disagree with the primary output exactly where the model is
//! unsure. Which wrong token appears depends on the decoding stream.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Capabilities, DecodeKey, Hypothesis, MaskRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceNeeds, EvidenceSource, GenerativeEvidence};
use crate::noiser::NoiseConfig;
use crate::records::{
    MaskPosition, MaskPrediction, QERecord, Sample, SampleKind, SampleSet, Tokens,
};
use crate::rng;

/// Log-probability reported for tokens the model gives zero mass.
pub const LOGPROB_FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)

/// Upper clamp for dropout-perturbed difficulty.
const MAX_SAMPLE_DIFFICULTY: f64 = 0.9;

const TAG_DIFFICULTY: u64 = 1;
const TAG_CORRUPT: u64 = 2;
const TAG_WRONG: u64 = 3;
const TAG_JITTER: u64 = 4;
const TAG_MLM: u64 = 5;
const TAG_MLM_WRONG: u64 = 6;
const TAG_LENGTH: u64 = 7;
const TAG_TOKEN: u64 = 8;
const TAG_EMBED_NOISE: u64 = 9;
const TAG_EMBED_DIR: u64 = 10;
const TAG_EMBED_BAG: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub vocab_size: usize,
    pub seed: u64,
    /// Probability mass the masked LM puts on wrong fills.
    pub mlm_noise: f64,
    /// Standard deviation of the per-sample difficulty perturbation.
    pub dropout_jitter: f64,
    /// Record difficulties are uniform in `[0, max_difficulty]`.
    pub max_difficulty: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub embedding_dim: usize,
    /// Standard deviation of the noise on the quality signal carried by the
    /// synthetic embedding.
    pub embedding_noise: f64,
}

impl Default for SyntheticWorld {
    fn default() -> Self {
        SyntheticWorld {
            vocab_size: 64,
            seed: 0,
            mlm_noise: 0.1,
            dropout_jitter: 0.05,
            max_difficulty: 0.5,
            min_len: 5,
            max_len: 20,
            embedding_dim: 16,
            embedding_noise: 0.2,
        }
    }
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.mlm_noise) {
            return Err(Error::invalid("mlm_noise must be in [0, 1)"));
        }
        if !(0.0..=MAX_SAMPLE_DIFFICULTY).contains(&self.max_difficulty) {
            return Err(Error::invalid("max_difficulty must be in [0, 0.9]"));
        }
        if self.dropout_jitter < 0.0 || self.embedding_noise < 0.0 {
            return Err(Error::invalid("noise scales must be >= 0"));
        }
        if self.min_len > self.max_len {
            return Err(Error::invalid("min_len must not exceed max_len"));
        }
        Ok(())
    }

    pub fn source_token(&self, i: usize) -> String {
        format!("s{i}")
    }

    pub fn target_token(&self, i: usize) -> String {
        format!("t{i}")
    }

    /// Vocabulary index of a source token; tokens outside the vocabulary
    /// hash onto it.
    pub fn source_index(&self, tok: &str) -> usize {
        self.vocab_index(tok, 's')
            .unwrap_or_else(|| (rng::hash_str(tok) % self.vocab_size as u64) as usize)
    }

    fn vocab_index(&self, tok: &str, prefix: char) -> Option<usize> {
        let rest = tok.strip_prefix(prefix)?;
        if rest.len() > 1 && rest.starts_with('0') {
            return None;
        }
        rest.parse::<usize>().ok().filter(|&i| i < self.vocab_size)
    }

    pub fn target_index(&self, tok: &str) -> Option<usize> {
        self.vocab_index(tok, 't')
    }

    /// The error-free translation.
    pub fn cipher(&self, x: &[String]) -> Tokens {
        x.iter()
            .map(|t| self.target_token(self.source_index(t)))
            .collect()
    }

    /// Fraction of positions where `y` equals the cipher of `x`.
    pub fn token_accuracy(&self, x: &[String], y: &[String]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let reference = self.cipher(x);
        let correct = y.iter().zip(&reference).filter(|(a, b)| a == b).count();
        correct as f64 / y.len().max(reference.len()) as f64
    }

    fn correct_logprob(delta: f64) -> f64 {
        (1.0 - delta).ln()
    }

    fn wrong_logprob(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            LOGPROB_FLOOR
        } else {
            (delta / (self.vocab_size - 1) as f64)
                .ln()
                .max(LOGPROB_FLOOR)
        }
    }

    /// A uniformly chosen index different from `correct`.
    fn other_index(&self, correct: usize, keys: &[u64]) -> usize {
        let pick = rng::below(keys, self.vocab_size as u64 - 1) as usize;
        if pick >= correct {
            pick + 1
        } else {
            pick
        }
    }

    fn decode(&self, record_id: &str, stream: u64, x: &[String], delta: f64) -> Hypothesis {
        let hid = rng::hash_str(record_id);
        let mut tokens = Vec::with_capacity(x.len());
        let mut step_logprobs = Vec::with_capacity(x.len());
        for (t, src) in x.iter().enumerate() {
            let correct = self.source_index(src);
            let corrupted = rng::uniform(&[self.seed, TAG_CORRUPT, hid, t as u64]) < delta;
            if corrupted {
                let w = self.other_index(correct, &[self.seed, TAG_WRONG, hid, stream, t as u64]);
                tokens.push(self.target_token(w));
                step_logprobs.push(self.wrong_logprob(delta));
            } else {
                tokens.push(self.target_token(correct));
                step_logprobs.push(Self::correct_logprob(delta));
            }
        }
        Hypothesis {
            tokens,
            step_logprobs,
        }
    }

    /// Sentence of `min_len..=max_len` uniform source tokens keyed by `id`.
    pub fn sentence(&self, id: &str) -> Tokens {
        let hid = rng::hash_str(id);
        let span = (self.max_len - self.min_len + 1) as u64;
        let len = self.min_len + rng::below(&[self.seed, TAG_LENGTH, hid], span) as usize;
        (0..len)
            .map(|t| {
                let i = rng::below(
                    &[self.seed, TAG_TOKEN, hid, t as u64],
                    self.vocab_size as u64,
                );
                self.source_token(i as usize)
            })
            .collect()
    }

    /// Frozen-encoder stand-in: a hashed bag-of-tokens projection plus a
    /// noisy copy of the quality score along a fixed direction.
    pub fn embedding(&self, record_id: &str, mt: &[String], quality: f64) -> Vec<f64> {
        let dim = self.embedding_dim;
        let hid = rng::hash_str(record_id);
        let mut rng = rng::stream(&[self.seed, TAG_EMBED_NOISE, hid]);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let signal = quality + self.embedding_noise * noise;

        let mut direction: Vec<f64> = (0..dim)
            .map(|j| {
                let mut r = rng::stream(&[self.seed, TAG_EMBED_DIR, j as u64]);
                StandardNormal.sample(&mut r)
            })
            .collect();
        let norm = direction
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        direction.iter_mut().for_each(|v| *v /= norm);

        let scale = if mt.is_empty() {
            0.0
        } else {
            0.5 / (mt.len() as f64).sqrt()
        };
        (0..dim)
            .map(|j| {
                let bag: f64 = mt
                    .iter()
                    .map(|tok| {
                        let h = rng::mix(&[TAG_EMBED_BAG, rng::hash_str(tok), j as u64]);
                        if h & 1 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .sum();
                scale * bag + direction[j] * signal
            })
            .collect()
    }
}

/// Backend over a [`SyntheticWorld`].
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    world: SyntheticWorld,
    overrides: HashMap<String, f64>,
}

impl SyntheticBackend {
    pub fn new(world: SyntheticWorld) -> Self {
        SyntheticBackend {
            world,
            overrides: HashMap::new(),
        }
    }

    /// Pins the difficulty of one record instead of drawing it.
    pub fn with_difficulty(mut self, record_id: impl Into<String>, delta: f64) -> Self {
        self.overrides.insert(record_id.into(), delta);
        self
    }

    pub fn world(&self) -> &SyntheticWorld {
        &self.world
    }

    pub fn difficulty(&self, record_id: &str) -> f64 {
        if let Some(&d) = self.overrides.get(record_id) {
            return d;
        }
        self.world.max_difficulty
            * rng::uniform(&[self.world.seed, TAG_DIFFICULTY, rng::hash_str(record_id)])
    }

    /// Per-sample difficulty under dropout, before clamping.
    fn jitter(&self, record_id: &str, sample: usize, base_seed: u64) -> f64 {
        if self.world.dropout_jitter == 0.0 {
            return 0.0;
        }
        let mut r = rng::stream(&[
            self.world.seed,
            TAG_JITTER,
            base_seed,
            rng::hash_str(record_id),
            sample as u64,
        ]);
        let z: f64 = StandardNormal.sample(&mut r);
        self.world.dropout_jitter * z
    }
}

impl ModelBackend for SyntheticBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::all()
    }

    fn translate(&self, key: DecodeKey<'_>, x: &[String]) -> Result<Hypothesis> {
        let delta = self.difficulty(key.record_id);
        Ok(self.world.decode(key.record_id, key.stream, x, delta))
    }

    fn mc_sample(
        &self,
        record_id: &str,
        x: &[String],
        m: usize,
        base_seed: u64,
    ) -> Result<SampleSet> {
        if m < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m });
        }
        let delta = self.difficulty(record_id);
        let samples = (0..m)
            .map(|k| {
                let d = (delta + self.jitter(record_id, k, base_seed))
                    .clamp(0.0, MAX_SAMPLE_DIFFICULTY);
                let key = DecodeKey::mc(record_id, k);
                let h = self.world.decode(record_id, key.stream, x, d);
                Sample::new(h.tokens, Some(h.step_logprobs))
            })
            .collect();
        Ok(SampleSet::new(record_id, SampleKind::McDropout, samples))
    }

    fn force_decode(&self, record_id: &str, x: &[String], y: &[String]) -> Result<Vec<f64>> {
        if y.is_empty() {
            return Err(Error::invalid("cannot force-decode an empty hypothesis"));
        }
        let delta = self.difficulty(record_id);
        let uniform = -(self.world.vocab_size as f64).ln();
        Ok(y.iter()
            .enumerate()
            .map(|(t, tok)| match x.get(t) {
                None => uniform,
                Some(src) => {
                    let correct = self.world.source_index(src);
                    match self.world.target_index(tok) {
                        Some(i) if i == correct => SyntheticWorld::correct_logprob(delta),
                        Some(_) => self.world.wrong_logprob(delta),
                        None => LOGPROB_FLOOR,
                    }
                }
            })
            .collect())
    }

    fn fill_masks(&self, req: MaskRequest<'_>) -> Result<MaskPrediction> {
        let positions = req.mask_positions();
        if positions.is_empty() {
            return Err(Error::invalid("input contains no <mask> token"));
        }
        let world = &self.world;
        let delta = if req.constraint.is_some() {
            world.mlm_noise / 2.0
        } else {
            world.mlm_noise
        };
        let correct_lp = (1.0 - delta).ln();
        let wrong_lp = world.wrong_logprob(delta);
        let hid = rng::hash_str(req.key.record_id);

        let out = positions
            .into_iter()
            .map(|p| {
                let original = req.original.and_then(|o| o.get(p));
                // Without an original token the MLM's favourite is the
                // successor of the nearest unmasked token to the left.
                let expected = match original {
                    Some(tok) => world.source_index(tok),
                    None => req.masked[..p]
                        .iter()
                        .rev()
                        .find(|t| *t != super::MASK)
                        .map_or(0, |t| (world.source_index(t) + 1) % world.vocab_size),
                };
                let keys = [world.seed, TAG_MLM, hid, req.key.stream, p as u64];
                let (predicted, pred_logprob) = if rng::uniform(&keys) < delta {
                    let w = world.other_index(
                        expected,
                        &[world.seed, TAG_MLM_WRONG, hid, req.key.stream, p as u64],
                    );
                    (w, wrong_lp)
                } else {
                    (expected, correct_lp)
                };
                let forced_logprob = if req.variant.is_simple() {
                    Some(match original {
                        Some(tok) if world.vocab_index(tok, 's').is_some() => correct_lp,
                        _ => LOGPROB_FLOOR,
                    })
                } else {
                    None
                };
                MaskPosition {
                    index: p,
                    predicted_token: world.source_token(predicted),
                    pred_logprob,
                    forced_logprob,
                }
            })
            .collect();
        Ok(MaskPrediction::new(req.key.record_id, req.variant, out))
    }
}

/// One generated split with all model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSplit {
    pub name: String,
    pub records: Vec<QERecord>,
    pub samples: Vec<SampleSet>,
    pub masks: Vec<MaskPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub splits: Vec<GeneratedSplit>,
    pub corpus: Vec<(Tokens, Tokens)>,
}

/// Generates records, model outputs, and an MT training corpus.
///
/// Record ids are `{split}-{index:06}`; gold scores are token accuracy of
/// the primary translation against the cipher reference.
pub fn generate_dataset(
    world: &SyntheticWorld,
    splits: &[(&str, usize)],
    corpus_size: usize,
    noise: &NoiseConfig,
    mc_samples: usize,
) -> Result<SyntheticDataset> {
    world.validate()?;
    noise.validate()?;
    let backend = SyntheticBackend::new(world.clone());
    let source = GenerativeEvidence {
        backend: &backend,
        noise: noise.clone(),
        mc_samples,
        seed: world.seed,
    };

    let mut out = Vec::with_capacity(splits.len());
    for &(name, n) in splits {
        let generated: Vec<(QERecord, Vec<SampleSet>, Vec<MaskPrediction>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let id = format!("{name}-{i:06}");
                let src = world.sentence(&id);
                let hyp = backend.translate(DecodeKey::primary(&id), &src)?;
                let gold = world.token_accuracy(&src, &hyp.tokens);
                let mut record = QERecord::from_tokens(id.clone(), src, hyp.tokens);
                record.step_logprobs = Some(hyp.step_logprobs);
                record.gold_score = Some(gold);
                record.embedding = Some(world.embedding(&id, &record.mt_tokens, gold));
                let ev = source.evidence(&record, EvidenceNeeds::all())?;
                let (samples, masks) = ev.into_files();
                Ok((record, samples, masks))
            })
            .collect::<Result<_>>()?;
        let mut split = GeneratedSplit {
            name: name.to_owned(),
            records: Vec::with_capacity(n),
            samples: Vec::new(),
            masks: Vec::new(),
        };
        for (r, s, m) in generated {
            split.records.push(r);
            split.samples.extend(s);
            split.masks.extend(m);
        }
        out.push(split);
    }

    let corpus = (0..corpus_size)
        .map(|i| {
            let src = world.sentence(&format!("corpus-{i:06}"));
            let tgt = world.cipher(&src);
            (src, tgt)
        })
        .collect();
    Ok(SyntheticDataset {
        splits: out,
        corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MASK;
    use crate::records::NoiseVariant;

    fn backend() -> SyntheticBackend {
        SyntheticBackend::new(SyntheticWorld::default())
    }

    fn src(n: usize) -> Tokens {
        (0..n).map(|i| format!("s{}", (i * 7) % 64)).collect()
    }

    #[test]
    fn noiseless_record_translates_exactly() {
        let b = backend().with_difficulty("r", 0.0);
        let x = src(12);
        let h = b.translate(DecodeKey::primary("r"), &x).unwrap();
        assert_eq!(h.tokens, b.world().cipher(&x));
        assert!(h.step_logprobs.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn logprobs_follow_the_defined_distribution() {
        let b = backend().with_difficulty("r", 0.5);
        let x = src(200);
        let h = b.translate(DecodeKey::primary("r"), &x).unwrap();
        let reference = b.world().cipher(&x);
        let wrong = (0.5f64 / 63.0).ln();
        assert!((wrong + 4.836_281_906_951_478).abs() < 1e-12);
        for ((tok, r), lp) in h.tokens.iter().zip(&reference).zip(&h.step_logprobs) {
            if tok == r {
                assert!((lp - 0.5f64.ln()).abs() < 1e-15);
            } else {
                assert!((lp - wrong).abs() < 1e-15);
            }
        }
        assert_eq!(h, b.translate(DecodeKey::primary("r"), &x).unwrap());
    }

    #[test]
    fn categorical_distribution_is_normalized() {
        let w = SyntheticWorld::default();
        for delta in [0.01, 0.2, 0.5, 0.9] {
            let total = SyntheticWorld::correct_logprob(delta).exp()
                + (w.vocab_size - 1) as f64 * w.wrong_logprob(delta).exp();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn token_accuracy_expectation() {
        for delta in [0.1, 0.3] {
            let b = backend();
            let mut correct = 0usize;
            let mut total = 0usize;
            for r in 0..250 {
                let id = format!("acc-{r}");
                let b = b.clone().with_difficulty(id.clone(), delta);
                let x = src(20);
                let h = b.translate(DecodeKey::primary(&id), &x).unwrap();
                let reference = b.world().cipher(&x);
                correct += h
                    .tokens
                    .iter()
                    .zip(&reference)
                    .filter(|(a, b)| a == b)
                    .count();
                total += x.len();
            }
            assert_eq!(total, 5000);
            let acc = correct as f64 / total as f64;
            assert!((acc - (1.0 - delta)).abs() <= 0.02, "delta {delta}: {acc}");
        }
    }

    #[test]
    fn force_decode_consistency() {
        let b = backend().with_difficulty("r", 0.2);
        let x = src(10);
        let lp = b.force_decode("r", &x, &b.world().cipher(&x)).unwrap();
        assert!(lp.iter().all(|&p| (p - 0.8f64.ln()).abs() < 1e-15));
        let h = b.translate(DecodeKey::primary("r"), &x).unwrap();
        assert_eq!(b.force_decode("r", &x, &h.tokens).unwrap(), h.step_logprobs);
        assert!(b.force_decode("r", &x, &[]).is_err());
    }

    #[test]
    fn mc_sample_counts_and_limits() {
        let b = backend();
        let x = src(10);
        assert_eq!(b.mc_sample("r", &x, 30, 0).unwrap().samples.len(), 30);
        assert!(b.mc_sample("r", &x, 1, 0).is_err());

        let still = SyntheticBackend::new(SyntheticWorld {
            dropout_jitter: 0.0,
            ..SyntheticWorld::default()
        })
        .with_difficulty("r", 0.0);
        let greedy = still.translate(DecodeKey::primary("r"), &x).unwrap();
        let set = still.mc_sample("r", &x, 5, 9).unwrap();
        assert!(set.samples.iter().all(|s| s.hyp_tokens == greedy.tokens));
    }

    #[test]
    fn fill_masks_distribution() {
        let b = backend();
        let x = src(6);
        let mut masked = x.clone();
        masked[2] = MASK.into();
        masked[4] = MASK.into();
        let req = MaskRequest {
            key: DecodeKey::noised("r", NoiseVariant::Simple, 0),
            variant: NoiseVariant::Simple,
            masked: &masked,
            constraint: None,
            original: Some(&x),
        };
        let pred = b.fill_masks(req).unwrap();
        assert_eq!(pred.positions.len(), 2);
        for p in &pred.positions {
            if p.predicted_token == x[p.index] {
                assert!((p.pred_logprob - 0.9f64.ln()).abs() < 1e-15);
            }
            assert!((p.forced_logprob.unwrap() - 0.9f64.ln()).abs() < 1e-15);
        }

        let y = b.world().cipher(&x);
        let constrained = b
            .fill_masks(MaskRequest {
                constraint: Some(&y),
                variant: NoiseVariant::SimpleY,
                ..req
            })
            .unwrap();
        for p in &constrained.positions {
            if p.predicted_token == x[p.index] {
                assert!((p.pred_logprob - 0.95f64.ln()).abs() < 1e-15);
            }
        }

        let pe = b
            .fill_masks(MaskRequest {
                variant: NoiseVariant::Pe,
                original: None,
                ..req
            })
            .unwrap();
        assert!(pe.positions.iter().all(|p| p.forced_logprob.is_none()));

        assert!(b.fill_masks(MaskRequest { masked: &x, ..req }).is_err());
    }

    #[test]
    fn generated_gold_is_token_accuracy() {
        let world = SyntheticWorld {
            seed: 3,
            ..SyntheticWorld::default()
        };
        let ds = generate_dataset(&world, &[("dev", 20)], 10, &NoiseConfig::default(), 4).unwrap();
        let split = &ds.splits[0];
        assert_eq!(split.records.len(), 20);
        for r in &split.records {
            let acc = world.token_accuracy(&r.src_tokens, &r.mt_tokens);
            assert_eq!(r.gold_score, Some(acc));
            assert_eq!(r.embedding.as_ref().unwrap().len(), 16);
        }
        assert_eq!(ds.corpus.len(), 10);
    }
}
