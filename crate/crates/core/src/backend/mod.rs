//! The boundary to MT systems and masked language models.
//!
//! Everything that would need a neural model goes through [`ModelBackend`].
//! Two implementations ship: [`SyntheticBackend`], a deterministic toy world
//! with known ground truth, and [`FileBackend`], which replays outputs that
//! real models produced offline.

mod file;
mod synthetic;

pub use file::FileBackend;
pub use synthetic::{
    generate_dataset, GeneratedSplit, SyntheticBackend, SyntheticDataset, SyntheticWorld,
    LOGPROB_FLOOR,
};

use std::fmt;

use crate::error::Result;
use crate::records::{MaskPrediction, NoiseVariant, SampleSet, Tokens};

/// Literal mask token at the token level.
pub const MASK: &str = "<mask>";

/// Default number of MC-dropout samples per record.
pub const DEFAULT_MC_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub translate: bool,
    pub mc_sample: bool,
    pub force_decode: bool,
    pub fill_masks: bool,
}

impl Capabilities {
    pub fn all() -> Self {
        Capabilities {
            translate: true,
            mc_sample: true,
            force_decode: true,
            fill_masks: true,
        }
    }
}

impl fmt::Display for Capabilities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.translate, "translate"),
            (self.mc_sample, "mc_sample"),
            (self.force_decode, "force_decode"),
            (self.fill_masks, "fill_masks"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// Addresses one decoding pass: which record it belongs to and which
/// random stream it draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeKey<'a> {
    pub record_id: &'a str,
    pub stream: u64,
}

impl<'a> DecodeKey<'a> {
    pub fn primary(record_id: &'a str) -> Self {
        DecodeKey {
            record_id,
            stream: 0,
        }
    }

    /// Stream for the `index`-th noised input of `variant`.
    pub fn noised(record_id: &'a str, variant: NoiseVariant, index: usize) -> Self {
        DecodeKey {
            record_id,
            stream: ((2 + variant.index()) << 32) | index as u64,
        }
    }

    pub fn mc(record_id: &'a str, sample: usize) -> Self {
        DecodeKey {
            record_id,
            stream: (1 << 32) | sample as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Tokens,
    pub step_logprobs: Vec<f64>,
}

/// A request to fill every `<mask>` in `masked`.
#[derive(Debug, Clone, Copy)]
pub struct MaskRequest<'a> {
    pub key: DecodeKey<'a>,
    pub variant: NoiseVariant,
    pub masked: &'a [String],
    /// Translation appended as a semantic constraint (`*-y` variants).
    pub constraint: Option<&'a [String]>,
    /// The unmasked input, aligned position by position with `masked`. Known
    /// only for the simple variants; enables forced log-probabilities.
    pub original: Option<&'a [String]>,
}

impl MaskRequest<'_> {
    pub fn mask_positions(&self) -> Vec<usize> {
        self.masked
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == MASK)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Access to an MT model (θ, plus dropout-perturbed θ̂) and a masked LM.
///
/// Implementations are immutable after construction and may be queried from
/// many threads. Operations outside [`ModelBackend::capabilities`] return
/// [`crate::Error::Unsupported`].
pub trait ModelBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Decodes `x`, returning one log-probability per emitted token.
    fn translate(&self, key: DecodeKey<'_>, x: &[String]) -> Result<Hypothesis>;

    /// Draws `m >= 2` hypotheses with dropout active at inference.
    fn mc_sample(
        &self,
        record_id: &str,
        x: &[String],
        m: usize,
        base_seed: u64,
    ) -> Result<SampleSet>;

    /// Log-probability of each token of `y` given `x` under the fixed model.
    fn force_decode(&self, record_id: &str, x: &[String], y: &[String]) -> Result<Vec<f64>>;

    fn fill_masks(&self, request: MaskRequest<'_>) -> Result<MaskPrediction>;
}
