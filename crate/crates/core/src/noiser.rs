//! Noised source inputs: per-position masking and the "post-editing"
//! procedure (rounds of random deletion then random mask insertion), with
//! masks filled by the backend's masked language model.

use rand::Rng;

use crate::backend::{DecodeKey, MaskRequest, ModelBackend, MASK};
use crate::error::{Error, Result};
use crate::records::{MaskPrediction, NoiseVariant, Tokens};
use crate::rng;

const TAG_PE: u64 = 0x0050_454e_4f49_5345; // "PENOISE"

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Rounds of delete-then-insert.
    pub rounds: usize,
    /// Per-token deletion probability.
    pub p_d: f64,
    /// Per-gap mask insertion probability.
    pub p_i: f64,
    /// Post-edited inputs generated per record.
    pub n_variants: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rounds: 2,
            p_d: 0.15,
            p_i: 0.15,
            n_variants: 4,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if self.n_variants < 1 {
            return Err(Error::invalid("n_variants must be >= 1"));
        }
        for (name, p) in [("p_d", self.p_d), ("p_i", self.p_i)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One variant per position, each with exactly that position masked.
pub fn mask_each_position(x: &[String]) -> Result<Vec<Tokens>> {
    if x.is_empty() {
        return Err(Error::invalid("cannot mask an empty sequence"));
    }
    Ok((0..x.len())
        .map(|t| {
            let mut v = x.to_vec();
            v[t] = MASK.to_owned();
            v
        })
        .collect())
}

/// Post-edit noise for one variant.
///
/// Each round first deletes every current token independently with
/// probability `p_d`, then inserts a mask at each of the `len + 1` gaps
/// independently with probability `p_i`. The draw sequence is keyed by
/// `(cfg.seed, record_id, variant_index)`.
pub fn pe_noise(x: &[String], cfg: &NoiseConfig, record_id: &str, variant_index: usize) -> Tokens {
    let mut rng = rng::stream(&[
        cfg.seed,
        TAG_PE,
        rng::hash_str(record_id),
        variant_index as u64,
    ]);
    let mut current = x.to_vec();
    for _ in 0..cfg.rounds {
        current.retain(|_| rng.gen::<f64>() >= cfg.p_d);
        let mut next = Vec::with_capacity(current.len() * 2 + 1);
        for tok in current.drain(..) {
            if rng.gen::<f64>() < cfg.p_i {
                next.push(MASK.to_owned());
            }
            next.push(tok);
        }
        if rng.gen::<f64>() < cfg.p_i {
            next.push(MASK.to_owned());
        }
        current = next;
    }
    current
}

/// Noised inputs for one variant plus the raw mask predictions behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedInputs {
    pub inputs: Vec<Tokens>,
    pub predictions: Vec<MaskPrediction>,
}

/// Builds the masked inputs for `variant`, has the backend fill them, and
/// substitutes the predictions back in.
///
/// Masks the backend leaves unfilled are dropped from the result so that
/// every returned input is mask-free.
pub fn make_noised_inputs(
    record_id: &str,
    x: &[String],
    y: Option<&[String]>,
    variant: NoiseVariant,
    cfg: &NoiseConfig,
    backend: &dyn ModelBackend,
) -> Result<NoisedInputs> {
    if variant.uses_translation() && y.is_none() {
        return Err(Error::invalid(format!(
            "variant {} needs the translation",
            variant.label()
        )));
    }
    if !backend.capabilities().fill_masks {
        return Err(Error::Unsupported("fill_masks"));
    }
    let masked: Vec<Tokens> = if variant.is_simple() {
        mask_each_position(x)?
    } else {
        (0..cfg.n_variants)
            .map(|i| pe_noise(x, cfg, record_id, i))
            .collect()
    };
    let constraint = if variant.uses_translation() { y } else { None };

    let mut out = NoisedInputs {
        inputs: Vec::with_capacity(masked.len()),
        predictions: Vec::with_capacity(masked.len()),
    };
    for (i, xm) in masked.iter().enumerate() {
        if !xm.iter().any(|t| t == MASK) {
            out.inputs.push(xm.clone());
            continue;
        }
        let pred = backend.fill_masks(MaskRequest {
            key: DecodeKey::noised(record_id, variant, i),
            variant,
            masked: xm,
            constraint,
            original: variant.is_simple().then_some(x),
        })?;
        let mut filled: Vec<Option<String>> = xm.iter().cloned().map(Some).collect();
        for p in &pred.positions {
            if let Some(slot) = filled.get_mut(p.index) {
                if slot.as_deref() == Some(MASK) {
                    *slot = Some(p.predicted_token.clone());
                }
            }
        }
        let residual = filled.iter().filter(|s| s.as_deref() == Some(MASK)).count();
        if residual > 0 {
            log::warn!("{record_id}: dropping {residual} unfilled mask(s) from noised input {i}");
        }
        out.inputs
            .push(filled.into_iter().flatten().filter(|t| t != MASK).collect());
        out.predictions.push(pred);
    }
    Ok(out)
}
