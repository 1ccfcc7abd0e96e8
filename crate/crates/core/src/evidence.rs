//! Model outputs gathered per record before feature computation.

use std::collections::{BTreeMap, BTreeSet};

use crate::backend::{DecodeKey, ModelBackend};
use crate::error::Result;
use crate::noiser::{make_noised_inputs, NoiseConfig};
use crate::records::{MaskPrediction, NoiseVariant, QERecord, Sample, SampleSet};

/// Which model outputs a feature selection needs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvidenceNeeds {
    pub mc: bool,
    pub noise: BTreeSet<NoiseVariant>,
    pub masks: BTreeSet<NoiseVariant>,
}

impl EvidenceNeeds {
    pub fn all() -> Self {
        EvidenceNeeds {
            mc: true,
            noise: NoiseVariant::ALL.into_iter().collect(),
            masks: NoiseVariant::ALL.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.mc && self.noise.is_empty() && self.masks.is_empty()
    }
}

/// Dropout samples, noised-input decodes, and mask predictions for one
/// record. Absent entries mean the output is unavailable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordEvidence {
    pub mc: Option<SampleSet>,
    pub noise: BTreeMap<NoiseVariant, SampleSet>,
    pub masks: BTreeMap<NoiseVariant, Vec<MaskPrediction>>,
}

impl RecordEvidence {
    /// Flattens into the lines of a sample file and a mask file.
    pub fn into_files(self) -> (Vec<SampleSet>, Vec<MaskPrediction>) {
        let samples = self
            .mc
            .into_iter()
            .chain(self.noise.into_values())
            .collect();
        let masks = self.masks.into_values().flatten().collect();
        (samples, masks)
    }
}

pub trait EvidenceSource: Sync {
    fn evidence(&self, record: &QERecord, needs: EvidenceNeeds) -> Result<RecordEvidence>;
}

/// Produces evidence by querying a backend that can generate.
pub struct GenerativeEvidence<'a> {
    pub backend: &'a dyn ModelBackend,
    pub noise: NoiseConfig,
    pub mc_samples: usize,
    pub seed: u64,
}

impl GenerativeEvidence<'_> {
    fn noised_set(
        &self,
        record: &QERecord,
        variant: NoiseVariant,
    ) -> Result<(SampleSet, Vec<MaskPrediction>)> {
        let id = record.id.as_str();
        let noised = make_noised_inputs(
            id,
            &record.src_tokens,
            Some(&record.mt_tokens),
            variant,
            &self.noise,
            self.backend,
        )?;
        let mut samples = Vec::with_capacity(noised.inputs.len());
        for (i, x_tilde) in noised.inputs.into_iter().enumerate() {
            let hyp = self
                .backend
                .translate(DecodeKey::noised(id, variant, i), &x_tilde)?;
            // Scored by the fixed model on the noised input.
            let step_logprobs = if hyp.tokens.is_empty() {
                Vec::new()
            } else {
                self.backend.force_decode(id, &x_tilde, &hyp.tokens)?
            };
            let mut sample = Sample::new(hyp.tokens, Some(step_logprobs));
            sample.noised_src_tokens = Some(x_tilde);
            samples.push(sample);
        }
        Ok((
            SampleSet::new(id, variant.sample_kind(), samples),
            noised.predictions,
        ))
    }
}

impl EvidenceSource for GenerativeEvidence<'_> {
    fn evidence(&self, record: &QERecord, needs: EvidenceNeeds) -> Result<RecordEvidence> {
        let mut ev = RecordEvidence::default();
        if needs.mc && !record.src_tokens.is_empty() {
            ev.mc = Some(self.backend.mc_sample(
                &record.id,
                &record.src_tokens,
                self.mc_samples,
                self.seed,
            )?);
        }
        // Simple masking of an empty source has nothing to mask; the
        // variant stays absent and its features are flagged downstream.
        if record.src_tokens.is_empty() {
            return Ok(ev);
        }
        let variants: BTreeSet<NoiseVariant> = needs.noise.union(&needs.masks).copied().collect();
        for v in variants {
            let (set, preds) = self.noised_set(record, v)?;
            if needs.noise.contains(&v) {
                ev.noise.insert(v, set);
            }
            if needs.masks.contains(&v) {
                ev.masks.insert(v, preds);
            }
        }
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FileBackend, SyntheticBackend, SyntheticWorld};

    #[test]
    fn generated_evidence_replays_through_files() {
        let backend = SyntheticBackend::new(SyntheticWorld::default());
        let gen = GenerativeEvidence {
            backend: &backend,
            noise: NoiseConfig::default(),
            mc_samples: 5,
            seed: 1,
        };
        let x: Vec<String> = (0..7).map(|i| format!("s{i}")).collect();
        let h = backend.translate(DecodeKey::primary("r"), &x).unwrap();
        let mut rec = QERecord::from_tokens("r", x, h.tokens);
        rec.step_logprobs = Some(h.step_logprobs);
        let ev = gen.evidence(&rec, EvidenceNeeds::all()).unwrap();
        assert_eq!(ev.mc.as_ref().unwrap().samples.len(), 5);
        assert_eq!(ev.noise[&NoiseVariant::Simple].samples.len(), 7);
        assert_eq!(ev.noise[&NoiseVariant::Pe].samples.len(), 4);

        let (samples, masks) = ev.clone().into_files();
        let file = FileBackend::from_parts(Some(vec![rec.clone()]), Some(samples), Some(masks));
        assert_eq!(file.evidence(&rec, EvidenceNeeds::all()).unwrap(), ev);
    }

    #[test]
    fn empty_source_yields_no_noise() {
        let backend = SyntheticBackend::new(SyntheticWorld::default());
        let gen = GenerativeEvidence {
            backend: &backend,
            noise: NoiseConfig::default(),
            mc_samples: 3,
            seed: 1,
        };
        let rec = QERecord::from_tokens("e", vec![], vec![]);
        let ev = gen.evidence(&rec, EvidenceNeeds::all()).unwrap();
        assert!(ev.mc.is_none() && ev.noise.is_empty() && ev.masks.is_empty());
    }
}
