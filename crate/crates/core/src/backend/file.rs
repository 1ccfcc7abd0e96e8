use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{Capabilities, DecodeKey, Hypothesis, MaskRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceNeeds, EvidenceSource, RecordEvidence};
use crate::records::{
    read_jsonl_records, read_mask_predictions, read_sample_sets, MaskPrediction, NoiseVariant,
    QERecord, SampleKind, SampleSet,
};

/// Replays model outputs produced offline, looked up by record id.
///
/// Capabilities follow the files provided: a record file enables
/// `translate` and `force_decode`, a sample file `mc_sample`, and a
/// mask-prediction file `fill_masks`.
#[derive(Debug, Clone, Default)]
pub struct FileBackend {
    records: HashMap<String, QERecord>,
    samples: HashMap<String, BTreeMap<SampleKind, SampleSet>>,
    masks: HashMap<String, BTreeMap<NoiseVariant, Vec<MaskPrediction>>>,
    caps: Capabilities,
}

impl FileBackend {
    pub fn load(
        records: Option<&Path>,
        samples: Option<&Path>,
        masks: Option<&Path>,
    ) -> Result<Self> {
        let records = records.map(read_jsonl_records).transpose()?;
        let samples = samples.map(read_sample_sets).transpose()?;
        let masks = masks.map(read_mask_predictions).transpose()?;
        Ok(Self::from_parts(records, samples, masks))
    }

    pub fn from_parts(
        records: Option<Vec<QERecord>>,
        samples: Option<Vec<SampleSet>>,
        masks: Option<Vec<MaskPrediction>>,
    ) -> Self {
        let mut backend = FileBackend::default();
        if let Some(records) = records {
            backend.caps.translate = true;
            backend.caps.force_decode = true;
            backend.records = records.into_iter().map(|r| (r.id.clone(), r)).collect();
        }
        if let Some(samples) = samples {
            backend.caps.mc_sample = true;
            for set in samples {
                let per_record = backend.samples.entry(set.record_id.clone()).or_default();
                match per_record.get_mut(&set.kind) {
                    // Multiple lines for one (record, kind) concatenate.
                    Some(existing) => existing.samples.extend(set.samples),
                    None => {
                        per_record.insert(set.kind, set);
                    }
                }
            }
        }
        if let Some(masks) = masks {
            backend.caps.fill_masks = true;
            for m in masks {
                backend
                    .masks
                    .entry(m.record_id.clone())
                    .or_default()
                    .entry(m.variant)
                    .or_default()
                    .push(m);
            }
        }
        backend
    }

    pub fn record(&self, id: &str) -> Option<&QERecord> {
        self.records.get(id)
    }

    fn not_covered(id: &str) -> Error {
        Error::NotCovered(id.to_owned())
    }

    /// Finds stored log-probs for decoding `x` (optionally into `y`).
    fn lookup(&self, id: &str, x: &[String], y: Option<&[String]>) -> Result<Hypothesis> {
        let record = self.records.get(id).ok_or_else(|| Self::not_covered(id))?;
        if record.src_tokens == x && y.is_none_or(|y| y == record.mt_tokens) {
            if let Some(lp) = &record.step_logprobs {
                return Ok(Hypothesis {
                    tokens: record.mt_tokens.clone(),
                    step_logprobs: lp.clone(),
                });
            }
        }
        let noised = self
            .samples
            .get(id)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(|(kind, _)| kind.noise_variant().is_some())
            .flat_map(|(_, set)| &set.samples);
        for s in noised {
            if s.noised_src_tokens.as_deref() == Some(x) && y.is_none_or(|y| y == s.hyp_tokens) {
                if let Some(lp) = &s.step_logprobs {
                    return Ok(Hypothesis {
                        tokens: s.hyp_tokens.clone(),
                        step_logprobs: lp.clone(),
                    });
                }
            }
        }
        Err(Self::not_covered(id))
    }
}

impl ModelBackend for FileBackend {
    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn translate(&self, key: DecodeKey<'_>, x: &[String]) -> Result<Hypothesis> {
        if !self.caps.translate {
            return Err(Error::Unsupported("translate"));
        }
        self.lookup(key.record_id, x, None)
    }

    fn mc_sample(&self, record_id: &str, _x: &[String], m: usize, _seed: u64) -> Result<SampleSet> {
        if !self.caps.mc_sample {
            return Err(Error::Unsupported("mc_sample"));
        }
        if m < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m });
        }
        let set = self
            .samples
            .get(record_id)
            .and_then(|s| s.get(&SampleKind::McDropout))
            .ok_or_else(|| Self::not_covered(record_id))?;
        if set.samples.len() < m {
            return Err(Error::InsufficientSamples {
                needed: m,
                got: set.samples.len(),
            });
        }
        let mut out = set.clone();
        out.samples.truncate(m);
        Ok(out)
    }

    fn force_decode(&self, record_id: &str, x: &[String], y: &[String]) -> Result<Vec<f64>> {
        if !self.caps.force_decode {
            return Err(Error::Unsupported("force_decode"));
        }
        if y.is_empty() {
            return Err(Error::invalid("cannot force-decode an empty hypothesis"));
        }
        self.lookup(record_id, x, Some(y)).map(|h| h.step_logprobs)
    }

    /// Returns the stored prediction of the same variant whose positions
    /// coincide with the masks in the request.
    fn fill_masks(&self, req: MaskRequest<'_>) -> Result<MaskPrediction> {
        if !self.caps.fill_masks {
            return Err(Error::Unsupported("fill_masks"));
        }
        let wanted = req.mask_positions();
        if wanted.is_empty() {
            return Err(Error::invalid("input contains no <mask> token"));
        }
        self.masks
            .get(req.key.record_id)
            .and_then(|m| m.get(&req.variant))
            .and_then(|preds| {
                preds.iter().find(|p| {
                    p.positions
                        .iter()
                        .map(|q| q.index)
                        .eq(wanted.iter().copied())
                })
            })
            .cloned()
            .ok_or_else(|| Self::not_covered(req.key.record_id))
    }
}

impl EvidenceSource for FileBackend {
    fn evidence(&self, record: &QERecord, needs: EvidenceNeeds) -> Result<RecordEvidence> {
        let mut ev = RecordEvidence::default();
        let stored = self.samples.get(&record.id);
        if needs.mc {
            ev.mc = stored.and_then(|s| s.get(&SampleKind::McDropout)).cloned();
        }
        for v in NoiseVariant::ALL {
            if needs.noise.contains(&v) {
                if let Some(set) = stored.and_then(|s| s.get(&v.sample_kind())) {
                    ev.noise.insert(v, set.clone());
                }
            }
            if needs.masks.contains(&v) {
                if let Some(preds) = self.masks.get(&record.id).and_then(|m| m.get(&v)) {
                    ev.masks.insert(v, preds.clone());
                }
            }
        }
        Ok(ev)
    }
}
