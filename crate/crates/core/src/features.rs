//! Groups I-V assembled into named feature vectors.
//!
//! Names follow `<group>.<family>.<component>`, for example `I.Psteps.E`,
//! `III.DS-neighbors.y-K10` or `IV.Noise-Psteps-PE-y.Combo`. The family
//! (everything before the last dot) is the unit of selection and ranking.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus_index::{CorpusIndex, Guarded, Side, MAX_ORDER};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceNeeds, EvidenceSource, RecordEvidence};
use crate::records::{NoiseVariant, QERecord, SampleSet};
use crate::stats::triple_stat;
use crate::textmetrics::{pairwise_mean_sim, sim};

pub const GROUPS: [&str; 5] = ["I", "II", "III", "IV", "V"];
pub const STATS: [&str; 3] = ["E", "Std", "Combo"];
pub const DEFAULT_NGRAM_N: [usize; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_NEIGHBOR_K: [usize; 5] = [1, 3, 5, 10, 30];

/// Named feature values in a fixed order, plus the names that hit a
/// degeneracy guard and were materialized as 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(String, f64)>,
    flags: BTreeSet<String>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        debug_assert!(value.is_finite());
        self.entries.push((name.into(), value));
    }

    /// Pushes 0 and records the name as degenerate.
    pub fn push_flagged(&mut self, name: impl Into<String>) {
        let name = name.into();
        self.flags.insert(name.clone());
        self.entries.push((name, 0.0));
    }

    pub fn flag(&mut self, name: &str) {
        self.flags.insert(name.to_owned());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, v)| *v)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn flags(&self) -> &BTreeSet<String> {
        &self.flags
    }

    pub fn is_flagged(&self, name: &str) -> bool {
        self.flags.contains(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.entries.extend(other.entries);
        self.flags.extend(other.flags);
    }

    fn retain_families(&mut self, keep: &BTreeSet<String>) {
        self.entries.retain(|(n, _)| keep.contains(family_of(n)));
        let names: BTreeSet<&str> = self.entries.iter().map(|(n, _)| n.as_str()).collect();
        self.flags.retain(|f| names.contains(f.as_str()));
    }

    /// Pushes the three indicators of `xs` under `family`, zero-flagging all
    /// three when `xs` is empty and the combo when the deviation vanishes.
    fn push_triple(&mut self, family: &str, xs: &[f64]) {
        match triple_stat(xs) {
            Ok(t) => {
                let combo = format!("{family}.Combo");
                self.push(format!("{family}.E"), t.mean);
                self.push(format!("{family}.Std"), t.std);
                if t.combo_guarded() {
                    self.push_flagged(combo);
                } else {
                    self.push(combo, t.combo);
                }
            }
            Err(_) => self.push_flagged_triple(family),
        }
    }

    fn push_flagged_triple(&mut self, family: &str) {
        for s in STATS {
            self.push_flagged(format!("{family}.{s}"));
        }
    }

    fn push_guarded(&mut self, name: String, g: Guarded) {
        if g.degenerate {
            self.flags.insert(name.clone());
        }
        self.push(name, g.value);
    }
}

/// Family prefix of a feature name.
pub fn family_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(f, _)| f)
}

pub fn group_of(name: &str) -> &str {
    name.split_once('.').map_or(name, |(g, _)| g)
}

/// Orders and neighbor counts used by Group III.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub ngram_n: Vec<usize>,
    pub neighbor_k: Vec<usize>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            ngram_n: DEFAULT_NGRAM_N.to_vec(),
            neighbor_k: DEFAULT_NEIGHBOR_K.to_vec(),
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_n.is_empty() || self.ngram_n.iter().any(|&n| n == 0 || n > MAX_ORDER) {
            return Err(Error::invalid(format!(
                "ngram orders must be within 1..={MAX_ORDER}"
            )));
        }
        if self.neighbor_k.is_empty()
            || self.neighbor_k[0] == 0
            || self.neighbor_k.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(
                "neighbor counts must be positive and strictly ascending",
            ));
        }
        Ok(())
    }
}

fn variant_families(stem: &str) -> impl Iterator<Item = String> + '_ {
    NoiseVariant::ALL
        .into_iter()
        .map(move |v| format!("{stem}-{}", v.label()))
}

/// The 24 ranking families in canonical order.
pub fn families() -> Vec<String> {
    let mut out: Vec<String> = ["I.Psteps", "II.MC-Sim", "II.MC-Sim-Inner", "II.MC-Psteps"]
        .iter()
        .chain(&["III.DS-gram", "III.DS-neighbors"])
        .map(|s| s.to_string())
        .collect();
    out.extend(variant_families("IV.Noise-Sim"));
    out.extend(variant_families("IV.Noise-Sim-Inner"));
    out.extend(variant_families("IV.Noise-Psteps"));
    out.extend(variant_families("V.MLM-Pmask"));
    out.push("V.MLM-FPmask".into());
    out.push("V.MLM-FPmask-y".into());
    out
}

/// Every feature name in canonical order (81 with the default spec).
pub fn catalog(spec: &FeatureSpec) -> Vec<String> {
    let mut out = Vec::new();
    for family in families() {
        match family.as_str() {
            "III.DS-gram" => out.extend(spec.ngram_n.iter().map(|n| format!("{family}.{n}-gram"))),
            "III.DS-neighbors" => {
                for side in [Side::Src, Side::Tgt] {
                    out.extend(
                        spec.neighbor_k
                            .iter()
                            .map(|k| format!("{family}.{}-K{k}", side.label())),
                    );
                }
            }
            _ => out.extend(STATS.iter().map(|s| format!("{family}.{s}"))),
        }
    }
    out
}

/// A set of enabled feature families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroupSelection {
    families: BTreeSet<String>,
}

impl FeatureGroupSelection {
    pub fn all() -> Self {
        FeatureGroupSelection {
            families: families().into_iter().collect(),
        }
    }

    /// Parses a comma-separated list of `all`, group numerals (`II`), or
    /// family names (`IV.Noise-Sim-PE-y`).
    pub fn parse(list: &str) -> Result<Self> {
        let known = families();
        let mut selected = BTreeSet::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item.eq_ignore_ascii_case("all") {
                selected.extend(known.iter().cloned());
            } else if GROUPS.contains(&item) {
                selected.extend(known.iter().filter(|f| group_of(f) == item).cloned());
            } else if known.iter().any(|f| f == item) {
                selected.insert(item.to_owned());
            } else {
                return Err(Error::invalid(format!("unknown feature group {item:?}")));
            }
        }
        if selected.is_empty() {
            return Err(Error::invalid("empty feature selection"));
        }
        Ok(FeatureGroupSelection { families: selected })
    }

    pub fn from_families<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let joined: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
        Self::parse(&joined.join(","))
    }

    pub fn contains(&self, family: &str) -> bool {
        self.families.contains(family)
    }

    /// Enabled families in canonical order.
    pub fn families(&self) -> Vec<String> {
        families()
            .into_iter()
            .filter(|f| self.families.contains(f))
            .collect()
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.families.iter().any(|f| group_of(f) == group)
    }

    /// Model outputs the enabled families consume.
    pub fn needs(&self) -> EvidenceNeeds {
        let mut needs = EvidenceNeeds {
            mc: self.has_group("II"),
            ..EvidenceNeeds::default()
        };
        for v in NoiseVariant::ALL {
            let label = v.label();
            if ["Noise-Sim", "Noise-Sim-Inner", "Noise-Psteps"]
                .iter()
                .any(|s| self.contains(&format!("IV.{s}-{label}")))
            {
                needs.noise.insert(v);
            }
            if self.contains(&format!("V.MLM-Pmask-{label}")) {
                needs.masks.insert(v);
            }
        }
        if self.contains("V.MLM-FPmask") {
            needs.masks.insert(NoiseVariant::Simple);
        }
        if self.contains("V.MLM-FPmask-y") {
            needs.masks.insert(NoiseVariant::SimpleY);
        }
        needs
    }

    /// Catalog names restricted to the selection.
    pub fn feature_names(&self, spec: &FeatureSpec) -> Vec<String> {
        catalog(spec)
            .into_iter()
            .filter(|n| self.contains(family_of(n)))
            .collect()
    }
}

impl FromStr for FeatureGroupSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for FeatureGroupSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.families.len() == families().len() {
            return f.write_str("all");
        }
        f.write_str(&self.families().join(","))
    }
}

/// Group I: indicators of the primary translation's step log-probs.
pub fn group1(record: &QERecord) -> Result<FeatureVector> {
    let lp = record
        .step_logprobs
        .as_ref()
        .ok_or_else(|| Error::group("I", "group I requires decoder log-probs"))?;
    let mut fv = FeatureVector::new();
    fv.push_triple("I.Psteps", lp);
    Ok(fv)
}

fn sims_to(y: &[String], set: &SampleSet) -> Vec<f64> {
    set.samples
        .iter()
        .map(|s| sim(&s.hyp_tokens, y).value())
        .collect()
}

fn inner_sims(set: &SampleSet) -> Vec<f64> {
    let hyps = set.hypotheses();
    pairwise_mean_sim(&hyps)
        .map(|(_, pairs)| pairs)
        .unwrap_or_default()
}

fn mean_logprobs(set: &SampleSet) -> Vec<f64> {
    set.samples
        .iter()
        .filter_map(|s| s.mean_logprob())
        .collect()
}

/// Group II: agreement with and among dropout samples, and their confidence.
pub fn group2(record: &QERecord, samples: &SampleSet) -> Result<FeatureVector> {
    let fail = |m: String| Error::group("II", m);
    if samples.samples.len() < 2 {
        return Err(fail(format!(
            "record {:?}: need at least 2 MC-dropout samples, got {}",
            record.id,
            samples.samples.len()
        )));
    }
    if samples.samples.iter().any(|s| s.step_logprobs.is_none()) {
        return Err(fail(format!(
            "record {:?}: MC-dropout samples lack step log-probs",
            record.id
        )));
    }
    let mut fv = FeatureVector::new();
    fv.push_triple("II.MC-Sim", &sims_to(&record.mt_tokens, samples));
    fv.push_triple("II.MC-Sim-Inner", &inner_sims(samples));
    fv.push_triple("II.MC-Psteps", &mean_logprobs(samples));
    Ok(fv)
}

/// Group III: n-gram coverage of the source and neighbor similarity on both
/// sides.
pub fn group3(record: &QERecord, index: &CorpusIndex, spec: &FeatureSpec) -> Result<FeatureVector> {
    let mut fv = FeatureVector::new();
    for &n in &spec.ngram_n {
        let g = index
            .ds_gram(&record.src_tokens, n)
            .map_err(|e| Error::group("III", e))?;
        fv.push_guarded(format!("III.DS-gram.{n}-gram"), g);
    }
    for (side, q) in [
        (Side::Src, &record.src_tokens),
        (Side::Tgt, &record.mt_tokens),
    ] {
        // One scan for the largest K serves every smaller K.
        let k_max = *spec.neighbor_k.last().expect("validated non-empty");
        let nearest = index
            .nearest(q, k_max, side)
            .map_err(|e| Error::group("III", e))?;
        let sentences = index.sentences(side);
        let sims: Vec<f64> = nearest
            .iter()
            .map(|&(_, pos)| sim(q, &sentences[pos]).value())
            .collect();
        for &k in &spec.neighbor_k {
            let used = &sims[..k.min(sims.len())];
            let mean = used.iter().sum::<f64>() / used.len() as f64;
            let g = Guarded {
                value: mean,
                degenerate: used.len() < k,
            };
            fv.push_guarded(format!("III.DS-neighbors.{}-K{k}", side.label()), g);
        }
    }
    Ok(fv)
}

/// Group IV: translations of noised sources, per variant. A missing variant
/// yields nine flagged zeros.
pub fn group4(record: &QERecord, evidence: &RecordEvidence) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let get = |v: NoiseVariant| evidence.noise.get(&v).filter(|s| !s.samples.is_empty());
    for v in NoiseVariant::ALL {
        let family = format!("IV.Noise-Sim-{}", v.label());
        match get(v) {
            Some(set) => fv.push_triple(&family, &sims_to(&record.mt_tokens, set)),
            None => fv.push_flagged_triple(&family),
        }
    }
    for v in NoiseVariant::ALL {
        let family = format!("IV.Noise-Sim-Inner-{}", v.label());
        match get(v) {
            Some(set) => fv.push_triple(&family, &inner_sims(set)),
            None => fv.push_flagged_triple(&family),
        }
    }
    for v in NoiseVariant::ALL {
        let family = format!("IV.Noise-Psteps-{}", v.label());
        match get(v) {
            Some(set) => fv.push_triple(&family, &mean_logprobs(set)),
            None => fv.push_flagged_triple(&family),
        }
    }
    fv
}

/// Group V: masked-LM confidence in the masked source tokens, and forced
/// log-probs of the original tokens for the simple variants.
pub fn group5(evidence: &RecordEvidence) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let positions = |v: NoiseVariant| {
        evidence
            .masks
            .get(&v)
            .into_iter()
            .flatten()
            .flat_map(|p| &p.positions)
    };
    for v in NoiseVariant::ALL {
        let pred: Vec<f64> = positions(v).map(|p| p.pred_logprob).collect();
        fv.push_triple(&format!("V.MLM-Pmask-{}", v.label()), &pred);
    }
    for (family, v) in [
        ("V.MLM-FPmask", NoiseVariant::Simple),
        ("V.MLM-FPmask-y", NoiseVariant::SimpleY),
    ] {
        let forced: Vec<f64> = positions(v).filter_map(|p| p.forced_logprob).collect();
        fv.push_triple(family, &forced);
    }
    fv
}

/// Shared read-only inputs to extraction.
#[derive(Clone, Copy)]
pub struct ExtractContext<'a> {
    pub index: Option<&'a CorpusIndex>,
    pub spec: &'a FeatureSpec,
}

/// Features of the enabled families for one record, in canonical order.
pub fn extract(
    record: &QERecord,
    evidence: &RecordEvidence,
    ctx: ExtractContext<'_>,
    selection: &FeatureGroupSelection,
) -> Result<FeatureVector> {
    let mut fv = FeatureVector::new();
    if selection.has_group("I") {
        fv.extend(group1(record)?);
    }
    if selection.has_group("II") {
        match &evidence.mc {
            Some(set) => fv.extend(group2(record, set)?),
            None if record.src_tokens.is_empty() => {
                for f in ["II.MC-Sim", "II.MC-Sim-Inner", "II.MC-Psteps"] {
                    fv.push_flagged_triple(f);
                }
            }
            None => {
                return Err(Error::group(
                    "II",
                    format!("record {:?}: no MC-dropout samples available", record.id),
                ))
            }
        }
    }
    if selection.has_group("III") {
        let index = ctx
            .index
            .ok_or_else(|| Error::group("III", "group III requires a corpus index"))?;
        fv.extend(group3(record, index, ctx.spec)?);
    }
    if selection.has_group("IV") {
        fv.extend(group4(record, evidence));
    }
    if selection.has_group("V") {
        fv.extend(group5(evidence));
    }
    let keep: BTreeSet<String> = selection.families().into_iter().collect();
    fv.retain_families(&keep);
    Ok(fv)
}

/// Extracts every record in parallel, keeping input order.
pub fn extract_all(
    records: &[QERecord],
    source: &dyn EvidenceSource,
    ctx: ExtractContext<'_>,
    selection: &FeatureGroupSelection,
) -> Result<Vec<(String, FeatureVector)>> {
    ctx.spec.validate()?;
    let needs = selection.needs();
    records
        .par_iter()
        .map(|r| {
            let ev = source.evidence(r, needs.clone())?;
            let fv = extract(r, &ev, ctx, selection)?;
            Ok((r.id.clone(), fv))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{MaskPosition, MaskPrediction, Sample, SampleKind};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn record(src: &str, mt: &str, lp: &[f64]) -> QERecord {
        let mut r = QERecord::from_tokens("r", toks(src), toks(mt));
        r.step_logprobs = Some(lp.to_vec());
        r
    }

    fn set(kind: SampleKind, hyps: &[(&str, &[f64])]) -> SampleSet {
        SampleSet::new(
            "r",
            kind,
            hyps.iter()
                .map(|(h, lp)| Sample::new(toks(h), Some(lp.to_vec())))
                .collect(),
        )
    }

    #[test]
    fn catalog_has_81_unique_names_in_24_families() {
        let names = catalog(&FeatureSpec::default());
        assert_eq!(names.len(), 81);
        let unique: BTreeSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), 81);
        assert_eq!(families().len(), 24);
        let fams: BTreeSet<&str> = names.iter().map(|n| family_of(n)).collect();
        assert_eq!(fams.len(), 24);
        let per_group: Vec<usize> = GROUPS
            .iter()
            .map(|g| names.iter().filter(|n| group_of(n) == *g).count())
            .collect();
        assert_eq!(per_group, vec![3, 9, 15, 36, 18]);
    }

    #[test]
    fn selection_parsing() {
        let s = FeatureGroupSelection::parse("I").unwrap();
        assert_eq!(s.families(), vec!["I.Psteps"]);
        assert_eq!(s.feature_names(&FeatureSpec::default()).len(), 3);
        let s = FeatureGroupSelection::parse("II.MC-Sim, IV.Noise-Sim-PE-y").unwrap();
        assert_eq!(s.families(), vec!["II.MC-Sim", "IV.Noise-Sim-PE-y"]);
        let needs = s.needs();
        assert!(needs.mc && needs.masks.is_empty());
        assert_eq!(
            needs.noise.into_iter().collect::<Vec<_>>(),
            vec![NoiseVariant::PeY]
        );
        assert_eq!(
            FeatureGroupSelection::parse("all").unwrap(),
            FeatureGroupSelection::all()
        );
        assert_eq!(FeatureGroupSelection::all().to_string(), "all");
        assert!(FeatureGroupSelection::parse("VI").is_err());
        assert!(FeatureGroupSelection::parse("").is_err());
        let round: FeatureGroupSelection = s.to_string().parse().unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn group1_examples() {
        let fv = group1(&record("a b c", "x y z", &[-1.0, -2.0, -3.0])).unwrap();
        let v: Vec<f64> = fv.values().collect();
        assert!(close(v[0], -2.0));
        assert!(close(v[1], 0.816_496_580_927_726));
        assert!(close(v[2], -2.449_489_742_783_178));
        assert!(fv.flags().is_empty());

        let single = group1(&record("a", "x", &[-0.4])).unwrap();
        assert_eq!(single.values().collect::<Vec<_>>(), vec![-0.4, 0.0, 0.0]);
        assert!(single.is_flagged("I.Psteps.Combo"));

        let zero = group1(&record("a b", "x y", &[0.0, 0.0])).unwrap();
        assert_eq!(zero.values().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0]);

        let mut missing = record("a", "x", &[]);
        missing.step_logprobs = None;
        let err = group1(&missing).unwrap_err().to_string();
        assert!(err.contains("group I requires decoder log-probs"), "{err}");
    }

    #[test]
    fn group1_empty_translation_is_flagged() {
        let fv = group1(&record("a", "", &[])).unwrap();
        assert_eq!(fv.values().collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(fv.flags().len(), 3);
    }

    #[test]
    fn group1_scale_covariance() {
        let lp = [-0.3, -1.2, -0.05, -2.0];
        let base = group1(&record("a b c d", "w x y z", &lp)).unwrap();
        let scaled_lp: Vec<f64> = lp.iter().map(|v| v * 2.5).collect();
        let scaled = group1(&record("a b c d", "w x y z", &scaled_lp)).unwrap();
        let (b, s): (Vec<f64>, Vec<f64>) = (base.values().collect(), scaled.values().collect());
        assert!(close(s[0], 2.5 * b[0]));
        assert!(close(s[1], 2.5 * b[1]));
        assert!(close(s[2], b[2]));
    }

    #[test]
    fn group2_examples() {
        let r = record("a b c", "x y z", &[-0.1; 3]);
        let same = set(
            SampleKind::McDropout,
            &[("x y z", &[-0.5; 3]), ("x y z", &[-0.7; 3])],
        );
        let fv = group2(&r, &same).unwrap();
        assert!(close(
            fv.get("II.MC-Sim.E").unwrap(),
            0.981_481_481_481_481_5
        ));
        assert_eq!(fv.get("II.MC-Sim.Std"), Some(0.0));
        assert!(close(
            fv.get("II.MC-Sim-Inner.E").unwrap(),
            0.981_481_481_481_481_5
        ));
        assert!(close(fv.get("II.MC-Psteps.E").unwrap(), -0.6));
        assert!(close(fv.get("II.MC-Psteps.Std").unwrap(), 0.1));
        assert!(close(fv.get("II.MC-Psteps.Combo").unwrap(), -6.0));

        let disjoint = set(
            SampleKind::McDropout,
            &[("p q", &[-1.0; 2]), ("r s", &[-1.0; 2])],
        );
        assert_eq!(group2(&r, &disjoint).unwrap().get("II.MC-Sim.E"), Some(0.0));

        let one = set(SampleKind::McDropout, &[("x", &[-1.0])]);
        assert!(matches!(group2(&r, &one), Err(Error::Group { .. })));
    }

    #[test]
    fn group2_tolerates_empty_hypotheses() {
        let r = record("a b", "x y", &[-0.1; 2]);
        let s = set(SampleKind::McDropout, &[("", &[]), ("", &[])]);
        let fv = group2(&r, &s).unwrap();
        assert_eq!(fv.get("II.MC-Sim.E"), Some(0.0));
        assert!(fv.is_flagged("II.MC-Psteps.E"));
    }

    fn fixture_index() -> CorpusIndex {
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..20)
            .map(|i| {
                let s = format!("w{} w{} w{} w{}", i % 7, (i + 1) % 5, i % 3, (i * 2) % 9);
                let t = format!("v{} v{} v{}", i % 4, (i + 2) % 6, i % 5);
                (toks(&s), toks(&t))
            })
            .collect();
        CorpusIndex::build(&pairs).unwrap()
    }

    #[test]
    fn group3_matches_index_queries() {
        let index = fixture_index();
        let spec = FeatureSpec::default();
        let r = record("w1 w2 w1 w2", "v1 v3 v1", &[-0.1; 3]);
        let fv = group3(&r, &index, &spec).unwrap();
        assert_eq!(fv.len(), 15);
        for n in 1..=5 {
            let g = index.ds_gram(&r.src_tokens, n).unwrap();
            assert_eq!(fv.get(&format!("III.DS-gram.{n}-gram")), Some(g.value));
        }
        assert!(fv.is_flagged("III.DS-gram.5-gram"));
        for k in DEFAULT_NEIGHBOR_K {
            for (side, q) in [(Side::Src, &r.src_tokens), (Side::Tgt, &r.mt_tokens)] {
                let want = index.ds_neighbors(q, k, side).unwrap();
                let name = format!("III.DS-neighbors.{}-K{k}", side.label());
                assert!(close(fv.get(&name).unwrap(), want.value), "{name}");
                assert_eq!(fv.is_flagged(&name), want.degenerate);
            }
        }
        // Thirty neighbors over a twenty-sentence corpus is flagged.
        assert!(fv.is_flagged("III.DS-neighbors.x-K30"));
    }

    #[test]
    fn group3_verbatim_source_is_fully_covered() {
        let index = fixture_index();
        let src = index.sentences(Side::Src)[4].join(" ");
        let fv = group3(
            &record(&src, "v0", &[-0.1]),
            &index,
            &FeatureSpec::default(),
        )
        .unwrap();
        for n in 1..=4 {
            assert_eq!(fv.get(&format!("III.DS-gram.{n}-gram")), Some(1.0));
        }
    }

    #[test]
    fn group4_counts_and_missing_variants() {
        let r = record("a b", "x y z", &[-0.1; 3]);
        let mut ev = RecordEvidence::default();
        ev.noise.insert(
            NoiseVariant::Pe,
            set(
                SampleKind::NoisePe,
                &[("x y z", &[-0.2; 3]), ("x y z", &[-0.2; 3])],
            ),
        );
        let fv = group4(&r, &ev);
        assert_eq!(fv.len(), 36);
        assert!(close(
            fv.get("IV.Noise-Sim-PE.E").unwrap(),
            0.981_481_481_481_481_5
        ));
        assert_eq!(fv.get("IV.Noise-Sim-PE.Std"), Some(0.0));
        for v in ["Simple", "Simple-y", "PE-y"] {
            for f in ["Noise-Sim", "Noise-Sim-Inner", "Noise-Psteps"] {
                for s in STATS {
                    assert!(fv.is_flagged(&format!("IV.{f}-{v}.{s}")));
                }
            }
        }
        // Identical samples also zero every deviation, guarding three combos.
        assert_eq!(fv.flags().len(), 27 + 3);
    }

    #[test]
    fn group5_examples() {
        let pred = |lps: &[f64], forced: bool| {
            MaskPrediction::new(
                "r",
                if forced {
                    NoiseVariant::Simple
                } else {
                    NoiseVariant::Pe
                },
                lps.iter()
                    .enumerate()
                    .map(|(i, &lp)| MaskPosition {
                        index: i,
                        predicted_token: "t".into(),
                        pred_logprob: lp,
                        forced_logprob: forced.then_some(lp),
                    })
                    .collect(),
            )
        };
        let mut ev = RecordEvidence::default();
        let lps = [0.9f64.ln(), 0.9f64.ln(), 0.8f64.ln()];
        ev.masks
            .insert(NoiseVariant::Simple, vec![pred(&lps, true)]);
        ev.masks
            .insert(NoiseVariant::Pe, vec![pred(&[0.0, 0.0], false)]);
        let fv = group5(&ev);
        assert_eq!(fv.len(), 18);
        let mean = (2.0 * 0.9f64.ln() + 0.8f64.ln()) / 3.0;
        assert!(close(mean, -0.144_621_527_7));
        assert!(close(fv.get("V.MLM-Pmask-Simple.E").unwrap(), mean));
        assert_eq!(fv.get("V.MLM-FPmask.E"), fv.get("V.MLM-Pmask-Simple.E"));
        assert_eq!(fv.get("V.MLM-Pmask-PE.E"), Some(0.0));
        assert!(fv.is_flagged("V.MLM-FPmask-y.E"));
    }

    #[test]
    fn extract_respects_selection() {
        let r = record("a b", "x y", &[-0.1, -0.3]);
        let spec = FeatureSpec::default();
        let ctx = ExtractContext {
            index: None,
            spec: &spec,
        };
        let ev = RecordEvidence::default();
        let sel = FeatureGroupSelection::parse("I").unwrap();
        assert_eq!(extract(&r, &ev, ctx, &sel).unwrap().len(), 3);
        let sel = FeatureGroupSelection::parse("IV.Noise-Sim-PE,V.MLM-FPmask").unwrap();
        let fv = extract(&r, &ev, ctx, &sel).unwrap();
        assert_eq!(
            fv.names().collect::<Vec<_>>(),
            vec![
                "IV.Noise-Sim-PE.E",
                "IV.Noise-Sim-PE.Std",
                "IV.Noise-Sim-PE.Combo",
                "V.MLM-FPmask.E",
                "V.MLM-FPmask.Std",
                "V.MLM-FPmask.Combo"
            ]
        );
        let err = extract(&r, &ev, ctx, &FeatureGroupSelection::parse("III").unwrap()).unwrap_err();
        assert!(err.to_string().contains("group III"));
        let err = extract(&r, &ev, ctx, &FeatureGroupSelection::parse("II").unwrap()).unwrap_err();
        assert!(err.to_string().contains("group II"));
    }
}
