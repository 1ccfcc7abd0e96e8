//! QE data model and file formats.
//!
//! Three JSON Lines schemas (records, sample sets, mask predictions), the
//! WMT 2020 MLQE TSV adapter, and the CSV feature table. JSON output is
//! canonical: fixed key order for known fields, unknown keys preserved in
//! sorted order after them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::textmetrics::tokenize;

pub type Tokens = Vec<String>;

/// One (source, machine translation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QERecord {
    pub id: String,
    #[serde(default)]
    pub src: String,
    #[serde(default)]
    pub src_tokens: Tokens,
    #[serde(default)]
    pub mt: String,
    #[serde(default)]
    pub mt_tokens: Tokens,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_logprobs: Option<Vec<f64>>,
    #[serde(default, rename = "gold", skip_serializing_if = "Option::is_none")]
    pub gold_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl QERecord {
    /// Builds a record from raw text, tokenizing both sides.
    pub fn from_text(id: impl Into<String>, src: &str, mt: &str) -> Self {
        QERecord {
            id: id.into(),
            src: src.to_owned(),
            src_tokens: tokenize(src),
            mt: mt.to_owned(),
            mt_tokens: tokenize(mt),
            step_logprobs: None,
            gold_score: None,
            embedding: None,
            extra: BTreeMap::new(),
        }
    }

    /// Builds a record from token sequences; raw text is the space-joined form.
    pub fn from_tokens(id: impl Into<String>, src_tokens: Tokens, mt_tokens: Tokens) -> Self {
        QERecord {
            id: id.into(),
            src: src_tokens.join(" "),
            src_tokens,
            mt: mt_tokens.join(" "),
            mt_tokens,
            step_logprobs: None,
            gold_score: None,
            embedding: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(Error::InvalidRecord {
                id: String::new(),
                message: "empty id".into(),
            });
        }
        if let Some(lp) = &self.step_logprobs {
            check_logprobs(lp, self.mt_tokens.len()).map_err(fail)?;
        }
        if let Some(g) = self.gold_score {
            if !g.is_finite() {
                return Err(fail("gold score is not finite".into()));
            }
        }
        if let Some(e) = &self.embedding {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(fail("embedding has non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// Fills token sequences from raw text when the file carried only text.
    fn derive_tokens(&mut self, had_src_tokens: bool, had_mt_tokens: bool) {
        if !had_src_tokens {
            self.src_tokens = tokenize(&self.src);
        }
        if !had_mt_tokens {
            self.mt_tokens = tokenize(&self.mt);
        }
    }
}

fn check_logprobs(lp: &[f64], tokens: usize) -> std::result::Result<(), String> {
    if lp.len() != tokens {
        return Err(format!(
            "length mismatch: {tokens} tokens but {} log-probs",
            lp.len()
        ));
    }
    if let Some(bad) = lp.iter().find(|p| !p.is_finite() || **p > 0.0) {
        return Err(format!("log-prob {bad} is not a finite value <= 0"));
    }
    Ok(())
}

/// Source of a set of alternative hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    McDropout,
    NoiseSimple,
    NoiseSimpleY,
    NoisePe,
    NoisePeY,
}

impl SampleKind {
    pub fn noise_variant(self) -> Option<NoiseVariant> {
        match self {
            SampleKind::McDropout => None,
            SampleKind::NoiseSimple => Some(NoiseVariant::Simple),
            SampleKind::NoiseSimpleY => Some(NoiseVariant::SimpleY),
            SampleKind::NoisePe => Some(NoiseVariant::Pe),
            SampleKind::NoisePeY => Some(NoiseVariant::PeY),
        }
    }
}

/// The four noised-input variants: simple or post-edit masking, each with or
/// without the translation as a constraint during mask filling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVariant {
    Simple,
    SimpleY,
    Pe,
    PeY,
}

impl NoiseVariant {
    pub const ALL: [NoiseVariant; 4] = [
        NoiseVariant::Simple,
        NoiseVariant::SimpleY,
        NoiseVariant::Pe,
        NoiseVariant::PeY,
    ];

    pub fn uses_translation(self) -> bool {
        matches!(self, NoiseVariant::SimpleY | NoiseVariant::PeY)
    }

    pub fn is_simple(self) -> bool {
        matches!(self, NoiseVariant::Simple | NoiseVariant::SimpleY)
    }

    pub fn sample_kind(self) -> SampleKind {
        match self {
            NoiseVariant::Simple => SampleKind::NoiseSimple,
            NoiseVariant::SimpleY => SampleKind::NoiseSimpleY,
            NoiseVariant::Pe => SampleKind::NoisePe,
            NoiseVariant::PeY => SampleKind::NoisePeY,
        }
    }

    /// Suffix used in feature names, e.g. `Simple-y`.
    pub fn label(self) -> &'static str {
        match self {
            NoiseVariant::Simple => "Simple",
            NoiseVariant::SimpleY => "Simple-y",
            NoiseVariant::Pe => "PE",
            NoiseVariant::PeY => "PE-y",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub hyp_tokens: Tokens,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noised_src_tokens: Option<Tokens>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Sample {
    pub fn new(hyp_tokens: Tokens, step_logprobs: Option<Vec<f64>>) -> Self {
        Sample {
            hyp_tokens,
            step_logprobs,
            noised_src_tokens: None,
            extra: BTreeMap::new(),
        }
    }

    /// Mean step log-probability, when log-probs exist and the hypothesis is
    /// non-empty.
    pub fn mean_logprob(&self) -> Option<f64> {
        let lp = self.step_logprobs.as_ref()?;
        (!lp.is_empty()).then(|| lp.iter().sum::<f64>() / lp.len() as f64)
    }
}

/// Alternative hypotheses for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub record_id: String,
    pub kind: SampleKind,
    pub samples: Vec<Sample>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl SampleSet {
    pub fn new(record_id: impl Into<String>, kind: SampleKind, samples: Vec<Sample>) -> Self {
        SampleSet {
            record_id: record_id.into(),
            kind,
            samples,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if let Some(lp) = &s.step_logprobs {
                check_logprobs(lp, s.hyp_tokens.len()).map_err(|m| Error::InvalidRecord {
                    id: self.record_id.clone(),
                    message: format!("sample {k}: {m}"),
                })?;
            }
        }
        Ok(())
    }

    pub fn hypotheses(&self) -> Vec<&[String]> {
        self.samples
            .iter()
            .map(|s| s.hyp_tokens.as_slice())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPosition {
    pub index: usize,
    #[serde(rename = "predicted")]
    pub predicted_token: String,
    pub pred_logprob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_logprob: Option<f64>,
}

/// Masked-LM predictions for one masked input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPrediction {
    pub record_id: String,
    pub variant: NoiseVariant,
    pub positions: Vec<MaskPosition>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl MaskPrediction {
    pub fn new(
        record_id: impl Into<String>,
        variant: NoiseVariant,
        positions: Vec<MaskPosition>,
    ) -> Self {
        MaskPrediction {
            record_id: record_id.into(),
            variant,
            positions,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidRecord {
            id: self.record_id.clone(),
            message,
        };
        for p in &self.positions {
            if !p.pred_logprob.is_finite() || p.pred_logprob > 0.0 {
                return Err(fail(format!(
                    "pred_logprob {} must be <= 0",
                    p.pred_logprob
                )));
            }
            match (self.variant.is_simple(), p.forced_logprob) {
                (true, None) => {
                    return Err(fail(format!(
                        "{:?} prediction at {} lacks forced_logprob",
                        self.variant, p.index
                    )))
                }
                (false, Some(_)) => {
                    return Err(fail(format!(
                        "forced_logprob is only defined for simple variants, found in {:?}",
                        self.variant
                    )))
                }
                (true, Some(f)) if !f.is_finite() || f > 0.0 => {
                    return Err(fail(format!("forced_logprob {f} must be <= 0")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a JSON Lines file into `T`, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates a record file.
///
/// Token arrays absent from the file are derived from the raw text. Ids must
/// be unique.
pub fn read_jsonl_records(path: &Path) -> Result<Vec<QERecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("expected a JSON object".into()))?;
        let had_src = obj.contains_key("src_tokens");
        let had_mt = obj.contains_key("mt_tokens");
        let mut rec: QERecord =
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        rec.derive_tokens(had_src, had_mt);
        rec.validate()?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl_records(records: &[QERecord], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

pub fn read_sample_sets(path: &Path) -> Result<Vec<SampleSet>> {
    let sets: Vec<SampleSet> = read_jsonl(path)?;
    sets.iter().try_for_each(SampleSet::validate)?;
    Ok(sets)
}

pub fn read_mask_predictions(path: &Path) -> Result<Vec<MaskPrediction>> {
    let preds: Vec<MaskPrediction> = read_jsonl(path)?;
    preds.iter().try_for_each(MaskPrediction::validate)?;
    Ok(preds)
}

/// Column names of an MLQE-style TSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlqeColumns {
    pub id: String,
    pub src: String,
    pub mt: String,
    pub score: String,
}

impl Default for MlqeColumns {
    fn default() -> Self {
        MlqeColumns {
            id: "index".into(),
            src: "original".into(),
            mt: "translation".into(),
            score: "z_mean".into(),
        }
    }
}

pub fn read_mlqe_tsv(path: &Path) -> Result<Vec<QERecord>> {
    read_mlqe_tsv_with(path, &MlqeColumns::default())
}

/// Reads a tab-separated QE file with a header row.
///
/// Cells are taken verbatim (no quote processing), matching the published
/// WMT 2020 files where sentences may contain stray quote characters.
pub fn read_mlqe_tsv_with(path: &Path, columns: &MlqeColumns) -> Result<Vec<QERecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(open(path)?);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let (ci, cs, cm, cz) = (
        find(&columns.id)?,
        find(&columns.src)?,
        find(&columns.mt)?,
        find(&columns.score)?,
    );

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let rec = result.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let cell = |idx: usize, name: &str| {
            rec.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("row lacks column {name:?}"),
            })
        };
        let id = cell(ci, &columns.id)?.trim().to_owned();
        let src = cell(cs, &columns.src)?;
        let mt = cell(cm, &columns.mt)?;
        let score_cell = cell(cz, &columns.score)?.trim();
        let score: f64 = score_cell.parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric score {score_cell:?}"),
        })?;
        let mut record = QERecord::from_text(id, src, mt);
        record.gold_score = Some(score);
        record.validate()?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

/// Formats `x` with `sig` significant digits, like C's `%.{sig}g`.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", sig.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        format!("{}e{}", trim_fraction(mantissa), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A rectangular table of named features, as read back from CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Builds a table from feature vectors, requiring identical name lists.
    pub fn from_vectors(items: &[(String, FeatureVector)]) -> Result<Self> {
        let names: Vec<String> = match items.first() {
            Some((_, fv)) => fv.names().map(str::to_owned).collect(),
            None => Vec::new(),
        };
        let reference: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        let mut table = FeatureTable {
            names: names.clone(),
            ids: Vec::with_capacity(items.len()),
            rows: Vec::with_capacity(items.len()),
        };
        for (id, fv) in items {
            if !fv.names().eq(names.iter().map(String::as_str)) {
                let other: BTreeSet<&str> = fv.names().collect();
                let diff: Vec<&str> = reference.symmetric_difference(&other).copied().collect();
                let detail = if diff.is_empty() {
                    format!("record {id:?} orders features differently")
                } else {
                    format!("record {id:?} differs by [{}]", diff.join(", "))
                };
                return Err(Error::InconsistentFeatures(detail));
            }
            table.ids.push(id.clone());
            table.rows.push(fv.values().collect());
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::invalid(format!("feature {n:?} not in table")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            names: names.to_vec(),
            ids: self.ids.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
        })
    }
}

/// Writes `id,<feature names...>` then one row per record, values with nine
/// significant digits.
pub fn write_feature_table(records: &[(String, FeatureVector)], path: &Path) -> Result<()> {
    let table = FeatureTable::from_vectors(records)?;
    write_table(&table, path)
}

pub fn write_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["id".to_owned()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (id, row) in table.ids.iter().zip(&table.rows) {
        let mut fields = Vec::with_capacity(row.len() + 1);
        fields.push(id.clone());
        fields.extend(row.iter().map(|v| format_sig(*v, 9)));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.get(0) != Some("id") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be \"id\"".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut table = FeatureTable {
        names,
        ..FeatureTable::default()
    };
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let rec = result.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        table.ids.push(rec.get(0).unwrap_or_default().to_owned());
        let values = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric cell {c:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        table.rows.push(values);
    }
    Ok(table)
}
