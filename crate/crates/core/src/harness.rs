//! Evaluation protocols: per-component correlation with gold, single-family
//! enhanced models ranked by dev Pearson, the top-k curve, and the final
//! test report.
//!
//! Train and dev splits are the only inputs to ranking and top-k; test gold is
//! read by [`final_report`] alone.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{families, family_of};
use crate::fusion::{train, Design, FusionModel, TrainOptions};
use crate::records::{FeatureTable, QERecord};
use crate::stats::{abs_pearson, pearson};

/// One split ready for modeling: embeddings, optional gold, and features,
/// row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub name: String,
    pub embeddings: Vec<Vec<f64>>,
    pub gold: Option<Vec<f64>>,
    pub features: FeatureTable,
}

impl Split {
    /// Joins records with a feature table by id. Records without embeddings
    /// contribute an empty embedding, so all or none must carry one.
    pub fn from_records(name: &str, records: &[QERecord], features: FeatureTable) -> Result<Self> {
        if records.len() != features.len() {
            return Err(Error::LengthMismatch {
                left: records.len(),
                right: features.len(),
            });
        }
        if let Some((r, id)) = records
            .iter()
            .zip(&features.ids)
            .find(|(r, id)| &r.id != *id)
        {
            return Err(Error::invalid(format!(
                "{name}: feature row {id:?} does not match record {:?}",
                r.id
            )));
        }
        let with_emb = records.iter().filter(|r| r.embedding.is_some()).count();
        if with_emb != 0 && with_emb != records.len() {
            return Err(Error::invalid(format!(
                "{name}: {with_emb} of {} records carry embeddings; need all or none",
                records.len()
            )));
        }
        let embeddings = records
            .iter()
            .map(|r| r.embedding.clone().unwrap_or_default())
            .collect();
        let gold = records
            .iter()
            .map(|r| r.gold_score)
            .collect::<Option<Vec<_>>>();
        Ok(Split {
            name: name.to_owned(),
            embeddings,
            gold,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn require_gold(&self) -> Result<&[f64]> {
        self.gold
            .as_deref()
            .ok_or_else(|| Error::NoGold(format!("split {:?}", self.name)))
    }

    /// Feature columns belonging to `families`, in table order.
    pub fn columns_for(&self, families: &BTreeSet<&str>) -> Result<FeatureTable> {
        let names: Vec<String> = self
            .features
            .names
            .iter()
            .filter(|n| families.contains(family_of(n)))
            .cloned()
            .collect();
        self.features.select(&names)
    }
}

/// Absolute Pearson of one feature component; `None` when degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScore {
    pub name: String,
    pub abs_pearson: Option<f64>,
}

pub fn unsupervised_eval(
    features: &FeatureTable,
    gold: Option<&[f64]>,
) -> Result<Vec<ComponentScore>> {
    let gold = gold.ok_or_else(|| Error::NoGold("unsupervised evaluation input".into()))?;
    if gold.len() != features.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: gold.len(),
        });
    }
    Ok(features
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| ComponentScore {
            name: name.clone(),
            abs_pearson: abs_pearson(&features.column(j), gold).ok(),
        })
        .collect())
}

/// Trains on `train` with the given feature families (none = baseline) and
/// returns the model and its dev Pearson (`None` if degenerate).
pub fn fit_and_score(
    train_split: &Split,
    dev: &Split,
    families: &BTreeSet<&str>,
    opts: TrainOptions,
) -> Result<(FusionModel, Option<f64>)> {
    let tr = train_split.columns_for(families)?;
    let dv = dev.columns_for(families)?;
    let model = train(
        Design {
            embeddings: &train_split.embeddings,
            features: &tr,
        },
        train_split.require_gold()?,
        opts,
    )?;
    let pred = model.predict_all(Design {
        embeddings: &dev.embeddings,
        features: &dv,
    })?;
    let score = pearson(&pred, dev.require_gold()?).ok();
    Ok((model, score))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub family: String,
    pub dev_pearson: Option<f64>,
    /// Set when the family could not be evaluated.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub baseline: Option<f64>,
    /// Best first; unevaluated families last.
    pub rows: Vec<RankRow>,
}

impl Ranking {
    pub fn increment(&self, row: &RankRow) -> Option<f64> {
        Some(row.dev_pearson? - self.baseline?)
    }

    /// Families that produced a dev Pearson, in rank order.
    pub fn ranked_families(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.dev_pearson.is_some())
            .map(|r| r.family.as_str())
            .collect()
    }
}

fn canonical_position(family: &str) -> usize {
    families()
        .iter()
        .position(|f| f == family)
        .unwrap_or(usize::MAX)
}

/// Orders by dev Pearson descending, breaking ties by canonical family order.
fn sort_rows(rows: &mut [RankRow]) {
    rows.sort_by(|a, b| match (a.dev_pearson, b.dev_pearson) {
        (Some(x), Some(y)) => y
            .total_cmp(&x)
            .then_with(|| canonical_position(&a.family).cmp(&canonical_position(&b.family))),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => canonical_position(&a.family).cmp(&canonical_position(&b.family)),
    });
}

/// One enhanced model per family (embedding + that family) against the
/// embedding-only baseline.
pub fn single_feature_ranking(
    train_split: &Split,
    dev: &Split,
    families: &[String],
    opts: TrainOptions,
) -> Result<Ranking> {
    let (_, baseline) = fit_and_score(train_split, dev, &BTreeSet::new(), opts)?;
    let available: BTreeSet<&str> = train_split
        .features
        .names
        .iter()
        .map(|n| family_of(n))
        .collect();
    let mut rows: Vec<RankRow> = families
        .par_iter()
        .map(|family| {
            if !available.contains(family.as_str()) {
                return RankRow {
                    family: family.clone(),
                    dev_pearson: None,
                    skipped: Some("features not extracted".into()),
                };
            }
            let set = BTreeSet::from([family.as_str()]);
            match fit_and_score(train_split, dev, &set, opts) {
                Ok((_, Some(p))) => RankRow {
                    family: family.clone(),
                    dev_pearson: Some(p),
                    skipped: None,
                },
                Ok((_, None)) => RankRow {
                    family: family.clone(),
                    dev_pearson: None,
                    skipped: Some("degenerate dev predictions".into()),
                },
                Err(e) => RankRow {
                    family: family.clone(),
                    dev_pearson: None,
                    skipped: Some(e.to_string()),
                },
            }
        })
        .collect();
    sort_rows(&mut rows);
    Ok(Ranking { baseline, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopkPoint {
    pub k: usize,
    /// Family added at this step; `None` for the baseline.
    pub added: Option<String>,
    pub dev_pearson: Option<f64>,
}

/// Dev Pearson of models over the union of the top `k` ranked families for
/// `k = 0..=k_max`. `k_max` beyond the ranking is clamped.
pub fn topk_select(
    train_split: &Split,
    dev: &Split,
    ranking: &Ranking,
    k_max: usize,
    opts: TrainOptions,
) -> Result<Vec<TopkPoint>> {
    let ranked = ranking.ranked_families();
    let k_max = if k_max > ranked.len() {
        log::warn!(
            "k_max {k_max} exceeds the {} ranked families; clamped",
            ranked.len()
        );
        ranked.len()
    } else {
        k_max
    };
    (0..=k_max)
        .into_par_iter()
        .map(|k| {
            let set: BTreeSet<&str> = ranked[..k].iter().copied().collect();
            let (_, p) = fit_and_score(train_split, dev, &set, opts)?;
            Ok(TopkPoint {
                k,
                added: k.checked_sub(1).map(|i| ranked[i].to_owned()),
                dev_pearson: p,
            })
        })
        .collect()
}

/// The `k` with the highest dev Pearson; ties go to the smaller `k`.
pub fn best_k(curve: &[TopkPoint]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for p in curve {
        if let Some(v) = p.dev_pearson {
            if v > best.1 {
                best = (p.k, v);
            }
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub families: Vec<String>,
    pub dev_pearson: Option<f64>,
    pub test_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalReport {
    pub rows: Vec<ReportRow>,
    pub lambda: f64,
    pub test_size: usize,
}

/// Trains the baseline, the best single family, and the best top-k union on
/// `train`, then scores each on `test`. Without test gold the Pearson
/// column is omitted.
pub fn final_report(
    train_split: &Split,
    test: &Split,
    ranking: &Ranking,
    curve: &[TopkPoint],
    opts: TrainOptions,
) -> Result<(FinalReport, Vec<Vec<f64>>)> {
    let ranked = ranking.ranked_families();
    let k = best_k(curve);
    let mut configs: Vec<(String, Vec<String>, Option<f64>)> =
        vec![("Baseline (embedding only)".into(), vec![], ranking.baseline)];
    if let Some(first) = ranking.rows.first().filter(|r| r.dev_pearson.is_some()) {
        configs.push((
            "Single feature enhanced".into(),
            vec![first.family.clone()],
            first.dev_pearson,
        ));
    }
    configs.push((
        format!("Multiple features enhanced (k={k})"),
        ranked[..k].iter().map(|s| s.to_string()).collect(),
        curve.iter().find(|p| p.k == k).and_then(|p| p.dev_pearson),
    ));

    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for (label, fams, dev_pearson) in configs {
        let set: BTreeSet<&str> = fams.iter().map(String::as_str).collect();
        let tr = train_split.columns_for(&set)?;
        let model = train(
            Design {
                embeddings: &train_split.embeddings,
                features: &tr,
            },
            train_split.require_gold()?,
            opts,
        )?;
        let te = test.columns_for(&set)?;
        let pred = model.predict_all(Design {
            embeddings: &test.embeddings,
            features: &te,
        })?;
        let test_pearson = test.gold.as_deref().and_then(|g| pearson(&pred, g).ok());
        rows.push(ReportRow {
            label,
            families: fams,
            dev_pearson,
            test_pearson,
        });
        predictions.push(pred);
    }
    Ok((
        FinalReport {
            rows,
            lambda: opts.lambda,
            test_size: test.len(),
        },
        predictions,
    ))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"))
}

pub fn render_components(scores: &[ComponentScore]) -> String {
    let mut s = String::from("feature,abs_pearson\n");
    for c in scores {
        let _ = writeln!(s, "{},{}", c.name, fmt_opt(c.abs_pearson));
    }
    s
}

/// `rank,family,dev_pearson,increment,status`, with the baseline as rank 0.
pub fn render_ranking(ranking: &Ranking) -> String {
    let mut s = String::from("rank,family,dev_pearson,increment,status\n");
    let _ = writeln!(s, "0,baseline,{},0.000000,ok", fmt_opt(ranking.baseline));
    for (i, r) in ranking.rows.iter().enumerate() {
        let status = match &r.skipped {
            Some(reason) => format!("\"skipped: {}\"", reason.replace('"', "'")),
            None => "ok".into(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i + 1,
            r.family,
            fmt_opt(r.dev_pearson),
            fmt_opt(ranking.increment(r)),
            status
        );
    }
    s
}

/// `k,added_family,dev_pearson`.
pub fn render_topk(curve: &[TopkPoint]) -> String {
    let mut s = String::from("k,added_family,dev_pearson\n");
    for p in curve {
        let _ = writeln!(
            s,
            "{},{},{}",
            p.k,
            p.added.as_deref().unwrap_or("-"),
            fmt_opt(p.dev_pearson)
        );
    }
    s
}

/// Fixed-width table of the final comparison.
pub fn render_final(report: &FinalReport) -> String {
    let width = report
        .rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(0)
        .max("Model".len());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Final comparison (ridge head, lambda={}, test n={}; ties in ranking broken by canonical family order)",
        report.lambda, report.test_size
    );
    let _ = writeln!(
        s,
        "{:<width$}  {:>10}  {:>10}  Families",
        "Model", "Dev", "Test"
    );
    for r in &report.rows {
        let fams = if r.families.is_empty() {
            "-".to_owned()
        } else {
            r.families.join(" ")
        };
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>10}  {}",
            r.label,
            fmt_opt(r.dev_pearson),
            fmt_opt(r.test_pearson),
            fams
        );
    }
    s
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_ranking(ranking: &Ranking, path: &Path) -> Result<()> {
    write(path, &render_ranking(ranking))
}

pub fn write_topk(curve: &[TopkPoint], path: &Path) -> Result<()> {
    write(path, &render_topk(curve))
}

pub fn write_final(report: &FinalReport, path: &Path) -> Result<()> {
    write(path, &render_final(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn normal(keys: &[u64]) -> f64 {
        // Box-Muller on keyed uniforms keeps the fixture seed-stable.
        let u1 = rng::uniform(keys).max(1e-300);
        let mut k2 = keys.to_vec();
        k2.push(0xB0);
        let u2 = rng::uniform(&k2);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Gold = signal + noise; embedding carries a weak view of the signal,
    /// `I.Psteps` a strong one, and `II.MC-Sim` pure noise.
    fn split(name: &str, n: usize, seed: u64) -> Split {
        let mut rows = Vec::new();
        let mut emb = Vec::new();
        let mut gold = Vec::new();
        for i in 0..n as u64 {
            let s = normal(&[seed, i, 1]);
            let g = s + 0.1 * normal(&[seed, i, 2]);
            emb.push(vec![s + 1.5 * normal(&[seed, i, 3]), normal(&[seed, i, 4])]);
            rows.push(vec![
                s + 0.2 * normal(&[seed, i, 5]),
                0.5,
                normal(&[seed, i, 6]),
                normal(&[seed, i, 7]),
                g,
            ]);
            gold.push(g);
        }
        Split {
            name: name.into(),
            embeddings: emb,
            gold: Some(gold),
            features: FeatureTable {
                names: [
                    "I.Psteps.E",
                    "I.Psteps.Std",
                    "II.MC-Sim.E",
                    "II.MC-Sim.Std",
                    "II.MC-Psteps.E",
                ]
                .map(String::from)
                .to_vec(),
                ids: (0..n).map(|i| format!("{name}-{i}")).collect(),
                rows,
            },
        }
    }

    #[test]
    fn unsupervised_examples() {
        let t = FeatureTable {
            names: vec!["a".into(), "b".into(), "c".into()],
            ids: vec!["0".into(), "1".into(), "2".into()],
            rows: vec![
                vec![1.0, -1.0, 5.0],
                vec![2.0, -2.0, 5.0],
                vec![4.0, -4.0, 5.0],
            ],
        };
        let gold = [1.0, 2.0, 4.0];
        let scores = unsupervised_eval(&t, Some(&gold)).unwrap();
        assert!((scores[0].abs_pearson.unwrap() - 1.0).abs() < 1e-12);
        assert!((scores[1].abs_pearson.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(scores[2].abs_pearson, None);
        assert!(unsupervised_eval(&t, None).is_err());
    }

    #[test]
    fn ranking_orders_families_and_detects_leakage() {
        let (tr, dv) = (split("train", 1000, 1), split("dev", 1000, 2));
        let fams: Vec<String> = ["II.MC-Sim", "I.Psteps", "II.MC-Psteps", "IV.Noise-Sim-PE"]
            .map(String::from)
            .to_vec();
        let r = single_feature_ranking(&tr, &dv, &fams, TrainOptions::default()).unwrap();
        let order: Vec<&str> = r.rows.iter().map(|r| r.family.as_str()).collect();
        assert_eq!(
            order,
            vec!["II.MC-Psteps", "I.Psteps", "II.MC-Sim", "IV.Noise-Sim-PE"]
        );
        assert!(r.rows[0].dev_pearson.unwrap() > 0.999);
        let noise = &r.rows[2];
        assert!(r.increment(noise).unwrap().abs() <= 0.05);
        assert!(r.rows[3].skipped.is_some());
        let csv = render_ranking(&r);
        assert_eq!(csv.lines().count(), 1 + 1 + fams.len());
    }

    #[test]
    fn topk_curve_starts_at_baseline() {
        let (tr, dv) = (split("train", 400, 3), split("dev", 400, 4));
        let fams: Vec<String> = ["I.Psteps", "II.MC-Sim"].map(String::from).to_vec();
        let r = single_feature_ranking(&tr, &dv, &fams, TrainOptions::default()).unwrap();
        let curve = topk_select(&tr, &dv, &r, 10, TrainOptions::default()).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0].dev_pearson, r.baseline);
        assert_eq!(curve[1].dev_pearson, r.rows[0].dev_pearson);
        let max = curve
            .iter()
            .filter_map(|p| p.dev_pearson)
            .fold(f64::MIN, f64::max);
        assert!(max >= curve[0].dev_pearson.unwrap());
    }

    #[test]
    fn final_report_recomputes_test_pearson() {
        let (tr, dv, te) = (
            split("train", 300, 5),
            split("dev", 300, 6),
            split("test", 300, 7),
        );
        let fams: Vec<String> = ["I.Psteps", "II.MC-Sim"].map(String::from).to_vec();
        let opts = TrainOptions::default();
        let r = single_feature_ranking(&tr, &dv, &fams, opts).unwrap();
        let curve = topk_select(&tr, &dv, &r, 2, opts).unwrap();
        let (rep, preds) = final_report(&tr, &te, &r, &curve, opts).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows[0].label.starts_with("Baseline"));
        assert!(rep.rows[1].label.starts_with("Single"));
        assert!(rep.rows[2].label.starts_with("Multiple"));
        for (row, p) in rep.rows.iter().zip(&preds) {
            let want = pearson(p, te.gold.as_ref().unwrap()).unwrap();
            assert_eq!(row.test_pearson, Some(want));
        }
        assert_eq!(
            render_final(&rep),
            render_final(&final_report(&tr, &te, &r, &curve, opts).unwrap().0)
        );

        let mut blind = te.clone();
        blind.gold = None;
        let (rep, _) = final_report(&tr, &blind, &r, &curve, opts).unwrap();
        assert!(rep.rows.iter().all(|r| r.test_pearson.is_none()));
    }
}
