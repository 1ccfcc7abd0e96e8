//! Linear quality predictor over `[embedding ++ z-normalized features]`.
//!
//! The head is ridge regression solved in closed form: centered normal
//! equations with an unpenalized bias, factorized by Cholesky.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::records::FeatureTable;

pub const MODEL_MAGIC: &str = "UQKIT-MODEL v1";
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Per-column mean and population deviation from the training split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero deviation; they normalize to 0.
    pub constant: Vec<bool>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: rows.len(),
            });
        }
        let d = rows[0].len();
        check_rectangular(rows, d)?;
        let n = rows.len() as f64;
        let mut norm = Normalizer::default();
        for j in 0..d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            let constant = rows.iter().all(|r| r[j] == rows[0][j]) || std == 0.0;
            norm.mean.push(mean);
            norm.std.push(if constant { 0.0 } else { std });
            norm.constant.push(constant);
        }
        Ok(norm)
    }

    /// Leaves columns unchanged.
    pub fn identity(d: usize) -> Self {
        Normalizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            constant: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, x)| {
                if self.constant[j] {
                    0.0
                } else {
                    (x - self.mean[j]) / self.std[j]
                }
            })
            .collect())
    }
}

pub fn fit_normalizer(rows: &[Vec<f64>]) -> Result<Normalizer> {
    Normalizer::fit(rows)
}

fn check_rectangular(rows: &[Vec<f64>], d: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != d) {
        Some(r) => Err(Error::Dimension {
            expected: d,
            actual: r.len(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub lambda: f64,
    /// Also z-normalize the embedding dimensions.
    pub normalize_embedding: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lambda: DEFAULT_LAMBDA,
            normalize_embedding: false,
        }
    }
}

/// A trained head. `weights` apply to the transformed input
/// `[embedding ++ features]` after `emb_norm` and `feat_norm`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub lambda: f64,
    pub embedding_dim: usize,
    pub feature_names: Vec<String>,
    pub emb_norm: Normalizer,
    pub feat_norm: Normalizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Training rows: embeddings and features aligned with labels.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub embeddings: &'a [Vec<f64>],
    pub features: &'a FeatureTable,
}

impl Design<'_> {
    fn rows(&self) -> usize {
        self.features.len()
    }
}

pub fn train(design: Design<'_>, labels: &[f64], opts: TrainOptions) -> Result<FusionModel> {
    let n = design.rows();
    if design.embeddings.len() != n || labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: if design.embeddings.len() != n {
                design.embeddings.len()
            } else {
                labels.len()
            },
        });
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("labels must be finite"));
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda = {} must be finite and >= 0",
            opts.lambda
        )));
    }
    let e = design.embeddings[0].len();
    check_rectangular(design.embeddings, e)?;
    check_rectangular(&design.features.rows, design.features.names.len())?;

    let emb_norm = if opts.normalize_embedding {
        Normalizer::fit(design.embeddings)?
    } else {
        Normalizer::identity(e)
    };
    let feat_norm = if design.features.names.is_empty() {
        Normalizer::identity(0)
    } else {
        Normalizer::fit(&design.features.rows)?
    };
    let mut model = FusionModel {
        lambda: opts.lambda,
        embedding_dim: e,
        feature_names: design.features.names.clone(),
        emb_norm,
        feat_norm,
        weights: Vec::new(),
        bias: 0.0,
    };
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| model.transform(&design.embeddings[i], &design.features.rows[i]))
        .collect::<Result<_>>()?;
    let (weights, bias) = solve_ridge(&z, labels, opts.lambda)?;
    model.weights = weights;
    model.bias = bias;
    Ok(model)
}

/// Minimizes `sum (w.z + b - y)^2 + lambda |w|^2` with `b` unpenalized.
/// Columns with no variation get weight 0.
pub fn solve_ridge(z: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = z.len();
    let d = z.first().map_or(0, Vec::len);
    let nf = n as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    let zbar: Vec<f64> = (0..d)
        .map(|j| z.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let active: Vec<usize> = (0..d)
        .filter(|&j| z.iter().any(|r| r[j] != z[0][j]))
        .collect();
    let mut weights = vec![0.0; d];
    if !active.is_empty() {
        let m = active.len();
        let zc = DMatrix::from_fn(n, m, |i, k| z[i][active[k]] - zbar[active[k]]);
        let yc = DVector::from_fn(n, |i, _| y[i] - ybar);
        let mut gram = zc.tr_mul(&zc);
        for k in 0..m {
            gram[(k, k)] += lambda;
        }
        let rhs = zc.tr_mul(&yc);
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Singular(if lambda == 0.0 {
                "design is rank-deficient; use lambda > 0".to_owned()
            } else {
                format!("normal equations not positive definite at lambda = {lambda}")
            })
        })?;
        let w = chol.solve(&rhs);
        for (k, &j) in active.iter().enumerate() {
            weights[j] = w[k];
        }
    }
    let bias = ybar - weights.iter().zip(&zbar).map(|(w, m)| w * m).sum::<f64>();
    Ok((weights, bias))
}

impl FusionModel {
    pub fn input_dim(&self) -> usize {
        self.embedding_dim + self.feature_names.len()
    }

    fn transform(&self, embedding: &[f64], features: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.emb_norm.transform(embedding)?;
        z.extend(self.feat_norm.transform(features)?);
        Ok(z)
    }

    pub fn predict(&self, embedding: &[f64], features: &[f64]) -> Result<f64> {
        if embedding.len() + features.len() != self.input_dim()
            || embedding.len() != self.embedding_dim
        {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: embedding.len() + features.len(),
            });
        }
        let z = self.transform(embedding, features)?;
        Ok(self.bias + self.weights.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>())
    }

    /// Predicts every row of `design`, checking feature names match.
    pub fn predict_all(&self, design: Design<'_>) -> Result<Vec<f64>> {
        if design.features.names != self.feature_names {
            return Err(Error::InconsistentFeatures(format!(
                "model expects [{}], input has [{}]",
                self.feature_names.join(", "),
                design.features.names.join(", ")
            )));
        }
        if design.embeddings.len() != design.rows() {
            return Err(Error::LengthMismatch {
                left: design.rows(),
                right: design.embeddings.len(),
            });
        }
        design
            .embeddings
            .iter()
            .zip(&design.features.rows)
            .map(|(e, f)| self.predict(e, f))
            .collect()
    }

    /// Weights and bias acting on raw, untransformed inputs.
    pub fn effective_linear(&self) -> (Vec<f64>, f64) {
        let mut bias = self.bias;
        let mut raw = Vec::with_capacity(self.input_dim());
        let mut offset = 0;
        for norm in [&self.emb_norm, &self.feat_norm] {
            for j in 0..norm.dim() {
                let w = self.weights[offset + j];
                if norm.constant[j] {
                    raw.push(0.0);
                } else {
                    raw.push(w / norm.std[j]);
                    bias -= w * norm.mean[j] / norm.std[j];
                }
            }
            offset += norm.dim();
        }
        (raw, bias)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_MAGIC}");
        let _ = writeln!(s, "lambda {:.16e}", self.lambda);
        let _ = writeln!(
            s,
            "dims {} {}",
            self.embedding_dim,
            self.feature_names.len()
        );
        let rows = (0..self.embedding_dim)
            .map(|j| (format!("emb.{j}"), &self.emb_norm, j))
            .chain(
                self.feature_names
                    .iter()
                    .enumerate()
                    .map(|(j, n)| (n.clone(), &self.feat_norm, j)),
            );
        for (name, norm, j) in rows {
            let _ = writeln!(
                s,
                "norm {name} {:.16e} {:.16e} {}",
                norm.mean[j],
                norm.std[j],
                u8::from(norm.constant[j])
            );
        }
        for w in &self.weights {
            let _ = writeln!(s, "weight {w:.16e}");
        }
        let _ = writeln!(s, "bias {:.16e}", self.bias);
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_owned(),
        };
        match lines.next() {
            Some((_, MODEL_MAGIC)) => {}
            Some((_, other)) if other.starts_with("UQKIT-MODEL") => {
                return Err(Error::Format(format!(
                    "unsupported model version {other:?}"
                )))
            }
            _ => return Err(Error::Format(format!("missing {MODEL_MAGIC:?} header"))),
        }
        let mut field = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::Format("truncated model file".into()))?;
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(bad(no, &format!("expected {key:?}")));
            }
            Ok((no, parts.map(str::to_owned).collect()))
        };
        let num = |no: usize, s: &str| s.parse::<f64>().map_err(|_| bad(no, "bad number"));
        let int = |no: usize, s: &str| s.parse::<usize>().map_err(|_| bad(no, "bad integer"));

        let (no, v) = field("lambda")?;
        let lambda = num(no, v.first().map_or("", String::as_str))?;
        let (no, v) = field("dims")?;
        if v.len() != 2 {
            return Err(bad(no, "dims needs two integers"));
        }
        let (e, f) = (int(no, &v[0])?, int(no, &v[1])?);
        let mut emb_norm = Normalizer::default();
        let mut feat_norm = Normalizer::default();
        let mut feature_names = Vec::with_capacity(f);
        for j in 0..e + f {
            let (no, v) = field("norm")?;
            if v.len() != 4 {
                return Err(bad(no, "norm needs name, mean, std, constant"));
            }
            let norm = if j < e { &mut emb_norm } else { &mut feat_norm };
            norm.mean.push(num(no, &v[1])?);
            norm.std.push(num(no, &v[2])?);
            norm.constant.push(match v[3].as_str() {
                "0" => false,
                "1" => true,
                _ => return Err(bad(no, "constant flag must be 0 or 1")),
            });
            if j >= e {
                feature_names.push(v[0].clone());
            }
        }
        let mut weights = Vec::with_capacity(e + f);
        for _ in 0..e + f {
            let (no, v) = field("weight")?;
            weights.push(num(no, v.first().map_or("", String::as_str))?);
        }
        let (no, v) = field("bias")?;
        let bias = num(no, v.first().map_or("", String::as_str))?;
        match lines.next() {
            Some((_, "end")) => {}
            Some((no, _)) => return Err(bad(no, "expected \"end\"")),
            None => return Err(Error::Format("truncated model file".into())),
        }
        Ok(FusionModel {
            lambda,
            embedding_dim: e,
            feature_names,
            emb_norm,
            feat_norm,
            weights,
            bias,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
