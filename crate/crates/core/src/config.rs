//! Flat `key = value` pipeline configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are an error. List values are comma-separated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backend::{SyntheticWorld, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::features::{FeatureGroupSelection, FeatureSpec};
use crate::fusion::{TrainOptions, DEFAULT_LAMBDA};
use crate::noiser::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    /// Replay `*.samples.jsonl` / `*.masks.jsonl` from the data directory.
    File,
    /// Query the synthetic world directly.
    Synthetic,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "file" => Ok(BackendKind::File),
            "synthetic" => Ok(BackendKind::Synthetic),
            _ => Err("expected \"file\" or \"synthetic\"".into()),
        }
    }
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::File => "file",
            BackendKind::Synthetic => "synthetic",
        }
    }
}

/// One configuration key with its help line.
pub struct KeySpec {
    pub name: &'static str,
    pub help: &'static str,
}

macro_rules! keys {
    ($($name:literal => $help:literal,)*) => {
        /// Every key, in the order `save` writes them.
        pub const KEYS: &[KeySpec] = &[$(KeySpec { name: $name, help: $help },)*];
    };
}

keys! {
    "data_dir" => "Directory holding {split}.records.jsonl, .samples.jsonl and .masks.jsonl",
    "corpus" => "Parallel training corpus, one `src<TAB>tgt` pair per line",
    "index" => "Corpus index snapshot; built from `corpus` when absent",
    "out_dir" => "Directory for feature tables, models and reports",
    "backend" => "Model outputs source: file or synthetic",
    "vocab_size" => "Synthetic vocabulary size",
    "mlm_noise" => "Synthetic masked-LM error mass",
    "dropout_jitter" => "Synthetic per-sample difficulty jitter",
    "max_difficulty" => "Synthetic maximum record difficulty",
    "embedding_noise" => "Synthetic embedding noise scale",
    "seed" => "Seed for every random draw",
    "rounds" => "Post-edit noise rounds",
    "p_d" => "Post-edit deletion probability",
    "p_i" => "Post-edit mask insertion probability",
    "n_variants" => "Post-edited inputs per record",
    "mc_samples" => "MC-dropout samples per record",
    "neighbor_k" => "Neighbor counts for corpus similarity, ascending",
    "ngram_n" => "N-gram orders for corpus coverage, within 1..5",
    "lambda" => "Ridge penalty",
    "normalize_embedding" => "Also z-normalize embedding dimensions",
    "groups" => "Feature selection: all, group numerals, or family names",
    "n_train" => "Synthetic train split size",
    "n_dev" => "Synthetic dev split size",
    "n_test" => "Synthetic test split size",
    "corpus_size" => "Synthetic training corpus size",
    "k_max" => "Largest k on the top-k curve",
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub backend: BackendKind,
    pub world: SyntheticWorld,
    pub noise: NoiseConfig,
    pub mc_samples: usize,
    pub spec: FeatureSpec,
    pub lambda: f64,
    pub normalize_embedding: bool,
    pub groups: FeatureGroupSelection,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub corpus_size: usize,
    pub k_max: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            corpus: None,
            index: None,
            out_dir: PathBuf::from("out"),
            backend: BackendKind::File,
            world: SyntheticWorld::default(),
            noise: NoiseConfig::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
            spec: FeatureSpec::default(),
            lambda: DEFAULT_LAMBDA,
            normalize_embedding: false,
            groups: FeatureGroupSelection::all(),
            n_train: 7000,
            n_dev: 1000,
            n_test: 1000,
            corpus_size: 2000,
            k_max: 24,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("expected {expected}, got {value:?}"),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim(), "a comma-separated list of integers"))
        .collect()
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl PipelineConfig {
    /// Sets one key from its textual value, without cross-field validation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data_dir" => self.data_dir = PathBuf::from(v),
            "corpus" => self.corpus = opt_path(v),
            "index" => self.index = opt_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "backend" => {
                self.backend = v.parse().map_err(|message| Error::Config {
                    key: key.into(),
                    message,
                })?
            }
            "vocab_size" => self.world.vocab_size = parse(key, v, "an integer")?,
            "mlm_noise" => self.world.mlm_noise = parse(key, v, "a number")?,
            "dropout_jitter" => self.world.dropout_jitter = parse(key, v, "a number")?,
            "max_difficulty" => self.world.max_difficulty = parse(key, v, "a number")?,
            "embedding_noise" => self.world.embedding_noise = parse(key, v, "a number")?,
            "seed" => {
                let seed = parse(key, v, "an unsigned integer")?;
                self.world.seed = seed;
                self.noise.seed = seed;
            }
            "rounds" => self.noise.rounds = parse(key, v, "an integer")?,
            "p_d" => self.noise.p_d = parse(key, v, "a number")?,
            "p_i" => self.noise.p_i = parse(key, v, "a number")?,
            "n_variants" => self.noise.n_variants = parse(key, v, "an integer")?,
            "mc_samples" => self.mc_samples = parse(key, v, "an integer")?,
            "neighbor_k" => self.spec.neighbor_k = parse_list(key, v)?,
            "ngram_n" => self.spec.ngram_n = parse_list(key, v)?,
            "lambda" => self.lambda = parse(key, v, "a number")?,
            "normalize_embedding" => self.normalize_embedding = parse(key, v, "true or false")?,
            "groups" => {
                self.groups = FeatureGroupSelection::parse(v).map_err(|e| Error::Config {
                    key: key.into(),
                    message: e.to_string(),
                })?
            }
            "n_train" => self.n_train = parse(key, v, "an integer")?,
            "n_dev" => self.n_dev = parse(key, v, "an integer")?,
            "n_test" => self.n_test = parse(key, v, "an integer")?,
            "corpus_size" => self.corpus_size = parse(key, v, "an integer")?,
            "k_max" => self.k_max = parse(key, v, "an integer")?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Canonical textual value of `key`.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data_dir" => self.data_dir.display().to_string(),
            "corpus" => show_path(&self.corpus),
            "index" => show_path(&self.index),
            "out_dir" => self.out_dir.display().to_string(),
            "backend" => self.backend.as_str().into(),
            "vocab_size" => self.world.vocab_size.to_string(),
            "mlm_noise" => self.world.mlm_noise.to_string(),
            "dropout_jitter" => self.world.dropout_jitter.to_string(),
            "max_difficulty" => self.world.max_difficulty.to_string(),
            "embedding_noise" => self.world.embedding_noise.to_string(),
            "seed" => self.world.seed.to_string(),
            "rounds" => self.noise.rounds.to_string(),
            "p_d" => self.noise.p_d.to_string(),
            "p_i" => self.noise.p_i.to_string(),
            "n_variants" => self.noise.n_variants.to_string(),
            "mc_samples" => self.mc_samples.to_string(),
            "neighbor_k" => join(&self.spec.neighbor_k),
            "ngram_n" => join(&self.spec.ngram_n),
            "lambda" => self.lambda.to_string(),
            "normalize_embedding" => self.normalize_embedding.to_string(),
            "groups" => self.groups.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_dev" => self.n_dev.to_string(),
            "n_test" => self.n_test.to_string(),
            "corpus_size" => self.corpus_size.to_string(),
            "k_max" => self.k_max.to_string(),
            _ => return None,
        })
    }

    /// Range and consistency checks. The corpus, when set, must exist;
    /// output locations are created on demand.
    pub fn validate(&self) -> Result<()> {
        let field = |key: &str, e: Error| Error::Config {
            key: key.into(),
            message: match e {
                Error::InvalidArgument(m) => m,
                other => other.to_string(),
            },
        };
        for (key, p) in [("p_d", self.noise.p_d), ("p_i", self.noise.p_i)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("{p} is outside [0, 1]"),
                });
            }
        }
        self.noise.validate().map_err(|e| field("rounds", e))?;
        self.world.validate().map_err(|e| field("vocab_size", e))?;
        if self.spec.ngram_n.iter().any(|&n| !(1..=5).contains(&n)) {
            return Err(field(
                "ngram_n",
                Error::invalid("orders must be within 1..5"),
            ));
        }
        self.spec.validate().map_err(|e| field("neighbor_k", e))?;
        if self.mc_samples < 2 {
            return Err(field(
                "mc_samples",
                Error::invalid("need at least 2 samples"),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(field("lambda", Error::invalid("must be finite and >= 0")));
        }
        // A missing index is built from the corpus, so only the corpus must
        // exist up front.
        if let Some(p) = &self.corpus {
            if !p.exists() {
                return Err(field(
                    "corpus",
                    Error::invalid(format!("{} does not exist", p.display())),
                ));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: no + 1,
                message: format!("expected `key = value`, got {raw:?}"),
            })?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key in canonical order, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{} = {}", k.name, self.get(k.name).unwrap_or_default());
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lambda: self.lambda,
            normalize_embedding: self.normalize_embedding,
        }
    }

    pub fn split_file(&self, split: &str, kind: &str) -> PathBuf {
        self.data_dir.join(format!("{split}.{kind}.jsonl"))
    }

    pub fn features_file(&self, split: &str) -> PathBuf {
        self.out_dir.join(format!("{split}.features.csv"))
    }
}

/// Markdown table of keys and default values.
pub fn defaults_table() -> String {
    let d = PipelineConfig::default();
    let mut s = String::from("| key | default | meaning |\n|---|---|---|\n");
    for k in KEYS {
        let _ = writeln!(
            s,
            "| `{}` | `{}` | {} |",
            k.name,
            d.get(k.name).unwrap_or_default(),
            k.help
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(
            PipelineConfig::from_text("").unwrap(),
            PipelineConfig::default()
        );
        assert_eq!(
            PipelineConfig::from_text("# only a comment\n\n").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn out_of_range_probability_names_key() {
        let cfg = PipelineConfig::from_text("p_d = 1.5").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "p_d"),
            "{err}"
        );
        assert!(err.is_usage_error());
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        let err = PipelineConfig::from_text("p_dd = 0.1").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        let err = PipelineConfig::from_text("rounds = two").unwrap_err();
        assert!(err.to_string().contains("rounds") && err.to_string().contains("integer"));
        assert!(PipelineConfig::from_text("just words").is_err());
        assert!(PipelineConfig::from_text("neighbor_k = 5,3")
            .unwrap()
            .validate()
            .is_err());
        assert!(PipelineConfig::from_text("ngram_n = 6")
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn save_load_is_canonical() {
        let text = "seed = 7\nlambda=0.25 # penalty\ngroups = II, I\nneighbor_k = 1,4\nbackend = synthetic\n";
        let cfg = PipelineConfig::from_text(text).unwrap();
        assert_eq!(cfg.noise.seed, 7);
        assert_eq!(
            cfg.groups.families(),
            vec!["I.Psteps", "II.MC-Sim", "II.MC-Sim-Inner", "II.MC-Psteps"]
        );
        let canon = cfg.to_text();
        let again = PipelineConfig::from_text(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), canon);
        assert_eq!(canon.lines().count(), KEYS.len());
    }

    #[test]
    fn every_key_round_trips_its_default() {
        let d = PipelineConfig::default();
        for k in KEYS {
            let mut c = PipelineConfig::default();
            c.set(k.name, &d.get(k.name).unwrap()).unwrap();
            assert_eq!(c, d, "{}", k.name);
        }
        assert!(defaults_table().contains("| `p_d` | `0.15` |"));
    }

    #[test]
    fn load_checks_input_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        fs::write(&p, "corpus = /definitely/not/here.tsv\n").unwrap();
        let err = PipelineConfig::load(&p).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "corpus"));
        assert!(PipelineConfig::load(&dir.path().join("missing.conf")).is_err());
    }
}
