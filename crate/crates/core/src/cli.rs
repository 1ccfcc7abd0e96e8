//! The `uqkit` command line.
//!
//! Results go to stdout as `key=value` lines; diagnostics go to stderr.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Args, FromArgMatches, Parser, Subcommand};

use crate::backend::{generate_dataset, FileBackend, SyntheticBackend};
use crate::config::{BackendKind, PipelineConfig, KEYS};
use crate::corpus_index::{read_parallel_corpus, write_parallel_corpus, CorpusIndex};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceSource, GenerativeEvidence};
use crate::features::{
    extract_all, family_of, ExtractContext, FeatureGroupSelection, FeatureVector,
};
use crate::fusion::{train, Design, FusionModel};
use crate::harness::{
    best_k, final_report, render_components, single_feature_ranking, topk_select,
    unsupervised_eval, write_final, write_ranking, write_topk, Split,
};
use crate::records::{
    read_feature_table, read_jsonl_records, write_feature_table, write_jsonl, write_jsonl_records,
    FeatureTable, QERecord,
};
use crate::stats::pearson;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// One optional flag per configuration key, named after the key with
/// dashes for underscores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(pub Vec<(&'static str, String)>);

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = Vec::new();
        for k in KEYS {
            if let Some(v) = m.get_one::<String>(k.name) {
                out.push((k.name, v.clone()));
            }
        }
        Ok(Overrides(out))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(mut cmd: clap::Command) -> clap::Command {
        let defaults = PipelineConfig::default();
        for k in KEYS {
            let default = defaults.get(k.name).unwrap_or_default();
            let shown = if default.is_empty() {
                "unset".to_owned()
            } else {
                default
            };
            cmd = cmd.arg(
                Arg::new(k.name)
                    .long(&*Box::leak(flag_name(k.name).into_boxed_str()))
                    .value_name("VALUE")
                    .help(format!("{} [default: {shown}]", k.help))
                    .help_heading("Config overrides"),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (`key = value` lines); flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl Common {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config {
                    key: "config".into(),
                    message: format!("{}: {e}", p.display()),
                })?;
                PipelineConfig::from_text(&text)?
            }
            None => PipelineConfig::default(),
        };
        for (k, v) in &self.overrides.0 {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "uqkit",
    version,
    about = "Uncertainty features and fusion models for MT quality estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a corpus index snapshot from a parallel corpus
    Index {
        /// Snapshot path [default: config `index`, else <out_dir>/corpus.idx]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset: records, model outputs and a corpus
    Synth {
        /// Output directory [default: config `data_dir`]
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute the feature table of one split
    Extract {
        /// Split name, read from <data_dir>/<split>.records.jsonl
        #[arg(long, value_name = "NAME", default_value = "train")]
        split: String,
        /// Feature table path [default: <out_dir>/<split>.features.csv]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the fusion head on one split and save the model
    Train {
        #[arg(long, value_name = "NAME", default_value = "train")]
        split: String,
        /// Feature table [default: <out_dir>/<split>.features.csv]
        #[arg(long, value_name = "PATH")]
        features: Option<PathBuf>,
        /// Model path [default: <out_dir>/model.txt]
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a split with a saved model
    Predict {
        #[arg(long, value_name = "NAME", default_value = "test")]
        split: String,
        /// Feature table [default: <out_dir>/<split>.features.csv]
        #[arg(long, value_name = "PATH")]
        features: Option<PathBuf>,
        /// Model path [default: <out_dir>/model.txt]
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Predictions CSV [default: <out_dir>/<split>.predictions.csv]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Absolute Pearson of every feature component against gold
    Eval {
        #[arg(long, value_name = "NAME", default_value = "dev")]
        split: String,
        /// Feature table [default: <out_dir>/<split>.features.csv]
        #[arg(long, value_name = "PATH")]
        features: Option<PathBuf>,
        /// Component CSV [default: <out_dir>/<split>.components.csv]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank feature families by single-family enhanced dev Pearson
    Rank {
        #[command(flatten)]
        splits: SplitNames,
        #[command(flatten)]
        common: Common,
    },
    /// Dev Pearson of the union of the top k ranked families
    Topk {
        #[command(flatten)]
        splits: SplitNames,
        #[command(flatten)]
        common: Common,
    },
    /// Rank, top-k, and the final test comparison
    Report {
        #[command(flatten)]
        splits: SplitNames,
        /// Test split name
        #[arg(long, value_name = "NAME", default_value = "test")]
        test: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct SplitNames {
    /// Training split name
    #[arg(long, value_name = "NAME", default_value = "train")]
    pub train: String,
    /// Development split name
    #[arg(long, value_name = "NAME", default_value = "dev")]
    pub dev: String,
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
            if code == EXIT_OK {
                let _ = write!(out, "{}", e.render());
            } else {
                eprint!("{}", e.render());
            }
            return code;
        }
    };
    let result = panic::catch_unwind(AssertUnwindSafe(|| execute(cli.command)));
    match result {
        Ok(Ok(lines)) => {
            let _ = out.write_all(lines.as_bytes());
            EXIT_OK
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            if e.is_usage_error() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_INTERNAL
        }
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn mkparent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => mkdir(p),
        _ => Ok(()),
    }
}

fn kv(s: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(s, "{key}={value}");
}

fn fmt_pearson(p: Option<f64>) -> String {
    p.map_or_else(|| "NA".into(), |v| format!("{v:.6}"))
}

fn execute(cmd: Command) -> Result<String> {
    let mut s = String::new();
    match cmd {
        Command::Index { out, common } => {
            let cfg = common.resolve()?;
            let corpus = cfg.corpus.clone().ok_or_else(|| Error::Config {
                key: "corpus".into(),
                message: "a corpus is required to build an index".into(),
            })?;
            let path = out
                .or_else(|| cfg.index.clone())
                .unwrap_or_else(|| cfg.out_dir.join("corpus.idx"));
            let index = CorpusIndex::build(&read_parallel_corpus(&corpus)?)?;
            mkparent(&path)?;
            index.save(&path)?;
            kv(&mut s, "sentences", index.len());
            kv(&mut s, "index", path.display());
        }
        Command::Synth { out, common } => {
            let cfg = common.resolve()?;
            let dir = out.unwrap_or_else(|| cfg.data_dir.clone());
            for (key, n) in [
                ("n_train", cfg.n_train),
                ("n_dev", cfg.n_dev),
                ("n_test", cfg.n_test),
            ] {
                if n < 2 {
                    return Err(Error::Config {
                        key: key.into(),
                        message: format!("split size {n} is below 2"),
                    });
                }
            }
            if cfg.corpus_size == 0 {
                return Err(Error::Config {
                    key: "corpus_size".into(),
                    message: "must be positive".into(),
                });
            }
            let data = generate_dataset(
                &cfg.world,
                &[
                    ("train", cfg.n_train),
                    ("dev", cfg.n_dev),
                    ("test", cfg.n_test),
                ],
                cfg.corpus_size,
                &cfg.noise,
                cfg.mc_samples,
            )?;
            mkdir(&dir)?;
            for split in &data.splits {
                write_jsonl_records(
                    &split.records,
                    &dir.join(format!("{}.records.jsonl", split.name)),
                )?;
                write_jsonl(
                    &split.samples,
                    &dir.join(format!("{}.samples.jsonl", split.name)),
                )?;
                write_jsonl(
                    &split.masks,
                    &dir.join(format!("{}.masks.jsonl", split.name)),
                )?;
                kv(&mut s, &split.name, split.records.len());
            }
            write_parallel_corpus(&data.corpus, &dir.join("corpus.tsv"))?;
            kv(&mut s, "corpus", data.corpus.len());
        }
        Command::Extract { split, out, common } => {
            let cfg = common.resolve()?;
            let rows = extract_split(&cfg, &split, &cfg.groups)?;
            let path = out.unwrap_or_else(|| cfg.features_file(&split));
            mkparent(&path)?;
            write_feature_table(&rows, &path)?;
            let mut flagged: std::collections::BTreeMap<&str, usize> = Default::default();
            for (_, fv) in &rows {
                for name in fv.flags() {
                    *flagged.entry(name.as_str()).or_default() += 1;
                }
            }
            for (name, n) in &flagged {
                log::info!("{name}: degenerate in {n} of {} records", rows.len());
            }
            kv(&mut s, "rows", rows.len());
            kv(&mut s, "features", rows.first().map_or(0, |(_, f)| f.len()));
            kv(&mut s, "flagged", flagged.values().sum::<usize>());
        }
        Command::Train {
            split,
            features,
            model,
            common,
        } => {
            let cfg = common.resolve()?;
            let data = load_split(&cfg, &split, features.as_deref())?;
            let gold = data
                .gold
                .clone()
                .ok_or_else(|| Error::NoGold(split.clone()))?;
            let design_features = data.features.clone();
            let m = train(
                Design {
                    embeddings: &data.embeddings,
                    features: &design_features,
                },
                &gold,
                cfg.train_options(),
            )?;
            let path = model.unwrap_or_else(|| cfg.out_dir.join("model.txt"));
            mkparent(&path)?;
            m.save(&path)?;
            let pred = m.predict_all(Design {
                embeddings: &data.embeddings,
                features: &design_features,
            })?;
            kv(&mut s, "pearson", fmt_pearson(pearson(&pred, &gold).ok()));
            kv(&mut s, "features", m.feature_names.len());
        }
        Command::Predict {
            split,
            features,
            model,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let m = FusionModel::load(&model.unwrap_or_else(|| cfg.out_dir.join("model.txt")))?;
            let data = load_split(&cfg, &split, features.as_deref())?;
            let table = data.features.select(&m.feature_names)?;
            let pred = m.predict_all(Design {
                embeddings: &data.embeddings,
                features: &table,
            })?;
            let path = out.unwrap_or_else(|| cfg.out_dir.join(format!("{split}.predictions.csv")));
            mkparent(&path)?;
            let mut body = String::from("id,prediction\n");
            for (id, p) in table.ids.iter().zip(&pred) {
                let _ = writeln!(body, "{id},{p}");
            }
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            if let Some(g) = &data.gold {
                kv(&mut s, "pearson", fmt_pearson(pearson(&pred, g).ok()));
            }
            kv(&mut s, "rows", pred.len());
        }
        Command::Eval {
            split,
            features,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let data = load_split(&cfg, &split, features.as_deref())?;
            let scores = unsupervised_eval(&data.features, data.gold.as_deref())?;
            let path = out.unwrap_or_else(|| cfg.out_dir.join(format!("{split}.components.csv")));
            mkparent(&path)?;
            fs::write(&path, render_components(&scores)).map_err(|e| Error::io(&path, e))?;
            let best = scores
                .iter()
                .filter_map(|c| c.abs_pearson.map(|p| (p, &c.name)))
                .fold(None::<(f64, &String)>, |acc, x| match acc {
                    Some(a) if a.0 >= x.0 => Some(a),
                    _ => Some(x),
                });
            kv(&mut s, "pearson", fmt_pearson(best.map(|b| b.0)));
            kv(&mut s, "feature", best.map_or("NA", |b| b.1.as_str()));
        }
        Command::Rank { splits, common } => {
            let cfg = common.resolve()?;
            let (tr, dv) = (
                load_split(&cfg, &splits.train, None)?,
                load_split(&cfg, &splits.dev, None)?,
            );
            let ranking =
                single_feature_ranking(&tr, &dv, &cfg.groups.families(), cfg.train_options())?;
            mkdir(&cfg.out_dir)?;
            write_ranking(&ranking, &cfg.out_dir.join("ranking.csv"))?;
            kv(&mut s, "baseline", fmt_pearson(ranking.baseline));
            kv(
                &mut s,
                "pearson",
                fmt_pearson(ranking.rows.first().and_then(|r| r.dev_pearson)),
            );
            kv(&mut s, "rows", ranking.rows.len());
        }
        Command::Topk { splits, common } => {
            let cfg = common.resolve()?;
            let (tr, dv) = (
                load_split(&cfg, &splits.train, None)?,
                load_split(&cfg, &splits.dev, None)?,
            );
            let opts = cfg.train_options();
            let ranking = single_feature_ranking(&tr, &dv, &cfg.groups.families(), opts)?;
            let curve = topk_select(&tr, &dv, &ranking, cfg.k_max, opts)?;
            mkdir(&cfg.out_dir)?;
            write_topk(&curve, &cfg.out_dir.join("topk.csv"))?;
            let k = best_k(&curve);
            kv(&mut s, "k", k);
            kv(
                &mut s,
                "pearson",
                fmt_pearson(curve.get(k).and_then(|p| p.dev_pearson)),
            );
        }
        Command::Report {
            splits,
            test,
            common,
        } => {
            let cfg = common.resolve()?;
            let tr = load_split(&cfg, &splits.train, None)?;
            let dv = load_split(&cfg, &splits.dev, None)?;
            let opts = cfg.train_options();
            let ranking = single_feature_ranking(&tr, &dv, &cfg.groups.families(), opts)?;
            let curve = topk_select(&tr, &dv, &ranking, cfg.k_max, opts)?;
            // Test data is read only after model selection on dev.
            let te = load_split(&cfg, &test, None)?;
            let (report, _) = final_report(&tr, &te, &ranking, &curve, opts)?;
            mkdir(&cfg.out_dir)?;
            write_ranking(&ranking, &cfg.out_dir.join("ranking.csv"))?;
            write_topk(&curve, &cfg.out_dir.join("topk.csv"))?;
            write_final(&report, &cfg.out_dir.join("final.txt"))?;
            kv(&mut s, "k", best_k(&curve));
            kv(
                &mut s,
                "pearson",
                fmt_pearson(report.rows.last().and_then(|r| r.test_pearson)),
            );
        }
    }
    Ok(s)
}

/// The index named by the config, loading a snapshot when one exists and
/// otherwise building from the corpus.
pub fn open_index(cfg: &PipelineConfig) -> Result<Option<CorpusIndex>> {
    if let Some(p) = cfg.index.as_ref().filter(|p| p.exists()) {
        return CorpusIndex::load(p).map(Some);
    }
    match &cfg.corpus {
        Some(c) => Ok(Some(CorpusIndex::build(&read_parallel_corpus(c)?)?)),
        None => Ok(None),
    }
}

pub fn read_split_records(cfg: &PipelineConfig, split: &str) -> Result<Vec<QERecord>> {
    read_jsonl_records(&cfg.split_file(split, "records"))
}

/// Extracts `selection` for every record of `split`, with model outputs
/// from the configured backend.
pub fn extract_split(
    cfg: &PipelineConfig,
    split: &str,
    selection: &FeatureGroupSelection,
) -> Result<Vec<(String, FeatureVector)>> {
    let records = read_split_records(cfg, split)?;
    let index =
        if selection.has_group("III") {
            Some(open_index(cfg)?.ok_or_else(|| {
                Error::group("III", "needs a corpus index: set `index` or `corpus`")
            })?)
        } else {
            None
        };
    let ctx = ExtractContext {
        index: index.as_ref(),
        spec: &cfg.spec,
    };
    match cfg.backend {
        BackendKind::Synthetic => {
            let backend = SyntheticBackend::new(cfg.world.clone());
            let source = GenerativeEvidence {
                backend: &backend,
                noise: cfg.noise.clone(),
                mc_samples: cfg.mc_samples,
                seed: cfg.world.seed,
            };
            extract_all(&records, &source, ctx, selection)
        }
        BackendKind::File => {
            let needs = selection.needs();
            let samples = cfg.split_file(split, "samples");
            let masks = cfg.split_file(split, "masks");
            let require = |group: &str, path: &Path| -> Result<()> {
                if path.exists() {
                    Ok(())
                } else {
                    Err(Error::group(group, format!("needs {}", path.display())))
                }
            };
            if needs.mc {
                require("II", &samples)?;
            }
            if !needs.noise.is_empty() {
                require("IV", &samples)?;
            }
            if !needs.masks.is_empty() {
                require("V", &masks)?;
            }
            let backend = FileBackend::from_parts(
                None,
                samples
                    .exists()
                    .then(|| crate::records::read_sample_sets(&samples))
                    .transpose()?,
                masks
                    .exists()
                    .then(|| crate::records::read_mask_predictions(&masks))
                    .transpose()?,
            );
            let source: &dyn EvidenceSource = &backend;
            extract_all(&records, source, ctx, selection)
        }
    }
}

/// Records of `split` joined with its feature table, restricted to the
/// configured feature families.
pub fn load_split(cfg: &PipelineConfig, split: &str, features: Option<&Path>) -> Result<Split> {
    let records = read_split_records(cfg, split)?;
    let path = features.map_or_else(|| cfg.features_file(split), Path::to_path_buf);
    let table = read_feature_table(&path)?;
    let wanted: BTreeSet<String> = cfg.groups.families().into_iter().collect();
    let names: Vec<String> = table
        .names
        .iter()
        .filter(|n| wanted.contains(family_of(n)))
        .cloned()
        .collect();
    let table: FeatureTable = table.select(&names)?;
    Split::from_records(split, &records, table)
}
