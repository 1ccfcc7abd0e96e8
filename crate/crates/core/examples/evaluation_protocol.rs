//! Single-family ranking, top-k selection and the final test comparison on
//! a small synthetic dataset.

use uqkit::backend::{generate_dataset, SyntheticWorld};
use uqkit::cli::{extract_split, load_split};
use uqkit::config::PipelineConfig;
use uqkit::corpus_index::write_parallel_corpus;
use uqkit::harness::{
    final_report, render_final, render_ranking, single_feature_ranking, topk_select,
};
use uqkit::records::{write_feature_table, write_jsonl, write_jsonl_records};

fn main() -> uqkit::Result<()> {
    let dir = std::env::temp_dir().join("uqkit-evaluation-protocol");
    let mut cfg = PipelineConfig {
        data_dir: dir.join("data"),
        out_dir: dir.join("out"),
        mc_samples: 10,
        k_max: 6,
        ..PipelineConfig::default()
    };

    let world = SyntheticWorld::default();
    let splits = [("train", 300), ("dev", 150), ("test", 150)];
    let data = generate_dataset(&world, &splits, 300, &cfg.noise, cfg.mc_samples)?;
    std::fs::create_dir_all(&cfg.data_dir)
        .and_then(|_| std::fs::create_dir_all(&cfg.out_dir))
        .map_err(|e| uqkit::Error::io(&dir, e))?;
    for s in &data.splits {
        write_jsonl_records(&s.records, &cfg.split_file(&s.name, "records"))?;
        write_jsonl(&s.samples, &cfg.split_file(&s.name, "samples"))?;
        write_jsonl(&s.masks, &cfg.split_file(&s.name, "masks"))?;
    }
    let corpus = cfg.data_dir.join("corpus.tsv");
    write_parallel_corpus(&data.corpus, &corpus)?;
    cfg.corpus = Some(corpus);

    for (name, _) in splits {
        let rows = extract_split(&cfg, name, &cfg.groups)?;
        write_feature_table(&rows, &cfg.features_file(name))?;
    }
    let train = load_split(&cfg, "train", None)?;
    let dev = load_split(&cfg, "dev", None)?;
    let opts = cfg.train_options();
    let ranking = single_feature_ranking(&train, &dev, &cfg.groups.families(), opts)?;
    print!("{}", render_ranking(&ranking));

    let curve = topk_select(&train, &dev, &ranking, cfg.k_max, opts)?;
    let test = load_split(&cfg, "test", None)?;
    let (report, _) = final_report(&train, &test, &ranking, &curve, opts)?;
    print!("\n{}", render_final(&report));
    Ok(())
}
