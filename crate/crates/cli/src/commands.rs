use std::path::{Path, PathBuf};

use agrimuse::corpus::{
    read_descriptions, render_description, split_corpus, write_descriptions, Corpus, CorpusConfig, CorpusSplit,
    SplitName, DEFAULT_SPLIT_RATIOS,
};
use agrimuse::embedstore::{
    read_embeddings, synth_text_embeddings, synth_video_model_embeddings, synth_visual_embeddings, write_embeddings,
    SynthConfig,
};
use agrimuse::evaluation::{
    evaluate_model, run_experiment, transfer_data, transfer_table, zero_shot_table, ExperimentData, ExperimentSpec,
    ReportRow, ReportTable, VisualSource,
};
use agrimuse::model::{HierarchicalModel, Variant};
use agrimuse::training::{train, TrainConfig};
use agrimuse::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{read_json, resolved, write_json, ConfigMap};
use crate::{EvalArgs, EvalMode, GenCorpusArgs, GenEmbeddingsArgs, RunArgs, TrainArgs};

const CORPUS: &str = "corpus.json";
const DESCRIPTIONS: &str = "descriptions.jsonl";
const SPLIT: &str = "split.json";
const GENERATION: &str = "generation.json";
const SYNTH: &str = "synth.json";
const IMAGE: &str = "image.agriemb";
const VIDEO: &str = "video.agriemb";
const TEXT: &str = "text.agriemb";
const CHECKPOINT: &str = "checkpoint.agriemb";
const RUN_CONFIG: &str = "config.json";

pub fn runs_root() -> PathBuf {
    std::env::var_os("AGRIMUSE_RUNS_DIR").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Seed and shape a corpus directory was generated with.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Generation {
    seed: u64,
    corpus: CorpusConfig,
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<()> {
    let mut cfg = ConfigMap::load(args.config.as_deref())?;
    cfg.set("museum_count", args.count);
    let seed = args.seed.or(cfg.take("seed")?).unwrap_or(7);
    let out = args.out.clone().or(cfg.take_path("out")?).unwrap_or_else(|| PathBuf::from("data"));
    let corpus_cfg: CorpusConfig = cfg.finish("corpus")?;

    let corpus = Corpus::generate(seed, &corpus_cfg)?;
    let split = split_corpus(&corpus.museums, DEFAULT_SPLIT_RATIOS, seed)?;
    let descriptions = corpus.museums.iter().map(render_description).collect::<Result<Vec<_>>>()?;
    create_dir(&out)?;
    corpus.write(&out.join(CORPUS))?;
    write_descriptions(&out.join(DESCRIPTIONS), &descriptions)?;
    write_json(&out.join(SPLIT), &split)?;
    write_json(&out.join(GENERATION), &Generation { seed, corpus: corpus_cfg })?;
    println!(
        "{} museums ({} train / {} validation / {} test) written to {}",
        corpus.museums.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

pub fn gen_embeddings(args: &GenEmbeddingsArgs) -> Result<()> {
    let mut cfg = ConfigMap::load(args.config.as_deref())?;
    cfg.set("dim", args.dim);
    cfg.set("gamma", args.gamma);
    cfg.set("sigma_v", args.sigma_v);
    cfg.set("sigma_t", args.sigma_t);
    cfg.set("seed", args.seed);
    cfg.set("frames_per_video", args.frames);
    let corpus_dir = args.corpus.clone().or(cfg.take_path("corpus")?).unwrap_or_else(|| PathBuf::from("data"));
    let out = args.out.clone().or(cfg.take_path("out")?).unwrap_or_else(|| corpus_dir.clone());
    let synth: SynthConfig = cfg.finish("embedding")?;
    synth.validate()?;

    let corpus = Corpus::read(&corpus_dir.join(CORPUS))?;
    let descriptions = read_descriptions(&corpus_dir.join(DESCRIPTIONS))?;
    let image = synth_visual_embeddings(&corpus, &synth)?;
    let video = synth_video_model_embeddings(&corpus, &synth)?;
    let text = synth_text_embeddings(&corpus, &descriptions, &synth)?;
    create_dir(&out)?;
    write_embeddings(&out.join(IMAGE), &image)?;
    write_embeddings(&out.join(VIDEO), &video)?;
    write_embeddings(&out.join(TEXT), &text)?;
    write_json(&out.join(SYNTH), &synth)?;
    println!(
        "{} videos, {} descriptions, dim {} written to {}",
        image.len(),
        text.len(),
        synth.dim,
        out.display()
    );
    Ok(())
}

/// Corpus files and embedding files of one experiment.
#[derive(Debug, Clone)]
struct DataPaths {
    data: PathBuf,
    embeddings: PathBuf,
}

impl DataPaths {
    fn take(cfg: &mut ConfigMap, data: Option<PathBuf>, embeddings: Option<PathBuf>) -> Result<Self> {
        let file_data = cfg.take_path("data")?;
        let file_embeddings = cfg.take_path("embeddings")?;
        let data = data.or(file_data).unwrap_or_else(|| PathBuf::from("data"));
        let embeddings = embeddings.or(file_embeddings).unwrap_or_else(|| data.clone());
        Ok(DataPaths { data, embeddings })
    }

    fn extra(&self) -> [(&'static str, Value); 2] {
        [("data", json!(self.data)), ("embeddings", json!(self.embeddings))]
    }

    fn load(&self) -> Result<ExperimentData> {
        let corpus = Corpus::read(&self.data.join(CORPUS))?;
        let split: CorpusSplit = read_json(&self.data.join(SPLIT))?;
        let descriptions = read_descriptions(&self.data.join(DESCRIPTIONS))?;
        let synth: SynthConfig = read_json(&self.embeddings.join(SYNTH))?;
        Ok(ExperimentData {
            visual: read_embeddings(&self.embeddings.join(IMAGE))?,
            video: read_embeddings(&self.embeddings.join(VIDEO))?,
            text: read_embeddings(&self.embeddings.join(TEXT))?,
            corpus,
            split,
            descriptions,
            synth,
        })
    }

    fn generation(&self) -> Result<Generation> {
        read_json(&self.data.join(GENERATION))
    }
}

fn fresh_run_dir(name: &str, overwrite: bool) -> Result<PathBuf> {
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::Config(format!("invalid run name {name:?}")));
    }
    let dir = runs_root().join(name);
    if dir.join(RUN_CONFIG).exists() && !overwrite {
        return Err(Error::Config(format!(
            "run directory {} already holds a run; pick another name or pass --overwrite",
            dir.display()
        )));
    }
    create_dir(&dir)?;
    Ok(dir)
}

fn write_report(dir: &Path, stem: &str, table: &ReportTable) -> Result<()> {
    write_text(&dir.join(format!("{stem}.txt")), &table.to_string())?;
    write_json(&dir.join(format!("{stem}.json")), table)
}

#[derive(Debug, Serialize)]
struct TrainMetrics<'a> {
    variant: Variant,
    seed: u64,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    validation: &'a ReportRow,
    test: &'a ReportRow,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = ConfigMap::load(args.config.as_deref())?;
    cfg.set("variant", args.variant.as_deref());
    cfg.set("seed", args.seed);
    cfg.set("max_epochs", args.max_epochs);
    cfg.set("batch_size", args.batch_size);
    cfg.set("lr", args.lr);
    let paths = DataPaths::take(&mut cfg, args.data.clone(), args.embeddings.clone())?;
    let file_name: Option<String> = cfg.take("name")?;
    let train_cfg: TrainConfig = cfg.finish("train")?;
    train_cfg.validate()?;
    let name = args
        .run_name
        .clone()
        .or(file_name)
        .unwrap_or_else(|| format!("{}-seed{}", train_cfg.variant, train_cfg.seed));

    let data = paths.load()?;
    let dir = fresh_run_dir(&name, args.overwrite)?;
    let mut extra = paths.extra().to_vec();
    extra.insert(0, ("name", json!(name)));
    write_json(&dir.join(RUN_CONFIG), &resolved(&train_cfg, &extra))?;

    let dataset = data.dataset(VisualSource::for_variant(train_cfg.variant))?;
    let mut outcome = train(&dataset, &data.split, &train_cfg)?;
    outcome.model.save(&dir.join(CHECKPOINT), train_cfg.seed, outcome.best_epoch)?;
    outcome.write_history(&dir.join("history.jsonl"))?;
    outcome.write_timing(&dir.join("timing.jsonl"))?;

    let row = |split: SplitName| -> Result<ReportRow> {
        let r = evaluate_model(&outcome.model, &dataset, data.split.get(split), train_cfg.eval_chunk)?;
        Ok(ReportRow { label: split.to_string(), metrics: r.metrics, queries: Some(r.queries) })
    };
    let (validation, test) = (row(SplitName::Validation)?, row(SplitName::Test)?);
    write_json(
        &dir.join("metrics.json"),
        &TrainMetrics {
            variant: train_cfg.variant,
            seed: train_cfg.seed,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.schedule.epochs_run,
            stopped_early: outcome.schedule.stopped_early,
            validation: &validation,
            test: &test,
        },
    )?;
    println!(
        "{name}: {} epochs, checkpoint from epoch {}, test R@1 {:.2} MRR {:.2} -> {}",
        outcome.schedule.epochs_run,
        outcome.best_epoch,
        test.metrics.r1,
        test.metrics.mrr,
        dir.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dir = runs_root().join(&args.run_name);
    let config_path = dir.join(RUN_CONFIG);
    let mut cfg = if config_path.exists() {
        ConfigMap::load(Some(&config_path))?
    } else if matches!(args.mode, EvalMode::Zeroshot) {
        create_dir(&dir)?;
        ConfigMap::default()
    } else {
        return Err(Error::Config(format!("no run at {}", dir.display())));
    };
    let paths = DataPaths::take(&mut cfg, args.data.clone(), args.embeddings.clone())?;
    let _: Option<String> = cfg.take("name")?;
    let train_cfg: TrainConfig = cfg.finish("train")?;
    let data = paths.load()?;
    let load_model = || -> Result<HierarchicalModel<f32>> { Ok(HierarchicalModel::load(&dir.join(CHECKPOINT))?.0) };

    let table = match args.mode {
        EvalMode::Trained => {
            let model = load_model()?;
            let dataset = data.dataset(VisualSource::for_variant(model.variant()))?;
            let r = evaluate_model(&model, &dataset, data.split.get(args.split), train_cfg.eval_chunk)?;
            ReportTable {
                title: format!("Trained model {}", args.run_name),
                split: args.split.to_string(),
                rows: vec![ReportRow { label: model.variant().to_string(), metrics: r.metrics, queries: Some(r.queries) }],
            }
        }
        EvalMode::Zeroshot => zero_shot_table(&data, args.split)?,
        EvalMode::Transfer => {
            let model = load_model()?;
            let generation = paths.generation()?;
            let count = args.heldout_count.unwrap_or_else(|| data.split.get(args.split).len());
            let seed = args.heldout_seed.unwrap_or(generation.seed.wrapping_add(1_000_003));
            let heldout = transfer_data(&data, &generation.corpus, seed, count)?;
            transfer_table(&model, &data, &heldout, args.split, train_cfg.eval_chunk)?
        }
        EvalMode::Fusion => {
            let spec = ExperimentSpec::Fusion { seeds: vec![train_cfg.seed] };
            run_experiment(&spec, &data, &paths.generation()?.corpus, args.split, &train_cfg)?
        }
    };
    let stem = format!("report_{}_{}", args.mode.name(), args.split);
    write_report(&dir, &stem, &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = ConfigMap::load(Some(&args.config))?;
    let paths = DataPaths::take(&mut cfg, args.data.clone(), None)?;
    let name: String = args.run_name.clone().or(cfg.take("name")?).ok_or_else(|| {
        Error::Config("run needs a name (config key \"name\" or --run-name)".into())
    })?;
    let split: SplitName = match cfg.take::<String>("split")? {
        Some(s) => s.parse()?,
        None => SplitName::Test,
    };
    let raw: Vec<Value> = cfg.take("experiments")?.unwrap_or_default();
    if raw.is_empty() {
        return Err(Error::Config("run config lists no experiments".into()));
    }
    let experiments = raw.iter().map(ExperimentSpec::parse).collect::<Result<Vec<_>>>()?;
    let base: TrainConfig = cfg.finish("run")?;
    base.validate()?;

    let data = paths.load()?;
    let generation = paths.generation()?;
    let dir = fresh_run_dir(&name, args.overwrite)?;
    let mut extra = vec![("name", json!(name)), ("split", json!(split))];
    extra.extend(paths.extra());
    extra.push(("experiments", json!(experiments)));
    write_json(&dir.join(RUN_CONFIG), &resolved(&base, &extra))?;

    let mut tables = Vec::new();
    for (i, spec) in experiments.iter().enumerate() {
        log::info!("experiment {} of {}: {}", i + 1, experiments.len(), spec.id());
        let table = run_experiment(spec, &data, &generation.corpus, split, &base)?;
        write_report(&dir, &format!("report_{i}_{}", spec.id()), &table)?;
        print!("{table}");
        println!();
        tables.push(table);
    }
    write_json(&dir.join("metrics.json"), &tables)
}
