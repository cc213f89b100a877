//! Experiment grids: trained variants, zero-shot aggregation, fusion and
//! brief-description transfer, each rendered as a report table.

use serde::{Deserialize, Serialize};

use super::{evaluate_pairs, zero_shot_encode, zero_shot_text, AggregationSpec, FrameAggregation, ReportRow, ReportTable, RetrievalReport};
use crate::corpus::{
    render_brief_description, render_description, split_corpus, Corpus, CorpusConfig, CorpusSplit, Description,
    SplitName, DEFAULT_SPLIT_RATIOS,
};
use crate::embedstore::{
    description_key, synth_text_embeddings, synth_video_model_embeddings, synth_visual_embeddings, EmbeddingSet,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::model::{HierarchicalModel, Variant};
use crate::training::{train, Dataset, TrainConfig};

/// Which visual features feed the museum side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisualSource {
    /// Frame-level image-model embeddings.
    Image,
    /// Clip-level video-model embeddings, one row per video.
    Video,
    /// Image frames plus the video-model vectors as the second source.
    Fused,
}

impl VisualSource {
    /// The source a variant trains on when none is chosen explicitly.
    pub fn for_variant(variant: Variant) -> Self {
        if variant.is_fusion() {
            VisualSource::Fused
        } else {
            VisualSource::Image
        }
    }
}

/// A corpus with its split, descriptions and every embedding source.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub corpus: Corpus,
    pub split: CorpusSplit,
    pub descriptions: Vec<Description>,
    pub synth: SynthConfig,
    pub visual: EmbeddingSet,
    pub video: EmbeddingSet,
    pub text: EmbeddingSet,
}

impl ExperimentData {
    /// Generates corpus, long descriptions and synthetic embeddings; the
    /// split is drawn with the corpus seed.
    pub fn synthetic(corpus_seed: u64, corpus: &CorpusConfig, synth: &SynthConfig) -> Result<Self> {
        let corpus = Corpus::generate(corpus_seed, corpus)?;
        let split = split_corpus(&corpus.museums, DEFAULT_SPLIT_RATIOS, corpus_seed)?;
        let descriptions = corpus.museums.iter().map(render_description).collect::<Result<Vec<_>>>()?;
        Self::from_parts(corpus, split, descriptions, synth)
    }

    pub fn from_parts(
        corpus: Corpus,
        split: CorpusSplit,
        descriptions: Vec<Description>,
        synth: &SynthConfig,
    ) -> Result<Self> {
        Ok(ExperimentData {
            visual: synth_visual_embeddings(&corpus, synth)?,
            video: synth_video_model_embeddings(&corpus, synth)?,
            text: synth_text_embeddings(&corpus, &descriptions, synth)?,
            corpus,
            split,
            descriptions,
            synth: synth.clone(),
        })
    }

    pub fn dataset(&self, source: VisualSource) -> Result<Dataset<f32>> {
        build_dataset(&self.corpus, &self.visual, &self.video, &self.text, source)
    }
}

pub fn build_dataset(
    corpus: &Corpus,
    image: &EmbeddingSet,
    video: &EmbeddingSet,
    text: &EmbeddingSet,
    source: VisualSource,
) -> Result<Dataset<f32>> {
    match source {
        VisualSource::Image => Dataset::from_sets(corpus, image, None, text),
        VisualSource::Video => Dataset::from_sets(corpus, video, None, text),
        VisualSource::Fused => Dataset::from_sets(corpus, image, Some(video), text),
    }
}

/// Shape of the held-out corpus used for transfer: same room and video
/// distributions, distinct ids.
pub fn heldout_corpus_config(base: &CorpusConfig, museums: usize) -> CorpusConfig {
    CorpusConfig {
        museum_count: museums,
        id_prefix: "heldout".to_string(),
        ..base.clone()
    }
}

/// A fresh corpus described only by brief descriptions, embedded with the
/// same synthetic encoders (same topic centers) as `data`. Every museum is
/// in the test split.
pub fn transfer_data(data: &ExperimentData, corpus: &CorpusConfig, seed: u64, museums: usize) -> Result<ExperimentData> {
    let heldout = Corpus::generate(seed, &heldout_corpus_config(corpus, museums))?;
    let descriptions = heldout
        .museums
        .iter()
        .map(|m| render_brief_description(m, &heldout.vocabulary))
        .collect::<Result<Vec<_>>>()?;
    let split = CorpusSplit {
        train: vec![],
        validation: vec![],
        test: heldout.museums.iter().map(|m| m.id.clone()).collect(),
    };
    ExperimentData::from_parts(heldout, split, descriptions, &data.synth)
}

/// Ranks the split's museums against their descriptions with a trained model.
pub fn evaluate_model(
    model: &HierarchicalModel<f32>,
    dataset: &Dataset<f32>,
    ids: &[String],
    chunk: usize,
) -> Result<RetrievalReport> {
    let (museums, texts) = dataset.pairs(ids)?;
    let m = model.embed_museums(&museums, chunk)?;
    let t = model.embed_texts(&texts, chunk)?;
    evaluate_pairs(ids, t.view(), m.view())
}

/// One row per aggregation spec. Frame-level rows use the image source,
/// `frames = none` rows the video-model source.
pub fn zero_shot_table(data: &ExperimentData, split: SplitName) -> Result<ReportTable> {
    let ids = data.split.get(split);
    let image = data.dataset(VisualSource::Image)?;
    let video = data.dataset(VisualSource::Video)?;
    let mut text = ndarray::Array2::<f32>::zeros((ids.len(), data.text.dim));
    for (i, id) in ids.iter().enumerate() {
        text.row_mut(i).assign(&zero_shot_text(data.text.require(&description_key(id))?)?);
    }
    let mut rows = Vec::new();
    for spec in AggregationSpec::grid() {
        let source = if spec.frames == FrameAggregation::None { &video } else { &image };
        let mut gallery = ndarray::Array2::<f32>::zeros((ids.len(), data.visual.dim));
        for (i, id) in ids.iter().enumerate() {
            let m = source
                .museums
                .get(id)
                .ok_or_else(|| Error::Input(format!("no visual features for museum {id}")))?;
            gallery.row_mut(i).assign(&zero_shot_encode(m, &spec)?);
        }
        let report = evaluate_pairs(ids, text.view(), gallery.view())?;
        rows.push(ReportRow { label: spec.to_string(), metrics: report.metrics, queries: Some(report.queries) });
    }
    Ok(ReportTable { title: "Zero-shot aggregation".into(), split: split.to_string(), rows })
}

/// Long descriptions on the split versus brief descriptions on a held-out corpus.
pub fn transfer_table(
    model: &HierarchicalModel<f32>,
    data: &ExperimentData,
    heldout: &ExperimentData,
    split: SplitName,
    chunk: usize,
) -> Result<ReportTable> {
    let source = VisualSource::for_variant(model.variant());
    let long = evaluate_model(model, &data.dataset(source)?, data.split.get(split), chunk)?;
    let brief = evaluate_model(model, &heldout.dataset(source)?, &heldout.split.test, chunk)?;
    Ok(ReportTable {
        title: format!("Description transfer ({})", model.variant()),
        split: split.to_string(),
        rows: vec![
            ReportRow { label: "long descriptions".into(), metrics: long.metrics, queries: Some(long.queries) },
            ReportRow {
                label: "brief descriptions, held-out corpus".into(),
                metrics: brief.metrics,
                queries: Some(brief.queries),
            },
        ],
    })
}

/// One entry of the `experiments` list of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Train each variant once per seed and rank the split.
    Trained {
        variants: Vec<Variant>,
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
    },
    ZeroShot,
    /// Image source alone, video-model source alone, early and late fusion.
    Fusion {
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
    },
    Transfer {
        #[serde(default = "default_variant")]
        variant: Variant,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_heldout")]
        heldout_museums: usize,
    },
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_variant() -> Variant {
    Variant::Hl
}

fn default_heldout() -> usize {
    69
}

impl ExperimentSpec {
    pub fn parse(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("experiment {value}: {e}")))
    }

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentSpec::Trained { .. } => "trained",
            ExperimentSpec::ZeroShot => "zero_shot",
            ExperimentSpec::Fusion { .. } => "fusion",
            ExperimentSpec::Transfer { .. } => "transfer",
        }
    }
}

fn trained_row(
    data: &ExperimentData,
    source: VisualSource,
    config: &TrainConfig,
    split: SplitName,
    label: String,
) -> Result<ReportRow> {
    let dataset = data.dataset(source)?;
    let outcome = train(&dataset, &data.split, config)?;
    let report = evaluate_model(&outcome.model, &dataset, data.split.get(split), config.eval_chunk)?;
    Ok(ReportRow { label, metrics: report.metrics, queries: Some(report.queries) })
}

fn seeded_label(base: String, seeds: &[u64], seed: u64) -> String {
    if seeds.len() == 1 {
        base
    } else {
        format!("{base} (seed {seed})")
    }
}

/// Runs one experiment; `base` supplies every training hyperparameter not
/// fixed by the experiment itself. Corpus generation for transfer reuses
/// `corpus`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    corpus: &CorpusConfig,
    split: SplitName,
    base: &TrainConfig,
) -> Result<ReportTable> {
    let mut rows = Vec::new();
    let title = match spec {
        ExperimentSpec::ZeroShot => return zero_shot_table(data, split),
        ExperimentSpec::Trained { variants, seeds } => {
            if variants.is_empty() || seeds.is_empty() {
                return Err(Error::Config("trained experiment needs variants and seeds".into()));
            }
            for &variant in variants {
                for &seed in seeds {
                    let cfg = TrainConfig { variant, seed, ..base.clone() };
                    let label = seeded_label(variant.to_string(), seeds, seed);
                    rows.push(trained_row(data, VisualSource::for_variant(variant), &cfg, split, label)?);
                }
            }
            "Trained variants"
        }
        ExperimentSpec::Fusion { seeds } => {
            let grid = [
                ("image model", Variant::Hl, VisualSource::Image),
                ("video model", Variant::HlSkipAdapter, VisualSource::Video),
                ("early fusion", Variant::HlEarlyFusion, VisualSource::Fused),
                ("late fusion", Variant::HlLateFusion, VisualSource::Fused),
            ];
            for (name, variant, source) in grid {
                for &seed in seeds {
                    let cfg = TrainConfig { variant, seed, ..base.clone() };
                    rows.push(trained_row(data, source, &cfg, split, seeded_label(name.into(), seeds, seed))?);
                }
            }
            "Feature sources and fusion"
        }
        ExperimentSpec::Transfer { variant, seed, heldout_museums } => {
            let cfg = TrainConfig { variant: *variant, seed: *seed, ..base.clone() };
            let dataset = data.dataset(VisualSource::for_variant(*variant))?;
            let outcome = train(&dataset, &data.split, &cfg)?;
            // a held-out seed no split of `data` can share ids with
            let heldout = transfer_data(data, corpus, seed.wrapping_add(1_000_003), *heldout_museums)?;
            return transfer_table(&outcome.model, data, &heldout, split, cfg.eval_chunk);
        }
    };
    Ok(ReportTable { title: title.into(), split: split.to_string(), rows })
}
