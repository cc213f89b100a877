//! Contrastive training: triplet loss, mini-batch loop, early stopping.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusSplit};
use crate::embedstore::{description_key, EmbeddingSet};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_pairs;
use crate::model::{HierarchicalModel, ModelConfig, MuseumFeatures, Variant};
use crate::neural::{cst, Adam, AdamConfig, Float, Mode, Parameterized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub margin: f64,
    pub seed: u64,
    pub variant: Variant,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub hidden: usize,
    pub joint: usize,
    pub text_hidden: usize,
    pub kernel: usize,
    /// Museums per eval-mode forward pass when embedding whole splits.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0007,
            batch_size: 64,
            max_epochs: 50,
            patience: 25,
            min_delta: 0.0001,
            margin: 0.2,
            seed: 0,
            variant: Variant::Hl,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            hidden: 512,
            joint: 256,
            text_hidden: 256,
            kernel: 3,
            eval_chunk: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("min_delta", self.min_delta),
            ("margin", self.margin),
            ("adam_eps", self.adam_eps),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} = {v} must be positive")));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1)")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.eval_chunk == 0 {
            return Err(Error::Config("max_epochs, patience and eval_chunk must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn model_config(&self, visual_dim: usize, secondary_dim: Option<usize>, text_dim: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            visual_dim,
            secondary_dim: if self.variant.is_fusion() { secondary_dim } else { None },
            text_dim,
            hidden: self.hidden,
            joint: self.joint,
            text_hidden: self.text_hidden,
            kernel: self.kernel,
        }
    }
}

/// Matched museum features and description sentence embeddings, keyed by museum id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<A> {
    pub museums: IndexMap<String, MuseumFeatures<A>>,
    pub texts: IndexMap<String, Array2<A>>,
}

impl Dataset<f32> {
    /// Collects every museum of `corpus` with its description from the sets.
    pub fn from_sets(
        corpus: &Corpus,
        visual: &EmbeddingSet,
        secondary: Option<&EmbeddingSet>,
        text: &EmbeddingSet,
    ) -> Result<Self> {
        let mut museums = IndexMap::new();
        let mut texts = IndexMap::new();
        for m in &corpus.museums {
            museums.insert(m.id.clone(), MuseumFeatures::from_sets(m, visual, secondary)?);
            texts.insert(m.id.clone(), text.require(&description_key(&m.id))?.to_owned());
        }
        Ok(Dataset { museums, texts })
    }
}

impl<A: Float> Dataset<A> {
    pub fn visual_dim(&self) -> Option<usize> {
        self.museums.values().flat_map(|m| m.rooms.iter().flatten()).map(|f| f.ncols()).next()
    }

    pub fn secondary_dim(&self) -> Option<usize> {
        self.museums
            .values()
            .filter_map(|m| m.secondary.as_ref())
            .flat_map(|s| s.iter().flatten())
            .map(|v| v.len())
            .next()
    }

    pub fn text_dim(&self) -> Option<usize> {
        self.texts.values().map(|t| t.ncols()).next()
    }

    /// Museum features and description rows for `ids`, in order.
    pub fn pairs(&self, ids: &[String]) -> Result<(Vec<&MuseumFeatures<A>>, Vec<ArrayView2<'_, A>>)> {
        let mut museums = Vec::with_capacity(ids.len());
        let mut texts = Vec::with_capacity(ids.len());
        for id in ids {
            museums.push(
                self.museums
                    .get(id)
                    .ok_or_else(|| Error::Input(format!("no visual features for museum {id}")))?,
            );
            texts.push(
                self.texts
                    .get(id)
                    .ok_or_else(|| Error::Input(format!("no description embedding for museum {id}")))?
                    .view(),
            );
        }
        Ok((museums, texts))
    }
}

/// Loss value and its gradients with respect to both embedding batches.
#[derive(Debug, Clone)]
pub struct TripletLoss<A> {
    pub loss: f64,
    pub grad_text: Array2<A>,
    pub grad_museum: Array2<A>,
}

/// Bidirectional hinge with the hardest in-batch negative:
///
/// `L = 1/B sum_i [a - s_ii + max_{j!=i} s_ij]_+ + [a - s_ii + max_{k!=i} s_ki]_+`
///
/// with `s_ij = t_i . m_j`, the cosine for unit rows. Ties for the hardest
/// negative go to the lowest index.
pub fn triplet_loss<A: Float>(text: ArrayView2<'_, A>, museum: ArrayView2<'_, A>, margin: f64) -> Result<TripletLoss<A>> {
    let b = text.nrows();
    if museum.nrows() != b || text.ncols() != museum.ncols() {
        return Err(Error::Shape(format!(
            "triplet loss needs matching batches, got {:?} and {:?}",
            text.dim(),
            museum.dim()
        )));
    }
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let s = text.dot(&museum.t());
    let alpha: A = cst(margin);
    let w: A = cst(1.0 / b as f64);
    let mut ds = Array2::<A>::zeros((b, b));
    let mut loss = A::zero();
    let hardest = |vals: &mut dyn Iterator<Item = (usize, A)>| {
        vals.fold(None, |best: Option<(usize, A)>, (j, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((j, v)),
        })
        .expect("b >= 2")
    };
    for i in 0..b {
        let pos = s[[i, i]];
        let (j, neg) = hardest(&mut (0..b).filter(|&j| j != i).map(|j| (j, s[[i, j]])));
        let h = alpha - pos + neg;
        if h > A::zero() {
            loss += h;
            ds[[i, i]] -= w;
            ds[[i, j]] += w;
        }
        let (k, neg) = hardest(&mut (0..b).filter(|&k| k != i).map(|k| (k, s[[k, i]])));
        let h = alpha - pos + neg;
        if h > A::zero() {
            loss += h;
            ds[[i, i]] -= w;
            ds[[k, i]] += w;
        }
    }
    let loss = (loss * w).to_f64().unwrap();
    if !loss.is_finite() {
        return Err(Error::Numeric("triplet loss is not finite".into()));
    }
    Ok(TripletLoss {
        loss,
        grad_text: ds.dot(&museum),
        grad_museum: ds.t().dot(&text),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience counter over validation losses. A loss counts as an improvement
/// only when it beats the running best by strictly more than `min_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Feeds the loss of 1-based `epoch`.
    pub fn update(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// Epoch of the last counted improvement (0 before any epoch).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Decision after replaying a whole validation-loss history.
pub fn early_stop_check(history: &[f64], patience: usize, min_delta: f64) -> StopDecision {
    let mut es = EarlyStopping::new(patience, min_delta);
    history
        .iter()
        .enumerate()
        .map(|(e, &l)| es.update(e + 1, l))
        .last()
        .unwrap_or(StopDecision::Continue)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    /// Number of epochs executed.
    pub epochs_run: usize,
    /// Epoch of the last counted improvement.
    pub reference_epoch: usize,
    pub stopped_early: bool,
}

/// Runs `epoch(e)` for e = 1..=max_epochs, each returning the validation
/// loss, until early stopping triggers.
pub fn run_schedule(
    max_epochs: usize,
    patience: usize,
    min_delta: f64,
    mut epoch: impl FnMut(usize) -> Result<f64>,
) -> Result<ScheduleOutcome> {
    let mut es = EarlyStopping::new(patience, min_delta);
    for e in 1..=max_epochs {
        let loss = epoch(e)?;
        if es.update(e, loss) == StopDecision::Stop {
            return Ok(ScheduleOutcome {
                epochs_run: e,
                reference_epoch: es.best_epoch(),
                stopped_early: e < max_epochs,
            });
        }
    }
    Ok(ScheduleOutcome {
        epochs_run: max_epochs,
        reference_epoch: es.best_epoch(),
        stopped_early: false,
    })
}

/// One line of `history.jsonl`. Wall time lives in `timing.jsonl` so the
/// history is reproducible bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochTiming {
    pub epoch: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: HierarchicalModel<f32>,
    /// Parameters after the last executed epoch.
    pub final_model: HierarchicalModel<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub timing: Vec<EpochTiming>,
    pub schedule: ScheduleOutcome,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("serializable");
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

impl TrainOutcome {
    pub fn write_history(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.history)
    }

    pub fn write_timing(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.timing)
    }
}

/// Reads `history.jsonl`.
pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

/// Mean triplet loss and MRR of `model` over a whole split in eval mode,
/// treating the split as one batch.
pub fn validation_scores(
    model: &HierarchicalModel<f32>,
    data: &Dataset<f32>,
    ids: &[String],
    margin: f64,
    chunk: usize,
) -> Result<(f64, f64)> {
    let (museums, texts) = data.pairs(ids)?;
    let m = model.embed_museums(&museums, chunk)?;
    let t = model.embed_texts(&texts, chunk)?;
    let loss = triplet_loss(t.view(), m.view(), margin)?.loss;
    let report = evaluate_pairs(ids, t.view(), m.view())?;
    Ok((loss, report.metrics.mrr))
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step(
    model: &mut HierarchicalModel<f32>,
    adam: &mut Adam<f32>,
    museums: &[&MuseumFeatures<f32>],
    texts: &[ArrayView2<'_, f32>],
    margin: f64,
) -> Result<f64> {
    model.zero_grad();
    let (m, mc) = model.forward_museums(museums, Mode::Train)?;
    let (t, tc) = model.forward_texts(texts)?;
    let l = triplet_loss(t.view(), m.view(), margin)?;
    model.backward_museums(mc, l.grad_museum.view());
    model.backward_texts(tc, l.grad_text.view());
    adam.step(model);
    Ok(l.loss)
}

pub fn train(data: &Dataset<f32>, split: &CorpusSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 museums, the train split has {}",
            split.train.len()
        )));
    }
    if split.validation.len() < 2 {
        return Err(Error::Config(format!(
            "validation needs at least 2 museums, the split has {}",
            split.validation.len()
        )));
    }
    let visual = data.visual_dim().ok_or_else(|| Error::Config("dataset has no frames".into()))?;
    let text = data.text_dim().ok_or_else(|| Error::Config("dataset has no descriptions".into()))?;
    let model_cfg = config.model_config(visual, data.secondary_dim(), text);
    let mut model = HierarchicalModel::<f32>::new(model_cfg, config.seed)?;
    let mut adam = Adam::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let (train_museums, train_texts) = data.pairs(&split.train)?;
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut history = Vec::new();
    let mut timing = Vec::new();
    let mut best: Option<(f64, usize, HierarchicalModel<f32>)> = None;

    let schedule = run_schedule(config.max_epochs, config.patience, config.min_delta, |epoch| {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            // a lone pair has no negative
            if chunk.len() < 2 {
                continue;
            }
            let ms: Vec<_> = chunk.iter().map(|&i| train_museums[i]).collect();
            let ts: Vec<_> = chunk.iter().map(|&i| train_texts[i]).collect();
            total += train_step(&mut model, &mut adam, &ms, &ts, config.margin)? * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = total / seen as f64;
        let (val_loss, val_mrr) =
            validation_scores(&model, data, &split.validation, config.margin, config.eval_chunk)?;
        log::info!(
            "{} epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:.5}, validation MRR {val_mrr:.2}",
            config.variant
        );
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, val_mrr });
        timing.push(EpochTiming { epoch, seconds: start.elapsed().as_secs_f64() });
        Ok(val_loss)
    })?;

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model: best_model,
        final_model: model,
        best_epoch,
        history,
        timing,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{cosine_similarity, gradient_check, uniform_init};
    use ndarray::{arr2, Axis};
    use rand::Rng;

    fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Array2<f64> {
        let mut m: Array2<f64> = uniform_init((b, d), 1, rng);
        for mut r in m.rows_mut() {
            let n = r.dot(&r).sqrt();
            r /= n;
        }
        m
    }

    /// Direct double loop over the formula.
    fn brute_force(t: &Array2<f64>, m: &Array2<f64>, alpha: f64) -> f64 {
        let b = t.nrows();
        let s = |i: usize, j: usize| cosine_similarity(t.row(i), m.row(j));
        let mut total = 0.0;
        for i in 0..b {
            let mut worst_m = f64::NEG_INFINITY;
            let mut worst_t = f64::NEG_INFINITY;
            for j in 0..b {
                if j != i {
                    worst_m = worst_m.max(s(i, j));
                    worst_t = worst_t.max(s(j, i));
                }
            }
            total += (alpha - s(i, i) + worst_m).max(0.0) + (alpha - s(i, i) + worst_t).max(0.0);
        }
        total / b as f64
    }

    #[test]
    fn margin_satisfied_gives_zero() {
        let t = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(triplet_loss(t.view(), t.view(), 0.2).unwrap().loss, 0.0);
    }

    #[test]
    fn equal_similarities_give_twice_the_margin() {
        let t = arr2(&[[1.0, 0.0], [1.0, 0.0]]);
        assert!((triplet_loss(t.view(), t.view(), 0.2).unwrap().loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_pair_is_too_small() {
        let t = arr2(&[[1.0f32, 0.0]]);
        assert!(matches!(triplet_loss(t.view(), t.view(), 0.2), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn matches_brute_force_and_is_permutation_invariant() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (t, m) = (unit_rows(&mut rng, 5, 4), unit_rows(&mut rng, 5, 4));
            let l = triplet_loss(t.view(), m.view(), 0.2).unwrap().loss;
            assert!((l - brute_force(&t, &m, 0.2)).abs() < 1e-12);
            assert!(l >= 0.0);
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rng);
            let lp = triplet_loss(t.select(Axis(0), &perm).view(), m.select(Axis(0), &perm).view(), 0.2)
                .unwrap()
                .loss;
            assert!((l - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn early_stopping_rules() {
        let decreasing: Vec<f64> = (0..40).map(|i| 1.0 - 0.01 * i as f64).collect();
        assert_eq!(early_stop_check(&decreasing, 25, 1e-4), StopDecision::Continue);
        assert_eq!(early_stop_check(&[0.5; 26], 25, 1e-4), StopDecision::Stop);
        assert_eq!(early_stop_check(&[0.5; 25], 25, 1e-4), StopDecision::Continue);
        // improving by exactly min_delta does not reset patience
        let mut es = EarlyStopping::new(2, 1e-4);
        es.update(1, 1.0);
        es.update(2, 1.0 - 1e-4);
        assert_eq!(es.best_epoch(), 1);
        assert_eq!(es.update(3, 1.0 - 1e-4), StopDecision::Stop);
    }

    #[test]
    fn schedule_stops_patience_epochs_after_last_improvement() {
        let losses = [3.0, 2.0, 1.5, 1.49995, 1.5, 1.49992];
        let out = run_schedule(50, 3, 1e-4, |e| Ok(*losses.get(e - 1).unwrap_or(&1.5))).unwrap();
        assert_eq!(out.reference_epoch, 3);
        assert_eq!(out.epochs_run, 6);
        assert!(out.stopped_early);
    }

    fn tiny_data(rng: &mut ChaCha8Rng, n: usize) -> (Dataset<f32>, Vec<String>) {
        let mut museums = IndexMap::new();
        let mut texts = IndexMap::new();
        for i in 0..n {
            let id = format!("m{i}");
            let rooms = (0..rng.gen_range(1..3))
                .map(|_| (0..rng.gen_range(1..3)).map(|_| uniform_init((rng.gen_range(1..4), 6), 1, rng)).collect())
                .collect();
            museums.insert(id.clone(), MuseumFeatures { id: id.clone(), rooms, secondary: None });
            texts.insert(id.clone(), uniform_init((rng.gen_range(1..4), 6), 1, rng));
        }
        let ids = museums.keys().cloned().collect();
        (Dataset { museums, texts }, ids)
    }

    fn small_config() -> TrainConfig {
        TrainConfig { hidden: 16, joint: 8, text_hidden: 8, ..Default::default() }
    }

    #[test]
    fn loss_decreases_on_a_fixed_batch() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (data, ids) = tiny_data(&mut rng, 6);
            let cfg = TrainConfig { lr: 0.01, seed, ..small_config() };
            let mut model = HierarchicalModel::<f32>::new(cfg.model_config(6, None, 6), seed).unwrap();
            let mut adam = Adam::new(cfg.adam());
            let (ms, ts) = data.pairs(&ids).unwrap();
            let losses: Vec<f64> =
                (0..10).map(|_| train_step(&mut model, &mut adam, &ms, &ts, cfg.margin).unwrap()).collect();
            assert!(losses[9] < losses[0], "seed {seed}: {losses:?}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (data, ids) = tiny_data(&mut rng, 4);
        let cfg = small_config();
        let mut model = HierarchicalModel::<f32>::new(cfg.model_config(6, None, 6), 0).unwrap();
        let mut adam = Adam::new(AdamConfig { lr: 0.0, ..cfg.adam() });
        let before = model.clone();
        let (ms, ts) = data.pairs(&ids).unwrap();
        train_step(&mut model, &mut adam, &ms, &ts, 0.2).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        model.clone().visit("", &mut |_, t| if t.grad.is_some() { a.extend_from_slice(t.value) });
        before.clone().visit("", &mut |_, t| if t.grad.is_some() { b.extend_from_slice(t.value) });
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic_and_rejects_tiny_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (data, ids) = tiny_data(&mut rng, 9);
        let split = CorpusSplit { train: ids[..5].to_vec(), validation: ids[5..7].to_vec(), test: ids[7..].to_vec() };
        let cfg = TrainConfig { max_epochs: 3, patience: 2, batch_size: 2, ..small_config() };
        let a = train(&data, &split, &cfg).unwrap();
        let b = train(&data, &split, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert!(a.history.len() <= 3);

        let empty = CorpusSplit { train: vec![], ..split.clone() };
        assert!(matches!(train(&data, &empty, &cfg), Err(Error::Config(_))));
    }

    /// Hinge values and hardest-negative gaps farther than this from zero
    /// cannot flip under the probe step.
    fn well_separated(t: &Array2<f64>, m: &Array2<f64>, alpha: f64, slack: f64) -> bool {
        let s = t.dot(&m.t());
        let b = s.nrows();
        (0..b).all(|i| {
            [s.row(i).to_owned(), s.column(i).to_owned()].iter().all(|line| {
                let mut negs: Vec<f64> = (0..b).filter(|&j| j != i).map(|j| line[j]).collect();
                negs.sort_by(|a, b| b.total_cmp(a));
                let hinge = alpha - s[[i, i]] + negs[0];
                hinge.abs() > slack && (negs.len() < 2 || negs[0] - negs[1] > slack)
            })
        })
    }

    /// The encoders' chain rule is checked against arbitrary upstream
    /// gradients in the model tests; here the loss's own input gradients.
    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let b = rng.gen_range(2..6);
            let (t, m) = (unit_rows(&mut rng, b, 4), unit_rows(&mut rng, b, 4));
            // a kink within reach of the probe step breaks central differences
            if !well_separated(&t, &m, 0.2, 0.01) {
                continue;
            }
            let l = triplet_loss(t.view(), m.view(), 0.2).unwrap();
            let flat = |a: &Array2<f64>| a.iter().copied().collect::<Vec<_>>();
            let errt = gradient_check(
                |p| triplet_loss(Array2::from_shape_vec(t.dim(), p.to_vec()).unwrap().view(), m.view(), 0.2).unwrap().loss,
                &flat(&t),
                &flat(&l.grad_text),
                1e-3,
            );
            let errm = gradient_check(
                |p| triplet_loss(t.view(), Array2::from_shape_vec(m.dim(), p.to_vec()).unwrap().view(), 0.2).unwrap().loss,
                &flat(&m),
                &flat(&l.grad_museum),
                1e-3,
            );
            assert!(errt.max(errm) < 1e-4, "seed {seed}: {errt} {errm}");
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} usable draws");
    }
}
