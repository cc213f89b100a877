//! Hierarchical museum encoder, description encoder and their ablations.
//!
//! A museum batch is flattened museum -> room -> video -> frame, so every
//! level is a ragged [`SeqBatch`] over the previous level's output rows.
//! Batch normalization therefore sees all positions of a level across the
//! whole mini-batch.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Museum;
use crate::embedstore::{read_embeddings, write_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::neural::{
    join, l2_normalize_backward, l2_normalize_rows, mean_pool, AdapterBlock, AdapterCache, BiGru,
    BiGruCache, Float, Linear, Mode, Parameterized, SeqBatch, TensorMut,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "HL")]
    Hl,
    #[serde(rename = "NHL_museum")]
    NhlMuseum,
    #[serde(rename = "NHL_video_museum")]
    NhlVideoMuseum,
    #[serde(rename = "NHL_room_museum")]
    NhlRoomMuseum,
    #[serde(rename = "HL_skip_adapter")]
    HlSkipAdapter,
    #[serde(rename = "HL_early_fusion")]
    HlEarlyFusion,
    #[serde(rename = "HL_late_fusion")]
    HlLateFusion,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Hl,
        Variant::NhlMuseum,
        Variant::NhlVideoMuseum,
        Variant::NhlRoomMuseum,
        Variant::HlSkipAdapter,
        Variant::HlEarlyFusion,
        Variant::HlLateFusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hl => "HL",
            Variant::NhlMuseum => "NHL_museum",
            Variant::NhlVideoMuseum => "NHL_video_museum",
            Variant::NhlRoomMuseum => "NHL_room_museum",
            Variant::HlSkipAdapter => "HL_skip_adapter",
            Variant::HlEarlyFusion => "HL_early_fusion",
            Variant::HlLateFusion => "HL_late_fusion",
        }
    }

    pub fn is_fusion(self) -> bool {
        matches!(self, Variant::HlEarlyFusion | Variant::HlLateFusion)
    }

    fn has_video_adapter(self) -> bool {
        matches!(
            self,
            Variant::Hl | Variant::NhlVideoMuseum | Variant::HlEarlyFusion | Variant::HlLateFusion
        )
    }

    fn has_room_encoder(self) -> bool {
        !matches!(self, Variant::NhlMuseum | Variant::NhlVideoMuseum)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Row width of the primary visual source.
    pub visual_dim: usize,
    /// Width of the secondary video-level source (fusion variants only).
    #[serde(default)]
    pub secondary_dim: Option<usize>,
    pub text_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_joint")]
    pub joint: usize,
    #[serde(default = "default_text_hidden")]
    pub text_hidden: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_hidden() -> usize {
    512
}
fn default_joint() -> usize {
    256
}
fn default_text_hidden() -> usize {
    256
}
fn default_kernel() -> usize {
    3
}

impl ModelConfig {
    pub fn new(variant: Variant, visual_dim: usize, text_dim: usize) -> Self {
        ModelConfig {
            variant,
            visual_dim,
            secondary_dim: None,
            text_dim,
            hidden: default_hidden(),
            joint: default_joint(),
            text_hidden: default_text_hidden(),
            kernel: default_kernel(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("visual_dim", self.visual_dim),
            ("text_dim", self.text_dim),
            ("hidden", self.hidden),
            ("joint", self.joint),
            ("text_hidden", self.text_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        match (self.variant.is_fusion(), self.secondary_dim) {
            (true, None) => Err(Error::Config(format!(
                "variant {} needs a secondary visual source",
                self.variant
            ))),
            (true, Some(0)) => Err(Error::Config("secondary_dim must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Frozen visual inputs of one museum, mirroring its room/video tree.
#[derive(Debug, Clone, PartialEq)]
pub struct MuseumFeatures<A> {
    pub id: String,
    /// `rooms[r][v]`: frame rows of video `v` in room `r`.
    pub rooms: Vec<Vec<Array2<A>>>,
    /// `secondary[r][v]`: video-level vector from a second source.
    pub secondary: Option<Vec<Vec<Array1<A>>>>,
}

impl MuseumFeatures<f32> {
    /// Gathers the museum's videos from embedding sets keyed by video id.
    pub fn from_sets(museum: &Museum, visual: &EmbeddingSet, secondary: Option<&EmbeddingSet>) -> Result<Self> {
        let rooms = museum
            .rooms
            .iter()
            .map(|room| {
                room.videos
                    .iter()
                    .map(|v| visual.require(&v.id).map(|x| x.to_owned()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let secondary = secondary
            .map(|set| {
                museum
                    .rooms
                    .iter()
                    .map(|room| {
                        room.videos
                            .iter()
                            .map(|v| {
                                let x = set.require(&v.id)?;
                                if x.nrows() != 1 {
                                    return Err(Error::Input(format!(
                                        "secondary source {} must be video-level; {} has {} rows",
                                        set.source_tag,
                                        v.id,
                                        x.nrows()
                                    )));
                                }
                                Ok(x.row(0).to_owned())
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(MuseumFeatures {
            id: museum.id.clone(),
            rooms,
            secondary,
        })
    }
}

impl<A: Float> MuseumFeatures<A> {
    pub fn cast<B: Float>(&self) -> MuseumFeatures<B> {
        let c2 = |x: &Array2<A>| x.mapv(|v| B::from_f64(v.to_f64().unwrap()).unwrap());
        let c1 = |x: &Array1<A>| x.mapv(|v| B::from_f64(v.to_f64().unwrap()).unwrap());
        MuseumFeatures {
            id: self.id.clone(),
            rooms: self.rooms.iter().map(|r| r.iter().map(c2).collect()).collect(),
            secondary: self
                .secondary
                .as_ref()
                .map(|s| s.iter().map(|r| r.iter().map(c1).collect()).collect()),
        }
    }

    pub fn video_count(&self) -> usize {
        self.rooms.iter().map(Vec::len).sum()
    }
}

/// Sequence lengths of every level of a flattened museum batch.
#[derive(Debug, Clone)]
struct Layout {
    video_frames: Vec<usize>,
    room_videos: Vec<usize>,
    museum_rooms: Vec<usize>,
    room_frames: Vec<usize>,
    museum_videos: Vec<usize>,
    museum_frames: Vec<usize>,
}

impl Layout {
    fn of<A: Float>(batch: &[&MuseumFeatures<A>], dim: usize) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("no museums to encode".into()));
        }
        let mut l = Layout {
            video_frames: vec![],
            room_videos: vec![],
            museum_rooms: vec![],
            room_frames: vec![],
            museum_videos: vec![],
            museum_frames: vec![],
        };
        for m in batch {
            if m.rooms.is_empty() {
                return Err(Error::EmptyInput(format!("museum {} has no rooms", m.id)));
            }
            l.museum_rooms.push(m.rooms.len());
            let (mut mv, mut mf) = (0, 0);
            for room in &m.rooms {
                if room.is_empty() {
                    return Err(Error::EmptyInput(format!("museum {} has an empty room", m.id)));
                }
                l.room_videos.push(room.len());
                let mut rf = 0;
                for frames in room {
                    if frames.nrows() == 0 {
                        return Err(Error::EmptyInput(format!("museum {} has a video without frames", m.id)));
                    }
                    if frames.ncols() != dim {
                        return Err(Error::Shape(format!(
                            "museum {}: frame width {} but the model expects {dim}",
                            m.id,
                            frames.ncols()
                        )));
                    }
                    l.video_frames.push(frames.nrows());
                    rf += frames.nrows();
                }
                l.room_frames.push(rf);
                mv += room.len();
                mf += rf;
            }
            l.museum_videos.push(mv);
            l.museum_frames.push(mf);
        }
        Ok(l)
    }
}

fn frames_matrix<A: Float>(batch: &[&MuseumFeatures<A>]) -> Array2<A> {
    let views: Vec<ArrayView2<'_, A>> = batch
        .iter()
        .flat_map(|m| m.rooms.iter().flatten().map(|f| f.view()))
        .collect();
    concatenate(Axis(0), &views).expect("widths checked by layout")
}

fn secondary_matrix<A: Float>(batch: &[&MuseumFeatures<A>], dim: usize) -> Result<Array2<A>> {
    let mut rows = Vec::new();
    for m in batch {
        let sec = m
            .secondary
            .as_ref()
            .ok_or_else(|| Error::Config(format!("museum {} lacks the secondary source a fusion variant needs", m.id)))?;
        if sec.len() != m.rooms.len() || sec.iter().zip(&m.rooms).any(|(s, r)| s.len() != r.len()) {
            return Err(Error::Shape(format!("museum {}: secondary source does not mirror its rooms", m.id)));
        }
        for v in sec.iter().flatten() {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "museum {}: secondary width {} but the model expects {dim}",
                    m.id,
                    v.len()
                )));
            }
            rows.push(v.view().insert_axis(Axis(0)));
        }
    }
    Ok(concatenate(Axis(0), &rows).expect("widths checked"))
}

fn cat<A: Float>(a: &Array2<A>, b: &Array2<A>) -> Array2<A> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("same rows")
}

fn check_finite<A: Float>(x: &Array2<A>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

/// Everything the museum-side backward pass needs.
#[derive(Debug)]
pub struct MuseumCache<A> {
    video: Option<AdapterCache<A>>,
    /// Input of the fusion projection (early: per video, late: per room).
    fusion_in: Option<Array2<A>>,
    room: Option<AdapterCache<A>>,
    room_b: Option<AdapterCache<A>>,
    museum: AdapterCache<A>,
    out: Array2<A>,
    norms: Array1<A>,
}

impl<A: Float> MuseumCache<A> {
    /// Smallest distance of any ReLU input to its kink across all levels.
    pub fn relu_margin(&self) -> A {
        [&self.video, &self.room, &self.room_b]
            .into_iter()
            .flatten()
            .chain(std::iter::once(&self.museum))
            .fold(A::infinity(), |m, c| m.min(c.relu_margin()))
    }

    /// Smallest pre-normalization output norm.
    pub fn min_norm(&self) -> A {
        self.norms.iter().fold(A::infinity(), |m, n| m.min(*n))
    }
}

#[derive(Debug)]
pub struct TextCache<A> {
    batch: SeqBatch<A>,
    gru: BiGruCache<A>,
    out: Array2<A>,
    norms: Array1<A>,
}

impl<A: Float> TextCache<A> {
    /// Smallest pre-normalization output norm.
    pub fn min_norm(&self) -> A {
        self.norms.iter().fold(A::infinity(), |m, n| m.min(*n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel<A> {
    pub config: ModelConfig,
    pub video_adapter: Option<AdapterBlock<A>>,
    /// Projects concatenated source features to the joint width (fusion only).
    pub fusion: Option<Linear<A>>,
    pub room_encoder: Option<AdapterBlock<A>>,
    /// Room encoder over the secondary source (late fusion only).
    pub room_encoder_b: Option<AdapterBlock<A>>,
    pub museum_encoder: AdapterBlock<A>,
    pub text: BiGru<A>,
}

impl<A: Float> HierarchicalModel<A> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h, j, k) = (config.visual_dim, config.hidden, config.joint, config.kernel);
        let d2 = config.secondary_dim.unwrap_or(0);
        let v = config.variant;
        let video_adapter = v
            .has_video_adapter()
            .then(|| AdapterBlock::new(d, h, j, k, &mut rng))
            .transpose()?;
        let fusion = match v {
            Variant::HlEarlyFusion => Some(Linear::new(j + d2, j, &mut rng)),
            Variant::HlLateFusion => Some(Linear::new(2 * j, j, &mut rng)),
            _ => None,
        };
        let room_in = match v {
            Variant::NhlRoomMuseum | Variant::HlSkipAdapter => d,
            _ => j,
        };
        let room_encoder = v
            .has_room_encoder()
            .then(|| AdapterBlock::new(room_in, h, j, k, &mut rng))
            .transpose()?;
        let room_encoder_b = (v == Variant::HlLateFusion)
            .then(|| AdapterBlock::new(d2, h, j, k, &mut rng))
            .transpose()?;
        let museum_in = if v == Variant::NhlMuseum { d } else { j };
        let museum_encoder = AdapterBlock::new(museum_in, h, j, k, &mut rng)?;
        let text = BiGru::new(config.text_dim, config.text_hidden, j, &mut rng);
        Ok(HierarchicalModel {
            config,
            video_adapter,
            fusion,
            room_encoder,
            room_encoder_b,
            museum_encoder,
            text,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Encodes a batch of museums into unit rows (batch x joint).
    pub fn forward_museums(
        &mut self,
        batch: &[&MuseumFeatures<A>],
        mode: Mode,
    ) -> Result<(Array2<A>, MuseumCache<A>)> {
        let v = self.variant();
        let layout = Layout::of(batch, self.config.visual_dim)?;
        let frames = frames_matrix(batch);
        let secondary = v
            .is_fusion()
            .then(|| secondary_matrix(batch, self.config.secondary_dim.unwrap_or(0)))
            .transpose()?;

        let (mut videos, mut video_cache) = (None, None);
        let mut frames = Some(frames);
        if let Some(adapter) = self.video_adapter.as_mut() {
            let x = SeqBatch::new(frames.take().expect("unused"), layout.video_frames.clone())?;
            let (out, cache) = adapter.forward(&x, mode)?;
            videos = Some(out);
            video_cache = Some(cache);
        } else if v == Variant::HlSkipAdapter {
            videos = Some(mean_pool(frames.take().expect("unused").view(), &layout.video_frames));
        }

        let mut fusion_in = None;
        if v == Variant::HlEarlyFusion {
            let x = cat(videos.as_ref().expect("adapter ran"), secondary.as_ref().expect("fusion"));
            videos = Some(self.fusion.as_ref().expect("fusion").forward(x.view())?);
            fusion_in = Some(x);
        }

        let (mut rooms, mut room_cache, mut room_b_cache) = (None, None, None);
        if let Some(enc) = self.room_encoder.as_mut() {
            let x = match v {
                Variant::NhlRoomMuseum => {
                    SeqBatch::new(frames.take().expect("unused"), layout.room_frames.clone())?
                }
                _ => SeqBatch::new(videos.take().expect("video level ran"), layout.room_videos.clone())?,
            };
            let (out, cache) = enc.forward(&x, mode)?;
            rooms = Some(out);
            room_cache = Some(cache);
        }
        if let Some(enc) = self.room_encoder_b.as_mut() {
            let x = SeqBatch::new(secondary.expect("fusion"), layout.room_videos.clone())?;
            let (out_b, cache) = enc.forward(&x, mode)?;
            room_b_cache = Some(cache);
            let x = cat(rooms.as_ref().expect("room level ran"), &out_b);
            rooms = Some(self.fusion.as_ref().expect("fusion").forward(x.view())?);
            fusion_in = Some(x);
        }

        let x = match v {
            Variant::NhlMuseum => SeqBatch::new(frames.take().expect("unused"), layout.museum_frames.clone())?,
            Variant::NhlVideoMuseum => {
                SeqBatch::new(videos.take().expect("video level ran"), layout.museum_videos.clone())?
            }
            _ => SeqBatch::new(rooms.take().expect("room level ran"), layout.museum_rooms.clone())?,
        };
        let (raw, museum) = self.museum_encoder.forward(&x, mode)?;
        check_finite(&raw, "museum embeddings")?;
        let (out, norms) = l2_normalize_rows(raw.view());
        Ok((
            out.clone(),
            MuseumCache {
                video: video_cache,
                fusion_in,
                room: room_cache,
                room_b: room_b_cache,
                museum,
                out,
                norms,
            },
        ))
    }

    /// Accumulates parameter gradients from `grad_out` (batch x joint), the
    /// gradient with respect to the unit museum rows.
    pub fn backward_museums(&mut self, cache: MuseumCache<A>, grad_out: ArrayView2<'_, A>) {
        let v = self.variant();
        let MuseumCache { video, fusion_in, room, room_b, museum, out, norms } = cache;
        let d_raw = l2_normalize_backward(out.view(), norms.view(), grad_out);
        let below_museum = v != Variant::NhlMuseum;
        let d_museum_in = self.museum_encoder.backward(museum, d_raw.view(), below_museum);

        let mut d_videos = None;
        match v {
            Variant::NhlMuseum => {}
            Variant::NhlVideoMuseum => d_videos = d_museum_in,
            _ => {
                let mut d_rooms = d_museum_in.expect("requested");
                if v == Variant::HlLateFusion {
                    let x = fusion_in.as_ref().expect("late fusion input");
                    let d_cat = self
                        .fusion
                        .as_mut()
                        .expect("fusion")
                        .backward(x.view(), d_rooms.view(), true)
                        .expect("requested");
                    let j = self.config.joint;
                    self.room_encoder_b
                        .as_mut()
                        .expect("late fusion")
                        .backward(room_b.expect("late fusion"), d_cat.slice(s![.., j..]), false);
                    d_rooms = d_cat.slice(s![.., ..j]).to_owned();
                }
                let needs_videos = !matches!(v, Variant::NhlRoomMuseum | Variant::HlSkipAdapter);
                d_videos = self
                    .room_encoder
                    .as_mut()
                    .expect("room level")
                    .backward(room.expect("room level"), d_rooms.view(), needs_videos);
            }
        }

        if let (Some(adapter), Some(cache)) = (self.video_adapter.as_mut(), video) {
            let mut d = d_videos.expect("video level feeds a trained level");
            if v == Variant::HlEarlyFusion {
                let x = fusion_in.as_ref().expect("early fusion input");
                let d_cat = self
                    .fusion
                    .as_mut()
                    .expect("fusion")
                    .backward(x.view(), d.view(), true)
                    .expect("requested");
                d = d_cat.slice(s![.., ..self.config.joint]).to_owned();
            }
            adapter.backward(cache, d.view(), false);
        }
    }

    /// Encodes a batch of descriptions (sentence matrices) into unit rows.
    pub fn forward_texts(&self, batch: &[ArrayView2<'_, A>]) -> Result<(Array2<A>, TextCache<A>)> {
        if let Some(bad) = batch.iter().find(|s| s.ncols() != self.config.text_dim) {
            return Err(Error::Shape(format!(
                "sentence width {} but the model expects {}",
                bad.ncols(),
                self.config.text_dim
            )));
        }
        let x = SeqBatch::stack(batch)?;
        let (raw, gru) = self.text.encode(&x)?;
        check_finite(&raw, "text embeddings")?;
        let (out, norms) = l2_normalize_rows(raw.view());
        Ok((out.clone(), TextCache { batch: x, gru, out, norms }))
    }

    pub fn backward_texts(&mut self, cache: TextCache<A>, grad_out: ArrayView2<'_, A>) {
        let TextCache { batch, gru, out, norms } = cache;
        let d_raw = l2_normalize_backward(out.view(), norms.view(), grad_out);
        self.text.backward(&batch, gru, d_raw.view(), false);
    }

    /// Eval-mode museum embeddings, computed in chunks to bound memory.
    pub fn embed_museums(&self, museums: &[&MuseumFeatures<A>], chunk: usize) -> Result<Array2<A>> {
        let mut rows = Vec::with_capacity(museums.len());
        for part in museums.chunks(chunk.max(1)) {
            // eval mode never mutates; the clone-free path needs &mut only for train
            let (out, _) = self.eval_museums(part)?;
            rows.push(out);
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("same width"))
    }

    fn eval_museums(&self, batch: &[&MuseumFeatures<A>]) -> Result<(Array2<A>, Array1<A>)> {
        let v = self.variant();
        let layout = Layout::of(batch, self.config.visual_dim)?;
        let frames = frames_matrix(batch);
        let secondary = v
            .is_fusion()
            .then(|| secondary_matrix(batch, self.config.secondary_dim.unwrap_or(0)))
            .transpose()?;
        let eval = |block: &AdapterBlock<A>, data: Array2<A>, lens: &[usize]| -> Result<Array2<A>> {
            block.eval(&SeqBatch::new(data, lens.to_vec())?)
        };
        let mut videos = match (&self.video_adapter, v) {
            (Some(a), _) => Some(eval(a, frames.clone(), &layout.video_frames)?),
            (None, Variant::HlSkipAdapter) => Some(mean_pool(frames.view(), &layout.video_frames)),
            _ => None,
        };
        if v == Variant::HlEarlyFusion {
            let x = cat(videos.as_ref().expect("adapter ran"), secondary.as_ref().expect("fusion"));
            videos = Some(self.fusion.as_ref().expect("fusion").forward(x.view())?);
        }
        let mut rooms = match (&self.room_encoder, v) {
            (Some(r), Variant::NhlRoomMuseum) => Some(eval(r, frames.clone(), &layout.room_frames)?),
            (Some(r), _) => Some(eval(r, videos.clone().expect("video level"), &layout.room_videos)?),
            (None, _) => None,
        };
        if let Some(rb) = &self.room_encoder_b {
            let out_b = eval(rb, secondary.expect("fusion"), &layout.room_videos)?;
            let x = cat(rooms.as_ref().expect("room level"), &out_b);
            rooms = Some(self.fusion.as_ref().expect("fusion").forward(x.view())?);
        }
        let raw = match v {
            Variant::NhlMuseum => eval(&self.museum_encoder, frames, &layout.museum_frames)?,
            Variant::NhlVideoMuseum => eval(&self.museum_encoder, videos.expect("video level"), &layout.museum_videos)?,
            _ => eval(&self.museum_encoder, rooms.expect("room level"), &layout.museum_rooms)?,
        };
        check_finite(&raw, "museum embeddings")?;
        Ok(l2_normalize_rows(raw.view()))
    }

    /// Eval-mode description embeddings, in chunks.
    pub fn embed_texts(&self, texts: &[ArrayView2<'_, A>], chunk: usize) -> Result<Array2<A>> {
        let mut rows = Vec::with_capacity(texts.len());
        for part in texts.chunks(chunk.max(1)) {
            rows.push(self.forward_texts(part)?.0);
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("same width"))
    }

    /// In-domain adapter over one video's frames (rows x visual_dim).
    pub fn encode_video(&self, frames: ArrayView2<'_, A>) -> Result<Array1<A>> {
        let adapter = self
            .video_adapter
            .as_ref()
            .ok_or_else(|| Error::Config(format!("variant {} has no in-domain adapter", self.variant())))?;
        Ok(adapter.eval(&SeqBatch::single(frames)?)?.row(0).to_owned())
    }

    /// Room encoder over one room's video vectors (n x input width).
    pub fn encode_room(&self, videos: ArrayView2<'_, A>) -> Result<Array1<A>> {
        let enc = self
            .room_encoder
            .as_ref()
            .ok_or_else(|| Error::Config(format!("variant {} has no room encoder", self.variant())))?;
        Ok(enc.eval(&SeqBatch::single(videos)?)?.row(0).to_owned())
    }

    /// Museum encoder over one museum's room vectors, L2-normalized.
    pub fn encode_museum(&self, rooms: ArrayView2<'_, A>) -> Result<Array1<A>> {
        let raw = self.museum_encoder.eval(&SeqBatch::single(rooms)?)?;
        Ok(l2_normalize_rows(raw.view()).0.row(0).to_owned())
    }

    /// BiGRU over one description's sentence embeddings, L2-normalized.
    pub fn encode_description(&self, sentences: ArrayView2<'_, A>) -> Result<Array1<A>> {
        if sentences.nrows() == 0 {
            return Err(Error::EmptyInput("description has no sentences".into()));
        }
        Ok(self.forward_texts(&[sentences])?.0.row(0).to_owned())
    }

    /// Eval-mode embedding of one museum through this model's variant.
    pub fn encode_museum_full(&self, museum: &MuseumFeatures<A>) -> Result<Array1<A>> {
        Ok(self.eval_museums(&[museum])?.0.row(0).to_owned())
    }
}

impl<A: Float> Parameterized<A> for HierarchicalModel<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        if let Some(b) = self.video_adapter.as_mut() {
            b.visit(&join(prefix, "video_adapter"), f);
        }
        if let Some(b) = self.fusion.as_mut() {
            b.visit(&join(prefix, "fusion"), f);
        }
        if let Some(b) = self.room_encoder.as_mut() {
            b.visit(&join(prefix, "room_encoder"), f);
        }
        if let Some(b) = self.room_encoder_b.as_mut() {
            b.visit(&join(prefix, "room_encoder_b"), f);
        }
        self.museum_encoder.visit(&join(prefix, "museum_encoder"), f);
        self.text.visit(&join(prefix, "text"), f);
    }
}

/// JSON written next to a checkpoint's tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub shapes: IndexMap<String, Vec<usize>>,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

impl HierarchicalModel<f32> {
    /// Writes every tensor (including batch-norm running statistics) as a
    /// one-column entry named `layer.name`, plus a JSON sidecar with the
    /// configuration and tensor shapes.
    pub fn save(&mut self, path: &Path, seed: u64, epoch: usize) -> Result<()> {
        let mut set = EmbeddingSet::new("checkpoint", 1);
        let mut shapes = IndexMap::new();
        let mut failure = None;
        self.visit("", &mut |name, t| {
            shapes.insert(name.to_string(), t.shape.to_vec());
            let column = Array2::from_shape_vec((t.value.len(), 1), t.value.to_vec()).expect("length");
            if let Err(e) = set.insert(name, column) {
                failure.get_or_insert(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        write_embeddings(path, &set)?;
        let meta = CheckpointMeta {
            model: self.config.clone(),
            seed,
            epoch,
            shapes,
        };
        let json = serde_json::to_string_pretty(&meta).expect("serializable");
        let side = sidecar(path);
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let side = sidecar(path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let meta: CheckpointMeta = serde_json::from_slice(&text).map_err(|e| Error::json(&side, e))?;
        let set = read_embeddings(path)?;
        let mut model = HierarchicalModel::new(meta.model.clone(), meta.seed)?;
        let mut failure = None;
        let mut seen = 0;
        model.visit("", &mut |name, t| {
            let result = (|| {
                if meta.shapes.get(name).map(Vec::as_slice) != Some(t.shape) {
                    return Err(Error::Shape(format!("checkpoint tensor {name} has an unexpected shape")));
                }
                let values = set.require(name)?;
                if values.len() != t.value.len() {
                    return Err(Error::Shape(format!("checkpoint tensor {name} has {} values", values.len())));
                }
                t.value.iter_mut().zip(values.iter()).for_each(|(d, s)| *d = *s);
                Ok(())
            })();
            if let Err(e) = result {
                failure.get_or_insert(e);
            }
            seen += 1;
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if seen != set.len() {
            return Err(Error::Input(format!(
                "checkpoint {} holds {} tensors, the model has {seen}",
                path.display(),
                set.len()
            )));
        }
        Ok((model, meta))
    }
}
