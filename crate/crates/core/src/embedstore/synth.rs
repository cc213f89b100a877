//! Synthetic stand-ins for frozen pretrained visual/textual encoders.
//!
//! Every topic owns a unit visual center and an independent unit text
//! center. Frames scatter around their topic's visual center; topic
//! sentences scatter around a blend of the two centers controlled by the
//! modality-gap parameter `gamma`. Structural sentences ("The first room has
//! three videos.") scatter around centers keyed by the stated count.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{description_key, normalize_rows, EmbeddingSet};
use crate::corpus::{tag_sentence, Corpus, Description, SentenceTag};
use crate::error::{Error, Result};

const MAX_COUNT: usize = 8;
const CENTER_STREAM: u64 = 0;
const VISUAL_STREAM: u64 = 1;
const TEXT_STREAM: u64 = 2;
const VIDEO_MODEL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dim: usize,
    pub frames_per_video: usize,
    /// Per-frame isotropic noise scale.
    pub sigma_v: f64,
    /// Per-sentence isotropic noise scale.
    pub sigma_t: f64,
    /// Weight of the visual center inside a topic sentence's mean.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 512,
            frames_per_video: 32,
            sigma_v: 0.5,
            sigma_t: 0.32,
            gamma: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::Config(format!("dim {} must be >= 8", self.dim)));
        }
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames_per_video must be >= 1".into()));
        }
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::Config(format!("sigma_v {} must be > 0", self.sigma_v)));
        }
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::Config(format!("sigma_t {} must be > 0", self.sigma_t)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} must lie in [0, 1]", self.gamma)));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Unit-norm centers shared by the visual and textual generators.
#[derive(Debug, Clone)]
pub struct TopicCenters {
    pub visual: Array2<f64>,
    pub text: Array2<f64>,
    /// Row `n - 1` is the center for "this museum has n rooms".
    pub museum_rooms: Array2<f64>,
    /// Row `n - 1` is the center for "this room has n videos".
    pub room_videos: Array2<f64>,
}

impl TopicCenters {
    pub fn new(topics: usize, cfg: &SynthConfig) -> Self {
        let mut rng = cfg.rng(CENTER_STREAM);
        let mut draw = |n: usize| {
            let mut m = Array2::<f64>::zeros((n, cfg.dim));
            m.mapv_inplace(|_| rng.sample(StandardNormal));
            for mut row in m.axis_iter_mut(Axis(0)) {
                let norm = row.dot(&row).sqrt();
                row /= norm;
            }
            m
        };
        TopicCenters {
            visual: draw(topics),
            text: draw(topics),
            museum_rooms: draw(MAX_COUNT),
            room_videos: draw(MAX_COUNT),
        }
    }

    fn sentence_mean(&self, tag: SentenceTag, gamma: f64) -> Array1<f64> {
        match tag {
            SentenceTag::Topic(t) => {
                &self.visual.row(t) * gamma + &self.text.row(t) * (1.0 - gamma)
            }
            SentenceTag::MuseumRooms(n) => self.museum_rooms.row(n - 1).to_owned(),
            SentenceTag::RoomVideos(n) => self.room_videos.row(n - 1).to_owned(),
        }
    }
}

fn noisy_unit_rows(
    center: &Array1<f64>,
    rows: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f32> {
    let mut m = Array2::<f32>::zeros((rows, center.len()));
    for mut row in m.axis_iter_mut(Axis(0)) {
        let v: Vec<f64> = center
            .iter()
            .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (dst, x) in row.iter_mut().zip(v) {
            *dst = (x / norm) as f32;
        }
    }
    m
}

/// One entry per video (keyed by video id) with `frames_per_video` unit rows.
pub fn synth_visual_embeddings(corpus: &Corpus, cfg: &SynthConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let centers = TopicCenters::new(corpus.vocabulary.len(), cfg);
    let mut rng = cfg.rng(VISUAL_STREAM);
    let mut set = EmbeddingSet::new("synthetic-visual", cfg.dim);
    for museum in &corpus.museums {
        for video in museum.videos() {
            let center = centers.visual.row(video.topic_id).to_owned();
            let frames = noisy_unit_rows(&center, cfg.frames_per_video, cfg.sigma_v, &mut rng);
            set.insert(&video.id, frames)?;
        }
    }
    Ok(set)
}

/// One row per video from a second, clip-level encoder: an independent
/// draw around the same topic center as the frames.
pub fn synth_video_model_embeddings(corpus: &Corpus, cfg: &SynthConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let centers = TopicCenters::new(corpus.vocabulary.len(), cfg);
    let mut rng = cfg.rng(VIDEO_MODEL_STREAM);
    let mut set = EmbeddingSet::new("synthetic-video", cfg.dim);
    for museum in &corpus.museums {
        for video in museum.videos() {
            let center = centers.visual.row(video.topic_id).to_owned();
            set.insert(&video.id, noisy_unit_rows(&center, 1, cfg.sigma_v, &mut rng))?;
        }
    }
    Ok(set)
}

/// One entry per description (keyed `<museum_id>#desc`), one row per sentence.
pub fn synth_text_embeddings(
    corpus: &Corpus,
    descriptions: &[Description],
    cfg: &SynthConfig,
) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let centers = TopicCenters::new(corpus.vocabulary.len(), cfg);
    let mut rng = cfg.rng(TEXT_STREAM);
    let mut set = EmbeddingSet::new("synthetic-text", cfg.dim);
    for d in descriptions {
        if d.sentences.is_empty() {
            return Err(Error::EmptyInput(format!("description of {} has no sentences", d.museum_id)));
        }
        let mut rows = Array2::<f32>::zeros((d.sentences.len(), cfg.dim));
        for (s, sentence) in d.sentences.iter().enumerate() {
            let tag = tag_sentence(sentence, &corpus.vocabulary)?;
            let mean = centers.sentence_mean(tag, cfg.gamma);
            rows.row_mut(s)
                .assign(&noisy_unit_rows(&mean, 1, cfg.sigma_t, &mut rng).row(0));
        }
        set.insert(&description_key(&d.museum_id), rows)?;
    }
    Ok(set)
}

/// Temporal mean of each entry, renormalized: a single-row "video model" feature.
pub fn video_level(set: &EmbeddingSet) -> EmbeddingSet {
    let mut out = EmbeddingSet::new(&format!("{}-video", set.source_tag), set.dim);
    for (id, entry) in &set.entries {
        let mean = entry
            .values
            .mean_axis(Axis(0))
            .expect("entries have rows")
            .insert_axis(Axis(0));
        out.insert(id, normalize_rows(mean)).expect("derived from a valid set");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{render_description, CorpusConfig};

    fn small_corpus(n: usize) -> Corpus {
        Corpus::generate(3, &CorpusConfig { museum_count: n, ..Default::default() }).unwrap()
    }

    fn cos(a: ndarray::ArrayView1<f32>, b: ndarray::ArrayView1<f32>) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    /// Mean cosine between frames of same-topic and different-topic videos.
    fn intra_inter(corpus: &Corpus, set: &EmbeddingSet) -> (f64, f64) {
        let videos: Vec<_> = corpus.museums.iter().flat_map(|m| m.videos()).take(60).collect();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for (i, a) in videos.iter().enumerate() {
            for b in &videos[i + 1..] {
                let c = cos(set.get(&a.id).unwrap().row(0), set.get(&b.id).unwrap().row(0));
                if a.topic_id == b.topic_id {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        (intra / ni as f64, inter / nx as f64)
    }

    #[test]
    fn rows_are_unit_norm() {
        let corpus = small_corpus(4);
        let cfg = SynthConfig { dim: 32, ..Default::default() };
        let set = synth_visual_embeddings(&corpus, &cfg).unwrap();
        assert_eq!(set.len(), corpus.museums.iter().map(|m| m.video_count()).sum::<usize>());
        for e in set.entries.values() {
            assert_eq!(e.rows(), 32);
            for row in e.values.rows() {
                let n: f64 = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vanishing_noise_collapses_to_center() {
        let corpus = small_corpus(3);
        let cfg = SynthConfig { dim: 16, sigma_v: 1e-9, ..Default::default() };
        let set = synth_visual_embeddings(&corpus, &cfg).unwrap();
        let room = &corpus.museums[0].rooms[0];
        let a = set.get(&room.videos[0].id).unwrap();
        let b = set.get(&room.videos[1].id).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn intra_topic_beats_inter_topic() {
        let corpus = small_corpus(30);
        let cfg = SynthConfig { sigma_v: 0.1, ..Default::default() };
        let set = synth_visual_embeddings(&corpus, &cfg).unwrap();
        let (intra, inter) = intra_inter(&corpus, &set);
        assert!(intra > inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn lower_noise_never_lowers_intra_topic_cosine() {
        let corpus = small_corpus(30);
        let mut last = f64::NEG_INFINITY;
        for sigma_v in [0.8, 0.3, 0.05] {
            let cfg = SynthConfig { dim: 64, sigma_v, ..Default::default() };
            let (intra, _) = intra_inter(&corpus, &synth_visual_embeddings(&corpus, &cfg).unwrap());
            assert!(intra >= last, "sigma {sigma_v}: {intra} < {last}");
            last = intra;
        }
    }

    #[test]
    fn full_gap_closure_puts_topic_sentences_on_visual_centers() {
        let corpus = small_corpus(2);
        let cfg = SynthConfig { dim: 16, gamma: 1.0, sigma_t: 1e-9, ..Default::default() };
        let descs: Vec<_> = corpus.museums.iter().map(|m| render_description(m).unwrap()).collect();
        let text = synth_text_embeddings(&corpus, &descs, &cfg).unwrap();
        let centers = TopicCenters::new(corpus.vocabulary.len(), &cfg);
        let m = &corpus.museums[0];
        let rows = text.get(&description_key(&m.id)).unwrap();
        assert_eq!(rows.nrows(), descs[0].sentences.len());
        // sentence 2 is "The first video is about ..." of room 1
        let c = centers.visual.row(m.rooms[0].topic_id);
        for (x, y) in rows.row(2).iter().zip(c.iter()) {
            assert!((*x as f64 - y).abs() < 1e-6);
        }
    }

    #[test]
    fn untaggable_sentence_is_an_error() {
        let corpus = small_corpus(1);
        let mut d = render_description(&corpus.museums[0]).unwrap();
        d.sentences.push("Bananas are yellow.".into());
        let err = synth_text_embeddings(&corpus, &[d], &SynthConfig { dim: 8, ..Default::default() });
        assert!(matches!(err, Err(Error::Tagging(_))));
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let corpus = small_corpus(5);
        let cfg = SynthConfig { dim: 16, ..Default::default() };
        let a = super::super::encode(&synth_visual_embeddings(&corpus, &cfg).unwrap()).unwrap();
        let b = super::super::encode(&synth_visual_embeddings(&corpus, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        for bad in [
            SynthConfig { dim: 4, ..Default::default() },
            SynthConfig { sigma_v: 0.0, ..Default::default() },
            SynthConfig { sigma_t: -1.0, ..Default::default() },
            SynthConfig { gamma: 1.5, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn video_level_is_renormalized_mean() {
        let mut s = EmbeddingSet::new("a", 2);
        s.insert("v", Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let v = video_level(&s);
        assert_eq!(v.source_tag, "a-video");
        let row = v.get("v").unwrap();
        assert_eq!(row.nrows(), 1);
        assert!((row[[0, 0]] - 0.70710677).abs() < 1e-6 && (row[[0, 1]] - 0.70710677).abs() < 1e-6);
    }
}
