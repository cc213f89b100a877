//! Synthetic thematic museums: generation, statistics, descriptions and splits.
//!
//! A museum is an ordered list of rooms, each room an ordered list of two to
//! four videos sharing one agricultural topic. Everything here is a pure
//! function of `(seed, config)`.

mod describe;
mod vocabulary;

use std::fmt;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use describe::{
    number_word, ordinal_word, parse_descriptions, read_descriptions, render_brief_description, render_description,
    split_sentences, tag_sentence, write_descriptions, Description, DescriptionRecord,
    DescriptionStyle, SentenceTag,
};
pub use vocabulary::{TopicEntry, TopicVocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoItem {
    pub id: String,
    pub title: String,
    pub topic_id: usize,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    /// 1-based position inside the museum.
    pub index: usize,
    pub topic_id: usize,
    pub videos: Vec<VideoItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Museum {
    pub id: String,
    pub rooms: Vec<Room>,
}

impl Museum {
    pub fn video_count(&self) -> usize {
        self.rooms.iter().map(|r| r.videos.len()).sum()
    }

    pub fn videos(&self) -> impl Iterator<Item = &VideoItem> {
        self.rooms.iter().flat_map(|r| r.videos.iter())
    }
}

/// Inclusive integer range with per-value sampling weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedRange {
    pub min: usize,
    pub max: usize,
    /// One weight per value in `min..=max`.
    pub weights: Vec<f64>,
}

impl WeightedRange {
    pub fn uniform(min: usize, max: usize) -> Self {
        let n = max.saturating_sub(min) + 1;
        WeightedRange {
            min,
            max,
            weights: vec![1.0; n],
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Config(format!(
                "{what} range [{}, {}] is empty or inverted",
                self.min, self.max
            )));
        }
        if self.weights.len() != self.max - self.min + 1 {
            return Err(Error::Config(format!(
                "{what} range [{}, {}] needs {} weights, got {}",
                self.min,
                self.max,
                self.max - self.min + 1,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(format!(
                "{what} weights must be finite, non-negative and not all zero"
            )));
        }
        Ok(())
    }

    pub fn expected(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (self.min + i) as f64 * w)
            .sum::<f64>()
            / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub museum_count: usize,
    pub rooms: WeightedRange,
    pub videos_per_room: WeightedRange,
    pub frames_per_video: usize,
    pub id_prefix: String,
}

impl Default for CorpusConfig {
    /// Weights are biased toward small museums so the expected shape is
    /// 4.58 rooms per museum and 2.50 videos per room.
    fn default() -> Self {
        CorpusConfig {
            museum_count: 457,
            rooms: WeightedRange {
                min: 3,
                max: 8,
                weights: vec![0.30, 0.25, 0.20, 0.12, 0.08, 0.05],
            },
            videos_per_room: WeightedRange {
                min: 2,
                max: 4,
                weights: vec![0.60, 0.30, 0.10],
            },
            frames_per_video: 32,
            id_prefix: "museum".to_string(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self, vocabulary: &TopicVocabulary) -> Result<()> {
        self.rooms.validate("rooms")?;
        self.videos_per_room.validate("videos per room")?;
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames_per_video must be >= 1".into()));
        }
        if self.rooms.max > vocabulary.len() {
            return Err(Error::Config(format!(
                "up to {} rooms need as many distinct topics, vocabulary has {}",
                self.rooms.max,
                vocabulary.len()
            )));
        }
        if self.videos_per_room.max > vocabulary.min_titles() {
            return Err(Error::Config(format!(
                "up to {} videos per room need as many titles per topic, some topics have {}",
                self.videos_per_room.max,
                vocabulary.min_titles()
            )));
        }
        Ok(())
    }
}

/// A generated corpus together with the vocabulary its topic ids index into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub museums: Vec<Museum>,
    pub vocabulary: TopicVocabulary,
}

impl Corpus {
    pub fn generate(seed: u64, config: &CorpusConfig) -> Result<Self> {
        let vocabulary = TopicVocabulary::builtin();
        let museums = generate_corpus_with(seed, config, &vocabulary)?;
        Ok(Corpus {
            museums,
            vocabulary,
        })
    }

    pub fn museum(&self, id: &str) -> Option<&Museum> {
        self.museums.iter().find(|m| m.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serialization cannot fail")
    }

    /// Parses and structurally validates a corpus document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let corpus: Corpus = serde_json::from_slice(bytes)
            .map_err(|e| Error::Input(format!("corpus document: {e}")))?;
        corpus.check()?;
        Ok(corpus)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    fn check(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        for m in &self.museums {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::Input(format!("duplicate museum id {}", m.id)));
            }
            if m.rooms.is_empty() {
                return Err(Error::Input(format!("museum {} has no rooms", m.id)));
            }
            for room in &m.rooms {
                if room.videos.is_empty() {
                    return Err(Error::Input(format!(
                        "museum {} room {} has no videos",
                        m.id, room.index
                    )));
                }
                for v in &room.videos {
                    if v.frame_count == 0 || v.title.is_empty() {
                        return Err(Error::Input(format!("video {} is malformed", v.id)));
                    }
                    if v.topic_id != room.topic_id || self.vocabulary.get(v.topic_id).is_none() {
                        return Err(Error::Input(format!(
                            "video {} has topic {} outside its room or vocabulary",
                            v.id, v.topic_id
                        )));
                    }
                    if !ids.insert(v.id.as_str()) {
                        return Err(Error::Input(format!("duplicate id {}", v.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates `config.museum_count` museums from the built-in vocabulary.
pub fn generate_corpus(seed: u64, config: &CorpusConfig) -> Result<Vec<Museum>> {
    generate_corpus_with(seed, config, &TopicVocabulary::builtin())
}

pub fn generate_corpus_with(
    seed: u64,
    config: &CorpusConfig,
    vocabulary: &TopicVocabulary,
) -> Result<Vec<Museum>> {
    config.validate(vocabulary)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room_dist = WeightedIndex::new(&config.rooms.weights).expect("validated weights");
    let video_dist =
        WeightedIndex::new(&config.videos_per_room.weights).expect("validated weights");

    let mut museums = Vec::with_capacity(config.museum_count);
    for m in 0..config.museum_count {
        let museum_id = format!("{}-{:04}", config.id_prefix, m + 1);
        let room_count = config.rooms.min + room_dist.sample(&mut rng);
        let topics = index::sample(&mut rng, vocabulary.len(), room_count);
        let mut rooms = Vec::with_capacity(room_count);
        for (r, topic_id) in topics.iter().enumerate() {
            let entry = &vocabulary.entries[topic_id];
            let video_count = config.videos_per_room.min + video_dist.sample(&mut rng);
            let picks = index::sample(&mut rng, entry.titles.len(), video_count);
            let videos = picks
                .iter()
                .enumerate()
                .map(|(v, t)| VideoItem {
                    id: format!("{museum_id}-r{}-v{}", r + 1, v + 1),
                    title: entry.titles[t].clone(),
                    topic_id,
                    frame_count: config.frames_per_video,
                })
                .collect();
            rooms.push(Room {
                index: r + 1,
                topic_id,
                videos,
            });
        }
        museums.push(Museum {
            id: museum_id,
            rooms,
        });
    }
    Ok(museums)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub museums: usize,
    pub rooms: usize,
    pub videos: usize,
    pub avg_rooms_per_museum: f64,
    pub avg_videos_per_room: f64,
    pub avg_videos_per_museum: f64,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} museums, {} rooms, {} videos; {:.2} rooms/museum, {:.2} videos/room, {:.2} videos/museum",
            self.museums,
            self.rooms,
            self.videos,
            self.avg_rooms_per_museum,
            self.avg_videos_per_room,
            self.avg_videos_per_museum
        )
    }
}

pub fn corpus_stats(corpus: &[Museum]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no museums".into()));
    }
    let museums = corpus.len();
    let rooms: usize = corpus.iter().map(|m| m.rooms.len()).sum();
    let videos: usize = corpus.iter().map(Museum::video_count).sum();
    Ok(CorpusStats {
        museums,
        rooms,
        videos,
        avg_rooms_per_museum: rooms as f64 / museums as f64,
        avg_videos_per_room: videos as f64 / rooms as f64,
        avg_videos_per_museum: videos as f64 / museums as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

impl CorpusSplit {
    pub fn get(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Shuffles museum ids by `seed` and cuts them into train/validation/test.
///
/// Each share is floored; the leftover goes to test first, then
/// validation, then train.
pub fn split_corpus(corpus: &[Museum], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} sum to {sum}, not 1")));
    }
    let n = corpus.len();
    let mut sizes = ratios.map(|r| (n as f64 * r + 1e-9).floor() as usize);
    let mut leftover = n - sizes.iter().sum::<usize>();
    for slot in [2, 1, 0].iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[*slot] += 1;
        leftover -= 1;
    }

    let mut ids: Vec<String> = corpus.iter().map(|m| m.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let test = ids.split_off(sizes[0] + sizes[1]);
    let validation = ids.split_off(sizes[0]);
    Ok(CorpusSplit {
        train: ids,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn museum(rooms: &[usize]) -> Museum {
        let v = TopicVocabulary::builtin();
        Museum {
            id: "m".into(),
            rooms: rooms
                .iter()
                .enumerate()
                .map(|(r, &n)| Room {
                    index: r + 1,
                    topic_id: r,
                    videos: (0..n)
                        .map(|i| VideoItem {
                            id: format!("m-r{r}-v{i}"),
                            title: v.entries[r].titles[i].clone(),
                            topic_id: r,
                            frame_count: 32,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn default_corpus_respects_ranges() {
        let museums = generate_corpus(7, &CorpusConfig::default()).unwrap();
        assert_eq!(museums.len(), 457);
        for m in &museums {
            assert!((3..=8).contains(&m.rooms.len()));
            let topics: HashSet<_> = m.rooms.iter().map(|r| r.topic_id).collect();
            assert_eq!(topics.len(), m.rooms.len(), "room topics must be distinct");
            for r in &m.rooms {
                assert!((2..=4).contains(&r.videos.len()));
                assert!(r.videos.iter().all(|v| v.topic_id == r.topic_id));
            }
        }
    }

    #[test]
    fn zero_museums_is_empty() {
        let cfg = CorpusConfig {
            museum_count: 0,
            ..Default::default()
        };
        assert!(generate_corpus(7, &cfg).unwrap().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Corpus::generate(7, &CorpusConfig::default()).unwrap();
        let b = Corpus::generate(7, &CorpusConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = Corpus::generate(8, &CorpusConfig::default()).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn inverted_or_empty_ranges_are_rejected() {
        let mut cfg = CorpusConfig::default();
        cfg.rooms = WeightedRange {
            min: 5,
            max: 3,
            weights: vec![],
        };
        assert!(matches!(generate_corpus(1, &cfg), Err(Error::Config(_))));
        let mut cfg = CorpusConfig::default();
        cfg.videos_per_room = WeightedRange::uniform(0, 2);
        assert!(matches!(generate_corpus(1, &cfg), Err(Error::Config(_))));
        let mut cfg = CorpusConfig::default();
        cfg.rooms.weights = vec![1.0, 2.0];
        assert!(matches!(generate_corpus(1, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn stats_hand_count() {
        let s = corpus_stats(&[museum(&[2, 2, 2])]).unwrap();
        assert_eq!(format!("{:.2}", s.avg_rooms_per_museum), "3.00");
        assert_eq!(format!("{:.2}", s.avg_videos_per_room), "2.00");
        assert_eq!(format!("{:.2}", s.avg_videos_per_museum), "6.00");
        assert!(matches!(corpus_stats(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn default_weights_target_reported_averages() {
        let cfg = CorpusConfig::default();
        assert!((cfg.rooms.expected() - 4.57).abs() < 0.05);
        assert!((cfg.videos_per_room.expected() - 2.50).abs() < 1e-12);
        let s = corpus_stats(&generate_corpus(7, &cfg).unwrap()).unwrap();
        assert!((s.avg_rooms_per_museum - 4.57).abs() <= 0.5);
        assert!((s.avg_videos_per_room - 2.50).abs() <= 0.5);
        assert!((s.avg_videos_per_museum - 11.45).abs() <= 0.5);
    }

    #[test]
    fn split_sizes_follow_remainder_policy() {
        let museums = generate_corpus(7, &CorpusConfig::default()).unwrap();
        let s = split_corpus(&museums, DEFAULT_SPLIT_RATIOS, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (319, 69, 69));

        let cfg = CorpusConfig {
            museum_count: 10,
            ..Default::default()
        };
        let ten = generate_corpus(1, &cfg).unwrap();
        let s = split_corpus(&ten, DEFAULT_SPLIT_RATIOS, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_corpus(&ten, DEFAULT_SPLIT_RATIOS, 3).unwrap());
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let museums = generate_corpus(7, &CorpusConfig::default()).unwrap();
        assert!(split_corpus(&museums, [0.7, 0.2, 0.2], 1).is_err());
        assert!(split_corpus(&museums, [1.2, -0.1, -0.1], 1).is_err());
    }

    #[test]
    fn from_json_rejects_inconsistent_topics() {
        let mut corpus = Corpus::generate(1, &CorpusConfig { museum_count: 2, ..Default::default() }).unwrap();
        corpus.museums[0].rooms[0].videos[0].topic_id += 1;
        assert!(Corpus::from_json(corpus.to_json().as_bytes()).is_err());
        assert!(Corpus::from_json(b"{\"museums\": 3}").is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 3usize..120, seed in any::<u64>()) {
            let cfg = CorpusConfig { museum_count: n, ..Default::default() };
            let museums = generate_corpus(seed, &cfg).unwrap();
            let s = split_corpus(&museums, DEFAULT_SPLIT_RATIOS, seed).unwrap();
            let all: Vec<&String> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
            let uniq: HashSet<&String> = all.iter().copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(uniq.len(), n);
            prop_assert!(museums.iter().all(|m| uniq.contains(&m.id)));
        }
    }
}
