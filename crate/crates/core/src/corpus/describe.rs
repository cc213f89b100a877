use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Museum, TopicVocabulary};
use crate::error::{Error, Result};

const NUMBERS: [&str; 8] = ["one", "two", "three", "four", "five", "six", "seven", "eight"];
const ORDINALS: [&str; 8] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
];

pub fn number_word(n: usize) -> Result<&'static str> {
    n.checked_sub(1)
        .and_then(|i| NUMBERS.get(i).copied())
        .ok_or(Error::UnsupportedOrdinal(n))
}

pub fn ordinal_word(n: usize) -> Result<&'static str> {
    n.checked_sub(1)
        .and_then(|i| ORDINALS.get(i).copied())
        .ok_or(Error::UnsupportedOrdinal(n))
}

fn parse_number(word: &str) -> Option<usize> {
    NUMBERS.iter().position(|w| *w == word).map(|i| i + 1)
}

fn parse_ordinal(word: &str) -> Option<usize> {
    ORDINALS.iter().position(|w| *w == word).map(|i| i + 1)
}

fn plural(n: usize, noun: &str) -> String {
    if n == 1 {
        noun.to_string()
    } else {
        format!("{noun}s")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionStyle {
    Long,
    Brief,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub museum_id: String,
    pub text: String,
    pub sentences: Vec<String>,
    pub style: DescriptionStyle,
}

impl Description {
    fn from_sentences(museum_id: &str, style: DescriptionStyle, sentences: Vec<String>) -> Self {
        Description {
            museum_id: museum_id.to_string(),
            text: sentences.join(" "),
            sentences,
            style,
        }
    }

    pub fn record(&self) -> DescriptionRecord {
        DescriptionRecord {
            museum_id: self.museum_id.clone(),
            style: self.style,
            text: self.text.clone(),
        }
    }
}

/// One line of a descriptions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptionRecord {
    pub museum_id: String,
    pub style: DescriptionStyle,
    pub text: String,
}

impl From<DescriptionRecord> for Description {
    fn from(r: DescriptionRecord) -> Self {
        Description {
            sentences: split_sentences(&r.text),
            museum_id: r.museum_id,
            text: r.text,
            style: r.style,
        }
    }
}

/// Long-form description: room count, then each room's video count
/// followed by one sentence per video title.
pub fn render_description(museum: &Museum) -> Result<Description> {
    let rooms = museum.rooms.len();
    let mut sentences = vec![format!(
        "This museum has {} {}.",
        number_word(rooms)?,
        plural(rooms, "room")
    )];
    for (r, room) in museum.rooms.iter().enumerate() {
        let n = room.videos.len();
        sentences.push(format!(
            "The {} room has {} {}.",
            ordinal_word(r + 1)?,
            number_word(n)?,
            plural(n, "video")
        ));
        for (v, video) in room.videos.iter().enumerate() {
            sentences.push(format!(
                "The {} video is about {}.",
                ordinal_word(v + 1)?,
                video.title
            ));
        }
    }
    Ok(Description::from_sentences(
        &museum.id,
        DescriptionStyle::Long,
        sentences,
    ))
}

/// Short description naming only room count, per-room video count and topic.
pub fn render_brief_description(
    museum: &Museum,
    vocabulary: &TopicVocabulary,
) -> Result<Description> {
    let rooms = museum.rooms.len();
    let opening = if rooms == 1 {
        "In this museum there is one room.".to_string()
    } else {
        format!("In this museum there are {} rooms.", number_word(rooms)?)
    };
    let mut sentences = vec![opening];
    for (r, room) in museum.rooms.iter().enumerate() {
        let n = room.videos.len();
        let phrase = &vocabulary
            .get(room.topic_id)
            .ok_or_else(|| Error::Input(format!("topic {} not in vocabulary", room.topic_id)))?
            .phrase;
        let verb = if n == 1 { "is" } else { "are" };
        sentences.push(format!(
            "In the {} room, there {verb} {} {} about {phrase}.",
            ordinal_word(r + 1)?,
            number_word(n)?,
            plural(n, "video")
        ));
    }
    Ok(Description::from_sentences(
        &museum.id,
        DescriptionStyle::Brief,
        sentences,
    ))
}

/// Splits on '.' followed by whitespace or end of text, keeping the period.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = c == '.'
            && chars
                .peek()
                .map_or(true, |&(_, next)| next.is_whitespace());
        if boundary {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, fragment: &str) {
    let t = fragment.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// What a template sentence talks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentenceTag {
    /// States how many rooms the museum has.
    MuseumRooms(usize),
    /// States how many videos a room has, without naming a topic.
    RoomVideos(usize),
    Topic(usize),
}

/// Recovers the template slot a rendered sentence came from.
pub fn tag_sentence(sentence: &str, vocabulary: &TopicVocabulary) -> Result<SentenceTag> {
    let fail = || Error::Tagging(sentence.to_string());
    let body = sentence.strip_suffix('.').ok_or_else(fail)?;

    if let Some(rest) = body.strip_prefix("This museum has ") {
        let (word, noun) = rest.split_once(' ').ok_or_else(fail)?;
        let n = parse_number(word).ok_or_else(fail)?;
        return (noun == plural(n, "room"))
            .then_some(SentenceTag::MuseumRooms(n))
            .ok_or_else(fail);
    }
    if let Some(rest) = body.strip_prefix("In this museum there ") {
        let n = match rest {
            "is one room" => 1,
            _ => {
                let rest = rest.strip_prefix("are ").ok_or_else(fail)?;
                let word = rest.strip_suffix(" rooms").ok_or_else(fail)?;
                parse_number(word).ok_or_else(fail)?
            }
        };
        return Ok(SentenceTag::MuseumRooms(n));
    }
    if let Some(rest) = body.strip_prefix("In the ") {
        // In the <ord> room, there are <n> videos about <phrase>
        let (ord, rest) = rest.split_once(" room, there ").ok_or_else(fail)?;
        parse_ordinal(ord).ok_or_else(fail)?;
        let rest = rest
            .strip_prefix("are ")
            .or_else(|| rest.strip_prefix("is "))
            .ok_or_else(fail)?;
        let (count, phrase) = rest.split_once(" about ").ok_or_else(fail)?;
        let (word, _) = count.split_once(' ').ok_or_else(fail)?;
        parse_number(word).ok_or_else(fail)?;
        return vocabulary
            .topic_of_phrase(phrase)
            .map(SentenceTag::Topic)
            .ok_or_else(fail);
    }
    if let Some(rest) = body.strip_prefix("The ") {
        let (ord, rest) = rest.split_once(' ').ok_or_else(fail)?;
        parse_ordinal(ord).ok_or_else(fail)?;
        if let Some(title) = rest.strip_prefix("video is about ") {
            return vocabulary
                .topic_of_title(title)
                .map(SentenceTag::Topic)
                .ok_or_else(fail);
        }
        if let Some(rest) = rest.strip_prefix("room has ") {
            let (word, noun) = rest.split_once(' ').ok_or_else(fail)?;
            let n = parse_number(word).ok_or_else(fail)?;
            return (noun == plural(n, "video"))
                .then_some(SentenceTag::RoomVideos(n))
                .ok_or_else(fail);
        }
    }
    Err(fail())
}

/// Parses a JSON-lines descriptions document; blank lines are skipped.
pub fn parse_descriptions(text: &str) -> Result<Vec<Description>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<DescriptionRecord>(line)
                .map(Description::from)
                .map_err(|e| Error::Input(format!("descriptions line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_descriptions(path: &Path) -> Result<Vec<Description>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_descriptions(&text).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_descriptions(path: &Path, descriptions: &[Description]) -> Result<()> {
    let mut buf = Vec::new();
    for d in descriptions {
        serde_json::to_writer(&mut buf, &d.record()).expect("in-memory write");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig, Room, VideoItem};
    use proptest::prelude::*;

    fn fixture(counts: &[usize]) -> Museum {
        let vocab = TopicVocabulary::builtin();
        Museum {
            id: "fixture".into(),
            rooms: counts
                .iter()
                .enumerate()
                .map(|(r, &n)| Room {
                    index: r + 1,
                    topic_id: r,
                    videos: (0..n)
                        .map(|v| VideoItem {
                            id: format!("fixture-r{}-v{}", r + 1, v + 1),
                            title: vocab.entries[r].titles[v].clone(),
                            topic_id: r,
                            frame_count: 32,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn long_templates_verbatim() {
        let d = render_description(&fixture(&[3, 2, 2, 3, 2, 3])).unwrap();
        assert!(d.text.starts_with("This museum has six rooms"));
        assert!(d.text.contains("The first room has three videos"));
        assert!(d.text.contains("The first video is about Indoor Vegetable Growing"));
        assert_eq!(d.sentences.len(), 1 + 6 + 15);
        assert_eq!(d.sentences.join(" "), d.text);
        assert_eq!(split_sentences(&d.text), d.sentences);
    }

    #[test]
    fn brief_templates_verbatim() {
        let vocab = TopicVocabulary::builtin();
        // topic 1 is "plant potato"
        let mut m = fixture(&[2, 4, 2, 3]);
        m.rooms.swap(0, 1);
        let d = render_brief_description(&m, &vocab).unwrap();
        assert!(d.text.starts_with("In this museum there are four rooms"));
        assert!(d
            .text
            .contains("In the first room, there are four videos about plant potato"));
        let three = render_brief_description(&fixture(&[2, 2, 2]), &vocab).unwrap();
        assert_eq!(three.sentences.len(), 4);
    }

    #[test]
    fn counts_beyond_eight_are_unsupported() {
        let mut m = fixture(&[2; 8]);
        assert!(render_description(&m).is_ok());
        m.rooms.push(m.rooms[0].clone());
        assert!(matches!(
            render_description(&m),
            Err(Error::UnsupportedOrdinal(9))
        ));
        assert!(matches!(number_word(0), Err(Error::UnsupportedOrdinal(0))));
    }

    #[test]
    fn split_basic_cases() {
        assert_eq!(split_sentences("A. B."), vec!["A.", "B."]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("  .  ").len() == 1);
        assert_eq!(split_sentences("v1.2 is out. Next"), vec!["v1.2 is out.", "Next"]);
        assert_eq!(split_sentences("One.\nTwo.  Three"), vec!["One.", "Two.", "Three"]);
    }

    #[test]
    fn every_rendered_sentence_is_taggable() {
        let vocab = TopicVocabulary::builtin();
        let museums = generate_corpus(11, &CorpusConfig { museum_count: 40, ..Default::default() }).unwrap();
        for m in &museums {
            let long = render_description(m).unwrap();
            let mut topics = Vec::new();
            for s in &long.sentences {
                match tag_sentence(s, &vocab).unwrap() {
                    SentenceTag::Topic(t) => topics.push(t),
                    SentenceTag::MuseumRooms(n) => assert_eq!(n, m.rooms.len()),
                    SentenceTag::RoomVideos(n) => assert!((2..=4).contains(&n)),
                }
            }
            let expected: Vec<usize> = m.videos().map(|v| v.topic_id).collect();
            assert_eq!(topics, expected);

            let brief = render_brief_description(m, &vocab).unwrap();
            let tags: Vec<_> = brief.sentences.iter().map(|s| tag_sentence(s, &vocab).unwrap()).collect();
            assert_eq!(tags[0], SentenceTag::MuseumRooms(m.rooms.len()));
            for (tag, room) in tags[1..].iter().zip(&m.rooms) {
                assert_eq!(*tag, SentenceTag::Topic(room.topic_id));
            }
        }
    }

    #[test]
    fn singular_forms_round_trip_through_tagging() {
        let vocab = TopicVocabulary::builtin();
        let m = fixture(&[1]);
        let long = render_description(&m).unwrap();
        assert_eq!(long.sentences[0], "This museum has one room.");
        assert_eq!(long.sentences[1], "The first room has one video.");
        assert_eq!(tag_sentence(&long.sentences[1], &vocab).unwrap(), SentenceTag::RoomVideos(1));
        let brief = render_brief_description(&m, &vocab).unwrap();
        assert_eq!(tag_sentence(&brief.sentences[0], &vocab).unwrap(), SentenceTag::MuseumRooms(1));
        assert_eq!(tag_sentence(&brief.sentences[1], &vocab).unwrap(), SentenceTag::Topic(0));
    }

    #[test]
    fn unknown_sentences_fail_tagging() {
        let vocab = TopicVocabulary::builtin();
        for s in [
            "Hello there.",
            "The first video is about Knitting.",
            "This museum has nine rooms.",
            "The first room has two video.",
            "In the first room, there are two videos about cooking.",
            "This museum has six rooms",
        ] {
            assert!(matches!(tag_sentence(s, &vocab), Err(Error::Tagging(_))), "{s}");
        }
    }

    #[test]
    fn descriptions_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let museums = generate_corpus(2, &CorpusConfig { museum_count: 5, ..Default::default() }).unwrap();
        let ds: Vec<_> = museums.iter().map(|m| render_description(m).unwrap()).collect();
        write_descriptions(&path, &ds).unwrap();
        let back = read_descriptions(&path).unwrap();
        assert_eq!(back, ds);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.lines().next().unwrap().starts_with("{\"museum_id\":"));
        assert!(parse_descriptions("{\"museum_id\":\"a\"}\n").is_err());
    }

    fn arb_shape() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=4, 1..=8)
    }

    proptest! {
        #[test]
        fn rendering_is_injective(a in arb_shape(), b in arb_shape()) {
            let (ma, mb) = (fixture(&a), fixture(&b));
            let (da, db) = (render_description(&ma).unwrap(), render_description(&mb).unwrap());
            let key = |m: &Museum| -> (usize, Vec<usize>, Vec<String>) {
                (m.rooms.len(), m.rooms.iter().map(|r| r.videos.len()).collect(), m.videos().map(|v| v.title.clone()).collect())
            };
            prop_assert_eq!(key(&ma) == key(&mb), da.text == db.text);
        }

        #[test]
        fn split_then_join_is_stable(words in prop::collection::vec("[a-z]{1,6}", 1..10)) {
            let text = words.iter().map(|w| format!("{w}.")).collect::<Vec<_>>().join(" ");
            let s = split_sentences(&text);
            prop_assert_eq!(s.len(), words.len());
            prop_assert_eq!(s.join(" "), text);
        }
    }
}
