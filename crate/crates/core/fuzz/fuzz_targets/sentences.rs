#![no_main]

use agrimuse::corpus::{split_sentences, tag_sentence, TopicVocabulary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let vocabulary = TopicVocabulary::builtin();
    let sentences = split_sentences(text);
    for s in &sentences {
        assert!(!s.is_empty() && s.trim() == s);
        let _ = tag_sentence(s, &vocabulary);
    }
    // splitting is stable on its own output
    assert_eq!(split_sentences(&sentences.join(" ")), sentences);
});
