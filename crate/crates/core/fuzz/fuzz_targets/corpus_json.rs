#![no_main]

use agrimuse::corpus::{corpus_stats, render_description, Corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(corpus) = Corpus::from_json(data) else { return };
    if !corpus.museums.is_empty() {
        let _ = corpus_stats(&corpus.museums);
    }
    for m in &corpus.museums {
        // rendering may refuse unsupported counts but must not panic
        let _ = render_description(m);
    }
    assert_eq!(Corpus::from_json(corpus.to_json().as_bytes()).expect("re-parses"), corpus);
});
