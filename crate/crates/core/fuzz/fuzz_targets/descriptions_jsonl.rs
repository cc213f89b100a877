#![no_main]

use agrimuse::corpus::parse_descriptions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(descriptions) = parse_descriptions(text) {
        for d in descriptions {
            assert!(d.sentences.iter().all(|s| !s.is_empty() && s.trim() == s));
        }
    }
});
