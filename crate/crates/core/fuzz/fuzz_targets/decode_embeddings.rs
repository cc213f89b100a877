#![no_main]

use agrimuse::embedstore::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = decode(data, "fuzz") {
        // anything accepted must survive a round trip unchanged
        let bytes = encode(&set).expect("decoded sets re-encode");
        assert_eq!(decode(&bytes, "fuzz").expect("re-decodes"), set);
    }
});
