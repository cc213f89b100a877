#![no_main]

use agrimuse::evaluation::ExperimentSpec;
use agrimuse::training::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<TrainConfig>(data) {
        let _ = cfg.validate();
    }
    if let Ok(value) = serde_json::from_slice::<serde_json::Value>(data) {
        let _ = ExperimentSpec::parse(&value);
    }
});
