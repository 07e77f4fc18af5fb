#![no_main]

use libfuzzer_sys::fuzz_target;
use robinfield::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // errors are fine, panics are not
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            assert_eq!(cfg.domain.n(), cfg.domain.center().len());
        }
    }
});
