#![no_main]

use libfuzzer_sys::fuzz_target;
use robinfield::config::{parse, parse_complex};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse(text) {
        Ok(raw) => {
            for (key, entry) in &raw.entries {
                assert!(!key.is_empty());
                assert!(entry.line >= 1);
                let _ = parse_complex(&entry.value);
            }
        }
        Err(e) => {
            let _ = e.to_string();
        }
    }
});
