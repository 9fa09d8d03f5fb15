#![no_main]

use libfuzzer_sys::fuzz_target;
use transonic_core::config::PathSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(path) = text.parse::<PathSpec>() {
            if path.samples <= 10_000 {
                assert_eq!(path.sample().len(), path.samples);
            }
        }
    }
});
