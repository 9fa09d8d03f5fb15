#![no_main]

use libfuzzer_sys::fuzz_target;
use transonic_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            // anything accepted must survive its own text form
            let again = RunConfig::parse(&cfg.to_text()).expect("canonical text parses");
            assert_eq!(again, cfg);
        }
    }
});
