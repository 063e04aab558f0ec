#![no_main]

use libfuzzer_sys::fuzz_target;
use vnsim_core::io::parse_config;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = parse_config(text) {
        // An accepted config must reparse from its canonical text.
        let canonical = cfg.to_text();
        let again = parse_config(&canonical).expect("canonical text rejected");
        assert_eq!(again.to_text(), canonical);
    }
});
