//! Fuzz the experiment-config parser: arbitrary text must either parse or
//! produce a line-addressed error, never panic. Accepted configs must
//! round-trip losslessly through render + reparse.

#![no_main]

use libfuzzer_sys::fuzz_target;
use qdac::cli::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match parse_config(text) {
        Ok(cfg) => {
            let rendered = cfg.render();
            let back = parse_config(&rendered)
                .expect("rendering an accepted config must produce an accepted config");
            assert_eq!(back, cfg, "render + reparse must be lossless");
            assert_eq!(back.hash(), cfg.hash(), "hash must survive the round trip");
        }
        Err(e) => {
            // Errors must point at a real line of the input.
            assert!(e.line >= 1 && e.line <= text.lines().count().max(1));
        }
    }
});
