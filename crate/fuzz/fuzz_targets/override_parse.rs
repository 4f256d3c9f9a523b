//! Fuzz single key/value assignments (the `--override` path): any pair of
//! strings must be cleanly accepted or cleanly rejected, and acceptance
//! must leave the config re-renderable.

#![no_main]

use libfuzzer_sys::fuzz_target;
use qdac::cli::{parse_config, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Some((key, value)) = text.split_once('=') else {
        return;
    };
    let mut cfg = ExperimentConfig::default();
    if cfg.set(key.trim(), value.trim()).is_ok() {
        let rendered = cfg.render();
        let back = parse_config(&rendered).expect("accepted override must stay parseable");
        assert_eq!(back, cfg);
    }
});
