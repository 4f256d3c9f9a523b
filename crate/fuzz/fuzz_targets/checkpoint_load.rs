//! Fuzz the checkpoint decoder: arbitrary bytes must load or fail with an
//! error, never panic or abort. Successfully loaded networks must survive a
//! save/load round trip bit-exactly.

#![no_main]

use std::io::Cursor;

use libfuzzer_sys::fuzz_target;
use qdac::agent::QdacNetworks;

fuzz_target!(|data: &[u8]| {
    let Ok((nets, extra)) = QdacNetworks::load(&mut Cursor::new(data)) else {
        return;
    };
    let mut bytes = Vec::new();
    nets.save(&mut bytes, &extra).expect("loaded networks must re-save");
    let (again, extra_again) =
        QdacNetworks::load(&mut Cursor::new(&bytes[..])).expect("saved bytes must re-load");
    assert_eq!(extra, extra_again);
    assert_eq!(nets.obs_dim, again.obs_dim);
    assert_eq!(nets.action_dim, again.action_dim);
    assert_eq!(nets.feature_dim, again.feature_dim);
    assert_eq!(nets.log_temperature.to_bits(), again.log_temperature.to_bits());
    for (a, b) in nets.actor.params().iter().zip(again.actor.params()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
});
