#![no_main]

use geppo::approximator::{Checkpoint, NetKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ckpt) = Checkpoint::from_json(text) else {
        return;
    };
    assert_eq!(
        Checkpoint::from_bytes(&ckpt.to_bytes()).expect("binary form must decode"),
        ckpt
    );
    match ckpt.kind {
        NetKind::GaussianPolicy => drop(ckpt.into_policy()),
        NetKind::Value => drop(ckpt.into_value()),
    }
});
