#![no_main]

use geppo::approximator::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = Checkpoint::from_bytes(data) else {
        return;
    };
    // The encoding is canonical, so anything accepted re-encodes to itself.
    assert_eq!(ckpt.to_bytes(), data);
    let _ = Checkpoint::from_json(&ckpt.to_json());
});
