#![no_main]

use geppo::envs::TrajectoryBatch;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(batch) = TrajectoryBatch::from_jsonl(text) else {
        return;
    };
    let again = TrajectoryBatch::from_jsonl(&batch.to_jsonl()).expect("emitted batch must parse");
    assert_eq!(again.transitions, batch.transitions);
});
