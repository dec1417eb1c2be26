#![no_main]

use geppo::harness::RunRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = RunRecord::read_metrics(data);
});
