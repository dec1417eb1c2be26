#![no_main]

use geppo::config::{parse_with_overrides, TrainerConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok((cfg, _overrides)) = parse_with_overrides(text) else {
        return;
    };
    let again = TrainerConfig::from_json(&cfg.to_json_pretty()).expect("emitted config must parse");
    assert_eq!(again.hash(), cfg.hash());
    let _ = cfg.resolve();
});
