#![no_main]

use geppo::tabular::{solve_policy, TabularMdp, TabularPolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mdp) = TabularMdp::from_json(text) else {
        return;
    };
    let again = TabularMdp::from_json(&mdp.to_json()).expect("emitted MDP must parse");
    assert_eq!(again, mdp);
    let uniform = TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
    let _ = solve_policy(&mdp, &uniform);
});
