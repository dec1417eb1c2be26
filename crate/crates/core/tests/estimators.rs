use geppo::harness::verify::vtrace_monte_carlo;

#[test]
fn vtrace_advantage_is_unbiased_for_exact_values() {
    let estimates = vtrace_monte_carlo(7, 40_000).unwrap();
    assert_eq!(estimates.len(), 6);
    for e in estimates {
        let gap = (e.mean - e.exact).abs();
        assert!(gap <= 3.0 * e.stderr, "{e:?}");
        assert!(e.stderr < 0.05, "{e:?}");
    }
}
