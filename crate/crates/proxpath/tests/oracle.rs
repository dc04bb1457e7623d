use approx::assert_abs_diff_eq;
use proxpath::{oracle, ScenarioSpec};

// For the linear-Gaussian default design the nested mean has a closed form:
// E D(1) = 2.3 − 1.0 − 0.5 = 0.8, E M(0, D(1)) = 0.5 − 0.5·0.8 − 0.5 = −0.4,
// E W = 1.1, E X = 1, E U = 0, so
// ψ = 0.8 + 0.3 + 0.6·0.8 + 2·(−0.4) + 0.5·1.1 + 0.3 = 1.63
// and E[Y(1)] adds 2·1 (the mediator's response to A times its effect on Y).
const PSI: f64 = 1.63;
const EY1: f64 = 3.63;

#[test]
fn default_design_matches_its_closed_form() {
    let o = oracle(&ScenarioSpec::default(), 1_000_000, 42).unwrap();
    assert!((o.psi - PSI).abs() < 4.0 * o.psi_se, "{} ± {}", o.psi, o.psi_se);
    assert!((o.ey1 - EY1).abs() < 4.0 * o.ey1_se);
    // common random numbers: the two arms differ only through M's A-term
    assert_abs_diff_eq!(o.pamy, 2.0, epsilon = 1e-9);
    assert!(o.ramy.is_none());
}

#[test]
fn frozen_monte_carlo_values() {
    let o = oracle(&ScenarioSpec::default(), 1_000_000, 42).unwrap();
    assert_abs_diff_eq!(o.psi, 1.6309640868051354, epsilon = 1e-9);
    assert_abs_diff_eq!(o.psi_se, 0.0041543181330933, epsilon = 1e-9);
    assert_abs_diff_eq!(o.ey1, 3.6309640868052377, epsilon = 1e-9);

    let b = oracle(&ScenarioSpec::binary_default(), 1_000_000, 42).unwrap();
    assert_abs_diff_eq!(b.psi, 0.7027036489371321, epsilon = 1e-9);
    assert_abs_diff_eq!(b.ey1, 0.7818213354894482, epsilon = 1e-9);
    assert_abs_diff_eq!(b.pamy, 0.0791176865523161, epsilon = 1e-9);
    assert_abs_diff_eq!(b.ramy.unwrap(), 0.34038975713535125, epsilon = 1e-9);
}

#[test]
fn oracle_is_reproducible_and_seed_sensitive() {
    let spec = ScenarioSpec::default();
    let a = oracle(&spec, 10_000, 7).unwrap();
    assert_eq!(a, oracle(&spec, 10_000, 7).unwrap());
    assert_ne!(a.psi, oracle(&spec, 10_000, 8).unwrap().psi);
}

#[test]
fn oracle_rejects_tiny_draw_counts() {
    assert!(oracle(&ScenarioSpec::default(), 1, 7).is_err());
}
