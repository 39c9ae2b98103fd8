use std::f64::consts::PI;

use num_complex::Complex64;
use osclab::decaylab::*;
use osclab::oscquad::QuadConfig;
use osclab::Error;

fn experiment(phase: &str, witness: WitnessRule, ladder: Vec<f64>) -> DecayExperiment {
    DecayExperiment {
        phase: phase.into(),
        witness,
        ladder,
        form: FormKind::T3,
        domain: None,
        maps: None,
    }
}

/// The x3k witness cancels the phase of the stationary x1 integral:
/// `∫ e^{iλφ_t(x)} dx · e^{−iλΨ(t)} ≈ √(2π/λ) e^{iπ/4}` for `t ∈ [1/8, 3/8]`
/// with `φ_t(x) = x²/2 − x/2 + x t`. Checked against a brute-force inner
/// integral, after adding the two endpoint terms `[e^{iλφ_t}/(iλφ_t')]_0^1`
/// to the stationary-phase value.
#[test]
fn x3k_inner_phase_is_cancelled() {
    let lambda = 4096.0;
    let rule = WitnessRule::x3k(3);
    let fs = rule.build(lambda, &[[0.0, 1.0]; 3]).unwrap();
    let n = 400_000;
    let h = 1.0 / n as f64;
    let stationary = Complex64::from_polar((2.0 * PI / lambda).sqrt(), PI / 4.0);
    for i in 0..=8 {
        let t = (0.125 + 0.25 * i as f64 / 8.0).clamp(0.126, 0.374);
        let inner: Complex64 = (0..n)
            .map(|j| {
                let x = (j as f64 + 0.5) * h;
                fs[0].eval(x) * Complex64::from_polar(1.0, lambda * x * t)
            })
            .sum::<Complex64>()
            * h;
        let phi = |x: f64| x * x / 2.0 - x / 2.0 + x * t;
        let dphi = |x: f64| x - 0.5 + t;
        let end = |x: f64| Complex64::from_polar(1.0, lambda * phi(x)) / Complex64::new(0.0, lambda * dphi(x));
        let expected = stationary + (end(1.0) - end(0.0)) * fs[1].eval(t);
        let got = inner * fs[1].eval(t);
        assert!((got - expected).norm() <= 0.01 * stationary.norm(), "t = {t}: {got} vs {expected}");
    }
}

#[test]
fn first_example_decays_like_one_over_lambda() {
    let exp = experiment("ex_first", WitnessRule::first_example(), geometric_ladder(32.0, 5));
    let res = run_ladder(&exp, &QuadConfig::ladder()).unwrap();
    assert!(res.windows(2).all(|w| w[1].value.norm() < w[0].value.norm()));
    let fit = fit_results(&res, DEFAULT_TAIL).unwrap();
    assert_eq!(compare(&fit, 1.0, 0.05), Verdict::Match, "{fit:?}");
}

#[test]
fn cyclic_chirp_short_ladder() {
    let exp = experiment("cyclic", WitnessRule::centered_chirp(), geometric_ladder(16.0, 4));
    let res = run_ladder(&exp, &QuadConfig::ladder()).unwrap();
    let fit = fit_results(&res, 4).unwrap();
    assert_eq!(compare(&fit, 0.5, 0.1), Verdict::Match, "{fit:?}");
}

#[test]
fn ladder_preconditions() {
    let exp = experiment("cyclic", WitnessRule::centered_chirp(), vec![]);
    assert!(matches!(run_ladder(&exp, &QuadConfig::ladder()), Err(Error::InvalidParameter(_))));
    let exp = experiment("cyclic", WitnessRule::centered_chirp(), vec![8.0, 4.0, 16.0, 32.0]);
    assert!(run_ladder(&exp, &QuadConfig::ladder()).is_err());
}

#[test]
fn rung_failures_name_the_rung() {
    let exp = experiment("cyclic", WitnessRule::centered_chirp(), geometric_ladder(64.0, 4));
    let cfg = QuadConfig { max_nodes: 1_000_000, ..QuadConfig::ladder() };
    match run_ladder(&exp, &cfg) {
        Err(Error::Rung { lambda, source }) => {
            assert!(lambda >= 64.0);
            assert!(matches!(*source, Error::BudgetExceeded { .. }));
        }
        other => panic!("expected a rung failure, got {other:?}"),
    }
}

#[test]
fn fit_examples() {
    let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 3.0 * (k as f64).powf(-0.75))).collect();
    let fit = fit_slope(&pts, 5).unwrap();
    assert!((fit.slope + 0.75).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);

    let scaled: Vec<(f64, f64)> = pts.iter().map(|&(l, v)| (l, 40.0 * v)).collect();
    let g = fit_slope(&scaled, 5).unwrap();
    assert!((g.slope - fit.slope).abs() <= 1e-12);

    let mut zero = pts.clone();
    zero[2].1 = 0.0;
    assert!(matches!(fit_slope(&zero, 3), Err(Error::DegeneratePoints { rung: 2, .. })));
}

#[test]
fn verdicts() {
    let fit = |slope: f64, stderr: f64| DecayFit {
        slope,
        intercept: 0.0,
        stderr,
        r_squared: 1.0,
        points: vec![],
    };
    assert_eq!(compare(&fit(-0.52, 0.02), 0.5, 0.1), Verdict::Match);
    assert_eq!(compare(&fit(-1.0, 0.01), 0.5, 0.1), Verdict::Mismatch);
    assert_eq!(compare(&fit(-0.7, 0.3), 0.5, 0.1), Verdict::Inconclusive);
}

#[test]
fn csv_and_json_roundtrip() {
    let exp = experiment("ex_first", WitnessRule::first_example(), geometric_ladder(8.0, 4));
    let res = run_ladder(&exp, &QuadConfig::ladder()).unwrap();
    let text = ladder_csv(&res);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert_eq!(parse_ladder_csv(&text).unwrap(), res);

    let json = serde_json::to_string(&exp).unwrap();
    let back: DecayExperiment = serde_json::from_str(&json).unwrap();
    assert_eq!(back, exp);
    assert!(serde_json::from_str::<DecayExperiment>(&json.replace("\"form\"", "\"shape\"")).is_err());
}

#[test]
fn witnesses_are_normalised() {
    for name in ["first", "plain_chirp", "centered_chirp", "mellin", "x3k", "chain3_stationary", "ones"] {
        let rule = WitnessRule::preset(name).unwrap();
        let domain = if name == "mellin" { [[0.5, 1.0]; 3] } else { [[0.0, 1.0]; 3] };
        for lambda in [4.0, 64.0, 512.0] {
            for f in rule.build(lambda, &domain).unwrap() {
                assert!(f.sup_bound() <= 1.0 + 1e-15, "{name}");
            }
        }
    }
}
