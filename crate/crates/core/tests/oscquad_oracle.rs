use std::f64::consts::PI;

use num_complex::Complex64;
use osclab::oscquad::*;
use osclab::phasekit::*;
use osclab::witnesses::*;
use osclab::Error;
use proptest::prelude::*;

fn one() -> TestFunction1D {
    make_indicator(0.0, 1.0).unwrap()
}

fn phase(name: &str) -> PhaseDescriptor {
    registry_get(name).unwrap().descriptor
}

/// Midpoint rule on `[0,1]²` with one Richardson step.
fn midpoint_2d(n: usize, f: impl Fn(f64, f64) -> Complex64 + Sync) -> Complex64 {
    let rule = |n: usize| {
        let h = 1.0 / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += f(x, (j as f64 + 0.5) * h);
            }
            acc += row;
        }
        acc * h * h
    };
    (4.0 * rule(n) - rule(n / 2)) / 3.0
}

#[test]
fn unit_integrand_gives_volume() {
    let f = one();
    for name in ["cyclic", "chain3", "x3k(k=3)"] {
        let r = eval_t3(&phase(name), [&f, &f, &f], 0.0, &QuadConfig::default()).unwrap();
        assert!((r.value - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
        let o = eval_oracle_t3(&phase(name), [&f, &f, &f], 0.0, 64).unwrap();
        assert!((r.value - o.value).norm() <= 1e-10);
    }
}

#[test]
fn full_periods_cancel() {
    let zero = PhaseDescriptor::unit_polynomial(SparsePolynomial::zero(3)).unwrap();
    let w = make_chirp(0.0, 2.0 * PI, 0.0, [0.0, 1.0]).unwrap();
    let r = eval_t3(&zero, [&w, &w, &w], 5.0, &QuadConfig::default()).unwrap();
    assert!(r.value.norm() <= 1e-10);
}

#[test]
fn triple_product_against_inner_integral() {
    let lambda = 10.0;
    let inner = |x: f64, y: f64| {
        let a = lambda * x * y;
        if a.abs() < 1e-8 {
            Complex64::new(1.0, a / 2.0)
        } else {
            (Complex64::from_polar(1.0, a) - 1.0) / Complex64::new(0.0, a)
        }
    };
    let reference = midpoint_2d(2048, inner);
    let f = one();
    let r = eval_t3(&phase("triple_product"), [&f, &f, &f], lambda, &QuadConfig::default()).unwrap();
    assert!((r.value - reference).norm() / reference.norm() <= 1e-6, "{} vs {reference}", r.value);
}

#[test]
fn planar_form_against_midpoint() {
    let lambda = 50.0;
    let psi = PhaseDescriptor::unit_polynomial(SparsePolynomial::from_terms(2, &[(&[2, 1], 1, 1)]).unwrap())
        .unwrap()
        .with_domain(vec![[0.0, 1.0]; 2])
        .unwrap();
    let maps = [phase("coord_x"), phase("coord_y"), phase("linear_sum")];
    let f = make_indicator(-1.0, 3.0).unwrap();
    let reference = midpoint_2d(4096, |x, y| Complex64::from_polar(1.0, lambda * x * x * y));
    let r = eval_s2(&psi, [&maps[0], &maps[1], &maps[2]], [&f, &f, &f], lambda, &QuadConfig::default()).unwrap();
    assert!((r.value - reference).norm() / reference.norm() <= 1e-5);

    let zero = TestFunction1D::zero();
    let r = eval_s2(&psi, [&maps[0], &maps[1], &maps[2]], [&f, &f, &zero], lambda, &QuadConfig::default()).unwrap();
    assert_eq!(r.value, Complex64::new(0.0, 0.0));
}

#[test]
fn planar_breakpoints_are_resolved() {
    // f3 = indicator of [0, 1] composed with x + y cuts the square along
    // the anti-diagonal, so the value is the area of a triangle. Cells cut
    // by the line are halved six times, which leaves an O(2^-6 h) error.
    let psi = PhaseDescriptor::unit_polynomial(SparsePolynomial::zero(2))
        .unwrap()
        .with_domain(vec![[0.0, 1.0]; 2])
        .unwrap();
    let maps = [phase("coord_x"), phase("coord_y"), phase("linear_sum")];
    let f = make_indicator(-1.0, 3.0).unwrap();
    let cut = make_indicator(0.0, 1.0).unwrap();
    let r = eval_s2(&psi, [&maps[0], &maps[1], &maps[2]], [&f, &f, &cut], 0.0, &QuadConfig::default()).unwrap();
    assert!((r.value.re - 0.5).abs() <= 5e-3, "{}", r.value);
}

#[test]
fn oracle_self_consistency_and_errors() {
    let f = one();
    let p = phase("chain3");
    let a = eval_oracle_t3(&p, [&f, &f, &f], 16.0, 512).unwrap();
    let b = eval_oracle_t3(&p, [&f, &f, &f], 16.0, 1024).unwrap();
    assert!((a.value - b.value).norm() <= 1e-6 * (1.0 + b.value.norm()));
    let q = eval_t3(&p, [&f, &f, &f], 16.0, &QuadConfig::default()).unwrap();
    assert!((q.value - b.value).norm() <= 1e-6 * (1.0 + b.value.norm()));
    assert!(matches!(
        eval_oracle_t3(&p, [&f, &f, &f], 64.0, 64),
        Err(Error::ResolutionTooLow { .. })
    ));
}

#[test]
fn budget_is_enforced() {
    let f = one();
    let cfg = QuadConfig { max_nodes: 1000, ..QuadConfig::default() };
    assert!(matches!(
        eval_t3(&phase("cyclic"), [&f, &f, &f], 512.0, &cfg),
        Err(Error::BudgetExceeded { .. })
    ));
}

#[test]
fn refinement_stays_within_delta() {
    let lambda = 40.0;
    let c = make_chirp(lambda / 2.0, 0.0, 0.0, [0.0, 1.0]).unwrap();
    let p = phase("cyclic");
    let coarse = eval_t3(&p, [&c, &c, &c], lambda, &QuadConfig { oversample: 2.0, ..QuadConfig::default() }).unwrap();
    let fine = eval_t3(&p, [&c, &c, &c], lambda, &QuadConfig { oversample: 4.0, ..QuadConfig::default() }).unwrap();
    assert!((coarse.value - fine.value).norm() <= coarse.two_resolution_delta.max(1e-14));
    assert!(coarse.is_reliable());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conjugation_symmetry(lambda in 1.0f64..30.0, a in -10.0f64..10.0, lo in 0.0f64..0.4) {
        let f1 = make_chirp(a, 1.0, 0.0, [0.0, 1.0]).unwrap();
        let f2 = make_indicator(lo, lo + 0.5).unwrap();
        let f3 = make_chirp(0.0, -a, 0.5, [0.1, 0.9]).unwrap();
        let p = phase("x3k(k=3)");
        let cfg = QuadConfig::default();
        let r = eval_t3(&p, [&f1, &f2, &f3], lambda, &cfg).unwrap();
        let (g1, g2, g3) = (f1.conj(), f2.conj(), f3.conj());
        let s = eval_t3(&p.negated(), [&g1, &g2, &g3], lambda, &cfg).unwrap();
        prop_assert!((r.value - s.value.conj()).norm() <= 1e-12);
        let neg = eval_t3(&p, [&g1, &g2, &g3], -lambda, &cfg).unwrap();
        prop_assert!((neg.value - r.value.conj()).norm() <= 1e-12);
    }

    #[test]
    fn trivial_magnitude_bound(lambda in 0.0f64..60.0, b in -30.0f64..30.0) {
        let f = make_chirp(0.0, b, 0.0, [0.0, 1.0]).unwrap();
        let g = make_constant(Complex64::new(0.0, 0.5), 0.2, 0.7).unwrap();
        let r = eval_t3(&phase("cyclic"), [&f, &g, &f], lambda, &QuadConfig::default()).unwrap();
        prop_assert!(r.value.norm() <= 0.5 + r.two_resolution_delta + 1e-12);
    }
}
