use std::f64::consts::PI;

use osclab::phasekit::*;
use osclab::sublevel::*;
use osclab::Error;
use proptest::prelude::*;

fn poly2(terms: &[(&[u32], i64, i64)], domain: [[f64; 2]; 2]) -> PhaseDescriptor {
    PhaseDescriptor::polynomial(SparsePolynomial::from_terms(2, terms).unwrap(), domain.to_vec()).unwrap()
}

fn zero(domain: [f64; 2]) -> StepFunction {
    StepFunction::constant(domain, 0.0).unwrap()
}

/// `φ = x + y + xy`, `ψ = x²y` on the unit square.
fn curved_pair() -> (PhaseDescriptor, PhaseDescriptor) {
    let unit = [[0.0, 1.0]; 2];
    let phi = poly2(&[(&[1, 0], 1, 1), (&[0, 1], 1, 1), (&[1, 1], 1, 1)], unit);
    let psi = poly2(&[(&[2, 1], 1, 1)], unit);
    (phi, psi)
}

fn generic_system(seed: u64, eps: f64) -> SublevelSystem {
    let (phi, psi) = curved_pair();
    let h = [
        StepFunction::random_staircase([0.0, 1.0], 64, [-2.0, 2.0], 3 * seed).unwrap(),
        StepFunction::random_staircase([0.0, 1.0], 64, [-2.0, 2.0], 3 * seed + 1).unwrap(),
        StepFunction::random_staircase([0.0, 3.0], 64, [-2.0, 2.0], 3 * seed + 2).unwrap(),
    ];
    system_9_1(&phi, &psi, h, [[0.0, 1.0]; 2], eps).unwrap()
}

fn within_3_sigma(mc: &MeasureEstimate, exact: f64) -> bool {
    (mc.estimate - exact).abs() <= 3.0 * mc.sigma()
}

#[test]
fn strip_and_full_box() {
    let sys = SublevelSystem::new(1, vec![[0.0, 1.0]; 2], 0.25, |x, out| out[0] = x[0]).unwrap();
    let m = estimate_measure(&sys, 200_000, 11).unwrap();
    assert!(within_3_sigma(&m, 0.25), "{m:?}");
    let expected = 1.96 * (0.25f64 * 0.75 / 200_000.0).sqrt();
    assert!((m.half_width_95 - expected).abs() <= 0.05 * expected);
    let full = SublevelSystem::new(2, vec![[0.0, 1.0]; 3], 1.0, |_, out| out.fill(0.0)).unwrap();
    assert_eq!(estimate_measure(&full, 1000, 0).unwrap().estimate, 1.0);
    assert!(matches!(estimate_measure(&full, 999, 0), Err(Error::InvalidParameter(_))));
}

#[test]
fn estimates_are_reproducible() {
    let sys = generic_system(4, 0.1);
    let a = estimate_measure(&sys, 100_000, 42).unwrap();
    let b = estimate_measure(&sys, 100_000, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn system_9_1_linear_psi_is_full() {
    let (phi, _) = curved_pair();
    let psi = poly2(&[(&[1, 0], 3, 10), (&[0, 1], -1, 5)], [[0.0, 1.0]; 2]);
    let h = [zero([0.0, 1.0]), zero([0.0, 1.0]), zero([0.0, 3.0])];
    let sys = system_9_1(&phi, &psi, h, [[0.0, 1.0]; 2], 0.31).unwrap();
    assert_eq!(estimate_measure(&sys, 10_000, 1).unwrap().estimate, 1.0);
}

#[test]
fn system_9_1_rejects_flat_phase() {
    let (_, psi) = curved_pair();
    let flat = poly2(&[(&[0, 1], 1, 1)], [[0.0, 1.0]; 2]);
    let h = [zero([0.0, 1.0]), zero([0.0, 1.0]), zero([0.0, 1.0])];
    assert!(matches!(
        system_9_1(&flat, &psi, h, [[0.0, 1.0]; 2], 0.1),
        Err(Error::DegenerateGradient { .. })
    ));
}

#[test]
fn system_12_preconditions() {
    let cyclic = registry_get("cyclic").unwrap().descriptor;
    let h = || [zero([0.25, 0.75]), zero([0.25, 0.75]), zero([0.25, 0.75])];
    assert!(system_12(&cyclic, h(), [[0.25, 0.75]; 3], 0.05).is_ok());
    let chain = registry_get("chain3").unwrap().descriptor;
    assert!(matches!(
        system_12(&chain, h(), [[0.25, 0.75]; 3], 0.05),
        Err(Error::DegenerateMixedPartial { .. })
    ));
    let sys = system_12(&cyclic, h(), [[0.25, 0.75]; 3], 2.0).unwrap();
    assert_eq!(estimate_measure(&sys, 10_000, 3).unwrap().estimate, sys.volume());
}

/// Monte Carlo against a 512³ midpoint count.
#[test]
fn system_12_matches_grid() {
    let cyclic = registry_get("cyclic_r(r=1)").unwrap().descriptor;
    let d = [-0.25, 0.25];
    let sys = system_12(&cyclic, [zero(d), zero(d), zero(d)], [d; 3], 0.05).unwrap();
    let mc = estimate_measure(&sys, 1_000_000, 5).unwrap();
    let grid = grid_measure(&sys, 512).unwrap();
    assert!(within_3_sigma(&mc, grid.estimate), "{mc:?} vs {grid:?}");

    let d = [0.25, 0.75];
    let slope = || StepFunction::affine(d, 1.0, -1.0).unwrap();
    let sys = system_12(&cyclic, [slope(), slope(), slope()], [d; 3], 0.05).unwrap();
    let mc = estimate_measure(&sys, 1_000_000, 6).unwrap();
    let grid = grid_measure(&sys, 512).unwrap();
    assert!(within_3_sigma(&mc, grid.estimate), "{mc:?} vs {grid:?}");
    // All three residuals equal x1 + x2 + x3 − 1: a slab of width 0.1.
    assert!(grid.estimate > 0.0);
}

#[test]
fn scalar_sublevel_examples() {
    let bx = [[0.0, 0.5], [0.3, 0.8]];
    let maps = || {
        [
            poly2(&[(&[1, 0], 1, 1)], bx),
            poly2(&[(&[0, 1], 1, 1)], bx),
            registry_get("bourgain").unwrap().descriptor,
        ]
    };
    let c = || [Coefficient::Constant(1.0), Coefficient::Constant(-2.0), Coefficient::Constant(0.5)];
    let zeros = [zero([0.0, 0.5]), zero([0.3, 0.8]), zero([0.0, 1.2])];
    let sys = scalar_sublevel(c(), maps(), zeros, bx, 1e-6).unwrap();
    assert_eq!(estimate_measure(&sys, 10_000, 0).unwrap().estimate, sys.volume());

    let f = || {
        [
            StepFunction::random_staircase([0.0, 0.5], 1024, [-1.0, 1.0], 21).unwrap(),
            StepFunction::random_staircase([0.3, 0.8], 1024, [-1.0, 1.0], 22).unwrap(),
            StepFunction::random_staircase([0.0, 1.2], 1024, [-1.0, 1.0], 23).unwrap(),
        ]
    };
    let ones = || [Coefficient::Constant(1.0), Coefficient::Constant(1.0), Coefficient::Constant(1.0)];
    let rs = [0.08, 0.04, 0.02, 0.01];
    let mut pts = Vec::new();
    let mut last = f64::INFINITY;
    for &r in &rs {
        let sys = scalar_sublevel(ones(), maps(), f(), bx, r).unwrap();
        let m = estimate_measure(&sys, 400_000, 9).unwrap();
        assert!(m.estimate <= last);
        last = m.estimate;
        let vc = f().iter().map(|g| value_concentration(g, r).unwrap()).fold(0.0, f64::max);
        pts.push((vc, fit_value(&m, sys.volume())));
    }
    let delta = fitted_exponent(&pts).unwrap();
    assert!(delta > 0.0, "{delta}");
}

#[test]
fn scalar_sublevel_rejects_critical_map() {
    let bx = [[-0.5, 0.5]; 2];
    let sq = poly2(&[(&[2, 0], 1, 1), (&[0, 2], 1, 1)], bx);
    let x = poly2(&[(&[1, 0], 1, 1)], bx);
    let c = || Coefficient::Constant(1.0);
    let f = || zero([-1.0, 1.0]);
    assert!(matches!(
        scalar_sublevel([c(), c(), c()], [x.clone(), x, sq], [f(), f(), f()], bx, 0.1),
        Err(Error::DegenerateGradient { .. })
    ));
}

#[test]
fn value_concentration_examples() {
    let id = StepFunction::affine([0.0, 1.0], 0.0, 1.0).unwrap();
    assert!((value_concentration(&id, 0.01).unwrap() - 0.02).abs() <= 1e-12);
    let c = StepFunction::constant([2.0, 5.0], -1.0).unwrap();
    assert_eq!(value_concentration(&c, 0.3).unwrap(), 3.0);
    let stairs = StepFunction::staircase([0.0, 1.0], (0..10).map(|k| k as f64 * 0.5).collect()).unwrap();
    assert!((value_concentration(&stairs, 0.2).unwrap() - 0.1).abs() <= 1e-12);
    // Two level sets of a tent are counted together.
    let tent = StepFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0], vec![2.0, -2.0]).unwrap();
    assert!((value_concentration(&tent, 0.05).unwrap() - 0.1).abs() <= 1e-12);
}

/// `‖1_I‖²_{H^σ}` from the closed-form transform: on the lattice
/// `ξ_k = kπ/|I|` of a box of length `2|I|`, `|ĝ(0)|² = |I|²`, even `k ≠ 0`
/// vanish and odd `k` give `(2/ξ_k)²`.
fn indicator_norm_sq(len: f64, sigma: f64, m: usize) -> f64 {
    let dxi = PI / len;
    let mut acc = len * len;
    for k in (1..m as i64 / 2).step_by(2) {
        let xi = k as f64 * dxi;
        acc += 2.0 * (1.0 + xi * xi).powf(sigma) * (2.0 / xi).powi(2);
    }
    acc * dxi
}

#[test]
fn hsigma_at_zero_frequency() {
    let f = StepFunction::staircase([0.2, 0.7], vec![0.3, -1.0, 2.0, 0.0]).unwrap();
    for sigma in [-0.05, -0.25, -1.0] {
        let a = hsigma_norm_sq(&f, 0.0, sigma, 4096);
        let b = hsigma_norm_sq(&f, 0.0, sigma, 8192);
        let exact = indicator_norm_sq(0.5, sigma, 1 << 20);
        assert!((a - b).abs() <= 1e-2 * b, "{sigma}: {a} {b}");
        assert!((b - exact).abs() <= 1e-2 * exact, "{sigma}: {b} {exact}");
    }
}

#[test]
fn hsigma_is_below_l2_bound() {
    let f = StepFunction::random_staircase([0.0, 1.0], 16, [0.0, 1.0], 8).unwrap();
    for lambda in [0.0, 3.0, 40.0, 200.0] {
        let v = hsigma_norm_sq(&f, lambda, -0.05, 8192);
        assert!(v <= 2.0 * PI * 1.0 * (1.0 + 1e-9), "{lambda}: {v}");
    }
}

#[test]
fn hsigma_ratio_is_bounded() {
    let f = StepFunction::affine([0.0, 1.0], 0.0, 1.0).unwrap();
    let ratios: Vec<f64> = [4.0, 16.0, 64.0, 256.0]
        .iter()
        .map(|&a| hsigma_chirp_energy(&f, -0.05, a, 1 << 14).unwrap().ratio)
        .collect();
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo <= 50.0, "{ratios:?}");
}

#[test]
fn hsigma_errors() {
    let f = StepFunction::affine([0.0, 1.0], 0.0, 1.0).unwrap();
    assert!(matches!(hsigma_chirp_energy(&f, -0.25, 4.0, 2048), Err(Error::InvalidParameter(_))));
    assert!(matches!(hsigma_chirp_energy(&f, 0.1, 4.0, 4096), Err(Error::InvalidParameter(_))));
    assert!(matches!(hsigma_chirp_energy(&f, -0.25, 1000.0, 4096), Err(Error::UnderResolved { .. })));
}

#[test]
fn multiprogression_witness() {
    assert_eq!(build_multiprogression_witness(0.1), Err(Error::NonSquareInverse(0.1)));
    assert!(matches!(build_multiprogression_witness(0.25), Err(Error::InvalidParameter(_))));

    let w = build_multiprogression_witness(1.0 / 256.0).unwrap();
    let (s, e) = (w.sqrt_eps(), w.eps);
    let m = multiprogression_measure(&w);
    assert_eq!(m.rejected, 0);
    assert!(m.block_count as f64 >= 0.1 * 256.0);
    assert!(m.lower >= 0.1 * s);
    for b in w.blocks() {
        let expected = if b.n == 0 { e * s } else { e * s - b.n as f64 * e * e };
        assert!((b.area - expected).abs() <= 1e-15);
    }
    for (k, n) in [(2i64, 9u64), (15, 15), (0, 0)] {
        assert_eq!(w.h(k as f64 * s + n as f64 * e), n as f64 * s + n as f64 * e);
    }
    let check = sample_block_membership(&w, 100_000, 17);
    assert_eq!(check.failures, 0);
    assert_eq!(check.max_abs_r1, 0.0);
    assert!(check.max_abs_r2 < e / 2.0);
}

#[test]
fn multiprogression_exponent() {
    let pts: Vec<(f64, f64)> = [3, 4, 5]
        .iter()
        .map(|&j| {
            let w = build_multiprogression_witness(0.25f64.powi(j)).unwrap();
            let m = multiprogression_measure(&w);
            assert!(m.lower >= 0.1 * w.sqrt_eps());
            (w.eps, m.lower)
        })
        .collect();
    let rho = fitted_exponent(&pts).unwrap();
    assert!((0.4..=0.6).contains(&rho), "{rho}");
}

/// Generic staircases decay faster than the extremal witness.
#[test]
fn generic_contrast() {
    let ladder = [0.1, 0.05, 0.025];
    for seed in 0..20 {
        let pts: Vec<(f64, f64)> = ladder
            .iter()
            .map(|&eps| {
                let sys = generic_system(seed, eps);
                let m = estimate_measure(&sys, 1_000_000, seed).unwrap();
                (eps, fit_value(&m, sys.volume()))
            })
            .collect();
        let rho = fitted_exponent(&pts).unwrap();
        assert!(rho > 0.2, "seed {seed}: {rho}");
    }
    let pts: Vec<(f64, f64)> = [1.0 / 64.0, 1.0 / 256.0, 1.0 / 1024.0]
        .iter()
        .map(|&eps| {
            let w = build_multiprogression_witness(eps).unwrap();
            let m = estimate_measure(&w.system(eps).unwrap(), 1_000_000, 1).unwrap();
            (eps, m.estimate)
        })
        .collect();
    let rho = fitted_exponent(&pts).unwrap();
    assert!((rho - 0.5).abs() <= 0.1, "{rho}");
}

#[test]
fn csv_round_trip() {
    let rows: Vec<MeasureRow> = [0.1, 0.05]
        .iter()
        .map(|&eps| {
            let m = estimate_measure(&generic_system(1, eps), 10_000, 2).unwrap();
            MeasureRow { eps, estimate: m.estimate, ci95: m.half_width_95, method: m.method, seed: 2 }
        })
        .collect();
    let text = measure_csv(&rows);
    assert!(text.starts_with("eps,estimate,ci95,method,seed\n"));
    assert_eq!(parse_measure_csv(&text).unwrap(), rows);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn measure_is_monotone_in_eps(seed in 0u64..500, e1 in 0.01f64..0.2, e2 in 0.01f64..0.2) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let sys = generic_system(seed, lo);
        let a = estimate_measure(&sys, 20_000, seed).unwrap();
        let b = estimate_measure(&sys.with_eps(hi).unwrap(), 20_000, seed).unwrap();
        prop_assert!(a.estimate <= b.estimate);
    }

    #[test]
    fn staircase_eval_matches_steps(vals in prop::collection::vec(-5.0f64..5.0, 1..20), t in 0.0f64..1.0) {
        let f = StepFunction::staircase([0.0, 1.0], vals.clone()).unwrap();
        let k = ((t * vals.len() as f64).floor() as usize).min(vals.len() - 1);
        let at_break = (t * vals.len() as f64).fract() < 1e-9;
        prop_assume!(!at_break);
        prop_assert_eq!(f.eval(t), vals[k]);
    }
}
