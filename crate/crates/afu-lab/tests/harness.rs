use afu_lab::bv_space::{cone_check, random_family, ConePair, GridFunction};
use afu_lab::dolgopyat_harness::*;
use afu_lab::interval_map::{MapSpec, Roof};
use afu_lab::operator_core::{TwistParam, UlamOperator};
use afu_lab::{Error, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn doubling() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::new(&MapSpec::doubling(), &Roof::one_plus_x_sq(), HarnessConfig::default()).unwrap())
}

fn constant_roof() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::new(&MapSpec::doubling(), &Roof::constant(1.0), HarnessConfig::default()).unwrap())
}

#[test]
fn scalar_constants() {
    assert!((eta0() - 0.822_875_655_532_295).abs() < 1e-12);
    assert_eq!(delta_prime(0.1, 1.0), 0.015625);
    // 4 sin(π/24)/4
    let r = uni_resolution_bound();
    assert!((r - 0.5 * (std::f64::consts::PI / 24.0).sin()).abs() < 1e-15, "{r}");
    let d = choose_delta(1.0, 1.0);
    assert!(d * 1.0 / (16.0 * std::f64::consts::PI) < 1.0 / 12.0 && d < std::f64::consts::PI / 6.0);
    assert!(2.0 * d >= std::f64::consts::PI / 6.0, "not the largest dyadic: {d}");
}

#[test]
fn doubling_ledger_completes() {
    let l = &doubling().ledger;
    assert_eq!(l.geometry.rho0, 4.0);
    assert!((l.eta0 - eta0()).abs() < 1e-15);
    assert!(l.k >= 1 && l.n0 >= l.k);
    for c in [l.c4, l.c5, l.c6, l.c7, l.c8, l.c10, l.c11] {
        assert!(c.is_finite() && c > 0.0);
    }
    assert!(l.uni_holds());
    assert!(l.working.d > 0.0);
    assert!(l.spectral.iter().all(|s| s.residual < 1e-8));
}

#[test]
fn doubling_cylinder_mass_is_full() {
    // every cylinder of F^n maps onto [0, 1), so the conditional mass is 1 up to the grid
    let c9 = &doubling().ledger.c9;
    assert!((c9.value - 1.0).abs() < 0.02, "{}", c9.value);
}

#[test]
fn doubling_uni_constant() {
    // ψ = φ∘h₁ − φ∘h₂ with h₁ = x/2, h₂ = (x+1)/2 has ψ′ = −½ everywhere
    let a = check_uni(&MapSpec::doubling(), &Roof::one_plus_x_sq(), 1, (0.0, 1.0), 64, 65, 7).unwrap();
    assert!((a.d_best - 0.5).abs() < 1e-9, "{}", a.d_best);
    assert!((a.c0 - 0.5).abs() < 1e-9);
    assert!(a.exhaustive);
}

#[test]
fn constant_and_linear_roofs_fail_uni() {
    for roof in [Roof::constant(1.0), Roof::linear(1.0, 0.7, 0.0, 1.0)] {
        let a = check_uni(&MapSpec::doubling(), &roof, 1, (0.0, 1.0), 64, 65, 7).unwrap();
        assert!(a.d_best <= 1e-9, "{}", a.d_best);
    }
    assert!(!constant_roof().ledger.uni_holds());
}

#[test]
fn empty_atom_is_rejected() {
    assert!(check_uni(&MapSpec::doubling(), &Roof::one_plus_x_sq(), 1, (0.5, 0.5), 8, 9, 7).is_err());
}

fn cone_pair(setup: &Setup, b: f64, seed: u64) -> ConePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_cone_pair(setup, b, 1024, &mut rng).unwrap()
}

#[test]
fn random_pairs_start_in_cone() {
    let s = doubling();
    for seed in 0..4 {
        let p = cone_pair(s, 50.0, seed);
        assert!(cone_check(&p, &s.catalog, &cone_params(s)).in_cone);
    }
}

#[test]
fn zero_v_layout_is_small_modulus_only() {
    let s = doubling();
    let n = 1024;
    let pair = ConePair {
        u: GridFunction::constant(n, 0.0, 1.0, C64::new(1.0, 0.0)),
        v: GridFunction::constant(n, 0.0, 1.0, C64::new(0.0, 0.0)),
        b: 50.0,
    };
    let spec = s.spectral_at(0.0).unwrap();
    let l = build_cancellation(s, &pair, &spec, TwistParam::new(0.0, 50.0)).unwrap();
    assert!(l.typed_count() > 0);
    assert_eq!(l.case2, 0);
    assert_eq!(l.case1, l.typed_count());
    assert_eq!(l.unfilled(), 0);
    assert!(l.chi_slope <= l.chi_slope_bound * (1.0 + 1e-9));
    assert!(l.max_gap <= l.gap_bound);
}

#[test]
fn cancellation_refuses_small_b() {
    let s = doubling();
    let p = cone_pair(s, 50.0, 1);
    let spec = s.spectral_at(0.0).unwrap();
    let small = 1.5 * s.ledger.working.big_delta;
    assert!(matches!(build_cancellation(s, &p, &spec, TwistParam::new(0.0, small)), Err(Error::Hypothesis(_))));
    let c = constant_roof();
    let spec = c.spectral_at(0.0).unwrap();
    assert!(matches!(build_cancellation(c, &p, &spec, TwistParam::new(0.0, 50.0)), Err(Error::UniFailure { .. })));
}

#[test]
fn undamped_domination_holds() {
    // |L̃_s v| ≤ L̃_σ|v| ≤ L̃_σ u without any damping
    let s = doubling();
    let spec = s.spectral_at(0.0).unwrap();
    for seed in 0..3 {
        let p = cone_pair(s, 100.0, seed);
        let r = verify_domination(s, &p, &Chi::one(), &spec, TwistParam::new(0.0, 100.0)).unwrap();
        assert!(r.max_violation <= 1e-8, "{}", r.max_violation);
        assert_eq!(r.points, 1024);
    }
}

#[test]
fn iterate_pair_requires_b_at_least_two() {
    let s = doubling();
    let p = cone_pair(s, 50.0, 2);
    let spec = s.spectral_at(0.0).unwrap();
    assert!(matches!(iterate_pair(s, &p, &spec, TwistParam::new(0.0, 1.5)), Err(Error::Hypothesis(_))));
}

#[test]
fn iterated_pair_stays_in_cone() {
    let s = doubling();
    let spec = s.spectral_at(0.0).unwrap();
    let st = TwistParam::new(0.0, 50.0);
    let mut p = cone_pair(s, 50.0, 3);
    for _ in 0..2 {
        let r = iterate_pair(s, &p, &spec, st).unwrap();
        assert!(r.cone.in_cone, "{:?}", r.cone.violations);
        assert!(r.domination.max_violation <= 1e-8);
        p = r.pair;
    }
}

#[test]
fn doubling_lasota_yorke() {
    let s = doubling();
    let fam = ly_test_family(s.cfg.seed, 12, 2048, &s.map, &s.catalog);
    for n in [1, 2] {
        let r = verify_ly(s, 0.0, n, &[2.0, 8.0, 32.0], &fam).unwrap();
        assert!(r.a_fit <= r.rho_factor * 1.05, "n={n}: a {} vs {}", r.a_fit, r.rho_factor);
        assert!((r.slope - 1.0).abs() <= 0.2, "n={n}: slope {}", r.slope);
    }
}

#[test]
fn l2_of_one_without_twist_is_flat() {
    // L̃_σ1 = 1 for real σ, so ∫|v_m|² stays at its initial value
    let s = doubling();
    let one = vec![GridFunction::constant(1024, 0.0, 1.0, C64::new(1.0, 0.0))];
    let spec = s.spectral_at(0.0).unwrap();
    let r = l2_decay(s, TwistParam::new(0.0, 50.0), 3, &one).unwrap();
    assert!(r.beta < 1.0);
    // b = 0 is outside the cancellation regime; undamped iteration conserves the mass
    let op = UlamOperator::assemble(&s.map, &s.roof, TwistParam::real(0.0), 1024).unwrap();
    let v = op.apply(&one[0], 3);
    let ratio = v.l2sq() / one[0].l2sq();
    assert!((ratio - 1.0).abs() < 1e-6 * spec.lambda.max(1.0), "{ratio}");
}

#[test]
fn l2_contraction_refuses_constant_roof() {
    let c = constant_roof();
    let fam = l2_family(c, 2, 512);
    assert!(matches!(l2_contraction(c, TwistParam::new(0.0, 50.0), 4, &fam), Err(Error::UniFailure { .. })));
    let r = l2_decay(c, TwistParam::new(0.0, 50.0), 4, &fam).unwrap();
    assert!(r.uni_failed);
    assert!(r.beta >= 0.999, "{}", r.beta);
}

#[test]
fn classify_h_examples() {
    let s = doubling();
    let st = TwistParam::new(0.0, 10.0);
    let flat = GridFunction::constant(512, 0.0, 1.0, C64::new(2.0, 0.0));
    let h = classify_h(s, &flat, st, 1);
    assert_eq!(h.lhs, 0.0);
    assert!(h.holds);
    let rough = GridFunction::from_real(512, 0.0, 1.0, |x| if (x * 512.0) as usize % 2 == 0 { 1.0 } else { -1.0 });
    let h1 = classify_h(s, &rough, st, 1);
    let h2 = classify_h(s, &rough, st, 2);
    assert_eq!(h1.lhs, 2.0 * 511.0);
    assert_eq!(h1.holds, h1.lhs <= h1.rhs);
    let growth = s.ledger.geometry.rho.powi(s.n0() as i32);
    assert!((h2.rhs / h1.rhs - growth).abs() < 1e-9 * growth);
    // a negative σ weights by e^{σφ}, which only shrinks a constant
    let neg = classify_h(s, &flat, TwistParam::new(-0.05, 10.0), 1);
    assert!(neg.lhs > 0.0 && neg.lhs < 2.0);
}

#[test]
fn constant_roof_scan_is_tagged() {
    let c = constant_roof();
    let fam = l2_family(c, 2, 512);
    let r = contraction_scan(c, TwistParam::new(0.0, 20.0), None, &fam, 512).unwrap();
    assert!(r.uni_failed);
    assert_eq!(r.n_min, 8 * c.n0() * (21f64).ln().ceil() as usize);
}

#[test]
fn scan_rejects_b_below_floor() {
    let s = doubling();
    let fam = l2_family(s, 1, 256);
    assert!(contraction_scan(s, TwistParam::new(0.0, 1.0), None, &fam, 256).is_err());
}

#[test]
fn resolvent_recovers_constructed_preimage() {
    let s = doubling();
    let grid = 512;
    let st = TwistParam::new(0.0, 30.0);
    let op = UlamOperator::assemble(&s.map, &s.roof, st, grid).unwrap();
    let w = &random_family(5, 1, grid, 0.0, 1.0, &[], true)[0];
    let v = w.zip(&op.apply(w, 1), |a, b| a - b);
    let r = resolvent_norm(s, st, &[v.clone()], grid).unwrap();
    let expect = w.b_norm(st.b) / v.b_norm(st.b);
    assert!((r.norm - expect).abs() < 1e-6 * expect, "{} vs {expect}", r.norm);
    assert!(r.max_residual <= 1e-10);
}

#[test]
fn schedule_shrinks_until_hypothesis_holds() {
    let mut applied = 0;
    let mut calls = 0;
    let t = run_schedule(200, 2, 10.0, |k| applied += k, |_| {
        calls += 1;
        calls == 3
    });
    assert_eq!(applied, 200);
    assert_eq!(t.passes.len(), 3);
    assert!(t.passes[2].h_holds);
    assert!(t.shrink_ok);
}
