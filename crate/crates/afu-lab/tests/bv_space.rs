use afu_lab::bv_space::*;
use afu_lab::interval_map::{image_partition, MapSpec};
use afu_lab::C64;
use proptest::prelude::*;

const BUDGET: usize = 1 << 20;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[test]
fn variation_examples() {
    let n = 1 << 10;
    assert_eq!(GridFunction::indicator(n, 0.0, 1.0, 0.3, 0.6).var(), 2.0);
    let x = GridFunction::from_real(n, 0.0, 1.0, |x| x);
    assert!((x.var() - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
    let a = [c(0.5), C64::new(0.0, -2.0), c(0.25)];
    let terms: Vec<(f64, C64)> = [0.2, 0.5, 0.8].iter().copied().zip(a).collect();
    let s = GridFunction::step(n, 0.0, 1.0, &terms, 1.0);
    let expect: f64 = a.iter().map(|z| z.norm()).sum();
    assert!((s.var() - expect).abs() < 1e-12);
}

#[test]
fn var_on_restricts_to_window() {
    let v = GridFunction::indicator(1000, 0.0, 1.0, 0.3, 0.6);
    assert_eq!(v.var_on(0.0, 0.45), 1.0);
    assert_eq!(v.var_on(0.4, 0.5), 0.0);
    assert_eq!(v.var_on(0.0, 1.0), 2.0);
}

#[test]
fn keller_examples() {
    let n = 1 << 10;
    assert_eq!(GridFunction::constant(n, 0.0, 1.0, c(3.0)).keller_var(), 0.0);
    // interior indicator: osc is 1 on two windows of width 2κ, so the ratio is 4
    let v = GridFunction::indicator(n, 0.0, 1.0, 0.25, 0.75);
    let k = v.keller_var();
    assert!((k - 4.0).abs() < 0.05, "{k}");
    // a rotated copy has the same seminorm
    let w = v.scale(C64::from_polar(2.0, 0.7));
    assert!((w.keller_var() - 2.0 * k).abs() < 1e-2 * k, "{}", w.keller_var());
}

#[test]
fn jump_size_examples() {
    let terms = [(0.25, c(1.5)), (0.5, C64::new(0.0, 1.0))];
    let v = GridFunction::step(512, 0.0, 1.0, &terms, 0.75);
    assert_eq!(v.jump_size(0.25), 1.5);
    assert_eq!(v.jump_size(0.5), 1.0);
    assert!((v.jump_size(0.75) - C64::new(1.5, 1.0).norm()).abs() < 1e-15);
    assert_eq!(v.jump_size(0.6), 0.0);
    // without a catalog the grid difference is used
    let g = GridFunction::new(0.0, 1.0, v.values.clone());
    assert!((g.jump_size(0.25) - 1.5).abs() < 1e-15);
    assert_eq!(g.jump_excess(0.6), 0.0);
}

#[test]
fn extra_term_vanishes_for_doubling() {
    let m = MapSpec::doubling();
    let cat = image_partition(&m, 8, BUDGET).unwrap();
    let u = GridFunction::constant(256, 0.0, 1.0, c(2.0));
    let rho = 2f64.sqrt();
    let e = extra_term(&u, 0.0, 1.0, &cat, 1, rho);
    assert_eq!(e.value, 0.0);
    let tail = cat.n1 as f64 * rho.powi(-(cat.j_max() as i32)) / (rho - 1.0) * 2.0;
    assert!((e.remainder - tail).abs() < 1e-12);
}

#[test]
fn extra_term_shifted_matches_direct_sum() {
    let m = MapSpec::shifted_beta(2.5, 0.3).unwrap();
    let cat = image_partition(&m, 5, BUDGET).unwrap();
    let n = 1 << 12;
    let u = GridFunction::from_real(n, 0.0, 1.0, |x| 1.0 + x);
    let (lo, hi, k, rho): (f64, f64, usize, f64) = (0.1, 0.9, 1, 2.5);
    // each catalog point x counts once per depth it appears at, weighted by limsup u(x) = 1 + x
    let mut direct = 0.0;
    for j in (k + 1)..=cat.j_max() {
        for &x in cat.points(j) {
            if x > lo && x < hi {
                direct += rho.powi(-(j as i32)) * (1.0 + x);
            }
        }
    }
    let e = extra_term(&u, lo, hi, &cat, k, rho);
    assert!(direct > 0.0);
    assert!((e.value - direct).abs() < 2.0 / n as f64 * direct, "{} vs {direct}", e.value);
}

#[test]
fn b_norm_examples() {
    let v = GridFunction::indicator(1000, 0.0, 1.0, 0.0, 0.5);
    // a jump at the left edge is not counted; only the one at ½ is
    assert_eq!(v.var(), 1.0);
    assert!((v.b_norm(0.0) - 1.5).abs() < 1e-12);
    assert!((v.b_norm(-9.0) - 0.6).abs() < 1e-12);
    assert!((v.bv_norm() - 1.5).abs() < 1e-12);
}

fn params() -> ConeParams {
    ConeParams { c7: 1.0, c8: 1.0, c10: 1.0, k: 1, rho: 2f64.sqrt(), tol: 1e-9 }
}

#[test]
fn constant_pair_is_in_cone() {
    let cat = image_partition(&MapSpec::doubling(), 6, BUDGET).unwrap();
    let n = 256;
    let pair = ConePair {
        u: GridFunction::constant(n, 0.0, 1.0, c(1.0)),
        v: GridFunction::constant(n, 0.0, 1.0, c(0.5)),
        b: 50.0,
    };
    let r = cone_check(&pair, &cat, &params());
    assert!(r.in_cone, "{:?}", r.violations);
    assert!(r.intervals_checked > 0);
}

#[test]
fn jump_off_catalog_leaves_cone() {
    let cat = image_partition(&MapSpec::doubling(), 6, BUDGET).unwrap();
    let n = 256;
    let pair = ConePair {
        u: GridFunction::constant(n, 0.0, 1.0, c(1.0)),
        v: GridFunction::indicator(n, 0.0, 1.0, 0.0, 0.37).scale(c(0.5)),
        b: 50.0,
    };
    let r = cone_check(&pair, &cat, &params());
    assert!(!r.in_cone);
    assert!(r.violations.iter().any(|v| v.kind == ViolationKind::JumpOutsideX && (v.lo - 0.37).abs() < 1e-12));
}

#[test]
fn domination_failure_is_reported() {
    let cat = image_partition(&MapSpec::doubling(), 6, BUDGET).unwrap();
    let n = 64;
    let pair = ConePair {
        u: GridFunction::constant(n, 0.0, 1.0, c(1.0)),
        v: GridFunction::constant(n, 0.0, 1.0, C64::new(0.0, 1.5)),
        b: 50.0,
    };
    let r = cone_check(&pair, &cat, &params());
    assert!(r.violations.iter().any(|v| v.kind == ViolationKind::Domination));
}

#[test]
fn keller_equivalent_to_variation_on_random_family() {
    let n = 1 << 12;
    let slack = 1.0 + 10.0 / n as f64;
    let fam = random_family(7, 200, n, 0.0, 1.0, &[], true);
    for (i, v) in fam.iter().enumerate() {
        let (var, k) = (v.var(), v.keller_var());
        assert!(0.5 * var <= k * slack && k <= 3.0 * var * slack, "function {i}: Var {var}, Keller {k}");
    }
}

fn arb_values() -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| C64::new(a, b)), 4..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn oscillation_bounded_by_variation(vals in arb_values(), a in 0.0f64..1.0, w in 0.0f64..1.0) {
        let v = GridFunction::new(0.0, 1.0, vals);
        let b = (a + w).min(1.0);
        prop_assert!(v.osc_on(a, b) <= v.var_on(a, b) + 1e-12);
        prop_assert!(v.var_on(a, b) <= v.var() + 1e-12);
    }

    #[test]
    fn jump_size_bounded_by_oscillation(vals in arb_values(), x in 0.01f64..0.99) {
        let v = GridFunction::new(0.0, 1.0, vals);
        let h = v.h();
        prop_assert!(v.jump_size(x) <= v.osc_on(x - h, x + h) + 1e-12);
        prop_assert!(v.jump_excess(x) <= v.jump_size(x) + 1e-12);
    }

    #[test]
    fn b_norm_homogeneous_and_monotone(vals in arb_values(), re in -3.0f64..3.0, im in -3.0f64..3.0, b in -100.0f64..100.0) {
        let v = GridFunction::new(0.0, 1.0, vals);
        let z = C64::new(re, im);
        let lhs = v.scale(z).b_norm(b);
        let rhs = z.norm() * v.b_norm(b);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        prop_assert!(v.b_norm(2.0 * b) <= v.b_norm(b) + 1e-12);
        prop_assert!(v.b_norm(b) >= v.l1());
    }
}
