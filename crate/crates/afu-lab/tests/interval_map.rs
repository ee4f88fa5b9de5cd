use afu_lab::interval_map::*;
use afu_lab::operator_core::{apply_fn, TwistParam};
use afu_lab::C64;
use proptest::prelude::*;

const BUDGET: usize = 1 << 20;

fn shifted() -> MapSpec {
    MapSpec::shifted_beta(2.5, 0.3).unwrap()
}

fn all_branches(map: &MapSpec, n: usize) -> Vec<InverseBranch> {
    map.inverse_branches(n, Query::Interval(map.y_lo, map.y_hi), BUDGET).unwrap()
}

#[test]
fn doubling_one_step_inverses_at_point() {
    let m = MapSpec::doubling();
    let hs = m.inverse_branches(1, Query::Point(0.3), BUDGET).unwrap();
    assert_eq!(hs.len(), 2);
    let mut ys: Vec<f64> = hs.iter().map(|h| m.eval_inverse(h, 0.3, None).y).collect();
    ys.sort_by(f64::total_cmp);
    assert!((ys[0] - 0.15).abs() < 1e-14);
    assert!((ys[1] - 0.65).abs() < 1e-14);
    for h in &hs {
        assert!((m.eval_inverse(h, 0.3, None).deriv - 0.5).abs() < 1e-14);
    }
}

#[test]
fn doubling_two_step_inverses_contract_by_quarter() {
    let m = MapSpec::doubling();
    for x in [0.01, 0.37, 0.5, 0.99] {
        let hs = m.inverse_branches(2, Query::Point(x), BUDGET).unwrap();
        assert_eq!(hs.len(), 4);
        for h in &hs {
            assert!((m.eval_inverse(h, x, None).deriv - 0.25).abs() < 1e-14);
        }
    }
}

#[test]
fn shifted_beta_point_query_keeps_covering_branches_only() {
    let (beta, alpha): (f64, f64) = (2.5, 0.3);
    let m = shifted();
    // branch images of x ↦ βx + α mod 1, cut where βx + α crosses an integer
    let mut cuts = vec![0.0];
    let mut k = 1.0;
    while (k - alpha) / beta < 1.0 {
        cuts.push((k - alpha) / beta);
        k += 1.0;
    }
    cuts.push(1.0);
    let images: Vec<(f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let lo = beta * w[0] + alpha;
            let hi = beta * w[1] + alpha;
            (lo - lo.floor(), hi - (hi.ceil() - 1.0))
        })
        .collect();
    assert_eq!(images.len(), 3);
    let x = 0.95;
    let expected = images.iter().filter(|(a, b)| x >= *a && x < *b).count();
    let hs = m.inverse_branches(1, Query::Point(x), BUDGET).unwrap();
    assert_eq!(hs.len(), expected);
    assert!(hs.len() < 3);
    assert!(!m.is_full_branch());
}

#[test]
fn doubling_catalog_is_trivial() {
    let m = MapSpec::doubling();
    let cat = image_partition(&m, 10, BUDGET).unwrap();
    for j in 1..=cat.j_max() {
        assert!(cat.points(j).iter().all(|&x| x == 0.0 || x == 1.0), "depth {j}: {:?}", cat.points(j));
    }
    assert_eq!(cat.atoms(10), vec![(0.0, 1.0)]);
}

#[test]
fn shifted_catalog_follows_endpoint_orbits() {
    let m = shifted();
    let cat = image_partition(&m, 6, BUDGET).unwrap();
    // endpoints of the branch images and their forward orbits, by direct iteration
    let f = |x: f64| {
        let y = 2.5 * x + 0.3;
        y - y.floor()
    };
    let x1 = [0.0, 0.3, 0.8, 1.0];
    for &x in &x1 {
        assert!(cat.points(1).iter().any(|&p| (p - x).abs() < 1e-12), "{x} missing from X'_1");
    }
    let mut orbit = 0.8;
    for j in 2..=4 {
        orbit = f(orbit);
        assert!(cat.points(j).iter().any(|&p| (p - orbit).abs() < 1e-9), "orbit of 0.8 missing at depth {j}");
    }
    for j in 1..=cat.j_max() {
        assert!(cat.points(j).len() <= j * cat.n1, "depth {j}");
    }
    let atoms = cat.atoms(2);
    let min = atoms.iter().map(|a| a.1 - a.0).fold(f64::INFINITY, f64::min);
    assert_eq!(cat.min_atom(2), min);
}

/// First return time to [½, 1] of the intermittent map, by direct iteration.
fn return_time(x: f64, alpha: f64, gamma: f64, cap: usize) -> usize {
    let f = |x: f64| if x < 0.5 { x * (1.0 + (2.0 * x).powf(alpha)) } else { gamma * (2.0 * x - 1.0) };
    let mut y = f(x);
    let mut t = 1;
    while y < 0.5 && t <= cap {
        y = f(y);
        t += 1;
    }
    t
}

#[test]
fn mp_truncation_matches_brute_force_return_times() {
    let (alpha, gamma) = (1.0, 0.8);
    let small = MapSpec::mp_first_return(alpha, gamma, 10).unwrap();
    let big = MapSpec::mp_first_return(alpha, gamma, 40).unwrap();
    assert!(big.branches.len() > small.branches.len());
    assert!(big.dropped_mass < small.dropped_mass);
    for (m, cap) in [(&small, 10usize), (&big, 40)] {
        let n = 200_000;
        let beyond = (0..n)
            .filter(|i| {
                let x = 0.5 + 0.5 * (*i as f64 + 0.5) / n as f64;
                return_time(x, alpha, gamma, cap + 1) > cap
            })
            .count();
        let brute = 0.5 * beyond as f64 / n as f64;
        assert!((brute - m.dropped_mass).abs() < 2e-4 + 0.05 * m.dropped_mass, "cap {cap}: brute {brute} vs {}", m.dropped_mass);
    }
    for b in &big.branches {
        assert!(b.image.1 > b.image.0);
    }
}

#[test]
fn doubling_needs_its_square() {
    let (f, g) = geometric_constants(&MapSpec::doubling(), &Roof::one_plus_x_sq(), &Caps::default()).unwrap();
    assert_eq!(f.power, 2);
    assert!((g.rho0 - 4.0).abs() < 1e-12);
    assert!((g.rho - 2f64.sqrt()).abs() < 1e-12);
    assert!(g.c1.abs() < 1e-12);
    assert!((g.k_image - 1.0).abs() < 1e-12);
    // |(φ∘h)'| ≤ Σ_j |φ'(h_j x)| |h_j'| ≤ 2·½ + 2·¼ over the two inverse steps
    assert!(g.c2 > 0.0 && g.c2 <= 1.5 + 1e-12, "{}", g.c2);
}

#[test]
fn beta3_constant_roof_constants() {
    let roof = Roof::constant(1.0);
    let (f, g) = geometric_constants(&MapSpec::shifted_beta(3.0, 0.0).unwrap(), &roof, &Caps::default()).unwrap();
    assert_eq!(f.power, 1);
    assert_eq!(g.c2, 0.0);
    assert!((g.c3 - roof.eps0.exp()).abs() < 1e-12, "{}", g.c3);
}

#[test]
fn mp_eps0_controls_tail() {
    let m = MapSpec::mp_first_return(1.0, 0.8, 40).unwrap();
    let caps = Caps::default();
    let (eps0, rem) = scan_eps0(&m, &Roof::one_plus_x_sq(), &caps).unwrap();
    assert!(eps0 > 0.0);
    assert!(rem <= caps.tail_tol);
    let (_, g) = geometric_constants(&m, &Roof::one_plus_x_sq(), &caps).unwrap();
    assert!(g.c3.is_finite());
}

fn maps() -> Vec<MapSpec> {
    vec![MapSpec::doubling(), MapSpec::shifted_beta(3.0, 0.0).unwrap(), MapSpec::golden_beta(), shifted()]
}

#[test]
fn branch_sums_match_transfer_operator_on_one() {
    let roof = Roof::constant(1.0);
    let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.37) / 1000.0).collect();
    for m in maps() {
        for n in 1..=4 {
            let l1 = apply_fn(&m, &roof, TwistParam::real(0.0), n, &|_| C64::new(1.0, 0.0), &xs, BUDGET).unwrap();
            for (x, l) in xs.iter().zip(&l1) {
                let hs = m.inverse_branches(n, Query::Point(*x), BUDGET).unwrap();
                let s: f64 = hs.iter().map(|h| m.eval_inverse(h, *x, None).deriv).sum();
                assert!((s - l.re).abs() < 1e-10, "{} n={n} x={x}: {s} vs {}", m.name(), l.re);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_branches_invert(which in 0usize..4, n in 1usize..4, x in 0.0f64..1.0) {
        let m = &maps()[which];
        let x = x.min(m.y_hi - 1e-12);
        for h in m.inverse_branches(n, Query::Point(x), BUDGET).unwrap() {
            let y = m.eval_inverse(&h, x, None).y;
            let (fx, _, _) = m.forward_word(&h.word, y);
            prop_assert!((fx - x).abs() < 1e-12);
        }
    }

    #[test]
    fn distortion_within_adler_bound(which in 0usize..4, x in 0.0f64..1.0, x2 in 0.0f64..1.0) {
        let base = &maps()[which];
        let (f, g) = geometric_constants(base, &Roof::one_plus_x_sq(), &Caps::default()).unwrap();
        for h in all_branches(&f, 1) {
            let p = h.domain.0 + (h.domain.1 - h.domain.0) * x;
            let q = h.domain.0 + (h.domain.1 - h.domain.0) * x2;
            let (a, b) = (f.eval_inverse(&h, p, None).deriv, f.eval_inverse(&h, q, None).deriv);
            prop_assert!(a / b <= (g.c1 * (p - q).abs()).exp() * (1.0 + 1e-8));
        }
    }

    #[test]
    fn inverse_branches_contract(which in 0usize..4, n in 1usize..3, x in 0.0f64..1.0) {
        let m = &maps()[which];
        let rho0 = m.base_rho0();
        for h in m.inverse_branches(n, Query::Point(x), BUDGET).unwrap() {
            prop_assert!(m.eval_inverse(&h, x, None).deriv <= rho0.powi(-(n as i32)) * (1.0 + 1e-9));
        }
    }
}
