use afu_lab::bv_space::GridFunction;
use afu_lab::interval_map::{MapSpec, Roof};
use afu_lab::semiflow::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn doubling() -> Suspension {
    Suspension::new(&MapSpec::doubling(), &Roof::one_plus_x_sq(), 1024).unwrap()
}

fn t_grid() -> Vec<f64> {
    (0..=16).map(|k| 0.25 * k as f64).collect()
}

#[test]
fn flow_examples() {
    let s = doubling();
    let z = (0.3, 0.4);
    assert_eq!(s.flow(z, 0.0), Some(z));
    // reaching the roof lands on the base over F(y)
    let phi = 1.0 + 0.09;
    let (y, u) = s.flow(z, phi - 0.4 + 0.1).unwrap();
    assert!((y - 0.6).abs() < 1e-14 && (u - 0.1).abs() < 1e-12, "{y} {u}");
    // two full laps: 0.3 → 0.6 → 0.2
    let t = phi - 0.4 + (1.0 + 0.36) + 0.05;
    let (y, u) = s.flow(z, t).unwrap();
    assert!((y - 0.2).abs() < 1e-13 && (u - 0.05).abs() < 1e-12, "{y} {u}");
}

#[test]
fn constant_roof_flow_is_a_shift_in_height() {
    let (m, r) = (MapSpec::doubling(), Roof::constant(2.0));
    for t in [0.5, 2.5, 7.0] {
        let (y, u) = flow_point((0.1, 0.3), t, &m, &r).unwrap();
        let laps = ((0.3 + t) / 2.0).floor() as i32;
        let mut x: f64 = 0.1;
        for _ in 0..laps {
            x = (2.0 * x).fract();
        }
        assert!((y - x).abs() < 1e-12);
        assert!((u - (0.3 + t - 2.0 * laps as f64)).abs() < 1e-12);
    }
}

#[test]
fn flow_is_a_semigroup() {
    let s = doubling();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let z = s.sample(&mut rng);
        let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let one = s.flow(z, a + b).unwrap();
        let two = s.flow(s.flow(z, a).unwrap(), b).unwrap();
        // same lap count except when landing within rounding of the roof
        if (one.0 - two.0).abs() > 1e-9 {
            assert!(one.1 < 1e-9 || two.1 < 1e-9, "{z:?} {a} {b}: {one:?} {two:?}");
        } else {
            assert!((one.1 - two.1).abs() < 1e-9);
        }
    }
}

fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn flowed_samples_stay_distributed_as_the_invariant_measure() {
    // μ^φ for doubling with φ = 1 + x²: y has density (1 + y²)/(4/3), u/φ(y) is uniform
    let s = doubling();
    let n = 20_000;
    let bound = 4.0 / (n as f64).sqrt();
    let y_cdf = |y: f64| (y + y * y * y / 3.0) * 0.75;
    for t in [0.0, 0.7, 1.3] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| s.flow(s.sample(&mut rng), t).unwrap()).collect();
        let dy = ks(pts.iter().map(|p| p.0).collect(), y_cdf);
        let du = ks(pts.iter().map(|p| p.1 / s.phi(p.0)).collect(), |x| x);
        assert!(dy < bound && du < bound, "t={t}: KS {dy} {du} vs {bound}");
    }
    assert!((s.phi_bar - 4.0 / 3.0).abs() < 1e-5, "{}", s.phi_bar);
}

#[test]
fn correlation_is_centered() {
    // adding constants to v or w leaves ρ unchanged
    let s = doubling();
    let (v, w) = phase_observables(&s);
    let v2 = |y: f64, u: f64| v.eval(y, u) + 3.0;
    let w2 = |y: f64, u: f64| w.eval(y, u) - 1.5;
    let a = s.correlation(&v, &w, &t_grid(), 20_000, 9).unwrap();
    let b = s.correlation(&v2, &w2, &t_grid(), 20_000, 9).unwrap();
    for i in 0..a.t.len() {
        assert!((a.rho[i] - b.rho[i]).abs() < 1e-9, "t={}: {} {}", a.t[i], a.rho[i], b.rho[i]);
    }
}

#[test]
fn constant_observable_has_no_correlation() {
    let s = doubling();
    let (v, _) = phase_observables(&s);
    let c = |_: f64, _: f64| 2.0;
    let r = s.correlation(&v, &c, &t_grid(), 20_000, 3).unwrap();
    for i in 0..r.t.len() {
        assert!(r.rho[i].abs() <= 3.0 * r.stderr[i] + 1e-12, "t={}: {}", r.t[i], r.rho[i]);
    }
}

#[test]
fn correlation_at_zero_is_the_covariance() {
    // v = y, w = y: ρ₀ = Var y under the y-marginal (1 + y²)·¾
    let s = doubling();
    let v = |y: f64, _: f64| y;
    let r = s.correlation(&v, &v, &[0.0], 200_000, 4).unwrap();
    let m1 = 0.75 * (0.5 + 0.25);
    let m2 = 0.75 * (1.0 / 3.0 + 0.2);
    let var = m2 - m1 * m1;
    assert!((r.rho[0] - var).abs() < 4.0 * r.stderr[0] + 1e-3, "{} vs {var}", r.rho[0]);
}

#[test]
fn correlation_is_deterministic_in_the_seed() {
    let s = doubling();
    let (v, w) = phase_observables(&s);
    let a = s.correlation(&v, &w, &t_grid(), 5_000, 11).unwrap();
    let b = s.correlation(&v, &w, &t_grid(), 5_000, 11).unwrap();
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.samples, 5_000);
}

#[test]
fn small_sample_is_rejected() {
    let s = doubling();
    let v = |y: f64, _: f64| y;
    assert!(s.correlation(&v, &v, &[0.0, 1.0], MIN_SAMPLES - 1, 0).is_err());
}

#[test]
fn fit_recovers_synthetic_exponential() {
    let t: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
    let f = fit_exponential(&CorrelationSeries::exact(&t, |t| 2.0 * (-0.5 * t).exp()));
    assert_eq!(f.status, FitStatus::Fitted);
    assert!((f.a0 - 2.0).abs() < 1e-9 && (f.a1 - 0.5).abs() < 1e-9, "{} {}", f.a0, f.a1);
    assert!(!f.non_exponential);
    assert!(f.decays());
}

#[test]
fn fit_flags_polynomial_decay() {
    let t: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
    let f = fit_exponential(&CorrelationSeries::exact(&t, |t| 1.0 / (1.0 + t)));
    assert!(f.non_exponential, "curvature {}", f.curvature);
    assert!(!f.decays());
}

#[test]
fn fit_needs_enough_points() {
    let t: Vec<f64> = (0..(MIN_FIT_POINTS - 1)).map(|k| k as f64).collect();
    let f = fit_exponential(&CorrelationSeries::exact(&t, |t| (-t).exp()));
    assert_eq!(f.status, FitStatus::Inconclusive);
    assert!(!f.decays());
}

#[test]
fn bv_m_norm_of_separable_observable() {
    // v = g(y)·u on heights 0, 1, 2: slices have BV norms 0, ‖g‖, 2‖g‖, and ∂_u v = g
    let g = GridFunction::indicator(256, 0.0, 1.0, 0.25, 0.5);
    let gn = g.bv_norm();
    let slices: Vec<GridFunction> = [0.0, 1.0, 2.0].iter().map(|&u| g.scale(afu_lab::C64::new(u, 0.0))).collect();
    let obs = SuspensionObservable::new(vec![0.0, 1.0, 2.0], slices, 1).unwrap();
    assert!((obs.bv_m_norm() - 3.0 * gn).abs() < 1e-12, "{} vs {}", obs.bv_m_norm(), 3.0 * gn);
    assert!((obs.eval(0.3, 1.5) - 1.5).abs() < 1e-12);
    assert_eq!(obs.eval(0.7, 1.5), 0.0);
    assert!(SuspensionObservable::new(vec![0.0, 1.0], vec![g.clone(), g.clone()], 2).is_err());
    assert!(SuspensionObservable::new(vec![1.0, 0.0], vec![g.clone(), g], 0).is_err());
}

#[test]
fn series_csv_layout() {
    let t = [0.0, 0.5];
    let mut buf = Vec::new();
    CorrelationSeries::exact(&t, |t| 1.0 - t).write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,rho,stderr");
    assert_eq!(lines.len(), 3);
    let cols: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(cols, vec![0.5, 0.5, 0.0]);
}
