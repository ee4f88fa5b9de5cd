//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use afu_lab::bv_space::{cone_check, random_family};
use afu_lab::dolgopyat_harness::*;
use afu_lab::interval_map::{MapSpec, Roof};
use afu_lab::operator_core::{branch_weight_bound, eigendata, TwistParam};
use afu_lab::quad::linear_fit;
use afu_lab::semiflow::{phase_observables, Suspension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn maps() -> Vec<(&'static str, MapSpec)> {
    vec![
        ("doubling", MapSpec::doubling()),
        ("beta3", MapSpec::shifted_beta(3.0, 0.0).unwrap()),
        ("golden", MapSpec::golden_beta()),
        ("shifted", MapSpec::shifted_beta(2.5, 0.3).unwrap()),
        ("mp", MapSpec::mp_first_return(1.0, 0.8, 40).unwrap()),
    ]
}

/// Setups for every built-in map with roof 1 + x², built on first use.
fn setups() -> &'static Vec<(&'static str, Setup)> {
    static S: OnceLock<Vec<(&'static str, Setup)>> = OnceLock::new();
    S.get_or_init(|| {
        maps()
            .into_par_iter()
            .map(|(name, m)| (name, Setup::new(&m, &Roof::one_plus_x_sq(), HarnessConfig::default()).unwrap()))
            .collect()
    })
}

fn setup(name: &str) -> &'static Setup {
    &setups().iter().find(|(n, _)| *n == name).unwrap().1
}

fn constant_roof() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::new(&MapSpec::doubling(), &Roof::constant(1.0), HarnessConfig::default()).unwrap())
}

fn eigen_equation() -> Outcome {
    let roof = Roof::one_plus_x_sq();
    let n = 1 << 14;
    let cases = [
        ("doubling^2", MapSpec::doubling().iterate(2)),
        ("beta3", MapSpec::shifted_beta(3.0, 0.0).unwrap()),
        ("golden", MapSpec::golden_beta()),
        ("shifted", MapSpec::shifted_beta(2.5, 0.3).unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut golden = None;
    for (name, m) in cases {
        let s = eigendata(&m, &roof, 0.0, n).unwrap();
        let ok = s.residual <= 1e-8 && (s.lambda - 1.0).abs() <= 1e-6;
        pass &= ok;
        parts.push(format!("{name}: residual {:.1e}, lambda-1 {:.1e}", s.residual, s.lambda - 1.0));
        if name == "golden" {
            golden = Some(s);
        }
    }
    // 10⁷ orbit samples: 10⁴ independent starts, 1000 steps each after a burn-in
    let beta = 0.5 * (1.0 + 5f64.sqrt());
    let bins = 64;
    let hist = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            rng.set_stream(i);
            let mut h = vec![0u64; bins];
            let mut x: f64 = rng.gen();
            for t in 0..1032 {
                x = beta * x;
                x -= x.floor();
                if t >= 32 {
                    h[((x * bins as f64) as usize).min(bins - 1)] += 1;
                }
            }
            h
        })
        .reduce(|| vec![0; bins], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let f = &golden.unwrap().f;
    let per = n / bins;
    let total: u64 = hist.iter().sum();
    let l1: f64 = (0..bins)
        .map(|b| {
            let fb = f.values[b * per..(b + 1) * per].iter().map(|z| z.re).sum::<f64>() / per as f64;
            (fb - hist[b] as f64 * bins as f64 / total as f64).abs() / bins as f64
        })
        .sum();
    pass &= l1 <= 5e-3;
    parts.push(format!("golden histogram L1 {l1:.2e}"));
    outcome(pass, parts.join("; "))
}

fn seminorm_equivalence() -> Outcome {
    let n = 1 << 12;
    let slack = 1.0 + 10.0 / n as f64;
    let fam = random_family(SEED, 200, n, 0.0, 1.0, &[], true);
    let ratios: Vec<f64> = fam.par_iter().map(|v| v.keller_var() / v.var()).collect();
    let bad = ratios.iter().filter(|r| !(0.5 <= **r * slack && **r <= 3.0 * slack)).count();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    outcome(bad == 0, format!("{bad} violations, Keller/Var in [{lo:.3}, {hi:.3}]"))
}

fn lasota_yorke() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["doubling", "shifted"] {
        let s = setup(name);
        let fam = ly_test_family(s.cfg.seed, s.cfg.ly_family, s.cfg.grid, &s.map, &s.catalog);
        for n in [1, 2] {
            let r = verify_ly(s, 0.0, n, &[2.0, 8.0, 32.0], &fam).unwrap();
            let ok_a = r.a_fit <= r.rho_factor * 1.05;
            let ok_slope = (r.slope - 1.0).abs() <= 0.2;
            pass &= ok_a && ok_slope;
            parts.push(format!("{name} n={n}: a {:.3} vs {:.3}, slope {:.2}", r.a_fit, r.rho_factor * 1.05, r.slope));
        }
    }
    outcome(pass, parts.join("; "))
}

fn branch_weights() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, s) in setups() {
        let rho = s.ledger.geometry.rho;
        let worst = (1..=3)
            .map(|n| {
                let w = s.spectral.iter().map(|sp| branch_weight_bound(&s.map, &s.roof, sp.sigma, sp.lambda, n)).fold(0.0, f64::max);
                w / rho.powi(-3 * n as i32)
            })
            .fold(0.0, f64::max);
        pass &= worst <= 1.0;
        parts.push(format!("{name}: eps {:.3e}, max weight/bound {worst:.3}", s.ledger.eps));
    }
    outcome(pass, parts.join("; "))
}

fn uni_detection() -> Outcome {
    let d = |roof: Roof| check_uni(&MapSpec::doubling(), &roof, 1, (0.0, 1.0), 64, 65, SEED).unwrap().d_best;
    let quad = d(Roof::one_plus_x_sq());
    let flat = d(Roof::constant(1.0));
    let lin = d(Roof::linear(1.0, 0.7, 0.0, 1.0));
    let pass = (quad - 0.5).abs() <= 1e-9 && flat <= 1e-9 && lin <= 1e-9;
    outcome(pass, format!("1+x^2: {quad:.12}, constant: {flat:.1e}, linear: {lin:.1e}"))
}

fn cancellation() -> Outcome {
    let s = setup("doubling");
    let mut worst = 0.0f64;
    let mut runs = 0;
    for sigma in [0.0, 0.01, -0.01] {
        let spec = s.spectral_at(sigma).unwrap();
        for b in [50.0, 100.0] {
            let st = TwistParam::new(sigma, b);
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            for _ in 0..16 {
                let pair = random_cone_pair(s, b, s.cfg.grid, &mut rng).unwrap();
                let layout = build_cancellation(s, &pair, &spec, st).unwrap();
                let r = verify_domination(s, &pair, &layout.chi, &spec, st).unwrap();
                worst = worst.max(r.max_violation);
                runs += 1;
            }
        }
    }
    outcome(worst <= 1e-8, format!("{runs} runs, max violation {worst:.2e}"))
}

fn cone_invariance() -> Outcome {
    let s = setup("doubling");
    let st = TwistParam::new(0.0, 50.0);
    let spec = s.spectral_at(0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut out, mut jump_points, mut jump_bad, mut worst_ratio) = (0, 0, 0, 0.0f64);
    for _ in 0..16 {
        let mut pair = random_cone_pair(s, st.b, s.cfg.grid, &mut rng).unwrap();
        if !cone_check(&pair, &s.catalog, &cone_params(s)).in_cone {
            out += 1;
        }
        for _ in 0..3 {
            let r = iterate_pair(s, &pair, &spec, st).unwrap();
            if !r.cone.in_cone {
                out += 1;
            }
            jump_points += r.jump_bounds.points;
            worst_ratio = worst_ratio.max(r.jump_bounds.worst_ratio);
            if r.jump_bounds.worst_ratio > 1.1 {
                jump_bad += 1;
            }
            pair = r.pair;
        }
    }
    outcome(
        out == 0 && jump_bad == 0,
        format!("{out} cone failures over 16x3, {jump_points} catalog points checked, worst jump ratio {worst_ratio:.3}"),
    )
}

fn l2_decay_check() -> Outcome {
    let s = setup("doubling");
    let st = TwistParam::new(0.0, 50.0);
    let r = l2_decay(s, st, 8, &l2_family(s, 6, s.cfg.grid)).unwrap();
    let c = constant_roof();
    let rc = l2_decay(c, st, 8, &l2_family(c, 6, c.cfg.grid)).unwrap();
    let pass = r.beta < 0.98 && !r.uni_failed && rc.beta >= 0.999 && rc.uni_failed;
    outcome(pass, format!("beta {:.4}; constant roof beta {:.4}, UNI flag {}", r.beta, rc.beta, rc.uni_failed))
}

fn contraction() -> Outcome {
    let s = setup("doubling");
    let grid = s.cfg.grid;
    let fam = l2_family(s, 6, grid);
    let mut pass = true;
    let mut rows = Vec::new();
    for b in [20.0, 40.0, 80.0] {
        let st = TwistParam::new(0.0, b);
        let beta = l2_decay(s, st, 8, &fam).map(|l| l.beta).ok();
        let r = contraction_scan(s, st, beta, &fam, grid).unwrap();
        pass &= r.gamma_fit < 1.0;
        rows.push((b, r.gamma_fit, r.n_min));
    }
    pass &= rows.windows(2).all(|w| w[1].2 >= w[0].2);
    let n = 1 << 12;
    let rfam = random_family(SEED, 6, n, s.map.y_lo, s.map.y_hi, &[], true);
    let bs = [20.0, 40.0, 80.0, 160.0];
    let norms: Vec<f64> = bs.iter().map(|&b| resolvent_norm(s, TwistParam::new(0.0, b), &rfam, n).unwrap().norm).collect();
    let lx: Vec<f64> = bs.iter().map(|b| b.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|x| x.ln()).collect();
    let slope = linear_fit(&lx, &ly).1;
    pass &= slope < 1.0;
    let scan: Vec<String> = rows.iter().map(|(b, g, n)| format!("b={b}: gamma {g:.3}, n {n}")).collect();
    outcome(pass, format!("{}; resolvent norms {norms:.3?}, slope {slope:.3}", scan.join(", ")))
}

fn correlation_decay() -> Outcome {
    let t: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
    let s = Suspension::new(&MapSpec::doubling(), &Roof::one_plus_x_sq(), 4096).unwrap();
    let (v, w) = phase_observables(&s);
    let r = s.correlation(&v, &w, &t, 1_000_000, SEED).unwrap();
    let f = r.fit.clone().unwrap();
    let c = Suspension::new(&MapSpec::doubling(), &Roof::constant(1.0), 4096).unwrap();
    let (vc, wc) = phase_observables(&c);
    let rc = c.correlation(&vc, &wc, &t, 1_000_000, SEED).unwrap();
    let fc = rc.fit.clone().unwrap();
    let pass = f.a1 > 0.0 && f.a1_ci.0 > 0.0 && !fc.decays();
    outcome(
        pass,
        format!(
            "a1 {:.3} CI ({:.3}, {:.3}); control a1 {:.3} CI ({:.3}, {:.3}), curvature {:.2}, decays {}",
            f.a1, f.a1_ci.0, f.a1_ci.1, fc.a1, fc.a1_ci.0, fc.a1_ci.1, fc.curvature, fc.decays()
        ),
    )
}

fn appendix() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, s) in setups() {
        let c9 = s.ledger.c9.value;
        pass &= c9 > 0.0;
        let eta = match &s.ledger.eta1 {
            Some(e) => {
                pass &= e.validated && e.validation_samples == 50;
                format!("eta1 {:.3} (fresh min {:.3})", e.eta1, e.validation_min_ratio)
            }
            None => "eta1 not computed".to_string(),
        };
        let pm = match preimage_mass_check(s, 100, 2048, SEED) {
            Ok(r) => {
                pass &= r.violations == 0 && r.instances == 100;
                format!("preimage mass {} violations, min ratio {:.2}", r.violations, r.min_ratio)
            }
            Err(e) => format!("preimage mass skipped: {e}"),
        };
        parts.push(format!("{name}: C9 {c9:.3}, {eta}, {pm}"));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let criteria: [(u32, Option<u64>, fn() -> Outcome); 11] = [
        (1, Some(60), eigen_equation),
        (2, None, seminorm_equivalence),
        (3, Some(120), lasota_yorke),
        (4, None, branch_weights),
        (5, None, uni_detection),
        (6, None, cancellation),
        (7, None, cone_invariance),
        (8, Some(300), l2_decay_check),
        (9, Some(600), contraction),
        (10, Some(300), correlation_decay),
        (11, None, appendix),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, limit, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if let Some(l) = limit {
            if took > Duration::from_secs(l) {
                o.pass = false;
                o.detail.push_str(&format!("; over the {l} s budget"));
            }
        }
        println!("criterion {id:>2} {} ({:.1} s): {}", if o.pass { "PASS" } else { "FAIL" }, took.as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
