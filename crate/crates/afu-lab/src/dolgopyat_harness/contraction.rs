use super::cancellation::{build_cancellation, check_mass_split, Chi, MassReport};
use super::ledger::Setup;
use crate::bv_space::{random_family, ConePair, GridFunction};
use crate::interval_map::{DiscontinuityCatalog, MapSpec, Roof};
use crate::operator_core::{normalized_apply, NormalizedUlam, SpectralData, TwistParam, UlamOperator};
use crate::quad::linear_fit;
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Random steps anchored at shallow catalog points, smooth and sawtooth
/// functions, the constant 1, and a ladder of real sawtooths with periods 16, 32, ..., N/8.
pub fn ly_test_family(seed: u64, count: usize, grid: usize, map: &MapSpec, catalog: &DiscontinuityCatalog) -> Vec<GridFunction> {
    let (lo, hi) = (map.y_lo, map.y_hi);
    let anchors: Vec<f64> = (1..=3.min(catalog.j_max())).flat_map(|j| catalog.points(j).to_vec()).collect();
    let mut fam = random_family(seed, count, grid, lo, hi, &anchors, true);
    fam.push(GridFunction::constant(grid, lo, hi, C64::new(1.0, 0.0)));
    fam.extend(sawtooth_ladder(grid, lo, hi));
    fam
}

fn sawtooth_ladder(grid: usize, lo: f64, hi: f64) -> Vec<GridFunction> {
    let mut out = Vec::new();
    let mut p = 16usize;
    while p <= grid / 8 {
        let periods = p as f64;
        out.push(GridFunction::from_real(grid, lo, hi, |x| {
            let t = (x - lo) / (hi - lo) * periods;
            2.0 * (t - t.floor()) - 1.0
        }));
        p *= 2;
    }
    out
}

fn is_ladder(v: &GridFunction) -> bool {
    v.is_real() && v.var() > 16.0
}

struct LyPoint {
    x: f64,
    z: f64,
    /// Λ^{nk}(‖v‖∞‖v‖₁)^{1/2}
    w: f64,
    ladder: bool,
}

fn ly_points(op: &NormalizedUlam, spec: &SpectralData, steps: usize, family: &[GridFunction]) -> Vec<LyPoint> {
    let big = spec.big_lambda.powi(steps as i32);
    family
        .par_iter()
        .map(|v| {
            let v = op.op.resample(v);
            let out = op.apply_n(&v.values, steps);
            let z = GridFunction::new(v.y_lo, v.y_hi, out).var();
            LyPoint { x: v.var(), z, w: big * (v.linf() * v.l1()).sqrt(), ladder: is_ladder(&v) }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyReport {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    /// fitted contraction factor a in Var L̃^{nk}v ≤ a Var v + remainder
    pub a_fit: f64,
    /// ρ^{-nk}
    pub rho_factor: f64,
    /// (b, sup_v (Var L̃^{nk}v − a Var v)₊ / (Λ^{nk}(‖v‖∞‖v‖₁)^{1/2}))
    pub remainders: Vec<(f64, f64)>,
    /// slope of log remainder against log(1+|b|)
    pub slope: f64,
    pub family: usize,
    pub grid: usize,
}

/// Lasota–Yorke measurement for L̃_s^{nk} with X = Var v, Z = Var L̃^{nk}v and
/// W = Λ^{nk}(‖v‖∞‖v‖₁)^{1/2}: a is the intercept of the ladder regression
/// Z/X = a + c(1+|b|)W/X (largest over b), and the remainder at each b is
/// sup_v (Z − aX)₊/W.
pub fn ly_measure(
    map: &MapSpec,
    roof: &Roof,
    spec: &SpectralData,
    k: usize,
    n: usize,
    family: &[GridFunction],
    bs: &[f64],
) -> Result<LyReport> {
    let grid = family.first().map(|v| v.n()).ok_or_else(|| Error::InvalidParams("empty test family".into()))?;
    let steps = n * k;
    let mut per_b = Vec::new();
    for &b in bs {
        let op = NormalizedUlam::new(map, roof, spec, b, grid)?;
        per_b.push((b, ly_points(&op, spec, steps, family)));
    }
    // intercept of the ladder regression at each b; the largest one is kept so
    // that the remainder does not absorb contraction the fit missed at small |b|
    let mut a_fit = f64::NEG_INFINITY;
    for (b, pts) in &per_b {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            pts.iter().filter(|p| p.ladder && p.x > 0.0).map(|p| ((1.0 + b.abs()) * p.w / p.x, p.z / p.x)).unzip();
        if xs.len() >= 2 {
            a_fit = a_fit.max(linear_fit(&xs, &ys).0);
        }
    }
    if !a_fit.is_finite() {
        return Err(Error::InvalidParams("test family has fewer than two ladder functions".into()));
    }
    let remainders: Vec<(f64, f64)> = per_b
        .iter()
        .map(|(b, pts)| {
            let r = pts.iter().filter(|p| p.w > 0.0).map(|p| (p.z - a_fit * p.x).max(0.0) / p.w).fold(0.0, f64::max);
            (*b, r)
        })
        .collect();
    let lx: Vec<f64> = remainders.iter().map(|r| (1.0 + r.0.abs()).ln()).collect();
    let ly: Vec<f64> = remainders.iter().map(|r| r.1.max(1e-300).ln()).collect();
    let slope = if lx.len() >= 2 { linear_fit(&lx, &ly).1 } else { f64::NAN };
    Ok(LyReport {
        n,
        k,
        sigma: spec.sigma,
        a_fit,
        rho_factor: f64::NAN,
        remainders,
        slope,
        family: family.len(),
        grid,
    })
}

/// LY test at σ with the ledger's k for the LY inequality.
pub fn verify_ly(setup: &Setup, sigma: f64, n: usize, bs: &[f64], family: &[GridFunction]) -> Result<LyReport> {
    let spec = setup.spectral_at(sigma)?;
    let mut rep = ly_measure(&setup.map, &setup.roof, &spec, setup.ledger.k_ly, n, family, bs)?;
    rep.rho_factor = setup.ledger.geometry.rho.powi(-((n * setup.ledger.k_ly) as i32));
    Ok(rep)
}

/// Measured LY remainder constant c: sup_b remainder/(1+|b|) at n = 1.
pub fn ly_remainder_constant(map: &MapSpec, roof: &Roof, spec: &SpectralData, k: usize, family: &[GridFunction], bs: &[f64]) -> Result<f64> {
    let rep = ly_measure(map, roof, spec, k, 1, family, bs)?;
    Ok(rep.remainders.iter().map(|(b, r)| r / (1.0 + b.abs())).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L2Step {
    pub m: usize,
    /// ∫|v_m|², normalized by m = 0
    pub v_l2: f64,
    /// ∫u_m², normalized by m = 0
    pub u_l2: f64,
    pub domination_violation: f64,
    pub typed_intervals: usize,
    pub unfilled: usize,
    pub mass: MassReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L2Report {
    pub b: f64,
    pub sigma: f64,
    pub m_max: usize,
    pub n0: usize,
    /// max over the family of exp(slope of log ∫|v_m|² in m)
    pub beta: f64,
    pub beta_u: f64,
    pub uni_failed: bool,
    /// table for the function attaining β
    pub steps: Vec<L2Step>,
    pub max_domination_violation: f64,
    pub mass_violations: usize,
    pub family: usize,
}

fn fit_rate(vals: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..vals.len()).map(|m| m as f64).collect();
    let ys: Vec<f64> = vals.iter().map(|v| v.max(1e-300).ln()).collect();
    linear_fit(&xs, &ys).1.exp()
}

/// Iterates (u, v) ↦ (L̃_σ^{n₀}(χu), L̃_s^{n₀}v) from u₀ = ‖v‖∞ for m ≤ m_max
/// and fits the per-step L² rate. χ ≡ 1 when UNI fails.
pub fn l2_decay(setup: &Setup, s: TwistParam, m_max: usize, family: &[GridFunction]) -> Result<L2Report> {
    let spec = setup.spectral_at(s.sigma)?;
    let spec2 = if s.sigma == 0.0 { None } else { setup.spectral.iter().find(|x| (x.sigma - 2.0 * s.sigma).abs() < 1e-15).cloned() };
    let uni_failed = !setup.ledger.uni_holds();
    let n0 = setup.n0();
    let budget = setup.cfg.enum_budget;
    let mut best: Option<(f64, Vec<L2Step>)> = None;
    let mut beta_u = 0.0f64;
    let mut max_viol = 0.0f64;
    let mut mass_viol = 0;
    for v0 in family {
        let (lo, hi) = (v0.y_lo, v0.y_hi);
        let at: Vec<f64> = (0..v0.n()).map(|i| v0.center(i)).collect();
        let mut pair = ConePair { u: GridFunction::constant(v0.n(), lo, hi, C64::new(v0.linf(), 0.0)), v: v0.clone(), b: s.b };
        let (v_ref, u_ref) = (pair.v.l2sq(), pair.u.l2sq());
        let mut steps = vec![L2Step {
            m: 0,
            v_l2: 1.0,
            u_l2: 1.0,
            domination_violation: 0.0,
            typed_intervals: 0,
            unfilled: 0,
            mass: MassReport::default(),
        }];
        for m in 1..=m_max {
            let (chi, typed, unfilled, layout) = if uni_failed {
                (Chi::one(), 0, 0, None)
            } else {
                let l = build_cancellation(setup, &pair, &spec, s)?;
                (l.chi.clone(), l.typed_count(), l.unfilled(), Some(l))
            };
            let (u, v) = (&pair.u, &pair.v);
            let map = &setup.map;
            let mass = match (&layout, &spec2) {
                (Some(l), Some(sp2)) => {
                    let w = normalized_apply(map, &setup.roof, sp2, TwistParam::real(sp2.sigma), n0, &|y| C64::new(u.eval(y).re.powi(2), 0.0), &at, budget)?;
                    check_mass_split(setup, l, &GridFunction::new(lo, hi, w))
                }
                (Some(l), None) if s.sigma == 0.0 => {
                    let w = normalized_apply(map, &setup.roof, &spec, TwistParam::real(0.0), n0, &|y| C64::new(u.eval(y).re.powi(2), 0.0), &at, budget)?;
                    check_mass_split(setup, l, &GridFunction::new(lo, hi, w))
                }
                _ => MassReport::default(),
            };
            let vn = normalized_apply(map, &setup.roof, &spec, s, n0, &|y| v.eval(y), &at, budget)?;
            let un = normalized_apply(
                map,
                &setup.roof,
                &spec,
                TwistParam::real(s.sigma),
                n0,
                &|y| C64::new(chi.eval(map, y) * u.eval(y).re, 0.0),
                &at,
                budget,
            )?;
            let viol = vn.iter().zip(&un).map(|(a, b)| a.norm() - b.re).fold(0.0, f64::max);
            pair = ConePair { u: GridFunction::new(lo, hi, un), v: GridFunction::new(lo, hi, vn), b: s.b };
            max_viol = max_viol.max(viol);
            mass_viol += mass.violations;
            steps.push(L2Step {
                m,
                v_l2: pair.v.l2sq() / v_ref,
                u_l2: pair.u.l2sq() / u_ref,
                domination_violation: viol,
                typed_intervals: typed,
                unfilled,
                mass,
            });
        }
        let beta = fit_rate(&steps.iter().map(|x| x.v_l2).collect::<Vec<_>>());
        beta_u = beta_u.max(fit_rate(&steps.iter().map(|x| x.u_l2).collect::<Vec<_>>()));
        if best.as_ref().map_or(true, |b| beta > b.0) {
            best = Some((beta, steps));
        }
    }
    let (beta, steps) = best.ok_or_else(|| Error::InvalidParams("empty test family".into()))?;
    Ok(L2Report {
        b: s.b,
        sigma: s.sigma,
        m_max,
        n0,
        beta,
        beta_u,
        uni_failed,
        steps,
        max_domination_violation: max_viol,
        mass_violations: mass_viol,
        family: family.len(),
    })
}

/// L² decay, refusing maps where UNI fails.
pub fn l2_contraction(setup: &Setup, s: TwistParam, m_max: usize, family: &[GridFunction]) -> Result<L2Report> {
    if !setup.ledger.uni_holds() {
        return Err(Error::UniFailure { d_best: setup.ledger.working.d });
    }
    l2_decay(setup, s, m_max, family)
}

/// Default L² family: v ≡ 1 and smooth complex functions.
pub fn l2_family(setup: &Setup, count: usize, grid: usize) -> Vec<GridFunction> {
    let (lo, hi) = (setup.map.y_lo, setup.map.y_hi);
    let mut fam = vec![GridFunction::constant(grid, lo, hi, C64::new(1.0, 0.0))];
    fam.extend(
        random_family(setup.cfg.seed ^ 0x12, 4 * count, grid, lo, hi, &[], true)
            .into_iter()
            .skip(1)
            .step_by(4)
            .take(count),
    );
    fam
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HClass {
    pub m: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Hypothesis H_{σ,m}: Var v ≤ C₁₁ b² ρ^{mn₀}‖v‖₁, with v replaced by
/// e^{σφ_{mn₀}}v when σ < 0.
pub fn classify_h(setup: &Setup, v: &GridFunction, s: TwistParam, m: usize) -> HClass {
    let n0 = setup.n0();
    let steps = m * n0;
    let w = if s.sigma < 0.0 {
        let map = &setup.map;
        let vals = (0..v.n())
            .map(|i| {
                let mut x = v.center(i);
                let mut phi = 0.0;
                for _ in 0..steps {
                    phi += map.roof_sum(&setup.roof, x);
                    match map.apply(x) {
                        Some(y) => x = y,
                        None => break,
                    }
                }
                v.values[i] * (s.sigma * phi).exp()
            })
            .collect();
        GridFunction::new(v.y_lo, v.y_hi, vals)
    } else {
        v.clone()
    };
    let l = &setup.ledger;
    let lhs = w.var();
    let rhs = l.c11 * s.b * s.b * l.geometry.rho.powi(steps as i32) * v.l1();
    HClass { m, lhs, rhs, holds: lhs <= rhs }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchedulePass {
    pub m: usize,
    pub h_holds: bool,
    pub applied: usize,
    pub remaining_after: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub n: usize,
    pub threshold: f64,
    pub passes: Vec<SchedulePass>,
    pub final_steps: usize,
    /// every pass that did not end the schedule satisfied r' ≤ (2/3)r + n₀
    pub shrink_ok: bool,
}

/// Block schedule: with r steps left, m is maximal with 3mn₀ ≤ r. Stop when
/// 3mn₀ < threshold. If H_m holds apply 3mn₀ steps and finish, else apply mn₀
/// and repeat. The remainder is applied at the end.
pub fn run_schedule(
    n: usize,
    n0: usize,
    threshold: f64,
    mut step: impl FnMut(usize),
    mut h: impl FnMut(usize) -> bool,
) -> ScheduleTrace {
    let mut r = n;
    let mut passes = Vec::new();
    let mut shrink_ok = true;
    loop {
        let m = r / (3 * n0);
        if m == 0 || ((3 * m * n0) as f64) < threshold {
            break;
        }
        if h(m) {
            step(3 * m * n0);
            r -= 3 * m * n0;
            passes.push(SchedulePass { m, h_holds: true, applied: 3 * m * n0, remaining_after: r });
            break;
        }
        step(m * n0);
        let next = r - m * n0;
        shrink_ok &= next as f64 <= 2.0 / 3.0 * r as f64 + n0 as f64;
        r = next;
        passes.push(SchedulePass { m, h_holds: false, applied: m * n0, remaining_after: r });
    }
    step(r);
    ScheduleTrace { n, threshold, passes, final_steps: r, shrink_ok }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    pub b: f64,
    pub sigma: f64,
    pub a: f64,
    pub beta: f64,
    pub n_min: usize,
    /// (n, sup_v ‖L̃^n v‖_b/‖v‖_b)
    pub ratios: Vec<(usize, f64)>,
    /// per-step rate exp(slope of log ratio in n)
    pub gamma_fit: f64,
    /// Λ^{n₀}ρ^{-n₀/2}
    pub gamma2: f64,
    /// sup_v ‖L_s^n v‖_b / (λ^n‖v‖_b) at the last n, unnormalized operator
    pub unnormalized_ratio: f64,
    pub k2: f64,
    pub uni_failed: bool,
    pub schedule: Option<ScheduleTrace>,
    pub family: usize,
    pub grid: usize,
}

/// Contraction of L̃_s^n in ‖·‖_b for n from n_min(b) over 8 blocks of n₀.
/// `beta` is the L² rate at this b; when UNI fails or β ≥ 1 a fallback
/// n_min = 8n₀⌈ln(1+|b|)⌉ is used and the report is tagged.
pub fn contraction_scan(setup: &Setup, s: TwistParam, beta: Option<f64>, family: &[GridFunction], grid: usize) -> Result<ScanReport> {
    let l = &setup.ledger;
    let w = &l.working;
    let uni_failed = !setup.ledger.uni_holds();
    let b = s.b.abs();
    let floor = if uni_failed { 2.0 } else { (4.0 * std::f64::consts::PI / w.d).max(2.0) };
    if b < floor {
        return Err(Error::Hypothesis(format!("|b| = {b} below max(4 pi/D, 2) = {floor}")));
    }
    let spec = setup.spectral_at(s.sigma)?;
    let op = NormalizedUlam::new(&setup.map, &setup.roof, &spec, s.b, grid)?;
    let n0 = setup.n0();
    let big = spec.big_lambda;
    let rho = l.geometry.rho;
    let fam: Vec<GridFunction> = family.iter().map(|v| op.op.resample(v)).collect();
    let norms0: Vec<f64> = fam.iter().map(|v| v.b_norm(s.b)).collect();
    let beta = beta.unwrap_or(f64::NAN);
    let q = (big.powi(2 * n0 as i32) / rho).max(big.powi(n0 as i32) * beta.sqrt());
    let a = 6.0 * (2.0 * l.c10 + l.c_ly).ln() / -q.ln();
    let fallback = uni_failed || !(q < 1.0);
    let n_min = if fallback {
        8 * n0 * (1.0 + b).ln().ceil() as usize
    } else {
        let mut a_prime = 0.0f64;
        let mut cur = fam.iter().map(|v| v.values.clone()).collect::<Vec<_>>();
        for _ in 1..=8 {
            cur = cur.par_iter().map(|x| op.apply_n(x, 1)).collect();
            for (x, n) in cur.iter().zip(&norms0) {
                a_prime = a_prime.max(GridFunction::new(op.op.y_lo, op.op.y_hi, x.clone()).b_norm(s.b) / n / (1.0 + b));
            }
        }
        let t1 = a / n0 as f64 * (1.0 + b).ln();
        let t2 = (spec.ratio() * a_prime * (1.0 + b) / big).ln();
        (2.0 * t1.max(t2)).ceil().max(1.0) as usize
    };
    let mut ratios = Vec::new();
    let mut cur: Vec<Vec<C64>> = fam.par_iter().map(|v| op.apply_n(&v.values, n_min)).collect();
    for j in 0..=8 {
        if j > 0 {
            cur = cur.par_iter().map(|x| op.apply_n(x, n0)).collect();
        }
        let r = cur
            .iter()
            .zip(&norms0)
            .map(|(x, n)| GridFunction::new(op.op.y_lo, op.op.y_hi, x.clone()).b_norm(s.b) / n)
            .fold(0.0, f64::max);
        ratios.push((n_min + j * n0, r));
    }
    let xs: Vec<f64> = ratios.iter().map(|r| r.0 as f64).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.1.max(1e-300).ln()).collect();
    let gamma_fit = linear_fit(&xs, &ys).1.exp();

    let n_last = n_min + 8 * n0;
    let raw = UlamOperator::assemble(&setup.map, &setup.roof, s, grid)?;
    let lam = spec.lambda_ulam.powi(n_last as i32);
    let unnormalized_ratio = fam
        .par_iter()
        .zip(&norms0)
        .map(|(v, n)| GridFunction::new(raw.y_lo, raw.y_hi, raw.apply_n(&v.values, n_last)).b_norm(s.b) / (lam * n))
        .reduce(|| 0.0, f64::max);

    let schedule = fam.first().map(|v0| {
        let mut v = v0.clone();
        let thresh = if fallback { 0.0 } else { a * (1.0 + b).ln() };
        let cell = std::cell::RefCell::new(&mut v);
        run_schedule(
            n_min,
            n0,
            thresh,
            |k| {
                let mut g = cell.borrow_mut();
                let out = op.apply_n(&g.values, k);
                g.values = out;
            },
            |m| classify_h(setup, &cell.borrow(), s, m).holds,
        )
    });

    Ok(ScanReport {
        b: s.b,
        sigma: s.sigma,
        a,
        beta,
        n_min,
        ratios,
        gamma_fit,
        gamma2: big.powi(n0 as i32) * rho.powf(-(n0 as f64) / 2.0),
        unnormalized_ratio,
        k2: l.k2,
        uni_failed: fallback,
        schedule,
        family: fam.len(),
        grid,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventReport {
    pub b: f64,
    pub sigma: f64,
    pub grid: usize,
    /// sup over the family of ‖w‖_b/‖v‖_b with (I − L_s)w = v
    pub norm: f64,
    pub max_iterations: usize,
    pub max_residual: f64,
}

/// Restarted GMRES for A x = rhs. Returns (x, relative residual, iterations, converged).
pub fn gmres(
    apply: impl Fn(&[C64]) -> Vec<C64>,
    rhs: &[C64],
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> (Vec<C64>, f64, usize, bool) {
    let n = rhs.len();
    let dot = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>();
    let nrm = |a: &[C64]| a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let bnorm = nrm(rhs).max(1e-300);
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<C64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = nrm(&r);
        if beta / bnorm <= tol {
            return (x, beta / bnorm, iters, true);
        }
        if iters >= max_iter {
            return (x, beta / bnorm, iters, false);
        }
        let mut vs: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hmat = vec![vec![C64::new(0.0, 0.0); restart]; restart + 1];
        let mut cs = vec![C64::new(0.0, 0.0); restart];
        let mut sn = vec![C64::new(0.0, 0.0); restart];
        let mut g = vec![C64::new(0.0, 0.0); restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..restart {
            let mut w = apply(&vs[j]);
            for i in 0..=j {
                let hij = dot(&vs[i], &w);
                hmat[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&vs[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = nrm(&w);
            hmat[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * hmat[i][j] + sn[i].conj() * hmat[i + 1][j];
                hmat[i + 1][j] = -sn[i] * hmat[i][j] + cs[i] * hmat[i + 1][j];
                hmat[i][j] = t;
            }
            let (a, bb) = (hmat[j][j], hmat[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = C64::new(0.0, 0.0);
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            hmat[j][j] = C64::new(den, 0.0);
            hmat[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            iters += 1;
            k_used = j + 1;
            if g[j + 1].norm() / bnorm <= tol || hn == 0.0 || iters >= max_iter {
                break;
            }
            vs.push(w.iter().map(|z| z / hn).collect());
        }
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for l in (i + 1)..k_used {
                acc -= hmat[i][l] * y[l];
            }
            y[i] = acc / hmat[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&vs[i]) {
                *xk += yi * vk;
            }
        }
    }
}

/// sup_v ‖(I − L_s)^{-1}v‖_b/‖v‖_b for the Ulam discretization of one step of F.
pub fn resolvent_norm(setup: &Setup, s: TwistParam, family: &[GridFunction], grid: usize) -> Result<ResolventReport> {
    let op = UlamOperator::assemble(&setup.map, &setup.roof, s, grid)?;
    let apply = |x: &[C64]| -> Vec<C64> {
        let lx = op.apply_n(x, 1);
        x.iter().zip(lx).map(|(a, b)| a - b).collect()
    };
    let results: Vec<Result<(f64, usize, f64)>> = family
        .par_iter()
        .map(|v| {
            let v = op.resample(v);
            let (w, res, it, ok) = gmres(&apply, &v.values, 50, 1e-10, 4000);
            if !ok {
                let w = GridFunction::new(op.y_lo, op.y_hi, w);
                return Err(Error::NearSingular { residual: res, iterations: it, estimate: w.linf() / v.linf().max(1e-300) });
            }
            let wn = GridFunction::new(op.y_lo, op.y_hi, w).b_norm(s.b);
            Ok((wn / v.b_norm(s.b), it, res))
        })
        .collect();
    let mut rep = ResolventReport { b: s.b, sigma: s.sigma, grid, norm: 0.0, max_iterations: 0, max_residual: 0.0 };
    for r in results {
        let (n, it, res) = r?;
        rep.norm = rep.norm.max(n);
        rep.max_iterations = rep.max_iterations.max(it);
        rep.max_residual = rep.max_residual.max(res);
    }
    Ok(rep)
}
