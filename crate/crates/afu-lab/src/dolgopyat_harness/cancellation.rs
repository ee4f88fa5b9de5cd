use super::ledger::Setup;
use super::uni::UniAtom;
use super::eta0;
use crate::bv_space::{cone_check, ConePair, ConeParams, ConeReport, GridFunction, Jump};
use crate::interval_map::{MapSpec, Roof};
use crate::operator_core::{normalized_apply, SpectralData, TwistParam};
use crate::{Error, Result, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Value and y-slope of the damping ramp on a typed interval [lo, hi]:
/// 1 outside, η on the middle third, C¹ piecewise-quadratic on the outer thirds.
pub fn ramp(y: f64, lo: f64, hi: f64, eta: f64) -> (f64, f64) {
    if y <= lo || y >= hi {
        return (1.0, 0.0);
    }
    let l = (hi - lo) / 3.0;
    let (t, sign) = if y < lo + l {
        ((y - lo) / l, -1.0)
    } else if y > hi - l {
        ((hi - y) / l, 1.0)
    } else {
        return (eta, 0.0);
    };
    let (s, ds) = if t < 0.5 { (2.0 * t * t, 4.0 * t) } else { (1.0 - 2.0 * (1.0 - t) * (1.0 - t), 4.0 * (1.0 - t)) };
    (1.0 - (1.0 - eta) * s, sign * (1.0 - eta) * ds / l)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChiPiece {
    x_lo: f64,
    x_hi: f64,
    word: Vec<usize>,
    y_lo: f64,
    y_hi: f64,
}

/// χ: Y → [η, 1], equal to the ramp of a typed interval I on h_m(I) and 1 elsewhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chi {
    pub eta: f64,
    pieces: Vec<ChiPiece>,
}

impl Chi {
    pub fn one() -> Chi {
        Chi { eta: 1.0, pieces: Vec::new() }
    }

    pub fn pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn eval(&self, map: &MapSpec, x: f64) -> f64 {
        let i = self.pieces.partition_point(|p| p.x_lo <= x);
        if i == 0 {
            return 1.0;
        }
        let p = &self.pieces[i - 1];
        if x > p.x_hi {
            return 1.0;
        }
        let y = map.forward_word(&p.word, x).0;
        ramp(y, p.y_lo, p.y_hi, self.eta).0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypedInterval {
    pub lo: f64,
    pub hi: f64,
    /// 1 or 2: which branch of the UNI pair is damped
    pub branch: u8,
    /// 1: small-modulus case; 2: found by the phase search
    pub case: u8,
    pub phase_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomLayout {
    pub lo: f64,
    pub hi: f64,
    pub intervals: Vec<TypedInterval>,
    pub gaps: Vec<(f64, f64)>,
    pub hat_i: Vec<(f64, f64)>,
    pub hat_j: Vec<(f64, f64)>,
    /// windows where no type could be verified
    pub unfilled: usize,
    pub min_thirds_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CancellationLayout {
    pub b: f64,
    pub sigma: f64,
    pub eta: f64,
    pub delta: f64,
    pub big_delta: f64,
    pub delta_p: f64,
    pub atoms: Vec<AtomLayout>,
    pub chi: Chi,
    /// measured sup |χ′|
    pub chi_slope: f64,
    /// 3(1−η)|b|/(δP)
    pub chi_slope_bound: f64,
    pub case1: usize,
    pub case2: usize,
    /// worst over full-length phase windows of the best |θ − π| on the net
    pub worst_phase_error: f64,
    pub max_gap: f64,
    pub gap_bound: f64,
    pub thirds_ok: bool,
}

impl CancellationLayout {
    pub fn typed_count(&self) -> usize {
        self.atoms.iter().map(|a| a.intervals.len()).sum()
    }

    pub fn unfilled(&self) -> usize {
        self.atoms.iter().map(|a| a.unfilled).sum()
    }
}

struct Amp<'a> {
    map: &'a MapSpec,
    roof: &'a Roof,
    f: &'a GridFunction,
    u: &'a GridFunction,
    v: &'a GridFunction,
    s: C64,
    sigma: f64,
}

impl Amp<'_> {
    /// (A_{s,h}(f v)(y), A_{σ,h}(f u)(y))
    fn at(&self, h: &crate::interval_map::InverseBranch, y: f64) -> (C64, f64) {
        let e = self.map.eval_inverse(h, y, Some(self.roof));
        let w = e.deriv * self.f.eval(e.y).re;
        ((self.s * e.phi).exp() * w * self.v.eval(e.y), (self.sigma * e.phi).exp() * w * self.u.eval(e.y).re)
    }

    fn type_holds(&self, a: &UniAtom, y: f64, m: u8) -> bool {
        let (s1, u1) = self.at(&a.h1, y);
        let (s2, u2) = self.at(&a.h2, y);
        let lhs = (s1 + s2).norm();
        let rhs = if m == 1 { eta0() * u1 + u2 } else { u1 + eta0() * u2 };
        lhs <= rhs
    }

    fn verify(&self, a: &UniAtom, lo: f64, hi: f64, m: u8, grid: &GridFunction) -> bool {
        let (i0, i1) = grid.cells_meeting(lo, hi);
        let centers = (i0..i1).map(|i| grid.center(i)).filter(|&c| c >= lo && c <= hi);
        let extra = (0..=16).map(|t| lo + (hi - lo) * t as f64 / 16.0);
        centers.chain(extra).all(|y| self.type_holds(a, y, m))
    }

    fn phase(&self, a: &UniAtom, y: f64) -> f64 {
        let (s1, _) = self.at(&a.h1, y);
        let (s2, _) = self.at(&a.h2, y);
        if s1.norm() == 0.0 || s2.norm() == 0.0 {
            return PI;
        }
        ((s1.arg() - s2.arg()).rem_euclid(TAU) - PI).abs()
    }
}

/// Builds the typed intervals on every atom of the working UNI pairs and the
/// damping function χ. Types are accepted only after the type inequality is
/// checked at every grid point of the interval.
pub fn build_cancellation(setup: &Setup, pair: &ConePair, spec: &SpectralData, s: TwistParam) -> Result<CancellationLayout> {
    let w = &setup.ledger.working;
    if !(w.d > 0.0) {
        return Err(Error::UniFailure { d_best: w.d });
    }
    let b = s.b.abs();
    if !(b > 2.0 * w.big_delta) {
        return Err(Error::Hypothesis(format!("|b| = {b} must exceed 2*Delta = {}", 2.0 * w.big_delta)));
    }
    if (spec.sigma - s.sigma).abs() > 1e-15 {
        return Err(Error::InvalidParams("spectral data does not match sigma".into()));
    }
    let amp = Amp {
        map: &setup.map,
        roof: &setup.roof,
        f: &spec.f,
        u: &pair.u,
        v: &pair.v,
        s: s.s(),
        sigma: s.sigma,
    };
    let width = 2.0 * w.delta / b;
    let gap_min = width / 8.0;
    let window = w.big_delta / b;
    let (mut case1, mut case2) = (0, 0);
    let mut worst_phase = 0.0f64;
    let mut atoms = Vec::new();
    let mut pieces = Vec::new();
    for a in &w.atoms {
        let mut intervals: Vec<TypedInterval> = Vec::new();
        let mut unfilled = 0;
        let mut c = a.lo;
        loop {
            let y0 = c + gap_min + width / 2.0;
            if y0 + width / 2.0 > a.hi {
                break;
            }
            let wend = (y0 + window).min(a.hi - width / 2.0);
            let mut found: Option<TypedInterval> = None;
            // Case 1: a branch with small modulus somewhere on the ball
            let ball: Vec<f64> = (0..=16).map(|t| y0 - width / 2.0 + width * t as f64 / 16.0).collect();
            for m in [1u8, 2] {
                let h = if m == 1 { &a.h1 } else { &a.h2 };
                let (mut inf_v, mut sup_u) = (f64::INFINITY, 0.0f64);
                for &y in &ball {
                    let e = setup.map.eval_inverse(h, y, None);
                    inf_v = inf_v.min(pair.v.eval(e.y).norm());
                    sup_u = sup_u.max(pair.u.eval(e.y).re);
                }
                if inf_v <= 0.5 * sup_u {
                    for mm in [m, 3 - m] {
                        if amp.verify(a, y0 - width / 2.0, y0 + width / 2.0, mm, &pair.u) {
                            found = Some(TypedInterval {
                                lo: y0 - width / 2.0,
                                hi: y0 + width / 2.0,
                                branch: mm,
                                case: 1,
                                phase_error: None,
                            });
                            break;
                        }
                    }
                }
                if found.is_some() {
                    break;
                }
            }
            if found.is_some() {
                case1 += 1;
            } else {
                // Case 2: phase search on a 256-point net of the window
                let mut net: Vec<(f64, f64)> = (0..256)
                    .map(|t| {
                        let y = y0 + (wend - y0) * t as f64 / 255.0;
                        (y, amp.phase(a, y))
                    })
                    .collect();
                net.sort_by(|p, q| p.1.total_cmp(&q.1));
                // clipped windows at the end of an atom need not cover a full phase turn
                if wend - y0 >= 0.999 * window {
                    worst_phase = worst_phase.max(net[0].1);
                }
                'search: for &(y1, err) in net.iter().take(16) {
                    for m in [1u8, 2] {
                        if amp.verify(a, y1 - width / 2.0, y1 + width / 2.0, m, &pair.u) {
                            found = Some(TypedInterval {
                                lo: y1 - width / 2.0,
                                hi: y1 + width / 2.0,
                                branch: m,
                                case: 2,
                                phase_error: Some(err),
                            });
                            break 'search;
                        }
                    }
                }
                if found.is_some() {
                    case2 += 1;
                }
            }
            match found {
                Some(t) => {
                    c = t.hi;
                    intervals.push(t);
                }
                None => {
                    unfilled += 1;
                    c += window;
                }
            }
        }
        for t in &intervals {
            let h = if t.branch == 1 { &a.h1 } else { &a.h2 };
            let p = setup.map.eval_inverse(h, t.lo, None).y;
            let q = setup.map.eval_inverse(h, t.hi, None).y;
            pieces.push(ChiPiece { x_lo: p.min(q), x_hi: p.max(q), word: h.word.clone(), y_lo: t.lo, y_hi: t.hi });
        }
        atoms.push(atom_layout(a, intervals, unfilled, w.delta_p));
    }
    pieces.sort_by(|p, q| p.x_lo.total_cmp(&q.x_lo));
    let chi = Chi { eta: w.eta, pieces };
    let chi_slope = chi_slope(setup, &chi);
    let max_gap = atoms.iter().flat_map(|a| a.gaps.iter().map(|g| g.1 - g.0)).fold(0.0, f64::max);
    let thirds_ok = atoms.iter().all(|a| a.min_thirds_ratio >= w.delta_p);
    Ok(CancellationLayout {
        b: s.b,
        sigma: s.sigma,
        eta: w.eta,
        delta: w.delta,
        big_delta: w.big_delta,
        delta_p: w.delta_p,
        atoms,
        chi,
        chi_slope,
        chi_slope_bound: 3.0 * (1.0 - w.eta) * b / (w.delta * w.p_min),
        case1,
        case2,
        worst_phase_error: worst_phase,
        max_gap,
        gap_bound: 2.0 * w.big_delta / b,
        thirds_ok,
    })
}

fn atom_layout(a: &UniAtom, intervals: Vec<TypedInterval>, unfilled: usize, delta_p: f64) -> AtomLayout {
    let mut gaps = Vec::new();
    let mut hat_i = Vec::new();
    let mut hat_j = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let (mut prev_end, mut prev_third) = (a.lo, a.lo);
    for t in &intervals {
        let l = (t.hi - t.lo) / 3.0;
        gaps.push((prev_end, t.lo));
        let hi_ = (t.lo + l, t.hi - l);
        let hj = (prev_third, t.lo + l);
        min_ratio = min_ratio.min((hi_.1 - hi_.0) / (hj.1 - hj.0));
        hat_i.push(hi_);
        hat_j.push(hj);
        prev_end = t.hi;
        prev_third = t.hi - l;
    }
    gaps.push((prev_end, a.hi));
    hat_j.push((prev_third, a.hi));
    if intervals.is_empty() {
        min_ratio = 0.0;
    }
    let _ = delta_p;
    AtomLayout { lo: a.lo, hi: a.hi, intervals, gaps, hat_i, hat_j, unfilled, min_thirds_ratio: min_ratio }
}

/// sup |dχ/dx| = sup |ramp′(y)| / |h′(y)| over the outer thirds of every typed interval.
fn chi_slope(setup: &Setup, chi: &Chi) -> f64 {
    let mut best = 0.0f64;
    for p in &chi.pieces {
        let h = crate::interval_map::InverseBranch { word: p.word.clone(), domain: (p.y_lo, p.y_hi), range: (p.x_lo, p.x_hi) };
        for t in 0..=96 {
            let y = p.y_lo + (p.y_hi - p.y_lo) * t as f64 / 96.0;
            let (_, slope) = ramp(y, p.y_lo, p.y_hi, chi.eta);
            let d = setup.map.eval_inverse(&h, y, None).deriv;
            best = best.max(slope.abs() / d);
        }
    }
    best
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub max_violation: f64,
    pub worst_x: f64,
    pub points: usize,
    /// min of rhs − lhs over middle thirds of typed intervals (positive = strict slack)
    pub middle_slack: f64,
}

fn centers(g: &GridFunction) -> Vec<f64> {
    (0..g.n()).map(|i| g.center(i)).collect()
}

/// |L̃_s^{n₀}v(y)| ≤ L̃_σ^{n₀}(χu)(y) at every cell center.
pub fn verify_domination(setup: &Setup, pair: &ConePair, chi: &Chi, spec: &SpectralData, s: TwistParam) -> Result<PointwiseReport> {
    let n0 = setup.n0();
    let at = centers(&pair.u);
    let (lhs, rhs) = damped_step(setup, pair, chi, spec, s, n0, &at)?;
    let mut rep = PointwiseReport { max_violation: 0.0, worst_x: f64::NAN, points: at.len(), middle_slack: f64::INFINITY };
    for i in 0..at.len() {
        let d = lhs[i].norm() - rhs[i].re;
        if d > rep.max_violation {
            rep.max_violation = d;
            rep.worst_x = at[i];
        }
    }
    Ok(rep)
}

/// (L̃_s^{n₀} v, L̃_σ^{n₀}(χu)) at the points.
fn damped_step(
    setup: &Setup,
    pair: &ConePair,
    chi: &Chi,
    spec: &SpectralData,
    s: TwistParam,
    n0: usize,
    at: &[f64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    let map = &setup.map;
    let budget = setup.cfg.enum_budget;
    let v = &pair.v;
    let u = &pair.u;
    let lhs = normalized_apply(map, &setup.roof, spec, s, n0, &|y| v.eval(y), at, budget)?;
    let rhs = normalized_apply(
        map,
        &setup.roof,
        spec,
        TwistParam::real(s.sigma),
        n0,
        &|y| C64::new(chi.eval(map, y) * u.eval(y).re, 0.0),
        at,
        budget,
    )?;
    Ok((lhs, rhs))
}

pub fn cone_params(setup: &Setup) -> ConeParams {
    let l = &setup.ledger;
    ConeParams { c7: l.c7, c8: l.c8, c10: l.c10, k: l.k, rho: l.geometry.rho, tol: 1e-6 }
}

/// Random pair in the cone: u = 1 + small smooth, v = r(x)u(x)e^{i(bκg(x)+c)}
/// with Lip(v) ≤ C₁₀|b| inf u / 2. κ is halved until cone_check accepts.
pub fn random_cone_pair<R: Rng>(setup: &Setup, b: f64, n: usize, rng: &mut R) -> Result<ConePair> {
    let (lo, hi) = (setup.map.y_lo, setup.map.y_hi);
    let len = hi - lo;
    let a1 = rng.gen_range(0.0..0.15);
    let a2 = rng.gen_range(0.0..0.15);
    let (p1, p2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
    let r0 = rng.gen_range(0.3..0.7);
    let r1 = rng.gen_range(0.0..0.2);
    let pr = rng.gen_range(0.0..TAU);
    let m = rng.gen_range(1..=3) as f64;
    let pg = rng.gen_range(0.0..TAU);
    let c = rng.gen_range(0.0..TAU);
    let u_fn = move |t: f64| 1.0 + a1 * (TAU * t + p1).sin() + a2 * (2.0 * TAU * t + p2).sin();
    // Lipschitz budget in x: 0.5 C₁₀|b| inf u, inf u ≥ 0.7
    let budget = 0.5 * setup.ledger.c10 * b.abs() * 0.7;
    let fixed = (TAU * r1 * 1.3 + 0.9 * TAU * (a1 + 2.0 * a2)) / len;
    let mut kappa = ((budget - fixed) / (0.9 * 1.3 * b.abs().max(1e-12))).clamp(0.0, 4.0);
    let u = GridFunction::from_real(n, lo, hi, |x| u_fn((x - lo) / len));
    for _ in 0..6 {
        let v = GridFunction::from_fn(n, lo, hi, |x| {
            let t = (x - lo) / len;
            let r = r0 + r1 * (TAU * t + pr).sin();
            let g = (TAU * m * t + pg).sin() / (TAU * m) * len;
            C64::from_polar(r * u_fn(t), b * kappa * g + c)
        });
        let pair = ConePair { u: u.clone(), v, b };
        if cone_check(&pair, &setup.catalog, &cone_params(setup)).in_cone {
            return Ok(pair);
        }
        kappa *= 0.5;
    }
    Err(Error::Hypothesis("could not construct a random pair inside the cone".into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JumpBoundReport {
    pub points: usize,
    pub violations: usize,
    /// max of Size / bound
    pub worst_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct IterateReport {
    pub pair: ConePair,
    pub layout: CancellationLayout,
    pub cone: ConeReport,
    /// sup u/inf u of the input on each atom of P_k
    pub input_ratios: Vec<f64>,
    pub jump_bounds: JumpBoundReport,
    pub domination: PointwiseReport,
}

fn atom_ratios(setup: &Setup, u: &GridFunction) -> Vec<f64> {
    setup
        .atoms()
        .iter()
        .filter_map(|&(lo, hi)| {
            let (i0, i1) = u.cells_inside(lo, hi);
            (i1 > i0).then(|| {
                let vals = &u.values[i0..i1];
                let sup = vals.iter().map(|z| z.re).fold(f64::MIN, f64::max);
                let inf = vals.iter().map(|z| z.re).fold(f64::MAX, f64::min);
                sup / inf
            })
        })
        .collect()
}

/// (u, v) ↦ (L̃_σ^{n₀}(χu), L̃_s^{n₀}v), with the jump catalog carried along,
/// followed by cone_check and the per-point jump bound at catalog points of depth > k.
pub fn iterate_pair(setup: &Setup, pair: &ConePair, spec: &SpectralData, s: TwistParam) -> Result<IterateReport> {
    if s.b.abs() < 2.0 {
        return Err(Error::Hypothesis(format!("|b| = {} below 2", s.b.abs())));
    }
    let layout = build_cancellation(setup, pair, spec, s)?;
    let n0 = setup.n0();
    let at = centers(&pair.u);
    let (lhs, rhs) = damped_step(setup, pair, &layout.chi, spec, s, n0, &at)?;
    let (lo, hi) = (pair.u.y_lo, pair.u.y_hi);
    let mut domination = PointwiseReport { max_violation: 0.0, worst_x: f64::NAN, points: at.len(), middle_slack: f64::INFINITY };
    for i in 0..at.len() {
        let d = lhs[i].norm() - rhs[i].re;
        if d > domination.max_violation {
            domination.max_violation = d;
            domination.worst_x = at[i];
        }
    }
    let mut u2 = GridFunction::new(lo, hi, rhs);
    let mut v2 = GridFunction::new(lo, hi, lhs);
    let input_ratios = atom_ratios(setup, &pair.u);
    let ratio = input_ratios.iter().copied().fold(1.0, f64::max);

    // discontinuities: images of the input jumps and the created ones at X'_j, j ≤ n₀
    let mut pos: Vec<f64> = Vec::new();
    for g in [&pair.u, &pair.v] {
        for j in g.jumps.iter().flatten() {
            if let Some(x) = setup.map.iterate(setup.map.power * n0).apply(j.x) {
                pos.push(x);
            }
        }
    }
    for j in 1..=n0.min(setup.catalog.j_max()) {
        pos.extend(setup.catalog.interior(j, lo, hi));
    }
    let deep: Vec<(f64, usize)> = ((setup.ledger.k + 1)..=setup.catalog.j_max())
        .flat_map(|j| setup.catalog.interior(j, lo, hi).map(move |x| (x, j)).collect::<Vec<_>>())
        .collect();
    let eps = 1e-9 * (hi - lo);
    let mut probe: Vec<f64> = pos.iter().chain(deep.iter().map(|d| &d.0)).flat_map(|&x| [x - eps, x + eps]).collect();
    probe.retain(|x| *x > lo && *x < hi);
    let mut jump_bounds = JumpBoundReport { points: 0, violations: 0, worst_ratio: 0.0 };
    if !probe.is_empty() {
        let both: Vec<f64> = pos.iter().chain(deep.iter().map(|d| &d.0)).copied().collect();
        let ends: Vec<f64> = both.iter().flat_map(|&x| [x - eps, x + eps]).collect();
        let (pl, pr) = damped_step(setup, pair, &layout.chi, spec, s, n0, &ends)?;
        let mut ju = Vec::new();
        let mut jv = Vec::new();
        for (i, &x) in pos.iter().enumerate() {
            let du = pr[2 * i + 1] - pr[2 * i];
            let dv = pl[2 * i + 1] - pl[2 * i];
            if du.norm() > 1e-12 {
                ju.push(Jump { x, delta: du });
            }
            if dv.norm() > 1e-12 {
                jv.push(Jump { x, delta: dv });
            }
        }
        let rho = setup.ledger.geometry.rho;
        let tol_x = 1e-9 * (hi - lo);
        for (i, &(x, _)) in deep.iter().enumerate() {
            let base = pos.len() + i;
            let depths = setup.catalog.depths_of(x, tol_x);
            if depths.iter().any(|&d| d <= setup.ledger.k) {
                continue;
            }
            let weight: f64 = depths.iter().map(|&d| rho.powi(-(d as i32))).sum();
            let ubar = pr[2 * base].re.abs().max(pr[2 * base + 1].re.abs());
            let bound = setup.ledger.c7 * weight * ubar * (ratio / 4.0) * 1.1;
            let size = (pl[2 * base + 1] - pl[2 * base]).norm().max((pr[2 * base + 1] - pr[2 * base]).norm());
            jump_bounds.points += 1;
            if bound > 0.0 {
                jump_bounds.worst_ratio = jump_bounds.worst_ratio.max(size / bound);
            }
            if size > bound + 1e-13 {
                jump_bounds.violations += 1;
            }
        }
        ju.sort_by(|a, b| a.x.total_cmp(&b.x));
        jv.sort_by(|a, b| a.x.total_cmp(&b.x));
        if !ju.is_empty() {
            u2.jumps = Some(ju);
        }
        if !jv.is_empty() {
            v2.jumps = Some(jv);
        }
    }
    let out = ConePair { u: u2, v: v2, b: pair.b };
    let cone = cone_check(&out, &setup.catalog, &cone_params(setup));
    Ok(IterateReport { pair: out, layout, cone, input_ratios, jump_bounds, domination })
}

/// Integral of a grid function over a union of intervals, with partial cells.
pub(crate) fn integrate_on(w: &GridFunction, set: &[(f64, f64)]) -> f64 {
    let h = w.h();
    let mut acc = 0.0;
    for &(a, b) in set {
        let (i0, i1) = w.cells_meeting(a, b);
        for i in i0..i1 {
            let (c0, c1) = (w.y_lo + i as f64 * h, w.y_lo + (i + 1) as f64 * h);
            acc += w.values[i].re * (c1.min(b) - c0.max(a)).max(0.0);
        }
    }
    acc
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MassReport {
    /// atoms where sup w/inf w ≤ M, so the inequality applies
    pub applicable: usize,
    pub violations: usize,
    /// min over applicable atoms of ∫_Î w / ∫_Ĵ w
    pub min_ratio: f64,
}

/// ∫_{Î^p} w ≥ δ″ ∫_{Ĵ^p} w on atoms where sup_p w/inf_p w ≤ M.
pub fn check_mass_split(setup: &Setup, layout: &CancellationLayout, w: &GridFunction) -> MassReport {
    let wc = &setup.ledger.working;
    let mut rep = MassReport { applicable: 0, violations: 0, min_ratio: f64::INFINITY };
    for a in &layout.atoms {
        let (i0, i1) = w.cells_inside(a.lo, a.hi);
        if i1 <= i0 || a.intervals.is_empty() {
            continue;
        }
        let vals = &w.values[i0..i1];
        let sup = vals.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let inf = vals.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        if !(inf > 0.0 && sup / inf <= wc.m_const) {
            continue;
        }
        rep.applicable += 1;
        let ii = integrate_on(w, &a.hat_i);
        let jj = integrate_on(w, &a.hat_j);
        rep.min_ratio = rep.min_ratio.min(ii / jj);
        if ii < wc.delta_pp * jj {
            rep.violations += 1;
        }
    }
    rep
}
