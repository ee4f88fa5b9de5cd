use super::appendix::{calibrate_eta1, Eta1Report};
use super::contraction::{ly_remainder_constant, ly_test_family};
use super::uni::{check_uni, UniAtom};
use super::{eta0, Check, HarnessConfig, Status};
use crate::bv_space::GridFunction;
use crate::interval_map::{
    geometric_constants, image_partition, DiscontinuityCatalog, GeometricConstants, MapSpec, Query, Roof,
};
use crate::operator_core::{branch_weight_bound, eigendata, SpectralData, TwistParam, UlamOperator};
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub sigma: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub sup_f: f64,
    pub inf_f: f64,
    pub var_f: f64,
    pub var_inv_f: f64,
    pub residual: f64,
}

impl SpectralSummary {
    fn of(s: &SpectralData) -> SpectralSummary {
        SpectralSummary {
            sigma: s.sigma,
            lambda: s.lambda,
            big_lambda: s.big_lambda,
            sup_f: s.sup_f(),
            inf_f: s.inf_f(),
            var_f: s.f.var(),
            var_inv_f: s.inv_f.var(),
            residual: s.residual,
        }
    }
}

/// C₉ together with how it was obtained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderMassEstimate {
    pub value: f64,
    /// "enumeration" or "ulam"
    pub method: String,
    pub n: usize,
    pub worst_atom: (f64, f64),
    pub atoms: usize,
}

/// Constants for the experiments, which run at a smaller n₀ than the ledger's.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkingConstants {
    pub n0: usize,
    pub d: f64,
    pub c0: f64,
    pub big_delta: f64,
    pub delta: f64,
    pub delta_p: f64,
    pub delta_pp: f64,
    pub m_const: f64,
    /// Damping value of χ: max(η₀, 1 − δP/3), which keeps |χ′| ≤ |b|.
    pub eta: f64,
    pub p_min: f64,
    pub checks: Vec<Check>,
    pub atoms: Vec<UniAtom>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub map: String,
    pub roof: Roof,
    pub geometry: GeometricConstants,
    pub eps: f64,
    /// The check that failed at 2ε (the one that limits ε).
    pub eps_binding: String,
    pub sigma_test: f64,
    pub spectral: Vec<SpectralSummary>,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: CylinderMassEstimate,
    pub c10: f64,
    pub c11: f64,
    /// Measured remainder constant c of the Lasota–Yorke inequality.
    pub c_ly: f64,
    pub k2: f64,
    pub k: usize,
    /// k used by the Lasota–Yorke tests (smallest admissible k for the eigenfunction-variation condition).
    pub k_ly: usize,
    pub eta0: f64,
    pub eta1: Option<Eta1Report>,
    pub big_k1: Option<f64>,
    pub n0: usize,
    pub d: f64,
    pub c0: f64,
    pub big_delta: f64,
    pub delta: f64,
    pub delta_p: f64,
    pub delta_pp: f64,
    pub m_const: f64,
    pub checks: Vec<Check>,
    pub working: WorkingConstants,
}

impl ConstantLedger {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn uni_holds(&self) -> bool {
        self.working.d > 0.0
    }
}

/// Shared state for every experiment on one (map, roof).
#[derive(Clone, Debug)]
pub struct Setup {
    pub base: MapSpec,
    /// F = base^power
    pub map: MapSpec,
    pub roof: Roof,
    pub catalog: DiscontinuityCatalog,
    /// σ ∈ {−ε, −ε/2, 0, ε/2, ε}, sorted
    pub spectral: Vec<SpectralData>,
    pub ledger: ConstantLedger,
    pub cfg: HarnessConfig,
}

impl Setup {
    pub fn new(map: &MapSpec, roof: &Roof, cfg: HarnessConfig) -> Result<Setup> {
        build_ledger(map, roof, &cfg)
    }

    /// Spectral data at σ on the configured grid: from the family when present.
    pub fn spectral_at(&self, sigma: f64) -> Result<SpectralData> {
        if let Some(s) = self.spectral.iter().find(|s| (s.sigma - sigma).abs() < 1e-15) {
            return Ok(s.clone());
        }
        eigendata(&self.map, &self.roof, sigma, self.cfg.grid)
    }

    pub fn n0(&self) -> usize {
        self.ledger.working.n0
    }

    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.catalog.atoms(self.ledger.k)
    }
}

fn ratio(s: &SpectralData) -> f64 {
    s.sup_f() / s.inf_f()
}

struct EpsChoice {
    eps: f64,
    binding: String,
    spectral: Vec<SpectralData>,
}

/// Largest dyadic ε below ε₀ at which the spectral family at ±ε passes every
/// ε-dependent check.
fn sweep_eps(map: &MapSpec, roof: &Roof, g: &GeometricConstants, cfg: &HarnessConfig) -> Result<EpsChoice> {
    let rho = g.rho;
    let mut binding = "none: starting value passes".to_string();
    let mut first = true;
    for m in 0..cfg.eps_levels {
        let eps = cfg.eps_start * 0.5f64.powi(m as i32);
        if eps >= g.eps0 {
            binding = format!("roof exponent eps0 = {}", g.eps0);
            first = false;
            continue;
        }
        let mut fail: Option<String> = None;
        let mut specs = Vec::new();
        for sigma in [-eps, eps] {
            match eigendata(map, roof, sigma, cfg.grid) {
                Ok(s) => {
                    if !(s.lambda > rho.powf(-0.25)) {
                        fail.get_or_insert(format!("eigenvalue floor at sigma={sigma}"));
                    }
                    if !(s.big_lambda < rho.sqrt()) {
                        fail.get_or_insert(format!("Lambda_sigma < rho^(1/2) at sigma={sigma}"));
                    }
                    for n in 1..=3 {
                        if branch_weight_bound(map, roof, sigma, s.lambda, n) > rho.powi(-3 * n as i32) {
                            fail.get_or_insert(format!("branch weight n={n} at sigma={sigma}"));
                        }
                    }
                    specs.push(s);
                }
                Err(e) => {
                    fail.get_or_insert(format!("eigendata at sigma={sigma}: {e}"));
                }
            }
            if fail.is_some() {
                break;
            }
        }
        match fail {
            None => {
                if first {
                    binding = "none: starting value passes".into();
                }
                let mut spectral = specs;
                for sigma in [-eps / 2.0, 0.0, eps / 2.0] {
                    spectral.push(eigendata(map, roof, sigma, cfg.grid)?);
                }
                spectral.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
                return Ok(EpsChoice { eps, binding, spectral });
            }
            Some(f) => {
                binding = f;
                first = false;
            }
        }
    }
    Err(Error::Infeasible(format!("eps sweep ({binding})")))
}

fn sample_points(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m).map(|t| lo + (hi - lo) * (t as f64 + 0.5) / m as f64).collect()
}

/// Cell averages of 1_{[a,b]} on an N-cell grid.
pub(crate) fn indicator_avg(n: usize, y_lo: f64, y_hi: f64, a: f64, b: f64) -> Vec<C64> {
    let h = (y_hi - y_lo) / n as f64;
    (0..n)
        .map(|i| {
            let (c0, c1) = (y_lo + i as f64 * h, y_lo + (i + 1) as f64 * h);
            C64::new(((c1.min(b) - c0.max(a)).max(0.0)) / h, 0.0)
        })
        .collect()
}

/// Empirical C₉: min over atoms p of P_k and points x of
/// λ_σ^{-n} Σ_{range h ⊂ p, x ∈ dom h} |h′(x)| e^{σφ_n(h x)} / Leb(p), n = 2k.
/// Exhaustive when the branches of F^n fit the budget; otherwise the sum is
/// bounded below by L_σ^n 1_{p′}, with p′ = p shrunk by the maximal cylinder
/// length, evaluated with the Ulam operator.
pub fn check_cylinder_mass(
    map: &MapSpec,
    roof: &Roof,
    spec: &SpectralData,
    k: usize,
    catalog: &DiscontinuityCatalog,
    cfg: &HarnessConfig,
    rho0: f64,
) -> Result<CylinderMassEstimate> {
    let n = 2 * k;
    // atoms lying in the gap left by truncated branches carry no mass at all
    let atoms: Vec<(f64, f64)> = catalog.atoms(k).into_iter().filter(|p| map.apply(0.5 * (p.0 + p.1)).is_some()).collect();
    let sigma = spec.sigma;
    let ln = spec.lambda.powi(n as i32);
    if let Ok(hs) = map.inverse_branches(n, Query::Interval(map.y_lo, map.y_hi), cfg.enum_budget) {
        let xs = sample_points(map.y_lo, map.y_hi, cfg.c9_points);
        let tol = catalog.tol(k.min(catalog.j_max()));
        let per_atom: Vec<f64> = atoms
            .par_iter()
            .map(|p| {
                let inside: Vec<_> = hs.iter().filter(|h| h.range.0 >= p.0 - tol && h.range.1 <= p.1 + tol).collect();
                xs.iter()
                    .map(|&x| {
                        inside
                            .iter()
                            .filter(|h| x >= h.domain.0 && x <= h.domain.1)
                            .map(|h| {
                                let e = map.eval_inverse(h, x, Some(roof));
                                e.deriv * (sigma * e.phi).exp()
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
                    / (ln * (p.1 - p.0))
            })
            .collect();
        return Ok(summarize_cylinder_mass(per_atom, &atoms, "enumeration", n));
    }
    let op = UlamOperator::assemble(map, roof, TwistParam::real(sigma), cfg.c9_grid)?;
    let margin = rho0.powi(-(n as i32)) * map.len();
    let per_atom: Vec<f64> = atoms
        .par_iter()
        .map(|p| {
            let (a, b) = (p.0 + margin, p.1 - margin);
            if b <= a {
                return 0.0;
            }
            let g = indicator_avg(op.n, map.y_lo, map.y_hi, a, b);
            let out = op.apply_n(&g, n);
            out.iter().map(|z| z.re).fold(f64::INFINITY, f64::min) / (ln * (p.1 - p.0))
        })
        .collect();
    Ok(summarize_cylinder_mass(per_atom, &atoms, "ulam", n))
}

fn summarize_cylinder_mass(per_atom: Vec<f64>, atoms: &[(f64, f64)], method: &str, n: usize) -> CylinderMassEstimate {
    let (mut value, mut worst) = (f64::INFINITY, (0.0, 0.0));
    for (v, p) in per_atom.iter().zip(atoms) {
        if *v < value {
            value = *v;
            worst = *p;
        }
    }
    CylinderMassEstimate { value: value.max(0.0), method: method.into(), n, worst_atom: worst, atoms: atoms.len() }
}

/// Smallest dyadic δ with δD/(16π) < 1/12 and C₀δ < π/6.
pub fn choose_delta(d: f64, c0: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut delta = 1.0;
    while !(delta * d / (16.0 * pi) < 1.0 / 12.0 && c0 * delta < pi / 6.0) {
        delta *= 0.5;
    }
    delta
}

/// δ′ = δ/(4δ + 6Δ).
pub fn delta_prime(delta: f64, big_delta: f64) -> f64 {
    delta / (4.0 * delta + 6.0 * big_delta)
}

/// The right side ¼(2 − 2cos(π/12))^{1/2} of the UNI resolution condition.
pub fn uni_resolution_bound() -> f64 {
    0.25 * (2.0 - 2.0 * (std::f64::consts::PI / 12.0).cos()).sqrt()
}

/// C₁₀ = (C₁e^{C₁} + 2(1+ε₀)e^{ε₀C₂′}C₂′ + 2C₆)/(2η₀ − 4ρ₀^{-k}).
pub fn c10_formula(g: &GeometricConstants, c6: f64, k: usize) -> f64 {
    let num = g.c1 * g.c1.exp() + 2.0 * (1.0 + g.eps0) * (g.eps0 * g.c2p).exp() * g.c2p + 2.0 * c6;
    num / (2.0 * eta0() - 4.0 * g.rho0.powi(-(k as i32)))
}

struct UniLevel {
    atoms: Vec<UniAtom>,
    d: f64,
    c0: f64,
    p_min: f64,
}

fn uni_level(map: &MapSpec, roof: &Roof, n0: usize, atoms: &[(f64, f64)], cfg: &HarnessConfig) -> Result<UniLevel> {
    let res: Vec<UniAtom> = atoms
        .par_iter()
        .enumerate()
        .map(|(i, &p)| check_uni(map, roof, n0, p, cfg.uni_words, cfg.uni_grid, cfg.seed ^ (i as u64 + 1)))
        .collect::<Result<_>>()?;
    let d = res.iter().map(|a| a.d_best).fold(f64::INFINITY, f64::min);
    let c0 = res.iter().map(|a| a.c0).fold(0.0, f64::max);
    let p_min = res.iter().map(|a| a.p_min).fold(f64::INFINITY, f64::min);
    Ok(UniLevel { atoms: res, d, c0, p_min })
}

/// M = 16(sup f₀/inf f₀)² · max_p sup_p Σ|h′| / inf_p Σ|h′|, with Σ|h′| = L₀^{n₀}1.
fn m_constant(map: &MapSpec, roof: &Roof, f0_ratio: f64, n0: usize, atoms: &[(f64, f64)], grid: usize) -> Result<f64> {
    let op = UlamOperator::assemble(map, roof, TwistParam::real(0.0), grid)?;
    let one = vec![C64::new(1.0, 0.0); op.n];
    let w = GridFunction::new(map.y_lo, map.y_hi, op.apply_n(&one, n0));
    let mut worst = 1.0f64;
    for &(lo, hi) in atoms {
        let (i0, i1) = w.cells_inside(lo, hi);
        if i1 <= i0 {
            continue;
        }
        let vals = &w.values[i0..i1];
        let sup = vals.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let inf = vals.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        worst = worst.max(sup / inf);
    }
    Ok(16.0 * f0_ratio * f0_ratio * worst)
}

/// Fills every ledger field: ε sweep, spectral family, k search with C₉,
/// C₁₀, UNI at the ledger n₀, δ-family, η₁, K₁, C₁₁ and the working constants.
pub fn build_ledger(base: &MapSpec, roof: &Roof, cfg: &HarnessConfig) -> Result<Setup> {
    let (map, g) = geometric_constants(base, roof, &cfg.caps)?;
    let rho = g.rho;
    let eps_choice = sweep_eps(&map, roof, &g, cfg)?;
    let eps = eps_choice.eps;
    let spectral = eps_choice.spectral;
    let s0 = spectral.iter().find(|s| s.sigma == 0.0).expect("sigma = 0 in family");
    let mut checks = Vec::new();

    let c4 = s0.sup_f().max(1.0 / s0.inf_f());
    let c5 = spectral.iter().map(ratio).fold(0.0, f64::max);
    let c6 = (eps * g.c2p + g.c1) * c5;
    let c7 = rho.powi(3) * c5;
    let c8 = 3.0 * c7 / eta0();
    let r0 = ratio(s0);
    let k2 = c5 * r0;

    let min_lambda = spectral.iter().map(|s| s.lambda).fold(f64::INFINITY, f64::min);
    checks.push(Check::lt("eigenvalue_floor", rho.powf(-0.25), min_lambda));
    let min_f = spectral.iter().map(|s| s.inf_f()).fold(f64::INFINITY, f64::min);
    checks.push(Check::lt("eigenfunction_positive", 0.0, min_f));
    let max_big = spectral.iter().map(|s| s.big_lambda).fold(0.0, f64::max);
    checks.push(Check::lt("lambda_growth", max_big, rho.sqrt()));
    for n in 1..=3 {
        let w = spectral.iter().map(|s| branch_weight_bound(&map, roof, s.sigma, s.lambda, n)).fold(0.0, f64::max);
        checks.push(Check::le(&format!("branch_weight_n{n}"), w, rho.powi(-3 * n as i32)));
    }

    let j_max = cfg.k_cap + 8;
    let catalog = image_partition(&map, j_max, cfg.caps.branch_budget)?;
    let n1 = g.n1 as f64;
    let k3_lhs = |k: usize| {
        rho.powi(-2 * k as i32) * (s0.sup_f() + s0.f.var()) * (1.0 / s0.inf_f() + s0.inv_f.var())
    };
    let step = 2 * g.k1;
    let test_sigmas: Vec<&SpectralData> =
        spectral.iter().filter(|s| (s.sigma.abs() - eps / 2.0).abs() < 1e-15 || s.sigma == 0.0).collect();
    let cylinder_mass = |k: usize| -> Result<CylinderMassEstimate> {
        let mut best: Option<CylinderMassEstimate> = None;
        for s in &test_sigmas {
            let e = check_cylinder_mass(&map, roof, s, k, &catalog, cfg, g.rho0)?;
            if best.as_ref().map_or(true, |b| e.value < b.value) {
                best = Some(e);
            }
        }
        Ok(best.expect("nonempty sigma set"))
    };
    let mut chosen: Option<(usize, CylinderMassEstimate, bool)> = None;
    let mut fallback: Option<usize> = None;
    let (mut seen_ke, mut seen_k3) = (false, false);
    let mut k = step;
    while k <= cfg.k_cap {
        let ke = rho.powi(k as i32) * (rho - 1.0) > 12.0 * n1 * c8;
        let k3 = k3_lhs(k) < 1.0;
        seen_ke |= ke;
        seen_k3 |= k3;
        if ke && k3 {
            fallback.get_or_insert(k);
            let min_atom = catalog.min_atom(k);
            // at σ = 0, inf_x L^n 1_p ≤ Leb(p)/|Y|, so C₉ ≤ 1/|Y|: skip hopeless k cheaply
            if min_atom > 0.5 * 16.0 * c8 * c5 * rho.powi(-(k as i32)) * map.len() {
                let c9 = cylinder_mass(k)?;
                if c9.value > 0.0 && min_atom > 16.0 * c8 / c9.value * c5 * rho.powi(-(k as i32)) {
                    chosen = Some((k, c9, true));
                    break;
                }
            }
        }
        k += step;
    }
    if chosen.is_none() {
        match fallback {
            Some(k) if !cfg.strict_k => {
                let c9 = cylinder_mass(k)?;
                chosen = Some((k, c9, false));
            }
            _ => {
                let name = if !seen_ke {
                    "jump_growth: rho^k(rho-1) > 12 N1 C8"
                } else if !seen_k3 {
                    "eigenfunction_variation: rho^{-2k}(sup f0+Var f0)(1/inf f0+Var 1/f0) < 1"
                } else {
                    "atom_size: min Leb(p) > (16 C8/C9)(sup f/inf f) rho^{-k}"
                };
                return Err(Error::Infeasible(name.into()));
            }
        }
    }
    let (k, c9, atom_ok) = chosen.expect("k chosen");
    let min_atom = catalog.min_atom(k);
    let atom_rhs = if c9.value > 0.0 { 16.0 * c8 / c9.value * c5 * rho.powi(-(k as i32)) } else { f64::INFINITY };
    let mut atom_check = Check::lt("atom_size", atom_rhs, min_atom);
    if !atom_ok {
        atom_check = atom_check.unverified("no k up to the cap satisfies all three conditions; k taken from the other two");
    } else if k > catalog.precision_horizon {
        atom_check = atom_check.with_note("atoms beyond the catalog precision horizon");
    }
    checks.push(atom_check);
    checks.push(Check::lt("jump_growth", 12.0 * n1 * c8, rho.powi(k as i32) * (rho - 1.0)));
    checks.push(Check::lt("eigenfunction_variation", k3_lhs(k), 1.0));
    let mut k_ly = step;
    while k3_lhs(k_ly) >= 1.0 && k_ly < k {
        k_ly += step;
    }

    let c10 = c10_formula(&g, c6, k);
    let atoms = catalog.atoms(k);

    // ledger n₀: smallest multiple of k meeting the UNI resolution condition
    let bound = uni_resolution_bound();
    let mut n0 = k;
    let mut level = uni_level(&map, roof, n0, &atoms, cfg)?;
    let lhs = |l: &UniLevel, n0: usize| c10 * g.rho0.powi(-(n0 as i32)) * 4.0 * std::f64::consts::PI / l.d;
    for mult in 2..=cfg.n0_mult_cap {
        if lhs(&level, n0) <= bound {
            break;
        }
        n0 = mult * k;
        level = uni_level(&map, roof, n0, &atoms, cfg)?;
    }
    checks.push(Check::lt("uni", 0.0, level.d));
    checks.push(Check::le("uni_resolution", lhs(&level, n0), bound));
    let (d, c0) = (level.d, level.c0);
    let big_delta = 2.0 * std::f64::consts::PI / d;
    let delta = choose_delta(d, c0);
    checks.push(Check::lt("delta_resolution", delta * d / (16.0 * std::f64::consts::PI), 1.0 / 12.0));
    checks.push(Check::lt("delta_phase", c0 * delta, std::f64::consts::PI / 6.0));
    let delta_p = delta_prime(delta, big_delta);
    let m_const = m_constant(&map, roof, r0, n0, &atoms, cfg.grid)?;
    let delta_pp = delta_p / (2.0 * m_const);

    let eta1 = calibrate_eta1(&map, &g, cfg.eta1_samples, cfg.seed, cfg.enum_budget).ok();
    if let Some(e) = &eta1 {
        checks.push(Check::lt("eta1_positive", 0.0, e.eta1));
    }
    let big_k1 = eta1.as_ref().filter(|e| e.eta1 > 0.0).map(|e| 6.0 * g.c1.exp() / e.eta1);

    let ly_fam = ly_test_family(cfg.seed, cfg.ly_family, cfg.grid, &map, &catalog);
    let c_ly = ly_remainder_constant(&map, roof, s0, k_ly, &ly_fam, &[2.0, 8.0, 32.0])?;
    let r_2s = spectral.iter().filter(|s| (s.sigma.abs() - eps).abs() < 1e-15).map(ratio).fold(1.0, f64::max);
    let c11 = 64.0 * (1.0 + c_ly).powi(2) * c5 * c5 * r_2s * (c5 * r0).powi(2);

    let working = working_constants(&map, roof, &g, &atoms, r0, c10, cfg)?;

    let ledger = ConstantLedger {
        map: map.name(),
        roof: roof.clone(),
        geometry: g.clone(),
        eps,
        eps_binding: eps_choice.binding,
        sigma_test: eps / 2.0,
        spectral: spectral.iter().map(SpectralSummary::of).collect(),
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c11,
        c_ly,
        k2,
        k,
        k_ly,
        eta0: eta0(),
        eta1,
        big_k1,
        n0,
        d,
        c0,
        big_delta,
        delta,
        delta_p,
        delta_pp,
        m_const,
        checks,
        working,
    };
    Ok(Setup { base: base.clone(), map, roof: roof.clone(), catalog, spectral, ledger, cfg: cfg.clone() })
}

fn working_constants(
    map: &MapSpec,
    roof: &Roof,
    g: &GeometricConstants,
    atoms: &[(f64, f64)],
    f0_ratio: f64,
    c10: f64,
    cfg: &HarnessConfig,
) -> Result<WorkingConstants> {
    let n0 = cfg.n0_work.unwrap_or_else(|| {
        (1..=8).find(|&n| 4.0 * g.rho0.powi(-(n as i32)) <= eta0() / 2.0).unwrap_or(8)
    });
    let level = uni_level(map, roof, n0, atoms, cfg)?;
    let (d, c0) = (level.d, level.c0);
    let big_delta = 2.0 * std::f64::consts::PI / d;
    let delta = choose_delta(d, c0);
    let delta_p = delta_prime(delta, big_delta);
    let m_const = m_constant(map, roof, f0_ratio, n0, atoms, cfg.grid)?;
    let eta = eta0().max(1.0 - delta * level.p_min / 3.0);
    let res = c10 * g.rho0.powi(-(n0 as i32)) * 4.0 * std::f64::consts::PI / d;
    let mut res_check = Check::le("uni_resolution", res, uni_resolution_bound());
    if !res_check.holds() {
        res_check = res_check.unverified("working n0 is below the ledger n0; the layout is verified pointwise instead");
    }
    let checks = vec![Check::lt("uni", 0.0, d), res_check];
    Ok(WorkingConstants {
        n0,
        d,
        c0,
        big_delta,
        delta,
        delta_p,
        delta_pp: delta_p / (2.0 * m_const),
        m_const,
        eta,
        p_min: level.p_min,
        checks,
        atoms: level.atoms,
    })
}

impl WorkingConstants {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fails)
    }
}
