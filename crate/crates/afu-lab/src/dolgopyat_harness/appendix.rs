use super::ledger::Setup;
use crate::bv_space::{random_family, GridFunction};
use crate::interval_map::{GeometricConstants, InverseBranch, MapSpec, Query};
use crate::operator_core::{NormalizedUlam, TwistParam, UlamOperator};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Covering constant: for every interval J with |J| ≥ τ and every z,
/// the cylinders h(Y) ⊂ J of depth n with z ∈ dom h cover at least η₁|J|.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Eta1Report {
    pub eta1: f64,
    pub n: usize,
    pub tau: f64,
    pub samples: usize,
    pub min_ratio: f64,
    pub validation_samples: usize,
    pub validation_min_ratio: f64,
    pub validated: bool,
}

/// Depth at which every interval of length ≥ τ contains a full cylinder:
/// k₁ + ⌈log(2K(ρ₀−2)/(e^{C₁}ρ₀τ)) / log(ρ₀/2)⌉.
pub fn covering_depth(g: &GeometricConstants, tau: f64) -> Result<usize> {
    if !(g.rho0 > 2.0) {
        return Err(Error::Hypothesis(format!("covering depth needs rho0 > 2, got {}", g.rho0)));
    }
    let num = 2.0 * g.k_image * (g.rho0 - 2.0) / (g.c1.exp() * g.rho0 * tau);
    let extra = (num.ln() / (g.rho0 / 2.0).ln()).max(0.0).ceil() as usize;
    Ok(g.k1 + extra)
}

fn covered(hs: &[InverseBranch], j: (f64, f64), z: f64, tol: f64) -> f64 {
    hs.iter()
        .filter(|h| h.range.0 >= j.0 - tol && h.range.1 <= j.1 + tol && z >= h.domain.0 && z <= h.domain.1)
        .map(|h| h.range.1 - h.range.0)
        .sum()
}

fn sample_ratios(map: &MapSpec, hs: &[InverseBranch], tau: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = map.len();
    let draws: Vec<((f64, f64), f64)> = (0..count)
        .map(|_| {
            let l = rng.gen_range(tau..=len);
            let a = map.y_lo + rng.gen_range(0.0..=(len - l));
            let z = rng.gen_range(map.y_lo..map.y_hi);
            ((a, a + l), z)
        })
        .collect();
    let tol = 1e-12 * len;
    draws.par_iter().map(|&(j, z)| covered(hs, j, z, tol) / (j.1 - j.0)).collect()
}

/// η₁ = ½ of the smallest covering ratio over random (z, J), validated on
/// 50 fresh draws. Fails with BudgetExceeded when the cylinders of the
/// required depth cannot be enumerated.
pub fn calibrate_eta1(map: &MapSpec, g: &GeometricConstants, samples: usize, seed: u64, budget: usize) -> Result<Eta1Report> {
    let tau = 0.1 * map.len();
    let n = covering_depth(g, tau)?;
    let hs = map.inverse_branches(n, Query::Interval(map.y_lo, map.y_hi), budget)?;
    let ratios = sample_ratios(map, &hs, tau, samples.max(1), seed);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let eta1 = 0.5 * min_ratio;
    let val = sample_ratios(map, &hs, tau, 50, seed.wrapping_add(0x9e37_79b9));
    let vmin = val.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Eta1Report {
        eta1,
        n,
        tau,
        samples: ratios.len(),
        min_ratio,
        validation_samples: val.len(),
        validation_min_ratio: vmin,
        validated: vmin >= eta1,
    })
}

/// Atoms of P_r split into runs of grid cells of length about ρ^{-r}
/// (at least one cell). Returned as cell index ranges [i0, i1).
pub fn q_partition(setup: &Setup, r: usize, n: usize) -> Vec<(usize, usize)> {
    let (lo, hi) = (setup.map.y_lo, setup.map.y_hi);
    let h = (hi - lo) / n as f64;
    let target = setup.ledger.geometry.rho.powi(-(r as i32)) * (hi - lo);
    let per = ((target / h).round() as usize).max(1);
    let probe = GridFunction::constant(n, lo, hi, C64::new(0.0, 0.0));
    let mut out = Vec::new();
    for (a, b) in setup.catalog.atoms(r.min(setup.catalog.j_max())) {
        let (i0, i1) = probe.cells_inside(a, b);
        let mut i = i0;
        while i < i1 {
            let j = (i + per).min(i1);
            out.push((i, j));
            i = j;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreimageMassReport {
    pub r: usize,
    pub r0: f64,
    pub k0: f64,
    pub k1: f64,
    pub grid: usize,
    /// (v, I_r) instances tested
    pub instances: usize,
    /// functions of the family satisfying Var ≤ K₀‖v‖₁
    pub eligible: usize,
    pub violations: usize,
    /// min over instances of (K₁/Leb(I_r))∫_{F^{-r}I_r}|v| / ‖v‖₁
    pub min_ratio: f64,
}

/// ‖v‖₁ ≤ (K₁/Leb(I_r)) ∫_{F^{-r}(I_r)} |v| for Var v ≤ K₀‖v‖₁ and r > r₀,
/// with ∫_{F^{-r}I}|v| = ∫_I L₀^r|v| computed by the Ulam operator.
pub fn preimage_mass_check(setup: &Setup, samples: usize, grid: usize, seed: u64) -> Result<PreimageMassReport> {
    let k1 = setup.ledger.big_k1.ok_or_else(|| Error::Hypothesis("no covering constant for this map".into()))?;
    let g = &setup.ledger.geometry;
    let k0 = 10.0;
    if !(g.rho0 > 2.0) {
        return Err(Error::Hypothesis(format!("needs rho0 > 2, got {}", g.rho0)));
    }
    let tail = (108.0 * k0 * g.k_image * (g.rho0 - 2.0) / (g.c1.exp() * g.rho0)).ln() / (g.rho0 / 2.0).ln();
    let r0 = (setup.ledger.k as f64).max(g.k1 as f64 + tail);
    let r = r0.floor() as usize + 1;
    let (lo, hi) = (setup.map.y_lo, setup.map.y_hi);
    let op = UlamOperator::assemble(&setup.map, &setup.roof, TwistParam::real(0.0), grid)?;
    let anchors: Vec<f64> = (1..=3.min(setup.catalog.j_max())).flat_map(|j| setup.catalog.points(j).to_vec()).collect();
    let fam: Vec<GridFunction> = random_family(seed, 4 * samples.max(8), grid, lo, hi, &anchors, true)
        .into_iter()
        .filter(|v| v.var() <= k0 * v.l1() && v.l1() > 0.0)
        .collect();
    if fam.is_empty() {
        return Err(Error::Hypothesis("no test function satisfies Var <= K0 ||v||_1".into()));
    }
    let pieces = q_partition(setup, r, grid);
    let h = (hi - lo) / grid as f64;
    let images: Vec<Vec<f64>> = fam
        .par_iter()
        .map(|v| {
            let a: Vec<C64> = v.values.iter().map(|z| C64::new(z.norm(), 0.0)).collect();
            op.apply_n(&a, r).into_iter().map(|z| z.re).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc2);
    let mut rep = PreimageMassReport {
        r,
        r0,
        k0,
        k1,
        grid,
        instances: 0,
        eligible: fam.len(),
        violations: 0,
        min_ratio: f64::INFINITY,
    };
    for _ in 0..samples {
        let i = rng.gen_range(0..fam.len());
        let (a, b) = pieces[rng.gen_range(0..pieces.len())];
        let leb = (b - a) as f64 * h;
        let mass: f64 = images[i][a..b].iter().sum::<f64>() * h;
        let ratio = k1 / leb * mass / fam[i].l1();
        rep.instances += 1;
        rep.min_ratio = rep.min_ratio.min(ratio);
        if ratio < 1.0 {
            rep.violations += 1;
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineApproxReport {
    pub r: usize,
    pub b: f64,
    pub pieces: usize,
    /// max over the family of ‖L̃_s^r v − w‖∞ / ‖v‖∞
    pub distance: f64,
    /// 2C₁₀ρ^{-r}|b|
    pub bound: f64,
}

/// g = L̃_s^r v against its interpolant w, affine on each piece of the
/// refined partition and equal to g on the first and last cell.
pub fn affine_approx_check(setup: &Setup, s: TwistParam, r: usize, family: &[GridFunction], grid: usize) -> Result<AffineApproxReport> {
    let spec = setup.spectral_at(s.sigma)?;
    let op = NormalizedUlam::new(&setup.map, &setup.roof, &spec, s.b, grid)?;
    let pieces = q_partition(setup, r, grid);
    let lo = setup.map.y_lo;
    let h = setup.map.len() / grid as f64;
    let center = |i: usize| lo + (i as f64 + 0.5) * h;
    let distance = family
        .par_iter()
        .map(|v| {
            let v = op.op.resample(v);
            let g = op.apply_n(&v.values, r);
            let mut worst = 0.0f64;
            for &(a, b) in &pieces {
                let (x0, x1) = (center(a), center(b - 1));
                let (g0, g1) = (g[a], g[b - 1]);
                for i in a..b {
                    let t = if b - 1 > a { (center(i) - x0) / (x1 - x0) } else { 0.0 };
                    worst = worst.max((g[i] - (g0 + (g1 - g0) * t)).norm());
                }
            }
            worst / v.linf().max(1e-300)
        })
        .reduce(|| 0.0, f64::max);
    Ok(AffineApproxReport {
        r,
        b: s.b,
        pieces: pieces.len(),
        distance,
        bound: 2.0 * setup.ledger.c10 * setup.ledger.geometry.rho.powi(-(r as i32)) * s.b.abs(),
    })
}
