//! Twisted transfer operators L_s and their normalized versions L̃_s:
//! pointwise branch sums, Ulam discretization and leading eigendata.

use crate::bv_space::GridFunction;
use crate::interval_map::{MapSpec, Query, Roof};
use crate::quad::gauss8;
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// s = σ + ib.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistParam {
    pub sigma: f64,
    pub b: f64,
}

impl TwistParam {
    pub fn new(sigma: f64, b: f64) -> TwistParam {
        TwistParam { sigma, b }
    }

    pub fn real(sigma: f64) -> TwistParam {
        TwistParam { sigma, b: 0.0 }
    }

    pub fn s(&self) -> C64 {
        C64::new(self.sigma, self.b)
    }

    /// Rejects |σ| ≥ ε.
    pub fn check(&self, eps: f64) -> Result<()> {
        if self.sigma.abs() >= eps {
            return Err(Error::InvalidParams(format!("|sigma| = {} must be below eps = {eps}", self.sigma.abs())));
        }
        Ok(())
    }
}

/// Σ over the `steps`-fold base preimages y of x of e^{sφ_steps(y)} |h'(x)| g(y).
/// `budget` counts leaves.
pub fn branch_sum(
    map: &MapSpec,
    roof: &Roof,
    s: C64,
    steps: usize,
    x: f64,
    g: &(dyn Fn(f64) -> C64 + Sync),
    budget: &mut usize,
) -> Result<C64> {
    if steps == 0 {
        if *budget == 0 {
            let est = (map.branches.len() as f64).powi(steps as i32);
            return Err(Error::BudgetExceeded { estimate: est, budget: 0 });
        }
        *budget -= 1;
        return Ok(g(x));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (_, y, dh) in map.base_preimages(x) {
        let w = (s * roof.phi(y)).exp() * dh;
        acc += w * branch_sum(map, roof, s, steps - 1, y, g, budget)?;
    }
    Ok(acc)
}

fn leaf_estimate(map: &MapSpec, steps: usize) -> f64 {
    let mut avg = 0.0;
    for t in 0..16 {
        let x = map.y_lo + map.len() * (t as f64 + 0.5) / 16.0;
        avg += map.base_preimages(x).count() as f64 / 16.0;
    }
    avg.powi(steps as i32)
}

/// L_s^n g at the query points, n counted in steps of F.
pub fn apply_fn(
    map: &MapSpec,
    roof: &Roof,
    s: TwistParam,
    n: usize,
    g: &(dyn Fn(f64) -> C64 + Sync),
    at: &[f64],
    budget: usize,
) -> Result<Vec<C64>> {
    let steps = n * map.power;
    let est = leaf_estimate(map, steps);
    if est > budget as f64 {
        return Err(Error::BudgetExceeded { estimate: est, budget });
    }
    at.par_iter()
        .map(|&x| {
            let mut b = budget;
            branch_sum(map, roof, s.s(), steps, x, g, &mut b).map_err(|e| match e {
                Error::BudgetExceeded { budget, .. } => Error::BudgetExceeded { estimate: est, budget },
                e => e,
            })
        })
        .collect()
}

/// L_s^n v at the query points; v is evaluated by interpolation.
pub fn apply_pointwise(
    map: &MapSpec,
    roof: &Roof,
    s: TwistParam,
    n: usize,
    v: &GridFunction,
    at: &[f64],
    budget: usize,
) -> Result<Vec<C64>> {
    apply_fn(map, roof, s, n, &|y| v.eval(y), at, budget)
}

/// L̃_s^n v = (λ_σ^n f_σ)^{-1} L_s^n(f_σ v) at the query points.
pub fn normalized_apply(
    map: &MapSpec,
    roof: &Roof,
    spec: &SpectralData,
    s: TwistParam,
    n: usize,
    v: &(dyn Fn(f64) -> C64 + Sync),
    at: &[f64],
    budget: usize,
) -> Result<Vec<C64>> {
    if (spec.sigma - s.sigma).abs() > 1e-15 {
        return Err(Error::InvalidParams(format!("spectral data at sigma={} used with sigma={}", spec.sigma, s.sigma)));
    }
    let f = &spec.f;
    let raw = apply_fn(map, roof, s, n, &|y| v(y) * f.eval(y), at, budget)?;
    let ln = spec.lambda.powi(n as i32);
    Ok(raw.into_iter().zip(at).map(|(r, &x)| r / (ln * f.eval(x).re)).collect())
}

/// Ulam discretization of the base operator at twist s on N cells, stored in CSR.
/// The operator for F = base^power is the matrix applied `power` times.
#[derive(Clone, Debug)]
pub struct UlamOperator {
    pub n: usize,
    pub y_lo: f64,
    pub y_hi: f64,
    pub s: TwistParam,
    pub power: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl UlamOperator {
    /// A_ij = (1/h) Σ_branches ∫_{h(cell_i) ∩ cell_j} e^{sφ(y)} dy.
    pub fn assemble(map: &MapSpec, roof: &Roof, s: TwistParam, n: usize) -> Result<UlamOperator> {
        if n < 2 {
            return Err(Error::InvalidParams("Ulam grid needs N >= 2".into()));
        }
        let (lo, hi) = (map.y_lo, map.y_hi);
        let h = (hi - lo) / n as f64;
        let edge = |i: usize| if i == n { hi } else { lo + i as f64 * h };
        // inverse images of every cell edge inside each branch image
        let inv: Vec<(usize, usize, Vec<f64>, f64, f64)> = map
            .branches
            .par_iter()
            .map(|b| {
                let i0 = ((b.image.0 - lo) / h).ceil().max(0.0) as usize;
                let i1 = (((b.image.1 - lo) / h).floor().max(0.0) as usize).min(n);
                let pts: Vec<f64> = if i0 <= i1 { (i0..=i1).map(|i| b.inverse(edge(i))).collect() } else { vec![] };
                (i0, i1, pts, b.inverse(b.image.0), b.inverse(b.image.1))
            })
            .collect();
        let sc = s.s();
        let rows: Vec<Vec<(usize, C64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (a, bnd) = (edge(i), edge(i + 1));
                let mut trip: Vec<(usize, C64)> = Vec::new();
                for (br, (i0, i1, pts, ya, yb)) in map.branches.iter().zip(&inv) {
                    let x0 = a.max(br.image.0);
                    let x1 = bnd.min(br.image.1);
                    if !(x1 - x0 > 1e-15 * (hi - lo)) {
                        continue;
                    }
                    let pick = |x: f64, k: usize, fallback: f64| -> f64 {
                        if k >= *i0 && k <= *i1 && x == edge(k) {
                            pts[k - i0]
                        } else {
                            fallback
                        }
                    };
                    let u0 = if x0 == br.image.0 { *ya } else { pick(x0, i, br.inverse(x0)) };
                    let u1 = if x1 == br.image.1 { *yb } else { pick(x1, i + 1, br.inverse(x1)) };
                    let (y0, y1) = if u0 <= u1 { (u0, u1) } else { (u1, u0) };
                    let j0 = (((y0 - lo) / h).floor().max(0.0) as usize).min(n - 1);
                    let mut j = j0;
                    while j < n && edge(j) < y1 {
                        let c0 = y0.max(edge(j));
                        let c1 = y1.min(edge(j + 1));
                        if c1 > c0 {
                            let w: C64 = gauss8(c0, c1, |y| (sc * roof.phi(y)).exp());
                            trip.push((j, w / h));
                        }
                        j += 1;
                    }
                }
                trip.sort_by_key(|t| t.0);
                let mut merged: Vec<(usize, C64)> = Vec::with_capacity(trip.len());
                for (j, w) in trip {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += w,
                        _ => merged.push((j, w)),
                    }
                }
                merged
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (j, w) in r {
                cols.push(j);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        Ok(UlamOperator { n, y_lo: lo, y_hi: hi, s, power: map.power, row_ptr, cols, vals })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .find(|(&c, _)| c == j)
            .map(|(_, &w)| w)
            .unwrap_or_default()
    }

    /// One base step.
    pub fn apply_base(&self, v: &[C64]) -> Vec<C64> {
        let row = |i: usize| -> C64 {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * v[self.cols[k]]).sum()
        };
        if self.n >= 4096 {
            (0..self.n).into_par_iter().map(row).collect()
        } else {
            (0..self.n).map(row).collect()
        }
    }

    /// Transpose of one base step (the discrete Koopman side).
    pub fn apply_base_adjoint(&self, w: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::default(); self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[k]] += self.vals[k] * w[i];
            }
        }
        out
    }

    /// `n` steps of F.
    pub fn apply_n(&self, v: &[C64], n: usize) -> Vec<C64> {
        let mut out = v.to_vec();
        for _ in 0..n * self.power {
            out = self.apply_base(&out);
        }
        out
    }

    pub fn apply(&self, v: &GridFunction, n: usize) -> GridFunction {
        let v = self.resample(v);
        GridFunction::new(self.y_lo, self.y_hi, self.apply_n(&v.values, n))
    }

    /// Brings a grid function onto this operator's grid.
    pub fn resample(&self, v: &GridFunction) -> GridFunction {
        if v.n() == self.n {
            v.clone()
        } else {
            GridFunction::from_fn(self.n, self.y_lo, self.y_hi, |x| v.eval(x))
        }
    }
}

/// Leading eigendata of L_σ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralData {
    pub sigma: f64,
    /// λ_σ refined by duality against e^{σφ}.
    pub lambda: f64,
    /// Leading eigenvalue of the discretized operator.
    pub lambda_ulam: f64,
    pub f: GridFunction,
    pub inv_f: GridFunction,
    /// Λ_σ = λ_{2σ}^{1/2}/λ_σ
    pub big_lambda: f64,
    /// ‖A f − λ f‖₁ for the discretized operator A of F.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralHeader {
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_ulam: f64,
    pub big_lambda: f64,
    pub residual: f64,
    pub grid: usize,
    pub sup_f: f64,
    pub inf_f: f64,
}

impl SpectralData {
    pub fn sup_f(&self) -> f64 {
        self.f.sup_re()
    }

    pub fn inf_f(&self) -> f64 {
        self.f.inf_re()
    }

    /// sup f_σ / inf f_σ
    pub fn ratio(&self) -> f64 {
        self.sup_f() / self.inf_f()
    }

    pub fn header(&self) -> SpectralHeader {
        SpectralHeader {
            sigma: self.sigma,
            lambda: self.lambda,
            lambda_ulam: self.lambda_ulam,
            big_lambda: self.big_lambda,
            residual: self.residual,
            grid: self.f.n(),
            sup_f: self.sup_f(),
            inf_f: self.inf_f(),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "f"])?;
        for (i, v) in self.f.values.iter().enumerate() {
            wr.write_record([format!("{:.17e}", self.f.center(i)), format!("{:.17e}", v.re)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 10_000;

fn l1(v: &[C64], h: f64) -> f64 {
    v.iter().map(|z| z.norm()).sum::<f64>() * h
}

/// Power iteration for the leading eigenpair of A^power. Returns (λ_U, f, residual, iterations).
pub fn power_iteration(op: &UlamOperator) -> Result<(f64, Vec<C64>, f64, usize)> {
    let n = op.n;
    let h = (op.y_hi - op.y_lo) / n as f64;
    let mut f = vec![C64::new(1.0 / (op.y_hi - op.y_lo), 0.0); n];
    let mut lam_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        let af = op.apply_n(&f, 1);
        let sf: f64 = f.iter().map(|z| z.re).sum();
        let saf: f64 = af.iter().map(|z| z.re).sum();
        let lam = saf / sf;
        residual = l1(&af.iter().zip(&f).map(|(a, b)| a - b * lam).collect::<Vec<_>>(), h);
        let norm = saf * h;
        f = af.into_iter().map(|z| z / norm).collect();
        if it >= 5 && (lam - lam_prev).abs() < POWER_TOL && residual < 1e-10 {
            return Ok((lam, f, residual, it));
        }
        lam_prev = lam;
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER, residual })
}

/// λ refined by duality: ∫ L_σ f = ∫ e^{σφ_power} f, with the integral split at the
/// cylinder boundaries of F so that the quadrature sees only smooth pieces.
fn refined_lambda(map: &MapSpec, roof: &Roof, sigma: f64, f: &GridFunction) -> Result<f64> {
    let hs = map.inverse_branches(1, Query::Interval(map.y_lo, map.y_hi), usize::MAX)?;
    let mut cuts: Vec<f64> = hs.iter().flat_map(|h| [h.range.0, h.range.1]).collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let n = f.n();
    let h = f.h();
    let num: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (f.y_lo + i as f64 * h, f.y_lo + (i + 1) as f64 * h);
            let k0 = cuts.partition_point(|&c| c <= a);
            let mut pts = vec![a];
            pts.extend(cuts[k0..].iter().copied().take_while(|&c| c < b));
            pts.push(b);
            let mut acc = 0.0;
            for w in pts.windows(2) {
                let m = 0.5 * (w[0] + w[1]);
                // φ_power along the orbit of the piece; constant word on the piece
                let word = hs.iter().find(|h| m >= h.range.0 && m < h.range.1);
                acc += gauss8(w[0], w[1], |y| match word {
                    Some(_) => (sigma * map.roof_sum(roof, y)).exp(),
                    None => 0.0,
                });
            }
            acc * f.values[i].re
        })
        .sum();
    let den = f.integral().re;
    Ok(num / den)
}

fn eigen_single(map: &MapSpec, roof: &Roof, sigma: f64, n: usize) -> Result<(f64, f64, GridFunction, f64, usize)> {
    let op = UlamOperator::assemble(map, roof, TwistParam::real(sigma), n)?;
    let (lam_u, f, residual, it) = power_iteration(&op)?;
    let f = GridFunction::new(map.y_lo, map.y_hi, f.into_iter().map(|z| C64::new(z.re, 0.0)).collect());
    let min = f.inf_re();
    if !(min > 0.0) {
        return Err(Error::NonPositive { min });
    }
    let lam = if sigma == 0.0 { lam_u } else { refined_lambda(map, roof, sigma, &f)? };
    Ok((lam, lam_u, f, residual, it))
}

/// λ_σ, f_σ (∫f_σ = 1), 1/f_σ and Λ_σ from a second run at 2σ.
pub fn eigendata(map: &MapSpec, roof: &Roof, sigma: f64, n: usize) -> Result<SpectralData> {
    let (lambda, lambda_ulam, f, residual, iterations) = eigen_single(map, roof, sigma, n)?;
    let big_lambda = if sigma == 0.0 {
        1.0
    } else {
        let (l2, ..) = eigen_single(map, roof, 2.0 * sigma, n)?;
        l2.sqrt() / lambda
    };
    let inv_f = f.map(|z| C64::new(1.0 / z.re, 0.0));
    Ok(SpectralData { sigma, lambda, lambda_ulam, f, inv_f, big_lambda, residual, iterations })
}

/// Discretized L̃_s: w ↦ A(f_σ w)/(λ^{1/p} f_σ) per base step, so that `power`
/// steps give the normalized operator of F exactly on the grid.
#[derive(Clone, Debug)]
pub struct NormalizedUlam {
    pub op: UlamOperator,
    pub f: Vec<f64>,
    pub lambda_base: f64,
}

impl NormalizedUlam {
    pub fn new(map: &MapSpec, roof: &Roof, spec: &SpectralData, b: f64, n: usize) -> Result<NormalizedUlam> {
        let op = UlamOperator::assemble(map, roof, TwistParam::new(spec.sigma, b), n)?;
        Ok(NormalizedUlam::from_op(op, spec))
    }

    pub fn from_op(op: UlamOperator, spec: &SpectralData) -> NormalizedUlam {
        let f = op.resample(&spec.f).values.iter().map(|z| z.re).collect();
        let lambda_base = spec.lambda_ulam.powf(1.0 / op.power as f64);
        NormalizedUlam { op, f, lambda_base }
    }

    pub fn n(&self) -> usize {
        self.op.n
    }

    pub fn step_base(&self, v: &[C64]) -> Vec<C64> {
        let fv: Vec<C64> = v.iter().zip(&self.f).map(|(z, f)| z * f).collect();
        let a = self.op.apply_base(&fv);
        a.into_iter().zip(&self.f).map(|(z, f)| z / (self.lambda_base * f)).collect()
    }

    pub fn apply_n(&self, v: &[C64], n: usize) -> Vec<C64> {
        let mut out = v.to_vec();
        for _ in 0..n * self.op.power {
            out = self.step_base(&out);
        }
        out
    }

    pub fn apply(&self, v: &GridFunction, n: usize) -> GridFunction {
        let v = self.op.resample(v);
        GridFunction::new(self.op.y_lo, self.op.y_hi, self.apply_n(&v.values, n))
    }
}

/// Empirical sup of ‖(L_{s₁} − L_{s₂})v‖_BV / |σ₁ − σ₂| over the family, each v
/// scaled to ‖v‖_BV = 1. Returns 0 when σ₁ = σ₂.
pub fn continuity_modulus(
    map: &MapSpec,
    roof: &Roof,
    pairs: &[(TwistParam, TwistParam)],
    family: &[GridFunction],
    n: usize,
) -> Result<f64> {
    let mut best = 0.0f64;
    for (s1, s2) in pairs {
        let ds = (s1.sigma - s2.sigma).abs();
        if ds == 0.0 {
            continue;
        }
        let a1 = UlamOperator::assemble(map, roof, *s1, n)?;
        let a2 = UlamOperator::assemble(map, roof, *s2, n)?;
        let r = family
            .par_iter()
            .map(|v| {
                let v = a1.resample(v);
                let v = v.scale(C64::new(1.0 / v.bv_norm(), 0.0));
                let d = a1.apply(&v, 1).zip(&a2.apply(&v, 1), |x, y| x - y);
                d.bv_norm() / ds
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(r);
    }
    Ok(best)
}

/// sup over h ∈ H_n and 129 sample points of λ_σ^{-n} |h'(x)| e^{σφ_n(h x)},
/// by depth-first search over base preimages with branch-and-bound pruning.
pub fn branch_weight_bound(map: &MapSpec, roof: &Roof, sigma: f64, lambda: f64, n: usize) -> f64 {
    let steps = n * map.power;
    let lb = lambda.powf(1.0 / map.power as f64);
    let xs: Vec<f64> = (0..129).map(|t| map.y_lo + map.len() * (t as f64 + 0.5) / 129.0).collect();
    let mut s_max = 0.0f64;
    for &x in &xs {
        for (_, y, dh) in map.base_preimages(x) {
            s_max = s_max.max(dh * (sigma * roof.phi(y)).exp() / lb);
        }
    }
    let cap = 1.1 * s_max;

    fn dfs(map: &MapSpec, roof: &Roof, sigma: f64, lb: f64, cap: f64, x: f64, rem: usize, w: f64, best: &mut f64) {
        if rem == 0 {
            *best = best.max(w);
            return;
        }
        if w * cap.powi(rem as i32) <= *best {
            return;
        }
        let mut kids: Vec<(f64, f64)> =
            map.base_preimages(x).map(|(_, y, dh)| (y, w * dh * (sigma * roof.phi(y)).exp() / lb)).collect();
        kids.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (y, wk) in kids {
            dfs(map, roof, sigma, lb, cap, y, rem - 1, wk, best);
        }
    }

    xs.par_iter()
        .map(|&x| {
            let mut best = 0.0;
            dfs(map, roof, sigma, lb, cap, x, steps, 1.0, &mut best);
            best
        })
        .reduce(|| 0.0, f64::max)
}
