//! BV functions on a uniform grid and the functionals used by the cone:
//! variation, oscillation, jump sizes, the Keller seminorm, the extra term
//! E_I and the b-norm.

use crate::interval_map::DiscontinuityCatalog;
use crate::{Error, Result, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Jump located at `x`: right limit minus left limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub x: f64,
    pub delta: C64,
}

/// Piecewise-constant function: `values[i]` is the value on cell i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub y_lo: f64,
    pub y_hi: f64,
    pub values: Vec<C64>,
    pub jumps: Option<Vec<Jump>>,
}

impl GridFunction {
    pub fn new(y_lo: f64, y_hi: f64, values: Vec<C64>) -> GridFunction {
        GridFunction { y_lo, y_hi, values, jumps: None }
    }

    pub fn constant(n: usize, y_lo: f64, y_hi: f64, c: C64) -> GridFunction {
        GridFunction::new(y_lo, y_hi, vec![c; n])
    }

    pub fn from_fn(n: usize, y_lo: f64, y_hi: f64, f: impl Fn(f64) -> C64) -> GridFunction {
        let h = (y_hi - y_lo) / n as f64;
        GridFunction::new(y_lo, y_hi, (0..n).map(|i| f(y_lo + (i as f64 + 0.5) * h)).collect())
    }

    pub fn from_real(n: usize, y_lo: f64, y_hi: f64, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_fn(n, y_lo, y_hi, |x| C64::new(f(x), 0.0))
    }

    /// Σ a_i 1_{[x_i, q)} with an exact jump catalog.
    pub fn step(n: usize, y_lo: f64, y_hi: f64, terms: &[(f64, C64)], q: f64) -> GridFunction {
        let mut g = GridFunction::from_fn(n, y_lo, y_hi, |x| {
            terms.iter().filter(|t| x >= t.0 && x < q).map(|t| t.1).sum()
        });
        let mut jumps: Vec<Jump> = Vec::new();
        for &(x, a) in terms {
            if x > y_lo {
                match jumps.iter_mut().find(|j| (j.x - x).abs() < 1e-15) {
                    Some(j) => j.delta += a,
                    None => jumps.push(Jump { x, delta: a }),
                }
            }
        }
        if q < y_hi {
            let total: C64 = terms.iter().filter(|t| t.0 < q).map(|t| t.1).sum();
            jumps.push(Jump { x: q, delta: -total });
        }
        jumps.retain(|j| j.delta.norm() > 0.0);
        jumps.sort_by(|a, b| a.x.total_cmp(&b.x));
        g.jumps = Some(jumps);
        g
    }

    pub fn indicator(n: usize, y_lo: f64, y_hi: f64, a: f64, b: f64) -> GridFunction {
        GridFunction::step(n, y_lo, y_hi, &[(a, C64::new(1.0, 0.0))], b)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn h(&self) -> f64 {
        (self.y_hi - self.y_lo) / self.n() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.y_lo + (i as f64 + 0.5) * self.h()
    }

    pub fn cell_of(&self, x: f64) -> usize {
        let i = ((x - self.y_lo) / self.h()).floor();
        (i.max(0.0) as usize).min(self.n() - 1)
    }

    /// Indices [i0, i1) of the cells meeting [a, b).
    pub fn cells_meeting(&self, a: f64, b: f64) -> (usize, usize) {
        let h = self.h();
        let i0 = ((a - self.y_lo) / h).floor().max(0.0) as usize;
        let i1 = ((b - self.y_lo) / h).ceil().max(0.0) as usize;
        (i0.min(self.n()), i1.min(self.n()).max(i0.min(self.n())))
    }

    /// Indices [i0, i1) of the cells contained in [a, b].
    pub fn cells_inside(&self, a: f64, b: f64) -> (usize, usize) {
        let h = self.h();
        let i0 = ((a - self.y_lo) / h - 1e-9).ceil().max(0.0) as usize;
        let i1 = ((b - self.y_lo) / h + 1e-9).floor().max(0.0) as usize;
        (i0.min(self.n()), i1.min(self.n()).max(i0.min(self.n())))
    }

    pub fn eval_step(&self, x: f64) -> C64 {
        self.values[self.cell_of(x)]
    }

    /// Linear interpolation between cell centers, not across catalogued jumps.
    pub fn eval(&self, x: f64) -> C64 {
        let n = self.n();
        let i = self.cell_of(x);
        let c = self.center(i);
        let k = if x < c {
            if i == 0 {
                return self.values[0];
            }
            i - 1
        } else {
            if i + 1 == n {
                return self.values[n - 1];
            }
            i + 1
        };
        let ck = self.center(k);
        if let Some(js) = &self.jumps {
            let (lo, hi) = if ck < c { (ck, c) } else { (c, ck) };
            let p = js.partition_point(|j| j.x <= lo);
            if p < js.len() && js[p].x <= hi {
                return self.values[i];
            }
        }
        let t = (x - c) / (ck - c);
        self.values[i] * (1.0 - t) + self.values[k] * t
    }

    pub fn eval_re(&self, x: f64) -> f64 {
        self.eval(x).re
    }

    pub fn var(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Variation over the cells meeting [a, b).
    pub fn var_on(&self, a: f64, b: f64) -> f64 {
        let (i0, i1) = self.cells_meeting(a, b);
        if i1 <= i0 + 1 {
            return 0.0;
        }
        self.values[i0..i1].windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.h()
    }

    pub fn l2sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.h()
    }

    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.h()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::MIN, f64::max)
    }

    pub fn inf_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::MAX, f64::min)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// ‖v‖_b = Var v/(1+|b|) + ‖v‖₁.
    pub fn b_norm(&self, b: f64) -> f64 {
        self.var() / (1.0 + b.abs()) + self.l1()
    }

    /// Var + L¹.
    pub fn bv_norm(&self) -> f64 {
        self.var() + self.l1()
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        let mut g = self.map(|v| v * c);
        if let Some(js) = &self.jumps {
            g.jumps = Some(js.iter().map(|j| Jump { x: j.x, delta: j.delta * c }).collect());
        }
        g
    }

    /// Pointwise map of the values; the jump catalog is dropped.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> GridFunction {
        GridFunction::new(self.y_lo, self.y_hi, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip(&self, other: &GridFunction, f: impl Fn(C64, C64) -> C64) -> GridFunction {
        let vals = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridFunction::new(self.y_lo, self.y_hi, vals)
    }

    /// Diameter of the value set on the cells meeting [a, b).
    pub fn osc_on(&self, a: f64, b: f64) -> f64 {
        let (i0, i1) = self.cells_meeting(a, b);
        diameter(&self.values[i0..i1])
    }

    /// Nearest cell boundary to x as an index in 0..=N.
    fn boundary_index(&self, x: f64) -> usize {
        let j = ((x - self.y_lo) / self.h()).round();
        (j.max(0.0) as usize).min(self.n())
    }

    /// Size of the jump at x: exact from the catalog if present, else the
    /// difference of the two cells adjacent to x.
    pub fn jump_size(&self, x: f64) -> f64 {
        if let Some(js) = &self.jumps {
            let tol = 1e-12 * (self.y_hi - self.y_lo);
            return js.iter().filter(|j| (j.x - x).abs() <= tol).map(|j| j.delta).sum::<C64>().norm();
        }
        let j = self.boundary_index(x);
        if j == 0 || j == self.n() {
            return 0.0;
        }
        (self.values[j] - self.values[j - 1]).norm()
    }

    /// Jump at x beyond what the neighbouring cell differences explain; zero for
    /// smooth grid functions up to second-order terms.
    pub fn jump_excess(&self, x: f64) -> f64 {
        if self.jumps.is_some() {
            return self.jump_size(x);
        }
        let j = self.boundary_index(x);
        let n = self.n();
        if j == 0 || j == n {
            return 0.0;
        }
        let d0 = (self.values[j] - self.values[j - 1]).norm();
        let mut nb = 0.0f64;
        if j >= 2 {
            nb = nb.max((self.values[j - 1] - self.values[j - 2]).norm());
        }
        if j + 1 < n {
            nb = nb.max((self.values[j + 1] - self.values[j]).norm());
        }
        (d0 - nb).max(0.0)
    }

    /// limsup |v| at x: max of the two adjacent cells.
    pub fn limsup_abs(&self, x: f64) -> f64 {
        let j = self.boundary_index(x);
        let a = self.values[j.saturating_sub(1).min(self.n() - 1)].norm();
        let b = self.values[j.min(self.n() - 1)].norm();
        a.max(b)
    }

    /// Keller's seminorm sup_κ (1/κ)∫ Osc(v, B_κ(x)) dx over dyadic κ ≥ grid
    /// resolution. The integral is exact for the step representative; complex
    /// oscillations are taken as the max over 32 projection directions.
    pub fn keller_var(&self) -> f64 {
        let n = self.n();
        let h = self.h();
        let len = self.y_hi - self.y_lo;
        let dirs: Vec<C64> = if self.is_real() {
            vec![C64::new(1.0, 0.0)]
        } else {
            (0..32).map(|k| C64::from_polar(1.0, std::f64::consts::PI * k as f64 / 32.0)).collect()
        };
        let tables: Vec<(SparseTable, SparseTable)> = dirs
            .iter()
            .map(|d| {
                let p: Vec<f64> = self.values.iter().map(|v| (v * d.conj()).re).collect();
                (SparseTable::new(&p, f64::max), SparseTable::new(&p, f64::min))
            })
            .collect();
        let osc = |l: usize, r: usize| -> f64 {
            tables.iter().map(|(mx, mn)| mx.query(l, r) - mn.query(l, r)).fold(0.0, f64::max)
        };
        let mut best = 0.0f64;
        let mut kappa = 0.5f64.powi((len.log2()).ceil() as i32 + 1) * 2.0;
        while kappa >= len {
            kappa *= 0.5;
        }
        while kappa >= h * (1.0 - 1e-12) {
            let ratio = kappa / h;
            let q = (ratio + 1e-9).floor();
            let r = (ratio - q).max(0.0);
            let q = q as i64;
            let mut cuts = vec![0.0, 1.0, r, 1.0 - r];
            cuts.sort_by(|a, b| a.total_cmp(b));
            let mut integral = 0.0;
            for i in 0..n as i64 {
                for w in cuts.windows(2) {
                    let wt = w[1] - w[0];
                    if wt <= 1e-15 {
                        continue;
                    }
                    let t = 0.5 * (w[0] + w[1]);
                    let l = if t < r { i - q - 1 } else { i - q };
                    let rr = if t <= 1.0 - r { i + q } else { i + q + 1 };
                    let l = l.clamp(0, n as i64 - 1) as usize;
                    let rr = rr.clamp(0, n as i64 - 1) as usize;
                    integral += wt * osc(l, rr);
                }
            }
            best = best.max(integral * h / kappa);
            kappa *= 0.5;
        }
        best
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cell", "re", "im"])?;
        for (i, v) in self.values.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{:.17e}", v.re), format!("{:.17e}", v.im)])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, y_lo: f64, y_hi: f64) -> Result<GridFunction> {
        let mut rd = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad grid function row {:?}", rec)))
            };
            let i = parse(0)? as usize;
            if i != values.len() {
                return Err(Error::Config(format!("cell index {i} out of order")));
            }
            values.push(C64::new(parse(1)?, parse(2)?));
        }
        Ok(GridFunction::new(y_lo, y_hi, values))
    }

    pub fn write_jumps_csv<W: std::io::Write>(&self, w: W, catalog: Option<&DiscontinuityCatalog>) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "re", "im", "depth"])?;
        for j in self.jumps.iter().flatten() {
            let depth = catalog
                .and_then(|c| c.depths_of(j.x, 1e-12).first().copied())
                .map(|d| d.to_string())
                .unwrap_or_default();
            wr.write_record([format!("{:.17e}", j.x), format!("{:.17e}", j.delta.re), format!("{:.17e}", j.delta.im), depth])?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct SparseTable {
    levels: Vec<Vec<f64>>,
    op: fn(f64, f64) -> f64,
}

impl SparseTable {
    fn new(v: &[f64], op: fn(f64, f64) -> f64) -> SparseTable {
        let mut levels = vec![v.to_vec()];
        let mut w = 1;
        while 2 * w <= v.len() {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..=v.len() - 2 * w).map(|i| op(prev[i], prev[i + w])).collect();
            levels.push(next);
            w *= 2;
        }
        SparseTable { levels, op }
    }

    /// op over the closed index range [l, r].
    fn query(&self, l: usize, r: usize) -> f64 {
        let len = r - l + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        (self.op)(self.levels[k][l], self.levels[k][r + 1 - (1 << k)])
    }
}

/// Diameter sup |a − b| of a finite set of complex values.
pub fn diameter(pts: &[C64]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    if pts.iter().all(|p| p.im == 0.0) {
        let mx = pts.iter().map(|p| p.re).fold(f64::MIN, f64::max);
        let mn = pts.iter().map(|p| p.re).fold(f64::MAX, f64::min);
        return mx - mn;
    }
    let hull = convex_hull(pts);
    let m = hull.len();
    if m == 1 {
        return 0.0;
    }
    if m == 2 {
        return (hull[0] - hull[1]).norm();
    }
    let area = |a: C64, b: C64, c: C64| ((b - a).re * (c - a).im - (b - a).im * (c - a).re).abs();
    let mut best = 0.0f64;
    let mut j = 1;
    for i in 0..m {
        let ni = (i + 1) % m;
        while area(hull[i], hull[ni], hull[(j + 1) % m]) > area(hull[i], hull[ni], hull[j]) {
            j = (j + 1) % m;
        }
        best = best.max((hull[i] - hull[j]).norm()).max((hull[ni] - hull[j]).norm());
    }
    best
}

fn convex_hull(pts: &[C64]) -> Vec<C64> {
    let mut p: Vec<C64> = pts.to_vec();
    p.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: C64, a: C64, b: C64| (a - o).re * (b - o).im - (a - o).im * (b - o).re;
    let mut lower: Vec<C64> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// E_I(u) truncated at the catalog depth, with its geometric remainder bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExtraTerm {
    pub value: f64,
    pub remainder: f64,
}

pub fn extra_term(u: &GridFunction, lo: f64, hi: f64, catalog: &DiscontinuityCatalog, k: usize, rho: f64) -> ExtraTerm {
    let j_max = catalog.j_max();
    let mut value = 0.0;
    for j in (k + 1)..=j_max {
        let s: f64 = catalog.interior(j, lo, hi).map(|x| u.limsup_abs(x)).sum();
        value += rho.powi(-(j as i32)) * s;
    }
    let remainder = catalog.n1 as f64 * rho.powi(-(j_max as i32)) / (rho - 1.0) * u.linf();
    ExtraTerm { value, remainder }
}

#[derive(Clone, Debug)]
pub struct ConePair {
    pub u: GridFunction,
    pub v: GridFunction,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeParams {
    pub c7: f64,
    pub c8: f64,
    pub c10: f64,
    pub k: usize,
    pub rho: f64,
    /// Relative slack on pointwise comparisons.
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonPositive,
    Domination,
    JumpOutsideX,
    JumpSize,
    Oscillation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub lo: f64,
    pub hi: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeReport {
    pub in_cone: bool,
    pub violations: Vec<Violation>,
    pub intervals_checked: usize,
    pub points_checked: usize,
    /// max over checked intervals of Osc/(allowed bound)
    pub worst_osc_ratio: f64,
    /// dyadic sweep only: the bound holds on all subintervals up to this factor
    pub dyadic_factor: f64,
}

/// Membership of (u, v) in the cone: domination, jump locations and sizes at
/// catalog points of depth > k, and the oscillation bound on a dyadic sweep
/// of subintervals of the atoms of P_k.
pub fn cone_check(pair: &ConePair, catalog: &DiscontinuityCatalog, p: &ConeParams) -> ConeReport {
    let (u, v) = (&pair.u, &pair.v);
    let mut viol = Vec::new();
    let push = |viol: &mut Vec<Violation>, x: Violation| {
        if viol.len() < 32 {
            viol.push(x);
        }
    };
    let h = u.h();
    for i in 0..u.n() {
        let (ui, vi) = (u.values[i].re, v.values[i].norm());
        let (a, b) = (u.y_lo + i as f64 * h, u.y_lo + (i + 1) as f64 * h);
        if !(ui > 0.0) {
            push(&mut viol, Violation { kind: ViolationKind::NonPositive, lo: a, hi: b, lhs: ui, rhs: 0.0 });
        } else if vi > ui * (1.0 + p.tol) + 1e-14 {
            push(&mut viol, Violation { kind: ViolationKind::Domination, lo: a, hi: b, lhs: vi, rhs: ui });
        }
    }
    let tol_x = 1e-9 * (u.y_hi - u.y_lo);
    for g in [u, v] {
        for j in g.jumps.iter().flatten() {
            if !catalog.contains(j.x, tol_x) {
                push(
                    &mut viol,
                    Violation { kind: ViolationKind::JumpOutsideX, lo: j.x, hi: j.x, lhs: j.delta.norm(), rhs: 0.0 },
                );
            }
        }
    }
    let k = p.k.min(catalog.j_max());
    let mut points_checked = 0;
    let mut seen: Vec<f64> = Vec::new();
    for j in (k + 1)..=catalog.j_max() {
        for x in catalog.interior(j, catalog.y_lo, catalog.y_hi) {
            if seen.iter().any(|s| (s - x).abs() <= tol_x) {
                continue;
            }
            seen.push(x);
            let depths = catalog.depths_of(x, tol_x);
            if depths.iter().any(|&d| d <= k) {
                continue;
            }
            points_checked += 1;
            let weight: f64 = depths.iter().map(|&d| p.rho.powi(-(d as i32))).sum();
            let bound = p.c7 * weight * u.limsup_abs(x) * (1.0 + p.tol);
            for g in [u, v] {
                let s = g.jump_excess(x);
                if s > bound + 1e-14 {
                    push(&mut viol, Violation { kind: ViolationKind::JumpSize, lo: x, hi: x, lhs: s, rhs: bound });
                }
            }
        }
    }
    let mut intervals = 0;
    let mut worst = 0.0f64;
    for (lo, hi) in catalog.atoms(k) {
        let (i0, i1) = u.cells_inside(lo, hi);
        let mut stack = vec![(i0, i1)];
        while let Some((a, b)) = stack.pop() {
            if b < a + 2 {
                continue;
            }
            intervals += 1;
            let (xa, xb) = (u.y_lo + a as f64 * h, u.y_lo + b as f64 * h);
            let osc = diameter(&v.values[a..b]);
            let sup_u = u.values[a..b].iter().map(|z| z.re).fold(f64::MIN, f64::max);
            let e = extra_term(u, xa, xb, catalog, k, p.rho);
            let rhs = p.c10 * pair.b.abs() * (xb - xa) * sup_u + p.c8 * (e.value + e.remainder);
            if rhs > 0.0 {
                worst = worst.max(osc / rhs);
            }
            if osc > rhs * (1.0 + p.tol) + 1e-14 {
                push(&mut viol, Violation { kind: ViolationKind::Oscillation, lo: xa, hi: xb, lhs: osc, rhs });
            }
            let mid = (a + b) / 2;
            stack.push((a, mid));
            stack.push((mid, b));
        }
    }
    ConeReport {
        in_cone: viol.is_empty(),
        violations: viol,
        intervals_checked: intervals,
        points_checked,
        worst_osc_ratio: worst,
        dyadic_factor: 2.0,
    }
}

/// Kinds of randomized test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Step,
    Smooth,
    Sawtooth,
    Mixed,
}

/// Random test function of the given kind. Steps sit at `anchors` when given
/// (catalog points), otherwise at random locations.
pub fn random_function<R: Rng>(
    rng: &mut R,
    kind: TestKind,
    n: usize,
    y_lo: f64,
    y_hi: f64,
    anchors: &[f64],
    complex: bool,
) -> GridFunction {
    let len = y_hi - y_lo;
    let coef = |rng: &mut R| -> C64 {
        let re = rng.gen_range(-1.0..1.0);
        let im = if complex { rng.gen_range(-1.0..1.0) } else { 0.0 };
        C64::new(re, im)
    };
    match kind {
        TestKind::Step => {
            let m = rng.gen_range(1..=6);
            let terms: Vec<(f64, C64)> = (0..m)
                .map(|_| {
                    let x = if !anchors.is_empty() && rng.gen_bool(0.5) {
                        anchors[rng.gen_range(0..anchors.len())]
                    } else {
                        y_lo + len * rng.gen_range(0.02..0.98)
                    };
                    (x, coef(rng))
                })
                .collect();
            let base = coef(rng);
            let mut g = GridFunction::step(n, y_lo, y_hi, &terms, y_hi);
            g.values.iter_mut().for_each(|v| *v += base);
            g
        }
        TestKind::Smooth => {
            let modes: Vec<(f64, C64, f64)> = (0..4)
                .map(|k| ((k + 1) as f64, coef(rng), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect();
            let base = coef(rng);
            GridFunction::from_fn(n, y_lo, y_hi, |x| {
                let t = (x - y_lo) / len;
                base + modes
                    .iter()
                    .map(|(k, c, ph)| c * ((std::f64::consts::TAU * k * t + ph).sin() / k))
                    .sum::<C64>()
            })
        }
        TestKind::Sawtooth => {
            let periods = rng.gen_range(8..=64) as f64;
            let amp = coef(rng);
            GridFunction::from_fn(n, y_lo, y_hi, |x| {
                let t = (x - y_lo) / len * periods;
                amp * (2.0 * (t - t.floor()) - 1.0)
            })
        }
        TestKind::Mixed => {
            let a = random_function(rng, TestKind::Step, n, y_lo, y_hi, anchors, complex);
            let b = random_function(rng, TestKind::Smooth, n, y_lo, y_hi, anchors, complex);
            let mut g = a.zip(&b, |x, y| x + y);
            g.jumps = a.jumps;
            g
        }
    }
}

/// Deterministic family cycling through the kinds.
pub fn random_family(seed: u64, count: usize, n: usize, y_lo: f64, y_hi: f64, anchors: &[f64], complex: bool) -> Vec<GridFunction> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kinds = [TestKind::Step, TestKind::Smooth, TestKind::Sawtooth, TestKind::Mixed];
    (0..count).map(|i| random_function(&mut rng, kinds[i % 4], n, y_lo, y_hi, anchors, complex)).collect()
}
