//! Piecewise expanding interval maps with finite image partition.
//!
//! A [`MapSpec`] stores the branches of a base map together with a `power`:
//! every operator built on it acts with `F = base^power`. Branches are
//! compositions of elementary pieces so that first-return maps of
//! intermittent maps can be represented exactly.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    Affine { slope: f64, shift: f64 },
    /// Left branch x(1 + 2^α x^α) of the intermittent map on [0, ½).
    Lsv { alpha: f64 },
}

impl Piece {
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Piece::Affine { slope, shift } => (slope * x + shift, slope, 0.0),
            Piece::Lsv { alpha } => {
                let c = if alpha == 1.0 { 2.0 } else { 2f64.powf(alpha) };
                let xa = if alpha == 1.0 { x.max(0.0) } else { x.max(0.0).powf(alpha) };
                let d2 = if x > 0.0 { c * (1.0 + alpha) * alpha * xa / x } else { 0.0 };
                (x + c * x * xa, 1.0 + c * (1.0 + alpha) * xa, d2)
            }
        }
    }

    fn inverse(&self, y: f64) -> f64 {
        match *self {
            Piece::Affine { slope, shift } => (y - shift) / slope,
            Piece::Lsv { alpha } => {
                if y <= 0.0 {
                    return 0.0;
                }
                if alpha == 1.0 {
                    // x + 2x² = y
                    return 2.0 * y / (1.0 + (1.0 + 8.0 * y).sqrt());
                }
                // g(x) >= x, so the root lies in [0, y]
                let (mut lo, mut hi) = (0.0, y);
                let mut x = 0.5 * y;
                for _ in 0..200 {
                    let (g, d, _) = self.jet(x);
                    let r = g - y;
                    if r > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let mut next = x - r / d;
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    let done = (next - x).abs() <= 1e-17 + 1e-16 * x || hi - lo < 1e-15;
                    x = next;
                    if done {
                        break;
                    }
                }
                x
            }
        }
    }
}

/// One monotone branch: domain [a, b) mapped onto the image interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub domain: (f64, f64),
    pub image: (f64, f64),
    pub pieces: Vec<Piece>,
    pub increasing: bool,
    /// Return time for first-return maps, branch index otherwise.
    pub tag: usize,
}

impl Branch {
    /// (F, F', F'') by the chain rule through the pieces.
    pub fn jet(&self, x: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (x, 1.0, 0.0);
        for p in &self.pieces {
            let (pv, p1, p2) = p.jet(v);
            d2 = p2 * d1 * d1 + p1 * d2;
            d1 *= p1;
            v = pv;
        }
        (v, d1, d2)
    }

    pub fn forward(&self, x: f64) -> f64 {
        self.jet(x).0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.jet(x).1
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        self.jet(x).2
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let mut x = y;
        for p in self.pieces.iter().rev() {
            x = p.inverse(x);
        }
        x.clamp(self.domain.0, self.domain.1)
    }

    pub fn image_contains(&self, y: f64) -> bool {
        y >= self.image.0 && y < self.image.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    ShiftedBeta { beta: f64, alpha: f64 },
    MpFirstReturn { alpha: f64, gamma: f64, t_max: usize },
    Custom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSpec {
    pub y_lo: f64,
    pub y_hi: f64,
    pub branches: Vec<Branch>,
    pub family: Family,
    pub power: usize,
    /// Lebesgue mass of the part of Y not covered by any branch (truncation).
    pub dropped_mass: f64,
}

impl MapSpec {
    pub fn shifted_beta(beta: f64, alpha: f64) -> Result<MapSpec> {
        if !(beta > 1.0) || !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "shifted_beta needs beta > 1 and alpha in [0,1), got beta={beta}, alpha={alpha}"
            )));
        }
        let mut cuts = vec![0.0];
        let mut m = 1.0;
        loop {
            let x = (m - alpha) / beta;
            if x >= 1.0 - SNAP {
                break;
            }
            if x > SNAP {
                cuts.push(x);
            }
            m += 1.0;
        }
        cuts.push(1.0);
        let mut branches = Vec::new();
        for (i, w) in cuts.windows(2).enumerate() {
            let offset = (beta * w[0] + alpha + 1e-9).floor();
            let lo = if i == 0 { alpha } else { 0.0 };
            let hi = if i + 2 == cuts.len() { beta + alpha - offset } else { 1.0 };
            branches.push(Branch {
                domain: (w[0], w[1]),
                image: (lo, hi.min(1.0)),
                pieces: vec![Piece::Affine { slope: beta, shift: alpha - offset }],
                increasing: true,
                tag: i,
            });
        }
        Ok(MapSpec {
            y_lo: 0.0,
            y_hi: 1.0,
            branches,
            family: Family::ShiftedBeta { beta, alpha },
            power: 1,
            dropped_mass: 0.0,
        })
    }

    pub fn doubling() -> MapSpec {
        MapSpec::shifted_beta(2.0, 0.0).expect("valid parameters")
    }

    pub fn golden_beta() -> MapSpec {
        MapSpec::shifted_beta(0.5 * (1.0 + 5f64.sqrt()), 0.0).expect("valid parameters")
    }

    /// First return to Y = [½, 1) of the intermittent map
    /// f(x) = x(1 + 2^α x^α) on [0, ½), f(x) = γ(2x − 1) on [½, 1],
    /// keeping return times up to `t_max`.
    pub fn mp_first_return(alpha: f64, gamma: f64, t_max: usize) -> Result<MapSpec> {
        if !(alpha > 0.0) || !(gamma > 0.5 && gamma <= 1.0) || t_max < 2 {
            return Err(Error::InvalidParams(format!(
                "mp_first_return needs alpha > 0, gamma in (1/2, 1], t_max >= 2; got alpha={alpha}, gamma={gamma}, t_max={t_max}"
            )));
        }
        let right = Piece::Affine { slope: 2.0 * gamma, shift: -gamma };
        let lsv = Piece::Lsv { alpha };
        // z_0 = 1/2, g(z_j) = z_{j-1}
        let mut z = vec![0.5];
        for j in 1..t_max {
            let prev = z[j - 1];
            z.push(lsv.inverse(prev));
        }
        let x_of = |y: f64| 0.5 + y / (2.0 * gamma);
        let mut branches = Vec::new();
        for tau in (2..=t_max).rev() {
            let j = tau - 1;
            let mut pieces = vec![right];
            pieces.extend(std::iter::repeat(lsv).take(j));
            branches.push(Branch {
                domain: (x_of(z[j]), x_of(z[j - 1])),
                image: (0.5, 1.0),
                pieces,
                increasing: true,
                tag: tau,
            });
        }
        if gamma > 0.5 {
            branches.push(Branch {
                domain: (x_of(0.5), 1.0),
                image: (0.5, gamma),
                pieces: vec![right],
                increasing: true,
                tag: 1,
            });
        }
        let dropped = x_of(z[t_max - 1]) - 0.5;
        Ok(MapSpec {
            y_lo: 0.5,
            y_hi: 1.0,
            branches,
            family: Family::MpFirstReturn { alpha, gamma, t_max },
            power: 1,
            dropped_mass: dropped,
        })
    }

    pub fn custom(y_lo: f64, y_hi: f64, mut branches: Vec<Branch>) -> Result<MapSpec> {
        branches.sort_by(|a, b| a.domain.0.total_cmp(&b.domain.0));
        for b in &branches {
            if !(b.domain.0 < b.domain.1) || b.domain.0 < y_lo || b.domain.1 > y_hi {
                return Err(Error::InvalidParams(format!("bad branch domain {:?}", b.domain)));
            }
        }
        let map = MapSpec { y_lo, y_hi, branches, family: Family::Custom, power: 1, dropped_mass: 0.0 };
        if map.base_rho0() <= 1.0 {
            return Err(Error::InvalidParams("branches are not uniformly expanding".into()));
        }
        Ok(map)
    }

    /// The same base map acting as its `p`-th iterate.
    pub fn iterate(&self, p: usize) -> MapSpec {
        MapSpec { power: p.max(1), ..self.clone() }
    }

    pub fn len(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn name(&self) -> String {
        let base = match &self.family {
            Family::ShiftedBeta { beta, alpha } => format!("shifted_beta({beta}, {alpha})"),
            Family::MpFirstReturn { alpha, gamma, t_max } => {
                format!("mp_first_return({alpha}, {gamma}; T_max={t_max})")
            }
            Family::Custom => "custom".to_string(),
        };
        if self.power > 1 {
            format!("{base}^{}", self.power)
        } else {
            base
        }
    }

    /// True if every base branch is full (image = Y), so the map is Markov.
    pub fn is_full_branch(&self) -> bool {
        self.branches
            .iter()
            .all(|b| (b.image.0 - self.y_lo).abs() < SNAP && (b.image.1 - self.y_hi).abs() < SNAP)
    }

    /// Base branch containing x (half-open, boundary points go right).
    pub fn branch_at(&self, x: f64) -> Option<usize> {
        if !(x >= self.y_lo && x < self.y_hi) {
            return None;
        }
        let i = self.branches.partition_point(|b| b.domain.0 <= x);
        if i == 0 {
            return None;
        }
        let b = &self.branches[i - 1];
        (x < b.domain.1).then_some(i - 1)
    }

    pub fn base_step(&self, x: f64) -> Option<f64> {
        let i = self.branch_at(x)?;
        Some(self.snap(self.branches[i].forward(x)))
    }

    /// One step of F = base^power.
    pub fn apply(&self, x: f64) -> Option<f64> {
        let mut y = x;
        for _ in 0..self.power {
            y = self.base_step(y)?;
        }
        Some(y)
    }

    pub fn snap(&self, x: f64) -> f64 {
        if (x - self.y_lo).abs() < SNAP {
            self.y_lo
        } else if (x - self.y_hi).abs() < SNAP {
            self.y_hi
        } else {
            x
        }
    }

    /// Base preimages of x: (branch, y, |h'(x)|).
    pub fn base_preimages(&self, x: f64) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.branches.iter().enumerate().filter(move |(_, b)| b.image_contains(x)).map(move |(i, b)| {
            let y = b.inverse(x);
            (i, y, 1.0 / b.deriv(y).abs())
        })
    }

    /// F along a forward word from y, extended continuously to closed cylinders.
    pub fn forward_word(&self, word: &[usize], y: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (y, 1.0, 0.0);
        for &c in word {
            let (pv, p1, p2) = self.branches[c].jet(v);
            d2 = p2 * d1 * d1 + p1 * d2;
            d1 *= p1;
            v = pv;
        }
        (v, d1, d2)
    }

    pub fn base_rho0(&self) -> f64 {
        let mut best = f64::INFINITY;
        for b in &self.branches {
            for t in 0..=16 {
                let x = b.domain.0 + (b.domain.1 - b.domain.0) * (t as f64 / 16.0);
                best = best.min(b.deriv(x).abs());
            }
        }
        best
    }

    /// φ_power(x) = Σ_{j<power} φ(base^j x).
    pub fn roof_sum(&self, roof: &Roof, x: f64) -> f64 {
        let mut y = x;
        let mut acc = 0.0;
        for j in 0..self.power {
            acc += roof.phi(y);
            if j + 1 < self.power {
                match self.base_step(y) {
                    Some(z) => y = z,
                    None => break,
                }
            }
        }
        acc
    }

    /// All h in H_n (n steps of F) whose domain contains the point or meets the interval.
    pub fn inverse_branches(&self, n: usize, at: Query, budget: usize) -> Result<Vec<InverseBranch>> {
        let steps = n * self.power;
        let mut out = Vec::new();
        let mut word_rev = Vec::with_capacity(steps);
        let mut visited = 0usize;
        let full = (self.y_lo, self.y_hi);
        self.dfs_branches(steps, at, full, full, &mut word_rev, &mut out, &mut visited, budget)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs_branches(
        &self,
        steps: usize,
        at: Query,
        dom: (f64, f64),
        range: (f64, f64),
        word_rev: &mut Vec<usize>,
        out: &mut Vec<InverseBranch>,
        visited: &mut usize,
        budget: usize,
    ) -> Result<()> {
        if word_rev.len() == steps {
            let word: Vec<usize> = word_rev.iter().rev().copied().collect();
            out.push(InverseBranch { word, domain: dom, range });
            return Ok(());
        }
        *visited += 1;
        if *visited > budget {
            let est = (self.branches.len() as f64).powi(steps as i32);
            return Err(Error::BudgetExceeded { estimate: est, budget });
        }
        for (c, b) in self.branches.iter().enumerate() {
            let j = (b.image.0.max(range.0), b.image.1.min(range.1));
            if !(j.1 - j.0 > SNAP * 1e-3) {
                continue;
            }
            // map J back up to the x-level through the current chain
            let fwd: Vec<usize> = word_rev.iter().rev().copied().collect();
            let a = self.forward_word(&fwd, j.0).0;
            let bb = self.forward_word(&fwd, j.1).0;
            let new_dom = (a.min(bb).max(dom.0), a.max(bb).min(dom.1));
            let keep = match at {
                Query::Point(x) => x >= new_dom.0 && x < new_dom.1,
                Query::Interval(lo, hi) => new_dom.0 < hi && new_dom.1 > lo,
            };
            if !keep {
                continue;
            }
            let (r0, r1) = (b.inverse(j.0), b.inverse(j.1));
            let new_range = (r0.min(r1), r0.max(r1));
            word_rev.push(c);
            self.dfs_branches(steps, at, new_dom, new_range, word_rev, out, visited, budget)?;
            word_rev.pop();
        }
        Ok(())
    }

    /// Evaluate an inverse branch at x, accumulating the roof along the inverse orbit.
    pub fn eval_inverse(&self, ib: &InverseBranch, x: f64, roof: Option<&Roof>) -> InvEval {
        let mut y = x;
        let mut dy = 1.0; // signed dy/dx
        let (mut phi, mut dphi) = (0.0, 0.0);
        for &c in ib.word.iter().rev() {
            let b = &self.branches[c];
            y = b.inverse(y);
            dy /= b.deriv(y);
            if let Some(r) = roof {
                phi += r.phi(y);
                dphi += r.dphi(y) * dy;
            }
        }
        InvEval { y, deriv: dy.abs(), phi, dphi }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Query {
    Point(f64),
    Interval(f64, f64),
}

/// h ∈ H_n: `word` lists base branches in forward order (first applied first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseBranch {
    pub word: Vec<usize>,
    pub domain: (f64, f64),
    pub range: (f64, f64),
}

#[derive(Clone, Copy, Debug)]
pub struct InvEval {
    pub y: f64,
    pub deriv: f64,
    pub phi: f64,
    pub dphi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoofKind {
    Const { value: f64 },
    OnePlusXSq,
    /// Piecewise-linear interpolation through (x, φ) knots.
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roof {
    pub kind: RoofKind,
    pub eps0: f64,
}

impl Roof {
    pub fn constant(value: f64) -> Roof {
        Roof { kind: RoofKind::Const { value }, eps0: 0.5 }
    }

    pub fn one_plus_x_sq() -> Roof {
        Roof { kind: RoofKind::OnePlusXSq, eps0: 0.5 }
    }

    /// φ(x) = a + s x on [lo, hi] as a two-knot table.
    pub fn linear(a: f64, s: f64, lo: f64, hi: f64) -> Roof {
        Roof { kind: RoofKind::Table { knots: vec![(lo, a + s * lo), (hi, a + s * hi)] }, eps0: 0.5 }
    }

    pub fn with_eps0(mut self, eps0: f64) -> Roof {
        self.eps0 = eps0;
        self
    }

    pub fn phi(&self, x: f64) -> f64 {
        match &self.kind {
            RoofKind::Const { value } => *value,
            RoofKind::OnePlusXSq => 1.0 + x * x,
            RoofKind::Table { knots } => {
                let i = knots.partition_point(|k| k.0 <= x);
                if i == 0 {
                    knots[0].1
                } else if i == knots.len() {
                    knots[knots.len() - 1].1
                } else {
                    let (a, b) = (knots[i - 1], knots[i]);
                    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
                }
            }
        }
    }

    pub fn dphi(&self, x: f64) -> f64 {
        match &self.kind {
            RoofKind::Const { .. } => 0.0,
            RoofKind::OnePlusXSq => 2.0 * x,
            RoofKind::Table { knots } => {
                let i = knots.partition_point(|k| k.0 <= x);
                if i == 0 || i == knots.len() {
                    0.0
                } else {
                    let (a, b) = (knots[i - 1], knots[i]);
                    (b.1 - a.1) / (b.0 - a.0)
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, RoofKind::Const { .. })
    }

    pub fn validate(&self, y_lo: f64, y_hi: f64) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::InvalidParams("roof eps0 must be positive".into()));
        }
        if let RoofKind::Table { knots } = &self.kind {
            if knots.len() < 2 || knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(Error::InvalidParams("roof table needs >= 2 increasing knots".into()));
            }
        }
        for t in 0..=256 {
            let x = y_lo + (y_hi - y_lo) * t as f64 / 256.0;
            if self.phi(x) < 1.0 - 1e-12 {
                return Err(Error::InvalidParams(format!("roof below 1 at x={x}")));
            }
        }
        Ok(())
    }

    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        (0..=256).map(|t| self.phi(lo + (hi - lo) * t as f64 / 256.0)).fold(f64::MIN, f64::max)
    }

    pub fn inf_on(&self, lo: f64, hi: f64) -> f64 {
        (0..=256).map(|t| self.phi(lo + (hi - lo) * t as f64 / 256.0)).fold(f64::MAX, f64::min)
    }
}

/// Image-partition boundary points X'_j by depth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscontinuityCatalog {
    pub y_lo: f64,
    pub y_hi: f64,
    /// `by_depth[j - 1]` = X'_j, sorted.
    pub by_depth: Vec<Vec<f64>>,
    pub n1: usize,
    /// Depth beyond which forward-iterated points carry no reliable digits.
    pub precision_horizon: usize,
    /// sup |F'|: rounding errors in X'_j grow by at most this factor per step.
    pub growth: f64,
}

impl DiscontinuityCatalog {
    pub fn j_max(&self) -> usize {
        self.by_depth.len()
    }

    pub fn points(&self, j: usize) -> &[f64] {
        &self.by_depth[j - 1]
    }

    /// Distance below which two points of depth ≤ j are numerically the same point.
    pub fn tol(&self, j: usize) -> f64 {
        let len = self.y_hi - self.y_lo;
        (1e-15 * len * self.growth.powi(j as i32)).clamp(SNAP, 1e-7 * len)
    }

    /// X_k ∪ {y_lo, y_hi}, sorted and deduplicated.
    pub fn breakpoints(&self, k: usize) -> Vec<f64> {
        let mut pts = vec![self.y_lo, self.y_hi];
        for j in 1..=k.min(self.j_max()) {
            pts.extend_from_slice(self.points(j));
        }
        dedup_sorted_tol(pts, self.tol(k.min(self.j_max())))
    }

    /// Atoms of P_k as open intervals.
    pub fn atoms(&self, k: usize) -> Vec<(f64, f64)> {
        self.breakpoints(k).windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn min_atom(&self, k: usize) -> f64 {
        self.atoms(k).iter().map(|a| a.1 - a.0).fold(f64::INFINITY, f64::min)
    }

    /// Depth tags j (with multiplicity across depths) at which x appears.
    pub fn depths_of(&self, x: f64, tol: f64) -> Vec<usize> {
        (1..=self.j_max())
            .filter(|&j| {
                let p = self.points(j);
                let i = p.partition_point(|&q| q < x - tol);
                i < p.len() && (p[i] - x).abs() <= tol
            })
            .collect()
    }

    /// Points of X'_j strictly inside (lo, hi).
    pub fn interior(&self, j: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.points(j).iter().copied().filter(move |&x| x > lo + SNAP && x < hi - SNAP)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        (x - self.y_lo).abs() <= tol || (x - self.y_hi).abs() <= tol || !self.depths_of(x, tol).is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["point", "depth"])?;
        for (j, pts) in self.by_depth.iter().enumerate() {
            for x in pts {
                wr.write_record([format!("{x:.17e}"), (j + 1).to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn dedup_sorted(pts: Vec<f64>) -> Vec<f64> {
    dedup_sorted_tol(pts, SNAP)
}

fn dedup_sorted_tol(mut pts: Vec<f64>, tol: f64) -> Vec<f64> {
    pts.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().map_or(true, |&q| p - q > tol) {
            out.push(p);
        }
    }
    out
}

/// X'_1 = image endpoints of the branches of F, X'_j = F(X'_{j-1}), for j ≤ j_max.
pub fn image_partition(map: &MapSpec, j_max: usize, budget: usize) -> Result<DiscontinuityCatalog> {
    let hs = map.inverse_branches(1, Query::Interval(map.y_lo, map.y_hi), budget)?;
    let mut first: Vec<f64> = hs.iter().flat_map(|h| [h.domain.0, h.domain.1]).map(|x| map.snap(x)).collect();
    first.retain(|&x| x >= map.y_lo && x <= map.y_hi);
    let first = dedup_sorted(first);
    let mut growth = 0.0f64;
    for h in &hs {
        for x in sample_points(h.domain.0, h.domain.1, 16) {
            growth = growth.max(1.0 / map.eval_inverse(h, x, None).deriv);
        }
    }
    let tol = |j: usize| (1e-15 * map.len() * growth.powi(j as i32)).clamp(SNAP, 1e-7 * map.len());
    let mut by_depth = vec![first];
    for j in 2..=j_max {
        let prev = by_depth.last().unwrap();
        let next: Vec<f64> = prev
            .iter()
            .filter(|&&x| x < map.y_hi)
            .filter_map(|&x| map.apply(x))
            .map(|x| x.clamp(map.y_lo, map.y_hi))
            .collect();
        by_depth.push(dedup_sorted_tol(next, tol(j)));
    }
    let rho0 = rho0_of(map, &hs);
    let horizon = ((8.0 * std::f64::consts::LN_10) / rho0.ln()).floor().max(1.0) as usize;
    Ok(DiscontinuityCatalog {
        y_lo: map.y_lo,
        y_hi: map.y_hi,
        n1: by_depth[0].len(),
        by_depth,
        precision_horizon: horizon,
        growth,
    })
}

fn sample_points(lo: f64, hi: f64, m: usize) -> impl Iterator<Item = f64> {
    let inset = (hi - lo) * 1e-9;
    (0..=m).map(move |t| lo + inset + (hi - lo - 2.0 * inset) * t as f64 / m as f64)
}

fn rho0_of(map: &MapSpec, hs: &[InverseBranch]) -> f64 {
    let mut max_h = 0.0f64;
    for h in hs {
        for x in sample_points(h.domain.0, h.domain.1, 16) {
            max_h = max_h.max(map.eval_inverse(h, x, None).deriv);
        }
    }
    1.0 / max_h
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub power_cap: usize,
    pub k1_cap: usize,
    pub branch_budget: usize,
    /// Allowed remainder of the truncated branch-sum tail (first-return maps).
    pub tail_tol: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { power_cap: 8, k1_cap: 32, branch_budget: 4_000_000, tail_tol: 2e-2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometricConstants {
    pub power: usize,
    pub rho0: f64,
    pub rho: f64,
    /// Adler constant valid for all iterates: C₁(F)·ρ₀/(ρ₀−1).
    pub c1: f64,
    /// sup |F''|/F'^2 for a single step of F.
    pub c1_single: f64,
    pub c2: f64,
    pub c2p: f64,
    pub c3: f64,
    pub k_image: f64,
    pub delta0: f64,
    pub n1: usize,
    pub k1: usize,
    pub eps0: f64,
    pub tail_remainder: f64,
    pub branch_count: usize,
}

/// Smallest power p with ρ₀(base^p) > 2^{4/3}.
pub fn auto_power(map: &MapSpec, caps: &Caps) -> Result<MapSpec> {
    let base = map.iterate(1);
    for p in 1..=caps.power_cap {
        let it = base.iterate(p);
        let hs = it.inverse_branches(1, Query::Interval(it.y_lo, it.y_hi), caps.branch_budget)?;
        if rho0_of(&it, &hs) > 2f64.powf(4.0 / 3.0) {
            return Ok(it);
        }
    }
    Err(Error::InvalidParams(format!("no power <= {} has rho0 > 2^(4/3)", caps.power_cap)))
}

/// Tail of Σ_τ sup|h_τ'| e^{ε₀ φ∘h_τ} over the base branches, bounded geometrically
/// from the ratio of the last two terms. Returns (ratio, remainder).
pub fn branch_tail(map: &MapSpec, roof: &Roof, eps0: f64) -> (f64, f64) {
    let mut terms: Vec<(usize, f64)> = map
        .branches
        .iter()
        .map(|b| {
            let s = sample_points(b.image.0, b.image.1, 32)
                .map(|x| {
                    let y = b.inverse(x);
                    (eps0 * roof.phi(y)).exp() / b.deriv(y).abs()
                })
                .fold(0.0, f64::max);
            (b.tag, s)
        })
        .collect();
    terms.sort_by_key(|t| t.0);
    if terms.len() < 3 {
        return (0.0, 0.0);
    }
    let last = terms[terms.len() - 1].1;
    let prev = terms[terms.len() - 2].1;
    let r = last / prev;
    if r >= 1.0 {
        (r, f64::INFINITY)
    } else {
        (r, last * r / (1.0 - r))
    }
}

/// ε₀ for a truncated first-return map: largest of eps0, eps0/2, ... whose tail remainder
/// stays below `caps.tail_tol`.
pub fn scan_eps0(map: &MapSpec, roof: &Roof, caps: &Caps) -> Result<(f64, f64)> {
    if !matches!(map.family, Family::MpFirstReturn { .. }) {
        return Ok((roof.eps0, 0.0));
    }
    let mut best = f64::INFINITY;
    for m in 0..12 {
        let eps0 = roof.eps0 * 0.5f64.powi(m);
        let (_, rem) = branch_tail(map, roof, eps0);
        best = best.min(rem);
        if rem <= caps.tail_tol {
            return Ok((eps0, rem));
        }
    }
    Err(Error::TailBound { bound: best, tol: caps.tail_tol })
}

/// ρ₀, ρ, C₁, C₂, C′₂, C₃, K, δ₀, N₁, k₁ for F = base^power, where the power is
/// taken as the smallest one with ρ₀ > 2^{4/3}.
pub fn geometric_constants(map: &MapSpec, roof: &Roof, caps: &Caps) -> Result<(MapSpec, GeometricConstants)> {
    roof.validate(map.y_lo, map.y_hi)?;
    let (eps0, tail) = scan_eps0(map, roof, caps)?;
    let f = auto_power(map, caps)?;
    let hs = f.inverse_branches(1, Query::Interval(f.y_lo, f.y_hi), caps.branch_budget)?;
    let mut max_h = 0.0f64;
    let mut c1s = 0.0f64;
    let mut c2 = 0.0f64;
    let mut k_img = f64::INFINITY;
    for h in &hs {
        k_img = k_img.min(h.domain.1 - h.domain.0);
        for x in sample_points(h.domain.0, h.domain.1, 16) {
            let e = f.eval_inverse(h, x, Some(roof));
            max_h = max_h.max(e.deriv);
            c2 = c2.max(e.dphi.abs());
            let (_, d1, d2) = f.forward_word(&h.word, e.y);
            c1s = c1s.max(d2.abs() / (d1 * d1));
        }
    }
    let rho0 = 1.0 / max_h;
    let c1 = c1s * rho0 / (rho0 - 1.0);
    let c2p = c2 * rho0 / (rho0 - 1.0);
    let mut c3 = 0.0f64;
    for x in sample_points(f.y_lo, f.y_hi, 128) {
        let mut acc = 0.0;
        for h in hs.iter().filter(|h| x >= h.domain.0 && x < h.domain.1) {
            let e = f.eval_inverse(h, x, Some(roof));
            acc += e.deriv * (eps0 * e.phi).exp();
        }
        c3 = c3.max(acc);
    }
    c3 += tail;
    let delta0 = k_img * (rho0 - 2.0) / (5.0 * c1.exp() * rho0);
    let cat = image_partition(&f, 1, caps.branch_budget)?;
    let k1 = mixing_time(&f, &hs, delta0, caps.k1_cap)?;
    Ok((
        f.clone(),
        GeometricConstants {
            power: f.power,
            rho0,
            rho: rho0.powf(0.25),
            c1,
            c1_single: c1s,
            c2,
            c2p,
            c3,
            k_image: k_img,
            delta0,
            n1: cat.n1,
            k1,
            eps0,
            tail_remainder: tail,
            branch_count: hs.len(),
        },
    ))
}

/// Image of a union of intervals under F (one step), merged.
pub fn image_of_intervals(map: &MapSpec, hs: &[InverseBranch], set: &[(f64, f64)]) -> Vec<(f64, f64)> {
    // hs sorted by range; ranges are disjoint cylinders
    let sorted = hs.windows(2).all(|w| w[0].range.0 <= w[1].range.0);
    let mut out = Vec::new();
    for &(a, b) in set {
        let start = if sorted { hs.partition_point(|h| h.range.1 <= a) } else { 0 };
        for h in &hs[start..] {
            if sorted && h.range.0 >= b {
                break;
            }
            let lo = a.max(h.range.0);
            let hi = b.min(h.range.1);
            if hi - lo > 1e-15 {
                let p = map.forward_word(&h.word, lo).0;
                let q = map.forward_word(&h.word, hi).0;
                out.push((p.min(q), p.max(q)));
            }
        }
    }
    // forward images through long compositions carry errors far above 1e-12
    merge_intervals_tol(out, 1e-7 * map.len())
}

pub fn merge_intervals(v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    merge_intervals_tol(v, 1e-12)
}

pub fn merge_intervals_tol(mut v: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 + tol => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Smallest k₁ with F^{k₁}(J) ⊇ Y for a grid of intervals J of length δ₀.
pub fn mixing_time(map: &MapSpec, hs: &[InverseBranch], delta0: f64, cap: usize) -> Result<usize> {
    if !(delta0 > 0.0) {
        return Err(Error::NotMixing { cap, delta0 });
    }
    let mut hs = hs.to_vec();
    hs.sort_by(|a, b| a.range.0.total_cmp(&b.range.0));
    let hs = &hs[..];
    // truncated maps leave part of Y without branches; test only where F is defined
    let covered = merge_intervals(hs.iter().map(|h| h.range).collect());
    let mut k1 = 0;
    let step = delta0 / 2.0;
    let mut a = map.y_lo;
    while a + delta0 <= map.y_hi + 1e-15 {
        let b = (a + delta0).min(map.y_hi);
        let inside: f64 = covered.iter().map(|c| (c.1.min(b) - c.0.max(a)).max(0.0)).sum();
        if inside < 0.5 * delta0 {
            a += step;
            continue;
        }
        let mut set = vec![(a, b)];
        let mut k = 0;
        loop {
            if set.len() == 1 && set[0].0 <= map.y_lo + 1e-7 && set[0].1 >= map.y_hi - 1e-7 {
                break;
            }
            k += 1;
            if k > cap {
                return Err(Error::NotMixing { cap, delta0 });
            }
            set = image_of_intervals(map, hs, &set);
            if set.is_empty() && map.dropped_mass > 0.0 {
                // fell into the truncation hole; the untruncated map would continue
                break;
            }
        }
        k1 = k1.max(k);
        a += step;
    }
    Ok(k1.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_has_two_full_branches() {
        let m = MapSpec::doubling();
        assert_eq!(m.branches.len(), 2);
        assert_eq!(m.branches[1].forward(0.75), 0.5);
        assert!(m.is_full_branch());
        assert_eq!(m.base_rho0(), 2.0);
    }

    #[test]
    fn shifted_beta_breakpoints() {
        let m = MapSpec::shifted_beta(2.5, 0.3).unwrap();
        assert_eq!(m.branches.len(), 3);
        let d: Vec<_> = m.branches.iter().map(|b| b.domain).collect();
        assert!((d[0].1 - 0.28).abs() < 1e-15 && (d[1].1 - 0.68).abs() < 1e-15);
        assert!((m.branches[0].image.0 - 0.3).abs() < 1e-15);
        assert!((m.branches[2].image.1 - 0.8).abs() < 1e-12);
        assert!(!m.is_full_branch());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MapSpec::shifted_beta(1.0, 0.0).is_err());
        assert!(MapSpec::shifted_beta(2.0, 1.0).is_err());
        assert!(MapSpec::mp_first_return(0.0, 0.8, 40).is_err());
        assert!(MapSpec::mp_first_return(1.0, 0.5, 40).is_err());
    }

    #[test]
    fn boundary_points_go_right() {
        let m = MapSpec::doubling();
        assert_eq!(m.branch_at(0.5), Some(1));
        assert_eq!(m.branch_at(1.0), None);
    }

    #[test]
    fn lsv_inverse_round_trips() {
        for alpha in [1.0, 0.5, 1.7] {
            let p = Piece::Lsv { alpha };
            for &y in &[1e-6, 0.01, 0.2, 0.4999] {
                let x = p.inverse(y);
                assert!((p.jet(x).0 - y).abs() < 1e-15, "alpha={alpha} y={y}");
            }
        }
    }

    #[test]
    fn doubling_iterate_constants() {
        let (f, g) = geometric_constants(&MapSpec::doubling(), &Roof::one_plus_x_sq(), &Caps::default()).unwrap();
        assert_eq!(f.power, 2);
        assert_eq!(g.rho0, 4.0);
        assert!((g.rho - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(g.c1, 0.0);
        assert_eq!(g.n1, 2);
        assert!(g.k_image == 1.0);
    }
}
