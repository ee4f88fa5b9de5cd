//! Suspension semiflow over (Y, F, φ): flow evaluation, μ^φ sampling,
//! Monte-Carlo correlation functions and the exponential-rate fit.
//!
//! F is one step of the given `MapSpec` (so `base^power`) and the roof over
//! it is `map.roof_sum(roof, ·)`. Pass a map with power 1 for the flow over
//! the base transformation itself.

use crate::bv_space::GridFunction;
use crate::interval_map::{MapSpec, Roof};
use crate::operator_core::eigendata;
use crate::quad::{linear_fit, quadratic_fit};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Slack when comparing a height against the roof, relative to the roof.
const TOP_TOL: f64 = 1e-12;

/// F_t(y, u) for t ≥ 0: raise the height by t and apply (y, φ(y)) ∼ (Fy, 0)
/// as often as needed. `None` when the orbit falls into a gap of a truncated map.
pub fn flow_point(z: (f64, f64), t: f64, map: &MapSpec, roof: &Roof) -> Option<(f64, f64)> {
    let (mut y, mut u) = z;
    u += t.max(0.0);
    loop {
        let phi = map.roof_sum(roof, y);
        if u < phi * (1.0 - TOP_TOL) {
            return Some((y, u.max(0.0)));
        }
        u = (u - phi).max(0.0);
        y = map.apply(y)?;
    }
}

/// Observable on Y^φ.
pub trait Observable: Sync {
    fn eval(&self, y: f64, u: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Sync> Observable for F {
    fn eval(&self, y: f64, u: f64) -> f64 {
        self(y, u)
    }
}

/// v(y, u) tabulated as functions of y at a list of heights, linear in u
/// between them and constant beyond the ends.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuspensionObservable {
    pub heights: Vec<f64>,
    pub slices: Vec<GridFunction>,
    /// smoothness order in u
    pub m: usize,
}

impl SuspensionObservable {
    pub fn new(heights: Vec<f64>, slices: Vec<GridFunction>, m: usize) -> Result<SuspensionObservable> {
        if heights.is_empty() || heights.len() != slices.len() {
            return Err(Error::InvalidParams("need one slice per height".into()));
        }
        if heights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("heights must be strictly increasing".into()));
        }
        if heights.len() <= m {
            return Err(Error::InvalidParams(format!("order {m} needs more than {m} heights")));
        }
        Ok(SuspensionObservable { heights, slices, m })
    }

    /// Tabulate a function on `n` cells at equally spaced heights in [0, u_max].
    pub fn sample(n: usize, y_lo: f64, y_hi: f64, u_max: f64, levels: usize, m: usize, f: impl Fn(f64, f64) -> f64) -> Result<SuspensionObservable> {
        let heights: Vec<f64> = (0..levels).map(|k| u_max * k as f64 / (levels - 1).max(1) as f64).collect();
        let slices = heights.iter().map(|&u| GridFunction::from_real(n, y_lo, y_hi, |y| f(y, u))).collect();
        SuspensionObservable::new(heights, slices, m)
    }

    /// Σ_{j≤m} sup_u ‖∂_u^j v(·, u)‖_BV with ∂_u by divided differences.
    pub fn bv_m_norm(&self) -> f64 {
        let mut level: Vec<GridFunction> = self.slices.clone();
        let mut hs: Vec<f64> = self.heights.clone();
        let mut total = 0.0;
        for j in 0..=self.m {
            total += level.iter().map(|g| g.bv_norm()).fold(0.0, f64::max);
            if j == self.m {
                break;
            }
            let next: Vec<GridFunction> = level
                .windows(2)
                .zip(hs.windows(2))
                .map(|(g, h)| g[1].zip(&g[0], |a, b| (a - b) / (h[1] - h[0])))
                .collect();
            hs = hs.windows(2).map(|h| 0.5 * (h[0] + h[1])).collect();
            level = next;
        }
        total
    }
}

impl Observable for SuspensionObservable {
    fn eval(&self, y: f64, u: f64) -> f64 {
        let k = self.heights.partition_point(|&h| h <= u);
        if k == 0 {
            return self.slices[0].eval_step(y).re;
        }
        if k == self.heights.len() {
            return self.slices[k - 1].eval_step(y).re;
        }
        let t = (u - self.heights[k - 1]) / (self.heights[k] - self.heights[k - 1]);
        (1.0 - t) * self.slices[k - 1].eval_step(y).re + t * self.slices[k].eval_step(y).re
    }
}

/// (Y^φ, F_t, μ^φ) with μ = f₀ Leb from the Ulam eigenfunction at σ = 0.
#[derive(Clone, Debug)]
pub struct Suspension {
    pub map: MapSpec,
    pub roof: Roof,
    /// f₀ with ∫f₀ = 1
    pub density: GridFunction,
    pub sup_density: f64,
    pub sup_phi: f64,
    /// φ̄ = ∫φ dμ
    pub phi_bar: f64,
}

impl Suspension {
    pub fn new(map: &MapSpec, roof: &Roof, grid: usize) -> Result<Suspension> {
        let spec = eigendata(map, roof, 0.0, grid)?;
        let density = spec.f.map(|z| crate::C64::new(z.re.max(0.0), 0.0));
        let sup_density = density.sup_re();
        let h = density.h();
        let phis: Vec<f64> = (0..grid).map(|i| map.roof_sum(roof, density.center(i))).collect();
        let mass: f64 = density.values.iter().map(|z| z.re).sum::<f64>() * h;
        let phi_bar = density.values.iter().zip(&phis).map(|(z, p)| z.re * p).sum::<f64>() * h / mass;
        // the roof is monotone or piecewise linear on each branch, so cell ends bound it
        let sup_phi = (0..=grid)
            .map(|i| map.roof_sum(roof, (map.y_lo + i as f64 * h).min(map.y_hi - 1e-15 * map.len())))
            .chain(phis.iter().copied())
            .fold(0.0, f64::max);
        Ok(Suspension { map: map.clone(), roof: roof.clone(), density, sup_density, sup_phi, phi_bar })
    }

    pub fn phi(&self, y: f64) -> f64 {
        self.map.roof_sum(&self.roof, y)
    }

    pub fn flow(&self, z: (f64, f64), t: f64) -> Option<(f64, f64)> {
        flow_point(z, t, &self.map, &self.roof)
    }

    /// One base point from μ: rejection against sup f₀ on Lebesgue proposals.
    pub fn sample_base<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let y = rng.gen_range(self.map.y_lo..self.map.y_hi);
            if rng.gen::<f64>() * self.sup_density < self.density.eval_step(y).re {
                return y;
            }
        }
    }

    /// One point from μ^φ = (μ × Leb)/φ̄: base point accepted with probability
    /// φ(y)/sup φ, height uniform on [0, φ(y)).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let y = self.sample_base(rng);
            let phi = self.phi(y);
            if rng.gen::<f64>() * self.sup_phi < phi {
                return (y, rng.gen_range(0.0..phi));
            }
        }
    }

    /// ρ_t(v, w) = ∫ v·w∘F_t dμ^φ − ∫v dμ^φ ∫w dμ^φ by Monte Carlo over
    /// `batches` independent substreams; standard errors by batch means.
    pub fn correlation(&self, v: &dyn Observable, w: &dyn Observable, t_grid: &[f64], sample_size: usize, seed: u64) -> Result<CorrelationSeries> {
        if sample_size < MIN_SAMPLES {
            return Err(Error::InvalidParams(format!("sample size {sample_size} < {MIN_SAMPLES}")));
        }
        if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidParams("t grid must be nonnegative and strictly increasing".into()));
        }
        let nt = t_grid.len();
        let batches = BATCHES;
        let sums: Vec<BatchSums> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let count = sample_size / batches + usize::from(b < sample_size % batches);
                let mut s = BatchSums::new(nt);
                for _ in 0..count {
                    let z0 = self.sample(&mut rng);
                    let v0 = v.eval(z0.0, z0.1);
                    let mut z = z0;
                    let mut t_prev = 0.0;
                    let mut ws = Vec::with_capacity(nt);
                    for &t in t_grid {
                        match self.flow(z, t - t_prev) {
                            Some(next) => z = next,
                            None => break,
                        }
                        t_prev = t;
                        ws.push(w.eval(z.0, z.1));
                    }
                    if ws.len() < nt {
                        s.dropped += 1;
                        continue;
                    }
                    s.add(v0, &ws);
                }
                s
            })
            .collect();
        let mut pooled = BatchSums::new(nt);
        for s in &sums {
            pooled.merge(s);
        }
        if pooled.n == 0 {
            return Err(Error::Hypothesis("every sampled orbit left the domain".into()));
        }
        let rho = pooled.rho();
        let per: Vec<Vec<f64>> = sums.iter().filter(|s| s.n > 1).map(|s| s.rho()).collect();
        let nb = per.len() as f64;
        let stderr = (0..nt)
            .map(|i| {
                let mean = per.iter().map(|r| r[i]).sum::<f64>() / nb;
                let var = per.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (nb - 1.0).max(1.0);
                (var / nb).sqrt()
            })
            .collect();
        let mut series = CorrelationSeries {
            t: t_grid.to_vec(),
            rho,
            stderr,
            samples: pooled.n,
            dropped: pooled.dropped,
            batches,
            seed,
            fit: None,
        };
        series.fit = Some(fit_exponential(&series));
        Ok(series)
    }
}

pub const MIN_SAMPLES: usize = 1000;
const BATCHES: usize = 64;

#[derive(Clone, Debug)]
struct BatchSums {
    n: usize,
    dropped: usize,
    sv: f64,
    sw: Vec<f64>,
    svw: Vec<f64>,
}

impl BatchSums {
    fn new(nt: usize) -> BatchSums {
        BatchSums { n: 0, dropped: 0, sv: 0.0, sw: vec![0.0; nt], svw: vec![0.0; nt] }
    }

    fn add(&mut self, v: f64, ws: &[f64]) {
        self.n += 1;
        self.sv += v;
        for (i, &w) in ws.iter().enumerate() {
            self.sw[i] += w;
            self.svw[i] += v * w;
        }
    }

    fn merge(&mut self, o: &BatchSums) {
        self.n += o.n;
        self.dropped += o.dropped;
        self.sv += o.sv;
        for i in 0..self.sw.len() {
            self.sw[i] += o.sw[i];
            self.svw[i] += o.svw[i];
        }
    }

    fn rho(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.sw.len()).map(|i| self.svw[i] / n - (self.sv / n) * (self.sw[i] / n)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    /// orbits discarded because they left a truncated domain
    pub dropped: usize,
    pub batches: usize,
    pub seed: u64,
    pub fit: Option<ExpFit>,
}

impl CorrelationSeries {
    /// Noise-free series, for testing the fit.
    pub fn exact(t: &[f64], f: impl Fn(f64) -> f64) -> CorrelationSeries {
        CorrelationSeries {
            t: t.to_vec(),
            rho: t.iter().map(|&x| f(x)).collect(),
            stderr: vec![0.0; t.len()],
            samples: 0,
            dropped: 0,
            batches: 0,
            seed: 0,
            fit: None,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "rho", "stderr"])?;
        for i in 0..self.t.len() {
            wr.write_record([format!("{}", self.t[i]), format!("{:.17e}", self.rho[i]), format!("{:.17e}", self.stderr[i])])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// fewer than [`MIN_FIT_POINTS`] points above the noise floor
    Inconclusive,
}

pub const MIN_FIT_POINTS: usize = 8;
/// Curvature κ = |c₂|·(t range)² of the quadratic fit to log|ρ| above which
/// a series counts as non-exponential (when c₂ is also significant).
pub const CURVATURE_TOL: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpFit {
    pub status: FitStatus,
    /// points used: |ρ̂_t| > 3·stderr
    pub points: usize,
    pub a0: f64,
    pub a1: f64,
    pub a1_stderr: f64,
    /// 95% t-interval for a₁
    pub a1_ci: (f64, f64),
    /// rms residual of log|ρ̂|
    pub residual: f64,
    pub curvature: f64,
    /// c₂ over its standard error (infinite for exact data with c₂ ≠ 0)
    pub curvature_t: f64,
    pub non_exponential: bool,
}

impl ExpFit {
    /// Exponential decay established: fitted, a₁'s interval excludes 0 from
    /// above, and no significant curvature.
    pub fn decays(&self) -> bool {
        self.status == FitStatus::Fitted && self.a1_ci.0 > 0.0 && !self.non_exponential
    }
}

/// Least squares of log|ρ̂_t| on t over the points above the 3·stderr noise
/// floor, plus a quadratic fit for the curvature test.
pub fn fit_exponential(series: &CorrelationSeries) -> ExpFit {
    let (ts, ls): (Vec<f64>, Vec<f64>) = series
        .t
        .iter()
        .zip(series.rho.iter().zip(&series.stderr))
        .filter(|(_, (r, se))| r.abs() > 3.0 * **se && r.abs() > 0.0)
        .map(|(&t, (r, _))| (t, r.abs().ln()))
        .unzip();
    let n = ts.len();
    let mut fit = ExpFit {
        status: FitStatus::Inconclusive,
        points: n,
        a0: f64::NAN,
        a1: f64::NAN,
        a1_stderr: f64::NAN,
        a1_ci: (f64::NAN, f64::NAN),
        residual: f64::NAN,
        curvature: f64::NAN,
        curvature_t: f64::NAN,
        non_exponential: false,
    };
    if n < MIN_FIT_POINTS {
        return fit;
    }
    let (c0, c1, slope_se, rms) = linear_fit(&ts, &ls);
    let q = StudentsT::new(0.0, 1.0, (n - 2) as f64).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
    fit.status = FitStatus::Fitted;
    fit.a1 = -c1;
    fit.a0 = c0.exp();
    fit.a1_stderr = slope_se;
    fit.a1_ci = (fit.a1 - q * slope_se, fit.a1 + q * slope_se);
    fit.residual = rms;
    let tm = ts.iter().sum::<f64>() / n as f64;
    let xs: Vec<f64> = ts.iter().map(|t| t - tm).collect();
    let (c, se2) = quadratic_fit(&xs, &ls);
    let range = ts[n - 1] - ts[0];
    fit.curvature = c[2].abs() * range * range;
    fit.curvature_t = if se2 > 0.0 { c[2].abs() / se2 } else if c[2] != 0.0 { f64::INFINITY } else { 0.0 };
    fit.non_exponential = fit.curvature > CURVATURE_TOL && fit.curvature_t > 3.0;
    fit
}

/// Default test pair: v = (1 + y)cos(2πu/φ(y)), mean zero in every fiber,
/// and w = cos(2πu/φ(y)). Smooth in u, BV in y.
pub fn phase_observables(s: &Suspension) -> (impl Observable + '_, impl Observable + '_) {
    let v = move |y: f64, u: f64| (1.0 + y) * (std::f64::consts::TAU * u / s.phi(y)).cos();
    let w = move |y: f64, u: f64| (std::f64::consts::TAU * u / s.phi(y)).cos();
    (v, w)
}
