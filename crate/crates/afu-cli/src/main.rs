use afu_lab::config::ExperimentConfig;
use afu_lab::dolgopyat_harness::{
    contraction_scan, cone_params, iterate_pair, l2_decay, l2_family, random_cone_pair, resolvent_norm, Setup, Status,
};
use afu_lab::bv_space::{cone_check, random_family};
use afu_lab::operator_core::{eigendata, TwistParam};
use afu_lab::quad::linear_fit;
use afu_lab::report::Report;
use afu_lab::semiflow::{phase_observables, CorrelationSeries, Suspension};
use afu_lab::interval_map::Roof;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "afu", about = "Transfer-operator experiments for expanding interval maps and their suspension flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults to doubling with roof 1 + x²
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ulam grid size (overrides the config)
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// invariant density f₀ and its residual
    Density,
    /// constant ledger
    Ledger,
    /// uniform non-integrability per atom
    Uni,
    /// contraction of the normalized operator over the b list
    Scan,
    /// L² decay of the damped iteration at one b
    L2,
    /// cone invariance on random pairs
    Cone,
    /// correlation decay of the suspension flow
    Correlation,
    /// resolvent norms over the resolvent b list
    Resolvent,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Ledger => "ledger",
            Command::Uni => "uni",
            Command::Scan => "scan",
            Command::L2 => "l2",
            Command::Cone => "cone",
            Command::Correlation => "correlation",
            Command::Resolvent => "resolvent",
        }
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn setup(&self) -> Result<Setup> {
        Ok(Setup::new(&self.cfg.map()?, &self.cfg.roof()?, self.cfg.harness())?)
    }

    fn grid(&self) -> usize {
        self.cfg.harness().grid
    }

    fn map_name(&self) -> String {
        self.cfg.map().map(|m| m.name()).unwrap_or_default()
    }

    fn report<T: Serialize>(&self, cmd: Command, setup: Option<&Setup>, payload: T) -> Report<T> {
        Report::new(cmd.name(), self.map_name(), self.seed, setup.map(|s| s.ledger.clone()), payload)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(fail)) => {
            eprintln!("check failed: {fail}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Ok(Some(msg)) names the first failing assertion.
fn run(cli: &Cli) -> Result<Option<String>> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::doubling(),
    };
    if let Some(g) = cli.grid {
        cfg.grid = Some(g);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = cfg.harness().seed;
    let ctx = Ctx { cfg, out, seed };
    match cli.command {
        Command::Density => density(&ctx),
        Command::Ledger => ledger(&ctx),
        Command::Uni => uni(&ctx),
        Command::Scan => scan(&ctx),
        Command::L2 => l2(&ctx),
        Command::Cone => cone(&ctx),
        Command::Correlation => correlation(&ctx),
        Command::Resolvent => resolvent(&ctx),
    }
}

fn finish<T: Serialize>(rep: &Report<T>, path: &Path) -> Result<Option<String>> {
    rep.write(path)?;
    Ok(rep.first_failure().map(|a| format!("{}: {}", a.name, a.detail)))
}

/// Setup for commands that only embed the ledger: a failure is reported, not fatal.
fn optional_setup(ctx: &Ctx) -> (Option<Setup>, Option<String>) {
    match ctx.setup() {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

#[derive(Serialize)]
struct DensityPayload {
    header: afu_lab::operator_core::SpectralHeader,
    dropped_mass: f64,
    ledger_error: Option<String>,
}

fn density(ctx: &Ctx) -> Result<Option<String>> {
    let map = ctx.cfg.map()?;
    let roof = ctx.cfg.roof()?;
    let spec = eigendata(&map, &roof, 0.0, ctx.grid())?;
    spec.write_csv(std::fs::File::create(ctx.path("f0.csv"))?)?;
    let (setup, ledger_error) = optional_setup(ctx);
    let tol = &ctx.cfg.tolerances;
    let payload = DensityPayload { header: spec.header(), dropped_mass: map.dropped_mass, ledger_error };
    let mut rep = ctx.report(Command::Density, setup.as_ref(), payload);
    rep.assert("residual", spec.residual <= tol.residual, format!("{:e} vs {:e}", spec.residual, tol.residual));
    rep.assert("lambda", (spec.lambda - 1.0).abs() <= tol.lambda, format!("lambda = {}", spec.lambda));
    finish(&rep, &ctx.path("density.json"))
}

fn ledger(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let mut rep = ctx.report(Command::Ledger, Some(&setup), ());
    for c in setup.ledger.checks.iter().chain(&setup.ledger.working.checks) {
        if c.status != Status::Unverified {
            rep.assert(&c.name, c.holds(), format!("{} vs {}", c.lhs, c.rhs));
        }
    }
    finish(&rep, &ctx.path("ledger.json"))
}

fn uni_assert<T: Serialize>(rep: &mut Report<T>, setup: &Setup) {
    let d = setup.ledger.working.d;
    let detail = if d > 0.0 { format!("D = {d}") } else { format!("UNI failed (D_best = {d})") };
    rep.assert("uni", d > 0.0, detail);
}

fn uni(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let atoms = setup.ledger.working.atoms.clone();
    let mut rep = ctx.report(Command::Uni, Some(&setup), atoms);
    uni_assert(&mut rep, &setup);
    finish(&rep, &ctx.path("uni.json"))
}

fn scan(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let sc = &ctx.cfg.scan;
    let grid = ctx.grid();
    let fam = l2_family(&setup, sc.family_size, grid);
    let mut rows = Vec::new();
    let uni_ok = setup.ledger.uni_holds();
    if uni_ok {
        for &sigma in &sc.sigma {
            for &b in &sc.b {
                let s = TwistParam::new(sigma, b);
                let beta = l2_decay(&setup, s, sc.m_max, &fam).map(|l| l.beta).ok();
                rows.push(contraction_scan(&setup, s, beta, &fam, grid)?);
            }
        }
    }
    let mut w = csv::Writer::from_path(ctx.path("scan.csv"))?;
    w.write_record(["sigma", "b", "n", "ratio", "gamma_fit"])?;
    for r in &rows {
        for (n, ratio) in &r.ratios {
            w.write_record([r.sigma.to_string(), r.b.to_string(), n.to_string(), format!("{ratio:.17e}"), format!("{:.17e}", r.gamma_fit)])?;
        }
    }
    w.flush()?;
    let mut rep = ctx.report(Command::Scan, Some(&setup), rows);
    uni_assert(&mut rep, &setup);
    for r in rep.payload.clone() {
        rep.assert(&format!("gamma(b={}, sigma={})", r.b, r.sigma), r.gamma_fit < 1.0, format!("gamma_fit = {}", r.gamma_fit));
    }
    for &sigma in &sc.sigma {
        let mut rs: Vec<_> = rep.payload.iter().filter(|r| r.sigma == sigma).map(|r| (r.b.abs(), r.n_min)).collect();
        rs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mono = rs.windows(2).all(|p| p[1].1 >= p[0].1);
        rep.assert(&format!("n monotone in log b (sigma={sigma})"), mono, format!("{rs:?}"));
    }
    finish(&rep, &ctx.path("scan.json"))
}

fn l2(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let sc = &ctx.cfg.scan;
    let fam = l2_family(&setup, sc.family_size, ctx.grid());
    let rows = sc
        .sigma
        .iter()
        .map(|&sigma| l2_decay(&setup, TwistParam::new(sigma, sc.b_single), sc.m_max, &fam))
        .collect::<afu_lab::Result<Vec<_>>>()?;
    let mut rep = ctx.report(Command::L2, Some(&setup), rows);
    uni_assert(&mut rep, &setup);
    for r in rep.payload.clone() {
        rep.assert(&format!("beta(sigma={})", r.sigma), r.beta < 1.0, format!("beta = {}", r.beta));
    }
    finish(&rep, &ctx.path("l2.json"))
}

#[derive(Serialize)]
struct ConeRow {
    pair: usize,
    iteration: usize,
    in_cone: bool,
    violations: Vec<afu_lab::bv_space::Violation>,
    domination_violation: f64,
    jump_points: usize,
    jump_violations: usize,
    jump_worst_ratio: f64,
}

fn cone(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let sc = &ctx.cfg.scan;
    let tol = &ctx.cfg.tolerances;
    let mut rep = ctx.report(Command::Cone, Some(&setup), Vec::<ConeRow>::new());
    uni_assert(&mut rep, &setup);
    if !setup.ledger.uni_holds() {
        return finish(&rep, &ctx.path("cone.json"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let s = TwistParam::new(0.0, sc.b_single);
    let spec = setup.spectral_at(0.0)?;
    for p in 0..sc.cone_pairs {
        let mut pair = random_cone_pair(&setup, s.b, ctx.grid(), &mut rng)?;
        let start = cone_check(&pair, &setup.catalog, &cone_params(&setup));
        rep.assert(&format!("pair {p} starts in cone"), start.in_cone, format!("{} violations", start.violations.len()));
        for it in 0..sc.cone_iterations {
            let r = iterate_pair(&setup, &pair, &spec, s)?;
            let jb = &r.jump_bounds;
            rep.assert(&format!("pair {p} iteration {it} in cone"), r.cone.in_cone, format!("{} violations", r.cone.violations.len()));
            rep.assert(
                &format!("pair {p} iteration {it} jump bounds"),
                jb.points == 0 || jb.worst_ratio <= tol.cone_slack,
                format!("worst ratio {} over {} points", jb.worst_ratio, jb.points),
            );
            rep.assert(
                &format!("pair {p} iteration {it} domination"),
                r.domination.max_violation <= tol.violation,
                format!("max violation {:e} at {}", r.domination.max_violation, r.domination.worst_x),
            );
            rep.payload.push(ConeRow {
                pair: p,
                iteration: it,
                in_cone: r.cone.in_cone,
                violations: r.cone.violations.clone(),
                domination_violation: r.domination.max_violation,
                jump_points: jb.points,
                jump_violations: jb.violations,
                jump_worst_ratio: jb.worst_ratio,
            });
            pair = r.pair;
        }
    }
    finish(&rep, &ctx.path("cone.json"))
}

#[derive(Serialize)]
struct CorrelationPayload {
    phi_bar: f64,
    series: CorrelationSeries,
    control: Option<CorrelationSeries>,
    ledger_error: Option<String>,
}

fn correlation(ctx: &Ctx) -> Result<Option<String>> {
    let cc = &ctx.cfg.correlation;
    let map = ctx.cfg.map()?;
    let roof = ctx.cfg.roof()?;
    let t_grid = cc.t_grid();
    let susp = Suspension::new(&map, &roof, ctx.grid())?;
    let (v, w) = phase_observables(&susp);
    let series = susp.correlation(&v, &w, &t_grid, cc.samples, ctx.seed)?;
    series.write_csv(std::fs::File::create(ctx.path("correlation.csv"))?)?;
    let control = if cc.control {
        let cs = Suspension::new(&map, &Roof::constant(cc.control_roof), ctx.grid())?;
        let (cv, cw) = phase_observables(&cs);
        let c = cs.correlation(&cv, &cw, &t_grid, cc.samples, ctx.seed)?;
        c.write_csv(std::fs::File::create(ctx.path("correlation_control.csv"))?)?;
        Some(c)
    } else {
        None
    };
    let (setup, ledger_error) = optional_setup(ctx);
    let payload = CorrelationPayload { phi_bar: susp.phi_bar, series, control, ledger_error };
    let mut rep = ctx.report(Command::Correlation, setup.as_ref(), payload);
    let fit = rep.payload.series.fit.clone().context("fit missing")?;
    rep.assert(
        "decay rate",
        fit.a1_ci.0 > 0.0,
        format!("a1 = {} with 95% interval ({}, {}) over {} points", fit.a1, fit.a1_ci.0, fit.a1_ci.1, fit.points),
    );
    if let Some(c) = rep.payload.control.as_ref().and_then(|c| c.fit.clone()) {
        rep.assert("control shows no exponential decay", !c.decays(), format!("a1 = {}, curvature = {}", c.a1, c.curvature));
    }
    finish(&rep, &ctx.path("correlation.json"))
}

fn resolvent(ctx: &Ctx) -> Result<Option<String>> {
    let setup = ctx.setup()?;
    let sc = &ctx.cfg.scan;
    let grid = ctx.grid();
    let fam = random_family(ctx.seed, sc.family_size, grid, setup.map.y_lo, setup.map.y_hi, &[], true);
    let mut rows = Vec::new();
    for &sigma in &sc.sigma {
        for &b in &sc.resolvent_b {
            rows.push(resolvent_norm(&setup, TwistParam::new(sigma, b), &fam, grid)?);
        }
    }
    let mut rep = ctx.report(Command::Resolvent, Some(&setup), rows);
    for &sigma in &sc.sigma {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rep.payload.iter().filter(|r| r.sigma == sigma).map(|r| (r.b.abs().ln(), r.norm.ln())).unzip();
        if xs.len() < 2 {
            bail!("resolvent slope needs at least two b values");
        }
        let slope = linear_fit(&xs, &ys).1;
        rep.assert(&format!("log-log slope (sigma={sigma})"), slope < 1.0, format!("slope = {slope}"));
    }
    finish(&rep, &ctx.path("resolvent.json"))
}
