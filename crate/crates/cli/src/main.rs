use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dec_core::adaptive::{adaptive_integrate, AdaptiveConfig, DEFAULT_P_MAX};
use dec_core::bench::{
    default_dts, parse_schemes, run_convergence, run_pde_convergence, run_speedup, write_speedup_csv, Method,
    RunConfig, SweepOptions, DEFAULT_MESHES,
};
use dec_core::cg1d::{Basis, LaeSetup, TimeMode};
use dec_core::dec_ode::parse_variant_name;
use dec_core::problems::{self, TestProblem};
use dec_core::rk_export::build_tableau;
use dec_core::stability::{region_grid, stability_polynomial, GridSpec};
use dec_core::{integrate, DecError, NodeFamily, Scheme, SchemePlan};

#[derive(Parser, Debug)]
#[command(name = "dec", version, about = "Deferred correction time integrators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Output path (CSV; a prefix for `stability`, a JSON file for `tableau`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also emit JSON (next to `--out`, or on stdout instead of CSV).
    #[arg(long, global = true)]
    json: bool,
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one problem with one scheme.
    Solve(SolveArgs),
    /// Error-versus-step-size sweep.
    Convergence(ConvergenceArgs),
    /// Ratio of rhs evaluations per step between two schemes.
    Speedup(SpeedupArgs),
    /// Export a Butcher tableau as JSON.
    Tableau(SchemeArgs),
    /// Stability polynomial and region scan.
    Stability(StabilityArgs),
    /// Periodic 1D advection with continuous Galerkin elements.
    Pde1d(PdeArgs),
}

#[derive(Args, Debug, Clone)]
struct SchemeArgs {
    /// Scheme name: bdec, bdecu, bdecdu, sdec, sdecu, sdecdu, adec, adecu, adecdu.
    #[arg(long, alias = "scheme")]
    variant: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    /// eq or gl.
    #[arg(long)]
    nodes: Option<String>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// linear, vibrating or dahlquist.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    p_max: Option<usize>,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Comma-separated orders.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated step sizes; default T/2^k for k = 3..9.
    #[arg(long, value_delimiter = ',')]
    dts: Option<Vec<f64>>,
    /// Add adaptive runs of every interpolating scheme with this tolerance.
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    p_max: Option<usize>,
    /// Record wall-clock seconds per cell.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct SpeedupArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, default_value = "bdec")]
    base: String,
    #[arg(long, default_value = "bdecdu")]
    efficient: String,
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// re0,re1,im0,im1,nx,ny
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug)]
struct PdeArgs {
    /// b2, b3, p2, p3, pgl2, pgl3 or pgl4.
    #[arg(long)]
    basis: Option<String>,
    /// Comma-separated element counts.
    #[arg(long, value_delimiter = ',')]
    elements: Option<Vec<usize>>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    cip: Option<f64>,
    /// bdec or bdecu.
    #[arg(long)]
    scheme: Option<String>,
    /// Defaults to the polynomial degree plus one.
    #[arg(long)]
    order: Option<usize>,
    /// Force the lumped ODE path (`ode`) or the mass-matrix-free one (`mmf`).
    #[arg(long)]
    mode: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>()
                .is_some_and(|j| j.io_error_kind() == Some(io::ErrorKind::BrokenPipe))
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(d) = cause.downcast_ref::<DecError>() {
            return match d {
                DecError::NumericalFailure { .. } | DecError::StepFailure { .. } => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<NumericalFailures>().is_some() {
            return 2;
        }
    }
    1
}

#[derive(Debug)]
struct NumericalFailures(usize);

impl std::fmt::Display for NumericalFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cell(s) failed numerically", self.0)
    }
}

impl std::error::Error for NumericalFailures {}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    let out = cli.global.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from));
    let json = cli.global.json || cfg.json.unwrap_or(false);
    let ctx = Ctx { cfg, out, json };
    match cli.command {
        Command::Solve(a) => solve(&ctx, a),
        Command::Convergence(a) => convergence(&ctx, a),
        Command::Speedup(a) => speedup(&ctx, a),
        Command::Tableau(a) => tableau(&ctx, a),
        Command::Stability(a) => stability(&ctx, a),
        Command::Pde1d(a) => pde1d(&ctx, a),
    }
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    fn family(&self, flag: &Option<String>) -> Result<NodeFamily> {
        Ok(flag
            .clone()
            .or_else(|| self.cfg.nodes.clone())
            .unwrap_or_else(|| "eq".into())
            .parse()?)
    }

    fn problem(&self, flag: &Option<String>) -> Result<TestProblem> {
        Ok(problems::by_name(
            flag.as_deref().or(self.cfg.problem.as_deref()).unwrap_or("linear"),
        )?)
    }

    fn scheme(&self, a: &SchemeArgs) -> Result<Scheme> {
        let name = a
            .variant
            .clone()
            .or_else(|| self.cfg.schemes.as_ref().and_then(|s| s.first().cloned()))
            .unwrap_or_else(|| "bdec".into());
        let (variant, fixed) = parse_variant_name(&name)?;
        let alpha = match (fixed, a.alpha.or(self.cfg.alpha)) {
            (Some(f), Some(given)) if f != given => {
                bail!("scheme {name} fixes alpha = {f}, but alpha = {given} was given")
            }
            (Some(f), _) => f,
            (None, given) => given.unwrap_or(0.0),
        };
        let order = a.order.or(self.cfg.order).unwrap_or(3);
        Ok(Scheme::new(variant, alpha, order, self.family(&a.nodes)?))
    }

    /// Writes CSV to `--out` or stdout, plus a JSON mirror when asked.
    fn emit(&self, csv: impl FnOnce(&mut dyn Write) -> dec_core::Result<()>, json: &impl Serialize) -> Result<()> {
        match &self.out {
            Some(path) => {
                let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
                csv(&mut f)?;
                f.flush()?;
                if self.json {
                    let jpath = path.with_extension("json");
                    serde_json::to_writer_pretty(File::create(&jpath)?, json)?;
                }
            }
            None if self.json => {
                let mut lock = io::stdout().lock();
                serde_json::to_writer_pretty(&mut lock, json)?;
                writeln!(lock)?;
            }
            None => {
                let mut buf = Vec::new();
                csv(&mut buf)?;
                io::stdout().lock().write_all(&buf)?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SolveSummary {
    problem: String,
    method: String,
    dt: f64,
    t_end: f64,
    error: f64,
    rhs_evaluations: usize,
    mean_p: Option<f64>,
    std_p: Option<f64>,
    final_state: Vec<f64>,
}

fn solve(ctx: &Ctx, a: SolveArgs) -> Result<()> {
    let problem = ctx.problem(&a.problem)?;
    let scheme = ctx.scheme(&a.scheme)?;
    let span = problem.t_end - problem.t0;
    let dt = a.dt.or(ctx.cfg.dt).unwrap_or(span / 64.0);
    let adaptive = a.adaptive || ctx.cfg.adaptive.unwrap_or(false);
    let sys = problem.system.as_ref();
    let (traj, method, mean_p, std_p) = if adaptive {
        let mut cfg = AdaptiveConfig::new(
            scheme.variant,
            scheme.alpha,
            a.eps.or(ctx.cfg.eps).unwrap_or(1e-8),
            scheme.family,
        );
        cfg.p_max = a.p_max.or(ctx.cfg.p_max).unwrap_or(DEFAULT_P_MAX);
        let run = adaptive_integrate(&cfg, sys, problem.t0, &problem.u0, problem.t_end, dt)?;
        (run.trajectory, Method::Adaptive(cfg).label(), Some(run.mean_p), Some(run.std_p))
    } else {
        let plan = scheme.plan()?;
        let traj = integrate(&plan, sys, problem.t0, &problem.u0, problem.t_end, dt)?;
        (traj, scheme.label(), None, None)
    };
    let exact = problem.exact_at(problem.t_end);
    let error = traj
        .final_state()
        .iter()
        .zip(&exact)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let summary = SolveSummary {
        problem: problem.name.clone(),
        method,
        dt,
        t_end: problem.t_end,
        error,
        rhs_evaluations: traj.rhs_evaluations,
        mean_p,
        std_p,
        final_state: traj.final_state().to_vec(),
    };
    eprintln!(
        "{} on {}: error {:.3e}, {} rhs evaluations",
        summary.method, summary.problem, error, summary.rhs_evaluations
    );
    ctx.emit(
        |w| {
            let mut out = csv_writer(w);
            let dim = traj.states[0].len();
            let mut header = vec!["t".to_string()];
            header.extend((0..dim).map(|i| format!("u{i}")));
            out.write_record(&header).map_err(csv_err)?;
            for (t, u) in traj.times.iter().zip(&traj.states) {
                let mut rec = vec![t.to_string()];
                rec.extend(u.iter().map(|x| x.to_string()));
                out.write_record(&rec).map_err(csv_err)?;
            }
            out.flush()?;
            Ok(())
        },
        &summary,
    )
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(w)
}

fn csv_err(e: csv::Error) -> DecError {
    DecError::Io(e.to_string())
}

fn convergence(ctx: &Ctx, a: ConvergenceArgs) -> Result<()> {
    let problem = ctx.problem(&a.problem)?;
    let family = ctx.family(&a.nodes)?;
    let alpha = a.alpha.or(ctx.cfg.alpha).unwrap_or(0.0);
    let names = a
        .schemes
        .or_else(|| ctx.cfg.schemes.clone())
        .unwrap_or_else(|| vec!["bdec".into(), "bdecu".into(), "bdecdu".into()]);
    let orders = a.orders.or_else(|| ctx.cfg.orders.clone()).unwrap_or_else(|| vec![3, 5, 7]);
    let mut methods = Vec::new();
    for &order in &orders {
        methods.extend(parse_schemes(&names, order, family, alpha)?.into_iter().map(Method::Fixed));
    }
    if a.adaptive || ctx.cfg.adaptive.unwrap_or(false) {
        let eps = a.eps.or(ctx.cfg.eps).unwrap_or(1e-8);
        let p_max = a.p_max.or(ctx.cfg.p_max).unwrap_or(DEFAULT_P_MAX);
        for s in parse_schemes(&names, 2, family, alpha)? {
            if s.variant != dec_core::Variant::AlphaDec {
                let mut cfg = AdaptiveConfig::new(s.variant, s.alpha, eps, family);
                cfg.p_max = p_max;
                methods.push(Method::Adaptive(cfg));
            }
        }
    }
    let dts = a
        .dts
        .or_else(|| ctx.cfg.dts.clone())
        .unwrap_or_else(|| default_dts(problem.t_end - problem.t0));
    let opts = SweepOptions {
        timing: a.timing || ctx.cfg.timing.unwrap_or(false),
    };
    let report = run_convergence(&problem, &methods, &dts, opts)?;
    for s in &report.series {
        let slope = s.fitted_slope.map_or("-".to_string(), |x| format!("{x:.2}"));
        eprintln!("{:<28} slope {slope}", s.method);
    }
    ctx.emit(|w| report.write_csv(w), &report)?;
    let failed = report
        .series
        .iter()
        .flat_map(|s| &s.rows)
        .filter(|r| r.failure.is_some())
        .count();
    if failed > 0 {
        return Err(NumericalFailures(failed).into());
    }
    Ok(())
}

fn speedup(ctx: &Ctx, a: SpeedupArgs) -> Result<()> {
    let problem = ctx.problem(&a.problem)?;
    let family = ctx.family(&a.nodes)?;
    let alpha = a.alpha.or(ctx.cfg.alpha).unwrap_or(0.0);
    let schemes = parse_schemes(&[a.base, a.efficient], 2, family, alpha)?;
    let orders = a
        .orders
        .or_else(|| ctx.cfg.orders.clone())
        .unwrap_or_else(|| (2..=13).collect());
    let rows = run_speedup(&problem, schemes[0], schemes[1], &orders)?;
    ctx.emit(|w| write_speedup_csv(&rows, w), &rows)
}

fn tableau(ctx: &Ctx, a: SchemeArgs) -> Result<()> {
    let scheme = ctx.scheme(&a)?;
    let tab = build_tableau(&SchemePlan::new(scheme.variant, scheme.alpha, scheme.order, scheme.family)?)?;
    match &ctx.out {
        Some(path) => {
            let f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            tab.write_json(f)?;
        }
        None => writeln!(io::stdout().lock(), "{}", tab.to_json())?,
    }
    eprintln!("{}: {} stages", scheme.label(), tab.stages());
    Ok(())
}

fn prefixed(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct StabilitySummary {
    scheme: String,
    coefficients: Vec<f64>,
    real_axis_boundary: Option<f64>,
    stable_area: f64,
}

fn stability(ctx: &Ctx, a: StabilityArgs) -> Result<()> {
    let scheme = ctx.scheme(&a.scheme)?;
    let plan = scheme.plan()?;
    let poly = match build_tableau(&plan) {
        Ok(t) => stability_polynomial(&t)?,
        Err(DecError::UnsupportedExport(_)) => dec_core::stability::scheme_polynomial(&plan)?,
        Err(e) => return Err(e.into()),
    };
    let spec: GridSpec = match a.grid.or_else(|| ctx.cfg.grid.clone()) {
        Some(g) => g.parse()?,
        None => GridSpec::default(),
    };
    let grid = region_grid(&poly, spec)?;
    let summary = StabilitySummary {
        scheme: scheme.label(),
        coefficients: poly.coefficients.clone(),
        real_axis_boundary: poly.real_axis_boundary(-100.0, 1e-3),
        stable_area: grid.stable_area(),
    };
    eprintln!(
        "{}: degree {}, real interval [{}, 0], area {:.3}",
        summary.scheme,
        poly.degree(),
        summary.real_axis_boundary.map_or("-inf".into(), |x| format!("{x:.6}")),
        summary.stable_area
    );
    let prefix = ctx.out.clone().unwrap_or_else(|| PathBuf::from(format!("stability-{}", scheme.label())));
    grid.write_csv(BufWriter::new(File::create(prefixed(&prefix, "csv"))?))?;
    grid.write_pgm(BufWriter::new(File::create(prefixed(&prefix, "pgm"))?))?;
    if ctx.json {
        serde_json::to_writer_pretty(File::create(prefixed(&prefix, "json"))?, &summary)?;
    }
    Ok(())
}

fn pde1d(ctx: &Ctx, a: PdeArgs) -> Result<()> {
    let basis: Basis = a
        .basis
        .or_else(|| ctx.cfg.basis.clone())
        .unwrap_or_else(|| "b2".into())
        .parse()?;
    let name = a.scheme.unwrap_or_else(|| "bdec".into());
    let (variant, fixed) = parse_variant_name(&name)?;
    if fixed.is_some_and(|x| x != 0.0) {
        bail!("the advection solver runs alpha = 0 schemes (bdec or bdecu), got {name}");
    }
    let mut setup = LaeSetup::standard(basis, 16, variant);
    if let Some(o) = a.order.or(ctx.cfg.order) {
        setup.order = o;
    }
    if let Some(c) = a.cfl.or(ctx.cfg.cfl) {
        setup.cfl = c;
    }
    match a.cip.or(ctx.cfg.cip) {
        Some(d) => setup.delta_cip = d,
        None if basis.default_cip().is_none() => {
            return Err(anyhow!("no tuned CIP coefficient for {basis}; pass --cip"))
        }
        None => {}
    }
    if let Some(m) = a.mode {
        setup.mode = match m.as_str() {
            "ode" => TimeMode::Ode,
            "mmf" => TimeMode::MassMatrixFree,
            other => bail!("unknown mode `{other}` (ode or mmf)"),
        };
    }
    let meshes = a
        .elements
        .or_else(|| ctx.cfg.elements.clone())
        .unwrap_or_else(|| DEFAULT_MESHES.to_vec());
    let report = run_pde_convergence(&setup, &meshes)?;
    eprintln!(
        "{}: L2 slope {}",
        report.label,
        report.l2_slope.map_or("-".into(), |s| format!("{s:.2}"))
    );
    ctx.emit(|w| report.write_csv(w), &report)
}
