//! Convergence and evaluation-count studies, report I/O and run config.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::time::Instant;

use crate::adaptive::{adaptive_integrate, AdaptiveConfig};
use crate::cg1d::{run_lae, Basis, LaeSetup, TimeMode};
use crate::coeffs::NodeFamily;
use crate::dec_ode::{integrate, parse_variant_name, step, Scheme, Variant};
use crate::error::{DecError, Result};
use crate::problems::TestProblem;

/// What a convergence cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Fixed(Scheme),
    Adaptive(AdaptiveConfig),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Fixed(s) => s.label(),
            Method::Adaptive(c) => format!(
                "{}-adaptive({:e})-{}",
                crate::dec_ode::scheme_name(c.variant, c.alpha),
                c.epsilon,
                c.family.short_name()
            ),
        }
    }
}

/// One (method, dt) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: String,
    pub dt: f64,
    pub error: Option<f64>,
    pub rhs_evaluations: usize,
    pub mean_p: Option<f64>,
    pub std_p: Option<f64>,
    /// Wall-clock seconds, informational only.
    pub seconds: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub method: String,
    /// Sorted by decreasing `dt`.
    pub rows: Vec<ConvergenceRow>,
    /// Slope between consecutive rows, `None` where an error is missing.
    pub pair_slopes: Vec<Option<f64>>,
    /// Least-squares slope of log2(error) against log2(dt).
    pub fitted_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub series: Vec<Series>,
}

fn usable(e: Option<f64>) -> Option<f64> {
    e.filter(|x| x.is_finite() && *x > 0.0)
}

/// `log2(e_a / e_b) / log2(h_a / h_b)`.
pub fn pair_slope(h_a: f64, e_a: f64, h_b: f64, e_b: f64) -> f64 {
    (e_a / e_b).log2() / (h_a / h_b).log2()
}

/// Least-squares slope of `log2 e` against `log2 h`; needs two points.
pub fn fitted_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl Series {
    pub fn from_rows(method: String, mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.dt.total_cmp(&a.dt));
        let pair_slopes = rows
            .windows(2)
            .map(|w| match (usable(w[0].error), usable(w[1].error)) {
                (Some(a), Some(b)) => Some(pair_slope(w[0].dt, a, w[1].dt, b)),
                _ => None,
            })
            .collect();
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| usable(r.error).map(|e| (r.dt, e)))
            .collect();
        Series {
            method,
            fitted_slope: fitted_slope(&points),
            pair_slopes,
            rows,
        }
    }

    pub fn errors(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

fn euclidean_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Record wall-clock seconds per cell. Off by default so reports are
    /// deterministic.
    pub timing: bool,
}

fn run_cell(problem: &TestProblem, method: &Method, dt: f64, opts: SweepOptions) -> ConvergenceRow {
    let start = Instant::now();
    let exact = problem.exact_at(problem.t_end);
    let sys = problem.system.as_ref();
    let mut row = ConvergenceRow {
        method: method.label(),
        dt,
        error: None,
        rhs_evaluations: 0,
        mean_p: None,
        std_p: None,
        seconds: None,
        failure: None,
    };
    let outcome = match method {
        Method::Fixed(s) => s.plan().and_then(|plan| {
            integrate(&plan, sys, problem.t0, &problem.u0, problem.t_end, dt).map(|tr| {
                row.rhs_evaluations = tr.rhs_evaluations;
                tr.final_state().to_vec()
            })
        }),
        Method::Adaptive(cfg) => {
            adaptive_integrate(cfg, sys, problem.t0, &problem.u0, problem.t_end, dt).map(|run| {
                row.rhs_evaluations = run.trajectory.rhs_evaluations;
                row.mean_p = Some(run.mean_p);
                row.std_p = Some(run.std_p);
                run.trajectory.final_state().to_vec()
            })
        }
    };
    match outcome {
        Ok(u) => row.error = Some(euclidean_error(&u, &exact)),
        Err(e) => row.failure = Some(e.to_string()),
    }
    if opts.timing {
        row.seconds = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// Error at the final time for every method and step size. Cells run in
/// parallel; a failing cell is recorded, not fatal.
pub fn run_convergence(
    problem: &TestProblem,
    methods: &[Method],
    dts: &[f64],
    opts: SweepOptions,
) -> Result<ConvergenceReport> {
    if dts.is_empty() || dts.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(DecError::InvalidParameters(
            "step sizes must be a nonempty list of positive numbers".into(),
        ));
    }
    let cells: Vec<(usize, f64)> = (0..methods.len())
        .flat_map(|m| dts.iter().map(move |&d| (m, d)))
        .collect();
    let rows: Vec<(usize, ConvergenceRow)> = cells
        .par_iter()
        .map(|&(m, d)| (m, run_cell(problem, &methods[m], d, opts)))
        .collect();
    let series = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let mine = rows.iter().filter(|(i, _)| *i == m).map(|(_, r)| r.clone()).collect();
            Series::from_rows(method.label(), mine)
        })
        .collect();
    Ok(ConvergenceReport {
        problem: problem.name.clone(),
        series,
    })
}

/// `span / 2^k` for `k` in `ks`.
pub fn halving_steps(span: f64, ks: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    ks.map(|k| span / 2f64.powi(k as i32)).collect()
}

/// Default step sizes `span / 2^k`, `k = 3..=9`.
pub fn default_dts(span: f64) -> Vec<f64> {
    halving_steps(span, 3..=9)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsvRow {
    problem: String,
    method: String,
    dt: f64,
    error: Option<f64>,
    rhs_evaluations: usize,
    mean_p: Option<f64>,
    std_p: Option<f64>,
    seconds: Option<f64>,
    failure: Option<String>,
}

impl ConvergenceReport {
    pub fn series(&self, method: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.method == method)
    }

    /// One line per cell; slopes are recomputed when reading.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.series {
            for r in &s.rows {
                out.serialize(CsvRow {
                    problem: self.problem.clone(),
                    method: r.method.clone(),
                    dt: r.dt,
                    error: r.error,
                    rhs_evaluations: r.rhs_evaluations,
                    mean_p: r.mean_p,
                    std_p: r.std_p,
                    seconds: r.seconds,
                    failure: r.failure.clone(),
                })
                .map_err(|e| DecError::Io(e.to_string()))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Reads a report written by [`ConvergenceReport::write_csv`]. Series
    /// keep the order of first appearance.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut problem: Option<String> = None;
        let mut grouped: Vec<(String, Vec<ConvergenceRow>)> = Vec::new();
        for rec in reader.deserialize::<CsvRow>() {
            let rec = rec.map_err(|e| DecError::Parse(e.to_string()))?;
            if !(rec.dt > 0.0 && rec.dt.is_finite()) {
                return Err(DecError::Parse(format!("invalid step size {}", rec.dt)));
            }
            match &problem {
                None => problem = Some(rec.problem.clone()),
                Some(p) if *p != rec.problem => {
                    return Err(DecError::Parse(format!(
                        "mixed problems `{p}` and `{}` in one report",
                        rec.problem
                    )))
                }
                _ => {}
            }
            let row = ConvergenceRow {
                method: rec.method.clone(),
                dt: rec.dt,
                error: rec.error,
                rhs_evaluations: rec.rhs_evaluations,
                mean_p: rec.mean_p,
                std_p: rec.std_p,
                seconds: rec.seconds,
                failure: rec.failure,
            };
            match grouped.iter_mut().find(|(m, _)| *m == rec.method) {
                Some((_, rows)) => rows.push(row),
                None => grouped.push((rec.method, vec![row])),
            }
        }
        Ok(ConvergenceReport {
            problem: problem.unwrap_or_default(),
            series: grouped
                .into_iter()
                .map(|(m, rows)| Series::from_rows(m, rows))
                .collect(),
        })
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::read_csv(s.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub order: usize,
    pub base_evaluations: usize,
    pub efficient_evaluations: usize,
    /// `base / efficient`.
    pub ratio: f64,
}

/// Per-step rhs-evaluation ratio of two schemes, measured on one step of
/// `problem`. The schemes' own orders are replaced by each entry of `orders`.
pub fn run_speedup(problem: &TestProblem, base: Scheme, efficient: Scheme, orders: &[usize]) -> Result<Vec<SpeedupRow>> {
    if base.family != efficient.family {
        return Err(DecError::InvalidParameters(
            "speed-up compares schemes on the same node family".into(),
        ));
    }
    let dt = (problem.t_end - problem.t0) / 8.0;
    let sys = problem.system.as_ref();
    orders
        .iter()
        .map(|&order| {
            let count = |s: Scheme| -> Result<usize> {
                let plan = Scheme { order, ..s }.plan()?;
                Ok(step(&plan, sys, problem.t0, &problem.u0, dt)?.rhs_evaluations)
            };
            let b = count(base)?;
            let e = count(efficient)?;
            Ok(SpeedupRow {
                order,
                base_evaluations: b,
                efficient_evaluations: e,
                ratio: b as f64 / e as f64,
            })
        })
        .collect()
}

pub fn write_speedup_csv<W: Write>(rows: &[SpeedupRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| DecError::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Default mesh sequence for advection studies.
pub const DEFAULT_MESHES: [usize; 4] = [16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRow {
    #[serde(rename = "N")]
    pub n_elements: usize,
    pub h: f64,
    pub l1_error: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    pub residual_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeReport {
    pub label: String,
    pub rows: Vec<PdeRow>,
    /// Least-squares slope of the L2 error against h.
    pub l2_slope: Option<f64>,
}

/// Runs `template` on every mesh in parallel.
pub fn run_pde_convergence(template: &LaeSetup, meshes: &[usize]) -> Result<PdeReport> {
    let rows = meshes
        .par_iter()
        .map(|&n| {
            let r = run_lae(&LaeSetup {
                n_elements: n,
                ..*template
            })?;
            Ok(PdeRow {
                n_elements: n,
                h: r.h,
                l1_error: r.errors.l1,
                l2_error: r.errors.l2,
                linf_error: r.errors.linf,
                residual_evals: r.residual_evaluations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.l2_error)).collect();
    let mode = match template.mode {
        TimeMode::Ode => "ode",
        TimeMode::MassMatrixFree => "mmf",
    };
    Ok(PdeReport {
        label: format!(
            "{}-{}{}-{mode}",
            template.basis,
            crate::dec_ode::scheme_name(template.variant, 0.0),
            template.order
        ),
        l2_slope: fitted_slope(&points),
        rows,
    })
}

impl PdeReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| DecError::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Run configuration read from TOML. Every field mirrors a command-line
/// flag and is optional; flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub schemes: Option<Vec<String>>,
    pub orders: Option<Vec<usize>>,
    pub order: Option<usize>,
    pub nodes: Option<String>,
    pub alpha: Option<f64>,
    pub dt: Option<f64>,
    pub dts: Option<Vec<f64>>,
    pub adaptive: Option<bool>,
    pub eps: Option<f64>,
    pub p_max: Option<usize>,
    pub basis: Option<String>,
    pub elements: Option<Vec<usize>>,
    pub cfl: Option<f64>,
    pub cip: Option<f64>,
    pub grid: Option<String>,
    pub out: Option<String>,
    pub json: Option<bool>,
    pub timing: Option<bool>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| DecError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without the command line.
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.nodes {
            n.parse::<NodeFamily>()?;
        }
        if let Some(b) = &self.basis {
            b.parse::<Basis>()?;
        }
        for s in self.schemes.iter().flatten() {
            parse_variant_name(s)?;
        }
        if let Some(g) = &self.grid {
            g.parse::<crate::stability::GridSpec>()?;
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(DecError::Parse(format!(
                "`{name}` must be positive and finite, got {x}"
            ))),
            _ => Ok(()),
        };
        positive("dt", self.dt)?;
        positive("cfl", self.cfl)?;
        for d in self.dts.iter().flatten() {
            positive("dts", Some(*d))?;
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(DecError::Parse(format!("`alpha` must lie in [0, 1], got {a}")));
            }
        }
        if let Some(e) = self.eps {
            if !(e >= 0.0) {
                return Err(DecError::Parse(format!("`eps` must be nonnegative, got {e}")));
            }
        }
        if let Some(c) = self.cip {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(DecError::Parse(format!("`cip` must be nonnegative, got {c}")));
            }
        }
        Ok(())
    }
}

/// Resolves scheme names such as `bdecu` into schemes of the given order.
/// Names that leave alpha open take `alpha`.
pub fn parse_schemes(names: &[String], order: usize, family: NodeFamily, alpha: f64) -> Result<Vec<Scheme>> {
    names
        .iter()
        .map(|n| {
            let (variant, fixed): (Variant, Option<f64>) = parse_variant_name(n)?;
            Ok(Scheme::new(variant, fixed.unwrap_or(alpha), order, family))
        })
        .collect()
}
