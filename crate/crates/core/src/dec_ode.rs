//! Single-step deferred correction integrators for ODE systems.
//!
//! The engine covers the whole alpha-family (alpha = 0 is the "big interval"
//! scheme, alpha = 1 the "small interval" one) plus the two efficient
//! variants that grow the node count between iterations by interpolating
//! either the states (`AlphaDecU`) or the stored right-hand side values
//! (`AlphaDecDu`).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::coeffs::{interp_matrix, DecCoefficients, NodeFamily};
use crate::error::{DecError, Result};
use crate::matrix::Matrix;

/// Right-hand side of `u' = G(t, u)`.
pub trait OdeSystem: Sync {
    fn dimension(&self) -> usize;
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]);
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn dimension(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]) {
        (self.f)(t, u, du)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    AlphaDec,
    AlphaDecU,
    AlphaDecDu,
}

impl Variant {
    pub fn suffix(self) -> &'static str {
        match self {
            Variant::AlphaDec => "",
            Variant::AlphaDecU => "u",
            Variant::AlphaDecDu => "du",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "aDeC{}", self.suffix())
    }
}

/// Full description of a scheme: variant, alpha, order and node family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub variant: Variant,
    pub alpha: f64,
    pub order: usize,
    pub family: NodeFamily,
}

impl Scheme {
    pub fn new(variant: Variant, alpha: f64, order: usize, family: NodeFamily) -> Self {
        Scheme {
            variant,
            alpha,
            order,
            family,
        }
    }

    /// Conventional name: `bDeCu` for alpha = 0, `sDeCdu` for alpha = 1,
    /// `aDeC(0.5)` otherwise.
    pub fn name(&self) -> String {
        scheme_name(self.variant, self.alpha)
    }

    pub fn label(&self) -> String {
        format!("{}{}-{}", self.name(), self.order, self.family.short_name())
    }

    pub fn plan(&self) -> Result<SchemePlan> {
        SchemePlan::new(self.variant, self.alpha, self.order, self.family)
    }
}

pub fn scheme_name(variant: Variant, alpha: f64) -> String {
    if alpha == 0.0 {
        format!("bDeC{}", variant.suffix())
    } else if alpha == 1.0 {
        format!("sDeC{}", variant.suffix())
    } else {
        format!("aDeC{}({alpha})", variant.suffix())
    }
}

/// Parses a scheme family name. `bdec*` and `sdec*` fix alpha; `adec*` (or
/// `dec*`) leaves it to the caller unless a trailing `(alpha)` is given, as in
/// the names produced by [`scheme_name`].
pub fn parse_variant_name(s: &str) -> Result<(Variant, Option<f64>)> {
    let bad = || DecError::Parse(format!("unknown scheme `{s}`"));
    let mut lower = s.trim().to_ascii_lowercase();
    let mut explicit = None;
    if let Some(open) = lower.find('(') {
        let inner = lower[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let a: f64 = inner.trim().parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&a) {
            return Err(bad());
        }
        explicit = Some(a);
        lower.truncate(open);
    }
    let (alpha, rest) = if let Some(r) = lower.strip_prefix("alpha") {
        (None, r)
    } else if let Some(r) = lower.strip_prefix('b') {
        (Some(0.0), r)
    } else if let Some(r) = lower.strip_prefix('s') {
        (Some(1.0), r)
    } else if let Some(r) = lower.strip_prefix('a') {
        (None, r)
    } else {
        (None, lower.as_str())
    };
    let variant = match rest {
        "dec" => Variant::AlphaDec,
        "decu" => Variant::AlphaDecU,
        "decdu" => Variant::AlphaDecDu,
        _ => return Err(bad()),
    };
    match (alpha, explicit) {
        (Some(_), Some(_)) => Err(bad()),
        (a, e) => Ok((variant, a.or(e))),
    }
}

impl FromStr for Variant {
    type Err = DecError;
    fn from_str(s: &str) -> Result<Self> {
        parse_variant_name(s).map(|(v, _)| v)
    }
}

/// One iteration of a plan: which coefficient level it runs on and the
/// interpolation matrix applied before it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationPlan {
    pub level: usize,
    pub interpolation: Option<Matrix>,
}

/// A fully resolved scheme with all matrices precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePlan {
    pub variant: Variant,
    pub alpha: f64,
    pub order: usize,
    pub family: NodeFamily,
    pub m: usize,
    pub euler_first_iteration: bool,
    /// Distinct coefficient sets, indexed by [`IterationPlan::level`].
    pub levels: Vec<DecCoefficients>,
    pub iterations: Vec<IterationPlan>,
}

impl SchemePlan {
    pub fn new(variant: Variant, alpha: f64, order: usize, family: NodeFamily) -> Result<Self> {
        if order < 2 {
            return Err(DecError::InvalidOrder(format!(
                "order must be at least 2, got {order}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DecError::InvalidParameters(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        let m = family.subintervals_for_order(order);
        let (levels, iterations) = match variant {
            Variant::AlphaDec => {
                let levels = vec![DecCoefficients::for_family(family, m)?];
                let iterations = (0..order)
                    .map(|_| IterationPlan {
                        level: 0,
                        interpolation: None,
                    })
                    .collect();
                (levels, iterations)
            }
            Variant::AlphaDecU | Variant::AlphaDecDu => {
                let levels = (1..=m)
                    .map(|k| DecCoefficients::for_family(family, k))
                    .collect::<Result<Vec<_>>>()?;
                let mut iterations = Vec::with_capacity(order);
                for p in 1..=order {
                    let level = p.min(m) - 1;
                    let interpolation = if (2..=m).contains(&p) {
                        Some(interp_matrix(levels[p - 2].nodes(), levels[p - 1].nodes())?)
                    } else {
                        None
                    };
                    iterations.push(IterationPlan {
                        level,
                        interpolation,
                    });
                }
                (levels, iterations)
            }
        };
        Ok(SchemePlan {
            variant,
            alpha,
            order,
            family,
            m,
            euler_first_iteration: true,
            levels,
            iterations,
        })
    }

    pub fn with_euler_first_iteration(mut self, euler: bool) -> Self {
        self.euler_first_iteration = euler;
        self
    }

    pub fn scheme(&self) -> Scheme {
        Scheme::new(self.variant, self.alpha, self.order, self.family)
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations.len()
    }

    /// Node count (including the initial node) used by each iteration.
    pub fn node_counts(&self) -> Vec<usize> {
        self.iterations
            .iter()
            .map(|it| self.levels[it.level].node_set.len())
            .collect()
    }

    /// 1-based iteration numbers preceded by an interpolation.
    pub fn interpolation_schedule(&self) -> Vec<usize> {
        self.iterations
            .iter()
            .enumerate()
            .filter(|(_, it)| it.interpolation.is_some())
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn coefficients(&self, iteration: usize) -> &DecCoefficients {
        &self.levels[self.iterations[iteration - 1].level]
    }

    /// The final node set.
    pub fn final_coefficients(&self) -> &DecCoefficients {
        self.coefficients(self.total_iterations())
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub u_next: Vec<f64>,
    pub rhs_evaluations: usize,
    pub iterations_used: usize,
    /// Final-node value after each iteration (`u^{last,(p)}` for p = 1..).
    pub iterates: Vec<Vec<f64>>,
    /// Normalized times and states of the final iteration. Not part of the
    /// stepping contract.
    pub final_nodes: Vec<f64>,
    pub final_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct NodeArray {
    nodes: Vec<f64>,
    u: Vec<Vec<f64>>,
    g: Vec<Option<Vec<f64>>>,
}

/// Where a right-hand side evaluation happens inside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Probe {
    pub t: f64,
    /// Iteration that produced the evaluated state (0 for `u_n`).
    pub iteration: usize,
    pub node: usize,
}

/// Iteration state of one step. Drives the iterations one at a time so the
/// adaptive stepper can inspect intermediate results. The evaluator is
/// generic so the same sweep can be traced symbolically for tableau export.
pub(crate) struct Sweep<F: FnMut(Probe, &[f64], &mut [f64])> {
    rhs: F,
    t_n: f64,
    dt: f64,
    u_n: Vec<f64>,
    g0: Vec<f64>,
    evaluations: usize,
    iteration: usize,
    current: Option<NodeArray>,
    iterates: Vec<Vec<f64>>,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn combine(weights: &[f64], vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (w, v) in weights.iter().zip(vectors) {
        if *w != 0.0 {
            axpy(&mut out, *w, v);
        }
    }
    out
}

impl<F: FnMut(Probe, &[f64], &mut [f64])> Sweep<F> {
    pub(crate) fn new(rhs: F, t_n: f64, u_n: &[f64], dt: f64) -> Result<Self> {
        let mut sweep = Sweep {
            rhs,
            t_n,
            dt,
            u_n: u_n.to_vec(),
            g0: Vec::new(),
            evaluations: 0,
            iteration: 0,
            current: None,
            iterates: Vec::new(),
        };
        sweep.g0 = sweep.eval(t_n, u_n, 0, 0)?;
        Ok(sweep)
    }

    fn eval(&mut self, t: f64, u: &[f64], iteration: usize, node: usize) -> Result<Vec<f64>> {
        let mut du = vec![0.0; u.len()];
        (self.rhs)(Probe { t, iteration, node }, u, &mut du);
        self.evaluations += 1;
        if du.iter().all(|x| x.is_finite()) {
            Ok(du)
        } else {
            Err(DecError::NumericalFailure { t, iteration, node })
        }
    }

    fn time(&self, node: f64) -> f64 {
        self.t_n + self.dt * node
    }

    fn ensure_g(&mut self, arr: &mut NodeArray, node: usize, iteration: usize) -> Result<()> {
        if arr.g[node].is_none() {
            let t = self.time(arr.nodes[node]);
            let g = self.eval(t, &arr.u[node].clone(), iteration, node)?;
            arr.g[node] = Some(g);
        }
        Ok(())
    }

    fn ensure_all_g(&mut self, arr: &mut NodeArray, iteration: usize) -> Result<Vec<Vec<f64>>> {
        for node in 0..arr.nodes.len() {
            self.ensure_g(arr, node, iteration)?;
        }
        Ok(arr.g.iter().map(|g| g.clone().unwrap()).collect())
    }

    fn fresh_array(&self, nodes: &[f64], states: Vec<Vec<f64>>) -> NodeArray {
        let mut g = vec![None; nodes.len()];
        g[0] = Some(self.g0.clone());
        NodeArray {
            nodes: nodes.to_vec(),
            u: states,
            g,
        }
    }

    /// Runs the next iteration on `coeffs`, interpolating from the previous
    /// node set with `interp` first when given.
    pub(crate) fn advance(
        &mut self,
        variant: Variant,
        alpha: f64,
        coeffs: &DecCoefficients,
        interp: Option<&Matrix>,
        euler: bool,
    ) -> Result<()> {
        let p = self.iteration + 1;
        let nodes = coeffs.nodes();
        let n = nodes.len();
        let dim = self.u_n.len();

        let new_states: Vec<Vec<f64>>;
        let mut new_arr;
        if p == 1 && euler {
            new_states = (0..n)
                .map(|m| {
                    let mut u = self.u_n.clone();
                    axpy(&mut u, self.dt * coeffs.beta[m], &self.g0);
                    u
                })
                .collect();
            new_arr = self.fresh_array(nodes, new_states);
        } else {
            let g_src: Vec<Vec<f64>> = match self.current.take() {
                None => {
                    let mut start = self.fresh_array(nodes, vec![self.u_n.clone(); n]);
                    self.ensure_all_g(&mut start, p)?
                }
                Some(mut prev) => match (interp, variant) {
                    (None, _) => {
                        debug_assert_eq!(prev.nodes.len(), n);
                        self.ensure_all_g(&mut prev, p - 1)?
                    }
                    (Some(h), Variant::AlphaDecDu) => {
                        let g_prev = self.ensure_all_g(&mut prev, p - 1)?;
                        (0..n).map(|i| combine(h.row(i), &g_prev, dim)).collect()
                    }
                    (Some(h), Variant::AlphaDecU) => {
                        let star_states = (0..n).map(|i| combine(h.row(i), &prev.u, dim)).collect();
                        let mut star = self.fresh_array(nodes, star_states);
                        self.ensure_all_g(&mut star, p)?
                    }
                    (Some(_), Variant::AlphaDec) => {
                        unreachable!("the fixed-node scheme never interpolates")
                    }
                },
            };

            let explicit = coeffs.explicit_part(alpha);
            new_arr = self.fresh_array(nodes, vec![self.u_n.clone(); n]);
            for m in 1..n {
                let mut u = self.u_n.clone();
                for (l, g) in g_src.iter().enumerate() {
                    let w = explicit[(m, l)];
                    if w != 0.0 {
                        axpy(&mut u, self.dt * w, g);
                    }
                }
                if alpha != 0.0 {
                    for l in 0..m {
                        self.ensure_g(&mut new_arr, l, p)?;
                        let w = alpha * coeffs.gamma_matrix[(m, l)];
                        axpy(&mut u, self.dt * w, new_arr.g[l].as_ref().unwrap());
                    }
                }
                new_arr.u[m] = u;
            }
        }
        self.iterates.push(new_arr.u[n - 1].clone());
        self.current = Some(new_arr);
        self.iteration = p;
        Ok(())
    }

    pub(crate) fn last_node(&self) -> &[f64] {
        self.iterates.last().expect("no iteration has run")
    }

    pub(crate) fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub(crate) fn into_report(self) -> StepReport {
        let arr = self.current.expect("no iteration has run");
        StepReport {
            u_next: arr.u[arr.u.len() - 1].clone(),
            rhs_evaluations: self.evaluations,
            iterations_used: self.iteration,
            iterates: self.iterates,
            final_nodes: arr.nodes,
            final_states: arr.u,
        }
    }
}

pub(crate) fn check_step_input<S: OdeSystem + ?Sized>(sys: &S, u_n: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DecError::InvalidParameters(format!(
            "step size must be positive and finite, got {dt}"
        )));
    }
    if u_n.len() != sys.dimension() {
        return Err(DecError::InvalidParameters(format!(
            "state has length {} but the system has dimension {}",
            u_n.len(),
            sys.dimension()
        )));
    }
    Ok(())
}

/// Advances `u_n` from `t_n` by `dt`.
pub fn step<S: OdeSystem + ?Sized>(
    plan: &SchemePlan,
    sys: &S,
    t_n: f64,
    u_n: &[f64],
    dt: f64,
) -> Result<StepReport> {
    check_step_input(sys, u_n, dt)?;
    let mut sweep = Sweep::new(|p: Probe, u: &[f64], du: &mut [f64]| sys.rhs(p.t, u, du), t_n, u_n, dt)?;
    run_plan(plan, &mut sweep)?;
    Ok(sweep.into_report())
}

pub(crate) fn run_plan<F: FnMut(Probe, &[f64], &mut [f64])>(
    plan: &SchemePlan,
    sweep: &mut Sweep<F>,
) -> Result<()> {
    for it in &plan.iterations {
        sweep.advance(
            plan.variant,
            plan.alpha,
            &plan.levels[it.level],
            it.interpolation.as_ref(),
            plan.euler_first_iteration,
        )?;
    }
    Ok(())
}

/// Small-interval scheme written as an error/residual correction: each
/// iteration integrates the error equation with explicit Euler on every
/// subinterval, with the residual integrated spectrally. Runs `M + 1`
/// iterations starting from the constant initial guess.
pub fn sdec_residual_step<S: OdeSystem + ?Sized>(
    coeffs: &DecCoefficients,
    sys: &S,
    t_n: f64,
    u_n: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    check_step_input(sys, u_n, dt)?;
    let n = coeffs.nodes().len();
    let m_last = n - 1;
    let dim = u_n.len();
    let times: Vec<f64> = coeffs.nodes().iter().map(|x| t_n + dt * x).collect();
    let eval = |t: f64, u: &[f64], iteration: usize, node: usize| -> Result<Vec<f64>> {
        let mut du = vec![0.0; dim];
        sys.rhs(t, u, &mut du);
        if du.iter().all(|x| x.is_finite()) {
            Ok(du)
        } else {
            Err(DecError::NumericalFailure { t, iteration, node })
        }
    };

    let mut u: Vec<Vec<f64>> = vec![u_n.to_vec(); n];
    for p in 1..=(m_last + 1) {
        let g: Vec<Vec<f64>> = (0..n)
            .map(|l| eval(times[l], &u[l], p, l))
            .collect::<Result<_>>()?;
        // r^m = u_n + dt * sum_l theta^m_l G_l - u^m
        let residual: Vec<Vec<f64>> = (0..n)
            .map(|m| {
                let mut r = u_n.to_vec();
                axpy(&mut r, dt, &combine(coeffs.theta.row(m), &g, dim));
                for (ri, ui) in r.iter_mut().zip(&u[m]) {
                    *ri -= ui;
                }
                r
            })
            .collect();
        let mut error = vec![vec![0.0; dim]; n];
        for m in 1..n {
            let mut corrected = u[m - 1].clone();
            axpy(&mut corrected, 1.0, &error[m - 1]);
            let g_corr = eval(times[m - 1], &corrected, p, m - 1)?;
            let mut e = error[m - 1].clone();
            for q in 0..dim {
                e[q] += dt * coeffs.gamma[m] * (g_corr[q] - g[m - 1][q])
                    + residual[m][q]
                    - residual[m - 1][q];
            }
            error[m] = e;
        }
        for m in 1..n {
            axpy(&mut u[m], 1.0, &error[m]);
        }
    }
    Ok(u[m_last].clone())
}

/// Output of a fixed-step integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub rhs_evaluations: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Step sizes that cover `[t0, t_end]` with uniform steps of `dt`, the last
/// one shrunk so the final time is hit exactly.
pub fn step_sizes(t0: f64, t_end: f64, dt: f64) -> Result<Vec<(f64, f64)>> {
    if !(t_end > t0) {
        return Err(DecError::InvalidParameters(format!(
            "final time {t_end} must exceed initial time {t0}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DecError::InvalidParameters(format!(
            "step size must be positive and finite, got {dt}"
        )));
    }
    let span = t_end - t0;
    let ratio = span / dt;
    let full = (ratio + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(full + 1);
    for k in 0..full {
        let t = t0 + k as f64 * dt;
        out.push((t, dt));
    }
    let covered = full as f64 * dt;
    if span - covered > 1e-12 * span.max(1.0) {
        out.push((t0 + covered, t_end - (t0 + covered)));
    } else if let Some(last) = out.last_mut() {
        last.1 = t_end - last.0;
    }
    Ok(out)
}

/// Fixed-step integration of `sys` from `t0` to `t_end`.
pub fn integrate<S: OdeSystem + ?Sized>(
    plan: &SchemePlan,
    sys: &S,
    t0: f64,
    u0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let steps = step_sizes(t0, t_end, dt)?;
    let mut times = vec![t0];
    let mut states = vec![u0.to_vec()];
    let mut evaluations = 0;
    for (k, &(t, h)) in steps.iter().enumerate() {
        let report = step(plan, sys, t, states.last().unwrap(), h).map_err(|e| {
            DecError::StepFailure {
                step: k,
                source: Box::new(e),
            }
        })?;
        evaluations += report.rhs_evaluations;
        times.push(if k + 1 == steps.len() { t_end } else { t + h });
        states.push(report.u_next);
    }
    Ok(Trajectory {
        times,
        states,
        rhs_evaluations: evaluations,
    })
}
