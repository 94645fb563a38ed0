//! p-adaptive stepping: iterate the interpolating variants until two
//! successive final-node iterates agree to a relative tolerance.
//!
//! The node count of iteration p is `min(p, M) + 1`, with `M` the number of
//! subintervals of the fixed scheme of order `p_max`. With `epsilon = 0` a
//! step is therefore identical to the fixed-order step of order `p_max`.
//! The stopping test is first applied after iteration 2 and uses the
//! Euclidean norm; if the newest iterate is exactly zero the test becomes
//! absolute.

use serde::{Deserialize, Serialize};

use crate::coeffs::NodeFamily;
use crate::dec_ode::{check_step_input, step_sizes, OdeSystem, Probe, SchemePlan, Sweep, Trajectory, Variant};
use crate::error::{DecError, Result};

pub const DEFAULT_P_MAX: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub epsilon: f64,
    pub p_max: usize,
    pub family: NodeFamily,
}

impl AdaptiveConfig {
    pub fn new(variant: Variant, alpha: f64, epsilon: f64, family: NodeFamily) -> Self {
        AdaptiveConfig {
            variant,
            alpha,
            epsilon,
            p_max: DEFAULT_P_MAX,
            family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::AlphaDec {
            return Err(DecError::InvalidParameters(
                "adaptivity needs an interpolating variant (u or du)".into(),
            ));
        }
        // epsilon = 0 is accepted: it disables early stopping.
        if !(self.epsilon >= 0.0) {
            return Err(DecError::InvalidParameters(format!(
                "tolerance must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if self.p_max < 2 {
            return Err(DecError::InvalidOrder(format!(
                "p_max must be at least 2, got {}",
                self.p_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    pub u_next: Vec<f64>,
    pub p_used: usize,
    pub rhs_evaluations: usize,
    pub converged: bool,
}

/// Reusable adaptive stepper holding the precomputed plan.
#[derive(Debug, Clone)]
pub struct AdaptiveStepper {
    cfg: AdaptiveConfig,
    plan: SchemePlan,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl AdaptiveStepper {
    pub fn new(cfg: AdaptiveConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = SchemePlan::new(cfg.variant, cfg.alpha, cfg.p_max, cfg.family)?;
        Ok(AdaptiveStepper { cfg, plan })
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.cfg
    }

    pub fn step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t_n: f64,
        u_n: &[f64],
        dt: f64,
    ) -> Result<AdaptiveStep> {
        check_step_input(sys, u_n, dt)?;
        let mut sweep = Sweep::new(|p: Probe, u: &[f64], du: &mut [f64]| sys.rhs(p.t, u, du), t_n, u_n, dt)?;
        let mut previous: Option<Vec<f64>> = None;
        let mut converged = false;
        let mut p_used = 0;
        for (k, it) in self.plan.iterations.iter().enumerate() {
            let p = k + 1;
            sweep.advance(
                self.plan.variant,
                self.plan.alpha,
                &self.plan.levels[it.level],
                it.interpolation.as_ref(),
                self.plan.euler_first_iteration,
            )?;
            p_used = p;
            let current = sweep.last_node().to_vec();
            if let Some(node) = current.iter().position(|x| !x.is_finite()) {
                return Err(DecError::NumericalFailure {
                    t: t_n + dt,
                    iteration: p,
                    node,
                });
            }
            if let Some(prev) = previous.as_ref() {
                let diff: Vec<f64> = current.iter().zip(prev).map(|(a, b)| a - b).collect();
                let size = norm(&current);
                let measure = if size == 0.0 { norm(&diff) } else { norm(&diff) / size };
                if measure <= self.cfg.epsilon {
                    converged = true;
                    break;
                }
            }
            previous = Some(current);
        }
        let rhs_evaluations = sweep.evaluations();
        Ok(AdaptiveStep {
            u_next: sweep.last_node().to_vec(),
            p_used,
            rhs_evaluations,
            converged,
        })
    }
}

pub fn adaptive_step<S: OdeSystem + ?Sized>(
    cfg: &AdaptiveConfig,
    sys: &S,
    t_n: f64,
    u_n: &[f64],
    dt: f64,
) -> Result<AdaptiveStep> {
    AdaptiveStepper::new(*cfg)?.step(sys, t_n, u_n, dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun {
    pub trajectory: Trajectory,
    pub p_used: Vec<usize>,
    pub mean_p: f64,
    /// Population standard deviation of `p_used`.
    pub std_p: f64,
    pub nonconverged_steps: usize,
}

pub fn adaptive_integrate<S: OdeSystem + ?Sized>(
    cfg: &AdaptiveConfig,
    sys: &S,
    t0: f64,
    u0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<AdaptiveRun> {
    let stepper = AdaptiveStepper::new(*cfg)?;
    let steps = step_sizes(t0, t_end, dt)?;
    let mut times = vec![t0];
    let mut states = vec![u0.to_vec()];
    let mut evaluations = 0;
    let mut p_used = Vec::with_capacity(steps.len());
    let mut nonconverged_steps = 0;
    for (k, &(t, h)) in steps.iter().enumerate() {
        let out = stepper
            .step(sys, t, states.last().unwrap(), h)
            .map_err(|e| DecError::StepFailure {
                step: k,
                source: Box::new(e),
            })?;
        evaluations += out.rhs_evaluations;
        p_used.push(out.p_used);
        if !out.converged {
            nonconverged_steps += 1;
        }
        times.push(if k + 1 == steps.len() { t_end } else { t + h });
        states.push(out.u_next);
    }
    let n = p_used.len() as f64;
    let mean_p = p_used.iter().sum::<usize>() as f64 / n;
    let var = p_used.iter().map(|&p| (p as f64 - mean_p).powi(2)).sum::<f64>() / n;
    Ok(AdaptiveRun {
        trajectory: Trajectory {
            times,
            states,
            rhs_evaluations: evaluations,
        },
        p_used,
        mean_p,
        std_p: var.sqrt(),
        nonconverged_steps,
    })
}
