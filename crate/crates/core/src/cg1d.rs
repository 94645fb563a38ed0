//! Periodic 1D continuous Galerkin discretization of `u_t + u_x = 0` on
//! `[0, 1]` with continuous interior penalty (CIP) stabilization, advanced
//! in time by DeC.
//!
//! Two time-stepping paths exist. The mass-matrix-free one iterates with
//! the consistent mass in the high-order operator and the lumped masses
//! `C_i = int phi_i` in the low-order one, so it never solves a linear
//! system and is not a Runge-Kutta method. The ODE path is for Lagrange
//! Gauss-Lobatto bases, whose nodal quadrature lumps the mass matrix to
//! high order; there the semi-discretization is handed to [`dec_ode::step`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::coeffs::{lagrange_basis, lagrange_basis_derivative, DecCoefficients};
use crate::dec_ode::{self, OdeSystem, SchemePlan, Variant};
use crate::error::{DecError, Result};
use crate::quadrature::{gauss_lobatto_points, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Bernstein(usize),
    LagrangeEquispaced(usize),
    LagrangeGL(usize),
}

impl Basis {
    pub fn degree(self) -> usize {
        match self {
            Basis::Bernstein(n) | Basis::LagrangeEquispaced(n) | Basis::LagrangeGL(n) => n,
        }
    }

    /// Tuned CIP coefficients for this basis. P3 borrows the B3 value and
    /// PGL4 the PGL3 value.
    pub fn default_cip(self) -> Option<f64> {
        match self {
            Basis::Bernstein(2) => Some(0.016),
            Basis::LagrangeEquispaced(2) => Some(0.00242),
            Basis::LagrangeGL(2) => Some(0.00346),
            Basis::Bernstein(3) | Basis::LagrangeEquispaced(3) => Some(0.00702),
            Basis::LagrangeGL(3) | Basis::LagrangeGL(4) => Some(0.000113),
            _ => None,
        }
    }

    /// Local nodes on the reference element `[0, 1]`.
    fn local_nodes(self) -> Vec<f64> {
        let n = self.degree();
        match self {
            Basis::LagrangeGL(_) => gauss_lobatto_points(n)
                .iter()
                .map(|x| 0.5 * (1.0 + x))
                .collect(),
            _ => (0..=n).map(|k| k as f64 / n as f64).collect(),
        }
    }

    fn values(self, nodes: &[f64], x: f64) -> Vec<f64> {
        match self {
            Basis::Bernstein(n) => (0..=n).map(|k| bernstein(n, k, x)).collect(),
            _ => lagrange_basis(nodes, x),
        }
    }

    fn derivatives(self, nodes: &[f64], x: f64) -> Vec<f64> {
        match self {
            Basis::Bernstein(n) => (0..=n).map(|k| bernstein_derivative(n, k, x)).collect(),
            _ => lagrange_basis_derivative(nodes, x),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Bernstein(n) => write!(f, "B{n}"),
            Basis::LagrangeEquispaced(n) => write!(f, "P{n}"),
            Basis::LagrangeGL(n) => write!(f, "PGL{n}"),
        }
    }
}

/// Parses `b2`, `p3`, `pgl4` and so on.
impl FromStr for Basis {
    type Err = DecError;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (ctor, digits): (fn(usize) -> Basis, &str) = if let Some(d) = lower.strip_prefix("pgl") {
            (Basis::LagrangeGL, d)
        } else if let Some(d) = lower.strip_prefix('p') {
            (Basis::LagrangeEquispaced, d)
        } else if let Some(d) = lower.strip_prefix('b') {
            (Basis::Bernstein, d)
        } else {
            return Err(DecError::Parse(format!("unknown basis `{s}`")));
        };
        let n: usize = digits
            .parse()
            .map_err(|_| DecError::Parse(format!("unknown basis `{s}`")))?;
        Ok(ctor(n))
    }
}

/// De Casteljau evaluation of a Bernstein polynomial with coefficients `c`.
pub fn de_casteljau(c: &[f64], x: f64) -> f64 {
    let mut work = c.to_vec();
    for level in 1..work.len() {
        for k in 0..work.len() - level {
            work[k] = (1.0 - x) * work[k] + x * work[k + 1];
        }
    }
    work[0]
}

fn unit(len: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

pub fn bernstein(n: usize, k: usize, x: f64) -> f64 {
    de_casteljau(&unit(n + 1, k), x)
}

/// `d/dx B_k^n = n (B_{k-1}^{n-1} - B_k^{n-1})`, evaluated as the degree
/// `n - 1` polynomial with differenced coefficients.
pub fn bernstein_derivative(n: usize, k: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let c = unit(n + 1, k);
    let diff: Vec<f64> = (0..n).map(|j| n as f64 * (c[j + 1] - c[j])).collect();
    de_casteljau(&diff, x)
}

#[derive(Debug, Clone)]
pub struct FemSpace1D {
    pub n_elements: usize,
    pub h: f64,
    pub basis: Basis,
    pub dof_count: usize,
    /// `C_i = int phi_i`.
    pub lumped_masses: Vec<f64>,
    /// `int_K phi_k phi_l`, identical on every element.
    pub element_mass: Vec<Vec<f64>>,
    local_nodes: Vec<f64>,
    quad: QuadratureRule,
    /// Reference values and derivatives at the quadrature points.
    phi_q: Vec<Vec<f64>>,
    dphi_q: Vec<Vec<f64>>,
    /// Reference derivatives at the left and right element ends.
    dphi_left: Vec<f64>,
    dphi_right: Vec<f64>,
}

impl FemSpace1D {
    pub fn new(n_elements: usize, basis: Basis) -> Result<Self> {
        let n = basis.degree();
        if !(2..=4).contains(&n) {
            return Err(DecError::InvalidParameters(format!(
                "polynomial degree must be 2, 3 or 4, got {n}"
            )));
        }
        if n_elements < 3 {
            return Err(DecError::InvalidParameters(format!(
                "need at least 3 elements, got {n_elements}"
            )));
        }
        let h = 1.0 / n_elements as f64;
        let local_nodes = basis.local_nodes();
        let quad = QuadratureRule::gauss_legendre(n + 1).mapped(0.0, 1.0);
        let phi_q: Vec<Vec<f64>> = quad.points.iter().map(|&x| basis.values(&local_nodes, x)).collect();
        let dphi_q = quad.points.iter().map(|&x| basis.derivatives(&local_nodes, x)).collect();
        let element_mass = (0..=n)
            .map(|k| {
                (0..=n)
                    .map(|l| {
                        quad.weights
                            .iter()
                            .zip(&phi_q)
                            .map(|(w, p)| w * h * p[k] * p[l])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let dof_count = n_elements * n;
        let mut lumped_masses = vec![0.0; dof_count];
        for e in 0..n_elements {
            for k in 0..=n {
                let integral: f64 = quad.weights.iter().zip(&phi_q).map(|(w, p)| w * h * p[k]).sum();
                lumped_masses[(e * n + k) % dof_count] += integral;
            }
        }
        Ok(FemSpace1D {
            n_elements,
            h,
            basis,
            dof_count,
            lumped_masses,
            element_mass,
            dphi_left: basis.derivatives(&local_nodes, 0.0),
            dphi_right: basis.derivatives(&local_nodes, 1.0),
            local_nodes,
            quad,
            phi_q,
            dphi_q,
        })
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// Global DoF of local index `k` in element `e`.
    pub fn dof(&self, e: usize, k: usize) -> usize {
        (e * self.degree() + k) % self.dof_count
    }

    fn element_dofs(&self, e: usize) -> Vec<usize> {
        (0..=self.degree()).map(|k| self.dof(e, k)).collect()
    }

    /// Rejects spaces whose lumped masses cannot be divided by.
    pub fn check_lumping(&self) -> Result<()> {
        match self.lumped_masses.iter().position(|c| !(*c > 0.0)) {
            Some(i) => Err(DecError::LumpingInvalid(format!(
                "lumped mass C_{i} = {} is not positive for {}",
                self.lumped_masses[i], self.basis
            ))),
            None => Ok(()),
        }
    }

    /// Consistent mass matrix times `v`.
    pub fn apply_mass(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_count];
        for e in 0..self.n_elements {
            let dofs = self.element_dofs(e);
            for (k, &gk) in dofs.iter().enumerate() {
                out[gk] += dofs
                    .iter()
                    .enumerate()
                    .map(|(l, &gl)| self.element_mass[k][l] * v[gl])
                    .sum::<f64>();
            }
        }
        out
    }

    /// `int u_h`.
    pub fn total_mass(&self, c: &[f64]) -> f64 {
        self.lumped_masses.iter().zip(c).map(|(m, x)| m * x).sum()
    }

    /// Value of `u_h` at `x` in element `e` (reference coordinate `xi`).
    pub fn eval_in_element(&self, c: &[f64], e: usize, xi: f64) -> f64 {
        let phi = self.basis.values(&self.local_nodes, xi);
        phi.iter().enumerate().map(|(k, p)| p * c[self.dof(e, k)]).sum()
    }

    /// Space residual: Galerkin term `int u_h,x phi_i` plus CIP penalty
    /// `delta h^2 [phi_i,x][u_h,x]` at every element interface.
    pub fn space_residual(&self, c: &[f64], delta_cip: f64) -> Vec<f64> {
        let n = self.degree();
        let mut res = vec![0.0; self.dof_count];
        for e in 0..self.n_elements {
            let dofs = self.element_dofs(e);
            for (q, w) in self.quad.weights.iter().enumerate() {
                // h cancels between dx and d/dx
                let ux: f64 = (0..=n).map(|k| self.dphi_q[q][k] * c[dofs[k]]).sum();
                for k in 0..=n {
                    res[dofs[k]] += w * ux * self.phi_q[q][k];
                }
            }
        }
        if delta_cip != 0.0 {
            let alpha = delta_cip * self.h * self.h;
            for e in 0..self.n_elements {
                // interface between element e (left) and e + 1 (right)
                let left = self.element_dofs(e);
                let right = self.element_dofs((e + 1) % self.n_elements);
                let ux_left: f64 = (0..=n).map(|k| self.dphi_right[k] * c[left[k]]).sum::<f64>() / self.h;
                let ux_right: f64 = (0..=n).map(|k| self.dphi_left[k] * c[right[k]]).sum::<f64>() / self.h;
                let jump_u = ux_right - ux_left;
                for k in 0..=n {
                    res[left[k]] -= alpha * jump_u * self.dphi_right[k] / self.h;
                    res[right[k]] += alpha * jump_u * self.dphi_left[k] / self.h;
                }
            }
        }
        res
    }

    /// Coefficients of the element-wise interpolant of `f` at the local
    /// nodes (Bernstein coefficients come from a local solve).
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.degree();
        let mut c = vec![0.0; self.dof_count];
        let nodes: Vec<f64> = match self.basis {
            Basis::Bernstein(_) => (0..=n).map(|k| k as f64 / n as f64).collect(),
            _ => self.local_nodes.clone(),
        };
        let vandermonde = DMatrix::from_fn(n + 1, n + 1, |i, k| match self.basis {
            Basis::Bernstein(_) => bernstein(n, k, nodes[i]),
            _ => (i == k) as u8 as f64,
        });
        let lu = vandermonde.lu();
        for e in 0..self.n_elements {
            let x0 = e as f64 * self.h;
            let values = DVector::from_fn(n + 1, |i, _| f(x0 + nodes[i] * self.h));
            let local = lu.solve(&values).expect("local interpolation matrix is invertible");
            for k in 0..=n {
                c[self.dof(e, k)] = local[k];
            }
        }
        c
    }

    /// L1, L2 and max-norm errors against `exact`, integrated with a
    /// Gauss rule exact to degree `2n + 3` on each element. The max norm is
    /// sampled on the quadrature points and element ends.
    pub fn errors(&self, c: &[f64], exact: impl Fn(f64) -> f64) -> ErrorNorms {
        let n = self.degree();
        let rule = QuadratureRule::gauss_legendre(n + 2).mapped(0.0, 1.0);
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut linf: f64 = 0.0;
        for e in 0..self.n_elements {
            let x0 = e as f64 * self.h;
            let mut sample = |xi: f64, w: f64| {
                let d = (self.eval_in_element(c, e, xi) - exact(x0 + xi * self.h)).abs();
                l1 += w * self.h * d;
                l2 += w * self.h * d * d;
                linf = linf.max(d);
            };
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                sample(*x, *w);
            }
            sample(0.0, 0.0);
            sample(1.0, 0.0);
        }
        ErrorNorms {
            l1,
            l2: l2.sqrt(),
            linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeStepReport {
    pub c_next: Vec<f64>,
    pub residual_evaluations: usize,
}

fn check_state(space: &FemSpace1D, c: &[f64]) -> Result<()> {
    if c.len() != space.dof_count {
        return Err(DecError::InvalidParameters(format!(
            "state has {} entries, space has {} DoFs",
            c.len(),
            space.dof_count
        )));
    }
    Ok(())
}

/// `t_offset` is the time of the failing node measured from the start of the step.
fn residual_checked(space: &FemSpace1D, c: &[f64], delta: f64, t_offset: f64, iteration: usize, node: usize) -> Result<Vec<f64>> {
    let r = space.space_residual(c, delta);
    if r.iter().all(|x| x.is_finite()) {
        Ok(r)
    } else {
        Err(DecError::NumericalFailure {
            t: t_offset,
            iteration,
            node,
        })
    }
}

/// Shared sweep of the mass-matrix-free update. With `interpolate` the
/// states are carried to the next node set before each iteration that
/// grows it.
fn pde_sweep(space: &FemSpace1D, plan: &SchemePlan, c_n: &[f64], dt: f64, delta: f64) -> Result<PdeStepReport> {
    check_state(space, c_n)?;
    space.check_lumping()?;
    if plan.alpha != 0.0 {
        return Err(DecError::InvalidParameters(
            "the mass-matrix-free update is defined for alpha = 0 only".into(),
        ));
    }
    if plan.variant == Variant::AlphaDecDu {
        return Err(DecError::InvalidParameters(
            "the mass-matrix-free update interpolates states, not residuals".into(),
        ));
    }
    let i_count = space.dof_count;
    let r0 = residual_checked(space, c_n, delta, 0.0, 0, 0)?;
    let mut evaluations = 1;
    // previous iteration states on its node set; node 0 is c_n
    let first = plan.coefficients(1);
    let mut states: Vec<Vec<f64>> = vec![c_n.to_vec(); first.nodes().len()];
    let mut residuals: Vec<Option<Vec<f64>>> = vec![None; states.len()];
    residuals[0] = Some(r0.clone());
    let total = plan.total_iterations();
    for (k, it) in plan.iterations.iter().enumerate() {
        let p = k + 1;
        let co: &DecCoefficients = &plan.levels[it.level];
        let n_nodes = co.nodes().len();
        if let Some(h) = &it.interpolation {
            states = (0..n_nodes)
                .map(|i| {
                    let mut v = vec![0.0; i_count];
                    for (j, w) in h.row(i).iter().enumerate() {
                        if *w != 0.0 {
                            for d in 0..i_count {
                                v[d] += w * states[j][d];
                            }
                        }
                    }
                    v
                })
                .collect();
            states[0] = c_n.to_vec();
            residuals = vec![None; n_nodes];
            residuals[0] = Some(r0.clone());
        }
        // residuals of the (possibly interpolated) previous states;
        // in the first iteration every node holds c_n
        for l in 1..n_nodes {
            if residuals[l].is_none() {
                residuals[l] = Some(if p == 1 {
                    r0.clone()
                } else {
                    evaluations += 1;
                    residual_checked(space, &states[l], delta, dt * co.nodes()[l], p - 1, l)?
                });
            }
        }
        let last = p == total;
        let mut next = states.clone();
        for m in 1..n_nodes {
            if last && m != n_nodes - 1 {
                continue;
            }
            let diff: Vec<f64> = states[m].iter().zip(c_n).map(|(a, b)| a - b).collect();
            let mut bracket = space.apply_mass(&diff);
            for (l, r) in residuals.iter().enumerate() {
                let w = dt * co.theta[(m, l)];
                if w != 0.0 {
                    for (b, x) in bracket.iter_mut().zip(r.as_ref().unwrap()) {
                        *b += w * x;
                    }
                }
            }
            for i in 0..i_count {
                next[m][i] = states[m][i] - bracket[i] / space.lumped_masses[i];
            }
        }
        states = next;
        residuals = vec![None; n_nodes];
        residuals[0] = Some(r0.clone());
    }
    Ok(PdeStepReport {
        c_next: states.pop().unwrap(),
        residual_evaluations: evaluations,
    })
}

/// One step of the mass-matrix-free bDeC update on a fixed node set.
pub fn bdec_pde_step(space: &FemSpace1D, plan: &SchemePlan, c_n: &[f64], dt: f64, delta_cip: f64) -> Result<PdeStepReport> {
    if plan.variant != Variant::AlphaDec {
        return Err(DecError::InvalidParameters(format!(
            "expected the fixed-node variant, got {}",
            plan.variant
        )));
    }
    pde_sweep(space, plan, c_n, dt, delta_cip)
}

/// As [`bdec_pde_step`] with the node set grown between iterations by
/// interpolating the states in time, DoF by DoF.
pub fn bdecu_pde_step(space: &FemSpace1D, plan: &SchemePlan, c_n: &[f64], dt: f64, delta_cip: f64) -> Result<PdeStepReport> {
    if plan.variant != Variant::AlphaDecU {
        return Err(DecError::InvalidParameters(format!(
            "expected the state-interpolating variant, got {}",
            plan.variant
        )));
    }
    pde_sweep(space, plan, c_n, dt, delta_cip)
}

/// Semi-discretization `dc/dt = -phi(c) / C_i` of a lumpable space.
pub struct LumpedSystem<'a> {
    pub space: &'a FemSpace1D,
    pub delta_cip: f64,
}

impl OdeSystem for LumpedSystem<'_> {
    fn dimension(&self) -> usize {
        self.space.dof_count
    }
    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let r = self.space.space_residual(u, self.delta_cip);
        for ((d, x), c) in du.iter_mut().zip(r).zip(&self.space.lumped_masses) {
            *d = -x / c;
        }
    }
}

/// One ODE-integrator step of the lumped semi-discretization.
pub fn ode_mode_step(space: &FemSpace1D, plan: &SchemePlan, c_n: &[f64], dt: f64, delta_cip: f64) -> Result<PdeStepReport> {
    if !matches!(space.basis, Basis::LagrangeGL(_)) {
        return Err(DecError::LumpingInvalid(format!(
            "{} has no high-order lumped mass; the ODE path needs Gauss-Lobatto Lagrange elements",
            space.basis
        )));
    }
    check_state(space, c_n)?;
    space.check_lumping()?;
    let sys = LumpedSystem { space, delta_cip };
    let report = dec_ode::step(plan, &sys, 0.0, c_n, dt)?;
    Ok(PdeStepReport {
        c_next: report.u_next,
        residual_evaluations: report.rhs_evaluations,
    })
}

/// How a CG state is advanced in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeMode {
    MassMatrixFree,
    Ode,
}

impl TimeMode {
    /// Gauss-Lobatto Lagrange elements use the ODE path, all others the
    /// mass-matrix-free update.
    pub fn default_for(basis: Basis) -> Self {
        match basis {
            Basis::LagrangeGL(_) => TimeMode::Ode,
            _ => TimeMode::MassMatrixFree,
        }
    }
}

/// Times in numerical-failure errors are offsets from the start of the step.
pub fn pde_step(
    space: &FemSpace1D,
    plan: &SchemePlan,
    mode: TimeMode,
    c_n: &[f64],
    dt: f64,
    delta_cip: f64,
) -> Result<PdeStepReport> {
    match (mode, plan.variant) {
        (TimeMode::Ode, _) => ode_mode_step(space, plan, c_n, dt, delta_cip),
        (TimeMode::MassMatrixFree, Variant::AlphaDecU) => bdecu_pde_step(space, plan, c_n, dt, delta_cip),
        (TimeMode::MassMatrixFree, _) => bdec_pde_step(space, plan, c_n, dt, delta_cip),
    }
}

/// Setup of an advection run of `u0(x) = cos(2 pi x)` to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaeSetup {
    pub basis: Basis,
    pub n_elements: usize,
    pub cfl: f64,
    pub delta_cip: f64,
    pub variant: Variant,
    pub order: usize,
    pub mode: TimeMode,
    pub t_end: f64,
}

impl LaeSetup {
    /// Degree-`n` elements with a DeC of order `n + 1`, CFL 0.1, tuned CIP
    /// coefficient and the basis' default time path.
    pub fn standard(basis: Basis, n_elements: usize, variant: Variant) -> Self {
        LaeSetup {
            basis,
            n_elements,
            cfl: 0.1,
            delta_cip: basis.default_cip().unwrap_or(0.0),
            variant,
            order: basis.degree() + 1,
            mode: TimeMode::default_for(basis),
            t_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaeResult {
    pub n_elements: usize,
    pub h: f64,
    pub errors: ErrorNorms,
    pub residual_evaluations: usize,
    pub steps: usize,
    pub mass_drift: f64,
}

pub fn initial_profile(x: f64) -> f64 {
    (2.0 * PI * x).cos()
}

pub fn run_lae(setup: &LaeSetup) -> Result<LaeResult> {
    let space = FemSpace1D::new(setup.n_elements, setup.basis)?;
    let plan = SchemePlan::new(setup.variant, 0.0, setup.order, crate::coeffs::NodeFamily::Equispaced)?;
    if !(setup.cfl > 0.0) {
        return Err(DecError::InvalidParameters(format!("CFL must be positive, got {}", setup.cfl)));
    }
    let dt = setup.cfl * space.h;
    let mut c = space.interpolate(initial_profile);
    let mut evaluations = 0;
    let mut mass_drift: f64 = 0.0;
    let steps = dec_ode::step_sizes(0.0, setup.t_end, dt)?;
    for (k, &(t_n, h)) in steps.iter().enumerate() {
        let before = space.total_mass(&c);
        let out = pde_step(&space, &plan, setup.mode, &c, h, setup.delta_cip).map_err(|e| {
            let e = match e {
                DecError::NumericalFailure { t: dt_off, iteration, node } => DecError::NumericalFailure {
                    t: t_n + dt_off,
                    iteration,
                    node,
                },
                other => other,
            };
            DecError::StepFailure {
                step: k,
                source: Box::new(e),
            }
        })?;
        c = out.c_next;
        evaluations += out.residual_evaluations;
        mass_drift = mass_drift.max((space.total_mass(&c) - before).abs());
    }
    let t = setup.t_end;
    Ok(LaeResult {
        n_elements: setup.n_elements,
        h: space.h,
        errors: space.errors(&c, |x| initial_profile(x - t)),
        residual_evaluations: evaluations,
        steps: steps.len(),
        mass_drift,
    })
}
