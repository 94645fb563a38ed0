//! Butcher tableaux of DeC schemes.
//!
//! A tableau is obtained by running the sweep engine symbolically: every
//! state is a linear combination `u_n + dt * sum_j a_j k_j` of the stage
//! derivatives evaluated so far, and every right-hand side evaluation opens a
//! new stage. The stage structure is therefore exactly the one of the
//! iterative stepper (stage 0 is `u_n`, then one block per iteration).

use serde::{Deserialize, Serialize};
use std::io;

use crate::coeffs::NodeFamily;
use crate::dec_ode::{parse_variant_name, run_plan, scheme_name, OdeSystem, Probe, SchemePlan, Sweep, Variant};
use crate::error::{DecError, Result};
use crate::matrix::Matrix;

/// Origin of a stage: the iteration whose state was evaluated and the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTag {
    pub iteration: usize,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub order: usize,
    pub variant: Variant,
    pub alpha: f64,
    pub family: NodeFamily,
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// One tag per stage. Empty for tableaux read from files.
    pub blocks: Vec<StageTag>,
}

/// Closed-form number of stages.
///
/// `AlphaDecU` with alpha != 0 has no reduced tableau; the value returned
/// for it is the stage count of its unreduced trace, `M * P`.
pub fn stage_count(variant: Variant, alpha_zero: bool, order: usize, family: NodeFamily) -> usize {
    let p = order;
    let m = family.subintervals_for_order(order);
    let big = m * (p - 1) + 1;
    match (variant, alpha_zero) {
        (Variant::AlphaDec, false) | (Variant::AlphaDecU, false) => m * p,
        (Variant::AlphaDec, true) => big,
        (Variant::AlphaDecU, true) => big - (m - 1) * m.saturating_sub(2) / 2,
        (Variant::AlphaDecDu, false) => m * p - m * (m - 1) / 2,
        (Variant::AlphaDecDu, true) => big - m * (m - 1) / 2,
    }
}

/// Tableau of `plan` with `euler_first_iteration = true`.
///
/// Rejects `AlphaDecU` with alpha != 0: its interpolated states are not
/// reused, so it has no reduced tableau. [`trace_tableau`] still produces
/// the unreduced one.
pub fn build_tableau(plan: &SchemePlan) -> Result<ButcherTableau> {
    if plan.variant == Variant::AlphaDecU && plan.alpha != 0.0 {
        return Err(DecError::UnsupportedExport(format!(
            "{} has no reduced tableau; only alpha = 0 is exportable for the state-interpolating variant",
            scheme_name(plan.variant, plan.alpha)
        )));
    }
    let plan = plan.clone().with_euler_first_iteration(true);
    trace_tableau(&plan)
}

/// Tableau of any plan, honoring its `euler_first_iteration` flag.
pub fn trace_tableau(plan: &SchemePlan) -> Result<ButcherTableau> {
    let capacity = 1 + 2 * plan.node_counts().iter().sum::<usize>();
    let zeros = vec![0.0; capacity];
    let mut stages: Vec<(Probe, Vec<f64>)> = Vec::new();
    let report = {
        let record = |probe: Probe, u: &[f64], du: &mut [f64]| {
            du.fill(0.0);
            du[stages.len()] = 1.0;
            stages.push((probe, u.to_vec()));
        };
        let mut sweep = Sweep::new(record, 0.0, &zeros, 1.0)?;
        run_plan(plan, &mut sweep)?;
        sweep.into_report()
    };
    let s = stages.len();
    let a = Matrix::from_fn(s, s, |i, j| stages[i].1[j]);
    debug_assert!(report.u_next[s..].iter().all(|x| *x == 0.0));
    Ok(ButcherTableau {
        order: plan.order,
        variant: plan.variant,
        alpha: plan.alpha,
        family: plan.family,
        a,
        b: report.u_next[..s].to_vec(),
        c: stages.iter().map(|(p, _)| p.t).collect(),
        blocks: stages
            .iter()
            .map(|(p, _)| StageTag {
                iteration: p.iteration,
                node: p.node,
            })
            .collect(),
    })
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn name(&self) -> String {
        scheme_name(self.variant, self.alpha)
    }

    /// One explicit RK step.
    pub fn step<S: OdeSystem + ?Sized>(&self, sys: &S, t: f64, u: &[f64], dt: f64) -> Vec<f64> {
        let s = self.stages();
        let dim = u.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut stage = vec![0.0; dim];
        for i in 0..s {
            stage.copy_from_slice(u);
            for (j, kj) in k.iter().enumerate() {
                let w = self.a[(i, j)];
                if w != 0.0 {
                    for q in 0..dim {
                        stage[q] += dt * w * kj[q];
                    }
                }
            }
            let mut du = vec![0.0; dim];
            sys.rhs(t + self.c[i] * dt, &stage, &mut du);
            k.push(du);
        }
        let mut out = u.to_vec();
        for (bj, kj) in self.b.iter().zip(&k) {
            for q in 0..dim {
                out[q] += dt * bj * kj[q];
            }
        }
        out
    }

    /// Length of the longest chain of nonzero entries of A, plus one: the
    /// smallest r with A^r = 0, read off the sparsity pattern alone.
    pub fn nilpotency_index(&self) -> usize {
        let s = self.stages();
        let mut depth = vec![0usize; s];
        for i in 0..s {
            depth[i] = (0..i)
                .filter(|&j| self.a[(i, j)] != 0.0)
                .map(|j| depth[j] + 1)
                .max()
                .unwrap_or(0);
        }
        depth.into_iter().max().map_or(0, |d| d + 1)
    }

    /// Largest violation of the consistency conditions: strictly lower A,
    /// row sums equal to c, weights summing to one.
    pub fn consistency_defect(&self) -> f64 {
        let s = self.stages();
        let mut worst: f64 = (self.b.iter().sum::<f64>() - 1.0).abs();
        for i in 0..s {
            for j in i..s {
                worst = worst.max(self.a[(i, j)].abs());
            }
            worst = worst.max((self.a.row(i).iter().sum::<f64>() - self.c[i]).abs());
        }
        worst
    }

    fn to_file(&self) -> TableauFile {
        TableauFile {
            order: self.order,
            variant: self.name(),
            alpha: self.alpha,
            nodes: self.family.short_name().to_string(),
            stages: self.stages(),
            a: self.a.to_rows(),
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }

    pub fn write_json<W: io::Write>(&self, w: W) -> Result<()> {
        let mut ser = serde_json::Serializer::with_formatter(w, ScientificFormatter::default());
        self.to_file()
            .serialize(&mut ser)
            .map_err(|e| DecError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serializer emits UTF-8")
    }

    /// Parses and validates a tableau written by [`ButcherTableau::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableauFile =
            serde_json::from_str(text).map_err(|e| DecError::Parse(e.to_string()))?;
        let (variant, alpha_fixed) = parse_variant_name(&file.variant)?;
        if let Some(a) = alpha_fixed {
            if a != file.alpha {
                return Err(DecError::Parse(format!(
                    "variant {} implies alpha = {a}, file says {}",
                    file.variant, file.alpha
                )));
            }
        }
        let family: NodeFamily = file.nodes.parse()?;
        let s = file.stages;
        if file.b.len() != s || file.c.len() != s || file.a.len() != s {
            return Err(DecError::Parse(format!("inconsistent stage count {s}")));
        }
        if file.a.iter().any(|r| r.len() != s) {
            return Err(DecError::Parse("A is not square".into()));
        }
        let all = file.a.iter().flatten().chain(&file.b).chain(&file.c);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(DecError::Parse("non-finite coefficient".into()));
        }
        for (i, row) in file.a.iter().enumerate() {
            if row[i..].iter().any(|x| *x != 0.0) {
                return Err(DecError::Parse(format!("row {i} of A is not strictly lower")));
            }
        }
        Ok(ButcherTableau {
            order: file.order,
            variant,
            alpha: file.alpha,
            family,
            a: Matrix::from_rows(&file.a),
            b: file.b,
            c: file.c,
            blocks: Vec::new(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableauFile {
    order: usize,
    variant: String,
    alpha: f64,
    nodes: String,
    #[serde(rename = "S")]
    stages: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

/// JSON formatter writing every float with 17 significant digits.
#[derive(Default)]
struct ScientificFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for ScientificFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}
