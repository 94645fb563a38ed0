//! Subtimenode distributions and deferred-correction coefficient matrices.
//!
//! All quantities are normalized to the unit step: nodes live in [0, 1] and
//! the integration weights do not depend on the step size.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{DecError, Result};
use crate::matrix::Matrix;
use crate::quadrature::{gauss_lobatto_points, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeFamily {
    Equispaced,
    GaussLobatto,
}

impl NodeFamily {
    pub fn short_name(self) -> &'static str {
        match self {
            NodeFamily::Equispaced => "eq",
            NodeFamily::GaussLobatto => "gl",
        }
    }

    /// Number of subintervals `M` needed for order `p` with `p` iterations.
    pub fn subintervals_for_order(self, order: usize) -> usize {
        match self {
            NodeFamily::Equispaced => order - 1,
            NodeFamily::GaussLobatto => order.div_ceil(2),
        }
    }
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for NodeFamily {
    type Err = DecError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eq" | "equispaced" => Ok(NodeFamily::Equispaced),
            "gl" | "gausslobatto" | "gauss-lobatto" | "lobatto" => Ok(NodeFamily::GaussLobatto),
            other => Err(DecError::Parse(format!("unknown node family `{other}`"))),
        }
    }
}

/// Ordered subtimenodes on [0, 1], first node 0 and last node 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    family: NodeFamily,
    nodes: Vec<f64>,
}

impl NodeSet {
    /// Builds `m + 1` nodes of the given family.
    pub fn new(family: NodeFamily, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(DecError::InvalidOrder(
                "a node set needs at least one subinterval".into(),
            ));
        }
        let nodes = match family {
            NodeFamily::Equispaced => (0..=m).map(|i| i as f64 / m as f64).collect(),
            NodeFamily::GaussLobatto => {
                let mut v: Vec<f64> = gauss_lobatto_points(m)
                    .into_iter()
                    .map(|x| 0.5 * (1.0 + x))
                    .collect();
                v[0] = 0.0;
                v[m] = 1.0;
                v
            }
        };
        Ok(NodeSet { family, nodes })
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of subintervals `M` (one less than the node count).
    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Values of all Lagrange basis polynomials on `nodes` at `x`.
///
/// When `x` coincides with a node the result is an exact unit vector.
pub fn lagrange_basis(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut v = 1.0;
            for k in 0..n {
                if k != j {
                    v *= (x - nodes[k]) / (nodes[j] - nodes[k]);
                }
            }
            v
        })
        .collect()
}

/// Derivatives of all Lagrange basis polynomials on `nodes` at `x`.
pub fn lagrange_basis_derivative(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut sum = 0.0;
            for i in 0..n {
                if i == j {
                    continue;
                }
                let mut prod = 1.0 / (nodes[j] - nodes[i]);
                for k in 0..n {
                    if k != j && k != i {
                        prod *= (x - nodes[k]) / (nodes[j] - nodes[k]);
                    }
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

fn check_distinct(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 {
        return Err(DecError::SingularBasis(
            "interpolation needs at least two source nodes".into(),
        ));
    }
    for i in 0..nodes.len() {
        if !nodes[i].is_finite() {
            return Err(DecError::SingularBasis(format!("node {i} is not finite")));
        }
        for j in 0..i {
            if nodes[i] == nodes[j] {
                return Err(DecError::SingularBasis(format!(
                    "duplicate node {} at positions {j} and {i}",
                    nodes[i]
                )));
            }
        }
    }
    Ok(())
}

/// Coefficients of one deferred-correction sweep on a fixed node set.
///
/// `theta[m][l]` integrates the l-th Lagrange basis over `[0, t^m]`,
/// `delta[m][l]` over `[t^{m-1}, t^m]`; row 0 of both is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DecCoefficients {
    pub node_set: NodeSet,
    pub theta: Matrix,
    pub delta: Matrix,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Strictly lower-triangular matrix with `gamma_matrix[m][l] = gamma[l + 1]` for `l < m`.
    pub gamma_matrix: Matrix,
}

impl DecCoefficients {
    pub fn new(node_set: NodeSet) -> Self {
        let nodes = node_set.nodes().to_vec();
        let n = nodes.len();
        let m = n - 1;
        // integrand degree is m; ceil((m+2)/2) points are exact for degree m+1
        let rule = QuadratureRule::gauss_legendre(m / 2 + 1);

        let mut delta = Matrix::zeros(n, n);
        for r in 1..n {
            let sub = rule.mapped(nodes[r - 1], nodes[r]);
            for (&x, &w) in sub.points.iter().zip(&sub.weights) {
                for (l, psi) in lagrange_basis(&nodes, x).into_iter().enumerate() {
                    delta[(r, l)] += w * psi;
                }
            }
        }
        let mut theta = Matrix::zeros(n, n);
        for r in 1..n {
            for l in 0..n {
                theta[(r, l)] = theta[(r - 1, l)] + delta[(r, l)];
            }
        }
        let beta = nodes.clone();
        let mut gamma = vec![0.0; n];
        for r in 1..n {
            gamma[r] = nodes[r] - nodes[r - 1];
        }
        let gamma_matrix = Matrix::from_fn(n, n, |i, j| if j < i { gamma[j + 1] } else { 0.0 });
        DecCoefficients {
            node_set,
            theta,
            delta,
            beta,
            gamma,
            gamma_matrix,
        }
    }

    pub fn for_family(family: NodeFamily, m: usize) -> Result<Self> {
        Ok(Self::new(NodeSet::new(family, m)?))
    }

    pub fn nodes(&self) -> &[f64] {
        self.node_set.nodes()
    }

    pub fn m(&self) -> usize {
        self.node_set.m()
    }

    /// `theta - alpha * gamma_matrix`.
    pub fn explicit_part(&self, alpha: f64) -> Matrix {
        self.theta.sub(&self.gamma_matrix.scaled(alpha))
    }
}

/// Interpolation matrix from one node set to another:
/// `H[i][j] = psi_j(to[i])` with `psi_j` the Lagrange basis on `from`.
pub fn interp_matrix(from: &[f64], to: &[f64]) -> Result<Matrix> {
    check_distinct(from)?;
    let rows: Vec<Vec<f64>> = to.iter().map(|&x| lagrange_basis(from, x)).collect();
    Ok(Matrix::from_rows(&rows))
}
