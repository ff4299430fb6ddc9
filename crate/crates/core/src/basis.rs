//! Quadrature rules, Lagrange basis, and the one-dimensional SBP operators.
//!
//! Every discretization in this crate consumes an [`Operators1D`]: the
//! diagonal mass (weights), the collocation derivative `D`, the face
//! interpolation `V_f` (rows `l_j(-1)` and `l_j(+1)`), the boundary matrix
//! `B = diag(-1, 1)` and the skew-symmetric `S = 2 M D - V_fᵀ B V_f`.
//! Node families are Legendre-Gauss and Legendre-Gauss-Lobatto.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 15;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const SKEW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Gauss,
    GaussLobatto,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Gauss => write!(f, "gauss"),
            NodeKind::GaussLobatto => write!(f, "gauss_lobatto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: NodeKind,
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `N + 2` staggered points whose spacings are the weights.
    pub complementary: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(kind: NodeKind, degree: usize) -> Result<Self> {
        match kind {
            NodeKind::Gauss => gauss_rule(degree),
            NodeKind::GaussLobatto => lobatto_rule(degree),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial `L_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    match n {
        0 => (1.0, 0.0),
        1 => (x, 1.0),
        _ => {
            let (mut l2, mut l1) = (1.0, x);
            let (mut d2, mut d1) = (0.0, 1.0);
            for k in 2..=n {
                let kf = k as f64;
                let l = ((2.0 * kf - 1.0) * x * l1 - (kf - 1.0) * l2) / kf;
                let d = d2 + (2.0 * kf - 1.0) * l1;
                l2 = l1;
                l1 = l;
                d2 = d1;
                d1 = d;
            }
            (l1, d1)
        }
    }
}

/// `q = L_{n+1} - L_{n-1}`, its derivative, and `L_n`; roots of `q` are the
/// Lobatto nodes of degree `n`.
fn lobatto_q(n: usize, x: f64) -> (f64, f64, f64) {
    let (lp, dp) = legendre(n + 1, x);
    let (lm, dm) = legendre(n - 1, x);
    let (ln, _) = legendre(n, x);
    (lp - lm, dp - dm, ln)
}

fn newton(mut x: f64, f: impl Fn(f64) -> (f64, f64)) -> f64 {
    for _ in 0..NEWTON_MAX_ITER {
        let (val, der) = f(x);
        let delta = val / der;
        x -= delta;
        if delta.abs() <= NEWTON_TOL * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn check_degree(degree: usize) -> Result<()> {
    if (1..=MAX_DEGREE).contains(&degree) {
        Ok(())
    } else {
        Err(Error::InvalidDegree(degree))
    }
}

/// Mirror the lower half onto the upper half so nodes are exactly
/// antisymmetric and weights exactly symmetric.
fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        nodes[n - 1 - i] = -nodes[i];
        weights[n - 1 - i] = weights[i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// Legendre-Gauss rule with `degree + 1` nodes.
pub fn gauss_rule(degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    let n = degree + 1;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let guess = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let x = newton(guess, |x| legendre(n, x));
        let (_, d) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * d * d);
    }
    symmetrize(&mut nodes, &mut weights);
    let complementary = complementary_grid(&weights)?;
    Ok(QuadratureRule {
        kind: NodeKind::Gauss,
        degree,
        nodes,
        weights,
        complementary,
    })
}

/// Legendre-Gauss-Lobatto rule with `degree + 1` nodes including `±1`.
pub fn lobatto_rule(degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    let n = degree;
    let nf = n as f64;
    let mut nodes = vec![0.0; n + 1];
    let mut weights = vec![0.0; n + 1];
    nodes[0] = -1.0;
    weights[0] = 2.0 / (nf * (nf + 1.0));
    for j in 1..(n + 1).div_ceil(2) {
        let jf = j as f64 + 0.25;
        let guess = -(std::f64::consts::PI * jf / nf
            - 3.0 / (8.0 * nf * std::f64::consts::PI * jf))
            .cos();
        let x = newton(guess, |x| {
            let (q, dq, _) = lobatto_q(n, x);
            (q, dq)
        });
        let (_, _, ln) = lobatto_q(n, x);
        nodes[j] = x;
        weights[j] = 2.0 / (nf * (nf + 1.0) * ln * ln);
    }
    symmetrize(&mut nodes, &mut weights);
    if n % 2 == 0 {
        let (ln, _) = legendre(n, 0.0);
        weights[n / 2] = 2.0 / (nf * (nf + 1.0) * ln * ln);
    }
    let complementary = complementary_grid(&weights)?;
    Ok(QuadratureRule {
        kind: NodeKind::GaussLobatto,
        degree,
        nodes,
        weights,
        complementary,
    })
}

/// Staggered grid `ξ̄_0 = -1`, `ξ̄_i = ξ̄_{i-1} + ω_{i-1}`, with the last
/// point snapped to `+1`.
pub fn complementary_grid(weights: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w <= 0.0) || (sum - 2.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InconsistentRule { sum });
    }
    let mut grid = Vec::with_capacity(weights.len() + 1);
    grid.push(-1.0);
    let mut acc = -1.0;
    for &w in weights {
        acc += w;
        grid.push(acc);
    }
    let last = grid.len() - 1;
    if (grid[last] - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InconsistentRule { sum });
    }
    grid[last] = 1.0;
    Ok(grid)
}

fn check_distinct(nodes: &[f64]) -> Result<()> {
    for i in 0..nodes.len() {
        for k in i + 1..nodes.len() {
            if nodes[i] == nodes[k] {
                return Err(Error::DegenerateBasis(i, k));
            }
        }
    }
    Ok(())
}

/// `l_j(x)` for the Lagrange basis through `nodes`.
pub fn lagrange_eval(nodes: &[f64], j: usize, x: f64) -> Result<f64> {
    check_distinct(nodes)?;
    if j >= nodes.len() {
        return Err(Error::Contract(format!(
            "basis index {j} out of range for {} nodes",
            nodes.len()
        )));
    }
    Ok(lagrange_unchecked(nodes, j, x))
}

pub(crate) fn lagrange_unchecked(nodes: &[f64], j: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &xk)| (x - xk) / (nodes[j] - xk))
        .product()
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            1.0 / nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| nodes[j] - xk)
                .product::<f64>()
        })
        .collect()
}

/// Collocation derivative matrix `D_ij = l_j'(ξ_i)` for the basis through
/// `nodes`, using the negative-sum trick on the diagonal.
pub fn derivative_matrix(nodes: &[f64]) -> Result<Array2<f64>> {
    check_distinct(nodes)?;
    let n = nodes.len();
    let w = barycentric_weights(nodes);
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (nodes[i] - nodes[j]);
                d[[i, j]] = v;
                diag -= v;
            }
        }
        d[[i, i]] = diag;
    }
    Ok(d)
}

/// `l_j'(x)` at an arbitrary point, used for interpolating mappings between
/// node sets.
pub(crate) fn lagrange_derivative(nodes: &[f64], j: usize, x: f64) -> f64 {
    let n = nodes.len();
    let mut sum = 0.0;
    for m in 0..n {
        if m == j {
            continue;
        }
        let mut term = 1.0 / (nodes[j] - nodes[m]);
        for k in 0..n {
            if k != j && k != m {
                term *= (x - nodes[k]) / (nodes[j] - nodes[k]);
            }
        }
        sum += term;
    }
    sum
}

/// One-dimensional operator set for a quadrature rule.
#[derive(Debug, Clone)]
pub struct Operators1D {
    pub rule: QuadratureRule,
    /// Diagonal of the reference mass matrix (the weights).
    pub mass: Vec<f64>,
    pub d: Array2<f64>,
    /// `2 × (N+1)`: rows `l_j(-1)` and `l_j(+1)`.
    pub vf: Array2<f64>,
    pub b: [f64; 2],
    pub s: Array2<f64>,
}

impl Operators1D {
    pub fn new(kind: NodeKind, degree: usize) -> Result<Self> {
        build_operators(QuadratureRule::new(kind, degree)?)
    }

    pub fn degree(&self) -> usize {
        self.rule.degree
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.rule.weights
    }

    pub fn kind(&self) -> NodeKind {
        self.rule.kind
    }

    /// `l_j(-1)`.
    #[inline]
    pub fn lagrange_left(&self, j: usize) -> f64 {
        self.vf[[0, j]]
    }

    /// `l_j(+1)`.
    #[inline]
    pub fn lagrange_right(&self, j: usize) -> f64 {
        self.vf[[1, j]]
    }

    /// Largest entry of `|M D + Dᵀ M - V_fᵀ B V_f|`.
    pub fn sbp_residual(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let q = self.mass[i] * self.d[[i, j]] + self.d[[j, i]] * self.mass[j];
                let e = self.b[0] * self.vf[[0, i]] * self.vf[[0, j]]
                    + self.b[1] * self.vf[[1, i]] * self.vf[[1, j]];
                worst = worst.max((q - e).abs());
            }
        }
        worst
    }

    /// Largest `|S_ij + S_ji|`.
    pub fn skew_residual(&self) -> f64 {
        skew_residual(&self.s)
    }

    /// Dump `M`, `D`, `V_f`, `B`, `S` as CSV files (`<prefix>_<name>.csv`).
    pub fn write_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        let n = self.len();
        let mut mass = Array2::zeros((n, n));
        for i in 0..n {
            mass[[i, i]] = self.mass[i];
        }
        let b = Array2::from_shape_vec((2, 2), vec![self.b[0], 0.0, 0.0, self.b[1]])
            .expect("2x2 shape");
        for (name, m) in [
            ("M", &mass),
            ("D", &self.d),
            ("Vf", &self.vf),
            ("B", &b),
            ("S", &self.s),
        ] {
            let path = dir.join(format!("{prefix}_{name}.csv"));
            let mut out = String::new();
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            std::fs::File::create(&path)
                .and_then(|mut f| f.write_all(out.as_bytes()))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn skew_residual(s: &Array2<f64>) -> f64 {
    let n = s.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((s[[i, j]] + s[[j, i]]).abs());
        }
    }
    worst
}

pub fn build_operators(rule: QuadratureRule) -> Result<Operators1D> {
    let n = rule.len();
    let d = derivative_matrix(&rule.nodes)?;
    let mut vf = Array2::zeros((2, n));
    for j in 0..n {
        vf[[0, j]] = lagrange_unchecked(&rule.nodes, j, -1.0);
        vf[[1, j]] = lagrange_unchecked(&rule.nodes, j, 1.0);
    }
    let b = [-1.0, 1.0];
    let mass = rule.weights.clone();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = 2.0 * mass[i] * d[[i, j]]
                - (b[0] * vf[[0, i]] * vf[[0, j]] + b[1] * vf[[1, i]] * vf[[1, j]]);
        }
    }
    let asymmetry = skew_residual(&s);
    if asymmetry >= SKEW_TOL {
        return Err(Error::OperatorConstruction { asymmetry });
    }
    for i in 0..n {
        s[[i, i]] = 0.0;
        for j in i + 1..n {
            let v = 0.5 * (s[[i, j]] - s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = -v;
        }
    }
    Ok(Operators1D {
        rule,
        mass,
        d,
        vf,
        b,
        s,
    })
}
