//! Periodic quadrilateral meshes with curvilinear metrics.
//!
//! Each element is mapped from `[-1, 1]²` by a tensor-product polynomial of
//! degree `N` interpolating a global map at Gauss-Lobatto points, so shared
//! faces are identical curves on both sides and the metric terms evaluated
//! at the solution nodes are exact polynomial derivatives. In that setting
//! `Ja¹ = (y_η, -x_η)`, `Ja² = (-y_ξ, x_ξ)` satisfy the discrete metric
//! identity to rounding.
//!
//! Node `(i, j)` of an element is stored at `i + (N+1) j`, `i` running
//! along `ξ`. Faces are numbered left (`ξ = -1`), right, bottom (`η = -1`),
//! top; face metric vectors point in the `+ξ` / `+η` direction.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::{lagrange_derivative, lagrange_unchecked, lobatto_rule, Operators1D};
use crate::error::{Error, Result};
use crate::euler::{cons_to_entropy, ConsState, GasModel};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const BOTTOM: usize = 2;
pub const TOP: usize = 3;

/// Absolute tolerance on the subcell normal recurrence, relative to the
/// largest metric entry of the element.
pub const NORMAL_CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const REFERENCE: Rect = Rect {
        x0: -1.0,
        x1: 1.0,
        y0: -1.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub x: Vec<[f64; 2]>,
    pub jac: Vec<f64>,
    pub ja1: Vec<[f64; 2]>,
    pub ja2: Vec<[f64; 2]>,
    /// Metric vectors at the face points, indexed by [`LEFT`]..[`TOP`]; each
    /// holds `N + 1` vectors ordered along the face.
    pub face_metrics: [Vec<[f64; 2]>; 4],
}

/// Normals of the subcell interfaces on the complementary grid.
#[derive(Debug, Clone)]
pub struct SubcellNormals {
    /// Row `j`, interface `i ∈ 0..=N+1` at `j (N+2) + i`.
    pub xi: Vec<[f64; 2]>,
    /// Column `i`, interface `j ∈ 0..=N+1` at `i (N+2) + j`.
    pub eta: Vec<[f64; 2]>,
    pub closure_residual: f64,
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub ops: Operators1D,
    pub kx: usize,
    pub ky: usize,
    pub domain: Rect,
    pub warp: f64,
    pub elements: Vec<ElementGeometry>,
    /// Periodic neighbors `[left, right, bottom, top]`.
    pub neighbors: Vec<[usize; 4]>,
    pub normals: Vec<SubcellNormals>,
}

fn check_counts(kx: usize, ky: usize, domain: &Rect) -> Result<()> {
    if kx == 0 || ky == 0 || !(domain.x1 > domain.x0) || !(domain.y1 > domain.y0) {
        return Err(Error::DegenerateMesh(format!(
            "{kx}x{ky} elements on {domain:?}"
        )));
    }
    Ok(())
}

/// Sinusoidal warp vanishing on the domain boundary:
/// `x = X + a (Lx/2) sin(π ξ_g) sin(π η_g)`, likewise for `y`, with
/// `(ξ_g, η_g) ∈ [-1, 1]²` the normalized global coordinates.
fn warp_map(domain: &Rect, amplitude: f64, p: [f64; 2]) -> [f64; 2] {
    if amplitude == 0.0 {
        return p;
    }
    let lx = domain.x1 - domain.x0;
    let ly = domain.y1 - domain.y0;
    let xg = 2.0 * (p[0] - domain.x0) / lx - 1.0;
    let yg = 2.0 * (p[1] - domain.y0) / ly - 1.0;
    let bump = (PI * xg).sin() * (PI * yg).sin();
    [
        p[0] + amplitude * 0.5 * lx * bump,
        p[1] + amplitude * 0.5 * ly * bump,
    ]
}

impl QuadMesh {
    pub fn cartesian(kx: usize, ky: usize, domain: Rect, ops: Operators1D) -> Result<Self> {
        Self::warped(kx, ky, domain, ops, 0.0)
    }

    pub fn warped(kx: usize, ky: usize, domain: Rect, ops: Operators1D, amplitude: f64) -> Result<Self> {
        check_counts(kx, ky, &domain)?;
        let n = ops.len();
        let geo_nodes = lobatto_rule(ops.degree())?.nodes;
        let sol_nodes = &ops.rule.nodes;
        // geometry basis (Lobatto, degree N) evaluated at the solution nodes
        let val: Vec<Vec<f64>> = sol_nodes
            .iter()
            .map(|&x| (0..n).map(|a| lagrange_unchecked(&geo_nodes, a, x)).collect())
            .collect();
        let der: Vec<Vec<f64>> = sol_nodes
            .iter()
            .map(|&x| (0..n).map(|a| lagrange_derivative(&geo_nodes, a, x)).collect())
            .collect();

        let xv: Vec<f64> = (0..=kx)
            .map(|e| domain.x0 + (domain.x1 - domain.x0) * e as f64 / kx as f64)
            .collect();
        let yv: Vec<f64> = (0..=ky)
            .map(|e| domain.y0 + (domain.y1 - domain.y0) * e as f64 / ky as f64)
            .collect();

        let mut elements = Vec::with_capacity(kx * ky);
        let mut neighbors = Vec::with_capacity(kx * ky);
        let mut min_jac = f64::INFINITY;
        for ey in 0..ky {
            for ex in 0..kx {
                let (xa, xb) = (xv[ex], if ex + 1 == kx { domain.x1 } else { xv[ex + 1] });
                let (ya, yb) = (yv[ey], if ey + 1 == ky { domain.y1 } else { yv[ey + 1] });
                // global map sampled at the Lobatto geometry nodes, stored
                // relative to the element centre so that derivatives round
                // relative to the element size
                let centre = [0.5 * (xa + xb), 0.5 * (ya + yb)];
                let mut gx = vec![[0.0; 2]; n * n];
                for b in 0..n {
                    for a in 0..n {
                        let s = geo_nodes[a];
                        let t = geo_nodes[b];
                        let p = [
                            0.5 * (1.0 - s) * xa + 0.5 * (1.0 + s) * xb,
                            0.5 * (1.0 - t) * ya + 0.5 * (1.0 + t) * yb,
                        ];
                        let q = warp_map(&domain, amplitude, p);
                        gx[a + n * b] = [q[0] - centre[0], q[1] - centre[1]];
                    }
                }
                let eval = |vi: &[f64], vj: &[f64]| -> [f64; 2] {
                    let mut out = [0.0; 2];
                    for b in 0..n {
                        for a in 0..n {
                            let w = vi[a] * vj[b];
                            out[0] += w * gx[a + n * b][0];
                            out[1] += w * gx[a + n * b][1];
                        }
                    }
                    out
                };
                let mut x = vec![[0.0; 2]; n * n];
                let mut jac = vec![0.0; n * n];
                let mut ja1 = vec![[0.0; 2]; n * n];
                let mut ja2 = vec![[0.0; 2]; n * n];
                for j in 0..n {
                    for i in 0..n {
                        let idx = i + n * j;
                        let r = eval(&val[i], &val[j]);
                        x[idx] = [r[0] + centre[0], r[1] + centre[1]];
                        let dxi = eval(&der[i], &val[j]);
                        let deta = eval(&val[i], &der[j]);
                        jac[idx] = dxi[0] * deta[1] - deta[0] * dxi[1];
                        ja1[idx] = [deta[1], -deta[0]];
                        ja2[idx] = [-dxi[1], dxi[0]];
                        min_jac = min_jac.min(jac[idx]);
                    }
                }
                // faces: the Lobatto geometry basis is nodal at ±1
                let face_metric = |face: usize, m: usize| -> [f64; 2] {
                    match face {
                        LEFT | RIGHT => {
                            let a = if face == LEFT { 0 } else { n - 1 };
                            let mut d = [0.0; 2];
                            for b in 0..n {
                                d[0] += der[m][b] * gx[a + n * b][0];
                                d[1] += der[m][b] * gx[a + n * b][1];
                            }
                            [d[1], -d[0]]
                        }
                        _ => {
                            let b = if face == BOTTOM { 0 } else { n - 1 };
                            let mut d = [0.0; 2];
                            for a in 0..n {
                                d[0] += der[m][a] * gx[a + n * b][0];
                                d[1] += der[m][a] * gx[a + n * b][1];
                            }
                            [-d[1], d[0]]
                        }
                    }
                };
                let face_metrics = std::array::from_fn(|f| (0..n).map(|m| face_metric(f, m)).collect());
                elements.push(ElementGeometry {
                    x,
                    jac,
                    ja1,
                    ja2,
                    face_metrics,
                });
                let e = |ex: usize, ey: usize| ex + kx * ey;
                neighbors.push([
                    e((ex + kx - 1) % kx, ey),
                    e((ex + 1) % kx, ey),
                    e(ex, (ey + ky - 1) % ky),
                    e(ex, (ey + 1) % ky),
                ]);
            }
        }
        if !(min_jac > 0.0) {
            return Err(Error::InvalidWarp { min_jacobian: min_jac });
        }
        let normals = elements
            .iter()
            .map(|g| subcell_normals(g, &ops))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ops,
            kx,
            ky,
            domain,
            warp: amplitude,
            elements,
            neighbors,
            normals,
        })
    }

    pub fn n(&self) -> usize {
        self.ops.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.n() * self.n()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn ndofs(&self) -> usize {
        self.num_elements() * self.nodes_per_element()
    }

    /// Quadrature weight `J ω_i ω_j` of every node, element-major.
    pub fn node_volumes(&self) -> Vec<f64> {
        let n = self.n();
        let w = self.ops.weights();
        self.elements
            .iter()
            .flat_map(|g| (0..n * n).map(move |idx| g.jac[idx] * w[idx % n] * w[idx / n]))
            .collect()
    }

    pub fn sample<T>(&self, f: impl Fn([f64; 2]) -> T) -> Vec<T> {
        self.elements
            .iter()
            .flat_map(|g| g.x.iter().map(|p| f(*p)))
            .collect()
    }

    pub fn totals(&self, u: &[ConsState<2>]) -> ConsState<2> {
        self.node_volumes()
            .iter()
            .zip(u)
            .fold(ConsState::zero(), |acc, (v, ui)| acc + *ui * *v)
    }

    /// `Σ J ω_i ω_j v(u) · u_t`.
    pub fn entropy_production(&self, u: &[ConsState<2>], dudt: &[ConsState<2>], gas: &GasModel) -> Result<f64> {
        let mut s = 0.0;
        for ((v, ui), di) in self.node_volumes().iter().zip(u).zip(dudt) {
            s += v * cons_to_entropy(ui, gas)?.dot(di);
        }
        Ok(s)
    }

    pub fn l2_difference(&self, a: &[ConsState<2>], b: &[ConsState<2>], components: &[usize]) -> f64 {
        self.node_volumes()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(v, (x, y))| {
                v * components
                    .iter()
                    .map(|&c| (x.component(c) - y.component(c)).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest nodal `|∂_ξ Ja¹ + ∂_η Ja²|` with collocation derivatives.
    pub fn metric_identity_residual(&self) -> f64 {
        let n = self.n();
        let d = &self.ops.d;
        let mut worst: f64 = 0.0;
        for g in &self.elements {
            for j in 0..n {
                for i in 0..n {
                    for c in 0..2 {
                        let mut r = 0.0;
                        for k in 0..n {
                            r += d[[i, k]] * g.ja1[k + n * j][c] + d[[j, k]] * g.ja2[i + n * k][c];
                        }
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest mismatch of face metric vectors across shared faces.
    pub fn watertightness_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (e, g) in self.elements.iter().enumerate() {
            let right = &self.elements[self.neighbors[e][RIGHT]];
            let top = &self.elements[self.neighbors[e][TOP]];
            for (a, b) in g.face_metrics[RIGHT].iter().zip(&right.face_metrics[LEFT]) {
                worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            }
            for (a, b) in g.face_metrics[TOP].iter().zip(&top.face_metrics[BOTTOM]) {
                worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            }
        }
        worst
    }

    /// Largest `|ω_j (n_R - n_L) + ω_i (n_T - n_B)|` over all subcells.
    pub fn subcell_gauss_residual(&self) -> f64 {
        let n = self.n();
        let w = self.ops.weights();
        let mut worst: f64 = 0.0;
        for sn in &self.normals {
            for j in 0..n {
                for i in 0..n {
                    let xl = sn.xi[j * (n + 1) + i];
                    let xr = sn.xi[j * (n + 1) + i + 1];
                    let eb = sn.eta[i * (n + 1) + j];
                    let et = sn.eta[i * (n + 1) + j + 1];
                    for c in 0..2 {
                        let r = w[j] * (xr[c] - xl[c]) + w[i] * (et[c] - eb[c]);
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn min_jacobian(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|g| g.jac.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_normal_closure(&self) -> f64 {
        self.normals.iter().map(|s| s.closure_residual).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mesh: {}x{} elements, {} nodes ({}), N = {}", self.kx, self.ky, self.ndofs(), self.ops.kind(), self.ops.degree());
        let _ = writeln!(s, "domain: [{}, {}] x [{}, {}], warp amplitude {}", self.domain.x0, self.domain.x1, self.domain.y0, self.domain.y1, self.warp);
        let _ = writeln!(s, "min J: {:.6e}", self.min_jacobian());
        let _ = writeln!(s, "metric identity residual: {:.3e}", self.metric_identity_residual());
        let _ = writeln!(s, "watertightness residual: {:.3e}", self.watertightness_residual());
        let _ = writeln!(s, "subcell normal closure: {:.3e}", self.max_normal_closure());
        let _ = writeln!(s, "subcell discrete Gauss residual: {:.3e}", self.subcell_gauss_residual());
        s
    }
}

/// Subcell interface normals of one element from the constant-state
/// telescoping recurrence, in both directions.
pub fn subcell_normals(geom: &ElementGeometry, ops: &Operators1D) -> Result<SubcellNormals> {
    let n = ops.len();
    let scale = geom
        .ja1
        .iter()
        .chain(&geom.ja2)
        .map(|v| v[0].abs().max(v[1].abs()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut worst: f64 = 0.0;
    let mut xi = Vec::with_capacity(n * (n + 2));
    let mut eta = Vec::with_capacity(n * (n + 2));
    for (dir, out) in [(0, &mut xi), (1, &mut eta)] {
        for line in 0..n {
            let (metric, faces): (Vec<[f64; 2]>, [[f64; 2]; 2]) = if dir == 0 {
                (
                    (0..n).map(|i| geom.ja1[i + n * line]).collect(),
                    [geom.face_metrics[LEFT][line], geom.face_metrics[RIGHT][line]],
                )
            } else {
                (
                    (0..n).map(|j| geom.ja2[line + n * j]).collect(),
                    [geom.face_metrics[BOTTOM][line], geom.face_metrics[TOP][line]],
                )
            };
            let (seq, residual) = normal_recurrence(ops, &metric, faces);
            worst = worst.max(residual / scale);
            out.extend(seq);
        }
    }
    if !(worst <= NORMAL_CLOSURE_TOL) {
        return Err(Error::MetricInconsistency { residual: worst });
    }
    Ok(SubcellNormals {
        xi,
        eta,
        closure_residual: worst,
    })
}

fn normal_recurrence(ops: &Operators1D, m: &[[f64; 2]], faces: [[f64; 2]; 2]) -> (Vec<[f64; 2]>, f64) {
    let n = ops.len();
    let mut face_interp = [[0.0; 2]; 2];
    for (f, acc) in face_interp.iter_mut().enumerate() {
        for k in 0..n {
            for c in 0..2 {
                acc[c] += ops.vf[[f, k]] * m[k][c];
            }
        }
    }
    let mut seq = Vec::with_capacity(n + 1);
    seq.push(faces[0]);
    for i in 0..n {
        let mut next = seq[i];
        for c in 0..2 {
            for k in 0..n {
                next[c] += ops.s[[i, k]] * 0.5 * (m[i][c] + m[k][c]);
            }
            next[c] -= ops.lagrange_left(i) * (0.5 * m[i][c] - 0.5 * face_interp[0][c] + faces[0][c]);
            next[c] += ops.lagrange_right(i) * (0.5 * m[i][c] - 0.5 * face_interp[1][c] + faces[1][c]);
        }
        seq.push(next);
    }
    let last = seq.len() - 1;
    let residual = (seq[last][0] - faces[1][0]).abs().max((seq[last][1] - faces[1][1]).abs());
    seq[last] = faces[1];
    (seq, residual)
}
