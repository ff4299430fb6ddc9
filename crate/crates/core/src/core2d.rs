//! Two-dimensional telescoping DGSEM on curvilinear quadrilaterals.
//!
//! The tensor-product scheme applies the 1D line kernels row by row (along
//! `ξ`, metric `Ja¹`) and column by column (along `η`, metric `Ja²`), with
//! metric-averaged two-point fluxes `f^S(u_a, u_b) · ½(Ja_a + Ja_b)`.
//!
//! One right-hand side evaluation is bulk-synchronous:
//!
//! 1. project inner face states of every element (parallel over elements);
//! 2. evaluate one surface flux per face point (parallel over elements,
//!    each owning its right and top faces);
//! 3. run the telescoping recurrences and assemble
//!    `J u_t = (f̄_{i-1,i} - f̄_{i,i+1}) / ω_i + (f̄_{j-1,j} - f̄_{j,j+1}) / ω_j`.

use rayon::prelude::*;

use crate::core1d::{line_chan_residual, line_telescoping, project_line, Formulation, Line, Scheme};
use crate::error::{Error, Result};
use crate::euler::{ConsState, Flux, TwoPointFlux};
use crate::mesh2d::{QuadMesh, BOTTOM, LEFT, RIGHT, TOP};

/// Projected inner face states of one element, `[left, right, bottom,
/// top]`, each ordered along the face.
#[derive(Debug, Clone)]
pub struct FaceStates {
    pub faces: [Vec<ConsState<2>>; 4],
}

/// Subcell fluxes of one element on the complementary grid, laid out as
/// [`crate::mesh2d::SubcellNormals`]: `xi[j (N+2) + i]`, `eta[i (N+2) + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcellFluxes {
    pub xi: Vec<Flux<2>>,
    pub eta: Vec<Flux<2>>,
}

impl SubcellFluxes {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: vec![ConsState::zero(); n * (n + 1)],
            eta: vec![ConsState::zero(); n * (n + 1)],
        }
    }
}

/// Interface fluxes owned by an element: its right and top faces.
#[derive(Debug, Clone)]
pub struct SurfaceFluxes {
    pub right: Vec<Flux<2>>,
    pub top: Vec<Flux<2>>,
}

pub(crate) fn row(u: &[ConsState<2>], n: usize, j: usize) -> Vec<ConsState<2>> {
    u[j * n..(j + 1) * n].to_vec()
}

pub(crate) fn column(u: &[ConsState<2>], n: usize, i: usize) -> Vec<ConsState<2>> {
    (0..n).map(|j| u[i + n * j]).collect()
}

fn check_state(mesh: &QuadMesh, u: &[ConsState<2>]) -> Result<()> {
    if u.len() != mesh.ndofs() {
        return Err(Error::Contract(format!(
            "state has {} entries, mesh expects {}",
            u.len(),
            mesh.ndofs()
        )));
    }
    Ok(())
}

/// Phase 1: entropy-projected (or interpolated) inner face states.
pub fn project_faces(mesh: &QuadMesh, scheme: &Scheme, u: &[ConsState<2>]) -> Result<Vec<FaceStates>> {
    check_state(mesh, u)?;
    let n = mesh.n();
    let gas = &scheme.gas;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let ue = &u[e * n * n..(e + 1) * n * n];
            for s in ue {
                s.check_physical(gas).map_err(|err| err.in_element(e, 0))?;
            }
            let mut faces: [Vec<ConsState<2>>; 4] = Default::default();
            for j in 0..n {
                let [l, r] = project_line(&mesh.ops, &row(ue, n, j), scheme.projection, gas)
                    .map_err(|err| err.in_element(e, j))?;
                faces[LEFT].push(l);
                faces[RIGHT].push(r);
            }
            for i in 0..n {
                let [b, t] = project_line(&mesh.ops, &column(ue, n, i), scheme.projection, gas)
                    .map_err(|err| err.in_element(e, i))?;
                faces[BOTTOM].push(b);
                faces[TOP].push(t);
            }
            Ok(FaceStates { faces })
        })
        .collect()
}

/// Phase 2: one surface flux per face point, oriented along `+ξ` / `+η`.
pub fn surface_fluxes(mesh: &QuadMesh, scheme: &Scheme, faces: &[FaceStates]) -> Result<Vec<SurfaceFluxes>> {
    let n = mesh.n();
    let gas = &scheme.gas;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let nb = mesh.neighbors[e];
            let geo = &mesh.elements[e];
            let mut right = Vec::with_capacity(n);
            let mut top = Vec::with_capacity(n);
            for m in 0..n {
                right.push(
                    scheme
                        .surface
                        .eval(&faces[e].faces[RIGHT][m], &faces[nb[RIGHT]].faces[LEFT][m], &geo.face_metrics[RIGHT][m], gas)
                        .map_err(|err| err.in_element(e, m))?,
                );
                top.push(
                    scheme
                        .surface
                        .eval(&faces[e].faces[TOP][m], &faces[nb[TOP]].faces[BOTTOM][m], &geo.face_metrics[TOP][m], gas)
                        .map_err(|err| err.in_element(e, m))?,
                );
            }
            Ok(SurfaceFluxes { right, top })
        })
        .collect()
}

/// Phase 3 for one element: telescoping subcell fluxes in both directions.
pub fn element_subcell_fluxes(
    mesh: &QuadMesh,
    scheme: &Scheme,
    u: &[ConsState<2>],
    faces: &[FaceStates],
    surface: &[SurfaceFluxes],
    e: usize,
) -> Result<SubcellFluxes> {
    let n = mesh.n();
    let gas = &scheme.gas;
    let ue = &u[e * n * n..(e + 1) * n * n];
    let geo = &mesh.elements[e];
    let nb = mesh.neighbors[e];
    let mut out = SubcellFluxes {
        xi: Vec::with_capacity(n * (n + 1)),
        eta: Vec::with_capacity(n * (n + 1)),
    };
    for j in 0..n {
        let states = row(ue, n, j);
        let metrics: Vec<[f64; 2]> = (0..n).map(|i| geo.ja1[i + n * j]).collect();
        let line = Line {
            ops: &mesh.ops,
            states: &states,
            metrics: &metrics,
            faces: [faces[e].faces[LEFT][j], faces[e].faces[RIGHT][j]],
            face_metrics: [geo.face_metrics[LEFT][j], geo.face_metrics[RIGHT][j]],
        };
        let fstar = [surface[nb[LEFT]].right[j], surface[e].right[j]];
        let t = line_telescoping(&line, fstar, &scheme.volume, gas).map_err(|err| err.in_element(e, j))?;
        out.xi.extend(t.fbar);
    }
    for i in 0..n {
        let states = column(ue, n, i);
        let metrics: Vec<[f64; 2]> = (0..n).map(|j| geo.ja2[i + n * j]).collect();
        let line = Line {
            ops: &mesh.ops,
            states: &states,
            metrics: &metrics,
            faces: [faces[e].faces[BOTTOM][i], faces[e].faces[TOP][i]],
            face_metrics: [geo.face_metrics[BOTTOM][i], geo.face_metrics[TOP][i]],
        };
        let fstar = [surface[nb[BOTTOM]].top[i], surface[e].top[i]];
        let t = line_telescoping(&line, fstar, &scheme.volume, gas).map_err(|err| err.in_element(e, n + i))?;
        out.eta.extend(t.fbar);
    }
    Ok(out)
}

/// High-order subcell fluxes of every element.
pub fn dg_subcell_fluxes(mesh: &QuadMesh, scheme: &Scheme, u: &[ConsState<2>]) -> Result<Vec<SubcellFluxes>> {
    let faces = project_faces(mesh, scheme, u)?;
    let surface = surface_fluxes(mesh, scheme, &faces)?;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| element_subcell_fluxes(mesh, scheme, u, &faces, &surface, e))
        .collect()
}

/// Nodal time derivative of one element from its subcell fluxes.
pub fn subcell_divergence(mesh: &QuadMesh, e: usize, f: &SubcellFluxes) -> Vec<ConsState<2>> {
    let n = mesh.n();
    let w = mesh.ops.weights();
    let geo = &mesh.elements[e];
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let dx = (f.xi[j * (n + 1) + i] - f.xi[j * (n + 1) + i + 1]) * (1.0 / w[i]);
            let dy = (f.eta[i * (n + 1) + j] - f.eta[i * (n + 1) + j + 1]) * (1.0 / w[j]);
            out.push((dx + dy) * (1.0 / geo.jac[i + n * j]));
        }
    }
    out
}

pub fn divergence(mesh: &QuadMesh, fluxes: &[SubcellFluxes]) -> Vec<ConsState<2>> {
    fluxes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(e, f)| subcell_divergence(mesh, e, f))
        .collect()
}

/// Hybridized SBP form applied line by line; used to cross-check the
/// telescoping route.
fn chan_rhs_2d(mesh: &QuadMesh, scheme: &Scheme, u: &[ConsState<2>]) -> Result<Vec<ConsState<2>>> {
    let faces = project_faces(mesh, scheme, u)?;
    let surface = surface_fluxes(mesh, scheme, &faces)?;
    let n = mesh.n();
    let gas = &scheme.gas;
    let w = mesh.ops.weights();
    let per_element = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let ue = &u[e * n * n..(e + 1) * n * n];
            let geo = &mesh.elements[e];
            let nb = mesh.neighbors[e];
            let mut acc = vec![ConsState::zero(); n * n];
            for j in 0..n {
                let states = row(ue, n, j);
                let metrics: Vec<[f64; 2]> = (0..n).map(|i| geo.ja1[i + n * j]).collect();
                let line = Line {
                    ops: &mesh.ops,
                    states: &states,
                    metrics: &metrics,
                    faces: [faces[e].faces[LEFT][j], faces[e].faces[RIGHT][j]],
                    face_metrics: [geo.face_metrics[LEFT][j], geo.face_metrics[RIGHT][j]],
                };
                let fstar = [surface[nb[LEFT]].right[j], surface[e].right[j]];
                let r = line_chan_residual(&line, fstar, &scheme.volume, gas).map_err(|err| err.in_element(e, j))?;
                for i in 0..n {
                    acc[i + n * j] -= r[i] * (1.0 / w[i]);
                }
            }
            for i in 0..n {
                let states = column(ue, n, i);
                let metrics: Vec<[f64; 2]> = (0..n).map(|j| geo.ja2[i + n * j]).collect();
                let line = Line {
                    ops: &mesh.ops,
                    states: &states,
                    metrics: &metrics,
                    faces: [faces[e].faces[BOTTOM][i], faces[e].faces[TOP][i]],
                    face_metrics: [geo.face_metrics[BOTTOM][i], geo.face_metrics[TOP][i]],
                };
                let fstar = [surface[nb[BOTTOM]].top[i], surface[e].top[i]];
                let r = line_chan_residual(&line, fstar, &scheme.volume, gas).map_err(|err| err.in_element(e, n + i))?;
                for j in 0..n {
                    acc[i + n * j] -= r[j] * (1.0 / w[j]);
                }
            }
            for (idx, a) in acc.iter_mut().enumerate() {
                *a = *a * (1.0 / geo.jac[idx]);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_element.into_iter().flatten().collect())
}

/// Global periodic right-hand side.
pub fn rhs_2d(
    mesh: &QuadMesh,
    scheme: &Scheme,
    u: &[ConsState<2>],
    formulation: Formulation,
) -> Result<Vec<ConsState<2>>> {
    match formulation {
        Formulation::Telescoping => Ok(divergence(mesh, &dg_subcell_fluxes(mesh, scheme, u)?)),
        Formulation::Matrix => chan_rhs_2d(mesh, scheme, u),
    }
}
