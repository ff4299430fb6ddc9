//! Hybrid DG / subcell finite-volume limiting.
//!
//! The telescoping fluxes `f̄` of the DG scheme live on the same subcell
//! interfaces as a first-order local Lax-Friedrichs scheme, so the two can
//! be blended interface by interface, `ĥ = α f̄^FV + (1 - α) f̄^DG`, without
//! losing conservation as long as both sides of an interface use the same
//! `α`.
//!
//! The blending coefficients keep the forward-Euler density inside local
//! bounds built from the bar states of the low-order stencil. Each node's
//! provisional `ᾱ` limits the antidiffusive contributions `f̄^DG - f̄^FV` of
//! its interfaces in Zalesak's form; any interface coefficient at least as
//! large as `ᾱ` on every interface of the node then satisfies the bounds,
//! which is what the max rule between neighbours provides.

use rayon::prelude::*;

use crate::core1d::Scheme;
use crate::core2d::{dg_subcell_fluxes, divergence, SubcellFluxes};
use crate::error::{Error, Result};
use crate::euler::{bar_state, max_wavespeed, ConsState, Flux, GasModel, SurfaceFlux, TwoPointFlux, VolumeFlux};
use crate::mesh2d::{QuadMesh, BOTTOM, LEFT, RIGHT, TOP};

/// Absolute slack on the density bounds.
pub const BOUND_TOL: f64 = 1e-10;

/// Relative slack added to the bound margins when solving for `ᾱ`.
const MARGIN_SLACK: f64 = 1e-12;

/// The first-order flux: LLF with an arithmetic-mean central part, whose
/// intermediate states are exactly the bar states.
pub const FV_FLUX: SurfaceFlux = SurfaceFlux::llf(VolumeFlux::Average);

/// Per-element data on subcell interfaces, laid out as
/// [`SubcellFluxes`]: `xi[j (N+2) + k]`, `eta[i (N+2) + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceData<T> {
    pub xi: Vec<T>,
    pub eta: Vec<T>,
}

/// Evaluate `f(u_minus, u_plus, n)` once per subcell interface, the normal
/// pointing from minus to plus. Element faces are owned by the element on
/// their left / bottom and copied to the neighbour, so shared values agree
/// bitwise.
pub fn map_interfaces<T, F>(mesh: &QuadMesh, u: &[ConsState<2>], f: F) -> Result<Vec<InterfaceData<T>>>
where
    T: Clone + Send + Sync,
    F: Fn(&ConsState<2>, &ConsState<2>, &[f64; 2]) -> Result<T> + Sync,
{
    if u.len() != mesh.ndofs() {
        return Err(Error::Contract(format!(
            "state has {} entries, mesh expects {}",
            u.len(),
            mesh.ndofs()
        )));
    }
    let n = mesh.n();
    let at = |e: usize, i: usize, j: usize| &u[e * n * n + i + n * j];
    let mut data = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let nb = mesh.neighbors[e];
            let normals = &mesh.normals[e];
            let mut xi = Vec::with_capacity(n * (n + 1));
            let mut eta = Vec::with_capacity(n * (n + 1));
            for line in 0..n {
                for k in 1..=n {
                    let plus = if k == n { at(nb[RIGHT], 0, line) } else { at(e, k, line) };
                    let v = f(at(e, k - 1, line), plus, &normals.xi[line * (n + 1) + k])
                        .map_err(|err| err.in_element(e, line))?;
                    if k == 1 {
                        xi.push(v.clone());
                    }
                    xi.push(v);
                }
            }
            for line in 0..n {
                for k in 1..=n {
                    let plus = if k == n { at(nb[TOP], line, 0) } else { at(e, line, k) };
                    let v = f(at(e, line, k - 1), plus, &normals.eta[line * (n + 1) + k])
                        .map_err(|err| err.in_element(e, n + line))?;
                    if k == 1 {
                        eta.push(v.clone());
                    }
                    eta.push(v);
                }
            }
            Ok(InterfaceData { xi, eta })
        })
        .collect::<Result<Vec<_>>>()?;
    for e in 0..data.len() {
        let nb = mesh.neighbors[e];
        for line in 0..n {
            data[e].xi[line * (n + 1)] = data[nb[LEFT]].xi[line * (n + 1) + n].clone();
            data[e].eta[line * (n + 1)] = data[nb[BOTTOM]].eta[line * (n + 1) + n].clone();
        }
    }
    Ok(data)
}

/// First-order subcell fluxes between neighbouring nodes, crossing element
/// faces to the neighbour's adjacent node.
pub fn fv_subcell_fluxes(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel) -> Result<Vec<SubcellFluxes>> {
    let data = map_interfaces(mesh, u, |a, b, n| FV_FLUX.eval(a, b, n, gas))?;
    Ok(data
        .into_iter()
        .map(|d| SubcellFluxes { xi: d.xi, eta: d.eta })
        .collect())
}

/// Pure first-order right-hand side.
pub fn fv_rhs_2d(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel) -> Result<Vec<ConsState<2>>> {
    Ok(divergence(mesh, &fv_subcell_fluxes(mesh, u, gas)?))
}

/// Nodal density bounds, element-major like the state.
#[derive(Debug, Clone, PartialEq)]
pub struct IdpBounds {
    pub rho_min: Vec<f64>,
    pub rho_max: Vec<f64>,
}

/// Min / max over the bar-state densities of the four stencil neighbours
/// and the node's own density.
pub fn idp_bounds(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel) -> Result<IdpBounds> {
    for s in u {
        s.check_physical(gas)?;
    }
    let bars = map_interfaces(mesh, u, |a, b, n| Ok(bar_state(a, b, n, gas)?.rho))?;
    let n = mesh.n();
    let mut rho_min = Vec::with_capacity(u.len());
    let mut rho_max = Vec::with_capacity(u.len());
    for (e, b) in bars.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                let own = u[e * n * n + i + n * j].rho;
                let stencil = [
                    own,
                    b.xi[j * (n + 1) + i],
                    b.xi[j * (n + 1) + i + 1],
                    b.eta[i * (n + 1) + j],
                    b.eta[i * (n + 1) + j + 1],
                ];
                rho_min.push(stencil.iter().copied().fold(f64::INFINITY, f64::min));
                rho_max.push(stencil.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }
    Ok(IdpBounds { rho_min, rho_max })
}

/// Provisional nodal coefficients and the number of nodes where even the
/// first-order update leaves the bounds (those are clamped to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ProvisionalAlpha {
    pub alpha: Vec<f64>,
    pub violations: usize,
}

/// Zalesak-type coefficients for the candidate update `u + Δt u_t`.
pub fn provisional_alpha(
    mesh: &QuadMesh,
    u: &[ConsState<2>],
    bounds: &IdpBounds,
    dg: &[SubcellFluxes],
    fv: &[SubcellFluxes],
    dt: f64,
) -> Result<ProvisionalAlpha> {
    if !(dt > 0.0) {
        return Err(Error::DegenerateTimeStep(dt));
    }
    let n = mesh.n();
    let w = mesh.ops.weights();
    let mut alpha = Vec::with_capacity(u.len());
    let mut violations = 0;
    for e in 0..mesh.num_elements() {
        let (d, f) = (&dg[e], &fv[e]);
        for j in 0..n {
            for i in 0..n {
                let idx = i + n * j;
                let g = e * n * n + idx;
                let scale = dt / (mesh.elements[e].jac[idx] * w[i] * w[j]);
                let xl = j * (n + 1) + i;
                let el = i * (n + 1) + j;
                let rho_fv = u[g].rho
                    + scale
                        * (w[j] * (f.xi[xl].rho - f.xi[xl + 1].rho) + w[i] * (f.eta[el].rho - f.eta[el + 1].rho));
                let anti = [
                    scale * w[j] * (d.xi[xl].rho - f.xi[xl].rho),
                    -scale * w[j] * (d.xi[xl + 1].rho - f.xi[xl + 1].rho),
                    scale * w[i] * (d.eta[el].rho - f.eta[el].rho),
                    -scale * w[i] * (d.eta[el + 1].rho - f.eta[el + 1].rho),
                ];
                let p_plus: f64 = anti.iter().filter(|a| **a > 0.0).sum();
                let p_minus: f64 = anti.iter().filter(|a| **a < 0.0).sum();
                if rho_fv > bounds.rho_max[g] + BOUND_TOL || rho_fv < bounds.rho_min[g] - BOUND_TOL {
                    violations += 1;
                    alpha.push(1.0);
                    continue;
                }
                // margins get a rounding-level slack so that an update which
                // only moves by round-off is not limited
                let slack = MARGIN_SLACK * bounds.rho_max[g].abs().max(1.0);
                let q_plus = (bounds.rho_max[g] - rho_fv).max(0.0) + slack;
                let q_minus = (bounds.rho_min[g] - rho_fv).min(0.0) - slack;
                let r_plus = if p_plus > q_plus { q_plus / p_plus } else { 1.0 };
                let r_minus = if p_minus < q_minus { q_minus / p_minus } else { 1.0 };
                alpha.push(1.0 - r_plus.min(r_minus));
            }
        }
    }
    Ok(ProvisionalAlpha { alpha, violations })
}

/// Nodal coefficients and interface coefficients after the max rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendField {
    pub nodal: Vec<f64>,
    pub interfaces: Vec<InterfaceData<f64>>,
}

/// `α = max(ᾱ_minus, ᾱ_plus)` on every subcell interface, including the
/// faces between elements, where the two nodes belong to different
/// elements.
pub fn interface_alpha(mesh: &QuadMesh, nodal: &[f64]) -> Result<BlendField> {
    if nodal.len() != mesh.ndofs() {
        return Err(Error::Contract(format!(
            "{} nodal coefficients for {} nodes",
            nodal.len(),
            mesh.ndofs()
        )));
    }
    // reuse the interface walk with the coefficients packed as densities
    let packed: Vec<ConsState<2>> = nodal.iter().map(|&a| ConsState::new(a, [0.0; 2], 0.0)).collect();
    let interfaces = map_interfaces(mesh, &packed, |a, b, _| Ok(a.rho.max(b.rho)))?;
    Ok(BlendField {
        nodal: nodal.to_vec(),
        interfaces,
    })
}

fn blend(dg: &Flux<2>, fv: &Flux<2>, alpha: f64) -> Flux<2> {
    if alpha == 0.0 {
        *dg
    } else if alpha == 1.0 {
        *fv
    } else {
        *fv * alpha + *dg * (1.0 - alpha)
    }
}

/// `ĥ = α f̄^FV + (1 - α) f̄^DG` interface by interface.
pub fn blend_fluxes(dg: &[SubcellFluxes], fv: &[SubcellFluxes], field: &BlendField) -> Result<Vec<SubcellFluxes>> {
    if dg.len() != fv.len() || dg.len() != field.interfaces.len() {
        return Err(Error::Contract("flux and coefficient shapes differ".into()));
    }
    let all = field.interfaces.iter().flat_map(|d| d.xi.iter().chain(&d.eta));
    for &a in all {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Contract(format!("blending coefficient {a} outside [0, 1]")));
        }
    }
    Ok(dg
        .iter()
        .zip(fv)
        .zip(&field.interfaces)
        .map(|((d, f), a)| SubcellFluxes {
            xi: d.xi.iter().zip(&f.xi).zip(&a.xi).map(|((d, f), a)| blend(d, f, *a)).collect(),
            eta: d.eta.iter().zip(&f.eta).zip(&a.eta).map(|((d, f), a)| blend(d, f, *a)).collect(),
        })
        .collect())
}

/// `(1/V) Σ J ω_i ω_j ᾱ` with `V` the discrete area.
pub fn mean_alpha(mesh: &QuadMesh, nodal: &[f64]) -> f64 {
    let vol = mesh.node_volumes();
    let area: f64 = vol.iter().sum();
    vol.iter().zip(nodal).map(|(v, a)| v * a).sum::<f64>() / area
}

/// `CFL · min J ω_i ω_j / [ω_j (λ_{i-1,i} + λ_{i,i+1}) + ω_i (λ_{j-1,j} + λ_{j,j+1})]`
/// with interface speeds `λ = max(|v·n| + c|n|)` on the subcell normals.
pub fn idp_timestep(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel, cfl: f64) -> Result<f64> {
    let speeds = map_interfaces(mesh, u, |a, b, n| max_wavespeed(a, b, n, gas))?;
    let n = mesh.n();
    let w = mesh.ops.weights();
    let mut dt = f64::INFINITY;
    for (e, s) in speeds.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                let xl = j * (n + 1) + i;
                let el = i * (n + 1) + j;
                let denom = w[j] * (s.xi[xl] + s.xi[xl + 1]) + w[i] * (s.eta[el] + s.eta[el + 1]);
                dt = dt.min(mesh.elements[e].jac[i + n * j] * w[i] * w[j] / denom);
            }
        }
    }
    dt *= cfl;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::DegenerateTimeStep(dt));
    }
    Ok(dt)
}

/// Largest excursion of `ρ + Δt ρ_t` outside the bounds (0 when inside).
pub fn bound_excess(u: &[ConsState<2>], dudt: &[ConsState<2>], dt: f64, bounds: &IdpBounds) -> f64 {
    u.iter()
        .zip(dudt)
        .enumerate()
        .map(|(g, (s, d))| {
            let rho = s.rho + dt * d.rho;
            (bounds.rho_min[g] - rho).max(rho - bounds.rho_max[g]).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Everything one limited right-hand side evaluation produces.
#[derive(Debug, Clone)]
pub struct LimitedRhs {
    pub dudt: Vec<ConsState<2>>,
    pub field: BlendField,
    pub bounds: IdpBounds,
    pub violations: usize,
    pub mean_alpha: f64,
}

/// Blended right-hand side for a stage of size `dt`.
pub fn limited_rhs(mesh: &QuadMesh, scheme: &Scheme, u: &[ConsState<2>], dt: f64) -> Result<LimitedRhs> {
    let gas = &scheme.gas;
    let bounds = idp_bounds(mesh, u, gas)?;
    let dg = dg_subcell_fluxes(mesh, scheme, u)?;
    let fv = fv_subcell_fluxes(mesh, u, gas)?;
    let prov = provisional_alpha(mesh, u, &bounds, &dg, &fv, dt)?;
    let field = interface_alpha(mesh, &prov.alpha)?;
    let blended = blend_fluxes(&dg, &fv, &field)?;
    Ok(LimitedRhs {
        dudt: divergence(mesh, &blended),
        mean_alpha: mean_alpha(mesh, &prov.alpha),
        field,
        bounds,
        violations: prov.violations,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::basis::{NodeKind, Operators1D};
    use crate::euler::{physical_flux, prim_to_cons, PrimState};
    use crate::mesh2d::Rect;

    const GAS: GasModel = GasModel { gamma: 1.4 };

    fn cons(rho: f64, v: [f64; 2], p: f64) -> ConsState<2> {
        prim_to_cons(&PrimState::new(rho, v, p), &GAS).unwrap()
    }

    fn mesh(kind: NodeKind, n: usize, k: usize, warp: f64) -> QuadMesh {
        QuadMesh::warped(k, k, Rect::REFERENCE, Operators1D::new(kind, n).unwrap(), warp).unwrap()
    }

    fn random_field(m: &QuadMesh, seed: u64, amp: f64) -> Vec<ConsState<2>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m.ndofs())
            .map(|_| {
                cons(
                    1.0 + amp * rng.gen::<f64>(),
                    [amp * (rng.gen::<f64>() - 0.5), amp * (rng.gen::<f64>() - 0.5)],
                    1.0 + amp * rng.gen::<f64>(),
                )
            })
            .collect()
    }

    #[test]
    fn constant_field_fv_flux_is_physical() {
        let m = mesh(NodeKind::Gauss, 3, 2, 0.05);
        let c = cons(1.3, [0.2, -0.4], 0.8);
        let u = vec![c; m.ndofs()];
        let fv = fv_subcell_fluxes(&m, &u, &GAS).unwrap();
        for (e, f) in fv.iter().enumerate() {
            for (k, g) in f.xi.iter().enumerate() {
                let want = physical_flux(&c, &m.normals[e].xi[k], &GAS).unwrap();
                assert!((*g - want).max_abs() < 1e-14);
            }
        }
        assert!(fv_rhs_2d(&m, &u, &GAS).unwrap().iter().all(|d| d.max_abs() < 1e-12));
    }

    #[test]
    fn contact_llf_by_hand() {
        // ρ jumps from 1 to 2 at rest with p = 1 on the normal (1, 0):
        // f_L = f_R = (0, 1, 0, 0), λ = max(c_L, c_R) = √1.4
        let ul = cons(1.0, [0.0, 0.0], 1.0);
        let ur = cons(2.0, [0.0, 0.0], 1.0);
        let f = FV_FLUX.eval(&ul, &ur, &[1.0, 0.0], &GAS).unwrap();
        let lam = 1.4f64.sqrt();
        assert_close!(f.rho, -0.5 * lam, 1e-15);
        assert_close!(f.mom[0], 1.0, 1e-15);
        assert_close!(f.mom[1], 0.0, 1e-15);
        assert_close!(f.rho_e, 0.0, 1e-15);
    }

    #[test]
    fn uniform_field_bounds_and_alpha() {
        let m = mesh(NodeKind::Gauss, 3, 3, 0.0);
        let u = vec![cons(0.7, [0.1, 0.3], 1.1); m.ndofs()];
        let b = idp_bounds(&m, &u, &GAS).unwrap();
        assert!(b.rho_min.iter().chain(&b.rho_max).all(|r| (r - 0.7).abs() < 1e-14));
        let scheme = Scheme::entropy_stable(GAS);
        let out = limited_rhs(&m, &scheme, &u, 1e-3).unwrap();
        assert!(out.field.nodal.iter().all(|a| *a == 0.0));
        assert_eq!(out.violations, 0);
    }

    #[test]
    fn spike_bounds_by_enumeration() {
        let m = mesh(NodeKind::GaussLobatto, 2, 3, 0.0);
        let n = m.n();
        let base = cons(1.0, [0.0, 0.0], 1.0);
        let mut u = vec![base; m.ndofs()];
        let spike_e = 4;
        let spike = spike_e * n * n + 1 + n * 1;
        u[spike] = cons(3.0, [0.0, 0.0], 1.0);
        let b = idp_bounds(&m, &u, &GAS).unwrap();
        // brute force: for the four stencil neighbours of the spike
        let h = 2.0 / 3.0;
        let unit = |d: usize| if d == 0 { [h / 2.0, 0.0] } else { [0.0, h / 2.0] };
        let bar_in = bar_state(&base, &u[spike], &unit(0), &GAS).unwrap().rho;
        let bar_out = bar_state(&u[spike], &base, &unit(0), &GAS).unwrap().rho;
        for nbr in [spike - 1, spike + 1, spike - n, spike + n] {
            let mut cands = vec![1.0];
            cands.push(if nbr == spike - 1 || nbr == spike - n { bar_out } else { bar_in });
            let want_max = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let want_min = cands.iter().copied().fold(f64::INFINITY, f64::min);
            assert_close!(b.rho_max[nbr], want_max, 1e-13);
            assert_close!(b.rho_min[nbr], want_min, 1e-13);
        }
        assert!(b.rho_max[spike] == 3.0);
        // far away nodes are untouched
        assert_eq!(b.rho_min[0], 1.0);
        assert_eq!(b.rho_max[0], 1.0);
    }

    #[test]
    fn bounds_do_not_depend_on_stencil_order() {
        let m = mesh(NodeKind::Gauss, 2, 2, 0.0);
        let u = random_field(&m, 1, 0.5);
        let b = idp_bounds(&m, &u, &GAS).unwrap();
        // mirroring the field in x mirrors the bounds
        let n = m.n();
        let k = 2;
        let mirror = |g: usize| {
            let (e, idx) = (g / (n * n), g % (n * n));
            let (ex, ey) = (e % k, e / k);
            let (i, j) = (idx % n, idx / n);
            (k - 1 - ex + k * ey) * n * n + (n - 1 - i) + n * j
        };
        let um: Vec<ConsState<2>> = (0..u.len())
            .map(|g| {
                let s = u[mirror(g)];
                ConsState::new(s.rho, [-s.mom[0], s.mom[1]], s.rho_e)
            })
            .collect();
        let bm = idp_bounds(&m, &um, &GAS).unwrap();
        for g in 0..u.len() {
            assert_close!(bm.rho_min[g], b.rho_min[mirror(g)], 1e-14);
            assert_close!(bm.rho_max[g], b.rho_max[mirror(g)], 1e-14);
        }
    }

    #[test]
    fn max_rule() {
        let m = mesh(NodeKind::Gauss, 2, 2, 0.0);
        let n = m.n();
        let zero = interface_alpha(&m, &vec![0.0; m.ndofs()]).unwrap();
        assert!(zero.interfaces.iter().all(|d| d.xi.iter().chain(&d.eta).all(|a| *a == 0.0)));

        let mut nodal = vec![0.0; m.ndofs()];
        nodal[1 + n] = 1.0; // centre node of element 0
        let f = interface_alpha(&m, &nodal).unwrap();
        let row = n + 1;
        assert_eq!(f.interfaces[0].xi[row + 1], 1.0);
        assert_eq!(f.interfaces[0].xi[row + 2], 1.0);
        assert_eq!(f.interfaces[0].eta[row + 1], 1.0);
        assert_eq!(f.interfaces[0].eta[row + 2], 1.0);
        assert_eq!(f.interfaces[0].xi[row], 0.0);
        assert_eq!(f.interfaces[0].xi[row + 3], 0.0);

        // element face: right column of element 0 against left column of element 1
        let mut nodal = vec![0.0; m.ndofs()];
        nodal[(n - 1) + n] = 0.3;
        nodal[n * n + n] = 0.7;
        let f = interface_alpha(&m, &nodal).unwrap();
        assert_eq!(f.interfaces[0].xi[(n + 1) + n], 0.7);
        assert_eq!(f.interfaces[1].xi[n + 1], 0.7);
    }

    #[test]
    fn blending_endpoints_and_conservation() {
        let m = mesh(NodeKind::Gauss, 3, 3, 0.05);
        let u = random_field(&m, 2, 0.4);
        let scheme = Scheme::entropy_stable(GAS);
        let dg = dg_subcell_fluxes(&m, &scheme, &u).unwrap();
        let fv = fv_subcell_fluxes(&m, &u, &GAS).unwrap();
        let field = |a: f64| interface_alpha(&m, &vec![a; m.ndofs()]).unwrap();
        assert_eq!(blend_fluxes(&dg, &fv, &field(0.0)).unwrap(), dg);
        assert_eq!(blend_fluxes(&dg, &fv, &field(1.0)).unwrap(), fv);
        let half = blend_fluxes(&dg, &fv, &field(0.5)).unwrap();
        assert!((half[0].xi[3] - (dg[0].xi[3] + fv[0].xi[3]) * 0.5).max_abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nodal: Vec<f64> = (0..m.ndofs()).map(|_| rng.gen()).collect();
        let any = blend_fluxes(&dg, &fv, &interface_alpha(&m, &nodal).unwrap()).unwrap();
        let tot = m.totals(&divergence(&m, &any));
        assert!(tot.max_abs() < 1e-13, "{tot:?}");

        let mut bad = field(0.0);
        bad.interfaces[0].xi[0] = 1.5;
        assert!(matches!(blend_fluxes(&dg, &fv, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn mean_alpha_values() {
        let m = mesh(NodeKind::Gauss, 3, 4, 0.0);
        assert_eq!(mean_alpha(&m, &vec![0.0; m.ndofs()]), 0.0);
        assert_close!(mean_alpha(&m, &vec![1.0; m.ndofs()]), 1.0, 1e-14);
        // left half of the elements
        let nodal: Vec<f64> = (0..m.ndofs())
            .map(|g| if (g / m.nodes_per_element()) % 4 < 2 { 1.0 } else { 0.0 })
            .collect();
        assert_close!(mean_alpha(&m, &nodal), 0.5, 1e-12);
    }

    #[test]
    fn idp_timestep_values() {
        let rest = cons(1.0, [0.0, 0.0], 1.0);
        let lam = 1.4f64.sqrt();
        let one = mesh(NodeKind::Gauss, 1, 1, 0.0);
        let dt = idp_timestep(&one, &vec![rest; one.ndofs()], &GAS, 1.0).unwrap();
        assert_close!(dt, 1.0 / (4.0 * lam), 1e-14);

        let g = mesh(NodeKind::Gauss, 3, 4, 0.0);
        let l = mesh(NodeKind::GaussLobatto, 3, 4, 0.0);
        let dg = idp_timestep(&g, &vec![rest; g.ndofs()], &GAS, 1.0).unwrap();
        let dl = idp_timestep(&l, &vec![rest; l.ndofs()], &GAS, 1.0).unwrap();
        assert!(dg > dl, "{dg} {dl}");

        let fine = mesh(NodeKind::Gauss, 3, 8, 0.0);
        let df = idp_timestep(&fine, &vec![rest; fine.ndofs()], &GAS, 1.0).unwrap();
        assert_close!(df, 0.5 * dg, 1e-14);
        assert_close!(idp_timestep(&g, &vec![rest; g.ndofs()], &GAS, 0.5).unwrap(), 0.5 * dg, 1e-15);
    }

    #[test]
    fn forward_euler_respects_bounds() {
        for kind in [NodeKind::Gauss, NodeKind::GaussLobatto] {
            let m = mesh(kind, 3, 4, 0.05);
            let mut u = random_field(&m, 7, 0.3);
            // a strong density jump to activate the limiter
            for (s, x) in u.iter_mut().zip(m.sample(|x| x)) {
                if x[0].hypot(x[1]) < 0.4 {
                    *s = cons(4.0 * s.rho, [0.0, 0.0], 10.0);
                }
            }
            let scheme = Scheme::entropy_stable(GAS);
            let dt = idp_timestep(&m, &u, &GAS, 0.9).unwrap();
            let out = limited_rhs(&m, &scheme, &u, dt).unwrap();
            assert_eq!(out.violations, 0);
            assert!(bound_excess(&u, &out.dudt, dt, &out.bounds) <= BOUND_TOL);
            assert!(out.mean_alpha > 0.0 && out.mean_alpha <= 1.0);
            assert!(m.totals(&out.dudt).max_abs() < 1e-12);
            // the unlimited update does leave the bounds here
            let raw = divergence(&m, &dg_subcell_fluxes(&m, &scheme, &u).unwrap());
            assert!(bound_excess(&u, &raw, dt, &out.bounds) > BOUND_TOL);
        }
    }

    #[test]
    fn larger_overshoot_never_lowers_alpha() {
        // push extra mass into one node through its left interface
        let m = mesh(NodeKind::Gauss, 3, 3, 0.0);
        let n = m.n();
        let scheme = Scheme::entropy_stable(GAS);
        let u = random_field(&m, 8, 0.1);
        let bounds = idp_bounds(&m, &u, &GAS).unwrap();
        let dg = dg_subcell_fluxes(&m, &scheme, &u).unwrap();
        let fv = fv_subcell_fluxes(&m, &u, &GAS).unwrap();
        let dt = idp_timestep(&m, &u, &GAS, 0.9).unwrap();
        let (e, i, j) = (4, 2, 1);
        let target = e * n * n + i + n * j;
        let mut prev = 0.0;
        for delta in [0.0, 0.01, 0.05, 0.1, 0.5, 1.0] {
            let mut d = dg.clone();
            d[e].xi[j * (n + 1) + i].rho += delta;
            let a = provisional_alpha(&m, &u, &bounds, &d, &fv, dt).unwrap().alpha[target];
            assert!(a >= prev, "{delta}: {a} < {prev}");
            prev = a;
        }
        assert!(prev > 0.5);
    }

    #[test]
    fn smooth_field_needs_little_limiting() {
        let m = mesh(NodeKind::Gauss, 3, 16, 0.0);
        let u = m.sample(|x| cons(2.0 + 0.5 * (PI * (x[0] + x[1])).sin(), [1.0, 1.0], 1.0));
        let scheme = Scheme::entropy_stable(GAS);
        let dt = idp_timestep(&m, &u, &GAS, 0.9).unwrap();
        let out = limited_rhs(&m, &scheme, &u, dt).unwrap();
        let worst = out.field.nodal.iter().copied().fold(0.0, f64::max);
        println!("smooth field: mean alpha {:.3e}, max {:.3e}", out.mean_alpha, worst);
        assert!(out.mean_alpha < 1e-2);
    }
}
