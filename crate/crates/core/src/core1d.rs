//! One-dimensional DGSEM element kernels.
//!
//! The entropy-projected Gauss DGSEM is implemented twice:
//!
//! - [`line_chan_residual`] assembles the hybridized SBP form, building the
//!   `(N+3) × (N+3)` operator `2Q = [[S, V_fᵀB], [-BV_f, B]]` and contracting
//!   it with the two-point fluxes between all nodal and face states;
//! - [`line_telescoping`] evaluates the equivalent subcell fluxes `f̄_i` on
//!   the complementary grid by forward recurrence from `f̄_0 = f*_L`.
//!
//! The last recurrence value must reproduce `f*_R` for any symmetric volume
//! flux; that residual is what [`verify_closure`] reports.
//!
//! The kernels work on a generic "line" of nodes carrying contravariant
//! metric vectors so the 2D solver can reuse them row by row; in 1D every
//! metric is `[1.0]`.

use serde::{Deserialize, Serialize};

use crate::basis::{NodeKind, Operators1D, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::euler::{
    cons_to_entropy, entropy_to_cons, physical_flux, ConsState, EntropyVars, Flux, GasModel,
    SurfaceFlux, TwoPointFlux, VolumeFlux,
};

/// Relative tolerance on `|f̄_{N+1} - f*_R|` before the recurrence output
/// is replaced by `f*_R`.
pub const CLOSURE_TOL: f64 = 1e-10;

const UNIT_METRICS: [[f64; 1]; MAX_DEGREE + 1] = [[1.0]; MAX_DEGREE + 1];

/// How inner face states are obtained from the nodal solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceProjection {
    /// Interpolate entropy variables and map back: `u(V_f v(u))`.
    Entropy,
    /// Interpolate conservative variables directly (`V_f u`).
    Conservative,
}

/// Inner face states `(ũ_L, ũ_R)` of a line of nodal states.
pub fn project_line<const D: usize>(
    ops: &Operators1D,
    states: &[ConsState<D>],
    projection: FaceProjection,
    gas: &GasModel,
) -> Result<[ConsState<D>; 2]> {
    let n = ops.len();
    debug_assert_eq!(states.len(), n);
    if ops.kind() == NodeKind::GaussLobatto {
        return Ok([states[0], states[n - 1]]);
    }
    match projection {
        FaceProjection::Conservative => {
            let mut faces = [ConsState::zero(); 2];
            for (f, face) in faces.iter_mut().enumerate() {
                for (k, u) in states.iter().enumerate() {
                    *face += *u * ops.vf[[f, k]];
                }
            }
            Ok(faces)
        }
        FaceProjection::Entropy => {
            let mut v = [EntropyVars::zero(); 2];
            for (k, u) in states.iter().enumerate() {
                let vk = cons_to_entropy(u, gas)?;
                v[0].add_scaled(ops.vf[[0, k]], &vk);
                v[1].add_scaled(ops.vf[[1, k]], &vk);
            }
            Ok([entropy_to_cons(&v[0], gas)?, entropy_to_cons(&v[1], gas)?])
        }
    }
}

/// One coordinate line of an element.
#[derive(Debug, Clone, Copy)]
pub struct Line<'a, const D: usize> {
    pub ops: &'a Operators1D,
    pub states: &'a [ConsState<D>],
    /// Contravariant metric vector at each node (`[1.0]` in 1D).
    pub metrics: &'a [[f64; D]],
    /// Projected inner face states `ũ_L`, `ũ_R`.
    pub faces: [ConsState<D>; 2],
    /// Metric vectors at the two faces (`V_f` applied to `metrics`).
    pub face_metrics: [[f64; D]; 2],
}

#[inline]
fn avg<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut m = [0.0; D];
    for d in 0..D {
        m[d] = 0.5 * (a[d] + b[d]);
    }
    m
}

/// Subcell fluxes on the complementary grid of one line.
#[derive(Debug, Clone, PartialEq)]
pub struct TelescopingFluxes<const D: usize> {
    /// `N + 2` fluxes; `fbar[0] = f*_L` and `fbar[N+1] = f*_R`.
    pub fbar: Vec<Flux<D>>,
    /// Relative closure residual of the recurrence before the overwrite.
    pub closure_residual: f64,
}

struct Recurrence<const D: usize> {
    fbar: Vec<Flux<D>>,
    scale: f64,
}

fn recurrence<const D: usize, F: TwoPointFlux<D> + ?Sized>(
    line: &Line<'_, D>,
    fstar: [Flux<D>; 2],
    flux: &F,
    gas: &GasModel,
) -> Result<Recurrence<D>> {
    let ops = line.ops;
    let n = ops.len();
    let u = line.states;
    let m = line.metrics;
    let [ul, ur] = &line.faces;
    let [ml, mr] = &line.face_metrics;
    let mut scale = fstar[0].max_abs().max(fstar[1].max_abs());

    // Σ_k l_k(∓1) f^S(ũ, u_k) is shared by every row
    let mut face_sum = [fstar[0], fstar[1]];
    for (f, (uf, mf)) in [(ul, ml), (ur, mr)].into_iter().enumerate() {
        let mut acc = ConsState::zero();
        for k in 0..n {
            let fs = flux.eval(uf, &u[k], &avg(mf, &m[k]), gas)?;
            scale = scale.max(fs.max_abs());
            acc += fs * ops.vf[[f, k]];
        }
        face_sum[f] = acc;
    }

    let mut fbar = Vec::with_capacity(n + 1);
    fbar.push(fstar[0]);
    for i in 0..n {
        let mut next = fbar[i];
        for k in 0..n {
            let s = ops.s[[i, k]];
            if s != 0.0 {
                let fs = flux.eval(&u[i], &u[k], &avg(&m[i], &m[k]), gas)?;
                scale = scale.max(fs.max_abs());
                next += fs * s;
            }
        }
        let left = flux.eval(&u[i], ul, &avg(&m[i], ml), gas)?;
        let right = flux.eval(&u[i], ur, &avg(&m[i], mr), gas)?;
        scale = scale.max(left.max_abs()).max(right.max_abs());
        next -= (left - face_sum[0] + fstar[0]) * ops.lagrange_left(i);
        next += (right - face_sum[1] + fstar[1]) * ops.lagrange_right(i);
        fbar.push(next);
    }
    Ok(Recurrence {
        fbar,
        scale: scale.max(f64::MIN_POSITIVE),
    })
}

/// Subcell fluxes of a line by forward recurrence; the value at `N + 1` is
/// checked against `fstar[1]` and then replaced by it.
pub fn line_telescoping<const D: usize, F: TwoPointFlux<D> + ?Sized>(
    line: &Line<'_, D>,
    fstar: [Flux<D>; 2],
    flux: &F,
    gas: &GasModel,
) -> Result<TelescopingFluxes<D>> {
    let Recurrence { mut fbar, scale } = recurrence(line, fstar, flux, gas)?;
    let last = fbar.len() - 1;
    let residual = (fbar[last] - fstar[1]).max_abs() / scale;
    if !(residual <= CLOSURE_TOL) {
        return Err(Error::TelescopingClosure { residual });
    }
    fbar[last] = fstar[1];
    Ok(TelescopingFluxes {
        fbar,
        closure_residual: residual,
    })
}

/// Relative mismatch between the recurrence's last subcell flux and the
/// right interface flux, scaled by the largest two-point flux involved.
pub fn line_closure<const D: usize, F: TwoPointFlux<D> + ?Sized>(
    line: &Line<'_, D>,
    fstar: [Flux<D>; 2],
    flux: &F,
    gas: &GasModel,
) -> Result<f64> {
    let r = recurrence(line, fstar, flux, gas)?;
    Ok((r.fbar[r.fbar.len() - 1] - fstar[1]).max_abs() / r.scale)
}

/// Hybridized SBP residual `r` of a line, with `M u_t = -r`:
/// `r = [I  V_fᵀ] (2Q ∘ F^S) 1 + V_fᵀ B (f* - f(ũ))`.
pub fn line_chan_residual<const D: usize, F: TwoPointFlux<D> + ?Sized>(
    line: &Line<'_, D>,
    fstar: [Flux<D>; 2],
    flux: &F,
    gas: &GasModel,
) -> Result<Vec<Flux<D>>> {
    let ops = line.ops;
    let n = ops.len();
    let ext = n + 2;
    let state = |a: usize| -> &ConsState<D> {
        match a {
            a if a < n => &line.states[a],
            a if a == n => &line.faces[0],
            _ => &line.faces[1],
        }
    };
    let metric = |a: usize| -> &[f64; D] {
        match a {
            a if a < n => &line.metrics[a],
            a if a == n => &line.face_metrics[0],
            _ => &line.face_metrics[1],
        }
    };
    let mut q2 = vec![0.0; ext * ext];
    for i in 0..n {
        for k in 0..n {
            q2[i * ext + k] = ops.s[[i, k]];
        }
        for f in 0..2 {
            q2[i * ext + n + f] = ops.vf[[f, i]] * ops.b[f];
            q2[(n + f) * ext + i] = -ops.b[f] * ops.vf[[f, i]];
        }
    }
    q2[n * ext + n] = ops.b[0];
    q2[(n + 1) * ext + n + 1] = ops.b[1];

    let mut rows = vec![ConsState::zero(); ext];
    for (a, row) in rows.iter_mut().enumerate() {
        for b in 0..ext {
            let q = q2[a * ext + b];
            if q != 0.0 {
                let fs = flux.eval(state(a), state(b), &avg(metric(a), metric(b)), gas)?;
                *row += fs * q;
            }
        }
    }
    let face_flux = [
        physical_flux(&line.faces[0], &line.face_metrics[0], gas)?,
        physical_flux(&line.faces[1], &line.face_metrics[1], gas)?,
    ];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rows[i];
        for f in 0..2 {
            r += rows[n + f] * ops.vf[[f, i]];
            r += (fstar[f] - face_flux[f]) * (ops.vf[[f, i]] * ops.b[f]);
        }
        out.push(r);
    }
    Ok(out)
}

/// A 1D element: nodal states, its Jacobian and its projected faces.
#[derive(Debug, Clone)]
pub struct Element1D<'a> {
    pub ops: &'a Operators1D,
    pub jac: f64,
    pub states: &'a [ConsState<1>],
    pub faces: [ConsState<1>; 2],
}

impl<'a> Element1D<'a> {
    pub fn new(
        ops: &'a Operators1D,
        jac: f64,
        states: &'a [ConsState<1>],
        projection: FaceProjection,
        gas: &GasModel,
    ) -> Result<Self> {
        if !(jac > 0.0) {
            return Err(Error::Contract(format!("element Jacobian {jac} must be positive")));
        }
        if states.len() != ops.len() {
            return Err(Error::Contract(format!(
                "element has {} states, expected {}",
                states.len(),
                ops.len()
            )));
        }
        for u in states {
            u.check_physical(gas)?;
        }
        let faces = project_line(ops, states, projection, gas)?;
        Ok(Self {
            ops,
            jac,
            states,
            faces,
        })
    }

    pub fn line(&self) -> Line<'_, 1> {
        Line {
            ops: self.ops,
            states: self.states,
            metrics: &UNIT_METRICS[..self.ops.len()],
            faces: self.faces,
            face_metrics: [[1.0], [1.0]],
        }
    }
}

/// Entropy-projected inner face states `(u(v_L), u(v_R))`.
pub fn entropy_project_faces(
    ops: &Operators1D,
    states: &[ConsState<1>],
    gas: &GasModel,
) -> Result<(ConsState<1>, ConsState<1>)> {
    let [l, r] = project_line(ops, states, FaceProjection::Entropy, gas)?;
    Ok((l, r))
}

/// Time derivative from the hybridized SBP (matrix) form.
pub fn chan_rhs<F: TwoPointFlux<1> + ?Sized>(
    e: &Element1D<'_>,
    fstar_l: Flux<1>,
    fstar_r: Flux<1>,
    volume_flux: &F,
    gas: &GasModel,
) -> Result<Vec<ConsState<1>>> {
    let r = line_chan_residual(&e.line(), [fstar_l, fstar_r], volume_flux, gas)?;
    Ok(r
        .into_iter()
        .zip(e.ops.weights())
        .map(|(r, w)| r * (-1.0 / (e.jac * w)))
        .collect())
}

pub fn telescoping_fluxes<F: TwoPointFlux<1> + ?Sized>(
    e: &Element1D<'_>,
    fstar_l: Flux<1>,
    fstar_r: Flux<1>,
    volume_flux: &F,
    gas: &GasModel,
) -> Result<TelescopingFluxes<1>> {
    line_telescoping(&e.line(), [fstar_l, fstar_r], volume_flux, gas)
}

/// `(u_t)_i = (f̄_i - f̄_{i+1}) / (J ω_i)`.
pub fn fv_rhs(fbar: &TelescopingFluxes<1>, e: &Element1D<'_>) -> Vec<ConsState<1>> {
    fv_update(&fbar.fbar, e.jac, e.ops.weights())
}

pub(crate) fn fv_update<const D: usize>(fbar: &[Flux<D>], jac: f64, weights: &[f64]) -> Vec<ConsState<D>> {
    debug_assert_eq!(fbar.len(), weights.len() + 1);
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| (fbar[i] - fbar[i + 1]) * (1.0 / (jac * w)))
        .collect()
}

pub fn verify_closure<F: TwoPointFlux<1> + ?Sized>(
    e: &Element1D<'_>,
    fstar_l: Flux<1>,
    fstar_r: Flux<1>,
    volume_flux: &F,
    gas: &GasModel,
) -> Result<f64> {
    line_closure(&e.line(), [fstar_l, fstar_r], volume_flux, gas)
}

/// Which algebraic route evaluates the element right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Hybridized SBP matrix form.
    Matrix,
    /// Subcell telescoping fluxes and finite-volume update.
    Telescoping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub volume: VolumeFlux,
    pub surface: SurfaceFlux,
    pub projection: FaceProjection,
    pub gas: GasModel,
}

impl Scheme {
    /// Chandrashekar volume flux, LLF interfaces with a Chandrashekar
    /// central part, entropy-projected faces.
    pub fn entropy_stable(gas: GasModel) -> Self {
        Self {
            volume: VolumeFlux::Chandrashekar,
            surface: SurfaceFlux::llf(VolumeFlux::Chandrashekar),
            projection: FaceProjection::Entropy,
            gas,
        }
    }

    pub fn entropy_conservative(gas: GasModel) -> Self {
        Self {
            surface: SurfaceFlux::conservative(VolumeFlux::Chandrashekar),
            ..Self::entropy_stable(gas)
        }
    }
}

/// Uniform periodic 1D mesh.
#[derive(Debug, Clone)]
pub struct Mesh1D {
    pub ops: Operators1D,
    pub x0: f64,
    pub x1: f64,
    pub elements: usize,
}

impl Mesh1D {
    pub fn uniform(ops: Operators1D, x0: f64, x1: f64, elements: usize) -> Result<Self> {
        if elements == 0 || !(x1 > x0) {
            return Err(Error::DegenerateMesh(format!(
                "{elements} elements on [{x0}, {x1}]"
            )));
        }
        Ok(Self {
            ops,
            x0,
            x1,
            elements,
        })
    }

    pub fn element_width(&self) -> f64 {
        (self.x1 - self.x0) / self.elements as f64
    }

    pub fn jacobian(&self) -> f64 {
        0.5 * self.element_width()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.ops.len()
    }

    pub fn ndofs(&self) -> usize {
        self.elements * self.ops.len()
    }

    pub fn node_x(&self, e: usize, i: usize) -> f64 {
        let a = self.x0 + e as f64 * self.element_width();
        a + (self.ops.rule.nodes[i] + 1.0) * self.jacobian()
    }

    pub fn sample<T>(&self, f: impl Fn(f64) -> T) -> Vec<T> {
        (0..self.elements)
            .flat_map(|e| (0..self.ops.len()).map(move |i| (e, i)))
            .map(|(e, i)| f(self.node_x(e, i)))
            .collect()
    }

    /// `sqrt(Σ J ω_i |a_i - b_i|²)` over the given components.
    pub fn l2_difference(&self, a: &[ConsState<1>], b: &[ConsState<1>], components: &[usize]) -> f64 {
        let n = self.ops.len();
        let jac = self.jacobian();
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(idx, (x, y))| {
                let w = self.ops.weights()[idx % n] * jac;
                components
                    .iter()
                    .map(|&c| (x.component(c) - y.component(c)).powi(2))
                    .sum::<f64>()
                    * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ J ω_i u_i`.
    pub fn totals(&self, u: &[ConsState<1>]) -> ConsState<1> {
        let n = self.ops.len();
        let jac = self.jacobian();
        u.iter()
            .enumerate()
            .fold(ConsState::zero(), |acc, (idx, ui)| acc + *ui * (jac * self.ops.weights()[idx % n]))
    }

    /// `Σ J ω_i v(u_i) · (u_t)_i`.
    pub fn entropy_production(&self, u: &[ConsState<1>], dudt: &[ConsState<1>], gas: &GasModel) -> Result<f64> {
        let n = self.ops.len();
        let jac = self.jacobian();
        let mut s = 0.0;
        for (idx, (ui, dui)) in u.iter().zip(dudt).enumerate() {
            s += jac * self.ops.weights()[idx % n] * cons_to_entropy(ui, gas)?.dot(dui);
        }
        Ok(s)
    }
}

/// Global periodic right-hand side on a 1D mesh.
pub fn rhs_1d(
    mesh: &Mesh1D,
    scheme: &Scheme,
    u: &[ConsState<1>],
    formulation: Formulation,
) -> Result<Vec<ConsState<1>>> {
    let n = mesh.ops.len();
    let k = mesh.elements;
    if u.len() != k * n {
        return Err(Error::Contract(format!(
            "state has {} entries, mesh expects {}",
            u.len(),
            k * n
        )));
    }
    let gas = &scheme.gas;
    let elements = (0..k)
        .map(|e| {
            Element1D::new(&mesh.ops, mesh.jacobian(), &u[e * n..(e + 1) * n], scheme.projection, gas)
                .map_err(|err| err.in_element(e, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    // interface e sits between element e-1 (left) and element e (right)
    let interface = (0..k)
        .map(|e| {
            let left = &elements[(e + k - 1) % k];
            let right = &elements[e];
            scheme
                .surface
                .eval(&left.faces[1], &right.faces[0], &[1.0], gas)
                .map_err(|err| err.in_element(e, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(u.len());
    for (e, el) in elements.iter().enumerate() {
        let fl = interface[e];
        let fr = interface[(e + 1) % k];
        let dudt = match formulation {
            Formulation::Matrix => chan_rhs(el, fl, fr, &scheme.volume, gas),
            Formulation::Telescoping => {
                telescoping_fluxes(el, fl, fr, &scheme.volume, gas).map(|t| fv_rhs(&t, el))
            }
        }
        .map_err(|err| err.in_element(e, 0))?;
        out.extend(dudt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::euler::testing::random_state;
    use crate::euler::{prim_to_cons, PrimState};

    const GAS: GasModel = GasModel { gamma: 1.4 };

    /// Asymmetric "two-point flux" `f(u_L)`; breaks the closure.
    struct LeftFlux;

    impl TwoPointFlux<1> for LeftFlux {
        fn eval(&self, ul: &ConsState<1>, _ur: &ConsState<1>, n: &[f64; 1], gas: &GasModel) -> Result<Flux<1>> {
            physical_flux(ul, n, gas)
        }
    }

    fn smooth_random_element(rng: &mut impl Rng, n: usize) -> Vec<ConsState<1>> {
        let base = random_state::<1>(rng, &GAS);
        let w = crate::euler::cons_to_prim(&base, &GAS).unwrap();
        (0..n)
            .map(|_| {
                let s = 1.0 + rng.gen_range(-0.15..0.15);
                let t = 1.0 + rng.gen_range(-0.15..0.15);
                prim_to_cons(&PrimState::new(w.rho * s, [w.vel[0] + rng.gen_range(-0.15..0.15)], w.p * t), &GAS)
                    .unwrap()
            })
            .collect()
    }

    fn max_rel_diff(a: &[ConsState<1>], b: &[ConsState<1>]) -> f64 {
        let scale = a.iter().map(|x| x.max_abs()).fold(1e-300, f64::max);
        a.iter().zip(b).map(|(x, y)| (*x - *y).max_abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn constant_faces_and_lobatto_selection() {
        let u = prim_to_cons(&PrimState::new(1.2, [0.4], 0.8), &GAS).unwrap();
        for kind in [NodeKind::Gauss, NodeKind::GaussLobatto] {
            let ops = Operators1D::new(kind, 4).unwrap();
            let states = vec![u; ops.len()];
            let (l, r) = entropy_project_faces(&ops, &states, &GAS).unwrap();
            assert!((l - u).max_abs() < 1e-13 && (r - u).max_abs() < 1e-13);
        }
        let ops = Operators1D::new(NodeKind::GaussLobatto, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = smooth_random_element(&mut rng, 4);
        let (l, r) = entropy_project_faces(&ops, &states, &GAS).unwrap();
        assert_eq!(l, states[0]);
        assert_eq!(r, states[3]);
    }

    #[test]
    fn entropy_projection_is_exact_for_linear_entropy_variables() {
        let ops = Operators1D::new(NodeKind::Gauss, 3).unwrap();
        let v_at = |x: f64| EntropyVars {
            scalar: 2.0 + 0.3 * x,
            vel: [0.2 - 0.1 * x],
            last: -1.0 + 0.25 * x,
        };
        let states: Vec<_> = ops
            .rule
            .nodes
            .iter()
            .map(|&x| entropy_to_cons(&v_at(x), &GAS).unwrap())
            .collect();
        let (l, r) = entropy_project_faces(&ops, &states, &GAS).unwrap();
        let el = entropy_to_cons(&v_at(-1.0), &GAS).unwrap();
        let er = entropy_to_cons(&v_at(1.0), &GAS).unwrap();
        assert!((l - el).max_abs() < 1e-12);
        assert!((r - er).max_abs() < 1e-12);
    }

    #[test]
    fn telescoping_matches_chan_form_on_random_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for degree in 1..=5 {
            let ops = Operators1D::new(NodeKind::Gauss, degree).unwrap();
            for _ in 0..100 {
                let states = smooth_random_element(&mut rng, ops.len());
                let e = Element1D::new(&ops, 0.37, &states, FaceProjection::Entropy, &GAS).unwrap();
                let outer_l = smooth_random_element(&mut rng, 1)[0];
                let outer_r = smooth_random_element(&mut rng, 1)[0];
                let surf = SurfaceFlux::llf(VolumeFlux::Chandrashekar);
                let fl = surf.eval(&outer_l, &e.faces[0], &[1.0], &GAS).unwrap();
                let fr = surf.eval(&e.faces[1], &outer_r, &[1.0], &GAS).unwrap();
                let chan = chan_rhs(&e, fl, fr, &VolumeFlux::Chandrashekar, &GAS).unwrap();
                let tele = telescoping_fluxes(&e, fl, fr, &VolumeFlux::Chandrashekar, &GAS).unwrap();
                let fv = fv_rhs(&tele, &e);
                assert!(max_rel_diff(&chan, &fv) < 1e-12, "N={degree}");
                assert!(tele.closure_residual < 1e-12);
                // local conservation
                let total = fv
                    .iter()
                    .zip(ops.weights())
                    .fold(ConsState::zero(), |acc, (u, w)| acc + *u * (e.jac * w));
                let err = (total - (fl - fr)).max_abs();
                assert!(err < 1e-12 * fl.max_abs().max(fr.max_abs()).max(1.0), "{err:e} {fl:?} {fr:?}");
            }
        }
    }

    #[test]
    fn closure_negative_control_and_standard_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ops = Operators1D::new(NodeKind::Gauss, 3).unwrap();
        let states = smooth_random_element(&mut rng, 4);
        let fl = physical_flux(&states[0], &[1.0], &GAS).unwrap();
        let fr = physical_flux(&states[3], &[1.0], &GAS).unwrap();
        let e = Element1D::new(&ops, 1.0, &states, FaceProjection::Entropy, &GAS).unwrap();
        assert!(verify_closure(&e, fl, fr, &VolumeFlux::Chandrashekar, &GAS).unwrap() < 1e-12);
        let bad = verify_closure(&e, fl, fr, &LeftFlux, &GAS).unwrap();
        assert!(bad > 1e-3, "asymmetric residual {bad}");
        assert!(matches!(
            telescoping_fluxes(&e, fl, fr, &LeftFlux, &GAS),
            Err(Error::TelescopingClosure { .. })
        ));
        let std = Element1D::new(&ops, 1.0, &states, FaceProjection::Conservative, &GAS).unwrap();
        assert!(verify_closure(&std, fl, fr, &VolumeFlux::Chandrashekar, &GAS).unwrap() < 1e-12);
    }

    #[test]
    fn constant_state_fluxes_collapse() {
        let u = prim_to_cons(&PrimState::new(1.5, [0.7], 2.0), &GAS).unwrap();
        let f = physical_flux(&u, &[1.0], &GAS).unwrap();
        for kind in [NodeKind::Gauss, NodeKind::GaussLobatto] {
            let ops = Operators1D::new(kind, 4).unwrap();
            let states = vec![u; ops.len()];
            let e = Element1D::new(&ops, 0.5, &states, FaceProjection::Entropy, &GAS).unwrap();
            let t = telescoping_fluxes(&e, f, f, &VolumeFlux::Chandrashekar, &GAS).unwrap();
            for fb in &t.fbar {
                assert!((*fb - f).max_abs() < 1e-13);
            }
            let flat = TelescopingFluxes {
                fbar: vec![f; ops.len() + 1],
                closure_residual: 0.0,
            };
            assert!(fv_rhs(&flat, &e).iter().all(|d| d.max_abs() == 0.0));
        }
    }

    /// Independent Lobatto split-form oracle:
    /// `u_t,i = -[Σ_k 2 D_ik f^S_ik + (δ_iN (f*_R - f_N) - δ_i0 (f*_L - f_0)) / ω_i] / J`.
    fn lobatto_split_form(ops: &Operators1D, jac: f64, u: &[ConsState<1>], fl: Flux<1>, fr: Flux<1>) -> Vec<ConsState<1>> {
        let n = ops.len();
        (0..n)
            .map(|i| {
                let mut acc = ConsState::zero();
                for k in 0..n {
                    acc += VolumeFlux::Chandrashekar.eval(&u[i], &u[k], &[1.0], &GAS).unwrap() * (2.0 * ops.d[[i, k]]);
                }
                if i == n - 1 {
                    acc += (fr - physical_flux(&u[i], &[1.0], &GAS).unwrap()) * (1.0 / ops.mass[i]);
                }
                if i == 0 {
                    acc -= (fl - physical_flux(&u[i], &[1.0], &GAS).unwrap()) * (1.0 / ops.mass[i]);
                }
                acc * (-1.0 / jac)
            })
            .collect()
    }

    #[test]
    fn lobatto_telescoping_matches_split_form_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for degree in 1..=6 {
            let ops = Operators1D::new(NodeKind::GaussLobatto, degree).unwrap();
            for _ in 0..20 {
                let states = smooth_random_element(&mut rng, ops.len());
                let e = Element1D::new(&ops, 0.8, &states, FaceProjection::Entropy, &GAS).unwrap();
                let outer = smooth_random_element(&mut rng, 2);
                let fl = SurfaceFlux::llf(VolumeFlux::Chandrashekar).eval(&outer[0], &states[0], &[1.0], &GAS).unwrap();
                let fr = SurfaceFlux::llf(VolumeFlux::Chandrashekar).eval(&states[degree], &outer[1], &[1.0], &GAS).unwrap();
                let t = telescoping_fluxes(&e, fl, fr, &VolumeFlux::Chandrashekar, &GAS).unwrap();
                let oracle = lobatto_split_form(&ops, 0.8, &states, fl, fr);
                assert!(max_rel_diff(&oracle, &fv_rhs(&t, &e)) < 1e-12, "N={degree}");
            }
        }
    }

    fn manufactured(mesh: &Mesh1D, t: f64) -> Vec<ConsState<1>> {
        mesh.sample(|x| {
            let rho = 2.0 + (std::f64::consts::PI * (x - t)).sin();
            prim_to_cons(&PrimState::new(rho, [1.0], 1.0), &GAS).unwrap()
        })
    }

    #[test]
    fn free_stream_and_entropy_conservation() {
        for kind in [NodeKind::Gauss, NodeKind::GaussLobatto] {
            let ops = Operators1D::new(kind, 3).unwrap();
            let mesh = Mesh1D::uniform(ops, -1.0, 1.0, 8).unwrap();
            let scheme = Scheme::entropy_conservative(GAS);
            let u = vec![prim_to_cons(&PrimState::new(1.3, [0.5], 0.9), &GAS).unwrap(); mesh.ndofs()];
            for form in [Formulation::Matrix, Formulation::Telescoping] {
                let d = rhs_1d(&mesh, &scheme, &u, form).unwrap();
                assert!(d.iter().all(|x| x.max_abs() < 1e-13));
            }
            let u = manufactured(&mesh, 0.0);
            let d = rhs_1d(&mesh, &scheme, &u, Formulation::Telescoping).unwrap();
            let s = mesh.entropy_production(&u, &d, &GAS).unwrap();
            assert!(s.abs() < 1e-12, "{kind}: {s:e}");
            assert!(mesh.totals(&d).max_abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_converges_to_flux_divergence() {
        // exact -∂f/∂x for ρ = 2 + sin πx, u = 1, p = 1; the residual is O(h^N)
        let errors: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&k| {
                let ops = Operators1D::new(NodeKind::Gauss, 3).unwrap();
                let mesh = Mesh1D::uniform(ops, -1.0, 1.0, k).unwrap();
                let u = manufactured(&mesh, 0.0);
                let d = rhs_1d(&mesh, &Scheme::entropy_stable(GAS), &u, Formulation::Matrix).unwrap();
                let exact = mesh.sample(|x| {
                    let c = -std::f64::consts::PI * (std::f64::consts::PI * x).cos();
                    ConsState::new(c, [c], 0.5 * c)
                });
                mesh.l2_difference(&d, &exact, &[0, 1, 2])
            })
            .collect();
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate >= 2.9, "{errors:?}");
        }
    }
}
