//! Low-storage explicit Runge-Kutta integration.
//!
//! The five-stage fourth-order 2N-storage method of Carpenter and Kennedy
//! keeps two registers, the state `u` and an accumulator `du`:
//!
//! ```text
//! du = A_s du + Δt L(u, t + c_s Δt)
//! u  = u + B_s du
//! ```

use std::ops::{Add, Mul};

use crate::core1d::Mesh1D;
use crate::error::{Error, Result};
use crate::euler::{cons_to_prim, ConsState, GasModel};
use crate::mesh2d::QuadMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowStorageRk {
    pub name: &'static str,
    pub a: [f64; 5],
    pub b: [f64; 5],
    pub c: [f64; 5],
}

pub const CARPENTER_KENNEDY_RK45: LowStorageRk = LowStorageRk {
    name: "carpenter_kennedy_rk45",
    a: [
        0.0,
        -567301805773.0 / 1357537059087.0,
        -2404267990393.0 / 2016746695238.0,
        -3550918686646.0 / 2091501179385.0,
        -1275806237668.0 / 842570457699.0,
    ],
    b: [
        1432997174477.0 / 9575080441755.0,
        5161836677717.0 / 13612068292357.0,
        1720146321549.0 / 2090206949498.0,
        3134564353537.0 / 4481467310338.0,
        2277821191437.0 / 14882151754819.0,
    ],
    c: [
        0.0,
        1432997174477.0 / 9575080441755.0,
        2526269341429.0 / 6820363962896.0,
        2006345519317.0 / 3224310063776.0,
        2802321613138.0 / 2924317926251.0,
    ],
};

/// Nodal values that the stepper can combine linearly.
pub trait Register: Copy + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {}

impl<T: Copy + Add<Output = T> + Mul<f64, Output = T> + Send + Sync> Register for T {}

/// A semi-discrete system `u' = L(u, t)` with its step-size rule.
pub trait OdeSystem {
    type Item: Register;

    /// `L(u, t)`; `dt` is the step size of the stage, `stage` its index.
    fn rhs(&mut self, u: &[Self::Item], t: f64, dt: f64, stage: usize) -> Result<Vec<Self::Item>>;

    /// Admissibility of an intermediate state.
    fn check(&self, _u: &[Self::Item]) -> Result<()> {
        Ok(())
    }

    /// Largest stable step from the current state.
    fn max_dt(&mut self, u: &[Self::Item], t: f64) -> Result<f64>;

    /// Called after every accepted step.
    fn on_step(&mut self, _step: usize, _t: f64, _dt: f64, _u: &[Self::Item]) -> Result<()> {
        Ok(())
    }
}

/// One low-storage step; stage failures come back as
/// [`Error::StepFailure`] and leave `u` untouched.
pub fn rk_step<S: OdeSystem + ?Sized>(
    sys: &mut S,
    u: &[S::Item],
    t: f64,
    dt: f64,
    scheme: &LowStorageRk,
) -> Result<Vec<S::Item>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::DegenerateTimeStep(dt));
    }
    let mut state = u.to_vec();
    let mut du: Vec<S::Item> = Vec::new();
    for s in 0..scheme.a.len() {
        let wrap = |e: Error| Error::StepFailure {
            stage: s,
            source: Box::new(e),
        };
        let l = sys.rhs(&state, t + scheme.c[s] * dt, dt, s).map_err(wrap)?;
        if l.len() != state.len() {
            return Err(Error::Contract(format!(
                "rhs returned {} values for {} unknowns",
                l.len(),
                state.len()
            )));
        }
        if s == 0 {
            du = l.into_iter().map(|x| x * dt).collect();
        } else {
            for (d, x) in du.iter_mut().zip(l) {
                *d = *d * scheme.a[s] + x * dt;
            }
        }
        for (x, d) in state.iter_mut().zip(&du) {
            *x = *x + *d * scheme.b[s];
        }
        sys.check(&state).map_err(wrap)?;
    }
    Ok(state)
}

pub const MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvanceReport {
    pub steps: usize,
    pub t: f64,
    pub retries: usize,
}

/// Integrate from `t0` to `t_end`, clipping the last step onto `t_end`.
/// A numerically failed step is retried with half the step size up to
/// [`MAX_RETRIES`] times; on persistent failure `u` holds the last
/// accepted state.
pub fn advance<S: OdeSystem + ?Sized>(
    sys: &mut S,
    u: &mut Vec<S::Item>,
    t0: f64,
    t_end: f64,
    scheme: &LowStorageRk,
) -> Result<AdvanceReport> {
    if !(t_end >= t0) {
        return Err(Error::Config(format!("t_end {t_end} precedes t0 {t0}")));
    }
    let mut t = t0;
    let mut steps = 0;
    let mut retries = 0;
    while t < t_end {
        let mut dt = sys.max_dt(u, t)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::DegenerateTimeStep(dt));
        }
        let mut last = false;
        if t + dt >= t_end || t_end - (t + dt) < 1e-12 * dt {
            dt = t_end - t;
            last = true;
        }
        let mut attempt = 0;
        let next = loop {
            match rk_step(sys, u, t, dt, scheme) {
                Ok(next) => break next,
                Err(e) if e.is_numerical() && attempt < MAX_RETRIES => {
                    attempt += 1;
                    retries += 1;
                    dt *= 0.5;
                    last = false;
                }
                Err(e) => return Err(e),
            }
        };
        *u = next;
        t = if last { t_end } else { t + dt };
        steps += 1;
        sys.on_step(steps, t, dt, u)?;
    }
    Ok(AdvanceReport { steps, t, retries })
}

/// `CFL · J ω_min / λ_max` on a uniform 1D mesh.
pub fn advective_dt_1d(mesh: &Mesh1D, u: &[ConsState<1>], gas: &GasModel, cfl: f64) -> Result<f64> {
    let mut lambda: f64 = 0.0;
    for s in u {
        let w = cons_to_prim(s, gas)?;
        lambda = lambda.max(w.vel[0].abs() + w.sound_speed(gas));
    }
    let wmin = mesh.ops.weights().iter().copied().fold(f64::INFINITY, f64::min);
    let dt = cfl * mesh.jacobian() * wmin / lambda;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::DegenerateTimeStep(dt));
    }
    Ok(dt)
}

/// `CFL · min_nodes J ω_min / Σ_d (|v · Ja^d| + c |Ja^d|)` on a 2D mesh.
pub fn advective_dt_2d(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel, cfl: f64) -> Result<f64> {
    let n = mesh.n();
    let wmin = mesh.ops.weights().iter().copied().fold(f64::INFINITY, f64::min);
    let mut dt = f64::INFINITY;
    for (e, g) in mesh.elements.iter().enumerate() {
        for idx in 0..n * n {
            let w = cons_to_prim(&u[e * n * n + idx], gas)?;
            let c = w.sound_speed(gas);
            let mut speed = 0.0;
            for ja in [g.ja1[idx], g.ja2[idx]] {
                let norm = ja[0].hypot(ja[1]);
                speed += (w.vel[0] * ja[0] + w.vel[1] * ja[1]).abs() + c * norm;
            }
            dt = dt.min(g.jac[idx] * wmin / speed);
        }
    }
    dt *= cfl;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::DegenerateTimeStep(dt));
    }
    Ok(dt)
}
