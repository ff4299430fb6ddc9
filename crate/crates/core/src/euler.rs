//! Compressible Euler physics in one and two space dimensions.
//!
//! States are generic over the spatial dimension `D` (1 or 2). Flux vectors
//! share the layout of conservative states and are represented by the same
//! type. Normals passed to flux functions may carry a metric scaling; all
//! fluxes are linear in the normal and wave speeds scale with `|n|`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative-gap threshold below which the logarithmic mean uses its series.
const LOG_MEAN_SWITCH: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub gamma: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 1.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::Config(format!("gamma must exceed 1, got {gamma}")))
        }
    }
}

/// Conservative variables `(ρ, ρv, ρE)`; also used for flux vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsState<const D: usize> {
    pub rho: f64,
    #[serde(with = "serde_arrays")]
    pub mom: [f64; D],
    pub rho_e: f64,
}

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[f64; D], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(
        d: De,
    ) -> Result<[f64; D], De::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {D} components")))
    }
}

pub type Flux<const D: usize> = ConsState<D>;

impl<const D: usize> ConsState<D> {
    pub const NVARS: usize = D + 2;

    pub const fn new(rho: f64, mom: [f64; D], rho_e: f64) -> Self {
        Self { rho, mom, rho_e }
    }

    pub const fn zero() -> Self {
        Self {
            rho: 0.0,
            mom: [0.0; D],
            rho_e: 0.0,
        }
    }

    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.rho,
            k if k <= D => self.mom[k - 1],
            _ => self.rho_e,
        }
    }

    pub fn component_mut(&mut self, k: usize) -> &mut f64 {
        match k {
            0 => &mut self.rho,
            k if k <= D => &mut self.mom[k - 1],
            _ => &mut self.rho_e,
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..Self::NVARS)
            .map(|k| self.component(k).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        (0..Self::NVARS).all(|k| self.component(k).is_finite())
    }

    /// `ρE - ½ρ|v|²` scaled by `γ - 1`, without admissibility checks.
    #[inline]
    pub fn pressure(&self, gas: &GasModel) -> f64 {
        let m2: f64 = self.mom.iter().map(|m| m * m).sum();
        (gas.gamma - 1.0) * (self.rho_e - 0.5 * m2 / self.rho)
    }

    pub fn check_physical(&self, gas: &GasModel) -> Result<()> {
        let p = self.pressure(gas);
        if self.rho > 0.0 && p > 0.0 && self.rho.is_finite() && p.is_finite() {
            Ok(())
        } else {
            Err(Error::UnphysicalState { rho: self.rho, p })
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        (0..Self::NVARS)
            .map(|k| self.component(k) * other.component(k))
            .sum()
    }
}

impl<const D: usize> Add for ConsState<D> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const D: usize> AddAssign for ConsState<D> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.rho += rhs.rho;
        for d in 0..D {
            self.mom[d] += rhs.mom[d];
        }
        self.rho_e += rhs.rho_e;
    }
}

impl<const D: usize> Sub for ConsState<D> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const D: usize> SubAssign for ConsState<D> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.rho -= rhs.rho;
        for d in 0..D {
            self.mom[d] -= rhs.mom[d];
        }
        self.rho_e -= rhs.rho_e;
    }
}

impl<const D: usize> Mul<f64> for ConsState<D> {
    type Output = Self;
    #[inline]
    fn mul(mut self, s: f64) -> Self {
        self.rho *= s;
        for m in &mut self.mom {
            *m *= s;
        }
        self.rho_e *= s;
        self
    }
}

impl<const D: usize> Mul<ConsState<D>> for f64 {
    type Output = ConsState<D>;
    #[inline]
    fn mul(self, u: ConsState<D>) -> ConsState<D> {
        u * self
    }
}

impl<const D: usize> Neg for ConsState<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimState<const D: usize> {
    pub rho: f64,
    pub vel: [f64; D],
    pub p: f64,
}

impl<const D: usize> PrimState<D> {
    pub const fn new(rho: f64, vel: [f64; D], p: f64) -> Self {
        Self { rho, vel, p }
    }

    pub fn sound_speed(&self, gas: &GasModel) -> f64 {
        (gas.gamma * self.p / self.rho).sqrt()
    }
}

/// Entropy variables `((γ - s)/(γ - 1) - β|v|², 2βv, -2β)`, `β = ρ/(2p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyVars<const D: usize> {
    pub scalar: f64,
    pub vel: [f64; D],
    pub last: f64,
}

impl<const D: usize> EntropyVars<D> {
    pub const fn zero() -> Self {
        Self {
            scalar: 0.0,
            vel: [0.0; D],
            last: 0.0,
        }
    }

    /// `self += s * other`.
    #[inline]
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        self.scalar += s * other.scalar;
        for d in 0..D {
            self.vel[d] += s * other.vel[d];
        }
        self.last += s * other.last;
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(D + 2);
        v.push(self.scalar);
        v.extend_from_slice(&self.vel);
        v.push(self.last);
        v
    }

    /// Contraction `v · f` with a flux or state vector.
    pub fn dot(&self, f: &ConsState<D>) -> f64 {
        let mut s = self.scalar * f.rho + self.last * f.rho_e;
        for d in 0..D {
            s += self.vel[d] * f.mom[d];
        }
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = *self;
        out.add_scaled(-1.0, other);
        out
    }
}

#[inline]
fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cons_to_prim<const D: usize>(u: &ConsState<D>, gas: &GasModel) -> Result<PrimState<D>> {
    u.check_physical(gas)?;
    let mut vel = [0.0; D];
    for d in 0..D {
        vel[d] = u.mom[d] / u.rho;
    }
    Ok(PrimState {
        rho: u.rho,
        vel,
        p: u.pressure(gas),
    })
}

pub fn prim_to_cons<const D: usize>(w: &PrimState<D>, gas: &GasModel) -> Result<ConsState<D>> {
    if !(w.rho > 0.0 && w.p > 0.0) {
        return Err(Error::UnphysicalState { rho: w.rho, p: w.p });
    }
    let mut mom = [0.0; D];
    for d in 0..D {
        mom[d] = w.rho * w.vel[d];
    }
    let v2 = dot(&w.vel, &w.vel);
    Ok(ConsState {
        rho: w.rho,
        mom,
        rho_e: w.p / (gas.gamma - 1.0) + 0.5 * w.rho * v2,
    })
}

pub fn cons_to_entropy<const D: usize>(u: &ConsState<D>, gas: &GasModel) -> Result<EntropyVars<D>> {
    let w = cons_to_prim(u, gas)?;
    let g = gas.gamma;
    let s = w.p.ln() - g * w.rho.ln();
    let beta = w.rho / (2.0 * w.p);
    let v2 = dot(&w.vel, &w.vel);
    let mut vel = [0.0; D];
    for d in 0..D {
        vel[d] = 2.0 * beta * w.vel[d];
    }
    Ok(EntropyVars {
        scalar: (g - s) / (g - 1.0) - beta * v2,
        vel,
        last: -2.0 * beta,
    })
}

pub fn entropy_to_cons<const D: usize>(v: &EntropyVars<D>, gas: &GasModel) -> Result<ConsState<D>> {
    if !(v.last < 0.0) || !v.last.is_finite() {
        return Err(Error::EntropyInversion { last: v.last });
    }
    let g = gas.gamma;
    let beta = -0.5 * v.last;
    let mut vel = [0.0; D];
    for d in 0..D {
        vel[d] = v.vel[d] / (2.0 * beta);
    }
    let v2 = dot(&vel, &vel);
    let s = g - (g - 1.0) * (v.scalar + beta * v2);
    // p ρ^{-γ} = e^s with p = ρ / (2β)  =>  ρ^{1-γ} = 2β e^s
    let rho = (((2.0 * beta).ln() + s) / (1.0 - g)).exp();
    let p = rho / (2.0 * beta);
    prim_to_cons(&PrimState { rho, vel, p }, gas).map_err(|_| Error::EntropyInversion { last: v.last })
}

/// Mathematical entropy `-ρ s / (γ - 1)`.
pub fn entropy<const D: usize>(u: &ConsState<D>, gas: &GasModel) -> Result<f64> {
    let w = cons_to_prim(u, gas)?;
    let s = w.p.ln() - gas.gamma * w.rho.ln();
    Ok(-w.rho * s / (gas.gamma - 1.0))
}

/// Entropy flux potential `ψ = ρ v·n` of the chosen entropy pair.
pub fn entropy_potential<const D: usize>(u: &ConsState<D>, n: &[f64; D]) -> f64 {
    dot(&u.mom, n)
}

pub fn physical_flux<const D: usize>(
    u: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<Flux<D>> {
    let w = cons_to_prim(u, gas)?;
    let vn = dot(&w.vel, n);
    let mut mom = [0.0; D];
    for d in 0..D {
        mom[d] = u.mom[d] * vn + w.p * n[d];
    }
    Ok(ConsState {
        rho: u.rho * vn,
        mom,
        rho_e: (u.rho_e + w.p) * vn,
    })
}

/// `(b - a) / (ln b - ln a)`, with a series near the diagonal.
pub fn log_mean(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::LogMeanDomain(a, b));
    }
    let zeta = a / b;
    let f = (zeta - 1.0) / (zeta + 1.0);
    let u = f * f;
    if u < LOG_MEAN_SWITCH * LOG_MEAN_SWITCH {
        // ln(ζ) / (2 f) = 1 + u/3 + u²/5 + u³/7
        let series = 1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0;
        Ok((a + b) / (2.0 * series))
    } else {
        Ok((b - a) / (b.ln() - a.ln()))
    }
}

/// Entropy-conservative two-point flux of Chandrashekar: logarithmic means
/// of density and `β = ρ/(2p)`, arithmetic means elsewhere.
pub fn chandrashekar_flux<const D: usize>(
    ul: &ConsState<D>,
    ur: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<Flux<D>> {
    let wl = cons_to_prim(ul, gas)?;
    let wr = cons_to_prim(ur, gas)?;
    let beta_l = 0.5 * wl.rho / wl.p;
    let beta_r = 0.5 * wr.rho / wr.p;
    let rho_ln = log_mean(wl.rho, wr.rho)?;
    let beta_ln = log_mean(beta_l, beta_r)?;
    let rho_avg = 0.5 * (wl.rho + wr.rho);
    let beta_avg = 0.5 * (beta_l + beta_r);
    let p_hat = 0.5 * rho_avg / beta_avg;
    let mut v_avg = [0.0; D];
    for d in 0..D {
        v_avg[d] = 0.5 * (wl.vel[d] + wr.vel[d]);
    }
    let vel_square_avg = 0.5 * (dot(&wl.vel, &wl.vel) + dot(&wr.vel, &wr.vel));
    let vn = dot(&v_avg, n);
    let f_rho = rho_ln * vn;
    let mut mom = [0.0; D];
    for d in 0..D {
        mom[d] = f_rho * v_avg[d] + p_hat * n[d];
    }
    let f_e = f_rho * 0.5 * (1.0 / ((gas.gamma - 1.0) * beta_ln) - vel_square_avg) + dot(&mom, &v_avg);
    Ok(ConsState {
        rho: f_rho,
        mom,
        rho_e: f_e,
    })
}

/// Central flux `½(f(u_L) + f(u_R))·n`.
pub fn average_flux<const D: usize>(
    ul: &ConsState<D>,
    ur: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<Flux<D>> {
    Ok((physical_flux(ul, n, gas)? + physical_flux(ur, n, gas)?) * 0.5)
}

/// `max(|v_L·n| + c_L|n|, |v_R·n| + c_R|n|)`.
pub fn max_wavespeed<const D: usize>(
    ul: &ConsState<D>,
    ur: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<f64> {
    let nn = norm(n);
    let speed = |u: &ConsState<D>| -> Result<f64> {
        let w = cons_to_prim(u, gas)?;
        Ok(dot(&w.vel, n).abs() + w.sound_speed(gas) * nn)
    };
    Ok(speed(ul)?.max(speed(ur)?))
}

/// Local Lax-Friedrichs flux with an arithmetic-mean central part.
pub fn llf_flux<const D: usize>(
    ul: &ConsState<D>,
    ur: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<Flux<D>> {
    SurfaceFlux::llf(VolumeFlux::Average).eval(ul, ur, n, gas)
}

/// First-order intermediate state of the local Lax-Friedrichs Riemann
/// solution between `ui` and `uj`, with `n` pointing from `i` to `j`:
/// `ū = ½(u_i + u_j) - (f_j - f_i)·n̂ / (2 λ)`.
pub fn bar_state<const D: usize>(
    ui: &ConsState<D>,
    uj: &ConsState<D>,
    n: &[f64; D],
    gas: &GasModel,
) -> Result<ConsState<D>> {
    let nn = norm(n);
    if !(nn > 0.0) {
        return Err(Error::Contract("bar state needs a non-zero normal".into()));
    }
    let mut unit = [0.0; D];
    for d in 0..D {
        unit[d] = n[d] / nn;
    }
    let lambda = max_wavespeed(ui, uj, &unit, gas)?;
    bar_state_with_speed(ui, uj, &unit, lambda, gas)
}

/// Bar state for a unit normal and a given wave-speed estimate.
pub fn bar_state_with_speed<const D: usize>(
    ui: &ConsState<D>,
    uj: &ConsState<D>,
    unit: &[f64; D],
    lambda: f64,
    gas: &GasModel,
) -> Result<ConsState<D>> {
    let jump = physical_flux(uj, unit, gas)? - physical_flux(ui, unit, gas)?;
    let mean = (*ui + *uj) * 0.5;
    if lambda > 0.0 {
        Ok(mean - jump * (0.5 / lambda))
    } else if jump.max_abs() == 0.0 {
        Ok(mean)
    } else {
        Err(Error::DegenerateBarState)
    }
}

/// Symmetric two-point volume fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFlux {
    Chandrashekar,
    Average,
}

/// A two-point flux `f(u_L, u_R, n)`; implementors used as volume fluxes
/// must be symmetric in their state arguments for the telescoping form to
/// close.
pub trait TwoPointFlux<const D: usize>: Sync {
    fn eval(
        &self,
        ul: &ConsState<D>,
        ur: &ConsState<D>,
        n: &[f64; D],
        gas: &GasModel,
    ) -> Result<Flux<D>>;
}

impl<const D: usize> TwoPointFlux<D> for VolumeFlux {
    #[inline]
    fn eval(
        &self,
        ul: &ConsState<D>,
        ur: &ConsState<D>,
        n: &[f64; D],
        gas: &GasModel,
    ) -> Result<Flux<D>> {
        match self {
            VolumeFlux::Chandrashekar => chandrashekar_flux(ul, ur, n, gas),
            VolumeFlux::Average => average_flux(ul, ur, n, gas),
        }
    }
}

/// Interface flux: a symmetric central part plus optional local
/// Lax-Friedrichs dissipation `-½ λ (u_R - u_L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceFlux {
    pub central: VolumeFlux,
    pub dissipation: bool,
}

impl SurfaceFlux {
    pub const fn llf(central: VolumeFlux) -> Self {
        Self {
            central,
            dissipation: true,
        }
    }

    pub const fn conservative(central: VolumeFlux) -> Self {
        Self {
            central,
            dissipation: false,
        }
    }
}

impl<const D: usize> TwoPointFlux<D> for SurfaceFlux {
    fn eval(
        &self,
        ul: &ConsState<D>,
        ur: &ConsState<D>,
        n: &[f64; D],
        gas: &GasModel,
    ) -> Result<Flux<D>> {
        let central = self.central.eval(ul, ur, n, gas)?;
        if !self.dissipation {
            return Ok(central);
        }
        let lambda = max_wavespeed(ul, ur, n, gas)?;
        Ok(central - (*ur - *ul) * (0.5 * lambda))
    }
}
