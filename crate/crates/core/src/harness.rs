//! Experiment drivers, run configuration and file output.
//!
//! Every experiment is described by a [`RunConfig`]. Configurations are
//! JSON objects; keys that are left out take the experiment's preset
//! values, and the fully resolved configuration is echoed next to the
//! outputs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{NodeKind, Operators1D};
use crate::core1d::{rhs_1d, FaceProjection, Formulation, Mesh1D, Scheme};
use crate::core2d::rhs_2d;
use crate::error::{Error, Result};
use crate::euler::{cons_to_prim, entropy, prim_to_cons, ConsState, GasModel, PrimState, SurfaceFlux, VolumeFlux};
use crate::limiter::{bound_excess, fv_rhs_2d, idp_timestep, limited_rhs};
use crate::mesh2d::{QuadMesh, Rect};
use crate::tint::{advance, advective_dt_1d, advective_dt_2d, OdeSystem, CARPENTER_KENNEDY_RK45};

pub const FIELD_HEADER: &str = "x,y,rho,vx,vy,p,alpha";
pub const TABLE_HEADER: &str = "N,h,K,l2_rho,l2_momentum,l2_energy";
pub const SLOPES_HEADER: &str = "N,slope_rho,slope_momentum,slope_energy";
pub const HISTORY_HEADER: &str = "t,mean_alpha,dt,step";
pub const STEPS_HEADER: &str = "step,t,dt,mean_alpha,entropy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Equivalence,
    Convergence1d,
    Convergence2d,
    Sedov,
    Freestream,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Equivalence,
        Experiment::Convergence1d,
        Experiment::Convergence2d,
        Experiment::Sedov,
        Experiment::Freestream,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Equivalence => "equivalence",
            Experiment::Convergence1d => "convergence1d",
            Experiment::Convergence2d => "convergence2d",
            Experiment::Sedov => "sedov",
            Experiment::Freestream => "freestream",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::Equivalence => "L2 difference between matrix-form and telescoping solutions of 1D density advection",
            Experiment::Convergence1d => "L2 errors and rates for 1D density advection",
            Experiment::Convergence2d => "L2 errors and rates for 2D diagonal density advection",
            Experiment::Sedov => "Sedov blast with hybrid DG/FV subcell limiting",
            Experiment::Freestream => "constant state on a warped mesh: residual and metric diagnostics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub node_kind: NodeKind,
    /// Polynomial degree of single runs (sedov, freestream).
    pub degree: usize,
    /// Degrees swept by the table experiments.
    pub degrees: Vec<usize>,
    /// Elements per direction of single runs.
    pub elements: usize,
    /// Elements per direction of each refinement level.
    pub levels: Vec<usize>,
    pub cfl: f64,
    pub t_end: f64,
    /// Extra output times before `t_end` (sedov).
    pub snapshots: Vec<f64>,
    pub gamma: f64,
    pub volume_flux: VolumeFlux,
    pub surface_flux: SurfaceFlux,
    pub projection: FaceProjection,
    pub limiting: bool,
    pub warp: f64,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn preset(experiment: Experiment) -> Self {
        let base = RunConfig {
            experiment,
            node_kind: NodeKind::Gauss,
            degree: 3,
            degrees: vec![1, 2, 3, 4, 5],
            elements: 8,
            levels: vec![4, 8, 16],
            cfl: 0.125,
            t_end: 0.7,
            snapshots: vec![],
            gamma: 1.4,
            volume_flux: VolumeFlux::Chandrashekar,
            surface_flux: SurfaceFlux::llf(VolumeFlux::Chandrashekar),
            projection: FaceProjection::Entropy,
            limiting: false,
            warp: 0.0,
            output: None,
            seed: 0,
        };
        match experiment {
            Experiment::Equivalence => base,
            // the time error is far below the spatial one at CFL 0.5
            Experiment::Convergence1d => RunConfig {
                degrees: vec![2, 3, 4],
                levels: vec![64, 128, 256],
                cfl: 0.5,
                ..base
            },
            Experiment::Convergence2d => RunConfig {
                degrees: vec![2, 3, 4],
                levels: vec![4, 8, 16],
                cfl: 0.5,
                t_end: 0.5,
                ..base
            },
            Experiment::Sedov => RunConfig {
                elements: 16,
                volume_flux: VolumeFlux::Average,
                surface_flux: SurfaceFlux::llf(VolumeFlux::Average),
                cfl: 0.9,
                t_end: 1.0,
                snapshots: vec![0.6],
                limiting: true,
                ..base
            },
            Experiment::Freestream => RunConfig {
                elements: 4,
                warp: 0.06,
                t_end: 0.0,
                ..base
            },
        }
    }

    /// Parse a JSON object; missing keys take the preset of its
    /// `experiment`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let exp = obj
            .get("experiment")
            .ok_or_else(|| Error::Config("missing key `experiment`".into()))?;
        let exp: Experiment =
            serde_json::from_value(exp.clone()).map_err(|e| Error::Config(format!("experiment: {e}")))?;
        let mut merged = serde_json::to_value(Self::preset(exp)).map_err(|e| Error::Config(e.to_string()))?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let degrees = std::iter::once(self.degree).chain(self.degrees.iter().copied());
        for n in degrees {
            if !(1..=crate::basis::MAX_DEGREE).contains(&n) {
                return bad(format!("degree {n} outside 1..={}", crate::basis::MAX_DEGREE));
            }
        }
        if self.elements == 0 || self.levels.iter().any(|&k| k == 0) {
            return bad("element counts must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            return bad(format!("cfl {} must be positive", self.cfl));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end {} must be non-negative", self.t_end));
        }
        if let Some(s) = self.snapshots.iter().find(|&&s| !(s > 0.0 && s < self.t_end)) {
            return bad(format!("snapshot time {s} must lie in (0, t_end)"));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma {} must exceed 1", self.gamma));
        }
        if !(0.0..0.5).contains(&self.warp) {
            return bad(format!("warp amplitude {} outside [0, 0.5)", self.warp));
        }
        match self.experiment {
            Experiment::Sedov if !self.limiting => bad("the sedov experiment requires limiting".into()),
            Experiment::Convergence1d | Experiment::Convergence2d if self.levels.len() < 3 => {
                bad("convergence rates need at least three levels".into())
            }
            _ => Ok(()),
        }
    }

    /// Full-size meshes: 64² elements for sedov, h down to 1/32 for the
    /// 1D tables, one more level for the 2D rates.
    pub fn apply_paper_scale(&mut self) {
        match self.experiment {
            Experiment::Sedov => self.elements = 64,
            Experiment::Equivalence => self.levels = vec![4, 8, 16, 32, 64],
            Experiment::Convergence1d => self.levels = vec![64, 128, 256, 512],
            Experiment::Convergence2d => self.levels = vec![4, 8, 16, 32],
            Experiment::Freestream => self.elements = 16,
        }
    }

    pub fn gas(&self) -> Result<GasModel> {
        GasModel::new(self.gamma).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scheme(&self) -> Result<Scheme> {
        Ok(Scheme {
            volume: self.volume_flux,
            surface: self.surface_flux,
            projection: self.projection,
            gas: self.gas()?,
        })
    }

    fn ops(&self, degree: usize) -> Result<Operators1D> {
        Operators1D::new(self.node_kind, degree)
    }
}

/// One row of an error or difference table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub l2_rho: f64,
    pub l2_momentum: f64,
    pub l2_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "slope_rho")]
    pub rho: f64,
    #[serde(rename = "slope_momentum")]
    pub momentum: f64,
    #[serde(rename = "slope_energy")]
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<TableRow>,
}

/// Least-squares slope of `log e` against `log h`.
pub fn loglog_slope(h: &[f64], e: &[f64]) -> f64 {
    let m = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

impl ErrorTable {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        d.dedup();
        d
    }

    pub fn rows_for(&self, n: usize) -> Vec<TableRow> {
        self.rows.iter().copied().filter(|r| r.n == n).collect()
    }

    /// Rates per degree; only degrees with at least three levels.
    pub fn slopes(&self) -> Vec<SlopeRow> {
        self.degrees()
            .into_iter()
            .filter_map(|n| {
                let rows = self.rows_for(n);
                if rows.len() < 3 {
                    return None;
                }
                let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
                let s = |f: fn(&TableRow) -> f64| loglog_slope(&h, &rows.iter().map(f).collect::<Vec<_>>());
                Some(SlopeRow {
                    n,
                    rho: s(|r| r.l2_rho),
                    momentum: s(|r| r.l2_momentum),
                    energy: s(|r| r.l2_energy),
                })
            })
            .collect()
    }

    pub fn max_rho(&self) -> f64 {
        self.rows.iter().map(|r| r.l2_rho).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>3} {:>10} {:>5} {:>12} {:>12} {:>12}", "N", "h", "K", "L2 rho", "L2 mom", "L2 energy");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>3} {:>10.6} {:>5} {:>12.5e} {:>12.5e} {:>12.5e}",
                r.n, r.h, r.k, r.l2_rho, r.l2_momentum, r.l2_energy
            );
        }
        for sl in self.slopes() {
            let _ = writeln!(s, "N = {}: rates rho {:.3}, momentum {:.3}, energy {:.3}", sl.n, sl.rho, sl.momentum, sl.energy);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// 1D density advection

/// `ρ = 2 + sin π(x - t)`, `u = 1`, `p = 1`.
pub fn advection_1d(x: f64, t: f64, gas: &GasModel) -> ConsState<1> {
    prim_to_cons(&PrimState::new(2.0 + (PI * (x - t)).sin(), [1.0], 1.0), gas).expect("positive state")
}

/// `ρ = 2 + sin π(x + y - 2t)`, `v = (1, 1)`, `p = 1`.
pub fn advection_2d(x: [f64; 2], t: f64, gas: &GasModel) -> ConsState<2> {
    prim_to_cons(&PrimState::new(2.0 + (PI * (x[0] + x[1] - 2.0 * t)).sin(), [1.0, 1.0], 1.0), gas)
        .expect("positive state")
}

struct Solver1D<'a> {
    mesh: &'a Mesh1D,
    scheme: &'a Scheme,
    cfl: f64,
    formulation: Formulation,
}

impl OdeSystem for Solver1D<'_> {
    type Item = ConsState<1>;

    fn rhs(&mut self, u: &[ConsState<1>], _t: f64, _dt: f64, _stage: usize) -> Result<Vec<ConsState<1>>> {
        rhs_1d(self.mesh, self.scheme, u, self.formulation)
    }

    fn max_dt(&mut self, u: &[ConsState<1>], _t: f64) -> Result<f64> {
        advective_dt_1d(self.mesh, u, &self.scheme.gas, self.cfl)
    }
}

/// Both formulations side by side in one register: the first half is
/// advanced with the matrix form, the second with telescoping fluxes, and
/// the step size always comes from the first half.
struct Lockstep1D<'a> {
    mesh: &'a Mesh1D,
    scheme: &'a Scheme,
    cfl: f64,
}

impl OdeSystem for Lockstep1D<'_> {
    type Item = ConsState<1>;

    fn rhs(&mut self, u: &[ConsState<1>], _t: f64, _dt: f64, _stage: usize) -> Result<Vec<ConsState<1>>> {
        let (a, b) = u.split_at(u.len() / 2);
        let mut out = rhs_1d(self.mesh, self.scheme, a, Formulation::Matrix)?;
        out.extend(rhs_1d(self.mesh, self.scheme, b, Formulation::Telescoping)?);
        Ok(out)
    }

    fn max_dt(&mut self, u: &[ConsState<1>], _t: f64) -> Result<f64> {
        advective_dt_1d(self.mesh, &u[..u.len() / 2], &self.scheme.gas, self.cfl)
    }
}

fn mesh_1d(cfg: &RunConfig, degree: usize, k: usize) -> Result<Mesh1D> {
    Mesh1D::uniform(cfg.ops(degree)?, -1.0, 1.0, k)
}

fn row_1d(mesh: &Mesh1D, n: usize, a: &[ConsState<1>], b: &[ConsState<1>]) -> TableRow {
    TableRow {
        n,
        h: mesh.element_width(),
        k: mesh.elements,
        l2_rho: mesh.l2_difference(a, b, &[0]),
        l2_momentum: mesh.l2_difference(a, b, &[1]),
        l2_energy: mesh.l2_difference(a, b, &[2]),
    }
}

/// L2 differences between the two formulations at `t_end` on `[-1, 1]`
/// with `K` elements per level (`h = 2 / K`).
pub fn run_equivalence(cfg: &RunConfig) -> Result<ErrorTable> {
    let scheme = cfg.scheme()?;
    let gas = scheme.gas;
    let mut table = ErrorTable::default();
    for &n in &cfg.degrees {
        for &k in &cfg.levels {
            let mesh = mesh_1d(cfg, n, k)?;
            let u0 = mesh.sample(|x| advection_1d(x, 0.0, &gas));
            let mut u = u0.clone();
            u.extend(u0);
            let mut sys = Lockstep1D {
                mesh: &mesh,
                scheme: &scheme,
                cfl: cfg.cfl,
            };
            advance(&mut sys, &mut u, 0.0, cfg.t_end, &CARPENTER_KENNEDY_RK45)?;
            let (a, b) = u.split_at(u.len() / 2);
            table.rows.push(row_1d(&mesh, n, a, b));
        }
    }
    Ok(table)
}

pub fn run_convergence(cfg: &RunConfig) -> Result<ErrorTable> {
    match cfg.experiment {
        Experiment::Convergence1d => convergence_1d(cfg),
        Experiment::Convergence2d => convergence_2d(cfg),
        e => Err(Error::Config(format!("{} is not a convergence experiment", e.name()))),
    }
}

fn convergence_1d(cfg: &RunConfig) -> Result<ErrorTable> {
    let scheme = cfg.scheme()?;
    let gas = scheme.gas;
    let mut table = ErrorTable::default();
    for &n in &cfg.degrees {
        for &k in &cfg.levels {
            let mesh = mesh_1d(cfg, n, k)?;
            let mut u = mesh.sample(|x| advection_1d(x, 0.0, &gas));
            let mut sys = Solver1D {
                mesh: &mesh,
                scheme: &scheme,
                cfl: cfg.cfl,
                formulation: Formulation::Telescoping,
            };
            advance(&mut sys, &mut u, 0.0, cfg.t_end, &CARPENTER_KENNEDY_RK45)?;
            let exact = mesh.sample(|x| advection_1d(x, cfg.t_end, &gas));
            table.rows.push(row_1d(&mesh, n, &u, &exact));
        }
    }
    Ok(table)
}

struct Solver2D<'a> {
    mesh: &'a QuadMesh,
    scheme: &'a Scheme,
    cfl: f64,
}

impl OdeSystem for Solver2D<'_> {
    type Item = ConsState<2>;

    fn rhs(&mut self, u: &[ConsState<2>], _t: f64, _dt: f64, _stage: usize) -> Result<Vec<ConsState<2>>> {
        rhs_2d(self.mesh, self.scheme, u, Formulation::Telescoping)
    }

    fn max_dt(&mut self, u: &[ConsState<2>], _t: f64) -> Result<f64> {
        advective_dt_2d(self.mesh, u, &self.scheme.gas, self.cfl)
    }
}

fn convergence_2d(cfg: &RunConfig) -> Result<ErrorTable> {
    let scheme = cfg.scheme()?;
    let gas = scheme.gas;
    let mut table = ErrorTable::default();
    for &n in &cfg.degrees {
        for &k in &cfg.levels {
            let mesh = QuadMesh::warped(k, k, Rect::REFERENCE, cfg.ops(n)?, cfg.warp)?;
            let mut u = mesh.sample(|x| advection_2d(x, 0.0, &gas));
            let mut sys = Solver2D {
                mesh: &mesh,
                scheme: &scheme,
                cfl: cfg.cfl,
            };
            advance(&mut sys, &mut u, 0.0, cfg.t_end, &CARPENTER_KENNEDY_RK45)?;
            let exact = mesh.sample(|x| advection_2d(x, cfg.t_end, &gas));
            table.rows.push(TableRow {
                n,
                h: 2.0 / k as f64,
                k,
                l2_rho: mesh.l2_difference(&u, &exact, &[0]),
                l2_momentum: mesh.l2_difference(&u, &exact, &[1, 2]),
                l2_energy: mesh.l2_difference(&u, &exact, &[3]),
            });
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// free stream

#[derive(Debug, Clone, Serialize)]
pub struct FreestreamReport {
    pub max_dudt: f64,
    pub metric_identity: f64,
    pub watertightness: f64,
    pub normal_closure: f64,
    pub subcell_gauss: f64,
    pub min_jacobian: f64,
    pub state: [f64; 4],
}

/// Residual of a seeded random constant state on the configured mesh.
pub fn run_freestream(cfg: &RunConfig) -> Result<(QuadMesh, FreestreamReport)> {
    use rand::{Rng, SeedableRng};
    let scheme = cfg.scheme()?;
    let gas = scheme.gas;
    let mesh = QuadMesh::warped(cfg.elements, cfg.elements, Rect::REFERENCE, cfg.ops(cfg.degree)?, cfg.warp)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = PrimState::new(
        rng.gen_range(0.5..2.0),
        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        rng.gen_range(0.5..2.0),
    );
    let c = prim_to_cons(&w, &gas)?;
    let u = vec![c; mesh.ndofs()];
    let dudt = rhs_2d(&mesh, &scheme, &u, Formulation::Telescoping)?;
    let report = FreestreamReport {
        max_dudt: dudt.iter().map(|d| d.max_abs()).fold(0.0, f64::max),
        metric_identity: mesh.metric_identity_residual(),
        watertightness: mesh.watertightness_residual(),
        normal_closure: mesh.max_normal_closure(),
        subcell_gauss: mesh.subcell_gauss_residual(),
        min_jacobian: mesh.min_jacobian(),
        state: [w.rho, w.vel[0], w.vel[1], w.p],
    };
    Ok((mesh, report))
}

// ---------------------------------------------------------------------------
// Sedov blast

pub const SEDOV_RHO0: f64 = 1.0;
pub const SEDOV_P0: f64 = 0.1;
pub const SEDOV_SIGMA_RHO: f64 = 0.25;
pub const SEDOV_SIGMA_P: f64 = 0.15;

/// `G(r; σ) = exp(-r² / (2σ²)) / (4πσ²)`.
pub fn sedov_gaussian(r2: f64, sigma: f64) -> f64 {
    (-0.5 * r2 / (sigma * sigma)).exp() / (4.0 * PI * sigma * sigma)
}

pub fn sedov_initial(x: [f64; 2], gas: &GasModel) -> ConsState<2> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let rho = SEDOV_RHO0 + sedov_gaussian(r2, SEDOV_SIGMA_RHO);
    let p = SEDOV_P0 + (gas.gamma - 1.0) * sedov_gaussian(r2, SEDOV_SIGMA_P);
    prim_to_cons(&PrimState::new(rho, [0.0, 0.0], p), gas).expect("positive state")
}

/// How the Sedov run combines the two schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// Blended DG/FV fluxes with density bounds.
    Limited,
    /// First-order subcell FV only (`α = 1`).
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: f64,
    pub mean_alpha: f64,
    pub dt: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mean_alpha: f64,
    pub entropy: f64,
}

/// Diagnostics accumulated over accepted steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SedovDiagnostics {
    /// Largest excursion of a stage forward-Euler density outside its
    /// bar-state bounds.
    pub max_bound_excess: f64,
    /// Nodes where even the first-order update left the bounds.
    pub bound_violations: usize,
    /// Largest per-step change of any conserved total, relative to
    /// `max(1, |total|)`.
    pub max_conservation_drift: f64,
    pub min_density: f64,
    pub min_pressure: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct StageLog {
    excess: f64,
    violations: usize,
    mean_alpha: f64,
}

struct SedovSystem<'a> {
    mesh: &'a QuadMesh,
    scheme: &'a Scheme,
    cfl: f64,
    mode: BlendMode,
    pending: StageLog,
    diag: SedovDiagnostics,
    totals: ConsState<2>,
    history: Vec<HistoryRow>,
    steps: Vec<StepRow>,
    step_offset: usize,
}

fn total_entropy(mesh: &QuadMesh, u: &[ConsState<2>], gas: &GasModel) -> Result<f64> {
    let mut s = 0.0;
    for (v, ui) in mesh.node_volumes().iter().zip(u) {
        s += v * entropy(ui, gas)?;
    }
    Ok(s)
}

impl OdeSystem for SedovSystem<'_> {
    type Item = ConsState<2>;

    fn rhs(&mut self, u: &[ConsState<2>], _t: f64, dt: f64, stage: usize) -> Result<Vec<ConsState<2>>> {
        if stage == 0 {
            self.pending = StageLog::default();
        }
        match self.mode {
            BlendMode::FirstOrder => {
                if stage == 0 {
                    self.pending.mean_alpha = 1.0;
                }
                fv_rhs_2d(self.mesh, u, &self.scheme.gas)
            }
            BlendMode::Limited => {
                let out = limited_rhs(self.mesh, self.scheme, u, dt)?;
                let excess = bound_excess(u, &out.dudt, dt, &out.bounds);
                self.pending.excess = self.pending.excess.max(excess);
                self.pending.violations += out.violations;
                if stage == 0 {
                    self.pending.mean_alpha = out.mean_alpha;
                }
                Ok(out.dudt)
            }
        }
    }

    fn check(&self, u: &[ConsState<2>]) -> Result<()> {
        u.iter().try_for_each(|s| s.check_physical(&self.scheme.gas))
    }

    fn max_dt(&mut self, u: &[ConsState<2>], _t: f64) -> Result<f64> {
        idp_timestep(self.mesh, u, &self.scheme.gas, self.cfl)
    }

    fn on_step(&mut self, step: usize, t: f64, dt: f64, u: &[ConsState<2>]) -> Result<()> {
        let gas = &self.scheme.gas;
        let totals = self.mesh.totals(u);
        for c in 0..ConsState::<2>::NVARS {
            let (a, b) = (totals.component(c), self.totals.component(c));
            let drift = (a - b).abs() / b.abs().max(1.0);
            self.diag.max_conservation_drift = self.diag.max_conservation_drift.max(drift);
        }
        self.totals = totals;
        self.diag.max_bound_excess = self.diag.max_bound_excess.max(self.pending.excess);
        self.diag.bound_violations += self.pending.violations;
        for s in u {
            self.diag.min_density = self.diag.min_density.min(s.rho);
            self.diag.min_pressure = self.diag.min_pressure.min(s.pressure(gas));
        }
        let step = step + self.step_offset;
        self.history.push(HistoryRow {
            t,
            mean_alpha: self.pending.mean_alpha,
            dt,
            step,
        });
        self.steps.push(StepRow {
            step,
            t,
            dt,
            mean_alpha: self.pending.mean_alpha,
            entropy: total_entropy(self.mesh, u, gas)?,
        });
        Ok(())
    }
}

/// State at an output time together with its nodal blending coefficients.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: Vec<ConsState<2>>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SedovRun {
    pub mesh: QuadMesh,
    pub snapshots: Vec<Snapshot>,
    pub history: Vec<HistoryRow>,
    pub steps: Vec<StepRow>,
    pub diagnostics: SedovDiagnostics,
    pub retries: usize,
    pub initial_totals: ConsState<2>,
}

impl SedovRun {
    pub fn step_count(&self) -> usize {
        self.history.len()
    }

    pub fn final_state(&self) -> &Snapshot {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// Time average of the per-step mean blending coefficient.
    pub fn time_averaged_alpha(&self) -> f64 {
        let t: f64 = self.history.iter().map(|h| h.dt).sum();
        self.history.iter().map(|h| h.mean_alpha * h.dt).sum::<f64>() / t.max(f64::MIN_POSITIVE)
    }

    pub fn mean_dt(&self) -> f64 {
        self.history.iter().map(|h| h.dt).sum::<f64>() / self.history.len().max(1) as f64
    }
}

fn nodal_alpha(mesh: &QuadMesh, scheme: &Scheme, u: &[ConsState<2>], cfl: f64, mode: BlendMode) -> Result<Vec<f64>> {
    match mode {
        BlendMode::FirstOrder => Ok(vec![1.0; u.len()]),
        BlendMode::Limited => {
            let dt = idp_timestep(mesh, u, &scheme.gas, cfl)?;
            Ok(limited_rhs(mesh, scheme, u, dt)?.field.nodal)
        }
    }
}

pub fn run_sedov(cfg: &RunConfig) -> Result<SedovRun> {
    run_sedov_with(cfg, BlendMode::Limited)
}

/// Sedov blast to `t_end`, stopping at every snapshot time on the way.
pub fn run_sedov_with(cfg: &RunConfig, mode: BlendMode) -> Result<SedovRun> {
    if mode == BlendMode::Limited && !cfg.limiting {
        return Err(Error::Config("the sedov experiment requires limiting".into()));
    }
    let scheme = cfg.scheme()?;
    let gas = scheme.gas;
    let k = cfg.elements;
    let mesh = QuadMesh::warped(k, k, Rect::REFERENCE, cfg.ops(cfg.degree)?, cfg.warp)?;
    let mut u = mesh.sample(|x| sedov_initial(x, &gas));
    let initial_totals = mesh.totals(&u);
    let mut sys = SedovSystem {
        mesh: &mesh,
        scheme: &scheme,
        cfl: cfg.cfl,
        mode,
        pending: StageLog::default(),
        diag: SedovDiagnostics {
            min_density: f64::INFINITY,
            min_pressure: f64::INFINITY,
            ..Default::default()
        },
        totals: initial_totals,
        history: vec![],
        steps: vec![],
        step_offset: 0,
    };
    let mut snapshots = vec![Snapshot {
        t: 0.0,
        alpha: nodal_alpha(&mesh, &scheme, &u, cfg.cfl, mode)?,
        state: u.clone(),
    }];
    let mut retries = 0;
    let mut t = 0.0;
    let mut stops: Vec<f64> = cfg.snapshots.clone();
    stops.push(cfg.t_end);
    for stop in stops {
        if stop <= t {
            continue;
        }
        let rep = advance(&mut sys, &mut u, t, stop, &CARPENTER_KENNEDY_RK45)?;
        sys.step_offset += rep.steps;
        retries += rep.retries;
        t = stop;
        snapshots.push(Snapshot {
            t,
            alpha: nodal_alpha(&mesh, &scheme, &u, cfg.cfl, mode)?,
            state: u.clone(),
        });
    }
    let (history, steps, diagnostics) = (sys.history, sys.steps, sys.diag);
    Ok(SedovRun {
        mesh,
        snapshots,
        history,
        steps,
        diagnostics,
        retries,
        initial_totals,
    })
}

// ---------------------------------------------------------------------------
// output

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create(path)?.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, e.into())
}

/// Write `rows` under a fixed header; the header is written even when
/// there are no rows.
pub fn write_csv<T: Serialize>(header: &str, rows: &[T], path: &Path) -> Result<()> {
    let file = create(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header.split(',')).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read rows back, rejecting files whose header differs from `header`.
pub fn read_csv<T: serde::de::DeserializeOwned>(header: &str, path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::Contract(format!("{}: header `{found}`, expected `{header}`", path.display())));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Contract(format!("{}: {e}", path.display())))
}

/// One row of a field file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub vx: f64,
    pub vy: f64,
    pub p: f64,
    pub alpha: f64,
}

pub fn field_rows(mesh: &QuadMesh, u: &[ConsState<2>], alpha: &[f64], gas: &GasModel) -> Result<Vec<FieldRow>> {
    mesh.sample(|x| x)
        .iter()
        .zip(u)
        .zip(alpha)
        .map(|((x, ui), &alpha)| {
            let w = cons_to_prim(ui, gas)?;
            Ok(FieldRow {
                x: x[0],
                y: x[1],
                rho: w.rho,
                vx: w.vel[0],
                vy: w.vel[1],
                p: w.p,
                alpha,
            })
        })
        .collect()
}

/// One CSV row per node: `x,y,rho,vx,vy,p,alpha`.
pub fn write_field(mesh: &QuadMesh, u: &[ConsState<2>], alpha: &[f64], gas: &GasModel, path: &Path) -> Result<()> {
    write_csv(FIELD_HEADER, &field_rows(mesh, u, alpha, gas)?, path)
}

pub fn read_field(path: &Path) -> Result<Vec<FieldRow>> {
    read_csv(FIELD_HEADER, path)
}

/// Legacy ASCII VTK structured grid; nodes are ordered globally by
/// `(ex (N+1) + i, ey (N+1) + j)`, which is a logically structured array.
pub fn write_vtk(mesh: &QuadMesh, u: &[ConsState<2>], alpha: &[f64], gas: &GasModel, path: &Path) -> Result<()> {
    let n = mesh.n();
    let (nx, ny) = (mesh.kx * n, mesh.ky * n);
    let global = |gx: usize, gy: usize| {
        let (ex, i) = (gx / n, gx % n);
        let (ey, j) = (gy / n, gy % n);
        (ex + mesh.kx * ey) * n * n + i + n * j
    };
    let order: Vec<usize> = (0..ny).flat_map(|gy| (0..nx).map(move |gx| global(gx, gy))).collect();
    let xs = mesh.sample(|x| x);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "dgsem field");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {nx} {ny} 1");
    let _ = writeln!(s, "POINTS {} double", nx * ny);
    for &g in &order {
        let _ = writeln!(s, "{:.10e} {:.10e} 0", xs[g][0], xs[g][1]);
    }
    let prims = u.iter().map(|ui| cons_to_prim(ui, gas)).collect::<Result<Vec<_>>>()?;
    let _ = writeln!(s, "POINT_DATA {}", nx * ny);
    for (name, f) in [
        ("rho", Box::new(|g: usize| prims[g].rho) as Box<dyn Fn(usize) -> f64>),
        ("p", Box::new(|g: usize| prims[g].p)),
        ("alpha", Box::new(|g: usize| alpha[g])),
    ] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for &g in &order {
            let _ = writeln!(s, "{:.10e}", f(g));
        }
    }
    let _ = writeln!(s, "VECTORS velocity double");
    for &g in &order {
        let _ = writeln!(s, "{:.10e} {:.10e} 0", prims[g].vel[0], prims[g].vel[1]);
    }
    write_text(path, &s)
}

pub fn write_table(table: &ErrorTable, path: &Path) -> Result<()> {
    write_csv(TABLE_HEADER, &table.rows, path)
}

pub fn write_slopes(table: &ErrorTable, path: &Path) -> Result<()> {
    write_csv(SLOPES_HEADER, &table.slopes(), path)
}

pub fn write_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    write_csv(HISTORY_HEADER, rows, path)
}

pub fn write_steps(rows: &[StepRow], path: &Path) -> Result<()> {
    write_csv(STEPS_HEADER, rows, path)
}

// ---------------------------------------------------------------------------
// dispatch

/// Run the configured experiment, write its outputs when an output
/// directory is set, and return a human-readable report.
pub fn run(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let out = cfg.output.clone();
    if let Some(dir) = &out {
        write_text(&dir.join("config.json"), &cfg.to_json())?;
    }
    let mut report = format!("experiment: {} ({})\n", cfg.experiment.name(), cfg.node_kind);
    match cfg.experiment {
        Experiment::Equivalence | Experiment::Convergence1d | Experiment::Convergence2d => {
            let table = if cfg.experiment == Experiment::Equivalence {
                run_equivalence(cfg)?
            } else {
                run_convergence(cfg)?
            };
            report.push_str(&table.to_text());
            if let Some(dir) = &out {
                write_table(&table, &dir.join("table.csv"))?;
                write_slopes(&table, &dir.join("slopes.csv"))?;
            }
        }
        Experiment::Freestream => {
            let (mesh, rep) = run_freestream(cfg)?;
            report.push_str(&mesh.summary());
            let _ = writeln!(report, "max |u_t|: {:.3e}", rep.max_dudt);
            if let Some(dir) = &out {
                write_text(&dir.join("mesh.txt"), &mesh.summary())?;
                let json = serde_json::to_string_pretty(&rep).expect("report serializes");
                write_text(&dir.join("freestream.json"), &json)?;
            }
        }
        Experiment::Sedov => {
            let run = run_sedov(cfg)?;
            let gas = cfg.gas()?;
            let d = &run.diagnostics;
            let _ = writeln!(report, "steps: {} (retries {})", run.step_count(), run.retries);
            let _ = writeln!(report, "mean dt: {:.6e}", run.mean_dt());
            let _ = writeln!(report, "time-averaged mean alpha: {:.6e}", run.time_averaged_alpha());
            let _ = writeln!(report, "min density: {:.6e}, min pressure: {:.6e}", d.min_density, d.min_pressure);
            let _ = writeln!(report, "max bound excess: {:.3e} ({} first-order violations)", d.max_bound_excess, d.bound_violations);
            let _ = writeln!(report, "max conservation drift per step: {:.3e}", d.max_conservation_drift);
            if let Some(dir) = &out {
                for snap in &run.snapshots {
                    let stem = format!("field_t{:.3}", snap.t);
                    write_field(&run.mesh, &snap.state, &snap.alpha, &gas, &dir.join(format!("{stem}.csv")))?;
                    write_vtk(&run.mesh, &snap.state, &snap.alpha, &gas, &dir.join(format!("{stem}.vtk")))?;
                }
                write_history(&run.history, &dir.join("history.csv"))?;
                write_steps(&run.steps, &dir.join("steps.csv"))?;
                let json = serde_json::to_string_pretty(d).expect("diagnostics serialize");
                write_text(&dir.join("diagnostics.json"), &json)?;
            }
        }
    }
    if let Some(dir) = &out {
        write_text(&dir.join("report.txt"), &report)?;
    }
    Ok(report)
}
