//! Time stepping of `i∂_t u + Δu + |u|^{4/d}u + b·∇u + cu = 0`.
//!
//! With `W = i a` the linear part is a conjugated Laplacian,
//! `Δu + b·∇u + cu = e^{−ia} Δ(e^{ia} u)`, so one Strang step is
//! a half nonlinear phase rotation, an exact spectral Laplacian step in the
//! gauge `e^{ia}` frozen at the step midpoint, and another half rotation.
//! Negative `dt` integrates backward.

use std::sync::Arc;

use crate::ground_state::pow_4d;
use crate::noise::NoiseOnGrid;
use crate::profiles::{sum_pseudo_conformal, BubbleSet};
use crate::spectral::{l2_norm_sq, Field, Grid};
use crate::ground_state::GroundState;
use crate::{Complex64, Error, Result};

/// Spectral split-step propagator on one grid.
pub struct Propagator {
    grid: Arc<Grid>,
    noise: Option<Arc<NoiseOnGrid>>,
    k2: Vec<f64>,
    symbol: Option<(f64, Vec<Complex64>)>,
}

impl Propagator {
    pub fn new(grid: &Arc<Grid>, noise: Option<Arc<NoiseOnGrid>>) -> Result<Self> {
        if let Some(n) = &noise {
            if !n.grid.same_as(grid) {
                return Err(Error::GridMismatch);
            }
        }
        let noise = noise.filter(|n| !n.is_zero());
        let k2 = (0..grid.len())
            .map(|i| {
                let k = grid.wavevector(i);
                k[0] * k[0] + k[1] * k[1]
            })
            .collect();
        Ok(Propagator { grid: grid.clone(), noise, k2, symbol: None })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn noise(&self) -> Option<&Arc<NoiseOnGrid>> {
        self.noise.as_ref()
    }

    /// `u ↦ u e^{i|u|^{4/d} dt}`; exact because the modulus is invariant.
    pub fn nonlinear_step(&self, u: &mut Field, dt: f64) {
        let d = self.grid.dim();
        for z in u.values_mut() {
            let phase = pow_4d(z.norm(), d) * dt;
            *z *= Complex64::from_polar(1.0, phase);
        }
    }

    fn laplacian_symbol(&mut self, dt: f64) -> &[Complex64] {
        let stale = !matches!(&self.symbol, Some((s, _)) if *s == dt);
        if stale {
            let sym = self.k2.iter().map(|&k2| Complex64::from_polar(1.0, -k2 * dt)).collect();
            self.symbol = Some((dt, sym));
        }
        &self.symbol.as_ref().unwrap().1
    }

    /// Exact flow of `i∂_t u + e^{−ia}Δ(e^{ia}u) = 0` with `a` frozen at `t_mid`.
    pub fn linear_step(&mut self, u: &mut Field, t_mid: f64, dt: f64) -> Result<()> {
        let phase = match &self.noise {
            Some(n) => Some(n.phase(t_mid)?),
            None => None,
        };
        if let Some(a) = &phase {
            u.values_mut().iter_mut().zip(a).for_each(|(z, &ai)| *z *= Complex64::from_polar(1.0, ai));
        }
        let grid = self.grid.clone();
        grid.forward(u.values_mut());
        let sym = self.laplacian_symbol(dt);
        u.values_mut().iter_mut().zip(sym).for_each(|(z, s)| *z *= s);
        grid.inverse(u.values_mut());
        if let Some(a) = &phase {
            u.values_mut().iter_mut().zip(a).for_each(|(z, &ai)| *z *= Complex64::from_polar(1.0, -ai));
        }
        Ok(())
    }

    /// One Strang step from `t` to `t + dt`.
    pub fn step(&mut self, u: &Field, t: f64, dt: f64) -> Result<Field> {
        if !u.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let mut v = u.clone();
        self.nonlinear_step(&mut v, 0.5 * dt);
        self.linear_step(&mut v, t + 0.5 * dt, dt)?;
        self.nonlinear_step(&mut v, 0.5 * dt);
        if !v.is_finite() {
            return Err(Error::NonFinite("field after step"));
        }
        Ok(v)
    }
}

/// Smallest bubble scale as a function of time, `λ_min(t) = ω_min (T − t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupScale {
    pub blowup_time: f64,
    pub omega_min: f64,
}

impl BlowupScale {
    pub fn lambda_min(&self, t: f64) -> f64 {
        self.omega_min * (self.blowup_time - t)
    }
}

/// Step-size policy, checkpoints and guards.
#[derive(Clone, Debug, PartialEq)]
pub struct StepController {
    pub dt_base: f64,
    pub dt_min: f64,
    /// `dt ≤ c_dt λ_min²`, `c_dt ≤ 0.5`.
    pub c_dt: f64,
    /// Times at which fields are stored, in any order; only those strictly
    /// between the endpoints are used.
    pub checkpoints: Vec<f64>,
    pub linf_cap: f64,
    pub scale: Option<BlowupScale>,
}

/// Resolution floor `λ_min ≥ RESOLUTION_FACTOR · h`.
pub const RESOLUTION_FACTOR: f64 = 4.0;

impl StepController {
    pub fn new(dt_base: f64, c_dt: f64) -> Result<Self> {
        let ctl = StepController {
            dt_base,
            dt_min: 1e-12,
            c_dt,
            checkpoints: vec![],
            linf_cap: 1e8,
            scale: None,
        };
        ctl.validate()?;
        Ok(ctl)
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<f64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_scale(mut self, scale: BlowupScale) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_base > 0.0) || !(self.dt_min > 0.0) || self.dt_min > self.dt_base {
            return Err(Error::InvalidParameter("need 0 < dt_min ≤ dt_base".into()));
        }
        if !(self.c_dt > 0.0 && self.c_dt <= 0.5) {
            return Err(Error::InvalidParameter(format!("c_dt = {} must lie in (0, 0.5]", self.c_dt)));
        }
        if !(self.linf_cap > 0.0) {
            return Err(Error::InvalidParameter("linf_cap must be positive".into()));
        }
        Ok(())
    }

    /// Largest admissible `|dt|` on the interval between `a` and `b`.
    pub fn allowed_dt(&self, a: f64, b: f64) -> f64 {
        match &self.scale {
            Some(s) => {
                let lam = s.lambda_min(a.max(b)).max(0.0);
                self.dt_base.min(self.c_dt * lam * lam)
            }
            None => self.dt_base,
        }
    }
}

/// Why an evolution ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Completed,
    /// `λ_min` would drop below `4h` (or `dt` below its floor) after `t`.
    ResolutionStop { t: f64 },
    /// Non-finite values or `‖u‖_∞` above the cap at `t`.
    Diverged { t: f64 },
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub t: f64,
    pub field: Field,
}

/// Cheap per-checkpoint monitors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamRow {
    pub t: f64,
    pub mass: f64,
    pub linf: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Starts with the initial time; strictly monotone in the direction of
    /// integration.
    pub checkpoints: Vec<Checkpoint>,
    pub stream: Vec<StreamRow>,
    pub status: Status,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory always holds its initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.t).collect()
    }

    /// Checkpoint stored at exactly `t`.
    pub fn at(&self, t: f64) -> Option<&Field> {
        self.checkpoints.iter().find(|c| c.t == t).map(|c| &c.field)
    }

    fn push(&mut self, t: f64, field: Field) {
        self.stream.push(StreamRow { t, mass: l2_norm_sq(&field), linf: field.linf() });
        self.checkpoints.push(Checkpoint { t, field });
    }
}

/// Integrates from `t0` to `t1` (either order) with segment-uniform steps
/// landing exactly on every checkpoint.
pub fn evolve(u0: &Field, t0: f64, t1: f64, prop: &mut Propagator, ctl: &StepController) -> Result<Trajectory> {
    ctl.validate()?;
    if t0 == t1 || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidParameter(format!("evolve needs distinct finite endpoints, got {t0} and {t1}")));
    }
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial field"));
    }
    let sign = (t1 - t0).signum();
    let mut stops: Vec<f64> =
        ctl.checkpoints.iter().copied().filter(|&t| (t - t0) * sign > 0.0 && (t1 - t) * sign > 0.0).collect();
    stops.sort_by(|a, b| ((a - b) * sign).total_cmp(&0.0));
    stops.dedup();
    stops.push(t1);

    let h = prop.grid().spacing();
    let mut traj = Trajectory { checkpoints: vec![], stream: vec![], status: Status::Completed, steps: 0 };
    traj.push(t0, u0.clone());
    let mut u = u0.clone();
    let mut a = t0;
    for &b in &stops {
        let allowed = ctl.allowed_dt(a, b);
        let resolved = ctl.scale.is_none_or(|s| s.lambda_min(a.max(b)) >= RESOLUTION_FACTOR * h);
        if allowed < ctl.dt_min || !resolved {
            traj.status = Status::ResolutionStop { t: a };
            return Ok(traj);
        }
        let n = ((b - a).abs() / allowed * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        for i in 0..n {
            let t = a + i as f64 * dt;
            let next = match prop.step(&u, t, dt) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    traj.status = Status::Diverged { t };
                    return Ok(traj);
                }
                Err(e) => return Err(e),
            };
            u = next;
            traj.steps += 1;
            if u.linf() > ctl.linf_cap {
                traj.status = Status::Diverged { t: t + dt };
                return Ok(traj);
            }
        }
        traj.push(b, u.clone());
        a = b;
    }
    Ok(traj)
}

/// Backward construction: `u(t_n) = Σ_j S_j(t_n)` integrated from `t_n`
/// down to `t_end`.
pub fn construct_approximant(
    set: &BubbleSet,
    t_n: f64,
    blowup_time: f64,
    t_end: f64,
    gs: &GroundState,
    prop: &mut Propagator,
    ctl: &StepController,
) -> Result<Trajectory> {
    if !(t_n < blowup_time) {
        return Err(Error::InvalidParameter(format!("t_n = {t_n} must precede T = {blowup_time}")));
    }
    let u = sum_pseudo_conformal(set, blowup_time, t_n, gs, prop.grid())?;
    construct_from(&u, set, t_n, blowup_time, t_end, prop, ctl)
}

/// Backward evolution of arbitrary data `u_n` prescribed at `t_n`, with the
/// resolution stop tied to the bubble set's smallest frequency.
pub fn construct_from(
    u_n: &Field,
    set: &BubbleSet,
    t_n: f64,
    blowup_time: f64,
    t_end: f64,
    prop: &mut Propagator,
    ctl: &StepController,
) -> Result<Trajectory> {
    if !(t_n < blowup_time) {
        return Err(Error::InvalidParameter(format!("t_n = {t_n} must precede T = {blowup_time}")));
    }
    if !(t_end < t_n) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must precede t_n = {t_n}")));
    }
    if prop.noise().is_some() && t_end < 0.0 {
        return Err(Error::TimeOutOfRange { t: t_end, start: 0.0, end: blowup_time });
    }
    let omega_min = set.anchors().iter().map(|a| a.omega).fold(f64::INFINITY, f64::min);
    let ctl = ctl.clone().with_scale(BlowupScale { blowup_time, omega_min });
    evolve(u_n, t_n, t_end, prop, &ctl)
}
