//! Self-test suite: ground-state closed form, kernel identities, the `ρ`
//! solve and conservation of the split-step integrator.

use std::fmt;
use std::sync::Arc;

use bubblelab::diagnostics::{energy, mass, pseudo_conformal_energy};
use bubblelab::evolution::{evolve, Propagator, StepController};
use bubblelab::ground_state::{
    kernel_report, ode_residual, radial_kernel_report, rho_residual, DirectionFields, GroundState, LinearizedOps,
};
use bubblelab::noise::{make_flat_weights, sample_brownian, NoiseModel, NoiseOnGrid, WeightSpec};
use bubblelab::profiles::{sum_pseudo_conformal, Anchor, BubbleSet};
use bubblelab::spectral::{make_grid, Grid};

use crate::Result;

/// One measured quantity against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.value.abs() <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.3e} (tolerance {:.1e})", self.name, self.value, self.tolerance)
    }
}

/// `3^{1/4} sech^{1/2}(2x)`.
pub fn closed_form_q1(x: f64) -> f64 {
    3f64.powf(0.25) / (2.0 * x).cosh().sqrt()
}

/// Ground-state checks at `d = 1`: sup error against the closed form,
/// ODE residual and `E(Q)`.
pub fn ground_state_checks(gs1: &GroundState) -> Vec<Check> {
    let q = &gs1.q;
    let sup = q.radii().iter().zip(q.values()).map(|(r, v)| (v - closed_form_q1(*r)).abs()).fold(0.0, f64::max);
    vec![
        Check::new("Q(d=1) sup error vs closed form", sup, 1e-8),
        Check::new("Q(d=1) ODE residual", ode_residual(q), 1e-10),
        Check::new("E(Q) at d=1", gs1.energy(), 1e-9),
    ]
}

/// The reference grid for the one-dimensional kernel identities.
pub fn kernel_grid() -> Result<Arc<Grid>> {
    Ok(make_grid(1, 16.0, 1024)?)
}

/// Kernel identities on the `d = 1` grid and on the `d = 2` radial mesh.
pub fn kernel_checks(gs1: &GroundState, gs2: &GroundState) -> Result<Vec<Check>> {
    let grid = kernel_grid()?;
    let ops = LinearizedOps::new(&grid, gs1)?;
    let dirs = DirectionFields::new(&grid, gs1)?;
    let mut out = Vec::new();
    for row in kernel_report(&ops, &dirs)?.rows {
        out.push(Check::new(format!("d=1 {}", row.identity), row.residual, 1e-8));
    }
    for row in radial_kernel_report(gs2).rows {
        out.push(Check::new(format!("d=2 {}", row.identity), row.residual, 1e-6));
    }
    Ok(out)
}

/// `‖L₊ρ + |x|²Q‖` at both dimensions and the parity of `ρ` at `d = 1`.
pub fn rho_checks(gs1: &GroundState, gs2: &GroundState) -> Result<Vec<Check>> {
    let grid = kernel_grid()?;
    let ops = LinearizedOps::new(&grid, gs1)?;
    let dirs = DirectionFields::new(&grid, gs1)?;
    let r2 = radial_kernel_report(gs2)
        .rows
        .iter()
        .find(|r| r.identity.starts_with("L+ rho"))
        .map_or(f64::NAN, |r| r.residual);
    // Node i sits at −L + ih, so its mirror image is node N − i.
    let n = grid.points();
    let rho = &dirs.rho;
    let norm = rho.iter().map(|v| v * v).sum::<f64>().sqrt();
    let odd = (1..n).map(|i| (rho[i] - rho[n - i]).powi(2)).sum::<f64>().sqrt() / norm;
    Ok(vec![
        Check::new("rho residual d=1", rho_residual(&ops, &dirs)?, 1e-8),
        Check::new("rho residual d=2", r2, 1e-6),
        Check::new("rho odd part d=1", odd, 1e-12),
    ])
}

/// Drifts per unit time of mass and energy along `S_T` for `λ` from 0.5 to 1,
/// with and without noise: `(mass_det, energy_det, mass_noisy)`.
pub fn conservation_drifts(gs1: &GroundState, dt: f64, dt_noisy: f64) -> Result<(f64, f64, f64)> {
    let grid = make_grid(1, 16.0, 1024)?;
    let set = BubbleSet::new(1, vec![Anchor { omega: 1.0, center: [0.0; 2], phase: 0.0 }])?;
    let (t0, t1) = (0.5, 0.0);
    let u0 = sum_pseudo_conformal(&set, 1.0, t0, gs1, &grid)?;
    let stops: Vec<f64> = (1..10).map(|i| t0 - 0.05 * i as f64).collect();
    let ctl = StepController::new(dt, 0.5)?.with_checkpoints(stops.clone());
    let span = t0 - t1;

    let mut prop = Propagator::new(&grid, None)?;
    let det = evolve(&u0, t0, t1, &mut prop, &ctl)?;
    let m0 = mass(&u0);
    let e0 = energy(&u0);
    let mass_det = det.checkpoints.iter().map(|c| (mass(&c.field) - m0).abs()).fold(0.0, f64::max) / m0 / span;
    let e_ref = pseudo_conformal_energy(1.0, gs1.sigma_sq()).max(e0.abs());
    let energy_det = det.checkpoints.iter().map(|c| (energy(&c.field) - e0).abs()).fold(0.0, f64::max) / e_ref / span;

    let spec = WeightSpec {
        anchors: vec![[0.0, 0.0]],
        flatness: 5,
        envelope: 2.0,
        scale: 4.0,
        amplitude: 0.2,
        modes: 2,
    };
    let weights = make_flat_weights(&grid, spec)?;
    let paths = sample_brownian(11, t0, 1e-3, 2)?;
    let noise = Arc::new(NoiseOnGrid::new(&grid, Arc::new(NoiseModel { weights, paths: Some(paths) }))?);
    let mut prop = Propagator::new(&grid, Some(noise))?;
    let ctl = StepController::new(dt_noisy, 0.5)?.with_checkpoints(stops);
    let noisy = evolve(&u0, t0, t1, &mut prop, &ctl)?;
    let mass_noisy = noisy.checkpoints.iter().map(|c| (mass(&c.field) - m0).abs()).fold(0.0, f64::max) / m0 / span;
    Ok((mass_det, energy_det, mass_noisy))
}

pub fn conservation_checks(gs1: &GroundState) -> Result<Vec<Check>> {
    // The splitting's energy error is ≈ 5.6e-6 (dt/1e-4)² per unit time here.
    let (m, e, mn) = conservation_drifts(gs1, 3e-6, 1e-4)?;
    Ok(vec![
        Check::new("deterministic mass drift per unit time", m, 1e-10),
        Check::new("deterministic energy drift per unit time", e, 1e-8),
        Check::new("noisy mass drift per unit time", mn, 1e-8),
    ])
}

/// Every self-test check, in a fixed order.
pub fn selftest(gs1: &GroundState, gs2: &GroundState) -> Result<Vec<Check>> {
    let mut out = ground_state_checks(gs1);
    out.extend(kernel_checks(gs1, gs2)?);
    out.extend(rho_checks(gs1, gs2)?);
    out.extend(conservation_checks(gs1)?);
    Ok(out)
}
