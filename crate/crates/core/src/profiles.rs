//! Modulated bubbles `U_j`, pseudo-conformal solutions `S_j`, the profile
//! `ϱ_j`, and the symmetry transforms of the unperturbed equation.
//!
//! A bubble with parameters `(λ, α, β, γ, θ)` is
//! `λ^{−d/2} P(y) e^{i(β·y − γ|y|²/4) + iθ}` with `y = (x − α)/λ` and `P`
//! a radial profile (`Q` or `ρ`). Fields are sampled as periodic sums over
//! the nearest images of the box.

use std::sync::Arc;

use crate::ground_state::{image_offsets, GroundState, RadialProfile};
use crate::spectral::{l2_norm_sq, resample_affine, Field, Grid, Outside};
use crate::{Complex64, Error, Result};

/// Images whose rescaled distance exceeds this are skipped.
const IMAGE_CUTOFF: f64 = 50.0;

/// Fixed target data of one bubble: frequency `ω`, blow-up point and phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub omega: f64,
    pub center: [f64; 2],
    pub phase: f64,
}

/// Modulation parameters `(λ, α, β, γ, θ)` of one bubble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BubbleParams {
    pub lambda: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma: f64,
    pub theta: f64,
}

impl BubbleParams {
    pub fn identity() -> Self {
        BubbleParams { lambda: 1.0, alpha: [0.0; 2], beta: [0.0; 2], gamma: 0.0, theta: 0.0 }
    }

    /// Parameters of the pseudo-conformal solution at time `t < T`:
    /// `λ = ω(T−t)`, `α = x_c`, `β = 0`, `γ = ω²(T−t)`, `θ = 1/(ω²(T−t)) + ϑ`.
    pub fn pseudo_conformal(anchor: &Anchor, blowup_time: f64, t: f64) -> Result<Self> {
        let tau = blowup_time - t;
        if !(tau > 0.0) {
            return Err(Error::TimeOutOfRange { t, start: f64::NEG_INFINITY, end: blowup_time });
        }
        let w = anchor.omega;
        Ok(BubbleParams {
            lambda: w * tau,
            alpha: anchor.center,
            beta: [0.0; 2],
            gamma: w * w * tau,
            theta: 1.0 / (w * w * tau) + anchor.phase,
        })
    }

    /// Moves the parameters by `s` along the exact solution of the modulation
    /// equations `λλ̇ = −γ`, `λ²γ̇ = −γ²`, `λα̇ = 2β`, `λ²β̇ = −γβ`,
    /// `λ²θ̇ = 1 + |β|²`. With `c = γ/λ` conserved, `λ = λ₀ − cs`,
    /// `β = β₀λ/λ₀`, `α = α₀ + 2β₀s/λ₀` and
    /// `θ = θ₀ + |β₀|²s/λ₀² + s/(λ₀λ)`. `None` once `λ` would reach zero.
    pub fn advance(&self, s: f64) -> Option<Self> {
        let l0 = self.lambda;
        let c = self.gamma / l0;
        let lambda = l0 - c * s;
        if !(lambda > 0.0) || !(l0 > 0.0) {
            return None;
        }
        let ratio = lambda / l0;
        let b2 = self.beta[0] * self.beta[0] + self.beta[1] * self.beta[1];
        Some(BubbleParams {
            lambda,
            alpha: [self.alpha[0] + 2.0 * self.beta[0] * s / l0, self.alpha[1] + 2.0 * self.beta[1] * s / l0],
            beta: [self.beta[0] * ratio, self.beta[1] * ratio],
            gamma: c * lambda,
            theta: self.theta + b2 * s / (l0 * l0) + s / (l0 * lambda),
        })
    }

    /// Number of real parameters in dimension `d`: `2d + 3`.
    pub fn count(dim: usize) -> usize {
        2 * dim + 3
    }

    /// Flattened as `[λ, α₁..α_d, β₁..β_d, γ, θ]`.
    pub fn to_vec(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![self.lambda];
        v.extend_from_slice(&self.alpha[..dim]);
        v.extend_from_slice(&self.beta[..dim]);
        v.push(self.gamma);
        v.push(self.theta);
        v
    }

    pub fn from_slice(dim: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::count(dim));
        let mut alpha = [0.0; 2];
        let mut beta = [0.0; 2];
        alpha[..dim].copy_from_slice(&v[1..1 + dim]);
        beta[..dim].copy_from_slice(&v[1 + dim..1 + 2 * dim]);
        BubbleParams { lambda: v[0], alpha, beta, gamma: v[1 + 2 * dim], theta: v[2 + 2 * dim] }
    }
}

/// Anchors ordered along a separating axis `v₁`, with the separation
/// `σ = min_j (x_{j+1} − x_j)·v₁ / 12`.
#[derive(Clone, Debug, PartialEq)]
pub struct BubbleSet {
    dim: usize,
    anchors: Vec<Anchor>,
    /// Rows are `v₁` and `v₂`.
    rotation: [[f64; 2]; 2],
    sigma: f64,
}

impl BubbleSet {
    /// Sorts anchors along the axis that maximizes the smallest gap between
    /// consecutive projections; `e₁` is preferred when it is optimal.
    pub fn new(dim: usize, anchors: Vec<Anchor>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in {{1, 2}}")));
        }
        if anchors.iter().any(|a| !(a.omega > 0.0)) {
            return Err(Error::InvalidParameter("every ω must be positive".into()));
        }
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[i + 1..] {
                let d2 = (a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2);
                if d2 == 0.0 {
                    return Err(Error::Degenerate("anchors must be pairwise distinct".into()));
                }
            }
        }
        let min_gap = |v: [f64; 2]| -> f64 {
            let mut proj: Vec<f64> = anchors.iter().map(|a| a.center[0] * v[0] + a.center[1] * v[1]).collect();
            proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
            proj.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        };
        let mut v1 = [1.0, 0.0];
        if dim == 2 && anchors.len() >= 2 {
            let mut best = min_gap(v1);
            for k in 1..360 {
                let a = std::f64::consts::PI * k as f64 / 360.0;
                let v = [a.cos(), a.sin()];
                let g = min_gap(v);
                if g > best * (1.0 + 1e-12) {
                    best = g;
                    v1 = v;
                }
            }
        }
        let gap = min_gap(v1);
        if anchors.len() >= 2 && !(gap > 0.0) {
            return Err(Error::Degenerate("anchors are not separable along any axis".into()));
        }
        let mut anchors = anchors;
        anchors.sort_by(|a, b| {
            let pa = a.center[0] * v1[0] + a.center[1] * v1[1];
            let pb = b.center[0] * v1[0] + b.center[1] * v1[1];
            pa.partial_cmp(&pb).unwrap()
        });
        let sigma = if anchors.len() >= 2 { gap / 12.0 } else { f64::INFINITY };
        Ok(BubbleSet { dim, anchors, rotation: [v1, [-v1[1], v1[0]]], sigma })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// The separating axis `v₁`.
    pub fn axis(&self) -> [f64; 2] {
        self.rotation[0]
    }

    pub fn rotation(&self) -> [[f64; 2]; 2] {
        self.rotation
    }

    /// Separation `σ` (infinite for a single bubble).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Pseudo-conformal parameters of every bubble at time `t`.
    pub fn pseudo_conformal_params(&self, blowup_time: f64, t: f64) -> Result<Vec<BubbleParams>> {
        self.anchors.iter().map(|a| BubbleParams::pseudo_conformal(a, blowup_time, t)).collect()
    }
}

/// Everything a pointwise formula needs about one bubble at one node and
/// one periodic image.
#[derive(Clone, Copy, Debug)]
pub struct Local {
    pub y: [f64; 2],
    pub r: f64,
    /// Profile value, first and second radial derivatives at `r`.
    pub p: [f64; 3],
    /// `λ^{−d/2} e^{i(β·y − γ|y|²/4 + θ)}`.
    pub phase: Complex64,
    pub beta: [f64; 2],
    pub gamma: f64,
    pub dim: usize,
}

impl Local {
    /// The bubble value.
    #[inline]
    pub fn value(&self) -> Complex64 {
        self.phase * self.p[0]
    }

    /// `∂_{y_i}` of the bubble (phase included).
    #[inline]
    pub fn dy(&self, i: usize) -> Complex64 {
        let radial = if self.r == 0.0 { 0.0 } else { self.p[1] * self.y[i] / self.r };
        self.phase * Complex64::new(radial, (self.beta[i] - 0.5 * self.gamma * self.y[i]) * self.p[0])
    }

    /// `(d/2 + y·∇_y)` applied to the bubble.
    #[inline]
    pub fn lambda_y(&self) -> Complex64 {
        let by = self.beta[0] * self.y[0] + self.beta[1] * self.y[1];
        let re = 0.5 * self.dim as f64 * self.p[0] + self.r * self.p[1];
        self.phase * Complex64::new(re, (by - 0.5 * self.gamma * self.r * self.r) * self.p[0])
    }
}

/// Checks `λ ≥ 4h`.
pub fn check_resolved(lambda: f64, grid: &Grid) -> Result<()> {
    let limit = 4.0 * grid.spacing();
    if !(lambda >= limit) {
        return Err(Error::UnderResolved { scale: lambda, limit });
    }
    Ok(())
}

/// Samples `Σ_images f(local)` for one bubble with radial profile `profile`.
pub fn synthesize<F>(p: &BubbleParams, profile: &RadialProfile, grid: &Arc<Grid>, f: F) -> Result<Field>
where
    F: Fn(&Local) -> Complex64,
{
    check_resolved(p.lambda, grid)?;
    let dim = grid.dim();
    let amp = p.lambda.powf(-0.5 * dim as f64);
    let offsets = image_offsets(dim, 2.0 * grid.extent());
    let inv = 1.0 / p.lambda;
    let values = (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for o in &offsets {
                let y = [(x[0] + o[0] - p.alpha[0]) * inv, (x[1] + o[1] - p.alpha[1]) * inv];
                let r2 = y[0] * y[0] + y[1] * y[1];
                if r2 > IMAGE_CUTOFF * IMAGE_CUTOFF {
                    continue;
                }
                let r = r2.sqrt();
                let arg = p.beta[0] * y[0] + p.beta[1] * y[1] - 0.25 * p.gamma * r2 + p.theta;
                let local = Local {
                    y,
                    r,
                    p: profile.eval(r),
                    phase: Complex64::from_polar(amp, arg),
                    beta: p.beta,
                    gamma: p.gamma,
                    dim,
                };
                acc += f(&local);
            }
            acc
        })
        .collect();
    Field::from_values(grid, values)
}

/// `U = λ^{−d/2} Q(y) e^{i(β·y − γ|y|²/4) + iθ}`.
pub fn bubble(p: &BubbleParams, gs: &GroundState, grid: &Arc<Grid>) -> Result<Field> {
    synthesize(p, &gs.q, grid, Local::value)
}

/// `ϱ`: the same modulation applied to `ρ`.
pub fn varrho_profile(p: &BubbleParams, gs: &GroundState, grid: &Arc<Grid>) -> Result<Field> {
    synthesize(p, &gs.rho, grid, Local::value)
}

/// `S(t)` for `t < T`, checking `ω(T−t) ≥ 4h`.
pub fn pseudo_conformal_s(
    anchor: &Anchor,
    blowup_time: f64,
    t: f64,
    gs: &GroundState,
    grid: &Arc<Grid>,
) -> Result<Field> {
    bubble(&BubbleParams::pseudo_conformal(anchor, blowup_time, t)?, gs, grid)
}

/// `Σ_j U_j`; the zero field for an empty list.
pub fn sum_profiles(params: &[BubbleParams], gs: &GroundState, grid: &Arc<Grid>) -> Result<Field> {
    let mut u = Field::zeros(grid);
    for p in params {
        u += &bubble(p, gs, grid)?;
    }
    Ok(u)
}

/// `Σ_j S_j(t)` for a bubble set.
pub fn sum_pseudo_conformal(
    set: &BubbleSet,
    blowup_time: f64,
    t: f64,
    gs: &GroundState,
    grid: &Arc<Grid>,
) -> Result<Field> {
    sum_profiles(&set.pseudo_conformal_params(blowup_time, t)?, gs, grid)
}

/// Parameter direction for [`parameter_derivative`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Lambda,
    Alpha(usize),
    Beta(usize),
    Gamma,
    Theta,
}

impl Direction {
    /// All directions in the order of [`BubbleParams::to_vec`].
    pub fn all(dim: usize) -> Vec<Direction> {
        let mut v = vec![Direction::Lambda];
        v.extend((0..dim).map(Direction::Alpha));
        v.extend((0..dim).map(Direction::Beta));
        v.push(Direction::Gamma);
        v.push(Direction::Theta);
        v
    }
}

/// Pointwise value of `∂U/∂p` for one image.
pub fn local_derivative(l: &Local, dir: Direction, lambda: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    match dir {
        Direction::Theta => i * l.value(),
        Direction::Beta(k) => i * l.y[k] * l.value(),
        Direction::Gamma => -i * (0.25 * l.r * l.r) * l.value(),
        Direction::Alpha(k) => -l.dy(k) / lambda,
        Direction::Lambda => -l.lambda_y() / lambda,
    }
}

/// Analytic `∂U/∂p` of a bubble built on `profile`.
pub fn parameter_derivative(
    p: &BubbleParams,
    profile: &RadialProfile,
    grid: &Arc<Grid>,
    dir: Direction,
) -> Result<Field> {
    let lambda = p.lambda;
    synthesize(p, profile, grid, |l| local_derivative(l, dir, lambda))
}

/// Pseudo-conformal transform of a field:
/// `g(x) = |t|^{−d/2} f(x/(−t)) e^{−i|x|²/(4t)}`.
///
/// Fails when more than `tol` of the L² mass of `f` would fall outside the
/// box after rescaling, or when the output chirp is not resolved.
pub fn pc_transform(f: &Field, t: f64, tol: f64) -> Result<Field> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter("pseudo-conformal time must be nonzero".into()));
    }
    let grid = f.grid();
    let l = grid.extent();
    if l / (2.0 * t.abs()) > std::f64::consts::PI / grid.spacing() {
        return Err(Error::InvalidParameter(format!(
            "chirp |x|/(2|t|) at t = {t} exceeds the grid's Nyquist wavenumber"
        )));
    }
    // Nodes of f that land outside the box after x = −t x'.
    let reach = l / t.abs();
    let total = l2_norm_sq(f);
    let lost: f64 = f
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let x = grid.point(*i);
            x[0].abs() >= reach || x[1].abs() >= reach
        })
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        * grid.cell_volume();
    if total > 0.0 && lost > tol * total {
        return Err(Error::Truncation { lost: lost / total });
    }
    let g = resample_affine(f, -1.0 / t, [0.0, 0.0], Outside::Zero);
    let amp = t.abs().powf(-0.5 * grid.dim() as f64);
    Ok(g.map_with_point(|x, z| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        z * Complex64::from_polar(amp, -r2 / (4.0 * t))
    }))
}

/// Galilean boost at elapsed time `t`: `f(x − 2βt) e^{i(β·x − |β|²t)}`.
/// On the periodic box `β` should be a multiple of `π/L` per axis.
pub fn galilean(f: &Field, beta: [f64; 2], t: f64) -> Field {
    let shifted = resample_affine(f, 1.0, [-2.0 * beta[0] * t, -2.0 * beta[1] * t], Outside::Periodic);
    let b2 = beta[0] * beta[0] + beta[1] * beta[1];
    shifted.map_with_point(|x, z| z * Complex64::from_polar(1.0, beta[0] * x[0] + beta[1] * x[1] - b2 * t))
}

/// `λ^{−d/2} f(x/λ)`, zero where `x/λ` leaves the box.
pub fn rescale(f: &Field, lambda: f64) -> Field {
    let amp = lambda.powf(-0.5 * f.grid().dim() as f64);
    &resample_affine(f, 1.0 / lambda, [0.0, 0.0], Outside::Zero) * amp
}

/// `f(x − x₀)` on the periodic box.
pub fn translate(f: &Field, shift: [f64; 2]) -> Field {
    resample_affine(f, 1.0, [-shift[0], -shift[1]], Outside::Periodic)
}

/// `e^{iθ} f`.
pub fn rotate_phase(f: &Field, theta: f64) -> Field {
    f * Complex64::from_polar(1.0, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{gradient_norm_sq, l2_norm, make_grid};
    use std::f64::consts::PI;

    use crate::ground_state::tests::gs1;

    fn grid1() -> Arc<Grid> {
        make_grid(1, 16.0, 1024).unwrap()
    }

    #[test]
    fn advance_follows_the_pseudo_conformal_flow() {
        let a = Anchor { omega: 1.3, center: [2.0, -1.0], phase: 0.4 };
        let p = BubbleParams::pseudo_conformal(&a, 1.0, 0.9).unwrap();
        for t in [0.95, 0.5, -2.0] {
            let q = p.advance(t - 0.9).unwrap();
            let e = BubbleParams::pseudo_conformal(&a, 1.0, t).unwrap();
            for (x, y) in q.to_vec(2).iter().zip(e.to_vec(2)) {
                assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{q:?} vs {e:?}");
            }
        }
        assert!(p.advance(0.1).is_none());
    }

    #[test]
    fn advance_composes() {
        let p = BubbleParams { lambda: 0.7, alpha: [0.3, -0.2], beta: [0.5, 0.1], gamma: 0.4, theta: 1.1 };
        let once = p.advance(-0.8).unwrap();
        let twice = p.advance(-0.3).unwrap().advance(-0.5).unwrap();
        for (x, y) in once.to_vec(2).iter().zip(twice.to_vec(2)) {
            assert!((x - y).abs() < 1e-13 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn identity_parameters_give_q() {
        let gs = gs1();
        let g = grid1();
        let u = bubble(&BubbleParams::identity(), &gs, &g).unwrap();
        let q = Field::from_real(&g, &gs.q.sample_periodic(&g)).unwrap();
        assert!((&u - &q).linf() < 1e-15);
        let p = BubbleParams { theta: PI, ..BubbleParams::identity() };
        let v = bubble(&p, &gs, &g).unwrap();
        assert!((&v + &q).linf() < 1e-15);
    }

    #[test]
    fn scaling_is_an_isometry_and_doubles_gradient() {
        let gs = gs1();
        let g = grid1();
        let q = bubble(&BubbleParams::identity(), &gs, &g).unwrap();
        let half = bubble(&BubbleParams { lambda: 0.5, ..BubbleParams::identity() }, &gs, &g).unwrap();
        assert!((l2_norm(&half) - l2_norm(&q)).abs() < 1e-10);
        let ratio = (gradient_norm_sq(&half) / gradient_norm_sq(&q)).sqrt();
        assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
        let p = BubbleParams { lambda: 0.3, alpha: [1.0, 0.0], beta: [0.7, 0.0], gamma: 0.4, theta: 0.2 };
        let u = bubble(&p, &gs, &g).unwrap();
        assert!((l2_norm(&u) - gs.mass().sqrt()).abs() < 1e-10);
        let r = varrho_profile(&p, &gs, &g).unwrap();
        let rho_norm = gs.rho.integrate(|v, _, _| v * v).sqrt();
        assert!((l2_norm(&r) - rho_norm).abs() < 1e-10);
    }

    #[test]
    fn under_resolved_bubble_is_rejected() {
        let gs = gs1();
        let g = grid1();
        let p = BubbleParams { lambda: 0.1, ..BubbleParams::identity() };
        assert!(matches!(bubble(&p, &gs, &g), Err(Error::UnderResolved { .. })));
        assert!(matches!(varrho_profile(&p, &gs, &g), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn pseudo_conformal_unit_time() {
        let gs = gs1();
        let g = grid1();
        let a = Anchor { omega: 1.0, center: [0.0; 2], phase: 0.0 };
        let s = pseudo_conformal_s(&a, 1.0, 0.0, &gs, &g).unwrap();
        // Compare on the interior, where the periodic images are below 1e−10.
        let err = s
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| g.point(*i)[0].abs() < 8.0)
            .map(|(i, z)| {
                let x = g.point(i)[0];
                (z - gs.q.value(x.abs()) * Complex64::from_polar(1.0, -x * x / 4.0 + 1.0)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!((l2_norm(&s) - gs.mass().sqrt()).abs() < 1e-10);
        assert!(pseudo_conformal_s(&a, 1.0, 1.0, &gs, &g).is_err());
    }

    #[test]
    fn pseudo_conformal_gradient_formula() {
        // ‖∇S‖² = ‖∇Q‖²/(ωτ)² + ω²‖yQ‖²/4, so halving τ doubles ‖∇S‖ only
        // asymptotically.
        let gs = gs1();
        let g = grid1();
        let a = Anchor { omega: 1.3, center: [0.5, 0.0], phase: 0.2 };
        for tau in [1.0, 0.5, 0.25] {
            let s = pseudo_conformal_s(&a, 1.0, 1.0 - tau, &gs, &g).unwrap();
            let w = a.omega;
            let expected = gs.gradient_sq() / (w * tau).powi(2) + w * w * gs.sigma_sq() / 4.0;
            let got = gradient_norm_sq(&s);
            assert!((got / expected - 1.0).abs() < 1e-8, "{tau}: {got} vs {expected}");
        }
    }

    #[test]
    fn parameter_derivatives_match_finite_differences() {
        let gs = gs1();
        let g = grid1();
        let p = BubbleParams { lambda: 0.8, alpha: [0.3, 0.0], beta: [0.4, 0.0], gamma: 0.6, theta: 0.1 };
        let base = p.to_vec(1);
        for (k, dir) in Direction::all(1).into_iter().enumerate() {
            let analytic = parameter_derivative(&p, &gs.q, &g, dir).unwrap();
            let eps = 1e-5;
            let mut plus = base.clone();
            plus[k] += eps;
            let mut minus = base.clone();
            minus[k] -= eps;
            let up = bubble(&BubbleParams::from_slice(1, &plus), &gs, &g).unwrap();
            let down = bubble(&BubbleParams::from_slice(1, &minus), &gs, &g).unwrap();
            let fd = &(&up - &down) * (0.5 / eps);
            let err = l2_norm(&(&fd - &analytic)) / l2_norm(&analytic);
            assert!(err < 1e-6, "{dir:?}: {err}");
        }
    }

    #[test]
    fn sum_profiles_cases() {
        let gs = gs1();
        let g = grid1();
        assert_eq!(sum_profiles(&[], &gs, &g).unwrap().linf(), 0.0);
        let p = BubbleParams { lambda: 0.25, alpha: [-4.0, 0.0], ..BubbleParams::identity() };
        let one = sum_profiles(&[p], &gs, &g).unwrap();
        assert!((&one - &bubble(&p, &gs, &g).unwrap()).linf() == 0.0);
        let q = BubbleParams { alpha: [4.0, 0.0], ..p };
        let two = sum_profiles(&[p, q], &gs, &g).unwrap();
        assert!((l2_norm_sq(&two) - 2.0 * gs.mass()).abs() < 1e-10);
    }

    #[test]
    fn bubble_set_separation() {
        let set = BubbleSet::new(
            1,
            vec![
                Anchor { omega: 1.0, center: [4.0, 0.0], phase: 0.0 },
                Anchor { omega: 1.0, center: [-4.0, 0.0], phase: 0.0 },
            ],
        )
        .unwrap();
        assert!((set.sigma() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(set.anchors()[0].center[0], -4.0);
        let one = BubbleSet::new(1, vec![Anchor { omega: 1.0, center: [0.0; 2], phase: 0.0 }]).unwrap();
        assert!(one.sigma().is_infinite());
        // Anchors on a vertical line in 2-D force a rotated axis.
        let vertical = BubbleSet::new(
            2,
            vec![
                Anchor { omega: 1.0, center: [0.0, -3.0], phase: 0.0 },
                Anchor { omega: 1.0, center: [0.0, 3.0], phase: 0.0 },
            ],
        )
        .unwrap();
        assert!(vertical.axis()[1].abs() > 0.99);
        assert!(BubbleSet::new(
            1,
            vec![
                Anchor { omega: 1.0, center: [1.0, 0.0], phase: 0.0 },
                Anchor { omega: 2.0, center: [1.0, 0.0], phase: 0.0 },
            ]
        )
        .is_err());
    }

    #[test]
    fn pc_transform_gaussian_and_composition() {
        let g = make_grid(1, 16.0, 1024).unwrap();
        let f = Field::from_fn(&g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0] * (-x[0] * x[0]).exp()));
        let t = -0.5;
        let out = pc_transform(&f, t, 1e-12).unwrap();
        assert!((l2_norm(&out) - l2_norm(&f)).abs() < 1e-9);
        let gauss = Field::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        let tg = pc_transform(&gauss, t, 1e-12).unwrap();
        let err = tg
            .values()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let x = g.point(i)[0];
                let exact = Complex64::from_polar(t.abs().powf(-0.5) * (-x * x / (t * t)).exp(), -x * x / (4.0 * t));
                (z - exact).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        // t then −1/t is the reflection x ↦ −x.
        let back = pc_transform(&out, -1.0 / t, 1e-12).unwrap();
        let reflected = f.map_with_point(|_, z| z);
        let n = g.points();
        let err = (1..n)
            .map(|j| (back.values()[j] - reflected.values()[n - j]).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn pc_transform_reports_truncation() {
        let g = make_grid(1, 8.0, 256).unwrap();
        let wide = Field::from_real_fn(&g, |x| (-x[0] * x[0] / 16.0).exp());
        assert!(matches!(pc_transform(&wide, -4.0, 1e-10), Err(Error::Truncation { .. })));
        assert!(pc_transform(&wide, 0.0, 1e-10).is_err());
    }

    #[test]
    fn symmetry_maps_preserve_mass() {
        let gs = gs1();
        let g = grid1();
        let q = bubble(&BubbleParams::identity(), &gs, &g).unwrap();
        let beta = [PI / 16.0 * 4.0, 0.0];
        let boosted = galilean(&q, beta, 0.3);
        assert!((l2_norm(&boosted) - l2_norm(&q)).abs() < 1e-10);
        let shifted = translate(&q, [1.5, 0.0]);
        let direct = bubble(&BubbleParams { alpha: [1.5, 0.0], ..BubbleParams::identity() }, &gs, &g).unwrap();
        assert!((&shifted - &direct).linf() < 1e-10);
        let scaled = rescale(&q, 0.5);
        let direct = bubble(&BubbleParams { lambda: 0.5, ..BubbleParams::identity() }, &gs, &g).unwrap();
        assert!((&scaled - &direct).linf() < 1e-6);
        assert!((&rotate_phase(&q, PI) + &q).linf() < 1e-15);
    }
}
