//! Conservation laws, localized masses, the energy-variation formula, the
//! generalized energy `I`, the difference functional `D` and rate fits.

use std::fmt::Write as _;

use crate::fit::{linear_fit, power_fit, LinearFit};
use crate::ground_state::{critical_power, pow_4d};
use crate::modulation::{Decomposition, Localizers};
use crate::noise::NoiseOnGrid;
use crate::spectral::{gradient, gradient_norm_sq, l2_norm_sq, Field, Grid};
use crate::{Error, Result};

pub fn mass(u: &Field) -> f64 {
    l2_norm_sq(u)
}

/// `∫ |u|^{2+4/d}`.
pub fn critical_lp(u: &Field) -> f64 {
    let d = u.grid().dim();
    u.values().iter().map(|z| z.norm_sqr() * pow_4d(z.norm(), d)).sum::<f64>() * u.grid().cell_volume()
}

/// `E = ½‖∇u‖² − d/(2d+4) ∫|u|^{2+4/d}`.
pub fn energy(u: &Field) -> f64 {
    let d = u.grid().dim() as f64;
    0.5 * gradient_norm_sq(u) - d / (2.0 * d + 4.0) * critical_lp(u)
}

/// `Im ∫ ∇u ū`, one entry per axis.
pub fn momentum(u: &Field) -> Vec<f64> {
    let vol = u.grid().cell_volume();
    gradient(u)
        .iter()
        .map(|g| g.values().iter().zip(u.values()).map(|(a, b)| (a * b.conj()).im).sum::<f64>() * vol)
        .collect()
}

/// `∫ |u|² Φ_j` for every localizer.
pub fn localized_mass(u: &Field, loc: &Localizers) -> Result<Vec<f64>> {
    if loc.phi.iter().any(|p| p.len() != u.grid().len()) {
        return Err(Error::GridMismatch);
    }
    Ok(loc.phi.iter().map(|p| crate::spectral::weighted_mass(u, p)).collect())
}

/// Value of `dE/dt` along the noisy flow at time `t`:
///
/// ```text
/// −2 Σ_k B_k Re∫ ∇²φ_k(∇u, ∇ū) + ½ Σ_k B_k ∫ Δ²φ_k |u|²
///   + 2/(d+2) Σ_k B_k ∫ Δφ_k |u|^{2+4/d} − Im∫ ∇(|∇a|²)·∇u ū,   a = Σ_k φ_k B_k.
/// ```
pub fn energy_rate(u: &Field, noise: &NoiseOnGrid, t: f64) -> Result<f64> {
    if !u.grid().same_as(&noise.grid) {
        return Err(Error::GridMismatch);
    }
    let b = noise.model.path_values(t)?;
    if b.is_empty() {
        return Ok(0.0);
    }
    let grid = u.grid();
    let d = grid.dim();
    let n = grid.len();
    let vol = grid.cell_volume();
    let du = gradient(u);
    let dims = d as f64;

    let mut hess = vec![vec![vec![0.0; n]; d]; d];
    let mut grad_a = vec![vec![0.0; n]; d];
    let mut bilap = vec![0.0; n];
    let mut lap = vec![0.0; n];
    for (k, &bk) in b.iter().enumerate() {
        for i in 0..d {
            grad_a[i].iter_mut().zip(&noise.grad[k][i]).for_each(|(a, v)| *a += bk * v);
            for j in 0..d {
                hess[i][j].iter_mut().zip(&noise.hessian[k][i][j]).for_each(|(a, v)| *a += bk * v);
            }
        }
        bilap.iter_mut().zip(&noise.bilap[k]).for_each(|(a, v)| *a += bk * v);
        lap.iter_mut().zip(&noise.lap[k]).for_each(|(a, v)| *a += bk * v);
    }

    let mut total = 0.0;
    for p in 0..n {
        let z = u.values()[p];
        let m2 = z.norm_sqr();
        let mut hessian_term = 0.0;
        let mut drift = 0.0;
        for i in 0..d {
            for j in 0..d {
                hessian_term += hess[i][j][p] * (du[i].values()[p] * du[j].values()[p].conj()).re;
            }
            // ∂_i |∇a|² = 2 Σ_j ∂_j a ∂_i∂_j a.
            let g: f64 = (0..d).map(|j| 2.0 * grad_a[j][p] * hess[i][j][p]).sum();
            drift += g * (du[i].values()[p] * z.conj()).im;
        }
        total += -2.0 * hessian_term + 0.5 * bilap[p] * m2 + 2.0 / (dims + 2.0) * lap[p] * m2 * pow_4d(z.norm(), d)
            - drift;
    }
    Ok(total * vol)
}

/// Quintic `p(s)` on `[0, 1]` with `p, p', p''` prescribed at both ends.
fn hermite_quintic(left: [f64; 3], right: [f64; 3]) -> [f64; 6] {
    let (c0, c1, c2) = (left[0], left[1], 0.5 * left[2]);
    // Remaining c3, c4, c5 from p(1), p'(1), p''(1).
    let r0 = right[0] - c0 - c1 - c2;
    let r1 = right[1] - c1 - 2.0 * c2;
    let r2 = right[2] - 2.0 * c2;
    let c3 = 10.0 * r0 - 4.0 * r1 + 0.5 * r2;
    let c4 = -15.0 * r0 + 7.0 * r1 - r2;
    let c5 = 6.0 * r0 - 3.0 * r1 + 0.5 * r2;
    [c0, c1, c2, c3, c4, c5]
}

fn poly_derivs(c: &[f64; 6], s: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    for (k, &ck) in c.iter().enumerate() {
        let kf = k as f64;
        v[0] += ck * s.powi(k as i32);
        if k >= 1 {
            v[1] += kf * ck * s.powi(k as i32 - 1);
        }
        if k >= 2 {
            v[2] += kf * (kf - 1.0) * ck * s.powi(k as i32 - 2);
        }
    }
    v
}

/// Radial weight `χ(x) = ψ(|x|)` with `ψ'(r) = r` on `[0, 1]` and
/// `ψ'(r) = 2 − e^{−r}` on `[2, ∞)`. On `(1, 2)`, `ψ''` stays at 1 up to a
/// knot `1 + x₀` and then falls along a monotone cubic to `e^{−2}`, with slope
/// `−e^{−2}` at `r = 2`; `x₀` is fixed by `∫₁² ψ'' = 1 − e^{−2}`. A positive,
/// non-increasing `ψ''` makes `ψ'` concave, hence `ψ'/r ≥ ψ''`.
#[derive(Clone, Debug, PartialEq)]
pub struct MorawetzWeight {
    pub a: f64,
    /// Start of the transition, `1 + x₀`.
    knot: f64,
    /// Transition width `1 − x₀`.
    width: f64,
    /// End slope of the unit cubic `S(y) = (3−m)y² + (m−2)y³`.
    m: f64,
}

impl MorawetzWeight {
    pub const DEFAULT_A: f64 = 10.0;

    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("Morawetz scale A = {a} must be positive")));
        }
        let e2 = (-2.0f64).exp();
        let q = e2 / (1.0 - e2);
        // w/2 − q w²/12 = q, smaller root.
        let width = (6.0 - (36.0 - 48.0 * q * q).sqrt()) / (2.0 * q);
        Ok(MorawetzWeight { a, knot: 2.0 - width, width, m: q * width })
    }

    /// `[ψ'(r), ψ''(r), ψ'''(r)]`.
    pub fn psi_derivatives(&self, r: f64) -> [f64; 3] {
        if r <= self.knot {
            [r, 1.0, 0.0]
        } else if r >= 2.0 {
            let e = (-r).exp();
            [2.0 - e, e, -e]
        } else {
            let drop = (-2.0f64).exp() - 1.0;
            let (w, m) = (self.width, self.m);
            let y = (r - self.knot) / w;
            let s = (3.0 - m) * y * y + (m - 2.0) * y.powi(3);
            let ds = 2.0 * (3.0 - m) * y + 3.0 * (m - 2.0) * y * y;
            let int_s = (3.0 - m) * y.powi(3) / 3.0 + (m - 2.0) * y.powi(4) / 4.0;
            [self.knot + w * (y + drop * int_s), 1.0 + drop * s, drop * ds / w]
        }
    }

    /// `∇χ_A(x) = A ψ'(|x|/A) x/|x|`.
    pub fn grad_chi_a(&self, x: [f64; 2]) -> [f64; 2] {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r == 0.0 {
            return [0.0; 2];
        }
        let s = self.a * self.psi_derivatives(r / self.a)[0] / r;
        [s * x[0], s * x[1]]
    }

    /// `(min_r ψ'(r)/r − ψ''(r), max_r |ψ'''/ψ''|)` over `r ∈ (0, r_max]`.
    pub fn check_inequalities(&self, r_max: f64, samples: usize) -> (f64, f64) {
        let mut min_gap = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        for i in 1..=samples {
            let r = r_max * i as f64 / samples as f64;
            let p = self.psi_derivatives(r);
            min_gap = min_gap.min(p[0] / r - p[1]);
            max_ratio = max_ratio.max((p[2] / p[1]).abs());
        }
        (min_gap, max_ratio)
    }
}

/// Localized coercivity weight `φ(x) = e^{g(|x|)}` with `g = 0` on `[0, 1]`,
/// `g = −r` on `[2, ∞)` and a quintic bridge for `g`; `φ_A(x) = φ(x/A)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityWeight {
    pub a: f64,
    bridge: [f64; 6],
}

impl CoercivityWeight {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("coercivity scale A = {a} must be positive")));
        }
        Ok(CoercivityWeight { a, bridge: hermite_quintic([0.0; 3], [-2.0, -1.0, 0.0]) })
    }

    /// `[g(r), g'(r)]` so that `∇φ/φ = g'`.
    pub fn log_profile(&self, r: f64) -> [f64; 2] {
        if r <= 1.0 {
            [0.0, 0.0]
        } else if r >= 2.0 {
            [-r, -1.0]
        } else {
            let v = poly_derivs(&self.bridge, r - 1.0);
            [v[0], v[1]]
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt() / self.a;
        self.log_profile(r)[0].exp()
    }

    pub fn sample(&self, grid: &Grid, center: [f64; 2]) -> Vec<f64> {
        let period = 2.0 * grid.extent();
        grid.points_iter().map(|x| self.value(min_image(x, center, grid.dim(), period))).collect()
    }
}

/// Localized quadratic form `∫(|f|² + |∇f|²)φ_A − (1+4/d)Q^{4/d}f₁² − Q^{4/d}f₂²`
/// and the weighted norm `∫(|∇f|² + |f|²)φ_A`.
pub fn localized_coercivity(f: &Field, q: &[f64], weight: &[f64]) -> (f64, f64) {
    let grid = f.grid();
    let d = grid.dim();
    let vol = grid.cell_volume();
    let g = gradient(f);
    let mut form = 0.0;
    let mut norm = 0.0;
    for p in 0..grid.len() {
        let z = f.values()[p];
        let grad2: f64 = g.iter().map(|gi| gi.values()[p].norm_sqr()).sum();
        let n = (z.norm_sqr() + grad2) * weight[p];
        let qp = pow_4d(q[p], d);
        norm += n;
        form += n - (1.0 + 4.0 / d as f64) * qp * z.re * z.re - qp * z.im * z.im;
    }
    (form * vol, norm * vol)
}

fn min_image(x: [f64; 2], c: [f64; 2], dim: usize, period: f64) -> [f64; 2] {
    let mut o = [0.0; 2];
    for i in 0..dim {
        let v = x[i] - c[i];
        o[i] = v - period * (v / period).round();
    }
    o
}

/// `I = ½∫|∇R|² + ½Σ_j λ_j^{−2}∫|R|²Φ_j − Re∫[F(u) − F(U) − f(U)R̄]
///     + Σ_j γ_j/(2λ_j) Im∫ ∇χ_A((x−α_j)/λ_j)·∇R R̄ Φ_j`
/// with `F(v) = d/(2d+4)|v|^{2+4/d}`, `f(v) = |v|^{4/d}v`, `U = u − R`.
pub fn generalized_energy(u: &Field, dec: &Decomposition, loc: &Localizers, weight: &MorawetzWeight) -> Result<f64> {
    let r = &dec.remainder;
    if !u.same_grid(r) {
        return Err(Error::GridMismatch);
    }
    if loc.len() != dec.params.len() {
        return Err(Error::InvalidParameter("localizer and bubble counts differ".into()));
    }
    let grid = u.grid();
    let d = grid.dim();
    let dims = d as f64;
    let vol = grid.cell_volume();
    let period = 2.0 * grid.extent();
    let big_f = |m: f64| dims / (2.0 * dims + 4.0) * m * m * pow_4d(m, d);

    let mut total = 0.5 * gradient_norm_sq(r);
    for (p, phi) in dec.params.iter().zip(&loc.phi) {
        total += 0.5 / (p.lambda * p.lambda) * crate::spectral::weighted_mass(r, phi);
    }
    let mut nonlinear = 0.0;
    for ((zu, zr), _) in u.values().iter().zip(r.values()).zip(0..) {
        let zb = zu - zr;
        let fu = zb * pow_4d(zb.norm(), d);
        nonlinear += big_f(zu.norm()) - big_f(zb.norm()) - (fu * zr.conj()).re;
    }
    total -= nonlinear * vol;

    let gr = gradient(r);
    for (p, phi) in dec.params.iter().zip(&loc.phi) {
        let mut acc = 0.0;
        for (idx, x) in grid.points_iter().enumerate() {
            if phi[idx] == 0.0 {
                continue;
            }
            let o = min_image(x, p.alpha, d, period);
            let g = weight.grad_chi_a([o[0] / p.lambda, o[1] / p.lambda]);
            let zr = r.values()[idx];
            let dot: crate::Complex64 = (0..d).map(|i| gr[i].values()[idx] * g[i]).sum();
            acc += (dot * zr.conj()).im * phi[idx];
        }
        total += p.gamma / (2.0 * p.lambda) * acc * vol;
    }
    Ok(total)
}

/// `D = ‖∇w‖² + Σ_j λ_j^{−2}‖wΦ_j‖²`.
pub fn difference_functional(w: &Field, loc: &Localizers, lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() != loc.len() {
        return Err(Error::InvalidParameter("one λ per localizer is required".into()));
    }
    if loc.phi.iter().any(|p| p.len() != w.grid().len()) {
        return Err(Error::GridMismatch);
    }
    let mut d = gradient_norm_sq(w);
    for (phi, lam) in loc.phi.iter().zip(lambdas) {
        let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
        d += crate::spectral::weighted_mass(w, &sq) / (lam * lam);
    }
    Ok(d)
}

/// Per-bubble linear fit of `λ_j(t) = ω_j (T − t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BubbleRate {
    pub omega: f64,
    pub blowup_time: f64,
    pub fit: LinearFit,
    /// RMS deviation of `λ_j` from the fitted line.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub bubbles: Vec<BubbleRate>,
    /// Mean of the per-bubble `T` estimates.
    pub blowup_time: f64,
    /// `‖R‖ ≈ C (T − t)^p` in log-log space, when remainder norms were given.
    pub remainder: Option<LinearFit>,
}

/// Minimum number of samples for [`fit_blowup_rate`].
pub const MIN_RATE_SAMPLES: usize = 10;

/// Fits every `λ_j(t)` to a line and, optionally, `log‖R‖` against
/// `log(T_est − t)`.
pub fn fit_blowup_rate(times: &[f64], lambdas: &[Vec<f64>], remainder_norms: Option<&[f64]>) -> Result<RateFit> {
    if times.len() < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "rate fit needs {MIN_RATE_SAMPLES} samples in the window, got {}",
            times.len()
        )));
    }
    if lambdas.iter().any(|l| l.len() != times.len()) {
        return Err(Error::InvalidParameter("λ series and times differ in length".into()));
    }
    let mut bubbles = Vec::with_capacity(lambdas.len());
    for l in lambdas {
        let fit = linear_fit(times, l)?;
        let omega = -fit.slope;
        if !(omega > 0.0) {
            return Err(Error::Degenerate(format!("λ does not decrease toward blow-up (slope {})", fit.slope)));
        }
        let residual =
            (times.iter().zip(l).map(|(t, v)| (v - fit.predict(*t)).powi(2)).sum::<f64>() / times.len() as f64).sqrt();
        bubbles.push(BubbleRate { omega, blowup_time: fit.intercept / omega, fit, residual });
    }
    let blowup_time = bubbles.iter().map(|b| b.blowup_time).sum::<f64>() / bubbles.len().max(1) as f64;
    let remainder = match remainder_norms {
        Some(norms) => {
            let tau: Vec<f64> = times.iter().map(|t| blowup_time - t).collect();
            Some(power_fit(&tau, norms)?)
        }
        None => None,
    };
    Ok(RateFit { bubbles, blowup_time, remainder })
}

/// Indices of samples inside the rate-fit window: the decade of `T − t`
/// whose lower end is `max(8h/ω_min, min_i (T − t_i))`.
pub fn rate_window(times: &[f64], blowup_time: f64, omega_min: f64, spacing: f64) -> Vec<usize> {
    let tau_min = times.iter().map(|t| blowup_time - t).fold(f64::INFINITY, f64::min);
    let lo = (8.0 * spacing / omega_min).max(tau_min);
    let hi = 10.0 * lo * (1.0 + 1e-12);
    (0..times.len())
        .filter(|&i| {
            let tau = blowup_time - times[i];
            tau >= lo * (1.0 - 1e-12) && tau <= hi
        })
        .collect()
}

/// One line of the diagnostics stream.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub localized_mass: Vec<f64>,
    /// `I`, `D`, `Mod` and `dE/dt`; `NaN` when not computed.
    pub generalized_energy: f64,
    pub difference: f64,
    pub modulation: f64,
    pub energy_rate: f64,
    pub scal: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `λ_j / (ω_j (T − t))`.
    pub rate_ratio: Vec<f64>,
}

impl DiagnosticsRow {
    /// Row with the conservation quantities filled and everything else `NaN`.
    pub fn basic(t: f64, u: &Field, bubbles: usize) -> Self {
        DiagnosticsRow {
            t,
            mass: mass(u),
            energy: energy(u),
            momentum: momentum(u),
            localized_mass: vec![f64::NAN; bubbles],
            generalized_energy: f64::NAN,
            difference: f64::NAN,
            modulation: f64::NAN,
            energy_rate: f64::NAN,
            scal: vec![f64::NAN; bubbles],
            lambda: vec![f64::NAN; bubbles],
            rate_ratio: vec![f64::NAN; bubbles],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.mass.is_finite() && self.energy.is_finite() && self.momentum.iter().all(|v| v.is_finite())
    }
}

/// Column order: `t, mass, energy, mom_x[, mom_y], I, D, Mod, dEdt`, then per
/// bubble `mass_j, scal_j, lambda_j, rate_j`.
pub fn diagnostics_header(dim: usize, bubbles: usize) -> String {
    let mut s = String::from("t,mass,energy,mom_x");
    if dim == 2 {
        s.push_str(",mom_y");
    }
    s.push_str(",I,D,Mod,dEdt");
    for j in 1..=bubbles {
        write!(s, ",mass_{j},scal_{j},lambda_{j},rate_{j}").unwrap();
    }
    s
}

/// CSV text of a diagnostics stream, every value in round-trip `{:e}` form.
pub fn diagnostics_csv(dim: usize, bubbles: usize, rows: &[DiagnosticsRow]) -> String {
    let mut s = diagnostics_header(dim, bubbles);
    s.push('\n');
    for r in rows {
        write!(s, "{:e},{:e},{:e}", r.t, r.mass, r.energy).unwrap();
        for m in &r.momentum {
            write!(s, ",{m:e}").unwrap();
        }
        write!(s, ",{:e},{:e},{:e},{:e}", r.generalized_energy, r.difference, r.modulation, r.energy_rate).unwrap();
        for j in 0..bubbles {
            write!(s, ",{:e},{:e},{:e},{:e}", r.localized_mass[j], r.scal[j], r.lambda[j], r.rate_ratio[j]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// `E(S) = ω²‖yQ‖²/8` for one pseudo-conformal bubble.
pub fn pseudo_conformal_energy(omega: f64, sigma_sq: f64) -> f64 {
    omega * omega * sigma_sq / 8.0
}

/// `2 + 4/d`, the critical Lebesgue exponent.
pub fn critical_exponent(dim: usize) -> f64 {
    critical_power(dim) + 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::tests::gs1;
    use crate::modulation::{decompose, DecomposeOptions};
    use crate::noise::{make_flat_weights, sample_brownian, NoiseModel, WeightSpec};
    use crate::profiles::{pseudo_conformal_s, sum_profiles, Anchor, BubbleParams, BubbleSet};
    use crate::spectral::make_grid;
    use crate::Complex64;
    use std::sync::Arc;

    fn q_field(grid: &Arc<Grid>) -> Field {
        Field::from_real(grid, &gs1().q.sample_periodic(grid)).unwrap()
    }

    #[test]
    fn ground_state_energy_and_momentum() {
        let grid = make_grid(1, 16.0, 1024).unwrap();
        let q = q_field(&grid);
        assert!(energy(&q).abs() <= 1e-9, "{}", energy(&q));
        let beta = 3.0 * std::f64::consts::PI / 16.0;
        let boosted = q.map_with_point(|x, z| z * Complex64::from_polar(1.0, beta * x[0]));
        let mom = momentum(&boosted);
        assert!((mom[0] - beta * gs1().mass()).abs() < 1e-10);
    }

    #[test]
    fn pseudo_conformal_energy_matches() {
        let gs = gs1();
        let grid = make_grid(1, 16.0, 2048).unwrap();
        for (omega, tau) in [(1.0, 0.5), (1.5, 0.3)] {
            let s = pseudo_conformal_s(&Anchor { omega, center: [0.5, 0.0], phase: 0.2 }, tau, 0.0, &gs, &grid).unwrap();
            let e = energy(&s);
            assert!((e - pseudo_conformal_energy(omega, gs.sigma_sq())).abs() < 1e-8, "{e}");
        }
    }

    #[test]
    fn localized_masses_partition() {
        let gs = gs1();
        let grid = make_grid(1, 16.0, 2048).unwrap();
        let set = BubbleSet::new(
            1,
            vec![Anchor { omega: 1.0, center: [-4.0, 0.0], phase: 0.0 }, Anchor { omega: 1.0, center: [4.0, 0.0], phase: 1.0 }],
        )
        .unwrap();
        let loc = Localizers::new(&set, &grid).unwrap();
        // λ = 0.1: the tails reaching the partition transition are negligible.
        let u = crate::profiles::sum_pseudo_conformal(&set, 1.0, 0.9, &gs, &grid).unwrap();
        let lm = localized_mass(&u, &loc).unwrap();
        assert!((lm.iter().sum::<f64>() - mass(&u)).abs() <= 1e-12 * mass(&u));
        for m in &lm {
            assert!((m - gs.mass()).abs() < 1e-8);
        }
        let one = Localizers::new(&BubbleSet::new(1, vec![set.anchors()[0]]).unwrap(), &grid).unwrap();
        assert!((localized_mass(&u, &one).unwrap()[0] - mass(&u)).abs() < 1e-14);
    }

    fn noise_on(grid: &Arc<Grid>) -> NoiseOnGrid {
        let weights = make_flat_weights(
            grid,
            WeightSpec { anchors: vec![[0.0, 0.0]], flatness: 5, envelope: 2.0, scale: 4.0, amplitude: 0.3, modes: 2 },
        )
        .unwrap();
        let paths = sample_brownian(11, 1.0, 1e-3, 2).unwrap();
        NoiseOnGrid::new(grid, Arc::new(NoiseModel { weights, paths: Some(paths) })).unwrap()
    }

    #[test]
    fn energy_rate_zero_without_noise() {
        let grid = make_grid(1, 8.0, 128).unwrap();
        let ng = NoiseOnGrid::new(&grid, Arc::new(NoiseModel::none(1))).unwrap();
        assert_eq!(energy_rate(&q_field(&grid), &ng, 0.5).unwrap(), 0.0);
    }

    /// Frozen-path oracle: with `B` held at its value at `t`, the noisy flow
    /// is autonomous and the formula must match a centered difference of `E`.
    #[test]
    fn energy_rate_matches_frozen_flow() {
        use crate::evolution::Propagator;
        let gs = gs1();
        let grid = make_grid(1, 16.0, 1024).unwrap();
        let ng = noise_on(&grid);
        let t = 0.4;
        let frozen_b = ng.model.path_values(t).unwrap();
        // Rebuild the paths as constants equal to B(t).
        let csv = crate::noise::BrownianPaths::constant(&frozen_b, 1.0, 0.5);
        let frozen = Arc::new(
            NoiseOnGrid::new(&grid, Arc::new(NoiseModel { weights: ng.model.weights.clone(), paths: Some(csv) })).unwrap(),
        );
        let u0 = pseudo_conformal_s(&Anchor { omega: 1.0, center: [0.3, 0.0], phase: 0.0 }, 1.5, 0.0, &gs, &grid).unwrap();
        let mut p = Propagator::new(&grid, Some(frozen.clone())).unwrap();
        let h = 1e-3;
        let steps = 20;
        let mut plus = u0.clone();
        let mut minus = u0.clone();
        for i in 0..steps {
            plus = p.step(&plus, 0.1 + i as f64 * h / steps as f64, h / steps as f64).unwrap();
            minus = p.step(&minus, 0.1 - i as f64 * h / steps as f64, -h / steps as f64).unwrap();
        }
        let fd = (energy(&plus) - energy(&minus)) / (2.0 * h);
        let formula = energy_rate(&u0, &frozen, 0.1).unwrap();
        assert!(formula.abs() > 1e-3, "{formula}");
        assert!((fd - formula).abs() <= 1e-5 * formula.abs().max(1.0), "{fd} vs {formula}");
    }

    #[test]
    fn morawetz_weight_inequalities() {
        let w = MorawetzWeight::new(10.0).unwrap();
        let (gap, ratio) = w.check_inequalities(20.0, 200_000);
        assert!(gap >= -1e-14, "{gap}");
        assert!(ratio.is_finite() && ratio < 20.0, "{ratio}");
        // ψ' and ψ'' continuous everywhere, ψ''' bounded.
        for r in [1.0, w.knot, 2.0] {
            let a = w.psi_derivatives(r - 1e-12);
            let b = w.psi_derivatives(r + 1e-12);
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
        // ψ' is the integral of ψ''.
        let n = 100_000;
        let integral: f64 = (0..n).map(|i| w.psi_derivatives(1.0 + (i as f64 + 0.5) / n as f64)[1]).sum::<f64>() / n as f64;
        assert!((integral - (1.0 - (-2.0f64).exp())).abs() < 1e-9);
        let g = w.grad_chi_a([5.0, 0.0]);
        assert!((g[0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn coercivity_weight_shape() {
        let c = CoercivityWeight::new(1.0).unwrap();
        for i in 0..=4000 {
            let r = i as f64 / 1000.0;
            let v = c.value([r, 0.0]);
            assert!(v > 0.0 && v <= 1.0);
            let g = c.log_profile(r)[1];
            assert!((-3.5..=0.0).contains(&g), "{g}");
        }
        assert_eq!(c.value([0.5, 0.0]), 1.0);
        assert!((c.value([3.0, 0.0]) - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn generalized_energy_vanishes_at_zero_remainder() {
        let gs = gs1();
        let grid = make_grid(1, 16.0, 512).unwrap();
        let p = vec![BubbleParams { lambda: 0.8, alpha: [0.2, 0.0], beta: [0.0; 2], gamma: 0.5, theta: 0.1 }];
        let u = sum_profiles(&p, &gs, &grid).unwrap();
        let dec = decompose(&u, &p, &gs, &DecomposeOptions::default()).unwrap();
        let set = BubbleSet::new(1, vec![Anchor { omega: 1.0, center: [0.2, 0.0], phase: 0.0 }]).unwrap();
        let loc = Localizers::new(&set, &grid).unwrap();
        let w = MorawetzWeight::new(MorawetzWeight::DEFAULT_A).unwrap();
        assert_eq!(generalized_energy(&u, &dec, &loc, &w).unwrap(), 0.0);
    }

    #[test]
    fn difference_functional_examples() {
        let gs = gs1();
        let grid = make_grid(1, 16.0, 1024).unwrap();
        let set = BubbleSet::new(
            1,
            vec![Anchor { omega: 1.0, center: [-4.0, 0.0], phase: 0.0 }, Anchor { omega: 1.0, center: [4.0, 0.0], phase: 0.0 }],
        )
        .unwrap();
        let loc = Localizers::new(&set, &grid).unwrap();
        assert_eq!(difference_functional(&Field::zeros(&grid), &loc, &[1.0, 1.0]).unwrap(), 0.0);
        let u1 = crate::profiles::bubble(
            &BubbleParams { lambda: 1.0, alpha: [-4.0, 0.0], beta: [0.0; 2], gamma: 0.0, theta: 0.0 },
            &gs,
            &grid,
        )
        .unwrap();
        let d = difference_functional(&u1, &loc, &[1.0, 1.0]).unwrap();
        let direct = gradient_norm_sq(&u1)
            + loc.phi.iter().map(|p| crate::spectral::weighted_mass(&u1, &p.iter().map(|v| v * v).collect::<Vec<_>>())).sum::<f64>();
        assert!((d - direct).abs() < 1e-12);
        let half = difference_functional(&u1, &loc, &[0.5, 0.5]).unwrap();
        assert!(((half - gradient_norm_sq(&u1)) - 4.0 * (d - gradient_norm_sq(&u1))).abs() < 1e-10);
        // Quadratic homogeneity.
        let scaled = difference_functional(&(&u1 * 3.0), &loc, &[1.0, 1.0]).unwrap();
        assert!((scaled - 9.0 * d).abs() <= 1e-12 * scaled);
    }

    #[test]
    fn rate_fit_on_exact_data() {
        let times: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let lam1: Vec<f64> = times.iter().map(|t| 1.0 * (1.5 - t)).collect();
        let lam2: Vec<f64> = times.iter().map(|t| 2.0 * (1.5 - t)).collect();
        let rnorm: Vec<f64> = times.iter().map(|t| 0.3 * (1.5 - t).powi(3)).collect();
        let fit = fit_blowup_rate(&times, &[lam1, lam2], Some(&rnorm)).unwrap();
        assert!((fit.blowup_time - 1.5).abs() < 1e-8);
        assert!((fit.bubbles[0].omega - 1.0).abs() < 1e-8 && (fit.bubbles[1].omega - 2.0).abs() < 1e-8);
        assert!((fit.remainder.unwrap().slope - 3.0).abs() < 1e-8);
        assert!(fit_blowup_rate(&times[..5], &[vec![1.0; 5]], None).is_err());
    }

    #[test]
    fn rate_window_selects_a_decade() {
        let times: Vec<f64> = (0..100).map(|i| 0.01 * i as f64).collect();
        let idx = rate_window(&times, 1.0, 1.0, 0.001);
        let taus: Vec<f64> = idx.iter().map(|&i| 1.0 - times[i]).collect();
        let lo = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = taus.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 0.01).abs() < 1e-12 && hi <= 0.1 + 1e-12);
    }

    #[test]
    fn csv_is_stable() {
        let grid = make_grid(1, 8.0, 64).unwrap();
        let u = q_field(&grid);
        let rows = vec![DiagnosticsRow::basic(0.25, &u, 2)];
        let a = diagnostics_csv(1, 2, &rows);
        assert_eq!(a, diagnostics_csv(1, 2, &rows));
        assert!(a.starts_with("t,mass,energy,mom_x,I,D,Mod,dEdt,mass_1,scal_1,lambda_1,rate_1,mass_2"));
        assert_eq!(a.lines().nth(1).unwrap().split(',').count(), 16);
        assert!(rows[0].is_finite());
    }
}
