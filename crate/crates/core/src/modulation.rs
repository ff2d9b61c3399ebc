//! Localizers, the geometric decomposition `u = Σ_j U_j + R`, modulation
//! residuals, renormalized remainders, unstable-direction scalar products and
//! interaction overlaps.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::evolution::Checkpoint;
use crate::ground_state::{DirectionFields, GroundState};
use crate::profiles::{bubble, parameter_derivative, synthesize, BubbleParams, BubbleSet, Direction, Local};
use crate::spectral::{gradient, inner, l2_norm, resample_affine, Field, Grid, Outside};
use crate::{Complex64, Error, Result};

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` on `[0, 1]` and its derivatives.
fn smoothstep(s: f64) -> [f64; 3] {
    if s <= 0.0 {
        [0.0; 3]
    } else if s >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let s2 = s * s;
        [s2 * s * (10.0 - 15.0 * s + 6.0 * s2), 30.0 * s2 * (1.0 - s).powi(2), 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)]
    }
}

/// Partition of unity `Φ_j` along the separating axis `v₁`.
#[derive(Clone, Debug)]
pub struct Localizers {
    pub sigma: f64,
    pub axis: [f64; 2],
    /// `Φ_j` samples.
    pub phi: Vec<Vec<f64>>,
    /// `∂_i Φ_j` as `grad[j][i]`.
    pub grad: Vec<Vec<Vec<f64>>>,
    pub lap: Vec<Vec<f64>>,
}

impl Localizers {
    /// `Φ(x) = 1` for `x·v₁ ≤ 4σ`, `0` for `x·v₁ ≥ 8σ`, quintic bridge between;
    /// `Φ₁ = Φ(·−x₁)`, `Φ_j = Φ(·−x_j) − Φ(·−x_{j−1})`, `Φ_K = 1 − Φ(·−x_{K−1})`.
    pub fn new(set: &BubbleSet, grid: &Arc<Grid>) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::InvalidParameter("localizers need at least one bubble".into()));
        }
        if set.dim() != grid.dim() {
            return Err(Error::InvalidParameter("bubble set and grid dimensions differ".into()));
        }
        let k = set.len();
        let d = grid.dim();
        let n = grid.len();
        let v1 = set.axis();
        let sigma = set.sigma();
        if k == 1 {
            return Ok(Localizers {
                sigma,
                axis: v1,
                phi: vec![vec![1.0; n]],
                grad: vec![vec![vec![0.0; n]; d]],
                lap: vec![vec![0.0; n]],
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::Degenerate("anchors are not separated along v₁".into()));
        }
        let proj: Vec<f64> = set.anchors().iter().map(|a| a.center[0] * v1[0] + a.center[1] * v1[1]).collect();
        // base[m] = (B, B', B'') of Φ(· − x_m) along ξ = x·v₁.
        let base = |xi: f64, m: usize| -> [f64; 3] {
            let w = 4.0 * sigma;
            let s = smoothstep((xi - proj[m] - w) / w);
            [1.0 - s[0], -s[1] / w, -s[2] / (w * w)]
        };
        let mut phi = vec![vec![0.0; n]; k];
        let mut dxi = vec![vec![0.0; n]; k];
        let mut lap = vec![vec![0.0; n]; k];
        for idx in 0..n {
            let x = grid.point(idx);
            let xi = x[0] * v1[0] + x[1] * v1[1];
            for j in 0..k {
                let upper = if j + 1 < k { base(xi, j) } else { [1.0, 0.0, 0.0] };
                let lower = if j > 0 { base(xi, j - 1) } else { [0.0; 3] };
                phi[j][idx] = upper[0] - lower[0];
                dxi[j][idx] = upper[1] - lower[1];
                lap[j][idx] = upper[2] - lower[2];
            }
        }
        let grad = dxi.iter().map(|g| (0..d).map(|i| g.iter().map(|v| v * v1[i]).collect()).collect()).collect();
        Ok(Localizers { sigma, axis: v1, phi, grad, lap })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `sup |Σ_j Φ_j − 1|`.
    pub fn partition_error(&self) -> f64 {
        let n = self.phi[0].len();
        (0..n).map(|i| (self.phi.iter().map(|p| p[i]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_j ‖∇Φ_j‖_∞`.
    pub fn gradient_sup(&self) -> f64 {
        self.grad.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Number of orthogonality conditions (and parameters) per bubble.
pub fn conditions_per_bubble(dim: usize) -> usize {
    BubbleParams::count(dim)
}

/// Which part of `∫ D R̄` a condition uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Re,
    Im,
}

/// The `2d+3` direction fields of one bubble, paired with `R` as
/// `Re ∫(x−α)U R̄`, `Re ∫|x−α|²U R̄`, `Im ∫∇U R̄`, `Im ∫ΛU R̄`, `Im ∫ϱ R̄`.
fn condition_fields(p: &BubbleParams, gs: &GroundState, grid: &Arc<Grid>) -> Result<Vec<(Part, Field)>> {
    let d = grid.dim();
    let lam = p.lambda;
    let mut out = Vec::with_capacity(2 * d + 3);
    for i in 0..d {
        out.push((Part::Re, synthesize(p, &gs.q, grid, |l: &Local| l.value() * (lam * l.y[i]))?));
    }
    out.push((Part::Re, synthesize(p, &gs.q, grid, |l: &Local| l.value() * (lam * lam * l.r * l.r))?));
    for i in 0..d {
        out.push((Part::Im, synthesize(p, &gs.q, grid, |l: &Local| l.dy(i) / lam)?));
    }
    out.push((Part::Im, synthesize(p, &gs.q, grid, Local::lambda_y)?));
    out.push((Part::Im, synthesize(p, &gs.rho, grid, Local::value)?));
    Ok(out)
}

/// `(x − α_j)`-weighted and other direction fields for every bubble; exposed
/// for the almost-orthogonality diagnostics.
pub fn orthogonality_residuals(u: &Field, params: &[BubbleParams], gs: &GroundState) -> Result<Vec<f64>> {
    let grid = u.grid().clone();
    let r = remainder(u, params, gs)?;
    let mut out = Vec::new();
    for p in params {
        for (part, f) in condition_fields(p, gs, &grid)? {
            let z = inner(&f, &r)?;
            out.push(if part == Part::Re { z.re } else { z.im });
        }
    }
    Ok(out)
}

/// `R = u − Σ_j U_j(P_j)`.
pub fn remainder(u: &Field, params: &[BubbleParams], gs: &GroundState) -> Result<Field> {
    let mut r = u.clone();
    for p in params {
        r -= &bubble(p, gs, u.grid())?;
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeOptions {
    pub max_iterations: usize,
    /// Converged when every residual is at most `tolerance · ‖u‖_{L²}`.
    pub tolerance: f64,
    pub max_halvings: usize,
    pub condition_limit: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { max_iterations: 50, tolerance: 1e-10, max_halvings: 8, condition_limit: 1e12 }
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub params: Vec<BubbleParams>,
    pub remainder: Field,
    /// `(2d+3)K` orthogonality values, bubble-major.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Condition number of the equilibrated Jacobian at the last iterate.
    pub condition: f64,
}

impl Decomposition {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Eval {
    residuals: Vec<f64>,
    remainder: Field,
    fields: Vec<Vec<(Part, Field)>>,
}

fn evaluate(u: &Field, params: &[BubbleParams], gs: &GroundState) -> Result<Eval> {
    let grid = u.grid().clone();
    let remainder = remainder(u, params, gs)?;
    let mut residuals = Vec::new();
    let mut fields = Vec::with_capacity(params.len());
    for p in params {
        let fs = condition_fields(p, gs, &grid)?;
        for (part, f) in &fs {
            let z = inner(f, &remainder)?;
            residuals.push(if *part == Part::Re { z.re } else { z.im });
        }
        fields.push(fs);
    }
    Ok(Eval { residuals, remainder, fields })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton iteration for the modulation parameters that make `R = u − ΣU_j`
/// satisfy the `(2d+3)K` orthogonality conditions.
///
/// The Jacobian is `−Re/Im ∫ D_{j,c} ∂_{P}U̅`; the term `∫ ∂_P D R̄`
/// is dropped, which costs nothing at a zero remainder and makes the
/// iteration linear with rate `O(‖R‖)` otherwise.
pub fn decompose(
    u: &Field,
    guess: &[BubbleParams],
    gs: &GroundState,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    if guess.is_empty() {
        return Err(Error::InvalidParameter("decomposition needs at least one bubble".into()));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("decomposed field"));
    }
    let grid = u.grid().clone();
    let d = grid.dim();
    let per = conditions_per_bubble(d);
    let size = per * guess.len();
    let tol = opts.tolerance * l2_norm(u);
    let floor = 4.0 * grid.spacing();
    let dirs = Direction::all(d);

    let mut params = guess.to_vec();
    let mut ev = evaluate(u, &params, gs)?;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut condition = f64::NAN;
    loop {
        let res = sup(&ev.residuals);
        if res <= tol && (last_step <= 1e-10 || res <= 1e-3 * tol) {
            return Ok(Decomposition {
                params,
                remainder: ev.remainder,
                residuals: ev.residuals,
                converged: true,
                iterations,
                condition,
            });
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut jac = DMatrix::<f64>::zeros(size, size);
        let mut col_norm = vec![0.0; size];
        for (l, p) in params.iter().enumerate() {
            for (m, dir) in dirs.iter().enumerate() {
                let du = parameter_derivative(p, &gs.q, &grid, *dir)?;
                let col = l * per + m;
                col_norm[col] = l2_norm(&du);
                for (j, fs) in ev.fields.iter().enumerate() {
                    for (c, (part, f)) in fs.iter().enumerate() {
                        let z = inner(f, &du)?;
                        jac[(j * per + c, col)] = -if *part == Part::Re { z.re } else { z.im };
                    }
                }
            }
        }
        let row_norm: Vec<f64> = ev.fields.iter().flatten().map(|(_, f)| l2_norm(f)).collect();
        let scaled = DMatrix::from_fn(size, size, |i, k| jac[(i, k)] / (row_norm[i] * col_norm[k]));
        let rhs = DVector::from_iterator(size, ev.residuals.iter().zip(&row_norm).map(|(f, r)| -f / r));
        let svd = scaled.svd(true, true);
        let sv = &svd.singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= opts.condition_limit) {
            return Err(Error::SingularJacobian { condition });
        }
        let z = svd.solve(&rhs, 0.0).map_err(|e| Error::Degenerate(e.to_string()))?;
        let delta: Vec<f64> = z.iter().zip(&col_norm).map(|(v, c)| v / c).collect();

        let current = norm2(&ev.residuals);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<BubbleParams> = params
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let mut v = p.to_vec(d);
                    v.iter_mut().zip(&delta[j * per..(j + 1) * per]).for_each(|(a, b)| *a += scale * b);
                    BubbleParams::from_slice(d, &v)
                })
                .collect();
            if trial.iter().all(|p| p.lambda >= floor) {
                let e = evaluate(u, &trial, gs)?;
                if norm2(&e.residuals) < current {
                    accepted = Some((trial, e));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((p, e)) => {
                last_step = scale * sup(&delta);
                params = p;
                ev = e;
            }
            None => break,
        }
    }
    let converged = sup(&ev.residuals) <= tol;
    Ok(Decomposition { params, remainder: ev.remainder, residuals: ev.residuals, converged, iterations, condition })
}

/// Parameters of all bubbles at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSample {
    pub t: f64,
    pub params: Vec<BubbleParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModRow {
    pub t: f64,
    pub per_bubble: Vec<f64>,
    pub total: f64,
    /// `Mod/(T−t)^{κ+3}` with `κ = ν_* − 3`, when a bound was requested.
    pub bound_ratio: Option<f64>,
}

/// Second-order derivative on a non-uniform stencil `(t₋, t₀, t₊)`.
fn centered(tm: f64, t0: f64, tp: f64, fm: f64, f0: f64, fp: f64) -> f64 {
    let (hm, hp) = (t0 - tm, tp - t0);
    (hm * hm * fp - hp * hp * fm + (hp * hp - hm * hm) * f0) / (hm * hp * (hm + hp))
}

/// `Mod_j = |λλ̇+γ| + |λ²γ̇+γ²| + |λα̇−2β| + |λ²β̇+γβ| + |λ²θ̇−1−|β|²|` at every
/// interior sample, derivatives by centered differences.
/// `bound = Some((T, ν_*))` adds the ratio `Mod/(T−t)^{ν_*}`.
pub fn mod_vector(samples: &[ParamSample], dim: usize, bound: Option<(f64, usize)>) -> Result<Vec<ModRow>> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!("Mod needs 3 samples, got {}", samples.len())));
    }
    let k = samples[0].params.len();
    if samples.iter().any(|s| s.params.len() != k) {
        return Err(Error::InvalidParameter("bubble count changes between samples".into()));
    }
    let mut rows = Vec::with_capacity(samples.len() - 2);
    for w in samples.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        if !((b.t - a.t) * (c.t - b.t) > 0.0) {
            return Err(Error::InvalidParameter("sample times must be strictly monotone".into()));
        }
        let per_bubble: Vec<f64> = (0..k)
            .map(|j| {
                let (pa, p, pc) = (a.params[j].to_vec(dim), b.params[j].to_vec(dim), c.params[j].to_vec(dim));
                let dot: Vec<f64> = (0..p.len()).map(|i| centered(a.t, b.t, c.t, pa[i], p[i], pc[i])).collect();
                let q = &b.params[j];
                let lam = q.lambda;
                let l2 = lam * lam;
                let (gi, ti) = (1 + 2 * dim, 2 + 2 * dim);
                let beta2: f64 = q.beta[..dim].iter().map(|v| v * v).sum();
                let alpha_term = (0..dim).map(|i| (lam * dot[1 + i] - 2.0 * q.beta[i]).powi(2)).sum::<f64>().sqrt();
                let beta_term =
                    (0..dim).map(|i| (l2 * dot[1 + dim + i] + q.gamma * q.beta[i]).powi(2)).sum::<f64>().sqrt();
                (lam * dot[0] + q.gamma).abs()
                    + (l2 * dot[gi] + q.gamma * q.gamma).abs()
                    + alpha_term
                    + beta_term
                    + (l2 * dot[ti] - 1.0 - beta2).abs()
            })
            .collect();
        let total = per_bubble.iter().sum();
        let bound_ratio = bound.map(|(big_t, nu)| total / (big_t - b.t).powi(nu as i32));
        rows.push(ModRow { t: b.t, per_bubble, total, bound_ratio });
    }
    Ok(rows)
}

/// Decomposes every checkpoint, walking from the latest time backwards and
/// seeding each Newton solve with the neighbouring result carried along the
/// exact modulation flow; the first guess is the pseudo-conformal parameter
/// set at that time.
pub fn decompose_along(
    checkpoints: &[Checkpoint],
    set: &BubbleSet,
    blowup_time: f64,
    gs: &GroundState,
    opts: &DecomposeOptions,
) -> Result<Vec<Decomposition>> {
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by(|&a, &b| checkpoints[b].t.total_cmp(&checkpoints[a].t));
    let mut out: Vec<Option<Decomposition>> = vec![None; checkpoints.len()];
    let mut previous: Option<(f64, Vec<BubbleParams>)> = None;
    for i in order {
        let c = &checkpoints[i];
        let carried = previous.take().and_then(|(t, ps)| ps.iter().map(|p| p.advance(c.t - t)).collect());
        let guess = match carried {
            Some(p) => p,
            None => set.pseudo_conformal_params(blowup_time, c.t)?,
        };
        let dec = decompose(&c.field, &guess, gs, opts)?;
        previous = Some((c.t, dec.params.clone()));
        out[i] = Some(dec);
    }
    Ok(out.into_iter().flatten().collect())
}

/// `ε_j(y) = λ^{d/2} e^{−iθ} (RΦ_j)(α + λy)` on the nodes of `R`'s grid.
///
/// For `λ ≤ 1` the window is read from the periodic interpolant, so the map
/// is an L² isometry whenever `RΦ_j` lives inside one period of the window;
/// for `λ > 1` the field is taken as zero outside the box.
pub fn renormalize_remainder(r: &Field, phi: &[f64], p: &BubbleParams) -> Result<Field> {
    let grid = r.grid();
    crate::profiles::check_resolved(p.lambda, grid)?;
    if phi.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let localized = r.weighted(phi);
    let outside = if p.lambda <= 1.0 { Outside::Periodic } else { Outside::Zero };
    let g = resample_affine(&localized, p.lambda, p.alpha, outside);
    let amp = p.lambda.powf(0.5 * grid.dim() as f64);
    Ok(g.scale(Complex64::from_polar(amp, -p.theta)))
}

/// The scalar products of `ε = ε₁ + iε₂` along the unstable directions.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalReport {
    /// `⟨ε₁,Q⟩, ⟨ε₁,y_iQ⟩…, ⟨ε₁,|y|²Q⟩, ⟨ε₂,∂_iQ⟩…, ⟨ε₂,ΛQ⟩, ⟨ε₂,ρ⟩`.
    pub products: Vec<(String, f64)>,
    pub value: f64,
}

pub fn scal(eps: &Field, dirs: &DirectionFields) -> Result<ScalReport> {
    if !eps.grid().same_as(&dirs.grid) {
        return Err(Error::GridMismatch);
    }
    let vol = dirs.grid.cell_volume();
    let pair = |w: &[f64], imag: bool| -> f64 {
        eps.values().iter().zip(w).map(|(z, v)| v * if imag { z.im } else { z.re }).sum::<f64>() * vol
    };
    let mut products = vec![("Q".to_string(), pair(&dirs.q, false))];
    for (i, w) in dirs.yq.iter().enumerate() {
        products.push((format!("y{}Q", i + 1), pair(w, false)));
    }
    products.push(("|y|^2Q".into(), pair(&dirs.r2q, false)));
    for (i, w) in dirs.grad_q.iter().enumerate() {
        products.push((format!("d{}Q", i + 1), pair(w, true)));
    }
    products.push(("LambdaQ".into(), pair(&dirs.lambda_q, true)));
    products.push(("rho".into(), pair(&dirs.rho, true)));
    let value = products.iter().map(|(_, v)| v * v).sum();
    Ok(ScalReport { products, value })
}

/// Minimal-image offset `x − a` on the periodic box.
fn periodic_offset(x: [f64; 2], a: [f64; 2], dim: usize, period: f64) -> [f64; 2] {
    let mut o = [0.0; 2];
    for i in 0..dim {
        let v = x[i] - a[i];
        o[i] = v - period * (v / period).round();
    }
    o
}

/// Pointwise size of `∂^ν U` for `|ν| = order ≤ 2` (Euclidean norm over multi-indices).
fn derivative_magnitude(u: &Field, order: usize) -> Result<Vec<f64>> {
    match order {
        0 => Ok(u.values().iter().map(|z| z.norm()).collect()),
        1 => {
            let g = gradient(u);
            Ok((0..u.grid().len()).map(|i| g.iter().map(|f| f.values()[i].norm_sqr()).sum::<f64>().sqrt()).collect())
        }
        2 => {
            let g = gradient(u);
            let h: Vec<Field> = g.iter().flat_map(gradient).collect();
            Ok((0..u.grid().len()).map(|i| h.iter().map(|f| f.values()[i].norm_sqr()).sum::<f64>().sqrt()).collect())
        }
        _ => Err(Error::InvalidParameter(format!("overlap derivative order {order} exceeds 2"))),
    }
}

/// `O[l][j] = ∫ |x−α_l|^n |∂^ν U_l| |x−α_j|^m |U_j| dx` with `|ν| = order`.
pub fn interaction_overlap(
    params: &[BubbleParams],
    gs: &GroundState,
    grid: &Arc<Grid>,
    m: i32,
    n: i32,
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    let d = grid.dim();
    let period = 2.0 * grid.extent();
    let bubbles: Vec<Field> = params.iter().map(|p| bubble(p, gs, grid)).collect::<Result<_>>()?;
    let dist = |a: [f64; 2]| -> Vec<f64> {
        grid.points_iter()
            .map(|x| {
                let o = periodic_offset(x, a, d, period);
                (o[0] * o[0] + o[1] * o[1]).sqrt()
            })
            .collect()
    };
    let dists: Vec<Vec<f64>> = params.iter().map(|p| dist(p.alpha)).collect();
    let mags: Vec<Vec<f64>> = bubbles.iter().map(|u| derivative_magnitude(u, order)).collect::<Result<_>>()?;
    let abs: Vec<Vec<f64>> = bubbles.iter().map(|u| derivative_magnitude(u, 0)).collect::<Result<_>>()?;
    let vol = grid.cell_volume();
    Ok((0..params.len())
        .map(|l| {
            (0..params.len())
                .map(|j| {
                    (0..grid.len())
                        .map(|i| dists[l][i].powi(n) * mags[l][i] * dists[j][i].powi(m) * abs[j][i])
                        .sum::<f64>()
                        * vol
                })
                .collect()
        })
        .collect())
}

/// Largest off-diagonal entry of an overlap matrix.
pub fn max_cross_overlap(o: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (l, row) in o.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if l != j {
                worst = worst.max(*v);
            }
        }
    }
    worst
}

/// One row of the parameter trajectory export.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRow {
    pub t: f64,
    pub params: Vec<BubbleParams>,
    /// `Mod_j`; `NaN` where no centered difference exists.
    pub mod_j: Vec<f64>,
    pub scal_j: Vec<f64>,
}

/// CSV with `t`, then per bubble `λ, α…, β…, γ, θ, Mod, Scal`.
pub fn parameter_csv(dim: usize, rows: &[ParamRow]) -> String {
    let mut s = String::from("t");
    let k = rows.first().map_or(0, |r| r.params.len());
    let axes = ["x", "y"];
    for j in 1..=k {
        write!(s, ",lambda_{j}").unwrap();
        for a in &axes[..dim] {
            write!(s, ",alpha_{a}_{j}").unwrap();
        }
        for a in &axes[..dim] {
            write!(s, ",beta_{a}_{j}").unwrap();
        }
        write!(s, ",gamma_{j},theta_{j},mod_{j},scal_{j}").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{:e}", r.t).unwrap();
        for (j, p) in r.params.iter().enumerate() {
            for v in p.to_vec(dim) {
                write!(s, ",{v:e}").unwrap();
            }
            write!(s, ",{:e},{:e}", r.mod_j[j], r.scal_j[j]).unwrap();
        }
        s.push('\n');
    }
    s
}
