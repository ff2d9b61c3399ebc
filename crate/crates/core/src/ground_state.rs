//! Ground state `Q` of `ΔQ − Q + Q^{1+4/d} = 0`, the radial profile `ρ`
//! solving `L₊ρ = −|x|²Q`, and the linearized operators `L±`.
//!
//! Both profiles are computed as functions of `r = |x|` on a uniform radial
//! mesh. `Q` is found by shooting on `Q(0)`; the exponentially small tail is
//! recovered by integrating the full equation inward from `r_max` and gluing
//! at an interior radius where the forward solution is still trustworthy.
//! `ρ` solves a linear problem and is glued the same way.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{gradient_norm_sq, l2_norm, l2_norm_sq, laplacian, real_inner, Field, Grid};
use crate::{Complex64, Error, Result};

/// Nonlinearity exponent `p = 1 + 4/d`.
pub fn critical_power(dim: usize) -> f64 {
    1.0 + 4.0 / dim as f64
}

/// `y^{4/d}` for `y ≥ 0` without `powf` (exact integer powers for d = 1, 2).
#[inline]
pub(crate) fn pow_4d(y: f64, dim: usize) -> f64 {
    if dim == 1 {
        let y2 = y * y;
        y2 * y2
    } else {
        y * y
    }
}

/// Uniform radial mesh and integrator resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialMesh {
    pub dr: f64,
    pub r_max: f64,
    /// RK4 steps per mesh interval.
    pub substeps: usize,
}

impl Default for RadialMesh {
    fn default() -> Self {
        RadialMesh { dr: 1.0 / 512.0, r_max: 32.0, substeps: 4 }
    }
}

impl RadialMesh {
    fn validate(&self) -> Result<usize> {
        if !(self.dr > 0.0) || self.substeps == 0 {
            return Err(Error::InvalidParameter("radial mesh needs dr > 0 and substeps ≥ 1".into()));
        }
        if self.r_max < 12.0 {
            return Err(Error::NoDecay(format!(
                "r_max = {} is too short to resolve the exponential tail (need ≥ 12)",
                self.r_max
            )));
        }
        let n = (self.r_max / self.dr).round() as usize;
        if ((n as f64) * self.dr - self.r_max).abs() > 1e-9 * self.r_max {
            return Err(Error::InvalidParameter("r_max must be a multiple of dr".into()));
        }
        Ok(n)
    }
}

/// Radial function sampled with value, slope and curvature at every node,
/// evaluated between nodes by quintic Hermite interpolation and extended
/// beyond `r_max` by an exponential tail.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    dim: usize,
    dr: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
}

impl RadialProfile {
    pub fn from_parts(
        dim: usize,
        dr: f64,
        values: Vec<f64>,
        slopes: Vec<f64>,
        curvatures: Vec<f64>,
    ) -> Result<Self> {
        let n = values.len();
        if n < 2 || slopes.len() != n || curvatures.len() != n {
            return Err(Error::InvalidParameter("radial profile arrays disagree in length".into()));
        }
        if !values.iter().chain(&slopes).chain(&curvatures).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("radial profile"));
        }
        Ok(RadialProfile { dim, dr, values, slopes, curvatures })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn r_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dr
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64 * self.dr).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    /// Logarithmic decay rate `−f'/f` at `r_max`, used for the tail.
    fn tail_rate(&self) -> f64 {
        let n = self.values.len() - 1;
        let (v, s) = (self.values[n], self.slopes[n]);
        if v == 0.0 {
            1.0
        } else {
            (-s / v).max(0.0)
        }
    }

    /// Value, first and second derivative at radius `r ≥ 0`.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let n = self.values.len() - 1;
        let r_max = self.r_max();
        if r >= r_max {
            let k = self.tail_rate();
            let v = self.values[n] * (-k * (r - r_max)).exp();
            return [v, -k * v, k * k * v];
        }
        let u = r / self.dr;
        let i = (u.floor() as usize).min(n - 1);
        let t = u - i as f64;
        let h = self.dr;
        let c0 = self.values[i];
        let c1 = h * self.slopes[i];
        let c2 = 0.5 * h * h * self.curvatures[i];
        let a = self.values[i + 1] - (c0 + c1 + c2);
        let b = h * self.slopes[i + 1] - (c1 + 2.0 * c2);
        let c = h * h * self.curvatures[i + 1] - 2.0 * c2;
        let c3 = 10.0 * a - 4.0 * b + 0.5 * c;
        let c4 = -15.0 * a + 7.0 * b - c;
        let c5 = 6.0 * a - 3.0 * b + 0.5 * c;
        let v = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
        let d1 = c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
        let d2 = 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5));
        [v, d1 / h, d2 / (h * h)]
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r)[0]
    }

    /// Decay rate `δ` from a least-squares fit of `log|f|` against `r` on
    /// `[5, r_max − 2]`.
    pub fn decay_rate(&self) -> Option<f64> {
        let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let hi = self.r_max() - 2.0;
        for (i, &v) in self.values.iter().enumerate() {
            let r = i as f64 * self.dr;
            if r < 5.0 || r > hi || v == 0.0 {
                continue;
            }
            let y = v.abs().ln();
            n += 1.0;
            sx += r;
            sy += y;
            sxx += r * r;
            sxy += r * y;
        }
        if n < 3.0 {
            return None;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        Some(-slope)
    }

    /// `∫_{ℝ^d} g(f(|x|), f'(|x|), |x|) dx` by composite Simpson in `r`.
    pub fn integrate<G>(&self, g: G) -> f64
    where
        G: Fn(f64, f64, f64) -> f64,
    {
        let vals: Vec<f64> = (0..self.values.len())
            .map(|i| {
                let r = i as f64 * self.dr;
                g(self.values[i], self.slopes[i], r)
            })
            .collect();
        radial_integral(self.dim, self.dr, &vals)
    }

    /// Samples `f(|x|)` on the grid as the periodic sum over the images of
    /// the box, which is the representation a periodic grid can hold.
    pub fn sample_periodic(&self, grid: &Grid) -> Vec<f64> {
        periodize(grid, [0.0, 0.0], |_, r| self.value(r))
    }
}

/// `∫_{ℝ^d} F(|x|) dx` for samples `F(r_i)` on a uniform mesh from 0.
pub fn radial_integral(dim: usize, dr: f64, samples: &[f64]) -> f64 {
    let weighted: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, &f)| if dim == 1 { 2.0 * f } else { 2.0 * std::f64::consts::PI * i as f64 * dr * f })
        .collect();
    simpson(&weighted, dr)
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    if n % 2 == 1 {
        // Odd interval count: Simpson on the first n−3, 3/8 rule on the last three.
        let head = if n >= 3 { simpson(&f[..n - 2], h) } else { 0.0 };
        let t = &f[n - 3..];
        return head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
    }
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// Sums `g(y, |y|)` over the periodic images `y = x − center + 2L n`,
/// `n ∈ {−1, 0, 1}^d`, at every grid node. Images with `|y| > 60` are skipped.
pub(crate) fn periodize<G>(grid: &Grid, center: [f64; 2], g: G) -> Vec<f64>
where
    G: Fn([f64; 2], f64) -> f64,
{
    let period = 2.0 * grid.extent();
    let offsets = image_offsets(grid.dim(), period);
    (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            offsets
                .iter()
                .filter_map(|o| {
                    let y = [x[0] - center[0] + o[0], x[1] - center[1] + o[1]];
                    let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                    (r <= 60.0).then(|| g(y, r))
                })
                .sum()
        })
        .collect()
}

pub(crate) fn image_offsets(dim: usize, period: f64) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[-period, 0.0], [0.0, 0.0], [period, 0.0]]
    } else {
        let mut v = Vec::with_capacity(9);
        for a in [-period, 0.0, period] {
            for b in [-period, 0.0, period] {
                v.push([a, b]);
            }
        }
        v
    }
}

fn rk4<F>(f: &F, r: f64, s: [f64; 2], h: f64) -> [f64; 2]
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let k1 = f(r, s);
    let k2 = f(r + 0.5 * h, [s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = f(r + 0.5 * h, [s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = f(r + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Right side of `Δy = y − y^{1+4/d}`.
fn ground_rhs(y: f64, dim: usize) -> f64 {
    y - pow_4d(y.abs(), dim) * y
}

fn ground_field(dim: usize) -> impl Fn(f64, [f64; 2]) -> [f64; 2] {
    let dm1 = (dim - 1) as f64;
    move |r: f64, s: [f64; 2]| {
        let g = ground_rhs(s[0], dim);
        let acc = if r == 0.0 { g / dim as f64 } else { g - dm1 * s[1] / r };
        [s[1], acc]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shot {
    Overshoot,
    Undershoot,
    Undecided,
}

/// Integrates from the origin with `y(0) = q0`. Returns the classification
/// and the states at the mesh nodes reached.
fn shoot(dim: usize, q0: f64, mesh: &RadialMesh, n: usize) -> (Shot, Vec<[f64; 2]>) {
    let f = ground_field(dim);
    let h = mesh.dr / mesh.substeps as f64;
    let m = series_nodes(mesh.dr).min(n);
    let series = ground_series(q0, dim);
    let mut states = Vec::with_capacity(n + 1);
    for i in 0..=m {
        let s = eval_even_series(&series, i as f64 * mesh.dr);
        if s[0] < 0.0 {
            return (Shot::Overshoot, states);
        }
        if s[1] > 0.0 {
            return (Shot::Undershoot, states);
        }
        states.push(s);
    }
    let mut s = states[m];
    for k in (m * mesh.substeps)..(n * mesh.substeps) {
        s = rk4(&f, k as f64 * h, s, h);
        if s[0] < 0.0 {
            return (Shot::Overshoot, states);
        }
        if s[1] > 0.0 {
            return (Shot::Undershoot, states);
        }
        if (k + 1) % mesh.substeps == 0 {
            states.push(s);
        }
    }
    (Shot::Undecided, states)
}

/// Radius covered by the power-series start; RK4 takes over from there,
/// away from the coordinate singularity of `(d−1)/r`.
const SERIES_RADIUS: f64 = 1.0 / 16.0;
const SERIES_TERMS: usize = 14;

fn series_nodes(dr: f64) -> usize {
    ((SERIES_RADIUS / dr).round() as usize).max(1)
}

/// Coefficients `c_k` of `Σ c_k s^k`, `s = r²`, truncated products.
fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n).map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum()).collect()
}

fn series_pow(a: &[f64], e: usize) -> Vec<f64> {
    let mut out = a.to_vec();
    for _ in 1..e {
        out = series_mul(&out, a);
    }
    out
}

/// Even power series of the regular solution of `Δy = y − y^{1+4/d}` with
/// `y(0) = q0`: `Δ r^{2k} = 2k(2k+d−2) r^{2k−2}` gives a recursion.
fn ground_series(q0: f64, dim: usize) -> Vec<f64> {
    let d = dim as f64;
    let e = 1 + 4 / dim;
    let mut a = vec![q0];
    for k in 0..SERIES_TERMS - 1 {
        let yp = series_pow(&a, e);
        let kf = k as f64;
        a.push((a[k] - yp[k]) / (2.0 * (kf + 1.0) * (2.0 * kf + d)));
    }
    a
}

/// Even series of the regular solution of `Δρ = (1 − pQ^{4/d})ρ + σ r²Q`.
fn rho_series(q_series: &[f64], dim: usize, rho0: f64, source: f64) -> Vec<f64> {
    let d = dim as f64;
    let p = critical_power(dim);
    let pot: Vec<f64> = series_pow(q_series, 4 / dim).iter().map(|c| p * c).collect();
    let mut b = vec![rho0];
    for k in 0..SERIES_TERMS - 1 {
        let vr: f64 = (0..=k).map(|j| pot[j] * b[k - j]).sum();
        let src = if k >= 1 { source * q_series[k - 1] } else { 0.0 };
        let kf = k as f64;
        b.push((b[k] - vr + src) / (2.0 * (kf + 1.0) * (2.0 * kf + d)));
    }
    b
}

fn eval_even_series(c: &[f64], r: f64) -> [f64; 2] {
    let s = r * r;
    let mut v = 0.0;
    let mut dv = 0.0;
    for (k, &ck) in c.iter().enumerate().rev() {
        v = v * s + ck;
        if k > 0 {
            dv = dv * s + 2.0 * k as f64 * ck;
        }
    }
    // dv accumulated Σ 2k c_k s^{k−1}; multiply by r.
    [v, dv * r]
}

/// Inward integration of `field` from `r_max` to node `stop`, starting from
/// `data` at `r_max`; returns states at nodes `stop..=n`.
fn integrate_inward<F>(field: &F, data: [f64; 2], mesh: &RadialMesh, n: usize, stop: usize) -> Vec<[f64; 2]>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let h = -mesh.dr / mesh.substeps as f64;
    let mut out = vec![[0.0; 2]; n - stop + 1];
    let mut s = data;
    out[n - stop] = s;
    for i in (stop..n).rev() {
        let mut r = (i + 1) as f64 * mesh.dr;
        for _ in 0..mesh.substeps {
            s = rk4(field, r, s, h);
            r += h;
        }
        out[i - stop] = s;
    }
    out
}

/// Leading asymptotics of the decaying solution of `Δy = y` at radius `r`.
fn decaying_tail(dim: usize, r: f64) -> [f64; 2] {
    let e = (-r).exp();
    if dim == 1 {
        return [e, -e];
    }
    let s = 1.0 - 1.0 / (8.0 * r) + 9.0 / (128.0 * r * r) - 225.0 / (3072.0 * r.powi(3));
    let ds = 1.0 / (8.0 * r * r) - 18.0 / (128.0 * r.powi(3)) + 675.0 / (3072.0 * r.powi(4));
    let amp = e / r.sqrt();
    [amp * s, amp * (ds - s - s / (2.0 * r))]
}

/// Default shooting bracket for `Q(0)`.
pub fn default_bracket(dim: usize) -> (f64, f64) {
    if dim == 1 {
        (1.1, 2.0)
    } else {
        (1.5, 3.0)
    }
}

/// Solves for the ground state on `mesh` with the default bracket.
pub fn solve_ground_state(dim: usize, mesh: &RadialMesh) -> Result<RadialProfile> {
    solve_ground_state_in(dim, mesh, default_bracket(dim))
}

/// Solves for the ground state, bisecting `Q(0)` within `bracket`.
pub fn solve_ground_state_in(dim: usize, mesh: &RadialMesh, bracket: (f64, f64)) -> Result<RadialProfile> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidParameter(format!("dimension {dim} not in {{1, 2}}")));
    }
    let n = mesh.validate()?;
    let (mut lo, mut hi) = bracket;
    let bracket_err = Error::ShootingBracket { lo, hi };
    if shoot(dim, lo, mesh, n).0 != Shot::Undershoot || shoot(dim, hi, mesh, n).0 != Shot::Overshoot {
        return Err(bracket_err);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(dim, mid, mesh, n).0 {
            Shot::Undershoot => lo = mid,
            Shot::Overshoot => hi = mid,
            // Neither behaviour within r_max: as good as the float can get.
            Shot::Undecided => {
                lo = mid;
                hi = mid;
                break;
            }
        }
    }
    let (_, lo_states) = shoot(dim, lo, mesh, n);
    let (_, hi_states) = shoot(dim, hi, mesh, n);
    let reach = lo_states.len().min(hi_states.len());
    // Last node where the two bracketing trajectories still agree closely.
    let cap = ((12.0 / mesh.dr) as usize).min(n - 1);
    let mut m = 0;
    for i in 0..reach.min(cap + 1) {
        let (a, b) = (lo_states[i][0], hi_states[i][0]);
        if (a - b).abs() > 1e-10 * (0.5 * (a + b)).abs() {
            break;
        }
        m = i;
    }
    if (m as f64) * mesh.dr < 2.0 {
        return Err(Error::NoDecay("forward shooting lost accuracy before r = 2".into()));
    }
    let forward: Vec<[f64; 2]> = (0..=m)
        .map(|i| [0.5 * (lo_states[i][0] + hi_states[i][0]), 0.5 * (lo_states[i][1] + hi_states[i][1])])
        .collect();
    let field = ground_field(dim);
    let r_max = n as f64 * mesh.dr;
    let target = forward[m][0];
    let tail = decaying_tail(dim, r_max);
    let run = |s: f64| integrate_inward(&field, [s * tail[0], s * tail[1]], mesh, n, m);
    let mut s0 = 1.0;
    let mut f0 = run(s0)[0][0] - target;
    let mut s1 = s0 * target / (f0 + target);
    let mut inward = run(s1);
    let mut f1 = inward[0][0] - target;
    for _ in 0..40 {
        if f1.abs() <= 1e-15 * target.abs() || f1 == f0 {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        inward = run(s1);
        f1 = inward[0][0] - target;
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut slopes = Vec::with_capacity(n + 1);
    for s in &forward {
        values.push(s[0]);
        slopes.push(s[1]);
    }
    for s in &inward[1..] {
        values.push(s[0]);
        slopes.push(s[1]);
    }
    let curvatures = (0..=n)
        .map(|i| field(i as f64 * mesh.dr, [values[i], slopes[i]])[1])
        .collect();
    let q = RadialProfile::from_parts(dim, mesh.dr, values, slopes, curvatures)?;
    if q.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NoDecay("ground state lost positivity in the tail".into()));
    }
    Ok(q)
}

/// Eighth-order central differences `(f', f'')` at stride `stride` for the
/// mesh samples `f`, extended to negative radii with the given parity
/// (`1` even, `−1` odd). Covers nodes `0..=n − 4·stride`.
fn radial_fd(f: &[f64], parity: f64, stride: usize, dr: f64) -> Vec<[f64; 2]> {
    const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    const D1: [f64; 5] = [0.0, 4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let h = stride as f64 * dr;
    let n = f.len() - 1;
    let at = |j: isize| if j < 0 { parity * f[j.unsigned_abs()] } else { f[j as usize] };
    (0..=(n - 4 * stride))
        .map(|i| {
            let (ii, st) = (i as isize, stride as isize);
            let mut y2 = D2[0] * at(ii);
            let mut y1 = 0.0;
            for k in 1..5isize {
                let (a, b) = (at(ii + k * st), at(ii - k * st));
                y2 += D2[k as usize] * (a + b);
                y1 += D1[k as usize] * (a - b);
            }
            [y1 / h, y2 / (h * h)]
        })
        .collect()
}

/// Laplacian of `g(r)` (`harmonic = 0`) or of `g(r) x_i/r` (`harmonic = 1`,
/// returned as the radial factor), by [`radial_fd`] at stride four.
fn radial_laplacian(g: &[f64], harmonic: usize, dim: usize, dr: f64) -> Vec<f64> {
    let parity = if harmonic == 0 { 1.0 } else { -1.0 };
    let dm1 = (dim - 1) as f64;
    radial_fd(g, parity, 4, dr)
        .iter()
        .enumerate()
        .map(|(i, &[d1, d2])| {
            let r = i as f64 * dr;
            match (i, harmonic) {
                (0, 0) => dim as f64 * d2,
                (0, _) => if dim == 1 { d2 } else { 0.0 },
                (_, 0) => d2 + dm1 * d1 / r,
                _ => d2 + dm1 * (d1 / r - g[i] / (r * r)),
            }
        })
        .collect()
}

/// Pointwise residual `max |y'' + (d−1)y'/r − y + y^{1+4/d}|` over the mesh,
/// with derivatives from eighth-order central differences of the stored
/// values at stride four. Nodes within sixteen of `r_max` are skipped.
pub fn ode_residual(q: &RadialProfile) -> f64 {
    ode_residuals(q).into_iter().fold(0.0, f64::max)
}

/// Per-node residuals behind [`ode_residual`].
pub fn ode_residuals(q: &RadialProfile) -> Vec<f64> {
    radial_laplacian(&q.values, 0, q.dim, q.dr)
        .iter()
        .enumerate()
        .map(|(i, lap)| (lap - ground_rhs(q.values[i], q.dim)).abs())
        .collect()
}

/// The six kernel identities evaluated on the radial mesh itself, with the
/// whole-space operators applied by finite differences of the sampled
/// profiles (no box, no periodization).
pub fn radial_kernel_report(gs: &GroundState) -> KernelReport {
    let (q, rho) = (&gs.q, &gs.rho);
    let dim = q.dim;
    let dr = q.dr;
    let half_d = dim as f64 / 2.0;
    let radii = q.radii();
    let qv = &q.values;
    let qs = &q.slopes;
    let v_minus: Vec<f64> = qv.iter().map(|&v| pow_4d(v, dim)).collect();
    let p = critical_power(dim);
    let lambda_q: Vec<f64> = qv.iter().zip(qs).zip(&radii).map(|((v, s), r)| half_d * v + r * s).collect();
    let rq: Vec<f64> = qv.iter().zip(&radii).map(|(v, r)| r * v).collect();
    let r2q: Vec<f64> = qv.iter().zip(&radii).map(|(v, r)| r * r * v).collect();
    let zero = vec![0.0; qv.len()];
    let norm = |g: &[f64], harmonic: usize, plus: bool, rhs: &[f64], rhs_scale: f64| -> f64 {
        let lap = radial_laplacian(g, harmonic, dim, dr);
        let resid: Vec<f64> = lap
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let w = if plus { p * v_minus[i] } else { v_minus[i] };
                let r = -l + g[i] * (1.0 - w) - rhs_scale * rhs[i];
                r * r
            })
            .collect();
        radial_integral(dim, dr, &resid).sqrt()
    };
    let rows = vec![
        KernelRow { identity: "L+ grad Q = 0", residual: norm(qs, 1, true, &zero, 0.0) },
        KernelRow { identity: "L+ Lambda Q = -2 Q", residual: norm(&lambda_q, 0, true, qv, -2.0) },
        KernelRow { identity: "L+ rho = -|x|^2 Q", residual: norm(&rho.values, 0, true, &r2q, -1.0) },
        KernelRow { identity: "L- Q = 0", residual: norm(qv, 0, false, &zero, 0.0) },
        KernelRow { identity: "L- x Q = -2 grad Q", residual: norm(&rq, 1, false, qs, -2.0) },
        KernelRow { identity: "L- |x|^2 Q = -4 Lambda Q", residual: norm(&r2q, 0, false, &lambda_q, -4.0) },
    ];
    KernelReport { rows }
}

/// Solves the radial problem `L₊ρ = −|x|²Q` for the given ground state.
pub fn solve_rho(q: &RadialProfile) -> Result<RadialProfile> {
    solve_rho_on(q, 4.0)
}

fn solve_rho_on(q: &RadialProfile, r_match: f64) -> Result<RadialProfile> {
    let dim = q.dim;
    let d = dim as f64;
    let p = critical_power(dim);
    let dm1 = d - 1.0;
    let n = q.values.len() - 1;
    let substeps = 4;
    let mesh = RadialMesh { dr: q.dr, r_max: q.r_max(), substeps };
    let m = (r_match / q.dr).round() as usize;
    if m < 2 || m + 2 > n {
        return Err(Error::InvalidParameter("matching radius outside the mesh".into()));
    }
    // ρ'' = −(d−1)ρ'/r + (1 − pQ^{p−1})ρ + σ r²Q, σ = 1 for the full
    // equation and 0 for the homogeneous one.
    let make_field = |source: f64| {
        move |r: f64, s: [f64; 2]| {
            let qv = q.value(r);
            let pot = 1.0 - p * pow_4d(qv, dim);
            let rhs = pot * s[0] + source * r * r * qv;
            let acc = if r == 0.0 { rhs / d } else { rhs - dm1 * s[1] / r };
            [s[1], acc]
        }
    };
    let full = make_field(1.0);
    let homog = make_field(0.0);
    let h = q.dr / substeps as f64;
    let q_series = ground_series(q.values[0], dim);
    let m_series = series_nodes(q.dr).min(m);
    let outward = |rho0: f64, source: f64| -> Vec<[f64; 2]> {
        let field = make_field(source);
        let series = rho_series(&q_series, dim, rho0, source);
        let mut out: Vec<[f64; 2]> =
            (0..=m_series).map(|i| eval_even_series(&series, i as f64 * q.dr)).collect();
        let mut s = out[m_series];
        for k in (m_series * substeps)..(m * substeps) {
            s = rk4(&field, k as f64 * h, s, h);
            if (k + 1) % substeps == 0 {
                out.push(s);
            }
        }
        out
    };
    let part = outward(0.0, 1.0);
    let hom = outward(1.0, 0.0);
    let r_max = q.r_max();
    let back_part = integrate_inward(&full, [0.0, 0.0], &mesh, n, m);
    let back_hom = integrate_inward(&homog, decaying_tail(dim, r_max), &mesh, n, m);
    let (pv, hv, bv, gv) = (part[m], hom[m], back_part[0], back_hom[0]);
    // a·H − b·G = B − P in value and slope.
    let det = -hv[0] * gv[1] + gv[0] * hv[1];
    let scale = (hv[0] * gv[1]).abs() + (gv[0] * hv[1]).abs();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::SingularJacobian { condition: scale / det.abs().max(f64::MIN_POSITIVE) });
    }
    let (r0, r1) = (bv[0] - pv[0], bv[1] - pv[1]);
    let a = (-r0 * gv[1] + gv[0] * r1) / det;
    let b = (hv[0] * r1 - hv[1] * r0) / det;
    let mut values = Vec::with_capacity(n + 1);
    let mut slopes = Vec::with_capacity(n + 1);
    for i in 0..=m {
        values.push(part[i][0] + a * hom[i][0]);
        slopes.push(part[i][1] + a * hom[i][1]);
    }
    for i in 1..back_part.len() {
        values.push(back_part[i][0] + b * back_hom[i][0]);
        slopes.push(back_part[i][1] + b * back_hom[i][1]);
    }
    let curvatures = (0..=n).map(|i| full(i as f64 * q.dr, [values[i], slopes[i]])[1]).collect();
    RadialProfile::from_parts(dim, q.dr, values, slopes, curvatures)
}

/// Ground state and `ρ` for one dimension.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub q: RadialProfile,
    pub rho: RadialProfile,
}

impl GroundState {
    pub fn solve(dim: usize, mesh: &RadialMesh) -> Result<Arc<GroundState>> {
        let q = solve_ground_state(dim, mesh)?;
        let rho = solve_rho(&q)?;
        Ok(Arc::new(GroundState { q, rho }))
    }

    pub fn dim(&self) -> usize {
        self.q.dim
    }

    /// `‖Q‖²_{L²}` by radial quadrature.
    pub fn mass(&self) -> f64 {
        self.q.integrate(|v, _, _| v * v)
    }

    /// `‖∇Q‖²_{L²}`.
    pub fn gradient_sq(&self) -> f64 {
        self.q.integrate(|_, s, _| s * s)
    }

    /// `‖yQ‖²_{L²}`.
    pub fn sigma_sq(&self) -> f64 {
        self.q.integrate(|v, _, r| r * r * v * v)
    }

    /// `E(Q) = ½‖∇Q‖² − d/(2d+4)‖Q‖^{2+4/d}_{L^{2+4/d}}`, zero in the continuum.
    pub fn energy(&self) -> f64 {
        let d = self.dim();
        let c = d as f64 / (2.0 * d as f64 + 4.0);
        self.q.integrate(|v, s, _| 0.5 * s * s - c * v * v * pow_4d(v, d))
    }
}

/// Real fields of the generalized null-space directions sampled on a grid.
#[derive(Clone, Debug)]
pub struct DirectionFields {
    pub grid: Arc<Grid>,
    pub q: Vec<f64>,
    /// `y_i Q`, one per axis.
    pub yq: Vec<Vec<f64>>,
    /// `|y|² Q`.
    pub r2q: Vec<f64>,
    /// `∂_i Q`, one per axis.
    pub grad_q: Vec<Vec<f64>>,
    /// `ΛQ = (d/2) Q + y·∇Q`.
    pub lambda_q: Vec<f64>,
    pub rho: Vec<f64>,
}

impl DirectionFields {
    pub fn new(grid: &Arc<Grid>, gs: &GroundState) -> Result<Self> {
        if grid.dim() != gs.dim() {
            return Err(Error::InvalidParameter("grid and ground state dimensions differ".into()));
        }
        let d = grid.dim();
        let half_d = d as f64 / 2.0;
        let q = gs.q.sample_periodic(grid);
        let yq = (0..d)
            .map(|i| periodize(grid, [0.0; 2], |y, r| y[i] * gs.q.value(r)))
            .collect();
        let r2q = periodize(grid, [0.0; 2], |_, r| r * r * gs.q.value(r));
        let grad_q = (0..d)
            .map(|i| {
                periodize(grid, [0.0; 2], |y, r| if r == 0.0 { 0.0 } else { gs.q.eval(r)[1] * y[i] / r })
            })
            .collect();
        let lambda_q = periodize(grid, [0.0; 2], |_, r| {
            let e = gs.q.eval(r);
            half_d * e[0] + r * e[1]
        });
        let rho = gs.rho.sample_periodic(grid);
        Ok(DirectionFields { grid: grid.clone(), q, yq, r2q, grad_q, lambda_q, rho })
    }

    pub fn field(&self, values: &[f64]) -> Field {
        Field::from_real(&self.grid, values).expect("direction sampled on its own grid")
    }
}

/// Which linearized operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `L₊ = −Δ + 1 − (1+4/d) Q^{4/d}`.
    Plus,
    /// `L₋ = −Δ + 1 − Q^{4/d}`.
    Minus,
}

/// `L±` on a grid with the potentials sampled from `Q`.
#[derive(Clone, Debug)]
pub struct LinearizedOps {
    grid: Arc<Grid>,
    potential_plus: Vec<f64>,
    potential_minus: Vec<f64>,
}

impl LinearizedOps {
    pub fn new(grid: &Arc<Grid>, gs: &GroundState) -> Result<Self> {
        Self::from_samples(grid, &gs.q.sample_periodic(grid))
    }

    /// Builds the potentials from grid samples of `Q`, rejecting inputs that
    /// are not a positive profile.
    pub fn from_samples(grid: &Arc<Grid>, q: &[f64]) -> Result<Self> {
        if q.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ground state samples"));
        }
        let peak = q.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) || q.iter().any(|&v| v < 0.0) {
            return Err(Error::Degenerate("ground state samples must be positive".into()));
        }
        let d = grid.dim();
        let p = critical_power(d);
        let potential_minus: Vec<f64> = q.iter().map(|&v| pow_4d(v, d)).collect();
        let potential_plus = potential_minus.iter().map(|v| p * v).collect();
        Ok(LinearizedOps { grid: grid.clone(), potential_plus, potential_minus })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn apply(&self, f: &Field, which: Branch) -> Result<Field> {
        if !self.grid.same_as(f.grid()) {
            return Err(Error::GridMismatch);
        }
        let pot = match which {
            Branch::Plus => &self.potential_plus,
            Branch::Minus => &self.potential_minus,
        };
        let lap = laplacian(f);
        let values = f
            .values()
            .iter()
            .zip(lap.values())
            .zip(pot)
            .map(|((&v, &l), &w)| -l + v * (1.0 - w))
            .collect();
        Field::from_values(&self.grid, values)
    }
}

/// `apply_L`: `L₊f` or `L₋f`.
pub fn apply_l(f: &Field, which: Branch, ops: &LinearizedOps) -> Result<Field> {
    ops.apply(f, which)
}

/// One row of the kernel-identity table.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelRow {
    pub identity: &'static str,
    /// L² norm of `lhs − rhs`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    pub rows: Vec<KernelRow>,
}

impl KernelReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Residuals of `L₊∇Q = 0`, `L₊ΛQ = −2Q`, `L₊ρ = −|x|²Q`, `L₋Q = 0`,
/// `L₋xQ = −2∇Q` and `L₋|x|²Q = −4ΛQ` on the grid.
pub fn kernel_report(ops: &LinearizedOps, dirs: &DirectionFields) -> Result<KernelReport> {
    let f = |v: &[f64]| dirs.field(v);
    let resid = |lhs: Field, rhs: Field| l2_norm(&(&lhs - &rhs));
    let zero = Field::zeros(&dirs.grid);
    let vec_resid = |apply: &dyn Fn(usize) -> Result<(Field, Field)>| -> Result<f64> {
        let mut s = 0.0;
        for i in 0..dirs.grid.dim() {
            let (lhs, rhs) = apply(i)?;
            s += l2_norm_sq(&(&lhs - &rhs));
        }
        Ok(s.sqrt())
    };
    let q = f(&dirs.q);
    let lambda_q = f(&dirs.lambda_q);
    let rows = vec![
        KernelRow {
            identity: "L+ grad Q = 0",
            residual: vec_resid(&|i| Ok((ops.apply(&f(&dirs.grad_q[i]), Branch::Plus)?, zero.clone())))?,
        },
        KernelRow {
            identity: "L+ Lambda Q = -2 Q",
            residual: resid(ops.apply(&lambda_q, Branch::Plus)?, &q * -2.0),
        },
        KernelRow {
            identity: "L+ rho = -|x|^2 Q",
            residual: resid(ops.apply(&f(&dirs.rho), Branch::Plus)?, &f(&dirs.r2q) * -1.0),
        },
        KernelRow { identity: "L- Q = 0", residual: resid(ops.apply(&q, Branch::Minus)?, zero.clone()) },
        KernelRow {
            identity: "L- x Q = -2 grad Q",
            residual: vec_resid(&|i| {
                Ok((ops.apply(&f(&dirs.yq[i]), Branch::Minus)?, &f(&dirs.grad_q[i]) * -2.0))
            })?,
        },
        KernelRow {
            identity: "L- |x|^2 Q = -4 Lambda Q",
            residual: resid(ops.apply(&f(&dirs.r2q), Branch::Minus)?, &lambda_q * -4.0),
        },
    ];
    Ok(KernelReport { rows })
}

/// `‖L₊ρ + |x|²Q‖_{L²}` on the grid.
pub fn rho_residual(ops: &LinearizedOps, dirs: &DirectionFields) -> Result<f64> {
    let lr = ops.apply(&dirs.field(&dirs.rho), Branch::Plus)?;
    Ok(l2_norm(&(&lr + &dirs.field(&dirs.r2q))))
}

/// Projects `f = f₁ + i f₂` so that `f₁ ⊥ {Q, yQ, |y|²Q}` and
/// `f₂ ⊥ {∇Q, ΛQ, ρ}` in L².
pub fn project_orthogonal(f: &Field, dirs: &DirectionFields) -> Field {
    let mut real_basis: Vec<&[f64]> = vec![&dirs.q];
    real_basis.extend(dirs.yq.iter().map(|v| v.as_slice()));
    real_basis.push(&dirs.r2q);
    let mut imag_basis: Vec<&[f64]> = dirs.grad_q.iter().map(|v| v.as_slice()).collect();
    imag_basis.push(&dirs.lambda_q);
    imag_basis.push(&dirs.rho);
    let re: Vec<f64> = f.values().iter().map(|z| z.re).collect();
    let im: Vec<f64> = f.values().iter().map(|z| z.im).collect();
    let re = project_out(&re, &real_basis);
    let im = project_out(&im, &imag_basis);
    let values = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Field::from_values(f.grid(), values).expect("same grid")
}

fn project_out(v: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    // Modified Gram–Schmidt on the basis, then subtract components.
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        let mut w = b.to_vec();
        for o in &ortho {
            let c = dot(&w, o);
            w.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-300 {
            w.iter_mut().for_each(|a| *a /= norm);
            ortho.push(w);
        }
    }
    let mut out = v.to_vec();
    for _ in 0..2 {
        for o in &ortho {
            let c = dot(&out, o);
            out.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(L₊f₁, f₁) + (L₋f₂, f₂)`.
pub fn quadratic_form(ops: &LinearizedOps, f: &Field) -> Result<f64> {
    let re = f.real_part();
    let im = f.imag_part();
    Ok(real_inner(&ops.apply(&re, Branch::Plus)?, &re) + real_inner(&ops.apply(&im, Branch::Minus)?, &im))
}

/// Outcome of the sampled coercivity test.
#[derive(Clone, Debug)]
pub struct CoercivitySample {
    /// `(Lf, f) / ‖f‖²_{H¹}` per sample.
    pub ratios: Vec<f64>,
}

impl CoercivitySample {
    pub fn min_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Random smooth localized field: a few Gaussian bumps with random complex
/// amplitudes, centers in `[−3, 3]^d` and widths in `[0.5, 2]`.
pub fn random_bumps(grid: &Arc<Grid>, rng: &mut impl Rng, bumps: usize) -> Field {
    let d = grid.dim();
    let specs: Vec<([f64; 2], f64, Complex64)> = (0..bumps)
        .map(|_| {
            let c = [rng.random_range(-3.0..3.0), if d == 2 { rng.random_range(-3.0..3.0) } else { 0.0 }];
            let w = rng.random_range(0.5..2.0);
            let a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (c, w, a)
        })
        .collect();
    Field::from_fn(grid, |x| {
        specs
            .iter()
            .map(|(c, w, a)| {
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                a * (-r2 / (w * w)).exp()
            })
            .sum()
    })
}

/// Samples `(Lf, f) / ‖f‖²_{H¹}` over random fields projected onto the
/// orthogonal complement of the generalized null space.
pub fn coercivity_sample(
    ops: &LinearizedOps,
    dirs: &DirectionFields,
    samples: usize,
    seed: u64,
) -> Result<CoercivitySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    for _ in 0..samples {
        let f = project_orthogonal(&random_bumps(ops.grid(), &mut rng, 6), dirs);
        let h1 = l2_norm_sq(&f) + gradient_norm_sq(&f);
        ratios.push(quadratic_form(ops, &f)? / h1);
    }
    Ok(CoercivitySample { ratios })
}
