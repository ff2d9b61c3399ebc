//! Spatial noise weights `φ_k`, seeded Brownian paths `B_k`, the phase
//! `W = i Σ φ_k B_k` and the coefficients `b = 2∇W`, `c = Σ_j (∂_jW)² + ΔW`.
//!
//! Weights have the closed form `φ_k(x) = A_k P_k(x/s) e^{−|x|²/s_e²}` with a
//! polynomial `P_k` that vanishes to order `ν_*+1` at every anchor. The
//! family is closed under differentiation, so every derivative is another
//! polynomial times the same Gaussian and is evaluated exactly.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::spectral::{Field, Grid};
use crate::{Complex64, Error, Result};

/// Dense bivariate polynomial `Σ c_{ij} z₁^i z₂^j` with `i + j ≤ degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly2 {
    degree: usize,
    coeffs: Vec<f64>,
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Poly2 { degree, coeffs: vec![0.0; (degree + 1) * (degree + 1)] }
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero(0);
        p.coeffs[0] = c;
        p
    }

    pub fn monomial(i: usize, j: usize) -> Self {
        let mut p = Self::zero(i + j);
        p.set(i, j, 1.0);
        p
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.degree + 1) + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coeffs[self.idx(i, j)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.coeffs[k] = v;
    }

    fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=self.degree).flat_map(move |i| {
            (0..=self.degree - i).filter_map(move |j| {
                let c = self.coeffs[self.idx(i, j)];
                (c != 0.0).then_some((i, j, c))
            })
        })
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.degree.max(other.degree));
        for (i, j, c) in self.terms().chain(other.terms()) {
            let k = out.idx(i, j);
            out.coeffs[k] += c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly2 {
        Poly2 { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.degree + other.degree);
        for (i, j, a) in self.terms() {
            for (k, l, b) in other.terms() {
                let m = out.idx(i + k, j + l);
                out.coeffs[m] += a * b;
            }
        }
        out
    }

    pub fn pow(&self, e: usize) -> Poly2 {
        let mut out = Poly2::constant(1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// `∂/∂z_axis`.
    pub fn diff(&self, axis: usize) -> Poly2 {
        let mut out = Poly2::zero(self.degree.max(1) - 1);
        for (i, j, c) in self.terms() {
            match axis {
                0 if i > 0 => out.set(i - 1, j, out.get(i - 1, j) + c * i as f64),
                1 if j > 0 => out.set(i, j - 1, out.get(i, j - 1) + c * j as f64),
                _ => {}
            }
        }
        out
    }

    /// `z_axis · P`.
    pub fn mul_z(&self, axis: usize) -> Poly2 {
        self.mul(&if axis == 0 { Poly2::monomial(1, 0) } else { Poly2::monomial(0, 1) })
    }

    pub fn eval(&self, z: [f64; 2]) -> f64 {
        // Horner in z₂ inside Horner in z₁.
        let mut acc = 0.0;
        for i in (0..=self.degree).rev() {
            let mut inner = 0.0;
            for j in (0..=self.degree - i).rev() {
                inner = inner * z[1] + self.coeffs[self.idx(i, j)];
            }
            acc = acc * z[0] + inner;
        }
        acc
    }
}

/// One weight `φ(x) = A P(x/s) e^{−|x|²/s_e²}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatWeight {
    /// Expanded `P`.
    pub poly: Poly2,
    /// `P` as an unexpanded product; values near the anchors are evaluated
    /// from this form to avoid cancellation.
    pub factors: Vec<(Poly2, usize)>,
    pub scale: f64,
    pub envelope: f64,
    pub amplitude: f64,
}

impl FlatWeight {
    /// Polynomial part of `∂_axis φ` (same scale, envelope and amplitude):
    /// `s^{−1}∂_z P − (2s/s_e²) z P`.
    fn derivative_poly(&self, p: &Poly2, axis: usize) -> Poly2 {
        p.diff(axis).scale(1.0 / self.scale).add(&p.mul_z(axis).scale(-2.0 * self.scale / self.envelope.powi(2)))
    }

    /// Polynomial part of `∂^ν φ` for the multi-index `ν`.
    pub fn derivative(&self, nu: [usize; 2]) -> Poly2 {
        let mut p = self.poly.clone();
        for axis in 0..2 {
            for _ in 0..nu[axis] {
                p = self.derivative_poly(&p, axis);
            }
        }
        p
    }

    /// `∂^ν φ(x)`.
    pub fn eval_derivative(&self, nu: [usize; 2], x: [f64; 2]) -> f64 {
        if nu == [0, 0] {
            return self.value(x);
        }
        self.eval_poly(&self.derivative(nu), x)
    }

    /// `φ(x)` from the factored form.
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let z = [x[0] / self.scale, x[1] / self.scale];
        let e = (-(x[0] * x[0] + x[1] * x[1]) / self.envelope.powi(2)).exp();
        self.amplitude * self.factors.iter().map(|(f, e)| f.eval(z).powi(*e as i32)).product::<f64>() * e
    }

    fn eval_poly(&self, p: &Poly2, x: [f64; 2]) -> f64 {
        let z = [x[0] / self.scale, x[1] / self.scale];
        let e = (-(x[0] * x[0] + x[1] * x[1]) / self.envelope.powi(2)).exp();
        self.amplitude * p.eval(z) * e
    }

    fn sample(&self, p: &Poly2, grid: &Grid) -> Vec<f64> {
        grid.points_iter().map(|x| self.eval_poly(p, x)).collect()
    }
}

/// Parameters of the shipped weight family.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub anchors: Vec<[f64; 2]>,
    /// Flatness order `ν_*`.
    pub flatness: usize,
    /// Gaussian envelope width `s_e`.
    pub envelope: f64,
    /// Polynomial length scale `s`.
    pub scale: f64,
    /// Target `max |φ_k|` over the grid.
    pub amplitude: f64,
    pub modes: usize,
}

/// The weights with their hypothesis flags.
#[derive(Clone, Debug)]
pub struct FlatWeights {
    pub dim: usize,
    pub spec: WeightSpec,
    pub weights: Vec<FlatWeight>,
    /// `ν_* < 5`: below what the blow-up construction assumes.
    pub below_hypothesis: bool,
}

/// Largest `⟨x⟩²|∂^ν φ_k|` allowed on the box boundary for `|ν| ≤ 4`.
pub const DECAY_TOLERANCE: f64 = 1e-6;

fn multi_indices(dim: usize, max_order: usize) -> Vec<[usize; 2]> {
    let mut v = Vec::new();
    for n in 0..=max_order {
        if dim == 1 {
            v.push([n, 0]);
        } else {
            for i in 0..=n {
                v.push([n - i, i]);
            }
        }
    }
    v
}

/// Monomial multipliers in graded order: `1, z₁, z₂, z₁², z₁z₂, …`.
fn mode_multiplier(dim: usize, k: usize) -> Poly2 {
    if dim == 1 {
        return Poly2::monomial(k, 0);
    }
    let mut count = 0;
    for n in 0.. {
        for j in 0..=n {
            if count == k {
                return Poly2::monomial(n - j, j);
            }
            count += 1;
        }
    }
    unreachable!()
}

/// Builds weights vanishing to order `ν_*+1` at every anchor, normalized to
/// `max_grid |φ_k| = amplitude`, and checks the decay at the box boundary.
pub fn make_flat_weights(grid: &Arc<Grid>, spec: WeightSpec) -> Result<FlatWeights> {
    let dim = grid.dim();
    if !(spec.envelope > 0.0) || !(spec.scale > 0.0) || !(spec.amplitude >= 0.0) {
        return Err(Error::InvalidParameter("noise envelope, scale and amplitude must be positive".into()));
    }
    for (i, a) in spec.anchors.iter().enumerate() {
        if spec.anchors[i + 1..].iter().any(|b| b == a) {
            return Err(Error::Degenerate("noise anchors must be distinct".into()));
        }
    }
    let s = spec.scale;
    let mut factors = Vec::new();
    for a in &spec.anchors {
        let z = [a[0] / s, a[1] / s];
        let factor = if dim == 1 {
            (Poly2::monomial(1, 0).add(&Poly2::constant(-z[0])), spec.flatness + 1)
        } else {
            let dx = Poly2::monomial(1, 0).add(&Poly2::constant(-z[0]));
            let dy = Poly2::monomial(0, 1).add(&Poly2::constant(-z[1]));
            // |z − z_j|^{2m} with 2m ≥ ν_*+1.
            (dx.pow(2).add(&dy.pow(2)), (spec.flatness + 1).div_ceil(2))
        };
        factors.push(factor);
    }
    let mut weights = Vec::with_capacity(spec.modes);
    for k in 0..spec.modes {
        let mut fs = factors.clone();
        fs.push((mode_multiplier(dim, k), 1));
        let mut w = FlatWeight {
            poly: fs.iter().fold(Poly2::constant(1.0), |acc, (f, e)| acc.mul(&f.pow(*e))),
            factors: fs,
            scale: s,
            envelope: spec.envelope,
            amplitude: 1.0,
        };
        let peak = grid.points_iter().map(|x| w.value(x)).collect::<Vec<_>>().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak > 0.0) {
            return Err(Error::Degenerate("noise weight vanishes on the grid".into()));
        }
        w.amplitude = spec.amplitude / peak;
        weights.push(w);
    }
    let below_hypothesis = spec.flatness < 5;
    let out = FlatWeights { dim, spec, weights, below_hypothesis };
    let worst = out.boundary_decay(grid);
    if worst > DECAY_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "noise weights fail the decay check at the box boundary: ⟨x⟩²|∂^ν φ| = {worst:.3e} > {DECAY_TOLERANCE:e}; \
             move the anchors inward or shrink the envelope"
        )));
    }
    Ok(out)
}

impl FlatWeights {
    /// No weights at all.
    pub fn none(dim: usize) -> Self {
        FlatWeights {
            dim,
            spec: WeightSpec { anchors: vec![], flatness: 0, envelope: 1.0, scale: 1.0, amplitude: 0.0, modes: 0 },
            weights: vec![],
            below_hypothesis: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `max ⟨x⟩²|∂^ν φ_k|` over boundary nodes and `|ν| ≤ 4`.
    pub fn boundary_decay(&self, grid: &Grid) -> f64 {
        let n = grid.points();
        let boundary: Vec<[f64; 2]> = (0..grid.len())
            .filter(|&idx| {
                let (i, j) = if grid.dim() == 1 { (idx, 1) } else { (idx / n, idx % n) };
                i == 0 || i == n - 1 || (grid.dim() == 2 && (j == 0 || j == n - 1))
            })
            .map(|idx| grid.point(idx))
            .collect();
        let mut worst: f64 = 0.0;
        for w in &self.weights {
            for nu in multi_indices(self.dim, 4) {
                let p = w.derivative(nu);
                for x in &boundary {
                    let bracket = 1.0 + x[0] * x[0] + x[1] * x[1];
                    worst = worst.max(bracket * w.eval_poly(&p, *x).abs());
                }
            }
        }
        worst
    }

    /// `max |∂^ν φ_k(x_j)|` over anchors, modes and `|ν| ≤ ν_*`.
    pub fn flatness_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in &self.weights {
            for nu in multi_indices(self.dim, self.spec.flatness) {
                let p = w.derivative(nu);
                for a in &self.spec.anchors {
                    worst = worst.max(w.eval_poly(&p, *a).abs());
                }
            }
        }
        worst
    }

    /// `sup_{|x − x_j| ≤ r} |φ_k(x)|` sampled on a polar (or interval) mesh.
    pub fn sup_near_anchor(&self, mode: usize, anchor: usize, radius: f64) -> f64 {
        let w = &self.weights[mode];
        let a = self.spec.anchors[anchor];
        let mut worst: f64 = 0.0;
        let samples = 64;
        for i in 0..=samples {
            let rr = radius * i as f64 / samples as f64;
            if self.dim == 1 {
                for sgn in [-1.0, 1.0] {
                    worst = worst.max(w.value([a[0] + sgn * rr, 0.0]).abs());
                }
            } else {
                for k in 0..32 {
                    let ang = std::f64::consts::TAU * k as f64 / 32.0;
                    let x = [a[0] + rr * ang.cos(), a[1] + rr * ang.sin()];
                    worst = worst.max(w.value(x).abs());
                }
            }
        }
        worst
    }
}

/// Seeded Brownian paths on a uniform mesh, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPaths {
    dt: f64,
    t_max: f64,
    /// `paths[k][i] = B_k(i·dt)`.
    paths: Vec<Vec<f64>>,
}

/// Samples `modes` independent paths with `N(0, dt)` increments from a
/// ChaCha8 stream seeded by `seed`, drawing time-major.
pub fn sample_brownian(seed: u64, t_max: f64, dt: f64, modes: usize) -> Result<BrownianPaths> {
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::InvalidParameter("Brownian mesh needs dt > 0 and t_max ≥ 0".into()));
    }
    let steps = (t_max / dt).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let mut paths = vec![Vec::with_capacity(steps + 1); modes];
    paths.iter_mut().for_each(|p| p.push(0.0));
    for i in 0..steps {
        for p in paths.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            p.push(p[i] + sd * z);
        }
    }
    Ok(BrownianPaths { dt, t_max, paths })
}

impl BrownianPaths {
    /// Paths held at fixed values on `[0, t_max]`.
    pub fn constant(values: &[f64], t_max: f64, dt: f64) -> Self {
        let steps = ((t_max / dt).ceil() as usize).max(1);
        BrownianPaths { dt, t_max, paths: values.iter().map(|&v| vec![v; steps + 1]).collect() }
    }

    pub fn modes(&self) -> usize {
        self.paths.len()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn value(&self, mode: usize, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.t_max) {
            return Err(Error::TimeOutOfRange { t, start: 0.0, end: self.t_max });
        }
        let p = &self.paths[mode];
        let u = t / self.dt;
        let i = (u.floor() as usize).min(p.len() - 2);
        let f = u - i as f64;
        Ok(p[i] + f * (p[i + 1] - p[i]))
    }

    pub fn values_at(&self, t: f64) -> Result<Vec<f64>> {
        (0..self.modes()).map(|k| self.value(k, t)).collect()
    }

    /// CSV with header `t,B_1,…,B_N`, one row per mesh node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 0..self.modes() {
            write!(s, ",B_{}", k + 1).unwrap();
        }
        s.push('\n');
        let rows = self.paths.first().map_or(0, |p| p.len());
        for i in 0..rows {
            write!(s, "{:e}", i as f64 * self.dt).unwrap();
            for p in &self.paths {
                write!(s, ",{:e}", p[i]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Weights plus paths.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub weights: FlatWeights,
    pub paths: Option<BrownianPaths>,
}

impl NoiseModel {
    pub fn none(dim: usize) -> Self {
        NoiseModel { weights: FlatWeights::none(dim), paths: None }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty() || self.weights.spec.amplitude == 0.0
    }

    /// `B(t)` for every mode; empty without noise.
    pub fn path_values(&self, t: f64) -> Result<Vec<f64>> {
        match &self.paths {
            Some(p) if !self.weights.is_empty() => p.values_at(t),
            _ => Ok(vec![]),
        }
    }
}

/// Real fields sampled from the weights and their derivatives on one grid.
#[derive(Clone, Debug)]
pub struct NoiseOnGrid {
    pub grid: Arc<Grid>,
    pub model: Arc<NoiseModel>,
    pub phi: Vec<Vec<f64>>,
    /// `∂_i φ_k`: `grad[k][i]`.
    pub grad: Vec<Vec<Vec<f64>>>,
    /// `∂_i∂_j φ_k` as `hessian[k][i][j]`.
    pub hessian: Vec<Vec<Vec<Vec<f64>>>>,
    pub lap: Vec<Vec<f64>>,
    pub bilap: Vec<Vec<f64>>,
}

/// `b` (one field per axis) and `c`.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub b: Vec<Field>,
    pub c: Field,
}

/// Direction of the gauge map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gauge {
    /// `u = e^{−W} X`.
    ToU,
    /// `X = e^{W} u`.
    ToX,
}

impl NoiseOnGrid {
    pub fn new(grid: &Arc<Grid>, model: Arc<NoiseModel>) -> Result<Self> {
        if model.weights.dim != grid.dim() {
            return Err(Error::InvalidParameter("noise and grid dimensions differ".into()));
        }
        let d = grid.dim();
        let mut out = NoiseOnGrid {
            grid: grid.clone(),
            model: model.clone(),
            phi: vec![],
            grad: vec![],
            hessian: vec![],
            lap: vec![],
            bilap: vec![],
        };
        for w in &model.weights.weights {
            let unit = |i: usize| if i == 0 { [1, 0] } else { [0, 1] };
            out.phi.push(grid.points_iter().map(|x| w.value(x)).collect());
            out.grad.push((0..d).map(|i| w.sample(&w.derivative(unit(i)), grid)).collect());
            out.hessian.push(
                (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| {
                                let u = unit(i);
                                let v = unit(j);
                                w.sample(&w.derivative([u[0] + v[0], u[1] + v[1]]), grid)
                            })
                            .collect()
                    })
                    .collect(),
            );
            let lap_poly = (0..d).fold(Poly2::zero(0), |acc, i| {
                let u = unit(i);
                acc.add(&w.derivative([2 * u[0], 2 * u[1]]))
            });
            out.lap.push(w.sample(&lap_poly, grid));
            let bilap_poly = if d == 1 {
                w.derivative([4, 0])
            } else {
                w.derivative([4, 0]).add(&w.derivative([2, 2]).scale(2.0)).add(&w.derivative([0, 4]))
            };
            out.bilap.push(w.sample(&bilap_poly, grid));
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.model.is_zero()
    }

    fn combine(&self, fields: &[&Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (f, &c) in fields.iter().zip(coeffs) {
            if c != 0.0 {
                out.iter_mut().zip(f.iter()).for_each(|(o, v)| *o += c * v);
            }
        }
        out
    }

    /// `a(t) = Σ φ_k B_k(t)`, so that `W = i a`.
    pub fn phase(&self, t: f64) -> Result<Vec<f64>> {
        let b = self.model.path_values(t)?;
        Ok(self.combine(&self.phi.iter().collect::<Vec<_>>(), &b))
    }

    /// `∇a(t)`, one array per axis.
    pub fn phase_gradient(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        let b = self.model.path_values(t)?;
        Ok((0..self.grid.dim())
            .map(|i| self.combine(&self.grad.iter().map(|g| &g[i]).collect::<Vec<_>>(), &b))
            .collect())
    }

    /// `Δa(t)`.
    pub fn phase_laplacian(&self, t: f64) -> Result<Vec<f64>> {
        let b = self.model.path_values(t)?;
        Ok(self.combine(&self.lap.iter().collect::<Vec<_>>(), &b))
    }

    /// `b = 2i∇a` and `c = −|∇a|² + iΔa`.
    pub fn coefficients_at(&self, t: f64) -> Result<Coefficients> {
        let grid = &self.grid;
        if let Some(p) = &self.model.paths {
            if !(t >= 0.0 && t <= p.t_max()) {
                return Err(Error::TimeOutOfRange { t, start: 0.0, end: p.t_max() });
            }
        }
        let ga = self.phase_gradient(t)?;
        let la = self.phase_laplacian(t)?;
        let b = ga
            .iter()
            .map(|g| Field::from_values(grid, g.iter().map(|&v| Complex64::new(0.0, 2.0 * v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let c = (0..grid.len())
            .map(|i| {
                let g2: f64 = ga.iter().map(|g| g[i] * g[i]).sum();
                Complex64::new(-g2, la[i])
            })
            .collect();
        Ok(Coefficients { b, c: Field::from_values(grid, c)? })
    }

    /// `u = e^{−W}X` (`ToU`) or its inverse (`ToX`) at time `t`.
    pub fn gauge(&self, f: &Field, t: f64, direction: Gauge) -> Result<Field> {
        if !f.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        if let Some(p) = &self.model.paths {
            if !(t >= 0.0 && t <= p.t_max()) {
                return Err(Error::TimeOutOfRange { t, start: 0.0, end: p.t_max() });
            }
        }
        let a = self.phase(t)?;
        if a.is_empty() {
            return Ok(f.clone());
        }
        let sign = match direction {
            Gauge::ToU => -1.0,
            Gauge::ToX => 1.0,
        };
        let values = f.values().iter().zip(&a).map(|(z, &ai)| z * Complex64::from_polar(1.0, sign * ai)).collect();
        Field::from_values(f.grid(), values)
    }
}
