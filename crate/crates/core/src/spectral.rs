//! Periodic uniform grids, FFT-based differentiation, quadrature and norms.
//!
//! Every field in the crate lives on a [`Grid`]: `N` points per axis on the
//! box `[−L, L)^d` with spacing `h = 2L/N`. Derivatives are spectral, and
//! integrals are the uniform Riemann sum `h^d Σ`, which is spectrally accurate
//! for smooth periodic data.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniform periodic mesh on `[−L, L)^d` with its discrete wavenumbers.
pub struct Grid {
    dim: usize,
    extent: f64,
    points: usize,
    spacing: f64,
    axis: Vec<f64>,
    wavenumbers: Vec<f64>,
    // Nyquist mode removed; used for odd-order derivatives.
    deriv_wavenumbers: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("extent", &self.extent)
            .field("points", &self.points)
            .finish()
    }
}

/// Builds a grid; `points` must be a power of two and at least 8.
pub fn make_grid(dim: usize, extent: f64, points: usize) -> Result<Arc<Grid>> {
    Grid::new(dim, extent, points)
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Arc<Grid>> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points {points} must be a power of two and at least 8"
            )));
        }
        let spacing = 2.0 * extent / points as f64;
        let half = (points / 2) as f64;
        // (j − N/2)·h is exactly antisymmetric under j ↦ N − j.
        let axis = (0..points).map(|j| (j as f64 - half) * spacing).collect();
        let base = std::f64::consts::PI / extent;
        let wavenumbers: Vec<f64> = (0..points)
            .map(|m| {
                let m = if m < points / 2 { m as f64 } else { m as f64 - points as f64 };
                m * base
            })
            .collect();
        let mut deriv_wavenumbers = wavenumbers.clone();
        deriv_wavenumbers[points / 2] = 0.0;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(points);
        let ifft = planner.plan_fft_inverse(points);
        Ok(Arc::new(Grid {
            dim,
            extent,
            points,
            spacing,
            axis,
            wavenumbers,
            deriv_wavenumbers,
            fft,
            ifft,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half-width `L` of the box.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Node coordinates along one axis.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Wavenumbers along one axis in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Coordinates of node `idx` (second component is zero in 1D).
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.axis[idx], 0.0]
        } else {
            [self.axis[idx / self.points], self.axis[idx % self.points]]
        }
    }

    /// Wavevector of spectral index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.wavenumbers[idx], 0.0]
        } else {
            [self.wavenumbers[idx / self.points], self.wavenumbers[idx % self.points]]
        }
    }

    #[inline]
    fn deriv_wavevector(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.deriv_wavenumbers[idx], 0.0]
        } else {
            [
                self.deriv_wavenumbers[idx / self.points],
                self.deriv_wavenumbers[idx % self.points],
            ]
        }
    }

    pub fn points_iter(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Same shape and box (grids built separately with equal parameters compare equal).
    pub fn same_as(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && self.extent.to_bits() == other.extent.to_bits()
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse DFT in place, normalized so that `inverse ∘ forward = id`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let plan = if inverse { &self.ifft } else { &self.fft };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        if self.dim == 2 {
            transpose_square(data, self.points);
            plan.process_with_scratch(data, &mut scratch);
            transpose_square(data, self.points);
        }
    }

    /// Applies a Fourier multiplier `symbol(k)` to `values` in place.
    pub fn apply_symbol<F>(&self, values: &mut [Complex64], symbol: F)
    where
        F: Fn([f64; 2]) -> Complex64,
    {
        self.forward(values);
        for (idx, z) in values.iter_mut().enumerate() {
            *z *= symbol(self.wavevector(idx));
        }
        self.inverse(values);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Complex samples on a grid.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("l2", &l2_norm(self))
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field { grid: grid.clone(), values: vec![ZERO; grid.len()] }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub fn from_real(grid: &Arc<Grid>, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: &Arc<Grid>, f: F) -> Self
    where
        F: Fn([f64; 2]) -> Complex64,
    {
        let values = grid.points_iter().map(f).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn from_real_fn<F>(grid: &Arc<Grid>, f: F) -> Self
    where
        F: Fn([f64; 2]) -> f64,
    {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid)
    }

    pub fn map<F>(&self, f: F) -> Field
    where
        F: Fn(Complex64) -> Complex64,
    {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&z| f(z)).collect() }
    }

    /// Pointwise `f(x, value)`.
    pub fn map_with_point<F>(&self, f: F) -> Field
    where
        F: Fn([f64; 2], Complex64) -> Complex64,
    {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &z)| f(self.grid.point(i), z))
            .collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn zip_map<F>(&self, other: &Field, f: F) -> Field
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        assert_same_grid(self, other);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Field { grid: self.grid.clone(), values }
    }

    /// Pointwise product with a real weight array.
    pub fn weighted(&self, weight: &[f64]) -> Field {
        assert_eq!(weight.len(), self.values.len());
        let values = self.values.iter().zip(weight).map(|(&z, &w)| z * w).collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    pub fn real_part(&self) -> Field {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn imag_part(&self) -> Field {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    pub fn scale(&self, s: Complex64) -> Field {
        self.map(|z| z * s)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn assert_same_grid(a: &Field, b: &Field) {
    assert!(a.same_grid(b), "field operation across different grids");
}

impl Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        assert_same_grid(self, rhs);
        self.values.iter_mut().zip(&rhs.values).for_each(|(a, &b)| *a += b);
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        assert_same_grid(self, rhs);
        self.values.iter_mut().zip(&rhs.values).for_each(|(a, &b)| *a -= b);
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|z| z * rhs)
    }
}

impl Mul<Complex64> for &Field {
    type Output = Field;
    fn mul(self, rhs: Complex64) -> Field {
        self.map(|z| z * rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|z| -z)
    }
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let mut values = f.values.clone();
    f.grid.apply_symbol(&mut values, |k| Complex64::new(-(k[0] * k[0] + k[1] * k[1]), 0.0));
    Field { grid: f.grid.clone(), values }
}

/// Spectral partial derivative along `axis`.
pub fn partial(f: &Field, axis: usize) -> Field {
    assert!(axis < f.grid.dim, "axis out of range");
    let grid = &f.grid;
    let mut values = f.values.clone();
    grid.forward(&mut values);
    for (idx, z) in values.iter_mut().enumerate() {
        *z *= Complex64::new(0.0, grid.deriv_wavevector(idx)[axis]);
    }
    grid.inverse(&mut values);
    Field { grid: grid.clone(), values }
}

/// Spectral gradient, one field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    let grid = &f.grid;
    let mut spectrum = f.values.clone();
    grid.forward(&mut spectrum);
    (0..grid.dim)
        .map(|axis| {
            let mut values: Vec<Complex64> = spectrum
                .iter()
                .enumerate()
                .map(|(idx, &z)| z * Complex64::new(0.0, grid.deriv_wavevector(idx)[axis]))
                .collect();
            grid.inverse(&mut values);
            Field { grid: grid.clone(), values }
        })
        .collect()
}

/// Unnormalized DFT coefficients of `f`.
pub fn spectrum(f: &Field) -> Vec<Complex64> {
    let mut values = f.values.clone();
    f.grid.forward(&mut values);
    values
}

/// `⟨f, g⟩ = ∫ f ḡ dx` by the uniform quadrature.
pub fn inner(f: &Field, g: &Field) -> Result<Complex64> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    Ok(inner_unchecked(f, g))
}

pub(crate) fn inner_unchecked(f: &Field, g: &Field) -> Complex64 {
    let sum: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum();
    sum * f.grid.cell_volume()
}

/// Real pairing `Re ∫ f ḡ`.
pub fn real_inner(f: &Field, g: &Field) -> f64 {
    inner_unchecked(f, g).re
}

/// `∫ w |f|² dx` for a real weight.
pub fn weighted_mass(f: &Field, weight: &[f64]) -> f64 {
    let s: f64 = f.values.iter().zip(weight).map(|(z, w)| w * z.norm_sqr()).sum();
    s * f.grid.cell_volume()
}

pub fn l2_norm_sq(f: &Field) -> f64 {
    f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.cell_volume()
}

pub fn l2_norm(f: &Field) -> f64 {
    l2_norm_sq(f).sqrt()
}

/// `‖∇f‖²_{L²}` evaluated in Fourier space.
pub fn gradient_norm_sq(f: &Field) -> f64 {
    let grid = &f.grid;
    let coeffs = spectrum(f);
    // Parseval: ∫|g|² = h^d / N^d Σ |ĝ|².
    let s: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let k = grid.wavevector(idx);
            (k[0] * k[0] + k[1] * k[1]) * z.norm_sqr()
        })
        .sum();
    s * grid.cell_volume() / grid.len() as f64
}

/// Norms reported by [`norms`].
#[derive(Clone, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    /// `‖∇f‖_{L²}`.
    pub h1_seminorm: f64,
    /// `‖x f‖_{L²}`, truncated at the box.
    pub sigma_weight: f64,
    pub lp: Vec<(f64, f64)>,
}

pub fn norms(f: &Field, exponents: &[f64]) -> Norms {
    let grid = &f.grid;
    let vol = grid.cell_volume();
    let sigma: f64 = f
        .values
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let x = grid.point(i);
            (x[0] * x[0] + x[1] * x[1]) * z.norm_sqr()
        })
        .sum::<f64>()
        * vol;
    let lp = exponents
        .iter()
        .map(|&p| {
            let s: f64 = f.values.iter().map(|z| z.norm().powf(p)).sum::<f64>() * vol;
            (p, s.powf(1.0 / p))
        })
        .collect();
    Norms { l2: l2_norm(f), h1_seminorm: gradient_norm_sq(f).sqrt(), sigma_weight: sigma.sqrt(), lp }
}

/// Treatment of sample points that fall outside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outside {
    /// Use the periodic extension of the trigonometric interpolant.
    Periodic,
    /// Treat the field as zero outside `[−L, L)^d`.
    Zero,
}

/// Returns `g(y) = f(scale·y + shift)` sampled on the nodes of `f`'s grid,
/// using band-limited trigonometric interpolation of `f` (the Nyquist mode
/// enters as a cosine).
///
/// The targets along each axis are an affine image of the nodes, so the
/// interpolant is evaluated there with a chirp-z transform in `O(N log N)`
/// per line.
pub fn resample_affine(f: &Field, scale: f64, shift: [f64; 2], outside: Outside) -> Field {
    let grid = &f.grid;
    let n = grid.points;
    let mut values = f.values.clone();
    let lines = [LineResampler::new(grid, scale, shift[0], outside), LineResampler::new(grid, scale, shift[1], outside)];
    if grid.dim == 1 {
        lines[0].apply(&mut values);
        return Field { grid: grid.clone(), values };
    }
    for row in values.chunks_exact_mut(n) {
        lines[1].apply(row);
    }
    let mut column = vec![ZERO; n];
    for j in 0..n {
        for i in 0..n {
            column[i] = values[i * n + j];
        }
        lines[0].apply(&mut column);
        for i in 0..n {
            values[i * n + j] = column[i];
        }
    }
    Field { grid: grid.clone(), values }
}

/// Evaluates the trigonometric interpolant of one grid line at
/// `u_p = s·p + u₀` (node units), `p = 0..N`.
struct LineResampler {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    kind: LineKind,
    /// Targets dropped under [`Outside::Zero`].
    dropped: Vec<bool>,
}

enum LineKind {
    /// `u_p = p + shift` for an integer shift.
    Roll(i64),
    Chirp {
        /// `e^{2πi m u₀/N} w(m²)/N` for `m = −N/2..N/2`, Nyquist halved.
        pre: Vec<Complex64>,
        /// FFT of the chirp kernel, length `2N`.
        kernel: Vec<Complex64>,
        /// `w(p²)`.
        post: Vec<Complex64>,
        long_fft: Arc<dyn Fft<f64>>,
        long_ifft: Arc<dyn Fft<f64>>,
    },
}

impl LineResampler {
    fn new(grid: &Grid, scale: f64, shift: f64, outside: Outside) -> Self {
        let n = grid.points;
        let (l, h) = (grid.extent, grid.spacing);
        let u0 = (shift + l - scale * l) / h;
        let dropped = (0..n)
            .map(|p| {
                let x = scale * grid.axis[p] + shift;
                // Between the last node and L the interpolant still wraps.
                outside == Outside::Zero && (x < -l || x >= l)
            })
            .collect();
        if scale == 1.0 && (u0 - u0.round()).abs() < 1e-12 {
            return LineResampler { n, fft: grid.fft.clone(), kind: LineKind::Roll(u0.round() as i64), dropped };
        }
        let nf = n as f64;
        let half = (n / 2) as i64;
        // w(x) = e^{iπ s x / N}; z^{mp} = w(m²) w(p²) w(−(p−m)²).
        let w = |x: i64| -> Complex64 {
            let turns = (scale * x as f64 / nf).rem_euclid(2.0);
            Complex64::from_polar(1.0, std::f64::consts::PI * turns)
        };
        let pre = (-half..=half)
            .map(|m| {
                let weight = if m.abs() == half { 0.5 } else { 1.0 } / nf;
                let phase = 2.0 * std::f64::consts::PI * ((m as f64 * u0 / nf).rem_euclid(1.0));
                Complex64::from_polar(weight, phase) * w(m * m)
            })
            .collect();
        let len = 2 * n;
        let mut planner = FftPlanner::new();
        let long_fft = planner.plan_fft_forward(len);
        let long_ifft = planner.plan_fft_inverse(len);
        let mut kernel = vec![ZERO; len];
        // Output q = p + N/2 and input m' = m + N/2 meet at lag q − m' = p − m.
        for d in -half..(3 * half) {
            kernel[d.rem_euclid(len as i64) as usize] = w(-d * d);
        }
        long_fft.process(&mut kernel);
        let post = (0..n as i64).map(|p| w(p * p)).collect();
        LineResampler { n, fft: grid.fft.clone(), kind: LineKind::Chirp { pre, kernel, post, long_fft, long_ifft }, dropped }
    }

    fn apply(&self, line: &mut [Complex64]) {
        let n = self.n;
        match &self.kind {
            LineKind::Roll(k) => {
                let src = line.to_vec();
                for (p, v) in line.iter_mut().enumerate() {
                    *v = src[(p as i64 + k).rem_euclid(n as i64) as usize];
                }
            }
            LineKind::Chirp { pre, kernel, post, long_fft, long_ifft } => {
                let mut spec = line.to_vec();
                self.fft.process(&mut spec);
                let len = 2 * n;
                let half = n / 2;
                let mut b = vec![ZERO; len];
                for (mp, slot) in b.iter_mut().take(n + 1).enumerate() {
                    // m = mp − N/2, stored at index m mod N.
                    let idx = (mp + n - half) % n;
                    *slot = spec[idx] * pre[mp];
                }
                long_fft.process(&mut b);
                b.iter_mut().zip(kernel).for_each(|(x, k)| *x *= k);
                long_ifft.process(&mut b);
                let norm = 1.0 / len as f64;
                for (p, v) in line.iter_mut().enumerate() {
                    *v = b[p + half] * post[p] * norm;
                }
            }
        }
        for (v, &d) in line.iter_mut().zip(&self.dropped) {
            if d {
                *v = ZERO;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grid_spacing_and_size() {
        let g = make_grid(1, 16.0, 1024).unwrap();
        assert_eq!(g.spacing(), 0.03125);
        assert_eq!(g.axis()[0], -16.0);
        let g2 = make_grid(2, 12.0, 256).unwrap();
        assert_eq!(g2.len(), 65536);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(1, 16.0, 1000).is_err());
        assert!(make_grid(3, 16.0, 64).is_err());
        assert!(make_grid(1, 16.0, 4).is_err());
        assert!(make_grid(1, -1.0, 64).is_err());
    }

    #[test]
    fn laplacian_of_plane_wave_and_constant() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let k0 = 5.0 * PI / 8.0;
        let f = Field::from_fn(&g, |x| Complex64::new(0.0, k0 * x[0]).exp());
        let lf = laplacian(&f);
        for (a, b) in lf.values().iter().zip(f.values()) {
            assert!((a + b * (k0 * k0)).norm() < 1e-12);
        }
        let c = Field::from_real_fn(&g, |_| 3.0);
        assert!(laplacian(&c).linf() < 1e-13);
        assert!(partial(&c, 0).linf() < 1e-13);
    }

    #[test]
    fn derivatives_of_smooth_functions() {
        let g = make_grid(1, 16.0, 1024).unwrap();
        let f = Field::from_real_fn(&g, |x| (2.0 * x[0]).cosh().recip());
        let lf = laplacian(&f);
        // d²/dx² sech(2x) = 4 sech(2x) − 8 sech³(2x)
        let err = lf
            .values()
            .iter()
            .zip(g.axis())
            .map(|(z, &x)| {
                let s = (2.0 * x).cosh().recip();
                (z.re - (4.0 * s - 8.0 * s * s * s)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "sech laplacian error {err}");

        let gauss = Field::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        let d = partial(&gauss, 0);
        let err = d
            .values()
            .iter()
            .zip(g.axis())
            .map(|(z, &x)| (z.re + 2.0 * x * (-x * x).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "gaussian derivative error {err}");
    }

    #[test]
    fn inner_products() {
        let g = make_grid(1, 8.0, 128).unwrap();
        let a = Field::from_fn(&g, |x| Complex64::new(0.0, 3.0 * PI / 8.0 * x[0]).exp());
        let b = Field::from_fn(&g, |x| Complex64::new(0.0, 5.0 * PI / 8.0 * x[0]).exp());
        assert!(inner(&a, &b).unwrap().norm() < 1e-14);
        let aa = inner(&a, &a).unwrap();
        assert!(aa.im.abs() < 1e-14 && close(aa.re, 16.0, 1e-12));
        let other = make_grid(1, 4.0, 128).unwrap();
        assert!(inner(&a, &Field::zeros(&other)).is_err());
    }

    #[test]
    fn closed_form_quadratures_d1() {
        let g = make_grid(1, 16.0, 1024).unwrap();
        let q = Field::from_real_fn(&g, |x| 3f64.powf(0.25) * (2.0 * x[0]).cosh().recip().sqrt());
        let qq = inner(&q, &q).unwrap().re;
        assert!(close(qq, 3f64.sqrt() * PI / 2.0, 1e-12), "{qq}");
        let n = norms(&q, &[]);
        assert!(close(n.sigma_weight.powi(2), 3f64.sqrt() * PI.powi(3) / 32.0, 1e-10));
    }

    #[test]
    fn norms_of_zero_and_gaussian() {
        let g = make_grid(1, 16.0, 512).unwrap();
        let z = norms(&Field::zeros(&g), &[2.0, 4.0]);
        assert_eq!(z.l2, 0.0);
        assert_eq!(z.h1_seminorm, 0.0);
        assert_eq!(z.sigma_weight, 0.0);
        assert!(z.lp.iter().all(|&(_, v)| v == 0.0));
        let c = (2.0 / PI).powf(0.25);
        let gauss = Field::from_real_fn(&g, |x| c * (-x[0] * x[0]).exp());
        assert!(close(norms(&gauss, &[]).l2, 1.0, 1e-12));
    }

    #[test]
    fn parseval_and_integration_by_parts_2d() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let f = Field::from_fn(&g, |x| {
            Complex64::new((-(x[0] - 0.5).powi(2) - x[1] * x[1]).exp(), 0.3 * x[0].sin())
                * (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp()
        });
        let h = Field::from_fn(&g, |x| Complex64::new(x[1], 1.0) * (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp());
        let direct = inner(&f, &h).unwrap();
        let (sf, sh) = (spectrum(&f), spectrum(&h));
        let spec: Complex64 = sf.iter().zip(&sh).map(|(a, b)| a * b.conj()).sum::<Complex64>()
            * g.cell_volume()
            / g.len() as f64;
        assert!((direct - spec).norm() <= 1e-12 * direct.norm());

        let lhs = inner(&laplacian(&f), &h).unwrap();
        let gf = gradient(&f);
        let gh = gradient(&h);
        let rhs = -(inner(&gf[0], &gh[0]).unwrap() + inner(&gf[1], &gh[1]).unwrap());
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-300));
    }

    #[test]
    fn refinement_reduces_derivative_error() {
        let err = |n: usize| {
            let g = make_grid(1, 16.0, n).unwrap();
            let f = Field::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
            let d = partial(&f, 0);
            d.values()
                .iter()
                .zip(g.axis())
                .map(|(z, &x)| (z.re + 2.0 * x * (-x * x).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (e32, e64, e128) = (err(32), err(64), err(128));
        assert!(e32 > 10.0 * e64, "{e32} {e64}");
        assert!(e64 > 10.0 * e128 || e128 < 1e-13, "{e64} {e128}");
    }

    #[test]
    fn resample_shift_and_scale() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let f = Field::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let r = resample_affine(&f, 0.5, [0.3, -0.2], Outside::Periodic);
        let err = r
            .values()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let y = g.point(i);
                let (a, b) = (0.5 * y[0] + 0.3, 0.5 * y[1] - 0.2);
                (z.re - (-(a * a + b * b)).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        let id = resample_affine(&f, 1.0, [0.0, 0.0], Outside::Zero);
        assert!((&id - &f).linf() < 1e-15);
    }
}
