//! Pairs of nearby solutions: the difference `w = v − u`, its functional
//! `D(t)`, the unstable-direction products `Scal_j`, the contraction
//! inequality between them, and Cauchy checks over sequences of
//! approximants.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::difference_functional;
use crate::evolution::{Checkpoint, Trajectory};
use crate::ground_state::{DirectionFields, GroundState};
use crate::modulation::{renormalize_remainder, scal, Localizers};
use crate::profiles::{sum_profiles, BubbleParams, BubbleSet};
use crate::spectral::{gradient_norm_sq, l2_norm, l2_norm_sq, Field, Grid};
use crate::{Complex64, Error, Result};

/// Relative tolerance for matching checkpoint times across runs.
const TIME_MATCH: f64 = 1e-12;

fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_MATCH * a.abs().max(b.abs()).max(1.0)
}

/// Two trajectories with identical grids and checkpoint times.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub base: Vec<Checkpoint>,
    pub perturbed: Vec<Checkpoint>,
}

impl PairRun {
    pub fn new(base: &Trajectory, perturbed: &Trajectory) -> Result<Self> {
        Self::from_checkpoints(base.checkpoints.clone(), perturbed.checkpoints.clone())
    }

    pub fn from_checkpoints(base: Vec<Checkpoint>, perturbed: Vec<Checkpoint>) -> Result<Self> {
        if base.len() != perturbed.len() {
            return Err(Error::Mismatch(format!("{} vs {} checkpoints", base.len(), perturbed.len())));
        }
        for (a, b) in base.iter().zip(&perturbed) {
            if !times_match(a.t, b.t) {
                return Err(Error::Mismatch(format!("checkpoint times {} and {} differ", a.t, b.t)));
            }
            if !a.field.same_grid(&b.field) {
                return Err(Error::Mismatch(format!("grids differ at t = {}", a.t)));
            }
        }
        Ok(PairRun { base, perturbed })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.base.iter().map(|c| c.t).collect()
    }

    /// `w = v − u` at checkpoint `i`.
    pub fn difference(&self, i: usize) -> Field {
        &self.perturbed[i].field - &self.base[i].field
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceRow {
    pub t: f64,
    pub d: f64,
    /// `Scal_j` of `ε_j`, the renormalization of `w_j = wΦ_j`.
    pub scal: Vec<f64>,
    pub lambda: Vec<f64>,
    pub w_l2: f64,
}

/// `D(t)` and `Scal_j(t)` along a pair, using the base run's modulation
/// parameters at each checkpoint.
pub fn difference_series(
    pair: &PairRun,
    base_params: &[Vec<BubbleParams>],
    loc: &Localizers,
    dirs: &DirectionFields,
) -> Result<Vec<DifferenceRow>> {
    if base_params.len() != pair.len() {
        return Err(Error::Mismatch(format!(
            "{} parameter sets for {} checkpoints",
            base_params.len(),
            pair.len()
        )));
    }
    let mut rows = Vec::with_capacity(pair.len());
    for (i, params) in base_params.iter().enumerate() {
        if params.len() != loc.len() {
            return Err(Error::Mismatch("bubble and localizer counts differ".into()));
        }
        let w = pair.difference(i);
        let lambda: Vec<f64> = params.iter().map(|p| p.lambda).collect();
        let d = difference_functional(&w, loc, &lambda)?;
        let mut s = Vec::with_capacity(params.len());
        for (p, phi) in params.iter().zip(&loc.phi) {
            s.push(scal(&renormalize_remainder(&w, phi, p)?, dirs)?.value);
        }
        rows.push(DifferenceRow { t: pair.base[i].t, d, scal: s, lambda, w_l2: l2_norm(&w) });
    }
    Ok(rows)
}

/// `e_j(y) = ẽ_j(y) e^{−i(β·y − γ|y|²/4)}` where
/// `w(x) = λ^{−d/2} ẽ_j((x−α)/λ) e^{iθ}`; no localization is applied.
pub fn renormalized_difference(w: &Field, p: &BubbleParams) -> Result<Field> {
    let ones = vec![1.0; w.grid().len()];
    let tilde = renormalize_remainder(w, &ones, p)?;
    let d = w.grid().dim();
    Ok(tilde.map_with_point(|y, z| {
        let by: f64 = (0..d).map(|i| p.beta[i] * y[i]).sum();
        let y2: f64 = (0..d).map(|i| y[i] * y[i]).sum();
        z * Complex64::from_polar(1.0, -(by - 0.25 * p.gamma * y2))
    }))
}

/// How the perturbed member of a pair departs from `ΣS_j(t_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    /// `λ_j ← λ_j(1 + δ_λ)`, `θ_j ← θ_j(1 + δ_θ)`.
    Jitter { lambda: f64, theta: f64 },
    /// Adds Gaussian bumps of width `λ_j` at every center with seeded random
    /// phases, scaled to `relative · ‖u_n‖`.
    Additive { relative: f64, seed: u64 },
}

/// Boundary data at `t_n` for the perturbed run.
pub fn perturbed_data(
    set: &BubbleSet,
    t_n: f64,
    blowup_time: f64,
    perturbation: Perturbation,
    gs: &GroundState,
    grid: &Arc<Grid>,
) -> Result<Field> {
    let mut params = set.pseudo_conformal_params(blowup_time, t_n)?;
    match perturbation {
        Perturbation::Jitter { lambda, theta } => {
            for p in &mut params {
                p.lambda *= 1.0 + lambda;
                p.theta *= 1.0 + theta;
            }
            sum_profiles(&params, gs, grid)
        }
        Perturbation::Additive { relative, seed } => {
            let u = sum_profiles(&params, gs, grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let period = 2.0 * grid.extent();
            let d = grid.dim();
            let mut bump = Field::zeros(grid);
            for p in &params {
                let c = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
                let g = Field::from_fn(grid, |x| {
                    let r2: f64 = (0..d)
                        .map(|i| {
                            let v = x[i] - p.alpha[i];
                            let v = v - period * (v / period).round();
                            v * v
                        })
                        .sum();
                    c * (-0.5 * r2 / (p.lambda * p.lambda)).exp()
                });
                bump += &g;
            }
            let scale = relative * l2_norm(&u) / l2_norm(&bump);
            Ok(&u + &(&bump * scale))
        }
    }
}

/// Both sides of the contraction inequality at one checkpoint:
///
/// ```text
/// lhs = sup_{t≤s≤t̃} D(s)
/// rhs = D(t̃) + sup_{t≤s≤t̃} Σ_j Scal_j/λ_j² + ∫_t^{t̃} Σ_j Scal_j/λ_j³ + ε* D/(T−s) ds
/// ```
///
/// where `t̃` is the latest checkpoint (the data time of the pair).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionTerm {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn contraction_terms(rows: &[DifferenceRow], blowup_time: f64, eps_star: f64) -> Result<Vec<ContractionTerm>> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData("contraction check needs two checkpoints".into()));
    }
    let mut sorted: Vec<&DifferenceRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.t.total_cmp(&a.t));
    let scal2 = |r: &DifferenceRow| r.scal.iter().zip(&r.lambda).map(|(s, l)| s / (l * l)).sum::<f64>();
    let integrand = |r: &DifferenceRow| {
        r.scal.iter().zip(&r.lambda).map(|(s, l)| s / l.powi(3)).sum::<f64>() + eps_star * r.d / (blowup_time - r.t)
    };
    let boundary = sorted[0].d;
    let mut sup_d = sorted[0].d;
    let mut sup_s = scal2(sorted[0]);
    let mut integral = 0.0;
    let mut out = vec![ContractionTerm { t: sorted[0].t, lhs: sup_d, rhs: boundary + sup_s }];
    for w in sorted.windows(2) {
        let (later, r) = (w[0], w[1]);
        integral += 0.5 * (later.t - r.t) * (integrand(later) + integrand(r));
        sup_d = sup_d.max(r.d);
        sup_s = sup_s.max(scal2(r));
        out.push(ContractionTerm { t: r.t, lhs: sup_d, rhs: boundary + sup_s + integral });
    }
    Ok(out)
}

/// One-time fit of the contraction constant: the geometric mean of
/// `lhs/rhs` over terms with a positive right side.
pub fn fit_contraction_constant(terms: &[ContractionTerm]) -> Result<f64> {
    let logs: Vec<f64> = terms.iter().filter(|c| c.rhs > 0.0 && c.lhs > 0.0).map(|c| (c.lhs / c.rhs).ln()).collect();
    if logs.is_empty() {
        return Err(Error::Degenerate("no checkpoint with positive D".into()));
    }
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// `max lhs / (C·rhs)`: how far the worst checkpoint exceeds the fitted bound.
pub fn contraction_slack(terms: &[ContractionTerm], constant: f64) -> f64 {
    terms.iter().filter(|c| c.rhs > 0.0).map(|c| c.lhs / (constant * c.rhs)).fold(0.0, f64::max)
}

/// CSV `t,D,scal_1,…,scal_K`.
pub fn pair_csv(rows: &[DifferenceRow]) -> String {
    let k = rows.first().map_or(0, |r| r.scal.len());
    let mut s = String::from("t,D");
    for j in 1..=k {
        write!(s, ",scal_{j}").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{:e},{:e}", r.t, r.d).unwrap();
        for v in &r.scal {
            write!(s, ",{v:e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// One approximant `u_n` of a Cauchy check.
#[derive(Clone, Debug)]
pub struct CauchyMember {
    pub t_n: f64,
    /// Fingerprint of everything but `t_n` (grid, bubbles, noise, seed).
    pub key: String,
    /// `u_n` at the common final time.
    pub state: Field,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyReport {
    /// Ascending.
    pub t_n: Vec<f64>,
    pub l2: Vec<Vec<f64>>,
    pub h1: Vec<Vec<f64>>,
    /// L² distance matrices at checkpoint times shared by every member.
    pub shared: Vec<(f64, Vec<Vec<f64>>)>,
    /// L² distance of each member to the one with the largest `t_n`.
    pub to_latest: Vec<f64>,
    /// `to_latest` strictly decreases (excluding the latest member itself).
    pub decreasing: bool,
}

fn distance_matrices(fields: &[&Field]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = fields.len();
    let mut l2 = vec![vec![0.0; n]; n];
    let mut h1 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = fields[i] - fields[j];
            let m = l2_norm_sq(&w);
            l2[i][j] = m.sqrt();
            h1[i][j] = (m + gradient_norm_sq(&w)).sqrt();
            l2[j][i] = l2[i][j];
            h1[j][i] = h1[i][j];
        }
    }
    (l2, h1)
}

pub fn cauchy_check(members: &[CauchyMember]) -> Result<CauchyReport> {
    if members.len() < 3 {
        return Err(Error::InsufficientData(format!("Cauchy check needs 3 runs, got {}", members.len())));
    }
    let first = &members[0];
    for m in &members[1..] {
        if m.key != first.key {
            return Err(Error::Mismatch(format!("run configurations differ: {:?} vs {:?}", first.key, m.key)));
        }
        if !m.state.same_grid(&first.state) {
            return Err(Error::Mismatch("runs live on different grids".into()));
        }
    }
    let mut sorted: Vec<&CauchyMember> = members.iter().collect();
    sorted.sort_by(|a, b| a.t_n.total_cmp(&b.t_n));
    let states: Vec<&Field> = sorted.iter().map(|m| &m.state).collect();
    let (l2, h1) = distance_matrices(&states);

    let mut shared = Vec::new();
    for c in &sorted[0].checkpoints {
        let fields: Option<Vec<&Field>> = sorted
            .iter()
            .map(|m| m.checkpoints.iter().find(|o| times_match(o.t, c.t)).map(|o| &o.field))
            .collect();
        if let Some(f) = fields {
            shared.push((c.t, distance_matrices(&f).0));
        }
    }
    let last = sorted.len() - 1;
    let to_latest: Vec<f64> = (0..sorted.len()).map(|i| l2[i][last]).collect();
    let decreasing = to_latest[..last].windows(2).all(|w| w[1] < w[0]);
    Ok(CauchyReport { t_n: sorted.iter().map(|m| m.t_n).collect(), l2, h1, shared, to_latest, decreasing })
}

/// CSV `t_n_i,t_n_j,l2,h1` over unordered pairs.
pub fn cauchy_csv(r: &CauchyReport) -> String {
    let mut s = String::from("t_n_i,t_n_j,l2,h1\n");
    for i in 0..r.t_n.len() {
        for j in i + 1..r.t_n.len() {
            writeln!(s, "{:e},{:e},{:e},{:e}", r.t_n[i], r.t_n[j], r.l2[i][j], r.h1[i][j]).unwrap();
        }
    }
    s
}
