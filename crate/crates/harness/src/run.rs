//! Experiment orchestration: backward constructions with their diagnostics,
//! uniqueness pairs, Cauchy checks and seed sweeps.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bubblelab::diagnostics::{
    diagnostics_csv, energy_rate, fit_blowup_rate, generalized_energy, difference_functional, localized_mass,
    rate_window, DiagnosticsRow, MorawetzWeight, MIN_RATE_SAMPLES,
};
use bubblelab::evolution::{construct_approximant, construct_from, Checkpoint, Propagator, Status, StepController, Trajectory};
use bubblelab::fit::linear_fit;
use bubblelab::ground_state::{DirectionFields, GroundState, RadialMesh};
use bubblelab::io::cached_ground_state;
use bubblelab::modulation::{
    decompose, decompose_along, interaction_overlap, max_cross_overlap, mod_vector, parameter_csv,
    renormalize_remainder, scal, DecomposeOptions, Decomposition, Localizers, ParamRow, ParamSample,
};
use bubblelab::noise::{make_flat_weights, sample_brownian, BrownianPaths, NoiseModel, NoiseOnGrid, WeightSpec};
use bubblelab::profiles::{BubbleParams, BubbleSet};
use bubblelab::spectral::{l2_norm, Field, Grid};
use bubblelab::uniqueness::{
    cauchy_check, cauchy_csv, contraction_slack, contraction_terms, difference_series, fit_contraction_constant,
    pair_csv, perturbed_data, CauchyMember, PairRun, Perturbation,
};
use rayon::prelude::*;

use crate::config::{Kind, PerturbationKind, RunConfig};
use crate::record::{RunDir, Summary, VERSION};
use crate::{HarnessError, Result};

/// A finished (or stopped) run as persisted on disk.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub summary: Summary,
    pub warnings: Vec<String>,
    /// Sweep children, in seed order.
    pub children: Vec<RunRecord>,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const PARAMETERS_FILE: &str = "parameters.csv";
pub const NOISE_FILE: &str = "noise_paths.csv";
pub const PAIR_FILE: &str = "pair.csv";
pub const CAUCHY_FILE: &str = "cauchy.csv";

/// Morawetz parameters at which the final generalized energy is reported.
pub const SENSITIVITY_A: [f64; 3] = [5.0, 10.0, 20.0];

/// Relative guess perturbations tried when probing the Newton basin.
const BASIN_LADDER: [f64; 6] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];

/// Validates `config`, runs it into `out_root/<name>` and returns the record.
/// The ground state is cached under `out_root/.cache`.
pub fn run(config: &RunConfig, out_root: &Path) -> Result<RunRecord> {
    run_with_cache(config, out_root, &out_root.join(".cache"))
}

pub fn run_with_cache(config: &RunConfig, out_root: &Path, cache: &Path) -> Result<RunRecord> {
    let warnings = config.validate()?;
    match config.kind {
        Kind::Construct => construct(config, out_root, cache, warnings),
        Kind::Pair => pair(config, out_root, cache, warnings),
        Kind::Cauchy => cauchy(config, out_root, cache, warnings),
        Kind::Sweep => sweep(config, out_root, cache, warnings),
    }
}

/// Shared, read-only inputs of one run.
struct Context {
    grid: Arc<Grid>,
    gs: Arc<GroundState>,
    set: BubbleSet,
    loc: Localizers,
    dirs: DirectionFields,
    noise: Option<Arc<NoiseOnGrid>>,
    paths: Option<BrownianPaths>,
    below_hypothesis: bool,
}

impl Context {
    fn new(cfg: &RunConfig, cache: &Path) -> Result<Self> {
        let grid = cfg.grid()?;
        let gs = cached_ground_state(cfg.dim, &RadialMesh::default(), cache)?;
        let set = cfg.bubble_set()?;
        let loc = Localizers::new(&set, &grid)?;
        let dirs = DirectionFields::new(&grid, &gs)?;
        let (noise, paths, below_hypothesis) = match &cfg.noise {
            None => (None, None, false),
            Some(n) => {
                let spec = WeightSpec {
                    anchors: set.anchors().iter().map(|a| a.center).collect(),
                    flatness: n.flatness,
                    envelope: n.envelope,
                    scale: n.scale,
                    amplitude: n.amplitude,
                    modes: n.modes,
                };
                let weights = make_flat_weights(&grid, spec).map_err(|e| HarnessError::Validation {
                    field: "noise".into(),
                    message: e.to_string(),
                })?;
                let below = weights.below_hypothesis;
                let paths = sample_brownian(n.seed, cfg.t_n_max(), n.dt, n.modes)?;
                let model = Arc::new(NoiseModel { weights, paths: Some(paths.clone()) });
                (Some(Arc::new(NoiseOnGrid::new(&grid, model)?)), Some(paths), below)
            }
        };
        Ok(Context { grid, gs, set, loc, dirs, noise, paths, below_hypothesis })
    }

    fn integrate(&self, cfg: &RunConfig, t_n: f64, data: Option<&Field>) -> Result<Trajectory> {
        let mut prop = Propagator::new(&self.grid, self.noise.clone())?;
        let c = &cfg.controller;
        let ctl = StepController::new(c.dt_base, c.c_dt)?.with_checkpoints(cfg.checkpoint_times(t_n));
        let traj = match data {
            None => construct_approximant(&self.set, t_n, cfg.blowup_time, cfg.t_end, &self.gs, &mut prop, &ctl)?,
            Some(u) => construct_from(u, &self.set, t_n, cfg.blowup_time, cfg.t_end, &mut prop, &ctl)?,
        };
        Ok(traj)
    }
}

fn start(cfg: &RunConfig, out_root: &Path, warnings: &[String]) -> Result<(RunDir, Summary)> {
    let mut dir = RunDir::create(out_root, cfg)?;
    for w in warnings {
        dir.log(format!("warning: {w}"));
    }
    let mut s = Summary::default();
    s.set("version", VERSION);
    s.set("kind", cfg.kind);
    s.set("status", "running");
    s.set("separation_case", cfg.separation_case());
    s.set("fingerprint", cfg.fingerprint_without_t_n());
    Ok((dir, s))
}

fn finish(dir: RunDir, summary: Summary, warnings: Vec<String>) -> Result<RunRecord> {
    dir.finish(&summary)?;
    Ok(RunRecord { dir: dir.path, summary, warnings, children: vec![] })
}

/// Records a stopped trajectory; `Err` for divergence, `Ok` otherwise.
fn check_status(traj: &Trajectory, dir: &mut RunDir, s: &mut Summary, label: &str) -> Result<()> {
    match traj.status {
        Status::Completed => Ok(()),
        Status::Diverged { t } => {
            s.set("status", "diverged");
            s.set_f64("diverged_at", t);
            dir.log(format!("{label}: diverged at t = {t:e} after {} steps", traj.steps));
            Err(HarnessError::Diverged { t })
        }
        Status::ResolutionStop { t } => {
            s.set_f64("resolution_stop_at", t);
            dir.log(format!("{label}: resolution stop at t = {t:e}"));
            if traj.checkpoints.len() < 2 {
                s.set("status", "resolution_stop");
                return Err(HarnessError::ResolutionStop { t });
            }
            Ok(())
        }
    }
}

/// Writes the diagnostics of a diverged trajectory and the summary, then
/// hands back the divergence error.
fn abort(cfg: &RunConfig, dir: RunDir, s: Summary, traj: &Trajectory, err: HarnessError) -> Result<RunRecord> {
    let k = cfg.bubbles.len();
    let rows: Vec<DiagnosticsRow> =
        traj.checkpoints.iter().map(|c| DiagnosticsRow::basic(c.t, &c.field, k)).filter(|r| r.is_finite()).collect();
    dir.write(DIAGNOSTICS_FILE, &diagnostics_csv(cfg.dim, k, &rows))?;
    dir.finish(&s)?;
    Err(err)
}

/// Everything derived from a trajectory and its decompositions.
struct Analysis {
    rows: Vec<DiagnosticsRow>,
    params: Vec<ParamRow>,
    decs: Vec<Decomposition>,
}

fn analyze(cfg: &RunConfig, ctx: &Context, checkpoints: &[Checkpoint]) -> Result<Analysis> {
    let big_t = cfg.blowup_time;
    let decs = decompose_along(checkpoints, &ctx.set, big_t, &ctx.gs, &DecomposeOptions::default())?;
    let weight = MorawetzWeight::new(cfg.diagnostics.morawetz_a)?;
    let k = ctx.set.len();
    let omegas: Vec<f64> = ctx.set.anchors().iter().map(|a| a.omega).collect();

    let samples: Vec<ParamSample> =
        checkpoints.iter().zip(&decs).map(|(c, d)| ParamSample { t: c.t, params: d.params.clone() }).collect();
    let bound = cfg.noise.as_ref().map(|n| (big_t, n.flatness));
    let mods = if samples.len() >= 3 { mod_vector(&samples, cfg.dim, bound)? } else { vec![] };

    let rows: Vec<(DiagnosticsRow, Vec<f64>)> = checkpoints
        .par_iter()
        .zip(decs.par_iter())
        .map(|(c, d)| -> Result<(DiagnosticsRow, Vec<f64>)> {
            let u = &c.field;
            let mut row = DiagnosticsRow::basic(c.t, u, k);
            row.localized_mass = localized_mass(u, &ctx.loc)?;
            let lambdas: Vec<f64> = d.params.iter().map(|p| p.lambda).collect();
            row.difference = difference_functional(&d.remainder, &ctx.loc, &lambdas)?;
            if cfg.diagnostics.generalized_energy {
                row.generalized_energy = generalized_energy(u, d, &ctx.loc, &weight)?;
            }
            if let (Some(noise), true) = (&ctx.noise, cfg.diagnostics.energy_rate) {
                row.energy_rate = energy_rate(u, noise, c.t)?;
            }
            let mut scal_j = Vec::with_capacity(k);
            for (p, phi) in d.params.iter().zip(&ctx.loc.phi) {
                scal_j.push(scal(&renormalize_remainder(&d.remainder, phi, p)?, &ctx.dirs)?.value);
            }
            row.scal = scal_j.clone();
            row.rate_ratio = lambdas.iter().zip(&omegas).map(|(l, w)| l / (w * (big_t - c.t))).collect();
            row.lambda = lambdas;
            if let Some(m) = mods.iter().find(|m| m.t == c.t) {
                row.modulation = m.total;
            }
            Ok((row, scal_j))
        })
        .collect::<Result<_>>()?;

    let params = rows
        .iter()
        .zip(&decs)
        .map(|((row, scal_j), d)| ParamRow {
            t: row.t,
            params: d.params.clone(),
            mod_j: mods.iter().find(|m| m.t == row.t).map_or(vec![f64::NAN; k], |m| m.per_bubble.clone()),
            scal_j: scal_j.clone(),
        })
        .collect();
    let rows = rows.into_iter().map(|(r, _)| r).collect();
    Ok(Analysis { rows, params, decs })
}

fn fmax(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| x.is_finite()).fold(f64::NAN, f64::max)
}

fn fmin(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| x.is_finite()).fold(f64::NAN, f64::min)
}

/// Largest relative drift per unit time of a conserved quantity.
fn drift(values: &[f64], times: &[f64]) -> f64 {
    let span = fmax(times.iter().copied()) - fmin(times.iter().copied());
    let spread = fmax(values.iter().copied()) - fmin(values.iter().copied());
    let scale = fmax(values.iter().map(|v| v.abs())).max(1.0);
    if span > 0.0 {
        spread / scale / span
    } else {
        0.0
    }
}

/// Largest relative perturbation of the pseudo-conformal guess from which
/// the decomposition at `u` still converges to the reference parameters.
fn newton_basin(u: &Field, reference: &[BubbleParams], gs: &GroundState, dim: usize) -> f64 {
    let opts = DecomposeOptions::default();
    let mut best = 0.0;
    for &delta in &BASIN_LADDER {
        let guess: Vec<BubbleParams> = reference
            .iter()
            .map(|p| {
                let mut q = *p;
                q.lambda *= 1.0 + delta;
                for i in 0..dim {
                    q.alpha[i] += delta * p.lambda;
                    q.beta[i] += delta;
                }
                q.gamma += delta;
                q.theta += delta;
                q
            })
            .collect();
        let ok = decompose(u, &guess, gs, &opts).is_ok_and(|d| {
            d.converged
                && d.params.iter().zip(reference).all(|(a, b)| {
                    a.to_vec(dim).iter().zip(b.to_vec(dim)).all(|(x, y)| (x - y).abs() <= 1e-6 * (1.0 + y.abs()))
                })
        });
        if !ok {
            break;
        }
        best = delta;
    }
    best
}

fn construct(cfg: &RunConfig, out_root: &Path, cache: &Path, warnings: Vec<String>) -> Result<RunRecord> {
    let (mut dir, mut s) = start(cfg, out_root, &warnings)?;
    let ctx = Context::new(cfg, cache)?;
    s.set("noise_below_hypothesis", ctx.below_hypothesis);
    if let Some(p) = &ctx.paths {
        dir.write(NOISE_FILE, &p.to_csv())?;
    }
    let t_n = cfg.t_n[0];
    let traj = ctx.integrate(cfg, t_n, None)?;
    s.set("steps", traj.steps);
    s.set("checkpoints", traj.checkpoints.len());
    dir.write_checkpoints("", &traj.checkpoints)?;
    if let Err(e) = check_status(&traj, &mut dir, &mut s, "construct") {
        return abort(cfg, dir, s, &traj, e);
    }

    let a = analyze(cfg, &ctx, &traj.checkpoints)?;
    let k = ctx.set.len();
    dir.write(DIAGNOSTICS_FILE, &diagnostics_csv(cfg.dim, k, &a.rows))?;
    dir.write(PARAMETERS_FILE, &parameter_csv(cfg.dim, &a.params))?;
    summarize_construction(cfg, &ctx, &traj, &a, &mut s)?;

    let times = traj.times();
    let window = rate_window(&times, cfg.blowup_time, cfg.omega_min(), ctx.grid.spacing());
    s.set("rate_window_samples", window.len());
    if window.len() < MIN_RATE_SAMPLES {
        s.set("status", "no_fit_window");
        let msg = format!("{} checkpoints in the rate window, need {MIN_RATE_SAMPLES}", window.len());
        dir.log(format!("construct: {msg}"));
        dir.finish(&s)?;
        return Err(HarnessError::NoFitWindow(msg));
    }
    let wt: Vec<f64> = window.iter().map(|&i| times[i]).collect();
    let lambdas: Vec<Vec<f64>> = (0..k).map(|j| window.iter().map(|&i| a.decs[i].params[j].lambda).collect()).collect();
    let norms: Vec<f64> = window.iter().map(|&i| l2_norm(&a.decs[i].remainder)).collect();
    // A remainder at roundoff level (exact single-bubble data) has no rate.
    let scale = window.iter().map(|&i| a.rows[i].mass.sqrt()).fold(0.0, f64::max);
    let resolved = norms.iter().all(|&r| r > REMAINDER_FLOOR * scale);
    let fit = fit_blowup_rate(&wt, &lambdas, resolved.then_some(norms.as_slice()))?;
    for (j, b) in fit.bubbles.iter().enumerate() {
        s.set_f64(format!("omega_est_{}", j + 1), b.omega);
        s.set_f64(format!("rate_residual_{}", j + 1), b.residual);
        s.set_f64(format!("rate_r2_{}", j + 1), b.fit.r2);
    }
    s.set_f64("blowup_time_est", fit.blowup_time);
    if let Some(r) = fit.remainder {
        s.set_f64("remainder_exponent", r.slope);
    }
    let status = if matches!(traj.status, Status::ResolutionStop { .. }) { "resolution_stop" } else { "completed" };
    s.set("status", status);
    dir.log(format!("construct: {status} after {} steps", traj.steps));
    finish(dir, s, warnings)
}

/// Relative remainder size below which no decay exponent is reported.
const REMAINDER_FLOOR: f64 = 1e-8;

fn summarize_construction(cfg: &RunConfig, ctx: &Context, traj: &Trajectory, a: &Analysis, s: &mut Summary) -> Result<()> {
    let times = traj.times();
    let big_t = cfg.blowup_time;
    let masses: Vec<f64> = a.rows.iter().map(|r| r.mass).collect();
    let energies: Vec<f64> = a.rows.iter().map(|r| r.energy).collect();
    s.set_f64("mass_drift", drift(&masses, &times));
    s.set_f64("energy_drift", drift(&energies, &times));
    let taus: Vec<f64> = times.iter().map(|t| big_t - t).collect();
    s.set_f64("tau_min", fmin(taus.iter().copied()));
    s.set_f64("tau_max", fmax(taus.iter().copied()));
    s.set_f64("tau_decades", (fmax(taus.iter().copied()) / fmin(taus.iter().copied())).log10());
    s.set_f64("rate_ratio_dev", fmax(a.rows.iter().flat_map(|r| r.rate_ratio.iter().map(|v| (v - 1.0).abs()))));
    let q_mass = ctx.gs.mass();
    s.set_f64("localized_mass_dev", fmax(a.rows.iter().flat_map(|r| r.localized_mass.iter().map(|m| (m / q_mass - 1.0).abs()))));
    let last = a.rows.last().expect("a trajectory has its initial checkpoint");
    for (j, m) in last.localized_mass.iter().enumerate() {
        s.set_f64(format!("localized_mass_last_{}", j + 1), m / q_mass);
    }
    s.set_f64("mod_max", fmax(a.rows.iter().map(|r| r.modulation)));
    if let Some(n) = &cfg.noise {
        let ratio = fmax(a.rows.iter().map(|r| r.modulation / (big_t - r.t).powi(n.flatness as i32)));
        s.set_f64("mod_bound_ratio_max", ratio);
    }
    s.set_f64("scal_max", fmax(a.rows.iter().flat_map(|r| r.scal.iter().copied())));
    s.set_f64("scal_ratio_max", fmax(a.rows.iter().flat_map(|r| r.scal.iter().zip(&r.lambda).map(|(v, l)| v / (l * l)))));
    s.set_f64("decomposition_residual_max", fmax(a.decs.iter().map(|d| d.max_residual())));
    s.set("decomposition_converged", a.decs.iter().all(|d| d.converged));
    if cfg.diagnostics.generalized_energy {
        let u = &traj.last().field;
        let d = a.decs.last().expect("one decomposition per checkpoint");
        for &aa in &SENSITIVITY_A {
            let w = MorawetzWeight::new(aa)?;
            s.set_f64(format!("I_A{aa}"), generalized_energy(u, d, &ctx.loc, &w)?);
        }
    }
    let first = &traj.checkpoints[0];
    let reference = &a.decs[0].params;
    s.set_f64("newton_basin", newton_basin(&first.field, reference, &ctx.gs, cfg.dim));

    if ctx.set.len() >= 2 && cfg.diagnostics.overlaps {
        let overlaps: Vec<f64> = a
            .decs
            .par_iter()
            .map(|d| interaction_overlap(&d.params, &ctx.gs, &ctx.grid, 0, 0, 0).map(|o| max_cross_overlap(&o)))
            .collect::<bubblelab::Result<_>>()?;
        let (x, y): (Vec<f64>, Vec<f64>) =
            taus.iter().zip(&overlaps).filter(|(_, o)| **o > 0.0 && o.is_finite()).map(|(t, o)| (1.0 / t, o.ln())).unzip();
        s.set("overlap_samples", x.len());
        if x.len() >= 3 {
            let f = linear_fit(&x, &y)?;
            s.set_f64("overlap_log_slope", f.slope);
            s.set_f64("overlap_r2", f.r2);
        }
    }
    Ok(())
}

fn pair(cfg: &RunConfig, out_root: &Path, cache: &Path, warnings: Vec<String>) -> Result<RunRecord> {
    let (mut dir, mut s) = start(cfg, out_root, &warnings)?;
    let ctx = Context::new(cfg, cache)?;
    if let Some(p) = &ctx.paths {
        dir.write(NOISE_FILE, &p.to_csv())?;
    }
    let pc = cfg.pair.as_ref().expect("validated pair section");
    let t_n = cfg.t_n[0];
    let perturbation = match pc.perturbation {
        PerturbationKind::Additive => Perturbation::Additive { relative: pc.relative, seed: pc.seed },
        PerturbationKind::Jitter => Perturbation::Jitter { lambda: pc.jitter, theta: pc.jitter },
    };
    let u_pert = perturbed_data(&ctx.set, t_n, cfg.blowup_time, perturbation, &ctx.gs, &ctx.grid)?;
    let (base, pert) = rayon::join(|| ctx.integrate(cfg, t_n, None), || ctx.integrate(cfg, t_n, Some(&u_pert)));
    let (base, pert) = (base?, pert?);
    s.set("steps", base.steps + pert.steps);
    dir.write_checkpoints("base", &base.checkpoints)?;
    dir.write_checkpoints("perturbed", &pert.checkpoints)?;
    for (traj, label) in [(&base, "base"), (&pert, "perturbed")] {
        if let Err(e) = check_status(traj, &mut dir, &mut s, label) {
            return abort(cfg, dir, s, traj, e);
        }
    }

    let pr = PairRun::new(&base, &pert)?;
    let decs = decompose_along(&pr.base, &ctx.set, cfg.blowup_time, &ctx.gs, &DecomposeOptions::default())?;
    let params: Vec<Vec<BubbleParams>> = decs.iter().map(|d| d.params.clone()).collect();
    let diff = difference_series(&pr, &params, &ctx.loc, &ctx.dirs)?;
    dir.write(PAIR_FILE, &pair_csv(&diff))?;

    let k = ctx.set.len();
    let rows: Vec<DiagnosticsRow> = pr
        .base
        .iter()
        .zip(&diff)
        .map(|(c, d)| {
            let mut row = DiagnosticsRow::basic(c.t, &c.field, k);
            row.difference = d.d;
            row.scal = d.scal.clone();
            row.lambda = d.lambda.clone();
            row
        })
        .collect();
    dir.write(DIAGNOSTICS_FILE, &diagnostics_csv(cfg.dim, k, &rows))?;

    let terms = contraction_terms(&diff, cfg.blowup_time, pc.eps_star)?;
    let constant = fit_contraction_constant(&terms)?;
    s.set_f64("contraction_constant", constant);
    s.set_f64("contraction_slack", contraction_slack(&terms, constant));
    s.set_f64("D_data", diff[0].d);
    s.set_f64("D_max", fmax(diff.iter().map(|r| r.d)));
    s.set_f64("D_final", diff.last().expect("pairs hold two checkpoints").d);
    s.set_f64("scal_max", fmax(diff.iter().flat_map(|r| r.scal.iter().copied())));
    s.set("status", "completed");
    dir.log(format!("pair: completed, {} checkpoints", pr.len()));
    finish(dir, s, warnings)
}

fn cauchy(cfg: &RunConfig, out_root: &Path, cache: &Path, warnings: Vec<String>) -> Result<RunRecord> {
    let (mut dir, mut s) = start(cfg, out_root, &warnings)?;
    let ctx = Context::new(cfg, cache)?;
    if let Some(p) = &ctx.paths {
        dir.write(NOISE_FILE, &p.to_csv())?;
    }
    let mut order: Vec<usize> = (0..cfg.t_n.len()).collect();
    order.sort_by(|&a, &b| cfg.t_n[a].total_cmp(&cfg.t_n[b]));
    let trajs: Vec<Trajectory> =
        order.par_iter().map(|&i| ctx.integrate(cfg, cfg.t_n[i], None)).collect::<Result<_>>()?;
    let k = ctx.set.len();
    let key = cfg.fingerprint_without_t_n();
    let mut members = Vec::with_capacity(trajs.len());
    for (m, traj) in trajs.iter().enumerate() {
        let label = format!("member_{m}");
        dir.write_checkpoints(&label, &traj.checkpoints)?;
        if let Err(e) = check_status(traj, &mut dir, &mut s, &label) {
            return abort(cfg, dir, s, traj, e);
        }
        let rows: Vec<DiagnosticsRow> =
            traj.checkpoints.iter().map(|c| DiagnosticsRow::basic(c.t, &c.field, k)).collect();
        dir.write(&format!("diagnostics_{m}.csv"), &diagnostics_csv(cfg.dim, k, &rows))?;
        s.set_f64(format!("t_n_{m}"), traj.checkpoints[0].t);
        members.push(CauchyMember {
            t_n: traj.checkpoints[0].t,
            key: key.clone(),
            state: traj.last().field.clone(),
            checkpoints: traj.checkpoints.clone(),
        });
    }
    let report = cauchy_check(&members)?;
    dir.write(CAUCHY_FILE, &cauchy_csv(&report))?;
    let n = report.t_n.len();
    let mut max_l2: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_l2 = max_l2.max(report.l2[i][j]);
        }
    }
    s.set_f64("cauchy_max_l2", max_l2);
    for (m, d) in report.to_latest.iter().enumerate().take(n - 1) {
        s.set_f64(format!("to_latest_{m}"), *d);
    }
    s.set("cauchy_decreasing", report.decreasing);
    s.set("cauchy_shared_times", report.shared.len());
    s.set("status", "completed");
    dir.log(format!("cauchy: completed, {n} members"));
    finish(dir, s, warnings)
}

fn sweep(cfg: &RunConfig, out_root: &Path, cache: &Path, warnings: Vec<String>) -> Result<RunRecord> {
    let (mut dir, mut s) = start(cfg, out_root, &warnings)?;
    let sc = cfg.sweep.as_ref().expect("validated sweep section");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sc.workers)
        .build()
        .map_err(|e| HarnessError::Report(format!("cannot start the sweep pool: {e}")))?;
    let root = dir.path.clone();
    let results: Vec<Result<RunRecord>> =
        pool.install(|| sc.seeds.par_iter().map(|&seed| run_with_cache(&cfg.sweep_child(seed), &root, cache)).collect());
    let mut children = Vec::new();
    let mut first_err = None;
    for (seed, r) in sc.seeds.iter().zip(results) {
        match r {
            Ok(rec) => {
                s.set(format!("child_{seed}"), rec.summary.get("status").unwrap_or("unknown"));
                children.push(rec);
            }
            Err(e) => {
                s.set(format!("child_{seed}"), format!("failed: {e}"));
                dir.log(format!("sweep: seed {seed} failed: {e}"));
                first_err.get_or_insert(e);
            }
        }
    }
    s.set("children", children.len());
    s.set("status", if first_err.is_none() { "completed" } else { "partial" });
    dir.finish(&s)?;
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(RunRecord { dir: dir.path, summary: s, warnings, children })
}
