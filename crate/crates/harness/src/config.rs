//! Run configuration: TOML schema, defaults, validation and fingerprints.

use std::fmt;
use std::path::Path;

use bubblelab::profiles::{Anchor, BubbleSet};
use bubblelab::spectral::{make_grid, Grid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Construct,
    Pair,
    Cauchy,
    Sweep,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Construct => "construct",
            Kind::Pair => "pair",
            Kind::Cauchy => "cauchy",
            Kind::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width `L` of the box `[−L, L)^d`.
    pub extent: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleConfig {
    pub omega: f64,
    /// `d` coordinates.
    pub center: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub modes: usize,
    /// Flatness order `ν_*` of the weights at every blow-up point.
    pub flatness: usize,
    pub envelope: f64,
    pub scale: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Brownian mesh spacing.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub dt_base: f64,
    pub c_dt: f64,
    /// Uniform checkpoint spacing from `t_n` towards `t_end`.
    pub checkpoint_spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub generalized_energy: bool,
    #[serde(default = "default_a")]
    pub morawetz_a: f64,
    #[serde(default = "yes")]
    pub energy_rate: bool,
    #[serde(default = "yes")]
    pub overlaps: bool,
    /// Frequency closeness / separation parameter used to classify the
    /// bubble configuration.
    #[serde(default = "default_case_epsilon")]
    pub case_epsilon: f64,
}

fn yes() -> bool {
    true
}
fn default_a() -> f64 {
    bubblelab::diagnostics::MorawetzWeight::DEFAULT_A
}
fn default_case_epsilon() -> f64 {
    0.1
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            generalized_energy: true,
            morawetz_a: default_a(),
            energy_rate: true,
            overlaps: true,
            case_epsilon: default_case_epsilon(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Additive,
    Jitter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub perturbation: PerturbationKind,
    /// Relative L² size of an additive perturbation.
    #[serde(default = "default_relative")]
    pub relative: f64,
    /// Relative jitter of `λ_j` and `θ_j`.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
    /// `ε*` weight of the `D/(T−s)` integral term.
    #[serde(default = "default_eps_star")]
    pub eps_star: f64,
}

fn default_relative() -> f64 {
    1e-4
}
fn default_jitter() -> f64 {
    1e-3
}
fn default_eps_star() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    /// What every child runs.
    pub child: Kind,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub kind: Kind,
    pub dim: usize,
    pub blowup_time: f64,
    /// Data times; one entry except for Cauchy checks.
    pub t_n: Vec<f64>,
    pub t_end: f64,
    pub grid: GridConfig,
    pub bubbles: Vec<BubbleConfig>,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Which separation hypothesis the bubble data satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeparationCase {
    /// All frequencies within `ε` of a common value.
    CloseFrequencies,
    /// All centers at least `1/ε` apart.
    SeparatedCenters,
    Both,
    Neither,
}

impl fmt::Display for SeparationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SeparationCase::CloseFrequencies => "I",
            SeparationCase::SeparatedCenters => "II",
            SeparationCase::Both => "I+II",
            SeparationCase::Neither => "none",
        };
        f.write_str(s)
    }
}

/// Anchor margin used when a single bubble leaves `σ` undefined.
pub const SINGLE_BUBBLE_SIGMA: f64 = 1.0;
/// Flatness below which the decay hypotheses on the noise weights fail.
pub const MIN_FLATNESS: usize = 5;

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Validation { field: field.to_string(), message: message.into() }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn anchors(&self) -> Vec<Anchor> {
        self.bubbles
            .iter()
            .map(|b| Anchor {
                omega: b.omega,
                center: [b.center.first().copied().unwrap_or(0.0), b.center.get(1).copied().unwrap_or(0.0)],
                phase: b.phase,
            })
            .collect()
    }

    pub fn bubble_set(&self) -> Result<BubbleSet, HarnessError> {
        BubbleSet::new(self.dim, self.anchors()).map_err(|e| invalid("bubbles", e.to_string()))
    }

    pub fn grid(&self) -> Result<Arc<Grid>, HarnessError> {
        make_grid(self.dim, self.grid.extent, self.grid.points).map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn omega_min(&self) -> f64 {
        self.bubbles.iter().map(|b| b.omega).fold(f64::INFINITY, f64::min)
    }

    /// Latest data time.
    pub fn t_n_max(&self) -> f64 {
        self.t_n.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checkpoint times strictly between `t_n` and `t_end`, then `t_end`.
    pub fn checkpoint_times(&self, t_n: f64) -> Vec<f64> {
        let h = self.controller.checkpoint_spacing;
        let mut out = Vec::new();
        let mut k = 1usize;
        loop {
            let t = t_n - h * k as f64;
            if t <= self.t_end + 1e-12 * h {
                break;
            }
            out.push(t);
            k += 1;
        }
        out.push(self.t_end);
        out
    }

    pub fn separation_case(&self) -> SeparationCase {
        let eps = self.diagnostics.case_epsilon;
        let (lo, hi) = self.bubbles.iter().fold((f64::INFINITY, 0.0f64), |(l, h), b| (l.min(b.omega), h.max(b.omega)));
        let close = 0.5 * (hi - lo) <= eps;
        let anchors = self.anchors();
        let mut min_sep = f64::INFINITY;
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[i + 1..] {
                min_sep = min_sep.min((a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]));
            }
        }
        let separated = min_sep >= 1.0 / eps;
        match (close, separated) {
            (true, true) => SeparationCase::Both,
            (true, false) => SeparationCase::CloseFrequencies,
            (false, true) => SeparationCase::SeparatedCenters,
            (false, false) => SeparationCase::Neither,
        }
    }

    /// Checks every hypothesis the run relies on; returns warnings for
    /// soft violations.
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        let mut warnings = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(invalid("name", "must be a non-empty plain file name"));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(invalid("dim", format!("{} not in {{1, 2}}", self.dim)));
        }
        let grid = self.grid()?;
        if self.bubbles.is_empty() {
            return Err(invalid("bubbles", "at least one bubble is required"));
        }
        for (j, b) in self.bubbles.iter().enumerate() {
            if b.center.len() != self.dim {
                return Err(invalid(&format!("bubbles[{j}].center"), format!("needs {} coordinates", self.dim)));
            }
            if !(b.omega > 0.0) {
                return Err(invalid(&format!("bubbles[{j}].omega"), "must be positive"));
            }
        }
        let set = self.bubble_set()?;
        let sigma = if set.len() >= 2 { set.sigma() } else { SINGLE_BUBBLE_SIGMA };
        for (j, b) in self.bubbles.iter().enumerate() {
            let reach = b.center.iter().fold(0.0f64, |m, c| m.max(c.abs())) + 4.0 * sigma;
            if reach > self.grid.extent {
                return Err(invalid(
                    &format!("bubbles[{j}].center"),
                    format!(
                        "margin rule: |x_c| + 4σ = {reach:.4} exceeds the box half-width L = {} (σ = {sigma:.4})",
                        self.grid.extent
                    ),
                ));
            }
        }
        if !(self.blowup_time.is_finite()) {
            return Err(invalid("blowup_time", "must be finite"));
        }
        if self.t_n.is_empty() {
            return Err(invalid("t_n", "at least one data time is required"));
        }
        let h = grid.spacing();
        for (i, &t) in self.t_n.iter().enumerate() {
            if !(t < self.blowup_time) {
                return Err(invalid(&format!("t_n[{i}]"), format!("{t} must precede T = {}", self.blowup_time)));
            }
            let lam = self.omega_min() * (self.blowup_time - t);
            if lam < 4.0 * h {
                return Err(invalid(
                    &format!("t_n[{i}]"),
                    format!("resolvability: ω_min(T − t_n) = {lam:.4e} < 4h = {:.4e}", 4.0 * h),
                ));
            }
            if !(self.t_end < t) {
                return Err(invalid("t_end", format!("{} must precede t_n[{i}] = {t}", self.t_end)));
            }
        }
        let c = &self.controller;
        if !(c.dt_base > 0.0) {
            return Err(invalid("controller.dt_base", "must be positive"));
        }
        if !(c.c_dt > 0.0 && c.c_dt <= 0.5) {
            return Err(invalid("controller.c_dt", "must lie in (0, 0.5]"));
        }
        if !(c.checkpoint_spacing > 0.0) {
            return Err(invalid("controller.checkpoint_spacing", "must be positive"));
        }
        if let Some(n) = &self.noise {
            if self.t_end < 0.0 {
                return Err(invalid("t_end", "noisy runs are defined on t ≥ 0"));
            }
            if n.modes == 0 {
                return Err(invalid("noise.modes", "must be positive"));
            }
            if !(n.dt > 0.0) {
                return Err(invalid("noise.dt", "must be positive"));
            }
            if !(n.envelope > 0.0 && n.scale > 0.0) {
                return Err(invalid("noise.envelope", "envelope and scale must be positive"));
            }
            if n.flatness < MIN_FLATNESS {
                warnings.push(format!(
                    "noise.flatness = {} is below {MIN_FLATNESS}; the weights do not meet the flatness hypothesis",
                    n.flatness
                ));
            }
        }
        if !(self.diagnostics.morawetz_a > 0.0) {
            return Err(invalid("diagnostics.morawetz_a", "must be positive"));
        }
        if !(self.diagnostics.case_epsilon > 0.0) {
            return Err(invalid("diagnostics.case_epsilon", "must be positive"));
        }
        if self.bubbles.len() >= 2 && self.separation_case() == SeparationCase::Neither {
            warnings.push(format!(
                "bubbles satisfy neither separation case at ε = {}",
                self.diagnostics.case_epsilon
            ));
        }
        match self.kind {
            Kind::Construct => {
                if self.t_n.len() != 1 {
                    return Err(invalid("t_n", "construct runs take exactly one data time"));
                }
            }
            Kind::Pair => {
                if self.t_n.len() != 1 {
                    return Err(invalid("t_n", "pair runs take exactly one data time"));
                }
                let p = self.pair.as_ref().ok_or_else(|| invalid("pair", "pair runs need a [pair] section"))?;
                if !(p.relative > 0.0) || !(p.jitter > 0.0) {
                    return Err(invalid("pair.relative", "perturbation sizes must be positive"));
                }
                if !(p.eps_star >= 0.0) {
                    return Err(invalid("pair.eps_star", "must be non-negative"));
                }
            }
            Kind::Cauchy => {
                if self.t_n.len() < 3 {
                    return Err(invalid("t_n", "Cauchy checks need at least three data times"));
                }
                let mut sorted = self.t_n.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(invalid("t_n", "data times must be distinct"));
                }
            }
            Kind::Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| invalid("sweep", "sweeps need a [sweep] section"))?;
                if s.seeds.is_empty() {
                    return Err(invalid("sweep.seeds", "at least one seed is required"));
                }
                let mut seeds = s.seeds.clone();
                seeds.sort_unstable();
                if seeds.windows(2).any(|w| w[0] == w[1]) {
                    return Err(invalid("sweep.seeds", "seeds must be disjoint"));
                }
                if s.child == Kind::Sweep {
                    return Err(invalid("sweep.child", "sweeps cannot nest"));
                }
                if s.workers == 0 {
                    return Err(invalid("sweep.workers", "must be positive"));
                }
                if self.noise.is_none() {
                    return Err(invalid("noise", "seed sweeps need a noise section"));
                }
                let mut child = self.clone();
                child.kind = s.child;
                child.sweep = None;
                warnings.extend(child.validate()?);
            }
        }
        Ok(warnings)
    }

    /// SHA-256 of the canonical TOML with `t_n` cleared: runs that differ
    /// only in their data time share this key.
    pub fn fingerprint_without_t_n(&self) -> String {
        let mut c = self.clone();
        c.t_n.clear();
        c.name.clear();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Child configuration of a sweep for one seed.
    pub fn sweep_child(&self, seed: u64) -> RunConfig {
        let mut c = self.clone();
        if let Some(s) = &self.sweep {
            c.kind = s.child;
        }
        c.sweep = None;
        c.name = format!("{}_seed{seed}", self.name);
        if let Some(n) = c.noise.as_mut() {
            n.seed = seed;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> RunConfig {
        RunConfig {
            name: "t".into(),
            kind: Kind::Construct,
            dim: 1,
            blowup_time: 1.0,
            t_n: vec![0.75],
            t_end: 0.0,
            grid: GridConfig { extent: 16.0, points: 512 },
            bubbles: vec![BubbleConfig { omega: 1.0, center: vec![0.0], phase: 0.0 }],
            controller: ControllerConfig { dt_base: 1e-3, c_dt: 0.5, checkpoint_spacing: 0.25 },
            diagnostics: DiagnosticsConfig::default(),
            noise: None,
            pair: None,
            sweep: None,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut c = sample();
        c.noise = Some(NoiseConfig { modes: 2, flatness: 5, envelope: 2.0, scale: 8.0, amplitude: 0.5, seed: 3, dt: 1e-3 });
        let a = c.to_toml();
        let parsed = RunConfig::from_toml(&a).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(parsed.to_toml(), a);
    }

    #[test]
    fn margin_rule_names_the_field() {
        let mut c = sample();
        c.bubbles[0].center = vec![15.0];
        match c.validate() {
            Err(HarnessError::Validation { field, message }) => {
                assert_eq!(field, "bubbles[0].center");
                assert!(message.contains("margin rule"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolvability_and_kind_rules() {
        let mut c = sample();
        c.t_n = vec![0.99];
        assert!(matches!(c.validate(), Err(HarnessError::Validation { field, .. }) if field == "t_n[0]"));
        let mut c = sample();
        c.kind = Kind::Cauchy;
        assert!(c.validate().is_err());
        c.t_n = vec![0.5, 0.6, 0.7];
        assert!(c.validate().unwrap().is_empty());
        let mut c = sample();
        c.kind = Kind::Pair;
        assert!(matches!(c.validate(), Err(HarnessError::Validation { field, .. }) if field == "pair"));
    }

    #[test]
    fn low_flatness_warns() {
        let mut c = sample();
        c.noise = Some(NoiseConfig { modes: 1, flatness: 3, envelope: 2.0, scale: 8.0, amplitude: 0.1, seed: 1, dt: 1e-3 });
        let w = c.validate().unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("noise.flatness"));
    }

    #[test]
    fn checkpoints_end_at_t_end() {
        let c = sample();
        assert_eq!(c.checkpoint_times(0.75), vec![0.5, 0.25, 0.0]);
    }

    #[test]
    fn separation_cases() {
        let mut c = sample();
        c.bubbles = vec![
            BubbleConfig { omega: 1.0, center: vec![-4.0], phase: 0.0 },
            BubbleConfig { omega: 1.0, center: vec![4.0], phase: 0.0 },
        ];
        assert_eq!(c.separation_case(), SeparationCase::CloseFrequencies);
        c.bubbles[1].omega = 2.0;
        assert_eq!(c.separation_case(), SeparationCase::Neither);
        c.diagnostics.case_epsilon = 0.5;
        assert_eq!(c.separation_case(), SeparationCase::Both);
    }

    #[test]
    fn fingerprint_ignores_data_time_only() {
        let a = sample();
        let mut b = sample();
        b.t_n = vec![0.5];
        b.name = "other".into();
        assert_eq!(a.fingerprint_without_t_n(), b.fingerprint_without_t_n());
        b.grid.points = 1024;
        assert_ne!(a.fingerprint_without_t_n(), b.fingerprint_without_t_n());
    }

    #[test]
    fn sweep_children_get_disjoint_seeds() {
        let mut c = sample();
        c.kind = Kind::Sweep;
        c.noise = Some(NoiseConfig { modes: 1, flatness: 5, envelope: 2.0, scale: 8.0, amplitude: 0.1, seed: 0, dt: 1e-3 });
        c.sweep = Some(SweepConfig { seeds: vec![1, 2, 3], child: Kind::Construct, workers: 2 });
        c.validate().unwrap();
        let kids: Vec<_> = [1, 2, 3].iter().map(|&s| c.sweep_child(s)).collect();
        assert_eq!(kids[1].noise.as_ref().unwrap().seed, 2);
        assert_eq!(kids[2].name, "t_seed3");
        c.sweep.as_mut().unwrap().seeds = vec![1, 1];
        assert!(c.validate().is_err());
    }
}
