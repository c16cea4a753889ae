//! Experiment configuration: one TOML file per experiment, with sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{OperatorKind, StorageMode};
use crate::solvers::Algorithm;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    #[serde(default)]
    pub init: InitBlock,
    #[serde(default)]
    pub solver_defaults: SolverDefaults,
    #[serde(rename = "solver", default)]
    pub solvers: Vec<SolverBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub rip: RipBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub kind: OperatorKind,
    pub n: usize,
    pub r: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Measurement count; defaults to `m_factor * n * r`.
    pub m: Option<usize>,
    #[serde(default = "default_m_factor")]
    pub m_factor: usize,
    #[serde(default)]
    pub p_s: f64,
    /// Noise budget, either directly or via a target SNR.
    pub sigma_w: Option<f64>,
    pub snr_db: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub storage: Storage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    Dense,
    #[default]
    Seeded,
}

impl From<Storage> for StorageMode {
    fn from(s: Storage) -> StorageMode {
        match s {
            Storage::Dense => StorageMode::Dense,
            Storage::Seeded => StorageMode::Seeded,
        }
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_m_factor() -> usize {
    8
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    #[serde(default)]
    pub method: InitMethod,
    /// Planted-perturbation target: `dist = factor * sigma_r / chi_hat`.
    pub planted_dist_factor: Option<f64>,
    /// Absolute planted-perturbation target distance.
    pub planted_dist: Option<f64>,
    #[serde(default)]
    pub qs_trace_correction: bool,
}

impl Default for InitBlock {
    fn default() -> Self {
        InitBlock {
            method: InitMethod::TruncatedSpectral,
            planted_dist_factor: None,
            planted_dist: None,
            qs_trace_correction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    Spectral,
    #[default]
    TruncatedSpectral,
    PlantedPerturbation,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDefaults {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol_rel_err")]
    pub tol_rel_err: f64,
    #[serde(default)]
    pub record_dist: bool,
}

fn default_max_iters() -> usize {
    1000
}

fn default_tol_rel_err() -> f64 {
    1e-12
}

impl Default for SolverDefaults {
    fn default() -> Self {
        SolverDefaults {
            max_iters: default_max_iters(),
            tol_rel_err: default_tol_rel_err(),
            record_dist: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// Label used in file names; defaults to `<algorithm>_<schedule>`.
    pub name: Option<String>,
    pub algorithm: Algorithm,
    pub schedule: ScheduleKind,
    /// Explicit optimal value for Polyak stepping. `fstar_policy = "oracle"`
    /// lets the runner plug in the planted `||w + s||_1`.
    pub fstar: Option<f64>,
    #[serde(default)]
    pub fstar_policy: FstarPolicy,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
    pub eta: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol_rel_err: Option<f64>,
    pub record_dist: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FstarPolicy {
    /// Require noiseless data (fstar = 0) or an explicit `fstar`.
    #[default]
    Strict,
    /// Use the planted `||w + s||_1` when the data is corrupted.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Polyak,
    Geometric,
    Constant,
    /// Geometric with the exact-convergence theorem defaults, using
    /// `chi_hat` from RIP probes.
    TheoremExact,
    /// Geometric with the approximate-convergence theorem defaults.
    TheoremNoisy,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<String>,
    #[serde(default)]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default)]
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub p_s: Vec<f64>,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub q_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipBlock {
    #[serde(default = "default_rip_trials")]
    pub trials: usize,
    /// Ranks to probe; defaults to the problem rank.
    #[serde(default)]
    pub ranks: Vec<usize>,
}

fn default_rip_trials() -> usize {
    200
}

impl Default for RipBlock {
    fn default() -> Self {
        RipBlock {
            trials: default_rip_trials(),
            ranks: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(vec![format!("parse error: {e}")]))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Validates the whole config, reporting every violated field at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let p = &self.problem;
        if p.n == 0 {
            problems.push("problem.n must be >= 1".to_string());
        }
        if p.r == 0 || p.r > p.n {
            problems.push(format!("problem.r must lie in [1, n]; got {}", p.r));
        }
        if p.kappa < 1.0 || !p.kappa.is_finite() {
            problems.push(format!("problem.kappa must be >= 1; got {}", p.kappa));
        }
        if p.r == 1 && p.kappa != 1.0 {
            problems.push("problem.kappa must be 1 when r == 1".to_string());
        }
        if let Some(m) = p.m {
            if m == 0 {
                problems.push("problem.m must be >= 1".to_string());
            }
        } else if p.m_factor == 0 {
            problems.push("problem.m_factor must be >= 1".to_string());
        }
        if !(0.0..0.5).contains(&p.p_s) {
            problems.push(format!("problem.p_s must lie in [0, 0.5); got {}", p.p_s));
        }
        for ps in &self.sweep.p_s {
            if !(0.0..0.5).contains(ps) {
                problems.push(format!("sweep.p_s entries must lie in [0, 0.5); got {ps}"));
            }
        }
        for k in &self.sweep.kappa {
            if *k < 1.0 {
                problems.push(format!("sweep.kappa entries must be >= 1; got {k}"));
            }
        }
        if let Some(sw) = p.sigma_w {
            if sw < 0.0 || !sw.is_finite() {
                problems.push(format!("problem.sigma_w must be >= 0; got {sw}"));
            }
        }
        if p.sigma_w.is_some() && p.snr_db.is_some() {
            problems.push("problem.sigma_w and problem.snr_db are mutually exclusive".to_string());
        }
        if self.solvers.is_empty() {
            problems.push("at least one [[solver]] block is required".to_string());
        }
        for (idx, s) in self.solvers.iter().enumerate() {
            let tag = format!("solver[{idx}]");
            match s.schedule {
                ScheduleKind::Geometric => {
                    match s.lambda {
                        Some(l) if l > 0.0 && l.is_finite() => {}
                        Some(l) => problems.push(format!("{tag}.lambda must be > 0; got {l}")),
                        None => problems.push(format!("{tag}.lambda is required for geometric")),
                    }
                    match s.q {
                        Some(q) if q > 0.0 && q < 1.0 => {}
                        Some(q) => problems.push(format!("{tag}.q must lie in (0, 1); got {q}")),
                        None => problems.push(format!("{tag}.q is required for geometric")),
                    }
                }
                ScheduleKind::Constant => {
                    if s.eta.is_none() {
                        problems.push(format!("{tag}.eta is required for constant"));
                    }
                }
                ScheduleKind::Polyak => {
                    let corrupted = p.p_s > 0.0
                        || p.sigma_w.unwrap_or(0.0) > 0.0
                        || p.snr_db.is_some()
                        || !self.sweep.p_s.iter().all(|&x| x == 0.0)
                        || !self.sweep.snr_db.is_empty();
                    if corrupted && s.fstar.is_none() && s.fstar_policy == FstarPolicy::Strict {
                        problems.push(format!(
                            "{tag}: polyak with corrupted data needs an explicit fstar or fstar_policy = \"oracle\""
                        ));
                    }
                }
                ScheduleKind::TheoremExact | ScheduleKind::TheoremNoisy => {}
            }
            if s.algorithm.needs_least_squares() && s.schedule == ScheduleKind::Polyak {
                // Allowed, but the loss is least-squares; nothing to check.
            }
        }
        if self.rip.trials == 0 {
            problems.push("rip.trials must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn measurement_count(&self) -> usize {
        self.problem
            .m
            .unwrap_or(self.problem.m_factor * self.problem.n * self.problem.r)
    }
}

impl SolverBlock {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let algo = match self.algorithm {
                Algorithm::ScaledSm => "scaled_sm",
                Algorithm::VanillaSm => "vanilla_sm",
                Algorithm::ScaledGd => "scaled_gd",
                Algorithm::Gd => "gd",
            };
            let sched = match self.schedule {
                ScheduleKind::Polyak => "polyak",
                ScheduleKind::Geometric => "geometric",
                ScheduleKind::Constant => "constant",
                ScheduleKind::TheoremExact => "theorem_exact",
                ScheduleKind::TheoremNoisy => "theorem_noisy",
            };
            format!("{algo}_{sched}")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
kind = "matrix_sensing"
n = 20
r = 2
kappa = 5.0

[[solver]]
algorithm = "scaled_sm"
schedule = "polyak"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.measurement_count(), 8 * 20 * 2);
        assert_eq!(c.problem.seed, 42);
        assert_eq!(c.solver_defaults.max_iters, 1000);
        assert_eq!(c.solver_defaults.tol_rel_err, 1e-12);
        assert_eq!(c.solvers[0].label(), "scaled_sm_polyak");
    }

    #[test]
    fn validation_collects_every_violation() {
        let bad = r#"
[problem]
kind = "matrix_sensing"
n = 0
r = 3
kappa = 0.5
p_s = 0.7

[[solver]]
algorithm = "scaled_sm"
schedule = "geometric"
"#;
        let err = ExperimentConfig::from_toml(bad).unwrap_err();
        let Error::Config(list) = err else {
            panic!("expected config error")
        };
        assert!(list.len() >= 5, "got {list:?}");
    }

    #[test]
    fn polyak_with_outliers_requires_explicit_fstar() {
        let bad = MINIMAL.replace("kappa = 5.0", "kappa = 5.0\np_s = 0.2");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let ok = bad.replace("schedule = \"polyak\"", "schedule = \"polyak\"\nfstar_policy = \"oracle\"");
        ExperimentConfig::from_toml(&ok).unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = c.to_toml();
        let c2 = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c2.problem.n, 20);
        assert_eq!(c2.solvers.len(), 1);
    }
}
