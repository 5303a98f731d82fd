//! Experiment configuration: the on-disk JSON format consumed by `run`,
//! `curve`, and `sweep`, plus validation.
//!
//! A config file holds one tagged [`JobConfig`]. A run manifest embeds the
//! config it was produced from, and the loader accepts either form, so a
//! previous run's `manifest.json` can be passed straight back to `--config`.

use std::fs;
use std::path::Path;

use qtherm::error::{Error, Result};
use qtherm::model::ModelSpec;
use serde::{Deserialize, Serialize};

/// Initial-state family of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateFamily {
    /// Random superposition with a Lorentzian envelope of half-width
    /// `gamma0` on the lowest system level.
    Lorentzian { gamma0: f64 },
    /// The single zero-order state nearest the window center.
    BasisState,
}

impl StateFamily {
    pub fn label(&self) -> &'static str {
        match self {
            StateFamily::Lorentzian { .. } => "lorentzian",
            StateFamily::BasisState => "basis_state",
        }
    }

    pub fn gamma0(&self) -> f64 {
        match self {
            StateFamily::Lorentzian { gamma0 } => *gamma0,
            StateFamily::BasisState => 0.0,
        }
    }
}

/// Sampling times for the entropy time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeGrid {
    /// `n_samples` points from 0 to twice the equilibration-time heuristic.
    Auto { n_samples: usize },
    /// `n_samples` points from 0 to `t_max`.
    Explicit { t_max: f64, n_samples: usize },
}

impl TimeGrid {
    pub fn n_samples(&self) -> usize {
        match self {
            TimeGrid::Auto { n_samples } | TimeGrid::Explicit { n_samples, .. } => *n_samples,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples() < 2 {
            return Err(Error::config("time grid needs at least 2 samples"));
        }
        if let TimeGrid::Explicit { t_max, .. } = self {
            if !(*t_max > 0.0) {
                return Err(Error::config(
                    "time grid must be strictly increasing (t_max > 0)",
                ));
            }
        }
        Ok(())
    }

    /// The concrete strictly increasing grid, given the resolved end time.
    pub fn points(&self, t_max: f64, n_samples: usize) -> Vec<f64> {
        (0..n_samples)
            .map(|i| t_max * i as f64 / (n_samples - 1) as f64)
            .collect()
    }
}

/// One `run` invocation: a model, an initial-state family, a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelSpec,
    pub family: StateFamily,
    pub time_grid: TimeGrid,
    pub n_seeds: u32,
    /// Bin count for the state profiles; the span/width rule applies if
    /// absent.
    #[serde(default)]
    pub bins: Option<usize>,
}

/// What an evolved-curve group measures per `gamma0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMeasure {
    /// Equilibrium entropy `S(t_eq)` against the master entropy at
    /// `(gamma_f, rho_f)` — the upper branch of the entropy diagonal.
    FinalEntropy,
    /// Excess entropy production against the master excess expression.
    Excess,
}

/// Initial-state entropies across a `gamma0` grid; no dynamics involved.
///
/// Each point gets its own window `clamp(truncation_half_widths * gamma0,
/// min_window, model.window_half_width)` so the envelope is always truncated
/// at the same relative depth while the basis stays affordable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCurveGroup {
    pub label: String,
    pub model: ModelSpec,
    pub gamma0_list: Vec<f64>,
    pub n_seeds: u32,
    pub truncation_half_widths: f64,
    pub min_window: f64,
}

/// Evolved observables across a `gamma0` grid; one diagonalization per seed,
/// shared by every `gamma0` in the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolvedCurveGroup {
    pub label: String,
    pub model: ModelSpec,
    pub gamma0_list: Vec<f64>,
    /// Also evolve the central basis state and add its point to the table.
    pub include_basis_state: bool,
    pub n_seeds: u32,
    pub measure: CurveMeasure,
}

/// One `curve` invocation: any mix of initial and evolved groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub name: String,
    #[serde(default)]
    pub initial_groups: Vec<InitialCurveGroup>,
    #[serde(default)]
    pub evolved_groups: Vec<EvolvedCurveGroup>,
}

/// One `sweep` invocation: repeatedly halve `k` and double `A` from the base
/// model, tracking the Lorentzian and basis-state families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    /// Step-0 model; step `j` uses `k / 2^j` and `A * 2^j`.
    pub base: ModelSpec,
    #[serde(default = "default_sweep_steps")]
    pub steps: u32,
    /// Half-width of the Lorentzian family.
    pub gamma0: f64,
    /// Hamiltonian seeds per step.
    pub n_seeds: u32,
    /// Independent Lorentzian draws evolved per Hamiltonian.
    pub draws_per_seed: u32,
    /// Basis states (nearest-to-center, in distance order) evolved per
    /// Hamiltonian.
    pub basis_offsets: u32,
    /// Per-step window half-widths (length `steps`); the base window is used
    /// everywhere if absent.
    #[serde(default)]
    pub windows: Option<Vec<f64>>,
}

fn default_sweep_steps() -> u32 {
    5
}

/// Everything the driver can execute, as stored in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum JobConfig {
    Run(RunConfig),
    Curve(CurveConfig),
    Sweep(SweepConfig),
}

impl JobConfig {
    pub fn name(&self) -> &str {
        match self {
            JobConfig::Run(c) => &c.name,
            JobConfig::Curve(c) => &c.name,
            JobConfig::Sweep(c) => &c.name,
        }
    }

    /// The master seed all per-seed streams derive from.
    pub fn master_seed(&self) -> u64 {
        match self {
            JobConfig::Run(c) => c.model.seed,
            JobConfig::Curve(c) => c
                .initial_groups
                .first()
                .map(|g| g.model.seed)
                .or_else(|| c.evolved_groups.first().map(|g| g.model.seed))
                .unwrap_or(0),
            JobConfig::Sweep(c) => c.base.seed,
        }
    }

    /// Overrides the master seed everywhere a model is embedded.
    pub fn set_master_seed(&mut self, seed: u64) {
        match self {
            JobConfig::Run(c) => c.model.seed = seed,
            JobConfig::Curve(c) => {
                for g in &mut c.initial_groups {
                    g.model.seed = seed;
                }
                for g in &mut c.evolved_groups {
                    g.model.seed = seed;
                }
            }
            JobConfig::Sweep(c) => c.base.seed = seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JobConfig::Run(c) => {
                c.model.validate()?;
                c.time_grid.validate()?;
                if c.n_seeds == 0 {
                    return Err(Error::config("n_seeds must be at least 1"));
                }
                if let StateFamily::Lorentzian { gamma0 } = c.family {
                    if !(gamma0 > 0.0) {
                        return Err(Error::config("gamma0 must be positive"));
                    }
                }
                if let Some(b) = c.bins {
                    if b < 10 {
                        return Err(Error::config("bins must be at least 10"));
                    }
                }
                Ok(())
            }
            JobConfig::Curve(c) => {
                if c.initial_groups.is_empty() && c.evolved_groups.is_empty() {
                    return Err(Error::config("curve needs at least one group"));
                }
                for g in &c.initial_groups {
                    g.model.validate()?;
                    if g.gamma0_list.is_empty() {
                        return Err(Error::config(format!(
                            "curve group '{}' has an empty gamma0 list",
                            g.label
                        )));
                    }
                    if g.gamma0_list.iter().any(|&g0| !(g0 > 0.0)) {
                        return Err(Error::config("gamma0 values must be positive"));
                    }
                    if g.n_seeds == 0 {
                        return Err(Error::config("n_seeds must be at least 1"));
                    }
                    if !(g.truncation_half_widths > 0.0) || !(g.min_window > 0.0) {
                        return Err(Error::config(
                            "truncation_half_widths and min_window must be positive",
                        ));
                    }
                }
                for g in &c.evolved_groups {
                    g.model.validate()?;
                    if g.gamma0_list.is_empty() && !g.include_basis_state {
                        return Err(Error::config(format!(
                            "evolved curve group '{}' has nothing to do",
                            g.label
                        )));
                    }
                    if g.gamma0_list.iter().any(|&g0| !(g0 > 0.0)) {
                        return Err(Error::config("gamma0 values must be positive"));
                    }
                    if g.n_seeds == 0 {
                        return Err(Error::config("n_seeds must be at least 1"));
                    }
                    if !(g.model.coupling > 0.0) {
                        return Err(Error::config(
                            "evolved curve groups need a positive coupling",
                        ));
                    }
                }
                Ok(())
            }
            JobConfig::Sweep(c) => {
                c.base.validate()?;
                if c.steps < 3 {
                    return Err(Error::config("sweep needs at least 3 steps"));
                }
                if !(c.gamma0 > 0.0) {
                    return Err(Error::config("gamma0 must be positive"));
                }
                if c.n_seeds == 0 {
                    return Err(Error::config("n_seeds must be at least 1"));
                }
                if c.draws_per_seed == 0 && c.basis_offsets == 0 {
                    return Err(Error::config(
                        "sweep needs draws_per_seed or basis_offsets > 0",
                    ));
                }
                if !(c.base.coupling > 0.0) {
                    return Err(Error::config("sweep needs a positive coupling"));
                }
                if let Some(ws) = &c.windows {
                    if ws.len() != c.steps as usize {
                        return Err(Error::config(format!(
                            "windows has {} entries for {} steps",
                            ws.len(),
                            c.steps
                        )));
                    }
                    if ws.iter().any(|&w| !(w > 0.0)) {
                        return Err(Error::config("window half-widths must be positive"));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Loads a [`JobConfig`] from a config file or from a run manifest (the
/// embedded config echo is used in that case).
pub fn load_config(path: &Path) -> Result<JobConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{} is not valid JSON: {e}", path.display())))?;
    let config_value = match value.get("config") {
        Some(embedded) => embedded.clone(),
        None => value,
    };
    let config: JobConfig = serde_json::from_value(config_value)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec {
            temperature: 6.22,
            bath_prefactor: 4.5,
            coupling: 0.014,
            system_levels: 3,
            level_spacing: 1.0,
            central_energy: 12.0,
            window_half_width: 2.5,
            seed: 1,
        }
    }

    #[test]
    fn run_config_round_trips_through_json() {
        let cfg = JobConfig::Run(RunConfig {
            name: "demo".into(),
            model: spec(),
            family: StateFamily::Lorentzian { gamma0: 0.25 },
            time_grid: TimeGrid::Auto { n_samples: 21 },
            n_seeds: 2,
            bins: None,
        });
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: JobConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        back.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = RunConfig {
            name: "demo".into(),
            model: spec(),
            family: StateFamily::Lorentzian { gamma0: 0.25 },
            time_grid: TimeGrid::Explicit {
                t_max: -1.0,
                n_samples: 5,
            },
            n_seeds: 2,
            bins: None,
        };
        assert!(JobConfig::Run(cfg.clone()).validate().is_err());
        cfg.time_grid = TimeGrid::Auto { n_samples: 1 };
        assert!(JobConfig::Run(cfg.clone()).validate().is_err());
        cfg.time_grid = TimeGrid::Auto { n_samples: 11 };
        cfg.n_seeds = 0;
        assert!(JobConfig::Run(cfg).validate().is_err());

        let sweep = SweepConfig {
            name: "s".into(),
            base: spec(),
            steps: 2,
            gamma0: 0.0625,
            n_seeds: 1,
            draws_per_seed: 1,
            basis_offsets: 0,
            windows: None,
        };
        assert!(JobConfig::Sweep(sweep).validate().is_err());
    }

    #[test]
    fn loader_accepts_a_manifest_wrapper() {
        let cfg = JobConfig::Run(RunConfig {
            name: "demo".into(),
            model: spec(),
            family: StateFamily::BasisState,
            time_grid: TimeGrid::Auto { n_samples: 11 },
            n_seeds: 1,
            bins: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let direct = dir.path().join("config.json");
        std::fs::write(&direct, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(load_config(&direct).unwrap(), cfg);

        let wrapped = dir.path().join("manifest.json");
        let manifest = serde_json::json!({
            "version": "0.1.0",
            "config": serde_json::to_value(&cfg).unwrap(),
            "digests": {},
        });
        std::fs::write(&wrapped, manifest.to_string()).unwrap();
        assert_eq!(load_config(&wrapped).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_fail_loudly() {
        let text = r#"{"experiment":"run","name":"x","model":{},"familly":{}}"#;
        let parsed: std::result::Result<JobConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn sweep_steps_default_to_five() {
        let text = serde_json::json!({
            "experiment": "sweep",
            "name": "s",
            "base": serde_json::to_value(spec()).unwrap(),
            "gamma0": 0.1,
            "n_seeds": 1,
            "draws_per_seed": 1,
            "basis_offsets": 0,
        });
        let cfg: JobConfig = serde_json::from_value(text).unwrap();
        let JobConfig::Sweep(s) = cfg else {
            panic!("expected a sweep config")
        };
        assert_eq!(s.steps, 5);
    }

    #[test]
    fn time_grid_points_are_strictly_increasing() {
        let grid = TimeGrid::Explicit {
            t_max: 5.0,
            n_samples: 11,
        };
        let pts = grid.points(5.0, 11);
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0], 0.0);
        assert_eq!(*pts.last().unwrap(), 5.0);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }
}
