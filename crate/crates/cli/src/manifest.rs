//! The run manifest: provenance for one output directory.
//!
//! A manifest echoes the full config, the master seed, every derived
//! per-seed stream, the derived physical scales per experimental unit, and
//! SHA-256 digests of every other artifact in the directory. The embedded
//! config is sufficient to reproduce the run bit for bit: passing the
//! manifest itself to `--config` re-runs it.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use qtherm::analytic::{self, MasterPrediction};
use qtherm::model::ModelSpec;
use qtherm::spectral;
use serde::Serialize;

use crate::config::JobConfig;

/// Physical scales of one experimental unit (one model, possibly one
/// `gamma0`), as actually derived from the spec.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedUnit {
    /// Which part of the experiment this describes.
    pub label: String,
    /// Zero-order basis dimension.
    pub n_basis: usize,
    /// Bath density of states at the window center.
    pub rho0: f64,
    /// Total density of states at the window center.
    pub rho_f: f64,
    /// Golden-rule spreading rate `2 pi k^2 rho_f`.
    pub gamma_sp: f64,
    /// Eigenstate half-width `pi k^2 rho_f`.
    pub gamma_xi: f64,
    /// Equilibration-time heuristic, when the coupling is nonzero.
    pub t_eq: Option<f64>,
    /// Closed-form predictions for this unit's initial family, when one
    /// applies.
    pub prediction: Option<MasterPrediction>,
}

/// Builds a [`DerivedUnit`] from a spec and basis size.
///
/// `gamma0` is the Lorentzian half-width of the unit's initial family; pass
/// `Some(0.0)` for a basis-state family and `None` when no prediction is
/// wanted.
pub fn derived_unit(
    label: impl Into<String>,
    spec: &ModelSpec,
    n_basis: usize,
    gamma0: Option<f64>,
) -> DerivedUnit {
    let e0 = spec.central_energy;
    let rho0 = spec.bath_density(e0);
    let rho_f = spec.total_density(e0);
    let k = spec.coupling;
    DerivedUnit {
        label: label.into(),
        n_basis,
        rho0,
        rho_f,
        gamma_sp: analytic::evolved_width(0.0, k, rho_f),
        gamma_xi: analytic::eigenstate_width(k, rho_f),
        t_eq: spectral::equilibration_time(spec).ok(),
        prediction: gamma0.map(|g0| analytic::predict(g0, rho0, rho_f, k)),
    }
}

/// One derived RNG stream, for the record.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRecord {
    /// The unit the stream belongs to ("run", a group label, or a step).
    pub scope: String,
    /// Seed index within the unit.
    pub index: u32,
    /// The derived 64-bit seed.
    pub value: u64,
}

/// Provenance record written as `manifest.json`, last, after every other
/// artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub created_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub master_seed: u64,
    pub seeds: Vec<SeedRecord>,
    pub derived: Vec<DerivedUnit>,
    pub config: JobConfig,
    pub digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: JobConfig) -> Self {
        let created_unix_seconds = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_seconds,
            wall_clock_seconds: 0.0,
            master_seed: config.master_seed(),
            seeds: Vec::new(),
            derived: Vec::new(),
            config,
            digests: BTreeMap::new(),
        }
    }

    pub fn record_seed(&mut self, scope: impl Into<String>, index: u32, value: u64) {
        self.seeds.push(SeedRecord {
            scope: scope.into(),
            index,
            value,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn derived_unit_reports_consistent_scales() {
        let JobConfig::Run(cfg) = presets::fig2() else {
            panic!("fig2 is a run")
        };
        let basis = qtherm::model::build_basis(&cfg.model).unwrap();
        let unit = derived_unit("run", &cfg.model, basis.len(), Some(0.15));
        assert_eq!(unit.n_basis, basis.len());
        // The spreading rate is exactly twice the eigenstate width.
        assert!((unit.gamma_sp / unit.gamma_xi - 2.0).abs() < 1e-12);
        // Ten relaxation cycles.
        let t_eq = unit.t_eq.unwrap();
        assert!((t_eq * unit.gamma_sp - 10.0).abs() < 1e-9);
        let pred = unit.prediction.unwrap();
        assert!((pred.gamma_f - (0.15 + unit.gamma_sp)).abs() < 1e-12);
    }

    #[test]
    fn manifest_serializes_with_embedded_config() {
        let cfg = presets::desk_small();
        let mut m = RunManifest::new(cfg.clone());
        m.record_seed("run", 0, 7);
        m.digests.insert("timeseries.csv".into(), "00".into());
        let text = serde_json::to_string_pretty(&m).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let embedded: JobConfig =
            serde_json::from_value(value.get("config").unwrap().clone()).unwrap();
        assert_eq!(embedded, cfg);
        assert_eq!(value["digests"]["timeseries.csv"], "00");
    }
}
