//! Built-in experiment presets.
//!
//! Each preset is a fully specified [`JobConfig`] sized for a single desktop
//! core: basis dimensions stay in the low thousands and every gate in the
//! acceptance suite was calibrated against these exact constants. Targets are
//! stated in physical terms (`rho_f` at the window center, the golden-rule
//! rate `gamma_sp = 2 pi k^2 rho_f`) and converted to the raw `ModelSpec`
//! fields here, in one place.

use qtherm::error::{Error, Result};
use qtherm::model::ModelSpec;

use crate::config::{
    CurveConfig, CurveMeasure, EvolvedCurveGroup, InitialCurveGroup, JobConfig, RunConfig,
    StateFamily, SweepConfig, TimeGrid,
};

/// Bath temperature shared by every preset.
pub const TEMPERATURE: f64 = 6.22;
/// Central total energy shared by every preset.
pub const CENTRAL_ENERGY: f64 = 12.0;

const SYSTEM_LEVELS: u32 = 3;
const LEVEL_SPACING: f64 = 1.0;

/// Names accepted by `--preset`, in documentation order.
pub const PRESET_NAMES: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "desk-small"];

/// `sum_s e^{-E_s/T}` for the fixed three-level system.
fn system_partition() -> f64 {
    (0..SYSTEM_LEVELS)
        .map(|s| (-(s as f64) * LEVEL_SPACING / TEMPERATURE).exp())
        .sum()
}

/// Bath prefactor `A` that puts the total density of states at the window
/// center at `rho_f`.
fn prefactor_for(rho_f: f64) -> f64 {
    rho_f / (system_partition() * (CENTRAL_ENERGY / TEMPERATURE).exp())
}

/// Coupling `k` that puts the golden-rule rate `2 pi k^2 rho_f` at
/// `gamma_sp`.
fn coupling_for(gamma_sp: f64, rho_f: f64) -> f64 {
    (gamma_sp / (2.0 * std::f64::consts::PI * rho_f)).sqrt()
}

/// A preset model stated in physical targets.
fn model(rho_f: f64, gamma_sp: f64, window_half_width: f64, seed: u64) -> ModelSpec {
    ModelSpec {
        temperature: TEMPERATURE,
        bath_prefactor: prefactor_for(rho_f),
        coupling: if gamma_sp > 0.0 {
            coupling_for(gamma_sp, rho_f)
        } else {
            0.0
        },
        system_levels: SYSTEM_LEVELS,
        level_spacing: LEVEL_SPACING,
        central_energy: CENTRAL_ENERGY,
        window_half_width,
        seed,
    }
}

/// Relaxation of a moderately wide Lorentzian: `rho_f = 1200`,
/// `gamma_sp = 0.025`, `gamma0 = 0.15`, five Hamiltonian seeds, basis
/// dimension about 4900.
pub fn fig2() -> JobConfig {
    JobConfig::Run(RunConfig {
        name: "fig2".into(),
        model: model(1200.0, 0.025, 2.0, 101),
        family: StateFamily::Lorentzian { gamma0: 0.15 },
        time_grid: TimeGrid::Auto { n_samples: 25 },
        n_seeds: 5,
        bins: None,
    })
}

/// Same model as [`fig2`] but starting from the single zero-order state at
/// the window center, the fully concentrated limit.
pub fn fig3() -> JobConfig {
    JobConfig::Run(RunConfig {
        name: "fig3".into(),
        model: model(1200.0, 0.025, 2.0, 102),
        family: StateFamily::BasisState,
        time_grid: TimeGrid::Auto { n_samples: 25 },
        n_seeds: 5,
        bins: None,
    })
}

/// The initial-entropy diagonal: `S(gamma0)` across eight decades of
/// `gamma0 * rho0` with no dynamics, plus one evolved point (and its
/// basis-state partner) from the [`fig2`] model showing where relaxation
/// lands on the same diagonal.
pub fn fig4() -> JobConfig {
    let rho0 = 3.0e4;
    // gamma0 grid stated as gamma0 * rho0 products so the resolved and
    // unresolved branches are hit at the intended depths.
    let products = [0.003, 0.01, 10.0, 30.0, 100.0, 300.0];
    let initial_model = ModelSpec {
        temperature: TEMPERATURE,
        bath_prefactor: rho0 * (-CENTRAL_ENERGY / TEMPERATURE).exp(),
        coupling: 0.0,
        system_levels: SYSTEM_LEVELS,
        level_spacing: LEVEL_SPACING,
        central_energy: CENTRAL_ENERGY,
        window_half_width: 3.0,
        seed: 103,
    };
    JobConfig::Curve(CurveConfig {
        name: "fig4".into(),
        initial_groups: vec![InitialCurveGroup {
            label: "initial".into(),
            model: initial_model,
            gamma0_list: products.iter().map(|p| p / rho0).collect(),
            n_seeds: 5,
            truncation_half_widths: 300.0,
            // Keep at least ~400 levels inside the window for the narrowest
            // envelopes.
            min_window: 200.0 / rho0,
        }],
        evolved_groups: vec![EvolvedCurveGroup {
            label: "evolved".into(),
            model: model(1200.0, 0.025, 2.0, 103),
            gamma0_list: vec![0.15],
            include_basis_state: true,
            n_seeds: 1,
            measure: CurveMeasure::FinalEntropy,
        }],
    })
}

/// Excess entropy production against `gamma0`: a plateau group deep in the
/// unresolved regime and a resolved group where the excess follows
/// `ln(gamma_f / gamma0)`.
pub fn fig5() -> JobConfig {
    JobConfig::Curve(CurveConfig {
        name: "fig5".into(),
        initial_groups: vec![],
        evolved_groups: vec![
            EvolvedCurveGroup {
                label: "plateau".into(),
                model: model(1000.0, 0.025, 3.0, 104),
                gamma0_list: vec![3.0e-6, 1.0e-5, 3.0e-5],
                include_basis_state: false,
                n_seeds: 5,
                measure: CurveMeasure::Excess,
            },
            EvolvedCurveGroup {
                label: "resolved".into(),
                model: model(500.0, 0.05, 3.0, 104),
                gamma0_list: vec![0.075, 0.15, 0.3],
                include_basis_state: false,
                n_seeds: 6,
                measure: CurveMeasure::Excess,
            },
        ],
    })
}

/// The classical limit sweep: four steps of `k -> k/2`, `A -> 2A` at fixed
/// `gamma0`, tracking the Lorentzian excess (which halves per step once
/// small) and the basis-state excess (which stays on its ceiling).
pub fn fig6() -> JobConfig {
    JobConfig::Sweep(SweepConfig {
        name: "fig6".into(),
        base: model(120.0, 10.0 / 120.0, 25.0 / 3.0, 105),
        steps: 4,
        gamma0: 0.0625,
        n_seeds: 6,
        draws_per_seed: 8,
        basis_offsets: 4,
        // The width of the evolved envelope halves each step; shrink the
        // window with it to keep the basis dimension near desk scale.
        windows: Some(vec![25.0 / 3.0, 25.0 / 6.0, 2.5, 2.5]),
    })
}

/// A seconds-scale smoke run: basis dimension about 400. Used by the
/// quickstart and by the determinism gate.
pub fn desk_small() -> JobConfig {
    JobConfig::Run(RunConfig {
        name: "desk-small".into(),
        model: model(80.0, 0.1, 2.5, 42),
        family: StateFamily::Lorentzian { gamma0: 0.25 },
        time_grid: TimeGrid::Auto { n_samples: 21 },
        n_seeds: 2,
        bins: None,
    })
}

/// Resolves a preset name.
pub fn by_name(name: &str) -> Result<JobConfig> {
    match name {
        "fig2" => Ok(fig2()),
        "fig3" => Ok(fig3()),
        "fig4" => Ok(fig4()),
        "fig5" => Ok(fig5()),
        "fig6" => Ok(fig6()),
        "desk-small" => Ok(desk_small()),
        other => Err(Error::config(format!(
            "unknown preset '{other}'; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
