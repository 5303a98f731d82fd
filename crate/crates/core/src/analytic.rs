//! Closed-form predictions for entropies and spreading widths.
//!
//! A random-phase state whose zero-order occupations follow a Lorentzian of
//! half-width `gamma` over a level density `rho` has mean Shannon entropy
//!
//! ```text
//! S = ln(4 pi gamma rho) - g0,        g0 = <|g|^2 ln|g|^2> = 1 - euler_gamma
//! ```
//!
//! provided the Lorentzian is resolved (`gamma rho` above `e^{g0}/4pi`, the
//! point where the expression crosses zero); below that the state is
//! essentially a single basis state and the entropy is ~0. Coupling a basis
//! state to the window spreads it into a Lorentzian of half-width
//! `2 pi k^2 rho_f` (twice the eigenstate half-width `pi k^2 rho`), and an
//! initial Lorentzian of width `gamma_0` evolves to `gamma_0 + 2 pi k^2 rho_f`
//! because the convolution of Lorentzians adds widths.
//!
//! Combining these gives the piecewise master expression for the excess
//! entropy production of thermalization (entropy produced beyond the
//! classical `ln(rho_f/rho_0)`): `ln(gamma_f/gamma_0)` when the initial state
//! is resolved, saturating at `ln(8 pi^2 k^2 rho_f rho_0) - g0` when it is
//! not.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Mean of `x ln x` for `x ~ Exp(1)`: the entropy deficit of exponential
/// (complex-Gaussian) amplitude fluctuations, `g0 = 1 - euler_gamma`.
pub const G0: f64 = 1.0 - EULER_GAMMA;

/// `gamma * rho` below which a Lorentzian state stops being resolved:
/// `e^{g0} / 4 pi`, where [`lorentzian_entropy`] crosses zero.
pub fn resolution_threshold() -> f64 {
    G0.exp() / (4.0 * std::f64::consts::PI)
}

/// Mean entropy `ln(4 pi gamma rho) - g0` of a resolved Lorentzian state.
pub fn lorentzian_entropy(gamma: f64, rho: f64) -> f64 {
    (4.0 * std::f64::consts::PI * gamma * rho).ln() - G0
}

/// Equilibrium entropy prediction: [`lorentzian_entropy`] above the
/// resolution threshold, zero below it.
pub fn master_entropy(gamma: f64, rho: f64) -> f64 {
    if gamma * rho >= resolution_threshold() {
        lorentzian_entropy(gamma, rho)
    } else {
        0.0
    }
}

/// Half-width `pi k^2 rho` of an eigenstate envelope over the zero-order
/// basis.
pub fn eigenstate_width(k: f64, rho: f64) -> f64 {
    std::f64::consts::PI * k * k * rho
}

/// Half-width `gamma_0 + 2 pi k^2 rho_f` of an evolved state's envelope: the
/// initial width plus the spreading width (twice the eigenstate width, once
/// for the expansion in eigenstates and once for the expansion back).
pub fn evolved_width(gamma0: f64, k: f64, rho_f: f64) -> f64 {
    gamma0 + 2.0 * eigenstate_width(k, rho_f)
}

/// Entropy change of classical/thermal bookkeeping between two densities:
/// `ln(rho_f / rho_0)`.
pub fn classical_delta_s(rho0: f64, rho_f: f64) -> f64 {
    (rho_f / rho0).ln()
}

/// Excess entropy production of thermalization from an initial Lorentzian
/// `(gamma_0, rho_0)` into the full window `(rho_f)` at coupling `k`.
///
/// Resolved initial states produce `ln(gamma_f / gamma_0)`; unresolved ones
/// saturate at the maximum `ln(8 pi^2 k^2 rho_f rho_0) - g0`.
pub fn master_excess(gamma0: f64, rho0: f64, rho_f: f64, k: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if gamma0 >= G0.exp() / (4.0 * pi * rho0) {
        (evolved_width(gamma0, k, rho_f) / gamma0).ln()
    } else {
        (8.0 * pi * pi * k * k * rho_f * rho0).ln() - G0
    }
}

/// Which branch of the master expressions applies to an initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `gamma_0 rho_0` above the resolution threshold.
    Resolved,
    /// Initial state narrower than a level spacing (entropy ~0).
    Unresolved,
}

/// Returns `g0`, the fluctuation correction to the perfect-Lorentzian
/// entropy.
pub fn g0_constant() -> f64 {
    G0
}

/// Bundle of closed-form predictions for one initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterPrediction {
    pub gamma0: f64,
    /// Final half-width `gamma0 + 2 pi k^2 rho_f`.
    pub gamma_f: f64,
    pub rho0: f64,
    pub rho_f: f64,
    pub k: f64,
    /// Predicted initial entropy (master entropy of the initial Lorentzian).
    pub s_initial: f64,
    /// Predicted equilibrium entropy of the evolved state.
    pub s_final: f64,
    /// Classical baseline `ln(rho_f / rho_0)`.
    pub ds_classical: f64,
    /// Predicted excess entropy production.
    pub dsx: f64,
    /// Saturation value of the excess, reached by unresolved initial states.
    pub dsx_max: f64,
    pub regime: Regime,
}

/// Evaluates every master expression for one initial condition.
pub fn predict(gamma0: f64, rho0: f64, rho_f: f64, k: f64) -> MasterPrediction {
    let pi = std::f64::consts::PI;
    let regime = if gamma0 * rho0 >= resolution_threshold() {
        Regime::Resolved
    } else {
        Regime::Unresolved
    };
    MasterPrediction {
        gamma0,
        gamma_f: evolved_width(gamma0, k, rho_f),
        rho0,
        rho_f,
        k,
        s_initial: master_entropy(gamma0, rho0),
        s_final: master_entropy(evolved_width(gamma0, k, rho_f), rho_f),
        ds_classical: classical_delta_s(rho0, rho_f),
        dsx: master_excess(gamma0, rho0, rho_f, k),
        dsx_max: (8.0 * pi * pi * k * k * rho_f * rho0).ln() - G0,
        regime,
    }
}

/// Writes predictions as CSV with the stable column set
/// `gamma0,rho0,rho_f,k,S_pred_initial,S_pred_final,dSx_pred,regime`.
pub fn write_predictions<W: std::io::Write>(w: W, rows: &[MasterPrediction]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "gamma0",
        "rho0",
        "rho_f",
        "k",
        "S_pred_initial",
        "S_pred_final",
        "dSx_pred",
        "regime",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let regime = match r.regime {
            Regime::Resolved => "resolved",
            Regime::Unresolved => "unresolved",
        };
        out.write_record([
            r.gamma0.to_string(),
            r.rho0.to_string(),
            r.rho_f.to_string(),
            r.k.to_string(),
            r.s_initial.to_string(),
            r.s_final.to_string(),
            r.dsx.to_string(),
            regime.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}
