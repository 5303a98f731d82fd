//! Initial-state families: random Lorentzian superpositions and single
//! zero-order basis states.
//!
//! A Lorentzian state on system level `s` puts amplitude
//! `g~ * sqrt(L(E))` on each zero-order state of that level, where `g~` is a
//! complex standard normal deviate and `L(E)` is the per-state Lorentzian
//! weight; after sampling, the state is renormalized exactly. A basis state
//! is a single `|s>|eps>` product state.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ZeroOrderBasis};
use crate::rng::{stream, StreamDomain};

/// Complex amplitudes over a [`ZeroOrderBasis`], tagged with the time at
/// which they describe the state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    /// One amplitude per basis entry, in basis order.
    pub amplitudes: Vec<Complex64>,
    /// Time label (inverse energy units, hbar = 1).
    pub t: f64,
}

impl PureState {
    /// Number of amplitudes (the basis dimension).
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Euclidean norm of the amplitude vector.
    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Zero-order-basis probabilities `|c|^2`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::numeric("cannot normalize state with zero norm"));
        }
        for c in &mut self.amplitudes {
            *c /= n;
        }
        Ok(())
    }
}

/// Which density normalizes a [`LorentzianWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowContext {
    /// Initial state: one system level, bath density `rho_0`.
    Initial,
    /// Equilibrated state: all levels, total density `rho_f`.
    Final,
}

/// Lorentzian envelope `L(E) = (1/pi) (gamma/rho) / ((E - center)^2 + gamma^2)`:
/// the expected per-state probability at density `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianWindow {
    pub center: f64,
    pub gamma: f64,
    /// Density of states the envelope is normalized against.
    pub rho: f64,
    pub context: WindowContext,
}

impl LorentzianWindow {
    /// Expected probability of a single state at energy `e`.
    pub fn evaluate(&self, e: f64) -> f64 {
        let d = e - self.center;
        (self.gamma / (std::f64::consts::PI * self.rho)) / (d * d + self.gamma * self.gamma)
    }
}

/// Draws `g~ = (g + i g') / sqrt(2)` with `g, g'` standard normal, so that
/// `E|g~|^2 = 1`.
pub fn complex_deviate<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(rand_distr::StandardNormal);
    let im: f64 = rng.sample(rand_distr::StandardNormal);
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

/// Construction switches for [`build_lorentzian_state_with`].
#[derive(Debug, Clone, Copy)]
pub struct StateOptions {
    /// Draw purely real deviates instead of complex ones (A/B comparison
    /// against the eigenvector convention).
    pub real_deviates: bool,
    /// Snap the envelope center to the nearest zero-order level of the
    /// chosen system index. Without this, sub-level-spacing envelopes land
    /// between levels and acquire a spurious two-state structure.
    pub snap_center: bool,
}

impl Default for StateOptions {
    fn default() -> Self {
        StateOptions {
            real_deviates: false,
            snap_center: true,
        }
    }
}

/// A sampled Lorentzian state plus construction diagnostics.
#[derive(Debug, Clone)]
pub struct LorentzianState {
    pub state: PureState,
    /// The envelope actually used (center possibly snapped).
    pub window: LorentzianWindow,
    /// Basis index of the level the center snapped to.
    pub anchor: usize,
    /// Envelope narrower than a level spacing (`gamma_0 rho_0 < 1`): the
    /// state is effectively a single basis state and the continuous-envelope
    /// entropy expressions do not apply.
    pub under_resolved: bool,
}

/// Samples a random Lorentzian superposition over the `s`-level states of
/// the basis, centered near `center` with half-width `gamma0`.
///
/// Amplitudes are `g~ * sqrt(L)` with `L` the per-state Lorentzian weight
/// against the local level density, renormalized exactly afterwards. The
/// window should cover many half-widths; tails outside it are dropped
/// before renormalization.
pub fn build_lorentzian_state(
    spec: &ModelSpec,
    basis: &ZeroOrderBasis,
    s: u32,
    center: f64,
    gamma0: f64,
    seed: u64,
) -> Result<LorentzianState> {
    build_lorentzian_state_with(spec, basis, s, center, gamma0, seed, StateOptions::default())
}

/// [`build_lorentzian_state`] with explicit [`StateOptions`].
pub fn build_lorentzian_state_with(
    spec: &ModelSpec,
    basis: &ZeroOrderBasis,
    s: u32,
    center: f64,
    gamma0: f64,
    seed: u64,
    options: StateOptions,
) -> Result<LorentzianState> {
    if !(gamma0 > 0.0) {
        return Err(Error::config(format!(
            "lorentzian half-width must be positive, got {gamma0}"
        )));
    }
    if s >= spec.system_levels {
        return Err(Error::config(format!(
            "system index {s} out of range (n_s = {})",
            spec.system_levels
        )));
    }
    let level_indices = basis.level_indices(s);
    if level_indices.is_empty() {
        return Err(Error::config(format!(
            "no basis states on system level {s} inside the window"
        )));
    }

    // snap the center to the nearest level of this ladder
    let anchor = level_indices
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = (basis.states[a].e_zero - center).abs();
            let db = (basis.states[b].e_zero - center).abs();
            da.partial_cmp(&db).unwrap()
        })
        .expect("nonempty ladder");
    let used_center = if options.snap_center {
        basis.states[anchor].e_zero
    } else {
        center
    };

    let rho0 = spec.bath_density(used_center - spec.system_energy(s));
    let window = LorentzianWindow {
        center: used_center,
        gamma: gamma0,
        rho: rho0,
        context: WindowContext::Initial,
    };

    let mut rng = stream(seed, StreamDomain::State, 0);
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    for &i in &level_indices {
        let entry = &basis.states[i];
        let rho_local = spec.bath_density(entry.e_bath);
        let d = entry.e_zero - used_center;
        let weight = (gamma0 / std::f64::consts::PI) / (d * d + gamma0 * gamma0) / rho_local;
        let g = if options.real_deviates {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            Complex64::new(re, 0.0)
        } else {
            complex_deviate(&mut rng)
        };
        amplitudes[i] = g * weight.sqrt();
    }

    let mut state = PureState { amplitudes, t: 0.0 };
    state.normalize()?;
    Ok(LorentzianState {
        state,
        window,
        anchor,
        under_resolved: gamma0 * rho0 < 1.0,
    })
}

/// Builds the single product state `|s>|eps>` identified by its global bath
/// level index.
pub fn build_basis_state(basis: &ZeroOrderBasis, s: u32, bath_index: usize) -> Result<PureState> {
    let pos = basis
        .states
        .iter()
        .position(|e| e.s == s && e.bath_index == bath_index)
        .ok_or_else(|| {
            Error::config(format!(
                "basis state (s={s}, eps={bath_index}) is not inside the truncation window"
            ))
        })?;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    amplitudes[pos] = Complex64::new(1.0, 0.0);
    Ok(PureState { amplitudes, t: 0.0 })
}

/// Basis index of the `s`-level state closest to `energy` (by zero-order
/// energy), then by rank: `offset = 0` is the closest, `1` the next, and so
/// on. Useful for picking several nearby basis states deterministically.
pub fn nearest_level_index(
    basis: &ZeroOrderBasis,
    s: u32,
    energy: f64,
    offset: usize,
) -> Result<usize> {
    let mut ladder = basis.level_indices(s);
    if ladder.is_empty() {
        return Err(Error::config(format!("no basis states on system level {s}")));
    }
    ladder.sort_by(|&a, &b| {
        let da = (basis.states[a].e_zero - energy).abs();
        let db = (basis.states[b].e_zero - energy).abs();
        da.partial_cmp(&db).unwrap()
    });
    ladder.get(offset).copied().ok_or_else(|| {
        Error::config(format!(
            "offset {offset} exceeds the {} states on level {s}",
            ladder.len()
        ))
    })
}

/// Writes a state as CSV with columns `s,eps,E_zero,re,im`.
pub fn write_state_csv<W: std::io::Write>(
    w: W,
    basis: &ZeroOrderBasis,
    state: &PureState,
) -> Result<()> {
    if basis.len() != state.len() {
        return Err(Error::config(format!(
            "state dimension {} does not match basis dimension {}",
            state.len(),
            basis.len()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "eps", "E_zero", "re", "im"])
        .map_err(crate::analytic::csv_err)?;
    for (entry, amp) in basis.states.iter().zip(&state.amplitudes) {
        out.write_record([
            entry.s.to_string(),
            entry.bath_index.to_string(),
            entry.e_zero.to_string(),
            amp.re.to_string(),
            amp.im.to_string(),
        ])
        .map_err(crate::analytic::csv_err)?;
    }
    out.flush()?;
    Ok(())
}
