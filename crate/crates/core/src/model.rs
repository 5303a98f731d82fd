//! Model specification and zero-order construction.
//!
//! The universe is a small system (levels `E_s = s * level_spacing`,
//! `s = 0..n_s`) joined to a bath whose level density is
//! `rho_E(E) = A e^{E/T}`. Zero-order product states `|s>|eps>` carry energy
//! `E_zero = E_s + eps`; only those inside the window
//! `[E0 - W, E0 + W]` are kept. The Hamiltonian is the diagonal of zero-order
//! energies plus independent Gaussian off-diagonal couplings of scale `k`
//! (the coupling has no diagonal part).
//!
//! Bath levels are placed deterministically by inverting the cumulative level
//! count `N(E) = A T (e^{E/T} - e^{E_low/T})`: level `n` sits where
//! `N(E) = n - 1/2`. This reproduces the target density exactly (to within one
//! level over any interval) without random placement, so the only randomness
//! in the model is the coupling fill.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamDomain};

/// Hard cap on the dense Hamiltonian dimension; above this a full
/// eigendecomposition is no longer a desk-scale computation.
pub const MAX_DENSE_DIM: usize = 20_000;

fn default_system_levels() -> u32 {
    3
}

fn default_level_spacing() -> f64 {
    1.0
}

/// Complete description of one realization of the model.
///
/// Serialization uses exactly these field names; unknown fields are rejected
/// so that a typo in a config file fails loudly instead of silently falling
/// back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Bath temperature `T` (energy units; Boltzmann's constant is 1).
    pub temperature: f64,
    /// Bath density prefactor `A` in `rho_E(E) = A e^{E/T}`.
    pub bath_prefactor: f64,
    /// Coupling scale `k` of the Gaussian off-diagonal fill.
    pub coupling: f64,
    /// Number of system levels `n_s`.
    #[serde(default = "default_system_levels")]
    pub system_levels: u32,
    /// Spacing between adjacent system levels.
    #[serde(default = "default_level_spacing")]
    pub level_spacing: f64,
    /// Central total energy `E0` of the window.
    pub central_energy: f64,
    /// Half-width `W` of the kept energy window `[E0 - W, E0 + W]`.
    pub window_half_width: f64,
    /// Seed for the coupling fill (and anything else derived from this spec).
    pub seed: u64,
}

impl ModelSpec {
    /// Checks internal consistency; every constructor in this crate calls it.
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        if !(self.bath_prefactor > 0.0) {
            return Err(Error::config("bath_prefactor must be positive"));
        }
        if !(self.coupling >= 0.0) {
            return Err(Error::config("coupling must be non-negative"));
        }
        if self.system_levels == 0 {
            return Err(Error::config("system_levels must be at least 1"));
        }
        if !(self.level_spacing > 0.0) {
            return Err(Error::config("level_spacing must be positive"));
        }
        if !(self.window_half_width > 0.0) {
            return Err(Error::config("window_half_width must be positive"));
        }
        if self.central_energy - self.window_half_width < 0.0 {
            return Err(Error::config(
                "window must lie at non-negative energies (E0 - W >= 0)",
            ));
        }
        Ok(())
    }

    /// Energy of system level `s`.
    pub fn system_energy(&self, s: u32) -> f64 {
        f64::from(s) * self.level_spacing
    }

    /// Highest system level energy `E_{s,max}`.
    pub fn max_system_energy(&self) -> f64 {
        self.system_energy(self.system_levels - 1)
    }

    /// System partition sum `Z = sum_s e^{-E_s/T}` at the bath temperature.
    pub fn system_partition(&self) -> f64 {
        (0..self.system_levels)
            .map(|s| (-self.system_energy(s) / self.temperature).exp())
            .sum()
    }

    /// Bath level density `rho_E(E) = A e^{E/T}` (meaningful for `E >= 0`).
    pub fn bath_density(&self, e: f64) -> f64 {
        self.bath_prefactor * (e / self.temperature).exp()
    }

    /// Total zero-order level density `rho_f(E) = sum_s rho_E(E - E_s)`,
    /// for `E >= E_{s,max}` so every system level contributes.
    pub fn total_density(&self, e: f64) -> f64 {
        debug_assert!(e - self.max_system_energy() >= 0.0);
        (0..self.system_levels)
            .map(|s| self.bath_density(e - self.system_energy(s)))
            .sum()
    }

    /// Kept window of total energies `[E0 - W, E0 + W]`.
    pub fn window(&self) -> (f64, f64) {
        (
            self.central_energy - self.window_half_width,
            self.central_energy + self.window_half_width,
        )
    }

    /// Bath energy range needed to populate the window for every system
    /// level, clamped to non-negative energies.
    pub fn bath_range(&self) -> (f64, f64) {
        let (lo, hi) = self.window();
        ((lo - self.max_system_energy()).max(0.0), hi)
    }
}

/// Deterministic bath spectrum for `spec`, ascending.
///
/// Level `n` (1-based) is placed where the cumulative count
/// `N(E) = A T (e^{E/T} - e^{E_low/T})` equals `n - 1/2`, so the count inside
/// any subinterval matches the integrated density to within one level.
pub fn build_bath_levels(spec: &ModelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let t = spec.temperature;
    let (e_low, e_high) = spec.bath_range();
    let total = spec.bath_prefactor * t * ((e_high / t).exp() - (e_low / t).exp());
    let count = (total + 0.5).floor() as usize;
    let base = (e_low / t).exp();
    let at = spec.bath_prefactor * t;
    let levels = (1..=count)
        .map(|n| t * ((n as f64 - 0.5) / at + base).ln())
        .collect();
    Ok(levels)
}

/// One zero-order product state `|s>|eps>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisState {
    /// System level index.
    pub s: u32,
    /// Index of the bath level in the bath spectrum.
    pub bath_index: usize,
    /// Bath level energy `eps`.
    pub e_bath: f64,
    /// Zero-order energy `E_s + eps`.
    pub e_zero: f64,
}

/// The kept zero-order basis, sorted by zero-order energy (ties broken by
/// `(s, bath_index)` so the order is fully deterministic).
#[derive(Debug, Clone)]
pub struct ZeroOrderBasis {
    pub states: Vec<BasisState>,
    /// The underlying bath spectrum (shared by all system levels).
    pub bath_levels: Vec<f64>,
}

impl ZeroOrderBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Zero-order energies in basis order.
    pub fn energies(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|b| b.e_zero)
    }

    /// Indices of basis states belonging to system level `s`.
    pub fn level_indices(&self, s: u32) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, b)| b.s == s)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds the zero-order basis: every `|s>|eps>` with `E_s + eps` inside the
/// window, over one shared bath spectrum.
pub fn build_basis(spec: &ModelSpec) -> Result<ZeroOrderBasis> {
    let bath_levels = build_bath_levels(spec)?;
    let (w_lo, w_hi) = spec.window();
    let mut states = Vec::new();
    for s in 0..spec.system_levels {
        let es = spec.system_energy(s);
        // bath energies must fall in [w_lo - es, w_hi - es]
        let lo = bath_levels.partition_point(|&e| e < w_lo - es);
        for (off, &eps) in bath_levels[lo..].iter().enumerate() {
            if es + eps > w_hi {
                break;
            }
            states.push(BasisState {
                s,
                bath_index: lo + off,
                e_bath: eps,
                e_zero: es + eps,
            });
        }
    }
    states.sort_by(|a, b| {
        a.e_zero
            .partial_cmp(&b.e_zero)
            .expect("energies are finite")
            .then(a.s.cmp(&b.s))
            .then(a.bath_index.cmp(&b.bath_index))
    });
    Ok(ZeroOrderBasis {
        states,
        bath_levels,
    })
}

/// Assembles the dense Hamiltonian for a basis: zero-order energies on the
/// diagonal, `k * g_ij` with `g_ij ~ N(0,1)` off the diagonal (symmetric; the
/// coupling itself has zero diagonal).
///
/// The Gaussian fill consumes the `Matrix` stream of `spec.seed` in row-major
/// upper-triangle order, then mirrors — the same spec and seed always produce
/// the identical matrix.
pub fn build_hamiltonian(spec: &ModelSpec, basis: &ZeroOrderBasis) -> Result<Mat<f64>> {
    spec.validate()?;
    let n = basis.len();
    if n == 0 {
        return Err(Error::config("empty basis: window contains no states"));
    }
    if n > MAX_DENSE_DIM {
        return Err(Error::Resource(format!(
            "basis dimension {n} exceeds dense limit {MAX_DENSE_DIM}; shrink the window"
        )));
    }
    let mut rng = stream(spec.seed, StreamDomain::Matrix, 0);
    let k = spec.coupling;
    let mut h = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = basis.states[i].e_zero;
        for j in (i + 1)..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            h[(i, j)] = k * g;
            h[(j, i)] = k * g;
        }
    }
    Ok(h)
}
