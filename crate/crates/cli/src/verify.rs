//! The verification suite.
//!
//! Ten numbered criteria cover the library's load-bearing claims: exact
//! identities, the closed-form entropy expressions, spreading widths,
//! thermalization, coefficient statistics, the classical limit, and
//! reproducibility. `qtherm verify` runs all of them and writes a
//! machine-readable report; the acceptance integration test runs the same
//! functions one criterion per test.
//!
//! Tolerances are calibrated for the built-in presets at their default
//! seeds: gates sit several standard errors away from the measured central
//! values, so a pass is informative and a failure means something real
//! drifted. Criteria never weaken on failure; a failing check is reported
//! with its measured value and bounds.

use std::path::PathBuf;
use std::sync::OnceLock;

use num_complex::Complex64;
use qtherm::analytic;
use qtherm::error::{Error, Result};
use qtherm::model::{self, BasisState, ModelSpec, ZeroOrderBasis};
use qtherm::observables;
use qtherm::rng::{derive_seed, stream, StreamDomain};
use qtherm::spectral;
use qtherm::states::{self, PureState};
use qtherm::stats::{self, CoefficientDof, FitInit};
use rand::Rng;
use serde::Serialize;

use crate::config::JobConfig;
use crate::experiment::{
    self, evolved_curve_points, initial_entropy_points, mean, profile_samples, sample_sd,
    sweep_points,
};
use crate::presets;

// ---------------------------------------------------------------------------
// report structure
// ---------------------------------------------------------------------------

/// One measured quantity against its bounds.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Lower bound, when one applies.
    pub lo: Option<f64>,
    /// Upper bound, when one applies.
    pub hi: Option<f64>,
    pub pass: bool,
}

fn check_bounds(name: impl Into<String>, measured: f64, lo: Option<f64>, hi: Option<f64>) -> Check {
    let above = lo.map_or(true, |l| measured >= l);
    let below = hi.map_or(true, |h| measured <= h);
    Check {
        name: name.into(),
        measured,
        lo,
        hi,
        pass: above && below && measured.is_finite(),
    }
}

/// `|measured - target| <= tol`.
fn check_abs(name: impl Into<String>, measured: f64, target: f64, tol: f64) -> Check {
    check_bounds(name, measured, Some(target - tol), Some(target + tol))
}

/// `measured <= hi`.
fn check_max(name: impl Into<String>, measured: f64, hi: f64) -> Check {
    check_bounds(name, measured, None, Some(hi))
}

/// `lo <= measured <= hi`.
fn check_range(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Check {
    check_bounds(name, measured, Some(lo), Some(hi))
}

/// One criterion's verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    /// Stable identifier, `c1` through `c10`.
    pub id: String,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Fraction of individual seeds that meet the criterion's tolerance on
    /// their own, where per-seed variation is meaningful.
    pub seed_pass_rate: Option<f64>,
    /// Context for a reader of the report; never gates.
    pub notes: Vec<String>,
}

impl CriterionResult {
    fn new(id: &str, title: &str) -> Self {
        CriterionResult {
            id: id.into(),
            title: title.into(),
            pass: true,
            checks: Vec::new(),
            seed_pass_rate: None,
            notes: Vec::new(),
        }
    }

    fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn fail_with(mut self, why: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(why.into());
        self
    }

    /// One-line rendering: `[PASS] c4 spreading widths (6/6 checks)`.
    pub fn render(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.pass).count();
        format!(
            "[{}] {} {} ({ok}/{} checks)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.len()
        )
    }
}

/// The whole suite's verdict, written as `verify_report.json`.
#[derive(Debug, Serialize)]
pub struct VerificationReport {
    pub version: String,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

/// Where the suite may write scratch artifacts and find the spectral cache.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub cache_dir: Option<PathBuf>,
    /// Scratch directory for the determinism and cache-integrity checks.
    pub work_dir: PathBuf,
    pub jobs: usize,
}

// ---------------------------------------------------------------------------
// shared artifacts
// ---------------------------------------------------------------------------

/// Reduced measurements from the `fig2` ensemble, shared by criteria 4, 7
/// and 8 so the five diagonalizations happen once.
pub struct Fig2Bundle {
    pub n_basis: usize,
    pub rho_f: f64,
    pub gamma0: f64,
    pub gamma_sp: f64,
    pub gamma_xi: f64,
    pub gamma_f: f64,
    pub t_eq: f64,
    /// Per-seed evolved-Lorentzian width ratios (fit over prediction), each
    /// fitted on that seed's profile pooled over all draws.
    pub evolved_fit_ratios: Vec<f64>,
    /// Pooled evolved-basis-state width fit over prediction.
    pub basis_fit_ratio: Option<f64>,
    /// Fitted evolved-basis-state width (absolute).
    pub basis_fit_gamma: Option<f64>,
    /// Mid-spectrum eigenstate stack width fit over prediction.
    pub eigen_fit_ratio: Option<f64>,
    pub eigen_fit_gamma: Option<f64>,
    /// Eigenvector coefficients rescaled by the fitted envelope (real,
    /// one degree of freedom).
    pub dof1_g: Vec<f64>,
    /// `(x, g^2)` pairs for per-bin quartile checks.
    pub dof1_g2: Vec<(f64, f64)>,
    /// Evolved coefficients rescaled by the per-seed fitted envelope,
    /// normalized per draw (complex, two degrees of freedom).
    pub dof2_re: Vec<f64>,
    pub dof2_im: Vec<f64>,
    /// `(x, |g|^2 / mean)` pairs for per-bin quartile checks.
    pub dof2_m2: Vec<(f64, f64)>,
    /// First-draw per-seed scalars.
    pub s_initial: Vec<f64>,
    pub s_final: Vec<f64>,
    pub dsx: Vec<f64>,
    pub tv: Vec<f64>,
    /// Seed-averaged system marginal at `t_eq` (first draws).
    pub mean_marginal: Vec<f64>,
    pub boltzmann: Vec<f64>,
}

/// Evolved draws per Hamiltonian pooled into the coefficient ensembles.
const FIG2_DRAWS: u32 = 8;
/// Profile half-span and bin count for the evolved-width fits.
const EVOLVED_SPAN: f64 = 1.2;
const EVOLVED_BINS: usize = 96;
/// Eigenstate selection half-window around the band center and sample
/// half-span around each eigenvalue.
const EIGEN_BAND: f64 = 0.8;
const EIGEN_SPAN: f64 = 0.4;
const EIGEN_BINS: usize = 32;
/// Rescaled-coefficient windows and quartile binning.
const DOF2_SPAN: f64 = 0.6;
const DOF2_QUARTILE_BINS: usize = 20;
/// Minimum per-bin count for a quartile comparison to be meaningful.
const QUARTILE_COUNT_FLOOR: usize = 2000;

fn build_fig2_bundle(opts: &VerifyOptions) -> Result<Fig2Bundle> {
    let JobConfig::Run(cfg) = presets::fig2() else {
        return Err(Error::config("fig2 preset is not a run config"));
    };
    let spec = cfg.model.clone();
    let e0 = spec.central_energy;
    let basis = model::build_basis(&spec)?;
    let rho_f = spec.total_density(e0);
    let gamma0 = cfg.family.gamma0();
    let gamma_sp = analytic::evolved_width(0.0, spec.coupling, rho_f);
    let gamma_xi = analytic::eigenstate_width(spec.coupling, rho_f);
    let gamma_f = gamma0 + gamma_sp;
    let t_eq = spectral::equilibration_time(&spec)?;
    let anchor_index = states::nearest_level_index(&basis, 0, e0, 0)?;
    let anchor = basis.states[anchor_index].e_zero;
    let boltzmann = observables::boltzmann_distribution(&spec);

    let mut evolved_fit_ratios = Vec::new();
    let mut basis_stack: Vec<(f64, f64)> = Vec::new();
    let mut eig_samples: Vec<(f64, f64)> = Vec::new();
    let mut eig_coeffs: Vec<(f64, f64, f64)> = Vec::new();
    let mut dof2_re = Vec::new();
    let mut dof2_im = Vec::new();
    let mut dof2_m2 = Vec::new();
    let mut s_initial = Vec::new();
    let mut s_final = Vec::new();
    let mut dsx = Vec::new();
    let mut tv = Vec::new();
    let mut marginal_acc = vec![0.0; spec.system_levels as usize];

    // Seeds match what `qtherm run --preset fig2` executes.
    for i in 0..cfg.n_seeds {
        let run_seed = derive_seed(spec.seed, experiment::EXP_RUN, i as u64);
        let mut spec_i = spec.clone();
        spec_i.seed = run_seed;
        let h = model::build_hamiltonian(&spec_i, &basis)?;
        let decomp = spectral::diagonalize_cached(&h, &spec_i, opts.cache_dir.as_deref())?;
        drop(h);

        if i == 0 {
            // Stack every mid-spectrum eigenstate into one envelope profile.
            for (xi, &w) in decomp.eigenvalues.iter().enumerate() {
                if (w - e0).abs() >= EIGEN_BAND {
                    continue;
                }
                for (bi, entry) in basis.states.iter().enumerate() {
                    let x = entry.e_zero - w;
                    if x.abs() <= EIGEN_SPAN {
                        let c = decomp.eigenvectors[(bi, xi)];
                        let rho_loc = spec.total_density(entry.e_zero);
                        eig_samples.push((x, c * c * std::f64::consts::PI * rho_loc));
                        eig_coeffs.push((x, c, rho_loc));
                    }
                }
            }
        }

        // Evolved Lorentzian draws: pooled per-seed profile for the width
        // fit, and the per-draw coefficient windows for the statistics.
        let mut seed_stack: Vec<(f64, f64)> = Vec::new();
        let mut draws: Vec<Vec<(f64, Complex64, f64)>> = Vec::new();
        for r in 0..FIG2_DRAWS {
            let state_seed = derive_seed(run_seed, experiment::DRAW_DOMAIN, r as u64);
            let ls = states::build_lorentzian_state(&spec_i, &basis, 0, e0, gamma0, state_seed)?;
            let psi_t = spectral::propagate(&ls.state, &decomp, t_eq);
            seed_stack.extend(profile_samples(&psi_t, &basis, &spec_i, anchor, EVOLVED_SPAN));
            let mut coeffs = Vec::new();
            for (entry, &a) in basis.states.iter().zip(&psi_t.amplitudes) {
                let x = entry.e_zero - anchor;
                if x.abs() <= DOF2_SPAN {
                    coeffs.push((x, a, spec.total_density(entry.e_zero)));
                }
            }
            draws.push(coeffs);
            if r == 0 {
                let initial = observables::split_entropy(&ls.state, &basis, &spec_i);
                let fin = observables::split_entropy(&psi_t, &basis, &spec_i);
                s_initial.push(initial.s_univ);
                s_final.push(fin.s_univ);
                dsx.push(observables::excess_entropy(&initial, &fin, spec.temperature));
                tv.push(observables::total_variation(&fin.p_s, &boltzmann));
                for (acc, &p) in marginal_acc.iter_mut().zip(&fin.p_s) {
                    *acc += p / cfg.n_seeds as f64;
                }
            }
        }

        let profile = stats::bin_profile(&seed_stack, EVOLVED_BINS)?;
        let fit = stats::fit_lorentzian(
            &profile,
            FitInit {
                gamma: gamma_f,
                center: 0.0,
            },
        )?;
        evolved_fit_ratios.push(fit.gamma / gamma_f);

        // Rescale this seed's draws by its fitted envelope; normalize each
        // draw by its own mean power so draw-to-draw width scatter does not
        // masquerade as non-Gaussianity.
        for coeffs in &draws {
            let mut g: Vec<Complex64> = Vec::with_capacity(coeffs.len());
            for &(x, a, rho_loc) in coeffs {
                let envelope =
                    (fit.evaluate(x) / (std::f64::consts::PI * rho_loc)).max(1e-300);
                g.push(a / envelope.sqrt());
            }
            let m2: Vec<f64> = g.iter().map(|v| v.norm_sqr()).collect();
            let mean_m2 = mean(&m2);
            if !(mean_m2 > 0.0) {
                continue;
            }
            let scale = (mean_m2 / 2.0).sqrt();
            for (idx, v) in g.iter().enumerate() {
                dof2_re.push(v.re / scale);
                dof2_im.push(v.im / scale);
                dof2_m2.push((coeffs[idx].0, m2[idx] / mean_m2));
            }
        }

        // Evolved basis state, pooled across seeds.
        let psi0 = states::build_basis_state(&basis, 0, basis.states[anchor_index].bath_index)?;
        let psi_t = spectral::propagate(&psi0, &decomp, t_eq);
        basis_stack.extend(profile_samples(&psi_t, &basis, &spec_i, anchor, EVOLVED_SPAN));
    }

    // Eigenstate stack: fit, then rescale to the dof-1 ensemble.
    let eig_profile = stats::bin_profile(&eig_samples, EIGEN_BINS)?;
    let eig_fit = stats::fit_lorentzian(
        &eig_profile,
        FitInit {
            gamma: gamma_xi,
            center: 0.0,
        },
    )?;
    let mut dof1_g = Vec::with_capacity(eig_coeffs.len());
    let mut dof1_g2 = Vec::with_capacity(eig_coeffs.len());
    for &(x, c, rho_loc) in &eig_coeffs {
        let envelope = (eig_fit.evaluate(x) / (std::f64::consts::PI * rho_loc)).max(1e-300);
        let g = c / envelope.sqrt();
        dof1_g.push(g);
        dof1_g2.push((x, g * g));
    }

    let basis_profile = stats::bin_profile(&basis_stack, EVOLVED_BINS)?;
    let basis_fit = stats::fit_lorentzian(
        &basis_profile,
        FitInit {
            gamma: gamma_sp,
            center: 0.0,
        },
    );
    let (basis_fit_ratio, basis_fit_gamma) = match basis_fit {
        Ok(f) => (Some(f.gamma / gamma_sp), Some(f.gamma)),
        Err(_) => (None, None),
    };

    Ok(Fig2Bundle {
        n_basis: basis.len(),
        rho_f,
        gamma0,
        gamma_sp,
        gamma_xi,
        gamma_f,
        t_eq,
        evolved_fit_ratios,
        basis_fit_ratio,
        basis_fit_gamma,
        eigen_fit_ratio: Some(eig_fit.gamma / gamma_xi),
        eigen_fit_gamma: Some(eig_fit.gamma),
        dof1_g,
        dof1_g2,
        dof2_re,
        dof2_im,
        dof2_m2,
        s_initial,
        s_final,
        dsx,
        tv,
        mean_marginal: marginal_acc,
        boltzmann,
    })
}

/// Lazily built shared artifacts plus the suite options.
pub struct ArtifactStore {
    opts: VerifyOptions,
    fig2: OnceLock<std::result::Result<Fig2Bundle, String>>,
}

impl ArtifactStore {
    pub fn new(opts: VerifyOptions) -> Self {
        ArtifactStore {
            opts,
            fig2: OnceLock::new(),
        }
    }

    pub fn opts(&self) -> &VerifyOptions {
        &self.opts
    }

    /// The fig2 ensemble, built on first use.
    pub fn fig2(&self) -> std::result::Result<&Fig2Bundle, String> {
        self.fig2
            .get_or_init(|| build_fig2_bundle(&self.opts).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| e.clone())
    }
}

// ---------------------------------------------------------------------------
// criterion 1: exact identities and conservation
// ---------------------------------------------------------------------------

fn random_state(n: usize, seed_index: u64) -> PureState {
    let mut rng = stream(9001, StreamDomain::MonteCarlo, seed_index);
    let mut state = PureState {
        amplitudes: (0..n).map(|_| states::complex_deviate(&mut rng)).collect(),
        t: 0.0,
    };
    state.normalize().expect("nonzero random state");
    state
}

fn energy_expectation(h: &faer::Mat<f64>, psi: &PureState) -> f64 {
    let n = psi.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += h[(i, j)] * psi.amplitudes[j];
        }
        acc += (psi.amplitudes[i].conj() * row).re;
    }
    acc
}

/// Split identity on random states, zero entropy for basis states, and
/// norm/energy conservation under propagation.
pub fn criterion_identities(_store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c1", "exact identities");
    let JobConfig::Run(cfg) = presets::desk_small() else {
        return result.fail_with("desk-small preset is not a run config");
    };
    let spec = cfg.model;
    let basis = match model::build_basis(&spec) {
        Ok(b) => b,
        Err(e) => return result.fail_with(e.to_string()),
    };
    let n = basis.len();

    let mut worst_split = 0.0f64;
    for j in 0..1000u64 {
        let psi = random_state(n, j);
        let b = observables::split_entropy(&psi, &basis, &spec);
        let rel = (b.s_univ - (b.s_sys + b.s_env_conditional)).abs() / b.s_univ.max(1.0);
        worst_split = worst_split.max(rel);
    }
    result.push(check_max(
        "split identity, worst relative residual over 1000 random states",
        worst_split,
        1e-12,
    ));

    let anchor = states::nearest_level_index(&basis, 0, spec.central_energy, 0)
        .expect("window contains ground-ladder states");
    let basis_state = states::build_basis_state(&basis, 0, basis.states[anchor].bath_index)
        .expect("anchor state exists");
    result.push(check_abs(
        "basis-state total entropy",
        observables::entropy_univ(&basis_state),
        0.0,
        0.0,
    ));

    let (h, decomp) = match model::build_hamiltonian(&spec, &basis)
        .and_then(|h| spectral::diagonalize(&h).map(|d| (h, d)))
    {
        Ok(pair) => pair,
        Err(e) => return result.fail_with(e.to_string()),
    };
    let mut worst_norm = 0.0f64;
    let mut worst_energy = 0.0f64;
    for j in 0..20u64 {
        let psi = random_state(n, 5000 + j);
        let e_before = energy_expectation(&h, &psi);
        let psi_t = spectral::propagate(&psi, &decomp, 13.7);
        let e_after = energy_expectation(&h, &psi_t);
        worst_norm = worst_norm.max((psi_t.norm() - 1.0).abs());
        worst_energy = worst_energy.max((e_after - e_before).abs() / e_before.abs().max(1.0));
    }
    result.push(check_max(
        "norm drift under propagation (20 states)",
        worst_norm,
        1e-10,
    ));
    result.push(check_max(
        "relative energy drift under propagation (20 states)",
        worst_energy,
        1e-8,
    ));
    result.note(format!("basis dimension {n}, evolution time 13.7"));
    result
}

// ---------------------------------------------------------------------------
// criterion 2: environment entropy change equals Q/T for matched weights
// ---------------------------------------------------------------------------

fn toy_basis(counts: &[usize]) -> ZeroOrderBasis {
    let mut entries = Vec::new();
    let mut bath_index = 0usize;
    for (s, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            entries.push(BasisState {
                s: s as u32,
                bath_index,
                e_bath: 0.0,
                e_zero: s as f64,
            });
            bath_index += 1;
        }
    }
    ZeroOrderBasis {
        states: entries,
        bath_levels: Vec::new(),
    }
}

fn state_from_probs(probs: &[f64]) -> PureState {
    PureState {
        amplitudes: probs
            .iter()
            .map(|&p| Complex64::new(p.sqrt(), 0.0))
            .collect(),
        t: 0.0,
    }
}

/// On a hand-built block basis whose level multiplicities follow the
/// Boltzmann weights exactly (64/32/16 at `T = 1/ln 2`), the environment
/// entropy change matches `Q/T` to near machine precision for any pair of
/// per-level-uniform states.
pub fn criterion_exchange(_store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c2", "environment entropy vs heat");
    let t = 1.0 / std::f64::consts::LN_2;
    let counts = [64usize, 32, 16];
    let basis = toy_basis(&counts);
    let spec = ModelSpec {
        temperature: t,
        bath_prefactor: 1.0,
        coupling: 0.0,
        system_levels: 3,
        level_spacing: 1.0,
        central_energy: 1.0,
        window_half_width: 2.0,
        seed: 0,
    };
    let uniform_over = |weights: [f64; 3]| -> PureState {
        let mut probs = Vec::new();
        for (s, &n) in counts.iter().enumerate() {
            probs.extend(std::iter::repeat(weights[s] / n as f64).take(n));
        }
        state_from_probs(&probs)
    };
    let w_total: usize = counts.iter().sum();
    let eq = [
        counts[0] as f64 / w_total as f64,
        counts[1] as f64 / w_total as f64,
        counts[2] as f64 / w_total as f64,
    ];
    let fin = observables::split_entropy(&uniform_over(eq), &basis, &spec);
    let cases = [
        ("concentrated start", uniform_over([1.0, 0.0, 0.0])),
        (
            "two-level start",
            uniform_over([2.0 / 3.0, 1.0 / 3.0, 0.0]),
        ),
    ];
    for (name, psi0) in cases {
        let init = observables::split_entropy(&psi0, &basis, &spec);
        let ds_env = fin.s_env_conditional - init.s_env_conditional;
        let q_over_t = observables::heat(&init, &fin) / t;
        result.push(check_max(
            format!("|dS_env - Q/T|, {name}"),
            (ds_env - q_over_t).abs(),
            1e-10,
        ));
    }
    result.note("multiplicities 64/32/16 at T = 1/ln 2: Boltzmann weights are exact powers of two");
    result
}

// ---------------------------------------------------------------------------
// criterion 3: initial entropies on the diagonal
// ---------------------------------------------------------------------------

/// Sampled initial-state entropies across `gamma0 * rho0` from 0.003 to 300
/// against the closed form, with no Hamiltonian involved.
pub fn criterion_initial_entropy(_store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c3", "initial entropies");
    let JobConfig::Curve(cfg) = presets::fig4() else {
        return result.fail_with("fig4 preset is not a curve config");
    };
    let group = &cfg.initial_groups[0];
    let points = match initial_entropy_points(group, group.model.seed, 0) {
        Ok(p) => p,
        Err(e) => return result.fail_with(e.to_string()),
    };
    let mut seed_hits = 0usize;
    let mut seed_total = 0usize;
    for p in &points {
        let tol = if p.product < 1.0 { 0.2 } else { 0.15 };
        let target = p.prediction.s_initial;
        result.push(check_abs(
            format!("mean entropy at gamma0*rho0 = {:.3}", p.product),
            mean(&p.per_seed),
            target,
            tol,
        ));
        for &v in &p.per_seed {
            seed_total += 1;
            if (v - target).abs() <= tol {
                seed_hits += 1;
            }
        }
    }
    result.seed_pass_rate = Some(seed_hits as f64 / seed_total.max(1) as f64);
    result.note("coupling is zero for every point: no Hamiltonian is built or diagonalized");
    result.note(format!(
        "below-threshold points are compared against 0 (threshold gamma*rho = {:.4})",
        analytic::resolution_threshold()
    ));
    result
}

// ---------------------------------------------------------------------------
// criterion 4: spreading widths
// ---------------------------------------------------------------------------

/// Evolved and eigenstate envelope widths against the golden-rule scales,
/// including the factor-two ratio between them.
pub fn criterion_spreading_widths(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c4", "spreading widths");
    let bundle = match store.fig2() {
        Ok(b) => b,
        Err(e) => return result.fail_with(e),
    };
    result.push(check_range(
        "basis dimension",
        bundle.n_basis as f64,
        4000.0,
        8000.0,
    ));
    result.push(check_range(
        "gamma_sp * rho_f",
        bundle.gamma_sp * bundle.rho_f,
        5.0,
        50.0,
    ));
    if let Some(r) = bundle.basis_fit_ratio {
        result.push(check_range(
            "evolved basis-state width over 2 pi k^2 rho_f",
            r,
            0.8,
            1.2,
        ));
    } else {
        result.push(check_range("evolved basis-state width fit", f64::NAN, 0.8, 1.2));
    }
    result.push(check_range(
        "evolved Lorentzian width over gamma0 + 2 pi k^2 rho_f (seed mean)",
        mean(&bundle.evolved_fit_ratios),
        0.8,
        1.2,
    ));
    if let Some(r) = bundle.eigen_fit_ratio {
        result.push(check_range(
            "eigenstate width over pi k^2 rho_f",
            r,
            0.8,
            1.2,
        ));
    } else {
        result.push(check_range("eigenstate width fit", f64::NAN, 0.8, 1.2));
    }
    if let (Some(gb), Some(ge)) = (bundle.basis_fit_gamma, bundle.eigen_fit_gamma) {
        result.push(check_range(
            "evolved over eigenstate width ratio",
            gb / ge,
            1.7,
            2.3,
        ));
    } else {
        result.push(check_range("evolved over eigenstate width ratio", f64::NAN, 1.7, 2.3));
    }
    result.note(format!(
        "per-seed evolved width ratios: {:?}, sd {:.4}",
        bundle
            .evolved_fit_ratios
            .iter()
            .map(|r| (r * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        sample_sd(&bundle.evolved_fit_ratios)
    ));
    result
}

// ---------------------------------------------------------------------------
// criterion 5: excess entropy across both regimes
// ---------------------------------------------------------------------------

/// Measured excess entropy production against the closed form on a
/// `gamma0` grid spanning the resolved branch and the saturation plateau.
pub fn criterion_excess_curve(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c5", "excess entropy curve");
    let JobConfig::Curve(cfg) = presets::fig5() else {
        return result.fail_with("fig5 preset is not a curve config");
    };
    let opts = store.opts();
    let mut seed_hits = 0usize;
    let mut seed_total = 0usize;
    let mut saw_resolved = false;
    let mut saw_plateau = false;
    for (gi, group) in cfg.evolved_groups.iter().enumerate() {
        let outcome = match evolved_curve_points(
            group,
            group.model.seed,
            gi,
            opts.jobs,
            opts.cache_dir.as_deref(),
        ) {
            Ok(o) => o,
            Err(e) => return result.fail_with(e.to_string()),
        };
        for p in &outcome.points {
            let target = p.prediction.dsx;
            match p.prediction.regime {
                analytic::Regime::Resolved => saw_resolved = true,
                analytic::Regime::Unresolved => saw_plateau = true,
            }
            result.push(check_abs(
                format!("{} gamma0 = {:.2e}", group.label, p.gamma0),
                mean(&p.per_seed),
                target,
                0.2,
            ));
            for &v in &p.per_seed {
                seed_total += 1;
                if (v - target).abs() <= 0.2 {
                    seed_hits += 1;
                }
            }
        }
        result.note(format!(
            "{}: N = {}, t_eq = {}, gamma_sp = {:.4}",
            group.label, outcome.n_basis, outcome.t_eq, outcome.gamma_sp
        ));
    }
    result.push(check_abs(
        "both regimes represented",
        (saw_resolved && saw_plateau) as u8 as f64,
        1.0,
        0.0,
    ));
    result.seed_pass_rate = Some(seed_hits as f64 / seed_total.max(1) as f64);
    result
}

// ---------------------------------------------------------------------------
// criterion 6: the classical limit sweep
// ---------------------------------------------------------------------------

/// Halving `k` with `A k^2` fixed: the Lorentzian excess decays toward
/// zero (halving once small), the basis-state excess stays on its ceiling.
pub fn criterion_limit_sweep(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c6", "classical limit sweep");
    let JobConfig::Sweep(cfg) = presets::fig6() else {
        return result.fail_with("fig6 preset is not a sweep config");
    };
    let opts = store.opts();
    let steps = match sweep_points(&cfg, opts.jobs, opts.cache_dir.as_deref()) {
        Ok(s) => s,
        Err(e) => return result.fail_with(e.to_string()),
    };
    let lor: Vec<f64> = steps
        .iter()
        .filter_map(|s| s.lorentzian.as_ref().map(|f| f.mean))
        .collect();
    let bas: Vec<f64> = steps
        .iter()
        .filter_map(|s| s.basis_state.as_ref().map(|f| f.mean))
        .collect();
    if lor.len() != steps.len() || bas.len() != steps.len() {
        return result.fail_with("a sweep step is missing a family");
    }

    for j in 0..lor.len() - 1 {
        result.push(check_max(
            format!("monotonic decay, step {} minus step {}", j + 1, j),
            lor[j + 1] - lor[j],
            0.0,
        ));
    }
    // The per-step halving is an asymptotic statement: gate the ratio only
    // once the preceding step's excess has dropped below 0.3.
    let mut gated = 0;
    for j in 0..lor.len() - 1 {
        let ratio = lor[j + 1] / lor[j];
        if lor[j] < 0.3 {
            gated += 1;
            result.push(check_range(
                format!("halving ratio step {} / step {}", j + 1, j),
                ratio,
                0.35,
                0.65,
            ));
        } else {
            result.note(format!(
                "ratio step {} / step {} = {:.3} (ungated: preceding excess {:.3} >= 0.3)",
                j + 1,
                j,
                ratio,
                lor[j]
            ));
        }
    }
    if gated == 0 {
        result.push(check_range("at least one gated halving ratio", 0.0, 1.0, 1.0));
    }

    let grand = mean(&bas);
    let worst = bas
        .iter()
        .map(|&b| (b - grand).abs())
        .fold(0.0f64, f64::max);
    result.push(check_max(
        "basis-state excess constancy (worst deviation from the grand mean)",
        worst,
        0.15,
    ));
    for s in &steps {
        let (Some(l), Some(b)) = (&s.lorentzian, &s.basis_state) else {
            continue;
        };
        result.note(format!(
            "step {}: lorentzian {:.4} +- {:.4} (pred {:.4}), basis {:.4} +- {:.4}",
            s.step,
            l.mean,
            l.sem,
            s.lorentzian_prediction.dsx,
            b.mean,
            b.sem
        ));
    }
    result
}

// ---------------------------------------------------------------------------
// criterion 7: thermalization of the system marginal
// ---------------------------------------------------------------------------

/// The seed-averaged evolved system distribution against the Boltzmann
/// target in total variation.
pub fn criterion_thermalization(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c7", "thermalization");
    let bundle = match store.fig2() {
        Ok(b) => b,
        Err(e) => return result.fail_with(e),
    };
    let tv_mean = observables::total_variation(&bundle.mean_marginal, &bundle.boltzmann);
    result.push(check_max(
        "total variation of the seed-averaged marginal",
        tv_mean,
        0.02,
    ));
    let hits = bundle.tv.iter().filter(|&&t| t <= 0.02).count();
    result.seed_pass_rate = Some(hits as f64 / bundle.tv.len().max(1) as f64);
    result.note(format!(
        "per-seed total variation: mean {:.4}, max {:.4} (single-seed fluctuations average out)",
        mean(&bundle.tv),
        bundle.tv.iter().cloned().fold(0.0, f64::max)
    ));
    result.note(format!(
        "Boltzmann target ({:.6}, {:.6}, {:.6})",
        bundle.boltzmann[0], bundle.boltzmann[1], bundle.boltzmann[2]
    ));
    result
}

// ---------------------------------------------------------------------------
// criterion 8: coefficient statistics
// ---------------------------------------------------------------------------

fn quartile_checks(
    result: &mut CriterionResult,
    label: &str,
    pairs: &[(f64, f64)],
    n_bins: usize,
    dof: CoefficientDof,
) {
    let profile = match stats::bin_profile(pairs, n_bins) {
        Ok(p) => p,
        Err(e) => {
            result.push(check_max(format!("{label} quartile binning ({e})"), f64::NAN, 0.15));
            return;
        }
    };
    let (r1, r3) = stats::expected_quartile_ratios(dof);
    let mut worst_q1 = 0.0f64;
    let mut worst_q3 = 0.0f64;
    let mut used = 0;
    for i in 0..profile.n_bins() {
        if profile.counts[i] < QUARTILE_COUNT_FLOOR {
            continue;
        }
        used += 1;
        let expect_q1 = profile.means[i] * r1;
        let expect_q3 = profile.means[i] * r3;
        worst_q1 = worst_q1.max((profile.q1[i] - expect_q1).abs() / expect_q1);
        worst_q3 = worst_q3.max((profile.q3[i] - expect_q3).abs() / expect_q3);
    }
    if used == 0 {
        result.push(check_max(format!("{label}: no bin reached the count floor"), f64::NAN, 0.15));
        return;
    }
    result.push(check_max(
        format!("{label} worst per-bin Q1 deviation ({used} bins)"),
        worst_q1,
        0.15,
    ));
    result.push(check_max(
        format!("{label} worst per-bin Q3 deviation ({used} bins)"),
        worst_q3,
        0.15,
    ));
}

fn fluctuation_checks(result: &mut CriterionResult, label: &str, values: &[f64]) {
    match stats::fluctuation_test(values) {
        Ok(r) => {
            result.push(check_abs(format!("{label} mean"), r.mean, 0.0, 0.1));
            result.push(check_abs(format!("{label} variance"), r.variance, 1.0, 0.1));
            result.push(check_abs(format!("{label} skewness"), r.skewness, 0.0, 0.2));
            result.push(check_abs(
                format!("{label} excess kurtosis"),
                r.excess_kurtosis,
                0.0,
                0.5,
            ));
        }
        Err(e) => {
            result.push(check_abs(format!("{label} ({e})"), f64::NAN, 0.0, 0.1));
        }
    }
}

/// Gaussianity of envelope-rescaled coefficients: eigenvectors (real, one
/// degree of freedom), evolved states (complex, two), per-bin quartile
/// agreement, and the Monte Carlo value of the entropy offset constant.
pub fn criterion_coefficient_statistics(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c8", "coefficient statistics");
    let bundle = match store.fig2() {
        Ok(b) => b,
        Err(e) => return result.fail_with(e),
    };

    fluctuation_checks(&mut result, "eigenvector g", &bundle.dof1_g);
    quartile_checks(
        &mut result,
        "eigenvector g^2",
        &bundle.dof1_g2,
        EIGEN_BINS,
        CoefficientDof::One,
    );
    fluctuation_checks(&mut result, "evolved Re g", &bundle.dof2_re);
    fluctuation_checks(&mut result, "evolved Im g", &bundle.dof2_im);
    quartile_checks(
        &mut result,
        "evolved |g|^2",
        &bundle.dof2_m2,
        DOF2_QUARTILE_BINS,
        CoefficientDof::Two,
    );

    // Monte Carlo of E[x ln x] for x ~ Exp(1), which equals 1 - gamma_Euler.
    let mut rng = stream(12, StreamDomain::MonteCarlo, 0);
    let n = 20_000_000usize;
    let mut acc = 0.0f64;
    for _ in 0..n {
        let u: f64 = rng.random();
        let x = -(1.0 - u).ln();
        if x > 0.0 {
            acc += x * x.ln();
        }
    }
    let estimate = acc / n as f64;
    result.push(check_abs(
        "Monte Carlo entropy offset constant",
        estimate,
        analytic::G0,
        1e-3,
    ));
    result.note(format!(
        "ensembles: {} eigenvector coefficients, {} evolved coefficients",
        bundle.dof1_g.len(),
        bundle.dof2_re.len()
    ));
    result
}

// ---------------------------------------------------------------------------
// criterion 9: determinism
// ---------------------------------------------------------------------------

/// A preset re-run from its own manifest, under a different worker count,
/// reproduces every artifact digest except the manifest's own timing.
pub fn criterion_determinism(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c9", "determinism");
    let opts = store.opts();
    let dir_a = opts.work_dir.join("determinism-a");
    let dir_b = opts.work_dir.join("determinism-b");
    let cache = opts.work_dir.join("determinism-cache");

    let cfg = presets::desk_small();
    let manifest_a = match experiment::execute(&cfg, &dir_a, 1, Some(&cache)) {
        Ok(m) => m,
        Err(e) => return result.fail_with(format!("first run failed: {e}")),
    };
    let reloaded = match crate::config::load_config(&dir_a.join("manifest.json")) {
        Ok(c) => c,
        Err(e) => return result.fail_with(format!("manifest reload failed: {e}")),
    };
    result.push(check_abs(
        "manifest config echo round-trips",
        (reloaded == cfg) as u8 as f64,
        1.0,
        0.0,
    ));
    let manifest_b = match experiment::execute(&reloaded, &dir_b, 2, Some(&cache)) {
        Ok(m) => m,
        Err(e) => return result.fail_with(format!("re-run failed: {e}")),
    };
    let mut differing = 0usize;
    for (name, digest) in &manifest_a.digests {
        if manifest_b.digests.get(name) != Some(digest) {
            differing += 1;
            result.note(format!("artifact {name} differs between runs"));
        }
    }
    differing += manifest_b
        .digests
        .keys()
        .filter(|k| !manifest_a.digests.contains_key(*k))
        .count();
    result.push(check_abs(
        "differing artifacts between a run and its manifest re-run",
        differing as f64,
        0.0,
        0.0,
    ));
    result.note("first run used one worker and a cold cache; the re-run used two workers and a warm cache".to_string());
    result
}

// ---------------------------------------------------------------------------
// criterion 10: cache integrity
// ---------------------------------------------------------------------------

/// The spectral cache round-trips exactly and rejects corrupted files.
pub fn criterion_cache_integrity(store: &ArtifactStore) -> CriterionResult {
    let mut result = CriterionResult::new("c10", "cache integrity");
    let dir = store.opts().work_dir.join("cache-probe");
    let spec = ModelSpec {
        temperature: 6.22,
        bath_prefactor: 1.5,
        coupling: 0.01,
        system_levels: 3,
        level_spacing: 1.0,
        central_energy: 12.0,
        window_half_width: 1.2,
        seed: 9,
    };
    let outcome = (|| -> Result<(f64, bool, bool)> {
        let basis = model::build_basis(&spec)?;
        let h = model::build_hamiltonian(&spec, &basis)?;
        let decomp = spectral::diagonalize(&h)?;
        let path = spectral::store_cached(&dir, &spec, &decomp)?;
        let restored = spectral::load_cached(&dir, &spec)?
            .ok_or_else(|| Error::numeric("stored decomposition not found"))?;
        let worst = decomp
            .eigenvalues
            .iter()
            .zip(&restored.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        // Flip one payload byte; the digest check must catch it.
        let mut bytes = std::fs::read(&path)?;
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes)?;
        let corrupt_detected = matches!(
            spectral::load_cached(&dir, &spec),
            Err(Error::Cache(_))
        );

        let mut missing_spec = spec.clone();
        missing_spec.seed = 777;
        let absent_is_none = matches!(spectral::load_cached(&dir, &missing_spec), Ok(None));
        Ok((worst, corrupt_detected, absent_is_none))
    })();
    match outcome {
        Ok((worst, corrupt_detected, absent_is_none)) => {
            result.push(check_max("round-trip eigenvalue drift", worst, 1e-12));
            result.push(check_abs(
                "corrupted file rejected",
                corrupt_detected as u8 as f64,
                1.0,
                0.0,
            ));
            result.push(check_abs(
                "absent entry reported as a miss, not an error",
                absent_is_none as u8 as f64,
                1.0,
                0.0,
            ));
        }
        Err(e) => return result.fail_with(e.to_string()),
    }
    result
}

// ---------------------------------------------------------------------------
// the whole suite
// ---------------------------------------------------------------------------

/// Every criterion in order.
pub fn run_all(store: &ArtifactStore) -> VerificationReport {
    let criteria = vec![
        criterion_identities(store),
        criterion_exchange(store),
        criterion_initial_entropy(store),
        criterion_spreading_widths(store),
        criterion_excess_curve(store),
        criterion_limit_sweep(store),
        criterion_thermalization(store),
        criterion_coefficient_statistics(store),
        criterion_determinism(store),
        criterion_cache_integrity(store),
    ];
    VerificationReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        passed: criteria.iter().all(|c| c.pass),
        criteria,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_store() -> ArtifactStore {
        let work = std::env::temp_dir().join(format!("qtherm-verify-test-{}", std::process::id()));
        ArtifactStore::new(VerifyOptions {
            cache_dir: None,
            work_dir: work,
            jobs: 1,
        })
    }

    #[test]
    fn check_constructors_behave() {
        assert!(check_abs("a", 0.05, 0.0, 0.1).pass);
        assert!(!check_abs("a", 0.15, 0.0, 0.1).pass);
        assert!(check_max("b", -5.0, 0.0).pass);
        assert!(!check_max("b", f64::NAN, 0.0).pass);
        assert!(check_range("c", 2.0, 1.7, 2.3).pass);
        assert!(!check_range("c", 2.4, 1.7, 2.3).pass);
    }

    #[test]
    fn exchange_criterion_is_exact() {
        let store = test_store();
        let r = criterion_exchange(&store);
        assert!(r.pass, "{}", r.render());
        assert_eq!(r.checks.len(), 2);
    }

    #[test]
    fn cache_integrity_criterion_passes() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(VerifyOptions {
            cache_dir: None,
            work_dir: dir.path().to_path_buf(),
            jobs: 1,
        });
        let r = criterion_cache_integrity(&store);
        assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn render_shows_check_counts() {
        let mut r = CriterionResult::new("c0", "demo");
        r.push(check_abs("x", 0.0, 0.0, 1.0));
        r.push(check_abs("y", 5.0, 0.0, 1.0));
        assert!(!r.pass);
        assert_eq!(r.render(), "[FAIL] c0 demo (1/2 checks)");
    }

    #[test]
    fn report_serializes_with_per_check_bounds() {
        let store = test_store();
        let report = VerificationReport {
            version: "test".into(),
            passed: true,
            criteria: vec![criterion_exchange(&store)],
        };
        let value = serde_json::to_value(&report).unwrap();
        assert_eq!(value["passed"], true);
        let check = &value["criteria"][0]["checks"][0];
        assert!(check["measured"].is_f64());
        assert!(check["hi"].is_f64());
        assert!(check["lo"].is_null());
    }
}
