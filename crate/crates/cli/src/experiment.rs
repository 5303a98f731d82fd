//! Experiment drivers: everything between a validated config and a finished
//! output directory.
//!
//! The three drivers ([`run_single`], [`run_entropy_curve`],
//! [`run_limit_sweep`]) share the same conventions:
//!
//! * every Hamiltonian seed is derived from the master seed with a
//!   domain-separated stream, so seeds never collide across experiments and
//!   a run is reproducible from its manifest alone;
//! * heavy per-seed work (build, diagonalize, evolve) can fan out over a
//!   bounded worker pool, but all aggregation and every file write happen on
//!   the calling thread in seed order, so `--jobs` never changes the output;
//! * equilibrium observables are sampled at `t_eq = 10 / gamma_sp`, the
//!   equilibration heuristic of the slowest initial family.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qtherm::analytic::{self, MasterPrediction};
use qtherm::error::{Error, Result};
use qtherm::model::{self, ModelSpec, ZeroOrderBasis};
use qtherm::observables::{self, EntropyBreakdown};
use qtherm::rng::derive_seed;
use qtherm::spectral;
use qtherm::states::{self, PureState};
use qtherm::stats::{self, BinnedProfile, CoefficientDof, FitInit, LorentzianFit};
use serde::Serialize;

use crate::config::{
    CurveConfig, CurveMeasure, EvolvedCurveGroup, InitialCurveGroup, JobConfig, RunConfig,
    StateFamily, SweepConfig, TimeGrid,
};
use crate::manifest::{derived_unit, RunManifest};
use crate::output::OutputWriter;

// Stream identifiers: one per experiment kind, so identical seed indices in
// different experiments still get unrelated randomness.
pub(crate) const EXP_RUN: u64 = 1;
const EXP_CURVE_INITIAL: u64 = 2;
const EXP_CURVE_EVOLVED: u64 = 3;
const EXP_SWEEP: u64 = 4;
/// Stream for Monte Carlo estimates (used by the verification suite).
pub const EXP_MONTE_CARLO: u64 = 5;
/// Sub-stream of a per-seed stream for independent state draws.
pub(crate) const DRAW_DOMAIN: u64 = 100;

// ---------------------------------------------------------------------------
// small numeric helpers
// ---------------------------------------------------------------------------

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Maps `f` over `items` with up to `jobs` workers; results come back in
/// input order and the first error wins. With `jobs <= 1` this is a plain
/// sequential loop.
pub fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let n = items.len();
    let workers = jobs.max(1).min(n.max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if failure.lock().unwrap().is_some() {
                    break;
                }
                match f(i, &items[i]) {
                    Ok(r) => results.lock().unwrap()[i] = Some(r),
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker finished without a result"))
        .collect())
}

/// Profile samples of a state around `anchor`: `(E_zero - anchor,
/// |a|^2 pi rho_f(E_zero))`, the per-state probability normalized so a
/// Lorentzian envelope of half-width `gamma` shows up as
/// `gamma / (x^2 + gamma^2)` with unit amplitude.
pub fn profile_samples(
    state: &PureState,
    basis: &ZeroOrderBasis,
    spec: &ModelSpec,
    anchor: f64,
    span_half: f64,
) -> Vec<(f64, f64)> {
    basis
        .states
        .iter()
        .zip(&state.amplitudes)
        .filter_map(|(entry, a)| {
            let x = entry.e_zero - anchor;
            if x.abs() <= span_half {
                Some((x, a.norm_sqr() * PI * spec.total_density(entry.e_zero)))
            } else {
                None
            }
        })
        .collect()
}

/// The unit-amplitude Lorentzian mean curve over a profile's bin centers;
/// all zeros when `gamma` is not positive (point-like initial states).
pub fn expected_mean_curve(profile: &BinnedProfile, gamma: f64) -> Vec<f64> {
    profile
        .centers
        .iter()
        .map(|&x| {
            if gamma > 0.0 {
                gamma / (x * x + gamma * gamma)
            } else {
                0.0
            }
        })
        .collect()
}

fn profile_geometry(spec: &ModelSpec, gamma_ref: f64, bins: Option<usize>) -> (f64, usize) {
    let span_half = if gamma_ref > 0.0 {
        (7.0 * gamma_ref).min(0.98 * spec.window_half_width)
    } else {
        0.5 * spec.window_half_width
    };
    let gamma_for_bins = if gamma_ref > 0.0 {
        gamma_ref
    } else {
        2.0 * span_half
    };
    let n_bins = bins.unwrap_or_else(|| stats::default_bin_count(2.0 * span_half, gamma_for_bins));
    (span_half, n_bins)
}

// ---------------------------------------------------------------------------
// run: one model, one family, a time series, profiles, fits
// ---------------------------------------------------------------------------

/// Outcome of fitting one profile against its predicted width.
#[derive(Debug, Clone, Serialize)]
pub struct FitOutcome {
    pub predicted_gamma: f64,
    /// Fitted over predicted width, when both exist.
    pub ratio: Option<f64>,
    pub fit: Option<LorentzianFit>,
    /// Why the fit was skipped or rejected, if it was.
    pub note: Option<String>,
}

/// Fits a stacked profile against a predicted half-width, tolerating
/// legitimately unfittable inputs (point-like or under-resolved profiles).
pub fn fit_outcome(profile: &BinnedProfile, predicted_gamma: f64) -> FitOutcome {
    if !(predicted_gamma > 0.0) {
        return FitOutcome {
            predicted_gamma,
            ratio: None,
            fit: None,
            note: Some("no finite predicted width; nothing to fit".into()),
        };
    }
    match stats::fit_lorentzian(
        profile,
        FitInit {
            gamma: predicted_gamma,
            center: 0.0,
        },
    ) {
        Ok(fit) => {
            let ratio = fit.gamma / predicted_gamma;
            FitOutcome {
                predicted_gamma,
                ratio: Some(ratio),
                fit: Some(fit),
                note: None,
            }
        }
        Err(e) => FitOutcome {
            predicted_gamma,
            ratio: None,
            fit: None,
            note: Some(e.to_string()),
        },
    }
}

/// Per-seed scalars recorded in `fits.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub index: u32,
    pub seed: u64,
    pub s_initial: f64,
    pub s_final: f64,
    pub dsx: f64,
    pub q_cum: f64,
    pub tv_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateStats {
    pub s_initial_mean: f64,
    pub s_initial_sd: f64,
    pub s_final_mean: f64,
    pub s_final_sd: f64,
    pub dsx_mean: f64,
    pub dsx_sd: f64,
    pub tv_mean: f64,
    /// Total variation of the seed-averaged system marginal against the
    /// Boltzmann target.
    pub tv_of_mean_marginal: f64,
}

/// Contents of a run's `fits.json`.
#[derive(Debug, Serialize)]
pub struct FitsReport {
    pub family: String,
    pub gamma0: f64,
    pub t_final: f64,
    pub boltzmann: Vec<f64>,
    pub mean_marginal: Vec<f64>,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: AggregateStats,
    pub initial_profile: FitOutcome,
    pub final_profile: FitOutcome,
}

struct SeedRun {
    run_seed: u64,
    rows: Vec<EntropyBreakdown>,
    initial: EntropyBreakdown,
    fin: EntropyBreakdown,
    tv_final: f64,
    initial_samples: Vec<(f64, f64)>,
    final_samples: Vec<(f64, f64)>,
}

/// Executes a `run` config into `out`: `timeseries.csv` (first seed),
/// stacked `profile_initial.csv` / `profile_final.csv`, `fits.json`,
/// `predictions.csv`, and `manifest.json` last.
pub fn run_single(
    cfg: &RunConfig,
    out: &Path,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<RunManifest> {
    let started = Instant::now();
    JobConfig::Run(cfg.clone()).validate()?;
    let spec = &cfg.model;
    let e0 = spec.central_energy;
    let basis = model::build_basis(spec)?;
    let rho0 = spec.bath_density(e0);
    let rho_f = spec.total_density(e0);
    let gamma0 = cfg.family.gamma0();
    let prediction = analytic::predict(gamma0, rho0, rho_f, spec.coupling);
    let t_eq = spectral::equilibration_time(spec).ok();

    let t_max = match cfg.time_grid {
        TimeGrid::Explicit { t_max, .. } => t_max,
        TimeGrid::Auto { .. } => {
            2.0 * t_eq.ok_or_else(|| {
                Error::config("auto time grid needs a positive coupling; give an explicit t_max")
            })?
        }
    };
    let t_final = t_eq.unwrap_or(t_max);
    let grid = cfg.time_grid.points(t_max, cfg.time_grid.n_samples());

    // Profile geometry around the (deterministic) anchor level at the
    // window center; identical for every seed so their samples stack.
    let anchor_index = states::nearest_level_index(&basis, 0, e0, 0)?;
    let anchor = basis.states[anchor_index].e_zero;
    let (span_half, n_bins) = profile_geometry(spec, prediction.gamma_f.max(gamma0), cfg.bins);

    let master = cfg.model.seed;
    let seeds: Vec<u64> = (0..cfg.n_seeds)
        .map(|i| derive_seed(master, EXP_RUN, i as u64))
        .collect();

    let outcomes: Vec<SeedRun> = parallel_map(jobs, &seeds, |_, &run_seed| {
        let mut spec_i = spec.clone();
        spec_i.seed = run_seed;
        let h = model::build_hamiltonian(&spec_i, &basis)?;
        let decomp = spectral::diagonalize_cached(&h, &spec_i, cache_dir)?;
        drop(h);

        let state_seed = derive_seed(run_seed, DRAW_DOMAIN, 0);
        let psi0 = match cfg.family {
            StateFamily::Lorentzian { gamma0 } => {
                let ls = states::build_lorentzian_state(&spec_i, &basis, 0, e0, gamma0, state_seed)?;
                debug_assert_eq!(ls.anchor, anchor_index);
                ls.state
            }
            StateFamily::BasisState => {
                states::build_basis_state(&basis, 0, basis.states[anchor_index].bath_index)?
            }
        };

        let rows: Vec<EntropyBreakdown> = grid
            .iter()
            .map(|&t| {
                let psi_t = spectral::propagate(&psi0, &decomp, t);
                observables::split_entropy(&psi_t, &basis, &spec_i)
            })
            .collect();
        let initial = observables::split_entropy(&psi0, &basis, &spec_i);
        let psi_f = spectral::propagate(&psi0, &decomp, t_final);
        let fin = observables::split_entropy(&psi_f, &basis, &spec_i);
        let tv_final =
            observables::total_variation(&fin.p_s, &observables::boltzmann_distribution(&spec_i));
        let initial_samples = profile_samples(&psi0, &basis, &spec_i, anchor, span_half);
        let final_samples = profile_samples(&psi_f, &basis, &spec_i, anchor, span_half);
        Ok(SeedRun {
            run_seed,
            rows,
            initial,
            fin,
            tv_final,
            initial_samples,
            final_samples,
        })
    })?;

    // ---- aggregate (seed order, single thread) ----
    let temperature = spec.temperature;
    let mut initial_stack = Vec::new();
    let mut final_stack = Vec::new();
    let mut per_seed = Vec::new();
    let mut marginal_acc = vec![0.0; spec.system_levels as usize];
    for (i, o) in outcomes.iter().enumerate() {
        initial_stack.extend_from_slice(&o.initial_samples);
        final_stack.extend_from_slice(&o.final_samples);
        for (acc, &p) in marginal_acc.iter_mut().zip(&o.fin.p_s) {
            *acc += p / outcomes.len() as f64;
        }
        per_seed.push(SeedSummary {
            index: i as u32,
            seed: o.run_seed,
            s_initial: o.initial.s_univ,
            s_final: o.fin.s_univ,
            dsx: observables::excess_entropy(&o.initial, &o.fin, temperature),
            q_cum: observables::heat(&o.initial, &o.fin),
            tv_final: o.tv_final,
        });
    }
    let boltzmann = observables::boltzmann_distribution(spec);
    let s0: Vec<f64> = per_seed.iter().map(|s| s.s_initial).collect();
    let sf: Vec<f64> = per_seed.iter().map(|s| s.s_final).collect();
    let ds: Vec<f64> = per_seed.iter().map(|s| s.dsx).collect();
    let tv: Vec<f64> = per_seed.iter().map(|s| s.tv_final).collect();
    let aggregate = AggregateStats {
        s_initial_mean: mean(&s0),
        s_initial_sd: sample_sd(&s0),
        s_final_mean: mean(&sf),
        s_final_sd: sample_sd(&sf),
        dsx_mean: mean(&ds),
        dsx_sd: sample_sd(&ds),
        tv_mean: mean(&tv),
        tv_of_mean_marginal: observables::total_variation(&marginal_acc, &boltzmann),
    };

    let initial_profile = stats::bin_profile(&initial_stack, n_bins)?;
    let final_profile = stats::bin_profile(&final_stack, n_bins)?;
    let gamma_initial_pred = match cfg.family {
        StateFamily::Lorentzian { gamma0 } => gamma0,
        StateFamily::BasisState => 0.0,
    };
    let gamma_final_pred = if spec.coupling > 0.0 {
        prediction.gamma_f
    } else {
        gamma_initial_pred
    };
    let initial_fit = fit_outcome(&initial_profile, gamma_initial_pred);
    let final_fit = fit_outcome(&final_profile, gamma_final_pred);

    let report = FitsReport {
        family: cfg.family.label().to_string(),
        gamma0,
        t_final,
        boltzmann: boltzmann.clone(),
        mean_marginal: marginal_acc,
        per_seed: per_seed.clone(),
        aggregate,
        initial_profile: initial_fit,
        final_profile: final_fit,
    };

    // ---- write artifacts; manifest last ----
    let mut writer = OutputWriter::new(out)?;
    writer.write_with("timeseries.csv", |buf| {
        observables::write_timeseries(buf, &outcomes[0].rows, temperature)
    })?;
    writer.write_with("profile_initial.csv", |buf| {
        stats::write_profile(
            buf,
            &initial_profile,
            &expected_mean_curve(&initial_profile, gamma_initial_pred),
            CoefficientDof::Two,
        )
    })?;
    writer.write_with("profile_final.csv", |buf| {
        stats::write_profile(
            buf,
            &final_profile,
            &expected_mean_curve(&final_profile, gamma_final_pred),
            CoefficientDof::Two,
        )
    })?;
    writer.write_with("fits.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&report)?);
        buf.push(b'\n');
        Ok(())
    })?;
    writer.write_with("predictions.csv", |buf| {
        analytic::write_predictions(buf, std::slice::from_ref(&prediction))
    })?;

    let mut manifest = RunManifest::new(JobConfig::Run(cfg.clone()));
    for (i, &s) in seeds.iter().enumerate() {
        manifest.record_seed("run", i as u32, s);
    }
    manifest
        .derived
        .push(derived_unit("run", spec, basis.len(), Some(gamma0)));
    manifest.digests = writer.digests().clone();
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    writer.write_with("manifest.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&manifest)?);
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// curve: entropy against gamma0, initial and/or evolved
// ---------------------------------------------------------------------------

/// One point of an initial-entropy curve.
#[derive(Debug, Clone, Serialize)]
pub struct InitialPoint {
    pub gamma0: f64,
    /// Window half-width actually used for this point.
    pub window_half_width: f64,
    pub n_basis: usize,
    pub rho0: f64,
    /// `gamma0 * rho0`, the resolution parameter.
    pub product: f64,
    pub under_resolved: bool,
    pub per_seed: Vec<f64>,
    pub prediction: MasterPrediction,
}

/// Initial-state entropies over a `gamma0` grid; no Hamiltonian involved.
pub fn initial_entropy_points(
    group: &InitialCurveGroup,
    master_seed: u64,
    group_index: usize,
) -> Result<Vec<InitialPoint>> {
    let e0 = group.model.central_energy;
    let mut points = Vec::new();
    for (pi, &gamma0) in group.gamma0_list.iter().enumerate() {
        let mut spec_p = group.model.clone();
        spec_p.window_half_width = (group.truncation_half_widths * gamma0)
            .clamp(group.min_window, group.model.window_half_width);
        let basis = model::build_basis(&spec_p)?;
        let rho0 = spec_p.bath_density(e0);
        let rho_f = spec_p.total_density(e0);
        let mut per_seed = Vec::new();
        let mut under_resolved = false;
        for i in 0..group.n_seeds {
            let seed = derive_seed(
                master_seed,
                EXP_CURVE_INITIAL,
                (group_index * 10_000 + pi * 100) as u64 + i as u64,
            );
            let ls = states::build_lorentzian_state(&spec_p, &basis, 0, e0, gamma0, seed)?;
            under_resolved = ls.under_resolved;
            per_seed.push(observables::entropy_univ(&ls.state));
        }
        points.push(InitialPoint {
            gamma0,
            window_half_width: spec_p.window_half_width,
            n_basis: basis.len(),
            rho0,
            product: gamma0 * rho0,
            under_resolved,
            per_seed,
            prediction: analytic::predict(gamma0, rho0, rho_f, 0.0),
        });
    }
    Ok(points)
}

/// One point of an evolved curve (a `gamma0` or the basis-state partner).
#[derive(Debug, Clone, Serialize)]
pub struct EvolvedPoint {
    pub family: String,
    pub gamma0: f64,
    pub per_seed: Vec<f64>,
    pub prediction: MasterPrediction,
}

/// An evolved curve group's results plus its derived scales.
#[derive(Debug, Clone, Serialize)]
pub struct EvolvedGroupOutcome {
    pub label: String,
    pub measure: CurveMeasure,
    pub n_basis: usize,
    pub rho0: f64,
    pub rho_f: f64,
    pub gamma_sp: f64,
    pub t_eq: f64,
    pub seeds: Vec<u64>,
    pub points: Vec<EvolvedPoint>,
}

/// Evolves every `gamma0` of the group (plus the optional basis state) to
/// `t_eq` under per-seed Hamiltonians shared across the whole group.
pub fn evolved_curve_points(
    group: &EvolvedCurveGroup,
    master_seed: u64,
    group_index: usize,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<EvolvedGroupOutcome> {
    let spec = &group.model;
    let e0 = spec.central_energy;
    let basis = model::build_basis(spec)?;
    let rho0 = spec.bath_density(e0);
    let rho_f = spec.total_density(e0);
    let gamma_sp = analytic::evolved_width(0.0, spec.coupling, rho_f);
    let t_eq = spectral::equilibration_time(spec)?;
    let anchor_index = states::nearest_level_index(&basis, 0, e0, 0)?;

    let seeds: Vec<u64> = (0..group.n_seeds)
        .map(|i| derive_seed(master_seed, EXP_CURVE_EVOLVED, (group_index * 1000) as u64 + i as u64))
        .collect();

    // Per seed: one value per gamma0, then optionally the basis-state value.
    let per_seed_values: Vec<Vec<f64>> = parallel_map(jobs, &seeds, |_, &run_seed| {
        let mut spec_i = spec.clone();
        spec_i.seed = run_seed;
        let h = model::build_hamiltonian(&spec_i, &basis)?;
        let decomp = spectral::diagonalize_cached(&h, &spec_i, cache_dir)?;
        drop(h);
        let mut values = Vec::new();
        let measure_state = |psi0: &PureState| -> f64 {
            let initial = observables::split_entropy(psi0, &basis, &spec_i);
            let psi_f = spectral::propagate(psi0, &decomp, t_eq);
            let fin = observables::split_entropy(&psi_f, &basis, &spec_i);
            match group.measure {
                CurveMeasure::FinalEntropy => fin.s_univ,
                CurveMeasure::Excess => {
                    observables::excess_entropy(&initial, &fin, spec_i.temperature)
                }
            }
        };
        for (pi, &gamma0) in group.gamma0_list.iter().enumerate() {
            let state_seed = derive_seed(run_seed, DRAW_DOMAIN, pi as u64);
            let ls = states::build_lorentzian_state(&spec_i, &basis, 0, e0, gamma0, state_seed)?;
            values.push(measure_state(&ls.state));
        }
        if group.include_basis_state {
            let psi0 =
                states::build_basis_state(&basis, 0, basis.states[anchor_index].bath_index)?;
            values.push(measure_state(&psi0));
        }
        Ok(values)
    })?;

    let mut points = Vec::new();
    for (pi, &gamma0) in group.gamma0_list.iter().enumerate() {
        points.push(EvolvedPoint {
            family: "lorentzian".into(),
            gamma0,
            per_seed: per_seed_values.iter().map(|v| v[pi]).collect(),
            prediction: analytic::predict(gamma0, rho0, rho_f, spec.coupling),
        });
    }
    if group.include_basis_state {
        let last = group.gamma0_list.len();
        points.push(EvolvedPoint {
            family: "basis_state".into(),
            gamma0: 0.0,
            per_seed: per_seed_values.iter().map(|v| v[last]).collect(),
            prediction: analytic::predict(0.0, rho0, rho_f, spec.coupling),
        });
    }
    Ok(EvolvedGroupOutcome {
        label: group.label.clone(),
        measure: group.measure,
        n_basis: basis.len(),
        rho0,
        rho_f,
        gamma_sp,
        t_eq,
        seeds,
        points,
    })
}

fn measured_value(measure: CurveMeasure, p: &MasterPrediction) -> f64 {
    match measure {
        CurveMeasure::FinalEntropy => p.s_final,
        CurveMeasure::Excess => p.dsx,
    }
}

fn curve_kind(measure: CurveMeasure) -> &'static str {
    match measure {
        CurveMeasure::FinalEntropy => "S_final",
        CurveMeasure::Excess => "dSx",
    }
}

/// Executes a `curve` config into `out`: `curve.csv`, `points.json`,
/// `predictions.csv`, `manifest.json`.
pub fn run_entropy_curve(
    cfg: &CurveConfig,
    out: &Path,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<RunManifest> {
    let started = Instant::now();
    JobConfig::Curve(cfg.clone()).validate()?;
    let master = JobConfig::Curve(cfg.clone()).master_seed();

    let mut manifest = RunManifest::new(JobConfig::Curve(cfg.clone()));
    let mut predictions = Vec::new();
    let mut table = Vec::new(); // rows of curve.csv
    #[derive(Serialize)]
    struct PointsFile {
        initial: Vec<serde_json::Value>,
        evolved: Vec<EvolvedGroupOutcome>,
    }
    let mut points_file = PointsFile {
        initial: Vec::new(),
        evolved: Vec::new(),
    };

    for (gi, group) in cfg.initial_groups.iter().enumerate() {
        let points = initial_entropy_points(group, master, gi)?;
        for (pi, p) in points.iter().enumerate() {
            let value_mean = mean(&p.per_seed);
            let prediction = p.prediction.s_initial;
            table.push(CurveRow {
                group: group.label.clone(),
                family: "lorentzian".into(),
                kind: "S_initial".into(),
                gamma0: p.gamma0,
                gamma: p.gamma0,
                rho: p.rho0,
                product: p.product,
                n_seeds: p.per_seed.len(),
                value_mean,
                value_sd: sample_sd(&p.per_seed),
                prediction,
                error: value_mean - prediction,
            });
            predictions.push(p.prediction.clone());
            for (si, _) in p.per_seed.iter().enumerate() {
                manifest.record_seed(
                    format!("{}:gamma0[{pi}]", group.label),
                    si as u32,
                    derive_seed(master, EXP_CURVE_INITIAL, (gi * 10_000 + pi * 100 + si) as u64),
                );
            }
            manifest.derived.push(derived_unit(
                format!("{}:gamma0={}", group.label, p.gamma0),
                &{
                    let mut s = group.model.clone();
                    s.window_half_width = p.window_half_width;
                    s
                },
                p.n_basis,
                Some(p.gamma0),
            ));
        }
        points_file.initial.push(serde_json::to_value(&points)?);
    }

    for (gi, group) in cfg.evolved_groups.iter().enumerate() {
        let outcome = evolved_curve_points(group, master, gi, jobs, cache_dir)?;
        for p in &outcome.points {
            let value_mean = mean(&p.per_seed);
            let prediction = measured_value(group.measure, &p.prediction);
            let (gamma, rho) = match group.measure {
                CurveMeasure::FinalEntropy => (p.prediction.gamma_f, outcome.rho_f),
                CurveMeasure::Excess => (p.gamma0, outcome.rho0),
            };
            table.push(CurveRow {
                group: group.label.clone(),
                family: p.family.clone(),
                kind: curve_kind(group.measure).into(),
                gamma0: p.gamma0,
                gamma,
                rho,
                product: gamma * rho,
                n_seeds: p.per_seed.len(),
                value_mean,
                value_sd: sample_sd(&p.per_seed),
                prediction,
                error: value_mean - prediction,
            });
            predictions.push(p.prediction.clone());
        }
        for (si, &s) in outcome.seeds.iter().enumerate() {
            manifest.record_seed(group.label.clone(), si as u32, s);
        }
        manifest.derived.push(derived_unit(
            group.label.clone(),
            &group.model,
            outcome.n_basis,
            None,
        ));
        points_file.evolved.push(outcome);
    }

    let mut writer = OutputWriter::new(out)?;
    writer.write_with("curve.csv", |buf| write_curve_table(buf, &table))?;
    writer.write_with("points.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&points_file)?);
        buf.push(b'\n');
        Ok(())
    })?;
    writer.write_with("predictions.csv", |buf| {
        analytic::write_predictions(buf, &predictions)
    })?;
    manifest.digests = writer.digests().clone();
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    writer.write_with("manifest.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&manifest)?);
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(manifest)
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub group: String,
    pub family: String,
    pub kind: String,
    pub gamma0: f64,
    /// The width coordinate of this row (`gamma0` or `gamma_f`).
    pub gamma: f64,
    /// The density the width is resolved against.
    pub rho: f64,
    pub product: f64,
    pub n_seeds: usize,
    pub value_mean: f64,
    pub value_sd: f64,
    pub prediction: f64,
    pub error: f64,
}

fn write_curve_table(w: &mut Vec<u8>, rows: &[CurveRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "group",
        "family",
        "kind",
        "gamma0",
        "gamma",
        "rho",
        "product",
        "n_seeds",
        "value_mean",
        "value_sd",
        "prediction",
        "error",
    ])
    .map_err(csv_to_error)?;
    for r in rows {
        out.write_record([
            r.group.clone(),
            r.family.clone(),
            r.kind.clone(),
            r.gamma0.to_string(),
            r.gamma.to_string(),
            r.rho.to_string(),
            r.product.to_string(),
            r.n_seeds.to_string(),
            r.value_mean.to_string(),
            r.value_sd.to_string(),
            r.prediction.to_string(),
            r.error.to_string(),
        ])
        .map_err(csv_to_error)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_to_error(e: csv::Error) -> Error {
    Error::numeric(format!("csv write failed: {e}"))
}

// ---------------------------------------------------------------------------
// sweep: the classical limit, k -> k/2 and A -> 2A per step
// ---------------------------------------------------------------------------

/// Mean/spread of one family's excess over the Hamiltonian ensemble of one
/// step.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyStats {
    /// Per-Hamiltonian means (each already averaged over draws/offsets).
    pub per_h: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the mean over Hamiltonians.
    pub sem: f64,
}

impl FamilyStats {
    fn from_per_h(per_h: Vec<f64>) -> Self {
        let m = mean(&per_h);
        let sd = sample_sd(&per_h);
        let sem = if per_h.len() > 1 {
            sd / (per_h.len() as f64).sqrt()
        } else {
            0.0
        };
        FamilyStats {
            per_h,
            mean: m,
            sd,
            sem,
        }
    }
}

/// One step of the limit sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepStep {
    pub step: u32,
    pub coupling: f64,
    pub bath_prefactor: f64,
    pub window_half_width: f64,
    pub n_basis: usize,
    pub rho0: f64,
    pub rho_f: f64,
    pub gamma_sp: f64,
    pub t_eq: f64,
    pub seeds: Vec<u64>,
    pub lorentzian: Option<FamilyStats>,
    pub basis_state: Option<FamilyStats>,
    pub lorentzian_prediction: MasterPrediction,
    pub basis_prediction: MasterPrediction,
}

/// Runs every step of a sweep config and returns the per-step statistics.
pub fn sweep_points(
    cfg: &SweepConfig,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<Vec<SweepStep>> {
    let master = cfg.base.seed;
    let e0 = cfg.base.central_energy;
    let mut steps = Vec::new();
    for j in 0..cfg.steps {
        let scale = (2.0f64).powi(j as i32);
        let mut spec_j = cfg.base.clone();
        spec_j.coupling = cfg.base.coupling / scale;
        spec_j.bath_prefactor = cfg.base.bath_prefactor * scale;
        if let Some(ws) = &cfg.windows {
            spec_j.window_half_width = ws[j as usize];
        }
        let basis = model::build_basis(&spec_j)?;
        let rho0 = spec_j.bath_density(e0);
        let rho_f = spec_j.total_density(e0);
        let gamma_sp = analytic::evolved_width(0.0, spec_j.coupling, rho_f);
        let t_eq = spectral::equilibration_time(&spec_j)?;

        let seeds: Vec<u64> = (0..cfg.n_seeds)
            .map(|i| derive_seed(master, EXP_SWEEP, (j as u64) * 1000 + i as u64))
            .collect();

        // Per Hamiltonian: (mean over Lorentzian draws, mean over basis
        // offsets), either side absent when its count is zero.
        let per_h: Vec<(Option<f64>, Option<f64>)> = parallel_map(jobs, &seeds, |_, &run_seed| {
            let mut spec_i = spec_j.clone();
            spec_i.seed = run_seed;
            let h = model::build_hamiltonian(&spec_i, &basis)?;
            let decomp = spectral::diagonalize_cached(&h, &spec_i, cache_dir)?;
            drop(h);
            let excess_of = |psi0: &PureState| -> f64 {
                let initial = observables::split_entropy(psi0, &basis, &spec_i);
                let psi_f = spectral::propagate(psi0, &decomp, t_eq);
                let fin = observables::split_entropy(&psi_f, &basis, &spec_i);
                observables::excess_entropy(&initial, &fin, spec_i.temperature)
            };
            let mut lor = Vec::new();
            for r in 0..cfg.draws_per_seed {
                let state_seed = derive_seed(run_seed, DRAW_DOMAIN, r as u64);
                let ls =
                    states::build_lorentzian_state(&spec_i, &basis, 0, e0, cfg.gamma0, state_seed)?;
                lor.push(excess_of(&ls.state));
            }
            let mut bas = Vec::new();
            for b in 0..cfg.basis_offsets {
                let idx = states::nearest_level_index(&basis, 0, e0, b as usize)?;
                let psi0 = states::build_basis_state(&basis, 0, basis.states[idx].bath_index)?;
                bas.push(excess_of(&psi0));
            }
            Ok((
                (!lor.is_empty()).then(|| mean(&lor)),
                (!bas.is_empty()).then(|| mean(&bas)),
            ))
        })?;

        let lor_means: Vec<f64> = per_h.iter().filter_map(|p| p.0).collect();
        let bas_means: Vec<f64> = per_h.iter().filter_map(|p| p.1).collect();
        steps.push(SweepStep {
            step: j,
            coupling: spec_j.coupling,
            bath_prefactor: spec_j.bath_prefactor,
            window_half_width: spec_j.window_half_width,
            n_basis: basis.len(),
            rho0,
            rho_f,
            gamma_sp,
            t_eq,
            seeds,
            lorentzian: (!lor_means.is_empty()).then(|| FamilyStats::from_per_h(lor_means)),
            basis_state: (!bas_means.is_empty()).then(|| FamilyStats::from_per_h(bas_means)),
            lorentzian_prediction: analytic::predict(cfg.gamma0, rho0, rho_f, spec_j.coupling),
            basis_prediction: analytic::predict(0.0, rho0, rho_f, spec_j.coupling),
        });
    }
    Ok(steps)
}

/// Executes a `sweep` config into `out`: `sweep.csv`, `points.json`,
/// `predictions.csv`, `manifest.json`.
pub fn run_limit_sweep(
    cfg: &SweepConfig,
    out: &Path,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<RunManifest> {
    let started = Instant::now();
    JobConfig::Sweep(cfg.clone()).validate()?;
    let steps = sweep_points(cfg, jobs, cache_dir)?;

    let mut manifest = RunManifest::new(JobConfig::Sweep(cfg.clone()));
    let mut predictions = Vec::new();
    for s in &steps {
        for (i, &seed) in s.seeds.iter().enumerate() {
            manifest.record_seed(format!("step{}", s.step), i as u32, seed);
        }
        let mut spec_j = cfg.base.clone();
        spec_j.coupling = s.coupling;
        spec_j.bath_prefactor = s.bath_prefactor;
        spec_j.window_half_width = s.window_half_width;
        manifest.derived.push(derived_unit(
            format!("step{}", s.step),
            &spec_j,
            s.n_basis,
            Some(cfg.gamma0),
        ));
        predictions.push(s.lorentzian_prediction.clone());
        predictions.push(s.basis_prediction.clone());
    }

    let mut writer = OutputWriter::new(out)?;
    writer.write_with("sweep.csv", |buf| write_sweep_table(buf, &steps))?;
    writer.write_with("points.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&steps)?);
        buf.push(b'\n');
        Ok(())
    })?;
    writer.write_with("predictions.csv", |buf| {
        analytic::write_predictions(buf, &predictions)
    })?;
    manifest.digests = writer.digests().clone();
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    writer.write_with("manifest.json", |buf| {
        buf.extend_from_slice(&serde_json::to_vec_pretty(&manifest)?);
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(manifest)
}

fn write_sweep_table(w: &mut Vec<u8>, steps: &[SweepStep]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "step",
        "family",
        "k",
        "bath_prefactor",
        "window",
        "n_basis",
        "rho_f",
        "gamma_sp",
        "t_eq",
        "n_h",
        "dsx_mean",
        "dsx_sd",
        "dsx_sem",
        "prediction",
        "error",
    ])
    .map_err(csv_to_error)?;
    for s in steps {
        let families: [(&str, &Option<FamilyStats>, &MasterPrediction); 2] = [
            ("lorentzian", &s.lorentzian, &s.lorentzian_prediction),
            ("basis_state", &s.basis_state, &s.basis_prediction),
        ];
        for (name, stats, pred) in families {
            let Some(stats) = stats else { continue };
            out.write_record([
                s.step.to_string(),
                name.to_string(),
                s.coupling.to_string(),
                s.bath_prefactor.to_string(),
                s.window_half_width.to_string(),
                s.n_basis.to_string(),
                s.rho_f.to_string(),
                s.gamma_sp.to_string(),
                s.t_eq.to_string(),
                stats.per_h.len().to_string(),
                stats.mean.to_string(),
                stats.sd.to_string(),
                stats.sem.to_string(),
                pred.dsx.to_string(),
                (stats.mean - pred.dsx).to_string(),
            ])
            .map_err(csv_to_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// model: derived scales without running anything
// ---------------------------------------------------------------------------

/// Derived units for the `model` subcommand: what the config implies,
/// without executing it.
pub fn describe(cfg: &JobConfig) -> Result<Vec<crate::manifest::DerivedUnit>> {
    cfg.validate()?;
    let mut units = Vec::new();
    match cfg {
        JobConfig::Run(c) => {
            let basis = model::build_basis(&c.model)?;
            units.push(derived_unit(
                "run",
                &c.model,
                basis.len(),
                Some(c.family.gamma0()),
            ));
        }
        JobConfig::Curve(c) => {
            for g in &c.initial_groups {
                for &gamma0 in &g.gamma0_list {
                    let mut spec_p = g.model.clone();
                    spec_p.window_half_width = (g.truncation_half_widths * gamma0)
                        .clamp(g.min_window, g.model.window_half_width);
                    let basis = model::build_basis(&spec_p)?;
                    units.push(derived_unit(
                        format!("{}:gamma0={gamma0}", g.label),
                        &spec_p,
                        basis.len(),
                        Some(gamma0),
                    ));
                }
            }
            for g in &c.evolved_groups {
                let basis = model::build_basis(&g.model)?;
                for &gamma0 in &g.gamma0_list {
                    units.push(derived_unit(
                        format!("{}:gamma0={gamma0}", g.label),
                        &g.model,
                        basis.len(),
                        Some(gamma0),
                    ));
                }
                if g.include_basis_state {
                    units.push(derived_unit(
                        format!("{}:basis_state", g.label),
                        &g.model,
                        basis.len(),
                        Some(0.0),
                    ));
                }
            }
        }
        JobConfig::Sweep(c) => {
            for j in 0..c.steps {
                let scale = (2.0f64).powi(j as i32);
                let mut spec_j = c.base.clone();
                spec_j.coupling = c.base.coupling / scale;
                spec_j.bath_prefactor = c.base.bath_prefactor * scale;
                if let Some(ws) = &c.windows {
                    spec_j.window_half_width = ws[j as usize];
                }
                let basis = model::build_basis(&spec_j)?;
                units.push(derived_unit(
                    format!("step{j}"),
                    &spec_j,
                    basis.len(),
                    Some(c.gamma0),
                ));
            }
        }
    }
    Ok(units)
}

/// Dispatches a validated config to its driver.
pub fn execute(
    cfg: &JobConfig,
    out: &Path,
    jobs: usize,
    cache_dir: Option<&Path>,
) -> Result<RunManifest> {
    match cfg {
        JobConfig::Run(c) => run_single(c, out, jobs, cache_dir),
        JobConfig::Curve(c) => run_entropy_curve(c, out, jobs, cache_dir),
        JobConfig::Sweep(c) => run_limit_sweep(c, out, jobs, cache_dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u64> = (0..37).collect();
        let seq = parallel_map(1, &items, |i, &x| Ok(i as u64 + 10 * x)).unwrap();
        let par = parallel_map(4, &items, |i, &x| Ok(i as u64 + 10 * x)).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq[3], 33);
    }

    #[test]
    fn parallel_map_propagates_the_first_error() {
        let items: Vec<u64> = (0..16).collect();
        let err = parallel_map(3, &items, |_, &x| {
            if x == 5 {
                Err(Error::numeric("boom"))
            } else {
                Ok(x)
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("boom"));
    }

    #[test]
    fn mean_and_sd_handle_degenerate_inputs() {
        assert_eq!(sample_sd(&[1.0]), 0.0);
        assert!((mean(&[1.0, 3.0]) - 2.0).abs() < 1e-15);
        assert!((sample_sd(&[1.0, 3.0]) - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn expected_curve_matches_unit_amplitude_lorentzian() {
        let profile = stats::bin_profile(&[(-0.5, 1.0), (0.0, 2.0), (0.5, 1.0)], 10).unwrap();
        let curve = expected_mean_curve(&profile, 0.2);
        for (x, y) in profile.centers.iter().zip(&curve) {
            assert!((y - 0.2 / (x * x + 0.04)).abs() < 1e-12);
        }
        assert!(expected_mean_curve(&profile, 0.0).iter().all(|&y| y == 0.0));
    }
}
