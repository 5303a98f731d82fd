//! Statistical reduction of amplitude data: energy-binned profiles with
//! quartiles, Lorentzian envelope fits, and Gaussian fluctuation tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and third quartiles of the chi-squared distribution with one
/// degree of freedom (mean 1), i.e. of `g^2` for standard normal `g`.
pub const CHI2_1_QUARTILES: (f64, f64) = (0.101_531_044_267_621_56, 1.323_303_696_931_466_4);

/// Quartiles of half a chi-squared with two degrees of freedom (mean 1),
/// i.e. of `|g~|^2` for complex standard normal `g~`: an exponential with
/// mean one, so exactly `(ln(4/3), ln 4)`.
pub const EXP_QUARTILES: (f64, f64) = (0.287_682_072_451_780_9, 1.386_294_361_119_890_6);

/// Energy-binned summary of squared-amplitude data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedProfile {
    /// Bin centers (equal-width bins over the occupied range).
    pub centers: Vec<f64>,
    /// Mean value per bin (0 for empty bins).
    pub means: Vec<f64>,
    /// First quartile per bin.
    pub q1: Vec<f64>,
    /// Third quartile per bin.
    pub q3: Vec<f64>,
    /// Samples per bin; 0 flags an empty bin.
    pub counts: Vec<usize>,
    pub bin_width: f64,
    /// All samples landed in a single bin; the profile carries no shape
    /// information.
    pub degenerate: bool,
}

impl BinnedProfile {
    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    /// Total weight `sum mean * count` (equals 1 for a full normalized
    /// state's probabilities).
    pub fn total_weight(&self) -> f64 {
        self.means
            .iter()
            .zip(&self.counts)
            .map(|(m, &c)| m * c as f64)
            .sum()
    }
}

/// Default bin count for an envelope of predicted half-width `gamma_pred`
/// over `span`: at least 25, and at least 4 bins per half-width.
pub fn default_bin_count(span: f64, gamma_pred: f64) -> usize {
    if !(span > 0.0) || !(gamma_pred > 0.0) {
        return 25;
    }
    (((span / gamma_pred).ceil() as usize) * 4).max(25)
}

/// Linear-interpolation percentile of already-sorted values.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Bins `(energy, value)` samples into `n_bins` equal-width bins over the
/// occupied energy range, recording per-bin mean, quartiles, and count.
pub fn bin_profile(samples: &[(f64, f64)], n_bins: usize) -> Result<BinnedProfile> {
    if n_bins < 10 {
        return Err(Error::config(format!(
            "profile needs at least 10 bins, got {n_bins}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to bin".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(e, _) in samples {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::numeric("non-finite sample energies"));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = span / n_bins as f64;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for &(e, v) in samples {
        let idx = (((e - lo) / width) as usize).min(n_bins - 1);
        buckets[idx].push(v);
    }
    let mut centers = Vec::with_capacity(n_bins);
    let mut means = Vec::with_capacity(n_bins);
    let mut q1 = Vec::with_capacity(n_bins);
    let mut q3 = Vec::with_capacity(n_bins);
    let mut counts = Vec::with_capacity(n_bins);
    for (i, bucket) in buckets.iter_mut().enumerate() {
        centers.push(lo + (i as f64 + 0.5) * width);
        counts.push(bucket.len());
        if bucket.is_empty() {
            means.push(0.0);
            q1.push(0.0);
            q3.push(0.0);
            continue;
        }
        means.push(bucket.iter().sum::<f64>() / bucket.len() as f64);
        bucket.sort_by(|a, b| a.partial_cmp(b).unwrap());
        q1.push(percentile_sorted(bucket, 0.25));
        q3.push(percentile_sorted(bucket, 0.75));
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    Ok(BinnedProfile {
        centers,
        means,
        q1,
        q3,
        counts,
        bin_width: width,
        degenerate: occupied <= 1,
    })
}

/// A fitted Lorentzian `a * gamma / ((E - center)^2 + gamma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub gamma: f64,
    pub center: f64,
    /// Weighted RMS residual relative to the peak height.
    pub residual_norm: f64,
    /// Approximate standard errors of (amplitude, gamma, center) from the
    /// normal equations at the solution.
    pub param_stderr: [f64; 3],
    pub iterations: usize,
    pub converged: bool,
}

impl LorentzianFit {
    /// Center offset relative to a reference energy (the eigenstate fit
    /// parameter `dE_0` when `reference` is the eigenvalue).
    pub fn offset_from(&self, reference: f64) -> f64 {
        self.center - reference
    }

    pub fn evaluate(&self, e: f64) -> f64 {
        let d = e - self.center;
        self.amplitude * self.gamma / (d * d + self.gamma * self.gamma)
    }
}

/// Initial guess for [`fit_lorentzian`], normally from the closed-form
/// predictions.
#[derive(Debug, Clone, Copy)]
pub struct FitInit {
    pub gamma: f64,
    pub center: f64,
}

fn lorentzian(e: f64, a: f64, g: f64, c: f64) -> f64 {
    let d = e - c;
    a * g / (d * d + g * g)
}

/// Weighted damped Gauss–Newton fit of a Lorentzian to the profile's bin
/// means. Default weights are `sqrt(count)`; residuals are normalized by
/// the peak height so the reported residual norm is scale-free.
pub fn fit_lorentzian(profile: &BinnedProfile, init: FitInit) -> Result<LorentzianFit> {
    let weights: Vec<f64> = profile.counts.iter().map(|&c| (c as f64).sqrt()).collect();
    fit_lorentzian_weighted(profile, &weights, init)
}

/// [`fit_lorentzian`] with explicit per-bin weights.
pub fn fit_lorentzian_weighted(
    profile: &BinnedProfile,
    weights: &[f64],
    init: FitInit,
) -> Result<LorentzianFit> {
    if weights.len() != profile.n_bins() {
        return Err(Error::config(format!(
            "{} weights for {} bins",
            weights.len(),
            profile.n_bins()
        )));
    }
    if !(init.gamma > 0.0) {
        return Err(Error::config("initial half-width must be positive"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..profile.n_bins() {
        if profile.counts[i] > 0 && weights[i] > 0.0 {
            xs.push(profile.centers[i]);
            ys.push(profile.means[i]);
            ws.push(weights[i]);
        }
    }
    if xs.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "lorentzian fit needs at least 5 populated bins, got {}",
            xs.len()
        )));
    }
    let span = xs.last().unwrap() - xs[0];
    if span < 4.0 * init.gamma {
        return Err(Error::InsufficientData(format!(
            "populated bins span {span:.3e}, need at least 4 predicted half-widths ({:.3e})",
            4.0 * init.gamma
        )));
    }
    let peak = ys.iter().cloned().fold(f64::MIN, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InsufficientData("profile has no positive bins".to_string()));
    }

    // parameters p = (a, g, c); residual_i = w_i (y_i - m(x_i)) / peak
    let mut p = [peak * init.gamma, init.gamma, init.center];
    let cost = |p: &[f64; 3]| -> f64 {
        xs.iter()
            .zip(&ys)
            .zip(&ws)
            .map(|((&x, &y), &w)| {
                let r = w * (y - lorentzian(x, p[0], p[1], p[2])) / peak;
                r * r
            })
            .sum()
    };
    let mut current = cost(&p);
    let mut converged = false;
    let mut iterations = 0;
    const MAX_ITER: usize = 200;
    const STEP_TOL: f64 = 1e-10;

    while iterations < MAX_ITER {
        iterations += 1;
        // normal equations J^T J delta = J^T r for the weighted residuals
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for ((&x, &y), &w) in xs.iter().zip(&ys).zip(&ws) {
            let (a, g, c) = (p[0], p[1], p[2]);
            let d = x - c;
            let den = d * d + g * g;
            let m = a * g / den;
            let scale = w / peak;
            let r = scale * (y - m);
            let j = [
                scale * g / den,
                scale * a * (d * d - g * g) / (den * den),
                scale * a * g * 2.0 * d / (den * den),
            ];
            for u in 0..3 {
                jtr[u] += j[u] * r;
                for v in 0..3 {
                    jtj[u][v] += j[u] * j[v];
                }
            }
        }
        let delta = match solve3(&jtj, &jtr) {
            Some(d) => d,
            None => {
                return Err(Error::Fit(format!(
                    "singular normal equations at iteration {iterations} (a={}, gamma={}, center={})",
                    p[0], p[1], p[2]
                )))
            }
        };
        // damped step: halve until the cost decreases and gamma stays positive
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [
                p[0] + lambda * delta[0],
                p[1] + lambda * delta[1],
                p[2] + lambda * delta[2],
            ];
            if trial[1] > 0.0 {
                let trial_cost = cost(&trial);
                if trial_cost <= current {
                    let step = (lambda * delta[0]).abs() / (p[0].abs() + 1.0)
                        + (lambda * delta[1]).abs() / (p[1].abs() + 1.0)
                        + (lambda * delta[2]).abs() / (p[2].abs() + 1.0);
                    p = trial;
                    current = trial_cost;
                    accepted = true;
                    if step < STEP_TOL {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // no downhill step left: treat the current point as the optimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {MAX_ITER} iterations (a={}, gamma={}, center={}, cost={current:.3e})",
            p[0], p[1], p[2]
        )));
    }

    // diagnostics: residual variance and parameter covariance
    let dof = (xs.len().saturating_sub(3)).max(1) as f64;
    let s2 = current / dof;
    let mut jtj = [[0.0f64; 3]; 3];
    for (&x, &w) in xs.iter().zip(&ws) {
        let (a, g, c) = (p[0], p[1], p[2]);
        let d = x - c;
        let den = d * d + g * g;
        let scale = w / peak;
        let j = [
            scale * g / den,
            scale * a * (d * d - g * g) / (den * den),
            scale * a * g * 2.0 * d / (den * den),
        ];
        for u in 0..3 {
            for v in 0..3 {
                jtj[u][v] += j[u] * j[v];
            }
        }
    }
    let stderr = invert3_diag(&jtj)
        .map(|diag| [
            (diag[0] * s2).max(0.0).sqrt(),
            (diag[1] * s2).max(0.0).sqrt(),
            (diag[2] * s2).max(0.0).sqrt(),
        ])
        .unwrap_or([f64::NAN; 3]);

    Ok(LorentzianFit {
        amplitude: p[0],
        gamma: p[1],
        center: p[2],
        residual_norm: (current / xs.len() as f64).sqrt(),
        param_stderr: stderr,
        iterations,
        converged: true,
    })
}

/// Solves a symmetric positive-definite 3x3 system by Cramer's rule.
fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = det3(m);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for col in 0..3 {
        let mut mm = *m;
        for row in 0..3 {
            mm[row][col] = b[row];
        }
        out[col] = det3(&mm) / det;
    }
    Some(out)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn invert3_diag(m: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    let det = det3(m);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    // cofactor diagonal / det
    Some([
        (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
        (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
        (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
    ])
}

/// Sample-moment summary of rescaled coefficients against the standard
/// normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub pass: bool,
}

/// Moment test against the standard normal: pass iff `|mean| <= 0.1`,
/// `|var - 1| <= 0.1`, `|skew| <= 0.2`, `|excess kurtosis| <= 0.5`.
/// Needs at least 500 samples.
pub fn fluctuation_test(values: &[f64]) -> Result<FluctuationReport> {
    if values.len() < 500 {
        return Err(Error::InsufficientData(format!(
            "fluctuation test needs at least 500 samples, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let variance = m2;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let pass = mean.abs() <= 0.1
        && (variance - 1.0).abs() <= 0.1
        && skewness.abs() <= 0.2
        && excess_kurtosis.abs() <= 0.5;
    Ok(FluctuationReport {
        n: values.len(),
        mean,
        variance,
        skewness,
        excess_kurtosis,
        pass,
    })
}

/// Degrees of freedom of the expected coefficient distribution: 1 for real
/// (eigenvector) coefficients, 2 for complex (evolved-state) ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefficientDof {
    One,
    Two,
}

/// Quartile-to-mean ratios of the expected `|c|^2` distribution.
pub fn expected_quartile_ratios(dof: CoefficientDof) -> (f64, f64) {
    match dof {
        CoefficientDof::One => CHI2_1_QUARTILES,
        CoefficientDof::Two => EXP_QUARTILES,
    }
}

/// Expected per-bin `(Q1, Q3)` curves: the bin mean scaled by the
/// chi-squared quartile ratios.
pub fn quartile_overlay(profile: &BinnedProfile, dof: CoefficientDof) -> Vec<(f64, f64)> {
    let (r1, r3) = expected_quartile_ratios(dof);
    profile
        .means
        .iter()
        .map(|&m| (m * r1, m * r3))
        .collect()
}

/// Writes a profile as CSV with columns
/// `bin_center,mean,q1,q3,count,expected_mean,expected_q1,expected_q3`.
/// `expected_mean` supplies the model curve per bin (same length), and the
/// expected quartiles scale it by the `dof` ratios.
pub fn write_profile<W: std::io::Write>(
    w: W,
    profile: &BinnedProfile,
    expected_mean: &[f64],
    dof: CoefficientDof,
) -> Result<()> {
    if expected_mean.len() != profile.n_bins() {
        return Err(Error::config(format!(
            "{} expected means for {} bins",
            expected_mean.len(),
            profile.n_bins()
        )));
    }
    let (r1, r3) = expected_quartile_ratios(dof);
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "bin_center",
        "mean",
        "q1",
        "q3",
        "count",
        "expected_mean",
        "expected_q1",
        "expected_q3",
    ])
    .map_err(crate::analytic::csv_err)?;
    for i in 0..profile.n_bins() {
        out.write_record([
            profile.centers[i].to_string(),
            profile.means[i].to_string(),
            profile.q1[i].to_string(),
            profile.q3[i].to_string(),
            profile.counts[i].to_string(),
            expected_mean[i].to_string(),
            (expected_mean[i] * r1).to_string(),
            (expected_mean[i] * r3).to_string(),
        ])
        .map_err(crate::analytic::csv_err)?;
    }
    out.flush()?;
    Ok(())
}
