//! Exact spectral decomposition and unitary propagation.
//!
//! Every experiment diagonalizes the full Hamiltonian once and evolves
//! states in the eigenbasis: `psi(t) = V e^{-i diag(E) t} V^T psi(0)`. The
//! decomposition of a large matrix is by far the most expensive step, so a
//! binary cache keyed by a content hash of the generating [`ModelSpec`]
//! (which includes the seed) can persist it across runs.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ZeroOrderBasis, MAX_DENSE_DIM};
use crate::states::PureState;

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns, in
/// zero-order basis order) of the Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Dense symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn diagonalize(h: &Mat<f64>) -> Result<SpectralDecomposition> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::numeric(format!(
            "matrix must be square, got {n}x{}",
            h.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::numeric("cannot diagonalize an empty matrix"));
    }
    for j in 0..n {
        for i in j..n {
            let v = h[(i, j)];
            if !v.is_finite() {
                return Err(Error::numeric(format!("non-finite entry at ({i}, {j})")));
            }
            if v != h[(j, i)] {
                return Err(Error::numeric(format!(
                    "matrix is not exactly symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let evd = h
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::numeric(format!("eigendecomposition did not converge: {e:?}")))?;
    let s = evd.S();
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut eigenvectors = evd.U().to_owned();
    // the solver returns ascending order; enforce it defensively with a
    // stable permutation so downstream indexing can rely on it
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).unwrap());
        let mut sorted_vals = vec![0.0; n];
        let mut sorted_vecs = Mat::<f64>::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            sorted_vals[dst] = eigenvalues[src];
            for i in 0..n {
                sorted_vecs[(i, dst)] = eigenvectors[(i, src)];
            }
        }
        eigenvalues = sorted_vals;
        eigenvectors = sorted_vecs;
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Evolves a state by time `dt`: `psi -> V e^{-i diag(E) dt} V^T psi`.
///
/// The output timestamp is `state.t + dt`. Norm and energy expectation are
/// preserved to solver precision.
pub fn propagate(state: &PureState, decomp: &SpectralDecomposition, dt: f64) -> PureState {
    let n = decomp.dim();
    assert_eq!(
        state.len(),
        n,
        "state dimension {} does not match decomposition dimension {n}",
        state.len()
    );
    // real/imaginary parts as two real columns so the work is two dense
    // matrix products
    let mut m = Mat::<f64>::zeros(n, 2);
    for (i, a) in state.amplitudes.iter().enumerate() {
        m[(i, 0)] = a.re;
        m[(i, 1)] = a.im;
    }
    let mut c = decomp.eigenvectors.transpose() * &m;
    for (xi, &e) in decomp.eigenvalues.iter().enumerate() {
        let theta = -e * dt;
        let (sin, cos) = theta.sin_cos();
        let re = c[(xi, 0)];
        let im = c[(xi, 1)];
        c[(xi, 0)] = re * cos - im * sin;
        c[(xi, 1)] = re * sin + im * cos;
    }
    let out = &decomp.eigenvectors * &c;
    let amplitudes = (0..n)
        .map(|i| Complex64::new(out[(i, 0)], out[(i, 1)]))
        .collect();
    PureState {
        amplitudes,
        t: state.t + dt,
    }
}

/// Default number of inverse-width periods to evolve before sampling
/// "equilibrium" observables.
pub const DEFAULT_EQUILIBRATION_CYCLES: f64 = 10.0;

/// Time to reach equilibrium for a predicted final half-width `gamma_f`:
/// `cycles / gamma_f`.
pub fn equilibration_time_for(gamma_f: f64, cycles: f64) -> Result<f64> {
    if !(gamma_f > 0.0) {
        return Err(Error::config(format!(
            "equilibration time needs a positive final width, got {gamma_f}"
        )));
    }
    Ok(cycles / gamma_f)
}

/// Default sampling time for a model: `10 / (2 pi k^2 rho_f(E0))`, the
/// equilibration time of the slowest (narrowest) initial family. With
/// `k = 0` there is no equilibration and the call fails.
pub fn equilibration_time(spec: &ModelSpec) -> Result<f64> {
    if spec.coupling == 0.0 {
        return Err(Error::config(
            "k = 0 does not equilibrate: no equilibration time exists",
        ));
    }
    let rho_f = spec.total_density(spec.central_energy);
    let gamma_spread = crate::analytic::evolved_width(0.0, spec.coupling, rho_f);
    equilibration_time_for(gamma_spread, DEFAULT_EQUILIBRATION_CYCLES)
}

/// Squared coefficients of eigenstate `xi` paired with the zero-order
/// energies, ready for envelope fitting.
pub fn eigenstate_envelope(
    decomp: &SpectralDecomposition,
    basis: &ZeroOrderBasis,
    xi: usize,
) -> Vec<(f64, f64)> {
    assert!(xi < decomp.dim(), "eigenstate index {xi} out of range");
    basis
        .states
        .iter()
        .enumerate()
        .map(|(i, entry)| (entry.e_zero, decomp.eigenvectors[(i, xi)].powi(2)))
        .collect()
}

// ---------------------------------------------------------------------------
// binary cache
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 8] = b"QTHSPEC\x01";

/// Content hash (hex) identifying the decomposition of a spec+seed.
pub fn cache_key(spec: &ModelSpec) -> Result<String> {
    let bytes = serde_json::to_vec(spec)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// File path a decomposition for `spec` would be cached at under `dir`.
pub fn cache_path(dir: &Path, spec: &ModelSpec) -> Result<PathBuf> {
    Ok(dir.join(format!("{}.spectral", cache_key(spec)?)))
}

fn payload_bytes(decomp: &SpectralDecomposition) -> Vec<u8> {
    let n = decomp.dim();
    let mut payload = Vec::with_capacity(8 * n * (n + 1));
    for v in &decomp.eigenvalues {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for j in 0..n {
        for i in 0..n {
            payload.extend_from_slice(&decomp.eigenvectors[(i, j)].to_le_bytes());
        }
    }
    payload
}

/// Writes the decomposition to the cache directory (created if missing).
/// The write is atomic: a temporary file is renamed into place.
pub fn store_cached(
    dir: &Path,
    spec: &ModelSpec,
    decomp: &SpectralDecomposition,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = cache_path(dir, spec)?;
    let key = cache_key(spec)?;
    let payload = payload_bytes(decomp);
    let mut hasher = Sha256::new();
    hasher.update(&payload);
    let digest = hasher.finalize();

    let tmp = path.with_extension("spectral.tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(key.as_bytes())?; // 64 hex chars
        f.write_all(&(decomp.dim() as u64).to_le_bytes())?;
        f.write_all(&digest)?;
        f.write_all(&payload)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads a cached decomposition if one exists for this spec.
///
/// Returns `Ok(None)` when the file is absent; a present-but-corrupt file
/// (wrong magic, key mismatch, truncation, or payload digest mismatch) is a
/// cache integrity error.
pub fn load_cached(dir: &Path, spec: &ModelSpec) -> Result<Option<SpectralDecomposition>> {
    let path = cache_path(dir, spec)?;
    let mut f = match std::fs::File::open(&path) {
        Ok(f) => std::io::BufReader::new(f),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |what: &str| {
        Error::Cache(format!(
            "spectral cache {} is corrupt: {what}",
            path.display()
        ))
    };

    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|_| corrupt("short header"))?;
    if &magic != CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut key_bytes = [0u8; 64];
    f.read_exact(&mut key_bytes).map_err(|_| corrupt("short header"))?;
    if key_bytes != cache_key(spec)?.as_bytes() {
        return Err(corrupt("content key mismatch"));
    }
    let mut n_bytes = [0u8; 8];
    f.read_exact(&mut n_bytes).map_err(|_| corrupt("short header"))?;
    let n = u64::from_le_bytes(n_bytes) as usize;
    if n == 0 || n > MAX_DENSE_DIM {
        return Err(corrupt("implausible dimension"));
    }
    let mut digest = [0u8; 32];
    f.read_exact(&mut digest).map_err(|_| corrupt("short header"))?;

    let mut payload = vec![0u8; 8 * n * (n + 1)];
    f.read_exact(&mut payload).map_err(|_| corrupt("truncated payload"))?;
    let mut trailing = [0u8; 1];
    if f.read(&mut trailing)? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    let mut hasher = Sha256::new();
    hasher.update(&payload);
    if hasher.finalize()[..] != digest {
        return Err(corrupt("payload digest mismatch"));
    }

    let mut eigenvalues = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = [0u8; 8];
        b.copy_from_slice(&payload[8 * i..8 * i + 8]);
        eigenvalues.push(f64::from_le_bytes(b));
    }
    let mut eigenvectors = Mat::<f64>::zeros(n, n);
    let base = 8 * n;
    for j in 0..n {
        for i in 0..n {
            let off = base + 8 * (j * n + i);
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[off..off + 8]);
            eigenvectors[(i, j)] = f64::from_le_bytes(b);
        }
    }
    Ok(Some(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }))
}

/// Diagonalizes through the cache: loads if present, otherwise computes and
/// stores. With `dir = None` it always computes.
pub fn diagonalize_cached(
    h: &Mat<f64>,
    spec: &ModelSpec,
    dir: Option<&Path>,
) -> Result<SpectralDecomposition> {
    if let Some(dir) = dir {
        if let Some(found) = load_cached(dir, spec)? {
            if found.dim() == h.nrows() {
                return Ok(found);
            }
            return Err(Error::Cache(format!(
                "cached decomposition has dimension {} but the matrix is {}",
                found.dim(),
                h.nrows()
            )));
        }
        let decomp = diagonalize(h)?;
        store_cached(dir, spec, &decomp)?;
        return Ok(decomp);
    }
    diagonalize(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, build_hamiltonian};
    use approx::assert_relative_eq;

    fn small_spec(seed: u64) -> ModelSpec {
        ModelSpec {
            temperature: 6.22,
            bath_prefactor: 60.0 * (-12.0f64 / 6.22).exp(),
            coupling: 2.0e-3,
            system_levels: 3,
            level_spacing: 1.0,
            central_energy: 12.0,
            window_half_width: 1.0,
            seed,
        }
    }

    #[test]
    fn diagonal_matrix_round_trip() {
        let mut h = Mat::<f64>::zeros(4, 4);
        for i in 0..4 {
            h[(i, i)] = (4 - i) as f64; // deliberately descending
        }
        let d = diagonalize(&h).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 2.0, 3.0, 4.0]);
        // columns are signed unit vectors
        for j in 0..4 {
            let col: Vec<f64> = (0..4).map(|i| d.eigenvectors[(i, j)]).collect();
            assert_relative_eq!(col.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[0, k], [k, 1]] has eigenvalues (1 -+ sqrt(1 + 4 k^2)) / 2
        let k = 0.3;
        let mut h = Mat::<f64>::zeros(2, 2);
        h[(0, 1)] = k;
        h[(1, 0)] = k;
        h[(1, 1)] = 1.0;
        let d = diagonalize(&h).unwrap();
        let s = (1.0 + 4.0 * k * k).sqrt();
        assert_relative_eq!(d.eigenvalues[0], (1.0 - s) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(d.eigenvalues[1], (1.0 + s) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormality_and_reconstruction_on_model_matrix() {
        let spec = small_spec(3);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let n = basis.len();
        let d = diagonalize(&h).unwrap();
        assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let vtv = d.eigenvectors.transpose() * &d.eigenvectors;
        let mut max_off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                max_off = max_off.max((vtv[(i, j)] - target).abs());
            }
        }
        assert!(max_off < 1e-9, "orthonormality defect {max_off}");
        // reconstruction residual against ||H||
        let mut lam = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            lam[(i, i)] = d.eigenvalues[i];
        }
        let rec = &d.eigenvectors * &lam * d.eigenvectors.transpose();
        let mut hnorm = 0.0f64;
        let mut resid = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                hnorm = hnorm.max(h[(i, j)].abs());
                resid = resid.max((rec[(i, j)] - h[(i, j)]).abs());
            }
        }
        assert!(resid <= 1e-8 * hnorm.max(1.0), "residual {resid}");
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let mut h = Mat::<f64>::zeros(2, 2);
        h[(0, 1)] = 1.0;
        assert!(diagonalize(&h).is_err());
        let mut h = Mat::<f64>::zeros(2, 2);
        h[(0, 0)] = f64::NAN;
        assert!(diagonalize(&h).is_err());
    }

    fn random_state(n: usize, seed: u64) -> PureState {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::StreamDomain::MonteCarlo, 5);
        let mut amplitudes: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect();
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amplitudes {
            *a /= norm;
        }
        PureState { amplitudes, t: 0.0 }
    }

    #[test]
    fn propagation_preserves_norm_energy_and_composes() {
        let spec = small_spec(8);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let d = diagonalize(&h).unwrap();
        let psi0 = random_state(basis.len(), 17);
        let energy = |s: &PureState| -> f64 {
            // <H> via eigen expansion
            let mut m = Mat::<f64>::zeros(s.len(), 2);
            for (i, a) in s.amplitudes.iter().enumerate() {
                m[(i, 0)] = a.re;
                m[(i, 1)] = a.im;
            }
            let c = d.eigenvectors.transpose() * &m;
            (0..s.len())
                .map(|xi| d.eigenvalues[xi] * (c[(xi, 0)].powi(2) + c[(xi, 1)].powi(2)))
                .sum()
        };
        let e0 = energy(&psi0);
        let a = propagate(&psi0, &d, 35.0);
        assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(energy(&a), e0, max_relative = 1e-8);
        assert_eq!(a.t, 35.0);
        // composition: evolving 35 then 29 equals evolving 64
        let b = propagate(&a, &d, 29.0);
        let direct = propagate(&psi0, &d, 64.0);
        let max_diff = b
            .amplitudes
            .iter()
            .zip(&direct.amplitudes)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-9, "composition defect {max_diff}");
        assert_relative_eq!(b.t, direct.t);
    }

    #[test]
    fn zero_time_is_identity_and_eigenvectors_get_phases_only() {
        let spec = small_spec(21);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let d = diagonalize(&h).unwrap();
        let psi0 = random_state(basis.len(), 4);
        let same = propagate(&psi0, &d, 0.0);
        let max_diff = same
            .amplitudes
            .iter()
            .zip(&psi0.amplitudes)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-12);
        // an eigenvector state only acquires a global phase
        let xi = basis.len() / 2;
        let v: Vec<Complex64> = (0..basis.len())
            .map(|i| Complex64::new(d.eigenvectors[(i, xi)], 0.0))
            .collect();
        let ev = PureState {
            amplitudes: v.clone(),
            t: 0.0,
        };
        let moved = propagate(&ev, &d, 7.3);
        for (a, b) in moved.amplitudes.iter().zip(&v) {
            assert_relative_eq!(a.norm_sqr(), b.norm_sqr(), epsilon = 1e-12);
        }
    }

    #[test]
    fn taylor_series_oracle_at_short_time() {
        // independent propagation oracle: psi(t) ~ sum_m (-iHt)^m/m! psi
        let spec = small_spec(33);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let n = basis.len();
        let d = diagonalize(&h).unwrap();
        let psi0 = random_state(n, 91);
        let t = 0.05 / spec.central_energy.max(1.0); // keep ||Ht|| small
        let apply_h = |v: &[Complex64]| -> Vec<Complex64> {
            (0..n)
                .map(|i| (0..n).map(|j| h[(i, j)] * v[j]).sum())
                .collect()
        };
        let mut term = psi0.amplitudes.clone();
        let mut acc = psi0.amplitudes.clone();
        for m in 1..=24 {
            let hv = apply_h(&term);
            let factor = Complex64::new(0.0, -t) / m as f64;
            term = hv.iter().map(|v| v * factor).collect();
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += b;
            }
        }
        let exact = propagate(&psi0, &d, t);
        let max_diff = exact
            .amplitudes
            .iter()
            .zip(&acc)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "taylor mismatch {max_diff}");
    }

    #[test]
    fn equilibration_time_follows_inverse_width() {
        assert_relative_eq!(equilibration_time_for(0.05, 10.0).unwrap(), 200.0);
        assert!(equilibration_time_for(0.0, 10.0).is_err());
        let spec = small_spec(1);
        let t1 = equilibration_time(&spec).unwrap();
        let spec2 = ModelSpec {
            coupling: 2.0 * spec.coupling,
            ..spec
        };
        // doubling k quarters the time (gamma ~ k^2)
        let t2 = equilibration_time(&spec2).unwrap();
        assert_relative_eq!(t1 / t2, 4.0, max_relative = 1e-12);
        let decoupled = ModelSpec {
            coupling: 0.0,
            ..spec
        };
        assert!(equilibration_time(&decoupled).is_err());
    }

    #[test]
    fn envelope_of_decoupled_eigenstate_is_a_point_mass() {
        let spec = ModelSpec {
            coupling: 0.0,
            ..small_spec(2)
        };
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let d = diagonalize(&h).unwrap();
        let env = eigenstate_envelope(&d, &basis, basis.len() / 3);
        let total: f64 = env.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        let big: Vec<_> = env.iter().filter(|(_, w)| *w > 0.5).collect();
        assert_eq!(big.len(), 1);
    }

    #[test]
    fn cache_round_trip_and_integrity() {
        let spec = small_spec(99);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let d = diagonalize(&h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(load_cached(dir.path(), &spec).unwrap().is_none());
        let path = store_cached(dir.path(), &spec, &d).unwrap();
        let loaded = load_cached(dir.path(), &spec).unwrap().unwrap();
        assert_eq!(loaded.eigenvalues, d.eigenvalues);
        let n = d.dim();
        for j in 0..n {
            for i in 0..n {
                assert_eq!(loaded.eigenvectors[(i, j)], d.eigenvectors[(i, j)]);
            }
        }
        // a different seed maps to a different key -> cache miss, not reuse
        let other = ModelSpec {
            seed: 100,
            ..spec
        };
        assert!(load_cached(dir.path(), &other).unwrap().is_none());
        // flip one payload byte -> integrity failure
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 5;
        bytes[last] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        match load_cached(dir.path(), &spec) {
            Err(Error::Cache(msg)) => assert!(msg.contains("digest"), "unexpected: {msg}"),
            other => panic!("expected cache error, got {other:?}"),
        }
        // truncation -> integrity failure
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_cached(dir.path(), &spec),
            Err(Error::Cache(_))
        ));
    }

    #[test]
    fn diagonalize_cached_computes_then_reuses() {
        let spec = small_spec(55);
        let basis = build_basis(&spec).unwrap();
        let h = build_hamiltonian(&spec, &basis).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = diagonalize_cached(&h, &spec, Some(dir.path())).unwrap();
        assert!(cache_path(dir.path(), &spec).unwrap().exists());
        let b = diagonalize_cached(&h, &spec, Some(dir.path())).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
    }
}
