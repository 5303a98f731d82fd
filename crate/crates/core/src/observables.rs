//! Thermodynamic observables of pure states over the zero-order basis.
//!
//! All entropies are Shannon entropies (nats) of zero-order-basis
//! probabilities `p = |c|^2`. The total entropy splits exactly into a system
//! part and a conditional environment part,
//!
//! ```text
//! S_univ = S_sys + <S_env>,    S_sys = -sum_s p_s ln p_s,
//! <S_env> = -sum_{s,eps} p_{s,eps} ln(p_{s,eps} / p_s),
//! ```
//!
//! and the system free energy `F = <E_S> - T S_sys` closes the bookkeeping:
//! the excess entropy production of a run is `dS_univ + dF/T`.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ZeroOrderBasis};
use crate::states::PureState;

/// Probabilities below this are treated as exactly zero in `p ln p` sums.
const P_FLOOR: f64 = 1e-300;

fn plogp(p: f64) -> f64 {
    if p > P_FLOOR {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy (nats) of the zero-order-basis probabilities.
pub fn entropy_univ(state: &PureState) -> f64 {
    -state.amplitudes.iter().map(|c| plogp(c.norm_sqr())).sum::<f64>()
}

/// System-level marginal `p_s = sum_eps |c_{s,eps}|^2`.
pub fn system_distribution(state: &PureState, basis: &ZeroOrderBasis, n_levels: u32) -> Vec<f64> {
    assert_eq!(state.len(), basis.len(), "state/basis dimension mismatch");
    let mut p = vec![0.0; n_levels as usize];
    for (entry, amp) in basis.states.iter().zip(&state.amplitudes) {
        p[entry.s as usize] += amp.norm_sqr();
    }
    p
}

/// The equilibrium Boltzmann target `p_s = e^{-E_s/T} / Z`.
pub fn boltzmann_distribution(spec: &ModelSpec) -> Vec<f64> {
    let z = spec.system_partition();
    (0..spec.system_levels)
        .map(|s| (-spec.system_energy(s) / spec.temperature).exp() / z)
        .collect()
}

/// Total variation distance `(1/2) sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distribution length mismatch");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// All entropy/energy bookkeeping of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBreakdown {
    /// Total Shannon entropy over the zero-order basis (nats).
    pub s_univ: f64,
    /// Entropy of the system marginal.
    pub s_sys: f64,
    /// Mean conditional environment entropy `<S_env>`.
    pub s_env_conditional: f64,
    /// System marginal `p_s`.
    pub p_s: Vec<f64>,
    /// Mean system energy `sum p_s E_s`.
    pub mean_e_sys: f64,
    /// System free energy `<E_S> - T S_sys`.
    pub f_sys: f64,
    /// Time label of the state.
    pub t: f64,
}

/// Computes the full [`EntropyBreakdown`] of a state.
///
/// The system part and the conditional environment part are accumulated
/// independently (not derived from each other), so the exact identity
/// `s_univ = s_sys + s_env_conditional` remains a genuine cross-check.
pub fn split_entropy(
    state: &PureState,
    basis: &ZeroOrderBasis,
    spec: &ModelSpec,
) -> EntropyBreakdown {
    let p_s = system_distribution(state, basis, spec.system_levels);
    let s_sys = -p_s.iter().map(|&p| plogp(p)).sum::<f64>();
    // <S_env> = -sum_{s,eps} p ln(p / p_s), with empty levels contributing 0
    let mut s_env = 0.0;
    for (entry, amp) in basis.states.iter().zip(&state.amplitudes) {
        let p = amp.norm_sqr();
        let ps = p_s[entry.s as usize];
        if p > P_FLOOR && ps > P_FLOOR {
            s_env -= p * (p / ps).ln();
        }
    }
    let mean_e_sys: f64 = p_s
        .iter()
        .enumerate()
        .map(|(s, &p)| p * spec.system_energy(s as u32))
        .sum();
    EntropyBreakdown {
        s_univ: entropy_univ(state),
        s_sys,
        s_env_conditional: s_env,
        f_sys: mean_e_sys - spec.temperature * s_sys,
        p_s,
        mean_e_sys,
        t: state.t,
    }
}

/// System free energy `<E_S> - T S_sys` of a state.
pub fn free_energy(state: &PureState, basis: &ZeroOrderBasis, spec: &ModelSpec) -> f64 {
    free_energy_of(&system_distribution(state, basis, spec.system_levels), spec)
}

/// Free energy of an explicit system distribution.
pub fn free_energy_of(p_s: &[f64], spec: &ModelSpec) -> f64 {
    let s_sys = -p_s.iter().map(|&p| plogp(p)).sum::<f64>();
    let e: f64 = p_s
        .iter()
        .enumerate()
        .map(|(s, &p)| p * spec.system_energy(s as u32))
        .sum();
    e - spec.temperature * s_sys
}

/// Heat received by the environment: `Q = -d<E_S> = <E_S>_initial - <E_S>_final`.
pub fn heat(initial: &EntropyBreakdown, fin: &EntropyBreakdown) -> f64 {
    initial.mean_e_sys - fin.mean_e_sys
}

/// Excess entropy production `dS^x = dS_univ + dF_sys / T` between two
/// breakdowns of the same run.
pub fn excess_entropy(initial: &EntropyBreakdown, fin: &EntropyBreakdown, temperature: f64) -> f64 {
    (fin.s_univ - initial.s_univ) + (fin.f_sys - initial.f_sys) / temperature
}

/// Writes the per-sample entropy bookkeeping as CSV with columns
/// `t,S_univ,S_sys,S_env,F_sys,Q_cum,dSx`; cumulative quantities are
/// relative to the first row.
pub fn write_timeseries<W: std::io::Write>(
    w: W,
    rows: &[EntropyBreakdown],
    temperature: f64,
) -> Result<()> {
    let first = rows
        .first()
        .ok_or_else(|| Error::config("timeseries needs at least one sample"))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "S_univ", "S_sys", "S_env", "F_sys", "Q_cum", "dSx"])
        .map_err(crate::analytic::csv_err)?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            r.s_univ.to_string(),
            r.s_sys.to_string(),
            r.s_env_conditional.to_string(),
            r.f_sys.to_string(),
            heat(first, r).to_string(),
            excess_entropy(first, r, temperature).to_string(),
        ])
        .map_err(crate::analytic::csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BasisState;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_complex::Complex64;

    /// Hand-built basis: `counts[s]` consecutive states per level, energies
    /// irrelevant unless given.
    fn toy_basis(counts: &[usize]) -> ZeroOrderBasis {
        let mut states = Vec::new();
        let mut bath_index = 0usize;
        for (s, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                states.push(BasisState {
                    s: s as u32,
                    bath_index,
                    e_bath: 0.0,
                    e_zero: s as f64,
                });
                bath_index += 1;
            }
        }
        ZeroOrderBasis {
            states,
            bath_levels: Vec::new(),
        }
    }

    fn toy_spec(temperature: f64, n_levels: u32) -> ModelSpec {
        ModelSpec {
            temperature,
            bath_prefactor: 1.0,
            coupling: 0.0,
            system_levels: n_levels,
            level_spacing: 1.0,
            central_energy: 5.0,
            window_half_width: 1.0,
            seed: 0,
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

    #[test]
    fn point_mass_has_zero_entropies() {
        let basis = toy_basis(&[2, 2]);
        let spec = toy_spec(6.22, 2);
        let mut probs = vec![0.0; 4];
        probs[2] = 1.0;
        let b = split_entropy(&state_from_probs(&probs), &basis, &spec);
        assert_eq!(b.s_univ, 0.0);
        assert_eq!(b.s_sys, -0.0);
        assert_eq!(b.s_env_conditional, 0.0);
        assert_eq!(b.mean_e_sys, 1.0);
    }

    #[test]
    fn uniform_state_has_log_count_entropy() {
        let basis = toy_basis(&[8]);
        let spec = toy_spec(6.22, 1);
        let probs = vec![1.0 / 8.0; 8];
        let st = state_from_probs(&probs);
        assert_relative_eq!(entropy_univ(&st), (8.0f64).ln(), epsilon = 1e-14);
        let b = split_entropy(&st, &basis, &spec);
        assert_relative_eq!(b.s_env_conditional, (8.0f64).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(b.s_sys, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn split_identity_on_an_arbitrary_state() {
        let basis = toy_basis(&[3, 4, 5]);
        let spec = toy_spec(6.22, 3);
        let raw = [0.05, 0.1, 0.02, 0.2, 0.03, 0.07, 0.13, 0.08, 0.04, 0.11, 0.09, 0.08];
        let b = split_entropy(&state_from_probs(&raw), &basis, &spec);
        assert_relative_eq!(
            b.s_univ,
            b.s_sys + b.s_env_conditional,
            max_relative = 1e-12
        );
        assert_relative_eq!(b.p_s.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn product_state_environment_entropy_is_marginal_independent() {
        // p_{s,eps} = p_s q_eps with the same q on each level
        let basis = toy_basis(&[4, 4]);
        let spec = toy_spec(6.22, 2);
        let q = [0.4f64, 0.3, 0.2, 0.1];
        let q_entropy = -q.iter().map(|&v| v * v.ln()).sum::<f64>();
        for p0 in [0.2, 0.5, 0.9] {
            let mut probs = Vec::new();
            for &ps in &[p0, 1.0 - p0] {
                probs.extend(q.iter().map(|&qe| ps * qe));
            }
            let b = split_entropy(&state_from_probs(&probs), &basis, &spec);
            assert_relative_eq!(b.s_env_conditional, q_entropy, max_relative = 1e-12);
        }
    }

    #[test]
    fn boltzmann_target_frozen_values() {
        let spec = toy_spec(6.22, 3);
        let p = boltzmann_distribution(&spec);
        assert_relative_eq!(p[0], 0.388_121, max_relative = 1e-4);
        assert_relative_eq!(p[1], 0.330_479, max_relative = 1e-4);
        assert_relative_eq!(p[2], 0.281_399, max_relative = 1e-4);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn free_energy_frozen_values() {
        let spec = toy_spec(6.22, 3);
        // point distribution on the ground level
        assert_eq!(free_energy_of(&[1.0, 0.0, 0.0], &spec), 0.0);
        // Boltzmann distribution: F = -T ln Z
        let p = boltzmann_distribution(&spec);
        assert_relative_eq!(free_energy_of(&p, &spec), -5.886_81, max_relative = 1e-5);
        assert_relative_eq!(
            free_energy_of(&p, &spec),
            -spec.temperature * spec.system_partition().ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn heat_frozen_value_for_ground_to_boltzmann() {
        let basis = toy_basis(&[2, 2, 2]);
        let spec = toy_spec(6.22, 3);
        let init = split_entropy(&state_from_probs(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &basis, &spec);
        let p = boltzmann_distribution(&spec);
        let fin = split_entropy(
            &state_from_probs(&[p[0] / 2.0, p[0] / 2.0, p[1] / 2.0, p[1] / 2.0, p[2] / 2.0, p[2] / 2.0]),
            &basis,
            &spec,
        );
        assert_relative_eq!(heat(&init, &fin), -0.893_277, max_relative = 1e-4);
        assert_eq!(heat(&init, &init), 0.0);
    }

    #[test]
    fn excess_entropy_equals_environment_entropy_minus_heat_over_t() {
        // dS^x = dS_env - Q/T is an exact identity of the definitions
        let basis = toy_basis(&[3, 2, 4]);
        let spec = toy_spec(3.7, 3);
        let a = split_entropy(
            &state_from_probs(&[0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.05, 0.15, 0.1]),
            &basis,
            &spec,
        );
        let b = split_entropy(
            &state_from_probs(&[0.02, 0.3, 0.08, 0.05, 0.25, 0.1, 0.1, 0.05, 0.05]),
            &basis,
            &spec,
        );
        let dsx = excess_entropy(&a, &b, spec.temperature);
        let alt = (b.s_env_conditional - a.s_env_conditional) - heat(&a, &b) / spec.temperature;
        assert_relative_eq!(dsx, alt, max_relative = 1e-12);
        // unchanged state produces no excess
        assert_eq!(excess_entropy(&a, &a, spec.temperature), 0.0);
    }

    #[test]
    fn microcanonical_uniform_distribution_splits_by_level_counts() {
        // uniform p = 1/W over levels with counts W_s:
        // S_sys = ln W - sum p_s ln W_s, S_env = sum p_s ln W_s
        let counts = [6usize, 3, 1];
        let w: usize = counts.iter().sum();
        let basis = toy_basis(&counts);
        let spec = toy_spec(6.22, 3);
        let probs = vec![1.0 / w as f64; w];
        let b = split_entropy(&state_from_probs(&probs), &basis, &spec);
        let expected_env: f64 = counts
            .iter()
            .map(|&ws| (ws as f64 / w as f64) * (ws as f64).ln())
            .sum();
        assert_relative_eq!(b.s_univ, (w as f64).ln(), epsilon = 1e-12);
        assert_relative_eq!(b.s_env_conditional, expected_env, max_relative = 1e-12);
        assert_relative_eq!(
            b.s_sys,
            (w as f64).ln() - expected_env,
            max_relative = 1e-12
        );
    }

    #[test]
    fn environment_entropy_change_is_heat_over_t_for_matched_multiplicities() {
        // with T = 1/ln 2 the Boltzmann weights are powers of two, so
        // W_s = 64, 32, 16 realizes W_s ~ e^{-E_s/T} exactly; then for any
        // per-level-uniform pair of states dS_env = Q/T to machine precision
        let t = 1.0 / std::f64::consts::LN_2;
        let counts = [64usize, 32, 16];
        let basis = toy_basis(&counts);
        let spec = toy_spec(t, 3);

        let uniform_over = |weights: [f64; 3]| -> Vec<f64> {
            let mut probs = Vec::new();
            for (s, &n) in counts.iter().enumerate() {
                probs.extend(std::iter::repeat(weights[s] / n as f64).take(n));
            }
            probs
        };

        // case 1: all weight on the ground level -> spread over all levels
        // with the equilibrium weights p_s = W_s / W
        let w_total: usize = counts.iter().sum();
        let eq = [
            counts[0] as f64 / w_total as f64,
            counts[1] as f64 / w_total as f64,
            counts[2] as f64 / w_total as f64,
        ];
        let init = split_entropy(&state_from_probs(&uniform_over([1.0, 0.0, 0.0])), &basis, &spec);
        let fin = split_entropy(&state_from_probs(&uniform_over(eq)), &basis, &spec);
        let ds_env = fin.s_env_conditional - init.s_env_conditional;
        assert!((ds_env - heat(&init, &fin) / t).abs() < 1e-10);

        // case 2: initial weight spread over two levels
        let init2 = split_entropy(
            &state_from_probs(&uniform_over([2.0 / 3.0, 1.0 / 3.0, 0.0])),
            &basis,
            &spec,
        );
        let ds_env2 = fin.s_env_conditional - init2.s_env_conditional;
        assert!((ds_env2 - heat(&init2, &fin) / t).abs() < 1e-10);
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_relative_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_relative_eq!(
            total_variation(&[0.6, 0.4], &[0.5, 0.5]),
            0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn timeseries_csv_layout() {
        let basis = toy_basis(&[2, 2]);
        let spec = toy_spec(6.22, 2);
        let mut a_state = state_from_probs(&[1.0, 0.0, 0.0, 0.0]);
        a_state.t = 0.0;
        let mut b_state = state_from_probs(&[0.4, 0.2, 0.2, 0.2]);
        b_state.t = 2.5;
        let a = split_entropy(&a_state, &basis, &spec);
        let b = split_entropy(&b_state, &basis, &spec);
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &[a.clone(), b.clone()], spec.temperature).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,S_univ,S_sys,S_env,F_sys,Q_cum,dSx");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[5], "0"); // no heat flow at the first sample
        let second: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(second[0], "2.5");
        let dsx: f64 = second[6].parse().unwrap();
        assert_relative_eq!(dsx, excess_entropy(&a, &b, spec.temperature));
        assert!(write_timeseries(&mut Vec::new(), &[], 1.0).is_err());
    }
}
