//! Gate-performance measures computed from a process matrix.

use rayon::prelude::*;

use crate::error::{invalid, QptError, Result};
use crate::process::{apply_process, chi_from_unitary, pauli_2q, ProcessMatrix, UnitaryGate};
use crate::qcore::{
    c, haar_random_pure, linear_entropy_normalized, matrix_fidelity, pure_state_fidelity, purity,
    tangle, trace, DensityMatrix, PureState, Rng,
};
use crate::tomo::{label_for_index, CountRecord, CountSet};

/// Tolerance on the trace and purity of an ideal (unitary) process.
const IDEAL_TOL: f64 = 1e-8;

pub const DEFAULT_SWEEP_SAMPLES: usize = 200_000;

fn check_compatible(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<()> {
    if a.basis().name() != b.basis().name() || a.dim() != b.dim() {
        return invalid(format!(
            "process bases differ: '{}' (d={}) vs '{}' (d={})",
            a.basis().name(),
            a.dim(),
            b.basis().name(),
            b.dim()
        ));
    }
    Ok(())
}

/// `Tr(chi_ideal chi)` for a unitary ideal process, clamped to `[0, 1]`.
pub fn process_fidelity(ideal: &ProcessMatrix, actual: &ProcessMatrix) -> Result<f64> {
    check_compatible(ideal, actual)?;
    let tr = trace(ideal.chi()).re;
    let pur = trace(&(ideal.chi() * ideal.chi())).re;
    if (tr - 1.0).abs() > IDEAL_TOL || (pur - 1.0).abs() > IDEAL_TOL {
        return invalid("the ideal process must be unitary (rank one, unit trace)");
    }
    Ok(trace(&(ideal.chi() * actual.chi())).re.clamp(0.0, 1.0))
}

/// Uhlmann fidelity of the trace-normalized process matrices; reduces to
/// [`process_fidelity`] when either process is unitary.
pub fn process_fidelity_general(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64> {
    check_compatible(a, b)?;
    let (ta, tb) = (a.trace(), b.trace());
    if !(ta > 0.0 && tb > 0.0) {
        return invalid("process matrices must have positive trace");
    }
    Ok(matrix_fidelity(&a.chi().unscale(ta), &b.chi().unscale(tb)))
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return invalid(format!("{name} must lie in [0, 1], got {v}"));
    }
    Ok(())
}

/// `(d F_P + 1) / (d + 1)`.
pub fn average_gate_fidelity(process_fidelity: f64, d: usize) -> Result<f64> {
    check_unit_interval("process fidelity", process_fidelity)?;
    if d < 2 {
        return invalid("dimension must be at least 2");
    }
    let d = d as f64;
    Ok((d * process_fidelity + 1.0) / (d + 1.0))
}

/// `(C_P, error_prob_bound) = (sqrt(1 - F_P), 1 - F_P)`.
pub fn cp_distance(process_fidelity: f64) -> Result<(f64, f64)> {
    check_unit_interval("process fidelity", process_fidelity)?;
    let bound = 1.0 - process_fidelity;
    Ok((bound.sqrt(), bound))
}

/// `(d Tr(chi^2) + 1) / (d + 1)`: the mean output purity over Haar inputs for a
/// unital trace-preserving process.
pub fn average_output_purity(chi: &ProcessMatrix) -> f64 {
    let d = chi.dim() as f64;
    let tr2: f64 = chi.chi().iter().map(|z| z.norm_sqr()).sum();
    (d * tr2 + 1.0) / (d + 1.0)
}

/// `E(|psi><psi|)` for a physical process.
pub fn predict_output(chi: &ProcessMatrix, input: &PureState) -> Result<DensityMatrix> {
    apply_process(chi, &input.to_density())
}

/// Haar input `i` of a seeded sweep.
fn sweep_input(rng: &Rng, index: usize, n_qubits: usize) -> PureState {
    haar_random_pure(n_qubits, &mut rng.fork(index as u64)).expect("qubit count is valid")
}

fn two_qubit_only(chi: &ProcessMatrix) -> Result<()> {
    if chi.dim() != 4 {
        return invalid("this measure is defined for two-qubit processes");
    }
    Ok(())
}

/// Standard product inputs plus `|+/-> (x) |0/1>`.
fn augmented_inputs() -> Vec<PureState> {
    let mut inputs: Vec<PureState> = (0..16)
        .map(|i| crate::tomo::label_state(&label_for_index(i)).expect("alphabet label"))
        .collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for sign in [1.0, -1.0] {
        let pm = PureState::new(crate::qcore::CVector::from_vec(vec![
            c(s, 0.0),
            c(sign * s, 0.0),
        ]))
        .expect("normalized");
        for b in 0..2 {
            inputs.push(pm.tensor(&PureState::basis(1, b).expect("qubit basis state")));
        }
    }
    inputs
}

fn tangle_gain(chi: &ProcessMatrix, input: &PureState) -> Result<f64> {
    let before = tangle(&input.to_density())?;
    let after = tangle(&predict_output(chi, input)?)?;
    Ok(after - before)
}

/// Largest tangle increase over `n_samples` Haar inputs (sample `i` drawn from
/// substream `i` of `rng`) and a fixed set of product inputs.
pub fn entangling_capability(chi: &ProcessMatrix, n_samples: usize, rng: &Rng) -> Result<f64> {
    chi.require_physical()?;
    two_qubit_only(chi)?;
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let fixed = augmented_inputs()
        .iter()
        .map(|psi| tangle_gain(chi, psi))
        .collect::<Result<Vec<f64>>>()?;
    let sampled = (0..n_samples)
        .into_par_iter()
        .map(|i| tangle_gain(chi, &sweep_input(rng, i, 2)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(fixed.into_iter().chain(sampled).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub input_tangle: f64,
    pub output_tangle: f64,
    pub delta_tangle: f64,
    /// Fidelity of the output with the ideal gate's output.
    pub fidelity: f64,
    /// Normalized linear entropy of the output (the inputs are pure).
    pub entropy_added: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterTable {
    pub rows: Vec<ScatterRow>,
    pub sample_count: usize,
    pub seed: u64,
}

impl ScatterTable {
    pub fn min_fidelity(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.fidelity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_fidelity(&self) -> f64 {
        self.rows.iter().map(|r| r.fidelity).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_entropy(&self) -> f64 {
        self.rows.iter().map(|r| r.entropy_added).sum::<f64>() / self.rows.len() as f64
    }

    pub fn max_delta_tangle(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.delta_tangle)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-sample tangles, fidelity and entropy for `n_samples` Haar inputs.
/// Row `i` comes from substream `i` of `rng`, so the table does not depend on
/// how the work is scheduled.
pub fn scatter_sweep(
    chi: &ProcessMatrix,
    ideal: &UnitaryGate,
    n_samples: usize,
    rng: &Rng,
) -> Result<ScatterTable> {
    chi.require_physical()?;
    two_qubit_only(chi)?;
    if ideal.dim() != chi.dim() {
        return invalid("ideal gate and process dimensions differ");
    }
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let rows = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let psi = sweep_input(rng, i, 2);
            let out = predict_output(chi, &psi)?;
            let input_tangle = tangle(&psi.to_density())?;
            let output_tangle = tangle(&out)?;
            Ok(ScatterRow {
                input_tangle,
                output_tangle,
                delta_tangle: output_tangle - input_tangle,
                fidelity: pure_state_fidelity(&psi.evolve(ideal.matrix()), &out),
                entropy_added: linear_entropy_normalized(&out).clamp(0.0, 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScatterTable {
        rows,
        sample_count: n_samples,
        seed: rng.seed(),
    })
}

/// Mean output purity over `n_samples` Haar inputs.
pub fn monte_carlo_purity(chi: &ProcessMatrix, n_samples: usize, rng: &Rng) -> Result<f64> {
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let n_qubits = chi.dim().trailing_zeros() as usize;
    let total = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            Ok(purity(&predict_output(
                chi,
                &sweep_input(rng, i, n_qubits),
            )?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(total.iter().sum::<f64>() / n_samples as f64)
}

/// Mean fidelity between actual and ideal outputs over `n_samples` Haar inputs.
pub fn monte_carlo_gate_fidelity(
    chi: &ProcessMatrix,
    ideal: &UnitaryGate,
    n_samples: usize,
    rng: &Rng,
) -> Result<f64> {
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    if ideal.dim() != chi.dim() {
        return invalid("ideal gate and process dimensions differ");
    }
    let n_qubits = chi.dim().trailing_zeros() as usize;
    let total = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let psi = sweep_input(rng, i, n_qubits);
            Ok(pure_state_fidelity(
                &psi.evolve(ideal.matrix()),
                &predict_output(chi, &psi)?,
            ))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(total.iter().sum::<f64>() / n_samples as f64)
}

/// Coefficients of I, X, Y, Z over the H, V, D, R projectors.
fn single_qubit_decomposition(pauli: usize) -> [f64; 4] {
    match pauli {
        0 => [1.0, 1.0, 0.0, 0.0],
        1 => [-1.0, -1.0, 2.0, 0.0],
        2 => [1.0, 1.0, 0.0, -2.0],
        3 => [1.0, -1.0, 0.0, 0.0],
        _ => unreachable!("single-qubit Pauli index"),
    }
}

/// Coefficient of the projector for label index `label` in the two-qubit Pauli `k`.
fn decomposition_coefficient(k: usize, label: usize) -> f64 {
    single_qubit_decomposition(k / 4)[label / 4] * single_qubit_decomposition(k % 4)[label % 4]
}

/// `U P_k U^dagger = s_k P_sigma(k)` for each two-qubit Pauli, or `Unsupported`.
pub fn clifford_action(ideal: &UnitaryGate) -> Result<Vec<(usize, f64)>> {
    if ideal.dim() != 4 {
        return Err(QptError::Unsupported(
            "direct fidelity is implemented for two-qubit gates".into(),
        ));
    }
    let basis = pauli_2q();
    let u = ideal.matrix();
    basis
        .elements()
        .iter()
        .map(|p| {
            let image = u * p * u.adjoint();
            let coeffs = basis.expand(&image);
            let hits: Vec<usize> = (0..coeffs.len())
                .filter(|&j| coeffs[j].norm() > 1e-9)
                .collect();
            match hits.as_slice() {
                [j] if (coeffs[*j].im.abs() < 1e-9)
                    && ((coeffs[*j].re.abs() - 1.0).abs() < 1e-9) =>
                {
                    Ok((*j, coeffs[*j].re.signum()))
                }
                _ => Err(QptError::Unsupported(
                    "ideal gate is not a Clifford operation".into(),
                )),
            }
        })
        .collect()
}

/// Affine weights `w_ab` with `F_P = sum_ab w_ab p_ab`; only nonzero weights
/// are returned, in standard-setting order.
pub fn direct_fidelity_weights(ideal: &UnitaryGate) -> Result<Vec<((String, String), f64)>> {
    let action = clifford_action(ideal)?;
    let d3 = 64.0;
    let mut weights = vec![0.0; 256];
    for (k, (sigma, sign)) in action.iter().enumerate() {
        for a in 0..16 {
            let alpha = decomposition_coefficient(k, a);
            if alpha == 0.0 {
                continue;
            }
            for b in 0..16 {
                let beta = decomposition_coefficient(*sigma, b);
                if beta != 0.0 {
                    weights[16 * a + b] += sign * alpha * beta / d3;
                }
            }
        }
    }
    Ok(weights
        .into_iter()
        .enumerate()
        .filter(|(_, w)| w.abs() > 1e-15)
        .map(|(i, w)| ((label_for_index(i / 16), label_for_index(i % 16)), w))
        .collect())
}

/// The `(input, analyzer)` pairs the direct estimator reads.
pub fn required_settings(ideal: &UnitaryGate) -> Result<Vec<(String, String)>> {
    Ok(direct_fidelity_weights(ideal)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectFidelity {
    pub estimate: f64,
    /// First-order Poisson error (`var(c) = c`).
    pub std_error: f64,
    pub settings_used: usize,
}

/// Process fidelity with a Clifford gate read directly from a subset of the counts.
pub fn direct_process_fidelity(data: &CountSet, ideal: &UnitaryGate) -> Result<DirectFidelity> {
    direct_process_fidelity_records(data.records(), data.total_pairs(), ideal)
}

/// As [`direct_process_fidelity`] for a possibly partial list of records.
pub fn direct_process_fidelity_records(
    records: &[CountRecord],
    total_pairs: f64,
    ideal: &UnitaryGate,
) -> Result<DirectFidelity> {
    if !(total_pairs.is_finite() && total_pairs > 0.0) {
        return invalid(format!("total_pairs must be positive, got {total_pairs}"));
    }
    let weights = direct_fidelity_weights(ideal)?;
    let lookup = crate::tomo::record_lookup(records);
    let missing: Vec<(String, String)> = weights
        .iter()
        .filter(|(s, _)| !lookup.contains_key(s))
        .map(|(s, _)| s.clone())
        .collect();
    if !missing.is_empty() {
        return Err(QptError::MissingSettings(missing));
    }
    let (mut estimate, mut variance) = (0.0, 0.0);
    for (s, w) in &weights {
        let counts = lookup[s] as f64;
        estimate += w * counts;
        variance += w * w * counts;
    }
    Ok(DirectFidelity {
        estimate: estimate / total_pairs,
        std_error: variance.sqrt() / total_pairs,
        settings_used: weights.len(),
    })
}

/// Every field of the gate-performance summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub process_fidelity: f64,
    pub average_gate_fidelity: f64,
    pub cp_distance: f64,
    pub error_prob_bound: f64,
    pub average_purity: f64,
    /// Mean normalized linear entropy of the sweep outputs.
    pub average_linear_entropy: f64,
    pub entangling_capability: f64,
    /// Smallest output fidelity in the sweep.
    pub min_output_fidelity: f64,
    pub sweep_samples: usize,
    pub sweep_seed: u64,
}

/// Computes the summary and the sweep table behind its sample-dependent fields.
pub fn metrics_report(
    chi: &ProcessMatrix,
    ideal: &UnitaryGate,
    sweep_samples: usize,
    seed: u64,
) -> Result<(MetricsReport, ScatterTable)> {
    chi.require_physical()?;
    two_qubit_only(chi)?;
    let ideal_chi = chi_from_unitary(ideal, chi.basis().clone())?;
    let fp = process_fidelity(&ideal_chi, chi)?;
    let (cp, bound) = cp_distance(fp)?;
    let rng = Rng::seed_from(seed);
    let table = scatter_sweep(chi, ideal, sweep_samples, &rng)?;
    let report = MetricsReport {
        process_fidelity: fp,
        average_gate_fidelity: average_gate_fidelity(fp, chi.dim())?,
        cp_distance: cp,
        error_prob_bound: bound,
        average_purity: average_output_purity(chi).clamp(0.0, 1.0),
        average_linear_entropy: table.mean_entropy(),
        entangling_capability: entangling_capability(chi, sweep_samples, &rng)?,
        min_output_fidelity: table.min_fidelity(),
        sweep_samples,
        sweep_seed: seed,
    };
    Ok((report, table))
}

/// Alphabet state for a polarization label pair, e.g. `"DH"`.
pub fn alphabet_input(label: &str) -> Result<PureState> {
    let pols = crate::tomo::parse_label(label)?;
    Ok(pols[0].state().tensor(&pols[1].state()).with_label(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{random_channel_2q, random_unital_channel_2q, random_unitary_process};
    use crate::qcore::{haar_random_unitary, max_abs};
    use crate::tomo::{apply_noise, simulate_counts, CountNoise, NoiseSpec};

    fn bell() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(crate::qcore::CVector::from_vec(vec![
            c(s, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(s, 0.0),
        ]))
        .unwrap()
        .to_density()
    }

    #[test]
    fn process_fidelity_examples() {
        let cnot = ProcessMatrix::cnot();
        assert!((process_fidelity(&cnot, &cnot).unwrap() - 1.0).abs() < 1e-12);
        let id = ProcessMatrix::identity_2q();
        assert!((process_fidelity(&cnot, &id).unwrap() - 0.25).abs() < 1e-12);
        let other = crate::process::to_cnot_basis(&cnot).unwrap();
        assert!(matches!(
            process_fidelity(&cnot, &other),
            Err(QptError::InvalidArgument(_))
        ));
        let depol = ProcessMatrix::fully_depolarizing_2q();
        assert!(process_fidelity(&depol, &cnot).is_err());
    }

    #[test]
    fn process_fidelity_of_unitaries() {
        let mut rng = Rng::seed_from(1);
        for _ in 0..50 {
            let u = haar_random_unitary(4, &mut rng);
            let v = haar_random_unitary(4, &mut rng);
            let pu = chi_from_unitary(&UnitaryGate::new(u.clone()).unwrap(), pauli_2q()).unwrap();
            let pv = chi_from_unitary(&UnitaryGate::new(v.clone()).unwrap(), pauli_2q()).unwrap();
            let expect = trace(&(u.adjoint() * v)).norm_sqr() / 16.0;
            assert!((process_fidelity(&pu, &pv).unwrap() - expect).abs() < 1e-10);
            assert!((process_fidelity_general(&pu, &pv).unwrap() - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn general_fidelity_is_one_on_itself() {
        let mut rng = Rng::seed_from(2);
        let chi = random_channel_2q(5, &mut rng).unwrap();
        assert!((process_fidelity_general(&chi, &chi).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gate_fidelity_and_distance_examples() {
        assert!((average_gate_fidelity(0.93, 4).unwrap() - 0.944).abs() < 1e-12);
        assert!((average_gate_fidelity(0.87, 4).unwrap() - 0.896).abs() < 1e-12);
        assert_eq!(average_gate_fidelity(1.0, 4).unwrap(), 1.0);
        assert!(average_gate_fidelity(1.1, 4).is_err());
        assert!(average_gate_fidelity(0.5, 1).is_err());

        let (_, bound) = cp_distance(0.93).unwrap();
        assert!((bound - 0.07).abs() < 1e-12);
        assert_eq!(cp_distance(1.0).unwrap(), (0.0, 0.0));
        assert_eq!(cp_distance(0.0).unwrap(), (1.0, 1.0));
        assert!(cp_distance(-0.1).is_err());
    }

    #[test]
    fn cp_distance_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let (cp, _) = cp_distance(i as f64 / 1000.0).unwrap();
            assert!(cp < prev);
            prev = cp;
        }
    }

    #[test]
    fn purity_examples() {
        assert!((average_output_purity(&ProcessMatrix::cnot()) - 1.0).abs() < 1e-12);
        assert!(
            (average_output_purity(&ProcessMatrix::fully_depolarizing_2q()) - 0.25).abs() < 1e-12
        );
        let mut rng = Rng::seed_from(3);
        for _ in 0..10 {
            assert!((average_output_purity(&random_unitary_process(&mut rng)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn purity_formula_matches_sampling() {
        let mut rng = Rng::seed_from(4);
        for i in 0..3 {
            let chi = random_unital_channel_2q(2 + i, &mut rng).unwrap();
            let mc = monte_carlo_purity(&chi, 20_000, &Rng::seed_from(i as u64)).unwrap();
            assert!((mc - average_output_purity(&chi)).abs() < 0.01, "{mc}");
        }
    }

    #[test]
    fn gate_fidelity_identity_holds_by_sampling() {
        let mut rng = Rng::seed_from(5);
        let cnot = UnitaryGate::cnot();
        let ideal = ProcessMatrix::cnot();
        for i in 0..5 {
            let chi = random_channel_2q(1 + 3 * i, &mut rng).unwrap();
            let mc =
                monte_carlo_gate_fidelity(&chi, &cnot, 10_000, &Rng::seed_from(i as u64)).unwrap();
            let formula =
                average_gate_fidelity(process_fidelity(&ideal, &chi).unwrap(), 4).unwrap();
            assert!((mc - formula).abs() < 0.01, "{mc} vs {formula}");
        }
    }

    #[test]
    fn tangle_examples() {
        assert!((tangle(&bell()).unwrap() - 1.0).abs() < 1e-9);
        assert!(
            tangle(&alphabet_input("DH").unwrap().to_density())
                .unwrap()
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn entangling_capability_examples() {
        let rng = Rng::seed_from(6);
        assert!(
            (entangling_capability(&ProcessMatrix::cnot(), 1, &rng).unwrap() - 1.0).abs() < 1e-9
        );
        assert!(
            entangling_capability(&ProcessMatrix::identity_2q(), 50, &rng)
                .unwrap()
                .abs()
                < 1e-9
        );
        assert!(entangling_capability(&ProcessMatrix::cnot(), 0, &rng).is_err());
    }

    #[test]
    fn scatter_cnot_is_perfect() {
        let table = scatter_sweep(
            &ProcessMatrix::cnot(),
            &UnitaryGate::cnot(),
            500,
            &Rng::seed_from(7),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 500);
        let (mut neg, mut pos) = (false, false);
        for r in &table.rows {
            assert!((r.fidelity - 1.0).abs() < 1e-9);
            assert!(r.entropy_added.abs() < 1e-9);
            assert!((-1.0..=1.0).contains(&r.delta_tangle));
            assert!((r.delta_tangle - (r.output_tangle - r.input_tangle)).abs() < 1e-15);
            neg |= r.delta_tangle < -1e-3;
            pos |= r.delta_tangle > 1e-3;
        }
        assert!(neg && pos);
    }

    #[test]
    fn scatter_depolarizing() {
        let table = scatter_sweep(
            &ProcessMatrix::fully_depolarizing_2q(),
            &UnitaryGate::cnot(),
            200,
            &Rng::seed_from(8),
        )
        .unwrap();
        for r in &table.rows {
            assert!((r.entropy_added - 1.0).abs() < 1e-9);
            assert!((r.delta_tangle + r.input_tangle).abs() < 1e-9);
        }
    }

    #[test]
    fn scatter_is_deterministic() {
        let mut rng = Rng::seed_from(9);
        let chi = random_channel_2q(3, &mut rng).unwrap();
        let a = scatter_sweep(&chi, &UnitaryGate::cnot(), 300, &Rng::seed_from(1)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| {
            scatter_sweep(&chi, &UnitaryGate::cnot(), 300, &Rng::seed_from(1)).unwrap()
        });
        assert_eq!(a, b);
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.entropy_added));
            assert!((0.0..=1.0).contains(&r.fidelity));
        }
    }

    #[test]
    fn predict_output_examples() {
        let dh = alphabet_input("DH").unwrap();
        let out = predict_output(&ProcessMatrix::identity_2q(), &dh).unwrap();
        assert!(max_abs(&(out.matrix() - dh.projector())) < 1e-12);
        let out = predict_output(&ProcessMatrix::cnot(), &dh).unwrap();
        assert!(max_abs(&(out.matrix() - bell().matrix())) < 1e-12);
        let full = apply_noise(
            &ProcessMatrix::cnot(),
            &NoiseSpec::new(1.0, 0.0, CountNoise::None).unwrap(),
        )
        .unwrap();
        let out = predict_output(&full, &dh).unwrap();
        assert!(max_abs(&(out.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-12);
    }

    #[test]
    fn clifford_detection() {
        let action = clifford_action(&UnitaryGate::cnot()).unwrap();
        // CNOT: XI -> XX, IZ -> ZZ
        assert_eq!(action[4], (5, 1.0));
        assert_eq!(action[3], (15, 1.0));
        let mut rng = Rng::seed_from(10);
        let u = UnitaryGate::new(haar_random_unitary(4, &mut rng)).unwrap();
        assert!(matches!(clifford_action(&u), Err(QptError::Unsupported(_))));
    }

    #[test]
    fn direct_fidelity_noiseless_examples() {
        let gate = UnitaryGate::cnot();
        let data = simulate_counts(
            &ProcessMatrix::cnot(),
            1000.0,
            &NoiseSpec::noiseless(),
            &Rng::seed_from(0),
        )
        .unwrap();
        let est = direct_process_fidelity(&data, &gate).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-9);
        let big = simulate_counts(
            &ProcessMatrix::cnot(),
            4000.0,
            &NoiseSpec::noiseless(),
            &Rng::seed_from(0),
        )
        .unwrap();
        let est4 = direct_process_fidelity(&big, &gate).unwrap();
        assert!((est.std_error / est4.std_error - 2.0).abs() < 1e-9);

        let depol = ProcessMatrix::fully_depolarizing_2q();
        let data =
            simulate_counts(&depol, 1.6e9, &NoiseSpec::noiseless(), &Rng::seed_from(0)).unwrap();
        let est = direct_process_fidelity(&data, &gate).unwrap();
        assert!((est.estimate - 1.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn direct_fidelity_agrees_with_full_formula() {
        let mut rng = Rng::seed_from(11);
        let ideal = ProcessMatrix::cnot();
        for i in 0..10 {
            let chi = random_channel_2q(1 + i, &mut rng).unwrap();
            let data =
                simulate_counts(&chi, 1e10, &NoiseSpec::noiseless(), &Rng::seed_from(0)).unwrap();
            let est = direct_process_fidelity(&data, &UnitaryGate::cnot()).unwrap();
            let full = process_fidelity(&ideal, &chi).unwrap();
            assert!((est.estimate - full).abs() < 1e-8);
        }
    }

    #[test]
    fn direct_fidelity_missing_settings() {
        let data = simulate_counts(
            &ProcessMatrix::cnot(),
            100.0,
            &NoiseSpec::noiseless(),
            &Rng::seed_from(0),
        )
        .unwrap();
        let required = required_settings(&UnitaryGate::cnot()).unwrap();
        assert!(required.len() < 256);
        let drop = required[0].clone();
        let partial: Vec<CountRecord> = data
            .records()
            .iter()
            .filter(|r| (r.input.clone(), r.analyzer.clone()) != drop)
            .cloned()
            .collect();
        match direct_process_fidelity_records(&partial, 100.0, &UnitaryGate::cnot()) {
            Err(QptError::MissingSettings(m)) => assert_eq!(m, vec![drop]),
            other => panic!("unexpected {other:?}"),
        }
        // dropping an unused setting is fine
        let unused = (0..256)
            .map(|i| (label_for_index(i / 16), label_for_index(i % 16)))
            .find(|s| !required.contains(s))
            .unwrap();
        let partial: Vec<CountRecord> = data
            .records()
            .iter()
            .filter(|r| (r.input.clone(), r.analyzer.clone()) != unused)
            .cloned()
            .collect();
        assert!(direct_process_fidelity_records(&partial, 100.0, &UnitaryGate::cnot()).is_ok());
    }

    #[test]
    fn metrics_report_ideal_cnot() {
        let (report, table) =
            metrics_report(&ProcessMatrix::cnot(), &UnitaryGate::cnot(), 200, 3).unwrap();
        assert!((report.process_fidelity - 1.0).abs() < 1e-12);
        assert!((report.average_purity - 1.0).abs() < 1e-12);
        assert!((report.entangling_capability - 1.0).abs() < 1e-9);
        assert!((report.min_output_fidelity - 1.0).abs() < 1e-9);
        assert_eq!(table.sample_count, 200);
        assert_eq!(report.sweep_seed, 3);
    }
}
