use std::io::{Read, Write};

use num_complex::Complex64;
use qpt_core::metrics::{metrics_report, predict_output};
use qpt_core::process::{change_basis, cp_defect, pauli_2q, ProcessMatrix, PAULI_2Q};
use qpt_core::qcore::{pure_state_fidelity, purity, tangle, CVector, PureState, Rng};
use qpt_core::recon::{linear_inversion, mle_reconstruct, residuals as residual_report, FitConfig};
use qpt_core::tomo::{label_state, simulate_counts, CountNoise, NoiseSpec};
use qpt_core::QptError;
use serde::Serialize;

use crate::formats::{histogram_csv, read_json, scatter_csv, to_json, write_text, ChiFile, CountFile};
use crate::{
    CliError, GateSpec, Method, MetricsArgs, PredictArgs, ReconstructArgs, ResidualsArgs, SimulateArgs,
};

/// Rejects unconstrained processes unless the caller opted in.
fn physical_or_override(chi: ProcessMatrix, allow: bool) -> Result<ProcessMatrix, CliError> {
    if chi.is_physical() {
        Ok(chi)
    } else if allow {
        Ok(chi.assume_physical())
    } else {
        Err(CliError::Unphysical(
            "process matrix is flagged unconstrained; pass --allow-unphysical to use it anyway".into(),
        ))
    }
}

fn in_pauli_basis(chi: ProcessMatrix) -> Result<ProcessMatrix, CliError> {
    if chi.basis().name() == PAULI_2Q {
        Ok(chi)
    } else {
        Ok(change_basis(&chi, pauli_2q())?)
    }
}

fn load_chi(path: Option<&std::path::Path>, stdin: &mut dyn Read) -> Result<ProcessMatrix, CliError> {
    read_json::<ChiFile>(path, stdin)?.to_process()
}

pub fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let chi = match &args.gate {
        GateSpec::Cnot => ProcessMatrix::cnot(),
        GateSpec::Identity => ProcessMatrix::identity_2q(),
        GateSpec::ChiFile(path) => {
            let loaded = load_chi(Some(path), &mut std::io::empty())?;
            let loaded = physical_or_override(loaded, args.allow_unphysical)?;
            if loaded.dim() != 4 {
                return Err(CliError::Input("gate: only two-qubit processes can be simulated".into()));
            }
            in_pauli_basis(loaded)?
        }
    };
    let count_noise = args.noise.or(args.count_noise).unwrap_or(CountNoise::Poisson);
    let noise = NoiseSpec::new(args.depolarizing, args.dephasing, count_noise)?;
    let counts = simulate_counts(&chi, args.pairs, &noise, &Rng::seed_from(args.seed))?;
    write_text(args.out.as_deref(), &to_json(&CountFile::from_counts(&counts)), stdout)
}

pub fn reconstruct(
    args: &ReconstructArgs,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let data = read_json::<CountFile>(args.counts.as_deref(), stdin)?.to_counts()?;
    let mut summary = String::new();
    let (chi, failure) = match args.method {
        Method::Linear => {
            let chi = linear_inversion(&data)?;
            summary.push_str("method: linear\n");
            (chi, None)
        }
        Method::Mle => {
            let config = FitConfig {
                lambda: args.lambda,
                restarts: args.restarts,
                max_iterations: args.max_iterations,
                seed: args.seed,
                ..FitConfig::default()
            };
            let (fit, failure) = match mle_reconstruct(&data, &config) {
                Ok(fit) => (fit, None),
                Err(QptError::Convergence(best)) => {
                    let msg = format!(
                        "penalty schedule ended with tp_defect {:.3e} above {:.1e}; best fit written flagged unconstrained",
                        best.tp_defect_final, config.tp_tolerance
                    );
                    (*best, Some(msg))
                }
                Err(e) => return Err(e.into()),
            };
            summary.push_str(&format!(
                "method: mle\nobjective_value: {}\nlambda: {}\niterations: {}\nrestart_index_of_best: {}\n",
                fit.objective_value, fit.lambda, fit.iterations_used, fit.restart_index_of_best
            ));
            (fit.chi, failure)
        }
    };
    summary.push_str(&format!(
        "tp_defect: {:e}\ncp_defect: {:e}\nflag: {}\n",
        chi.tp_defect(),
        cp_defect(&chi),
        chi.constraint().as_str()
    ));
    write_text(args.out.as_deref(), &to_json(&ChiFile::from_process(&chi)), stdout)?;
    let _ = stderr.write_all(summary.as_bytes());
    match failure {
        Some(msg) => Err(CliError::Convergence(msg)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct MetricsOutput {
    process_fidelity: f64,
    average_gate_fidelity: f64,
    cp_distance: f64,
    error_prob_bound: f64,
    average_purity: f64,
    average_linear_entropy: f64,
    entangling_capability: f64,
    min_output_fidelity: f64,
    sweep_samples: usize,
    sweep_seed: u64,
}

pub fn metrics(args: &MetricsArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let chi = physical_or_override(load_chi(args.chi.as_deref(), stdin)?, args.allow_unphysical)?;
    if chi.dim() != 4 {
        return Err(CliError::Input("chi: the ideal gates are two-qubit; process dimension differs".into()));
    }
    let (r, table) = metrics_report(&chi, &args.ideal.gate(), args.sweep_samples, args.seed)?;
    if let Some(path) = &args.scatter {
        write_text(Some(path), &scatter_csv(&table), stdout)?;
    }
    let out = MetricsOutput {
        process_fidelity: r.process_fidelity,
        average_gate_fidelity: r.average_gate_fidelity,
        cp_distance: r.cp_distance,
        error_prob_bound: r.error_prob_bound,
        average_purity: r.average_purity,
        average_linear_entropy: r.average_linear_entropy,
        entangling_capability: r.entangling_capability,
        min_output_fidelity: r.min_output_fidelity,
        sweep_samples: r.sweep_samples,
        sweep_seed: r.sweep_seed,
    };
    write_text(None, &to_json(&out), stdout)
}

fn parse_amplitudes(text: &str) -> Result<PureState, CliError> {
    let amps = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<Complex64>().map_err(|_| CliError::Input(format!("amplitudes: cannot parse '{s}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if amps.len() != 4 {
        return Err(CliError::Input(format!("amplitudes: expected 4 entries, got {}", amps.len())));
    }
    PureState::new(CVector::from_vec(amps)).map_err(|e| CliError::Input(format!("amplitudes: {e}")))
}

#[derive(Serialize)]
struct PredictOutput {
    real: Vec<Vec<f64>>,
    imag: Vec<Vec<f64>>,
    purity: f64,
    tangle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
}

pub fn predict(args: &PredictArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let chi = physical_or_override(load_chi(args.chi.as_deref(), stdin)?, args.allow_unphysical)?;
    let input = match (&args.input, &args.amplitudes) {
        (Some(label), None) => label_state(label).map_err(|e| CliError::Input(format!("input: {e}")))?,
        (None, Some(list)) => parse_amplitudes(list)?,
        _ => return Err(CliError::Input("give exactly one of --input or --amplitudes".into())),
    };
    if input.dim() != chi.dim() {
        return Err(CliError::Input("input state dimension does not match the process".into()));
    }
    let out = predict_output(&chi, &input)?;
    let m = out.matrix();
    let grid = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    let fidelity = args.ideal.map(|g| pure_state_fidelity(&input.evolve(g.gate().matrix()), &out));
    let report = PredictOutput {
        real: grid(|z| z.re),
        imag: grid(|z| z.im),
        purity: purity(&out),
        tangle: tangle(&out)?,
        fidelity,
    };
    write_text(None, &to_json(&report), stdout)
}

#[derive(Serialize)]
struct ResidualOutput {
    sigma: f64,
    amplitude: f64,
    degenerate: bool,
    bins: usize,
    bin_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    deltas: Option<Vec<f64>>,
}

pub fn residuals(args: &ResidualsArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let chi = physical_or_override(load_chi(Some(&args.chi), &mut std::io::empty())?, args.allow_unphysical)?;
    let data = read_json::<CountFile>(args.counts.as_deref(), stdin)?.to_counts()?;
    if chi.dim() != 4 {
        return Err(CliError::Input("chi: dimension does not match the count data".into()));
    }
    let chi = in_pauli_basis(chi)?;
    let report = residual_report(&chi, &data)?;
    if let Some(path) = &args.histogram {
        write_text(Some(path), &histogram_csv(&report.histogram), stdout)?;
    }
    let out = ResidualOutput {
        sigma: report.sigma,
        amplitude: report.amplitude,
        degenerate: report.degenerate,
        bins: report.histogram.counts.len(),
        bin_width: report.histogram.bin_width,
        deltas: args.full.then(|| report.deltas.clone()),
    };
    write_text(None, &to_json(&out), stdout)
}
