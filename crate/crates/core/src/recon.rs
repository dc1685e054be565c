//! Process reconstruction from coincidence counts.
//!
//! Two estimators are provided:
//!
//! - [`linear_inversion`] solves the linear forward model exactly. Under shot
//!   noise the result is usually not positive semidefinite and is flagged
//!   [`Constraint::Unconstrained`].
//! - [`mle_reconstruct`] minimizes a penalized least-squares objective over
//!   `chi = T^dagger T` with `T` lower triangular, so every candidate is
//!   positive semidefinite. Trace preservation is enforced by a quadratic
//!   penalty whose weight is escalated until the defect is small.
//!
//! The objective for counts `c_ab` with `C` pairs per setting is
//!
//! ```text
//! f(t) = sum_ab (c_ab - C p_ab(t))^2 / C + lambda sum_k |g_k(t) - delta_k0|^2
//! g_k  = (1/d) Tr(A_k sum_mn chi_mn A_n^dagger A_m)
//! ```
//!
//! where `p_ab(t) = <psi_b| E(|phi_a><phi_a|) |psi_b>` and the `g_k` are the
//! Pauli components of the trace-preservation operator, scaled so a TP map
//! gives exactly `delta_k0`.

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, LU};
use rayon::prelude::*;

use crate::error::{invalid, QptError, Result};
use crate::optim::{minimize, LbfgsConfig};
use crate::process::{cp_defect, pauli_2q, Constraint, OperatorBasis, ProcessMatrix};
use crate::qcore::{c, hermitian_eigen, hermitize, trace, CMatrix, CVector, Rng, C64};
use crate::tomo::{
    predict_probability, setting_vector, standard_settings, CountRecord, CountSet, N_SETTINGS,
};

/// Side of `chi` (and of `T`) for two qubits.
const N: usize = 16;
/// Length of the real parameter vector.
pub const TVEC_LEN: usize = N * N;

/// Precomputed linear maps of the two-qubit forward model in the Pauli basis.
pub struct ForwardModel {
    basis: Arc<OperatorBasis>,
    /// Row `i` is `v_i^dagger`, with `p_i = v_i^dagger chi v_i`.
    rows: CMatrix,
    /// `W_k` with `g_k = Tr(chi W_k)`.
    constraint_maps: Vec<CMatrix>,
    design_lu: LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("basis", &self.basis.name())
            .finish_non_exhaustive()
    }
}

impl ForwardModel {
    pub fn standard() -> &'static ForwardModel {
        static MODEL: OnceLock<ForwardModel> = OnceLock::new();
        MODEL.get_or_init(|| ForwardModel::build(pauli_2q()))
    }

    fn build(basis: Arc<OperatorBasis>) -> Self {
        let settings = standard_settings();
        let mut rows = CMatrix::zeros(N_SETTINGS, N);
        for (i, s) in settings.iter().enumerate() {
            let v = setting_vector(&basis, s);
            for m in 0..N {
                rows[(i, m)] = v[m].conj();
            }
        }
        let d = basis.dim() as f64;
        let elements = basis.elements();
        let constraint_maps = elements
            .iter()
            .map(|a_k| {
                // (W_k)_nm = (1/d) Tr(A_k A_n^dagger A_m)
                CMatrix::from_fn(N, N, |n, m| {
                    let prod = a_k * elements[n].adjoint() * &elements[m];
                    trace(&prod) / d
                })
            })
            .collect();
        // B[i, m*N + n] = conj(v_im) v_in
        let design = CMatrix::from_fn(N_SETTINGS, N * N, |i, mn| {
            let (m, n) = (mn / N, mn % N);
            rows[(i, m)] * rows[(i, n)].conj()
        });
        Self {
            basis,
            rows,
            constraint_maps,
            design_lu: design.lu(),
        }
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        &self.basis
    }

    /// Predicted probabilities for all settings (no clamping).
    pub fn probabilities(&self, chi: &CMatrix) -> Vec<f64> {
        // p_i = row_i chi row_i^dagger
        let tmp = &self.rows * chi;
        (0..N_SETTINGS)
            .map(|i| {
                (0..N)
                    .map(|m| tmp[(i, m)] * self.rows[(i, m)].conj())
                    .sum::<C64>()
                    .re
            })
            .collect()
    }

    /// Components `g_k = (1/d) Tr(A_k sum_mn chi_mn A_n^dagger A_m)`.
    pub fn tp_components(&self, chi: &CMatrix) -> Vec<C64> {
        self.constraint_maps
            .iter()
            .map(|w| trace_product(chi, w))
            .collect()
    }
}

/// `Tr(a b)` without forming the product.
fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Real parameter vector for `chi = T^dagger T`.
///
/// Layout: the 16 diagonal entries of `T`, then the real and imaginary part
/// of each strictly-lower entry `T_ij` (row-major, `i > j`).
#[derive(Debug, Clone, PartialEq)]
pub struct TVec(Vec<f64>);

impl TVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != TVEC_LEN {
            return invalid(format!(
                "t vector must have {TVEC_LEN} entries, got {}",
                values.len()
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; TVEC_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Lower-triangular factor `T`.
    pub fn factor(&self) -> CMatrix {
        tvec_to_factor(&self.0)
    }

    /// Parameters of a lower-triangular `T` (upper part ignored, diagonal taken as real part).
    pub fn from_factor(t: &CMatrix) -> Self {
        let mut v = Vec::with_capacity(TVEC_LEN);
        for i in 0..N {
            v.push(t[(i, i)].re);
        }
        for i in 1..N {
            for j in 0..i {
                v.push(t[(i, j)].re);
                v.push(t[(i, j)].im);
            }
        }
        Self(v)
    }
}

fn tvec_to_factor(t: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(N, N);
    for i in 0..N {
        m[(i, i)] = c(t[i], 0.0);
    }
    let mut k = N;
    for i in 1..N {
        for j in 0..i {
            m[(i, j)] = c(t[k], t[k + 1]);
            k += 2;
        }
    }
    m
}

/// `chi = T^dagger T` as a raw matrix.
fn chi_matrix(t: &[f64]) -> CMatrix {
    let tm = tvec_to_factor(t);
    tm.adjoint() * tm
}

/// `T^dagger T` in the two-qubit Pauli basis. Positive semidefinite for every `t`;
/// flagged physical only when it is also trace preserving.
pub fn chi_from_tvec(t: &TVec) -> ProcessMatrix {
    ProcessMatrix::new(chi_matrix(t.as_slice()), pauli_2q()).expect("T^dagger T is Hermitian")
}

/// Factorizes a positive-definite `chi` as `T^dagger T` with `T` lower triangular.
pub fn tvec_from_chi(chi: &CMatrix) -> Result<TVec> {
    if chi.nrows() != N || chi.ncols() != N {
        return invalid("tvec_from_chi expects a 16x16 matrix");
    }
    // J chi J = L L^dagger  =>  chi = (J L J)(J L J)^dagger, and T = (J L J)^dagger
    let flipped = CMatrix::from_fn(N, N, |i, j| chi[(N - 1 - i, N - 1 - j)]);
    let chol = Cholesky::new(hermitize(&flipped))
        .ok_or_else(|| QptError::InvalidArgument("matrix is not positive definite".into()))?;
    let l = chol.l();
    let upper = CMatrix::from_fn(N, N, |i, j| l[(N - 1 - i, N - 1 - j)]);
    Ok(TVec::from_factor(&upper.adjoint()))
}

fn check_data(data: &CountSet) -> Result<()> {
    if data.ordered_counts().len() != N_SETTINGS {
        return invalid("count set must cover all 256 settings");
    }
    Ok(())
}

/// Values and gradient of the objective pieces at `t`.
struct Evaluation {
    data_term: f64,
    penalty_term: f64,
}

/// Objective value; when `grad` is given it receives `df/dt`.
fn evaluate(
    model: &ForwardModel,
    t: &[f64],
    counts: &[f64],
    total_pairs: f64,
    lambda: f64,
    grad: Option<&mut [f64]>,
) -> Evaluation {
    let tm = tvec_to_factor(t);
    let chi = tm.adjoint() * &tm;
    let probs = model.probabilities(&chi);
    let residuals: Vec<f64> = counts
        .iter()
        .zip(&probs)
        .map(|(c, p)| c - total_pairs * p)
        .collect();
    let data_term = residuals.iter().map(|r| r * r).sum::<f64>() / total_pairs;

    let comps = model.tp_components(&chi);
    let errors: Vec<C64> = comps
        .iter()
        .enumerate()
        .map(|(k, g)| if k == 0 { g - c(1.0, 0.0) } else { *g })
        .collect();
    let penalty_term = errors.iter().map(|e| e.norm_sqr()).sum::<f64>();

    if let Some(grad) = grad {
        // df = Re Tr(dchi H), H = sum_i (-2 r_i) v_i v_i^dagger + 2 lambda sum_k conj(e_k) W_k
        let weights =
            CVector::from_iterator(N_SETTINGS, residuals.iter().map(|r| c(-2.0 * r, 0.0)));
        let weighted_rows = CMatrix::from_fn(N_SETTINGS, N, |i, m| model.rows[(i, m)] * weights[i]);
        // sum_i w_i v_i v_i^dagger = rows^dagger diag(w) rows, with rows_i = v_i^dagger
        let mut h = model.rows.adjoint() * weighted_rows;
        for (w, e) in model.constraint_maps.iter().zip(&errors) {
            h += w * (e.conj() * (2.0 * lambda));
        }
        let h = hermitize(&h);
        let g = &tm * h;
        for i in 0..N {
            grad[i] = 2.0 * g[(i, i)].re;
        }
        let mut k = N;
        for i in 1..N {
            for j in 0..i {
                grad[k] = 2.0 * g[(i, j)].re;
                grad[k + 1] = 2.0 * g[(i, j)].im;
                k += 2;
            }
        }
    }

    Evaluation {
        data_term,
        penalty_term: lambda * penalty_term,
    }
}

fn counts_as_f64(data: &CountSet) -> Vec<f64> {
    data.ordered_counts().iter().map(|&c| c as f64).collect()
}

/// Penalized least-squares objective `f(t)`.
pub fn objective_f(t: &TVec, data: &CountSet, lambda: f64) -> Result<f64> {
    let (d, p) = objective_terms(t, data)?;
    if !(lambda >= 0.0) {
        return invalid("lambda must be nonnegative");
    }
    Ok(d + lambda * p)
}

/// `(data term, unweighted penalty)` at `t`.
pub fn objective_terms(t: &TVec, data: &CountSet) -> Result<(f64, f64)> {
    check_data(data)?;
    let e = evaluate(
        ForwardModel::standard(),
        t.as_slice(),
        &counts_as_f64(data),
        data.total_pairs(),
        1.0,
        None,
    );
    Ok((e.data_term, e.penalty_term))
}

/// Objective and its gradient with respect to `t`.
pub fn objective_gradient(t: &TVec, data: &CountSet, lambda: f64) -> Result<(f64, Vec<f64>)> {
    check_data(data)?;
    let mut grad = vec![0.0; TVEC_LEN];
    let e = evaluate(
        ForwardModel::standard(),
        t.as_slice(),
        &counts_as_f64(data),
        data.total_pairs(),
        lambda,
        Some(&mut grad),
    );
    Ok((e.data_term + e.penalty_term, grad))
}

/// Exact solution of the linear forward model for the measured frequencies.
pub fn linear_inversion(data: &CountSet) -> Result<ProcessMatrix> {
    check_data(data)?;
    let model = ForwardModel::standard();
    let freqs = CVector::from_iterator(
        N_SETTINGS,
        data.frequencies().into_iter().map(|f| c(f, 0.0)),
    );
    let x = model
        .design_lu
        .solve(&freqs)
        .ok_or_else(|| QptError::Internal("tomographic design matrix is singular".into()))?;
    let chi = CMatrix::from_row_slice(N, N, x.as_slice());
    ProcessMatrix::unconstrained(hermitize(&chi), model.basis().clone())
}

/// Nearest trace-one PSD matrix by eigenvalue clipping.
pub fn project_psd_unit_trace(chi: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(chi);
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let n = chi.nrows();
    if total <= 0.0 {
        return CMatrix::identity(n, n).unscale(n as f64);
    }
    let mut scaled = vectors.clone();
    for (k, v) in clipped.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v / total);
    }
    hermitize(&(&scaled * vectors.adjoint()))
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Initial penalty weight; `None` picks ten times the data term at the starting point.
    pub lambda: Option<f64>,
    pub restarts: usize,
    /// Iteration cap per penalty stage and restart.
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
    pub tp_tolerance: f64,
    pub max_escalations: usize,
    pub lambda_growth: f64,
    /// Standard deviation of the Gaussian perturbation applied to `t` for restarts after the first.
    pub perturbation: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            restarts: 4,
            max_iterations: 500,
            gradient_tolerance: 1e-9,
            seed: 0,
            tp_tolerance: 1e-3,
            max_escalations: 5,
            lambda_growth: 10.0,
            perturbation: 0.05,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("lambda must be positive, got {l}"));
            }
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return invalid("restarts and max_iterations must be positive");
        }
        if !(self.gradient_tolerance > 0.0)
            || !(self.tp_tolerance > 0.0)
            || !(self.lambda_growth > 1.0)
        {
            return invalid("tolerances must be positive and lambda_growth > 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub chi: ProcessMatrix,
    pub tvec: TVec,
    /// Objective at the returned point, with the final penalty weight.
    pub objective_value: f64,
    pub data_term: f64,
    pub lambda: f64,
    pub tp_defect_final: f64,
    pub cp_defect_final: f64,
    /// L-BFGS iterations summed over penalty stages for the winning restart.
    pub iterations_used: usize,
    pub restart_index_of_best: usize,
    pub escalations: usize,
}

struct RestartState {
    t: Vec<f64>,
    value: f64,
    iterations: usize,
}

/// Starting points: the PSD projection of the linear-inversion estimate and
/// Gaussian perturbations of it (restart `r` uses substream `r` of the seed).
pub fn initial_points(data: &CountSet, config: &FitConfig) -> Result<Vec<TVec>> {
    let linear = linear_inversion(data)?;
    let projected = project_psd_unit_trace(linear.chi());
    // slight full-rank admixture so the factorization exists
    let eps = 1e-6;
    let start = projected.scale(1.0 - eps) + CMatrix::identity(N, N).scale(eps / N as f64);
    let base = tvec_from_chi(&start)?;
    let rng = Rng::seed_from(config.seed);
    Ok((0..config.restarts)
        .map(|r| {
            if r == 0 {
                base.clone()
            } else {
                let mut sub = rng.fork(r as u64);
                TVec(
                    base.0
                        .iter()
                        .map(|v| v + config.perturbation * sub.standard_normal())
                        .collect(),
                )
            }
        })
        .collect())
}

/// Penalized maximum-likelihood reconstruction with multi-start and penalty escalation.
///
/// Every restart is optimized at the current penalty weight; if the best
/// restart's trace-preservation defect exceeds `tp_tolerance`, the weight is
/// multiplied by `lambda_growth` and all restarts continue from where they
/// stopped. Ties between restarts go to the lowest index.
pub fn mle_reconstruct(data: &CountSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_data(data)?;
    let model = ForwardModel::standard();
    let counts = counts_as_f64(data);
    let total = data.total_pairs();
    let starts = initial_points(data, config)?;

    let mut lambda = match config.lambda {
        Some(l) => l,
        None => {
            let e = evaluate(model, starts[0].as_slice(), &counts, total, 0.0, None);
            10.0 * e.data_term.max(1.0)
        }
    };
    let lbfgs = LbfgsConfig {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsConfig::default()
    };

    let mut states: Vec<RestartState> = starts
        .iter()
        .map(|t| RestartState {
            t: t.0.clone(),
            value: f64::INFINITY,
            iterations: 0,
        })
        .collect();
    let mut escalations = 0;
    loop {
        states = states
            .into_par_iter()
            .map(|st| {
                let res = minimize(
                    |x, g| {
                        let e = evaluate(model, x, &counts, total, lambda, Some(g));
                        e.data_term + e.penalty_term
                    },
                    &st.t,
                    &lbfgs,
                );
                RestartState {
                    t: res.x,
                    value: res.value,
                    iterations: st.iterations + res.iterations,
                }
            })
            .collect();
        let best = best_index(&states);
        let chi = chi_matrix(&states[best].t);
        let defect = ProcessMatrix::trusted(chi, pauli_2q(), Constraint::Unconstrained).tp_defect();
        if defect <= config.tp_tolerance || escalations >= config.max_escalations {
            break;
        }
        lambda *= config.lambda_growth;
        escalations += 1;
    }

    let mut best = best_index(&states);
    let mut best_t = states[best].t.clone();
    let mut best_value = states[best].value;
    // never return something worse than a starting point under the final weight
    for (r, s) in starts.iter().enumerate() {
        let e = evaluate(model, s.as_slice(), &counts, total, lambda, None);
        if e.data_term + e.penalty_term < best_value {
            best = r;
            best_value = e.data_term + e.penalty_term;
            best_t = s.0.clone();
        }
    }

    let tvec = TVec(best_t);
    let final_eval = evaluate(model, tvec.as_slice(), &counts, total, lambda, None);
    let raw = chi_matrix(tvec.as_slice());
    let probe = ProcessMatrix::trusted(raw.clone(), pauli_2q(), Constraint::Unconstrained);
    let tp = probe.tp_defect();
    let cp = cp_defect(&probe);
    let constraint = if tp <= config.tp_tolerance {
        Constraint::Physical
    } else {
        Constraint::Unconstrained
    };
    let result = FitResult {
        chi: ProcessMatrix::trusted(raw, pauli_2q(), constraint),
        tvec,
        objective_value: final_eval.data_term + final_eval.penalty_term,
        data_term: final_eval.data_term,
        lambda,
        tp_defect_final: tp,
        cp_defect_final: cp,
        iterations_used: states[best].iterations,
        restart_index_of_best: best,
        escalations,
    };
    if tp > config.tp_tolerance {
        return Err(QptError::Convergence(Box::new(result)));
    }
    Ok(result)
}

fn best_index(states: &[RestartState]) -> usize {
    let mut best = 0;
    for (i, s) in states.iter().enumerate() {
        if s.value < states[best].value {
            best = i;
        }
    }
    best
}

/// Residual statistics of a fit.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `c_ab / C - p_ab(chi)` in standard-setting order.
    pub deltas: Vec<f64>,
    /// Width of the Gaussian `amplitude * exp(-delta^2 / sigma^2)` fitted to the histogram.
    pub sigma: f64,
    pub amplitude: f64,
    pub histogram: Histogram,
    /// Set when all deltas coincide and no width can be fitted.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub bin_width: f64,
}

pub const RESIDUAL_BINS: usize = 21;

pub fn residuals(chi: &ProcessMatrix, data: &CountSet) -> Result<ResidualReport> {
    check_data(data)?;
    let freqs = data.frequencies();
    let deltas = standard_settings()
        .iter()
        .zip(&freqs)
        .map(|(s, f)| Ok(f - predict_probability(chi, s)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(residual_report(deltas))
}

pub fn residual_report(deltas: Vec<f64>) -> ResidualReport {
    let histogram = histogram(&deltas, RESIDUAL_BINS);
    let spread = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mean = deltas.iter().sum::<f64>() / deltas.len().max(1) as f64;
    let identical = deltas.iter().all(|d| (d - mean).abs() <= 1e-15);
    if spread == 0.0 || identical {
        let amplitude = histogram.counts.iter().copied().max().unwrap_or(0) as f64;
        return ResidualReport {
            deltas,
            sigma: 0.0,
            amplitude,
            histogram,
            degenerate: true,
        };
    }
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / deltas.len() as f64;
    let (amplitude, sigma) = fit_gaussian(&histogram, (2.0 * var).sqrt());
    ResidualReport {
        deltas,
        sigma,
        amplitude,
        histogram,
        degenerate: false,
    }
}

/// Uniform bins over `[-max|x|, max|x|]`.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let spread = values.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut counts = vec![0usize; bins];
    if spread == 0.0 {
        // everything at zero: single central bin, unit width placeholder
        counts[bins / 2] = values.len();
        let width = 2.0 / bins as f64;
        let centers = (0..bins).map(|b| -1.0 + (b as f64 + 0.5) * width).collect();
        return Histogram {
            centers,
            counts,
            bin_width: 0.0,
        };
    }
    let width = 2.0 * spread / bins as f64;
    for v in values {
        let idx = (((v + spread) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let centers = (0..bins)
        .map(|b| -spread + (b as f64 + 0.5) * width)
        .collect();
    Histogram {
        centers,
        counts,
        bin_width: width,
    }
}

/// Levenberg-Marquardt fit of `a exp(-x^2/s^2)` to histogram bars.
fn fit_gaussian(h: &Histogram, sigma0: f64) -> (f64, f64) {
    let xs = &h.centers;
    let ys: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let sse = |a: f64, s: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| (y - a * (-(x * x) / (s * s)).exp()).powi(2))
            .sum()
    };
    let mut a = ys.iter().cloned().fold(0.0, f64::max);
    let mut s = sigma0.max(h.bin_width * 0.5);
    let mut mu = 1e-3;
    let mut current = sse(a, s);
    for _ in 0..200 {
        // Jacobian of the model wrt (a, s)
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (x, y) in xs.iter().zip(&ys) {
            let e = (-(x * x) / (s * s)).exp();
            let model = a * e;
            let j = [e, a * e * 2.0 * x * x / (s * s * s)];
            let r = y - model;
            for p in 0..2 {
                jtr[p] += j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let m00 = jtj[0][0] * (1.0 + mu);
            let m11 = jtj[1][1] * (1.0 + mu);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < 1e-300 {
                mu *= 10.0;
                continue;
            }
            let da = (m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let ds = (m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, ns) = (a + da, (s + ds).abs().max(1e-300));
            let trial = sse(na, ns);
            if trial < current {
                let rel = (current - trial) / current.max(1e-300);
                a = na;
                s = ns;
                current = trial;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, s)
}

/// Poisson bootstrap of the maximum-likelihood fit: each replicate redraws
/// every count as `Poisson(c_ab)` and refits. Replicate `i` uses substream `i`
/// of `seed`, and the fit inside it uses `config` unchanged.
pub fn bootstrap(
    data: &CountSet,
    config: &FitConfig,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    use rand_distr::{Distribution, Poisson};
    if replicates < 2 {
        return invalid("bootstrap needs at least two replicates");
    }
    let rng = Rng::seed_from(seed);
    let fits = (0..replicates)
        .map(|i| {
            let mut sub = rng.fork(i as u64);
            let records: Vec<CountRecord> = data
                .records()
                .iter()
                .map(|r| {
                    let counts = if r.counts == 0 {
                        0
                    } else {
                        Poisson::new(r.counts as f64)
                            .map(|p| p.sample(&mut sub) as u64)
                            .unwrap_or(r.counts)
                    };
                    CountRecord {
                        counts,
                        ..r.clone()
                    }
                })
                .collect();
            let resampled = CountSet::new(records, data.total_pairs())?;
            match mle_reconstruct(&resampled, config) {
                Ok(fit) => Ok(fit.chi.chi().clone()),
                Err(QptError::Convergence(best)) => Ok(best.chi.chi().clone()),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<CMatrix>>>()?;
    let count = fits.len() as f64;
    let mean = fits
        .iter()
        .fold(CMatrix::zeros(N, N), |acc, m| acc + m)
        .unscale(count);
    let mut std_re = nalgebra::DMatrix::<f64>::zeros(N, N);
    let mut std_im = nalgebra::DMatrix::<f64>::zeros(N, N);
    for m in &fits {
        for i in 0..N {
            for j in 0..N {
                let d = m[(i, j)] - mean[(i, j)];
                std_re[(i, j)] += d.re * d.re;
                std_im[(i, j)] += d.im * d.im;
            }
        }
    }
    std_re.apply(|v| *v = (*v / (count - 1.0)).sqrt());
    std_im.apply(|v| *v = (*v / (count - 1.0)).sqrt());
    Ok(BootstrapSummary {
        mean,
        std_re,
        std_im,
        replicates,
    })
}

#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub mean: CMatrix,
    pub std_re: nalgebra::DMatrix<f64>,
    pub std_im: nalgebra::DMatrix<f64>,
    pub replicates: usize,
}
