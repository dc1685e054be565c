//! Operator bases and process matrices.
//!
//! A process is stored as its `chi` matrix over an operator basis `{A_m}`:
//! `E(rho) = sum_mn chi_mn A_m rho A_n^dagger`. The default basis is the
//! unnormalized tensor-product Pauli basis in lexicographic order (`II, IX,
//! IY, IZ, XI, ...`) with the control qubit as the left factor. With that
//! normalization a unitary process has a trace-one, rank-one `chi`.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, QptError, Result};
use crate::qcore::{
    c, hermitian_deviation, hermitian_eigenvalues, hermitize, kron, max_abs, trace, CMatrix,
    DensityMatrix, Rng, C64,
};

/// Tolerance on the trace-preservation defect for a `chi` to count as physical.
pub const PHYSICAL_TP_TOL: f64 = 1e-3;
/// Most negative eigenvalue tolerated in a physical `chi`.
pub const PHYSICAL_CP_TOL: f64 = 1e-8;

pub const PAULI_2Q: &str = "pauli-2q";
pub const CNOT_2Q: &str = "cnot-2q";

pub fn pauli_i() -> CMatrix {
    CMatrix::identity(2, 2)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

const PAULI_LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// A linearly independent set of `d^2` operators on a `d`-dimensional space.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    name: String,
    dim: usize,
    elements: Vec<CMatrix>,
    labels: Vec<String>,
    /// Inverse of the Hilbert-Schmidt Gram matrix, used for expansions.
    gram_inverse: CMatrix,
}

impl PartialEq for OperatorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.elements == other.elements
    }
}

impl OperatorBasis {
    pub fn new(
        name: impl Into<String>,
        elements: Vec<CMatrix>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let count = elements.len();
        let dim = elements.first().map(|e| e.nrows()).unwrap_or(0);
        if dim == 0 || count != dim * dim || labels.len() != count {
            return invalid(format!(
                "operator basis needs d^2 elements and labels, got {count} for d={dim}"
            ));
        }
        if elements
            .iter()
            .any(|e| e.nrows() != dim || e.ncols() != dim)
        {
            return invalid("operator basis elements must all be d x d");
        }
        let gram = CMatrix::from_fn(count, count, |j, k| hs_inner(&elements[j], &elements[k]));
        let gram_inverse = gram.try_inverse().ok_or_else(|| {
            QptError::InvalidArgument("operator basis is linearly dependent".into())
        })?;
        Ok(Self {
            name: name.into(),
            dim,
            elements,
            labels,
            gram_inverse,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements, `d^2`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &CMatrix {
        &self.elements[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Coefficients `u` with `op = sum_m u_m A_m`.
    pub fn expand(&self, op: &CMatrix) -> Vec<C64> {
        let overlaps = nalgebra::DVector::from_iterator(
            self.len(),
            self.elements.iter().map(|a| hs_inner(a, op)),
        );
        (&self.gram_inverse * overlaps).iter().copied().collect()
    }

    /// `sum_m coeffs_m A_m`.
    pub fn combine(&self, coeffs: &[C64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (a, &u) in self.elements.iter().zip(coeffs) {
            if u != C64::new(0.0, 0.0) {
                out += a * u;
            }
        }
        out
    }
}

/// `Tr(a^dagger b)`
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Tensor-product Pauli basis on `n_qubits`, lexicographic, element 0 the identity.
pub fn pauli_basis(n_qubits: usize) -> Result<OperatorBasis> {
    if n_qubits == 0 {
        return invalid("pauli_basis needs at least one qubit");
    }
    let singles = [pauli_i(), pauli_x(), pauli_y(), pauli_z()];
    let mut elements = vec![CMatrix::identity(1, 1)];
    let mut labels = vec![String::new()];
    for _ in 0..n_qubits {
        let mut next = Vec::with_capacity(elements.len() * 4);
        let mut next_labels = Vec::with_capacity(elements.len() * 4);
        for (e, l) in elements.iter().zip(&labels) {
            for (p, letter) in singles.iter().zip(PAULI_LETTERS) {
                next.push(kron(e, p));
                next_labels.push(format!("{l}{letter}"));
            }
        }
        elements = next;
        labels = next_labels;
    }
    let name = if n_qubits == 2 {
        PAULI_2Q.to_string()
    } else {
        format!("pauli-{n_qubits}q")
    };
    OperatorBasis::new(name, elements, labels)
}

/// Shared handle to the two-qubit Pauli basis.
pub fn pauli_2q() -> Arc<OperatorBasis> {
    static BASIS: OnceLock<Arc<OperatorBasis>> = OnceLock::new();
    BASIS
        .get_or_init(|| Arc::new(pauli_basis(2).expect("two-qubit Pauli basis")))
        .clone()
}

/// The basis `{U_CNOT A_m}` obtained by acting the ideal CNOT on each Pauli element.
pub fn cnot_2q() -> Arc<OperatorBasis> {
    static BASIS: OnceLock<Arc<OperatorBasis>> = OnceLock::new();
    BASIS
        .get_or_init(|| {
            let pauli = pauli_2q();
            let u = UnitaryGate::cnot();
            let elements = pauli.elements().iter().map(|a| u.matrix() * a).collect();
            let labels = pauli.labels().iter().map(|l| format!("CNOT*{l}")).collect();
            Arc::new(OperatorBasis::new(CNOT_2Q, elements, labels).expect("CNOT basis"))
        })
        .clone()
}

/// Looks up a named two-qubit basis as stored in files.
pub fn basis_by_name(name: &str) -> Result<Arc<OperatorBasis>> {
    match name {
        PAULI_2Q => Ok(pauli_2q()),
        CNOT_2Q => Ok(cnot_2q()),
        other => invalid(format!("unknown basis '{other}'")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryGate {
    matrix: CMatrix,
}

impl UnitaryGate {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("gate matrix must be square");
        }
        let n = matrix.nrows();
        let err = max_abs(&(matrix.adjoint() * &matrix - CMatrix::identity(n, n)));
        if err > 1e-10 {
            return invalid(format!("gate is not unitary (deviation {err:e})"));
        }
        Ok(Self { matrix })
    }

    /// Controlled-NOT with the left (most significant) qubit as control.
    pub fn cnot() -> Self {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        #[rustfmt::skip]
        let m = CMatrix::from_row_slice(4, 4, &[
            one, zero, zero, zero,
            zero, one, zero, zero,
            zero, zero, zero, one,
            zero, zero, one, zero,
        ]);
        Self { matrix: m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Physicality flag carried by every process matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Completely positive and trace preserving within [`PHYSICAL_CP_TOL`] / [`PHYSICAL_TP_TOL`].
    Physical,
    /// No positivity or trace-preservation guarantee, e.g. a linear-inversion estimate.
    Unconstrained,
}

impl Constraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constraint::Physical => "physical",
            Constraint::Unconstrained => "unconstrained",
        }
    }
}

/// `chi` matrix of a process over an operator basis.
#[derive(Debug, Clone)]
pub struct ProcessMatrix {
    chi: CMatrix,
    basis: Arc<OperatorBasis>,
    constraint: Constraint,
    superop: OnceLock<CMatrix>,
}

impl PartialEq for ProcessMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.chi == other.chi && self.basis == other.basis && self.constraint == other.constraint
    }
}

impl ProcessMatrix {
    /// Builds a process matrix and classifies it: `Physical` if it is CP and
    /// TP within tolerance, `Unconstrained` otherwise. `chi` must be Hermitian
    /// within 1e-8; the Hermitian part is stored.
    pub fn new(chi: CMatrix, basis: Arc<OperatorBasis>) -> Result<Self> {
        let mut pm = Self::unconstrained(chi, basis)?;
        if pm.cp_defect_unchecked() <= PHYSICAL_CP_TOL && pm.tp_defect() <= PHYSICAL_TP_TOL {
            pm.constraint = Constraint::Physical;
        }
        Ok(pm)
    }

    /// Builds a process matrix flagged `Unconstrained` regardless of its content.
    pub fn unconstrained(chi: CMatrix, basis: Arc<OperatorBasis>) -> Result<Self> {
        let n = basis.len();
        if chi.nrows() != n || chi.ncols() != n {
            return invalid(format!(
                "chi must be {n}x{n} for basis {}, got {}x{}",
                basis.name(),
                chi.nrows(),
                chi.ncols()
            ));
        }
        let dev = hermitian_deviation(&chi);
        if dev > 1e-8 {
            return invalid(format!("chi is not Hermitian (deviation {dev:e})"));
        }
        Ok(Self {
            chi: hermitize(&chi),
            basis,
            constraint: Constraint::Unconstrained,
            superop: OnceLock::new(),
        })
    }

    /// Builds a physical process matrix, failing if the checks do not pass.
    pub fn physical(chi: CMatrix, basis: Arc<OperatorBasis>) -> Result<Self> {
        let pm = Self::new(chi, basis)?;
        if pm.constraint != Constraint::Physical {
            return Err(QptError::Unphysical(format!(
                "cp_defect {:.3e}, tp_defect {:.3e}",
                pm.cp_defect_unchecked(),
                pm.tp_defect()
            )));
        }
        Ok(pm)
    }

    pub(crate) fn trusted(chi: CMatrix, basis: Arc<OperatorBasis>, constraint: Constraint) -> Self {
        Self {
            chi: hermitize(&chi),
            basis,
            constraint,
            superop: OnceLock::new(),
        }
    }

    /// Identity process in the two-qubit Pauli basis.
    /// Same matrix flagged `Physical` without checking, for explicit user overrides.
    pub fn assume_physical(&self) -> Self {
        Self::trusted(self.chi.clone(), self.basis.clone(), Constraint::Physical)
    }

    pub fn identity_2q() -> Self {
        chi_from_unitary(&UnitaryGate::identity(4), pauli_2q()).expect("identity process")
    }

    pub fn cnot() -> Self {
        chi_from_unitary(&UnitaryGate::cnot(), pauli_2q()).expect("CNOT process")
    }

    /// `chi = I/16`, which maps every state to `I/4`.
    pub fn fully_depolarizing_2q() -> Self {
        let n = 16;
        Self::trusted(
            CMatrix::identity(n, n).unscale(n as f64),
            pauli_2q(),
            Constraint::Physical,
        )
    }

    pub fn chi(&self) -> &CMatrix {
        &self.chi
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        &self.basis
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn is_physical(&self) -> bool {
        self.constraint == Constraint::Physical
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn require_physical(&self) -> Result<()> {
        if self.is_physical() {
            Ok(())
        } else {
            Err(QptError::Unphysical(
                "process matrix is flagged unconstrained".into(),
            ))
        }
    }

    /// Superoperator `S` acting on row-major `vec(rho)`: `vec(E(rho)) = S vec(rho)`.
    pub fn superoperator(&self) -> &CMatrix {
        self.superop.get_or_init(|| {
            let d = self.dim();
            let elements = self.basis.elements();
            let mut s = CMatrix::zeros(d * d, d * d);
            for (m, a_m) in elements.iter().enumerate() {
                // B_m = sum_n chi_mn conj(A_n)
                let mut b = CMatrix::zeros(d, d);
                for (n, a_n) in elements.iter().enumerate() {
                    let w = self.chi[(m, n)];
                    if w != C64::new(0.0, 0.0) {
                        b += a_n.conjugate() * w;
                    }
                }
                s += kron(a_m, &b);
            }
            s
        })
    }

    /// `sum_mn chi_mn A_m X A_n^dagger` for an arbitrary operator `X`.
    pub fn apply_raw(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim();
        let vec_in = nalgebra::DVector::from_iterator(d * d, x.transpose().iter().copied());
        let vec_out = self.superoperator() * vec_in;
        CMatrix::from_row_slice(d, d, vec_out.as_slice())
    }

    /// `sum_mn chi_mn A_n^dagger A_m`, which equals the identity for a trace-preserving map.
    pub fn tp_operator(&self) -> CMatrix {
        let d = self.dim();
        let elements = self.basis.elements();
        let mut out = CMatrix::zeros(d, d);
        for (m, a_m) in elements.iter().enumerate() {
            for (n, a_n) in elements.iter().enumerate() {
                let w = self.chi[(m, n)];
                if w != C64::new(0.0, 0.0) {
                    out += a_n.adjoint() * a_m * w;
                }
            }
        }
        out
    }

    /// Max-absolute-entry norm of `sum_mn chi_mn A_n^dagger A_m - I`.
    pub fn tp_defect(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.tp_operator() - CMatrix::identity(d, d)))
    }

    fn cp_defect_unchecked(&self) -> f64 {
        negative_part(&hermitian_eigenvalues(&self.chi))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.chi)
    }

    pub fn trace(&self) -> f64 {
        trace(&self.chi).re
    }
}

/// `chi = u u^dagger` where `u` expands `U` in the basis.
pub fn chi_from_unitary(gate: &UnitaryGate, basis: Arc<OperatorBasis>) -> Result<ProcessMatrix> {
    chi_from_kraus(std::slice::from_ref(gate.matrix()), basis)
}

/// `chi = sum_i u_i u_i^dagger` for Kraus operators `K_i = sum_m (u_i)_m A_m`.
pub fn chi_from_kraus(kraus: &[CMatrix], basis: Arc<OperatorBasis>) -> Result<ProcessMatrix> {
    let n = basis.len();
    let mut chi = CMatrix::zeros(n, n);
    for k in kraus {
        if k.nrows() != basis.dim() || k.ncols() != basis.dim() {
            return invalid("Kraus operator dimension does not match the basis");
        }
        let u = nalgebra::DVector::from_vec(basis.expand(k));
        chi += &u * u.adjoint();
    }
    ProcessMatrix::physical(chi, basis)
}

/// Applies a physical process to a state.
pub fn apply_process(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    chi.require_physical()?;
    apply_process_unconstrained(chi, rho)
}

/// Applies any process, physical or not. The output is not validated as a state.
pub fn apply_process_unconstrained(
    chi: &ProcessMatrix,
    rho: &DensityMatrix,
) -> Result<DensityMatrix> {
    if rho.dim() != chi.dim() {
        return invalid(format!(
            "state dimension {} does not match process dimension {}",
            rho.dim(),
            chi.dim()
        ));
    }
    Ok(DensityMatrix::from_raw(chi.apply_raw(rho.matrix())))
}

pub fn tp_defect(chi: &ProcessMatrix) -> f64 {
    chi.tp_defect()
}

/// `max(0, -lambda_min(chi))`.
pub fn cp_defect(chi: &ProcessMatrix) -> f64 {
    chi.cp_defect_unchecked()
}

/// Same as [`cp_defect`] for a bare matrix; rejects non-Hermitian input.
pub fn cp_defect_of(chi: &CMatrix) -> Result<f64> {
    let dev = hermitian_deviation(chi);
    if dev > 1e-8 {
        return invalid(format!(
            "cp_defect needs a Hermitian matrix (deviation {dev:e})"
        ));
    }
    Ok(negative_part(&hermitian_eigenvalues(chi)))
}

/// Relative size below which a negative eigenvalue is eigensolver round-off.
const EIG_ROUNDOFF: f64 = 1e-12;

/// `max(0, -lambda_min)` for ascending eigenvalues, with round-off counted as zero.
fn negative_part(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let defect = -values[0];
    if defect <= EIG_ROUNDOFF * scale.max(1.0) {
        0.0
    } else {
        defect
    }
}

/// Re-expresses the same map in another basis of equal dimension.
pub fn change_basis(chi: &ProcessMatrix, target: Arc<OperatorBasis>) -> Result<ProcessMatrix> {
    let source = chi.basis();
    if source.dim() != target.dim() {
        return invalid("basis dimensions differ");
    }
    let n = source.len();
    // columns: target elements expanded in the source basis
    let mut w = CMatrix::zeros(n, n);
    for (j, b) in target.elements().iter().enumerate() {
        for (k, coeff) in source.expand(b).into_iter().enumerate() {
            w[(k, j)] = coeff;
        }
    }
    let w_inv = w
        .try_inverse()
        .ok_or_else(|| QptError::Internal("basis change matrix is singular".into()))?;
    let new_chi = &w_inv * chi.chi() * w_inv.adjoint();
    Ok(ProcessMatrix::trusted(new_chi, target, chi.constraint()))
}

/// Representation in the basis `{U_CNOT A_m}`; its `00` entry is the process
/// fidelity with the ideal CNOT.
pub fn to_cnot_basis(chi: &ProcessMatrix) -> Result<ProcessMatrix> {
    if chi.basis().name() != PAULI_2Q {
        return invalid(format!(
            "to_cnot_basis expects a {PAULI_2Q} process, got {}",
            chi.basis().name()
        ));
    }
    change_basis(chi, cnot_2q())
}

pub fn from_cnot_basis(chi: &ProcessMatrix) -> Result<ProcessMatrix> {
    if chi.basis().name() != CNOT_2Q {
        return invalid(format!(
            "from_cnot_basis expects a {CNOT_2Q} process, got {}",
            chi.basis().name()
        ));
    }
    change_basis(chi, pauli_2q())
}

/// Composition `K o E`: the Kraus map `{K_j}` applied after the process.
pub fn compose_after(chi: &ProcessMatrix, kraus: &[CMatrix]) -> Result<ProcessMatrix> {
    let basis = chi.basis().clone();
    let n = basis.len();
    let mut out = CMatrix::zeros(n, n);
    for k in kraus {
        if k.nrows() != basis.dim() {
            return invalid("Kraus operator dimension does not match the process");
        }
        let mut cmat = CMatrix::zeros(n, n);
        for (m, a) in basis.elements().iter().enumerate() {
            for (row, coeff) in basis.expand(&(k * a)).into_iter().enumerate() {
                cmat[(row, m)] = coeff;
            }
        }
        out += &cmat * chi.chi() * cmat.adjoint();
    }
    Ok(ProcessMatrix::trusted(out, basis, chi.constraint()))
}

/// Random CPTP map on two qubits with the given Kraus rank, built from a
/// random isometry (QR of a complex Gaussian matrix).
pub fn random_channel_2q(kraus_rank: usize, rng: &mut Rng) -> Result<ProcessMatrix> {
    if kraus_rank == 0 || kraus_rank > 16 {
        return invalid("Kraus rank must be in 1..=16");
    }
    let d = 4;
    let g = CMatrix::from_fn(d * kraus_rank, d, |_, _| rng.complex_normal());
    let q = g.qr().q();
    let kraus: Vec<CMatrix> = (0..kraus_rank)
        .map(|i| q.view((i * d, 0), (d, d)).into_owned())
        .collect();
    chi_from_kraus(&kraus, pauli_2q())
}

/// Random unital two-qubit channel: a convex mixture of `terms` Haar unitaries
/// with uniformly random (simplex) weights.
pub fn random_unital_channel_2q(terms: usize, rng: &mut Rng) -> Result<ProcessMatrix> {
    if terms == 0 {
        return invalid("a mixture needs at least one unitary");
    }
    let raw: Vec<f64> = (0..terms)
        .map(|_| -rand::Rng::random::<f64>(rng).max(1e-300).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let kraus: Vec<CMatrix> = raw
        .iter()
        .map(|w| crate::qcore::haar_random_unitary(4, rng).scale((w / total).sqrt()))
        .collect();
    chi_from_kraus(&kraus, pauli_2q())
}

/// Random two-qubit unitary process.
pub fn random_unitary_process(rng: &mut Rng) -> ProcessMatrix {
    let u = crate::qcore::haar_random_unitary(4, rng);
    chi_from_unitary(&UnitaryGate::new(u).expect("Haar unitary"), pauli_2q())
        .expect("unitary process")
}
