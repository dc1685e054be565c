//! Dense complex linear algebra for small quantum systems, the state types, and
//! the state-level measures (fidelity, purity, linear entropy, tangle).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest absolute entry of a matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Projects onto the Hermitian part, `(m + m†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Kronecker product with the left factor as the most significant index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are returned in
/// ascending order together with the matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Rebuilds `V f(Λ) V†` from a Hermitian eigendecomposition.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (k, &lam) in values.iter().enumerate() {
        let w = f(lam);
        scaled.column_mut(k).scale_mut(w);
    }
    &scaled * vectors.adjoint()
}

/// Eigenvalues below this fraction of the spectral scale are round-off and treated as zero
/// before square roots are taken.
const EIG_CUTOFF: f64 = 1e-13;

fn clamped_roots(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    values
        .iter()
        .map(|&x| {
            if x > EIG_CUTOFF * scale {
                x.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Square root of a positive semidefinite matrix; eigenvalues at round-off
/// level (including small negative ones) are clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let roots = clamped_roots(&values);
    let mut scaled = vectors.clone();
    for (k, &r) in roots.iter().enumerate() {
        scaled.column_mut(k).scale_mut(r);
    }
    &scaled * vectors.adjoint()
}

/// Seeded pseudo-random stream.
///
/// Concurrent work derives independent substreams with [`Rng::fork`], which
/// depends only on the base seed and the substream index, never on how many
/// numbers were already drawn.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent substream `index` of this rng's seed.
    pub fn fork(&self, index: u64) -> Rng {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        // stream 0 is the parent itself
        inner.set_stream(index.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn complex_normal(&mut self) -> C64 {
        c(self.standard_normal(), self.standard_normal())
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim >= 2 && dim.is_power_of_two()).then(|| dim.trailing_zeros() as usize)
}

/// Normalized state vector on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    label: Option<String>,
}

impl PureState {
    /// Validates power-of-two length and unit norm (within 1e-12). No renormalization.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if qubits_for_dim(amplitudes.len()).is_none() {
            return invalid(format!(
                "state length {} is not a power of two >= 2",
                amplitudes.len()
            ));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return invalid(format!("state norm {norm} differs from 1"));
        }
        Ok(Self {
            amplitudes,
            label: None,
        })
    }

    /// Scales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Self::new(amplitudes.unscale(norm))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if n_qubits == 0 || index >= dim {
            return invalid(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            ));
        }
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Self::new(v)
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        let label = match (&self.label, &other.label) {
            (Some(a), Some(b)) => Some(format!("{a}{b}")),
            _ => None,
        };
        PureState { amplitudes, label }
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            entries: self.projector(),
        }
    }

    /// Applies a unitary, renormalizing away round-off.
    pub fn evolve(&self, unitary: &CMatrix) -> PureState {
        let v = unitary * &self.amplitudes;
        let norm = v.norm();
        PureState {
            amplitudes: v.unscale(norm),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Checks Hermiticity (1e-10), unit trace (1e-10) and positivity (-1e-8).
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() || qubits_for_dim(entries.nrows()).is_none() {
            return invalid(format!(
                "density matrix must be square with power-of-two size, got {}x{}",
                entries.nrows(),
                entries.ncols()
            ));
        }
        let herm = hermitian_deviation(&entries);
        if herm > HERMITIAN_TOL {
            return invalid(format!("density matrix not Hermitian (deviation {herm:e})"));
        }
        let tr = trace(&entries);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return invalid(format!("density matrix trace {tr} differs from 1"));
        }
        let min = hermitian_eigenvalues(&entries)[0];
        if min < -PSD_TOL {
            return invalid(format!("density matrix has negative eigenvalue {min:e}"));
        }
        Ok(Self {
            entries: hermitize(&entries),
        })
    }

    /// Wraps a matrix produced by a trusted computation (e.g. a channel output)
    /// without validating the invariants. The Hermitian part is kept.
    pub fn from_raw(entries: CMatrix) -> Self {
        Self {
            entries: hermitize(&entries),
        }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self {
            entries: CMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> f64 {
        trace(&self.entries).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    /// `<psi|rho|psi>`
    pub fn expectation(&self, psi: &PureState) -> f64 {
        psi.amplitudes()
            .dotc(&(&self.entries * psi.amplitudes()))
            .re
    }

    pub fn conjugate_by(&self, unitary: &CMatrix) -> DensityMatrix {
        Self::from_raw(unitary * &self.entries * unitary.adjoint())
    }
}

/// Haar-uniform pure state on `n_qubits` from normalized complex Gaussians.
pub fn haar_random_pure(n_qubits: usize, rng: &mut Rng) -> Result<PureState> {
    if n_qubits == 0 {
        return invalid("haar_random_pure needs at least one qubit");
    }
    let dim = 1usize << n_qubits;
    loop {
        let v = CVector::from_fn(dim, |_, _| rng.complex_normal());
        let norm = v.norm();
        if norm > 1e-300 {
            return Ok(PureState {
                amplitudes: v.unscale(norm),
                label: None,
            });
        }
    }
}

/// Haar-uniform unitary via QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_random_unitary(dim: usize, rng: &mut Rng) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| rng.complex_normal());
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, k)] *= phase;
        }
    }
    q
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(())
}

/// Uhlmann fidelity in the squared convention, `(Tr sqrt(sqrt(a) b sqrt(a)))^2`.
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(matrix_fidelity(a.matrix(), b.matrix()))
}

/// Squared Uhlmann fidelity of two PSD matrices without trace normalization.
pub fn matrix_fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let sa = psd_sqrt(a);
    let inner = &sa * b * &sa;
    let root_trace: f64 = clamped_roots(&hermitian_eigenvalues(&inner)).iter().sum();
    (root_trace * root_trace).clamp(0.0, 1.0)
}

/// `<psi|rho|psi>`, the fidelity of a mixed state with a pure one.
pub fn pure_state_fidelity(psi: &PureState, rho: &DensityMatrix) -> f64 {
    rho.expectation(psi).clamp(0.0, 1.0)
}

/// `Tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// `(d/(d-1)) (1 - Tr rho^2)`, clamped to `[0, 1]`.
pub fn linear_entropy_normalized(rho: &DensityMatrix) -> f64 {
    let d = rho.dim() as f64;
    (d / (d - 1.0) * (1.0 - purity(rho))).clamp(0.0, 1.0)
}

fn sigma_y_y() -> CMatrix {
    let y = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
    kron(&y, &y)
}

/// Wootters concurrence of a two-qubit state.
///
/// The `lambda_i` are the square roots of the eigenvalues of `rho rho~`, obtained
/// here from the Hermitian matrix `sqrt(rho) rho~ sqrt(rho)` which has the same
/// spectrum.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return invalid(format!(
            "concurrence is defined for two qubits, got dimension {}",
            rho.dim()
        ));
    }
    let yy = sigma_y_y();
    let flipped = &yy * rho.matrix().conjugate() * &yy;
    let root = psd_sqrt(rho.matrix());
    let product = &root * flipped * &root;
    let mut lambdas = clamped_roots(&hermitian_eigenvalues(&product));
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Tangle, the squared concurrence.
pub fn tangle(rho: &DensityMatrix) -> Result<f64> {
    let conc = concurrence(rho)?;
    Ok((conc * conc).clamp(0.0, 1.0))
}
