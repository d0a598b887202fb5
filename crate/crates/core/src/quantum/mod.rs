//! Exact dense linear algebra for small quantum systems: operators, states,
//! Pauli words, controlled embeddings, Hermitian matrix exponentials,
//! spectral function application and the error metrics used throughout.

mod hamiltonian;
mod operator;
mod pauli;

pub use hamiltonian::{random_hamiltonian, Hamiltonian};
pub use operator::{DenseOperator, StateVector};
pub use pauli::{pauli_matrix, PauliWord};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-8;

pub(crate) fn is_power_of_two(d: usize) -> bool {
    d >= 1 && d.is_power_of_two()
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Columns of the returned matrix are the eigenvectors, ordered to match.
pub fn eigh(m: &CMat) -> (DVector<f64>, CMat) {
    let se = m.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Operator norm (largest singular value) of an arbitrary matrix.
pub fn op_norm(m: &CMat) -> f64 {
    // singular values of m are sqrt of eigenvalues of m† m, which is Hermitian PSD
    let gram = m.adjoint() * m;
    let (vals, _) = eigh(&gram);
    vals.iter().fold(0.0f64, |acc, &v| acc.max(v.max(0.0))).sqrt()
}

/// Operator norm of a Hermitian matrix (max |eigenvalue|).
pub fn op_norm_hermitian(m: &CMat) -> f64 {
    let (vals, _) = eigh(m);
    vals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Deviation of a matrix from Hermiticity, `‖m − m†‖_op`.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    op_norm(&(m - m.adjoint()))
}

/// 1-norm `‖ρ − σ‖₁ = tr√((ρ−σ)†(ρ−σ))` of the difference of two Hermitian
/// operators, computed from the eigenvalues of the (Hermitian) difference.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> Result<f64> {
    if rho.nrows() != sigma.nrows() || rho.ncols() != sigma.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "trace_distance: {}x{} vs {}x{}",
            rho.nrows(),
            rho.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let diff = rho - sigma;
    let dev = hermiticity_deviation(&diff);
    if dev > 1e-8 {
        return Err(Error::NotHermitian(dev));
    }
    let (vals, _) = eigh(&diff);
    Ok(vals.iter().map(|v| v.abs()).sum())
}

/// 1-norm of a single Hermitian operator.
pub fn one_norm_hermitian(m: &CMat) -> f64 {
    let (vals, _) = eigh(m);
    vals.iter().map(|v| v.abs()).sum()
}

/// Trace out the first qubit of an operator on at least two qubits.
pub fn partial_trace_first_qubit(rho: &CMat) -> Result<CMat> {
    let d = rho.nrows();
    if d != rho.ncols() || !is_power_of_two(d) {
        return Err(Error::DimensionMismatch(format!(
            "partial trace needs a square power-of-two operator, got {}x{}",
            d,
            rho.ncols()
        )));
    }
    if d < 4 {
        return Err(Error::DimensionMismatch(
            "partial trace over the first qubit needs dim >= 4".into(),
        ));
    }
    let half = d / 2;
    let mut out = CMat::zeros(half, half);
    for i in 0..half {
        for j in 0..half {
            out[(i, j)] = rho[(i, j)] + rho[(half + i, half + j)];
        }
    }
    Ok(out)
}

/// `ctrl(U) = |0⟩⟨0|⊗I + |1⟩⟨1|⊗U`.
pub fn ctrl(u: &DenseOperator) -> Result<DenseOperator> {
    controlled_embedding(u, false)
}

/// `ctrl0(U) = |0⟩⟨0|⊗U + |1⟩⟨1|⊗I` (roles of the control states reversed).
pub fn ctrl0(u: &DenseOperator) -> Result<DenseOperator> {
    controlled_embedding(u, true)
}

fn controlled_embedding(u: &DenseOperator, on_zero: bool) -> Result<DenseOperator> {
    let dev = u.unitarity_deviation();
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary {
            deviation: dev,
            tolerance: UNITARY_TOL,
        });
    }
    let d = u.dim();
    let mut out = CMat::identity(2 * d, 2 * d);
    let offset = if on_zero { 0 } else { d };
    for i in 0..d {
        for j in 0..d {
            out[(offset + i, offset + j)] = u.matrix()[(i, j)];
        }
    }
    DenseOperator::from_matrix(out)
}
