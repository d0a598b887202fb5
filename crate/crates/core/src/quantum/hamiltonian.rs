use nalgebra::DVector;

use super::{eigh, hermiticity_deviation, C64, CMat, DenseOperator};
use crate::error::{Error, Result};
use crate::rng::{master_rng, RngExt};

/// An `n`-qubit Hamiltonian together with its eigendecomposition and trace
/// average `tr(H)/2^n`. The traceless part `H0 = H − tr(H)/2^n · I` is the
/// generator all transformation functions act on.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n: usize,
    matrix: CMat,
    eigenvalues: DVector<f64>,
    eigenvectors: CMat,
    trace_average: f64,
}

impl Hamiltonian {
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if d != matrix.ncols() || !super::is_power_of_two(d) {
            return Err(Error::DimensionMismatch(format!(
                "Hamiltonian must be square power-of-two, got {}x{}",
                d,
                matrix.ncols()
            )));
        }
        let dev = hermiticity_deviation(&matrix);
        if dev > 1e-10 {
            return Err(Error::NotHermitian(dev));
        }
        // work with the exactly Hermitian part so the eigensolver sees a
        // symmetric input independent of rounding in the caller
        let sym = (&matrix + matrix.adjoint()).scale(0.5);
        let (eigenvalues, eigenvectors) = eigh(&sym);
        let trace_average = sym.trace().re / d as f64;
        Ok(Self {
            n: d.trailing_zeros() as usize,
            matrix: sym,
            eigenvalues,
            eigenvectors,
            trace_average,
        })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMat {
        &self.eigenvectors
    }

    pub fn trace_average(&self) -> f64 {
        self.trace_average
    }

    /// Traceless part `H0`.
    pub fn traceless(&self) -> CMat {
        let d = self.dim();
        &self.matrix - CMat::identity(d, d).scale(self.trace_average)
    }

    /// Eigenvalues of the traceless part.
    pub fn traceless_eigenvalues(&self) -> DVector<f64> {
        self.eigenvalues.map(|e| e - self.trace_average)
    }

    /// `‖H0‖_op`.
    pub fn traceless_norm(&self) -> f64 {
        self.traceless_eigenvalues().iter().fold(0.0f64, |a, &e| a.max(e.abs()))
    }

    /// `e^{−iHt}` via the eigendecomposition; negative `t` gives `e^{+iH|t|}`.
    pub fn expm(&self, t: f64) -> DenseOperator {
        self.expm_shifted(t, 0.0)
    }

    /// `e^{−iH0t}` of the traceless part.
    pub fn expm_traceless(&self, t: f64) -> DenseOperator {
        self.expm_shifted(t, self.trace_average)
    }

    fn expm_shifted(&self, t: f64, shift: f64) -> DenseOperator {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for k in 0..d {
            let phase = C64::from_polar(1.0, -(self.eigenvalues[k] - shift) * t);
            let col = self.eigenvectors.column(k);
            m += (col * col.adjoint()) * phase;
        }
        DenseOperator::from_matrix(m).expect("square power-of-two")
    }

    /// `f(H0) = Σ_m f(E_m) |E_m⟩⟨E_m|` for `f : [−1,1] → ℝ` applied to the
    /// spectrum of the traceless part. Eigenvalues outside `[−1−1e−9, 1+1e−9]`
    /// are rejected because they leave the function domain.
    pub fn apply_spectral_function(&self, f: impl Fn(f64) -> f64) -> Result<DenseOperator> {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for k in 0..d {
            let e = self.eigenvalues[k] - self.trace_average;
            if e.abs() > 1.0 + 1e-9 {
                return Err(Error::EigenvalueOutOfRange(e));
            }
            let col = self.eigenvectors.column(k);
            m += (col * col.adjoint()) * C64::new(f(e.clamp(-1.0, 1.0)), 0.0);
        }
        DenseOperator::from_matrix(m)
    }

    /// `e^{−if(H0)t}`, the ideal transformed dynamics used as the oracle
    /// target in every end-to-end comparison.
    pub fn evolve_spectral(&self, f: impl Fn(f64) -> f64, t: f64) -> Result<DenseOperator> {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for k in 0..d {
            let e = self.eigenvalues[k] - self.trace_average;
            if e.abs() > 1.0 + 1e-9 {
                return Err(Error::EigenvalueOutOfRange(e));
            }
            let col = self.eigenvectors.column(k);
            m += (col * col.adjoint()) * C64::from_polar(1.0, -f(e.clamp(-1.0, 1.0)) * t);
        }
        DenseOperator::from_matrix(m)
    }
}

/// Deterministic GUE-style test Hamiltonian with `‖H0‖_op = 1` exactly after
/// rescaling; the trace component is kept nonzero so that traceless-part
/// handling is exercised.
pub fn random_hamiltonian(n: usize, seed: u64) -> Result<Hamiltonian> {
    if n == 0 || n > 6 {
        return Err(Error::QubitCountOutOfRange(n, "1..=6"));
    }
    let d = 1usize << n;
    let mut rng = master_rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let a = CMat::from_fn(d, d, |_, _| C64::new(rng.standard_normal(), rng.standard_normal()));
    let h = (&a + a.adjoint()).scale(0.5);
    let trace_avg = h.trace().re / d as f64;
    let h0 = &h - CMat::identity(d, d).scale(trace_avg);
    let (vals, _) = eigh(&h0);
    let norm = vals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if norm < 1e-12 {
        return Err(Error::Degenerate("traceless part vanished".into()));
    }
    // keep an O(1) trace offset after rescaling
    let offset = trace_avg / norm + 0.25;
    let rescaled = h0.scale(1.0 / norm) + CMat::identity(d, d).scale(offset);
    Hamiltonian::from_matrix(rescaled)
}
