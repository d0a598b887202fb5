use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{is_power_of_two, op_norm, C64, CMat, CVec};
use crate::error::{Error, Result};
use crate::rng::RngExt;

/// A dense operator on a power-of-two dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    mat: CMat,
}

impl DenseOperator {
    pub fn from_matrix(mat: CMat) -> Result<Self> {
        let d = mat.nrows();
        if d != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                d,
                mat.ncols()
            )));
        }
        if !is_power_of_two(d) {
            return Err(Error::NotPowerOfTwo(d));
        }
        Ok(Self { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(CMat::identity(dim, dim)).expect("power-of-two identity")
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Number of qubits the operator acts on.
    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self { mat: &self.mat * &rhs.mat }
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        Self { mat: self.mat.kronecker(&rhs.mat) }
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        StateVector { vec: &self.mat * psi.amplitudes() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// `‖U†U − I‖_op`.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        op_norm(&(self.mat.adjoint() * &self.mat - CMat::identity(d, d)))
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.mat)
    }
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    vec: CVec,
}

impl StateVector {
    /// Builds a state from raw amplitudes, normalizing them. Rejects
    /// zero vectors and non-power-of-two dimensions.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if !is_power_of_two(amps.len()) {
            return Err(Error::NotPowerOfTwo(amps.len()));
        }
        let mut vec = CVec::from_vec(amps);
        let norm = vec.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        vec /= C64::new(norm, 0.0);
        Ok(Self { vec })
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::default(); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self::from_amplitudes(amps).expect("basis state")
    }

    /// `|+⟩` on a single qubit.
    pub fn plus_state() -> Self {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_amplitudes(vec![a, a]).expect("plus state")
    }

    pub fn haar_random<R: rand::Rng>(dim: usize, rng: &mut R) -> Self {
        let amps: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        Self::from_amplitudes(amps).expect("haar state")
    }

    pub fn tensor(&self, rhs: &Self) -> Self {
        Self { vec: self.vec.kronecker(&rhs.vec) }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    pub fn overlap(&self, rhs: &Self) -> C64 {
        self.vec.dotc(&rhs.vec)
    }

    /// Projector `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> CMat {
        &self.vec * self.vec.adjoint()
    }

    pub(crate) fn from_raw(vec: CVec) -> Self {
        Self { vec }
    }
}

/// Serialization mirror for operators and states: complex entries are stored
/// as `[re, im]` pairs, row-major for operators.
#[derive(Serialize, Deserialize)]
struct ComplexArray {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for DenseOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let z = self.mat[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        ComplexArray { dim: d, entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ComplexArray::deserialize(d)?;
        if raw.entries.len() != raw.dim * raw.dim {
            return Err(serde::de::Error::custom("entry count does not match dim^2"));
        }
        let mat = CMat::from_fn(raw.dim, raw.dim, |i, j| {
            let [re, im] = raw.entries[i * raw.dim + j];
            Complex::new(re, im)
        });
        DenseOperator::from_matrix(mat).map_err(serde::de::Error::custom)
    }
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<[f64; 2]> = self.vec.iter().map(|z| [z.re, z.im]).collect();
        ComplexArray { dim: self.dim(), entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ComplexArray::deserialize(d)?;
        if raw.entries.len() != raw.dim {
            return Err(serde::de::Error::custom("entry count does not match dim"));
        }
        let vec = DVector::from_iterator(raw.dim, raw.entries.iter().map(|&[re, im]| Complex::new(re, im)));
        Ok(StateVector { vec })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;

    #[test]
    fn state_construction_normalizes() {
        let s = StateVector::from_amplitudes(vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!(StateVector::from_amplitudes(vec![C64::default(); 2]).is_err());
        assert!(StateVector::from_amplitudes(vec![C64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn haar_state_stays_normalized_under_unitaries() {
        let mut rng = master_rng(3);
        let h = crate::quantum::random_hamiltonian(2, 9).unwrap();
        let u = h.expm(1.3);
        let mut s = StateVector::haar_random(4, &mut rng);
        for _ in 0..50 {
            s = u.apply(&s);
        }
        assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn operator_serde_round_trip() {
        let h = crate::quantum::random_hamiltonian(1, 4).unwrap();
        let u = h.expm(0.7);
        let json = serde_json::to_string(&u).unwrap();
        let back: DenseOperator = serde_json::from_str(&json).unwrap();
        assert!(op_norm(&(u.matrix() - back.matrix())) < 1e-14);
    }
}
