use super::{C64, CMat, DenseOperator};
use crate::error::{Error, Result};

/// A Pauli word `σ_v = σ_{v1} ⊗ … ⊗ σ_{vn}` encoded as base-4 digits
/// (0 ↔ I, 1 ↔ X, 2 ↔ Y, 3 ↔ Z).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliWord {
    indices: Vec<u8>,
}

impl PauliWord {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("Pauli word must be nonempty".into()));
        }
        if indices.iter().any(|&i| i > 3) {
            return Err(Error::InvalidParameter("Pauli indices must lie in {0,1,2,3}".into()));
        }
        Ok(Self { indices })
    }

    /// Decodes the base-4 representation of `code` into an `n`-qubit word,
    /// least significant digit on the last qubit.
    pub fn from_code(n: usize, code: usize) -> Self {
        let mut indices = vec![0u8; n];
        let mut c = code;
        for i in (0..n).rev() {
            indices[i] = (c & 3) as u8;
            c >>= 2;
        }
        Self { indices }
    }

    pub fn code(&self) -> usize {
        self.indices.iter().fold(0usize, |acc, &d| (acc << 2) | d as usize)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn uniform<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        // n independent base-4 digits; the 4^n-element distribution is never materialized
        let indices = (0..n).map(|_| (rng.next_u32() & 3) as u8).collect();
        Self { indices }
    }

    /// All `4^n` words on `n` qubits in code order.
    pub fn enumerate(n: usize) -> impl Iterator<Item = PauliWord> {
        (0..(1usize << (2 * n))).map(move |c| PauliWord::from_code(n, c))
    }
}

fn single(idx: u8) -> CMat {
    let zero = C64::default();
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match idx {
        0 => CMat::from_row_slice(2, 2, &[one, zero, zero, one]),
        1 => CMat::from_row_slice(2, 2, &[zero, one, one, zero]),
        2 => CMat::from_row_slice(2, 2, &[zero, -i, i, zero]),
        3 => CMat::from_row_slice(2, 2, &[one, zero, zero, -one]),
        _ => unreachable!("index validated at construction"),
    }
}

/// The `2^n × 2^n` matrix of a Pauli word.
pub fn pauli_matrix(word: &PauliWord) -> DenseOperator {
    let mut m = single(word.indices()[0]);
    for &idx in &word.indices()[1..] {
        m = m.kronecker(&single(idx));
    }
    DenseOperator::from_matrix(m).expect("pauli matrix is square power-of-two")
}
