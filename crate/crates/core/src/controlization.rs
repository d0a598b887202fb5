//! Controlization: turning black-box dynamics `e^{−iHτ}` into an
//! approximation of `ctrl0(e^{−iH0t})` by sandwiching per-step evolutions
//! between random controlled-Pauli gates.
//!
//! Each sandwich `ctrl(σ_v)(I⊗e^{−iHτ})ctrl(σ_v)` is block diagonal in the
//! control qubit: the `|0⟩` block accumulates `e^{−iHt}` deterministically
//! while the `|1⟩` block is a product of uniformly twirled factors
//! `σ_v e^{−iHτ} σ_v` that averages to a global phase. [`TwirledProductSampler`]
//! exploits that structure so a trajectory costs one system-dimension
//! matrix-vector product per step (batched through a precomputed product
//! table on small systems) instead of an `(n+1)`-qubit matrix product.

use crate::error::{Error, Result};
use crate::qdrift::{iteration_count, MixtureTerm, TermMixture, TrajectoryRecord};
use crate::quantum::{ctrl, pauli_matrix, C64, CMat, DenseOperator, Hamiltonian, PauliWord};
use crate::rng::{BitDrawer, ChaCha12Rng};

/// `(1/4^n) Σ_v σ_v H σ_v`, which equals `(tr H / 2^n) I`. Enumerates all
/// `4^n` words, so the qubit count is capped.
pub fn pauli_twirl(h: &Hamiltonian) -> Result<CMat> {
    let n = h.qubits();
    if n > 4 {
        return Err(Error::InstanceTooLarge(format!("pauli_twirl enumerates 4^n words, n = {n}")));
    }
    let d = h.dim();
    let mut acc = CMat::zeros(d, d);
    for word in PauliWord::enumerate(n) {
        let p = pauli_matrix(&word);
        acc += p.matrix() * h.matrix() * p.matrix();
    }
    Ok(acc.scale(1.0 / (1usize << (2 * n)) as f64))
}

/// One controlization sandwich `ctrl(σ_v)·(I⊗e^{−iHτ})·ctrl(σ_v)` on the
/// `(n+1)`-qubit space.
pub fn controlized_step(h: &Hamiltonian, word: &PauliWord, tau: f64) -> DenseOperator {
    let u = h.expm(tau);
    let c = ctrl(&pauli_matrix(word)).expect("pauli word is unitary");
    let id2 = DenseOperator::identity(2);
    c.mul(&id2.kron(&u)).mul(&c)
}

/// Which controlled variant a trajectory approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtrlVariant {
    /// `ctrl0(e^{−iH0t}) = |0⟩⟨0|⊗e^{−iH0t} + |1⟩⟨1|⊗I` (the default).
    Ctrl0,
    /// `ctrl(e^{−iH0t})`, obtained by conjugating the control qubit with X.
    Ctrl,
}

/// Pre-processing for one controlization run: `N := N(1, |t|, ε)` per the
/// iteration-count formula, with the zero-time evolution special-cased to
/// an exact identity consuming zero queries.
#[derive(Debug, Clone, Copy)]
pub struct ControlizationPlan {
    pub n: usize,
    pub t: f64,
    pub eps: f64,
    pub steps: u64,
}

impl ControlizationPlan {
    pub fn new(n: usize, t: f64, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::InvalidParameter("controlization eps must be positive".into()));
        }
        let steps = if t == 0.0 { 0 } else { iteration_count(1.0, t.abs(), eps)? };
        Ok(Self { n, t, eps, steps })
    }
}

/// The uniform Pauli-sandwich mixture of controlization as a generic term
/// mixture (λ = 1 exactly). Feeds the exact average-channel oracle.
pub fn controlization_mixture(h: &Hamiltonian) -> Result<TermMixture> {
    let n = h.qubits();
    if n > 3 {
        return Err(Error::InstanceTooLarge(format!(
            "controlization mixture enumerates 4^n terms, n = {n}"
        )));
    }
    let count = 1usize << (2 * n);
    let terms = PauliWord::enumerate(n)
        .map(|w| {
            let h = h.clone();
            MixtureTerm {
                weight: 1.0 / count as f64,
                generator: Box::new(move |tau| controlized_step(&h, &w, tau)),
                cost: 1,
            }
        })
        .collect();
    TermMixture::new(terms)
}

/// Explicit-matrix controlization trajectory: the ordered product of
/// `N` sandwiches with i.i.d. uniform words. This is the reference path;
/// the block sampler below is the fast equivalent.
pub fn controlize_trajectory(
    plan: &ControlizationPlan,
    h: &Hamiltonian,
    variant: CtrlVariant,
    rng: &mut ChaCha12Rng,
) -> TrajectoryRecord {
    let n = h.qubits();
    let dim = 2 * h.dim();
    if plan.steps == 0 {
        return TrajectoryRecord {
            unitary: DenseOperator::identity(dim),
            sampled_indices: Vec::new(),
            query_count: 0,
            rng_stream: 0,
        };
    }
    let tau = plan.t / plan.steps as f64;
    let mut cache: Vec<Option<DenseOperator>> = vec![None; 1 << (2 * n)];
    let mut drawer = BitDrawer::new(rng);
    let mut sampled = Vec::with_capacity(plan.steps as usize);
    let mut unitary = DenseOperator::identity(dim);
    for _ in 0..plan.steps {
        let code = drawer.draw(2 * n as u32) as usize;
        sampled.push(code);
        let step = cache[code]
            .get_or_insert_with(|| controlized_step(h, &PauliWord::from_code(n, code), tau));
        unitary = step.mul(&unitary);
    }
    if variant == CtrlVariant::Ctrl {
        let x = pauli_matrix(&PauliWord::new(vec![1]).unwrap());
        let xi = x.kron(&DenseOperator::identity(h.dim()));
        unitary = xi.mul(&unitary).mul(&xi);
    }
    TrajectoryRecord { unitary, sampled_indices: sampled, query_count: plan.steps, rng_stream: 0 }
}

const MAX_BLOCK_TABLE: usize = 4096;

/// Samples products `∏_l σ_{v_l} e^{−iHτ} σ_{v_l}` applied to a system-sized
/// state vector, drawing one uniform word per step. For `n ≤ 3` an L-step
/// product table turns L steps into a single matrix-vector product.
pub struct TwirledProductSampler {
    dim: usize,
    digit_bits: u32,
    block_len: usize,
    /// 4^n single-step matrices σ_v U σ_v, flattened row-major.
    singles: Vec<C64>,
    /// Their adjoints, for reverse application.
    singles_adj: Vec<C64>,
    /// Product table over blocks of `block_len` digits (empty when unused).
    blocks: Vec<C64>,
}

impl TwirledProductSampler {
    pub fn new(h: &Hamiltonian, tau: f64) -> Result<Self> {
        let n = h.qubits();
        if n > 4 {
            return Err(Error::InstanceTooLarge(format!(
                "twirled sampler enumerates 4^n conjugates, n = {n}"
            )));
        }
        let d = h.dim();
        let u = h.expm(tau);
        let word_count = 1usize << (2 * n);
        let mut singles = vec![C64::default(); word_count * d * d];
        let mut singles_adj = vec![C64::default(); word_count * d * d];
        for (code, word) in PauliWord::enumerate(n).enumerate() {
            let p = pauli_matrix(&word);
            let m = p.matrix() * u.matrix() * p.matrix();
            let base = code * d * d;
            for i in 0..d {
                for j in 0..d {
                    singles[base + i * d + j] = m[(i, j)];
                    singles_adj[base + j * d + i] = m[(i, j)].conj();
                }
            }
        }
        // largest block length whose table stays within MAX_BLOCK_TABLE entries
        let mut block_len = 1usize;
        while word_count.pow(block_len as u32 + 1) <= MAX_BLOCK_TABLE {
            block_len += 1;
        }
        let blocks = if block_len >= 2 {
            let mut prev: Vec<C64> = singles.clone();
            for _ in 1..block_len {
                let prev_count = prev.len() / (d * d);
                let mut next = vec![C64::default(); prev_count * word_count * d * d];
                for lead in 0..word_count {
                    for m in 0..prev_count {
                        let dst = (lead * prev_count + m) * d * d;
                        matmul_flat(
                            d,
                            &singles[lead * d * d..(lead + 1) * d * d],
                            &prev[m * d * d..(m + 1) * d * d],
                            &mut next[dst..dst + d * d],
                        );
                    }
                }
                prev = next;
            }
            prev
        } else {
            Vec::new()
        };
        Ok(Self { dim: d, digit_bits: 2 * n as u32, block_len, singles, singles_adj, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies `steps` freshly sampled factors to `psi` (earliest factor
    /// first), consuming one word per step from the drawer.
    pub fn apply_sampled(&self, steps: u64, psi: &mut [C64], drawer: &mut BitDrawer) {
        debug_assert_eq!(psi.len(), self.dim);
        let d = self.dim;
        let mut remaining = steps;
        if !self.blocks.is_empty() {
            let l = self.block_len as u64;
            while remaining >= l {
                // digits are drawn one per step so the stream consumption is
                // identical to the explicit path; position p is step p+1 of
                // the block and sits in the table index's p-th digit
                let mut index = 0usize;
                for pos in 0..self.block_len {
                    index |= (drawer.draw(self.digit_bits) as usize)
                        << (self.digit_bits as usize * pos);
                }
                matvec_flat(d, &self.blocks[index * d * d..(index + 1) * d * d], psi);
                remaining -= l;
            }
        }
        for _ in 0..remaining {
            let code = drawer.draw(self.digit_bits) as usize;
            matvec_flat(d, &self.singles[code * d * d..(code + 1) * d * d], psi);
        }
    }

    /// Draws `steps` words without applying anything.
    pub fn draw_words(&self, steps: usize, drawer: &mut BitDrawer, out: &mut Vec<u16>) {
        out.clear();
        out.reserve(steps);
        for _ in 0..steps {
            out.push(drawer.draw(self.digit_bits) as u16);
        }
    }

    /// Applies the product for a recorded word list (first word first).
    pub fn apply_words(&self, words: &[u16], psi: &mut [C64]) {
        let d = self.dim;
        for &w in words {
            matvec_flat(d, &self.singles[w as usize * d * d..(w as usize + 1) * d * d], psi);
        }
    }

    /// Applies the adjoint of the product for a recorded word list.
    pub fn apply_words_adjoint(&self, words: &[u16], psi: &mut [C64]) {
        let d = self.dim;
        for &w in words.iter().rev() {
            matvec_flat(d, &self.singles_adj[w as usize * d * d..(w as usize + 1) * d * d], psi);
        }
    }
}

pub(crate) fn matmul_flat(d: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::default();
            for k in 0..d {
                acc += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = acc;
        }
    }
}

/// In-place `psi ← M·psi` for a flat row-major square matrix, unrolled for
/// the dimensions the trajectory loops live in.
#[inline]
pub(crate) fn matvec_flat(d: usize, m: &[C64], psi: &mut [C64]) {
    match d {
        2 => {
            let (x0, x1) = (psi[0], psi[1]);
            psi[0] = m[0] * x0 + m[1] * x1;
            psi[1] = m[2] * x0 + m[3] * x1;
        }
        4 => {
            let (x0, x1, x2, x3) = (psi[0], psi[1], psi[2], psi[3]);
            psi[0] = m[0] * x0 + m[1] * x1 + m[2] * x2 + m[3] * x3;
            psi[1] = m[4] * x0 + m[5] * x1 + m[6] * x2 + m[7] * x3;
            psi[2] = m[8] * x0 + m[9] * x1 + m[10] * x2 + m[11] * x3;
            psi[3] = m[12] * x0 + m[13] * x1 + m[14] * x2 + m[15] * x3;
        }
        _ => {
            let mut out = [C64::default(); 64];
            let out = &mut out[..d];
            for (i, o) in out.iter_mut().enumerate() {
                let row = &m[i * d..(i + 1) * d];
                let mut acc = C64::default();
                for (mij, xj) in row.iter().zip(psi.iter()) {
                    acc += mij * xj;
                }
                *o = acc;
            }
            psi.copy_from_slice(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdrift::{average_channel, qdrift_error_bound, Superoperator};
    use crate::quantum::{ctrl0, op_norm, random_hamiltonian, trace_distance, StateVector};
    use crate::rng::{derived_rng, master_rng, StreamDomain};

    #[test]
    fn twirl_of_z_vanishes_and_identity_survives() {
        let z = pauli_matrix(&PauliWord::new(vec![3]).unwrap());
        let hz = Hamiltonian::from_matrix(z.matrix().clone()).unwrap();
        assert!(op_norm(&pauli_twirl(&hz).unwrap()) < 1e-14);
        let hi = Hamiltonian::from_matrix(CMat::identity(2, 2)).unwrap();
        assert!(op_norm(&(pauli_twirl(&hi).unwrap() - CMat::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn twirl_equals_trace_average_for_random_hamiltonians() {
        for n in 1..=3usize {
            for seed in 0..8u64 {
                let h = random_hamiltonian(n, 1000 + seed).unwrap();
                let twirl = pauli_twirl(&h).unwrap();
                let d = h.dim();
                let expect = CMat::identity(d, d).scale(h.trace_average());
                assert!(op_norm(&(twirl - expect)) < 1e-10, "n={n} seed={seed}");
            }
        }
        let h5 = random_hamiltonian(5, 1).unwrap();
        assert!(pauli_twirl(&h5).is_err());
    }

    #[test]
    fn controlized_step_identity_word_and_zero_time() {
        let h = random_hamiltonian(1, 6).unwrap();
        let step = controlized_step(&h, &PauliWord::new(vec![0]).unwrap(), 0.4);
        let expect = DenseOperator::identity(2).kron(&h.expm(0.4));
        assert!(op_norm(&(step.matrix() - expect.matrix())) < 1e-12);
        let step0 = controlized_step(&h, &PauliWord::new(vec![3]).unwrap(), 0.0);
        assert!(op_norm(&(step0.matrix() - CMat::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn controlized_step_conjugation_identity() {
        // blocks are e^{−iXτ} and Z e^{−iXτ} Z = e^{+iXτ}
        let x = pauli_matrix(&PauliWord::new(vec![1]).unwrap());
        let hx = Hamiltonian::from_matrix(x.matrix().clone()).unwrap();
        let tau = 0.3;
        let step = controlized_step(&hx, &PauliWord::new(vec![3]).unwrap(), tau);
        let upper = hx.expm(tau);
        let lower = hx.expm(-tau);
        for i in 0..2 {
            for j in 0..2 {
                assert!((step.matrix()[(i, j)] - upper.matrix()[(i, j)]).norm() < 1e-12);
                assert!((step.matrix()[(2 + i, 2 + j)] - lower.matrix()[(i, j)]).norm() < 1e-12);
                assert!(step.matrix()[(i, 2 + j)].norm() < 1e-14);
                assert!(step.matrix()[(2 + i, j)].norm() < 1e-14);
            }
        }
    }

    #[test]
    fn plan_matches_iteration_count_and_handles_zero_time() {
        let plan = ControlizationPlan::new(1, 1.0, 0.25).unwrap();
        assert_eq!(plan.steps, 40);
        let zero = ControlizationPlan::new(1, 0.0, 0.25).unwrap();
        assert_eq!(zero.steps, 0);
        assert!(ControlizationPlan::new(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn effective_hamiltonian_block_form() {
        // (1/4^n) Σ_v ctrl(σ_v)(I⊗H)ctrl(σ_v) = diag(H0, 0) + (tr H/2^n) I
        for n in 1..=2usize {
            let h = random_hamiltonian(n, 50 + n as u64).unwrap();
            let d = h.dim();
            let id2 = DenseOperator::identity(2);
            let hemb = id2.kron(&DenseOperator::from_matrix(h.matrix().clone()).unwrap());
            let mut acc = CMat::zeros(2 * d, 2 * d);
            for word in PauliWord::enumerate(n) {
                let c = ctrl(&pauli_matrix(&word)).unwrap();
                acc += c.matrix() * hemb.matrix() * c.matrix();
            }
            acc = acc.scale(1.0 / (1usize << (2 * n)) as f64);
            let mut expect = CMat::identity(2 * d, 2 * d).scale(h.trace_average());
            let h0 = h.traceless();
            for i in 0..d {
                for j in 0..d {
                    expect[(i, j)] += h0[(i, j)];
                }
            }
            assert!(op_norm(&(acc - expect)) < 1e-10);
        }
    }

    #[test]
    fn pure_trace_hamiltonian_gives_identity_block() {
        let alpha = 0.83;
        let h = Hamiltonian::from_matrix(CMat::identity(2, 2).scale(alpha)).unwrap();
        let plan = ControlizationPlan::new(1, 0.9, 0.3).unwrap();
        let mut rng = master_rng(4);
        let rec = controlize_trajectory(&plan, &h, CtrlVariant::Ctrl0, &mut rng);
        // every trajectory is exactly e^{−iαt}·I on both blocks
        let phase = C64::from_polar(1.0, -alpha * 0.9);
        assert!(op_norm(&(rec.unitary.matrix() - CMat::identity(4, 4) * phase)) < 1e-10);
        assert_eq!(rec.query_count, plan.steps);
    }

    #[test]
    fn trajectory_channel_close_to_ctrl0_target() {
        // exact average channel at (n=1, t=1, ε=0.25 ⇒ N=40) within the
        // analytic bound of the ideal ctrl0(e^{−iH0t}) channel
        let h = random_hamiltonian(1, 77).unwrap();
        let mix = controlization_mixture(&h).unwrap();
        assert!((mix.lambda() - 1.0).abs() < 1e-12);
        let (t, eps) = (1.0, 0.25);
        let n = iteration_count(1.0, t, eps).unwrap();
        assert_eq!(n, 40);
        let avg = average_channel(&mix, t, n).unwrap();
        let ideal = ctrl0(&h.expm_traceless(t)).unwrap();
        let target = Superoperator::of_unitary(&ideal);
        let dist = trace_distance(&avg.choi_state(), &target.choi_state()).unwrap();
        assert!(dist <= qdrift_error_bound(1.0, t, n), "choi distance {dist}");
        assert!(dist <= eps);
    }

    #[test]
    fn ctrl_variant_is_x_conjugated_ctrl0() {
        let h = random_hamiltonian(1, 31).unwrap();
        let plan = ControlizationPlan::new(1, 0.6, 0.4).unwrap();
        let a = controlize_trajectory(
            &plan,
            &h,
            CtrlVariant::Ctrl0,
            &mut derived_rng(9, StreamDomain::Trajectory, 0),
        );
        let b = controlize_trajectory(
            &plan,
            &h,
            CtrlVariant::Ctrl,
            &mut derived_rng(9, StreamDomain::Trajectory, 0),
        );
        let x = pauli_matrix(&PauliWord::new(vec![1]).unwrap()).kron(&DenseOperator::identity(2));
        let conj = x.mul(&a.unitary).mul(&x);
        assert!(op_norm(&(conj.matrix() - b.unitary.matrix())) < 1e-12);
    }

    #[test]
    fn sampler_matches_explicit_trajectory_blocks() {
        for n in 1..=2usize {
            let h = random_hamiltonian(n, 60 + n as u64).unwrap();
            let d = h.dim();
            let steps = 101u64;
            let t = 0.8;
            let tau = t / steps as f64;
            let plan = ControlizationPlan { n, t, eps: 0.1, steps };
            let explicit = controlize_trajectory(
                &plan,
                &h,
                CtrlVariant::Ctrl0,
                &mut derived_rng(5, StreamDomain::Trajectory, 3),
            );
            let sampler = TwirledProductSampler::new(&h, tau).unwrap();
            // same stream ⇒ same words; compare action on the |1⟩ block
            for basis in 0..d {
                let mut rng = derived_rng(5, StreamDomain::Trajectory, 3);
                let mut drawer = BitDrawer::new(&mut rng);
                let mut psi = vec![C64::default(); d];
                psi[basis] = C64::new(1.0, 0.0);
                sampler.apply_sampled(steps, &mut psi, &mut drawer);
                for i in 0..d {
                    let reference = explicit.unitary.matrix()[(d + i, d + basis)];
                    assert!((psi[i] - reference).norm() < 1e-9, "n={n} basis={basis}");
                }
            }
            // |0⟩ block is the deterministic evolution
            let det = h.expm(t);
            for i in 0..d {
                for j in 0..d {
                    assert!((explicit.unitary.matrix()[(i, j)] - det.matrix()[(i, j)]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sampler_word_recording_round_trip() {
        let h = random_hamiltonian(1, 71).unwrap();
        let sampler = TwirledProductSampler::new(&h, 0.03).unwrap();
        let mut rng = master_rng(12);
        let mut drawer = BitDrawer::new(&mut rng);
        let mut words = Vec::new();
        sampler.draw_words(37, &mut drawer, &mut words);
        let mut psi: Vec<C64> = StateVector::haar_random(2, &mut master_rng(13))
            .amplitudes()
            .iter()
            .copied()
            .collect();
        let orig = psi.clone();
        sampler.apply_words(&words, &mut psi);
        sampler.apply_words_adjoint(&words, &mut psi);
        for (a, b) in psi.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
