//! Generic randomized product-formula engine (qDRIFT, after Campbell 2019):
//! the sufficient iteration count, trajectory sampling over weighted term
//! mixtures, the analytic error bound, and an exact average-channel oracle
//! for instances small enough to enumerate.

use crate::error::{Error, Result};
use crate::quantum::{C64, CMat, DenseOperator};
use crate::rng::{ChaCha12Rng, RngExt};

/// Sufficient iteration count `ceil(max(10λ²t²/ε, 5λt/2))`, floored at 1.
pub fn iteration_count(lambda: f64, t: f64, eps: f64) -> Result<u64> {
    if lambda <= 0.0 || t <= 0.0 || eps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "iteration_count needs positive (lambda, t, eps), got ({lambda}, {t}, {eps})"
        )));
    }
    let raw = (10.0 * lambda * lambda * t * t / eps).max(2.5 * lambda * t);
    Ok((raw.ceil() as u64).max(1))
}

/// Analytic error bound `(2λ²t²/N)·e^{2λt/N}` on the averaged channel,
/// measured as half the diamond-norm distance to the target.
pub fn qdrift_error_bound(lambda: f64, t: f64, n: u64) -> f64 {
    let lt = lambda * t;
    (2.0 * lt * lt / n as f64) * (2.0 * lt / n as f64).exp()
}

/// One term of a Hamiltonian mixture: a positive weight, a generator that
/// produces the unitary `e^{−iH_jτ}` for a requested signed `τ`, and the
/// number of black-box queries one use of the generator costs.
pub struct MixtureTerm {
    pub weight: f64,
    pub generator: Box<dyn Fn(f64) -> DenseOperator + Sync + Send>,
    pub cost: u64,
}

/// A weighted mixture `Σ_j h_j H_j` with `λ = Σ h_j` and sampling
/// probabilities `p_j = h_j/λ`.
pub struct TermMixture {
    terms: Vec<MixtureTerm>,
    lambda: f64,
    probabilities: Vec<f64>,
}

impl TermMixture {
    pub fn new(terms: Vec<MixtureTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one term".into()));
        }
        if terms.iter().any(|t| t.weight <= 0.0) {
            return Err(Error::InvalidParameter("all mixture weights must be positive".into()));
        }
        let lambda: f64 = terms.iter().map(|t| t.weight).sum();
        let probabilities = terms.iter().map(|t| t.weight / lambda).collect();
        Ok(Self { terms, lambda, probabilities })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn term(&self, j: usize) -> &MixtureTerm {
        &self.terms[j]
    }
}

/// One sampled product-formula trajectory.
pub struct TrajectoryRecord {
    pub unitary: DenseOperator,
    pub sampled_indices: Vec<usize>,
    pub query_count: u64,
    pub rng_stream: u64,
}

/// Samples the ordered product of `N` step unitaries, each generator called
/// with `τ = tλ/N`; indices are drawn i.i.d. with probabilities `p_j`.
pub fn sample_trajectory(
    mix: &TermMixture,
    t: f64,
    n: u64,
    rng: &mut ChaCha12Rng,
) -> TrajectoryRecord {
    let tau = t * mix.lambda / n as f64;
    let mut sampled = Vec::with_capacity(n as usize);
    let mut query_count = 0u64;
    // the step unitary for a given index is fixed along the trajectory, so
    // it is generated once per distinct index and reused
    let mut cache: Vec<Option<DenseOperator>> = (0..mix.len()).map(|_| None).collect();
    let mut unitary: Option<DenseOperator> = None;
    for _ in 0..n {
        let j = rng.sample_cdf(&mix.probabilities);
        sampled.push(j);
        query_count += mix.term(j).cost;
        let step = cache[j].get_or_insert_with(|| (mix.term(j).generator)(tau));
        unitary = Some(match unitary {
            None => step.clone(),
            Some(u) => step.mul(&u),
        });
    }
    let unitary = unitary.unwrap_or_else(|| {
        let dim = (mix.term(0).generator)(0.0).dim();
        DenseOperator::identity(dim)
    });
    TrajectoryRecord { unitary, sampled_indices: sampled, query_count, rng_stream: 0 }
}

/// A superoperator on a `d`-dimensional system, stored as the `d²×d²` matrix
/// acting on vectorized operators: for a mixed-unitary channel
/// `S[(i,j),(k,l)] = Σ_j p_j U[i,k] U*[j,l]`.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: CMat,
}

impl Superoperator {
    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: CMat::identity(dim * dim, dim * dim) }
    }

    pub fn of_unitary(u: &DenseOperator) -> Self {
        let m = u.matrix();
        Self { dim: u.dim(), matrix: m.kronecker(&m.conjugate()) }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self { dim: self.dim, matrix: &self.matrix * &rhs.matrix }
    }

    pub fn scale_add(&mut self, w: f64, rhs: &Self) {
        self.matrix += rhs.matrix.scale(w);
    }

    pub fn power(&self, n: u64) -> Self {
        let mut result = Superoperator::identity(self.dim);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = base.compose(&result);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        result
    }

    /// Choi state `(Λ ⊗ I)(|Ω⟩⟨Ω|)` with `|Ω⟩` the normalized maximally
    /// entangled state: `J[(i,a),(j,b)] = S[(i,j),(a,b)] / d`.
    pub fn choi_state(&self) -> CMat {
        let d = self.dim;
        let mut j_mat = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for jj in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        j_mat[(i * d + a, jj * d + b)] =
                            self.matrix[(i * d + jj, a * d + b)] / C64::new(d as f64, 0.0);
                    }
                }
            }
        }
        j_mat
    }

    /// Minimum eigenvalue of the Choi state (≥ −tol for complete positivity).
    pub fn choi_min_eigenvalue(&self) -> f64 {
        let (vals, _) = crate::quantum::eigh(&self.choi_state());
        vals[0]
    }

    /// `‖tr_1 J − I/d‖_op`, zero for trace-preserving maps.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let d = self.dim;
        let j_mat = self.choi_state();
        let mut tr1 = CMat::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = C64::default();
                for i in 0..d {
                    acc += j_mat[(i * d + a, i * d + b)];
                }
                tr1[(a, b)] = acc;
            }
        }
        crate::quantum::op_norm(&(tr1 - CMat::identity(d, d).scale(1.0 / d as f64)))
    }
}

/// Exact `(Σ_j p_j U_j ⊗ U_j*)^N` superoperator of the averaged qDRIFT
/// channel. Guarded to instances small enough to enumerate.
pub fn average_channel(mix: &TermMixture, t: f64, n: u64) -> Result<Superoperator> {
    let dim = (mix.term(0).generator)(0.0).dim();
    if mix.len() > 64 || dim > 8 {
        return Err(Error::InstanceTooLarge(format!(
            "average_channel guard: {} terms, dim {}",
            mix.len(),
            dim
        )));
    }
    if n == 0 {
        return Ok(Superoperator::identity(dim));
    }
    let tau = t * mix.lambda / n as f64;
    let mut step = Superoperator { dim, matrix: CMat::zeros(dim * dim, dim * dim) };
    for j in 0..mix.len() {
        let u = (mix.term(j).generator)(tau);
        step.scale_add(mix.probabilities[j], &Superoperator::of_unitary(&u));
    }
    Ok(step.power(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{op_norm, pauli_matrix, random_hamiltonian, trace_distance, PauliWord};
    use crate::rng::{derived_rng, master_rng, StreamDomain};

    fn single_term_mixture(seed: u64) -> (TermMixture, crate::quantum::Hamiltonian) {
        let h = random_hamiltonian(1, seed).unwrap();
        let hc = h.clone();
        let mix = TermMixture::new(vec![MixtureTerm {
            weight: 1.0,
            generator: Box::new(move |tau| hc.expm(tau)),
            cost: 1,
        }])
        .unwrap();
        (mix, h)
    }

    fn twirl_mixture(seed: u64) -> TermMixture {
        let h = random_hamiltonian(1, seed).unwrap();
        let terms: Vec<MixtureTerm> = PauliWord::enumerate(1)
            .map(|w| {
                let h = h.clone();
                MixtureTerm {
                    weight: 0.25,
                    generator: Box::new(move |tau| {
                        let p = pauli_matrix(&w);
                        p.mul(&h.expm(tau)).mul(&p)
                    }),
                    cost: 1,
                }
            })
            .collect();
        TermMixture::new(terms).unwrap()
    }

    #[test]
    fn iteration_count_hand_values() {
        // max(10·1·1/0.1, 2.5) = 100
        assert_eq!(iteration_count(1.0, 1.0, 0.1).unwrap(), 100);
        // max(10·4·1/0.5, 5) = 80
        assert_eq!(iteration_count(2.0, 1.0, 0.5).unwrap(), 80);
        // max(0.2, 0.25) → ceil = 1
        assert_eq!(iteration_count(1.0, 0.1, 0.5).unwrap(), 1);
        assert!(iteration_count(0.0, 1.0, 0.1).is_err());
        assert!(iteration_count(1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn error_bound_hand_value_and_monotonicity() {
        let b = qdrift_error_bound(1.0, 1.0, 100);
        assert!((b - 0.02 * (0.02f64).exp()).abs() < 1e-12);
        assert!((b - 0.0204040).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for n in [2u64, 4, 8, 16, 32, 64, 128] {
            let v = qdrift_error_bound(1.0, 1.0, n);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn bound_beats_target_when_using_iteration_count() {
        // reproduces the (2ε/5)e^{4/5} < ε chain at sampled (λ, t, ε) triples
        for &(lambda, t) in &[(0.5, 0.5), (1.0, 1.0), (2.0, 1.5), (3.0, 0.7)] {
            for &eps in &[1.0, 0.5, 0.2, 0.1, 0.05, 0.01] {
                let n = iteration_count(lambda, t, eps).unwrap();
                assert!(qdrift_error_bound(lambda, t, n) < eps, "λ={lambda} t={t} ε={eps}");
            }
        }
    }

    #[test]
    fn single_term_trajectory_is_exact() {
        let (mix, h) = single_term_mixture(3);
        let mut rng = master_rng(1);
        let t = 0.9;
        let rec = sample_trajectory(&mix, t, 17, &mut rng);
        assert!(op_norm(&(rec.unitary.matrix() - h.expm(t).matrix())) < 1e-9);
        assert_eq!(rec.query_count, 17);
        assert_eq!(rec.sampled_indices.len(), 17);
    }

    #[test]
    fn zero_time_trajectory_is_identity_with_full_query_count() {
        let (mix, _) = single_term_mixture(4);
        let mut rng = master_rng(2);
        let rec = sample_trajectory(&mix, 0.0, 9, &mut rng);
        assert!(op_norm(&(rec.unitary.matrix() - CMat::identity(2, 2))) < 1e-12);
        assert_eq!(rec.query_count, 9);
    }

    #[test]
    fn commuting_terms_telescope() {
        // two equal-weight copies of Z/2: every trajectory equals e^{−iZt/2}
        let z = pauli_matrix(&PauliWord::new(vec![3]).unwrap());
        let hz = crate::quantum::Hamiltonian::from_matrix(z.matrix().scale(0.5)).unwrap();
        let mk = |h: crate::quantum::Hamiltonian| MixtureTerm {
            weight: 0.5,
            generator: Box::new(move |tau| h.expm(tau)),
            cost: 1,
        };
        let mix = TermMixture::new(vec![mk(hz.clone()), mk(hz.clone())]).unwrap();
        assert!((mix.lambda() - 1.0).abs() < 1e-15);
        let mut rng = master_rng(8);
        let t = 1.3;
        let rec = sample_trajectory(&mix, t, 25, &mut rng);
        let expect = hz.expm(t);
        assert!(op_norm(&(rec.unitary.matrix() - expect.matrix())) < 1e-9);
    }

    #[test]
    fn trajectories_are_unitary_and_deterministic() {
        let mix = twirl_mixture(5);
        let mut r1 = derived_rng(77, StreamDomain::Trajectory, 0);
        let mut r2 = derived_rng(77, StreamDomain::Trajectory, 0);
        let a = sample_trajectory(&mix, 1.0, 60, &mut r1);
        let b = sample_trajectory(&mix, 1.0, 60, &mut r2);
        assert_eq!(a.sampled_indices, b.sampled_indices);
        assert!(a.unitary.unitarity_deviation() < 1e-9);
        assert!(op_norm(&(a.unitary.matrix() - b.unitary.matrix())) == 0.0);
    }

    #[test]
    fn average_channel_single_term_and_empty_product() {
        let (mix, h) = single_term_mixture(6);
        let s = average_channel(&mix, 0.7, 12).unwrap();
        let exact = Superoperator::of_unitary(&h.expm(0.7));
        assert!(op_norm(&(&s.matrix - &exact.matrix)) < 1e-9);
        let id = average_channel(&mix, 0.7, 0).unwrap();
        assert!(op_norm(&(&id.matrix - &Superoperator::identity(2).matrix)) < 1e-15);
    }

    #[test]
    fn average_channel_is_cptp() {
        let mix = twirl_mixture(9);
        let s = average_channel(&mix, 1.0, 40).unwrap();
        assert!(s.choi_min_eigenvalue() >= -1e-8);
        assert!(s.trace_preservation_deviation() < 1e-8);
    }

    #[test]
    fn monte_carlo_mean_converges_to_average_channel() {
        let mix = twirl_mixture(10);
        let (t, n) = (0.8, 20);
        let exact = average_channel(&mix, t, n).unwrap();
        let trials = 10_000usize;
        let supers = crate::rng::run_indexed(trials, 123, StreamDomain::Trajectory, |_, rng| {
            Superoperator::of_unitary(&sample_trajectory(&mix, t, n, rng).unitary).matrix
        });
        let mut mean = CMat::zeros(4, 4);
        for s in &supers {
            mean += s;
        }
        mean /= C64::new(trials as f64, 0.0);
        let tol = 5.0 / (trials as f64).sqrt();
        let max_dev = (&mean - &exact.matrix).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(max_dev <= tol, "entrywise deviation {max_dev} > {tol}");
    }

    #[test]
    fn average_channel_within_lemma_bound_of_target() {
        // n=1 uniform-Pauli-conjugate mixture: the averaged Hamiltonian is
        // (tr H / 2) I, so the target channel is the identity channel
        let mix = twirl_mixture(11);
        let (t, n) = (1.0, 40u64);
        let avg = average_channel(&mix, t, n).unwrap();
        let target = Superoperator::identity(2);
        let dist = trace_distance(&avg.choi_state(), &target.choi_state()).unwrap();
        assert!(dist <= qdrift_error_bound(1.0, t, n), "choi distance {dist}");
    }

    #[test]
    fn average_channel_guard() {
        let h = random_hamiltonian(4, 2).unwrap();
        let mix_big = TermMixture::new(vec![MixtureTerm {
            weight: 1.0,
            generator: Box::new(move |tau| h.expm(tau)),
            cost: 1,
        }])
        .unwrap();
        assert!(matches!(average_channel(&mix_big, 1.0, 4), Err(Error::InstanceTooLarge(_))));
    }
}

