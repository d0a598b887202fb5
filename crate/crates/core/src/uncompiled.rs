//! Fourier-series simulation driven by controlled dynamics: the standalone
//! subroutine (exact `ctrl0(e^{±ikπH0/2})` resources) and its concatenation
//! with controlization, where every controlled use is replaced by a sampled
//! Pauli-sandwich trajectory.
//!
//! States on `H_c ⊗ H` are tracked as the two control blocks `(ψ0, ψ1)`.
//! All outer-step operators are block structured: the controlled evolutions
//! act on one block each, the `Z`-rotations are block phases, and only the
//! central `e^{−i(cosφ X − sinφ Y)βt/N}` mixes the blocks.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::controlization::TwirledProductSampler;
use crate::error::{Error, Result};
use crate::fourier::{decay_diagnostics, FourierModel, PeriodicExtension};
use crate::qdrift::iteration_count;
use crate::quantum::{ctrl0, C64, CMat, DenseOperator, Hamiltonian, StateVector};
use crate::rng::{run_indexed, BitDrawer, ChaCha12Rng, RngExt, StreamDomain};

/// How the controlled evolutions `Q, R` are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtrlMode {
    /// Exact `ctrl0(e^{±ikπH0/2})` matrices (standalone subroutine).
    Exact,
    /// Controlization trajectories (the full concatenated algorithm).
    Trajectory,
}

/// Derived parameters of one uncompiled run.
#[derive(Debug, Clone)]
pub struct UncompiledPlan {
    pub model: FourierModel,
    /// Outer iteration count `N^(F)`.
    pub outer_steps: u64,
    pub t: f64,
    pub eps: f64,
    pub mode: CtrlMode,
    /// Controlization error budget `ε/(4N^(F))` per use (trajectory mode).
    pub inner_budget: Option<f64>,
    /// `N^(C)_k` for `k = −K..=K` (zero at `k = 0` and in exact mode).
    inner_steps: Vec<u64>,
}

impl UncompiledPlan {
    /// Standalone subroutine at total error ε: cutoff target `ε/(4t)`,
    /// outer count `N(β, t, ε/2)`.
    pub fn subroutine2(ext: &PeriodicExtension, t: f64, eps: f64) -> Result<Self> {
        Self::build(ext, t, eps, CtrlMode::Exact, eps / (4.0 * t), eps / 2.0)
    }

    /// Concatenated algorithm at total error ε: the subroutine pre-processing
    /// runs at ε/2 (cutoff target `ε/(8t)`, outer count `N(β, t, ε/4)`) and
    /// each controlization use gets budget `ε/(4N^(F))`.
    pub fn algorithm3(ext: &PeriodicExtension, t: f64, eps: f64) -> Result<Self> {
        Self::build(ext, t, eps, CtrlMode::Trajectory, eps / (8.0 * t), eps / 4.0)
    }

    fn build(
        ext: &PeriodicExtension,
        t: f64,
        eps: f64,
        mode: CtrlMode,
        cutoff_target: f64,
        qdrift_eps: f64,
    ) -> Result<Self> {
        if t <= 0.0 || eps <= 0.0 {
            return Err(Error::InvalidParameter(format!("need positive t, eps (got {t}, {eps})")));
        }
        let model = crate::fourier::select_cutoff(ext, cutoff_target)?;
        let beta = model.beta();
        let outer_steps = if beta < 1e-14 { 0 } else { iteration_count(beta, t, qdrift_eps)? };
        let (inner_budget, inner_steps) = match mode {
            CtrlMode::Exact => (None, vec![0; 2 * model.cutoff() + 1]),
            CtrlMode::Trajectory => {
                let budget = eps / (4.0 * outer_steps.max(1) as f64);
                let steps = model
                    .k_values()
                    .map(|k| {
                        if k == 0 || outer_steps == 0 {
                            Ok(0)
                        } else {
                            iteration_count(1.0, k.unsigned_abs() as f64 * PI / 2.0, budget)
                        }
                    })
                    .collect::<Result<Vec<u64>>>()?;
                (Some(budget), steps)
            }
        };
        Ok(Self { model, outer_steps, t, eps, mode, inner_budget, inner_steps })
    }

    pub fn inner_steps_for(&self, k: i64) -> u64 {
        self.inner_steps[(k + self.model.cutoff() as i64) as usize]
    }

    /// Exact expectation of the per-trajectory black-box query count,
    /// `N^(F) Σ_k p_k · 2N^(C)_k`.
    pub fn expected_queries(&self) -> f64 {
        let per_step: f64 = self
            .model
            .probabilities()
            .iter()
            .zip(self.inner_steps.iter())
            .map(|(p, &s)| p * 2.0 * s as f64)
            .sum();
        self.outer_steps as f64 * per_step
    }

    /// Samples a trajectory's query count without evolving any state.
    pub fn sample_query_count(&self, rng: &mut ChaCha12Rng) -> u64 {
        let probs = self.model.probabilities();
        let mut total = 0u64;
        for _ in 0..self.outer_steps {
            let idx = rng.sample_cdf(&probs);
            total += 2 * self.inner_steps[idx];
        }
        total
    }
}

/// Expected query count and the runtime constant `C_{3,f}` for the
/// concatenated algorithm, from the plan's exact parameters.
pub fn analytic_cost_uncompiled(ext: &PeriodicExtension, t: f64, eps: f64) -> Result<(f64, f64)> {
    let plan = UncompiledPlan::algorithm3(ext, t, eps)?;
    let c3f = decay_diagnostics(ext, &plan.model).c3f;
    Ok((plan.expected_queries(), c3f))
}

/// One trajectory's output: the pre-trace pure state on `H_c ⊗ H`, the
/// sampled outer indices, and the black-box query count.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub state: StateVector,
    pub k_sequence: Vec<i64>,
    pub query_count: u64,
}

/// A full Monte-Carlo run.
#[derive(Debug)]
pub struct RunReport {
    pub trajectories: Vec<TrajectoryOutcome>,
    pub expected_queries: f64,
    pub outer_steps: u64,
    pub cutoff: usize,
    pub beta: f64,
}

impl RunReport {
    /// The pre-trace output states of all trajectories.
    pub fn trajectory_states(&self) -> Vec<StateVector> {
        self.trajectories.iter().map(|t| t.state.clone()).collect()
    }

    pub fn mean_query_count(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.query_count as f64).sum::<f64>()
            / self.trajectories.len() as f64
    }
}

/// The operators every trajectory of a plan shares, built once.
struct StepResources {
    /// `e^{−iH0·kπ/2}` keyed by k (exact mode).
    exact_ctrl: HashMap<i64, CMat>,
    /// `e^{−iH·kπ/2}` keyed by k (trajectory-mode deterministic block).
    full_evolution: HashMap<i64, CMat>,
    /// Twirled-product samplers keyed by k; the R at k reuses the −k entry.
    samplers: HashMap<i64, TwirledProductSampler>,
}

impl StepResources {
    fn build(plan: &UncompiledPlan, h: &Hamiltonian) -> Result<Self> {
        let mut exact_ctrl = HashMap::new();
        let mut full_evolution = HashMap::new();
        let mut samplers = HashMap::new();
        for k in plan.model.k_values() {
            if k == 0 {
                continue;
            }
            let t_k = k as f64 * PI / 2.0;
            match plan.mode {
                CtrlMode::Exact => {
                    exact_ctrl.insert(k, h.expm_traceless(t_k).into_matrix());
                }
                CtrlMode::Trajectory => {
                    full_evolution.insert(k, h.expm(t_k).into_matrix());
                    let steps = plan.inner_steps_for(k);
                    if steps > 0 {
                        let tau = t_k / steps as f64;
                        samplers.insert(k, TwirledProductSampler::new(h, tau)?);
                    }
                }
            }
        }
        Ok(Self { exact_ctrl, full_evolution, samplers })
    }
}

#[inline]
fn scale_block(psi: &mut [C64], phase: C64) {
    for a in psi {
        *a *= phase;
    }
}

#[inline]
fn apply_mat(m: &CMat, psi: &mut [C64], scratch: &mut [C64]) {
    let d = psi.len();
    for (i, slot) in scratch.iter_mut().enumerate() {
        let mut acc = C64::default();
        for j in 0..d {
            acc += m[(i, j)] * psi[j];
        }
        *slot = acc;
    }
    psi.copy_from_slice(scratch);
}

#[inline]
fn apply_mat_adjoint(m: &CMat, psi: &mut [C64], scratch: &mut [C64]) {
    let d = psi.len();
    for (i, slot) in scratch.iter_mut().enumerate() {
        let mut acc = C64::default();
        for j in 0..d {
            acc += m[(j, i)].conj() * psi[j];
        }
        *slot = acc;
    }
    psi.copy_from_slice(scratch);
}

/// Central block-mixing rotation `e^{−i(cosφ X − sinφ Y)θ} ⊗ I`.
#[inline]
pub(crate) fn xy_rotation_blocks(psi0: &mut [C64], psi1: &mut [C64], phi: f64, theta: f64) {
    let c = C64::new(theta.cos(), 0.0);
    let ms = C64::new(0.0, -theta.sin());
    let upper = ms * C64::from_polar(1.0, phi);
    let lower = ms * C64::from_polar(1.0, -phi);
    for (a, b) in psi0.iter_mut().zip(psi1.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x + upper * y;
        *b = lower * x + c * y;
    }
}

fn run_one_trajectory(
    plan: &UncompiledPlan,
    res: &StepResources,
    psi: &StateVector,
    rng: &mut ChaCha12Rng,
) -> TrajectoryOutcome {
    let d = psi.dim();
    let mut psi0: Vec<C64> = psi.amplitudes().iter().map(|a| a * FRAC_1_SQRT_2).collect();
    let mut psi1 = psi0.clone();
    let mut scratch = vec![C64::default(); d];
    let probs = plan.model.probabilities();
    let theta = plan.model.beta() * plan.t / plan.outer_steps.max(1) as f64;
    let mut k_sequence = Vec::with_capacity(plan.outer_steps as usize);
    let mut query_count = 0u64;
    for _ in 0..plan.outer_steps {
        let k = rng.sample_cdf(&probs) as i64 - plan.model.cutoff() as i64;
        k_sequence.push(k);
        let phi = plan.model.phase(k);
        // e^{−ikπZ/4} ⊗ I
        let quarter = C64::from_polar(1.0, -(k as f64) * PI / 4.0);
        scale_block(&mut psi0, quarter);
        scale_block(&mut psi1, quarter.conj());
        if k != 0 {
            match plan.mode {
                CtrlMode::Exact => apply_mat(&res.exact_ctrl[&k], &mut psi0, &mut scratch),
                CtrlMode::Trajectory => {
                    let steps = plan.inner_steps_for(k);
                    apply_mat(&res.full_evolution[&k], &mut psi0, &mut scratch);
                    let mut drawer = BitDrawer::new(rng);
                    res.samplers[&k].apply_sampled(steps, &mut psi1, &mut drawer);
                    query_count += steps;
                }
            }
        }
        xy_rotation_blocks(&mut psi0, &mut psi1, phi, theta);
        if k != 0 {
            match plan.mode {
                // R = ctrl0(e^{+ikπH0/2}) is the adjoint evolution
                CtrlMode::Exact => apply_mat_adjoint(&res.exact_ctrl[&k], &mut psi0, &mut scratch),
                CtrlMode::Trajectory => {
                    // controlization of −H at time kπ/2: fresh words at −τ
                    let steps = plan.inner_steps_for(k);
                    apply_mat(&res.full_evolution[&-k], &mut psi0, &mut scratch);
                    let mut drawer = BitDrawer::new(rng);
                    res.samplers[&-k].apply_sampled(steps, &mut psi1, &mut drawer);
                    query_count += steps;
                }
            }
        }
        scale_block(&mut psi0, quarter.conj());
        scale_block(&mut psi1, quarter);
    }
    let amps: Vec<C64> = psi0.into_iter().chain(psi1).collect();
    let state = StateVector::from_amplitudes(amps).expect("unitary evolution preserves norm");
    TrajectoryOutcome { state, k_sequence, query_count }
}

fn run_many(
    plan: &UncompiledPlan,
    h: &Hamiltonian,
    psi: &StateVector,
    master_seed: u64,
    trajectories: usize,
) -> Result<RunReport> {
    if psi.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "input state dim {} vs system dim {}",
            psi.dim(),
            h.dim()
        )));
    }
    if h.traceless_norm() > 1.0 + 1e-9 {
        return Err(Error::NumericalGuard(format!("‖H0‖ = {} exceeds 1", h.traceless_norm())));
    }
    let res = StepResources::build(plan, h)?;
    let outcomes = run_indexed(trajectories, master_seed, StreamDomain::Trajectory, |_, rng| {
        run_one_trajectory(plan, &res, psi, rng)
    });
    Ok(RunReport {
        trajectories: outcomes,
        expected_queries: plan.expected_queries(),
        outer_steps: plan.outer_steps,
        cutoff: plan.model.cutoff(),
        beta: plan.model.beta(),
    })
}

/// Standalone Fourier-series simulation with exact controlled resources.
pub fn run_subroutine2(
    ext: &PeriodicExtension,
    h: &Hamiltonian,
    psi: &StateVector,
    t: f64,
    eps: f64,
    master_seed: u64,
    trajectories: usize,
) -> Result<(UncompiledPlan, RunReport)> {
    let plan = UncompiledPlan::subroutine2(ext, t, eps)?;
    let report = run_many(&plan, h, psi, master_seed, trajectories)?;
    Ok((plan, report))
}

/// The concatenated algorithm: every controlled use is a controlization
/// trajectory with error budget `ε/(4N^(F))` and time `kπ/2`.
pub fn run_algorithm3(
    ext: &PeriodicExtension,
    h: &Hamiltonian,
    psi: &StateVector,
    t: f64,
    eps: f64,
    master_seed: u64,
    trajectories: usize,
) -> Result<(UncompiledPlan, RunReport)> {
    let plan = UncompiledPlan::algorithm3(ext, t, eps)?;
    let report = run_many(&plan, h, psi, master_seed, trajectories)?;
    Ok((plan, report))
}

/// The exact outer-step unitary realized with ideal controlled resources:
/// `(e^{ikπZ/4}⊗I) · ctrl0(e^{ikπH0/2}) · (e^{−i(cosφ X − sinφ Y)βt/N}⊗I) ·
/// ctrl0(e^{−ikπH0/2}) · (e^{−ikπZ/4}⊗I)`.
pub fn fourier_step_unitary(
    h: &Hamiltonian,
    k: i64,
    phi: f64,
    beta: f64,
    t: f64,
    n: u64,
) -> DenseOperator {
    let d = h.dim();
    let kf = k as f64;
    let id = DenseOperator::identity(d);
    let z_phase = |sign: f64| {
        let mut m = CMat::zeros(2 * d, 2 * d);
        let up = C64::from_polar(1.0, sign * kf * PI / 4.0);
        for i in 0..d {
            m[(i, i)] = up;
            m[(d + i, d + i)] = up.conj();
        }
        DenseOperator::from_matrix(m).unwrap()
    };
    let q = ctrl0(&h.expm_traceless(kf * PI / 2.0)).unwrap();
    let r = ctrl0(&h.expm_traceless(-kf * PI / 2.0)).unwrap();
    let theta = beta * t / n as f64;
    let rot = {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = C64::new(theta.cos(), 0.0);
        m[(1, 1)] = C64::new(theta.cos(), 0.0);
        m[(0, 1)] = C64::new(0.0, -theta.sin()) * C64::from_polar(1.0, phi);
        m[(1, 0)] = C64::new(0.0, -theta.sin()) * C64::from_polar(1.0, -phi);
        DenseOperator::from_matrix(m).unwrap().kron(&id)
    };
    z_phase(1.0).mul(&r).mul(&rot).mul(&q).mul(&z_phase(-1.0))
}

/// The block anti-diagonal generator of one outer step,
/// `[[0, e^{iφ}e^{ikπ(H0+I)/2}], [e^{−iφ}e^{−ikπ(H0+I)/2}, 0]]`.
pub fn step_effective_hamiltonian(h: &Hamiltonian, k: i64, phi: f64) -> CMat {
    let d = h.dim();
    let kf = k as f64;
    // e^{ikπ(H0+I)/2} = e^{ikπ/2} e^{ikπH0/2}
    let b =
        h.expm_traceless(-kf * PI / 2.0).into_matrix() * C64::from_polar(1.0, kf * PI / 2.0 + phi);
    let mut m = CMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, d + j)] = b[(i, j)];
            m[(d + i, j)] = b[(j, i)].conj();
        }
    }
    m
}
