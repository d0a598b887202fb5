//! Error estimators and benchmark statistics: 1-norm state error against a
//! target, per-trajectory mean-square error, Choi-state channel distance,
//! bootstrap confidence intervals, and log-log scaling fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qdrift::Superoperator;
use crate::quantum::{partial_trace_first_qubit, trace_distance, CMat, StateVector, C64};
use crate::rng::{derived_rng, StreamDomain};
use rand::Rng;

const BOOTSTRAP_RESAMPLES: usize = 200;
/// Fixed stream for bootstrap resampling; recorded so reruns are bit-exact.
pub const BOOTSTRAP_SEED: u64 = 0xB007;

/// A point estimate with a bootstrap confidence interval.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorEstimate {
    #[serde(rename = "pointEstimate")]
    pub point_estimate: f64,
    #[serde(rename = "bootstrapCI")]
    pub bootstrap_ci: (f64, f64),
    #[serde(rename = "bootstrapSE")]
    pub bootstrap_se: f64,
    #[serde(rename = "sampleCount")]
    pub sample_count: usize,
    #[serde(rename = "inputStates")]
    pub input_states: String,
}

/// Reduces a trajectory state to the target dimension: pre-trace states on
/// `H_c ⊗ H` are traced over the control qubit, system states pass through.
pub fn reduced_density(state: &StateVector, target_dim: usize) -> Result<CMat> {
    if state.dim() == target_dim {
        Ok(state.density())
    } else if state.dim() == 2 * target_dim {
        partial_trace_first_qubit(&state.density())
    } else {
        Err(Error::DimensionMismatch(format!(
            "trajectory dim {} incompatible with target dim {}",
            state.dim(),
            target_dim
        )))
    }
}

fn trajectory_densities(target_dim: usize, trajectories: &[StateVector]) -> Result<Vec<CMat>> {
    trajectories.iter().map(|s| reduced_density(s, target_dim)).collect()
}

fn mean_of(densities: &[CMat], indices: Option<&[usize]>) -> CMat {
    let d = densities[0].nrows();
    let mut acc = CMat::zeros(d, d);
    match indices {
        None => {
            for rho in densities {
                acc += rho;
            }
            acc / C64::new(densities.len() as f64, 0.0)
        }
        Some(idx) => {
            for &i in idx {
                acc += &densities[i];
            }
            acc / C64::new(idx.len() as f64, 0.0)
        }
    }
}

fn bootstrap_statistic(
    densities: &[CMat],
    statistic: impl Fn(&[usize]) -> f64,
) -> ((f64, f64), f64) {
    let n = densities.len();
    let mut rng = derived_rng(BOOTSTRAP_SEED, StreamDomain::Repetition, 0);
    let mut values = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut indices = vec![0usize; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in indices.iter_mut() {
            *slot = (rng.gen::<u64>() % n as u64) as usize;
        }
        values.push(statistic(&indices));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = values[(0.025 * BOOTSTRAP_RESAMPLES as f64) as usize];
    let hi = values[((0.975 * BOOTSTRAP_RESAMPLES as f64) as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    ((lo, hi), var.sqrt())
}

/// 1-norm distance between the empirical average density operator and the
/// target projector, with a percentile bootstrap CI.
pub fn state_error(
    target: &StateVector,
    trajectories: &[StateVector],
    sample_floor: usize,
) -> Result<ErrorEstimate> {
    if trajectories.len() < sample_floor.max(100) {
        return Err(Error::InvalidParameter(format!(
            "state_error needs at least {} trajectories, got {}",
            sample_floor.max(100),
            trajectories.len()
        )));
    }
    let densities = trajectory_densities(target.dim(), trajectories)?;
    let target_rho = target.density();
    let point = trace_distance(&mean_of(&densities, None), &target_rho)?;
    let (ci, se) = bootstrap_statistic(&densities, |idx| {
        trace_distance(&mean_of(&densities, Some(idx)), &target_rho).unwrap_or(f64::NAN)
    });
    Ok(ErrorEstimate {
        point_estimate: point,
        bootstrap_ci: ci,
        bootstrap_se: se,
        sample_count: trajectories.len(),
        input_states: "fixed".into(),
    })
}

/// Mean over trajectories of `‖target − ρ_j‖₁²`, the single-shot
/// mean-square error, with bootstrap CI.
pub fn mean_square_error(
    target: &StateVector,
    trajectories: &[StateVector],
    sample_floor: usize,
) -> Result<ErrorEstimate> {
    if trajectories.len() < sample_floor.max(100) {
        return Err(Error::InvalidParameter(format!(
            "mean_square_error needs at least {} trajectories, got {}",
            sample_floor.max(100),
            trajectories.len()
        )));
    }
    let densities = trajectory_densities(target.dim(), trajectories)?;
    let target_rho = target.density();
    let squares: Vec<f64> = densities
        .iter()
        .map(|rho| trace_distance(rho, &target_rho).map(|d| d * d))
        .collect::<Result<_>>()?;
    let point = squares.iter().sum::<f64>() / squares.len() as f64;
    let (ci, se) = bootstrap_statistic(&densities, |idx| {
        idx.iter().map(|&i| squares[i]).sum::<f64>() / idx.len() as f64
    });
    Ok(ErrorEstimate {
        point_estimate: point,
        bootstrap_ci: ci,
        bootstrap_se: se,
        sample_count: trajectories.len(),
        input_states: "fixed".into(),
    })
}

/// `‖Choi(ideal) − Choi(avg)‖₁` — the computable channel-distance proxy; it
/// lower-bounds the diamond-norm distance.
pub fn choi_error(ideal: &Superoperator, avg: &Superoperator) -> Result<f64> {
    if ideal.dim != avg.dim {
        return Err(Error::DimensionMismatch(format!(
            "choi_error: dims {} vs {}",
            ideal.dim, avg.dim
        )));
    }
    trace_distance(&ideal.choi_state(), &avg.choi_state())
}

/// A least-squares power-law fit on log-log axes.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    #[serde(rename = "slopeCI")]
    pub slope_ci: (f64, f64),
    pub r2: f64,
}

fn lsq_slope(lx: &[f64], ly: &[f64]) -> (f64, f64) {
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    (slope, intercept)
}

/// Fits `count ≈ A·eps^slope` over `(eps, count)` pairs. Requires at least
/// four points spanning a nondegenerate eps range.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "fit_scaling needs >= 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(e, c)| e <= 0.0 || c <= 0.0) {
        return Err(Error::InvalidParameter("fit_scaling needs positive (eps, count)".into()));
    }
    let span = {
        let max = points.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        let min = points.iter().map(|p| p.0).fold(f64::MAX, f64::min);
        (max / min).log10()
    };
    // the canonical grid {0.3, 0.1, 0.03, 0.01} spans 1.48 decades
    if span < 1.25 {
        return Err(Error::Degenerate(format!("eps spread of {span:.2} decades is too narrow")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = lsq_slope(&lx, &ly);
    let ss_res: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };

    // pairs bootstrap for the slope CI
    let mut rng = derived_rng(BOOTSTRAP_SEED, StreamDomain::Repetition, 1);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    while slopes.len() < BOOTSTRAP_RESAMPLES {
        let idx: Vec<usize> = (0..points.len())
            .map(|_| (rng.gen::<u64>() % points.len() as u64) as usize)
            .collect();
        let bx: Vec<f64> = idx.iter().map(|&i| lx[i]).collect();
        let distinct = bx.iter().any(|&v| (v - bx[0]).abs() > 1e-12);
        if !distinct {
            continue;
        }
        let by: Vec<f64> = idx.iter().map(|&i| ly[i]).collect();
        slopes.push(lsq_slope(&bx, &by).0);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = slopes[(0.025 * BOOTSTRAP_RESAMPLES as f64) as usize];
    let hi = slopes[((0.975 * BOOTSTRAP_RESAMPLES as f64) as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    Ok(ScalingFit { points: points.to_vec(), slope, slope_ci: (lo, hi), r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{random_hamiltonian, DenseOperator};
    use crate::rng::master_rng;

    #[test]
    fn state_error_vanishes_for_perfect_trajectories() {
        let target = StateVector::basis_state(2, 0);
        let trajs: Vec<StateVector> = (0..120).map(|_| target.clone()).collect();
        let est = state_error(&target, &trajs, 100).unwrap();
        assert!(est.point_estimate < 1e-12);
        assert!(est.bootstrap_ci.0 <= est.point_estimate + 1e-12);
        assert_eq!(est.sample_count, 120);
    }

    #[test]
    fn state_error_of_even_mixture() {
        // 50/50 |0⟩, |1⟩ against target |0⟩: ‖|0⟩⟨0| − I/2‖₁ = 1
        let target = StateVector::basis_state(2, 0);
        let mut trajs = Vec::new();
        for i in 0..200 {
            trajs.push(StateVector::basis_state(2, i % 2));
        }
        let est = state_error(&target, &trajs, 100).unwrap();
        assert!((est.point_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_error_traces_out_control() {
        // pre-trace states |+⟩⊗|ψ⟩ reduce to ψ exactly
        let psi = StateVector::haar_random(2, &mut master_rng(1));
        let plus = StateVector::plus_state();
        let trajs: Vec<StateVector> = (0..110).map(|_| plus.tensor(&psi)).collect();
        let est = state_error(&psi, &trajs, 100).unwrap();
        assert!(est.point_estimate < 1e-12);
    }

    #[test]
    fn state_error_is_global_phase_invariant() {
        let psi = StateVector::haar_random(2, &mut master_rng(2));
        let phased: Vec<StateVector> = (0..150)
            .map(|i| {
                let phase = C64::from_polar(1.0, 0.1 * i as f64);
                StateVector::from_amplitudes(
                    psi.amplitudes().iter().map(|a| a * phase).collect(),
                )
                .unwrap()
            })
            .collect();
        let est = state_error(&psi, &phased, 100).unwrap();
        assert!(est.point_estimate < 1e-12);
    }

    #[test]
    fn mean_square_error_limits() {
        let target = StateVector::basis_state(2, 0);
        let perfect: Vec<StateVector> = (0..120).map(|_| target.clone()).collect();
        assert!(mean_square_error(&target, &perfect, 100).unwrap().point_estimate < 1e-12);
        // orthogonal trajectories: each term ‖·‖₁² = 4
        let orth: Vec<StateVector> = (0..120).map(|_| StateVector::basis_state(2, 1)).collect();
        let est = mean_square_error(&target, &orth, 100).unwrap();
        assert!((est.point_estimate - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sample_floor_enforced() {
        let target = StateVector::basis_state(2, 0);
        let few: Vec<StateVector> = (0..50).map(|_| target.clone()).collect();
        assert!(state_error(&target, &few, 100).is_err());
        assert!(mean_square_error(&target, &few, 100).is_err());
    }

    #[test]
    fn choi_error_identical_and_depolarized() {
        let h = random_hamiltonian(1, 3).unwrap();
        let u = h.expm(0.9);
        let s = Superoperator::of_unitary(&u);
        assert!(choi_error(&s, &s).unwrap() < 1e-12);
        // compose with full depolarizing at rate p: closed-form Choi distance
        // ‖J_U − ((1−p)J_U + p I/d²)‖₁ = 2p(d²−1)/d²
        let d = 2usize;
        let p = 0.3;
        let mut dep = s.clone();
        dep.matrix = dep.matrix.scale(1.0 - p);
        // the completely depolarizing channel in superoperator form:
        // S[(i,j),(k,l)] = δ_ij δ_kl / d
        let mut depol = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for k in 0..d {
                depol[(i * d + i, k * d + k)] = C64::new(1.0 / d as f64, 0.0);
            }
        }
        dep.matrix += depol.scale(p);
        let expect = 2.0 * p * (d * d - 1) as f64 / (d * d) as f64;
        let got = choi_error(&s, &dep).unwrap();
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
        let other = Superoperator::identity(4);
        assert!(choi_error(&s, &other).is_err());
    }

    #[test]
    fn choi_error_zero_iff_equal() {
        let h = random_hamiltonian(1, 4).unwrap();
        let a = Superoperator::of_unitary(&h.expm(0.3));
        let b = Superoperator::of_unitary(&h.expm(0.31));
        assert!(choi_error(&a, &b).unwrap() > 1e-4);
        let max_entry = (&a.matrix - &a.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_entry < 1e-10);
        let _ = DenseOperator::identity(2);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let points: Vec<(f64, f64)> = [0.3, 0.1, 0.03, 0.01]
            .iter()
            .map(|&e: &f64| (e, 7.0 / e))
            .collect();
        let fit = fit_scaling(&points).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.01, "slope {}", fit.slope);
        assert!(fit.r2 > 0.999);
    }

    #[test]
    fn fit_recovers_planted_exponents_across_seeds() {
        for seed in 0..100u64 {
            let mut rng = master_rng(seed);
            let planted = -2.0;
            let points: Vec<(f64, f64)> = [0.3, 0.1, 0.03, 0.01]
                .iter()
                .map(|&e: &f64| {
                    let noise = 1.0 + 0.02 * (rng.gen::<f64>() - 0.5);
                    (e, 11.0 * e.powf(planted) * noise)
                })
                .collect();
            let fit = fit_scaling(&points).unwrap();
            assert!(
                fit.slope_ci.0 - 0.05 <= planted && planted <= fit.slope_ci.1 + 0.05,
                "seed {seed}: CI {:?} misses {planted}",
                fit.slope_ci
            );
            assert!(fit.r2 >= 0.95);
        }
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, 2.0)]).is_err());
        let narrow: Vec<(f64, f64)> = [0.3, 0.25, 0.2, 0.15].iter().map(|&e: &f64| (e, 1.0 / e)).collect();
        assert!(matches!(fit_scaling(&narrow), Err(Error::Degenerate(_))));
    }
}
