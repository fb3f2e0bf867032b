//! Per-client stochastic computing power and the computation-time gate.

use rand::Rng;
use thiserror::Error;

use crate::num::Real;
use crate::seed::rng_for_slot;

#[derive(Debug, Clone)]
pub struct ComputeParams<T: Real> {
    /// Mean of the exponential available-power process, watts.
    pub mean_power: T,
    /// Clock cycles needed per training sample.
    pub cycles_per_sample: T,
    /// Power per computation cycles (the cubic-frequency scaling constant).
    pub power_per_cycles: T,
    /// Computation-time threshold τ0, seconds.
    pub tau0: T,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ComputeError {
    #[error("available power must be > 0")]
    NonPositivePower,
}

/// Per-client available power and the resulting feasibility for one slot.
#[derive(Debug, Clone)]
pub struct ComputeSnapshot<T: Real> {
    pub power: Vec<T>,
    pub time: Vec<T>,
    pub feasible: Vec<bool>,
}

/// I.i.d. Exp(mean_power) draws, deterministic per (seed, t, k).
pub fn draw_power<T: Real>(params: &ComputeParams<T>, clients: usize, t: usize) -> Vec<T> {
    let mut rng = rng_for_slot(params.seed, "compute", t);
    (0..clients)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            params.mean_power * T::of(-u.ln())
        })
        .collect()
}

/// Minimum computation time τ = c_s·D_k·M_k·κ / P^{1/3}.
pub fn computation_time<T: Real>(
    d_k: usize,
    m_k: usize,
    power: T,
    params: &ComputeParams<T>,
) -> Result<T, ComputeError> {
    if power <= T::zero() {
        return Err(ComputeError::NonPositivePower);
    }
    Ok(params.cycles_per_sample
        * T::of_usize(d_k)
        * T::of_usize(m_k)
        * params.power_per_cycles
        / power.cbrt())
}

/// Inclusive gate τ ≤ τ0.
pub fn compute_feasible<T: Real>(tau: T, tau0: T) -> bool {
    tau <= tau0
}

/// Full snapshot for one slot given per-client dataset sizes.
pub fn snapshot<T: Real>(
    params: &ComputeParams<T>,
    sizes: &[usize],
    local_passes: usize,
    t: usize,
) -> ComputeSnapshot<T> {
    let power = draw_power(params, sizes.len(), t);
    let time: Vec<T> = sizes
        .iter()
        .zip(&power)
        .map(|(&d, &p)| computation_time(d, local_passes, p, params).expect("power > 0"))
        .collect();
    let feasible = time.iter().map(|&tau| compute_feasible(tau, params.tau0)).collect();
    ComputeSnapshot {
        power,
        time,
        feasible,
    }
}
