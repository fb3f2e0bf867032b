//! Distributed training core: ridge-regularized empirical risk minimization
//! solved in the dual, with per-client block coordinate ascent and additive
//! aggregation of the shared iterate.
//!
//! The model vector `w` is recovered from the dual through `w = v = Xθ/(ξD)`,
//! so clients only exchange their contribution to `v`. A failed upload is a
//! no-op: the caller simply skips that client's deltas in [`aggregate`].

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// f(z; y) = ½(z − y)², targets real-valued.
    Quadratic,
    /// f(z; y) = ln(1 + exp(−yz)), targets y ∈ {−1, +1}.
    Logistic,
}

#[derive(Debug, Error)]
pub enum FlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dual variable outside the conjugate domain (client {client}, sample {sample})")]
    Domain { client: usize, sample: usize },
    #[error("gain ratio undefined: ideal local progress is not positive")]
    DegenerateGain,
}

/// One client's training shard: dense feature rows and aligned targets.
#[derive(Debug, Clone)]
pub struct Shard<T: Real> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<T>,
}

impl<T: Real> Shard<T> {
    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }
}

/// Dual iterate: one multiplier per training sample (grouped per client) plus
/// the shared aggregate v = Xθ/(ξD).
#[derive(Debug, Clone)]
pub struct DualState<T: Real> {
    pub theta: Vec<Vec<T>>,
    pub v: Vec<T>,
}

impl<T: Real> DualState<T> {
    pub fn new(client_sizes: &[usize], dim: usize) -> Self {
        DualState {
            theta: client_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: vec![T::zero(); dim],
        }
    }

    /// Model vector implied by the current dual iterate (Tikhonov: w = v).
    pub fn model(&self) -> &[T] {
        &self.v
    }
}

/// Deltas produced by one client's local solve, to be applied only if the
/// upload succeeds.
#[derive(Debug, Clone)]
pub struct LocalUpdate<T: Real> {
    pub client: usize,
    pub delta_theta: Vec<T>,
    pub delta_v: Vec<T>,
}

fn conjugate<T: Real>(loss: LossKind, theta: T, y: T) -> Option<T> {
    match loss {
        // f*(−θ; y) = ½θ² − θy
        LossKind::Quadratic => Some(T::of(0.5) * theta * theta - theta * y),
        // f*(−θ; y) = u ln u + (1−u) ln(1−u) with u = θy ∈ [0, 1]
        LossKind::Logistic => {
            let u = theta * y;
            if u < T::zero() || u > T::one() {
                return None;
            }
            let ent = |p: T| if p <= T::zero() { T::zero() } else { p * p.ln() };
            Some(ent(u) + ent(T::one() - u))
        }
    }
}

fn point_loss<T: Real>(loss: LossKind, z: T, y: T) -> T {
    match loss {
        LossKind::Quadratic => {
            let r = z - y;
            T::of(0.5) * r * r
        }
        // numerically stable softplus of −yz
        LossKind::Logistic => {
            let m = -y * z;
            if m > T::zero() {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        }
    }
}

/// Regularized primal objective F(w) = (1/D) Σ f(xᵀw; y) + (ξ/2)‖w‖².
pub fn primal_loss<T: Real>(loss: LossKind, shards: &[Shard<T>], w: &[T], xi: T) -> T {
    let d_total: usize = shards.iter().map(Shard::size).sum();
    let mut sum = T::zero();
    for shard in shards {
        for (xi_row, &yi) in shard.x.iter().zip(&shard.y) {
            let z = crate::linalg::dot(xi_row, w);
            sum += point_loss(loss, z, yi);
        }
    }
    let reg: T = w.iter().map(|&c| c * c).sum();
    sum / T::of_usize(d_total) + T::of(0.5) * xi * reg
}

/// Dual objective ψ(θ) = −(1/D) Σ f*(−θ) − (ξ/2)‖v‖², with v from `state`.
pub fn dual_objective<T: Real>(
    loss: LossKind,
    shards: &[Shard<T>],
    state: &DualState<T>,
    xi: T,
) -> Result<T, FlError> {
    if shards.len() != state.theta.len() {
        return Err(FlError::Dimension(format!(
            "{} shards vs {} dual blocks",
            shards.len(),
            state.theta.len()
        )));
    }
    let d_total: usize = shards.iter().map(Shard::size).sum();
    let mut sum = T::zero();
    for (k, (shard, theta)) in shards.iter().zip(&state.theta).enumerate() {
        for (i, (&th, &yi)) in theta.iter().zip(&shard.y).enumerate() {
            sum += conjugate(loss, th, yi).ok_or(FlError::Domain { client: k, sample: i })?;
        }
    }
    let vnorm: T = state.v.iter().map(|&c| c * c).sum();
    Ok(-sum / T::of_usize(d_total) - T::of(0.5) * xi * vnorm)
}

/// Local subproblem gain Δψ_k(δ): the change in the global dual objective if
/// only block k moves by δ, with the cross-block interaction upper-bounded by
/// the aggressiveness factor η.
#[allow(clippy::too_many_arguments)]
pub fn local_gain<T: Real>(
    loss: LossKind,
    shard: &Shard<T>,
    theta_k: &[T],
    v: &[T],
    delta: &[T],
    eta: T,
    xi: T,
    d_total: usize,
) -> Result<T, FlError> {
    let d = T::of_usize(d_total);
    let mut conj_change = T::zero();
    let mut cross = T::zero();
    let mut r = vec![T::zero(); v.len()];
    for (i, ((row, &yi), (&th, &de))) in shard
        .x
        .iter()
        .zip(&shard.y)
        .zip(theta_k.iter().zip(delta))
        .enumerate()
    {
        let before = conjugate(loss, th, yi).ok_or(FlError::Domain { client: 0, sample: i })?;
        let after =
            conjugate(loss, th + de, yi).ok_or(FlError::Domain { client: 0, sample: i })?;
        conj_change += after - before;
        cross += de * crate::linalg::dot(row, v);
        for (rj, &xj) in r.iter_mut().zip(row) {
            *rj += de * xj;
        }
    }
    let rnorm: T = r.iter().map(|&c| c * c).sum();
    Ok(-conj_change / d - cross / d - eta * rnorm / (T::of(2.0) * xi * d * d))
}

/// One client's local solve: `passes` cyclic coordinate-ascent sweeps over the
/// local subproblem. Returns deltas; the caller decides whether they land.
#[allow(clippy::too_many_arguments)]
pub fn local_dual_update<T: Real>(
    loss: LossKind,
    client: usize,
    shard: &Shard<T>,
    theta_k: &[T],
    v: &[T],
    eta: T,
    xi: T,
    d_total: usize,
    passes: usize,
) -> LocalUpdate<T> {
    let n = shard.size();
    let dim = v.len();
    let d = T::of_usize(d_total);
    let scale = eta / (xi * d); // coefficient of the quadratic coupling term
    let mut delta = vec![T::zero(); n];
    let mut r = vec![T::zero(); dim]; // r = X_k δ, maintained incrementally

    for _ in 0..passes {
        for i in 0..n {
            let row = &shard.x[i];
            let yi = shard.y[i];
            let norm2: T = row.iter().map(|&c| c * c).sum();
            // withdraw coordinate i's current contribution from r
            if delta[i] != T::zero() {
                for (rj, &xj) in r.iter_mut().zip(row) {
                    *rj -= delta[i] * xj;
                }
            }
            let xv = crate::linalg::dot(row, v);
            let xr = crate::linalg::dot(row, &r);
            let new_delta = match loss {
                LossKind::Quadratic => {
                    (yi - theta_k[i] - xv - scale * xr) / (T::one() + scale * norm2)
                }
                LossKind::Logistic => {
                    logistic_coordinate(theta_k[i], yi, xv, xr, norm2, scale, d)
                }
            };
            delta[i] = new_delta;
            if new_delta != T::zero() {
                for (rj, &xj) in r.iter_mut().zip(row) {
                    *rj += new_delta * xj;
                }
            }
        }
    }

    let inv = T::one() / (xi * d);
    let delta_v: Vec<T> = r.iter().map(|&c| c * inv).collect();
    LocalUpdate {
        client,
        delta_theta: delta,
        delta_v,
    }
}

/// Exact 1-D maximizer for the logistic coordinate subproblem via bisection on
/// the (strictly decreasing) derivative. Works in u = (θ+δ)y ∈ (0, 1).
fn logistic_coordinate<T: Real>(theta: T, y: T, xv: T, xr: T, norm2: T, scale: T, d: T) -> T {
    let eps = T::of(1e-12);
    // dψ/du = y·dψ/dδ is strictly decreasing in u for either label sign.
    let deriv = |u: T| {
        let delta = u * y - theta; // y ∈ {±1} so y = 1/y
        -(u.ln() - (T::one() - u).ln()) / d
            - y * (xv / d + scale * (xr + delta * norm2) / d)
    };
    let mut lo = eps;
    let mut hi = T::one() - eps;
    if deriv(lo) <= T::zero() {
        return lo * y - theta;
    }
    if deriv(hi) >= T::zero() {
        return hi * y - theta;
    }
    for _ in 0..60 {
        let mid = T::of(0.5) * (lo + hi);
        if deriv(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = T::of(0.5) * (lo + hi);
    u * y - theta
}

/// Apply the deltas of the delivered clients: θ_k += Δθ_k and v += ΣΔv_k.
/// Non-delivered updates are dropped entirely (their local work is wasted).
pub fn aggregate<T: Real>(
    state: &mut DualState<T>,
    updates: &[LocalUpdate<T>],
    delivered: &[bool],
) -> Result<(), FlError> {
    if updates.len() != delivered.len() {
        return Err(FlError::Dimension(format!(
            "{} updates vs {} delivery flags",
            updates.len(),
            delivered.len()
        )));
    }
    for (up, &ok) in updates.iter().zip(delivered) {
        if !ok {
            continue;
        }
        let theta_k = state
            .theta
            .get_mut(up.client)
            .ok_or_else(|| FlError::Dimension(format!("client {} out of range", up.client)))?;
        if theta_k.len() != up.delta_theta.len() || state.v.len() != up.delta_v.len() {
            return Err(FlError::Dimension("update shape mismatch".into()));
        }
        for (t, &d) in theta_k.iter_mut().zip(&up.delta_theta) {
            *t += d;
        }
        for (vj, &d) in state.v.iter_mut().zip(&up.delta_v) {
            *vj += d;
        }
    }
    Ok(())
}

/// Measured local inexactness: 1 − Δψ_k(δ)/Δψ_k(δ*), with δ* approximated by
/// a long coordinate-ascent run. 0 means the local solve was exact.
#[allow(clippy::too_many_arguments)]
pub fn measure_beta<T: Real>(
    loss: LossKind,
    shard: &Shard<T>,
    theta_k: &[T],
    v: &[T],
    delta: &[T],
    eta: T,
    xi: T,
    d_total: usize,
) -> Result<T, FlError> {
    let ideal = local_dual_update(loss, 0, shard, theta_k, v, eta, xi, d_total, 500);
    let best = local_gain(loss, shard, theta_k, v, &ideal.delta_theta, eta, xi, d_total)?;
    if best <= T::zero() {
        return Err(FlError::DegenerateGain);
    }
    let got = local_gain(loss, shard, theta_k, v, delta, eta, xi, d_total)?;
    Ok(T::one() - got / best)
}

/// Worst-case dual suboptimality after `participation.len()` rounds:
/// D · Π_t is replaced by the geometric form D · (1 − (1−β)·ā)^T with ā the
/// mean data-weighted participation Σ_k (D_k/D)·s_k(t).
pub fn convergence_bound<T: Real>(d_total: T, beta: T, participation: &[T]) -> T {
    let t = participation.len();
    if t == 0 {
        return d_total;
    }
    let avg: T = participation.iter().copied().sum::<T>() / T::of_usize(t);
    let base = T::one() - (T::one() - beta) * avg;
    d_total * base.powi(t as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_client_shards() -> Vec<Shard<f64>> {
        vec![
            Shard {
                x: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
                y: vec![1.0, -1.0],
            },
            Shard {
                x: vec![vec![0.0, 1.0], vec![-1.0, 0.25]],
                y: vec![0.5, 2.0],
            },
        ]
    }

    fn consistent_state(shards: &[Shard<f64>], theta: Vec<Vec<f64>>, xi: f64) -> DualState<f64> {
        let d: usize = shards.iter().map(Shard::size).sum();
        let dim = shards[0].dim();
        let mut v = vec![0.0; dim];
        for (shard, th) in shards.iter().zip(&theta) {
            for (row, &t) in shard.x.iter().zip(th) {
                for (vj, &xj) in v.iter_mut().zip(row) {
                    *vj += t * xj / (xi * d as f64);
                }
            }
        }
        DualState { theta, v }
    }

    #[test]
    fn weak_duality_quadratic() {
        let shards = two_client_shards();
        let xi = 1.0;
        let mut rng = crate::seed::rng_for(7, "fl/weak");
        for _ in 0..50 {
            let theta: Vec<Vec<f64>> = shards
                .iter()
                .map(|s| (0..s.size()).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let state = consistent_state(&shards, theta, xi);
            let psi = dual_objective(LossKind::Quadratic, &shards, &state, xi).unwrap();
            let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = primal_loss(LossKind::Quadratic, &shards, &w, xi);
            assert!(psi <= f + 1e-12, "psi {psi} > F {f}");
        }
    }

    #[test]
    fn weak_duality_logistic() {
        let shards = vec![Shard {
            x: vec![vec![1.0, -0.5], vec![0.2, 0.7], vec![-0.3, 0.1]],
            y: vec![1.0, -1.0, 1.0],
        }];
        let xi = 0.5;
        let mut rng = crate::seed::rng_for(8, "fl/weak-log");
        for _ in 0..50 {
            let theta: Vec<Vec<f64>> = shards
                .iter()
                .map(|s| {
                    s.y.iter()
                        .map(|&y| rng.gen_range(0.0..1.0) * y)
                        .collect()
                })
                .collect();
            let state = consistent_state(&shards, theta, xi);
            let psi = dual_objective(LossKind::Logistic, &shards, &state, xi).unwrap();
            let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = primal_loss(LossKind::Logistic, &shards, &w, xi);
            assert!(psi <= f + 1e-12);
        }
    }

    #[test]
    fn logistic_domain_violation_detected() {
        let shards = vec![Shard {
            x: vec![vec![1.0]],
            y: vec![1.0],
        }];
        let state = DualState {
            theta: vec![vec![1.5]], // θy = 1.5 > 1
            v: vec![0.0],
        };
        assert!(matches!(
            dual_objective(LossKind::Logistic, &shards, &state, 1.0),
            Err(FlError::Domain { .. })
        ));
    }

    /// Ridge regression has a closed form; full training with exact local
    /// solves and a single client must recover it (strong duality).
    #[test]
    fn strong_duality_ridge_single_client() {
        let shards = vec![Shard {
            x: vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![1.0, -1.0],
            ],
            y: vec![1.0, 2.0, 2.5, -0.5],
        }];
        let xi = 0.3;
        let d = 4usize;
        // normal equations: (XᵀX/D + ξI) w = Xᵀy/D
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 2];
        for (row, &y) in shards[0].x.iter().zip(&shards[0].y) {
            for p in 0..2 {
                for q in 0..2 {
                    a[p * 2 + q] += row[p] * row[q] / d as f64;
                }
                b[p] += row[p] * y / d as f64;
            }
        }
        a[0] += xi;
        a[3] += xi;
        let w_star = crate::linalg::solve_linear(&a, 2, &b).unwrap();

        let mut state = DualState::new(&[4], 2);
        for _ in 0..400 {
            let up = local_dual_update(
                LossKind::Quadratic,
                0,
                &shards[0],
                &state.theta[0],
                &state.v,
                1.0,
                xi,
                d,
                1,
            );
            aggregate(&mut state, &[up], &[true]).unwrap();
        }
        for (got, want) in state.model().iter().zip(&w_star) {
            assert!((got - want).abs() < 1e-8, "w {got} vs {want}");
        }
        let psi = dual_objective(LossKind::Quadratic, &shards, &state, xi).unwrap();
        let f = primal_loss(LossKind::Quadratic, &shards, state.model(), xi);
        assert!((psi - f).abs() < 1e-10, "duality gap {}", f - psi);
    }

    /// v must stay exactly the aggregate Xθ/(ξD) across updates and partial
    /// delivery.
    #[test]
    fn v_consistency_under_partial_delivery() {
        let shards = two_client_shards();
        let xi = 0.7;
        let d = 4usize;
        let mut state = DualState::new(&[2, 2], 2);
        let mut rng = crate::seed::rng_for(9, "fl/vcons");
        for round in 0..30 {
            let ups: Vec<_> = (0..2)
                .map(|k| {
                    local_dual_update(
                        LossKind::Quadratic,
                        k,
                        &shards[k],
                        &state.theta[k],
                        &state.v,
                        0.5,
                        xi,
                        d,
                        3,
                    )
                })
                .collect();
            let delivered = [rng.gen_bool(0.6), rng.gen_bool(0.6)];
            aggregate(&mut state, &ups, &delivered).unwrap();
            let check = consistent_state(&shards, state.theta.clone(), xi);
            for (a, b) in state.v.iter().zip(&check.v) {
                assert!((a - b).abs() < 1e-10, "round {round}: v drifted");
            }
        }
    }

    #[test]
    fn zero_passes_zero_deltas() {
        let shards = two_client_shards();
        let state = DualState::new(&[2, 2], 2);
        let up = local_dual_update(
            LossKind::Quadratic,
            0,
            &shards[0],
            &state.theta[0],
            &state.v,
            1.0,
            1.0,
            4,
            0,
        );
        assert!(up.delta_theta.iter().all(|&d| d == 0.0));
        assert!(up.delta_v.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn local_gain_zero_at_zero() {
        let shards = two_client_shards();
        let state = DualState::new(&[2, 2], 2);
        let g = local_gain(
            LossKind::Quadratic,
            &shards[0],
            &state.theta[0],
            &state.v,
            &[0.0, 0.0],
            1.0,
            1.0,
            4,
        )
        .unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn measured_beta_orders_solver_effort() {
        let shards = two_client_shards();
        let state = DualState::new(&[2, 2], 2);
        let mut betas = Vec::new();
        for passes in [1usize, 3, 10] {
            let up = local_dual_update(
                LossKind::Quadratic,
                0,
                &shards[0],
                &state.theta[0],
                &state.v,
                1.0,
                1.0,
                4,
                passes,
            );
            let b = measure_beta(
                LossKind::Quadratic,
                &shards[0],
                &state.theta[0],
                &state.v,
                &up.delta_theta,
                1.0,
                1.0,
                4,
            )
            .unwrap();
            assert!((-1e-12..1.0).contains(&b), "beta {b} out of range");
            betas.push(b);
        }
        assert!(betas[0] >= betas[1] - 1e-12 && betas[1] >= betas[2] - 1e-12);
        assert!(betas[2] < 1e-6, "10 passes should be near-exact: {}", betas[2]);
    }

    #[test]
    fn measured_beta_degenerate_at_optimum() {
        // after an exact solve and aggregation, a fresh zero delta has
        // non-positive ideal gain
        let shards = [Shard {
            x: vec![vec![1.0]],
            y: vec![1.0],
        }];
        let mut state = DualState::new(&[1], 1);
        for _ in 0..200 {
            let up = local_dual_update(
                LossKind::Quadratic,
                0,
                &shards[0],
                &state.theta[0],
                &state.v,
                1.0,
                1.0,
                1,
                1,
            );
            aggregate(&mut state, &[up], &[true]).unwrap();
        }
        let res = measure_beta(
            LossKind::Quadratic,
            &shards[0],
            &state.theta[0],
            &state.v,
            &[0.0],
            1.0,
            1.0,
            1,
        );
        assert!(matches!(res, Err(FlError::DegenerateGain)));
    }

    #[test]
    fn bound_endpoints_and_hand_case() {
        // no participation: bound stays at D
        assert_eq!(convergence_bound(3.0, 0.7, &[0.0, 0.0, 0.0]), 3.0);
        // full participation: D·β^T
        let full = convergence_bound(3.0, 0.7, &[1.0, 1.0, 1.0]);
        assert!((full - 3.0 * 0.7f64.powi(3)).abs() < 1e-12);
        // two clients with data 2 and 1, only the first participates, T = 3
        let b: f64 = convergence_bound(3.0, 0.7, &[2.0 / 3.0; 3]);
        assert!((b - 1.536).abs() < 1e-12, "got {b}");
        // empty horizon
        assert_eq!(convergence_bound::<f64>(3.0, 0.7, &[]), 3.0);
    }

    #[test]
    fn bound_monotone_in_beta_and_participation() {
        let lo = convergence_bound(10.0, 0.3, &[0.5; 5]);
        let hi = convergence_bound(10.0, 0.8, &[0.5; 5]);
        assert!(lo < hi);
        let more = convergence_bound(10.0, 0.3, &[0.9; 5]);
        assert!(more < lo);
    }

    #[test]
    fn logistic_training_reduces_primal_loss() {
        let shards = vec![
            Shard {
                x: vec![vec![1.5, 0.2], vec![1.0, -0.1], vec![2.0, 0.4]],
                y: vec![1.0, 1.0, 1.0],
            },
            Shard {
                x: vec![vec![-1.2, 0.1], vec![-0.8, -0.3], vec![-1.7, 0.2]],
                y: vec![-1.0, -1.0, -1.0],
            },
        ];
        let xi = 0.1;
        let d = 6usize;
        let mut state = DualState::new(&[3, 3], 2);
        let f0 = primal_loss(LossKind::Logistic, &shards, state.model(), xi);
        let mut psi_prev = dual_objective(LossKind::Logistic, &shards, &state, xi).unwrap();
        // Sequential per-client updates with eta = 1 are exact block
        // coordinate ascent, so they reach the true dual optimum.
        for _ in 0..400 {
            for (k, shard) in shards.iter().enumerate() {
                let up = local_dual_update(
                    LossKind::Logistic,
                    k,
                    shard,
                    &state.theta[k],
                    &state.v,
                    1.0,
                    xi,
                    d,
                    10,
                );
                aggregate(&mut state, &[up], &[true]).unwrap();
            }
            let psi = dual_objective(LossKind::Logistic, &shards, &state, xi).unwrap();
            assert!(psi >= psi_prev - 1e-9, "dual objective regressed");
            psi_prev = psi;
        }
        let f1 = primal_loss(LossKind::Logistic, &shards, state.model(), xi);
        assert!(f1 < f0, "loss did not decrease: {f0} -> {f1}");
        let gap = f1 - psi_prev;
        assert!((-1e-10..0.05).contains(&gap), "gap {gap}");
    }
}
