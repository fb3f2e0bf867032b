//! Drift-plus-penalty client scheduling: virtual queues, per-slot auxiliary
//! variables, LP assembly over relaxed booleans, and integer rounding.
//!
//! The slot problem is a bipartite client/resource-block assignment whose LP
//! relaxation has integer optima, so rounding is tie-resolution rather than
//! approximation; a genuine objective mismatch indicates a solver bug and is
//! surfaced as an error.

#![allow(clippy::needless_range_loop)] // dense index math reads clearer

use thiserror::Error;

use crate::lp::{self, LpProblem, LpSolution, LpStatus};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("slot LP reported {0:?}; the slot polytope always contains 0")]
    BadLp(LpStatus),
    #[error("integer rounding lost objective: {got} vs LP {want}")]
    RoundingFailed { got: f64, want: f64 },
}

/// Nonnegative scalars whose boundedness enforces the time-average targets:
/// `q` tracks scheduling utility, `g` tracks channel-exploration supply.
#[derive(Debug, Clone, Copy)]
pub struct VirtualQueues<T: Real> {
    pub q: T,
    pub g: T,
    /// Running mean of past ν choices.
    pub nu_mean: T,
    pub slots: usize,
}

impl<T: Real> Default for VirtualQueues<T> {
    fn default() -> Self {
        VirtualQueues {
            q: T::zero(),
            g: T::zero(),
            nu_mean: T::zero(),
            slots: 0,
        }
    }
}

/// Everything the slot optimizer needs besides the queues themselves.
#[derive(Debug, Clone)]
pub struct SlotInputs<T: Real> {
    /// Per-client data sizes D_k (as reals; only ratios matter).
    pub sizes: Vec<T>,
    pub beta: T,
    /// Exploration reward j_{k,b} per link (GPR posterior variance, or zeros
    /// for perfect-CSI policies), K×B.
    pub info: Vec<Vec<T>>,
    /// Combined feasibility gate (wireless ∧ compute), K×B.
    pub mask: Vec<Vec<bool>>,
    /// Drift-penalty trade-off ϕ and exploration weight φ.
    pub phi: T,
    pub varphi: T,
    /// Training horizon T entering the penalty weight.
    pub horizon: usize,
    /// Cap on the per-slot exploration demand l.
    pub l0: T,
    /// Σ s_k ≤ rb_budget.
    pub rb_budget: usize,
}

impl<T: Real> SlotInputs<T> {
    pub fn clients(&self) -> usize {
        self.sizes.len()
    }

    pub fn rbs(&self) -> usize {
        self.info.first().map_or(0, Vec::len)
    }

    pub fn d_total(&self) -> T {
        self.sizes.iter().copied().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Θ_k ∝ D_k/D.
    QuantityAware,
    /// Θ_k ∝ 1/K.
    QuantityUnaware,
}

/// Final integer slot decision.
#[derive(Debug, Clone)]
pub struct ScheduleDecision<T: Real> {
    pub s: Vec<bool>,
    /// K×B allocation; at most one true per row and per column.
    pub lambda: Vec<Vec<bool>>,
    pub nu: T,
    pub l: T,
    pub lp_objective: T,
}

impl<T: Real> ScheduleDecision<T> {
    pub fn empty(clients: usize, rbs: usize, nu: T, l: T) -> Self {
        ScheduleDecision {
            s: vec![false; clients],
            lambda: vec![vec![false; rbs]; clients],
            nu,
            l,
            lp_objective: T::zero(),
        }
    }

    pub fn rb_of(&self, k: usize) -> Option<usize> {
        self.lambda[k].iter().position(|&b| b)
    }

    pub fn scheduled_count(&self) -> usize {
        self.s.iter().filter(|&&b| b).count()
    }
}

/// Threshold on q that flips the utility auxiliary: χ = q − ϕDT(1−ν̃)^{T−1}.
pub fn chi<T: Real>(q: T, phi: T, d_total: T, horizon: usize, nu_mean: T) -> T {
    let pow = (T::one() - nu_mean).powi(horizon.saturating_sub(1) as i32);
    q - phi * d_total * T::of_usize(horizon) * pow
}

/// Per-slot optimal auxiliaries. Each is a bang-bang choice minimizing its
/// decoupled drift-plus-penalty term: ν·χ for the utility, l·(g − ϕφ) for
/// exploration; the low side of each threshold (inclusive) takes the high
/// value.
#[allow(clippy::too_many_arguments)]
pub fn auxiliary_optimal<T: Real>(
    q: T,
    g: T,
    nu_mean: T,
    phi: T,
    varphi: T,
    d_total: T,
    horizon: usize,
    beta: T,
    l0: T,
) -> (T, T) {
    let nu = if chi(q, phi, d_total, horizon, nu_mean) <= T::zero() {
        T::one() - beta
    } else {
        T::zero()
    };
    let l = if g <= phi * varphi { l0 } else { T::zero() };
    (nu, l)
}

/// Objective weights for the slot LP: Θ_k on s_k and Ω_{k,b} on λ_{k,b}.
pub fn slot_weights<T: Real>(
    queues: &VirtualQueues<T>,
    inputs: &SlotInputs<T>,
    mode: WeightMode,
) -> (Vec<T>, Vec<Vec<T>>) {
    let k = inputs.clients();
    let d = inputs.d_total();
    let share = |i: usize| match mode {
        WeightMode::QuantityAware => inputs.sizes[i] / d,
        WeightMode::QuantityUnaware => T::one() / T::of_usize(k),
    };
    let theta: Vec<T> = (0..k)
        .map(|i| queues.q * (T::one() - inputs.beta) * share(i))
        .collect();
    let omega: Vec<Vec<T>> = inputs
        .info
        .iter()
        .map(|row| row.iter().map(|&j| queues.g * j).collect())
        .collect();
    (theta, omega)
}

/// Relaxed slot problem: maximize Σ Θ_k s_k + Σ Ω_{k,b} λ_{k,b} over
/// s ∈ [0,1]^K, λ ∈ [0,1]^{K×B} subject to linking (s_k ≤ Σ_b λ_{k,b}),
/// one RB per client (Σ_b λ_{k,b} ≤ 1), one client per RB (Σ_k λ_{k,b} ≤ 1),
/// the RB budget (Σ s_k ≤ B), and the feasibility mask as upper bounds.
pub fn build_slot_lp<T: Real>(
    queues: &VirtualQueues<T>,
    inputs: &SlotInputs<T>,
    mode: WeightMode,
) -> LpProblem<T> {
    let k = inputs.clients();
    let b = inputs.rbs();
    let n = k + k * b;
    let lam = |ci: usize, bi: usize| k + ci * b + bi;

    let (theta, omega) = slot_weights(queues, inputs, mode);
    let mut objective = vec![T::zero(); n];
    objective[..k].copy_from_slice(&theta);
    for ci in 0..k {
        for bi in 0..b {
            objective[lam(ci, bi)] = omega[ci][bi];
        }
    }

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    // linking: s_k − Σ_b λ_{k,b} ≤ 0
    for ci in 0..k {
        let mut row = vec![T::zero(); n];
        row[ci] = T::one();
        for bi in 0..b {
            row[lam(ci, bi)] = -T::one();
        }
        rows.push(row);
        rhs.push(T::zero());
    }
    // one RB per client: Σ_b λ_{k,b} ≤ 1
    for ci in 0..k {
        let mut row = vec![T::zero(); n];
        for bi in 0..b {
            row[lam(ci, bi)] = T::one();
        }
        rows.push(row);
        rhs.push(T::one());
    }
    // one client per RB: Σ_k λ_{k,b} ≤ 1
    for bi in 0..b {
        let mut row = vec![T::zero(); n];
        for ci in 0..k {
            row[lam(ci, bi)] = T::one();
        }
        rows.push(row);
        rhs.push(T::one());
    }
    // RB budget on the schedule count
    {
        let mut row = vec![T::zero(); n];
        for ci in 0..k {
            row[ci] = T::one();
        }
        rows.push(row);
        rhs.push(T::of_usize(inputs.rb_budget));
    }

    let lower = vec![T::zero(); n];
    let mut upper = vec![T::one(); n];
    for ci in 0..k {
        let any = inputs.mask[ci].iter().any(|&m| m);
        if !any {
            upper[ci] = T::zero();
        }
        for bi in 0..b {
            if !inputs.mask[ci][bi] {
                upper[lam(ci, bi)] = T::zero();
            }
        }
    }

    LpProblem {
        objective,
        rows,
        rhs,
        lower,
        upper,
    }
}

const SNAP: f64 = 1e-6;

/// Convert an optimal LP vertex into an integer decision. The LP is an
/// assignment relaxation with integer optima, so in practice this snaps;
/// a greedy matching backstop handles degenerate fractional vertices, and a
/// lost objective is reported as a solver bug.
pub fn round_solution<T: Real>(
    solution: &LpSolution<T>,
    queues: &VirtualQueues<T>,
    inputs: &SlotInputs<T>,
    mode: WeightMode,
    nu: T,
    l: T,
) -> Result<ScheduleDecision<T>, ScheduleError> {
    if solution.status != LpStatus::Optimal {
        return Err(ScheduleError::BadLp(solution.status));
    }
    let k = inputs.clients();
    let b = inputs.rbs();
    let snap = T::of(SNAP);
    let (theta, omega) = slot_weights(queues, inputs, mode);

    let integral = solution
        .x
        .iter()
        .all(|&v| v.abs() <= snap || (v - T::one()).abs() <= snap);

    let mut decision = ScheduleDecision::empty(k, b, nu, l);
    if integral {
        for ci in 0..k {
            decision.s[ci] = (solution.x[ci] - T::one()).abs() <= snap;
            for bi in 0..b {
                decision.lambda[ci][bi] =
                    (solution.x[k + ci * b + bi] - T::one()).abs() <= snap;
            }
        }
    } else {
        // greedy maximum-weight matching on Θ_k + Ω_{k,b}, lowest index wins ties
        let mut used_rb = vec![false; b];
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| {
            theta[c]
                .partial_cmp(&theta[a])
                .unwrap()
                .then(a.cmp(&c))
        });
        for &ci in &order {
            let mut best: Option<(usize, T)> = None;
            for bi in 0..b {
                if used_rb[bi] || !inputs.mask[ci][bi] {
                    continue;
                }
                let w = omega[ci][bi];
                if best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((bi, w));
                }
            }
            if let Some((bi, _)) = best {
                if decision.scheduled_count() < inputs.rb_budget {
                    decision.lambda[ci][bi] = true;
                    decision.s[ci] = true;
                    used_rb[bi] = true;
                }
            }
        }
    }

    // clamp the schedule count to the budget, dropping lowest-Θ clients first
    while decision.scheduled_count() > inputs.rb_budget {
        let drop = (0..k)
            .filter(|&ci| decision.s[ci])
            .min_by(|&a, &c| theta[a].partial_cmp(&theta[c]).unwrap().then(c.cmp(&a)))
            .expect("scheduled_count > 0");
        decision.s[drop] = false;
    }

    let mut obj = T::zero();
    for ci in 0..k {
        if decision.s[ci] {
            obj += theta[ci];
        }
        for bi in 0..b {
            if decision.lambda[ci][bi] {
                obj += omega[ci][bi];
            }
        }
    }
    decision.lp_objective = solution.objective;
    if obj < solution.objective - T::of(1e-8) {
        return Err(ScheduleError::RoundingFailed {
            got: obj.as_f64(),
            want: solution.objective.as_f64(),
        });
    }
    debug_assert!(check_decision(&decision, inputs));
    Ok(decision)
}

/// Full constraint audit for one decision: linking, one RB per client, one
/// client per RB, budget, and mask gating.
pub fn check_decision<T: Real>(decision: &ScheduleDecision<T>, inputs: &SlotInputs<T>) -> bool {
    let k = inputs.clients();
    let b = inputs.rbs();
    if decision.scheduled_count() > inputs.rb_budget {
        return false;
    }
    for bi in 0..b {
        if (0..k).filter(|&ci| decision.lambda[ci][bi]).count() > 1 {
            return false;
        }
    }
    for ci in 0..k {
        let row = decision.lambda[ci].iter().filter(|&&x| x).count();
        if row > 1 || (decision.s[ci] && row == 0) {
            return false;
        }
        for bi in 0..b {
            if decision.lambda[ci][bi] && !inputs.mask[ci][bi] {
                return false;
            }
        }
    }
    true
}

/// Solve the full per-slot problem: LP + rounding.
pub fn solve_slot<T: Real>(
    queues: &VirtualQueues<T>,
    inputs: &SlotInputs<T>,
    mode: WeightMode,
    nu: T,
    l: T,
) -> Result<ScheduleDecision<T>, ScheduleError> {
    let problem = build_slot_lp(queues, inputs, mode);
    let solution = lp::solve(&problem);
    round_solution(&solution, queues, inputs, mode, nu, l)
}

/// Queue recursion: q⁺ = max(0, q + ν − u) with u = (1−β)Σ s_k D_k/D, and
/// g⁺ = max(0, g + l − Σ j_{k,b} λ_{k,b}); ν̃ absorbs this slot's ν.
pub fn update_queues<T: Real>(
    queues: &VirtualQueues<T>,
    nu: T,
    l: T,
    decision: &ScheduleDecision<T>,
    inputs: &SlotInputs<T>,
) -> VirtualQueues<T> {
    let d = inputs.d_total();
    let mut u = T::zero();
    for (ci, &on) in decision.s.iter().enumerate() {
        if on {
            u += (T::one() - inputs.beta) * inputs.sizes[ci] / d;
        }
    }
    let mut served = T::zero();
    for (ci, row) in decision.lambda.iter().enumerate() {
        for (bi, &on) in row.iter().enumerate() {
            if on {
                served += inputs.info[ci][bi];
            }
        }
    }
    let t = T::of_usize(queues.slots);
    VirtualQueues {
        q: (queues.q + nu - u).max(T::zero()),
        g: (queues.g + l - served).max(T::zero()),
        nu_mean: (queues.nu_mean * t + nu) / (t + T::one()),
        slots: queues.slots + 1,
    }
}

/// Diagnostic: the per-slot drift-plus-penalty expression (modulo its uniform
/// constant) whose minimizer the LP decision should be.
pub fn dpp_bound_terms<T: Real>(
    queues: &VirtualQueues<T>,
    nu: T,
    l: T,
    decision: &ScheduleDecision<T>,
    inputs: &SlotInputs<T>,
) -> T {
    let d = inputs.d_total();
    let mut u = T::zero();
    for (ci, &on) in decision.s.iter().enumerate() {
        if on {
            u += (T::one() - inputs.beta) * inputs.sizes[ci] / d;
        }
    }
    let mut served = T::zero();
    for (ci, row) in decision.lambda.iter().enumerate() {
        for (bi, &on) in row.iter().enumerate() {
            if on {
                served += inputs.info[ci][bi];
            }
        }
    }
    let pow = (T::one() - queues.nu_mean).powi(inputs.horizon.saturating_sub(1) as i32);
    queues.q * (nu - u) + queues.g * (l - served)
        - inputs.phi * (d * T::of_usize(inputs.horizon) * pow * nu + inputs.varphi * l)
}
