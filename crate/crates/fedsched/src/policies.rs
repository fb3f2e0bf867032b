//! The six scheduling policies behind one `decide` interface, plus the
//! per-round orchestration that ties channels, compute, training, and the
//! queue-driven scheduler together.

#![allow(clippy::needless_range_loop)] // dense index math reads clearer

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::compute::{snapshot, ComputeParams, ComputeSnapshot};
use crate::fl_dual::{aggregate, local_dual_update, DualState, FlError, LossKind, Shard};
use crate::gpr::{GprError, GprLinkModel};
use crate::lyapunov::{
    auxiliary_optimal, check_decision, solve_slot, update_queues, ScheduleDecision,
    ScheduleError, SlotInputs, VirtualQueues, WeightMode,
};
use crate::num::Real;
use crate::wireless::{feasible_mask, ChannelBook};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyName {
    QawGpr,
    Qaw,
    Qunaw,
    Random,
    Pf,
    Ideal,
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PolicyName::QawGpr => "QAW-GPR",
            PolicyName::Qaw => "QAW",
            PolicyName::Qunaw => "QUNAW",
            PolicyName::Random => "RANDOM",
            PolicyName::Pf => "PF",
            PolicyName::Ideal => "IDEAL",
        };
        f.write_str(s)
    }
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "QAW-GPR" => Ok(PolicyName::QawGpr),
            "QAW" => Ok(PolicyName::Qaw),
            "QUNAW" => Ok(PolicyName::Qunaw),
            "RANDOM" => Ok(PolicyName::Random),
            "PF" => Ok(PolicyName::Pf),
            "IDEAL" => Ok(PolicyName::Ideal),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyKind {
    pub name: PolicyName,
    /// Gate scheduling on predicted computation time (compute-aware).
    pub use_computation_gate: bool,
    /// Perfect-CSI policies give up one RB for channel estimation.
    pub pilot_rb_reserved: bool,
}

impl PolicyKind {
    pub fn new(name: PolicyName) -> Self {
        PolicyKind {
            name,
            use_computation_gate: true,
            pilot_rb_reserved: true,
        }
    }

    /// RBs actually usable for data this slot.
    pub fn usable_rbs(&self, rbs: usize) -> usize {
        let reserved = match self.name {
            PolicyName::QawGpr | PolicyName::Ideal => false,
            _ => self.pilot_rb_reserved,
        };
        if reserved {
            rbs.saturating_sub(1)
        } else {
            rbs
        }
    }
}

/// Proportional-fairness history: EWMA of successful uploads per client.
#[derive(Debug, Clone)]
pub struct PfState<T: Real> {
    pub avg: Vec<T>,
    pub eps: T,
    pub ewma: T,
}

impl<T: Real> PfState<T> {
    pub fn new(clients: usize) -> Self {
        PfState {
            avg: vec![T::zero(); clients],
            eps: T::of(0.01),
            ewma: T::of(0.9),
        }
    }

    pub fn score(&self, k: usize, feasible: bool) -> T {
        if feasible {
            T::one() / (self.avg[k] + self.eps)
        } else {
            T::zero()
        }
    }

    pub fn record(&mut self, delivered: &[bool]) {
        for (a, &ok) in self.avg.iter_mut().zip(delivered) {
            *a = self.ewma * *a + if ok { T::one() } else { T::zero() };
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Training(#[from] FlError),
    #[error(transparent)]
    Prediction(#[from] GprError),
}

/// Everything `decide` reads for one slot. `true_sinr` covers K×B; policies
/// that predict bring their own mask and exploration rewards.
#[derive(Debug)]
pub struct SlotView<'a, T: Real> {
    pub sizes: &'a [T],
    pub beta: T,
    pub phi: T,
    pub varphi: T,
    pub horizon: usize,
    pub l0: T,
    pub gamma0: T,
    pub true_sinr: &'a [Vec<T>],
    pub compute_ok: &'a [bool],
    /// Predicted wireless feasibility (cold-start links optimistic), QAW-GPR.
    pub predicted_feasible: Option<&'a [Vec<bool>]>,
    /// Exploration reward per link (posterior variance), QAW-GPR.
    pub info: Option<&'a [Vec<T>]>,
}

impl<'a, T: Real> SlotView<'a, T> {
    fn clients(&self) -> usize {
        self.sizes.len()
    }

    fn rbs(&self) -> usize {
        self.true_sinr.first().map_or(0, Vec::len)
    }
}

/// Per-slot schedule under the chosen policy. Returns the decision plus the
/// slot inputs used (so the caller can audit and update queues consistently).
pub fn decide<T: Real>(
    policy: &PolicyKind,
    view: &SlotView<'_, T>,
    queues: &VirtualQueues<T>,
    pf: &PfState<T>,
    rng: &mut ChaCha12Rng,
) -> Result<(ScheduleDecision<T>, SlotInputs<T>), PolicyError> {
    let k = view.clients();
    let b = view.rbs();
    let b_eff = policy.usable_rbs(b);
    let d_total: T = view.sizes.iter().copied().sum();

    // wireless part of the mask, per CSI regime
    let mut mask: Vec<Vec<bool>> = match policy.name {
        PolicyName::QawGpr => view
            .predicted_feasible
            .expect("QAW-GPR needs predictions")
            .to_vec(),
        _ => {
            let mut m = feasible_mask(view.true_sinr, view.gamma0);
            // reserved pilot column is off-limits for data
            for row in &mut m {
                for (bi, cell) in row.iter_mut().enumerate() {
                    if bi >= b_eff {
                        *cell = false;
                    }
                }
            }
            m
        }
    };
    if policy.use_computation_gate {
        for (ci, row) in mask.iter_mut().enumerate() {
            if !view.compute_ok[ci] {
                row.iter_mut().for_each(|c| *c = false);
            }
        }
    }

    let info: Vec<Vec<T>> = match (policy.name, view.info) {
        (PolicyName::QawGpr, Some(j)) => j.to_vec(),
        _ => vec![vec![T::zero(); b]; k],
    };

    let inputs = SlotInputs {
        sizes: view.sizes.to_vec(),
        beta: view.beta,
        info,
        mask,
        phi: view.phi,
        varphi: view.varphi,
        horizon: view.horizon,
        l0: view.l0,
        rb_budget: b_eff,
    };

    let (nu, l) = auxiliary_optimal(
        queues.q,
        queues.g,
        queues.nu_mean,
        view.phi,
        view.varphi,
        d_total,
        view.horizon,
        view.beta,
        view.l0,
    );

    let decision = match policy.name {
        PolicyName::Qaw | PolicyName::QawGpr => {
            solve_slot(queues, &inputs, WeightMode::QuantityAware, nu, l)?
        }
        PolicyName::Qunaw => solve_slot(queues, &inputs, WeightMode::QuantityUnaware, nu, l)?,
        PolicyName::Ideal => {
            let mut d = ScheduleDecision::empty(k, b, nu, l);
            d.s.iter_mut().for_each(|s| *s = true);
            d
        }
        PolicyName::Random => {
            let mut d = ScheduleDecision::empty(k, b, nu, l);
            let mut clients: Vec<usize> = (0..k).collect();
            clients.shuffle(rng);
            clients.truncate(b_eff.min(k));
            let mut rbs: Vec<usize> = (0..b_eff).collect();
            rbs.shuffle(rng);
            for (ci, bi) in clients.iter().zip(&rbs) {
                d.s[*ci] = true;
                d.lambda[*ci][*bi] = true;
            }
            d
        }
        PolicyName::Pf => {
            let mut d = ScheduleDecision::empty(k, b, nu, l);
            let mut ranked: Vec<(usize, T)> = (0..k)
                .map(|ci| {
                    let feasible = inputs.mask[ci].iter().any(|&m| m);
                    (ci, pf.score(ci, feasible))
                })
                .filter(|&(_, sc)| sc > T::zero())
                .collect();
            ranked.sort_by(|a, c| c.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&c.0)));
            ranked.truncate(b_eff);
            let mut used = vec![false; b];
            for (ci, _) in ranked {
                // best still-free feasible RB by true SINR, lowest index on ties
                let mut best: Option<(usize, T)> = None;
                for bi in 0..b {
                    if used[bi] || !inputs.mask[ci][bi] {
                        continue;
                    }
                    let s = view.true_sinr[ci][bi];
                    if best.is_none_or(|(_, cur)| s > cur) {
                        best = Some((bi, s));
                    }
                }
                if let Some((bi, _)) = best {
                    used[bi] = true;
                    d.s[ci] = true;
                    d.lambda[ci][bi] = true;
                }
            }
            d
        }
    };
    Ok((decision, inputs))
}

/// Per-round outcome, everything the metrics layer needs.
#[derive(Debug, Clone)]
pub struct TrainRecord<T: Real> {
    pub t: usize,
    pub nu: T,
    pub l: T,
    pub q: T,
    pub g: T,
    pub scheduled: Vec<bool>,
    /// Upload attempts: scheduled clients holding an RB (all scheduled, for
    /// the unconstrained policy).
    pub attempts: usize,
    pub successes: usize,
    /// Data-weighted share of clients whose update landed, Σ D_k/D.
    pub participation: T,
    pub constraints_ok: bool,
}

/// Scalar knobs for one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundParams<T: Real> {
    pub loss: LossKind,
    pub beta: T,
    pub eta: T,
    pub xi: T,
    pub phi: T,
    pub varphi: T,
    pub l0: T,
    pub gamma0: T,
    pub horizon: usize,
    pub local_passes: usize,
    pub tx_power: T,
    pub noise: T,
}

/// One full round: compute-state refresh, local solves everywhere, channel
/// prediction, scheduling, delivery gating on the true channel, aggregation,
/// queue update, and channel-model updates on the allocated links.
#[allow(clippy::too_many_arguments)]
pub fn run_round<T: Real>(
    t: usize,
    policy: &PolicyKind,
    params: &RoundParams<T>,
    sizes: &[usize],
    shards: &[Vec<Shard<T>>],
    duals: &mut [DualState<T>],
    book: &ChannelBook<T>,
    compute: &ComputeParams<T>,
    gpr: Option<&mut Vec<Vec<GprLinkModel<T>>>>,
    queues: &mut VirtualQueues<T>,
    pf: &mut PfState<T>,
    rng: &mut ChaCha12Rng,
) -> Result<TrainRecord<T>, PolicyError> {
    let k = sizes.len();
    let b = book.rbs;
    let d_total: usize = sizes.iter().sum();
    let sizes_real: Vec<T> = sizes.iter().map(|&d| T::of_usize(d)).collect();

    // processing-state refresh
    let psi: ComputeSnapshot<T> = snapshot(compute, sizes, params.local_passes, t);

    // every client solves its local subproblem for every class head
    let mut updates: Vec<Vec<crate::fl_dual::LocalUpdate<T>>> = Vec::with_capacity(shards.len());
    for (class_shards, state) in shards.iter().zip(duals.iter()) {
        let ups = (0..k)
            .map(|ci| {
                local_dual_update(
                    params.loss,
                    ci,
                    &class_shards[ci],
                    &state.theta[ci],
                    &state.v,
                    params.eta,
                    params.xi,
                    d_total,
                    params.local_passes,
                )
            })
            .collect();
        updates.push(ups);
    }

    // channel prediction (only the GPR policy pays for it)
    let true_sinr = book.sinr_matrix(t, params.tx_power, params.noise);
    let (pred_mask, info) = if policy.name == PolicyName::QawGpr {
        let models = gpr.as_deref().expect("QAW-GPR needs link models");
        let mut mask = vec![vec![false; b]; k];
        let mut info = vec![vec![T::zero(); b]; k];
        for ci in 0..k {
            for bi in 0..b {
                let model = &models[ci][bi];
                match model.predict(T::of_usize(t)) {
                    Ok((h, var)) => {
                        let snr = params.tx_power * h.norm_sqr() / params.noise;
                        mask[ci][bi] = snr >= params.gamma0;
                        info[ci][bi] = var;
                    }
                    // unexplored link: optimistic gate, maximal information
                    Err(GprError::ColdStart) => {
                        mask[ci][bi] = true;
                        info[ci][bi] = T::one();
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        (Some(mask), Some(info))
    } else {
        (None, None)
    };

    let view = SlotView {
        sizes: &sizes_real,
        beta: params.beta,
        phi: params.phi,
        varphi: params.varphi,
        horizon: params.horizon,
        l0: params.l0,
        gamma0: params.gamma0,
        true_sinr: &true_sinr,
        compute_ok: &psi.feasible,
        predicted_feasible: pred_mask.as_deref(),
        info: info.as_deref(),
    };
    let (decision, inputs) = decide(policy, &view, queues, pf, rng)?;
    let constraints_ok =
        policy.name == PolicyName::Ideal || check_decision(&decision, &inputs);

    // delivery: true channel and computation deadline decide what lands
    let mut delivered = vec![false; k];
    let mut attempts = 0usize;
    let mut successes = 0usize;
    for ci in 0..k {
        if !decision.s[ci] {
            continue;
        }
        if policy.name == PolicyName::Ideal {
            delivered[ci] = true;
            continue;
        }
        let Some(bi) = decision.rb_of(ci) else {
            continue;
        };
        attempts += 1;
        let ok = true_sinr[ci][bi] >= params.gamma0 && psi.feasible[ci];
        delivered[ci] = ok;
        if ok {
            successes += 1;
        }
    }

    for (state, ups) in duals.iter_mut().zip(&updates) {
        aggregate(state, ups, &delivered)?;
    }

    *queues = update_queues(queues, decision.nu, decision.l, &decision, &inputs);

    // the channel model learns from every allocated link, success or not
    if let Some(models) = gpr {
        for ci in 0..k {
            if let Some(bi) = decision.rb_of(ci) {
                let h: Complex<T> = book.gain(ci, bi, t);
                models[ci][bi].observe(T::of_usize(t), h)?;
            }
        }
    }

    pf.record(&delivered);

    let participation: T = delivered
        .iter()
        .zip(&sizes_real)
        .filter(|(&ok, _)| ok)
        .map(|(_, &d)| d)
        .sum::<T>()
        / T::of_usize(d_total);

    Ok(TrainRecord {
        t,
        nu: decision.nu,
        l: decision.l,
        q: queues.q,
        g: queues.g,
        scheduled: decision.s.clone(),
        attempts,
        successes,
        participation,
        constraints_ok,
    })
}

/// Fraction of upload attempts that delivered; `None` until something was
/// attempted.
pub fn rb_utilization<T: Real>(records: &[TrainRecord<T>]) -> Option<T> {
    let attempts: usize = records.iter().map(|r| r.attempts).sum();
    if attempts == 0 {
        return None;
    }
    let successes: usize = records.iter().map(|r| r.successes).sum();
    Some(T::of_usize(successes) / T::of_usize(attempts))
}
