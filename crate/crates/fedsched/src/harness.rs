//! Experiment orchestration: flat-file configs, seeded deterministic runs,
//! the centralized reference optimum, metric emission, and parameter sweeps.

use std::fmt::Write as FmtWrite;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::compute::ComputeParams;
use crate::datasets::{
    assign_samples, dirichlet_class_split, load_mnist_idx, synth_blobs, zipf_sizes,
    Concentration, PartitionError,
};
use crate::fl_dual::{convergence_bound, primal_loss, DualState, FlError, LossKind, Shard};
use crate::gpr::{GprHyper, GprLinkModel};
use crate::lyapunov::VirtualQueues;
use crate::policies::{
    rb_utilization, run_round, PfState, PolicyError, PolicyKind, PolicyName, RoundParams,
    TrainRecord,
};
use crate::seed::{rng_for, sub_seed};
use crate::wireless::{gen_channels, ChannelParams, WirelessError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Wireless(#[from] WirelessError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Training(#[from] FlError),
    #[error("baseline failed: {0}")]
    Baseline(String),
}

impl HarnessError {
    /// CLI exit code: 1 for configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Mnist,
}

/// Every scalar of the system plus simulation plumbing; defaults match the
/// reference parameter table. Any field is settable by name via config file
/// or `--set`.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub policy: PolicyName,
    pub use_computation_gate: bool,
    pub pilot_rb_reserved: bool,

    pub clients: usize,
    pub rbs: usize,
    pub horizon: usize,
    pub local_passes: usize,
    pub beta: Scalar,
    pub eta: Scalar,
    pub xi: Scalar,
    pub phi: Scalar,
    pub varphi: Scalar,
    pub gamma0: Scalar,
    pub tau0: Scalar,

    pub zeta1: Scalar,
    pub zeta2: Scalar,
    pub gpr_window: usize,
    pub gpr_jitter: Scalar,

    pub tx_power: Scalar,
    pub noise: Scalar,
    pub mean_snr: Scalar,
    pub doppler_period: usize,
    pub n_sinusoids: usize,

    pub mean_power: Scalar,
    pub cycles_per_sample: Scalar,
    pub power_per_cycles: Scalar,

    pub loss: LossKind,
    pub dataset: DatasetKind,
    pub mnist_images: String,
    pub mnist_labels: String,
    pub sample_limit: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub blob_spread: Scalar,

    pub zipf_sigma: Scalar,
    pub dirichlet_alpha: Concentration,
    pub shuffle_partition: bool,

    pub l0: Scalar,
    pub seed: u64,
    pub run_id: String,
    pub output: String,
    pub channel_trace: String,
    pub test_fraction: Scalar,
    pub queue_envelope: Scalar,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            policy: PolicyName::Qaw,
            use_computation_gate: true,
            pilot_rb_reserved: true,
            clients: 10,
            rbs: 6,
            horizon: 100,
            local_passes: 10,
            beta: 0.7,
            eta: 0.2,
            xi: 1.0,
            phi: 1.0,
            varphi: 1.0,
            gamma0: 1.2,
            tau0: 1.2,
            zeta1: 2.0,
            zeta2: 5.0,
            gpr_window: 20,
            gpr_jitter: 1e-9,
            tx_power: 1.0,
            noise: 1.0,
            mean_snr: 1.2,
            doppler_period: 10,
            n_sinusoids: 8,
            mean_power: 2.0,
            cycles_per_sample: 0.002,
            power_per_cycles: 1.0,
            loss: LossKind::Quadratic,
            dataset: DatasetKind::Synthetic,
            mnist_images: String::new(),
            mnist_labels: String::new(),
            sample_limit: 0,
            classes: 2,
            feature_dim: 2,
            samples_per_class: 300,
            blob_spread: 0.5,
            zipf_sigma: 0.0,
            dirichlet_alpha: Concentration::Infinite,
            shuffle_partition: true,
            l0: 10.0,
            seed: 1,
            run_id: "run".into(),
            output: "metrics.csv".into(),
            channel_trace: String::new(),
            test_fraction: 0.2,
            queue_envelope: 15.0,
        }
    }
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse::<T>()
        .map_err(|_| HarnessError::Config(format!("bad value {value:?} for {key}")))
}

impl SystemConfig {
    /// Set one field by its config-file name.
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let value = value.trim();
        match key {
            "policy" => {
                self.policy = value.parse().map_err(HarnessError::Config)?;
            }
            "use_computation_gate" => self.use_computation_gate = parse_as(key, value)?,
            "pilot_rb_reserved" => self.pilot_rb_reserved = parse_as(key, value)?,
            "clients" => self.clients = parse_as(key, value)?,
            "rbs" => self.rbs = parse_as(key, value)?,
            "horizon" => self.horizon = parse_as(key, value)?,
            "local_passes" => self.local_passes = parse_as(key, value)?,
            "beta" => self.beta = parse_as(key, value)?,
            "eta" => self.eta = parse_as(key, value)?,
            "xi" => self.xi = parse_as(key, value)?,
            "phi" => self.phi = parse_as(key, value)?,
            "varphi" => self.varphi = parse_as(key, value)?,
            "gamma0" => self.gamma0 = parse_as(key, value)?,
            "tau0" => self.tau0 = parse_as(key, value)?,
            "zeta1" => self.zeta1 = parse_as(key, value)?,
            "zeta2" => self.zeta2 = parse_as(key, value)?,
            "gpr_window" => self.gpr_window = parse_as(key, value)?,
            "gpr_jitter" => self.gpr_jitter = parse_as(key, value)?,
            "tx_power" => self.tx_power = parse_as(key, value)?,
            "noise" => self.noise = parse_as(key, value)?,
            "mean_snr" => self.mean_snr = parse_as(key, value)?,
            "doppler_period" => self.doppler_period = parse_as(key, value)?,
            "n_sinusoids" => self.n_sinusoids = parse_as(key, value)?,
            "mean_power" => self.mean_power = parse_as(key, value)?,
            "cycles_per_sample" => self.cycles_per_sample = parse_as(key, value)?,
            "power_per_cycles" => self.power_per_cycles = parse_as(key, value)?,
            "loss" => {
                self.loss = match value {
                    "quadratic" => LossKind::Quadratic,
                    "logistic" => LossKind::Logistic,
                    other => {
                        return Err(HarnessError::Config(format!("unknown loss {other:?}")))
                    }
                }
            }
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DatasetKind::Synthetic,
                    "mnist" => DatasetKind::Mnist,
                    other => {
                        return Err(HarnessError::Config(format!("unknown dataset {other:?}")))
                    }
                }
            }
            "mnist_images" => self.mnist_images = value.into(),
            "mnist_labels" => self.mnist_labels = value.into(),
            "sample_limit" => self.sample_limit = parse_as(key, value)?,
            "classes" => self.classes = parse_as(key, value)?,
            "feature_dim" => self.feature_dim = parse_as(key, value)?,
            "samples_per_class" => self.samples_per_class = parse_as(key, value)?,
            "blob_spread" => self.blob_spread = parse_as(key, value)?,
            "zipf_sigma" => self.zipf_sigma = parse_as(key, value)?,
            "dirichlet_alpha" => {
                self.dirichlet_alpha = match value {
                    "inf" | "infinite" => Concentration::Infinite,
                    v => Concentration::Finite(parse_as(key, v)?),
                }
            }
            "shuffle_partition" => self.shuffle_partition = parse_as(key, value)?,
            "l0" => self.l0 = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            "run_id" => self.run_id = value.into(),
            "output" => self.output = value.into(),
            "channel_trace" => self.channel_trace = value.into(),
            "test_fraction" => self.test_fraction = parse_as(key, value)?,
            "queue_envelope" => self.queue_envelope = parse_as(key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` config body (# comments, blank lines ok)
    /// on top of the defaults.
    pub fn parse(text: &str) -> Result<SystemConfig, HarnessError> {
        let mut cfg = SystemConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set_field(key.trim(), value)?;
        }
        Ok(cfg)
    }
}

/// One output row per (run, t).
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub run_id: String,
    pub policy: String,
    pub seed: u64,
    pub t: usize,
    pub loss: Scalar,
    pub gap: Scalar,
    pub bound: Scalar,
    pub accuracy: Scalar,
    pub q: Scalar,
    pub g: Scalar,
    pub scheduled_hex: String,
    pub allocated: usize,
    pub successes: usize,
    pub rb_utilization: Scalar,
}

pub const CSV_HEADER: &str =
    "run_id,policy,seed,t,loss,gap,bound,accuracy,q,g,scheduled_hex,allocated,successes,rb_utilization";

pub fn write_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.policy,
            r.seed,
            r.t,
            r.loss,
            r.gap,
            r.bound,
            r.accuracy,
            r.q,
            r.g,
            r.scheduled_hex,
            r.allocated,
            r.successes,
            r.rb_utilization
        );
    }
    out
}

/// Reference optimum of the regularized loss over the pooled data.
/// Quadratic: normal equations. Logistic: Nesterov's accelerated gradient to
/// a 1e-12 gradient norm.
pub fn centralized_baseline(
    shards: &[Shard<Scalar>],
    loss: LossKind,
    xi: Scalar,
) -> Result<(Vec<Scalar>, Scalar), HarnessError> {
    let d_total: usize = shards.iter().map(Shard::size).sum();
    if d_total == 0 {
        return Err(HarnessError::Baseline("empty dataset".into()));
    }
    let dim = shards.iter().find(|s| s.size() > 0).unwrap().dim();
    let d = d_total as Scalar;

    let w = match loss {
        LossKind::Quadratic => {
            // (XᵀX/D + ξI) w = Xᵀy/D
            let mut a = vec![0.0; dim * dim];
            let mut b = vec![0.0; dim];
            for shard in shards {
                for (row, &y) in shard.x.iter().zip(&shard.y) {
                    for p in 0..dim {
                        b[p] += row[p] * y / d;
                        for q in 0..dim {
                            a[p * dim + q] += row[p] * row[q] / d;
                        }
                    }
                }
            }
            for p in 0..dim {
                a[p * dim + p] += xi;
            }
            crate::linalg::solve_linear(&a, dim, &b)
                .ok_or_else(|| HarnessError::Baseline("singular normal equations".into()))?
        }
        LossKind::Logistic => {
            // Lipschitz constant of ∇F: ξ + λmax(XᵀX)/(4D), λmax by power iteration
            let mut u = vec![1.0; dim];
            let mut lmax = 1.0;
            for _ in 0..50 {
                let mut au = vec![0.0; dim];
                for shard in shards {
                    for row in &shard.x {
                        let xu = crate::linalg::dot(row, &u);
                        for (o, &xj) in au.iter_mut().zip(row) {
                            *o += xu * xj;
                        }
                    }
                }
                lmax = au.iter().map(|v| v * v).sum::<Scalar>().sqrt();
                if lmax == 0.0 {
                    break;
                }
                for (ui, &ai) in u.iter_mut().zip(&au) {
                    *ui = ai / lmax;
                }
            }
            let lips = xi + lmax / (4.0 * d);
            let grad = |w: &[Scalar]| {
                let mut g: Vec<Scalar> = w.iter().map(|&wi| xi * wi).collect();
                for shard in shards {
                    for (row, &y) in shard.x.iter().zip(&shard.y) {
                        let z = crate::linalg::dot(row, w);
                        let sig = 1.0 / (1.0 + (y * z).exp());
                        for (gi, &xj) in g.iter_mut().zip(row) {
                            *gi -= y * sig * xj / d;
                        }
                    }
                }
                g
            };
            let mut w = vec![0.0; dim];
            let mut y_acc = w.clone();
            let mut t_acc: Scalar = 1.0;
            let mut converged = false;
            for _ in 0..200_000 {
                let g = grad(&y_acc);
                let gnorm = g.iter().map(|v| v * v).sum::<Scalar>().sqrt();
                if gnorm < 1e-12 {
                    w = y_acc.clone();
                    converged = true;
                    break;
                }
                let w_next: Vec<Scalar> = y_acc
                    .iter()
                    .zip(&g)
                    .map(|(&yi, &gi)| yi - gi / lips)
                    .collect();
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
                let m = (t_acc - 1.0) / t_next;
                y_acc = w_next
                    .iter()
                    .zip(&w)
                    .map(|(&n, &o)| n + m * (n - o))
                    .collect();
                w = w_next;
                t_acc = t_next;
            }
            if !converged {
                return Err(HarnessError::Baseline(
                    "logistic baseline did not converge".into(),
                ));
            }
            w
        }
    };
    let f0 = primal_loss(loss, shards, &w, xi);
    Ok((w, f0))
}

struct Prepared {
    shards: Vec<Vec<Shard<Scalar>>>, // per head: K client shards
    sizes: Vec<usize>,
    test: Vec<(Vec<Scalar>, usize)>,
    f0: Scalar,
}

fn build_dataset(cfg: &SystemConfig) -> Result<Vec<(Vec<Scalar>, usize)>, HarnessError> {
    match cfg.dataset {
        DatasetKind::Synthetic => Ok(synth_blobs(
            cfg.classes,
            cfg.feature_dim,
            cfg.samples_per_class,
            cfg.blob_spread,
            sub_seed(cfg.seed, "data"),
        )),
        DatasetKind::Mnist => {
            let limit = if cfg.sample_limit == 0 {
                usize::MAX
            } else {
                cfg.sample_limit
            };
            Ok(load_mnist_idx(
                cfg.mnist_images.as_ref(),
                cfg.mnist_labels.as_ref(),
                limit,
            )?)
        }
    }
}

/// Signed targets for head `c`: one-vs-rest, except plain ±1 for binary data.
fn head_target(label: usize, head: usize, heads: usize) -> Scalar {
    if heads == 1 {
        if label == 1 {
            1.0
        } else {
            -1.0
        }
    } else if label == head {
        1.0
    } else {
        -1.0
    }
}

fn prepare(cfg: &SystemConfig) -> Result<Prepared, HarnessError> {
    let data = build_dataset(cfg)?;
    let classes = match cfg.dataset {
        DatasetKind::Synthetic => cfg.classes,
        DatasetKind::Mnist => 10,
    };

    // held-out split
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng_for(cfg.seed, "testsplit"));
    let n_test = ((data.len() as Scalar) * cfg.test_fraction).round() as usize;
    let (test_idx, train_idx) = idx.split_at(n_test);
    let test: Vec<_> = test_idx.iter().map(|&i| data[i].clone()).collect();
    let train: Vec<_> = train_idx.iter().map(|&i| data[i].clone()).collect();

    // size-skewed, class-skewed partition
    let mut sizes = zipf_sizes(train.len(), cfg.clients, cfg.zipf_sigma)?;
    if cfg.shuffle_partition {
        sizes.shuffle(&mut rng_for(cfg.seed, "partition/shuffle"));
    }
    let mut class_totals = vec![0usize; classes];
    for (_, y) in &train {
        class_totals[*y] += 1;
    }
    let counts = dirichlet_class_split(
        &sizes,
        &class_totals,
        cfg.dirichlet_alpha,
        sub_seed(cfg.seed, "partition"),
    )?;
    let clients = assign_samples(&train, &counts, classes, sub_seed(cfg.seed, "partition/assign"))?;

    let heads = if classes <= 2 { 1 } else { classes };
    let mut shards: Vec<Vec<Shard<Scalar>>> = Vec::with_capacity(heads);
    for head in 0..heads {
        let per_client = clients
            .iter()
            .map(|cl| Shard {
                x: cl.samples.iter().map(|(x, _)| x.clone()).collect(),
                y: cl
                    .samples
                    .iter()
                    .map(|(_, y)| head_target(*y, head, heads))
                    .collect(),
            })
            .collect();
        shards.push(per_client);
    }

    let mut f0 = 0.0;
    for head_shards in &shards {
        let (_, f) = centralized_baseline(head_shards, cfg.loss, cfg.xi)?;
        f0 += f;
    }
    f0 /= heads as Scalar;

    Ok(Prepared {
        shards,
        sizes,
        test,
        f0,
    })
}

fn accuracy(
    duals: &[DualState<Scalar>],
    test: &[(Vec<Scalar>, usize)],
) -> Scalar {
    if test.is_empty() {
        return Scalar::NAN;
    }
    let heads = duals.len();
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let pred = if heads == 1 {
                usize::from(crate::linalg::dot(x, duals[0].model()) >= 0.0)
            } else {
                (0..heads)
                    .max_by(|&a, &b| {
                        crate::linalg::dot(x, duals[a].model())
                            .partial_cmp(&crate::linalg::dot(x, duals[b].model()))
                            .unwrap()
                            .then(b.cmp(&a)) // lowest index wins ties
                    })
                    .unwrap()
            };
            pred == *y
        })
        .count();
    correct as Scalar / test.len() as Scalar
}

fn scheduled_hex(scheduled: &[bool]) -> String {
    let mut bits: u128 = 0;
    for (k, &on) in scheduled.iter().enumerate().take(128) {
        if on {
            bits |= 1u128 << k;
        }
    }
    format!("{bits:x}")
}

/// Centralized optimum for the configured dataset (mean over class heads).
pub fn baseline_f0(cfg: &SystemConfig) -> Result<Scalar, HarnessError> {
    Ok(prepare(cfg)?.f0)
}

/// Outcome of one full run, rows plus audit aggregates.
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub records: Vec<TrainRecord<Scalar>>,
    pub f0: Scalar,
    pub max_q: Scalar,
    pub constraints_ok: bool,
}

pub fn run(cfg: &SystemConfig) -> Result<RunOutput, HarnessError> {
    let prep = prepare(cfg)?;
    let dim = prep.shards[0]
        .iter()
        .find(|s| s.size() > 0)
        .map_or(cfg.feature_dim, Shard::dim);
    let heads = prep.shards.len();
    let d_total: usize = prep.sizes.iter().sum();

    let channel_params = ChannelParams {
        clients: cfg.clients,
        rbs: cfg.rbs,
        mean_snr: cfg.mean_snr,
        tx_power: cfg.tx_power,
        noise: cfg.noise,
        doppler_period: cfg.doppler_period,
        n_sinusoids: cfg.n_sinusoids,
        seed: sub_seed(cfg.seed, "channel"),
    };
    let book = gen_channels(&channel_params, cfg.horizon.max(1))?;
    if !cfg.channel_trace.is_empty() {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&cfg.channel_trace)?);
        book.export_csv(&mut f)?;
    }

    let compute = ComputeParams {
        mean_power: cfg.mean_power,
        cycles_per_sample: cfg.cycles_per_sample,
        power_per_cycles: cfg.power_per_cycles,
        tau0: cfg.tau0,
        seed: cfg.seed,
    };

    let policy = PolicyKind {
        name: cfg.policy,
        use_computation_gate: cfg.use_computation_gate,
        pilot_rb_reserved: cfg.pilot_rb_reserved,
    };

    let mut gpr_models: Option<Vec<Vec<GprLinkModel<Scalar>>>> =
        if cfg.policy == PolicyName::QawGpr {
            let hyper = GprHyper {
                length: cfg.zeta1,
                period: cfg.zeta2,
                window: cfg.gpr_window,
                jitter: cfg.gpr_jitter,
            };
            Some(
                (0..cfg.clients)
                    .map(|_| (0..cfg.rbs).map(|_| GprLinkModel::new(hyper)).collect())
                    .collect(),
            )
        } else {
            None
        };

    let params = RoundParams {
        loss: cfg.loss,
        beta: cfg.beta,
        eta: cfg.eta,
        xi: cfg.xi,
        phi: cfg.phi,
        varphi: cfg.varphi,
        l0: cfg.l0,
        gamma0: cfg.gamma0,
        horizon: cfg.horizon,
        local_passes: cfg.local_passes,
        tx_power: cfg.tx_power,
        noise: cfg.noise,
    };

    let mut duals: Vec<DualState<Scalar>> = (0..heads)
        .map(|_| DualState::new(&prep.sizes, dim))
        .collect();
    let mut queues = VirtualQueues::default();
    let mut pf = PfState::new(cfg.clients);
    let mut rng = rng_for(cfg.seed, "policy");

    let mut rows = Vec::with_capacity(cfg.horizon);
    let mut records: Vec<TrainRecord<Scalar>> = Vec::with_capacity(cfg.horizon);
    let mut participations: Vec<Scalar> = Vec::with_capacity(cfg.horizon);
    let mut max_q: Scalar = 0.0;
    let mut constraints_ok = true;

    for t in 0..cfg.horizon {
        let rec = run_round(
            t,
            &policy,
            &params,
            &prep.sizes,
            &prep.shards,
            &mut duals,
            &book,
            &compute,
            gpr_models.as_mut(),
            &mut queues,
            &mut pf,
            &mut rng,
        )?;
        constraints_ok &= rec.constraints_ok;
        max_q = max_q.max(rec.q);
        participations.push(rec.participation);

        let mut loss = 0.0;
        for (head_shards, state) in prep.shards.iter().zip(&duals) {
            loss += primal_loss(cfg.loss, head_shards, state.model(), cfg.xi);
        }
        loss /= heads as Scalar;
        let bound = convergence_bound(d_total as Scalar, cfg.beta, &participations);
        // utilization to date includes this round
        let mut so_far = records.clone();
        so_far.push(rec.clone());

        rows.push(MetricsRow {
            run_id: cfg.run_id.clone(),
            policy: cfg.policy.to_string(),
            seed: cfg.seed,
            t,
            loss,
            gap: loss - prep.f0,
            bound,
            accuracy: accuracy(&duals, &prep.test),
            q: rec.q,
            g: rec.g,
            scheduled_hex: scheduled_hex(&rec.scheduled),
            allocated: rec.attempts,
            successes: rec.successes,
            rb_utilization: rb_utilization(&so_far).unwrap_or(Scalar::NAN),
        });
        records.push(rec);
    }

    Ok(RunOutput {
        rows,
        records,
        f0: prep.f0,
        max_q,
        constraints_ok,
    })
}

/// Per-axis-value aggregate of the final gap across seeds.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub axis: String,
    pub value: String,
    pub seeds: usize,
    pub mean_gap: Scalar,
    pub std_gap: Scalar,
}

pub fn sweep_summary_csv(summaries: &[SweepSummary]) -> String {
    let mut out = String::from("axis,value,seeds,mean_gap,std_gap\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.axis, s.value, s.seeds, s.mean_gap, s.std_gap
        );
    }
    out
}

/// Run every (value, seed) cell, optionally in parallel (FEDSCHED_THREADS
/// caps the worker count); outputs are merged in deterministic cell order.
pub fn sweep(
    base: &SystemConfig,
    axis: &str,
    values: &[String],
    seeds: usize,
) -> Result<(Vec<MetricsRow>, Vec<SweepSummary>), HarnessError> {
    if seeds == 0 {
        return Err(HarnessError::Config("seeds must be >= 1".into()));
    }
    // validate the axis up front for a clean config error
    {
        let mut probe = base.clone();
        probe.set_field(axis, &values[0])?;
    }
    let mut cells: Vec<SystemConfig> = Vec::new();
    for value in values {
        for s in 0..seeds {
            let mut cfg = base.clone();
            cfg.set_field(axis, value)?;
            cfg.seed = base.seed.wrapping_add(s as u64);
            cfg.run_id = format!("{axis}={value}/s{s}");
            cells.push(cfg);
        }
    }

    let threads: usize = std::env::var("FEDSCHED_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .min(cells.len());

    let results: Vec<Mutex<Option<Result<RunOutput, HarnessError>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let out = run(&cells[i]);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut rows = Vec::new();
    let mut finals: Vec<Vec<Scalar>> = vec![Vec::new(); values.len()];
    for (i, cell) in results.into_iter().enumerate() {
        let out = cell.into_inner().unwrap().expect("worker ran every cell")?;
        let vi = i / seeds;
        if let Some(last) = out.rows.last() {
            finals[vi].push(last.gap);
        }
        rows.extend(out.rows);
    }

    let summaries = values
        .iter()
        .zip(&finals)
        .map(|(value, gaps)| {
            let n = gaps.len() as Scalar;
            let mean = gaps.iter().sum::<Scalar>() / n;
            let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<Scalar>()
                / (n - 1.0).max(1.0);
            SweepSummary {
                axis: axis.to_string(),
                value: value.clone(),
                seeds: gaps.len(),
                mean_gap: mean,
                std_gap: var.sqrt(),
            }
        })
        .collect();
    Ok((rows, summaries))
}
