//! Training-data generation and partitioning across clients.
//!
//! Dataset-size heterogeneity follows a Zipf law over client indices and
//! class heterogeneity follows a Dirichlet split; both are converted to
//! integer counts by largest-remainder apportionment so totals are conserved
//! exactly.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::num::Real;

/// Dirichlet concentration: a finite value or the exact `α → ∞` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Concentration {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone)]
pub struct PartitionSpec {
    pub total_samples: usize,
    pub clients: usize,
    pub zipf_sigma: f64,
    pub dirichlet_alpha: Concentration,
    pub class_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientDataset<T: Real> {
    pub client_id: usize,
    pub samples: Vec<(Vec<T>, usize)>,
}

impl<T: Real> ClientDataset<T> {
    pub fn size(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("infeasible partition: {0}")]
    Infeasible(String),
    #[error("idx format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Largest-remainder apportionment of `total` units over real-valued weights.
/// Ties go to the lowest index.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Zipf dataset sizes: D_k ∝ k^{-σ}, summing exactly to `total`, every client
/// getting at least one sample.
pub fn zipf_sizes(total: usize, clients: usize, sigma: f64) -> Result<Vec<usize>, PartitionError> {
    if clients == 0 || total < clients {
        return Err(PartitionError::Infeasible(format!(
            "need total >= clients >= 1, got total={total} clients={clients}"
        )));
    }
    if sigma < 0.0 {
        return Err(PartitionError::Infeasible("sigma must be >= 0".into()));
    }
    let weights: Vec<f64> = (1..=clients).map(|k| (k as f64).powf(-sigma)).collect();
    let mut sizes = apportion(total, &weights);
    // enforce the minimum of one sample by taking from the largest clients
    for k in (0..clients).rev() {
        while sizes[k] == 0 {
            let donor = (0..clients).max_by_key(|&i| sizes[i]).unwrap();
            sizes[donor] -= 1;
            sizes[k] += 1;
        }
    }
    Ok(sizes)
}

/// Splits per-client sizes over classes. Row k sums to `sizes[k]`, column c
/// sums to `class_totals[c]`, exactly.
///
/// `Infinite` produces the deterministic proportional split; a finite α draws
/// per-client class proportions from Dirichlet(α) and fills them by sampling
/// without replacement from the per-class pools. α ≤ 1e-6 is treated as the
/// α → 0 limit where each client concentrates on a single class.
pub fn dirichlet_class_split(
    sizes: &[usize],
    class_totals: &[usize],
    alpha: Concentration,
    seed: u64,
) -> Result<Vec<Vec<usize>>, PartitionError> {
    let total: usize = sizes.iter().sum();
    let pool_total: usize = class_totals.iter().sum();
    if total != pool_total {
        return Err(PartitionError::Infeasible(format!(
            "sizes sum to {total} but class totals sum to {pool_total}"
        )));
    }
    let c = class_totals.len();
    let mut remaining = class_totals.to_vec();
    let mut out = Vec::with_capacity(sizes.len());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    for &dk in sizes {
        let mut row = vec![0usize; c];
        match alpha {
            Concentration::Infinite => {
                // proportional to the remaining pools; last client takes the rest
                let weights: Vec<f64> = remaining.iter().map(|&r| r as f64).collect();
                row = apportion(dk, &weights);
                // apportion can overshoot a depleted pool only if weights were 0
                for (cls, cnt) in row.iter_mut().enumerate() {
                    if *cnt > remaining[cls] {
                        return Err(PartitionError::Infeasible(
                            "proportional split exceeded a class pool".into(),
                        ));
                    }
                }
            }
            Concentration::Finite(a) if a <= 1e-6 => {
                // α → 0: concentrate on the class with the deepest remaining pool
                let mut left = dk;
                while left > 0 {
                    let cls = (0..c).max_by_key(|&i| remaining[i]).unwrap();
                    let take = left.min(remaining[cls]);
                    row[cls] += take;
                    remaining[cls] -= take;
                    left -= take;
                }
                out.push(row);
                continue;
            }
            Concentration::Finite(a) => {
                if a <= 0.0 {
                    return Err(PartitionError::Infeasible("alpha must be > 0".into()));
                }
                let gamma = Gamma::new(a, 1.0).expect("valid gamma");
                let mut p: Vec<f64> = (0..c).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
                let psum: f64 = p.iter().sum();
                for v in &mut p {
                    *v /= psum;
                }
                for _ in 0..dk {
                    // class draw restricted to non-depleted pools
                    let mass: f64 = (0..c)
                        .map(|i| if remaining[i] > 0 { p[i] } else { 0.0 })
                        .sum();
                    let mut u = rng.gen::<f64>() * mass;
                    let mut cls = c - 1;
                    for i in 0..c {
                        if remaining[i] == 0 {
                            continue;
                        }
                        if u < p[i] {
                            cls = i;
                            break;
                        }
                        u -= p[i];
                        cls = i;
                    }
                    // fall back to any non-empty pool on fp underflow
                    if remaining[cls] == 0 {
                        cls = (0..c).find(|&i| remaining[i] > 0).unwrap();
                    }
                    row[cls] += 1;
                    remaining[cls] -= 1;
                }
                out.push(row);
                continue;
            }
        }
        for (cls, cnt) in row.iter().enumerate() {
            remaining[cls] -= cnt;
        }
        out.push(row);
    }
    Ok(out)
}

/// Materializes client datasets from a global sample list and a per-client
/// per-class count matrix. Per-class pools are shuffled once with `seed` and
/// drawn without replacement, so both row and column sums hold exactly.
pub fn assign_samples<T: Real>(
    samples: &[(Vec<T>, usize)],
    counts: &[Vec<usize>],
    class_count: usize,
    seed: u64,
) -> Result<Vec<ClientDataset<T>>, PartitionError> {
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, (_, y)) in samples.iter().enumerate() {
        if *y >= class_count {
            return Err(PartitionError::Infeasible(format!(
                "label {y} out of range for {class_count} classes"
            )));
        }
        pools[*y].push(i);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; class_count];
    let mut out = Vec::with_capacity(counts.len());
    for (k, row) in counts.iter().enumerate() {
        let mut cl = ClientDataset {
            client_id: k,
            samples: Vec::new(),
        };
        for (cls, &cnt) in row.iter().enumerate() {
            for _ in 0..cnt {
                let idx = pools[cls].get(cursors[cls]).copied().ok_or_else(|| {
                    PartitionError::Infeasible(format!("class {cls} pool exhausted"))
                })?;
                cursors[cls] += 1;
                cl.samples.push(samples[idx].clone());
            }
        }
        out.push(cl);
    }
    Ok(out)
}

/// One CSV row per client: client_id, D_k, count_class_0..count_class_{C-1}.
pub fn write_partition_csv<W: Write>(w: &mut W, counts: &[Vec<usize>]) -> std::io::Result<()> {
    for (k, row) in counts.iter().enumerate() {
        let dk: usize = row.iter().sum();
        write!(w, "{k},{dk}")?;
        for c in row {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads an MNIST-style IDX image/label pair. Pixels are scaled to [0, 1].
pub fn load_mnist_idx<T: Real>(
    images_path: &Path,
    labels_path: &Path,
    limit: usize,
) -> Result<Vec<(Vec<T>, usize)>, PartitionError> {
    let mut img = BufReader::new(File::open(images_path)?);
    let magic = img.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(PartitionError::Format(format!(
            "bad image magic {magic:#010x}"
        )));
    }
    let n_img = img.read_u32::<BigEndian>()? as usize;
    let rows = img.read_u32::<BigEndian>()? as usize;
    let cols = img.read_u32::<BigEndian>()? as usize;

    let mut lbl = BufReader::new(File::open(labels_path)?);
    let magic = lbl.read_u32::<BigEndian>()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(PartitionError::Format(format!(
            "bad label magic {magic:#010x}"
        )));
    }
    let n_lbl = lbl.read_u32::<BigEndian>()? as usize;
    if n_img != n_lbl {
        return Err(PartitionError::Format(format!(
            "image/label count mismatch: {n_img} vs {n_lbl}"
        )));
    }

    let take = limit.min(n_img);
    let dim = rows * cols;
    let mut out = Vec::with_capacity(take);
    let mut buf = vec![0u8; dim];
    let mut label = [0u8; 1];
    for i in 0..take {
        img.read_exact(&mut buf)
            .map_err(|_| PartitionError::Format(format!("truncated image file at sample {i}")))?;
        lbl.read_exact(&mut label)
            .map_err(|_| PartitionError::Format(format!("truncated label file at sample {i}")))?;
        if label[0] > 9 {
            return Err(PartitionError::Format(format!(
                "label {} out of 0-9 range",
                label[0]
            )));
        }
        let x: Vec<T> = buf.iter().map(|&p| T::of(p as f64 / 255.0)).collect();
        out.push((x, label[0] as usize));
    }
    Ok(out)
}

/// Gaussian clusters around fixed, linearly separable class centers.
/// Deterministic per seed.
pub fn synth_blobs<T: Real>(
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Vec<(Vec<T>, usize)> {
    assert!(classes >= 1 && dim >= 1 && per_class >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut out = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        // centers spaced along the first axis, offset on the second when present
        let mut center = vec![0.0f64; dim];
        center[0] = 3.0 * c as f64 - 1.5 * (classes - 1) as f64;
        if dim > 1 {
            center[1] = if c % 2 == 0 { 1.0 } else { -1.0 };
        }
        for _ in 0..per_class {
            let x: Vec<T> = center
                .iter()
                .map(|&m| {
                    let n: f64 = normal.sample(&mut rng);
                    T::of(m + spread * n)
                })
                .collect();
            out.push((x, c));
        }
    }
    out
}
