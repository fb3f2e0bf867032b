//! Correlated Rayleigh uplink simulation, SINR, rate, and RB feasibility.
//!
//! Fading is generated by a sum of random-phase sinusoids whose frequencies
//! sit at (slightly jittered) harmonics of `1/doppler_period`, so the process
//! carries the periodic temporal correlation the GPR kernel assumes while the
//! jitter makes long runs ergodically Rayleigh. Links are independent across
//! (client, RB) and deterministic per seed.

use std::io::{BufRead, Write};

use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::num::Real;
use crate::seed::rng_for;

#[derive(Debug, Clone)]
pub struct ChannelParams<T: Real> {
    pub clients: usize,
    pub rbs: usize,
    /// Mean SINR E[p|h|²/N0] of every link (linear power ratio).
    pub mean_snr: T,
    pub tx_power: T,
    pub noise: T,
    /// Dominant temporal period of the fading, in slots.
    pub doppler_period: usize,
    pub n_sinusoids: usize,
    pub seed: u64,
}

impl<T: Real> ChannelParams<T> {
    pub fn validate(&self) -> Result<(), WirelessError> {
        if self.mean_snr <= T::zero()
            || self.tx_power <= T::zero()
            || self.noise <= T::zero()
            || self.doppler_period < 2
            || self.n_sinusoids < 1
        {
            return Err(WirelessError::BadParams);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WirelessError {
    #[error("invalid channel parameters")]
    BadParams,
    #[error("allocation assigns more than one RB to a client")]
    MultipleRbs,
    #[error("malformed channel trace: {0}")]
    Trace(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Complex gains h[k][b][t] for one run, generated once and then read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBook<T: Real> {
    pub clients: usize,
    pub rbs: usize,
    pub slots: usize,
    gains: Vec<Complex<T>>,
}

impl<T: Real> ChannelBook<T> {
    pub fn gain(&self, k: usize, b: usize, t: usize) -> Complex<T> {
        self.gains[(k * self.rbs + b) * self.slots + t]
    }

    /// True SINR of link (k, b) at slot t under orthogonal allocation (I = 0).
    pub fn sinr_at(&self, k: usize, b: usize, t: usize, p: T, n0: T) -> T {
        sinr(self.gain(k, b, t), p, n0)
    }

    pub fn sinr_matrix(&self, t: usize, p: T, n0: T) -> Vec<Vec<T>> {
        (0..self.clients)
            .map(|k| (0..self.rbs).map(|b| self.sinr_at(k, b, t, p, n0)).collect())
            .collect()
    }

    /// CSV trace: one `t,k,b,re,im` row per entry.
    pub fn export_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,k,b,re,im")?;
        for t in 0..self.slots {
            for k in 0..self.clients {
                for b in 0..self.rbs {
                    let h = self.gain(k, b, t);
                    writeln!(w, "{t},{k},{b},{},{}", h.re.as_f64(), h.im.as_f64())?;
                }
            }
        }
        Ok(())
    }

    pub fn import_csv<R: BufRead>(r: R) -> Result<Self, WirelessError> {
        let mut rows: Vec<(usize, usize, usize, T, T)> = Vec::new();
        let (mut kmax, mut bmax, mut tmax) = (0usize, 0usize, 0usize);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 && line.starts_with('t') {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(WirelessError::Trace(format!("line {}: {}", i + 1, line)));
            }
            let parse_u = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| WirelessError::Trace(format!("line {}: {e}", i + 1)))
            };
            let parse_f = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|e| WirelessError::Trace(format!("line {}: {e}", i + 1)))
            };
            let (t, k, b) = (parse_u(f[0])?, parse_u(f[1])?, parse_u(f[2])?);
            tmax = tmax.max(t + 1);
            kmax = kmax.max(k + 1);
            bmax = bmax.max(b + 1);
            rows.push((t, k, b, parse_f(f[3])?, parse_f(f[4])?));
        }
        let mut gains = vec![Complex::new(T::zero(), T::zero()); kmax * bmax * tmax];
        for (t, k, b, re, im) in rows {
            gains[(k * bmax + b) * tmax + t] = Complex::new(re, im);
        }
        Ok(ChannelBook {
            clients: kmax,
            rbs: bmax,
            slots: tmax,
            gains,
        })
    }
}

/// Generates the fading book for `slots` slots.
pub fn gen_channels<T: Real>(
    params: &ChannelParams<T>,
    slots: usize,
) -> Result<ChannelBook<T>, WirelessError> {
    params.validate()?;
    assert!(slots >= 1);
    let n = params.n_sinusoids;
    // E[|h|²] = mean_snr · N0 / p
    let amp = (params.mean_snr * params.noise / (params.tx_power * T::of_usize(n))).sqrt();
    let period = params.doppler_period as f64;
    let mut gains = vec![Complex::new(T::zero(), T::zero()); params.clients * params.rbs * slots];
    for k in 0..params.clients {
        for b in 0..params.rbs {
            let mut rng = rng_for(params.seed, &format!("channel/{k}/{b}"));
            // tones: harmonics alternate between 1 and 2 so that the lag-P/2
            // correlation cancels while lag-P stays strong
            let tones: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let harmonic = if n == 1 { 1.0 } else { (1 + i % 2) as f64 };
                    let jitter: f64 = if n == 1 {
                        0.0
                    } else {
                        rng.gen_range(-0.03..0.03)
                    };
                    let freq = harmonic * (1.0 + jitter) / period;
                    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (freq, phase)
                })
                .collect();
            for t in 0..slots {
                let mut re = 0.0f64;
                let mut im = 0.0f64;
                for &(f, ph) in &tones {
                    let arg = std::f64::consts::TAU * f * t as f64 + ph;
                    re += arg.cos();
                    im += arg.sin();
                }
                gains[(k * params.rbs + b) * slots + t] =
                    Complex::new(amp * T::of(re), amp * T::of(im));
            }
        }
    }
    Ok(ChannelBook {
        clients: params.clients,
        rbs: params.rbs,
        slots,
        gains,
    })
}

/// SINR under orthogonal allocation: p·|h|²/N0.
pub fn sinr<T: Real>(h: Complex<T>, p: T, n0: T) -> T {
    p * (h.re * h.re + h.im * h.im) / n0
}

/// Uplink rate Σ_b λ_b·log2(1+γ̂_b) for a one-hot (or zero) allocation row.
pub fn rate<T: Real>(lambda_row: &[bool], sinr_row: &[T]) -> Result<T, WirelessError> {
    if lambda_row.iter().filter(|&&x| x).count() > 1 {
        return Err(WirelessError::MultipleRbs);
    }
    Ok(lambda_row
        .iter()
        .zip(sinr_row)
        .filter(|(&l, _)| l)
        .map(|(_, &g)| (T::one() + g).ln() / T::of(2.0).ln())
        .sum())
}

/// Elementwise 𝟙(γ̂ ≥ γ0); the inclusive comparison gates λ in every scheduler.
pub fn feasible_mask<T: Real>(sinr_matrix: &[Vec<T>], gamma0: T) -> Vec<Vec<bool>> {
    sinr_matrix
        .iter()
        .map(|row| row.iter().map(|&g| g >= gamma0).collect())
        .collect()
}
