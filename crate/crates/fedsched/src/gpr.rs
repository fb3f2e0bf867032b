//! Per-link Gaussian-process channel prediction with a periodic kernel.
//!
//! Complex gains are handled as two independent real GPs sharing one kernel
//! matrix. The posterior variance doubles as the scheduler's exploration
//! metric: a link that has never been sampled reports variance 1, a link
//! observed at (or one period away from) the query time reports ≈ 0.

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve, dot};
use crate::num::Real;

#[derive(Debug, Clone, Copy)]
pub struct GprHyper<T: Real> {
    /// Length hyper-parameter ζ1.
    pub length: T,
    /// Period hyper-parameter ζ2, in slots.
    pub period: T,
    /// Observation window N.
    pub window: usize,
    /// Diagonal jitter added to the kernel matrix.
    pub jitter: T,
}

impl<T: Real> GprHyper<T> {
    pub fn validate(&self) -> Result<(), GprError> {
        if self.length <= T::zero()
            || self.period <= T::zero()
            || self.window == 0
            || self.jitter < T::zero()
        {
            return Err(GprError::BadHyper);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GprError {
    #[error("invalid hyper-parameters")]
    BadHyper,
    #[error("observation time must exceed the last buffered time")]
    NonIncreasingTime,
    #[error("no observations buffered for this link")]
    ColdStart,
    #[error("kernel matrix factorization failed")]
    Singular,
}

/// Periodic kernel c(t_m, t_n) = exp(−sin²(π(t_m−t_n)/ζ2)/ζ1), in (0, 1].
pub fn kernel<T: Real>(t_m: T, t_n: T, hyper: &GprHyper<T>) -> T {
    let s = (T::PI() * (t_m - t_n) / hyper.period).sin();
    (-(s * s) / hyper.length).exp()
}

/// One (client, RB) link: sliding observation buffer plus hyper-parameters.
#[derive(Debug, Clone)]
pub struct GprLinkModel<T: Real> {
    hyper: GprHyper<T>,
    times: Vec<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> GprLinkModel<T> {
    pub fn new(hyper: GprHyper<T>) -> Self {
        hyper.validate().expect("valid hyper-parameters");
        GprLinkModel {
            hyper,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Buffers (t, h); evicts the oldest observation past the window.
    pub fn observe(&mut self, t: T, h: Complex<T>) -> Result<(), GprError> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(GprError::NonIncreasingTime);
            }
        }
        self.times.push(t);
        self.values.push(h);
        if self.times.len() > self.hyper.window {
            self.times.remove(0);
            self.values.remove(0);
        }
        Ok(())
    }

    /// Posterior mean and variance at time t. Cold start is an error; callers
    /// treat unexplored links as (mean 0, variance 1).
    pub fn predict(&self, t: T) -> Result<(Complex<T>, T), GprError> {
        let n = self.times.len();
        if n == 0 {
            return Err(GprError::ColdStart);
        }
        let mut c_mat = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut v = kernel(self.times[i], self.times[j], &self.hyper);
                if i == j {
                    v += self.hyper.jitter;
                }
                c_mat[i * n + j] = v;
            }
        }
        let l = cholesky(&c_mat, n).ok_or(GprError::Singular)?;
        let c_vec: Vec<T> = self
            .times
            .iter()
            .map(|&tn| kernel(t, tn, &self.hyper))
            .collect();
        let re: Vec<T> = self.values.iter().map(|h| h.re).collect();
        let im: Vec<T> = self.values.iter().map(|h| h.im).collect();
        let a_re = cholesky_solve(&l, n, &re);
        let a_im = cholesky_solve(&l, n, &im);
        let a_c = cholesky_solve(&l, n, &c_vec);
        let mean = Complex::new(dot(&c_vec, &a_re), dot(&c_vec, &a_im));
        let prior = kernel(t, t, &self.hyper);
        let var = (prior - dot(&c_vec, &a_c)).max(T::zero());
        Ok((mean, var))
    }

    /// Exploration metric j(t): posterior variance, 1 for unexplored links.
    pub fn information(&self, t: T) -> T {
        match self.predict(t) {
            Ok((_, var)) => var,
            Err(GprError::ColdStart) => T::one(),
            Err(_) => T::one(),
        }
    }
}
