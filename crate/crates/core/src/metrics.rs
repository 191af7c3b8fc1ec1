//! Divergences between distributions and the schedule-quality measures built on them.

use crate::diffusion::ForwardProcess;
use crate::error::{invalid, Result};
use crate::grid::Distribution;
use crate::scalar::{compensated_sum, Accumulator, Scalar};

/// Options for KL evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions<S = f64> {
    epsilon_floor: S,
}

impl<S: Scalar> MetricOptions<S> {
    pub fn new(epsilon_floor: S) -> Result<Self> {
        if epsilon_floor > S::zero() && epsilon_floor < S::lit(1e-6) {
            Ok(Self { epsilon_floor })
        } else {
            Err(invalid("epsilon_floor", format!("{epsilon_floor} is outside (0, 1e-6)")))
        }
    }

    pub fn epsilon_floor(&self) -> S {
        self.epsilon_floor
    }
}

impl<S: Scalar> Default for MetricOptions<S> {
    fn default() -> Self {
        Self { epsilon_floor: S::lit(1e-12) }
    }
}

fn floored<S: Scalar>(mass: &[S], eps: S) -> Vec<S> {
    let raised: Vec<S> = mass.iter().map(|&m| m.max(eps)).collect();
    let total = compensated_sum(raised.iter().copied());
    raised.into_iter().map(|m| m / total).collect()
}

/// `KL(p || q)` in nats, with both arguments floored at `epsilon_floor` and renormalized.
pub fn kl_divergence<S: Scalar>(p: &Distribution<S>, q: &Distribution<S>, opts: &MetricOptions<S>) -> Result<S> {
    p.same_grid(q)?;
    let p = floored(p.mass(), opts.epsilon_floor);
    let q = floored(q.mass(), opts.epsilon_floor);
    let mut acc = Accumulator::new();
    for (a, b) in p.iter().zip(&q) {
        acc.add(*a * (*a / *b).ln());
    }
    Ok(acc.value())
}

pub fn total_variation<S: Scalar>(p: &Distribution<S>, q: &Distribution<S>) -> Result<S> {
    p.same_grid(q)?;
    let l1 = compensated_sum(p.mass().iter().zip(q.mass()).map(|(a, b)| (*a - *b).abs()));
    Ok(l1 / S::lit(2.0))
}

/// `KL(q_d || p_s)`.
pub fn reconstruction_error<S: Scalar>(
    forward: &ForwardProcess<S>,
    p_s: &Distribution<S>,
    opts: &MetricOptions<S>,
) -> Result<S> {
    kl_divergence(forward.data(), p_s, opts)
}

/// `KL(q_{t+1} || q_t)` for every consecutive pair of forward marginals.
pub fn consecutive_divergences<S: Scalar>(forward: &ForwardProcess<S>, opts: &MetricOptions<S>) -> Result<Vec<S>> {
    forward.marginals().windows(2).map(|w| kl_divergence(&w[1], &w[0], opts)).collect()
}

/// Largest single-step change along the forward path, `max_t KL(q_{t+1} || q_t)`.
pub fn inversion_complexity<S: Scalar>(forward: &ForwardProcess<S>, opts: &MetricOptions<S>) -> Result<S> {
    Ok(consecutive_divergences(forward, opts)?.into_iter().fold(S::zero(), S::max))
}
