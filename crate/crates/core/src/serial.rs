//! Serial reproduction: a chain of identical Bayesian agents, each perceiving
//! the previous agent's output through a noisy likelihood and reproducing it by
//! sampling from the posterior. The prior is stationary under the resulting
//! chain for any likelihood that keeps it ergodic.

use std::collections::VecDeque;
use std::io::Write;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{exact_posterior, PosteriorKernel};
use crate::error::{invalid, Error, Result};
use crate::grid::{BinIndex, Distribution, GridSpec};
use crate::kernels::TransitionKernel;
use crate::scalar::Scalar;

/// Support and edge threshold for the ergodicity check.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    /// Draw `x_0` uniformly over all bins.
    Uniform,
    Fixed(BinIndex),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialChainConfig<S = f64> {
    pub prior: Distribution<S>,
    /// `p(x̂ | x)`: column `x` is the percept distribution for stimulus `x`.
    pub likelihood: TransitionKernel<S>,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub start: StartState,
}

impl<S: Scalar> SerialChainConfig<S> {
    pub fn new(
        prior: Distribution<S>,
        likelihood: TransitionKernel<S>,
        n_steps: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Self> {
        let config = Self { prior, likelihood, n_steps, burn_in, seed, start: StartState::Uniform };
        config.validate()?;
        Ok(config)
    }

    pub fn with_start(mut self, start: StartState) -> Result<Self> {
        if let StartState::Fixed(b) = start {
            self.prior.grid().check(b)?;
        }
        self.start = start;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec<S> {
        self.prior.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.likelihood.same_grid(self.prior.grid())?;
        if self.n_steps <= self.burn_in {
            return Err(invalid(
                "n_steps",
                format!("{} steps leave nothing after a burn-in of {}", self.n_steps, self.burn_in),
            ));
        }
        if let StartState::Fixed(b) = self.start {
            self.grid().check(b)?;
        }
        Ok(())
    }

    /// Reachability on the prior's support: `x -> x'` whenever some percept is
    /// likely (above [`SUPPORT_THRESHOLD`]) from both. The relation is
    /// symmetric, so one search from any supported bin decides connectivity.
    pub fn check_ergodic(&self) -> Result<()> {
        let n = self.grid().bin_count();
        let thr = S::lit(SUPPORT_THRESHOLD);
        let supported: Vec<bool> = self.prior.mass().iter().map(|&m| m > thr).collect();
        let Some(root) = supported.iter().position(|&s| s) else {
            return Ok(());
        };
        let lik = self.likelihood.as_slice();
        let mut seen_state = vec![false; n];
        let mut seen_percept = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen_state[root] = true;
        while let Some(x) = queue.pop_front() {
            for x_hat in 0..n {
                if seen_percept[x_hat] || lik[x_hat * n + x] <= thr {
                    continue;
                }
                seen_percept[x_hat] = true;
                for next in 0..n {
                    if supported[next] && !seen_state[next] && lik[x_hat * n + next] > thr {
                        seen_state[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        let unreachable = (0..n).filter(|&i| supported[i] && !seen_state[i]).count();
        if unreachable == 0 {
            Ok(())
        } else {
            Err(Error::NotErgodic { from: root, unreachable })
        }
    }
}

/// States `x_0..x_n` and the percepts `x̂_0..x̂_{n-1}` generated from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<S = f64> {
    pub grid: GridSpec<S>,
    pub states: Vec<BinIndex>,
    pub percepts: Vec<BinIndex>,
}

impl<S: Scalar> ChainTrace<S> {
    /// `step,state_ix,state_iy[,percept_ix,percept_iy]`. The final state has no percept.
    pub fn write_csv<W: Write>(&self, mut out: W, with_percepts: bool) -> Result<()> {
        if with_percepts {
            writeln!(out, "step,state_ix,state_iy,percept_ix,percept_iy")?;
        } else {
            writeln!(out, "step,state_ix,state_iy")?;
        }
        for (t, &s) in self.states.iter().enumerate() {
            let (sx, sy) = self.grid.coords(s)?;
            match (with_percepts, self.percepts.get(t)) {
                (true, Some(&p)) => {
                    let (px, py) = self.grid.coords(p)?;
                    writeln!(out, "{t},{sx},{sy},{px},{py}")?;
                }
                (true, None) => writeln!(out, "{t},{sx},{sy},,")?,
                (false, _) => writeln!(out, "{t},{sx},{sy}")?,
            }
        }
        Ok(())
    }

    /// Normalized histogram of `(state, percept)` pairs after `burn_in`, indexed
    /// `[percept * N + state]`.
    pub fn joint_histogram(&self, burn_in: usize) -> Result<Vec<f64>> {
        let len = self.percepts.len();
        if burn_in >= len {
            return Err(Error::EmptySegment { burn_in, len });
        }
        let n = self.grid.bin_count();
        let mut counts = vec![0u64; n * n];
        for (s, p) in self.states[burn_in..len].iter().zip(&self.percepts[burn_in..]) {
            counts[p.0 * n + s.0] += 1;
        }
        let total = (len - burn_in) as f64;
        Ok(counts.into_iter().map(|c| c as f64 / total).collect())
    }
}

fn column_samplers<S: Scalar>(m: &TransitionKernel<S>) -> Result<Vec<WeightedIndex<f64>>> {
    (0..m.bins())
        .map(|from| {
            let col: Vec<f64> = m.column(BinIndex(from)).into_iter().map(S::to_f64_lossy).collect();
            WeightedIndex::new(col).map_err(|e| Error::InvalidKernel(format!("column {from}: {e}")))
        })
        .collect()
}

/// A configured chain with its posterior and per-column samplers prepared.
#[derive(Debug, Clone)]
pub struct SerialChain<'a, S = f64> {
    config: &'a SerialChainConfig<S>,
    posterior: PosteriorKernel<S>,
    encode: Vec<WeightedIndex<f64>>,
    decode: Vec<WeightedIndex<f64>>,
}

impl<'a, S: Scalar> SerialChain<'a, S> {
    pub fn new(config: &'a SerialChainConfig<S>) -> Result<Self> {
        config.validate()?;
        let posterior = exact_posterior(&config.likelihood, &config.prior)?;
        let encode = column_samplers(&config.likelihood)?;
        let decode = column_samplers(posterior.matrix())?;
        Ok(Self { config, posterior, encode, decode })
    }

    pub fn config(&self) -> &SerialChainConfig<S> {
        self.config
    }

    pub fn posterior(&self) -> &PosteriorKernel<S> {
        &self.posterior
    }

    /// Encode `x` into a percept, then decode by sampling the posterior.
    /// Returns `(x_next, percept)`.
    pub fn step<R: Rng + ?Sized>(&self, x: BinIndex, rng: &mut R) -> (BinIndex, BinIndex) {
        let percept = self.encode[x.0].sample(rng);
        let next = self.decode[percept].sample(rng);
        (BinIndex(next), BinIndex(percept))
    }

    pub fn run(&self) -> ChainTrace<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let n = self.config.grid().bin_count();
        let mut x = match self.config.start {
            StartState::Uniform => BinIndex(rng.gen_range(0..n)),
            StartState::Fixed(b) => b,
        };
        let mut states = Vec::with_capacity(self.config.n_steps + 1);
        let mut percepts = Vec::with_capacity(self.config.n_steps);
        states.push(x);
        for _ in 0..self.config.n_steps {
            let (next, percept) = self.step(x, &mut rng);
            percepts.push(percept);
            states.push(next);
            x = next;
        }
        ChainTrace { grid: *self.config.grid(), states, percepts }
    }
}

pub fn serial_step<S: Scalar, R: Rng + ?Sized>(
    chain: &SerialChain<'_, S>,
    x: BinIndex,
    rng: &mut R,
) -> (BinIndex, BinIndex) {
    chain.step(x, rng)
}

/// `K(x' | x) = Σ_x̂ posterior(x' | x̂) likelihood(x̂ | x)`. Cost N^3, refused above `guard` bins.
pub fn serial_kernel<S: Scalar>(config: &SerialChainConfig<S>, guard: usize) -> Result<TransitionKernel<S>> {
    config.likelihood.same_grid(config.prior.grid())?;
    let n = config.grid().bin_count();
    if n > guard {
        return Err(Error::GuardExceeded { bins: n, limit: guard });
    }
    let posterior = exact_posterior(&config.likelihood, &config.prior)?;
    posterior.matrix().compose(&config.likelihood, guard)
}

pub fn run_chain<S: Scalar>(config: &SerialChainConfig<S>) -> Result<ChainTrace<S>> {
    Ok(SerialChain::new(config)?.run())
}

/// Histogram of the states after discarding the first `burn_in`.
pub fn empirical_distribution<S: Scalar>(trace: &ChainTrace<S>, burn_in: usize) -> Result<Distribution<S>> {
    let len = trace.states.len();
    if burn_in >= len {
        return Err(Error::EmptySegment { burn_in, len });
    }
    let mut counts = vec![0u64; trace.grid.bin_count()];
    for s in &trace.states[burn_in..] {
        trace.grid.check(*s)?;
        counts[s.0] += 1;
    }
    Distribution::from_weights(trace.grid, counts.into_iter().map(|c| S::lit(c as f64)).collect())
}
