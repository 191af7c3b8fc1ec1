//! Forward noising chains, exact Bayesian posteriors, and the reverse sampling
//! process they induce.
//!
//! The reverse step from `x_t` to `x_{t-1}` re-noises `x_t` with the step-`t`
//! kernel and then denoises with the posterior whose prior is the forward
//! marginal `q_{t-1}`. Because that composed kernel is built from a likelihood
//! and the matching Bayesian posterior, `q_{t-1}` satisfies detailed balance
//! with respect to it; how well the chain recovers `q_0` depends on how close
//! each `q_{t-1}` is to stationary under its own step kernel.

use std::borrow::Cow;
use std::io::Write;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{BinIndex, Distribution, GridSpec};
use crate::kernels::{stationarity_residual, StepKernels, TransitionKernel};
use crate::scalar::{Accumulator, Scalar};

/// Evidence below this is treated as an impossible observation.
pub const ZERO_EVIDENCE: f64 = 1e-300;

/// Marginals `q_0..q_T` of a forward chain together with its step kernels.
#[derive(Debug, Clone)]
pub struct ForwardProcess<S = f64> {
    kernels: StepKernels<S>,
    marginals: Vec<Distribution<S>>,
    noise: Distribution<S>,
}

impl<S: Scalar> ForwardProcess<S> {
    /// Runs the chain from `q0`. The noise distribution the reverse process
    /// starts from is the family's stationary distribution when the kernels
    /// know it, and the final marginal `q_T` otherwise.
    pub fn new(q0: Distribution<S>, kernels: StepKernels<S>) -> Result<Self> {
        let steps = kernels.steps();
        if steps == 0 {
            return Err(invalid("kernels", "a forward process needs at least one step"));
        }
        if let StepKernels::Dense(list) = &kernels {
            for k in list {
                k.same_grid(q0.grid())?;
            }
        }
        let mut marginals = Vec::with_capacity(steps + 1);
        marginals.push(q0);
        for t in 1..=steps {
            let kernel = kernels.kernel(t)?;
            kernel.same_grid(marginals[0].grid())?;
            let next = kernel.apply(&marginals[t - 1])?;
            marginals.push(next);
        }
        let noise = kernels.stationary().unwrap_or_else(|| marginals[steps].clone());
        Ok(Self { kernels, marginals, noise })
    }

    /// Overrides the distribution `x_T` is drawn from in the reverse process.
    pub fn with_noise(mut self, noise: Distribution<S>) -> Result<Self> {
        noise.same_grid(&self.marginals[0])?;
        self.noise = noise;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.marginals.len() - 1
    }

    pub fn grid(&self) -> &GridSpec<S> {
        self.marginals[0].grid()
    }

    /// The data distribution `q_0`.
    pub fn data(&self) -> &Distribution<S> {
        &self.marginals[0]
    }

    pub fn marginals(&self) -> &[Distribution<S>] {
        &self.marginals
    }

    pub fn marginal(&self, t: usize) -> &Distribution<S> {
        &self.marginals[t]
    }

    /// Step-`t` kernel, 1-based.
    pub fn kernel(&self, t: usize) -> Result<Cow<'_, TransitionKernel<S>>> {
        self.kernels.kernel(t)
    }

    pub fn kernels(&self) -> &StepKernels<S> {
        &self.kernels
    }

    /// `q_n`, where the reverse process starts.
    pub fn noise(&self) -> &Distribution<S> {
        &self.noise
    }
}

/// Runs a forward chain through an explicit list of kernels.
pub fn forward_marginals<S: Scalar>(
    q0: &Distribution<S>,
    kernels: Vec<TransitionKernel<S>>,
) -> Result<ForwardProcess<S>> {
    ForwardProcess::new(q0.clone(), StepKernels::Dense(kernels))
}

/// `p_{t-1}(x | x̂)`: one column per observed bin `x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorKernel<S = f64> {
    step: usize,
    matrix: TransitionKernel<S>,
    fallback_columns: Vec<BinIndex>,
}

impl<S: Scalar> PosteriorKernel<S> {
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn matrix(&self) -> &TransitionKernel<S> {
        &self.matrix
    }

    pub fn into_matrix(self) -> TransitionKernel<S> {
        self.matrix
    }

    /// Observed bins with no evidence under the prior; their columns hold the prior itself.
    pub fn fallback_columns(&self) -> &[BinIndex] {
        &self.fallback_columns
    }

    fn at_step(mut self, step: usize) -> Self {
        self.step = step;
        self
    }
}

/// Bayes' rule with `kernel` as likelihood:
/// `posterior(i | j) = K(j | i) prior(i) / Σ_i' K(j | i') prior(i')`.
pub fn exact_posterior<S: Scalar>(kernel: &TransitionKernel<S>, prior: &Distribution<S>) -> Result<PosteriorKernel<S>> {
    kernel.same_grid(prior.grid())?;
    let n = kernel.bins();
    let k = kernel.as_slice();
    let pi = prior.mass();
    let evidence = kernel.apply_raw(pi);
    let threshold = S::lit(ZERO_EVIDENCE).max(S::min_positive_value());
    let mut data = vec![S::zero(); n * n];
    let mut fallback_columns = Vec::new();
    for (j, &ev) in evidence.iter().enumerate() {
        let likelihood = &k[j * n..(j + 1) * n];
        if ev < threshold {
            if likelihood.iter().zip(pi).any(|(&l, &p)| l > S::zero() && p > S::zero()) {
                return Err(Error::ZeroEvidence { bin: j });
            }
            for i in 0..n {
                data[i * n + j] = pi[i];
            }
            fallback_columns.push(BinIndex(j));
            continue;
        }
        for i in 0..n {
            data[i * n + j] = likelihood[i] * pi[i] / ev;
        }
    }
    Ok(PosteriorKernel { step: 0, matrix: TransitionKernel::from_raw(*kernel.grid(), data), fallback_columns })
}

/// One reverse step: noise `dist_t` with `kernel`, then denoise with `posterior`.
/// Two matrix-vector products; the composed kernel is never formed.
pub fn sampling_step<S: Scalar>(
    posterior: &PosteriorKernel<S>,
    kernel: &TransitionKernel<S>,
    dist_t: &Distribution<S>,
) -> Result<Distribution<S>> {
    kernel.same_grid(dist_t.grid())?;
    posterior.matrix.same_grid(dist_t.grid())?;
    let noisy = kernel.apply_raw(dist_t.mass());
    Distribution::from_weights(*dist_t.grid(), posterior.matrix.apply_raw(&noisy))
}

/// The composed reverse kernel `posterior * kernel`. Cost N^3, refused above `guard` bins.
pub fn materialize_sampling_kernel<S: Scalar>(
    posterior: &PosteriorKernel<S>,
    kernel: &TransitionKernel<S>,
    guard: usize,
) -> Result<TransitionKernel<S>> {
    posterior.matrix.compose(kernel, guard)
}

/// `max_{i,j} |K(j|i) d(i) - K(i|j) d(j)|`.
pub fn detailed_balance_residual<S: Scalar>(kernel: &TransitionKernel<S>, dist: &Distribution<S>) -> Result<S> {
    kernel.same_grid(dist.grid())?;
    let n = kernel.bins();
    let k = kernel.as_slice();
    let d = dist.mass();
    let mut worst = S::zero();
    for j in 0..n {
        for i in 0..j {
            let forward = k[j * n + i] * d[i];
            let backward = k[i * n + j] * d[j];
            worst = worst.max((forward - backward).abs());
        }
    }
    Ok(worst)
}

/// Detailed-balance residual of the composed reverse kernel restricted to the
/// pairs touching `bins`. Cost O(N^2) per probe bin instead of O(N^3) for the
/// full product; probing every bin gives the full residual.
pub fn sampling_detailed_balance_probe<S: Scalar>(
    posterior: &PosteriorKernel<S>,
    kernel: &TransitionKernel<S>,
    prior: &Distribution<S>,
    bins: &[BinIndex],
) -> Result<S> {
    kernel.same_grid(prior.grid())?;
    posterior.matrix.same_grid(prior.grid())?;
    let n = kernel.bins();
    let post = posterior.matrix.as_slice();
    let k = kernel.as_slice();
    let q = prior.mass();
    let mut worst = S::zero();
    for &bin in bins {
        let i = prior.grid().check(bin)?.0;
        // column i of P*K: where the chain goes from i
        let column = posterior.matrix.apply_raw(&kernel.column(bin));
        // row i of P*K: how the chain arrives at i from each j
        let mut row = vec![S::zero(); n];
        for x_hat in 0..n {
            let w = post[i * n + x_hat];
            if w == S::zero() {
                continue;
            }
            for (r, &kv) in row.iter_mut().zip(&k[x_hat * n..(x_hat + 1) * n]) {
                *r = *r + w * kv;
            }
        }
        for j in 0..n {
            worst = worst.max((column[j] * q[i] - row[j] * q[j]).abs());
        }
    }
    Ok(worst)
}

/// Reverse process of a forward chain with exact posteriors.
///
/// Posteriors are built on demand unless [`ReverseSampler::materialized`] was
/// used; on a 41x41 grid each one is a 1681x1681 matrix.
#[derive(Debug, Clone)]
pub struct ReverseSampler<'a, S = f64> {
    forward: &'a ForwardProcess<S>,
    posteriors: Option<Vec<PosteriorKernel<S>>>,
}

/// Reverse-process distributions, `distributions[t]` over `x_t` (`distributions[T] = q_n`).
#[derive(Debug, Clone)]
pub struct ReversePath<S = f64> {
    pub distributions: Vec<Distribution<S>>,
    /// `(step, observed bin)` posterior columns that fell back to the prior.
    pub fallback_columns: Vec<(usize, BinIndex)>,
}

impl<'a, S: Scalar> ReverseSampler<'a, S> {
    pub fn new(forward: &'a ForwardProcess<S>) -> Self {
        Self { forward, posteriors: None }
    }

    /// Builds and keeps every step's posterior.
    pub fn materialized(forward: &'a ForwardProcess<S>) -> Result<Self> {
        let posteriors =
            (1..=forward.steps()).map(|t| Self::build_posterior(forward, t)).collect::<Result<Vec<_>>>()?;
        Ok(Self { forward, posteriors: Some(posteriors) })
    }

    fn build_posterior(forward: &ForwardProcess<S>, t: usize) -> Result<PosteriorKernel<S>> {
        let kernel = forward.kernel(t)?;
        Ok(exact_posterior(&kernel, forward.marginal(t - 1))?.at_step(t))
    }

    pub fn forward(&self) -> &'a ForwardProcess<S> {
        self.forward
    }

    /// Posterior of step `t` (1-based), with `q_{t-1}` as prior.
    pub fn posterior(&self, t: usize) -> Result<Cow<'_, PosteriorKernel<S>>> {
        if t == 0 || t > self.forward.steps() {
            return Err(invalid("t", format!("step {t} outside 1..={}", self.forward.steps())));
        }
        match &self.posteriors {
            Some(list) => Ok(Cow::Borrowed(&list[t - 1])),
            None => Self::build_posterior(self.forward, t).map(Cow::Owned),
        }
    }

    /// Propagates `q_n` down to `x_0`, keeping every intermediate distribution.
    pub fn reverse_path(&self) -> Result<ReversePath<S>> {
        let steps = self.forward.steps();
        let mut distributions = vec![self.forward.noise().clone(); steps + 1];
        let mut fallback_columns = Vec::new();
        for t in (1..=steps).rev() {
            let kernel = self.forward.kernel(t)?;
            let posterior = self.posterior(t)?;
            fallback_columns.extend(posterior.fallback_columns().iter().map(|&b| (t, b)));
            distributions[t - 1] = sampling_step(&posterior, &kernel, &distributions[t])?;
        }
        Ok(ReversePath { distributions, fallback_columns })
    }

    /// Precomputes per-column samplers for Monte-Carlo trajectories.
    pub fn trajectory_sampler(&self) -> Result<TrajectorySampler> {
        let columns = |m: &TransitionKernel<S>| -> Result<Vec<WeightedIndex<f64>>> {
            (0..m.bins())
                .map(|from| {
                    let weights: Vec<f64> = m.column(BinIndex(from)).into_iter().map(S::to_f64_lossy).collect();
                    WeightedIndex::new(weights).map_err(|e| Error::InvalidKernel(format!("column {from}: {e}")))
                })
                .collect()
        };
        let start = WeightedIndex::new(self.forward.noise().mass().iter().map(|m| m.to_f64_lossy()))
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let mut steps = Vec::with_capacity(self.forward.steps());
        for t in 1..=self.forward.steps() {
            let noise = columns(&*self.forward.kernel(t)?)?;
            let denoise = columns(self.posterior(t)?.matrix())?;
            steps.push(StepSampler { noise, denoise });
        }
        Ok(TrajectorySampler { start, steps })
    }
}

/// `p_s(x_0)`: the reverse chain's distribution over data.
pub fn reverse_distribution<S: Scalar>(sampler: &ReverseSampler<'_, S>) -> Result<Distribution<S>> {
    let mut path = sampler.reverse_path()?;
    Ok(path.distributions.swap_remove(0))
}

#[derive(Debug, Clone)]
struct StepSampler {
    noise: Vec<WeightedIndex<f64>>,
    denoise: Vec<WeightedIndex<f64>>,
}

/// Column samplers for every step of a reverse process.
#[derive(Debug, Clone)]
pub struct TrajectorySampler {
    start: WeightedIndex<f64>,
    steps: Vec<StepSampler>,
}

/// One sampled reverse chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// `[x_T, x_{T-1}, ..., x_0]`.
    pub states: Vec<BinIndex>,
    /// `[x̂_T, ..., x̂_1]`, the re-noised inputs fed to each posterior.
    pub latents: Vec<BinIndex>,
}

impl TrajectorySampler {
    pub fn sample(&self, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let mut x = self.start.sample(rng);
        let mut states = Vec::with_capacity(self.steps.len() + 1);
        let mut latents = Vec::with_capacity(self.steps.len());
        states.push(BinIndex(x));
        for step in self.steps.iter().rev() {
            let x_hat = step.noise[x].sample(rng);
            x = step.denoise[x_hat].sample(rng);
            latents.push(BinIndex(x_hat));
            states.push(BinIndex(x));
        }
        Trajectory { states, latents }
    }
}

/// One Monte-Carlo reverse trajectory `[x_T, ..., x_0]`, deterministic in `seed`.
pub fn sample_reverse_trajectory<S: Scalar>(sampler: &ReverseSampler<'_, S>, seed: u64) -> Result<Vec<BinIndex>> {
    Ok(sampler.trajectory_sampler()?.sample(seed).states)
}

/// The log-likelihood bound computed directly and in its per-step KL form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<S = f64> {
    pub k_direct: S,
    pub k_kl_form: S,
    pub c_q: S,
    /// Entropy of the noise distribution, nats.
    pub h_qn: S,
    /// `E_{x_t ~ q_t} KL[q(x_{t-1}|x_t) || p(x_{t-1}|x_t)]` for `t = 1..=T`.
    pub per_step_kl: Vec<S>,
}

impl<S: Scalar> BoundReport<S> {
    /// `step,kl_term` rows, then a `K_direct,K_kl_form,C_q,H_qn` footer.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,kl_term")?;
        for (t, kl) in self.per_step_kl.iter().enumerate() {
            writeln!(out, "{},{:.16e}", t + 1, kl)?;
        }
        writeln!(out, "K_direct,K_kl_form,C_q,H_qn")?;
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", self.k_direct, self.k_kl_form, self.c_q, self.h_qn)?;
        Ok(())
    }
}

/// Evaluates the bound for arbitrary reverse kernels (`reverse_kernels[t-1]`
/// maps `x_t` to a distribution over `x_{t-1}`), both as the direct sum over
/// forward transitions and as `-Σ_t E KL + C_q`.
pub fn variational_bound_report<S: Scalar>(
    forward: &ForwardProcess<S>,
    reverse_kernels: &[TransitionKernel<S>],
    guard: usize,
) -> Result<BoundReport<S>> {
    let n = forward.grid().bin_count();
    if n > guard {
        return Err(Error::GuardExceeded { bins: n, limit: guard });
    }
    if reverse_kernels.len() != forward.steps() {
        return Err(invalid(
            "reverse_kernels",
            format!("expected {} kernels, got {}", forward.steps(), reverse_kernels.len()),
        ));
    }
    let mut direct = Accumulator::new();
    let mut c_q = Accumulator::new();
    let mut per_step_kl = Vec::with_capacity(forward.steps());
    for (t, reverse) in (1..=forward.steps()).zip(reverse_kernels) {
        reverse.same_grid(forward.grid())?;
        let kernel = forward.kernel(t)?;
        let k = kernel.as_slice();
        let p = reverse.as_slice();
        let prior = forward.marginal(t - 1).mass();
        let evidence = kernel.apply_raw(prior);
        let mut kl = Accumulator::new();
        for to in 0..n {
            for from in 0..n {
                let likelihood = k[to * n + from];
                let weight = likelihood * prior[from];
                if weight == S::zero() {
                    continue;
                }
                let back = p[from * n + to];
                if !(back > S::zero()) {
                    return Err(Error::LogOfZero { step: t, from, to });
                }
                direct.add(weight * (back / likelihood).ln());
                c_q.add(weight * (prior[from] / evidence[to]).ln());
                kl.add(weight * (weight / (evidence[to] * back)).ln());
            }
        }
        per_step_kl.push(kl.value());
    }
    let h_qn = forward.noise().entropy();
    let c_q = c_q.value() - h_qn;
    let kl_total = per_step_kl.iter().copied().fold(S::zero(), |a, b| a + b);
    Ok(BoundReport { k_direct: direct.value() - h_qn, k_kl_form: c_q - kl_total, c_q, h_qn, per_step_kl })
}

/// `stationarity_residual(K_t, q_{t-1})` for `t = 1..=T`.
pub fn approximate_stationarity_profile<S: Scalar>(forward: &ForwardProcess<S>) -> Result<Vec<S>> {
    (1..=forward.steps()).map(|t| stationarity_residual(&*forward.kernel(t)?, forward.marginal(t - 1))).collect()
}
