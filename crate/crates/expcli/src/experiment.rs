//! The three experiment pipelines: forward/reverse runs, schedule sweeps and
//! serial-reproduction chains.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sdl_core::{
    approximate_stationarity_profile, consecutive_divergences, empirical_distribution, kl_divergence,
    sampling_detailed_balance_probe, total_variation, BinIndex, Distribution, ForwardProcess, ReversePath,
    ReverseSampler, SerialChain,
};

use crate::config::{ConfigError, ExperimentConfig, SerialConfig};
use crate::error::RunResult;
use crate::manifest::RunManifest;
use crate::render::render_heatmap;

/// Monte-Carlo sampling tables cost `16 T N^2` bytes; refuse beyond this.
pub const MC_TABLE_BYTES_LIMIT: usize = 1 << 30;

/// Number of evenly spaced bins checked for detailed balance on each probe step.
pub const PROBE_BINS: usize = 8;

/// Everything computed for one forward/reverse configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub forward: ForwardProcess,
    pub reverse: ReversePath,
    pub reconstruction_error: f64,
    /// `KL(q_t || q_{t-1})` for `t = 1..=T`.
    pub step_divergences: Vec<f64>,
    pub inversion_complexity: f64,
    /// `stationarity_residual(K_t, q_{t-1})` for `t = 1..=T`.
    pub stationarity: Vec<f64>,
    /// `(step, residual)` of the sampled detailed-balance probes.
    pub detailed_balance_probes: Vec<(usize, f64)>,
}

impl Evaluation {
    pub fn reverse_distribution(&self) -> &Distribution {
        &self.reverse.distributions[0]
    }

    pub fn max_stationarity_residual(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_detailed_balance_residual(&self) -> f64 {
        self.detailed_balance_probes.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Steps probed for detailed balance: first, middle and last.
pub fn probe_steps(steps: usize) -> Vec<usize> {
    let mut s = vec![1, steps.div_ceil(2), steps];
    s.dedup();
    s
}

fn probe_bins(forward: &ForwardProcess, t: usize) -> Vec<BinIndex> {
    let n = forward.grid().bin_count();
    let mut bins: Vec<BinIndex> = (0..PROBE_BINS.min(n)).map(|k| BinIndex(k * n / PROBE_BINS.min(n))).collect();
    bins.push(forward.marginal(t - 1).argmax());
    bins.sort_unstable();
    bins.dedup();
    bins
}

/// Runs the forward chain and exact reverse process for `config` and computes
/// every summary metric. Writes nothing.
pub fn evaluate(config: &ExperimentConfig) -> RunResult<Evaluation> {
    config.validate()?;
    let (_, data, kernels) = config.build()?;
    let opts = config.metric_options()?;
    let forward = ForwardProcess::new(data, kernels)?;
    let sampler = ReverseSampler::new(&forward);
    let reverse = sampler.reverse_path()?;
    let reconstruction_error = kl_divergence(forward.data(), &reverse.distributions[0], &opts)?;
    let step_divergences = consecutive_divergences(&forward, &opts)?;
    let inversion_complexity = step_divergences.iter().copied().fold(0.0, f64::max);
    let stationarity = approximate_stationarity_profile(&forward)?;
    let detailed_balance_probes = probe_steps(forward.steps())
        .into_iter()
        .map(|t| {
            let kernel = forward.kernel(t)?;
            let posterior = sampler.posterior(t)?;
            let bins = probe_bins(&forward, t);
            Ok((t, sampling_detailed_balance_probe(&posterior, &kernel, forward.marginal(t - 1), &bins)?))
        })
        .collect::<sdl_core::Result<Vec<_>>>()?;
    Ok(Evaluation {
        forward,
        reverse,
        reconstruction_error,
        step_divergences,
        inversion_complexity,
        stationarity,
        detailed_balance_probes,
    })
}

fn write_distribution(dist: &Distribution, dir: &Path, stem: &str, files: &mut Vec<String>) -> RunResult<()> {
    let csv = format!("{stem}.csv");
    dist.write_csv(BufWriter::new(File::create(dir.join(&csv))?))?;
    let pgm = format!("{stem}.pgm");
    render_heatmap(dist, &dir.join(&pgm))?;
    files.push(csv);
    files.push(pgm);
    Ok(())
}

fn write_steps_csv(eval: &Evaluation, config: &ExperimentConfig, path: &Path) -> RunResult<()> {
    let opts = config.metric_options()?;
    let schedule = config.schedule.build(config.family.schedule_family())?;
    let noise = eval.forward.noise();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,param,stationarity_residual,forward_kl_step,forward_tv_to_noise,reverse_kl_to_marginal")?;
    for t in 1..=eval.forward.steps() {
        let q_t = eval.forward.marginal(t);
        writeln!(
            out,
            "{t},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            schedule.param(t),
            eval.stationarity[t - 1],
            eval.step_divergences[t - 1],
            total_variation(q_t, noise)?,
            kl_divergence(q_t, &eval.reverse.distributions[t], &opts)?,
        )?;
    }
    out.flush()?;
    Ok(())
}

fn check_mc_budget(config: &ExperimentConfig) -> RunResult<()> {
    if config.trajectories == 0 {
        return Ok(());
    }
    let n = config.grid.n_x * config.grid.n_y;
    let bytes = 16usize.saturating_mul(config.schedule.steps).saturating_mul(n).saturating_mul(n);
    if bytes > MC_TABLE_BYTES_LIMIT {
        return Err(ConfigError::new(
            "mc.trajectories",
            format!("sampling tables would need {} MiB; use a smaller grid or fewer steps", bytes >> 20),
        )
        .into());
    }
    Ok(())
}

/// Histogram of `x_0` over `count` reverse trajectories drawn from one seeded stream.
pub fn monte_carlo_reverse(forward: &ForwardProcess, count: usize, seed: u64) -> RunResult<Distribution> {
    use rand::SeedableRng;
    let sampler = ReverseSampler::new(forward).trajectory_sampler()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; forward.grid().bin_count()];
    for _ in 0..count {
        let trajectory = sampler.sample_with(&mut rng);
        counts[trajectory.states.last().expect("non-empty trajectory").0] += 1;
    }
    Ok(Distribution::from_weights(*forward.grid(), counts.into_iter().map(|c| c as f64).collect())?)
}

/// Full forward/reverse run: snapshots, per-step table and manifest in `out_dir`.
pub fn run_forward_reverse(config: &ExperimentConfig, out_dir: &Path) -> RunResult<RunManifest> {
    let started = Instant::now();
    check_mc_budget(config)?;
    let eval = evaluate(config)?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new("forward-reverse", config.to_text());

    write_steps_csv(&eval, config, &out_dir.join("steps.csv"))?;
    manifest.files.push("steps.csv".into());
    for k in config.snapshot_steps() {
        write_distribution(eval.forward.marginal(k), out_dir, &format!("marginal_t{k}"), &mut manifest.files)?;
        write_distribution(&eval.reverse.distributions[k], out_dir, &format!("reverse_t{k}"), &mut manifest.files)?;
    }

    let steps = eval.forward.steps();
    manifest.metric("reconstruction_error", eval.reconstruction_error);
    manifest.metric("inversion_complexity", eval.inversion_complexity);
    manifest.metric("max_stationarity_residual", eval.max_stationarity_residual());
    manifest.metric("max_detailed_balance_residual", eval.max_detailed_balance_residual());
    manifest.note(
        "detailed_balance_probe_steps",
        eval.detailed_balance_probes.iter().map(|p| p.0.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.metric("forward_tv_to_noise", total_variation(eval.forward.marginal(steps), eval.forward.noise())?);
    manifest.metric("reverse_tv_to_data", total_variation(eval.reverse_distribution(), eval.forward.data())?);
    manifest.note("posterior_fallback_columns", eval.reverse.fallback_columns.len());

    if config.trajectories > 0 {
        let mc = monte_carlo_reverse(&eval.forward, config.trajectories, config.seed)?;
        mc.write_csv(BufWriter::new(File::create(out_dir.join("mc_reverse.csv"))?))?;
        manifest.files.push("mc_reverse.csv".into());
        manifest.metric("mc_tv_to_exact", total_variation(&mc, eval.reverse_distribution())?);
    }

    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub steps: usize,
    pub reconstruction_error: f64,
    pub inversion_complexity: f64,
    pub max_stationarity_residual: f64,
}

/// Thread count from `SDL_THREADS`, falling back to every available core.
pub fn thread_count() -> usize {
    std::env::var("SDL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `base` once per entry of `t_values`, in parallel, each in `out_dir/T<k>`.
pub fn run_schedule_sweep(base: &ExperimentConfig, t_values: &[usize], out_dir: &Path) -> RunResult<RunManifest> {
    let started = Instant::now();
    if t_values.is_empty() {
        return Err(ConfigError::new("sweep.T_values", "no step counts given").into());
    }
    if let Some(bad) = t_values.iter().find(|&&t| t == 0) {
        return Err(ConfigError::new("sweep.T_values", format!("T = {bad} is below 1")).into());
    }
    let entries: Vec<ExperimentConfig> = t_values
        .iter()
        .map(|&t| {
            let mut c = base.with_steps(t);
            c.snapshots = base.snapshots.as_ref().map(|s| s.iter().copied().filter(|&k| k <= t).collect());
            c
        })
        .collect();
    for c in &entries {
        c.validate()?;
    }
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let results: Vec<RunResult<RunManifest>> = pool.install(|| {
        entries.par_iter().map(|c| run_forward_reverse(c, &out_dir.join(format!("T{}", c.schedule.steps)))).collect()
    });

    let mut manifest = RunManifest::new("sweep", base.to_text());
    let mut rows = Vec::with_capacity(results.len());
    for (result, &t) in results.into_iter().zip(t_values) {
        let entry = result?;
        let get = |k: &str| entry.summary_value(k).expect("pipeline always reports this metric");
        rows.push(SweepRow {
            steps: t,
            reconstruction_error: get("reconstruction_error"),
            inversion_complexity: get("inversion_complexity"),
            max_stationarity_residual: get("max_stationarity_residual"),
        });
        manifest.files.push(format!("T{t}/manifest.txt"));
    }
    let mut out = BufWriter::new(File::create(out_dir.join("sweep.csv"))?);
    writeln!(out, "T,reconstruction_error,inversion_complexity,max_stationarity_residual")?;
    for r in &rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            r.steps, r.reconstruction_error, r.inversion_complexity, r.max_stationarity_residual
        )?;
        manifest.metric(&format!("T{}.reconstruction_error", r.steps), r.reconstruction_error);
        manifest.metric(&format!("T{}.inversion_complexity", r.steps), r.inversion_complexity);
        manifest.metric(&format!("T{}.max_stationarity_residual", r.steps), r.max_stationarity_residual);
    }
    out.flush()?;
    drop(out);
    manifest.files.insert(0, "sweep.csv".into());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Reads `sweep.csv` back into rows.
pub fn read_sweep_csv(path: &Path) -> RunResult<Vec<SweepRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            let bad = |reason: &str| sdl_core::Error::Csv { line: i + 2, reason: reason.into() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 columns").into());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(SweepRow {
                steps: f[0].parse().map_err(|_| bad("bad T"))?,
                reconstruction_error: num(f[1])?,
                inversion_complexity: num(f[2])?,
                max_stationarity_residual: num(f[3])?,
            })
        })
        .collect()
}

/// Runs a serial-reproduction chain and writes its trace and empirical distribution.
pub fn run_serial_demo(config: &SerialConfig, out_dir: &Path) -> RunResult<RunManifest> {
    let started = Instant::now();
    config.validate()?;
    let chain_config = config.build()?;
    let ergodic = chain_config.check_ergodic();
    let chain = SerialChain::new(&chain_config)?;
    let trace = chain.run();
    drop(chain);
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new("serial", config.to_text());

    let mut out = BufWriter::new(File::create(out_dir.join("trace.csv"))?);
    trace.write_csv(&mut out, true)?;
    out.flush()?;
    drop(out);
    manifest.files.push("trace.csv".into());

    let empirical = empirical_distribution(&trace, config.burn_in)?;
    write_distribution(&empirical, out_dir, "empirical", &mut manifest.files)?;
    write_distribution(&chain_config.prior, out_dir, "prior", &mut manifest.files)?;
    manifest.metric("tv_to_prior", total_variation(&empirical, &chain_config.prior)?);
    manifest.note("ergodic", ergodic.is_ok());
    manifest.note("post_burn_in_states", trace.states.len() - config.burn_in);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FamilySpec, GridParams, ScheduleParams};

    fn small(family: FamilySpec, steps: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_family(family);
        c.grid = GridParams::square(9);
        c.schedule.steps = steps;
        c
    }

    #[test]
    fn probe_steps_are_first_middle_last() {
        assert_eq!(probe_steps(40), vec![1, 20, 40]);
        assert_eq!(probe_steps(3), vec![1, 2, 3]);
        assert_eq!(probe_steps(2), vec![1, 2]);
        assert_eq!(probe_steps(1), vec![1]);
    }

    #[test]
    fn evaluation_is_consistent() {
        let eval = evaluate(&small(FamilySpec::Gaussian, 6)).unwrap();
        assert_eq!(eval.stationarity.len(), 6);
        assert_eq!(eval.step_divergences.len(), 6);
        assert_eq!(eval.reverse.distributions.len(), 7);
        assert!(eval.max_detailed_balance_residual() < 1e-12);
        assert!(eval.reconstruction_error >= 0.0);
        let max = eval.step_divergences.iter().copied().fold(0.0, f64::max);
        assert_eq!(eval.inversion_complexity, max);
    }

    #[test]
    fn full_fade_is_exact() {
        let mut c = small(FamilySpec::Fade { target: crate::config::DistributionSpec::Uniform }, 1);
        c.schedule = ScheduleParams::new(0.01, 0.99, 1);
        assert!(evaluate(&c).unwrap().reconstruction_error < 1e-10);
    }

    #[test]
    fn empty_snapshot_list_writes_only_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(FamilySpec::Gaussian, 4);
        c.snapshots = Some(vec![]);
        let m = run_forward_reverse(&c, dir.path()).unwrap();
        assert_eq!(m.files, vec!["steps.csv".to_string()]);
        let mut names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, vec!["manifest.txt", "steps.csv"]);
    }

    #[test]
    fn mc_budget_is_enforced() {
        let c = ExperimentConfig { trajectories: 10, ..ExperimentConfig::default() };
        let err = run_forward_reverse(&c, Path::new("/nonexistent")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sweep_rejects_zero_steps() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(FamilySpec::Gaussian, 4);
        assert_eq!(run_schedule_sweep(&c, &[2, 0], dir.path()).unwrap_err().exit_code(), 1);
        assert_eq!(run_schedule_sweep(&c, &[], dir.path()).unwrap_err().exit_code(), 1);
    }
}
