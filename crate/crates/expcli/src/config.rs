//! Flat `key = value` experiment configs with dotted section prefixes.
//!
//! ```text
//! # comments start with '#'
//! grid.n_x = 41
//! schedule.T = 40
//! family.name = bimodal
//! family.offset = 0.07
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing a
//! serialized config gives back bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sdl_core::{
    gaussian_mixture_distribution, linear_schedule, swiss_roll_distribution, BinIndex, Distribution, GridSpec,
    MetricOptions, MixtureComponent, NoiseFamily, Schedule, ScheduleFamily, StepKernels, SwissRoll, TransitionKernel,
};

/// A config problem, reported against the dotted field path that caused it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl ToString) -> Self {
        Self { field: field.into(), reason: reason.to_string() }
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Parsed `key = value` lines. Keys are taken as they are read, and any key
/// left over at the end is reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(format!("line {}", n + 1), "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::new(format!("line {}", n + 1), format!("bad key `{key}`")));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::new(key, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> ConfigResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key).map(|v| v.parse::<T>().map_err(|e| ConfigError::new(key, format!("`{v}`: {e}")))).transpose()
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> ConfigResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    pub fn finish(self) -> ConfigResult<()> {
        match self.entries.into_keys().next() {
            Some(key) => Err(ConfigError::new(key, "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> ConfigResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| ConfigError::new(key, format!("`{s}`: {e}"))))
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// `x,y,sigma,weight; x,y,sigma,weight; ...`
fn parse_components(key: &str, value: &str) -> ConfigResult<Vec<MixtureComponent>> {
    let components = value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|part| match parse_list::<f64>(key, part)?.as_slice() {
            &[x, y, sigma, weight] => Ok(MixtureComponent::new((x, y), sigma, weight)),
            other => {
                Err(ConfigError::new(key, format!("component needs x,y,sigma,weight; got {} numbers", other.len())))
            }
        })
        .collect::<ConfigResult<Vec<_>>>()?;
    if components.is_empty() {
        return Err(ConfigError::new(key, "at least one component is required"));
    }
    Ok(components)
}

fn format_components(components: &[MixtureComponent]) -> String {
    components
        .iter()
        .map(|c| format!("{},{},{},{}", c.center.0, c.center.1, c.sigma, c.weight))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Three equal bumps used as the default fade target.
pub fn default_target_mixture() -> Vec<MixtureComponent> {
    vec![
        MixtureComponent::new((-0.25, -0.25), 0.1, 1.0),
        MixtureComponent::new((0.25, 0.25), 0.1, 1.0),
        MixtureComponent::new((0.25, -0.25), 0.1, 1.0),
    ]
}

/// Two unequal bumps used as the default serial-reproduction prior.
pub fn default_two_blob() -> Vec<MixtureComponent> {
    vec![MixtureComponent::new((-0.25, -0.2), 0.1, 1.0), MixtureComponent::new((0.2, 0.25), 0.12, 0.7)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub n_x: usize,
    pub n_y: usize,
    pub bounds: [f64; 4],
    pub wrapped: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { n_x: 41, n_y: 41, bounds: [-0.5, 0.5, -0.5, 0.5], wrapped: true }
    }
}

impl GridParams {
    pub fn square(n: usize) -> Self {
        Self { n_x: n, n_y: n, ..Self::default() }
    }

    fn read(kv: &mut KeyValues, d: Self) -> ConfigResult<Self> {
        let bounds = match kv.take("grid.bounds") {
            None => d.bounds,
            Some(v) => parse_list::<f64>("grid.bounds", &v)?
                .try_into()
                .map_err(|_| ConfigError::new("grid.bounds", "expected x_min,x_max,y_min,y_max"))?,
        };
        Ok(Self {
            n_x: kv.take_or("grid.n_x", d.n_x)?,
            n_y: kv.take_or("grid.n_y", d.n_y)?,
            bounds,
            wrapped: kv.take_or("grid.wrapped", d.wrapped)?,
        })
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "grid.n_x = {}", self.n_x);
        let _ = writeln!(out, "grid.n_y = {}", self.n_y);
        let _ = writeln!(out, "grid.bounds = {}", join(&self.bounds));
        let _ = writeln!(out, "grid.wrapped = {}", self.wrapped);
    }

    pub fn build(&self) -> ConfigResult<GridSpec> {
        GridSpec::new(self.n_x, self.n_y, self.bounds, self.wrapped).map_err(|e| ConfigError::new("grid", e))
    }
}

/// A distribution over the grid, described declaratively.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    SwissRoll(SwissRoll),
    Mixture(Vec<MixtureComponent>),
    Uniform,
}

impl DistributionSpec {
    fn kind(&self) -> &'static str {
        match self {
            Self::SwissRoll(_) => "swiss_roll",
            Self::Mixture(_) => "mixture",
            Self::Uniform => "uniform",
        }
    }

    /// Reads `<prefix>.kind` and its parameters; anything absent comes from `default`.
    fn read(kv: &mut KeyValues, prefix: &str, default: Self) -> ConfigResult<Self> {
        let kind_key = format!("{prefix}.kind");
        let kind = kv.take(&kind_key).unwrap_or_else(|| default.kind().to_string());
        match kind.as_str() {
            "swiss_roll" => {
                let d = SwissRoll::default();
                Ok(Self::SwissRoll(SwissRoll {
                    turns: kv.take_or(&format!("{prefix}.turns"), d.turns)?,
                    inner_radius: kv.take_or(&format!("{prefix}.inner_radius"), d.inner_radius)?,
                    outer_radius: kv.take_or(&format!("{prefix}.outer_radius"), d.outer_radius)?,
                    thickness: kv.take_or(&format!("{prefix}.thickness"), d.thickness)?,
                }))
            }
            "mixture" => {
                let key = format!("{prefix}.components");
                match (kv.take(&key), default) {
                    (Some(value), _) => Ok(Self::Mixture(parse_components(&key, &value)?)),
                    (None, Self::Mixture(c)) => Ok(Self::Mixture(c)),
                    (None, _) => Err(ConfigError::new(&key, "required for a mixture")),
                }
            }
            "uniform" => Ok(Self::Uniform),
            other => Err(ConfigError::new(kind_key, format!("unknown kind `{other}` (swiss_roll, mixture, uniform)"))),
        }
    }

    fn write(&self, out: &mut String, prefix: &str) {
        match self {
            Self::SwissRoll(s) => {
                let _ = writeln!(out, "{prefix}.kind = swiss_roll");
                let _ = writeln!(out, "{prefix}.turns = {}", s.turns);
                let _ = writeln!(out, "{prefix}.inner_radius = {}", s.inner_radius);
                let _ = writeln!(out, "{prefix}.outer_radius = {}", s.outer_radius);
                let _ = writeln!(out, "{prefix}.thickness = {}", s.thickness);
            }
            Self::Mixture(c) => {
                let _ = writeln!(out, "{prefix}.kind = mixture");
                let _ = writeln!(out, "{prefix}.components = {}", format_components(c));
            }
            Self::Uniform => {
                let _ = writeln!(out, "{prefix}.kind = uniform");
            }
        }
    }

    pub fn build(&self, grid: &GridSpec, field: &str) -> ConfigResult<Distribution> {
        match self {
            Self::SwissRoll(s) => swiss_roll_distribution(grid, s),
            Self::Mixture(c) => gaussian_mixture_distribution(grid, c),
            Self::Uniform => Ok(Distribution::uniform(*grid)),
        }
        .map_err(|e| ConfigError::new(field, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Gaussian,
    Bimodal { offset: f64 },
    Fade { target: DistributionSpec },
}

impl FamilySpec {
    pub fn schedule_family(&self) -> ScheduleFamily {
        match self {
            Self::Gaussian => ScheduleFamily::Gaussian,
            Self::Bimodal { .. } => ScheduleFamily::Bimodal,
            Self::Fade { .. } => ScheduleFamily::Fade,
        }
    }

    pub fn fade_to_mixture() -> Self {
        Self::Fade { target: DistributionSpec::Mixture(default_target_mixture()) }
    }

    fn read(kv: &mut KeyValues) -> ConfigResult<Self> {
        let name: ScheduleFamily = kv.take_parsed("family.name")?.unwrap_or(ScheduleFamily::Gaussian);
        Ok(match name {
            ScheduleFamily::Gaussian => Self::Gaussian,
            ScheduleFamily::Bimodal => Self::Bimodal { offset: kv.take_or("family.offset", 0.07)? },
            ScheduleFamily::Fade => {
                Self::Fade { target: DistributionSpec::read(kv, "family.target", DistributionSpec::Uniform)? }
            }
        })
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "family.name = {}", self.schedule_family().name());
        match self {
            Self::Gaussian => {}
            Self::Bimodal { offset } => {
                let _ = writeln!(out, "family.offset = {offset}");
            }
            Self::Fade { target } => target.write(out, "family.target"),
        }
    }

    pub fn build(&self, grid: &GridSpec) -> ConfigResult<NoiseFamily> {
        Ok(match self {
            Self::Gaussian => NoiseFamily::Gaussian,
            Self::Bimodal { offset } => {
                if !(*offset >= 0.0) || !offset.is_finite() {
                    return Err(ConfigError::new("family.offset", "must be a finite value >= 0"));
                }
                NoiseFamily::Bimodal { offset: *offset }
            }
            Self::Fade { target } => NoiseFamily::Fade { target: target.build(grid, "family.target")? },
        })
    }

    /// A short label for file names and tables.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Bimodal { .. } => "bimodal",
            Self::Fade { target: DistributionSpec::Uniform } => "fade_uniform",
            Self::Fade { .. } => "fade_mixture",
        }
    }
}

/// `param_t = a + b * t / T` for `t = 1..=T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
}

impl ScheduleParams {
    pub fn new(a: f64, b: f64, steps: usize) -> Self {
        Self { a, b, steps }
    }

    pub fn default_for(family: ScheduleFamily) -> Self {
        match family {
            ScheduleFamily::Gaussian | ScheduleFamily::Bimodal => Self::new(0.03, 0.04, 40),
            ScheduleFamily::Fade => Self::new(0.01, 0.99, 40),
        }
    }

    pub fn build(&self, family: ScheduleFamily) -> ConfigResult<Schedule> {
        linear_schedule(family, self.a, self.b, self.steps).map_err(|e| ConfigError::new("schedule", e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridParams,
    pub data: DistributionSpec,
    pub family: FamilySpec,
    pub schedule: ScheduleParams,
    /// Steps at which marginals and reverse distributions are dumped. `None`
    /// picks five evenly spaced steps including 0 and T.
    pub snapshots: Option<Vec<usize>>,
    pub epsilon_floor: f64,
    pub seed: u64,
    /// Monte-Carlo reverse trajectories to sample; 0 disables sampling.
    pub trajectories: usize,
    /// Step counts visited by the `sweep` command.
    pub sweep_steps: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_family(FamilySpec::Gaussian)
    }
}

impl ExperimentConfig {
    pub fn for_family(family: FamilySpec) -> Self {
        Self {
            grid: GridParams::default(),
            data: DistributionSpec::SwissRoll(SwissRoll::default()),
            schedule: ScheduleParams::default_for(family.schedule_family()),
            family,
            snapshots: None,
            epsilon_floor: 1e-12,
            seed: 0,
            trajectories: 0,
            sweep_steps: vec![2, 5, 10, 20, 40, 80],
            output_dir: PathBuf::from("out"),
        }
    }

    /// The schedule sweep's base: Gaussian noise with `σ_t = 0.01 + 0.04 t/T`.
    pub fn sweep_default() -> Self {
        Self { schedule: ScheduleParams::new(0.01, 0.04, 40), ..Self::default() }
    }

    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut kv = KeyValues::parse(text)?;
        let grid = GridParams::read(&mut kv, GridParams::default())?;
        let data = DistributionSpec::read(&mut kv, "data", DistributionSpec::SwissRoll(SwissRoll::default()))?;
        let family = FamilySpec::read(&mut kv)?;
        let d = ScheduleParams::default_for(family.schedule_family());
        let schedule = ScheduleParams {
            a: kv.take_or("schedule.a", d.a)?,
            b: kv.take_or("schedule.b", d.b)?,
            steps: kv.take_or("schedule.T", d.steps)?,
        };
        let snapshots = kv.take("snapshots").map(|v| parse_list("snapshots", &v)).transpose()?;
        let sweep_steps = match kv.take("sweep.T_values") {
            Some(v) => parse_list("sweep.T_values", &v)?,
            None => Self::default().sweep_steps,
        };
        let config = Self {
            grid,
            data,
            family,
            schedule,
            snapshots,
            epsilon_floor: kv.take_or("metrics.epsilon_floor", 1e-12)?,
            seed: kv.take_or("seed", 0)?,
            trajectories: kv.take_or("mc.trajectories", 0)?,
            sweep_steps,
            output_dir: kv.take("output_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
        };
        kv.finish()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.grid.write(&mut out);
        self.data.write(&mut out, "data");
        self.family.write(&mut out);
        let _ = writeln!(out, "schedule.a = {}", self.schedule.a);
        let _ = writeln!(out, "schedule.b = {}", self.schedule.b);
        let _ = writeln!(out, "schedule.T = {}", self.schedule.steps);
        if let Some(s) = &self.snapshots {
            let _ = writeln!(out, "snapshots = {}", join(s));
        }
        let _ = writeln!(out, "metrics.epsilon_floor = {}", self.epsilon_floor);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "mc.trajectories = {}", self.trajectories);
        let _ = writeln!(out, "sweep.T_values = {}", join(&self.sweep_steps));
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        out
    }

    /// Checks everything that can be checked without building the grid-sized objects.
    pub fn validate(&self) -> ConfigResult<()> {
        self.grid.build()?;
        self.schedule.build(self.family.schedule_family())?;
        for &t in self.snapshot_steps().iter() {
            if t > self.schedule.steps {
                return Err(ConfigError::new("snapshots", format!("step {t} is past T = {}", self.schedule.steps)));
            }
        }
        if self.sweep_steps.contains(&0) {
            return Err(ConfigError::new("sweep.T_values", "every T must be at least 1"));
        }
        MetricOptions::new(self.epsilon_floor).map_err(|e| ConfigError::new("metrics.epsilon_floor", e))?;
        Ok(())
    }

    pub fn snapshot_steps(&self) -> Vec<usize> {
        match &self.snapshots {
            Some(s) => s.clone(),
            None => default_snapshots(self.schedule.steps),
        }
    }

    pub fn metric_options(&self) -> ConfigResult<MetricOptions> {
        MetricOptions::new(self.epsilon_floor).map_err(|e| ConfigError::new("metrics.epsilon_floor", e))
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { schedule: ScheduleParams { steps, ..self.schedule }, ..self.clone() }
    }

    /// Grid, data distribution and step kernels ready for a forward run.
    pub fn build(&self) -> ConfigResult<(GridSpec, Distribution, StepKernels)> {
        let grid = self.grid.build()?;
        let data = self.data.build(&grid, "data")?;
        let family = self.family.build(&grid)?;
        let schedule = self.schedule.build(self.family.schedule_family())?;
        let kernels = StepKernels::scheduled(grid, family, schedule).map_err(|e| ConfigError::new("family", e))?;
        Ok((grid, data, kernels))
    }
}

/// Five evenly spaced steps from 0 to `steps`, deduplicated for short runs.
pub fn default_snapshots(steps: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..5).map(|k| (k * steps + 2) / 4).collect();
    s.dedup();
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodSpec {
    Identity,
    Gaussian { sigma: f64 },
    Bimodal { offset: f64, sigma: f64 },
    Fade { p: f64, target: DistributionSpec },
}

impl LikelihoodSpec {
    fn read(kv: &mut KeyValues) -> ConfigResult<Self> {
        let name = kv.take("likelihood.name").unwrap_or_else(|| "gaussian".into());
        Ok(match name.as_str() {
            "identity" => Self::Identity,
            "gaussian" => Self::Gaussian { sigma: kv.take_or("likelihood.sigma", 0.1)? },
            "bimodal" => Self::Bimodal {
                offset: kv.take_or("likelihood.offset", 0.07)?,
                sigma: kv.take_or("likelihood.sigma", 0.1)?,
            },
            "fade" => Self::Fade {
                p: kv.take_or("likelihood.p", 0.5)?,
                target: DistributionSpec::read(kv, "likelihood.target", DistributionSpec::Uniform)?,
            },
            other => {
                return Err(ConfigError::new(
                    "likelihood.name",
                    format!("unknown likelihood `{other}` (identity, gaussian, bimodal, fade)"),
                ))
            }
        })
    }

    fn write(&self, out: &mut String) {
        match self {
            Self::Identity => {
                let _ = writeln!(out, "likelihood.name = identity");
            }
            Self::Gaussian { sigma } => {
                let _ = writeln!(out, "likelihood.name = gaussian");
                let _ = writeln!(out, "likelihood.sigma = {sigma}");
            }
            Self::Bimodal { offset, sigma } => {
                let _ = writeln!(out, "likelihood.name = bimodal");
                let _ = writeln!(out, "likelihood.offset = {offset}");
                let _ = writeln!(out, "likelihood.sigma = {sigma}");
            }
            Self::Fade { p, target } => {
                let _ = writeln!(out, "likelihood.name = fade");
                let _ = writeln!(out, "likelihood.p = {p}");
                target.write(out, "likelihood.target");
            }
        }
    }

    pub fn build(&self, grid: &GridSpec) -> ConfigResult<TransitionKernel> {
        let field = "likelihood";
        match self {
            Self::Identity => Ok(TransitionKernel::identity(*grid)),
            Self::Gaussian { sigma } => sdl_core::gaussian_kernel(grid, *sigma).map_err(|e| ConfigError::new(field, e)),
            Self::Bimodal { offset, sigma } => {
                sdl_core::bimodal_kernel(grid, *offset, *sigma).map_err(|e| ConfigError::new(field, e))
            }
            Self::Fade { p, target } => {
                let target = target.build(grid, "likelihood.target")?;
                sdl_core::fade_kernel(grid, *p, &target).map_err(|e| ConfigError::new(field, e))
            }
        }
    }
}

/// Where the chain starts: `uniform` or `ix,iy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSpec {
    Uniform,
    Bin(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialConfig {
    pub grid: GridParams,
    pub prior: DistributionSpec,
    pub likelihood: LikelihoodSpec,
    pub steps: usize,
    pub burn_in: usize,
    pub start: StartSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for SerialConfig {
    fn default() -> Self {
        Self {
            grid: GridParams::square(9),
            prior: DistributionSpec::Mixture(default_two_blob()),
            likelihood: LikelihoodSpec::Gaussian { sigma: 0.1 },
            steps: 1_000_000,
            burn_in: 1_000,
            start: StartSpec::Uniform,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl SerialConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = Self::default();
        let grid = GridParams::read(&mut kv, d.grid)?;
        let prior = DistributionSpec::read(&mut kv, "prior", d.prior)?;
        let start = match kv.take("chain.start") {
            None => StartSpec::Uniform,
            Some(v) if v == "uniform" => StartSpec::Uniform,
            Some(v) => match parse_list::<usize>("chain.start", &v)?.as_slice() {
                &[ix, iy] => StartSpec::Bin(ix, iy),
                _ => return Err(ConfigError::new("chain.start", "expected `uniform` or `ix,iy`")),
            },
        };
        let config = Self {
            grid,
            prior,
            likelihood: LikelihoodSpec::read(&mut kv)?,
            steps: kv.take_or("chain.steps", d.steps)?,
            burn_in: kv.take_or("chain.burn_in", d.burn_in)?,
            start,
            seed: kv.take_or("seed", 0)?,
            output_dir: kv.take("output_dir").map(PathBuf::from).unwrap_or(d.output_dir),
        };
        kv.finish()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.grid.write(&mut out);
        self.prior.write(&mut out, "prior");
        self.likelihood.write(&mut out);
        let _ = writeln!(out, "chain.steps = {}", self.steps);
        let _ = writeln!(out, "chain.burn_in = {}", self.burn_in);
        let _ = match self.start {
            StartSpec::Uniform => writeln!(out, "chain.start = uniform"),
            StartSpec::Bin(ix, iy) => writeln!(out, "chain.start = {ix},{iy}"),
        };
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        out
    }

    pub fn validate(&self) -> ConfigResult<()> {
        let grid = self.grid.build()?;
        if self.steps <= self.burn_in {
            return Err(ConfigError::new("chain.burn_in", format!("must be below chain.steps = {}", self.steps)));
        }
        if let StartSpec::Bin(ix, iy) = self.start {
            grid.bin(ix, iy).map_err(|e| ConfigError::new("chain.start", e))?;
        }
        Ok(())
    }

    pub fn build(&self) -> ConfigResult<sdl_core::SerialChainConfig> {
        let grid = self.grid.build()?;
        let prior = self.prior.build(&grid, "prior")?;
        let likelihood = self.likelihood.build(&grid)?;
        let start = match self.start {
            StartSpec::Uniform => sdl_core::StartState::Uniform,
            StartSpec::Bin(ix, iy) => {
                sdl_core::StartState::Fixed(grid.bin(ix, iy).map_err(|e| ConfigError::new("chain.start", e))?)
            }
        };
        sdl_core::SerialChainConfig::new(prior, likelihood, self.steps, self.burn_in, self.seed)
            .and_then(|c| c.with_start(start))
            .map_err(|e| ConfigError::new("chain", e))
    }

    pub fn start_bin(&self) -> Option<BinIndex> {
        match self.start {
            StartSpec::Uniform => None,
            StartSpec::Bin(ix, iy) => self.grid.build().ok()?.bin(ix, iy).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for family in [
            FamilySpec::Gaussian,
            FamilySpec::Bimodal { offset: 0.07 },
            FamilySpec::Fade { target: DistributionSpec::Uniform },
            FamilySpec::fade_to_mixture(),
        ] {
            let c = ExperimentConfig::for_family(family);
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
        let s = SerialConfig::default();
        assert_eq!(SerialConfig::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn awkward_floats_round_trip_bit_exactly() {
        let mut c = ExperimentConfig::default();
        c.schedule.a = 0.1 + 0.2;
        c.schedule.b = 1.0 / 3.0;
        c.epsilon_floor = 3.3e-13;
        c.snapshots = Some(vec![]);
        c.data = DistributionSpec::Mixture(vec![MixtureComponent::new((-0.123456789012345, 1e-5), 0.07, 2.5)]);
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.schedule.a.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn family_defaults_follow_the_family() {
        let c = ExperimentConfig::parse("family.name = fade\n").unwrap();
        assert_eq!(c.schedule, ScheduleParams::new(0.01, 0.99, 40));
        assert_eq!(c.family, FamilySpec::Fade { target: DistributionSpec::Uniform });
        let c = ExperimentConfig::parse("family.name = bimodal\nschedule.T = 7").unwrap();
        assert_eq!(c.family, FamilySpec::Bimodal { offset: 0.07 });
        assert_eq!(c.schedule.steps, 7);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("schedule.T = forty", "schedule.T"),
            ("grid.n_x = 0", "grid"),
            ("schedule.T = 4\nsnapshots = 0,5", "snapshots"),
            ("family.name = laplace", "family.name"),
            ("colour = red", "colour"),
            ("data.kind = mixture", "data.components"),
            ("data.kind = mixture\ndata.components = 0,0,0.1", "data.components"),
            ("grid.bounds = 0,1,0", "grid.bounds"),
            ("seed = 1\nseed = 2", "seed"),
            ("metrics.epsilon_floor = 0.5", "metrics.epsilon_floor"),
            ("family.name = fade\nschedule.a = 0.5\nschedule.b = 0.6", "schedule"),
            ("sweep.T_values = 2,0", "sweep.T_values"),
            ("just words", "line 1"),
        ];
        for (text, field) in cases {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.field, field, "{text:?} gave {err}");
        }
        let err = SerialConfig::parse("chain.steps = 10\nchain.burn_in = 10").unwrap_err();
        assert_eq!(err.field, "chain.burn_in");
        let err = SerialConfig::parse("chain.start = 9,0").unwrap_err();
        assert_eq!(err.field, "chain.start");
    }

    #[test]
    fn snapshot_defaults() {
        assert_eq!(default_snapshots(40), vec![0, 10, 20, 30, 40]);
        assert_eq!(default_snapshots(10), vec![0, 3, 5, 8, 10]);
        assert_eq!(default_snapshots(1), vec![0, 1]);
        assert_eq!(default_snapshots(2), vec![0, 1, 2]);
        let c = ExperimentConfig::parse("snapshots =").unwrap();
        assert_eq!(c.snapshot_steps(), Vec::<usize>::new());
    }

    #[test]
    fn serial_config_parses() {
        let s = SerialConfig::parse(
            "grid.n_x = 5\ngrid.n_y = 5\nprior.kind = uniform\nlikelihood.name = fade\nlikelihood.p = 0.3\n\
             chain.steps = 100\nchain.burn_in = 0\nchain.start = 2,3\nseed = 4\n",
        )
        .unwrap();
        assert_eq!(s.grid, GridParams::square(5));
        assert_eq!(s.likelihood, LikelihoodSpec::Fade { p: 0.3, target: DistributionSpec::Uniform });
        assert_eq!(s.start_bin(), Some(BinIndex(17)));
        assert_eq!(SerialConfig::parse(&s.to_text()).unwrap(), s);
        s.build().unwrap();
    }
}
