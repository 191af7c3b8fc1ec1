//! Recording of large-grid regression references.
//!
//! Before any 41x41 number is pinned, the pipeline is checked against plain
//! loop-by-loop reimplementations on small grids: direct kernel evaluation,
//! Bayes' rule written out per entry, and (on 3x3) explicit enumeration of
//! every reverse path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sdl_core::{Distribution, GridSpec};

use crate::config::{DistributionSpec, ExperimentConfig, FamilySpec, GridParams};
use crate::error::{RunError, RunResult};
use crate::experiment::evaluate;
use crate::manifest::read_key_values;

pub const REFERENCE_FILE: &str = "references.txt";

/// Largest allowed gap between the pipeline and a brute-force oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// References above this many nats are rejected as implausible.
pub const REFERENCE_SANITY_BOUND: f64 = 0.1;

/// The noise families whose reconstruction errors are pinned.
pub fn reference_families() -> Vec<FamilySpec> {
    vec![
        FamilySpec::Gaussian,
        FamilySpec::Bimodal { offset: 0.07 },
        FamilySpec::Fade { target: DistributionSpec::Uniform },
        FamilySpec::fade_to_mixture(),
    ]
}

type Dense = Vec<Vec<f64>>;

fn wrapped_bump(d: f64, period: f64, sigma: f64, wrapped: bool) -> f64 {
    let images: &[f64] = if wrapped { &[-2.0, -1.0, 0.0, 1.0, 2.0] } else { &[0.0] };
    images.iter().map(|k| (-(d + k * period).powi(2) / (2.0 * sigma * sigma)).exp()).sum()
}

/// `k[to][from]`, each column normalized.
fn oracle_gaussian(grid: &GridSpec, sigma: f64, shift: (f64, f64)) -> Dense {
    let n = grid.bin_count();
    let mut k = vec![vec![0.0; n]; n];
    for from in grid.bins() {
        let (fx, fy) = grid.bin_center(from).unwrap();
        let mut total = 0.0;
        for to in grid.bins() {
            let (tx, ty) = grid.bin_center(to).unwrap();
            let w = wrapped_bump(tx - fx - shift.0, grid.period_x(), sigma, grid.wrapped())
                * wrapped_bump(ty - fy - shift.1, grid.period_y(), sigma, grid.wrapped());
            k[to.0][from.0] = w;
            total += w;
        }
        for row in k.iter_mut() {
            row[from.0] /= total;
        }
    }
    k
}

fn oracle_kernel(family: &FamilySpec, grid: &GridSpec, target: Option<&Distribution>, param: f64) -> Dense {
    let n = grid.bin_count();
    match family {
        FamilySpec::Gaussian => oracle_gaussian(grid, param, (0.0, 0.0)),
        FamilySpec::Bimodal { offset } => {
            let s = offset / 2f64.sqrt();
            let plus = oracle_gaussian(grid, param, (s, s));
            let minus = oracle_gaussian(grid, param, (-s, -s));
            (0..n).map(|j| (0..n).map(|i| 0.5 * plus[j][i] + 0.5 * minus[j][i]).collect()).collect()
        }
        FamilySpec::Fade { .. } => {
            let target = target.expect("fade needs a target").mass();
            (0..n)
                .map(|j| (0..n).map(|i| (1.0 - param) * f64::from(u8::from(i == j)) + param * target[j]).collect())
                .collect()
        }
    }
}

fn matvec(k: &Dense, v: &[f64]) -> Vec<f64> {
    k.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `post[x][x_hat] = K(x_hat|x) prior(x) / Σ_y K(x_hat|y) prior(y)`.
fn oracle_posterior(k: &Dense, prior: &[f64]) -> Dense {
    let n = prior.len();
    let mut post = vec![vec![0.0; n]; n];
    for x_hat in 0..n {
        let evidence: f64 = (0..n).map(|y| k[x_hat][y] * prior[y]).sum();
        for x in 0..n {
            post[x][x_hat] = if evidence > 0.0 { k[x_hat][x] * prior[x] / evidence } else { prior[x] };
        }
    }
    post
}

/// `R(y|x) = Σ_x̂ post(y|x̂) K(x̂|x)`.
fn reverse_step_matrix(post: &Dense, k: &Dense) -> Dense {
    let n = k.len();
    (0..n).map(|y| (0..n).map(|x| (0..n).map(|xh| post[y][xh] * k[xh][x]).sum()).collect()).collect()
}

struct Oracle {
    marginals: Vec<Vec<f64>>,
    reverse_x0: Vec<f64>,
    steps: Vec<Dense>,
    noise: Vec<f64>,
}

fn oracle_run(config: &ExperimentConfig) -> RunResult<Oracle> {
    let grid = config.grid.build()?;
    let data = config.data.build(&grid, "data")?;
    let target = match &config.family {
        FamilySpec::Fade { target } => Some(target.build(&grid, "family.target")?),
        _ => None,
    };
    let schedule = config.schedule.build(config.family.schedule_family())?;
    let kernels: Vec<Dense> =
        schedule.params().iter().map(|&p| oracle_kernel(&config.family, &grid, target.as_ref(), p)).collect();
    let mut marginals = vec![data.mass().to_vec()];
    for k in &kernels {
        let next = matvec(k, marginals.last().unwrap());
        marginals.push(next);
    }
    let noise = match &target {
        Some(t) => t.mass().to_vec(),
        None => vec![1.0 / grid.bin_count() as f64; grid.bin_count()],
    };
    let steps: Vec<Dense> =
        kernels.iter().enumerate().map(|(i, k)| reverse_step_matrix(&oracle_posterior(k, &marginals[i]), k)).collect();
    let mut d = noise.clone();
    for r in steps.iter().rev() {
        d = matvec(r, &d);
    }
    Ok(Oracle { marginals, reverse_x0: d, steps, noise })
}

/// `p_s(x_0)` by summing the probability of every reverse path `x_T -> ... -> x_0`.
fn enumerate_paths(oracle: &Oracle) -> Vec<f64> {
    let n = oracle.noise.len();
    let mut out = vec![0.0; n];
    fn walk(steps: &[Dense], t: usize, x: usize, weight: f64, out: &mut [f64]) {
        if t == 0 {
            out[x] += weight;
            return;
        }
        for y in 0..out.len() {
            let w = weight * steps[t - 1][y][x];
            if w != 0.0 {
                walk(steps, t - 1, y, w, out);
            }
        }
    }
    for x_t in 0..n {
        walk(&oracle.steps, oracle.steps.len(), x_t, oracle.noise[x_t], &mut out);
    }
    out
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCase {
    pub label: String,
    pub grid: usize,
    pub steps: usize,
    pub max_deviation: f64,
}

/// Pipeline vs brute force for every reference family on 3x3 (with path
/// enumeration) and 12x12 grids.
pub fn validate_small_grids() -> RunResult<Vec<ValidationCase>> {
    let mut cases = Vec::new();
    for family in reference_families() {
        for (n, steps) in [(3, 3), (12, 4)] {
            let mut config = ExperimentConfig::for_family(family.clone());
            config.grid = GridParams::square(n);
            config.schedule.steps = steps;
            let eval = evaluate(&config)?;
            let oracle = oracle_run(&config)?;
            let mut gap = max_gap(eval.reverse_distribution().mass(), &oracle.reverse_x0);
            for (q, o) in eval.forward.marginals().iter().zip(&oracle.marginals) {
                gap = gap.max(max_gap(q.mass(), o));
            }
            if n == 3 {
                gap = gap.max(max_gap(eval.reverse_distribution().mass(), &enumerate_paths(&oracle)));
            }
            cases.push(ValidationCase { label: family.label().into(), grid: n, steps, max_deviation: gap });
        }
    }
    Ok(cases)
}

/// Pinned values for one family on the full-size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReference {
    pub label: String,
    pub reconstruction_error: f64,
    pub forward_tv_to_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub validation: Vec<ValidationCase>,
    pub families: Vec<FamilyReference>,
}

impl References {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# Regression references written by `sdl --record-reference`.\n");
        let base = ExperimentConfig::default();
        let _ = writeln!(out, "grid = {}x{}", base.grid.n_x, base.grid.n_y);
        let _ = writeln!(out, "T = {}", base.schedule.steps);
        for c in &self.validation {
            let _ =
                writeln!(out, "validation.{}.{}x{}.max_deviation = {:.6e}", c.label, c.grid, c.grid, c.max_deviation);
        }
        for f in &self.families {
            let _ = writeln!(out, "{}.reconstruction_error = {:.16e}", f.label, f.reconstruction_error);
            let _ = writeln!(out, "{}.forward_tv_to_noise = {:.16e}", f.label, f.forward_tv_to_noise);
        }
        out
    }

    pub fn reconstruction_error(&self, label: &str) -> Option<f64> {
        self.families.iter().find(|f| f.label == label).map(|f| f.reconstruction_error)
    }
}

/// Reads the pinned reconstruction errors back as `(label, value)`.
pub fn load_reference_errors(path: &Path) -> RunResult<Vec<(String, f64)>> {
    let kv = read_key_values(path)?;
    reference_families()
        .iter()
        .map(|f| {
            let key = format!("{}.reconstruction_error", f.label());
            let value = kv
                .get(&key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| RunError::Reference(format!("{} has no usable `{key}`", path.display())))?;
            Ok((f.label().to_string(), value))
        })
        .collect()
}

/// Validates on small grids, then evaluates every reference family on the
/// default 41x41, T = 40 setup. Nothing is recorded unless every oracle check
/// passes and every value is under the sanity bound.
pub fn record_references(progress: &dyn Fn(&str)) -> RunResult<References> {
    let validation = validate_small_grids()?;
    for c in &validation {
        progress(&format!(
            "oracle {} {}x{} T={}: max deviation {:.3e}",
            c.label, c.grid, c.grid, c.steps, c.max_deviation
        ));
        if !(c.max_deviation < ORACLE_TOLERANCE) {
            return Err(RunError::Reference(format!(
                "{} on {}x{} deviates from brute force by {:.3e}",
                c.label, c.grid, c.grid, c.max_deviation
            )));
        }
    }
    let mut families = Vec::new();
    for family in reference_families() {
        let eval = evaluate(&ExperimentConfig::for_family(family.clone()))?;
        let steps = eval.forward.steps();
        let tv = sdl_core::total_variation(eval.forward.marginal(steps), eval.forward.noise())?;
        progress(&format!("{}: reconstruction error {:.6e}", family.label(), eval.reconstruction_error));
        if !(eval.reconstruction_error <= REFERENCE_SANITY_BOUND) {
            return Err(RunError::Reference(format!(
                "{} reconstruction error {:.6e} exceeds the {REFERENCE_SANITY_BOUND} nat sanity bound",
                family.label(),
                eval.reconstruction_error
            )));
        }
        families.push(FamilyReference {
            label: family.label().into(),
            reconstruction_error: eval.reconstruction_error,
            forward_tv_to_noise: tv,
        });
    }
    Ok(References { validation, families })
}

pub fn write_references(refs: &References, dir: &Path) -> RunResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REFERENCE_FILE), refs.to_text())?;
    Ok(())
}
