//! Column-stochastic transition kernels over grid bins and the noise schedules
//! that parameterize them step by step.

use std::borrow::Cow;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{BinIndex, Distribution, GridSpec};
use crate::scalar::{compensated_sum, Scalar};

/// Wrap images summed per axis on either side of the primary image.
pub const WRAP_IMAGES: i32 = 2;

/// Default bin-count limit for operations that form N x N x N products.
pub const DENSE_PRODUCT_GUARD: usize = 4096;

/// Below this many bins a matrix-vector product runs on the calling thread.
const PARALLEL_MIN_BINS: usize = 512;

/// Dense `N x N` kernel. Entry `(to, from)` is the probability of moving to bin
/// `to` from bin `from`; every column sums to one. Stored row-major by `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<S = f64> {
    grid: GridSpec<S>,
    data: Vec<S>,
}

impl<S: Scalar> TransitionKernel<S> {
    /// Validates a row-major (`to`-major) matrix: entries non-negative, columns summing to one.
    pub fn from_dense(grid: GridSpec<S>, data: Vec<S>) -> Result<Self> {
        let n = grid.bin_count();
        if data.len() != n * n {
            return Err(Error::InvalidKernel(format!("expected {} entries, got {}", n * n, data.len())));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::InvalidKernel(format!("entry (to={}, from={}) is {}", k / n, k % n, data[k])));
        }
        let kernel = Self { grid, data };
        let tol = S::lit(S::NORMALIZATION_TOLERANCE);
        for (from, s) in kernel.column_sums().into_iter().enumerate() {
            if (s - S::one()).abs() > tol {
                return Err(Error::InvalidKernel(format!("column {from} sums to {s}")));
            }
        }
        Ok(kernel)
    }

    /// Builds a kernel from unnormalized non-negative weights `weight(to, from)`,
    /// normalizing each column.
    pub fn from_weights(grid: GridSpec<S>, weight: impl Fn(usize, usize) -> S) -> Result<Self> {
        let n = grid.bin_count();
        let mut data = vec![S::zero(); n * n];
        for to in 0..n {
            for from in 0..n {
                data[to * n + from] = weight(to, from);
            }
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::InvalidKernel(format!("weight (to={}, from={}) is {}", k / n, k % n, data[k])));
        }
        let sums = column_sums_of(&data, n);
        if let Some(from) = sums.iter().position(|s| *s <= S::zero()) {
            return Err(Error::InvalidKernel(format!("column {from} has no mass")));
        }
        for row in data.chunks_mut(n) {
            for (v, s) in row.iter_mut().zip(&sums) {
                *v = *v / *s;
            }
        }
        Ok(Self { grid, data })
    }

    pub(crate) fn from_raw(grid: GridSpec<S>, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), grid.bin_count() * grid.bin_count());
        Self { grid, data }
    }

    pub fn identity(grid: GridSpec<S>) -> Self {
        let n = grid.bin_count();
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = S::one();
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec<S> {
        &self.grid
    }

    pub fn bins(&self) -> usize {
        self.grid.bin_count()
    }

    /// Row-major (`to`-major) entries.
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn get(&self, to: BinIndex, from: BinIndex) -> S {
        self.data[to.0 * self.bins() + from.0]
    }

    /// Probabilities of moving into `to` from every source bin.
    pub fn row(&self, to: BinIndex) -> &[S] {
        let n = self.bins();
        &self.data[to.0 * n..(to.0 + 1) * n]
    }

    /// Next-state distribution given the current bin `from`.
    pub fn column(&self, from: BinIndex) -> Vec<S> {
        let n = self.bins();
        (0..n).map(|to| self.data[to * n + from.0]).collect()
    }

    pub fn column_sums(&self) -> Vec<S> {
        column_sums_of(&self.data, self.bins())
    }

    pub fn same_grid(&self, grid: &GridSpec<S>) -> Result<()> {
        if &self.grid == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Matrix-vector product on a raw vector, no renormalization.
    pub fn apply_raw(&self, v: &[S]) -> Vec<S> {
        let n = self.bins();
        assert_eq!(v.len(), n, "vector length must equal the bin count");
        let dot = |row: &[S]| row.iter().zip(v).fold(S::zero(), |acc, (&k, &x)| acc + k * x);
        if n >= PARALLEL_MIN_BINS {
            self.data.par_chunks(n).map(dot).collect()
        } else {
            self.data.chunks(n).map(dot).collect()
        }
    }

    /// One step of the chain: the distribution after a transition, renormalized.
    pub fn apply(&self, dist: &Distribution<S>) -> Result<Distribution<S>> {
        self.same_grid(dist.grid())?;
        Distribution::from_weights(self.grid, self.apply_raw(dist.mass()))
    }

    /// `self * rhs`: first `rhs`, then `self`. Cost N^3; refused above `guard` bins.
    pub fn compose(&self, rhs: &TransitionKernel<S>, guard: usize) -> Result<TransitionKernel<S>> {
        self.same_grid(rhs.grid())?;
        let n = self.bins();
        if n > guard {
            return Err(Error::GuardExceeded { bins: n, limit: guard });
        }
        let mut out = vec![S::zero(); n * n];
        let fill = |(j, out_row): (usize, &mut [S])| {
            for k in 0..n {
                let a = self.data[j * n + k];
                if a == S::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(&rhs.data[k * n..(k + 1) * n]) {
                    *o = *o + a * b;
                }
            }
        };
        if n >= PARALLEL_MIN_BINS {
            out.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            out.chunks_mut(n).enumerate().for_each(fill);
        }
        Ok(Self { grid: self.grid, data: out })
    }

    /// Debug dump: `from,to,prob` for every entry above 1e-15.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "from,to,prob")?;
        let n = self.bins();
        let floor = S::lit(1e-15);
        for from in 0..n {
            for to in 0..n {
                let p = self.data[to * n + from];
                if p > floor {
                    writeln!(out, "{from},{to},{p:.16e}")?;
                }
            }
        }
        Ok(())
    }
}

fn column_sums_of<S: Scalar>(data: &[S], n: usize) -> Vec<S> {
    (0..n).map(|from| compensated_sum((0..n).map(|to| data[to * n + from]))).collect()
}

/// 1D transition table along one axis, `table[from * n + to]`, each `from` row
/// normalized. The Gaussian is centered at `from + shift`.
fn axis_table<S: Scalar>(n: usize, width: S, period: S, wrapped: bool, sigma: S, shift: S) -> Vec<S> {
    let two_var = S::lit(2.0) * sigma * sigma;
    let normalize = |row: &mut [S]| {
        let total = compensated_sum(row.iter().copied());
        for v in row.iter_mut() {
            *v = *v / total;
        }
    };
    let mut table = vec![S::zero(); n * n];
    if wrapped {
        // circulant: the weight depends only on (to - from) mod n
        let exponents: Vec<Vec<S>> = (0..n)
            .map(|m| {
                let signed = if 2 * m > n { m as f64 - n as f64 } else { m as f64 };
                let d = S::lit(signed) * width - shift;
                let d = if shift == S::zero() { d.abs() } else { d };
                (-WRAP_IMAGES..=WRAP_IMAGES)
                    .map(|k| {
                        let e = d + S::lit(k as f64) * period;
                        e * e / two_var
                    })
                    .collect()
            })
            .collect();
        let floor = exponents.iter().flatten().copied().fold(S::infinity(), S::min);
        let mut base: Vec<S> =
            exponents.iter().map(|images| compensated_sum(images.iter().map(|&e| (floor - e).exp()))).collect();
        normalize(&mut base);
        for from in 0..n {
            for to in 0..n {
                table[from * n + to] = base[(to + n - from) % n];
            }
        }
    } else {
        for from in 0..n {
            let exponents: Vec<S> = (0..n)
                .map(|to| {
                    let d = S::lit(to as f64 - from as f64) * width - shift;
                    d * d / two_var
                })
                .collect();
            let floor = exponents.iter().copied().fold(S::infinity(), S::min);
            let row = &mut table[from * n..(from + 1) * n];
            for (v, &e) in row.iter_mut().zip(&exponents) {
                *v = (floor - e).exp();
            }
            normalize(row);
        }
    }
    table
}

fn separable_kernel<S: Scalar>(grid: &GridSpec<S>, tx: &[S], ty: &[S]) -> Vec<S> {
    let (nx, ny) = (grid.n_x(), grid.n_y());
    let n = grid.bin_count();
    let mut data = vec![S::zero(); n * n];
    for to in 0..n {
        let (tox, toy) = (to % nx, to / nx);
        let row = &mut data[to * n..(to + 1) * n];
        for fy in 0..ny {
            let wy = ty[fy * ny + toy];
            for fx in 0..nx {
                row[fy * nx + fx] = tx[fx * nx + tox] * wy;
            }
        }
    }
    data
}

fn check_sigma<S: Scalar>(sigma: S) -> Result<()> {
    if sigma > S::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid("sigma", format!("{sigma} is not positive")))
    }
}

/// Wrapped isotropic Gaussian noise, evaluated at bin centers and normalized per column.
pub fn gaussian_kernel<S: Scalar>(grid: &GridSpec<S>, sigma: S) -> Result<TransitionKernel<S>> {
    check_sigma(sigma)?;
    let tx = axis_table(grid.n_x(), grid.bin_width_x(), grid.period_x(), grid.wrapped(), sigma, S::zero());
    let ty = axis_table(grid.n_y(), grid.bin_width_y(), grid.period_y(), grid.wrapped(), sigma, S::zero());
    Ok(TransitionKernel::from_raw(*grid, separable_kernel(grid, &tx, &ty)))
}

/// Equal mixture of two wrapped Gaussians displaced by `±offset` along the
/// main diagonal `(1, 1)/√2`.
pub fn bimodal_kernel<S: Scalar>(grid: &GridSpec<S>, offset: S, sigma: S) -> Result<TransitionKernel<S>> {
    check_sigma(sigma)?;
    if !(offset >= S::zero()) || !offset.is_finite() {
        return Err(invalid("offset", format!("{offset} is negative")));
    }
    let shift = offset / S::lit(2.0).sqrt();
    let table = |n, w, p, s| axis_table(n, w, p, grid.wrapped(), sigma, s);
    let (nx, wx, px) = (grid.n_x(), grid.bin_width_x(), grid.period_x());
    let (ny, wy, py) = (grid.n_y(), grid.bin_width_y(), grid.period_y());
    let plus = separable_kernel(grid, &table(nx, wx, px, shift), &table(ny, wy, py, shift));
    let minus = separable_kernel(grid, &table(nx, wx, px, -shift), &table(ny, wy, py, -shift));
    let half = S::lit(0.5);
    let data = plus.into_iter().zip(minus).map(|(a, b)| half * a + half * b).collect();
    Ok(TransitionKernel::from_raw(*grid, data))
}

/// Stay put with probability `1 - p`, otherwise resample from `target`.
pub fn fade_kernel<S: Scalar>(grid: &GridSpec<S>, p: S, target: &Distribution<S>) -> Result<TransitionKernel<S>> {
    if !(p >= S::zero() && p <= S::one()) {
        return Err(invalid("p", format!("{p} is outside [0, 1]")));
    }
    if target.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.bin_count();
    let stay = S::one() - p;
    let mut data = vec![S::zero(); n * n];
    for (to, row) in data.chunks_mut(n).enumerate() {
        let jump = p * target.mass()[to];
        for v in row.iter_mut() {
            *v = jump;
        }
        row[to] = row[to] + stay;
    }
    Ok(TransitionKernel::from_raw(*grid, data))
}

/// Infinity-norm residual `max_j |(K d)_j - d_j|` of one kernel application.
pub fn stationarity_residual<S: Scalar>(kernel: &TransitionKernel<S>, dist: &Distribution<S>) -> Result<S> {
    kernel.same_grid(dist.grid())?;
    let next = kernel.apply_raw(dist.mass());
    Ok(next.iter().zip(dist.mass()).map(|(a, b)| (*a - *b).abs()).fold(S::zero(), S::max))
}

/// Which parameter a schedule carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleFamily {
    /// `σ_t`, the Gaussian standard deviation.
    Gaussian,
    /// `σ_t` of each bimodal component.
    Bimodal,
    /// `p_t`, the resampling probability.
    Fade,
}

impl ScheduleFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Bimodal => "bimodal",
            Self::Fade => "fade",
        }
    }

    fn check<S: Scalar>(self, v: S) -> std::result::Result<(), String> {
        match self {
            Self::Gaussian | Self::Bimodal if !(v > S::zero()) || !v.is_finite() => {
                Err(format!("sigma {v} is not positive"))
            }
            Self::Fade if !(v >= S::zero() && v <= S::one()) => Err(format!("probability {v} is outside [0, 1]")),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for ScheduleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bimodal" => Ok(Self::Bimodal),
            "fade" => Ok(Self::Fade),
            other => Err(invalid("family", format!("unknown noise family `{other}`"))),
        }
    }
}

/// Per-step noise parameters for steps `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<S = f64> {
    family: ScheduleFamily,
    params: Vec<S>,
}

impl<S: Scalar> Schedule<S> {
    pub fn new(family: ScheduleFamily, params: Vec<S>) -> Result<Self> {
        if params.is_empty() {
            return Err(invalid("T", "a schedule needs at least one step"));
        }
        for (i, &v) in params.iter().enumerate() {
            family.check(v).map_err(|reason| invalid("schedule", format!("step {}: {reason}", i + 1)))?;
        }
        Ok(Self { family, params })
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    pub fn steps(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    /// Parameter of step `t`, 1-based.
    pub fn param(&self, t: usize) -> S {
        self.params[t - 1]
    }
}

/// `params[t-1] = a + b * (t / T)` for `t = 1..=T`.
pub fn linear_schedule<S: Scalar>(family: ScheduleFamily, a: S, b: S, steps: usize) -> Result<Schedule<S>> {
    if steps == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    let total = S::lit(steps as f64);
    let slack = S::lit(1e-12);
    let params = (1..=steps)
        .map(|t| {
            let v = a + b * (S::lit(t as f64) / total);
            // a probability that rounds a hair past an endpoint is clamped back
            match family {
                ScheduleFamily::Fade if v > S::one() && v - S::one() <= slack => S::one(),
                ScheduleFamily::Fade if v < S::zero() && -v <= slack => S::zero(),
                _ => v,
            }
        })
        .collect();
    Schedule::new(family, params)
}

/// A noise family: builds the step kernel for a given schedule parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseFamily<S = f64> {
    Gaussian,
    Bimodal { offset: S },
    Fade { target: Distribution<S> },
}

impl<S: Scalar> NoiseFamily<S> {
    pub fn schedule_family(&self) -> ScheduleFamily {
        match self {
            Self::Gaussian => ScheduleFamily::Gaussian,
            Self::Bimodal { .. } => ScheduleFamily::Bimodal,
            Self::Fade { .. } => ScheduleFamily::Fade,
        }
    }

    pub fn kernel(&self, grid: &GridSpec<S>, param: S) -> Result<TransitionKernel<S>> {
        match self {
            Self::Gaussian => gaussian_kernel(grid, param),
            Self::Bimodal { offset } => bimodal_kernel(grid, *offset, param),
            Self::Fade { target } => fade_kernel(grid, param, target),
        }
    }

    /// The distribution every kernel of this family leaves invariant, when known
    /// in closed form: uniform for translation-invariant kernels on a wrapped
    /// grid, the target for fade.
    pub fn stationary(&self, grid: &GridSpec<S>) -> Option<Distribution<S>> {
        match self {
            Self::Gaussian | Self::Bimodal { .. } if grid.wrapped() => Some(Distribution::uniform(*grid)),
            Self::Gaussian | Self::Bimodal { .. } => None,
            Self::Fade { target } => Some(target.clone()),
        }
    }
}

/// Step kernels of a forward process, either stored or rebuilt on demand from a
/// family and schedule. Rebuilding keeps memory at O(N^2) on large grids.
#[derive(Debug, Clone)]
pub enum StepKernels<S = f64> {
    Dense(Vec<TransitionKernel<S>>),
    Scheduled { grid: GridSpec<S>, family: NoiseFamily<S>, schedule: Schedule<S> },
}

impl<S: Scalar> StepKernels<S> {
    pub fn scheduled(grid: GridSpec<S>, family: NoiseFamily<S>, schedule: Schedule<S>) -> Result<Self> {
        if family.schedule_family() != schedule.family() {
            return Err(invalid(
                "schedule",
                format!(
                    "schedule is for `{}` but the family is `{}`",
                    schedule.family().name(),
                    family.schedule_family().name()
                ),
            ));
        }
        if let NoiseFamily::Fade { target } = &family {
            if target.grid() != &grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self::Scheduled { grid, family, schedule })
    }

    pub fn steps(&self) -> usize {
        match self {
            Self::Dense(k) => k.len(),
            Self::Scheduled { schedule, .. } => schedule.steps(),
        }
    }

    /// Kernel of step `t`, 1-based.
    pub fn kernel(&self, t: usize) -> Result<Cow<'_, TransitionKernel<S>>> {
        if t == 0 || t > self.steps() {
            return Err(invalid("t", format!("step {t} outside 1..={}", self.steps())));
        }
        match self {
            Self::Dense(k) => Ok(Cow::Borrowed(&k[t - 1])),
            Self::Scheduled { grid, family, schedule } => family.kernel(grid, schedule.param(t)).map(Cow::Owned),
        }
    }

    pub fn stationary(&self) -> Option<Distribution<S>> {
        match self {
            Self::Dense(_) => None,
            Self::Scheduled { grid, family, .. } => family.stationary(grid),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_mixture_distribution, MixtureComponent};

    fn unit(n: usize) -> GridSpec {
        GridSpec::<f64>::unit_square(n).unwrap()
    }

    fn assert_stochastic(k: &TransitionKernel) {
        assert!(k.as_slice().iter().all(|&v| v >= 0.0));
        for s in k.column_sums() {
            assert!((s - 1.0).abs() < 1e-9, "column sum {s}");
        }
    }

    #[test]
    fn gaussian_schedule_start_is_valid() {
        let g = unit(41);
        let k = gaussian_kernel(&g, 0.03).unwrap();
        assert_stochastic(&k);
        assert!(gaussian_kernel(&g, 0.0).is_err());
        assert!(gaussian_kernel(&g, -1.0).is_err());
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let g = unit(9);
        let k = gaussian_kernel(&g, 1e-6).unwrap();
        let id = TransitionKernel::identity(g);
        for from in g.bins() {
            let off: f64 = k.column(from).iter().enumerate().filter(|(to, _)| *to != from.0).map(|(_, v)| v).sum();
            assert!(off < 1e-12);
        }
        for (a, b) in k.as_slice().iter().zip(id.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_preserves_uniform_and_is_symmetric() {
        for n in [8, 9, 41] {
            let g = unit(n);
            let u = Distribution::uniform(g);
            for sigma in [0.01, 0.07, 0.2] {
                let k = gaussian_kernel(&g, sigma).unwrap();
                assert!(stationarity_residual(&k, &u).unwrap() < 1e-9);
                let nb = g.bin_count();
                for i in (0..nb).step_by(7) {
                    for j in 0..nb {
                        assert_eq!(k.get(BinIndex(i), BinIndex(j)), k.get(BinIndex(j), BinIndex(i)));
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_is_circulant_on_wrapped_grid() {
        let g = unit(9);
        let k = gaussian_kernel(&g, 0.08).unwrap();
        let b = bimodal_kernel(&g, 0.07, 0.05).unwrap();
        for kernel in [&k, &b] {
            for (fx, fy, tx, ty) in [(0, 0, 3, 8), (4, 2, 1, 1), (8, 8, 0, 0)] {
                let base = kernel.get(g.bin(tx, ty).unwrap(), g.bin(fx, fy).unwrap());
                for sx in 0..9 {
                    for sy in 0..9 {
                        let from = g.bin((fx + sx) % 9, (fy + sy) % 9).unwrap();
                        let to = g.bin((tx + sx) % 9, (ty + sy) % 9).unwrap();
                        assert_eq!(kernel.get(to, from), base);
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_matches_direct_image_sum() {
        let g = unit(7);
        let sigma = 0.12;
        let k = gaussian_kernel(&g, sigma).unwrap();
        let w = 1.0 / 7.0;
        let g1 = |d: f64| -> f64 { (-2..=2).map(|m| (-(d + m as f64).powi(2) / (2.0 * sigma * sigma)).exp()).sum() };
        for from in 0..49usize {
            let col: Vec<f64> = (0..49usize)
                .map(|to| {
                    let dx = (to % 7) as f64 * w - (from % 7) as f64 * w;
                    let dy = (to / 7) as f64 * w - (from / 7) as f64 * w;
                    g1(dx) * g1(dy)
                })
                .collect();
            let total: f64 = col.iter().sum();
            for to in 0..49 {
                assert!((k.get(BinIndex(to), BinIndex(from)) - col[to] / total).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bimodal_examples() {
        let g = unit(41);
        let k = bimodal_kernel(&g, 0.07, 0.05).unwrap();
        assert_stochastic(&k);
        assert!(stationarity_residual(&k, &Distribution::uniform(g)).unwrap() < 1e-9);
        assert!(bimodal_kernel(&g, -0.1, 0.05).is_err());
        assert!(bimodal_kernel(&g, 0.07, 0.0).is_err());

        let g = unit(9);
        let a = bimodal_kernel(&g, 0.0, 0.06).unwrap();
        let b = gaussian_kernel(&g, 0.06).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bimodal_modes_sit_on_the_diagonal() {
        let g = unit(41);
        let k = bimodal_kernel(&g, 0.07, 0.01).unwrap();
        let from = g.bin(20, 20).unwrap();
        let col = k.column(from);
        let (cx, cy) = g.bin_center(from).unwrap();
        let step = 0.07 / 2f64.sqrt();
        let up = g.index_of(cx + step, cy + step).unwrap();
        let down = g.index_of(cx - step, cy - step).unwrap();
        let off = g.index_of(cx + step, cy - step).unwrap();
        assert!(col[up.0] > 0.1 && col[down.0] > 0.1);
        assert!((col[up.0] - col[down.0]).abs() < 1e-12);
        assert!(col[off.0] < 1e-6);
    }

    #[test]
    fn fade_examples() {
        let g = unit(5);
        let target = gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.2, 0.1), 0.1, 1.0)]).unwrap();
        let full = fade_kernel(&g, 1.0, &target).unwrap();
        for from in g.bins() {
            assert_eq!(full.column(from), target.mass());
        }
        assert_eq!(fade_kernel(&g, 0.0, &target).unwrap(), TransitionKernel::identity(g));
        for p in [0.0, 0.01, 0.3, 0.99, 1.0] {
            let k = fade_kernel(&g, p, &target).unwrap();
            assert_stochastic(&k);
            assert!(stationarity_residual(&k, &target).unwrap() < 1e-12);
        }
        assert!(fade_kernel(&g, 1.5, &target).is_err());
        let other = Distribution::uniform(unit(4));
        assert!(matches!(fade_kernel(&g, 0.5, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn linear_schedule_examples() {
        let s = linear_schedule::<f64>(ScheduleFamily::Gaussian, 0.03, 0.04, 10).unwrap();
        assert!((s.params()[4] - 0.05).abs() < 1e-15);
        let s = linear_schedule(ScheduleFamily::Fade, 0.01, 0.99, 1).unwrap();
        assert_eq!(s.params(), &[1.0]);
        let s = linear_schedule::<f64>(ScheduleFamily::Gaussian, 0.01, 0.04, 40).unwrap();
        assert_eq!(s.steps(), 40);
        assert!((s.param(1) - 0.011).abs() < 1e-15);
        assert!((s.param(40) - 0.05).abs() < 1e-15);
        let s = linear_schedule(ScheduleFamily::Fade, 0.01, 0.99, 40).unwrap();
        assert_eq!(s.param(40), 1.0);
    }

    #[test]
    fn linear_schedule_rejects_out_of_range() {
        assert!(linear_schedule(ScheduleFamily::Fade, 0.5, 0.9, 4).is_err());
        assert!(linear_schedule(ScheduleFamily::Gaussian, -0.1, 0.05, 4).is_err());
        assert!(linear_schedule::<f64>(ScheduleFamily::Gaussian, 0.1, 0.1, 0).is_err());
    }

    #[test]
    fn residual_matches_dense_oracle() {
        let g = unit(9);
        let k = gaussian_kernel(&g, 0.1).unwrap();
        let delta = Distribution::point_mass(g, BinIndex(40)).unwrap();
        let mut oracle = 0.0f64;
        for to in 0..81 {
            let mut acc = 0.0;
            for from in 0..81 {
                acc += k.as_slice()[to * 81 + from] * delta.mass()[from];
            }
            oracle = oracle.max((acc - delta.mass()[to]).abs());
        }
        assert!((stationarity_residual(&k, &delta).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn non_wrapped_grid_truncates() {
        let g = GridSpec::<f64>::new(6, 6, [0.0, 1.0, 0.0, 1.0], false).unwrap();
        let k = gaussian_kernel(&g, 0.2).unwrap();
        assert_stochastic(&k);
        // corner mass cannot leak around the edge
        let corner = k.column(g.bin(0, 0).unwrap());
        assert!(corner[g.bin(5, 5).unwrap().0] < corner[g.bin(1, 1).unwrap().0]);
    }

    #[test]
    fn from_dense_validates() {
        let g = unit(2);
        assert!(TransitionKernel::from_dense(g, vec![0.25; 16]).is_ok());
        assert!(TransitionKernel::from_dense(g, vec![0.5; 16]).is_err());
        let mut bad = vec![0.25; 16];
        bad[0] = -0.25;
        bad[4] = 0.75;
        assert!(TransitionKernel::from_dense(g, bad).is_err());
    }

    #[test]
    fn compose_and_guard() {
        let g = unit(4);
        let k = gaussian_kernel(&g, 0.2).unwrap();
        let id = TransitionKernel::identity(g);
        assert_eq!(id.compose(&id, 4096).unwrap(), id);
        let kk = k.compose(&k, 4096).unwrap();
        assert_stochastic(&kk);
        assert!(matches!(k.compose(&k, 10), Err(Error::GuardExceeded { bins: 16, limit: 10 })));
    }

    #[test]
    fn step_kernels_check_family() {
        let g = unit(5);
        let s = linear_schedule(ScheduleFamily::Fade, 0.1, 0.2, 3).unwrap();
        assert!(StepKernels::scheduled(g, NoiseFamily::Gaussian, s.clone()).is_err());
        let fk = StepKernels::scheduled(g, NoiseFamily::Fade { target: Distribution::uniform(g) }, s).unwrap();
        assert_eq!(fk.steps(), 3);
        assert!(fk.kernel(0).is_err() && fk.kernel(4).is_err());
        assert_stochastic(&fk.kernel(2).unwrap());
    }

    #[test]
    fn kernel_csv_skips_zeros() {
        let g = unit(2);
        let mut buf = Vec::new();
        TransitionKernel::identity(g).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("from,to,prob\n0,0,1.0000000000000000e0\n"));
    }
}
