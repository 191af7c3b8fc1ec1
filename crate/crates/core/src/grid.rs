//! The discretized 2D state space and probability vectors over it.
//!
//! Bins are addressed row-major: `index = iy * n_x + ix`. Every serialized
//! artifact uses this convention.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Flat, row-major bin index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinIndex(pub usize);

impl BinIndex {
    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for BinIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A uniform rectangular grid of `n_x * n_y` bins, optionally toroidal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<S = f64> {
    n_x: usize,
    n_y: usize,
    x_min: S,
    x_max: S,
    y_min: S,
    y_max: S,
    wrapped: bool,
}

impl<S: Scalar> GridSpec<S> {
    /// `bounds` is `[x_min, x_max, y_min, y_max]`.
    pub fn new(n_x: usize, n_y: usize, bounds: [S; 4], wrapped: bool) -> Result<Self> {
        let [x_min, x_max, y_min, y_max] = bounds;
        if n_x < 2 || n_y < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 bins per axis, got {n_x}x{n_y}")));
        }
        if bounds.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidGrid(format!("inverted bounds x:[{x_min}, {x_max}] y:[{y_min}, {y_max}]")));
        }
        Ok(Self { n_x, n_y, x_min, x_max, y_min, y_max, wrapped })
    }

    /// `n x n` wrapped grid on `[-0.5, 0.5]^2`.
    pub fn unit_square(n: usize) -> Result<Self> {
        let h = S::lit(0.5);
        Self::new(n, n, [-h, h, -h, h], true)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn bounds(&self) -> [S; 4] {
        [self.x_min, self.x_max, self.y_min, self.y_max]
    }

    pub fn wrapped(&self) -> bool {
        self.wrapped
    }

    pub fn bin_count(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn period_x(&self) -> S {
        self.x_max - self.x_min
    }

    pub fn period_y(&self) -> S {
        self.y_max - self.y_min
    }

    pub fn bin_width_x(&self) -> S {
        self.period_x() / S::lit(self.n_x as f64)
    }

    pub fn bin_width_y(&self) -> S {
        self.period_y() / S::lit(self.n_y as f64)
    }

    pub fn center(&self) -> (S, S) {
        let two = S::lit(2.0);
        ((self.x_min + self.x_max) / two, (self.y_min + self.y_max) / two)
    }

    pub fn check(&self, bin: BinIndex) -> Result<BinIndex> {
        if bin.0 < self.bin_count() {
            Ok(bin)
        } else {
            Err(Error::IndexOutOfRange { index: bin.0, bins: self.bin_count() })
        }
    }

    pub fn bin(&self, ix: usize, iy: usize) -> Result<BinIndex> {
        if ix >= self.n_x || iy >= self.n_y {
            return Err(Error::IndexOutOfRange {
                index: iy.saturating_mul(self.n_x).saturating_add(ix),
                bins: self.bin_count(),
            });
        }
        Ok(BinIndex(iy * self.n_x + ix))
    }

    /// `(ix, iy)` of a bin.
    pub fn coords(&self, bin: BinIndex) -> Result<(usize, usize)> {
        let bin = self.check(bin)?;
        Ok((bin.0 % self.n_x, bin.0 / self.n_x))
    }

    pub fn axis_center_x(&self, ix: usize) -> S {
        self.x_min + (S::lit(ix as f64) + S::lit(0.5)) * self.bin_width_x()
    }

    pub fn axis_center_y(&self, iy: usize) -> S {
        self.y_min + (S::lit(iy as f64) + S::lit(0.5)) * self.bin_width_y()
    }

    pub fn bin_center(&self, bin: BinIndex) -> Result<(S, S)> {
        let (ix, iy) = self.coords(bin)?;
        Ok((self.axis_center_x(ix), self.axis_center_y(iy)))
    }

    /// Bin containing the point `(x, y)`. Points outside the domain wrap on a
    /// toroidal grid and are rejected otherwise.
    pub fn index_of(&self, x: S, y: S) -> Result<BinIndex> {
        let ix = Self::axis_index(x, self.x_min, self.bin_width_x(), self.n_x, self.wrapped);
        let iy = Self::axis_index(y, self.y_min, self.bin_width_y(), self.n_y, self.wrapped);
        match (ix, iy) {
            (Some(ix), Some(iy)) => self.bin(ix, iy),
            _ => Err(invalid("point", format!("({x}, {y}) lies outside the unwrapped grid"))),
        }
    }

    fn axis_index(v: S, min: S, width: S, n: usize, wrapped: bool) -> Option<usize> {
        if !v.is_finite() {
            return None;
        }
        let cell = ((v - min) / width).floor();
        if wrapped {
            let n_s = S::lit(n as f64);
            let cell = cell - n_s * (cell / n_s).floor();
            cell.to_usize().map(|c| c.min(n - 1))
        } else if cell < S::zero() || cell >= S::lit(n as f64) {
            None
        } else {
            cell.to_usize()
        }
    }

    /// Displacement `to - from`, reduced to the shortest toroidal image when wrapped.
    pub fn displacement(&self, from: (S, S), to: (S, S)) -> (S, S) {
        let dx = to.0 - from.0;
        let dy = to.1 - from.1;
        if self.wrapped {
            (wrap_delta(dx, self.period_x()), wrap_delta(dy, self.period_y()))
        } else {
            (dx, dy)
        }
    }

    /// Maps a point into the canonical cell `[min, max)` of a wrapped grid; identity otherwise.
    pub fn canonical_point(&self, p: (S, S)) -> (S, S) {
        if !self.wrapped {
            return p;
        }
        let fold = |v: S, min: S, period: S| v - period * ((v - min) / period).floor();
        (fold(p.0, self.x_min, self.period_x()), fold(p.1, self.y_min, self.period_y()))
    }

    pub fn bins(&self) -> impl Iterator<Item = BinIndex> {
        (0..self.bin_count()).map(BinIndex)
    }
}

pub(crate) fn wrap_delta<S: Scalar>(d: S, period: S) -> S {
    d - period * (d / period).round()
}

/// Free-function form of [`GridSpec::new`].
pub fn make_grid<S: Scalar>(n_x: usize, n_y: usize, bounds: [S; 4], wrapped: bool) -> Result<GridSpec<S>> {
    GridSpec::new(n_x, n_y, bounds, wrapped)
}

pub fn bin_center<S: Scalar>(grid: &GridSpec<S>, bin: BinIndex) -> Result<(S, S)> {
    grid.bin_center(bin)
}

/// A probability vector over the bins of a grid. Always normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<S = f64> {
    grid: GridSpec<S>,
    mass: Vec<S>,
}

impl<S: Scalar> Distribution<S> {
    /// Normalizes non-negative `weights` into a distribution.
    pub fn from_weights(grid: GridSpec<S>, weights: Vec<S>) -> Result<Self> {
        if weights.len() != grid.bin_count() {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries, got {}",
                grid.bin_count(),
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < S::zero()) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {w}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= S::zero() || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("total weight is {total}")));
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { grid, mass })
    }

    /// Takes `mass` as is after checking it already sums to one.
    pub fn from_mass(grid: GridSpec<S>, mass: Vec<S>) -> Result<Self> {
        let normalized = Self::from_weights(grid, mass.clone())?;
        let total = compensated_sum(mass.iter().copied());
        if (total - S::one()).abs().to_f64_lossy() > S::NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { mass, ..normalized })
    }

    pub fn uniform(grid: GridSpec<S>) -> Self {
        let n = grid.bin_count();
        let p = S::one() / S::lit(n as f64);
        Self { grid, mass: vec![p; n] }
    }

    pub fn point_mass(grid: GridSpec<S>, bin: BinIndex) -> Result<Self> {
        let bin = grid.check(bin)?;
        let mut mass = vec![S::zero(); grid.bin_count()];
        mass[bin.0] = S::one();
        Ok(Self { grid, mass })
    }

    pub fn grid(&self) -> &GridSpec<S> {
        &self.grid
    }

    pub fn mass(&self) -> &[S] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<S> {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn get(&self, bin: BinIndex) -> Result<S> {
        self.grid.check(bin).map(|b| self.mass[b.0])
    }

    pub fn total(&self) -> S {
        compensated_sum(self.mass.iter().copied())
    }

    pub fn argmax(&self) -> BinIndex {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        BinIndex(best)
    }

    pub fn max_mass(&self) -> S {
        self.mass.iter().copied().fold(S::zero(), S::max)
    }

    pub fn min_mass(&self) -> S {
        self.mass.iter().copied().fold(S::infinity(), S::min)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> S {
        -compensated_sum(self.mass.iter().filter(|m| **m > S::zero()).map(|&m| m * m.ln()))
    }

    pub fn same_grid(&self, other: &Distribution<S>) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Writes `ix,iy,mass` rows in row-major order with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "ix,iy,mass")?;
        let n_x = self.grid.n_x();
        for (i, m) in self.mass.iter().enumerate() {
            writeln!(out, "{},{},{:.16e}", i % n_x, i / n_x, m)?;
        }
        Ok(())
    }

    /// Reads the `ix,iy,mass` format. With no grid given, the grid size is
    /// inferred from the largest indices and placed on the wrapped unit square.
    pub fn read_csv<R: BufRead>(input: R, grid: Option<GridSpec<S>>) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if n == 0 {
                if trimmed != "ix,iy,mass" {
                    return Err(Error::Csv { line: 1, reason: format!("unexpected header `{trimmed}`") });
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Csv { line: line_no, reason: "expected 3 fields".into() });
            }
            let parse_usize =
                |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Csv { line: line_no, reason: e.to_string() });
            let ix = parse_usize(fields[0])?;
            let iy = parse_usize(fields[1])?;
            let mass: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::Csv { line: line_no, reason: e.to_string() })?;
            rows.push((ix, iy, mass));
        }
        let grid = match grid {
            Some(g) => g,
            None => {
                let n_x = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
                let n_y = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
                let h = S::lit(0.5);
                GridSpec::new(n_x, n_y, [-h, h, -h, h], true)?
            }
        };
        if rows.len() != grid.bin_count() {
            return Err(Error::Csv {
                line: rows.len() + 1,
                reason: format!("expected {} rows, found {}", grid.bin_count(), rows.len()),
            });
        }
        let mut weights = vec![S::nan(); grid.bin_count()];
        for (k, (ix, iy, m)) in rows.into_iter().enumerate() {
            let bin = grid.bin(ix, iy).map_err(|e| Error::Csv { line: k + 2, reason: e.to_string() })?;
            if !weights[bin.0].is_nan() {
                return Err(Error::Csv { line: k + 2, reason: format!("duplicate bin ({ix}, {iy})") });
            }
            weights[bin.0] = S::lit(m);
        }
        Self::from_mass(grid, weights)
    }
}

/// Parameters of the Archimedean-spiral data density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwissRoll<S = f64> {
    pub turns: S,
    pub inner_radius: S,
    pub outer_radius: S,
    pub thickness: S,
}

impl<S: Scalar> Default for SwissRoll<S> {
    fn default() -> Self {
        Self { turns: S::lit(2.0), inner_radius: S::lit(0.05), outer_radius: S::lit(0.45), thickness: S::lit(0.04) }
    }
}

/// Points sampled along the spiral curve.
pub const SPIRAL_SAMPLES: usize = 2048;

impl<S: Scalar> SwissRoll<S> {
    pub fn validate(&self, grid: &GridSpec<S>) -> Result<()> {
        let half_extent = grid.period_x().min(grid.period_y()) / S::lit(2.0);
        if !(self.turns > S::zero()) {
            return Err(invalid("turns", "must be positive"));
        }
        if !(self.inner_radius > S::zero() && self.inner_radius < self.outer_radius) {
            return Err(invalid("inner_radius", "need 0 < inner_radius < outer_radius"));
        }
        if !(self.outer_radius <= half_extent) {
            return Err(invalid(
                "outer_radius",
                format!("{} exceeds half the domain extent {half_extent}", self.outer_radius),
            ));
        }
        if !(self.thickness > S::zero()) || !self.thickness.is_finite() {
            return Err(invalid("thickness", "must be positive and finite"));
        }
        Ok(())
    }

    /// Dense sample of the curve `r(θ) = r_in + (r_out - r_in) θ / (2π turns)`,
    /// centered on `center`.
    pub fn curve_points(&self, center: (S, S), samples: usize) -> Vec<(S, S)> {
        let theta_max = S::lit(2.0 * std::f64::consts::PI) * self.turns;
        let last = S::lit((samples.max(2) - 1) as f64);
        (0..samples.max(2))
            .map(|k| {
                let theta = theta_max * S::lit(k as f64) / last;
                let r = self.inner_radius + (self.outer_radius - self.inner_radius) * theta / theta_max;
                (center.0 + r * theta.cos(), center.1 + r * theta.sin())
            })
            .collect()
    }

    /// Shortest Euclidean distance from `p` to the sampled curve.
    pub fn distance_to_curve(points: &[(S, S)], p: (S, S)) -> S {
        points.iter().map(|&(x, y)| ((p.0 - x) * (p.0 - x) + (p.1 - y) * (p.1 - y)).sqrt()).fold(S::infinity(), S::min)
    }
}

pub fn swiss_roll_distribution<S: Scalar>(grid: &GridSpec<S>, params: &SwissRoll<S>) -> Result<Distribution<S>> {
    params.validate(grid)?;
    let points = params.curve_points(grid.center(), SPIRAL_SAMPLES);
    let two_var = S::lit(2.0) * params.thickness * params.thickness;
    let weights = grid
        .bins()
        .map(|b| {
            let c = grid.bin_center(b).expect("bin in range");
            let d = SwissRoll::distance_to_curve(&points, c);
            (-(d * d) / two_var).exp()
        })
        .collect();
    Distribution::from_weights(*grid, weights)
}

pub fn uniform_distribution<S: Scalar>(grid: &GridSpec<S>) -> Distribution<S> {
    Distribution::uniform(*grid)
}

/// One isotropic Gaussian bump of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent<S = f64> {
    pub center: (S, S),
    pub sigma: S,
    pub weight: S,
}

impl<S: Scalar> MixtureComponent<S> {
    pub fn new(center: (S, S), sigma: S, weight: S) -> Self {
        Self { center, sigma, weight }
    }
}

pub fn gaussian_mixture_distribution<S: Scalar>(
    grid: &GridSpec<S>,
    components: &[MixtureComponent<S>],
) -> Result<Distribution<S>> {
    if components.is_empty() {
        return Err(invalid("components", "mixture needs at least one component"));
    }
    for c in components {
        if !(c.sigma > S::zero()) || !c.sigma.is_finite() {
            return Err(invalid("sigma", format!("{} is not positive", c.sigma)));
        }
        if !(c.weight > S::zero()) || !c.weight.is_finite() {
            return Err(invalid("weight", format!("{} is not positive", c.weight)));
        }
    }
    let centers: Vec<(S, S)> = components.iter().map(|c| grid.canonical_point(c.center)).collect();
    let weights = grid
        .bins()
        .map(|b| {
            let p = grid.bin_center(b).expect("bin in range");
            compensated_sum(components.iter().zip(&centers).map(|(c, &center)| {
                let (dx, dy) = grid.displacement(center, p);
                c.weight * (-(dx * dx + dy * dy) / (S::lit(2.0) * c.sigma * c.sigma)).exp()
            }))
        })
        .collect();
    Distribution::from_weights(*grid, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> GridSpec {
        GridSpec::<f64>::unit_square(n).unwrap()
    }

    #[test]
    fn default_grid_has_1681_bins() {
        let g = make_grid::<f64>(41, 41, [-0.5, 0.5, -0.5, 0.5], true).unwrap();
        assert_eq!(g.bin_count(), 1681);
        assert!((g.bin_width_x() - 1.0 / 41.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_centers() {
        let g = make_grid(2, 2, [0.0, 1.0, 0.0, 1.0], true).unwrap();
        let centers: Vec<_> = g.bins().map(|b| g.bin_center(b).unwrap()).collect();
        assert_eq!(centers, vec![(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(make_grid(1, 41, [-0.5, 0.5, -0.5, 0.5], true).is_err());
        assert!(make_grid(41, 1, [-0.5, 0.5, -0.5, 0.5], true).is_err());
        assert!(make_grid(4, 4, [0.5, -0.5, -0.5, 0.5], true).is_err());
        assert!(make_grid(4, 4, [-0.5, 0.5, 0.2, 0.2], false).is_err());
    }

    #[test]
    fn bin_center_examples() {
        let g = unit(41);
        let (x, y) = bin_center(&g, BinIndex(0)).unwrap();
        let expect = -0.5 + 0.5 / 41.0;
        assert!((x - expect).abs() < 1e-15 && (y - expect).abs() < 1e-15);
        let (cx, cy) = g.bin_center(g.bin(20, 20).unwrap()).unwrap();
        let half = 0.5 / 41.0;
        assert!(cx.abs() <= half && cy.abs() <= half);
        assert!(matches!(g.bin_center(BinIndex(1681)), Err(Error::IndexOutOfRange { index: 1681, bins: 1681 })));
    }

    #[test]
    fn index_of_roundtrips_and_wraps() {
        let g = unit(7);
        for b in g.bins() {
            let (x, y) = g.bin_center(b).unwrap();
            assert_eq!(g.index_of(x, y).unwrap(), b);
            assert_eq!(g.index_of(x + 1.0, y - 1.0).unwrap(), b);
        }
        let open = GridSpec::<f64>::new(4, 4, [0.0, 1.0, 0.0, 1.0], false).unwrap();
        assert!(open.index_of(1.5, 0.5).is_err());
    }

    #[test]
    fn uniform_examples() {
        let d = uniform_distribution(&unit(41));
        assert!(d.mass().iter().all(|&m| (m - 1.0 / 1681.0).abs() < 1e-18));
        assert!((d.total() - 1.0).abs() < 1e-12);
        let d = uniform_distribution(&unit(2));
        assert_eq!(d.mass(), &[0.25; 4]);
    }

    #[test]
    fn rejects_bad_weights() {
        let g = unit(2);
        assert!(Distribution::from_weights(g, vec![1.0, -0.1, 0.0, 0.0]).is_err());
        assert!(Distribution::from_weights(g, vec![0.0; 4]).is_err());
        assert!(Distribution::from_weights(g, vec![1.0; 3]).is_err());
        assert!(Distribution::from_weights(g, vec![f64::NAN, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn swiss_roll_is_normalized_and_peaks_on_curve() {
        let g = unit(41);
        let params = SwissRoll::default();
        let d = swiss_roll_distribution(&g, &params).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-9);
        // independent dense sample of the curve, 10x finer than the one used to build
        let fine = params.curve_points(g.center(), 20_000);
        let peak = g.bin_center(d.argmax()).unwrap();
        assert!(SwissRoll::distance_to_curve(&fine, peak) <= params.thickness);
    }

    #[test]
    fn wide_swiss_roll_is_flat() {
        let g = unit(41);
        let params = SwissRoll { thickness: 10.0, ..SwissRoll::default() };
        let d = swiss_roll_distribution(&g, &params).unwrap();
        assert!(d.max_mass() / d.min_mass() < 1.01);
    }

    #[test]
    fn swiss_roll_rejects_out_of_domain() {
        let g = unit(41);
        for bad in [
            SwissRoll { outer_radius: 0.6, ..SwissRoll::default() },
            SwissRoll { inner_radius: 0.5, outer_radius: 0.45, ..SwissRoll::default() },
            SwissRoll { inner_radius: 0.0, ..SwissRoll::default() },
            SwissRoll { thickness: 0.0, ..SwissRoll::default() },
            SwissRoll { turns: -1.0, ..SwissRoll::default() },
        ] {
            assert!(swiss_roll_distribution(&g, &bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn swiss_roll_mass_stays_near_curve() {
        let g = unit(41);
        for params in [SwissRoll::default(), SwissRoll { thickness: 0.02, ..SwissRoll::default() }] {
            let d = swiss_roll_distribution(&g, &params).unwrap();
            let fine = params.curve_points(g.center(), 20_000);
            let near: f64 = g
                .bins()
                .filter(|&b| SwissRoll::distance_to_curve(&fine, g.bin_center(b).unwrap()) <= 3.0 * params.thickness)
                .map(|b| d.mass()[b.0])
                .sum();
            assert!(near >= 0.99, "mass near curve {near}");
        }
    }

    #[test]
    fn wide_mixture_is_flat() {
        let g = unit(41);
        let d = gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.0, 0.0), 10.0, 1.0)]).unwrap();
        assert!(d.max_mass() / d.min_mass() < 1.01);
    }

    #[test]
    fn mixture_wrap_equivalent_components_merge() {
        let g = unit(41);
        let single = gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.125, -0.25), 0.07, 2.0)]).unwrap();
        let pair = gaussian_mixture_distribution(
            &g,
            &[MixtureComponent::new((0.125, -0.25), 0.07, 1.0), MixtureComponent::new((1.125, -0.25), 0.07, 1.0)],
        )
        .unwrap();
        for (a, b) in single.mass().iter().zip(pair.mass()) {
            assert!((a - b).abs() < 1e-15);
        }
        let shifted = gaussian_mixture_distribution(&g, &[MixtureComponent::new((-0.875, 0.75), 0.07, 2.0)]).unwrap();
        assert_eq!(single, shifted);
    }

    #[test]
    fn mixture_matches_per_bin_oracle() {
        let g = unit(9);
        let comps = [
            MixtureComponent::new((0.1, 0.2), 0.08, 0.5),
            MixtureComponent::new((-0.45, 0.4), 0.15, 1.5),
            MixtureComponent::new((0.3, -0.3), 0.05, 1.0),
        ];
        let d = gaussian_mixture_distribution(&g, &comps).unwrap();
        // oracle: explicit nearest-image search over a 3x3 image lattice
        let mut raw = vec![0.0; 81];
        for iy in 0..9 {
            for ix in 0..9 {
                let x = -0.5 + (ix as f64 + 0.5) / 9.0;
                let y = -0.5 + (iy as f64 + 0.5) / 9.0;
                for c in &comps {
                    let mut best = f64::INFINITY;
                    for kx in -1..=1 {
                        for ky in -1..=1 {
                            let dx = x - (c.center.0 + kx as f64);
                            let dy = y - (c.center.1 + ky as f64);
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                    raw[iy * 9 + ix] += c.weight * (-best / (2.0 * c.sigma * c.sigma)).exp();
                }
            }
        }
        let total: f64 = raw.iter().sum();
        for (i, (a, r)) in d.mass().iter().zip(&raw).enumerate() {
            assert!((a - r / total).abs() < 1e-12, "bin {i}: {a} vs {}", r / total);
        }
    }

    #[test]
    fn mixture_rejects_bad_components() {
        let g = unit(5);
        assert!(gaussian_mixture_distribution::<f64>(&g, &[]).is_err());
        assert!(gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.0, 0.0), 0.0, 1.0)]).is_err());
        assert!(gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.0, 0.0), 0.1, -1.0)]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let g = unit(5);
        let d = gaussian_mixture_distribution(&g, &[MixtureComponent::new((0.1, 0.0), 0.2, 1.0)]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ix,iy,mass\n0,0,"));
        assert_eq!(text.lines().nth(2).unwrap().split(',').next(), Some("1"));
        let back = Distribution::read_csv(&buf[..], Some(g)).unwrap();
        for (a, b) in d.mass().iter().zip(back.mass()) {
            assert!((a - b).abs() <= 1e-16 * a.abs().max(1e-300) * 4.0);
        }
        let inferred = Distribution::<f64>::read_csv(&buf[..], None).unwrap();
        assert_eq!(inferred.grid().n_x(), 5);
    }

    #[test]
    fn csv_rejects_garbage() {
        let g = unit(2);
        assert!(Distribution::<f64>::read_csv(&b"a,b,c\n"[..], Some(g)).is_err());
        assert!(Distribution::<f64>::read_csv(&b"ix,iy,mass\n0,0,1\n"[..], Some(g)).is_err());
        let dup = b"ix,iy,mass\n0,0,1\n0,0,1\n1,1,1\n0,1,1\n";
        assert!(Distribution::<f64>::read_csv(&dup[..], Some(g)).is_err());
        let unnormalized = b"ix,iy,mass\n0,0,1\n1,0,1\n0,1,1\n1,1,1\n";
        assert!(Distribution::<f64>::read_csv(&unnormalized[..], Some(g)).is_err());
        assert!(Distribution::from_mass(g, vec![0.5, 0.25, 0.25, 0.0]).is_ok());
        assert!(Distribution::from_mass(g, vec![0.5, 0.25, 0.25, -0.0001]).is_err());
    }

    #[test]
    fn f32_grid_works() {
        let g = GridSpec::<f32>::unit_square(9).unwrap();
        let d = swiss_roll_distribution(&g, &SwissRoll::default()).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-5);
    }
}
