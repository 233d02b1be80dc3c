//! Discretized functional data and the sup-norm algebra shared by every test.
//!
//! A function on `[0,1]` is stored by its values on a [`Grid`]; suprema over
//! the unit interval become maxima over the grid points. Values are checked
//! for finiteness once, at construction, and never again downstream.

use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Sorted evaluation points `t_1 < ... < t_p` in `[0,1]`, `p >= 2`.
///
/// Cloning is cheap; clones share storage, and equality short-circuits on
/// shared storage before comparing points.
#[derive(Clone)]
pub struct Grid {
    points: Arc<[f64]>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, &t) in points.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidGrid(format!(
                    "point {i} = {t} is outside [0,1]"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        Ok(Self {
            points: points.into(),
        })
    }

    /// `p` equispaced points `0, 1/(p-1), ..., 1`.
    pub fn uniform(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {p}"
            )));
        }
        let d = (p - 1) as f64;
        Self::new((0..p).map(|i| i as f64 / d).collect())
    }

    /// Cell midpoints `(j - 0.5)/p`, `j = 1..p`; `midpoints(25)` is the
    /// 25-point evaluation set used in the spirometer comparisons.
    pub fn midpoints(p: usize) -> Result<Self> {
        let d = p as f64;
        Self::new((1..=p).map(|j| (j as f64 - 0.5) / d).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid restricted to the given (increasing) indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points[..] == other.points[..]
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Grid({} points in [{}, {}])",
            self.len(),
            self.points[0],
            self.points[self.len() - 1]
        )
    }
}

/// A real function evaluated on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    /// Evaluates `f` at every grid point.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(grid.clone(), vec![c; grid.len()])
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        self.map(|v| s * v)
    }

    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.grid.subset(indices)?,
            indices.iter().map(|&i| self.values[i]).collect(),
        )
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// An ordered collection of curves observed on one grid.
///
/// Curves are stored row-major in one contiguous buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    data: Vec<f64>,
    size: usize,
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: Vec<GridFunction>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::UndersizedSample { needed: 1, got: 0 });
        }
        let size = curves.len();
        let mut data = Vec::with_capacity(size * grid.len());
        for c in &curves {
            grid.ensure_same(c.grid())?;
            data.extend_from_slice(c.values());
        }
        Ok(Self { grid, data, size })
    }

    /// Builds a sample from raw rows of values, one per curve.
    pub fn from_rows(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::UndersizedSample { needed: 1, got: 0 });
        }
        let size = rows.len();
        let mut data = Vec::with_capacity(size * grid.len());
        for row in rows {
            if row.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: row.len(),
                });
            }
            data.extend(row);
        }
        check_finite(&data).map_err(|e| match e {
            Error::NonFinite { index, value } => Error::NonFinite {
                index: index % grid.len(),
                value,
            },
            e => e,
        })?;
        Ok(Self { grid, data, size })
    }

    pub(crate) fn from_buffer_unchecked(grid: Grid, data: Vec<f64>) -> Self {
        let size = data.len() / grid.len();
        debug_assert!(size >= 1 && size * grid.len() == data.len());
        Self { grid, data, size }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of curves.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let p = self.grid.len();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn curves(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.grid.len())
    }

    pub fn curve_function(&self, i: usize) -> GridFunction {
        GridFunction::from_parts_unchecked(self.grid.clone(), self.curve(i).to_vec())
    }

    /// Adds `f` to every curve.
    pub fn shifted(&self, f: &GridFunction) -> Result<Self> {
        self.grid.ensure_same(f.grid())?;
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.grid.len()) {
            for (x, &v) in row.iter_mut().zip(f.values()) {
                *x += v;
            }
        }
        check_finite(&data)?;
        Ok(Self::from_buffer_unchecked(self.grid.clone(), data))
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|x| s * x).collect();
        check_finite(&data)?;
        Ok(Self::from_buffer_unchecked(self.grid.clone(), data))
    }
}

/// Lower and upper equivalence bounds, `lower(t) < upper(t)` everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceBand {
    lower: GridFunction,
    upper: GridFunction,
}

impl EquivalenceBand {
    pub fn new(lower: GridFunction, upper: GridFunction) -> Result<Self> {
        lower.grid().ensure_same(upper.grid())?;
        if let Some(i) = lower
            .values()
            .iter()
            .zip(upper.values())
            .position(|(l, u)| l >= u)
        {
            return Err(Error::InvalidBand(format!(
                "lower bound {} is not below upper bound {} at grid index {i}",
                lower.values()[i],
                upper.values()[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn constant(grid: &Grid, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            GridFunction::constant(grid, lower)?,
            GridFunction::constant(grid, upper)?,
        )
    }

    /// The band `(-kappa, kappa)`.
    pub fn symmetric(grid: &Grid, kappa: f64) -> Result<Self> {
        Self::constant(grid, -kappa, kappa)
    }

    pub fn lower(&self) -> &GridFunction {
        &self.lower
    }

    pub fn upper(&self) -> &GridFunction {
        &self.upper
    }

    pub fn grid(&self) -> &Grid {
        self.lower.grid()
    }

    /// Band for the negated parameter: `(-upper, -lower)`.
    pub fn reflected(&self) -> Self {
        let neg = |f: &GridFunction| {
            GridFunction::from_parts_unchecked(
                f.grid().clone(),
                f.values().iter().map(|v| -v).collect(),
            )
        };
        Self {
            lower: neg(&self.upper),
            upper: neg(&self.lower),
        }
    }

    /// Band for the reciprocal of a positive ratio: `(1/upper, 1/lower)`.
    pub fn inverted(&self) -> Result<Self> {
        self.ensure_positive()?;
        Self::new(self.upper.map(|v| 1.0 / v)?, self.lower.map(|v| 1.0 / v)?)
    }

    /// Band on the log scale; both bounds must be strictly positive.
    pub fn log(&self) -> Result<Self> {
        self.ensure_positive()?;
        Self::new(self.lower.map(f64::ln)?, self.upper.map(f64::ln)?)
    }

    /// Shifts both bounds by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.lower.map(|v| v + c)?, self.upper.map(|v| v + c)?)
    }

    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.lower.restrict(indices)?, self.upper.restrict(indices)?)
    }

    fn ensure_positive(&self) -> Result<()> {
        match self.lower.values().iter().position(|&v| v <= 0.0) {
            Some(i) => Err(Error::InvalidBand(format!(
                "ratio band must be strictly positive (lower bound {} at grid index {i})",
                self.lower.values()[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Membership of grid points in an (estimated) extremal set.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalSetMask {
    grid: Grid,
    member: Vec<bool>,
}

impl ExtremalSetMask {
    pub fn new(grid: Grid, member: Vec<bool>) -> Result<Self> {
        if member.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: member.len(),
            });
        }
        Ok(Self { grid, member })
    }

    pub fn empty(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            member: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            member: vec![true; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn member(&self) -> &[bool] {
        &self.member
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.member
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// `true` if every member of `self` is also a member of `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.member
            .iter()
            .zip(&other.member)
            .all(|(&a, &b)| !a || b)
    }
}

impl Serialize for ExtremalSetMask {
    /// Serialized as the list of member grid indices.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.indices())
    }
}

/// `-theta + lower` and `theta - upper`, the two signed exceedances.
fn deviations(theta: &GridFunction, band: &EquivalenceBand) -> Result<(Vec<f64>, Vec<f64>)> {
    theta.grid().ensure_same(band.grid())?;
    let lo = theta
        .values()
        .iter()
        .zip(band.lower().values())
        .map(|(&th, &k)| -th + k)
        .collect();
    let up = theta
        .values()
        .iter()
        .zip(band.upper().values())
        .map(|(&th, &k)| th - k)
        .collect();
    Ok((lo, up))
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Maximal signed deviation of `theta_hat` from the band:
/// `max{ max_t(-theta_hat + lower), max_t(theta_hat - upper) }`.
///
/// Negative exactly when `theta_hat` lies strictly inside the band at every
/// grid point.
pub fn sup_deviation(theta_hat: &GridFunction, band: &EquivalenceBand) -> Result<f64> {
    let (lo, up) = deviations(theta_hat, band)?;
    Ok(max_of(&lo).max(max_of(&up)))
}

/// Grid points whose lower (upper) deviation is within `threshold` of `stat`.
///
/// `stat` is normally `sup_deviation(theta_hat, band)`, in which case the
/// point attaining it belongs to one of the two masks.
pub fn estimate_extremal_sets(
    theta_hat: &GridFunction,
    band: &EquivalenceBand,
    stat: f64,
    threshold: f64,
) -> Result<(ExtremalSetMask, ExtremalSetMask)> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "extremal-set threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    let (lo, up) = deviations(theta_hat, band)?;
    let cut = stat - threshold;
    let grid = theta_hat.grid().clone();
    Ok((
        ExtremalSetMask {
            grid: grid.clone(),
            member: lo.iter().map(|&d| d >= cut).collect(),
        },
        ExtremalSetMask {
            grid,
            member: up.iter().map(|&d| d >= cut).collect(),
        },
    ))
}

/// `max{ max over lower of (-path), max over upper of path }`; an empty
/// mask drops out of the maximum.
pub fn masked_max(
    path: &GridFunction,
    lower: &ExtremalSetMask,
    upper: &ExtremalSetMask,
) -> Result<f64> {
    path.grid().ensure_same(&lower.grid)?;
    path.grid().ensure_same(&upper.grid)?;
    let support = ExtremalSupport::from_masks(lower, upper)?;
    let vals: Vec<f64> = support.points.iter().map(|&i| path.values()[i]).collect();
    Ok(support.max_over(&vals))
}

/// Union of two masks with per-point roles, so bootstrap paths need only be
/// evaluated where one of the masks is active.
#[derive(Clone, Debug)]
pub(crate) struct ExtremalSupport {
    pub points: Vec<usize>,
    lower: Vec<bool>,
    upper: Vec<bool>,
}

impl ExtremalSupport {
    pub fn from_masks(lower: &ExtremalSetMask, upper: &ExtremalSetMask) -> Result<Self> {
        lower.grid.ensure_same(&upper.grid)?;
        let mut points = Vec::new();
        let mut lo = Vec::new();
        let mut up = Vec::new();
        for (i, (&l, &u)) in lower.member.iter().zip(&upper.member).enumerate() {
            if l || u {
                points.push(i);
                lo.push(l);
                up.push(u);
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyExtremalSets);
        }
        Ok(Self {
            points,
            lower: lo,
            upper: up,
        })
    }

    /// `values[k]` is the path at `self.points[k]`.
    pub fn max_over(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let mut best = f64::NEG_INFINITY;
        for ((&v, &l), &u) in values.iter().zip(&self.lower).zip(&self.upper) {
            if l {
                best = best.max(-v);
            }
            if u {
                best = best.max(v);
            }
        }
        best
    }
}

/// Pointwise sample mean of the curves.
///
/// Accumulated as deviations from the first curve, so a sample of identical
/// curves has exactly that curve as its mean.
pub fn mean_function(sample: &FunctionalSample) -> GridFunction {
    let first = sample.curve(0);
    let mut acc = vec![0.0; first.len()];
    for c in sample.curves().skip(1) {
        for ((a, &x), &x0) in acc.iter_mut().zip(c).zip(first) {
            *a += x - x0;
        }
    }
    let n = sample.size() as f64;
    let values = acc.iter().zip(first).map(|(a, x0)| x0 + a / n).collect();
    GridFunction::from_parts_unchecked(sample.grid().clone(), values)
}

/// Pointwise sample variance with divisor `n - 1`.
pub fn pointwise_variance(sample: &FunctionalSample) -> Result<GridFunction> {
    if sample.size() < 2 {
        return Err(Error::UndersizedSample {
            needed: 2,
            got: sample.size(),
        });
    }
    let mean = mean_function(sample);
    let mut acc = vec![0.0; mean.len()];
    for c in sample.curves() {
        for ((a, &x), &m) in acc.iter_mut().zip(c).zip(mean.values()) {
            let d = x - m;
            *a += d * d;
        }
    }
    let d = (sample.size() - 1) as f64;
    acc.iter_mut().for_each(|a| *a /= d);
    Ok(GridFunction::from_parts_unchecked(
        sample.grid().clone(),
        acc,
    ))
}

/// Lower empirical quantile: the `ceil(alpha * R)`-th smallest of `R` values.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in (0,1), got {alpha}"
        )));
    }
    let rank = order_rank(values.len(), alpha);
    let mut v = values.to_vec();
    let (_, q, _) = v.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*q)
}

/// 1-based rank `ceil(alpha * n)`, clamped to `1..=n`.
pub(crate) fn order_rank(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).ceil() as usize).clamp(1, n)
}
