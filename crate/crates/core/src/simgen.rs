//! Seeded generators for the simulation designs.
//!
//! Random curves are Gaussian B-spline expansions `sum_i N_i * nu_i(t)` with
//! independent `N_i ~ N(0, 1/i^2)` over a clamped cubic basis with 21
//! functions. The mean-difference scenarios are the ramp-plateau-ramp
//! family and the two exponential/cosine families used for the paired
//! spirometer-style comparisons, which also come with variance-ratio
//! functions.
//!
//! The baseline mean and variance functions of the paired design are only
//! available as figures in the literature; [`surrogate_mu1`] and
//! [`surrogate_sigma2_1`] are smooth stand-ins with a similar shape, not the
//! original functions.

use std::f64::consts::{LN_2, PI};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdata::{FunctionalSample, Grid, GridFunction};
use crate::random_effects::{GroupRecord, PairedRESample};
use crate::rng::{derive_seed, stream, tag, StreamRng};

/// B-spline basis with clamped, equispaced knots on `[0,1]`, evaluated on a
/// grid.
#[derive(Clone, Debug)]
pub struct BSplineBasis {
    grid: Grid,
    count: usize,
    degree: usize,
    knots: Vec<f64>,
    /// `values[k * count + i]` = `nu_i(t_k)`.
    values: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(grid: &Grid, count: usize, degree: usize) -> Result<Self> {
        if count < degree + 1 {
            return Err(Error::InvalidParameter(format!(
                "{count} basis functions are too few for degree {degree}"
            )));
        }
        let spans = count - degree;
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..spans).map(|i| i as f64 / spans as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));

        let mut values = vec![0.0; grid.len() * count];
        for (k, &t) in grid.points().iter().enumerate() {
            let span = find_span(&knots, count, degree, t);
            let local = basis_funs(&knots, degree, span, t);
            for (r, v) in local.into_iter().enumerate() {
                values[k * count + span - degree + r] = v;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            count,
            degree,
            knots,
            values,
        })
    }

    /// The cubic basis with 21 functions.
    pub fn cubic21(grid: &Grid) -> Result<Self> {
        Self::new(grid, 21, 3)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `nu_i` at grid index `k` (0-based `i`).
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.count + i]
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.count..(k + 1) * self.count]
    }
}

/// Knot span index `s` with `knots[s] <= t < knots[s+1]`; the right end
/// maps into the last non-empty span.
fn find_span(knots: &[f64], count: usize, degree: usize, t: f64) -> usize {
    if t >= knots[count] {
        return count - 1;
    }
    let mut lo = degree;
    let mut hi = count;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `degree + 1` non-vanishing basis functions on `span` (Cox-de Boor
/// triangle).
fn basis_funs(knots: &[f64], degree: usize, span: usize, t: f64) -> Vec<f64> {
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Gaussian process `sum_i sd_i * Z_i * nu_i(t)` with independent standard
/// normal `Z_i`.
#[derive(Clone, Debug)]
pub struct BSplineProcess {
    basis: BSplineBasis,
    coef_sd: Vec<f64>,
}

impl BSplineProcess {
    /// Coefficient standard deviations `1/i`, `i = 1..D`.
    pub fn standard(basis: BSplineBasis) -> Self {
        let coef_sd = (1..=basis.count()).map(|i| 1.0 / i as f64).collect();
        Self { basis, coef_sd }
    }

    pub fn with_sd(basis: BSplineBasis, coef_sd: Vec<f64>) -> Result<Self> {
        if coef_sd.len() != basis.count() || coef_sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "need one finite nonnegative standard deviation per basis function".into(),
            ));
        }
        Ok(Self { basis, coef_sd })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn coef_variances(&self) -> Vec<f64> {
        self.coef_sd.iter().map(|s| s * s).collect()
    }

    /// Pointwise variance `sum_i sd_i^2 nu_i(t)^2`.
    pub fn variance(&self) -> GridFunction {
        let vals = (0..self.basis.grid.len())
            .map(|k| {
                self.basis
                    .row(k)
                    .iter()
                    .zip(&self.coef_sd)
                    .map(|(v, s)| (s * v).powi(2))
                    .sum()
            })
            .collect();
        GridFunction::from_parts_unchecked(self.basis.grid.clone(), vals)
    }

    /// Adds one path to `out`, scaled pointwise by `scale`.
    fn add_path(&self, rng: &mut StreamRng, scale: &[f64], out: &mut [f64]) {
        let coefs: Vec<f64> = self
            .coef_sd
            .iter()
            .map(|s| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        for (k, (o, &sc)) in out.iter_mut().zip(scale).enumerate() {
            let v: f64 = self
                .basis
                .row(k)
                .iter()
                .zip(&coefs)
                .map(|(b, c)| b * c)
                .sum();
            *o += sc * v;
        }
    }

    pub fn sample_path(&self, rng: &mut StreamRng) -> GridFunction {
        let mut out = vec![0.0; self.basis.grid.len()];
        self.add_path(rng, &vec![1.0; out.len()], &mut out);
        GridFunction::from_parts_unchecked(self.basis.grid.clone(), out)
    }
}

/// `count` independent curves `mu + eta_j`; curve `j` uses stream
/// `(seed, j)`.
pub fn bspline_curve_sample(
    mu: &GridFunction,
    count: usize,
    process: &BSplineProcess,
    seed: u64,
) -> Result<FunctionalSample> {
    dependent_curve_sample(mu, count, process, 0.0, seed)
}

/// Curves `mu + eta_j` where `eta` is a stationary functional AR(1) series,
/// `eta_j = phi * eta_{j-1} + sqrt(1 - phi^2) * e_j`, driven by independent
/// B-spline innovations `e_j`. `phi = 0` gives iid curves.
pub fn dependent_curve_sample(
    mu: &GridFunction,
    count: usize,
    process: &BSplineProcess,
    phi: f64,
    seed: u64,
) -> Result<FunctionalSample> {
    mu.grid().ensure_same(process.basis.grid())?;
    if count == 0 {
        return Err(Error::UndersizedSample { needed: 1, got: 0 });
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "autoregressive coefficient must lie in (-1,1), got {phi}"
        )));
    }
    let p = mu.len();
    let ones = vec![1.0; p];
    let innov = (1.0 - phi * phi).sqrt();
    let mut data = Vec::with_capacity(count * p);
    let mut prev = vec![0.0; p];
    for j in 0..count {
        let mut e = vec![0.0; p];
        process.add_path(&mut stream(seed, j as u64), &ones, &mut e);
        for k in 0..p {
            let eta = if j == 0 {
                e[k]
            } else {
                phi * prev[k] + innov * e[k]
            };
            prev[k] = eta;
            data.push(mu.values()[k] + eta);
        }
    }
    Ok(FunctionalSample::from_buffer_unchecked(
        mu.grid().clone(),
        data,
    ))
}

/// Ramp-plateau-ramp mean function: rises linearly from 0 at `t = 0.02` to
/// `a` at `b1`, stays at `a` on `[b1, b2]`, and falls back to 0 at `t = 0.98`.
///
/// `b1 == b2` is allowed and gives a single peak.
pub fn mu2_subinterval(a: f64, b1: f64, b2: f64, grid: &Grid) -> Result<GridFunction> {
    if !(a.is_finite() && 0.02 < b1 && b1 <= b2 && b2 < 0.98) {
        return Err(Error::InvalidParameter(format!(
            "need finite a and 0.02 < b1 <= b2 < 0.98, got a = {a}, b1 = {b1}, b2 = {b2}"
        )));
    }
    GridFunction::from_fn(grid, |t| {
        if t < b1 {
            a / (b1 - 0.02) * (t - 0.02)
        } else if t <= b2 {
            a
        } else {
            -a / (0.98 - b2) * (t - b2) + a
        }
    })
}

/// Decay rate of the null scenarios: `a_1 = 0`, `a_i = 10^(2(i-2)/7)`.
pub fn fogarty_null_rate(i: usize) -> Result<f64> {
    match i {
        1 => Ok(0.0),
        3 | 5 | 7 | 9 => Ok(10f64.powf(2.0 * (i as f64 - 2.0) / 7.0)),
        _ => Err(Error::InvalidParameter(format!(
            "null scenario index must be one of 1, 3, 5, 7, 9, got {i}"
        ))),
    }
}

/// `mu2 - mu1 = 0.2 * exp(-a_i |t - 1/2|)` for null scenario `i`.
pub fn fogarty_null_shift(i: usize, grid: &Grid) -> Result<GridFunction> {
    let rate = fogarty_null_rate(i)?;
    GridFunction::from_fn(grid, |t| 0.2 * (-rate * (t - 0.5).abs()).exp())
}

/// `sigma1^2 / sigma2^2 = exp(log 2 * exp(-a_i |t - 1/2|))` for null
/// scenario `i`.
pub fn fogarty_ratio_null(i: usize, grid: &Grid) -> Result<GridFunction> {
    let rate = fogarty_null_rate(i)?;
    GridFunction::from_fn(grid, |t| (LN_2 * (-rate * (t - 0.5).abs()).exp()).exp())
}

fn power_index(i: usize) -> Result<f64> {
    if (1..=8).contains(&i) {
        Ok((i as f64 - 1.0) / 14.0)
    } else {
        Err(Error::InvalidParameter(format!(
            "power scenario index must lie in 1..=8, got {i}"
        )))
    }
}

/// `(b_i, c_i) = (0.05 - 0.1 (i-1)/14, 0.15 - 0.3 (i-1)/14)`.
pub fn fogarty_power_coefficients(i: usize) -> Result<(f64, f64)> {
    let s = power_index(i)?;
    Ok((0.05 - 0.1 * s, 0.15 - 0.3 * s))
}

/// `mu2 - mu1 = -b_i cos(2 pi t) - c_i` for power scenario `i`.
pub fn fogarty_power_shift(i: usize, grid: &Grid) -> Result<GridFunction> {
    let (b, c) = fogarty_power_coefficients(i)?;
    GridFunction::from_fn(grid, |t| -b * (2.0 * PI * t).cos() - c)
}

/// `sigma1^2 / sigma2^2 = (0.1 cos(2 pi t) + 1.8)^(d_i)`,
/// `d_i = -1 + 2 (i-1)/14`.
pub fn fogarty_ratio_power(i: usize, grid: &Grid) -> Result<GridFunction> {
    let d = -1.0 + 2.0 * power_index(i)?;
    GridFunction::from_fn(grid, |t| (0.1 * (2.0 * PI * t).cos() + 1.8).powf(d))
}

/// Stand-in baseline mean for the paired design.
pub fn surrogate_mu1(grid: &Grid) -> GridFunction {
    GridFunction::from_fn(grid, |t| 0.3 * (2.0 * PI * t).sin() * (-t).exp() + 0.2 * t)
        .expect("finite")
}

/// Stand-in baseline variance function for the paired design.
pub fn surrogate_sigma2_1(grid: &Grid) -> GridFunction {
    GridFunction::from_fn(grid, |t| 0.05 * (1.0 + 0.5 * (2.0 * PI * t).cos())).expect("finite")
}

/// Scenario families of the simulation studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Scenario {
    /// Two independent samples, `mu1 = 0`, `mu2 = mu2_subinterval(a, b1, b2)`.
    Subinterval { a: f64, b1: f64, b2: f64 },
    /// Paired design on the boundary of the null hypotheses.
    FogartyNull { index: usize },
    /// Paired design under the alternatives.
    FogartyPower { index: usize },
}

impl Scenario {
    pub fn family(&self) -> &'static str {
        match self {
            Scenario::Subinterval { .. } => "subinterval",
            Scenario::FogartyNull { .. } => "fogarty-null",
            Scenario::FogartyPower { .. } => "fogarty-power",
        }
    }

    pub fn is_paired(&self) -> bool {
        !matches!(self, Scenario::Subinterval { .. })
    }

    /// `(mu2 - mu1, sigma1^2 / sigma2^2)` of a paired scenario.
    pub fn paired_functions(&self, grid: &Grid) -> Result<(GridFunction, GridFunction)> {
        match *self {
            Scenario::FogartyNull { index } => Ok((
                fogarty_null_shift(index, grid)?,
                fogarty_ratio_null(index, grid)?,
            )),
            Scenario::FogartyPower { index } => Ok((
                fogarty_power_shift(index, grid)?,
                fogarty_ratio_power(index, grid)?,
            )),
            Scenario::Subinterval { .. } => Err(Error::InvalidConfig(
                "subinterval scenarios describe two independent samples".into(),
            )),
        }
    }
}

/// Group structure and effect laws of generated paired data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct REDesign {
    /// `A`.
    pub groups: usize,
    /// `n_i`, the same for every group.
    pub group_size: usize,
    /// Group-effect variance as a multiple of the individual-effect variance.
    pub group_var: f64,
    /// Pointwise correlation between the two devices' effects.
    pub cross_corr: f64,
}

impl Default for REDesign {
    fn default() -> Self {
        Self {
            groups: 20,
            group_size: 10,
            group_var: 0.5,
            cross_corr: 0.5,
        }
    }
}

/// Mean and individual-effect variance functions of both devices.
#[derive(Clone, Debug)]
pub struct REModel {
    pub mu1: GridFunction,
    pub mu2: GridFunction,
    pub sigma2_1: GridFunction,
    pub sigma2_2: GridFunction,
}

impl REModel {
    /// Device 2 from a mean shift `mu2 - mu1` and a variance ratio
    /// `sigma1^2 / sigma2^2`.
    pub fn from_shift_and_ratio(
        mu1: GridFunction,
        sigma2_1: GridFunction,
        shift: &GridFunction,
        ratio: &GridFunction,
    ) -> Result<Self> {
        if let Some(index) = ratio.values().iter().position(|&r| !(r > 0.0)) {
            return Err(Error::DegenerateVariance { index });
        }
        let mu2 = mu1.add(shift)?;
        let sigma2_2 = sigma2_1.zip_with(ratio, |s, r| s / r)?;
        Ok(Self {
            mu1,
            mu2,
            sigma2_1,
            sigma2_2,
        })
    }
}

/// Unit-variance paths `(U1, U2)` with pointwise correlation `rho`, built
/// from one shared and two idiosyncratic normalized B-spline paths.
struct CorrelatedPair<'a> {
    process: &'a BSplineProcess,
    inv_sd: Vec<f64>,
    shared: f64,
    own: f64,
}

impl<'a> CorrelatedPair<'a> {
    fn new(process: &'a BSplineProcess, rho: f64) -> Result<Self> {
        let inv_sd = process
            .variance()
            .values()
            .iter()
            .map(|v| 1.0 / v.sqrt())
            .collect::<Vec<_>>();
        if inv_sd.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "process variance vanishes at a grid point".into(),
            ));
        }
        Ok(Self {
            process,
            inv_sd,
            shared: rho.sqrt(),
            own: (1.0 - rho).sqrt(),
        })
    }

    /// Adds `sd1 * U1` to `out1` and `sd2 * U2` to `out2`.
    fn add(
        &self,
        rng: &mut StreamRng,
        sd1: &[f64],
        sd2: &[f64],
        out1: &mut [f64],
        out2: &mut [f64],
    ) {
        let p = out1.len();
        let mut s = vec![0.0; p];
        let mut i1 = vec![0.0; p];
        let mut i2 = vec![0.0; p];
        self.process.add_path(rng, &self.inv_sd, &mut s);
        self.process.add_path(rng, &self.inv_sd, &mut i1);
        self.process.add_path(rng, &self.inv_sd, &mut i2);
        for k in 0..p {
            out1[k] += sd1[k] * (self.shared * s[k] + self.own * i1[k]);
            out2[k] += sd2[k] * (self.shared * s[k] + self.own * i2[k]);
        }
    }
}

/// Paired random-effects data `mu_l + eps_{l,i} + eta_{l,i,j}`.
///
/// Individual effects have variance `sigma2_l(t)`; group effects have
/// variance `group_var * sigma2_l(t)`. Both are normalized B-spline
/// processes whose device-1 and device-2 components are correlated with
/// `cross_corr`. Group `i` draws from seed `derive_seed(seed, GROUP, i)`:
/// stream 0 for its effect, stream `j + 1` for pair `j`.
pub fn re_sample_gen(
    design: &REDesign,
    model: &REModel,
    process: &BSplineProcess,
    seed: u64,
) -> Result<PairedRESample> {
    let grid = model.mu1.grid().clone();
    for f in [&model.mu2, &model.sigma2_1, &model.sigma2_2] {
        grid.ensure_same(f.grid())?;
    }
    grid.ensure_same(process.basis().grid())?;
    for v in [&model.sigma2_1, &model.sigma2_2] {
        if let Some(index) = v.values().iter().position(|&x| x < 0.0) {
            return Err(Error::DegenerateVariance { index });
        }
    }
    if !(design.group_var >= 0.0 && design.group_var.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "group variance multiple must be nonnegative, got {}",
            design.group_var
        )));
    }
    if !(0.0..=1.0).contains(&design.cross_corr) {
        return Err(Error::InvalidParameter(format!(
            "cross-device correlation must lie in [0,1], got {}",
            design.cross_corr
        )));
    }
    let pair = CorrelatedPair::new(process, design.cross_corr)?;
    let sd1: Vec<f64> = model.sigma2_1.values().iter().map(|v| v.sqrt()).collect();
    let sd2: Vec<f64> = model.sigma2_2.values().iter().map(|v| v.sqrt()).collect();
    let gsd = design.group_var.sqrt();
    let gsd1: Vec<f64> = sd1.iter().map(|s| gsd * s).collect();
    let gsd2: Vec<f64> = sd2.iter().map(|s| gsd * s).collect();
    let p = grid.len();

    let groups = (0..design.groups)
        .map(|i| {
            let gseed = derive_seed(seed, tag::GROUP, i as u64);
            let mut e1 = model.mu1.values().to_vec();
            let mut e2 = model.mu2.values().to_vec();
            pair.add(&mut stream(gseed, 0), &gsd1, &gsd2, &mut e1, &mut e2);
            let mut d1 = Vec::with_capacity(design.group_size * p);
            let mut d2 = Vec::with_capacity(design.group_size * p);
            for j in 0..design.group_size {
                let mut x1 = e1.clone();
                let mut x2 = e2.clone();
                pair.add(
                    &mut stream(gseed, j as u64 + 1),
                    &sd1,
                    &sd2,
                    &mut x1,
                    &mut x2,
                );
                d1.extend(x1);
                d2.extend(x2);
            }
            GroupRecord::new(
                FunctionalSample::from_rows(
                    grid.clone(),
                    d1.chunks(p).map(<[f64]>::to_vec).collect(),
                )?,
                FunctionalSample::from_rows(
                    grid.clone(),
                    d2.chunks(p).map(<[f64]>::to_vec).collect(),
                )?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    PairedRESample::new(grid, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{mean_function, pointwise_variance};

    #[test]
    fn basis_is_partition_of_unity() {
        for grid in [Grid::uniform(101).unwrap(), Grid::midpoints(25).unwrap()] {
            let basis = BSplineBasis::cubic21(&grid).unwrap();
            assert_eq!(basis.knots().len(), 25);
            for k in 0..grid.len() {
                let s: f64 = (0..21).map(|i| basis.value(k, i)).sum();
                assert!((s - 1.0).abs() < 1e-12, "sum {s} at {k}");
                assert!((0..21).all(|i| basis.value(k, i) >= 0.0));
            }
        }
    }

    #[test]
    fn clamped_ends_interpolate() {
        let grid = Grid::uniform(11).unwrap();
        let basis = BSplineBasis::cubic21(&grid).unwrap();
        assert_eq!(basis.value(0, 0), 1.0);
        assert_eq!(basis.value(10, 20), 1.0);
    }

    #[test]
    fn linear_basis_matches_hat_functions() {
        // degree 1, 3 functions: knots 0,0,0.5,1,1
        let grid = Grid::new(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let b = BSplineBasis::new(&grid, 3, 1).unwrap();
        let expect = [
            [1.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.5, 0.5],
            [0.0, 0.0, 1.0],
        ];
        for (k, row) in expect.iter().enumerate() {
            for (i, &e) in row.iter().enumerate() {
                assert!((b.value(k, i) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coefficient_variances() {
        let grid = Grid::uniform(11).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        for (i, v) in proc.coef_variances().iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((v - 1.0 / (k * k)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_variance_override_reproduces_mean() {
        let grid = Grid::uniform(21).unwrap();
        let basis = BSplineBasis::cubic21(&grid).unwrap();
        let proc = BSplineProcess::with_sd(basis, vec![0.0; 21]).unwrap();
        let mu = GridFunction::from_fn(&grid, |t| t * t).unwrap();
        let s = bspline_curve_sample(&mu, 5, &proc, 8).unwrap();
        assert!(s.curves().all(|c| c == mu.values()));
    }

    #[test]
    fn curve_sample_variance_matches_basis_expansion() {
        let grid = Grid::uniform(26).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        let mu = GridFunction::constant(&grid, 0.0).unwrap();
        let s = bspline_curve_sample(&mu, 5000, &proc, 2024).unwrap();
        let var = pointwise_variance(&s).unwrap();
        let theory = proc.variance();
        for (v, th) in var.values().iter().zip(theory.values()) {
            // sd of a sample variance of 5000 normals is th * sqrt(2/4999)
            assert!(
                (v - th).abs() < 4.0 * th * (2.0f64 / 4999.0).sqrt(),
                "{v} vs {th}"
            );
        }
    }

    #[test]
    fn mean_of_many_curves_is_near_zero() {
        let grid = Grid::uniform(51).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        let mu = GridFunction::constant(&grid, 0.0).unwrap();
        let s = bspline_curve_sample(&mu, 1000, &proc, 7).unwrap();
        let mean = mean_function(&s);
        let sd = pointwise_variance(&s).unwrap();
        for (m, v) in mean.values().iter().zip(sd.values()) {
            assert!(m.abs() < 4.0 * (v / 1000.0).sqrt());
        }
    }

    #[test]
    fn subinterval_function() {
        let grid = Grid::new(vec![0.02, 0.3, 0.46, 0.5, 0.54, 0.98]).unwrap();
        let mu = mu2_subinterval(0.2, 0.46, 0.54, &grid).unwrap();
        let v = mu.values();
        assert_eq!(v[0], 0.0);
        assert_eq!(&v[2..5], &[0.2, 0.2, 0.2]);
        assert!(v[5].abs() < 1e-15);
        assert!(mu2_subinterval(0.2, 0.01, 0.5, &grid).is_err());
        assert!(mu2_subinterval(0.2, 0.6, 0.5, &grid).is_err());
        assert!(mu2_subinterval(0.194, 0.5, 0.5, &grid).is_ok());
    }

    #[test]
    fn fogarty_functions() {
        let grid = Grid::midpoints(25).unwrap();
        let s1 = fogarty_null_shift(1, &grid).unwrap();
        assert!(s1.values().iter().all(|&v| v == 0.2));
        let half = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        for i in [1, 3, 5, 7, 9] {
            assert_eq!(fogarty_null_shift(i, &half).unwrap().values()[1], 0.2);
            assert_eq!(fogarty_ratio_null(i, &half).unwrap().values()[1], 2.0);
        }
        assert!(fogarty_null_shift(2, &grid).is_err());
        assert_eq!(fogarty_null_rate(3).unwrap(), 10f64.powf(2.0 / 7.0));

        assert_eq!(fogarty_power_coefficients(1).unwrap(), (0.05, 0.15));
        let (b8, c8) = fogarty_power_coefficients(8).unwrap();
        assert!(b8.abs() < 1e-15 && c8.abs() < 1e-15);
        assert!(fogarty_ratio_power(8, &grid)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.0));
        assert!(fogarty_power_shift(9, &grid).is_err());
    }

    fn small_model(grid: &Grid) -> REModel {
        REModel::from_shift_and_ratio(
            surrogate_mu1(grid),
            surrogate_sigma2_1(grid),
            &fogarty_power_shift(3, grid).unwrap(),
            &fogarty_ratio_power(3, grid).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_effects_give_device_means() {
        let grid = Grid::midpoints(25).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        let zero = GridFunction::constant(&grid, 0.0).unwrap();
        let model = REModel {
            sigma2_1: zero.clone(),
            sigma2_2: zero,
            ..small_model(&grid)
        };
        let design = REDesign {
            groups: 3,
            group_size: 2,
            group_var: 0.0,
            cross_corr: 0.5,
        };
        let data = re_sample_gen(&design, &model, &proc, 1).unwrap();
        for g in data.groups() {
            use crate::random_effects::Device;
            assert!(g
                .device(Device::One)
                .curves()
                .all(|c| c == model.mu1.values()));
            assert!(g
                .device(Device::Two)
                .curves()
                .all(|c| c == model.mu2.values()));
        }
    }

    #[test]
    fn residual_variance_matches_model() {
        use crate::random_effects::{pooled_variance, Device};
        let grid = Grid::midpoints(25).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        let model = small_model(&grid);
        let design = REDesign {
            groups: 200,
            group_size: 10,
            ..Default::default()
        };
        let data = re_sample_gen(&design, &model, &proc, 99).unwrap();
        let df = (data.total_pairs() - data.num_groups()) as f64;
        for (dev, truth) in [
            (Device::One, &model.sigma2_1),
            (Device::Two, &model.sigma2_2),
        ] {
            let est = pooled_variance(&data, dev).unwrap();
            for (e, t) in est.values().iter().zip(truth.values()) {
                assert!((e - t).abs() < 4.0 * t * (2.0 / df).sqrt(), "{e} vs {t}");
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let grid = Grid::midpoints(25).unwrap();
        let proc = BSplineProcess::standard(BSplineBasis::cubic21(&grid).unwrap());
        let model = small_model(&grid);
        let design = REDesign::default();
        let a = re_sample_gen(&design, &model, &proc, 5).unwrap();
        let b = re_sample_gen(&design, &model, &proc, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, re_sample_gen(&design, &model, &proc, 6).unwrap());
    }
}
