//! Equivalence tests for paired curves from a functional random-effects
//! model
//!
//! ```text
//! X_{l,i,j} = mu_l + eps_{l,i} + eta_{l,i,j},   l = 1,2;  i = 1..A;  j = 1..n_i
//! ```
//!
//! where `i` indexes groups (e.g. patients) and `j` paired repetitions
//! recorded by both devices. The mean test resamples pairs of estimated
//! group effects; the variance test resamples pairs of within-group
//! residuals and works with the log variance ratio.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdata::{
    estimate_extremal_sets, mean_function, sup_deviation, EquivalenceBand, ExtremalSupport,
    FunctionalSample, Grid, GridFunction,
};
use crate::mean_test::{validate_common, TestResult};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Device {
    One,
    Two,
}

/// The paired curves of one group; the `j`-th curve of each device belong
/// together.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRecord {
    device1: FunctionalSample,
    device2: FunctionalSample,
}

impl GroupRecord {
    pub fn new(device1: FunctionalSample, device2: FunctionalSample) -> Result<Self> {
        device1.grid().ensure_same(device2.grid())?;
        if device1.size() != device2.size() {
            return Err(Error::InvalidParameter(format!(
                "group has {} device-1 curves but {} device-2 curves",
                device1.size(),
                device2.size()
            )));
        }
        Ok(Self { device1, device2 })
    }

    pub fn device(&self, d: Device) -> &FunctionalSample {
        match d {
            Device::One => &self.device1,
            Device::Two => &self.device2,
        }
    }

    /// Number of pairs `n_i`.
    pub fn size(&self) -> usize {
        self.device1.size()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedRESample {
    grid: Grid,
    groups: Vec<GroupRecord>,
}

impl PairedRESample {
    /// Requires at least two groups, each with at least two pairs.
    pub fn new(grid: Grid, groups: Vec<GroupRecord>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::UndersizedSample {
                needed: 2,
                got: groups.len(),
            });
        }
        for g in &groups {
            grid.ensure_same(g.device1.grid())?;
            if g.size() < 2 {
                return Err(Error::UndersizedSample {
                    needed: 2,
                    got: g.size(),
                });
            }
        }
        Ok(Self { grid, groups })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn groups(&self) -> &[GroupRecord] {
        &self.groups
    }

    /// `A`.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// `N = sum_i n_i`.
    pub fn total_pairs(&self) -> usize {
        self.groups.iter().map(GroupRecord::size).sum()
    }

    /// Same data with the roles of the two devices exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupRecord {
                    device1: g.device2.clone(),
                    device2: g.device1.clone(),
                })
                .collect(),
        }
    }

    /// Applies `f(group index, device, sample)` to every group/device.
    pub fn map_samples(
        &self,
        f: impl Fn(usize, Device, &FunctionalSample) -> Result<FunctionalSample>,
    ) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                GroupRecord::new(
                    f(i, Device::One, &g.device1)?,
                    f(i, Device::Two, &g.device2)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.grid.clone(), groups)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RETestConfig {
    pub alpha: f64,
    pub replicates: usize,
    pub c: f64,
}

impl Default for RETestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            replicates: 300,
            c: 0.005,
        }
    }
}

impl RETestConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.alpha, self.replicates, self.c)
    }
}

/// Within-group means `(mean of device 1, mean of device 2)` per group.
pub fn group_means(data: &PairedRESample) -> Vec<(GridFunction, GridFunction)> {
    data.groups
        .iter()
        .map(|g| (mean_function(&g.device1), mean_function(&g.device2)))
        .collect()
}

/// Grand means per device, weighting every group equally.
pub fn grand_means(data: &PairedRESample) -> (GridFunction, GridFunction) {
    let means = group_means(data);
    let p = data.grid.len();
    let a = means.len() as f64;
    let mut g1 = vec![0.0; p];
    let mut g2 = vec![0.0; p];
    for (m1, m2) in &means {
        for k in 0..p {
            g1[k] += m1.values()[k];
            g2[k] += m2.values()[k];
        }
    }
    g1.iter_mut().chain(g2.iter_mut()).for_each(|v| *v /= a);
    (
        GridFunction::from_parts_unchecked(data.grid.clone(), g1),
        GridFunction::from_parts_unchecked(data.grid.clone(), g2),
    )
}

/// Estimated group effects `group mean - grand mean`, per group and device.
pub fn group_effects(data: &PairedRESample) -> Vec<(GridFunction, GridFunction)> {
    let (g1, g2) = grand_means(data);
    group_means(data)
        .into_iter()
        .map(|(m1, m2)| {
            (
                m1.sub(&g1).expect("same grid"),
                m2.sub(&g2).expect("same grid"),
            )
        })
        .collect()
}

/// Max-deviation equivalence test for the difference of the device means.
///
/// The statistic is `sqrt(A) * sup_deviation(theta_hat, band)`; the
/// extremal sets are estimated on the unscaled deviations with cut-off
/// `c * log(A) / sqrt(A)`.
pub fn re_mean_test(
    data: &PairedRESample,
    band: &EquivalenceBand,
    cfg: &RETestConfig,
    seed: u64,
) -> Result<TestResult> {
    cfg.validate()?;
    data.grid.ensure_same(band.grid())?;
    let a = data.num_groups();
    let a_f = a as f64;

    let (g1, g2) = grand_means(data);
    let theta = g1.sub(&g2)?;
    let dev = sup_deviation(&theta, band)?;
    let threshold = cfg.c * a_f.ln() / a_f.sqrt();
    let masks = estimate_extremal_sets(&theta, band, dev, threshold)?;
    let support = ExtremalSupport::from_masks(&masks.0, &masks.1)?;

    // differences of group effects, restricted to the support
    let width = support.points.len();
    let diffs: Vec<f64> = group_effects(data)
        .iter()
        .flat_map(|(e1, e2)| {
            support
                .points
                .iter()
                .map(|&k| e1.values()[k] - e2.values()[k])
                .collect::<Vec<_>>()
        })
        .collect();

    let norm = 1.0 / a_f.sqrt();
    let replicates: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let mut acc = vec![0.0; width];
            for _ in 0..a {
                let i = rng.gen_range(0..a);
                for (s, &d) in acc.iter_mut().zip(&diffs[i * width..(i + 1) * width]) {
                    *s += d;
                }
            }
            acc.iter_mut().for_each(|s| *s *= norm);
            support.max_over(&acc)
        })
        .collect();

    TestResult::decide(a_f.sqrt() * dev, replicates, cfg.alpha, masks, seed)
}

/// Pooled within-group variance of one device, divisor `N - A`.
pub fn pooled_variance(data: &PairedRESample, device: Device) -> Result<GridFunction> {
    let n = data.total_pairs();
    let a = data.num_groups();
    if n <= a {
        return Err(Error::UndersizedSample {
            needed: a + 1,
            got: n,
        });
    }
    let p = data.grid.len();
    let mut acc = vec![0.0; p];
    for g in &data.groups {
        let s = g.device(device);
        let mean = mean_function(s);
        for c in s.curves() {
            for ((a, &x), &m) in acc.iter_mut().zip(c).zip(mean.values()) {
                let d = x - m;
                *a += d * d;
            }
        }
    }
    let d = (n - a) as f64;
    acc.iter_mut().for_each(|v| *v /= d);
    GridFunction::new(data.grid.clone(), acc)
}

/// Within-group residual curves of both devices, flattened over groups in
/// pair order: row `k` of each buffer belongs to pair `k`.
pub(crate) fn residual_pairs(data: &PairedRESample) -> (Vec<f64>, Vec<f64>) {
    let p = data.grid.len();
    let n = data.total_pairs();
    let mut r1 = Vec::with_capacity(n * p);
    let mut r2 = Vec::with_capacity(n * p);
    for g in &data.groups {
        for (dev, out) in [(Device::One, &mut r1), (Device::Two, &mut r2)] {
            let s = g.device(dev);
            let mean = mean_function(s);
            for c in s.curves() {
                out.extend(c.iter().zip(mean.values()).map(|(x, m)| x - m));
            }
        }
    }
    (r1, r2)
}

pub(crate) fn positive_variance(v: &GridFunction) -> Result<()> {
    match v.values().iter().position(|&x| !(x > 0.0)) {
        Some(index) => Err(Error::DegenerateVariance { index }),
        None => Ok(()),
    }
}

/// Log variance ratio `log(sigma1^2 / sigma2^2)` from the pooled variances.
pub fn log_variance_ratio(data: &PairedRESample) -> Result<GridFunction> {
    let v1 = pooled_variance(data, Device::One)?;
    let v2 = pooled_variance(data, Device::Two)?;
    positive_variance(&v1)?;
    positive_variance(&v2)?;
    v1.zip_with(&v2, |a, b| a.ln() - b.ln())
}

/// Max-deviation equivalence test for the ratio of the device variance
/// functions, carried out on the log scale with band `(log lower, log upper)`.
///
/// The statistic is `sqrt(N) * sup_deviation(log ratio, log band)`.
pub fn re_variance_test(
    data: &PairedRESample,
    band: &EquivalenceBand,
    cfg: &RETestConfig,
    seed: u64,
) -> Result<TestResult> {
    cfg.validate()?;
    data.grid.ensure_same(band.grid())?;
    let log_band = band.log()?;
    let n = data.total_pairs();
    let a = data.num_groups();
    let n_f = n as f64;

    let v1 = pooled_variance(data, Device::One)?;
    let v2 = pooled_variance(data, Device::Two)?;
    positive_variance(&v1)?;
    positive_variance(&v2)?;
    let log_ratio = v1.zip_with(&v2, |a, b| a.ln() - b.ln())?;
    let dev = sup_deviation(&log_ratio, &log_band)?;
    let threshold = cfg.c * n_f.ln() / n_f.sqrt();
    let masks = estimate_extremal_sets(&log_ratio, &log_band, dev, threshold)?;
    let support = ExtremalSupport::from_masks(&masks.0, &masks.1)?;

    let p = data.grid.len();
    let width = support.points.len();
    let (r1, r2) = residual_pairs(data);
    let squares = |r: &[f64]| -> Vec<f64> {
        (0..n)
            .flat_map(|k| {
                support
                    .points
                    .iter()
                    .map(move |&i| r[k * p + i] * r[k * p + i])
            })
            .collect()
    };
    let sq1 = squares(&r1);
    let sq2 = squares(&r2);
    let s1: Vec<f64> = support.points.iter().map(|&i| v1.values()[i]).collect();
    let s2: Vec<f64> = support.points.iter().map(|&i| v2.values()[i]).collect();
    let denom = (n - a) as f64;

    let replicates: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let mut acc1 = vec![0.0; width];
            let mut acc2 = vec![0.0; width];
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                let row = k * width..(k + 1) * width;
                for ((x1, x2), (&q1, &q2)) in acc1
                    .iter_mut()
                    .zip(acc2.iter_mut())
                    .zip(sq1[row.clone()].iter().zip(&sq2[row]))
                {
                    *x1 += q1;
                    *x2 += q2;
                }
            }
            let path: Vec<f64> = (0..width)
                .map(|k| {
                    let c1 = (acc1[k] - n_f * s1[k]) / denom;
                    let c2 = (acc2[k] - n_f * s2[k]) / denom;
                    c1 / s1[k] - c2 / s2[k]
                })
                .collect();
            n_f.sqrt() * support.max_over(&path)
        })
        .collect();

    TestResult::decide(n_f.sqrt() * dev, replicates, cfg.alpha, masks, seed)
}
