//! Pointwise TOST baseline combined by the intersection-union principle.
//!
//! At every grid point two one-sided `(1 - alpha)` intervals are formed and
//! equivalence at that point is decided when
//! `lower(t) < lo_interval(t) <= hi_interval(t) < upper(t)`. Equivalence of
//! the whole functions is decided only if every grid point decides it.
//!
//! Interval endpoints are either basic (reflected) percentile bootstrap
//! bounds `2*est - q_{1-alpha}`, `2*est - q_alpha`, or normal-theory bounds
//! `est -/+ u_{1-alpha} * sd / sqrt(m+n)`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fdata::{
    mean_function, order_rank, pointwise_variance, EquivalenceBand, FunctionalSample, GridFunction,
};
use crate::mean_test::resampled_sum;
use crate::random_effects::{group_means, log_variance_ratio, residual_pairs, PairedRESample};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TostVariant {
    BootstrapPercentile,
    AsymptoticNormal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TostResult {
    /// Lower one-sided bound per grid point.
    pub lower: Vec<f64>,
    /// Upper one-sided bound per grid point.
    pub upper: Vec<f64>,
    pub point_reject: Vec<bool>,
    /// `true` iff every grid point rejects.
    pub reject_null: bool,
    pub alpha: f64,
    pub variant: TostVariant,
}

impl TostResult {
    fn from_bounds(
        lower: Vec<f64>,
        upper: Vec<f64>,
        band: &EquivalenceBand,
        alpha: f64,
        variant: TostVariant,
    ) -> Self {
        let point_reject: Vec<bool> = lower
            .iter()
            .zip(&upper)
            .zip(band.lower().values().iter().zip(band.upper().values()))
            .map(|((&lo, &hi), (&kl, &ku))| kl < lo && lo <= hi && hi < ku)
            .collect();
        let reject_null = point_reject.iter().all(|&b| b);
        Self {
            lower,
            upper,
            point_reject,
            reject_null,
            alpha,
            variant,
        }
    }
}

/// `u_p`, the `p`-quantile of the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}

fn validate(alpha: f64, replicates: usize, variant: TostVariant) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "TOST level must lie in (0, 0.5), got {alpha}"
        )));
    }
    if variant == TostVariant::BootstrapPercentile && replicates == 0 {
        return Err(Error::InvalidConfig(
            "need at least one bootstrap replicate".into(),
        ));
    }
    Ok(())
}

/// Basic percentile bounds from a row-major `R x p` matrix of bootstrap
/// estimates.
fn percentile_bounds(estimate: &[f64], boot: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let p = estimate.len();
    let r = boot.len() / p;
    let lo_rank = order_rank(r, alpha);
    let hi_rank = order_rank(r, 1.0 - alpha);
    let mut column = vec![0.0; r];
    let mut lower = Vec::with_capacity(p);
    let mut upper = Vec::with_capacity(p);
    for (k, &est) in estimate.iter().enumerate() {
        for (c, row) in column.iter_mut().zip(boot.chunks_exact(p)) {
            *c = row[k];
        }
        column.sort_unstable_by(f64::total_cmp);
        lower.push(2.0 * est - column[hi_rank - 1]);
        upper.push(2.0 * est - column[lo_rank - 1]);
    }
    (lower, upper)
}

/// Pointwise TOST for the mean difference of two independent samples.
pub fn tost_test(
    sample1: &FunctionalSample,
    sample2: &FunctionalSample,
    band: &EquivalenceBand,
    alpha: f64,
    replicates: usize,
    variant: TostVariant,
    seed: u64,
) -> Result<TostResult> {
    validate(alpha, replicates, variant)?;
    sample1.grid().ensure_same(sample2.grid())?;
    sample1.grid().ensure_same(band.grid())?;
    for s in [sample1, sample2] {
        if s.size() < 2 {
            return Err(Error::UndersizedSample {
                needed: 2,
                got: s.size(),
            });
        }
    }
    let (m, n) = (sample1.size() as f64, sample2.size() as f64);
    let theta = mean_function(sample1).sub(&mean_function(sample2))?;
    let p = theta.len();

    let (lower, upper) = match variant {
        TostVariant::BootstrapPercentile => {
            let points: Vec<usize> = (0..p).collect();
            let boot: Vec<f64> = (0..replicates)
                .into_par_iter()
                .flat_map_iter(|r| {
                    let mut rng = stream(seed, r as u64);
                    let mut acc1 = vec![0.0; p];
                    let mut acc2 = vec![0.0; p];
                    resampled_sum(sample1, &points, &mut rng, &mut acc1);
                    resampled_sum(sample2, &points, &mut rng, &mut acc2);
                    acc1.into_iter().zip(acc2).map(move |(a, b)| a / m - b / n)
                })
                .collect();
            percentile_bounds(theta.values(), &boot, alpha)
        }
        TostVariant::AsymptoticNormal => {
            let v1 = pointwise_variance(sample1)?;
            let v2 = pointwise_variance(sample2)?;
            let total = m + n;
            let u = normal_quantile(1.0 - alpha);
            let mut lower = Vec::with_capacity(p);
            let mut upper = Vec::with_capacity(p);
            for k in 0..p {
                let var = total * (v1.values()[k] / m + v2.values()[k] / n);
                if !(var > 0.0) {
                    return Err(Error::DegenerateVariance { index: k });
                }
                let half = u * var.sqrt() / total.sqrt();
                lower.push(theta.values()[k] - half);
                upper.push(theta.values()[k] + half);
            }
            (lower, upper)
        }
    };
    Ok(TostResult::from_bounds(lower, upper, band, alpha, variant))
}

/// Pointwise percentile TOST for the mean difference in the paired
/// random-effects design; resamples pairs of group means.
pub fn tost_re_mean(
    data: &PairedRESample,
    band: &EquivalenceBand,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<TostResult> {
    let variant = TostVariant::BootstrapPercentile;
    validate(alpha, replicates, variant)?;
    data.grid().ensure_same(band.grid())?;
    let a = data.num_groups();
    let p = data.grid().len();
    let diffs: Vec<f64> = group_means(data)
        .iter()
        .flat_map(|(m1, m2)| {
            m1.values()
                .iter()
                .zip(m2.values())
                .map(|(x, y)| x - y)
                .collect::<Vec<_>>()
        })
        .collect();
    let mut theta = vec![0.0; p];
    for row in diffs.chunks_exact(p) {
        theta.iter_mut().zip(row).for_each(|(t, d)| *t += d);
    }
    theta.iter_mut().for_each(|t| *t /= a as f64);

    let boot: Vec<f64> = (0..replicates)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut rng = stream(seed, r as u64);
            let mut acc = vec![0.0; p];
            for _ in 0..a {
                let i = rng.gen_range(0..a);
                acc.iter_mut()
                    .zip(&diffs[i * p..(i + 1) * p])
                    .for_each(|(s, d)| *s += d);
            }
            acc.into_iter().map(move |s| s / a as f64)
        })
        .collect();
    let (lower, upper) = percentile_bounds(&theta, &boot, alpha);
    Ok(TostResult::from_bounds(lower, upper, band, alpha, variant))
}

/// Pointwise percentile TOST for the variance ratio in the paired
/// random-effects design, on the log scale; resamples residual pairs.
/// Bounds in the result are on the log scale.
pub fn tost_re_variance(
    data: &PairedRESample,
    band: &EquivalenceBand,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<TostResult> {
    let variant = TostVariant::BootstrapPercentile;
    validate(alpha, replicates, variant)?;
    data.grid().ensure_same(band.grid())?;
    let log_band = band.log()?;
    let log_ratio: GridFunction = log_variance_ratio(data)?;
    let n = data.total_pairs();
    let p = data.grid().len();
    let (r1, r2) = residual_pairs(data);

    let boot: Vec<f64> = (0..replicates)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut rng = stream(seed, r as u64);
            let mut acc1 = vec![0.0; p];
            let mut acc2 = vec![0.0; p];
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                for (i, (s1, s2)) in acc1.iter_mut().zip(acc2.iter_mut()).enumerate() {
                    let (x1, x2) = (r1[k * p + i], r2[k * p + i]);
                    *s1 += x1 * x1;
                    *s2 += x2 * x2;
                }
            }
            // common divisor N - A cancels in the ratio
            acc1.into_iter().zip(acc2).map(|(a, b)| a.ln() - b.ln())
        })
        .collect();
    let (lower, upper) = percentile_bounds(log_ratio.values(), &boot, alpha);
    Ok(TostResult::from_bounds(
        lower, upper, &log_band, alpha, variant,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::Grid;

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((normal_quantile(0.05) + normal_quantile(0.95)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_data_bootstrap_variant_rejects() {
        let grid = Grid::uniform(9).unwrap();
        let s = FunctionalSample::from_rows(grid.clone(), vec![vec![1.5; 9]; 6]).unwrap();
        let band = EquivalenceBand::symmetric(&grid, 0.2).unwrap();
        let res = tost_test(&s, &s, &band, 0.05, 50, TostVariant::BootstrapPercentile, 3).unwrap();
        assert!(res.lower.iter().chain(&res.upper).all(|&v| v == 0.0));
        assert!(res.reject_null);
        assert!(matches!(
            tost_test(&s, &s, &band, 0.05, 50, TostVariant::AsymptoticNormal, 3),
            Err(Error::DegenerateVariance { index: 0 })
        ));
    }

    #[test]
    fn one_failing_point_blocks_equivalence() {
        // theta_hat = 0.25 at the middle point, zero elsewhere, no noise
        let grid = Grid::uniform(3).unwrap();
        let s1 = FunctionalSample::from_rows(grid.clone(), vec![vec![0.0, 0.25, 0.0]; 4]).unwrap();
        let s2 = FunctionalSample::from_rows(grid.clone(), vec![vec![0.0; 3]; 4]).unwrap();
        let band = EquivalenceBand::symmetric(&grid, 0.2).unwrap();
        let res = tost_test(
            &s1,
            &s2,
            &band,
            0.05,
            20,
            TostVariant::BootstrapPercentile,
            1,
        )
        .unwrap();
        assert_eq!(res.point_reject, vec![true, false, true]);
        assert!(!res.reject_null);
    }

    #[test]
    fn asymptotic_bounds_are_symmetric() {
        let grid = Grid::uniform(4).unwrap();
        let rows1: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..4).map(|k| ((i * 4 + k) as f64).sin()).collect())
            .collect();
        let rows2: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..4).map(|k| ((i * 4 + k) as f64 * 1.3).cos()).collect())
            .collect();
        let s1 = FunctionalSample::from_rows(grid.clone(), rows1).unwrap();
        let s2 = FunctionalSample::from_rows(grid.clone(), rows2).unwrap();
        let band = EquivalenceBand::symmetric(&grid, 5.0).unwrap();
        let res = tost_test(&s1, &s2, &band, 0.05, 0, TostVariant::AsymptoticNormal, 0).unwrap();
        let theta = mean_function(&s1).sub(&mean_function(&s2)).unwrap();
        for k in 0..4 {
            let mid = 0.5 * (res.lower[k] + res.upper[k]);
            assert!((mid - theta.values()[k]).abs() < 1e-12);
        }
        assert!(res.reject_null);
    }

    #[test]
    fn invalid_level_rejected() {
        let grid = Grid::uniform(3).unwrap();
        let s = FunctionalSample::from_rows(grid.clone(), vec![vec![0.0; 3]; 3]).unwrap();
        let band = EquivalenceBand::symmetric(&grid, 0.2).unwrap();
        assert!(tost_test(&s, &s, &band, 0.6, 10, TostVariant::BootstrapPercentile, 0).is_err());
        assert!(tost_test(&s, &s, &band, 0.05, 0, TostVariant::BootstrapPercentile, 0).is_err());
    }
}
