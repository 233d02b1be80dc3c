//! Property checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use fdequiv::{
    empirical_quantile, estimate_extremal_sets, masked_max, mean_test, re_mean_test,
    re_variance_test, sup_deviation, BootstrapMode, EquivalenceBand, FunctionalSample, Grid,
    GridFunction, GroupRecord, MeanTestConfig, PairedRESample, RETestConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub type Check = std::result::Result<(), TestCaseError>;
pub type Rows = Vec<Vec<f64>>;
pub type PairedRows = Vec<(Rows, Rows)>;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn grid_fn(values: Vec<f64>) -> GridFunction {
    let grid = Grid::uniform(values.len()).unwrap();
    GridFunction::new(grid, values).unwrap()
}

fn band_on(grid: &Grid, lower: Vec<f64>, upper: Vec<f64>) -> EquivalenceBand {
    EquivalenceBand::new(
        GridFunction::new(grid.clone(), lower).unwrap(),
        GridFunction::new(grid.clone(), upper).unwrap(),
    )
    .unwrap()
}

fn sample(grid: &Grid, rows: Rows) -> FunctionalSample {
    FunctionalSample::from_rows(grid.clone(), rows).unwrap()
}

fn paired(rows: &PairedRows) -> PairedRESample {
    let grid = Grid::uniform(rows[0].0[0].len()).unwrap();
    let groups = rows
        .iter()
        .map(|(d1, d2)| {
            GroupRecord::new(sample(&grid, d1.clone()), sample(&grid, d2.clone())).unwrap()
        })
        .collect();
    PairedRESample::new(grid, groups).unwrap()
}

fn re_cfg() -> RETestConfig {
    RETestConfig {
        alpha: 0.1,
        replicates: 60,
        c: 0.3,
    }
}

pub fn values(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, p)
}

/// `(theta, lower, upper)` with `lower < 0 < upper`.
pub fn function_and_band() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|p| {
        (
            values(p),
            prop::collection::vec(-1.0..-0.01f64, p),
            prop::collection::vec(0.01..1.0f64, p),
        )
    })
}

pub fn two_samples() -> impl Strategy<Value = (Rows, Rows)> {
    (3usize..7, 3usize..9, 3usize..9).prop_flat_map(|(p, m, n)| {
        (
            prop::collection::vec(values(p), m),
            prop::collection::vec(values(p), n),
        )
    })
}

pub fn paired_rows() -> impl Strategy<Value = PairedRows> {
    (3usize..6, 2usize..5).prop_flat_map(|(p, a)| {
        prop::collection::vec(
            (2usize..5).prop_flat_map(move |ni| {
                (
                    prop::collection::vec(values(p), ni),
                    prop::collection::vec(values(p), ni),
                )
            }),
            a,
        )
    })
}

pub fn sup_deviation_shift((theta, lo, up): (Vec<f64>, Vec<f64>, Vec<f64>), c: f64) -> Check {
    let theta = grid_fn(theta);
    let band = band_on(theta.grid(), lo, up);
    let d = sup_deviation(&theta, &band).unwrap();
    let shifted = theta.map(|v| v + c).unwrap();
    let d2 = sup_deviation(&shifted, &band.shifted(c).unwrap()).unwrap();
    prop_assert!(close(d, d2), "{d} vs {d2}");
    Ok(())
}

pub fn negative_iff_inside((theta, lo, up): (Vec<f64>, Vec<f64>, Vec<f64>)) -> Check {
    let theta = grid_fn(theta);
    let band = band_on(theta.grid(), lo, up);
    let inside = theta
        .values()
        .iter()
        .zip(band.lower().values().iter().zip(band.upper().values()))
        .all(|(&t, (&l, &u))| l < t && t < u);
    prop_assert_eq!(sup_deviation(&theta, &band).unwrap() < 0.0, inside);
    Ok(())
}

pub fn sets_grow_with_threshold(
    (theta, lo, up): (Vec<f64>, Vec<f64>, Vec<f64>),
    t1: f64,
    dt: f64,
) -> Check {
    let theta = grid_fn(theta);
    let band = band_on(theta.grid(), lo, up);
    let d = sup_deviation(&theta, &band).unwrap();
    let (l1, u1) = estimate_extremal_sets(&theta, &band, d, t1).unwrap();
    let (l2, u2) = estimate_extremal_sets(&theta, &band, d, t1 + dt).unwrap();
    prop_assert!(l1.is_subset_of(&l2) && u1.is_subset_of(&u2));
    prop_assert!(!(l1.is_empty() && u1.is_empty()));
    Ok(())
}

pub fn zero_threshold_argmax((theta, lo, up): (Vec<f64>, Vec<f64>, Vec<f64>)) -> Check {
    let theta = grid_fn(theta);
    let band = band_on(theta.grid(), lo, up);
    let d = sup_deviation(&theta, &band).unwrap();
    let (l, u) = estimate_extremal_sets(&theta, &band, d, 0.0).unwrap();
    for i in 0..theta.len() {
        let t = theta.values()[i];
        prop_assert_eq!(l.contains(i), -t + band.lower().values()[i] == d);
        prop_assert_eq!(u.contains(i), t - band.upper().values()[i] == d);
    }
    Ok(())
}

pub fn masked_max_sign_symmetry(
    (theta, lo, up): (Vec<f64>, Vec<f64>, Vec<f64>),
    t: f64,
    path: Vec<f64>,
) -> Check {
    let theta = grid_fn(theta);
    let band = band_on(theta.grid(), lo, up);
    let d = sup_deviation(&theta, &band).unwrap();
    let (l, u) = estimate_extremal_sets(&theta, &band, d, t).unwrap();
    let path = GridFunction::new(theta.grid().clone(), path[..theta.len()].to_vec()).unwrap();
    let neg = path.scale(-1.0).unwrap();
    prop_assert_eq!(
        masked_max(&path, &l, &u).unwrap(),
        masked_max(&neg, &u, &l).unwrap()
    );
    Ok(())
}

pub fn quantile_order_statistic(mut v: Vec<f64>, alpha: f64, rot: usize) -> Check {
    let q = empirical_quantile(&v, alpha).unwrap();
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let k = ((alpha * v.len() as f64).ceil() as usize).clamp(1, v.len());
    prop_assert_eq!(q, sorted[k - 1]);
    let r = rot % v.len();
    v.rotate_left(r);
    v.reverse();
    prop_assert_eq!(empirical_quantile(&v, alpha).unwrap(), q);
    let q_hi = empirical_quantile(&v, (alpha + 0.2).min(0.999)).unwrap();
    prop_assert!(q_hi >= q);
    Ok(())
}

pub fn mean_location_invariance((r1, r2): (Rows, Rows), shift: Vec<f64>, seed: u64) -> Check {
    let grid = Grid::uniform(r1[0].len()).unwrap();
    let s1 = sample(&grid, r1);
    let s2 = sample(&grid, r2);
    let band = EquivalenceBand::symmetric(&grid, 0.5).unwrap();
    let cfg = MeanTestConfig {
        replicates: 40,
        c: 0.2,
        mode: BootstrapMode::IidResample,
        ..Default::default()
    };
    let f = GridFunction::new(grid.clone(), shift[..grid.len()].to_vec()).unwrap();
    let a = mean_test(&s1, &s2, &band, &cfg, seed).unwrap();
    let b = mean_test(
        &s1.shifted(&f).unwrap(),
        &s2.shifted(&f).unwrap(),
        &band,
        &cfg,
        seed,
    )
    .unwrap();
    prop_assert!(close(a.statistic, b.statistic));
    if a.lower_set == b.lower_set && a.upper_set == b.upper_set {
        for (x, y) in a.replicates.iter().zip(&b.replicates) {
            prop_assert!(close(*x, *y));
        }
    }
    Ok(())
}

pub fn wider_band_lowers_statistic((r1, r2): (Rows, Rows), k: f64, extra: f64) -> Check {
    let grid = Grid::uniform(r1[0].len()).unwrap();
    let s1 = sample(&grid, r1);
    let s2 = sample(&grid, r2);
    let cfg = MeanTestConfig {
        replicates: 20,
        ..Default::default()
    };
    let band = |k| EquivalenceBand::symmetric(&grid, k).unwrap();
    let narrow = mean_test(&s1, &s2, &band(k), &cfg, 1).unwrap();
    let wide = mean_test(&s1, &s2, &band(k + extra), &cfg, 1).unwrap();
    prop_assert!(wide.statistic <= narrow.statistic + 1e-12);
    Ok(())
}

pub fn re_mean_swap_reflects(rows: PairedRows, k: f64, skew: f64, seed: u64) -> Check {
    let data = paired(&rows);
    let band = EquivalenceBand::constant(data.grid(), -k + skew, k + skew).unwrap();
    let a = re_mean_test(&data, &band, &re_cfg(), seed).unwrap();
    let b = re_mean_test(&data.swapped(), &band.reflected(), &re_cfg(), seed).unwrap();
    prop_assert_eq!(a.statistic, b.statistic);
    prop_assert_eq!(&a.replicates, &b.replicates);
    prop_assert_eq!(&a.lower_set, &b.upper_set);
    prop_assert_eq!(a.reject_null, b.reject_null);
    Ok(())
}

pub fn re_variance_swap_inverts(rows: PairedRows, z: f64, seed: u64) -> Check {
    let data = paired(&rows);
    let band = EquivalenceBand::constant(data.grid(), 1.0 / z, z * 1.3).unwrap();
    let a = re_variance_test(&data, &band, &re_cfg(), seed).unwrap();
    let b = re_variance_test(&data.swapped(), &band.inverted().unwrap(), &re_cfg(), seed).unwrap();
    prop_assert!(close(a.statistic, b.statistic));
    if a.lower_set == b.upper_set && a.upper_set == b.lower_set {
        prop_assert_eq!(&a.replicates, &b.replicates);
        if (a.statistic - a.quantile).abs() > 1e-9 {
            prop_assert_eq!(a.reject_null, b.reject_null);
        }
    }
    Ok(())
}

pub fn re_variance_scaling(rows: PairedRows, s: f64, seed: u64) -> Check {
    let data = paired(&rows);
    let band = EquivalenceBand::constant(data.grid(), 0.6, 1.5).unwrap();
    let a = re_variance_test(&data, &band, &re_cfg(), seed).unwrap();
    let scaled = data.map_samples(|_, _, x| x.scaled(s)).unwrap();
    let c = re_variance_test(&scaled, &band, &re_cfg(), seed).unwrap();
    prop_assert!(close(a.statistic, c.statistic));
    if a.lower_set == c.lower_set && a.upper_set == c.upper_set {
        for (x, y) in a.replicates.iter().zip(&c.replicates) {
            prop_assert!((x - y).abs() < 1e-7 * (1.0 + x.abs()));
        }
    }
    Ok(())
}

pub fn identical_samples_equivalent((r1, _): (Rows, Rows), k: f64, seed: u64) -> Check {
    let grid = Grid::uniform(r1[0].len()).unwrap();
    let s = sample(&grid, r1);
    let band = EquivalenceBand::symmetric(&grid, k).unwrap();
    let cfg = MeanTestConfig {
        replicates: 30,
        ..Default::default()
    };
    prop_assert!(mean_test(&s, &s, &band, &cfg, seed).unwrap().reject_null);
    Ok(())
}

/// Runs every property with `cases` cases each; returns the failures.
pub fn run_all(cases: u32) -> Vec<String> {
    let mut failures = Vec::new();
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let mut record = |name: &str, r: std::result::Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    macro_rules! run {
        ($name:expr, $strategy:expr, $check:expr) => {
            record(
                $name,
                runner.run(&$strategy, $check).map_err(|e| e.to_string()),
            )
        };
    }
    run!(
        "sup_deviation shift",
        (function_and_band(), -2.0..2.0f64),
        |(x, c)| sup_deviation_shift(x, c)
    );
    run!(
        "negative iff inside",
        function_and_band(),
        negative_iff_inside
    );
    run!(
        "extremal sets monotone",
        (function_and_band(), 0.0..0.5f64, 0.0..0.5f64),
        |(x, t, dt)| sets_grow_with_threshold(x, t, dt)
    );
    run!(
        "zero-threshold argmax",
        function_and_band(),
        zero_threshold_argmax
    );
    run!(
        "masked_max sign symmetry",
        (function_and_band(), 0.0..1.0f64, values(12)),
        |(x, t, p)| masked_max_sign_symmetry(x, t, p)
    );
    run!(
        "quantile order statistic",
        (
            prop::collection::vec(-10.0..10.0f64, 1..60),
            0.001..0.999f64,
            0usize..60
        ),
        |(v, a, r)| quantile_order_statistic(v, a, r)
    );
    run!(
        "mean location invariance",
        (two_samples(), values(8), any::<u64>()),
        |(x, s, seed)| mean_location_invariance(x, s, seed)
    );
    run!(
        "wider band lowers statistic",
        (two_samples(), 0.05..1.0f64, 0.0..1.0f64),
        |(x, k, e)| wider_band_lowers_statistic(x, k, e)
    );
    run!(
        "re-mean device swap",
        (paired_rows(), 0.05..1.0f64, -0.04..0.04f64, any::<u64>()),
        |(x, k, s, seed)| re_mean_swap_reflects(x, k, s, seed)
    );
    run!(
        "re-variance device swap",
        (paired_rows(), 1.1..4.0f64, any::<u64>()),
        |(x, z, seed)| re_variance_swap_inverts(x, z, seed)
    );
    run!(
        "re-variance scaling",
        (paired_rows(), 0.01..100.0f64, any::<u64>()),
        |(x, s, seed)| re_variance_scaling(x, s, seed)
    );
    run!(
        "identical samples",
        (two_samples(), 0.001..2.0f64, any::<u64>()),
        |(x, k, seed)| identical_samples_equivalent(x, k, seed)
    );
    failures
}
