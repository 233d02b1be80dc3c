//! Monte Carlo size/power experiments.
//!
//! An [`ExperimentConfig`] names the test methods, a scenario family with
//! the swept parameter values, the sampling design and the Monte Carlo
//! settings. [`run_experiment`] generates `nsim` datasets per scenario
//! (run `k` uses the same data seed in every scenario, so sweeps share
//! random numbers), applies every method to each dataset and records the
//! decisions.
//!
//! Runs are distributed over a bounded worker pool and collected by run
//! index; every random draw is addressed by `(seed, run, replicate)`, so
//! the report body is identical for any worker count.
//!
//! # Config format
//!
//! One `key = value` per line; `#` starts a comment; lists are
//! comma-separated. Keys, with defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `methods` | `mean-iid, tost-bootstrap` | test methods, see [`Method`] |
//! | `family` | `subinterval` | `subinterval`, `fogarty-null`, `fogarty-power` |
//! | `a` | `0.2` | plateau height(s) of the subinterval family |
//! | `b1`, `b2` | `0.46`, `0.54` | plateau ends |
//! | `width` | (empty) | plateau-width sweep `j`: `b1 = 0.5 - 0.08 j`, `b2 = 0.5 + 0.08 j` |
//! | `index` | `1` | scenario number(s) of the paired families |
//! | `m`, `n` | `100`, `100` | two-sample sizes |
//! | `ar` | `0` | AR(1) coefficient of the two-sample curves |
//! | `groups`, `group_size` | `20`, `10` | paired design `A`, `n_i` |
//! | `group_var`, `cross_corr` | `0.5`, `0.5` | paired effect laws |
//! | `grid` | `uniform:101` | `uniform:<p>` or `midpoints:<p>` |
//! | `kappa_l`, `kappa_u` | `-0.2`, `0.2` | mean band |
//! | `zeta_l`, `zeta_u` | `0.5`, `2` | variance-ratio band |
//! | `nsim` | `1000` | simulation runs per scenario |
//! | `replicates` | `300` | bootstrap replicates |
//! | `alpha` | `0.05` | level |
//! | `c` | `0.005` | extremal-set constant |
//! | `block_exponent` | `0.333333` | `l = ceil(size^beta)` for `mean-dependent` |
//! | `seed` | `1` | master seed |
//! | `workers` | available parallelism | worker threads |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdata::{EquivalenceBand, FunctionalSample, Grid, GridFunction};
use crate::mean_test::{mean_test, BlockLengths, BootstrapMode, MeanTestConfig, TestResult};
use crate::random_effects::{re_mean_test, re_variance_test, PairedRESample, RETestConfig};
use crate::rng::{derive_seed, tag};
use crate::simgen::{
    dependent_curve_sample, mu2_subinterval, re_sample_gen, surrogate_mu1, surrogate_sigma2_1,
    BSplineBasis, BSplineProcess, REDesign, REModel, Scenario,
};
use crate::tost::{tost_re_mean, tost_re_variance, tost_test, TostResult, TostVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Max-deviation mean test, iid resampling.
    MeanIid,
    /// Max-deviation mean test, multiplier block bootstrap.
    MeanDependent,
    /// Max-deviation mean test for paired random-effects data.
    ReMean,
    /// Max-deviation variance-ratio test for paired random-effects data.
    ReVariance,
    /// Pointwise TOST, percentile bootstrap, two samples.
    TostBootstrap,
    /// Pointwise TOST, normal intervals, two samples.
    TostAsymptotic,
    /// Pointwise TOST for the paired mean difference.
    TostReMean,
    /// Pointwise TOST for the paired log variance ratio.
    TostReVariance,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::MeanIid,
        Method::MeanDependent,
        Method::ReMean,
        Method::ReVariance,
        Method::TostBootstrap,
        Method::TostAsymptotic,
        Method::TostReMean,
        Method::TostReVariance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::MeanIid => "mean-iid",
            Method::MeanDependent => "mean-dependent",
            Method::ReMean => "re-mean",
            Method::ReVariance => "re-variance",
            Method::TostBootstrap => "tost-bootstrap",
            Method::TostAsymptotic => "tost-asymptotic",
            Method::TostReMean => "tost-re-mean",
            Method::TostReVariance => "tost-re-variance",
        }
    }

    /// Whether the method expects paired random-effects data.
    pub fn is_paired(&self) -> bool {
        matches!(
            self,
            Method::ReMean | Method::ReVariance | Method::TostReMean | Method::TostReVariance
        )
    }

    /// Whether the method compares variance functions.
    pub fn is_variance(&self) -> bool {
        matches!(self, Method::ReVariance | Method::TostReVariance)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Subinterval,
    FogartyNull,
    FogartyPower,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Subinterval => "subinterval",
            Family::FogartyNull => "fogarty-null",
            Family::FogartyPower => "fogarty-power",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subinterval" => Ok(Family::Subinterval),
            "fogarty-null" => Ok(Family::FogartyNull),
            "fogarty-power" => Ok(Family::FogartyPower),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scenario family {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GridChoice {
    Uniform(usize),
    Midpoints(usize),
}

impl GridChoice {
    pub fn build(&self) -> Result<Grid> {
        match *self {
            GridChoice::Uniform(p) => Grid::uniform(p),
            GridChoice::Midpoints(p) => Grid::midpoints(p),
        }
    }
}

impl std::fmt::Display for GridChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridChoice::Uniform(p) => write!(f, "uniform:{p}"),
            GridChoice::Midpoints(p) => write!(f, "midpoints:{p}"),
        }
    }
}

impl FromStr for GridChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidConfig(format!(
                "grid must be uniform:<p> or midpoints:<p>, got {s:?}"
            ))
        };
        let (kind, p) = s.split_once(':').ok_or_else(bad)?;
        let p: usize = p.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "uniform" => Ok(GridChoice::Uniform(p)),
            "midpoints" => Ok(GridChoice::Midpoints(p)),
            _ => Err(bad()),
        }
    }
}

/// Resolved settings of one experiment; see the module docs for the keys.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub family: Family,
    pub a: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
    pub width: Vec<usize>,
    pub index: Vec<usize>,
    pub m: usize,
    pub n: usize,
    pub ar: f64,
    pub design: REDesign,
    pub grid: GridChoice,
    pub kappa_l: f64,
    pub kappa_u: f64,
    pub zeta_l: f64,
    pub zeta_u: f64,
    pub nsim: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub c: f64,
    pub block_exponent: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::MeanIid, Method::TostBootstrap],
            family: Family::Subinterval,
            a: vec![0.2],
            b1: 0.46,
            b2: 0.54,
            width: Vec::new(),
            index: vec![1],
            m: 100,
            n: 100,
            ar: 0.0,
            design: REDesign::default(),
            grid: GridChoice::Uniform(101),
            kappa_l: -0.2,
            kappa_u: 0.2,
            zeta_l: 0.5,
            zeta_u: 2.0,
            nsim: 1000,
            replicates: 300,
            alpha: 0.05,
            c: 0.005,
            block_exponent: 1.0 / 3.0,
            seed: 1,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Config keys in canonical (echo) order.
pub const CONFIG_KEYS: [&str; 27] = [
    "methods",
    "family",
    "a",
    "b1",
    "b2",
    "width",
    "index",
    "m",
    "n",
    "ar",
    "groups",
    "group_size",
    "group_var",
    "cross_corr",
    "grid",
    "kappa_l",
    "kappa_u",
    "zeta_l",
    "zeta_u",
    "nsim",
    "replicates",
    "alpha",
    "c",
    "block_exponent",
    "seed",
    "workers",
    "output",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Parses `key = value` lines into a map; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        let k = k.trim().to_string();
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "line {}: unknown key {k:?}",
                i + 1
            )));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::InvalidConfig(format!(
                "line {}: duplicate key {k:?}",
                i + 1
            )));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Applies `key = value` settings on top of `self`. The `output` key is
    /// accepted but ignored here (it belongs to the front end).
    pub fn apply(&mut self, settings: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in settings {
            match k.as_str() {
                "methods" => {
                    self.methods = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(Method::from_str)
                        .collect::<Result<_>>()?
                }
                "family" => self.family = v.trim().parse()?,
                "a" => self.a = parse_list(k, v)?,
                "b1" => self.b1 = parse_num(k, v)?,
                "b2" => self.b2 = parse_num(k, v)?,
                "width" => self.width = parse_list(k, v)?,
                "index" => self.index = parse_list(k, v)?,
                "m" => self.m = parse_num(k, v)?,
                "n" => self.n = parse_num(k, v)?,
                "ar" => self.ar = parse_num(k, v)?,
                "groups" => self.design.groups = parse_num(k, v)?,
                "group_size" => self.design.group_size = parse_num(k, v)?,
                "group_var" => self.design.group_var = parse_num(k, v)?,
                "cross_corr" => self.design.cross_corr = parse_num(k, v)?,
                "grid" => self.grid = v.parse()?,
                "kappa_l" => self.kappa_l = parse_num(k, v)?,
                "kappa_u" => self.kappa_u = parse_num(k, v)?,
                "zeta_l" => self.zeta_l = parse_num(k, v)?,
                "zeta_u" => self.zeta_u = parse_num(k, v)?,
                "nsim" => self.nsim = parse_num(k, v)?,
                "replicates" => self.replicates = parse_num(k, v)?,
                "alpha" => self.alpha = parse_num(k, v)?,
                "c" => self.c = parse_num(k, v)?,
                "block_exponent" => self.block_exponent = parse_num(k, v)?,
                "seed" => self.seed = parse_num(k, v)?,
                "workers" => self.workers = parse_num(k, v)?,
                "output" => {}
                other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_key_values(text)?)?;
        Ok(cfg)
    }

    /// Resolved settings as `key = value` text in canonical order. The
    /// worker count is left out: it does not influence any result.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put(
            "methods",
            join(&self.methods.iter().map(Method::name).collect::<Vec<_>>()),
        );
        put("family", self.family.name().to_string());
        put("a", join(&self.a));
        put("b1", self.b1.to_string());
        put("b2", self.b2.to_string());
        put("width", join(&self.width));
        put("index", join(&self.index));
        put("m", self.m.to_string());
        put("n", self.n.to_string());
        put("ar", self.ar.to_string());
        put("groups", self.design.groups.to_string());
        put("group_size", self.design.group_size.to_string());
        put("group_var", self.design.group_var.to_string());
        put("cross_corr", self.design.cross_corr.to_string());
        put("grid", self.grid.to_string());
        put("kappa_l", self.kappa_l.to_string());
        put("kappa_u", self.kappa_u.to_string());
        put("zeta_l", self.zeta_l.to_string());
        put("zeta_u", self.zeta_u.to_string());
        put("nsim", self.nsim.to_string());
        put("replicates", self.replicates.to_string());
        put("alpha", self.alpha.to_string());
        put("c", self.c.to_string());
        put("block_exponent", self.block_exponent.to_string());
        put("seed", self.seed.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no test methods selected".into()));
        }
        if self.nsim == 0 {
            return Err(Error::InvalidConfig("nsim must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        let paired = self.family != Family::Subinterval;
        if let Some(m) = self.methods.iter().find(|m| m.is_paired() != paired) {
            return Err(Error::InvalidConfig(format!(
                "method {} does not apply to the {} family",
                m.name(),
                self.family.name()
            )));
        }
        self.mean_config(BootstrapMode::IidResample).validate()?;
        self.grid.build()?;
        self.scenarios()?;
        Ok(())
    }

    /// The swept scenarios with their x-axis label and value.
    pub fn scenarios(&self) -> Result<Vec<(Scenario, &'static str, f64)>> {
        let out: Vec<_> = match self.family {
            Family::Subinterval if !self.width.is_empty() => {
                let [a] = self.a[..] else {
                    return Err(Error::InvalidConfig(
                        "a width sweep needs exactly one value of a".into(),
                    ));
                };
                self.width
                    .iter()
                    .map(|&j| {
                        let h = 0.08 * j as f64;
                        (
                            Scenario::Subinterval {
                                a,
                                b1: 0.5 - h,
                                b2: 0.5 + h,
                            },
                            "width",
                            j as f64,
                        )
                    })
                    .collect()
            }
            Family::Subinterval => self
                .a
                .iter()
                .map(|&a| {
                    (
                        Scenario::Subinterval {
                            a,
                            b1: self.b1,
                            b2: self.b2,
                        },
                        "a",
                        a,
                    )
                })
                .collect(),
            Family::FogartyNull => self
                .index
                .iter()
                .map(|&i| (Scenario::FogartyNull { index: i }, "index", i as f64))
                .collect(),
            Family::FogartyPower => self
                .index
                .iter()
                .map(|&i| (Scenario::FogartyPower { index: i }, "index", i as f64))
                .collect(),
        };
        if out.is_empty() {
            return Err(Error::InvalidConfig("no scenarios to run".into()));
        }
        let grid = self.grid.build()?;
        for (s, _, _) in &out {
            match *s {
                Scenario::Subinterval { a, b1, b2 } => {
                    mu2_subinterval(a, b1, b2, &grid)?;
                }
                _ => {
                    s.paired_functions(&grid)?;
                }
            }
        }
        Ok(out)
    }

    pub fn mean_config(&self, mode: BootstrapMode) -> MeanTestConfig {
        MeanTestConfig {
            alpha: self.alpha,
            replicates: self.replicates,
            c: self.c,
            mode,
        }
    }

    pub fn re_config(&self) -> RETestConfig {
        RETestConfig {
            alpha: self.alpha,
            replicates: self.replicates,
            c: self.c,
        }
    }

    pub fn mean_band(&self, grid: &Grid) -> Result<EquivalenceBand> {
        EquivalenceBand::constant(grid, self.kappa_l, self.kappa_u)
    }

    pub fn variance_band(&self, grid: &Grid) -> Result<EquivalenceBand> {
        EquivalenceBand::constant(grid, self.zeta_l, self.zeta_u)
    }
}

/// Data handed to a test method.
#[derive(Clone, Debug)]
pub enum TestInput {
    TwoSample(FunctionalSample, FunctionalSample),
    Paired(PairedRESample),
}

/// Result of any test method.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TestOutcome {
    MaxDeviation(TestResult),
    Tost(TostResult),
}

impl TestOutcome {
    /// `true` when equivalence is decided.
    pub fn equivalent(&self) -> bool {
        match self {
            TestOutcome::MaxDeviation(r) => r.reject_null,
            TestOutcome::Tost(r) => r.reject_null,
        }
    }
}

/// Applies one method to one dataset, with bands and tuning from `cfg`.
pub fn run_test(
    method: Method,
    input: &TestInput,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TestOutcome> {
    let mismatch = || {
        Error::InvalidConfig(format!(
            "method {} needs {} data",
            method.name(),
            if method.is_paired() {
                "paired"
            } else {
                "two-sample"
            }
        ))
    };
    match (method, input) {
        (Method::MeanIid | Method::MeanDependent, TestInput::TwoSample(s1, s2)) => {
            let band = cfg.mean_band(s1.grid())?;
            let mode = if method == Method::MeanIid {
                BootstrapMode::IidResample
            } else {
                BootstrapMode::MultiplierBlock(BlockLengths::Exponents(
                    cfg.block_exponent,
                    cfg.block_exponent,
                ))
            };
            Ok(TestOutcome::MaxDeviation(mean_test(
                s1,
                s2,
                &band,
                &cfg.mean_config(mode),
                seed,
            )?))
        }
        (Method::TostBootstrap | Method::TostAsymptotic, TestInput::TwoSample(s1, s2)) => {
            let band = cfg.mean_band(s1.grid())?;
            let variant = if method == Method::TostBootstrap {
                TostVariant::BootstrapPercentile
            } else {
                TostVariant::AsymptoticNormal
            };
            Ok(TestOutcome::Tost(tost_test(
                s1,
                s2,
                &band,
                cfg.alpha,
                cfg.replicates,
                variant,
                seed,
            )?))
        }
        (Method::ReMean, TestInput::Paired(d)) => Ok(TestOutcome::MaxDeviation(re_mean_test(
            d,
            &cfg.mean_band(d.grid())?,
            &cfg.re_config(),
            seed,
        )?)),
        (Method::ReVariance, TestInput::Paired(d)) => Ok(TestOutcome::MaxDeviation(
            re_variance_test(d, &cfg.variance_band(d.grid())?, &cfg.re_config(), seed)?,
        )),
        (Method::TostReMean, TestInput::Paired(d)) => Ok(TestOutcome::Tost(tost_re_mean(
            d,
            &cfg.mean_band(d.grid())?,
            cfg.alpha,
            cfg.replicates,
            seed,
        )?)),
        (Method::TostReVariance, TestInput::Paired(d)) => Ok(TestOutcome::Tost(tost_re_variance(
            d,
            &cfg.variance_band(d.grid())?,
            cfg.alpha,
            cfg.replicates,
            seed,
        )?)),
        _ => Err(mismatch()),
    }
}

/// Shared generation context of an experiment.
pub struct Generator {
    grid: Grid,
    process: BSplineProcess,
    cfg: ExperimentConfig,
}

impl Generator {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.grid.build()?;
        let process = BSplineProcess::standard(BSplineBasis::cubic21(&grid)?);
        Ok(Self {
            grid,
            process,
            cfg: cfg.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Dataset of run `run` for `scenario`.
    pub fn generate(&self, scenario: &Scenario, run: usize) -> Result<TestInput> {
        let data_seed = derive_seed(self.cfg.seed, tag::DATA, run as u64);
        match *scenario {
            Scenario::Subinterval { a, b1, b2 } => {
                let mu1 = GridFunction::constant(&self.grid, 0.0)?;
                let mu2 = mu2_subinterval(a, b1, b2, &self.grid)?;
                let s1 = dependent_curve_sample(
                    &mu1,
                    self.cfg.m,
                    &self.process,
                    self.cfg.ar,
                    derive_seed(data_seed, tag::DATA, 1),
                )?;
                let s2 = dependent_curve_sample(
                    &mu2,
                    self.cfg.n,
                    &self.process,
                    self.cfg.ar,
                    derive_seed(data_seed, tag::DATA, 2),
                )?;
                Ok(TestInput::TwoSample(s1, s2))
            }
            _ => {
                let (shift, ratio) = scenario.paired_functions(&self.grid)?;
                let model = REModel::from_shift_and_ratio(
                    surrogate_mu1(&self.grid),
                    surrogate_sigma2_1(&self.grid),
                    &shift,
                    &ratio,
                )?;
                Ok(TestInput::Paired(re_sample_gen(
                    &self.cfg.design,
                    &model,
                    &self.process,
                    data_seed,
                )?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub rejections: usize,
    /// `rejections / nsim`.
    pub rejection_rate: f64,
    /// `sqrt(rate (1 - rate) / nsim)`.
    pub se: f64,
    /// Mean wall-clock seconds per test; not part of the report body.
    #[serde(skip)]
    pub mean_runtime_secs: f64,
    /// Per-run decisions as a string of `1` (equivalence) and `0`.
    pub decisions: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub parameter: &'static str,
    pub value: f64,
    pub methods: Vec<MethodReport>,
}

impl ScenarioReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: String,
    pub seed: u64,
    pub nsim: usize,
    pub scenarios: Vec<ScenarioReport>,
}

impl ExperimentReport {
    /// Deterministic JSON body: everything except timings.
    pub fn body(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `scenario,parameter,value,method,rejection_rate,se,runtime_ms` rows.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("scenario,parameter,value,method,rejection_rate,se,runtime_ms\n");
        for sc in &self.scenarios {
            for m in &sc.methods {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:.3}",
                    sc.scenario.family(),
                    sc.parameter,
                    sc.value,
                    m.method.name(),
                    m.rejection_rate,
                    m.se,
                    1e3 * m.mean_runtime_secs
                );
            }
        }
        s
    }

    /// Plot data: the swept parameter, then one rejection-rate column per
    /// method.
    pub fn plot_csv(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.scenarios.first() else {
            return s;
        };
        let names: Vec<&str> = first.methods.iter().map(|m| m.method.name()).collect();
        let _ = writeln!(s, "{},{}", first.parameter, names.join(","));
        for sc in &self.scenarios {
            let rates: Vec<String> = sc
                .methods
                .iter()
                .map(|m| m.rejection_rate.to_string())
                .collect();
            let _ = writeln!(s, "{},{}", sc.value, rates.join(","));
        }
        s
    }

    /// Writes `report.json`, `results.csv` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.body())?;
        fs::write(dir.join("results.csv"), self.results_csv())?;
        fs::write(dir.join("plot.csv"), self.plot_csv())?;
        Ok(())
    }
}

struct RunRecord {
    decisions: Vec<bool>,
    secs: Vec<f64>,
}

fn run_one(
    gen: &Generator,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    run: usize,
) -> Result<RunRecord> {
    let input = gen.generate(scenario, run)?;
    let boot_seed = derive_seed(cfg.seed, tag::BOOTSTRAP, run as u64);
    let mut decisions = Vec::with_capacity(cfg.methods.len());
    let mut secs = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let outcome = run_test(method, &input, cfg, boot_seed)?;
        secs.push(start.elapsed().as_secs_f64());
        decisions.push(outcome.equivalent());
    }
    Ok(RunRecord { decisions, secs })
}

/// Runs the Monte Carlo experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let scenarios = cfg.scenarios()?;
    let gen = Generator::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;

    let mut reports = Vec::with_capacity(scenarios.len());
    for (scenario, parameter, value) in scenarios {
        let runs: Vec<RunRecord> = pool.install(|| {
            (0..cfg.nsim)
                .into_par_iter()
                .map(|k| {
                    run_one(&gen, cfg, &scenario, k).map_err(|e| Error::Run {
                        run: k,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()
        })?;
        let methods = cfg
            .methods
            .iter()
            .enumerate()
            .map(|(mi, &method)| {
                let decisions: String = runs
                    .iter()
                    .map(|r| if r.decisions[mi] { '1' } else { '0' })
                    .collect();
                let rejections = runs.iter().filter(|r| r.decisions[mi]).count();
                let rate = rejections as f64 / cfg.nsim as f64;
                MethodReport {
                    method,
                    rejections,
                    rejection_rate: rate,
                    se: (rate * (1.0 - rate) / cfg.nsim as f64).sqrt(),
                    mean_runtime_secs: runs.iter().map(|r| r.secs[mi]).sum::<f64>()
                        / cfg.nsim as f64,
                    decisions,
                }
            })
            .collect();
        reports.push(ScenarioReport {
            scenario,
            parameter,
            value,
            methods,
        });
    }
    Ok(ExperimentReport {
        config: cfg.echo(),
        seed: cfg.seed,
        nsim: cfg.nsim,
        scenarios: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config_and_echo_roundtrip() {
        let text = "# example\nmethods = mean-iid, tost-bootstrap\na = 0.204, 0.2\nnsim = 5 # few\nworkers = 3\n";
        let cfg = ExperimentConfig::from_key_values(text).unwrap();
        assert_eq!(cfg.a, vec![0.204, 0.2]);
        assert_eq!(cfg.nsim, 5);
        assert_eq!(cfg.workers, 3);
        let again = ExperimentConfig::from_key_values(&cfg.echo()).unwrap();
        assert_eq!(again.echo(), cfg.echo());
        assert!(!cfg.echo().contains("workers"));
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::from_key_values("nope = 1").is_err());
        assert!(ExperimentConfig::from_key_values("nsim = 1\nnsim = 2").is_err());
        assert!(ExperimentConfig::from_key_values("nsim").is_err());
        assert!(ExperimentConfig::from_key_values("methods = magic").is_err());
        let cfg = ExperimentConfig::from_key_values("methods = re-mean").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_key_values("nsim = 0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_key_values("width = 0, 1\na = 0.19, 0.2").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_key_values(
            "family = fogarty-null\nmethods = re-mean\nindex = 2",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn width_sweep_scenarios() {
        let cfg = ExperimentConfig::from_key_values("a = 0.194\nwidth = 0, 4").unwrap();
        let sc = cfg.scenarios().unwrap();
        assert_eq!(sc.len(), 2);
        assert_eq!(
            sc[0].0,
            Scenario::Subinterval {
                a: 0.194,
                b1: 0.5,
                b2: 0.5
            }
        );
        match sc[1].0 {
            Scenario::Subinterval { b1, b2, .. } => {
                assert!((b1 - 0.18).abs() < 1e-12 && (b2 - 0.82).abs() < 1e-12)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn small_experiment_is_consistent() {
        let cfg = ExperimentConfig::from_key_values(
            "a = 0.1\nm = 20\nn = 20\nnsim = 6\nreplicates = 50\ngrid = uniform:21\nworkers = 2",
        )
        .unwrap();
        let rep = run_experiment(&cfg).unwrap();
        let m = &rep.scenarios[0].methods[0];
        assert_eq!(m.decisions.len(), 6);
        assert_eq!(
            m.rejections,
            m.decisions.chars().filter(|&c| c == '1').count()
        );
        assert_eq!(m.rejection_rate, m.rejections as f64 / 6.0);
        assert!(rep.results_csv().lines().count() == 3);
        assert!(rep.plot_csv().starts_with("a,mean-iid,tost-bootstrap\n"));
    }
}
