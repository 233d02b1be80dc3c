use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fdequiv::harness::{
    parse_key_values, run_experiment, run_test, ExperimentConfig, Generator, Method, TestInput,
};
use fdequiv::io;

/// Max-deviation equivalence tests for functional data.
///
/// Exit codes: 0 = success (for `test`: equivalence decided),
/// 1 = `test` did not decide equivalence, 2 = error.
#[derive(Parser)]
#[command(name = "fdequiv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a single dataset read from CSV.
    Test {
        /// First sample (grid row, then one curve per row).
        #[arg(long, requires = "sample2", conflicts_with = "paired")]
        sample1: Option<PathBuf>,
        /// Second sample.
        #[arg(long, requires = "sample1")]
        sample2: Option<PathBuf>,
        /// Paired random-effects sample (device,group,index,t...).
        #[arg(long)]
        paired: Option<PathBuf>,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run a Monte Carlo size/power experiment.
    Simulate {
        /// Output directory for report.json, results.csv and plot.csv.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write the synthetic datasets of one simulation run to CSV.
    Gen {
        /// Output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Simulation run whose datasets are written.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[command(flatten)]
        settings: Settings,
    },
}

/// Experiment settings. Precedence: flag, then config file, then default.
#[derive(Args)]
struct Settings {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated test methods.
    #[arg(long)]
    methods: Option<String>,
    /// subinterval | fogarty-null | fogarty-power.
    #[arg(long)]
    family: Option<String>,
    /// Plateau height(s), comma-separated.
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b1: Option<String>,
    #[arg(long)]
    b2: Option<String>,
    /// Plateau-width sweep values j.
    #[arg(long)]
    width: Option<String>,
    /// Paired scenario number(s).
    #[arg(long)]
    index: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// AR(1) coefficient of the two-sample curves.
    #[arg(long)]
    ar: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    group_size: Option<String>,
    #[arg(long)]
    group_var: Option<String>,
    #[arg(long)]
    cross_corr: Option<String>,
    /// uniform:<p> or midpoints:<p>.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_l: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_u: Option<String>,
    #[arg(long)]
    zeta_l: Option<String>,
    #[arg(long)]
    zeta_u: Option<String>,
    #[arg(long)]
    nsim: Option<String>,
    /// Bootstrap replicates.
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Extremal-set constant.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    block_exponent: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads.
    #[arg(long, env = "FDEQUIV_WORKERS")]
    workers: Option<String>,
}

impl Settings {
    fn overrides(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("methods", &self.methods),
            ("family", &self.family),
            ("a", &self.a),
            ("b1", &self.b1),
            ("b2", &self.b2),
            ("width", &self.width),
            ("index", &self.index),
            ("m", &self.m),
            ("n", &self.n),
            ("ar", &self.ar),
            ("groups", &self.groups),
            ("group_size", &self.group_size),
            ("group_var", &self.group_var),
            ("cross_corr", &self.cross_corr),
            ("grid", &self.grid),
            ("kappa_l", &self.kappa_l),
            ("kappa_u", &self.kappa_u),
            ("zeta_l", &self.zeta_l),
            ("zeta_u", &self.zeta_u),
            ("nsim", &self.nsim),
            ("replicates", &self.replicates),
            ("alpha", &self.alpha),
            ("c", &self.c),
            ("block_exponent", &self.block_exponent),
            ("seed", &self.seed),
            ("workers", &self.workers),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    /// Resolved config plus the `output` entry of the config file, if any.
    fn resolve(&self) -> anyhow::Result<(ExperimentConfig, Option<PathBuf>)> {
        let mut cfg = ExperimentConfig::default();
        let mut output = None;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let file = parse_key_values(&text).with_context(|| path.display().to_string())?;
            cfg.apply(&file)
                .with_context(|| path.display().to_string())?;
            output = file.get("output").map(PathBuf::from);
        }
        cfg.apply(&self.overrides())?;
        Ok((cfg, output))
    }
}

fn emit(json: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(p) => fs::write(p, json).with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn test_cmd(
    sample1: Option<PathBuf>,
    sample2: Option<PathBuf>,
    paired: Option<PathBuf>,
    output: Option<PathBuf>,
    settings: &Settings,
) -> anyhow::Result<bool> {
    let (cfg, _) = settings.resolve()?;
    let [method] = cfg.methods[..] else {
        bail!("`test` needs exactly one method, got {}", cfg.methods.len());
    };
    let input = match (sample1, sample2, paired) {
        (Some(p1), Some(p2), None) => {
            TestInput::TwoSample(io::read_sample(&p1)?, io::read_sample(&p2)?)
        }
        (None, None, Some(p)) => TestInput::Paired(io::read_paired(&p)?),
        _ => bail!("give either --sample1 and --sample2, or --paired"),
    };
    let outcome = run_test(method, &input, &cfg, cfg.seed)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "method": method,
        "seed": cfg.seed,
        "equivalent": outcome.equivalent(),
        "result": outcome,
    }))?;
    emit(&json, output.as_deref())?;
    Ok(outcome.equivalent())
}

fn simulate_cmd(output: Option<PathBuf>, settings: &Settings) -> anyhow::Result<()> {
    let (cfg, file_output) = settings.resolve()?;
    let report = run_experiment(&cfg)?;
    match output.or(file_output) {
        Some(dir) => {
            report.write(&dir)?;
            print!("{}", report.results_csv());
        }
        None => print!("{}", report.body()),
    }
    Ok(())
}

fn gen_cmd(output: Option<PathBuf>, run: usize, settings: &Settings) -> anyhow::Result<()> {
    let (mut cfg, file_output) = settings.resolve()?;
    // Only the scenario matters here; accept any method list.
    let paired = cfg.family != fdequiv::harness::Family::Subinterval;
    cfg.methods = Method::ALL
        .into_iter()
        .filter(|m| m.is_paired() == paired)
        .collect();
    cfg.validate()?;
    let dir = output.or(file_output).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let gen = Generator::new(&cfg)?;
    for (scenario, parameter, value) in cfg.scenarios()? {
        let stem = format!("{}-{parameter}{value}-run{run}", scenario.family());
        match gen.generate(&scenario, run)? {
            TestInput::TwoSample(s1, s2) => {
                let (p1, p2) = (
                    dir.join(format!("{stem}-1.csv")),
                    dir.join(format!("{stem}-2.csv")),
                );
                io::write_sample(&p1, &s1)?;
                io::write_sample(&p2, &s2)?;
                println!("{}\n{}", p1.display(), p2.display());
            }
            TestInput::Paired(d) => {
                let p = dir.join(format!("{stem}.csv"));
                io::write_paired(&p, &d)?;
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test {
            sample1,
            sample2,
            paired,
            output,
            settings,
        } => test_cmd(sample1, sample2, paired, output, &settings),
        Command::Simulate { output, settings } => simulate_cmd(output, &settings).map(|_| true),
        Command::Gen {
            output,
            run,
            settings,
        } => gen_cmd(output, run, &settings).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
