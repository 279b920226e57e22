use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use equivcheck::config::RunConfig;
use equivcheck::metrics::MetricName;
use equivcheck::pipeline::{exit_code, run_pipeline, run_stage, Layout, RunOptions, Stage};
use equivcheck::synth::write_demo;
use equivcheck::Error;

/// Bayesian ROPE equivalence testing of two weighted pre-crash scenario
/// datasets.
///
/// Exit status: 0 equivalent (or stage succeeded), 10 not equivalent,
/// 11 configuration error, 12 missing upstream artifact, 20 other failure.
#[derive(Debug, Parser)]
#[command(name = "equivcheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the whole pipeline, or a single stage with --stage.
    Run {
        #[command(flatten)]
        common: Common,
        /// Only run this stage (extract, fit, stats, ks, ecdf, decide).
        #[arg(long, value_name = "NAME")]
        stage: Option<String>,
    },
    /// Extract metric tables from both scenario datasets.
    Extract(Common),
    /// Fit candidate models and select one per dataset and metric.
    Fit(Common),
    /// Compute statistic posteriors from the selected fits.
    Stats(Common),
    /// Apply ROPEs and the overall rule to persisted statistics.
    Decide(Common),
    /// Weighted two-sample KS tests on the metric tables.
    Ks(Common),
    /// Write weighted ECDF curves for every metric and dataset.
    Ecdf(Common),
    /// Generate the synthetic demo datasets and config.
    Demo {
        /// Directory to write reference.csv, candidate.csv and config.toml.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Seed for the scenario generator.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Scale applied to the candidate's closing speeds (1.0 = no shift).
        #[arg(long, default_value_t = 1.0)]
        shift: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; defaults to the config's out_dir, else `out`
    /// next to the config file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Restrict fit, stats and ecdf to one metric.
    #[arg(long, value_name = "NAME")]
    metric: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, value_name = "N", env = "EQUIVCHECK_JOBS", default_value_t = 0)]
    jobs: usize,
}

struct Prepared {
    cfg: RunConfig,
    layout: Layout,
    opts: RunOptions,
}

fn prepare(c: &Common) -> Result<Prepared, Error> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = match (&c.out, &cfg.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => cfg.resolve(Path::new("out")),
    };
    let metric = c.metric.as_deref().map(str::parse::<MetricName>).transpose()?;
    Ok(Prepared {
        cfg,
        layout: Layout::new(out),
        opts: RunOptions {
            metric,
            jobs: c.jobs,
        },
    })
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => error_code(source),
        Error::Config(_) => 11,
        Error::MissingArtifact { .. } => 12,
        _ => 20,
    }
}

fn stage_command(c: &Common, stage: Stage) -> Result<u8, Error> {
    let p = prepare(c)?;
    let report = run_stage(stage, &p.cfg, &p.layout, &p.opts)?;
    match report {
        Some(r) => {
            print!("{}", r.to_markdown());
            Ok(exit_code(&r) as u8)
        }
        None => {
            eprintln!("{} stage finished; artifacts in {}", stage.as_str(), p.layout.root.display());
            Ok(0)
        }
    }
}

fn execute(cmd: Command) -> anyhow::Result<u8> {
    let result = match cmd {
        Command::Run { common, stage } => match stage {
            Some(name) => Stage::parse(&name).and_then(|s| stage_command(&common, s)),
            None => prepare(&common).and_then(|p| {
                let r = run_pipeline(&p.cfg, &p.layout, &p.opts)?;
                print!("{}", r.to_markdown());
                eprintln!("report written to {}", p.layout.report_json().display());
                Ok(exit_code(&r) as u8)
            }),
        },
        Command::Extract(c) => stage_command(&c, Stage::Extract),
        Command::Fit(c) => stage_command(&c, Stage::Fit),
        Command::Stats(c) => stage_command(&c, Stage::Stats),
        Command::Decide(c) => stage_command(&c, Stage::Decide),
        Command::Ks(c) => stage_command(&c, Stage::Ks),
        Command::Ecdf(c) => stage_command(&c, Stage::Ecdf),
        Command::Demo { out, seed, shift } => {
            let cfg = write_demo(&out, seed, shift)
                .with_context(|| format!("writing demo data to {}", out.display()))?;
            eprintln!("demo config written to {}", cfg.display());
            return Ok(0);
        }
    };
    result.or_else(|e| {
        let code = error_code(&e);
        eprintln!("error: {:#}", anyhow::Error::from(e));
        Ok(code)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(20)
        }
    }
}
