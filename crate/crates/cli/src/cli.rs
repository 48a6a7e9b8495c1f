//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mtsurv::analysis::VimpConfig;
use mtsurv::dataio::SplitFractions;

use crate::commands::{cmd_curves, cmd_prep, cmd_run, cmd_search, cmd_vimp, resolve_out};
use crate::config::{ExperimentConfig, ModelKind};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mtsurv", version, about = "Survival models with a Cox bottleneck and a ranked survival head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, split and encode a dataset; write encoded.csv and manifest.json.
    Prep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit or train a model on one or more splits and write a metric report.
    Run(RunArgs),
    /// Random hyperparameter search scored on validation C-index.
    Search {
        #[command(flatten)]
        common: RunArgs,
        /// Parallel trials (defaults to the number of CPUs).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the trial budget.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Kaplan-Meier, AUROC and median-survival curves for a fitted model.
    Curves {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_svg: bool,
    },
    /// Perturbation variable importance on the test split.
    Vimp {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Experiment config whose [vimp] table supplies the settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub splits: Option<usize>,
    /// Override the model kind (cox, mlp-efron, mlp-rank, mlp-efron-rank).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_svg: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.splits {
            cfg.splits = n;
        }
        if let Some(m) = &self.model {
            cfg.model = ModelKind::parse(m)
                .ok_or_else(|| CliError::Usage(format!("unknown model kind '{m}'")))?;
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: Vec<OsString>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.trim_end().trim_start_matches("error: ");
            return Err(CliError::Usage(msg.to_string()));
        }
    };
    match cli.command {
        Command::Prep { spec, seed, out } => {
            let out = resolve_out(out, None);
            let prep = cmd_prep(&spec, SplitFractions::default(), seed, &out)?;
            println!("{}", serde_json::to_string(&prep.fingerprint)?);
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            let out = resolve_out(args.out.clone(), Some(&cfg));
            let outcome = cmd_run(&cfg, &out, !args.no_svg)?;
            let s = outcome.report.test_cindex;
            println!(
                "{} {}: test C-index mean {} sd {} over {} split(s)",
                outcome.report.dataset,
                cfg.model.name(),
                fmt_opt(s.mean),
                fmt_opt(s.sd),
                s.n
            );
        }
        Command::Search {
            common,
            workers,
            trials,
        } => {
            let mut cfg = common.config()?;
            if let Some(t) = trials {
                cfg.search.trials = t;
            }
            let out = resolve_out(common.out.clone(), Some(&cfg));
            let workers = workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            });
            let report = cmd_search(&cfg, &out, workers)?;
            println!(
                "best trial {} of {}: validation C-index {:.4}, test C-index {}",
                report.best,
                report.trials.len(),
                report.best_validation_cindex,
                fmt_opt(report.best_test_cindex)
            );
        }
        Command::Curves {
            artifact,
            spec,
            out,
            no_svg,
        } => cmd_curves(&artifact, &spec, &resolve_out(out, None), !no_svg)?,
        Command::Vimp {
            artifact,
            spec,
            config,
            seed,
            repetitions,
            out,
        } => {
            let mut vc = match &config {
                Some(p) => ExperimentConfig::load(p)?.vimp,
                None => VimpConfig::default(),
            };
            if let Some(s) = seed {
                vc.seed = s;
            }
            if let Some(r) = repetitions {
                vc.repetitions = r;
            }
            let report = cmd_vimp(&artifact, &spec, &vc, &resolve_out(out, None))?;
            for e in report.entries.iter().take(10) {
                println!("{:>24} {:+.5} (sd {:.5})", e.feature, e.vimp, e.vimp_sd);
            }
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}
