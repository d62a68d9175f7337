use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liouville_cli::report::{emit_plotdata, read_ledger};
use liouville_cli::{run_to_dir, CliError, Experiment, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "liouville", version, about = "Monte Carlo experiments for Liouville correlation functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its ledger.
    Run(Box<RunArgs>),
    /// Turn a ledger CSV into tidy plot series.
    Plotdata {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    experiment: Experiment,
    /// `key = value` or JSON config file, applied over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    t: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    x: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    n_theta: Option<String>,
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    substeps: Option<String>,
    #[arg(long)]
    cutoff: Option<String>,
    /// 0 uses every core.
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Any other key, including thresholds, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let c = ExperimentConfig::load(path, Some(self.experiment))?;
                if c.experiment != self.experiment {
                    return Err(CliError::Config(format!(
                        "config file is for {}, not {}",
                        c.experiment, self.experiment
                    )));
                }
                c
            }
            None => ExperimentConfig::defaults(self.experiment),
        };
        let flags = [
            ("gamma", &self.gamma),
            ("mu", &self.mu),
            ("alpha", &self.alpha),
            ("r", &self.r),
            ("nu", &self.nu),
            ("t", &self.t),
            ("x", &self.x),
            ("b", &self.b),
            ("n", &self.n),
            ("seed_base", &self.seed),
            ("steps", &self.steps),
            ("n_theta", &self.n_theta),
            ("modes", &self.modes),
            ("substeps", &self.substeps),
            ("cutoff", &self.cutoff),
            ("threads", &self.threads),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
            c.set(k.trim(), v.trim())?;
        }
        if let Ok(seed) = std::env::var("LIOUVILLE_SEED") {
            c.set("seed_base", &seed)?;
        }
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let (report, artifacts) = run_to_dir(&config, &config.out)?;
            println!("{} config {} seed {}", report.experiment, report.config_digest, report.seed_base);
            for v in &report.verdicts {
                println!("{v}");
            }
            println!("ledger {}", artifacts.ledger.display());
            Ok(report.all_pass())
        }
        Command::Plotdata { ledger, out } => {
            let bytes = std::fs::read(&ledger)?;
            let (experiment, records) = read_ledger(&bytes)?;
            let plot = emit_plotdata(experiment, &records)?;
            std::fs::write(&out, plot.csv)?;
            if let Some(fit) = plot.sidecar {
                let side = out.with_extension("fit.json");
                std::fs::write(&side, serde_json::to_string_pretty(&fit).expect("fit serializes"))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    // `liouville <experiment>` is short for `liouville run <experiment>`
    if args.get(1).is_some_and(|a| a.parse::<Experiment>().is_ok()) {
        args.insert(1, "run".to_string());
    }
    let cli = Cli::parse_from(args);
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
