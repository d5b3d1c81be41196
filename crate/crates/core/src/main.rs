use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use revclt::experiments::{run, run_report, Experiment, ExperimentConfig, CRITERIA};
use revclt::{BuiltinChain, Mode, Result};

#[derive(Parser)]
#[command(name = "revclt", version, about = "Slowly varying variance CLTs for reversible jump-or-stay chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact variance table, κ and normalised-increment distances.
    Analyze(Common),
    /// Seeded replicates of S_n.
    Simulate(Common),
    /// Martingale diagnostics over a grid of horizons.
    Martingale {
        #[command(flatten)]
        common: Common,
        /// Horizons, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_count, default_value = "1e3,1e4,1e5")]
        grid: Vec<u64>,
        /// Lindeberg truncation levels.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1.0")]
        eps: Vec<f64>,
    },
    /// Stable limit for the heavy-tailed example.
    Stable(Common),
    /// Holding-time law, H(y) and γ_m tables.
    Limits(Common),
    /// Evaluate acceptance criteria.
    Report {
        #[command(flatten)]
        common: Common,
        /// Criterion ids to evaluate (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
        /// Extra seeds for the robustness rerun of the Monte Carlo criteria.
        #[arg(long, value_delimiter = ',')]
        robustness_seeds: Vec<u64>,
    },
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainArg {
    Example1,
    Stable,
    ConstantP,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stepwise,
    Regenerative,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "example1")]
    chain: ChainArg,
    /// Tail index for the stable chain.
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Holding probability for the constant-p chain.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, value_parser = parse_count, default_value = "1e5")]
    n: u64,
    #[arg(long = "nmax", value_parser = parse_count, default_value = "1e6")]
    n_max: u64,
    #[arg(long, value_parser = parse_count, default_value = "4000")]
    reps: u64,
    /// Defaults to stepwise for small n and regenerative otherwise.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = revclt::experiments::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Accepts plain integers and exact scientific forms such as `1e6` or `2.5e3`.
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if x < 0.0 || x.fract() != 0.0 || x > 2f64.powi(53) {
        return Err(format!("'{s}' is not a nonnegative integer"));
    }
    Ok(x as u64)
}

impl Common {
    fn config(&self, experiment: Experiment) -> ExperimentConfig {
        let chain = match (experiment, self.chain) {
            (Experiment::Stable, _) | (_, ChainArg::Stable) => BuiltinChain::StableExample { alpha: self.alpha },
            (_, ChainArg::Example1) => BuiltinChain::Example1,
            (_, ChainArg::ConstantP) => BuiltinChain::ConstantP { c: self.c },
        };
        let mut cfg = ExperimentConfig::new(experiment, chain, &self.out);
        cfg.n = self.n;
        cfg.n_max = self.n_max;
        cfg.reps = self.reps;
        cfg.seed = self.seed;
        cfg.mode = self.mode.map(|m| match m {
            ModeArg::Stepwise => Mode::Stepwise,
            ModeArg::Regenerative => Mode::Regenerative,
        });
        cfg
    }
}

fn execute(cli: Cli) -> Result<Option<bool>> {
    let outcome = match cli.command {
        Command::Analyze(c) => run(&c.config(Experiment::Analyze))?,
        Command::Simulate(c) => run(&c.config(Experiment::Simulate))?,
        Command::Stable(c) => run(&c.config(Experiment::Stable))?,
        Command::Limits(c) => run(&c.config(Experiment::Limits))?,
        Command::Martingale { common, grid, eps } => {
            let mut cfg = common.config(Experiment::Martingale);
            cfg.n_grid = grid;
            cfg.eps = eps;
            run(&cfg)?
        }
        Command::Report { common, criteria, robustness_seeds } => {
            let cfg = common.config(Experiment::Report);
            cfg.validate()?;
            let ids = if criteria.is_empty() { CRITERIA.to_vec() } else { criteria };
            let outcome = run_report(&cfg, &ids, &robustness_seeds)?;
            for id in &ids {
                let c = &outcome.summary["criteria"][id.to_string()];
                let pass = c["pass"].as_bool().unwrap_or(false);
                println!(
                    "criterion {id:>2} {} {}",
                    if pass { "PASS" } else { "FAIL" },
                    c["title"].as_str().unwrap_or("")
                );
            }
            outcome
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| revclt::Error::File { path: config.display().to_string(), message: e.to_string() })?;
            let cfg = ExperimentConfig::from_json(&text)?;
            run(&cfg)?
        }
    };
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.all_pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(Some(false)) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_count;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("2.5e3"), Ok(2500));
        assert_eq!(parse_count("4000"), Ok(4000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-1").is_err());
        assert!(parse_count("x").is_err());
    }
}
