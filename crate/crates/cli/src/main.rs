use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlk_core::experiment::{self, ExperimentConfig, ModelName, Overrides};
use nlk_core::learning::FittedParams;
use nlk_core::Result;

/// Learn nonlocal transport kernels from particle-tracking data.
#[derive(Parser)]
#[command(name = "nlk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the flow, track particles and write breakthrough curves.
    Generate(Common),
    /// Fit the configured models on the training window.
    Learn(Common),
    /// Predict with saved fits and score them per location.
    Predict(Common),
    /// Run any missing stage and print the MSE table.
    Report(Common),
    /// Refit over the configured training windows and location sets.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the end of the training window.
    #[arg(long)]
    tt: Option<f64>,
    /// Restrict to these models (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let models = if self.model.is_empty() {
            None
        } else {
            Some(self.model.iter().map(|m| ModelName::parse(m)).collect::<Result<Vec<_>>>()?)
        };
        ExperimentConfig::load(&self.config)?.apply(&Overrides {
            seed: self.seed,
            tt: self.tt,
            models,
            output_dir: self.out.clone(),
        })
    }
}

fn describe(params: &FittedParams) -> String {
    match params {
        FittedParams::Nonlocal { kernel } => format!(
            "p = {:.4}, phi = [{}]",
            kernel.p(),
            kernel.phi().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
        ),
        FittedParams::Fractal(f) => format!("D = {:.4e}, q = {:.4}", f.d_bar, f.q),
        FittedParams::Classical(c) => format!("D0 = {:.4e}", c.d0),
        FittedParams::Mlp(net) => format!("{} weights", net.num_parameters()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            let g = experiment::run_generate(&cfg)?;
            let m = &g.dataset.meta;
            println!("wrote {}", cfg.output_dir.display());
            println!("frame speed {:.4} ({:?}), measured drift {:.4}", m.frame_speed, m.frame, m.measured_drift);
            if let Some(s) = m.msd_slope {
                println!("particle MSD log-log slope {s:.3}");
            }
            for c in &g.dataset.curves {
                println!("x = {:<8} peak {:.4}", c.location, c.peak());
            }
        }
        Command::Learn(c) => {
            let cfg = c.load()?;
            for f in experiment::run_learn(&cfg)? {
                println!("{:<10} training MSE {:.3e}  {}", f.model.as_str(), f.training_mse, describe(&f.params));
            }
        }
        Command::Predict(c) => print!("{}", experiment::run_predict(&c.load()?)?.summary()),
        Command::Report(c) => print!("{}", experiment::run_report(&c.load()?)?.summary()),
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let rows = experiment::run_sweep(&cfg)?;
            println!("{} rows written to {}", rows.len(), cfg.output_dir.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
