use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use spde_cli::config::{AuditSection, BasisSection, ExperimentSection, ModelSection, RunSection};
use spde_cli::{
    load_config, run_with_threads, threads_from_env, Command, ConfigFile, StateSpec, EXIT_USAGE,
};
use spde_core::Stepper;

/// Spectral-Galerkin experiments for stochastic evolution equations.
///
/// Every flag overrides the matching field of the JSON config. SPDE_THREADS
/// caps the number of worker threads (0 = one per core).
#[derive(Debug, Parser)]
#[command(name = "spde", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// model.name
    #[arg(long)]
    model: Option<String>,
    /// basis.n_modes
    #[arg(long)]
    n_modes: Option<usize>,
    /// basis.grid_size
    #[arg(long)]
    grid_size: Option<usize>,
    /// run.dt
    #[arg(long)]
    dt: Option<f64>,
    /// run.t_end
    #[arg(long)]
    t_end: Option<f64>,
    /// run.save_dt
    #[arg(long)]
    save_dt: Option<f64>,
    /// run.M, the number of paths
    #[arg(long)]
    paths: Option<usize>,
    /// run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// run.stepper
    #[arg(long, value_parser = parse_stepper)]
    stepper: Option<Stepper>,
    /// experiment.alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// experiment.p, the moment exponent
    #[arg(long)]
    p: Option<f64>,
    /// experiment.x0: zero, e<k>, pow:<a> or a comma list
    #[arg(long)]
    x0: Option<StateSpec>,
    /// experiment.direction, same forms as --x0
    #[arg(long)]
    direction: Option<StateSpec>,
    /// experiment.deltas
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// experiment.levels
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// experiment.perturbations
    #[arg(long, value_delimiter = ',')]
    perturbations: Option<Vec<f64>>,
    /// experiment.coarsening
    #[arg(long, value_delimiter = ',')]
    coarsening: Option<Vec<usize>>,
    /// experiment.second_stepper
    #[arg(long, value_parser = parse_stepper)]
    second_stepper: Option<Stepper>,
    /// experiment.halve_second
    #[arg(long)]
    halve_second: Option<bool>,
    /// experiment.dump_noise
    #[arg(long)]
    dump_noise: Option<bool>,
    /// model.sigma
    #[arg(long)]
    sigma: Option<f64>,
    /// model.nu
    #[arg(long)]
    nu: Option<f64>,
    /// model.p, the p-Laplacian exponent
    #[arg(long)]
    model_p: Option<f64>,
    /// model.c
    #[arg(long)]
    model_c: Option<f64>,
    /// audit.n_samples
    #[arg(long)]
    samples: Option<usize>,
    /// audit.tol
    #[arg(long)]
    tol: Option<f64>,
    /// out_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_stepper(s: &str) -> Result<Stepper, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown stepper `{s}`"))
}

impl Cli {
    fn overrides(self) -> (Option<PathBuf>, ConfigFile) {
        let file = ConfigFile {
            command: Some(self.command),
            model: ModelSection {
                name: self.model,
                sigma: self.sigma,
                p: self.model_p,
                c: self.model_c,
                nu: self.nu,
            },
            basis: BasisSection {
                n_modes: self.n_modes,
                grid_size: self.grid_size,
            },
            run: RunSection {
                t_end: self.t_end,
                dt: self.dt,
                save_dt: self.save_dt,
                paths: self.paths,
                seed: self.seed,
                stepper: self.stepper,
            },
            audit: AuditSection {
                n_samples: self.samples,
                tol: self.tol,
                ..Default::default()
            },
            experiment: ExperimentSection {
                p: self.p,
                alpha: self.alpha,
                x0: self.x0,
                direction: self.direction,
                deltas: self.deltas,
                levels: self.levels,
                perturbations: self.perturbations,
                coarsening: self.coarsening,
                second_stepper: self.second_stepper,
                halve_second: self.halve_second,
                dump_noise: self.dump_noise,
            },
            out_dir: self.out,
        };
        (self.config, file)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (path, overrides) = cli.overrides();
    let config = match load_config(path.as_deref(), overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run_with_threads(&config, threads_from_env()) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("artifacts in {}", config.out_dir.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
