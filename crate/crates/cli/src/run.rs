use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use spde_core::{
    audit, chi_analysis, equicontinuity_statistic, galerkin_convergence, initial_data_continuity,
    mean_se, moment_report, path_noise, solve_ensemble_lenient, uniqueness_probe,
    DiagnosticTable64, EnsembleSpec64, ProbePair, SpdeError, SpectralBasis64, TrajectoryEnsemble64,
};

use crate::config::{Command, ExperimentConfig};
use crate::output::{self, OutputError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] SpdeError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot create {0}: {1}")]
    OutDir(String, std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(SpdeError::NonFiniteState { .. })
            | RunError::Output(OutputError::Core(SpdeError::NonFiniteState { .. })) => EXIT_BLOW_UP,
            _ => EXIT_USAGE,
        }
    }
}

/// What a command produced: the exit code and the printed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

#[derive(Serialize)]
struct Summary<'a, B: Serialize> {
    command: Command,
    config: &'a ExperimentConfig,
    exit_code: i32,
    #[serde(flatten)]
    body: B,
}

fn ensemble_spec(c: &ExperimentConfig) -> EnsembleSpec64 {
    EnsembleSpec64 {
        paths: c.run.paths,
        seed: c.run.seed,
        stepper: c.run.stepper,
        t_end: c.run.t_end,
        dt: c.run.dt,
        save_dt: c.run.save_dt,
    }
}

fn basis(c: &ExperimentConfig) -> Result<SpectralBasis64, SpdeError> {
    c.model.basis(c.n_modes, Some(c.grid_size))
}

fn x0(c: &ExperimentConfig) -> &[f64] {
    &c.experiment.x0[..c.n_modes]
}

/// `SPDE_THREADS`, with 0 or unset meaning one worker per core.
pub fn threads_from_env() -> usize {
    std::env::var("SPDE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs `config` on a pool of `threads` workers (0 = automatic).
pub fn run_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    pool.install(|| run(config))
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome, RunError> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| RunError::OutDir(config.out_dir.display().to_string(), e))?;
    match config.command {
        Command::Check => run_check(config),
        Command::Simulate => run_simulate(config),
        _ => run_diagnostic(config),
    }
}

fn finish<B: Serialize>(
    config: &ExperimentConfig,
    exit_code: i32,
    body: B,
    summary: String,
) -> Result<Outcome, RunError> {
    output::write_summary(
        &config.out_dir.join("summary.json"),
        &Summary {
            command: config.command,
            config,
            exit_code,
            body,
        },
    )?;
    Ok(Outcome { exit_code, summary })
}

fn run_check(c: &ExperimentConfig) -> Result<Outcome, RunError> {
    let b = basis(c)?;
    let reports = audit(&c.model, &b, &c.audit)?;
    output::write_condition_report(&c.out_dir.join("condition_report.csv"), &reports)?;
    let text = output::condition_text(&c.model_name, &reports);
    fs::write(c.out_dir.join("condition_report.txt"), &text).map_err(OutputError::from)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.condition.as_str())
        .collect();
    let code = if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    };

    #[derive(Serialize)]
    struct Body<'a> {
        conditions: Vec<(&'a str, usize, bool)>,
        failed: &'a [&'a str],
    }
    let body = Body {
        conditions: reports
            .iter()
            .map(|r| (r.condition.as_str(), r.n_violations, r.pass))
            .collect(),
        failed: &failed,
    };
    finish(c, code, body, text)
}

fn blow_up_note(ens: &TrajectoryEnsemble64) -> String {
    if ens.exploded.is_empty() {
        String::new()
    } else {
        format!(
            "  {} path(s) blew up: {:?}\n",
            ens.exploded.len(),
            ens.exploded
        )
    }
}

fn run_simulate(c: &ExperimentConfig) -> Result<Outcome, RunError> {
    let b = basis(c)?;
    let spec = ensemble_spec(c);
    if c.experiment.dump_noise {
        let noise = path_noise(&b, &spec, 0)?;
        let f = File::create(c.out_dir.join("noise_path0.bin")).map_err(OutputError::from)?;
        noise.write_dump(BufWriter::new(f))?;
    }
    let ens = solve_ensemble_lenient(&c.model, &b, x0(c), &spec)?;
    let mut summary = format!(
        "simulate {} n={} dt={} T={} M={} stepper={}\n",
        c.model_name,
        c.n_modes,
        c.run.dt,
        c.run.t_end,
        c.run.paths,
        c.run.stepper.as_str()
    );
    summary.push_str(&blow_up_note(&ens));

    #[derive(Serialize)]
    struct Body {
        written_path: Option<u64>,
        final_h_norm: Option<f64>,
        mean_final_h_norm_sq: Option<f64>,
        std_error: Option<f64>,
        exploded: Vec<u64>,
    }
    let mut body = Body {
        written_path: None,
        final_h_norm: None,
        mean_final_h_norm_sq: None,
        std_error: None,
        exploded: ens.exploded.clone(),
    };
    if let Some(tr) = ens.trajectories.first() {
        output::write_trajectory(&c.out_dir.join("trajectory.csv"), &c.model, &b, tr)?;
        let h = b.h_norm(&tr.last().coeffs);
        let sq: Vec<f64> = ens
            .trajectories
            .iter()
            .map(|t| b.h_norm(&t.last().coeffs).powi(2))
            .collect();
        let (mean, se) = mean_se(&sq);
        summary.push_str(&format!(
            "  path {} final |X|_H = {h:.6e}\n  E|X(T)|_H^2 = {mean:.6e} +- {se:.2e}\n",
            tr.path_id
        ));
        body.written_path = Some(tr.path_id);
        body.final_h_norm = Some(h);
        body.mean_final_h_norm_sq = Some(mean);
        body.std_error = Some(se);
    }
    let code = if ens.exploded.is_empty() {
        EXIT_OK
    } else {
        EXIT_BLOW_UP
    };
    finish(c, code, body, summary)
}

fn run_diagnostic(c: &ExperimentConfig) -> Result<Outcome, RunError> {
    let b = basis(c)?;
    let spec = ensemble_spec(c);
    let e = &c.experiment;
    let mut chi = None;
    let table: DiagnosticTable64 = match c.command {
        Command::Moments => {
            if c.model.hypothesis.l_a.is_some() && c.model.hypothesis.l_b.is_some() {
                chi = Some(chi_analysis(&c.model.hypothesis, c.model.alpha)?);
            }
            let ens = solve_ensemble_lenient(&c.model, &b, x0(c), &spec)?;
            moment_report(&c.model, &b, &ens, e.p, e.alpha)?
        }
        Command::Equicontinuity => {
            let ens = solve_ensemble_lenient(&c.model, &b, x0(c), &spec)?;
            equicontinuity_statistic(&ens, &e.deltas, e.alpha)?
        }
        Command::Converge => galerkin_convergence(&c.model, &e.x0, &e.levels, &spec, e.alpha)?,
        Command::Continuity => initial_data_continuity(
            &c.model,
            &b,
            x0(c),
            &e.direction,
            &e.perturbations,
            e.p,
            &spec,
        )?,
        Command::Uniqueness => {
            let pair = ProbePair {
                first: c.run.stepper,
                second: e.second_stepper,
                halve_second: e.halve_second,
            };
            uniqueness_probe(&c.model, &b, x0(c), pair, &e.coarsening, &spec)?
        }
        Command::Check | Command::Simulate => unreachable!("dispatched elsewhere"),
    };
    let name = c.command.as_str();
    output::write_table(&c.out_dir.join(format!("{name}.csv")), &table)?;

    let mut summary = format!(
        "{name} {} n={} M={}\n",
        c.model_name, c.n_modes, c.run.paths
    );
    summary.push_str(&format!(
        "  {:<14} {:>14} {:>12} {:>6}\n",
        "key", "estimate", "std_error", "M"
    ));
    for r in &table.rows {
        summary.push_str(&format!(
            "  {:<14} {:>14.6e} {:>12.3e} {:>6}\n",
            r.key, r.estimate, r.std_error, r.m
        ));
    }
    if let Some(f) = &table.fitted_rate {
        summary.push_str(&format!("  fitted slope {:.4} (r2 {:.4})\n", f.slope, f.r2));
    }
    if let Some(a) = &chi {
        summary.push_str(&format!(
            "  chi {} threshold {} admissible p < {}\n",
            a.chi, a.threshold, a.p_upper
        ));
    }
    if table.exploded > 0 {
        summary.push_str(&format!(
            "  {} path(s) blew up and were dropped\n",
            table.exploded
        ));
    }
    let code = if table.exploded > 0 {
        EXIT_BLOW_UP
    } else {
        EXIT_OK
    };

    #[derive(Serialize)]
    struct Body<'a> {
        table: &'a DiagnosticTable64,
        chi: Option<spde_core::ChiAnalysis<f64>>,
    }
    finish(c, code, Body { table: &table, chi }, summary)
}

/// Paths of the CSV artifacts a command writes, relative to `out_dir`.
pub fn csv_artifacts(command: Command) -> Vec<String> {
    match command {
        Command::Check => vec!["condition_report.csv".into()],
        Command::Simulate => vec!["trajectory.csv".into()],
        other => vec![format!("{}.csv", other.as_str())],
    }
}

pub fn read_artifacts(dir: &Path, command: Command) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    csv_artifacts(command)
        .into_iter()
        .map(|name| fs::read(dir.join(&name)).map(|bytes| (name, bytes)))
        .collect()
}
