//! Spectral-Galerkin simulation and hypothesis auditing for stochastic
//! evolution equations in a Gelfand triple `V ⊆ H ⊆ V*`.
//!
//! Everything is generic over the floating point type through [`Scalar`];
//! the `*64` aliases below fix it to `f64`.

pub mod checker;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod noise;
pub mod scalar;
pub mod solver;
pub mod spectral;

pub use checker::{
    audit, check_chi_threshold, check_coercivity, check_condition, check_growth,
    check_hemicontinuity, check_local_monotonicity, check_noise, chi, chi_analysis, AuditSettings,
    ChiAnalysis, Condition, ConditionReport, MarginStats, Violation,
};
pub use diagnostics::{
    equicontinuity_statistic, galerkin_convergence, initial_data_continuity, log_log_fit,
    log_second_moment_trend, mean_se, moment_report, uniqueness_probe, validate_moment_exponent,
    DiagnosticRow, DiagnosticTable, ProbePair, RateFit,
};
pub use error::{Result, SpdeError};
pub use models::{HypothesisSpec, ModelKind, ModelParams, ModelSpec};
pub use noise::NoisePath;
pub use scalar::Scalar;
pub use solver::{
    energy_residual, path_noise, solve_ensemble, solve_ensemble_lenient, solve_path,
    step_explicit_tamed, step_semi_implicit, EnsembleSpec, Integrator, Stepper, Trajectory,
    TrajectoryEnsemble,
};
pub use spectral::{BasisKind, DualNormEstimate, GalerkinState, SpectralBasis, VNormKind};

pub type SpectralBasis64 = SpectralBasis<f64>;
pub type GalerkinState64 = GalerkinState<f64>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type HypothesisSpec64 = HypothesisSpec<f64>;
pub type NoisePath64 = NoisePath<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type TrajectoryEnsemble64 = TrajectoryEnsemble<f64>;
pub type ConditionReport64 = ConditionReport<f64>;
pub type DiagnosticTable64 = DiagnosticTable<f64>;
pub type EnsembleSpec64 = EnsembleSpec<f64>;

pub type SpectralBasis32 = SpectralBasis<f32>;
pub type GalerkinState32 = GalerkinState<f32>;
pub type ModelSpec32 = ModelSpec<f32>;
