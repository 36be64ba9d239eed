//! Monte Carlo experiments on Galerkin ensembles: moment bounds, time-shift
//! equicontinuity, convergence in `n` under common noise, continuity in the
//! initial datum and dt-refinement probes.
//!
//! Suprema are taken over the save grid and time integrals use the trapezoid
//! rule on it.

use rayon::prelude::*;
use serde::Serialize;

use crate::checker::chi_analysis;
use crate::error::{Result, SpdeError};
use crate::models::ModelSpec;
use crate::noise::NoisePath;
use crate::scalar::Scalar;
use crate::solver::{
    integer_ratio, path_noise, solve_path, EnsembleSpec, Stepper, Trajectory, TrajectoryEnsemble,
};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow<T> {
    pub key: String,
    /// Abscissa used by the rate fit (δ, n, ε or dt).
    pub x: T,
    pub estimate: T,
    pub std_error: T,
    #[serde(rename = "M")]
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r2: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticTable<T> {
    pub experiment: String,
    pub rows: Vec<DiagnosticRow<T>>,
    pub fitted_rate: Option<RateFit<T>>,
    pub exploded: usize,
    pub notes: Vec<String>,
}

impl<T: Scalar> DiagnosticTable<T> {
    fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.into(),
            rows: Vec::new(),
            fitted_rate: None,
            exploded: 0,
            notes: Vec::new(),
        }
    }

    fn push(&mut self, key: String, x: T, samples: &[T]) {
        let (estimate, std_error) = mean_se(samples);
        self.rows.push(DiagnosticRow {
            key,
            x,
            estimate,
            std_error,
            m: samples.len(),
        });
    }

    pub fn row(&self, key: &str) -> Option<&DiagnosticRow<T>> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn estimates(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.estimate).collect()
    }
}

/// Sample mean and `sd/√M` with the unbiased variance.
pub fn mean_se<T: Scalar>(samples: &[T]) -> (T, T) {
    let m = samples.len();
    if m == 0 {
        return (T::nan(), T::nan());
    }
    let n = T::from_usize_lossy(m);
    let mean = samples.iter().copied().sum::<T>() / n;
    if m == 1 {
        return (mean, T::zero());
    }
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Least squares fit of `ln y` against `ln x`; `None` unless every point is positive.
pub fn log_log_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Option<RateFit<T>> {
    if xs.len() < 2
        || xs.len() != ys.len()
        || xs
            .iter()
            .chain(ys)
            .any(|&v| !(v > T::zero()) || !v.is_finite())
    {
        return None;
    }
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Option<RateFit<T>> {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let syy: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == T::zero() {
        T::one()
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(RateFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

fn trapezoid<T: Scalar>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            h * (values[1..n - 1].iter().copied().sum::<T>()
                + (values[0] + values[n - 1]) / T::lit(2.0))
        }
    }
}

/// `‖a − b‖_H` after zero-padding the shorter coefficient vector.
pub fn padded_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            let d = a.get(k).copied().unwrap_or(T::zero()) - b.get(k).copied().unwrap_or(T::zero());
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// Rejects `p` outside `[2, ∞)`, or outside `[2, 1 + 2L_A/L_B)` when the model declares `L_A`, `L_B`.
pub fn validate_moment_exponent<T: Scalar>(model: &ModelSpec<T>, p: T) -> Result<()> {
    let upper = match (model.hypothesis.l_a, model.hypothesis.l_b) {
        (Some(_), Some(_)) => {
            let chi = chi_analysis(&model.hypothesis, model.alpha)?;
            if !chi.pass {
                return Err(SpdeError::InadmissibleP {
                    p: p.as_f64(),
                    upper: 2.0,
                });
            }
            chi.p_upper
        }
        _ => T::infinity(),
    };
    if !(p >= T::lit(2.0) && p < upper) {
        return Err(SpdeError::InadmissibleP {
            p: p.as_f64(),
            upper: upper.as_f64(),
        });
    }
    Ok(())
}

/// Rows `sup_h_p` (`E sup_t ‖X‖_H^p`) and `int_v_alpha` (`E(∫‖X‖_V^α dt)^{p/2}`).
pub fn moment_report<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    ensemble: &TrajectoryEnsemble<T>,
    p: T,
    alpha: T,
) -> Result<DiagnosticTable<T>> {
    validate_moment_exponent(model, p)?;
    let mut sups = Vec::with_capacity(ensemble.len());
    let mut ints = Vec::with_capacity(ensemble.len());
    for tr in &ensemble.trajectories {
        let sup = tr
            .states
            .iter()
            .map(|s| basis.h_norm(&s.coeffs))
            .fold(T::zero(), T::max);
        sups.push(sup.powf(p));
        let v: Vec<T> = tr
            .states
            .iter()
            .map(|s| model.v_norm(basis, &s.coeffs).map(|x| x.powf(alpha)))
            .collect::<Result<_>>()?;
        ints.push(trapezoid(&v, tr.save_dt).powf(p / T::lit(2.0)));
    }
    let mut table = DiagnosticTable::new("moments");
    table.push("sup_h_p".into(), p, &sups);
    table.push("int_v_alpha".into(), alpha, &ints);
    table.exploded = ensemble.exploded.len();
    Ok(table)
}

/// `∫₀^{T−δ} ‖X(t+δ) − X(t)‖_H^α dt` for one trajectory, `δ = shift · save_dt`.
fn shift_integral<T: Scalar>(tr: &Trajectory<T>, shift: usize, alpha: T) -> T {
    let s = &tr.states;
    let vals: Vec<T> = (0..s.len() - shift)
        .map(|i| padded_distance(&s[i + shift].coeffs, &s[i].coeffs).powf(alpha))
        .collect();
    trapezoid(&vals, tr.save_dt)
}

pub fn equicontinuity_statistic<T: Scalar>(
    ensemble: &TrajectoryEnsemble<T>,
    deltas: &[T],
    alpha: T,
) -> Result<DiagnosticTable<T>> {
    let first = ensemble
        .trajectories
        .first()
        .ok_or_else(|| SpdeError::InvalidExperiment("empty ensemble".into()))?;
    let save_dt = first.save_dt;
    let horizon = T::from_usize_lossy(first.states.len() - 1) * save_dt;
    let mut table = DiagnosticTable::new("equicontinuity");
    for &delta in deltas {
        let shift = integer_ratio(delta, save_dt, "delta / save_dt").map_err(|_| {
            SpdeError::InvalidDelta(format!(
                "{} is not a positive multiple of save_dt = {}",
                delta, save_dt
            ))
        })?;
        if shift + 1 > first.states.len() - 1 {
            return Err(SpdeError::InvalidDelta(format!(
                "{delta} leaves no room inside [0, {horizon}]"
            )));
        }
        let samples: Vec<T> = ensemble
            .trajectories
            .iter()
            .map(|tr| shift_integral(tr, shift, alpha))
            .collect();
        table.push(format!("{delta}"), delta, &samples);
    }
    let xs: Vec<T> = table.rows.iter().map(|r| r.x).collect();
    table.fitted_rate = log_log_fit(&xs, &table.estimates());
    table.exploded = ensemble.exploded.len();
    Ok(table)
}

/// `E ∫₀ᵀ ‖X_n − X_{2n}‖_H^α dt` for adjacent levels, all driven by truncations of one noise path.
pub fn galerkin_convergence<T: Scalar>(
    model: &ModelSpec<T>,
    x0: &[T],
    levels: &[usize],
    spec: &EnsembleSpec<T>,
    alpha: T,
) -> Result<DiagnosticTable<T>> {
    if levels.len() < 2 {
        return Err(SpdeError::InvalidExperiment(
            "need at least two levels".into(),
        ));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) || levels[0] == 0 {
        return Err(SpdeError::InvalidExperiment(format!(
            "levels must double: {levels:?}"
        )));
    }
    let bases: Vec<SpectralBasis<T>> = levels
        .iter()
        .map(|&n| model.basis(n, None))
        .collect::<Result<_>>()?;
    let finest = bases.last().expect("at least two levels");
    let per_path: Vec<Result<Vec<T>>> = (0..spec.paths as u64)
        .into_par_iter()
        .map(|id| {
            let noise = path_noise(finest, spec, id)?;
            let trs: Vec<Trajectory<T>> = bases
                .iter()
                .map(|b| {
                    let n = b.n_modes();
                    let driver = noise.truncate(n)?;
                    solve_path(
                        model,
                        b,
                        x0,
                        &driver,
                        spec.stepper,
                        spec.t_end,
                        spec.save_dt,
                    )
                })
                .collect::<Result<_>>()?;
            Ok(trs
                .windows(2)
                .map(|w| {
                    let vals: Vec<T> = w[0]
                        .states
                        .iter()
                        .zip(&w[1].states)
                        .map(|(a, b)| padded_distance(&a.coeffs, &b.coeffs).powf(alpha))
                        .collect();
                    trapezoid(&vals, spec.save_dt)
                })
                .collect())
        })
        .collect();
    let mut errors = vec![Vec::with_capacity(spec.paths); levels.len() - 1];
    let mut exploded = 0;
    for r in per_path {
        match r {
            Ok(e) => {
                for (slot, v) in errors.iter_mut().zip(e) {
                    slot.push(v);
                }
            }
            Err(SpdeError::NonFiniteState { .. }) => exploded += 1,
            Err(e) => return Err(e),
        }
    }
    let mut table = DiagnosticTable::new("convergence");
    for (i, samples) in errors.iter().enumerate() {
        table.push(
            format!("{}-{}", levels[i], levels[i + 1]),
            T::from_usize_lossy(levels[i]),
            samples,
        );
    }
    let xs: Vec<T> = table.rows.iter().map(|r| r.x).collect();
    table.fitted_rate = log_log_fit(&xs, &table.estimates());
    table.exploded = exploded;
    Ok(table)
}

/// `E sup_t ‖X(·, x + ε d) − X(·, x)‖_H^p` per `ε`, with common noise across each pair.
#[allow(clippy::too_many_arguments)]
pub fn initial_data_continuity<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x: &[T],
    direction: &[T],
    perturbations: &[T],
    p: T,
    spec: &EnsembleSpec<T>,
) -> Result<DiagnosticTable<T>> {
    if perturbations
        .iter()
        .any(|&e| e < T::zero() || !e.is_finite())
    {
        return Err(SpdeError::InvalidExperiment(
            "perturbation sizes must be finite and nonnegative".into(),
        ));
    }
    let n = basis.n_modes();
    let per_path: Vec<Result<Vec<T>>> = (0..spec.paths as u64)
        .into_par_iter()
        .map(|id| {
            let noise = path_noise(basis, spec, id)?;
            let base = solve_path(
                model,
                basis,
                x,
                &noise,
                spec.stepper,
                spec.t_end,
                spec.save_dt,
            )?;
            perturbations
                .iter()
                .map(|&eps| {
                    let xe: Vec<T> = (0..n)
                        .map(|k| {
                            x.get(k).copied().unwrap_or(T::zero())
                                + eps * direction.get(k).copied().unwrap_or(T::zero())
                        })
                        .collect();
                    let tr = solve_path(
                        model,
                        basis,
                        &xe,
                        &noise,
                        spec.stepper,
                        spec.t_end,
                        spec.save_dt,
                    )?;
                    Ok(tr
                        .states
                        .iter()
                        .zip(&base.states)
                        .map(|(a, b)| padded_distance(&a.coeffs, &b.coeffs))
                        .fold(T::zero(), T::max)
                        .powf(p))
                })
                .collect()
        })
        .collect();
    let mut samples = vec![Vec::with_capacity(spec.paths); perturbations.len()];
    let mut exploded = 0;
    for r in per_path {
        match r {
            Ok(v) => {
                for (slot, s) in samples.iter_mut().zip(v) {
                    slot.push(s);
                }
            }
            Err(SpdeError::NonFiniteState { .. }) => exploded += 1,
            Err(e) => return Err(e),
        }
    }
    let mut table = DiagnosticTable::new("continuity");
    for (eps, s) in perturbations.iter().zip(&samples) {
        table.push(format!("{eps}"), *eps, s);
    }
    let pos: Vec<&DiagnosticRow<T>> = table.rows.iter().filter(|r| r.x > T::zero()).collect();
    table.fitted_rate = log_log_fit(
        &pos.iter().map(|r| r.x).collect::<Vec<_>>(),
        &pos.iter().map(|r| r.estimate).collect::<Vec<_>>(),
    );
    table.exploded = exploded;
    Ok(table)
}

/// The pair of discretisations compared by [`uniqueness_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePair {
    pub first: Stepper,
    pub second: Stepper,
    /// Run the second discretisation at half the step of the first.
    pub halve_second: bool,
}

/// `E sup_t ‖X^{(1)} − X^{(2)}‖²_H` per step size; the rate is fitted to its square root.
///
/// `spec.dt` is the finest step; level `j` uses `dt · coarsening[j]` and the
/// noise is the finest path summed in blocks.
pub fn uniqueness_probe<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    pair: ProbePair,
    coarsening: &[usize],
    spec: &EnsembleSpec<T>,
) -> Result<DiagnosticTable<T>> {
    if coarsening.is_empty() || coarsening.iter().any(|&f| f == 0 || !f.is_power_of_two()) {
        return Err(SpdeError::InvalidExperiment(format!(
            "coarsening factors must be powers of two: {coarsening:?}"
        )));
    }
    if pair.halve_second && coarsening.iter().any(|&f| f < 2) {
        return Err(SpdeError::InvalidExperiment(
            "halving needs coarsening factors of at least 2".into(),
        ));
    }
    let per_path: Vec<Result<Vec<T>>> = (0..spec.paths as u64)
        .into_par_iter()
        .map(|id| {
            let fine: NoisePath<T> = path_noise(basis, spec, id)?;
            coarsening
                .iter()
                .map(|&f| {
                    let a_noise = fine.coarsen(f)?;
                    let b_noise = if pair.halve_second {
                        fine.coarsen(f / 2)?
                    } else {
                        a_noise.clone()
                    };
                    let a = solve_path(
                        model,
                        basis,
                        x0,
                        &a_noise,
                        pair.first,
                        spec.t_end,
                        spec.save_dt,
                    )?;
                    let b = solve_path(
                        model,
                        basis,
                        x0,
                        &b_noise,
                        pair.second,
                        spec.t_end,
                        spec.save_dt,
                    )?;
                    let sup = a
                        .states
                        .iter()
                        .zip(&b.states)
                        .map(|(x, y)| padded_distance(&x.coeffs, &y.coeffs))
                        .fold(T::zero(), T::max);
                    Ok(sup * sup)
                })
                .collect()
        })
        .collect();
    let mut samples = vec![Vec::with_capacity(spec.paths); coarsening.len()];
    let mut exploded = 0;
    for r in per_path {
        match r {
            Ok(v) => {
                for (slot, s) in samples.iter_mut().zip(v) {
                    slot.push(s);
                }
            }
            Err(SpdeError::NonFiniteState { .. }) => exploded += 1,
            Err(e) => return Err(e),
        }
    }
    let mut table = DiagnosticTable::new("uniqueness");
    for (&f, s) in coarsening.iter().zip(&samples) {
        let dt = spec.dt * T::from_usize_lossy(f);
        table.push(format!("{dt}"), dt, s);
    }
    let xs: Vec<T> = table.rows.iter().map(|r| r.x).collect();
    let rms: Vec<T> = table.rows.iter().map(|r| r.estimate.sqrt()).collect();
    table.fitted_rate = log_log_fit(&xs, &rms);
    table.exploded = exploded;
    table
        .notes
        .push("rate fitted to sqrt(E sup |diff|^2) against dt".into());
    Ok(table)
}

/// Slope of `ln E‖X(t)‖²_H` against `t`, with a standard error from ten path batches.
pub fn log_second_moment_trend<T: Scalar>(ensemble: &TrajectoryEnsemble<T>) -> Result<(T, T)> {
    const BATCHES: usize = 10;
    let trs = &ensemble.trajectories;
    if trs.len() < BATCHES {
        return Err(SpdeError::InvalidExperiment(format!(
            "need at least {BATCHES} paths"
        )));
    }
    let times = trs[0].times();
    let slope_of = |group: &[Trajectory<T>]| -> Option<T> {
        let m = T::from_usize_lossy(group.len());
        let means: Vec<T> = (0..times.len())
            .map(|i| {
                group
                    .iter()
                    .map(|tr| crate::scalar::dot(&tr.states[i].coeffs, &tr.states[i].coeffs))
                    .sum::<T>()
                    / m
            })
            .collect();
        if means.iter().any(|&v| !(v > T::zero())) {
            return None;
        }
        let logs: Vec<T> = means.iter().map(|v| v.ln()).collect();
        linear_fit(&times, &logs).map(|f| f.slope)
    };
    let overall = slope_of(trs)
        .ok_or_else(|| SpdeError::InvalidExperiment("second moment vanished".into()))?;
    let size = trs.len() / BATCHES;
    let batch: Vec<T> = (0..BATCHES)
        .filter_map(|b| slope_of(&trs[b * size..(b + 1) * size]))
        .collect();
    let (_, se) = mean_se(&batch);
    Ok((overall, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_ensemble;
    use approx::assert_abs_diff_eq;

    fn spec(paths: usize, t_end: f64, dt: f64, save_dt: f64) -> EnsembleSpec<f64> {
        EnsembleSpec {
            paths,
            seed: 7,
            stepper: Stepper::SemiImplicit,
            t_end,
            dt,
            save_dt,
        }
    }

    #[test]
    fn mean_se_and_fits() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let f = log_log_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert!(log_log_fit(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn trapezoid_and_padding() {
        assert_abs_diff_eq!(trapezoid(&[0.0, 1.0, 2.0], 0.5), 1.0);
        assert_eq!(padded_distance(&[3.0], &[0.0, 4.0]), 5.0);
    }

    #[test]
    fn deterministic_heat_sup_moment_is_initial_norm() {
        let m = ModelSpec::heat_ou(0.0);
        let b = m.basis(4, None).unwrap();
        let ens = solve_ensemble(&m, &b, &[1.0], &spec(2, 1.0, 0.01, 0.1)).unwrap();
        let t = moment_report(&m, &b, &ens, 4.0, 2.0).unwrap();
        assert_eq!(t.row("sup_h_p").unwrap().estimate, 1.0);
        assert_eq!(t.row("sup_h_p").unwrap().std_error, 0.0);
    }

    #[test]
    fn moment_exponent_validation() {
        let m = ModelSpec::gradient_noise_heat(1.0);
        assert!(validate_moment_exponent(&m, 2.0).is_ok());
        assert!(validate_moment_exponent(&m, 2.9).is_ok());
        assert!(matches!(
            validate_moment_exponent(&m, 3.0),
            Err(SpdeError::InadmissibleP { .. })
        ));
        assert!(matches!(
            validate_moment_exponent(&m, 1.5),
            Err(SpdeError::InadmissibleP { .. })
        ));
        let bad = ModelSpec::gradient_noise_heat(1.5);
        assert!(matches!(
            validate_moment_exponent(&bad, 2.0),
            Err(SpdeError::InadmissibleP { .. })
        ));
        assert!(validate_moment_exponent(&ModelSpec::heat_ou(1.0), 12.0).is_ok());
    }

    #[test]
    fn constant_trajectory_has_zero_shift_statistic() {
        let m = ModelSpec::heat_ou(0.0);
        let b = m.basis(4, None).unwrap();
        let ens = solve_ensemble(&m, &b, &[], &spec(3, 1.0, 0.01, 0.05)).unwrap();
        let t = equicontinuity_statistic(&ens, &[0.1, 0.2], 2.0).unwrap();
        assert!(t.rows.iter().all(|r| r.estimate == 0.0));
        assert!(matches!(
            equicontinuity_statistic(&ens, &[0.07], 2.0),
            Err(SpdeError::InvalidDelta(_))
        ));
        assert!(matches!(
            equicontinuity_statistic(&ens, &[1.0], 2.0),
            Err(SpdeError::InvalidDelta(_))
        ));
    }

    #[test]
    fn invariant_subspace_gives_zero_galerkin_error() {
        let m = ModelSpec::heat_ou(0.4);
        let x0 = [0.5, -0.2, 0.1, 0.3];
        let t = galerkin_convergence(&m, &x0, &[4, 8, 16], &spec(4, 0.2, 0.01, 0.05), 2.0).unwrap();
        // Additive noise excites the new modes; with σ = 0 the higher levels stay identical.
        assert!(t.rows.iter().all(|r| r.estimate > 0.0));
        let quiet = ModelSpec::heat_ou(0.0);
        let t =
            galerkin_convergence(&quiet, &x0, &[4, 8, 16], &spec(2, 0.2, 0.01, 0.05), 2.0).unwrap();
        assert!(t.rows.iter().all(|r| r.estimate == 0.0));
    }

    #[test]
    fn heat_continuity_is_an_exact_contraction() {
        let m = ModelSpec::heat_ou(0.6);
        let b = m.basis(6, None).unwrap();
        let d = [0.0, 1.0, 0.5, 0.0, 0.0, 0.2];
        let dn: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eps = [0.0, 0.1, 0.01, 0.001];
        let t = initial_data_continuity(&m, &b, &[1.0], &d, &eps, 2.0, &spec(20, 0.5, 0.01, 0.05))
            .unwrap();
        assert_eq!(t.rows[0].estimate, 0.0);
        for r in &t.rows[1..] {
            let ratio = r.estimate / (r.x * dn).powi(2);
            assert!((1.0 - 1e-6..=1.0 + 1e-9).contains(&ratio), "{ratio}");
        }
        assert_abs_diff_eq!(t.fitted_rate.unwrap().slope, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn identical_discretisations_agree_exactly() {
        let m = ModelSpec::p_laplacian(4.0, 1.0, 0.7);
        let b = m.basis(6, None).unwrap();
        let mut s = spec(4, 0.2, 0.001, 0.1);
        s.stepper = Stepper::ExplicitTamed;
        let pair = ProbePair {
            first: Stepper::ExplicitTamed,
            second: Stepper::ExplicitTamed,
            halve_second: false,
        };
        let t = uniqueness_probe(&m, &b, &[0.5, 0.2], pair, &[1, 2, 4], &s).unwrap();
        assert!(t.rows.iter().all(|r| r.estimate == 0.0));
    }

    #[test]
    fn deterministic_stepper_gap_is_first_order() {
        let m = ModelSpec::heat_ou(0.0);
        let b = m.basis(4, None).unwrap();
        let pair = ProbePair {
            first: Stepper::ExplicitTamed,
            second: Stepper::SemiImplicit,
            halve_second: false,
        };
        let t = uniqueness_probe(
            &m,
            &b,
            &[1.0, 0.5],
            pair,
            &[8, 4, 2, 1],
            &spec(1, 1.0, 0.00125, 0.1),
        )
        .unwrap();
        let slope = t.fitted_rate.unwrap().slope;
        assert!((slope - 1.0).abs() <= 0.15, "{slope}");
    }
}
