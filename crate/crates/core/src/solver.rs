//! Time stepping of the Galerkin SDE
//! `dY = P_n A(t, Y) dt + P_n B(t, Y) Q_n dW`, Itô interpretation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdeError};
use crate::models::ModelSpec;
use crate::noise::NoisePath;
use crate::scalar::{dot, l2_norm, Scalar};
use crate::spectral::{GalerkinState, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    ExplicitTamed,
    SemiImplicit,
}

impl Stepper {
    pub fn as_str(self) -> &'static str {
        match self {
            Stepper::ExplicitTamed => "explicit-tamed",
            Stepper::SemiImplicit => "semi-implicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub states: Vec<GalerkinState<T>>,
    pub save_dt: T,
    pub dt: T,
    pub stepper: Stepper,
    pub model: String,
    pub n_modes: usize,
    pub seed: u64,
    pub path_id: u64,
    /// Noise directions read by the model.
    pub noise_modes: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &GalerkinState<T> {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEnsemble<T> {
    pub trajectories: Vec<Trajectory<T>>,
    /// Paths dropped by [`solve_ensemble_lenient`].
    pub exploded: Vec<u64>,
}

impl<T> TrajectoryEnsemble<T> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn non_finite<T: Scalar>(state: GalerkinState<T>) -> Result<GalerkinState<T>> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(SpdeError::NonFiniteState {
            time: state.time.as_f64(),
            path_id: None,
        })
    }
}

/// `c ← c + dt·a/(1 + dt‖a‖₂) + B ΔW`.
pub fn step_explicit_tamed<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    state: &GalerkinState<T>,
    dt: T,
    noise_row: &[T],
) -> Result<GalerkinState<T>> {
    let a = model.apply_a(basis, state.time, &state.coeffs)?;
    let b = model.apply_b_increment(basis, state.time, &state.coeffs, noise_row)?;
    let tame = T::one() + dt * l2_norm(&a);
    let coeffs = state
        .coeffs
        .iter()
        .zip(&a)
        .zip(&b)
        .map(|((&c, &a), &b)| c + dt * a / tame + b)
        .collect();
    non_finite(GalerkinState::new(coeffs, state.time + dt))
}

/// `c ← (c + dt(a − Lc) + B ΔW)/(1 − dt L)` with the model's diagonal linear part `L`.
pub fn step_semi_implicit<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    state: &GalerkinState<T>,
    dt: T,
    noise_row: &[T],
) -> Result<GalerkinState<T>> {
    let l = model
        .linear_part(basis)
        .ok_or_else(|| SpdeError::NoLinearPart(model.name.clone()))?;
    semi_implicit_with(model, basis, state, dt, noise_row, &l)
}

fn semi_implicit_with<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    state: &GalerkinState<T>,
    dt: T,
    noise_row: &[T],
    l: &[T],
) -> Result<GalerkinState<T>> {
    let a = model.apply_a(basis, state.time, &state.coeffs)?;
    let b = model.apply_b_increment(basis, state.time, &state.coeffs, noise_row)?;
    let coeffs = state
        .coeffs
        .iter()
        .zip(&a)
        .zip(&b)
        .zip(l)
        .map(|(((&c, &a), &b), &l)| (c + dt * (a - l * c) + b) / (T::one() - dt * l))
        .collect();
    non_finite(GalerkinState::new(coeffs, state.time + dt))
}

/// A stepper bound to a model and basis, with the linear part resolved once.
pub struct Integrator<'a, T> {
    model: &'a ModelSpec<T>,
    basis: &'a SpectralBasis<T>,
    stepper: Stepper,
    linear: Option<Vec<T>>,
}

impl<'a, T: Scalar> Integrator<'a, T> {
    pub fn new(
        model: &'a ModelSpec<T>,
        basis: &'a SpectralBasis<T>,
        stepper: Stepper,
    ) -> Result<Self> {
        let linear = match stepper {
            Stepper::SemiImplicit => Some(
                model
                    .linear_part(basis)
                    .ok_or_else(|| SpdeError::NoLinearPart(model.name.clone()))?,
            ),
            Stepper::ExplicitTamed => None,
        };
        Ok(Self {
            model,
            basis,
            stepper,
            linear,
        })
    }

    pub fn step(
        &self,
        state: &GalerkinState<T>,
        dt: T,
        noise_row: &[T],
    ) -> Result<GalerkinState<T>> {
        match &self.linear {
            Some(l) => semi_implicit_with(self.model, self.basis, state, dt, noise_row, l),
            None => step_explicit_tamed(self.model, self.basis, state, dt, noise_row),
        }
    }

    pub fn stepper(&self) -> Stepper {
        self.stepper
    }
}

/// Exact integer ratio `num / den`, or a time-grid error.
pub fn integer_ratio<T: Scalar>(num: T, den: T, what: &str) -> Result<usize> {
    let (n, d) = (num.as_f64(), den.as_f64());
    if !(n > 0.0 && d > 0.0 && n.is_finite() && d.is_finite()) {
        return Err(SpdeError::TimeGrid(format!(
            "{what}: {n} / {d} needs positive finite values"
        )));
    }
    let r = n / d;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(SpdeError::TimeGrid(format!(
            "{what}: {n} is not an integer multiple of {d}"
        )));
    }
    Ok(k as usize)
}

/// Projects or zero-pads `x0` onto the first `n` modes.
pub fn project_initial<T: Scalar>(x0: &[T], n: usize) -> Vec<T> {
    (0..n)
        .map(|k| x0.get(k).copied().unwrap_or(T::zero()))
        .collect()
}

/// Integrates one path, saving at multiples of `save_dt` up to `t_end`.
pub fn solve_path<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    noise: &NoisePath<T>,
    stepper: Stepper,
    t_end: T,
    save_dt: T,
) -> Result<Trajectory<T>> {
    let dt = noise.dt();
    let per_save = integer_ratio(save_dt, dt, "save_dt / dt")?;
    let n_saves = integer_ratio(t_end, save_dt, "t_end / save_dt")?;
    let n_steps = per_save * n_saves;
    if noise.n_steps() < n_steps {
        return Err(SpdeError::TimeGrid(format!(
            "noise path has {} steps, {n_steps} required",
            noise.n_steps()
        )));
    }
    let n = basis.n_modes();
    let used = model.noise_modes(n);
    if noise.m_modes() < used {
        return Err(SpdeError::DimensionMismatch {
            expected: used,
            got: noise.m_modes(),
        });
    }
    let integrator = Integrator::new(model, basis, stepper)?;
    let mut state = GalerkinState::new(project_initial(x0, n), T::zero());
    if !state.is_finite() {
        return Err(SpdeError::NonFiniteState {
            time: 0.0,
            path_id: Some(noise.path_id()),
        });
    }
    let mut states = Vec::with_capacity(n_saves + 1);
    states.push(state.clone());
    for s in 0..n_saves {
        for k in 0..per_save {
            let step = s * per_save + k;
            let row = noise.row(step);
            state = integrator
                .step(&state, dt, &row[..used.min(row.len())])
                .map_err(|e| with_path(e, noise.path_id()))?;
            // Times are pinned to the grid to avoid drift from repeated addition.
            state.time = T::from_usize_lossy(step + 1) * dt;
        }
        states.push(state.clone());
    }
    Ok(Trajectory {
        states,
        save_dt,
        dt,
        stepper,
        model: model.name.clone(),
        n_modes: n,
        seed: noise.seed(),
        path_id: noise.path_id(),
        noise_modes: used,
    })
}

fn with_path(e: SpdeError, path_id: u64) -> SpdeError {
    match e {
        SpdeError::NonFiniteState { time, .. } => SpdeError::NonFiniteState {
            time,
            path_id: Some(path_id),
        },
        other => other,
    }
}

/// Ensemble run parameters shared by every path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec<T> {
    pub paths: usize,
    pub seed: u64,
    pub stepper: Stepper,
    pub t_end: T,
    pub dt: T,
    pub save_dt: T,
}

/// Noise for `path_id` with one column per Galerkin mode.
pub fn path_noise<T: Scalar>(
    basis: &SpectralBasis<T>,
    spec: &EnsembleSpec<T>,
    path_id: u64,
) -> Result<NoisePath<T>> {
    let n_steps = integer_ratio(spec.t_end, spec.dt, "t_end / dt")?;
    Ok(NoisePath::sample(
        basis.n_modes(),
        n_steps,
        spec.dt,
        spec.seed,
        path_id,
    ))
}

fn run_paths<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    spec: &EnsembleSpec<T>,
) -> Result<Vec<Result<Trajectory<T>>>> {
    if spec.paths == 0 {
        return Err(SpdeError::InvalidExperiment(
            "ensemble needs at least one path".into(),
        ));
    }
    integer_ratio(spec.save_dt, spec.dt, "save_dt / dt")?;
    integer_ratio(spec.t_end, spec.save_dt, "t_end / save_dt")?;
    Ok((0..spec.paths as u64)
        .into_par_iter()
        .map(|id| {
            let noise = path_noise(basis, spec, id)?;
            solve_path(
                model,
                basis,
                x0,
                &noise,
                spec.stepper,
                spec.t_end,
                spec.save_dt,
            )
        })
        .collect())
}

/// `M` paths with `path_id = 0..M−1`; the first blow-up aborts the run.
pub fn solve_ensemble<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    spec: &EnsembleSpec<T>,
) -> Result<TrajectoryEnsemble<T>> {
    let trajectories = run_paths(model, basis, x0, spec)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble {
        trajectories,
        exploded: Vec::new(),
    })
}

/// Like [`solve_ensemble`] but drops exploded paths and records their ids.
pub fn solve_ensemble_lenient<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    spec: &EnsembleSpec<T>,
) -> Result<TrajectoryEnsemble<T>> {
    let mut trajectories = Vec::new();
    let mut exploded = Vec::new();
    for (id, r) in run_paths(model, basis, x0, spec)?.into_iter().enumerate() {
        match r {
            Ok(t) => trajectories.push(t),
            Err(SpdeError::NonFiniteState { .. }) => exploded.push(id as u64),
            Err(e) => return Err(e),
        }
    }
    Ok(TrajectoryEnsemble {
        trajectories,
        exploded,
    })
}

/// Discrete Itô energy balance along one path:
/// `‖Y_N‖² − ‖Y_0‖² − Σ [2⟨A(Y_k), Y_k⟩dt + ‖P_n B(Y_k)‖² dt + 2(Y_k, B(Y_k)ΔW_k)]`.
pub fn energy_residual<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    x0: &[T],
    noise: &NoisePath<T>,
    stepper: Stepper,
    t_end: T,
) -> Result<T> {
    let dt = noise.dt();
    let n_steps = integer_ratio(t_end, dt, "t_end / dt")?;
    let n = basis.n_modes();
    let used = model.noise_modes(n);
    let integrator = Integrator::new(model, basis, stepper)?;
    let mut state = GalerkinState::new(project_initial(x0, n), T::zero());
    let start = dot(&state.coeffs, &state.coeffs);
    let mut balance = T::zero();
    for step in 0..n_steps {
        let row = &noise.row(step)[..used];
        let y = &state.coeffs;
        let a = model.apply_a(basis, state.time, y)?;
        let b = model.apply_b_increment(basis, state.time, y, row)?;
        let ito = model.projected_b_hs_norm_sq(basis, state.time, y)?;
        balance += T::lit(2.0) * dot(&a, y) * dt + ito * dt + T::lit(2.0) * dot(y, &b);
        state = integrator.step(&state, dt, row)?;
        state.time = T::from_usize_lossy(step + 1) * dt;
    }
    let end = dot(&state.coeffs, &state.coeffs);
    Ok(end - start - balance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn heat(sigma: f64, n: usize) -> (ModelSpec<f64>, SpectralBasis<f64>) {
        let m = ModelSpec::heat_ou(sigma);
        let b = m.basis(n, None).unwrap();
        (m, b)
    }

    #[test]
    fn semi_implicit_heat_is_backward_euler() {
        let (m, b) = heat(0.0, 4);
        let mut s = GalerkinState::unit(4, 1);
        for _ in 0..10 {
            s = step_semi_implicit(&m, &b, &s, 0.1, &[0.0; 4]).unwrap();
        }
        assert_abs_diff_eq!(s.coeffs[0], 1.1f64.powi(-10), epsilon = 1e-14);
        assert_abs_diff_eq!(s.time, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cahn_hilliard_linear_mode() {
        // From ε e_2 the linearised φ(u) ≈ −u cancels the implicit damping; the cubic part is O(ε³).
        let m = ModelSpec::cahn_hilliard(0.0);
        let b = m.basis(4, None).unwrap();
        let eps = 1e-4;
        let s = GalerkinState::new(vec![0.0, eps, 0.0, 0.0], 0.0);
        let next = step_semi_implicit(&m, &b, &s, 0.1, &[0.0; 4]).unwrap();
        assert_abs_diff_eq!(next.coeffs[1], eps, epsilon = 1e-10);
    }

    #[test]
    fn tamed_heat_recursion() {
        let (m, b) = heat(0.0, 3);
        let dt = 0.01;
        let mut s = GalerkinState::new(vec![0.5, 0.0, 0.0], 0.0);
        let mut c: f64 = 0.5;
        for _ in 0..50 {
            s = step_explicit_tamed(&m, &b, &s, dt, &[0.0; 3]).unwrap();
            c -= dt * c / (1.0 + dt * c.abs());
        }
        assert_abs_diff_eq!(s.coeffs[0], c, epsilon = 1e-14);
        assert!((c - 0.5 * (1.0f64 - dt).powi(50)).abs() < 50.0 * dt * dt);
    }

    #[test]
    fn taming_bounds_drift_step() {
        let m = ModelSpec::cahn_hilliard(0.0);
        let b = m.basis(8, None).unwrap();
        let s = GalerkinState::new((0..8).map(|k| 50.0 / (1.0 + k as f64)).collect(), 0.0);
        let next = step_explicit_tamed(&m, &b, &s, 0.5, &[0.0; 8]).unwrap();
        let d: Vec<f64> = next
            .coeffs
            .iter()
            .zip(&s.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        assert!(l2_norm(&d) <= 1.0);
    }

    #[test]
    fn zero_drift_zero_noise_only_advances_time() {
        let (m, b) = heat(0.0, 3);
        let s = GalerkinState::zeros(3);
        for stepper in [Stepper::ExplicitTamed, Stepper::SemiImplicit] {
            let next = Integrator::new(&m, &b, stepper)
                .unwrap()
                .step(&s, 0.2, &[0.0; 3])
                .unwrap();
            assert_eq!(next.coeffs, vec![0.0; 3]);
            assert_eq!(next.time, 0.2);
        }
    }

    #[test]
    fn one_step_stepper_gap_is_second_order() {
        let m = ModelSpec::convection_diffusion(0.0);
        let b = m.basis(8, None).unwrap();
        let s = GalerkinState::new(vec![0.3, 0.2, -0.1, 0.05, 0.0, 0.02, 0.0, 0.0], 0.0);
        let gap = |dt: f64| {
            let e = step_explicit_tamed(&m, &b, &s, dt, &[0.0; 8]).unwrap();
            let i = step_semi_implicit(&m, &b, &s, dt, &[0.0; 8]).unwrap();
            l2_norm(
                &e.coeffs
                    .iter()
                    .zip(&i.coeffs)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            )
        };
        let ratio = gap(1e-3) / gap(5e-4);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn heat_decay_matches_exponential() {
        let (m, b) = heat(0.0, 4);
        let noise = NoisePath::sample(4, 1000, 1e-3, 0, 0);
        let tr = solve_path(&m, &b, &[1.0], &noise, Stepper::SemiImplicit, 1.0, 0.1).unwrap();
        assert_eq!(tr.states.len(), 11);
        assert_abs_diff_eq!(b.h_norm(&tr.last().coeffs), (-1.0f64).exp(), epsilon = 1e-3);
        assert_abs_diff_eq!(tr.last().time, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_is_a_fixed_point_without_additive_noise() {
        let m = ModelSpec::p_laplacian(4.0, 1.0, 0.8);
        let b = m.basis(6, None).unwrap();
        let noise = NoisePath::sample(6, 100, 1e-3, 9, 1);
        let tr = solve_path(&m, &b, &[], &noise, Stepper::ExplicitTamed, 0.1, 0.01).unwrap();
        assert!(tr.states.iter().all(|s| s.coeffs.iter().all(|&c| c == 0.0)));
    }

    #[test]
    fn time_grid_ratios_are_enforced() {
        let (m, b) = heat(0.1, 3);
        let noise = NoisePath::sample(3, 1000, 0.003, 0, 0);
        assert!(matches!(
            solve_path(&m, &b, &[1.0], &noise, Stepper::SemiImplicit, 1.0, 0.01),
            Err(SpdeError::TimeGrid(_))
        ));
        assert_eq!(integer_ratio(0.3, 0.1, "x").unwrap(), 3);
        assert!(integer_ratio(0.01, 0.003, "x").is_err());
    }

    #[test]
    fn semi_implicit_needs_linear_part() {
        let m = ModelSpec::p_laplacian(3.0, 0.0, 0.0);
        let b = m.basis(4, None).unwrap();
        assert!(matches!(
            step_semi_implicit(&m, &b, &GalerkinState::zeros(4), 0.1, &[0.0; 4]),
            Err(SpdeError::NoLinearPart(_))
        ));
    }

    #[test]
    fn blow_up_is_reported_with_path_id() {
        let (m, b) = heat(0.0, 8);
        let spec = EnsembleSpec {
            paths: 2,
            seed: 1,
            stepper: Stepper::SemiImplicit,
            t_end: 1.0,
            dt: 0.5,
            save_dt: 0.5,
        };
        let x0 = vec![f64::MAX; 8];
        match solve_ensemble(&m, &b, &x0, &spec) {
            Err(SpdeError::NonFiniteState {
                path_id: Some(_),
                time,
            }) => assert_eq!(time, 0.5),
            other => panic!("{other:?}"),
        }
        let lenient = solve_ensemble_lenient(&m, &b, &x0, &spec).unwrap();
        assert_eq!(lenient.exploded, vec![0, 1]);
        assert!(lenient.is_empty());
    }

    #[test]
    fn ensembles_are_reproducible_and_match_single_paths() {
        let (m, b) = heat(0.5, 6);
        let spec = EnsembleSpec {
            paths: 3,
            seed: 42,
            stepper: Stepper::SemiImplicit,
            t_end: 0.2,
            dt: 0.01,
            save_dt: 0.05,
        };
        let a = solve_ensemble(&m, &b, &[1.0], &spec).unwrap();
        let c = solve_ensemble(&m, &b, &[1.0], &spec).unwrap();
        assert_eq!(a, c);
        let single = solve_path(
            &m,
            &b,
            &[1.0],
            &path_noise(&b, &spec, 2).unwrap(),
            spec.stepper,
            0.2,
            0.05,
        )
        .unwrap();
        assert_eq!(a.trajectories[2], single);
    }

    #[test]
    fn energy_residual_shrinks_with_dt() {
        let m = ModelSpec::p_laplacian(4.0, 1.0, 1.0);
        let b = m.basis(8, None).unwrap();
        let x0: Vec<f64> = (1..=8).map(|k| 1.0 / (k * k) as f64).collect();
        let mut pts = Vec::new();
        for f in [16usize, 8, 4, 2] {
            let mut total = 0.0;
            for path in 0..8 {
                let noise = NoisePath::sample(8, 4096, 0.5 / 4096.0, 11, path)
                    .coarsen(f)
                    .unwrap();
                total += energy_residual(&m, &b, &x0, &noise, Stepper::ExplicitTamed, 0.5)
                    .unwrap()
                    .abs();
            }
            pts.push(((0.5 * f as f64 / 4096.0).ln(), (total / 8.0).ln()));
        }
        let (n, sx, sy) = (
            pts.len() as f64,
            pts.iter().map(|p| p.0).sum::<f64>(),
            pts.iter().map(|p| p.1).sum::<f64>(),
        );
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope >= 0.4, "{slope}");
    }
}
