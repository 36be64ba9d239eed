//! Randomized audits of the hypothesis inequalities.
//!
//! Every audit samples states `u` (and `v`, `x` where needed) from a
//! multi-scale Gaussian family, evaluates both sides of the inequality and
//! records `margin = RHS − LHS`. A sample violates when
//! `margin < −tol · (1 + |LHS| + |RHS|)`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdeError};
use crate::models::{HypothesisSpec, ModelKind, ModelSpec};
use crate::scalar::{dot, Scalar};
use crate::spectral::SpectralBasis;

/// Threshold of the λ-refinement ratio test for hemicontinuity.
pub const HEMICONTINUITY_RATIO: f64 = 0.6;
const ZOOM_LEVELS: usize = 6;
const CONTINUITY_STEPS: i32 = 8;
const MAX_KEPT_VIOLATIONS: usize = 32;
const SPECTRAL_DECAY: [f64; 3] = [0.6, 1.1, 2.1];
const AMPLITUDES: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    H1,
    H2,
    #[serde(rename = "H2prime")]
    H2Prime,
    H3,
    H4,
    H5,
    #[serde(rename = "H2star")]
    H2Star,
    #[serde(rename = "H3star")]
    H3Star,
    #[serde(rename = "H4star")]
    H4Star,
    #[serde(rename = "H5star")]
    H5Star,
    #[serde(rename = "chi-threshold")]
    ChiThreshold,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::H1 => "H1",
            Condition::H2 => "H2",
            Condition::H2Prime => "H2prime",
            Condition::H3 => "H3",
            Condition::H4 => "H4",
            Condition::H5 => "H5",
            Condition::H2Star => "H2star",
            Condition::H3Star => "H3star",
            Condition::H4Star => "H4star",
            Condition::H5Star => "H5star",
            Condition::ChiThreshold => "chi-threshold",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub n_samples: usize,
    pub seed: u64,
    /// Coarse λ-grid size for the hemicontinuity ratio test.
    pub n_lambda: usize,
    /// Probes per dual-norm lower bound.
    pub n_probe: usize,
    pub tol: f64,
    /// Times are drawn uniformly from `[0, horizon]`.
    pub horizon: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            n_lambda: 16,
            n_probe: 32,
            tol: 1e-8,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation<T> {
    pub u: Vec<T>,
    pub v: Option<Vec<T>>,
    pub t: T,
    pub margin: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginStats<T> {
    pub min: T,
    pub median: T,
    pub mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport<T> {
    pub condition: Condition,
    pub n_samples: usize,
    pub n_violations: usize,
    /// The first violating samples, in sample order.
    pub violations: Vec<Violation<T>>,
    pub margin_stats: MarginStats<T>,
    pub fitted_constants: BTreeMap<String, T>,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Two sides of one audited inequality, `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sides<T> {
    pub lhs: T,
    pub rhs: T,
}

impl<T: Scalar> Sides<T> {
    pub fn margin(&self) -> T {
        self.rhs - self.lhs
    }

    pub fn violated(&self, tol: T) -> bool {
        self.margin() < -tol * (T::one() + self.lhs.abs() + self.rhs.abs())
    }
}

struct Eval<T> {
    checks: Vec<Sides<T>>,
    u: Vec<T>,
    v: Option<Vec<T>>,
    t: T,
    fit: Option<T>,
    ratio: Option<T>,
}

impl<T> Eval<T> {
    fn new(checks: Vec<Sides<T>>, u: Vec<T>, v: Option<Vec<T>>, t: T) -> Self {
        Self {
            checks,
            u,
            v,
            t,
            fit: None,
            ratio: None,
        }
    }

    fn fit(mut self, fit: Option<T>) -> Self {
        self.fit = fit;
        self
    }
}

fn sample_rng(seed: u64, condition: Condition, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((condition.stream() << 40) | index as u64);
    rng
}

/// `c_k = a · z_k · (1+λ_k)^{−r/2}` with `(r, a)` cycling through the sampling regimes.
pub fn sample_state<T: Scalar, R: Rng + ?Sized>(
    basis: &SpectralBasis<T>,
    rng: &mut R,
    regime: usize,
) -> Vec<T> {
    let r = T::lit(SPECTRAL_DECAY[regime % 3]);
    let a = T::lit(AMPLITUDES[(regime / 3) % 4]);
    basis
        .eigenvalues()
        .iter()
        .map(|&l| {
            let z: f64 = rng.sample(StandardNormal);
            a * T::lit(z) * (T::one() + l).powf(-r / T::lit(2.0))
        })
        .collect()
}

fn unit_direction<T: Scalar, R: Rng + ?Sized>(
    basis: &SpectralBasis<T>,
    rng: &mut R,
    regime: usize,
) -> Vec<T> {
    loop {
        let d = sample_state(basis, rng, regime);
        let n = basis.h_norm(&d);
        if n > T::zero() {
            return d.into_iter().map(|c| c / n).collect();
        }
    }
}

fn sample_time<T: Scalar>(rng: &mut ChaCha8Rng, horizon: f64) -> T {
    T::lit(rng.random::<f64>() * horizon)
}

/// A second state: independent for even samples, a small perturbation of `u` for odd ones.
fn sample_partner<T: Scalar>(
    basis: &SpectralBasis<T>,
    rng: &mut ChaCha8Rng,
    index: usize,
    u: &[T],
) -> Vec<T> {
    let regime = index / 2 + index / 24;
    let v = sample_state(basis, rng, regime);
    if index.is_multiple_of(2) {
        v
    } else {
        u.iter()
            .zip(v)
            .map(|(&a, b)| a + T::lit(1e-2) * b)
            .collect()
    }
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn require<T>(value: Option<T>, what: &str, model: &ModelSpec<impl Scalar>) -> Result<T> {
    value.ok_or_else(|| {
        SpdeError::MissingHypothesisSpec(format!("{} does not declare {what}", model.name))
    })
}

fn run_samples<T, F>(
    condition: Condition,
    settings: &AuditSettings,
    eval: F,
) -> Result<Vec<Eval<T>>>
where
    T: Scalar,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Eval<T>> + Sync + Send,
{
    (0..settings.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(settings.seed, condition, i);
            eval(i, &mut rng)
        })
        .collect()
}

enum FitKind {
    Min,
    Max,
}

fn build_report<T: Scalar>(
    condition: Condition,
    settings: &AuditSettings,
    evals: Vec<Eval<T>>,
    fit: Option<(&str, FitKind)>,
) -> ConditionReport<T> {
    let tol = T::lit(settings.tol);
    let mut margins = Vec::with_capacity(evals.len());
    let mut violations = Vec::new();
    let mut n_violations = 0;
    let mut fitted: Option<T> = None;
    let mut ratio_sum = T::zero();
    let mut n_ratio = 0usize;
    for e in evals {
        let worst = e
            .checks
            .iter()
            .map(|s| s.margin())
            .fold(
                T::infinity(),
                |m, x| if x < m || x.is_nan() { x } else { m },
            );
        margins.push(worst);
        if e.checks
            .iter()
            .any(|s| s.violated(tol) || !s.margin().is_finite())
        {
            n_violations += 1;
            if violations.len() < MAX_KEPT_VIOLATIONS {
                violations.push(Violation {
                    u: e.u,
                    v: e.v,
                    t: e.t,
                    margin: worst,
                });
            }
        }
        if let (Some(x), Some((_, kind))) = (e.fit, fit.as_ref()) {
            if x.is_finite() {
                fitted = Some(match (fitted, kind) {
                    (None, _) => x,
                    (Some(f), FitKind::Min) => f.min(x),
                    (Some(f), FitKind::Max) => f.max(x),
                });
            }
        }
        if let Some(r) = e.ratio {
            ratio_sum += r;
            n_ratio += 1;
        }
    }
    let mut fitted_constants = BTreeMap::new();
    if let (Some(x), Some((name, _))) = (fitted, fit) {
        fitted_constants.insert(name.to_string(), x);
    }
    if n_ratio > 0 {
        fitted_constants.insert(
            "mean_ratio".into(),
            ratio_sum / T::from_usize_lossy(n_ratio),
        );
    }
    ConditionReport {
        condition,
        n_samples: margins.len(),
        n_violations,
        violations,
        margin_stats: margin_stats(margins),
        fitted_constants,
        pass: n_violations == 0,
        notes: Vec::new(),
    }
}

fn margin_stats<T: Scalar>(mut margins: Vec<T>) -> MarginStats<T> {
    if margins.is_empty() {
        return MarginStats {
            min: T::zero(),
            median: T::zero(),
            mean: T::zero(),
        };
    }
    margins.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    let n = margins.len();
    let median = if n % 2 == 1 {
        margins[n / 2]
    } else {
        (margins[n / 2 - 1] + margins[n / 2]) / T::lit(2.0)
    };
    let mean = margins.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    MarginStats {
        min: margins[0],
        median,
        mean,
    }
}

fn line_value<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    t: T,
    u: &[T],
    v: &[T],
    x: &[T],
    lambda: T,
) -> Result<T> {
    let w: Vec<T> = u.iter().zip(v).map(|(&a, &b)| a + lambda * b).collect();
    Ok(dot(&model.apply_a(basis, t, &w)?, x))
}

fn max_jump<T: Scalar>(values: &[T]) -> (T, usize) {
    values
        .windows(2)
        .enumerate()
        .map(|(i, w)| ((w[1] - w[0]).abs(), i))
        .fold(
            (T::zero(), 0),
            |best, cur| if cur.0 > best.0 { cur } else { best },
        )
}

/// Ratio of the largest adjacent jump of `λ ↦ ⟨A(u+λv), x⟩` on `[−1, 1]` under 4× refinement.
///
/// When the global ratio exceeds the threshold the interval holding the largest
/// jump is zoomed into repeatedly; a continuous map eventually resolves to
/// ratio ≈ 1/4 while a jump discontinuity stays near 1.
pub fn hemicontinuity_ratio<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    t: T,
    u: &[T],
    v: &[T],
    x: &[T],
    n_lambda: usize,
) -> Result<T> {
    let eval_grid = |a: T, b: T, m: usize| -> Result<Vec<T>> {
        (0..=m)
            .map(|i| {
                let lam = a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(m);
                line_value(model, basis, t, u, v, x, lam)
            })
            .collect()
    };
    let coarse = eval_grid(-T::one(), T::one(), n_lambda)?;
    let fine = eval_grid(-T::one(), T::one(), 4 * n_lambda)?;
    let scale = fine.iter().fold(T::zero(), |m, &y| m.max(y.abs()));
    let floor = T::lit(1e-12) * (T::one() + scale);
    let (j_coarse, _) = max_jump(&coarse);
    let (j_fine, idx) = max_jump(&fine);
    if j_coarse <= floor {
        return Ok(T::zero());
    }
    let mut ratio = j_fine / j_coarse;
    let threshold = T::lit(HEMICONTINUITY_RATIO);
    let h = T::lit(2.0) / T::from_usize_lossy(4 * n_lambda);
    let mut a = -T::one() + h * T::from_usize_lossy(idx);
    let mut b = a + h;
    let mut jump = j_fine;
    for _ in 0..ZOOM_LEVELS {
        if ratio <= threshold || jump <= floor {
            break;
        }
        let sub = eval_grid(a, b, 4)?;
        let (j, i) = max_jump(&sub);
        ratio = j / jump;
        jump = j;
        let step = (b - a) / T::lit(4.0);
        a += step * T::from_usize_lossy(i);
        b = a + step;
    }
    if jump <= floor {
        return Ok(T::zero());
    }
    Ok(ratio)
}

pub fn check_hemicontinuity<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
) -> Result<ConditionReport<T>> {
    if settings.n_lambda < 16 {
        return Err(SpdeError::InvalidDimension(format!(
            "n_lambda must be at least 16, got {}",
            settings.n_lambda
        )));
    }
    let evals = run_samples(Condition::H1, settings, |i, rng| {
        let t = sample_time(rng, settings.horizon);
        let u = sample_state(basis, rng, i);
        let v = sample_partner(basis, rng, i, &u);
        let x = unit_direction(basis, rng, i + 1);
        let ratio = hemicontinuity_ratio(model, basis, t, &u, &v, &x, settings.n_lambda)?;
        let mut e = Eval::new(
            vec![Sides {
                lhs: ratio,
                rhs: T::lit(HEMICONTINUITY_RATIO),
            }],
            u,
            Some(v),
            t,
        );
        e.ratio = Some(ratio);
        Ok(e)
    })?;
    let mut report = build_report(Condition::H1, settings, evals, None);
    report.notes.push(format!(
        "adjacent-jump ratio under 4x lambda refinement, threshold {HEMICONTINUITY_RATIO}"
    ));
    Ok(report)
}

/// `2⟨A(u)−A(v), u−v⟩ + ‖B(u)−B(v)‖²` against `(f + ρ(u) + η(v))‖u−v‖²_H`.
pub fn monotonicity_sides<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    t: T,
    u: &[T],
    v: &[T],
) -> Result<Sides<T>> {
    let w = sub(u, v);
    let da = sub(&model.apply_a(basis, t, u)?, &model.apply_a(basis, t, v)?);
    let lhs = T::lit(2.0) * dot(&da, &w) + model.b_hs_diff_norm_sq(basis, t, u, v)?;
    let f = model.hypothesis.f_const + model.rho(basis, u)? + model.eta(basis, v)?;
    Ok(Sides {
        lhs,
        rhs: f * dot(&w, &w),
    })
}

fn has_monotonicity_forms<T>(model: &ModelSpec<T>) -> bool {
    !matches!(
        model.kind,
        ModelKind::FixtureBadH1 | ModelKind::FixtureBadH3 | ModelKind::FixtureBadH5 { .. }
    )
}

/// Audits H2, H2prime or H2star depending on `variant`.
pub fn check_local_monotonicity<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
    variant: Condition,
) -> Result<ConditionReport<T>> {
    if !has_monotonicity_forms(model) {
        return Err(SpdeError::MissingHypothesisSpec(format!(
            "{} declares no rho/eta",
            model.name
        )));
    }
    let h = model.hypothesis;
    let alpha = model.alpha;
    match variant {
        Condition::H2 | Condition::H2Star => {
            let side_c = h.side_c;
            let evals = run_samples(variant, settings, |i, rng| {
                let t = sample_time(rng, settings.horizon);
                let u = sample_state(basis, rng, i);
                let v = sample_partner(basis, rng, i, &u);
                let main = monotonicity_sides(model, basis, t, &u, &v)?;
                let mut checks = vec![main];
                let w = sub(&u, &v);
                let w2 = dot(&w, &w);
                let fit = if w2 > T::zero() {
                    let bound = model.rho(basis, &u)? + model.eta(basis, &v)?;
                    Some((main.lhs - bound * w2) / w2)
                } else {
                    None
                };
                if let Some(c) = side_c {
                    let rho = model.rho(basis, &u)?.abs();
                    let eta = model.eta(basis, &u)?.abs();
                    let hn = basis.h_norm(&u);
                    let vn = model.v_norm(basis, &u)?;
                    if variant == Condition::H2 {
                        checks.push(Sides {
                            lhs: rho + eta,
                            rhs: c * (T::one() + vn.powf(alpha)) * (T::one() + hn.powf(h.gamma)),
                        });
                    } else {
                        checks.push(Sides {
                            lhs: rho,
                            rhs: c * (T::one() + hn.powf(h.lambda))
                                + c * vn.powf(h.theta) * (T::one() + hn.powf(h.gamma)),
                        });
                        checks.push(Sides {
                            lhs: eta,
                            rhs: c * (T::one() + hn.powf(T::lit(2.0) + h.beta))
                                + c * vn.powf(alpha) * (T::one() + hn.powf(h.beta)),
                        });
                    }
                }
                Ok(Eval::new(checks, u, Some(v), t).fit(fit))
            })?;
            let mut report = build_report(variant, settings, evals, Some(("f", FitKind::Max)));
            match side_c {
                Some(c) => report
                    .notes
                    .push(format!("growth bound on rho, eta audited with C = {c}")),
                None => report
                    .notes
                    .push("growth bound on rho, eta not claimed; main inequality only".into()),
            }
            if variant == Condition::H2Star && !(h.theta >= T::zero() && h.theta < alpha) {
                report.pass = false;
                report.notes.push(format!(
                    "theta = {} is not in [0, alpha = {alpha})",
                    h.theta
                ));
            }
            Ok(report)
        }
        Condition::H2Prime => {
            if model.k_of_r(T::one()).is_none() {
                return Err(SpdeError::MissingHypothesisSpec(format!(
                    "{} declares no K(R)",
                    model.name
                )));
            }
            let evals = run_samples(variant, settings, |i, rng| {
                let t = sample_time(rng, settings.horizon);
                let u = sample_state(basis, rng, i);
                let v = sample_partner(basis, rng, i, &u);
                let w = sub(&u, &v);
                let da = sub(&model.apply_a(basis, t, &u)?, &model.apply_a(basis, t, &v)?);
                let r = model.v_norm(basis, &u)?.max(model.v_norm(basis, &v)?);
                let k = model.k_of_r(r).unwrap_or(T::zero());
                let w2 = dot(&w, &w);
                let lhs = dot(&da, &w);
                let fit = (w2 > T::zero()).then(|| lhs / w2);
                Ok(Eval::new(vec![Sides { lhs, rhs: k * w2 }], u, Some(v), t).fit(fit))
            })?;
            Ok(build_report(
                variant,
                settings,
                evals,
                Some(("K_ratio", FitKind::Max)),
            ))
        }
        other => Err(SpdeError::MissingHypothesisSpec(format!(
            "{other} is not a monotonicity variant"
        ))),
    }
}

/// `2⟨A(u),u⟩ + ‖B(u)‖²` against `f(1+‖u‖²_H) − c‖u‖_V^α`.
pub fn coercivity_sides<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    t: T,
    u: &[T],
) -> Result<Sides<T>> {
    let h = model.hypothesis;
    let lhs =
        T::lit(2.0) * dot(&model.apply_a(basis, t, u)?, u) + model.b_hs_norm_sq(basis, t, u)?;
    let hn2 = dot(u, u);
    let rhs =
        h.f_const * (T::one() + hn2) - h.c_coercive * model.v_norm(basis, u)?.powf(model.alpha);
    Ok(Sides { lhs, rhs })
}

/// Audits H3, or H3star with `L_A` in place of `c` and no noise term.
pub fn check_coercivity<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
    variant: Condition,
) -> Result<ConditionReport<T>> {
    let h = model.hypothesis;
    let star = variant == Condition::H3Star;
    let l_a = if star {
        require(h.l_a, "L_A", model)?
    } else {
        h.c_coercive
    };
    let evals = run_samples(variant, settings, |i, rng| {
        let t = sample_time(rng, settings.horizon);
        let u = if i == 0 {
            vec![T::zero(); basis.n_modes()]
        } else {
            sample_state(basis, rng, i)
        };
        let vn = model.v_norm(basis, &u)?.powf(model.alpha);
        let free = h.f_const * (T::one() + dot(&u, &u));
        let lhs = if star {
            dot(&model.apply_a(basis, t, &u)?, &u)
        } else {
            coercivity_sides(model, basis, t, &u)?.lhs
        };
        let fit = (vn > T::zero()).then(|| (free - lhs) / vn);
        Ok(Eval::new(
            vec![Sides {
                lhs,
                rhs: free - l_a * vn,
            }],
            u,
            None,
            t,
        )
        .fit(fit))
    })?;
    Ok(build_report(
        variant,
        settings,
        evals,
        Some((if star { "L_A" } else { "c" }, FitKind::Min)),
    ))
}

/// `‖A(u)‖_{V*}^{α/(α−1)}` from the exact dual norm when available, else the certified lower bound.
pub fn dual_norm_power<T: Scalar, R: Rng + ?Sized>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    a: &[T],
    n_probe: usize,
    rng: &mut R,
) -> Result<T> {
    let est = basis.dual_norm_estimate(model.v_norm_kind, a, n_probe, rng)?;
    Ok(est.best().powf(model.alpha / (model.alpha - T::one())))
}

/// Audits H4 or H4star.
pub fn check_growth<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
    variant: Condition,
) -> Result<ConditionReport<T>> {
    let h = model.hypothesis;
    let star = variant == Condition::H4Star;
    let evals = run_samples(variant, settings, |i, rng| {
        let t = sample_time(rng, settings.horizon);
        let u = if i == 0 {
            vec![T::zero(); basis.n_modes()]
        } else {
            sample_state(basis, rng, i)
        };
        let a = model.apply_a(basis, t, &u)?;
        let lhs = dual_norm_power(model, basis, &a, settings.n_probe, rng)?;
        let hn = basis.h_norm(&u);
        let vn = model.v_norm(basis, &u)?.powf(model.alpha);
        let hb = T::one() + hn.powf(h.beta);
        let (rhs, fit) = if star {
            let free = h.f_const * (T::one() + hn.powf(T::lit(2.0) + h.beta));
            (
                free + h.growth_c * vn * hb,
                (vn > T::zero()).then(|| (lhs - free) / (vn * hb)),
            )
        } else {
            (
                (h.f_const + h.growth_c * vn) * hb,
                (vn > T::zero()).then(|| (lhs / hb - h.f_const) / vn),
            )
        };
        Ok(Eval::new(vec![Sides { lhs, rhs }], u, None, t).fit(fit))
    })?;
    let mut report = build_report(variant, settings, evals, Some(("C", FitKind::Max)));
    if basis
        .dual_norm_exact(model.v_norm_kind, &vec![T::one(); basis.n_modes()])
        .is_none()
    {
        report.notes.push(format!(
            "dual norm is a lower bound over {} probes",
            settings.n_probe
        ));
    }
    Ok(report)
}

/// `sup_j ‖B(u + 2^{−j}d) − B(u)‖` at the first and last refinement step.
pub fn noise_continuity<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    t: T,
    u: &[T],
    d: &[T],
) -> Result<(T, T)> {
    let diff = |j: i32| -> Result<T> {
        let h = T::lit(2.0).powi(-j);
        let uj: Vec<T> = u.iter().zip(d).map(|(&a, &b)| a + h * b).collect();
        Ok(model.b_hs_diff_norm_sq(basis, t, &uj, u)?.sqrt())
    };
    Ok((diff(1)?, diff(CONTINUITY_STEPS)?))
}

/// Audits H5 (growth plus H-continuity) or H5star (growth with the `L_B` term).
pub fn check_noise<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
    variant: Condition,
) -> Result<ConditionReport<T>> {
    let h = model.hypothesis;
    let star = variant == Condition::H5Star;
    let l_b = if star {
        require(h.l_b, "L_B", model)?
    } else {
        T::zero()
    };
    let evals = run_samples(variant, settings, |i, rng| {
        let t = sample_time(rng, settings.horizon);
        let u = if i == 0 {
            vec![T::zero(); basis.n_modes()]
        } else {
            sample_state(basis, rng, i)
        };
        let lhs = model.b_hs_norm_sq(basis, t, &u)?;
        let free = h.g_const * (T::one() + dot(&u, &u));
        let vn = model.v_norm(basis, &u)?.powf(model.alpha);
        let mut checks = vec![Sides {
            lhs,
            rhs: free + l_b * vn,
        }];
        let fit = if star {
            (vn > T::zero()).then(|| ((lhs - free) / vn).max(T::zero()))
        } else {
            let d = unit_direction(basis, rng, i + 2);
            let (first, last) = noise_continuity(model, basis, t, &u, &d)?;
            // A Lipschitz map shrinks the difference by 2^{-7} over the sequence.
            checks.push(Sides {
                lhs: last,
                rhs: T::lit(0.5) * first + T::lit(1e-10),
            });
            Some(lhs / (T::one() + dot(&u, &u)))
        };
        Ok(Eval::new(checks, u, None, t).fit(fit))
    })?;
    let mut report = build_report(
        variant,
        settings,
        evals,
        Some((if star { "L_B" } else { "g" }, FitKind::Max)),
    );
    if !star {
        report.notes.push(format!(
            "H-continuity along u + 2^-j d, j = 1..{CONTINUITY_STEPS}"
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiAnalysis<T> {
    pub chi: T,
    /// `2 L_A / χ`.
    pub threshold: T,
    pub l_a: T,
    pub l_b: T,
    pub pass: bool,
    /// Upper end of the admissible moment range `[2, 1 + 2L_A/L_B)`; infinite when `L_B = 0`.
    pub p_upper: T,
}

impl<T: Scalar> ChiAnalysis<T> {
    pub fn admits(&self, p: T) -> bool {
        p >= T::lit(2.0) && p < self.p_upper
    }
}

pub fn chi<T: Scalar>(h: &HypothesisSpec<T>, alpha: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    if alpha <= two {
        (one + h.beta)
            .max(one + h.lambda)
            .max(one + h.gamma + two * h.theta / alpha)
    } else {
        (one + h.beta)
            .max(three + h.lambda - alpha)
            .max(three + h.gamma + h.theta - alpha)
    }
}

pub fn chi_analysis<T: Scalar>(h: &HypothesisSpec<T>, alpha: T) -> Result<ChiAnalysis<T>> {
    let l_a = h
        .l_a
        .ok_or_else(|| SpdeError::IncompleteSpec("L_A is not declared".into()))?;
    let l_b = h
        .l_b
        .ok_or_else(|| SpdeError::IncompleteSpec("L_B is not declared".into()))?;
    let chi = chi(h, alpha);
    let threshold = T::lit(2.0) * l_a / chi;
    let p_upper = if l_b > T::zero() {
        T::one() + T::lit(2.0) * l_a / l_b
    } else {
        T::infinity()
    };
    Ok(ChiAnalysis {
        chi,
        threshold,
        l_a,
        l_b,
        pass: l_b < threshold,
        p_upper,
    })
}

pub fn check_chi_threshold<T: Scalar>(
    h: &HypothesisSpec<T>,
    alpha: T,
) -> Result<ConditionReport<T>> {
    let a = chi_analysis(h, alpha)?;
    let margin = a.threshold - a.l_b;
    let mut fitted_constants = BTreeMap::new();
    fitted_constants.insert("chi".into(), a.chi);
    fitted_constants.insert("threshold".into(), a.threshold);
    fitted_constants.insert("p_upper".into(), a.p_upper);
    Ok(ConditionReport {
        condition: Condition::ChiThreshold,
        n_samples: 1,
        n_violations: usize::from(!a.pass),
        violations: Vec::new(),
        margin_stats: MarginStats {
            min: margin,
            median: margin,
            mean: margin,
        },
        fitted_constants,
        pass: a.pass,
        notes: vec![if a.p_upper.is_finite() {
            format!("admissible p in [2, {})", a.p_upper)
        } else {
            "admissible p in [2, inf)".into()
        }],
    })
}

pub fn check_condition<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
    condition: Condition,
) -> Result<ConditionReport<T>> {
    match condition {
        Condition::H1 => check_hemicontinuity(model, basis, settings),
        Condition::H2 | Condition::H2Prime | Condition::H2Star => {
            check_local_monotonicity(model, basis, settings, condition)
        }
        Condition::H3 | Condition::H3Star => check_coercivity(model, basis, settings, condition),
        Condition::H4 | Condition::H4Star => check_growth(model, basis, settings, condition),
        Condition::H5 | Condition::H5Star => check_noise(model, basis, settings, condition),
        Condition::ChiThreshold => check_chi_threshold(&model.hypothesis, model.alpha),
    }
}

/// Runs every condition the model claims, in declaration order.
pub fn audit<T: Scalar>(
    model: &ModelSpec<T>,
    basis: &SpectralBasis<T>,
    settings: &AuditSettings,
) -> Result<Vec<ConditionReport<T>>> {
    model
        .conditions
        .iter()
        .map(|&c| check_condition(model, basis, settings, c))
        .collect()
}
