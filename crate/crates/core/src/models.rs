//! Model zoo: drift `A(t,·)`, noise `B(t,·)` and declared hypothesis constants.
//!
//! Every operator is expressed in Galerkin coordinates. `apply_a` returns the
//! dual coefficients `⟨A(u), e_k⟩`; nonlinear terms are evaluated pointwise on
//! the collocation grid and projected back by quadrature, with one integration
//! by parts for flux-form (quasilinear) terms.
//!
//! Declared constants refer to the discrete norms of [`SpectralBasis`]. The
//! bounds behind them use only pointwise inequalities and the exactness of the
//! grid quadrature for products of at most four basis functions.

use serde::{Deserialize, Serialize};

use crate::checker::Condition;
use crate::error::{Result, SpdeError};
use crate::scalar::{dot, Scalar};
use crate::solver::Stepper;
use crate::spectral::{BasisKind, SpectralBasis, VNormKind};

/// Lipschitz constant of `a(u) = 1 + 1/(1+u²)`, rounded up from `3√3/8`.
const CD_DIFFUSION_LIPSCHITZ: f64 = 0.65;
/// Weight of the bounded `sin(c_k)` part in the diagonal multiplicative noise.
const DIAG_NOISE_SINE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelKind<T> {
    /// `du = Δu dt + Σ_k σ/(1+λ_k) e_k dW_k`.
    HeatOu { sigma: T },
    /// `du = [∂_x(|∂_x u|^{p−2}∂_x u) − c|u|^{p−2}u] dt + B(u) dW`.
    PLaplacian { p: T, c: T, sigma: T },
    /// `du = ∂_x[a(u)∂_x u + b(u)] dt + B(u) dW` on the torus,
    /// `a(u) = 1 + 1/(1+u²)`, `b(u) = sin u`.
    ConvectionDiffusion { sigma: T },
    /// `du = [−∂ₓ⁴u + ∂ₓ²φ(u)] dt + B(u) dW`, `φ(x) = x³ − x`, Neumann.
    CahnHilliard { sigma: T },
    /// `du = ∂ₓ²u dt + ν ∂_x u dβ` with a single Brownian motion.
    GradientNoiseHeat { nu: T },
    /// `A(u) = Δu + sign(⟨u, e_1⟩) e_1`: discontinuous along lines.
    FixtureBadH1,
    /// `A(u) = −Δu`: anti-diffusive.
    FixtureBadH3,
    /// Heat drift with `B(u)h_1 = κ ‖u‖_V e_1`.
    FixtureBadH5 { kappa: T },
}

/// Declared constants of the hypothesis inequalities.
///
/// `c_coercive` is `c` of the Part I coercivity bound, `l_a` and `l_b` the
/// Part II constants. `side_c` is the `C` bounding `|ρ| + |η|`; `None` means
/// the model does not claim that growth bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec<T> {
    pub f_const: T,
    pub g_const: T,
    pub c_coercive: T,
    pub growth_c: T,
    pub beta: T,
    pub gamma: T,
    pub theta: T,
    pub lambda: T,
    pub l_a: Option<T>,
    pub l_b: Option<T>,
    pub side_c: Option<T>,
}

impl<T: Scalar> HypothesisSpec<T> {
    fn base(f_const: T, g_const: T, c_coercive: T, growth_c: T, beta: T) -> Self {
        Self {
            f_const,
            g_const,
            c_coercive,
            growth_c,
            beta,
            gamma: T::zero(),
            theta: T::zero(),
            lambda: T::zero(),
            l_a: None,
            l_b: None,
            side_c: Some(T::one()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub name: String,
    pub alpha: T,
    pub v_norm_kind: VNormKind<T>,
    pub basis_kind: BasisKind,
    pub kind: ModelKind<T>,
    pub hypothesis: HypothesisSpec<T>,
    /// Conditions the model claims, in audit order.
    pub conditions: Vec<Condition>,
}

const PART_ONE: [Condition; 6] = [
    Condition::H1,
    Condition::H2,
    Condition::H2Prime,
    Condition::H3,
    Condition::H4,
    Condition::H5,
];

const PART_TWO: [Condition; 6] = [
    Condition::H1,
    Condition::H2Star,
    Condition::H3Star,
    Condition::H4Star,
    Condition::H5Star,
    Condition::ChiThreshold,
];

impl<T: Scalar> ModelSpec<T> {
    pub fn heat_ou(sigma: T) -> Self {
        let s2 = sigma * sigma;
        // Σ_k 1/(1+k²)² < 0.31, so σ²/2 bounds ‖B‖²_{L₂}.
        let mut h = HypothesisSpec::base(
            T::lit(2.0) + s2 / T::lit(2.0),
            s2 / T::lit(2.0),
            T::lit(2.0),
            T::one(),
            T::zero(),
        );
        h.l_a = Some(T::one());
        h.l_b = Some(T::zero());
        let mut conditions = PART_ONE.to_vec();
        conditions.extend_from_slice(&PART_TWO[1..]);
        Self {
            name: "heat-ou".into(),
            alpha: T::lit(2.0),
            v_norm_kind: VNormKind::Spectral { s: T::one() },
            basis_kind: BasisKind::DirichletInterval,
            kind: ModelKind::HeatOu { sigma },
            hypothesis: h,
            conditions,
        }
    }

    pub fn p_laplacian(p: T, c: T, sigma: T) -> Self {
        // Diagonal noise is 0.6σ-Lipschitz in H; Poincaré on (0, π) gives ‖u‖_{L^p} ≤ π‖u_x‖_{L^p}.
        let lip = T::lit(0.36) * sigma * sigma;
        let growth = (T::one() + c * T::PI().powf(p)).powf(p / (p - T::one()));
        let h = HypothesisSpec::base(lip, lip, T::lit(2.0), growth, T::zero());
        Self {
            name: "p-laplacian".into(),
            alpha: p,
            v_norm_kind: VNormKind::GradientSeminorm { alpha: p },
            basis_kind: BasisKind::DirichletInterval,
            kind: ModelKind::PLaplacian { p, c, sigma },
            hypothesis: h,
            conditions: PART_ONE.to_vec(),
        }
    }

    pub fn convection_diffusion(sigma: T) -> Self {
        let lip = T::lit(1.21) * sigma * sigma;
        let mut h = HypothesisSpec::base(T::lit(2.0) + lip, lip, T::one(), T::lit(5.0), T::zero());
        h.side_c = None;
        Self {
            name: "convection-diffusion".into(),
            alpha: T::lit(2.0),
            v_norm_kind: VNormKind::Spectral { s: T::one() },
            basis_kind: BasisKind::PeriodicTorus,
            kind: ModelKind::ConvectionDiffusion { sigma },
            hypothesis: h,
            conditions: vec![
                Condition::H1,
                Condition::H2,
                Condition::H3,
                Condition::H4,
                Condition::H5,
            ],
        }
    }

    pub fn cahn_hilliard(sigma: T) -> Self {
        let lip = T::lit(1.21) * sigma * sigma;
        let mut h =
            HypothesisSpec::base(T::lit(5.0) + lip, lip, T::one(), T::lit(100.0), T::lit(4.0));
        h.gamma = T::lit(2.0);
        h.side_c = Some(T::lit(440.0));
        Self {
            name: "cahn-hilliard".into(),
            alpha: T::lit(2.0),
            v_norm_kind: VNormKind::Spectral { s: T::lit(2.0) },
            basis_kind: BasisKind::NeumannInterval,
            kind: ModelKind::CahnHilliard { sigma },
            hypothesis: h,
            conditions: PART_ONE.to_vec(),
        }
    }

    pub fn gradient_noise_heat(nu: T) -> Self {
        let mut h = HypothesisSpec::base(
            T::zero(),
            T::zero(),
            T::lit(2.0) - nu * nu,
            T::one(),
            T::zero(),
        );
        h.l_a = Some(T::one());
        h.l_b = Some(nu * nu);
        Self {
            name: "gradient-noise-heat".into(),
            alpha: T::lit(2.0),
            v_norm_kind: VNormKind::GradientSeminorm { alpha: T::lit(2.0) },
            basis_kind: BasisKind::DirichletInterval,
            kind: ModelKind::GradientNoiseHeat { nu },
            hypothesis: h,
            conditions: PART_TWO.to_vec(),
        }
    }

    pub fn fixture_bad_h1() -> Self {
        let mut m = Self::heat_ou(T::zero());
        m.name = "fixture-bad-h1".into();
        m.kind = ModelKind::FixtureBadH1;
        m.conditions = vec![Condition::H1];
        m
    }

    pub fn fixture_bad_h3() -> Self {
        let mut m = Self::heat_ou(T::zero());
        m.name = "fixture-bad-h3".into();
        m.kind = ModelKind::FixtureBadH3;
        m.hypothesis.f_const = T::one();
        m.hypothesis.c_coercive = T::one();
        m.conditions = vec![Condition::H3];
        m
    }

    pub fn fixture_bad_h5() -> Self {
        let mut m = Self::heat_ou(T::zero());
        m.name = "fixture-bad-h5".into();
        m.kind = ModelKind::FixtureBadH5 { kappa: T::one() };
        m.hypothesis.g_const = T::one();
        m.conditions = vec![Condition::H5];
        m
    }

    /// Builds a zoo model from its name and optional parameters.
    pub fn by_name(name: &str, params: &ModelParams<T>) -> Option<Self> {
        let sigma = params.sigma.unwrap_or(T::lit(0.5));
        Some(match name {
            "heat-ou" | "heat" => Self::heat_ou(sigma),
            "p-laplacian" => Self::p_laplacian(
                params.p.unwrap_or(T::lit(4.0)),
                params.c.unwrap_or(T::one()),
                sigma,
            ),
            "convection-diffusion" => Self::convection_diffusion(sigma),
            "cahn-hilliard" => Self::cahn_hilliard(sigma),
            "gradient-noise-heat" => Self::gradient_noise_heat(params.nu.unwrap_or(T::one())),
            "fixture-bad-h1" => Self::fixture_bad_h1(),
            "fixture-bad-h3" => Self::fixture_bad_h3(),
            "fixture-bad-h5" => Self::fixture_bad_h5(),
            _ => return None,
        })
    }

    pub const ZOO: [&'static str; 5] = [
        "heat-ou",
        "p-laplacian",
        "convection-diffusion",
        "cahn-hilliard",
        "gradient-noise-heat",
    ];

    pub const FIXTURES: [&'static str; 3] = ["fixture-bad-h1", "fixture-bad-h3", "fixture-bad-h5"];

    /// A basis of the model's kind and V-weight with `G = 4n` unless given.
    pub fn basis(&self, n_modes: usize, grid_size: Option<usize>) -> Result<SpectralBasis<T>> {
        let s = match self.v_norm_kind {
            VNormKind::Spectral { s } => s,
            VNormKind::GradientSeminorm { .. } => T::one(),
        };
        SpectralBasis::new(
            self.basis_kind,
            n_modes,
            grid_size.unwrap_or(4 * n_modes),
            s,
        )
    }

    pub fn default_stepper(&self) -> Stepper {
        match self.kind {
            ModelKind::PLaplacian { .. } | ModelKind::FixtureBadH3 => Stepper::ExplicitTamed,
            _ => Stepper::SemiImplicit,
        }
    }

    fn check_basis(&self, basis: &SpectralBasis<T>) -> Result<()> {
        if basis.kind() != self.basis_kind {
            return Err(SpdeError::BasisKindMismatch {
                model: self.name.clone(),
                expected: self.basis_kind,
                got: basis.kind(),
            });
        }
        Ok(())
    }

    pub fn v_norm(&self, basis: &SpectralBasis<T>, coeffs: &[T]) -> Result<T> {
        basis.v_norm(self.v_norm_kind, coeffs)
    }

    /// Dual coefficients `⟨A(t, u), e_k⟩`, `k = 1..n`.
    pub fn apply_a(&self, basis: &SpectralBasis<T>, _t: T, coeffs: &[T]) -> Result<Vec<T>> {
        self.check_basis(basis)?;
        if coeffs.len() != basis.n_modes() {
            return Err(SpdeError::DimensionMismatch {
                expected: basis.n_modes(),
                got: coeffs.len(),
            });
        }
        let lam = basis.eigenvalues();
        let laplace = || -> Vec<T> { coeffs.iter().zip(lam).map(|(&c, &l)| -l * c).collect() };
        Ok(match self.kind {
            ModelKind::HeatOu { .. }
            | ModelKind::GradientNoiseHeat { .. }
            | ModelKind::FixtureBadH5 { .. } => laplace(),
            ModelKind::FixtureBadH1 => {
                let mut a = laplace();
                a[0] += if coeffs[0] > T::zero() {
                    T::one()
                } else if coeffs[0] < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                a
            }
            ModelKind::FixtureBadH3 => coeffs.iter().zip(lam).map(|(&c, &l)| l * c).collect(),
            ModelKind::PLaplacian { p, c, .. } => {
                let ux = basis.synthesize_derivative(coeffs)?;
                let flux: Vec<T> = ux
                    .iter()
                    .map(|&d| d.abs().powf(p - T::lit(2.0)) * d)
                    .collect();
                let mut out: Vec<T> = basis
                    .analyze_against_derivative(&flux)?
                    .into_iter()
                    .map(|v| -v)
                    .collect();
                if c != T::zero() {
                    let u = basis.synthesize(coeffs)?;
                    let zeroth: Vec<T> = u
                        .iter()
                        .map(|&v| v.abs().powf(p - T::lit(2.0)) * v)
                        .collect();
                    for (o, z) in out.iter_mut().zip(basis.analyze(&zeroth)?) {
                        *o -= c * z;
                    }
                }
                out
            }
            ModelKind::ConvectionDiffusion { .. } => {
                let u = basis.synthesize(coeffs)?;
                let ux = basis.synthesize_derivative(coeffs)?;
                let flux: Vec<T> = u
                    .iter()
                    .zip(&ux)
                    .map(|(&v, &d)| cd_diffusivity(v) * d + v.sin())
                    .collect();
                basis
                    .analyze_against_derivative(&flux)?
                    .into_iter()
                    .map(|v| -v)
                    .collect()
            }
            ModelKind::CahnHilliard { .. } => {
                let u = basis.synthesize(coeffs)?;
                let phi: Vec<T> = u.iter().map(|&v| v * v * v - v).collect();
                let phi_k = basis.analyze(&phi)?;
                coeffs
                    .iter()
                    .zip(lam)
                    .zip(phi_k)
                    .map(|((&c, &l), f)| -l * l * c - l * f)
                    .collect()
            }
        })
    }

    /// Diagonal `L` with `A(u) = L u + (remainder)`, used by the semi-implicit stepper.
    pub fn linear_part(&self, basis: &SpectralBasis<T>) -> Option<Vec<T>> {
        let lam = basis.eigenvalues();
        match self.kind {
            ModelKind::HeatOu { .. }
            | ModelKind::GradientNoiseHeat { .. }
            | ModelKind::FixtureBadH1
            | ModelKind::FixtureBadH5 { .. }
            | ModelKind::ConvectionDiffusion { .. } => Some(lam.iter().map(|&l| -l).collect()),
            ModelKind::CahnHilliard { .. } => Some(lam.iter().map(|&l| -l * l).collect()),
            ModelKind::PLaplacian { .. } | ModelKind::FixtureBadH3 => None,
        }
    }

    /// Number of noise directions `h_i` the model reads from an increment row.
    pub fn noise_modes(&self, n_modes: usize) -> usize {
        match self.kind {
            ModelKind::HeatOu { .. }
            | ModelKind::PLaplacian { .. }
            | ModelKind::ConvectionDiffusion { .. }
            | ModelKind::CahnHilliard { .. } => n_modes,
            ModelKind::GradientNoiseHeat { .. } | ModelKind::FixtureBadH5 { .. } => 1,
            ModelKind::FixtureBadH1 | ModelKind::FixtureBadH3 => 0,
        }
    }

    /// Coefficients `b_k(u)` of a diagonal noise `B(u)h_k = b_k(u) e_k`.
    fn diagonal_noise(&self, basis: &SpectralBasis<T>, coeffs: &[T]) -> Option<Vec<T>> {
        let lam = basis.eigenvalues();
        match self.kind {
            ModelKind::HeatOu { sigma } => {
                Some(lam.iter().map(|&l| sigma / (T::one() + l)).collect())
            }
            ModelKind::PLaplacian { sigma, .. }
            | ModelKind::ConvectionDiffusion { sigma }
            | ModelKind::CahnHilliard { sigma } => Some(
                coeffs
                    .iter()
                    .zip(lam)
                    .map(|(&c, &l)| {
                        sigma * (c / (T::one() + l) + T::lit(DIAG_NOISE_SINE) * c.sin())
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `P_n B(t, u) Q_n ΔW` in `H_n` coordinates.
    pub fn apply_b_increment(
        &self,
        basis: &SpectralBasis<T>,
        _t: T,
        coeffs: &[T],
        row: &[T],
    ) -> Result<Vec<T>> {
        self.check_basis(basis)?;
        let n = basis.n_modes();
        let used = self.noise_modes(n);
        if row.len() < used {
            return Err(SpdeError::DimensionMismatch {
                expected: used,
                got: row.len(),
            });
        }
        if let Some(b) = self.diagonal_noise(basis, coeffs) {
            return Ok(b.iter().zip(row).map(|(&b, &dw)| b * dw).collect());
        }
        Ok(match self.kind {
            ModelKind::GradientNoiseHeat { nu } => {
                let dbeta = row[0];
                if dbeta == T::zero() {
                    vec![T::zero(); n]
                } else {
                    basis
                        .derivative_projection(coeffs)?
                        .into_iter()
                        .map(|v| nu * dbeta * v)
                        .collect()
                }
            }
            ModelKind::FixtureBadH5 { kappa } => {
                let mut out = vec![T::zero(); n];
                out[0] = kappa * self.v_norm(basis, coeffs)? * row[0];
                out
            }
            _ => vec![T::zero(); n],
        })
    }

    /// `‖B(t, u)‖²_{L₂}` with each column's H-norm taken before projection onto `H_n`.
    pub fn b_hs_norm_sq(&self, basis: &SpectralBasis<T>, _t: T, coeffs: &[T]) -> Result<T> {
        self.check_basis(basis)?;
        if let Some(b) = self.diagonal_noise(basis, coeffs) {
            return Ok(dot(&b, &b));
        }
        Ok(match self.kind {
            ModelKind::GradientNoiseHeat { nu } => {
                let ux = basis.synthesize_derivative(coeffs)?;
                nu * nu * basis.integrate(&ux.iter().map(|&d| d * d).collect::<Vec<_>>())
            }
            ModelKind::FixtureBadH5 { kappa } => {
                let v = self.v_norm(basis, coeffs)?;
                kappa * kappa * v * v
            }
            _ => T::zero(),
        })
    }

    /// `‖B(t, u) − B(t, v)‖²_{L₂}`.
    pub fn b_hs_diff_norm_sq(
        &self,
        basis: &SpectralBasis<T>,
        _t: T,
        u: &[T],
        v: &[T],
    ) -> Result<T> {
        self.check_basis(basis)?;
        if let (Some(bu), Some(bv)) = (self.diagonal_noise(basis, u), self.diagonal_noise(basis, v))
        {
            return Ok(bu.iter().zip(&bv).map(|(&a, &b)| (a - b) * (a - b)).sum());
        }
        Ok(match self.kind {
            ModelKind::GradientNoiseHeat { nu } => {
                let w: Vec<T> = u.iter().zip(v).map(|(&a, &b)| a - b).collect();
                let wx = basis.synthesize_derivative(&w)?;
                nu * nu * basis.integrate(&wx.iter().map(|&d| d * d).collect::<Vec<_>>())
            }
            ModelKind::FixtureBadH5 { kappa } => {
                let d = self.v_norm(basis, u)? - self.v_norm(basis, v)?;
                kappa * kappa * d * d
            }
            _ => T::zero(),
        })
    }

    /// `‖P_n B(t, u) Q_n‖²_{L₂}`: the Itô correction seen by the Galerkin system.
    pub fn projected_b_hs_norm_sq(
        &self,
        basis: &SpectralBasis<T>,
        t: T,
        coeffs: &[T],
    ) -> Result<T> {
        match self.kind {
            ModelKind::GradientNoiseHeat { nu } => {
                let p = basis.derivative_projection(coeffs)?;
                Ok(nu * nu * dot(&p, &p))
            }
            _ => self.b_hs_norm_sq(basis, t, coeffs),
        }
    }

    /// `ρ(u)` of the local monotonicity bound.
    pub fn rho(&self, basis: &SpectralBasis<T>, coeffs: &[T]) -> Result<T> {
        Ok(match self.kind {
            ModelKind::CahnHilliard { .. } => {
                T::lit(4.5) * grid_sup(&basis.synthesize(coeffs)?).powi(4)
            }
            _ => T::zero(),
        })
    }

    /// `η(v)` of the local monotonicity bound.
    pub fn eta(&self, basis: &SpectralBasis<T>, coeffs: &[T]) -> Result<T> {
        Ok(match self.kind {
            ModelKind::CahnHilliard { .. } => {
                T::lit(4.5) * grid_sup(&basis.synthesize(coeffs)?).powi(4)
            }
            ModelKind::ConvectionDiffusion { .. } => {
                let vx_sup = grid_sup(&basis.synthesize_derivative(coeffs)?);
                let k = T::lit(CD_DIFFUSION_LIPSCHITZ) * vx_sup + T::one();
                k * k / T::lit(2.0)
            }
            _ => T::zero(),
        })
    }

    /// `K(R)` of the general local monotonicity bound, if declared.
    pub fn k_of_r(&self, r: T) -> Option<T> {
        match self.kind {
            ModelKind::HeatOu { .. }
            | ModelKind::PLaplacian { .. }
            | ModelKind::GradientNoiseHeat { .. } => Some(T::zero()),
            ModelKind::CahnHilliard { .. } => Some(T::lit(0.5) + T::lit(220.0) * r.powi(4)),
            _ => None,
        }
    }
}

/// Optional parameters accepted by [`ModelSpec::by_name`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub sigma: Option<T>,
    pub p: Option<T>,
    pub c: Option<T>,
    pub nu: Option<T>,
}

fn cd_diffusivity<T: Scalar>(u: T) -> T {
    T::one() + T::one() / (T::one() + u * u)
}

fn grid_sup<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn smooth_random(rng: &mut ChaCha8Rng, basis: &SpectralBasis<f64>, amp: f64) -> Vec<f64> {
        basis
            .eigenvalues()
            .iter()
            .map(|&l| amp * rng.sample::<f64, _>(StandardNormal) / (1.0 + l))
            .collect()
    }

    /// Weak forms evaluated directly on an independent grid four times finer.
    fn weak_form_oracle(model: &ModelSpec<f64>, n: usize, u: &[f64], v: &[f64]) -> f64 {
        let fine = model.basis(n, Some(16 * n)).unwrap();
        let uu = fine.synthesize(u).unwrap();
        let ux = fine.synthesize_derivative(u).unwrap();
        let vv = fine.synthesize(v).unwrap();
        let vx = fine.synthesize_derivative(v).unwrap();
        let lam = fine.eigenvalues();
        let integrand: Vec<f64> = match model.kind {
            ModelKind::HeatOu { .. } => ux.iter().zip(&vx).map(|(a, b)| -a * b).collect(),
            ModelKind::PLaplacian { p, c, .. } => (0..uu.len())
                .map(|j| {
                    -ux[j].abs().powf(p - 2.0) * ux[j] * vx[j]
                        - c * uu[j].abs().powf(p - 2.0) * uu[j] * vv[j]
                })
                .collect(),
            ModelKind::ConvectionDiffusion { .. } => (0..uu.len())
                .map(|j| -((1.0 + 1.0 / (1.0 + uu[j] * uu[j])) * ux[j] + uu[j].sin()) * vx[j])
                .collect(),
            ModelKind::CahnHilliard { .. } => {
                // −∫ u_xx v_xx + ∫ φ(u) v_xx
                let lap = |c: &[f64]| -> Vec<f64> {
                    let d: Vec<f64> = c.iter().zip(lam).map(|(a, l)| -l * a).collect();
                    fine.synthesize(&d).unwrap()
                };
                let uxx = lap(u);
                let vxx = lap(v);
                (0..uu.len())
                    .map(|j| -uxx[j] * vxx[j] + (uu[j].powi(3) - uu[j]) * vxx[j])
                    .collect()
            }
            _ => unreachable!(),
        };
        fine.integrate(&integrand)
    }

    #[test]
    fn weak_form_consistency_across_zoo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        for model in [
            ModelSpec::heat_ou(0.5),
            ModelSpec::p_laplacian(4.0, 1.0, 0.5),
            ModelSpec::p_laplacian(6.0, 0.5, 0.5),
            ModelSpec::convection_diffusion(0.5),
            ModelSpec::cahn_hilliard(0.5),
        ] {
            let basis = model.basis(n, None).unwrap();
            for _ in 0..20 {
                let u = smooth_random(&mut rng, &basis, 0.7);
                let v = smooth_random(&mut rng, &basis, 1.0);
                let a = model.apply_a(&basis, 0.0, &u).unwrap();
                let got = basis.dual_pairing(&a, &v).unwrap();
                let oracle = weak_form_oracle(&model, n, &u, &v);
                assert!(
                    (got - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
                    "{}: {got} vs {oracle}",
                    model.name
                );
            }
        }
    }

    #[test]
    fn odd_p_collocation_converges_under_refinement() {
        // |u_x| u_x is only C¹, so the G = 4n collocation is not exact; the gap closes with G.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = ModelSpec::p_laplacian(3.0, 0.5, 0.0);
        let n = 12;
        let b = m.basis(n, None).unwrap();
        let u = smooth_random(&mut rng, &b, 0.7);
        let v = smooth_random(&mut rng, &b, 1.0);
        let oracle = weak_form_oracle(&m, n, &u, &v);
        let gap = |g: usize| {
            let bg = m.basis(n, Some(g)).unwrap();
            (bg.dual_pairing(&m.apply_a(&bg, 0.0, &u).unwrap(), &v)
                .unwrap()
                - oracle)
                .abs()
        };
        assert!(gap(4 * n) <= 1e-2 * oracle.abs());
        assert!(gap(8 * n) < gap(4 * n));
    }

    #[test]
    fn heat_acts_on_eigenfunctions() {
        let m = ModelSpec::heat_ou(0.0);
        let b = m.basis(5, None).unwrap();
        let a = m.apply_a(&b, 0.0, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, vec![-1.0, 0.0, 0.0, 0.0, 0.0]);
        let a3 = m.apply_a(&b, 0.0, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(a3[2], -9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            b.dual_pairing(&a, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
            -1.0
        );
    }

    #[test]
    fn p_laplacian_first_mode() {
        // −(2/π)² ∫₀^π cos⁴x dx = −3/(2π); cross-checked against 2¹⁴-point quadrature.
        let pi = std::f64::consts::PI;
        let dense = 1 << 14;
        let h = pi / dense as f64;
        let quad: f64 = -(2.0 / pi).powi(2)
            * (0..dense)
                .map(|j| ((j as f64 + 0.5) * h).cos().powi(4) * h)
                .sum::<f64>();
        assert_abs_diff_eq!(quad, -3.0 / (2.0 * pi), epsilon = 1e-12);
        let m = ModelSpec::p_laplacian(4.0, 0.0, 0.0);
        let b = m.basis(4, None).unwrap();
        let a = m.apply_a(&b, 0.0, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(a[0], -0.477_464_829_275_686, epsilon = 1e-12);
    }

    #[test]
    fn cahn_hilliard_linear_part_on_second_mode() {
        let m = ModelSpec::cahn_hilliard(0.0);
        let b = m.basis(4, None).unwrap();
        let l = m.linear_part(&b).unwrap();
        assert_eq!(l[1], -1.0);
        assert_eq!(l[2], -16.0);
    }

    #[test]
    fn basis_kind_mismatch_is_rejected() {
        let m = ModelSpec::convection_diffusion(0.1);
        let b =
            SpectralBasis::<f64>::with_default_grid(BasisKind::DirichletInterval, 4, 1.0).unwrap();
        assert!(matches!(
            m.apply_a(&b, 0.0, &[0.0; 4]),
            Err(SpdeError::BasisKindMismatch { .. })
        ));
        assert!(matches!(
            m.apply_b_increment(&b, 0.0, &[0.0; 4], &[0.0; 4]),
            Err(SpdeError::BasisKindMismatch { .. })
        ));
    }

    #[test]
    fn additive_noise_increment() {
        let m = ModelSpec::heat_ou(0.3);
        let b = m.basis(3, None).unwrap();
        let row = [0.1, -0.2, 0.4];
        let inc = m
            .apply_b_increment(&b, 0.0, &[5.0, 6.0, 7.0], &row)
            .unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(
                inc[k],
                0.3 / (1.0 + b.eigenvalues()[k]) * row[k],
                epsilon = 1e-15
            );
        }
        let hs = m.b_hs_norm_sq(&b, 0.0, &[9.0, 9.0, 9.0]).unwrap();
        assert_abs_diff_eq!(
            hs,
            0.09 * (0.25 + 1.0 / 25.0 + 1.0 / 100.0),
            epsilon = 1e-15
        );
        assert!(m
            .apply_b_increment(&b, 0.0, &[0.0; 3], &[0.0; 3])
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_noise_on_first_mode() {
        // ∂_x e_1 = √(2/π) cos x; its projection onto the sine family by dense quadrature.
        let pi = std::f64::consts::PI;
        let nu = 0.8;
        let dbeta = 0.3;
        let m = ModelSpec::gradient_noise_heat(nu);
        let b = m.basis(6, None).unwrap();
        let inc = m
            .apply_b_increment(&b, 0.0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[dbeta])
            .unwrap();
        let dense = 1 << 15;
        let h = pi / dense as f64;
        for (k, &got) in inc.iter().enumerate() {
            let kk = (k + 1) as f64;
            let proj: f64 = (0..dense)
                .map(|j| {
                    let x = (j as f64 + 0.5) * h;
                    (2.0 / pi) * x.cos() * (kk * x).sin() * h
                })
                .sum();
            assert_abs_diff_eq!(got, nu * dbeta * proj, epsilon = 1e-8);
        }
        // ‖ν ∂_x e_1‖²_H = ν² (2/π) ∫cos² = ν²
        assert_abs_diff_eq!(
            m.b_hs_norm_sq(&b, 0.0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
                .unwrap(),
            nu * nu,
            epsilon = 1e-12
        );
        assert!(
            m.projected_b_hs_norm_sq(&b, 0.0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
                .unwrap()
                < nu * nu
        );
        assert_eq!(m.b_hs_norm_sq(&b, 0.0, &[0.0; 6]).unwrap(), 0.0);
    }

    #[test]
    fn galerkin_truncation_commutes_only_for_linear_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let heat = ModelSpec::heat_ou(0.0);
        let (big, small) = (heat.basis(16, None).unwrap(), heat.basis(8, None).unwrap());
        let u = smooth_random(&mut rng, &big, 1.0);
        let full = heat.apply_a(&big, 0.0, &u).unwrap();
        let trunc = heat.apply_a(&small, 0.0, &u[..8]).unwrap();
        for k in 0..8 {
            assert_abs_diff_eq!(full[k], trunc[k], epsilon = 1e-10);
        }

        // The cubic Cahn–Hilliard term couples high and low modes: truncation changes the drift.
        let ch = ModelSpec::cahn_hilliard(0.0);
        let (big, small) = (ch.basis(16, None).unwrap(), ch.basis(8, None).unwrap());
        let u: Vec<f64> = (0..16).map(|k| 2.0 / (1.0 + k as f64)).collect();
        let full = ch.apply_a(&big, 0.0, &u).unwrap();
        let trunc = ch.apply_a(&small, 0.0, &u[..8]).unwrap();
        let gap: f64 = (0..8)
            .map(|k| (full[k] - trunc[k]).abs())
            .fold(0.0, f64::max);
        assert!(gap > 1e-3);
    }

    #[test]
    fn lookup_by_name() {
        let p = ModelParams {
            sigma: Some(0.2),
            ..Default::default()
        };
        for name in ModelSpec::<f64>::ZOO
            .iter()
            .chain(ModelSpec::<f64>::FIXTURES.iter())
        {
            let m = ModelSpec::<f64>::by_name(name, &p).unwrap();
            assert_eq!(&m.name, name);
            assert!(m.alpha > 1.0);
        }
        assert!(ModelSpec::<f64>::by_name("burgers", &p).is_none());
        assert_eq!(
            ModelSpec::<f64>::by_name("p-laplacian", &p).unwrap().alpha,
            4.0
        );
    }
}
