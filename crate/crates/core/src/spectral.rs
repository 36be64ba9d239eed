//! Concrete Gelfand triple `V ⊆ H ⊆ V*` on a one-dimensional domain.
//!
//! `H = L²` is represented by an orthonormal eigenbasis of `−Δ` together with
//! a uniform collocation grid. Coefficients live in `H_n = span{e_1..e_n}`;
//! grid values are used for pointwise nonlinearities and quadrature.
//!
//! Interval kinds use the cell-centred grid `x_j = (j + 1/2)π/G`, which is
//! the periodic trapezoid rule for the even extension of every integrand we
//! form (products of sines, products of cosines, `|u_x|^p`). The torus uses
//! `x_j = 2πj/G`. With `G ≥ 4n` the rule is exact for all products of up to
//! four basis functions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdeError};
use crate::scalar::{dot, l2_norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `(0, π)` with `e_k = √(2/π) sin(kx)`, `λ_k = k²`.
    DirichletInterval,
    /// `(0, π)` with `e_1 = 1/√π`, `e_k = √(2/π) cos((k−1)x)`, `λ_k = (k−1)²`.
    NeumannInterval,
    /// `(0, 2π)` with the real Fourier basis ordered `1, cos x, sin x, cos 2x, …`.
    PeriodicTorus,
}

impl BasisKind {
    pub fn domain_length(self) -> f64 {
        match self {
            BasisKind::DirichletInterval | BasisKind::NeumannInterval => std::f64::consts::PI,
            BasisKind::PeriodicTorus => 2.0 * std::f64::consts::PI,
        }
    }
}

/// How a model measures `‖u‖_V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VNormKind<T> {
    /// `(Σ (1+λ_k)^s c_k²)^{1/2}`.
    Spectral { s: T },
    /// `(Σ_j w_j |∂_x u(x_j)|^α)^{1/α}`.
    GradientSeminorm { alpha: T },
}

/// Coefficient vector in `H_n` at a model time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinState<T> {
    pub coeffs: Vec<T>,
    pub time: T,
}

impl<T: Scalar> GalerkinState<T> {
    pub fn new(coeffs: Vec<T>, time: T) -> Self {
        Self { coeffs, time }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coeffs: vec![T::zero(); n_modes],
            time: T::zero(),
        }
    }

    /// Unit vector on the 1-based basis index `k`.
    pub fn unit(n_modes: usize, k: usize) -> Self {
        let mut s = Self::zeros(n_modes);
        s.coeffs[k - 1] = T::one();
        s
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite()) && self.time.is_finite()
    }

    /// Zero-pad (or truncate) to `n_modes` coordinates.
    pub fn resized(&self, n_modes: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(n_modes, T::zero());
        Self {
            coeffs,
            time: self.time,
        }
    }
}

/// Result of a dual-norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNormEstimate<T> {
    /// `max ⟨F, v⟩ / ‖v‖_V` over the probes; never exceeds `‖F‖_{V*}`.
    pub lower_bound: T,
    /// Closed form, available when the V-norm is diagonal in the basis.
    pub exact: Option<T>,
}

impl<T: Scalar> DualNormEstimate<T> {
    pub fn best(&self) -> T {
        self.exact.unwrap_or(self.lower_bound)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis<T> {
    kind: BasisKind,
    n_modes: usize,
    grid_size: usize,
    v_weight_exponent: T,
    eigenvalues: Vec<T>,
    nodes: Vec<T>,
    weights: Vec<T>,
    /// Row `k` holds `e_k(x_j)`.
    values: Vec<T>,
    /// Row `k` holds `e_k'(x_j)`.
    derivs: Vec<T>,
    /// Row `k` holds `⟨e_j', e_k⟩` for `j = 1..n`.
    dmat: Vec<T>,
}

impl<T: Scalar> SpectralBasis<T> {
    pub fn new(
        kind: BasisKind,
        n_modes: usize,
        grid_size: usize,
        v_weight_exponent: T,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(SpdeError::InvalidDimension(
                "n_modes must be at least 1".into(),
            ));
        }
        if grid_size < 4 * n_modes {
            return Err(SpdeError::InvalidDimension(format!(
                "grid_size {grid_size} < 4 * n_modes = {}",
                4 * n_modes
            )));
        }
        if !(v_weight_exponent >= T::zero()) {
            return Err(SpdeError::InvalidDimension(
                "v_weight_exponent must be >= 0".into(),
            ));
        }
        let pi = T::PI();
        let g = T::from_usize_lossy(grid_size);
        let (nodes, weights): (Vec<T>, Vec<T>) = match kind {
            BasisKind::DirichletInterval | BasisKind::NeumannInterval => (0..grid_size)
                .map(|j| ((T::from_usize_lossy(j) + T::lit(0.5)) * pi / g, pi / g))
                .unzip(),
            BasisKind::PeriodicTorus => (0..grid_size)
                .map(|j| {
                    (
                        T::lit(2.0) * pi * T::from_usize_lossy(j) / g,
                        T::lit(2.0) * pi / g,
                    )
                })
                .unzip(),
        };

        let mut eigenvalues = Vec::with_capacity(n_modes);
        let mut values = Vec::with_capacity(n_modes * grid_size);
        let mut derivs = Vec::with_capacity(n_modes * grid_size);
        let sqrt_2_pi = (T::lit(2.0) / pi).sqrt();
        for idx in 0..n_modes {
            match kind {
                BasisKind::DirichletInterval => {
                    let k = T::from_usize_lossy(idx + 1);
                    eigenvalues.push(k * k);
                    for &x in &nodes {
                        values.push(sqrt_2_pi * (k * x).sin());
                        derivs.push(sqrt_2_pi * k * (k * x).cos());
                    }
                }
                BasisKind::NeumannInterval => {
                    let k = T::from_usize_lossy(idx);
                    eigenvalues.push(k * k);
                    if idx == 0 {
                        let c = T::one() / pi.sqrt();
                        values.extend(nodes.iter().map(|_| c));
                        derivs.extend(nodes.iter().map(|_| T::zero()));
                    } else {
                        for &x in &nodes {
                            values.push(sqrt_2_pi * (k * x).cos());
                            derivs.push(-sqrt_2_pi * k * (k * x).sin());
                        }
                    }
                }
                BasisKind::PeriodicTorus => {
                    let wave = idx.div_ceil(2);
                    let k = T::from_usize_lossy(wave);
                    eigenvalues.push(k * k);
                    if idx == 0 {
                        let c = T::one() / (T::lit(2.0) * pi).sqrt();
                        values.extend(nodes.iter().map(|_| c));
                        derivs.extend(nodes.iter().map(|_| T::zero()));
                    } else {
                        let c = T::one() / pi.sqrt();
                        let is_cos = idx % 2 == 1;
                        for &x in &nodes {
                            if is_cos {
                                values.push(c * (k * x).cos());
                                derivs.push(-c * k * (k * x).sin());
                            } else {
                                values.push(c * (k * x).sin());
                                derivs.push(c * k * (k * x).cos());
                            }
                        }
                    }
                }
            }
        }

        let dmat = derivative_matrix(kind, n_modes, &nodes, &weights, &values, &derivs);
        Ok(Self {
            kind,
            n_modes,
            grid_size,
            v_weight_exponent,
            eigenvalues,
            nodes,
            weights,
            values,
            derivs,
            dmat,
        })
    }

    /// Basis with the default grid `G = 4n`.
    pub fn with_default_grid(
        kind: BasisKind,
        n_modes: usize,
        v_weight_exponent: T,
    ) -> Result<Self> {
        Self::new(kind, n_modes, 4 * n_modes, v_weight_exponent)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn v_weight_exponent(&self) -> T {
        self.v_weight_exponent
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `e_k(x_j)` for the 0-based mode index `k`.
    pub fn mode_values(&self, k: usize) -> &[T] {
        &self.values[k * self.grid_size..(k + 1) * self.grid_size]
    }

    pub fn mode_derivatives(&self, k: usize) -> &[T] {
        &self.derivs[k * self.grid_size..(k + 1) * self.grid_size]
    }

    fn check_coeffs(&self, coeffs: &[T]) -> Result<()> {
        if coeffs.len() != self.n_modes {
            return Err(SpdeError::DimensionMismatch {
                expected: self.n_modes,
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    fn check_grid(&self, grid: &[T]) -> Result<()> {
        if grid.len() != self.grid_size {
            return Err(SpdeError::DimensionMismatch {
                expected: self.grid_size,
                got: grid.len(),
            });
        }
        Ok(())
    }

    fn combine(&self, table: &[T], coeffs: &[T]) -> Vec<T> {
        let g = self.grid_size;
        let mut out = vec![T::zero(); g];
        for (k, &c) in coeffs.iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            for (o, &e) in out.iter_mut().zip(&table[k * g..(k + 1) * g]) {
                *o += c * e;
            }
        }
        out
    }

    fn project(&self, table: &[T], grid: &[T]) -> Vec<T> {
        let g = self.grid_size;
        let weighted: Vec<T> = grid
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| v * w)
            .collect();
        (0..self.n_modes)
            .map(|k| dot(&weighted, &table[k * g..(k + 1) * g]))
            .collect()
    }

    /// `u(x_j) = Σ_k c_k e_k(x_j)`.
    pub fn synthesize(&self, coeffs: &[T]) -> Result<Vec<T>> {
        self.check_coeffs(coeffs)?;
        Ok(self.combine(&self.values, coeffs))
    }

    /// `∂_x u(x_j)` computed from the analytic derivatives of the basis.
    pub fn synthesize_derivative(&self, coeffs: &[T]) -> Result<Vec<T>> {
        self.check_coeffs(coeffs)?;
        Ok(self.combine(&self.derivs, coeffs))
    }

    /// `c_k = Σ_j w_j g_j e_k(x_j)`: quadrature realisation of `P_n`.
    pub fn analyze(&self, grid: &[T]) -> Result<Vec<T>> {
        self.check_grid(grid)?;
        Ok(self.project(&self.values, grid))
    }

    /// `Σ_j w_j g_j e_k'(x_j)`, i.e. `∫ g ∂_x e_k` for weak-form fluxes.
    pub fn analyze_against_derivative(&self, grid: &[T]) -> Result<Vec<T>> {
        self.check_grid(grid)?;
        Ok(self.project(&self.derivs, grid))
    }

    /// `P_n ∂_x u` in coefficients, from the exact matrix `⟨e_j', e_k⟩`.
    pub fn derivative_projection(&self, coeffs: &[T]) -> Result<Vec<T>> {
        self.check_coeffs(coeffs)?;
        let n = self.n_modes;
        Ok((0..n)
            .map(|k| dot(&self.dmat[k * n..(k + 1) * n], coeffs))
            .collect())
    }

    /// `Σ_j w_j g_j`.
    pub fn integrate(&self, grid: &[T]) -> T {
        grid.iter().zip(&self.weights).map(|(&v, &w)| v * w).sum()
    }

    /// Parseval: the ℓ² norm of the coefficients.
    pub fn h_norm(&self, coeffs: &[T]) -> T {
        l2_norm(coeffs)
    }

    pub fn v_norm(&self, kind: VNormKind<T>, coeffs: &[T]) -> Result<T> {
        self.check_coeffs(coeffs)?;
        match kind {
            VNormKind::Spectral { s } => Ok(coeffs
                .iter()
                .zip(&self.eigenvalues)
                .map(|(&c, &l)| (T::one() + l).powf(s) * c * c)
                .sum::<T>()
                .sqrt()),
            VNormKind::GradientSeminorm { alpha } => {
                if self.kind != BasisKind::DirichletInterval {
                    return Err(SpdeError::UnsupportedModelNorm(format!(
                        "gradient seminorm needs a Dirichlet basis, got {:?}",
                        self.kind
                    )));
                }
                let ux = self.combine(&self.derivs, coeffs);
                let integral =
                    self.integrate(&ux.iter().map(|d| d.abs().powf(alpha)).collect::<Vec<_>>());
                Ok(integral.powf(T::one() / alpha))
            }
        }
    }

    /// `Σ_k f_k c_k` with `f_k = ⟨F, e_k⟩`.
    pub fn dual_pairing(&self, dual_coeffs: &[T], coeffs: &[T]) -> Result<T> {
        self.check_coeffs(dual_coeffs)?;
        self.check_coeffs(coeffs)?;
        Ok(dot(dual_coeffs, coeffs))
    }

    /// Diagonal weights `w_k` with `‖v‖_V² = Σ w_k v_k²`, when such exist.
    fn diagonal_weights(&self, kind: VNormKind<T>) -> Option<Vec<T>> {
        match kind {
            VNormKind::Spectral { s } => Some(
                self.eigenvalues
                    .iter()
                    .map(|&l| (T::one() + l).powf(s))
                    .collect(),
            ),
            VNormKind::GradientSeminorm { alpha }
                if alpha == T::lit(2.0) && self.eigenvalues.iter().all(|&l| l > T::zero()) =>
            {
                Some(self.eigenvalues.clone())
            }
            VNormKind::GradientSeminorm { .. } => None,
        }
    }

    /// Exact `‖F‖_{V*}` restricted to `H_n` for diagonal V-norms.
    pub fn dual_norm_exact(&self, kind: VNormKind<T>, dual_coeffs: &[T]) -> Option<T> {
        let w = self.diagonal_weights(kind)?;
        Some(
            dual_coeffs
                .iter()
                .zip(&w)
                .map(|(&f, &w)| f * f / w)
                .sum::<T>()
                .sqrt(),
        )
    }

    /// Lower bound of `‖F‖_{V*}` over `n_probe` unit-V-norm probes.
    ///
    /// Probes are the Riesz-type representer of `F`, a short ratio-ascent
    /// from it (non-diagonal norms only), and random perturbations.
    pub fn dual_norm_estimate<R: Rng + ?Sized>(
        &self,
        kind: VNormKind<T>,
        dual_coeffs: &[T],
        n_probe: usize,
        rng: &mut R,
    ) -> Result<DualNormEstimate<T>> {
        self.check_coeffs(dual_coeffs)?;
        let exact = self.dual_norm_exact(kind, dual_coeffs);
        if dual_coeffs.iter().all(|&f| f == T::zero()) {
            return Ok(DualNormEstimate {
                lower_bound: T::zero(),
                exact: exact.map(|_| T::zero()),
            });
        }
        let n_probe = n_probe.max(1);
        let ratio = |v: &[T]| -> Result<T> {
            let nv = self.v_norm(kind, v)?;
            Ok(if nv > T::zero() {
                dot(dual_coeffs, v) / nv
            } else {
                T::zero()
            })
        };

        // Riesz-type representer: f_k / weight_k with the H¹-type weight as fallback.
        let weights: Vec<T> = self
            .diagonal_weights(kind)
            .unwrap_or_else(|| self.eigenvalues.iter().map(|&l| T::one() + l).collect());
        let mut center: Vec<T> = dual_coeffs
            .iter()
            .zip(&weights)
            .map(|(&f, &w)| f / w)
            .collect();
        let mut best = ratio(&center)?;
        let mut used = 1;

        if let VNormKind::GradientSeminorm { alpha } = kind {
            if exact.is_none() {
                let ascent_budget = (n_probe / 4).max(1);
                let mut step = T::lit(0.5);
                while used < ascent_budget.min(n_probe) {
                    let grad = self.ratio_gradient(alpha, dual_coeffs, &center)?;
                    let gnorm = l2_norm(&grad);
                    let cnorm = l2_norm(&center);
                    if gnorm == T::zero() || cnorm == T::zero() {
                        break;
                    }
                    let trial: Vec<T> = center
                        .iter()
                        .zip(&grad)
                        .map(|(&c, &g)| c + step * cnorm * g / gnorm)
                        .collect();
                    let r = ratio(&trial)?;
                    used += 1;
                    if r > best {
                        best = r;
                        center = trial;
                        step = (step * T::lit(1.5)).min(T::one());
                    } else {
                        step *= T::lit(0.5);
                    }
                }
            }
        }

        let cnorm = l2_norm(&center);
        let mut k = 0usize;
        while used < n_probe {
            let amplitude = match k % 3 {
                0 => T::lit(0.05),
                1 => T::lit(0.3),
                _ => T::zero(),
            };
            let probe: Vec<T> = if amplitude == T::zero() {
                (0..self.n_modes)
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        T::lit(z) / (T::one() + self.eigenvalues[i]).sqrt()
                    })
                    .collect()
            } else {
                let scale = amplitude * cnorm / T::from_usize_lossy(self.n_modes).sqrt();
                center
                    .iter()
                    .map(|&c| {
                        let z: f64 = rng.sample(StandardNormal);
                        c + scale * T::lit(z)
                    })
                    .collect()
            };
            // A probe and its negation give |⟨F, v⟩|.
            best = best.max(ratio(&probe)?.abs());
            used += 1;
            k += 1;
        }
        if let Some(e) = exact {
            best = best.min(e);
        }
        Ok(DualNormEstimate {
            lower_bound: best,
            exact,
        })
    }

    /// Gradient in coefficient space of `⟨F, v⟩ / ‖v_x‖_α`.
    fn ratio_gradient(&self, alpha: T, dual: &[T], v: &[T]) -> Result<Vec<T>> {
        let vx = self.combine(&self.derivs, v);
        let integral = self.integrate(&vx.iter().map(|d| d.abs().powf(alpha)).collect::<Vec<_>>());
        let nv = integral.powf(T::one() / alpha);
        let pairing = dot(dual, v);
        if nv == T::zero() || pairing == T::zero() {
            return Ok(vec![T::zero(); self.n_modes]);
        }
        // d‖v‖_V / dv_k = ‖v‖^{1−α} Σ_j w_j |v_x|^{α−2} v_x e_k'(x_j)
        let flux: Vec<T> = vx
            .iter()
            .map(|&d| d.abs().powf(alpha - T::lit(2.0)) * d)
            .collect();
        let dnorm = self.project(&self.derivs, &flux);
        let scale = nv.powf(T::one() - alpha);
        Ok(dual
            .iter()
            .zip(&dnorm)
            .map(|(&f, &dn)| f / pairing - scale * dn / nv)
            .collect())
    }
}

/// `⟨e_j', e_k⟩`. Interval kinds mix sine and cosine families, whose products the
/// grid does not integrate exactly, so those entries use the closed form
/// `∫₀^π sin(ax) cos(bx) dx = a(1 − (−1)^{a+b})/(a² − b²)`.
fn derivative_matrix<T: Scalar>(
    kind: BasisKind,
    n: usize,
    nodes: &[T],
    weights: &[T],
    values: &[T],
    derivs: &[T],
) -> Vec<T> {
    let g = nodes.len();
    let sin_cos = |a: usize, b: usize| -> T {
        if a == b || (a + b).is_multiple_of(2) {
            T::zero()
        } else {
            let (a, b) = (T::from_usize_lossy(a), T::from_usize_lossy(b));
            T::lit(2.0) * a / (a * a - b * b)
        }
    };
    let pi = T::PI();
    let mut out = vec![T::zero(); n * n];
    for k in 0..n {
        for j in 0..n {
            out[k * n + j] = match kind {
                BasisKind::DirichletInterval => {
                    // e_j' = √(2/π) j cos(jx), e_k = √(2/π) sin(kx)
                    let (jj, kk) = (j + 1, k + 1);
                    T::lit(2.0) / pi * T::from_usize_lossy(jj) * sin_cos(kk, jj)
                }
                BasisKind::NeumannInterval => {
                    // e_j' = −a_j m_j sin(m_j x), e_k = a_k cos(m_k x)
                    let (mj, mk) = (j, k);
                    let norm = |m: usize| {
                        if m == 0 {
                            T::one() / pi.sqrt()
                        } else {
                            (T::lit(2.0) / pi).sqrt()
                        }
                    };
                    -norm(mj) * norm(mk) * T::from_usize_lossy(mj) * sin_cos(mj, mk)
                }
                BasisKind::PeriodicTorus => (0..g)
                    .map(|i| weights[i] * derivs[j * g + i] * values[k * g + i])
                    .sum(),
            };
        }
    }
    out
}
