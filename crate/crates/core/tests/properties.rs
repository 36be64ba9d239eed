use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spde_core::{BasisKind, GalerkinState, ModelSpec, SpectralBasis, SpectralBasis32, VNormKind};

fn kind_strategy() -> impl Strategy<Value = BasisKind> {
    prop_oneof![
        Just(BasisKind::DirichletInterval),
        Just(BasisKind::NeumannInterval),
        Just(BasisKind::PeriodicTorus),
    ]
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analyze_inverts_synthesize(kind in kind_strategy(), (n, u) in (1usize..20).prop_flat_map(|n| (Just(n), coeffs(n)))) {
        let b = SpectralBasis::with_default_grid(kind, n, 1.0).unwrap();
        let back = b.analyze(&b.synthesize(&u).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&u) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn parseval(kind in kind_strategy(), (n, u) in (1usize..20).prop_flat_map(|n| (Just(n), coeffs(n)))) {
        let b = SpectralBasis::with_default_grid(kind, n, 1.0).unwrap();
        let grid = b.synthesize(&u).unwrap();
        let quad = b.integrate(&grid.iter().map(|v| v * v).collect::<Vec<_>>());
        let h2 = b.h_norm(&u).powi(2);
        prop_assert!((h2 - quad).abs() <= 1e-9 * (1.0 + h2));
    }

    #[test]
    fn pairing_extends_inner_product((n, u, v) in (1usize..16).prop_flat_map(|n| (Just(n), coeffs(n), coeffs(n)))) {
        let b = SpectralBasis::with_default_grid(BasisKind::DirichletInterval, n, 1.0).unwrap();
        // The H-representer of u as a functional: ⟨u, e_k⟩ by quadrature.
        let rep = b.analyze(&b.synthesize(&u).unwrap()).unwrap();
        let pairing = b.dual_pairing(&rep, &v).unwrap();
        let inner: f64 = u.iter().zip(&v).map(|(a, c)| a * c).sum();
        prop_assert!((pairing - inner).abs() <= 1e-10 * (1.0 + inner.abs()));
    }

    #[test]
    fn norm_chain(kind in kind_strategy(), s in 0.5f64..2.5, seed in 0u64..1000, (n, u) in (1usize..12).prop_flat_map(|n| (Just(n), coeffs(n)))) {
        let b = SpectralBasis::with_default_grid(kind, n, s).unwrap();
        let norm = VNormKind::Spectral { s };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dual = b.dual_norm_estimate(norm, &u, 32, &mut rng).unwrap();
        let h = b.h_norm(&u);
        let v = b.v_norm(norm, &u).unwrap();
        // With λ ≥ 0 the spectral weights are ≥ 1, so the embedding constants are 1.
        prop_assert!(dual.lower_bound <= h * (1.0 + 1e-12));
        prop_assert!(dual.exact.unwrap() <= h * (1.0 + 1e-12));
        prop_assert!(h <= v * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_seminorm_dual_bound_is_conservative(seed in 0u64..1000, u in coeffs(8)) {
        // Hölder and Poincaré-free bound: |⟨F, v⟩| ≤ ‖F‖_ℓ² ‖v‖_ℓ² and ‖v‖_ℓ² ≤ ‖v‖_H¹₀ ≤ C ‖v_x‖_{L⁴}.
        let b = SpectralBasis::with_default_grid(BasisKind::DirichletInterval, 8, 1.0).unwrap();
        let norm = VNormKind::GradientSeminorm { alpha: 4.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = b.dual_norm_estimate(norm, &u, 64, &mut rng).unwrap();
        prop_assert!(est.exact.is_none());
        let c = std::f64::consts::PI.powf(0.25);
        let l2: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(est.lower_bound <= c * l2 * (1.0 + 1e-9));
        prop_assert!(est.lower_bound >= 0.0);
    }

    #[test]
    fn heat_is_diagonal(n in 1usize..24, k in 0usize..24) {
        let k = k % n;
        let m = ModelSpec::heat_ou(0.0);
        let b = m.basis(n, None).unwrap();
        let a = m.apply_a(&b, 0.0, &GalerkinState::<f64>::unit(n, k + 1).coeffs).unwrap();
        for (i, &x) in a.iter().enumerate() {
            let expect = if i == k { -((k + 1) as f64).powi(2) } else { 0.0 };
            prop_assert!((x - expect).abs() <= 1e-10);
        }
    }
}

#[test]
fn single_precision_basis_is_orthonormal() {
    let b = SpectralBasis32::with_default_grid(BasisKind::PeriodicTorus, 7, 1.0).unwrap();
    for i in 1..=7 {
        let u = GalerkinState::<f32>::unit(7, i);
        let back = b.analyze(&b.synthesize(&u.coeffs).unwrap()).unwrap();
        for (j, &x) in back.iter().enumerate() {
            let expect = if j + 1 == i { 1.0 } else { 0.0 };
            assert!((x - expect).abs() < 1e-5);
        }
    }
}

#[test]
fn single_precision_heat_step() {
    let m = ModelSpec::<f32>::heat_ou(0.0);
    let b = m.basis(4, None).unwrap();
    let s =
        spde_core::step_semi_implicit(&m, &b, &GalerkinState::unit(4, 1), 0.25, &[0.0; 4]).unwrap();
    assert!((s.coeffs[0] - 0.8).abs() < 1e-6);
}
