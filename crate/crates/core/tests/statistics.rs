use spde_core::{
    equicontinuity_statistic, mean_se, moment_report, solve_ensemble, EnsembleSpec64, ModelSpec64,
    Stepper,
};

fn spec(paths: usize, seed: u64, t_end: f64, save_dt: f64) -> EnsembleSpec64 {
    EnsembleSpec64 {
        paths,
        seed,
        stepper: Stepper::SemiImplicit,
        t_end,
        dt: 1e-3,
        save_dt,
    }
}

#[test]
fn ou_mean_follows_exponential_decay() {
    let m = ModelSpec64::heat_ou(1.0);
    let b = m.basis(4, None).unwrap();
    let x0 = [2.0, 0.0, 0.0, 0.0];
    let ens = solve_ensemble(&m, &b, &x0, &spec(2000, 1, 1.0, 0.25)).unwrap();
    let sd = (1.0 / 2.0) * (1.0f64 / 2.0).sqrt(); // σ_1 / sqrt(2λ_1), σ_1 = 1/2
    for (i, t) in ens.trajectories[0].times().iter().enumerate() {
        let c: Vec<f64> = ens
            .trajectories
            .iter()
            .map(|tr| tr.states[i].coeffs[0])
            .collect();
        let (mean, _) = mean_se(&c);
        let exact = 2.0 * (-t).exp();
        // Backward Euler bias at dt = 1e-3 is below 1e-3 · t e^{-t}.
        assert!(
            (mean - exact).abs() <= 3.0 * sd / (2000f64).sqrt() + 1e-3,
            "t={t} mean={mean} exact={exact}"
        );
    }
}

#[test]
fn scaled_initial_data_stays_under_fitted_bound() {
    // With |x| = 1 the fit-then-check bound needs the noise share of the moment to exceed 1.
    let m = ModelSpec64::heat_ou(4.0);
    let b = m.basis(16, None).unwrap();
    let p = 2.0;
    let mut x = vec![0.0; 16];
    x[0] = 1.0;
    let s = spec(1000, 2, 1.0, 0.01);
    let t1 = moment_report(&m, &b, &solve_ensemble(&m, &b, &x, &s).unwrap(), p, 2.0).unwrap();
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let t2 = moment_report(&m, &b, &solve_ensemble(&m, &b, &x2, &s).unwrap(), p, 2.0).unwrap();
    let norm_p = b.h_norm(&x).powf(p);
    for key in ["sup_h_p", "int_v_alpha"] {
        let r1 = t1.row(key).unwrap();
        let r2 = t2.row(key).unwrap();
        let c_p = r1.estimate / (1.0 + norm_p);
        let bound = c_p * (1.0 + 2f64.powf(p) * norm_p);
        assert!(
            r2.estimate - 3.0 * r2.std_error <= bound,
            "{key}: {} vs {bound}",
            r2.estimate
        );
    }
}

#[test]
fn moment_estimates_agree_across_truncations() {
    let m = ModelSpec64::heat_ou(0.5);
    let s = spec(400, 3, 1.0, 0.01);
    let mut est = Vec::new();
    for n in [8usize, 16, 32] {
        let b = m.basis(n, None).unwrap();
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let t = moment_report(&m, &b, &solve_ensemble(&m, &b, &x, &s).unwrap(), 2.0, 2.0).unwrap();
        let r = t.row("sup_h_p").unwrap();
        est.push((r.estimate, r.std_error));
    }
    for w in est.windows(2) {
        assert!((w[0].0 - w[1].0).abs() <= 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    }
}

#[test]
fn shift_statistic_is_nonnegative_and_grows_with_delta() {
    let m = ModelSpec64::heat_ou(1.0);
    let b = m.basis(8, None).unwrap();
    let ens = solve_ensemble(&m, &b, &[0.0; 8], &spec(200, 4, 1.0, 0.01)).unwrap();
    let deltas = [0.02, 0.04, 0.08, 0.16, 0.32];
    let t = equicontinuity_statistic(&ens, &deltas, 2.0).unwrap();
    assert!(t.rows.iter().all(|r| r.estimate >= 0.0));
    for w in t.rows.windows(2) {
        assert!(
            w[1].estimate + 2.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt()
                >= w[0].estimate
        );
    }
    let slope = t.fitted_rate.unwrap().slope;
    assert!(slope >= 0.35, "{slope}");
}

#[test]
fn deltas_must_be_save_grid_multiples() {
    let m = ModelSpec64::heat_ou(1.0);
    let b = m.basis(4, None).unwrap();
    let ens = solve_ensemble(&m, &b, &[0.0; 4], &spec(2, 0, 0.1, 0.01)).unwrap();
    assert!(equicontinuity_statistic(&ens, &[0.015], 2.0).is_err());
    assert!(equicontinuity_statistic(&ens, &[0.2], 2.0).is_err());
}
