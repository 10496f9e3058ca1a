use msflow::linear::{
    adjoint_evolve, decay_series, evolve_linear, kernel_profile, localized_family, verify_linear_bounds, BOUND_NAMES,
};
use msflow::spectral::{make_grid, SpectralField};

#[test]
fn decay_constants_are_stable_across_horizons() {
    let g = make_grid(1, 128.0, 1024).unwrap();
    let family = localized_family(&g, 20, 5);
    let report = verify_linear_bounds(&family, &[1.0, 4.0, 16.0]).unwrap();
    for (b, name) in BOUND_NAMES.iter().enumerate() {
        assert!(report.constants[b].iter().all(|c| c.is_finite()), "{name}");
        assert!(report.bounded(b), "{name} varies by {}", report.variation(b));
    }
}

#[test]
fn kernel_profile_is_normalized_and_converged() {
    for dim in [1, 2] {
        let p = kernel_profile(dim, 10.0, 50).unwrap();
        assert!((p.normalization - 1.0).abs() < 1e-6, "{}", p.normalization);
        assert!(p.tail_converged());
        assert!(p.values[0] > p.values[p.values.len() / 2].abs());
    }
}

#[test]
fn forward_and_adjoint_pair() {
    let g = make_grid(2, 20.0, 32).unwrap();
    let h = SpectralField::from_fn(&g, |x| (-(x[0] - 10.0).powi(2) - (x[1] - 8.0).powi(2)).exp());
    let psi = SpectralField::from_fn(&g, |x| (0.3 * x[0]).sin() * (0.3 * x[1]).cos());
    let t = 2.0;
    let lhs = evolve_linear(&h, t).unwrap().inner(&psi).unwrap();
    let rhs = h.inner(&adjoint_evolve(&psi, t, 0.0).unwrap()).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1e-300));
}

#[test]
fn l2_norm_never_grows() {
    let g = make_grid(1, 50.0, 256).unwrap();
    let h = SpectralField::from_fn(&g, |x| (-(x[0] - 25.0).powi(2)).exp());
    let series = decay_series(&h, &[0.1, 1.0, 10.0, 100.0]).unwrap();
    assert!(series.windows(2).all(|w| w[1].l2 <= w[0].l2));
}
