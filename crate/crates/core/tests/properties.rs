use msflow::fit::{fit_power_law, log_space};
use msflow::functionals::{dimensionless, dissipation_surrogate, eed_ratio, energy, excess_mass};
use msflow::inequality::{check_tint, run_ensemble, sample_field, singular_time_integral, Inequality, SampleSpec};
use msflow::linear::evolve_linear;
use msflow::solver::{lipschitz, slope_field};
use msflow::spectral::{make_grid, SpectralField, TorusGrid};
use proptest::prelude::*;
use statrs::function::beta::beta;

fn random_values(grid: &TorusGrid, seed: u64) -> SpectralField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    SpectralField::from_values(grid, vals).unwrap()
}

fn smooth_sample(dim: usize, seed: u64, index: u64, lip: f64) -> SpectralField {
    let spec = SampleSpec {
        dim,
        n: if dim == 1 { 128 } else { 32 },
        length: 24.0,
        seed,
        lip_target: lip,
        ..Default::default()
    };
    sample_field(&spec, index).unwrap()
}

/// `λ h(x/λ)` on the `λ`-scaled torus when `amp = λ`, `h(x/λ)` when `amp = 1`.
fn rescaled(h: &SpectralField, lambda: f64, amp: f64) -> SpectralField {
    let g = h.grid().scaled(lambda).unwrap();
    SpectralField::from_values(&g, h.values().iter().map(|v| v * amp).collect()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(seed in any::<u64>(), dim in 1usize..=2, len in 1.0f64..50.0) {
        let g = make_grid(dim, len, if dim == 1 { 64 } else { 16 }).unwrap();
        let f = random_values(&g, seed);
        let physical: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        let spectral: f64 = f.coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>() * g.volume();
        prop_assert!(rel(physical, spectral) < 1e-10);
    }

    #[test]
    fn multiplier_semigroup(seed in any::<u64>(), ia in 0usize..3, ib in 0usize..3, dim in 1usize..=2) {
        let powers = [0.5, 1.0, 1.5];
        let (a, b) = (powers[ia], powers[ib]);
        let g = make_grid(dim, 10.0, if dim == 1 { 64 } else { 16 }).unwrap();
        let f = random_values(&g, seed);
        let f = f.map_values(|v| v - f.mean());
        let two = f.apply_multiplier(a).unwrap().apply_multiplier(b).unwrap();
        let one = f.apply_multiplier(a + b).unwrap();
        prop_assert!(two.max_abs_diff(&one) <= 1e-10 * one.sup_norm().max(1.0));
    }

    #[test]
    fn poisson_semigroup(seed in any::<u64>(), z1 in 0.0f64..3.0, z2 in 0.0f64..3.0) {
        let g = make_grid(2, 8.0, 16).unwrap();
        let f = random_values(&g, seed);
        let two = f.poisson_extend(z1).unwrap().poisson_extend(z2).unwrap();
        let one = f.poisson_extend(z1 + z2).unwrap();
        prop_assert!(two.max_abs_diff(&one) <= 1e-12);
    }

    #[test]
    fn linear_semigroup_mass_and_l2(seed in any::<u64>(), s in 0.0f64..2.0, t in 0.0f64..2.0, dim in 1usize..=2) {
        let g = make_grid(dim, 16.0, if dim == 1 { 64 } else { 16 }).unwrap();
        let h0 = random_values(&g, seed);
        let a = evolve_linear(&evolve_linear(&h0, s).unwrap(), t).unwrap();
        let b = evolve_linear(&h0, s + t).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-12);
        prop_assert!((b.mean() - h0.mean()).abs() <= 1e-14);
        prop_assert!(b.l2_norm() <= evolve_linear(&h0, s).unwrap().l2_norm() * (1.0 + 1e-14));
    }

    #[test]
    fn natural_scaling_leaves_dimensionless_quantities_invariant(seed in 0u64..1000, index in 0u64..50, lambda in 0.2f64..8.0, dim in 1usize..=2) {
        let h = smooth_sample(dim, seed, index, 0.5);
        let hl = rescaled(&h, lambda, lambda);
        let (e, v, d) = (energy(&h), excess_mass(&h), dissipation_surrogate(&h).unwrap());
        let (el, vl, dl) = (energy(&hl), excess_mass(&hl), dissipation_surrogate(&hl).unwrap());
        let df = dim as f64;
        prop_assert!(rel(el, lambda.powf(df) * e) < 1e-10);
        prop_assert!(rel(vl, lambda.powf(df + 1.0) * v) < 1e-10);
        prop_assert!(rel(dl, lambda.powf(df - 3.0) * d) < 1e-10);
        prop_assert!(rel(dimensionless(el, dl, dim), dimensionless(e, d, dim)) < 1e-10);
        prop_assert!(rel(eed_ratio(el, vl, dl, dim), eed_ratio(e, v, d, dim)) < 1e-10);
    }

    #[test]
    fn inequality_ratios_respect_their_scalings(seed in 0u64..1000, index in 0u64..50, lambda in 0.3f64..5.0, amp in 0.1f64..10.0, dim in 1usize..=2) {
        let h = smooth_sample(dim, seed, index, 0.5);
        let mut linear_items = Inequality::gns_items(dim);
        linear_items.push(Inequality::V2);
        for item in linear_items {
            let r = item.ratio(&h).unwrap().unwrap();
            let r_amp = item.ratio(&h.scaled(amp)).unwrap().unwrap();
            let r_len = item.ratio(&rescaled(&h, lambda, 1.0)).unwrap().unwrap();
            prop_assert!(rel(r_amp, r) < 1e-10, "{} amplitude", item);
            prop_assert!(rel(r_len, r) < 1e-10, "{} length", item);
        }
        for item in [Inequality::Eed, Inequality::CurvatureL2, Inequality::HessianLp { p: 4.0 }, Inequality::HessianLp { p: 2.5 }] {
            let r = item.ratio(&h).unwrap().unwrap();
            let r_len = item.ratio(&rescaled(&h, lambda, lambda)).unwrap().unwrap();
            prop_assert!(rel(r_len, r) < 1e-10, "{} scaling", item);
        }
    }

    #[test]
    fn energy_dominates_weighted_dirichlet(seed in 0u64..1000, index in 0u64..50, lip in 0.05f64..0.95, dim in 1usize..=2) {
        let h = smooth_sample(dim, seed, index, lip);
        let l = lipschitz(&h);
        let dirichlet: f64 = slope_field(&h).iter().map(|s| s * s).sum::<f64>() * h.grid().cell_volume();
        prop_assert!(energy(&h) >= 0.5 / (1.0 + l * l).sqrt() * dirichlet * (1.0 - 1e-12));
    }

    #[test]
    fn time_integral_matches_beta(a in 0.05f64..0.95, b in 0.05f64..0.95, t in 0.01f64..100.0) {
        prop_assume!(a + b >= 1.0);
        let exact = t.powf(1.0 - a - b) * beta(1.0 - a, 1.0 - b);
        prop_assert!(rel(singular_time_integral(a, b, t).unwrap(), exact) < 1e-8);
    }

    #[test]
    fn exact_power_laws_are_recovered(slope in -3.0f64..0.0, c in 0.1f64..10.0) {
        let ts = log_space(1.0, 1000.0, 40);
        let ys: Vec<f64> = ts.iter().map(|t| c * t.powf(slope)).collect();
        let fit = fit_power_law("E", &ts, &ys, (1.0, 1000.0)).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-12);
        prop_assert!(fit.stderr < 1e-10);
    }
}

#[test]
fn time_integral_table_matches_beta() {
    let rows = check_tint(&[0.5, 0.75], &[0.5, 0.75], &[0.1, 1.0, 10.0]).unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows {
        assert!(rel(r.ratio, beta(1.0 - r.a, 1.0 - r.b)) < 1e-8);
    }
}

#[test]
fn energy_decay_fit_of_minus_four_thirds() {
    let ts = log_space(10.0, 500.0, 64);
    let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-4.0 / 3.0)).collect();
    let fit = fit_power_law("E", &ts, &ys, (10.0, 500.0)).unwrap();
    assert!((fit.slope + 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(fit.n_points, 64);
}

#[test]
fn ensembles_are_reproducible_and_partition_free() {
    let spec = SampleSpec { dim: 2, n: 32, length: 16.0, seed: 77, ..Default::default() };
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = serial.install(|| run_ensemble(Inequality::GnsIv, &spec, 64).unwrap());
    let b = run_ensemble(Inequality::GnsIv, &spec, 64).unwrap();
    assert_eq!(a, b);
    let c = run_ensemble(Inequality::GnsIv, &SampleSpec { seed: 78, ..spec }, 64).unwrap();
    assert_ne!(a.max_ratio, c.max_ratio);
}
