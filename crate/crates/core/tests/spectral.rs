use dynwave::spectral::{
    build_basis, fem_spectral_gap, shift_equivalence_check, solve_spectral, Generator,
    SpectralError, SpectralMode,
};
use dynwave::{assemble, run, InitialData, Mesh1D, ModelParams, Profile, StepControl};

/// Composite Simpson on an even panel count.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn monomial_basis_is_orthonormal_under_independent_quadrature() {
    let basis = build_basis(6, Generator::Monomials).unwrap();
    let w = |j: usize, x: f64| -> f64 {
        basis.coeffs[j]
            .iter()
            .enumerate()
            .map(|(k, c)| c * x.powi(k as i32 + 1))
            .sum()
    };
    for i in 0..6 {
        for j in 0..6 {
            let g = simpson(|x| w(i, x) * w(j, x), 10_000) + w(i, 1.0) * w(j, 1.0);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g - want).abs() <= 1e-8, "G[{i}][{j}] = {g}");
        }
    }
    // Stored traces agree with the generator expansion.
    for j in 0..6 {
        assert!((basis.trace[j] - w(j, 1.0)).abs() <= 1e-10);
    }
}

#[test]
fn sine_basis_is_orthonormal() {
    let basis = build_basis(5, Generator::DirichletNeumannSines).unwrap();
    for (i, row) in basis.gram().iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g - want).abs() <= 1e-10);
        }
    }
}

#[test]
fn zero_data_gives_zero_gap() {
    let ops = assemble(&Mesh1D::uniform(32).unwrap()).unwrap();
    let params = ModelParams::new(0.1, 1.0, 4.0, 3.0);
    let init = InitialData::zero();
    let fem = run(&init, &ops, &params, &StepControl::new(1e-2, 0.5)).unwrap();
    let basis = build_basis(4, Generator::Monomials).unwrap();
    let spec = solve_spectral(
        &basis,
        &params,
        &init,
        SpectralMode::Direct,
        &fem.times(),
        1e-10,
    )
    .unwrap();
    assert_eq!(fem_spectral_gap(&fem, &ops, &spec, &basis).unwrap(), 0.0);
}

#[test]
fn shift_is_exact_for_data_in_the_span() {
    let params = ModelParams::new(0.2, 1.0, 4.0, 2.0).without_source();
    let init = InitialData::new(Profile::LinearRamp, Profile::QuadraticBump.scaled(-0.5));
    let basis = build_basis(4, Generator::Monomials).unwrap();
    let times: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
    let direct =
        solve_spectral(&basis, &params, &init, SpectralMode::Direct, &times, 1e-12).unwrap();
    let shifted =
        solve_spectral(&basis, &params, &init, SpectralMode::Shifted, &times, 1e-12).unwrap();
    let gap = shift_equivalence_check(&direct, &shifted, &basis).unwrap();
    assert!(gap <= 1e-9, "{gap:e}");
}

#[test]
fn spectral_solution_approaches_fem() {
    let ops = assemble(&Mesh1D::uniform(256).unwrap()).unwrap();
    let params = ModelParams::new(0.1, 1.0, 4.0, 2.0);
    let init = InitialData::at_rest(Profile::SineHalfwave);
    let mut ctl = StepControl::new(1e-3, 1.0);
    ctl.output_every = 10;
    let fem = run(&init, &ops, &params, &ctl).unwrap();
    let gaps: Vec<f64> = [2, 4, 6]
        .iter()
        .map(|&n| {
            let basis = build_basis(n, Generator::Monomials).unwrap();
            let spec = solve_spectral(
                &basis,
                &params,
                &init,
                SpectralMode::Direct,
                &fem.times(),
                1e-10,
            )
            .unwrap();
            fem_spectral_gap(&fem, &ops, &spec, &basis).unwrap()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] <= 1e-3, "{gaps:?}");
}

#[test]
fn mismatched_times_rejected() {
    let ops = assemble(&Mesh1D::uniform(8).unwrap()).unwrap();
    let params = ModelParams::new(0.1, 1.0, 4.0, 2.0);
    let init = InitialData::at_rest(Profile::SineHalfwave);
    let fem = run(&init, &ops, &params, &StepControl::new(0.1, 0.5)).unwrap();
    let basis = build_basis(2, Generator::Monomials).unwrap();
    let spec = solve_spectral(
        &basis,
        &params,
        &init,
        SpectralMode::Direct,
        &[0.0, 0.1],
        1e-8,
    )
    .unwrap();
    assert!(matches!(
        fem_spectral_gap(&fem, &ops, &spec, &basis),
        Err(SpectralError::GridMismatch(_))
    ));
}
