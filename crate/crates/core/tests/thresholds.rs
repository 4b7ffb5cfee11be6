use dynwave::thresholds::{
    alpha2, embedding_constant, well_constants, well_function, AscentOptions, EmbeddingSpace,
    ThresholdConstants, ThresholdError,
};
use dynwave::Mesh1D;
use proptest::prelude::*;

/// Sobolev constant of H¹₀(0,1) ⊂ L⁴ from the ground state of
/// u'' + u³ = 0: shoot from u(0)=0, u'(0)=1 with RK4 to the first zero L,
/// then rescale the half-wave onto the unit interval.
fn shooting_b_h01() -> f64 {
    let h = 1e-5;
    let f = |y: [f64; 2]| [y[1], -y[0].powi(3)];
    let mut y = [0.0, 1.0];
    let mut t = 0.0;
    let (mut int_u4, mut int_du2) = (0.0, 0.0);
    loop {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        let next = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if t > 0.5 && next[0] <= 0.0 {
            // Close the last partial step by linear interpolation.
            let frac = y[0] / (y[0] - next[0]);
            let dt = frac * h;
            int_u4 += 0.5 * dt * y[0].powi(4);
            int_du2 += 0.5 * dt * (y[1] * y[1] + next[1] * next[1]);
            t += dt;
            break;
        }
        int_u4 += 0.5 * h * (y[0].powi(4) + next[0].powi(4));
        int_du2 += 0.5 * h * (y[1] * y[1] + next[1] * next[1]);
        y = next;
        t += h;
    }
    let l = t;
    (int_u4 / l).powf(0.25) / (l * int_du2).sqrt()
}

fn estimate(p: f64, n: usize, space: EmbeddingSpace) -> f64 {
    embedding_constant(
        p,
        &Mesh1D::uniform(n).unwrap(),
        space,
        &AscentOptions::default(),
    )
    .unwrap()
    .value
}

#[test]
fn h01_constant_matches_shooting_oracle() {
    let oracle = shooting_b_h01();
    let b = estimate(4.0, 256, EmbeddingSpace::H01);
    let rel = (b - oracle).abs() / oracle;
    assert!(rel <= 1e-4, "B = {b}, oracle {oracle}, rel {rel:e}");
}

#[test]
fn h1_gamma0_constant_doubles_for_quartic() {
    // Even reflection maps the one-sided space on (0,1) onto H¹₀(0,2).
    let oracle = 2.0 * shooting_b_h01();
    let b = estimate(4.0, 256, EmbeddingSpace::H1Gamma0);
    assert!((b - oracle).abs() / oracle <= 1e-4, "{b} vs {oracle}");
}

#[test]
fn nested_meshes_increase_the_constant() {
    let values: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&n| estimate(4.0, n, EmbeddingSpace::H01))
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{values:?}");
    }
}

#[test]
fn refinement_changes_constant_little() {
    let coarse = estimate(4.0, 256, EmbeddingSpace::H01);
    let fine = estimate(4.0, 512, EmbeddingSpace::H01);
    assert!((fine - coarse).abs() / fine <= 1e-3);
}

#[test]
fn seed_does_not_change_the_maximum() {
    let mesh = Mesh1D::uniform(64).unwrap();
    let run = |seed| {
        let opts = AscentOptions {
            seed,
            ..AscentOptions::default()
        };
        ThresholdConstants::compute(3.0, &mesh, EmbeddingSpace::H01, &opts).unwrap()
    };
    let (a, b) = (run(1), run(99));
    assert!((a.b - b.b).abs() <= 1e-9 * a.b);
    assert_eq!(a.provenance.restarts, 8);
}

#[test]
fn quadratic_exponent_rejected_for_wells() {
    let mesh = Mesh1D::uniform(16).unwrap();
    let err =
        ThresholdConstants::compute(2.0, &mesh, EmbeddingSpace::H01, &AscentOptions::default())
            .unwrap_err();
    assert!(matches!(err, ThresholdError::ExponentTooSmall(_)));
    assert!(err.to_string().contains("p > 2 required"));
}

#[test]
fn energy_above_depth_has_no_alpha2() {
    let (_, d) = well_constants(0.7, 4.0).unwrap();
    assert!(alpha2(d + 0.1, 0.7, 4.0).is_err());
}

proptest! {
    #[test]
    fn alpha2_is_the_outer_root(b in 0.2f64..1.5, p in 2.5f64..6.0, frac in -2.0f64..0.999) {
        let (alpha1, d) = well_constants(b, p).unwrap();
        let e0 = frac * d;
        let root = alpha2(e0, b, p).unwrap();
        prop_assert!(root.value >= alpha1);
        let g = well_function(root.value, b, p);
        prop_assert!((g - e0).abs() <= 1e-9 * d.max(e0.abs()), "g = {g}, e0 = {e0}");
    }

    #[test]
    fn depth_is_the_peak_of_the_well(b in 0.2f64..1.5, p in 2.5f64..6.0, s in 0.1f64..3.0) {
        let (alpha1, d) = well_constants(b, p).unwrap();
        prop_assert!((well_function(alpha1, b, p) - d).abs() <= 1e-12 * d.max(1.0));
        prop_assert!(well_function(s * alpha1, b, p) <= d * (1.0 + 1e-12));
    }
}
