use nalgebra::Matrix4;
use proptest::prelude::*;
use quadrcac::deadzone::{
    eval_n1, eval_n2, eval_n3, n2_upper_knee, solve_cubic_coeffs, Cubic, DEFAULT_ALPHA, DEFAULT_N3_S2, DEFAULT_S,
};
use quadrcac::{DeadzoneConfig, DeadzoneKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 100_000;

fn shapes() -> Vec<DeadzoneConfig> {
    vec![
        DeadzoneConfig::default_for(DeadzoneKind::N1),
        DeadzoneConfig::default_for(DeadzoneKind::N2),
        DeadzoneConfig::default_for(DeadzoneKind::N3),
        DeadzoneConfig::n1(0.3).unwrap(),
        DeadzoneConfig::n2(0.05, 20.0).unwrap(),
        DeadzoneConfig::n3(0.01, 0.5).unwrap(),
    ]
}

fn samples(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES)
        .map(|i| match i % 3 {
            0 => rng.random_range(-0.2..0.2),
            1 => rng.random_range(-2.0..2.0),
            _ => rng.random_range(-100.0..100.0),
        })
        .collect()
}

#[test]
fn odd_zero_band_and_non_amplifying_on_random_inputs() {
    let xs = samples(7);
    for dz in shapes() {
        let s = dz.width();
        for &x in &xs {
            let y = dz.eval(x);
            assert_eq!(dz.eval(-x), -y, "{dz:?} not odd at {x}");
            if x.abs() <= s {
                assert_eq!(y, 0.0, "{dz:?} nonzero inside band at {x}");
            }
            assert!(y.abs() <= x.abs(), "{dz:?} amplifies at {x}: {y}");
            assert!(y * x >= 0.0, "{dz:?} flips sign at {x}");
        }
    }
}

#[test]
fn monotone_on_a_fine_grid() {
    for dz in shapes() {
        let mut prev = dz.eval(-3.0);
        for i in 1..=600_000 {
            let x = -3.0 + i as f64 * 1e-5;
            let y = dz.eval(x);
            assert!(y >= prev, "{dz:?} decreases at {x}");
            prev = y;
        }
    }
}

fn central_slope(dz: &DeadzoneConfig, x: f64, h: f64) -> f64 {
    (dz.eval(x + h) - dz.eval(x - h)) / (2.0 * h)
}

fn one_sided_slopes(dz: &DeadzoneConfig, x: f64) -> (f64, f64) {
    let h = 1e-7;
    ((dz.eval(x) - dz.eval(x - h)) / h, (dz.eval(x + h) - dz.eval(x)) / h)
}

#[test]
fn smooth_shapes_are_c1_at_their_knees() {
    let n2 = DeadzoneConfig::default_for(DeadzoneKind::N2);
    let n3 = DeadzoneConfig::default_for(DeadzoneKind::N3);
    let n2_knee = n2_upper_knee(DEFAULT_S, DEFAULT_ALPHA);
    for (dz, knee) in [(&n2, DEFAULT_S), (&n2, n2_knee), (&n3, DEFAULT_S), (&n3, DEFAULT_N3_S2)] {
        for x in [knee, -knee] {
            let (left, right) = one_sided_slopes(dz, x);
            assert!((left - right).abs() < 1e-4, "{dz:?} kink at {x}: {left} vs {right}");
        }
    }
    assert!((central_slope(&n3, DEFAULT_N3_S2, 1e-7) - 1.0).abs() < 1e-4);
    assert!(central_slope(&n3, DEFAULT_S, 1e-7).abs() < 1e-4);
}

#[test]
fn sign_is_kept_just_outside_the_band() {
    for dz in shapes() {
        let mut x = dz.width();
        for _ in 0..1000 {
            x = f64::from_bits(x.to_bits() + 1);
            assert!(dz.eval(x) >= 0.0 && dz.eval(-x) <= 0.0, "{dz:?} at {x:e}");
        }
    }
}

#[test]
fn hard_deadzone_jumps_at_its_edge() {
    let (left, right) = (eval_n1(DEFAULT_S, DEFAULT_S).unwrap(), eval_n1(DEFAULT_S + 1e-12, DEFAULT_S).unwrap());
    assert_eq!(left, 0.0);
    assert!((right - DEFAULT_S).abs() < 1e-11);
}

#[test]
fn n3_is_the_identity_beyond_its_upper_knee() {
    let n3 = DeadzoneConfig::default_for(DeadzoneKind::N3);
    for &x in samples(11).iter().filter(|x| x.abs() >= DEFAULT_N3_S2) {
        assert_eq!(eval_n3(x, &n3).unwrap(), x);
    }
}

#[test]
fn n2_keeps_a_constant_offset_beyond_its_upper_knee() {
    let s2 = n2_upper_knee(DEFAULT_S, DEFAULT_ALPHA);
    let offset = s2 - eval_n2(s2, DEFAULT_S, DEFAULT_ALPHA).unwrap();
    assert!(offset > 0.0);
    for &x in samples(13).iter().filter(|x| **x > s2) {
        let y = eval_n2(x, DEFAULT_S, DEFAULT_ALPHA).unwrap();
        assert!((x - y - offset).abs() < 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn n2_reference_values() {
    let s2 = n2_upper_knee(0.02, 1.0);
    assert!((s2 - 0.59735).abs() < 1e-5);
    assert!((eval_n2(s2, 0.02, 1.0).unwrap() - 0.19245).abs() < 1e-5);
    assert!((eval_n2(1.0, 0.02, 1.0).unwrap() - 0.59510).abs() < 1e-5);
    assert_eq!(eval_n2(0.01, 0.02, 1.0).unwrap(), 0.0);
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

fn value_row(x: f64) -> [f64; 4] {
    [1.0, x, x * x, x * x * x]
}

fn slope_row(x: f64) -> [f64; 4] {
    [0.0, 1.0, 2.0 * x, 3.0 * x * x]
}

/// Upper transition cubic: zero value and slope at `s1`, meets `y = x` at `s2`.
fn upper_system(s1: f64, s2: f64) -> ([[f64; 4]; 4], [f64; 4]) {
    ([value_row(s1), slope_row(s1), value_row(s2), slope_row(s2)], [0.0, 0.0, s2, 1.0])
}

fn condition(a: &[[f64; 4]; 4]) -> f64 {
    let sv = Matrix4::from_fn(|r, c| a[r][c]).singular_values();
    sv.max() / sv.min()
}

fn residual(c: &Cubic, s1: f64, s2: f64) -> f64 {
    let (a, b) = upper_system(s1, s2);
    (0..4)
        .map(|r| ((0..4).map(|k| a[r][k] * c.0[k]).sum::<f64>() - b[r]).abs())
        .fold(0.0, f64::max)
}

fn check_cubic_solve(s1: f64, s2: f64) -> Result<(), TestCaseError> {
    let (lower, upper) = solve_cubic_coeffs(s1, s2).unwrap();
    prop_assert!(residual(&upper, s1, s2) < 1e-10);
    let (a, b) = upper_system(s1, s2);
    let oracle = gauss_solve(a, b);
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 16.0 * f64::EPSILON * condition(&a) * scale;
    for k in 0..4 {
        prop_assert!((upper.0[k] - oracle[k]).abs() <= tol, "coeff {k}: {} vs {}", upper.0[k], oracle[k]);
    }
    for k in 0..4 {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        prop_assert_eq!(lower.0[k], sign * upper.0[k]);
    }
    Ok(())
}

#[test]
fn cubic_solve_at_defaults_matches_oracle() {
    check_cubic_solve(DEFAULT_S, DEFAULT_N3_S2).unwrap();
}

#[test]
fn cubic_solve_values_match_hermite_form() {
    let (s1, s2) = (DEFAULT_S, DEFAULT_N3_S2);
    let (_, upper) = solve_cubic_coeffs(s1, s2).unwrap();
    let h = s2 - s1;
    for i in 0..=1000 {
        let t = i as f64 / 1000.0;
        let hermite = (3.0 * t * t - 2.0 * t * t * t) * s2 + (t * t * t - t * t) * h;
        assert!((upper.eval(s1 + t * h) - hermite).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cubic_solve_matches_oracle(s1 in 1e-3f64..0.5, gap in 1e-2f64..1.0) {
        check_cubic_solve(s1, s1 + gap)?;
    }

    #[test]
    fn shape_invariants_hold_for_any_parameters(
        s1 in 1e-4f64..1.0,
        gap in 1e-3f64..2.0,
        alpha in 1e-2f64..1e3,
        x in -10.0f64..10.0,
    ) {
        for dz in [
            DeadzoneConfig::n1(s1).unwrap(),
            DeadzoneConfig::n2(s1, alpha).unwrap(),
            DeadzoneConfig::n3(s1, s1 + gap).unwrap(),
        ] {
            let y = dz.eval(x);
            prop_assert_eq!(dz.eval(-x), -y);
            prop_assert!(y.abs() <= x.abs() * (1.0 + 1e-12));
            if x.abs() <= s1 {
                prop_assert_eq!(y, 0.0);
            }
            let x2 = x + 1e-3;
            prop_assert!(dz.eval(x2) >= y - 1e-12);
        }
    }

    #[test]
    fn apply_matches_scalar_eval(zs in prop::collection::vec(-1.0f64..1.0, 0..8)) {
        let dz = DeadzoneConfig::default_for(DeadzoneKind::N3);
        let out = dz.apply(&zs).unwrap();
        for (x, y) in zs.iter().zip(&out) {
            prop_assert_eq!(*y, dz.eval(*x));
        }
    }
}
