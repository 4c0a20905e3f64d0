use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use quadrcac::rcac::{GainStructure, RcacConfig, RcacState, Rls};

const DT: f64 = 0.004;

fn config(p0: f64, coeffs: Vec<f64>, theta0: Vec<f64>) -> RcacConfig {
    RcacConfig {
        p0,
        theta0,
        filter_coeffs: coeffs,
        forgetting: 1.0,
        integrator_clamp: 0.5,
        adaptation_enabled: true,
        max_covariance_trace: None,
    }
}

/// PI regressor rebuilt from the raw error history.
struct PiRegressor {
    integ: Vec<f64>,
    clamp: f64,
}

impl PiRegressor {
    fn next(&mut self, z: &[f64]) -> DMatrix<f64> {
        let n = z.len();
        let mut phi = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            self.integ[i] = (self.integ[i] + z[i] * DT).clamp(-self.clamp, self.clamp);
            phi[(i, 2 * i)] = z[i];
            phi[(i, 2 * i + 1)] = self.integ[i];
        }
        phi
    }
}

/// Regularized least-squares minimizer of the retrospective cost over a
/// recorded run, solved in one shot.
fn batch_solution(
    zs: &[Vec<f64>],
    us: &[DVector<f64>],
    coeffs: &[f64],
    p0: f64,
    theta0: &DVector<f64>,
    clamp: f64,
) -> DVector<f64> {
    let channels = zs[0].len();
    let n = theta0.len();
    let mut reg = PiRegressor {
        integ: vec![0.0; channels],
        clamp,
    };
    let phis: Vec<DMatrix<f64>> = zs.iter().map(|z| reg.next(z)).collect();
    let start = coeffs.len().max(2);
    let mut normal = DMatrix::identity(n, n) / p0;
    let mut rhs = theta0 / p0;
    for k in start..zs.len() {
        let mut phi_f = DMatrix::zeros(channels, n);
        let mut u_f = DVector::zeros(channels);
        for (i, c) in coeffs.iter().enumerate() {
            phi_f += &phis[k - 1 - i] * *c;
            u_f += &us[k - 1 - i] * *c;
        }
        let target = u_f - DVector::from_column_slice(&zs[k]);
        normal += phi_f.transpose() * &phi_f;
        rhs += phi_f.transpose() * target;
    }
    normal.lu().solve(&rhs).expect("regularized normal equations are nonsingular")
}

fn synthetic_errors(steps: usize, channels: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|k| {
            let t = k as f64 * DT;
            (0..channels)
                .map(|c| {
                    let f = 1.3 + 0.7 * c as f64;
                    0.4 * (2.0 * std::f64::consts::PI * f * t).sin() + 0.1 * (37.0 * t + c as f64).cos()
                })
                .collect()
        })
        .collect()
}

fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn recursive_gains_match_batch_least_squares() {
    let coeffs = vec![-0.3, 0.12];
    let theta0 = vec![0.05, -0.02, 0.1, 0.0];
    let cfg = config(0.5, coeffs.clone(), theta0.clone());
    let mut st = RcacState::new(2, GainStructure::Pi, cfg).unwrap();
    let zs = synthetic_errors(200, 2);
    let mut us = Vec::new();
    for z in &zs {
        us.push(st.update(z, DT).unwrap().u);
    }
    let batch = batch_solution(&zs, &us, &coeffs, 0.5, &DVector::from_vec(theta0), 0.5);
    let err = relative_error(st.theta(), &batch);
    assert!(err < 1e-6, "relative error {err:e}");
}

/// `y(k+1) = 0.5 y(k) + u(k)` under a unit step command.
fn run_lti_plant(steps: usize) -> (Vec<f64>, RcacState, Vec<Vec<f64>>, Vec<DVector<f64>>) {
    let cfg = config(1.0, vec![1.0], vec![]);
    let mut st = RcacState::new(1, GainStructure::Pi, cfg).unwrap();
    let mut y = 0.0;
    let mut errors = Vec::new();
    let mut zs = Vec::new();
    let mut us = Vec::new();
    for _ in 0..steps {
        let z = y - 1.0;
        errors.push(z);
        zs.push(vec![z]);
        let u = st.update(&[z], DT).unwrap().u;
        y = 0.5 * y + u[0];
        us.push(u);
    }
    (errors, st, zs, us)
}

#[test]
fn lti_plant_error_decays() {
    let (errors, _, _, _) = run_lti_plant(501);
    assert!(errors[500].abs() < 0.05 * errors[10].abs(), "e(10) = {}, e(500) = {}", errors[10], errors[500]);
}

#[test]
fn lti_plant_gains_match_batch_least_squares() {
    let (_, st, zs, us) = run_lti_plant(501);
    let batch = batch_solution(&zs, &us, &[1.0], 1.0, &DVector::zeros(2), 0.5);
    let err = relative_error(st.theta(), &batch);
    assert!(err < 1e-6, "relative error {err:e}");
}

/// Classical RLS with unit measurement noise weight.
struct TextbookRls {
    theta: DVector<f64>,
    p: DMatrix<f64>,
}

impl TextbookRls {
    fn step(&mut self, phi: &DVector<f64>, y: f64) {
        let p_phi = &self.p * phi;
        let denom = 1.0 + phi.dot(&p_phi);
        let k = &p_phi / denom;
        let e = y - phi.dot(&self.theta);
        self.theta += &k * e;
        self.p -= &k * p_phi.transpose();
    }
}

#[test]
fn single_channel_matches_textbook_rls() {
    let coeffs = vec![-0.19];
    let mut st = RcacState::new(1, GainStructure::Pi, config(2.0, coeffs.clone(), vec![])).unwrap();
    let mut reference = TextbookRls {
        theta: DVector::zeros(2),
        p: DMatrix::identity(2, 2) * 2.0,
    };
    let mut reg = PiRegressor {
        integ: vec![0.0],
        clamp: 0.5,
    };
    let mut prev: Option<(DMatrix<f64>, f64)> = None;
    for (k, z) in synthetic_errors(300, 1).into_iter().enumerate() {
        let phi = reg.next(&z);
        let out = st.update(&z, DT).unwrap();
        if k >= 2 {
            let (phi_prev, u_prev) = prev.clone().unwrap();
            let phi_f = phi_prev.row(0).transpose() * coeffs[0];
            reference.step(&phi_f, coeffs[0] * u_prev - z[0]);
            let err = relative_error(st.theta(), &reference.theta);
            assert!(err < 1e-10, "step {k}: relative error {err:e}");
        }
        prev = Some((phi, out.u[0]));
    }
}

#[test]
fn identical_inputs_give_identical_gain_trajectories() {
    let run = || {
        let mut st = RcacState::new(3, GainStructure::Pi, config(30.0, vec![-0.19], vec![])).unwrap();
        synthetic_errors(400, 3)
            .iter()
            .map(|z| {
                st.update(z, DT).unwrap();
                st.theta().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn buffers_fill_to_filter_length() {
    let mut st = RcacState::new(1, GainStructure::Pi, config(1.0, vec![-0.1, -0.2, -0.3], vec![])).unwrap();
    for k in 0..10 {
        assert_eq!(st.history_len(), k.min(3));
        st.update(&[0.1], DT).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_shrinks_and_stays_positive_definite(
        zs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 20..80),
        probe in prop::collection::vec(-1.0f64..1.0, 6),
        p0 in 0.01f64..50.0,
    ) {
        let mut st = RcacState::new(3, GainStructure::Pi, config(p0, vec![-0.19], vec![])).unwrap();
        let x = DVector::from_vec(probe);
        let mut prev = x.dot(&(st.covariance() * &x));
        for z in &zs {
            st.update(z, DT).unwrap();
            let p = st.covariance();
            let asym = (p - p.transpose()).amax();
            prop_assert!(asym < 1e-10);
            prop_assert!(p.clone().cholesky().is_some());
            let q = x.dot(&(p * &x));
            prop_assert!(q <= prev * (1.0 + 1e-12) + 1e-15);
            prev = q;
        }
    }

    #[test]
    fn gains_freeze_on_zeroed_performance(
        zs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 5..40),
        p0 in 0.01f64..50.0,
        n1 in -1.0f64..-0.001,
    ) {
        // single-tap target model: innovation is exactly z(k)
        let mut st = RcacState::new(3, GainStructure::Pi, config(p0, vec![n1], vec![])).unwrap();
        for z in &zs {
            st.update(z, DT).unwrap();
        }
        for _ in 0..200 {
            let before = st.theta().clone();
            st.update(&[0.0, 0.0, 0.0], DT).unwrap();
            prop_assert!((st.theta() - &before).amax() < 1e-12);
        }
    }

    #[test]
    fn integrators_respect_clamp(zs in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 2), 1..100)) {
        let mut st = RcacState::new(2, GainStructure::Pi, config(1.0, vec![-0.19], vec![])).unwrap();
        for z in &zs {
            st.update(z, 0.05).unwrap();
            prop_assert!(st.integrators().iter().all(|v| v.abs() <= 0.5));
        }
    }
}

#[test]
fn rls_block_update_matches_sequential_rows_when_uncoupled() {
    let mut block = Rls::new(DVector::zeros(2), 1.0, 1.0);
    let mut rows = TextbookRls {
        theta: DVector::zeros(2),
        p: DMatrix::identity(2, 2),
    };
    for k in 0..50 {
        let a = (k as f64 * 0.3).sin();
        let b = (k as f64 * 0.7).cos();
        let reg = DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]);
        let target = DVector::from_vec(vec![0.5 * a, -0.25 * b]);
        block.update(&reg, &target).unwrap();
        rows.step(&DVector::from_vec(vec![a, 0.0]), 0.5 * a);
        rows.step(&DVector::from_vec(vec![0.0, b]), -0.25 * b);
        assert!(relative_error(block.theta(), &rows.theta) < 1e-10);
    }
}
