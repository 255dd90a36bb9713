mod common;

use common::*;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavekernel::boundary_map::{lambda_map, lift_control, weyl_solution};
use wavekernel::control_op::*;
use wavekernel::linalg::CVector;
use wavekernel::{solve_goursat, Bump, Control, PotentialGrid, Preset};

fn relative_l2(a: &SampledFunction, b: &SampledFunction) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.values.iter().map(|y| y.norm_sqr()).sum();
    (d / n).sqrt()
}

fn round_trip_worst(p: &PotentialGrid, horizon: f64, seed: u64) -> f64 {
    let intervals = 200;
    let field = solve_goursat(p, horizon, horizon / 100.0, 1e-12).unwrap();
    let sys = build_volterra(&field, horizon, intervals).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|_| {
            let f = Control::random_smooth(&mut rng, horizon, p.dim()).unwrap();
            let u = apply_w(&field, &f, horizon, intervals).unwrap();
            let back = invert_w(&sys, &u).unwrap();
            relative_l2(&back, &SampledFunction::from_control(&f, horizon, intervals))
        })
        .fold(0.0, f64::max)
}

#[test]
fn inversion_recovers_random_controls() {
    assert!(round_trip_worst(&scalar(1.0, 2.0), 2.0, 7) <= 1e-10);
    assert!(round_trip_worst(&constant(hermitian_2x2(), 2.0), 2.0, 8) <= 1e-10);
    assert!(round_trip_worst(&preset(Preset::Coupled, 1.5), 1.5, 9) <= 1e-10);
}

#[test]
fn zero_potential_inverts_by_reflection() {
    let p = scalar(0.0, 1.0);
    let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
    let f = Control::bump(1.0, Bump::new(0.3, 0.8).unwrap(), vec![real(2.0)]).unwrap();
    let u = apply_w(&field, &f, 1.0, 50).unwrap();
    assert_eq!(u.values, reflect(&SampledFunction::from_control(&f, 1.0, 50)).values);
    let sys = build_volterra(&field, 1.0, 50).unwrap();
    assert_eq!(invert_w(&sys, &u).unwrap().values, SampledFunction::from_control(&f, 1.0, 50).values);
    let c = condition_estimate(&sys).unwrap();
    assert!((c.cond - 1.0).abs() < 1e-10);
}

#[test]
fn sampled_controls_round_trip() {
    let horizon = 1.0;
    let smooth = Control::bump(horizon, Bump::new(0.25, 0.95).unwrap(), vec![real(1.0)]).unwrap();
    let samples: Vec<Vec<C64>> = (0..=400).map(|k| smooth.value(k as f64 / 400.0).iter().copied().collect()).collect();
    let f = Control::from_samples(horizon, &samples, 0.2).unwrap();
    let p = preset(Preset::Smooth, horizon);
    let field = solve_goursat(&p, horizon, 0.01, 1e-12).unwrap();
    let sys = build_volterra(&field, horizon, 100).unwrap();
    let u = apply_w(&field, &f, horizon, 100).unwrap();
    let back = invert_w(&sys, &u).unwrap();
    assert!(relative_l2(&back, &SampledFunction::from_control(&f, horizon, 100)) < 1e-10);
}

#[test]
fn neumann_series_agrees_with_substitution() {
    let p = scalar(1.0, 1.0);
    let field = solve_goursat(&p, 1.0, 0.01, 1e-12).unwrap();
    let sys = build_volterra(&field, 1.0, 80).unwrap();
    let f = Control::bump(1.0, Bump::new(0.1, 0.9).unwrap(), vec![real(1.0)]).unwrap();
    let g = reflect(&SampledFunction::from_control(&f, 1.0, 80));
    let u = sys.apply(&g).unwrap();
    let series = sys.neumann(&u, 60, 1e-14).unwrap();
    assert!(relative_l2(&series.solution, &sys.solve(&u).unwrap()) < 1e-12);
    assert!(series.term_norms.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn certification_holds_for_square_integrable_potentials() {
    let cases = [
        (scalar(1.0, 1.0), 1.0),
        (preset(Preset::Smooth, 1.5), 1.5),
        (preset(Preset::Well, 2.0), 2.0),
        (preset(Preset::Coupled, 1.0), 1.0),
    ];
    for (p, horizon) in cases {
        let field = solve_goursat(&p, horizon, horizon / 100.0, 1e-10).unwrap();
        let opts = CertifyOptions {
            trials: 30,
            seed: 11,
            intervals: None,
        };
        let r = certify_h2_bound(&p, &field, horizon, opts).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.ratios.i <= r.bounds.i && r.ratios.ii <= r.bounds.ii && r.ratios.iii <= r.bounds.iii);
        assert!(r.empirical_ratio <= r.composite * r.embedding);
        assert_eq!((r.seed, r.trials), (11, 30));
    }
}

#[test]
fn certification_is_reproducible() {
    let p = preset(Preset::Smooth, 1.0);
    let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
    let opts = CertifyOptions {
        trials: 10,
        seed: 3,
        intervals: Some(64),
    };
    let a = certify_h2_bound(&p, &field, 1.0, opts).unwrap();
    let b = certify_h2_bound(&p, &field, 1.0, opts).unwrap();
    assert_eq!(a, b);
    assert!(certify_h2_bound(&p, &field, 0.5, opts).is_err());
}

#[test]
fn inverse_h2_norm_is_stable_under_refinement() {
    let p = preset(Preset::Coupled, 1.0);
    let field = solve_goursat(&p, 1.0, 0.005, 1e-12).unwrap();
    let norms: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|n| inverse_h2_norm(&build_volterra(&field, 1.0, *n).unwrap()).unwrap())
        .collect();
    assert!(norms.iter().all(|v| v.is_finite() && *v >= 1.0), "{norms:?}");
    for w in norms.windows(2) {
        assert!((w[1] - w[0]).abs() <= 0.02 * w[0], "{norms:?}");
    }
}

#[test]
fn dense_cap_is_enforced() {
    let p = scalar(1.0, 1.0);
    let field = solve_goursat(&p, 1.0, 0.05, 1e-10).unwrap();
    let sys = build_volterra(&field, 1.0, 40).unwrap();
    assert!(matches!(
        condition_estimate_capped(&sys, 16),
        Err(wavekernel::Error::DenseCap { .. })
    ));
}

#[test]
fn decaying_solution_solves_the_ode() {
    let cutoff = 1.0;
    let p = preset(Preset::Well, 3.0);
    let c = DMatrix::from_element(1, 1, real(1.0));
    let k = weyl_solution(&p, cutoff, &c).unwrap();
    assert_eq!(k.eval(0.0).unwrap()[(0, 0)], real(1.0));
    let e = 1e-3;
    for &x in &[0.2, 0.5, 0.8, 1.5, 2.5] {
        let kk = |x: f64| k.eval(x).unwrap()[(0, 0)];
        let second = (kk(x + e) - kk(x) * 2.0 + kk(x - e)) / (e * e);
        let q = p.eval(x).unwrap()[(0, 0)];
        assert!((second - q * kk(x)).norm() < 1e-3 * kk(x).norm(), "x={x}");
    }
    let ratio = k.eval(2.5).unwrap()[(0, 0)] / k.eval(1.5).unwrap()[(0, 0)];
    assert!((ratio.re - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn boundary_map_is_linear_and_lifts_controls() {
    let c = hermitian_2x2();
    let p = constant(c.clone(), 2.0);
    let k = weyl_solution(&p, 2.0, &c).unwrap();
    let v = CVector::from_vec(vec![real(1.0), C64::new(0.0, -2.0)]);
    let lam = lambda_map(&k, v.clone()).unwrap();
    let direct = -(k.eval(0.7).unwrap() * &v);
    assert_eq!(lam.eval(0.7).unwrap(), direct);
    assert!(lambda_map(&k, CVector::from_vec(vec![real(1.0)])).is_err());

    let f = Control::bump(1.0, Bump::new(0.2, 0.9).unwrap(), vec![real(1.0), C64::new(0.5, 0.5)]).unwrap();
    let lifted = lift_control(&k, &f).unwrap();
    let fv = f.value(0.6);
    let expect = -(k.eval(1.1).unwrap() * fv);
    assert!((lifted.eval(0.6, 1.1).unwrap() - expect).norm() < 1e-15);
}
