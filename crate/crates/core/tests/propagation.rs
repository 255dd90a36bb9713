mod common;

use common::*;
use num_complex::Complex64 as C64;
use wavekernel::oracle::{compare, fd_solve, FdConfig};
use wavekernel::propagator::*;
use wavekernel::{solve_goursat, Bump, Control, PotentialGrid, Preset};

fn bump(horizon: f64, coeffs: Vec<C64>) -> Control {
    Control::bump(horizon, Bump::new(0.2, horizon - 0.1).unwrap(), coeffs).unwrap()
}

/// L2 distances between `propagate` and the leapfrog oracle over three refinements.
fn mutual_distances(p: &PotentialGrid, f: &Control, horizon: f64) -> Vec<f64> {
    (0..3)
        .map(|k| {
            let nodes = 50 * 2usize.pow(k);
            let field = solve_goursat(p, horizon, horizon / nodes as f64, 1e-12).unwrap();
            let a = propagate(p, &field, f, horizon, nodes).unwrap();
            let b = fd_solve(p, f, FdConfig::new(nodes, horizon)).unwrap();
            compare(&a, &b).unwrap().l2
        })
        .collect()
}

#[test]
fn zero_potential_agrees_with_leapfrog_exactly() {
    let p = scalar(0.0, 1.1);
    let f = bump(1.0, vec![real(1.0)]);
    let field = solve_goursat(&p, 1.0, 0.01, 1e-10).unwrap();
    let a = propagate(&p, &field, &f, 1.0, 100).unwrap();
    let b = fd_solve(&p, &f, FdConfig::new(100, 1.0)).unwrap();
    let e = compare(&a, &b).unwrap();
    assert!(e.l2 <= 1e-12 && e.max <= 1e-12 && e.rel_l2 <= 1e-12, "{e:?}");
}

#[test]
fn scalar_potential_converges_to_the_oracle() {
    let d = mutual_distances(&scalar(1.0, 1.2), &bump(1.0, vec![real(1.0)]), 1.0);
    for w in d.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{d:?}");
    }
}

#[test]
fn matrix_potential_converges_to_the_oracle() {
    let p = constant(hermitian_2x2(), 1.2);
    let d = mutual_distances(&p, &bump(1.0, vec![real(1.0), C64::new(-0.5, 0.7)]), 1.0);
    for w in d.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{d:?}");
    }
}

#[test]
fn second_time_derivative_matches_differences() {
    let p = preset(Preset::Coupled, 1.0);
    let field = solve_goursat(&p, 1.0, 0.005, 1e-12).unwrap();
    let f = bump(1.0, vec![real(1.0), C64::new(0.0, 1.0)]);
    let (x, t, e) = (0.3, 0.8, 1e-3);
    let at = |t: f64| u_value(&field, &f, x, t).unwrap();
    let (a, b, c) = (at(t - e), at(t), at(t + e));
    let tt = u_tt(&field, &f, x, t).unwrap();
    for k in 0..2 {
        let fd = (a[k] - b[k] * 2.0 + c[k]) / (e * e);
        assert!((fd - tt[k]).norm() < 1e-3 * (1.0 + tt[k].norm()), "{fd} vs {}", tt[k]);
    }
    let ut = u_t(&field, &f, x, t).unwrap();
    assert!(((c[0] - a[0]) / (2.0 * e) - ut[0]).norm() < 1e-4 * ut[0].norm());
}

#[test]
fn snapshot_satisfies_the_telegraph_identity() {
    // u_xx - u_tt = q u along the snapshot, with u_tt from point evaluation
    let p = preset(Preset::Smooth, 1.0);
    let field = solve_goursat(&p, 1.0, 0.0025, 1e-12).unwrap();
    let f = bump(1.0, vec![real(1.0)]);
    let snap = propagate(&p, &field, &f, 1.0, 40).unwrap();
    for k in [5, 17, 30] {
        let x = snap.x(k);
        let tt = u_tt(&field, &f, x, 1.0).unwrap()[0];
        let q = p.eval(x).unwrap()[(0, 0)];
        let lhs = snap.u_xx_at(k)[0] - tt;
        let scale = 1.0 + snap.u_xx_at(k)[0].norm();
        assert!((lhs - q * snap.u_at(k)[0]).norm() < 1e-3 * scale, "x={x}");
    }
}

#[test]
fn difference_quotients_converge_linearly() {
    let p = scalar(1.0, 1.2);
    let field = solve_goursat(&p, 1.2, 1.0 / 200.0, 1e-10).unwrap();
    let f = Control::bump(1.2, Bump::new(0.1, 1.15).unwrap(), vec![real(1.0)]).unwrap();
    let hs: Vec<f64> = (3..=6).map(|k| 2f64.powi(-k)).collect();
    let table = difference_quotient_test(&field, &f, 1.0, &hs).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert!(table.slope >= 0.9, "{table:?}");
}
