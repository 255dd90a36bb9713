//! The wave `u(x, t) = f(t - x) + int_x^t w(x, s) f(t - s) ds` generated by a boundary control.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::kernel::{KernelDerivatives, KernelField};
use crate::linalg::{self, C64, ZERO};
use crate::potential::PotentialGrid;

/// `u`, `u_x`, `u_xx` at uniform nodes `x_k = k T / N` of `[0, T]`, flat with `n` entries per node.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSnapshot {
    pub horizon: f64,
    pub dim: usize,
    pub u: Vec<C64>,
    pub u_x: Vec<C64>,
    pub u_xx: Vec<C64>,
}

impl WaveSnapshot {
    pub fn zeros(horizon: f64, dim: usize, intervals: usize) -> Self {
        let len = (intervals + 1) * dim;
        Self {
            horizon,
            dim,
            u: vec![ZERO; len],
            u_x: vec![ZERO; len],
            u_xx: vec![ZERO; len],
        }
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.u.len() / self.dim - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.intervals() as f64
    }

    pub fn u_at(&self, k: usize) -> &[C64] {
        &self.u[k * self.dim..(k + 1) * self.dim]
    }

    pub fn u_x_at(&self, k: usize) -> &[C64] {
        &self.u_x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn u_xx_at(&self, k: usize) -> &[C64] {
        &self.u_xx[k * self.dim..(k + 1) * self.dim]
    }
}

/// Trapezoid weight of node `l` among `len` equally spaced nodes.
#[inline]
pub(crate) fn trapezoid_weight(l: usize, len: usize, step: f64) -> f64 {
    if len <= 1 {
        0.0
    } else if l == 0 || l == len - 1 {
        0.5 * step
    } else {
        step
    }
}

/// `int_x^t w(x, s) g(t - s) ds` with `panels` equal trapezoid panels, `g = f^{(order)}`.
fn kernel_integral(field: &KernelField, f: &Control, order: usize, x: f64, t: f64, panels: usize) -> Vec<C64> {
    let n = field.dim();
    let mut out = vec![ZERO; n];
    if t <= x {
        return out;
    }
    let ds = (t - x) / panels as f64;
    let mut w = vec![ZERO; n * n];
    let mut g = vec![ZERO; n];
    for l in 0..=panels {
        let s = if l == panels { t } else { x + l as f64 * ds };
        g.iter_mut().for_each(|z| *z = ZERO);
        f.add_into(t - s, order, C64::new(1.0, 0.0), &mut g);
        if g.iter().all(|z| *z == ZERO) {
            continue;
        }
        field.w_into(x, s, &mut w);
        linalg::mul_vec_acc(&mut out, &w, &g, n, C64::new(trapezoid_weight(l, panels + 1, ds), 0.0));
    }
    out
}

fn default_panels(field: &KernelField, x: f64, t: f64) -> usize {
    (((t - x) / (0.5 * field.step())).ceil() as usize).max(1)
}

fn check_horizon(field: &KernelField, f: &Control, t: f64) -> Result<()> {
    if t > field.horizon() * (1.0 + 1e-12) {
        return Err(Error::HorizonMismatch(t, field.horizon()));
    }
    if f.horizon() < t * (1.0 - 1e-12) {
        return Err(Error::HorizonMismatch(f.horizon(), t));
    }
    if f.dim() != field.dim() {
        return Err(Error::Dimension {
            expected: field.dim(),
            found: f.dim(),
        });
    }
    Ok(())
}

fn point_checked(field: &KernelField, f: &Control, x: f64, t: f64) -> Result<()> {
    check_horizon(field, f, t)?;
    if !(x >= 0.0 && t >= 0.0) {
        return Err(Error::OutsideTriangle {
            x,
            t,
            horizon: field.horizon(),
        });
    }
    Ok(())
}

/// `f^{(order)}(t - x) + int_x^t w(x, s) f^{(order)}(t - s) ds`: `u`, `u_t`, `u_tt` for order 0, 1, 2.
fn time_derivative(field: &KernelField, f: &Control, order: usize, x: f64, t: f64, panels: usize) -> Vec<C64> {
    if x >= t {
        return vec![ZERO; field.dim()];
    }
    let mut out = kernel_integral(field, f, order, x, t, panels);
    f.add_into(t - x, order, C64::new(1.0, 0.0), &mut out);
    out
}

/// `u(x, t)`; zero for `x >= t`.
pub fn u_value(field: &KernelField, f: &Control, x: f64, t: f64) -> Result<Vec<C64>> {
    point_checked(field, f, x, t)?;
    Ok(time_derivative(field, f, 0, x, t, default_panels(field, x, t)))
}

/// `u_t(x, t) = f'(t - x) + int_x^t w(x, s) f'(t - s) ds`.
pub fn u_t(field: &KernelField, f: &Control, x: f64, t: f64) -> Result<Vec<C64>> {
    point_checked(field, f, x, t)?;
    Ok(time_derivative(field, f, 1, x, t, default_panels(field, x, t)))
}

/// `u_tt(x, t) = f''(t - x) + int_x^t w(x, s) f''(t - s) ds`.
pub fn u_tt(field: &KernelField, f: &Control, x: f64, t: f64) -> Result<Vec<C64>> {
    point_checked(field, f, x, t)?;
    if x > t {
        return Err(Error::OutsideTriangle {
            x,
            t,
            horizon: field.horizon(),
        });
    }
    Ok(time_derivative(field, f, 2, x, t, default_panels(field, x, t)))
}

/// `u(x_k, T)` at `N + 1` nodes, flat: `f(T - x_k) + sum_l omega_l w(x_k, s_l) f(T - s_l)`.
pub fn wave_values(field: &KernelField, f: &Control, horizon: f64, intervals: usize) -> Result<Vec<C64>> {
    check_horizon(field, f, horizon)?;
    if intervals == 0 {
        return Err(Error::InvalidParameter("snapshot needs at least one interval".into()));
    }
    let samples = f.sample_on(horizon, intervals, 0);
    Ok(wave_values_from(field, &samples, horizon, intervals))
}

fn wave_values_from(field: &KernelField, samples: &[C64], horizon: f64, intervals: usize) -> Vec<C64> {
    let n = field.dim();
    let step = horizon / intervals as f64;
    let x_at = |k: usize| if k == intervals { horizon } else { k as f64 * step };
    let fs = |l: usize| &samples[(intervals - l) * n..(intervals - l + 1) * n];
    let rows: Vec<Vec<C64>> = (0..=intervals)
        .into_par_iter()
        .map(|k| {
            let x = x_at(k);
            let mut u = fs(k).to_vec();
            let mut w = vec![ZERO; n * n];
            let len = intervals - k + 1;
            for l in k..=intervals {
                let weight = trapezoid_weight(l - k, len, step);
                if weight == 0.0 {
                    continue;
                }
                field.w_into(x, x_at(l), &mut w);
                linalg::mul_vec_acc(&mut u, &w, fs(l), n, C64::new(weight, 0.0));
            }
            u
        })
        .collect();
    rows.concat()
}

/// Snapshot of `u(., T)` at `N + 1` nodes; `u_xx` through `u_xx = u_tt + q u`.
pub fn propagate(p: &PotentialGrid, field: &KernelField, f: &Control, horizon: f64, intervals: usize) -> Result<WaveSnapshot> {
    let derivs = KernelDerivatives::compute(p, field)?;
    propagate_with(p, &derivs, f, horizon, intervals)
}

pub fn propagate_with(
    p: &PotentialGrid,
    derivs: &KernelDerivatives,
    f: &Control,
    horizon: f64,
    intervals: usize,
) -> Result<WaveSnapshot> {
    let field = derivs.field();
    check_horizon(field, f, horizon)?;
    if intervals == 0 {
        return Err(Error::InvalidParameter("snapshot needs at least one interval".into()));
    }
    if p.x_max() < horizon * (1.0 - 1e-12) {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            lo: 0.0,
            hi: p.x_max(),
        });
    }
    let n = field.dim();
    let nn = n * n;
    let step = horizon / intervals as f64;
    let x_at = |k: usize| if k == intervals { horizon } else { k as f64 * step };
    // f^{(d)}(T - s_l) = f^{(d)}(x_{N - l})
    let samples: Vec<Vec<C64>> = (0..3).map(|d| f.sample_on(horizon, intervals, d)).collect();
    let fs = |d: usize, l: usize| &samples[d][(intervals - l) * n..(intervals - l + 1) * n];

    let values = wave_values_from(field, &samples[0], horizon, intervals);
    let rows: Vec<[Vec<C64>; 2]> = (0..=intervals)
        .into_par_iter()
        .map(|k| {
            let x = x_at(k);
            let mut ux = vec![ZERO; n];
            let mut utt = fs(2, k).to_vec();
            // boundary terms of u_x: -f'(T - x) - w(x, x) f(T - x)
            let mut w = vec![ZERO; nn];
            field.w_into(x, x, &mut w);
            for c in 0..n {
                ux[c] -= fs(1, k)[c];
            }
            linalg::mul_vec_acc(&mut ux, &w, fs(0, k), n, C64::new(-1.0, 0.0));

            let len = intervals - k + 1;
            let mut wx = vec![ZERO; nn];
            let mut qa = vec![ZERO; nn];
            let mut qb = vec![ZERO; nn];
            for l in k..=intervals {
                let weight = C64::new(trapezoid_weight(l - k, len, step), 0.0);
                if weight == ZERO {
                    continue;
                }
                let s = x_at(l);
                field.w_into(x, s, &mut w);
                linalg::mul_vec_acc(&mut utt, &w, fs(2, l), n, weight);
                // w_x = wt_x - (q((s + x)/2) + q((s - x)/2)) / 4
                derivs.wtilde_x_into(x, s, &mut wx);
                p.eval_into(0.5 * (s + x), &mut qa);
                p.eval_into(0.5 * (s - x), &mut qb);
                for e in 0..nn {
                    wx[e] -= (qa[e] + qb[e]) * 0.25;
                }
                linalg::mul_vec_acc(&mut ux, &wx, fs(0, l), n, weight);
            }
            let mut q = vec![ZERO; nn];
            p.eval_into(x, &mut q);
            let mut uxx = utt;
            linalg::mul_vec_acc(&mut uxx, &q, &values[k * n..(k + 1) * n], n, C64::new(1.0, 0.0));
            [ux, uxx]
        })
        .collect();

    let mut snap = WaveSnapshot::zeros(horizon, n, intervals);
    snap.u = values;
    for (k, [ux, uxx]) in rows.into_iter().enumerate() {
        snap.u_x[k * n..(k + 1) * n].copy_from_slice(&ux);
        snap.u_xx[k * n..(k + 1) * n].copy_from_slice(&uxx);
    }
    Ok(snap)
}

/// One row of a difference-quotient study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientRow {
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientTable {
    pub t: f64,
    pub rows: Vec<QuotientRow>,
    /// least-squares slope of `log e` against `log h`; `NaN` when any error vanishes
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() < 2 || ys.iter().any(|y| !(*y > 0.0)) {
        return f64::NAN;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `e(h) = || (u(., t + h) - u(., t)) / h - u_t(., t) ||_{L2(0, t + h)}` for each `h`.
///
/// All integrals share one `s`-grid anchored at `x`, with step `min(h) / 8`, so
/// that quadrature errors largely cancel in the difference quotient.
pub fn difference_quotient_test(field: &KernelField, f: &Control, t: f64, h_list: &[f64]) -> Result<QuotientTable> {
    if h_list.is_empty() || h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("step list must be nonempty and positive".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("step list must be decreasing".into()));
    }
    let h_max = h_list[0];
    if !(t > 0.0) {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
            lo: 0.0,
            hi: field.horizon(),
        });
    }
    point_checked(field, f, 0.0, t + h_max)?;
    let n = field.dim();
    let ds = h_list[h_list.len() - 1] / 8.0;
    let dx = 4.0 * ds;
    let panels = |x: f64, tau: f64| ((tau - x) / ds).round().max(1.0) as usize;

    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let nodes = ((t + h) / dx).ceil() as usize;
        let xs: Vec<f64> = (0..=nodes).map(|k| (k as f64 * dx).min(t + h)).collect();
        let sq: Vec<f64> = xs
            .par_iter()
            .map(|&x| {
                let next = time_derivative(field, f, 0, x, t + h, panels(x, t + h));
                let now = time_derivative(field, f, 0, x, t, panels(x, t));
                let rate = time_derivative(field, f, 1, x, t, panels(x, t));
                (0..n)
                    .map(|c| ((next[c] - now[c]) / h - rate[c]).norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        let mut integral = 0.0;
        for k in 1..xs.len() {
            integral += 0.5 * (xs[k] - xs[k - 1]) * (sq[k] + sq[k - 1]);
        }
        rows.push(QuotientRow { h, error: integral.sqrt() });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(QuotientTable {
        t,
        slope: log_log_slope(&hs, &es),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Bump;
    use crate::kernel::solve_goursat;
    use crate::potential::PotentialSpec;

    fn real(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn constant(c: f64, x_max: f64) -> PotentialGrid {
        PotentialGrid::build(&PotentialSpec::Constant {
            value: linalg::to_matrix(&[real(c)], 1),
            x_max,
            step: 1e-3,
        })
        .unwrap()
    }

    fn bump(horizon: f64) -> Control {
        Control::bump(horizon, Bump::new(0.2, horizon - 0.1).unwrap(), vec![real(1.0)]).unwrap()
    }

    #[test]
    fn zero_potential_is_pure_transport() {
        let p = constant(0.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 50.0, 1e-10).unwrap();
        let f = bump(1.0);
        let snap = propagate(&p, &field, &f, 1.0, 80).unwrap();
        for k in 0..=80 {
            let x = snap.x(k);
            assert!((snap.u_at(k)[0] - f.value(1.0 - x)[0]).norm() < 1e-14);
            assert!((snap.u_x_at(k)[0] + f.derivative(1.0 - x, 1)[0]).norm() < 1e-12);
            assert!((snap.u_xx_at(k)[0] - f.derivative(1.0 - x, 2)[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn boundary_trace_and_front() {
        let p = constant(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 100.0, 1e-10).unwrap();
        let f = Control::bump(1.0, Bump::new(0.1, 1.4).unwrap(), vec![real(1.0)]).unwrap();
        let snap = propagate(&p, &field, &f, 1.0, 100).unwrap();
        assert!((snap.u_at(0)[0] - f.value(1.0)[0]).norm() < 1e-12);
        assert_eq!(snap.u_at(100)[0], ZERO);
        assert_eq!(u_value(&field, &f, 0.8, 0.5).unwrap()[0], ZERO);
        assert_eq!(u_tt(&field, &f, 0.7, 0.7).unwrap()[0], ZERO);
    }

    #[test]
    fn point_evaluation_matches_snapshot() {
        let p = constant(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 100.0, 1e-10).unwrap();
        let f = bump(1.0);
        let snap = propagate(&p, &field, &f, 1.0, 200).unwrap();
        for &k in &[10usize, 50, 120] {
            let u = u_value(&field, &f, snap.x(k), 1.0).unwrap();
            assert!((u[0] - snap.u_at(k)[0]).norm() < 1e-5);
        }
    }

    #[test]
    fn u_x_matches_differences() {
        let p = constant(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 200.0, 1e-10).unwrap();
        let f = bump(1.0);
        let nodes = 400;
        let snap = propagate(&p, &field, &f, 1.0, nodes).unwrap();
        let dx = snap.step();
        for k in (20..380).step_by(37) {
            let fd = (snap.u_at(k + 1)[0] - snap.u_at(k - 1)[0]) / (2.0 * dx);
            assert!((fd - snap.u_x_at(k)[0]).norm() < 2e-3, "k={k}: {fd} vs {}", snap.u_x_at(k)[0]);
            let fd2 = (snap.u_x_at(k + 1)[0] - snap.u_x_at(k - 1)[0]) / (2.0 * dx);
            assert!((fd2 - snap.u_xx_at(k)[0]).norm() < 5e-2, "k={k}: {fd2} vs {}", snap.u_xx_at(k)[0]);
        }
    }

    #[test]
    fn zero_control_gives_zero_quotients() {
        let p = constant(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 50.0, 1e-10).unwrap();
        let f = Control::zero(1.0, 1);
        let table = difference_quotient_test(&field, &f, 0.5, &[0.1, 0.05]).unwrap();
        assert!(table.rows.iter().all(|r| r.error == 0.0));
    }

    #[test]
    fn quotient_rejects_bad_steps() {
        let p = constant(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 1.0 / 50.0, 1e-10).unwrap();
        let f = bump(1.0);
        assert!(difference_quotient_test(&field, &f, 0.5, &[0.05, 0.1]).is_err());
        assert!(difference_quotient_test(&field, &f, 0.9, &[0.2]).is_err());
    }

    #[test]
    fn slope_of_a_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
