use serde::{Deserialize, Serialize};

use super::derivatives::KernelDerivatives;
use super::field::KernelField;
use crate::error::Result;
use crate::linalg::{self, ZERO};
use crate::potential::PotentialGrid;

/// Sup norms of `wt`, `wt_x`, `w` over `0 <= x <= t <= T` and the
/// integral `b3 = int_0^T (int_x^T |wt_xx(x, t)| dt)^2 dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl KernelConstants {
    pub fn is_finite(&self) -> bool {
        [self.b1, self.b2, self.b3, self.b4].iter().all(|b| b.is_finite() && *b >= 0.0)
    }
}

pub fn kernel_constants(p: &PotentialGrid, field: &KernelField) -> Result<KernelConstants> {
    let derivs = KernelDerivatives::compute(p, field)?;
    kernel_constants_with(p, &derivs)
}

/// `(x_a, t_b)` grid on the `w` triangle: step `T / K`, coinciding with
/// lattice nodes when the lattice has an even number of cells.
fn w_grid(field: &KernelField) -> (usize, f64) {
    let k = (field.lattice.cells() / 2).max(1);
    (k, field.horizon / k as f64)
}

/// `|wt_xx|` or `|wt_tt|` on the `w` grid, one row per `x_a` holding `t_b`, `b >= a`.
fn second_derivative_norms(
    p: &PotentialGrid,
    derivs: &KernelDerivatives,
    with_potential: bool,
) -> Vec<Vec<f64>> {
    let field = derivs.field();
    let n = field.n;
    let (k, hw) = w_grid(field);
    let on_nodes = field.lattice.cells() % 2 == 0;
    let mut buf = vec![ZERO; n * n];
    (0..=k)
        .map(|a| {
            (a..=k)
                .map(|b| {
                    if on_nodes {
                        let (i, j) = (b - a, b + a);
                        if with_potential {
                            derivs.wxx_node_into(i, j, &mut buf);
                        } else {
                            derivs.wtt_node_into(i, j, &mut buf);
                        }
                    } else {
                        let (x, t) = (a as f64 * hw, b as f64 * hw);
                        if with_potential {
                            derivs.wtilde_xx_into(p, x, t, &mut buf);
                        } else {
                            let m = derivs.wtt_explicit(x, t).expect("grid point inside triangle");
                            buf.copy_from_slice(&linalg::to_flat(&m));
                        }
                    }
                    linalg::op_norm_flat(&buf, n)
                })
                .collect()
        })
        .collect()
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[len - 1])),
    }
}

/// `int_x^T |g(x, t)| dt` for each `x_a`.
fn line_integrals(norms: &[Vec<f64>], step: f64) -> Vec<f64> {
    norms.iter().map(|row| trapezoid(row, step)).collect()
}

pub fn kernel_constants_with(p: &PotentialGrid, derivs: &KernelDerivatives) -> Result<KernelConstants> {
    let field = derivs.field();
    let n = field.n;
    let nn = n * n;
    let m = field.lattice.cells();
    let mut b1: f64 = 0.0;
    let mut b2: f64 = 0.0;
    let mut b4: f64 = 0.0;
    let mut tilde = vec![ZERO; nn];
    let mut wx = vec![ZERO; nn];
    for (i, j) in field.lattice.nodes() {
        if i + j > m {
            continue;
        }
        let v = field.v.block(i, j);
        let v0 = field.v0.block(i, j);
        for e in 0..nn {
            tilde[e] = v[e] - v0[e];
        }
        derivs.wx_node_into(i, j, &mut wx);
        b1 = b1.max(linalg::op_norm_flat(&tilde, n));
        b2 = b2.max(linalg::op_norm_flat(&wx, n));
        b4 = b4.max(linalg::op_norm_flat(v, n));
    }

    let (_, hw) = w_grid(field);
    let inner = line_integrals(&second_derivative_norms(p, derivs, true), hw);
    let squares: Vec<f64> = inner.iter().map(|s| s * s).collect();
    let b3 = trapezoid(&squares, hw);
    Ok(KernelConstants { b1, b2, b3, b4 })
}

/// `max_x int_x^T |wt_tt(x, t)| dt`.
pub fn wtt_line_integral_max(p: &PotentialGrid, derivs: &KernelDerivatives) -> f64 {
    let (_, hw) = w_grid(derivs.field());
    line_integrals(&second_derivative_norms(p, derivs, false), hw)
        .into_iter()
        .fold(0.0, f64::max)
}
