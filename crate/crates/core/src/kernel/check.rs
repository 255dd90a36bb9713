use serde::{Deserialize, Serialize};

use super::field::KernelField;
use crate::error::Result;
use crate::linalg::{self, C64, ZERO};
use crate::potential::PotentialGrid;

/// Residuals of the characteristic Goursat problem on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoursatResiduals {
    /// `max |v(xi, xi)|`
    pub diagonal: f64,
    /// `max |v(0, eta) + 1/2 int_0^{eta/2} q|`
    pub edge: f64,
    /// `max |D_xi D_eta v / h^2 + q((eta - xi)/2) v / 4|` over lattice cells
    pub interior: f64,
}

pub fn check_goursat(p: &PotentialGrid, field: &KernelField) -> Result<GoursatResiduals> {
    let n = field.n;
    let nn = n * n;
    let m = field.lattice.cells();
    let h = field.lattice.step();
    let v = &field.v;

    let diagonal = (0..=m)
        .map(|i| linalg::frobenius_flat(v.block(i, i)))
        .fold(0.0, f64::max);

    let mut edge: f64 = 0.0;
    for j in 0..=m {
        let exact = p.integral(0.0, (0.5 * j as f64 * h).min(p.x_max()))?;
        let exact = linalg::to_flat(&exact);
        let r: Vec<C64> = v.block(0, j).iter().zip(&exact).map(|(a, b)| a + b * 0.5).collect();
        edge = edge.max(linalg::op_norm_flat(&r, n));
    }

    let mut interior: f64 = 0.0;
    let mut qv = vec![ZERO; nn];
    let mut r = vec![ZERO; nn];
    for i in 0..m {
        for j in (i + 1)..m {
            qv.iter_mut().for_each(|z| *z = ZERO);
            for &(a, b) in &[(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                linalg::mul_acc(&mut qv, field.q_half_block(b - a), v.block(a, b), n, 0.25);
            }
            let (a, b, c, d) = (v.block(i + 1, j + 1), v.block(i + 1, j), v.block(i, j + 1), v.block(i, j));
            for e in 0..nn {
                r[e] = (a[e] - b[e] - c[e] + d[e]) / (h * h) + qv[e] * 0.25;
            }
            interior = interior.max(linalg::op_norm_flat(&r, n));
        }
    }

    Ok(GoursatResiduals {
        diagonal,
        edge,
        interior,
    })
}
