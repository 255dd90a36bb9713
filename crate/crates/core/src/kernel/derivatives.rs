//! First derivatives of the kernel and the explicit second `t`-derivative of
//! its smooth part.
//!
//! Writing `v = v0 + vt`, the smooth part satisfies
//!
//! ```text
//! vt_xi  = -1/4 int_xi^eta q((eta1 - xi)/2) v(xi, eta1) d eta1 + 1/4 int_0^xi q((xi - xi1)/2) v(xi1, xi) d xi1
//! vt_eta = -1/4 int_0^xi q((eta - xi1)/2) v(xi1, eta) d xi1
//! ```
//!
//! and `vt_xixi`, `vt_etaeta` are single integrals of `q (q/4 + vt_xi + vt_eta)` along
//! lattice lines. All line integrals are trapezoid prefix sums, so every field
//! below costs `O(m^2)` block products.

use super::field::KernelField;
use super::lattice::NodeField;
use crate::error::Result;
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::potential::PotentialGrid;

/// Derivative fields on the lattice of a solved kernel.
#[derive(Debug, Clone)]
pub struct KernelDerivatives<'a> {
    field: &'a KernelField,
    vt_xi: NodeField,
    vt_eta: NodeField,
    /// `1/4 (q(xi/2) v(0, xi) - q(eta/2) v(0, eta))`
    wtt_diag: NodeField,
    /// the six single integrals of products of `q`
    wtt_qq: NodeField,
    /// the remaining double-integral terms
    wtt_hat: NodeField,
}

/// Trapezoid prefix along each row: `out(i, j) = sum'_{j'=i..j} g(i, j')`, unit spacing.
fn row_prefix(field: &KernelField, mut g: impl FnMut(usize, usize, &mut [C64])) -> NodeField {
    let lattice = field.lattice;
    let n = field.n;
    let nn = n * n;
    let m = lattice.cells();
    let mut out = NodeField::zeros(lattice, n);
    let mut prev = vec![ZERO; nn];
    let mut cur = vec![ZERO; nn];
    let mut run = vec![ZERO; nn];
    for i in 0..=m {
        g(i, i, &mut prev);
        run.iter_mut().for_each(|z| *z = ZERO);
        for j in (i + 1)..=m {
            g(i, j, &mut cur);
            let dst = out.block_mut(i, j);
            for e in 0..nn {
                run[e] += (prev[e] + cur[e]) * 0.5;
                dst[e] = run[e];
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }
    out
}

/// Trapezoid prefix down each column: `out(i, j) = sum'_{i'=0..i} g(i', j)`, unit spacing.
fn column_prefix(field: &KernelField, mut g: impl FnMut(usize, usize, &mut [C64])) -> NodeField {
    let lattice = field.lattice;
    let n = field.n;
    let nn = n * n;
    let m = lattice.cells();
    let mut out = NodeField::zeros(lattice, n);
    let mut prev = vec![ZERO; (m + 1) * nn];
    let mut run = vec![ZERO; (m + 1) * nn];
    let mut cur = vec![ZERO; nn];
    for j in 0..=m {
        g(0, j, &mut prev[j * nn..(j + 1) * nn]);
    }
    for i in 1..=m {
        for j in i..=m {
            g(i, j, &mut cur);
            let dst = out.block_mut(i, j);
            let pj = &mut prev[j * nn..(j + 1) * nn];
            let rj = &mut run[j * nn..(j + 1) * nn];
            for e in 0..nn {
                rj[e] += (pj[e] + cur[e]) * 0.5;
                dst[e] = rj[e];
                pj[e] = cur[e];
            }
        }
    }
    out
}

impl<'a> KernelDerivatives<'a> {
    pub fn compute(p: &PotentialGrid, field: &'a KernelField) -> Result<Self> {
        let n = field.n;
        let nn = n * n;
        let lattice = field.lattice;
        let m = lattice.cells();
        let h = lattice.step();
        let q = |k: usize| field.q_half_block(k);
        let v = &field.v;

        // A(i, j) = int_{xi}^{eta} q((eta1 - xi)/2) v(xi, eta1), B(i, j) = int_0^{xi} q((eta - xi1)/2) v(xi1, eta)
        let a_row = row_prefix(field, |i, j, out| linalg::mul_into(out, q(j - i), v.block(i, j), n));
        let b_col = column_prefix(field, |i, j, out| linalg::mul_into(out, q(j - i), v.block(i, j), n));

        let mut vt_xi = NodeField::zeros(lattice, n);
        let mut vt_eta = NodeField::zeros(lattice, n);
        for (i, j) in lattice.nodes() {
            let a = a_row.block(i, j);
            let bd = b_col.block(i, i);
            let b = b_col.block(i, j);
            let dx = vt_xi.block_mut(i, j);
            for e in 0..nn {
                dx[e] = (bd[e] - a[e]) * (0.25 * h);
            }
            let de = vt_eta.block_mut(i, j);
            for e in 0..nn {
                de[e] = b[e] * (-0.25 * h);
            }
        }
        let e_sum = |i: usize, j: usize, out: &mut [C64]| {
            let a = vt_xi.block(i, j);
            let b = vt_eta.block(i, j);
            for k in 0..nn {
                out[k] = a[k] + b[k];
            }
        };

        // Double-integral part: rows carry q(tau) E(xi, xi + 2 tau), columns q(tau) E(eta - 2 tau, eta).
        let mut tmp = vec![ZERO; nn];
        let r1_e = row_prefix(field, |i, j, out| {
            e_sum(i, j, &mut tmp);
            linalg::mul_into(out, q(j - i), &tmp, n);
        });
        let mut tmp = vec![ZERO; nn];
        let r3_e = column_prefix(field, |i, j, out| {
            e_sum(i, j, &mut tmp);
            linalg::mul_into(out, q(j - i), &tmp, n);
        });

        // Products of q: int_0^x q(tau) q(a + tau), int_x^b q(tau) q(b - tau), a = xi/2, b = eta/2.
        let corr_row = row_prefix(field, |i, j, out| linalg::mul_into(out, q(j - i), q(j), n));
        let corr_col = column_prefix(field, |i, j, out| linalg::mul_into(out, q(j - i), q(i), n));
        let mut cum_q = vec![ZERO; (m + 1) * nn];
        for k in 1..=m {
            for e in 0..nn {
                cum_q[k * nn + e] =
                    cum_q[(k - 1) * nn + e] + (q(k - 1)[e] + q(k)[e]) * (0.25 * h);
            }
        }
        let cq = |k: usize| &cum_q[k * nn..(k + 1) * nn];
        let conv: Vec<Vec<C64>> = (0..=m)
            .map(|i| p.convolution_p((0.5 * i as f64 * h).min(p.x_max())).map(|c| linalg::to_flat(&c)))
            .collect::<Result<_>>()?;

        let mut wtt_diag = NodeField::zeros(lattice, n);
        let mut wtt_qq = NodeField::zeros(lattice, n);
        let mut wtt_hat = NodeField::zeros(lattice, n);
        let mut acc = vec![ZERO; nn];
        let mut seg = vec![ZERO; nn];
        for (i, j) in lattice.nodes() {
            // diagonal-kernel products
            acc.iter_mut().for_each(|z| *z = ZERO);
            linalg::mul_acc(&mut acc, q(i), v.block(0, i), n, 0.25);
            linalg::mul_acc(&mut acc, q(j), v.block(0, j), n, -0.25);
            wtt_diag.block_mut(i, j).copy_from_slice(&acc);

            // (int_x^b q) q(b) - (int_0^x q) q(a) - (int_0^a q) q(a)
            //   + int_0^x q(tau) q(a + tau) + p(a) - int_x^b q(tau) q(b - tau), all / 8
            let k = j - i;
            acc.iter_mut().for_each(|z| *z = ZERO);
            for e in 0..nn {
                seg[e] = cq(j)[e] - cq(k)[e];
            }
            linalg::mul_acc(&mut acc, &seg, q(j), n, 0.125);
            linalg::mul_acc(&mut acc, cq(k), q(i), n, -0.125);
            linalg::mul_acc(&mut acc, cq(i), q(i), n, -0.125);
            linalg::axpy(&mut acc, corr_row.block(i, j), 0.125 * 0.5 * h);
            linalg::axpy(&mut acc, &conv[i], 0.125);
            linalg::axpy(&mut acc, corr_col.block(i, j), -0.125 * 0.5 * h);
            wtt_qq.block_mut(i, j).copy_from_slice(&acc);

            let r1 = r1_e.block(i, j);
            let r3d = r3_e.block(i, i);
            let r3 = r3_e.block(i, j);
            let dst = wtt_hat.block_mut(i, j);
            for e in 0..nn {
                dst[e] = (r1[e] - r3d[e] + r3[e]) * (-0.25 * h);
            }
        }

        Ok(Self {
            field,
            vt_xi,
            vt_eta,
            wtt_diag,
            wtt_qq,
            wtt_hat,
        })
    }

    pub fn field(&self) -> &KernelField {
        self.field
    }

    fn interp(&self, f: &NodeField, xi: f64, eta: f64) -> CMatrix {
        let mut out = vec![ZERO; self.field.n * self.field.n];
        f.interpolate_into(xi, eta, &mut out);
        linalg::to_matrix(&out, self.field.n)
    }

    /// `(vt_xi, vt_eta)`, the derivatives of the smooth part `v - v0`.
    pub fn smooth_part(&self, xi: f64, eta: f64) -> Result<(CMatrix, CMatrix)> {
        self.field.v_at(xi, eta)?;
        Ok((self.interp(&self.vt_xi, xi, eta), self.interp(&self.vt_eta, xi, eta)))
    }

    /// `(v_xi, v_eta)` including the explicit `q/4` terms.
    pub fn derivatives_v(&self, p: &PotentialGrid, xi: f64, eta: f64) -> Result<(CMatrix, CMatrix)> {
        let (sx, se) = self.smooth_part(xi, eta)?;
        let (ex, ee) = explicit_derivatives(p, xi, eta)?;
        Ok((sx + ex, se + ee))
    }

    /// `wt_x(x, t) = vt_eta - vt_xi` at `(t - x, t + x)`.
    pub fn wtilde_x(&self, x: f64, t: f64) -> Result<CMatrix> {
        self.field.check_point(x, t)?;
        let (xi, eta) = (t - x.max(0.0), t + x.max(0.0));
        Ok(self.interp(&self.vt_eta, xi, eta) - self.interp(&self.vt_xi, xi, eta))
    }

    /// `wt_t(x, t) = vt_xi + vt_eta`.
    pub fn wtilde_t(&self, x: f64, t: f64) -> Result<CMatrix> {
        self.field.check_point(x, t)?;
        let (xi, eta) = (t - x.max(0.0), t + x.max(0.0));
        Ok(self.interp(&self.vt_eta, xi, eta) + self.interp(&self.vt_xi, xi, eta))
    }

    /// The three groups of the explicit `wt_tt`: diagonal-kernel products,
    /// single integrals of `q q`, and the remainder of double integrals.
    pub fn wtt_parts(&self, x: f64, t: f64) -> Result<(CMatrix, CMatrix, CMatrix)> {
        self.field.check_point(x, t)?;
        let (xi, eta) = (t - x.max(0.0), t + x.max(0.0));
        Ok((
            self.interp(&self.wtt_diag, xi, eta),
            self.interp(&self.wtt_qq, xi, eta),
            self.interp(&self.wtt_hat, xi, eta),
        ))
    }

    /// Explicit `wt_tt(x, t)`.
    pub fn wtt_explicit(&self, x: f64, t: f64) -> Result<CMatrix> {
        let (a, b, c) = self.wtt_parts(x, t)?;
        Ok(a + b + c)
    }

    /// `wt_xx = wt_tt + q(x) w(x, t)`.
    pub fn wtilde_xx(&self, p: &PotentialGrid, x: f64, t: f64) -> Result<CMatrix> {
        let tt = self.wtt_explicit(x, t)?;
        let w = self.field.kernel_w(x, t)?;
        Ok(tt + p.eval(x.max(0.0))? * w)
    }

    /// Node values of `wt_tt` at lattice node `(i, j)`.
    pub(crate) fn wtt_node_into(&self, i: usize, j: usize, out: &mut [C64]) {
        let a = self.wtt_diag.block(i, j);
        let b = self.wtt_qq.block(i, j);
        let c = self.wtt_hat.block(i, j);
        for e in 0..out.len() {
            out[e] = a[e] + b[e] + c[e];
        }
    }

    /// Node values of `wt_xx = wt_tt + q((eta - xi)/2) v` at `(i, j)`.
    pub(crate) fn wxx_node_into(&self, i: usize, j: usize, out: &mut [C64]) {
        self.wtt_node_into(i, j, out);
        let n = self.field.n;
        linalg::mul_acc(out, self.field.q_half_block(j - i), self.field.v.block(i, j), n, 1.0);
    }

    /// Node values of `wt_x` at `(i, j)`.
    pub(crate) fn wx_node_into(&self, i: usize, j: usize, out: &mut [C64]) {
        let a = self.vt_eta.block(i, j);
        let b = self.vt_xi.block(i, j);
        for e in 0..out.len() {
            out[e] = a[e] - b[e];
        }
    }

    pub(crate) fn wtilde_x_into(&self, x: f64, t: f64, out: &mut [C64]) {
        let nn = out.len();
        let mut tmp = vec![ZERO; nn];
        self.vt_eta.interpolate_into(t - x, t + x, out);
        self.vt_xi.interpolate_into(t - x, t + x, &mut tmp);
        for e in 0..nn {
            out[e] -= tmp[e];
        }
    }

    pub(crate) fn wtilde_xx_into(&self, p: &PotentialGrid, x: f64, t: f64, out: &mut [C64]) {
        let n = self.field.n;
        let nn = n * n;
        let (xi, eta) = (t - x, t + x);
        let mut tmp = vec![ZERO; nn];
        self.wtt_diag.interpolate_into(xi, eta, out);
        self.wtt_qq.interpolate_into(xi, eta, &mut tmp);
        linalg::axpy(out, &tmp, 1.0);
        self.wtt_hat.interpolate_into(xi, eta, &mut tmp);
        linalg::axpy(out, &tmp, 1.0);
        let mut qx = vec![ZERO; nn];
        p.eval_into(x, &mut qx);
        self.field.v.interpolate_into(xi, eta, &mut tmp);
        linalg::mul_acc(out, &qx, &tmp, n, 1.0);
    }
}

/// Derivatives of the explicit part: `v0_xi = q(xi/2)/4`, `v0_eta = -q(eta/2)/4`.
pub fn explicit_derivatives(p: &PotentialGrid, xi: f64, eta: f64) -> Result<(CMatrix, CMatrix)> {
    let qa = p.eval(0.5 * xi)?;
    let qb = p.eval(0.5 * eta)?;
    Ok((qa * C64::new(0.25, 0.0), qb * C64::new(-0.25, 0.0)))
}
