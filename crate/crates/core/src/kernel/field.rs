use super::lattice::{Lattice, NodeField};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::potential::PotentialGrid;

/// The kernel in characteristic coordinates, `v(xi, eta) = w((eta - xi)/2, (eta + xi)/2)`,
/// on the lattice over `0 <= xi <= eta <= 2 T`.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub(crate) horizon: f64,
    pub(crate) lattice: Lattice,
    pub(crate) n: usize,
    pub(crate) v: NodeField,
    pub(crate) v0: NodeField,
    /// `q(k h / 2)` for `k = 0..=m`, flat blocks.
    pub(crate) q_half: Vec<C64>,
    pub(crate) iterations: usize,
    pub(crate) tail_bound: f64,
    pub(crate) sweep_changes: Vec<f64>,
}

impl KernelField {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn step(&self) -> f64 {
        self.lattice.step()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Sup-norm change recorded after each Picard sweep.
    pub fn sweep_changes(&self) -> &[f64] {
        &self.sweep_changes
    }

    pub fn values(&self) -> &NodeField {
        &self.v
    }

    pub fn explicit_part(&self) -> &NodeField {
        &self.v0
    }

    pub(crate) fn q_half_block(&self, k: usize) -> &[C64] {
        let nn = self.n * self.n;
        &self.q_half[k * nn..(k + 1) * nn]
    }

    /// `q` at the lattice half-step `k h / 2`.
    pub fn q_half(&self, k: usize) -> CMatrix {
        linalg::to_matrix(self.q_half_block(k), self.n)
    }

    /// `v` at lattice node `(i, j)`.
    pub fn v_node(&self, i: usize, j: usize) -> CMatrix {
        linalg::to_matrix(self.v.block(i, j), self.n)
    }

    /// `v` at an arbitrary point of the triangle.
    pub fn v_at(&self, xi: f64, eta: f64) -> Result<CMatrix> {
        let top = self.lattice.eta_max() * (1.0 + 1e-12);
        if !(xi >= 0.0 && xi <= eta && eta <= top) {
            return Err(Error::OutOfRange {
                what: "xi",
                value: xi,
                lo: 0.0,
                hi: eta,
            });
        }
        let mut out = vec![ZERO; self.n * self.n];
        self.v.interpolate_into(xi, eta, &mut out);
        Ok(linalg::to_matrix(&out, self.n))
    }

    pub(crate) fn check_point(&self, x: f64, t: f64) -> Result<()> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if !(x >= -slack && x <= t + slack && t <= self.horizon + slack) {
            return Err(Error::OutsideTriangle {
                x,
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// `w(x, t)` by interpolation, written into a flat buffer; no domain check.
    #[inline]
    pub(crate) fn w_into(&self, x: f64, t: f64, out: &mut [C64]) {
        self.v.interpolate_into(t - x, t + x, out);
    }

    /// The transmutation kernel `w(x, t) = v(t - x, t + x)`.
    pub fn kernel_w(&self, x: f64, t: f64) -> Result<CMatrix> {
        self.check_point(x, t)?;
        let mut out = vec![ZERO; self.n * self.n];
        self.w_into(x.max(0.0), t, &mut out);
        Ok(linalg::to_matrix(&out, self.n))
    }

    /// `(w0, w - w0)` with `w0(x, t) = -1/2 int_{(t-x)/2}^{(t+x)/2} q`.
    pub fn split_w(&self, p: &PotentialGrid, x: f64, t: f64) -> Result<(CMatrix, CMatrix)> {
        let w = self.kernel_w(x, t)?;
        let x = x.clamp(0.0, t);
        let w0 = p.integral(0.5 * (t - x), 0.5 * (t + x))? * C64::new(-0.5, 0.0);
        let wt = w - &w0;
        Ok((w0, wt))
    }
}
