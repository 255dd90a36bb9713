use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Uniform characteristic lattice `xi_i = i h`, `eta_j = j h` on the
/// triangle `0 <= i <= j <= m`, stored row by row (fixed `xi`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    m: usize,
    h: f64,
}

impl Lattice {
    /// Lattice covering `0 <= xi <= eta <= 2 T`; `h` must divide `2 T`.
    pub fn for_horizon(horizon: f64, h: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
        }
        let cells = 2.0 * horizon / h;
        let m = cells.round();
        if m < 1.0 || (cells - m).abs() > 1e-6 * cells.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "step {h} does not divide 2T = {}",
                2.0 * horizon
            )));
        }
        Ok(Self {
            m: m as usize,
            h: 2.0 * horizon / m,
        })
    }

    pub fn with_cells(m: usize, h: f64) -> Self {
        Self { m, h }
    }

    pub fn cells(&self) -> usize {
        self.m
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Largest `eta` on the lattice.
    pub fn eta_max(&self) -> f64 {
        self.m as f64 * self.h
    }

    pub fn len(&self) -> usize {
        (self.m + 1) * (self.m + 2) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn row_offset(&self, i: usize) -> usize {
        i * (2 * self.m + 3 - i) / 2
    }

    #[inline]
    pub fn row_len(&self, i: usize) -> usize {
        self.m + 1 - i
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j <= self.m);
        self.row_offset(i) + (j - i)
    }

    /// All nodes in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.m).flat_map(move |i| (i..=self.m).map(move |j| (i, j)))
    }
}

/// One `n x n` block per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    lattice: Lattice,
    n: usize,
    data: Vec<C64>,
}

impl NodeField {
    pub fn zeros(lattice: Lattice, n: usize) -> Self {
        Self {
            lattice,
            n,
            data: vec![ZERO; lattice.len() * n * n],
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn block(&self, i: usize, j: usize) -> &[C64] {
        let nn = self.n * self.n;
        let k = self.lattice.index(i, j) * nn;
        &self.data[k..k + nn]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut [C64] {
        let nn = self.n * self.n;
        let k = self.lattice.index(i, j) * nn;
        &mut self.data[k..k + nn]
    }

    /// Mutable row slices, row `i` holding the blocks `(i, i..=m)`.
    pub fn rows_mut(&mut self) -> Vec<&mut [C64]> {
        let nn = self.n * self.n;
        let mut rest: &mut [C64] = &mut self.data;
        let mut rows = Vec::with_capacity(self.lattice.m + 1);
        for i in 0..=self.lattice.m {
            let (row, tail) = rest.split_at_mut(self.lattice.row_len(i) * nn);
            rows.push(row);
            rest = tail;
        }
        rows
    }

    /// Largest Frobenius distance between corresponding blocks.
    pub fn max_distance(&self, other: &NodeField) -> f64 {
        let nn = self.n * self.n;
        self.data
            .chunks(nn)
            .zip(other.data.chunks(nn))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Zeroes the diagonal blocks `(i, i)`.
    pub fn clear_diagonal(&mut self) {
        for i in 0..=self.lattice.m {
            self.block_mut(i, i).iter_mut().for_each(|z| *z = ZERO);
        }
    }

    /// Piecewise-linear interpolation at `(xi, eta)`: bilinear on full
    /// cells, barycentric on the half cells along the diagonal.
    pub fn interpolate_into(&self, xi: f64, eta: f64, out: &mut [C64]) {
        let m = self.lattice.m;
        let h = self.lattice.h;
        let si = (xi / h).clamp(0.0, m as f64);
        let sj = (eta / h).clamp(0.0, m as f64);
        let i = (si.floor() as usize).min(m - 1);
        let j = (sj.floor() as usize).min(m - 1);
        let s = si - i as f64;
        let r = sj - j as f64;
        let nn = self.n * self.n;
        if i >= j {
            // diagonal half cell; (xi, eta) lies on or above the diagonal
            let (i, s, r) = (j, s.min(r), r);
            let a = self.block(i, i);
            let b = self.block(i, i + 1);
            let c = self.block(i + 1, i + 1);
            for e in 0..nn {
                out[e] = a[e] * (1.0 - r) + b[e] * (r - s) + c[e] * s;
            }
        } else {
            let a = self.block(i, j);
            let b = self.block(i, j + 1);
            let c = self.block(i + 1, j);
            let d = self.block(i + 1, j + 1);
            for e in 0..nn {
                out[e] = a[e] * ((1.0 - s) * (1.0 - r))
                    + b[e] * ((1.0 - s) * r)
                    + c[e] * (s * (1.0 - r))
                    + d[e] * (s * r);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_dense_and_ordered() {
        let lat = Lattice::with_cells(7, 0.1);
        let mut expect = 0;
        for (i, j) in lat.nodes() {
            assert_eq!(lat.index(i, j), expect);
            expect += 1;
        }
        assert_eq!(expect, lat.len());
    }

    #[test]
    fn step_must_divide_twice_the_horizon() {
        assert!(Lattice::for_horizon(1.0, 0.3).is_err());
        let lat = Lattice::for_horizon(1.0, 0.25).unwrap();
        assert_eq!(lat.cells(), 8);
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        let lat = Lattice::with_cells(10, 0.2);
        let mut f = NodeField::zeros(lat, 1);
        for (i, j) in lat.nodes() {
            f.block_mut(i, j)[0] = C64::new(1.0 + 2.0 * i as f64 * 0.2 - 0.5 * j as f64 * 0.2, 0.0);
        }
        let mut out = [ZERO];
        for &(xi, eta) in &[(0.0, 0.0), (0.13, 0.77), (0.5, 0.51), (1.3, 1.9), (2.0, 2.0), (0.7, 0.7)] {
            f.interpolate_into(xi, eta, &mut out);
            let expect = 1.0 + 2.0 * xi - 0.5 * eta;
            assert!((out[0].re - expect).abs() < 1e-12, "({xi}, {eta})");
        }
    }
}
