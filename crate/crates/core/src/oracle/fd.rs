use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::potential::PotentialGrid;
use crate::propagator::WaveSnapshot;

/// Leapfrog grid for the telegraph equation on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// space intervals over `[0, T]`
    pub nx: usize,
    /// `dt / dx`
    pub cfl: f64,
    pub horizon: f64,
}

impl FdConfig {
    pub fn new(nx: usize, horizon: f64) -> Self {
        Self { nx, cfl: 1.0, horizon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl must lie in (0, 1] for stability, got {}",
                self.cfl
            )));
        }
        if self.nx < 16 {
            return Err(Error::InvalidParameter(format!("need at least 16 space intervals, got {}", self.nx)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// Explicit three-level scheme with `u(0, t) = f(t)` and zero Cauchy data;
/// the domain ends two cells beyond `T`, outside the light cone.
pub fn fd_solve(p: &PotentialGrid, f: &Control, cfg: FdConfig) -> Result<WaveSnapshot> {
    cfg.validate()?;
    let n = p.dim();
    if f.dim() != n {
        return Err(Error::Dimension { expected: n, found: f.dim() });
    }
    let horizon = cfg.horizon;
    let dx = horizon / cfg.nx as f64;
    let cells = cfg.nx + 2;
    if p.x_max() < cells as f64 * dx * (1.0 - 1e-12) {
        return Err(Error::OutOfRange {
            what: "FD domain",
            value: cells as f64 * dx,
            lo: 0.0,
            hi: p.x_max(),
        });
    }
    let steps = (horizon / (cfg.cfl * dx)).ceil() as usize;
    let dt = horizon / steps as f64;
    let r2 = (dt / dx) * (dt / dx);
    let nn = n * n;
    let q: Vec<C64> = (0..=cells)
        .flat_map(|i| {
            let mut b = vec![ZERO; nn];
            p.eval_into(i as f64 * dx, &mut b);
            b
        })
        .collect();

    let len = (cells + 1) * n;
    let mut prev = vec![ZERO; len];
    let mut cur = vec![ZERO; len];
    f.add_into(dt, 0, C64::new(1.0, 0.0), &mut cur[..n]);
    let mut next = vec![ZERO; len];
    for m in 1..steps {
        next[n..cells * n]
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(k, out)| {
                let i = k + 1;
                let (l, c, r) = (&cur[(i - 1) * n..i * n], &cur[i * n..(i + 1) * n], &cur[(i + 1) * n..(i + 2) * n]);
                let old = &prev[i * n..(i + 1) * n];
                for e in 0..n {
                    out[e] = (c[e] * 2.0 - old[e]) + (r[e] - c[e] * 2.0 + l[e]) * r2;
                }
                linalg::mul_vec_acc(out, &q[i * nn..(i + 1) * nn], c, n, C64::new(-dt * dt, 0.0));
            });
        let t = if m + 1 == steps { horizon } else { (m + 1) as f64 * dt };
        next[..n].iter_mut().for_each(|z| *z = ZERO);
        f.add_into(t, 0, C64::new(1.0, 0.0), &mut next[..n]);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }

    let mut snap = WaveSnapshot::zeros(horizon, n, cfg.nx);
    snap.u.copy_from_slice(&cur[..(cfg.nx + 1) * n]);
    let at = |i: usize, e: usize| cur[i * n + e];
    for i in 0..=cfg.nx {
        for e in 0..n {
            let (d1, d2) = if i == 0 {
                (
                    (at(0, e) * -1.5 + at(1, e) * 2.0 - at(2, e) * 0.5) / dx,
                    (at(0, e) * 2.0 - at(1, e) * 5.0 + at(2, e) * 4.0 - at(3, e)) / (dx * dx),
                )
            } else {
                (
                    (at(i + 1, e) - at(i - 1, e)) / (2.0 * dx),
                    (at(i + 1, e) - at(i, e) * 2.0 + at(i - 1, e)) / (dx * dx),
                )
            };
            snap.u_x[i * n + e] = d1;
            snap.u_xx[i * n + e] = d2;
        }
    }
    Ok(snap)
}
