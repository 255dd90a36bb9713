use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::propagator::WaveSnapshot;

/// Distances between two snapshots of `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFigures {
    pub l2: f64,
    pub max: f64,
    /// `l2` relative to the L2 norm of the second argument
    pub rel_l2: f64,
}

/// Linear interpolation of `u` at `x`.
fn sample(s: &WaveSnapshot, x: f64, out: &mut [C64]) {
    let n = s.intervals();
    let pos = (x / s.step()).clamp(0.0, n as f64);
    let k = (pos.floor() as usize).min(n - 1);
    let r = pos - k as f64;
    let (a, b) = (s.u_at(k), s.u_at(k + 1));
    for e in 0..s.dim {
        out[e] = if r == 0.0 { a[e] } else { a[e] * (1.0 - r) + b[e] * r };
    }
}

/// Compares `u` on the coarser of the two grids.
pub fn compare(a: &WaveSnapshot, b: &WaveSnapshot) -> Result<ErrorFigures> {
    if (a.horizon - b.horizon).abs() > 1e-12 * a.horizon.max(b.horizon) {
        return Err(Error::HorizonMismatch(a.horizon, b.horizon));
    }
    if a.dim != b.dim {
        return Err(Error::Dimension {
            expected: a.dim,
            found: b.dim,
        });
    }
    let coarse = if a.intervals() <= b.intervals() { a } else { b };
    let nodes = coarse.intervals();
    let step = coarse.step();
    let (mut l2, mut norm, mut max) = (0.0, 0.0, 0.0f64);
    let mut ua = vec![ZERO; a.dim];
    let mut ub = vec![ZERO; a.dim];
    for k in 0..=nodes {
        let x = coarse.x(k);
        sample(a, x, &mut ua);
        sample(b, x, &mut ub);
        let w = if k == 0 || k == nodes { 0.5 * step } else { step };
        let d2: f64 = ua.iter().zip(&ub).map(|(p, q)| (p - q).norm_sqr()).sum();
        let b2: f64 = ub.iter().map(|q| q.norm_sqr()).sum();
        l2 += w * d2;
        norm += w * b2;
        max = max.max(d2.sqrt());
    }
    let l2 = l2.sqrt();
    let norm = norm.sqrt();
    Ok(ErrorFigures {
        l2,
        max,
        rel_l2: if norm > 0.0 { l2 / norm } else if l2 == 0.0 { 0.0 } else { f64::INFINITY },
    })
}
