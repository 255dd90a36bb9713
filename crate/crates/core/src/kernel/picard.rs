//! Successive approximations for `v = v0 + V v`.

use rayon::prelude::*;

use super::field::KernelField;
use super::lattice::{Lattice, NodeField};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::potential::PotentialGrid;

pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl PicardOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// `q(k h / 2)` for `k = 0..=m`.
pub(crate) fn sample_half_steps(p: &PotentialGrid, lattice: Lattice) -> Vec<C64> {
    let n = p.dim();
    let nn = n * n;
    let h = lattice.step();
    let mut out = vec![ZERO; (lattice.cells() + 1) * nn];
    for (k, chunk) in out.chunks_mut(nn).enumerate() {
        p.eval_into(0.5 * h * k as f64, chunk);
    }
    out
}

/// `v0(xi_i, eta_j) = -1/2 int_{xi/2}^{eta/2} q`, trapezoid over the half-step samples.
fn explicit_part(q_half: &[C64], lattice: Lattice, n: usize) -> NodeField {
    let nn = n * n;
    let m = lattice.cells();
    let half = 0.5 * lattice.step();
    let mut cum = vec![ZERO; (m + 1) * nn];
    for k in 1..=m {
        for e in 0..nn {
            cum[k * nn + e] =
                cum[(k - 1) * nn + e] + (q_half[(k - 1) * nn + e] + q_half[k * nn + e]) * (0.5 * half);
        }
    }
    let mut v0 = NodeField::zeros(lattice, n);
    for (i, j) in lattice.nodes() {
        if i == j {
            continue;
        }
        let b = v0.block_mut(i, j);
        for e in 0..nn {
            b[e] = (cum[j * nn + e] - cum[i * nn + e]) * -0.5;
        }
    }
    v0
}

/// The starting field `v = v0`, no sweeps performed.
pub fn initial_v0(p: &PotentialGrid, horizon: f64, h: f64) -> Result<KernelField> {
    let lattice = Lattice::for_horizon(horizon, h)?;
    if p.x_max() < horizon * (1.0 - 1e-12) {
        return Err(Error::OutOfRange {
            what: "T",
            value: horizon,
            lo: 0.0,
            hi: p.x_max(),
        });
    }
    let n = p.dim();
    let q_half = sample_half_steps(p, lattice);
    let v0 = explicit_part(&q_half, lattice, n);
    Ok(KernelField {
        horizon,
        lattice,
        n,
        v: v0.clone(),
        v0,
        q_half,
        iterations: 0,
        tail_bound: f64::INFINITY,
        sweep_changes: Vec::new(),
    })
}

impl KernelField {
    /// Rebuilds a field from stored node values; `v0` and the half-step
    /// samples are recomputed from `p`.
    pub fn from_values(
        p: &PotentialGrid,
        horizon: f64,
        values: NodeField,
        iterations: usize,
        tail_bound: f64,
    ) -> Result<KernelField> {
        let mut field = initial_v0(p, horizon, values.lattice().step())?;
        if values.lattice() != field.lattice || values.dim() != field.n {
            return Err(Error::Dimension {
                expected: field.lattice.len() * field.n * field.n,
                found: values.data().len(),
            });
        }
        field.v = values;
        field.iterations = iterations;
        field.tail_bound = tail_bound;
        Ok(field)
    }
}

/// `(V f)(xi, eta) = -1/4 int_0^xi d xi1 int_xi^eta d eta1 q((eta1 - xi1)/2) f(xi1, eta1)`,
/// iterated trapezoid over the lattice.
///
/// With `P(i1, j)` the row prefix of `q f` along `eta` and `C(i, j)` its running
/// sum over rows, the outer trapezoid over `i1 = 0..=i` of `P(i1, j) - P(i1, i)`
/// collapses to four table look-ups per node.
pub(crate) fn apply_v_with(q_half: &[C64], f: &NodeField) -> NodeField {
    let lattice = f.lattice();
    let n = f.dim();
    let nn = n * n;
    let m = lattice.cells();
    let h = lattice.step();

    let mut prefix = NodeField::zeros(lattice, n);
    prefix
        .rows_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            let mut prev = vec![ZERO; nn];
            let mut cur = vec![ZERO; nn];
            linalg::mul_into(&mut prev, &q_half[0..nn], f.block(i, i), n);
            for j in (i + 1)..=m {
                let k = j - i;
                linalg::mul_into(&mut cur, &q_half[k * nn..(k + 1) * nn], f.block(i, j), n);
                let (done, todo) = row.split_at_mut(k * nn);
                let last = &done[(k - 1) * nn..];
                for e in 0..nn {
                    todo[e] = last[e] + (prev[e] + cur[e]) * (0.5 * h);
                }
                std::mem::swap(&mut prev, &mut cur);
            }
        });

    let mut out = NodeField::zeros(lattice, n);
    let mut running = vec![ZERO; (m + 1) * nn];
    let scale = -0.25 * h;
    for i in 0..=m {
        for j in i..=m {
            let p = prefix.block(i, j);
            for e in 0..nn {
                running[j * nn + e] += p[e];
            }
        }
        if i == 0 {
            continue;
        }
        let base: Vec<C64> = (0..nn)
            .map(|e| running[i * nn + e] - prefix.block(0, i)[e] * 0.5)
            .collect();
        for j in (i + 1)..=m {
            let p0 = prefix.block(0, j);
            let pi = prefix.block(i, j);
            let dst = out.block_mut(i, j);
            for e in 0..nn {
                dst[e] = (running[j * nn + e] - p0[e] * 0.5 - pi[e] * 0.5 - base[e]) * scale;
            }
        }
    }
    out
}

/// `V` applied to lattice values, with `q` sampled from `p`.
pub fn apply_v(p: &PotentialGrid, f: &NodeField) -> Result<NodeField> {
    if f.dim() != p.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            found: f.dim(),
        });
    }
    let lattice = f.lattice();
    if p.x_max() < 0.5 * lattice.eta_max() * (1.0 - 1e-12) {
        return Err(Error::OutOfRange {
            what: "eta/2",
            value: 0.5 * lattice.eta_max(),
            lo: 0.0,
            hi: p.x_max(),
        });
    }
    let q_half = sample_half_steps(p, lattice);
    Ok(apply_v_with(&q_half, f))
}

/// `sum_{k > sweeps} S^{k+1} (2T)^k / k!`.
pub fn factorial_tail(s: f64, horizon: f64, sweeps: usize) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let ratio = s * 2.0 * horizon;
    let mut term = s;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= ratio / k as f64;
        if k > sweeps {
            sum += term;
            if term <= f64::MIN_POSITIVE || (term < 1e-18 * sum && k as f64 > ratio) {
                break;
            }
        }
        if k > sweeps + 10_000 {
            break;
        }
    }
    sum
}

/// Solves the kernel integral equation by Picard sweeps `v <- v0 + V v`.
pub fn solve_goursat(p: &PotentialGrid, horizon: f64, h: f64, tol: f64) -> Result<KernelField> {
    solve_goursat_with(p, horizon, h, PicardOptions::new(tol))
}

pub fn solve_goursat_with(
    p: &PotentialGrid,
    horizon: f64,
    h: f64,
    opts: PicardOptions,
) -> Result<KernelField> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    let mut field = initial_v0(p, horizon, h)?;
    let s = p.majorant_s(2.0 * horizon)?;
    let growth = (2.0 * horizon * s).exp_m1();

    loop {
        let mut next = apply_v_with(&field.q_half, &field.v);
        linalg::axpy(next.data_mut(), field.v0.data(), 1.0);
        next.clear_diagonal();
        let change = next.max_distance(&field.v);
        field.v = next;
        field.iterations += 1;
        field.sweep_changes.push(change);
        if !change.is_finite() {
            return Err(Error::NoConvergence {
                iterations: field.iterations,
                last_change: change,
            });
        }

        let a_priori = factorial_tail(s, horizon, field.iterations);
        let a_posteriori = change * growth;
        field.tail_bound = a_priori.min(a_posteriori);
        if change < opts.tol || a_priori < opts.tol {
            return Ok(field);
        }
        if field.iterations >= opts.max_sweeps {
            return Err(Error::NoConvergence {
                iterations: field.iterations,
                last_change: change,
            });
        }
    }
}
