//! The control operator as a Volterra system `I + A` on uniformly sampled functions of `[0, T]`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{fornberg_weights, Control};
use crate::error::{Error, Result};
use crate::kernel::{kernel_constants_with, KernelDerivatives, KernelField};
use crate::linalg::{self, C64, ZERO};
use crate::potential::PotentialGrid;
use crate::propagator::{self, trapezoid_weight};

/// Default cap on `N` for dense singular value computations.
pub const DENSE_CAP: usize = 1024;

/// Samples of a `C^n`-valued function at `k T / N`, optionally with derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub horizon: f64,
    pub dim: usize,
    pub values: Vec<C64>,
    pub first: Option<Vec<C64>>,
    pub second: Option<Vec<C64>>,
}

impl SampledFunction {
    pub fn new(horizon: f64, dim: usize, values: Vec<C64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 || values.len() / dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "{} samples do not form at least two nodes of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self {
            horizon,
            dim,
            values,
            first: None,
            second: None,
        })
    }

    pub fn zeros(horizon: f64, dim: usize, intervals: usize) -> Self {
        Self {
            horizon,
            dim,
            values: vec![ZERO; (intervals + 1) * dim],
            first: None,
            second: None,
        }
    }

    /// Samples of `f`, `f'`, `f''` at `N + 1` nodes of `[0, T]`.
    pub fn from_control(f: &Control, horizon: f64, intervals: usize) -> Self {
        Self {
            horizon,
            dim: f.dim(),
            values: f.sample_on(horizon, intervals, 0),
            first: Some(f.sample_on(horizon, intervals, 1)),
            second: Some(f.sample_on(horizon, intervals, 2)),
        }
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn at(&self, k: usize) -> &[C64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Trapezoid `L2` norm of the values.
    pub fn l2_norm(&self) -> f64 {
        weighted_l2(&self.values, self.dim, self.step())
    }

    /// First and second derivatives, by five-point differences when not supplied.
    pub fn derivatives(&self) -> (Vec<C64>, Vec<C64>) {
        let first = self.first.clone().unwrap_or_else(|| differentiate(&self.values, self.dim, self.step(), 1));
        let second = self
            .second
            .clone()
            .unwrap_or_else(|| differentiate(&self.values, self.dim, self.step(), 2));
        (first, second)
    }
}

fn weighted_l2(values: &[C64], dim: usize, step: f64) -> f64 {
    let len = values.len() / dim;
    values
        .chunks(dim)
        .enumerate()
        .map(|(k, v)| trapezoid_weight(k, len, step) * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Five-point difference stencils (one-sided near the ends); plain
/// three-point differences when fewer than five nodes exist.
fn differentiate(values: &[C64], dim: usize, step: f64, order: usize) -> Vec<C64> {
    let len = values.len() / dim;
    let width = len.min(5);
    let mut out = vec![ZERO; values.len()];
    for k in 0..len {
        let first = k.saturating_sub(width / 2).min(len - width);
        let offsets: Vec<f64> = (first..first + width).map(|s| s as f64 - k as f64).collect();
        let w = fornberg_weights(0.0, &offsets, order);
        for (o, s) in (first..first + width).enumerate() {
            let c = w[order][o] / step.powi(order as i32);
            for e in 0..dim {
                out[k * dim + e] += values[s * dim + e] * c;
            }
        }
    }
    out
}

/// `g(T - .)` at the sample level; derivatives follow the chain rule.
pub fn reflect(g: &SampledFunction) -> SampledFunction {
    let flip = |v: &[C64], sign: f64| -> Vec<C64> {
        v.chunks(g.dim).rev().flat_map(|c| c.iter().map(move |z| z * sign)).collect()
    };
    SampledFunction {
        horizon: g.horizon,
        dim: g.dim,
        values: flip(&g.values, 1.0),
        first: g.first.as_deref().map(|v| flip(v, -1.0)),
        second: g.second.as_deref().map(|v| flip(v, 1.0)),
    }
}

/// `(int ||g||^2 + int ||g'||^2 + int ||g''||^2)^{1/2}` by the trapezoid rule.
pub fn h2_norm(g: &SampledFunction) -> f64 {
    let (d1, d2) = g.derivatives();
    let step = g.step();
    let parts = [
        weighted_l2(&g.values, g.dim, step),
        weighted_l2(&d1, g.dim, step),
        weighted_l2(&d2, g.dim, step),
    ];
    parts.iter().map(|p| p * p).sum::<f64>().sqrt()
}

/// `I + A` with `A g (x_i) = sum_j omega_ij w(x_i, s_j) g(s_j)`, trapezoid weights on `[x_i, T]`.
#[derive(Debug, Clone)]
pub struct VolterraSystem {
    horizon: f64,
    intervals: usize,
    dim: usize,
    /// row `i` holds blocks for `j = i..=N`
    blocks: Vec<C64>,
}

impl VolterraSystem {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row_offset(&self, i: usize) -> usize {
        let nodes = self.intervals + 1;
        i * nodes - i * i.saturating_sub(1) / 2
    }

    /// Weighted block `K_ij` for `j >= i`; zero below the diagonal.
    pub fn block(&self, i: usize, j: usize) -> Vec<C64> {
        let nn = self.dim * self.dim;
        if j < i {
            return vec![ZERO; nn];
        }
        let at = (self.row_offset(i) + j - i) * nn;
        self.blocks[at..at + nn].to_vec()
    }

    fn row(&self, i: usize) -> &[C64] {
        let nn = self.dim * self.dim;
        let start = self.row_offset(i) * nn;
        &self.blocks[start..start + (self.intervals + 1 - i) * nn]
    }

    fn check(&self, g: &SampledFunction) -> Result<()> {
        if g.dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: g.dim,
            });
        }
        if g.intervals() != self.intervals {
            return Err(Error::Dimension {
                expected: self.intervals + 1,
                found: g.intervals() + 1,
            });
        }
        Ok(())
    }

    /// `A g` without the identity.
    fn apply_a(&self, g: &[C64]) -> Vec<C64> {
        let n = self.dim;
        let nn = n * n;
        let rows: Vec<Vec<C64>> = (0..=self.intervals)
            .into_par_iter()
            .map(|i| {
                let mut out = vec![ZERO; n];
                for (o, b) in self.row(i).chunks(nn).enumerate() {
                    let j = i + o;
                    linalg::mul_vec_acc(&mut out, b, &g[j * n..(j + 1) * n], n, C64::new(1.0, 0.0));
                }
                out
            })
            .collect();
        rows.concat()
    }

    /// `(I + A) g`.
    pub fn apply(&self, g: &SampledFunction) -> Result<SampledFunction> {
        self.check(g)?;
        let mut values = self.apply_a(&g.values);
        for (v, x) in values.iter_mut().zip(&g.values) {
            *v += x;
        }
        Ok(SampledFunction {
            horizon: self.horizon,
            dim: self.dim,
            values,
            first: None,
            second: None,
        })
    }

    /// Solves `(I + A) g = u` by back substitution from `x = T`.
    pub fn solve(&self, u: &SampledFunction) -> Result<SampledFunction> {
        self.check(u)?;
        let n = self.dim;
        let nn = n * n;
        let big = self.intervals;
        let mut g = vec![ZERO; u.values.len()];
        for i in (0..=big).rev() {
            let row = self.row(i);
            let mut rhs = u.at(i).to_vec();
            for (o, b) in row.chunks(nn).enumerate().skip(1) {
                let j = i + o;
                linalg::mul_vec_acc(&mut rhs, b, &g[j * n..(j + 1) * n], n, C64::new(-1.0, 0.0));
            }
            let mut diag = linalg::to_matrix(&row[..nn], n);
            for d in 0..n {
                diag[(d, d)] += C64::new(1.0, 0.0);
            }
            let scale = linalg::op_norm(&diag).max(1.0);
            let lu = diag.lu();
            let upper = lu.u();
            let pivot = (0..n).map(|d| upper[(d, d)].norm()).fold(f64::INFINITY, f64::min);
            if !(pivot > 1e-12 * scale) {
                return Err(Error::SingularBlock { index: i });
            }
            let x = lu
                .solve(&nalgebra::DVector::from_vec(rhs))
                .ok_or(Error::SingularBlock { index: i })?;
            g[i * n..(i + 1) * n].copy_from_slice(x.as_slice());
        }
        Ok(SampledFunction {
            horizon: self.horizon,
            dim: n,
            values: g,
            first: None,
            second: None,
        })
    }

    /// Partial sums of `sum_k (-A)^k u`, stopping when a term drops below
    /// `tol` times the sum or after `max_terms` terms.
    pub fn neumann(&self, u: &SampledFunction, max_terms: usize, tol: f64) -> Result<NeumannSolution> {
        self.check(u)?;
        let step = u.step();
        let mut term = u.values.clone();
        let mut sum = term.clone();
        let mut term_norms = vec![weighted_l2(&term, self.dim, step)];
        let mut tail = term_norms[0];
        for _ in 1..max_terms.max(1) {
            term = self.apply_a(&term).into_iter().map(|z| -z).collect();
            let norm = weighted_l2(&term, self.dim, step);
            tail = norm;
            let total = weighted_l2(&sum, self.dim, step);
            if norm <= tol * total || norm == 0.0 {
                break;
            }
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
            term_norms.push(norm);
        }
        Ok(NeumannSolution {
            solution: SampledFunction {
                horizon: self.horizon,
                dim: self.dim,
                values: sum,
                first: None,
                second: None,
            },
            term_norms,
            tail,
        })
    }

    /// Dense `(I + A)` in the trapezoid-weighted basis `D (I + A) D^{-1}`, `D = diag(sqrt(omega))`.
    fn weighted_dense(&self) -> DMatrix<C64> {
        let n = self.dim;
        let nodes = self.intervals + 1;
        let step = self.horizon / self.intervals as f64;
        let sw: Vec<f64> = (0..nodes).map(|k| trapezoid_weight(k, nodes, step).sqrt()).collect();
        let mut m = DMatrix::<C64>::zeros(nodes * n, nodes * n);
        for i in 0..nodes {
            for (o, b) in self.row(i).chunks(n * n).enumerate() {
                let j = i + o;
                for r in 0..n {
                    for c in 0..n {
                        m[(i * n + r, j * n + c)] = b[r * n + c] * (sw[i] / sw[j]);
                    }
                }
            }
            for d in 0..n {
                m[(i * n + d, i * n + d)] += C64::new(1.0, 0.0);
            }
        }
        m
    }
}

/// Result of the Neumann-series inversion.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub solution: SampledFunction,
    /// `L2` norms of the summed terms
    pub term_norms: Vec<f64>,
    /// norm of the first omitted term
    pub tail: f64,
}

fn check_field_horizon(field: &KernelField, horizon: f64, intervals: usize) -> Result<()> {
    if horizon > field.horizon() * (1.0 + 1e-12) || !(horizon > 0.0) {
        return Err(Error::HorizonMismatch(horizon, field.horizon()));
    }
    if intervals == 0 {
        return Err(Error::InvalidParameter("need at least one interval".into()));
    }
    Ok(())
}

pub fn build_volterra(field: &KernelField, horizon: f64, intervals: usize) -> Result<VolterraSystem> {
    check_field_horizon(field, horizon, intervals)?;
    let n = field.dim();
    let nn = n * n;
    let step = horizon / intervals as f64;
    let x_at = |k: usize| if k == intervals { horizon } else { k as f64 * step };
    let rows: Vec<Vec<C64>> = (0..=intervals)
        .into_par_iter()
        .map(|i| {
            let len = intervals + 1 - i;
            let mut row = vec![ZERO; len * nn];
            for (o, b) in row.chunks_mut(nn).enumerate() {
                let weight = trapezoid_weight(o, len, step);
                if weight == 0.0 {
                    continue;
                }
                field.w_into(x_at(i), x_at(i + o), b);
                b.iter_mut().for_each(|z| *z *= weight);
            }
            row
        })
        .collect();
    Ok(VolterraSystem {
        horizon,
        intervals,
        dim: n,
        blocks: rows.concat(),
    })
}

/// `u^f(., T)` at `N + 1` nodes; the same numbers as the `u` column of a snapshot.
pub fn apply_w(field: &KernelField, f: &Control, horizon: f64, intervals: usize) -> Result<SampledFunction> {
    let values = propagator::wave_values(field, f, horizon, intervals)?;
    SampledFunction::new(horizon, field.dim(), values)
}

/// Recovers the control from a snapshot `u = W f`: solves `(I + A) g = u`, returns `f = g(T - .)`.
pub fn invert_w(sys: &VolterraSystem, u: &SampledFunction) -> Result<SampledFunction> {
    Ok(reflect(&sys.solve(u)?))
}

/// Extreme singular values of the weighted discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond: f64,
}

pub fn condition_estimate(sys: &VolterraSystem) -> Result<ConditionEstimate> {
    condition_estimate_capped(sys, DENSE_CAP)
}

pub fn condition_estimate_capped(sys: &VolterraSystem, cap: usize) -> Result<ConditionEstimate> {
    if sys.intervals > cap {
        return Err(Error::DenseCap { n: sys.intervals, cap });
    }
    let sv = sys.weighted_dense().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConditionEstimate {
        sigma_min,
        sigma_max,
        cond: sigma_max / sigma_min,
    })
}

/// Discrete `H2` operator norm of `(I + A)^{-1}`: the largest singular value of
/// `L^* (I + A)^{-1} L^{-*}` where `L L^*` is the Gram matrix of the discrete `H2` inner product.
pub fn inverse_h2_norm(sys: &VolterraSystem) -> Result<f64> {
    if sys.intervals > DENSE_CAP {
        return Err(Error::DenseCap {
            n: sys.intervals,
            cap: DENSE_CAP,
        });
    }
    let n = sys.dim;
    let nodes = sys.intervals + 1;
    let size = nodes * n;
    let step = sys.horizon / sys.intervals as f64;
    let weights: Vec<f64> = (0..nodes).map(|k| trapezoid_weight(k, nodes, step)).collect();
    let diff = |order: usize| {
        let mut d = DMatrix::<f64>::zeros(nodes, nodes);
        for k in 0..nodes {
            let mut e = vec![ZERO; nodes];
            e[k] = C64::new(1.0, 0.0);
            let col = differentiate(&e, 1, step, order);
            for r in 0..nodes {
                d[(r, k)] = col[r].re;
            }
        }
        d
    };
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(weights));
    let (d1, d2) = (diff(1), diff(2));
    let gram = &w + d1.transpose() * &w * &d1 + d2.transpose() * &w * &d2;
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    // scalar Gram acts on each component independently
    let mut big_l = DMatrix::<C64>::zeros(size, size);
    for r in 0..nodes {
        for c in 0..=r {
            for e in 0..n {
                big_l[(r * n + e, c * n + e)] = C64::new(l[(r, c)], 0.0);
            }
        }
    }
    let mut dense = DMatrix::<C64>::zeros(size, size);
    for i in 0..nodes {
        for (o, b) in sys.row(i).chunks(n * n).enumerate() {
            let j = i + o;
            for r in 0..n {
                for c in 0..n {
                    dense[(i * n + r, j * n + c)] = b[r * n + c];
                }
            }
        }
        for d in 0..n {
            dense[(i * n + d, i * n + d)] += C64::new(1.0, 0.0);
        }
    }
    // sigma_max(L^* M^{-1} L^{-*}) = 1 / sigma_min(L^* M L^{-*})
    let lh = big_l.adjoint();
    let lh_inv = lh.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let sandwiched = &lh * dense * lh_inv;
    let sigma_min = sandwiched.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(1.0 / sigma_min)
}

/// The certified bounds of `A` and the worst ratios seen on random trial controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevReport {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub bounds: SobolevBounds,
    /// `max ||A f||_C / ||f||_L2`, `max ||(A f)'||_C / ||f||_C`, `max ||(A f)''||_L2 / ||f||_C1`
    pub ratios: SobolevBounds,
    /// `max ||A f||_H2 / ||f||_H2`
    pub empirical_ratio: f64,
    /// `||A f||_H2 <= composite ||f||_C1`, assembled from i-iii
    pub composite: f64,
    /// `||f||_C1 <= embedding ||f||_H2`
    pub embedding: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond: f64,
    pub seed: u64,
    pub trials: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevBounds {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

impl SobolevReport {
    /// Every empirical ratio lies within its analytic bound (with round-off slack).
    pub fn holds(&self) -> bool {
        let ok = |r: f64, b: f64| r <= b * (1.0 + 1e-9) + 1e-12;
        ok(self.ratios.i, self.bounds.i)
            && ok(self.ratios.ii, self.bounds.ii)
            && ok(self.ratios.iii, self.bounds.iii)
            && ok(self.empirical_ratio, self.composite * self.embedding)
    }
}

/// Kernels of `A`, `(A f)'` and `(A f)''` on the sample grid.
struct DerivativeOperator {
    intervals: usize,
    n: usize,
    step: f64,
    /// `w`, `w_x`, `wt_xx` and `(q((s+x)/2) - q((s-x)/2))/4`, unweighted, row `i` for `j >= i`
    rows: Vec<[Vec<C64>; 4]>,
    /// `1/2 int_0^x q`, `q(x) - wt_x(x, x)`, `(q((T-x)/2) - q((T+x)/2))/4` per node
    local: Vec<[Vec<C64>; 3]>,
}

impl DerivativeOperator {
    fn build(p: &PotentialGrid, derivs: &KernelDerivatives, horizon: f64, intervals: usize) -> Result<Self> {
        let field = derivs.field();
        let n = field.dim();
        let nn = n * n;
        let step = horizon / intervals as f64;
        let x_at = |k: usize| if k == intervals { horizon } else { k as f64 * step };
        let rows: Vec<[Vec<C64>; 4]> = (0..=intervals)
            .into_par_iter()
            .map(|i| {
                let x = x_at(i);
                let len = intervals + 1 - i;
                let mut k = [vec![ZERO; len * nn], vec![ZERO; len * nn], vec![ZERO; len * nn], vec![ZERO; len * nn]];
                let mut qa = vec![ZERO; nn];
                let mut qb = vec![ZERO; nn];
                for o in 0..len {
                    let s = x_at(i + o);
                    let r = o * nn..(o + 1) * nn;
                    field.w_into(x, s, &mut k[0][r.clone()]);
                    derivs.wtilde_x_into(x, s, &mut k[1][r.clone()]);
                    derivs.wtilde_xx_into(p, x, s, &mut k[2][r.clone()]);
                    p.eval_into(0.5 * (s + x), &mut qa);
                    p.eval_into(0.5 * (s - x), &mut qb);
                    for e in 0..nn {
                        k[1][o * nn + e] -= (qa[e] + qb[e]) * 0.25;
                        k[3][o * nn + e] = (qa[e] - qb[e]) * 0.25;
                    }
                }
                k
            })
            .collect();
        let mut local = Vec::with_capacity(intervals + 1);
        for i in 0..=intervals {
            let x = x_at(i);
            let half = linalg::to_flat(&(p.integral(0.0, x)? * C64::new(0.5, 0.0)));
            let mut q = vec![ZERO; nn];
            p.eval_into(x, &mut q);
            let mut wx = vec![ZERO; nn];
            derivs.wtilde_x_into(x, x, &mut wx);
            let mut qa = vec![ZERO; nn];
            let mut qb = vec![ZERO; nn];
            p.eval_into(0.5 * (horizon - x), &mut qa);
            p.eval_into(0.5 * (horizon + x), &mut qb);
            let coef: Vec<C64> = q.iter().zip(&wx).map(|(a, b)| a - b).collect();
            let end: Vec<C64> = qa.iter().zip(&qb).map(|(a, b)| (a - b) * 0.25).collect();
            local.push([half, coef, end]);
        }
        Ok(Self {
            intervals,
            n,
            step,
            rows,
            local,
        })
    }

    /// `(A f, (A f)', (A f)'')` from samples of `f` and `f'`.
    fn apply(&self, f: &[C64], df: &[C64]) -> [Vec<C64>; 3] {
        let n = self.n;
        let nn = n * n;
        let big = self.intervals;
        let one = C64::new(1.0, 0.0);
        let mut out = [vec![ZERO; f.len()], vec![ZERO; f.len()], vec![ZERO; f.len()]];
        let f_end = &f[big * n..];
        for i in 0..=big {
            let len = big + 1 - i;
            let (mut a0, mut a1, mut a2) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
            let k = &self.rows[i];
            for o in 0..len {
                let w = C64::new(trapezoid_weight(o, len, self.step), 0.0);
                if w == ZERO {
                    continue;
                }
                let j = i + o;
                let (fj, dj) = (&f[j * n..(j + 1) * n], &df[j * n..(j + 1) * n]);
                let r = o * nn..(o + 1) * nn;
                linalg::mul_vec_acc(&mut a0, &k[0][r.clone()], fj, n, w);
                linalg::mul_vec_acc(&mut a1, &k[1][r.clone()], fj, n, w);
                linalg::mul_vec_acc(&mut a2, &k[2][r.clone()], fj, n, w);
                linalg::mul_vec_acc(&mut a2, &k[3][r], dj, n, w);
            }
            let [half, coef, end] = &self.local[i];
            let (fi, di) = (&f[i * n..(i + 1) * n], &df[i * n..(i + 1) * n]);
            linalg::mul_vec_acc(&mut a1, half, fi, n, one);
            linalg::mul_vec_acc(&mut a2, coef, fi, n, one);
            linalg::mul_vec_acc(&mut a2, half, di, n, one);
            linalg::mul_vec_acc(&mut a2, end, f_end, n, one);
            out[0][i * n..(i + 1) * n].copy_from_slice(&a0);
            out[1][i * n..(i + 1) * n].copy_from_slice(&a1);
            out[2][i * n..(i + 1) * n].copy_from_slice(&a2);
        }
        out
    }
}

fn sup_norm(values: &[C64], dim: usize) -> f64 {
    values
        .chunks(dim)
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `(A f, (A f)', (A f)'')` on `N + 1` nodes for a smooth control `f` on `[0, T]`.
pub fn apply_a_with_derivatives(
    p: &PotentialGrid,
    derivs: &KernelDerivatives,
    f: &Control,
    horizon: f64,
    intervals: usize,
) -> Result<[SampledFunction; 3]> {
    check_field_horizon(derivs.field(), horizon, intervals)?;
    let op = DerivativeOperator::build(p, derivs, horizon, intervals)?;
    let [a, b, c] = op.apply(&f.sample_on(horizon, intervals, 0), &f.sample_on(horizon, intervals, 1));
    let n = f.dim();
    Ok([
        SampledFunction::new(horizon, n, a)?,
        SampledFunction::new(horizon, n, b)?,
        SampledFunction::new(horizon, n, c)?,
    ])
}

/// Options for [`certify_h2_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// sample intervals on `[0, T]`; `None` uses one node per kernel step
    pub intervals: Option<usize>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            intervals: None,
        }
    }
}

pub fn certify_h2_bound(p: &PotentialGrid, field: &KernelField, horizon: f64, opts: CertifyOptions) -> Result<SobolevReport> {
    let derivs = KernelDerivatives::compute(p, field)?;
    certify_h2_bound_with(p, &derivs, horizon, opts)
}

pub fn certify_h2_bound_with(
    p: &PotentialGrid,
    derivs: &KernelDerivatives,
    horizon: f64,
    opts: CertifyOptions,
) -> Result<SobolevReport> {
    let field = derivs.field();
    if (horizon - field.horizon()).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::HorizonMismatch(horizon, field.horizon()));
    }
    let intervals = opts
        .intervals
        .unwrap_or_else(|| (field.lattice().cells() / 2).clamp(16, DENSE_CAP));
    let n = field.dim();
    let (a1, a2) = p.norm_constants(horizon)?;
    let kc = kernel_constants_with(p, derivs)?;
    let t = horizon;
    let bounds = SobolevBounds {
        i: (a1 + kc.b1) * t.sqrt(),
        ii: 3.0 * a1 + kc.b2 * t,
        iii: 4.0 * a1 + a2 + (a1 + kc.b2) * t.sqrt() + kc.b3.sqrt(),
    };
    let composite = (((a1 + kc.b1) * t.powf(1.5)).powi(2) + (t.sqrt() * bounds.ii).powi(2) + bounds.iii.powi(2)).sqrt();
    let embedding = (1.0 / t.tanh()).sqrt();

    let op = DerivativeOperator::build(p, derivs, horizon, intervals)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let controls: Vec<Control> = (0..opts.trials)
        .map(|_| Control::random_smooth(&mut rng, horizon, n))
        .collect::<Result<_>>()?;
    let step = horizon / intervals as f64;
    let ratios: Vec<[f64; 4]> = controls
        .par_iter()
        .map(|f| {
            let g = SampledFunction::from_control(f, horizon, intervals);
            let df = g.first.as_deref().expect("control samples carry derivatives");
            let [af, daf, ddaf] = op.apply(&g.values, df);
            let f_c = sup_norm(&g.values, n);
            let f_c1 = f_c.max(sup_norm(df, n));
            let r_i = sup_norm(&af, n) / weighted_l2(&g.values, n, step);
            let r_ii = sup_norm(&daf, n) / f_c;
            let r_iii = weighted_l2(&ddaf, n, step) / f_c1;
            let af_h2 = [&af, &daf, &ddaf]
                .iter()
                .map(|v| weighted_l2(v, n, step).powi(2))
                .sum::<f64>()
                .sqrt();
            [r_i, r_ii, r_iii, af_h2 / h2_norm(&g)]
        })
        .collect();
    let worst = |k: usize| ratios.iter().map(|r| r[k]).fold(0.0, f64::max);

    let sys = build_volterra(field, horizon, intervals)?;
    let ce = condition_estimate(&sys)?;
    Ok(SobolevReport {
        a1,
        a2,
        b1: kc.b1,
        b2: kc.b2,
        b3: kc.b3,
        b4: kc.b4,
        bounds,
        ratios: SobolevBounds {
            i: worst(0),
            ii: worst(1),
            iii: worst(2),
        },
        empirical_ratio: worst(3),
        composite,
        embedding,
        sigma_min: ce.sigma_min,
        sigma_max: ce.sigma_max,
        cond: ce.cond,
        seed: opts.seed,
        trials: opts.trials,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Bump;
    use crate::kernel::solve_goursat;
    use crate::potential::{PotentialSpec, Preset};
    use crate::propagator::propagate;

    fn real(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn scalar(c: f64, x_max: f64) -> PotentialGrid {
        PotentialGrid::build(&PotentialSpec::Constant {
            value: linalg::to_matrix(&[real(c)], 1),
            x_max,
            step: 1e-3,
        })
        .unwrap()
    }

    fn preset(preset: Preset, x_max: f64) -> PotentialGrid {
        PotentialGrid::build(&PotentialSpec::Preset {
            preset,
            x_max,
            step: 1e-3,
        })
        .unwrap()
    }

    fn bump(horizon: f64, coeffs: Vec<C64>) -> Control {
        Control::bump(horizon, Bump::new(0.15 * horizon, 0.9 * horizon).unwrap(), coeffs).unwrap()
    }

    fn ramp(intervals: usize, values: impl Fn(f64) -> f64) -> SampledFunction {
        let v = (0..=intervals).map(|k| real(values(k as f64 / intervals as f64))).collect();
        SampledFunction::new(1.0, 1, v).unwrap()
    }

    #[test]
    fn reflection_examples() {
        let c = ramp(10, |_| 2.5);
        assert_eq!(reflect(&c), c);
        let g = ramp(10, |t| t);
        let r = reflect(&g);
        for k in 0..=10 {
            assert!((r.at(k)[0].re - (1.0 - k as f64 / 10.0)).abs() < 1e-15);
        }
        assert_eq!(reflect(&r), g);
    }

    #[test]
    fn h2_norm_of_a_parabola() {
        let exact = (83.0f64 / 15.0).sqrt();
        let mut g = ramp(2000, |t| t * t);
        assert!((h2_norm(&g) - exact).abs() < 1e-6);
        g.first = Some((0..=2000).map(|k| real(2.0 * k as f64 / 2000.0)).collect());
        g.second = Some(vec![real(2.0); 2001]);
        assert!((h2_norm(&g) - exact).abs() < 1e-6);
        assert_eq!(h2_norm(&ramp(10, |_| 0.0)), 0.0);
    }

    #[test]
    fn h2_norm_is_unitarily_invariant() {
        let (a, b) = (0.6, 0.8);
        let values: Vec<C64> = (0..=50)
            .flat_map(|k| {
                let t = k as f64 / 50.0;
                [real(t.sin()), C64::new(0.0, t * t)]
            })
            .collect();
        let rotated: Vec<C64> = values
            .chunks(2)
            .flat_map(|v| [v[0] * a - v[1] * b, v[0] * b + v[1] * a])
            .collect();
        let g = SampledFunction::new(1.0, 2, values).unwrap();
        let r = SampledFunction::new(1.0, 2, rotated).unwrap();
        assert!((h2_norm(&g) - h2_norm(&r)).abs() < 1e-12);
    }

    #[test]
    fn zero_potential_is_pure_reflection() {
        let p = scalar(0.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
        let sys = build_volterra(&field, 1.0, 64).unwrap();
        assert!(sys.blocks.iter().all(|z| *z == ZERO));
        let f = bump(1.0, vec![real(1.0)]);
        let w = apply_w(&field, &f, 1.0, 64).unwrap();
        let samples = SampledFunction::from_control(&f, 1.0, 64);
        assert_eq!(w.values, reflect(&samples).values);
        let g = sys.solve(&w).unwrap();
        assert_eq!(g.values, w.values);
        let ce = condition_estimate(&sys).unwrap();
        assert!((ce.cond - 1.0).abs() < 1e-14);
        let zero = apply_w(&field, &Control::zero(1.0, 1), 1.0, 64).unwrap();
        assert!(zero.values.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn apply_w_is_reflection_then_volterra() {
        let p = scalar(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.01, 1e-10).unwrap();
        let f = bump(1.0, vec![real(1.0)]);
        let sys = build_volterra(&field, 1.0, 200).unwrap();
        let via_sys = sys.apply(&reflect(&SampledFunction::from_control(&f, 1.0, 200))).unwrap();
        let direct = apply_w(&field, &f, 1.0, 200).unwrap();
        let snap = propagate(&p, &field, &f, 1.0, 200).unwrap();
        assert_eq!(direct.values, snap.u);
        for (a, b) in via_sys.values.iter().zip(&direct.values) {
            assert!((a - b).norm() < 1e-12);
        }
        for i in 1..=200 {
            assert!(sys.block(i, i - 1).iter().all(|z| *z == ZERO));
        }
    }

    #[test]
    fn round_trip_recovers_the_control() {
        let p = preset(Preset::Coupled, 1.5);
        let field = solve_goursat(&p, 1.5, 0.01, 1e-11).unwrap();
        let f = bump(1.5, vec![real(1.0), C64::new(0.3, -0.7)]);
        let sys = build_volterra(&field, 1.5, 150).unwrap();
        let u = apply_w(&field, &f, 1.5, 150).unwrap();
        let g = invert_w(&sys, &u).unwrap();
        let samples = SampledFunction::from_control(&f, 1.5, 150);
        let diff: Vec<C64> = g.values.iter().zip(&samples.values).map(|(a, b)| a - b).collect();
        let err = weighted_l2(&diff, 2, g.step()) / samples.l2_norm();
        assert!(err < 1e-12, "relative error {err}");
    }

    #[test]
    fn neumann_series_matches_substitution() {
        let p = scalar(4.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.01, 1e-11).unwrap();
        let sys = build_volterra(&field, 1.0, 100).unwrap();
        let u = apply_w(&field, &bump(1.0, vec![real(1.0)]), 1.0, 100).unwrap();
        let exact = sys.solve(&u).unwrap();
        let mut prev = f64::INFINITY;
        for terms in [2, 4, 8, 16] {
            let ns = sys.neumann(&u, terms, 0.0).unwrap();
            let diff: Vec<C64> = ns.solution.values.iter().zip(&exact.values).map(|(a, b)| a - b).collect();
            let err = weighted_l2(&diff, 1, u.step());
            assert!(err < prev, "terms={terms}: {err} !< {prev}");
            prev = err;
        }
        assert!(prev < 1e-10);
        let ns = sys.neumann(&u, 100, 1e-14).unwrap();
        assert!(ns.term_norms.windows(2).skip(2).all(|w| w[1] < w[0]));
        assert!(ns.tail < 1e-13 * ns.solution.l2_norm());
    }

    #[test]
    fn derivative_formulas_match_differences() {
        for (p, coeffs) in [
            (preset(Preset::Smooth, 1.0), vec![real(1.0)]),
            (preset(Preset::Coupled, 1.0), vec![real(1.0), C64::new(0.0, 1.0)]),
        ] {
            let field = solve_goursat(&p, 1.0, 1.0 / 400.0, 1e-11).unwrap();
            let derivs = KernelDerivatives::compute(&p, &field).unwrap();
            // support reaching past T exercises the f(T) term
            let f = Control::bump(1.0, Bump::new(0.2, 1.6).unwrap(), coeffs).unwrap();
            let big = 400;
            let [a, da, dda] = apply_a_with_derivatives(&p, &derivs, &f, 1.0, big).unwrap();
            let n = a.dim;
            let h = a.step();
            let mut worst: [f64; 2] = [0.0; 2];
            for k in 2..big - 1 {
                for e in 0..n {
                    let fd1 = (a.values[(k + 1) * n + e] - a.values[(k - 1) * n + e]) / (2.0 * h);
                    let fd2 = (da.values[(k + 1) * n + e] - da.values[(k - 1) * n + e]) / (2.0 * h);
                    worst[0] = worst[0].max((fd1 - da.values[k * n + e]).norm());
                    worst[1] = worst[1].max((fd2 - dda.values[k * n + e]).norm());
                }
            }
            assert!(worst[0] < 1e-4 && worst[1] < 2e-3, "{worst:?}");
        }
    }

    #[test]
    fn certification_for_zero_potential_is_trivial() {
        let p = scalar(0.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
        let r = certify_h2_bound(&p, &field, 1.0, CertifyOptions { trials: 10, ..Default::default() }).unwrap();
        assert_eq!((r.bounds.i, r.bounds.ii, r.bounds.iii), (0.0, 0.0, 0.0));
        assert_eq!(r.empirical_ratio, 0.0);
        assert!((r.cond - 1.0).abs() < 1e-14);
        assert!(r.holds());
    }

    #[test]
    fn certification_for_unit_potential() {
        let p = scalar(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.01, 1e-10).unwrap();
        let r = certify_h2_bound(&p, &field, 1.0, CertifyOptions { trials: 100, seed: 7, intervals: Some(100) }).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.ratios.i > 0.0 && r.ratios.i <= r.bounds.i);
        assert!(r.ratios.iii <= r.bounds.iii);
        assert_eq!(r.seed, 7);
    }

    #[test]
    fn condition_is_stable_under_refinement() {
        let p = scalar(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.005, 1e-10).unwrap();
        let c1 = condition_estimate(&build_volterra(&field, 1.0, 100).unwrap()).unwrap().cond;
        let c2 = condition_estimate(&build_volterra(&field, 1.0, 200).unwrap()).unwrap().cond;
        assert!(c1.is_finite() && (c1 / c2 - 1.0).abs() < 0.01);
        let sys = build_volterra(&field, 1.0, 1100).unwrap();
        assert!(matches!(condition_estimate(&sys), Err(Error::DenseCap { .. })));
    }

    #[test]
    fn solve_checks_lengths() {
        let p = scalar(1.0, 1.0);
        let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
        let sys = build_volterra(&field, 1.0, 20).unwrap();
        assert!(sys.solve(&SampledFunction::zeros(1.0, 1, 19)).is_err());
        assert!(build_volterra(&field, 1.5, 20).is_err());
    }
}
