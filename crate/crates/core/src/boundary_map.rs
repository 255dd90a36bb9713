//! The decaying matrix solution `K` of `-K'' + q K = 0`, `K(0) = I`, for
//! potentials equal to a positive definite constant `c` beyond a cutoff `X`.

use nalgebra::{DMatrix, DVector};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};
use crate::potential::PotentialGrid;

#[derive(Debug, Clone)]
pub struct WeylSolution {
    cutoff: f64,
    step: f64,
    /// `K(x_k)` and `K'(x_k)`, `x_k = k X / M`
    values: Vec<CMatrix>,
    slopes: Vec<CMatrix>,
    /// `sqrt(c)`
    decay: CMatrix,
    /// eigen-decomposition of `sqrt(c)` for the exponential tail
    decay_vectors: CMatrix,
    decay_rates: Vec<f64>,
}

impl WeylSolution {
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.decay.nrows()
    }

    pub fn decay_matrix(&self) -> &CMatrix {
        &self.decay
    }

    /// `(x_k, K(x_k))` on `[0, X]`.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &CMatrix)> + '_ {
        self.values.iter().enumerate().map(move |(k, m)| (self.x(k), m))
    }

    pub fn slopes(&self) -> &[CMatrix] {
        &self.slopes
    }

    fn x(&self, k: usize) -> f64 {
        if k + 1 == self.values.len() {
            self.cutoff
        } else {
            k as f64 * self.step
        }
    }

    /// `exp(-sqrt(c) d)`.
    fn tail_factor(&self, d: f64) -> CMatrix {
        let diag = DVector::from_iterator(
            self.decay_rates.len(),
            self.decay_rates.iter().map(|r| C64::new((-r * d).exp(), 0.0)),
        );
        &self.decay_vectors * DMatrix::from_diagonal(&diag) * self.decay_vectors.adjoint()
    }

    /// `K(x)`: cubic Hermite interpolation on `[0, X]`, `exp(-sqrt(c)(x - X)) K(X)` beyond.
    pub fn eval(&self, x: f64) -> Result<CMatrix> {
        if !(x >= 0.0) {
            return Err(Error::OutOfRange {
                what: "x",
                value: x,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let last = self.values.len() - 1;
        if x >= self.cutoff {
            return Ok(self.tail_factor(x - self.cutoff) * &self.values[last]);
        }
        let s = x / self.step;
        let k = (s.floor() as usize).min(last - 1);
        let h = self.x(k + 1) - self.x(k);
        let u = (x - self.x(k)) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let c = |v: f64| C64::new(v, 0.0);
        Ok(&self.values[k] * c(h00)
            + &self.slopes[k] * c(h10 * h)
            + &self.values[k + 1] * c(h01)
            + &self.slopes[k + 1] * c(h11 * h))
    }
}

/// Fourth-order Runge-Kutta integration of `K'' = q K` from `X` down to 0,
/// starting from `K(X) = I`, `K'(X) = -sqrt(c)`, then `K <- K K(0)^{-1}`.
///
/// Uses the sampling step of `p` (or the largest divisor of `X` not above it).
pub fn weyl_solution(p: &PotentialGrid, cutoff: f64, c: &CMatrix) -> Result<WeylSolution> {
    let n = p.dim();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: c.nrows(),
        });
    }
    if !(cutoff > 0.0) || cutoff > p.x_max() * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            what: "cutoff",
            value: cutoff,
            lo: 0.0,
            hi: p.x_max(),
        });
    }
    let decay = linalg::hermitian_sqrt(c)?;
    let steps = (cutoff / p.step()).round().max(1.0) as usize;
    let h = cutoff / steps as f64;
    let x_at = |k: usize| if k == steps { cutoff } else { k as f64 * h };
    let q = |x: f64| p.eval(x.clamp(0.0, p.x_max())).expect("clamped into the grid");

    let mut values = vec![CMatrix::zeros(n, n); steps + 1];
    let mut slopes = vec![CMatrix::zeros(n, n); steps + 1];
    values[steps] = CMatrix::identity(n, n);
    slopes[steps] = -&decay;
    for k in (1..=steps).rev() {
        let (x, y, z) = (x_at(k), values[k].clone(), slopes[k].clone());
        let hm = -(x - x_at(k - 1));
        let q0 = q(x);
        let qm = q(x + 0.5 * hm);
        let q1 = q(x + hm);
        let c = |v: f64| C64::new(v, 0.0);
        let k1y = z.clone();
        let k1z = &q0 * &y;
        let k2y = &z + &k1z * c(0.5 * hm);
        let k2z = &qm * (&y + &k1y * c(0.5 * hm));
        let k3y = &z + &k2z * c(0.5 * hm);
        let k3z = &qm * (&y + &k2y * c(0.5 * hm));
        let k4y = &z + &k3z * c(hm);
        let k4z = &q1 * (&y + &k3y * c(hm));
        values[k - 1] = &y + (&k1y + &k2y * c(2.0) + &k3y * c(2.0) + &k4y) * c(hm / 6.0);
        slopes[k - 1] = &z + (&k1z + &k2z * c(2.0) + &k3z * c(2.0) + &k4z) * c(hm / 6.0);
    }

    let k0 = values[0].clone();
    let sv = k0.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularWeylMatching);
    }
    let inv = k0.try_inverse().ok_or(Error::SingularWeylMatching)?;
    for m in values.iter_mut().chain(slopes.iter_mut()) {
        *m = &*m * &inv;
    }
    values[0] = CMatrix::identity(n, n);

    let eig = decay.clone().symmetric_eigen();
    Ok(WeylSolution {
        cutoff,
        step: h,
        values,
        slopes,
        decay,
        decay_vectors: eig.eigenvectors,
        decay_rates: eig.eigenvalues.iter().copied().collect(),
    })
}

/// `x -> -K(x) v`.
#[derive(Debug, Clone)]
pub struct LambdaFunction<'a> {
    solution: &'a WeylSolution,
    vector: CVector,
}

impl LambdaFunction<'_> {
    pub fn eval(&self, x: f64) -> Result<CVector> {
        Ok(-(self.solution.eval(x)? * &self.vector))
    }
}

pub fn lambda_map(solution: &WeylSolution, vector: CVector) -> Result<LambdaFunction<'_>> {
    if vector.len() != solution.dim() {
        return Err(Error::Dimension {
            expected: solution.dim(),
            found: vector.len(),
        });
    }
    Ok(LambdaFunction { solution, vector })
}

/// `(t, x) -> -K(x) f(t)`.
#[derive(Debug, Clone)]
pub struct LiftedControl<'a> {
    solution: &'a WeylSolution,
    control: Control,
}

impl LiftedControl<'_> {
    pub fn eval(&self, t: f64, x: f64) -> Result<CVector> {
        let f = self.control.value(t);
        if f.iter().all(|z| *z == ZERO) {
            return Ok(CVector::zeros(self.solution.dim()));
        }
        Ok(-(self.solution.eval(x)? * f))
    }
}

pub fn lift_control<'a>(solution: &'a WeylSolution, control: &Control) -> Result<LiftedControl<'a>> {
    if control.dim() != solution.dim() {
        return Err(Error::Dimension {
            expected: solution.dim(),
            found: control.dim(),
        });
    }
    Ok(LiftedControl {
        solution,
        control: control.clone(),
    })
}
