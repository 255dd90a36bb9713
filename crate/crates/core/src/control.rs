//! Boundary controls with two continuous derivatives, vanishing near `t = 0`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64, ZERO};

/// Probe count for the vanishing-near-zero check.
const SUPPORT_PROBES: usize = 16;
const SUPPORT_TOL: f64 = 1e-12;

/// `[f, f', f'']` at one instant.
pub type Jet = [CVector; 3];

/// `exp(4/d) exp(-1/(t - a)) exp(-1/(b - t))` on `(a, b)`, `d = b - a`; peak value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub start: f64,
    pub end: f64,
}

impl Bump {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && end > start) {
            return Err(Error::InvalidParameter(format!(
                "bump needs 0 <= start < end, got ({start}, {end})"
            )));
        }
        Ok(Self { start, end })
    }

    /// `(f, f', f'')`.
    pub fn jet(&self, t: f64) -> [f64; 3] {
        if t <= self.start || t >= self.end {
            return [0.0; 3];
        }
        let a = t - self.start;
        let b = self.end - t;
        let phi = 4.0 / (self.end - self.start) - 1.0 / a - 1.0 / b;
        if phi < -700.0 {
            return [0.0; 3];
        }
        let f = phi.exp();
        let d1 = 1.0 / (a * a) - 1.0 / (b * b);
        let d2 = -2.0 / (a * a * a) - 2.0 / (b * b * b);
        [f, d1 * f, (d2 + d1 * d1) * f]
    }
}

/// Uniformly sampled data interpolated by `C^2` piecewise quintic Hermite
/// polynomials; knot derivatives come from five-point difference stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticSpline {
    step: f64,
    /// per knot: `[f, f', f'']`, each of length `n`
    knots: Vec<[Vec<C64>; 3]>,
}

impl QuinticSpline {
    /// `values[k]` is the sample at `t = k * step`; values at or below `clamp_below` are forced to zero.
    pub fn fit(step: f64, values: &[Vec<C64>], clamp_below: f64) -> Result<Self> {
        if values.len() < 6 {
            return Err(Error::InvalidParameter("a sampled control needs at least 6 samples".into()));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("sample step must be positive, got {step}")));
        }
        let n = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: bad.len(),
            });
        }
        let len = values.len();
        let clamped = |k: usize| k as f64 * step <= clamp_below + 1e-12 * step;
        let vals: Vec<Vec<C64>> = values
            .iter()
            .enumerate()
            .map(|(k, v)| if clamped(k) { vec![ZERO; n] } else { v.clone() })
            .collect();
        let mut knots = Vec::with_capacity(len);
        for k in 0..len {
            if clamped(k) {
                knots.push([vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]]);
                continue;
            }
            let first = k.saturating_sub(2).min(len - 5);
            let offsets: Vec<f64> = (first..first + 5).map(|s| s as f64 - k as f64).collect();
            let w = fornberg_weights(0.0, &offsets, 2);
            let mut jet = [vals[k].clone(), vec![ZERO; n], vec![ZERO; n]];
            for (o, s) in (first..first + 5).enumerate() {
                for c in 0..n {
                    jet[1][c] += vals[s][c] * (w[1][o] / step);
                    jet[2][c] += vals[s][c] * (w[2][o] / (step * step));
                }
            }
            knots.push(jet);
        }
        Ok(Self { step, knots })
    }

    pub fn dim(&self) -> usize {
        self.knots[0][0].len()
    }

    pub fn t_max(&self) -> f64 {
        (self.knots.len() - 1) as f64 * self.step
    }

    fn jet_into(&self, t: f64, out: &mut [Vec<C64>; 3], scale: C64) {
        if t <= 0.0 || t > self.t_max() + 1e-12 * self.step {
            return;
        }
        let cells = self.knots.len() - 1;
        let s = (t / self.step).min(cells as f64);
        let k = (s.floor() as usize).min(cells - 1);
        let u = s - k as f64;
        let h = self.step;
        let basis = quintic_hermite(u);
        let (a, b) = (&self.knots[k], &self.knots[k + 1]);
        for c in 0..self.dim() {
            let coef = [a[0][c], a[1][c] * h, a[2][c] * (h * h), b[0][c], b[1][c] * h, b[2][c] * (h * h)];
            for d in 0..3 {
                let mut acc = ZERO;
                for (cf, bs) in coef.iter().zip(basis[d].iter()) {
                    acc += cf * bs;
                }
                out[d][c] += acc * scale / h.powi(d as i32);
            }
        }
    }
}

/// Quintic Hermite basis on `[0, 1]` ordered `(f0, f0', f0'', f1, f1', f1'')`,
/// with first and second `u`-derivatives.
fn quintic_hermite(u: f64) -> [[f64; 6]; 3] {
    let (u2, u3, u4, u5) = (u * u, u * u * u, u.powi(4), u.powi(5));
    [
        [
            1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5,
            u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5,
            0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5,
            10.0 * u3 - 15.0 * u4 + 6.0 * u5,
            -4.0 * u3 + 7.0 * u4 - 3.0 * u5,
            0.5 * u3 - u4 + 0.5 * u5,
        ],
        [
            -30.0 * u2 + 60.0 * u3 - 30.0 * u4,
            1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4,
            u - 4.5 * u2 + 6.0 * u3 - 2.5 * u4,
            30.0 * u2 - 60.0 * u3 + 30.0 * u4,
            -12.0 * u2 + 28.0 * u3 - 15.0 * u4,
            1.5 * u2 - 4.0 * u3 + 2.5 * u4,
        ],
        [
            -60.0 * u + 180.0 * u2 - 120.0 * u3,
            -36.0 * u + 96.0 * u2 - 60.0 * u3,
            1.0 - 9.0 * u + 18.0 * u2 - 10.0 * u3,
            60.0 * u - 180.0 * u2 + 120.0 * u3,
            -24.0 * u + 84.0 * u2 - 60.0 * u3,
            3.0 * u - 12.0 * u2 + 10.0 * u3,
        ],
    ]
}

/// Finite-difference weights for derivatives `0..=order` at `z` on the given
/// abscissae (Fornberg's recursion).
pub fn fornberg_weights(z: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Bump(Bump),
    Spline(QuinticSpline),
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    profile: Profile,
    /// multiplies the scalar bump; ignored (must be 1) for splines
    coeffs: Vec<C64>,
    scale: C64,
    delay: f64,
}

/// A `C^n`-valued boundary control on `[0, T]`, extended by zero to `t < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    horizon: f64,
    dim: usize,
    terms: Vec<Term>,
}

impl Control {
    pub fn zero(horizon: f64, dim: usize) -> Self {
        Self {
            horizon,
            dim,
            terms: Vec::new(),
        }
    }

    /// `bump(t) * coeffs`.
    pub fn bump(horizon: f64, bump: Bump, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("control needs at least one component".into()));
        }
        let dim = coeffs.len();
        let c = Self {
            horizon,
            dim,
            terms: vec![Term {
                profile: Profile::Bump(bump),
                coeffs,
                scale: C64::new(1.0, 0.0),
                delay: 0.0,
            }],
        };
        c.validate()?;
        Ok(c)
    }

    /// Quintic fit of uniform samples `values[k] = f(k T / (len - 1))`, clamped to zero on `[0, support_start]`.
    pub fn from_samples(horizon: f64, values: &[Vec<C64>], support_start: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter("a sampled control needs samples".into()));
        }
        if !(support_start > 0.0) {
            return Err(Error::InvalidParameter(
                "sampled controls need a positive support start".into(),
            ));
        }
        let step = horizon / (values.len() - 1) as f64;
        let spline = QuinticSpline::fit(step, values, support_start)?;
        let dim = spline.dim();
        let c = Self {
            horizon,
            dim,
            terms: vec![Term {
                profile: Profile::Spline(spline),
                coeffs: vec![C64::new(1.0, 0.0); dim],
                scale: C64::new(1.0, 0.0),
                delay: 0.0,
            }],
        };
        c.validate()?;
        Ok(c)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same signal viewed on another horizon.
    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// Largest `eps` with `f = 0` on `[0, eps]`, from the term supports.
    pub fn support_start(&self) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let own = match &term.profile {
                    Profile::Bump(b) => b.start,
                    Profile::Spline(s) => {
                        let first = s
                            .knots
                            .iter()
                            .position(|k| k.iter().any(|v| v.iter().any(|z| *z != ZERO)))
                            .unwrap_or(s.knots.len());
                        first.saturating_sub(1) as f64 * s.step
                    }
                };
                own + term.delay
            })
            .fold(f64::INFINITY, f64::min)
            .min(self.horizon)
    }

    /// Checks that `f, f', f''` vanish on `[0, support_start]`.
    pub fn validate(&self) -> Result<()> {
        let eps = self.support_start();
        if !(eps > 0.0) {
            return Err(Error::ControlSupport { t: 0.0, value: f64::NAN });
        }
        for k in 0..SUPPORT_PROBES {
            let t = eps * k as f64 / (SUPPORT_PROBES - 1) as f64;
            let jet = self.jet(t);
            for d in &jet {
                let value = d.norm();
                if value > SUPPORT_TOL {
                    return Err(Error::ControlSupport { t, value });
                }
            }
        }
        Ok(())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &Control, beta: C64) -> Result<Control> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                scale: t.scale * alpha,
                ..t.clone()
            })
            .collect();
        terms.extend(other.terms.iter().map(|t| Term {
            scale: t.scale * beta,
            ..t.clone()
        }));
        Ok(Control {
            horizon: self.horizon.max(other.horizon),
            dim: self.dim,
            terms,
        })
    }

    /// `f(t - tau)`, zero for `t < tau`.
    pub fn delayed(&self, tau: f64) -> Control {
        Control {
            horizon: self.horizon,
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    delay: t.delay + tau,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Adds `order`-th derivative at `t` times `scale` into `out`.
    pub fn add_into(&self, t: f64, order: usize, scale: C64, out: &mut [C64]) {
        if t <= 0.0 {
            return;
        }
        for term in &self.terms {
            let s = t - term.delay;
            if s <= 0.0 {
                continue;
            }
            match &term.profile {
                Profile::Bump(b) => {
                    let j = b.jet(s)[order];
                    if j == 0.0 {
                        continue;
                    }
                    let f = term.scale * scale * j;
                    for (o, c) in out.iter_mut().zip(&term.coeffs) {
                        *o += c * f;
                    }
                }
                Profile::Spline(sp) => {
                    let mut jet = [vec![ZERO; self.dim], vec![ZERO; self.dim], vec![ZERO; self.dim]];
                    sp.jet_into(s, &mut jet, term.scale * scale);
                    for (o, v) in out.iter_mut().zip(&jet[order]) {
                        *o += v;
                    }
                }
            }
        }
    }

    /// `f^{(order)}(t)`.
    pub fn derivative(&self, t: f64, order: usize) -> CVector {
        let mut out = vec![ZERO; self.dim];
        self.add_into(t, order, C64::new(1.0, 0.0), &mut out);
        CVector::from_vec(out)
    }

    pub fn value(&self, t: f64) -> CVector {
        self.derivative(t, 0)
    }

    pub fn jet(&self, t: f64) -> Jet {
        [self.derivative(t, 0), self.derivative(t, 1), self.derivative(t, 2)]
    }

    /// `f^{(order)}` at `k T / nodes`, `k = 0..=nodes`, flat.
    pub fn sample(&self, nodes: usize, order: usize) -> Vec<C64> {
        self.sample_on(self.horizon, nodes, order)
    }

    /// `f^{(order)}` at `k span / nodes`, `k = 0..=nodes`, flat.
    pub fn sample_on(&self, span: f64, nodes: usize, order: usize) -> Vec<C64> {
        let step = span / nodes as f64;
        let mut out = vec![ZERO; (nodes + 1) * self.dim];
        for k in 0..=nodes {
            let t = if k == nodes { span } else { k as f64 * step };
            self.add_into(t, order, C64::new(1.0, 0.0), &mut out[k * self.dim..(k + 1) * self.dim]);
        }
        out
    }
}

impl Control {
    /// Sum of one to three bumps with random supports inside `(0.05 T, 1.3 T)`
    /// and random complex coefficient vectors in the unit square.
    pub fn random_smooth<R: Rng>(rng: &mut R, horizon: f64, dim: usize) -> Result<Control> {
        let count = rng.random_range(1..=3usize);
        let mut total = Control::zero(horizon, dim);
        for _ in 0..count {
            let start = horizon * rng.random_range(0.05..0.6);
            let end = start + horizon * rng.random_range(0.2..0.7);
            let coeffs: Vec<C64> = (0..dim)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let term = Control::bump(horizon, Bump::new(start, end)?, coeffs)?;
            total = total.combine(C64::new(1.0, 0.0), &term, C64::new(1.0, 0.0))?;
        }
        Ok(total)
    }
}
