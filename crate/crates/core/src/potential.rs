//! Sampled Hermitian matrix potentials on a uniform grid.
//!
//! Samples are linearly interpolated between nodes, all antiderivatives are
//! composite trapezoid sums, and matrix norms are operator 2-norms.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};

/// Input asymmetry above this (relative to `max(1, |q|)`) is rejected.
pub const HERMITIAN_INPUT_TOL: f64 = 1e-8;

/// Named analytic potentials used by the command line and the test-suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `q(x) = 1 + sin(2x)/2`, scalar.
    Smooth,
    /// `q(x) = x`, scalar.
    Linear,
    /// A non-commuting smooth `2 x 2` Hermitian potential.
    Coupled,
    /// `q(x) = 1 + 2 sin^2(pi x)` on `[0, 1]` and `1` beyond; scalar.
    Well,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "smooth" => Some(Preset::Smooth),
            "linear" => Some(Preset::Linear),
            "coupled" => Some(Preset::Coupled),
            "well" => Some(Preset::Well),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Smooth => "smooth",
            Preset::Linear => "linear",
            Preset::Coupled => "coupled",
            Preset::Well => "well",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Preset::Coupled => 2,
            _ => 1,
        }
    }

    pub fn eval(self, x: f64) -> CMatrix {
        let r = |v: f64| C64::new(v, 0.0);
        match self {
            Preset::Smooth => CMatrix::from_element(1, 1, r(1.0 + 0.5 * (2.0 * x).sin())),
            Preset::Linear => CMatrix::from_element(1, 1, r(x)),
            Preset::Coupled => {
                let off = C64::from_polar(0.4 * (1.0 + 0.5 * x), x);
                CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        r(1.0 + 0.5 * x.cos()),
                        off,
                        off.conj(),
                        r(2.0 - 0.5 * x.sin()),
                    ],
                )
            }
            Preset::Well => {
                let bump = if x < 1.0 {
                    2.0 * (std::f64::consts::PI * x).sin().powi(2)
                } else {
                    0.0
                };
                CMatrix::from_element(1, 1, r(1.0 + bump))
            }
        }
    }
}

/// How to build a [`PotentialGrid`].
#[derive(Debug, Clone)]
pub enum PotentialSpec {
    Zero { n: usize, x_max: f64, step: f64 },
    Constant { value: CMatrix, x_max: f64, step: f64 },
    /// Values at the listed abscissae; the abscissae must start at 0 and be uniform.
    Sampled { xs: Vec<f64>, values: Vec<CMatrix> },
    Preset { preset: Preset, x_max: f64, step: f64 },
}

/// A Hermitian matrix potential sampled on `[0, x_max]`.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    n: usize,
    x_max: f64,
    step: f64,
    samples: Vec<C64>,
    norms: Vec<f64>,
    cum_integral: Vec<C64>,
    cum_norm_integral: Vec<f64>,
    cum_norm_sq_integral: Vec<f64>,
}

fn uniform_nodes(x_max: f64, step: f64) -> Result<(usize, f64)> {
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidParameter(format!("x_max must be positive, got {x_max}")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let cells = ((x_max / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((cells, x_max / cells as f64))
}

impl PotentialGrid {
    pub fn build(spec: &PotentialSpec) -> Result<Self> {
        match spec {
            PotentialSpec::Zero { n, x_max, step } => {
                let n = *n;
                Self::from_fn(n, *x_max, *step, |_| CMatrix::zeros(n, n))
            }
            PotentialSpec::Constant { value, x_max, step } => {
                if value.nrows() != value.ncols() {
                    return Err(Error::Dimension {
                        expected: value.nrows(),
                        found: value.ncols(),
                    });
                }
                Self::from_fn(value.nrows(), *x_max, *step, |_| value.clone())
            }
            PotentialSpec::Preset { preset, x_max, step } => {
                Self::from_fn(preset.dimension(), *x_max, *step, |x| preset.eval(x))
            }
            PotentialSpec::Sampled { xs, values } => Self::from_samples(xs, values),
        }
    }

    /// Samples `f` on the uniform grid over `[0, x_max]` with spacing at most `step`.
    pub fn from_fn<F: Fn(f64) -> CMatrix>(n: usize, x_max: f64, step: f64, f: F) -> Result<Self> {
        let (cells, h) = uniform_nodes(x_max, step)?;
        let values: Vec<CMatrix> = (0..=cells).map(|k| f(k as f64 * h)).collect();
        Self::assemble(n, x_max, h, &values)
    }

    pub fn from_samples(xs: &[f64], values: &[CMatrix]) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::Dimension {
                expected: xs.len(),
                found: values.len(),
            });
        }
        if xs.len() < 2 {
            return Err(Error::InvalidParameter("at least two samples are required".into()));
        }
        if xs[0].abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sample grid must start at x = 0, got {}",
                xs[0]
            )));
        }
        let x_max = xs[xs.len() - 1];
        let h = x_max / (xs.len() - 1) as f64;
        for (k, &x) in xs.iter().enumerate() {
            if (x - k as f64 * h).abs() > 1e-9 * x_max.max(1.0) {
                return Err(Error::NonUniformGrid { x });
            }
        }
        Self::assemble(values[0].nrows(), x_max, h, values)
    }

    fn assemble(n: usize, x_max: f64, h: f64, values: &[CMatrix]) -> Result<Self> {
        let nn = n * n;
        let mut samples = Vec::with_capacity(values.len() * nn);
        let mut norms = Vec::with_capacity(values.len());
        for (k, m) in values.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: m.nrows().max(m.ncols()),
                });
            }
            let scale = linalg::op_norm(m).max(1.0);
            let defect = linalg::hermitian_defect(m);
            if defect > HERMITIAN_INPUT_TOL * scale {
                return Err(Error::NotHermitian {
                    x: k as f64 * h,
                    asymmetry: defect,
                });
            }
            let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
            norms.push(linalg::op_norm(&herm));
            samples.extend(linalg::to_flat(&herm));
        }

        let nodes = values.len();
        let mut cum_integral = vec![ZERO; nodes * nn];
        let mut cum_norm_integral = vec![0.0; nodes];
        let mut cum_norm_sq_integral = vec![0.0; nodes];
        for k in 1..nodes {
            for e in 0..nn {
                cum_integral[k * nn + e] = cum_integral[(k - 1) * nn + e]
                    + (samples[(k - 1) * nn + e] + samples[k * nn + e]) * (0.5 * h);
            }
            cum_norm_integral[k] = cum_norm_integral[k - 1] + 0.5 * h * (norms[k - 1] + norms[k]);
            cum_norm_sq_integral[k] = cum_norm_sq_integral[k - 1]
                + 0.5 * h * (norms[k - 1].powi(2) + norms[k].powi(2));
        }

        Ok(Self {
            n,
            x_max,
            step: h,
            samples,
            norms,
            cum_integral,
            cum_norm_integral,
            cum_norm_sq_integral,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        self.norms.len()
    }

    pub fn sample(&self, k: usize) -> CMatrix {
        linalg::to_matrix(self.sample_flat(k), self.n)
    }

    pub fn sample_flat(&self, k: usize) -> &[C64] {
        let nn = self.n * self.n;
        &self.samples[k * nn..(k + 1) * nn]
    }

    pub fn cum_integral(&self, k: usize) -> CMatrix {
        let nn = self.n * self.n;
        linalg::to_matrix(&self.cum_integral[k * nn..(k + 1) * nn], self.n)
    }

    pub fn cum_norm_integral(&self) -> &[f64] {
        &self.cum_norm_integral
    }

    /// Conjugates every sample, `U q U*`.
    pub fn conjugated(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: u.nrows(),
            });
        }
        let values: Vec<CMatrix> = (0..self.node_count())
            .map(|k| u * self.sample(k) * u.adjoint())
            .collect();
        Self::assemble(self.n, self.x_max, self.step, &values)
    }

    fn check_x(&self, what: &'static str, x: f64) -> Result<()> {
        let slack = 1e-12 * self.x_max.max(1.0);
        if !(x >= -slack && x <= self.x_max + slack) {
            return Err(Error::OutOfRange {
                what,
                value: x,
                lo: 0.0,
                hi: self.x_max,
            });
        }
        Ok(())
    }

    /// Cell index and fractional position of `x` (clamped to the grid).
    fn locate(&self, x: f64) -> (usize, f64) {
        let cells = self.node_count() - 1;
        let s = (x / self.step).clamp(0.0, cells as f64);
        let k = (s.floor() as usize).min(cells.saturating_sub(1));
        (k, s - k as f64)
    }

    /// Linear interpolation of `q` written into `out` (flat row-major).
    pub fn eval_into(&self, x: f64, out: &mut [C64]) {
        let nn = self.n * self.n;
        let (k, th) = self.locate(x);
        let a = &self.samples[k * nn..(k + 1) * nn];
        let b = &self.samples[(k + 1) * nn..(k + 2) * nn];
        for e in 0..nn {
            out[e] = a[e] * (1.0 - th) + b[e] * th;
        }
    }

    /// `q(x)` by linear interpolation.
    pub fn eval(&self, x: f64) -> Result<CMatrix> {
        self.check_x("x", x)?;
        let mut out = vec![ZERO; self.n * self.n];
        self.eval_into(x, &mut out);
        Ok(linalg::to_matrix(&out, self.n))
    }

    fn antiderivative_into(&self, x: f64, out: &mut [C64]) {
        let nn = self.n * self.n;
        let (k, th) = self.locate(x);
        let a = &self.samples[k * nn..(k + 1) * nn];
        let b = &self.samples[(k + 1) * nn..(k + 2) * nn];
        let dx = th * self.step;
        for e in 0..nn {
            let qx = a[e] * (1.0 - th) + b[e] * th;
            out[e] = self.cum_integral[k * nn + e] + (a[e] + qx) * (0.5 * dx);
        }
    }

    fn norm_antiderivative(&self, x: f64, table: &[f64], values: impl Fn(usize) -> f64) -> f64 {
        let (k, th) = self.locate(x);
        let a = values(k);
        let b = values(k + 1);
        let vx = a * (1.0 - th) + b * th;
        table[k] + 0.5 * th * self.step * (a + vx)
    }

    /// `int_a^b q(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> Result<CMatrix> {
        self.check_x("a", a)?;
        self.check_x("b", b)?;
        if a > b {
            return Err(Error::InvalidParameter(format!(
                "integration bounds out of order: {a} > {b}"
            )));
        }
        let nn = self.n * self.n;
        let mut fa = vec![ZERO; nn];
        let mut fb = vec![ZERO; nn];
        self.antiderivative_into(a, &mut fa);
        self.antiderivative_into(b, &mut fb);
        let diff: Vec<C64> = fb.iter().zip(&fa).map(|(x, y)| x - y).collect();
        Ok(linalg::to_matrix(&diff, self.n))
    }

    /// `int_0^x |q(s)| ds`.
    pub fn norm_integral(&self, x: f64) -> Result<f64> {
        self.check_x("x", x)?;
        Ok(self.norm_antiderivative(x, &self.cum_norm_integral, |k| self.norms[k]))
    }

    /// `S(eta) = 1/2 int_0^{eta/2} |q(s)| ds`.
    pub fn majorant_s(&self, eta: f64) -> Result<f64> {
        if !(eta >= 0.0 && eta <= 2.0 * self.x_max * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange {
                what: "eta",
                value: eta,
                lo: 0.0,
                hi: 2.0 * self.x_max,
            });
        }
        Ok(0.5 * self.norm_integral((0.5 * eta).min(self.x_max))?)
    }

    /// `(a1, a2) = (|q|_{L1(0,T)} / 2, |q|_{L2(0,T)})`.
    pub fn norm_constants(&self, horizon: f64) -> Result<(f64, f64)> {
        if horizon > self.x_max * (1.0 + 1e-12) || horizon < 0.0 {
            return Err(Error::OutOfRange {
                what: "T",
                value: horizon,
                lo: 0.0,
                hi: self.x_max,
            });
        }
        let horizon = horizon.min(self.x_max);
        let a1 = 0.5 * self.norm_antiderivative(horizon, &self.cum_norm_integral, |k| self.norms[k]);
        let sq = self.norm_antiderivative(horizon, &self.cum_norm_sq_integral, |k| {
            self.norms[k].powi(2)
        });
        Ok((a1, sq.max(0.0).sqrt()))
    }

    /// Self-convolution `p(x) = int_0^x q(tau) q(x - tau) d tau`.
    pub fn convolution_p(&self, x: f64) -> Result<CMatrix> {
        self.check_x("x", x)?;
        let n = self.n;
        let nn = n * n;
        if x <= 0.0 {
            return Ok(CMatrix::zeros(n, n));
        }
        let cells = ((x / self.step) - 1e-9).ceil().max(1.0) as usize;
        let d = x / cells as f64;
        let values: Vec<Vec<C64>> = (0..=cells)
            .map(|k| {
                let mut buf = vec![ZERO; nn];
                self.eval_into(k as f64 * d, &mut buf);
                buf
            })
            .collect();
        let mut acc = vec![ZERO; nn];
        for k in 0..=cells {
            let w = if k == 0 || k == cells { 0.5 * d } else { d };
            linalg::mul_acc(&mut acc, &values[k], &values[cells - k], n, w);
        }
        Ok(linalg::to_matrix(&acc, n))
    }
}
