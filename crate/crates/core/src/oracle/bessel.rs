/// `J1(z) / z` by its power series, `1/2 sum_k (-z^2/4)^k / (k! (k+1)!)`.
pub fn bessel_j1_over_z(z: f64) -> f64 {
    let y = -0.25 * z * z;
    let mut term = 0.5;
    let mut sum = term;
    for k in 1..200 {
        term *= y / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Closed-form kernel for the constant scalar potential `q = c`:
/// `w(x, t) = -c x J1(z) / z`, `z = sqrt(c (t^2 - x^2))`.
pub fn bessel_kernel_constant(c: f64, x: f64, t: f64) -> f64 {
    let z2 = (c * (t * t - x * x)).max(0.0);
    -c * x * bessel_j1_over_z(z2.sqrt())
}

/// `|v - v0 - V v|` at `(x, t)` for the closed form, in characteristic variables
/// `v = -1/2 int_{xi/2}^{eta/2} c - c/4 int_0^xi int_xi^eta v`,
/// with 16 x 16 panels of 20-point Gauss-Legendre quadrature.
pub fn bessel_substitution_residual(c: f64, x: f64, t: f64) -> f64 {
    let (xi, eta) = (t - x, t + x);
    let v = |a: f64, b: f64| bessel_kernel_constant(c, 0.5 * (b - a), 0.5 * (b + a));
    let (nodes, weights) = gauss_legendre_20();
    let panels = 16;
    let span = eta - xi;
    let mut double = 0.0;
    for pa in 0..panels {
        let (a0, a1) = (xi * pa as f64 / panels as f64, xi * (pa + 1) as f64 / panels as f64);
        for (na, wa) in nodes.iter().zip(&weights) {
            let xi1 = 0.5 * (a1 - a0) * na + 0.5 * (a1 + a0);
            for pb in 0..panels {
                let (b0, b1) = (xi + span * pb as f64 / panels as f64, xi + span * (pb + 1) as f64 / panels as f64);
                for (nb, wb) in nodes.iter().zip(&weights) {
                    let eta1 = 0.5 * (b1 - b0) * nb + 0.5 * (b1 + b0);
                    double += 0.25 * (a1 - a0) * (b1 - b0) * wa * wb * v(xi1, eta1);
                }
            }
        }
    }
    let rhs = -0.25 * c * span - 0.25 * c * double;
    (v(xi, eta) - rhs).abs()
}

fn gauss_legendre_20() -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on P_20 from the Chebyshev guess.
    let n = 20;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_reference_values() {
        // J1(1) = 0.44005058574493355, J1(2.5) = 0.4970941024642741
        assert!((bessel_j1_over_z(1.0) - 0.44005058574493355).abs() < 1e-15);
        assert!((bessel_j1_over_z(2.5) * 2.5 - 0.4970941024642741).abs() < 1e-14);
        assert_eq!(bessel_j1_over_z(0.0), 0.5);
    }

    #[test]
    fn boundary_values() {
        for &c in &[0.5, 1.0, 4.0] {
            assert_eq!(bessel_kernel_constant(c, 0.0, 0.8), 0.0);
            let x = 0.6;
            assert!((bessel_kernel_constant(c, x, x) + c * x / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_solves_the_integral_equation() {
        for &c in &[0.5, 1.0, 4.0] {
            let r = bessel_substitution_residual(c, 0.5, 1.0);
            assert!(r < 1e-8, "c={c}: {r}");
        }
    }
}
