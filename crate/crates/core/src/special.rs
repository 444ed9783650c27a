//! Small complex special-function helpers shared by the coefficient
//! generators, the scaling maps and the ODE oracle.

use num_complex::Complex64;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Below this modulus coth is evaluated from its Laurent series.
pub const COTH_SERIES_RADIUS: f64 = 1e-2;

/// coth z, using `1/z + z/3 - z^3/45 + 2z^5/945` near the origin.
pub fn coth(z: Complex64) -> Complex64 {
    if z.norm() < COTH_SERIES_RADIUS {
        let z2 = z * z;
        return z.inv() + z * (1.0 / 3.0 - z2 * (1.0 / 45.0 - z2 * (2.0 / 945.0)));
    }
    // 1/tanh is accurate away from the origin and handles large |Re z|.
    if z.re.abs() > 20.0 {
        // tanh saturates; use the exponential form with the decaying branch.
        let s = z.re.signum();
        let e = (-2.0 * s * z).exp();
        return s * (1.0 + e) / (1.0 - e);
    }
    z.tanh().inv()
}

pub fn coth_real(x: f64) -> f64 {
    coth(Complex64::new(x, 0.0)).re
}

/// 1 / sinh^2 z, with the small-argument series `1/z^2 - 1/3 + z^2/15`.
pub fn inv_sinh_sq(z: Complex64) -> Complex64 {
    if z.norm() < COTH_SERIES_RADIUS {
        let z2 = z * z;
        return z2.inv() - 1.0 / 3.0 + z2 / 15.0;
    }
    let s = z.sinh();
    (s * s).inv()
}

/// Principal branch of `sqrt(sinh(w a) / sinh(a))` for real or complex `a`,
/// continuous in `w` on `Re w > 0` and equal to `sqrt(w)` at `a = 0`.
///
/// The ratio is even in `a`, so `a` is first moved to `Re a >= 0`; then
/// `sinh(w a)/sinh(a) = e^{(w-1)a} (1 - e^{-2wa}) / (1 - e^{-2a})` and the
/// square root of the exponential prefactor is taken exactly.
pub fn sqrt_sinh_ratio(w: Complex64, a: Complex64) -> Complex64 {
    let a = if a.re < 0.0 { -a } else { a };
    if a.norm() < 1e-8 {
        // sinh(wa)/sinh(a) = w (1 + (w^2-1) a^2 / 6 + ...)
        return (w * (1.0 + (w * w - 1.0) * a * a / 6.0)).sqrt();
    }
    let num = if (w * a).norm() < 1e-3 {
        // 1 - e^{-x} without cancellation
        -exp_m1(-2.0 * w * a)
    } else {
        1.0 - (-2.0 * w * a).exp()
    };
    let den = if a.norm() < 1e-3 {
        -exp_m1(-2.0 * a)
    } else {
        1.0 - (-2.0 * a).exp()
    };
    ((w - 1.0) * a * 0.5).exp() * (num / den).sqrt()
}

/// e^z - 1 accurate near zero.
pub fn exp_m1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        let mut term = z;
        let mut sum = z;
        for k in 2..10 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        z.exp() - 1.0
    }
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = gauss_quad::legendre::GaussLegendre::new(
        std::num::NonZeroUsize::new(n.max(1)).expect("nonzero"),
    );
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Argument of `z` in `(-pi, pi]`.
pub fn arg(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
