//! Reference solutions on the hyperbolic plane from the radial ODE
//! `-(sinh r u')' - lambda sinh r u = sinh r g`, built from the solution
//! regular at the origin and the one decaying at infinity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{coth, ONE, ZERO};

/// `2F1(a, b; c; z)` by its power series, `|z| < 1`.
pub fn hyp2f1(a: Complex64, b: Complex64, c: Complex64, z: Complex64) -> Result<Complex64> {
    if z.norm() >= 1.0 {
        return Err(Error::Domain(format!("hypergeometric series needs |z| < 1, got {z}")));
    }
    let mut term = ONE;
    let mut sum = ONE;
    for n in 0..10_000 {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            return Ok(sum);
        }
    }
    Err(Error::Convergence("hypergeometric series".into()))
}

/// `k = sqrt(lambda - 1/4)` on the physical sheet (`Im k < 0`).
pub fn physical_k(lambda: Complex64) -> Result<Complex64> {
    let k = (lambda - 0.25).sqrt();
    if k.im == 0.0 {
        return Err(Error::Domain(format!(
            "lambda = {lambda} lies on the cut [1/4, inf)"
        )));
    }
    Ok(if k.im > 0.0 { -k } else { k })
}

/// `k` on the sheet reached by crossing `(1/4, inf)` from below: the root
/// with `Re k > 0`.
pub fn continued_k(lambda: Complex64) -> Result<Complex64> {
    let k = (lambda - 0.25).sqrt();
    if k.re == 0.0 {
        return Err(Error::Domain(format!(
            "lambda = {lambda} lies on (-inf, 1/4], where the continued branch is not defined"
        )));
    }
    Ok(if k.re < 0.0 { -k } else { k })
}

/// The decaying solution `e^{-(1/2 + ik) r} 2F1(1/2, 1/2 + ik; 1 + ik; e^{-2r})`
/// and its derivative.
pub fn decaying_solution(lambda: Complex64, r: f64) -> Result<(Complex64, Complex64)> {
    outgoing_solution(physical_k(lambda)?, r)
}

/// `e^{-(1/2 + ik) r} 2F1(1/2, 1/2 + ik; 1 + ik; e^{-2r})` for any `k` with
/// `1 + ik` off the nonpositive integers, and its derivative.
pub fn outgoing_solution(k: Complex64, r: f64) -> Result<(Complex64, Complex64)> {
    let ik = Complex64::new(0.0, 1.0) * k;
    let a = Complex64::new(0.5, 0.0);
    let b = 0.5 + ik;
    let cc = 1.0 + ik;
    let z = Complex64::new((-2.0 * r).exp(), 0.0);
    let f = hyp2f1(a, b, cc, z)?;
    let df = a * b / cc * hyp2f1(a + 1.0, b + 1.0, cc + 1.0, z)?;
    let e = (-(b) * r).exp();
    Ok((e * f, e * (-b * f - 2.0 * z * df)))
}

type State = [Complex64; 2];

fn rhs(lambda: Complex64, r: f64, y: State) -> State {
    [y[1], -coth(Complex64::new(r, 0.0)) * y[1] - lambda * y[0]]
}

fn rk4(lambda: Complex64, r: f64, y: State, h: f64) -> State {
    let add = |y: State, k: State, s: f64| [y[0] + k[0] * s, y[1] + k[1] * s];
    let k1 = rhs(lambda, r, y);
    let k2 = rhs(lambda, r + 0.5 * h, add(y, k1, 0.5 * h));
    let k3 = rhs(lambda, r + 0.5 * h, add(y, k2, 0.5 * h));
    let k4 = rhs(lambda, r + h, add(y, k3, h));
    [
        y[0] + (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) * (h / 6.0),
        y[1] + (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) * (h / 6.0),
    ]
}

/// Resolvent of the radial Laplacian applied to a radial source, tabulated
/// on `r_k = k dr`.
pub struct RadialResolvent {
    pub lambda: Complex64,
    pub dr: f64,
    pub r: Vec<f64>,
    pub u: Vec<Complex64>,
    pub du: Vec<Complex64>,
    /// `u(0)`: the Green's function at the origin paired with the source.
    pub at_origin: Complex64,
    /// Wronskian constant `sinh r (phi' psi - phi psi')`.
    pub wronskian: Complex64,
}

impl RadialResolvent {
    /// Cubic Hermite interpolation of `u`.
    pub fn eval(&self, r: f64) -> Complex64 {
        if r <= 0.0 {
            return self.at_origin;
        }
        let x = r / self.dr;
        let k = (x.floor() as usize).min(self.r.len() - 2);
        let t = x - k as f64;
        let (u0, u1) = (self.u[k], self.u[k + 1]);
        let (d0, d1) = (self.du[k] * self.dr, self.du[k + 1] * self.dr);
        let t2 = t * t;
        let t3 = t2 * t;
        u0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + u1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2)
    }
}

/// Solve `(Delta - lambda) u = g` for radial `g` on the hyperbolic plane,
/// `lambda` off the cut on the physical sheet. `g` must be negligible
/// beyond `rmax`; `u` is tabulated on `[0, rmax]` only.
pub fn h2_radial_resolvent(
    lambda: Complex64,
    g: &dyn Fn(f64) -> Complex64,
    rmax: f64,
    dr: f64,
) -> Result<RadialResolvent> {
    h2_radial_resolvent_k(lambda, physical_k(lambda)?, g, rmax, dr)
}

/// As [`h2_radial_resolvent`] with the outgoing solution fixed by `k`,
/// `k^2 = lambda - 1/4`. With [`continued_k`] this is the continuation of
/// the resolvent through the cut, valid for sources decaying faster than
/// the outgoing solution grows.
pub fn h2_radial_resolvent_k(
    lambda: Complex64,
    k: Complex64,
    g: &dyn Fn(f64) -> Complex64,
    rmax: f64,
    dr: f64,
) -> Result<RadialResolvent> {
    if !(dr > 0.0) || !(rmax > 10.0 * dr) {
        return Err(Error::InvalidInput(format!(
            "need dr > 0 and rmax > 10 dr, got dr = {dr}, rmax = {rmax}"
        )));
    }
    if (k * k - (lambda - 0.25)).norm() > 1e-12 * (1.0 + lambda.norm()) {
        return Err(Error::InvalidInput(format!("k = {k} is not a root of lambda - 1/4")));
    }
    let n = (rmax / dr).ceil() as usize;
    let r: Vec<f64> = (0..=n).map(|k| k as f64 * dr).collect();

    // regular solution from its Taylor series at the first node
    let mut phi = vec![[ZERO; 2]; n + 1];
    let a = -lambda / 4.0;
    let b = lambda * (2.0 / 3.0 + lambda) / 64.0;
    phi[0] = [ONE, ZERO];
    let r1 = r[1];
    phi[1] = [
        1.0 + a * r1 * r1 + b * r1.powi(4),
        2.0 * a * r1 + 4.0 * b * r1.powi(3),
    ];
    for k in 1..n {
        phi[k + 1] = rk4(lambda, r[k], phi[k], dr);
    }
    // decaying solution, exact at the far end and integrated inward
    let mut psi = vec![[ZERO; 2]; n + 1];
    let (p, dp) = outgoing_solution(k, r[n])?;
    psi[n] = [p, dp];
    for k in (1..n).rev() {
        psi[k] = rk4(lambda, r[k + 1], psi[k + 1], -dr);
    }

    let km = (1.0 / dr).round() as usize;
    let wr = r[km].sinh() * (phi[km][1] * psi[km][0] - phi[km][0] * psi[km][1]);

    let s: Vec<f64> = r.iter().map(|x| x.sinh()).collect();
    let gv: Vec<Complex64> = r.iter().map(|&x| g(x)).collect();
    // I1(r) = int_0^r phi g sinh, I2(r) = int_r^inf psi g sinh (trapezoid;
    // psi sinh vanishes at the origin)
    let mut i1 = vec![ZERO; n + 1];
    for k in 0..n {
        let f0 = phi[k][0] * gv[k] * s[k];
        let f1 = phi[k + 1][0] * gv[k + 1] * s[k + 1];
        i1[k + 1] = i1[k] + (f0 + f1) * (0.5 * dr);
    }
    let mut i2 = vec![ZERO; n + 1];
    let psis = |k: usize| if k == 0 { ZERO } else { psi[k][0] * s[k] };
    for k in (0..n).rev() {
        i2[k] = i2[k + 1] + (psis(k) * gv[k] + psis(k + 1) * gv[k + 1]) * (0.5 * dr);
    }
    let mut u = vec![ZERO; n + 1];
    let mut du = vec![ZERO; n + 1];
    for k in 1..=n {
        u[k] = (psi[k][0] * i1[k] + phi[k][0] * i2[k]) / wr;
        du[k] = (psi[k][1] * i1[k] + phi[k][1] * i2[k]) / wr;
    }
    let at_origin = i2[0] / wr;
    u[0] = at_origin;
    du[0] = ZERO;
    Ok(RadialResolvent {
        lambda,
        dr,
        r,
        u,
        du,
        at_origin,
        wronskian: wr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::c;

    #[test]
    fn decaying_solution_solves_the_ode() {
        for lam in [c(-1.0, 0.0), c(0.1, -0.2), c(2.0, -0.5)] {
            for r in [1.0, 3.0, 7.0] {
                let h = 1e-3;
                let (u0, d0) = decaying_solution(lam, r).unwrap();
                let (up, _) = decaying_solution(lam, r + h).unwrap();
                let (um, _) = decaying_solution(lam, r - h).unwrap();
                let d2 = (up - 2.0 * u0 + um) / (h * h);
                let d1 = (up - um) / (2.0 * h);
                assert!((d1 - d0).norm() < 1e-5 * d0.norm());
                let res = d2 + coth(c(r, 0.0)) * d0 + lam * u0;
                assert!(res.norm() < 1e-4 * u0.norm(), "{lam} {r}: {res}");
            }
            // decays at infinity on the physical sheet
            let (a, _) = decaying_solution(lam, 5.0).unwrap();
            let (b, _) = decaying_solution(lam, 10.0).unwrap();
            assert!(b.norm() < a.norm());
        }
        assert!(physical_k(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn resolvent_of_an_eigenfunction_source() {
        // for lambda below 1/4 and g = (Delta - lambda) v with v = e^{-r^2}
        // the solution is v
        let lam = c(-1.0, 0.0);
        let g = |r: f64| {
            let v = (-r * r).exp();
            let dv = -2.0 * r * v;
            let d2v = (4.0 * r * r - 2.0) * v;
            let ct = if r == 0.0 { 0.0 } else { 1.0 / r.tanh() };
            // coth r v' -> -2 v at the origin
            let drift = if r == 0.0 { -2.0 } else { ct * dv };
            c(-d2v - drift - lam.re * v, 0.0)
        };
        let o = h2_radial_resolvent(lam, &g, 12.0, 1e-3).unwrap();
        for r in [0.0f64, 0.37, 1.0, 2.5] {
            let want = (-r * r).exp();
            assert!((o.eval(r) - want).norm() < 1e-5, "{r}: {}", o.eval(r));
        }
    }
}
