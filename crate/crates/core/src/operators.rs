//! Coefficient fields of the radial Laplacians, their complex-scaled
//! versions and the product model operators.
//!
//! Coefficients follow the convention
//! `P f = sum A_ij d_i d_j f + sum b_i d_i f + c f`.
//! The uniform scaling is `x -> w x` with `w = e^theta`; the exterior
//! scaling is the radial deformation `x -> s(|x|) x`, `s = 1 + (w - 1) phi`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geometry::{FlatPoint, Space, ROOTS};
use crate::special::{coth, inv_sinh_sq, ONE, ZERO};

/// Smooth nondecreasing cutoff, `0` on `[0, T]`, `1` on `[T + width, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub t: f64,
    pub width: f64,
    /// `1 / sup_r (phi + r phi')`.
    pub delta: f64,
}

impl CutoffProfile {
    pub fn new(t: f64, width: f64) -> Result<Self> {
        if !(t > 0.0) || !(width > 0.0) || !t.is_finite() || !width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cutoff needs T > 0 and width > 0, got T = {t}, width = {width}"
            )));
        }
        let mut p = CutoffProfile { t, width, delta: 1.0 };
        let n = 20_000;
        let mut sup: f64 = 1.0;
        for k in 0..=n {
            let r = t + width * k as f64 / n as f64;
            let (phi, dphi, _) = p.eval(r);
            sup = sup.max(phi + r * dphi);
        }
        p.delta = 1.0 / sup;
        Ok(p)
    }

    /// `(phi, phi', phi'')` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let u = (r - self.t) / self.width;
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if u >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        // phi = L(q), L(q) = 1/(1+e^q), q = 1/u - 1/(1-u)
        let q = 1.0 / u - 1.0 / (1.0 - u);
        let l = 1.0 / (1.0 + q.exp());
        let ll = l * (1.0 - l);
        if ll == 0.0 {
            return (l, 0.0, 0.0);
        }
        let dq = -1.0 / (u * u) - 1.0 / ((1.0 - u) * (1.0 - u));
        let d2q = 2.0 / (u * u * u) - 2.0 / ((1.0 - u).powi(3));
        let d1 = -ll * dq;
        let d2 = ll * ((1.0 - 2.0 * l) * dq * dq - d2q);
        (l, d1 / self.width, d2 / (self.width * self.width))
    }

    /// End of the transition layer.
    pub fn outer(&self) -> f64 {
        self.t + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    Uniform,
    Exterior { cutoff: CutoffProfile },
}

/// Radial profile of a scaling at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMap {
    /// `Z(x) = s x`
    pub s: Complex64,
    pub ds: Complex64,
    /// `z = s r` and its first two derivatives in `r`.
    pub z: Complex64,
    pub dz: Complex64,
    pub d2z: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParam {
    pub theta: Complex64,
    pub variant: Variant,
}

pub const LARGE_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

impl ScalingParam {
    pub fn uniform(theta: Complex64) -> Result<Self> {
        check_theta(theta)?;
        Ok(ScalingParam {
            theta,
            variant: Variant::Uniform,
        })
    }

    pub fn exterior(theta: Complex64, cutoff: CutoffProfile) -> Result<Self> {
        check_theta(theta)?;
        let w = theta.exp();
        if w.im.abs() < 1e-300 && w.re <= 1.0 - cutoff.delta {
            return Err(Error::Validity(format!(
                "exterior scaling needs e^theta outside (-inf, 1 - delta] with delta = {:.6}, got e^theta = {}",
                cutoff.delta, w.re
            )));
        }
        Ok(ScalingParam {
            theta,
            variant: Variant::Exterior { cutoff },
        })
    }

    pub fn identity() -> Self {
        ScalingParam {
            theta: ZERO,
            variant: Variant::Uniform,
        }
    }

    pub fn w(&self) -> Complex64 {
        self.theta.exp()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.variant, Variant::Uniform)
    }

    pub fn cutoff(&self) -> Option<&CutoffProfile> {
        match &self.variant {
            Variant::Uniform => None,
            Variant::Exterior { cutoff } => Some(cutoff),
        }
    }

    /// Same variant with a different angle.
    pub fn with_theta(&self, theta: Complex64) -> Result<Self> {
        match self.variant {
            Variant::Uniform => ScalingParam::uniform(theta),
            Variant::Exterior { cutoff } => ScalingParam::exterior(theta, cutoff),
        }
    }

    /// `|Im theta| >= pi/4`: Gaussians no longer decay along the scaled ray.
    pub fn large_angle(&self) -> bool {
        self.theta.im.abs() >= LARGE_ANGLE
    }

    pub fn radial(&self, r: f64) -> RadialMap {
        let w = self.w();
        match &self.variant {
            Variant::Uniform => RadialMap {
                s: w,
                ds: ZERO,
                z: w * r,
                dz: w,
                d2z: ZERO,
            },
            Variant::Exterior { cutoff } => {
                let (phi, dphi, d2phi) = cutoff.eval(r);
                let wm = w - 1.0;
                RadialMap {
                    s: 1.0 + wm * phi,
                    ds: wm * dphi,
                    z: (1.0 + wm * phi) * r,
                    dz: 1.0 + wm * (phi + r * dphi),
                    d2z: wm * (2.0 * dphi + r * d2phi),
                }
            }
        }
    }
}

pub(crate) fn check_theta(theta: Complex64) -> Result<()> {
    if !theta.re.is_finite() || !theta.im.is_finite() {
        return Err(Error::Validity(format!("theta must be finite, got {theta}")));
    }
    if theta.im.abs() >= FRAC_PI_2 {
        return Err(Error::Validity(format!(
            "|Im theta| < pi/2 (= {FRAC_PI_2:.6}) required, got Im theta = {}",
            theta.im
        )));
    }
    Ok(())
}

/// `(deformed radius, derivative)` of the exterior deformation.
pub fn exterior_scaling_map(r: f64, sp: &ScalingParam) -> Result<(Complex64, Complex64)> {
    if sp.is_uniform() {
        return Err(Error::InvalidInput(
            "exterior_scaling_map needs an exterior scaling".into(),
        ));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("r must be >= 0, got {r}")));
    }
    let m = sp.radial(r);
    if m.dz.norm() < 1e-10 {
        return Err(Error::DegenerateContour {
            r,
            derivative: m.dz.norm(),
        });
    }
    Ok((m.z, m.dz))
}

/// One point of a coefficient field. For the 1D case only the `[0]`
/// slots are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEntry {
    pub dim: usize,
    pub second_order: [[Complex64; 2]; 2],
    pub first_order: [Complex64; 2],
    pub zeroth_order: Complex64,
}

impl CoefficientEntry {
    fn scalar(a: Complex64, b: Complex64, c: Complex64) -> Self {
        CoefficientEntry {
            dim: 1,
            second_order: [[a, ZERO], [ZERO, ZERO]],
            first_order: [b, ZERO],
            zeroth_order: c,
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let d = self.dim;
        let mut ok = self.zeroth_order.im.abs() <= tol;
        for i in 0..d {
            ok &= self.first_order[i].im.abs() <= tol;
            for j in 0..d {
                ok &= self.second_order[i][j].im.abs() <= tol;
            }
        }
        ok
    }

    /// Zeroth-order term left after removing the first-order terms of a
    /// diagonal constant-coefficient operator by an exponential gauge,
    /// `c - sum b_i^2 / (4 A_ii)`.
    pub fn gauge_constant(&self) -> Complex64 {
        let mut c = self.zeroth_order;
        for i in 0..self.dim {
            c -= self.first_order[i] * self.first_order[i] / (4.0 * self.second_order[i][i]);
        }
        c
    }

    /// Apply to a function given by its derivatives.
    pub fn apply(&self, f: Complex64, grad: [Complex64; 2], hess: [[Complex64; 2]; 2]) -> Complex64 {
        let mut v = self.zeroth_order * f;
        for i in 0..self.dim {
            v += self.first_order[i] * grad[i];
            for j in 0..self.dim {
                v += self.second_order[i][j] * hess[i][j];
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H2Form {
    FirstOrder,
    Symmetrized,
}

pub fn h2_radial_coefficients(r: f64, sp: &ScalingParam, form: H2Form) -> Result<CoefficientEntry> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("r must be > 0, got {r}")));
    }
    check_theta(sp.theta)?;
    let m = sp.radial(r);
    if m.dz.norm() < 1e-10 {
        return Err(Error::DegenerateContour {
            r,
            derivative: m.dz.norm(),
        });
    }
    match form {
        H2Form::FirstOrder => {
            // pull back of -d_z^2 - coth(z) d_z along z = Z(r)
            let a = -(m.dz * m.dz).inv();
            let b = m.d2z / (m.dz * m.dz * m.dz) - coth(m.z) / m.dz;
            Ok(CoefficientEntry::scalar(a, b, ZERO))
        }
        H2Form::Symmetrized => {
            if !sp.is_uniform() {
                return Err(Error::InvalidInput(
                    "the symmetrized form is defined for the uniform scaling only".into(),
                ));
            }
            let w = sp.w();
            let a = -(w * w).inv();
            let c = 0.25 - 0.25 * inv_sinh_sq(w * r);
            Ok(CoefficientEntry::scalar(a, ZERO, c))
        }
    }
}

/// Divergence-form data of the scaled operator `-(1/sigma) d(kappa d)` on
/// the half-line: `(sigma, kappa) = (sinh(z) z', sinh(z) / z')`.
pub fn h2_flux_weights(r: f64, sp: &ScalingParam) -> (Complex64, Complex64) {
    let m = sp.radial(r);
    let sh = m.z.sinh();
    (sh * m.dz, sh / m.dz)
}

/// `a(Z)` for a complex point `Z` of the complexified flat.
pub fn density_complex(z: [Complex64; 2]) -> Complex64 {
    ROOTS
        .iter()
        .map(|a| (z[0] * a[0] + z[1] * a[1]).sinh())
        .product()
}

fn radial_unit(x: [f64; 2]) -> ([f64; 2], f64) {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        ([1.0, 0.0], 0.0)
    } else {
        ([x[0] / r, x[1] / r], r)
    }
}

/// Divergence-form data of the scaled SL3 operator `-(1/sigma) div(K grad)`
/// in flat coordinates: `sigma = a(Z) det DZ` and
/// `K = a(Z) det DZ (DZ^T DZ)^{-1}`. Walls are allowed (sigma = 0 there).
pub fn sl3_flux_weights(x: [f64; 2], sp: &ScalingParam) -> (Complex64, [[Complex64; 2]; 2]) {
    let (u, r) = radial_unit(x);
    let m = sp.radial(r);
    let zx = [m.s * x[0], m.s * x[1]];
    let sigma = density_complex(zx) * m.s * m.dz;
    let is2 = (m.s * m.s).inv();
    let g = (m.dz * m.dz).inv() - is2;
    let k = |i: usize, j: usize| {
        let delta = if i == j { 1.0 } else { 0.0 };
        sigma * (is2 * delta + g * u[i] * u[j])
    };
    (sigma, [[k(0, 0), k(0, 1)], [k(1, 0), k(1, 1)]])
}

fn wall_check(p: &FlatPoint) -> Result<[f64; 3]> {
    let al = p.alphas();
    if al.contains(&0.0) {
        return Err(Error::WallSingularity(format!(
            "point {:?} lies on a Weyl chamber wall",
            p.x
        )));
    }
    if al.iter().any(|&a| a < 0.0) {
        return Err(Error::Domain(format!(
            "point {:?} is outside the positive chamber",
            p.x
        )));
    }
    Ok(al)
}

/// Coefficients of `-w^-2 Lap - w^-1 sum_k coth(w alpha_k) <a_k, grad>` in
/// flat coordinates; the exterior variant is the pull back along the
/// radial deformation.
pub fn sl3_radial_coefficients(p: &FlatPoint, sp: &ScalingParam) -> Result<CoefficientEntry> {
    check_theta(sp.theta)?;
    wall_check(p)?;
    let (u, r) = radial_unit(p.x);
    let m = sp.radial(r);
    if m.dz.norm() < 1e-10 {
        return Err(Error::DegenerateContour {
            r,
            derivative: m.dz.norm(),
        });
    }
    let zx = [m.s * p.x[0], m.s * p.x[1]];
    // sum_k coth(alpha_k(Z)) a_k
    let mut v = [ZERO; 2];
    for a in ROOTS {
        let ct = coth(zx[0] * a[0] + zx[1] * a[1]);
        v[0] += ct * a[0];
        v[1] += ct * a[1];
    }
    let is2 = (m.s * m.s).inv();
    let idz2 = (m.dz * m.dz).inv();
    let g = idz2 - is2;
    let mut a2 = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            a2[i][j] = -(is2 * delta + g * u[i] * u[j]);
        }
    }
    // DZ^{-1} v with DZ^{-1} = s^-1 (I - P) + z'^-1 P
    let uv = v[0] * u[0] + v[1] * u[1];
    let dinv_v = [
        (v[0] - uv * u[0]) / m.s + uv * u[0] / m.dz,
        (v[1] - uv * u[1]) / m.s + uv * u[1] / m.dz,
    ];
    let radial = if m.ds == ZERO && m.d2z == ZERO {
        ZERO
    } else {
        // (z'^-2)' + g/r + z'^-2 (s'/s + z''/z')
        -2.0 * m.d2z / (m.dz * m.dz * m.dz) + g / r + idz2 * (m.ds / m.s + m.d2z / m.dz)
    };
    let b = [
        -radial * u[0] - dinv_v[0],
        -radial * u[1] - dinv_v[1],
    ];
    Ok(CoefficientEntry {
        dim: 2,
        second_order: a2,
        first_order: b,
        zeroth_order: ZERO,
    })
}

/// Same operator in chamber coordinates `y = (alpha_1, alpha_2)`:
/// `A_y = J A J^T`, `b_y = J b` with the rows of `J` the simple roots.
pub fn to_chamber_coefficients(e: &CoefficientEntry) -> CoefficientEntry {
    let j = [ROOTS[0], ROOTS[1]];
    let mut a = [[ZERO; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    a[p][q] += e.second_order[k][l] * j[p][k] * j[q][l];
                }
            }
        }
    }
    let b = [
        e.first_order[0] * j[0][0] + e.first_order[1] * j[0][1],
        e.first_order[0] * j[1][0] + e.first_order[1] * j[1][1],
    ];
    CoefficientEntry {
        dim: 2,
        second_order: a,
        first_order: b,
        zeroth_order: e.zeroth_order,
    }
}

/// Largest absolute discrepancy between the root-system form of the
/// radial Laplacian and its expression in the coordinates
/// `(log mu, log s)`, `mu = lambda1/lambda2`, `s = lambda3^{-3/2}`.
pub fn coefficient_identity_check(p: &FlatPoint) -> Result<f64> {
    wall_check(p)?;
    let l = p.lambdas();
    let mu = l[0] / l[1];
    let s = l[2].powf(-1.5);
    let s2 = s * s;
    let den = s2 * s2 - s2 * (mu + 1.0 / mu) + 1.0;
    if den.abs() < 1e-14 * (1.0 + s2 * s2) {
        return Err(Error::Domain(format!(
            "point {:?} lies on the excluded locus s^4 - s^2(mu + 1/mu) + 1 = 0",
            p.x
        )));
    }
    let c1 = (mu + 1.0 / mu) / (mu - 1.0 / mu) - s2 * (mu - 1.0 / mu) / den;
    let c2 = 2.0 * (s2 * s2 - 1.0) / den;
    // coordinates (log mu, log s): second order -1/3, -1/4, first order
    // -C1/3, -C2/4
    let want = [-1.0 / 3.0, -0.25, 0.0, -c1 / 3.0, -c2 / 4.0];

    let e = sl3_radial_coefficients(p, &ScalingParam::identity())?;
    // gradients of log mu = -alpha_1 and log s = -x2/2
    let gl = [-ROOTS[0][0], -ROOTS[0][1]];
    let gs = [0.0, -0.5];
    let quad = |g: [f64; 2], h: [f64; 2]| {
        let mut v = ZERO;
        for i in 0..2 {
            for j in 0..2 {
                v += e.second_order[i][j] * g[i] * h[j];
            }
        }
        v
    };
    let lin = |g: [f64; 2]| e.first_order[0] * g[0] + e.first_order[1] * g[1];
    let got = [quad(gl, gl), quad(gs, gs), quad(gl, gs), lin(gl), lin(gs)];
    Ok(got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).norm())
        .fold(0.0, f64::max))
}

/// Discrete representation of a radial operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorForm {
    /// `-(1/sigma) div(K grad)` with conductances on lattice edges.
    #[default]
    Flux,
    /// Centered differences of the coth-drift coefficients.
    Drift,
    /// `-w^-2 d^2 + 1/4 - 1/(4 sinh^2(wr))` on the half-line.
    Symmetrized,
}

/// A scaled radial operator in a chosen representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub space: Space,
    pub scaling: ScalingParam,
    pub form: OperatorForm,
}

impl CoefficientSet {
    pub fn new(space: Space, scaling: ScalingParam, form: OperatorForm) -> Result<Self> {
        check_theta(scaling.theta)?;
        if form == OperatorForm::Symmetrized && (space != Space::H2 || !scaling.is_uniform()) {
            return Err(Error::InvalidInput(
                "the symmetrized form exists for the hyperbolic plane with uniform scaling only".into(),
            ));
        }
        Ok(CoefficientSet { space, scaling, form })
    }

    /// Coefficients at a flat point (`[r, 0]` on the hyperbolic plane).
    pub fn at(&self, x: [f64; 2]) -> Result<CoefficientEntry> {
        match self.space {
            Space::H2 => {
                let form = if self.form == OperatorForm::Symmetrized {
                    H2Form::Symmetrized
                } else {
                    H2Form::FirstOrder
                };
                h2_radial_coefficients(x[0], &self.scaling, form)
            }
            Space::Sl3 => sl3_radial_coefficients(&FlatPoint::new(x), &self.scaling),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Lsharp,
    L0,
}

/// Model operators in the variables `(t, r)`, `t = -log s`:
/// `Lsharp = 1/4 (s D_s)^2 + i/2 (s D_s) + 1/3 Lap_H2` and
/// `L0 = 1/4 (s D_s)^2 + 1/3 Lap_H2 + 1/4`, each scaled by `theta`.
pub fn model_operator_coefficients(
    kind: ModelKind,
    t: f64,
    r: f64,
    sp: &ScalingParam,
) -> Result<CoefficientEntry> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("t must be finite, got {t}")));
    }
    if !sp.is_uniform() {
        return Err(Error::InvalidInput(
            "model operators are defined for the uniform scaling only".into(),
        ));
    }
    let h = h2_radial_coefficients(r, sp, H2Form::FirstOrder)?;
    let w = sp.w();
    let iw2 = (w * w).inv();
    let third = 1.0 / 3.0;
    let (bt, c) = match kind {
        ModelKind::Lsharp => (-0.5 / w, ZERO),
        ModelKind::L0 => (ZERO, 0.25 * ONE),
    };
    Ok(CoefficientEntry {
        dim: 2,
        second_order: [[-0.25 * iw2, ZERO], [ZERO, h.second_order[0][0] * third]],
        first_order: [bt, h.first_order[0] * third],
        zeroth_order: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{c, I};
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn h2_first_order_at_theta_zero() {
        let e = h2_radial_coefficients(1.0, &ScalingParam::identity(), H2Form::FirstOrder).unwrap();
        assert_eq!(e.second_order[0][0], c(-1.0, 0.0));
        let coth1 = 1.0f64.cosh() / 1.0f64.sinh();
        assert!((e.first_order[0] - -coth1).norm() < 1e-15);
        assert!(e.is_real(0.0));
    }

    #[test]
    fn h2_kinetic_factor() {
        let sp = ScalingParam::uniform(I * (std::f64::consts::PI / 6.0)).unwrap();
        let e = h2_radial_coefficients(0.7, &sp, H2Form::Symmetrized).unwrap();
        let want = -Complex64::from_polar(1.0, -std::f64::consts::PI / 3.0);
        assert!(close(e.second_order[0][0], want, 1e-15));
    }

    #[test]
    fn h2_rejects_bad_input() {
        assert!(matches!(
            h2_radial_coefficients(0.0, &ScalingParam::identity(), H2Form::FirstOrder),
            Err(Error::Domain(_))
        ));
        assert!(matches!(ScalingParam::uniform(c(0.0, 1.6)), Err(Error::Validity(_))));
    }

    #[test]
    fn h2_symmetrized_is_liouville_transform_of_first_order() {
        // S = sinh^{1/2} P sinh^{-1/2} applied to g = sinh^{1/2} f
        let sp = ScalingParam::uniform(c(0.1, 0.35)).unwrap();
        let w = sp.w();
        let r = 0.9;
        let f = |x: Complex64| (-(x * x) * 0.3).exp() * (x * 0.7).cos();
        let g = |x: f64| (w * x).sinh().sqrt() * f(w * x);
        let p = |x: f64| f(w * x);
        let h = 1e-3;
        let d1 = |u: &dyn Fn(f64) -> Complex64| (u(r + h) - u(r - h)) / (2.0 * h);
        let d2 = |u: &dyn Fn(f64) -> Complex64| (u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h);
        let e1 = h2_radial_coefficients(r, &sp, H2Form::FirstOrder).unwrap();
        let es = h2_radial_coefficients(r, &sp, H2Form::Symmetrized).unwrap();
        let pf = e1.second_order[0][0] * d2(&p) + e1.first_order[0] * d1(&p);
        let sg = es.second_order[0][0] * d2(&g) + es.zeroth_order * g(r);
        let want = (w * r).sinh().sqrt() * pf;
        assert!((sg - want).norm() < 1e-5 * want.norm());
    }

    #[test]
    fn sl3_examples() {
        let p = FlatPoint::from_chamber([1.0, 1.0]);
        let e = sl3_radial_coefficients(&p, &ScalingParam::identity()).unwrap();
        assert!(e.is_real(0.0));
        let al = [1.0f64, 1.0, 2.0];
        let mut want = [0.0; 2];
        for (k, a) in ROOTS.iter().enumerate() {
            let ct = al[k].cosh() / al[k].sinh();
            want[0] -= ct * a[0];
            want[1] -= ct * a[1];
        }
        assert!((e.first_order[0].re - want[0]).abs() < 1e-14);
        assert!((e.first_order[1].re - want[1]).abs() < 1e-14);
        assert_eq!(e.zeroth_order, ZERO);
        assert_eq!(e.apply(ONE, [ZERO; 2], [[ZERO; 2]; 2]), ZERO);

        let deep = FlatPoint::from_chamber([20.0, 20.0]);
        let e = sl3_radial_coefficients(&deep, &ScalingParam::identity()).unwrap();
        let s = [ROOTS.iter().map(|a| a[0]).sum::<f64>(), ROOTS.iter().map(|a| a[1]).sum::<f64>()];
        assert!((e.first_order[0].re + s[0]).abs() < 1e-15);
        assert!((e.first_order[1].re + s[1]).abs() < 1e-15);

        let wall = FlatPoint::from_chamber([0.0, 1.0]);
        assert!(matches!(
            sl3_radial_coefficients(&wall, &ScalingParam::identity()),
            Err(Error::WallSingularity(_))
        ));
    }

    #[test]
    fn sl3_ellipticity_on_a_grid() {
        for &b in &[0.0, 0.5, 1.0, 1.5, FRAC_PI_2 - 1e-6] {
            let sp = ScalingParam::uniform(c(0.0, b)).unwrap();
            for i in 1..6 {
                for j in 1..6 {
                    let p = FlatPoint::from_chamber([0.3 * i as f64, 0.3 * j as f64]);
                    let e = sl3_radial_coefficients(&p, &sp).unwrap();
                    let a = e.second_order;
                    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                    assert!(det.norm() > 0.99);
                }
            }
        }
    }

    #[test]
    fn identity_check_generic_and_near_wall() {
        let p = FlatPoint::from_chamber([0.7, 1.3]);
        assert!(coefficient_identity_check(&p).unwrap() <= 1e-12);
        let q = FlatPoint::from_chamber([1e-3, 0.8]);
        assert!(coefficient_identity_check(&q).unwrap() <= 1e-8);
        let w = FlatPoint::from_chamber([0.0, 0.8]);
        assert!(coefficient_identity_check(&w).is_err());
    }

    #[test]
    fn model_operators() {
        let sp0 = ScalingParam::identity();
        let e = model_operator_coefficients(ModelKind::L0, 0.3, 1.2, &sp0).unwrap();
        assert!(e.is_real(0.0));
        for &(t, r) in &[(0.0, 0.1), (5.0, 3.0), (-2.0, 40.0)] {
            let e = model_operator_coefficients(ModelKind::L0, t, r, &sp0).unwrap();
            assert_eq!(e.zeroth_order, c(0.25, 0.0));
        }
        for &b in &[0.0, 0.2, 0.6, 1.2] {
            let sp = ScalingParam::uniform(c(0.1, b)).unwrap();
            let w2 = sp.w() * sp.w();
            for kind in [ModelKind::Lsharp, ModelKind::L0] {
                let e = model_operator_coefficients(kind, 1.0, 40.0, &sp).unwrap();
                assert!(close(e.second_order[0][0], -0.25 / w2, 1e-14));
                assert!(close(e.second_order[1][1], -(1.0 / 3.0) / w2, 1e-14));
                // the exponential gauge leaves the threshold 1/3 for any theta
                assert!(close(e.gauge_constant(), c(1.0 / 3.0, 0.0), 1e-12));
            }
        }
    }

    #[test]
    fn cutoff_profile_properties() {
        let cp = CutoffProfile::new(4.0, 2.0).unwrap();
        assert_eq!(cp.eval(3.9), (0.0, 0.0, 0.0));
        assert_eq!(cp.eval(6.1), (1.0, 0.0, 0.0));
        let mut prev = 0.0;
        for k in 0..=400 {
            let r = 4.0 + 2.0 * k as f64 / 400.0;
            let (p, dp, d2p) = cp.eval(r);
            assert!(p >= prev && dp >= 0.0 && d2p.is_finite());
            prev = p;
            let h = 1e-6;
            if k > 0 && k < 400 {
                let fd = (cp.eval(r + h).0 - cp.eval(r - h).0) / (2.0 * h);
                assert!((fd - dp).abs() < 1e-6 * (1.0 + dp));
                let fd2 = (cp.eval(r + h).1 - cp.eval(r - h).1) / (2.0 * h);
                assert!((fd2 - d2p).abs() < 1e-5 * (1.0 + d2p.abs()));
            }
        }
        assert!(cp.delta > 0.0 && cp.delta < 1.0);
    }

    #[test]
    fn exterior_map_examples() {
        let cp = CutoffProfile::new(3.0, 1.5).unwrap();
        let sp = ScalingParam::exterior(c(0.0, 0.4), cp).unwrap();
        let w = sp.w();
        assert_eq!(exterior_scaling_map(2.0, &sp).unwrap(), (c(2.0, 0.0), ONE));
        let (z, dz) = exterior_scaling_map(10.0, &sp).unwrap();
        assert!(close(z, w * 10.0, 1e-15) && close(dz, w, 1e-15));
        let real = ScalingParam::exterior(c(-0.5 * cp.delta, 0.0), cp).unwrap();
        for k in 0..200 {
            let (_, dz) = exterior_scaling_map(0.05 * k as f64, &real).unwrap();
            assert!(dz.re > 0.0 && dz.im == 0.0);
        }
        let bad = (1.0 - cp.delta * 1.01).ln();
        assert!(ScalingParam::exterior(c(bad, 0.0), cp).is_err());
        assert!(exterior_scaling_map(1.0, &ScalingParam::identity()).is_err());
    }

    #[test]
    fn exterior_coefficients_match_divergence_form() {
        // b_j = -(1/sigma) sum_i d_i K_ij, A = -K/sigma
        let cp = CutoffProfile::new(1.0, 2.0).unwrap();
        let sp = ScalingParam::exterior(c(0.05, 0.5), cp).unwrap();
        for x in [[1.9, 1.2], [0.6, 2.1], [3.3, 2.5]] {
            let p = FlatPoint::new(x);
            let e = sl3_radial_coefficients(&p, &sp).unwrap();
            let (sigma, k) = sl3_flux_weights(x, &sp);
            let h = 1e-5;
            for j in 0..2 {
                let mut div = ZERO;
                for i in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    div += (sl3_flux_weights(xp, &sp).1[i][j] - sl3_flux_weights(xm, &sp).1[i][j]) / (2.0 * h);
                }
                let want = -div / sigma;
                assert!(close(e.first_order[j], want, 1e-6), "{:?} {} {}", x, e.first_order[j], want);
                for i in 0..2 {
                    assert!(close(e.second_order[i][j], -k[i][j] / sigma, 1e-12));
                }
            }
        }
        // and the 1D version
        let (r, h) = (2.1, 1e-5);
        let e = h2_radial_coefficients(r, &sp, H2Form::FirstOrder).unwrap();
        let (sig, _) = h2_flux_weights(r, &sp);
        let dk = (h2_flux_weights(r + h, &sp).1 - h2_flux_weights(r - h, &sp).1) / (2.0 * h);
        assert!(close(e.first_order[0], -dk / sig, 1e-6));
    }

    #[test]
    fn coefficients_are_analytic_in_theta() {
        // central difference in Re theta vs in Im theta (Cauchy-Riemann)
        let p = FlatPoint::from_chamber([0.4, 0.9]);
        let eps = 1e-5;
        for &th in &[c(0.0, 0.2), c(0.1, -0.6), c(-0.2, 1.1)] {
            let f = |t: Complex64| {
                sl3_radial_coefficients(&p, &ScalingParam::uniform(t).unwrap())
                    .unwrap()
                    .first_order[1]
            };
            let dre = (f(th + eps) - f(th - eps)) / (2.0 * eps);
            let dim = (f(th + I * eps) - f(th - I * eps)) / (2.0 * eps);
            assert!((dim - I * dre).norm() < 1e-6 * (1.0 + dre.norm()));
        }
    }

    #[test]
    fn large_t_exterior_equals_unscaled() {
        let cp = CutoffProfile::new(50.0, 5.0).unwrap();
        let sp = ScalingParam::exterior(c(0.0, 0.7), cp).unwrap();
        for x in [[1.0, 3.0], [10.0, 20.0]] {
            let p = FlatPoint::new(x).fold();
            let a = sl3_radial_coefficients(&p, &sp).unwrap();
            let b = sl3_radial_coefficients(&p, &ScalingParam::identity()).unwrap();
            assert_eq!(a, b);
        }
    }

    fn interior() -> impl Strategy<Value = FlatPoint> {
        (0.01f64..5.0, 0.01f64..5.0).prop_map(|(a, b)| FlatPoint::from_chamber([a, b]))
    }

    proptest! {
        #[test]
        fn identity_holds_at_random_points(p in interior()) {
            prop_assert!(coefficient_identity_check(&p).unwrap() <= 1e-10);
        }

        #[test]
        fn theta_zero_coefficients_are_real(p in interior(), re in -1.0f64..1.0) {
            let e = sl3_radial_coefficients(&p, &ScalingParam::uniform(c(re, 0.0)).unwrap()).unwrap();
            prop_assert!(e.is_real(0.0));
        }
    }
}
