//! The scaling group acting on radial functions: point maps, the unitary
//! family `U_theta`, Gaussian analytic vectors and weighted inner products.
//!
//! `(U_theta f)(x) = j_theta(x)^{1/2} f(Z(x))` with
//! `j_theta = det DZ * a(Z) / a(x)`; for the uniform scaling `Z = e^theta x`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FlatPoint, Space, PERMUTATIONS, ROOTS};
use crate::operators::{check_theta, ScalingParam, Variant};
use crate::special::{gauss_legendre, sqrt_sinh_ratio, ZERO};

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTerm {
    pub center: [f64; 2],
    /// `t` in `exp(-|x - c|^2 / t)`.
    pub width: f64,
    #[serde(with = "complex_pair")]
    pub coeff: Complex64,
}

impl GaussianTerm {
    fn eval(&self, z: [Complex64; 2], dim: usize) -> Complex64 {
        let d0 = z[0] - self.center[0];
        let mut q = d0 * d0;
        if dim == 2 {
            let d1 = z[1] - self.center[1];
            q += d1 * d1;
        }
        self.coeff * (-q / self.width).exp()
    }

    /// Radius beyond which the term is below `e^{-36}` of its peak.
    pub fn support_radius(&self) -> f64 {
        self.center[0].hypot(self.center[1]) + 6.0 * self.width.sqrt()
    }
}

/// A finite Gaussian mixture on the flat; for the hyperbolic plane the
/// flat is the real line and centers are stored as `[c, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticVector {
    pub space: Space,
    pub symmetrized: bool,
    pub terms: Vec<GaussianTerm>,
}

fn orbit_points(space: Space, c: [f64; 2]) -> Vec<[f64; 2]> {
    match space {
        Space::H2 => {
            if c[0] == 0.0 {
                vec![[0.0, 0.0]]
            } else {
                vec![[c[0], 0.0], [-c[0], 0.0]]
            }
        }
        Space::Sl3 => crate::geometry::weyl_orbit(&FlatPoint::new(c))
            .points
            .iter()
            .map(|p| p.x)
            .collect(),
    }
}

pub fn make_analytic_vector(
    space: Space,
    centers: &[[f64; 2]],
    widths: &[f64],
    coeffs: &[Complex64],
    symmetrize: bool,
) -> Result<AnalyticVector> {
    if centers.len() != widths.len() || centers.len() != coeffs.len() {
        return Err(Error::InvalidInput(
            "centers, widths and coeffs must have equal length".into(),
        ));
    }
    let mut terms = Vec::new();
    for ((c, &t), &a) in centers.iter().zip(widths).zip(coeffs) {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("width must be > 0, got {t}")));
        }
        if space == Space::H2 && c[1] != 0.0 {
            return Err(Error::InvalidInput(
                "hyperbolic-plane centers must have the form [c, 0]".into(),
            ));
        }
        let pts = if symmetrize { orbit_points(space, *c) } else { vec![*c] };
        for p in pts {
            terms.push(GaussianTerm {
                center: p,
                width: t,
                coeff: a,
            });
        }
    }
    Ok(AnalyticVector {
        space,
        symmetrized: symmetrize,
        terms,
    })
}

/// Mass-one Euclidean Gaussian of width `t` at the origin of the flat.
pub fn delta_approx(space: Space, t: f64) -> Result<AnalyticVector> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be > 0, got {t}")));
    }
    let c = match space {
        Space::H2 => 1.0 / (std::f64::consts::PI * t).sqrt(),
        Space::Sl3 => 1.0 / (std::f64::consts::PI * t),
    };
    make_analytic_vector(space, &[[0.0, 0.0]], &[t], &[Complex64::new(c, 0.0)], true)
}

impl AnalyticVector {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !(t.width > 0.0) || !t.width.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "width must be > 0, got {}",
                    t.width
                )));
            }
            if self.space == Space::H2 && t.center[1] != 0.0 {
                return Err(Error::InvalidInput(
                    "hyperbolic-plane centers must have the form [c, 0]".into(),
                ));
            }
        }
        if self.symmetrized && !self.is_orbit_complete() {
            return Err(Error::InvalidInput(
                "symmetrized vector is not closed under the Weyl group".into(),
            ));
        }
        Ok(())
    }

    fn is_orbit_complete(&self) -> bool {
        self.terms.iter().all(|t| {
            orbit_points(self.space, t.center).iter().all(|p| {
                self.terms.iter().any(|u| {
                    (u.center[0] - p[0]).abs() <= 1e-12
                        && (u.center[1] - p[1]).abs() <= 1e-12
                        && u.width == t.width
                        && u.coeff == t.coeff
                })
            })
        })
    }

    pub fn eval_complex(&self, z: [Complex64; 2]) -> Complex64 {
        let d = self.space.dim();
        self.terms.iter().map(|t| t.eval(z, d)).sum()
    }

    /// `conj(f(conj z))`, the function whose values on real points are
    /// the conjugates of those of `f`.
    pub fn conjugate(&self) -> AnalyticVector {
        let mut v = self.clone();
        for t in &mut v.terms {
            t.coeff = t.coeff.conj();
        }
        v
    }

    pub fn support_radius(&self) -> f64 {
        self.terms
            .iter()
            .map(GaussianTerm::support_radius)
            .fold(0.0, f64::max)
    }

    /// Image under a Weyl group element (`k` indexes the permutations;
    /// for the hyperbolic plane odd `k` is the reflection).
    pub fn reflect(&self, k: usize) -> AnalyticVector {
        let mut v = self.clone();
        for t in &mut v.terms {
            t.center = match self.space {
                Space::H2 => {
                    if k % 2 == 1 {
                        [-t.center[0], 0.0]
                    } else {
                        t.center
                    }
                }
                Space::Sl3 => FlatPoint::new(t.center).permute(PERMUTATIONS[k % 6]).x,
            };
        }
        v
    }
}

/// A function on the real flat that quadrature and grids can sample.
pub trait RadialFunction: Sync {
    fn space(&self) -> Space;
    fn eval(&self, x: [f64; 2]) -> Complex64;
}

impl RadialFunction for AnalyticVector {
    fn space(&self) -> Space {
        self.space
    }

    fn eval(&self, x: [f64; 2]) -> Complex64 {
        self.eval_complex([Complex64::new(x[0], 0.0), Complex64::new(x[1], 0.0)])
    }
}

/// `U_{theta_1} ... U_{theta_n} f`, evaluated without simplifying the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFunction {
    pub base: AnalyticVector,
    /// Outermost scaling first.
    pub chain: Vec<ScalingParam>,
    /// Support radius `T` when an exterior scaling acts on a vector that is
    /// numerically supported in `B_T`; the vector is then cut off there.
    pub truncated_at: Option<f64>,
    /// `|Im theta| >= pi/4` somewhere in the chain.
    pub large_angle: bool,
}

impl ScaledFunction {
    pub fn total_theta(&self) -> Complex64 {
        self.chain.iter().map(|s| s.theta).sum()
    }

    fn eval_chain(&self, z: [Complex64; 2], k: usize) -> Complex64 {
        if k == self.chain.len() {
            return self.base.eval_complex(z);
        }
        let sp = &self.chain[k];
        let w = sp.w();
        let d = self.base.space.dim();
        // uniform steps only below the outermost one (checked on construction)
        match sp.variant {
            Variant::Uniform => {
                let jac = jac_sqrt_uniform(self.base.space, sp.theta, w, z);
                let wz = [w * z[0], w * z[1]];
                jac * self.eval_chain(wz, k + 1)
            }
            Variant::Exterior { .. } => {
                // z is real here
                let x = [z[0].re, z[1].re];
                let r = if d == 1 { x[0].abs() } else { x[0].hypot(x[1]) };
                if let Some(t) = self.truncated_at {
                    return if r <= t {
                        self.eval_chain(z, k + 1)
                    } else {
                        ZERO
                    };
                }
                let m = sp.radial(r);
                let jac = jac_sqrt_exterior(self.base.space, x, m.s, m.dz);
                let zx = [m.s * x[0], m.s * x[1]];
                jac * self.eval_chain(zx, k + 1)
            }
        }
    }
}

impl RadialFunction for ScaledFunction {
    fn space(&self) -> Space {
        self.base.space
    }

    fn eval(&self, x: [f64; 2]) -> Complex64 {
        self.eval_chain([Complex64::new(x[0], 0.0), Complex64::new(x[1], 0.0)], 0)
    }
}

/// `j_theta(z)^{1/2}` for the uniform scaling, analytic in `theta`.
pub fn jac_sqrt_uniform(space: Space, theta: Complex64, w: Complex64, z: [Complex64; 2]) -> Complex64 {
    match space {
        Space::H2 => (theta * 0.5).exp() * sqrt_sinh_ratio(w, z[0]),
        Space::Sl3 => {
            let mut j = theta.exp();
            for a in ROOTS {
                j *= sqrt_sinh_ratio(w, z[0] * a[0] + z[1] * a[1]);
            }
            j
        }
    }
}

/// `j^{1/2}` of the radial deformation `Z = s(r) x` at a real point.
pub fn jac_sqrt_exterior(space: Space, x: [f64; 2], s: Complex64, dz: Complex64) -> Complex64 {
    match space {
        Space::H2 => dz.sqrt() * sqrt_sinh_ratio(s, Complex64::new(x[0], 0.0)),
        Space::Sl3 => {
            let mut j = s.sqrt() * dz.sqrt();
            for a in ROOTS {
                j *= sqrt_sinh_ratio(s, Complex64::new(a[0] * x[0] + a[1] * x[1], 0.0));
            }
            j
        }
    }
}

/// `lambda_i -> lambda_i^w`. For complex `theta` only the complexified
/// flat point `e^theta x` is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPoint {
    pub lambdas: Option<[f64; 3]>,
    pub flat: [Complex64; 2],
}

pub fn scale_point(lambdas: [f64; 3], theta: Complex64) -> Result<ScaledPoint> {
    crate::geometry::boundary_rho(lambdas)?;
    let h = lambdas.map(f64::ln);
    let w = theta.exp();
    let x = FlatPoint::from_logs(h).x;
    let flat = [w * x[0], w * x[1]];
    let lambdas = if theta.im == 0.0 {
        Some(h.map(|v| (w.re * v).exp()))
    } else {
        None
    };
    Ok(ScaledPoint { lambdas, flat })
}

pub fn apply_u_theta(f: &AnalyticVector, sp: &ScalingParam) -> Result<ScaledFunction> {
    let s = ScaledFunction {
        base: f.clone(),
        chain: Vec::new(),
        truncated_at: None,
        large_angle: false,
    };
    scale_again(&s, sp)
}

/// `U_theta` applied to an already scaled function.
pub fn scale_again(f: &ScaledFunction, sp: &ScalingParam) -> Result<ScaledFunction> {
    check_theta(sp.theta)?;
    if f.chain.iter().any(|s| !s.is_uniform()) {
        return Err(Error::InvalidInput(
            "an exterior scaling must be the last one applied".into(),
        ));
    }
    let mut chain = vec![*sp];
    chain.extend(f.chain.iter().copied());
    let mut truncated_at = f.truncated_at;
    if let Variant::Exterior { cutoff } = sp.variant {
        if !f.chain.is_empty() {
            return Err(Error::InvalidInput(
                "an exterior scaling acts on unscaled vectors only".into(),
            ));
        }
        if f.base.support_radius() <= cutoff.t {
            truncated_at = Some(cutoff.t);
        }
    }
    // U_0 is the identity
    if sp.theta == ZERO {
        chain.remove(0);
    }
    let large_angle = f.large_angle || sp.large_angle();
    Ok(ScaledFunction {
        base: f.base.clone(),
        chain,
        truncated_at,
        large_angle,
    })
}

/// `sup |U_{t1}(U_{t2} f) - U_{t1 + t2} f|` over quadrature nodes.
pub fn group_law_check(theta1: f64, theta2: f64, f: &AnalyticVector) -> Result<f64> {
    let s1 = ScalingParam::uniform(Complex64::new(theta1, 0.0))?;
    let s2 = ScalingParam::uniform(Complex64::new(theta2, 0.0))?;
    let s12 = ScalingParam::uniform(Complex64::new(theta1 + theta2, 0.0))?;
    let lhs = scale_again(&apply_u_theta(f, &s2)?, &s1)?;
    let rhs = apply_u_theta(f, &s12)?;
    let rmax = decay_radius(&lhs, &rhs, f.space, Measure::Euclidean)?;
    let nodes = Quadrature::new(f.space, rmax, 4, 8, 8).nodes;
    Ok(nodes
        .iter()
        .map(|q| (lhs.eval(q.x) - rhs.eval(q.x)).norm())
        .fold(0.0, f64::max))
}

/// `|<U f, U f> - <f, f>| / <f, f>` in the invariant measure for a real
/// scaling (uniform or exterior).
pub fn unitarity_check(sp: &ScalingParam, f: &AnalyticVector) -> Result<f64> {
    if sp.theta.im != 0.0 {
        return Err(Error::InvalidInput(format!(
            "unitarity holds for real theta only, got {}",
            sp.theta
        )));
    }
    let u = apply_u_theta(f, sp)?;
    let a = inner_product(&u, &u, Measure::WeightedA)?;
    let b = inner_product(f, f, Measure::WeightedA)?;
    Ok((a - b).norm() / b.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// `a(x) dx`
    WeightedA,
    Euclidean,
}

fn measure_density(space: Space, x: [f64; 2], m: Measure) -> f64 {
    match m {
        Measure::Euclidean => 1.0,
        Measure::WeightedA => match space {
            Space::H2 => x[0].sinh().abs(),
            Space::Sl3 => crate::geometry::density_a(&FlatPoint::new(x)),
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadNode {
    pub x: [f64; 2],
    pub w: f64,
}

/// Product Gauss–Legendre rule over the whole flat truncated at `rmax`:
/// polar coordinates split at the Weyl walls for SL3, two half-lines for H2.
pub struct Quadrature {
    pub nodes: Vec<QuadNode>,
}

impl Quadrature {
    pub fn new(space: Space, rmax: f64, panels: usize, per_panel: usize, angular: usize) -> Self {
        let mut radial = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let a = rmax * p as f64 / panels as f64;
            let b = rmax * (p + 1) as f64 / panels as f64;
            radial.extend(gauss_legendre(per_panel, a, b));
        }
        let mut nodes = Vec::new();
        match space {
            Space::H2 => {
                for &(r, w) in &radial {
                    nodes.push(QuadNode { x: [r, 0.0], w });
                    nodes.push(QuadNode { x: [-r, 0.0], w });
                }
            }
            Space::Sl3 => {
                let third = std::f64::consts::FRAC_PI_3;
                for sector in 0..6 {
                    let a0 = std::f64::consts::FRAC_PI_6 + third * sector as f64;
                    for (phi, wa) in gauss_legendre(angular, a0, a0 + third) {
                        let (s, c) = phi.sin_cos();
                        for &(r, wr) in &radial {
                            nodes.push(QuadNode {
                                x: [r * c, r * s],
                                w: wa * wr * r,
                            });
                        }
                    }
                }
            }
        }
        Quadrature { nodes }
    }
}

const DECAY_CAP: f64 = 400.0;

/// Radius past which `|f g| dmu` is below `1e-18` of its peak, found by
/// scanning rays.
fn decay_radius(f: &dyn RadialFunction, g: &dyn RadialFunction, space: Space, m: Measure) -> Result<f64> {
    let dirs: Vec<[f64; 2]> = match space {
        Space::H2 => vec![[1.0, 0.0], [-1.0, 0.0]],
        Space::Sl3 => (0..24)
            .map(|k| {
                let a = std::f64::consts::TAU * (k as f64 + 0.5) / 24.0;
                [a.cos(), a.sin()]
            })
            .collect(),
    };
    let dr = 0.01;
    let mut peak: f64 = 0.0;
    let mut last_big: f64 = 0.0;
    let mut r = 0.0;
    while r <= DECAY_CAP {
        for d in &dirs {
            let x = [r * d[0], r * d[1]];
            // the density vanishes on walls; bound it below so the scan
            // still sees the functions there
            let dens = measure_density(space, x, m).max(1e-300);
            let val = f.eval(x).norm() * g.eval(x).norm() * dens * r.max(1e-3);
            if val.is_nan() {
                return Err(Error::Accuracy {
                    what: format!("integrand is not finite at radius {r}"),
                    previous: ZERO,
                    last: ZERO,
                });
            }
            peak = peak.max(val);
            if val > 1e-18 * peak {
                last_big = r;
            }
        }
        if r > last_big + 5.0 && r > 2.0 {
            return Ok(last_big + 0.5);
        }
        r += dr;
    }
    Err(Error::Accuracy {
        what: format!("integrand does not decay within radius {DECAY_CAP}"),
        previous: ZERO,
        last: ZERO,
    })
}

pub const QUAD_RTOL: f64 = 1e-10;

/// `<f, g> = integral conj(f) g dmu` over the whole flat, refined until the
/// relative change drops below `1e-10`.
pub fn inner_product(f: &dyn RadialFunction, g: &dyn RadialFunction, m: Measure) -> Result<Complex64> {
    if f.space() != g.space() {
        return Err(Error::InvalidInput("vectors live on different spaces".into()));
    }
    let space = f.space();
    let rmax = decay_radius(f, g, space, m)?;
    let panels0 = ((rmax / 1.0).ceil() as usize).max(4);
    let eval = |panels: usize, ang: usize| -> Complex64 {
        let q = Quadrature::new(space, rmax, panels, 12, ang);
        let mut s = ZERO;
        for n in &q.nodes {
            let d = measure_density(space, n.x, m);
            if d != 0.0 {
                s += f.eval(n.x).conj() * g.eval(n.x) * (d * n.w);
            }
        }
        s
    };
    let mut prev = eval(panels0, 12);
    let mut level = 1;
    loop {
        let cur = eval(panels0 << level, 12 << level.min(3));
        let scale = cur.norm().max(prev.norm());
        if (cur - prev).norm() <= QUAD_RTOL * scale || scale == 0.0 {
            return Ok(cur);
        }
        if level >= 4 {
            return Err(Error::Accuracy {
                what: "inner product quadrature".into(),
                previous: prev,
                last: cur,
            });
        }
        prev = cur;
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::CutoffProfile;
    use crate::special::{c, ONE};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn gauss(space: Space, center: [f64; 2], t: f64, sym: bool) -> AnalyticVector {
        make_analytic_vector(space, &[center], &[t], &[ONE], sym).unwrap()
    }

    #[test]
    fn make_vector_orbits() {
        assert_eq!(gauss(Space::Sl3, [0.0, 0.0], 1.0, true).terms.len(), 1);
        let v = gauss(Space::Sl3, [0.4, 1.1], 1.0, true);
        assert_eq!(v.terms.len(), 6);
        v.validate().unwrap();
        assert_eq!(gauss(Space::H2, [0.5, 0.0], 1.0, true).terms.len(), 2);
        assert!(make_analytic_vector(Space::Sl3, &[[0.0, 0.0]], &[0.0], &[ONE], false).is_err());
    }

    #[test]
    fn heat_constant_normalizes_mass() {
        for space in [Space::H2, Space::Sl3] {
            for t in [0.3, 1.0] {
                let d = delta_approx(space, t).unwrap();
                let one = gauss(space, [0.0, 0.0], 1e12, false);
                let m = inner_product(&one, &d, Measure::Euclidean).unwrap();
                assert!((m - 1.0).norm() < 1e-10, "{space} {t} {m}");
            }
        }
    }

    #[test]
    fn delta_pairing_converges_at_rate_t() {
        let f = make_analytic_vector(Space::Sl3, &[[0.5, 0.2]], &[2.0], &[ONE], false).unwrap();
        let f0 = f.eval([0.0, 0.0]);
        let e: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&t| {
                let d = delta_approx(Space::Sl3, t).unwrap();
                (inner_product(&d, &f, Measure::Euclidean).unwrap() - f0).norm()
            })
            .collect();
        let ratio = e[0] / e[1];
        assert!(ratio > 8.0 && ratio < 12.0, "{e:?}");
    }

    #[test]
    fn u_zero_is_identity() {
        let f = gauss(Space::Sl3, [0.3, 0.7], 0.8, true);
        let s = apply_u_theta(&f, &ScalingParam::identity()).unwrap();
        assert!(s.chain.is_empty());
        assert_eq!(s.eval([0.4, 0.1]), f.eval([0.4, 0.1]));
    }

    #[test]
    fn real_scaling_of_centered_gaussian() {
        let t = 1.3;
        let th = 0.4f64;
        let f = gauss(Space::Sl3, [0.0, 0.0], t, true);
        let s = apply_u_theta(&f, &ScalingParam::uniform(c(th, 0.0)).unwrap()).unwrap();
        let x = [0.7, -0.4];
        let w = th.exp();
        let p = FlatPoint::new(x);
        let q = FlatPoint::new([w * x[0], w * x[1]]);
        let j = w * w * crate::geometry::density_a(&q) / crate::geometry::density_a(&p);
        let r2 = x[0] * x[0] + x[1] * x[1];
        let want = j.sqrt() * (-r2 / (t * (-2.0 * th).exp())).exp();
        assert!((s.eval(x) - want).norm() < 1e-13);
    }

    #[test]
    fn scale_point_examples() {
        let id = scale_point([1.0, 1.0, 1.0], c(0.3, 0.2)).unwrap();
        assert_eq!(id.flat, [ZERO, ZERO]);
        let p = scale_point([4.0, 1.0, 0.25], c(2f64.ln(), 0.0)).unwrap();
        let l = p.lambdas.unwrap();
        assert!((l[0] - 16.0).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-15 && (l[2] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn unitarity_and_group_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for space in [Space::H2, Space::Sl3] {
            let rv = |rng: &mut rand_chacha::ChaCha8Rng| {
                let c0 = [rng.gen_range(0.0..1.5), if space == Space::Sl3 { rng.gen_range(0.0..1.5) } else { 0.0 }];
                make_analytic_vector(space, &[c0], &[rng.gen_range(0.5..2.0)], &[c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))], true)
                    .unwrap()
            };
            let f = rv(&mut rng);
            let g = rv(&mut rng);
            let sp = ScalingParam::uniform(c(0.3, 0.0)).unwrap();
            let a = inner_product(&apply_u_theta(&f, &sp).unwrap(), &apply_u_theta(&g, &sp).unwrap(), Measure::WeightedA).unwrap();
            let b = inner_product(&f, &g, Measure::WeightedA).unwrap();
            assert!((a - b).norm() <= 1e-8, "{space}: {a} vs {b}");
            assert!(group_law_check(0.1, 0.3, &f).unwrap() <= 1e-10);
            assert!(group_law_check(0.2, -0.2, &f).unwrap() <= 1e-10);
            assert_eq!(group_law_check(0.0, 0.0, &f).unwrap(), 0.0);
        }
    }

    #[test]
    fn exterior_scaling_fixes_vectors_inside_the_ball() {
        let f = gauss(Space::Sl3, [0.5, 0.3], 0.5, true);
        let cp = CutoffProfile::new(f.support_radius() + 0.1, 2.0).unwrap();
        let sp = ScalingParam::exterior(c(0.0, 0.9), cp).unwrap();
        let s = apply_u_theta(&f, &sp).unwrap();
        assert!(s.large_angle);
        for x in [[0.1, 0.2], [2.0, -3.0], [6.0, 1.0], [20.0, 5.0]] {
            assert!((s.eval(x) - f.eval(x)).norm() <= 1e-12);
        }
        // a real exterior scaling is unitary as well
        let g = gauss(Space::Sl3, [1.0, 0.0], 1.5, true);
        let cp = CutoffProfile::new(1.0, 1.5).unwrap();
        let sp = ScalingParam::exterior(c(0.25, 0.0), cp).unwrap();
        let a = inner_product(&apply_u_theta(&g, &sp).unwrap(), &apply_u_theta(&g, &sp).unwrap(), Measure::WeightedA).unwrap();
        let b = inner_product(&g, &g, Measure::WeightedA).unwrap();
        assert!((a - b).norm() <= 1e-8 * b.norm());
    }

    #[test]
    fn scaled_vectors_stay_weyl_symmetric() {
        let f = gauss(Space::Sl3, [0.4, 0.9], 0.7, true);
        let s = apply_u_theta(&f, &ScalingParam::uniform(c(0.1, 0.5)).unwrap()).unwrap();
        let p = FlatPoint::new([0.8, 0.3]);
        let v = s.eval(p.x);
        for perm in PERMUTATIONS {
            assert!((s.eval(p.permute(perm).x) - v).norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn scaled_evaluation_is_analytic_in_theta() {
        let f = gauss(Space::Sl3, [0.4, 0.9], 0.7, true);
        let x = [0.9, 0.4];
        let eps = 1e-5;
        for th in [c(0.0, 0.3), c(0.2, -1.2), c(-0.1, 1.4)] {
            let u = |t: Complex64| apply_u_theta(&f, &ScalingParam::uniform(t).unwrap()).unwrap().eval(x);
            let dre = (u(th + eps) - u(th - eps)) / (2.0 * eps);
            let dim = (u(th + c(0.0, eps)) - u(th - c(0.0, eps))) / (2.0 * eps);
            assert!((dim - c(0.0, 1.0) * dre).norm() <= 1e-6 * (1.0 + dre.norm()));
        }
    }

    #[test]
    fn serialization_round_trip() {
        let f = gauss(Space::Sl3, [0.4, 0.9], 0.7, true);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"coeff\":[1.0,0.0]"));
        let g: AnalyticVector = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<AnalyticVector>(r#"{"space":"H2","symmetrized":false,"terms":[],"x":1}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn inner_product_is_hermitian(a in 0.0f64..1.5, b in 0.0f64..1.5, t in 0.4f64..2.0, im in -1.0f64..1.0) {
            let f = make_analytic_vector(Space::Sl3, &[[a, b]], &[t], &[c(1.0, im)], true).unwrap();
            let g = make_analytic_vector(Space::Sl3, &[[b, 0.3]], &[1.0], &[c(0.5, 0.0)], true).unwrap();
            let fg = inner_product(&f, &g, Measure::WeightedA).unwrap();
            let gf = inner_product(&g, &f, Measure::WeightedA).unwrap();
            prop_assert!((fg - gf.conj()).norm() <= 1e-10 * (1.0 + fg.norm()));
            let ff = inner_product(&f, &f, Measure::WeightedA).unwrap();
            prop_assert!(ff.re > 0.0 && ff.im.abs() <= 1e-12 * ff.re);
        }
    }
}
