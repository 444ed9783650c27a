//! The flat of SL(3,R)/SO(3), its A2 root system and Weyl group, and the
//! half-line of the hyperbolic plane.
//!
//! Flat coordinates `x` are orthonormal for the metric `6 * sum(dh_i^2)` on
//! trace-free diagonal matrices `diag(h1, h2, h3)`, `lambda_i = e^{h_i}`.
//! With this normalization every root has squared length 1/3 and so does
//! `rho`, which puts the bottom of the spectrum at 1/3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Which symmetric space a computation lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "H2")]
    H2,
    #[serde(rename = "SL3")]
    Sl3,
}

impl Space {
    /// Bottom of the continuous spectrum of the radial Laplacian.
    pub fn ev0(self) -> f64 {
        match self {
            Space::H2 => 0.25,
            Space::Sl3 => 1.0 / 3.0,
        }
    }

    /// Dimension of the flat.
    pub fn dim(self) -> usize {
        match self {
            Space::H2 => 1,
            Space::Sl3 => 2,
        }
    }

    /// Order of the Weyl group; inner products over the whole flat are this
    /// multiple of the chamber integral for invariant integrands.
    pub fn weyl_order(self) -> f64 {
        match self {
            Space::H2 => 2.0,
            Space::Sl3 => 6.0,
        }
    }

    /// Norm of `rho`, the exponential growth rate of the density is `2|rho|`.
    pub fn rho_norm(self) -> f64 {
        self.ev0().sqrt()
    }

    pub fn name(self) -> &'static str {
        match self {
            Space::H2 => "H2",
            Space::Sl3 => "SL3",
        }
    }
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSystemA2 {
    /// a1, a2 (simple) and a3 = a1 + a2.
    pub positive_roots: [[f64; 2]; 3],
    pub rho_vector: [f64; 2],
    pub threshold: f64,
}

pub fn build_root_system() -> RootSystemA2 {
    let a1 = [1.0 / SQRT3, 0.0];
    let a2 = [-0.5 / SQRT3, 0.5];
    let a3 = [a1[0] + a2[0], a1[1] + a2[1]];
    RootSystemA2 {
        positive_roots: [a1, a2, a3],
        // half the sum of a1, a2, a1 + a2
        rho_vector: a3,
        threshold: 1.0 / 3.0,
    }
}

/// Positive roots as a constant table, for hot loops.
pub const ROOTS: [[f64; 2]; 3] = [
    [1.0 / SQRT3, 0.0],
    [-0.5 / SQRT3, 0.5],
    [0.5 / SQRT3, 0.5],
];

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// A point of the flat in orthonormal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatPoint {
    pub x: [f64; 2],
}

impl FlatPoint {
    pub fn new(x: [f64; 2]) -> Self {
        FlatPoint { x }
    }

    pub fn origin() -> Self {
        FlatPoint { x: [0.0, 0.0] }
    }

    /// From chamber coordinates `y = (alpha1(x), alpha2(x))`.
    pub fn from_chamber(y: [f64; 2]) -> Self {
        // x = A^{-1} y with rows of A the simple roots
        let x1 = SQRT3 * y[0];
        let x2 = 2.0 * y[1] + y[0];
        FlatPoint { x: [x1, x2] }
    }

    /// From logarithms `h_i = log lambda_i` (assumed to sum to zero).
    pub fn from_logs(h: [f64; 3]) -> Self {
        FlatPoint {
            x: [SQRT3 * (h[1] - h[0]), 3.0 * h[2]],
        }
    }

    /// `y = (log(lambda2/lambda1), log(lambda3/lambda2))`.
    pub fn chamber(&self) -> [f64; 2] {
        [dot(ROOTS[0], self.x), dot(ROOTS[1], self.x)]
    }

    /// `alpha_k(x)` for the three positive roots.
    pub fn alphas(&self) -> [f64; 3] {
        [
            dot(ROOTS[0], self.x),
            dot(ROOTS[1], self.x),
            dot(ROOTS[2], self.x),
        ]
    }

    pub fn logs(&self) -> [f64; 3] {
        let [x1, x2] = self.x;
        let a = x1 / (2.0 * SQRT3);
        [-a - x2 / 6.0, a - x2 / 6.0, x2 / 3.0]
    }

    pub fn lambdas(&self) -> [f64; 3] {
        self.logs().map(f64::exp)
    }

    pub fn norm(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    pub fn in_closed_chamber(&self) -> bool {
        let [y1, y2] = self.chamber();
        y1 >= 0.0 && y2 >= 0.0
    }

    /// The Weyl image lying in the closed positive chamber.
    pub fn fold(&self) -> FlatPoint {
        let mut h = self.logs();
        h.sort_by(f64::total_cmp);
        FlatPoint::from_logs(h)
    }

    /// Image under the permutation `perm` of the diagonal entries.
    pub fn permute(&self, perm: [usize; 3]) -> FlatPoint {
        let h = self.logs();
        FlatPoint::from_logs([h[perm[0]], h[perm[1]], h[perm[2]]])
    }
}

pub const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [1, 0, 2],
    [0, 2, 1],
    [2, 1, 0],
    [1, 2, 0],
    [2, 0, 1],
];

fn check_lambdas(lambdas: [f64; 3]) -> Result<()> {
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambdas must be positive and finite, got {lambdas:?}"
        )));
    }
    let p = lambdas[0] * lambdas[1] * lambdas[2];
    if (p - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "lambdas must have product 1, got {p}"
        )));
    }
    Ok(())
}

/// Flat point of `diag(lambdas)`, moved into the closed positive chamber
/// (the triple is sorted ascending).
pub fn flat_coords(lambdas: [f64; 3]) -> Result<FlatPoint> {
    check_lambdas(lambdas)?;
    let mut h = lambdas.map(f64::ln);
    h.sort_by(f64::total_cmp);
    // remove the rounding drift of the product constraint
    let mean = (h[0] + h[1] + h[2]) / 3.0;
    Ok(FlatPoint::from_logs([h[0] - mean, h[1] - mean, h[2] - mean]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylOrbit {
    pub points: Vec<FlatPoint>,
}

impl WeylOrbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn stabilizer_order(&self) -> usize {
        6 / self.points.len()
    }
}

pub const ORBIT_TOL: f64 = 1e-12;

pub fn weyl_orbit(p: &FlatPoint) -> WeylOrbit {
    let mut points: Vec<FlatPoint> = vec![*p];
    for perm in &PERMUTATIONS[1..] {
        let q = p.permute(*perm);
        let dup = points
            .iter()
            .any(|o| (o.x[0] - q.x[0]).abs() <= ORBIT_TOL && (o.x[1] - q.x[1]).abs() <= ORBIT_TOL);
        if !dup {
            points.push(q);
        }
    }
    WeylOrbit { points }
}

/// `a(x) = prod_k |sinh(alpha_k(x))|`, normalization constant 1.
pub fn density_a(p: &FlatPoint) -> f64 {
    p.alphas().iter().map(|a| a.sinh().abs()).product()
}

/// Density of the radial measure on the hyperbolic plane.
pub fn h2_density(r: f64) -> f64 {
    r.sinh().abs()
}

/// Total boundary defining function `(sum_{i != j} lambda_i/lambda_j)^{-1}`.
pub fn boundary_rho(lambdas: [f64; 3]) -> Result<f64> {
    check_lambdas(lambdas)?;
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                s += lambdas[i] / lambdas[j];
            }
        }
    }
    Ok(1.0 / s)
}
