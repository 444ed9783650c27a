//! Cell-centered grids on the half-line and on the truncated positive Weyl
//! chamber, and finite-difference assembly of scaled radial operators.
//!
//! SL3 grids live on the lattice `y = ((i+1/2)h, (j+1/2)h)` in chamber
//! coordinates `y = (alpha_1(x), alpha_2(x))`; the nearest neighbours in
//! the directions `(1,0)`, `(0,1)` and `(1,-1)` give a 7-point stencil for
//! the full second-order part.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{density_a, FlatPoint, Space, ROOTS};
use crate::operators::{
    h2_flux_weights, sl3_flux_weights, to_chamber_coefficients, CoefficientSet, OperatorForm,
    ScalingParam,
};
use crate::scaling::{AnalyticVector, RadialFunction};
use crate::sparse::CsrMatrix;
use crate::special::{c, ONE, ZERO};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub space: Space,
    /// Edge length of the lattice on the flat.
    pub h: f64,
    /// Lattice step in the coordinate the grid is built in: `h` on the
    /// half-line, `h/2` in chamber coordinates (lattice edges have length
    /// `2 * step` on the flat there).
    pub step: f64,
    pub radius: f64,
    /// Node positions on the flat (`[r, 0]` on the half-line).
    pub nodes: Vec<[f64; 2]>,
    /// Lattice indices `(i, j)`; `j = 0` on the half-line.
    pub index: Vec<(usize, usize)>,
    /// `a(x) * cell * |W|`: the discrete `a dx` measure over the whole flat.
    pub measure_weights: Vec<f64>,
    /// Area (length) of one cell on the flat.
    pub cell: f64,
    dims: (usize, usize),
    lookup: Vec<Option<usize>>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node index at lattice position `(i, j)`, if inside the truncation.
    pub fn at(&self, i: i64, j: i64) -> Option<usize> {
        let (ni, nj) = self.dims;
        if i < 0 || j < 0 || i as usize >= ni || j as usize >= nj {
            return None;
        }
        self.lookup[i as usize * nj + j as usize]
    }

    /// `|W|`: 2 for the hyperbolic plane, 6 for SL3.
    pub fn weyl_order(&self) -> f64 {
        self.space.weyl_order()
    }

    /// Radius of node `k` on the flat.
    pub fn node_radius(&self, k: usize) -> f64 {
        self.nodes[k][0].hypot(self.nodes[k][1])
    }

    /// Discrete `sum |f|^2 a dx` over the flat.
    pub fn weighted_norm_sq(&self, f: &[Complex64]) -> f64 {
        f.iter()
            .zip(&self.measure_weights)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum()
    }
}

pub fn build_grid(space: Space, h: f64, radius: f64) -> Result<Grid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("h must be > 0, got {h}")));
    }
    if !(radius > 2.0 * h) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!(
            "R must exceed 2h = {}, got {radius}",
            2.0 * h
        )));
    }
    let mut nodes = Vec::new();
    let mut index = Vec::new();
    let mut measure_weights = Vec::new();
    let wo = space.weyl_order();
    match space {
        Space::H2 => {
            let n = (radius / h - 0.5).ceil() as usize;
            for j in 0..n {
                let r = (j as f64 + 0.5) * h;
                nodes.push([r, 0.0]);
                index.push((j, 0));
                measure_weights.push(r.sinh() * h * wo);
            }
            let lookup = (0..n).map(Some).collect();
            Ok(Grid {
                space,
                h,
                step: h,
                radius,
                nodes,
                index,
                measure_weights,
                cell: h,
                dims: (n, 1),
                lookup,
            })
        }
        Space::Sl3 => {
            let st = 0.5 * h;
            let ni = (radius / (SQRT3 * st)).ceil() as usize + 1;
            let nj = (radius / (2.0 * st)).ceil() as usize + 1;
            let cell = 2.0 * SQRT3 * st * st;
            let mut lookup = vec![None; ni * nj];
            for i in 0..ni {
                for j in 0..nj {
                    let p = FlatPoint::from_chamber([(i as f64 + 0.5) * st, (j as f64 + 0.5) * st]);
                    if p.norm() <= radius {
                        lookup[i * nj + j] = Some(nodes.len());
                        nodes.push(p.x);
                        index.push((i, j));
                        measure_weights.push(density_a(&p) * cell * wo);
                    }
                }
            }
            Ok(Grid {
                space,
                h,
                step: st,
                radius,
                nodes,
                index,
                measure_weights,
                cell,
                dims: (ni, nj),
                lookup,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryConditions {
    /// Even reflection across Weyl walls (and `r = 0`), Dirichlet outside `R`.
    #[default]
    ReflectWallsDirichletOuter,
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: CsrMatrix,
    pub grid: Grid,
    pub scaling: ScalingParam,
    pub form: OperatorForm,
    pub bc: BoundaryConditions,
    /// Weights of the bilinear pairing `sum f_j g_j weights_j` in which the
    /// matrix is complex symmetric (for the flux forms).
    pub weights: Vec<Complex64>,
    /// Scaled contour point `Z(x_j)` of each node.
    pub contour: Vec<[Complex64; 2]>,
    /// `det DZ * cell * |W|`: Euclidean measure along the contour.
    pub euclid_weights: Vec<Complex64>,
    /// Per-node factor applied to contour samples (`sqrt(sigma)` for the
    /// symmetrized form, otherwise 1).
    pub sample_scale: Vec<Complex64>,
    /// Frobenius norm of the correction made by the real-theta
    /// symmetrization step, when it ran.
    pub symmetrization_correction: Option<f64>,
}

impl AssembledOperator {
    pub fn theta(&self) -> Complex64 {
        self.scaling.theta
    }

    pub fn len(&self) -> usize {
        self.matrix.n
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n == 0
    }

    /// `f(Z(x_j))` at every node, in the picture the matrix acts on.
    pub fn sample(&self, f: &AnalyticVector) -> Vec<Complex64> {
        self.contour
            .iter()
            .zip(&self.sample_scale)
            .map(|(z, s)| f.eval_complex(*z) * s)
            .collect()
    }

    /// Samples of a function given only on real points; valid where the
    /// contour is real, i.e. inside the undeformed ball of an exterior
    /// scaling.
    pub fn sample_real(&self, f: &dyn RadialFunction) -> Vec<Complex64> {
        self.grid
            .nodes
            .iter()
            .zip(&self.sample_scale)
            .map(|(x, s)| f.eval(*x) * s)
            .collect()
    }

    /// Bilinear pairing `sum a_j b_j weights_j`.
    pub fn pairing(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    /// Relative defect `|W A - A^T W|_F / |W A|_F` with `W` the pairing weights.
    pub fn self_adjointness_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m.n {
            for (j, v) in m.row(i) {
                let wa = self.weights[i] * v;
                let at = self.weights[j] * m.get(j, i);
                num += (wa - at).norm_sqr();
                den += wa.norm_sqr();
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    /// Share of `sum |v|^2 |w|` carried by nodes with `|x| > 0.8 R`.
    pub fn outer_mass_fraction(&self, v: &[Complex64]) -> f64 {
        let cut = 0.8 * self.grid.radius;
        let mut tot = 0.0;
        let mut outer = 0.0;
        for (k, x) in v.iter().enumerate() {
            let m = x.norm_sqr() * self.weights[k].norm();
            tot += m;
            if self.grid.node_radius(k) > cut {
                outer += m;
            }
        }
        if tot == 0.0 {
            0.0
        } else {
            outer / tot
        }
    }

    pub fn write_matrix_market<W: Write>(&self, out: W) -> Result<()> {
        self.matrix.write_matrix_market(out)
    }
}

/// Pointwise values at the grid nodes.
pub fn project_vector(f: &dyn RadialFunction, grid: &Grid) -> Result<Vec<Complex64>> {
    if f.space() != grid.space {
        return Err(Error::InvalidInput(format!(
            "vector lives on {} but the grid on {}",
            f.space(),
            grid.space
        )));
    }
    Ok(grid.nodes.iter().map(|x| f.eval(*x)).collect())
}

pub fn assemble_operator(
    coeffs: &CoefficientSet,
    grid: &Grid,
    bc: BoundaryConditions,
) -> Result<AssembledOperator> {
    if coeffs.space != grid.space {
        return Err(Error::InvalidInput(format!(
            "coefficients are for {} but the grid is on {}",
            coeffs.space, grid.space
        )));
    }
    let sp = coeffs.scaling;
    let n = grid.len();
    let wo = grid.weyl_order();
    let mut contour = Vec::with_capacity(n);
    let mut euclid_weights = Vec::with_capacity(n);
    for k in 0..n {
        let x = grid.nodes[k];
        let m = sp.radial(grid.node_radius(k));
        if m.dz.norm() < 1e-10 {
            return Err(Error::DegenerateContour {
                r: grid.node_radius(k),
                derivative: m.dz.norm(),
            });
        }
        contour.push([m.s * x[0], m.s * x[1]]);
        let det = match grid.space {
            Space::H2 => m.dz,
            Space::Sl3 => m.s * m.dz,
        };
        euclid_weights.push(det * grid.cell * wo);
    }
    let sigma: Vec<Complex64> = grid
        .nodes
        .iter()
        .map(|&x| match grid.space {
            Space::H2 => h2_flux_weights(x[0], &sp).0,
            Space::Sl3 => sl3_flux_weights(x, &sp).0,
        })
        .collect();
    let native: Vec<Complex64> = sigma.iter().map(|s| s * grid.cell * wo).collect();

    let (matrix, weights, sample_scale) = match (grid.space, coeffs.form) {
        (Space::H2, OperatorForm::Flux) => (h2_flux(grid, &sp, &sigma), native, vec![ONE; n]),
        (Space::H2, OperatorForm::Drift) => (h2_drift(grid, coeffs)?, native, vec![ONE; n]),
        (Space::H2, OperatorForm::Symmetrized) => {
            let a = h2_flux(grid, &sp, &sigma);
            let mut rows = vec![Vec::new(); n];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, v) in a.row(i) {
                    row.push((j, v * (sigma[i] / sigma[j]).sqrt()));
                }
            }
            let scale: Vec<Complex64> = sigma.iter().map(|s| s.sqrt()).collect();
            let w = vec![c(grid.cell * wo, 0.0); n];
            (CsrMatrix::from_rows(rows), w, scale)
        }
        (Space::Sl3, OperatorForm::Flux) => (sl3_flux(grid, &sp, &sigma), native, vec![ONE; n]),
        (Space::Sl3, OperatorForm::Drift) => (sl3_drift(grid, coeffs)?, native, vec![ONE; n]),
        (Space::Sl3, OperatorForm::Symmetrized) => {
            return Err(Error::InvalidInput(
                "the symmetrized form exists for the hyperbolic plane only".into(),
            ))
        }
    };

    let mut op = AssembledOperator {
        matrix,
        grid: grid.clone(),
        scaling: sp,
        form: coeffs.form,
        bc,
        weights,
        contour,
        euclid_weights,
        sample_scale,
        symmetrization_correction: None,
    };
    if sp.theta.im == 0.0 {
        symmetrize(&mut op);
    }
    Ok(op)
}

/// `A <- (A + W^-1 A^T W) / 2` for real-coefficient operators.
fn symmetrize(op: &mut AssembledOperator) {
    let m = &op.matrix;
    let mut values = m.values.clone();
    let mut corr = 0.0;
    for i in 0..m.n {
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            let j = m.col_idx[k];
            let sym = 0.5 * (m.values[k] + m.get(j, i) * op.weights[j] / op.weights[i]);
            corr += (sym - m.values[k]).norm_sqr();
            values[k] = sym;
        }
    }
    op.matrix.values = values;
    op.symmetrization_correction = Some(corr.sqrt());
}

/// `-(1/sigma)(kappa f')'` with faces at `jh`; `kappa(0) = 0` gives the even
/// condition at the origin and the last face carries an odd ghost.
fn h2_flux(grid: &Grid, sp: &ScalingParam, sigma: &[Complex64]) -> CsrMatrix {
    let n = grid.len();
    let h = grid.step;
    let kappa: Vec<Complex64> = (0..=n)
        .map(|f| {
            if f == 0 {
                ZERO
            } else {
                h2_flux_weights(f as f64 * h, sp).1
            }
        })
        .collect();
    let rows = (0..n)
        .map(|j| {
            let s = sigma[j] * h * h;
            let (kl, kr) = (kappa[j], kappa[j + 1]);
            let mut row = Vec::with_capacity(3);
            if j > 0 {
                row.push((j - 1, -kl / s));
            }
            if j + 1 < n {
                row.push((j, (kl + kr) / s));
                row.push((j + 1, -kr / s));
            } else {
                row.push((j, (kl + 2.0 * kr) / s));
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

fn h2_drift(grid: &Grid, coeffs: &CoefficientSet) -> Result<CsrMatrix> {
    let n = grid.len();
    let h = grid.step;
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let e = coeffs.at(grid.nodes[j])?;
        let a = e.second_order[0][0] / (h * h);
        let b = e.first_order[0] / (2.0 * h);
        let lo = a - b;
        let hi = a + b;
        let mut diag = -2.0 * a + e.zeroth_order;
        let mut row = Vec::with_capacity(3);
        // even ghost at the origin, odd ghost past the outer face
        if j == 0 {
            diag += lo;
        } else {
            row.push((j - 1, lo));
        }
        if j + 1 < n {
            row.push((j + 1, hi));
        } else {
            diag -= hi;
        }
        row.push((j, diag));
        rows.push(row);
    }
    Ok(CsrMatrix::from_rows(rows))
}

/// Lattice steps of the 7-point stencil: `+-(1,0)`, `+-(0,1)`, `+-(1,-1)`.
const STEPS: [(i64, i64, usize); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 1),
    (0, -1, 1),
    (1, -1, 2),
    (-1, 1, 2),
];

/// Edge weights of a symmetric 2x2 tensor along the three step families.
fn edge_weights(k: [[Complex64; 2]; 2]) -> [Complex64; 3] {
    [k[0][0] + k[0][1], k[1][1] + k[0][1], -k[0][1]]
}

/// `J K J^T` with the rows of `J` the simple roots.
fn to_chamber_tensor(k: [[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let j = [ROOTS[0], ROOTS[1]];
    let mut out = [[ZERO; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    out[p][q] += k[a][b] * j[p][a] * j[q][b];
                }
            }
        }
    }
    out
}

fn chamber_point(i: f64, j: f64, h: f64) -> [f64; 2] {
    FlatPoint::from_chamber([(i + 0.5) * h, (j + 0.5) * h]).x
}

/// `-(1/sigma) div(K grad)` on the chamber lattice. Edges leaving the
/// chamber carry no flux (the conductance vanishes on walls); edges leaving
/// the truncation see a zero ghost.
fn sl3_flux(grid: &Grid, sp: &ScalingParam, sigma: &[Complex64]) -> CsrMatrix {
    let h = grid.step;
    let rows = (0..grid.len())
        .map(|p| {
            let (i, j) = grid.index[p];
            let (i, j) = (i as i64, j as i64);
            let s = sigma[p] * h * h;
            let mut diag = ZERO;
            let mut row = Vec::with_capacity(7);
            for &(di, dj, fam) in &STEPS {
                let (qi, qj) = (i + di, j + dj);
                if qi < 0 || qj < 0 {
                    continue;
                }
                let mid = chamber_point(i as f64 + 0.5 * di as f64, j as f64 + 0.5 * dj as f64, h);
                let k = to_chamber_tensor(sl3_flux_weights(mid, sp).1);
                let cw = edge_weights(k)[fam] / s;
                diag += cw;
                if let Some(q) = grid.at(qi, qj) {
                    row.push((q, -cw));
                }
            }
            row.push((p, diag));
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

/// Value of the lattice function at `(i, j)` as a combination of nodes: the
/// point is folded into the chamber and interpolated bilinearly; nodes
/// outside the truncation contribute zero.
fn ghost_combo(grid: &Grid, i: i64, j: i64) -> Vec<(usize, f64)> {
    if i >= 0 && j >= 0 {
        return grid.at(i, j).map(|q| vec![(q, 1.0)]).unwrap_or_default();
    }
    let h = grid.step;
    let y = FlatPoint::new(chamber_point(i as f64, j as f64, h))
        .fold()
        .chamber();
    let u = (y[0] / h - 0.5).max(0.0);
    let v = (y[1] / h - 0.5).max(0.0);
    let (i0, j0) = (u.floor(), v.floor());
    let (fu, fv) = (u - i0, v - j0);
    let (i0, j0) = (i0 as i64, j0 as i64);
    let mut out = Vec::with_capacity(4);
    for (a, b, w) in [
        (0, 0, (1.0 - fu) * (1.0 - fv)),
        (1, 0, fu * (1.0 - fv)),
        (0, 1, (1.0 - fu) * fv),
        (1, 1, fu * fv),
    ] {
        if w > 1e-14 {
            if let Some(q) = grid.at(i0 + a, j0 + b) {
                out.push((q, w));
            }
        }
    }
    out
}

/// Centered differences of the coth-drift coefficients in chamber
/// coordinates. The pattern contains the transpose pattern so it is the
/// same for every scaling.
fn sl3_drift(grid: &Grid, coeffs: &CoefficientSet) -> Result<CsrMatrix> {
    let h = grid.step;
    let n = grid.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    for p in 0..n {
        let e = to_chamber_coefficients(&coeffs.at(grid.nodes[p])?);
        let (i, j) = grid.index[p];
        let (i, j) = (i as i64, j as i64);
        let cw = edge_weights(e.second_order);
        let mut diag = e.zeroth_order;
        for &(di, dj, fam) in &STEPS {
            let mut w = cw[fam] / (h * h);
            if dj == 0 {
                w += e.first_order[0] * (di as f64 / (2.0 * h));
            } else if di == 0 {
                w += e.first_order[1] * (dj as f64 / (2.0 * h));
            }
            diag -= w;
            for (q, t) in ghost_combo(grid, i + di, j + dj) {
                rows[p].push((q, w * t));
            }
        }
        rows[p].push((p, diag));
    }
    let mut full = rows.clone();
    for (p, row) in rows.iter().enumerate() {
        for &(q, _) in row {
            full[q].push((p, ZERO));
        }
    }
    Ok(CsrMatrix::from_rows(full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{inner_product, make_analytic_vector, Measure};

    fn op(space: Space, h: f64, r: f64, theta: Complex64, form: OperatorForm) -> AssembledOperator {
        let g = build_grid(space, h, r).unwrap();
        let cs = CoefficientSet::new(space, ScalingParam::uniform(theta).unwrap(), form).unwrap();
        assemble_operator(&cs, &g, BoundaryConditions::default()).unwrap()
    }

    #[test]
    fn half_line_nodes() {
        let g = build_grid(Space::H2, 0.5, 2.0).unwrap();
        let r: Vec<f64> = g.nodes.iter().map(|x| x[0]).collect();
        assert_eq!(r, vec![0.25, 0.75, 1.25, 1.75]);
        assert!(build_grid(Space::H2, -0.1, 2.0).is_err());
        assert!(build_grid(Space::H2, 1.0, 2.0).is_err());
    }

    #[test]
    fn chamber_nodes_are_off_the_walls() {
        let g = build_grid(Space::Sl3, 0.2, 4.0).unwrap();
        for x in &g.nodes {
            let a = FlatPoint::new(*x).alphas();
            assert!(a[0] > 0.0 && a[1] > 0.0);
            assert!(x[0].hypot(x[1]) <= 4.0);
        }
        assert!(g.measure_weights.iter().all(|&w| w > 0.0));
        let g2 = build_grid(Space::Sl3, 0.1, 4.0).unwrap();
        let ratio = g2.len() as f64 / g.len() as f64;
        assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
        let l1 = build_grid(Space::H2, 0.1, 4.0).unwrap().len();
        let l2 = build_grid(Space::H2, 0.05, 4.0).unwrap().len();
        assert_eq!(l2, 2 * l1);
    }

    #[test]
    fn drift_form_annihilates_constants() {
        for space in [Space::H2, Space::Sl3] {
            let h = if space == Space::H2 { 0.05 } else { 0.2 };
            let a = op(space, h, 6.0, c(0.0, 0.3), OperatorForm::Drift);
            let ones = vec![ONE; a.len()];
            let res = a.matrix.matvec(&ones);
            let scale = a.matrix.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (k, v) in res.iter().enumerate() {
                if a.grid.node_radius(k) < 6.0 - 3.0 * h {
                    assert!(v.norm() <= 1e-12 * scale, "{space} node {k}: {v}");
                }
            }
        }
    }

    #[test]
    fn flux_form_annihilates_constants_inside() {
        let a = op(Space::Sl3, 0.2, 6.0, c(0.0, 0.3), OperatorForm::Flux);
        let res = a.matrix.matvec(&vec![ONE; a.len()]);
        for (k, v) in res.iter().enumerate() {
            if a.grid.node_radius(k) < 5.0 {
                assert!(v.norm() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn four_node_matrices_by_hand() {
        // drift: -f'' - coth(r) f', even ghost at 0, odd ghost at r = 2
        let a = op(Space::H2, 0.5, 2.0, ZERO, OperatorForm::Drift);
        let h: f64 = 0.5;
        let r: [f64; 4] = [0.25, 0.75, 1.25, 1.75];
        let mut want = vec![vec![0.0; 4]; 4];
        for j in 0..4 {
            let lo = -1.0 / (h * h) + 1.0 / r[j].tanh() / (2.0 * h);
            let hi = -1.0 / (h * h) - 1.0 / r[j].tanh() / (2.0 * h);
            want[j][j] = 2.0 / (h * h);
            if j == 0 {
                want[j][j] += lo;
            } else {
                want[j][j - 1] = lo;
            }
            if j == 3 {
                want[j][j] -= hi;
            } else {
                want[j][j + 1] = hi;
            }
        }
        // real theta: the symmetrization step then acts; undo by comparing
        // against the symmetrized oracle
        let s: Vec<f64> = r.iter().map(|x: &f64| x.sinh()).collect();
        let mut sym = want.clone();
        for i in 0..4 {
            for j in 0..4 {
                sym[i][j] = 0.5 * (want[i][j] + want[j][i] * s[j] / s[i]);
            }
        }
        let d = a.matrix.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((d[i][j].re - sym[i][j]).abs() < 1e-12, "{i} {j}");
                assert_eq!(d[i][j].im, 0.0);
            }
        }

        // flux: faces at 0.5, 1, 1.5, 2 with kappa = sinh, sigma = sinh
        let f = op(Space::H2, 0.5, 2.0, ZERO, OperatorForm::Flux);
        let k = |x: f64| x.sinh();
        let d = f.matrix.to_dense();
        let w = [
            [k(0.5), -k(0.5), 0.0, 0.0],
            [-k(0.5), k(0.5) + k(1.0), -k(1.0), 0.0],
            [0.0, -k(1.0), k(1.0) + k(1.5), -k(1.5)],
            [0.0, 0.0, -k(1.5), k(1.5) + 2.0 * k(2.0)],
        ];
        for i in 0..4 {
            for j in 0..4 {
                let want = w[i][j] / (s[i] * h * h);
                assert!((d[i][j].re - want).abs() < 1e-12 * (1.0 + want.abs()), "{i} {j}");
            }
        }
    }

    #[test]
    fn real_theta_sl3_is_self_adjoint_after_symmetrization() {
        for form in [OperatorForm::Flux, OperatorForm::Drift] {
            let a = op(Space::Sl3, 0.25, 5.0, ZERO, form);
            assert!(a.symmetrization_correction.is_some());
            assert!(a.self_adjointness_defect() <= 1e-10, "{form:?}");
        }
        // the flux form is complex symmetric in its own weights at any theta
        let a = op(Space::Sl3, 0.25, 5.0, c(0.0, 0.4), OperatorForm::Flux);
        assert!(a.symmetrization_correction.is_none());
        assert!(a.self_adjointness_defect() <= 1e-12);
    }

    #[test]
    fn sparsity_pattern_does_not_depend_on_theta() {
        for (space, form) in [
            (Space::H2, OperatorForm::Flux),
            (Space::H2, OperatorForm::Drift),
            (Space::H2, OperatorForm::Symmetrized),
            (Space::Sl3, OperatorForm::Flux),
            (Space::Sl3, OperatorForm::Drift),
        ] {
            let h = if space == Space::H2 { 0.1 } else { 0.3 };
            let a0 = op(space, h, 6.0, ZERO, form);
            let a1 = op(space, h, 6.0, c(0.0, 0.45), form);
            assert!(a0.matrix.same_pattern(&a1.matrix), "{space} {form:?}");
            let mut b0 = Vec::new();
            let mut b1 = Vec::new();
            a0.matrix.write_matrix_market(&mut b0).unwrap();
            a1.matrix.write_matrix_market(&mut b1).unwrap();
            let pat = |b: &[u8]| -> Vec<String> {
                String::from_utf8(b.to_vec())
                    .unwrap()
                    .lines()
                    .map(|l| l.split(' ').take(2).collect::<Vec<_>>().join(" "))
                    .collect()
            };
            assert_eq!(pat(&b0), pat(&b1));
        }
    }

    fn dense_real_eigs(a: &CsrMatrix) -> Vec<f64> {
        let n = a.n;
        let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a.get(i, j).re);
        let mut ev: Vec<f64> = m
            .eigenvalues()
            .unwrap()
            .iter()
            .map(|z| z.re)
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn symmetrized_dirichlet_eigenvalues_converge_at_second_order() {
        // first eigenvalue on (0, 4); Richardson slope from three resolutions
        let lam: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| dense_real_eigs(&op(Space::H2, h, 4.0, ZERO, OperatorForm::Symmetrized).matrix)[0])
            .collect();
        let slope = ((lam[0] - lam[1]) / (lam[1] - lam[2])).log2();
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}, {lam:?}");
    }

    #[test]
    fn flux_and_drift_forms_agree_to_second_order() {
        let e = |h: f64, form| dense_real_eigs(&op(Space::H2, h, 4.0, ZERO, form).matrix);
        let d1 = (e(0.1, OperatorForm::Flux)[2] - e(0.1, OperatorForm::Drift)[2]).abs();
        let d2 = (e(0.05, OperatorForm::Flux)[2] - e(0.05, OperatorForm::Drift)[2]).abs();
        assert!(d2 < 0.35 * d1, "{d1} {d2}");
    }

    #[test]
    fn half_line_reflection_matches_full_line_even_sector() {
        // full line, nodes +-(j+1/2)h, same flux stencil with kappa = |sinh|
        let h = 0.25;
        let r = 3.0;
        let g = build_grid(Space::H2, h, r).unwrap();
        let n = g.len();
        let half = dense_real_eigs(&op(Space::H2, h, r, ZERO, OperatorForm::Flux).matrix);
        let nn = 2 * n;
        let pos = |k: usize| (k as f64 - n as f64 + 0.5) * h;
        let kap = |x: f64| x.sinh().abs();
        let mut full = vec![vec![ZERO; nn]; nn];
        for k in 0..nn {
            let x = pos(k);
            let s = kap(x) * h * h;
            let (fl, fr) = (kap(x - 0.5 * h), kap(x + 0.5 * h));
            let fl = if k == 0 { 2.0 * fl } else { fl };
            let fr = if k == nn - 1 { 2.0 * fr } else { fr };
            full[k][k] = c((fl + fr) / s, 0.0);
            if k > 0 {
                full[k][k - 1] = c(-fl / s, 0.0);
            }
            if k + 1 < nn {
                full[k][k + 1] = c(-fr / s, 0.0);
            }
        }
        let all = dense_real_eigs(&CsrMatrix::from_dense(&full));
        for e in half {
            let best = all.iter().map(|a| (a - e).abs()).fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-8 * (1.0 + e.abs()), "{e}");
        }
    }

    #[test]
    fn discrete_norm_matches_quadrature() {
        let f = make_analytic_vector(Space::Sl3, &[[0.8, 1.5]], &[0.6], &[c(1.0, 0.0)], true).unwrap();
        let g = build_grid(Space::Sl3, 0.05, 12.0).unwrap();
        let v = project_vector(&f, &g).unwrap();
        let disc = g.weighted_norm_sq(&v);
        let quad = inner_product(&f, &f, Measure::WeightedA).unwrap().re;
        assert!(((disc - quad) / quad).abs() <= 1e-4, "{disc} {quad}");

        let f = make_analytic_vector(Space::H2, &[[1.0, 0.0]], &[0.5], &[c(1.0, 0.0)], true).unwrap();
        let g = build_grid(Space::H2, 0.05, 12.0).unwrap();
        let v = project_vector(&f, &g).unwrap();
        let disc = g.weighted_norm_sq(&v);
        let quad = inner_product(&f, &f, Measure::WeightedA).unwrap().re;
        assert!(((disc - quad) / quad).abs() <= 1e-4, "{disc} {quad}");
    }

    #[test]
    fn projection_of_constants_and_symmetric_vectors() {
        let one = make_analytic_vector(Space::Sl3, &[[0.0, 0.0]], &[1e12], &[c(2.0, 0.0)], false).unwrap();
        let g = build_grid(Space::Sl3, 0.3, 3.0).unwrap();
        for v in project_vector(&one, &g).unwrap() {
            assert!((v - 2.0).norm() < 1e-10);
        }
        let f = make_analytic_vector(Space::Sl3, &[[0.4, 1.1]], &[0.7], &[ONE], true).unwrap();
        for x in &g.nodes {
            let p = FlatPoint::new(*x);
            for k in 0..6 {
                let q = p.permute(crate::geometry::PERMUTATIONS[k]);
                assert!((f.eval(q.x) - f.eval(p.x)).norm() < 1e-12);
            }
        }
        let h2 = build_grid(Space::H2, 0.5, 2.0).unwrap();
        assert!(project_vector(&f, &h2).is_err());
    }

    #[test]
    fn drift_ghost_reproduces_even_reflection() {
        // a W-invariant smooth function has matching ghost values to O(h^2)
        let g = build_grid(Space::Sl3, 0.1, 4.0).unwrap();
        let f = make_analytic_vector(Space::Sl3, &[[0.5, 0.9]], &[1.0], &[ONE], true).unwrap();
        let v = project_vector(&f, &g).unwrap();
        for (i, j) in [(-1, 3), (4, -1), (-1, -1), (7, -1)] {
            let want = f.eval(chamber_point(i as f64, j as f64, g.step));
            let got: Complex64 = ghost_combo(&g, i, j).iter().map(|&(q, w)| v[q] * w).sum();
            assert!((got - want).norm() < 0.02, "{i} {j}: {got} {want}");
        }
    }

    #[test]
    fn symmetrized_form_needs_h2_uniform() {
        assert!(CoefficientSet::new(Space::Sl3, ScalingParam::identity(), OperatorForm::Symmetrized).is_err());
    }
}
