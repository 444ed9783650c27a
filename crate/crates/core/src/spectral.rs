//! Spectra of scaled operators, theta-trajectories, resolvent solves and
//! continued matrix elements.
//!
//! Sheets follow the branch with `Im sqrt(lambda - ev0) < 0` on the
//! physical sheet; the continued sheet is reached from the lower half plane
//! by increasing `arg(lambda - ev0)` through 0.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_operator, build_grid, AssembledOperator, BoundaryConditions};
use crate::error::{Error, Result};
use crate::geometry::Space;
use crate::operators::{CoefficientSet, CutoffProfile, OperatorForm, ScalingParam, Variant};
use crate::scaling::{delta_approx, AnalyticVector};
use crate::sparse::CsrMatrix;
use crate::special::{arg, c, norm2, ZERO};

/// Matrices up to this size are diagonalized densely.
pub const DENSE_THRESHOLD: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Krylov subspace size; 0 picks `max(2 count + 20, 60)`.
    pub subspace: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub dense_threshold: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            subspace: 0,
            tol: 1e-10,
            max_restarts: 60,
            dense_threshold: DENSE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    /// Unit-norm (Euclidean) eigenvectors, same order as `values`.
    pub vectors: Vec<Vec<Complex64>>,
}

fn order_by_shift(pairs: &mut [(Complex64, Vec<Complex64>)], shift: Complex64) {
    pairs.sort_by(|a, b| {
        let da = (a.0 - shift).norm();
        let db = (b.0 - shift).norm();
        da.total_cmp(&db).then(a.0.re.total_cmp(&b.0.re))
    });
}

/// Eigenvalues of `op` nearest `shift`.
pub fn eigenvalues(op: &AssembledOperator, count: usize, shift: Complex64) -> Result<Vec<Complex64>> {
    Ok(eigenpairs(&op.matrix, count, shift, &EigenOptions::default())?.values)
}

/// The `count` eigenpairs nearest `shift`, ordered by distance to the
/// shift and then by real part.
pub fn eigenpairs(m: &CsrMatrix, count: usize, shift: Complex64, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = m.n;
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!(
            "count must be in 1..={n}, got {count}"
        )));
    }
    let mut pairs = if n <= opts.dense_threshold {
        dense_pairs(m)?
    } else {
        shift_invert_arnoldi(m, count, shift, opts)?
    };
    order_by_shift(&mut pairs, shift);
    pairs.truncate(count);
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigenPairs { values, vectors })
}

fn dense_pairs(m: &CsrMatrix) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    let n = m.n;
    let mut a = Mat::<Complex64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in m.row(i) {
            a[(i, j)] += v;
        }
    }
    let evd = a
        .eigen()
        .map_err(|e| Error::Convergence(format!("dense eigensolver failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    Ok((0..n)
        .map(|k| {
            let v: Vec<Complex64> = (0..n).map(|i| u[(i, k)]).collect();
            let nv = norm2(&v);
            (s[k], v.into_iter().map(|x| x / nv).collect())
        })
        .collect())
}

/// Sparse LU of `A - shift` with a solve that checks its own residual.
pub struct ShiftedSolver<'a> {
    matrix: &'a CsrMatrix,
    shift: Complex64,
    lu: Lu<usize, Complex64>,
}

impl<'a> ShiftedSolver<'a> {
    pub fn new(matrix: &'a CsrMatrix, shift: Complex64) -> Result<Self> {
        let sp = matrix.to_faer_shifted(shift)?;
        let lu = sp.sp_lu().map_err(|e| Error::Shift {
            shift,
            reason: format!("factorization failed ({e:?}); perturb the shift"),
        })?;
        Ok(ShiftedSolver { matrix, shift, lu })
    }

    /// Solves `(A - shift) x = b`; returns `x` and the relative residual.
    pub fn solve(&self, b: &[Complex64]) -> (Vec<Complex64>, f64) {
        let n = b.len();
        let mut x = Mat::<Complex64>::from_fn(n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        let mut sol: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
        let mut res = self.residual(&sol, b);
        // one step of iterative refinement
        let r: Vec<Complex64> = {
            let ax = self.matrix.matvec(&sol);
            (0..n).map(|i| b[i] - (ax[i] - self.shift * sol[i])).collect()
        };
        let mut d = Mat::<Complex64>::from_fn(n, 1, |i, _| r[i]);
        self.lu.solve_in_place(d.as_mut());
        let refined: Vec<Complex64> = (0..n).map(|i| sol[i] + d[(i, 0)]).collect();
        let res2 = self.residual(&refined, b);
        if res2 < res {
            sol = refined;
            res = res2;
        }
        (sol, res)
    }

    fn residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: f64 = ax
            .iter()
            .zip(x)
            .zip(b)
            .map(|((a, x), b)| (a - self.shift * x - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let nb = norm2(b);
        if nb == 0.0 {
            r
        } else {
            r / nb
        }
    }
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Orthogonalize `w` against `basis` (two passes of classical Gram-Schmidt);
/// returns the coefficients.
fn orthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64]) -> Vec<Complex64> {
    let mut h = vec![ZERO; basis.len()];
    for _ in 0..2 {
        for (k, v) in basis.iter().enumerate() {
            let c = dotc(v, w);
            h[k] += c;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
        }
    }
    h
}

/// Shift-invert Arnoldi with thick restarts on Ritz vectors. Keeps a Krylov
/// decomposition `Op U = U B + u b^T`, `Op = (A - shift)^-1`.
fn shift_invert_arnoldi(
    m: &CsrMatrix,
    count: usize,
    shift: Complex64,
    opts: &EigenOptions,
) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    let n = m.n;
    let solver = ShiftedSolver::new(m, shift)?;
    let scale = m.frobenius() + shift.norm();
    let op = |v: &[Complex64]| -> Result<Vec<Complex64>> {
        let (x, res) = solver.solve(v);
        let backward = res * norm2(v) / (scale * norm2(&x) + norm2(v));
        if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || backward > 1e-8 {
            return Err(Error::Shift {
                shift,
                reason: format!("shifted solve is singular (residual {res:.2e}); perturb the shift"),
            });
        }
        Ok(x)
    };
    let msize = if opts.subspace > 0 {
        opts.subspace
    } else {
        (2 * count + 20).max(60)
    }
    .min(n);
    let keep = (count + (msize - count) / 2).min(msize - 1).max(count);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut u: Vec<Complex64> = (0..n).map(|_| c(rng.gen::<f64>() - 0.5, 0.0)).collect();
    let nu = norm2(&u);
    u.iter_mut().for_each(|x| *x /= nu);

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(msize);
    let mut bmat: Vec<Vec<Complex64>> = Vec::new(); // square, basis.len()
    let mut brow: Vec<Complex64> = Vec::new();

    for _restart in 0..=opts.max_restarts {
        while basis.len() < msize {
            let p = basis.len();
            let mut w = op(&u)?;
            basis.push(u.clone());
            let h = orthogonalize(&basis, &mut w);
            // grow B by one row and one column
            for (k, row) in bmat.iter_mut().enumerate() {
                row.push(h[k]);
            }
            let mut last: Vec<Complex64> = brow.clone();
            last.push(h[p]);
            bmat.push(last);
            let beta = norm2(&w);
            brow = vec![ZERO; p + 1];
            if beta < 1e-14 {
                // invariant subspace: continue with a fresh random direction
                let mut r: Vec<Complex64> = (0..n).map(|_| c(rng.gen::<f64>() - 0.5, 0.0)).collect();
                orthogonalize(&basis, &mut r);
                let nr = norm2(&r);
                u = r.into_iter().map(|x| x / nr).collect();
            } else {
                brow[p] = c(beta, 0.0);
                u = w.into_iter().map(|x| x / beta).collect();
            }
        }
        let p = basis.len();
        let b = Mat::<Complex64>::from_fn(p, p, |i, j| bmat[i][j]);
        let evd = b
            .eigen()
            .map_err(|e| Error::Convergence(format!("Ritz eigensolver failed: {e:?}")))?;
        let s = evd.S();
        let y = evd.U();
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&a, &bb| s[bb].norm().total_cmp(&s[a].norm()));
        let resid = |k: usize| -> f64 {
            let ny: f64 = (0..p).map(|i| y[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            let r: Complex64 = (0..p).map(|i| brow[i] * y[(i, k)]).sum();
            r.norm() / ny
        };
        let converged = idx[..count]
            .iter()
            .all(|&k| resid(k) <= opts.tol * s[k].norm().max(1e-300));
        if converged || _restart == opts.max_restarts {
            if !converged {
                let worst = idx[..count]
                    .iter()
                    .map(|&k| resid(k) / s[k].norm())
                    .fold(0.0, f64::max);
                return Err(Error::Convergence(format!(
                    "shift-invert Arnoldi did not converge after {} restarts (worst relative Ritz residual {worst:.2e})",
                    opts.max_restarts
                )));
            }
            return Ok(idx[..count]
                .iter()
                .map(|&k| {
                    let mut v = vec![ZERO; n];
                    for (i, bv) in basis.iter().enumerate() {
                        let yi = y[(i, k)];
                        for (vj, bj) in v.iter_mut().zip(bv) {
                            *vj += yi * bj;
                        }
                    }
                    let nv = norm2(&v);
                    v.iter_mut().for_each(|x| *x /= nv);
                    (shift + s[k].inv(), v)
                })
                .collect());
        }
        // thick restart: orthonormal basis Q of the kept Ritz vectors
        let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(keep);
        for &k in &idx[..keep] {
            let mut col: Vec<Complex64> = (0..p).map(|i| y[(i, k)]).collect();
            orthogonalize(&q, &mut col);
            let nc = norm2(&col);
            if nc > 1e-10 {
                q.push(col.into_iter().map(|x| x / nc).collect());
            }
        }
        let kk = q.len();
        let new_basis: Vec<Vec<Complex64>> = q
            .iter()
            .map(|col| {
                let mut v = vec![ZERO; n];
                for (i, bv) in basis.iter().enumerate() {
                    for (vj, bj) in v.iter_mut().zip(bv) {
                        *vj += col[i] * bj;
                    }
                }
                v
            })
            .collect();
        // B <- Q^H B Q, b <- Q^T b
        let bq: Vec<Vec<Complex64>> = (0..p)
            .map(|i| (0..kk).map(|j| (0..p).map(|l| bmat[i][l] * q[j][l]).sum()).collect())
            .collect();
        bmat = (0..kk)
            .map(|i| (0..kk).map(|j| (0..p).map(|l| q[i][l].conj() * bq[l][j]).sum()).collect())
            .collect();
        brow = (0..kk).map(|j| (0..p).map(|l| brow[l] * q[j][l]).sum()).collect();
        basis = new_basis;
    }
    unreachable!("loop returns on the final restart")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenClass {
    ContinuumRay,
    CandidateResonance,
    Spurious,
}

impl EigenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EigenClass::ContinuumRay => "continuum-ray",
            EigenClass::CandidateResonance => "candidate-resonance",
            EigenClass::Spurious => "spurious",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum TubeRadius {
    Fixed(f64),
    /// `scale * (1 + |e|)`
    Relative(f64),
}

impl Default for TubeRadius {
    fn default() -> Self {
        TubeRadius::Relative(0.05)
    }
}

impl TubeRadius {
    pub fn at(&self, e: Complex64) -> f64 {
        match *self {
            TubeRadius::Fixed(r) => r,
            TubeRadius::Relative(s) => s * (1.0 + e.norm()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            TubeRadius::Fixed(r) | TubeRadius::Relative(r) => r,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("tube radius must be > 0, got {v}")));
        }
        Ok(())
    }
}

/// Distance from `e` to the ray `ev0 + e^{-2i Im theta} [0, inf)`.
pub fn ray_distance(e: Complex64, ev0: f64, theta: Complex64) -> f64 {
    let d = e - ev0;
    let dir = Complex64::from_polar(1.0, -2.0 * theta.im);
    let t = (d * dir.conj()).re;
    if t <= 0.0 {
        d.norm()
    } else {
        (d - dir * t).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    /// Where the fitted line meets the real axis (or its leftmost point
    /// when the line is horizontal).
    pub intercept: Complex64,
    /// Direction of the fitted line in `(-pi, pi]`, oriented away from the
    /// threshold.
    pub angle: f64,
    /// RMS orthogonal distance of the fitted points to the line.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub theta: Complex64,
    pub ev0: f64,
    pub eigenvalues: Vec<Complex64>,
    pub classification: Vec<EigenClass>,
    pub ray_distance: Vec<f64>,
    pub ray_fit: Option<RayFit>,
    pub warnings: Vec<String>,
}

/// Outer-annulus mass above which an eigenvector counts as a boundary mode.
pub const SPURIOUS_MASS: f64 = 0.5;

pub fn classify_spectrum(
    eigs: &[Complex64],
    theta: Complex64,
    ev0: f64,
    tube: TubeRadius,
    outer_mass: Option<&[f64]>,
) -> Result<SpectrumResult> {
    tube.validate()?;
    let mut classification = Vec::with_capacity(eigs.len());
    let mut dist = Vec::with_capacity(eigs.len());
    for (k, &e) in eigs.iter().enumerate() {
        let d = ray_distance(e, ev0, theta);
        dist.push(d);
        let class = if d <= tube.at(e) {
            EigenClass::ContinuumRay
        } else if outer_mass.is_some_and(|m| m[k] > SPURIOUS_MASS) {
            EigenClass::Spurious
        } else {
            EigenClass::CandidateResonance
        };
        classification.push(class);
    }
    let ray: Vec<Complex64> = eigs
        .iter()
        .zip(&classification)
        .filter(|(_, c)| **c == EigenClass::ContinuumRay)
        .map(|(e, _)| *e)
        .collect();
    let mut warnings = Vec::new();
    let ray_fit = if ray.len() < 3 {
        warnings.push(format!(
            "fit-degenerate: only {} continuum-ray eigenvalues",
            ray.len()
        ));
        None
    } else {
        Some(fit_ray(&ray, theta))
    };
    Ok(SpectrumResult {
        theta,
        ev0,
        eigenvalues: eigs.to_vec(),
        classification,
        ray_distance: dist,
        ray_fit,
        warnings,
    })
}

/// Total-least-squares line through the points.
pub fn fit_ray(points: &[Complex64], theta: Complex64) -> RayFit {
    let n = points.len() as f64;
    let mean: Complex64 = points.iter().sum::<Complex64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.re * d.re;
        sxy += d.re * d.im;
        syy += d.im * d.im;
    }
    // principal axis of the 2x2 scatter matrix
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut dir = Complex64::from_polar(1.0, phi);
    let expect = Complex64::from_polar(1.0, -2.0 * theta.im);
    if (dir * expect.conj()).re < 0.0 {
        dir = -dir;
    }
    let residual = (points
        .iter()
        .map(|p| ((p - mean) * dir.conj()).im.powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let intercept = if dir.im.abs() > 1e-12 {
        let t = -mean.im / dir.im;
        c(mean.re + t * dir.re, 0.0)
    } else {
        let tmin = points
            .iter()
            .map(|p| ((p - mean) * dir.conj()).re)
            .fold(f64::INFINITY, f64::min);
        mean + dir * tmin
    };
    RayFit {
        intercept,
        angle: arg(dir),
        residual,
        points: points.len(),
    }
}

/// Grid and representation used to assemble operators for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(default)]
    pub form: OperatorForm,
}

impl GridSpec {
    /// Lengths are measured on the scaled flat: under a uniform scaling
    /// the grid is shrunk by `e^{-Re theta}`, so the real part of theta
    /// acts as the change of variables it is.
    pub fn assemble(&self, space: Space, sp: ScalingParam) -> Result<AssembledOperator> {
        let stretch = if sp.is_uniform() {
            (-sp.theta.re).exp()
        } else {
            1.0
        };
        let grid = build_grid(space, self.h * stretch, self.radius * stretch)?;
        let cs = CoefficientSet::new(space, sp, self.form)?;
        assemble_operator(&cs, &grid, BoundaryConditions::default())
    }

    pub fn refined(&self) -> GridSpec {
        GridSpec {
            h: 0.5 * self.h,
            ..*self
        }
    }

    pub fn enlarged(&self, factor: f64) -> GridSpec {
        GridSpec {
            radius: self.radius * factor,
            ..*self
        }
    }
}

/// Spectrum of `op` near `shift`, classified.
pub fn spectrum(op: &AssembledOperator, count: usize, shift: Complex64, tube: TubeRadius) -> Result<SpectrumResult> {
    let count = count.min(op.len());
    let ep = eigenpairs(&op.matrix, count, shift, &EigenOptions::default())?;
    let outer: Vec<f64> = ep.vectors.iter().map(|v| op.outer_mass_fraction(v)).collect();
    classify_spectrum(&ep.values, op.theta(), op.grid.space.ev0(), tube, Some(&outer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub space: Space,
    pub grid: GridSpec,
    pub count: usize,
    /// Fixed shift for all theta; default `ev0 + 0.5 e^{-i Im theta_max}`.
    #[serde(default)]
    pub shift: Option<Complex64>,
    #[serde(default)]
    pub tube: TubeRadius,
    /// Paths with score below this are stationary.
    #[serde(default = "default_stationarity")]
    pub stationarity: f64,
    /// Exterior scaling with this `(T, width)` instead of uniform scaling.
    #[serde(default)]
    pub exterior: Option<(f64, f64)>,
}

fn default_stationarity() -> f64 {
    1e-2
}

impl TrajectoryConfig {
    pub fn scaling(&self, theta: Complex64) -> Result<ScalingParam> {
        match self.exterior {
            None => ScalingParam::uniform(theta),
            Some((t, w)) => ScalingParam::exterior(theta, CutoffProfile::new(t, w)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPath {
    /// `(theta index, eigenvalue index, eigenvalue)`.
    pub points: Vec<(usize, usize, Complex64)>,
    /// Path length divided by the number of steps.
    pub score: f64,
    /// A matching step had two eigenvalues within the matching radius.
    pub ambiguous: bool,
    pub candidate: bool,
}

impl EigenPath {
    pub fn mean(&self) -> Complex64 {
        self.points.iter().map(|p| p.2).sum::<Complex64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub thetas: Vec<Complex64>,
    pub spectra: Vec<SpectrumResult>,
    pub paths: Vec<EigenPath>,
    pub matching_radius: f64,
}

impl TrajectoryResult {
    pub fn candidates(&self) -> impl Iterator<Item = &EigenPath> {
        self.paths.iter().filter(|p| p.candidate)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Nearest-neighbour gap median over a set of eigenvalues.
fn median_gap(e: &[Complex64]) -> f64 {
    let gaps: Vec<f64> = e
        .iter()
        .enumerate()
        .map(|(i, a)| {
            e.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (a - b).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|g| g.is_finite())
        .collect();
    median(gaps)
}

pub fn check_theta_order(thetas: &[Complex64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::InvalidInput("empty theta list".into()));
    }
    for w in thetas.windows(2) {
        if w[1].im < w[0].im || (w[1].im == w[0].im && w[1].re < w[0].re) {
            return Err(Error::InvalidInput(
                "theta list must be ordered by imaginary part".into(),
            ));
        }
    }
    Ok(())
}

/// The configured shift, or `ev0 + 0.5 e^{-i Im theta}` for the theta of
/// largest `|Im theta|`.
pub fn trajectory_shift(thetas: &[Complex64], cfg: &TrajectoryConfig) -> Complex64 {
    let im_max = thetas
        .iter()
        .map(|t| t.im)
        .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    cfg.shift
        .unwrap_or_else(|| cfg.space.ev0() + Complex64::from_polar(0.5, -im_max))
}

/// One element of a sweep.
pub fn trajectory_spectrum(theta: Complex64, shift: Complex64, cfg: &TrajectoryConfig) -> Result<SpectrumResult> {
    let op = cfg.grid.assemble(cfg.space, cfg.scaling(theta)?)?;
    spectrum(&op, cfg.count, shift, cfg.tube)
}

pub fn theta_trajectory(thetas: &[Complex64], cfg: &TrajectoryConfig) -> Result<TrajectoryResult> {
    check_theta_order(thetas)?;
    let shift = trajectory_shift(thetas, cfg);
    let spectra = thetas
        .iter()
        .map(|&t| trajectory_spectrum(t, shift, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(link_paths(thetas, spectra, cfg.stationarity))
}

/// Nearest-neighbour matching of consecutive spectra into paths.
pub fn link_paths(thetas: &[Complex64], spectra: Vec<SpectrumResult>, stationarity: f64) -> TrajectoryResult {
    let radius = 3.0
        * median(
            spectra
                .iter()
                .map(|s| median_gap(&s.eigenvalues))
                .filter(|g| *g > 0.0)
                .collect(),
        );
    let mut paths: Vec<EigenPath> = Vec::new();
    let mut open: Vec<Option<usize>> = Vec::new(); // per eigenvalue of previous theta
    for (ti, s) in spectra.iter().enumerate() {
        let mut next_open = vec![None; s.eigenvalues.len()];
        let mut taken = vec![false; s.eigenvalues.len()];
        if ti > 0 {
            let prev = &spectra[ti - 1].eigenvalues;
            for (pi, pe) in prev.iter().enumerate() {
                let Some(path) = open[pi] else { continue };
                let mut near: Vec<(usize, f64)> = s
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(k, e)| (k, (e - pe).norm()))
                    .filter(|&(_, d)| d <= radius)
                    .collect();
                near.sort_by(|a, b| a.1.total_cmp(&b.1));
                if near.len() > 1 {
                    paths[path].ambiguous = true;
                }
                if let Some(&(k, _)) = near.iter().find(|(k, _)| !taken[*k]) {
                    taken[k] = true;
                    paths[path].points.push((ti, k, s.eigenvalues[k]));
                    next_open[k] = Some(path);
                }
            }
        }
        for k in 0..s.eigenvalues.len() {
            if !taken[k] {
                next_open[k] = Some(paths.len());
                paths.push(EigenPath {
                    points: vec![(ti, k, s.eigenvalues[k])],
                    score: 0.0,
                    ambiguous: false,
                    candidate: false,
                });
            }
        }
        open = next_open;
    }
    for p in &mut paths {
        let steps = p.points.len().saturating_sub(1);
        let len: f64 = p.points.windows(2).map(|w| (w[1].2 - w[0].2).norm()).sum();
        p.score = if steps == 0 { f64::INFINITY } else { len / steps as f64 };
        let off_ray = p
            .points
            .iter()
            .all(|&(ti, k, _)| spectra[ti].classification[k] == EigenClass::CandidateResonance);
        p.candidate = off_ray && p.points.len() >= 3.min(thetas.len()) && p.score < stationarity;
    }
    TrajectoryResult {
        thetas: thetas.to_vec(),
        spectra,
        paths,
        matching_radius: radius,
    }
}

/// Candidate paths that persist after halving `h` and after enlarging `R`
/// by 1.5: each confirmation run must show a candidate eigenvalue within
/// the matching radius of the path mean.
pub fn confirmed_resonances(base: &TrajectoryResult, cfg: &TrajectoryConfig) -> Result<Vec<Complex64>> {
    let cands: Vec<Complex64> = base.candidates().map(EigenPath::mean).collect();
    if cands.is_empty() {
        return Ok(Vec::new());
    }
    let mut survivors = cands;
    for grid in [cfg.grid.refined(), cfg.grid.enlarged(1.5)] {
        let c2 = TrajectoryConfig {
            grid,
            ..cfg.clone()
        };
        let run = theta_trajectory(&base.thetas, &c2)?;
        let tol = base.matching_radius.max(run.matching_radius);
        survivors.retain(|z| run.candidates().any(|p| (p.mean() - z).norm() <= tol));
    }
    Ok(survivors)
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub u: Vec<Complex64>,
    /// `|(A - lambda) u - rhs| / |rhs|`.
    pub residual: f64,
}

/// Growth of `|u| / |rhs|` beyond which a solve is treated as hitting a pole.
pub const POLE_GROWTH: f64 = 1e8;

pub fn resolvent_apply(op: &AssembledOperator, lambda: Complex64, rhs: &[Complex64]) -> Result<ResolventSolution> {
    resolvent_solve(&op.matrix, lambda, rhs)
}

pub fn resolvent_solve(m: &CsrMatrix, lambda: Complex64, rhs: &[Complex64]) -> Result<ResolventSolution> {
    if rhs.len() != m.n {
        return Err(Error::InvalidInput(format!(
            "rhs has length {} but the operator has dimension {}",
            rhs.len(),
            m.n
        )));
    }
    let pole = |m: &CsrMatrix| -> Error {
        let near = eigenpairs(m, 1, lambda + c(1e-6, 1e-6), &EigenOptions::default())
            .ok()
            .and_then(|e| e.values.first().copied())
            .unwrap_or(lambda);
        Error::PoleProximity {
            lambda,
            nearest: near,
            distance: (near - lambda).norm(),
        }
    };
    let solver = match ShiftedSolver::new(m, lambda) {
        Ok(s) => s,
        Err(_) => return Err(pole(m)),
    };
    let (u, residual) = solver.solve(rhs);
    let finite = u.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite || norm2(&u) > POLE_GROWTH * norm2(rhs).max(1e-300) || residual > 1e-6 {
        return Err(pole(m));
    }
    Ok(ResolventSolution { u, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sheet {
    Physical,
    Continued,
}

impl Sheet {
    pub fn as_str(self) -> &'static str {
        match self {
            Sheet::Physical => "physical",
            Sheet::Continued => "continued",
        }
    }
}

/// Which sheet the scaled resolvent at `theta` represents at `lambda`:
/// between the cut and the rotated ray the values are continued ones.
pub fn sheet_of(lambda: Complex64, ev0: f64, theta: Complex64) -> Sheet {
    let phi = arg(lambda - ev0);
    let b = theta.im;
    let swept = (b < 0.0 && phi >= 0.0 && phi < -2.0 * b) || (b > 0.0 && phi < 0.0 && phi > -2.0 * b);
    if swept {
        Sheet::Continued
    } else {
        Sheet::Physical
    }
}

/// Error when `lambda` sits in the tube of the rotated ray for `theta`.
pub fn check_unblocked(lambda: Complex64, ev0: f64, theta: Complex64, tube: TubeRadius) -> Result<()> {
    let d = ray_distance(lambda, ev0, theta);
    let r = tube.at(lambda);
    if d > r {
        return Ok(());
    }
    let z = lambda - ev0;
    let phi = arg(z);
    let clear = if z.norm() > r { (r / z.norm()).asin() } else { std::f64::consts::FRAC_PI_2 };
    let need = 0.5 * (phi.abs() + clear);
    Err(Error::ContinuationBlocked {
        lambda,
        theta,
        min_abs_im_theta: need,
        sign: if phi >= 0.0 { -1.0 } else { 1.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    pub lambda: Complex64,
    pub value: Complex64,
    pub theta: Complex64,
    pub sheet: Sheet,
    pub residual: f64,
    pub h: f64,
    pub radius: f64,
}

/// Samples of `f` in the picture `op` acts on. Vectors numerically
/// supported inside the undeformed ball of an exterior scaling are
/// sampled on real points and cut off at `T`; all others are continued
/// analytically along the contour.
pub fn sample_vector(op: &AssembledOperator, f: &AnalyticVector) -> Result<Vec<Complex64>> {
    if f.space != op.grid.space {
        return Err(Error::InvalidInput(format!(
            "vector lives on {} but the operator on {}",
            f.space, op.grid.space
        )));
    }
    if let Variant::Exterior { cutoff } = op.scaling.variant {
        if f.support_radius() <= cutoff.t {
            let mut v = op.sample_real(f);
            for (k, x) in v.iter_mut().enumerate() {
                if op.grid.node_radius(k) > cutoff.t {
                    *x = ZERO;
                }
            }
            return Ok(v);
        }
    }
    if op.scaling.large_angle() {
        return Err(Error::Validity(format!(
            "|Im theta| = {:.4} >= pi/4: Gaussian vectors do not decay along the scaled contour; use an exterior scaling with T >= {:.3}",
            op.scaling.theta.im.abs(),
            f.support_radius()
        )));
    }
    Ok(op.sample(f))
}

/// `<U_conj(theta) f, R(lambda, theta) U_theta g>` on an assembled operator.
pub fn matrix_element_with(
    op: &AssembledOperator,
    f: &AnalyticVector,
    g: &AnalyticVector,
    lambda: Complex64,
    tube: TubeRadius,
) -> Result<MatrixElement> {
    let ev0 = op.grid.space.ev0();
    check_unblocked(lambda, ev0, op.theta(), tube)?;
    let gs = sample_vector(op, g)?;
    let fs = sample_vector(op, &f.conjugate())?;
    let sol = resolvent_apply(op, lambda, &gs)?;
    Ok(MatrixElement {
        lambda,
        value: op.pairing(&fs, &sol.u),
        theta: op.theta(),
        sheet: sheet_of(lambda, ev0, op.theta()),
        residual: sol.residual,
        h: op.grid.h,
        radius: op.grid.radius,
    })
}

pub fn matrix_element(
    f: &AnalyticVector,
    g: &AnalyticVector,
    lambda: Complex64,
    sp: ScalingParam,
    grid: &GridSpec,
    tube: TubeRadius,
) -> Result<MatrixElement> {
    if f.space != g.space {
        return Err(Error::InvalidInput("f and g live on different spaces".into()));
    }
    check_unblocked(lambda, f.space.ev0(), sp.theta, tube)?;
    let op = grid.assemble(f.space, sp)?;
    matrix_element_with(&op, f, g, lambda, tube)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventTrace {
    pub theta: Complex64,
    pub samples: Vec<MatrixElement>,
    /// Largest relative gap to the unscaled computation over physical
    /// samples off the real axis.
    pub cross_theta_residual: Option<f64>,
    pub branch_convention: String,
}

pub const BRANCH_CONVENTION: &str = "Im sqrt(lambda-ev0) < 0";

/// Samples along `path` with one scaled operator. The path must start
/// below the cut and every point must stay clear of the rotated ray.
pub fn continue_across_cut(
    f: &AnalyticVector,
    g: &AnalyticVector,
    path: &[Complex64],
    sp: ScalingParam,
    grid: &GridSpec,
    tube: TubeRadius,
) -> Result<ResolventTrace> {
    let space = f.space;
    let ev0 = space.ev0();
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidInput("empty lambda path".into()))?;
    if !(first.im < 0.0) {
        return Err(Error::InvalidInput(format!(
            "the path must start below the cut, got lambda = {first}"
        )));
    }
    let beta = path
        .iter()
        .map(|l| arg(l - ev0))
        .filter(|a| *a >= 0.0)
        .fold(0.0, f64::max)
        * 0.5;
    if beta > 0.0 && !(beta < -sp.theta.im) {
        let worst = path
            .iter()
            .copied()
            .max_by(|a, b| arg(a - ev0).total_cmp(&arg(b - ev0)))
            .unwrap_or(*first);
        return Err(Error::ContinuationBlocked {
            lambda: worst,
            theta: sp.theta,
            min_abs_im_theta: beta,
            sign: -1.0,
        });
    }
    for &l in path {
        check_unblocked(l, ev0, sp.theta, tube)?;
    }
    let op = grid.assemble(space, sp)?;
    let reference = if sp.theta == ZERO {
        None
    } else {
        Some(grid.assemble(space, ScalingParam::identity())?)
    };
    let mut samples = Vec::with_capacity(path.len());
    let mut cross: Option<f64> = None;
    for &l in path {
        let me = matrix_element_with(&op, f, g, l, tube)?;
        if let (Some(r), Sheet::Physical) = (&reference, me.sheet) {
            if (l - ev0).im < 0.0 {
                let m0 = matrix_element_with(r, f, g, l, tube)?;
                let rel = (me.value - m0.value).norm() / m0.value.norm().max(1e-300);
                cross = Some(cross.map_or(rel, |c: f64| c.max(rel)));
            }
        }
        samples.push(me);
    }
    Ok(ResolventTrace {
        theta: sp.theta,
        samples,
        cross_theta_residual: cross,
        branch_convention: BRANCH_CONVENTION.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSequence {
    pub lambda: Complex64,
    pub theta: Complex64,
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Linear extrapolation in `t` of the last two values.
    pub extrapolated: Complex64,
    pub residual: f64,
}

/// `int delta_t(Z) u dZ` over the scaled flat, where `u` solves
/// `(A - lambda) u = probe(Z)`: the resolvent applied to the probe, read
/// off at the origin through mass-one Gaussians of decreasing width.
pub fn green_function_with(
    op: &AssembledOperator,
    lambda: Complex64,
    t_sequence: &[f64],
    probe: &AnalyticVector,
    tube: TubeRadius,
) -> Result<GreenSequence> {
    if t_sequence.is_empty() {
        return Err(Error::InvalidInput("empty t sequence".into()));
    }
    if t_sequence.iter().any(|t| !(*t > 0.0)) || t_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "t sequence must be positive and strictly decreasing".into(),
        ));
    }
    let space = op.grid.space;
    check_unblocked(lambda, space.ev0(), op.theta(), tube)?;
    let rhs = sample_vector(op, &probe.conjugate())?;
    let sol = resolvent_apply(op, lambda, &rhs)?;
    let u: Vec<Complex64> = sol
        .u
        .iter()
        .zip(&op.sample_scale)
        .map(|(x, s)| x / s)
        .collect();
    let mut values = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let d = delta_approx(space, t)?;
        let ds = match op.scaling.variant {
            // the mollifier sits at the origin, inside the undeformed ball
            Variant::Exterior { cutoff } if d.support_radius() <= cutoff.t => {
                op.grid.nodes.iter().map(|x| crate::scaling::RadialFunction::eval(&d, *x)).collect::<Vec<_>>()
            }
            _ => op.contour.iter().map(|z| d.eval_complex(*z)).collect(),
        };
        let v: Complex64 = u
            .iter()
            .zip(&ds)
            .zip(&op.euclid_weights)
            .map(|((a, b), w)| a * b * w)
            .sum();
        // unit mass on the grid, not just in the continuum
        let mass: Complex64 = ds.iter().zip(&op.euclid_weights).map(|(b, w)| b * w).sum();
        values.push(v / mass);
    }
    let k = values.len();
    let extrapolated = if k >= 2 {
        let (t1, t2) = (t_sequence[k - 2], t_sequence[k - 1]);
        let (v1, v2) = (values[k - 2], values[k - 1]);
        v2 - (v1 - v2) * (t2 / (t1 - t2))
    } else {
        values[0]
    };
    if k >= 3 {
        let d1 = (values[k - 2] - values[k - 3]).norm();
        let d2 = (values[k - 1] - values[k - 2]).norm();
        let scale = values[k - 1].norm().max(1e-300);
        if d2 > d1 && d2 > 1e-8 * scale {
            return Err(Error::Convergence(format!(
                "delta sequence is not Cauchy: successive differences {d1:.3e} then {d2:.3e}"
            )));
        }
    }
    Ok(GreenSequence {
        lambda,
        theta: op.theta(),
        t: t_sequence.to_vec(),
        values,
        extrapolated,
        residual: sol.residual,
    })
}

pub fn green_function(
    lambda: Complex64,
    sp: ScalingParam,
    t_sequence: &[f64],
    probe: &AnalyticVector,
    grid: &GridSpec,
    tube: TubeRadius,
) -> Result<GreenSequence> {
    let op = grid.assemble(probe.space, sp)?;
    green_function_with(&op, lambda, t_sequence, probe, tube)
}
