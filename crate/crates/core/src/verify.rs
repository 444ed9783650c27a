//! The invariant battery behind the `verify` subcommand and the acceptance
//! tests. Each criterion runs independently and reports named checks.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{FlatPoint, Space};
use crate::operators::{coefficient_identity_check, CutoffProfile, ScalingParam};
use crate::oracle::h2_radial_resolvent;
use crate::scaling::{group_law_check, make_analytic_vector, unitarity_check, AnalyticVector, RadialFunction};
use crate::special::{c, ONE};
use crate::spectral::{
    confirmed_resonances, green_function, matrix_element_with, resolvent_apply, spectrum, theta_trajectory,
    GridSpec, SpectrumResult, TrajectoryConfig, TubeRadius,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// The resolutions stated by the acceptance criteria.
    Full,
    /// Coarser grids for a quick run.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl Bound {
    pub fn symbol(self) -> &'static str {
        match self {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
            Bound::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// `value / limit` for upper bounds and `limit / value` for lower ones:
    /// above 1 means failing.
    pub fn margin(&self) -> f64 {
        let ratio = |a: f64, b: f64| {
            if b > 0.0 {
                a / b
            } else if a <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        match self.bound {
            Bound::AtMost => ratio(self.value, self.limit),
            Bound::AtLeast | Bound::Above => ratio(self.limit, self.value),
        }
    }

    fn new(label: impl Into<String>, value: f64, bound: Bound, limit: f64) -> Self {
        let passed = match bound {
            Bound::AtMost => value <= limit,
            Bound::AtLeast => value >= limit,
            Bound::Above => value > limit,
        };
        Check {
            label: label.into(),
            value,
            bound,
            limit,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Error category and message when the criterion could not run.
    pub error: Option<(String, String)>,
    pub seconds: f64,
}

impl CriterionReport {
    /// One line: id, verdict, tightest check.
    pub fn summary(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let detail = if let Some((cat, msg)) = &self.error {
            format!("error [{cat}] {msg}")
        } else {
            let worst = self
                .checks
                .iter()
                .find(|c| !c.passed)
                .or_else(|| self.checks.iter().max_by(|a, b| a.margin().total_cmp(&b.margin())));
            match worst {
                Some(c) => format!(
                    "{} checks, {}: {:.3e} {} {:.3e}",
                    self.checks.len(),
                    c.label,
                    c.value,
                    c.bound.symbol(),
                    c.limit
                ),
                None => "no checks".into(),
            }
        };
        format!("criterion {} [{}] {}: {} ({:.1}s)", self.id, verdict, self.name, detail, self.seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub resolution: Resolution,
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

pub const CRITERIA: [(u32, &str); 9] = [
    (1, "threshold constants"),
    (2, "rotation law"),
    (3, "theta-invariance of matrix elements"),
    (4, "exact hyperbolic-plane oracle"),
    (5, "no spurious hyperbolic-plane resonances"),
    (6, "unitarity and group law"),
    (7, "coefficient identity"),
    (8, "exterior/uniform consistency"),
    (9, "jump across the cut"),
];

pub fn run_criterion(id: u32, res: Resolution, seed: u64) -> CriterionReport {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map_or("unknown", |c| c.1)
        .to_string();
    let start = Instant::now();
    let out = match id {
        1 => threshold_constants(res),
        2 => rotation_law(res),
        3 => theta_invariance(res),
        4 => exact_oracle(res),
        5 => no_spurious_resonances(res),
        6 => unitarity_group_law(seed),
        7 => coefficient_identity(seed),
        8 => exterior_uniform(res),
        9 => jump_across_cut(res),
        _ => Err(crate::Error::InvalidInput(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    match out {
        Ok(checks) => CriterionReport {
            id,
            name,
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            checks,
            error: None,
            seconds,
        },
        Err(e) => CriterionReport {
            id,
            name,
            passed: false,
            checks: Vec::new(),
            error: Some((e.category().to_string(), e.to_string())),
            seconds,
        },
    }
}

pub fn run_all(res: Resolution, seed: u64) -> VerifyReport {
    let criteria: Vec<_> = CRITERIA.iter().map(|c| run_criterion(c.0, res, seed)).collect();
    VerifyReport {
        resolution: res,
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

fn grid(h: f64, radius: f64) -> GridSpec {
    GridSpec {
        h,
        radius,
        form: Default::default(),
    }
}

/// Ray spectra: `(space, grid, shift radius, time budget in seconds)`.
fn ray_setups(res: Resolution) -> [(Space, GridSpec, f64, f64); 2] {
    match res {
        Resolution::Full => [
            (Space::H2, grid(0.01, 30.0), 0.5, 10.0),
            (Space::Sl3, grid(0.05, 18.0), 0.8, 120.0),
        ],
        Resolution::Reduced => [
            (Space::H2, grid(0.02, 20.0), 0.5, 10.0),
            (Space::Sl3, grid(0.1, 18.0), 0.8, 120.0),
        ],
    }
}

fn ray_spectrum(space: Space, g: &GridSpec, beta: f64, shift_radius: f64) -> Result<SpectrumResult> {
    let op = g.assemble(space, ScalingParam::uniform(c(0.0, beta))?)?;
    let shift = space.ev0() + Complex64::from_polar(shift_radius, -2.0 * beta);
    spectrum(&op, 30, shift, TubeRadius::default())
}

fn fitted(s: &SpectrumResult) -> Result<crate::spectral::RayFit> {
    s.ray_fit.ok_or_else(|| {
        crate::Error::Convergence(format!("no ray fit at theta = {}: {:?}", s.theta, s.warnings))
    })
}

fn threshold_constants(res: Resolution) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (space, g, rad, budget) in ray_setups(res) {
        let tol = if space == Space::H2 { 0.01 } else { 0.02 };
        let t = Instant::now();
        let s = ray_spectrum(space, &g, 0.3, rad)?;
        let secs = t.elapsed().as_secs_f64();
        let fit = fitted(&s)?;
        checks.push(Check::new(
            format!("{space} |intercept - ev0|"),
            (fit.intercept - space.ev0()).norm(),
            Bound::AtMost,
            tol,
        ));
        if res == Resolution::Full {
            checks.push(Check::new(format!("{space} seconds"), secs, Bound::AtMost, budget));
        }
    }
    Ok(checks)
}

fn rotation_law(res: Resolution) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (space, g, rad, _) in ray_setups(res) {
        let tol = if space == Space::H2 { 0.02 } else { 0.05 };
        for beta in [0.2, 0.3, 0.5] {
            let fit = fitted(&ray_spectrum(space, &g, beta, rad)?)?;
            checks.push(Check::new(
                format!("{space} Im theta {beta}: |angle + 2 Im theta|"),
                (fit.angle + 2.0 * beta).abs(),
                Bound::AtMost,
                tol,
            ));
        }
    }
    Ok(checks)
}

/// Test vectors `(f, g)` for matrix elements.
fn test_pair(space: Space) -> Result<(AnalyticVector, AnalyticVector)> {
    let (cf, cg) = match space {
        Space::H2 => ([1.0, 0.0], [0.5, 0.0]),
        Space::Sl3 => ([1.0, 0.5], [0.5, 0.2]),
    };
    Ok((
        make_analytic_vector(space, &[cf], &[0.6], &[ONE], true)?,
        make_analytic_vector(space, &[cg], &[0.8], &[c(1.0, 0.5)], true)?,
    ))
}

pub const PHYSICAL_BATTERY: [(f64, f64); 5] = [(0.2, -0.3), (-1.0, 0.0), (0.5, -0.5), (1.0, -0.6), (0.1, -0.05)];
pub const CONTINUED_BATTERY: [(f64, f64); 5] = [(0.75, 0.05), (1.0, 0.3), (1.5, 0.5), (1.2, 0.2), (2.0, 0.4)];

/// Largest cross-theta gap per lambda on one grid.
fn cross_theta(space: Space, g: &GridSpec, thetas: (f64, f64), lambdas: &[(f64, f64)]) -> Result<Vec<f64>> {
    let (f, gv) = test_pair(space)?;
    let a = g.assemble(space, ScalingParam::uniform(c(0.0, thetas.0))?)?;
    let b = g.assemble(space, ScalingParam::uniform(c(0.0, thetas.1))?)?;
    lambdas
        .iter()
        .map(|&(re, im)| {
            let l = c(re, im);
            let x = matrix_element_with(&a, &f, &gv, l, TubeRadius::default())?.value;
            let y = matrix_element_with(&b, &f, &gv, l, TubeRadius::default())?.value;
            Ok((x - y).norm() / y.norm())
        })
        .collect()
}

fn theta_invariance(res: Resolution) -> Result<Vec<Check>> {
    let mut setups = vec![(Space::H2, grid(0.02, 30.0))];
    match res {
        Resolution::Full => setups.push((Space::Sl3, grid(0.1, 18.0))),
        Resolution::Reduced => setups[0] = (Space::H2, grid(0.04, 30.0)),
    }
    let mut checks = Vec::new();
    for (space, coarse) in setups {
        for (label, thetas, battery) in [
            ("physical", (0.0, -0.35), &PHYSICAL_BATTERY),
            ("continued", (-0.5, -0.65), &CONTINUED_BATTERY),
        ] {
            let rc = cross_theta(space, &coarse, thetas, battery)?;
            let rf = cross_theta(space, &coarse.refined(), thetas, battery)?;
            for (k, &(re, im)) in battery.iter().enumerate() {
                checks.push(Check::new(
                    format!("{space} {label} lambda {re}{im:+}i: cross-theta at h = {}", coarse.h / 2.0),
                    rf[k],
                    Bound::AtMost,
                    1e-3,
                ));
                checks.push(Check::new(
                    format!("{space} {label} lambda {re}{im:+}i: reduction under h -> h/2"),
                    rc[k] / rf[k],
                    Bound::AtLeast,
                    2.0,
                ));
            }
        }
    }
    Ok(checks)
}

fn exact_oracle(res: Resolution) -> Result<Vec<Check>> {
    let g = match res {
        Resolution::Full => grid(0.01, 30.0),
        Resolution::Reduced => grid(0.02, 30.0),
    };
    let space = Space::H2;
    let op = g.assemble(space, ScalingParam::identity())?;
    // the oracle table must cover the whole grid
    let rmax = g.radius + 10.0;
    let src = make_analytic_vector(space, &[[1.5, 0.0]], &[0.5], &[ONE], true)?;
    let ts = [0.04, 0.02, 0.01, 0.005];
    let mut checks = Vec::new();
    for lam in [c(-1.0, 0.0), c(0.1, -0.2)] {
        let sol = resolvent_apply(&op, lam, &op.sample(&src))?;
        let o = h2_radial_resolvent(lam, &|r| src.eval([r, 0.0]), rmax, 1e-4)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, x) in op.grid.nodes.iter().enumerate() {
            let w = op.grid.measure_weights[k];
            let want = o.eval(x[0]);
            num += (sol.u[k] - want).norm_sqr() * w;
            den += want.norm_sqr() * w;
        }
        checks.push(Check::new(
            format!("resolvent at lambda = {lam}, weighted relative error"),
            (num / den).sqrt(),
            Bound::AtMost,
            1e-4,
        ));
        for rc in [1.0, 2.0, 3.0] {
            let probe = make_analytic_vector(space, &[[rc, 0.0]], &[0.3], &[ONE], true)?;
            let o = h2_radial_resolvent(lam, &|r| probe.eval([r, 0.0]), rmax, 1e-4)?;
            for th in [0.0, -0.3] {
                let gs = green_function(lam, ScalingParam::uniform(c(0.0, th))?, &ts, &probe, &g, TubeRadius::default())?;
                checks.push(Check::new(
                    format!("Green at lambda = {lam}, probe radius {rc}, Im theta {th}"),
                    (gs.extrapolated - o.at_origin).norm() / o.at_origin.norm(),
                    Bound::AtMost,
                    1e-3,
                ));
            }
        }
    }
    Ok(checks)
}

fn no_spurious_resonances(res: Resolution) -> Result<Vec<Check>> {
    let g = match res {
        Resolution::Full => grid(0.01, 30.0),
        Resolution::Reduced => grid(0.02, 20.0),
    };
    let cfg = TrajectoryConfig {
        space: Space::H2,
        grid: g,
        count: 30,
        shift: None,
        tube: TubeRadius::default(),
        stationarity: 1e-2,
        exterior: None,
    };
    let thetas: Vec<Complex64> = (1..=7).map(|k| c(0.0, 0.1 * k as f64)).collect();
    let run = theta_trajectory(&thetas, &cfg)?;
    let confirmed = confirmed_resonances(&run, &cfg)?;
    Ok(vec![Check::new(
        "candidate paths surviving refinement and enlargement",
        confirmed.len() as f64,
        Bound::AtMost,
        0.0,
    )])
}

fn random_vector(space: Space, rng: &mut ChaCha8Rng) -> Result<AnalyticVector> {
    let n = rng.gen_range(1..=2);
    let mut centers = Vec::new();
    let mut widths = Vec::new();
    let mut coeffs = Vec::new();
    for _ in 0..n {
        let y = [rng.gen_range(0.0..1.2), rng.gen_range(0.0..1.2)];
        centers.push(match space {
            Space::H2 => [y[0], 0.0],
            Space::Sl3 => FlatPoint::from_chamber(y).x,
        });
        widths.push(rng.gen_range(0.4..2.0));
        coeffs.push(c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    make_analytic_vector(space, &centers, &widths, &coeffs, true)
}

fn unitarity_group_law(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for k in 0..10 {
        let space = if k % 2 == 0 { Space::H2 } else { Space::Sl3 };
        let f = random_vector(space, &mut rng)?;
        let th = rng.gen_range(-0.5..0.5);
        let sp = if k % 3 == 2 {
            ScalingParam::exterior(c(th, 0.0), CutoffProfile::new(rng.gen_range(0.5..2.0), 1.5)?)?
        } else {
            ScalingParam::uniform(c(th, 0.0))?
        };
        checks.push(Check::new(
            format!("unitarity, vector {k} ({space})"),
            unitarity_check(&sp, &f)?,
            Bound::AtMost,
            1e-8,
        ));
    }
    for k in 0..5 {
        let space = if k % 2 == 0 { Space::Sl3 } else { Space::H2 };
        let f = random_vector(space, &mut rng)?;
        let (a, b) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
        checks.push(Check::new(
            format!("group law, pair {k} ({a:.3}, {b:.3})"),
            group_law_check(a, b, &f)?,
            Bound::AtMost,
            1e-10,
        ));
    }
    Ok(checks)
}

fn coefficient_identity(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7);
    (0..20)
        .map(|k| {
            let y = [rng.gen_range(0.02..3.0), rng.gen_range(0.02..3.0)];
            let p = FlatPoint::from_chamber(y);
            Ok(Check::new(
                format!("point {k} at chamber ({:.3}, {:.3})", y[0], y[1]),
                coefficient_identity_check(&p)?,
                Bound::AtMost,
                1e-10,
            ))
        })
        .collect()
}

fn exterior_uniform(res: Resolution) -> Result<Vec<Check>> {
    let sl3 = match res {
        Resolution::Full => grid(0.035, 18.0),
        Resolution::Reduced => grid(0.035, 14.0),
    };
    let setups = [
        (Space::H2, grid(0.01, 30.0), c(0.5, 0.1), [1.0, 0.0], vec![0.04, 0.02, 0.01, 0.005]),
        (Space::Sl3, sl3, c(1.0, 0.3), [0.8, 0.3], vec![0.16, 0.08, 0.04, 0.02]),
    ];
    let theta = c(0.0, -0.5);
    let mut checks = Vec::new();
    for (space, g, lam, center, ts) in setups {
        let probe = make_analytic_vector(space, &[center], &[0.3], &[ONE], true)?;
        let cut = CutoffProfile::new(5.0, 2.0)?;
        let u = green_function(lam, ScalingParam::uniform(theta)?, &ts, &probe, &g, TubeRadius::default())?;
        let e = green_function(lam, ScalingParam::exterior(theta, cut)?, &ts, &probe, &g, TubeRadius::default())?;
        checks.push(Check::new(
            format!("{space} Green at lambda = {lam}, uniform vs exterior (T = 5)"),
            (u.extrapolated - e.extrapolated).norm() / e.extrapolated.norm(),
            Bound::AtMost,
            1e-3,
        ));
    }
    Ok(checks)
}

fn jump_across_cut(res: Resolution) -> Result<Vec<Check>> {
    let setups = match res {
        Resolution::Full => [(Space::H2, grid(0.01, 30.0)), (Space::Sl3, grid(0.05, 18.0))],
        Resolution::Reduced => [(Space::H2, grid(0.02, 30.0)), (Space::Sl3, grid(0.1, 12.0))],
    };
    let mut checks = Vec::new();
    for (space, g) in setups {
        let center = if space == Space::H2 { [1.0, 0.0] } else { [0.8, 0.3] };
        let f = make_analytic_vector(space, &[center], &[0.6], &[ONE], true)?;
        let lam = c(space.ev0() + 0.3, 0.0);
        let mut v = Vec::new();
        // boundary value from above on the physical sheet, then the continuation from below
        for b in [0.5, 0.65, -0.5, -0.65] {
            let op = g.assemble(space, ScalingParam::uniform(c(0.0, b))?)?;
            v.push(matrix_element_with(&op, &f, &f, lam, TubeRadius::default())?.value);
        }
        let cross = ((v[0] - v[1]).norm() / v[1].norm()).max((v[2] - v[3]).norm() / v[3].norm());
        let jump = (v[0] - v[2]).norm() / v[2].norm();
        checks.push(Check::new(
            format!("{space} jump / cross-theta residual at lambda = ev0 + 0.3"),
            jump / cross,
            Bound::Above,
            10.0,
        ));
    }
    Ok(checks)
}
