//! Subcommands of the `symscale` binary. Sweeps run on the rayon pool and
//! are collected in input order, so outputs do not depend on the number of
//! threads.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use symscale::io::{self, Manifest, ManifestCheck};
use symscale::spectral::{
    check_theta_order, confirmed_resonances, continue_across_cut, green_function, link_paths,
    matrix_element_with, spectrum, trajectory_shift, trajectory_spectrum, MatrixElement, BRANCH_CONVENTION,
};
use symscale::verify::{run_criterion, CriterionReport, Resolution, CRITERIA};
use symscale::{Complex64, Error};

pub use config::{parse_config, ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Trajectory,
    Resolvent,
    Green,
    Verify,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Module(#[from] Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Module(_) => 1,
        }
    }
}

pub struct RunOptions {
    pub out: PathBuf,
    pub quiet: bool,
}

impl RunOptions {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// Result of a successful run; `passed` is false only for a failing
/// `verify`.
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

fn manifest(cfg: &RunConfig, thetas: Vec<Complex64>) -> Manifest {
    Manifest::new(
        cfg.space,
        cfg.grid.h,
        cfg.grid.radius,
        thetas,
        io::sha256_hex(cfg.to_json().as_bytes()),
    )
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<PathBuf, Error> {
    let p = dir.join("manifest.json");
    let mut w = create(&p)?;
    m.write(&mut w)?;
    w.flush()?;
    Ok(p)
}

pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    std::fs::create_dir_all(&opts.out).map_err(Error::from)?;
    match cmd {
        Command::Spectrum => run_spectrum(cfg, opts),
        Command::Trajectory => run_trajectory(cfg, opts),
        Command::Resolvent => run_resolvent(cfg, opts),
        Command::Green => run_green(cfg, opts),
        Command::Verify => run_verify(cfg, opts),
    }
}

fn run_spectrum(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    let thetas = cfg.thetas();
    let ev0 = cfg.space.ev0();
    let params = thetas
        .iter()
        .map(|&t| cfg.scaling(t))
        .collect::<Result<Vec<_>, _>>()?;
    opts.note(&format!("spectrum: {} theta value(s) on {}", thetas.len(), cfg.space));
    let spectra = thetas
        .par_iter()
        .zip(params.par_iter())
        .map(|(&t, sp)| {
            let op = cfg.grid.assemble(cfg.space, *sp)?;
            let shift = cfg
                .spectrum
                .shift
                .unwrap_or_else(|| ev0 + Complex64::from_polar(0.5, -2.0 * t.im));
            spectrum(&op, cfg.spectrum.count, shift, cfg.spectrum.tube)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let m = manifest(cfg, thetas);
    let hash = m.hash();
    let mut files = vec![write_manifest(&opts.out, &m)?];
    let p = opts.out.join("eigenvalues.csv");
    let mut w = create(&p)?;
    io::write_eigenvalues_csv(&mut w, &hash, &spectra)?;
    w.flush().map_err(Error::from)?;
    files.push(p);
    let summary: Vec<_> = spectra
        .iter()
        .map(|s| json!({"theta": s.theta, "ray_fit": s.ray_fit, "warnings": s.warnings}))
        .collect();
    let p = opts.out.join("summary.json");
    write_json(&p, &json!({"manifest": hash, "spectra": summary}))?;
    files.push(p);
    Ok(Outcome { passed: true, files })
}

fn run_trajectory(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    let thetas = cfg.thetas();
    check_theta_order(&thetas)?;
    for &t in &thetas {
        cfg.scaling(t)?;
    }
    let tc = cfg.trajectory();
    let shift = trajectory_shift(&thetas, &tc);
    opts.note(&format!("trajectory: {} theta values, shift {shift}", thetas.len()));
    let spectra = thetas
        .par_iter()
        .map(|&t| trajectory_spectrum(t, shift, &tc))
        .collect::<Result<Vec<_>, Error>>()?;
    let run = link_paths(&thetas, spectra, tc.stationarity);
    let confirmed = confirmed_resonances(&run, &tc)?;
    let m = manifest(cfg, thetas);
    let hash = m.hash();
    let mut files = vec![write_manifest(&opts.out, &m)?];
    let p = opts.out.join("eigenvalues.csv");
    let mut w = create(&p)?;
    io::write_eigenvalues_csv(&mut w, &hash, &run.spectra)?;
    w.flush().map_err(Error::from)?;
    files.push(p);
    let paths: Vec<_> = run
        .paths
        .iter()
        .map(|p| {
            json!({
                "points": p.points.iter().map(|q| json!({"theta_index": q.0, "index": q.1, "eig": q.2})).collect::<Vec<_>>(),
                "score": if p.score.is_finite() { json!(p.score) } else { json!(null) },
                "ambiguous": p.ambiguous,
                "candidate": p.candidate,
            })
        })
        .collect();
    let p = opts.out.join("paths.json");
    write_json(
        &p,
        &json!({
            "manifest": hash,
            "matching_radius": run.matching_radius,
            "stationarity": tc.stationarity,
            "candidates": run.candidates().count(),
            "confirmed": confirmed,
            "paths": paths,
        }),
    )?;
    files.push(p);
    Ok(Outcome { passed: true, files })
}

fn run_resolvent(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    let theta = cfg.single_theta("resolvent")?;
    let sp = cfg.scaling(theta)?;
    let f = cfg.vector(&cfg.resolvent.f)?;
    let g = cfg.vector(&cfg.resolvent.g)?;
    let tube = cfg.spectrum.tube;
    let (samples, cross): (Vec<MatrixElement>, Option<f64>) = if let Some(path) = &cfg.lambda_path {
        opts.note(&format!("resolvent: path of {} points at theta = {theta}", path.len()));
        let tr = continue_across_cut(&f, &g, path, sp, &cfg.grid, tube)?;
        (tr.samples, tr.cross_theta_residual)
    } else {
        let lambdas = cfg.lambdas();
        if lambdas.is_empty() {
            return Err(ConfigError("resolvent needs lambda, lambda_path or lambda_grid".into()).into());
        }
        opts.note(&format!("resolvent: {} points at theta = {theta}", lambdas.len()));
        let op = cfg.grid.assemble(cfg.space, sp)?;
        let s = lambdas
            .par_iter()
            .map(|&l| matrix_element_with(&op, &f, &g, l, tube))
            .collect::<Result<Vec<_>, Error>>()?;
        (s, None)
    };
    let m = manifest(cfg, vec![theta]);
    let hash = m.hash();
    let mut files = vec![write_manifest(&opts.out, &m)?];
    let p = opts.out.join("trace.csv");
    let mut w = create(&p)?;
    io::write_trace_csv(&mut w, &hash, &samples)?;
    w.flush().map_err(Error::from)?;
    files.push(p);
    let p = opts.out.join("summary.json");
    write_json(
        &p,
        &json!({
            "manifest": hash,
            "theta": theta,
            "samples": samples.len(),
            "cross_theta_residual": cross,
            "branch_convention": BRANCH_CONVENTION,
        }),
    )?;
    files.push(p);
    Ok(Outcome { passed: true, files })
}

fn run_green(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    let theta = cfg.single_theta("green")?;
    let sp = cfg.scaling(theta)?;
    let lambda = cfg
        .lambda
        .ok_or_else(|| ConfigError("green needs a single lambda".into()))?;
    let probe = cfg.vector(&cfg.green.probe)?;
    opts.note(&format!("green: lambda = {lambda}, theta = {theta}"));
    let gs = green_function(lambda, sp, &cfg.green.t, &probe, &cfg.grid, cfg.spectrum.tube)?;
    let m = manifest(cfg, vec![theta]);
    let hash = m.hash();
    let mut files = vec![write_manifest(&opts.out, &m)?];
    let p = opts.out.join("green.csv");
    let mut w = create(&p)?;
    io::write_green_csv(&mut w, &hash, &gs)?;
    w.flush().map_err(Error::from)?;
    files.push(p);
    let p = opts.out.join("summary.json");
    write_json(
        &p,
        &json!({
            "manifest": hash,
            "lambda": gs.lambda,
            "theta": gs.theta,
            "extrapolated": gs.extrapolated,
            "residual": gs.residual,
        }),
    )?;
    files.push(p);
    Ok(Outcome { passed: true, files })
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    manifest: String,
    resolution: Resolution,
    seed: u64,
    passed: bool,
    criteria: &'a [CriterionReport],
    /// Outputs of an earlier run found in the output directory.
    manifest_checks: &'a [ManifestCheck],
}

fn run_verify(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, Failure> {
    let res = cfg.verify.resolution;
    let checks = if opts.out.join("manifest.json").exists() {
        io::check_output_dir(&opts.out)?
    } else {
        Vec::new()
    };
    for c in checks.iter().filter(|c| !c.passed) {
        opts.note(&format!("manifest mismatch: {}", c.file));
    }
    let ids: Vec<u32> = CRITERIA.iter().map(|c| c.0).collect();
    let reports: Vec<CriterionReport> = ids
        .par_iter()
        .map(|&id| run_criterion(id, res, cfg.seed))
        .collect();
    for r in &reports {
        opts.note(&r.summary());
    }
    let passed = reports.iter().all(|r| r.passed) && checks.iter().all(|c| c.passed);
    let m = manifest(cfg, Vec::new());
    let p = opts.out.join("verify.json");
    write_json(
        &p,
        &VerifyFile {
            manifest: m.hash(),
            resolution: res,
            seed: cfg.seed,
            passed,
            criteria: &reports,
            manifest_checks: &checks,
        },
    )?;
    Ok(Outcome {
        passed,
        files: vec![p],
    })
}

/// Machine-readable record of a failed run.
pub fn write_error_report(dir: &Path, f: &Failure) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let mut v = json!({
        "status": "error",
        "exit_code": f.exit_code(),
        "message": f.to_string(),
    });
    match f {
        Failure::Config(_) => v["category"] = json!("config"),
        Failure::Module(e) => {
            v["category"] = json!(e.category());
            if let Error::ContinuationBlocked {
                min_abs_im_theta, sign, ..
            } = e
            {
                v["min_abs_im_theta"] = json!(min_abs_im_theta);
                v["theta_sign"] = json!(sign);
            }
            if let Error::PoleProximity { nearest, .. } = e {
                v["nearest_eigenvalue"] = json!(nearest);
            }
        }
    }
    let p = dir.join("error.json");
    write_json(&p, &v)?;
    Ok(p)
}
