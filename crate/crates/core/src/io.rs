//! Run manifests and CSV output. Every CSV starts with the single line
//! `# manifest:<sha256 of the manifest JSON>`, followed by a header row.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Space;
use crate::spectral::{GreenSequence, MatrixElement, SpectrumResult, BRANCH_CONVENTION};

pub const EIGENVALUES_HEADER: &str = "index,theta_re,theta_im,eig_re,eig_im,class,ray_dist";
pub const TRACE_HEADER: &str = "lambda_re,lambda_im,value_re,value_im,theta_re,theta_im,sheet,residual";
pub const GREEN_HEADER: &str = "t,value_re,value_im";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub symscale: String,
    pub format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            symscale: env!("CARGO_PKG_VERSION").to_string(),
            format: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub space: Space,
    pub h: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    /// Every theta used by the run, in order.
    pub theta: Vec<Complex64>,
    pub ev0: f64,
    pub branch: String,
    pub versions: Versions,
    /// Digest of the configuration that produced the run.
    pub config_sha256: String,
}

impl Manifest {
    pub fn new(space: Space, h: f64, radius: f64, theta: Vec<Complex64>, config_sha256: String) -> Self {
        Manifest {
            space,
            h,
            radius,
            theta,
            ev0: space.ev0(),
            branch: BRANCH_CONVENTION.to_string(),
            versions: Versions::default(),
            config_sha256,
        }
    }

    /// Hash of the compact JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(s.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn preamble<W: Write>(out: &mut W, hash: &str, header: &str) -> Result<()> {
    writeln!(out, "# manifest:{hash}")?;
    writeln!(out, "{header}")?;
    Ok(())
}

pub fn write_eigenvalues_csv<W: Write>(mut out: W, hash: &str, spectra: &[SpectrumResult]) -> Result<()> {
    preamble(&mut out, hash, EIGENVALUES_HEADER)?;
    for s in spectra {
        for (k, e) in s.eigenvalues.iter().enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{},{},{}",
                s.theta.re,
                s.theta.im,
                e.re,
                e.im,
                s.classification[k].as_str(),
                s.ray_distance[k]
            )?;
        }
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut out: W, hash: &str, samples: &[MatrixElement]) -> Result<()> {
    preamble(&mut out, hash, TRACE_HEADER)?;
    for m in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.lambda.re,
            m.lambda.im,
            m.value.re,
            m.value.im,
            m.theta.re,
            m.theta.im,
            m.sheet.as_str(),
            m.residual
        )?;
    }
    Ok(())
}

pub fn write_green_csv<W: Write>(mut out: W, hash: &str, g: &GreenSequence) -> Result<()> {
    preamble(&mut out, hash, GREEN_HEADER)?;
    for (t, v) in g.t.iter().zip(&g.values) {
        writeln!(out, "{t},{},{}", v.re, v.im)?;
    }
    Ok(())
}

/// The hash on the first line of an output file, if it has one.
pub fn embedded_hash(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix("# manifest:")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub file: String,
    pub passed: bool,
}

/// Files in an output directory that are not tied to its manifest.
pub const UNHASHED_FILES: [&str; 3] = ["manifest.json", "verify.json", "error.json"];

/// Recompute the hash of `dir/manifest.json` and compare it with the
/// header of every CSV in `dir` and the `manifest` field of every other
/// JSON file.
pub fn check_output_dir(dir: &Path) -> Result<Vec<ManifestCheck>> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("manifest.json: {e}")))?;
    let want = m.hash();
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| !UNHASHED_FILES.iter().any(|u| n == *u)))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for p in files {
        let body = std::fs::read_to_string(&p)?;
        let found = if p.extension().is_some_and(|x| x == "csv") {
            embedded_hash(&body).map(str::to_owned)
        } else {
            serde_json::from_str::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v.get("manifest").and_then(|m| m.as_str()).map(str::to_owned))
        };
        out.push(ManifestCheck {
            file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            passed: found.as_deref() == Some(want.as_str()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::c;
    use crate::spectral::{classify_spectrum, TubeRadius};

    fn manifest() -> Manifest {
        Manifest::new(Space::H2, 0.01, 30.0, vec![c(0.0, 0.3)], "abc".into())
    }

    #[test]
    fn manifest_round_trip_and_stable_hash() {
        let m = manifest();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back: Manifest = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
        assert_eq!(m.hash().len(), 64);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"R\": 30.0"));
        assert!(text.contains("Im sqrt(lambda-ev0) < 0"));
        let mut other = m.clone();
        other.h = 0.02;
        assert_ne!(other.hash(), m.hash());
    }

    #[test]
    fn eigenvalue_csv_layout() {
        let th = c(0.0, 0.3);
        let e = vec![c(0.25, 0.0), c(0.25, 0.0) + Complex64::from_polar(1.0, -0.6), c(-0.5, -1.0)];
        let s = classify_spectrum(&e, th, 0.25, TubeRadius::default(), None).unwrap();
        let mut buf = Vec::new();
        write_eigenvalues_csv(&mut buf, "h0", &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# manifest:h0");
        assert_eq!(lines[1], EIGENVALUES_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0,0,0.3,0.25,0,continuum-ray,"));
        assert!(lines[4].contains(",candidate-resonance,"));
        assert_eq!(embedded_hash(&text), Some("h0"));
        assert!(!text.contains('\r'));
    }
}
