//! Serialization: solution documents, CSV tables and run manifests.
//!
//! Floating-point numbers are written with 17 significant digits so every
//! value reads back to the identical double.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fbvp::{FreeBoundarySolution, GridNode, ShootDiagnostics, INTERPOLATION};
use crate::market::MarketParams;

pub const SOLUTION_FORMAT: &str = "shadow-merton/solution";
pub const SOLUTION_VERSION: u32 = 1;

/// JSON formatter writing every `f64` as `{:.16e}`.
struct Sig17<F>(F);

impl<F: Formatter> Formatter for Sig17<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Single-line JSON with 17-digit floats.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(serde_json::ser::CompactFormatter));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Indented JSON with 17-digit floats and a trailing newline.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl FreeBoundarySolution {
    /// SHA-256 over the parameters, `Delta*` and the grid, bit-exact.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(SOLUTION_FORMAT.as_bytes());
        h.update(SOLUTION_VERSION.to_le_bytes());
        let p = &self.params;
        for v in [p.mu, p.sigma, p.delta, p.lambda_buy, p.lambda_sell, p.s0, p.eta_b, p.eta_s, self.delta_star] {
            h.update(v.to_le_bytes());
        }
        h.update((self.len() as u64).to_le_bytes());
        for n in self.grid() {
            h.update(n.y.to_le_bytes());
            h.update(n.g.to_le_bytes());
            h.update(n.g_prime.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagnosticsDoc {
    bracket: [f64; 2],
    shots: usize,
    end_value_residual: f64,
    end_slope_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridDoc {
    y: Vec<f64>,
    g: Vec<f64>,
    g_prime: Vec<f64>,
}

/// On-disk form of a [`FreeBoundarySolution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub format: String,
    pub version: u32,
    pub params: MarketParams,
    /// Shooting tolerance the solution was computed with.
    pub tol: f64,
    pub delta_star: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub y0: f64,
    pub m_prime: f64,
    pub fraction_lo: f64,
    pub fraction_hi: f64,
    pub interpolation: String,
    diagnostics: Option<DiagnosticsDoc>,
    grid: GridDoc,
    pub digest: String,
}

impl SolutionDocument {
    pub fn new(sol: &FreeBoundarySolution, tol: f64) -> Self {
        let (fraction_lo, fraction_hi) = sol.fraction_bounds();
        let nodes: Vec<GridNode> = sol.grid().collect();
        Self {
            format: SOLUTION_FORMAT.into(),
            version: SOLUTION_VERSION,
            params: sol.params,
            tol,
            delta_star: sol.delta_star,
            beta_lo: sol.beta_lo,
            beta_hi: sol.beta_hi,
            c_lo: sol.c_lo,
            c_hi: sol.c_hi,
            y0: sol.y0,
            m_prime: sol.m_prime,
            fraction_lo,
            fraction_hi,
            interpolation: INTERPOLATION.into(),
            diagnostics: sol.diagnostics.map(|d| DiagnosticsDoc {
                bracket: [d.bracket.0, d.bracket.1],
                shots: d.shots,
                end_value_residual: d.end_value_residual,
                end_slope_residual: d.end_slope_residual,
            }),
            grid: GridDoc {
                y: nodes.iter().map(|n| n.y).collect(),
                g: nodes.iter().map(|n| n.g).collect(),
                g_prime: nodes.iter().map(|n| n.g_prime).collect(),
            },
            digest: sol.digest(),
        }
    }

    /// Rebuilds the solution, rejecting documents whose content does not
    /// match their digest.
    pub fn into_solution(self) -> Result<FreeBoundarySolution> {
        if self.format != SOLUTION_FORMAT || self.version != SOLUTION_VERSION {
            return Err(Error::Validation(format!(
                "unsupported solution format {} v{}",
                self.format, self.version
            )));
        }
        let g = &self.grid;
        if g.y.len() != g.g.len() || g.y.len() != g.g_prime.len() {
            return Err(Error::Validation("grid columns differ in length".into()));
        }
        let nodes: Vec<GridNode> = (0..g.y.len())
            .map(|i| GridNode { y: g.y[i], g: g.g[i], g_prime: g.g_prime[i] })
            .collect();
        let diagnostics = self.diagnostics.as_ref().map(|d| ShootDiagnostics {
            bracket: (d.bracket[0], d.bracket[1]),
            shots: d.shots,
            end_value_residual: d.end_value_residual,
            end_slope_residual: d.end_slope_residual,
        });
        let params = self.params.validate()?;
        let sol = FreeBoundarySolution::from_grid(params, self.delta_star, &nodes, diagnostics)?;
        let digest = sol.digest();
        if digest != self.digest {
            return Err(Error::Provenance(format!(
                "solution digest {} does not match its content ({digest})",
                self.digest
            )));
        }
        let (flo, fhi) = sol.fraction_bounds();
        let derived = [
            (self.beta_lo, sol.beta_lo),
            (self.beta_hi, sol.beta_hi),
            (self.c_lo, sol.c_lo),
            (self.c_hi, sol.c_hi),
            (self.y0, sol.y0),
            (self.m_prime, sol.m_prime),
            (self.fraction_lo, flo),
            (self.fraction_hi, fhi),
        ];
        if derived.iter().any(|(a, b)| a != b) {
            return Err(Error::Provenance("summary fields disagree with the grid".into()));
        }
        sol.check_invariants(self.tol.max(1e-12))?;
        Ok(sol)
    }
}

pub fn save_solution(sol: &FreeBoundarySolution, tol: f64, path: &Path) -> Result<()> {
    fs::write(path, to_json_pretty(&SolutionDocument::new(sol, tol))?)?;
    Ok(())
}

/// Loads and verifies a solution file; returns it with its shooting tolerance.
pub fn load_solution(path: &Path) -> Result<(FreeBoundarySolution, f64)> {
    let text = fs::read_to_string(path)?;
    let doc: SolutionDocument = serde_json::from_str(&text)?;
    let tol = doc.tol;
    Ok((doc.into_solution()?, tol))
}

/// Name and digest of a file a run read or wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.display().to_string(), sha256: file_sha256(path)? })
    }
}

/// Wall-clock data; the only nondeterministic part of a manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunClock {
    pub started_unix: f64,
    pub wall_seconds: f64,
}

/// Record of one command invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub params: serde_json::Value,
    pub settings: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub step_counts: serde_json::Value,
    /// SHA-256 of this manifest with `clock` and `digest` left out.
    pub digest: String,
    pub clock: RunClock,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            params: serde_json::Value::Null,
            settings: serde_json::Value::Null,
            seeds: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            step_counts: serde_json::Value::Null,
            digest: String::new(),
            clock: RunClock::default(),
        }
    }

    fn content_digest(&self) -> Result<String> {
        let mut bare = self.clone();
        bare.digest.clear();
        bare.clock = RunClock::default();
        Ok(sha256_hex(to_json_line(&bare)?.as_bytes()))
    }

    /// Seals the digest and writes the manifest.
    pub fn write(mut self, path: &Path) -> Result<()> {
        self.digest = self.content_digest()?;
        fs::write(path, to_json_pretty(&self)?)?;
        Ok(())
    }

    /// Checks the manifest's own digest and every referenced output file.
    /// Relative output paths are taken from the manifest's directory.
    pub fn verify(path: &Path) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.content_digest()? != m.digest {
            return Err(Error::Provenance("manifest digest mismatch".into()));
        }
        for f in &m.outputs {
            let p = match Path::new(&f.path) {
                p if p.is_absolute() => p.to_path_buf(),
                p => path.parent().unwrap_or(Path::new("")).join(p),
            };
            if !p.exists() {
                return Err(Error::Provenance(format!("{} is missing", f.path)));
            }
            if file_sha256(&p)? != f.sha256 {
                return Err(Error::Provenance(format!("{} changed since the run", f.path)));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbvp::{shoot, ShootControl};

    #[test]
    fn floats_use_seventeen_digits_and_round_trip() {
        let xs = [0.1, 1.0 / 3.0, 2.0f64.sqrt(), -1e-300, 123456.0];
        let line = to_json_line(&xs).unwrap();
        assert!(line.contains("1.0000000000000001e-1"), "{line}");
        let back: Vec<f64> = serde_json::from_str(&line).unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn solution_round_trip_and_tamper_detection() {
        let sol = shoot(&MarketParams::default(), 1e-10, &ShootControl::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("sol.json");
        save_solution(&sol, 1e-10, &file).unwrap();
        let (back, tol) = load_solution(&file).unwrap();
        assert_eq!(back, sol);
        assert_eq!(tol, 1e-10);
        assert_eq!(back.digest(), sol.digest());

        let text = fs::read_to_string(&file).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut edited = doc.clone();
        edited["grid"]["g"][5] = serde_json::json!(doc["grid"]["g"][5].as_f64().unwrap() + 1e-9);
        fs::write(&file, edited.to_string()).unwrap();
        assert!(matches!(load_solution(&file), Err(Error::Provenance(_))));

        let mut edited = doc.clone();
        edited["params"]["mu"] = serde_json::json!(0.07);
        fs::write(&file, edited.to_string()).unwrap();
        assert!(matches!(load_solution(&file), Err(Error::Provenance(_))));
    }

    #[test]
    fn manifest_digest_ignores_clock() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.txt");
        fs::write(&out, "x").unwrap();
        let make = |clock: f64, path: &Path| {
            let mut m = RunManifest::new("solve");
            m.outputs.push(FileDigest::of(&out).unwrap());
            m.clock = RunClock { started_unix: clock, wall_seconds: 1.0 };
            m.write(path).unwrap();
            RunManifest::verify(path).unwrap().digest
        };
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        assert_eq!(make(1.0, &a), make(2.0, &b));
        fs::write(&out, "y").unwrap();
        assert!(matches!(RunManifest::verify(&a), Err(Error::Provenance(_))));
    }
}
