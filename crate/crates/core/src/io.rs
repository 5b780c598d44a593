//! File formats: canonical instance JSON, trace CSV plus sidecar, reference
//! and bound-report files.
//!
//! JSON is written with sorted keys and every float as `{:.16e}`, so a
//! value that survives a load/save cycle is byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::outer::{OuterConfig, OuterTrace, TraceRow};
use crate::problem::{CompositeTerm, LinearConstraint, ProblemInstance, SmoothTerm};
use crate::theory::{BoundReport, ReferenceSolution};

pub const INSTANCE_FORMAT: &str = "ial-instance/1";
pub const TRACE_FORMAT: &str = "ial-trace/1";
pub const REFERENCE_FORMAT: &str = "ial-reference/1";
pub const TRACE_HEADER: [&str; 7] = ["k", "eta", "gap", "feas", "F", "albar", "inner_iters"];

struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Compact JSON with sorted keys, 17 significant digits per float and a trailing newline.
///
/// Non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter);
    tree.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let ncols = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Format(format!("matrix {what} has no rows")))?;
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("matrix {what} is ragged")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Format(format!("matrix {what}: {e}")))
}

fn vectors(path: &[Array1<f64>]) -> Vec<Vec<f64>> {
    path.iter().map(|v| v.to_vec()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum SmoothFile {
    Zero,
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64> },
    LeastSquares { m: Vec<Vec<f64>>, y: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum CompositeFile {
    Simplex { radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    L1Box { tau: f64, radius: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format: String,
    name: String,
    smooth: SmoothFile,
    composite: CompositeFile,
    constraint: ConstraintFile,
}

/// Canonical JSON text of an instance. Derived constants are recomputed on load and not stored.
pub fn instance_to_json(p: &ProblemInstance) -> Result<String> {
    let smooth = match &p.smooth {
        SmoothTerm::Zero => SmoothFile::Zero,
        SmoothTerm::Quadratic { q, c, .. } => SmoothFile::Quadratic {
            q: to_rows(q),
            c: c.to_vec(),
        },
        SmoothTerm::LeastSquares { m, y, .. } => SmoothFile::LeastSquares {
            m: to_rows(m),
            y: y.to_vec(),
        },
    };
    let composite = match &p.composite {
        CompositeTerm::Simplex { radius } => CompositeFile::Simplex { radius: *radius },
        CompositeTerm::Box { lo, hi } => CompositeFile::Box {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        },
        CompositeTerm::L1Box { tau, radius } => CompositeFile::L1Box {
            tau: *tau,
            radius: *radius,
        },
    };
    to_canonical_json(&InstanceFile {
        format: INSTANCE_FORMAT.into(),
        name: p.name.clone(),
        smooth,
        composite,
        constraint: ConstraintFile {
            a: to_rows(&p.constraint.a),
            b: p.constraint.b.to_vec(),
        },
    })
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.format != INSTANCE_FORMAT {
        return Err(Error::Format(format!(
            "expected format {INSTANCE_FORMAT}, found {}",
            file.format
        )));
    }
    let smooth = match file.smooth {
        SmoothFile::Zero => SmoothTerm::Zero,
        SmoothFile::Quadratic { q, c } => SmoothTerm::quadratic(from_rows(&q, "q")?, Array1::from(c))?,
        SmoothFile::LeastSquares { m, y } => SmoothTerm::least_squares(from_rows(&m, "m")?, Array1::from(y))?,
    };
    let composite = match file.composite {
        CompositeFile::Simplex { radius } => CompositeTerm::simplex(radius)?,
        CompositeFile::Box { lo, hi } => CompositeTerm::boxed(Array1::from(lo), Array1::from(hi))?,
        CompositeFile::L1Box { tau, radius } => CompositeTerm::l1_box(tau, radius)?,
    };
    let a = from_rows(&file.constraint.a, "a")?;
    let constraint = LinearConstraint::new(a, Array1::from(file.constraint.b))?;
    ProblemInstance::new(file.name, smooth, composite, constraint)
}

/// Writes the instance and returns the SHA-256 of the written bytes.
pub fn write_instance(p: &ProblemInstance, path: &Path) -> Result<String> {
    let text = instance_to_json(p)?;
    fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Loads an instance and the SHA-256 of the file as stored.
pub fn read_instance(path: &Path) -> Result<(ProblemInstance, String)> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("instance is not UTF-8: {e}")))?;
    Ok((instance_from_json(text)?, sha256_hex(&bytes)))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            float(r.eta),
            float(r.gap),
            float(r.feas),
            float(r.objective),
            float(r.albar),
            r.inner_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, line: usize, column: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("trace line {line}: bad {column} value '{field}'")))
}

/// Reads a trace CSV; any header other than the exact column list is rejected.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(Error::Format(format!(
            "unexpected trace header {:?}, expected {}",
            header,
            TRACE_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let rec = record?;
        let line = i + 2;
        let row = TraceRow {
            k: parse(&rec[0], line, "k")?,
            eta: parse(&rec[1], line, "eta")?,
            gap: parse(&rec[2], line, "gap")?,
            feas: parse(&rec[3], line, "feas")?,
            objective: parse(&rec[4], line, "F")?,
            albar: parse(&rec[5], line, "albar")?,
            inner_iters: parse(&rec[6], line, "inner_iters")?,
        };
        if row.k != rows.len() + 1 {
            return Err(Error::Format(format!(
                "trace line {line}: expected k = {}",
                rows.len() + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// JSON companion of `trace.csv` holding everything the CSV does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub format: String,
    pub config: OuterConfig,
    pub instance_hash: String,
    pub instance_name: String,
    pub seed: Option<u64>,
    /// `λ¹ … λᴷ⁺¹`.
    pub lambda_path: Vec<Vec<f64>>,
    /// `x¹ … xᴷ⁺¹`.
    pub x_path: Vec<Vec<f64>>,
    pub lambda_final: Vec<f64>,
    pub x_final: Vec<f64>,
    pub flagged_rows: Vec<usize>,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl TraceSidecar {
    pub fn new(trace: &OuterTrace, config: &OuterConfig, instance_hash: &str, aborted: Option<String>) -> Self {
        TraceSidecar {
            format: TRACE_FORMAT.into(),
            config: config.clone(),
            instance_hash: instance_hash.into(),
            instance_name: trace.instance_name.clone(),
            seed: trace.seed,
            lambda_path: vectors(&trace.lambdas),
            x_path: vectors(&trace.iterates),
            lambda_final: trace.final_lambda().to_vec(),
            x_final: trace.final_x().to_vec(),
            flagged_rows: trace.flagged.clone(),
            aborted,
        }
    }
}

pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";

/// Writes `trace.csv` and `trace.json` into `dir`.
pub fn write_trace(dir: &Path, trace: &OuterTrace, sidecar: &TraceSidecar) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(TRACE_CSV);
    let json_path = dir.join(TRACE_JSON);
    write_trace_csv(&csv_path, &trace.rows)?;
    write_json(&json_path, sidecar)?;
    Ok((csv_path, json_path))
}

/// Rebuilds an [`OuterTrace`] from `trace.csv` and `trace.json` in `dir`.
pub fn read_trace(dir: &Path) -> Result<(OuterTrace, TraceSidecar)> {
    let rows = read_trace_csv(&dir.join(TRACE_CSV))?;
    let sidecar: TraceSidecar = read_json(&dir.join(TRACE_JSON))?;
    if sidecar.format != TRACE_FORMAT {
        return Err(Error::Format(format!(
            "expected format {TRACE_FORMAT}, found {}",
            sidecar.format
        )));
    }
    let count = rows.len() + 1;
    if sidecar.lambda_path.len() != count || sidecar.x_path.len() != count {
        return Err(Error::Format(format!(
            "sidecar paths hold {} multipliers and {} iterates for {} rows",
            sidecar.lambda_path.len(),
            sidecar.x_path.len(),
            rows.len()
        )));
    }
    let uniform = |path: &[Vec<f64>], what: &str| -> Result<Vec<Array1<f64>>> {
        let len = path[0].len();
        if path.iter().any(|v| v.len() != len) {
            return Err(Error::Format(format!("{what} has vectors of different lengths")));
        }
        Ok(path.iter().map(|v| Array1::from(v.clone())).collect())
    };
    let lambdas = uniform(&sidecar.lambda_path, "lambda_path")?;
    let iterates = uniform(&sidecar.x_path, "x_path")?;
    if sidecar.lambda_path.last() != Some(&sidecar.lambda_final) || sidecar.x_path.last() != Some(&sidecar.x_final) {
        return Err(Error::Format("final vectors disagree with the recorded paths".into()));
    }
    let trace = OuterTrace {
        instance_name: sidecar.instance_name.clone(),
        beta: sidecar.config.beta,
        schedule: sidecar.config.schedule.clone(),
        seed: sidecar.seed,
        rows,
        lambdas,
        iterates,
        flagged: sidecar.flagged_rows.clone(),
    };
    Ok((trace, sidecar))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub format: String,
    pub instance_hash: String,
    pub beta: f64,
    pub tol: f64,
    pub f_star: f64,
    pub feas: f64,
    pub gap: f64,
    pub outer_iters: usize,
    pub lambda_star: Vec<f64>,
    pub x_star: Vec<f64>,
}

impl ReferenceFile {
    pub fn new(r: &ReferenceSolution, instance_hash: &str) -> Self {
        ReferenceFile {
            format: REFERENCE_FORMAT.into(),
            instance_hash: instance_hash.into(),
            beta: r.beta,
            tol: r.tol,
            f_star: r.f_star,
            feas: r.feas,
            gap: r.gap,
            outer_iters: r.outer_iters,
            lambda_star: r.lambda_star.to_vec(),
            x_star: r.x_star.to_vec(),
        }
    }

    pub fn to_solution(&self) -> Result<ReferenceSolution> {
        if self.format != REFERENCE_FORMAT {
            return Err(Error::Format(format!(
                "expected format {REFERENCE_FORMAT}, found {}",
                self.format
            )));
        }
        Ok(ReferenceSolution {
            x_star: Array1::from(self.x_star.clone()),
            lambda_star: Array1::from(self.lambda_star.clone()),
            f_star: self.f_star,
            beta: self.beta,
            tol: self.tol,
            feas: self.feas,
            gap: self.gap,
            outer_iters: self.outer_iters,
        })
    }
}

pub fn write_reference(path: &Path, r: &ReferenceSolution, instance_hash: &str) -> Result<()> {
    write_json(path, &ReferenceFile::new(r, instance_hash))
}

pub fn read_reference(path: &Path) -> Result<ReferenceFile> {
    read_json(path)
}

/// Serialized form of a [`BoundReport`]; per-index margins live in a CSV next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub check: String,
    pub passed: bool,
    pub skipped: bool,
    pub first_violation_k: Option<usize>,
    pub min_margin: Option<f64>,
    pub violations: usize,
    pub slack: f64,
    pub note: Option<String>,
    /// Relative to the directory holding the report.
    pub margins_csv_path: String,
}

/// Writes `<check>.json` and `<check>_margins.csv` into `dir`; returns the JSON path.
pub fn write_report(dir: &Path, report: &BoundReport) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{}_margins.csv", report.check);
    let mut w = csv::Writer::from_path(dir.join(&csv_name))?;
    w.write_record(["k", "margin"])?;
    for (k, m) in &report.margins {
        w.write_record([k.to_string(), float(*m)])?;
    }
    w.flush()?;
    let file = ReportFile {
        check: report.check.clone(),
        passed: report.passed,
        skipped: report.skipped,
        first_violation_k: report.first_violation_k,
        min_margin: report.min_margin,
        violations: report.violations,
        slack: report.slack,
        note: report.note.clone(),
        margins_csv_path: csv_name,
    };
    let path = dir.join(format!("{}.json", report.check));
    write_json(&path, &file)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate, Family};

    #[test]
    fn canonical_floats_round_trip() {
        let values = vec![0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0, -0.0, f64::MIN_POSITIVE, f64::MAX];
        let text = to_canonical_json(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits(), "{text}");
        }
        assert_eq!(to_canonical_json(&back).unwrap(), text);
        assert_eq!(to_canonical_json(&vec![f64::NAN]).unwrap(), "[null]\n");
    }

    #[test]
    fn keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(
            to_canonical_json(&S { zeta: 1, alpha: 2 }).unwrap(),
            "{\"alpha\":2,\"zeta\":1}\n"
        );
    }

    #[test]
    fn instance_round_trip_is_byte_identical() {
        for family in Family::ALL {
            let p = generate(family, 6, 3, 5).unwrap().instance;
            let text = instance_to_json(&p).unwrap();
            let q = instance_from_json(&text).unwrap();
            assert_eq!(p, q);
            assert_eq!(instance_to_json(&q).unwrap(), text);
        }
    }

    #[test]
    fn instance_rejects_unknown_fields_and_formats() {
        let p = generate(Family::BoxQp, 3, 2, 1).unwrap().instance;
        let text = instance_to_json(&p).unwrap();
        let extra = text.replacen('{', "{\"extra\":1,", 1);
        assert!(instance_from_json(&extra).is_err());
        let wrong = text.replace(INSTANCE_FORMAT, "ial-instance/0");
        assert!(matches!(instance_from_json(&wrong), Err(Error::Format(_))));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
