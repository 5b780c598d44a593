//! Run bundles on disk: solve an instance into a directory, verify the
//! recorded trace, and sweep parameter grids.
//!
//! A bundle directory holds `instance.json`, `trace.csv`, `trace.json`,
//! `summary.json` and, after verification, `reference.json`,
//! `verification.json` and `reports/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{InnerConfig, InnerMethod};
use crate::io::{self, ReferenceFile, TraceSidecar};
use crate::outer::{run_ial_seeded, OuterConfig, OuterTrace, ToleranceSchedule};
use crate::par;
use crate::problem::ProblemInstance;
use crate::theory::{
    compute_reference, rate_slopes, verify_trace, RateSlopes, ReferenceSolution, TheoryConstants, Verification,
};

pub const INSTANCE_JSON: &str = "instance.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const REFERENCE_JSON: &str = "reference.json";
pub const VERIFICATION_JSON: &str = "verification.json";
pub const REPORTS_DIR: &str = "reports";
pub const SWEEP_SUMMARY_CSV: &str = "summary.csv";

/// Headline numbers of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instance_hash: String,
    pub instance_name: String,
    pub outer_iters: usize,
    pub final_gap: Option<f64>,
    pub final_feas: Option<f64>,
    pub final_objective: Option<f64>,
    pub total_inner_iters: usize,
    pub wall_time_s: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunBundle {
    pub dir: PathBuf,
    pub instance_hash: String,
    pub config: OuterConfig,
    pub trace_csv: PathBuf,
    pub sidecar: PathBuf,
    pub summary: RunSummary,
}

/// Solves the instance stored at `instance_path` and writes a bundle into `out_dir`.
///
/// An inner budget abort still writes the partial trace; `summary.aborted`
/// then carries the reason.
pub fn solve_instance_file(
    instance_path: &Path,
    cfg: &OuterConfig,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<RunBundle> {
    let bytes = fs::read(instance_path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("instance is not UTF-8: {e}")))?;
    let p = io::instance_from_json(text)?;
    let hash = io::sha256_hex(&bytes);
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(INSTANCE_JSON), &bytes)?;
    solve_into(&p, &hash, cfg, seed, out_dir)
}

fn solve_into(
    p: &ProblemInstance,
    hash: &str,
    cfg: &OuterConfig,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<RunBundle> {
    let started = Instant::now();
    let (trace, aborted) = match run_ial_seeded(p, cfg, seed) {
        Ok(t) => (t, None),
        Err(Error::OuterAborted { k, partial, source }) => (*partial, Some(format!("aborted at k = {k}: {source}"))),
        Err(e) => return Err(e),
    };
    let wall = started.elapsed().as_secs_f64();
    let sidecar = TraceSidecar::new(&trace, cfg, hash, aborted.clone());
    let (trace_csv, sidecar_path) = io::write_trace(out_dir, &trace, &sidecar)?;
    let last = trace.rows.last();
    let summary = RunSummary {
        instance_hash: hash.into(),
        instance_name: trace.instance_name.clone(),
        outer_iters: trace.len(),
        final_gap: last.map(|r| r.gap),
        final_feas: last.map(|r| r.feas),
        final_objective: last.map(|r| r.objective),
        total_inner_iters: trace.rows.iter().map(|r| r.inner_iters).sum(),
        wall_time_s: wall,
        aborted,
    };
    io::write_json(&out_dir.join(SUMMARY_JSON), &summary)?;
    Ok(RunBundle {
        dir: out_dir.to_path_buf(),
        instance_hash: hash.into(),
        config: cfg.clone(),
        trace_csv,
        sidecar: sidecar_path,
        summary,
    })
}

/// Loads a bundle's instance and trace, checking that the trace was produced from this exact file.
pub fn load_bundle(dir: &Path) -> Result<(ProblemInstance, String, OuterTrace, TraceSidecar)> {
    let (trace, sidecar) = io::read_trace(dir)?;
    let (p, hash) = io::read_instance(&dir.join(INSTANCE_JSON))?;
    if hash != sidecar.instance_hash {
        return Err(Error::Format(format!(
            "instance hash {hash} does not match the trace's {}",
            sidecar.instance_hash
        )));
    }
    Ok((p, hash, trace, sidecar))
}

/// Loads `path` if it is a reference for this instance at least as accurate as `tol`;
/// otherwise computes one and stores it there.
pub fn load_or_compute_reference(
    path: &Path,
    p: &ProblemInstance,
    instance_hash: &str,
    beta: f64,
    tol: f64,
) -> Result<ReferenceSolution> {
    if path.exists() {
        let file: ReferenceFile = io::read_reference(path)?;
        if file.instance_hash == instance_hash && file.tol <= tol {
            return file.to_solution();
        }
    }
    let reference = compute_reference(p, beta, tol)?;
    io::write_reference(path, &reference, instance_hash)?;
    Ok(reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub passed: bool,
    pub skipped: bool,
    pub first_violation_k: Option<usize>,
}

/// Contents of `verification.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub instance_hash: String,
    pub passed: bool,
    pub reference_tol: f64,
    pub f_star: f64,
    pub final_objective_gap: Option<f64>,
    pub final_delta: Option<f64>,
    pub constants: TheoryConstants,
    pub slopes: RateSlopes,
    pub slope_window: (usize, usize),
    pub checks: Vec<CheckSummary>,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub verification: Verification,
    pub summary: VerificationSummary,
    pub report_paths: Vec<PathBuf>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }
}

/// Slope window used for summaries: `[max(1, K/10), K]`, i.e. `[50, 500]` for `K = 500`.
pub fn slope_window(k: usize) -> (usize, usize) {
    ((k / 10).max(1), k)
}

/// Builds or loads the reference, runs every check and writes the reports into the bundle.
pub fn verify_bundle(dir: &Path, reference_tol: f64) -> Result<VerifyOutcome> {
    let (p, hash, trace, _) = load_bundle(dir)?;
    let reference = load_or_compute_reference(&dir.join(REFERENCE_JSON), &p, &hash, trace.beta, reference_tol)?;
    let verification = verify_trace(&p, &trace, &reference, reference_tol)?;
    let reports_dir = dir.join(REPORTS_DIR);
    let report_paths = verification
        .reports
        .iter()
        .map(|r| io::write_report(&reports_dir, r))
        .collect::<Result<Vec<_>>>()?;
    let window = slope_window(trace.len());
    let summary = VerificationSummary {
        instance_hash: hash,
        passed: verification.passed(),
        reference_tol,
        f_star: reference.f_star,
        final_objective_gap: trace.rows.last().map(|r| r.objective - reference.f_star),
        final_delta: trace.len().checked_sub(1).map(|i| verification.deltas[i]),
        constants: verification.constants.clone(),
        slopes: rate_slopes(&trace, &verification.deltas, reference.f_star, window.0, window.1),
        slope_window: window,
        checks: verification
            .reports
            .iter()
            .map(|r| CheckSummary {
                check: r.check.clone(),
                passed: r.passed,
                skipped: r.skipped,
                first_violation_k: r.first_violation_k,
            })
            .collect(),
    };
    io::write_json(&dir.join(VERIFICATION_JSON), &summary)?;
    Ok(VerifyOutcome {
        verification,
        summary,
        report_paths,
    })
}

/// Parameter grid for [`run_sweep`]; every combination becomes one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub methods: Vec<InnerMethod>,
    pub outer_iters: usize,
    pub inner_budget: Option<usize>,
    pub reference_tol: f64,
    pub warm_start: bool,
    pub seed: Option<u64>,
}

impl SweepConfig {
    /// Combinations in `β`-major, then `σ`, `α`, method order.
    pub fn combinations(&self) -> Result<Vec<(f64, f64, f64, InnerMethod)>> {
        if self.betas.is_empty() || self.sigmas.is_empty() || self.alphas.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "every sweep list needs at least one value".into(),
            ));
        }
        let mut out = Vec::new();
        for &b in &self.betas {
            for &s in &self.sigmas {
                for &a in &self.alphas {
                    for &m in &self.methods {
                        out.push((b, s, a, m));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn outer_config(&self, beta: f64, sigma: f64, alpha: f64, method: InnerMethod) -> Result<OuterConfig> {
        let mut inner = InnerConfig::for_method(method);
        if let Some(b) = self.inner_budget {
            inner = inner.with_budget(b);
        }
        let mut cfg =
            OuterConfig::new(beta, self.outer_iters, ToleranceSchedule::power_law(sigma, alpha)?).with_inner(inner);
        cfg.warm_start = self.warm_start;
        Ok(cfg)
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run: String,
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub method: String,
    pub final_delta: Option<f64>,
    pub slope: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_feas: Option<f64>,
    pub passed: Option<bool>,
    /// `ok`, `aborted: …` or `error: …`.
    pub status: String,
}

/// Runs every combination in parallel, each into `out_dir/run_NNN`, and writes `summary.csv`.
///
/// A failing run is recorded in its row and does not stop the others.
pub fn run_sweep(instance_path: &Path, cfg: &SweepConfig, out_dir: &Path) -> Result<Vec<SweepRow>> {
    let combos = cfg.combinations()?;
    let (p, hash) = io::read_instance(instance_path)?;
    let bytes = fs::read(instance_path)?;
    fs::create_dir_all(out_dir)?;

    let mut betas: Vec<f64> = cfg.betas.clone();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let references: BTreeMap<u64, std::result::Result<ReferenceSolution, String>> = par::map(betas.len(), |i| {
        (
            betas[i].to_bits(),
            compute_reference(&p, betas[i], cfg.reference_tol).map_err(|e| e.to_string()),
        )
    })
    .into_iter()
    .collect();

    let rows = par::map(combos.len(), |i| {
        let (beta, sigma, alpha, method) = combos[i];
        let run = format!("run_{i:03}");
        let mut row = SweepRow {
            run: run.clone(),
            alpha,
            sigma,
            beta,
            method: method.short_name().into(),
            final_delta: None,
            slope: None,
            final_gap: None,
            final_feas: None,
            passed: None,
            status: "ok".into(),
        };
        let dir = out_dir.join(&run);
        let result = (|| -> Result<()> {
            let outer = cfg.outer_config(beta, sigma, alpha, method)?;
            fs::create_dir_all(&dir)?;
            fs::write(dir.join(INSTANCE_JSON), &bytes)?;
            let bundle = solve_into(&p, &hash, &outer, cfg.seed, &dir)?;
            row.final_gap = bundle.summary.final_gap;
            row.final_feas = bundle.summary.final_feas;
            if let Some(reason) = bundle.summary.aborted {
                row.status = format!("aborted: {reason}");
                return Ok(());
            }
            let reference = references[&beta.to_bits()]
                .as_ref()
                .map_err(|e| Error::Reference(e.clone()))?;
            io::write_reference(&dir.join(REFERENCE_JSON), reference, &hash)?;
            let outcome = verify_bundle(&dir, cfg.reference_tol)?;
            row.final_delta = outcome.summary.final_delta;
            row.slope = outcome.summary.slopes.delta;
            row.passed = Some(outcome.passed());
            Ok(())
        })();
        if let Err(e) = result {
            row.status = format!("error: {e}");
        }
        row
    });
    write_sweep_summary(&out_dir.join(SWEEP_SUMMARY_CSV), &rows)?;
    Ok(rows)
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_summary(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
