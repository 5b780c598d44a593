//! WebAssembly entry points for the page in `www/`.
//!
//! Each export returns a JSON string. The functions behind them are plain Rust
//! and are tested natively.

use ial_core::augmented::{dual_value_and_grad, AugmentedLagrangian, DualState, REFERENCE_TOL};
use ial_core::outer::{run_ial, OuterConfig, ToleranceSchedule};
use ial_core::problem::{generate, CompositeTerm, Family, LinearConstraint, ProblemInstance, SmoothTerm};
use ial_core::theory::{compute_reference, lemma4_sequence, verify_trace, TheoryConstants};
use ndarray::array;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_N: usize = 30;
pub const MAX_M: usize = 8;
pub const MAX_ITERS: usize = 400;
pub const MAX_FIELD_RES: usize = 240;
pub const MAX_RECURSION_LEN: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub check: String,
    pub passed: bool,
    pub skipped: bool,
    pub first_violation_k: Option<usize>,
}

/// Measured sequences next to their bounds, indexed by `k = 1 … K`.
#[derive(Debug, Clone, Serialize)]
pub struct Curves {
    pub k: Vec<usize>,
    pub eta: Vec<f64>,
    pub gap: Vec<f64>,
    pub delta: Vec<f64>,
    /// `C/k^α`.
    pub delta_bound: Vec<f64>,
    /// `τ1/k + τ2√η_k` from `k0` on.
    pub theorem2_bound: Vec<Option<f64>>,
    pub feas_sq: Vec<f64>,
    pub psi: Vec<f64>,
    pub primal_gap: Vec<f64>,
    pub f_star: f64,
    pub constants: TheoryConstants,
    pub checks: Vec<CheckLine>,
    pub passed: bool,
}

fn bounded(name: &str, v: usize, lo: usize, hi: usize) -> Result<(), String> {
    if v < lo || v > hi {
        return Err(format!("{name} must lie in [{lo}, {hi}], got {v}"));
    }
    Ok(())
}

/// Generates an instance, runs the outer loop cold-started and checks every bound.
#[allow(clippy::too_many_arguments)]
pub fn solve_curves(
    family: &str,
    n: usize,
    m: usize,
    seed: u64,
    beta: f64,
    sigma: f64,
    alpha: f64,
    iters: usize,
) -> Result<Curves, String> {
    bounded("n", n, 2, MAX_N)?;
    bounded("m", m, 1, MAX_M.min(n))?;
    bounded("iterations", iters, 2, MAX_ITERS)?;
    let family: Family = family.parse().map_err(|e: ial_core::Error| e.to_string())?;
    let p = generate(family, n, m, seed).map_err(|e| e.to_string())?.instance;
    let schedule = ToleranceSchedule::power_law(sigma, alpha).map_err(|e| e.to_string())?;
    let mut cfg = OuterConfig::new(beta, iters, schedule);
    cfg.warm_start = false;
    let reference = compute_reference(&p, beta, REFERENCE_TOL).map_err(|e| e.to_string())?;
    let trace = run_ial(&p, &cfg).map_err(|e| e.to_string())?;
    let v = verify_trace(&p, &trace, &reference, REFERENCE_TOL).map_err(|e| e.to_string())?;
    let tc = &v.constants;
    let (c, alpha) = (tc.c.unwrap_or(f64::NAN), tc.alpha.unwrap_or(f64::NAN));
    let rows = &trace.rows;
    Ok(Curves {
        k: rows.iter().map(|r| r.k).collect(),
        eta: rows.iter().map(|r| r.eta).collect(),
        gap: rows.iter().map(|r| r.gap).collect(),
        delta: v.deltas[..rows.len()].to_vec(),
        delta_bound: rows.iter().map(|r| c / (r.k as f64).powf(alpha)).collect(),
        theorem2_bound: rows
            .iter()
            .map(|r| match (tc.k0, tc.tau1, tc.tau2) {
                (Some(k0), Some(t1), Some(t2)) if r.k >= k0 => Some(t1 / r.k as f64 + t2 * r.eta.sqrt()),
                _ => None,
            })
            .collect(),
        feas_sq: rows.iter().map(|r| r.feas * r.feas).collect(),
        psi: rows.iter().map(|r| tc.psi(r.k).unwrap_or(f64::NAN)).collect(),
        primal_gap: rows.iter().map(|r| (r.objective - reference.f_star).abs()).collect(),
        f_star: reference.f_star,
        constants: tc.clone(),
        checks: v
            .reports
            .iter()
            .map(|r| CheckLine {
                check: r.check.clone(),
                passed: r.passed,
                skipped: r.skipped,
                first_violation_k: r.first_violation_k,
            })
            .collect(),
        passed: v.passed(),
    })
}

/// Gap certificate sampled on a square grid; `None` outside `dom g`.
#[derive(Debug, Clone, Serialize)]
pub struct GapField {
    pub lo: f64,
    pub hi: f64,
    pub res: usize,
    /// Row-major, first coordinate fastest.
    pub values: Vec<Option<f64>>,
    pub max_gap: f64,
    /// Approximate minimizer of `L_β(·; λ)`.
    pub minimizer: Vec<f64>,
}

/// The two-dimensional instances shown in the field view.
pub fn field_instance(variant: &str) -> Result<ProblemInstance, String> {
    let row = LinearConstraint::new(array![[1.0, -0.6]], array![0.1]).map_err(|e| e.to_string())?;
    let (smooth, composite) = match variant {
        "box" => (
            SmoothTerm::quadratic(array![[1.5, 0.4], [0.4, 0.7]], array![-0.3, 0.9]),
            CompositeTerm::boxed(array![-1.0, -1.0], array![1.0, 1.0]),
        ),
        "l1_box" => (
            SmoothTerm::quadratic(array![[0.8, -0.2], [-0.2, 1.1]], array![0.6, -0.4]),
            CompositeTerm::l1_box(0.5, 0.8),
        ),
        other => return Err(format!("unknown field variant {other:?}; expected box or l1_box")),
    };
    let smooth = smooth.map_err(|e| e.to_string())?;
    let composite = composite.map_err(|e| e.to_string())?;
    ProblemInstance::new(variant, smooth, composite, row).map_err(|e| e.to_string())
}

pub fn gap_field(variant: &str, lambda: f64, beta: f64, res: usize) -> Result<GapField, String> {
    bounded("resolution", res, 2, MAX_FIELD_RES)?;
    let p = field_instance(variant)?;
    let s = DualState::new(array![lambda], beta).map_err(|e| e.to_string())?;
    let al = AugmentedLagrangian::new(&p, &s);
    let (lo, hi) = (-1.0, 1.0);
    let at = |i: usize| lo + (hi - lo) * i as f64 / (res - 1) as f64;
    let mut values = Vec::with_capacity(res * res);
    for j in 0..res {
        for i in 0..res {
            let x = array![at(i), at(j)];
            values.push(p.composite.contains(x.view()).then(|| al.certificate(x.view()).gap));
        }
    }
    let max_gap = values.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    let minimizer = dual_value_and_grad(&p, &s, REFERENCE_TOL)
        .map_err(|e| e.to_string())?
        .x
        .to_vec();
    Ok(GapField {
        lo,
        hi,
        res,
        values,
        max_gap,
        minimizer,
    })
}

/// Tight scalar recursion next to the `max{δ_1, 4/E}/k` envelope.
#[derive(Debug, Clone, Serialize)]
pub struct Recursion {
    pub delta: Vec<f64>,
    pub bound: Vec<f64>,
    pub holds: bool,
}

pub fn recursion_curve(e: f64, delta1: f64, len: usize) -> Result<Recursion, String> {
    bounded("length", len, 1, MAX_RECURSION_LEN)?;
    if !(e > 0.0 && e.is_finite() && delta1 >= 0.0 && delta1.is_finite()) {
        return Err(format!("need E > 0 and delta1 >= 0, got E={e} delta1={delta1}"));
    }
    let cap = delta1.max(4.0 / e);
    let delta = lemma4_sequence(delta1, e, len);
    let bound: Vec<f64> = (1..=len).map(|k| cap / k as f64).collect();
    let holds = delta.iter().zip(&bound).all(|(d, b)| d <= b);
    Ok(Recursion { delta, bound, holds })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn solve(
    family: &str,
    n: usize,
    m: usize,
    seed: u32,
    beta: f64,
    sigma: f64,
    alpha: f64,
    iters: usize,
) -> Result<String, JsError> {
    to_js(solve_curves(family, n, m, seed.into(), beta, sigma, alpha, iters))
}

#[wasm_bindgen]
pub fn field(variant: &str, lambda: f64, beta: f64, res: usize) -> Result<String, JsError> {
    to_js(gap_field(variant, lambda, beta, res))
}

#[wasm_bindgen]
pub fn recursion(e: f64, delta1: f64, len: usize) -> Result<String, JsError> {
    to_js(recursion_curve(e, delta1, len))
}
