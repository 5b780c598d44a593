//! Rate constants, reference solutions and bound checks for measured traces.
//!
//! Every check is one-sided: a bound holds at index `k` when
//! `bound − measured ≥ −slack`. Margins are kept per index so callers can
//! persist them next to the pass/fail verdict.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::augmented::{dual_slack, dual_value_and_grad_from, gap_certificate, DualEstimate, DualState};
use crate::error::{Error, Result};
use crate::inner::{InnerConfig, REFERENCE_BUDGET};
use crate::outer::{check_schedule_conditions, run_ial, OuterConfig, OuterTrace, StopFloors, ToleranceSchedule};
use crate::par;
use crate::problem::ProblemInstance;

/// Outer iteration cap for reference runs.
pub const REFERENCE_MAX_OUTER: usize = 20_000;
/// Absolute slack for the simulated Lemma 4 recursion.
pub const RECURSION_SLACK: f64 = 1e-12;
/// Relative agreement required when recomputing stored certificates.
pub const AUDIT_RTOL: f64 = 1e-12;
/// Relative agreement required between the stored multiplier step and `β(Ax − b)`.
pub const DUAL_UPDATE_RTOL: f64 = 1e-14;

/// Slack for theorem-level checks built on surrogate dual values.
pub fn theorem_slack(tol: f64) -> f64 {
    100.0 * tol + 1e-8
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// High-accuracy primal-dual pair used as ground truth by the checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Array1<f64>,
    pub lambda_star: Array1<f64>,
    /// `d(λ*)` estimate, equal to `F(x*)` up to the reference tolerance.
    pub f_star: f64,
    pub beta: f64,
    pub tol: f64,
    /// `‖Ax* − b‖`.
    pub feas: f64,
    /// Certified gap of `x*` for `L_β(·; λ*)`.
    pub gap: f64,
    pub outer_iters: usize,
}

impl ReferenceSolution {
    pub fn lambda_norm(&self) -> f64 {
        norm(self.lambda_star.view())
    }

    /// Checks `|F(x*) − L_β(x*; λ*)| ≤ ‖λ*‖·feas + (β/2)·feas²` up to `dual_slack(tol)`.
    pub fn is_self_consistent(&self, p: &ProblemInstance) -> bool {
        let f = p.objective(self.x_star.view());
        let allowed = self.lambda_norm() * self.feas + 0.5 * self.beta * self.feas * self.feas;
        (f - self.f_star).abs() <= allowed + dual_slack(self.tol)
    }
}

/// Solves the problem to `tol` with a fast-shrinking schedule `η_k = 1/k⁴`.
///
/// The schedule is floored at `tol / 100` so late subproblems stay reachable
/// in double precision.
pub fn compute_reference(p: &ProblemInstance, beta: f64, tol: f64) -> Result<ReferenceSolution> {
    if !(tol > 0.0 && tol <= 1e-8) {
        return Err(Error::InvalidArgument(format!(
            "reference tolerance must lie in (0, 1e-8], got {tol}"
        )));
    }
    let floor = 1e-2 * tol;
    let etas = (1..=REFERENCE_MAX_OUTER)
        .map(|k| (1.0 / (k as f64).powi(4)).max(floor))
        .collect();
    let mut cfg = OuterConfig::new(beta, REFERENCE_MAX_OUTER, ToleranceSchedule::custom(etas)?)
        .with_inner(InnerConfig::accel_prox_grad().with_budget(REFERENCE_BUDGET));
    cfg.stop_floors = Some(StopFloors { gap: tol, feas: tol });
    let trace = run_ial(p, &cfg).map_err(|e| Error::Reference(format!("reference run failed: {e}")))?;
    let last = trace
        .rows
        .last()
        .ok_or_else(|| Error::Reference("reference run recorded no iterations".into()))?;
    if !(last.gap <= tol && last.feas <= tol) {
        return Err(Error::Reference(format!(
            "targets not reached within {} outer iterations (gap {:.3e}, feas {:.3e})",
            trace.len(),
            last.gap,
            last.feas
        )));
    }
    let lambda_star = trace.final_lambda().clone();
    let state = DualState::new(lambda_star.clone(), beta)?;
    let est = dual_value_and_grad_from(p, &state, trace.final_x().view(), tol)
        .map_err(|e| Error::Reference(format!("final dual solve failed: {e}")))?;
    Ok(ReferenceSolution {
        feas: norm(est.grad.view()),
        gap: est.gap,
        f_star: est.value,
        x_star: est.x,
        lambda_star,
        beta,
        tol,
        outer_iters: trace.len(),
    })
}

/// Surrogate `d(λᵏ)` and `∇d(λᵏ)` at every recorded multiplier `λ¹ … λᴷ⁺¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProfile {
    pub values: Vec<f64>,
    pub grads: Vec<Array1<f64>>,
    pub gaps: Vec<f64>,
    pub tol: f64,
}

impl DualProfile {
    /// Each solve is warm-started at the iterate the trace computed for that multiplier.
    pub fn compute(p: &ProblemInstance, trace: &OuterTrace, tol: f64) -> Result<Self> {
        let count = trace.lambdas.len();
        if trace.iterates.len() != count {
            return Err(Error::Format(format!(
                "trace holds {} multipliers but {} iterates",
                count,
                trace.iterates.len()
            )));
        }
        let estimates: Vec<DualEstimate> = par::try_map(count, |j| {
            let start = &trace.iterates[(j + 1).min(count - 1)];
            let state = DualState::new(trace.lambdas[j].clone(), trace.beta)?;
            dual_value_and_grad_from(p, &state, start.view(), tol)
        })?;
        let mut profile = DualProfile {
            values: Vec::with_capacity(count),
            grads: Vec::with_capacity(count),
            gaps: Vec::with_capacity(count),
            tol,
        };
        for e in estimates {
            profile.values.push(e.value);
            profile.grads.push(e.grad);
            profile.gaps.push(e.gap);
        }
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `d(λᵏ)` for 1-based `k`.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn grad(&self, k: usize) -> ArrayView1<'_, f64> {
        self.grads[k - 1].view()
    }
}

/// `δ_k = F* − d(λᵏ)` for `k = 1 … K+1`.
///
/// Values in `[−10·tol, 0)` are treated as noise and set to zero; anything
/// lower means the reference is not optimal.
pub fn delta_series(profile: &DualProfile, reference: &ReferenceSolution) -> Result<Vec<f64>> {
    let tol = profile.tol.max(reference.tol);
    profile
        .values
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let delta = reference.f_star - d;
            if delta < -10.0 * tol {
                Err(Error::Reference(format!(
                    "delta_{} = {delta:.3e} is below -10·tol; the reference is not optimal",
                    i + 1
                )))
            } else {
                Ok(delta.max(0.0))
            }
        })
        .collect()
}

/// Constants of the rate analysis for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub beta: f64,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    /// Upper bound on `Σ η_k`.
    pub eta_sum: f64,
    /// `‖λ¹ − λ*‖`.
    pub lambda_dist: f64,
    pub b: f64,
    pub theta: f64,
    pub delta1: f64,
    pub k0: Option<usize>,
    pub eta_k0: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    /// Only defined for power-law schedules.
    pub c: Option<f64>,
    /// Last index inspected when searching for `k0`.
    pub horizon: usize,
}

impl TheoryConstants {
    /// `B = √(‖λ¹ − λ*‖² + 2βΣη)`, `θ = β/(4B²)` and, given `(σ, α)`, the constant `C`.
    pub fn new(beta: f64, lambda_dist: f64, eta_sum: f64, delta1: f64, power_law: Option<(f64, f64)>) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        let b = (lambda_dist * lambda_dist + 2.0 * beta * eta_sum).sqrt();
        if !(b > 0.0) {
            return Err(Error::Degenerate(
                "B=0: λ¹ = λ* with Σ η_k = 0 leaves θ undefined".into(),
            ));
        }
        let theta = beta / (4.0 * b * b);
        let c = power_law.map(|(sigma, _)| {
            4.0 * (3.0 * (1.5 * theta * sigma + 1.0) * sigma / theta).sqrt() + (4.0 / 3.0) * delta1.max(4.0 / theta)
        });
        Ok(TheoryConstants {
            beta,
            sigma: power_law.map(|p| p.0),
            alpha: power_law.map(|p| p.1),
            eta_sum,
            lambda_dist,
            b,
            theta,
            delta1,
            k0: None,
            eta_k0: None,
            tau1: None,
            tau2: None,
            c,
            horizon: 0,
        })
    }

    /// Fixes `k0` and derives `τ1 = k0/(4θ)` and `τ2 = 1/(4θ√η_{k0})`.
    pub fn set_k0(&mut self, k0: usize, eta_k0: f64) {
        self.k0 = Some(k0);
        self.eta_k0 = Some(eta_k0);
        self.tau1 = Some(k0 as f64 / (4.0 * self.theta));
        self.tau2 = (eta_k0 > 0.0).then(|| 1.0 / (4.0 * self.theta * eta_k0.sqrt()));
    }

    /// `ψ_k = (2/β)(C + √σ)/k^α`.
    pub fn psi(&self, k: usize) -> Option<f64> {
        let (c, sigma, alpha) = (self.c?, self.sigma?, self.alpha?);
        Some(2.0 / self.beta * (c + sigma.sqrt()) / (k as f64).powf(alpha))
    }
}

/// Smallest `k ≥ 4` with `max_{k≤j≤horizon} δ_j ≤ 1/(2θ)` and `max_{k≤j≤horizon} η_j ≤ 1/(24θ)`.
pub fn find_k0(
    deltas: &[f64],
    schedule: &ToleranceSchedule,
    theta: f64,
    horizon: usize,
) -> Result<Option<(usize, f64)>> {
    let horizon = horizon.min(deltas.len());
    if horizon < 4 {
        return Ok(None);
    }
    let etas = (1..=horizon).map(|k| schedule.eta_at(k)).collect::<Result<Vec<_>>>()?;
    let delta_cap = 1.0 / (2.0 * theta);
    let eta_cap = 1.0 / (24.0 * theta);
    let mut max_delta = f64::NEG_INFINITY;
    let mut max_eta = f64::NEG_INFINITY;
    let mut found = None;
    for k in (4..=horizon).rev() {
        max_delta = max_delta.max(deltas[k - 1]);
        max_eta = max_eta.max(etas[k - 1]);
        if max_delta <= delta_cap && max_eta <= eta_cap {
            found = Some((k, etas[k - 1]));
        } else {
            break;
        }
    }
    Ok(found)
}

/// Builds every constant for `trace` against `reference`, searching `k0` up to `horizon`.
///
/// A missing `k0` is not an error; it leaves `k0`, `τ1` and `τ2` unset.
pub fn compute_constants(
    trace: &OuterTrace,
    reference: &ReferenceSolution,
    deltas: &[f64],
    horizon: usize,
) -> Result<TheoryConstants> {
    let lambda1 = &trace.lambdas[0];
    if lambda1.len() != reference.lambda_star.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.lambda_star.len(),
            found: lambda1.len(),
        });
    }
    let lambda_dist = norm((lambda1 - &reference.lambda_star).view());
    let power_law = match trace.schedule {
        ToleranceSchedule::PowerLaw { sigma, alpha } => Some((sigma, alpha)),
        ToleranceSchedule::Custom { .. } => None,
    };
    let delta1 = *deltas
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty delta series".into()))?;
    let mut tc = TheoryConstants::new(
        trace.beta,
        lambda_dist,
        trace.schedule.sum_upper_bound(),
        delta1,
        power_law,
    )?;
    tc.horizon = horizon.min(deltas.len());
    if let Some((k0, eta)) = find_k0(deltas, &trace.schedule, tc.theta, horizon)? {
        tc.set_k0(k0, eta);
    }
    Ok(tc)
}

/// Outcome of one bound family along a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub check: String,
    pub passed: bool,
    pub skipped: bool,
    pub first_violation_k: Option<usize>,
    pub violations: usize,
    pub min_margin: Option<f64>,
    pub slack: f64,
    /// `(k, bound − measured)`.
    pub margins: Vec<(usize, f64)>,
    pub note: Option<String>,
}

impl BoundReport {
    pub fn from_margins(check: impl Into<String>, margins: Vec<(usize, f64)>, slack: f64) -> Self {
        let mut first = None;
        let mut violations = 0;
        for &(k, m) in &margins {
            // NaN margins count as violations.
            if !(m >= -slack) {
                violations += 1;
                first.get_or_insert(k);
            }
        }
        let min_margin = margins
            .iter()
            .map(|m| m.1)
            .reduce(|a, b| if b < a || b.is_nan() { b } else { a });
        BoundReport {
            check: check.into(),
            passed: violations == 0,
            skipped: false,
            first_violation_k: first,
            violations,
            min_margin,
            slack,
            margins,
            note: None,
        }
    }

    pub fn skipped(check: impl Into<String>, reason: impl Into<String>) -> Self {
        BoundReport {
            check: check.into(),
            passed: true,
            skipped: true,
            first_violation_k: None,
            violations: 0,
            min_margin: None,
            slack: 0.0,
            margins: Vec::new(),
            note: Some(reason.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

fn power_law_ratio_holds(alpha: f64) -> bool {
    // (k/(k+1))^α ≥ k/(k+1) ≥ (k−2)/k for α ≤ 1, since k² ≥ (k−2)(k+1).
    alpha > 0.0 && alpha <= 1.0
}

/// `δ_k ≤ τ1/k + τ2√η_k` for `k0 ≤ k ≤ len(deltas)`.
pub fn check_theorem2(deltas: &[f64], tc: &TheoryConstants, sch: &ToleranceSchedule, tol: f64) -> Result<BoundReport> {
    const NAME: &str = "theorem2";
    let (Some(k0), Some(tau1)) = (tc.k0, tc.tau1) else {
        return Ok(BoundReport::skipped(
            NAME,
            format!("no admissible k0 up to k = {}", tc.horizon),
        ));
    };
    let Some(tau2) = tc.tau2 else {
        return Ok(BoundReport::skipped(NAME, "eta_{k0} = 0 leaves tau2 undefined"));
    };
    let last = deltas.len();
    let precondition = match sch {
        ToleranceSchedule::PowerLaw { alpha, .. } => power_law_ratio_holds(*alpha),
        ToleranceSchedule::Custom { .. } => check_schedule_conditions(sch, k0, last.max(k0))?.passed(),
    };
    if !precondition {
        return Ok(BoundReport::skipped(
            NAME,
            format!("schedule fails the ratio condition from k0 = {k0}"),
        ));
    }
    let margins = (k0..=last)
        .map(|k| {
            let eta = sch.eta_at(k)?;
            Ok((k, tau1 / k as f64 + tau2 * eta.sqrt() - deltas[k - 1]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport::from_margins(NAME, margins, theorem_slack(tol))
        .with_note(format!("k0 = {k0}; compliance certified on [k0, {last}] only")))
}

/// The three last-iterate bounds: dual gap, feasibility and the primal sandwich.
pub fn check_theorem3(
    trace: &OuterTrace,
    deltas: &[f64],
    tc: &TheoryConstants,
    reference: &ReferenceSolution,
    tol: f64,
) -> Result<Vec<BoundReport>> {
    let names = ["theorem3_delta", "theorem3_feasibility", "theorem3_primal"];
    let (Some(c), Some(alpha)) = (tc.c, tc.alpha) else {
        return Ok(names
            .iter()
            .map(|n| BoundReport::skipped(*n, "bounds are stated for power-law schedules only"))
            .collect());
    };
    let slack = theorem_slack(tol);
    let delta = deltas
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let k = i + 1;
            (k, c / (k as f64).powf(alpha) - d)
        })
        .collect();
    let lambda_star = reference.lambda_norm();
    let mut feas = Vec::with_capacity(trace.len());
    let mut primal = Vec::with_capacity(trace.len());
    for row in &trace.rows {
        let psi = tc.psi(row.k).expect("power-law constants present");
        feas.push((row.k, psi - row.feas * row.feas));
        let diff = row.objective - reference.f_star;
        let lower = -lambda_star * psi.sqrt() - 0.5 * tc.beta * psi;
        let upper = (lambda_star + tc.b) * psi.sqrt() + row.eta;
        primal.push((row.k, (diff - lower).min(upper - diff)));
    }
    Ok(vec![
        BoundReport::from_margins(names[0], delta, slack),
        BoundReport::from_margins(names[1], feas, slack),
        BoundReport::from_margins(names[2], primal, slack),
    ])
}

/// Tight recursion `(E/2)δ_{k+1}² + δ_{k+1} = δ_k`, returned as `δ_1 … δ_K`.
pub fn lemma4_sequence(delta1: f64, e: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut d = delta1;
    for _ in 0..k {
        out.push(d);
        // Positive root of the quadratic, written without cancellation.
        d = 2.0 * d / (1.0 + (1.0 + 2.0 * e * d).sqrt());
    }
    out
}

/// `δ_k ≤ max{δ_1, 4/E}/k` along the tight recursion.
pub fn check_lemma4_recursion(delta1: f64, e: f64, k: usize) -> Result<BoundReport> {
    if !(e > 0.0 && e.is_finite()) || !(delta1 >= 0.0 && delta1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need E > 0 and delta1 >= 0, got E={e} delta1={delta1}"
        )));
    }
    let cap = delta1.max(4.0 / e);
    let margins = lemma4_sequence(delta1, e, k)
        .into_iter()
        .enumerate()
        .map(|(i, d)| (i + 1, cap / (i + 1) as f64 - d))
        .collect();
    Ok(BoundReport::from_margins("lemma4", margins, RECURSION_SLACK))
}

/// Lemmas 1–3, the dual ascent inequality and the `δ` recursion along a trace.
pub fn check_lemmas_runtime(
    trace: &OuterTrace,
    profile: &DualProfile,
    deltas: &[f64],
    tc: &TheoryConstants,
    reference: &ReferenceSolution,
) -> Result<Vec<BoundReport>> {
    let k_max = trace.len();
    if profile.len() != k_max + 1 || deltas.len() != k_max + 1 {
        return Err(Error::InvalidArgument(format!(
            "profile and delta series need {} entries for a trace of length {k_max}",
            k_max + 1
        )));
    }
    let tol = profile.tol.max(reference.tol);
    let dual = dual_slack(tol);
    let beta = trace.beta;
    let steps: Vec<Array1<f64>> = (1..=k_max).map(|k| trace.dual_step(k)).collect();
    let etas: Vec<f64> = trace.rows.iter().map(|r| r.eta).collect();

    // Index 0 stands for λ*, whose dual value is F*.
    let upper = par::map(k_max + 2, |j| {
        let (lambda, d) = if j == 0 {
            (reference.lambda_star.view(), reference.f_star)
        } else {
            (trace.lambdas[j - 1].view(), profile.value(j))
        };
        let worst = (0..k_max)
            .map(|i| {
                let mu = trace.lambdas[i].view();
                let diff = &lambda - &mu;
                trace.rows[i].albar + steps[i].dot(&diff) - d
            })
            .fold(f64::INFINITY, f64::min);
        (j, worst)
    });

    let mut decrease = Vec::with_capacity(k_max);
    let mut ascent = Vec::with_capacity(k_max);
    let mut lemma2 = Vec::with_capacity(k_max);
    let mut recursion = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let i = k - 1;
        let eta = etas[i];
        let half_sq = 0.5 * beta * steps[i].dot(&steps[i]);
        decrease.push((k, profile.value(k + 1) - (trace.rows[i].albar + half_sq - eta)));
        ascent.push((k, profile.value(k + 1) - (profile.value(k) + half_sq - eta)));
        let gdiff = &profile.grads[i] - &steps[i];
        lemma2.push((k, eta / beta - gdiff.dot(&gdiff)));
        let d = deltas[i];
        recursion.push((k, d - tc.theta * d * d + 1.5 * eta - deltas[k]));
    }
    let lemma3 = (1..=k_max + 1)
        .map(|k| (k, tc.b - norm((&trace.lambdas[k - 1] - &reference.lambda_star).view())))
        .collect();

    Ok(vec![
        BoundReport::from_margins("lemma1_upper_bound", upper, dual).with_note("index 0 is lambda*"),
        BoundReport::from_margins("lemma1_decrease", decrease, dual),
        BoundReport::from_margins("dual_ascent", ascent, dual),
        BoundReport::from_margins("lemma2_gradient", lemma2, dual),
        BoundReport::from_margins("lemma3_multiplier_bound", lemma3, theorem_slack(tol)),
        BoundReport::from_margins("delta_recursion", recursion, theorem_slack(tol)),
    ])
}

/// Recomputes every stored certificate from `(xᵏ⁺¹, λᵏ)` and checks `gap_k ≤ η_k`.
pub fn audit_certificates(p: &ProblemInstance, trace: &OuterTrace) -> Result<Vec<BoundReport>> {
    let recomputed = par::try_map(trace.len(), |i| {
        let state = DualState::new(trace.lambdas[i].clone(), trace.beta)?;
        Ok(gap_certificate(p, trace.iterates[i + 1].view(), &state)?.gap)
    })?;
    let mut agree = Vec::with_capacity(trace.len());
    let mut within = Vec::with_capacity(trace.len());
    let mut update = Vec::with_capacity(trace.len());
    for (row, fresh) in trace.rows.iter().zip(recomputed) {
        let scale = row.gap.abs().max(fresh.abs()).max(f64::MIN_POSITIVE);
        agree.push((row.k, AUDIT_RTOL * scale - (row.gap - fresh).abs()));
        within.push((row.k, row.eta - row.gap));
        let residual = p.constraint.residual(trace.iterates[row.k].view());
        let step = &trace.lambdas[row.k] - &trace.lambdas[row.k - 1];
        let err = norm((&step - &(&residual * trace.beta)).view());
        let size = norm(trace.lambdas[row.k].view()) + norm(trace.lambdas[row.k - 1].view());
        update.push((row.k, DUAL_UPDATE_RTOL * size.max(f64::MIN_POSITIVE) - err));
    }
    let flagged = (!trace.flagged.is_empty()).then(|| format!("rows accepted past budget: {:?}", trace.flagged));
    let mut within = BoundReport::from_margins("gap_within_eta", within, 0.0);
    within.note = flagged;
    Ok(vec![
        BoundReport::from_margins("certificate_audit", agree, 0.0),
        within,
        BoundReport::from_margins("dual_update_audit", update, 0.0),
    ])
}

/// Partial sums of `δ_k²` must be flat: the increment over `[K/2, K]` is at most 10% of the total.
pub fn audit_delta_summability(deltas: &[f64]) -> BoundReport {
    let k = deltas.len();
    if k < 2 {
        return BoundReport::skipped("delta_square_summability", "needs at least two deltas");
    }
    let total: f64 = deltas.iter().map(|d| d * d).sum();
    let head: f64 = deltas[..k / 2].iter().map(|d| d * d).sum();
    BoundReport::from_margins("delta_square_summability", vec![(k, 0.1 * total - (total - head))], 0.0)
}

/// Least-squares slope of `ln v` against `ln k`, ignoring non-positive or non-finite values.
pub fn loglog_slope<I>(points: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .into_iter()
        .filter(|&(k, v)| k > 0.0 && v > 0.0 && v.is_finite())
        .map(|(k, v)| (k.ln(), v.ln()))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fitted decay exponents of `δ_k`, `‖Axᵏ⁺¹ − b‖²` and `|F(xᵏ⁺¹) − F*|` over `lo ≤ k ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSlopes {
    pub delta: Option<f64>,
    pub feas_sq: Option<f64>,
    pub primal: Option<f64>,
}

pub fn rate_slopes(trace: &OuterTrace, deltas: &[f64], f_star: f64, lo: usize, hi: usize) -> RateSlopes {
    let hi = hi.min(trace.len());
    let rows = trace.rows.iter().filter(|r| r.k >= lo && r.k <= hi);
    RateSlopes {
        delta: loglog_slope((lo..=hi.min(deltas.len())).map(|k| (k as f64, deltas[k - 1]))),
        feas_sq: loglog_slope(rows.clone().map(|r| (r.k as f64, r.feas * r.feas))),
        primal: loglog_slope(rows.map(|r| (r.k as f64, (r.objective - f_star).abs()))),
    }
}

/// Everything `verify_trace` measured.
#[derive(Debug, Clone)]
pub struct Verification {
    pub constants: TheoryConstants,
    pub profile: DualProfile,
    pub deltas: Vec<f64>,
    pub reports: Vec<BoundReport>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn report(&self, check: &str) -> Option<&BoundReport> {
        self.reports.iter().find(|r| r.check == check)
    }
}

/// Runs every audit and bound check on `trace`, with dual values accurate to `tol`.
pub fn verify_trace(
    p: &ProblemInstance,
    trace: &OuterTrace,
    reference: &ReferenceSolution,
    tol: f64,
) -> Result<Verification> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("trace has no iterations".into()));
    }
    let profile = DualProfile::compute(p, trace, tol)?;
    let deltas = delta_series(&profile, reference)?;
    let constants = compute_constants(trace, reference, &deltas, deltas.len())?;
    let check_tol = tol.max(reference.tol);
    let mut reports = audit_certificates(p, trace)?;
    reports.push(check_theorem2(&deltas, &constants, &trace.schedule, check_tol)?);
    reports.extend(check_theorem3(trace, &deltas, &constants, reference, check_tol)?);
    reports.extend(check_lemmas_runtime(trace, &profile, &deltas, &constants, reference)?);
    reports.push(audit_delta_summability(&deltas));
    Ok(Verification {
        constants,
        profile,
        deltas,
        reports,
    })
}
