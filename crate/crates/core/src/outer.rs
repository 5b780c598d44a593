//! The outer inexact augmented Lagrangian loop.
//!
//! Each iteration solves `min_x L_β(x; λᵏ)` until the gap certificate drops
//! to `η_k`, then takes the multiplier step `λᵏ⁺¹ = λᵏ + β(Axᵏ⁺¹ − b)`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::augmented::{AugmentedLagrangian, DualState};
use crate::error::{check_len, Error, Result};
use crate::inner::{solve_inner, InnerConfig, InnerResult};
use crate::problem::ProblemInstance;

/// Number of terms summed explicitly before the integral tail bound.
pub const ETA_SUM_TERMS: usize = 1_000_000;

/// Inner tolerance sequence `{η_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToleranceSchedule {
    /// `η_k = σ / k^{2α}` with `σ > 0`, `α ∈ (½, 1]`.
    PowerLaw { sigma: f64, alpha: f64 },
    /// Explicit `η_1, η_2, …`; running past the end is an error.
    Custom { values: Vec<f64> },
}

impl ToleranceSchedule {
    pub fn power_law(sigma: f64, alpha: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "power law needs sigma > 0 and alpha in (1/2, 1], got sigma={sigma} alpha={alpha}"
            )));
        }
        Ok(ToleranceSchedule::PowerLaw { sigma, alpha })
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "custom schedule needs finite nonnegative entries".into(),
            ));
        }
        Ok(ToleranceSchedule::Custom { values })
    }

    /// `η_k` for `k ≥ 1`.
    pub fn eta_at(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidArgument("schedule index starts at 1".into()));
        }
        match self {
            ToleranceSchedule::PowerLaw { sigma, alpha } => Ok(sigma * (k as f64).powf(-2.0 * alpha)),
            ToleranceSchedule::Custom { values } => values.get(k - 1).copied().ok_or(Error::ScheduleExhausted(k)),
        }
    }

    /// Number of defined entries, `None` for infinite schedules.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Option<usize> {
        match self {
            ToleranceSchedule::PowerLaw { .. } => None,
            ToleranceSchedule::Custom { values } => Some(values.len()),
        }
    }

    /// Upper bound on `Σ_{k≥1} η_k`.
    ///
    /// Power law: explicit sum of the first [`ETA_SUM_TERMS`] terms plus
    /// `σ K^{1−2α} / (2α − 1)`. Custom lists are summed as given, with the
    /// run assumed to end at the last entry.
    pub fn sum_upper_bound(&self) -> f64 {
        match self {
            ToleranceSchedule::PowerLaw { sigma, alpha } => {
                let e = 2.0 * alpha;
                // Sum small terms first.
                let head: f64 = (1..=ETA_SUM_TERMS).rev().map(|k| (k as f64).powf(-e)).sum();
                let tail = (ETA_SUM_TERMS as f64).powf(1.0 - e) / (e - 1.0);
                sigma * (head + tail)
            }
            ToleranceSchedule::Custom { values } => values.iter().rev().sum(),
        }
    }
}

/// Outcome of [`check_schedule_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub positive: bool,
    pub nonincreasing: bool,
    pub summable: bool,
    pub ratio_condition: bool,
    /// First failing condition and the index where it fails.
    pub first_violation: Option<(String, usize)>,
    /// Fitted decay exponent of the tail of a custom list.
    pub tail_exponent: Option<f64>,
    pub checked_through: usize,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.positive && self.nonincreasing && self.summable && self.ratio_condition
    }
}

/// Checks positivity, monotonicity, summability, and `√(η_{k+1}/η_k) ≥ (k − 2)/k` on `[k0, horizon]`.
///
/// A finite custom list is judged summable when its second half decays at
/// least like `k^{-p}` with `p > 1` (or ends in zero).
pub fn check_schedule_conditions(sch: &ToleranceSchedule, k0: usize, horizon: usize) -> Result<ScheduleReport> {
    if k0 < 4 || horizon < k0 {
        return Err(Error::InvalidArgument(format!(
            "need horizon >= k0 >= 4, got k0={k0} horizon={horizon}"
        )));
    }
    let last = match sch.len() {
        Some(len) => horizon.min(len),
        None => horizon,
    };
    let etas: Vec<f64> = (1..=last).map(|k| sch.eta_at(k)).collect::<Result<_>>()?;
    let mut report = ScheduleReport {
        positive: true,
        nonincreasing: true,
        summable: true,
        ratio_condition: true,
        first_violation: None,
        tail_exponent: None,
        checked_through: last,
    };
    let violate = |report: &mut ScheduleReport, what: &str, k: usize| {
        if report.first_violation.is_none() {
            report.first_violation = Some((what.to_string(), k));
        }
    };
    if let Some(k) = etas.iter().position(|&e| e <= 0.0) {
        report.positive = false;
        violate(&mut report, "positive", k + 1);
    }
    if let Some(k) = etas.windows(2).position(|w| w[1] > w[0]) {
        report.nonincreasing = false;
        violate(&mut report, "nonincreasing", k + 2);
    }
    for k in k0..last {
        let (cur, next) = (etas[k - 1], etas[k]);
        let ratio = if cur > 0.0 { (next / cur).sqrt() } else { f64::NAN };
        if !(ratio >= (k as f64 - 2.0) / k as f64) {
            report.ratio_condition = false;
            violate(&mut report, "ratio", k);
            break;
        }
    }
    if let ToleranceSchedule::Custom { values } = sch {
        let (summable, exponent) = tail_decay(values);
        report.summable = summable;
        report.tail_exponent = exponent;
        if !summable {
            violate(&mut report, "summable", values.len());
        }
    }
    Ok(report)
}

fn tail_decay(values: &[f64]) -> (bool, Option<f64>) {
    let n = values.len();
    let end = values[n - 1];
    if end == 0.0 {
        return (true, None);
    }
    if n < 2 {
        return (false, Some(0.0));
    }
    let a = (n / 2).max(1);
    let start = values[a - 1];
    if start <= 0.0 {
        return (false, None);
    }
    let p = -(end / start).ln() / (n as f64 / a as f64).ln();
    (p > 1.0, Some(p))
}

/// What the outer loop does when an inner solve runs out of budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPolicy {
    #[default]
    Abort,
    /// Continue from the lowest-gap iterate and flag the row.
    AcceptBest,
}

/// Optional early exit once both the gap and the residual are tiny.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopFloors {
    pub gap: f64,
    pub feas: f64,
}

impl Default for StopFloors {
    fn default() -> Self {
        StopFloors { gap: 1e-10, feas: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    pub beta: f64,
    pub max_outer: usize,
    pub schedule: ToleranceSchedule,
    pub inner: InnerConfig,
    /// `λ¹`; zero when absent.
    pub lambda_init: Option<Vec<f64>>,
    /// `x¹ ∈ dom g`; the domain center when absent.
    pub x_init: Option<Vec<f64>>,
    pub on_budget_exceeded: BudgetPolicy,
    /// Start each subproblem from the previous iterate rather than `x¹`.
    pub warm_start: bool,
    pub stop_floors: Option<StopFloors>,
}

impl OuterConfig {
    pub fn new(beta: f64, max_outer: usize, schedule: ToleranceSchedule) -> Self {
        OuterConfig {
            beta,
            max_outer,
            schedule,
            inner: InnerConfig::default(),
            lambda_init: None,
            x_init: None,
            on_budget_exceeded: BudgetPolicy::Abort,
            warm_start: true,
            stop_floors: None,
        }
    }

    pub fn with_inner(mut self, inner: InnerConfig) -> Self {
        self.inner = inner;
        self
    }

    fn initial_point(&self, p: &ProblemInstance) -> Result<(Array1<f64>, Array1<f64>)> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        self.inner.validate()?;
        let lambda = match &self.lambda_init {
            Some(l) => {
                check_len(p.m(), l.len())?;
                Array1::from(l.clone())
            }
            None => Array1::zeros(p.m()),
        };
        let x = match &self.x_init {
            Some(x) => {
                check_len(p.n(), x.len())?;
                let x = Array1::from(x.clone());
                if !p.composite.contains(x.view()) {
                    return Err(Error::OutsideDomain);
                }
                x
            }
            None => p.composite.center(p.n()),
        };
        Ok((x, lambda))
    }
}

/// One outer iteration `k`, describing `xᵏ⁺¹` solved at `λᵏ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub eta: f64,
    /// Certified gap of `xᵏ⁺¹` for `L_β(·; λᵏ)`.
    pub gap: f64,
    /// `‖Axᵏ⁺¹ − b‖`.
    pub feas: f64,
    /// `F(xᵏ⁺¹)`.
    pub objective: f64,
    /// `L_β(xᵏ⁺¹; λᵏ)`.
    pub albar: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterTrace {
    pub instance_name: String,
    pub beta: f64,
    pub schedule: ToleranceSchedule,
    pub seed: Option<u64>,
    pub rows: Vec<TraceRow>,
    /// `λ¹ … λᴷ⁺¹`.
    pub lambdas: Vec<Array1<f64>>,
    /// `x¹ … xᴷ⁺¹`.
    pub iterates: Vec<Array1<f64>>,
    /// Iterations whose inner solve ran out of budget and continued with the best iterate.
    pub flagged: Vec<usize>,
}

impl OuterTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `∇d̄(λᵏ) = Axᵏ⁺¹ − b`, recovered from the multiplier step.
    pub fn dual_step(&self, k: usize) -> Array1<f64> {
        (&self.lambdas[k] - &self.lambdas[k - 1]) / self.beta
    }

    pub fn lambda(&self, k: usize) -> ArrayView1<'_, f64> {
        self.lambdas[k - 1].view()
    }

    pub fn final_lambda(&self) -> &Array1<f64> {
        self.lambdas.last().expect("trace always holds λ¹")
    }

    pub fn final_x(&self) -> &Array1<f64> {
        self.iterates.last().expect("trace always holds x¹")
    }
}

pub fn eta_at(sch: &ToleranceSchedule, k: usize) -> Result<f64> {
    sch.eta_at(k)
}

/// Runs the outer loop for `cfg.max_outer` iterations (or until the stop floors hold).
pub fn run_ial(p: &ProblemInstance, cfg: &OuterConfig) -> Result<OuterTrace> {
    run_ial_seeded(p, cfg, None)
}

pub fn run_ial_seeded(p: &ProblemInstance, cfg: &OuterConfig, seed: Option<u64>) -> Result<OuterTrace> {
    let (x1, lambda1) = cfg.initial_point(p)?;
    let mut trace = OuterTrace {
        instance_name: p.name.clone(),
        beta: cfg.beta,
        schedule: cfg.schedule.clone(),
        seed,
        rows: Vec::with_capacity(cfg.max_outer),
        lambdas: vec![lambda1],
        iterates: vec![x1],
        flagged: Vec::new(),
    };
    for k in 1..=cfg.max_outer {
        let eta = match cfg.schedule.eta_at(k) {
            Ok(e) => e,
            Err(e) => return Err(abort(trace, k, e)),
        };
        let state = DualState {
            lambda: trace.final_lambda().clone(),
            beta: cfg.beta,
        };
        let start = if cfg.warm_start {
            trace.final_x()
        } else {
            &trace.iterates[0]
        };
        let result: InnerResult = match solve_inner(p, &state, start.view(), eta, &cfg.inner) {
            Ok(r) => r,
            Err(Error::BudgetExceeded { best, .. }) if cfg.on_budget_exceeded == BudgetPolicy::AcceptBest => {
                trace.flagged.push(k);
                *best
            }
            Err(e) => return Err(abort(trace, k, e)),
        };
        let al = AugmentedLagrangian::new(p, &state);
        let residual = p.constraint.residual(result.x.view());
        let feas = residual.dot(&residual).sqrt();
        let row = TraceRow {
            k,
            eta,
            gap: result.gap,
            feas,
            objective: p.objective(result.x.view()),
            albar: al.value(result.x.view()),
            inner_iters: result.iters,
        };
        let mut next = state.lambda;
        next.scaled_add(cfg.beta, &residual);
        trace.lambdas.push(next);
        trace.iterates.push(result.x);
        trace.rows.push(row);
        if let Some(floors) = cfg.stop_floors {
            if row.gap <= floors.gap && row.feas <= floors.feas {
                break;
            }
        }
    }
    Ok(trace)
}

fn abort(trace: OuterTrace, k: usize, source: Error) -> Error {
    Error::OuterAborted {
        k,
        partial: Box::new(trace),
        source: Box::new(source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::{dual_value_and_grad_from, gap_certificate};
    use crate::problem::{generate, CompositeTerm, Family, LinearConstraint, SmoothTerm};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    #[test]
    fn eta_examples() {
        let s = ToleranceSchedule::power_law(1.0, 1.0).unwrap();
        assert_eq!(eta_at(&s, 2).unwrap(), 0.25);
        assert_eq!(eta_at(&s, 1).unwrap(), 1.0);
        let s = ToleranceSchedule::power_law(4.0, 0.6).unwrap();
        assert_relative_eq!(eta_at(&s, 10).unwrap(), 4.0 * 10f64.powf(-1.2), max_relative = 1e-15);
        assert_relative_eq!(eta_at(&s, 10).unwrap(), 0.25238, max_relative = 2e-5);
        assert!(eta_at(&s, 0).is_err());
        let c = ToleranceSchedule::custom(vec![1.0, 0.5]).unwrap();
        assert_eq!(eta_at(&c, 2).unwrap(), 0.5);
        assert!(matches!(eta_at(&c, 3), Err(Error::ScheduleExhausted(3))));
        assert!(ToleranceSchedule::power_law(1.0, 0.5).is_err());
        assert!(ToleranceSchedule::power_law(0.0, 1.0).is_err());
    }

    #[test]
    fn power_law_passes_schedule_conditions() {
        // k² ≥ (k − 2)(k + 1) for every k ≥ 4.
        for k in 4..10_000u64 {
            assert!(k * k >= (k - 2) * (k + 1));
        }
        for alpha in [0.6, 0.8, 1.0] {
            let s = ToleranceSchedule::power_law(1.0, alpha).unwrap();
            let r = check_schedule_conditions(&s, 4, 5000).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn sharp_drop_violates_ratio_condition() {
        let mut values = vec![1.0; 4];
        values.extend((5..=100).map(|k| 1e-6 / (k as f64).powi(2)));
        let s = ToleranceSchedule::custom(values).unwrap();
        let r = check_schedule_conditions(&s, 4, 100).unwrap();
        assert!(!r.ratio_condition);
        assert_eq!(r.first_violation, Some(("ratio".to_string(), 4)));
        assert!(((1e-6f64 / 25.0).sqrt()) < 0.5);
    }

    #[test]
    fn constant_schedule_is_not_summable() {
        let s = ToleranceSchedule::custom(vec![0.1; 200]).unwrap();
        let r = check_schedule_conditions(&s, 4, 200).unwrap();
        assert!(r.nonincreasing);
        assert!(!r.summable);
        assert_eq!(r.first_violation.as_ref().map(|v| v.0.as_str()), Some("summable"));
        let quartic = ToleranceSchedule::custom((1..=200).map(|k| 1.0 / (k as f64).powi(4)).collect()).unwrap();
        assert!(check_schedule_conditions(&quartic, 4, 200).unwrap().summable);
        assert!(check_schedule_conditions(&quartic, 3, 200).is_err());
    }

    #[test]
    fn eta_sum_matches_known_series() {
        // Σ 1/k² = π²/6.
        let s = ToleranceSchedule::power_law(1.0, 1.0).unwrap();
        let sum = s.sum_upper_bound();
        let exact = std::f64::consts::PI.powi(2) / 6.0;
        assert!(sum >= exact - 1e-12);
        assert_relative_eq!(sum, exact, max_relative = 1e-9);
    }

    fn planted_unconstrained_minimizer() -> (ProblemInstance, Array1<f64>) {
        let xbar = array![0.2, -0.4, 0.1];
        let a = array![[1.0, 2.0, -1.0], [0.5, 0.0, 1.0]];
        let b = a.dot(&xbar);
        let p = ProblemInstance::new(
            "planted",
            SmoothTerm::quadratic(Array2::eye(3), -&xbar).unwrap(),
            CompositeTerm::boxed(Array1::from_elem(3, -1.0), Array1::from_elem(3, 1.0)).unwrap(),
            LinearConstraint::new(a, b).unwrap(),
        )
        .unwrap();
        (p, xbar)
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        let (p, xbar) = planted_unconstrained_minimizer();
        let mut cfg = OuterConfig::new(1.0, 5, ToleranceSchedule::power_law(1.0, 1.0).unwrap());
        cfg.x_init = Some(xbar.to_vec());
        let t = run_ial(&p, &cfg).unwrap();
        assert_eq!(t.rows[0].gap, 0.0);
        for row in &t.rows {
            assert_eq!(row.feas, 0.0);
        }
        for l in &t.lambdas {
            assert_eq!(l, &Array1::<f64>::zeros(2));
        }
    }

    #[test]
    fn trace_invariants_hold() {
        let g = generate(Family::BoxQp, 20, 5, 1).unwrap();
        let p = &g.instance;
        let cfg = OuterConfig::new(1.0, 60, ToleranceSchedule::power_law(1.0, 1.0).unwrap());
        let t = run_ial(p, &cfg).unwrap();
        assert_eq!(t.len(), 60);
        assert_eq!(t.lambdas.len(), 61);
        for row in &t.rows {
            assert!(row.gap <= row.eta);
            let k = row.k;
            let r = p.constraint.residual(t.iterates[k].view());
            let expected = &t.lambdas[k - 1] + &(&r * cfg.beta);
            for (a, b) in expected.iter().zip(t.lambdas[k].iter()) {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
            let s = DualState {
                lambda: t.lambdas[k - 1].clone(),
                beta: cfg.beta,
            };
            let audit = gap_certificate(p, t.iterates[k].view(), &s).unwrap().gap;
            assert_eq!(audit, row.gap);
        }
        assert_eq!(run_ial(p, &cfg).unwrap(), t);
    }

    #[test]
    fn tiny_tolerance_matches_exact_dual_ascent() {
        let g = generate(Family::SimplexLs, 10, 3, 2).unwrap();
        let p = &g.instance;
        let beta = 1.0;
        let k_max = 25;
        let cfg = OuterConfig::new(beta, k_max, ToleranceSchedule::custom(vec![1e-12; k_max]).unwrap());
        let t = run_ial(p, &cfg).unwrap();
        // Exact ascent with reference solves at every multiplier.
        let mut lambda = Array1::zeros(3);
        let mut x = p.composite.center(10);
        for k in 1..=k_max {
            let s = DualState {
                lambda: lambda.clone(),
                beta,
            };
            let d = dual_value_and_grad_from(p, &s, x.view(), 1e-12).unwrap();
            lambda = &lambda + &(&d.grad * beta);
            x = d.x;
            let diff = (&lambda - &t.lambdas[k]).mapv(|v| v * v).sum().sqrt();
            assert!(diff <= 1e-6, "k={k} diff={diff}");
        }
    }

    #[test]
    fn budget_abort_keeps_partial_trace() {
        let g = generate(Family::BoxQp, 20, 5, 3).unwrap();
        let p = &g.instance;
        let mut cfg = OuterConfig::new(1.0, 10, ToleranceSchedule::power_law(1.0, 1.0).unwrap());
        cfg.inner = InnerConfig::accel_prox_grad().with_budget(10);
        match run_ial(p, &cfg) {
            Err(Error::OuterAborted { k, partial, .. }) => {
                assert_eq!(partial.len(), k - 1);
                assert!(partial.rows.iter().all(|r| r.gap <= r.eta));
            }
            other => panic!("expected abort, got {other:?}"),
        }
        cfg.on_budget_exceeded = BudgetPolicy::AcceptBest;
        let t = run_ial(p, &cfg).unwrap();
        assert_eq!(t.len(), 10);
        assert!(!t.flagged.is_empty());
    }

    #[test]
    fn stop_floors_end_the_run() {
        let (p, xbar) = planted_unconstrained_minimizer();
        let mut cfg = OuterConfig::new(1.0, 50, ToleranceSchedule::power_law(1.0, 1.0).unwrap());
        cfg.x_init = Some(xbar.to_vec());
        cfg.stop_floors = Some(StopFloors::default());
        assert_eq!(run_ial(&p, &cfg).unwrap().len(), 1);
    }
}
