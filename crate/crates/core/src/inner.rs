//! Subproblem solvers for `min_x L_β(x; λ)` that stop on a certified gap.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::augmented::{AugmentedLagrangian, DualState};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

pub const DEFAULT_BUDGET: usize = 100_000;
pub const REFERENCE_BUDGET: usize = 1_000_000;
pub const PROBE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    FrankWolfe,
    AccelProxGrad,
}

impl InnerMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            InnerMethod::FrankWolfe => "fw",
            InnerMethod::AccelProxGrad => "apg",
        }
    }
}

impl std::str::FromStr for InnerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fw" | "frank_wolfe" => Ok(InnerMethod::FrankWolfe),
            "apg" | "accel_prox_grad" => Ok(InnerMethod::AccelProxGrad),
            _ => Err(Error::InvalidArgument(format!(
                "unknown inner method '{s}' (valid: fw, apg)"
            ))),
        }
    }
}

/// Frank-Wolfe step size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `min(1, gap / (L_β‖w − y‖²))`, the minimizer of the quadratic upper model.
    Adaptive,
    /// `2 / (t + 2)`.
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub method: InnerMethod,
    pub budget: usize,
    pub check_every: usize,
    pub step_rule: StepRule,
}

impl InnerConfig {
    pub fn frank_wolfe(step_rule: StepRule) -> Self {
        InnerConfig {
            method: InnerMethod::FrankWolfe,
            budget: DEFAULT_BUDGET,
            check_every: 1,
            step_rule,
        }
    }

    pub fn accel_prox_grad() -> Self {
        InnerConfig {
            method: InnerMethod::AccelProxGrad,
            budget: DEFAULT_BUDGET,
            check_every: 10,
            step_rule: StepRule::Adaptive,
        }
    }

    pub fn for_method(method: InnerMethod) -> Self {
        match method {
            InnerMethod::FrankWolfe => InnerConfig::frank_wolfe(StepRule::Adaptive),
            InnerMethod::AccelProxGrad => InnerConfig::accel_prox_grad(),
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.check_every == 0 {
            return Err(Error::InvalidArgument(
                "inner budget and check_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig::accel_prox_grad()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x: Array1<f64>,
    pub gap: f64,
    pub iters: usize,
    /// `L_β` after each accepted step (adaptive Frank-Wolfe and APG only).
    pub al_values: Vec<f64>,
}

/// Keeps the lowest-gap iterate seen so far for budget-exhausted reports.
struct Best {
    x: Array1<f64>,
    gap: f64,
}

impl Best {
    fn offer(&mut self, x: &Array1<f64>, gap: f64) {
        if gap < self.gap {
            self.gap = gap;
            self.x.assign(x);
        }
    }

    fn into_error(self, budget: usize, iters: usize, al_values: Vec<f64>) -> Error {
        Error::BudgetExceeded {
            budget,
            best: Box::new(InnerResult {
                x: self.x,
                gap: self.gap,
                iters,
                al_values,
            }),
        }
    }
}

/// Runs the configured method from `warm_start` until the gap certificate is `≤ eta`.
pub fn solve_inner(
    p: &ProblemInstance,
    s: &DualState,
    warm_start: ArrayView1<f64>,
    eta: f64,
    cfg: &InnerConfig,
) -> Result<InnerResult> {
    cfg.validate()?;
    p.check_x(warm_start)?;
    p.check_lambda(s.lambda.view())?;
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    if !p.composite.contains(warm_start) {
        return Err(Error::OutsideDomain);
    }
    let al = AugmentedLagrangian::new(p, s);
    match cfg.method {
        InnerMethod::FrankWolfe => frank_wolfe(&al, warm_start, eta, cfg),
        InnerMethod::AccelProxGrad => accel_prox_grad(&al, warm_start, eta, cfg),
    }
}

fn frank_wolfe(al: &AugmentedLagrangian, start: ArrayView1<f64>, eta: f64, cfg: &InnerConfig) -> Result<InnerResult> {
    let lip = al.smoothness().max(f64::MIN_POSITIVE);
    let mut y = start.to_owned();
    let mut al_values = Vec::new();
    let mut best = Best {
        x: y.clone(),
        gap: f64::INFINITY,
    };
    for t in 0..=cfg.budget {
        let cert = al.certificate(y.view());
        best.offer(&y, cert.gap);
        if t % cfg.check_every == 0 && cert.gap <= eta {
            return Ok(InnerResult {
                x: y,
                gap: cert.gap,
                iters: t,
                al_values,
            });
        }
        if t == cfg.budget {
            break;
        }
        let dir = &cert.witness - &y;
        let gamma = match cfg.step_rule {
            StepRule::Adaptive => {
                let dd = dir.dot(&dir);
                if dd > 0.0 {
                    (cert.gap / (lip * dd)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            StepRule::OpenLoop => 2.0 / (t as f64 + 2.0),
        };
        y.scaled_add(gamma, &dir);
        if cfg.step_rule == StepRule::Adaptive {
            al_values.push(al.value(y.view()));
        }
    }
    Err(best.into_error(cfg.budget, cfg.budget, al_values))
}

/// FISTA with function-value restart; every iterate is a prox output.
fn accel_prox_grad(
    al: &AugmentedLagrangian,
    start: ArrayView1<f64>,
    eta: f64,
    cfg: &InnerConfig,
) -> Result<InnerResult> {
    let g = &al.problem.composite;
    let lip = al.smoothness().max(f64::MIN_POSITIVE);
    let step = 1.0 / lip;

    let mut x = start.to_owned();
    let cert = al.certificate(x.view());
    if cert.gap <= eta {
        return Ok(InnerResult {
            x,
            gap: cert.gap,
            iters: 0,
            al_values: Vec::new(),
        });
    }
    let mut best = Best {
        x: x.clone(),
        gap: cert.gap,
    };
    let mut phi_x = al.value(x.view());
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut al_values = Vec::new();

    for it in 1..=cfg.budget {
        let grad = al.smooth_grad(y.view());
        let mut z = y.clone();
        z.scaled_add(-step, &grad);
        let x_new = g.prox(z.view(), step);
        let phi_new = al.value(x_new.view());
        if phi_new > phi_x && momentum > 1.0 {
            // Restart: drop momentum and redo a plain proximal step from x.
            momentum = 1.0;
            y.assign(&x);
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            y = &x_new + &((&x_new - &x) * beta);
            x = x_new;
            phi_x = phi_new;
            momentum = next;
            al_values.push(phi_x);
        }
        if it % cfg.check_every == 0 {
            let cert = al.certificate(x.view());
            best.offer(&x, cert.gap);
            if cert.gap <= eta {
                return Ok(InnerResult {
                    x,
                    gap: cert.gap,
                    iters: it,
                    al_values,
                });
            }
        }
    }
    Err(best.into_error(cfg.budget, cfg.budget, al_values))
}

/// High-accuracy surrogate for `x(λ) = argmin L_β(·; λ)` from the domain center.
pub fn reference_inner_solve(p: &ProblemInstance, s: &DualState, tol: f64) -> Result<InnerResult> {
    let start = p.composite.center(p.n());
    reference_inner_solve_from(p, s, start.view(), tol)
}

/// As [`reference_inner_solve`], warm-started at `start`.
pub fn reference_inner_solve_from(
    p: &ProblemInstance,
    s: &DualState,
    start: ArrayView1<f64>,
    tol: f64,
) -> Result<InnerResult> {
    let cfg = InnerConfig::accel_prox_grad().with_budget(REFERENCE_BUDGET);
    solve_inner(p, s, start, tol, &cfg)
}

/// First iteration at which cold-started open-loop Frank-Wolfe certifies each `eta`.
///
/// All tolerances are read off a single trajectory, so the counts are
/// nondecreasing in `1/eta`.
pub fn iteration_complexity_probe(p: &ProblemInstance, s: &DualState, etas: &[f64]) -> Result<Vec<usize>> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "etas must be positive and strictly decreasing".into(),
        ));
    }
    p.check_lambda(s.lambda.view())?;
    let al = AugmentedLagrangian::new(p, s);
    let mut y = p.composite.center(p.n());
    let mut counts = Vec::with_capacity(etas.len());
    let mut best = Best {
        x: y.clone(),
        gap: f64::INFINITY,
    };
    for t in 0..=PROBE_BUDGET {
        let cert = al.certificate(y.view());
        best.offer(&y, cert.gap);
        while counts.len() < etas.len() && cert.gap <= etas[counts.len()] {
            counts.push(t);
        }
        if counts.len() == etas.len() {
            return Ok(counts);
        }
        let dir = &cert.witness - &y;
        y.scaled_add(2.0 / (t as f64 + 2.0), &dir);
    }
    Err(best.into_error(PROBE_BUDGET, PROBE_BUDGET, Vec::new()))
}
