//! Augmented Lagrangian `L_β(x; λ) = f(x) + ⟨λ, Ax − b⟩ + (β/2)‖Ax − b‖² + g(x)`,
//! its gap certificate, and dual-function estimates.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::inner::{reference_inner_solve_from, InnerResult};
use crate::problem::ProblemInstance;

/// Default accuracy of reference subproblem solves.
pub const REFERENCE_TOL: f64 = 1e-10;

/// Slack for inequalities that involve surrogate dual values.
pub fn dual_slack(tol: f64) -> f64 {
    10.0 * tol + 1e-9
}

/// Multiplier and penalty at which the augmented Lagrangian is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Array1<f64>,
    pub beta: f64,
}

impl DualState {
    pub fn new(lambda: Array1<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be finite".into()));
        }
        Ok(DualState { lambda, beta })
    }

    pub fn zeros(m: usize, beta: f64) -> Result<Self> {
        DualState::new(Array1::zeros(m), beta)
    }
}

/// Value of the gap maximization at `x` together with its maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub gap: f64,
    pub witness: Array1<f64>,
    pub grad_at_x: Array1<f64>,
}

/// Borrowed view of `L_β(·; λ)` used in solver hot loops; performs no dimension checks.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedLagrangian<'a> {
    pub problem: &'a ProblemInstance,
    pub lambda: ArrayView1<'a, f64>,
    pub beta: f64,
}

impl<'a> AugmentedLagrangian<'a> {
    pub fn new(problem: &'a ProblemInstance, state: &'a DualState) -> Self {
        AugmentedLagrangian {
            problem,
            lambda: state.lambda.view(),
            beta: state.beta,
        }
    }

    /// Gradient Lipschitz constant of the smooth part `L_f + β‖A‖²`.
    pub fn smoothness(&self) -> f64 {
        self.problem.smooth.lipschitz() + self.beta * self.problem.constraint.op_norm_sq
    }

    /// `f̂_β(x; λ)`, the smooth part.
    pub fn smooth_value(&self, x: ArrayView1<f64>) -> f64 {
        let r = self.problem.constraint.residual(x);
        self.problem.smooth.eval(x) + self.lambda.dot(&r) + 0.5 * self.beta * r.dot(&r)
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        let g = self.problem.composite.eval(x);
        if g.is_infinite() {
            return f64::INFINITY;
        }
        self.smooth_value(x) + g
    }

    /// `∇f(x) + Aᵀλ + βAᵀ(Ax − b)`.
    pub fn smooth_grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let r = self.problem.constraint.residual(x);
        let mult = &self.lambda + &(r * self.beta);
        self.problem.smooth.grad(x) + self.problem.constraint.a.t().dot(&mult)
    }

    /// `max_u ⟨∇f̂_β(x), x − u⟩ + g(x) − g(u)`, solved exactly by one LMO call.
    pub fn certificate(&self, x: ArrayView1<f64>) -> Certificate {
        let c = self.smooth_grad(x);
        self.certificate_with_grad(x, c)
    }

    pub(crate) fn certificate_with_grad(&self, x: ArrayView1<f64>, c: Array1<f64>) -> Certificate {
        let g = &self.problem.composite;
        let w = g.lmo(c.view());
        let gap = c.dot(&(&x - &w)) + g.eval(x) - g.eval(w.view());
        Certificate {
            gap,
            witness: w,
            grad_at_x: c,
        }
    }
}

fn checked<'a>(p: &'a ProblemInstance, x: ArrayView1<f64>, s: &'a DualState) -> Result<AugmentedLagrangian<'a>> {
    p.check_x(x)?;
    p.check_lambda(s.lambda.view())?;
    Ok(AugmentedLagrangian::new(p, s))
}

/// `L_β(x; λ)`; `+∞` when `x ∉ dom g`.
pub fn al_value(p: &ProblemInstance, x: ArrayView1<f64>, s: &DualState) -> Result<f64> {
    Ok(checked(p, x, s)?.value(x))
}

/// `∇_x f̂_β(x; λ)`.
pub fn al_smooth_grad(p: &ProblemInstance, x: ArrayView1<f64>, s: &DualState) -> Result<Array1<f64>> {
    Ok(checked(p, x, s)?.smooth_grad(x))
}

/// Inner stopping certificate at `x`; errors when `x ∉ dom g`.
pub fn gap_certificate(p: &ProblemInstance, x: ArrayView1<f64>, s: &DualState) -> Result<Certificate> {
    let al = checked(p, x, s)?;
    if !p.composite.contains(x) {
        return Err(Error::OutsideDomain);
    }
    Ok(al.certificate(x))
}

/// `L_β(x; λ) − ref_min`, clamped at zero. Diagnostic only.
pub fn al_suboptimality(p: &ProblemInstance, x: ArrayView1<f64>, s: &DualState, ref_min: f64) -> Result<f64> {
    Ok((al_value(p, x, s)? - ref_min).max(0.0))
}

/// Surrogate for `(d(λ), ∇d(λ))` from a certified subproblem solve.
///
/// `value` overestimates `d(λ)` by at most `gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEstimate {
    pub value: f64,
    pub grad: Array1<f64>,
    pub x: Array1<f64>,
    pub gap: f64,
    pub iters: usize,
}

impl DualEstimate {
    fn from_inner(p: &ProblemInstance, s: &DualState, r: InnerResult) -> Self {
        let al = AugmentedLagrangian::new(p, s);
        DualEstimate {
            value: al.value(r.x.view()),
            grad: p.constraint.residual(r.x.view()),
            x: r.x,
            gap: r.gap,
            iters: r.iters,
        }
    }
}

/// Approximates `d(λ) = min_x L_β(x; λ)` and `∇d(λ) = Ax(λ) − b` to gap `tol`.
pub fn dual_value_and_grad(p: &ProblemInstance, s: &DualState, tol: f64) -> Result<DualEstimate> {
    let start = p.composite.center(p.n());
    dual_value_and_grad_from(p, s, start.view(), tol)
}

/// As [`dual_value_and_grad`], warm-started at `start`.
pub fn dual_value_and_grad_from(
    p: &ProblemInstance,
    s: &DualState,
    start: ArrayView1<f64>,
    tol: f64,
) -> Result<DualEstimate> {
    p.check_lambda(s.lambda.view())?;
    let r = reference_inner_solve_from(p, s, start, tol)?;
    Ok(DualEstimate::from_inner(p, s, r))
}
