//! Problem instances `min f(x) + g(x) s.t. Ax = b` and the oracles the solvers consume.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_len, Error, Result};
use crate::rng::Sampler;

/// Relative slack used when testing membership in `dom g`.
///
/// Frank-Wolfe iterates are long convex combinations, so the simplex sum and
/// box bounds drift by a few ulps per step.
pub const DOMAIN_TOL: f64 = 1e-9;

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 1000;

/// Smooth convex part `f` with a Lipschitz gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothTerm {
    Zero,
    /// `½ xᵀQx + cᵀx`, `Q` symmetric positive semidefinite.
    Quadratic {
        q: Array2<f64>,
        c: Array1<f64>,
        lipschitz: f64,
    },
    /// `½ ‖Mx − y‖²`.
    LeastSquares {
        m: Array2<f64>,
        y: Array1<f64>,
        lipschitz: f64,
    },
}

impl SmoothTerm {
    pub fn quadratic(q: Array2<f64>, c: Array1<f64>) -> Result<Self> {
        let n = c.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "quadratic term needs an {n}x{n} matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (q[[i, j]], q[[j, i]]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidArgument("quadratic term must be symmetric".into()));
                }
            }
        }
        // λmax(Q) = ‖Q‖ for PSD Q; the square root keeps the upper-bound property.
        let lipschitz = power_iteration_norm(q.view(), POWER_TOL, POWER_MAX_ITER).sqrt();
        Ok(SmoothTerm::Quadratic { q, c, lipschitz })
    }

    pub fn least_squares(m: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        check_len(m.nrows(), y.len())?;
        let lipschitz = power_iteration_norm(m.view(), POWER_TOL, POWER_MAX_ITER);
        Ok(SmoothTerm::LeastSquares { m, y, lipschitz })
    }

    /// Number of variables the term is defined on, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SmoothTerm::Zero => None,
            SmoothTerm::Quadratic { c, .. } => Some(c.len()),
            SmoothTerm::LeastSquares { m, .. } => Some(m.ncols()),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SmoothTerm::Zero => 0.0,
            SmoothTerm::Quadratic { lipschitz, .. } | SmoothTerm::LeastSquares { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            SmoothTerm::Zero => 0.0,
            SmoothTerm::Quadratic { q, c, .. } => 0.5 * x.dot(&q.dot(&x)) + c.dot(&x),
            SmoothTerm::LeastSquares { m, y, .. } => {
                let r = m.dot(&x) - y;
                0.5 * r.dot(&r)
            }
        }
    }

    pub fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            SmoothTerm::Zero => Array1::zeros(x.len()),
            SmoothTerm::Quadratic { q, c, .. } => q.dot(&x) + c,
            SmoothTerm::LeastSquares { m, y, .. } => {
                let r = m.dot(&x) - y;
                m.t().dot(&r)
            }
        }
    }
}

/// Closed convex term `g` with a bounded domain and closed-form prox and LMO.
#[derive(Debug, Clone, PartialEq)]
pub enum CompositeTerm {
    /// Indicator of `{x ≥ 0, Σx = radius}`.
    Simplex { radius: f64 },
    /// Indicator of `lo ≤ x ≤ hi`.
    Box { lo: Array1<f64>, hi: Array1<f64> },
    /// `tau‖x‖₁` restricted to `‖x‖∞ ≤ radius`.
    L1Box { tau: f64, radius: f64 },
}

impl CompositeTerm {
    pub fn simplex(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "simplex radius must be positive, got {radius}"
            )));
        }
        Ok(CompositeTerm::Simplex { radius })
    }

    pub fn boxed(lo: Array1<f64>, hi: Array1<f64>) -> Result<Self> {
        check_len(lo.len(), hi.len())?;
        if lo
            .iter()
            .zip(hi.iter())
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidArgument("box bounds must be finite with lo <= hi".into()));
        }
        Ok(CompositeTerm::Box { lo, hi })
    }

    pub fn l1_box(tau: f64, radius: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite() && radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "l1 box needs tau >= 0 and radius > 0, got tau={tau} radius={radius}"
            )));
        }
        Ok(CompositeTerm::L1Box { tau, radius })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            CompositeTerm::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }

    pub fn contains(&self, x: ArrayView1<f64>) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            CompositeTerm::Simplex { radius } => {
                let tol = DOMAIN_TOL * radius.max(1.0);
                x.iter().all(|&v| v >= -tol) && (x.sum() - radius).abs() <= tol
            }
            CompositeTerm::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi.iter())).all(|(&v, (&l, &h))| {
                let tol = DOMAIN_TOL * (1.0 + l.abs().max(h.abs()));
                v >= l - tol && v <= h + tol
            }),
            CompositeTerm::L1Box { radius, .. } => {
                let tol = DOMAIN_TOL * radius.max(1.0);
                x.iter().all(|v| v.abs() <= radius + tol)
            }
        }
    }

    /// `g(x)`, `+∞` outside the domain.
    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        if !self.contains(x) {
            return f64::INFINITY;
        }
        match self {
            CompositeTerm::Simplex { .. } | CompositeTerm::Box { .. } => 0.0,
            CompositeTerm::L1Box { tau, .. } => tau * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// `argmin_x ½‖x − z‖² + t·g(x)`.
    pub fn prox(&self, z: ArrayView1<f64>, t: f64) -> Array1<f64> {
        match self {
            CompositeTerm::Simplex { radius } => project_simplex(z, *radius),
            CompositeTerm::Box { lo, hi } => Array1::from_iter(
                z.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(&v, (&l, &h))| v.clamp(l, h)),
            ),
            CompositeTerm::L1Box { tau, radius } => {
                let k = t * tau;
                z.mapv(|v| soft_threshold(v, k).clamp(-radius, *radius))
            }
        }
    }

    /// `argmin_x ⟨c, x⟩ + g(x)` over `dom g`.
    pub fn lmo(&self, c: ArrayView1<f64>) -> Array1<f64> {
        match self {
            CompositeTerm::Simplex { radius } => {
                let mut best = 0;
                for (i, &v) in c.iter().enumerate() {
                    if v < c[best] {
                        best = i;
                    }
                }
                let mut w = Array1::zeros(c.len());
                if !c.is_empty() {
                    w[best] = *radius;
                }
                w
            }
            CompositeTerm::Box { lo, hi } => Array1::from_iter(
                c.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(&ci, (&l, &h))| if ci > 0.0 { l } else { h }),
            ),
            CompositeTerm::L1Box { tau, radius } => c.mapv(|ci| {
                if ci > *tau {
                    -radius
                } else if ci < -tau {
                    *radius
                } else {
                    0.0
                }
            }),
        }
    }

    /// Euclidean bound on every point of the domain.
    pub fn domain_radius(&self, n: usize) -> f64 {
        match self {
            CompositeTerm::Simplex { radius } => *radius,
            CompositeTerm::Box { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            CompositeTerm::L1Box { radius, .. } => radius * (n as f64).sqrt(),
        }
    }

    /// Euclidean diameter bound of the domain.
    pub fn domain_diameter(&self, n: usize) -> f64 {
        match self {
            CompositeTerm::Simplex { radius } => radius * std::f64::consts::SQRT_2,
            CompositeTerm::Box { lo, hi } => (hi - lo).mapv(|d| d * d).sum().sqrt(),
            CompositeTerm::L1Box { radius, .. } => 2.0 * radius * (n as f64).sqrt(),
        }
    }

    /// A canonical interior-ish starting point.
    pub fn center(&self, n: usize) -> Array1<f64> {
        match self {
            CompositeTerm::Simplex { radius } => Array1::from_elem(n, radius / n as f64),
            CompositeTerm::Box { lo, hi } => (lo + hi) * 0.5,
            CompositeTerm::L1Box { .. } => Array1::zeros(n),
        }
    }
}

pub fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = radius}` by sorting.
pub fn project_simplex(z: ArrayView1<f64>, radius: f64) -> Array1<f64> {
    let mut u: Vec<f64> = z.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            shift = candidate;
        } else {
            break;
        }
    }
    z.mapv(|v| (v - shift).max(0.0))
}

/// Dense equality constraint `Ax = b` with a guaranteed bound on `‖A‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub op_norm_sq: f64,
}

impl LinearConstraint {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        check_len(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("constraint data must be finite".into()));
        }
        let op_norm_sq = power_iteration_norm(a.view(), POWER_TOL, POWER_MAX_ITER);
        Ok(LinearConstraint { a, b, op_norm_sq })
    }

    pub fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.a.dot(&x) - &self.b
    }
}

/// Upper bound on `‖A‖²` (largest eigenvalue of `AᵀA`) by power iteration.
///
/// The converged Rayleigh quotient is inflated by `1 + tol`. When the
/// iteration does not settle within `max_iter` steps the squared Frobenius
/// norm is returned instead. The result never exceeds `‖A‖_F²`.
pub fn power_iteration_norm(a: ArrayView2<f64>, tol: f64, max_iter: usize) -> f64 {
    let frob: f64 = a.iter().map(|v| v * v).sum();
    if frob == 0.0 || a.ncols() == 0 {
        return 0.0;
    }
    let n = a.ncols();
    // Irrational offsets keep the start vector off any structured eigenvector.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut prev = 0.0;
    for it in 0..max_iter {
        let w = a.t().dot(&a.dot(&v));
        let est = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
        if it > 0 && (est - prev).abs() <= 1e-3 * tol * est {
            return (est * (1.0 + tol)).min(frob);
        }
        prev = est;
    }
    frob
}

/// A fully specified instance of `min f(x) + g(x) s.t. Ax = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub name: String,
    pub smooth: SmoothTerm,
    pub composite: CompositeTerm,
    pub constraint: LinearConstraint,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        smooth: SmoothTerm,
        composite: CompositeTerm,
        constraint: LinearConstraint,
    ) -> Result<Self> {
        let n = constraint.a.ncols();
        if let Some(d) = smooth.dim() {
            check_len(n, d)?;
        }
        if let Some(d) = composite.dim() {
            check_len(n, d)?;
        }
        Ok(ProblemInstance {
            name: name.into(),
            smooth,
            composite,
            constraint,
        })
    }

    pub fn n(&self) -> usize {
        self.constraint.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.constraint.a.nrows()
    }

    pub fn check_x(&self, x: ArrayView1<f64>) -> Result<()> {
        check_len(self.n(), x.len())
    }

    pub fn check_lambda(&self, lambda: ArrayView1<f64>) -> Result<()> {
        check_len(self.m(), lambda.len())
    }

    /// `F(x)` without dimension checks.
    pub fn objective(&self, x: ArrayView1<f64>) -> f64 {
        self.smooth.eval(x) + self.composite.eval(x)
    }
}

/// `F(x) = f(x) + g(x)`; `+∞` when `x ∉ dom g`.
pub fn eval_objective(p: &ProblemInstance, x: ArrayView1<f64>) -> Result<f64> {
    p.check_x(x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("x must be finite".into()));
    }
    Ok(p.objective(x))
}

/// Instance families with closed-form composite oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Least squares over the unit simplex.
    SimplexLs,
    /// Convex quadratic over `[-1, 1]ⁿ`.
    BoxQp,
    /// `min ‖x‖₁ s.t. Ax = b` on a bounded box.
    L1BasisPursuit,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SimplexLs, Family::BoxQp, Family::L1BasisPursuit];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::SimplexLs => "simplex_ls",
            Family::BoxQp => "box_qp",
            Family::L1BasisPursuit => "l1_basis_pursuit",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown family '{s}' (valid: {})",
                Family::ALL.map(Family::as_str).join(", ")
            ))
        })
    }
}

/// Box half-width for `l1_basis_pursuit`.
pub const L1_BOX_RADIUS: f64 = 2.0;

/// A generated instance together with the feasible point it was planted from.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: ProblemInstance,
    pub planted: Array1<f64>,
}

fn normal_matrix(s: &mut Sampler, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| s.normal())
}

fn normal_vector(s: &mut Sampler, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| s.normal())
}

/// Draws a deterministic instance of `family`.
///
/// Draw order: `A` (row-major), the family's smooth-term data, then the
/// planted point `x̄ ∈ dom g`; finally `b = Ax̄`.
pub fn generate(family: Family, n: usize, m: usize, seed: u64) -> Result<Generated> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= n, got n={n} m={m}")));
    }
    let mut s = Sampler::new(seed);
    let a = normal_matrix(&mut s, m, n);
    let (smooth, composite, planted) = match family {
        Family::SimplexLs => {
            let mm = normal_matrix(&mut s, n, n);
            let y = normal_vector(&mut s, n);
            let mut x = Array1::from_shape_fn(n, |_| s.exponential());
            let total = x.sum();
            x /= total;
            (SmoothTerm::least_squares(mm, y)?, CompositeTerm::simplex(1.0)?, x)
        }
        Family::BoxQp => {
            let g = normal_matrix(&mut s, n, n);
            let mut q = g.t().dot(&g) / n as f64;
            // Symmetrize away rounding asymmetry.
            let qt = q.t().to_owned();
            q = (&q + &qt) * 0.5;
            let c = normal_vector(&mut s, n);
            let x = Array1::from_shape_fn(n, |_| s.uniform_in(-1.0, 1.0));
            (
                SmoothTerm::quadratic(q, c)?,
                CompositeTerm::boxed(Array1::from_elem(n, -1.0), Array1::from_elem(n, 1.0))?,
                x,
            )
        }
        Family::L1BasisPursuit => {
            let x = Array1::from_shape_fn(n, |_| s.uniform_in(-1.0, 1.0) * 0.5 * L1_BOX_RADIUS);
            (SmoothTerm::Zero, CompositeTerm::l1_box(1.0, L1_BOX_RADIUS)?, x)
        }
    };
    let b = a.dot(&planted);
    let instance = ProblemInstance::new(
        format!("{family}_n{n}_m{m}_seed{seed}"),
        smooth,
        composite,
        LinearConstraint::new(a, b)?,
    )?;
    Ok(Generated { instance, planted })
}

pub fn generate_instance(family: Family, n: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    generate(family, n, m, seed).map(|g| g.instance)
}
