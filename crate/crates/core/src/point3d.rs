//! Boundary calculus for point perturbations of the Laplacian in ℝ³.
//!
//! For a finite set `Y`, `[G_λξ](x) = Σ_y e^{−√λ|x−y|}/(4π|x−y|) ξ_y` and the
//! Weyl function is
//!
//! ```text
//! (M_λ)_{yy} = √λ/4π,    (M_λ)_{yy'} = −e^{−√λ r}/(4πr),   r = |y − y'|.
//! ```
//!
//! States are finite sums `Σ_j G_{μ_j}ζ_j`. The free resolvent keeps that
//! class invariant, `R°_λ G_μ = (G_μ − G_λ)/(λ − μ)`, so a resolvent step is
//! coefficient algebra plus one `n`-dimensional boundary inclusion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::hilbert::min_eigenvalue;
use crate::inclusion::{solve_inclusion, SolverOptions};
use crate::relations::MonotoneRelation;
use crate::{Error, Matrix, Result, Vector};

/// Smallest admissible distance between two points of `Y`.
pub const MIN_SEPARATION: f64 = 1e-9;
/// Terms whose charge norm falls below this are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-13;
/// Relative perturbation applied to a step exponent that collides with a term.
pub const COLLISION_SHIFT: f64 = 1e-6;

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PointConfig {
    points: Vec<[f64; 3]>,
    distances: Matrix,
}

impl TryFrom<Vec<[f64; 3]>> for PointConfig {
    type Error = Error;

    fn try_from(points: Vec<[f64; 3]>) -> Result<Self> {
        PointConfig::new(points)
    }
}

impl From<PointConfig> for Vec<[f64; 3]> {
    fn from(cfg: PointConfig) -> Self {
        cfg.points
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl PointConfig {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidPoints("at least one point is required".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoints("coordinates must be finite".into()));
        }
        let n = points.len();
        let distances = Matrix::from_fn(n, n, |i, j| dist(&points[i], &points[j]));
        for i in 0..n {
            for j in 0..i {
                if distances[(i, j)] <= MIN_SEPARATION {
                    return Err(Error::InvalidPoints(format!(
                        "points {j} and {i} coincide (distance {:e})",
                        distances[(i, j)]
                    )));
                }
            }
        }
        Ok(PointConfig { points, distances })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMatrices {
    /// `M_λ`.
    pub weyl: Matrix,
    /// `M°_λ = M_λ − M_{λ°}`.
    pub weyl_shifted: Matrix,
    /// `L° = M_{λ°}`.
    pub base: Matrix,
}

fn check_nonneg(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidShift { lambda, bound: 0.0 })
    }
}

fn check_positive(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidShift { lambda, bound: 0.0 })
    }
}

/// `M_λ` for `λ ≥ 0`.
pub fn weyl_function(cfg: &PointConfig, lambda: f64) -> Result<Matrix> {
    check_nonneg(lambda)?;
    let s = lambda.sqrt();
    Ok(Matrix::from_fn(cfg.len(), cfg.len(), |i, j| {
        if i == j {
            s / FOUR_PI
        } else {
            let r = cfg.distance(i, j);
            -(-s * r).exp() / (FOUR_PI * r)
        }
    }))
}

pub fn boundary_matrices(cfg: &PointConfig, lambda: f64, base_shift: f64) -> Result<BoundaryMatrices> {
    check_nonneg(lambda)?;
    check_positive(base_shift)?;
    let weyl = weyl_function(cfg, lambda)?;
    let base = weyl_function(cfg, base_shift)?;
    let (s, s0) = (lambda.sqrt(), base_shift.sqrt());
    // Entrywise difference, written so that λ = λ° gives exact zeros.
    let weyl_shifted = Matrix::from_fn(cfg.len(), cfg.len(), |i, j| {
        if i == j {
            (s - s0) / FOUR_PI
        } else {
            let r = cfg.distance(i, j);
            let a = s.min(s0);
            let d = (s - s0).abs();
            let mag = (-a * r).exp() * -(-d * r).exp_m1() / (FOUR_PI * r);
            if s >= s0 {
                mag
            } else {
                -mag
            }
        }
    });
    Ok(BoundaryMatrices {
        weyl,
        weyl_shifted,
        base,
    })
}

/// Smallest eigenvalue of `M_0`.
pub fn gamma0(cfg: &PointConfig) -> f64 {
    if cfg.len() == 1 {
        return 0.0;
    }
    let m0 = weyl_function(cfg, 0.0).expect("λ = 0 is admissible");
    min_eigenvalue(&m0).min(0.0)
}

/// `(1 − e^{−x})/x`, equal to 1 at 0.
fn expm1_ratio(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `G_μᵀ G_λ` for `λ, μ ≥ 0`, not both zero.
fn gram(cfg: &PointConfig, lambda: f64, mu: f64) -> Matrix {
    let (a, b) = {
        let (x, y) = (lambda.sqrt(), mu.sqrt());
        (x.min(y), x.max(y))
    };
    let sum = FOUR_PI * (a + b);
    Matrix::from_fn(cfg.len(), cfg.len(), |i, j| {
        if i == j {
            1.0 / sum
        } else {
            let r = cfg.distance(i, j);
            (-a * r).exp() * expm1_ratio((b - a) * r) / sum
        }
    })
}

/// `G_μᵀ G_λ = (M°_λ − M°_μ)/(λ − μ)`, with the analytic limit at `λ = μ`.
pub fn green_gram(cfg: &PointConfig, lambda: f64, mu: f64) -> Result<Matrix> {
    check_positive(lambda)?;
    check_positive(mu)?;
    Ok(gram(cfg, lambda, mu))
}

/// `[G_λξ](x)`.
pub fn green_eval(cfg: &PointConfig, lambda: f64, xi: &[f64], x: &[f64; 3]) -> Result<f64> {
    check_nonneg(lambda)?;
    if xi.len() != cfg.len() {
        return Err(Error::DimensionMismatch {
            expected: cfg.len(),
            found: xi.len(),
        });
    }
    let s = lambda.sqrt();
    let mut total = 0.0;
    for (y, q) in cfg.points().iter().zip(xi) {
        let r = dist(x, y);
        if r <= MIN_SEPARATION {
            return Err(Error::SingularPoint);
        }
        total += q * (-s * r).exp() / (FOUR_PI * r);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenTerm {
    pub mu: f64,
    pub charges: Vec<f64>,
}

/// `Σ_j G_{μ_j} ζ_j` with distinct exponents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GreenState {
    pub terms: Vec<GreenTerm>,
}

impl GreenState {
    pub fn zero() -> Self {
        GreenState::default()
    }

    pub fn single(mu: f64, charges: Vec<f64>) -> Self {
        let mut s = GreenState::zero();
        s.add_term(mu, &charges, 1.0);
        s
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (j, t) in self.terms.iter().enumerate() {
            if !(t.mu >= 0.0) || !t.mu.is_finite() {
                return Err(Error::InvalidShift { lambda: t.mu, bound: 0.0 });
            }
            if t.charges.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: t.charges.len(),
                });
            }
            if t.charges.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidPoints(format!("term {j} has non-finite charges")));
            }
            if self.terms[..j].iter().any(|o| o.mu == t.mu) {
                return Err(Error::ExponentCollision { exponent: t.mu });
            }
        }
        Ok(())
    }

    /// Adds `scale·G_μζ`, merging with an existing term of the same exponent.
    pub fn add_term(&mut self, mu: f64, charges: &[f64], scale: f64) {
        match self.terms.iter_mut().find(|t| t.mu == mu) {
            Some(t) => {
                for (c, z) in t.charges.iter_mut().zip(charges) {
                    *c += scale * z;
                }
            }
            None => self.terms.push(GreenTerm {
                mu,
                charges: charges.iter().map(|z| scale * z).collect(),
            }),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &GreenState, b: f64) -> GreenState {
        let mut out = GreenState::zero();
        for t in &self.terms {
            out.add_term(t.mu, &t.charges, a);
        }
        for t in &other.terms {
            out.add_term(t.mu, &t.charges, b);
        }
        out
    }

    /// Drops negligible terms and orders by exponent.
    pub fn prune(&mut self, threshold: f64) {
        self.terms
            .retain(|t| t.charges.iter().map(|c| c * c).sum::<f64>().sqrt() >= threshold);
        self.terms.sort_by(|x, y| x.mu.total_cmp(&y.mu));
    }

    pub fn charge_norm(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| t.charges.iter())
            .fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, cfg: &PointConfig, x: &[f64; 3]) -> Result<f64> {
        self.terms
            .iter()
            .map(|t| green_eval(cfg, t.mu, &t.charges, x))
            .sum()
    }

    /// `G_λᵀ u`.
    pub fn trace_against(&self, cfg: &PointConfig, lambda: f64) -> Vector {
        let mut eta = Vector::zeros(cfg.len());
        for t in &self.terms {
            eta += gram(cfg, lambda, t.mu) * Vector::from_column_slice(&t.charges);
        }
        eta
    }

    /// Squared L² norm; `+∞` when a nonzero `μ = 0` term is present.
    pub fn l2_norm_sq(&self, cfg: &PointConfig) -> f64 {
        if self.terms.iter().any(|t| t.mu == 0.0 && t.charges.iter().any(|c| *c != 0.0)) {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for s in &self.terms {
            let zs = Vector::from_column_slice(&s.charges);
            for t in &self.terms {
                let zt = Vector::from_column_slice(&t.charges);
                total += zs.dot(&(gram(cfg, s.mu, t.mu) * zt));
            }
        }
        total.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenStep {
    pub state: GreenState,
    /// Exponent actually used, after any collision shift.
    pub lambda: f64,
    /// Charge `ξ` of the appended `G_λ` term.
    pub charge: Vector,
    pub iterations: usize,
    pub error_bound: f64,
}

fn collides(state: &GreenState, lambda: f64) -> bool {
    state
        .terms
        .iter()
        .any(|t| (t.mu - lambda).abs() <= 1e-12 * lambda.max(1.0))
}

/// `R_λ(u) = R°_λ u + G_λ ξ`, with `G_λᵀu ∈ Θ(ξ) + M_λξ`.
pub fn resolvent_step_green(
    cfg: &PointConfig,
    theta: &MonotoneRelation,
    lambda: f64,
    state: &GreenState,
    opts: &SolverOptions,
) -> Result<GreenStep> {
    check_positive(lambda)?;
    state.validate(cfg.len())?;
    if collides(state, lambda) {
        return Err(Error::ExponentCollision { exponent: lambda });
    }
    let mut next = GreenState::zero();
    for t in &state.terms {
        let w = 1.0 / (lambda - t.mu);
        next.add_term(t.mu, &t.charges, w);
        next.add_term(lambda, &t.charges, -w);
    }
    let eta = state.trace_against(cfg, lambda);
    let m = weyl_function(cfg, lambda)?;
    let sol = solve_inclusion(&m, theta, &eta, None, opts)?;
    next.add_term(lambda, sol.xi.as_slice(), 1.0);
    next.prune(PRUNE_THRESHOLD);
    Ok(GreenStep {
        state: next,
        lambda,
        charge: sol.xi,
        iterations: sol.iterations,
        error_bound: sol.error_bound,
    })
}

/// Implicit Euler steps `u' = R_{1/h}(u/h)`; a step exponent that meets an
/// existing term is moved by relative multiples of [`COLLISION_SHIFT`].
///
/// Repeated shifts make the divided differences `1/(λ − μ)` large, so the
/// coefficients lose roughly six digits per colliding step. Keep runs short.
pub fn evolve_green(
    cfg: &PointConfig,
    theta: &MonotoneRelation,
    initial: &GreenState,
    h: f64,
    steps: usize,
    opts: &SolverOptions,
) -> Result<Vec<GreenStep>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::StepSize { h, product: 0.0 });
    }
    let mut out: Vec<GreenStep> = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for _ in 0..steps {
        let mut lambda = 1.0 / h;
        let mut j = 0;
        while collides(&state, lambda) {
            j += 1;
            lambda = (1.0 + j as f64 * COLLISION_SHIFT) / h;
        }
        let scaled = state.combine(lambda, &GreenState::zero(), 0.0);
        let step = resolvent_step_green(cfg, theta, lambda, &scaled, opts)?;
        state = step.state.clone();
        out.push(step);
    }
    Ok(out)
}
