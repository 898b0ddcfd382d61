//! The nonlinear Krein-type resolvent and the extension `A_Θ` it generates.
//!
//! With `R°_λ = (A° + λ)^{-1}`, `G_λ = (τR°_λ)ᵀ` and
//! `M°_λ = τ(G° − G_λ) = (λ − λ°) G°ᵀG_λ`, the resolvent of `A_Θ` is
//!
//! ```text
//! R_λ(u) = R°_λ u + G_λ ξ,    G_λᵀu ∈ Θ(ξ) + M°_λ ξ.
//! ```
//!
//! In finite dimensions `range(G_λ)` meets the domain of `A°`, so the
//! splitting `u = u° + G°ξ` is not unique and `A_Θ` is only accessed at graph
//! level: through [`GraphPoint`]s and resolvent round-trips.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::SelfAdjointGenerator;
use crate::inclusion::{solve_inclusion, InclusionSolution, SolverOptions};
use crate::relations::{ConvexFunction, MonotoneRelation};
use crate::report::Check;
use crate::rng;
use crate::{Error, Matrix, Result, Vector};

/// Smallest singular value accepted for the trace map.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Largest inclusion residual accepted for a user-supplied graph pair.
pub const PAIR_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct KreinExtension {
    generator: SelfAdjointGenerator,
    trace: Matrix,
    /// `τV`, the trace map in the eigenbasis of `A°`.
    trace_spectral: Matrix,
    trace_pinv: Matrix,
    base_shift: f64,
    base_charge: Matrix,
    frame_constant: f64,
    solver: SolverOptions,
}

/// A point of the graph of `A_Θ`, built from an explicit decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    /// `u°`, the regular part.
    pub regular: Vector,
    /// `ξ`, the charge.
    pub charge: Vector,
    /// `u = u° + G°ξ`.
    pub state: Vector,
    /// `w = A°u° − λ°G°ξ`, the value of `A_Θ` at `u`.
    pub action: Vector,
}

/// Output of one resolvent evaluation together with its decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventParts {
    /// `R_λ(u)`.
    pub value: Vector,
    /// `R°_λ u`.
    pub regular: Vector,
    /// Solution `ξ` of the boundary inclusion.
    pub charge: Vector,
    /// Element of `Θ(ξ)` returned by the inner solver.
    pub boundary_value: Vector,
    pub iterations: usize,
    pub error_bound: f64,
}

/// Data recovered from `R_λ(w + λu)` for a graph point `(u, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    pub state: Vector,
    /// `A°u_λ − λG_λξ(λ)`, the action of `A_Θ` seen through level `λ`.
    pub action: Vector,
    pub charge: Vector,
}

/// Tolerances for [`KreinExtension::verify_identities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityTolerances {
    pub resolvent_identity: f64,
    pub weyl_identity: f64,
    pub symmetry: f64,
    pub monotonicity: f64,
    pub lipschitz: f64,
    pub coercivity: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        IdentityTolerances {
            resolvent_identity: 1e-8,
            weyl_identity: 1e-10,
            symmetry: 1e-12,
            monotonicity: 1e-10,
            lipschitz: 1e-10,
            coercivity: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub samples: usize,
    /// `max |R_λ(u) − R_μ(u − (λ−μ)R_λ(u))|`.
    pub resolvent_identity: f64,
    /// `max |M°_λ − M°_μ − (λ−μ)G_μᵀG_λ|`.
    pub weyl_identity: f64,
    pub symmetry: f64,
    /// `min ⟨R_λ(u) − R_λ(v), u − v⟩ / |u − v|²`.
    pub monotonicity: f64,
    /// `max (λ − λ°)|R_λ(u) − R_λ(v)| / |u − v|`.
    pub lipschitz: f64,
    /// `min ([M°_λξ, ξ] − bound·|ξ|²) / |ξ|²` for the coercivity bound.
    pub coercivity: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl KreinExtension {
    pub fn build(generator: SelfAdjointGenerator, trace: Matrix, base_shift: f64) -> Result<Self> {
        generator.check_shift(base_shift)?;
        if trace.ncols() != generator.dim() {
            return Err(Error::DimensionMismatch {
                expected: generator.dim(),
                found: trace.ncols(),
            });
        }
        if trace.nrows() == 0 || trace.nrows() > trace.ncols() {
            return Err(Error::RankDeficient { sigma_min: 0.0 });
        }
        let svd = trace.clone().svd(true, true);
        let sigma_min = svd.singular_values.min();
        if !(sigma_min > RANK_TOLERANCE) {
            return Err(Error::RankDeficient { sigma_min });
        }
        let trace_pinv = svd
            .pseudo_inverse(RANK_TOLERANCE)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let trace_spectral = &trace * generator.eigenvectors();
        let mut ext = KreinExtension {
            generator,
            trace,
            trace_spectral,
            trace_pinv,
            base_shift,
            base_charge: Matrix::zeros(0, 0),
            frame_constant: 0.0,
            solver: SolverOptions::default(),
        };
        ext.base_charge = ext.charge_map(base_shift)?;
        ext.frame_constant = ext.base_charge.clone().svd(false, false).singular_values.min();
        Ok(ext)
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    /// Same generator and `λ°`, different trace map.
    pub fn with_trace(&self, trace: Matrix) -> Result<Self> {
        Ok(KreinExtension::build(self.generator.clone(), trace, self.base_shift)?
            .with_solver(self.solver))
    }

    pub fn generator(&self) -> &SelfAdjointGenerator {
        &self.generator
    }

    pub fn trace(&self) -> &Matrix {
        &self.trace
    }

    pub fn base_shift(&self) -> f64 {
        self.base_shift
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Boundary dimension.
    pub fn boundary_dim(&self) -> usize {
        self.trace.nrows()
    }

    /// Smallest singular value of `G°`.
    pub fn frame_constant(&self) -> f64 {
        self.frame_constant
    }

    /// `G°`.
    pub fn base_charge(&self) -> &Matrix {
        &self.base_charge
    }

    /// `(τV) diag(f(e)) (τV)ᵀ`.
    fn boundary_form(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let eig = self.generator.eigenvalues();
        let weighted = Matrix::from_fn(self.boundary_dim(), self.dim(), |i, k| {
            self.trace_spectral[(i, k)] * f(eig[k])
        });
        let form = weighted * self.trace_spectral.transpose();
        (&form + form.transpose()) * 0.5
    }

    /// `G_λ = R°_λ τᵀ` as a `dim × boundary_dim` matrix.
    pub fn charge_map(&self, lambda: f64) -> Result<Matrix> {
        self.generator.check_shift(lambda)?;
        let eig = self.generator.eigenvalues();
        let scaled = Matrix::from_fn(self.dim(), self.boundary_dim(), |k, i| {
            self.trace_spectral[(i, k)] / (eig[k] + lambda)
        });
        Ok(self.generator.eigenvectors() * scaled)
    }

    /// `G_λ ξ`.
    pub fn charge_apply(&self, lambda: f64, xi: &Vector) -> Result<Vector> {
        self.generator.check_shift(lambda)?;
        let coeffs = self.trace_spectral.tr_mul(xi);
        let eig = self.generator.eigenvalues();
        let scaled = Vector::from_fn(self.dim(), |k, _| coeffs[k] / (eig[k] + lambda));
        Ok(self.generator.eigenvectors() * scaled)
    }

    /// `G_λᵀ u = τ R°_λ u`.
    pub fn charge_adjoint_apply(&self, lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(&self.trace * self.generator.resolvent_apply(lambda, u)?)
    }

    /// `M°_λ = (λ − λ°) G°ᵀG_λ`, assembled in the eigenbasis.
    pub fn weyl_matrix(&self, lambda: f64) -> Result<Matrix> {
        self.generator.check_shift(lambda)?;
        let (l0, l) = (self.base_shift, lambda);
        Ok(self.boundary_form(|e| (l - l0) / ((e + l0) * (e + l))))
    }

    /// `M°_λ = τ(G° − G_λ)`, the direct route.
    pub fn weyl_matrix_direct(&self, lambda: f64) -> Result<Matrix> {
        Ok(&self.trace * (&self.base_charge - self.charge_map(lambda)?))
    }

    /// `G_μᵀ G_λ`.
    pub fn charge_gram(&self, mu: f64, lambda: f64) -> Result<Matrix> {
        self.generator.check_shift(mu)?;
        self.generator.check_shift(lambda)?;
        Ok(self.boundary_form(|e| 1.0 / ((e + mu) * (e + lambda))))
    }

    fn check_state(&self, u: &Vector) -> Result<()> {
        if u.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            })
        }
    }

    fn check_boundary(&self, xi: &Vector) -> Result<()> {
        if xi.len() == self.boundary_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.boundary_dim(),
                found: xi.len(),
            })
        }
    }

    fn check_level(&self, lambda: f64) -> Result<()> {
        if lambda > self.base_shift && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidShift {
                lambda,
                bound: self.base_shift,
            })
        }
    }

    /// Solves `η ∈ Θ(ξ) + M°_λ ξ` by forward–backward splitting.
    pub fn solve_boundary_inclusion(
        &self,
        theta: &MonotoneRelation,
        lambda: f64,
        eta: &Vector,
    ) -> Result<InclusionSolution> {
        self.check_level(lambda)?;
        self.check_boundary(eta)?;
        let m = self.weyl_matrix(lambda)?;
        solve_inclusion(&m, theta, eta, None, &self.solver)
    }

    /// `R^Θ_λ(u)` with its decomposition.
    pub fn resolvent_parts(
        &self,
        theta: &MonotoneRelation,
        lambda: f64,
        u: &Vector,
    ) -> Result<ResolventParts> {
        self.check_level(lambda)?;
        self.check_state(u)?;
        let regular = self.generator.resolvent_apply(lambda, u)?;
        let eta = &self.trace * &regular;
        let sol = self.solve_boundary_inclusion(theta, lambda, &eta)?;
        let value = &regular + self.charge_apply(lambda, &sol.xi)?;
        Ok(ResolventParts {
            value,
            regular,
            charge: sol.xi,
            boundary_value: sol.xi_tilde,
            iterations: sol.iterations,
            error_bound: sol.error_bound,
        })
    }

    /// `R^Θ_λ(u) = R°_λ u + G_λ (M^Θ_λ)^{-1}(G_λᵀu)`.
    pub fn resolvent(&self, theta: &MonotoneRelation, lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(self.resolvent_parts(theta, lambda, u)?.value)
    }

    /// Splits a resolvent output as `u° + G°ξ`, with
    /// `u° = R°_λ f + (G_λ − G°)ξ`.
    pub fn base_decomposition(&self, parts: &ResolventParts, lambda: f64) -> Result<(Vector, Vector)> {
        let shift = self.charge_apply(lambda, &parts.charge)? - &self.base_charge * &parts.charge;
        Ok((&parts.regular + shift, parts.charge.clone()))
    }

    /// Resolvent at `λ = λ°`, `R° + G°Θ^{-1}G°ᵀ`, for relations with a
    /// single-valued analytic inverse.
    pub fn base_resolvent(&self, theta: &MonotoneRelation, u: &Vector) -> Result<Vector> {
        self.check_state(u)?;
        let regular = self.generator.resolvent_apply(self.base_shift, u)?;
        let xi = theta.inverse_apply(&(&self.trace * &regular))?;
        Ok(regular + &self.base_charge * xi)
    }

    /// Graph point with charge `ξ` and `τu° = ξ̃`, where `(ξ, ξ̃) ∈ Θ`.
    /// `u°` is the minimum-norm solution plus the projection of `kernel`
    /// onto `ker τ`.
    pub fn graph_point(
        &self,
        theta: &MonotoneRelation,
        pair: (&Vector, &Vector),
        kernel: Option<&Vector>,
    ) -> Result<GraphPoint> {
        let (xi, xi_tilde) = pair;
        self.check_boundary(xi)?;
        self.check_boundary(xi_tilde)?;
        let residual = theta.inclusion_residual(xi, xi_tilde)?;
        if !(residual <= PAIR_TOLERANCE) {
            return Err(Error::InconsistentPair { residual });
        }
        let mut regular = &self.trace_pinv * xi_tilde;
        if let Some(k) = kernel {
            self.check_state(k)?;
            regular += k - &self.trace_pinv * (&self.trace * k);
        }
        let charged = &self.base_charge * xi;
        let state = &regular + &charged;
        let action = self.generator.matrix() * &regular - charged * self.base_shift;
        Ok(GraphPoint {
            regular,
            charge: xi.clone(),
            state,
            action,
        })
    }

    /// `R_λ(w + λu)` for a graph point, plus the action recovered at level `λ`.
    pub fn round_trip(&self, theta: &MonotoneRelation, p: &GraphPoint, lambda: f64) -> Result<RoundTrip> {
        let f = &p.action + &p.state * lambda;
        let parts = self.resolvent_parts(theta, lambda, &f)?;
        let charged = self.charge_apply(lambda, &parts.charge)?;
        let action = self.generator.matrix() * &parts.regular - charged * lambda;
        Ok(RoundTrip {
            state: parts.value,
            action,
            charge: parts.charge,
        })
    }

    /// `Φ = ½‖(A° + λ°)^{1/2}u°‖² + φ(ξ)`; `+∞` when `ξ ∉ 𝒟(φ)`.
    pub fn energy(&self, phi: &ConvexFunction, regular: &Vector, charge: &Vector) -> Result<f64> {
        let value = phi.value(charge);
        if !value.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(self.generator.half_power_energy(self.base_shift, regular)? + value)
    }

    /// Energy of a graph point.
    pub fn point_energy(&self, phi: &ConvexFunction, p: &GraphPoint) -> Result<f64> {
        self.energy(phi, &p.regular, &p.charge)
    }

    /// `⟨w + λ°u, u − v⟩ − (Φ(p) − Φ(q))` for graph points `p = (u, w)` and
    /// `q = (v, ·)`; nonnegative when `Θ = ∂φ`.
    pub fn subpotential_gap(&self, phi: &ConvexFunction, p: &GraphPoint, q: &GraphPoint) -> Result<f64> {
        let lhs = (&p.action + &p.state * self.base_shift).dot(&(&p.state - &q.state));
        Ok(lhs - (self.point_energy(phi, p)? - self.point_energy(phi, q)?))
    }

    /// Rest point of the flow when `A° > 0` and `λ° < 0`: the state
    /// `u_∞ = (λ°A°^{-1} + 1)G°ξ`, where `ξ` solves `0 ∈ Θ(ξ) + M°_0 ξ`.
    pub fn equilibrium(&self, theta: &MonotoneRelation) -> Result<Equilibrium> {
        let omega = self.generator.lower_bound();
        if !(omega < 0.0) || !(self.base_shift < 0.0) {
            return Err(Error::UnsupportedConfiguration(format!(
                "equilibrium needs ω < 0 and λ° ∈ (ω, 0); got ω = {omega}, λ° = {}",
                self.base_shift
            )));
        }
        let zero = Vector::zeros(self.boundary_dim());
        let sol = self.solve_boundary_inclusion(theta, 0.0, &zero)?;
        let charged = &self.base_charge * &sol.xi;
        let inverse = self.generator.resolvent_apply(0.0, &charged)?;
        let state = charged + inverse * self.base_shift;
        Ok(Equilibrium {
            state,
            charge: sol.xi,
        })
    }

    /// Checks the algebraic identities of the construction on seeded samples.
    pub fn verify_identities(
        &self,
        theta: &MonotoneRelation,
        grid: &[f64],
        samples: usize,
        seed: u64,
        tol: &IdentityTolerances,
    ) -> Result<IdentityReport> {
        for &l in grid {
            self.check_level(l)?;
        }
        let omega = self.generator.lower_bound();
        let l0 = self.base_shift;
        let per_level: Vec<Result<LevelStats>> = grid
            .par_iter()
            .enumerate()
            .map(|(idx, &lambda)| {
                let mut r = rng::seeded(seed.wrapping_add(idx as u64));
                let mut stats = LevelStats::default();
                let m = self.weyl_matrix_direct(lambda)?;
                stats.symmetry = (&m - m.transpose()).amax();
                for &mu in grid {
                    let lhs = &m - self.weyl_matrix_direct(mu)?;
                    let rhs = self.charge_gram(mu, lambda)? * (lambda - mu);
                    stats.weyl = stats.weyl.max((lhs - rhs).amax());
                }
                let bound = self.frame_constant.powi(2) * (lambda - l0) * (l0 - omega) / (lambda - omega);
                let mw = self.weyl_matrix(lambda)?;
                for _ in 0..samples {
                    let xi = rng::uniform_vector(&mut r, self.boundary_dim(), 1.0);
                    let excess = (xi.dot(&(&mw * &xi)) - bound * xi.norm_squared()) / xi.norm_squared();
                    stats.coercivity = stats.coercivity.min(excess);
                }
                for _ in 0..samples {
                    let u = rng::uniform_vector(&mut r, self.dim(), 1.0);
                    let v = rng::uniform_vector(&mut r, self.dim(), 1.0);
                    let ru = self.resolvent(theta, lambda, &u)?;
                    let rv = self.resolvent(theta, lambda, &v)?;
                    let diff = &u - &v;
                    let rdiff = &ru - &rv;
                    stats.monotonicity = stats
                        .monotonicity
                        .min(rdiff.dot(&diff) / diff.norm_squared());
                    stats.lipschitz = stats
                        .lipschitz
                        .max((lambda - l0) * rdiff.norm() / diff.norm());
                    for &mu in grid {
                        let inner = &u - &ru * (lambda - mu);
                        let composed = self.resolvent(theta, mu, &inner)?;
                        stats.identity = stats.identity.max((&ru - composed).norm());
                    }
                }
                Ok(stats)
            })
            .collect();
        let mut total = LevelStats::default();
        for stats in per_level {
            total.merge(&stats?);
        }
        let checks = vec![
            Check::at_most("resolvent_identity", total.identity, tol.resolvent_identity),
            Check::at_most("weyl_identity", total.weyl, tol.weyl_identity),
            Check::at_most("weyl_symmetry", total.symmetry, tol.symmetry),
            Check::at_least("monotonicity", total.monotonicity, -tol.monotonicity),
            Check::at_most("lipschitz", total.lipschitz, 1.0 + tol.lipschitz),
            Check::at_least("coercivity", total.coercivity, -tol.coercivity),
        ];
        let pass = checks.iter().all(|c| c.pass);
        Ok(IdentityReport {
            seed,
            lambda_grid: grid.to_vec(),
            samples,
            resolvent_identity: total.identity,
            weyl_identity: total.weyl,
            symmetry: total.symmetry,
            monotonicity: total.monotonicity,
            lipschitz: total.lipschitz,
            coercivity: total.coercivity,
            checks,
            pass,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: Vector,
    pub charge: Vector,
}

#[derive(Debug, Clone, Copy)]
struct LevelStats {
    identity: f64,
    weyl: f64,
    symmetry: f64,
    monotonicity: f64,
    lipschitz: f64,
    coercivity: f64,
}

impl Default for LevelStats {
    fn default() -> Self {
        LevelStats {
            identity: 0.0,
            weyl: 0.0,
            symmetry: 0.0,
            monotonicity: f64::INFINITY,
            lipschitz: 0.0,
            coercivity: f64::INFINITY,
        }
    }
}

impl LevelStats {
    fn merge(&mut self, other: &LevelStats) {
        self.identity = self.identity.max(other.identity);
        self.weyl = self.weyl.max(other.weyl);
        self.symmetry = self.symmetry.max(other.symmetry);
        self.monotonicity = self.monotonicity.min(other.monotonicity);
        self.lipschitz = self.lipschitz.max(other.lipschitz);
        self.coercivity = self.coercivity.min(other.coercivity);
    }
}
