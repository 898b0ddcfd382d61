//! Forward–backward solver for boundary inclusions `η ∈ Θ(ξ) + Mξ`.
//!
//! `M` is symmetric and, after moving the type constant of `Θ` into it,
//! positive definite. The iteration `ξ ← J_{cΘ}(ξ − c(Mξ − η))` is then a
//! strict contraction with factor `ρ = max|1 − c·spec(M)|`, and it stops once
//! the a-posteriori bound `ρ/(1−ρ)·|ξ_{k+1} − ξ_k|` on the distance to the
//! solution drops below the tolerance.

use serde::{Deserialize, Serialize};

use crate::hilbert::sorted_symmetric_eigen;
use crate::relations::MonotoneRelation;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Forward–backward step; `1/‖M‖` when unset.
    pub step: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            step: None,
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSolution {
    pub xi: Vector,
    /// Element of `Θ(ξ)` produced by the last backward step.
    pub xi_tilde: Vector,
    pub iterations: usize,
    /// Last fixed-point increment `|ξ_{k+1} − ξ_k|`.
    pub residual: f64,
    /// Certified bound on `|ξ − ξ*|`.
    pub error_bound: f64,
}

/// Solves `η ∈ Θ(ξ) + Mξ` starting from `start` (zero when `None`).
pub fn solve_inclusion(
    m: &Matrix,
    theta: &MonotoneRelation,
    eta: &Vector,
    start: Option<&Vector>,
    opts: &SolverOptions,
) -> Result<InclusionSolution> {
    let n = m.nrows();
    if eta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: eta.len(),
        });
    }
    if let Some(d) = theta.dim() {
        if d != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d,
            });
        }
    }
    let gamma = theta.type_constant();
    let gamma = if gamma.is_finite() { gamma } else { 0.0 };
    let corrected = m - Matrix::identity(n, n) * gamma;
    let (spectrum, _) = sorted_symmetric_eigen(&((&corrected + corrected.transpose()) * 0.5));
    let (low, high) = (spectrum[0], spectrum[n - 1]);
    if !(low > 0.0) {
        return Err(Error::UnsupportedConfiguration(format!(
            "boundary operator is not coercive after type correction \
             (smallest eigenvalue {low:.3e}, type constant {gamma})"
        )));
    }
    let symmetric = (&corrected - corrected.transpose()).amax() <= 1e-12 * high.max(1.0);
    // Constant momentum for potential problems, plain iteration otherwise.
    let accelerated = opts.step.is_none() && symmetric && theta.is_potential();
    let c = match opts.step {
        Some(c) => c,
        None if accelerated => 1.0 / high,
        None => 2.0 / (low + high),
    };
    let rho = (1.0 - c * low).abs().max((1.0 - c * high).abs());
    if !(c > 0.0) || rho >= 1.0 {
        return Err(Error::UnsupportedConfiguration(format!(
            "forward-backward step {c} does not contract (factor {rho})"
        )));
    }
    let scale = 1.0 + c * gamma;
    if scale <= 0.0 {
        return Err(Error::UnsupportedConfiguration(format!(
            "forward-backward step {c} incompatible with type constant {gamma}"
        )));
    }
    // Backward step on Θ + γ expressed through the resolvent of Θ.
    let inner_step = c / scale;
    let momentum = if accelerated {
        let q = (low / high).sqrt();
        (1.0 - q) / (1.0 + q)
    } else {
        0.0
    };

    let mut xi = start.cloned().unwrap_or_else(|| Vector::zeros(n));
    let mut previous = xi.clone();
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let y = &xi + (&xi - &previous) * momentum;
        let forward = &y - (&corrected * &y - eta) * c;
        let arg = forward / scale;
        let next = theta.resolve(inner_step, &arg)?;
        residual = (&next - &xi).norm();
        let xi_tilde = (&arg - &next) / inner_step;
        // xi_tilde + M·next − η lies in (Θ + M)(next) − η, which is
        // strongly monotone with modulus `low`.
        let error_bound = (&xi_tilde + m * &next - eta).norm() / low;
        previous = std::mem::replace(&mut xi, next);
        if error_bound <= opts.tolerance {
            return Ok(InclusionSolution {
                xi,
                xi_tilde,
                iterations: iteration,
                residual,
                error_bound,
            });
        }
    }
    Err(Error::Tolerance {
        iterations: opts.max_iterations,
        residual,
    })
}
