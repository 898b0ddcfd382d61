//! Maximal monotone relations on the boundary space and their resolvents.
//!
//! Every relation is accessed through its resolvent `J_c = (I + cΘ)^{-1}`.
//! Scalar graphs have closed-form resolvents; vector subdifferentials go
//! through the prox of a [`ConvexFunction`]. Compositions that have no exact
//! resolvent are not representable, so `resolve` never approximates.

use serde::{Deserialize, Serialize};

use crate::hilbert::min_eigenvalue;
use crate::rng;
use crate::{Error, Matrix, Result, Vector};

/// Maximal monotone graph in ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarGraph {
    /// `s ↦ slope·s`.
    Linear { slope: f64 },
    /// `∂|·|`.
    Abs,
    /// `s ↦ |s|^{p-1} sign s`, `p > 1`.
    Power { p: f64 },
    /// `∂I_[lower, upper]`.
    Box { lower: f64, upper: f64 },
    /// `∂j` with `j(s) = b·s²` for `s > 0` and `0` otherwise.
    Relu { b: f64 },
    /// `∂I_{0}`: vertical line at the origin.
    Zero,
}

impl ScalarGraph {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::UnsupportedRelation(msg));
        match *self {
            ScalarGraph::Linear { slope } if !slope.is_finite() => {
                bad(format!("linear slope must be finite, got {slope}"))
            }
            ScalarGraph::Power { p } if !(p > 1.0) || !p.is_finite() => {
                bad(format!("power graph needs p > 1, got {p}"))
            }
            ScalarGraph::Box { lower, upper } if !(lower <= upper) => {
                bad(format!("box needs lower <= upper, got [{lower}, {upper}]"))
            }
            ScalarGraph::Relu { b } if !(b > 0.0) || !b.is_finite() => {
                bad(format!("relu-type graph needs b > 0, got {b}"))
            }
            _ => Ok(()),
        }
    }

    /// `γ` with `graph + γ` monotone. Only linear graphs with negative slope
    /// need a positive correction.
    pub fn type_constant(&self) -> f64 {
        match *self {
            ScalarGraph::Linear { slope } => -slope,
            _ => 0.0,
        }
    }

    /// The unique `ξ` with `x ∈ ξ + c·graph(ξ)`.
    pub fn resolve(&self, c: f64, x: f64) -> Result<f64> {
        Ok(match *self {
            ScalarGraph::Linear { slope } => {
                let denom = 1.0 + c * slope;
                if denom <= 0.0 {
                    return Err(Error::UnsupportedRelation(format!(
                        "step {c} too large for linear slope {slope}"
                    )));
                }
                x / denom
            }
            ScalarGraph::Abs => x.signum() * (x.abs() - c).max(0.0),
            ScalarGraph::Power { p } => power_resolve(p, c, x)?,
            ScalarGraph::Box { lower, upper } => x.clamp(lower, upper),
            ScalarGraph::Relu { b } => {
                if x > 0.0 {
                    x / (1.0 + 2.0 * b * c)
                } else {
                    x
                }
            }
            ScalarGraph::Zero => 0.0,
        })
    }

    /// Convex potential `j` with `∂j = graph`; `+∞` outside the domain.
    pub fn potential(&self, s: f64) -> f64 {
        match *self {
            ScalarGraph::Linear { slope } => 0.5 * slope * s * s,
            ScalarGraph::Abs => s.abs(),
            ScalarGraph::Power { p } => s.abs().powf(p) / p,
            ScalarGraph::Box { lower, upper } => {
                if (lower..=upper).contains(&s) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ScalarGraph::Relu { b } => {
                if s > 0.0 {
                    b * s * s
                } else {
                    0.0
                }
            }
            ScalarGraph::Zero => {
                if s == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Inverse graph evaluated at `t`, when it is single-valued.
    pub fn inverse(&self, t: f64) -> Result<f64> {
        match *self {
            ScalarGraph::Linear { slope } if slope != 0.0 => Ok(t / slope),
            ScalarGraph::Power { p } => Ok(t.signum() * t.abs().powf(1.0 / (p - 1.0))),
            ScalarGraph::Zero => Ok(0.0),
            _ => Err(Error::UnsupportedRelation(format!(
                "inverse of {self:?} is not single-valued"
            ))),
        }
    }
}

/// Solves `s + c·s^{p-1} = |x|` for `s ≥ 0` and restores the sign.
fn power_resolve(p: f64, c: f64, x: f64) -> Result<f64> {
    let target = x.abs();
    if target == 0.0 {
        return Ok(0.0);
    }
    if p == 2.0 {
        return Ok(x / (1.0 + c));
    }
    if p == 3.0 {
        let s = 2.0 * target / (1.0 + (1.0 + 4.0 * c * target).sqrt());
        return Ok(x.signum() * s);
    }
    let f = |s: f64| s + c * s.powf(p - 1.0) - target;
    let (mut lo, mut hi) = (0.0_f64, target.min((target / c).powf(1.0 / (p - 1.0))));
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fs = f(s);
        if fs == 0.0 {
            return Ok(x.signum() * s);
        }
        if fs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let slope = 1.0 + c * (p - 1.0) * s.powf(p - 2.0);
        let newton = s - fs / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 4.0 * f64::EPSILON * target {
            return Ok(x.signum() * next);
        }
        s = next;
    }
    Err(Error::Tolerance {
        iterations: 200,
        residual: f(s).abs(),
    })
}

/// Proper convex function on the boundary space, with an exact prox.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexFunction {
    /// `½ ξᵀQξ` with `Q` symmetric positive semi-definite.
    Quadratic { matrix: Matrix },
    /// `Σ_i j_i(ξ_i)` with the scalar potentials of each graph.
    Separable { graphs: Vec<ScalarGraph> },
    /// `weight·|ξ|`.
    Norm { weight: f64 },
    /// Moreau envelope of `base` with parameter `c`.
    Moreau { base: Box<ConvexFunction>, c: f64 },
}

impl ConvexFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexFunction::Quadratic { matrix } => {
                if !matrix.is_square() {
                    return Err(Error::UnsupportedRelation("quadratic form must be square".into()));
                }
                if (matrix - matrix.transpose()).amax() > 1e-10 * matrix.amax().max(1.0) {
                    return Err(Error::NotSymmetric {
                        asymmetry: (matrix - matrix.transpose()).amax(),
                    });
                }
                if matrix.nrows() > 0 && min_eigenvalue(matrix) < -1e-12 * matrix.amax() {
                    return Err(Error::UnsupportedRelation(
                        "quadratic form is not positive semi-definite".into(),
                    ));
                }
                Ok(())
            }
            ConvexFunction::Separable { graphs } => {
                for g in graphs {
                    g.validate()?;
                    if g.type_constant() > 0.0 {
                        return Err(Error::UnsupportedRelation(format!(
                            "{g:?} has no convex potential"
                        )));
                    }
                }
                Ok(())
            }
            ConvexFunction::Norm { weight } => {
                if *weight >= 0.0 && weight.is_finite() {
                    Ok(())
                } else {
                    Err(Error::UnsupportedRelation(format!("norm weight {weight}")))
                }
            }
            ConvexFunction::Moreau { base, c } => {
                if !(*c > 0.0) {
                    return Err(Error::UnsupportedRelation(format!("Moreau parameter {c}")));
                }
                base.validate()
            }
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexFunction::Quadratic { matrix } => Some(matrix.nrows()),
            ConvexFunction::Separable { graphs } => Some(graphs.len()),
            ConvexFunction::Norm { .. } => None,
            ConvexFunction::Moreau { base, .. } => base.dim(),
        }
    }

    /// `φ(x)`, possibly `+∞`.
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            ConvexFunction::Quadratic { matrix } => 0.5 * x.dot(&(matrix * x)),
            ConvexFunction::Separable { graphs } => {
                graphs.iter().zip(x.iter()).map(|(g, &s)| g.potential(s)).sum()
            }
            ConvexFunction::Norm { weight } => weight * x.norm(),
            ConvexFunction::Moreau { base, c } => {
                moreau_envelope(base, *c, x).unwrap_or(f64::INFINITY)
            }
        }
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        self.value(x).is_finite()
    }

    /// `argmin_ζ φ(ζ) + |x − ζ|²/(2c)`.
    pub fn prox(&self, c: f64, x: &Vector) -> Result<Vector> {
        check_step(c)?;
        match self {
            ConvexFunction::Quadratic { matrix } => {
                check_len(matrix.nrows(), x.len())?;
                let system = Matrix::identity(x.len(), x.len()) + matrix * c;
                system
                    .cholesky()
                    .map(|ch| ch.solve(x))
                    .ok_or_else(|| Error::Internal("I + cQ is not positive definite".into()))
            }
            ConvexFunction::Separable { graphs } => {
                check_len(graphs.len(), x.len())?;
                let mut out = Vector::zeros(x.len());
                for (i, g) in graphs.iter().enumerate() {
                    out[i] = g.resolve(c, x[i])?;
                }
                Ok(out)
            }
            ConvexFunction::Norm { weight } => {
                let n = x.norm();
                if n <= c * weight {
                    Ok(Vector::zeros(x.len()))
                } else {
                    Ok(x * (1.0 - c * weight / n))
                }
            }
            ConvexFunction::Moreau { base, c: envelope } => {
                let inner = base.prox(envelope + c, x)?;
                Ok(x + (inner - x) * (c / (envelope + c)))
            }
        }
    }
}

/// `inf_ζ |x − ζ|²/(2c) + φ(ζ)`, evaluated at the prox point.
pub fn moreau_envelope(phi: &ConvexFunction, c: f64, x: &Vector) -> Result<f64> {
    let p = phi.prox(c, x)?;
    let value = phi.value(&p);
    if !value.is_finite() {
        return Err(Error::Internal(
            "convex function is infinite at its own prox point".into(),
        ));
    }
    Ok((x - &p).norm_squared() / (2.0 * c) + value)
}

/// Maximal monotone relation `Θ ⊂ 𝔥 × 𝔥`, possibly of a type `γ` (meaning
/// `Θ + γ` is monotone).
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneRelation {
    /// Graph of a linear map `B`.
    Linear { matrix: Matrix },
    /// `∂φ`.
    Subdifferential { function: ConvexFunction },
    /// One scalar graph per coordinate.
    Componentwise { graphs: Vec<ScalarGraph> },
    /// `{(ξ + point, ξ̃ + value) : (ξ, ξ̃) ∈ base}`.
    Shifted {
        base: Box<MonotoneRelation>,
        point: Vector,
        value: Vector,
    },
    /// Yosida approximation `(I − J_c)/c` of `base`.
    Yosida { base: Box<MonotoneRelation>, c: f64 },
    /// `base + shift·I`.
    Perturbed { base: Box<MonotoneRelation>, shift: f64 },
}

impl MonotoneRelation {
    pub fn linear(matrix: Matrix) -> Result<Self> {
        let r = MonotoneRelation::Linear { matrix };
        r.validate()?;
        Ok(r)
    }

    pub fn componentwise(graphs: Vec<ScalarGraph>) -> Result<Self> {
        let r = MonotoneRelation::Componentwise { graphs };
        r.validate()?;
        Ok(r)
    }

    pub fn subdifferential(function: ConvexFunction) -> Result<Self> {
        let r = MonotoneRelation::Subdifferential { function };
        r.validate()?;
        Ok(r)
    }

    pub fn shifted(base: MonotoneRelation, point: Vector, value: Vector) -> Result<Self> {
        let r = MonotoneRelation::Shifted {
            base: Box::new(base),
            point,
            value,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn yosida(base: MonotoneRelation, c: f64) -> Result<Self> {
        let r = MonotoneRelation::Yosida {
            base: Box::new(base),
            c,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn perturbed(base: MonotoneRelation, shift: f64) -> Result<Self> {
        let r = MonotoneRelation::Perturbed {
            base: Box::new(base),
            shift,
        };
        r.validate()?;
        Ok(r)
    }

    /// `∂I_{0}` on `dim` coordinates, the relation that forces `ξ = 0`.
    pub fn zero(dim: usize) -> Self {
        MonotoneRelation::Componentwise {
            graphs: vec![ScalarGraph::Zero; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MonotoneRelation::Linear { matrix } => {
                if !matrix.is_square() || matrix.nrows() == 0 {
                    return Err(Error::UnsupportedRelation(
                        "linear relation needs a non-empty square matrix".into(),
                    ));
                }
                Ok(())
            }
            MonotoneRelation::Subdifferential { function } => function.validate(),
            MonotoneRelation::Componentwise { graphs } => {
                graphs.iter().try_for_each(ScalarGraph::validate)
            }
            MonotoneRelation::Shifted { base, point, value } => {
                base.validate()?;
                if point.len() != value.len() {
                    return Err(Error::DimensionMismatch {
                        expected: point.len(),
                        found: value.len(),
                    });
                }
                if let Some(d) = base.dim() {
                    check_len(d, point.len())?;
                }
                Ok(())
            }
            MonotoneRelation::Yosida { base, c } => {
                base.validate()?;
                if !(*c > 0.0) {
                    return Err(Error::UnsupportedRelation(format!(
                        "Yosida parameter must be positive, got {c}"
                    )));
                }
                if base.type_constant() > 0.0 {
                    return Err(Error::UnsupportedRelation(
                        "Yosida approximation needs a monotone base".into(),
                    ));
                }
                Ok(())
            }
            MonotoneRelation::Perturbed { base, shift } => {
                if !shift.is_finite() {
                    return Err(Error::UnsupportedRelation("non-finite shift".into()));
                }
                base.validate()
            }
        }
    }

    /// Boundary dimension, when the relation fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            MonotoneRelation::Linear { matrix } => Some(matrix.nrows()),
            MonotoneRelation::Subdifferential { function } => function.dim(),
            MonotoneRelation::Componentwise { graphs } => Some(graphs.len()),
            MonotoneRelation::Shifted { point, .. } => Some(point.len()),
            MonotoneRelation::Yosida { base, .. } | MonotoneRelation::Perturbed { base, .. } => {
                base.dim()
            }
        }
    }

    /// A constant `γ` such that `Θ + γ` is monotone. Sharp for linear
    /// relations; negative values mean strong monotonicity.
    pub fn type_constant(&self) -> f64 {
        match self {
            MonotoneRelation::Linear { matrix } => -min_eigenvalue(matrix),
            MonotoneRelation::Subdifferential { .. } => 0.0,
            MonotoneRelation::Componentwise { graphs } if graphs.is_empty() => 0.0,
            MonotoneRelation::Componentwise { graphs } => graphs
                .iter()
                .map(ScalarGraph::type_constant)
                .fold(f64::NEG_INFINITY, f64::max),
            MonotoneRelation::Shifted { base, .. } => base.type_constant(),
            MonotoneRelation::Yosida { .. } => 0.0,
            MonotoneRelation::Perturbed { base, shift } => base.type_constant() - shift,
        }
    }

    /// Whether `Θ` is the subdifferential of a convex function, up to the
    /// type shift.
    pub fn is_potential(&self) -> bool {
        match self {
            MonotoneRelation::Linear { matrix } => {
                let scale = matrix.amax().max(1.0);
                (matrix - matrix.transpose()).amax() <= 1e-12 * scale
            }
            MonotoneRelation::Subdifferential { .. } | MonotoneRelation::Componentwise { .. } => true,
            MonotoneRelation::Shifted { base, .. }
            | MonotoneRelation::Yosida { base, .. }
            | MonotoneRelation::Perturbed { base, .. } => base.is_potential(),
        }
    }

    /// `J_c(x) = (I + cΘ)^{-1} x`.
    pub fn resolve(&self, c: f64, x: &Vector) -> Result<Vector> {
        check_step(c)?;
        if let Some(d) = self.dim() {
            check_len(d, x.len())?;
        }
        match self {
            MonotoneRelation::Linear { matrix } => {
                let system = Matrix::identity(x.len(), x.len()) + matrix * c;
                system.lu().solve(x).ok_or_else(|| {
                    Error::UnsupportedRelation(format!("I + {c}·B is singular"))
                })
            }
            MonotoneRelation::Subdifferential { function } => function.prox(c, x),
            MonotoneRelation::Componentwise { graphs } => {
                let mut out = Vector::zeros(x.len());
                for (i, g) in graphs.iter().enumerate() {
                    out[i] = g.resolve(c, x[i])?;
                }
                Ok(out)
            }
            MonotoneRelation::Shifted { base, point, value } => {
                Ok(base.resolve(c, &(x - point - value * c))? + point)
            }
            MonotoneRelation::Yosida { base, c: inner } => {
                let j = base.resolve(inner + c, x)?;
                Ok(x * (inner / (inner + c)) + j * (c / (inner + c)))
            }
            MonotoneRelation::Perturbed { base, shift } => {
                let scale = 1.0 + c * shift;
                if scale <= 0.0 {
                    return Err(Error::UnsupportedRelation(format!(
                        "step {c} too large for shift {shift}"
                    )));
                }
                base.resolve(c / scale, &(x / scale))
            }
        }
    }

    /// Yosida approximation `(x − J_c(x))/c`.
    pub fn yosida_apply(&self, c: f64, x: &Vector) -> Result<Vector> {
        Ok((x - self.resolve(c, x)?) / c)
    }

    /// Step size that keeps `1 − cγ` safely positive.
    pub fn safe_step(&self) -> f64 {
        let gamma = self.type_constant();
        if gamma < 0.5 {
            1.0
        } else {
            0.5 / gamma
        }
    }

    /// Distance-type residual of `(ξ, ξ̃) ∈ Θ`: `|J_c(ξ + cξ̃) − ξ|`, which is
    /// zero exactly on the graph.
    pub fn inclusion_residual(&self, xi: &Vector, xi_tilde: &Vector) -> Result<f64> {
        let c = self.safe_step();
        Ok((self.resolve(c, &(xi + xi_tilde * c))? - xi).norm())
    }

    /// `Θ^{-1}(t)` when the inverse relation is single-valued.
    pub fn inverse_apply(&self, t: &Vector) -> Result<Vector> {
        match self {
            MonotoneRelation::Linear { matrix } => matrix
                .clone()
                .lu()
                .solve(t)
                .ok_or_else(|| Error::UnsupportedRelation("linear relation is singular".into())),
            MonotoneRelation::Componentwise { graphs } => {
                check_len(graphs.len(), t.len())?;
                let mut out = Vector::zeros(t.len());
                for (i, g) in graphs.iter().enumerate() {
                    out[i] = g.inverse(t[i])?;
                }
                Ok(out)
            }
            MonotoneRelation::Subdifferential {
                function: ConvexFunction::Quadratic { matrix },
            } => matrix
                .clone()
                .cholesky()
                .map(|ch| ch.solve(t))
                .ok_or_else(|| Error::UnsupportedRelation("quadratic form is singular".into())),
            MonotoneRelation::Shifted { base, point, value } => {
                Ok(base.inverse_apply(&(t - value))? + point)
            }
            _ => Err(Error::UnsupportedRelation(
                "no analytic inverse for this relation".into(),
            )),
        }
    }

    /// `n` pairs in the graph: `ξ = J_c(x)`, `ξ̃ = (x − ξ)/c` over seeded
    /// uniform `x` in the box.
    pub fn sample_graph(
        &self,
        n: usize,
        bounds: &SampleBox,
        seed: u64,
    ) -> Result<Vec<(Vector, Vector)>> {
        let mut r = rng::seeded(seed);
        let c = self.safe_step();
        (0..n)
            .map(|_| {
                let x = rng::box_vector(&mut r, &bounds.lower, &bounds.upper);
                let xi = self.resolve(c, &x)?;
                let xi_tilde = (x - &xi) / c;
                Ok((xi, xi_tilde))
            })
            .collect()
    }
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn cube(dim: usize, radius: f64) -> Self {
        SampleBox {
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }
}

fn check_step(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::UnsupportedRelation(format!(
            "resolvent parameter must be positive, got {c}"
        )))
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn catalog() -> Vec<ScalarGraph> {
        vec![
            ScalarGraph::Linear { slope: 0.7 },
            ScalarGraph::Abs,
            ScalarGraph::Power { p: 1.5 },
            ScalarGraph::Power { p: 3.0 },
            ScalarGraph::Power { p: 4.5 },
            ScalarGraph::Box {
                lower: -0.5,
                upper: 0.25,
            },
            ScalarGraph::Relu { b: 2.0 },
            ScalarGraph::Zero,
        ]
    }

    /// Brute-force minimizer of `j(ζ) + (x − ζ)²/(2c)` on a fine grid.
    fn grid_prox(g: &ScalarGraph, c: f64, x: f64) -> f64 {
        let n = 400_001;
        let (lo, hi) = (-4.0, 4.0);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..n {
            let z = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let val = g.potential(z) + (x - z) * (x - z) / (2.0 * c);
            if val < best.0 {
                best = (val, z);
            }
        }
        best.1
    }

    #[test]
    fn scalar_resolvents_match_grid_search() {
        for g in catalog() {
            if matches!(g, ScalarGraph::Zero) {
                continue;
            }
            for &c in &[0.3, 1.0, 2.5] {
                for &x in &[-2.0, -0.4, 0.1, 0.8, 2.0] {
                    let exact = g.resolve(c, x).unwrap();
                    let brute = grid_prox(&g, c, x);
                    assert!((exact - brute).abs() < 5e-5, "{g:?} c={c} x={x}: {exact} vs {brute}");
                }
            }
        }
    }

    #[test]
    fn abs_resolvent_examples() {
        let abs = MonotoneRelation::componentwise(vec![ScalarGraph::Abs]).unwrap();
        assert_eq!(abs.resolve(1.0, &v(&[0.5])).unwrap()[0], 0.0);
        assert_eq!(abs.resolve(1.0, &v(&[2.0])).unwrap()[0], 1.0);
        assert_eq!(abs.yosida_apply(1.0, &v(&[2.0])).unwrap()[0], 1.0);
    }

    #[test]
    fn quadratic_and_zero_examples() {
        let quad = MonotoneRelation::subdifferential(ConvexFunction::Quadratic {
            matrix: Matrix::identity(1, 1),
        })
        .unwrap();
        assert!((quad.resolve(1.0, &v(&[2.0])).unwrap()[0] - 1.0).abs() < 1e-15);
        let zero = MonotoneRelation::zero(3);
        for c in [0.1, 1.0, 10.0] {
            assert_eq!(zero.resolve(c, &v(&[1.0, -2.0, 3.0])).unwrap(), Vector::zeros(3));
        }
    }

    #[test]
    fn yosida_examples() {
        let abs = MonotoneRelation::componentwise(vec![ScalarGraph::Abs, ScalarGraph::Abs]).unwrap();
        assert_eq!(abs.yosida_apply(0.7, &Vector::zeros(2)).unwrap(), Vector::zeros(2));
        let id = MonotoneRelation::linear(Matrix::identity(2, 2)).unwrap();
        let y = id.yosida_apply(1.0, &v(&[2.0, 0.0])).unwrap();
        assert!((y - v(&[1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn moreau_examples() {
        let abs = ConvexFunction::Separable {
            graphs: vec![ScalarGraph::Abs],
        };
        assert_eq!(moreau_envelope(&abs, 1.0, &v(&[0.0])).unwrap(), 0.0);
        assert!((moreau_envelope(&abs, 1.0, &v(&[2.0])).unwrap() - 1.5).abs() < 1e-15);
        // Grid search confirmation of the Huber value.
        let brute = (0..=40_000)
            .map(|k| -4.0 + 8.0 * k as f64 / 40_000.0)
            .map(|z: f64| z.abs() + (2.0 - z) * (2.0 - z) / 2.0)
            .fold(f64::INFINITY, f64::min);
        assert!((brute - 1.5).abs() < 1e-6);
        let quad = ConvexFunction::Quadratic {
            matrix: Matrix::identity(1, 1),
        };
        assert!((moreau_envelope(&quad, 1.0, &v(&[2.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moreau_of_moreau_prox_matches_envelope_gradient() {
        // The gradient of φ_c is the Yosida approximation of ∂φ; check it by
        // central differences.
        let phi = ConvexFunction::Separable {
            graphs: vec![ScalarGraph::Abs, ScalarGraph::Relu { b: 1.5 }],
        };
        let theta = MonotoneRelation::subdifferential(phi.clone()).unwrap();
        let c = 0.4;
        let x = v(&[0.9, -0.3]);
        let grad = theta.yosida_apply(c, &x).unwrap();
        for i in 0..2 {
            let mut e = Vector::zeros(2);
            e[i] = 1e-6;
            let fd = (moreau_envelope(&phi, c, &(&x + &e)).unwrap()
                - moreau_envelope(&phi, c, &(&x - &e)).unwrap())
                / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-7);
        }
        let envelope = ConvexFunction::Moreau {
            base: Box::new(phi.clone()),
            c,
        };
        assert!((envelope.value(&x) - moreau_envelope(&phi, c, &x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sample_graph_examples() {
        let abs = MonotoneRelation::componentwise(vec![ScalarGraph::Abs; 3]).unwrap();
        let pairs = abs.sample_graph(200, &SampleBox::cube(3, 3.0), 5).unwrap();
        for (xi, xt) in &pairs {
            for i in 0..3 {
                if xi[i] != 0.0 {
                    assert_eq!(xt[i], xi[i].signum());
                }
            }
        }
        let b = Matrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 0.5]);
        let lin = MonotoneRelation::linear(b.clone()).unwrap();
        for (xi, xt) in lin.sample_graph(50, &SampleBox::cube(2, 1.0), 9).unwrap() {
            assert!((xt - &b * xi).amax() < 1e-13);
        }
        let again = abs.sample_graph(200, &SampleBox::cube(3, 3.0), 5).unwrap();
        assert_eq!(pairs, again);
    }

    #[test]
    fn shifted_and_perturbed() {
        let base = MonotoneRelation::componentwise(vec![ScalarGraph::Abs, ScalarGraph::Relu { b: 1.0 }])
            .unwrap();
        let point = v(&[0.3, -0.2]);
        let value = v(&[1.0, 2.0]);
        let shifted = MonotoneRelation::shifted(base.clone(), point.clone(), value.clone()).unwrap();
        for (xi, xt) in base.sample_graph(50, &SampleBox::cube(2, 2.0), 1).unwrap() {
            let r = shifted.inclusion_residual(&(&xi + &point), &(&xt + &value)).unwrap();
            assert!(r < 1e-14);
        }
        let perturbed = MonotoneRelation::perturbed(base.clone(), -0.5).unwrap();
        assert_eq!(perturbed.type_constant(), 0.5);
        for (xi, xt) in perturbed.sample_graph(50, &SampleBox::cube(2, 2.0), 2).unwrap() {
            let r = base.inclusion_residual(&xi, &(&xt + &xi * 0.5)).unwrap();
            assert!(r < 1e-14);
            assert!(perturbed.inclusion_residual(&xi, &xt).unwrap() < 1e-14);
        }
        assert!(perturbed.resolve(2.5, &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn type_constants() {
        let b = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.25]);
        assert!((MonotoneRelation::linear(b).unwrap().type_constant() - 0.25).abs() < 1e-15);
        let c = MonotoneRelation::componentwise(vec![ScalarGraph::Linear { slope: 2.0 }]).unwrap();
        assert_eq!(c.type_constant(), -2.0);
        let mixed = MonotoneRelation::componentwise(vec![
            ScalarGraph::Linear { slope: 2.0 },
            ScalarGraph::Abs,
        ])
        .unwrap();
        assert_eq!(mixed.type_constant(), 0.0);
    }

    #[test]
    fn inverse_branches() {
        let g = MonotoneRelation::componentwise(vec![
            ScalarGraph::Linear { slope: 2.0 },
            ScalarGraph::Power { p: 3.0 },
            ScalarGraph::Zero,
        ])
        .unwrap();
        let t = v(&[1.0, -4.0, 7.0]);
        let inv = g.inverse_apply(&t).unwrap();
        assert!((inv - v(&[0.5, -2.0, 0.0])).amax() < 1e-14);
        let abs = MonotoneRelation::componentwise(vec![ScalarGraph::Abs]).unwrap();
        assert!(abs.inverse_apply(&v(&[0.5])).is_err());
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(MonotoneRelation::componentwise(vec![ScalarGraph::Power { p: 1.0 }]).is_err());
        assert!(MonotoneRelation::componentwise(vec![ScalarGraph::Box {
            lower: 1.0,
            upper: 0.0
        }])
        .is_err());
        assert!(MonotoneRelation::componentwise(vec![ScalarGraph::Relu { b: 0.0 }]).is_err());
        let abs = MonotoneRelation::componentwise(vec![ScalarGraph::Abs]).unwrap();
        assert!(MonotoneRelation::yosida(abs.clone(), 0.0).is_err());
        assert!(abs.resolve(-1.0, &v(&[1.0])).is_err());
        assert!(matches!(
            abs.resolve(1.0, &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn relation_strategy() -> impl Strategy<Value = MonotoneRelation> {
        let graph = prop_oneof![
            (0.0..3.0f64).prop_map(|slope| ScalarGraph::Linear { slope }),
            Just(ScalarGraph::Abs),
            (1.2..4.0f64).prop_map(|p| ScalarGraph::Power { p }),
            (-1.0..0.0f64, 0.0..1.0f64).prop_map(|(lower, upper)| ScalarGraph::Box { lower, upper }),
            (0.1..3.0f64).prop_map(|b| ScalarGraph::Relu { b }),
            Just(ScalarGraph::Zero),
        ];
        let componentwise = prop::collection::vec(graph, 3)
            .prop_map(|graphs| MonotoneRelation::Componentwise { graphs });
        let linear = prop::collection::vec(-1.0..1.0f64, 9).prop_map(|entries| {
            let m = Matrix::from_row_slice(3, 3, &entries);
            // Skew part plus a PSD part keeps the relation monotone.
            let skew = &m - m.transpose();
            let psd = m.transpose() * &m;
            MonotoneRelation::Linear { matrix: skew + psd }
        });
        let norm = (0.1..2.0f64).prop_map(|weight| MonotoneRelation::Subdifferential {
            function: ConvexFunction::Norm { weight },
        });
        let base = prop_oneof![componentwise, linear, norm];
        (base, 0.05..2.0f64, prop::bool::ANY).prop_map(|(b, c, wrap)| {
            if wrap {
                MonotoneRelation::Yosida { base: Box::new(b), c }
            } else {
                b
            }
        })
    }

    fn vec3() -> impl Strategy<Value = Vector> {
        prop::collection::vec(-3.0..3.0f64, 3).prop_map(Vector::from_vec)
    }

    proptest! {
        #[test]
        fn resolvent_is_firmly_nonexpansive(r in relation_strategy(), c in 0.05..5.0f64, x in vec3(), y in vec3()) {
            let jx = r.resolve(c, &x).unwrap();
            let jy = r.resolve(c, &y).unwrap();
            let d = &jx - &jy;
            prop_assert!(d.norm_squared() <= (&x - &y).dot(&d) + 1e-12);
        }

        #[test]
        fn sampled_pairs_are_monotone(r in relation_strategy(), seed in 0u64..1000) {
            let pairs = r.sample_graph(8, &SampleBox::cube(3, 3.0), seed).unwrap();
            for (a, ta) in &pairs {
                for (b, tb) in &pairs {
                    prop_assert!((ta - tb).dot(&(a - b)) >= -1e-12);
                }
                prop_assert!(r.inclusion_residual(a, ta).unwrap() < 1e-12);
            }
        }

        #[test]
        fn boundary_resolvent_identity(r in relation_strategy(), c in 0.2..5.0f64, frac in 0.05..0.95f64, x in vec3()) {
            let d = frac * c;
            let jc = r.resolve(c, &x).unwrap();
            let inner = &x * (d / c) + &jc * (1.0 - d / c);
            let composed = r.resolve(d, &inner).unwrap();
            prop_assert!((composed - jc).amax() <= 1e-9);
        }

        #[test]
        fn yosida_is_monotone_and_lipschitz(r in relation_strategy(), c in 0.05..3.0f64, x in vec3(), y in vec3()) {
            let yx = r.yosida_apply(c, &x).unwrap();
            let yy = r.yosida_apply(c, &y).unwrap();
            prop_assert!((&yx - &yy).dot(&(&x - &y)) >= -1e-12);
            prop_assert!((&yx - &yy).norm() <= (&x - &y).norm() / c + 1e-12);
        }

        #[test]
        fn moreau_envelope_properties(
            graphs in prop::collection::vec(prop_oneof![
                Just(ScalarGraph::Abs),
                (0.1..3.0f64).prop_map(|b| ScalarGraph::Relu { b }),
                (1.5..3.5f64).prop_map(|p| ScalarGraph::Power { p }),
                (-1.0..0.0f64, 0.0..1.0f64).prop_map(|(lower, upper)| ScalarGraph::Box { lower, upper }),
            ], 3),
            x in vec3(), y in vec3(),
        ) {
            let phi = ConvexFunction::Separable { graphs };
            let c = 0.5;
            let ex = moreau_envelope(&phi, c, &x).unwrap();
            let ey = moreau_envelope(&phi, c, &y).unwrap();
            let mid = moreau_envelope(&phi, c, &((&x + &y) * 0.5)).unwrap();
            prop_assert!(ex.is_finite() && ey.is_finite());
            prop_assert!(mid <= 0.5 * (ex + ey) + 1e-12);
            if phi.in_domain(&x) {
                prop_assert!(ex <= phi.value(&x) + 1e-12);
                // c ↓ 0 ladder: envelope increases towards φ(x).
                let mut prev = f64::NEG_INFINITY;
                for c in [1.0, 0.1, 0.01, 0.001] {
                    let e = moreau_envelope(&phi, c, &x).unwrap();
                    prop_assert!(e >= prev - 1e-12);
                    prev = e;
                }
                prop_assert!((prev - phi.value(&x)).abs() < 1e-2 * (1.0 + phi.value(&x).abs()));
            }
        }
    }
}
