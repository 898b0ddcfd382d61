//! Implicit Euler evolution of the semigroup generated by `A_Θ`.
//!
//! One step is one resolvent call: `u' = R_{1/h}(u/h)`, or for the shifted
//! flow of `A_Θ + λ°`, `u' = R_{λ°+1/h}(u/h)`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extension::KreinExtension;
use crate::relations::{ConvexFunction, MonotoneRelation};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub h: f64,
    pub horizon: f64,
    /// Evolve `A_Θ + λ°` instead of `A_Θ`.
    pub shift: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            h: 0.01,
            horizon: 5.0,
            shift: false,
        }
    }
}

impl EvolveOptions {
    pub fn steps(&self) -> usize {
        (self.horizon / self.h - 1e-9).ceil().max(0.0) as usize
    }
}

/// Per-step record; entry `k` describes the transition into state `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `‖u_k − u_{k−1}‖ / h`.
    pub inc_norm: f64,
    /// `Φ` of the decomposition produced by the step, when tracked.
    pub energy: Option<f64>,
    /// Certified error bound of the inner boundary solve.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// One entry per transition, so `diagnostics.len() + 1 == states.len()`.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn energies(&self) -> Vec<f64> {
        self.diagnostics.iter().filter_map(|d| d.energy).collect()
    }

    /// CSV with header `t,u_0..u_{d-1},inc_norm[,energy]`; the first row
    /// leaves the diagnostic columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let with_energy = self.diagnostics.iter().any(|d| d.energy.is_some());
        let dim = self.states.first().map_or(0, |s| s.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|i| format!("u_{i}")));
        header.push("inc_norm".into());
        if with_energy {
            header.push("energy".into());
        }
        w.write_record(&header)?;
        for (k, (t, u)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![fmt(*t)];
            row.extend(u.iter().map(|x| fmt(*x)));
            let diag = k.checked_sub(1).map(|j| self.diagnostics[j]);
            row.push(diag.map_or(String::new(), |d| fmt(d.inc_norm)));
            if with_energy {
                row.push(diag.and_then(|d| d.energy).map_or(String::new(), fmt));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn level(ext: &KreinExtension, h: f64, shift: bool) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::StepSize {
            h,
            product: h * ext.base_shift(),
        });
    }
    let lambda = if shift { ext.base_shift() + 1.0 / h } else { 1.0 / h };
    if !shift && h * ext.base_shift() >= 1.0 {
        return Err(Error::StepSize {
            h,
            product: h * ext.base_shift(),
        });
    }
    Ok(lambda)
}

/// One implicit Euler step `u' = (A_Θ + 1/h)^{-1}(u/h)`.
pub fn step(ext: &KreinExtension, theta: &MonotoneRelation, h: f64, u: &Vector) -> Result<Vector> {
    let lambda = level(ext, h, false)?;
    ext.resolvent(theta, lambda, &(u / h))
}

/// Implicit Euler trajectory over `⌈T/h⌉` steps.
pub fn evolve(
    ext: &KreinExtension,
    theta: &MonotoneRelation,
    u0: &Vector,
    opts: &EvolveOptions,
    phi: Option<&ConvexFunction>,
) -> Result<Trajectory> {
    let h = opts.h;
    let lambda = level(ext, h, opts.shift)?;
    if u0.len() != ext.dim() {
        return Err(Error::DimensionMismatch {
            expected: ext.dim(),
            found: u0.len(),
        });
    }
    let n = opts.steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut diagnostics = Vec::with_capacity(n);
    times.push(0.0);
    states.push(u0.clone());
    let mut u = u0.clone();
    for k in 1..=n {
        let parts = ext.resolvent_parts(theta, lambda, &(&u / h))?;
        let energy = match phi {
            Some(phi) => {
                let (regular, charge) = ext.base_decomposition(&parts, lambda)?;
                Some(ext.energy(phi, &regular, &charge)?)
            }
            None => None,
        };
        let next = parts.value;
        diagnostics.push(StepDiagnostics {
            inc_norm: (&next - &u).norm() / h,
            energy,
            residual: parts.error_bound,
        });
        times.push(k as f64 * h);
        states.push(next.clone());
        u = next;
    }
    Ok(Trajectory {
        h,
        times,
        states,
        diagnostics,
    })
}

/// Sup over grid times of the distance from each trajectory to the last one.
pub fn sup_distances(runs: &[Trajectory]) -> Result<Vec<f64>> {
    let Some(reference) = runs.last() else {
        return Ok(Vec::new());
    };
    let dim = reference.states[0].len();
    runs.iter()
        .map(|run| {
            if run.len() != reference.len() || (run.h - reference.h).abs() > 1e-15 * reference.h {
                return Err(Error::UnsupportedConfiguration(
                    "trajectories must share the step and horizon".into(),
                ));
            }
            if run.states[0].len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: run.states[0].len(),
                });
            }
            Ok(run
                .states
                .iter()
                .zip(&reference.states)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Runs every `(extension, relation, initial state)` in parallel and compares
/// each against the last run.
pub fn compare_runs(
    runs: &[(&KreinExtension, &MonotoneRelation, &Vector)],
    opts: &EvolveOptions,
) -> Result<Vec<f64>> {
    let dim = runs.last().map(|r| r.2.len());
    if let Some(d) = dim {
        if let Some(bad) = runs.iter().find(|r| r.2.len() != d || r.0.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.2.len().max(bad.0.dim()),
            });
        }
    }
    let trajectories: Vec<Trajectory> = runs
        .par_iter()
        .map(|(ext, theta, u0)| evolve(ext, theta, u0, opts, None))
        .collect::<Result<_>>()?;
    sup_distances(&trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{GeneratorSpec, SelfAdjointGenerator};
    use crate::relations::ScalarGraph;
    use crate::{rng, Matrix};

    fn dirichlet_ext(n: usize, l0: f64) -> KreinExtension {
        let a = SelfAdjointGenerator::assemble(&GeneratorSpec::Dirichlet1d {
            n,
            h: 1.0 / (n as f64 + 1.0),
        })
        .unwrap();
        let mut trace = Matrix::zeros(2, n);
        trace[(0, 0)] = 1.0;
        trace[(1, n - 1)] = 1.0;
        let l0 = a.lower_bound() + l0;
        KreinExtension::build(a, trace, l0).unwrap()
    }

    #[test]
    fn friedrichs_flow_on_identity() {
        let a = SelfAdjointGenerator::assemble(&GeneratorSpec::Diagonal {
            eigenvalues: vec![1.0; 3],
        })
        .unwrap();
        let ext = KreinExtension::build(a, Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), 0.5).unwrap();
        let u0 = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let opts = EvolveOptions {
            h: 0.1,
            horizon: 1.0,
            shift: false,
        };
        let traj = evolve(&ext, &MonotoneRelation::zero(1), &u0, &opts, None).unwrap();
        assert_eq!(traj.len(), 11);
        for (k, u) in traj.states.iter().enumerate() {
            assert!((traj.times[k] - 0.1 * k as f64).abs() < 1e-15);
            assert!((u - &u0 / 1.1f64.powi(k as i32)).amax() < 1e-13);
        }
        assert_eq!(
            step(&ext, &MonotoneRelation::zero(1), 0.1, &Vector::zeros(3)).unwrap(),
            Vector::zeros(3)
        );
    }

    #[test]
    fn linear_step_matches_dense_extension() {
        let ext = dirichlet_ext(12, 1.0);
        let b = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let theta = MonotoneRelation::linear(b.clone()).unwrap();
        let h = 0.05;
        let lambda = 1.0 / h;
        let g = ext.charge_map(lambda).unwrap();
        let m = ext.weyl_matrix(lambda).unwrap();
        let krein = ext.generator().resolvent_matrix(lambda).unwrap()
            + &g * (b + m).try_inverse().unwrap() * g.transpose();
        let u = Vector::from_fn(12, |i, _| (0.7 * i as f64).cos());
        let got = step(&ext, &theta, h, &u).unwrap();
        assert!((got - krein * (&u / h)).amax() < 1e-9);
    }

    #[test]
    fn step_size_guard() {
        let a = SelfAdjointGenerator::assemble(&GeneratorSpec::Diagonal {
            eigenvalues: vec![1.0, 2.0],
        })
        .unwrap();
        let ext = KreinExtension::build(a, Matrix::from_row_slice(1, 2, &[1.0, 1.0]), 5.0).unwrap();
        let u = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            step(&ext, &MonotoneRelation::zero(1), 0.5, &u),
            Err(Error::StepSize { .. })
        ));
        assert!(step(&ext, &MonotoneRelation::zero(1), 0.1, &u).is_ok());
    }

    #[test]
    fn type_contraction_for_random_pairs() {
        let ext = dirichlet_ext(10, 4.5);
        let theta = MonotoneRelation::componentwise(vec![ScalarGraph::Abs, ScalarGraph::Relu { b: 1.0 }])
            .unwrap();
        let opts = EvolveOptions {
            h: 0.01,
            horizon: 1.0,
            shift: false,
        };
        let factor = 1.0 / (1.0 - opts.h * ext.base_shift());
        let mut r = rng::seeded(5);
        for _ in 0..3 {
            let u0 = rng::uniform_vector(&mut r, 10, 1.0);
            let v0 = rng::uniform_vector(&mut r, 10, 1.0);
            let tu = evolve(&ext, &theta, &u0, &opts, None).unwrap();
            let tv = evolve(&ext, &theta, &v0, &opts, None).unwrap();
            let d0 = (&u0 - &v0).norm();
            for k in 0..tu.len() {
                let d = (&tu.states[k] - &tv.states[k]).norm();
                assert!(d <= factor.powi(k as i32) * d0 + 1e-8);
            }
        }
    }

    #[test]
    fn shifted_flow_dissipates_energy_and_slows_down() {
        let ext = dirichlet_ext(10, 0.5);
        let phi = ConvexFunction::Separable {
            graphs: vec![ScalarGraph::Abs, ScalarGraph::Power { p: 3.0 }],
        };
        let theta = MonotoneRelation::subdifferential(phi.clone()).unwrap();
        let opts = EvolveOptions {
            h: 0.01,
            horizon: 0.5,
            shift: true,
        };
        let u0 = Vector::from_fn(10, |i, _| if i < 5 { 1.0 } else { -2.0 });
        let traj = evolve(&ext, &theta, &u0, &opts, Some(&phi)).unwrap();
        let energies = traj.energies();
        assert_eq!(energies.len(), traj.diagnostics.len());
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{w:?}");
        }
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].inc_norm <= w[0].inc_norm * (1.0 + 1e-8) + 1e-8);
        }
    }

    #[test]
    fn equilibrium_is_stationary_and_attracts() {
        let a = SelfAdjointGenerator::assemble(&GeneratorSpec::Diagonal {
            eigenvalues: vec![1.0, 2.0, 3.0],
        })
        .unwrap();
        let ext = KreinExtension::build(a, Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]), -0.5).unwrap();
        let theta = MonotoneRelation::shifted(
            MonotoneRelation::componentwise(vec![ScalarGraph::Abs]).unwrap(),
            Vector::from_vec(vec![0.4]),
            ext.charge_gram(0.0, -0.5).unwrap() * Vector::from_vec(vec![0.4]) * -0.5,
        )
        .unwrap();
        let eq = ext.equilibrium(&theta).unwrap();
        let opts = EvolveOptions {
            h: 0.05,
            horizon: 1.0,
            shift: false,
        };
        let traj = evolve(&ext, &theta, &eq.state, &opts, None).unwrap();
        for u in &traj.states {
            assert!((u - &eq.state).amax() < 1e-9);
        }
        let u0 = Vector::from_vec(vec![2.0, -1.0, 0.5]);
        let traj = evolve(&ext, &theta, &u0, &opts, None).unwrap();
        let factor = 1.0 / (1.0 - opts.h * ext.base_shift());
        let d0 = (&u0 - &eq.state).norm();
        for (k, u) in traj.states.iter().enumerate() {
            assert!((u - &eq.state).norm() <= factor.powi(k as i32) * d0 + 1e-8);
        }
    }

    #[test]
    fn halving_the_step_is_first_order() {
        let ext = dirichlet_ext(8, 1.0);
        let theta = MonotoneRelation::linear(Matrix::identity(2, 2)).unwrap();
        let u0 = Vector::from_fn(8, |i, _| ((i + 1) as f64 * 0.4).sin());
        let run = |h: f64| {
            evolve(
                &ext,
                &theta,
                &u0,
                &EvolveOptions {
                    h,
                    horizon: 0.2,
                    shift: false,
                },
                None,
            )
            .unwrap()
        };
        let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
        let gap = |x: &Trajectory, y: &Trajectory, stride: usize| {
            x.states
                .iter()
                .enumerate()
                .map(|(k, s)| (s - &y.states[k * stride]).norm())
                .fold(0.0, f64::max)
        };
        let ratio = gap(&a, &b, 2) / gap(&b, &c, 2);
        assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sup_distances_and_csv() {
        let ext = dirichlet_ext(4, 1.0);
        let theta = MonotoneRelation::zero(2);
        let u0 = Vector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
        let opts = EvolveOptions {
            h: 0.1,
            horizon: 0.3,
            shift: false,
        };
        let d = compare_runs(&[(&ext, &theta, &u0), (&ext, &theta, &u0)], &opts).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        let short = evolve(&ext, &theta, &u0, &EvolveOptions { horizon: 0.1, ..opts }, None).unwrap();
        let full = evolve(&ext, &theta, &u0, &opts, None).unwrap();
        assert!(sup_distances(&[short, full.clone()]).is_err());

        let mut buf = Vec::new();
        full.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,u_0,u_1,u_2,u_3,inc_norm");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(','));
    }
}
