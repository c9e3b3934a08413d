//! The built-in problem registry and assembly into runnable form.
//!
//! Five problems are registered:
//! * ex1 — 1D linear, time-dependent Dirichlet data, exact solution known;
//! * ex2 — 1D linear, constant Dirichlet data, reference by fine time step;
//! * ex3 — 1D semilinear u², time-dependent Dirichlet data;
//! * ex4 — 1D semilinear u², oblique data (Dirichlet left, Neumann right);
//! * ex5 — 2D semilinear u², stationary Dirichlet data, numeric harmonic
//!   correction.
//!
//! Custom problems can be built through the same `ProblemSpec` fields; the
//! CLI registry covers ex1..ex5.

use std::f64::consts::PI;
use std::sync::Arc;

use expint::correction::{
    analytic_correction, build_chain, harmonic_correction, initial_trace_residual,
    stationary_correction, BoundaryData, ChainData, TimeFn,
};
use expint::grid::{BcKind, Grid1D, Grid2D, SpaceTimeFn};
use expint::operator::{build_laplacian_1d, build_laplacian_2d, DiscreteOperator};
use expint::scheme::{CorrectionMode, LinearProblem, SemilinearProblem};
use expint::Error;

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridChoice {
    OneD { bc_right: BcKind },
    TwoD,
}

/// A named analytic correction: closed forms for z, ∂t z, Dz (and ∂x z when a
/// Neumann trace must be checked).
pub struct AnalyticDef {
    pub id: &'static str,
    pub z: SpaceTimeFn,
    pub dz_dt: SpaceTimeFn,
    pub dz_op: SpaceTimeFn,
    pub z_x: Option<SpaceTimeFn>,
}

/// Recipe for the fine-step reference run when no exact solution exists.
#[derive(Debug, Clone)]
pub struct ReferenceRecipe {
    pub method: String,
    /// Desk-scale step (5x the full-scale step).
    pub tau_desk: f64,
    /// The full-scale step.
    pub tau_full: f64,
}

pub enum Rhs {
    Linear(SpaceTimeFn),
    Semilinear(Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

pub struct ProblemSpec {
    pub id: String,
    pub grid: GridChoice,
    pub default_n: usize,
    pub full_n: usize,
    pub horizon: f64,
    pub boundary: Arc<BoundaryData>,
    pub rhs: Rhs,
    pub initial: SpaceTimeFn,
    pub exact: Option<SpaceTimeFn>,
    pub reference: Option<ReferenceRecipe>,
    pub analytic_corrections: Vec<AnalyticDef>,
    pub chain: Option<Arc<dyn Fn() -> ChainData + Send + Sync>>,
    pub default_ladder: Vec<f64>,
    pub default_correction: &'static str,
}

impl ProblemSpec {
    /// Exactly one of exact solution / reference recipe must be present.
    pub fn validate(&self) -> Result<(), LabError> {
        match (self.exact.is_some(), self.reference.is_some()) {
            (true, false) | (false, true) => Ok(()),
            _ => Err(LabError::BadConfig(format!(
                "problem `{}` must carry exactly one of an exact solution or a reference recipe",
                self.id
            ))),
        }
    }
}

fn halving_ladder(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start / (1u64 << i) as f64).collect()
}

/// Look up one of the built-in problems.
pub fn build_problem(id: &str) -> Result<ProblemSpec, LabError> {
    let spec = match id {
        "ex1" => ex1(),
        "ex2" => ex2(),
        "ex3" => ex3(),
        "ex4" => ex4(),
        "ex5" => ex5(),
        other => {
            return Err(LabError::BadConfig(format!(
                "unknown problem `{other}` (registry: ex1..ex5; custom problems go through the library API)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// u_t = u_xx + (x²+x−3)e^t, u(t,0) = 1−e^t, u(t,1) = 1+e^t, u(0) = x²+x,
/// exact u = 1 + (x²+x−1)e^t, T = 1.
fn ex1() -> ProblemSpec {
    let boundary = Arc::new(BoundaryData::dirichlet_1d(
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| if q == 0 { 1.0 - t.exp() } else { -t.exp() })
            })
            .collect(),
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| if q == 0 { 1.0 + t.exp() } else { t.exp() })
            })
            .collect(),
    ));
    ProblemSpec {
        id: "ex1".into(),
        grid: GridChoice::OneD { bc_right: BcKind::Dirichlet },
        default_n: 256,
        full_n: 512,
        horizon: 1.0,
        boundary,
        rhs: Rhs::Linear(SpaceTimeFn::one_d(|t, x| (x * x + x - 3.0) * t.exp())),
        initial: SpaceTimeFn::one_d(|_, x| x * x + x),
        exact: Some(SpaceTimeFn::one_d(|t, x| 1.0 + (x * x + x - 1.0) * t.exp())),
        reference: None,
        analytic_corrections: vec![AnalyticDef {
            id: "affine",
            z: SpaceTimeFn::one_d(|t, x| 1.0 + (2.0 * x - 1.0) * t.exp()),
            dz_dt: SpaceTimeFn::one_d(|t, x| (2.0 * x - 1.0) * t.exp()),
            dz_op: SpaceTimeFn::one_d(|_, _| 0.0),
            z_x: None,
        }],
        chain: Some(Arc::new(|| ChainData {
            f_trace: Arc::new(|r, _q, t| match r {
                0 => (-3.0 * t.exp(), -t.exp()),
                1 => (2.0 * t.exp(), 2.0 * t.exp()),
                _ => unreachable!(),
            }),
            max_operator_order: 1,
            max_time_derivative: 6,
        })),
        default_ladder: halving_ladder(0.1, 5),
        default_correction: "analytic:affine",
    }
}

/// u_t = u_xx + (−2+12x−12x²+x²(1−x)²)e^t, u(t,0) = 1, u(t,1) = 2,
/// u(0) = 1 + x + x²(1−x)², T = 1.
fn ex2() -> ProblemSpec {
    let boundary = Arc::new(BoundaryData::stationary_dirichlet_1d(1.0, 2.0));
    ProblemSpec {
        id: "ex2".into(),
        grid: GridChoice::OneD { bc_right: BcKind::Dirichlet },
        default_n: 256,
        full_n: 512,
        horizon: 1.0,
        boundary,
        rhs: Rhs::Linear(SpaceTimeFn::one_d(|t, x| {
            (-2.0 + 12.0 * x - 12.0 * x * x + x * x * (1.0 - x) * (1.0 - x)) * t.exp()
        })),
        initial: SpaceTimeFn::one_d(|_, x| 1.0 + x + x * x * (1.0 - x) * (1.0 - x)),
        exact: None,
        reference: Some(ReferenceRecipe {
            method: "gauss-quadrature:2".into(),
            tau_desk: 1.0 / 800.0,
            tau_full: 1.0 / 4000.0,
        }),
        analytic_corrections: vec![
            AnalyticDef {
                id: "affine",
                z: SpaceTimeFn::one_d(|_, x| 1.0 + x),
                dz_dt: SpaceTimeFn::one_d(|_, _| 0.0),
                dz_op: SpaceTimeFn::one_d(|_, _| 0.0),
                z_x: None,
            },
            AnalyticDef {
                id: "quadratic",
                z: SpaceTimeFn::one_d(|t, x| 1.0 + (1.0 - t.exp()) * x + t.exp() * x * x),
                dz_dt: SpaceTimeFn::one_d(|t, x| (x * x - x) * t.exp()),
                dz_op: SpaceTimeFn::one_d(|t, _| 2.0 * t.exp()),
                z_x: None,
            },
        ],
        chain: Some(Arc::new(|| ChainData {
            f_trace: Arc::new(|r, _q, t| match r {
                0 => (-2.0 * t.exp(), -2.0 * t.exp()),
                1 => (14.0 * t.exp(), -10.0 * t.exp()),
                _ => unreachable!(),
            }),
            max_operator_order: 1,
            max_time_derivative: 6,
        })),
        default_ladder: halving_ladder(0.05, 5),
        default_correction: "analytic:affine",
    }
}

/// u_t = u_xx + u², u(t,0) = 1−e^{−π²t}, u(t,1) = 1+e^{−π²t},
/// u(0) = 1 + sin(π(x−1/2)), T = 0.5.
fn ex3() -> ProblemSpec {
    let pp = PI * PI;
    let decay = move |t: f64| (-pp * t).exp();
    let boundary = Arc::new(BoundaryData::dirichlet_1d(
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| {
                    if q == 0 {
                        1.0 - decay(t)
                    } else {
                        -(-pp).powi(q) * decay(t)
                    }
                })
            })
            .collect(),
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| {
                    if q == 0 {
                        1.0 + decay(t)
                    } else {
                        (-pp).powi(q) * decay(t)
                    }
                })
            })
            .collect(),
    ));
    ProblemSpec {
        id: "ex3".into(),
        grid: GridChoice::OneD { bc_right: BcKind::Dirichlet },
        default_n: 256,
        full_n: 512,
        horizon: 0.5,
        boundary,
        rhs: Rhs::Semilinear(Arc::new(|_t, u| u.iter().map(|v| v * v).collect())),
        initial: SpaceTimeFn::one_d(|_, x| 1.0 + (PI * (x - 0.5)).sin()),
        exact: None,
        reference: Some(ReferenceRecipe {
            method: "krogstad".into(),
            tau_desk: 1.0 / 8000.0,
            tau_full: 1.0 / 40000.0,
        }),
        analytic_corrections: vec![
            AnalyticDef {
                id: "heat",
                z: SpaceTimeFn::one_d(move |t, x| 1.0 + decay(t) * (PI * (x - 0.5)).sin()),
                dz_dt: SpaceTimeFn::one_d(move |t, x| -pp * decay(t) * (PI * (x - 0.5)).sin()),
                dz_op: SpaceTimeFn::one_d(move |t, x| -pp * decay(t) * (PI * (x - 0.5)).sin()),
                z_x: None,
            },
            AnalyticDef {
                id: "harmonic",
                z: SpaceTimeFn::one_d(move |t, x| 1.0 + (2.0 * x - 1.0) * decay(t)),
                dz_dt: SpaceTimeFn::one_d(move |t, x| -pp * (2.0 * x - 1.0) * decay(t)),
                dz_op: SpaceTimeFn::one_d(|_, _| 0.0),
                z_x: None,
            },
        ],
        chain: None,
        default_ladder: halving_ladder(0.05, 5),
        default_correction: "analytic:heat",
    }
}

/// u_t = u_xx + u², u(t,0) = 1−e^{−π²t/4}, u_x(t,1) = (π/2)e^{−π²t/4},
/// u(0) = 1 + sin(π(x−1)/2), T = 1.
fn ex4() -> ProblemSpec {
    let qq = 0.25 * PI * PI;
    let decay = move |t: f64| (-qq * t).exp();
    let boundary = Arc::new(BoundaryData::mixed_1d(
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| {
                    if q == 0 {
                        1.0 - decay(t)
                    } else {
                        -(-qq).powi(q as i32) * decay(t)
                    }
                })
            })
            .collect(),
        (0..4)
            .map(|q| {
                TimeFn::new(move |t: f64| {
                    0.5 * PI * (-qq).powi(q as i32) * decay(t)
                })
            })
            .collect(),
    ));
    ProblemSpec {
        id: "ex4".into(),
        grid: GridChoice::OneD { bc_right: BcKind::Neumann },
        default_n: 256,
        full_n: 256,
        horizon: 1.0,
        boundary,
        rhs: Rhs::Semilinear(Arc::new(|_t, u| u.iter().map(|v| v * v).collect())),
        initial: SpaceTimeFn::one_d(|_, x| 1.0 + (0.5 * PI * (x - 1.0)).sin()),
        exact: None,
        reference: Some(ReferenceRecipe {
            method: "krogstad".into(),
            tau_desk: 1.0 / 4000.0,
            tau_full: 1.0 / 20000.0,
        }),
        analytic_corrections: vec![
            AnalyticDef {
                id: "heat",
                z: SpaceTimeFn::one_d(move |t, x| 1.0 + decay(t) * (0.5 * PI * (x - 1.0)).sin()),
                dz_dt: SpaceTimeFn::one_d(move |t, x| {
                    -qq * decay(t) * (0.5 * PI * (x - 1.0)).sin()
                }),
                dz_op: SpaceTimeFn::one_d(move |t, x| {
                    -qq * decay(t) * (0.5 * PI * (x - 1.0)).sin()
                }),
                z_x: Some(SpaceTimeFn::one_d(move |t, x| {
                    0.5 * PI * decay(t) * (0.5 * PI * (x - 1.0)).cos()
                })),
            },
            AnalyticDef {
                id: "harmonic",
                z: SpaceTimeFn::one_d(move |t, x| 1.0 + (0.5 * PI * x - 1.0) * decay(t)),
                dz_dt: SpaceTimeFn::one_d(move |t, x| -qq * (0.5 * PI * x - 1.0) * decay(t)),
                dz_op: SpaceTimeFn::one_d(|_, _| 0.0),
                z_x: Some(SpaceTimeFn::one_d(move |t, _| 0.5 * PI * decay(t))),
            },
        ],
        chain: None,
        default_ladder: halving_ladder(0.05, 5),
        default_correction: "analytic:heat",
    }
}

/// The Example-5 boundary/initial surface: Gaussian ridges plus a central well.
pub fn ex5_surface(x: f64, y: f64) -> f64 {
    let b1 = x - 0.5 - 0.1 * (PI * y).cos().powi(2);
    let b2 = y - 0.5 - 0.1 * (2.0 * PI * x).sin().powi(2);
    let r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
    0.5 + 2.0 * (-40.0 * b1 * b1).exp() + 2.0 * (-35.0 * b2 * b2).exp() - 2.0 * (-35.0 * r2).exp()
}

/// u_t = Δu + u² on (0,1)², u = f on ∂Ω (time-independent), u(0) = f, T = 0.5.
fn ex5() -> ProblemSpec {
    ProblemSpec {
        id: "ex5".into(),
        grid: GridChoice::TwoD,
        default_n: 64,
        full_n: 128,
        horizon: 0.5,
        boundary: Arc::new(BoundaryData::stationary_dirichlet_2d(ex5_surface)),
        rhs: Rhs::Semilinear(Arc::new(|_t, u| u.iter().map(|v| v * v).collect())),
        initial: SpaceTimeFn::two_d(|_, x, y| ex5_surface(x, y)),
        exact: None,
        reference: Some(ReferenceRecipe {
            method: "rk4".into(),
            tau_desk: 5e-5,
            tau_full: 1e-5,
        }),
        analytic_corrections: vec![],
        chain: None,
        default_ladder: halving_ladder(0.0125, 5),
        default_correction: "harmonic",
    }
}

// ---------------------------------------------------------------------------
// assembly
// ---------------------------------------------------------------------------

pub enum AnyProblem {
    Linear(LinearProblem),
    Semilinear(SemilinearProblem),
}

impl AnyProblem {
    pub fn correction(&self) -> &CorrectionMode {
        match self {
            AnyProblem::Linear(p) => &p.correction,
            AnyProblem::Semilinear(p) => &p.correction,
        }
    }

    pub fn as_ref(&self) -> expint::scheme::ProblemRef<'_> {
        match self {
            AnyProblem::Linear(p) => expint::scheme::ProblemRef::Linear(p),
            AnyProblem::Semilinear(p) => expint::scheme::ProblemRef::Semilinear(p),
        }
    }
}

pub struct Assembled {
    pub id: String,
    pub grid_n: usize,
    pub operator: Arc<DiscreteOperator>,
    pub boundary: Arc<BoundaryData>,
    pub problem: AnyProblem,
    pub correction_name: String,
    pub horizon: f64,
}

/// Build the operator, correction and runnable problem for a grid size and a
/// correction strategy name (`analytic:<id>`, `harmonic`, `stationary`,
/// `stationary-identity`, `chain:<m>`).
pub fn assemble(spec: &ProblemSpec, n: usize, correction: &str) -> Result<Assembled, LabError> {
    let operator = Arc::new(match spec.grid {
        GridChoice::OneD { bc_right } => {
            build_laplacian_1d(Grid1D::new(n, BcKind::Dirichlet, bc_right)?)?
        }
        GridChoice::TwoD => build_laplacian_2d(Grid2D::new(n)?)?,
    });
    let t_end = spec.horizon;
    let check_times = [0.0, t_end / 3.0, 2.0 * t_end / 3.0, t_end];

    let mode: CorrectionMode = if let Some(id) = correction.strip_prefix("analytic:") {
        let def = spec
            .analytic_corrections
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| {
                LabError::BadConfig(format!(
                    "problem `{}` has no analytic correction `{id}`",
                    spec.id
                ))
            })?;
        let corr = analytic_correction(
            operator.clone(),
            &spec.boundary,
            def.id,
            def.z.clone(),
            def.dz_dt.clone(),
            def.dz_op.clone(),
            def.z_x.clone(),
            &check_times,
        )?;
        CorrectionMode::Field(Arc::new(corr))
    } else if correction == "harmonic" {
        CorrectionMode::Field(Arc::new(harmonic_correction(
            operator.clone(),
            spec.boundary.clone(),
        )))
    } else if correction == "stationary" {
        CorrectionMode::Field(Arc::new(stationary_correction(
            operator.clone(),
            spec.boundary.clone(),
        )?))
    } else if correction == "stationary-identity" {
        CorrectionMode::StepwiseIdentity { boundary: spec.boundary.clone() }
    } else if let Some(m) = correction.strip_prefix("chain:") {
        let m: usize = m
            .parse()
            .map_err(|_| LabError::BadConfig(format!("bad chain order in `{correction}`")))?;
        let data = spec.chain.as_ref().ok_or_else(|| {
            LabError::Lib(Error::InsufficientData(format!(
                "problem `{}` does not provide the source traces a chain needs",
                spec.id
            )))
        })?;
        CorrectionMode::Field(Arc::new(build_chain(
            operator.clone(),
            spec.boundary.clone(),
            data(),
            m,
        )?))
    } else {
        return Err(LabError::BadConfig(format!("unknown correction strategy `{correction}`")));
    };

    let initial = spec.initial.sample(0.0, &operator.meta().coords)?;
    let trace_residual = initial_trace_residual(&operator, &spec.initial, &spec.boundary)?;
    let dx = operator.meta().dx;
    if trace_residual > 10.0 * dx * dx {
        log::warn!(
            "problem `{}`: initial data violates the boundary condition by {trace_residual:.3e}",
            spec.id
        );
    }

    let problem = match &spec.rhs {
        Rhs::Linear(f) => AnyProblem::Linear(LinearProblem {
            operator: operator.clone(),
            source: f.clone(),
            correction: mode,
            initial,
            horizon: spec.horizon,
        }),
        Rhs::Semilinear(f) => AnyProblem::Semilinear(SemilinearProblem {
            operator: operator.clone(),
            nonlinearity: f.clone(),
            correction: mode,
            initial,
            horizon: spec.horizon,
        }),
    };
    Ok(Assembled {
        id: spec.id.clone(),
        grid_n: n,
        operator,
        boundary: spec.boundary.clone(),
        problem,
        correction_name: correction.to_string(),
        horizon: spec.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_the_five_examples() {
        for id in ["ex1", "ex2", "ex3", "ex4", "ex5"] {
            let spec = build_problem(id).unwrap();
            assert_eq!(spec.id, id);
            spec.validate().unwrap();
        }
        assert!(build_problem("ex9").is_err());
    }

    #[test]
    fn ex1_exact_matches_initial_condition() {
        // u(0, 0.5) = 1 + (0.25 + 0.5 − 1) = 0.75 = initial x² + x at 0.5
        let spec = build_problem("ex1").unwrap();
        let exact = spec.exact.as_ref().unwrap();
        assert!((exact.eval(0.0, 0.5, 0.0) - 0.75).abs() < 1e-15);
        assert!((spec.initial.eval(0.0, 0.5, 0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ex3_initial_condition_at_midpoint() {
        let spec = build_problem("ex3").unwrap();
        assert!((spec.initial.eval(0.0, 0.5, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ex5_surface_regression_value() {
        // frozen from an independent hand evaluation of the display:
        // at (0.5, 0.5) all bump arguments vanish: 0.5 + 2 + 2 − 2 = 2.5
        assert!((ex5_surface(0.5, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn reference_recipes_are_registered() {
        let ex2 = build_problem("ex2").unwrap().reference.unwrap();
        assert_eq!(ex2.method, "gauss-quadrature:2");
        assert!((ex2.tau_full - 1.0 / 4000.0).abs() < 1e-18);
        let ex3 = build_problem("ex3").unwrap().reference.unwrap();
        assert_eq!(ex3.method, "krogstad");
        assert!((ex3.tau_full - 1.0 / 40000.0).abs() < 1e-18);
        let ex5 = build_problem("ex5").unwrap().reference.unwrap();
        assert_eq!(ex5.method, "rk4");
        assert!((ex5.tau_full - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn assemble_builds_all_registered_corrections() {
        let spec = build_problem("ex2").unwrap();
        for corr in ["analytic:affine", "analytic:quadratic", "harmonic", "stationary", "chain:1"]
        {
            let asm = assemble(&spec, 32, corr).unwrap();
            assert_eq!(asm.correction_name, corr);
        }
        assert!(assemble(&spec, 32, "analytic:missing").is_err());
        assert!(assemble(&spec, 32, "chain:0").is_err());

        let spec5 = build_problem("ex5").unwrap();
        assert!(assemble(&spec5, 8, "harmonic").is_ok());
        assert!(assemble(&spec5, 8, "chain:1").is_err());
    }

    #[test]
    fn ex4_boundary_derivatives_are_consistent() {
        let spec = build_problem("ex4").unwrap();
        spec.boundary.validate_derivatives(&[0.0, 0.3, 0.8]).unwrap();
        let spec3 = build_problem("ex3").unwrap();
        spec3.boundary.validate_derivatives(&[0.0, 0.2, 0.45]).unwrap();
    }
}
