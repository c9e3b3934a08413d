//! Time steppers: the linear exponential quadrature scheme with variable step
//! sizes and explicit exponential Runge–Kutta methods for semilinear
//! problems, plus the tableau registry.
//!
//! Both families are stated in u-variables with the correction z folded in:
//!
//!   u_{n+1} = e^{τA}(u_n − z(t_n)) + z(t_{n+1}) + τ Σ_i b_i(τA) G_i,
//!
//! with G_i = f(t_n + c_iτ) + k(t_n + c_iτ) for linear problems and
//! G_i = f(t_n + c_iτ, U_i) + k(t_n + c_iτ) with stages
//! U_i = e^{c_iτA}(u_n − z(t_n)) + z(t_n + c_iτ) + τ Σ_{j<i} a_ij(τA) G_j
//! for semilinear ones. The w-form (without z) is exposed for the
//! equivalence checks and for reference integrators.
//!
//! All operator functions are evaluated spectrally; per-τ multiplier arrays
//! are cached by the integrator so constant-step runs assemble them once.

use std::collections::HashMap;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correction::{boundary_lift, BoundaryData, Correction, TraceSpec};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeFn;
use crate::operator::DiscreteOperator;
use crate::phi::{phi_scalar, NodeSet, PhiEvaluator, WeightSet};

// ---------------------------------------------------------------------------
// step sequences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepGenerator {
    Constant,
    QuasiUniformRandom { alpha: f64, seed: u64 },
    Custom,
}

/// Ordered positive step sizes summing to the horizon.
#[derive(Debug, Clone)]
pub struct StepSequence {
    steps: Vec<f64>,
    horizon: f64,
    generator: StepGenerator,
}

impl StepSequence {
    fn checked(steps: Vec<f64>, horizon: f64, generator: StepGenerator) -> Result<Self> {
        if steps.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidStepSequence("all steps must be positive".into()));
        }
        let sum: f64 = steps.iter().sum();
        if (sum - horizon).abs() > 1e-12 * horizon.abs().max(1.0) {
            return Err(Error::InvalidStepSequence(format!(
                "steps sum to {sum:.17}, horizon is {horizon:.17}"
            )));
        }
        Ok(Self { steps, horizon, generator })
    }

    pub fn constant(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Self::checked(Vec::new(), horizon, StepGenerator::Constant);
        }
        let tau = horizon / n_steps as f64;
        Self::checked(vec![tau; n_steps], horizon, StepGenerator::Constant)
    }

    /// Constant steps of size `tau`; `tau` must divide the horizon.
    pub fn constant_with_tau(horizon: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidStepSequence("tau must be positive".into()));
        }
        let n = (horizon / tau).round();
        if n < 1.0 || (n * tau - horizon).abs() > 1e-9 * horizon.abs().max(1.0) {
            return Err(Error::InvalidStepSequence(format!(
                "tau {tau} does not divide horizon {horizon}"
            )));
        }
        Self::checked(vec![tau; n as usize], horizon, StepGenerator::Constant)
    }

    /// Random steps with α·τ_max ≤ τ_n ≤ τ_max, rescaled to sum to the
    /// horizon (rescaling preserves the ratio bounds).
    pub fn quasi_uniform_random(
        horizon: f64,
        tau_max: f64,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::InvalidStepSequence(format!("alpha {alpha} outside (0,1]")));
        }
        let mean = 0.5 * (1.0 + alpha) * tau_max;
        let n = (horizon / mean).ceil().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(alpha, 1.0);
        let raw: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng) * tau_max).collect();
        let sum: f64 = raw.iter().sum();
        let scale = horizon / sum;
        Self::checked(
            raw.iter().map(|r| r * scale).collect(),
            horizon,
            StepGenerator::QuasiUniformRandom { alpha, seed },
        )
    }

    pub fn custom(steps: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::checked(steps, horizon, StepGenerator::Custom)
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn generator(&self) -> StepGenerator {
        self.generator
    }

    pub fn tau_max(&self) -> f64 {
        self.steps.iter().cloned().fold(0.0, f64::max)
    }

    /// Realized min/max ratio (the α of the quasi-uniform bound).
    pub fn alpha_realized(&self) -> f64 {
        let max = self.tau_max();
        let min = self.steps.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            min / max
        } else {
            1.0
        }
    }

    /// Ratio bound κ = max τ_j / τ_{j+1}.
    pub fn ratio_bound(&self) -> f64 {
        self.steps.windows(2).map(|w| w[0] / w[1]).fold(1.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// tableaux
// ---------------------------------------------------------------------------

/// A linear combination Σ coeff · φ_k of φ functions.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombo(pub Vec<(usize, f64)>);

impl PhiCombo {
    pub fn zero() -> Self {
        PhiCombo(Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.0.iter().map(|&(k, c)| c * phi_scalar(k, z)).sum()
    }

    /// Value at z = 0, using φ_k(0) = 1/k!.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }
}

/// An explicit exponential Runge–Kutta tableau. Internal coefficients
/// a_ij are φ combinations evaluated at the row's node scale c_i τ A; the
/// weights b_i are evaluated at the full step τ A.
#[derive(Debug, Clone)]
pub struct ExponentialTableau {
    pub name: String,
    pub nodes: Vec<f64>,
    /// a[i] holds the strictly-lower row (a_{i,0} … a_{i,i-1}).
    pub a: Vec<Vec<PhiCombo>>,
    pub b: Vec<PhiCombo>,
}

impl ExponentialTableau {
    pub fn stages(&self) -> usize {
        self.nodes.len()
    }

    /// Structural checks: strictly lower a, and the stiff row sums at τA = 0:
    /// Σ_j a_ij(0) = c_i and Σ_i b_i(0) = 1, each to 1e-12.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if self.a.len() != s || self.b.len() != s {
            return Err(Error::InvalidMethod(format!("tableau `{}` has ragged rows", self.name)));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != i {
                return Err(Error::InvalidMethod(format!(
                    "tableau `{}` is not strictly lower triangular",
                    self.name
                )));
            }
            let sum: f64 = row.iter().map(|c| c.at_zero()).sum();
            if (sum - self.nodes[i]).abs() > 1e-12 {
                return Err(Error::InvalidMethod(format!(
                    "tableau `{}` row {i} sums to {sum}, node is {}",
                    self.name, self.nodes[i]
                )));
            }
        }
        let bsum: f64 = self.b.iter().map(|c| c.at_zero()).sum();
        if (bsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMethod(format!(
                "tableau `{}` weights sum to {bsum} at 0",
                self.name
            )));
        }
        Ok(())
    }

    /// Exponential Euler: one stage, b₁ = φ₁.
    pub fn euler() -> Self {
        ExponentialTableau {
            name: "euler".into(),
            nodes: vec![0.0],
            a: vec![vec![]],
            b: vec![PhiCombo(vec![(1, 1.0)])],
        }
    }

    /// Two-stage scheme of Strehmel and Weiner: c = (0, 1/2),
    /// a₂₁ = ½φ_{1,2}, b = (0, φ₁).
    pub fn strehmel_weiner() -> Self {
        ExponentialTableau {
            name: "strehmel-weiner".into(),
            nodes: vec![0.0, 0.5],
            a: vec![vec![], vec![PhiCombo(vec![(1, 0.5)])]],
            b: vec![PhiCombo::zero(), PhiCombo(vec![(1, 1.0)])],
        }
    }

    /// Krogstad's four-stage scheme.
    pub fn krogstad() -> Self {
        ExponentialTableau {
            name: "krogstad".into(),
            nodes: vec![0.0, 0.5, 0.5, 1.0],
            a: vec![
                vec![],
                vec![PhiCombo(vec![(1, 0.5)])],
                vec![PhiCombo(vec![(1, 0.5), (2, -1.0)]), PhiCombo(vec![(2, 1.0)])],
                vec![
                    PhiCombo(vec![(1, 1.0), (2, -2.0)]),
                    PhiCombo::zero(),
                    PhiCombo(vec![(2, 2.0)]),
                ],
            ],
            b: vec![
                PhiCombo(vec![(1, 1.0), (2, -3.0), (3, 4.0)]),
                PhiCombo(vec![(2, 2.0), (3, -4.0)]),
                PhiCombo(vec![(2, 2.0), (3, -4.0)]),
                PhiCombo(vec![(2, -1.0), (3, 4.0)]),
            ],
        }
    }
}

/// A time integration method: an exponential quadrature rule (linear
/// problems) or an exponential Runge–Kutta tableau.
#[derive(Debug, Clone)]
pub enum Method {
    Quadrature(WeightSet),
    Tableau(ExponentialTableau),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Quadrature(w) => match w.node_set().label() {
                crate::phi::NodeLabel::Gauss => format!("gauss-quadrature:{}", w.stages()),
                crate::phi::NodeLabel::Radau => format!("radau-quadrature:{}", w.stages()),
                crate::phi::NodeLabel::Lobatto => format!("lobatto-quadrature:{}", w.stages()),
                crate::phi::NodeLabel::Custom => format!("custom-quadrature:{}", w.stages()),
            },
            Method::Tableau(t) => t.name.clone(),
        }
    }
}

/// Look up a method by name: `euler`, `strehmel-weiner`, `krogstad`,
/// `gauss-quadrature:<s>`, `radau-quadrature:<s>`.
pub fn registry_get(name: &str) -> Result<Method> {
    match name {
        "euler" => Ok(Method::Tableau(ExponentialTableau::euler())),
        "strehmel-weiner" => Ok(Method::Tableau(ExponentialTableau::strehmel_weiner())),
        "krogstad" => Ok(Method::Tableau(ExponentialTableau::krogstad())),
        _ => {
            let (family, stages) = name
                .split_once(':')
                .ok_or_else(|| Error::UnknownMethod(name.to_string()))?;
            let s: usize =
                stages.parse().map_err(|_| Error::UnknownMethod(name.to_string()))?;
            let nodes = match family {
                "gauss-quadrature" | "gauss" => NodeSet::gauss(s)?,
                "radau-quadrature" | "radau" => NodeSet::radau_right(s)?,
                _ => return Err(Error::UnknownMethod(name.to_string())),
            };
            Ok(Method::Quadrature(crate::phi::solve_weights(&nodes)?))
        }
    }
}

// ---------------------------------------------------------------------------
// problems
// ---------------------------------------------------------------------------

/// How the boundary correction enters a run.
#[derive(Clone)]
pub enum CorrectionMode {
    Field(Arc<dyn Correction>),
    /// The stationary-data shortcut z_n = u_n: at each step the correction is
    /// the current numerical solution, frozen in time, with k = D_h u_n.
    StepwiseIdentity { boundary: Arc<BoundaryData> },
}

impl CorrectionMode {
    pub fn strategy(&self) -> String {
        match self {
            CorrectionMode::Field(c) => c.strategy(),
            CorrectionMode::StepwiseIdentity { .. } => "stationary-identity".into(),
        }
    }
}

/// ∂t u = Du + f(t), Bu = b(t), u(0) = u₀ on a fixed grid.
#[derive(Clone)]
pub struct LinearProblem {
    pub operator: Arc<DiscreteOperator>,
    pub source: SpaceTimeFn,
    pub correction: CorrectionMode,
    pub initial: Vec<f64>,
    pub horizon: f64,
}

/// ∂t u = Du + f(t,u), Bu = b(t), u(0) = u₀. The nonlinearity acts on the
/// whole state vector (the in-scope instances are gridpointwise).
#[derive(Clone)]
pub struct SemilinearProblem {
    pub operator: Arc<DiscreteOperator>,
    pub nonlinearity: Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    pub correction: CorrectionMode,
    pub initial: Vec<f64>,
    pub horizon: f64,
}

impl LinearProblem {
    /// View the linear problem as a semilinear one with state-independent
    /// source, for integration with a tableau.
    pub fn as_semilinear(&self) -> SemilinearProblem {
        let source = self.source.clone();
        let coords = self.operator.meta().coords.clone();
        SemilinearProblem {
            operator: self.operator.clone(),
            nonlinearity: Arc::new(move |t, _u| {
                source.sample(t, &coords).expect("source matches grid")
            }),
            correction: self.correction.clone(),
            initial: self.initial.clone(),
            horizon: self.horizon,
        }
    }
}

/// Correction with z frozen to the current state (the z_n = u_n remark).
struct FrozenCorrection {
    z: Vec<f64>,
    dz_op: Vec<f64>,
}

impl Correction for FrozenCorrection {
    fn z(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(self.z.clone())
    }

    fn dz_dt(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.z.len()])
    }

    fn dz_op(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(self.dz_op.clone())
    }

    fn strategy(&self) -> String {
        "stationary-identity".into()
    }

    fn is_stationary(&self) -> bool {
        true
    }
}

/// Resolve the correction for the step starting at (t, u).
fn resolve_correction(
    mode: &CorrectionMode,
    op: &DiscreteOperator,
    u: &[f64],
    t: f64,
) -> Result<Arc<dyn Correction>> {
    match mode {
        CorrectionMode::Field(c) => Ok(c.clone()),
        CorrectionMode::StepwiseIdentity { boundary } => {
            if !boundary.is_stationary() {
                return Err(Error::InvalidCorrection(
                    "stationary-identity needs time-independent boundary data".into(),
                ));
            }
            let trace = match boundary.as_ref() {
                BoundaryData::OneD { .. } => {
                    let (l, r) = boundary.pair_1d(0, t)?;
                    boundary_lift(op, &TraceSpec::OneD { left: l, right: r })?
                }
                BoundaryData::TwoD { traces, .. } => {
                    let g = traces[0].clone();
                    let closure = move |x: f64, y: f64| g(t, x, y);
                    boundary_lift(op, &TraceSpec::TwoD(&closure))?
                }
            };
            let au = op.apply(u)?;
            let dz_op = au.iter().zip(&trace).map(|(a, l)| a + l).collect();
            Ok(Arc::new(FrozenCorrection { z: u.to_vec(), dz_op }))
        }
    }
}

// ---------------------------------------------------------------------------
// per-τ multiplier assembly
// ---------------------------------------------------------------------------

struct QuadMultipliers {
    exp_full: Vec<f64>,
    /// b_hat[i][k] = b_i(τ λ_k)
    b_hat: Vec<Vec<f64>>,
}

fn assemble_quadrature(op: &DiscreteOperator, w: &WeightSet, tau: f64) -> QuadMultipliers {
    let exp_full = op.multipliers(|l| (tau * l).exp());
    let b_hat = (0..w.stages())
        .map(|i| op.multipliers(|l| w.weight_scalar(i, tau * l)))
        .collect();
    QuadMultipliers { exp_full, b_hat }
}

struct TableauMultipliers {
    exp_full: Vec<f64>,
    /// e^{c_i τ λ}; None for the c_i = 0 fast path.
    exp_stage: Vec<Option<Vec<f64>>>,
    /// a_hat[i][j][k] = a_ij(c_i τ λ_k); None for zero combos.
    a_hat: Vec<Vec<Option<Vec<f64>>>>,
    b_hat: Vec<Option<Vec<f64>>>,
}

fn assemble_tableau(op: &DiscreteOperator, tb: &ExponentialTableau, tau: f64) -> TableauMultipliers {
    let s = tb.stages();
    let exp_full = op.multipliers(|l| (tau * l).exp());
    let mut exp_stage = Vec::with_capacity(s);
    let mut a_hat = Vec::with_capacity(s);
    for i in 0..s {
        let ci = tb.nodes[i];
        if ci == 0.0 && tb.a[i].iter().all(PhiCombo::is_zero) {
            exp_stage.push(None);
            a_hat.push(vec![None; i]);
            continue;
        }
        exp_stage.push(Some(op.multipliers(|l| (ci * tau * l).exp())));
        a_hat.push(
            tb.a[i]
                .iter()
                .map(|combo| {
                    if combo.is_zero() {
                        None
                    } else {
                        Some(op.multipliers(|l| combo.eval(ci * tau * l)))
                    }
                })
                .collect(),
        );
    }
    let b_hat = tb
        .b
        .iter()
        .map(|combo| {
            if combo.is_zero() {
                None
            } else {
                Some(op.multipliers(|l| combo.eval(tau * l)))
            }
        })
        .collect();
    TableauMultipliers { exp_full, exp_stage, a_hat, b_hat }
}

// ---------------------------------------------------------------------------
// steps
// ---------------------------------------------------------------------------

fn check_problem_dims(op: &DiscreteOperator, u: &[f64]) -> Result<()> {
    if u.len() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: u.len() });
    }
    Ok(())
}

fn sample_linear_g(
    problem: &LinearProblem,
    corr: &dyn Correction,
    t: f64,
) -> Result<Vec<f64>> {
    let f = problem.source.sample(t, &problem.operator.meta().coords)?;
    let k = corr.k(t)?;
    Ok(f.iter().zip(&k).map(|(a, b)| a + b).collect())
}

fn linear_step_kernel(
    u: &[f64],
    t: f64,
    tau: f64,
    problem: &LinearProblem,
    weights: &WeightSet,
    mult: &QuadMultipliers,
) -> Result<Vec<f64>> {
    let op = problem.operator.as_ref();
    let corr = resolve_correction(&problem.correction, op, u, t)?;
    let z_n = corr.z(t)?;
    let w: Vec<f64> = u.iter().zip(&z_n).map(|(a, b)| a - b).collect();
    let what = op.forward(&w)?;
    let mut acc: Vec<f64> = what.iter().zip(&mult.exp_full).map(|(x, e)| x * e).collect();
    for (i, &ci) in weights.nodes().iter().enumerate() {
        let g = sample_linear_g(problem, corr.as_ref(), t + ci * tau)?;
        let ghat = op.forward(&g)?;
        for ((a, &gh), bh) in acc.iter_mut().zip(&ghat).zip(&mult.b_hat[i]) {
            *a += tau * bh * gh;
        }
    }
    let mut next = op.inverse(&acc)?;
    let z_next = corr.z(t + tau)?;
    for (x, z) in next.iter_mut().zip(&z_next) {
        *x += z;
    }
    Ok(next)
}

/// One step of the exponential quadrature rule in u-variables.
pub fn linear_step(
    u: &[f64],
    t: f64,
    tau: f64,
    problem: &LinearProblem,
    weights: &WeightSet,
    phi: &PhiEvaluator,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidStepSequence(format!("step {tau} must be positive")));
    }
    check_problem_dims(&problem.operator, u)?;
    debug_assert_eq!(phi.operator().dim(), problem.operator.dim());
    let mult = assemble_quadrature(&problem.operator, weights, tau);
    linear_step_kernel(u, t, tau, problem, weights, &mult)
}

/// One step of the same rule in w-variables (homogeneous form).
pub fn linear_step_w(
    w: &[f64],
    t: f64,
    tau: f64,
    problem: &LinearProblem,
    weights: &WeightSet,
) -> Result<Vec<f64>> {
    check_problem_dims(&problem.operator, w)?;
    let op = problem.operator.as_ref();
    let CorrectionMode::Field(corr) = &problem.correction else {
        return Err(Error::InvalidCorrection("w-form needs a correction field".into()));
    };
    let mult = assemble_quadrature(op, weights, tau);
    let what = op.forward(w)?;
    let mut acc: Vec<f64> = what.iter().zip(&mult.exp_full).map(|(x, e)| x * e).collect();
    for (i, &ci) in weights.nodes().iter().enumerate() {
        let g = sample_linear_g(problem, corr.as_ref(), t + ci * tau)?;
        let ghat = op.forward(&g)?;
        for ((a, &gh), bh) in acc.iter_mut().zip(&ghat).zip(&mult.b_hat[i]) {
            *a += tau * bh * gh;
        }
    }
    op.inverse(&acc)
}

fn semilinear_step_kernel(
    u: &[f64],
    t: f64,
    tau: f64,
    problem: &SemilinearProblem,
    tableau: &ExponentialTableau,
    mult: &TableauMultipliers,
) -> Result<Vec<f64>> {
    let op = problem.operator.as_ref();
    let s = tableau.stages();
    let corr = resolve_correction(&problem.correction, op, u, t)?;
    let z_n = corr.z(t)?;
    let w: Vec<f64> = u.iter().zip(&z_n).map(|(a, b)| a - b).collect();
    let what = op.forward(&w)?;

    let mut ghat: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut bacc: Vec<f64> = what.iter().zip(&mult.exp_full).map(|(x, e)| x * e).collect();
    for i in 0..s {
        let ti = t + tableau.nodes[i] * tau;
        // stage value U_i
        let stage_u = match &mult.exp_stage[i] {
            None => u.to_vec(),
            Some(exp_ci) => {
                let mut acc: Vec<f64> =
                    what.iter().zip(exp_ci).map(|(x, e)| x * e).collect();
                for (j, ahat) in mult.a_hat[i].iter().enumerate() {
                    if let Some(ah) = ahat {
                        for ((a, &gh), m) in acc.iter_mut().zip(&ghat[j]).zip(ah) {
                            *a += tau * m * gh;
                        }
                    }
                }
                let mut stage = op.inverse(&acc)?;
                let z_i = corr.z(ti)?;
                for (x, z) in stage.iter_mut().zip(&z_i) {
                    *x += z;
                }
                stage
            }
        };
        // G_i = f(t_i, U_i) + k(t_i)
        let mut g = (problem.nonlinearity)(ti, &stage_u);
        if g.len() != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: g.len() });
        }
        let k = corr.k(ti)?;
        for (gv, kv) in g.iter_mut().zip(&k) {
            *gv += kv;
        }
        let gh = op.forward(&g)?;
        if let Some(bh) = &mult.b_hat[i] {
            for ((a, &ghv), m) in bacc.iter_mut().zip(&gh).zip(bh) {
                *a += tau * m * ghv;
            }
        }
        ghat.push(gh);
    }
    let mut next = op.inverse(&bacc)?;
    let z_next = corr.z(t + tau)?;
    for (x, z) in next.iter_mut().zip(&z_next) {
        *x += z;
    }
    Ok(next)
}

/// One explicit exponential Runge–Kutta step in u-variables. Stages use the
/// c_i-scaled propagator e^{c_iτA}.
pub fn semilinear_step(
    u: &[f64],
    t: f64,
    tau: f64,
    problem: &SemilinearProblem,
    tableau: &ExponentialTableau,
    phi: &PhiEvaluator,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidStepSequence(format!("step {tau} must be positive")));
    }
    check_problem_dims(&problem.operator, u)?;
    debug_assert_eq!(phi.operator().dim(), problem.operator.dim());
    tableau.validate()?;
    let mult = assemble_tableau(&problem.operator, tableau, tau);
    semilinear_step_kernel(u, t, tau, problem, tableau, &mult)
}

/// One exponential Runge–Kutta step in w-variables.
pub fn semilinear_step_w(
    w: &[f64],
    t: f64,
    tau: f64,
    problem: &SemilinearProblem,
    tableau: &ExponentialTableau,
) -> Result<Vec<f64>> {
    check_problem_dims(&problem.operator, w)?;
    let op = problem.operator.as_ref();
    let CorrectionMode::Field(corr) = &problem.correction else {
        return Err(Error::InvalidCorrection("w-form needs a correction field".into()));
    };
    let mult = assemble_tableau(op, tableau, tau);
    let s = tableau.stages();
    let what = op.forward(w)?;
    let mut ghat: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut bacc: Vec<f64> = what.iter().zip(&mult.exp_full).map(|(x, e)| x * e).collect();
    for i in 0..s {
        let ti = t + tableau.nodes[i] * tau;
        let stage_w = match &mult.exp_stage[i] {
            None => w.to_vec(),
            Some(exp_ci) => {
                let mut acc: Vec<f64> =
                    what.iter().zip(exp_ci).map(|(x, e)| x * e).collect();
                for (j, ahat) in mult.a_hat[i].iter().enumerate() {
                    if let Some(ah) = ahat {
                        for ((a, &gh), m) in acc.iter_mut().zip(&ghat[j]).zip(ah) {
                            *a += tau * m * gh;
                        }
                    }
                }
                op.inverse(&acc)?
            }
        };
        let z_i = corr.z(ti)?;
        let u_i: Vec<f64> = stage_w.iter().zip(&z_i).map(|(a, b)| a + b).collect();
        let mut g = (problem.nonlinearity)(ti, &u_i);
        let k = corr.k(ti)?;
        for (gv, kv) in g.iter_mut().zip(&k) {
            *gv += kv;
        }
        let gh = op.forward(&g)?;
        if let Some(bh) = &mult.b_hat[i] {
            for ((a, &ghv), m) in bacc.iter_mut().zip(&gh).zip(bh) {
                *a += tau * m * ghv;
            }
        }
        ghat.push(gh);
    }
    op.inverse(&bacc)
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Cache per-τ multiplier assemblies (never changes results).
    pub use_cache: bool,
    /// Record a snapshot every k steps.
    pub snapshot_every: Option<usize>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { use_cache: true, snapshot_every: None }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: Vec<f64>,
    pub final_time: f64,
    pub snapshots: Vec<Snapshot>,
    pub steps_taken: usize,
}

pub enum ProblemRef<'a> {
    Linear(&'a LinearProblem),
    Semilinear(&'a SemilinearProblem),
}

/// Fold the appropriate step over the sequence. Multiplier assemblies are
/// cached per distinct τ value; constant sequences assemble once.
pub fn integrate(
    problem: ProblemRef<'_>,
    method: &Method,
    steps: &StepSequence,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    match (problem, method) {
        (ProblemRef::Linear(p), Method::Quadrature(w)) => integrate_linear(p, w, steps, opts),
        (ProblemRef::Linear(p), Method::Tableau(tb)) => {
            integrate_semilinear(&p.as_semilinear(), tb, steps, opts)
        }
        (ProblemRef::Semilinear(p), Method::Tableau(tb)) => {
            integrate_semilinear(p, tb, steps, opts)
        }
        (ProblemRef::Semilinear(_), Method::Quadrature(_)) => Err(Error::InvalidMethod(
            "a quadrature rule cannot integrate a semilinear problem; use a tableau".into(),
        )),
    }
}

pub fn integrate_linear(
    problem: &LinearProblem,
    weights: &WeightSet,
    steps: &StepSequence,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    check_problem_dims(&problem.operator, &problem.initial)?;
    let mut cache: HashMap<u64, Arc<QuadMultipliers>> = HashMap::new();
    let mut u = problem.initial.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    for (n, &tau) in steps.steps().iter().enumerate() {
        let mult = if opts.use_cache {
            cache
                .entry(tau.to_bits())
                .or_insert_with(|| Arc::new(assemble_quadrature(&problem.operator, weights, tau)))
                .clone()
        } else {
            Arc::new(assemble_quadrature(&problem.operator, weights, tau))
        };
        u = linear_step_kernel(&u, t, tau, problem, weights, &mult)?;
        t += tau;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::Diverged { step: n });
        }
        if let Some(k) = opts.snapshot_every {
            if k > 0 && (n + 1) % k == 0 {
                snapshots.push(Snapshot { step: n + 1, time: t, state: u.clone() });
            }
        }
    }
    Ok(Trajectory { final_state: u, final_time: t, snapshots, steps_taken: steps.len() })
}

pub fn integrate_semilinear(
    problem: &SemilinearProblem,
    tableau: &ExponentialTableau,
    steps: &StepSequence,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    check_problem_dims(&problem.operator, &problem.initial)?;
    tableau.validate()?;
    let mut cache: HashMap<u64, Arc<TableauMultipliers>> = HashMap::new();
    let mut u = problem.initial.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    for (n, &tau) in steps.steps().iter().enumerate() {
        let mult = if opts.use_cache {
            cache
                .entry(tau.to_bits())
                .or_insert_with(|| Arc::new(assemble_tableau(&problem.operator, tableau, tau)))
                .clone()
        } else {
            Arc::new(assemble_tableau(&problem.operator, tableau, tau))
        };
        u = semilinear_step_kernel(&u, t, tau, problem, tableau, &mult)?;
        t += tau;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::Diverged { step: n });
        }
        if let Some(k) = opts.snapshot_every {
            if k > 0 && (n + 1) % k == 0 {
                snapshots.push(Snapshot { step: n + 1, time: t, state: u.clone() });
            }
        }
    }
    Ok(Trajectory { final_state: u, final_time: t, snapshots, steps_taken: steps.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::operator::{build_laplacian_1d, from_dense_symmetric};
    use nalgebra::DMatrix;

    /// Zero correction field for homogeneous tests.
    struct ZeroCorrection(usize);

    impl Correction for ZeroCorrection {
        fn z(&self, _t: f64) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
        fn dz_dt(&self, _t: f64) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
        fn dz_op(&self, _t: f64) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
        fn strategy(&self) -> String {
            "analytic:zero".into()
        }
        fn is_stationary(&self) -> bool {
            true
        }
    }

    fn zero_mode(dim: usize) -> CorrectionMode {
        CorrectionMode::Field(Arc::new(ZeroCorrection(dim)))
    }

    #[test]
    fn step_sequences_validate() {
        let s = StepSequence::constant(1.0, 10).unwrap();
        assert_eq!(s.len(), 10);
        assert!((s.steps().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let s = StepSequence::constant_with_tau(0.5, 1.0 / 640.0).unwrap();
        assert_eq!(s.len(), 320);

        assert!(StepSequence::constant_with_tau(1.0, 0.3).is_err());
        assert!(StepSequence::custom(vec![0.5, -0.5, 1.0], 1.0).is_err());
        assert!(StepSequence::custom(vec![0.4, 0.4], 1.0).is_err());

        let q = StepSequence::quasi_uniform_random(1.0, 0.05, 0.5, 7).unwrap();
        assert!((q.steps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.alpha_realized() >= 0.5 - 1e-12);
        assert!(q.ratio_bound() <= 2.0 + 1e-12);
    }

    #[test]
    fn zero_steps_returns_initial() {
        let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(5).unwrap()).unwrap());
        let problem = LinearProblem {
            operator: op.clone(),
            source: SpaceTimeFn::one_d(|_, _| 0.0),
            correction: zero_mode(5),
            initial: vec![1.0, 2.0, 3.0, 2.0, 1.0],
            horizon: 0.0,
        };
        let w = crate::phi::solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
        let steps = StepSequence::custom(vec![], 0.0).unwrap();
        let traj = integrate_linear(&problem, &w, &steps, &Default::default()).unwrap();
        assert_eq!(traj.final_state, problem.initial);
    }

    #[test]
    fn vanishing_source_is_pure_semigroup_flow() {
        // f + k ≡ 0, z ≡ const: u₁ = e^{τA}(u₀ − z) + z
        let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(9).unwrap()).unwrap());
        struct ConstCorrection(Vec<f64>);
        impl Correction for ConstCorrection {
            fn z(&self, _t: f64) -> Result<Vec<f64>> {
                Ok(self.0.clone())
            }
            fn dz_dt(&self, _t: f64) -> Result<Vec<f64>> {
                Ok(vec![0.0; self.0.len()])
            }
            fn dz_op(&self, _t: f64) -> Result<Vec<f64>> {
                Ok(vec![0.0; self.0.len()])
            }
            fn strategy(&self) -> String {
                "analytic:const".into()
            }
        }
        let z = vec![0.7; 9];
        let problem = LinearProblem {
            operator: op.clone(),
            source: SpaceTimeFn::one_d(|_, _| 0.0),
            correction: CorrectionMode::Field(Arc::new(ConstCorrection(z.clone()))),
            initial: (0..9).map(|i| (i as f64 * 0.37).sin() + 1.0).collect(),
            horizon: 0.1,
        };
        let weights = crate::phi::solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
        let phi = PhiEvaluator::new(op.clone());
        let tau = 0.1;
        let got = linear_step(&problem.initial, 0.0, tau, &problem, &weights, &phi).unwrap();
        let shifted: Vec<f64> = problem.initial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let want: Vec<f64> = phi
            .semigroup(tau, &shifted)
            .unwrap()
            .iter()
            .zip(&z)
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn scalar_exponential_euler_matches_variation_of_constants() {
        // A = −1, f + k ≡ 1, z = 0: u₁ = e^{−τ}u₀ + τφ₁(−τ)
        let op = Arc::new(from_dense_symmetric(DMatrix::from_element(1, 1, -1.0), 1.0).unwrap());
        let problem = LinearProblem {
            operator: op.clone(),
            source: SpaceTimeFn::one_d(|_, _| 1.0),
            correction: zero_mode(1),
            initial: vec![2.0],
            horizon: 0.3,
        };
        let weights = crate::phi::solve_weights(&NodeSet::custom(vec![0.0]).unwrap()).unwrap();
        let phi = PhiEvaluator::new(op.clone());
        let tau = 0.3;
        let got = linear_step(&problem.initial, 0.0, tau, &problem, &weights, &phi).unwrap();
        let want = (-tau_f64()).exp() * 2.0 + tau * phi_scalar(1, -tau);
        assert!((got[0] - want).abs() < 1e-14);

        fn tau_f64() -> f64 {
            0.3
        }
    }

    #[test]
    fn semilinear_zero_data_reduces_to_semigroup() {
        let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(7).unwrap()).unwrap());
        let phi = PhiEvaluator::new(op.clone());
        let u0: Vec<f64> = (0..7).map(|i| ((i + 1) as f64 * 0.3).cos()).collect();
        for name in ["euler", "strehmel-weiner", "krogstad"] {
            let Method::Tableau(tb) = registry_get(name).unwrap() else { panic!() };
            let problem = SemilinearProblem {
                operator: op.clone(),
                nonlinearity: Arc::new(|_t, u| vec![0.0; u.len()]),
                correction: zero_mode(7),
                initial: u0.clone(),
                horizon: 0.05,
            };
            let got = semilinear_step(&u0, 0.0, 0.05, &problem, &tb, &phi).unwrap();
            let want = phi.semigroup(0.05, &u0).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-13, "{name}");
            }
        }
    }

    #[test]
    fn zero_operator_euler_degenerates_to_explicit_euler() {
        // f(t,u) = λu on a 1×1 zero operator: u₁ = u₀ + τλu₀ since φ₁(0) = 1
        let op = Arc::new(from_dense_symmetric(DMatrix::from_element(1, 1, 0.0), 1.0).unwrap());
        let lam = -0.8;
        let problem = SemilinearProblem {
            operator: op.clone(),
            nonlinearity: Arc::new(move |_t, u| vec![lam * u[0]]),
            correction: zero_mode(1),
            initial: vec![1.5],
            horizon: 0.1,
        };
        let Method::Tableau(tb) = registry_get("euler").unwrap() else { panic!() };
        let phi = PhiEvaluator::new(op.clone());
        let got = semilinear_step(&problem.initial, 0.0, 0.1, &problem, &tb, &phi).unwrap();
        let want = 1.5 + 0.1 * lam * 1.5;
        assert!((got[0] - want).abs() < 1e-15);
    }

    #[test]
    fn registry_displays() {
        let Method::Tableau(euler) = registry_get("euler").unwrap() else { panic!() };
        assert_eq!(euler.nodes, vec![0.0]);
        assert_eq!(euler.b, vec![PhiCombo(vec![(1, 1.0)])]);

        let Method::Tableau(sw) = registry_get("strehmel-weiner").unwrap() else { panic!() };
        assert_eq!(sw.nodes, vec![0.0, 0.5]);
        assert_eq!(sw.a[1], vec![PhiCombo(vec![(1, 0.5)])]);
        assert_eq!(sw.b, vec![PhiCombo(vec![]), PhiCombo(vec![(1, 1.0)])]);

        let Method::Tableau(kg) = registry_get("krogstad").unwrap() else { panic!() };
        assert_eq!(kg.nodes, vec![0.0, 0.5, 0.5, 1.0]);
        // row 4: a₄₁ = φ_{1,4} − 2φ_{2,4}, a₄₂ = 0, a₄₃ = 2φ_{2,4}
        assert_eq!(kg.a[3][0], PhiCombo(vec![(1, 1.0), (2, -2.0)]));
        assert!(kg.a[3][1].is_zero());
        assert_eq!(kg.a[3][2], PhiCombo(vec![(2, 2.0)]));
        // b row: φ₁ − 3φ₂ + 4φ₃, 2φ₂ − 4φ₃, 2φ₂ − 4φ₃, −φ₂ + 4φ₃
        assert_eq!(kg.b[0], PhiCombo(vec![(1, 1.0), (2, -3.0), (3, 4.0)]));
        assert_eq!(kg.b[1], PhiCombo(vec![(2, 2.0), (3, -4.0)]));
        assert_eq!(kg.b[2], PhiCombo(vec![(2, 2.0), (3, -4.0)]));
        assert_eq!(kg.b[3], PhiCombo(vec![(2, -1.0), (3, 4.0)]));

        for name in ["euler", "strehmel-weiner", "krogstad"] {
            let Method::Tableau(tb) = registry_get(name).unwrap() else { panic!() };
            tb.validate().unwrap();
        }

        assert!(matches!(registry_get("gauss-quadrature:2").unwrap(), Method::Quadrature(_)));
        assert!(matches!(registry_get("radau-quadrature:3").unwrap(), Method::Quadrature(_)));
        assert!(registry_get("unknown").is_err());
    }

    #[test]
    fn cache_is_transparent_and_custom_matches_constant() {
        let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(16).unwrap()).unwrap());
        let problem = LinearProblem {
            operator: op.clone(),
            source: SpaceTimeFn::one_d(|t, x| (t + x).sin()),
            correction: zero_mode(16),
            initial: (0..16).map(|i| (i as f64 / 7.0).sin()).collect(),
            horizon: 0.5,
        };
        let w = crate::phi::solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
        let constant = StepSequence::constant(0.5, 10).unwrap();
        let tau = constant.steps()[0];
        let custom = StepSequence::custom(vec![tau; 10], 0.5).unwrap();

        let a = integrate_linear(&problem, &w, &constant, &Default::default()).unwrap();
        let b = integrate_linear(&problem, &w, &custom, &Default::default()).unwrap();
        let c = integrate_linear(
            &problem,
            &w,
            &constant,
            &IntegrateOptions { use_cache: false, snapshot_every: None },
        )
        .unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.final_state, c.final_state);
    }

    #[test]
    fn divergence_is_reported_with_step_index() {
        // explicit treatment of an exploding nonlinearity
        let op = Arc::new(from_dense_symmetric(DMatrix::from_element(1, 1, 0.0), 1.0).unwrap());
        let problem = SemilinearProblem {
            operator: op.clone(),
            nonlinearity: Arc::new(|_t, u| vec![u[0] * u[0] * 1e6]),
            correction: zero_mode(1),
            initial: vec![10.0],
            horizon: 10.0,
        };
        let Method::Tableau(tb) = registry_get("euler").unwrap() else { panic!() };
        let steps = StepSequence::constant(10.0, 10).unwrap();
        let err = integrate_semilinear(&problem, &tb, &steps, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
