//! Correction fields z(t,·) extending boundary data into the domain.
//!
//! Subtracting a smooth extension z of the boundary data turns the
//! non-homogeneous problem into a homogeneous one with modified source
//! g = f + k, k = Dz − ∂t z. Strategies:
//!
//! * `analytic:<id>` — closed-form expressions for z, ∂t z and Dz;
//! * `harmonic` — z(t) solves the discrete Laplace problem with trace b(t),
//!   so Dz = 0 and k = −∂t z (∂t z is the extension of b′ by linearity);
//! * `stationary` — harmonic extension of time-independent data, k = 0;
//! * `chain:<m>` — the recursive elliptic construction that enforces
//!   B D^{l−1}(f + k) = 0 for l = 1..m, raising the attainable order.
//!
//! Chains are built from time-differentiated boundary data propagated through
//! the same (time-independent) elliptic solves, so ∂t z is exact within
//! discretization error and no numerical time differentiation is needed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{BcKind, Coords, GridKind, SpaceTimeFn};
use crate::operator::DiscreteOperator;

/// A scalar function of time.
#[derive(Clone)]
pub struct TimeFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl TimeFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFn(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        TimeFn(Arc::new(move |_| c))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl std::fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "<fn(t)>")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// One side of a 1D boundary: operator kind, value function and as many time
/// derivatives as the correction chain order requires.
#[derive(Clone, Debug)]
pub struct BoundarySide {
    pub kind: BcKind,
    /// fns[q] is the q-th time derivative of the data (fns[0] = b itself).
    pub fns: Vec<TimeFn>,
}

/// Prescribed boundary data b(t) with its time derivatives.
pub enum BoundaryData {
    OneD { left: BoundarySide, right: BoundarySide, stationary: bool },
    /// Dirichlet trace g(t,x,y) on all four sides of the unit square;
    /// traces[q] is the q-th time derivative.
    TwoD { traces: Vec<Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>>, stationary: bool },
}

impl BoundaryData {
    pub fn dirichlet_1d(left: Vec<TimeFn>, right: Vec<TimeFn>) -> Self {
        BoundaryData::OneD {
            left: BoundarySide { kind: BcKind::Dirichlet, fns: left },
            right: BoundarySide { kind: BcKind::Dirichlet, fns: right },
            stationary: false,
        }
    }

    pub fn stationary_dirichlet_1d(alpha: f64, beta: f64) -> Self {
        BoundaryData::OneD {
            left: BoundarySide { kind: BcKind::Dirichlet, fns: vec![TimeFn::constant(alpha)] },
            right: BoundarySide { kind: BcKind::Dirichlet, fns: vec![TimeFn::constant(beta)] },
            stationary: true,
        }
    }

    /// Dirichlet value on the left, Neumann flux on the right.
    pub fn mixed_1d(left_value: Vec<TimeFn>, right_flux: Vec<TimeFn>) -> Self {
        BoundaryData::OneD {
            left: BoundarySide { kind: BcKind::Dirichlet, fns: left_value },
            right: BoundarySide { kind: BcKind::Neumann, fns: right_flux },
            stationary: false,
        }
    }

    pub fn dirichlet_2d(traces: Vec<Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>>) -> Self {
        BoundaryData::TwoD { traces, stationary: false }
    }

    pub fn stationary_dirichlet_2d(trace: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData::TwoD { traces: vec![Arc::new(move |_, x, y| trace(x, y))], stationary: true }
    }

    pub fn is_stationary(&self) -> bool {
        match self {
            BoundaryData::OneD { stationary, .. } => *stationary,
            BoundaryData::TwoD { stationary, .. } => *stationary,
        }
    }

    fn side(&self, side: Side) -> Result<&BoundarySide> {
        match self {
            BoundaryData::OneD { left, right, .. } => {
                Ok(if side == Side::Left { left } else { right })
            }
            BoundaryData::TwoD { .. } => {
                Err(Error::InsufficientData("1D side access on 2D boundary data".into()))
            }
        }
    }

    pub fn side_kind(&self, side: Side) -> Result<BcKind> {
        Ok(self.side(side)?.kind)
    }

    /// q-th time derivative of the data on a side. Stationary data has all
    /// derivatives ≡ 0 beyond those stored.
    pub fn value_1d(&self, side: Side, q: usize, t: f64) -> Result<f64> {
        let s = self.side(side)?;
        match s.fns.get(q) {
            Some(f) => Ok(f.eval(t)),
            None if self.is_stationary() => Ok(0.0),
            None => Err(Error::InsufficientData(format!(
                "boundary data provides {} time derivative(s), needed {q}",
                s.fns.len().saturating_sub(1)
            ))),
        }
    }

    pub fn pair_1d(&self, q: usize, t: f64) -> Result<(f64, f64)> {
        Ok((self.value_1d(Side::Left, q, t)?, self.value_1d(Side::Right, q, t)?))
    }

    fn trace_2d(&self, q: usize) -> Result<Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>> {
        match self {
            BoundaryData::TwoD { traces, stationary } => match traces.get(q) {
                Some(f) => Ok(f.clone()),
                None if *stationary => Ok(Arc::new(|_, _, _| 0.0)),
                None => Err(Error::InsufficientData(format!(
                    "2D boundary data provides {} time derivative(s), needed {q}",
                    traces.len().saturating_sub(1)
                ))),
            },
            BoundaryData::OneD { .. } => {
                Err(Error::InsufficientData("2D trace access on 1D boundary data".into()))
            }
        }
    }

    /// Spot-check that the stored derivatives agree with centered differences
    /// of the level below, to O(h²).
    pub fn validate_derivatives(&self, times: &[f64]) -> Result<()> {
        let h = 1e-5;
        match self {
            BoundaryData::OneD { left, right, .. } => {
                for sidefns in [left, right] {
                    for q in 1..sidefns.fns.len() {
                        for &t in times {
                            let fd = (sidefns.fns[q - 1].eval(t + h)
                                - sidefns.fns[q - 1].eval(t - h))
                                / (2.0 * h);
                            let val = sidefns.fns[q].eval(t);
                            let scale = val.abs().max(1.0);
                            if (fd - val).abs() > 1e-7 * scale {
                                return Err(Error::InvalidCorrection(format!(
                                    "derivative {q} inconsistent at t={t}: fd {fd:e} vs {val:e}"
                                )));
                            }
                        }
                    }
                }
                Ok(())
            }
            BoundaryData::TwoD { traces, .. } => {
                for q in 1..traces.len() {
                    for &t in times {
                        for (x, y) in [(0.3, 0.0), (1.0, 0.7), (0.0, 0.2)] {
                            let fd =
                                (traces[q - 1](t + h, x, y) - traces[q - 1](t - h, x, y))
                                    / (2.0 * h);
                            let val = traces[q](t, x, y);
                            if (fd - val).abs() > 1e-7 * val.abs().max(1.0) {
                                return Err(Error::InvalidCorrection(format!(
                                    "2D trace derivative {q} inconsistent at t={t}"
                                )));
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::OneD { stationary, .. } => {
                write!(f, "BoundaryData::OneD(stationary={stationary})")
            }
            BoundaryData::TwoD { stationary, .. } => {
                write!(f, "BoundaryData::TwoD(stationary={stationary})")
            }
        }
    }
}

/// Boundary values at a fixed time, in the shape the lift expects.
pub enum TraceSpec<'a> {
    /// Left value, and right value (Dirichlet) or right flux (Neumann).
    OneD { left: f64, right: f64 },
    TwoD(&'a dyn Fn(f64, f64) -> f64),
}

/// The boundary contribution ℓ so that D_h z = A z + ℓ for a field z whose
/// closure carries the given boundary values.
pub fn boundary_lift(op: &DiscreteOperator, trace: &TraceSpec) -> Result<Vec<f64>> {
    let meta = op.meta();
    let dim = op.dim();
    let mut lift = vec![0.0; dim];
    match (meta.kind, trace) {
        (GridKind::Interval { bc_left: BcKind::Dirichlet, bc_right }, TraceSpec::OneD { left, right }) => {
            let inv_dx2 = 1.0 / (meta.dx * meta.dx);
            lift[0] += left * inv_dx2;
            match bc_right {
                BcKind::Dirichlet => lift[dim - 1] += right * inv_dx2,
                // ghost-point closure: u_xx(1) ≈ (2u_N − 2u_{N+1})/dx² + 2g/dx
                BcKind::Neumann => lift[dim - 1] += 2.0 * right / meta.dx,
            }
            Ok(lift)
        }
        (GridKind::Square, TraceSpec::TwoD(g)) => {
            let n = (dim as f64).sqrt().round() as usize;
            let dx = meta.dx;
            let inv_dx2 = 1.0 / (dx * dx);
            for i in 1..=n {
                let xi = i as f64 * dx;
                lift[i - 1] += g(xi, 0.0) * inv_dx2; // bottom row, y=0 neighbor
                lift[(n - 1) * n + (i - 1)] += g(xi, 1.0) * inv_dx2; // top row
                lift[(i - 1) * n] += g(0.0, xi) * inv_dx2; // left column (y = xi)
                lift[(i - 1) * n + (n - 1)] += g(1.0, xi) * inv_dx2; // right column
            }
            Ok(lift)
        }
        _ => Err(Error::UnsupportedBoundary(
            "trace specification does not match the operator's grid".into(),
        )),
    }
}

/// Solve the discrete problem D_h x = rhs with boundary values `trace`,
/// i.e. A x = rhs − lift.
pub fn solve_with_trace(
    op: &DiscreteOperator,
    rhs: &[f64],
    trace: &TraceSpec,
) -> Result<Vec<f64>> {
    let lift = boundary_lift(op, trace)?;
    let b: Vec<f64> = rhs.iter().zip(&lift).map(|(r, l)| r - l).collect();
    op.solve(&b)
}

/// Discrete harmonic extension of the q-th time derivative of the data.
///
/// In 1D the extension is the affine interpolant in closed form; in 2D it
/// solves the sparse SPD system.
pub fn harmonic_extension_of(
    op: &DiscreteOperator,
    data: &BoundaryData,
    q: usize,
    t: f64,
) -> Result<Vec<f64>> {
    match op.meta().kind {
        GridKind::Interval { .. } => {
            let pair = data.pair_1d(q, t)?;
            affine_extension(op, pair)
        }
        GridKind::Square => {
            let g = data.trace_2d(q)?;
            let closure = move |x: f64, y: f64| g(t, x, y);
            solve_with_trace(op, &vec![0.0; op.dim()], &TraceSpec::TwoD(&closure))
        }
        GridKind::Synthetic => {
            Err(Error::UnsupportedBoundary("synthetic operator has no boundary".into()))
        }
    }
}

/// Harmonic extension of the boundary data itself at time `t`.
pub fn harmonic_extension(op: &DiscreteOperator, data: &BoundaryData, t: f64) -> Result<Vec<f64>> {
    harmonic_extension_of(op, data, 0, t)
}

/// 1D harmonic functions are affine: α + (β−α)x for Dirichlet–Dirichlet,
/// α + gx for a right Neumann flux g.
fn affine_extension(op: &DiscreteOperator, (left, right): (f64, f64)) -> Result<Vec<f64>> {
    let meta = op.meta();
    let GridKind::Interval { bc_right, .. } = meta.kind else {
        return Err(Error::UnsupportedBoundary("affine extension needs an interval".into()));
    };
    let slope = match bc_right {
        BcKind::Dirichlet => right - left,
        BcKind::Neumann => right,
    };
    let Coords::OneD(xs) = &meta.coords else {
        return Err(Error::UnsupportedBoundary("interval with non-1D coords".into()));
    };
    Ok(xs.iter().map(|&x| left + slope * x).collect())
}

/// A time-dependent correction field on the operator's state nodes.
///
/// Evaluation is pure; implementations are safe for concurrent use after
/// construction.
pub trait Correction: Send + Sync {
    /// z(t) on the state nodes.
    fn z(&self, t: f64) -> Result<Vec<f64>>;
    /// ∂t z(t).
    fn dz_dt(&self, t: f64) -> Result<Vec<f64>>;
    /// Dz(t) — the continuous-operator image for analytic fields, the
    /// discrete image for numerically constructed ones.
    fn dz_op(&self, t: f64) -> Result<Vec<f64>>;

    /// Source correction k = Dz − ∂t z.
    fn k(&self, t: f64) -> Result<Vec<f64>> {
        let dz = self.dz_op(t)?;
        let zt = self.dz_dt(t)?;
        Ok(dz.iter().zip(&zt).map(|(a, b)| a - b).collect())
    }

    /// Strategy tag: `analytic:<id>`, `harmonic`, `stationary`, `chain:<m>`.
    fn strategy(&self) -> String;

    fn is_stationary(&self) -> bool {
        false
    }

    /// Boundary traces (B z^{[l]}, B ż^{[l−1]}) with z^{[0]} = z, used by the
    /// compatibility check. None when the correction cannot provide level l.
    fn level_trace(&self, _l: usize, _t: f64) -> Option<((f64, f64), (f64, f64))> {
        None
    }
}

/// Correction given by closed-form expressions for z, ∂t z and Dz.
pub struct AnalyticCorrection {
    op: Arc<DiscreteOperator>,
    id: String,
    z: SpaceTimeFn,
    dz_dt: SpaceTimeFn,
    dz_op: SpaceTimeFn,
    /// ∂x z, used to verify the trace on a Neumann side.
    z_x: Option<SpaceTimeFn>,
}

/// Build an analytic correction and verify B z = b at the given spot times.
#[allow(clippy::too_many_arguments)]
pub fn analytic_correction(
    op: Arc<DiscreteOperator>,
    boundary: &BoundaryData,
    id: &str,
    z: SpaceTimeFn,
    dz_dt: SpaceTimeFn,
    dz_op: SpaceTimeFn,
    z_x: Option<SpaceTimeFn>,
    check_times: &[f64],
) -> Result<AnalyticCorrection> {
    let corr = AnalyticCorrection { op, id: id.to_string(), z, dz_dt, dz_op, z_x };
    corr.verify_trace(boundary, check_times)?;
    Ok(corr)
}

impl AnalyticCorrection {
    /// Check the boundary trace of z against the data at the given times;
    /// mismatch beyond 1e-10 is an invalid correction.
    pub fn verify_trace(&self, boundary: &BoundaryData, times: &[f64]) -> Result<()> {
        let meta = self.op.meta();
        for &t in times {
            match meta.kind {
                GridKind::Interval { bc_left: _, bc_right } => {
                    let left = boundary.value_1d(Side::Left, 0, t)?;
                    let zl = self.z.eval(t, 0.0, 0.0);
                    check_trace(zl, left, t, "x=0")?;
                    let right = boundary.value_1d(Side::Right, 0, t)?;
                    match bc_right {
                        BcKind::Dirichlet => check_trace(self.z.eval(t, 1.0, 0.0), right, t, "x=1")?,
                        BcKind::Neumann => {
                            if let Some(zx) = &self.z_x {
                                check_trace(zx.eval(t, 1.0, 0.0), right, t, "flux at x=1")?;
                            }
                        }
                    }
                }
                GridKind::Square => {
                    let g = boundary.trace_2d(0)?;
                    let n = (self.op.dim() as f64).sqrt().round() as usize;
                    let dx = meta.dx;
                    for i in 1..=n {
                        let xi = i as f64 * dx;
                        for (x, y) in [(xi, 0.0), (xi, 1.0), (0.0, xi), (1.0, xi)] {
                            check_trace(self.z.eval(t, x, y), g(t, x, y), t, "square side")?;
                        }
                    }
                }
                GridKind::Synthetic => {
                    return Err(Error::UnsupportedBoundary(
                        "analytic correction on synthetic operator".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

fn check_trace(got: f64, want: f64, t: f64, whr: &str) -> Result<()> {
    if (got - want).abs() > 1e-10 * (1.0 + want.abs()) {
        return Err(Error::InvalidCorrection(format!(
            "boundary trace mismatch at {whr}, t={t}: z gives {got:e}, data {want:e}"
        )));
    }
    Ok(())
}

impl Correction for AnalyticCorrection {
    fn z(&self, t: f64) -> Result<Vec<f64>> {
        self.z.sample(t, &self.op.meta().coords)
    }

    fn dz_dt(&self, t: f64) -> Result<Vec<f64>> {
        self.dz_dt.sample(t, &self.op.meta().coords)
    }

    fn dz_op(&self, t: f64) -> Result<Vec<f64>> {
        self.dz_op.sample(t, &self.op.meta().coords)
    }

    fn strategy(&self) -> String {
        format!("analytic:{}", self.id)
    }

    fn level_trace(&self, l: usize, t: f64) -> Option<((f64, f64), (f64, f64))> {
        if l != 1 {
            return None;
        }
        match self.op.meta().kind {
            GridKind::Interval { bc_left: BcKind::Dirichlet, bc_right: BcKind::Dirichlet } => {
                Some((
                    (self.dz_op.eval(t, 0.0, 0.0), self.dz_op.eval(t, 1.0, 0.0)),
                    (self.dz_dt.eval(t, 0.0, 0.0), self.dz_dt.eval(t, 1.0, 0.0)),
                ))
            }
            _ => None,
        }
    }
}

/// Numeric harmonic extension of the data; Dz = 0, k = −∂t z.
pub struct HarmonicCorrection {
    op: Arc<DiscreteOperator>,
    data: Arc<BoundaryData>,
    label: &'static str,
    frozen: OnceLock<Vec<f64>>,
}

pub fn harmonic_correction(
    op: Arc<DiscreteOperator>,
    data: Arc<BoundaryData>,
) -> HarmonicCorrection {
    HarmonicCorrection { op, data, label: "harmonic", frozen: OnceLock::new() }
}

/// The stationary shortcut: z = harmonic extension of time-independent data,
/// k = 0.
pub fn stationary_correction(
    op: Arc<DiscreteOperator>,
    data: Arc<BoundaryData>,
) -> Result<HarmonicCorrection> {
    if !data.is_stationary() {
        return Err(Error::InvalidCorrection(
            "stationary correction needs time-independent boundary data".into(),
        ));
    }
    Ok(HarmonicCorrection { op, data, label: "stationary", frozen: OnceLock::new() })
}

impl Correction for HarmonicCorrection {
    fn z(&self, t: f64) -> Result<Vec<f64>> {
        if self.data.is_stationary() {
            if let Some(z) = self.frozen.get() {
                return Ok(z.clone());
            }
            let z = harmonic_extension(&self.op, &self.data, 0.0)?;
            Ok(self.frozen.get_or_init(|| z).clone())
        } else {
            harmonic_extension(&self.op, &self.data, t)
        }
    }

    fn dz_dt(&self, t: f64) -> Result<Vec<f64>> {
        if self.data.is_stationary() {
            Ok(vec![0.0; self.op.dim()])
        } else {
            harmonic_extension_of(&self.op, &self.data, 1, t)
        }
    }

    fn dz_op(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.op.dim()])
    }

    fn strategy(&self) -> String {
        self.label.to_string()
    }

    fn is_stationary(&self) -> bool {
        self.data.is_stationary()
    }

    fn level_trace(&self, l: usize, t: f64) -> Option<((f64, f64), (f64, f64))> {
        if l != 1 {
            return None;
        }
        let dz = self.data.pair_1d(1, t).ok()?;
        Some(((0.0, 0.0), dz))
    }
}

/// Boundary traces of ∂_t^q D^r f needed to build a correction chain.
pub struct ChainData {
    /// (r, q, t) ↦ boundary pair of ∂_t^q D^r f at time t.
    pub f_trace: Arc<dyn Fn(usize, usize, f64) -> (f64, f64) + Send + Sync>,
    /// Largest available operator power r.
    pub max_operator_order: usize,
    /// Largest available time derivative q.
    pub max_time_derivative: usize,
}

struct ChainEval {
    z: Vec<f64>,
    dz_dt: Vec<f64>,
    /// levels[l-1] holds z^{[l]}, l = 1..m.
    levels: Vec<Vec<f64>>,
}

/// The recursive correction of order m: fields z^{[m]}, …, z^{[1]}, z with
/// D_h z^{[l]} = z^{[l+1]} and B z^{[l]} = b_l(t), where
/// b_l = −B(D^{l−1}f) + b'_{l−1}. The top field z^{[m]} is realized as the
/// harmonic extension of its trace.
pub struct CorrectionChain {
    op: Arc<DiscreteOperator>,
    data: Arc<BoundaryData>,
    chain: ChainData,
    m: usize,
    memo: Mutex<HashMap<u64, Arc<ChainEval>>>,
}

pub fn build_chain(
    op: Arc<DiscreteOperator>,
    boundary: Arc<BoundaryData>,
    chain: ChainData,
    m: usize,
) -> Result<CorrectionChain> {
    if m < 1 {
        return Err(Error::InvalidCorrection("chain order must be ≥ 1".into()));
    }
    if !matches!(op.meta().kind, GridKind::Interval { .. }) {
        return Err(Error::InsufficientData(
            "correction chains are implemented on interval grids".into(),
        ));
    }
    if chain.max_operator_order + 1 < m {
        return Err(Error::InsufficientData(format!(
            "chain order {m} needs boundary traces of D^{} f, have D^{}",
            m - 1,
            chain.max_operator_order
        )));
    }
    if chain.max_time_derivative < m {
        return Err(Error::InsufficientData(format!(
            "chain order {m} needs f-trace time derivatives up to {m}, have {}",
            chain.max_time_derivative
        )));
    }
    let built =
        CorrectionChain { op, data: boundary, chain, m, memo: Mutex::new(HashMap::new()) };
    // dry-run the modified data at a sample time to surface missing b-derivatives
    built.modified_trace(m, 1, 0.0)?;
    Ok(built)
}

impl CorrectionChain {
    pub fn order(&self) -> usize {
        self.m
    }

    /// q-th time derivative of the level-l boundary data b_l(t).
    fn modified_trace(&self, l: usize, q: usize, t: f64) -> Result<(f64, f64)> {
        if l == 0 {
            return self.data.pair_1d(q, t);
        }
        if l - 1 > self.chain.max_operator_order || q > self.chain.max_time_derivative {
            return Err(Error::InsufficientData(format!(
                "chain needs trace of ∂_t^{q} D^{} f, not provided",
                l - 1
            )));
        }
        let ft = (self.chain.f_trace)(l - 1, q, t);
        let prev = self.modified_trace(l - 1, q + 1, t)?;
        Ok((-ft.0 + prev.0, -ft.1 + prev.1))
    }

    fn eval(&self, t: f64) -> Result<Arc<ChainEval>> {
        if let Some(hit) = self.memo.lock().unwrap().get(&t.to_bits()) {
            return Ok(hit.clone());
        }
        let m = self.m;
        let solve_level = |rhs: &[f64], pair: (f64, f64)| -> Result<Vec<f64>> {
            solve_with_trace(&self.op, rhs, &TraceSpec::OneD { left: pair.0, right: pair.1 })
        };
        // value chain
        let mut levels: Vec<Vec<f64>> = vec![Vec::new(); m];
        levels[m - 1] = affine_extension(&self.op, self.modified_trace(m, 0, t)?)?;
        for l in (1..m).rev() {
            levels[l - 1] = solve_level(&levels[l], self.modified_trace(l, 0, t)?)?;
        }
        let z = solve_level(&levels[0], self.modified_trace(0, 0, t)?)?;
        // time-derivative chain: same solves on differentiated data
        let mut dot = affine_extension(&self.op, self.modified_trace(m, 1, t)?)?;
        for l in (1..m).rev() {
            dot = solve_level(&dot, self.modified_trace(l, 1, t)?)?;
        }
        let dz_dt = solve_level(&dot, self.modified_trace(0, 1, t)?)?;

        let entry = Arc::new(ChainEval { z, dz_dt, levels });
        let mut memo = self.memo.lock().unwrap();
        if memo.len() > 8192 {
            memo.clear();
        }
        memo.insert(t.to_bits(), entry.clone());
        Ok(entry)
    }

    /// Interior values of z^{[l]} at time t, 1 ≤ l ≤ m (test support).
    pub fn level(&self, l: usize, t: f64) -> Result<Vec<f64>> {
        assert!((1..=self.m).contains(&l));
        Ok(self.eval(t)?.levels[l - 1].clone())
    }

    /// Boundary data b_l(t) the level was solved with.
    pub fn level_boundary(&self, l: usize, t: f64) -> Result<(f64, f64)> {
        self.modified_trace(l, 0, t)
    }
}

impl Correction for CorrectionChain {
    fn z(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.eval(t)?.z.clone())
    }

    fn dz_dt(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.eval(t)?.dz_dt.clone())
    }

    /// D_h z = z^{[1]} exactly, by construction of the solve.
    fn dz_op(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.eval(t)?.levels[0].clone())
    }

    fn strategy(&self) -> String {
        format!("chain:{}", self.m)
    }

    fn level_trace(&self, l: usize, t: f64) -> Option<((f64, f64), (f64, f64))> {
        if l == 0 || l > self.m {
            return None;
        }
        let zl = self.modified_trace(l, 0, t).ok()?;
        let dzp = self.modified_trace(l - 1, 1, t).ok()?;
        Some((zl, dzp))
    }
}

/// Max boundary-trace magnitude of D^{l−1}(f + k)(t) — the hypothesis of the
/// superconvergence result. `f_trace` maps l to the boundary pair of D^{l−1}f.
///
/// A small residual certifies B D^{l−1}(f+k) = 0; an O(‖f‖) residual explains
/// the reduced order of a correction that only matches the boundary values.
pub fn verify_compatibility(
    correction: &dyn Correction,
    f_trace: &dyn Fn(usize, f64) -> (f64, f64),
    t: f64,
    l: usize,
) -> Result<f64> {
    let (zl, dzp) = correction.level_trace(l, t).ok_or_else(|| {
        Error::InsufficientData(format!(
            "correction `{}` cannot provide level-{l} traces",
            correction.strategy()
        ))
    })?;
    let ft = f_trace(l, t);
    let r_left = (ft.0 + zl.0 - dzp.0).abs();
    let r_right = (ft.1 + zl.1 - dzp.1).abs();
    Ok(r_left.max(r_right))
}

/// Residual of the initial-trace compatibility B u₀ = b(0), evaluated from
/// the initial expression at the boundary (one-sided O(dx²) difference for a
/// Neumann side). Callers warn rather than error on violation.
pub fn initial_trace_residual(
    op: &DiscreteOperator,
    initial: &SpaceTimeFn,
    data: &BoundaryData,
) -> Result<f64> {
    match op.meta().kind {
        GridKind::Interval { bc_right, .. } => {
            let left = (initial.eval(0.0, 0.0, 0.0) - data.value_1d(Side::Left, 0, 0.0)?).abs();
            let right = match bc_right {
                BcKind::Dirichlet => {
                    (initial.eval(0.0, 1.0, 0.0) - data.value_1d(Side::Right, 0, 0.0)?).abs()
                }
                BcKind::Neumann => {
                    let h = op.meta().dx;
                    let fd = (3.0 * initial.eval(0.0, 1.0, 0.0)
                        - 4.0 * initial.eval(0.0, 1.0 - h, 0.0)
                        + initial.eval(0.0, 1.0 - 2.0 * h, 0.0))
                        / (2.0 * h);
                    (fd - data.value_1d(Side::Right, 0, 0.0)?).abs()
                }
            };
            Ok(left.max(right))
        }
        GridKind::Square => {
            let g = data.trace_2d(0)?;
            let n = (op.dim() as f64).sqrt().round() as usize;
            let dx = op.meta().dx;
            let mut worst: f64 = 0.0;
            for i in 1..=n {
                let xi = i as f64 * dx;
                for (x, y) in [(xi, 0.0), (xi, 1.0), (0.0, xi), (1.0, xi)] {
                    worst = worst.max((initial.eval(0.0, x, y) - g(0.0, x, y)).abs());
                }
            }
            Ok(worst)
        }
        GridKind::Synthetic => Ok(0.0),
    }
}
