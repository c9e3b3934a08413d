#![allow(dead_code)]

//! Shared fixtures: the 1D test problems and small helpers.

use std::f64::consts::PI;
use std::sync::Arc;

use expint::correction::{
    analytic_correction, AnalyticCorrection, BoundaryData, ChainData, TimeFn,
};
use expint::grid::{Grid1D, SpaceTimeFn};
use expint::operator::{build_laplacian_1d, DiscreteOperator};
use expint::scheme::{CorrectionMode, LinearProblem, SemilinearProblem};

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
    // xorshift; good enough for test data
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// u_t = u_xx + (x²+x−3)e^t, u(t,0) = 1−e^t, u(t,1) = 1+e^t,
/// u(0,x) = x²+x, exact u = 1 + (x²+x−1)e^t.
pub struct Ex1 {
    pub op: Arc<DiscreteOperator>,
    pub boundary: Arc<BoundaryData>,
    pub problem: LinearProblem,
    pub exact: SpaceTimeFn,
}

pub fn ex1(n: usize) -> Ex1 {
    let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(n).unwrap()).unwrap());
    let boundary = Arc::new(BoundaryData::dirichlet_1d(
        vec![
            TimeFn::new(|t| 1.0 - t.exp()),
            TimeFn::new(|t| -t.exp()),
            TimeFn::new(|t| -t.exp()),
        ],
        vec![
            TimeFn::new(|t| 1.0 + t.exp()),
            TimeFn::new(|t| t.exp()),
            TimeFn::new(|t| t.exp()),
        ],
    ));
    let corr = ex1_affine_correction(&op, &boundary);
    let problem = LinearProblem {
        operator: op.clone(),
        source: SpaceTimeFn::one_d(|t, x| (x * x + x - 3.0) * t.exp()),
        correction: CorrectionMode::Field(Arc::new(corr)),
        initial: match &op.meta().coords {
            expint::grid::Coords::OneD(xs) => xs.iter().map(|&x| x * x + x).collect(),
            _ => unreachable!(),
        },
        horizon: 1.0,
    };
    Ex1 {
        op,
        boundary,
        problem,
        exact: SpaceTimeFn::one_d(|t, x| 1.0 + (x * x + x - 1.0) * t.exp()),
    }
}

/// The affine-in-x correction z = 1 + (2x−1)e^t for ex1 (Δz = 0).
pub fn ex1_affine_correction(
    op: &Arc<DiscreteOperator>,
    boundary: &Arc<BoundaryData>,
) -> AnalyticCorrection {
    analytic_correction(
        op.clone(),
        boundary,
        "affine",
        SpaceTimeFn::one_d(|t, x| 1.0 + (2.0 * x - 1.0) * t.exp()),
        SpaceTimeFn::one_d(|t, x| (2.0 * x - 1.0) * t.exp()),
        SpaceTimeFn::one_d(|_, _| 0.0),
        None,
        &[0.0, 0.31, 0.77, 1.0],
    )
    .unwrap()
}

/// u_t = u_xx + (−2+12x−12x²+x²(1−x)²)e^t, u(t,0) = 1, u(t,1) = 2,
/// u(0,x) = 1 + x + x²(1−x)².
pub struct Ex2 {
    pub op: Arc<DiscreteOperator>,
    pub boundary: Arc<BoundaryData>,
    pub problem: LinearProblem,
}

pub fn ex2_source(t: f64, x: f64) -> f64 {
    (-2.0 + 12.0 * x - 12.0 * x * x + x * x * (1.0 - x) * (1.0 - x)) * t.exp()
}

pub fn ex2(n: usize) -> Ex2 {
    let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(n).unwrap()).unwrap());
    let boundary = Arc::new(BoundaryData::stationary_dirichlet_1d(1.0, 2.0));
    let corr = ex2_affine_correction(&op, &boundary);
    let problem = LinearProblem {
        operator: op.clone(),
        source: SpaceTimeFn::one_d(ex2_source),
        correction: CorrectionMode::Field(Arc::new(corr)),
        initial: match &op.meta().coords {
            expint::grid::Coords::OneD(xs) => {
                xs.iter().map(|&x| 1.0 + x + x * x * (1.0 - x) * (1.0 - x)).collect()
            }
            _ => unreachable!(),
        },
        horizon: 1.0,
    };
    Ex2 { op, boundary, problem }
}

pub fn ex2_affine_correction(
    op: &Arc<DiscreteOperator>,
    boundary: &Arc<BoundaryData>,
) -> AnalyticCorrection {
    analytic_correction(
        op.clone(),
        boundary,
        "affine",
        SpaceTimeFn::one_d(|_, x| 1.0 + x),
        SpaceTimeFn::one_d(|_, _| 0.0),
        SpaceTimeFn::one_d(|_, _| 0.0),
        None,
        &[0.0, 0.31, 0.77, 1.0],
    )
    .unwrap()
}

/// The quadratic correction z = 1 + (1−e^t)x + e^t x² (Δz = 2e^t).
pub fn ex2_quadratic_correction(
    op: &Arc<DiscreteOperator>,
    boundary: &Arc<BoundaryData>,
) -> AnalyticCorrection {
    analytic_correction(
        op.clone(),
        boundary,
        "quadratic",
        SpaceTimeFn::one_d(|t, x| 1.0 + (1.0 - t.exp()) * x + t.exp() * x * x),
        SpaceTimeFn::one_d(|t, x| (x * x - x) * t.exp()),
        SpaceTimeFn::one_d(|t, _| 2.0 * t.exp()),
        None,
        &[0.0, 0.31, 0.77, 1.0],
    )
    .unwrap()
}

/// Boundary traces of ∂_t^q D^r f for the ex2 chain: f and all its time
/// derivatives share the e^t factor.
pub fn ex2_chain_data() -> ChainData {
    ChainData {
        f_trace: Arc::new(|r, _q, t| match r {
            // f(t,0) = f(t,1) = −2e^t, and ∂_t^q just repeats the e^t factor
            0 => (-2.0 * t.exp(), -2.0 * t.exp()),
            // Df = f_xx = (14 − 36x + 12x²)e^t
            1 => (14.0 * t.exp(), -10.0 * t.exp()),
            _ => unreachable!("ex2 chain data provides r ≤ 1"),
        }),
        max_operator_order: 1,
        max_time_derivative: 6,
    }
}

/// u_t = u_xx + u², u(t,0) = 1−e^{−π²t}, u(t,1) = 1+e^{−π²t},
/// u(0,x) = 1 + sin(π(x−1/2)), horizon 0.5.
pub struct Ex3 {
    pub op: Arc<DiscreteOperator>,
    pub boundary: Arc<BoundaryData>,
    pub problem: SemilinearProblem,
}

pub fn ex3(n: usize) -> Ex3 {
    let op = Arc::new(build_laplacian_1d(Grid1D::dirichlet(n).unwrap()).unwrap());
    let pp = PI * PI;
    let boundary = Arc::new(BoundaryData::dirichlet_1d(
        vec![
            TimeFn::new(move |t| 1.0 - (-pp * t).exp()),
            TimeFn::new(move |t| pp * (-pp * t).exp()),
            TimeFn::new(move |t| -pp * pp * (-pp * t).exp()),
        ],
        vec![
            TimeFn::new(move |t| 1.0 + (-pp * t).exp()),
            TimeFn::new(move |t| -pp * (-pp * t).exp()),
            TimeFn::new(move |t| pp * pp * (-pp * t).exp()),
        ],
    ));
    let corr = ex3_heat_correction(&op, &boundary);
    let problem = SemilinearProblem {
        operator: op.clone(),
        nonlinearity: Arc::new(|_t, u| u.iter().map(|v| v * v).collect()),
        correction: CorrectionMode::Field(Arc::new(corr)),
        initial: match &op.meta().coords {
            expint::grid::Coords::OneD(xs) => {
                xs.iter().map(|&x| 1.0 + (PI * (x - 0.5)).sin()).collect()
            }
            _ => unreachable!(),
        },
        horizon: 0.5,
    };
    Ex3 { op, boundary, problem }
}

/// Correction satisfying z_t = z_xx (k = 0): z = 1 + e^{−π²t} sin(π(x−1/2)).
pub fn ex3_heat_correction(
    op: &Arc<DiscreteOperator>,
    boundary: &Arc<BoundaryData>,
) -> AnalyticCorrection {
    let pp = PI * PI;
    analytic_correction(
        op.clone(),
        boundary,
        "heat",
        SpaceTimeFn::one_d(move |t, x| 1.0 + (-pp * t).exp() * (PI * (x - 0.5)).sin()),
        SpaceTimeFn::one_d(move |t, x| -pp * (-pp * t).exp() * (PI * (x - 0.5)).sin()),
        SpaceTimeFn::one_d(move |t, x| -pp * (-pp * t).exp() * (PI * (x - 0.5)).sin()),
        None,
        &[0.0, 0.2, 0.5],
    )
    .unwrap()
}

/// Harmonic correction z = 1 + (2x−1)e^{−π²t} (z_xx = 0).
pub fn ex3_harmonic_correction(
    op: &Arc<DiscreteOperator>,
    boundary: &Arc<BoundaryData>,
) -> AnalyticCorrection {
    let pp = PI * PI;
    analytic_correction(
        op.clone(),
        boundary,
        "harmonic",
        SpaceTimeFn::one_d(move |t, x| 1.0 + (2.0 * x - 1.0) * (-pp * t).exp()),
        SpaceTimeFn::one_d(move |t, x| -pp * (2.0 * x - 1.0) * (-pp * t).exp()),
        SpaceTimeFn::one_d(|_, _| 0.0),
        None,
        &[0.0, 0.2, 0.5],
    )
    .unwrap()
}
