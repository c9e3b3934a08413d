//! Spec invariants: transform round-trips, stability bounds, scheme
//! equivalence, norm monotonicity, and correction consistency.

mod common;

use common::*;
use expint::correction::{build_chain, harmonic_extension, Correction, TraceSpec};
use expint::grid::{BcKind, Grid1D, Grid2D};
use expint::operator::{build_laplacian_1d, build_laplacian_2d, norm, NormKind};
use expint::phi::{phi_scalar, solve_weights, NodeSet, PhiEvaluator};
use expint::scheme::{
    integrate, linear_step, linear_step_w, registry_get, semilinear_step, semilinear_step_w,
    CorrectionMode, IntegrateOptions, Method, ProblemRef, StepSequence,
};
use proptest::prelude::*;

fn all_test_operators() -> Vec<expint::operator::DiscreteOperator> {
    vec![
        build_laplacian_1d(Grid1D::dirichlet(31).unwrap()).unwrap(),
        build_laplacian_1d(Grid1D::new(30, BcKind::Dirichlet, BcKind::Neumann).unwrap()).unwrap(),
        build_laplacian_2d(Grid2D::new(9).unwrap()).unwrap(),
    ]
}

#[test]
fn transform_round_trip_over_100_random_vectors() {
    for op in all_test_operators() {
        for seed in 0..100u64 {
            let v = rand_vec(op.dim(), seed + 1);
            let back = op.inverse(&op.forward(&v).unwrap()).unwrap();
            assert!(max_diff(&back, &v) <= 1e-12 * max_abs(&v));
        }
    }
}

#[test]
fn assembled_matrices_are_symmetric_in_the_mass_inner_product() {
    // entries via unit-vector probes: m_i A_ij == m_j A_ji exactly
    for op in all_test_operators() {
        let dim = op.dim();
        let mass = op.meta().mass.clone().unwrap_or_else(|| vec![1.0; dim]);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            cols.push(op.apply(&e).unwrap());
        }
        for i in 0..dim {
            for j in 0..dim {
                assert_eq!(mass[i] * cols[j][i], mass[j] * cols[i][j], "entry ({i},{j})");
            }
        }
    }
}

#[test]
fn eigenvalues_are_nonpositive() {
    for op in all_test_operators() {
        let max = op.eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max <= 0.0, "max eigenvalue {max}");
    }
}

#[test]
fn xalpha_norm_is_monotone_in_alpha_when_shifted() {
    // with ω = 1 + max λ every ω − λ_k ≥ 1, so α ↦ ‖Ã^α v‖ is nondecreasing
    let base = build_laplacian_1d(Grid1D::dirichlet(40).unwrap()).unwrap();
    let lam_max = base.eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let op = base.with_omega(1.0 + lam_max);
    for seed in 0..5 {
        let v = rand_vec(op.dim(), seed + 31);
        let mut prev = 0.0;
        for i in 0..=10 {
            let alpha = i as f64 / 10.0;
            let x = op.norm(&v, NormKind::XAlpha(alpha)).unwrap();
            assert!(
                x >= prev * (1.0 - 1e-12),
                "alpha {alpha}: {x} < previous {prev}"
            );
            prev = x;
        }
    }
}

#[test]
fn discrete_semigroup_stability_bounds() {
    // ‖e^{tA}‖₂ ≤ 1 and t^γ ‖Ã^γ e^{tA}‖₂ ≤ C with a single C ≤ 2 for γ = ½,
    // verified spectrally on log-spaced times in (0, 1]
    let op = build_laplacian_1d(Grid1D::dirichlet(512).unwrap()).unwrap();
    let mut fitted_c: f64 = 0.0;
    for i in 0..40 {
        let t = 10f64.powf(-4.0 + 4.0 * i as f64 / 39.0);
        let e_norm = op.eigenvalues().iter().map(|l| (t * l).exp()).fold(0.0, f64::max);
        assert!(e_norm <= 1.0 + 1e-15);
        let frac = op
            .eigenvalues()
            .iter()
            .map(|&l| t.sqrt() * (op.omega() - l).sqrt() * (t * l).exp())
            .fold(0.0, f64::max);
        fitted_c = fitted_c.max(frac);
    }
    assert!(fitted_c <= 2.0, "fitted stability constant {fitted_c}");
}

#[test]
fn weight_operator_norms_are_uniformly_bounded() {
    // Gauss s=2 on the n=512 Dirichlet Laplacian: max_k |b_i(τλ_k)| ≤ 1
    let op = build_laplacian_1d(Grid1D::dirichlet(512).unwrap()).unwrap();
    let w = solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
    for i in 0..25 {
        let tau = 10f64.powf(-4.0 + 4.0 * i as f64 / 24.0);
        for stage in 0..2 {
            let bound = op
                .eigenvalues()
                .iter()
                .map(|&l| w.weight_scalar(stage, tau * l).abs())
                .fold(0.0, f64::max);
            assert!(bound <= 1.0 + 1e-13, "τ={tau:e} stage {stage}: {bound}");
        }
    }
}

#[test]
fn one_step_error_scales_with_order_three_for_gauss2() {
    // local error of the s=2 rule behaves like τ^{s+1}; measured in L∞,
    // where the fractional smoothing gain β = 1/(2p) vanishes
    let fix = ex1(128);
    let weights = solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
    let phi = PhiEvaluator::new(fix.op.clone());
    let taus = [0.1, 0.05, 0.025, 0.0125];
    let mut errs = Vec::new();
    for &tau in &taus {
        let got = linear_step(&fix.problem.initial, 0.0, tau, &fix.problem, &weights, &phi)
            .unwrap();
        let exact = fix.exact.sample(tau, &fix.op.meta().coords).unwrap();
        let diff: Vec<f64> = got.iter().zip(&exact).map(|(a, b)| a - b).collect();
        errs.push(norm(&diff, NormKind::LInf, fix.op.meta(), None).unwrap());
    }
    // least-squares slope of ln e against ln τ
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!((slope - 3.0).abs() <= 0.1, "local-error slope {slope}, errors {errs:?}");
}

#[test]
fn u_form_and_w_form_agree_linear() {
    let fix = ex1(64);
    let weights = solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
    let phi = PhiEvaluator::new(fix.op.clone());
    let CorrectionMode::Field(corr) = &fix.problem.correction else { panic!() };
    let tau = 1.0 / 40.0;
    let mut u = fix.problem.initial.clone();
    let z0 = corr.z(0.0).unwrap();
    let mut w: Vec<f64> = u.iter().zip(&z0).map(|(a, b)| a - b).collect();
    let mut t = 0.0;
    for _ in 0..40 {
        u = linear_step(&u, t, tau, &fix.problem, &weights, &phi).unwrap();
        w = linear_step_w(&w, t, tau, &fix.problem, &weights).unwrap();
        t += tau;
        let z = corr.z(t).unwrap();
        let rebuilt: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a + b).collect();
        assert!(max_diff(&u, &rebuilt) <= 1e-12 * max_abs(&u).max(1.0), "t={t}");
    }
}

#[test]
fn u_form_and_w_form_agree_semilinear() {
    let fix = ex3(64);
    let phi = PhiEvaluator::new(fix.op.clone());
    let CorrectionMode::Field(corr) = &fix.problem.correction else { panic!() };
    for name in ["strehmel-weiner", "krogstad"] {
        let Method::Tableau(tb) = registry_get(name).unwrap() else { panic!() };
        let tau = 1.0 / 40.0;
        let mut u = fix.problem.initial.clone();
        let z0 = corr.z(0.0).unwrap();
        let mut w: Vec<f64> = u.iter().zip(&z0).map(|(a, b)| a - b).collect();
        let mut t = 0.0;
        for _ in 0..20 {
            u = semilinear_step(&u, t, tau, &fix.problem, &tb, &phi).unwrap();
            w = semilinear_step_w(&w, t, tau, &fix.problem, &tb).unwrap();
            t += tau;
            let z = corr.z(t).unwrap();
            let rebuilt: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a + b).collect();
            assert!(
                max_diff(&u, &rebuilt) <= 1e-12 * max_abs(&u).max(1.0),
                "{name} t={t}"
            );
        }
    }
}

#[test]
fn correction_time_derivative_matches_finite_differences() {
    // (z(t+h) − z(t−h))/2h vs dz_dt with observed order ≥ 1.9
    let fix1 = ex1(48);
    let analytic = ex1_affine_correction(&fix1.op, &fix1.boundary);
    let fix2 = ex2(48);
    let chain = build_chain(fix2.op.clone(), fix2.boundary.clone(), ex2_chain_data(), 1).unwrap();
    let corrections: [&dyn Correction; 2] = [&analytic, &chain];
    for corr in corrections {
        let t = 0.5;
        let hs = [1e-2, 5e-3, 2.5e-3];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let zp = corr.z(t + h).unwrap();
                let zm = corr.z(t - h).unwrap();
                let fd: Vec<f64> = zp.iter().zip(&zm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                let want = corr.dz_dt(t).unwrap();
                max_diff(&fd, &want)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order}, errors {errs:?}");
        }
    }
}

#[test]
fn harmonic_residual_is_tiny() {
    // ‖Δ_h z‖∞ ≤ 1e-10 ‖z‖∞ for the discrete harmonic extension, 1D and 2D
    // (the 2D cases cover both the dense and the conjugate-gradient path)
    let cases: Vec<(expint::operator::DiscreteOperator, expint::correction::BoundaryData)> = vec![
        (
            build_laplacian_1d(Grid1D::dirichlet(100).unwrap()).unwrap(),
            expint::correction::BoundaryData::stationary_dirichlet_1d(1.3, -0.4),
        ),
        (
            build_laplacian_2d(Grid2D::new(24).unwrap()).unwrap(),
            expint::correction::BoundaryData::stationary_dirichlet_2d(|x, y| {
                (2.0 * x + 0.3).sin() * (1.0 + y)
            }),
        ),
        (
            build_laplacian_2d(Grid2D::new(64).unwrap()).unwrap(),
            expint::correction::BoundaryData::stationary_dirichlet_2d(|x, y| {
                0.5 + x * x - y + (3.0 * y).cos()
            }),
        ),
    ];
    for (op, data) in &cases {
        let z = harmonic_extension(op, data, 0.0).unwrap();
        let g0;
        let trace = match data {
            expint::correction::BoundaryData::OneD { .. } => TraceSpec::OneD {
                left: data.value_1d(expint::correction::Side::Left, 0, 0.0).unwrap(),
                right: data.value_1d(expint::correction::Side::Right, 0, 0.0).unwrap(),
            },
            expint::correction::BoundaryData::TwoD { traces, .. } => {
                let g = traces[0].clone();
                g0 = move |x: f64, y: f64| g(0.0, x, y);
                TraceSpec::TwoD(&g0)
            }
        };
        let lift = expint::correction::boundary_lift(op, &trace).unwrap();
        let mut residual = op.apply(&z).unwrap();
        for (r, l) in residual.iter_mut().zip(&lift) {
            *r += l;
        }
        assert!(
            max_abs(&residual) <= 1e-10 * max_abs(&z),
            "dim {}: residual {:e} vs ‖z‖ {:e}",
            op.dim(),
            max_abs(&residual),
            max_abs(&z)
        );
    }
}

#[test]
fn trace_exactness_at_random_times() {
    // B z = b to 1e-12 at 10 pseudo-random times for the analytic fields
    let fix = ex1(32);
    let corr = ex1_affine_correction(&fix.op, &fix.boundary);
    let times: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7919).fract()).collect();
    corr.verify_trace(&fix.boundary, &times).unwrap();

    let fix3 = ex3(32);
    let heat = ex3_heat_correction(&fix3.op, &fix3.boundary);
    let times: Vec<f64> = times.iter().map(|t| 0.5 * t).collect();
    heat.verify_trace(&fix3.boundary, &times).unwrap();
}

#[test]
fn boundary_derivatives_validate() {
    let fix = ex1(16);
    fix.boundary.validate_derivatives(&[0.0, 0.4, 0.9]).unwrap();
    let fix3 = ex3(16);
    fix3.boundary.validate_derivatives(&[0.0, 0.2, 0.45]).unwrap();
}

#[test]
fn initial_trace_residual_flags_incompatible_data() {
    let fix = ex1(64);
    let r = expint::correction::initial_trace_residual(
        &fix.op,
        &expint::grid::SpaceTimeFn::one_d(|_, x| x * x + x),
        &fix.boundary,
    )
    .unwrap();
    assert!(r <= 1e-12, "compatible data should have zero residual, got {r:e}");
    let bad = expint::correction::initial_trace_residual(
        &fix.op,
        &expint::grid::SpaceTimeFn::one_d(|_, x| x * x + x + 0.3),
        &fix.boundary,
    )
    .unwrap();
    assert!(bad > 0.25);
}

#[test]
fn stepwise_identity_tracks_the_field_correction() {
    // z_n = u_n on stationary data approximates the same semi-discrete flow
    let fix = ex2(64);
    let w = solve_weights(&NodeSet::gauss(2).unwrap()).unwrap();
    let steps = StepSequence::constant(1.0, 100).unwrap();
    let field_run = integrate(
        ProblemRef::Linear(&fix.problem),
        &Method::Quadrature(w.clone()),
        &steps,
        &IntegrateOptions::default(),
    )
    .unwrap();
    let mut identity_problem = fix.problem.clone();
    identity_problem.correction =
        CorrectionMode::StepwiseIdentity { boundary: fix.boundary.clone() };
    let identity_run = integrate(
        ProblemRef::Linear(&identity_problem),
        &Method::Quadrature(w),
        &steps,
        &IntegrateOptions::default(),
    )
    .unwrap();
    let diff = max_diff(&field_run.final_state, &identity_run.final_state);
    assert!(
        diff <= 1e-4 * max_abs(&field_run.final_state),
        "identity and field corrections disagree by {diff:e}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_recurrence_random_arguments(z in -1e6f64..-1e-9, j in 1usize..=8) {
        let lhs = z * phi_scalar(j, z) + 1.0 / (1..j).map(|k| k as f64).product::<f64>().max(1.0);
        let rhs = phi_scalar(j - 1, z);
        let scale = (z * phi_scalar(j, z)).abs().max(1.0).max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn round_trip_arbitrary_vectors(seed in 0u64..1u64 << 32, n in 4usize..40) {
        let op = build_laplacian_1d(Grid1D::dirichlet(n).unwrap()).unwrap();
        let v = rand_vec(n, seed);
        let back = op.inverse(&op.forward(&v).unwrap()).unwrap();
        prop_assert!(max_diff(&back, &v) <= 1e-12 * max_abs(&v).max(1e-30));
    }

    #[test]
    fn custom_nodes_validated(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let r = NodeSet::custom(vec![a, b]);
        if a < b {
            prop_assert!(r.is_ok());
        } else {
            prop_assert!(r.is_err());
        }
    }
}
