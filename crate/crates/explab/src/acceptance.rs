//! The acceptance suite: eight criteria pinning the convergence tables and
//! property bundles, each reporting pass/fail with detail lines.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use expint::correction::verify_compatibility;
use expint::grid::{Grid1D, Grid2D};
use expint::operator::{build_laplacian_1d, build_laplacian_2d, norm, NormKind};
use expint::phi::{check_weak_order, phi_scalar, solve_weights, NodeSet, PhiEvaluator};
use expint::scheme::{
    integrate, linear_step, linear_step_w, registry_get, semilinear_step, semilinear_step_w,
    CorrectionMode, IntegrateOptions, Method, StepSequence,
};

use crate::problems::{assemble, build_problem, AnyProblem};
use crate::report::ConvergenceReport;
use crate::sweep::{parse_norms, run_sweep, SweepConfig};
use crate::LabError;

#[derive(Debug, Clone)]
pub struct AcceptanceOptions {
    pub cache_dir: Option<PathBuf>,
    pub parallel: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            cache_dir: Some(PathBuf::from(".explab-cache")),
            parallel: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2).min(8),
        }
    }
}

#[derive(Debug)]
pub struct CriterionOutcome {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
    pub seconds: f64,
}

pub const CRITERIA: [&str; 8] = [
    "ex1: Gauss s=2 with analytic correction, orders 3.5/3.25/3.0 in L1/L2/Linf",
    "ex2: affine correction caps at order 3+1/(2p); chain correction restores order 4",
    "ex3: heat correction, L2 orders 1/2/4 for Euler/Strehmel-Weiner/Krogstad",
    "ex3: X_0.5 norm order reduction (Strehmel-Weiner 1.8, Krogstad 3.8)",
    "ex4: oblique boundary, Krogstad in the preasymptotic band [3.4, 3.9]",
    "ex5: 2D numeric harmonic correction, Krogstad increasing toward order 4",
    "property suites (phi, weights, oracles, equivalence, compatibility)",
    "ex1: quasi-uniform random steps (alpha=0.5) keep global order >= 2.8",
];

struct Check {
    details: Vec<String>,
    passed: bool,
}

impl Check {
    fn new() -> Self {
        Self { details: Vec::new(), passed: true }
    }

    fn require(&mut self, ok: bool, msg: String) {
        self.details.push(format!("{} {msg}", if ok { "ok  " } else { "FAIL" }));
        self.passed &= ok;
    }

    fn info(&mut self, msg: String) {
        self.details.push(format!("     {msg}"));
    }
}

fn band(x: f64, center: f64, half_width: f64) -> bool {
    (x - center).abs() <= half_width + 1e-12
}

fn ladder(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start / (1u64 << i) as f64).collect()
}

fn sweep(
    problem_id: &str,
    method: &str,
    correction: &str,
    steps: Vec<f64>,
    norms: &str,
    grid_n: usize,
    opts: &AcceptanceOptions,
) -> Result<ConvergenceReport, LabError> {
    let spec = build_problem(problem_id)?;
    run_sweep(
        &spec,
        &SweepConfig {
            method: method.into(),
            correction: correction.into(),
            steps,
            norms: parse_norms(norms)?,
            grid_n,
            parallel: opts.parallel,
            reference_override: None,
            full_reference: false,
            cache_dir: opts.cache_dir.clone(),
            floor_check: true,
        },
    )
}

fn last_order(report: &ConvergenceReport, norm_idx: usize) -> Option<f64> {
    report.rows.last()?.orders.get(norm_idx).copied().flatten()
}

fn order_at(report: &ConvergenceReport, row: usize, norm_idx: usize) -> Option<f64> {
    report.rows.get(row)?.orders.get(norm_idx).copied().flatten()
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>()
}

pub fn run_criterion(index: usize, opts: &AcceptanceOptions) -> CriterionOutcome {
    let started = Instant::now();
    let mut check = Check::new();
    let result = match index {
        1 => criterion1(&mut check, opts),
        2 => criterion2(&mut check, opts),
        3 => criterion3(&mut check, opts),
        4 => criterion4(&mut check, opts),
        5 => criterion5(&mut check, opts),
        6 => criterion6(&mut check, opts),
        7 => criterion7(&mut check, opts),
        8 => criterion8(&mut check, opts),
        _ => Err(LabError::BadConfig(format!("criterion index {index} out of 1..=8"))),
    };
    let seconds = started.elapsed().as_secs_f64();
    if let Err(e) = result {
        check.require(false, format!("criterion aborted: {e}"));
    }
    // stated runtime limits
    match index {
        1 => check.require(seconds <= 30.0, format!("runtime {seconds:.1}s <= 30s")),
        3 => check.require(seconds <= 60.0, format!("runtime {seconds:.1}s <= 60s")),
        6 => check.require(seconds <= 180.0, format!("runtime {seconds:.1}s <= 180s")),
        _ => {}
    }
    CriterionOutcome {
        index,
        name: CRITERIA[index - 1],
        passed: check.passed,
        details: check.details,
        seconds,
    }
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionOutcome> {
    (1..=CRITERIA.len()).map(|i| run_criterion(i, opts)).collect()
}

fn criterion1(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    let report = sweep(
        "ex1",
        "gauss-quadrature:2",
        "analytic:affine",
        ladder(0.1, 5),
        "l1,l2,linf",
        512,
        opts,
    )?;
    let targets = [("L1", 3.50), ("L2", 3.25), ("Linf", 3.00)];
    for (i, (label, want)) in targets.iter().enumerate() {
        let got = last_order(&report, i).unwrap_or(f64::NAN);
        check.require(
            band(got, *want, 0.15),
            format!("{label} last-row order {got:.3} within {want} +- 0.15"),
        );
    }
    let linf_err = report.rows.last().and_then(|r| r.errors[2]).unwrap_or(f64::NAN);
    check.require(
        (2.0125e-9..=8.05e-9).contains(&linf_err),
        format!("Linf error at tau=6.25e-3 is {linf_err:.3e}, within 2x of 4.025e-9"),
    );
    Ok(())
}

fn criterion2(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    let steps = ladder(0.05, 5);
    let affine =
        sweep("ex2", "gauss-quadrature:2", "analytic:affine", steps.clone(), "l1,l2,linf", 512, opts)?;
    let linf = last_order(&affine, 2).unwrap_or(f64::NAN);
    check.require(
        band(linf, 3.0, 0.15),
        format!("affine correction: Linf last-row order {linf:.3} within 3.0 +- 0.15"),
    );
    let l1 = last_order(&affine, 0).unwrap_or(f64::NAN);
    check.require(
        band(l1, 3.5, 0.15),
        format!("affine correction: L1 last-row order {l1:.3} within 3.5 +- 0.15"),
    );

    let chain = sweep("ex2", "gauss-quadrature:2", "chain:1", steps, "l1,l2,linf", 512, opts)?;
    for (i, label) in ["L1", "L2", "Linf"].iter().enumerate() {
        let got = last_order(&chain, i).unwrap_or(f64::NAN);
        check.require(
            band(got, 4.0, 0.1),
            format!("chain correction: {label} last-row order {got:.3} within 4.0 +- 0.1"),
        );
    }
    let l2_err = chain.rows.last().and_then(|r| r.errors[1]).unwrap_or(f64::NAN);
    check.require(
        (8.948e-12 / 3.0..=8.948e-12 * 3.0).contains(&l2_err),
        format!("chain correction: L2 error at tau=3.125e-3 is {l2_err:.3e}, within 3x of 8.948e-12"),
    );
    if chain.rows.last().map(|r| r.flagged.iter().any(|&f| f)).unwrap_or(false) {
        check.info("finest chain row sits at the estimated floor (flag permitted)".into());
    }
    Ok(())
}

fn criterion3(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    let targets = [("euler", 1.0, 0.1), ("strehmel-weiner", 2.0, 0.1), ("krogstad", 4.0, 0.15)];
    for (method, want, tol) in targets {
        let report =
            sweep("ex3", method, "analytic:heat", ladder(0.05, 5), "l2", 512, opts)?;
        let got = last_order(&report, 0).unwrap_or(f64::NAN);
        check.require(
            band(got, want, tol),
            format!("{method}: L2 finest-pair order {got:.3} within {want} +- {tol}"),
        );
    }
    Ok(())
}

fn criterion4(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    let targets = [("euler", 1.0, 0.1), ("strehmel-weiner", 1.8, 0.15), ("krogstad", 3.8, 0.15)];
    for (method, want, tol) in targets {
        let report =
            sweep("ex3", method, "analytic:harmonic", ladder(0.025, 5), "xalpha:0.5", 512, opts)?;
        let got = last_order(&report, 0).unwrap_or(f64::NAN);
        check.require(
            band(got, want, tol),
            format!("{method}: X_0.5 finest-pair order {got:.3} within {want} +- {tol}"),
        );
    }
    Ok(())
}

fn criterion5(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    for correction in ["analytic:heat", "analytic:harmonic"] {
        for (method, want, tol) in [("euler", 1.0, 0.1), ("strehmel-weiner", 2.0, 0.1)] {
            let report = sweep("ex4", method, correction, ladder(0.05, 5), "l2", 256, opts)?;
            let got = last_order(&report, 0).unwrap_or(f64::NAN);
            check.require(
                band(got, want, tol),
                format!("{correction} {method}: L2 order {got:.3} within {want} +- {tol}"),
            );
        }
        let report = sweep("ex4", "krogstad", correction, ladder(0.05, 5), "l2", 256, opts)?;
        for row in [3, 4] {
            let got = order_at(&report, row, 0).unwrap_or(f64::NAN);
            check.require(
                (3.4..=3.9).contains(&got),
                format!("{correction} krogstad: order {got:.3} at pair {row} within [3.4, 3.9]"),
            );
        }
    }
    Ok(())
}

fn criterion6(check: &mut Check, opts: &AcceptanceOptions) -> Result<(), LabError> {
    for (method, want, tol) in [("euler", 1.0, 0.15), ("strehmel-weiner", 2.0, 0.15)] {
        let report = sweep("ex5", method, "harmonic", ladder(0.0125, 5), "l2", 64, opts)?;
        let got = last_order(&report, 0).unwrap_or(f64::NAN);
        check.require(
            band(got, want, tol),
            format!("{method}: L2 finest-pair order {got:.3} within {want} +- {tol}"),
        );
    }
    let report = sweep("ex5", "krogstad", "harmonic", ladder(0.0125, 5), "l2", 64, opts)?;
    let finest = last_order(&report, 0).unwrap_or(f64::NAN);
    let previous = order_at(&report, report.rows.len() - 2, 0).unwrap_or(f64::NAN);
    check.require(finest >= 3.7, format!("krogstad: finest-pair order {finest:.3} >= 3.7"));
    check.require(
        finest >= previous - 1e-9,
        format!("krogstad: order increases toward 4 ({previous:.3} -> {finest:.3})"),
    );
    Ok(())
}

fn criterion7(check: &mut Check, _opts: &AcceptanceOptions) -> Result<(), LabError> {
    // phi recurrence and series consistency
    let mut worst: f64 = 0.0;
    let mut z = -1e6;
    while z < -1e-6 {
        for j in 1..=4usize {
            let fact: f64 = (1..j).map(|k| k as f64).product();
            let lhs = z * phi_scalar(j, z) + 1.0 / fact;
            let rhs = phi_scalar(j - 1, z);
            let scale = (z * phi_scalar(j, z)).abs().max(1.0 / fact).max(rhs.abs());
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        z /= 1.7;
    }
    check.require(worst <= 1e-12, format!("phi recurrence residual {worst:.2e} <= 1e-12"));

    // weight order conditions at zero through s = 4, and at scalar arguments
    let mut worst = 0.0f64;
    for s in 1..=4 {
        let nodes = NodeSet::gauss(s)?;
        let w = solve_weights(&nodes)?;
        for j in 1..=s {
            let sum: f64 = (0..s)
                .map(|i| w.weights_at_zero()[i] * nodes.nodes()[i].powi(j as i32 - 1))
                .sum();
            worst = worst.max((sum - 1.0 / j as f64).abs());
        }
        for t in 0..10 {
            let zarg = -(10f64.powf(-2.0 + 4.0 * t as f64 / 9.0));
            for j in 1..=s {
                let fact: f64 = (1..j).map(|k| k as f64).product();
                let sum: f64 = (0..s)
                    .map(|i| w.weight_scalar(i, zarg) * nodes.nodes()[i].powi(j as i32 - 1))
                    .sum();
                worst = worst.max((sum / fact - phi_scalar(j, zarg)).abs());
            }
        }
    }
    check.require(worst <= 1e-12, format!("weight order-condition residual {worst:.2e} <= 1e-12"));

    // weak-order checks match the classical Gauss/Radau orders
    let mut weak_ok = true;
    for s in 1..=4 {
        weak_ok &= check_weak_order(&NodeSet::gauss(s)?, s)?;
        weak_ok &= !check_weak_order(&NodeSet::gauss(s)?, s + 1)?;
    }
    for s in 2..=4 {
        weak_ok &= check_weak_order(&NodeSet::radau_right(s)?, s - 1)?;
        weak_ok &= !check_weak_order(&NodeSet::radau_right(s)?, s)?;
    }
    check.require(weak_ok, "weak orders match classical Gauss 2s / Radau 2s-1".into());

    // phi_apply against the integral-representation quadrature oracle
    let gl_x =
        [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526];
    let gl_w =
        [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538];
    let quad_phi = |j: usize, tau: f64, lam: f64| -> f64 {
        let fact: f64 = (1..j).map(|k| k as f64).product();
        let panels = 1200;
        let h = tau / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let m = (p as f64 + 0.5) * h;
            for (x, w) in gl_x.iter().zip(&gl_w) {
                let xi = m + 0.5 * h * x;
                sum += w * ((tau - xi) * lam).exp() * xi.powi(j as i32 - 1) / fact;
            }
        }
        sum * 0.5 * h / tau.powi(j as i32)
    };
    // a small dense-symmetric operator (mixed boundary forces the dense path)
    let op = Arc::new(build_laplacian_1d(Grid1D::new(
        6,
        expint::grid::BcKind::Dirichlet,
        expint::grid::BcKind::Neumann,
    )?)?);
    let phi = PhiEvaluator::new(op.clone());
    let v: Vec<f64> = (0..op.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
    let mut worst = 0.0f64;
    for j in 1..=4 {
        let got = phi.apply(j, 0.37, &v)?;
        let vhat = op.forward(&v)?;
        let want_hat: Vec<f64> = vhat
            .iter()
            .zip(op.eigenvalues())
            .map(|(&h, &l)| h * quad_phi(j, 0.37, l))
            .collect();
        let want = op.inverse(&want_hat)?;
        let scale = want.iter().map(|x| x.abs()).fold(1e-3, f64::max);
        let diff =
            got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    check.require(worst <= 1e-9, format!("phi_apply vs quadrature oracle {worst:.2e} <= 1e-9"));

    // w-form / u-form equivalence
    let spec1 = build_problem("ex1")?;
    let asm1 = assemble(&spec1, 64, "analytic:affine")?;
    let AnyProblem::Linear(p1) = &asm1.problem else { unreachable!() };
    let CorrectionMode::Field(corr1) = &p1.correction else { unreachable!() };
    let weights = solve_weights(&NodeSet::gauss(2)?)?;
    let phi1 = PhiEvaluator::new(asm1.operator.clone());
    let tau = 0.05;
    let mut u = p1.initial.clone();
    let z0 = corr1.z(0.0)?;
    let mut wst: Vec<f64> = u.iter().zip(&z0).map(|(a, b)| a - b).collect();
    let mut worst = 0.0f64;
    let mut t = 0.0;
    for _ in 0..20 {
        u = linear_step(&u, t, tau, p1, &weights, &phi1)?;
        wst = linear_step_w(&wst, t, tau, p1, &weights)?;
        t += tau;
        let z = corr1.z(t)?;
        let diff = u
            .iter()
            .zip(wst.iter().zip(&z))
            .map(|(a, (b, c))| (a - (b + c)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff / u.iter().map(|x| x.abs()).fold(1.0, f64::max));
    }
    let spec3 = build_problem("ex3")?;
    let asm3 = assemble(&spec3, 64, "analytic:heat")?;
    let AnyProblem::Semilinear(p3) = &asm3.problem else { unreachable!() };
    let CorrectionMode::Field(corr3) = &p3.correction else { unreachable!() };
    let Method::Tableau(tb) = registry_get("strehmel-weiner")? else { unreachable!() };
    let phi3 = PhiEvaluator::new(asm3.operator.clone());
    let mut u = p3.initial.clone();
    let z0 = corr3.z(0.0)?;
    let mut wst: Vec<f64> = u.iter().zip(&z0).map(|(a, b)| a - b).collect();
    let mut t = 0.0;
    for _ in 0..10 {
        u = semilinear_step(&u, t, 0.025, p3, &tb, &phi3)?;
        wst = semilinear_step_w(&wst, t, 0.025, p3, &tb)?;
        t += 0.025;
        let z = corr3.z(t)?;
        let diff = u
            .iter()
            .zip(wst.iter().zip(&z))
            .map(|(a, (b, c))| (a - (b + c)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff / u.iter().map(|x| x.abs()).fold(1.0, f64::max));
    }
    check.require(worst <= 1e-12, format!("w/u scheme equivalence drift {worst:.2e} <= 1e-12"));

    // harmonic-extension residuals
    let mut worst = 0.0f64;
    {
        let op = build_laplacian_1d(Grid1D::dirichlet(100)?)?;
        let data = expint::correction::BoundaryData::stationary_dirichlet_1d(1.3, -0.4);
        worst = worst.max(harmonic_residual(&op, &data)?);
        for n in [24usize, 64] {
            let op = build_laplacian_2d(Grid2D::new(n)?)?;
            let data = expint::correction::BoundaryData::stationary_dirichlet_2d(|x, y| {
                0.5 + (2.0 * x).sin() * (1.0 + y) - y * y
            });
            worst = worst.max(harmonic_residual(&op, &data)?);
        }
    }
    check.require(worst <= 1e-10, format!("harmonic-extension residual {worst:.2e} <= 1e-10"));

    // compatibility residual distinguishes affine from chain on ex2
    let spec2 = build_problem("ex2")?;
    let asm_chain = assemble(&spec2, 128, "chain:1")?;
    let f_trace = |l: usize, t: f64| -> (f64, f64) {
        assert_eq!(l, 1);
        let f = |x: f64| (-2.0 + 12.0 * x - 12.0 * x * x + x * x * (1.0 - x) * (1.0 - x)) * t.exp();
        (f(0.0), f(1.0))
    };
    let t = 0.8;
    let CorrectionMode::Field(chain_corr) = asm_chain.problem.correction() else { unreachable!() };
    let res_chain = verify_compatibility(chain_corr.as_ref(), &f_trace, t, 1)?;
    let asm_affine = assemble(&spec2, 128, "analytic:affine")?;
    let CorrectionMode::Field(affine_corr) = asm_affine.problem.correction() else {
        unreachable!()
    };
    let res_affine = verify_compatibility(affine_corr.as_ref(), &f_trace, t, 1)?;
    let f_inf = 2.0 * t.exp();
    check.require(
        res_chain <= 1e-8 * f_inf && res_affine > 0.5 * f_inf,
        format!(
            "compatibility residuals: chain {res_chain:.2e} (small), affine {res_affine:.2e} (O(f))"
        ),
    );
    Ok(())
}

fn harmonic_residual(
    op: &expint::operator::DiscreteOperator,
    data: &expint::correction::BoundaryData,
) -> Result<f64, LabError> {
    use expint::correction::{boundary_lift, harmonic_extension, BoundaryData, Side, TraceSpec};
    let z = harmonic_extension(op, data, 0.0)?;
    let g0;
    let trace = match data {
        BoundaryData::OneD { .. } => TraceSpec::OneD {
            left: data.value_1d(Side::Left, 0, 0.0)?,
            right: data.value_1d(Side::Right, 0, 0.0)?,
        },
        BoundaryData::TwoD { traces, .. } => {
            let g = traces[0].clone();
            g0 = move |x: f64, y: f64| g(0.0, x, y);
            TraceSpec::TwoD(&g0)
        }
    };
    let lift = boundary_lift(op, &trace)?;
    let mut residual = op.apply(&z)?;
    for (r, l) in residual.iter_mut().zip(&lift) {
        *r += l;
    }
    let rmax = residual.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let zmax = z.iter().map(|x| x.abs()).fold(1e-300, f64::max);
    Ok(rmax / zmax)
}

fn criterion8(check: &mut Check, _opts: &AcceptanceOptions) -> Result<(), LabError> {
    let spec = build_problem("ex1")?;
    let asm = assemble(&spec, 512, "analytic:affine")?;
    let AnyProblem::Linear(problem) = &asm.problem else { unreachable!() };
    let method = registry_get("gauss-quadrature:2")?;
    let exact = spec.exact.as_ref().unwrap().sample(1.0, &asm.operator.meta().coords)?;
    let mut log_tau = Vec::new();
    let mut log_err = Vec::new();
    for (i, tau_max) in [0.1, 0.05, 0.025, 0.0125, 0.00625].into_iter().enumerate() {
        let steps = StepSequence::quasi_uniform_random(1.0, tau_max, 0.5, 1000 + i as u64)?;
        let traj = integrate(
            expint::scheme::ProblemRef::Linear(problem),
            &method,
            &steps,
            &IntegrateOptions::default(),
        )?;
        let diff: Vec<f64> =
            traj.final_state.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let err = norm(&diff, NormKind::L2, asm.operator.meta(), None)?;
        check.info(format!(
            "tau_max {:.4e} (alpha {:.2}, kappa {:.2}): L2 error {err:.3e}",
            steps.tau_max(),
            steps.alpha_realized(),
            steps.ratio_bound()
        ));
        log_tau.push(steps.tau_max().ln());
        log_err.push(err.ln());
    }
    let slope = least_squares_slope(&log_tau, &log_err);
    check.require(slope >= 2.8, format!("global order vs tau_max {slope:.3} >= 2.8"));
    Ok(())
}
