//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use inertial_deriv::analysis::{fd_derivative, fit_rate, step_inequality_check};
use inertial_deriv::cli::config::{ProblemKind, RunConfig};
use inertial_deriv::cli::fig1::{fig1_problem, increases, reproduce_fig1, Fig1Setup};
use inertial_deriv::deriv::{
    dense_spectral_radius, fixed_point_derivative, limit_matrix, propagate_step,
    run_with_derivative, DerivativeState, Initializer,
};
use inertial_deriv::fd::relative_error;
use inertial_deriv::problem::{LeastSquaresProblem, ProblemOracle, QuadraticProblem};
use inertial_deriv::rng::{gaussian_matrix, gaussian_vector, seeded};
use inertial_deriv::schedule::{
    check_premise_b, example1_momentum, premise_c_lhs, Limits, Preset, Schedule, ScheduleParams,
};
use inertial_deriv::solver::{
    jac_state, lifted_map, lipschitz_bound_fk, run, step, LiftedState, RunOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: String) -> Line {
    Line { id, pass, detail }
}

fn schedule(p: &dyn ProblemOracle, preset: Preset) -> Schedule {
    Schedule::preset(preset, p.lipschitz(), ScheduleParams::default()).unwrap()
}

fn one() -> DVector<f64> {
    DVector::from_element(1, 1.0)
}

fn fixed_point_exactness() -> Line {
    let start = Instant::now();
    let p = fig1_problem(&Fig1Setup::default()).unwrap();
    let theta = one();
    let x_star = p.minimizer(&theta).unwrap();
    let lim = schedule(&p, Preset::Case2).limits();
    let d = fixed_point_derivative(&p, &lim, &theta, &x_star).unwrap();
    // ∂θ(½ x̃ θ²) = x̃ θ
    let expected = DMatrix::from_column_slice(20, 1, (p.x_tilde() * theta[0]).as_slice());
    let err = relative_error(&d.rows(0, 20), &expected);
    let secs = start.elapsed().as_secs_f64();
    line(
        "1 fixed-point derivative",
        err <= 1e-10 && secs < 1.0,
        format!("rel err {err:.3e} (≤ 1e-10), {secs:.3} s (< 1 s)"),
    )
}

fn derivative_stability() -> Vec<Line> {
    let start = Instant::now();
    let out = reproduce_fig1(&Fig1Setup::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let e1 = out.case1.report.final_deriv_rel_err.unwrap();
    let e2 = out.case2.report.final_deriv_rel_err.unwrap();

    let p = fig1_problem(&Fig1Setup::default()).unwrap();
    let x_star = p.minimizer(&one()).unwrap();
    let trace = run(
        &p,
        &schedule(&p, Preset::Case2),
        &one(),
        &DVector::zeros(20),
        &RunOptions::fixed(400),
    )
    .unwrap();
    let run_err = (&trace.final_state.x - &x_star).norm() / x_star.norm();

    let mut lines = vec![
        line(
            "2 derivative stability",
            e1 <= 1e-6 && e2 <= 1e-6 && secs < 5.0,
            format!("case1 {e1:.3e}, case2 {e2:.3e} (≤ 1e-6), both cases {secs:.3} s (< 5 s)"),
        ),
        line(
            "  iterate accuracy, case2",
            run_err <= 1e-8,
            format!("‖x_400 − x*‖/‖x*‖ = {run_err:.3e} (≤ 1e-8)"),
        ),
    ];
    lines.extend(rate_lines(&out));
    lines
}

fn rate_lines(out: &inertial_deriv::cli::fig1::Fig1Outcome) -> Vec<Line> {
    let c1 = &out.case1;
    let c2 = &out.case2;
    let rho2 = c2.report.limit.rho;

    let fit = fit_rate(&c2.iter_err, 0.25).unwrap();
    let rate = line(
        "5 local linear rate",
        (fit.fitted_rate - rho2).abs() <= 0.02 && fit.r_squared >= 0.999,
        format!(
            "fitted {:.6} vs ρ(M) {rho2:.6} (± 0.02), r² {:.8} (≥ 0.999), window {:?}",
            fit.fitted_rate, fit.r_squared, fit.window
        ),
    );

    let k0 = c2.burn_in.unwrap();
    let at = |k: usize| {
        step_inequality_check(&c2.deriv_err, rho2, k)
            .unwrap()
            .min_eps
    };
    let at_burn_in = at(k0);
    let sweep: Vec<f64> = [50, 100, 200, 300].into_iter().map(at).collect();
    let nonincreasing = sweep.windows(2).all(|w| w[1] <= w[0]);
    let envelope = line(
        "6 rate envelope",
        at_burn_in <= 1e-8 && nonincreasing,
        format!(
            "min_eps {at_burn_in:.3e} at K = {k0} (≤ 1e-8); K = 50, 100, 200, 300: {}",
            sweep
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );

    let iter_up = increases(&c1.iter_err, 0).len();
    let tail = fit_rate(&c1.deriv_err, 0.25).unwrap();
    let b2 = k0;
    let c2_up = increases(&c2.iter_err, b2).len() + increases(&c2.deriv_err, b2).len();
    let ratio = relative_error(
        &DVector::from_vec(c1.deriv_err.clone()),
        &(DVector::from_vec(c1.iter_err.clone()) * 2.0),
    );
    let phen = line(
        "10 figure phenomenology",
        iter_up >= 1 && tail.r_squared >= 0.99 && c2_up == 0,
        format!(
            "case1 iterate increases {iter_up} (≥ 1); case1 derivative tail r² {:.4} (≥ 0.99); \
             case2 increases after K = {b2}: {c2_up} (= 0); case1 deriv_err vs 2·iter_err rel {ratio:.1e}",
            tail.r_squared
        ),
    );
    vec![rate, envelope, phen]
}

fn ad_matches_fd() -> Line {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    let mut check = |name: &str,
                     p: &dyn ProblemOracle,
                     theta: &DVector<f64>,
                     x0: &DVector<f64>,
                     preset: Preset| {
        let s = schedule(p, preset);
        let init = Initializer::constant(x0.clone(), p.m());
        let mut e_max: f64 = 0.0;
        let mut ks = Vec::new();
        for k in [10, 50, 200] {
            let ad = match run_with_derivative(p, &s, theta, &init, &RunOptions::fixed(k)) {
                Ok(t) => t.final_derivative.d,
                Err(_) => continue,
            };
            let Ok(fd) = fd_derivative(p, &s, theta, x0, k, 1e-5) else {
                continue;
            };
            e_max = e_max.max(relative_error(&ad, &fd));
            ks.push(k);
        }
        worst = worst.max(e_max);
        parts.push(format!("{name}/{preset} k={ks:?} {e_max:.1e}"));
        ks.len()
    };

    let q = QuadraticProblem::with_curvature({
        let b = gaussian_matrix(4, 4, &mut seeded(5));
        b.transpose() * &b + DMatrix::identity(4, 4) * 0.1
    })
    .unwrap();
    let qt = gaussian_vector(4, &mut seeded(6));
    let ls = fig1_problem(&Fig1Setup::default()).unwrap();
    let cfg = RunConfig {
        problem: ProblemKind::LogExp,
        n: 5,
        m_rows: 12,
        ..Default::default()
    };
    let le = cfg.build().unwrap();

    let mut finite_ks = 0;
    for preset in [Preset::Case1, Preset::Case2] {
        check("quadratic", &q, &qt, &DVector::zeros(4), preset);
        check("least_squares", &ls, &one(), &DVector::zeros(20), preset);
        finite_ks += check(
            "log_exp",
            le.problem.as_ref(),
            &le.theta,
            &le.init.x0,
            preset,
        );
    }
    line(
        "3 AD vs FD",
        worst <= 1e-4 && finite_ks > 0,
        format!("worst rel err {worst:.2e} (≤ 1e-4): {}", parts.join(", ")),
    )
}

fn fd_halving() -> Line {
    let cfg = RunConfig {
        problem: ProblemKind::LogExp,
        n: 5,
        m_rows: 12,
        ..Default::default()
    };
    let e = cfg.build().unwrap();
    let p = e.problem.as_ref();
    let s = schedule(p, Preset::GradientDescent);
    let k = 50;
    let ad = run_with_derivative(p, &s, &e.theta, &e.init, &RunOptions::fixed(k))
        .unwrap()
        .final_derivative
        .d;
    let err = |h: f64| (fd_derivative(p, &s, &e.theta, &e.init.x0, k, h).unwrap() - &ad).norm();
    let ratio = err(1e-4) / err(5e-5);
    line(
        "  FD second order",
        (3.0..=5.0).contains(&ratio),
        format!("log-exp error ratio for h = 1e-4 vs 5e-5: {ratio:.3} (≈ 4)"),
    )
}

fn spectral_consistency() -> Line {
    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = 1 + i % 5;
        let b = gaussian_matrix(n, n, &mut rng);
        let q =
            QuadraticProblem::with_curvature(b.transpose() * &b + DMatrix::identity(n, n) * 0.05)
                .unwrap();
        let lim = Limits {
            a: rng.random_range(0.0..1.0),
            b: rng.random_range(0.0..1.0),
            gamma: rng.random_range(0.05..1.95) / q.lipschitz(),
        };
        let z = DVector::zeros(n);
        let lm = limit_matrix(&q, &lim, &z, &z);
        worst = worst.max((lm.rho - dense_spectral_radius(&lm.m)).abs());
    }

    // diagonal curvature: the eigenvalues are known without a solver
    let lambdas = [0.3, 1.7, 2.5, 4.0];
    let q = QuadraticProblem::with_curvature(DMatrix::from_diagonal(&DVector::from_row_slice(
        &lambdas,
    )))
    .unwrap();
    let mut exact = true;
    for g in [0.1, 0.25, 0.4] {
        let lim = Limits {
            a: 0.0,
            b: 0.0,
            gamma: g,
        };
        let z = DVector::zeros(4);
        let rho = limit_matrix(&q, &lim, &z, &z).rho;
        let oracle = lambdas
            .iter()
            .map(|l| (1.0 - g * l).abs())
            .fold(0.0, f64::max);
        exact &= rho == oracle;
    }
    line(
        "4 spectral radius",
        worst <= 1e-8 && exact,
        format!("max |ρ_quad − ρ_dense| {worst:.2e} over 20 instances (≤ 1e-8); a = b = 0 exact: {exact}"),
    )
}

fn premise_checkers() -> Line {
    let l = 7.5;
    let ex1 = Schedule::preset(Preset::Example1, l, ScheduleParams::default()).unwrap();
    let rb = check_premise_b(&ex1, l, 10_000);
    // (1 − 3a) − ½(1 − a)² at γL = 1
    let a = 5f64.sqrt() - 2.0 - 1e-3;
    let hand = (1.0 - 3.0 * a) - 0.5 * (1.0 - a) * (1.0 - a);
    let margin = rb.max_tau.unwrap();
    let gd = Schedule::preset(Preset::GradientDescent, l, ScheduleParams::default()).unwrap();
    let gd_margin = check_premise_b(&gd, l, 10_000).max_tau.unwrap();
    let c_ok = [0.0, 0.25, 0.5, 0.9]
        .iter()
        .all(|&b| (premise_c_lhs(b, b) + 1.0 / (1.0 + 2.0 * b)).abs() <= 1e-15);
    let pass = rb.satisfied_all
        && (margin - hand).abs() <= 1e-12
        && (margin - 0.0024).abs() <= 2.5e-4
        && (a - example1_momentum()).abs() <= 1e-15
        && (gd_margin - 0.5).abs() <= 1e-15
        && c_ok;
    line(
        "7 premise checkers",
        pass,
        format!(
            "example1 holds to k = 10⁴ with margin {margin:.7} (hand {hand:.7}, ≈ 0.0024); \
             gradient descent margin {gd_margin}; lhs = −1/(1+2b) for a = b: {c_ok}"
        ),
    )
}

fn lipschitz_of_fk() -> Line {
    let p = fig1_problem(&Fig1Setup::default()).unwrap();
    let r = p.theta_lipschitz_radius();
    let mut rng = seeded(8);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let preset = Preset::ALL[i % Preset::ALL.len()];
        let s = schedule(&p, preset);
        let k = rng.random_range(0..400);
        let mut draw = || {
            let x = LiftedState::new(gaussian_vector(20, &mut rng), gaussian_vector(20, &mut rng));
            (x, DVector::from_element(1, rng.random_range(-r..r)))
        };
        let (x1, t1) = draw();
        let (x2, t2) = draw();
        let f1 = lifted_map(&p, &s, k, &t1, &x1).unwrap();
        let f2 = lifted_map(&p, &s, k, &t2, &x2).unwrap();
        let den = (x1.distance(&x2).powi(2) + (&t1 - &t2).norm_squared()).sqrt();
        worst = worst.max(f1.distance(&f2) / den / lipschitz_bound_fk(&s, k, p.lipschitz()));
    }
    line(
        "8 Lipschitz bound of F_k",
        worst <= 1.0,
        format!("max ratio / bound {worst:.4} over 1000 pairs, |θ| < {r:.4} (≤ 1)"),
    )
}

fn structural_invariants() -> Line {
    let start = Instant::now();
    let mut shift = true;
    let mut affine: f64 = 0.0;
    let mut gd = true;
    let mut fixed: f64 = 0.0;
    let mut rng = seeded(9);
    for trial in 0..200u64 {
        let n = 1 + (trial % 5) as usize;
        let p = LeastSquaresProblem::new(
            gaussian_matrix(n + 5, n, &mut rng),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let preset = Preset::ALL[trial as usize % Preset::ALL.len()];
        let s = schedule(&p, preset);
        let k = rng.random_range(0..500);
        let theta = DVector::from_element(1, rng.random_range(-2.0..2.0));
        let state = LiftedState::new(gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
        let d1 = gaussian_matrix(2 * n, 1, &mut rng);
        let d2 = gaussian_matrix(2 * n, 1, &mut rng);
        let prop = |d: &DMatrix<f64>| {
            propagate_step(
                &p,
                &s,
                k,
                &theta,
                &state,
                &DerivativeState { d: d.clone(), k },
            )
            .unwrap()
        };
        let o1 = prop(&d1);
        shift &= o1.bottom() == d1.rows(0, n).into_owned();
        let alpha: f64 = rng.random_range(-2.0..2.0);
        let mixed = prop(&(&d1 * alpha + &d2 * (1.0 - alpha)));
        let combo = &o1.d * alpha + prop(&d2).d * (1.0 - alpha);
        affine = affine.max((mixed.d - combo).norm() / (1.0 + o1.d.norm() * (1.0 + alpha.abs())));

        let g = Schedule::preset(
            Preset::GradientDescent,
            p.lipschitz(),
            ScheduleParams::default(),
        )
        .unwrap();
        let mut x = state.x.clone();
        let mut lifted = LiftedState::initial(x.clone());
        for j in 0..30 {
            lifted = step(&p, &g, j, &theta, &lifted).unwrap();
            x = &x - p.gradient(&x, &theta) * g.gamma_at(j);
            gd &= lifted.x == x;
        }

        let star = LiftedState::initial(p.minimizer(&theta).unwrap());
        let out = lifted_map(&p, &s, k, &theta, &star).unwrap();
        fixed = fixed.max(out.distance(&star) / star.stacked().norm().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "9 structural invariants",
        shift && affine <= 1e-13 && gd && fixed <= 1e-12 && secs < 30.0,
        format!(
            "shift bitwise {shift}, affinity {affine:.1e}, GD reduction bitwise {gd}, \
             fixed point {fixed:.1e} (≤ 1e-12), {secs:.2} s (< 30 s)"
        ),
    )
}

fn limit_jacobians_converge() -> Line {
    let p = LeastSquaresProblem::new(
        gaussian_matrix(10, 3, &mut seeded(42)),
        DVector::from_element(3, 1.0),
    )
    .unwrap();
    let s = schedule(&p, Preset::Case2);
    let theta = one();
    let star = LiftedState::initial(p.minimizer(&theta).unwrap());
    let lm = limit_matrix(&p, &s.limits(), &theta, &star.x);
    let mut x = LiftedState::initial(DVector::zeros(3));
    let mut k = 0;
    while x.distance(&star) > 1e-8 || s.limit_deviation(k) > 1e-8 {
        x = step(&p, &s, k, &theta, &x).unwrap();
        k += 1;
    }
    let gap = (jac_state(&p, &s, k, &theta, &x) - &lm.m).norm();
    line(
        "  M_k → M, case2",
        gap <= 1e-6,
        format!("‖M_k − M‖_F {gap:.2e} at k = {k} (≤ 1e-6)"),
    )
}

fn main() -> ExitCode {
    let mut lines = vec![fixed_point_exactness()];
    let mut stability = derivative_stability();
    let rest = stability.split_off(2);
    lines.append(&mut stability);
    lines.push(ad_matches_fd());
    lines.push(fd_halving());
    lines.push(spectral_consistency());
    let mut rest = rest.into_iter();
    lines.push(rest.next().unwrap());
    lines.push(rest.next().unwrap());
    lines.push(premise_checkers());
    lines.push(lipschitz_of_fk());
    lines.push(structural_invariants());
    lines.push(limit_jacobians_converge());
    lines.extend(rest);

    for l in &lines {
        println!(
            "{} {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
