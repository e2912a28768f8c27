//! Convergence diagnostics: error series, tail rate fits, the `2ρ + ε` step
//! inequality with its envelope, and a finite-difference derivative oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deriv::{
    self, fixed_point_derivative, limit_matrix, resolve_minimizer, DerivTrace, Initializer,
    MinimizerSource,
};
use crate::error::{Error, Result};
use crate::fd;
use crate::problem::ProblemOracle;
use crate::schedule::{check_premise_b, check_premise_c, Branch, Limits, PremiseCReport, Schedule};
use crate::solver::{self, LiftedState, RunOptions};

/// Entries at or below this value are left out of log fits.
pub const ERROR_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 10;
/// Burn-in index: first `k` with `iter_err[k] ≤ BURN_IN_FACTOR · iter_err[0]`.
pub const BURN_IN_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    /// `‖X_k − X*‖₂`.
    pub iter_err: Vec<f64>,
    /// `‖D_k − D*‖_F`.
    pub deriv_err: Vec<f64>,
}

/// Errors against the given references. Needs a state and derivative
/// snapshot at every iteration.
pub fn error_series(
    trace: &DerivTrace,
    x_star: &LiftedState,
    d_star: &DMatrix<f64>,
) -> Result<ErrorSeries> {
    let missing = || Error::Parameter("error series needs snapshot_every = 1".into());
    let iter_err = trace
        .run
        .records
        .iter()
        .map(|r| {
            r.state
                .as_ref()
                .map(|s| s.distance(x_star))
                .ok_or_else(missing)
        })
        .collect::<Result<Vec<_>>>()?;
    let deriv_err = trace
        .derivs
        .iter()
        .map(|r| {
            r.d.as_ref()
                .map(|d| (d - d_star).norm())
                .ok_or_else(missing)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorSeries {
        iter_err,
        deriv_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `exp(slope)` of the log-error fit.
    pub fitted_rate: f64,
    /// First and last iteration index used by the fit.
    pub window: (usize, usize),
    pub r_squared: f64,
    /// `ρ(M)`.
    pub theory_rate: Option<f64>,
    /// Smallest `ε` making the step inequality hold on the tail.
    pub envelope_eps: Option<f64>,
}

/// Least-squares fit of `log e_k` against `k` over the last `tail_fraction`
/// of the entries above [`ERROR_FLOOR`].
pub fn fit_rate(series: &[f64], tail_fraction: f64) -> Result<RateReport> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "tail_fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let usable: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite() && **e > ERROR_FLOOR)
        .map(|(k, e)| (k, e.ln()))
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            usable: usable.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let take = ((usable.len() as f64 * tail_fraction).ceil() as usize)
        .max(MIN_FIT_POINTS)
        .min(usable.len());
    let tail = &usable[usable.len() - take..];
    let (slope, r_squared) = linear_fit(tail);
    Ok(RateReport {
        fitted_rate: slope.exp(),
        window: (tail[0].0, tail[tail.len() - 1].0),
        r_squared,
        theory_rate: None,
        envelope_eps: None,
    })
}

/// Slope and coefficient of determination of `y` against `k`.
fn linear_fit(points: &[(usize, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(k, _)| *k as f64).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| *y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(k, y) in points {
        let dx = k as f64 - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = points
        .iter()
        .map(|&(k, y)| {
            let fit = mean_y + slope * (k as f64 - mean_x);
            (y - fit).powi(2)
        })
        .sum();
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    (slope, r2.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInequality {
    /// `max_k ε_k` over the tail.
    pub min_eps: f64,
    /// `ε_k` for `k = start, …, len − 2`.
    pub eps: Vec<f64>,
    pub start: usize,
}

/// Smallest `ε_k ≥ 0` with `e_{k+1} ≤ 2ρ e_k + ε_k (2 + e_k)` for every
/// `k ≥ K`.
pub fn step_inequality_check(deriv_err: &[f64], rho: f64, start: usize) -> Result<StepInequality> {
    if start + 1 >= deriv_err.len() {
        return Err(Error::Parameter(format!(
            "burn-in index {start} leaves no step in a series of length {}",
            deriv_err.len()
        )));
    }
    let eps: Vec<f64> = (start..deriv_err.len() - 1)
        .map(|k| {
            let (e, next) = (deriv_err[k], deriv_err[k + 1]);
            ((next - 2.0 * rho * e) / (2.0 + e)).max(0.0)
        })
        .collect();
    let min_eps = eps.iter().copied().fold(0.0, f64::max);
    Ok(StepInequality {
        min_eps,
        eps,
        start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub value: f64,
    /// `τ = 2ρ < 1`.
    pub contractive: bool,
}

/// `τ^{k+1−K} e_K + ε Σ_{i=K}^{k} τ^{i−K} g_i` with `τ = 2ρ`. `g_values` is
/// indexed by iteration, `g_i = 2 + deriv_err[i]`.
pub fn envelope_bound(
    err_at_start: f64,
    rho: f64,
    eps: f64,
    g_values: &[f64],
    start: usize,
    k: usize,
) -> Result<Envelope> {
    if k < start || k >= g_values.len() {
        return Err(Error::Parameter(format!(
            "envelope needs K ≤ k < {}, got K = {start}, k = {k}",
            g_values.len()
        )));
    }
    let tau = 2.0 * rho;
    let mut sum = 0.0;
    let mut power = 1.0;
    for g in &g_values[start..=k] {
        sum += power * g;
        power *= tau;
    }
    Ok(Envelope {
        value: power * err_at_start + eps * sum,
        contractive: tau < 1.0,
    })
}

/// Envelope for every `k + 1` in `start + 1..len`, computed incrementally;
/// entry `j` bounds `deriv_err[start + 1 + j]`.
pub fn envelope_series(deriv_err: &[f64], rho: f64, eps: f64, start: usize) -> Vec<f64> {
    let tau = 2.0 * rho;
    let mut out = Vec::with_capacity(deriv_err.len().saturating_sub(start + 1));
    let (mut sum, mut power) = (0.0, 1.0);
    for e in deriv_err
        .iter()
        .take(deriv_err.len().saturating_sub(1))
        .skip(start)
    {
        sum += power * (2.0 + e);
        power *= tau;
        out.push(power * deriv_err[start] + eps * sum);
    }
    out
}

/// First `k` with `iter_err[k] ≤ 10⁻³ iter_err[0]`.
pub fn burn_in_index(iter_err: &[f64]) -> Option<usize> {
    let first = *iter_err.first()?;
    iter_err.iter().position(|e| *e <= BURN_IN_FACTOR * first)
}

/// Central differences of `θ ↦ X_k(θ)` from the fixed initial point `x0`,
/// with the step `h · max(1, |θ_j|)`.
pub fn fd_derivative(
    p: &dyn ProblemOracle,
    s: &Schedule,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    k: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!(
            "FD step must be positive, got {h}"
        )));
    }
    let opts = RunOptions {
        max_iter: k,
        grad_tol: None,
        snapshot_every: 0,
    };
    let x_at = |t: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(solver::run(p, s, t, x0, &opts)?.final_state.stacked())
    };
    let mut columns = Vec::with_capacity(theta.len());
    let mut probe = theta.clone();
    for j in 0..theta.len() {
        let step = fd::scaled_step(h, theta[j]);
        probe[j] = theta[j] + step;
        let up = x_at(&probe)?;
        probe[j] = theta[j] - step;
        let down = x_at(&probe)?;
        probe[j] = theta[j];
        columns.push((up - down) / (2.0 * step));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Burn-in policy for the step inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnIn {
    /// First `k` with `iter_err[k] ≤ 10⁻³ iter_err[0]`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub tail_fraction: f64,
    pub burn_in: BurnIn,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            tail_fraction: 0.25,
            burn_in: BurnIn::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub limits: Limits,
    pub eta_min: f64,
    pub eta_max: f64,
    pub rho: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseBSummary {
    pub satisfied_all: bool,
    pub uniform_branch: Option<Branch>,
    pub first_violation: Option<usize>,
    pub max_tau: Option<f64>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub burn_in: usize,
    pub min_eps: f64,
    /// Envelope bounds every observed error on the tail.
    pub envelope_holds: bool,
    pub contractive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub problem: String,
    pub schedule: String,
    pub n: usize,
    pub m: usize,
    pub lipschitz: f64,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub minimizer_source: MinimizerSource,
    pub limit: LimitSummary,
    pub premise_b: PremiseBSummary,
    pub premise_c: PremiseCReport,
    pub schedule_violations: Vec<usize>,
    pub step_clamps: Vec<usize>,
    pub final_iter_err: Option<f64>,
    pub final_deriv_err: Option<f64>,
    /// `‖D_K − D*‖_F / ‖D*‖_F` at the last iteration.
    pub final_deriv_rel_err: Option<f64>,
    pub iter_rate: Option<RateReport>,
    pub deriv_rate: Option<RateReport>,
    pub step_inequality: Option<StepSummary>,
    pub warnings: Vec<String>,
}

/// Per-iteration series behind a report, for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSeries {
    pub iter_err: Option<Vec<f64>>,
    pub deriv_err: Option<Vec<f64>>,
    /// `iter_err[K] ρ^{k−K}` for `k ≥ K`.
    pub theory_iter_bound: Vec<Option<f64>>,
    /// Envelope bounding `deriv_err[k]` for `k > K`.
    pub theory_deriv_envelope: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: FullReport,
    pub trace: DerivTrace,
    pub series: ReportSeries,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Joint run plus every diagnostic on it. Snapshots are kept at every
/// iteration regardless of `opts.snapshot_every`.
pub fn full_report(
    p: &dyn ProblemOracle,
    s: &Schedule,
    theta: &DVector<f64>,
    init: &Initializer,
    opts: &RunOptions,
    analysis: &AnalysisOptions,
) -> Result<Analysis> {
    let mut warnings = Vec::new();
    let run_opts = RunOptions {
        snapshot_every: 1,
        ..*opts
    };
    let trace = deriv::run_with_derivative(p, s, theta, init, &run_opts)?;
    let iterations = trace.run.iterations();

    let star = resolve_minimizer(p, s, theta, &init.x0)?;
    warnings.extend(star.warning.clone());
    let limits = s.limits();
    let lm = limit_matrix(p, &limits, theta, &star.x);
    warnings.extend(lm.warnings.iter().cloned());

    let d_star = match deriv::closed_form_derivative(p, theta) {
        Some(d) => Some(d),
        None => match fixed_point_derivative(p, &limits, theta, &star.x) {
            Ok(d) => Some(d),
            Err(e) => {
                warnings.push(format!("no reference derivative: {e}"));
                None
            }
        },
    };
    let x_star = LiftedState::initial(star.x.clone());
    let placeholder = DMatrix::zeros(2 * p.n(), p.m());
    let errors = error_series(&trace, &x_star, d_star.as_ref().unwrap_or(&placeholder))?;
    let iter_err = errors.iter_err;
    let deriv_err = d_star.as_ref().map(|_| errors.deriv_err);

    let fit = |series: &[f64], what: &str, warnings: &mut Vec<String>| match fit_rate(
        series,
        analysis.tail_fraction,
    ) {
        Ok(mut r) => {
            r.theory_rate = finite(lm.rho);
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("{what} rate not fitted: {e}"));
            None
        }
    };
    let iter_rate = fit(&iter_err, "iterate", &mut warnings);
    let mut deriv_rate = deriv_err
        .as_ref()
        .and_then(|d| fit(d, "derivative", &mut warnings));

    let burn_in = match analysis.burn_in {
        BurnIn::Auto => burn_in_index(&iter_err),
        BurnIn::Fixed(k) => Some(k),
    };
    let n_len = iter_err.len();
    let mut theory_iter_bound = vec![None; n_len];
    let mut theory_deriv_envelope = vec![None; n_len];
    let mut step_inequality = None;
    match burn_in {
        Some(k0) if k0 + 1 < n_len => {
            for (k, slot) in theory_iter_bound.iter_mut().enumerate().skip(k0) {
                *slot = finite(iter_err[k0] * lm.rho.powi((k - k0) as i32));
            }
            if let Some(d) = deriv_err.as_ref() {
                let check = step_inequality_check(d, lm.rho, k0)?;
                let env = envelope_series(d, lm.rho, check.min_eps, k0);
                let holds = env
                    .iter()
                    .enumerate()
                    .all(|(j, bound)| d[k0 + 1 + j] <= bound * (1.0 + 1e-12));
                for (j, bound) in env.iter().enumerate() {
                    theory_deriv_envelope[k0 + 1 + j] = finite(*bound);
                }
                if let Some(r) = deriv_rate.as_mut() {
                    r.envelope_eps = Some(check.min_eps);
                }
                step_inequality = Some(StepSummary {
                    burn_in: k0,
                    min_eps: check.min_eps,
                    envelope_holds: holds,
                    contractive: 2.0 * lm.rho < 1.0,
                });
            }
        }
        Some(k0) => warnings.push(format!("burn-in index {k0} leaves no tail")),
        None => warnings.push("burn-in threshold never reached".into()),
    }

    let horizon = iterations.max(1);
    let pb = check_premise_b(s, p.lipschitz(), horizon);
    let premise_c = check_premise_c(s, lm.eta_min);
    if premise_c.on_boundary {
        warnings.push(format!(
            "limits (a, b) = ({}, {}) sit on the boundary of the premise on M",
            limits.a, limits.b
        ));
    }
    if !pb.satisfied_all {
        warnings.push(match pb.first_violation {
            Some(k) => format!("per-iteration convergence premise fails from k = {k}"),
            None => "per-iteration convergence premise fails".into(),
        });
    }

    let final_deriv_err = deriv_err.as_ref().and_then(|d| d.last().copied());
    let final_deriv_rel_err = match (final_deriv_err, d_star.as_ref()) {
        (Some(e), Some(d)) if d.norm() > 0.0 => Some(e / d.norm()),
        _ => None,
    };
    let report = FullReport {
        problem: p.name().to_string(),
        schedule: s.name().to_string(),
        n: p.n(),
        m: p.m(),
        lipschitz: p.lipschitz(),
        theta: theta.iter().copied().collect(),
        iterations,
        minimizer_source: star.source,
        limit: LimitSummary {
            limits,
            eta_min: lm.eta_min,
            eta_max: lm.eta_max,
            rho: lm.rho,
            warnings: lm.warnings.clone(),
        },
        premise_b: PremiseBSummary {
            satisfied_all: pb.satisfied_all,
            uniform_branch: pb.uniform_branch,
            first_violation: pb.first_violation,
            max_tau: pb.max_tau.and_then(finite),
            horizon,
        },
        premise_c,
        schedule_violations: s.violations(horizon),
        step_clamps: s.clamp_events(horizon),
        final_iter_err: iter_err.last().copied(),
        final_deriv_err,
        final_deriv_rel_err,
        iter_rate,
        deriv_rate,
        step_inequality,
        warnings,
    };
    Ok(Analysis {
        report,
        series: ReportSeries {
            iter_err: Some(iter_err),
            deriv_err,
            theory_iter_bound,
            theory_deriv_envelope,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::stack_equal;
    use crate::problem::{LeastSquaresProblem, QuadraticProblem};
    use crate::rng::{gaussian_matrix, seeded};
    use crate::schedule::{Preset, ScheduleParams};
    use proptest::prelude::*;

    fn sched(p: Preset, l: f64) -> Schedule {
        Schedule::preset(p, l, ScheduleParams::default()).unwrap()
    }

    fn ls(rows: usize, cols: usize, seed: u64) -> LeastSquaresProblem {
        let a = gaussian_matrix(rows, cols, &mut seeded(seed));
        LeastSquaresProblem::new(a, DVector::from_element(cols, 1.0)).unwrap()
    }

    #[test]
    fn geometric_series_fit() {
        let series: Vec<f64> = (0..200).map(|k| 3.0 * 0.9f64.powi(k)).collect();
        let r = fit_rate(&series, 0.25).unwrap();
        assert!((r.fitted_rate - 0.9).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(r.window, (150, 199));
    }

    #[test]
    fn floor_excludes_round_off() {
        let mut series: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        series.extend([0.0; 20]);
        let r = fit_rate(&series, 1.0).unwrap();
        assert!(r.window.1 < 40);
        assert!((r.fitted_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let series = vec![1.0, 0.5, 0.25, 1e-20, 0.0];
        assert!(matches!(
            fit_rate(&series, 0.5),
            Err(Error::InsufficientData { usable: 3, .. })
        ));
    }

    #[test]
    fn geometric_series_needs_no_eps() {
        for rho in [0.1f64, 0.5, 0.9, 0.99] {
            let series: Vec<f64> = (0..100).map(|k| rho.powi(k)).collect();
            let r = step_inequality_check(&series, rho, 0).unwrap();
            assert_eq!(r.min_eps, 0.0);
            assert_eq!(r.eps.len(), 99);
        }
    }

    #[test]
    fn eps_is_the_smallest_slack() {
        let series = vec![1.0, 0.9, 0.2];
        let r = step_inequality_check(&series, 0.25, 0).unwrap();
        // 0.9 = 0.5·1 + ε(2 + 1)
        assert!((r.eps[0] - 0.4 / 3.0).abs() < 1e-15);
        assert_eq!(r.eps[1], 0.0);
        assert!(step_inequality_check(&series, 0.25, 2).is_err());
    }

    #[test]
    fn envelope_arithmetic() {
        let g = vec![2.0; 10];
        let env = envelope_bound(1.0, 0.4, 0.0, &g, 3, 5).unwrap();
        assert!((env.value - 0.512).abs() < 1e-15);
        assert!(env.contractive);
        let env = envelope_bound(2.0, 0.3, 0.1, &g, 0, 1).unwrap();
        // 0.6²·2 + 0.1(2 + 0.6·2)
        assert!((env.value - (0.72 + 0.32)).abs() < 1e-15);
        assert!(!envelope_bound(1.0, 0.6, 0.0, &g, 0, 0).unwrap().contractive);
        assert!(envelope_bound(1.0, 0.4, 0.0, &g, 4, 3).is_err());
    }

    #[test]
    fn envelope_series_matches_pointwise_bound() {
        let err: Vec<f64> = (0..30).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let g: Vec<f64> = err.iter().map(|e| 2.0 + e).collect();
        let check = step_inequality_check(&err, 0.3, 5).unwrap();
        let env = envelope_series(&err, 0.3, check.min_eps, 5);
        for (j, v) in env.iter().enumerate() {
            let b = envelope_bound(err[5], 0.3, check.min_eps, &g, 5, 5 + j).unwrap();
            assert!((v - b.value).abs() <= 1e-14 * b.value);
            assert!(err[6 + j] <= v * (1.0 + 1e-12));
        }
    }

    #[test]
    fn burn_in_threshold() {
        let e = vec![10.0, 1.0, 0.1, 0.01, 0.001];
        assert_eq!(burn_in_index(&e), Some(3));
        assert_eq!(burn_in_index(&e[..3]), None);
    }

    #[test]
    fn fd_on_quadratic_gradient_descent() {
        let p = QuadraticProblem::new(2).unwrap();
        let s = sched(Preset::GradientDescent, 1.0);
        let theta = DVector::from_vec(vec![0.4, -1.1]);
        let d = fd_derivative(&p, &s, &theta, &DVector::zeros(2), 3, 1e-5).unwrap();
        assert!((d - stack_equal(&DMatrix::identity(2, 2))).norm() < 1e-9);
    }

    #[test]
    fn fd_agrees_with_propagation_on_least_squares() {
        let p = ls(12, 5, 3);
        let s = sched(Preset::Case1, p.lipschitz());
        let theta = DVector::from_element(1, 1.2);
        let init = Initializer::constant(DVector::zeros(5), 1);
        let trace =
            deriv::run_with_derivative(&p, &s, &theta, &init, &RunOptions::fixed(50)).unwrap();
        let fd = fd_derivative(&p, &s, &theta, &init.x0, 50, 1e-5).unwrap();
        let d = &trace.final_derivative.d;
        assert!(fd::relative_error(&fd, d) <= 1e-4);
        assert!((fd - d).abs().max() <= 10.0 * 1e-10 + 1e-7);
    }

    #[test]
    fn error_series_on_quadratic() {
        let p = QuadraticProblem::new(2).unwrap();
        let s = sched(Preset::GradientDescent, 1.0);
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let init = Initializer::constant(DVector::zeros(2), 2);
        let trace =
            deriv::run_with_derivative(&p, &s, &theta, &init, &RunOptions::fixed(5)).unwrap();
        let xs = LiftedState::initial(theta.clone());
        let ds = stack_equal(&DMatrix::identity(2, 2));
        let e = error_series(&trace, &xs, &ds).unwrap();
        // X_1 = (θ, 0) still carries the old iterate
        assert!(e.iter_err[1] > 0.0);
        assert!(e.iter_err[2..].iter().all(|v| *v == 0.0));
        assert!(e.deriv_err[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn report_on_case2_and_round_trip() {
        let p = ls(30, 8, 7);
        let s = sched(Preset::Case2, p.lipschitz());
        let theta = DVector::from_element(1, 1.0);
        let init = Initializer::constant(DVector::zeros(8), 1);
        let a = full_report(
            &p,
            &s,
            &theta,
            &init,
            &RunOptions::fixed(300),
            &AnalysisOptions::default(),
        )
        .unwrap();
        let r = &a.report;
        assert!(r.limit.rho < 1.0);
        assert!(r.premise_c.holds);
        assert_eq!(r.premise_c.lhs, -1.0);
        assert!(r.step_inequality.as_ref().unwrap().envelope_holds);
        let json = serde_json::to_string(r).unwrap();
        let back: FullReport = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, r);
    }

    #[test]
    fn report_flags_case1_boundary() {
        let p = ls(30, 8, 7);
        let s = sched(Preset::Case1, p.lipschitz());
        let theta = DVector::from_element(1, 1.0);
        let init = Initializer::constant(DVector::zeros(8), 1);
        let a = full_report(
            &p,
            &s,
            &theta,
            &init,
            &RunOptions::fixed(300),
            &AnalysisOptions::default(),
        )
        .unwrap();
        assert!(a.report.premise_c.on_boundary);
        assert!(a.report.iter_rate.is_some());
        assert!(a.report.warnings.iter().any(|w| w.contains("boundary")));
    }

    proptest! {
        #[test]
        fn geometric_series_never_needs_eps(rho in 0.01f64..0.99, c in 0.1f64..10.0) {
            let series: Vec<f64> = (0..60).map(|k| c * rho.powi(k)).collect();
            let r = step_inequality_check(&series, rho, 0).unwrap();
            prop_assert_eq!(r.min_eps, 0.0);
        }

        #[test]
        fn r_squared_in_unit_interval(values in proptest::collection::vec(1e-6f64..1.0, 10..60)) {
            let r = fit_rate(&values, 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.r_squared));
        }
    }
}
