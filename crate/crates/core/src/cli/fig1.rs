//! The two-case least-squares experiment: inertial steps (`case1`) against
//! gradient descent with varying step (`case2`), iterate and derivative
//! errors side by side.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, burn_in_index, fit_rate, AnalysisOptions, FullReport, RateReport, ERROR_FLOOR,
};
use crate::deriv::Initializer;
use crate::error::{Error, Result};
use crate::problem::{LeastSquaresProblem, ProblemOracle};
use crate::rng;
use crate::schedule::{Preset, Schedule, ScheduleParams};
use crate::solver::RunOptions;

use super::output;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Setup {
    pub n: usize,
    pub m_rows: usize,
    pub seed: u64,
    pub theta: f64,
    pub max_iter: usize,
}

impl Default for Fig1Setup {
    fn default() -> Self {
        Self {
            n: 20,
            m_rows: 50,
            seed: 42,
            theta: 1.0,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub preset: Preset,
    pub report: FullReport,
    pub iter_err: Vec<f64>,
    pub deriv_err: Vec<f64>,
    pub burn_in: Option<usize>,
    /// `iter_err[K] ρ^{k−K}`.
    pub iter_reference: Vec<f64>,
    /// `deriv_err[K] ρ^{k−K}`.
    pub deriv_reference: Vec<f64>,
}

/// Steps `k` with `e[k+1] > e[k]`, ignoring values at the round-off floor.
pub fn increases(series: &[f64], from: usize) -> Vec<usize> {
    let floor = ERROR_FLOOR * series.first().copied().unwrap_or(1.0).max(1.0);
    (from..series.len().saturating_sub(1))
        .filter(|&k| series[k + 1] > series[k] * (1.0 + 1e-12) && series[k + 1] > floor)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phenomenology {
    pub case1_iter_increases: usize,
    pub case1_deriv_increases_after_burn_in: usize,
    /// Fit over the last 25% of above-floor derivative errors.
    pub case1_deriv_tail: Option<RateReport>,
    pub case1_iter_tail: Option<RateReport>,
    pub case2_iter_tail: Option<RateReport>,
    pub case2_iter_increases_after_burn_in: usize,
    pub case2_deriv_increases_after_burn_in: usize,
    pub case1_final_iter_ratio: f64,
    pub case2_final_iter_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Outcome {
    pub setup: Fig1Setup,
    pub note: String,
    pub lipschitz: f64,
    pub case1: CaseOutcome,
    pub case2: CaseOutcome,
    pub phenomenology: Phenomenology,
}

impl Fig1Outcome {
    pub fn lines(&self) -> Vec<String> {
        let ph = &self.phenomenology;
        let r2 = |r: &Option<RateReport>| r.as_ref().map_or(f64::NAN, |r| r.r_squared);
        vec![
            format!(
                "case1: ρ(M) = {:.6}, final iter ratio {:.3e}, {} iterate increases, derivative tail r² = {:.4}",
                self.case1.report.limit.rho,
                ph.case1_final_iter_ratio,
                ph.case1_iter_increases,
                r2(&ph.case1_deriv_tail)
            ),
            format!(
                "case2: ρ(M) = {:.6}, final iter ratio {:.3e}, increases after burn-in: iterate {}, derivative {}",
                self.case2.report.limit.rho,
                ph.case2_final_iter_ratio,
                ph.case2_iter_increases_after_burn_in,
                ph.case2_deriv_increases_after_burn_in
            ),
        ]
    }
}

pub fn fig1_problem(setup: &Fig1Setup) -> Result<LeastSquaresProblem> {
    let a = rng::gaussian_matrix(setup.m_rows, setup.n, &mut rng::seeded(setup.seed));
    LeastSquaresProblem::new(a, DVector::from_element(setup.n, 1.0))
}

fn reference(series: &[f64], k0: Option<usize>, rho: f64) -> Vec<f64> {
    match k0 {
        Some(k0) if k0 < series.len() => (0..series.len())
            .map(|k| series[k0] * rho.powf(k as f64 - k0 as f64))
            .collect(),
        _ => Vec::new(),
    }
}

/// The case outcome and its trace in the run CSV schema.
fn run_case(
    p: &LeastSquaresProblem,
    setup: &Fig1Setup,
    preset: Preset,
) -> Result<(CaseOutcome, Vec<u8>)> {
    let s = Schedule::preset(preset, p.lipschitz(), ScheduleParams::default())?;
    let theta = DVector::from_element(1, setup.theta);
    let init = Initializer::constant(DVector::zeros(setup.n), 1);
    let a = analysis::full_report(
        p,
        &s,
        &theta,
        &init,
        &RunOptions::fixed(setup.max_iter),
        &AnalysisOptions::default(),
    )?;
    let iter_err = a.series.iter_err.clone().unwrap_or_default();
    let deriv_err = a.series.deriv_err.clone().ok_or_else(|| {
        Error::Parameter("least squares always has a closed-form derivative".into())
    })?;
    let burn_in = burn_in_index(&iter_err);
    let rho = a.report.limit.rho;
    let csv = output::trace_csv(&a.trace.run, Some(&a.series))?;
    let outcome = CaseOutcome {
        preset,
        iter_reference: reference(&iter_err, burn_in, rho),
        deriv_reference: reference(&deriv_err, burn_in, rho),
        report: a.report,
        iter_err,
        deriv_err,
        burn_in,
    };
    Ok((outcome, csv))
}

/// Runs both cases concurrently on one seeded instance.
pub fn reproduce_fig1(setup: &Fig1Setup) -> Result<Fig1Outcome> {
    reproduce_with_traces(setup).map(|(outcome, _)| outcome)
}

fn reproduce_with_traces(setup: &Fig1Setup) -> Result<(Fig1Outcome, [Vec<u8>; 2])> {
    let p = fig1_problem(setup)?;
    let (case1, case2) = std::thread::scope(|scope| {
        let h1 = scope.spawn(|| run_case(&p, setup, Preset::Case1));
        let h2 = scope.spawn(|| run_case(&p, setup, Preset::Case2));
        (
            h1.join().expect("case1 worker panicked"),
            h2.join().expect("case2 worker panicked"),
        )
    });
    let ((case1, csv1), (case2, csv2)) = (case1?, case2?);
    let ratio = |c: &CaseOutcome| match (c.iter_err.first(), c.iter_err.last()) {
        (Some(first), Some(last)) if *first > 0.0 => last / first,
        _ => f64::NAN,
    };
    let after = |c: &CaseOutcome, s: &[f64]| increases(s, c.burn_in.unwrap_or(s.len())).len();
    let phenomenology = Phenomenology {
        case1_iter_increases: increases(&case1.iter_err, 0).len(),
        case1_deriv_increases_after_burn_in: after(&case1, &case1.deriv_err),
        case1_deriv_tail: fit_rate(&case1.deriv_err, 0.25).ok(),
        case1_iter_tail: fit_rate(&case1.iter_err, 0.25).ok(),
        case2_iter_tail: fit_rate(&case2.iter_err, 0.25).ok(),
        case2_iter_increases_after_burn_in: after(&case2, &case2.iter_err),
        case2_deriv_increases_after_burn_in: after(&case2, &case2.deriv_err),
        case1_final_iter_ratio: ratio(&case1),
        case2_final_iter_ratio: ratio(&case2),
    };
    let outcome = Fig1Outcome {
        setup: *setup,
        note: super::DEFAULTS_NOTE.into(),
        lipschitz: p.lipschitz(),
        case1,
        case2,
        phenomenology,
    };
    Ok((outcome, [csv1, csv2]))
}

/// Writes `case1_trace.csv`, `case2_trace.csv`, `fig1_series.csv` and
/// `fig1_summary.json` under `dir`.
pub fn cmd_reproduce_fig1(dir: &Path) -> Result<Fig1Outcome> {
    let (outcome, traces) = reproduce_with_traces(&Fig1Setup::default())?;
    let col = |v: &[f64]| v.iter().map(|x| Some(*x)).collect::<Vec<_>>();
    let names = [
        "case1_iter_err",
        "case1_deriv_err",
        "case1_iter_ref",
        "case1_deriv_ref",
        "case2_iter_err",
        "case2_deriv_err",
        "case2_iter_ref",
        "case2_deriv_ref",
    ];
    let (c1, c2) = (&outcome.case1, &outcome.case2);
    let columns = [
        col(&c1.iter_err),
        col(&c1.deriv_err),
        col(&c1.iter_reference),
        col(&c1.deriv_reference),
        col(&c2.iter_err),
        col(&c2.deriv_err),
        col(&c2.iter_reference),
        col(&c2.deriv_reference),
    ];
    output::write_atomic(
        &dir.join("fig1_series.csv"),
        &output::columns_csv(&names, &columns)?,
    )?;

    for (case, csv) in [c1, c2].into_iter().zip(&traces) {
        output::write_atomic(&dir.join(format!("{}_trace.csv", case.preset)), csv)?;
    }
    output::write_atomic(
        &dir.join("fig1_summary.json"),
        &output::json_bytes(&outcome)?,
    )?;
    Ok(outcome)
}
