//! Forward propagation of `∂θX_k` through the iteration, the limit matrix
//! `M` with its spectral radius, and the fixed-point derivative.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemOracle;
use crate::schedule::{Limits, Schedule};
use crate::solver::{self, jac_param, jac_state, LiftedState, RunOptions, RunTrace};

/// `∂θX_k`, `2n x m`. The top block is `∂θx_k`, the bottom `∂θx_{k−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeState {
    pub d: DMatrix<f64>,
    pub k: usize,
}

impl DerivativeState {
    /// `D_0 = [dx0; dx0]`.
    pub fn initial(dx0: &DMatrix<f64>) -> Self {
        Self {
            d: stack_equal(dx0),
            k: 0,
        }
    }

    pub fn top(&self) -> DMatrix<f64> {
        let n = self.d.nrows() / 2;
        self.d.rows(0, n).into_owned()
    }

    pub fn bottom(&self) -> DMatrix<f64> {
        let n = self.d.nrows() / 2;
        self.d.rows(n, n).into_owned()
    }
}

/// `[b; b]`.
pub fn stack_equal(block: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = block.shape();
    let mut d = DMatrix::zeros(2 * n, m);
    d.view_mut((0, 0), (n, m)).copy_from(block);
    d.view_mut((n, 0), (n, m)).copy_from(block);
    d
}

/// `D_{k+1} = J₁F_k(X_k, θ) D_k + J₂F_k(X_k, θ)`.
pub fn propagate_step(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
    deriv: &DerivativeState,
) -> Result<DerivativeState> {
    if deriv.k != k {
        return Err(Error::Parameter(format!(
            "derivative is at iteration {} but the step is {k}",
            deriv.k
        )));
    }
    let (n, m) = (p.n(), p.m());
    if deriv.d.shape() != (2 * n, m) {
        return Err(Error::Dimension(format!(
            "derivative has shape {:?}, expected ({}, {m})",
            deriv.d.shape(),
            2 * n
        )));
    }
    let j1 = jac_state(p, s, k, theta, state);
    let j2 = jac_param(p, s, k, theta, state);
    let top = j1.rows(0, n) * &deriv.d + j2.rows(0, n);
    if top.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            k,
            what: "derivative".into(),
        });
    }
    // the bottom rows of J₁ are [I 0] and those of J₂ vanish, so the new
    // bottom block is the old top block
    let mut d = DMatrix::zeros(2 * n, m);
    d.view_mut((0, 0), (n, m)).copy_from(&top);
    d.view_mut((n, 0), (n, m)).copy_from(&deriv.d.rows(0, n));
    Ok(DerivativeState { d, k: k + 1 })
}

/// Initial point `x0` and its parameter derivative `∂θx0`, `n x m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Initializer {
    pub x0: DVector<f64>,
    pub dx0: DMatrix<f64>,
}

impl Initializer {
    /// A constant initial point, `∂θx0 = 0`.
    pub fn constant(x0: DVector<f64>, m: usize) -> Self {
        let n = x0.len();
        Self {
            x0,
            dx0: DMatrix::zeros(n, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivRecord {
    pub k: usize,
    /// `‖D_k − D*‖_F` when `∂θx*` is known in closed form.
    pub deriv_err: Option<f64>,
    /// Kept on the same thinning as the state snapshots.
    pub d: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivTrace {
    pub run: RunTrace,
    pub derivs: Vec<DerivRecord>,
    pub final_derivative: DerivativeState,
}

impl DerivTrace {
    pub fn deriv_errors(&self) -> Option<Vec<f64>> {
        self.derivs.iter().map(|r| r.deriv_err).collect()
    }
}

/// Closed-form `D* = [∂θx*; ∂θx*]` when the oracle provides it.
pub fn closed_form_derivative(p: &dyn ProblemOracle, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
    p.minimizer_derivative(theta).map(|dx| stack_equal(&dx))
}

/// Joint iteration of `(X_k, D_k)` from `X_0 = (x0, x0)`, `D_0 = [dx0; dx0]`.
pub fn run_with_derivative(
    p: &dyn ProblemOracle,
    s: &Schedule,
    theta: &DVector<f64>,
    init: &Initializer,
    opts: &RunOptions,
) -> Result<DerivTrace> {
    if init.dx0.shape() != (p.n(), p.m()) {
        return Err(Error::Dimension(format!(
            "dx0 has shape {:?}, expected ({}, {})",
            init.dx0.shape(),
            p.n(),
            p.m()
        )));
    }
    if init.x0.len() != p.n() || theta.len() != p.m() {
        return Err(Error::Dimension(format!(
            "x0 has length {} and θ length {}, problem has n = {}, m = {}",
            init.x0.len(),
            theta.len(),
            p.n(),
            p.m()
        )));
    }
    if init.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("initial point is not finite".into()));
    }
    let x_ref = p.minimizer(theta).map(LiftedState::initial);
    let d_ref = closed_form_derivative(p, theta);
    let mut state = LiftedState::initial(init.x0.clone());
    let mut deriv = DerivativeState::initial(&init.dx0);
    let mut records = Vec::with_capacity(opts.max_iter + 1);
    let mut derivs = Vec::with_capacity(opts.max_iter + 1);
    let keep = |k: usize| opts.snapshot_every > 0 && k.is_multiple_of(opts.snapshot_every);
    let mut k = 0;
    loop {
        let rec = solver::record(p, s, k, theta, &state, x_ref.as_ref(), opts.snapshot_every);
        let done_early = opts.grad_tol.is_some_and(|tol| rec.grad_norm <= tol);
        records.push(rec);
        derivs.push(DerivRecord {
            k,
            deriv_err: d_ref.as_ref().map(|r| (&deriv.d - r).norm()),
            d: keep(k).then(|| deriv.d.clone()),
        });
        if k == opts.max_iter || done_early {
            return Ok(DerivTrace {
                run: RunTrace {
                    records,
                    final_state: state,
                    converged_early: done_early && k < opts.max_iter,
                },
                derivs,
                final_derivative: deriv,
            });
        }
        let next = solver::step(p, s, k, theta, &state)
            .and_then(|x| propagate_step(p, s, k, theta, &state, &deriv).map(|d| (x, d)));
        match next {
            Ok((x, d)) => {
                state = x;
                deriv = d;
            }
            Err(Error::NonFinite { k, .. }) => {
                return Err(Error::Diverged {
                    k,
                    partial: Box::new(RunTrace {
                        records,
                        final_state: state,
                        converged_early: false,
                    }),
                });
            }
            Err(e) => return Err(e),
        }
        k += 1;
    }
}

/// `M` from the Hessian: `[[(1+a)I − γ(1+b)H, −aI + γbH], [I, 0]]`.
pub fn m_from_hessian(h: &DMatrix<f64>, limits: &Limits) -> DMatrix<f64> {
    let n = h.nrows();
    let Limits { a, b, gamma } = *limits;
    let mut top_left = h * (-gamma * (1.0 + b));
    let mut top_right = h * (gamma * b);
    for i in 0..n {
        top_left[(i, i)] += 1.0 + a;
        top_right[(i, i)] -= a;
    }
    assemble(&top_left, &top_right)
}

/// `M` from `G = I − γH`: `[[(a−b)I + (1+b)G, −(a−b)I − bG], [I, 0]]`.
pub fn m_from_g(g: &DMatrix<f64>, a: f64, b: f64) -> DMatrix<f64> {
    let n = g.nrows();
    let mut top_left = g * (1.0 + b);
    let mut top_right = g * -b;
    for i in 0..n {
        top_left[(i, i)] += a - b;
        top_right[(i, i)] -= a - b;
    }
    assemble(&top_left, &top_right)
}

fn assemble(top_left: &DMatrix<f64>, top_right: &DMatrix<f64>) -> DMatrix<f64> {
    let n = top_left.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(top_left);
    m.view_mut((0, n), (n, n)).copy_from(top_right);
    m.view_mut((n, 0), (n, n)).fill_with_identity();
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitMatrix {
    pub m: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Eigenvalues of `G`, ascending.
    pub eta: Vec<f64>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub rho: f64,
    pub limits: Limits,
    /// `‖∇ₓ f(x*, θ)‖` at the supplied point.
    pub grad_norm: f64,
    pub warnings: Vec<String>,
}

const STATIONARITY_TOL: f64 = 1e-6;

/// Builds `M` at `X* = (x*, x*)` for the limits `(a, b, γ)`.
pub fn limit_matrix(
    p: &dyn ProblemOracle,
    limits: &Limits,
    theta: &DVector<f64>,
    x_star: &DVector<f64>,
) -> LimitMatrix {
    let mut warnings = Vec::new();
    let grad_norm = p.gradient(x_star, theta).norm();
    if grad_norm > STATIONARITY_TOL {
        warnings.push(format!(
            "gradient norm {grad_norm:.3e} at the supplied x* exceeds {STATIONARITY_TOL:e}"
        ));
    }
    let h = p.hess_xx(x_star, theta);
    let n = h.nrows();
    let scale = h.norm().max(1.0);
    let asym = (&h - h.transpose()).norm();
    if asym > 1e-10 * scale {
        warnings.push(format!("Hessian is not symmetric (‖H − Hᵀ‖ = {asym:.3e})"));
    }
    let h_sym = (&h + h.transpose()) * 0.5;
    let lambda_min = SymmetricEigen::new(h_sym.clone()).eigenvalues.min();
    if lambda_min < -1e-10 * scale {
        warnings.push(format!(
            "Hessian is not positive semidefinite (λ_min = {lambda_min:.3e})"
        ));
    }
    let g = DMatrix::identity(n, n) - &h_sym * limits.gamma;
    let mut eta: Vec<f64> = SymmetricEigen::new(g.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eta.sort_by(f64::total_cmp);
    let eta_min = eta.first().copied().unwrap_or(f64::NAN);
    let eta_max = eta.last().copied().unwrap_or(f64::NAN);
    let rho = spectral_radius_of_eta(&eta, limits.a, limits.b);
    LimitMatrix {
        m: m_from_hessian(&h_sym, limits),
        g,
        eta,
        eta_min,
        eta_max,
        rho,
        limits: *limits,
        grad_norm,
        warnings,
    }
}

/// Roots of `σ² − ((a−b) + (1+b)η) σ + (a−b) + bη = 0`.
pub fn sigma_roots(eta: f64, a: f64, b: f64) -> [Complex<f64>; 2] {
    let p = (a - b) + (1.0 + b) * eta;
    let q = (a - b) + b * eta;
    let disc = Complex::new(p * p - 4.0 * q, 0.0).sqrt();
    let half = Complex::new(0.5 * p, 0.0);
    [half + disc * 0.5, half - disc * 0.5]
}

pub fn spectral_radius_of_eta(eta: &[f64], a: f64, b: f64) -> f64 {
    eta.iter()
        .flat_map(|&e| sigma_roots(e, a, b))
        .map(|s| s.norm())
        .fold(0.0, f64::max)
}

/// `ρ(M)` from the eigenvalues of `G`, one scalar quadratic per eigenvalue.
pub fn spectral_radius(lm: &LimitMatrix, a: f64, b: f64) -> f64 {
    spectral_radius_of_eta(&lm.eta, a, b)
}

/// `ρ` of a general square matrix through its complex Schur form.
pub fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn guarded_solve(lhs: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(&lhs);
    if !(condition <= 1.0 / f64::EPSILON.sqrt()) {
        return Err(Error::Singular { condition });
    }
    lhs.lu().solve(rhs).ok_or(Error::Singular { condition })
}

/// `∂θX*` from `[[−aI + γ(1+b)H, aI − γbH], [−I, I]] D = [−γ∇²ₓθ f; 0]`.
pub fn fixed_point_derivative(
    p: &dyn ProblemOracle,
    limits: &Limits,
    theta: &DVector<f64>,
    x_star: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let (n, m) = (p.n(), p.m());
    let Limits { a, b, gamma } = *limits;
    let h = p.hess_xx(x_star, theta);
    let mut top_left = &h * (gamma * (1.0 + b));
    let mut top_right = &h * (-gamma * b);
    for i in 0..n {
        top_left[(i, i)] -= a;
        top_right[(i, i)] += a;
    }
    let mut lhs = DMatrix::zeros(2 * n, 2 * n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&top_left);
    lhs.view_mut((0, n), (n, n)).copy_from(&top_right);
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&-DMatrix::<f64>::identity(n, n));
    lhs.view_mut((n, n), (n, n)).fill_with_identity();
    let mut rhs = DMatrix::zeros(2 * n, m);
    rhs.view_mut((0, 0), (n, m))
        .copy_from(&(p.hess_xtheta(x_star, theta) * -gamma));
    guarded_solve(lhs, &rhs)
}

/// `(I − J_x)⁻¹ J_θ`, requiring `ρ(J_x) < 1`.
pub fn generic_fixed_point_derivative(
    jx: &DMatrix<f64>,
    jtheta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = jx.nrows();
    if jx.ncols() != d || jtheta.nrows() != d {
        return Err(Error::Dimension(format!(
            "J_x is {:?} and J_θ is {:?}",
            jx.shape(),
            jtheta.shape()
        )));
    }
    let rho = dense_spectral_radius(jx);
    if !(rho < 1.0) {
        return Err(Error::Premise(format!("ρ(J_x) = {rho:.6} is not below 1")));
    }
    guarded_solve(DMatrix::identity(d, d) - jx, jtheta)
}

/// Where `x*(θ)` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerSource {
    ClosedForm,
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMinimizer {
    pub x: DVector<f64>,
    pub source: MinimizerSource,
    pub grad_norm: f64,
    pub warning: Option<String>,
}

pub const STAR_GRAD_TOL: f64 = 1e-12;
pub const STAR_MAX_ITER: usize = 200_000;

/// `x*(θ)` in closed form when available, otherwise by running the solver
/// to `‖∇f‖ ≤ 1e-12`.
pub fn resolve_minimizer(
    p: &dyn ProblemOracle,
    s: &Schedule,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<ResolvedMinimizer> {
    if let Some(x) = p.minimizer(theta) {
        let grad_norm = p.gradient(&x, theta).norm();
        return Ok(ResolvedMinimizer {
            x,
            source: MinimizerSource::ClosedForm,
            grad_norm,
            warning: None,
        });
    }
    let opts = RunOptions {
        max_iter: STAR_MAX_ITER,
        grad_tol: Some(STAR_GRAD_TOL),
        snapshot_every: 0,
    };
    let trace = solver::run(p, s, theta, x0, &opts)?;
    let grad_norm = trace.records.last().map_or(f64::NAN, |r| r.grad_norm);
    let warning = (!trace.converged_early).then(|| {
        let msg = format!(
            "x* not resolved to ‖∇f‖ ≤ {STAR_GRAD_TOL:e} in {STAR_MAX_ITER} iterations \
             (reached {grad_norm:.3e})"
        );
        log::warn!("{msg}");
        msg
    });
    Ok(ResolvedMinimizer {
        x: trace.final_state.x,
        source: MinimizerSource::Solver,
        grad_norm,
        warning,
    })
}
