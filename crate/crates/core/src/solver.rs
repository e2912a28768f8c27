//! The inertial method as a one-step map on the lifted state `X = (x, z)`,
//! `z` holding the previous iterate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemOracle;
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedState {
    /// Current iterate `x_k`.
    pub x: DVector<f64>,
    /// Previous iterate `x_{k−1}`.
    pub z: DVector<f64>,
}

impl LiftedState {
    pub fn new(x: DVector<f64>, z: DVector<f64>) -> Self {
        debug_assert_eq!(x.len(), z.len());
        Self { x, z }
    }

    /// `(x0, x0)`, i.e. `x_{−1} = x_0`.
    pub fn initial(x0: DVector<f64>) -> Self {
        Self {
            z: x0.clone(),
            x: x0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `(x; z)` as one vector of length `2n`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.x[i] } else { self.z[i - n] })
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self {
            x: v.rows(0, n).into_owned(),
            z: v.rows(n, n).into_owned(),
        }
    }

    /// Euclidean distance in `R^{2n}`.
    pub fn distance(&self, other: &LiftedState) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.z - &other.z).norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.z.iter()).all(|v| v.is_finite())
    }
}

/// `y = x + c (x − z)`.
fn extrapolate(state: &LiftedState, c: f64) -> DVector<f64> {
    &state.x + (&state.x - &state.z) * c
}

fn check_dims(p: &dyn ProblemOracle, theta: &DVector<f64>, state: &LiftedState) -> Result<()> {
    if state.x.len() != p.n() || state.z.len() != p.n() {
        return Err(Error::Dimension(format!(
            "state has dimension ({}, {}), problem has n = {}",
            state.x.len(),
            state.z.len(),
            p.n()
        )));
    }
    if theta.len() != p.m() {
        return Err(Error::Dimension(format!(
            "parameter has length {}, problem has m = {}",
            theta.len(),
            p.m()
        )));
    }
    Ok(())
}

/// One iteration: `(y_a − γ_k ∇f(y_b, θ), x)`.
pub fn step(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
) -> Result<LiftedState> {
    check_dims(p, theta, state)?;
    let y_a = extrapolate(state, s.a_at(k));
    let y_b = extrapolate(state, s.b_at(k));
    let x_next = y_a - p.gradient(&y_b, theta) * s.gamma_at(k);
    if x_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            k,
            what: "iterate".into(),
        });
    }
    Ok(LiftedState {
        x: x_next,
        z: state.x.clone(),
    })
}

/// `F_k(X, θ)`. Same map as [`step`], exposed as a pure function of
/// `(X, θ)`.
pub fn lifted_map(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
) -> Result<LiftedState> {
    step(p, s, k, theta, state)
}

/// `J₁F_k(X, θ)`, the `2n x 2n` Jacobian in the state:
///
/// ```text
/// [ (1 + a_k) I − γ_k (1 + b_k) H    −a_k I + γ_k b_k H ]
/// [ I                                 0                 ]
/// ```
///
/// with `H = ∇²ₓₓ f(y_b, θ)`.
pub fn jac_state(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
) -> DMatrix<f64> {
    let n = p.n();
    let (a, b, g) = (s.a_at(k), s.b_at(k), s.gamma_at(k));
    let h = p.hess_xx(&extrapolate(state, b), theta);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    let mut top_left = &h * (-g * (1.0 + b));
    let mut top_right = &h * (g * b);
    for i in 0..n {
        top_left[(i, i)] += 1.0 + a;
        top_right[(i, i)] -= a;
    }
    j.view_mut((0, 0), (n, n)).copy_from(&top_left);
    j.view_mut((0, n), (n, n)).copy_from(&top_right);
    j.view_mut((n, 0), (n, n)).fill_with_identity();
    j
}

/// `J₂F_k(X, θ) = [−γ_k ∇²ₓθ f(y_b, θ); 0]`, `2n x m`.
pub fn jac_param(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
) -> DMatrix<f64> {
    let (n, m) = (p.n(), p.m());
    let cross = p.hess_xtheta(&extrapolate(state, s.b_at(k)), theta);
    let mut j = DMatrix::zeros(2 * n, m);
    j.view_mut((0, 0), (n, m))
        .copy_from(&(cross * -s.gamma_at(k)));
    j
}

/// `√(1 + (1 + a_k)² + (γ_k L)² (1 + b_k)²)`.
pub fn lipschitz_bound_fk(s: &Schedule, k: usize, lipschitz: f64) -> f64 {
    let (a, b, gl) = (s.a_at(k), s.b_at(k), s.gamma_at(k) * lipschitz);
    (1.0 + (1.0 + a).powi(2) + gl * gl * (1.0 + b).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// `‖X_k − X*‖` when the minimizer is known in closed form.
    pub iter_err: Option<f64>,
    pub a_k: f64,
    pub b_k: f64,
    pub gamma_k: f64,
    /// Present every `snapshot_every` iterations.
    pub state: Option<LiftedState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// One record per iterate, `k = 0` included.
    pub records: Vec<IterRecord>,
    pub final_state: LiftedState,
    /// Stopped on the gradient tolerance before `max_iter`.
    pub converged_early: bool,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn iter_errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.iter_err).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Stop once `‖∇ₓ f(x_k, θ)‖ ≤ grad_tol`.
    pub grad_tol: Option<f64>,
    /// Keep the full state every this many iterations; `0` keeps none.
    pub snapshot_every: usize,
}

impl RunOptions {
    pub fn fixed(max_iter: usize) -> Self {
        Self {
            max_iter,
            grad_tol: None,
            snapshot_every: 1,
        }
    }
}

pub(crate) fn record(
    p: &dyn ProblemOracle,
    s: &Schedule,
    k: usize,
    theta: &DVector<f64>,
    state: &LiftedState,
    reference: Option<&LiftedState>,
    snapshot_every: usize,
) -> IterRecord {
    let keep = snapshot_every > 0 && k.is_multiple_of(snapshot_every);
    IterRecord {
        k,
        f: p.value(&state.x, theta),
        grad_norm: p.gradient(&state.x, theta).norm(),
        iter_err: reference.map(|r| state.distance(r)),
        a_k: s.a_at(k),
        b_k: s.b_at(k),
        gamma_k: s.gamma_at(k),
        state: keep.then(|| state.clone()),
    }
}

/// Iterates `X_{k+1} = F_k(X_k, θ)` from `X_0 = (x0, x0)`.
pub fn run(
    p: &dyn ProblemOracle,
    s: &Schedule,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("initial point is not finite".into()));
    }
    let mut state = LiftedState::initial(x0.clone());
    check_dims(p, theta, &state)?;
    let reference = p.minimizer(theta).map(LiftedState::initial);
    let mut records = Vec::with_capacity(opts.max_iter + 1);
    let mut k = 0;
    loop {
        let rec = record(
            p,
            s,
            k,
            theta,
            &state,
            reference.as_ref(),
            opts.snapshot_every,
        );
        let done_early = opts.grad_tol.is_some_and(|tol| rec.grad_norm <= tol);
        records.push(rec);
        if k == opts.max_iter || done_early {
            return Ok(RunTrace {
                records,
                final_state: state,
                converged_early: done_early && k < opts.max_iter,
            });
        }
        state = match step(p, s, k, theta, &state) {
            Ok(next) => next,
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
        };
        k += 1;
    }
}
