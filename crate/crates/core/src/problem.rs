//! Parametric objectives `f(x, θ)` with exact first and second order
//! information.
//!
//! Three problems are built in:
//!
//! * [`QuadraticProblem`]: `½ (x − θ)ᵀ Q (x − θ)`, `Q = I` by default, `θ ∈ Rⁿ`.
//! * [`LeastSquaresProblem`]: `½ ‖y(θ) − A x‖²` with `y(θ) = A x̄(θ)` and
//!   `x̄(θ) = ½ x̃ θ²`, scalar `θ`.
//! * [`LogExpProblem`]: `½ logexp(y(θ) − A x)²` with the same `y(θ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// First and second order oracle for a parametric objective.
///
/// Implementations are immutable after construction, so one oracle can be
/// shared across threads running independent experiments.
pub trait ProblemOracle: Send + Sync {
    fn name(&self) -> &str;
    /// Dimension of the decision variable `x`.
    fn n(&self) -> usize;
    /// Dimension of the parameter `θ`.
    fn m(&self) -> usize;
    fn value(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64;
    /// `∇ₓ f(x, θ)`.
    fn gradient(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;
    /// `∇²ₓₓ f(x, θ)`, `n x n`.
    fn hess_xx(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;
    /// `∇²ₓθ f(x, θ)`, `n x m`.
    fn hess_xtheta(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;
    /// Lipschitz constant of `∇ₓ f`.
    fn lipschitz(&self) -> f64;
    /// Closed-form minimizer `x*(θ)` when one exists.
    fn minimizer(&self, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    /// Closed-form `∂θ x*(θ)` when one exists, `n x m`.
    fn minimizer_derivative(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    (min, max)
}

/// `½ (x − θ)ᵀ Q (x − θ)` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    curvature: DMatrix<f64>,
    lipschitz: f64,
}

impl QuadraticProblem {
    /// `½ ‖x − θ‖²` in `n` dimensions.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("quadratic problem needs n >= 1".into()));
        }
        Ok(Self {
            curvature: DMatrix::identity(n, n),
            lipschitz: 1.0,
        })
    }

    pub fn with_curvature(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() == 0 || !q.is_square() {
            return Err(Error::Dimension(format!(
                "curvature must be square and non-empty, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let asym = (&q - q.transpose()).norm();
        if asym > 1e-12 * q.norm().max(1.0) {
            return Err(Error::Parameter("curvature matrix is not symmetric".into()));
        }
        let (lo, hi) = symmetric_extremes(&q);
        if lo <= 0.0 {
            return Err(Error::StrongConvexity(format!(
                "curvature has smallest eigenvalue {lo:.3e}"
            )));
        }
        Ok(Self {
            curvature: q,
            lipschitz: hi,
        })
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }
}

impl ProblemOracle for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn n(&self) -> usize {
        self.curvature.nrows()
    }

    fn m(&self) -> usize {
        self.curvature.nrows()
    }

    fn value(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let d = x - theta;
        0.5 * d.dot(&(&self.curvature * &d))
    }

    fn gradient(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        &self.curvature * (x - theta)
    }

    fn hess_xx(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.curvature.clone()
    }

    fn hess_xtheta(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        -&self.curvature
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn minimizer(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(theta.clone())
    }

    fn minimizer_derivative(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.n();
        Some(DMatrix::identity(n, n))
    }
}

/// Signal and measurement model shared by the least-squares and log-exp
/// problems: `x̄(θ) = ½ x̃ θ²`, `y(θ) = A x̄(θ)`.
#[derive(Debug, Clone)]
struct ScaledSignal {
    a: DMatrix<f64>,
    x_tilde: DVector<f64>,
}

impl ScaledSignal {
    fn new(a: DMatrix<f64>, x_tilde: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Dimension("measurement matrix is empty".into()));
        }
        if a.ncols() != x_tilde.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but x_tilde has length {}",
                a.ncols(),
                x_tilde.len()
            )));
        }
        Ok(Self { a, x_tilde })
    }

    fn scalar(theta: &DVector<f64>) -> f64 {
        debug_assert_eq!(theta.len(), 1, "scalar parameter expected");
        theta[0]
    }

    fn signal(&self, theta: &DVector<f64>) -> DVector<f64> {
        let t = Self::scalar(theta);
        &self.x_tilde * (0.5 * t * t)
    }

    fn residual(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        &self.a * (self.signal(theta) - x)
    }

    /// `∂θ y(θ) = A x̃ θ` as an `m_rows x 1` matrix.
    fn measurement_rate(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.a * &self.x_tilde * Self::scalar(theta);
        DMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }
}

/// `½ ‖y(θ) − A x‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    model: ScaledSignal,
    gram: DMatrix<f64>,
    sigma_min: f64,
    sigma_max: f64,
    lipschitz: f64,
}

impl LeastSquaresProblem {
    /// Fails unless `A` has full column rank. The Lipschitz constant is
    /// `σ_max(A)²`, the spectral norm of `AᵀA`.
    pub fn new(a: DMatrix<f64>, x_tilde: DVector<f64>) -> Result<Self> {
        let model = ScaledSignal::new(a, x_tilde)?;
        let (rows, cols) = model.a.shape();
        if rows < cols {
            return Err(Error::StrongConvexity(format!(
                "A is {rows}x{cols}; full column rank needs rows >= cols"
            )));
        }
        let sv = model.a.singular_values();
        let sigma_max = sv.max();
        let sigma_min = sv.min();
        if !(sigma_min > 1e-10 * sigma_max) {
            return Err(Error::StrongConvexity(format!(
                "A is rank deficient (σ_min = {sigma_min:.3e}, σ_max = {sigma_max:.3e})"
            )));
        }
        let gram = model.a.transpose() * &model.a;
        Ok(Self {
            model,
            gram,
            sigma_min,
            sigma_max,
            lipschitz: sigma_max * sigma_max,
        })
    }

    /// Replace the Lipschitz constant, e.g. with `‖A‖` to replay a run that
    /// used that value.
    pub fn with_lipschitz_override(mut self, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Parameter(format!(
                "lipschitz override must be positive, got {lipschitz}"
            )));
        }
        self.lipschitz = lipschitz;
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.model.a
    }

    pub fn x_tilde(&self) -> &DVector<f64> {
        &self.model.x_tilde
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn singular_value_range(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    /// Largest `r` such that `θ ↦ ∇ₓ f(x, θ)` is `L`-Lipschitz on `[−r, r]`.
    pub fn theta_lipschitz_radius(&self) -> f64 {
        let rate = (&self.gram * &self.model.x_tilde).norm();
        if rate == 0.0 {
            f64::INFINITY
        } else {
            self.lipschitz / rate
        }
    }
}

impl ProblemOracle for LeastSquaresProblem {
    fn name(&self) -> &str {
        "least_squares"
    }

    fn n(&self) -> usize {
        self.model.a.ncols()
    }

    fn m(&self) -> usize {
        1
    }

    fn value(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        0.5 * self.model.residual(x, theta).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        -(self.model.a.transpose() * self.model.residual(x, theta))
    }

    fn hess_xx(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.gram.clone()
    }

    fn hess_xtheta(&self, _x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let v = -(&self.gram * &self.model.x_tilde) * ScaledSignal::scalar(theta);
        DMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn minimizer(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.model.signal(theta))
    }

    fn minimizer_derivative(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let v = &self.model.x_tilde * ScaledSignal::scalar(theta);
        Some(DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }
}

/// `log Σ exp(r_j)`, evaluated with a max shift.
pub fn logexp(r: &DVector<f64>) -> f64 {
    let shift = r.max();
    shift + r.iter().map(|v| (v - shift).exp()).sum::<f64>().ln()
}

/// `∇σ(r) / σ(r)` with `σ(r) = Σ exp(r_j)`, i.e. the softmax of `r`.
pub fn softmax(r: &DVector<f64>) -> DVector<f64> {
    let shift = r.max();
    let e = r.map(|v| (v - shift).exp());
    let total = e.sum();
    e / total
}

/// Box used to estimate a local Lipschitz constant by sampling
/// `‖∇²ₓₓ f‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBox {
    pub center: Vec<f64>,
    pub radius: f64,
    pub theta: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl LipschitzBox {
    pub fn around(center: DVector<f64>, theta: f64) -> Self {
        Self {
            center: center.as_slice().to_vec(),
            radius: 1.0,
            theta: vec![theta],
            samples: 200,
            seed: 0,
        }
    }
}

/// Safety factor applied to the sampled Hessian norm.
pub const LOGEXP_LIPSCHITZ_FACTOR: f64 = 1.5;

/// `½ logexp(y(θ) − A x)²`.
///
/// No strong convexity is available, so no closed-form minimizer is
/// exposed. The Lipschitz constant is a local estimate: `1.5` times the
/// largest sampled `‖∇²ₓₓ f‖₂` over a box.
#[derive(Debug, Clone)]
pub struct LogExpProblem {
    model: ScaledSignal,
    lipschitz: f64,
}

impl LogExpProblem {
    pub fn new(a: DMatrix<f64>, x_tilde: DVector<f64>, lip_box: &LipschitzBox) -> Result<Self> {
        let model = ScaledSignal::new(a, x_tilde)?;
        if model.a.iter().all(|v| *v == 0.0) {
            return Err(Error::Parameter("measurement matrix is zero".into()));
        }
        if lip_box.center.len() != model.a.ncols() {
            return Err(Error::Dimension(format!(
                "Lipschitz box center has length {}, expected {}",
                lip_box.center.len(),
                model.a.ncols()
            )));
        }
        let mut problem = Self {
            model,
            lipschitz: f64::NAN,
        };
        problem.lipschitz = problem.estimate_lipschitz(lip_box)?;
        Ok(problem)
    }

    fn estimate_lipschitz(&self, lip_box: &LipschitzBox) -> Result<f64> {
        let center = DVector::from_column_slice(&lip_box.center);
        let theta = DVector::from_column_slice(&lip_box.theta);
        let mut rng = rng::seeded(lip_box.seed);
        let mut worst = self.hessian_norm(&center, &theta);
        for _ in 0..lip_box.samples {
            let x = rng::uniform_in_box(&center, lip_box.radius, &mut rng);
            worst = worst.max(self.hessian_norm(&x, &theta));
        }
        if !worst.is_finite() {
            return Err(Error::NonFinite {
                k: 0,
                what: "log-exp Hessian norm while estimating the Lipschitz constant".into(),
            });
        }
        Ok(LOGEXP_LIPSCHITZ_FACTOR * worst.max(f64::MIN_POSITIVE))
    }

    fn hessian_norm(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let (lo, hi) = symmetric_extremes(&self.hess_xx(x, theta));
        lo.abs().max(hi.abs())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.model.a
    }

    pub fn x_tilde(&self) -> &DVector<f64> {
        &self.model.x_tilde
    }

    /// `x̄(θ)`, where the residual vanishes.
    pub fn signal(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.model.signal(theta)
    }

    pub fn residual(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.model.residual(x, theta)
    }

    /// Hessian of `½ logexp(r)²` in the residual `r`:
    /// `s sᵀ + ℓ (diag(s) − s sᵀ)` with `s = softmax(r)`, `ℓ = logexp(r)`.
    fn residual_hessian(&self, r: &DVector<f64>) -> DMatrix<f64> {
        let ell = logexp(r);
        let s = softmax(r);
        let outer = &s * s.transpose();
        let mut w = &outer * (1.0 - ell);
        for (j, sj) in s.iter().enumerate() {
            w[(j, j)] += ell * sj;
        }
        w
    }
}

impl ProblemOracle for LogExpProblem {
    fn name(&self) -> &str {
        "logexp"
    }

    fn n(&self) -> usize {
        self.model.a.ncols()
    }

    fn m(&self) -> usize {
        1
    }

    fn value(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let ell = logexp(&self.model.residual(x, theta));
        0.5 * ell * ell
    }

    fn gradient(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let r = self.model.residual(x, theta);
        let ell = logexp(&r);
        -(self.model.a.transpose() * softmax(&r)) * ell
    }

    fn hess_xx(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let w = self.residual_hessian(&self.model.residual(x, theta));
        let a = &self.model.a;
        let h = a.transpose() * w * a;
        // exact symmetry; the triple product can differ in the last bit
        (&h + h.transpose()) * 0.5
    }

    fn hess_xtheta(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let w = self.residual_hessian(&self.model.residual(x, theta));
        -(self.model.a.transpose() * w * self.model.measurement_rate(theta))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Measured first and second order information of the log-exp objective at
/// the zero-residual point `x̄(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub grad_norm: f64,
    pub hess_eig_min: f64,
    pub hess_eig_max: f64,
    /// `‖∇²ₓₓ f(x̄, θ) + (e/m) AᵀA‖_F`.
    pub claimed_hess_deviation: f64,
    /// `logexp(0) = log m_rows`.
    pub logexp_at_signal: f64,
    /// `‖(log m / m) Aᵀ 1‖`, the gradient norm expected at zero residual.
    pub expected_grad_norm: f64,
}

pub fn critical_point_report(p: &LogExpProblem, theta: &DVector<f64>) -> CriticalPointReport {
    let x_bar = p.signal(theta);
    let a = p.matrix();
    let rows = a.nrows() as f64;
    let grad = p.gradient(&x_bar, theta);
    let hess = p.hess_xx(&x_bar, theta);
    let (lo, hi) = symmetric_extremes(&hess);
    let claimed = (a.transpose() * a) * (-std::f64::consts::E / rows);
    let ones = DVector::from_element(a.nrows(), 1.0);
    CriticalPointReport {
        grad_norm: grad.norm(),
        hess_eig_min: lo,
        hess_eig_max: hi,
        claimed_hess_deviation: (&hess - claimed).norm(),
        logexp_at_signal: logexp(&p.residual(&x_bar, theta)),
        expected_grad_norm: (a.transpose() * ones * (rows.ln() / rows)).norm(),
    }
}
