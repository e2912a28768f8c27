//! Flat TOML run configuration.
//!
//! ```toml
//! problem = "least_squares"
//! n = 20
//! m_rows = 50
//! seed = 42
//! x_tilde = "ones"
//! theta = [1.0]
//! schedule = "case2"
//! max_iter = 400
//! ```
//!
//! Every key is optional. Vector-valued keys accept `"zeros"`, `"ones"`,
//! `"gaussian"` or an explicit list.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisOptions, BurnIn};
use crate::deriv::Initializer;
use crate::error::{Error, Result};
use crate::problem::{
    LeastSquaresProblem, LipschitzBox, LogExpProblem, ProblemOracle, QuadraticProblem,
};
use crate::rng::{self, ExperimentRng};
use crate::schedule::{Preset, Schedule, ScheduleParams};
use crate::solver::RunOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    LeastSquares,
    LogExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedVector {
    Zeros,
    Ones,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Named(NamedVector),
    Values(Vec<f64>),
}

impl VectorSpec {
    /// Gaussian entries are drawn from `rng`; the other forms leave it
    /// untouched.
    fn build(&self, len: usize, what: &str, rng: &mut ExperimentRng) -> Result<DVector<f64>> {
        match self {
            VectorSpec::Named(NamedVector::Zeros) => Ok(DVector::zeros(len)),
            VectorSpec::Named(NamedVector::Ones) => Ok(DVector::from_element(len, 1.0)),
            VectorSpec::Named(NamedVector::Gaussian) => Ok(rng::gaussian_vector(len, rng)),
            VectorSpec::Values(v) if v.len() == len => Ok(DVector::from_column_slice(v)),
            VectorSpec::Values(v) => Err(Error::Config(format!(
                "{what} has {} entries, expected {len}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub n: usize,
    /// Rows of the measurement matrix.
    pub m_rows: usize,
    pub seed: u64,
    pub x_tilde: VectorSpec,
    /// A single value is broadcast for the quadratic problem.
    pub theta: Vec<f64>,

    pub schedule: Preset,
    pub gamma_scale: f64,
    pub momentum: f64,
    pub nesterov_c: f64,
    /// Force `a_0 = b_0 = 1`.
    pub unit_init: bool,

    pub max_iter: usize,
    pub grad_tol: Option<f64>,
    pub x0: VectorSpec,
    /// `∂θx0`, row-major `n x m`, or a named fill.
    pub dx0: VectorSpec,
    pub lipschitz_override: Option<f64>,
    /// Half-width of the box sampled for the log-exp Lipschitz estimate.
    pub lipschitz_radius: f64,
    pub lipschitz_samples: usize,

    pub tail_fraction: f64,
    /// Burn-in index for the step inequality; unset picks it from the
    /// iterate errors.
    pub burn_in: Option<usize>,
    pub fd_h: f64,

    pub out_dir: PathBuf,
    pub csv: bool,
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::LeastSquares,
            n: 20,
            m_rows: 50,
            seed: 42,
            x_tilde: VectorSpec::Named(NamedVector::Ones),
            theta: vec![1.0],
            schedule: Preset::Case2,
            gamma_scale: 1.0,
            momentum: 0.5,
            nesterov_c: 3.0,
            unit_init: false,
            max_iter: 400,
            grad_tol: None,
            x0: VectorSpec::Named(NamedVector::Zeros),
            dx0: VectorSpec::Named(NamedVector::Zeros),
            lipschitz_override: None,
            lipschitz_radius: 1.0,
            lipschitz_samples: 200,
            tail_fraction: 0.25,
            burn_in: None,
            fd_h: crate::fd::DEFAULT_STEP,
            out_dir: PathBuf::from("out"),
            csv: true,
            snapshot_every: 1,
        }
    }
}

/// Everything needed to run one configured experiment.
pub struct Experiment {
    pub problem: Box<dyn ProblemOracle>,
    pub schedule: Schedule,
    pub theta: DVector<f64>,
    pub init: Initializer,
    pub run: RunOptions,
    pub analysis: AnalysisOptions,
    /// Step for the AD vs FD comparison in `check`.
    pub fd_h: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.problem != ProblemKind::Quadratic && self.m_rows == 0 {
            return Err(Error::Config("m_rows must be positive".into()));
        }
        if self.theta.is_empty() || self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config(
                "theta must be a non-empty list of finite values".into(),
            ));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction must lie in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        if !(self.fd_h > 0.0) {
            return Err(Error::Config(format!(
                "fd_h must be positive, got {}",
                self.fd_h
            )));
        }
        if !(self.lipschitz_radius > 0.0) {
            return Err(Error::Config("lipschitz_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn theta_vector(&self) -> Result<DVector<f64>> {
        match self.problem {
            ProblemKind::Quadratic if self.theta.len() == 1 => {
                Ok(DVector::from_element(self.n, self.theta[0]))
            }
            ProblemKind::Quadratic if self.theta.len() == self.n => {
                Ok(DVector::from_column_slice(&self.theta))
            }
            ProblemKind::Quadratic => Err(Error::Config(format!(
                "theta has {} entries; the quadratic problem needs 1 or n = {}",
                self.theta.len(),
                self.n
            ))),
            _ if self.theta.len() == 1 => Ok(DVector::from_column_slice(&self.theta)),
            _ => Err(Error::Config("this problem takes a scalar theta".into())),
        }
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            gamma_scale: self.gamma_scale,
            momentum: self.momentum,
            nesterov_c: self.nesterov_c,
            unit_init: self.unit_init,
        }
    }

    /// Builds the instance. Random draws happen in a fixed order from one
    /// generator seeded with `seed`: the measurement matrix row by row, then
    /// `x_tilde`, then `x0`, then `dx0`.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let mut rng = rng::seeded(self.seed);
        let theta = self.theta_vector()?;
        let n = self.n;
        let m = theta.len();
        let problem: Box<dyn ProblemOracle>;
        let x0;
        match self.problem {
            ProblemKind::Quadratic => {
                if self.lipschitz_override.is_some() {
                    return Err(Error::Config(
                        "lipschitz_override only applies to least_squares".into(),
                    ));
                }
                problem = Box::new(QuadraticProblem::new(n)?);
                x0 = self.x0.build(n, "x0", &mut rng)?;
            }
            ProblemKind::LeastSquares => {
                let a = rng::gaussian_matrix(self.m_rows, n, &mut rng);
                let x_tilde = self.x_tilde.build(n, "x_tilde", &mut rng)?;
                let mut ls = LeastSquaresProblem::new(a, x_tilde)?;
                if let Some(l) = self.lipschitz_override {
                    ls = ls.with_lipschitz_override(l)?;
                }
                problem = Box::new(ls);
                x0 = self.x0.build(n, "x0", &mut rng)?;
            }
            ProblemKind::LogExp => {
                if self.lipschitz_override.is_some() {
                    return Err(Error::Config(
                        "lipschitz_override only applies to least_squares".into(),
                    ));
                }
                let a = rng::gaussian_matrix(self.m_rows, n, &mut rng);
                let x_tilde = self.x_tilde.build(n, "x_tilde", &mut rng)?;
                x0 = self.x0.build(n, "x0", &mut rng)?;
                let lip_box = LipschitzBox {
                    center: x0.as_slice().to_vec(),
                    radius: self.lipschitz_radius,
                    theta: theta.as_slice().to_vec(),
                    samples: self.lipschitz_samples,
                    seed: self.seed,
                };
                problem = Box::new(LogExpProblem::new(a, x_tilde, &lip_box)?);
            }
        }
        let dx0 = self.dx0.build(n * m, "dx0", &mut rng)?;
        let dx0 = DMatrix::from_row_slice(n, m, dx0.as_slice());
        let schedule =
            Schedule::preset(self.schedule, problem.lipschitz(), self.schedule_params())?;
        Ok(Experiment {
            problem,
            schedule,
            theta,
            init: Initializer { x0, dx0 },
            run: RunOptions {
                max_iter: self.max_iter,
                grad_tol: self.grad_tol,
                snapshot_every: self.snapshot_every,
            },
            analysis: AnalysisOptions {
                tail_fraction: self.tail_fraction,
                burn_in: self.burn_in.map_or(BurnIn::Auto, BurnIn::Fixed),
            },
            fd_h: self.fd_h,
        })
    }
}
