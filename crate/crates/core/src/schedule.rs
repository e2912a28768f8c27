//! Inertial parameter sequences `a_k`, `b_k`, `γ_k` and the checks on them.
//!
//! `x_{k+1} = x_k + a_k (x_k − x_{k−1}) − γ_k ∇f(x_k + b_k (x_k − x_{k−1}))`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `a_k = b_k = 0`, `γ_k = 1/L`.
    GradientDescent,
    /// `a_k = momentum`, `b_k = 0`, `γ_k = 1/L`.
    HeavyBall,
    /// `a_k = b_k = (k − 1)/(k + c)`, `γ_k = 1/L`.
    NesterovC,
    /// `a_k = b_k = √5 − 2 − 10⁻³`, `γ_k = 1/L`.
    Example1,
    /// `a_k = b_k = (k − 1)/(k + 25)`, `γ_k = 1/L`.
    Example2,
    /// `a_k = b_k = (k − 1)/(k + 20)`, `γ_k = 1/(L − 2/k)`.
    Case1,
    /// `a_k = b_k = 0`, `γ_k = 1/(L − 2/k)`.
    Case2,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::GradientDescent,
        Preset::HeavyBall,
        Preset::NesterovC,
        Preset::Example1,
        Preset::Example2,
        Preset::Case1,
        Preset::Case2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::GradientDescent => "gradient_descent",
            Preset::HeavyBall => "heavy_ball",
            Preset::NesterovC => "nesterov_c",
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown schedule preset `{s}`")))
    }
}

/// `√5 − 2 − 10⁻³`.
pub fn example1_momentum() -> f64 {
    5f64.sqrt() - 2.0 - 1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    /// Multiplies every step size. `1.0` reproduces the presets.
    pub gamma_scale: f64,
    /// Constant `a_k` of the heavy-ball preset.
    pub momentum: f64,
    /// Offset `c` of the `nesterov_c` preset.
    pub nesterov_c: f64,
    /// Force `a_0 = b_0 = 1` instead of the (clamped) schedule value.
    pub unit_init: bool,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            gamma_scale: 1.0,
            momentum: 0.5,
            nesterov_c: 3.0,
            unit_init: false,
        }
    }
}

/// Declared limits `(a, b, γ)` of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub preset: Preset,
    pub lipschitz: f64,
    pub params: ScheduleParams,
}

impl Schedule {
    pub fn preset(preset: Preset, lipschitz: f64, params: ScheduleParams) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Parameter(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        if !(params.gamma_scale > 0.0 && params.gamma_scale.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma_scale must be positive, got {}",
                params.gamma_scale
            )));
        }
        match preset {
            Preset::HeavyBall if !(0.0..=1.0).contains(&params.momentum) => {
                return Err(Error::Parameter(format!(
                    "heavy-ball momentum must lie in [0, 1], got {}",
                    params.momentum
                )));
            }
            Preset::NesterovC if !(params.nesterov_c >= 3.0) => {
                return Err(Error::Parameter(format!(
                    "nesterov offset must be >= 3, got {}",
                    params.nesterov_c
                )));
            }
            _ => {}
        }
        Ok(Self {
            preset,
            lipschitz,
            params,
        })
    }

    pub fn name(&self) -> &'static str {
        self.preset.as_str()
    }

    fn ratio(k: usize, offset: f64) -> f64 {
        (k as f64 - 1.0) / (k as f64 + offset)
    }

    fn raw_a(&self, k: usize) -> f64 {
        match self.preset {
            Preset::GradientDescent | Preset::Case2 => 0.0,
            Preset::HeavyBall => self.params.momentum,
            Preset::NesterovC => Self::ratio(k, self.params.nesterov_c),
            Preset::Example1 => example1_momentum(),
            Preset::Example2 => Self::ratio(k, 25.0),
            Preset::Case1 => Self::ratio(k, 20.0),
        }
    }

    fn raw_b(&self, k: usize) -> f64 {
        match self.preset {
            Preset::HeavyBall => 0.0,
            _ => self.raw_a(k),
        }
    }

    fn clamp_unit(v: f64) -> f64 {
        v.clamp(0.0, 1.0)
    }

    pub fn a_at(&self, k: usize) -> f64 {
        if k == 0 && self.params.unit_init {
            1.0
        } else {
            Self::clamp_unit(self.raw_a(k))
        }
    }

    pub fn b_at(&self, k: usize) -> f64 {
        if k == 0 && self.params.unit_init {
            1.0
        } else {
            Self::clamp_unit(self.raw_b(k))
        }
    }

    fn varying_step(&self, k: usize) -> (f64, bool) {
        let l = self.lipschitz;
        if k == 0 {
            return (1.0 / l, false);
        }
        let raw = 1.0 / (l - 2.0 / k as f64);
        let (lo, hi) = (0.5 / l, 1.99 / l);
        // out-of-range values only occur for small L at small k
        if raw >= lo && raw <= hi {
            (raw, false)
        } else if raw > hi {
            (hi, true)
        } else {
            (lo, true)
        }
    }

    pub fn gamma_at(&self, k: usize) -> f64 {
        let base = match self.preset {
            Preset::Case1 | Preset::Case2 => self.varying_step(k).0,
            _ => 1.0 / self.lipschitz,
        };
        self.params.gamma_scale * base
    }

    /// Iterations in `0..=horizon` whose step size was clamped.
    pub fn clamp_events(&self, horizon: usize) -> Vec<usize> {
        match self.preset {
            Preset::Case1 | Preset::Case2 => {
                (0..=horizon).filter(|&k| self.varying_step(k).1).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn limits(&self) -> Limits {
        let (a, b) = match self.preset {
            Preset::GradientDescent | Preset::Case2 => (0.0, 0.0),
            Preset::HeavyBall => (self.params.momentum, 0.0),
            Preset::Example1 => (example1_momentum(), example1_momentum()),
            Preset::NesterovC | Preset::Example2 | Preset::Case1 => (1.0, 1.0),
        };
        Limits {
            a,
            b,
            gamma: self.params.gamma_scale / self.lipschitz,
        }
    }

    /// Largest deviation of `(a_k, b_k, γ_k)` from the declared limits.
    pub fn limit_deviation(&self, k: usize) -> f64 {
        let lim = self.limits();
        (self.a_at(k) - lim.a)
            .abs()
            .max((self.b_at(k) - lim.b).abs())
            .max((self.gamma_at(k) - lim.gamma).abs())
    }

    /// Iterations in `0..=horizon` where `γ_k ∉ (0, 2/L)` or `a_k`, `b_k`
    /// leave `[0, 1]`.
    pub fn violations(&self, horizon: usize) -> Vec<usize> {
        let upper = 2.0 / self.lipschitz;
        (0..=horizon)
            .filter(|&k| {
                let g = self.gamma_at(k);
                let (a, b) = (self.a_at(k), self.b_at(k));
                !(g > 0.0 && g < upper) || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `τ < (1 + a_k) − (γ_k L/2)(1 + b_k)²` with `a_k < (γ_k L/2) b_k`.
    First,
    /// `τ < (1 − 3a_k) − (γ_k L/2)(1 − b_k)²` with `b_k ≤ a_k` or
    /// `(γ_k L/2) b_k ≤ a_k < b_k`.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMargins {
    pub first: Option<f64>,
    pub second: Option<f64>,
}

/// Margins of both branches at one iteration; `None` where the branch's side
/// condition fails.
pub fn premise_b_margins(a: f64, b: f64, gamma_l: f64) -> BranchMargins {
    let half = 0.5 * gamma_l;
    let first = (a < half * b).then(|| (1.0 + a) - half * (1.0 + b).powi(2));
    let second =
        (b <= a || (half * b <= a && a < b)).then(|| (1.0 - 3.0 * a) - half * (1.0 - b).powi(2));
    BranchMargins { first, second }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseBReport {
    /// One branch holds with a positive margin at every checked iteration.
    pub satisfied_all: bool,
    /// Best branch with a positive margin at each `k`, if any.
    pub branch_per_k: Vec<Option<Branch>>,
    /// First iteration that breaks the uniform premise.
    pub first_violation: Option<usize>,
    /// Largest admissible `τ`: the infimum margin of the holding branch, or
    /// the infimum of the best per-iteration margins when none holds.
    /// `None` when some iteration satisfies neither side condition.
    pub max_tau: Option<f64>,
    pub uniform_branch: Option<Branch>,
}

/// Evaluates both branches of the per-iteration inequality for
/// `k = 0..=k_max`. Diagnostic only.
pub fn check_premise_b(s: &Schedule, lipschitz: f64, k_max: usize) -> PremiseBReport {
    let mut first_inf = f64::INFINITY;
    let mut second_inf = f64::INFINITY;
    let mut first_ok = true;
    let mut second_ok = true;
    let mut best_inf: Option<f64> = Some(f64::INFINITY);
    let mut branch_per_k = Vec::with_capacity(k_max + 1);

    for k in 0..=k_max {
        let margins = premise_b_margins(s.a_at(k), s.b_at(k), s.gamma_at(k) * lipschitz);
        match margins.first {
            Some(m) if m > 0.0 => first_inf = first_inf.min(m),
            _ => first_ok = false,
        }
        match margins.second {
            Some(m) if m > 0.0 => second_inf = second_inf.min(m),
            _ => second_ok = false,
        }
        let best = match (margins.first, margins.second) {
            (Some(x), Some(y)) => Some(if x >= y {
                (Branch::First, x)
            } else {
                (Branch::Second, y)
            }),
            (Some(x), None) => Some((Branch::First, x)),
            (None, Some(y)) => Some((Branch::Second, y)),
            (None, None) => None,
        };
        best_inf = match (best_inf, best) {
            (Some(acc), Some((_, m))) => Some(acc.min(m)),
            _ => None,
        };
        branch_per_k.push(best.filter(|(_, m)| *m > 0.0).map(|(b, _)| b));
    }

    let uniform_branch = match (first_ok, second_ok) {
        (true, true) if first_inf >= second_inf => Some(Branch::First),
        (true, _) => Some(Branch::First),
        (_, true) => Some(Branch::Second),
        _ => None,
    };
    let max_tau = match uniform_branch {
        Some(Branch::First) => Some(first_inf),
        Some(Branch::Second) => Some(second_inf),
        None => best_inf,
    };
    let first_violation = if uniform_branch.is_some() {
        None
    } else {
        branch_per_k.iter().position(Option::is_none).or_else(|| {
            let start = branch_per_k[0];
            branch_per_k.iter().position(|b| *b != start)
        })
    };

    PremiseBReport {
        satisfied_all: uniform_branch.is_some(),
        branch_per_k,
        first_violation,
        max_tau,
        uniform_branch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiseCReport {
    /// `(2(b − a) − 1)/(1 + 2b)`.
    pub lhs: f64,
    pub eta_min: f64,
    pub holds: bool,
    /// A limit sits at 1, outside the half-open range where the condition is
    /// stated.
    pub on_boundary: bool,
}

pub fn premise_c_lhs(a: f64, b: f64) -> f64 {
    (2.0 * (b - a) - 1.0) / (1.0 + 2.0 * b)
}

pub fn check_premise_c(s: &Schedule, eta_min: f64) -> PremiseCReport {
    let Limits { a, b, .. } = s.limits();
    let lhs = premise_c_lhs(a, b);
    PremiseCReport {
        lhs,
        eta_min,
        holds: lhs < eta_min,
        on_boundary: a >= 1.0 || b >= 1.0,
    }
}
