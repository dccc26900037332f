//! Sampling rules for the two-arm bandit, expressed on the normalised state
//! `(d_k, r_k)` so that the same rule drives the finite-sample simulator and
//! the diffusion limit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{logistic, normal_cdf};
use crate::rng::RngStream;

/// Lower clamp keeping both propensities strictly inside (0, 1).
const PROP_MIN: f64 = f64::MIN_POSITIVE;
const PROP_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MabPolicyKind {
    TiThompson,
    TiTemperedGreedy,
    TiTemperedUcb,
    ClassicalThompson,
}

impl MabPolicyKind {
    pub const ALL: [MabPolicyKind; 4] = [
        MabPolicyKind::TiThompson,
        MabPolicyKind::TiTemperedGreedy,
        MabPolicyKind::TiTemperedUcb,
        MabPolicyKind::ClassicalThompson,
    ];

    pub fn is_translation_invariant(self) -> bool {
        !matches!(self, MabPolicyKind::ClassicalThompson)
    }
}

impl fmt::Display for MabPolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MabPolicyKind::TiThompson => "ti-thompson",
            MabPolicyKind::TiTemperedGreedy => "ti-tempered-greedy",
            MabPolicyKind::TiTemperedUcb => "ti-tempered-ucb",
            MabPolicyKind::ClassicalThompson => "thompson",
        })
    }
}

impl FromStr for MabPolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ti-thompson" | "thompsoninv" => Ok(MabPolicyKind::TiThompson),
            "ti-tempered-greedy" | "temperedgreedy" => Ok(MabPolicyKind::TiTemperedGreedy),
            "ti-tempered-ucb" | "tempereducb" => Ok(MabPolicyKind::TiTemperedUcb),
            "classical-thompson" | "thompson" => Ok(MabPolicyKind::ClassicalThompson),
            _ => Err(Error::InvalidConfig(format!("unknown policy '{s}'"))),
        }
    }
}

/// Limiting hyperparameters `(b, alpha, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabHyper {
    pub b: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for MabHyper {
    fn default() -> Self {
        Self { b: 1.0 / 20.0, alpha: 1.0, delta: 1.0 }
    }
}

/// Pre-limit hyperparameters `(b_T, alpha_T, delta_T)` on the raw reward scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawHyper {
    pub b_t: f64,
    pub alpha_t: f64,
    pub delta_t: f64,
}

/// Map from limiting hyperparameters to the finite-horizon sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HyperSchedule {
    /// `b_T = b sqrt T`, `alpha_T = alpha sqrt T`, `delta_T = delta T`.
    #[default]
    Canonical,
    /// As `Canonical` but with `delta_T = delta`, so the UCB bonus grows
    /// like `log T`.
    FixedDelta,
    /// Explicit sequence values for one horizon.
    Raw(RawHyper),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    FiniteSample { horizon: usize },
    Limit { grid_steps: usize },
}

impl PolicyMode {
    /// Smallest attainable positive `d`, used to cap the UCB bonus.
    pub fn d_floor(self) -> f64 {
        match self {
            PolicyMode::FiniteSample { horizon } => 1.0 / horizon as f64,
            PolicyMode::Limit { grid_steps } => 1.0 / grid_steps as f64,
        }
    }
}

/// Normalised sufficient statistics seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabPolicyState {
    pub d: [f64; 2],
    pub r: [f64; 2],
    pub t_over_horizon: f64,
}

impl MabPolicyState {
    pub fn new(d: [f64; 2], r: [f64; 2]) -> Self {
        Self { d, r, t_over_horizon: d[0] + d[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Coefficients {
    b2: f64,
    scale: f64,
    log_term: f64,
    d_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabPolicy {
    kind: MabPolicyKind,
    hyper: MabHyper,
    schedule: HyperSchedule,
    mode: PolicyMode,
    coef: Coefficients,
}

impl MabPolicy {
    pub fn new(kind: MabPolicyKind, hyper: MabHyper, schedule: HyperSchedule, mode: PolicyMode) -> Result<Self> {
        let coef = coefficients(kind, hyper, schedule, mode)?;
        Ok(Self { kind, hyper, schedule, mode, coef })
    }

    pub fn limit(kind: MabPolicyKind, hyper: MabHyper, grid_steps: usize) -> Result<Self> {
        Self::new(kind, hyper, HyperSchedule::Canonical, PolicyMode::Limit { grid_steps })
    }

    pub fn finite(kind: MabPolicyKind, hyper: MabHyper, horizon: usize) -> Result<Self> {
        Self::new(kind, hyper, HyperSchedule::Canonical, PolicyMode::FiniteSample { horizon })
    }

    /// Same rule and hyperparameters in another mode.
    pub fn in_mode(&self, mode: PolicyMode) -> Result<Self> {
        Self::new(self.kind, self.hyper, self.schedule, mode)
    }

    pub fn kind(&self) -> MabPolicyKind {
        self.kind
    }

    pub fn hyper(&self) -> MabHyper {
        self.hyper
    }

    pub fn schedule(&self) -> HyperSchedule {
        self.schedule
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    /// Sampling probabilities `(psi_1, psi_2)`.
    pub fn probs(&self, s: &MabPolicyState) -> Result<[f64; 2]> {
        let [d1, d2] = s.d;
        let [r1, r2] = s.r;
        if !(d1.is_finite() && d2.is_finite() && r1.is_finite() && r2.is_finite()) {
            return Err(Error::InvalidPolicyState("non-finite state".into()));
        }
        if d1 < 0.0 || d2 < 0.0 {
            return Err(Error::InvalidPolicyState("negative d".into()));
        }
        if d1 == 0.0 && d2 == 0.0 {
            return Ok([0.5, 0.5]);
        }
        let c = &self.coef;
        let mean = |r: f64, d: f64| if d > 0.0 { r / d } else { 0.0 };
        let (link, z) = match self.kind {
            MabPolicyKind::TiThompson => {
                if d1 == 0.0 || d2 == 0.0 {
                    return Ok([0.5, 0.5]);
                }
                let h = d1 * d2 / (d1 + d2);
                let num = (d1 * r2 - d2 * r1) / (d1 + d2);
                (Link::Probit, num / (h + c.b2).sqrt())
            }
            MabPolicyKind::TiTemperedGreedy => (Link::Logit, c.scale * (mean(r2, d2) - mean(r1, d1))),
            MabPolicyKind::TiTemperedUcb => {
                let bonus = |d: f64| (c.log_term / (2.0 * if d > 0.0 { d } else { c.d_floor })).sqrt();
                let gap = mean(r2, d2) - mean(r1, d1) + bonus(d2) - bonus(d1);
                (Link::Logit, c.scale * gap)
            }
            MabPolicyKind::ClassicalThompson => {
                let (v1, v2) = (d1 + c.b2, d2 + c.b2);
                if v1 <= 0.0 || v2 <= 0.0 {
                    return Ok([0.5, 0.5]);
                }
                (Link::Probit, (r2 / v2 - r1 / v1) / (1.0 / v1 + 1.0 / v2).sqrt())
            }
        };
        if z.is_nan() {
            return Err(Error::InvalidPolicyState("propensity is NaN".into()));
        }
        Ok(link.pair(z))
    }

    pub fn prob_arm2(&self, s: &MabPolicyState) -> Result<f64> {
        Ok(self.probs(s)?[1])
    }
}

#[derive(Clone, Copy)]
enum Link {
    Probit,
    Logit,
}

impl Link {
    /// `(F(-z), F(z))`, each evaluated directly and clamped into (0, 1).
    fn pair(self, z: f64) -> [f64; 2] {
        let f = match self {
            Link::Probit => normal_cdf,
            Link::Logit => logistic,
        };
        [f(-z).clamp(PROP_MIN, PROP_MAX), f(z).clamp(PROP_MIN, PROP_MAX)]
    }
}

fn coefficients(kind: MabPolicyKind, h: MabHyper, schedule: HyperSchedule, mode: PolicyMode) -> Result<Coefficients> {
    if !(h.b.is_finite() && h.b >= 0.0) {
        return Err(Error::InvalidHyperparameter(format!("b = {} must be >= 0", h.b)));
    }
    if !(h.alpha.is_finite() && h.alpha > 0.0) {
        return Err(Error::InvalidHyperparameter(format!("alpha = {} must be > 0", h.alpha)));
    }
    if !(h.delta.is_finite() && h.delta > 0.0) {
        return Err(Error::InvalidHyperparameter(format!("delta = {} must be > 0", h.delta)));
    }
    let limit = Coefficients { b2: h.b * h.b, scale: h.alpha, log_term: (1.0 / h.delta).ln(), d_floor: mode.d_floor() };
    let coef = match (mode, schedule) {
        (PolicyMode::Limit { grid_steps }, _) => {
            if grid_steps == 0 {
                return Err(Error::InvalidConfig("grid must have at least one step".into()));
            }
            limit
        }
        (PolicyMode::FiniteSample { horizon: 0 }, _) => {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        (PolicyMode::FiniteSample { .. }, HyperSchedule::Canonical) => limit,
        (PolicyMode::FiniteSample { horizon }, HyperSchedule::FixedDelta) => {
            Coefficients { log_term: (horizon as f64 / h.delta).ln(), ..limit }
        }
        (PolicyMode::FiniteSample { horizon }, HyperSchedule::Raw(raw)) => {
            let t = horizon as f64;
            if !(raw.b_t >= 0.0 && raw.alpha_t > 0.0 && raw.delta_t > 0.0) {
                return Err(Error::InvalidHyperparameter(format!("{raw:?}")));
            }
            Coefficients {
                b2: raw.b_t * raw.b_t / t,
                scale: raw.alpha_t / t.sqrt(),
                log_term: (t / raw.delta_t).ln(),
                d_floor: 1.0 / t,
            }
        }
    };
    if kind == MabPolicyKind::TiTemperedUcb && coef.log_term < 0.0 {
        return Err(Error::InvalidHyperparameter(format!(
            "confidence level gives negative exploration term {}",
            coef.log_term
        )));
    }
    Ok(coef)
}

/// Largest change in `prob_arm2` under `r_k -> r_k + c d_k` over random states.
pub fn check_translation_invariance(policy: &MabPolicy, trials: usize, rng: &mut RngStream) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let d1 = 0.01 + 0.98 * rng.uniform();
        let d2 = 0.01 + (1.0 - d1 - 0.01) * rng.uniform();
        let r = [2.0 * rng.standard_normal(), 2.0 * rng.standard_normal()];
        let c = 200.0 * rng.uniform() - 100.0;
        let base = policy.prob_arm2(&MabPolicyState::new([d1, d2], r))?;
        let shifted = policy.prob_arm2(&MabPolicyState::new([d1, d2], [r[0] + c * d1, r[1] + c * d2]))?;
        worst = worst.max((base - shifted).abs());
    }
    Ok(worst)
}
