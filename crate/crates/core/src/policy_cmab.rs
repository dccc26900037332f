//! Sampling rules for the two-arm contextual bandit with linear outcome model.
//!
//! The state is the pair of normalised Gram matrices `S_k` and score vectors
//! `C_k`. [`CmabPolicy::prepare`] does the matrix work once per round; the
//! returned [`PreparedCmab`] evaluates propensities for any context.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse, symmetrize};
use crate::numeric::{logistic, normal_cdf};
use crate::policy_mab::PolicyMode;
use crate::rng::RngStream;

const PROP_MIN: f64 = f64::MIN_POSITIVE;
const PROP_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmabPolicyKind {
    TiThompson,
    TiTemperedGreedy,
    TiTemperedLinUcb,
    ClassicalThompson,
}

impl CmabPolicyKind {
    pub const ALL: [CmabPolicyKind; 4] = [
        CmabPolicyKind::TiThompson,
        CmabPolicyKind::TiTemperedGreedy,
        CmabPolicyKind::TiTemperedLinUcb,
        CmabPolicyKind::ClassicalThompson,
    ];

    pub fn is_translation_invariant(self) -> bool {
        !matches!(self, CmabPolicyKind::ClassicalThompson)
    }
}

impl fmt::Display for CmabPolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmabPolicyKind::TiThompson => "ti-thompson-lin",
            CmabPolicyKind::TiTemperedGreedy => "ti-tempered-greedy-lin",
            CmabPolicyKind::TiTemperedLinUcb => "ti-tempered-linucb",
            CmabPolicyKind::ClassicalThompson => "thompson-lin",
        })
    }
}

impl FromStr for CmabPolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ti-thompson-lin" | "ti-thompson" | "thompsoninv" => Ok(CmabPolicyKind::TiThompson),
            "ti-tempered-greedy-lin" | "ti-tempered-greedy" | "temperedgreedy" => Ok(CmabPolicyKind::TiTemperedGreedy),
            "ti-tempered-linucb" | "ti-tempered-ucb" | "temperedlinucb" => Ok(CmabPolicyKind::TiTemperedLinUcb),
            "thompson-lin" | "classical-thompson" | "thompson" => Ok(CmabPolicyKind::ClassicalThompson),
            _ => Err(Error::InvalidConfig(format!("unknown contextual policy '{s}'"))),
        }
    }
}

/// Limiting hyperparameters `(b, alpha, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmabHyper {
    pub b: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for CmabHyper {
    fn default() -> Self {
        Self { b: 1.0 / 20.0, alpha: 1.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CmabSchedule {
    /// `b_T = b sqrt T`, `alpha_T = alpha sqrt T`, `lambda_T = lambda`.
    #[default]
    Canonical,
    Raw {
        b_t: f64,
        alpha_t: f64,
        lambda_t: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Coefficients {
    b2: f64,
    scale: f64,
    lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabPolicy {
    kind: CmabPolicyKind,
    hyper: CmabHyper,
    schedule: CmabSchedule,
    mode: PolicyMode,
    coef: Coefficients,
}

impl CmabPolicy {
    pub fn new(kind: CmabPolicyKind, hyper: CmabHyper, schedule: CmabSchedule, mode: PolicyMode) -> Result<Self> {
        if !(hyper.b.is_finite() && hyper.b >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!("b = {} must be >= 0", hyper.b)));
        }
        if !(hyper.alpha.is_finite() && hyper.alpha > 0.0) {
            return Err(Error::InvalidHyperparameter(format!("alpha = {} must be > 0", hyper.alpha)));
        }
        if !(hyper.lambda.is_finite() && hyper.lambda >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!("lambda = {} must be >= 0", hyper.lambda)));
        }
        let limit = Coefficients { b2: hyper.b * hyper.b, scale: hyper.alpha, lambda: hyper.lambda };
        let coef = match (mode, schedule) {
            (PolicyMode::Limit { grid_steps: 0 }, _) | (PolicyMode::FiniteSample { horizon: 0 }, _) => {
                return Err(Error::InvalidConfig("horizon and grid must be positive".into()));
            }
            (PolicyMode::Limit { .. }, _) | (_, CmabSchedule::Canonical) => limit,
            (PolicyMode::FiniteSample { horizon }, CmabSchedule::Raw { b_t, alpha_t, lambda_t }) => {
                if !(b_t >= 0.0 && alpha_t > 0.0 && lambda_t >= 0.0) {
                    return Err(Error::InvalidHyperparameter(format!("{schedule:?}")));
                }
                let t = horizon as f64;
                Coefficients { b2: b_t * b_t / t, scale: alpha_t / t.sqrt(), lambda: lambda_t }
            }
        };
        Ok(Self { kind, hyper, schedule, mode, coef })
    }

    pub fn limit(kind: CmabPolicyKind, hyper: CmabHyper, grid_steps: usize) -> Result<Self> {
        Self::new(kind, hyper, CmabSchedule::Canonical, PolicyMode::Limit { grid_steps })
    }

    pub fn finite(kind: CmabPolicyKind, hyper: CmabHyper, horizon: usize) -> Result<Self> {
        Self::new(kind, hyper, CmabSchedule::Canonical, PolicyMode::FiniteSample { horizon })
    }

    pub fn in_mode(&self, mode: PolicyMode) -> Result<Self> {
        Self::new(self.kind, self.hyper, self.schedule, mode)
    }

    pub fn kind(&self) -> CmabPolicyKind {
        self.kind
    }

    pub fn hyper(&self) -> CmabHyper {
        self.hyper
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    /// Factor the state `(S_k, C_k)` for repeated evaluation.
    pub fn prepare(&self, s: &[DMatrix<f64>; 2], c: &[DVector<f64>; 2]) -> Result<PreparedCmab> {
        let p = c[0].len();
        if s.iter().any(|m| m.nrows() != p || m.ncols() != p) || c[1].len() != p {
            return Err(Error::Dimension("state matrices and vectors disagree".into()));
        }
        let k = &self.coef;
        if p == 1 && self.kind != CmabPolicyKind::TiTemperedLinUcb {
            return self.prepare_scalar(s[0][(0, 0)], s[1][(0, 0)], c[0][0], c[1][0]);
        }
        if self.kind == CmabPolicyKind::ClassicalThompson {
            let ridge = DMatrix::<f64>::identity(p, p) * k.b2;
            let v1 = spd_inverse(&(&s[0] + &ridge))?;
            let v2 = spd_inverse(&(&s[1] + &ridge))?;
            let a = &v2 * &c[1] - &v1 * &c[0];
            return Ok(PreparedCmab::Probit { a, m: v1 + v2 });
        }
        let inv1 = spd_inverse(&s[0])?;
        let inv2 = spd_inverse(&s[1])?;
        let zeta = &inv2 * &c[1] - &inv1 * &c[0];
        Ok(match self.kind {
            CmabPolicyKind::TiThompson => {
                let h = spd_inverse(&(&inv1 + &inv2))?;
                let gamma = &h + DMatrix::<f64>::identity(p, p) * k.b2;
                let gamma_inv = spd_inverse(&gamma)?;
                let a = &gamma_inv * (&h * &zeta);
                PreparedCmab::Probit { a, m: gamma_inv }
            }
            CmabPolicyKind::TiTemperedGreedy => PreparedCmab::Logit { a: zeta * k.scale, bonus: None },
            CmabPolicyKind::TiTemperedLinUcb => {
                PreparedCmab::Logit { a: zeta * k.scale, bonus: Some((k.scale * k.lambda, [inv1, inv2])) }
            }
            CmabPolicyKind::ClassicalThompson => unreachable!(),
        })
    }
}

impl CmabPolicy {
    /// One-dimensional contexts, evaluated with the two-arm formulas so that
    /// an intercept-only model reproduces the two-arm policy exactly.
    fn prepare_scalar(&self, d1: f64, d2: f64, r1: f64, r2: f64) -> Result<PreparedCmab> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(Error::UninitializedDesign);
        }
        let k = &self.coef;
        let (z, probit) = match self.kind {
            CmabPolicyKind::TiThompson => {
                let h = d1 * d2 / (d1 + d2);
                let num = (d1 * r2 - d2 * r1) / (d1 + d2);
                (num / (h + k.b2).sqrt(), true)
            }
            CmabPolicyKind::TiTemperedGreedy => (k.scale * (r2 / d2 - r1 / d1), false),
            CmabPolicyKind::ClassicalThompson => {
                let (v1, v2) = (d1 + k.b2, d2 + k.b2);
                ((r2 / v2 - r1 / v1) / (1.0 / v1 + 1.0 / v2).sqrt(), true)
            }
            CmabPolicyKind::TiTemperedLinUcb => unreachable!(),
        };
        Ok(PreparedCmab::Scalar { z, probit })
    }
}

/// Factored policy state; cheap to evaluate per context.
#[derive(Debug, Clone)]
pub enum PreparedCmab {
    /// `Phi(x'a / sqrt(x'm x))`
    Probit { a: DVector<f64>, m: DMatrix<f64> },
    /// `logistic(x'a + w (sqrt(x'U_2 x) - sqrt(x'U_1 x)))`
    Logit { a: DVector<f64>, bonus: Option<(f64, [DMatrix<f64>; 2])> },
    /// Index `z` at `x = 1` of a one-dimensional model.
    Scalar { z: f64, probit: bool },
}

impl PreparedCmab {
    /// `(psi_1(x), psi_2(x))`.
    pub fn probs(&self, x: &DVector<f64>) -> [f64; 2] {
        let (z, probit) = match self {
            PreparedCmab::Probit { a, m } => {
                let v = quad_form(m, x);
                if v <= 0.0 {
                    return [0.5, 0.5];
                }
                (a.dot(x) / v.sqrt(), true)
            }
            PreparedCmab::Logit { a, bonus } => {
                let mut z = a.dot(x);
                if let Some((w, [u1, u2])) = bonus {
                    z += w * (quad_form(u2, x).max(0.0).sqrt() - quad_form(u1, x).max(0.0).sqrt());
                }
                (z, false)
            }
            PreparedCmab::Scalar { z, probit } => {
                let x = x[0];
                if *probit {
                    (
                        if x == 0.0 {
                            0.0
                        } else if x < 0.0 {
                            -z
                        } else {
                            *z
                        },
                        true,
                    )
                } else {
                    (if x == 1.0 { *z } else { z * x }, false)
                }
            }
        };
        let f = if probit { normal_cdf } else { logistic };
        [f(-z).clamp(PROP_MIN, PROP_MAX), f(z).clamp(PROP_MIN, PROP_MAX)]
    }

    pub fn prob_arm2(&self, x: &DVector<f64>) -> f64 {
        self.probs(x)[1]
    }
}

/// One-shot convenience wrapper around `prepare` and `prob_arm2`.
pub fn prob_arm2_ctx(
    policy: &CmabPolicy,
    s: &[DMatrix<f64>; 2],
    c: &[DVector<f64>; 2],
    x: &DVector<f64>,
) -> Result<f64> {
    Ok(policy.prepare(s, c)?.prob_arm2(x))
}

/// Random well-conditioned SPD matrix `A A'/p + 0.2 I`.
pub fn random_spd(p: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.standard_normal());
    let mut m = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2;
    symmetrize(&mut m);
    m
}

/// Largest change in `prob_arm2` under `C_k -> C_k + S_k e` over random states and contexts.
pub fn check_translation_invariance_ctx(
    policy: &CmabPolicy,
    p: usize,
    trials: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let s = [random_spd(p, rng), random_spd(p, rng)];
        let c = [DVector::from_fn(p, |_, _| rng.standard_normal()), DVector::from_fn(p, |_, _| rng.standard_normal())];
        let e = DVector::from_fn(p, |_, _| 10.0 * rng.standard_normal());
        let shifted = [&c[0] + &s[0] * &e, &c[1] + &s[1] * &e];
        let base = policy.prepare(&s, &c)?;
        let moved = policy.prepare(&s, &shifted)?;
        for _ in 0..4 {
            let x = DVector::from_fn(p, |i, _| if i == 0 { 1.0 } else { rng.standard_normal() });
            worst = worst.max((base.prob_arm2(&x) - moved.prob_arm2(&x)).abs());
        }
    }
    Ok(worst)
}
