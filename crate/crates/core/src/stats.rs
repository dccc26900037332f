//! Test statistics computed from terminal sufficient statistics.
//!
//! Every function takes the same terminal summary whether it came from a
//! finite-horizon run or from the diffusion limit, so a statistic and its
//! limiting counterpart are the same code.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse};

/// Weight exponents precomputed by the simulators.
pub const WEIGHT_GRID: [f64; 3] = [0.0, 0.5, 1.0];

pub(crate) fn weight_index(r: f64) -> Result<usize> {
    WEIGHT_GRID.iter().position(|&w| w == r).ok_or(Error::UnsupportedWeight(r))
}

/// Terminal summary of a two-arm experiment.
///
/// Index `[k]` is arm `k + 1`; `r_w[i]` and `d_w[i]` are the sums weighted by
/// `psi^{-r}` with `r = WEIGHT_GRID[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MabTerminals {
    pub d: [f64; 2],
    pub r: [f64; 2],
    pub r_w: [[f64; 2]; 3],
    pub d_w: [[f64; 2]; 3],
}

impl MabTerminals {
    pub fn weighted(&self, r: f64) -> Result<([f64; 2], [f64; 2])> {
        let i = weight_index(r)?;
        Ok((self.r_w[i], self.d_w[i]))
    }
}

/// Terminal summary of a contextual experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CmabTerminals {
    pub s: [DMatrix<f64>; 2],
    pub c: [DVector<f64>; 2],
    /// Sums weighted by `psi^{-1/2}`.
    pub s_half: [DMatrix<f64>; 2],
    pub c_half: [DVector<f64>; 2],
    /// Gram matrices weighted by `psi^{-1}`.
    pub s_one: [DMatrix<f64>; 2],
    /// Unweighted Gram matrix over both arms.
    pub gram: DMatrix<f64>,
}

/// Terminal summary from either model.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Terminals {
    Mab(MabTerminals),
    Cmab(CmabTerminals),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatName {
    T,
    Aw,
    Ipw,
    TsT,
    TsAw,
    TsIpw,
    TsDf(f64),
    TsWald,
    TsAwWald,
    Np,
    TsNp,
    /// Terminal share of arm 2, `D_2`.
    Freq,
}

impl StatName {
    /// Statistics whose null limit is exactly standard normal.
    pub fn is_asymptotically_normal(self) -> bool {
        matches!(self, StatName::Aw | StatName::TsAw | StatName::TsAwWald)
    }

    pub fn is_contextual(self) -> bool {
        matches!(self, StatName::TsWald | StatName::TsAwWald)
    }

    pub fn is_one_arm(self) -> bool {
        matches!(self, StatName::T | StatName::Aw | StatName::Ipw | StatName::Np)
    }
}

impl fmt::Display for StatName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatName::T => f.write_str("t"),
            StatName::Aw => f.write_str("aw"),
            StatName::Ipw => f.write_str("ipw"),
            StatName::TsT => f.write_str("ts-t"),
            StatName::TsAw => f.write_str("ts-aw"),
            StatName::TsIpw => f.write_str("ts-ipw"),
            StatName::TsDf(r) => write!(f, "ts-df:{r}"),
            StatName::TsWald => f.write_str("ts-wald"),
            StatName::TsAwWald => f.write_str("ts-aw-wald"),
            StatName::Np => f.write_str("np"),
            StatName::TsNp => f.write_str("ts-np"),
            StatName::Freq => f.write_str("freq"),
        }
    }
}

impl FromStr for StatName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "t" => StatName::T,
            "aw" => StatName::Aw,
            "ipw" => StatName::Ipw,
            "ts-t" => StatName::TsT,
            "ts-aw" => StatName::TsAw,
            "ts-ipw" => StatName::TsIpw,
            "ts-wald" => StatName::TsWald,
            "ts-aw-wald" => StatName::TsAwWald,
            "np" => StatName::Np,
            "ts-np" => StatName::TsNp,
            "freq" => StatName::Freq,
            _ => {
                if let Some(r) = s.strip_prefix("ts-df:") {
                    let r: f64 = r.parse().map_err(|_| Error::InvalidConfig(format!("bad weight in '{s}'")))?;
                    weight_index(r)?;
                    StatName::TsDf(r)
                } else {
                    return Err(Error::InvalidConfig(format!("unknown statistic '{s}'")));
                }
            }
        })
    }
}

/// Whether a statistic came from a finite-horizon run or the limit experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Finite,
    Limit,
}

/// Every test here rejects for large values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub name: StatName,
    pub value: f64,
    pub side: Side,
    pub source: Source,
}

/// Parameters some statistics need beyond the terminal summary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatParams {
    /// Contrast vector for the Wald statistics.
    pub g: Vec<f64>,
    /// Alternative `m_bar_2` for `np`.
    pub np_m2: f64,
    /// `(m_bar, delta_bar)` for `ts-np`.
    pub ts_np: (f64, f64),
}

fn positive(v: f64, arm: usize) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::ArmNeverPulled(arm))
    }
}

/// `R_2 / sqrt(D_2)`
pub fn one_arm_t(t: &MabTerminals) -> Result<f64> {
    Ok(t.r[1] / positive(t.d[1], 2)?.sqrt())
}

/// Adaptively weighted one-arm statistic `R^dag_{1/2;2}`.
pub fn one_arm_aw(t: &MabTerminals) -> Result<f64> {
    positive(t.d[1], 2)?;
    Ok(t.r_w[1][1])
}

/// Inverse-propensity one-arm statistic `R^dag_{1;2}`.
pub fn one_arm_ipw(t: &MabTerminals) -> Result<f64> {
    positive(t.d[1], 2)?;
    Ok(t.r_w[2][1])
}

/// Difference of weighted means `R^dag_{r;2}/D^dag_{r;2} - R^dag_{r;1}/D^dag_{r;1}`.
pub fn ts_df(t: &MabTerminals, r: f64) -> Result<f64> {
    let (rw, dw) = t.weighted(r)?;
    Ok(rw[1] / positive(dw[1], 2)? - rw[0] / positive(dw[0], 1)?)
}

pub fn ts_t(t: &MabTerminals) -> Result<f64> {
    let se = (1.0 / positive(t.d[0], 1)? + 1.0 / positive(t.d[1], 2)?).sqrt();
    Ok(ts_df(t, 0.0)? / se)
}

pub fn ts_aw(t: &MabTerminals) -> Result<f64> {
    let dw = t.d_w[1];
    let se = (1.0 / positive(dw[1], 2)?.powi(2) + 1.0 / positive(dw[0], 1)?.powi(2)).sqrt();
    Ok(ts_df(t, 0.5)? / se)
}

pub fn ts_ipw(t: &MabTerminals) -> Result<f64> {
    ts_df(t, 1.0)
}

/// Neyman-Pearson one-arm statistic `m2 R_2 - m2^2 D_2 / 2`.
pub fn np_one_arm(t: &MabTerminals, m2: f64) -> f64 {
    m2 * t.r[1] - 0.5 * m2 * m2 * t.d[1]
}

/// Two-sample Neyman-Pearson statistic at `(m_bar - delta_bar, m_bar + delta_bar)`.
pub fn np_two_sample(t: &MabTerminals, m_bar: f64, delta_bar: f64) -> f64 {
    delta_bar * (t.r[1] - t.r[0]) - 0.5 * delta_bar * delta_bar + m_bar * delta_bar * (t.d[0] - t.d[1])
}

fn check_g(g: &[f64], p: usize) -> Result<DVector<f64>> {
    if g.len() != p {
        return Err(Error::Dimension(format!("contrast has length {}, expected {p}", g.len())));
    }
    Ok(DVector::from_column_slice(g))
}

/// Contextual Wald statistic `G'zeta / sqrt(G'(S_2^{-1} + S_1^{-1})G)`.
pub fn ts_wald(t: &CmabTerminals, g: &[f64]) -> Result<f64> {
    let g = check_g(g, t.c[0].len())?;
    let inv1 = spd_inverse(&t.s[0])?;
    let inv2 = spd_inverse(&t.s[1])?;
    let zeta = &inv2 * &t.c[1] - &inv1 * &t.c[0];
    let var = quad_form(&(inv1 + inv2), &g);
    if var <= 0.0 {
        return Err(Error::ZeroDenominator("ts-wald variance"));
    }
    Ok(g.dot(&zeta) / var.sqrt())
}

/// Adaptively weighted contextual Wald statistic with sandwich variance
/// `S_{1/2;k}^{-1} Sigma S_{1/2;k}^{-1}`, `Sigma` the pooled unweighted Gram matrix.
pub fn ts_aw_wald(t: &CmabTerminals, g: &[f64]) -> Result<f64> {
    let g = check_g(g, t.c[0].len())?;
    let inv1 = spd_inverse(&t.s_half[0])?;
    let inv2 = spd_inverse(&t.s_half[1])?;
    let zeta = &inv2 * &t.c_half[1] - &inv1 * &t.c_half[0];
    let v = &inv1 * &t.gram * &inv1 + &inv2 * &t.gram * &inv2;
    let var = quad_form(&v, &g);
    if var <= 0.0 {
        return Err(Error::ZeroDenominator("ts-aw-wald variance"));
    }
    Ok(g.dot(&zeta) / var.sqrt())
}

/// Evaluate a named statistic on a terminal summary.
pub fn evaluate(name: StatName, terminals: &Terminals, params: &StatParams) -> Result<f64> {
    match (name, terminals) {
        (StatName::TsWald, Terminals::Cmab(c)) => ts_wald(c, &params.g),
        (StatName::TsAwWald, Terminals::Cmab(c)) => ts_aw_wald(c, &params.g),
        (StatName::TsWald | StatName::TsAwWald, Terminals::Mab(_)) => {
            Err(Error::InvalidConfig(format!("{name} needs a contextual experiment")))
        }
        (_, Terminals::Mab(m)) => evaluate_mab(name, m, params),
        (_, Terminals::Cmab(_)) => Err(Error::InvalidConfig(format!("{name} needs a two-arm experiment"))),
    }
}

pub fn evaluate_mab(name: StatName, t: &MabTerminals, params: &StatParams) -> Result<f64> {
    match name {
        StatName::T => one_arm_t(t),
        StatName::Aw => one_arm_aw(t),
        StatName::Ipw => one_arm_ipw(t),
        StatName::TsT => ts_t(t),
        StatName::TsAw => ts_aw(t),
        StatName::TsIpw => ts_ipw(t),
        StatName::TsDf(r) => ts_df(t, r),
        StatName::Np => Ok(np_one_arm(t, params.np_m2)),
        StatName::TsNp => Ok(np_two_sample(t, params.ts_np.0, params.ts_np.1)),
        StatName::Freq => Ok(t.d[1]),
        StatName::TsWald | StatName::TsAwWald => {
            Err(Error::InvalidConfig(format!("{name} needs a contextual experiment")))
        }
    }
}

pub fn test_result(name: StatName, terminals: &Terminals, params: &StatParams, source: Source) -> Result<TestResult> {
    Ok(TestResult { name, value: evaluate(name, terminals, params)?, side: Side::Upper, source })
}
