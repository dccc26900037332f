//! Euler discretisation of the diffusion-limit experiments.
//!
//! For the two-arm model each arm carries
//! `dR_k = m_k psi_k du + sqrt(psi_k) dB_k`, `dD_k = psi_k du`, the weighted
//! processes `dR^dag_{r;k} = psi_k^{1/2-r} dW_k`, `dD^dag_{r;k} = psi_k^{1-r} du`
//! with `dW_k = m_k sqrt(psi_k) du + dB_k`, and the log-likelihood components
//! `(Delta_k, Q_k)`. The contextual model replaces `psi_k` by the context
//! averages `E[psi_k X X']`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::config::ContextDistribution;
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, psd_sqrt_floor, symmetrize};
use crate::numeric::gauss_hermite_normal;
use crate::policy_cmab::CmabPolicy;
use crate::policy_mab::{MabPolicy, MabPolicyState, PolicyMode};
use crate::rng::RngStream;
use crate::stats::{self, CmabTerminals, MabTerminals};

/// Brownian increments of arm `k` come from substream `SUBSTREAM_ARM + k`.
pub const SUBSTREAM_ARM: u64 = 11;
/// Extra increments for the score process when the Fisher information exceeds one.
pub const SUBSTREAM_SCORE: u64 = 21;
/// Increments orthogonal to the arm noise, used by the weighted contextual scores.
pub const SUBSTREAM_ORTHOGONAL: u64 = 31;
pub const SUBSTREAM_CONTEXT_MOMENTS: u64 = 41;

/// Eigenvalues of the residual covariance below this multiple of its scale are rounding noise.
const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdeGrid {
    pub n_steps: usize,
}

impl SdeGrid {
    /// At least 10 steps.
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < 10 {
            return Err(Error::InvalidConfig(format!("grid needs at least 10 steps, got {n_steps}")));
        }
        Ok(Self { n_steps })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRecord {
    Full,
    TerminalOnly,
}

/// Local parameters and Fisher information of the two-arm limit experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabLimitModel {
    pub m: [f64; 2],
    pub fisher: f64,
}

impl MabLimitModel {
    pub fn new(m1: f64, m2: f64) -> Self {
        Self { m: [m1, m2], fisher: 1.0 }
    }

    pub fn with_fisher(mut self, fisher: f64) -> Self {
        self.fisher = fisher;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabPathPoint {
    pub u: f64,
    pub d: [f64; 2],
    pub r: [f64; 2],
    pub r_w: [[f64; 2]; 3],
    pub d_w: [[f64; 2]; 3],
    pub score: [f64; 2],
    pub info: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabLimitOutcome {
    pub terminals: MabTerminals,
    /// Terminal score processes `Delta_k(1)`.
    pub score: [f64; 2],
    /// Terminal information processes `Q_k(1)`.
    pub info: [f64; 2],
    /// Grid points `u = 0, 1/n, ..., 1` when recorded.
    pub path: Option<Vec<MabPathPoint>>,
}

impl MabLimitOutcome {
    /// `sum_k m_k Delta_k - m_k^2 Q_k / 2` at `u = 1`.
    pub fn log_likelihood_ratio(&self, m: [f64; 2]) -> f64 {
        (0..2).map(|k| m[k] * self.score[k] - 0.5 * m[k] * m[k] * self.info[k]).sum()
    }

    /// CSV columns `u, d_1, d_2, r_1, r_2` and optionally weighted and
    /// likelihood columns.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &[String], extended: bool) -> io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let Some(path) = &self.path else {
            writeln!(w, "u,d_1,d_2,r_1,r_2")?;
            let t = &self.terminals;
            return writeln!(w, "1,{},{},{},{}", t.d[0], t.d[1], t.r[0], t.r[1]);
        };
        if extended {
            writeln!(
                w,
                "u,d_1,d_2,r_1,r_2,r_w0.5_1,r_w0.5_2,d_w0.5_1,d_w0.5_2,r_w1_1,r_w1_2,d_w1_1,d_w1_2,score_1,score_2,info_1,info_2"
            )?;
        } else {
            writeln!(w, "u,d_1,d_2,r_1,r_2")?;
        }
        for p in path {
            write!(w, "{},{},{},{},{}", p.u, p.d[0], p.d[1], p.r[0], p.r[1])?;
            if extended {
                for i in 1..3 {
                    write!(w, ",{},{},{},{}", p.r_w[i][0], p.r_w[i][1], p.d_w[i][0], p.d_w[i][1])?;
                }
                write!(w, ",{},{},{},{}", p.score[0], p.score[1], p.info[0], p.info[1])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_limit_mode(mode: PolicyMode, grid: SdeGrid) -> Result<()> {
    match mode {
        PolicyMode::Limit { grid_steps } if grid_steps == grid.n_steps => Ok(()),
        other => {
            Err(Error::PolicyMode(format!("limit simulation on {} steps got policy mode {other:?}", grid.n_steps)))
        }
    }
}

/// Simulate the two-arm limit experiment on `[0, 1]`.
///
/// The first step uses `psi = (1/2, 1/2)`. `stream` identifies the
/// replication; each arm draws from its own substream.
pub fn simulate_mab_limit(
    policy: &MabPolicy,
    model: &MabLimitModel,
    grid: SdeGrid,
    stream: &RngStream,
    record: PathRecord,
) -> Result<MabLimitOutcome> {
    check_limit_mode(policy.mode(), grid)?;
    let j = model.fisher;
    if !(j.is_finite() && j >= 1.0) {
        return Err(Error::InvalidConfig(format!("fisher information {j} must be >= 1")));
    }
    if model.m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("local parameters"));
    }
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let mut arm = [stream.substream(SUBSTREAM_ARM), stream.substream(SUBSTREAM_ARM + 1)];
    let mut aux = [stream.substream(SUBSTREAM_SCORE), stream.substream(SUBSTREAM_SCORE + 1)];
    let mut t = MabTerminals::default();
    let mut score = [0.0; 2];
    let mut info = [0.0; 2];
    let mut path = match record {
        PathRecord::Full => {
            let mut v = Vec::with_capacity(grid.n_steps + 1);
            v.push(MabPathPoint {
                u: 0.0,
                d: [0.0; 2],
                r: [0.0; 2],
                r_w: [[0.0; 2]; 3],
                d_w: [[0.0; 2]; 3],
                score,
                info,
            });
            Some(v)
        }
        PathRecord::TerminalOnly => None,
    };
    for n in 0..grid.n_steps {
        let psi = if n == 0 { [0.5, 0.5] } else { policy.probs(&MabPolicyState::new(t.d, t.r))? };
        for k in 0..2 {
            let sp = psi[k].sqrt();
            let db = arm[k].standard_normal() * sqdt;
            let dw = sp * model.m[k] * dt + db;
            let dr = sp * dw;
            t.d[k] += psi[k] * dt;
            t.r[k] += dr;
            t.r_w[0][k] = t.r[k];
            t.d_w[0][k] = t.d[k];
            t.r_w[1][k] += dw;
            t.d_w[1][k] += sp * dt;
            t.r_w[2][k] += dw / sp;
            t.d_w[2][k] += dt;
            if j == 1.0 {
                score[k] += dr;
                info[k] += psi[k] * dt;
            } else {
                let db_score = db + (j - 1.0).sqrt() * aux[k].standard_normal() * sqdt;
                score[k] += sp * (sp * model.m[k] * j * dt + db_score);
                info[k] += j * psi[k] * dt;
            }
        }
        if let Some(p) = path.as_mut() {
            p.push(MabPathPoint { u: (n + 1) as f64 * dt, d: t.d, r: t.r, r_w: t.r_w, d_w: t.d_w, score, info });
        }
    }
    Ok(MabLimitOutcome { terminals: t, score, info, path })
}

/// How the context averages `E[f(X)]` are evaluated at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentStrategy {
    /// Gauss-Hermite quadrature over the non-intercept coordinate (p <= 2).
    Analytic,
    /// Fresh sample of `n_ctx` contexts per step, shared by both arms.
    MonteCarlo { n_ctx: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabLimitModel {
    pub b: [DVector<f64>; 2],
    pub contexts: ContextDistribution,
    pub moments: MomentStrategy,
}

impl CmabLimitModel {
    pub fn new(b1: Vec<f64>, b2: Vec<f64>, moments: MomentStrategy) -> Self {
        let p = b1.len();
        Self { b: [DVector::from_vec(b1), DVector::from_vec(b2)], contexts: ContextDistribution::new(p), moments }
    }

    pub fn dim(&self) -> usize {
        self.contexts.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabPathPoint {
    pub u: f64,
    pub c: [Vec<f64>; 2],
    pub s_diag: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabLimitOutcome {
    pub terminals: CmabTerminals,
    /// Steps in which a covariance square root clamped a negative eigenvalue.
    pub clamp_count: usize,
    pub path: Option<Vec<CmabPathPoint>>,
}

/// Weighted context nodes used for one step's moments.
struct Nodes {
    x: Vec<DVector<f64>>,
    w: Vec<f64>,
}

fn analytic_nodes(p: usize) -> Result<Nodes> {
    match p {
        1 => Ok(Nodes { x: vec![DVector::from_element(1, 1.0)], w: vec![1.0] }),
        2 => {
            let rule = gauss_hermite_normal();
            Ok(Nodes {
                x: rule.iter().map(|(z, _)| DVector::from_vec(vec![1.0, *z])).collect(),
                w: rule.iter().map(|(_, w)| *w).collect(),
            })
        }
        _ => Err(Error::InvalidConfig(format!("analytic context moments support p <= 2, got p = {p}"))),
    }
}

/// Moments `E[psi_k XX']`, `E[psi_k^{1/2} XX']` for both arms plus `E[XX']`.
struct StepMoments {
    g: [DMatrix<f64>; 2],
    h: [DMatrix<f64>; 2],
    sigma: DMatrix<f64>,
}

fn step_moments(nodes: &Nodes, psi_of: &dyn Fn(&DVector<f64>) -> [f64; 2]) -> StepMoments {
    let p = nodes.x[0].len();
    let z = || DMatrix::<f64>::zeros(p, p);
    let mut m = StepMoments { g: [z(), z()], h: [z(), z()], sigma: z() };
    for (x, &w) in nodes.x.iter().zip(&nodes.w) {
        let psi = psi_of(x);
        for i in 0..p {
            for j in 0..=i {
                let xx = w * x[i] * x[j];
                m.sigma[(i, j)] += xx;
                for (k, &pk) in psi.iter().enumerate() {
                    m.g[k][(i, j)] += pk * xx;
                    m.h[k][(i, j)] += pk.sqrt() * xx;
                }
            }
        }
    }
    let [g0, g1] = &mut m.g;
    let [h0, h1] = &mut m.h;
    for mat in [&mut m.sigma, g0, g1, h0, h1] {
        for i in 0..p {
            for j in 0..i {
                mat[(j, i)] = mat[(i, j)];
            }
        }
    }
    m
}

fn normals(rng: &mut RngStream, p: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.standard_normal() * scale)
}

/// Simulate the contextual limit experiment on `[0, 1]`.
///
/// Per arm: `dC_k = sqrt(G_k)(sqrt(G_k) b_k du + dB_k)`, `dS_k = G_k du`
/// with `G_k = E[psi_k XX']`. The `psi^{-1/2}`-weighted score is driven by
/// `A_k dB_k + N_k dB'_k` where `A_k = E[psi_k^{1/2} XX'] G_k^{-1/2}` and
/// `N_k N_k' = E[XX'] - A_k A_k'`, which reproduces its joint law with `C_k`.
pub fn simulate_cmab_limit(
    policy: &CmabPolicy,
    model: &CmabLimitModel,
    grid: SdeGrid,
    stream: &RngStream,
    record: PathRecord,
) -> Result<CmabLimitOutcome> {
    check_limit_mode(policy.mode(), grid)?;
    let p = model.dim();
    if model.b.iter().any(|b| b.len() != p) {
        return Err(Error::Dimension("local parameter length must equal context dimension".into()));
    }
    let fixed_nodes = match model.moments {
        MomentStrategy::Analytic => Some(analytic_nodes(p)?),
        MomentStrategy::MonteCarlo { n_ctx } if n_ctx < 256 => {
            return Err(Error::InvalidConfig(format!("monte carlo moments need n_ctx >= 256, got {n_ctx}")));
        }
        MomentStrategy::MonteCarlo { .. } => None,
    };
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let mut arm = [stream.substream(SUBSTREAM_ARM), stream.substream(SUBSTREAM_ARM + 1)];
    let mut orth = [stream.substream(SUBSTREAM_ORTHOGONAL), stream.substream(SUBSTREAM_ORTHOGONAL + 1)];
    let mut ctx_rng = stream.substream(SUBSTREAM_CONTEXT_MOMENTS);
    let z = || DMatrix::<f64>::zeros(p, p);
    let v = || DVector::<f64>::zeros(p);
    let mut t = CmabTerminals {
        s: [z(), z()],
        c: [v(), v()],
        s_half: [z(), z()],
        c_half: [v(), v()],
        s_one: [z(), z()],
        gram: z(),
    };
    let mut clamp_count = 0;
    let mut path = match record {
        PathRecord::Full => {
            Some(vec![CmabPathPoint { u: 0.0, c: [vec![0.0; p], vec![0.0; p]], s_diag: [vec![0.0; p], vec![0.0; p]] }])
        }
        PathRecord::TerminalOnly => None,
    };
    for n in 0..grid.n_steps {
        let sampled;
        let nodes = match &fixed_nodes {
            Some(nodes) => nodes,
            None => {
                let MomentStrategy::MonteCarlo { n_ctx } = model.moments else { unreachable!() };
                sampled = Nodes {
                    x: (0..n_ctx).map(|_| model.contexts.sample(&mut ctx_rng)).collect(),
                    w: vec![1.0 / n_ctx as f64; n_ctx],
                };
                &sampled
            }
        };
        let mom = if n == 0 {
            step_moments(nodes, &|_| [0.5, 0.5])
        } else {
            let prepared = policy.prepare(&t.s, &t.c)?;
            step_moments(nodes, &|x| prepared.probs(x))
        };
        let mut clamped = false;
        for k in 0..2 {
            let root = psd_sqrt(&mom.g[k])?;
            let db = normals(&mut arm[k], p, sqdt);
            let db_orth = normals(&mut orth[k], p, sqdt);
            let dw = &root.root * &model.b[k] * dt + &db;
            t.c[k] += &root.root * &dw;
            t.s[k] += &mom.g[k] * dt;
            let a = &mom.h[k] * &root.inv_root;
            let mut resid = &mom.sigma - &a * a.transpose();
            symmetrize(&mut resid);
            let nroot = psd_sqrt_floor(&resid, RESIDUAL_FLOOR)?;
            t.c_half[k] += &mom.h[k] * &model.b[k] * dt + &a * &db + &nroot.root * &db_orth;
            t.s_half[k] += &mom.h[k] * dt;
            t.s_one[k] += &mom.sigma * dt;
            clamped |= root.clamped || nroot.clamped;
        }
        t.gram += &mom.sigma * dt;
        if clamped {
            clamp_count += 1;
        }
        if let Some(pp) = path.as_mut() {
            pp.push(CmabPathPoint {
                u: (n + 1) as f64 * dt,
                c: [t.c[0].iter().copied().collect(), t.c[1].iter().copied().collect()],
                s_diag: [t.s[0].diagonal().iter().copied().collect(), t.s[1].diagonal().iter().copied().collect()],
            });
        }
    }
    for m in t.s.iter_mut().chain(t.s_half.iter_mut()).chain(t.s_one.iter_mut()) {
        symmetrize(m);
    }
    if clamp_count * 2 > grid.n_steps {
        return Err(Error::NotPositiveSemidefinite(-(clamp_count as f64)));
    }
    Ok(CmabLimitOutcome { terminals: t, clamp_count, path })
}

/// Alternative against which a Neyman-Pearson test is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NpAlternative {
    /// `m_2 = m_bar2` versus `m_2 = 0`.
    OneArm { m_bar2: f64 },
    /// `(m_bar - delta_bar, m_bar + delta_bar)` versus `(m_bar, m_bar)`.
    TwoSample { m_bar: f64, delta_bar: f64 },
}

/// Log-likelihood-ratio statistic of the limit experiment for `alt`.
pub fn np_oracle_statistic(t: &MabTerminals, alt: NpAlternative) -> f64 {
    match alt {
        NpAlternative::OneArm { m_bar2 } => stats::np_one_arm(t, m_bar2),
        NpAlternative::TwoSample { m_bar, delta_bar } => stats::np_two_sample(t, m_bar, delta_bar),
    }
}
