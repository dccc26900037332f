//! Finite-horizon simulation of two-arm and contextual bandit experiments.
//!
//! Rewards follow the local-alternative model `Y = mu + m_k / sqrt T + eps`
//! (or `x'(beta + b_k / sqrt T) + eps` with contexts). The running sums are
//! normalised by `T` and `sqrt T` so the policies see the same state as in the
//! diffusion limit.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::config::{Centering, ContextDistribution, ExperimentConfig, Innovation, LocalParams};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};
use crate::policy_cmab::CmabPolicy;
use crate::policy_mab::{MabPolicy, MabPolicyState, PolicyMode};
use crate::stats::{CmabTerminals, MabTerminals, Terminals, WEIGHT_GRID};

pub const SUBSTREAM_CHOICE: u64 = 1;
pub const SUBSTREAM_NOISE: u64 = 2;
pub const SUBSTREAM_CONTEXT: u64 = 3;

/// Attempts at drawing an invertible initialisation block.
pub const MAX_INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub t: usize,
    pub x: Vec<f64>,
    /// 1 or 2.
    pub arm: usize,
    /// Probability with which the pulled arm was chosen.
    pub propensity: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: ExperimentConfig,
    pub rounds: Vec<Round>,
    pub counts: [usize; 2],
    pub terminals: Terminals,
}

impl Trajectory {
    pub fn mab_terminals(&self) -> Option<&MabTerminals> {
        match &self.terminals {
            Terminals::Mab(m) => Some(m),
            Terminals::Cmab(_) => None,
        }
    }

    pub fn cmab_terminals(&self) -> Option<&CmabTerminals> {
        match &self.terminals {
            Terminals::Cmab(c) => Some(c),
            Terminals::Mab(_) => None,
        }
    }

    fn center(&self, x: &[f64]) -> f64 {
        match self.config.centering {
            Centering::Known => x.iter().zip(&self.config.global).map(|(a, b)| a * b).sum(),
            Centering::Raw => 0.0,
        }
    }

    /// `(R^dag_{r;k}, D^dag_{r;k})` for any exponent `r`, recomputed from the rounds.
    pub fn weighted(&self, r: f64) -> ([f64; 2], [f64; 2]) {
        let t = self.config.horizon as f64;
        let (mut rw, mut dw) = ([0.0; 2], [0.0; 2]);
        for round in &self.rounds {
            let w = round.propensity.powf(-r);
            let k = round.arm - 1;
            rw[k] += w * (round.reward - self.center(&round.x));
            dw[k] += w;
        }
        ([rw[0] / t.sqrt(), rw[1] / t.sqrt()], [dw[0] / t, dw[1] / t])
    }

    /// CSV with columns `t, x_1..x_p, arm, propensity, reward`, a `# `-prefixed
    /// header block and a `# key=value` footer of terminal statistics.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &[String]) -> io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let p = self.config.context_dim;
        let xs: Vec<String> = (1..=p).map(|j| format!("x_{j}")).collect();
        writeln!(w, "t,{},arm,propensity,reward", xs.join(","))?;
        for r in &self.rounds {
            let x: Vec<String> = r.x.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{},{},{},{}", r.t, x.join(","), r.arm, r.propensity, r.reward)?;
        }
        writeln!(w, "# count_1={}", self.counts[0])?;
        writeln!(w, "# count_2={}", self.counts[1])?;
        match &self.terminals {
            Terminals::Mab(m) => write_mab_footer(w, m),
            Terminals::Cmab(c) => {
                for k in 0..2 {
                    let c_k: Vec<String> = c.c[k].iter().map(|v| format!("{v}")).collect();
                    writeln!(w, "# c_{}={}", k + 1, c_k.join(" "))?;
                    let s_k: Vec<String> = c.s[k].iter().map(|v| format!("{v}")).collect();
                    writeln!(w, "# s_{}={}", k + 1, s_k.join(" "))?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn write_mab_footer<W: Write>(w: &mut W, m: &MabTerminals) -> io::Result<()> {
    for k in 0..2 {
        writeln!(w, "# d_{}={}", k + 1, m.d[k])?;
        writeln!(w, "# r_{}={}", k + 1, m.r[k])?;
    }
    for (i, r) in WEIGHT_GRID.iter().enumerate().skip(1) {
        for k in 0..2 {
            writeln!(w, "# r_w{r}_{}={}", k + 1, m.r_w[i][k])?;
            writeln!(w, "# d_w{r}_{}={}", k + 1, m.d_w[i][k])?;
        }
    }
    Ok(())
}

fn check_mode(mode: PolicyMode, horizon: usize) -> Result<()> {
    match mode {
        PolicyMode::FiniteSample { horizon: h } if h == horizon => Ok(()),
        other => Err(Error::PolicyMode(format!("finite simulation of horizon {horizon} got policy mode {other:?}"))),
    }
}

#[derive(Default)]
struct MabSums {
    counts: [usize; 2],
    r: [f64; 2],
    r_w: [[f64; 2]; 3],
    d_w: [[f64; 2]; 3],
}

impl MabSums {
    fn state(&self, horizon: usize) -> MabPolicyState {
        let t = horizon as f64;
        let d = [self.counts[0] as f64 / t, self.counts[1] as f64 / t];
        MabPolicyState {
            d,
            r: [self.r[0] / t.sqrt(), self.r[1] / t.sqrt()],
            t_over_horizon: (self.counts[0] + self.counts[1]) as f64 / t,
        }
    }

    fn add(&mut self, k: usize, propensity: f64, centered: f64) {
        self.counts[k] += 1;
        self.r[k] += centered;
        for (i, &r) in WEIGHT_GRID.iter().enumerate() {
            let w = match i {
                0 => 1.0,
                1 => 1.0 / propensity.sqrt(),
                _ => propensity.powf(-r),
            };
            self.r_w[i][k] += w * centered;
            self.d_w[i][k] += w;
        }
    }

    fn terminals(&self, horizon: usize) -> MabTerminals {
        let t = horizon as f64;
        let s = self.state(horizon);
        let mut out = MabTerminals { d: s.d, r: s.r, ..Default::default() };
        for i in 0..WEIGHT_GRID.len() {
            for k in 0..2 {
                out.r_w[i][k] = self.r_w[i][k] / t.sqrt();
                out.d_w[i][k] = self.d_w[i][k] / t;
            }
        }
        out
    }
}

fn drive_mab<F>(
    config: &ExperimentConfig,
    policy: &MabPolicy,
    record: bool,
    mut draw: F,
) -> Result<(MabSums, Vec<Round>)>
where
    F: FnMut(usize, bool) -> Result<(f64, f64)>,
{
    config.validate()?;
    if config.context_dim != 1 {
        return Err(Error::Dimension("two-arm simulation needs context dimension 1".into()));
    }
    let horizon = config.horizon;
    check_mode(policy.mode(), horizon)?;
    let sqrt_t = (horizon as f64).sqrt();
    let mu = config.global[0];
    let means = [mu + config.local.0[0][0] / sqrt_t, mu + config.local.0[1][0] / sqrt_t];
    let center = match config.centering {
        Centering::Known => mu,
        Centering::Raw => 0.0,
    };
    let mut sums = MabSums::default();
    let mut rounds = Vec::with_capacity(if record { horizon } else { 0 });
    for t in 1..=horizon {
        let forced = t <= 2;
        let (u, eps) = draw(t, !forced)?;
        let (k, propensity) = if forced {
            (t - 1, 0.5)
        } else {
            let psi = policy.probs(&sums.state(horizon))?;
            if u < psi[1] {
                (1, psi[1])
            } else {
                (0, psi[0])
            }
        };
        let y = means[k] + eps;
        sums.add(k, propensity, y - center);
        if record {
            rounds.push(Round { t, x: vec![1.0], arm: k + 1, propensity, reward: y });
        }
    }
    Ok((sums, rounds))
}

fn mab_trajectory(config: &ExperimentConfig, sums: MabSums, rounds: Vec<Round>) -> Trajectory {
    Trajectory {
        config: config.clone(),
        rounds,
        counts: sums.counts,
        terminals: Terminals::Mab(sums.terminals(config.horizon)),
    }
}

fn stream_draws(config: &ExperimentConfig) -> impl FnMut(usize, bool) -> Result<(f64, f64)> {
    let stream = config.stream();
    let mut choice = stream.substream(SUBSTREAM_CHOICE);
    let mut noise = stream.substream(SUBSTREAM_NOISE);
    let innovation = config.innovation;
    move |_, needs_uniform| {
        let u = if needs_uniform { choice.uniform() } else { 0.0 };
        Ok((u, innovation.sample(&mut noise)))
    }
}

/// Simulate one two-arm experiment, recording every round.
pub fn run_mab(config: &ExperimentConfig, policy: &MabPolicy) -> Result<Trajectory> {
    let (sums, rounds) = drive_mab(config, policy, true, stream_draws(config))?;
    Ok(mab_trajectory(config, sums, rounds))
}

/// Simulate one two-arm experiment keeping only the terminal summary.
pub fn run_mab_terminals(config: &ExperimentConfig, policy: &MabPolicy) -> Result<MabTerminals> {
    let (sums, _) = drive_mab(config, policy, false, stream_draws(config))?;
    Ok(sums.terminals(config.horizon))
}

/// Replay an experiment from explicit draws: `uniforms[t-1]` decides the arm
/// in round `t` (ignored in the two forced rounds) and `innovations[t-1]` is
/// the reward noise.
pub fn replay_mab(
    config: &ExperimentConfig,
    policy: &MabPolicy,
    uniforms: &[f64],
    innovations: &[f64],
) -> Result<Trajectory> {
    let horizon = config.horizon;
    if uniforms.len() != horizon || innovations.len() != horizon {
        return Err(Error::Dimension(format!("replay needs {horizon} uniforms and innovations")));
    }
    let draws = |t: usize, _| Ok((uniforms[t - 1], innovations[t - 1]));
    let (sums, rounds) = drive_mab(config, policy, true, draws)?;
    Ok(mab_trajectory(config, sums, rounds))
}

struct CmabSums {
    sxx: [DMatrix<f64>; 2],
    sxy: [DVector<f64>; 2],
    sxx_half: [DMatrix<f64>; 2],
    sxy_half: [DVector<f64>; 2],
    sxx_one: [DMatrix<f64>; 2],
    gram: DMatrix<f64>,
    counts: [usize; 2],
}

impl CmabSums {
    fn new(p: usize) -> Self {
        let z = || DMatrix::zeros(p, p);
        let v = || DVector::zeros(p);
        Self {
            sxx: [z(), z()],
            sxy: [v(), v()],
            sxx_half: [z(), z()],
            sxy_half: [v(), v()],
            sxx_one: [z(), z()],
            gram: z(),
            counts: [0, 0],
        }
    }

    fn state(&self, horizon: usize) -> ([DMatrix<f64>; 2], [DVector<f64>; 2]) {
        let t = horizon as f64;
        ([&self.sxx[0] / t, &self.sxx[1] / t], [&self.sxy[0] / t.sqrt(), &self.sxy[1] / t.sqrt()])
    }

    fn add(&mut self, k: usize, x: &DVector<f64>, propensity: f64, centered: f64) {
        let xx = x * x.transpose();
        let w = 1.0 / propensity.sqrt();
        self.sxx[k] += &xx;
        self.sxy[k] += x * centered;
        self.sxx_half[k] += &xx * w;
        self.sxy_half[k] += x * (w * centered);
        self.sxx_one[k] += &xx / propensity;
        self.gram += &xx;
        self.counts[k] += 1;
    }

    fn terminals(&self, horizon: usize) -> CmabTerminals {
        let t = horizon as f64;
        let m = |a: &DMatrix<f64>| {
            let mut out = a / t;
            symmetrize(&mut out);
            out
        };
        let v = |a: &DVector<f64>| a / t.sqrt();
        CmabTerminals {
            s: [m(&self.sxx[0]), m(&self.sxx[1])],
            c: [v(&self.sxy[0]), v(&self.sxy[1])],
            s_half: [m(&self.sxx_half[0]), m(&self.sxx_half[1])],
            c_half: [v(&self.sxy_half[0]), v(&self.sxy_half[1])],
            s_one: [m(&self.sxx_one[0]), m(&self.sxx_one[1])],
            gram: m(&self.gram),
        }
    }
}

/// Contexts for the forced rounds, redrawn until both arms' Gram matrices are invertible.
fn initial_contexts(
    dist: &ContextDistribution,
    rng: &mut crate::rng::RngStream,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    let p = dist.dim;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let xs: Vec<DVector<f64>> = (0..2 * p).map(|_| dist.sample(rng)).collect();
        let gram = |k: usize| {
            let mut g = DMatrix::zeros(p, p);
            for x in xs.iter().skip(k).step_by(2) {
                g += x * x.transpose();
            }
            g / horizon as f64
        };
        if spd_inverse(&gram(0)).is_ok() && spd_inverse(&gram(1)).is_ok() {
            return Ok(xs);
        }
    }
    Err(Error::SingularDesign(MAX_INIT_ATTEMPTS))
}

fn drive_cmab(config: &ExperimentConfig, policy: &CmabPolicy, record: bool) -> Result<(CmabSums, Vec<Round>)> {
    config.validate()?;
    let horizon = config.horizon;
    check_mode(policy.mode(), horizon)?;
    let p = config.context_dim;
    let dist = ContextDistribution::new(p);
    let sqrt_t = (horizon as f64).sqrt();
    let stream = config.stream();
    let mut choice = stream.substream(SUBSTREAM_CHOICE);
    let mut noise = stream.substream(SUBSTREAM_NOISE);
    let mut ctx = stream.substream(SUBSTREAM_CONTEXT);
    let beta = DVector::from_column_slice(&config.global);
    let coef = [0, 1].map(|k| {
        let b = DVector::from_column_slice(&config.local.0[k]);
        &beta + b / sqrt_t
    });
    let init = initial_contexts(&dist, &mut ctx, horizon)?;
    let mut sums = CmabSums::new(p);
    let mut rounds = Vec::with_capacity(if record { horizon } else { 0 });
    for t in 1..=horizon {
        let forced = t <= 2 * p;
        let x = if forced { init[t - 1].clone() } else { dist.sample(&mut ctx) };
        let (k, propensity) = if forced {
            ((t - 1) % 2, 0.5)
        } else {
            let (s, c) = sums.state(horizon);
            let psi = policy.prepare(&s, &c)?.probs(&x);
            if choice.uniform() < psi[1] {
                (1, psi[1])
            } else {
                (0, psi[0])
            }
        };
        let eps = config.innovation.sample(&mut noise);
        let y = x.dot(&coef[k]) + eps;
        let center = match config.centering {
            Centering::Known => x.dot(&beta),
            Centering::Raw => 0.0,
        };
        sums.add(k, &x, propensity, y - center);
        if record {
            rounds.push(Round { t, x: x.iter().copied().collect(), arm: k + 1, propensity, reward: y });
        }
    }
    Ok((sums, rounds))
}

/// Simulate one contextual experiment, recording every round.
pub fn run_cmab(config: &ExperimentConfig, policy: &CmabPolicy) -> Result<Trajectory> {
    let (sums, rounds) = drive_cmab(config, policy, true)?;
    Ok(Trajectory {
        config: config.clone(),
        rounds,
        counts: sums.counts,
        terminals: Terminals::Cmab(sums.terminals(config.horizon)),
    })
}

pub fn run_cmab_terminals(config: &ExperimentConfig, policy: &CmabPolicy) -> Result<CmabTerminals> {
    Ok(drive_cmab(config, policy, false)?.0.terminals(config.horizon))
}

/// Gaussian log-likelihood ratio of the local alternative `local` against
/// the zero-local-parameter model, as a function of the terminal statistics.
pub fn gaussian_loglik_ratio(traj: &Trajectory, local: &LocalParams) -> Result<f64> {
    if traj.config.innovation != Innovation::Gaussian || traj.config.centering != Centering::Known {
        return Err(Error::LikelihoodRequiresGaussian);
    }
    if local.dim() != traj.config.context_dim || local.0[1].len() != local.dim() {
        return Err(Error::Dimension("local parameters do not match the experiment".into()));
    }
    Ok(match &traj.terminals {
        Terminals::Mab(m) => (0..2)
            .map(|k| {
                let mk = local.0[k][0];
                mk * m.r[k] - 0.5 * mk * mk * m.d[k]
            })
            .sum(),
        Terminals::Cmab(c) => (0..2)
            .map(|k| {
                let b = DVector::from_column_slice(&local.0[k]);
                b.dot(&c.c[k]) - 0.5 * crate::linalg::quad_form(&c.s[k], &b)
            })
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_cmab::{CmabHyper, CmabPolicyKind};
    use crate::policy_mab::{MabHyper, MabPolicyKind};
    use approx::assert_abs_diff_eq;

    fn mab_policy(kind: MabPolicyKind, t: usize) -> MabPolicy {
        MabPolicy::finite(kind, MabHyper::default(), t).unwrap()
    }

    #[test]
    fn shortest_horizon_is_forced_only() {
        let cfg = ExperimentConfig::mab(2, 0.0, 0.0, 0.0).with_seed(1, 0);
        let tr = run_mab(&cfg, &mab_policy(MabPolicyKind::TiThompson, 2)).unwrap();
        assert_eq!(tr.rounds.len(), 2);
        assert_eq!(tr.rounds[0].arm, 1);
        assert_eq!(tr.rounds[1].arm, 2);
        assert!(tr.rounds.iter().all(|r| r.propensity == 0.5));
        let m = tr.mab_terminals().unwrap();
        assert_eq!(m.d, [0.5, 0.5]);
    }

    #[test]
    fn counts_and_reproducibility() {
        let cfg = ExperimentConfig::mab(200, 1.0, 0.5, -0.5).with_seed(7, 3);
        let pol = mab_policy(MabPolicyKind::TiTemperedGreedy, 200);
        let a = run_mab(&cfg, &pol).unwrap();
        let b = run_mab(&cfg, &pol).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts[0] + a.counts[1], 200);
        let m = a.mab_terminals().unwrap();
        assert_abs_diff_eq!(m.d[0] + m.d[1], 1.0, epsilon = 1e-15);
        assert_eq!(&run_mab_terminals(&cfg, &pol).unwrap(), m);
        let c = run_mab(&cfg.clone().with_seed(7, 4), &pol).unwrap();
        assert_ne!(a.rounds, c.rounds);
    }

    #[test]
    fn weighted_sums_match_rounds() {
        let cfg = ExperimentConfig::mab(100, 0.3, 1.0, 0.0).with_seed(2, 0);
        let tr = run_mab(&cfg, &mab_policy(MabPolicyKind::TiThompson, 100)).unwrap();
        let m = *tr.mab_terminals().unwrap();
        for (i, &r) in WEIGHT_GRID.iter().enumerate() {
            let (rw, dw) = tr.weighted(r);
            for k in 0..2 {
                assert_abs_diff_eq!(rw[k], m.r_w[i][k], epsilon = 1e-12);
                assert_abs_diff_eq!(dw[k], m.d_w[i][k], epsilon = 1e-12);
            }
        }
        assert_eq!(m.r_w[0], m.r);
    }

    #[test]
    fn policy_mode_is_checked() {
        let cfg = ExperimentConfig::mab(100, 0.0, 0.0, 0.0);
        let lim = MabPolicy::limit(MabPolicyKind::TiThompson, MabHyper::default(), 100).unwrap();
        assert!(matches!(run_mab(&cfg, &lim), Err(Error::PolicyMode(_))));
        assert!(run_mab(&cfg, &mab_policy(MabPolicyKind::TiThompson, 50)).is_err());
    }

    #[test]
    fn replay_matches_stream_run() {
        let cfg = ExperimentConfig::mab(50, 0.0, 0.2, 0.1).with_seed(4, 1);
        let pol = mab_policy(MabPolicyKind::TiTemperedUcb, 50);
        let tr = run_mab(&cfg, &pol).unwrap();
        let stream = cfg.stream();
        let mut choice = stream.substream(SUBSTREAM_CHOICE);
        let mut noise = stream.substream(SUBSTREAM_NOISE);
        let u: Vec<f64> = (1..=50).map(|t| if t > 2 { choice.uniform() } else { 0.0 }).collect();
        let e: Vec<f64> = (0..50).map(|_| noise.standard_normal()).collect();
        assert_eq!(replay_mab(&cfg, &pol, &u, &e).unwrap().rounds, tr.rounds);
    }

    #[test]
    fn raw_centering_keeps_ti_arm_sequence() {
        let pol = mab_policy(MabPolicyKind::TiThompson, 300);
        let known = ExperimentConfig::mab(300, 0.0, 0.3, 0.0).with_seed(9, 0);
        let shifted = ExperimentConfig::mab(300, 50.0, 0.3, 0.0).with_seed(9, 0).with_centering(Centering::Raw);
        let a = run_mab(&known, &pol).unwrap();
        let b = run_mab(&shifted, &pol).unwrap();
        let arms = |t: &Trajectory| t.rounds.iter().map(|r| r.arm).collect::<Vec<_>>();
        assert_eq!(arms(&a), arms(&b));
    }

    #[test]
    fn loglik_ratio_requirements() {
        let cfg = ExperimentConfig::mab(50, 0.0, 0.0, 0.0).with_innovation(Innovation::Uniform);
        let tr = run_mab(&cfg, &mab_policy(MabPolicyKind::TiThompson, 50)).unwrap();
        assert_eq!(gaussian_loglik_ratio(&tr, &LocalParams::mab(1.0, 1.0)), Err(Error::LikelihoodRequiresGaussian));
    }

    #[test]
    fn contextual_nests_two_arm() {
        for (ck, mk) in [
            (CmabPolicyKind::TiThompson, MabPolicyKind::TiThompson),
            (CmabPolicyKind::TiTemperedGreedy, MabPolicyKind::TiTemperedGreedy),
            (CmabPolicyKind::ClassicalThompson, MabPolicyKind::ClassicalThompson),
        ] {
            let mab = ExperimentConfig::mab(150, 0.4, 0.5, 1.5).with_seed(21, 2);
            let cm = ExperimentConfig::cmab(150, vec![0.4], vec![0.5], vec![1.5]).with_seed(21, 2);
            let a = run_mab(&mab, &mab_policy(mk, 150)).unwrap();
            let b = run_cmab(&cm, &CmabPolicy::finite(ck, CmabHyper::default(), 150).unwrap()).unwrap();
            for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
                assert_eq!(ra.arm, rb.arm);
                assert_eq!(ra.reward, rb.reward);
                assert_abs_diff_eq!(ra.propensity, rb.propensity, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn contextual_run_shapes() {
        let cfg = ExperimentConfig::cmab(120, vec![1.0, -0.5], vec![0.0, 0.0], vec![1.0, 0.5]).with_seed(3, 0);
        let pol = CmabPolicy::finite(CmabPolicyKind::TiThompson, CmabHyper::default(), 120).unwrap();
        let tr = run_cmab(&cfg, &pol).unwrap();
        assert_eq!(tr.rounds.len(), 120);
        assert_eq!(&tr.rounds.iter().take(4).map(|r| r.arm).collect::<Vec<_>>(), &[1, 2, 1, 2]);
        let c = tr.cmab_terminals().unwrap();
        let total = &c.s[0] + &c.s[1];
        assert_abs_diff_eq!(total, c.gram.clone(), epsilon = 1e-14);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &["seed = 3".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed = 3\nt,x_1,x_2,arm,propensity,reward\n"));
    }
}
