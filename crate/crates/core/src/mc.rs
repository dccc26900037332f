//! Monte Carlo harness: null distributions, size and power, Neyman-Pearson
//! power envelopes and distribution-freeness comparisons.
//!
//! Replication `i` always uses `RngStream::new(seed, i)`, so two plans that
//! differ only in the statistic or the alternative share random numbers.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::config::{Centering, ExperimentConfig, Innovation};
use crate::error::{Error, Result};
use crate::numeric::{ks_distance, normal_quantile, EmpiricalDistribution};
use crate::policy_cmab::CmabPolicy;
use crate::policy_mab::{MabPolicy, PolicyMode};
use crate::rng::RngStream;
use crate::sim_finite::{run_cmab_terminals, run_mab_terminals};
use crate::sim_limit::{
    np_oracle_statistic, simulate_cmab_limit, simulate_mab_limit, CmabLimitModel, MabLimitModel, MomentStrategy,
    NpAlternative, PathRecord, SdeGrid,
};
use crate::stats::{evaluate, MabTerminals, StatName, StatParams, Terminals};

/// Where replications come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Finite { horizon: usize },
    Limit { grid: SdeGrid },
}

/// A sampling rule; its mode is set from the generator at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyTemplate {
    Mab(MabPolicy),
    Cmab(CmabPolicy),
}

/// Null hypothesis with its nuisance parameter. The scalar alternative `v`
/// moves the local parameters as documented on each variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    /// `(m_1, m_2) = (m1, v)`; null `m_2 = 0`.
    OneArm { m1: f64 },
    /// `(m_1, m_2) = (m - v, m + v)`; null `m_1 = m_2`.
    TwoSample { m: f64 },
    /// `b_1 = b - v g`, `b_2 = b + v g` with `g` the contrast in the plan's
    /// statistic parameters; null `g'(b_2 - b_1) = 0`.
    Contextual { b: Vec<f64> },
}

impl Hypothesis {
    fn with_nuisance(&self, value: f64) -> Hypothesis {
        match self {
            Hypothesis::OneArm { .. } => Hypothesis::OneArm { m1: value },
            Hypothesis::TwoSample { .. } => Hypothesis::TwoSample { m: value },
            Hypothesis::Contextual { b } => Hypothesis::Contextual { b: vec![value; b.len()] },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalRule {
    /// Standard normal quantile for statistics with a normal limit, otherwise
    /// the simulated limit null.
    Auto,
    /// Simulated limit-experiment null quantile.
    Simulated,
    /// Standard normal quantile.
    Analytic,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McPlan {
    pub reps: usize,
    pub seed: u64,
    pub statistic: StatName,
    pub params: StatParams,
    pub generator: Generator,
    /// Grid for the limit experiment used by simulated critical values.
    pub limit_grid: SdeGrid,
    pub policy: PolicyTemplate,
    pub hypothesis: Hypothesis,
    pub alternatives: Vec<f64>,
    pub alpha: f64,
    pub critical: CriticalRule,
    pub innovation: Innovation,
    pub centering: Centering,
    /// `mu` for two-arm runs or `beta` for contextual runs.
    pub global: Vec<f64>,
    pub fisher: f64,
    pub moments: MomentStrategy,
    pub verbose: bool,
}

impl McPlan {
    /// Two-arm plan with default settings for everything but the essentials.
    pub fn mab(
        policy: MabPolicy,
        statistic: StatName,
        hypothesis: Hypothesis,
        generator: Generator,
        reps: usize,
    ) -> Self {
        let grid = SdeGrid { n_steps: 100 };
        Self {
            reps,
            seed: 0,
            statistic,
            params: StatParams::default(),
            generator,
            limit_grid: grid,
            policy: PolicyTemplate::Mab(policy),
            hypothesis,
            alternatives: vec![0.0],
            alpha: 0.05,
            critical: CriticalRule::Auto,
            innovation: Innovation::Gaussian,
            centering: Centering::Known,
            global: vec![0.0],
            fisher: 1.0,
            moments: MomentStrategy::Analytic,
            verbose: false,
        }
    }

    /// Contextual plan; `g` is the contrast for the Wald statistics.
    pub fn cmab(
        policy: CmabPolicy,
        statistic: StatName,
        b: Vec<f64>,
        g: Vec<f64>,
        generator: Generator,
        reps: usize,
    ) -> Self {
        let p = b.len();
        let mut plan = Self::mab(
            MabPolicy::limit(crate::policy_mab::MabPolicyKind::TiThompson, Default::default(), 100)
                .expect("default policy is valid"),
            statistic,
            Hypothesis::Contextual { b },
            generator,
            reps,
        );
        plan.policy = PolicyTemplate::Cmab(policy);
        plan.params.g = g;
        plan.limit_grid = SdeGrid { n_steps: 200 };
        plan.global = vec![0.0; p];
        plan.moments = MomentStrategy::MonteCarlo { n_ctx: 1024 };
        plan
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alternatives(mut self, alternatives: Vec<f64>) -> Self {
        self.alternatives = alternatives;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        let contextual = matches!(self.hypothesis, Hypothesis::Contextual { .. });
        match (&self.policy, contextual) {
            (PolicyTemplate::Mab(_), false) | (PolicyTemplate::Cmab(_), true) => Ok(()),
            _ => Err(Error::InvalidConfig("hypothesis does not match the policy's model".into())),
        }
    }
}

/// Monte Carlo rejection rate at one alternative, with binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub alternative: f64,
    pub rate: f64,
    pub stderr: f64,
}

impl RatePoint {
    fn new(alternative: f64, rate: f64, n: usize) -> Self {
        Self { alternative, rate, stderr: (rate * (1.0 - rate) / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsEntry {
    pub label_a: String,
    pub label_b: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub statistic: StatName,
    pub empirical_null: Option<EmpiricalDistribution>,
    pub critical_value: f64,
    pub rejection_rates: Vec<RatePoint>,
    pub ks_diagnostics: Vec<KsEntry>,
    /// Whether the rates are non-decreasing in the alternative, up to 2 standard errors.
    pub monotone: Option<bool>,
}

impl McSummary {
    pub fn write_rates_csv<W: Write>(&self, w: &mut W, header: &[String]) -> io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "alternative,rate,stderr")?;
        for p in &self.rejection_rates {
            writeln!(w, "{},{},{}", p.alternative, p.rate, p.stderr)?;
        }
        Ok(())
    }
}

pub fn write_ks_csv<W: Write>(w: &mut W, header: &[String], entries: &[KsEntry]) -> io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "label_a,label_b,distance")?;
    for e in entries {
        writeln!(w, "{},{},{}", e.label_a, e.label_b, e.distance)?;
    }
    Ok(())
}

/// Concrete policy for the plan's generator.
enum Runner {
    MabFinite(MabPolicy, usize),
    MabLimit(MabPolicy, SdeGrid),
    CmabFinite(CmabPolicy, usize),
    CmabLimit(CmabPolicy, SdeGrid),
}

fn runner(plan: &McPlan, generator: Generator) -> Result<Runner> {
    Ok(match (&plan.policy, generator) {
        (PolicyTemplate::Mab(p), Generator::Finite { horizon }) => {
            Runner::MabFinite(p.in_mode(PolicyMode::FiniteSample { horizon })?, horizon)
        }
        (PolicyTemplate::Mab(p), Generator::Limit { grid }) => {
            Runner::MabLimit(p.in_mode(PolicyMode::Limit { grid_steps: grid.n_steps })?, grid)
        }
        (PolicyTemplate::Cmab(p), Generator::Finite { horizon }) => {
            Runner::CmabFinite(p.in_mode(PolicyMode::FiniteSample { horizon })?, horizon)
        }
        (PolicyTemplate::Cmab(p), Generator::Limit { grid }) => {
            Runner::CmabLimit(p.in_mode(PolicyMode::Limit { grid_steps: grid.n_steps })?, grid)
        }
    })
}

fn local_params(plan: &McPlan, hypothesis: &Hypothesis, v: f64) -> Result<[Vec<f64>; 2]> {
    Ok(match hypothesis {
        Hypothesis::OneArm { m1 } => [vec![*m1], vec![v]],
        Hypothesis::TwoSample { m } => [vec![m - v], vec![m + v]],
        Hypothesis::Contextual { b } => {
            let g = &plan.params.g;
            if g.len() != b.len() {
                return Err(Error::Dimension(format!("contrast length {} != dimension {}", g.len(), b.len())));
            }
            [
                b.iter().zip(g).map(|(bj, gj)| bj - v * gj).collect(),
                b.iter().zip(g).map(|(bj, gj)| bj + v * gj).collect(),
            ]
        }
    })
}

fn replicate(plan: &McPlan, run: &Runner, local: &[Vec<f64>; 2], rep: u64) -> Result<Terminals> {
    Ok(match run {
        Runner::MabFinite(policy, horizon) => {
            let cfg = ExperimentConfig::mab(*horizon, plan.global[0], local[0][0], local[1][0])
                .with_seed(plan.seed, rep)
                .with_innovation(plan.innovation)
                .with_centering(plan.centering);
            Terminals::Mab(run_mab_terminals(&cfg, policy)?)
        }
        Runner::MabLimit(policy, grid) => {
            let model = MabLimitModel { m: [local[0][0], local[1][0]], fisher: plan.fisher };
            let out =
                simulate_mab_limit(policy, &model, *grid, &RngStream::new(plan.seed, rep), PathRecord::TerminalOnly)?;
            Terminals::Mab(out.terminals)
        }
        Runner::CmabFinite(policy, horizon) => {
            let cfg = ExperimentConfig::cmab(*horizon, plan.global.clone(), local[0].clone(), local[1].clone())
                .with_seed(plan.seed, rep)
                .with_innovation(plan.innovation)
                .with_centering(plan.centering);
            Terminals::Cmab(run_cmab_terminals(&cfg, policy)?)
        }
        Runner::CmabLimit(policy, grid) => {
            let model = CmabLimitModel::new(local[0].clone(), local[1].clone(), plan.moments);
            let out =
                simulate_cmab_limit(policy, &model, *grid, &RngStream::new(plan.seed, rep), PathRecord::TerminalOnly)?;
            Terminals::Cmab(out.terminals)
        }
    })
}

fn map_reps<T, F>(plan: &McPlan, label: &str, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let done = AtomicUsize::new(0);
    let reps = plan.reps;
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let out = f(i as u64);
            if plan.verbose {
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n * 10 / reps != (n - 1) * 10 / reps {
                    println!("[{label}] {}% ({n}/{reps})", n * 100 / reps);
                }
            }
            out
        })
        .collect()
}

/// Terminal summaries of `plan.reps` replications at alternative `v`.
pub fn sample_terminals(
    plan: &McPlan,
    generator: Generator,
    hypothesis: &Hypothesis,
    v: f64,
) -> Result<Vec<Terminals>> {
    plan.validate()?;
    let run = runner(plan, generator)?;
    let local = local_params(plan, hypothesis, v)?;
    map_reps(plan, &format!("{} v={v}", plan.statistic), |i| replicate(plan, &run, &local, i))
}

/// Values of the plan's statistic over replications at alternative `v`.
pub fn sample_statistic(plan: &McPlan, generator: Generator, hypothesis: &Hypothesis, v: f64) -> Result<Vec<f64>> {
    plan.validate()?;
    let run = runner(plan, generator)?;
    let local = local_params(plan, hypothesis, v)?;
    let label = format!("{} v={v}", plan.statistic);
    map_reps(plan, &label, |i| evaluate(plan.statistic, &replicate(plan, &run, &local, i)?, &plan.params))
}

/// Empirical null of the statistic under the plan's generator, with the
/// critical value from the plan's rule and the null rejection rate.
pub fn null_distribution(plan: &McPlan) -> Result<McSummary> {
    let values = sample_statistic(plan, plan.generator, &plan.hypothesis, 0.0)?;
    let null = EmpiricalDistribution::new(values)?;
    let critical = match plan.critical {
        CriticalRule::Fixed(c) => c,
        CriticalRule::Analytic => normal_quantile(1.0 - plan.alpha),
        CriticalRule::Auto if plan.statistic.is_asymptotically_normal() => normal_quantile(1.0 - plan.alpha),
        CriticalRule::Auto | CriticalRule::Simulated => null.quantile(1.0 - plan.alpha)?,
    };
    let rate = RatePoint::new(0.0, null.exceedance(critical), null.len());
    Ok(McSummary {
        statistic: plan.statistic,
        empirical_null: Some(null),
        critical_value: critical,
        rejection_rates: vec![rate],
        ks_diagnostics: Vec::new(),
        monotone: None,
    })
}

/// Critical value for the plan's statistic at level `alpha`, taken from the
/// limit experiment unless the rule says otherwise.
pub fn critical_value(plan: &McPlan) -> Result<f64> {
    match plan.critical {
        CriticalRule::Fixed(c) => Ok(c),
        CriticalRule::Analytic => Ok(normal_quantile(1.0 - plan.alpha)),
        CriticalRule::Auto if plan.statistic.is_asymptotically_normal() => Ok(normal_quantile(1.0 - plan.alpha)),
        CriticalRule::Auto | CriticalRule::Simulated => {
            let limit = Generator::Limit { grid: plan.limit_grid };
            let values = sample_statistic(plan, limit, &plan.hypothesis, 0.0)?;
            EmpiricalDistribution::new(values)?.quantile(1.0 - plan.alpha)
        }
    }
}

/// Rejection rates at each alternative for a given critical value.
pub fn size_and_power(plan: &McPlan, critical: f64) -> Result<McSummary> {
    if plan.alternatives.is_empty() {
        return Err(Error::InvalidConfig("empty alternative grid".into()));
    }
    let mut rates = Vec::with_capacity(plan.alternatives.len());
    let mut empirical_null = None;
    for &v in &plan.alternatives {
        let e = EmpiricalDistribution::new(sample_statistic(plan, plan.generator, &plan.hypothesis, v)?)?;
        rates.push(RatePoint::new(v, e.exceedance(critical), e.len()));
        if v == 0.0 && empirical_null.is_none() {
            empirical_null = Some(e);
        }
    }
    let monotone = Some(is_monotone(&plan.alternatives, &rates));
    Ok(McSummary {
        statistic: plan.statistic,
        empirical_null,
        critical_value: critical,
        rejection_rates: rates,
        ks_diagnostics: Vec::new(),
        monotone,
    })
}

fn is_monotone(alts: &[f64], rates: &[RatePoint]) -> bool {
    let mut idx: Vec<usize> = (0..alts.len()).collect();
    idx.sort_by(|&a, &b| alts[a].total_cmp(&alts[b]));
    idx.windows(2).all(|w| {
        let (a, b) = (rates[w[0]], rates[w[1]]);
        b.rate + 2.0 * (a.stderr + b.stderr) >= a.rate
    })
}

/// Power of the randomized most powerful test at each alternative, from the
/// limit experiment's likelihood ratio.
///
/// The boundary `kappa` is the `1 - alpha` type-7 quantile of the simulated
/// null statistic; ties at `kappa` are rejected with the probability that
/// brings the null rate to exactly `alpha`.
pub fn np_power_bound(plan: &McPlan) -> Result<McSummary> {
    if !matches!(plan.generator, Generator::Limit { .. }) {
        return Err(Error::OracleRequiresLimit);
    }
    if plan.alternatives.is_empty() {
        return Err(Error::InvalidConfig("empty alternative grid".into()));
    }
    let alt_for = |v: f64| match plan.hypothesis {
        Hypothesis::OneArm { .. } => Ok(NpAlternative::OneArm { m_bar2: v }),
        Hypothesis::TwoSample { m } => Ok(NpAlternative::TwoSample { m_bar: m, delta_bar: v }),
        Hypothesis::Contextual { .. } => Err(Error::InvalidConfig("np oracle covers two-arm experiments".into())),
    };
    let mab = |ts: Vec<Terminals>| -> Vec<MabTerminals> {
        ts.into_iter()
            .filter_map(|t| match t {
                Terminals::Mab(m) => Some(m),
                Terminals::Cmab(_) => None,
            })
            .collect()
    };
    let null = mab(sample_terminals(plan, plan.generator, &plan.hypothesis, 0.0)?);
    let mut rates = Vec::with_capacity(plan.alternatives.len());
    for &v in &plan.alternatives {
        let alt = alt_for(v)?;
        let tau0 = EmpiricalDistribution::new(null.iter().map(|t| np_oracle_statistic(t, alt)).collect())?;
        let kappa = tau0.quantile(1.0 - plan.alpha)?;
        let above = tau0.exceedance(kappa);
        let at = tau0.atom(kappa);
        let gamma = if at > 0.0 { ((plan.alpha - above) / at).clamp(0.0, 1.0) } else { 0.0 };
        let power = if v == 0.0 {
            above + gamma * at
        } else {
            let alt_terms = mab(sample_terminals(plan, plan.generator, &plan.hypothesis, v)?);
            let tau1 = EmpiricalDistribution::new(alt_terms.iter().map(|t| np_oracle_statistic(t, alt)).collect())?;
            tau1.exceedance(kappa) + gamma * tau1.atom(kappa)
        };
        rates.push(RatePoint::new(v, power, null.len()));
    }
    let monotone = Some(is_monotone(&plan.alternatives, &rates));
    Ok(McSummary {
        statistic: match plan.hypothesis {
            Hypothesis::OneArm { .. } => StatName::Np,
            _ => StatName::TsNp,
        },
        empirical_null: None,
        critical_value: f64::NAN,
        rejection_rates: rates,
        ks_diagnostics: Vec::new(),
        monotone,
    })
}

/// Pairwise KS distances between null distributions of the plan's statistic
/// as the nuisance parameter runs over `nuisance`.
///
/// The nuisance is `m_1` (one-arm), the common mean `m` (two-sample) or a
/// common value for every coordinate of `b` (contextual).
pub fn distribution_freeness_report(plan: &McPlan, nuisance: &[f64]) -> Result<Vec<KsEntry>> {
    if nuisance.len() < 2 {
        return Err(Error::InvalidConfig("distribution comparison needs at least two nuisance values".into()));
    }
    let samples = nuisance
        .iter()
        .map(|&value| {
            let h = plan.hypothesis.with_nuisance(value);
            EmpiricalDistribution::new(sample_statistic(plan, plan.generator, &h, 0.0)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in 0..nuisance.len() {
        for j in (i + 1)..nuisance.len() {
            out.push(KsEntry {
                label_a: format!("{}", nuisance[i]),
                label_b: format!("{}", nuisance[j]),
                distance: ks_distance(&samples[i], &samples[j]),
            });
        }
    }
    Ok(out)
}
