use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use tibandit::mc::{
    critical_value, distribution_freeness_report, np_power_bound, sample_statistic, size_and_power, CriticalRule,
    Generator, Hypothesis, McPlan,
};
use tibandit::policy_cmab::{CmabHyper, CmabPolicy, CmabPolicyKind, CmabSchedule};
use tibandit::policy_mab::{HyperSchedule, MabHyper, MabPolicy, MabPolicyKind, PolicyMode};
use tibandit::sim_finite::{run_cmab, run_mab};
use tibandit::sim_limit::{
    simulate_cmab_limit, simulate_mab_limit, CmabLimitModel, CmabLimitOutcome, MabLimitModel, MabLimitOutcome,
    MomentStrategy, PathRecord, SdeGrid,
};
use tibandit::stats::StatName;
use tibandit::{Centering, ExperimentConfig, Innovation, RngStream};

use crate::error::CliError;
use crate::schema::{Command, Settings};

type Result<T> = std::result::Result<T, CliError>;

pub struct Invocation {
    pub command: Command,
    pub settings: Settings,
    pub out: Option<PathBuf>,
    pub verbose: bool,
    pub paths: usize,
    pub terminal_only: bool,
}

impl Invocation {
    fn header(&self) -> Vec<String> {
        let mut line = format!("; tibandit {}", self.command);
        if self.command == Command::LimitSim {
            line.push_str(&format!(" --paths {}", self.paths));
            if self.terminal_only {
                line.push_str(" --terminal-only");
            }
        }
        let mut out = vec![line];
        out.extend(self.settings.echo(self.command));
        out
    }

    fn writer(&self) -> Result<BufWriter<File>> {
        let path = self.out.as_ref().ok_or_else(|| CliError::config("--out is required"))?;
        Ok(BufWriter::new(File::create(path).map_err(|e| CliError::from(e).context(path))?))
    }
}

trait Context {
    fn context(self, path: &std::path::Path) -> Self;
}

impl Context for CliError {
    fn context(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

pub fn run(inv: &Invocation) -> Result<()> {
    match inv.command {
        Command::MabSim => mab_sim(inv),
        Command::CmabSim => cmab_sim(inv),
        Command::LimitSim => limit_sim(inv),
        Command::NullSample => null_sample(inv),
        Command::SizeTable => size_table(inv),
        Command::PowerCurve => power_curve(inv),
        Command::KsReport => ks_report(inv),
    }
}

fn mab_hyper(s: &Settings) -> Result<MabHyper> {
    Ok(MabHyper { b: s.get("policy", "b")?, alpha: s.get("policy", "alpha")?, delta: s.get("policy", "delta")? })
}

fn cmab_hyper(s: &Settings) -> Result<CmabHyper> {
    Ok(CmabHyper { b: s.get("policy", "b")?, alpha: s.get("policy", "alpha")?, lambda: s.get("policy", "lambda")? })
}

fn schedule(s: &Settings) -> Result<HyperSchedule> {
    match s.raw("policy", "schedule") {
        "canonical" => Ok(HyperSchedule::Canonical),
        "fixed-delta" => Ok(HyperSchedule::FixedDelta),
        v => {
            Err(CliError::config(format!("invalid value '{v}' for policy.schedule: expected canonical or fixed-delta")))
        }
    }
}

fn cmab_schedule(s: &Settings) -> Result<CmabSchedule> {
    match s.raw("policy", "schedule") {
        "canonical" => Ok(CmabSchedule::Canonical),
        v => Err(CliError::config(format!("policy.schedule = {v} is not available for contextual policies"))),
    }
}

fn mab_policy(s: &Settings, mode: PolicyMode) -> Result<MabPolicy> {
    let kind: MabPolicyKind = s.get("policy", "kind")?;
    Ok(MabPolicy::new(kind, mab_hyper(s)?, schedule(s)?, mode)?)
}

fn cmab_policy(s: &Settings, mode: PolicyMode) -> Result<CmabPolicy> {
    let kind: CmabPolicyKind = s.get("policy", "kind")?;
    Ok(CmabPolicy::new(kind, cmab_hyper(s)?, cmab_schedule(s)?, mode)?)
}

fn grid(s: &Settings) -> Result<SdeGrid> {
    Ok(SdeGrid::new(s.get("experiment", "grid")?)?)
}

fn moments(s: &Settings) -> Result<MomentStrategy> {
    let v = s.raw("experiment", "moments");
    if v == "analytic" {
        return Ok(MomentStrategy::Analytic);
    }
    v.strip_prefix("mc:")
        .and_then(|n| n.parse().ok())
        .filter(|&n: &usize| n > 0)
        .map(|n_ctx| MomentStrategy::MonteCarlo { n_ctx })
        .ok_or_else(|| {
            CliError::config(format!("invalid value '{v}' for experiment.moments: expected analytic or mc:<n>"))
        })
}

fn contextual(s: &Settings) -> Result<bool> {
    match s.raw("experiment", "model") {
        "mab" => Ok(false),
        "cmab" => Ok(true),
        v => Err(CliError::config(format!("invalid value '{v}' for experiment.model: expected mab or cmab"))),
    }
}

fn finite_config(s: &Settings, cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    Ok(cfg
        .with_seed(s.get("experiment", "seed")?, s.get("experiment", "replication")?)
        .with_innovation(s.get::<Innovation>("experiment", "innovation")?)
        .with_centering(s.get::<Centering>("experiment", "centering")?))
}

fn mab_sim(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let horizon: usize = s.get("experiment", "horizon")?;
    let cfg = ExperimentConfig::mab(
        horizon,
        s.get("experiment", "mu")?,
        s.get("experiment", "m1")?,
        s.get("experiment", "m2")?,
    );
    let cfg = finite_config(s, cfg)?;
    let policy = mab_policy(s, PolicyMode::FiniteSample { horizon })?;
    let traj = run_mab(&cfg, &policy)?;
    let mut w = inv.writer()?;
    traj.write_csv(&mut w, &inv.header())?;
    Ok(w.flush()?)
}

fn cmab_sim(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let horizon: usize = s.get("experiment", "horizon")?;
    let cfg = ExperimentConfig::cmab(
        horizon,
        s.list("experiment", "beta")?,
        s.list("experiment", "b1")?,
        s.list("experiment", "b2")?,
    );
    let cfg = finite_config(s, cfg)?;
    let policy = cmab_policy(s, PolicyMode::FiniteSample { horizon })?;
    let traj = run_cmab(&cfg, &policy)?;
    let mut w = inv.writer()?;
    traj.write_csv(&mut w, &inv.header())?;
    Ok(w.flush()?)
}

/// Runs `f` over `0..n` in parallel, printing progress every 10% when asked.
fn par_paths<T: Send>(n: usize, verbose: bool, f: impl Fn(u64) -> tibandit::Result<T> + Sync) -> Result<Vec<T>> {
    let done = AtomicUsize::new(0);
    let out: tibandit::Result<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = f(i as u64);
            if verbose {
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k * 10 / n != (k - 1) * 10 / n {
                    println!("[limit-sim] {}% ({k}/{n})", k * 100 / n);
                }
            }
            r
        })
        .collect();
    Ok(out?)
}

fn limit_sim(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    if inv.paths == 0 {
        return Err(CliError::config("--paths must be positive"));
    }
    let grid = grid(s)?;
    let seed: u64 = s.get("experiment", "seed")?;
    let record = if inv.terminal_only { PathRecord::TerminalOnly } else { PathRecord::Full };
    let mode = PolicyMode::Limit { grid_steps: grid.n_steps };
    let extended = s.flag("output", "extended")?;
    if contextual(s)? {
        let policy = cmab_policy(s, mode)?;
        let p = s.list::<f64>("experiment", "beta")?.len();
        let model = CmabLimitModel::new(s.list("experiment", "b1")?, s.list("experiment", "b2")?, moments(s)?);
        if model.dim() != p {
            return Err(CliError::config(format!("experiment.b1 has {} entries but beta has {p}", model.dim())));
        }
        let outs = par_paths(inv.paths, inv.verbose, |i| {
            simulate_cmab_limit(&policy, &model, grid, &RngStream::new(seed, i), record)
        })?;
        let mut w = inv.writer()?;
        write_cmab_paths(&mut w, &inv.header(), &outs, p)?;
        Ok(w.flush()?)
    } else {
        let policy = mab_policy(s, mode)?;
        let model = MabLimitModel::new(s.get("experiment", "m1")?, s.get("experiment", "m2")?)
            .with_fisher(s.get("experiment", "fisher")?);
        let outs = par_paths(inv.paths, inv.verbose, |i| {
            simulate_mab_limit(&policy, &model, grid, &RngStream::new(seed, i), record)
        })?;
        let mut w = inv.writer()?;
        write_mab_paths(&mut w, &inv.header(), &outs, extended)?;
        Ok(w.flush()?)
    }
}

fn write_header(w: &mut impl Write, header: &[String]) -> std::io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn write_mab_paths(
    w: &mut impl Write,
    header: &[String],
    outs: &[MabLimitOutcome],
    extended: bool,
) -> std::io::Result<()> {
    write_header(w, header)?;
    write!(w, "path,u,d_1,d_2,r_1,r_2")?;
    if extended {
        write!(w, ",r_w0.5_1,r_w0.5_2,d_w0.5_1,d_w0.5_2,r_w1_1,r_w1_2,d_w1_1,d_w1_2,score_1,score_2,info_1,info_2")?;
    }
    writeln!(w)?;
    for (i, o) in outs.iter().enumerate() {
        let t = &o.terminals;
        let rows: Vec<_> = match &o.path {
            Some(path) => path.iter().map(|p| (p.u, p.d, p.r, p.r_w, p.d_w, p.score, p.info)).collect(),
            None => vec![(1.0, t.d, t.r, t.r_w, t.d_w, o.score, o.info)],
        };
        for (u, d, r, r_w, d_w, score, info) in rows {
            write!(w, "{i},{u},{},{},{},{}", d[0], d[1], r[0], r[1])?;
            if extended {
                for j in 1..3 {
                    write!(w, ",{},{},{},{}", r_w[j][0], r_w[j][1], d_w[j][0], d_w[j][1])?;
                }
                write!(w, ",{},{},{},{}", score[0], score[1], info[0], info[1])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// `(u, C_k, diag S_k)` at one grid point.
type CmabRow = (f64, [Vec<f64>; 2], [Vec<f64>; 2]);

fn write_cmab_paths(w: &mut impl Write, header: &[String], outs: &[CmabLimitOutcome], p: usize) -> std::io::Result<()> {
    write_header(w, header)?;
    let mut cols = vec!["path".to_string(), "u".to_string()];
    for k in 1..=2 {
        cols.extend((1..=p).map(|j| format!("c_{k}_{j}")));
    }
    for k in 1..=2 {
        cols.extend((1..=p).map(|j| format!("s_{k}_{j}{j}")));
    }
    writeln!(w, "{}", cols.join(","))?;
    for (i, o) in outs.iter().enumerate() {
        let t = &o.terminals;
        let rows: Vec<CmabRow> = match &o.path {
            Some(path) => path.iter().map(|q| (q.u, q.c.clone(), q.s_diag.clone())).collect(),
            None => vec![(
                1.0,
                [t.c[0].iter().copied().collect(), t.c[1].iter().copied().collect()],
                [t.s[0].diagonal().iter().copied().collect(), t.s[1].diagonal().iter().copied().collect()],
            )],
        };
        for (u, c, sd) in rows {
            let vals: Vec<String> = c.iter().chain(sd.iter()).flatten().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{u},{}", vals.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HypothesisKind {
    OneArm,
    TwoSample,
    Contextual,
}

fn hypothesis_kind(s: &Settings, stats: &[StatName]) -> Result<HypothesisKind> {
    match s.raw("mc", "hypothesis") {
        "one-arm" => Ok(HypothesisKind::OneArm),
        "two-sample" => Ok(HypothesisKind::TwoSample),
        "contextual" => Ok(HypothesisKind::Contextual),
        "auto" => {
            if contextual(s)? {
                Ok(HypothesisKind::Contextual)
            } else if stats.iter().all(|st| st.is_one_arm()) {
                Ok(HypothesisKind::OneArm)
            } else if stats.iter().all(|st| !st.is_one_arm() && !st.is_contextual()) {
                Ok(HypothesisKind::TwoSample)
            } else {
                Err(CliError::config("mc.statistics mixes one-arm and two-sample tests; set mc.hypothesis"))
            }
        }
        v => Err(CliError::config(format!(
            "invalid value '{v}' for mc.hypothesis: expected auto, one-arm, two-sample or contextual"
        ))),
    }
}

fn critical_rule(s: &Settings) -> Result<CriticalRule> {
    match s.raw("mc", "critical") {
        "auto" => Ok(CriticalRule::Auto),
        "simulated" => Ok(CriticalRule::Simulated),
        "analytic" => Ok(CriticalRule::Analytic),
        _ => Ok(CriticalRule::Fixed(s.get("mc", "critical")?)),
    }
}

fn statistics(s: &Settings) -> Result<Vec<StatName>> {
    let stats: Vec<StatName> = s.list("mc", "statistics")?;
    if stats.is_empty() {
        return Err(CliError::config("mc.statistics is empty"));
    }
    Ok(stats)
}

fn single_nuisance(s: &Settings, cmd: Command) -> Result<f64> {
    match s.list::<f64>("mc", "nuisance")?[..] {
        [v] => Ok(v),
        _ => Err(CliError::config(format!("mc.nuisance must hold exactly one value for {cmd}"))),
    }
}

/// Monte Carlo plan for one statistic.
fn plan(inv: &Invocation, stat: StatName, kind: HypothesisKind, nuisance: f64) -> Result<McPlan> {
    let s = &inv.settings;
    let grid = grid(s)?;
    let generator = match s.raw("mc", "generator") {
        "limit" => Generator::Limit { grid },
        "finite" => Generator::Finite { horizon: s.get("experiment", "horizon")? },
        v => return Err(CliError::config(format!("invalid value '{v}' for mc.generator: expected finite or limit"))),
    };
    let reps: usize = s.get("mc", "reps")?;
    let mode = PolicyMode::Limit { grid_steps: grid.n_steps };
    let mut plan = if contextual(s)? {
        let beta: Vec<f64> = s.list("experiment", "beta")?;
        let b = vec![nuisance; beta.len()];
        let mut p = McPlan::cmab(cmab_policy(s, mode)?, stat, b, s.list("mc", "g")?, generator, reps);
        p.global = beta;
        p.moments = moments(s)?;
        p
    } else {
        let hyp = match kind {
            HypothesisKind::OneArm => Hypothesis::OneArm { m1: nuisance },
            HypothesisKind::TwoSample => Hypothesis::TwoSample { m: nuisance },
            HypothesisKind::Contextual => {
                return Err(CliError::config("mc.hypothesis = contextual requires experiment.model = cmab"));
            }
        };
        let mut p = McPlan::mab(mab_policy(s, mode)?, stat, hyp, generator, reps);
        p.global = vec![s.get("experiment", "mu")?];
        p.fisher = s.get("experiment", "fisher")?;
        p
    };
    let np_alt: f64 = s.get("mc", "np_alternative")?;
    plan.seed = s.get("experiment", "seed")?;
    plan.limit_grid = grid;
    plan.innovation = s.get("experiment", "innovation")?;
    plan.centering = s.get("experiment", "centering")?;
    plan.alpha = s.get("mc", "alpha")?;
    plan.critical = critical_rule(s)?;
    plan.params.np_m2 = np_alt;
    plan.params.ts_np = (nuisance, np_alt);
    plan.verbose = inv.verbose;
    Ok(plan)
}

fn generator_label(plan: &McPlan) -> String {
    match plan.generator {
        Generator::Finite { horizon } => format!("finite,{horizon}"),
        Generator::Limit { grid } => format!("limit,{}", grid.n_steps),
    }
}

fn null_sample(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let stats = statistics(s)?;
    let kind = hypothesis_kind(s, &stats)?;
    let nuisance = single_nuisance(s, inv.command)?;
    let mut columns = Vec::with_capacity(stats.len());
    for &stat in &stats {
        let p = plan(inv, stat, kind, nuisance)?;
        columns.push(sample_statistic(&p, p.generator, &p.hypothesis, 0.0)?);
    }
    let mut w = inv.writer()?;
    write_header(&mut w, &inv.header())?;
    let names: Vec<String> = stats.iter().map(|st| st.to_string()).collect();
    writeln!(w, "rep,{}", names.join(","))?;
    for i in 0..columns[0].len() {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        writeln!(w, "{i},{}", row.join(","))?;
    }
    Ok(w.flush()?)
}

fn size_table(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let stats = statistics(s)?;
    let nuisance = single_nuisance(s, inv.command)?;
    let mut rows = Vec::new();
    for &stat in &stats {
        let kind = hypothesis_kind_for(s, stat)?;
        let p = plan(inv, stat, kind, nuisance)?.with_alternatives(vec![0.0]);
        let c = critical_value(&p)?;
        let r = size_and_power(&p, c)?.rejection_rates[0];
        rows.push(format!("{},{stat},{},{c},{},{}", s.raw("policy", "kind"), generator_label(&p), r.rate, r.stderr));
    }
    let mut w = inv.writer()?;
    write_header(&mut w, &inv.header())?;
    writeln!(w, "policy,statistic,generator,steps,critical_value,size,stderr")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(w.flush()?)
}

/// Hypothesis for one statistic of a table that may mix one-arm and two-sample tests.
fn hypothesis_kind_for(s: &Settings, stat: StatName) -> Result<HypothesisKind> {
    hypothesis_kind(s, &[stat])
}

fn power_curve(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let stats = statistics(s)?;
    let kind = hypothesis_kind(s, &stats)?;
    let nuisance = single_nuisance(s, inv.command)?;
    let alternatives: Vec<f64> = s.list("mc", "alternatives")?;
    if alternatives.is_empty() {
        return Err(CliError::config("empty alternative grid"));
    }
    let mut rows = Vec::new();
    for &stat in &stats {
        let p = plan(inv, stat, kind, nuisance)?.with_alternatives(alternatives.clone());
        let c = critical_value(&p)?;
        for r in size_and_power(&p, c)?.rejection_rates {
            rows.push(format!("{stat},{},{},{},{c}", r.alternative, r.rate, r.stderr));
        }
    }
    if s.flag("mc", "np")? {
        let p = plan(inv, stats[0], kind, nuisance)?.with_alternatives(alternatives);
        let summary = np_power_bound(&p)?;
        for r in summary.rejection_rates {
            rows.push(format!("{},{},{},{},", summary.statistic, r.alternative, r.rate, r.stderr));
        }
    }
    let mut w = inv.writer()?;
    write_header(&mut w, &inv.header())?;
    writeln!(w, "statistic,alternative,rate,stderr,critical_value")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(w.flush()?)
}

fn ks_report(inv: &Invocation) -> Result<()> {
    let s = &inv.settings;
    let stats = statistics(s)?;
    let kind = hypothesis_kind(s, &stats)?;
    let nuisance: Vec<f64> = s.list("mc", "nuisance")?;
    if nuisance.len() < 2 {
        return Err(CliError::config("ks-report needs at least two values in mc.nuisance"));
    }
    let mut rows = Vec::new();
    for &stat in &stats {
        let p = plan(inv, stat, kind, nuisance[0])?;
        for e in distribution_freeness_report(&p, &nuisance)? {
            rows.push(format!("{stat},{},{},{}", e.label_a, e.label_b, e.distance));
        }
    }
    let mut w = inv.writer()?;
    write_header(&mut w, &inv.header())?;
    writeln!(w, "statistic,nuisance_a,nuisance_b,distance")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(w.flush()?)
}
