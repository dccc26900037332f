//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use tibandit::mc::{
    critical_value, distribution_freeness_report, np_power_bound, sample_statistic, sample_terminals, size_and_power,
    Generator, Hypothesis, McPlan, PolicyTemplate,
};
use tibandit::numeric::{gauss_hermite_normal, ks_distance, ks_distance_to, normal_cdf, EmpiricalDistribution};
use tibandit::policy_cmab::{check_translation_invariance_ctx, CmabHyper, CmabPolicy, CmabPolicyKind};
use tibandit::policy_mab::{
    check_translation_invariance, HyperSchedule, MabHyper, MabPolicy, MabPolicyKind, MabPolicyState, PolicyMode,
};
use tibandit::sim_finite::{gaussian_loglik_ratio, replay_mab, run_cmab, run_mab};
use tibandit::sim_limit::{simulate_mab_limit, MabLimitModel, MomentStrategy, PathRecord, SdeGrid};
use tibandit::stats::{evaluate, StatName, Terminals, WEIGHT_GRID};
use tibandit::{Centering, ExperimentConfig, LocalParams, RngStream};

const REPS: usize = 50_000;
const GRID: SdeGrid = SdeGrid { n_steps: 100 };

type Outcome = Result<(bool, String), tibandit::Error>;
type Criterion = (&'static str, fn() -> Outcome);

fn limit_policy(kind: MabPolicyKind) -> MabPolicy {
    MabPolicy::limit(kind, MabHyper::default(), GRID.n_steps).expect("default hyperparameters are valid")
}

fn plan(kind: MabPolicyKind, stat: StatName, hyp: Hypothesis, generator: Generator, seed: u64) -> McPlan {
    McPlan::mab(limit_policy(kind), stat, hyp, generator, REPS).with_seed(seed)
}

fn limit() -> Generator {
    Generator::Limit { grid: GRID }
}

fn ti_kinds() -> [MabPolicyKind; 3] {
    [MabPolicyKind::TiThompson, MabPolicyKind::TiTemperedGreedy, MabPolicyKind::TiTemperedUcb]
}

fn size_table() -> Outcome {
    let cells = [
        (MabPolicyKind::TiThompson, StatName::Aw, 50, 5.04),
        (MabPolicyKind::TiThompson, StatName::Aw, 100, 4.91),
        (MabPolicyKind::TiThompson, StatName::Aw, 200, 5.15),
        (MabPolicyKind::TiThompson, StatName::Aw, 500, 5.00),
        (MabPolicyKind::TiThompson, StatName::TsT, 500, 4.88),
        (MabPolicyKind::TiTemperedUcb, StatName::TsAw, 200, 4.75),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, stat, horizon, target) in cells {
        let hyp = if stat.is_one_arm() { Hypothesis::OneArm { m1: 0.0 } } else { Hypothesis::TwoSample { m: 0.0 } };
        let p = plan(kind, stat, hyp, Generator::Finite { horizon }, 1000 + horizon as u64);
        let c = critical_value(&p)?;
        let size = 100.0 * size_and_power(&p, c)?.rejection_rates[0].rate;
        let hit = (size - target).abs() <= 0.6;
        ok &= hit;
        let mut note = String::new();
        if kind == MabPolicyKind::TiTemperedUcb {
            let pol = MabPolicy::new(
                kind,
                MabHyper::default(),
                HyperSchedule::FixedDelta,
                PolicyMode::Limit { grid_steps: GRID.n_steps },
            )?;
            let mut q = p.clone();
            q.policy = PolicyTemplate::Mab(pol);
            note = format!(" [delta_T fixed: {:.2}%]", 100.0 * size_and_power(&q, c)?.rejection_rates[0].rate);
        }
        parts.push(format!(
            "{kind}/{stat}/T={horizon}: {size:.2}% vs {target:.2}%{}{note}",
            if hit { "" } else { " (off)" }
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn aw_normality() -> Outcome {
    let mut worst: f64 = 0.0;
    for m1 in [0.0, 10.0] {
        let p = plan(MabPolicyKind::TiThompson, StatName::Aw, Hypothesis::OneArm { m1 }, limit(), 2);
        let e = EmpiricalDistribution::new(sample_statistic(&p, p.generator, &p.hypothesis, 0.0)?)?;
        worst = worst.max(ks_distance_to(&e, normal_cdf));
    }
    Ok((worst < 0.015, format!("max KS to N(0,1) = {worst:.4} (< 0.015)")))
}

fn distribution_freeness() -> Outcome {
    let mut ok = true;
    let mut worst_crn: f64 = 0.0;
    let mut worst_indep: f64 = 0.0;
    for kind in ti_kinds() {
        for stat in [StatName::TsT, StatName::TsAw, StatName::TsIpw] {
            let p = plan(kind, stat, Hypothesis::TwoSample { m: 0.0 }, limit(), 3);
            worst_crn = worst_crn.max(distribution_freeness_report(&p, &[0.0, 50.0])?[0].distance);
            let a = EmpiricalDistribution::new(sample_statistic(&p, limit(), &Hypothesis::TwoSample { m: 0.0 }, 0.0)?)?;
            let q = p.clone().with_seed(33);
            let b =
                EmpiricalDistribution::new(sample_statistic(&q, limit(), &Hypothesis::TwoSample { m: 50.0 }, 0.0)?)?;
            worst_indep = worst_indep.max(ks_distance(&a, &b));
        }
    }
    ok &= worst_crn < 0.015 && worst_indep < 0.015;
    // The non-invariance of classical sampling acts at small u, so it is
    // measured on a grid fine enough for the Euler scheme to resolve it.
    let fine = SdeGrid { n_steps: 1000 };
    let mut classical = Vec::new();
    for stat in [StatName::TsT, StatName::Freq] {
        let pol = MabPolicy::limit(MabPolicyKind::ClassicalThompson, MabHyper::default(), fine.n_steps)?;
        let coarse = plan(MabPolicyKind::ClassicalThompson, stat, Hypothesis::TwoSample { m: 0.0 }, limit(), 3);
        let d100 = distribution_freeness_report(&coarse, &[0.0, 50.0])?[0].distance;
        let p = McPlan::mab(pol, stat, Hypothesis::TwoSample { m: 0.0 }, Generator::Limit { grid: fine }, REPS)
            .with_seed(3);
        let d = distribution_freeness_report(&p, &[0.0, 50.0])?[0].distance;
        ok &= d > 0.05;
        classical.push(format!("{stat} {d:.3} (grid 100: {d100:.3})"));
    }
    Ok((
        ok,
        format!(
            "TI max KS(m=0,m=50) = {worst_crn:.4} common draws, {worst_indep:.4} independent draws (< 0.015); classical on grid 1000: {} (> 0.05)",
            classical.join(", ")
        ),
    ))
}

fn translation_invariance() -> Outcome {
    let mut rng = RngStream::new(4, 0);
    let mut mab_worst: f64 = 0.0;
    for kind in ti_kinds() {
        for pol in [limit_policy(kind), MabPolicy::finite(kind, MabHyper::default(), 200)?] {
            mab_worst = mab_worst.max(check_translation_invariance(&pol, 1000, &mut rng)?);
        }
    }
    let mut cmab_worst: f64 = 0.0;
    for kind in [CmabPolicyKind::TiThompson, CmabPolicyKind::TiTemperedGreedy, CmabPolicyKind::TiTemperedLinUcb] {
        let pol = CmabPolicy::limit(kind, CmabHyper::default(), 200)?;
        for p in [2, 3] {
            cmab_worst = cmab_worst.max(check_translation_invariance_ctx(&pol, p, 1000, &mut rng)?);
        }
    }
    let mut arms_equal = true;
    for kind in ti_kinds() {
        let pol = MabPolicy::finite(kind, MabHyper::default(), 200)?;
        for rep in 0..20 {
            let base = ExperimentConfig::mab(200, 0.0, 0.3, -0.2).with_seed(4, rep).with_centering(Centering::Raw);
            let shifted = ExperimentConfig::mab(200, 37.5, 0.3, -0.2).with_seed(4, rep).with_centering(Centering::Raw);
            let a: Vec<usize> = run_mab(&base, &pol)?.rounds.iter().map(|r| r.arm).collect();
            let b: Vec<usize> = run_mab(&shifted, &pol)?.rounds.iter().map(|r| r.arm).collect();
            arms_equal &= a == b;
        }
    }
    let ok = mab_worst <= 1e-12 && cmab_worst <= 1e-10 && arms_equal;
    Ok((
        ok,
        format!("MAB {mab_worst:.1e} (<= 1e-12), CMAB {cmab_worst:.1e} (<= 1e-10), arm sequences equal: {arms_equal}"),
    ))
}

/// Log-likelihood ratio recomputed round by round from the recorded rewards.
fn brute_force_llr(rounds: &[tibandit::sim_finite::Round], mu: f64, m: [f64; 2], horizon: usize) -> f64 {
    let s = (horizon as f64).sqrt();
    rounds
        .iter()
        .map(|r| {
            let e = r.reward - mu;
            let shift = m[r.arm - 1] / s;
            // log phi(e - shift) - log phi(e)
            -0.5 * (e - shift) * (e - shift) + 0.5 * e * e
        })
        .sum()
}

fn martingale_identity() -> Outcome {
    let m = [1.0, 1.0];
    let local = LocalParams::mab(m[0], m[1]);
    let pol = MabPolicy::finite(MabPolicyKind::TiThompson, MabHyper::default(), 200)?;
    let mut acc = 0.0;
    for rep in 0..REPS as u64 {
        let cfg = ExperimentConfig::mab(200, 0.0, 0.0, 0.0).with_seed(5, rep);
        acc += gaussian_loglik_ratio(&run_mab(&cfg, &pol)?, &local)?.exp();
    }
    let mean = acc / REPS as f64;

    // T = 3: every sequence of three-point innovations, both outcomes of the
    // single adaptive draw; compare the terminal expression with a
    // round-by-round recomputation.
    let pts = [-(1.5f64).sqrt(), 0.0, (1.5f64).sqrt()];
    let pol3 = MabPolicy::finite(MabPolicyKind::TiThompson, MabHyper::default(), 3)?;
    let mu = 0.7;
    let cfg3 = ExperimentConfig::mab(3, mu, 0.0, 0.0);
    let mut worst: f64 = 0.0;
    for &e1 in &pts {
        for &e2 in &pts {
            for &e3 in &pts {
                for &u in &[0.0, 1.0 - 1e-12] {
                    let traj = replay_mab(&cfg3, &pol3, &[0.0, 0.0, u], &[e1, e2, e3])?;
                    for mm in [[1.0, 1.0], [0.4, -2.0], [-3.0, 0.5]] {
                        let terminal = gaussian_loglik_ratio(&traj, &LocalParams::mab(mm[0], mm[1]))?;
                        worst = worst.max((terminal - brute_force_llr(&traj.rounds, mu, mm, 3)).abs());
                    }
                }
            }
        }
    }

    // Exact null expectation at T = 3 by quadrature over Gaussian
    // innovations and enumeration of the adaptive arm.
    let gh = gauss_hermite_normal();
    let s3 = 3f64.sqrt();
    let mut exp_lr = 0.0;
    let mut ipw_mass = 0.0;
    for &(z1, w1) in gh {
        for &(z2, w2) in gh {
            let state = MabPolicyState::new([1.0 / 3.0, 1.0 / 3.0], [z1 / s3, z2 / s3]);
            let psi = pol3.probs(&state)?;
            let mut inner = 0.0;
            let mut inner_ipw = 0.0;
            for (k, &p) in psi.iter().enumerate() {
                let e3: f64 = gh.iter().map(|&(z3, w3)| w3 * (m[k] * z3 / s3 - 0.5 * m[k] * m[k] / 3.0).exp()).sum();
                inner += p * e3;
                if k == 1 {
                    inner_ipw += p * (1.0 / p);
                }
            }
            let first = (m[0] * z1 / s3 - m[0] * m[0] / 6.0).exp() * (m[1] * z2 / s3 - m[1] * m[1] / 6.0).exp();
            exp_lr += w1 * w2 * first * inner;
            // forced round of arm 2 has propensity 1/2
            ipw_mass += w1 * w2 * (2.0 + inner_ipw) / 3.0;
        }
    }
    let ok = (mean - 1.0).abs() <= 0.05
        && worst <= 1e-12
        && (exp_lr - 1.0).abs() <= 1e-12
        && (ipw_mass - 1.0).abs() <= 1e-12;
    Ok((
        ok,
        format!(
            "E[exp L] at T=200 = {mean:.4} (1 +/- 0.05); T=3 brute force gap {worst:.1e}, exact E[exp L] - 1 = {:.1e}, E[D_ipw,2] - 1 = {:.1e}",
            exp_lr - 1.0,
            ipw_mass - 1.0
        ),
    ))
}

fn np_dominance() -> Outcome {
    let grid: Vec<f64> = (0..=10).map(|i| 0.5 * i as f64).collect();
    let mut ok = true;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut at3 = Vec::new();
    for kind in [MabPolicyKind::TiThompson, MabPolicyKind::TiTemperedGreedy] {
        let p = plan(kind, StatName::Aw, Hypothesis::OneArm { m1: 0.0 }, limit(), 6).with_alternatives(grid.clone());
        let aw = size_and_power(&p, critical_value(&p)?)?;
        let np = np_power_bound(&p)?;
        for (a, n) in aw.rejection_rates.iter().zip(&np.rejection_rates) {
            worst_gap = worst_gap.max(a.rate - n.rate);
        }
        let i3 = grid.iter().position(|&v| v == 3.0).expect("grid contains 3");
        at3.push((aw.rejection_rates[i3].rate, np.rejection_rates[i3].rate));
    }
    ok &= worst_gap <= 0.01;
    let (th, gr) = (at3[0], at3[1]);
    ok &= th.0 >= gr.0 - 0.01 && th.1 >= gr.1 - 0.01;
    Ok((
        ok,
        format!(
            "max power(AW) - power(NP) = {worst_gap:.4} (<= 0.01); m2=3 AW {:.3} vs {:.3}, NP {:.3} vs {:.3} (Thompson vs greedy)",
            th.0, gr.0, th.1, gr.1
        ),
    ))
}

fn two_sample_ordering() -> Outcome {
    let mut power = Vec::new();
    for stat in [StatName::TsT, StatName::TsIpw, StatName::TsAw] {
        let p = plan(MabPolicyKind::TiThompson, stat, Hypothesis::TwoSample { m: 0.0 }, limit(), 7)
            .with_alternatives(vec![3.0]);
        power.push(size_and_power(&p, critical_value(&p)?)?.rejection_rates[0].rate);
    }
    let ok = power[0] - power[1] > 0.02 && power[1] - power[2] > 0.02;
    Ok((ok, format!("delta=3: ts-t {:.3} > ts-ipw {:.3} > ts-aw {:.3} (gaps > 0.02)", power[0], power[1], power[2])))
}

fn finite_to_limit() -> Outcome {
    let p = plan(MabPolicyKind::TiThompson, StatName::TsT, Hypothesis::TwoSample { m: 0.0 }, limit(), 8);
    let lim = EmpiricalDistribution::new(sample_statistic(&p, limit(), &p.hypothesis, 0.0)?)?;
    let fin =
        EmpiricalDistribution::new(sample_statistic(&p, Generator::Finite { horizon: 200 }, &p.hypothesis, 0.0)?)?;
    let d = ks_distance(&lim, &fin);
    Ok((d < 0.03, format!("KS(finite T=200, limit) for ts-t = {d:.4} (< 0.03)")))
}

fn deterministic_identities() -> Outcome {
    let mut mass: f64 = 0.0;
    let mut ipw: f64 = 0.0;
    let mut parity: f64 = 0.0;
    let mut gram: f64 = 0.0;
    for kind in ti_kinds().into_iter().chain([MabPolicyKind::ClassicalThompson]) {
        let lim = limit_policy(kind);
        for rep in 0..50 {
            let out = simulate_mab_limit(
                &lim,
                &MabLimitModel::new(0.5, -1.0),
                GRID,
                &RngStream::new(9, rep),
                PathRecord::TerminalOnly,
            )?;
            let t = out.terminals;
            mass = mass.max((t.d[0] + t.d[1] - 1.0).abs());
            for k in 0..2 {
                ipw = ipw.max((t.d_w[2][k] - 1.0).abs());
            }
            let horizon = 150;
            let fin = MabPolicy::finite(kind, MabHyper::default(), horizon)?;
            let cfg = ExperimentConfig::mab(horizon, 2.0, 0.5, -1.0).with_seed(9, rep);
            let traj = run_mab(&cfg, &fin)?;
            let Terminals::Mab(ft) = &traj.terminals else { unreachable!() };
            mass = mass.max((ft.d[0] + ft.d[1] - 1.0).abs());
            let s = (horizon as f64).sqrt();
            for (i, &r) in WEIGHT_GRID.iter().enumerate() {
                let mut rw = [0.0; 2];
                let mut dw = [0.0; 2];
                for round in &traj.rounds {
                    let k = round.arm - 1;
                    let w = round.propensity.powf(-r);
                    rw[k] += w * (round.reward - 2.0);
                    dw[k] += w;
                }
                for k in 0..2 {
                    parity =
                        parity.max((rw[k] / s - ft.r_w[i][k]).abs()).max((dw[k] / horizon as f64 - ft.d_w[i][k]).abs());
                }
                let post_hoc = rw[1] / dw[1] - rw[0] / dw[0];
                let inc = evaluate(StatName::TsDf(r), &traj.terminals, &Default::default())?;
                parity = parity.max((post_hoc * s - inc).abs());
            }
        }
    }
    let cpol = CmabPolicy::finite(CmabPolicyKind::TiThompson, CmabHyper::default(), 120)?;
    for rep in 0..20 {
        let cfg = ExperimentConfig::cmab(120, vec![1.0, -0.5], vec![0.2, 0.0], vec![-0.3, 0.4]).with_seed(9, rep);
        let traj = run_cmab(&cfg, &cpol)?;
        let Terminals::Cmab(ct) = &traj.terminals else { unreachable!() };
        gram = gram.max((&ct.s[0] + &ct.s[1] - &ct.gram).abs().max());
        mass = mass.max((traj.counts[0] + traj.counts[1]) as f64 - 120.0);
    }
    let ok = mass <= 1e-12 && ipw <= 1e-10 && gram <= 1e-12 && parity <= 1e-12;
    Ok((
        ok,
        format!("mass {mass:.1e}, limit IPW normalisation {ipw:.1e}, Gram partition {gram:.1e}, incremental vs post-hoc {parity:.1e}"),
    ))
}

fn cmab_aw_wald() -> Outcome {
    let pol = CmabPolicy::limit(CmabPolicyKind::TiThompson, CmabHyper::default(), 200)?;
    let grid = SdeGrid { n_steps: 200 };
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for b in [0.0, 100.0] {
        let mut p =
            McPlan::cmab(pol.clone(), StatName::TsAwWald, vec![b, b], vec![1.0, 0.0], Generator::Limit { grid }, REPS)
                .with_seed(10);
        p.moments = MomentStrategy::Analytic;
        let terms = sample_terminals(&p, p.generator, &p.hypothesis, 0.0)?;
        for g in [vec![1.0, 0.0], vec![0.0, 1.0]] {
            let params = tibandit::stats::StatParams { g: g.clone(), ..Default::default() };
            let vals = terms.iter().map(|t| evaluate(StatName::TsAwWald, t, &params)).collect::<Result<Vec<_>, _>>()?;
            let d = ks_distance_to(&EmpiricalDistribution::new(vals)?, normal_cdf);
            worst = worst.max(d);
            parts.push(format!("b={b} G=({},{}) {d:.4}", g[0], g[1]));
        }
    }
    Ok((worst < 0.02, format!("KS to N(0,1): {} (< 0.02)", parts.join(", "))))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("size table", size_table),
        ("AW null normality", aw_normality),
        ("distribution freeness", distribution_freeness),
        ("translation invariance", translation_invariance),
        ("martingale identity", martingale_identity),
        ("NP dominance and policy ordering", np_dominance),
        ("two-sample power ordering", two_sample_ordering),
        ("finite-to-limit convergence", finite_to_limit),
        ("deterministic identities", deterministic_identities),
        ("contextual AW-Wald normality", cmab_aw_wald),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
