//! Named configurations that pin every setting of a reproduction run.
//!
//! Names:
//! - `table3-<policy>-T<horizon>`: finite-sample sizes of all six tests.
//! - `fig4-<policy>`: one-arm AW power with the Neyman-Pearson envelope.
//! - `fig9-<policy>`: two-sample power curves of the three valid tests.
//!
//! `<policy>` is one of `thompsoninv`, `temperedgreedy`, `tempereducb`,
//! `thompson`; `<horizon>` one of 50, 100, 200, 500.

const POLICIES: [(&str, &str); 4] = [
    ("thompsoninv", "ti-thompson"),
    ("temperedgreedy", "ti-tempered-greedy"),
    ("tempereducb", "ti-tempered-ucb"),
    ("thompson", "thompson"),
];
const HORIZONS: [usize; 4] = [50, 100, 200, 500];

const POLICY_BLOCK: &str = "b = 0.05\nalpha = 1\ndelta = 1\nschedule = canonical\n";
const ALTERNATIVES: &str = "0 0.5 1 1.5 2 2.5 3 3.5 4 4.5 5";

pub fn names() -> Vec<String> {
    let mut out = Vec::new();
    for (short, _) in POLICIES {
        for h in HORIZONS {
            out.push(format!("table3-{short}-T{h}"));
        }
    }
    for fig in ["fig4", "fig9"] {
        for (short, _) in POLICIES {
            out.push(format!("{fig}-{short}"));
        }
    }
    out
}

/// Config text for a preset.
pub fn text(name: &str) -> Option<String> {
    let (fig, rest) = name.split_once('-')?;
    let (policy, horizon) = match rest.split_once("-T") {
        Some((p, h)) => (p, Some(h.parse::<usize>().ok()?)),
        None => (rest, None),
    };
    let kind = POLICIES.iter().find(|(s, _)| *s == policy)?.1;
    let common = format!("[policy]\nkind = {kind}\n{POLICY_BLOCK}");
    match (fig, horizon) {
        ("table3", Some(h)) if HORIZONS.contains(&h) => Some(format!(
            "[experiment]\nmodel = mab\nhorizon = {h}\nmu = 0\ngrid = 100\nseed = {}\n{common}\
             [mc]\nreps = 50000\ngenerator = finite\nstatistics = t aw ipw ts-t ts-aw ts-ipw\n\
             hypothesis = auto\nnuisance = 0\nalpha = 0.05\ncritical = auto\n",
            1000 + h
        )),
        ("fig4", None) => Some(format!(
            "[experiment]\nmodel = mab\ngrid = 100\nseed = 4\n{common}\
             [mc]\nreps = 50000\ngenerator = limit\nstatistics = aw\nhypothesis = one-arm\nnuisance = 0\n\
             alternatives = {ALTERNATIVES}\nalpha = 0.05\ncritical = auto\nnp = true\n"
        )),
        ("fig9", None) => Some(format!(
            "[experiment]\nmodel = mab\ngrid = 100\nseed = 9\n{common}\
             [mc]\nreps = 50000\ngenerator = limit\nstatistics = ts-t ts-ipw ts-aw\nhypothesis = two-sample\n\
             nuisance = 0\nalternatives = {ALTERNATIVES}\nalpha = 0.05\ncritical = auto\nnp = true\n"
        )),
        _ => None,
    }
}
