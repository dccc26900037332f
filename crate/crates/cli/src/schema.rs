//! Configuration schema, parser and typed accessors.
//!
//! Every accepted key is declared in [`KEYS`]; the parser rejects anything
//! else, and the help text and output headers are generated from the same
//! table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    MabSim,
    CmabSim,
    LimitSim,
    NullSample,
    SizeTable,
    PowerCurve,
    KsReport,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::MabSim,
        Command::CmabSim,
        Command::LimitSim,
        Command::NullSample,
        Command::SizeTable,
        Command::PowerCurve,
        Command::KsReport,
    ];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::MabSim => "mab-sim",
            Command::CmabSim => "cmab-sim",
            Command::LimitSim => "limit-sim",
            Command::NullSample => "null-sample",
            Command::SizeTable => "size-table",
            Command::PowerCurve => "power-curve",
            Command::KsReport => "ks-report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const MAB: u8 = 1 << Command::MabSim as u8;
const CMAB: u8 = 1 << Command::CmabSim as u8;
const LIMIT: u8 = 1 << Command::LimitSim as u8;
const NULL: u8 = 1 << Command::NullSample as u8;
const SIZE: u8 = 1 << Command::SizeTable as u8;
const POWER: u8 = 1 << Command::PowerCurve as u8;
const KS: u8 = 1 << Command::KsReport as u8;
const MC: u8 = NULL | SIZE | POWER | KS;
const ALL: u8 = MAB | CMAB | LIMIT | MC;

pub const SECTIONS: [&str; 4] = ["experiment", "policy", "mc", "output"];

pub struct Key {
    pub section: &'static str,
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    scope: u8,
}

impl Key {
    pub fn applies_to(&self, cmd: Command) -> bool {
        self.scope & cmd.bit() != 0
    }
}

const fn key(section: &'static str, name: &'static str, default: &'static str, scope: u8, help: &'static str) -> Key {
    Key { section, name, default, help, scope }
}

pub const KEYS: &[Key] = &[
    key("experiment", "model", "mab", LIMIT | MC, "mab (two-arm) or cmab (linear contextual)"),
    key("experiment", "horizon", "200", MAB | CMAB | MC, "number of rounds T in finite-sample runs"),
    key("experiment", "mu", "0", MAB | MC, "global mean of the two-arm model"),
    key("experiment", "m1", "0", MAB | LIMIT, "local parameter of arm 1"),
    key("experiment", "m2", "0", MAB | LIMIT, "local parameter of arm 2"),
    key("experiment", "beta", "0", CMAB | LIMIT | MC, "global coefficients; their count is the context dimension"),
    key("experiment", "b1", "0", CMAB | LIMIT, "local coefficients of arm 1"),
    key("experiment", "b2", "0", CMAB | LIMIT, "local coefficients of arm 2"),
    key("experiment", "innovation", "gaussian", MAB | CMAB | MC, "reward noise: gaussian or uniform"),
    key("experiment", "centering", "known", MAB | CMAB | MC, "known (subtract the global mean) or raw"),
    key("experiment", "seed", "0", ALL, "master seed"),
    key("experiment", "replication", "0", MAB | CMAB, "replication index within the seed"),
    key("experiment", "grid", "100", LIMIT | MC, "Euler steps on [0, 1] for the limit experiment"),
    key("experiment", "moments", "analytic", LIMIT | MC, "contextual moments: analytic or mc:<contexts per step>"),
    key("experiment", "fisher", "1", LIMIT | MC, "Fisher information of the two-arm limit model"),
    key(
        "policy",
        "kind",
        "ti-thompson",
        ALL,
        "ti-thompson, ti-tempered-greedy, ti-tempered-ucb, thompson (two-arm) or the -lin names",
    ),
    key("policy", "b", "0.05", ALL, "prior scale b"),
    key("policy", "alpha", "1", ALL, "tempering alpha"),
    key("policy", "delta", "1", MAB | LIMIT | MC, "UCB confidence delta"),
    key("policy", "lambda", "1", CMAB | LIMIT | MC, "LinUCB bonus lambda"),
    key(
        "policy",
        "schedule",
        "canonical",
        MAB | LIMIT | MC,
        "finite-horizon hyperparameter map: canonical or fixed-delta",
    ),
    key("mc", "reps", "10000", MC, "Monte Carlo replications"),
    key("mc", "generator", "limit", MC, "finite or limit"),
    key(
        "mc",
        "statistics",
        "aw",
        MC,
        "statistics, space separated: t aw ipw ts-t ts-aw ts-ipw ts-df:<r> ts-wald ts-aw-wald np ts-np freq",
    ),
    key("mc", "hypothesis", "auto", MC, "auto, one-arm, two-sample or contextual"),
    key("mc", "nuisance", "0", MC, "nuisance value (m1, common mean m, or common b); ks-report takes a list"),
    key("mc", "g", "1", MC, "contrast vector for the Wald statistics"),
    key("mc", "alternatives", "0 1 2 3 4 5", POWER, "alternative grid"),
    key("mc", "alpha", "0.05", SIZE | POWER, "significance level"),
    key("mc", "critical", "auto", SIZE | POWER, "auto, simulated, analytic or a fixed number"),
    key("mc", "np", "false", POWER, "append the Neyman-Pearson power envelope (limit generator)"),
    key("mc", "np_alternative", "1", MC, "alternative the np and ts-np statistics are tuned to"),
    key("output", "extended", "false", LIMIT, "add weighted sums and likelihood columns to limit paths"),
];

pub fn lookup(section: &str, name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.section == section && k.name == name)
}

/// Help section listing every key a subcommand reads, with its default.
pub fn help(cmd: Command) -> String {
    let mut out = String::from("Configuration keys (section.key = default):\n");
    for k in KEYS.iter().filter(|k| k.applies_to(cmd)) {
        let full = format!("{}.{}", k.section, k.name);
        out.push_str(&format!("  {full:<24} = {:<14} {}\n", format!("\"{}\"", k.default), k.help));
    }
    out
}

/// Resolved configuration: every schema key mapped to a value.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<(&'static str, &'static str), String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|k| ((k.section, k.name), k.default.to_string())).collect() }
    }
}

impl Settings {
    /// Apply `key = value` lines under `[section]` headings. `#` and `;`
    /// start comment lines.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = || format!("{origin}:{}", i + 1);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = Some(
                    *SECTIONS
                        .iter()
                        .find(|s| **s == name)
                        .ok_or_else(|| CliError::config(format!("{}: unknown section [{name}]", at())))?,
                );
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| CliError::config(format!("{}: expected 'key = value'", at())))?;
            let sec = section.ok_or_else(|| CliError::config(format!("{}: key outside a section", at())))?;
            self.set(sec, k.trim(), v.trim()).map_err(|e| CliError::config(format!("{}: {}", at(), e.message)))?;
        }
        Ok(())
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (path, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects section.key=value, got '{spec}'")))?;
        let (sec, k) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::config(format!("--set expects section.key=value, got '{spec}'")))?;
        self.set(sec, k, v.trim())
    }

    pub fn set(&mut self, section: &str, name: &str, value: &str) -> Result<(), CliError> {
        let k = lookup(section, name).ok_or_else(|| CliError::config(format!("unknown key {section}.{name}")))?;
        self.values.insert((k.section, k.name), value.to_string());
        Ok(())
    }

    pub fn raw(&self, section: &str, name: &str) -> &str {
        self.values
            .iter()
            .find(|((s, n), _)| *s == section && *n == name)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("key {section}.{name} missing from schema"))
    }

    pub fn get<T: FromStr>(&self, section: &str, name: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(section, name);
        v.parse().map_err(|e| CliError::config(format!("invalid value '{v}' for {section}.{name}: {e}")))
    }

    pub fn list<T: FromStr>(&self, section: &str, name: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(section, name)
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::config(format!("invalid entry '{s}' in {section}.{name}: {e}"))))
            .collect()
    }

    pub fn flag(&self, section: &str, name: &str) -> Result<bool, CliError> {
        match self.raw(section, name) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::config(format!("invalid value '{v}' for {section}.{name}: expected true or false"))),
        }
    }

    /// Effective configuration for `cmd` as config-file lines.
    pub fn echo(&self, cmd: Command) -> Vec<String> {
        let mut out = Vec::new();
        for sec in SECTIONS {
            let keys: Vec<&Key> = KEYS.iter().filter(|k| k.section == sec && k.applies_to(cmd)).collect();
            if keys.is_empty() {
                continue;
            }
            out.push(format!("[{sec}]"));
            for k in keys {
                out.push(format!("{} = {}", k.name, self.raw(k.section, k.name)));
            }
        }
        out
    }
}
