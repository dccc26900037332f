use std::fmt;
use std::io;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<tibandit::Error> for CliError {
    fn from(e: tibandit::Error) -> Self {
        use tibandit::Error as E;
        let code = match e {
            E::InvalidConfig(_)
            | E::InvalidHyperparameter(_)
            | E::UnsupportedWeight(_)
            | E::Dimension(_)
            | E::PolicyMode(_)
            | E::OracleRequiresLimit
            | E::LikelihoodRequiresGaussian => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self { code: EXIT_NUMERIC, message: e.to_string() }
    }
}
