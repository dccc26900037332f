//! Experiment configuration shared by the simulators.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Distribution of the reward noise, always mean zero and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Innovation {
    Gaussian,
    /// Uniform on (-sqrt 3, sqrt 3).
    Uniform,
}

impl Innovation {
    pub fn sample(self, rng: &mut RngStream) -> f64 {
        match self {
            Innovation::Gaussian => rng.standard_normal(),
            Innovation::Uniform => 3f64.sqrt() * (2.0 * rng.uniform() - 1.0),
        }
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Uniform => "uniform",
        })
    }
}

impl FromStr for Innovation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Innovation::Gaussian),
            "uniform" => Ok(Innovation::Uniform),
            _ => Err(Error::InvalidConfig(format!("unknown innovation '{s}'"))),
        }
    }
}

/// How rewards are centred before they enter the running sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Subtract the global mean (or x'beta), which is assumed known.
    Known,
    /// Use raw rewards.
    Raw,
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centering::Known => "known",
            Centering::Raw => "raw",
        })
    }
}

impl FromStr for Centering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(Centering::Known),
            "raw" => Ok(Centering::Raw),
            _ => Err(Error::InvalidConfig(format!("unknown centering '{s}'"))),
        }
    }
}

/// Local parameters per arm: `m_k` for the two-arm model (length 1) or
/// `b_k` in the contextual model (length p).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParams(pub [Vec<f64>; 2]);

impl LocalParams {
    pub fn mab(m1: f64, m2: f64) -> Self {
        Self([vec![m1], vec![m2]])
    }

    pub fn cmab(b1: Vec<f64>, b2: Vec<f64>) -> Self {
        Self([b1, b2])
    }

    pub fn arm(&self, k: usize) -> &[f64] {
        &self.0[k]
    }

    pub fn dim(&self) -> usize {
        self.0[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub context_dim: usize,
    pub local: LocalParams,
    /// `mu` (length 1) or `beta` (length p).
    pub global: Vec<f64>,
    pub innovation: Innovation,
    pub centering: Centering,
    pub seed: u64,
    pub replication: u64,
}

impl ExperimentConfig {
    pub fn mab(horizon: usize, mu: f64, m1: f64, m2: f64) -> Self {
        Self {
            horizon,
            context_dim: 1,
            local: LocalParams::mab(m1, m2),
            global: vec![mu],
            innovation: Innovation::Gaussian,
            centering: Centering::Known,
            seed: 0,
            replication: 0,
        }
    }

    pub fn cmab(horizon: usize, beta: Vec<f64>, b1: Vec<f64>, b2: Vec<f64>) -> Self {
        Self {
            horizon,
            context_dim: beta.len(),
            local: LocalParams::cmab(b1, b2),
            global: beta,
            innovation: Innovation::Gaussian,
            centering: Centering::Known,
            seed: 0,
            replication: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64, replication: u64) -> Self {
        self.seed = seed;
        self.replication = replication;
        self
    }

    pub fn with_innovation(mut self, innovation: Innovation) -> Self {
        self.innovation = innovation;
        self
    }

    pub fn with_centering(mut self, centering: Centering) -> Self {
        self.centering = centering;
        self
    }

    pub fn stream(&self) -> RngStream {
        RngStream::new(self.seed, self.replication)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.context_dim;
        if p == 0 {
            return Err(Error::InvalidConfig("context dimension must be at least 1".into()));
        }
        if self.horizon < 2 * p {
            return Err(Error::InvalidConfig(format!(
                "horizon {} shorter than forced initialisation 2p = {}",
                self.horizon,
                2 * p
            )));
        }
        if self.global.len() != p || self.local.0.iter().any(|b| b.len() != p) {
            return Err(Error::Dimension("parameter length must equal context dimension".into()));
        }
        let params = self.global.iter().chain(self.local.0.iter().flatten());
        if params.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("experiment parameters"));
        }
        Ok(())
    }
}

/// Context law `x = (1, z_2, ..., z_p)` with `z_j` iid standard normal.
/// For `p = 1` this is the constant context `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextDistribution {
    pub dim: usize,
}

impl ContextDistribution {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn sample(&self, rng: &mut RngStream) -> nalgebra::DVector<f64> {
        let mut x = nalgebra::DVector::zeros(self.dim);
        x[0] = 1.0;
        for j in 1..self.dim {
            x[j] = rng.standard_normal();
        }
        x
    }

    /// `E[x x']`, the identity for this law.
    pub fn second_moment(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::identity(self.dim, self.dim)
    }
}
