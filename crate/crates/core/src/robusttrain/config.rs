use std::fmt;
use std::str::FromStr;

use crate::diffcore::arch::Architecture;
use crate::diffcore::image::Shape;
use crate::diffcore::optim::OptimConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Erm,
    Pgd,
    Mrt,
    Mat,
    Mda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Erm, Algorithm::Pgd, Algorithm::Mrt, Algorithm::Mat, Algorithm::Mda];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Erm => "erm",
            Algorithm::Pgd => "pgd",
            Algorithm::Mrt => "mrt",
            Algorithm::Mat => "mat",
            Algorithm::Mda => "mda",
        }
    }

    /// `k` used when none is given: 10 for MRT/MAT, 3 for MDA.
    pub fn default_k(self) -> usize {
        match self {
            Algorithm::Mda => 3,
            _ => 10,
        }
    }

    pub fn is_model_based(self) -> bool {
        matches!(self, Algorithm::Mrt | Algorithm::Mat | Algorithm::Mda)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}` (erm|pgd|mrt|mat|mda)")))
    }
}

/// Which loss MRT maximizes over its candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    /// One candidate vector for the whole batch, chosen by summed loss.
    Batch,
    /// An independent argmax per example.
    PerExample,
}

/// Ascent direction for MAT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AscentStep {
    Raw,
    Sign,
}

/// How MDA combines its `k` generated losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdaReduction {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            epsilon: 8.0 / 255.0,
            alpha: 0.01,
            steps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Per-coordinate MAT step; `None` means 0.1 × box width.
    pub mat_alpha: Option<f64>,
    pub mat_step: AscentStep,
    pub granularity: Granularity,
    pub mda_reduction: MdaReduction,
    pub pgd: PgdConfig,
    /// Widths `[c1, c2, c3, hidden]` of the reference CNN.
    pub widths: [usize; 4],
    pub classes: usize,
    /// Overrides the reference CNN when set.
    pub arch: Option<Architecture>,
    /// Examples used for the end-of-epoch clean loss / top-1 line.
    pub monitor: usize,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            k: algorithm.default_k(),
            lambda: 1.0,
            epochs: 10,
            batch_size: 64,
            optim: OptimConfig::adadelta(),
            seed: 0,
            mat_alpha: None,
            mat_step: AscentStep::Raw,
            granularity: Granularity::Batch,
            mda_reduction: MdaReduction::Sum,
            pgd: PgdConfig::default(),
            widths: [8, 8, 16, 32],
            classes: 10,
            arch: None,
            monitor: 512,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 && self.algorithm != Algorithm::Mat {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda must be a finite nonnegative number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.mat_alpha.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::config("MAT step size must be positive"));
        }
        if !(self.pgd.epsilon > 0.0) || !(self.pgd.alpha > 0.0) {
            return Err(Error::config("PGD epsilon and alpha must be positive"));
        }
        if self.classes == 0 {
            return Err(Error::config("class count must be positive"));
        }
        Ok(())
    }

    pub fn architecture(&self, input: Shape) -> Result<Architecture> {
        match &self.arch {
            Some(a) if a.input != input => Err(Error::input(format!(
                "architecture expects {} images, data has {input}",
                a.input
            ))),
            Some(a) => Ok(a.clone()),
            None => Architecture::reference_cnn(input, self.widths, self.classes),
        }
    }

    /// `k` as used by the run (MAT accepts 0 steps).
    pub fn effective_k(&self) -> usize {
        self.k
    }
}
