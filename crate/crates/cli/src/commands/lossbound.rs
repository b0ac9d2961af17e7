//! The Mixup cross-entropy floor against the loss of the interpolating predictor.

use mixdyn_core::mixup::{
    build_synthetic_sampled, empirical_mixup_loss, mixup_ce_lower_bound_for,
    one_hot_balanced_dataset, MixupConfig,
};
use mixdyn_core::numerics::RandomStream;
use mixdyn_core::MixdynError;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::output::{num, OutputDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossboundConfig {
    pub classes: Vec<usize>,
    /// Sampled Mixup pairs per class count.
    pub pairs: usize,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for LossboundConfig {
    fn default() -> Self {
        Self {
            classes: vec![2, 10],
            pairs: 100_000,
            per_class: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossboundRow {
    pub classes: usize,
    pub bound: f64,
    pub empirical: f64,
}

impl LossboundRow {
    pub fn abs_gap(&self) -> f64 {
        (self.empirical - self.bound).abs()
    }
}

/// Inputs are one-hot class codes, so the identity map reproduces every
/// Mixup soft label and attains the floor in expectation.
pub fn evaluate(config: &LossboundConfig) -> CliResult<Vec<LossboundRow>> {
    if config.pairs == 0 {
        return Err(MixdynError::InvalidParameter("pairs must be positive".into()).into());
    }
    let mixup = MixupConfig::beta(1.0)?;
    config
        .classes
        .iter()
        .map(|&c| {
            let ds = one_hot_balanced_dataset(c, config.per_class)?;
            let mut rng = RandomStream::substream(config.seed, c as u64);
            let synth = build_synthetic_sampled(&ds, &mixup, config.pairs, &mut rng)?;
            Ok(LossboundRow {
                classes: c,
                bound: mixup_ce_lower_bound_for(&ds)?,
                empirical: empirical_mixup_loss(|x| x.to_vec(), &synth)?,
            })
        })
        .collect()
}

pub const HEADER: [&str; 4] = [
    "C",
    "bound",
    "empirical_loss_of_interpolating_predictor",
    "abs_gap",
];

pub fn run(config: &LossboundConfig, out: &mut OutputDir) -> CliResult<()> {
    let rows = evaluate(config)?.into_iter().map(|r| {
        vec![
            r.classes.to_string(),
            num(r.bound),
            num(r.empirical),
            num(r.abs_gap()),
        ]
    });
    out.write_csv("lossbound.csv", &HEADER, rows)
}
