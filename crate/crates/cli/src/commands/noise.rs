//! Fraction of Mixup pairs whose hard label disagrees with the ground truth.

use mixdyn_core::mixup::LabeledDataset;
use mixdyn_core::noise::{argmax_low, noisy_fraction, GroundTruthConditional};
use mixdyn_core::numerics::RandomStream;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    LinearSoftmax {
        weights: Vec<Vec<f64>>,
    },
    AffineProbability {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    PiecewiseRegion {
        class_count: usize,
        #[serde(default)]
        axis: usize,
        boundaries: Vec<f64>,
        region_labels: Vec<usize>,
    },
    RadialPosterior {
        centers: Vec<Vec<f64>>,
        bandwidth: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// One row per point.
    Points { points: Vec<Vec<f64>> },
    /// `n` draws from `N(0, std² I_dim)`.
    Gaussian {
        n: usize,
        dim: usize,
        #[serde(default = "unit")]
        std: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub family: FamilySpec,
    pub inputs: InputSpec,
    /// Class of each input; defaults to the argmax of the ground truth.
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

pub fn default_lambdas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Field {
            path: what.into(),
            message: "expected a nonempty rectangular array of rows".into(),
        });
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

impl FamilySpec {
    pub fn build(&self) -> CliResult<GroundTruthConditional> {
        Ok(match self {
            FamilySpec::LinearSoftmax { weights } => {
                GroundTruthConditional::linear_softmax(matrix(weights, "family.weights")?)?
            }
            FamilySpec::AffineProbability { weights, bias } => {
                GroundTruthConditional::affine_probability(
                    matrix(weights, "family.weights")?,
                    DVector::from_column_slice(bias),
                )?
            }
            FamilySpec::PiecewiseRegion {
                class_count,
                axis,
                boundaries,
                region_labels,
            } => GroundTruthConditional::piecewise_region(
                *class_count,
                *axis,
                boundaries.clone(),
                region_labels.clone(),
            )?,
            FamilySpec::RadialPosterior { centers, bandwidth } => {
                GroundTruthConditional::radial_posterior(
                    matrix(centers, "family.centers")?,
                    *bandwidth,
                )?
            }
        })
    }
}

impl InputSpec {
    pub fn build(&self, seed: u64) -> CliResult<DMatrix<f64>> {
        match self {
            InputSpec::Points { points } => matrix(points, "inputs.points"),
            InputSpec::Gaussian { n, dim, std } => {
                Ok(RandomStream::new(seed).normal_matrix(*n, *dim, *std))
            }
        }
    }
}

/// The labelled dataset described by `config`.
pub fn dataset(config: &NoiseConfig, f: &GroundTruthConditional) -> CliResult<LabeledDataset> {
    let x = config.inputs.build(config.seed)?;
    let labels = match &config.labels {
        Some(l) => l.clone(),
        None => (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                f.evaluate(&row).map(|p| argmax_low(&p))
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(LabeledDataset::classification(x, labels, f.class_count())?)
}

pub const HEADER: [&str; 5] = [
    "lambda",
    "noisy_fraction",
    "same_pair",
    "cross_pair",
    "intrusion",
];

pub fn run(config: &NoiseConfig, out: &mut OutputDir) -> CliResult<()> {
    let f = config.family.build()?;
    let ds = dataset(config, &f)?;
    let mut rows = Vec::with_capacity(config.lambdas.len());
    for &lambda in &config.lambdas {
        let r = noisy_fraction(&ds, &f, lambda)?;
        rows.push(vec![
            num(lambda),
            num(r.fraction),
            r.cases.same_pair.to_string(),
            r.cases.cross_pair.to_string(),
            r.cases.intrusion.to_string(),
        ]);
    }
    out.write_csv("noise.csv", &HEADER, rows)
}
