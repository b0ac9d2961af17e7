//! Empirical feature spectra against the Marchenko-Pastur law.

use mixdyn_core::numerics::RandomStream;
use mixdyn_core::spectral::{mixup_spectrum_comparison, SpectrumReport, SpectrumSettings};
use mixdyn_core::MixdynError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::output::{num, OutputDir};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSource {
    /// Mixup features of `n` points (`n²` columns) plus an i.i.d. control.
    Mixup {
        n: usize,
        d0: usize,
        d: usize,
        lambda: f64,
    },
    /// An i.i.d. `N(0, 1)` matrix of shape `d x m`.
    Gaussian { d: usize, m: usize },
}

impl Default for SpectrumSource {
    fn default() -> Self {
        SpectrumSource::Mixup {
            n: 30,
            d0: 10,
            d: 90,
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub source: SpectrumSource,
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    pub repeats: usize,
    pub bins: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            source: SpectrumSource::default(),
            seed: 0,
            repeats: 1,
            bins: 40,
        }
    }
}

/// Gaussian matrices use this stream of the run seed.
pub const GAUSSIAN_STREAM: u64 = 7;

/// `(seed, kind, report)` for every matrix the config describes.
pub fn reports(config: &SpectrumConfig) -> CliResult<Vec<(u64, &'static str, SpectrumReport)>> {
    if config.repeats == 0 || config.bins == 0 {
        return Err(
            MixdynError::InvalidParameter("repeats and bins must be positive".into()).into(),
        );
    }
    let seeds: Vec<u64> = (0..config.repeats as u64)
        .map(|k| config.seed + k)
        .collect();
    let per_seed: Vec<Vec<(u64, &'static str, SpectrumReport)>> = seeds
        .par_iter()
        .map(|&seed| match config.source {
            SpectrumSource::Mixup { n, d0, d, lambda } => {
                let settings = SpectrumSettings {
                    n,
                    d0,
                    d,
                    lambda,
                    bins: config.bins,
                };
                let c = mixup_spectrum_comparison(&settings, seed)?;
                Ok(vec![(seed, "mixup", c.mixup), (seed, "control", c.control)])
            }
            SpectrumSource::Gaussian { d, m } => {
                if d == 0 || m == 0 {
                    return Err(MixdynError::InvalidParameter(
                        "d and m must be positive".into(),
                    ));
                }
                let phi = RandomStream::substream(seed, GAUSSIAN_STREAM).normal_matrix(d, m, 1.0);
                Ok(vec![(
                    seed,
                    "gaussian",
                    SpectrumReport::from_features(&phi, config.bins)?,
                )])
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub const EIGEN_HEADER: [&str; 4] = ["seed", "kind", "index", "eigenvalue"];
pub const KS_HEADER: [&str; 7] = [
    "seed",
    "kind",
    "gamma",
    "ks_distance",
    "nonzero_count",
    "min_eigenvalue",
    "max_eigenvalue",
];
pub const HISTOGRAM_HEADER: [&str; 6] = ["seed", "kind", "bin", "lo", "hi", "count"];

pub fn run(config: &SpectrumConfig, out: &mut OutputDir) -> CliResult<()> {
    let reports = reports(config)?;
    let mut eig_rows = Vec::new();
    let mut ks_rows = Vec::new();
    let mut hist_rows = Vec::new();
    for (seed, kind, r) in &reports {
        for (i, v) in r.eigenvalues.iter().enumerate() {
            eig_rows.push(vec![
                seed.to_string(),
                kind.to_string(),
                i.to_string(),
                num(*v),
            ]);
        }
        ks_rows.push(vec![
            seed.to_string(),
            kind.to_string(),
            num(r.gamma),
            num(r.ks_distance),
            r.nonzero_count().to_string(),
            num(r.eigenvalues[0]),
            num(r.eigenvalues[r.eigenvalues.len() - 1]),
        ]);
        let h = &r.histogram;
        for (b, count) in h.counts.iter().enumerate() {
            hist_rows.push(vec![
                seed.to_string(),
                kind.to_string(),
                b.to_string(),
                num(h.edges[b]),
                num(h.edges[b + 1]),
                count.to_string(),
            ]);
        }
    }
    out.write_csv("spectrum.csv", &EIGEN_HEADER, eig_rows)?;
    out.write_csv("ks.csv", &KS_HEADER, ks_rows)?;
    out.write_csv("histogram.csv", &HISTOGRAM_HEADER, hist_rows)
}
