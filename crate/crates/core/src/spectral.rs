//! Marchenko-Pastur law and empirical spectra of `ΦΦᵀ/m`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{feature_matrix, RandomFeatureModel};
use crate::error::{MixdynError, Result};
use crate::mixup::{all_pairs, check_lambda, mix_scalar};
use crate::numerics::{sym_eig, GaussLegendre, RandomStream};

/// Eigenvalues below this (in absolute value) count as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-10;

const CDF_PANELS: usize = 8;
const QUANTILE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// `γ± = (1 ± √γ)²`.
    #[default]
    Standard,
    /// `γ± = (1 ± γ)²`; does not integrate to one.
    LinearGamma,
}

/// Marchenko-Pastur law with aspect ratio `γ = d/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub gamma: f64,
    #[serde(default)]
    pub edge_mode: EdgeMode,
}

impl MpLaw {
    pub fn new(gamma: f64, edge_mode: EdgeMode) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(MixdynError::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma, edge_mode })
    }

    pub fn standard(gamma: f64) -> Result<Self> {
        Self::new(gamma, EdgeMode::Standard)
    }

    /// Support `[γ₋, γ₊]`.
    pub fn edges(&self) -> (f64, f64) {
        let r = match self.edge_mode {
            EdgeMode::Standard => self.gamma.sqrt(),
            EdgeMode::LinearGamma => self.gamma,
        };
        ((1.0 - r).powi(2), (1.0 + r).powi(2))
    }

    pub fn density(&self, mu: f64) -> f64 {
        let (lo, hi) = self.edges();
        if !(mu > lo && mu < hi) || mu <= 0.0 {
            return 0.0;
        }
        ((hi - mu) * (mu - lo)).sqrt() / (2.0 * std::f64::consts::PI * mu * self.gamma)
    }

    fn check_cdf_supported(&self) -> Result<()> {
        if self.edge_mode != EdgeMode::Standard {
            return Err(MixdynError::UnsupportedLaw(
                "edges (1 ± γ)² do not define a probability law".into(),
            ));
        }
        if self.gamma > 1.0 {
            return Err(MixdynError::UnsupportedLaw(format!(
                "gamma = {} > 1 puts an atom at zero",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Density mass on `[γ₋, x]`, computed with `μ = mid - half·cos φ`,
    /// which turns the square-root edges into a smooth integrand.
    fn mass_up_to(&self, x: f64) -> f64 {
        let (lo, hi) = self.edges();
        if x <= lo {
            return 0.0;
        }
        let x = x.min(hi);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let phi_x = ((mid - x) / half).clamp(-1.0, 1.0).acos();
        if phi_x <= 0.0 {
            return 0.0;
        }
        let coef = half * half / (2.0 * std::f64::consts::PI * self.gamma);
        let rule =
            GaussLegendre::new(crate::numerics::DEFAULT_QUADRATURE_NODES).expect("valid order");
        rule.integrate_composite(
            |phi| {
                let s = phi.sin();
                let mu = mid - half * phi.cos();
                if mu <= 0.0 {
                    // Only reachable at φ = 0 when γ₋ = 0; the integrand tends to 2 there.
                    return 0.0;
                }
                coef * s * s / mu
            },
            0.0,
            phi_x,
            CDF_PANELS,
        )
        .expect("interval is nonempty")
    }

    /// Integral of the density over its support.
    pub fn total_mass(&self) -> f64 {
        self.mass_up_to(self.edges().1)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_cdf_supported()?;
        if x >= self.edges().1 {
            return Ok(1.0);
        }
        Ok(self.mass_up_to(x).clamp(0.0, 1.0))
    }

    /// Inverse CDF by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.check_cdf_supported()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(MixdynError::InvalidParameter(format!(
                "probability out of range: {p}"
            )));
        }
        let (mut a, mut b) = self.edges();
        while b - a > QUANTILE_TOLERANCE * b {
            let mid = 0.5 * (a + b);
            if self.mass_up_to(mid) < p {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `k` draws by inverse CDF.
    pub fn sample(&self, k: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
        (0..k).map(|_| self.quantile(rng.uniform())).collect()
    }
}

pub fn mp_density(mu: f64, law: &MpLaw) -> f64 {
    law.density(mu)
}

/// Eigenvalues of `ΦΦᵀ/m`, ascending.
pub fn empirical_spectrum(phi: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = phi.ncols();
    if m == 0 {
        return Err(MixdynError::EmptyDataset);
    }
    let gram = phi * phi.transpose() / m as f64;
    let gram = (&gram + gram.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym_eig(&gram)?.eigenvalues.iter().copied().collect();
    eigs.reverse();
    Ok(eigs)
}

/// `max_i |i/k - F(x_(i))|` over the sorted sample.
pub fn ks_distance(eigenvalues: &[f64], law: &MpLaw) -> Result<f64> {
    law.check_cdf_supported()?;
    if eigenvalues.is_empty() {
        return Err(MixdynError::EmptyDataset);
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let gap = ((i + 1) as f64 / k - law.cdf(x)?).abs();
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; values outside are clamped into the
    /// end bins.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(MixdynError::InvalidParameter(format!(
                "histogram needs bins >= 1 and lo < hi, got {bins} bins on [{lo}, {hi}]"
            )));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self { edges, counts })
    }

    /// Bins spanning the values, widened slightly so no value sits on the
    /// upper edge; a degenerate range gets unit width.
    pub fn spanning(values: &[f64], bins: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Self::new(values, bins, 0.0, 1.0);
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Self::new(values, bins, lo - 0.5, lo + 0.5);
        }
        let pad = 1e-9 * (hi - lo);
        Self::new(values, bins, lo, hi + pad)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub gamma: f64,
    pub ks_distance: f64,
    pub histogram: Histogram,
}

impl SpectrumReport {
    pub fn from_features(phi: &DMatrix<f64>, bins: usize) -> Result<Self> {
        let eigenvalues = empirical_spectrum(phi)?;
        let gamma = phi.nrows() as f64 / phi.ncols() as f64;
        let law = MpLaw::standard(gamma)?;
        let ks_distance = ks_distance(&eigenvalues, &law)?;
        let histogram = Histogram::spanning(&eigenvalues, bins)?;
        Ok(Self {
            eigenvalues,
            gamma,
            ks_distance,
            histogram,
        })
    }

    pub fn nonzero_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|v| v.abs() > ZERO_EIGENVALUE)
            .count()
    }
}

/// Mixup spectrum against an i.i.d. Gaussian control of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumComparison {
    pub seed: u64,
    pub mixup: SpectrumReport,
    pub control: SpectrumReport,
}

impl SpectrumComparison {
    /// Mixup KS minus control KS.
    pub fn gap(&self) -> f64 {
        self.mixup.ks_distance - self.control.ks_distance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSettings {
    pub n: usize,
    pub d0: usize,
    pub d: usize,
    pub lambda: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    40
}

/// `tanh(W x̃)` for all `n²` ordered pairs of the rows of `inputs` mixed
/// with `lambda`, `d x n²`, column `i·n + j` for the pair `(i, j)`.
pub fn mixup_feature_matrix(
    model: &RandomFeatureModel,
    inputs: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let n = inputs.nrows();
    let d0 = inputs.ncols();
    let pairs = all_pairs(n);
    let mut mixed = DMatrix::zeros(pairs.len(), d0);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        for c in 0..d0 {
            mixed[(k, c)] = mix_scalar(inputs[(i, c)], inputs[(j, c)], lambda);
        }
    }
    feature_matrix(model, &mixed)
}

/// Scales `phi` so its entries have unit mean square.
pub fn rms_standardize(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let rms = (phi.norm_squared() / phi.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        phi / rms
    } else {
        phi.clone()
    }
}

pub mod streams {
    pub const INPUTS: u64 = 0;
    pub const WEIGHTS: u64 = 1;
    pub const CONTROL: u64 = 2;
}

/// One seeded comparison: RMS-standardised Mixup features of `n` Gaussian
/// inputs (student weights `N(0, 1/d0)`) against i.i.d. `N(0, 1)` entries of
/// the same `d x n²` shape, both scored against the standard law with
/// `γ = d/n²`.
pub fn mixup_spectrum_comparison(
    settings: &SpectrumSettings,
    seed: u64,
) -> Result<SpectrumComparison> {
    let SpectrumSettings {
        n,
        d0,
        d,
        lambda,
        bins,
    } = *settings;
    if n == 0 || d0 == 0 || d == 0 {
        return Err(MixdynError::InvalidParameter(
            "n, d0 and d must be positive".into(),
        ));
    }
    let m = n * n;
    if m <= d {
        return Err(MixdynError::Underdetermined { m, d });
    }
    let inputs = RandomStream::substream(seed, streams::INPUTS).normal_matrix(n, d0, 1.0);
    let weights = RandomStream::substream(seed, streams::WEIGHTS).normal_matrix(
        d,
        d0,
        (1.0 / d0 as f64).sqrt(),
    );
    let model = RandomFeatureModel::zero_init(weights);
    let phi = rms_standardize(&mixup_feature_matrix(&model, &inputs, lambda)?);
    let control = RandomStream::substream(seed, streams::CONTROL).normal_matrix(d, m, 1.0);
    Ok(SpectrumComparison {
        seed,
        mixup: SpectrumReport::from_features(&phi, bins)?,
        control: SpectrumReport::from_features(&control, bins)?,
    })
}

pub fn mixup_spectrum_experiment(
    settings: &SpectrumSettings,
    seeds: &[u64],
) -> Result<Vec<SpectrumComparison>> {
    seeds
        .par_iter()
        .map(|&s| mixup_spectrum_comparison(settings, s))
        .collect()
}
