//! Label noise created by Mixup: the Mixup-induced conditional, total
//! variation against the ground truth, hard-label disagreement and its
//! lower bounds, and the regression noise `Z = Ỹ - Ỹ*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MixdynError, Result};
use crate::mixup::{check_lambda, mix_vectors, LabeledDataset, Labels};

/// Probabilities closer than this are treated as tied by [`argmax_low`].
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Ground-truth conditional `f(x) = P(Y | X = x)` over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthConditional {
    /// `softmax(W x)` with `W` of shape `C x d0`.
    LinearSoftmax { weights: DMatrix<f64> },
    /// `A x + b`, used where `f` must be exactly linear. Columns of `A` sum to
    /// zero and `b` sums to one; evaluation fails outside the region where
    /// every output is nonnegative.
    AffineProbability {
        weights: DMatrix<f64>,
        bias: DVector<f64>,
    },
    /// One-hot labels from thresholds on a single input coordinate. Region
    /// `r` is `[boundaries[r-1], boundaries[r])`; a point on a boundary
    /// belongs to the region above it.
    PiecewiseRegion {
        class_count: usize,
        axis: usize,
        boundaries: Vec<f64>,
        region_labels: Vec<usize>,
    },
    /// `softmax(-|x - c_j|^2 / (2 h^2))` over class centres `c_j` (rows).
    RadialPosterior {
        centers: DMatrix<f64>,
        bandwidth: f64,
    },
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl GroundTruthConditional {
    pub fn linear_softmax(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 {
            return Err(MixdynError::InvalidParameter(
                "need at least one class".into(),
            ));
        }
        Ok(Self::LinearSoftmax { weights })
    }

    pub fn affine_probability(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(MixdynError::DimensionMismatch {
                expected: weights.nrows(),
                found: bias.len(),
            });
        }
        if (bias.sum() - 1.0).abs() > 1e-12 {
            return Err(MixdynError::InvalidParameter("bias must sum to one".into()));
        }
        for col in weights.column_iter() {
            if col.sum().abs() > 1e-12 {
                return Err(MixdynError::InvalidParameter(
                    "weight columns must sum to zero".into(),
                ));
            }
        }
        Ok(Self::AffineProbability { weights, bias })
    }

    pub fn piecewise_region(
        class_count: usize,
        axis: usize,
        boundaries: Vec<f64>,
        region_labels: Vec<usize>,
    ) -> Result<Self> {
        if region_labels.len() != boundaries.len() + 1 {
            return Err(MixdynError::DimensionMismatch {
                expected: boundaries.len() + 1,
                found: region_labels.len(),
            });
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MixdynError::InvalidParameter(
                "boundaries must be strictly increasing".into(),
            ));
        }
        if region_labels.iter().any(|&l| l >= class_count) {
            return Err(MixdynError::InvalidParameter(
                "region label out of class range".into(),
            ));
        }
        Ok(Self::PiecewiseRegion {
            class_count,
            axis,
            boundaries,
            region_labels,
        })
    }

    pub fn radial_posterior(centers: DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(MixdynError::InvalidParameter(
                "bandwidth must be positive".into(),
            ));
        }
        if centers.nrows() == 0 {
            return Err(MixdynError::InvalidParameter(
                "need at least one class".into(),
            ));
        }
        Ok(Self::RadialPosterior { centers, bandwidth })
    }

    pub fn class_count(&self) -> usize {
        match self {
            Self::LinearSoftmax { weights } => weights.nrows(),
            Self::AffineProbability { weights, .. } => weights.nrows(),
            Self::PiecewiseRegion { class_count, .. } => *class_count,
            Self::RadialPosterior { centers, .. } => centers.nrows(),
        }
    }

    fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
        if x.len() != expected {
            return Err(MixdynError::DimensionMismatch {
                expected,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::LinearSoftmax { weights } => {
                Self::check_dim(weights.ncols(), x)?;
                let logits = weights * DVector::from_column_slice(x);
                Ok(softmax(logits.as_slice()))
            }
            Self::AffineProbability { weights, bias } => {
                Self::check_dim(weights.ncols(), x)?;
                let p = weights * DVector::from_column_slice(x) + bias;
                if p.iter().any(|&v| v < -TIE_TOLERANCE) {
                    return Err(MixdynError::InvalidParameter(
                        "affine map leaves the probability simplex at this input".into(),
                    ));
                }
                Ok(p.iter().map(|v| v.max(0.0)).collect())
            }
            Self::PiecewiseRegion {
                class_count,
                axis,
                boundaries,
                region_labels,
            } => {
                if *axis >= x.len() {
                    return Err(MixdynError::DimensionMismatch {
                        expected: axis + 1,
                        found: x.len(),
                    });
                }
                let region = boundaries.iter().filter(|&&b| b <= x[*axis]).count();
                let mut p = vec![0.0; *class_count];
                p[region_labels[region]] = 1.0;
                Ok(p)
            }
            Self::RadialPosterior { centers, bandwidth } => {
                Self::check_dim(centers.ncols(), x)?;
                let logits: Vec<f64> = centers
                    .row_iter()
                    .map(|c| {
                        let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                        -d2 / (2.0 * bandwidth * bandwidth)
                    })
                    .collect();
                Ok(softmax(&logits))
            }
        }
    }
}

/// Lowest index among the maximal entries.
pub fn argmax_low(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] + TIE_TOLERANCE {
            best = j;
        }
    }
    best
}

/// `λ f(x) + (1 - λ) f(x2)`.
pub fn mixup_conditional(
    f: &GroundTruthConditional,
    x: &[f64],
    x2: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    mix_vectors(&f.evaluate(x)?, &f.evaluate(x2)?, lambda)
}

/// Half the L1 distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(MixdynError::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Which endpoint receives which coefficient in the sup-term of the bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientOrder {
    /// `(1 - λ) f(x) + λ f(x2)`.
    Swapped,
    /// `λ f(x) + (1 - λ) f(x2)`, consistent with the Mixup conditional.
    #[default]
    Matched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCase {
    /// Both parents and the mixed point share one class; never noisy.
    SamePair,
    /// The true class is one of two distinct parent classes.
    CrossPair,
    /// The true class is neither parent's class (manifold intrusion).
    Intrusion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub tv: f64,
    pub sup_bound: f64,
    pub mixup_hard_label: usize,
    pub truth_hard_label: usize,
    /// Case of the pair, taking each parent's hard label as its class.
    pub case: PairCase,
}

impl NoiseReport {
    pub fn is_noisy(&self) -> bool {
        self.mixup_hard_label != self.truth_hard_label
    }
}

pub fn noise_lower_bound(
    f: &GroundTruthConditional,
    x: &[f64],
    x2: &[f64],
    lambda: f64,
    order: CoefficientOrder,
) -> Result<NoiseReport> {
    check_lambda(lambda)?;
    let fx = f.evaluate(x)?;
    let fx2 = f.evaluate(x2)?;
    let x_mix = mix_vectors(x, x2, lambda)?;
    let truth = f.evaluate(&x_mix)?;
    let mixed = mix_vectors(&fx, &fx2, lambda)?;
    let tv = total_variation(&mixed, &truth)?;
    let (a, b) = match order {
        CoefficientOrder::Swapped => (1.0 - lambda, lambda),
        CoefficientOrder::Matched => (lambda, 1.0 - lambda),
    };
    let sup = truth
        .iter()
        .zip(fx.iter().zip(&fx2))
        .map(|(t, (p, q))| (t - (a * p + b * q)).abs())
        .fold(0.0f64, f64::max);
    let truth_hard = argmax_low(&truth);
    Ok(NoiseReport {
        tv,
        sup_bound: 0.5 * sup,
        mixup_hard_label: argmax_low(&mixed),
        truth_hard_label: truth_hard,
        case: classify_case(argmax_low(&fx), argmax_low(&fx2), truth_hard),
    })
}

/// `(Ỹ*_h, Ỹ_h)`: hard labels from the ground truth at the mixed input and
/// from the Mixup conditional. Ties go to the lowest class index.
pub fn hard_labels(
    f: &GroundTruthConditional,
    x: &[f64],
    x2: &[f64],
    lambda: f64,
) -> Result<(usize, usize)> {
    let mixed = mixup_conditional(f, x, x2, lambda)?;
    let truth = f.evaluate(&mix_vectors(x, x2, lambda)?)?;
    Ok((argmax_low(&truth), argmax_low(&mixed)))
}

pub fn classify_case(y: usize, y2: usize, truth_hard: usize) -> PairCase {
    if truth_hard != y && truth_hard != y2 {
        PairCase::Intrusion
    } else if y != y2 {
        PairCase::CrossPair
    } else {
        PairCase::SamePair
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub same_pair: usize,
    pub cross_pair: usize,
    pub intrusion: usize,
}

impl CaseCounts {
    pub fn total(&self) -> usize {
        self.same_pair + self.cross_pair + self.intrusion
    }

    fn add(&mut self, case: PairCase) {
        match case {
            PairCase::SamePair => self.same_pair += 1,
            PairCase::CrossPair => self.cross_pair += 1,
            PairCase::Intrusion => self.intrusion += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyFraction {
    pub fraction: f64,
    pub noisy: usize,
    pub cases: CaseCounts,
}

/// Fraction of the `n^2` ordered pairs whose Mixup hard label disagrees
/// with the ground-truth hard label at the mixed input.
pub fn noisy_fraction(
    dataset: &LabeledDataset,
    f: &GroundTruthConditional,
    lambda: f64,
) -> Result<NoisyFraction> {
    check_lambda(lambda)?;
    let Labels::Classes { tokens, .. } = dataset.labels() else {
        return Err(MixdynError::InvalidParameter(
            "classification labels required".into(),
        ));
    };
    let n = dataset.len();
    let points: Vec<Vec<f64>> = (0..n).map(|i| dataset.point(i)).collect();
    let conditionals = points
        .iter()
        .map(|p| f.evaluate(p))
        .collect::<Result<Vec<_>>>()?;
    for (i, (p, &label)) in conditionals.iter().zip(tokens).enumerate() {
        let truth = argmax_low(p);
        if truth != label {
            return Err(MixdynError::LabelMismatch {
                index: i,
                label,
                truth,
            });
        }
    }
    let mut noisy = 0usize;
    let mut cases = CaseCounts::default();
    for i in 0..n {
        for j in 0..n {
            let x_mix = mix_vectors(&points[i], &points[j], lambda)?;
            let truth = argmax_low(&f.evaluate(&x_mix)?);
            let mixed = mix_vectors(&conditionals[i], &conditionals[j], lambda)?;
            if argmax_low(&mixed) != truth {
                noisy += 1;
            }
            cases.add(classify_case(tokens[i], tokens[j], truth));
        }
    }
    Ok(NoisyFraction {
        fraction: noisy as f64 / (n * n) as f64,
        noisy,
        cases,
    })
}

/// `Z = λ f(x) + (1 - λ) f(x2) - f(λ x + (1 - λ) x2)`.
pub fn regression_noise<F>(f: F, x: &[f64], x2: &[f64], lambda: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_lambda(lambda)?;
    let x_mix = mix_vectors(x, x2, lambda)?;
    Ok(lambda * f(x) + (1.0 - lambda) * f(x2) - f(&x_mix))
}

/// `(ρ/2) λ (1 - λ) |x - x2|^2`, the floor on `Z` for ρ-strongly convex `f`.
pub fn strong_convexity_noise_bound(rho: f64, x: &[f64], x2: &[f64], lambda: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(MixdynError::DimensionMismatch {
            expected: x.len(),
            found: x2.len(),
        });
    }
    let dist2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(0.5 * rho * lambda * (1.0 - lambda) * dist2)
}
