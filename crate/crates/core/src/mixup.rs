//! Mixup synthetic datasets, interpolation coefficients and the
//! cross-entropy Mixup loss with its lower bound for balanced data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MixdynError, Result};
use crate::numerics::{GaussLegendre, RandomStream, DEFAULT_QUADRATURE_NODES};

/// Row sums of distributions must be within this of one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes {
        tokens: Vec<usize>,
        class_count: usize,
    },
    Targets(Vec<f64>),
}

/// Training set `S = {(x_i, y_i)}`; features are stored one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Labels,
}

impl LabeledDataset {
    pub fn classification(
        features: DMatrix<f64>,
        tokens: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(MixdynError::EmptyDataset);
        }
        if tokens.len() != features.nrows() {
            return Err(MixdynError::DimensionMismatch {
                expected: features.nrows(),
                found: tokens.len(),
            });
        }
        if class_count == 0 {
            return Err(MixdynError::InvalidParameter(
                "class_count must be >= 1".into(),
            ));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= class_count) {
            return Err(MixdynError::InvalidParameter(format!(
                "class token {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels: Labels::Classes {
                tokens,
                class_count,
            },
        })
    }

    pub fn regression(features: DMatrix<f64>, targets: Vec<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(MixdynError::EmptyDataset);
        }
        if targets.len() != features.nrows() {
            return Err(MixdynError::DimensionMismatch {
                expected: features.nrows(),
                found: targets.len(),
            });
        }
        Ok(Self {
            features,
            labels: Labels::Targets(targets),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn class_count(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { class_count, .. } => Some(*class_count),
            Labels::Targets(_) => None,
        }
    }

    /// Label of sample `i` as a distribution (one-hot) or a one-element target.
    pub fn label_vector(&self, i: usize) -> Vec<f64> {
        match &self.labels {
            Labels::Classes {
                tokens,
                class_count,
            } => one_hot(tokens[i], *class_count),
            Labels::Targets(t) => vec![t[i]],
        }
    }

    /// Equal per-class counts. Regression sets are never balanced.
    pub fn is_balanced(&self) -> bool {
        match &self.labels {
            Labels::Classes {
                tokens,
                class_count,
            } => {
                let mut counts = vec![0usize; *class_count];
                for &t in tokens {
                    counts[t] += 1;
                }
                counts.iter().all(|&c| c == counts[0])
            }
            Labels::Targets(_) => false,
        }
    }
}

pub fn one_hot(class: usize, class_count: usize) -> Vec<f64> {
    let mut v = vec![0.0; class_count];
    v[class] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed(f64),
    BetaPerEpoch,
    Erm,
}

/// `alpha = 0` is the ERM sentinel: every draw returns `lambda = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
}

impl MixupConfig {
    pub fn fixed(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            alpha: 1.0,
            lambda_mode: LambdaMode::Fixed(lambda),
        })
    }

    pub fn beta(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(MixdynError::InvalidParameter(format!(
                "alpha must be a nonnegative finite number, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            lambda_mode: LambdaMode::BetaPerEpoch,
        })
    }

    pub fn erm() -> Self {
        Self {
            alpha: 0.0,
            lambda_mode: LambdaMode::Erm,
        }
    }

    pub fn is_erm(&self) -> bool {
        match self.lambda_mode {
            LambdaMode::Erm => true,
            LambdaMode::Fixed(l) => l == 1.0,
            LambdaMode::BetaPerEpoch => self.alpha == 0.0,
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(MixdynError::InvalidParameter(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

pub fn sample_lambda(config: &MixupConfig, rng: &mut RandomStream) -> f64 {
    match config.lambda_mode {
        LambdaMode::Erm => 1.0,
        LambdaMode::Fixed(l) => l,
        LambdaMode::BetaPerEpoch => {
            if config.alpha == 0.0 {
                1.0
            } else {
                rng.beta(config.alpha, config.alpha)
            }
        }
    }
}

/// `lambda * a + (1 - lambda) * b`, exact when `a == b`.
#[inline]
pub fn mix_scalar(a: f64, b: f64, lambda: f64) -> f64 {
    if a == b {
        a
    } else {
        lambda * a + (1.0 - lambda) * b
    }
}

/// Elementwise [`mix_scalar`].
pub fn mix_vectors(x: &[f64], x2: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.len() != x2.len() {
        return Err(MixdynError::DimensionMismatch {
            expected: x.len(),
            found: x2.len(),
        });
    }
    Ok(x.iter()
        .zip(x2)
        .map(|(&a, &b)| mix_scalar(a, b, lambda))
        .collect())
}

/// Mixes two examples. Scalar regression labels are passed as one-element slices.
pub fn mix_pair(
    x: &[f64],
    x2: &[f64],
    y: &[f64],
    y2: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lambda(lambda)?;
    Ok((mix_vectors(x, x2, lambda)?, mix_vectors(y, y2, lambda)?))
}

/// All ordered pairs `(i, j)` including self-pairs, row-major.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClassificationSet {
    /// `m x d0`, one synthetic input per row.
    pub features: DMatrix<f64>,
    /// `m x C`, row-stochastic with at most two nonzero entries per row.
    pub soft_labels: DMatrix<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub lambdas: Vec<f64>,
}

impl SyntheticClassificationSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn soft_label(&self, k: usize) -> Vec<f64> {
        self.soft_labels.row(k).iter().copied().collect()
    }

    pub fn input(&self, k: usize) -> Vec<f64> {
        self.features.row(k).iter().copied().collect()
    }
}

fn build_from_pairs(
    dataset: &LabeledDataset,
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
) -> Result<SyntheticClassificationSet> {
    let class_count = dataset
        .class_count()
        .ok_or_else(|| MixdynError::InvalidParameter("classification labels required".into()))?;
    let d0 = dataset.input_dim();
    let m = pairs.len();
    let x = dataset.features();
    let mut features = DMatrix::zeros(m, d0);
    let mut soft = DMatrix::zeros(m, class_count);
    let Labels::Classes { tokens, .. } = dataset.labels() else {
        unreachable!("class_count implies class labels")
    };
    for (k, (&(i, j), &lam)) in pairs.iter().zip(&lambdas).enumerate() {
        check_lambda(lam)?;
        for c in 0..d0 {
            features[(k, c)] = mix_scalar(x[(i, c)], x[(j, c)], lam);
        }
        if tokens[i] == tokens[j] {
            soft[(k, tokens[i])] = 1.0;
        } else {
            soft[(k, tokens[i])] = lam;
            soft[(k, tokens[j])] = 1.0 - lam;
        }
    }
    Ok(SyntheticClassificationSet {
        features,
        soft_labels: soft,
        pairs,
        lambdas,
    })
}

/// The `m = n^2` synthetic set over all ordered pairs at a fixed `lambda`.
pub fn build_synthetic_fixed(
    dataset: &LabeledDataset,
    lambda: f64,
) -> Result<SyntheticClassificationSet> {
    check_lambda(lambda)?;
    if dataset.is_empty() {
        return Err(MixdynError::EmptyDataset);
    }
    let pairs = all_pairs(dataset.len());
    let lambdas = vec![lambda; pairs.len()];
    build_from_pairs(dataset, pairs, lambdas)
}

/// `count` pairs drawn uniformly with replacement, each with its own lambda.
pub fn build_synthetic_sampled(
    dataset: &LabeledDataset,
    config: &MixupConfig,
    count: usize,
    rng: &mut RandomStream,
) -> Result<SyntheticClassificationSet> {
    if dataset.is_empty() {
        return Err(MixdynError::EmptyDataset);
    }
    let n = dataset.len();
    let mut pairs = Vec::with_capacity(count);
    let mut lambdas = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.index(n);
        let j = rng.index(n);
        pairs.push((i, j));
        lambdas.push(sample_lambda(config, rng));
    }
    build_from_pairs(dataset, pairs, lambdas)
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || p.iter().any(|&v| v < 0.0) {
        return Err(MixdynError::InvalidParameter(format!(
            "not a probability distribution (sum {sum})"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats.
pub fn entropy(y: &[f64]) -> f64 {
    -y.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

pub fn kl_divergence(y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(MixdynError::DimensionMismatch {
            expected: y.len(),
            found: p.len(),
        });
    }
    let mut total = 0.0;
    for (c, (&yc, &pc)) in y.iter().zip(p).enumerate() {
        if yc > 0.0 {
            if pc <= 0.0 {
                return Err(MixdynError::SupportViolation { class: c });
            }
            total += yc * (yc / pc).ln();
        }
    }
    Ok(total)
}

/// `-Σ y_c ln p_c` in nats.
pub fn cross_entropy(y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(MixdynError::DimensionMismatch {
            expected: y.len(),
            found: p.len(),
        });
    }
    check_distribution(y)?;
    check_distribution(p)?;
    let mut total = 0.0;
    for (c, (&yc, &pc)) in y.iter().zip(p).enumerate() {
        if yc > 0.0 {
            if pc <= 0.0 {
                return Err(MixdynError::SupportViolation { class: c });
            }
            total -= yc * pc.ln();
        }
    }
    Ok(total)
}

/// `(C - 1) / (2C)`: the Beta(1,1) Mixup cross-entropy floor on balanced data.
pub fn mixup_ce_lower_bound(class_count: usize) -> f64 {
    if class_count == 0 {
        return 0.0;
    }
    let c = class_count as f64;
    (c - 1.0) / (2.0 * c)
}

/// Same bound, refusing data it does not apply to.
pub fn mixup_ce_lower_bound_for(dataset: &LabeledDataset) -> Result<f64> {
    let c = dataset
        .class_count()
        .ok_or_else(|| MixdynError::InvalidParameter("classification labels required".into()))?;
    if !dataset.is_balanced() {
        return Err(MixdynError::Unbalanced);
    }
    Ok(mixup_ce_lower_bound(c))
}

fn pair_entropy(lambda: f64) -> f64 {
    let term = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    -(term(lambda) + term(1.0 - lambda))
}

/// `E[-(λ ln λ + (1-λ) ln(1-λ))]` for `λ ~ Beta(alpha, alpha)`, by quadrature.
///
/// The Beta normaliser is obtained from the same quadrature as the
/// numerator, so no special functions are needed. For `alpha >= 1` the
/// weight `(4λ(1-λ))^(alpha-1)` is integrated over panels narrow enough to
/// resolve its peak; for `alpha < 1` the endpoint singularity is removed by
/// the substitution `λ = v^(1/alpha) / 2` on the symmetric half interval.
pub fn expected_pair_entropy(alpha: f64) -> Result<f64> {
    expected_pair_entropy_with(alpha, DEFAULT_QUADRATURE_NODES)
}

pub fn expected_pair_entropy_with(alpha: f64, nodes: usize) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(MixdynError::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let rule = GaussLegendre::new(nodes)?;
    if alpha >= 1.0 {
        // Symmetric half [0, 1/2] with λ = v²/2, which turns the λ ln λ
        // endpoint singularity into a v³ ln v one.
        let sd = 0.5 / (2.0 * alpha + 1.0).sqrt();
        let panels = (1.0 / (4.0 * sd)).ceil().max(1.0) as usize;
        let weight = |l: f64| {
            let q = 4.0 * l * (1.0 - l);
            if alpha == 1.0 {
                1.0
            } else if q <= 0.0 {
                0.0
            } else {
                ((alpha - 1.0) * q.ln()).exp()
            }
        };
        let lam = |v: f64| 0.5 * v * v;
        let num = rule.integrate_composite(
            |v| v * weight(lam(v)) * pair_entropy(lam(v)),
            0.0,
            1.0,
            panels,
        )?;
        let den = rule.integrate_composite(|v| v * weight(lam(v)), 0.0, 1.0, panels)?;
        Ok(num / den)
    } else {
        let lam = |v: f64| 0.5 * v.powf(1.0 / alpha);
        let tail = |v: f64| (1.0 - lam(v)).powf(alpha - 1.0);
        let panels = 16;
        let num = rule.integrate_composite(|v| tail(v) * pair_entropy(lam(v)), 0.0, 1.0, panels)?;
        let den = rule.integrate_composite(tail, 0.0, 1.0, panels)?;
        Ok(num / den)
    }
}

/// Mean cross-entropy of `predictor` over the synthetic set.
pub fn empirical_mixup_loss<F>(predictor: F, synth: &SyntheticClassificationSet) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if synth.is_empty() {
        return Err(MixdynError::EmptyDataset);
    }
    let mut total = 0.0;
    for k in 0..synth.len() {
        let p = predictor(&synth.input(k));
        total += cross_entropy(&synth.soft_label(k), &p)?;
    }
    Ok(total / synth.len() as f64)
}

/// A balanced dataset whose inputs are the one-hot class codes, so that a
/// Mixup input coincides with its soft label and the identity map is the
/// interpolating predictor.
pub fn one_hot_balanced_dataset(class_count: usize, per_class: usize) -> Result<LabeledDataset> {
    if class_count == 0 || per_class == 0 {
        return Err(MixdynError::EmptyDataset);
    }
    let n = class_count * per_class;
    let tokens: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    let mut features = DMatrix::zeros(n, class_count);
    for (i, &t) in tokens.iter().enumerate() {
        features[(i, t)] = 1.0;
    }
    LabeledDataset::classification(features, tokens, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mix_pair_examples() {
        let (x, y) = mix_pair(&[0.0, 0.0], &[2.0, 4.0], &[1.0], &[3.0], 0.5).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert_eq!(y, vec![2.0]);
        let (x, y) = mix_pair(&[1.0, -1.0], &[2.0, 4.0], &[1.0], &[3.0], 1.0).unwrap();
        assert_eq!((x, y), (vec![1.0, -1.0], vec![1.0]));
        let (x, y) = mix_pair(&[1.0, -1.0], &[2.0, 4.0], &[1.0], &[3.0], 0.0).unwrap();
        assert_eq!((x, y), (vec![2.0, 4.0], vec![3.0]));
        assert!(matches!(
            mix_pair(&[1.0], &[1.0, 2.0], &[0.0], &[0.0], 0.5),
            Err(MixdynError::DimensionMismatch { .. })
        ));
        assert!(mix_pair(&[1.0], &[2.0], &[0.0], &[0.0], 1.5).is_err());
    }

    fn small_dataset() -> LabeledDataset {
        let f = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 3.0, -1.0, 5.0]);
        LabeledDataset::classification(f, vec![0, 1, 2], 3).unwrap()
    }

    #[test]
    fn synthetic_fixed_counts_and_degenerate_cases() {
        let ds = small_dataset();
        let s = build_synthetic_fixed(&ds, 0.3).unwrap();
        assert_eq!(s.len(), 9);
        for (k, &(i, j)) in s.pairs.iter().enumerate() {
            if i == j {
                assert_eq!(s.input(k), ds.point(i));
                assert_eq!(s.soft_label(k), ds.label_vector(i));
            }
        }
        let s1 = build_synthetic_fixed(&ds, 1.0).unwrap();
        for (k, &(i, _)) in s1.pairs.iter().enumerate() {
            assert_eq!(s1.input(k), ds.point(i));
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let f = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(
            LabeledDataset::classification(f, vec![], 2),
            Err(MixdynError::EmptyDataset)
        );
    }

    #[test]
    fn in_class_fraction_is_one_over_c() {
        let ds = one_hot_balanced_dataset(4, 3).unwrap();
        let s = build_synthetic_fixed(&ds, 0.37).unwrap();
        let mut in_class = 0;
        for k in 0..s.len() {
            let row = s.soft_label(k);
            let nonzero = row.iter().filter(|&&v| v > 0.0).count();
            assert!(nonzero <= 2);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let (i, j) = s.pairs[k];
            if ds.label_vector(i) == ds.label_vector(j) {
                in_class += 1;
                assert_eq!(nonzero, 1);
            }
        }
        assert_eq!(in_class * 4, s.len());
    }

    #[test]
    fn sample_lambda_sentinels_and_moments() {
        let mut rng = RandomStream::new(1);
        let erm = MixupConfig::beta(0.0).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_lambda(&erm, &mut rng), 1.0);
            assert_eq!(sample_lambda(&MixupConfig::erm(), &mut rng), 1.0);
        }
        let cfg = MixupConfig::beta(1.0).unwrap();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_lambda(&cfg, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() <= 0.005, "mean {mean}");

        // Two-sample KS between λ and 1-λ.
        let mut a = draws.clone();
        let mut b: Vec<f64> = draws.iter().map(|l| 1.0 - l).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut ks) = (0usize, 0usize, 0.0f64);
        let n = a.len() as f64;
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / n - j as f64 / n).abs());
        }
        assert!(ks <= 0.02, "ks {ks}");
    }

    #[test]
    fn cross_entropy_examples() {
        assert_abs_diff_eq!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let ln2 = 2f64.ln();
        assert_abs_diff_eq!(
            cross_entropy(&[0.5, 0.5], &[0.5, 0.5]).unwrap(),
            ln2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cross_entropy(&[1.0, 0.0], &[0.5, 0.5]).unwrap(),
            ln2,
            epsilon = 1e-15
        );
        assert_eq!(
            cross_entropy(&[0.5, 0.5], &[1.0, 0.0]),
            Err(MixdynError::SupportViolation { class: 1 })
        );
    }

    #[test]
    fn lower_bound_values() {
        assert_abs_diff_eq!(mixup_ce_lower_bound(10), 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(mixup_ce_lower_bound(2), 0.25, epsilon = 1e-15);
        assert_eq!(mixup_ce_lower_bound(1), 0.0);
        let f = DMatrix::zeros(3, 1);
        let unbalanced = LabeledDataset::classification(f, vec![0, 0, 1], 2).unwrap();
        assert_eq!(
            mixup_ce_lower_bound_for(&unbalanced),
            Err(MixdynError::Unbalanced)
        );
        let balanced = one_hot_balanced_dataset(10, 2).unwrap();
        assert_abs_diff_eq!(
            mixup_ce_lower_bound_for(&balanced).unwrap(),
            0.45,
            epsilon = 1e-15
        );
    }

    fn mc_pair_entropy(alpha: f64, draws: usize, seed: u64) -> (f64, f64) {
        let mut rng = RandomStream::new(seed);
        let vals: Vec<f64> = (0..draws)
            .map(|_| pair_entropy(rng.beta(alpha, alpha)))
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        (mean, (var / draws as f64).sqrt())
    }

    #[test]
    fn pair_entropy_expectation() {
        let v = expected_pair_entropy(1.0).unwrap();
        assert!((v - 0.5).abs() <= 1e-9, "{v}");

        let (mc, _) = mc_pair_entropy(1000.0, 200_000, 2);
        let q = expected_pair_entropy(1000.0).unwrap();
        assert!((q - 2f64.ln()).abs() <= 1e-3, "{q}");
        assert!((q - mc).abs() <= 1e-3, "{q} vs {mc}");

        let (mc, se) = mc_pair_entropy(0.01, 200_000, 3);
        let q = expected_pair_entropy(0.01).unwrap();
        assert!(q <= 0.05, "{q}");
        assert!((q - mc).abs() <= 4.0 * se + 1e-4, "{q} vs {mc} ± {se}");

        assert!(expected_pair_entropy(0.0).is_err());
    }

    #[test]
    fn pair_entropy_quadrature_matches_monte_carlo_uniform() {
        let (mc, se) = mc_pair_entropy(1.0, 1_000_000, 9);
        let q = expected_pair_entropy(1.0).unwrap();
        assert!((q - mc).abs() <= 3.0 * se, "{q} vs {mc} ± {se}");
    }

    #[test]
    fn interpolating_predictor_attains_bound() {
        let ds = one_hot_balanced_dataset(10, 3).unwrap();
        let mut rng = RandomStream::new(4);
        let cfg = MixupConfig::beta(1.0).unwrap();
        let synth = build_synthetic_sampled(&ds, &cfg, 100_000, &mut rng).unwrap();
        let loss = empirical_mixup_loss(|x| x.to_vec(), &synth).unwrap();
        assert!((loss - 0.45).abs() <= 0.01, "{loss}");

        // A uniform predictor pays strictly more.
        let uniform = empirical_mixup_loss(|_| vec![0.1; 10], &synth).unwrap();
        assert!(uniform >= loss);

        let erm = build_synthetic_fixed(&ds, 1.0).unwrap();
        assert_eq!(empirical_mixup_loss(|x| x.to_vec(), &erm).unwrap(), 0.0);
    }

    #[test]
    fn any_predictor_respects_bound() {
        let ds = one_hot_balanced_dataset(10, 2).unwrap();
        let mut rng = RandomStream::new(8);
        let cfg = MixupConfig::beta(1.0).unwrap();
        let synth = build_synthetic_sampled(&ds, &cfg, 20_000, &mut rng).unwrap();
        // Smoothed version of the interpolating predictor.
        let losses: Vec<f64> = (0..synth.len())
            .map(|k| {
                let x = synth.input(k);
                let p: Vec<f64> = x.iter().map(|v| 0.9 * v + 0.01).collect();
                cross_entropy(&synth.soft_label(k), &p).unwrap()
            })
            .collect();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let var = losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / losses.len() as f64;
        let se = (var / losses.len() as f64).sqrt();
        assert!(mean >= 0.45 - 3.0 * se);
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn cross_entropy_decomposes(y in distribution(5), p in distribution(5)) {
            let ce = cross_entropy(&y, &p).unwrap();
            let kl = kl_divergence(&y, &p).unwrap();
            prop_assert!((ce - kl - entropy(&y)).abs() <= 1e-12);
            prop_assert!(ce >= entropy(&y) - 1e-12);
        }

        #[test]
        fn synthetic_rows_are_stochastic(lambda in 0.0f64..=1.0, per_class in 1usize..4) {
            let ds = one_hot_balanced_dataset(3, per_class).unwrap();
            let s = build_synthetic_fixed(&ds, lambda).unwrap();
            for k in 0..s.len() {
                let sum: f64 = s.soft_label(k).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }
}
