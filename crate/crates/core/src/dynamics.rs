//! Random-feature regression trained on Mixup data.
//!
//! The model is `θᵀφ(x)` with a frozen feature map `φ(x) = tanh(W x)`. On a
//! synthetic set with feature matrix `Φ` (`d x m`) and targets `Ỹ`, gradient
//! flow on `(1/2m)|θᵀΦ - Ỹᵀ|²` has the closed form
//!
//! ```text
//! θ_t = θ* + e^{-ηtG}(θ_0 - θ*) + (I - e^{-ηtG}) θ_noise,   G = ΦΦᵀ/m
//! ```
//!
//! where `θ*` fits the clean targets `Ỹ* = f(X̃)` and `θ_noise` fits the
//! Mixup noise `Z = Ỹ - Ỹ*`. The first term learns the clean pattern, the
//! second one slowly memorises the noise, which produces a U-shaped
//! population risk.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MixdynError, Result};
use crate::mixup::{all_pairs, check_lambda, mix_scalar, sample_lambda, LambdaMode, MixupConfig};
use crate::numerics::{spectral_exp, sym_eig, RandomStream, SpectralDecomposition};

/// Largest accepted condition number of `ΦΦᵀ/m`.
pub const MAX_CONDITION: f64 = 1e12;

/// Training stops with [`MixdynError::Diverged`] above this train risk.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Euler steps must satisfy `dt * η * μ_max` below this.
pub const MAX_EULER_STEP: f64 = 0.1;

/// Default number of points in a time grid.
pub const DEFAULT_GRID_POINTS: usize = 64;

/// `θᵀ tanh(W x)` with `W` frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureModel {
    weights: DMatrix<f64>,
    pub theta: DVector<f64>,
}

impl RandomFeatureModel {
    pub fn new(weights: DMatrix<f64>, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != weights.nrows() {
            return Err(MixdynError::DimensionMismatch {
                expected: weights.nrows(),
                found: theta.len(),
            });
        }
        Ok(Self { weights, theta })
    }

    pub fn zero_init(weights: DMatrix<f64>) -> Self {
        let d = weights.nrows();
        Self {
            weights,
            theta: DVector::zeros(d),
        }
    }

    /// Number of features `d`.
    pub fn width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(MixdynError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok((&self.weights * DVector::from_column_slice(x)).map(f64::tanh))
    }

    /// Pre-activations `W Xᵀ` (`d x m`) for inputs stored one per row.
    pub fn preactivations(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(MixdynError::DimensionMismatch {
                expected: self.input_dim(),
                found: inputs.ncols(),
            });
        }
        Ok(&self.weights * inputs.transpose())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.theta.dot(&self.features(x)?))
    }
}

/// `Φ = [φ(x_1), ..., φ(x_m)]`, `d x m`, for inputs stored one per row.
pub fn feature_matrix(model: &RandomFeatureModel, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(model.preactivations(inputs)?.map(f64::tanh))
}

/// Mixed inputs with clean and Mixup targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegressionSet {
    /// `m x d0`, one synthetic input per row.
    pub features: DMatrix<f64>,
    /// `Ỹ* = f(X̃)`.
    pub clean_targets: DVector<f64>,
    /// `Ỹ = Ỹ* + Z`.
    pub mixed_targets: DVector<f64>,
    /// `Z`.
    pub noise: DVector<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub lambdas: Vec<f64>,
}

impl SyntheticRegressionSet {
    /// All `n^2` ordered pairs of `inputs` (one per row) mixed with `lambda`.
    pub fn fixed_lambda<F>(
        inputs: &DMatrix<f64>,
        targets: &[f64],
        truth: F,
        lambda: f64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        check_lambda(lambda)?;
        let pairs = all_pairs(inputs.nrows());
        let lambdas = vec![lambda; pairs.len()];
        Self::from_pairs(inputs, targets, truth, pairs, lambdas)
    }

    pub fn from_pairs<F>(
        inputs: &DMatrix<f64>,
        targets: &[f64],
        truth: F,
        pairs: Vec<(usize, usize)>,
        lambdas: Vec<f64>,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = inputs.nrows();
        if n == 0 {
            return Err(MixdynError::EmptyDataset);
        }
        if targets.len() != n {
            return Err(MixdynError::DimensionMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        if pairs.len() != lambdas.len() {
            return Err(MixdynError::DimensionMismatch {
                expected: pairs.len(),
                found: lambdas.len(),
            });
        }
        let d0 = inputs.ncols();
        let m = pairs.len();
        let mut features = DMatrix::zeros(m, d0);
        let mut clean = DVector::zeros(m);
        let mut noise = DVector::zeros(m);
        let mut row = vec![0.0; d0];
        for (k, (&(i, j), &lam)) in pairs.iter().zip(&lambdas).enumerate() {
            check_lambda(lam)?;
            for c in 0..d0 {
                row[c] = mix_scalar(inputs[(i, c)], inputs[(j, c)], lam);
                features[(k, c)] = row[c];
            }
            let mixed = mix_scalar(targets[i], targets[j], lam);
            clean[k] = truth(&row);
            noise[k] = mixed - clean[k];
        }
        let mixed_targets = &clean + &noise;
        Ok(Self {
            features,
            clean_targets: clean,
            mixed_targets,
            noise,
            pairs,
            lambdas,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `max Z²`, the tightest admissible `C2`.
    pub fn max_noise_sq(&self) -> f64 {
        self.noise.iter().map(|z| z * z).fold(0.0, f64::max)
    }
}

/// Eigendecomposition of `G = ΦΦᵀ/m` for an overdetermined feature matrix.
#[derive(Debug, Clone)]
pub struct GramSystem {
    phi: DMatrix<f64>,
    decomp: SpectralDecomposition,
}

impl GramSystem {
    pub fn new(phi: &DMatrix<f64>) -> Result<Self> {
        let (d, m) = phi.shape();
        if m <= d {
            return Err(MixdynError::Underdetermined { m, d });
        }
        let gram = phi * phi.transpose() / m as f64;
        let decomp = sym_eig(&gram)?;
        let (hi, lo) = (decomp.max_eigenvalue(), decomp.min_eigenvalue());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(MixdynError::RankDeficient { condition });
        }
        Ok(Self {
            phi: phi.clone(),
            decomp,
        })
    }

    pub fn width(&self) -> usize {
        self.phi.nrows()
    }

    pub fn samples(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Eigenpairs `μ_k, v_k` of `ΦΦᵀ/m`, descending.
    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    pub fn condition(&self) -> f64 {
        self.decomp.max_eigenvalue() / self.decomp.min_eigenvalue()
    }

    /// `(ΦΦᵀ)⁻¹ Φ y`.
    pub fn pinv_apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.samples() {
            return Err(MixdynError::DimensionMismatch {
                expected: self.samples(),
                found: y.len(),
            });
        }
        let m = self.samples() as f64;
        let rhs = self.decomp.project(&(&self.phi * y));
        let scaled = DVector::from_iterator(
            rhs.len(),
            rhs.iter()
                .zip(self.decomp.eigenvalues.iter())
                .map(|(r, mu)| r / (m * mu)),
        );
        Ok(&self.decomp.eigenvectors * scaled)
    }
}

/// Least-squares head `(ΦΦᵀ)⁻¹ Φ y`; requires `m > d` and a well-conditioned Gram matrix.
pub fn pseudo_inverse_apply(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    GramSystem::new(phi)?.pinv_apply(y)
}

/// Closed-form gradient-flow trajectory split into its clean and noise parts.
#[derive(Debug, Clone)]
pub struct ClosedFormFlow {
    system: GramSystem,
    theta_star: DVector<f64>,
    theta_noise: DVector<f64>,
    theta0: DVector<f64>,
    eta: f64,
}

impl ClosedFormFlow {
    pub fn new(
        phi: &DMatrix<f64>,
        y_clean: &DVector<f64>,
        z: &DVector<f64>,
        theta0: &DVector<f64>,
        eta: f64,
    ) -> Result<Self> {
        let system = GramSystem::new(phi)?;
        Self::from_system(system, y_clean, z, theta0, eta)
    }

    pub fn from_system(
        system: GramSystem,
        y_clean: &DVector<f64>,
        z: &DVector<f64>,
        theta0: &DVector<f64>,
        eta: f64,
    ) -> Result<Self> {
        if theta0.len() != system.width() {
            return Err(MixdynError::DimensionMismatch {
                expected: system.width(),
                found: theta0.len(),
            });
        }
        let theta_star = system.pinv_apply(y_clean)?;
        let theta_noise = system.pinv_apply(z)?;
        Ok(Self {
            system,
            theta_star,
            theta_noise,
            theta0: theta0.clone(),
            eta,
        })
    }

    pub fn system(&self) -> &GramSystem {
        &self.system
    }

    /// Clean pattern `θ* = Φ†Ỹ*`.
    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// Noisy pattern offset `θ_noise = Φ†Z`.
    pub fn theta_noise(&self) -> &DVector<f64> {
        &self.theta_noise
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    /// Same flow restarted from another initialisation.
    pub fn with_theta0(&self, theta0: &DVector<f64>) -> Self {
        Self {
            theta0: theta0.clone(),
            ..self.clone()
        }
    }

    pub fn theta_at(&self, t: f64) -> Result<DVector<f64>> {
        if !(t >= 0.0) {
            return Err(MixdynError::InvalidParameter(format!(
                "time must be >= 0, got {t}"
            )));
        }
        let decay = spectral_exp(self.system.spectrum(), -self.eta * t)?;
        let clean = &decay * (&self.theta0 - &self.theta_star);
        let noise = &self.theta_noise - &decay * &self.theta_noise;
        Ok(&self.theta_star + clean + noise)
    }

    /// `θ_t` for several initialisations sharing one matrix exponential.
    pub fn thetas_at(&self, t: f64, theta0s: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if !(t >= 0.0) {
            return Err(MixdynError::InvalidParameter(format!(
                "time must be >= 0, got {t}"
            )));
        }
        let decay = spectral_exp(self.system.spectrum(), -self.eta * t)?;
        let fixed =
            &self.theta_star + &self.theta_noise - &decay * (&self.theta_star + &self.theta_noise);
        Ok(theta0s.iter().map(|th0| &fixed + &decay * th0).collect())
    }

    /// `θ* + θ_noise`, the limit of the flow and the Mixup least-squares solution.
    pub fn limit(&self) -> DVector<f64> {
        &self.theta_star + &self.theta_noise
    }
}

pub fn closed_form_theta(
    phi: &DMatrix<f64>,
    y_clean: &DVector<f64>,
    z: &DVector<f64>,
    theta0: &DVector<f64>,
    eta: f64,
    t: f64,
) -> Result<DVector<f64>> {
    ClosedFormFlow::new(phi, y_clean, z, theta0, eta)?.theta_at(t)
}

fn power_iteration_max(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-12 * next.abs() {
            return next.max(norm);
        }
        estimate = next;
    }
    estimate
}

/// Explicit Euler integration of `θ' = η(Φy/m - ΦΦᵀθ/m)`, reporting `θ`
/// at each (nondecreasing) time in `times`.
///
/// The drift is the negative gradient written without any pseudo-inverse or
/// eigendecomposition, so it is independent of [`ClosedFormFlow`].
pub fn flow_euler_oracle_grid(
    phi: &DMatrix<f64>,
    y_mixed: &DVector<f64>,
    theta0: &DVector<f64>,
    eta: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<DVector<f64>>> {
    let (d, m) = phi.shape();
    if y_mixed.len() != m {
        return Err(MixdynError::DimensionMismatch {
            expected: m,
            found: y_mixed.len(),
        });
    }
    if theta0.len() != d {
        return Err(MixdynError::DimensionMismatch {
            expected: d,
            found: theta0.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(MixdynError::InvalidParameter("dt must be positive".into()));
    }
    let gram = phi * phi.transpose() / m as f64;
    let rhs = phi * y_mixed / m as f64;
    let product = dt * eta * power_iteration_max(&gram);
    if !(product < MAX_EULER_STEP) {
        return Err(MixdynError::StepTooLarge { product });
    }
    let mut theta = theta0.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut drift = DVector::zeros(d);
    for &target in times {
        if target < now {
            return Err(MixdynError::InvalidParameter(
                "times must be nondecreasing".into(),
            ));
        }
        let span = target - now;
        let steps = (span / dt).ceil() as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                drift.copy_from(&rhs);
                drift.gemv(-1.0, &gram, &theta, 1.0);
                theta.axpy(h * eta, &drift, 1.0);
            }
        }
        now = target;
        out.push(theta.clone());
    }
    Ok(out)
}

pub fn flow_euler_oracle(
    phi: &DMatrix<f64>,
    y_mixed: &DVector<f64>,
    theta0: &DVector<f64>,
    eta: f64,
    t_end: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    let mut v = flow_euler_oracle_grid(phi, y_mixed, theta0, eta, &[t_end], dt)?;
    Ok(v.remove(0))
}

/// `|∇_θ (1/2m)|θᵀΦ - yᵀ|²|`.
pub fn gradient_norm(theta: &DVector<f64>, phi: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    gradient(theta, phi, y).norm()
}

fn gradient(theta: &DVector<f64>, phi: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let residual = phi.tr_mul(theta) - y;
    phi * residual / y.len() as f64
}

/// Time-indexed record of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Epoch numbers (or flow times), increasing.
    pub times: Vec<f64>,
    pub theta_history: Option<Vec<DVector<f64>>>,
    /// Mean squared error on the epoch's training objective.
    pub train_risk: Vec<f64>,
    /// Mean squared error on held-out data.
    pub test_risk: Vec<f64>,
    /// Norm of the gradient of the epoch's training objective.
    pub gradient_norm: Vec<f64>,
    pub metadata: Vec<(String, String)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.train_risk.len() == n
            && self.test_risk.len() == n
            && self.gradient_norm.len() == n
            && self.theta_history.as_ref().is_none_or(|h| h.len() == n)
            && self.times.windows(2).all(|w| w[0] < w[1])
    }

    pub fn final_test_risk(&self) -> Option<f64> {
        self.test_risk.last().copied()
    }

    /// `(index, value)` of the smallest test risk, earliest on ties.
    pub fn min_test_risk(&self) -> Option<(usize, f64)> {
        self.test_risk
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            })
    }

    pub fn push_metadata(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }
}

/// Least-squares objective `(1/m)|Φᵀθ - y|²` reduced to its sufficient
/// statistics `G = ΦΦᵀ/m`, `b = Φy/m`, `c = |y|²/m`, so each evaluation
/// costs `O(d²)` regardless of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    mean_sq: f64,
}

impl QuadraticObjective {
    pub fn new(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let m = phi.ncols();
        if y.len() != m {
            return Err(MixdynError::DimensionMismatch {
                expected: m,
                found: y.len(),
            });
        }
        if m == 0 {
            return Err(MixdynError::EmptyDataset);
        }
        let scale = 1.0 / m as f64;
        let mut gram = phi * phi.transpose() * scale;
        gram = (&gram + gram.transpose()) * 0.5;
        Ok(Self {
            gram,
            rhs: phi * y * scale,
            mean_sq: y.norm_squared() * scale,
        })
    }

    /// Gradient of half the mean squared error, `Gθ - b`.
    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.gram * theta - &self.rhs
    }

    pub fn mse(&self, theta: &DVector<f64>) -> f64 {
        self.mse_with_gradient(theta).0
    }

    /// Mean squared error and gradient at `theta`, sharing one product.
    pub fn mse_with_gradient(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let g = self.gradient(theta);
        let mse = theta.dot(&g) - self.rhs.dot(theta) + self.mean_sq;
        (mse.max(0.0), g)
    }
}

/// Held-out inputs and targets, summarised for fast scoring.
#[derive(Debug, Clone)]
pub struct HeldOutSet {
    objective: QuadraticObjective,
    len: usize,
}

impl HeldOutSet {
    pub fn new(
        model: &RandomFeatureModel,
        inputs: &DMatrix<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if targets.len() != inputs.nrows() {
            return Err(MixdynError::DimensionMismatch {
                expected: inputs.nrows(),
                found: targets.len(),
            });
        }
        let phi = feature_matrix(model, inputs)?;
        Ok(Self {
            objective: QuadraticObjective::new(&phi, &DVector::from_vec(targets))?,
            len: inputs.nrows(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mse(&self, theta: &DVector<f64>) -> f64 {
        self.objective.mse(theta)
    }
}

/// Which pairs make up one epoch's Mixup objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingScheme {
    /// All `n^2` ordered pairs.
    #[default]
    AllPairs,
    /// `n` pairs `(i, π(i))` under a fresh random permutation each epoch.
    Permutation,
}

/// Mixup setting as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpochSchedule {
    Constant(MixupConfig),
    /// `before` until `switch_epoch` (exclusive), then ERM.
    SwitchToErm {
        before: MixupConfig,
        switch_epoch: usize,
    },
}

impl EpochSchedule {
    pub fn config_at(&self, epoch: usize) -> MixupConfig {
        match *self {
            EpochSchedule::Constant(c) => c,
            EpochSchedule::SwitchToErm {
                before,
                switch_epoch,
            } => {
                if epoch < switch_epoch {
                    before
                } else {
                    MixupConfig::erm()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdSettings {
    pub eta: f64,
    pub epochs: usize,
    pub pairing: PairingScheme,
    pub record_theta: bool,
}

/// One epoch's training objective.
enum Objective<'a> {
    Direct(&'a DMatrix<f64>, &'a DVector<f64>),
    Reduced(&'a QuadraticObjective),
}

impl Objective<'_> {
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Objective::Direct(phi, y) => gradient(theta, phi, y),
            Objective::Reduced(q) => q.gradient(theta),
        }
    }

    fn mse_and_gradient_norm(&self, theta: &DVector<f64>) -> (f64, f64) {
        match self {
            Objective::Direct(phi, y) => {
                let residual = phi.tr_mul(theta) - *y;
                let m = y.len() as f64;
                (residual.norm_squared() / m, (*phi * residual / m).norm())
            }
            Objective::Reduced(q) => {
                let (mse, g) = q.mse_with_gradient(theta);
                (mse, g.norm())
            }
        }
    }
}

/// Training inputs and targets together with their pre-activations, so
/// mixed features cost `O(d)` per pair: `W(λx + (1-λ)x') = λWx + (1-λ)Wx'`.
struct MixingCache {
    preact: DMatrix<f64>,
    targets: DVector<f64>,
    erm_phi: DMatrix<f64>,
    erm_reduced: Option<QuadraticObjective>,
    fixed: Option<(u64, QuadraticObjective)>,
}

impl MixingCache {
    fn new(model: &RandomFeatureModel, inputs: &DMatrix<f64>, targets: &[f64]) -> Result<Self> {
        let preact = model.preactivations(inputs)?;
        let erm_phi = preact.map(f64::tanh);
        let targets = DVector::from_column_slice(targets);
        let erm_reduced = if erm_phi.ncols() > erm_phi.nrows() {
            Some(QuadraticObjective::new(&erm_phi, &targets)?)
        } else {
            None
        };
        Ok(Self {
            preact,
            targets,
            erm_phi,
            erm_reduced,
            fixed: None,
        })
    }

    fn build(&self, pairs: &[(usize, usize)], lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.preact.nrows();
        let mut phi = DMatrix::zeros(d, pairs.len());
        let mut y = DVector::zeros(pairs.len());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let (a, b) = (self.preact.column(i), self.preact.column(j));
            for r in 0..d {
                phi[(r, k)] = mix_scalar(a[r], b[r], lambda).tanh();
            }
            y[k] = mix_scalar(self.targets[i], self.targets[j], lambda);
        }
        (phi, y)
    }
}

/// Full-batch gradient descent on `(1/2m)|θᵀΦ - Ỹᵀ|²`, where the objective
/// of each epoch follows `schedule`. Row `e` of the result records the
/// state after `e + 1` updates: train MSE and gradient norm on that epoch's
/// objective, and test MSE on `test`.
///
/// ERM epochs train on the `n` original points. Fixed-λ epochs reuse one
/// synthetic set; Beta epochs draw one λ per epoch shared by all pairs.
pub fn gd_trajectory(
    model: &mut RandomFeatureModel,
    inputs: &DMatrix<f64>,
    targets: &[f64],
    schedule: &EpochSchedule,
    settings: &GdSettings,
    rng: &mut RandomStream,
    test: &HeldOutSet,
) -> Result<Trajectory> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(MixdynError::EmptyDataset);
    }
    let mut cache = MixingCache::new(model, inputs, targets)?;
    let every_pair = all_pairs(n);
    let mut traj = Trajectory {
        theta_history: settings.record_theta.then(Vec::new),
        ..Trajectory::default()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut scratch_pairs = Vec::with_capacity(n);

    for epoch in 0..settings.epochs {
        let config = schedule.config_at(epoch);
        let owned;
        let objective = if config.is_erm() {
            match &cache.erm_reduced {
                Some(q) => Objective::Reduced(q),
                None => Objective::Direct(&cache.erm_phi, &cache.targets),
            }
        } else {
            let lambda = sample_lambda(&config, rng);
            let pairs: &[(usize, usize)] = match settings.pairing {
                PairingScheme::AllPairs => &every_pair,
                PairingScheme::Permutation => {
                    for i in (1..n).rev() {
                        perm.swap(i, rng.index(i + 1));
                    }
                    scratch_pairs.clear();
                    scratch_pairs.extend((0..n).map(|i| (i, perm[i])));
                    &scratch_pairs
                }
            };
            let reusable = settings.pairing == PairingScheme::AllPairs
                && matches!(config.lambda_mode, LambdaMode::Fixed(_));
            if reusable {
                let key = lambda.to_bits();
                if cache.fixed.as_ref().is_none_or(|(k, _)| *k != key) {
                    let (p, t) = cache.build(pairs, lambda);
                    cache.fixed = Some((key, QuadraticObjective::new(&p, &t)?));
                }
                Objective::Reduced(&cache.fixed.as_ref().expect("just filled").1)
            } else {
                owned = cache.build(pairs, lambda);
                Objective::Direct(&owned.0, &owned.1)
            }
        };

        let g = objective.gradient(&model.theta);
        model.theta.axpy(-settings.eta, &g, 1.0);

        let (train, grad_after) = objective.mse_and_gradient_norm(&model.theta);
        if !train.is_finite() || train > DIVERGENCE_THRESHOLD {
            return Err(MixdynError::Diverged { epoch, risk: train });
        }

        traj.times.push((epoch + 1) as f64);
        traj.train_risk.push(train);
        traj.gradient_norm.push(grad_after);
        traj.test_risk.push(test.mse(&model.theta));
        if let Some(h) = traj.theta_history.as_mut() {
            h.push(model.theta.clone());
        }
    }
    Ok(traj)
}

/// Monte-Carlo population sample `X ~ N(0, I)`, `Y = f(X)`, with features
/// precomputed so many parameter vectors can be scored on the same draws.
#[derive(Debug, Clone)]
pub struct PopulationSample {
    /// `d x N`.
    features: DMatrix<f64>,
    targets: DVector<f64>,
}

impl PopulationSample {
    pub fn draw<F>(
        model: &RandomFeatureModel,
        truth: F,
        n_samples: usize,
        rng: &mut RandomStream,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        if n_samples < 100 {
            return Err(MixdynError::InvalidParameter(format!(
                "need at least 100 Monte-Carlo samples, got {n_samples}"
            )));
        }
        let inputs = rng.normal_matrix(n_samples, model.input_dim(), 1.0);
        let targets = DVector::from_iterator(
            n_samples,
            (0..n_samples).map(|i| {
                let row: Vec<f64> = inputs.row(i).iter().copied().collect();
                truth(&row)
            }),
        );
        Ok(Self {
            features: feature_matrix(model, &inputs)?,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Largest `|φ(X)|²` over the sample.
    pub fn max_feature_norm_sq(&self) -> f64 {
        self.features
            .column_iter()
            .map(|c| c.norm_squared())
            .fold(0.0, f64::max)
    }

    /// Per-sample `(θᵀφ(X) - Y)²`.
    pub fn squared_errors(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.features.tr_mul(theta) - &self.targets).map(|r| r * r)
    }

    /// Mean and standard error of `(θᵀφ(X) - Y)²`.
    pub fn risk(&self, theta: &DVector<f64>) -> (f64, f64) {
        mean_and_stderr(self.squared_errors(theta).as_slice())
    }

    /// Paired estimate of `E_θ[R(θ)] - R(reference)` averaged over `thetas`;
    /// the standard error treats per-sample averages over `thetas` as i.i.d.
    pub fn excess_risk(&self, thetas: &[DVector<f64>], reference: &DVector<f64>) -> (f64, f64) {
        let base = self.squared_errors(reference);
        let mut acc = DVector::zeros(self.len());
        for th in thetas {
            acc += self.squared_errors(th);
        }
        let k = thetas.len().max(1) as f64;
        let diffs: Vec<f64> = acc
            .iter()
            .zip(base.iter())
            .map(|(a, b)| a / k - b)
            .collect();
        mean_and_stderr(&diffs)
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo population risk `E(θᵀφ(X) - Y)²` with `X ~ N(0, I_d0)`.
pub fn population_risk_mc<F>(
    theta: &DVector<f64>,
    model: &RandomFeatureModel,
    truth: F,
    n_samples: usize,
    rng: &mut RandomStream,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if theta.len() != model.width() {
        return Err(MixdynError::DimensionMismatch {
            expected: model.width(),
            found: theta.len(),
        });
    }
    Ok(PopulationSample::draw(model, truth, n_samples, rng)?.risk(theta))
}

/// Constants of the population-risk bound.
///
/// `theta_star` holds the coordinates of `θ*` in the eigenbasis of
/// `ΦΦᵀ/m`, paired with `eigenvalues` index by index.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBoundParams {
    c1: f64,
    c2: f64,
    xi: f64,
    theta_star: DVector<f64>,
    eigenvalues: DVector<f64>,
    eta: f64,
    r_star: f64,
    zeta: f64,
}

impl RiskBoundParams {
    pub fn new(
        c1: f64,
        c2: f64,
        xi: f64,
        theta_star: DVector<f64>,
        eigenvalues: DVector<f64>,
        eta: f64,
        r_star: f64,
    ) -> Result<Self> {
        if !(c1 > 0.0) || !(c2 >= 0.0) || !(eta > 0.0) || !(r_star >= 0.0) || !(xi >= 0.0) {
            return Err(MixdynError::InvalidParameter(format!(
                "bound constants out of range: c1={c1}, c2={c2}, xi={xi}, eta={eta}, r_star={r_star}"
            )));
        }
        if theta_star.len() != eigenvalues.len() {
            return Err(MixdynError::DimensionMismatch {
                expected: eigenvalues.len(),
                found: theta_star.len(),
            });
        }
        if eigenvalues.iter().any(|&mu| !(mu > 0.0)) {
            return Err(MixdynError::InvalidParameter(
                "eigenvalues must be positive".into(),
            ));
        }
        let zeta = Self::zeta_of(c2, xi, &theta_star, &eigenvalues);
        Ok(Self {
            c1,
            c2,
            xi,
            theta_star,
            eigenvalues,
            eta,
            r_star,
            zeta,
        })
    }

    /// Parameters for a trained instance: `θ*` is projected on the
    /// eigenbasis of the system, `C2 = max Z²`.
    pub fn for_flow(
        flow: &ClosedFormFlow,
        noise: &DVector<f64>,
        c1: f64,
        xi: f64,
        r_star: f64,
    ) -> Result<Self> {
        let spectrum = flow.system().spectrum();
        let c2 = noise.iter().map(|z| z * z).fold(0.0, f64::max);
        Self::new(
            c1,
            c2,
            xi,
            spectrum.project(flow.theta_star()),
            spectrum.eigenvalues.clone(),
            flow.eta,
            r_star,
        )
    }

    fn zeta_of(c2: f64, xi: f64, theta_star: &DVector<f64>, eigenvalues: &DVector<f64>) -> f64 {
        theta_star
            .iter()
            .zip(eigenvalues.iter())
            .map(|(th, mu)| (xi * xi + th * th).max(c2 / mu))
            .sum()
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn r_star(&self) -> f64 {
        self.r_star
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Same parameters with another noise constant.
    pub fn with_c2(&self, c2: f64) -> Result<Self> {
        Self::new(
            self.c1,
            c2,
            self.xi,
            self.theta_star.clone(),
            self.eigenvalues.clone(),
            self.eta,
            self.r_star,
        )
    }

    /// Same parameters with another learning rate.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(
            self.c1,
            self.c2,
            self.xi,
            self.theta_star.clone(),
            self.eigenvalues.clone(),
            eta,
            self.r_star,
        )
    }

    /// `2 sqrt(C1 R* ζ)`, the time-independent part of the bound.
    pub fn offset(&self) -> f64 {
        2.0 * (self.c1 * self.r_star * self.zeta).sqrt()
    }

    fn dynamic_part(&self, t: f64) -> f64 {
        let xi2 = self.xi * self.xi;
        let sum: f64 = self
            .theta_star
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(th, &mu)| {
                let decay = (-self.eta * mu * t).exp();
                (xi2 + th * th) * decay * decay + self.c2 / mu * (1.0 - decay).powi(2)
            })
            .sum();
        self.c1 * sum
    }
}

/// Upper bound on `R_t - R*`.
pub fn risk_bound(params: &RiskBoundParams, t: f64) -> f64 {
    params.dynamic_part(t) + params.offset()
}

const TURNING_PRESCAN: usize = 4000;
const GOLDEN_TOLERANCE: f64 = 1e-6;

/// Time minimising [`risk_bound`] over `[0, 50 / (η μ_min)]`.
///
/// A grid pre-scan locates the minimum; more than one local minimum is
/// reported as [`MixdynError::NotUnimodal`]. The interior minimum is then
/// refined by golden-section search to a relative tolerance of `1e-6`.
pub fn bound_turning_point(params: &RiskBoundParams) -> Result<f64> {
    let upper = 50.0 / (params.eta * params.min_eigenvalue());
    // The bound varies on the time scales 1/(η μ_k); a log-spaced scan
    // resolves all of them.
    let lower = 1e-3 / (params.eta * params.eigenvalues.max());
    let mut grid = vec![0.0];
    let ratio = (upper / lower).ln();
    for i in 0..TURNING_PRESCAN {
        grid.push(lower * (ratio * i as f64 / (TURNING_PRESCAN - 1) as f64).exp());
    }
    let values: Vec<f64> = grid.iter().map(|&t| params.dynamic_part(t)).collect();
    let minima = significant_minima(&values);
    let last = values.len() - 1;
    match minima.as_slice() {
        [] => Ok(0.0),
        [i] if *i == 0 => Ok(0.0),
        [i] if *i == last => Ok(upper),
        [i] => {
            let (a, b) = (grid[i - 1], grid[i + 1]);
            Ok(golden_section(
                |t| params.dynamic_part(t),
                a,
                b,
                GOLDEN_TOLERANCE,
            ))
        }
        many => Err(MixdynError::NotUnimodal {
            minima: many.iter().map(|&i| grid[i]).collect(),
        }),
    }
}

/// Indices of local minima of `values`, endpoints included, where minima
/// separated only by rounding-level bumps count once (the lowest is kept).
fn significant_minima(values: &[f64]) -> Vec<usize> {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let noise = 1e-10 * scale;
    let last = values.len() - 1;
    let mut raw = Vec::new();
    if values[0] < values[1] {
        raw.push(0);
    }
    for i in 1..last {
        if values[i] < values[i - 1] && values[i] <= values[i + 1] {
            raw.push(i);
        }
    }
    if values[last] < values[last - 1] {
        raw.push(last);
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in raw {
        if let Some(&prev) = kept.last() {
            let peak = values[prev..=i]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if peak - values[prev].max(values[i]) <= noise {
                if values[i] < values[prev] {
                    *kept.last_mut().expect("non-empty") = i;
                }
                continue;
            }
        }
        kept.push(i);
    }
    kept
}

/// Golden-section minimisation of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..500 {
        if (b - a).abs() <= rel_tol * 0.5 * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `0` followed by `points - 1` log-spaced times in `[t_min, t_max]`.
pub fn time_grid(t_min: f64, t_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || points < 3 {
        return Err(MixdynError::InvalidParameter(format!(
            "bad time grid: [{t_min}, {t_max}] with {points} points"
        )));
    }
    let mut grid = vec![0.0];
    let ratio = (t_max / t_min).ln();
    let k = points - 1;
    for i in 0..k {
        grid.push(t_min * (ratio * i as f64 / (k - 1) as f64).exp());
    }
    Ok(grid)
}
