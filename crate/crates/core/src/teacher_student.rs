//! Teacher-student regression experiments.
//!
//! A frozen two-layer tanh teacher (10 → 5 → 1) labels Gaussian inputs; a
//! random-feature student (frozen `W`, trained head `θ`) is fit by
//! full-batch gradient descent under ERM, fixed-λ Mixup, Beta Mixup, or
//! Mixup followed by ERM.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    gd_trajectory, EpochSchedule, GdSettings, HeldOutSet, PairingScheme, RandomFeatureModel,
    Trajectory,
};
use crate::error::{MixdynError, Result};
use crate::mixup::{LabeledDataset, Labels, MixupConfig};
use crate::numerics::RandomStream;

pub const TEACHER_INPUT_DIM: usize = 10;
pub const TEACHER_HIDDEN: usize = 5;
pub const DEFAULT_TURNING_WINDOW: usize = 5;

/// Independent random streams derived from one experiment seed, so runs
/// that share a seed share teacher, data, student weights and λ draws.
pub mod streams {
    pub const TEACHER: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const STUDENT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const MIXUP: u64 = 5;
}

/// `x ↦ w2 tanh(w1 x)`, no biases.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherNetwork {
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
}

impl TeacherNetwork {
    pub fn new(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        if w1.shape() != (TEACHER_HIDDEN, TEACHER_INPUT_DIM) {
            return Err(MixdynError::DimensionMismatch {
                expected: TEACHER_HIDDEN * TEACHER_INPUT_DIM,
                found: w1.len(),
            });
        }
        if w2.shape() != (1, TEACHER_HIDDEN) {
            return Err(MixdynError::DimensionMismatch {
                expected: TEACHER_HIDDEN,
                found: w2.len(),
            });
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    /// Panics if `x.len() != 10`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(
            x.len(),
            TEACHER_INPUT_DIM,
            "teacher input must have 10 entries"
        );
        let mut out = 0.0;
        for h in 0..TEACHER_HIDDEN {
            let pre: f64 = (0..TEACHER_INPUT_DIM).map(|c| self.w1[(h, c)] * x[c]).sum();
            out += self.w2[(0, h)] * pre.tanh();
        }
        out
    }

    /// `Σ|w2|`, a bound on `|teacher(x)|`.
    pub fn output_bound(&self) -> f64 {
        self.w2.iter().map(|v| v.abs()).sum()
    }
}

/// Teacher with i.i.d. `N(0, 1)` weights.
pub fn make_teacher(rng: &mut RandomStream) -> TeacherNetwork {
    make_teacher_scaled(rng, 1.0)
}

/// Teacher with i.i.d. `N(0, scale²)` weights.
pub fn make_teacher_scaled(rng: &mut RandomStream, scale: f64) -> TeacherNetwork {
    let w1 = rng.normal_matrix(TEACHER_HIDDEN, TEACHER_INPUT_DIM, scale);
    let w2 = rng.normal_matrix(1, TEACHER_HIDDEN, scale);
    TeacherNetwork { w1, w2 }
}

/// `n` inputs `X ~ N(0, I_10)` labelled by the teacher.
pub fn generate_dataset(
    teacher: &TeacherNetwork,
    n: usize,
    rng: &mut RandomStream,
) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(MixdynError::EmptyDataset);
    }
    let features = rng.normal_matrix(n, TEACHER_INPUT_DIM, 1.0);
    let targets = (0..n)
        .map(|i| {
            let row: Vec<f64> = features.row(i).iter().copied().collect();
            teacher.eval(&row)
        })
        .collect();
    LabeledDataset::regression(features, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentMode {
    Erm,
    MixupFixed {
        lambda: f64,
    },
    MixupBeta {
        alpha: f64,
    },
    /// Beta Mixup for `switch_epoch` epochs, then ERM.
    Switch {
        alpha: f64,
        switch_epoch: usize,
    },
}

impl ExperimentMode {
    pub fn schedule(&self) -> Result<EpochSchedule> {
        Ok(match *self {
            ExperimentMode::Erm => EpochSchedule::Constant(MixupConfig::erm()),
            ExperimentMode::MixupFixed { lambda } => {
                EpochSchedule::Constant(MixupConfig::fixed(lambda)?)
            }
            ExperimentMode::MixupBeta { alpha } => {
                EpochSchedule::Constant(MixupConfig::beta(alpha)?)
            }
            ExperimentMode::Switch {
                alpha,
                switch_epoch,
            } => EpochSchedule::SwitchToErm {
                before: MixupConfig::beta(alpha)?,
                switch_epoch,
            },
        })
    }

    pub fn label(&self) -> String {
        match *self {
            ExperimentMode::Erm => "erm".into(),
            ExperimentMode::MixupFixed { lambda } => format!("mixup_fixed_{lambda}"),
            ExperimentMode::MixupBeta { alpha } => format!("mixup_beta_{alpha}"),
            ExperimentMode::Switch {
                alpha,
                switch_epoch,
            } => format!("switch_{alpha}_at_{switch_epoch}"),
        }
    }
}

fn default_n() -> usize {
    20
}
fn default_d() -> usize {
    100
}
fn default_eta() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    20_000
}
fn default_test_size() -> usize {
    2000
}
fn default_teacher_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Student width.
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the entries of `θ_0`.
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub pairing: PairingScheme,
    /// Standard deviation of the teacher weights.
    #[serde(default = "default_teacher_scale")]
    pub teacher_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::Erm,
            n: default_n(),
            d: default_d(),
            eta: default_eta(),
            epochs: default_epochs(),
            test_size: default_test_size(),
            seed: 0,
            xi: 0.0,
            pairing: PairingScheme::AllPairs,
            teacher_scale: default_teacher_scale(),
        }
    }
}

impl ExperimentConfig {
    pub fn with_mode(mode: ExperimentMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(MixdynError::InvalidParameter(msg.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad("eta must be positive and finite");
        }
        if self.test_size == 0 {
            return bad("test_size must be at least 1");
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return bad("xi must be nonnegative");
        }
        if !(self.teacher_scale.is_finite() && self.teacher_scale > 0.0) {
            return bad("teacher_scale must be positive");
        }
        self.mode.schedule().map(|_| ())
    }
}

/// Everything an experiment draws before training starts.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub teacher: TeacherNetwork,
    pub train: LabeledDataset,
    pub model: RandomFeatureModel,
    pub test: HeldOutSet,
}

impl ExperimentSetup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let teacher = make_teacher_scaled(
            &mut RandomStream::substream(seed, streams::TEACHER),
            config.teacher_scale,
        );
        let train = generate_dataset(
            &teacher,
            config.n,
            &mut RandomStream::substream(seed, streams::TRAIN),
        )?;
        let mut student_rng = RandomStream::substream(seed, streams::STUDENT);
        let weights = student_rng.normal_matrix(
            config.d,
            TEACHER_INPUT_DIM,
            (1.0 / TEACHER_INPUT_DIM as f64).sqrt(),
        );
        let theta0 = if config.xi > 0.0 {
            RandomStream::substream(seed, streams::INIT).normal_vector(config.d, config.xi)
        } else {
            DVector::zeros(config.d)
        };
        let model = RandomFeatureModel::new(weights, theta0)?;
        let test_data = generate_dataset(
            &teacher,
            config.test_size,
            &mut RandomStream::substream(seed, streams::TEST),
        )?;
        let test = HeldOutSet::new(&model, test_data.features(), regression_targets(&test_data))?;
        Ok(Self {
            teacher,
            train,
            model,
            test,
        })
    }
}

fn regression_targets(ds: &LabeledDataset) -> Vec<f64> {
    match ds.labels() {
        Labels::Targets(t) => t.clone(),
        Labels::Classes { .. } => unreachable!("teacher datasets are regression sets"),
    }
}

/// Trains the student described by `config` and records per-epoch train
/// MSE, test MSE and gradient norm.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Trajectory> {
    let setup = ExperimentSetup::new(config)?;
    let mut model = setup.model.clone();
    let settings = GdSettings {
        eta: config.eta,
        epochs: config.epochs,
        pairing: config.pairing,
        record_theta: false,
    };
    let mut rng = RandomStream::substream(config.seed, streams::MIXUP);
    let targets = regression_targets(&setup.train);
    let mut traj = gd_trajectory(
        &mut model,
        setup.train.features(),
        &targets,
        &config.mode.schedule()?,
        &settings,
        &mut rng,
        &setup.test,
    )?;
    traj.push_metadata("mode", config.mode.label());
    traj.push_metadata("seed", config.seed);
    traj.push_metadata("biases", "none");
    traj.push_metadata("student_first_layer", "N(0, 1/10), frozen");
    Ok(traj)
}

/// Index of the minimum of the centred moving average of `series`; windows
/// are truncated at the ends, ties go to the earliest index.
pub fn detect_turning_point(series: &[f64], window: usize) -> Result<usize> {
    if window == 0 {
        return Err(MixdynError::InvalidParameter(
            "window must be at least 1".into(),
        ));
    }
    if series.len() < window {
        return Err(MixdynError::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    let mut best = (0, f64::INFINITY);
    for i in 0..series.len() {
        let lo = i.saturating_sub(before);
        let hi = (i + after).min(series.len() - 1);
        let avg = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64;
        if avg < best.1 {
            best = (i, avg);
        }
    }
    Ok(best.0)
}

/// Epoch (number of updates) at which the smoothed test risk is lowest.
pub fn turning_epoch(traj: &Trajectory, window: usize) -> Result<usize> {
    let idx = detect_turning_point(&traj.test_risk, window)?;
    Ok(traj.times[idx] as usize)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Median turning epoch of fixed-λ Mixup runs for each λ, over `seeds`.
pub fn ablation_lambda(
    lambdas: &[f64],
    base: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<(f64, f64)>> {
    let jobs: Vec<(usize, u64)> = (0..lambdas.len())
        .flat_map(|li| seeds.iter().map(move |&s| (li, s)))
        .collect();
    let epochs: Vec<Result<(usize, f64)>> = jobs
        .par_iter()
        .map(|&(li, seed)| {
            let config = ExperimentConfig {
                mode: ExperimentMode::MixupFixed {
                    lambda: lambdas[li],
                },
                seed,
                ..*base
            };
            let traj = run_experiment(&config)?;
            Ok((li, turning_epoch(&traj, DEFAULT_TURNING_WINDOW)? as f64))
        })
        .collect();
    let mut grouped = vec![Vec::new(); lambdas.len()];
    for r in epochs {
        let (li, e) = r?;
        grouped[li].push(e);
    }
    Ok(lambdas
        .iter()
        .zip(grouped.iter_mut())
        .map(|(&l, es)| (l, median(es)))
        .collect())
}

/// Runs a pure-Mixup and a switching configuration on the same seed.
pub fn gradient_norm_comparison(
    config_mixup: &ExperimentConfig,
    config_switch: &ExperimentConfig,
) -> Result<(Trajectory, Trajectory)> {
    if config_mixup.seed != config_switch.seed {
        return Err(MixdynError::InvalidParameter(
            "paired runs must share a seed".into(),
        ));
    }
    if !matches!(config_switch.mode, ExperimentMode::Switch { .. }) {
        return Err(MixdynError::InvalidParameter(
            "second configuration must switch to ERM".into(),
        ));
    }
    let (a, b) = rayon::join(
        || run_experiment(config_mixup),
        || run_experiment(config_switch),
    );
    Ok((a?, b?))
}

/// Gradient-flow study on a teacher-labelled fixed-λ Mixup set: closed-form
/// trajectories from several initialisations scored by Monte Carlo against
/// the population-risk bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_flow_lambda")]
    pub lambda: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Standard deviation of the entries of `θ_0`.
    #[serde(default = "default_flow_xi")]
    pub xi: f64,
    #[serde(default = "default_theta0_draws")]
    pub theta0_draws: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Noise constant; `None` uses `max Z²`, `0` trains on clean targets.
    #[serde(default)]
    pub c2: Option<f64>,
    /// Feature-norm constant; `None` uses `2 max |φ(x)|²` over the Monte-Carlo probes.
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default = "default_teacher_scale")]
    pub teacher_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_flow_lambda() -> f64 {
    0.5
}
fn default_flow_xi() -> f64 {
    0.1
}
fn default_theta0_draws() -> usize {
    32
}
fn default_mc_samples() -> usize {
    10_000
}
fn default_grid_points() -> usize {
    crate::dynamics::DEFAULT_GRID_POINTS
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            d: default_d(),
            lambda: default_flow_lambda(),
            eta: default_eta(),
            xi: default_flow_xi(),
            theta0_draws: default_theta0_draws(),
            mc_samples: default_mc_samples(),
            grid_points: default_grid_points(),
            c2: None,
            c1: None,
            teacher_scale: default_teacher_scale(),
            seed: 0,
        }
    }
}

/// One time point of a [`FlowStudy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRow {
    pub t: f64,
    /// Root-mean-square of `|θ_t - θ*|` over the initialisations.
    pub theta_dist_to_star: f64,
    /// Population risk `R_t`, averaged over the initialisations.
    pub mc_risk: f64,
    pub mc_std_err: f64,
    /// Paired estimate of `R_t - R*`.
    pub excess_risk: f64,
    pub excess_std_err: f64,
    pub risk_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStudy {
    pub rows: Vec<FlowRow>,
    pub r_star: f64,
    pub r_star_std_err: f64,
    pub c1: f64,
    pub c2: f64,
    pub zeta: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub bound_turning_point: Option<f64>,
}

impl FlowStudy {
    /// Index of the smallest Monte-Carlo risk, earliest on ties.
    pub fn argmin_risk(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.rows.iter().enumerate() {
            if r.mc_risk < self.rows[best].mc_risk {
                best = i;
            }
        }
        best
    }

    /// Whether the risk minimum lies strictly inside the time grid.
    pub fn has_interior_minimum(&self) -> bool {
        let i = self.argmin_risk();
        i > 0 && i + 1 < self.rows.len()
    }
}

pub mod flow_streams {
    pub const TEACHER: u64 = 10;
    pub const TRAIN: u64 = 11;
    pub const STUDENT: u64 = 12;
    pub const INIT: u64 = 13;
    pub const POPULATION: u64 = 14;
}

/// Builds the instance described by `config`, evaluates the closed-form flow
/// on `{0} ∪` a log grid spanning `[0.01/(ημ_max), 10/(ημ_min)]`, and scores
/// each point by Monte Carlo.
pub fn flow_study(config: &FlowConfig) -> Result<FlowStudy> {
    use crate::dynamics::{bound_turning_point, feature_matrix, mean_and_stderr};
    use crate::dynamics::{
        risk_bound, time_grid, ClosedFormFlow, PopulationSample, RiskBoundParams,
        SyntheticRegressionSet,
    };

    if config.theta0_draws == 0 {
        return Err(MixdynError::InvalidParameter(
            "theta0_draws must be at least 1".into(),
        ));
    }
    if !(config.eta.is_finite() && config.eta > 0.0) || !(config.xi.is_finite() && config.xi >= 0.0)
    {
        return Err(MixdynError::InvalidParameter(
            "eta must be positive and xi nonnegative".into(),
        ));
    }
    let seed = config.seed;
    let teacher = make_teacher_scaled(
        &mut RandomStream::substream(seed, flow_streams::TEACHER),
        config.teacher_scale,
    );
    let train = generate_dataset(
        &teacher,
        config.n,
        &mut RandomStream::substream(seed, flow_streams::TRAIN),
    )?;
    let targets = regression_targets(&train);
    let weights = RandomStream::substream(seed, flow_streams::STUDENT).normal_matrix(
        config.d,
        TEACHER_INPUT_DIM,
        (1.0 / TEACHER_INPUT_DIM as f64).sqrt(),
    );
    let model = RandomFeatureModel::zero_init(weights);
    let synth = SyntheticRegressionSet::fixed_lambda(
        train.features(),
        &targets,
        |x| teacher.eval(x),
        config.lambda,
    )?;
    let max_z2 = synth.max_noise_sq();
    let (noise, c2) = match config.c2 {
        None => (synth.noise.clone(), max_z2),
        Some(0.0) => (DVector::zeros(synth.len()), 0.0),
        Some(c) if c >= max_z2 => (synth.noise.clone(), c),
        Some(c) => {
            return Err(MixdynError::InvalidParameter(format!(
                "c2 = {c} is below the largest squared Mixup noise {max_z2}"
            )))
        }
    };
    let phi = feature_matrix(&model, &synth.features)?;
    let flow = ClosedFormFlow::new(
        &phi,
        &synth.clean_targets,
        &noise,
        &DVector::zeros(config.d),
        config.eta,
    )?;

    let mut init_rng = RandomStream::substream(seed, flow_streams::INIT);
    let theta0s: Vec<DVector<f64>> = (0..config.theta0_draws)
        .map(|_| init_rng.normal_vector(config.d, config.xi))
        .collect();
    let population = PopulationSample::draw(
        &model,
        |x| teacher.eval(x),
        config.mc_samples,
        &mut RandomStream::substream(seed, flow_streams::POPULATION),
    )?;
    let (r_star, r_star_std_err) = population.risk(flow.theta_star());
    let c1 = config.c1.unwrap_or(2.0 * population.max_feature_norm_sq());
    let params = RiskBoundParams::for_flow(&flow, &noise, c1, config.xi, r_star)?.with_c2(c2)?;

    let spectrum = flow.system().spectrum();
    let (mu_min, mu_max) = (spectrum.min_eigenvalue(), spectrum.max_eigenvalue());
    let grid = time_grid(
        0.01 / (config.eta * mu_max),
        10.0 / (config.eta * mu_min),
        config.grid_points,
    )?;
    let mut rows = Vec::with_capacity(grid.len());
    for &t in &grid {
        let thetas = flow.thetas_at(t, &theta0s)?;
        let mut per_sample = DVector::zeros(population.len());
        for th in &thetas {
            per_sample += population.squared_errors(th);
        }
        per_sample /= thetas.len() as f64;
        let (mc_risk, mc_std_err) = mean_and_stderr(per_sample.as_slice());
        let (excess_risk, excess_std_err) = population.excess_risk(&thetas, flow.theta_star());
        let dist2 = thetas
            .iter()
            .map(|th| (th - flow.theta_star()).norm_squared())
            .sum::<f64>()
            / thetas.len() as f64;
        rows.push(FlowRow {
            t,
            theta_dist_to_star: dist2.sqrt(),
            mc_risk,
            mc_std_err,
            excess_risk,
            excess_std_err,
            risk_bound: risk_bound(&params, t),
        });
    }
    Ok(FlowStudy {
        rows,
        r_star,
        r_star_std_err,
        c1,
        c2,
        zeta: params.zeta(),
        mu_min,
        mu_max,
        bound_turning_point: bound_turning_point(&params).ok(),
    })
}
