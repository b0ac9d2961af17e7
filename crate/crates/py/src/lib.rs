//! Python bindings for `mixdyn-core`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists of floats.
//! Core errors are raised as `mixdyn.MixdynError`, a `ValueError` subclass.

use mixdyn_core::dynamics::{self, Trajectory};
use mixdyn_core::mixup::{self, LabeledDataset, MixupConfig};
use mixdyn_core::noise::{self, CoefficientOrder, GroundTruthConditional, PairCase};
use mixdyn_core::numerics::RandomStream;
use mixdyn_core::spectral::{self, EdgeMode};
use mixdyn_core::teacher_student::{self, ExperimentConfig, ExperimentMode, FlowConfig};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mixdyn, MixdynError, PyValueError);

fn err(e: mixdyn_core::MixdynError) -> PyErr {
    MixdynError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn case_name(case: PairCase) -> &'static str {
    match case {
        PairCase::SamePair => "same_pair",
        PairCase::CrossPair => "cross_pair",
        PairCase::Intrusion => "intrusion",
    }
}

/// `(C - 1) / (2C)`: the Beta(1,1) Mixup cross-entropy floor on balanced data.
#[pyfunction]
fn mixup_ce_lower_bound(class_count: usize) -> f64 {
    mixup::mixup_ce_lower_bound(class_count)
}

/// `E[H(λ, 1 - λ)]` for `λ ~ Beta(alpha, alpha)`.
#[pyfunction]
fn expected_pair_entropy(alpha: f64) -> PyResult<f64> {
    mixup::expected_pair_entropy(alpha).map_err(err)
}

/// Mean Mixup cross-entropy of the identity predictor on one-hot balanced
/// data, over `pairs` sampled pairs with `λ ~ Beta(alpha, alpha)`.
#[pyfunction]
#[pyo3(signature = (class_count, per_class=10, alpha=1.0, pairs=100_000, seed=0))]
fn identity_mixup_loss(
    class_count: usize,
    per_class: usize,
    alpha: f64,
    pairs: usize,
    seed: u64,
) -> PyResult<f64> {
    let ds = mixup::one_hot_balanced_dataset(class_count, per_class).map_err(err)?;
    let config = MixupConfig::beta(alpha).map_err(err)?;
    let mut rng = RandomStream::new(seed);
    let synth = mixup::build_synthetic_sampled(&ds, &config, pairs, &mut rng).map_err(err)?;
    mixup::empirical_mixup_loss(|x| x.to_vec(), &synth).map_err(err)
}

/// Ground-truth conditional `P(Y | X = x)`.
#[pyclass(frozen, name = "Conditional")]
struct PyConditional(GroundTruthConditional);

#[pymethods]
impl PyConditional {
    /// `softmax(W x)`, `W` of shape `C x d0`.
    #[staticmethod]
    fn linear_softmax(weights: Vec<Vec<f64>>) -> PyResult<Self> {
        GroundTruthConditional::linear_softmax(matrix(&weights)?)
            .map(Self)
            .map_err(err)
    }

    /// `W x + b`; columns of `W` sum to zero and `b` sums to one.
    #[staticmethod]
    fn affine_probability(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> PyResult<Self> {
        GroundTruthConditional::affine_probability(matrix(&weights)?, vector(&bias))
            .map(Self)
            .map_err(err)
    }

    /// One-hot on the region of `x[axis]` delimited by `boundaries`.
    #[staticmethod]
    #[pyo3(signature = (class_count, boundaries, region_labels, axis=0))]
    fn piecewise_region(
        class_count: usize,
        boundaries: Vec<f64>,
        region_labels: Vec<usize>,
        axis: usize,
    ) -> PyResult<Self> {
        GroundTruthConditional::piecewise_region(class_count, axis, boundaries, region_labels)
            .map(Self)
            .map_err(err)
    }

    /// `softmax(-|x - c_j|² / (2 h²))` over class centres `c_j` (rows).
    #[staticmethod]
    fn radial_posterior(centers: Vec<Vec<f64>>, bandwidth: f64) -> PyResult<Self> {
        GroundTruthConditional::radial_posterior(matrix(&centers)?, bandwidth)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.0.class_count()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.evaluate(&x).map_err(err)
    }

    /// Total variation between the Mixup and true conditionals at the mixed
    /// point, the sup-term lower bound and both hard labels.
    #[pyo3(signature = (x, x2, lam, matched=true))]
    fn noise_lower_bound<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        x2: Vec<f64>,
        lam: f64,
        matched: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let order = if matched {
            CoefficientOrder::Matched
        } else {
            CoefficientOrder::Swapped
        };
        let r = noise::noise_lower_bound(&self.0, &x, &x2, lam, order).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("tv", r.tv)?;
        d.set_item("sup_bound", r.sup_bound)?;
        d.set_item("mixup_hard_label", r.mixup_hard_label)?;
        d.set_item("truth_hard_label", r.truth_hard_label)?;
        d.set_item("case", case_name(r.case))?;
        d.set_item("noisy", r.is_noisy())?;
        Ok(d)
    }

    /// Fraction of the `n²` ordered pairs of `points` whose Mixup hard label
    /// disagrees with the true hard label. `labels` default to the true argmax.
    #[pyo3(signature = (points, lam, labels=None))]
    fn noisy_fraction<'py>(
        &self,
        py: Python<'py>,
        points: Vec<Vec<f64>>,
        lam: f64,
        labels: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let labels = match labels {
            Some(l) => l,
            None => points
                .iter()
                .map(|p| self.0.evaluate(p).map(|q| noise::argmax_low(&q)))
                .collect::<Result<_, _>>()
                .map_err(err)?,
        };
        let ds = LabeledDataset::classification(matrix(&points)?, labels, self.0.class_count())
            .map_err(err)?;
        let r = noise::noisy_fraction(&ds, &self.0, lam).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("fraction", r.fraction)?;
        d.set_item("noisy", r.noisy)?;
        d.set_item("same_pair", r.cases.same_pair)?;
        d.set_item("cross_pair", r.cases.cross_pair)?;
        d.set_item("intrusion", r.cases.intrusion)?;
        Ok(d)
    }
}

/// `θ_t` of the gradient flow on `(1/2m)|Φᵀθ - y_clean - z|²`, `Φ` of shape `d x m`.
#[pyfunction]
fn closed_form_theta(
    phi: Vec<Vec<f64>>,
    y_clean: Vec<f64>,
    z: Vec<f64>,
    theta0: Vec<f64>,
    eta: f64,
    t: f64,
) -> PyResult<Vec<f64>> {
    dynamics::closed_form_theta(
        &matrix(&phi)?,
        &vector(&y_clean),
        &vector(&z),
        &vector(&theta0),
        eta,
        t,
    )
    .map(|v| v.as_slice().to_vec())
    .map_err(err)
}

/// Least-squares head `(ΦΦᵀ)⁻¹ Φ y`; requires `m > d`.
#[pyfunction]
fn pseudo_inverse_apply(phi: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Vec<f64>> {
    dynamics::pseudo_inverse_apply(&matrix(&phi)?, &vector(&y))
        .map(|v| v.as_slice().to_vec())
        .map_err(err)
}

/// `0` followed by `points - 1` log-spaced times in `[t_min, t_max]`.
#[pyfunction]
fn time_grid(t_min: f64, t_max: f64, points: usize) -> PyResult<Vec<f64>> {
    dynamics::time_grid(t_min, t_max, points).map_err(err)
}

/// Index of the minimum of the centred moving average of `series`.
#[pyfunction]
#[pyo3(signature = (series, window=5))]
fn detect_turning_point(series: Vec<f64>, window: usize) -> PyResult<usize> {
    teacher_student::detect_turning_point(&series, window).map_err(err)
}

#[pyclass(frozen, name = "Trajectory")]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn train_risk(&self) -> Vec<f64> {
        self.0.train_risk.clone()
    }

    #[getter]
    fn test_risk(&self) -> Vec<f64> {
        self.0.test_risk.clone()
    }

    #[getter]
    fn gradient_norm(&self) -> Vec<f64> {
        self.0.gradient_norm.clone()
    }

    #[getter]
    fn metadata(&self) -> Vec<(String, String)> {
        self.0.metadata.clone()
    }

    /// `(epoch index, risk)` of the smallest test risk.
    fn min_test_risk(&self) -> Option<(usize, f64)> {
        self.0.min_test_risk()
    }

    #[pyo3(signature = (window=5))]
    fn turning_epoch(&self, window: usize) -> PyResult<usize> {
        teacher_student::turning_epoch(&self.0, window).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Teacher-student training run. `mode` is one of `erm`, `mixup_fixed`
/// (uses `lam`), `mixup_beta` (uses `alpha`) or `switch` (uses `alpha` and
/// `switch_epoch`).
#[pyfunction]
#[pyo3(signature = (
    mode="erm", lam=0.5, alpha=1.0, switch_epoch=0, n=20, d=100, eta=0.1,
    epochs=20_000, test_size=2000, seed=0, xi=0.0, teacher_scale=1.0
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    mode: &str,
    lam: f64,
    alpha: f64,
    switch_epoch: usize,
    n: usize,
    d: usize,
    eta: f64,
    epochs: usize,
    test_size: usize,
    seed: u64,
    xi: f64,
    teacher_scale: f64,
) -> PyResult<PyTrajectory> {
    let mode = match mode {
        "erm" => ExperimentMode::Erm,
        "mixup_fixed" => ExperimentMode::MixupFixed { lambda: lam },
        "mixup_beta" => ExperimentMode::MixupBeta { alpha },
        "switch" => ExperimentMode::Switch {
            alpha,
            switch_epoch,
        },
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let config = ExperimentConfig {
        mode,
        n,
        d,
        eta,
        epochs,
        test_size,
        seed,
        xi,
        teacher_scale,
        ..ExperimentConfig::default()
    };
    teacher_student::run_experiment(&config)
        .map(PyTrajectory)
        .map_err(err)
}

#[pyclass(frozen, name = "FlowStudy")]
struct PyFlowStudy(teacher_student::FlowStudy);

#[pymethods]
impl PyFlowStudy {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn mc_risk(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.mc_risk).collect()
    }

    #[getter]
    fn excess_risk(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.excess_risk).collect()
    }

    #[getter]
    fn risk_bound(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.risk_bound).collect()
    }

    #[getter]
    fn theta_dist_to_star(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.theta_dist_to_star).collect()
    }

    #[getter]
    fn r_star(&self) -> f64 {
        self.0.r_star
    }

    #[getter]
    fn c1(&self) -> f64 {
        self.0.c1
    }

    #[getter]
    fn c2(&self) -> f64 {
        self.0.c2
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.0.zeta
    }

    #[getter]
    fn mu_min(&self) -> f64 {
        self.0.mu_min
    }

    #[getter]
    fn mu_max(&self) -> f64 {
        self.0.mu_max
    }

    #[getter]
    fn bound_turning_point(&self) -> Option<f64> {
        self.0.bound_turning_point
    }

    fn has_interior_minimum(&self) -> bool {
        self.0.has_interior_minimum()
    }
}

/// Closed-form gradient flow on a teacher-labelled fixed-λ Mixup set,
/// scored by Monte Carlo against the population-risk bound.
#[pyfunction]
#[pyo3(signature = (
    n=20, d=100, lam=0.5, eta=0.1, xi=0.1, theta0_draws=32, mc_samples=10_000,
    grid_points=dynamics::DEFAULT_GRID_POINTS, c1=None, c2=None, teacher_scale=1.0, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn flow_study(
    n: usize,
    d: usize,
    lam: f64,
    eta: f64,
    xi: f64,
    theta0_draws: usize,
    mc_samples: usize,
    grid_points: usize,
    c1: Option<f64>,
    c2: Option<f64>,
    teacher_scale: f64,
    seed: u64,
) -> PyResult<PyFlowStudy> {
    let config = FlowConfig {
        n,
        d,
        lambda: lam,
        eta,
        xi,
        theta0_draws,
        mc_samples,
        grid_points,
        c1,
        c2,
        teacher_scale,
        seed,
    };
    teacher_student::flow_study(&config)
        .map(PyFlowStudy)
        .map_err(err)
}

/// Marchenko-Pastur law with aspect ratio `gamma`. `linear_edges` uses the
/// edges `(1 ± γ)²`, which do not integrate to one.
#[pyclass(frozen, name = "MpLaw")]
struct PyMpLaw(spectral::MpLaw);

#[pymethods]
impl PyMpLaw {
    #[new]
    #[pyo3(signature = (gamma, linear_edges=false))]
    fn new(gamma: f64, linear_edges: bool) -> PyResult<Self> {
        let mode = if linear_edges {
            EdgeMode::LinearGamma
        } else {
            EdgeMode::Standard
        };
        spectral::MpLaw::new(gamma, mode).map(Self).map_err(err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    fn edges(&self) -> (f64, f64) {
        self.0.edges()
    }

    fn density(&self, mu: f64) -> f64 {
        self.0.density(mu)
    }

    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        self.0.cdf(x).map_err(err)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.0.quantile(p).map_err(err)
    }

    /// Kolmogorov-Smirnov distance of `eigenvalues` from the law.
    fn ks_distance(&self, eigenvalues: Vec<f64>) -> PyResult<f64> {
        spectral::ks_distance(&eigenvalues, &self.0).map_err(err)
    }
}

/// Ascending eigenvalues of `ΦΦᵀ/m` for `Φ` of shape `d x m`.
#[pyfunction]
fn empirical_spectrum(phi: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    spectral::empirical_spectrum(&matrix(&phi)?).map_err(err)
}

#[pymodule]
pub fn mixdyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MixdynError", m.py().get_type::<MixdynError>())?;
    m.add_class::<PyConditional>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyFlowStudy>()?;
    m.add_class::<PyMpLaw>()?;
    m.add_function(wrap_pyfunction!(mixup_ce_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(expected_pair_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(identity_mixup_loss, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_theta, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_inverse_apply, m)?)?;
    m.add_function(wrap_pyfunction!(time_grid, m)?)?;
    m.add_function(wrap_pyfunction!(detect_turning_point, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(flow_study, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_spectrum, m)?)?;
    Ok(())
}
