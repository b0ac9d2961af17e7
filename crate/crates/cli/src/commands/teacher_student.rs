//! ERM, fixed-λ Mixup, Beta Mixup and Mixup-then-ERM on one teacher.

use mixdyn_core::dynamics::{PairingScheme, Trajectory};
use mixdyn_core::teacher_student::{
    run_experiment, turning_epoch, ExperimentConfig, ExperimentMode,
};
use mixdyn_core::MixdynError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::output::{num, OutputDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherStudentConfig {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub epochs: usize,
    pub test_size: usize,
    pub xi: f64,
    pub pairing: PairingScheme,
    pub teacher_scale: f64,
    pub fixed_lambda: f64,
    pub beta_alpha: f64,
    pub switch: bool,
    /// Defaults to the turning epoch of the Beta run.
    pub switch_epoch: Option<usize>,
    pub turning_window: usize,
}

impl Default for TeacherStudentConfig {
    fn default() -> Self {
        let base = ExperimentConfig::default();
        Self {
            seed: base.seed,
            n: base.n,
            d: base.d,
            eta: base.eta,
            epochs: base.epochs,
            test_size: base.test_size,
            xi: base.xi,
            pairing: base.pairing,
            teacher_scale: base.teacher_scale,
            fixed_lambda: 0.5,
            beta_alpha: 1.0,
            switch: true,
            switch_epoch: None,
            turning_window: mixdyn_core::teacher_student::DEFAULT_TURNING_WINDOW,
        }
    }
}

impl TeacherStudentConfig {
    pub fn experiment(&self, mode: ExperimentMode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            n: self.n,
            d: self.d,
            eta: self.eta,
            epochs: self.epochs,
            test_size: self.test_size,
            seed: self.seed,
            xi: self.xi,
            pairing: self.pairing,
            teacher_scale: self.teacher_scale,
        }
    }
}

/// Turning epoch, or `None` when the run is shorter than the window.
fn turning(traj: &Trajectory, window: usize) -> CliResult<Option<usize>> {
    match turning_epoch(traj, window) {
        Ok(e) => Ok(Some(e)),
        Err(MixdynError::SeriesTooShort { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["epoch", "train_mse", "test_mse", "grad_norm"];
pub const SUMMARY_HEADER: [&str; 7] = [
    "mode",
    "turning_epoch",
    "min_test_mse",
    "min_epoch",
    "final_test_mse",
    "final_grad_norm",
    "switch_epoch",
];

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    (0..traj.len())
        .map(|i| {
            vec![
                (traj.times[i] as usize).to_string(),
                num(traj.train_risk[i]),
                num(traj.test_risk[i]),
                num(traj.gradient_norm[i]),
            ]
        })
        .collect()
}

fn summary_row(
    name: &str,
    traj: &Trajectory,
    window: usize,
    switch_epoch: Option<usize>,
) -> CliResult<Option<Vec<String>>> {
    if traj.is_empty() {
        return Ok(None);
    }
    let (min_idx, min) = traj.min_test_risk().expect("nonempty trajectory");
    let last = traj.len() - 1;
    Ok(Some(vec![
        name.to_string(),
        turning(traj, window)?
            .map(|e| e.to_string())
            .unwrap_or_default(),
        num(min),
        (traj.times[min_idx] as usize).to_string(),
        num(traj.test_risk[last]),
        num(traj.gradient_norm[last]),
        switch_epoch.map(|e| e.to_string()).unwrap_or_default(),
    ]))
}

pub fn run(config: &TeacherStudentConfig, out: &mut OutputDir) -> CliResult<()> {
    if config.turning_window == 0 {
        return Err(
            MixdynError::InvalidParameter("turning_window must be at least 1".into()).into(),
        );
    }
    let modes = [
        ("erm", ExperimentMode::Erm),
        (
            "mixup_fixed",
            ExperimentMode::MixupFixed {
                lambda: config.fixed_lambda,
            },
        ),
        (
            "mixup_beta",
            ExperimentMode::MixupBeta {
                alpha: config.beta_alpha,
            },
        ),
    ];
    let runs: Vec<Trajectory> = modes
        .par_iter()
        .map(|(_, mode)| run_experiment(&config.experiment(*mode)))
        .collect::<Result<_, _>>()?;
    let mut named: Vec<(&str, Trajectory, Option<usize>)> = modes
        .iter()
        .zip(runs)
        .map(|((name, _), t)| (*name, t, None))
        .collect();

    if config.switch {
        let epoch = match config.switch_epoch {
            Some(e) => e,
            None => turning(&named[2].1, config.turning_window)?.unwrap_or(0),
        };
        let mode = ExperimentMode::Switch {
            alpha: config.beta_alpha,
            switch_epoch: epoch,
        };
        named.push((
            "switch",
            run_experiment(&config.experiment(mode))?,
            Some(epoch),
        ));
    }

    let mut summary = Vec::new();
    for (name, traj, switch_epoch) in &named {
        out.write_csv(
            &format!("{name}.csv"),
            &TRAJECTORY_HEADER,
            trajectory_rows(traj),
        )?;
        summary.extend(summary_row(
            name,
            traj,
            config.turning_window,
            *switch_epoch,
        )?);
    }
    out.write_csv("summary.csv", &SUMMARY_HEADER, summary)
}
