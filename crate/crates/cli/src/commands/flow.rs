//! Closed-form gradient flow scored against the population-risk bound.

use mixdyn_core::teacher_student::{flow_study, FlowConfig, FlowStudy};

use crate::error::CliResult;
use crate::output::{num, OutputDir};

pub const FLOW_HEADER: [&str; 7] = [
    "t",
    "theta_dist_to_star",
    "mc_risk",
    "mc_std_err",
    "risk_bound",
    "excess_risk",
    "excess_std_err",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "r_star",
    "r_star_std_err",
    "c1",
    "c2",
    "zeta",
    "mu_min",
    "mu_max",
    "bound_turning_point",
    "argmin_t",
    "interior_minimum",
];

fn summary(study: &FlowStudy) -> Vec<String> {
    vec![
        num(study.r_star),
        num(study.r_star_std_err),
        num(study.c1),
        num(study.c2),
        num(study.zeta),
        num(study.mu_min),
        num(study.mu_max),
        study.bound_turning_point.map(num).unwrap_or_default(),
        num(study.rows[study.argmin_risk()].t),
        study.has_interior_minimum().to_string(),
    ]
}

pub fn run(config: &FlowConfig, out: &mut OutputDir) -> CliResult<()> {
    let study = flow_study(config)?;
    let rows = study.rows.iter().map(|r| {
        vec![
            num(r.t),
            num(r.theta_dist_to_star),
            num(r.mc_risk),
            num(r.mc_std_err),
            num(r.risk_bound),
            num(r.excess_risk),
            num(r.excess_std_err),
        ]
    });
    out.write_csv("flow.csv", &FLOW_HEADER, rows)?;
    out.write_csv("flow_summary.csv", &SUMMARY_HEADER, [summary(&study)])
}
