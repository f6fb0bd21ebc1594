//! `gradcheck`: backprop against central differences over random small networks.

use precip_core::nn::{grad_check_matrix, GradCheckCase, Loss};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub fault_injected: bool,
    pub max_rel_error: f64,
    pub passed: bool,
    pub cases: Vec<GradCheckCase>,
}

pub fn run(cfg: &RunConfig, inject_fault: bool) -> CliResult<GradCheckReport> {
    let g = &cfg.gradcheck;
    let cases = grad_check_matrix(g.nets, cfg.seed, g.step, inject_fault)?;
    let max = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let passed = !cases.is_empty() && cases.iter().all(|c| c.max_rel_error < g.tolerance);
    for (i, c) in cases.iter().enumerate() {
        let loss = match c.loss {
            Loss::CrossEntropy => "cross_entropy".to_string(),
            Loss::Lp(p) => format!("l{p}"),
        };
        println!(
            "net {i:2}: {} layers {:?} bn={} loss={loss} params={} max_rel_error={:.3e}",
            c.n_layers, c.widths, c.batch_norm, c.n_params, c.max_rel_error
        );
    }
    println!("max relative error {max:.3e} ({})", if passed { "pass" } else { "fail" });
    let report = GradCheckReport {
        seed: cfg.seed,
        step: g.step,
        tolerance: g.tolerance,
        fault_injected: inject_fault,
        max_rel_error: max,
        passed,
        cases,
    };
    let dir = cfg.output_path();
    create_dir(&dir)?;
    write_json(&dir.join("gradcheck.json"), &report)?;
    if passed {
        Ok(report)
    } else {
        Err(CliError::GradCheck {
            max,
            tolerance: g.tolerance,
        })
    }
}
