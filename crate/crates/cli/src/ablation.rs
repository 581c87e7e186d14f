use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, Strategy};
use crate::runner::{prepare, resolve_config, run_prepared, write_outputs, Experiment};
use crate::summary::Summary;
use crate::HarnessError;

/// Paired summaries of the optional-step ablation and their signed
/// differences (with − without).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub with_optional: Summary,
    pub without_optional: Summary,
    pub mean_accuracy_difference: f64,
    pub stacked_difference: Option<f64>,
    pub probe_difference: Option<f64>,
    pub moe_difference: Option<f64>,
    /// Distinct phases logged per visit in each arm.
    pub phases_with: usize,
    pub phases_without: usize,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

fn phases_per_visit(e: &Experiment) -> usize {
    e.result.visits.iter().map(|v| v.phases.len()).max().unwrap_or(0)
}

/// Runs `li` as configured and `li_no_optional` with twice the rounds,
/// from the same partition and initial parameters. The probe and stacked
/// global models are always evaluated. Each arm writes its outputs to a
/// subdirectory of the output directory, next to `ablation.json`.
pub fn run_optional_step_ablation(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(AblationReport, Experiment, Experiment), HarnessError> {
    if cfg.strategy != Strategy::Li {
        return Err(HarnessError::Config("the ablation needs strategy li".into()));
    }
    if cfg.schedule.full_epochs == 0 {
        return Err(HarnessError::Config("the ablation needs full_epochs ≥ 1 for the with-optional arm".into()));
    }
    let mut with = resolve_config(cfg, base_dir);
    with.global.probe = true;
    with.global.stacked = true;
    let mut without = with.clone();
    without.strategy = Strategy::LiNoOptional;
    without.schedule.full_epochs = 0;
    without.schedule.rounds = with.schedule.rounds * 2;
    let root = with.output_dir.clone();
    with.output_dir = root.join("with_optional");
    without.output_dir = root.join("without_optional");

    // one preparation serves both arms: partition, splits and init are shared
    let base = prepare(&with)?;
    let a = run_prepared(with, &mut base.clone())?;
    let b = run_prepared(without, &mut base.clone())?;
    let report = AblationReport {
        mean_accuracy_difference: a.summary.mean_accuracy - b.summary.mean_accuracy,
        stacked_difference: diff(a.summary.global.stacked, b.summary.global.stacked),
        probe_difference: diff(a.summary.global.probe, b.summary.global.probe),
        moe_difference: diff(a.summary.global.moe, b.summary.global.moe),
        phases_with: phases_per_visit(&a),
        phases_without: phases_per_visit(&b),
        with_optional: a.summary.clone(),
        without_optional: b.summary.clone(),
    };
    for e in [&a, &b] {
        fs::create_dir_all(&e.config.output_dir)?;
        write_outputs(e, &e.config.output_dir)?;
    }
    fs::write(root.join("ablation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok((report, a, b))
}
