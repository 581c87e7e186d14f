use std::fs;
use std::path::{Path, PathBuf};

use ringfl::data::{
    gen_blobs, gen_multi_attribute, load_idx_limited, partition, split_local_train_test, DataError, Dataset, HeterogeneityConfig,
    LocalData, LocalSplit, PartitionPlan,
};
use ringfl::global::{collect_head_outputs, integrator_spec, probe_backbone, train_gating, train_integrator};
use ringfl::nn::{ModelSpec, ParamSet};
use ringfl::protocol::{
    build_nodes, evaluate_accuracy, fine_tune_heads, init_params, run_fedavg, run_isolated, run_li, run_per_batch_ring,
    Initialization, NoObserver, NodeState, NodeTargets, RunResult, SharedBackbone,
};
use ringfl::ring::{FaultScript, RingTopology};
use ringfl::seed::derive_seed;

use crate::config::{DatasetSource, ExperimentConfig, Strategy};
use crate::metrics::{emit_metrics, records_from_visits, MetricsRecord};
use crate::summary::{fingerprint, round_means, topology_summary, ClientSummary, GlobalSummary, Summary};
use crate::HarnessError;

/// Marker written into a pre-existing output directory when a run fails.
pub const FAILED_MARKER: &str = "FAILED";

/// Everything a strategy needs, built deterministically from the config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ModelSpec,
    pub dataset: Dataset,
    pub splits: Vec<LocalSplit>,
    pub init: Initialization,
    pub nodes: Vec<NodeState>,
    pub faults: FaultScript,
}

/// A finished run and the artifacts derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// The config as actually run, with paths resolved.
    pub config: ExperimentConfig,
    pub result: RunResult,
    pub summary: Summary,
    pub records: Vec<MetricsRecord>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Copy of `cfg` with data, fault-script and output paths resolved
/// against `base_dir`, and with the strategy's effective schedule.
pub fn resolve_config(cfg: &ExperimentConfig, base_dir: &Path) -> ExperimentConfig {
    let mut out = cfg.clone();
    if let DatasetSource::Idx { images, labels, .. } = &mut out.dataset {
        *images = resolve(base_dir, images);
        *labels = resolve(base_dir, labels);
    }
    out.fault_script = cfg.fault_script.as_deref().map(|p| resolve(base_dir, p));
    out.schedule = cfg.effective_schedule();
    out.output_dir = cfg.resolved_output_dir(base_dir);
    out
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    let seed = derive_seed(cfg.seed, "data");
    let ds = match &cfg.dataset {
        DatasetSource::Blobs { .. } => gen_blobs(&cfg.dataset.blobs_spec(seed).unwrap())?,
        DatasetSource::MultiAttribute { .. } => gen_multi_attribute(&cfg.dataset.attribute_spec(seed).unwrap())?,
        DatasetSource::Idx { images, labels, limit } => load_idx_limited(images, labels, *limit).map_err(DataError::from)?,
    };
    let spec = cfg.model.spec()?;
    if ds.dims() != spec.input_width() {
        return Err(HarnessError::Config(format!("data has {} features but the model takes {}", ds.dims(), spec.input_width())));
    }
    if let Some(k) = ds.num_classes() {
        if k > spec.output_width() {
            return Err(HarnessError::Config(format!("data has {k} classes but the model has {} outputs", spec.output_width())));
        }
    }
    Ok(ds)
}

/// Builds data, partition, splits, initial parameters and nodes for a
/// config whose paths are already resolved.
///
/// Class data is partitioned by the heterogeneity scheme. Attribute data
/// is not partitioned: one train/test split of all samples is shared by
/// every node, and node `c` is supervised by attribute `c`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let faults = match &cfg.fault_script {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Read { path: path.clone(), source })?;
            let script = FaultScript::parse(&text)?;
            script.validate(&RingTopology::healthy(cfg.clients)?)?;
            script
        }
        None => FaultScript::default(),
    };
    let dataset = load_dataset(cfg)?;
    let spec = cfg.model.spec()?;
    let split_seed = derive_seed(cfg.seed, "split");
    let (plan, targets) = match &cfg.heterogeneity {
        Some(scheme) => {
            let hc = HeterogeneityConfig { scheme: scheme.clone(), clients: cfg.clients, seed: derive_seed(cfg.seed, "partition") };
            let plan = partition(&dataset, &hc)?;
            (split_local_train_test(&dataset, &plan, cfg.test_fraction, split_seed)?, NodeTargets::Classes)
        }
        None => {
            let all = PartitionPlan { assignments: vec![(0..dataset.len()).collect()], splits: None };
            let one = split_local_train_test(&dataset, &all, cfg.test_fraction, split_seed)?;
            let split = one.splits.unwrap().remove(0);
            let plan = PartitionPlan {
                assignments: vec![all.assignments[0].clone(); cfg.clients],
                splits: Some(vec![split; cfg.clients]),
            };
            (plan, NodeTargets::TaskPerNode)
        }
    };
    let init = init_params(&spec, cfg.clients, cfg.seed);
    let nodes = build_nodes(&dataset, &plan, &init.heads, cfg.schedule.optimizer, targets, cfg.seed)?;
    Ok(Prepared { spec, dataset, splits: plan.splits.unwrap(), init, nodes, faults })
}

fn run_strategy(cfg: &ExperimentConfig, p: &mut Prepared) -> Result<RunResult, HarnessError> {
    let schedule = cfg.effective_schedule();
    let Prepared { spec, init, nodes, faults, .. } = p;
    let out = match cfg.strategy {
        Strategy::Li | Strategy::LiNoOptional | Strategy::MtlLi => {
            let backbone = SharedBackbone::new(init.backbone.clone(), schedule.optimizer);
            let topology = RingTopology::healthy(nodes.len())?;
            run_li(spec, nodes, backbone, &schedule, &topology, faults, &mut NoObserver)
        }
        Strategy::Fedavg => run_fedavg(spec, nodes, &init.backbone, &init.shared_head, &schedule),
        Strategy::Isolated => run_isolated(spec, nodes, &init.backbone, &schedule),
        Strategy::PerBatchRing => {
            let topology = RingTopology::healthy(nodes.len())?;
            run_per_batch_ring(spec, nodes, &init.backbone, &init.shared_head, &schedule, &topology)
        }
    };
    out.map_err(|source| HarnessError::Run { strategy: cfg.strategy.as_str(), source })
}

/// Ring strategies finish with head-only epochs on each client's final
/// backbone; final accuracies are re-scored afterwards.
fn fine_tune(cfg: &ExperimentConfig, p: &mut Prepared, result: &mut RunResult) -> Result<(), HarnessError> {
    let schedule = cfg.effective_schedule();
    if !cfg.strategy.is_ring() || schedule.fine_tune_epochs == 0 {
        return Ok(());
    }
    let wrap = |source| HarnessError::Run { strategy: cfg.strategy.as_str(), source };
    for (c, node) in p.nodes.iter_mut().enumerate() {
        let model = &mut result.client_models[c];
        fine_tune_heads(&p.spec, &model.backbone, std::slice::from_mut(node), schedule.fine_tune_epochs, &schedule).map_err(wrap)?;
        model.head = node.head.clone();
        result.final_accuracies[c] = evaluate_accuracy(&p.spec, &model.backbone, &model.head, &node.test).map_err(wrap)?;
    }
    Ok(())
}

fn pooled(nodes: &[NodeState], pick: impl Fn(&NodeState) -> &LocalData) -> Result<LocalData, HarnessError> {
    let parts: Vec<&LocalData> = nodes.iter().map(pick).collect();
    Ok(LocalData::concat(&parts)?)
}

/// Probe, stacked and gating models over the surviving backbone and the
/// clients' heads, trained on the pooled training data and scored on the
/// pooled test data.
fn global_stages(cfg: &ExperimentConfig, p: &Prepared, result: &RunResult) -> Result<GlobalSummary, HarnessError> {
    let flags = &cfg.global;
    let mut out = GlobalSummary::default();
    if !flags.any() {
        return Ok(out);
    }
    let backbone = match &result.backbone {
        Some(b) => b.params.clone(),
        None => result.client_models[0].backbone.clone(),
    };
    let heads: Vec<ParamSet> = result.client_models.iter().map(|m| m.head.clone()).collect();
    let train = pooled(&p.nodes, |n| &n.train)?;
    let test = pooled(&p.nodes, |n| &n.test)?;
    if flags.probe {
        let r = probe_backbone(&p.spec, &backbone, &train, &test, &flags.fit, derive_seed(cfg.seed, "global/probe"))?;
        out.probe = Some(r.accuracy);
    }
    if flags.stacked {
        let parts: Vec<&LocalData> = p.nodes.iter().map(|n| &n.train).collect();
        let cache = collect_head_outputs(&p.spec, &backbone, &heads, &parts)?;
        let integrator = integrator_spec(cache.width(), p.spec.output_width())?;
        let ens = train_integrator(&p.spec, &backbone, &heads, &cache, integrator, &flags.fit, derive_seed(cfg.seed, "global/stacked"))?;
        out.stacked = Some(ens.accuracy(&test)?);
    }
    if flags.moe {
        let ens = train_gating(&p.spec, &backbone, &heads, &train, &flags.fit, derive_seed(cfg.seed, "global/moe"))?;
        out.moe = Some(ens.accuracy(&test)?);
    }
    Ok(out)
}

fn summarize(cfg: &ExperimentConfig, p: &Prepared, result: &RunResult, global: GlobalSummary) -> Summary {
    let clients = p
        .nodes
        .iter()
        .zip(&p.splits)
        .zip(&result.final_accuracies)
        .map(|((n, s), &accuracy)| ClientSummary {
            id: n.id,
            accuracy,
            train_size: n.train.len(),
            test_size: n.test.len(),
            test_fingerprint: fingerprint(&s.test),
        })
        .collect();
    Summary {
        strategy: cfg.strategy.as_str().to_string(),
        seed: cfg.seed,
        clients,
        mean_accuracy: result.mean_final_accuracy(),
        round_mean_accuracy: round_means(result),
        comm: result.meter.clone(),
        topology: topology_summary(result),
        logical_steps: result.logical_steps,
        global,
        wall_ms: cfg.record_wall_time.then(|| result.wall_time.as_secs_f64() * 1e3),
    }
}

/// Runs a config without touching the filesystem beyond reading inputs.
/// Relative data and fault-script paths are taken from `base_dir`.
pub fn run_in_memory(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Experiment, HarnessError> {
    let cfg = resolve_config(cfg, base_dir);
    let mut p = prepare(&cfg)?;
    run_prepared(cfg, &mut p)
}

pub(crate) fn run_prepared(cfg: ExperimentConfig, p: &mut Prepared) -> Result<Experiment, HarnessError> {
    let mut result = run_strategy(&cfg, p)?;
    fine_tune(&cfg, p, &mut result)?;
    let global = global_stages(&cfg, p, &result)?;
    let summary = summarize(&cfg, p, &result, global);
    let records = records_from_visits(&result.visits, cfg.record_wall_time);
    Ok(Experiment { config: cfg, result, summary, records })
}

/// Runs a config and writes `metrics.csv`, `summary.json` and
/// `config.json` into its output directory.
///
/// Nothing is created until the config is validated and its inputs are
/// loaded. If the run then fails, a directory this call created is
/// removed; a directory that already existed gets a `FAILED` file with
/// the error instead.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Experiment, HarnessError> {
    let cfg = resolve_config(cfg, base_dir);
    let mut p = prepare(&cfg)?;
    let dir = cfg.output_dir.clone();
    let existed = dir.exists();
    fs::create_dir_all(&dir)?;
    let marker = dir.join(FAILED_MARKER);
    let out = run_prepared(cfg, &mut p).and_then(|e| {
        write_outputs(&e, &dir)?;
        Ok(e)
    });
    match &out {
        Ok(_) if marker.exists() => fs::remove_file(&marker)?,
        Ok(_) => {}
        Err(err) if existed => fs::write(&marker, format!("{err}\n"))?,
        Err(_) => {
            let _ = fs::remove_dir_all(&dir);
        }
    }
    out
}

pub(crate) fn write_outputs(e: &Experiment, dir: &Path) -> Result<(), HarnessError> {
    emit_metrics(&e.records, &dir.join("metrics.csv"))?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&e.summary)? + "\n")?;
    fs::write(dir.join("config.json"), e.config.to_json())?;
    Ok(())
}
