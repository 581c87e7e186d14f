use std::fs;
use std::path::Path;
use std::process::Command;

use ringfl::protocol::Phase;
use ringfl_harness::pipeline::HopTime;
use ringfl_harness::summary::fingerprint;
use ringfl_harness::{
    emit_metrics, estimate_pipeline_makespan, parse_config, parse_config_str, read_metrics, report_client_deltas, run_experiment,
    run_in_memory, run_optional_step_ablation, simulate_tokens, simulate_tokens_recurrence, ClientSummary, HarnessError, MetricsRecord,
    PipelineModel, Summary, METRICS_HEADER,
};

fn config(strategy: &str, clients: usize, extra: &str) -> String {
    format!(
        r#"{{
        "dataset": {{"kind": "blobs", "classes": 4, "dims": 6, "samples_per_class": 30,
                    "cluster_spread": 1.0, "inter_cluster_scale": 2.0}},
        "heterogeneity": {{"scheme": "dirichlet", "beta": 1.0, "min_samples": 6}},
        "clients": {clients},
        "model": {{"widths": [6, 12, 4]}},
        "schedule": {{"rounds": 4, "batch_size": 4, "fine_tune_epochs": 1}},
        "strategy": "{strategy}",
        "seed": 11,
        "output_dir": "out"{extra}
    }}"#
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn isolated_single_client_has_one_accuracy_and_no_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&config("isolated", 1, "").replace(r#""dirichlet", "beta": 1.0, "min_samples": 6"#, r#""iid""#)).unwrap();
    let e = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(e.summary.clients.len(), 1);
    assert!(e.summary.comm.is_zero());
    let text = fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    let back: Summary = serde_json::from_str(&text).unwrap();
    assert_eq!(back, e.summary);
    assert_eq!(back.comm.parameters_sent, 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = parse_config_str(&config("li", 3, r#", "global": {"probe": true, "stacked": true, "moe": true, "fit": {"epochs": 3}}"#)).unwrap();
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for f in ["metrics.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join("out").join(f)).unwrap(), fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
    let s: Summary = serde_json::from_str(&fs::read_to_string(a.path().join("out/summary.json")).unwrap()).unwrap();
    assert!(s.global.probe.is_some() && s.global.stacked.is_some() && s.global.moe.is_some());
    assert!(s.wall_ms.is_none());
}

#[test]
fn resolved_config_reparses_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&config("li_no_optional", 2, "")).unwrap();
    let e = run_experiment(&cfg, dir.path()).unwrap();
    let again = parse_config(&dir.path().join("out/config.json")).unwrap();
    assert_eq!(again, e.config);
    assert_eq!(again.schedule.full_epochs, 0);
    let rerun = run_in_memory(&again, dir.path()).unwrap();
    assert_eq!(rerun.summary, e.summary);
}

#[test]
fn metrics_rows_follow_the_visit_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&config("li", 3, "")).unwrap();
    let e = run_experiment(&cfg, dir.path()).unwrap();
    let rows = read_metrics(&dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 3 * 3);
    assert_eq!(rows[0].round, 1);
    assert_eq!(rows.last().unwrap().round, 4);
    assert!(rows.windows(2).all(|w| w[1].round == w[0].round || w[1].round == w[0].round + 1));
    assert_eq!(rows.iter().map(|r| r.phase).take(3).collect::<Vec<_>>(), [Phase::Head, Phase::Backbone, Phase::Full]);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.local_test_accuracy) && r.wall_ms == 0.0));
    assert_eq!(rows.last().unwrap().parameters_sent, e.summary.comm.parameters_sent);
    assert_eq!(rows[0].lr_head, 1e-4);
    assert_eq!(rows[0].lr_backbone, 4e-4);
}

#[test]
fn link_failure_marks_the_run_wrapped() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("faults.txt"), "# one primary link\n2.1 link_down 1-2\n").unwrap();
    let cfg = parse_config_str(&config("li", 4, r#", "fault_script": "faults.txt""#)).unwrap();
    let e = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(e.summary.round_mean_accuracy.len(), 4);
    assert!(e.summary.topology.wrapped);
    let w = &e.summary.topology.wrap_events[0];
    assert_eq!((w.round, w.hop, w.partitions), (2, 1, 1));
    assert!(e.summary.topology.unreachable.is_empty());
    for round in 1..=4 {
        let mut visited: Vec<usize> = e.result.visits.iter().filter(|v| v.round == round).map(|v| v.node).collect();
        visited.sort_unstable();
        assert_eq!(visited, [0, 1, 2, 3]);
    }
}

#[test]
fn rejected_configs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        config("li", 0, ""),
        config("fedavg", 3, r#", "fault_script": "faults.txt""#),
        config("isolated", 3, r#", "global": {"probe": true}"#),
        config("li", 3, r#", "fault_script": "missing.txt""#),
        config("li", 3, "").replace("\"min_samples\": 6", "\"min_samples\": 100"),
        config("li", 3, "").replace("[6, 12, 4]", "[6, 12, 5]"),
    ];
    for text in bad {
        let cfg = parse_config_str(&text).unwrap();
        assert!(run_experiment(&cfg, dir.path()).is_err(), "{text}");
        assert!(!dir.path().join("out").exists(), "{text}");
    }
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &config("li", 2, r#", "foo": 1"#));
    let msg = parse_config(&p).unwrap_err().to_string();
    assert!(msg.contains("foo"), "{msg}");
    let p = write_config(dir.path(), &config("li", 2, "").replace(r#""rounds": 4"#, r#""rounds": 4, "bogus": 1"#));
    let msg = parse_config(&p).unwrap_err().to_string();
    assert!(msg.contains("schedule") && msg.contains("bogus"), "{msg}");
    assert!(matches!(parse_config(&dir.path().join("nope.json")), Err(HarnessError::Read { .. })));
}

fn summary(accs: &[f64]) -> Summary {
    let mut s = parse_and_run_tiny();
    s.clients = accs
        .iter()
        .enumerate()
        .map(|(id, &accuracy)| ClientSummary { id, accuracy, train_size: 1, test_size: 1, test_fingerprint: fingerprint(&[id]) })
        .collect();
    s
}

fn parse_and_run_tiny() -> Summary {
    let cfg = parse_config_str(&config("isolated", 2, "")).unwrap();
    run_in_memory(&cfg, Path::new(".")).unwrap().summary
}

#[test]
fn client_deltas() {
    let li = summary(&[0.9, 0.7]);
    let iso = summary(&[0.8, 0.7]);
    let t = report_client_deltas(&li, &li).unwrap();
    assert!(t.rows.iter().all(|r| r.delta == 0.0) && t.mean_delta == 0.0);
    let t = report_client_deltas(&li, &iso).unwrap();
    assert!((t.rows[0].delta - 0.1).abs() < 1e-12);
    assert_eq!(t.rows[1].delta, 0.0);
    assert!((t.mean_delta - 0.05).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    t.write_csv(&out).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text, "client,li,isolated,delta\n0,0.9,0.8,0.1\n1,0.7,0.7,0\nmean,,,0.05\n");

    let mut other = iso.clone();
    other.clients[1].test_fingerprint = fingerprint(&[5]);
    assert!(matches!(report_client_deltas(&li, &other), Err(HarnessError::Mismatch(_))));
    other.clients.pop();
    assert!(matches!(report_client_deltas(&li, &other), Err(HarnessError::Mismatch(_))));
}

#[test]
fn ablation_arms_share_setup_and_differ_in_phases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&config("li", 3, r#", "global": {"fit": {"epochs": 3}}"#)).unwrap();
    let (r, with, without) = run_optional_step_ablation(&cfg, dir.path()).unwrap();
    assert_eq!((r.phases_with, r.phases_without), (3, 2));
    assert_eq!(with.config.schedule.rounds * 2, without.config.schedule.rounds);
    assert!(r.with_optional.global.stacked.is_some() && r.without_optional.global.probe.is_some());
    assert_eq!(r.mean_accuracy_difference, r.with_optional.mean_accuracy - r.without_optional.mean_accuracy);
    // identical partitions, initialization and batch order up to the first joint phase
    assert_eq!(with.result.visits[0].phases[..2], without.result.visits[0].phases[..2]);
    for (a, b) in r.with_optional.clients.iter().zip(&r.without_optional.clients) {
        assert_eq!(a.test_fingerprint, b.test_fingerprint);
    }
    for sub in ["with_optional/metrics.csv", "without_optional/summary.json", "ablation.json"] {
        assert!(dir.path().join("out").join(sub).exists(), "{sub}");
    }
    assert!(run_optional_step_ablation(&parse_config_str(&config("fedavg", 3, "")).unwrap(), dir.path()).is_err());
}

fn record(round: u32, acc: f64) -> MetricsRecord {
    MetricsRecord {
        round,
        node_id: 2,
        phase: Phase::Backbone,
        local_test_accuracy: acc,
        loss: 1.234567891,
        lr_head: 1e-4,
        lr_backbone: 3.3333333e-5,
        parameters_sent: 123456789012,
        wall_ms: 0.0,
    }
}

#[test]
fn metrics_file_layout_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    emit_metrics(&[record(1, 0.5)], &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.ends_with('\n'));
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
    assert_eq!(text.lines().nth(1).unwrap(), "1,2,backbone,0.5,1.23457,0.0001,3.33333e-5,123456789012,0");

    let recs: Vec<_> = (1..=20).map(|r| record(r, 1.0 / r as f64)).collect();
    emit_metrics(&recs, &p).unwrap();
    let back = read_metrics(&p).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!((a.round, a.node_id, a.phase, a.parameters_sent), (b.round, b.node_id, b.phase, b.parameters_sent));
        for (x, y) in [(a.local_test_accuracy, b.local_test_accuracy), (a.loss, b.loss), (a.lr_backbone, b.lr_backbone)] {
            assert!((x - y).abs() <= 5e-6 * x.abs(), "{x} vs {y}");
        }
    }
    assert!(matches!(emit_metrics(&[], &p), Err(HarnessError::NoRecords)));
    assert!(emit_metrics(&recs, &dir.path().join("missing/m.csv")).is_err());
}

#[test]
fn pipeline_bounds_match_token_simulation() {
    for c in 2..=6 {
        for r in 2..=6u32 {
            let uniform = PipelineModel::uniform(c, 3.0, 1.0, r);
            let skewed = PipelineModel {
                compute: (0..c).map(|i| (1 + (i * 7 + r as usize) % 5) as f64).collect(),
                hop: HopTime::PerNode((0..c).map(|i| (1 + i % 2) as f64).collect()),
                ..uniform.clone()
            };
            for m in [&uniform, &skewed] {
                let e = estimate_pipeline_makespan(m).unwrap();
                assert_eq!(simulate_tokens(m, 1), e.sequential, "C={c} R={r}");
                assert_eq!(simulate_tokens(m, r as usize), e.lower_bound, "C={c} R={r}");
                for k in 1..=r as usize + 1 {
                    let t = simulate_tokens(m, k);
                    assert_eq!(t, simulate_tokens_recurrence(m, k));
                    assert!(e.lower_bound <= t && t <= e.upper_bound);
                }
            }
            let e = estimate_pipeline_makespan(&uniform).unwrap();
            assert_eq!(simulate_tokens(&uniform, 1), e.upper_bound);
        }
    }
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ringfl");
    let p = write_config(dir.path(), &config("li", 2, r#", "foo": 1"#));
    let out = Command::new(bin).arg("run").arg(&p).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let root = dir.path().join("root");
    let p = write_config(dir.path(), &config("fedavg", 2, ""));
    let out = Command::new(bin).arg("run").arg(&p).env("RINGFL_OUTPUT_ROOT", &root).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("out/metrics.csv").exists());

    let pm = dir.path().join("pipe.json");
    fs::write(&pm, r#"{"compute": [1, 1, 10], "hop": 1, "rounds": 3, "tokens": 3}"#).unwrap();
    let out = Command::new(bin).arg("pipeline").arg(&pm).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bottleneck_node"], 2);
    assert_eq!(v["simulated"], v["lower_bound"]);
}
