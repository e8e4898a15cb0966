use std::process::Command;

use fedgcn_core::harness::{
    analyze_comm, rounds_csv, run_seed, run_sweep, ExperimentConfig, Source,
};

fn sbm_config(nodes: usize, clients: usize, rounds: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "data": {{"kind": "sbm", "num_nodes": {nodes}, "num_blocks": {clients},
                     "alpha": 0.05, "mu": 0.2, "feature_dim": 6}},
            "num_clients": {clients}, "iid_fraction": 0.5, "hops": 2,
            "training": {{"rounds": {rounds}}},
            "seeds": [3]
        }}"#
    ))
    .unwrap()
}

#[test]
fn identical_config_gives_identical_rounds_csv() {
    let cfg = sbm_config(150, 3, 8);
    let source = Source::open(&cfg.data).unwrap();
    let a = run_seed(&cfg, &source, 3).unwrap();
    let b = run_seed(&cfg, &source, 3).unwrap();
    let hash = cfg.hash();
    assert_eq!(
        rounds_csv(&a.outcome.records, &hash),
        rounds_csv(&b.outcome.records, &hash)
    );
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.summary.mode, "federated");
}

#[test]
fn single_client_summary_is_flagged() {
    let cfg = sbm_config(90, 1, 3);
    let source = Source::open(&cfg.data).unwrap();
    let run = run_seed(&cfg, &source, 3).unwrap();
    assert_eq!(run.summary.mode, "centralized-equivalent");
    assert_eq!(run.summary.schema_version, 1);
    assert_eq!(run.summary.config_hash, cfg.hash());
}

#[test]
fn analyze_matches_closed_form_on_generated_sbm() {
    let mut cfg = sbm_config(2000, 5, 1);
    cfg.seeds = (0..5).collect();
    let source = Source::open(&cfg.data).unwrap();
    let rows = analyze_comm(&cfg, &source, &[0, 1, 2]).unwrap();
    for r in &rows {
        if r.hops == 0 {
            assert_eq!(r.measured_total(), 0);
            continue;
        }
        assert_eq!(r.measured_total(), r.counted_total);
        let ratio = r.exact_ratio().unwrap();
        assert!(
            (0.95..=1.05).contains(&ratio),
            "hops {} ratio {ratio}",
            r.hops
        );
    }
}

#[test]
fn sweep_covers_the_grid() {
    let mut cfg = sbm_config(90, 3, 3);
    cfg.seeds = vec![1, 2];
    let source = Source::open(&cfg.data).unwrap();
    let points = run_sweep(&cfg, &source, &[0.0, 1.0], &[0, 1], None).unwrap();
    assert_eq!(points.len(), 8);
    assert!(points
        .iter()
        .filter(|p| p.hops == 0)
        .all(|p| p.pretrain_elements == 0));
    assert!(points
        .iter()
        .filter(|p| p.hops == 1)
        .all(|p| p.pretrain_elements > 0));
}

#[test]
fn cli_train_and_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, sbm_config(90, 3, 4).to_json().unwrap()).unwrap();
    let out = dir.path().join("out");
    let exe = env!("CARGO_BIN_EXE_fedgcn");

    let status = Command::new(exe)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "5,6", "--hops", "1"])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for seed in [5, 6] {
        let csv = std::fs::read_to_string(out.join(format!("seed{seed}/rounds.csv"))).unwrap();
        assert!(csv.starts_with("round,t,client,loss,acc,val_acc,test_acc,up_bytes,down_bytes"));
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.join(format!("seed{seed}/summary.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(summary["hops"], 1);
    }

    std::fs::write(&cfg_path, r#"{"data": {"kind": "sbm"}}"#).unwrap();
    let failed = Command::new(exe)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!failed.status.success());
    let err: serde_json::Value = serde_json::from_slice(&failed.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "json");
}
