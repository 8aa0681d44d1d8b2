use std::collections::BTreeMap;
use std::path::Path;

use reebflow::harness::config::EXPERIMENTS;
use reebflow::harness::{run_pipeline, ExperimentConfig};

/// Every check at toy sizes; the pipeline test cares about caching, not accuracy.
const SMALL: &str = r#"
[run]
eps = [0.2, 0.1]
[run.sim]
paths = 200
output_times = [0.5, 1.0]

[graph]
paths = 500

[green_kubo]
paths = 200
horizon = 2.0

[pde]
t_end = 0.5
[pde.grid]
dx = 0.01
dt = 0.01

[verify]
graph_paths = 500
entry_paths = 500
reference_paths = 500
convergence_paths = 200
convergence_eps = [0.2, 0.1]
exit_probability_paths = 50
exit_probability_eps = 0.02
exit_time_paths = 20
exit_time_eps = [0.2, 0.1, 0.05]
exit_time_horizon = 20.0
excursion_paths = 200
excursion_eps = [0.2, 0.1, 0.05]
determinism_paths = 8
"#;

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn rerun_is_a_byte_identical_cache_hit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.output.dir = tmp.path().to_path_buf();

    let (first, summary) = run_pipeline(&cfg).unwrap();
    assert!(first.cached.is_empty());
    assert_eq!(first.dir, tmp.path().join(&first.hash));
    let names: Vec<&str> = summary.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, EXPERIMENTS);
    assert_eq!(summary.all_passed, summary.checks.iter().all(|c| c.passed));
    assert_eq!(summary.comparisons.len(), 2);
    let before = snapshot(&first.dir);
    for f in ["config.toml", "manifest.json", "summary.json", "graph.json", "coefficients.csv", "ks.csv", "plot.gp"] {
        assert!(before.contains_key(f), "missing {f}");
    }

    let (second, again) = run_pipeline(&cfg).unwrap();
    assert!(second.cache_hit());
    // tables are not serialized and NaN != NaN, so compare the stored form
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&summary).unwrap());
    assert_eq!(snapshot(&second.dir), before);
}

#[test]
fn damaged_stage_is_recomputed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.verify.experiments = vec!["identity".into()];
    cfg.output.dir = tmp.path().to_path_buf();
    let (art, _) = run_pipeline(&cfg).unwrap();
    let before = snapshot(&art.dir);
    std::fs::write(art.dir.join("coefficients.csv"), "tampered").unwrap();
    let (again, _) = run_pipeline(&cfg).unwrap();
    assert!(!again.cached.iter().any(|s| s == "coefficients"));
    assert!(again.cached.iter().any(|s| s == "simulations"));
    assert_eq!(snapshot(&again.dir), before);
}

#[test]
fn config_hash_ignores_the_output_location() {
    let a = ExperimentConfig::from_toml(SMALL).unwrap();
    let mut b = a.clone();
    b.output.dir = "elsewhere".into();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    b.run.sim.seed += 1;
    assert_ne!(a.hash().unwrap(), b.hash().unwrap());
}

#[test]
fn invalid_alpha_is_rejected_at_load() {
    let err = ExperimentConfig::from_toml("[run.sim]\nalpha = 0.6\n").unwrap_err();
    assert!(err.to_string().contains("alpha"), "{err}");
    assert!(ExperimentConfig::from_toml("[run.sim]\nalpha = 0.45\n").is_ok());
}
