//! Staged pipeline: graph → correctors → coefficients → simulations →
//! verification, cached under `<output>/<config hash>/`.
//!
//! Each stage records its files and their SHA-256 in `manifest.json`. A stage
//! whose files are all present and unchanged is skipped, so a rerun of the
//! same config leaves every byte in place.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::export::{gnuplot_script, graph_ensemble_csv, to_json, write_artifact, Table};
use super::report::{ComparisonReport, SignedHeight};
use super::verify::{Check, Verifier};
use crate::error::{Error, Result};
use crate::fastslow::{ensemble_run, FastSlow};
use crate::graph_process::solve_backward_pde;
use crate::hamiltonian::{find_critical_points, ScalarField, SearchBox};
use crate::reeb::{build_reeb, GraphPoint, ReebGraph};
use crate::system::System;

pub const STAGES: [&str; 5] = ["graph", "correctors", "coefficients", "simulations", "verification"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub hash: String,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// `(file name, sha256)`.
    pub files: Vec<(String, String)>,
}

/// Where a run's files live and whether they were reused.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    /// Stages skipped because their cached files verified.
    pub cached: Vec<String>,
}

impl Artifacts {
    pub fn cache_hit(&self) -> bool {
        self.cached.len() == STAGES.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub hash: String,
    pub all_passed: bool,
    pub checks: Vec<Check>,
    pub comparisons: Vec<ComparisonReport>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        e => Error::Stage { stage, source: Box::new(e) },
    })
}

/// Graph only, without correctors or coefficients.
pub fn build_graph(cfg: &ExperimentConfig) -> Result<ReebGraph> {
    let model = cfg.model()?;
    let bbox = SearchBox::default();
    let cps = find_critical_points(&model.field, bbox, 8)?;
    build_reeb(&cps, &model.field, model.h_max, bbox)
}

struct Run<'a> {
    dir: PathBuf,
    manifest: Manifest,
    cfg: &'a ExperimentConfig,
}

impl Run<'_> {
    fn verified(&self, stage: &str) -> bool {
        let Some(rec) = self.manifest.stages.iter().find(|s| s.stage == stage) else { return false };
        rec.files.iter().all(|(name, sum)| std::fs::read(self.dir.join(name)).is_ok_and(|b| sha256_hex(&b) == *sum))
    }

    fn record(&mut self, stage: &str, files: Vec<(String, String)>) -> Result<()> {
        let files = files
            .into_iter()
            .map(|(name, body)| {
                write_artifact(&self.dir, &name, &body)?;
                Ok((name, sha256_hex(body.as_bytes())))
            })
            .collect::<Result<Vec<_>>>()?;
        self.manifest.stages.retain(|s| s.stage != stage);
        self.manifest.stages.push(StageRecord { stage: stage.into(), files });
        self.manifest.stages.sort_by_key(|s| STAGES.iter().position(|&n| n == s.stage));
        write_artifact(&self.dir, "manifest.json", &to_json(&self.manifest)?)?;
        Ok(())
    }
}

pub fn graph_files(sys: &System) -> Result<Vec<(String, String)>> {
    Ok(vec![("graph.json".into(), sys.graph.to_json()?)])
}

pub fn corrector_files(sys: &System) -> Result<Vec<(String, String)>> {
    let mut csv = String::from("y");
    for j in 0..sys.basis.len() {
        let _ = write!(csv, ",phi{j},u{j}");
    }
    csv.push('\n');
    for (i, y) in sys.mu.nodes.iter().enumerate() {
        let _ = write!(csv, "{y:.17e}");
        for (phi, c) in sys.basis.phi.iter().zip(&sys.correctors.correctors) {
            let _ = write!(csv, ",{:.17e},{:.17e}", phi[i], c.u[i]);
        }
        csv.push('\n');
    }
    Ok(vec![
        ("density.csv".into(), sys.mu.to_csv()),
        ("correctors.csv".into(), csv),
        ("matrices.json".into(), to_json(&sys.matrices)?),
    ])
}

pub fn coefficient_files(sys: &System) -> Result<Vec<(String, String)>> {
    Ok(vec![("coefficients.csv".into(), sys.tables.to_csv()), ("gluing.json".into(), to_json(&sys.weights)?)])
}

pub fn fastslow_file(eps: f64) -> String {
    format!("fastslow_eps{eps}.csv")
}

/// Solves the backward equation for `pde.f0`, read with `x1 = h` and `x2 = edge`.
pub fn pde_csv(cfg: &ExperimentConfig, sys: &System) -> Result<String> {
    let f0 = ScalarField::parse(&cfg.pde.f0)?;
    let f = move |p: GraphPoint| f0.value([p.h, p.k as f64]);
    Ok(solve_backward_pde(&sys.dynamics(), &f, cfg.pde.t_end, &cfg.pde.grid)?.to_csv())
}

/// Fast-slow ensembles for every `run.eps`, the graph reference and the
/// PDE solution; the KS reports are recomputed from the written CSVs.
pub fn simulation_files(cfg: &ExperimentConfig, sys: &System) -> Result<(Vec<(String, String)>, Vec<ComparisonReport>)> {
    let verifier = Verifier::with_system(cfg, sys.clone());
    let graph_csv = graph_ensemble_csv(&verifier.graph_reference(cfg.graph.paths)?);
    let enc = SignedHeight::new(&sys.graph);
    let mut files = vec![("graph_ensemble.csv".to_string(), graph_csv)];
    let mut reports = Vec::new();
    let mut ks = Table::new(&["eps", "t", "ks", "p_value", "critical_95"]);
    for &eps in &cfg.run.eps {
        let sim = FastSlow::new(sys, cfg.sim(eps))?;
        let csv = ensemble_run(&sim, cfg.start())?.to_csv();
        let r = ComparisonReport::from_csv(eps, &enc, &csv, &files[0].1)?;
        for row in &r.rows {
            ks.push(vec![eps, row.t, row.statistic, row.p_value, row.critical_95]);
        }
        files.push((fastslow_file(eps), csv));
        reports.push(r);
    }
    files.push(("ks.csv".into(), ks.to_csv()));
    files.push(("comparison.json".into(), to_json(&reports)?));
    files.push(("pde.csv".into(), pde_csv(cfg, sys)?));
    Ok((files, reports))
}

pub fn check_files(checks: &[Check]) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for c in checks {
        files.push((format!("check_{}.csv", c.name), c.table.to_csv()));
        for (name, t) in &c.extra {
            files.push((format!("check_{}_{name}.csv", c.name), t.to_csv()));
        }
    }
    files
}

/// Runs every stage not already cached for this config.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<(Artifacts, Summary)> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let dir = cfg.output.dir.join(&hash);
    let manifest = match std::fs::read_to_string(dir.join("manifest.json")) {
        Ok(s) => serde_json::from_str::<Manifest>(&s).ok().filter(|m| m.hash == hash).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };
    let mut run = Run { dir: dir.clone(), manifest: Manifest { hash: hash.clone(), ..manifest }, cfg };
    let cached: Vec<String> = STAGES.iter().filter(|s| run.verified(s)).map(|s| s.to_string()).collect();
    let artifacts = Artifacts { dir, hash: hash.clone(), cached };
    if artifacts.cache_hit() {
        let summary: Summary = serde_json::from_str(&std::fs::read_to_string(artifacts.dir.join("summary.json"))?)?;
        return Ok((artifacts, summary));
    }
    write_artifact(&artifacts.dir, "config.toml", &cfg.to_toml()?)?;
    let sys = cfg.build_system()?;
    let todo = |s: &str| !artifacts.cached.iter().any(|c| c == s);
    if todo("graph") {
        let f = in_stage("graph", graph_files(&sys))?;
        run.record("graph", f)?;
    }
    if todo("correctors") {
        let f = in_stage("correctors", corrector_files(&sys))?;
        run.record("correctors", f)?;
    }
    if todo("coefficients") {
        let f = in_stage("coefficients", coefficient_files(&sys))?;
        run.record("coefficients", f)?;
    }
    let comparisons = if todo("simulations") {
        let (f, reports) = in_stage("simulations", simulation_files(run.cfg, &sys))?;
        run.record("simulations", f)?;
        reports
    } else {
        serde_json::from_str(&std::fs::read_to_string(run.dir.join("comparison.json"))?)?
    };
    let verifier = Verifier::with_system(cfg, sys);
    let checks = verifier.run_all(&cfg.verify.experiments);
    let summary = Summary { hash, all_passed: checks.iter().all(|c| c.passed), checks, comparisons };
    let mut files = check_files(&summary.checks);
    files.push(("summary.json".into(), to_json(&summary)?));
    if cfg.output.gnuplot {
        files.push(("plot.gp".into(), gnuplot_script("coefficients.csv", Some("ks.csv"))));
    }
    run.record("verification", files)?;
    Ok((artifacts, summary))
}

/// Loads a stored summary, for `report` on an existing run.
pub fn load_summary(dir: &Path) -> Result<Summary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?)
}
