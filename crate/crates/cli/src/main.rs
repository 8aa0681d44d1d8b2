use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reebflow::fastslow::{ensemble_run, FastSlow};
use reebflow::harness::config::{ExperimentConfig, EXPERIMENTS};
use reebflow::harness::export::{graph_ensemble_csv, to_json, write_artifact};
use reebflow::harness::pipeline::{self, build_graph, run_pipeline};
use reebflow::harness::{Check, Verifier};
use reebflow::rng::{worker_pool, WORKERS_ENV};
use reebflow::Result;

/// Averaged fast-slow dynamics on Reeb graphs.
#[derive(Parser, Debug)]
#[command(name = "reebflow", version, after_help = "Worker threads: REEBFLOW_WORKERS (default: all cores).")]
struct Cli {
    /// Experiment config; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `<output.dir>/<config hash>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Critical points and Reeb graph.
    Graph {
        #[command(subcommand)]
        action: GraphCmd,
    },
    /// Correctors, effective matrices, edge tables and gluing weights.
    Coeffs {
        #[command(subcommand)]
        action: CoeffsCmd,
    },
    /// Monte Carlo ensembles.
    Sim {
        #[command(subcommand)]
        action: SimCmd,
    },
    /// Backward equation on the graph.
    Pde {
        #[command(subcommand)]
        action: PdeCmd,
    },
    /// Runs one acceptance check, or `all`.
    Verify { experiment: String },
    /// Full staged pipeline with cached artifacts and a summary.
    Report,
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    Build,
}

#[derive(Subcommand, Debug)]
enum CoeffsCmd {
    Compute,
}

#[derive(Subcommand, Debug)]
enum SimCmd {
    /// Fast-slow ensembles for every `run.eps`, or only `--eps`.
    Fastslow {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Limiting graph diffusion from the run's start point.
    Graph,
}

#[derive(Subcommand, Debug)]
enum PdeCmd {
    Solve,
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf> {
    Ok(match &cli.out {
        Some(d) => d.clone(),
        None => cfg.output.dir.join(cfg.hash()?),
    })
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, body) in files {
        let p = write_artifact(dir, name, body)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{}", c.line());
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", checks.len());
    passed == checks.len()
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let dir = out_dir(cli, &cfg)?;
    match &cli.cmd {
        Cmd::Graph { action: GraphCmd::Build } => {
            let g = build_graph(&cfg)?;
            println!("{} vertices, {} edges", g.vertices.len(), g.edges.len());
            write_all(&dir, &[("graph.json".into(), g.to_json()?)])?;
        }
        Cmd::Coeffs { action: CoeffsCmd::Compute } => {
            let sys = cfg.build_system()?;
            let mut files = pipeline::corrector_files(&sys)?;
            files.extend(pipeline::coefficient_files(&sys)?);
            write_all(&dir, &files)?;
        }
        Cmd::Sim { action: SimCmd::Fastslow { eps } } => {
            let sys = cfg.build_system()?;
            let list = eps.map_or_else(|| cfg.run.eps.clone(), |e| vec![e]);
            for e in list {
                let sim = FastSlow::new(&sys, cfg.sim(e))?;
                let ens = ensemble_run(&sim, cfg.start())?;
                let (mean, se) = ens.excursion_mean();
                println!("eps = {e}: {} paths, {} reflected at H_max, excursions {mean:.3} ± {se:.3}", ens.paths(), ens.reached_top);
                write_all(&dir, &[(pipeline::fastslow_file(e), ens.to_csv())])?;
            }
        }
        Cmd::Sim { action: SimCmd::Graph } => {
            let sys = cfg.build_system()?;
            let ens = Verifier::with_system(&cfg, sys).graph_reference(cfg.graph.paths)?;
            println!("{} paths, {} reflected at H_max", cfg.graph.paths, ens.reached_top);
            write_all(&dir, &[("graph_ensemble.csv".into(), graph_ensemble_csv(&ens))])?;
        }
        Cmd::Pde { action: PdeCmd::Solve } => {
            let sys = cfg.build_system()?;
            write_all(&dir, &[("pde.csv".into(), pipeline::pde_csv(&cfg, &sys)?)])?;
        }
        Cmd::Verify { experiment } => {
            let names: Vec<String> = if experiment == "all" {
                cfg.verify.experiments.clone()
            } else if EXPERIMENTS.contains(&experiment.as_str()) {
                vec![experiment.clone()]
            } else {
                return Err(reebflow::Error::Config(format!(
                    "unknown experiment `{experiment}`; known: all, {}",
                    EXPERIMENTS.join(", ")
                )));
            };
            let verifier = Verifier::new(&cfg)?;
            let checks = verifier.run_all(&names);
            let mut files = pipeline::check_files(&checks);
            files.push(("checks.json".into(), to_json(&checks)?));
            write_all(&dir, &files)?;
            return Ok(print_checks(&checks));
        }
        Cmd::Report => {
            let (art, summary) = run_pipeline(&cfg)?;
            println!("artifacts in {} ({})", art.dir.display(), if art.cache_hit() { "cached" } else { "computed" });
            for r in &summary.comparisons {
                for row in &r.rows {
                    println!("eps = {:<6} t = {:<4} KS = {:.4} (5% critical {:.4})", r.eps, row.t, row.statistic, row.critical_95);
                }
            }
            return Ok(print_checks(&summary.checks));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let pool = match worker_pool(None) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    log::debug!("{} worker threads ({WORKERS_ENV})", pool.current_num_threads());
    match pool.install(|| run(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
