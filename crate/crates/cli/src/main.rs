use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use d2color::acd::{decompose, AcdMode};
use d2color::field::{colorspace_reduce, ColorspaceReducer};
use d2color::{oracle, Color};
use d2color_cli::experiment::{Algorithm, ExperimentConfig};
use d2color_cli::gen::{generate, GenSpec};
use d2color_cli::report::report_dirs;
use d2color_cli::runner::{run_experiment, RunError};
use d2color_cli::seeds;
use num_rational::Ratio;

/// Overrides `--out` for `run`.
const OUT_ENV: &str = "D2COLOR_OUT_DIR";

const EXIT_SAFETY: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "d2color", about = "Distance-2 coloring in a simulated CONGEST network", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes a generated graph as an edge list.
    Generate {
        #[arg(long)]
        graph: GenSpec,
        #[arg(long, default_value_t = 0)]
        graph_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs an experiment; exits 2 if any coloring is invalid.
    Run(RunArgs),
    /// Recomputes acceptance statistics from run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Builds one decomposition and checks it against the definition.
    VerifyAcd {
        #[arg(long)]
        graph: GenSpec,
        #[arg(long, default_value_t = 0)]
        graph_seed: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "1/60")]
        epsilon: Ratio<i64>,
        #[arg(long)]
        allow_large_epsilon: bool,
        /// Force exact or sampled similarity tests.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Lists seeds injective on every list, and the derandomized choice.
    BruteSeeds {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        d: u32,
        /// Lists separated by `;`, colors by `,`.
        #[arg(long)]
        lists: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Full experiment config as JSON; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<GenSpec>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// `a..b`, a comma list, or `bank:<name>`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    c_b: Option<u32>,
    #[arg(long)]
    epsilon: Option<Ratio<i64>>,
    #[arg(long)]
    allow_large_epsilon: bool,
    #[arg(long)]
    c2: Option<u32>,
    #[arg(long)]
    c10: Option<f64>,
    #[arg(long)]
    p: Option<u64>,
    #[arg(long)]
    d_max: Option<u32>,
    #[arg(long)]
    eta: Option<u64>,
    #[arg(long)]
    ideal_learn: bool,
    #[arg(long)]
    verify_acd: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some(name) = s.strip_prefix("bank:") {
        if !seeds::names().any(|n| n == name) {
            bail!("no seed bank {name:?}");
        }
        return Ok(seeds::bank(name).to_vec());
    }
    if let Some((a, b)) = s.split_once("..") {
        return Ok((a.trim().parse()?..b.trim().parse()?).collect());
    }
    s.split(',').map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed {x:?}"))).collect()
}

fn build_config(a: RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => {
            let graph = a.graph.clone().context("--graph or --config is required")?;
            ExperimentConfig::new(graph, Algorithm::Log, (0..10).collect())
        }
    };
    if let Some(g) = a.graph {
        cfg.graph = g;
    }
    if let Some(x) = a.graph_seed {
        cfg.graph_seed = x;
    }
    if let Some(x) = a.algorithm {
        cfg.algorithm = x;
    }
    if let Some(s) = a.seeds {
        cfg.seeds = parse_seeds(&s)?;
    }
    let al = &mut cfg.algo;
    if let Some(x) = a.c_b {
        al.engine.c_b = x;
    }
    if let Some(x) = a.epsilon {
        al.epsilon = x;
    }
    al.allow_large_epsilon |= a.allow_large_epsilon;
    if let Some(x) = a.c2 {
        al.c2 = x;
    }
    if a.c10.is_some() {
        al.c10 = a.c10;
    }
    if let Some(x) = a.p {
        al.p = x;
    }
    if let Some(x) = a.d_max {
        al.d_max = x;
    }
    if let Some(x) = a.eta {
        al.eta = x;
    }
    al.ideal_learn |= a.ideal_learn;
    cfg.verify_acd |= a.verify_acd;
    if let Some(o) = a.out {
        cfg.out_dir = Some(o);
    }
    if let Some(o) = std::env::var_os(OUT_ENV) {
        cfg.out_dir = Some(o.into());
    }
    Ok(cfg)
}

fn parse_lists(s: &str) -> Result<Vec<Vec<Color>>> {
    s.split(';')
        .map(|l| l.split(',').filter(|x| !x.trim().is_empty()).map(|x| Ok(x.trim().parse::<Color>()?)).collect())
        .collect()
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn real_main() -> Result<u8> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            e.print()?;
            return Ok(0);
        }
        Err(e) => {
            e.print()?;
            return Ok(EXIT_CONFIG);
        }
    };
    match cli.cmd {
        Cmd::Generate { graph, graph_seed, out } => {
            let g = generate(&graph, graph_seed)?;
            match out {
                Some(p) => std::fs::write(p, g.to_edge_list())?,
                None => print!("{}", g.to_edge_list()),
            }
            Ok(0)
        }
        Cmd::Run(args) => {
            let cfg = build_config(args)?;
            let report = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(RunError::Config(e)) => {
                    eprintln!("config error: {e}");
                    return Ok(EXIT_CONFIG);
                }
                Err(e) => return Err(e.into()),
            };
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &report.runs {
                w.serialize(&r.row)?;
            }
            w.flush()?;
            for r in report.runs.iter().filter(|r| r.error.is_some()) {
                eprintln!("seed {}: {}", r.row.seed, r.error.as_deref().unwrap_or_default());
            }
            Ok(if report.all_valid() { 0 } else { EXIT_SAFETY })
        }
        Cmd::Report { dirs, json } => {
            let summary = report_dirs(&dirs)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{summary}");
            }
            Ok(summary.exit_code() as u8)
        }
        Cmd::VerifyAcd { graph, graph_seed, seed, epsilon, allow_large_epsilon, mode } => {
            let g = generate(&graph, graph_seed)?;
            let algo = d2color::AlgoConfig { epsilon, allow_large_epsilon, ..Default::default() };
            let params = match algo.acd_params() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return Ok(EXIT_CONFIG);
                }
            };
            let force = match mode.as_deref() {
                None => None,
                Some("exact") => Some(AcdMode::Exact),
                Some("sampled") => Some(AcdMode::Sampled),
                Some(m) => bail!("unknown mode {m:?}"),
            };
            let (acd, _) = decompose(&g, &params, algo.engine, seed, force)?;
            let rep = oracle::verify_acd(&g, &acd, epsilon)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(if rep.ok() { 0 } else { EXIT_SAFETY })
        }
        Cmd::BruteSeeds { p, d, lists } => {
            let lists = parse_lists(&lists)?;
            let good = match oracle::brute_force_good_seeds(&lists, p, d) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_CONFIG);
                }
            };
            println!("good seeds ({}): {good:?}", good.len());
            let red = ColorspaceReducer::new(p, d)?;
            match colorspace_reduce(&red, &lists) {
                Ok((e, _)) => {
                    println!("derandomized seed: {e}");
                    Ok(if good.binary_search(&e).is_ok() { 0 } else { EXIT_SAFETY })
                }
                Err(e) => {
                    println!("derandomizer: {e}");
                    Ok(0)
                }
            }
        }
    }
}
