use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use tlsbpg::config::ExperimentConfig;
use tlsbpg::harness::{
    ablate, comparison_csv, evaluate, load_maps, run, AblationGrid, RunOptions, RunReport,
};
use tlsbpg::oracle::verify_all;
use tlsbpg::rbf::{fit_latent, samples_from_map, similarity_matrix};
use tlsbpg::transfer::Variant;
use tlsbpg::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TOPOLOGY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "tlsbpg", version, about = "Transfer learning for state-based potential games on a bulk good line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or a builtin name (bgs_default, lsbgs_default).
    #[arg(long, default_value = "bgs_default")]
    config: String,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Steps per episode.
    #[arg(long)]
    steps: Option<u64>,
    /// Output directory; defaults to a run-specific folder under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "TLSBPG_OUT_ROOT", default_value = "runs")]
    out_root: PathBuf,
    /// Stream per-adaptation JSON lines to journal.jsonl.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train all players from scratch.
    Train(Common),
    /// Reuse stored maps, retrain briefly, and run one greedy episode.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding `*.map` files.
        #[arg(long)]
        policy: PathBuf,
        /// Production sequence to evaluate on, e.g. 1-3-2-4.
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long, default_value_t = 1)]
        retrain: usize,
    },
    /// Sweep transfer settings, one training run per grid point.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8])]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha_mom: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        horizon: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export the pairwise latent similarity of trained players.
    Similarity {
        #[command(flatten)]
        common: Common,
        /// Use stored maps instead of training.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run the numerical condition checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::PolicyLoad(_) => EXIT_CONFIG,
            Error::Topology { .. } => EXIT_TOPOLOGY,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn runtime(message: String) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(common) => train_cmd(&common),
        Command::Eval {
            common,
            policy,
            sequence,
            retrain,
        } => eval_cmd(&common, &policy, sequence.as_deref(), retrain),
        Command::Ablate {
            common,
            beta,
            alpha_mom,
            horizon,
            jobs,
        } => ablate_cmd(&common, beta, alpha_mom, horizon, jobs),
        Command::Similarity { common, policy } => similarity_cmd(&common, policy.as_deref()),
        Command::Verify { seed, out } => verify_cmd(seed, out),
    }
}

/// Loads the config and applies flag overrides; flags win over the file.
fn resolve(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(v) = common.variant {
        config.run.variant = v;
    }
    if let Some(s) = common.seed {
        config.run.seed = s;
    }
    if let Some(e) = common.episodes {
        config.run.episodes = e;
    }
    if let Some(s) = common.steps {
        config.run.steps_per_episode = s;
    }
    config.validate()?;
    config.graph()?;
    Ok(config)
}

fn output_dir(common: &Common, command: &str, config: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| {
        common.out_root.join(format!(
            "{command}-{}-seed{}",
            config.run.variant, config.run.seed
        ))
    });
    fs::create_dir_all(&dir)
        .map_err(|e| runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Stores the effective config next to a manifest that identifies it.
fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    extra: serde_json::Value,
) -> Result<(), Failure> {
    let text = config.to_toml();
    write(&dir.join("config.toml"), &text)?;
    let manifest = json!({
        "command": command,
        "config_file": "config.toml",
        "config_sha256": config_hash(&text),
        "seed": config.run.seed,
        "variant": config.run.variant.to_string(),
        "sequence": config.sequence.order,
        "episodes": config.run.episodes,
        "steps_per_episode": config.run.steps_per_episode,
        "version": env!("CARGO_PKG_VERSION"),
        "extra": extra,
    });
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&dir.join("manifest.json"), &(body + "\n"))
}

fn summarize(report: &RunReport) {
    for e in &report.episodes {
        println!(
            "episode {}: power {:.4} kW, overflow {:.5} L/s, demand deviation {:.5} L/s, potential {:.4}",
            e.episode, e.power_kw, e.overflow_lps, e.demand_deviation_lps, e.potential
        );
    }
    if let Some(e) = &report.evaluation {
        println!(
            "evaluation: power {:.4} kW, overflow {:.5} L/s, demand deviation {:.5} L/s, potential {:.4}",
            e.power_kw, e.overflow_lps, e.demand_deviation_lps, e.potential
        );
    }
}

fn train_cmd(common: &Common) -> Result<(), Failure> {
    let config = resolve(common)?;
    let dir = output_dir(common, "train", &config)?;
    let report = if common.verbose {
        let path = dir.join("journal.jsonl");
        let file = fs::File::create(&path)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut journal = BufWriter::new(file);
        run(
            &config,
            RunOptions {
                journal: Some(&mut journal),
                ..RunOptions::default()
            },
        )?
    } else {
        run(&config, RunOptions::default())?
    };
    report.write_to(&dir)?;
    write_manifest(&dir, "train", &config, json!({}))?;
    summarize(&report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn eval_cmd(
    common: &Common,
    policy: &Path,
    sequence: Option<&str>,
    retrain: usize,
) -> Result<(), Failure> {
    let mut config = resolve(common)?;
    if let Some(order) = sequence {
        config = config.with_sequence(order);
        config.graph()?;
    }
    let maps = load_maps(policy)?;
    let dir = output_dir(common, "eval", &config)?;
    let report = evaluate(&config, maps, retrain, None)?;
    report.write_to(&dir)?;
    write_manifest(
        &dir,
        "eval",
        &config,
        json!({ "policy": policy.display().to_string(), "retrain_episodes": retrain }),
    )?;
    summarize(&report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn ablate_cmd(
    common: &Common,
    beta: Vec<f64>,
    alpha_mom: Vec<f64>,
    horizon: Vec<usize>,
    jobs: usize,
) -> Result<(), Failure> {
    let config = resolve(common)?;
    let variant = if config.run.variant == Variant::Baseline {
        Variant::Sw
    } else {
        config.run.variant
    };
    let mut grid = AblationGrid::beta_sweep(&config, variant, &beta);
    if !alpha_mom.is_empty() {
        grid.alpha_mom = alpha_mom;
    }
    if !horizon.is_empty() {
        grid.horizon = horizon;
    }
    let dir = output_dir(common, "ablate", &config)?;
    let results = ablate(&config, &grid, jobs)?;
    let csv = comparison_csv(&results);
    write(&dir.join("comparison.csv"), &csv)?;
    write_manifest(
        &dir,
        "ablate",
        &config,
        json!({
            "variant": variant.to_string(),
            "beta_tf": grid.beta_tf,
            "alpha_mom": grid.alpha_mom,
            "horizon": grid.horizon,
        }),
    )?;
    print!("{csv}");
    Ok(())
}

fn similarity_cmd(common: &Common, policy: Option<&Path>) -> Result<(), Failure> {
    let config = resolve(common)?;
    let graph = config.graph()?;
    let maps = match policy {
        Some(p) => load_maps(p)?,
        None => run(&config, RunOptions::default())?.maps,
    };
    let mut names = Vec::new();
    let mut latents = Vec::new();
    for (p, name) in graph.player_names().into_iter().enumerate() {
        let Some(map) = maps.get(&name) else {
            return Err(Error::PolicyLoad(format!("no map for player `{name}`")).into());
        };
        let rbf = config.rbf.for_dim(graph.state_dim(p))?;
        match fit_latent(&samples_from_map(map), &rbf, 0) {
            Ok(latent) => {
                names.push(name);
                latents.push(latent);
            }
            Err(Error::EmptyFit) => eprintln!("skipping `{name}`: empty map"),
            Err(e) => return Err(e.into()),
        }
    }
    let matrix = similarity_matrix(&latents);
    let dir = output_dir(common, "similarity", &config)?;
    let csv = matrix.to_csv(&names);
    write(&dir.join("similarity.csv"), &csv)?;
    write_manifest(&dir, "similarity", &config, json!({}))?;
    for &(i, j, v) in matrix.ranked.iter().take(5) {
        println!("{} ~ {}: {v:.6}", names[i], names[j]);
    }
    Ok(())
}

fn verify_cmd(seed: u64, out: Option<PathBuf>) -> Result<(), Failure> {
    let report = verify_all(seed);
    for c in &report.checks {
        println!(
            "{} {}: {} (tolerance {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(&dir)
            .map_err(|e| runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        write(&dir.join("verify.csv"), &report.to_csv())?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(runtime("condition checks failed".into()))
    }
}
