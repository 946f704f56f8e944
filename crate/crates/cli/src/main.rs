//! `walkcollide` experiment runner.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use walkcollide::environment::HASH_ID;
use walkcollide::harness::experiments as exp;
use walkcollide::harness::ExperimentReport;
use walkcollide::stream::parse_seed;

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "walkcollide", version, about = "Random-walk collision and directed-polymer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with [walks], [environment], [chaos] and [harness] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, decimal or 0x-prefixed hex. Overrides the config value.
    #[arg(long, global = true, value_parser = seed_arg)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "walkcollide-out")]
    out: PathBuf,
    /// Replicate count for the command's main estimator.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write per-replicate CSV files under raw/.
    #[arg(long, global = true)]
    raw: bool,
    /// Print the report JSON on standard output.
    #[arg(long, global = true)]
    stdout: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Collision measures, pathwise mass identities and walk laws.
    Collisions,
    /// Partition functions along a ladder and the moment plateau.
    Partition,
    /// Chaos expansion of the continuum partition function.
    Chaos,
    /// Walk-side versus environment-side moments and the product-sum sandwich.
    Duality,
    /// Exponential moments of the local time at zero.
    Expmoment,
    /// Tail probabilities of collision mass and walk range.
    Tightness,
    /// Distributional convergence of the collision measures.
    Convergence,
    /// Chain-density norms and the local central limit theorem.
    KernelsCheck,
    /// Moments and orthogonality of U-statistics.
    UstatCheck,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

fn seed_arg(s: &str) -> Result<u64, String> {
    parse_seed(s).ok_or_else(|| format!("invalid seed {s:?}"))
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn resolve(cli: &Cli) -> anyhow::Result<(RunConfig, u64)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(r) = cli.replicas {
        if cli.command == Command::Chaos {
            cfg.chaos.replicates = Some(r);
        } else {
            cfg.harness.replicates = Some(r);
        }
    }
    cfg.validate()?;
    let seed = cfg
        .seed
        .ok_or_else(|| config_error("seed is required: pass --seed or set `seed` in the config"))?;
    Ok((cfg, seed))
}

fn dispatch(command: Command, cfg: &RunConfig, seed: u64) -> walkcollide::Result<ExperimentReport> {
    Ok(match command {
        Command::Collisions => {
            let c = cfg.collisions();
            ExperimentReport::combine(
                "collisions",
                vec![
                    exp::collisions_experiment(&c, seed)?,
                    exp::local_time_law_check(c.horizon, c.replicates, seed)?,
                    exp::return_time_check(c.replicates, cfg.kmax(), seed)?,
                ],
            )
        }
        Command::Partition => exp::moment_plateau(&cfg.partition(), seed)?,
        Command::Chaos => exp::chaos_check(&cfg.chaos(), seed)?,
        Command::Duality => ExperimentReport::combine(
            "duality",
            vec![
                exp::duality_experiment(&cfg.duality(), seed)?,
                exp::product_sum_property_check(&cfg.product_sum(), seed)?,
            ],
        ),
        Command::Expmoment => exp::exponential_moment_probe(&cfg.expmoment(), seed)?,
        Command::Tightness => exp::tightness_probe(&cfg.tightness(), seed)?,
        Command::Convergence => exp::convergence_study(&cfg.convergence(), seed)?,
        Command::KernelsCheck => exp::kernels_check(&cfg.kernels(), seed)?,
        Command::UstatCheck => exp::ustat_check(&cfg.ustat(), seed)?,
    })
}

fn manifest(command: Command, cfg: &RunConfig, seed: u64) -> anyhow::Result<Value> {
    Ok(json!({
        "artifact": "walkcollide",
        "version": walkcollide::VERSION,
        "hash_id": HASH_ID,
        "command": command.name(),
        "seed": seed,
        "config": serde_json::to_value(cfg)?,
        "timestamp": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }))
}

/// `# ` header lines for CSV files; everything but the timestamp.
fn csv_manifest(m: &Value) -> Vec<String> {
    ["artifact", "version", "hash_id", "command", "seed", "config"]
        .iter()
        .map(|k| format!("{k}={}", m[*k]))
        .collect()
}

fn write_outputs(cli: &Cli, report: &ExperimentReport, manifest: &Value, elapsed: f64) -> anyhow::Result<String> {
    let out = &cli.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let doc = serde_json::to_string_pretty(&json!({ "manifest": manifest, "report": report }))? + "\n";
    write(&out.join("report.json"), doc.as_bytes())?;
    let mut full = manifest.clone();
    full["elapsed_seconds"] = json!(elapsed);
    full["outputs"] = json!({ "raw": cli.raw });
    write(&out.join("manifest.json"), (serde_json::to_string_pretty(&full)? + "\n").as_bytes())?;
    if cli.raw {
        let dir = out.join("raw");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let header = csv_manifest(manifest);
        for table in &report.raw {
            let path = dir.join(format!("{}.csv", table.name));
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            table.write_csv(std::io::BufWriter::new(file), &header)?;
        }
    }
    Ok(doc)
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let (cfg, seed) = resolve(cli)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(config_error("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let start = Instant::now();
    eprintln!("walkcollide: running {} with seed {seed}", cli.command.name());
    let report = dispatch(cli.command, &cfg, seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    let m = manifest(cli.command, &cfg, seed)?;
    let doc = write_outputs(cli, &report, &m, elapsed)?;
    eprint!("{}", report.to_text());
    eprintln!("walkcollide: finished in {elapsed:.1}s, report in {}", cli.out.display());
    if cli.stdout {
        print!("{doc}");
    }
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("walkcollide: error: {e:#}");
            let user_error = e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<walkcollide::Error>(),
                    Some(walkcollide::Error::InvalidArgument(_) | walkcollide::Error::Resolution(_))
                );
            ExitCode::from(if user_error { 2 } else { 3 })
        }
    }
}
