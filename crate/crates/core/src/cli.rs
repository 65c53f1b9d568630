//! Command-line surface: argument definitions and command implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{ddpm_train, DdpmModel, DdpmSampler};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::RunConfig;
use crate::dataset::{collect, OfflineDataset};
use crate::dynamics::discretize_zoh;
use crate::error::{Error, Result};
use crate::eval::{evaluate, export, read_episodes, summarize, write_summary, Method, SummaryRow};
use crate::planner::DriftingSampler;
use crate::selfcheck;
use crate::trainer::{log_path, DriftingModel, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "dmpc",
    version,
    about = "Offline best-of-M planning with a cost-tilted one-step trajectory generator"
)]
pub struct Cli {
    /// Single-threaded, bit-deterministic execution.
    #[arg(long, global = true)]
    pub serial: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,

    /// Override a config entry, e.g. `--set dataset.n=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default configuration.
    InitConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect an offline dataset.
    Collect {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset path (default `<output_dir>/dataset_H<H>.bin`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a generator or the diffusion baseline.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// drifting, drifting-prior or ddpm.
        #[arg(long)]
        kind: ModelKind,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Checkpoint stem (default `<output_dir>/<kind>_H<H>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue a drifting checkpoint up to `train.epochs`.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Closed-loop evaluation against the LQR oracle.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint stem or manifest path. Repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated horizons (default `eval.horizons`).
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        /// Output directory (default `<output_dir>/eval`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute summary statistics from an episodes CSV.
    Stats {
        #[arg(long)]
        episodes: PathBuf,
        /// Bootstrap settings come from this config when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fast numerical checks and validate checkpoints.
    Selfcheck {
        /// Checkpoint to validate. Repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
}

/// Build the global thread pool: one thread with `serial`, else `DMPC_THREADS` if set.
pub fn configure_threads(serial: bool) -> Result<()> {
    let threads = if serial {
        Some(1)
    } else {
        match std::env::var("DMPC_THREADS") {
            Ok(v) => Some(v.parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
                Error::Config(format!(
                    "DMPC_THREADS must be a positive integer, got `{v}`"
                ))
            })?),
            Err(_) => None,
        }
    };
    if let Some(n) = threads {
        // a pool may already exist when called twice in one process; keep it
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn default_dataset_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .join(format!("dataset_H{}.bin", cfg.dataset.horizon))
}

pub fn cmd_collect(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let sys = discretize_zoh(&cfg.dynamics)?;
    let ds = collect(&sys, &cfg.collect_config())?;
    let path = out.unwrap_or_else(|| default_dataset_path(cfg));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ds.save(&path)?;
    cfg.write_resolved(path.parent().unwrap_or(Path::new(".")), "collect")?;
    log::info!(
        "wrote {} trajectories (H={}) to {}",
        ds.len(),
        ds.meta.horizon,
        path.display()
    );
    Ok(path)
}

fn check_dataset(cfg: &RunConfig, ds: &OfflineDataset) -> Result<()> {
    if ds.meta.horizon != cfg.dataset.horizon {
        return Err(Error::Config(format!(
            "dataset has H={} but the config has dataset.horizon={}",
            ds.meta.horizon, cfg.dataset.horizon
        )));
    }
    if ds.meta.d_x != cfg.cost.eval_q.len() || ds.meta.d_u != cfg.cost.eval_r.len() {
        return Err(Error::Config(format!(
            "dataset has d_x={}, d_u={}; the config expects d_x={}, d_u={}",
            ds.meta.d_x,
            ds.meta.d_u,
            cfg.cost.eval_q.len(),
            cfg.cost.eval_r.len()
        )));
    }
    Ok(())
}

pub fn cmd_train(
    cfg: &RunConfig,
    kind: ModelKind,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<PathBuf> {
    let ds_path = dataset.unwrap_or_else(|| default_dataset_path(cfg));
    let ds = OfflineDataset::load(&ds_path)?;
    check_dataset(cfg, &ds)?;
    let stem = out.unwrap_or_else(|| {
        cfg.output_dir
            .join(format!("{}_H{}", kind.as_str(), ds.meta.horizon))
    });
    let cost_box = cfg.cost_box();
    let (checkpoint, log) = match kind {
        ModelKind::Ddpm => {
            if resume.is_some() {
                return Err(Error::Config(
                    "resume is only supported for drifting models".into(),
                ));
            }
            let dcfg = cfg.ddpm_config();
            let (model, log) = ddpm_train(&ds, &cost_box, &dcfg)?;
            (model.to_checkpoint(&dcfg, dcfg.epochs), log)
        }
        _ => {
            let trainer = match &resume {
                Some(path) => {
                    let ck = Checkpoint::load(path)?;
                    if ck.manifest.kind != kind {
                        return Err(Error::Config(format!(
                            "resume checkpoint is {}, requested {}",
                            ck.manifest.kind.as_str(),
                            kind.as_str()
                        )));
                    }
                    Trainer::resume(&ds, cost_box, &ck)?
                }
                None => Trainer::new(&ds, cost_box, cfg.train_config(), kind)?,
            };
            let mut dump = stem.as_os_str().to_owned();
            dump.push(".failed");
            let mut trainer = trainer.with_failure_dump(PathBuf::from(dump));
            trainer.run()?;
            (trainer.checkpoint(), trainer.log().clone())
        }
    };
    checkpoint.save(&stem)?;
    log.write_csv(&log_path(&stem))?;
    cfg.write_resolved(
        stem.parent().unwrap_or(Path::new(".")),
        &format!("train_{}", kind.as_str()),
    )?;
    log::info!("wrote checkpoint {}", stem.display());
    Ok(stem)
}

enum Loaded {
    Drifting(DriftingModel),
    Ddpm(DdpmModel),
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    horizons: &[usize],
    out: Option<PathBuf>,
) -> Result<Vec<SummaryRow>> {
    let horizons = if horizons.is_empty() {
        cfg.eval.horizons.clone()
    } else {
        horizons.to_vec()
    };
    let sys = discretize_zoh(&cfg.dynamics)?;
    let mut by_h: BTreeMap<usize, Vec<(ModelKind, Loaded)>> = BTreeMap::new();
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        let h = ck.manifest.horizon;
        if !horizons.contains(&h) {
            let requested: Vec<String> = horizons.iter().map(|h| format!("H={h}")).collect();
            return Err(Error::Config(format!(
                "checkpoint {} was trained for H={h}, but the requested horizon is {}",
                path.display(),
                requested.join(", ")
            )));
        }
        let kind = ck.manifest.kind;
        let model = match kind {
            ModelKind::Ddpm => Loaded::Ddpm(DdpmModel::from_checkpoint(&ck)?),
            _ => Loaded::Drifting(DriftingModel::from_checkpoint(&ck)?),
        };
        if by_h
            .get(&h)
            .is_some_and(|v| v.iter().any(|(k, _)| *k == kind))
        {
            return Err(Error::Config(format!(
                "two {} checkpoints for H={h}",
                kind.as_str()
            )));
        }
        by_h.entry(h).or_default().push((kind, model));
    }
    let ecfg = cfg.eval_config()?;
    let guidance = cfg.ddpm.guidance_scale;
    let mut records = Vec::new();
    for &h in &horizons {
        let loaded = by_h.remove(&h).unwrap_or_default();
        let mut drifting = Vec::new();
        let mut ddpm = Vec::new();
        for (kind, m) in &loaded {
            match m {
                Loaded::Drifting(model) => {
                    drifting.push((kind.as_str().to_string(), DriftingSampler::new(model)))
                }
                Loaded::Ddpm(model) => {
                    ddpm.push((
                        "diffusion".to_string(),
                        DdpmSampler {
                            model,
                            guidance_scale: None,
                        },
                    ));
                    ddpm.push((
                        "guided-diffusion".to_string(),
                        DdpmSampler {
                            model,
                            guidance_scale: Some(guidance),
                        },
                    ));
                }
            }
        }
        let mut methods = vec![Method::Oracle];
        methods.extend(drifting.iter().map(|(l, s)| Method::Planner {
            label: l.clone(),
            sampler: s,
        }));
        methods.extend(ddpm.iter().map(|(l, s)| Method::Planner {
            label: l.clone(),
            sampler: s,
        }));
        log::info!("evaluating {} methods at H={h}", methods.len());
        records.extend(evaluate(&sys, &methods, h, &ecfg)?);
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.join("eval"));
    let summary = export(
        &records,
        &dir,
        &cfg.bootstrap_config(),
        cfg.bootstrap_seed(),
    )?;
    cfg.write_resolved(&dir, "eval")?;
    Ok(summary)
}

pub fn cmd_stats(
    episodes: &Path,
    cfg: Option<&RunConfig>,
    out: Option<PathBuf>,
) -> Result<Vec<SummaryRow>> {
    let default = RunConfig::default();
    let cfg = cfg.unwrap_or(&default);
    let rows = read_episodes(episodes)?;
    let summary = summarize(&rows, &cfg.bootstrap_config(), cfg.bootstrap_seed())?;
    let path = out.unwrap_or_else(|| episodes.with_file_name("summary.csv"));
    write_summary(&summary, &path)?;
    Ok(summary)
}

pub fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<18} {:>4} {:>4} {:>11} {:>9} {:>24} {:>11} {:>11}",
        "method", "H", "n", "mean", "se", "95% CI", "median", "time [ms]"
    );
    for r in rows {
        println!(
            "{:<18} {:>4} {:>4} {:>11.3} {:>9.3} {:>11.3}..{:<11.3} {:>11.3} {:>11.3}",
            r.method, r.horizon, r.n, r.mean, r.se, r.ci_lo, r.ci_hi, r.median, r.time_mean_ms
        );
    }
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.serial)?;
    let serial = |mut cfg: RunConfig| {
        if cli.serial {
            cfg.eval.parallel = false;
        }
        cfg
    };
    match cli.command {
        Command::InitConfig { out } => {
            let text = RunConfig::default().to_toml_string();
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
        }
        Command::Collect { config, out } => {
            let path = cmd_collect(&serial(config.load()?), out)?;
            println!("{}", path.display());
        }
        Command::Train {
            config,
            kind,
            dataset,
            out,
            resume,
        } => {
            let stem = cmd_train(&serial(config.load()?), kind, dataset, out, resume)?;
            println!("{}", stem.display());
        }
        Command::Eval {
            config,
            checkpoints,
            horizons,
            out,
        } => {
            let summary = cmd_eval(&serial(config.load()?), &checkpoints, &horizons, out)?;
            print_summary(&summary);
        }
        Command::Stats {
            episodes,
            config,
            out,
        } => {
            let cfg = config.map(|p| RunConfig::load(&p, &[])).transpose()?;
            print_summary(&cmd_stats(&episodes, cfg.as_ref(), out)?);
        }
        Command::Selfcheck { checkpoints } => {
            let paths: Vec<&Path> = checkpoints.iter().map(PathBuf::as_path).collect();
            let results = selfcheck::run_all(&paths);
            let mut failed = 0;
            for r in &results {
                println!(
                    "[{}] {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}
