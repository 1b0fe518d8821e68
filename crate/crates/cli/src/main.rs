use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use beamsim_core::config::{load_config_with, parse_config};
use beamsim_core::controller::{detect_contact, run_strategy, Strategy};
use beamsim_core::estimator::{aligned_window, estimate_stiffness};
use beamsim_core::experiments::{reproduce, run_sweep, Reproduction, SweepCell, SweepSpec};
use beamsim_core::geometry::Pose;
use beamsim_core::landscape::{build_landscape, EnergyLandscape};
use beamsim_core::planner::{path_csv, plan};
use beamsim_core::sim::{episode_csv, read_episode_csv, resample, EpisodeSummary, Termination};
use beamsim_core::{Error, WorldConfig};

/// Beam-traversal simulator for an ellipsoidal robot.
#[derive(Parser)]
#[command(name = "beamsim", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML config file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set beams.0.k=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log and summary.
    Simulate {
        #[arg(long, default_value = "force-feedback")]
        strategy: String,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        /// Sensorimotor delay in ms.
        #[arg(long)]
        delay_ms: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build an energy landscape.
    Landscape {
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        /// Also write the (alpha, beta) slice nearest to this X, e.g. `X=0`.
        #[arg(long)]
        slice: Option<String>,
    },
    /// Plan on a saved landscape.
    Plan {
        /// Landscape path stem (reads `<stem>.json` and `<stem>.bin`).
        #[arg(long)]
        landscape: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Start roll in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        /// Start pitch in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
    },
    /// Estimate beam stiffness from an episode CSV.
    Estimate {
        #[arg(long)]
        episode: PathBuf,
        /// Sensing window in ms after detected contact.
        #[arg(long)]
        sensing_ms: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a parameter sweep.
    Sweep {
        /// frequency | amplitude | sensing-time | delay | strategy
        #[arg(long)]
        variable: String,
        /// Comma-separated values: Hz, mm, ms, ms, or `name@k` pairs.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Report lateral position as zero to the estimator.
        #[arg(long)]
        corrupt_y: bool,
        /// Sensing window in ms for estimation cells.
        #[arg(long, default_value_t = 200.0)]
        sensing_ms: f64,
        /// Stiffness of both beams.
        #[arg(long)]
        k: Option<f64>,
    },
    /// Run a canned reproduction: table1, table2, table3, fig6, fig8, strategy-table or all.
    Reproduce {
        name: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
    },
}

/// Failures that map to exit code 3.
#[derive(Debug)]
struct EpisodeFailure(String);

impl std::fmt::Display for EpisodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EpisodeFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> ExitCode {
    if e.downcast_ref::<EpisodeFailure>().is_some() {
        return ExitCode::from(3);
    }
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_validation() => ExitCode::from(2),
        Some(_) => ExitCode::from(3),
        None => ExitCode::from(2),
    }
}

fn load(global: &Global) -> anyhow::Result<WorldConfig> {
    Ok(match &global.config {
        Some(path) => load_config_with(path, &global.overrides)?,
        None => parse_config("", &global.overrides)?,
    })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn with_stiffness(
    mut cfg: WorldConfig,
    k1: Option<f64>,
    k2: Option<f64>,
) -> anyhow::Result<WorldConfig> {
    if k1.is_some() || k2.is_some() {
        let (d1, d2) = (cfg.beams[0].k, cfg.beams[1].k);
        cfg = cfg.with_stiffness(k1.unwrap_or(d1), k2.unwrap_or(d2));
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load(&cli.global)?;
    let out = &cli.global.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Simulate {
            strategy,
            k1,
            k2,
            delay_ms,
            seed,
        } => {
            let mut cfg = with_stiffness(cfg, k1, k2)?;
            if let Some(ms) = delay_ms {
                cfg.delays.sensorimotor = ms * 1e-3;
                cfg.validate()?;
            }
            let strategy = Strategy::parse(&strategy, &cfg)?;
            let log = run_strategy(&strategy, &cfg, seed)?;
            let summary = EpisodeSummary::new(&log, &cfg);
            write(&out.join("episode.csv"), episode_csv(&log))?;
            write(
                &out.join("summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!(
                "{} k=({}, {}): {} in {:.2} s, {:.1} mJ",
                strategy.name(),
                cfg.beams[0].k,
                cfg.beams[1].k,
                log.outcome.as_str(),
                summary.duration,
                log.energy_mj
            );
            if log.termination != Termination::Reached {
                return Err(
                    EpisodeFailure(format!("episode ended as {:?}", log.termination)).into(),
                );
            }
        }
        Command::Landscape { k1, k2, slice } => {
            let cfg = with_stiffness(cfg, k1, k2)?;
            let land = build_landscape(cfg.beams[0].k, cfg.beams[1].k, &cfg.landscape, &cfg);
            let stem = out.join("landscape");
            land.save(&stem)?;
            info!("wrote {}.json and {}.bin", stem.display(), stem.display());
            if let Some(s) = slice {
                let x = parse_slice(&s)?;
                write(&out.join("slice.csv"), land.slice_csv(x))?;
            }
            let h = land.header();
            println!(
                "landscape {:?} cells, E in [{:.6}, {:.6}] J, {} unreachable",
                h.dims, h.min_energy, h.max_finite_energy, h.infinite_cells
            );
        }
        Command::Plan {
            landscape,
            x,
            alpha,
            beta,
        } => {
            let land = EnergyLandscape::load(&landscape)?;
            let pose = Pose::centred(x, alpha.to_radians(), beta.to_radians(), &cfg.body);
            let traj = plan(&land, &pose, &cfg, 0.0).map_err(|e| EpisodeFailure(e.to_string()))?;
            write(&out.join("plan.csv"), path_csv(&traj))?;
            let summary = json!({
                "cost_J": traj.cost,
                "n_nodes": traj.path.len(),
                "duration_s": traj.duration(),
                "max_abs_alpha_deg": traj.max_abs_alpha().to_degrees(),
                "max_abs_beta_deg": traj.max_abs_beta().to_degrees(),
                "k1": land.k[0],
                "k2": land.k[1],
                "config_hash": cfg.hash(),
            });
            write(
                &out.join("plan.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!(
                "plan: {} nodes, cost {:.3} mJ",
                traj.path.len(),
                traj.cost * 1e3
            );
        }
        Command::Estimate {
            episode,
            sensing_ms,
            seed,
        } => {
            let text = fs::read_to_string(&episode).map_err(|source| Error::Io {
                path: episode.display().to_string(),
                source,
            })?;
            let (force, poses) = read_episode_csv(&text)?;
            let (force, poses) = resample(&force, &poses, cfg.sensor.period());
            let t_c = detect_contact(&force, cfg.sensor.contact_threshold)
                .ok_or_else(|| EpisodeFailure("no contact in the episode".into()))?;
            let ts = sensing_ms.map_or(cfg.delays.sensing_time, |ms| ms * 1e-3);
            let (f, p) = aligned_window(&force, &poses, t_c, t_c + ts);
            let est = estimate_stiffness(&f, &p, &cfg, seed);
            if est.insufficient_contact {
                warn!("only {} usable contact samples", est.samples_used);
            }
            write(
                &out.join("estimate.json"),
                serde_json::to_string_pretty(&est)?,
            )?;
            println!(
                "k_hat = ({:.4}, {:.4}), residual {:.3e}",
                est.k[0], est.k[1], est.residual
            );
        }
        Command::Sweep {
            variable,
            values,
            trials,
            seed_base,
            corrupt_y,
            sensing_ms,
            k,
        } => {
            let mut base = cfg;
            if let Some(k) = k {
                base = base.with_stiffness(k, k);
            }
            let cells = values
                .iter()
                .map(|v| parse_cell(&variable, v))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let spec = SweepSpec {
                name: format!("sweep-{variable}"),
                cells,
                trials,
                seed_base,
                corrupt_y,
                sensing_time: sensing_ms * 1e-3,
                base,
            };
            let result = run_sweep(&spec)?;
            let path = out.join(format!("{}.csv", spec.name));
            write(&path, result.to_csv())?;
            for c in &result.cells {
                println!(
                    "{:<24} e_mean {:>8} energy {:>8} outcome {} failures {}",
                    c.cell,
                    c.mean_rel_error.map_or("-".into(), |v| format!("{v:.4}")),
                    c.energy_mean.map_or("-".into(), |v| format!("{v:.2}")),
                    c.outcome.map_or("-", |o| o.as_str()),
                    c.failures
                );
            }
        }
        Command::Reproduce {
            name,
            trials,
            seed_base,
        } => {
            let targets = if name == "all" {
                Reproduction::ALL.to_vec()
            } else {
                vec![Reproduction::parse(&name)?]
            };
            for target in targets {
                let (result, files) = reproduce(target, &cfg, trials, seed_base, out)?;
                for f in files {
                    info!("wrote {}", f.display());
                }
                print!("{}", target.report(&result));
            }
        }
    }
    Ok(())
}

fn parse_slice(s: &str) -> anyhow::Result<f64> {
    let v = s
        .strip_prefix("X=")
        .or_else(|| s.strip_prefix("x="))
        .unwrap_or(s);
    v.parse()
        .map_err(|_| Error::Invalid {
            field: "slice".into(),
            reason: format!("expected X=<metres>, got `{s}`"),
        })
        .map_err(Into::into)
}

fn parse_cell(variable: &str, value: &str) -> anyhow::Result<SweepCell> {
    let bad = |reason: String| -> anyhow::Error {
        Error::Invalid {
            field: "sweep.values".into(),
            reason,
        }
        .into()
    };
    let num = || -> anyhow::Result<f64> {
        value
            .trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("`{value}` is not a number")))
    };
    Ok(match variable {
        "frequency" => SweepCell::Frequency { value: num()? },
        "amplitude" => SweepCell::Amplitude {
            value: num()? * 1e-3,
        },
        "sensing-time" => SweepCell::SensingTime {
            value: num()? * 1e-3,
        },
        "delay" => SweepCell::Delay {
            value: num()? * 1e-3,
        },
        "strategy" => {
            let (name, k) = value
                .split_once('@')
                .ok_or_else(|| bad(format!("expected name@k, got `{value}`")))?;
            let k = k
                .parse()
                .map_err(|_| bad(format!("bad stiffness in `{value}`")))?;
            SweepCell::Strategy {
                name: name.trim().to_string(),
                k,
            }
        }
        other => {
            return Err(anyhow!(Error::Invalid {
                field: "sweep.variable".into(),
                reason: format!("unknown variable `{other}`"),
            }))
        }
    })
}
