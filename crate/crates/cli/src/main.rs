use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dynwave::config::RunConfig;
use dynwave::harness::{
    cmd_oracle_compare, cmd_picard, cmd_run, cmd_sweep, cmd_thresholds, ThresholdRequest,
    MANIFEST_FILE, ORACLE_FILE, PICARD_FILE, SWEEP_FILE, THRESHOLDS_FILE, TRAJECTORY_FILE,
};
use dynwave::thresholds::EmbeddingSpace;

#[derive(Parser)]
#[command(
    name = "dynwave",
    version,
    about = "Damped wave equation with a dynamic boundary: runs, sweeps and cross-checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to `experiment.out` in the config, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed of the threshold restarts; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    H01,
    #[value(name = "h1_gamma0")]
    H1Gamma0,
}

impl From<Space> for EmbeddingSpace {
    fn from(s: Space) -> Self {
        match s {
            Space::H01 => EmbeddingSpace::H01,
            Space::H1Gamma0 => EmbeddingSpace::H1Gamma0,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write the trajectory and manifest.
    Run(Common),
    /// Compute the embedding constant and the well constants.
    Thresholds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p: Option<f64>,
        /// Number of mesh elements.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "h01")]
        space: Space,
        /// Use this embedding constant instead of computing it.
        #[arg(long)]
        inject_b: Option<f64>,
    },
    /// Run the `[sweep]` grid and write the summary table.
    Sweep(Common),
    /// Picard iteration over the `[picard]` horizons.
    Picard(Common),
    /// Compare the finite-element run with the spectral solver.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        /// Basis sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n_modes: Option<Vec<usize>>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let Some(path) = &common.config else {
        bail!("--config is required for this command");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| {
            cfg.and_then(|c| c.experiment.out.clone())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn pool(jobs: usize) {
    // Only fails if a global pool already exists.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build_global();
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            pool(common.jobs);
            let cfg = load(&common)?;
            let out = out_dir(&common, Some(&cfg));
            let manifest = cmd_run(&cfg, &out)?;
            match (&manifest.termination, &manifest.failure) {
                (Some(t), _) => println!("termination: {}", t.label()),
                (None, Some(f)) => println!("run failed: {f}"),
                (None, None) => {}
            }
            if let (Some(mu), Some(r2)) = (manifest.mu_hat, manifest.r_squared) {
                println!("growth fit on L: mu_hat = {mu:.6}, R^2 = {r2:.6}");
            }
            report(&out.join(TRAJECTORY_FILE));
            report(&out.join(MANIFEST_FILE));
        }
        Command::Thresholds {
            common,
            p,
            n,
            space,
            inject_b,
        } => {
            pool(common.jobs);
            let cfg = common.config.as_ref().map(|_| load(&common)).transpose()?;
            let p = p
                .or(cfg.as_ref().map(|c| c.model.p))
                .context("--p or --config is required")?;
            let n_elem = n.or(cfg.as_ref().map(|c| c.mesh.n_elem)).unwrap_or(256);
            let seed = common
                .seed
                .or(cfg.as_ref().map(|c| c.experiment.seed))
                .unwrap_or(0);
            let req = ThresholdRequest {
                p,
                n_elem,
                space: space.into(),
                seed,
                inject_b,
            };
            let out = out_dir(&common, cfg.as_ref());
            let c = cmd_thresholds(&req, &out)?;
            println!(
                "B = {:.12}  alpha1 = {:.12}  d = {:.12}",
                c.b, c.alpha1, c.d
            );
            report(&out.join(THRESHOLDS_FILE));
        }
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            let out = out_dir(&common, Some(&cfg));
            let rows = cmd_sweep(&cfg, common.jobs, &out)?;
            println!("{} cells", rows.len());
            report(&out.join(SWEEP_FILE));
        }
        Command::Picard(common) => {
            pool(common.jobs);
            let cfg = load(&common)?;
            let out = out_dir(&common, Some(&cfg));
            for r in cmd_picard(&cfg, &out)? {
                let median = r.median_ratio.map_or("-".into(), |m| format!("{m:.4e}"));
                println!(
                    "T = {}: {} iterates, converged = {}, median ratio = {median}",
                    r.t_horizon, r.iterations, r.converged
                );
            }
            report(&out.join(PICARD_FILE));
        }
        Command::OracleCompare { common, n_modes } => {
            pool(common.jobs);
            let cfg = load(&common)?;
            let out = out_dir(&common, Some(&cfg));
            for row in cmd_oracle_compare(&cfg, n_modes.as_deref(), &out)? {
                println!("n_modes = {}: gap = {:.3e}", row.n_modes, row.gap);
            }
            report(&out.join(ORACLE_FILE));
        }
    }
    Ok(())
}
