//! Command-line interface: synthetic cloud generation, collision-probability
//! checks, error/FLOPs sweeps, attention oracle comparisons, and manifest
//! replay.
//!
//! Exit codes: 0 success, 2 usage, 3 validation failure, 4 I/O failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use lshattn::cli::{
    run_attn_check, run_collision, run_gen, run_replay, run_sweep_cmd, AttnCheckConfig,
    CollisionConfig, GenConfig, SweepConfig,
};
use lshattn::Error;

#[derive(Parser)]
#[command(name = "lshattn", version, about = "LSH/RFF kernel approximation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic point cloud CSV.
    Gen {
        /// Generator kind: square | ball.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        /// Square side length.
        #[arg(long, default_value_t = 10.0)]
        side: f64,
        /// Ball dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate analytic vs Monte-Carlo collision probabilities with bounds.
    Collision {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Comma-separated z/r grid.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0, 2.0, 4.0])]
        z_over_r: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the error-vs-FLOPs sweep and emit Pareto frontier curves.
    Sweep {
        /// JSON config file; explicit flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long)]
        knn: Option<usize>,
        /// Use the symmetric closure of the k-NN support.
        #[arg(long)]
        symmetric_support: bool,
        /// Comma-separated subset of rff,or_only,or_and.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        r_step: Option<f64>,
        #[arg(long)]
        m1_max: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        m2: Option<Vec<usize>>,
        /// Comma-separated RFF feature counts.
        #[arg(long, value_delimiter = ',')]
        rff_d: Option<Vec<usize>>,
        /// Comma-separated FLOP budgets.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,
        /// Interpret budgets as multiples of n*d.
        #[arg(long)]
        budgets_nd: bool,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-seed reports CSV.
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Worker threads (0 = automatic).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare block-diagonal LSH attention against the dense oracle.
    AttnCheck {
        /// Cloud CSV; a synthetic density-matched square is used if absent.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        dv: usize,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 3)]
        tables: usize,
        #[arg(long, default_value_t = 100)]
        block_size: usize,
        #[arg(long, default_value_t = 2)]
        coord_hashes: usize,
        #[arg(long, default_value_t = 16.0)]
        bucket_total: f64,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Dense-oracle point cap; runs above it are refused.
        #[arg(long, default_value_t = 4096)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional embeddings CSV for the last seed.
        #[arg(long)]
        embeddings_out: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Skip verifying input file hashes.
        #[arg(long)]
        no_verify_inputs: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { kind, n, side, d, seed, out } => {
            run_gen(&GenConfig { kind, n, side, dim: d, seed, out })
        }
        Command::Collision { r, z_over_r, trials, seed, out } => {
            run_collision(&CollisionConfig { r, z_over_r, trials, seed, out })
        }
        Command::Sweep {
            config,
            cloud,
            knn,
            symmetric_support,
            schemes,
            r_min,
            r_max,
            r_step,
            m1_max,
            m2,
            rff_d,
            budgets,
            budgets_nd,
            seeds,
            master_seed,
            out,
            reports,
            jobs,
        } => build_sweep_config(
            config,
            cloud,
            knn,
            symmetric_support,
            schemes,
            r_min,
            r_max,
            r_step,
            m1_max,
            m2,
            rff_d,
            budgets,
            budgets_nd,
            seeds,
            master_seed,
            out,
            reports,
            jobs,
        )
        .and_then(|cfg| run_sweep_cmd(&cfg)),
        Command::AttnCheck {
            cloud,
            n,
            d,
            dv,
            omega,
            tables,
            block_size,
            coord_hashes,
            bucket_total,
            seeds,
            max_n,
            seed,
            out,
            embeddings_out,
        } => run_attn_check(&AttnCheckConfig {
            cloud,
            n,
            d,
            dv,
            omega,
            tables,
            block_size,
            coord_hashes,
            bucket_total,
            seeds,
            max_n,
            seed,
            out,
            embeddings_out,
        }),
        Command::Replay { manifest, no_verify_inputs } => {
            run_replay(&manifest, !no_verify_inputs)
        }
    };
    match result {
        Ok(_) => {}
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            std::process::exit(e.exit_code());
        }
    }
}

// Flags override the JSON config file, which overrides defaults.
#[allow(clippy::too_many_arguments)]
fn build_sweep_config(
    config: Option<PathBuf>,
    cloud: Option<PathBuf>,
    knn: Option<usize>,
    symmetric_support: bool,
    schemes: Option<Vec<String>>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    r_step: Option<f64>,
    m1_max: Option<usize>,
    m2: Option<Vec<usize>>,
    rff_d: Option<Vec<usize>>,
    budgets: Option<Vec<u64>>,
    budgets_nd: bool,
    seeds: Option<usize>,
    master_seed: Option<u64>,
    out: Option<PathBuf>,
    reports: Option<PathBuf>,
    jobs: Option<usize>,
) -> Result<SweepConfig, Error> {
    let mut cfg: SweepConfig = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => {
            let cloud = cloud.clone().ok_or_else(|| {
                Error::invalid("--cloud is required unless a config file provides it")
            })?;
            let out = out.clone().ok_or_else(|| {
                Error::invalid("--out is required unless a config file provides it")
            })?;
            serde_json::from_value(serde_json::json!({ "cloud": cloud, "out": out }))?
        }
    };
    if let Some(v) = cloud {
        cfg.cloud = v;
    }
    if let Some(v) = knn {
        cfg.knn = v;
    }
    if symmetric_support {
        cfg.symmetric_support = true;
    }
    if let Some(v) = schemes {
        cfg.schemes = v;
    }
    if let Some(v) = r_min {
        cfg.r_min = v;
    }
    if let Some(v) = r_max {
        cfg.r_max = v;
    }
    if let Some(v) = r_step {
        cfg.r_step = v;
    }
    if let Some(v) = m1_max {
        cfg.m1_max = v;
    }
    if let Some(v) = m2 {
        cfg.m2_values = v;
    }
    if let Some(v) = rff_d {
        cfg.rff_features = v;
    }
    if let Some(v) = budgets {
        cfg.budgets = v;
    }
    if budgets_nd {
        cfg.budgets_nd = true;
    }
    if let Some(v) = seeds {
        cfg.seeds = v;
    }
    if let Some(v) = master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = out {
        cfg.out = v;
    }
    if reports.is_some() {
        cfg.reports = reports;
    }
    if let Some(v) = jobs {
        cfg.jobs = v;
    }
    Ok(cfg)
}
