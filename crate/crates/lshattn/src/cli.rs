//! Command implementations behind the `lshattn` binary.
//!
//! Every command writes its outputs plus a JSON run manifest holding the full
//! configuration, master seed, and input file hashes. Replaying a manifest
//! reproduces the output files byte-identically (the manifest's own timestamp
//! aside).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::Scheme;
use crate::attention::{attention_error, block_attention, dense_attention, BlockAttnConfig};
use crate::error::{Error, Result};
use crate::geometry::{gen_uniform_ball, gen_uniform_square, knn_support_auto, PointCloud};
use crate::lsh::{collision_frequency_mc, collision_prob, collision_prob_bounds};
use crate::seeding::derive_seed;
use crate::tradeoff::{
    aggregate, default_budgets, emit_curves, pareto, run_sweep, write_reports_csv, SweepGrid,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Everything needed to reproduce a run byte-identically, except the
/// timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

/// Manifest path for a primary output file: `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(format!("{digest:x}"))
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_manifest<C: Serialize>(
    command: &str,
    config: &C,
    master_seed: u64,
    inputs: &[&Path],
    primary_out: &Path,
) -> Result<PathBuf> {
    let mut input_hashes = BTreeMap::new();
    for input in inputs {
        input_hashes.insert(input.display().to_string(), sha256_file(input)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        config: serde_json::to_value(config)?,
        input_hashes,
        timestamp_unix: unix_timestamp(),
    };
    let path = manifest_path(primary_out);
    manifest.write(&path)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// gen

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub kind: String,
    pub n: usize,
    #[serde(default = "default_side")]
    pub side: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
}

fn default_side() -> f64 {
    10.0
}

fn default_dim() -> usize {
    2
}

/// Generate a synthetic cloud and write it as CSV plus a manifest.
pub fn run_gen(cfg: &GenConfig) -> Result<Vec<PathBuf>> {
    let cloud = match cfg.kind.as_str() {
        "square" => gen_uniform_square(cfg.n, cfg.side, cfg.seed)?,
        "ball" => gen_uniform_ball(cfg.n, cfg.dim, cfg.seed)?,
        other => return Err(Error::invalid(format!("unknown generator kind '{other}'"))),
    };
    cloud.write_csv_path(&cfg.out)?;
    let manifest = write_manifest("gen", cfg, cfg.seed, &[], &cfg.out)?;
    println!("gen: wrote {} points to {}", cloud.len(), cfg.out.display());
    Ok(vec![cfg.out.clone(), manifest])
}

// ---------------------------------------------------------------------------
// collision

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_z_over_r")]
    pub z_over_r: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
}

fn default_r() -> f64 {
    1.0
}

fn default_z_over_r() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

fn default_trials() -> u64 {
    1_000_000
}

/// Compare the closed-form collision probability against Monte Carlo and the
/// piecewise bounds on a z/r grid.
pub fn run_collision(cfg: &CollisionConfig) -> Result<Vec<PathBuf>> {
    if cfg.trials == 0 {
        return Err(Error::invalid("need at least one Monte Carlo trial"));
    }
    if cfg.z_over_r.is_empty() {
        return Err(Error::invalid("need at least one z/r value"));
    }
    let mut out = String::from("z_over_r,analytic,monte_carlo,lower,upper\n");
    for (idx, &ratio) in cfg.z_over_r.iter().enumerate() {
        let z = ratio * cfg.r;
        let analytic = collision_prob(z, cfg.r)?;
        let (lower, upper) = collision_prob_bounds(z, cfg.r)?;
        let mc = collision_frequency_mc(
            z,
            cfg.r,
            cfg.trials,
            derive_seed(cfg.seed, "collision-mc", idx as u64),
        )?;
        out.push_str(&format!("{ratio},{analytic},{mc},{lower},{upper}\n"));
    }
    std::fs::write(&cfg.out, out)?;
    let manifest = write_manifest("collision", cfg, cfg.seed, &[], &cfg.out)?;
    println!(
        "collision: wrote {} rows ({} trials each) to {}",
        cfg.z_over_r.len(),
        cfg.trials,
        cfg.out.display()
    );
    Ok(vec![cfg.out.clone(), manifest])
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub cloud: PathBuf,
    #[serde(default = "default_knn")]
    pub knn: usize,
    #[serde(default)]
    pub symmetric_support: bool,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_r_step")]
    pub r_step: f64,
    #[serde(default = "default_m1_max")]
    pub m1_max: usize,
    #[serde(default = "default_m2_values")]
    pub m2_values: Vec<usize>,
    #[serde(default = "default_rff_features")]
    pub rff_features: Vec<usize>,
    /// Absolute FLOP budgets, or multiples of n*d when `budgets_nd` is set.
    /// Empty means the default ladder.
    #[serde(default)]
    pub budgets: Vec<u64>,
    #[serde(default)]
    pub budgets_nd: bool,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub reports: Option<PathBuf>,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub jobs: usize,
}

fn default_knn() -> usize {
    64
}

fn default_schemes() -> Vec<String> {
    vec!["rff".into(), "or_only".into(), "or_and".into()]
}

fn default_r_min() -> f64 {
    0.01
}

fn default_r_max() -> f64 {
    5.0
}

fn default_r_step() -> f64 {
    0.10
}

fn default_m1_max() -> usize {
    20
}

fn default_m2_values() -> Vec<usize> {
    vec![1, 2, 3, 4, 6, 8]
}

fn default_rff_features() -> Vec<usize> {
    vec![2, 4, 8, 16, 32, 64, 128, 256]
}

fn default_seeds() -> usize {
    20
}

impl SweepConfig {
    pub fn grid(&self, n: usize, dim: usize) -> Result<SweepGrid> {
        let schemes: Vec<Scheme> =
            self.schemes.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        if !(self.r_step > 0.0) || !(self.r_min > 0.0) || self.r_max < self.r_min {
            return Err(Error::invalid("invalid bucket-width grid"));
        }
        let steps = ((self.r_max - self.r_min) / self.r_step + 1e-9).floor() as usize;
        let r_values: Vec<f64> =
            (0..=steps).map(|i| self.r_min + self.r_step * i as f64).collect();
        if self.m1_max == 0 {
            return Err(Error::invalid("m1_max must be at least 1"));
        }
        let budgets = if self.budgets.is_empty() {
            default_budgets(n, dim)
        } else if self.budgets_nd {
            let nd = (n * dim) as u64;
            self.budgets.iter().map(|m| m * nd).collect()
        } else {
            self.budgets.clone()
        };
        let grid = SweepGrid {
            schemes,
            r_values,
            m1_values: (1..=self.m1_max).collect(),
            m2_values: self.m2_values.clone(),
            rff_features: self.rff_features.clone(),
            budgets,
            seeds_per_cell: self.seeds,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Run the tradeoff sweep over a cloud file and write the frontier CSV.
pub fn run_sweep_cmd(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    let cloud = PointCloud::read_csv_path(&cfg.cloud)?;
    if cfg.knn >= cloud.len() {
        return Err(Error::invalid(format!(
            "knn={} needs a cloud with more than {} points",
            cfg.knn,
            cfg.knn
        )));
    }
    let grid = cfg.grid(cloud.len(), cloud.dim())?;
    let mut support = knn_support_auto(&cloud, cfg.knn)?;
    if cfg.symmetric_support {
        support = support.symmetric_closure();
    }

    let reports = if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| run_sweep(&cloud, &support, &grid, cfg.master_seed))?
    } else {
        run_sweep(&cloud, &support, &grid, cfg.master_seed)?
    };

    let cells = aggregate(&reports);
    let frontier = pareto(&cells, &grid.budgets, &grid.schemes);
    for point in &frontier {
        if point.best.is_none() {
            println!(
                "sweep: no {} configuration fits budget {}",
                point.scheme, point.budget
            );
        }
    }
    let file = std::fs::File::create(&cfg.out)?;
    emit_curves(&frontier, std::io::BufWriter::new(file))?;
    let mut outputs = vec![cfg.out.clone()];
    if let Some(reports_path) = &cfg.reports {
        let file = std::fs::File::create(reports_path)?;
        write_reports_csv(&reports, std::io::BufWriter::new(file))?;
        outputs.push(reports_path.clone());
    }
    let manifest =
        write_manifest("sweep", cfg, cfg.master_seed, &[cfg.cloud.as_path()], &cfg.out)?;
    outputs.push(manifest);
    println!(
        "sweep: {} reports over {} cells -> {}",
        reports.len(),
        cells.len(),
        cfg.out.display()
    );
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// attn-check

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttnCheckConfig {
    /// Cloud file; a synthetic density-matched square is generated if absent.
    #[serde(default)]
    pub cloud: Option<PathBuf>,
    #[serde(default = "default_attn_n")]
    pub n: usize,
    /// Query/key dimension before the coordinate block.
    #[serde(default = "default_attn_d")]
    pub d: usize,
    /// Value dimension.
    #[serde(default = "default_attn_d")]
    pub dv: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_tables")]
    pub tables: usize,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_coord_hashes")]
    pub coord_hashes: usize,
    #[serde(default = "default_bucket_total")]
    pub bucket_total: f64,
    #[serde(default = "default_attn_seeds")]
    pub seeds: usize,
    /// Refuse to run the dense oracle above this point count.
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    /// Optional embeddings CSV (last seed); diagnostics JSON lands next to it.
    #[serde(default)]
    pub embeddings_out: Option<PathBuf>,
}

fn default_attn_n() -> usize {
    2000
}

fn default_attn_d() -> usize {
    8
}

fn default_omega() -> f64 {
    1.0
}

fn default_tables() -> usize {
    3
}

fn default_block_size() -> usize {
    100
}

fn default_coord_hashes() -> usize {
    2
}

fn default_bucket_total() -> f64 {
    16.0
}

fn default_attn_seeds() -> usize {
    5
}

fn default_max_n() -> usize {
    4096
}

/// Compare the block-diagonal attention against the dense oracle over several
/// hash seeds and write per-seed error/coverage rows.
pub fn run_attn_check(cfg: &AttnCheckConfig) -> Result<Vec<PathBuf>> {
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    let (cloud, input_paths): (PointCloud, Vec<&Path>) = match &cfg.cloud {
        Some(path) => (PointCloud::read_csv_path(path)?, vec![path.as_path()]),
        None => {
            // Density-matched square: ~300 points per unit area.
            let side = (cfg.n as f64 / 300.0).sqrt();
            (gen_uniform_square(cfg.n, side, derive_seed(cfg.seed, "attn-cloud", 0))?, vec![])
        }
    };
    let n = cloud.len();
    if n > cfg.max_n {
        return Err(Error::invalid(format!(
            "n={n} exceeds the dense-oracle cap of {}; raise max_n to force it",
            cfg.max_n
        )));
    }
    if cfg.seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }

    let mut rng = crate::seeding::rng_for(cfg.seed, "attn-inputs", 0);
    let q_tilde = Array2::from_shape_fn((n, cfg.d), |_| rng.sample(StandardNormal));
    let k_tilde = Array2::from_shape_fn((n, cfg.d), |_| rng.sample(StandardNormal));
    let v: Array2<f64> = Array2::from_shape_fn((n, cfg.dv), |_| rng.sample(StandardNormal));
    let scale = (2.0 * cfg.omega).sqrt();
    let mut q = Array2::zeros((n, cfg.d + cloud.dim()));
    let mut k = Array2::zeros((n, cfg.d + cloud.dim()));
    for i in 0..n {
        for j in 0..cfg.d {
            q[[i, j]] = q_tilde[[i, j]];
            k[[i, j]] = k_tilde[[i, j]];
        }
        for j in 0..cloud.dim() {
            q[[i, cfg.d + j]] = scale * cloud.coords()[[i, j]];
            k[[i, cfg.d + j]] = scale * cloud.coords()[[i, j]];
        }
    }

    let exact = dense_attention(&q, &k, &v)?;
    let mut rows = String::from("seed,rel_error,captured_mass,flagged_rows\n");
    let mut last_output = None;
    for s in 0..cfg.seeds {
        let block_cfg = BlockAttnConfig {
            tables: cfg.tables,
            coord_hashes: cfg.coord_hashes,
            qk_aux_hashes: 0,
            bucket_total: cfg.bucket_total,
            block_size: cfg.block_size,
            seed: derive_seed(cfg.seed, "attn-check", s as u64),
            track_coverage: true,
        };
        let approx = block_attention(&q, &k, &v, cloud.coords(), &block_cfg)?;
        let (rel_error, captured) = attention_error(&approx, &exact)?;
        let captured = captured.unwrap_or(f64::NAN);
        let flagged = approx.diagnostics.flagged_rows.len();
        println!(
            "attn-check seed {s}: rel_error={rel_error:.6e} captured_mass={captured:.6} flagged={flagged}"
        );
        rows.push_str(&format!("{s},{rel_error},{captured},{flagged}\n"));
        last_output = Some(approx);
    }
    std::fs::write(&cfg.out, rows)?;
    let mut outputs = vec![cfg.out.clone()];
    if let (Some(emb_path), Some(output)) = (&cfg.embeddings_out, &last_output) {
        let file = std::fs::File::create(emb_path)?;
        output.write_embeddings_csv(std::io::BufWriter::new(file))?;
        let diag_path = PathBuf::from(format!("{}.diagnostics.json", emb_path.display()));
        std::fs::write(&diag_path, serde_json::to_string_pretty(&output.diagnostics)?)?;
        outputs.push(emb_path.clone());
        outputs.push(diag_path);
    }
    let manifest = write_manifest("attn-check", cfg, cfg.seed, &input_paths, &cfg.out)?;
    outputs.push(manifest);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// replay

/// Re-run the command recorded in a manifest. Input files must still match
/// their recorded hashes; outputs are rewritten in place, byte-identically.
pub fn run_replay(manifest_file: &Path, verify_inputs: bool) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::read(manifest_file)?;
    if verify_inputs {
        for (path, expected) in &manifest.input_hashes {
            let actual = sha256_file(path)?;
            if actual != *expected {
                return Err(Error::invalid(format!(
                    "input {path} hash mismatch: manifest {expected}, current {actual}"
                )));
            }
        }
    }
    match manifest.command.as_str() {
        "gen" => run_gen(&serde_json::from_value(manifest.config)?),
        "collision" => run_collision(&serde_json::from_value(manifest.config)?),
        "sweep" => run_sweep_cmd(&serde_json::from_value(manifest.config)?),
        "attn-check" => run_attn_check(&serde_json::from_value(manifest.config)?),
        other => Err(Error::invalid(format!("manifest has unknown command '{other}'"))),
    }
}
