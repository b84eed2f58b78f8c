//! Kernel-approximation estimators and their exact cost model.
//!
//! Three schemes approximate the truncated Gaussian kernel over a point
//! cloud: random Fourier features, OR-only LSH (one hash function per table),
//! and OR & AND LSH (several functions per table). Errors are mean squared
//! deviations over ordered point pairs; costs are exact integer FLOP counts
//! following the constructive model of the analysis (hash codes cost
//! `n(2d-1)` per function, each collided pair costs `4d`, combining results
//! costs `nd` per extra table).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SupportSet};
use crate::kernels::{gaussian, RffMap};
use crate::lsh::{collision_prob, E2lshFunction};
use crate::seeding::rng_for;

/// Approximation scheme identifier. A table with exactly one hash function is
/// OR-only by definition, so the scheme follows from the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Rff,
    OrOnly,
    OrAnd,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Rff => "rff",
            Scheme::OrOnly => "or_only",
            Scheme::OrAnd => "or_and",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rff" => Ok(Scheme::Rff),
            "or_only" => Ok(Scheme::OrOnly),
            "or_and" => Ok(Scheme::OrAnd),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Parameters of a single approximation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproxParams {
    Rff { n_features: usize },
    Lsh { tables: usize, fns_per_table: usize, r: f64 },
}

impl ApproxParams {
    pub fn scheme(&self) -> Scheme {
        match self {
            ApproxParams::Rff { .. } => Scheme::Rff,
            ApproxParams::Lsh { fns_per_table: 1, .. } => Scheme::OrOnly,
            ApproxParams::Lsh { .. } => Scheme::OrAnd,
        }
    }
}

/// One approximation run: its configuration, measured error, and exact cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub scheme: Scheme,
    pub n: usize,
    pub dim: usize,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub r: Option<f64>,
    pub n_features: Option<usize>,
    pub seed: u64,
    pub flops: u64,
    pub epsilon: f64,
    pub trials: usize,
    /// Total collided pairs observed across tables; the FLOP count can be
    /// recomputed from it. Not part of the CSV row.
    pub collisions: Option<u64>,
}

impl ApproxReport {
    pub const CSV_HEADER: &'static str = "scheme,n,d,m1,m2,r,D,seed,flops,epsilon,trials";

    pub fn csv_row(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or(String::new(), |x| x.to_string())
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.n,
            self.dim,
            opt(&self.m1),
            opt(&self.m2),
            opt(&self.r),
            opt(&self.n_features),
            self.seed,
            self.flops,
            self.epsilon,
            self.trials
        )
    }
}

/// The in-support ordered pairs of a cloud with their precomputed distances.
#[derive(Debug, Clone)]
pub struct SupportDistances {
    n: usize,
    pairs: Vec<(u32, u32)>,
    dists: Vec<f64>,
}

impl SupportDistances {
    pub fn new(cloud: &PointCloud, support: &SupportSet) -> Self {
        let pairs: Vec<(u32, u32)> = support.pairs().collect();
        let dists = pairs
            .iter()
            .map(|&(u, v)| cloud.distance(u as usize, v as usize))
            .collect();
        SupportDistances { n: cloud.len(), pairs, dists }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn dists(&self) -> &[f64] {
        &self.dists
    }

    fn ordered_pair_count(&self) -> f64 {
        (self.n * (self.n - 1)) as f64
    }
}

/// Per-table collision structure of an OR & AND LSH run.
///
/// Two points collide in a table when all of its hash functions put them in
/// the same bucket; the table stores one group id per point, so membership
/// checks are O(1) and the collision count per table is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionTables {
    n: usize,
    group_of: Vec<Vec<u32>>,
    collisions: Vec<u64>,
}

impl CollisionTables {
    pub fn n_tables(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn collides_in(&self, table: usize, u: usize, v: usize) -> bool {
        self.group_of[table][u] == self.group_of[table][v]
    }

    /// First table (by index) in which `u` and `v` collide.
    pub fn first_collision_table(&self, u: usize, v: usize) -> Option<usize> {
        (0..self.n_tables()).find(|&i| self.collides_in(i, u, v))
    }

    pub fn any_collision(&self, u: usize, v: usize) -> bool {
        self.first_collision_table(u, v).is_some()
    }

    /// Unordered collided pair count per table.
    pub fn collisions_per_table(&self) -> &[u64] {
        &self.collisions
    }

    /// Total unordered collisions across the first `tables` tables.
    pub fn total_collisions(&self, tables: usize) -> u64 {
        self.collisions[..tables].iter().sum()
    }

    /// Enumerate the ordered collided pairs of one table. Intended for tests;
    /// the result can be quadratic in `n` for coarse bucket widths.
    pub fn table_pairs(&self, table: usize) -> Vec<(u32, u32)> {
        let groups = &self.group_of[table];
        let mut members: std::collections::HashMap<u32, Vec<u32>> = std::collections::HashMap::new();
        for (idx, &g) in groups.iter().enumerate() {
            members.entry(g).or_default().push(idx as u32);
        }
        let mut out = Vec::new();
        let mut keys: Vec<u32> = members.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let items = &members[&key];
            for &u in items {
                for &v in items {
                    if u != v {
                        out.push((u, v));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Group partition normalized by first occurrence, for equality checks.
    pub fn normalized_partition(&self, table: usize) -> Vec<u32> {
        let groups = &self.group_of[table];
        let mut relabel: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
        let mut next = 0u32;
        groups
            .iter()
            .map(|&g| {
                *relabel.entry(g).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                })
            })
            .collect()
    }
}

/// Hash every point with `tables x fns_per_table` seeded E2LSH functions and
/// group points whose per-table bucket tuples match.
///
/// Table `i` draws its functions from the sub-stream `("lsh-table", i)` of
/// `seed`, so the first `m` tables of a run are bit-identical to a run with
/// `tables = m` at the same seed.
pub fn lsh_collision_tables(
    points: &Array2<f64>,
    tables: usize,
    fns_per_table: usize,
    r: f64,
    seed: u64,
) -> Result<CollisionTables> {
    if tables == 0 || fns_per_table == 0 {
        return Err(Error::invalid("need at least one table and one hash function per table"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("bucket width r must be positive"));
    }
    let n = points.nrows();
    let dim = points.ncols();
    if n == 0 {
        return Err(Error::invalid("cannot hash an empty point set"));
    }
    let mut group_of = Vec::with_capacity(tables);
    let mut collisions = Vec::with_capacity(tables);
    let mut buckets = vec![0i64; n * fns_per_table];
    for table in 0..tables {
        let mut rng = rng_for(seed, "lsh-table", table as u64);
        for j in 0..fns_per_table {
            let f = E2lshFunction::sample(dim, r, &mut rng)?;
            for u in 0..n {
                let row = points.row(u);
                let x = row.as_slice().expect("standard layout");
                buckets[u * fns_per_table + j] = f.bucket(x)?;
            }
        }
        let (groups, count) = group_by_tuples(&buckets, n, fns_per_table);
        group_of.push(groups);
        collisions.push(count);
    }
    Ok(CollisionTables { n, group_of, collisions })
}

// Assign group ids by sorting points lexicographically on their bucket tuples;
// returns the per-point group id and the unordered collision count.
fn group_by_tuples(buckets: &[i64], n: usize, width: usize) -> (Vec<u32>, u64) {
    let tuple = |u: usize| &buckets[u * width..(u + 1) * width];
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| tuple(a as usize).cmp(tuple(b as usize)));
    let mut groups = vec![0u32; n];
    let mut collisions = 0u64;
    let mut gid = 0u32;
    let mut run = 0u64;
    for (pos, &item) in order.iter().enumerate() {
        if pos > 0 && tuple(item as usize) != tuple(order[pos - 1] as usize) {
            collisions += run * (run - 1) / 2;
            gid += 1;
            run = 0;
        }
        groups[item as usize] = gid;
        run += 1;
    }
    collisions += run * (run - 1) / 2;
    (groups, collisions)
}

/// Empirical mean squared error of the LSH estimator, which evaluates the
/// true (truncated) kernel on collided pairs and returns 0 otherwise. Only
/// in-support pairs missed by every table contribute.
pub fn lsh_epsilon_empirical(sd: &SupportDistances, tables: &CollisionTables) -> Result<f64> {
    if tables.n_points() != sd.n() {
        return Err(Error::dim(format!(
            "collision tables built over {} points, support over {}",
            tables.n_points(),
            sd.n()
        )));
    }
    let mut missed = 0.0;
    for (&(u, v), &z) in sd.pairs().iter().zip(sd.dists()) {
        if !tables.any_collision(u as usize, v as usize) {
            let k = gaussian(z);
            missed += k * k;
        }
    }
    Ok(missed / sd.ordered_pair_count())
}

/// Error of the alternative estimator that evaluates the plain (untruncated)
/// Gaussian on collided pairs. Misses of in-support pairs still cost
/// `k(z)^2`; in addition, every collided out-of-support pair costs `k(z)^2`
/// because the target there is 0. Exposed for comparison only; the truncated
/// estimator above is the one the analysis (and the acceptance suite) uses.
pub fn lsh_epsilon_empirical_untruncated(
    cloud: &PointCloud,
    sd: &SupportDistances,
    support: &SupportSet,
    tables: &CollisionTables,
) -> Result<f64> {
    if tables.n_points() != sd.n() || cloud.len() != sd.n() {
        return Err(Error::dim("collision tables, cloud, and support sizes differ".to_string()));
    }
    let mut total = 0.0;
    for (&(u, v), &z) in sd.pairs().iter().zip(sd.dists()) {
        if !tables.any_collision(u as usize, v as usize) {
            let k = gaussian(z);
            total += k * k;
        }
    }
    // Collided out-of-support ordered pairs, counted once across tables.
    let mut seen: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    for table in 0..tables.n_tables() {
        for (u, v) in tables.table_pairs(table) {
            if u < v && seen.insert((u, v)) {
                let z = cloud.distance(u as usize, v as usize);
                let g = gaussian(z);
                let mut hallucinated = 0.0;
                if !support.contains(u as usize, v as usize) {
                    hallucinated += g * g;
                }
                if !support.contains(v as usize, u as usize) {
                    hallucinated += g * g;
                }
                total += hallucinated;
            }
        }
    }
    Ok(total / sd.ordered_pair_count())
}

/// Analytic expectation of the LSH estimator's error:
/// the mean of `(1 - p_r(z)^m2)^m1 * k(z)^2` over in-support ordered pairs,
/// normalized by `n(n-1)`.
pub fn lsh_epsilon_expected(
    sd: &SupportDistances,
    tables: usize,
    fns_per_table: usize,
    r: f64,
) -> Result<f64> {
    if tables == 0 || fns_per_table == 0 {
        return Err(Error::invalid("need at least one table and one hash function per table"));
    }
    let mut sum = 0.0;
    for &z in sd.dists() {
        let p = collision_prob(z, r)?;
        let k = gaussian(z);
        sum += (1.0 - p.powi(fns_per_table as i32)).powi(tables as i32) * k * k;
    }
    Ok(sum / sd.ordered_pair_count())
}

/// Exact FLOP count of an OR & AND LSH run with `collisions` total collided
/// pairs observed across tables:
/// `m1*m2*n*(2d-1)` for hash codes, `4d*C + m1*n*d` for the bucketed
/// evaluation, and `(m1-1)*n*d` for combining tables.
pub fn lsh_flops(n: usize, dim: usize, tables: usize, fns_per_table: usize, collisions: u64) -> u64 {
    let n = n as u64;
    let d = dim as u64;
    let m1 = tables as u64;
    let m2 = fns_per_table as u64;
    m1 * m2 * n * (2 * d - 1) + 4 * d * collisions + m1 * n * d + (m1 - 1) * n * d
}

/// Exact FLOP count of the attention-style RFF pipeline:
/// `nD(2d-1) + nd` to featurize and `Dd(2n-1) + nd(2D-1)` for the two
/// rectangular products, evaluating features first.
pub fn rff_flops(n: usize, dim: usize, n_features: usize) -> u64 {
    let n = n as u64;
    let d = dim as u64;
    let df = n_features as u64;
    n * df * (2 * d - 1) + n * d + df * d * (2 * n - 1) + n * d * (2 * df - 1)
}

/// Empirical mean squared error of the RFF estimator against the truncated
/// kernel, averaged over all ordered pairs.
///
/// Uses the exact expansion
/// `sum (est - k)^2 = ||Psi^T Psi||_F^2 - sum_u ||psi_u||^4
///                    - 2 sum_support est*k + sum_support k^2`,
/// which avoids touching the quadratically many out-of-support pairs one by
/// one (their target is 0, so only `est^2` survives, and that sum is a Gram
/// norm).
pub fn rff_epsilon_empirical(
    cloud: &PointCloud,
    sd: &SupportDistances,
    map: &RffMap,
) -> Result<f64> {
    if cloud.len() != sd.n() {
        return Err(Error::dim("support was built over a different cloud".to_string()));
    }
    let psi = map.features_matrix(cloud.coords())?;
    let gram = psi.t().dot(&psi);
    let sum_sq_all: f64 = gram.iter().map(|v| v * v).sum();
    let diag_corr: f64 = psi
        .rows()
        .into_iter()
        .map(|row| {
            let n2: f64 = row.iter().map(|v| v * v).sum();
            n2 * n2
        })
        .sum();
    let mut cross = 0.0;
    let mut k_sq = 0.0;
    for (&(u, v), &z) in sd.pairs().iter().zip(sd.dists()) {
        let est: f64 = psi
            .row(u as usize)
            .iter()
            .zip(psi.row(v as usize).iter())
            .map(|(a, b)| a * b)
            .sum();
        let k = gaussian(z);
        cross += est * k;
        k_sq += k * k;
    }
    let total = sum_sq_all - diag_corr - 2.0 * cross + k_sq;
    Ok(total / sd.ordered_pair_count())
}

/// Analytic expectation of the RFF error: per-pair variance everywhere plus
/// the squared truncation bias on out-of-support pairs. O(n^2).
pub fn rff_epsilon_expected(
    cloud: &PointCloud,
    support: &SupportSet,
    n_features: usize,
) -> Result<f64> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    let inv_d = 1.0 / n_features as f64;
    let mut sum = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let z = cloud.distance(u, v);
            let k = gaussian(z);
            let variance = inv_d * (1.0 + gaussian(2.0 * z) - 2.0 * k * k);
            let bias = if support.contains(u, v) { 0.0 } else { k };
            sum += variance + bias * bias;
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Run one `(configuration, seed)` approximation and report its measured
/// error and exact FLOPs.
pub fn run_config(
    cloud: &PointCloud,
    sd: &SupportDistances,
    params: &ApproxParams,
    seed: u64,
) -> Result<ApproxReport> {
    let n = cloud.len();
    let dim = cloud.dim();
    match *params {
        ApproxParams::Rff { n_features } => {
            let map = RffMap::new(dim, n_features, seed)?;
            let epsilon = rff_epsilon_empirical(cloud, sd, &map)?;
            Ok(ApproxReport {
                scheme: Scheme::Rff,
                n,
                dim,
                m1: None,
                m2: None,
                r: None,
                n_features: Some(n_features),
                seed,
                flops: rff_flops(n, dim, n_features),
                epsilon,
                trials: 1,
                collisions: None,
            })
        }
        ApproxParams::Lsh { tables, fns_per_table, r } => {
            let ct = lsh_collision_tables(cloud.coords(), tables, fns_per_table, r, seed)?;
            let epsilon = lsh_epsilon_empirical(sd, &ct)?;
            let flops = lsh_flops(n, dim, tables, fns_per_table, ct.total_collisions(tables));
            Ok(ApproxReport {
                scheme: params.scheme(),
                n,
                dim,
                m1: Some(tables),
                m2: Some(fns_per_table),
                r: Some(r),
                n_features: None,
                seed,
                flops,
                epsilon,
                trials: 1,
                collisions: Some(ct.total_collisions(tables)),
            })
        }
    }
}

/// One hashing pass shared by every table-count value up to `max_tables`:
/// per-(r, m2, seed) family of LSH runs. Because table `i` is seeded
/// independently, slicing the first `m1` tables reproduces an independent run
/// with that table count exactly.
#[derive(Debug, Clone)]
pub struct LshFamily {
    n: usize,
    dim: usize,
    fns_per_table: usize,
    r: f64,
    seed: u64,
    // First table (index) colliding each support pair; max_tables for none.
    pair_first_table: Vec<u32>,
    pair_k_sq: Vec<f64>,
    collision_prefix: Vec<u64>,
    ordered_pairs: f64,
}

impl LshFamily {
    pub fn run(
        cloud: &PointCloud,
        sd: &SupportDistances,
        max_tables: usize,
        fns_per_table: usize,
        r: f64,
        seed: u64,
    ) -> Result<Self> {
        let ct = lsh_collision_tables(cloud.coords(), max_tables, fns_per_table, r, seed)?;
        let mut pair_first_table = Vec::with_capacity(sd.len());
        let mut pair_k_sq = Vec::with_capacity(sd.len());
        for (&(u, v), &z) in sd.pairs().iter().zip(sd.dists()) {
            let t = ct
                .first_collision_table(u as usize, v as usize)
                .unwrap_or(max_tables);
            pair_first_table.push(t as u32);
            let k = gaussian(z);
            pair_k_sq.push(k * k);
        }
        let mut collision_prefix = Vec::with_capacity(max_tables);
        let mut acc = 0u64;
        for &c in ct.collisions_per_table() {
            acc += c;
            collision_prefix.push(acc);
        }
        Ok(LshFamily {
            n: cloud.len(),
            dim: cloud.dim(),
            fns_per_table,
            r,
            seed,
            pair_first_table,
            pair_k_sq,
            collision_prefix,
            ordered_pairs: sd.ordered_pair_count(),
        })
    }

    pub fn max_tables(&self) -> usize {
        self.collision_prefix.len()
    }

    /// Report for the run that uses the first `tables` tables. Misses are
    /// summed in support-pair order, matching [`lsh_epsilon_empirical`]
    /// bit for bit.
    pub fn report(&self, tables: usize) -> ApproxReport {
        assert!(tables >= 1 && tables <= self.max_tables());
        let missed: f64 = self
            .pair_first_table
            .iter()
            .zip(self.pair_k_sq.iter())
            .filter(|(&t, _)| t as usize >= tables)
            .map(|(_, &k_sq)| k_sq)
            .sum();
        let collisions = self.collision_prefix[tables - 1];
        let scheme = if self.fns_per_table == 1 { Scheme::OrOnly } else { Scheme::OrAnd };
        ApproxReport {
            scheme,
            n: self.n,
            dim: self.dim,
            m1: Some(tables),
            m2: Some(self.fns_per_table),
            r: Some(self.r),
            n_features: None,
            seed: self.seed,
            flops: lsh_flops(self.n, self.dim, tables, self.fns_per_table, collisions),
            epsilon: missed / self.ordered_pairs,
            trials: 1,
            collisions: Some(collisions),
        }
    }
}

/// Asymptotic error predictors with calibrated constants; used as plotting
/// overlays, not as acceptance targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryFit {
    pub scheme: Scheme,
    pub prefactor: f64,
    pub rate: f64,
}

fn polylog(n: usize) -> f64 {
    (n.max(2) as f64).log2().ceil()
}

impl TheoryFit {
    /// Predicted error at `flops` for a system of `n` points in `dim`
    /// dimensions with support radius `s` and `m2` hash functions per table.
    pub fn predict(&self, n: usize, dim: usize, s: f64, m2: usize, flops: f64) -> f64 {
        let n_f = n as f64;
        let d_f = dim as f64;
        match self.scheme {
            Scheme::Rff => self.prefactor * n_f * d_f / flops,
            Scheme::OrOnly => {
                self.prefactor * (-(self.rate * flops) / (d_f * n_f * n_f * s)).exp() / n_f
            }
            Scheme::OrAnd => {
                let denom = d_f * n_f * (polylog(n) + m2 as f64);
                self.prefactor * (-(self.rate * flops) / denom).exp() / n_f
            }
        }
    }
}

/// Fit predictor constants by least squares on log-error over anchor
/// `(flops, epsilon)` points. A single anchor fixes the prefactor at unit
/// rate; two or more also fit the rate.
pub fn calibrate_theory(
    scheme: Scheme,
    n: usize,
    dim: usize,
    s: f64,
    m2: usize,
    anchors: &[(f64, f64)],
) -> Result<TheoryFit> {
    if anchors.is_empty() {
        return Err(Error::invalid("theory calibration needs at least one anchor run"));
    }
    if anchors.iter().any(|&(f, e)| !(f > 0.0) || !(e > 0.0)) {
        return Err(Error::invalid("anchor flops and epsilon must be positive"));
    }
    let n_f = n as f64;
    let d_f = dim as f64;
    let x_of = |flops: f64| -> f64 {
        match scheme {
            Scheme::Rff => 0.0,
            Scheme::OrOnly => flops / (d_f * n_f * n_f * s),
            Scheme::OrAnd => flops / (d_f * n_f * (polylog(n) + m2 as f64)),
        }
    };
    if scheme == Scheme::Rff {
        // ln eps = ln a + ln(nd/F); average the implied intercept.
        let mean: f64 = anchors
            .iter()
            .map(|&(f, e)| e.ln() - (n_f * d_f / f).ln())
            .sum::<f64>()
            / anchors.len() as f64;
        return Ok(TheoryFit { scheme, prefactor: mean.exp(), rate: 1.0 });
    }
    // ln eps = ln(a/n) - rate * x
    let xs: Vec<f64> = anchors.iter().map(|&(f, _)| x_of(f)).collect();
    let ys: Vec<f64> = anchors.iter().map(|&(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let var_x: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let rate = if var_x > 0.0 {
        let cov: f64 = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| (x - mean_x) * (y - mean_y))
            .sum();
        (-cov / var_x).max(0.0)
    } else {
        1.0
    };
    let intercept = mean_y + rate * mean_x;
    Ok(TheoryFit { scheme, prefactor: intercept.exp() * n_f, rate })
}
