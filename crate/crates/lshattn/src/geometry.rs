//! Point clouds, synthetic generators, k-NN interaction supports, and
//! pair-distance histograms.
//!
//! All generators are pure functions of their parameters and a seed. Distances
//! are Euclidean and everything is computed in `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A set of `n` points with `dim`-dimensional coordinates and optional
/// per-point feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
    features: Option<Array2<f64>>,
}

impl PointCloud {
    /// Build a cloud from a coordinate matrix. Requires at least one point,
    /// at least one coordinate dimension, and finite entries.
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        if coords.nrows() == 0 {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if coords.ncols() == 0 {
            return Err(Error::invalid("coordinate dimension must be at least 1"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(PointCloud { coords, features: None })
    }

    pub fn with_features(coords: Array2<f64>, features: Array2<f64>) -> Result<Self> {
        let mut cloud = PointCloud::new(coords)?;
        if features.nrows() != cloud.len() {
            return Err(Error::dim(format!(
                "feature rows {} do not match point count {}",
                features.nrows(),
                cloud.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point features must be finite"));
        }
        cloud.features = Some(features);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// Coordinate dimension (`k2`).
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.coords.row(i)
    }

    /// Euclidean distance between points `u` and `v`.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.distance_sq(u, v).sqrt()
    }

    pub fn distance_sq(&self, u: usize, v: usize) -> f64 {
        let a = self.coords.row(u);
        let b = self.coords.row(v);
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Write as CSV with header `id,c0,..,c{k2-1}[,f0,..,f{k1-1}]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k1 = self.features.as_ref().map_or(0, |f| f.ncols());
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("c{j}")));
        header.extend((0..k1).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![i.to_string()];
            record.extend(self.coords.row(i).iter().map(|v| v.to_string()));
            if let Some(f) = &self.features {
                record.extend(f.row(i).iter().map(|v| v.to_string()));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parse the CSV format produced by [`PointCloud::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let k2 = header.iter().filter(|h| h.starts_with('c')).count();
        let k1 = header.iter().filter(|h| h.starts_with('f')).count();
        if k2 == 0 {
            return Err(Error::invalid("point cloud CSV has no coordinate columns"));
        }
        let mut coords = Vec::new();
        let mut feats = Vec::new();
        let mut n = 0usize;
        for record in r.records() {
            let record = record?;
            if record.len() != 1 + k2 + k1 {
                return Err(Error::invalid(format!(
                    "row {n} has {} fields, expected {}",
                    record.len(),
                    1 + k2 + k1
                )));
            }
            for j in 0..k2 {
                let v: f64 = record[1 + j]
                    .parse()
                    .map_err(|e| Error::invalid(format!("row {n}: {e}")))?;
                coords.push(v);
            }
            for j in 0..k1 {
                let v: f64 = record[1 + k2 + j]
                    .parse()
                    .map_err(|e| Error::invalid(format!("row {n}: {e}")))?;
                feats.push(v);
            }
            n += 1;
        }
        let coords = Array2::from_shape_vec((n, k2), coords)
            .map_err(|e| Error::invalid(e.to_string()))?;
        if k1 > 0 {
            let feats = Array2::from_shape_vec((n, k1), feats)
                .map_err(|e| Error::invalid(e.to_string()))?;
            PointCloud::with_features(coords, feats)
        } else {
            PointCloud::new(coords)
        }
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// `n` points i.i.d. uniform in the square `[0, side]^2`.
pub fn gen_uniform_square(n: usize, side: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty point cloud"));
    }
    if !(side > 0.0) {
        return Err(Error::invalid("square side length must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..side));
    PointCloud::new(coords)
}

/// `n` points i.i.d. uniform in the unit `dim`-ball.
///
/// Sampling uses a normalized Gaussian direction scaled by `U^(1/dim)`, which
/// is exactly uniform in any dimension.
pub fn gen_uniform_ball(n: usize, dim: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty point cloud"));
    }
    if dim == 0 {
        return Err(Error::invalid("ball dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Array2::zeros((n, dim));
    for i in 0..n {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = rng.random_range(0.0..1.0f64).powf(1.0 / dim as f64);
        if norm == 0.0 {
            // Astronomically unlikely; place at the origin.
            continue;
        }
        for j in 0..dim {
            coords[[i, j]] = dir[j] / norm * radius;
        }
    }
    PointCloud::new(coords)
}

/// Directed k-nearest-neighbor interaction support: the set of ordered pairs
/// `(u, v)` where `v` is among `u`'s `k` nearest points.
///
/// Ties in distance are broken by the smaller point index, so the support is a
/// deterministic function of the cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    k: usize,
    // Outgoing neighbors per source, each list sorted ascending by index.
    neighbors: Vec<Vec<u32>>,
}

impl SupportSet {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of ordered pairs in the support.
    pub fn len(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.neighbors[u]
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&(v as u32)).is_ok()
    }

    /// All ordered pairs `(u, v)`, grouped by source and ascending in `v`.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u as u32, v)))
    }

    /// Symmetric closure: `(u, v)` is kept and `(v, u)` added for every pair.
    pub fn symmetric_closure(&self) -> SupportSet {
        let n = self.neighbors.len();
        let mut neighbors = self.neighbors.clone();
        for (u, vs) in self.neighbors.iter().enumerate() {
            for &v in vs {
                if !self.contains(v as usize, u) {
                    neighbors[v as usize].push(u as u32);
                }
            }
        }
        for vs in &mut neighbors {
            vs.sort_unstable();
        }
        debug_assert!(neighbors.len() == n);
        SupportSet { k: self.k, neighbors }
    }

    /// Write as CSV with header `src,dst`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst"])?;
        for (u, v) in self.pairs() {
            w.write_record([u.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_pairs(n: usize, k: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (u, v) in pairs {
            if u == v {
                return Err(Error::invalid("support set cannot contain diagonal pairs"));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid("support pair index out of range"));
            }
            neighbors[u as usize].push(v);
        }
        for vs in &mut neighbors {
            vs.sort_unstable();
            vs.dedup();
        }
        Ok(SupportSet { k, neighbors })
    }
}

/// Radial interaction support: all ordered pairs within distance `radius`.
/// O(n^2); the radial counterpart of [`knn_support`] for bounded-support
/// kernels with a hard cutoff.
pub fn radius_support(cloud: &PointCloud, radius: f64) -> Result<SupportSet> {
    if !(radius >= 0.0) {
        return Err(Error::invalid("support radius must be nonnegative"));
    }
    let n = cloud.len();
    let r_sq = radius * radius;
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if cloud.distance_sq(u, v) <= r_sq {
                neighbors[u].push(v as u32);
                neighbors[v].push(u as u32);
            }
        }
    }
    for vs in &mut neighbors {
        vs.sort_unstable();
    }
    Ok(SupportSet { k: 0, neighbors })
}

fn check_knn_args(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k-NN support requires 1 <= k <= n-1, got k={k}, n={n}"
        )));
    }
    Ok(())
}

/// Brute-force O(n^2) k-NN support. This is the reference implementation.
pub fn knn_support(cloud: &PointCloud, k: usize) -> Result<SupportSet> {
    let n = cloud.len();
    check_knn_args(n, k)?;
    let mut neighbors = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for u in 0..n {
        scratch.clear();
        for v in 0..n {
            if v != u {
                scratch.push((cloud.distance_sq(u, v), v as u32));
            }
        }
        let mut picked = select_k_nearest(&mut scratch, k);
        picked.sort_unstable();
        neighbors.push(picked);
    }
    Ok(SupportSet { k, neighbors })
}

// The k smallest candidates under the total order (distance^2, index).
fn select_k_nearest(candidates: &mut [(f64, u32)], k: usize) -> Vec<u32> {
    let cmp = |a: &(f64, u32), b: &(f64, u32)| {
        a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
    };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
    }
    let take = k.min(candidates.len());
    candidates[..take].iter().map(|&(_, v)| v).collect()
}

/// Grid-accelerated k-NN support. Produces exactly the same set as
/// [`knn_support`], including tie-breaking.
pub fn knn_support_grid(cloud: &PointCloud, k: usize) -> Result<SupportSet> {
    let n = cloud.len();
    check_knn_args(n, k)?;
    let dim = cloud.dim();

    // Cell size targets ~k points per cell; degenerate extents fall back to
    // the brute-force path.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for i in 0..n {
        for j in 0..dim {
            let v = cloud.coords()[[i, j]];
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let volume: f64 = (0..dim).map(|j| hi[j] - lo[j]).product();
    if volume <= 0.0 {
        return knn_support(cloud, k);
    }
    let cell = (volume * k as f64 / n as f64).powf(1.0 / dim as f64);
    if !(cell > 0.0) {
        return knn_support(cloud, k);
    }

    let cell_of = |i: usize| -> Vec<i64> {
        (0..dim)
            .map(|j| ((cloud.coords()[[i, j]] - lo[j]) / cell).floor() as i64)
            .collect()
    };
    let mut grid: std::collections::HashMap<Vec<i64>, Vec<u32>> = std::collections::HashMap::new();
    for i in 0..n {
        grid.entry(cell_of(i)).or_default().push(i as u32);
    }
    let max_ring: i64 = (0..dim)
        .map(|j| ((hi[j] - lo[j]) / cell).ceil() as i64 + 1)
        .max()
        .unwrap_or(1);

    let mut neighbors = Vec::with_capacity(n);
    let mut candidates: Vec<(f64, u32)> = Vec::new();
    let mut offsets: Vec<i64> = vec![0; dim];
    for u in 0..n {
        candidates.clear();
        let home = cell_of(u);
        let mut ring: i64 = 0;
        loop {
            collect_ring(&grid, &home, ring, &mut offsets, 0, false, &mut |idx| {
                if idx as usize != u {
                    candidates.push((cloud.distance_sq(u, idx as usize), idx));
                }
            });
            if candidates.len() >= k {
                // kth best under (dist^2, index); any unexplored point is at
                // distance >= ring * cell, so stop once that strictly exceeds it.
                let cmp = |a: &(f64, u32), b: &(f64, u32)| {
                    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
                };
                let kth = {
                    let (_, kth, _) = candidates.select_nth_unstable_by(k - 1, cmp);
                    kth.0
                };
                let bound = ring as f64 * cell;
                if bound * bound > kth {
                    break;
                }
            }
            ring += 1;
            if ring > max_ring {
                break;
            }
        }
        let mut picked = select_k_nearest(&mut candidates, k);
        picked.sort_unstable();
        neighbors.push(picked);
    }
    Ok(SupportSet { k, neighbors })
}

// Visit all grid cells at Chebyshev distance exactly `ring` from `home`.
fn collect_ring(
    grid: &std::collections::HashMap<Vec<i64>, Vec<u32>>,
    home: &[i64],
    ring: i64,
    offsets: &mut Vec<i64>,
    axis: usize,
    saturated: bool,
    visit: &mut impl FnMut(u32),
) {
    if axis == home.len() {
        if saturated || ring == 0 {
            let key: Vec<i64> = home.iter().zip(offsets.iter()).map(|(h, o)| h + o).collect();
            if let Some(items) = grid.get(&key) {
                for &idx in items {
                    visit(idx);
                }
            }
        }
        return;
    }
    for off in -ring..=ring {
        offsets[axis] = off;
        collect_ring(grid, home, ring, offsets, axis + 1, saturated || off.abs() == ring, visit);
    }
}

/// Automatic k-NN: grid acceleration for low-dimensional clouds, brute force
/// otherwise. Both paths produce identical supports.
pub fn knn_support_auto(cloud: &PointCloud, k: usize) -> Result<SupportSet> {
    if cloud.dim() <= 3 && cloud.len() > 512 {
        knn_support_grid(cloud, k)
    } else {
        knn_support(cloud, k)
    }
}

/// Normalized histogram of pairwise distances over ordered pairs `u != v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

impl DistanceHistogram {
    /// Bin edges, length `bins + 1`, monotone nondecreasing.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Bin masses, summing to 1.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Cumulative masses; entry `i` is the empirical CDF at `edges[i + 1]`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }
}

/// Histogram with the default range `[0, max observed distance]`; the last bin
/// is right-inclusive.
pub fn distance_histogram(cloud: &PointCloud, bins: usize) -> Result<DistanceHistogram> {
    let max = max_pair_distance(cloud)?;
    distance_histogram_range(cloud, bins, max)
}

/// Histogram over `[0, max_range]`; distances beyond the range are clamped
/// into the last bin.
pub fn distance_histogram_range(
    cloud: &PointCloud,
    bins: usize,
    max_range: f64,
) -> Result<DistanceHistogram> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid("distance histogram needs at least 2 points"));
    }
    if bins == 0 {
        return Err(Error::invalid("distance histogram needs at least 1 bin"));
    }
    if !(max_range >= 0.0) {
        return Err(Error::invalid("histogram range must be nonnegative"));
    }
    let width = if max_range > 0.0 { max_range / bins as f64 } else { 0.0 };
    let mut counts = vec![0u64; bins];
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let z = cloud.distance(u, v);
            let idx = if width > 0.0 {
                ((z / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[idx] += 1;
        }
    }
    let total = (n * (n - 1)) as f64;
    let edges = (0..=bins).map(|i| width * i as f64).collect();
    let masses = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(DistanceHistogram { edges, masses })
}

fn max_pair_distance(cloud: &PointCloud) -> Result<f64> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid("distance histogram needs at least 2 points"));
    }
    let mut max = 0.0f64;
    for u in 0..n {
        for v in (u + 1)..n {
            max = max.max(cloud.distance_sq(u, v));
        }
    }
    Ok(max.sqrt())
}
