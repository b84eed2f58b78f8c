//! Euclidean locality-sensitive hashing primitives.
//!
//! Covers the bucketized hash `h(x) = floor((a.x + b)/r)`, its exact collision
//! probability with the piecewise bounds, the raw (un-bucketized) projection
//! used for ordering, equal-count bucketization, combined AND hash codes, and
//! equal-sized block partitioning.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One Euclidean LSH function: `h(x) = floor((a.x + b)/r)` with
/// `a ~ N(0, I)` and `b ~ U(0, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct E2lshFunction {
    a: Vec<f64>,
    b: f64,
    r: f64,
}

impl E2lshFunction {
    pub fn new(a: Vec<f64>, b: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::invalid("bucket width r must be positive"));
        }
        if a.is_empty() {
            return Err(Error::invalid("projection vector must be nonempty"));
        }
        if !(0.0..r).contains(&b) {
            return Err(Error::invalid("offset b must lie in [0, r)"));
        }
        Ok(E2lshFunction { a, b, r })
    }

    pub fn sample(dim: usize, r: f64, rng: &mut impl Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hash dimension must be at least 1"));
        }
        if !(r > 0.0) {
            return Err(Error::invalid("bucket width r must be positive"));
        }
        let a: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let b = rng.random_range(0.0..r);
        Ok(E2lshFunction { a, b, r })
    }

    pub fn sample_seeded(dim: usize, r: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample(dim, r, &mut rng)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Integer bucket index of `x`.
    pub fn bucket(&self, x: &[f64]) -> Result<i64> {
        let proj = raw_hash(&self.a, x)?;
        Ok(((proj + self.b) / self.r).floor() as i64)
    }

    /// Write as CSV: header `a0,..,a{d-1},b,r`, one data row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.a.len()).map(|i| format!("a{i}")).collect();
        header.push("b".into());
        header.push("r".into());
        w.write_record(&header)?;
        let mut row: Vec<String> = self.a.iter().map(|v| v.to_string()).collect();
        row.push(self.b.to_string());
        row.push(self.r.to_string());
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header_len = rd.headers()?.len();
        if header_len < 3 {
            return Err(Error::invalid("hash CSV needs at least a0, b, r columns"));
        }
        let record = rd
            .records()
            .next()
            .ok_or_else(|| Error::invalid("hash CSV has no data row"))??;
        let vals: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::invalid(e.to_string())))
            .collect::<Result<_>>()?;
        let (a, tail) = vals.split_at(vals.len() - 2);
        E2lshFunction::new(a.to_vec(), tail[0], tail[1])
    }
}

/// Un-bucketized projection `a . x`, kept as a continuous ordering key.
pub fn raw_hash(a: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::dim(format!(
            "projection dimension {} does not match input dimension {}",
            a.len(),
            x.len()
        )));
    }
    Ok(a.iter().zip(x.iter()).map(|(p, q)| p * q).sum())
}

/// Exact collision probability of Euclidean LSH at distance `z` with bucket
/// width `r`:
/// `p_r(z) = Erf(r/(sqrt(2) z)) - sqrt(2/pi) (z/r) (1 - exp(-r^2/(2 z^2)))`,
/// with `p_r(0) = 1` by continuity.
pub fn collision_prob(z: f64, r: f64) -> Result<f64> {
    check_zr(z, r)?;
    if z == 0.0 {
        return Ok(1.0);
    }
    let u = r / (std::f64::consts::SQRT_2 * z);
    let p = libm::erf(u)
        - (2.0 / std::f64::consts::PI).sqrt() * (z / r) * (1.0 - (-(r * r) / (2.0 * z * z)).exp());
    Ok(p.clamp(0.0, 1.0))
}

/// Piecewise lower/upper bounds on the collision probability:
/// for `z < r`, `1 - sqrt(2/pi) z/r <= p <= 1 - sqrt(1/(2 pi)) z/r`;
/// for `z >= r`, `sqrt(2)/(3 sqrt(pi)) r/z <= p <= 1/sqrt(2 pi) r/z`.
pub fn collision_prob_bounds(z: f64, r: f64) -> Result<(f64, f64)> {
    check_zr(z, r)?;
    if z == 0.0 {
        return Ok((1.0, 1.0));
    }
    let pi = std::f64::consts::PI;
    if z < r {
        let ratio = z / r;
        Ok((1.0 - (2.0 / pi).sqrt() * ratio, 1.0 - (0.5 / pi).sqrt() * ratio))
    } else {
        let ratio = r / z;
        Ok((std::f64::consts::SQRT_2 / (3.0 * pi.sqrt()) * ratio, (0.5 / pi).sqrt() * ratio))
    }
}

fn check_zr(z: f64, r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("bucket width r must be positive, got {r}")));
    }
    if !(z >= 0.0) {
        return Err(Error::invalid(format!("distance must be nonnegative, got {z}")));
    }
    Ok(())
}

/// Monte-Carlo collision frequency over fresh `(a, b)` draws for two points
/// at distance `z`. Trials run in seeded chunks so the result is independent
/// of the thread schedule.
pub fn collision_frequency_mc(z: f64, r: f64, trials: u64, seed: u64) -> Result<f64> {
    use rayon::prelude::*;
    check_zr(z, r)?;
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    const CHUNK: u64 = 16_384;
    let n_chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = crate::seeding::rng_for(seed, "collision-mc-chunk", chunk);
            let count = CHUNK.min(trials - chunk * CHUNK);
            let mut hits = 0u64;
            for _ in 0..count {
                // In 1-D the projection difference is a * z with a standard
                // normal, matching the general d-dimensional law.
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.random_range(0.0..r);
                let h0 = (b / r).floor();
                let h1 = ((a * z + b) / r).floor();
                if h0 == h1 {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

/// Equal-count bucketization of `values` into `bucket_count` buckets (the
/// count need not be an integer).
///
/// Values are sorted ascending with ties broken by original index; bucket
/// boundaries sit at the cumulative positions `floor(len * j / bucket_count)`,
/// so every group holds roughly `floor(len / bucket_count)` values and the
/// remainder joins the last bucket. Runs of exactly equal values never split
/// across a boundary: they take the bucket of the run's first element, so
/// identical values always receive identical indices. Returned indices are
/// 1-based and aligned with the input order.
pub fn equal_count_bucketize(values: &[f64], bucket_count: f64) -> Result<Vec<u32>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot bucketize an empty value list"));
    }
    if !(bucket_count >= 1.0) {
        return Err(Error::invalid(format!(
            "bucket count must be at least 1, got {bucket_count}"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("cannot bucketize NaN values"));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| values[i].total_cmp(&values[j]).then_with(|| i.cmp(&j)));

    // Positional index via cumulative boundaries floor(n*j/B), j = 1..ceil(B).
    let mut positional = vec![0u32; n];
    let mut boundary_j = 1u32;
    let mut next_boundary = boundary_position(n, 1, bucket_count);
    for pos in 0..n {
        while pos >= next_boundary {
            boundary_j += 1;
            next_boundary = boundary_position(n, boundary_j, bucket_count);
        }
        positional[pos] = boundary_j;
    }

    // Snap ties: a run of equal values takes its first element's bucket.
    let mut out = vec![0u32; n];
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        for pos in start..end {
            out[order[pos]] = positional[start];
        }
        start = end;
    }
    Ok(out)
}

fn boundary_position(n: usize, j: u32, bucket_count: f64) -> usize {
    ((n as f64 * j as f64 / bucket_count).floor() as usize).min(n)
}

/// Random per-table bucket counts whose product equals `total`.
///
/// Counts are `mu^(1+delta_i)` with `mu = total^(1/count)` and zero-sum random
/// exponents `delta`, which shifts bucket boundaries between tables while
/// keeping the total number of buckets fixed. The counts are real-valued and
/// each exceeds 1 whenever `total > 1`.
pub fn random_bucket_counts(total: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(total >= 1.0) {
        return Err(Error::invalid(format!("total bucket count must be >= 1, got {total}")));
    }
    if count == 0 {
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "zero bucket-count entries require a total of exactly 1 (aux hashing disabled)",
            ));
        }
        return Ok(Vec::new());
    }
    let mu = total.powf(1.0 / count as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deltas: Vec<f64> = (0..count).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mean = deltas.iter().sum::<f64>() / count as f64;
    for d in &mut deltas {
        *d -= mean;
    }
    Ok(deltas.iter().map(|d| mu.powf(1.0 + d)).collect())
}

/// Combine base and aux hash codes into a single AND hash code per item:
/// `T = base + delta * sum_j (aux_j - 1) * prod_{j' < j} B_{j'}`
/// with `delta = max(base) - min(base)` over all supplied items.
///
/// Items sharing an aux tuple keep their base-code ordering inside a range
/// that is disjoint from every other tuple's range (up to partial buckets of
/// non-integer counts).
pub fn and_hash_codes(
    base: &[f64],
    aux: &[Vec<u32>],
    bucket_counts: &[f64],
) -> Result<Vec<f64>> {
    if base.is_empty() {
        return Err(Error::invalid("AND hash codes need at least one item"));
    }
    if aux.len() != base.len() {
        return Err(Error::invalid(format!(
            "each item needs an aux tuple: {} base codes vs {} aux tuples",
            base.len(),
            aux.len()
        )));
    }
    for (i, tuple) in aux.iter().enumerate() {
        if tuple.len() != bucket_counts.len() {
            return Err(Error::invalid(format!(
                "item {i} has {} aux entries, expected {}",
                tuple.len(),
                bucket_counts.len()
            )));
        }
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &b in base {
        if !b.is_finite() {
            return Err(Error::invalid("base hash codes must be finite"));
        }
        min = min.min(b);
        max = max.max(b);
    }
    let delta = max - min;
    let mut out = Vec::with_capacity(base.len());
    for (b, tuple) in base.iter().zip(aux.iter()) {
        let mut offset = 0.0;
        let mut radix = 1.0;
        for (j, &idx) in tuple.iter().enumerate() {
            offset += (idx as f64 - 1.0) * radix;
            radix *= bucket_counts[j];
        }
        out.push(b + delta * offset);
    }
    Ok(out)
}

/// Partition items into equal-sized blocks by sorting their codes.
///
/// Returns a 0-based block index per item (input order). Ties in the code are
/// broken by original index; the final block may be smaller.
pub fn equal_size_blocks(codes: &[f64], block_size: usize) -> Result<Vec<u32>> {
    if block_size == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let order = sort_by_code(codes);
    let mut out = vec![0u32; codes.len()];
    for (rank, &item) in order.iter().enumerate() {
        out[item] = (rank / block_size) as u32;
    }
    Ok(out)
}

/// Items sorted ascending by code with ties broken by original index; the
/// ordering used for equal-sized blocks.
pub fn sort_by_code(codes: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..codes.len()).collect();
    order.sort_unstable_by(|&i, &j| codes[i].total_cmp(&codes[j]).then_with(|| i.cmp(&j)));
    order
}
