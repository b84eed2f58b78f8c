//! Block-diagonal LSH attention with a dense oracle.
//!
//! Queries and keys carry their point coordinates scaled by `sqrt(2*omega)`,
//! so attention weights are Gaussian kernel values of the concatenated
//! vectors. Each hash table projects queries and keys onto a shared random
//! direction (the base code), bucketizes shared coordinate projections into
//! aux codes, combines them into a single AND hash code per item, and computes
//! attention only inside equal-sized blocks of the code-sorted orders. Tables
//! are merged by summing numerators and denominators before the final
//! normalization.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::{and_hash_codes, equal_count_bucketize, random_bucket_counts, sort_by_code};
use crate::seeding::rng_for;

/// Inputs of one attention layer: hidden states, point coordinates, the
/// query/key/value projections, and the coordinate weight.
#[derive(Debug, Clone)]
pub struct AttnInputs {
    pub hidden: Array2<f64>,
    pub coords: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub omega: f64,
}

/// Projected queries and keys with `sqrt(2*omega)`-scaled coordinates
/// appended, plus the value matrix.
pub fn build_qk(inputs: &AttnInputs) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let n = inputs.hidden.nrows();
    let h = inputs.hidden.ncols();
    if n == 0 {
        return Err(Error::invalid("attention needs at least one point"));
    }
    if inputs.coords.nrows() != n {
        return Err(Error::dim("coordinate rows do not match hidden rows"));
    }
    if inputs.w_q.nrows() != h || inputs.w_k.nrows() != h || inputs.w_v.nrows() != h {
        return Err(Error::dim("projection rows do not match hidden dimension"));
    }
    if inputs.w_q.ncols() != inputs.w_k.ncols() {
        return Err(Error::dim("query and key projections must share output dimension"));
    }
    if !(inputs.omega > 0.0) {
        return Err(Error::invalid("omega must be positive"));
    }
    let q_tilde = inputs.hidden.dot(&inputs.w_q);
    let k_tilde = inputs.hidden.dot(&inputs.w_k);
    let v = inputs.hidden.dot(&inputs.w_v);
    let q = append_scaled_coords(&q_tilde, &inputs.coords, inputs.omega);
    let k = append_scaled_coords(&k_tilde, &inputs.coords, inputs.omega);
    Ok((q, k, v))
}

fn append_scaled_coords(m: &Array2<f64>, coords: &Array2<f64>, omega: f64) -> Array2<f64> {
    let scale = (2.0 * omega).sqrt();
    let (n, d) = (m.nrows(), m.ncols());
    let k2 = coords.ncols();
    let mut out = Array2::zeros((n, d + k2));
    for i in 0..n {
        for j in 0..d {
            out[[i, j]] = m[[i, j]];
        }
        for j in 0..k2 {
            out[[i, d + j]] = scale * coords[[i, j]];
        }
    }
    out
}

/// Run diagnostics attached to an attention output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnDiagnostics {
    /// Query-key pairs evaluated per table (summed over heads).
    pub table_pair_counts: Vec<u64>,
    /// Rows whose accumulated denominator was zero; their output is zero.
    pub flagged_rows: Vec<usize>,
    /// Kernel mass on pairs covered by at least one block (deduplicated),
    /// when coverage tracking was enabled.
    pub covered_kernel_mass: Option<f64>,
    /// Total kernel mass over all ordered pairs; set by the dense oracle.
    pub total_kernel_mass: Option<f64>,
}

/// Attention output embeddings plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnOutput {
    pub embeddings: Array2<f64>,
    pub diagnostics: AttnDiagnostics,
}

impl AttnOutput {
    /// Write embeddings as CSV with header `id,e0,..`.
    pub fn write_embeddings_csv<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        let dv = self.embeddings.ncols();
        let header: Vec<String> =
            std::iter::once("id".to_string()).chain((0..dv).map(|j| format!("e{j}"))).collect();
        writeln!(writer, "{}", header.join(","))?;
        for (i, row) in self.embeddings.rows().into_iter().enumerate() {
            let mut fields = vec![i.to_string()];
            fields.extend(row.iter().map(|v| v.to_string()));
            writeln!(writer, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

// Row-major matrix with contiguous row slices for the inner loops.
struct RowMat {
    data: Vec<f64>,
    cols: usize,
}

impl RowMat {
    fn from(m: &Array2<f64>) -> Self {
        let cols = m.ncols();
        let mut data = Vec::with_capacity(m.nrows() * cols);
        for row in m.rows() {
            data.extend(row.iter().copied());
        }
        RowMat { data, cols }
    }

    fn nrows(&self) -> usize {
        if self.cols == 0 { 0 } else { self.data.len() / self.cols }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn kernel_weight(a: &[f64], b: &[f64]) -> f64 {
    (-0.5 * dist_sq(a, b)).exp()
}

/// Exact full attention `E = D^{-1} A V` with `A_uv = exp(-||q_u - k_v||^2/2)`
/// and `D = diag(A 1)`. O(n^2) reference oracle; self-pairs included.
pub fn dense_attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Result<AttnOutput> {
    check_qkv(q, k, v)?;
    let n = q.nrows();
    let dv = v.ncols();
    let qm = RowMat::from(q);
    let km = RowMat::from(k);
    let vm = RowMat::from(v);
    let mut embeddings = Array2::zeros((n, dv));
    let mut total_mass = 0.0;
    for u in 0..n {
        let qu = qm.row(u);
        let mut den = 0.0;
        let mut num = vec![0.0; dv];
        for t in 0..n {
            let w = kernel_weight(qu, km.row(t));
            den += w;
            let vr = vm.row(t);
            for (acc, &val) in num.iter_mut().zip(vr) {
                *acc += w * val;
            }
        }
        // The self-pair keeps every row positive mathematically; a zero here
        // means the inputs are so far apart that the kernel underflowed.
        if den == 0.0 {
            return Err(Error::invalid(format!(
                "attention weights underflowed to zero for row {u}"
            )));
        }
        total_mass += den;
        for j in 0..dv {
            embeddings[[u, j]] = num[j] / den;
        }
    }
    Ok(AttnOutput {
        embeddings,
        diagnostics: AttnDiagnostics {
            table_pair_counts: Vec::new(),
            flagged_rows: Vec::new(),
            covered_kernel_mass: Some(total_mass),
            total_kernel_mass: Some(total_mass),
        },
    })
}

fn check_qkv(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Result<()> {
    if q.nrows() == 0 {
        return Err(Error::invalid("attention needs at least one point"));
    }
    if q.nrows() != k.nrows() || q.nrows() != v.nrows() {
        return Err(Error::dim("query, key, and value row counts differ"));
    }
    if q.ncols() != k.ncols() {
        return Err(Error::dim("query and key dimensions differ"));
    }
    if q.iter().any(|x| !x.is_finite())
        || k.iter().any(|x| !x.is_finite())
        || v.iter().any(|x| !x.is_finite())
    {
        return Err(Error::invalid("attention inputs must be finite"));
    }
    Ok(())
}

/// Configuration of the block-diagonal LSH attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAttnConfig {
    /// Number of hash tables (`m1`).
    pub tables: usize,
    /// Coordinate-derived aux hash codes per table (`d'`), shared by queries
    /// and keys of the same point.
    pub coord_hashes: usize,
    /// Extra query/key-derived aux hashes. Bucketized jointly over both sides
    /// despite their misalignment; off by default and meant for tied-weight
    /// ablations.
    pub qk_aux_hashes: usize,
    /// Total number of aux buckets per table (`G`); per-hash counts are drawn
    /// randomly with this fixed product.
    pub bucket_total: f64,
    pub block_size: usize,
    pub seed: u64,
    /// Track deduplicated pair coverage (needs O(n^2/64) memory).
    pub track_coverage: bool,
}

impl Default for BlockAttnConfig {
    fn default() -> Self {
        BlockAttnConfig {
            tables: 3,
            coord_hashes: 2,
            qk_aux_hashes: 0,
            bucket_total: 16.0,
            block_size: 100,
            seed: 0,
            track_coverage: false,
        }
    }
}

impl BlockAttnConfig {
    fn validate(&self) -> Result<()> {
        if self.tables == 0 {
            return Err(Error::invalid("need at least one hash table"));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        if !(self.bucket_total >= 1.0) {
            return Err(Error::invalid("total bucket count must be at least 1"));
        }
        Ok(())
    }

    fn aux_count(&self) -> usize {
        self.coord_hashes + self.qk_aux_hashes
    }
}

/// Hash codes of one table: separate base projections for queries and keys,
/// shared aux bucket tuples, and the combined AND codes.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCodes {
    pub base_q: Vec<f64>,
    pub base_k: Vec<f64>,
    /// Aux tuple per query item.
    pub aux_q: Vec<Vec<u32>>,
    /// Aux tuple per key item.
    pub aux_k: Vec<Vec<u32>>,
    pub bucket_counts: Vec<f64>,
    pub codes_q: Vec<f64>,
    pub codes_k: Vec<f64>,
}

// Per-table randomness, drawn in a fixed order so that runs with fewer tables
// or heads are prefixes of longer ones.
fn table_codes_multi(
    q_heads: &[&RowMat],
    k_heads: &[&RowMat],
    coords: &RowMat,
    cfg: &BlockAttnConfig,
    table: usize,
) -> Result<Vec<TableCodes>> {
    let n = coords.nrows();
    let mut rng = rng_for(cfg.seed, "attn-table", table as u64);
    let k2 = coords.cols;

    let coord_dirs: Vec<Vec<f64>> = (0..cfg.coord_hashes)
        .map(|_| (0..k2).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
        .collect();
    let bc_seed: u64 = rng.random();
    let counts = if cfg.aux_count() == 0 {
        Vec::new()
    } else {
        random_bucket_counts(cfg.bucket_total, cfg.aux_count(), bc_seed)?
    };

    // Coordinate aux buckets are shared by queries and keys: both copies of a
    // point carry the same projection, and equal values always land in the
    // same bucket.
    let mut coord_buckets: Vec<Vec<u32>> = Vec::with_capacity(cfg.coord_hashes);
    for (l, dir) in coord_dirs.iter().enumerate() {
        let vals: Vec<f64> = (0..n)
            .map(|u| dir.iter().zip(coords.row(u)).map(|(a, x)| a * x).sum())
            .collect();
        let mut combined = Vec::with_capacity(2 * n);
        combined.extend_from_slice(&vals);
        combined.extend_from_slice(&vals);
        coord_buckets.push(equal_count_bucketize(&combined, counts[l])?);
    }

    let mut out = Vec::with_capacity(q_heads.len());
    for (qh, kh) in q_heads.iter().zip(k_heads.iter()) {
        let qdim = qh.cols;
        let base_dir: Vec<f64> =
            (0..qdim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let base_q: Vec<f64> =
            (0..n).map(|u| base_dir.iter().zip(qh.row(u)).map(|(a, x)| a * x).sum()).collect();
        let base_k: Vec<f64> =
            (0..n).map(|u| base_dir.iter().zip(kh.row(u)).map(|(a, x)| a * x).sum()).collect();

        let mut qk_buckets: Vec<Vec<u32>> = Vec::with_capacity(cfg.qk_aux_hashes);
        for j in 0..cfg.qk_aux_hashes {
            let dir: Vec<f64> =
                (0..qdim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let mut combined = Vec::with_capacity(2 * n);
            combined
                .extend((0..n).map(|u| dir.iter().zip(qh.row(u)).map(|(a, x)| a * x).sum::<f64>()));
            combined
                .extend((0..n).map(|u| dir.iter().zip(kh.row(u)).map(|(a, x)| a * x).sum::<f64>()));
            qk_buckets.push(equal_count_bucketize(&combined, counts[cfg.coord_hashes + j])?);
        }

        let mut base_comb = Vec::with_capacity(2 * n);
        base_comb.extend_from_slice(&base_q);
        base_comb.extend_from_slice(&base_k);
        let aux_comb: Vec<Vec<u32>> = (0..2 * n)
            .map(|idx| {
                coord_buckets
                    .iter()
                    .map(|b| b[idx])
                    .chain(qk_buckets.iter().map(|b| b[idx]))
                    .collect()
            })
            .collect();
        let codes = and_hash_codes(&base_comb, &aux_comb, &counts)?;
        out.push(TableCodes {
            base_q,
            base_k,
            aux_q: aux_comb[..n].to_vec(),
            aux_k: aux_comb[n..].to_vec(),
            bucket_counts: counts.clone(),
            codes_q: codes[..n].to_vec(),
            codes_k: codes[n..].to_vec(),
        });
    }
    Ok(out)
}

/// The per-table hash codes the block attention would use for these queries,
/// keys, and coordinates.
pub fn lsh_hash_codes(
    q: &Array2<f64>,
    k: &Array2<f64>,
    coords: &Array2<f64>,
    cfg: &BlockAttnConfig,
) -> Result<Vec<TableCodes>> {
    cfg.validate()?;
    check_qkv(q, k, &Array2::zeros((q.nrows(), 1)))?;
    if coords.nrows() != q.nrows() {
        return Err(Error::dim("coordinate rows do not match query rows"));
    }
    let qm = RowMat::from(q);
    let km = RowMat::from(k);
    let cm = RowMat::from(coords);
    (0..cfg.tables)
        .map(|i| Ok(table_codes_multi(&[&qm], &[&km], &cm, cfg, i)?.remove(0)))
        .collect()
}

// Coverage bitset over ordered pairs (u, v).
struct PairCoverage {
    n: usize,
    bits: Vec<u64>,
    mass: f64,
}

impl PairCoverage {
    fn new(n: usize) -> Self {
        let words = (n * n).div_ceil(64);
        PairCoverage { n, bits: vec![0; words], mass: 0.0 }
    }

    #[inline]
    fn record(&mut self, u: usize, v: usize, weight: f64) {
        let idx = u * self.n + v;
        let (word, bit) = (idx / 64, idx % 64);
        if self.bits[word] & (1 << bit) == 0 {
            self.bits[word] |= 1 << bit;
            self.mass += weight;
        }
    }
}

/// Block-diagonal LSH attention forward pass.
///
/// Per table, queries and keys are sorted by their AND hash codes and cut
/// into equal-sized blocks; kernel weights are computed between same-index
/// blocks only. Numerators and denominators accumulate over tables in table
/// order before the final division. Rows with a zero denominator are flagged
/// and output as zero vectors.
pub fn block_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    coords: &Array2<f64>,
    cfg: &BlockAttnConfig,
) -> Result<AttnOutput> {
    check_qkv(q, k, v)?;
    if coords.nrows() != q.nrows() {
        return Err(Error::dim("coordinate rows do not match query rows"));
    }
    cfg.validate()?;
    let qm = RowMat::from(q);
    let km = RowMat::from(k);
    let vm = RowMat::from(v);
    let cm = RowMat::from(coords);
    let (heads, diagnostics) = mhsa_block(&[&qm], &[&km], &[&vm], &cm, cfg)?;
    Ok(AttnOutput { embeddings: heads.into_iter().next().expect("one head"), diagnostics })
}

// Shared multi-head block attention: aux draws are per table and shared
// across heads; base projections are per (table, head).
fn mhsa_block(
    q_heads: &[&RowMat],
    k_heads: &[&RowMat],
    v_heads: &[&RowMat],
    coords: &RowMat,
    cfg: &BlockAttnConfig,
) -> Result<(Vec<Array2<f64>>, AttnDiagnostics)> {
    let n = coords.nrows();
    let n_heads = q_heads.len();
    let mut nums: Vec<Array2<f64>> =
        v_heads.iter().map(|v| Array2::zeros((n, v.cols))).collect();
    let mut dens: Vec<Vec<f64>> = vec![vec![0.0; n]; n_heads];
    let mut table_pair_counts = vec![0u64; cfg.tables];
    let mut coverage = if cfg.track_coverage && n_heads == 1 {
        Some(PairCoverage::new(n))
    } else {
        None
    };

    for table in 0..cfg.tables {
        let codes = table_codes_multi(q_heads, k_heads, coords, cfg, table)?;
        for (head, tc) in codes.iter().enumerate() {
            let q_order = sort_by_code(&tc.codes_q);
            let k_order = sort_by_code(&tc.codes_k);
            let qh = q_heads[head];
            let kh = k_heads[head];
            let vh = v_heads[head];
            let dv = vh.cols;
            let n_blocks = n.div_ceil(cfg.block_size);
            for b in 0..n_blocks {
                let lo = b * cfg.block_size;
                let hi = (lo + cfg.block_size).min(n);
                let q_chunk = &q_order[lo..hi];
                let k_chunk = &k_order[lo..hi];
                table_pair_counts[table] += (q_chunk.len() * k_chunk.len()) as u64;
                // Each same-index block pair is one small dense matmul whose
                // partial sums are added to the per-point accumulators, per
                // the fixed table-order reduction.
                let mut block_num = vec![0.0; dv];
                for &u in q_chunk {
                    let qu = qh.row(u);
                    let mut block_den = 0.0;
                    block_num.fill(0.0);
                    for &t in k_chunk {
                        let w = kernel_weight(qu, kh.row(t));
                        block_den += w;
                        let vr = vh.row(t);
                        for j in 0..dv {
                            block_num[j] += w * vr[j];
                        }
                        if let Some(cov) = coverage.as_mut() {
                            cov.record(u, t, w);
                        }
                    }
                    dens[head][u] += block_den;
                    let num_row = &mut nums[head].row_mut(u);
                    for j in 0..dv {
                        num_row[j] += block_num[j];
                    }
                }
            }
        }
    }

    let mut flagged: Vec<usize> = Vec::new();
    let mut outputs = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let dv = v_heads[head].cols;
        let mut emb = std::mem::replace(&mut nums[head], Array2::zeros((0, 0)));
        for u in 0..n {
            let den = dens[head][u];
            if den == 0.0 {
                if !flagged.contains(&u) {
                    flagged.push(u);
                }
                for j in 0..dv {
                    emb[[u, j]] = 0.0;
                }
            } else {
                for j in 0..dv {
                    emb[[u, j]] /= den;
                }
            }
        }
        outputs.push(emb);
    }
    flagged.sort_unstable();
    Ok((
        outputs,
        AttnDiagnostics {
            table_pair_counts,
            flagged_rows: flagged,
            covered_kernel_mass: coverage.map(|c| c.mass),
            total_kernel_mass: None,
        },
    ))
}

/// Relative Frobenius error of `approx` against `exact`, and the captured
/// attention mass fraction when both sides carry the needed diagnostics.
pub fn attention_error(approx: &AttnOutput, exact: &AttnOutput) -> Result<(f64, Option<f64>)> {
    if approx.embeddings.dim() != exact.embeddings.dim() {
        return Err(Error::dim("attention outputs have different shapes"));
    }
    let norm_exact: f64 = exact.embeddings.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_exact == 0.0 {
        return Err(Error::invalid("exact attention output has zero norm"));
    }
    let diff: f64 = approx
        .embeddings
        .iter()
        .zip(exact.embeddings.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let captured = match (
        approx.diagnostics.covered_kernel_mass,
        exact.diagnostics.total_kernel_mass,
    ) {
        (Some(covered), Some(total)) if total > 0.0 => Some(covered / total),
        _ => None,
    };
    Ok((diff / norm_exact, captured))
}

/// Row-wise layer normalization with epsilon 1e-5 (no learned scale/shift).
pub fn layer_norm(x: &Array2<f64>) -> Array2<f64> {
    const EPS: f64 = 1e-5;
    let h = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.iter().sum::<f64>() / h;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h;
        let denom = (var + EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) / denom);
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Two affine maps around a GELU nonlinearity.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl FeedForward {
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if self.w1.nrows() != x.ncols()
            || self.w1.ncols() != self.b1.len()
            || self.w2.nrows() != self.w1.ncols()
            || self.w2.ncols() != self.b2.len()
        {
            return Err(Error::dim("feed-forward shapes are inconsistent"));
        }
        let mut mid = x.dot(&self.w1);
        for mut row in mid.rows_mut() {
            for (v, b) in row.iter_mut().zip(self.b1.iter()) {
                *v = gelu(*v + b);
            }
        }
        let mut out = mid.dot(&self.w2);
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(self.b2.iter()) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// Weights of one transformer block.
#[derive(Debug, Clone)]
pub struct TransformerParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub ffn: FeedForward,
    pub omega: f64,
    pub heads: usize,
}

/// Attention backend of a transformer block.
#[derive(Debug, Clone, Copy)]
pub enum AttnBackend<'a> {
    Dense,
    BlockLsh(&'a BlockAttnConfig),
}

/// Forward pass of one pre-normalized transformer block:
/// `H = LN(H_in)`, `H' = H + MHSA([H W_Q || s*rho], [H W_K || s*rho], H W_V)`,
/// `H_out = H' + FFN(LN(H'))`, with `s = sqrt(2*omega)`.
///
/// Heads split the query/key projection and the value columns evenly; the
/// coordinate block is appended to every head. With the LSH backend all heads
/// of a table share its coordinate aux codes. Hash directions derive from
/// `cfg.seed` alone, so stacked layers reusing one config also reuse draws;
/// vary the seed per layer for independent tables.
pub fn transformer_block(
    hidden: &Array2<f64>,
    coords: &Array2<f64>,
    params: &TransformerParams,
    backend: AttnBackend<'_>,
) -> Result<Array2<f64>> {
    let n = hidden.nrows();
    let h = hidden.ncols();
    if n == 0 {
        return Err(Error::invalid("transformer block needs at least one point"));
    }
    if coords.nrows() != n {
        return Err(Error::dim("coordinate rows do not match hidden rows"));
    }
    if params.w_q.nrows() != h || params.w_k.nrows() != h || params.w_v.nrows() != h {
        return Err(Error::dim("projection rows do not match hidden dimension"));
    }
    if params.w_v.ncols() != h {
        return Err(Error::dim("value projection must map back to the hidden dimension"));
    }
    let d = params.w_q.ncols();
    if d != params.w_k.ncols() {
        return Err(Error::dim("query and key projections must share output dimension"));
    }
    if params.heads == 0 || d % params.heads != 0 || h % params.heads != 0 {
        return Err(Error::invalid(format!(
            "heads ({}) must divide both the attention dimension ({d}) and the hidden dimension ({h})",
            params.heads
        )));
    }
    if !(params.omega > 0.0) {
        return Err(Error::invalid("omega must be positive"));
    }

    let h_norm = layer_norm(hidden);
    let q_tilde = h_norm.dot(&params.w_q);
    let k_tilde = h_norm.dot(&params.w_k);
    let v_full = h_norm.dot(&params.w_v);

    let dh = d / params.heads;
    let dv = h / params.heads;
    let mut q_heads = Vec::with_capacity(params.heads);
    let mut k_heads = Vec::with_capacity(params.heads);
    let mut v_heads = Vec::with_capacity(params.heads);
    for head in 0..params.heads {
        let q_slice = q_tilde.slice(ndarray::s![.., head * dh..(head + 1) * dh]).to_owned();
        let k_slice = k_tilde.slice(ndarray::s![.., head * dh..(head + 1) * dh]).to_owned();
        q_heads.push(append_scaled_coords(&q_slice, coords, params.omega));
        k_heads.push(append_scaled_coords(&k_slice, coords, params.omega));
        v_heads.push(v_full.slice(ndarray::s![.., head * dv..(head + 1) * dv]).to_owned());
    }

    let head_outputs: Vec<Array2<f64>> = match backend {
        AttnBackend::Dense => q_heads
            .iter()
            .zip(k_heads.iter())
            .zip(v_heads.iter())
            .map(|((q, k), v)| dense_attention(q, k, v).map(|o| o.embeddings))
            .collect::<Result<_>>()?,
        AttnBackend::BlockLsh(cfg) => {
            let qm: Vec<RowMat> = q_heads.iter().map(RowMat::from).collect();
            let km: Vec<RowMat> = k_heads.iter().map(RowMat::from).collect();
            let vm: Vec<RowMat> = v_heads.iter().map(RowMat::from).collect();
            let cm = RowMat::from(coords);
            let q_refs: Vec<&RowMat> = qm.iter().collect();
            let k_refs: Vec<&RowMat> = km.iter().collect();
            let v_refs: Vec<&RowMat> = vm.iter().collect();
            mhsa_block(&q_refs, &k_refs, &v_refs, &cm, cfg)?.0
        }
    };

    let mut mhsa = Array2::zeros((n, h));
    for (head, out) in head_outputs.iter().enumerate() {
        for i in 0..n {
            for j in 0..dv {
                mhsa[[i, head * dv + j]] = out[[i, j]];
            }
        }
    }

    let h_prime = &h_norm + &mhsa;
    let ffn_out = params.ffn.apply(&layer_norm(&h_prime))?;
    Ok(h_prime + ffn_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        dv: usize,
        k2: usize,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let coords = random_matrix(rng, n, k2);
        let q_tilde = random_matrix(rng, n, d);
        let k_tilde = random_matrix(rng, n, d);
        let v = random_matrix(rng, n, dv);
        let omega = 0.8;
        let q = append_scaled_coords(&q_tilde, &coords, omega);
        let k = append_scaled_coords(&k_tilde, &coords, omega);
        (q, k, v, coords)
    }

    fn degenerate_cfg(n: usize) -> BlockAttnConfig {
        BlockAttnConfig {
            tables: 1,
            coord_hashes: 0,
            qk_aux_hashes: 0,
            bucket_total: 1.0,
            block_size: n,
            seed: 42,
            track_coverage: true,
        }
    }

    #[test]
    fn build_qk_matches_hand_multiply() {
        let inputs = AttnInputs {
            hidden: array![[1.0, 2.0], [3.0, 4.0]],
            coords: array![[0.5], [1.5]],
            w_q: array![[1.0, 0.0], [0.0, 1.0]],
            w_k: array![[2.0, 0.0], [0.0, 2.0]],
            w_v: array![[1.0], [1.0]],
            omega: 0.5,
        };
        let (q, k, v) = build_qk(&inputs).unwrap();
        assert_eq!(q, array![[1.0, 2.0, 0.5], [3.0, 4.0, 1.5]]);
        assert_eq!(k, array![[2.0, 4.0, 0.5], [6.0, 8.0, 1.5]]);
        assert_eq!(v, array![[3.0], [7.0]]);
    }

    #[test]
    fn build_qk_identical_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = random_matrix(&mut rng, 3, 2);
        let hidden = Array2::from_shape_fn((4, 3), |_| 1.25);
        let inputs = AttnInputs {
            hidden,
            coords: random_matrix(&mut rng, 4, 2),
            w_q: w.clone(),
            w_k: w.clone(),
            w_v: random_matrix(&mut rng, 3, 2),
            omega: 1.0,
        };
        let (q, k, _) = build_qk(&inputs).unwrap();
        assert_eq!(q, k);
    }

    #[test]
    fn dense_single_point_returns_value() {
        let q = array![[0.3, 0.4]];
        let k = array![[5.0, -2.0]];
        let v = array![[7.0, 8.0, 9.0]];
        let out = dense_attention(&q, &k, &v).unwrap();
        // (w*v)/w can wobble by one ulp.
        for (a, b) in out.embeddings.iter().zip(v.iter()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn dense_uniform_weights_average_values() {
        let q = Array2::from_elem((3, 2), 0.7);
        let k = Array2::from_elem((3, 2), 0.7);
        let v = array![[1.0], [2.0], [6.0]];
        let out = dense_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            assert!((out.embeddings[[i, 0]] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_rejects_underflowed_rows() {
        let q = array![[0.0], [1.0]];
        let k = array![[1.0e4], [2.0e4]];
        let v = array![[1.0], [2.0]];
        assert!(dense_attention(&q, &k, &v).is_err());
    }

    #[test]
    fn dense_three_point_hand_check() {
        let q = array![[0.0], [1.0], [2.0]];
        let k = array![[0.5], [1.5], [-0.5]];
        let v = array![[1.0], [-1.0], [2.0]];
        let out = dense_attention(&q, &k, &v).unwrap();
        // Scalar arithmetic for row 0.
        let w: Vec<f64> = [0.5f64, 1.5, -0.5]
            .iter()
            .map(|kv| (-0.5 * (0.0 - kv) * (0.0 - kv)).exp())
            .collect();
        let den: f64 = w.iter().sum();
        let num = w[0] * 1.0 + w[1] * -1.0 + w[2] * 2.0;
        assert!((out.embeddings[[0, 0]] - num / den).abs() < 1e-15);
    }

    #[test]
    fn degenerate_block_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let n = 8 + 13 * trial;
            let (q, k, v, coords) = random_instance(&mut rng, n, 3, 2, 2);
            let exact = dense_attention(&q, &k, &v).unwrap();
            let approx = block_attention(&q, &k, &v, &coords, &degenerate_cfg(n)).unwrap();
            let (err, captured) = attention_error(&approx, &exact).unwrap();
            assert!(err <= 1e-10, "trial {trial}: err={err}");
            let captured = captured.unwrap();
            assert!((captured - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 64;
        let (q, k, v, coords) = random_instance(&mut rng, n, 2, 3, 2);
        let cfg = BlockAttnConfig {
            tables: 2,
            coord_hashes: 2,
            bucket_total: 4.0,
            block_size: 8,
            seed: 5,
            ..BlockAttnConfig::default()
        };
        let base = block_attention(&q, &k, &v, &coords, &cfg).unwrap();
        // Reverse the point order.
        let perm: Vec<usize> = (0..n).rev().collect();
        let permute = |m: &Array2<f64>| {
            let mut out = m.clone();
            for (new_i, &old_i) in perm.iter().enumerate() {
                out.row_mut(new_i).assign(&m.row(old_i));
            }
            out
        };
        let permuted = block_attention(&permute(&q), &permute(&k), &permute(&v), &permute(&coords), &cfg)
            .unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for j in 0..v.ncols() {
                assert_eq!(permuted.embeddings[[new_i, j]], base.embeddings[[old_i, j]]);
            }
        }
    }

    #[test]
    fn accumulators_nonnegative_and_rows_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (q, k, _, coords) = random_instance(&mut rng, 100, 2, 1, 2);
        // Nonnegative values make every numerator entry nonnegative.
        let v = Array2::from_shape_fn((100, 2), |_| rng.random_range(0.0..1.0));
        let cfg = BlockAttnConfig {
            tables: 3,
            coord_hashes: 2,
            bucket_total: 4.0,
            block_size: 10,
            seed: 1,
            ..BlockAttnConfig::default()
        };
        let out = block_attention(&q, &k, &v, &coords, &cfg).unwrap();
        for (i, row) in out.embeddings.rows().into_iter().enumerate() {
            if out.diagnostics.flagged_rows.contains(&i) {
                continue;
            }
            for &val in row {
                assert!((-1e-12..=1.0 + 1e-12).contains(&val));
            }
        }
    }

    #[test]
    fn shared_coordinates_share_aux_buckets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 32;
        let (q, k, _, mut coords) = random_instance(&mut rng, n, 2, 1, 2);
        // Make two points coincide spatially.
        let row0 = coords.row(0).to_owned();
        coords.row_mut(5).assign(&row0);
        let cfg = BlockAttnConfig {
            tables: 2,
            coord_hashes: 2,
            bucket_total: 6.0,
            block_size: 4,
            seed: 3,
            ..BlockAttnConfig::default()
        };
        let codes = lsh_hash_codes(&q, &k, &coords, &cfg).unwrap();
        for tc in &codes {
            // Query and key copies of one point share every aux bucket.
            for u in 0..n {
                assert_eq!(tc.aux_q[u], tc.aux_k[u]);
            }
            assert_eq!(tc.aux_q[0], tc.aux_q[5]);
            assert_eq!(tc.bucket_counts.len(), 2);
            let product: f64 = tc.bucket_counts.iter().product();
            assert!((product - 6.0).abs() < 1e-9 * 6.0);
        }
    }

    #[test]
    fn no_alignment_hashes_reduce_to_base_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (q, k, _, coords) = random_instance(&mut rng, 16, 2, 1, 2);
        let cfg = BlockAttnConfig {
            tables: 1,
            coord_hashes: 0,
            bucket_total: 1.0,
            block_size: 4,
            seed: 8,
            ..BlockAttnConfig::default()
        };
        let codes = lsh_hash_codes(&q, &k, &coords, &cfg).unwrap();
        assert_eq!(codes[0].codes_q, codes[0].base_q);
        assert_eq!(codes[0].codes_k, codes[0].base_k);
    }

    #[test]
    fn blocks_mix_few_aux_tuples() {
        // Sorting by AND code keeps each aux tuple contiguous, so at most
        // (#tuples - 1) blocks can straddle a tuple boundary.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200;
        let (q, k, _, coords) = random_instance(&mut rng, n, 2, 1, 2);
        let cfg = BlockAttnConfig {
            tables: 1,
            coord_hashes: 2,
            bucket_total: 8.0,
            block_size: 16,
            seed: 2,
            ..BlockAttnConfig::default()
        };
        let codes = &lsh_hash_codes(&q, &k, &coords, &cfg).unwrap()[0];
        let order = sort_by_code(&codes.codes_q);
        let mut mixed_blocks = 0;
        let mut tuples: std::collections::HashSet<Vec<u32>> = std::collections::HashSet::new();
        for chunk in order.chunks(cfg.block_size) {
            let distinct: std::collections::HashSet<&Vec<u32>> =
                chunk.iter().map(|&u| &codes.aux_q[u]).collect();
            if distinct.len() > 1 {
                mixed_blocks += 1;
            }
        }
        for u in 0..n {
            tuples.insert(codes.aux_q[u].clone());
        }
        assert!(
            mixed_blocks <= tuples.len().saturating_sub(1),
            "mixed={mixed_blocks} tuples={}",
            tuples.len()
        );
    }

    #[test]
    fn flagged_rows_on_underflow() {
        // Distances large enough to underflow exp produce zero denominators.
        let q = array![[0.0], [1.0]];
        let k = array![[1.0e4], [-1.0e4]];
        let v = array![[1.0], [2.0]];
        let coords = array![[0.0], [1.0]];
        let cfg = BlockAttnConfig {
            tables: 1,
            coord_hashes: 0,
            bucket_total: 1.0,
            block_size: 1,
            seed: 0,
            track_coverage: false,
            qk_aux_hashes: 0,
        };
        let out = block_attention(&q, &k, &v, &coords, &cfg).unwrap();
        assert_eq!(out.diagnostics.flagged_rows.len(), 2);
        assert!(out.embeddings.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn attention_error_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (q, k, v, _) = random_instance(&mut rng, 24, 2, 2, 2);
        let exact = dense_attention(&q, &k, &v).unwrap();
        let (err, captured) = attention_error(&exact, &exact).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(captured, Some(1.0));
    }

    #[test]
    fn transformer_zero_weights_is_layer_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let hidden = random_matrix(&mut rng, 10, 6);
        let coords = random_matrix(&mut rng, 10, 2);
        let params = TransformerParams {
            w_q: Array2::zeros((6, 4)),
            w_k: Array2::zeros((6, 4)),
            w_v: Array2::zeros((6, 6)),
            ffn: FeedForward {
                w1: Array2::zeros((6, 8)),
                b1: Array1::zeros(8),
                w2: Array2::zeros((8, 6)),
                b2: Array1::zeros(6),
            },
            omega: 0.5,
            heads: 2,
        };
        let out = transformer_block(&hidden, &coords, &params, AttnBackend::Dense).unwrap();
        let ln = layer_norm(&hidden);
        for (a, b) in out.iter().zip(ln.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transformer_block_lsh_degenerate_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 40;
        let hidden = random_matrix(&mut rng, n, 8);
        let coords = random_matrix(&mut rng, n, 2);
        let params = TransformerParams {
            w_q: random_matrix(&mut rng, 8, 8),
            w_k: random_matrix(&mut rng, 8, 8),
            w_v: random_matrix(&mut rng, 8, 8),
            ffn: FeedForward {
                w1: random_matrix(&mut rng, 8, 16),
                b1: Array1::zeros(16),
                w2: random_matrix(&mut rng, 16, 8),
                b2: Array1::zeros(8),
            },
            omega: 1.0,
            heads: 1,
        };
        let cfg = degenerate_cfg(n);
        let dense = transformer_block(&hidden, &coords, &params, AttnBackend::Dense).unwrap();
        let lsh =
            transformer_block(&hidden, &coords, &params, AttnBackend::BlockLsh(&cfg)).unwrap();
        let norm: f64 = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 =
            dense.iter().zip(lsh.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-8, "rel={}", diff / norm);
    }

    #[test]
    fn transformer_stack_shape() {
        // 4 layers x 8 heads x 24 dims: output stays n x 24.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 17;
        let mut hidden = random_matrix(&mut rng, n, 24);
        let coords = random_matrix(&mut rng, n, 2);
        let cfg = BlockAttnConfig {
            tables: 3,
            coord_hashes: 2,
            bucket_total: 4.0,
            block_size: 100,
            seed: 4,
            ..BlockAttnConfig::default()
        };
        for _ in 0..4 {
            let params = TransformerParams {
                w_q: random_matrix(&mut rng, 24, 24),
                w_k: random_matrix(&mut rng, 24, 24),
                w_v: random_matrix(&mut rng, 24, 24),
                ffn: FeedForward {
                    w1: random_matrix(&mut rng, 24, 48),
                    b1: Array1::zeros(48),
                    w2: random_matrix(&mut rng, 48, 24),
                    b2: Array1::zeros(24),
                },
                omega: 0.7,
                heads: 8,
            };
            hidden = transformer_block(&hidden, &coords, &params, AttnBackend::BlockLsh(&cfg))
                .unwrap();
        }
        assert_eq!(hidden.dim(), (n, 24));
        assert!(hidden.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn transformer_rejects_bad_heads() {
        let hidden = Array2::zeros((4, 6));
        let coords = Array2::zeros((4, 2));
        let params = TransformerParams {
            w_q: Array2::zeros((6, 4)),
            w_k: Array2::zeros((6, 4)),
            w_v: Array2::zeros((6, 6)),
            ffn: FeedForward {
                w1: Array2::zeros((6, 6)),
                b1: Array1::zeros(6),
                w2: Array2::zeros((6, 6)),
                b2: Array1::zeros(6),
            },
            omega: 1.0,
            heads: 3,
        };
        assert!(transformer_block(&hidden, &coords, &params, AttnBackend::Dense).is_err());
    }

    #[test]
    fn embeddings_csv_layout() {
        let out = AttnOutput {
            embeddings: array![[1.0, 2.0], [3.0, 4.0]],
            diagnostics: AttnDiagnostics {
                table_pair_counts: vec![4],
                flagged_rows: vec![],
                covered_kernel_mass: None,
                total_kernel_mass: None,
            },
        };
        let mut buf = Vec::new();
        out.write_embeddings_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,e0,e1\n0,1,2\n1,3,4\n");
    }
}
