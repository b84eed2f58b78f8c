//! C ABI for the kernel-approximation library.
//!
//! Handles are opaque pointers owned by Rust; every constructor has a
//! matching `_free`. Functions report a status code and write results through
//! out-pointers. Matrices cross the boundary as row-major `double` buffers.
//!
//! The header `include/lshattn.h` is generated by cbindgen at build time.

use std::os::raw::c_char;

use lshattn::approx::{run_config, ApproxParams, SupportDistances};
use lshattn::attention::{block_attention, dense_attention, BlockAttnConfig};
use lshattn::error::Error;
use lshattn::geometry::{gen_uniform_ball, gen_uniform_square, knn_support_auto, PointCloud, SupportSet};
use lshattn::kernels::RffMap;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LshattnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    IoError = 4,
    BufferTooSmall = 5,
}

fn status_of(err: &Error) -> LshattnStatus {
    match err {
        Error::InvalidInput(_) => LshattnStatus::InvalidInput,
        Error::DimMismatch(_) => LshattnStatus::DimensionMismatch,
        Error::Io(_) | Error::Csv(_) => LshattnStatus::IoError,
        Error::Json(_) => LshattnStatus::InvalidInput,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lshattn_status_message(status: LshattnStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        LshattnStatus::Ok => b"ok\0",
        LshattnStatus::NullPointer => b"null pointer argument\0",
        LshattnStatus::InvalidInput => b"invalid input\0",
        LshattnStatus::DimensionMismatch => b"dimension mismatch\0",
        LshattnStatus::IoError => b"I/O error\0",
        LshattnStatus::BufferTooSmall => b"output buffer too small\0",
    };
    msg.as_ptr().cast()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lshattn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn set_status(out: *mut LshattnStatus, value: LshattnStatus) {
    if !out.is_null() {
        unsafe { *out = value };
    }
}

// ---------------------------------------------------------------------------
// Point clouds

/// Opaque point-cloud handle.
pub struct LshattnCloud {
    inner: PointCloud,
}

/// `n` points uniform in `[0, side]^2`. Returns NULL on failure and writes
/// the reason to `status` when given.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_uniform_square(
    n: usize,
    side: f64,
    seed: u64,
    status: *mut LshattnStatus,
) -> *mut LshattnCloud {
    match gen_uniform_square(n, side, seed) {
        Ok(inner) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            Box::into_raw(Box::new(LshattnCloud { inner }))
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            std::ptr::null_mut()
        }
    }
}

/// `n` points uniform in the unit `dim`-ball.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_uniform_ball(
    n: usize,
    dim: usize,
    seed: u64,
    status: *mut LshattnStatus,
) -> *mut LshattnCloud {
    match gen_uniform_ball(n, dim, seed) {
        Ok(inner) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            Box::into_raw(Box::new(LshattnCloud { inner }))
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            std::ptr::null_mut()
        }
    }
}

/// Build a cloud from a row-major `n x dim` coordinate buffer.
///
/// # Safety
/// `coords` must point to at least `n * dim` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_from_coords(
    coords: *const f64,
    n: usize,
    dim: usize,
    status: *mut LshattnStatus,
) -> *mut LshattnCloud {
    if coords.is_null() {
        unsafe { set_status(status, LshattnStatus::NullPointer) };
        return std::ptr::null_mut();
    }
    let data = unsafe { std::slice::from_raw_parts(coords, n * dim) };
    let array = match ndarray::Array2::from_shape_vec((n, dim), data.to_vec()) {
        Ok(a) => a,
        Err(_) => {
            unsafe { set_status(status, LshattnStatus::InvalidInput) };
            return std::ptr::null_mut();
        }
    };
    match PointCloud::new(array) {
        Ok(inner) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            Box::into_raw(Box::new(LshattnCloud { inner }))
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `cloud` must be NULL or a pointer from a `lshattn_cloud_*` constructor,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_free(cloud: *mut LshattnCloud) {
    if !cloud.is_null() {
        drop(unsafe { Box::from_raw(cloud) });
    }
}

/// # Safety
/// `cloud` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_len(cloud: *const LshattnCloud) -> usize {
    if cloud.is_null() {
        return 0;
    }
    unsafe { &*cloud }.inner.len()
}

/// # Safety
/// `cloud` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_dim(cloud: *const LshattnCloud) -> usize {
    if cloud.is_null() {
        return 0;
    }
    unsafe { &*cloud }.inner.dim()
}

/// Copy coordinates row-major into `out` (capacity `out_len >= n * dim`).
///
/// # Safety
/// `cloud` must be a valid handle and `out` writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lshattn_cloud_coords(
    cloud: *const LshattnCloud,
    out: *mut f64,
    out_len: usize,
) -> LshattnStatus {
    if cloud.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let cloud = unsafe { &*cloud };
    let needed = cloud.inner.len() * cloud.inner.dim();
    if out_len < needed {
        return LshattnStatus::BufferTooSmall;
    }
    let out = unsafe { std::slice::from_raw_parts_mut(out, needed) };
    for (dst, src) in out.iter_mut().zip(cloud.inner.coords().iter()) {
        *dst = *src;
    }
    LshattnStatus::Ok
}

// ---------------------------------------------------------------------------
// k-NN supports

/// Opaque directed k-NN support handle.
pub struct LshattnSupport {
    inner: SupportSet,
}

/// Directed k-nearest-neighbor support of a cloud.
///
/// # Safety
/// `cloud` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn lshattn_knn_support(
    cloud: *const LshattnCloud,
    k: usize,
    status: *mut LshattnStatus,
) -> *mut LshattnSupport {
    if cloud.is_null() {
        unsafe { set_status(status, LshattnStatus::NullPointer) };
        return std::ptr::null_mut();
    }
    match knn_support_auto(&unsafe { &*cloud }.inner, k) {
        Ok(inner) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            Box::into_raw(Box::new(LshattnSupport { inner }))
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `support` must be NULL or an unfreed handle from `lshattn_knn_support`.
#[no_mangle]
pub unsafe extern "C" fn lshattn_support_free(support: *mut LshattnSupport) {
    if !support.is_null() {
        drop(unsafe { Box::from_raw(support) });
    }
}

/// Number of ordered pairs in the support.
///
/// # Safety
/// `support` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn lshattn_support_len(support: *const LshattnSupport) -> usize {
    if support.is_null() {
        return 0;
    }
    unsafe { &*support }.inner.len()
}

/// Copy ordered pairs as interleaved `(src, dst)` u32 values
/// (capacity `out_len >= 2 * len`).
///
/// # Safety
/// `support` must be a valid handle and `out` writable for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn lshattn_support_pairs(
    support: *const LshattnSupport,
    out: *mut u32,
    out_len: usize,
) -> LshattnStatus {
    if support.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let support = unsafe { &*support };
    let needed = 2 * support.inner.len();
    if out_len < needed {
        return LshattnStatus::BufferTooSmall;
    }
    let out = unsafe { std::slice::from_raw_parts_mut(out, needed) };
    for (slot, (u, v)) in out.chunks_exact_mut(2).zip(support.inner.pairs()) {
        slot[0] = u;
        slot[1] = v;
    }
    LshattnStatus::Ok
}

// ---------------------------------------------------------------------------
// Scalar kernels and collision probabilities

/// `exp(-z^2/2)`; NaN on invalid input.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_gaussian_eval(z: f64, status: *mut LshattnStatus) -> f64 {
    match lshattn::kernels::gaussian_eval(z) {
        Ok(v) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            v
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            f64::NAN
        }
    }
}

/// Exact Euclidean-LSH collision probability at distance `z`, bucket width
/// `r`; NaN on invalid input.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_collision_prob(
    z: f64,
    r: f64,
    status: *mut LshattnStatus,
) -> f64 {
    match lshattn::lsh::collision_prob(z, r) {
        Ok(v) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            v
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            f64::NAN
        }
    }
}

/// Piecewise bounds on the collision probability.
///
/// # Safety
/// `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_collision_prob_bounds(
    z: f64,
    r: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> LshattnStatus {
    if lower.is_null() || upper.is_null() {
        return LshattnStatus::NullPointer;
    }
    match lshattn::lsh::collision_prob_bounds(z, r) {
        Ok((lo, hi)) => {
            unsafe {
                *lower = lo;
                *upper = hi;
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Analytic per-pair MSE of the RFF estimator; NaN on invalid input.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_rff_mse_expected(
    z: f64,
    n_features: usize,
    status: *mut LshattnStatus,
) -> f64 {
    match lshattn::kernels::rff_mse_expected(z, n_features) {
        Ok(v) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            v
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            f64::NAN
        }
    }
}

// ---------------------------------------------------------------------------
// Random Fourier feature maps

/// Opaque random-feature-map handle.
pub struct LshattnRffMap {
    inner: RffMap,
}

/// Seeded feature map with `n_features` (even) output dimensions.
///
/// # Safety
/// `status` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_rff_new(
    dim: usize,
    n_features: usize,
    seed: u64,
    status: *mut LshattnStatus,
) -> *mut LshattnRffMap {
    match RffMap::new(dim, n_features, seed) {
        Ok(inner) => {
            unsafe { set_status(status, LshattnStatus::Ok) };
            Box::into_raw(Box::new(LshattnRffMap { inner }))
        }
        Err(e) => {
            unsafe { set_status(status, status_of(&e)) };
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `map` must be NULL or an unfreed handle from `lshattn_rff_new`.
#[no_mangle]
pub unsafe extern "C" fn lshattn_rff_free(map: *mut LshattnRffMap) {
    if !map.is_null() {
        drop(unsafe { Box::from_raw(map) });
    }
}

/// Feature vector of `x` (length `dim`) into `out` (capacity `n_features`).
///
/// # Safety
/// `map` must be a valid handle; `x` readable for `dim` doubles; `out`
/// writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lshattn_rff_features(
    map: *const LshattnRffMap,
    x: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> LshattnStatus {
    if map.is_null() || x.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let map = unsafe { &*map };
    if out_len < map.inner.n_features() {
        return LshattnStatus::BufferTooSmall;
    }
    let x = unsafe { std::slice::from_raw_parts(x, dim) };
    let x = ndarray::ArrayView1::from(x);
    match map.inner.features(x) {
        Ok(features) => {
            let out = unsafe { std::slice::from_raw_parts_mut(out, map.inner.n_features()) };
            for (dst, src) in out.iter_mut().zip(features.iter()) {
                *dst = *src;
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

// ---------------------------------------------------------------------------
// Approximation runs

/// Measured error and exact cost of one approximation run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshattnApproxResult {
    /// Mean squared error over ordered pairs.
    pub epsilon: f64,
    /// Exact FLOP count under the analysis cost model.
    pub flops: u64,
    /// Collided pairs across tables (0 for RFF runs).
    pub collisions: u64,
}

/// One OR & AND LSH approximation run against the truncated kernel over the
/// given support (`fns_per_table = 1` is OR-only).
///
/// # Safety
/// `cloud` and `support` must be valid handles over the same cloud; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lshattn_lsh_approx(
    cloud: *const LshattnCloud,
    support: *const LshattnSupport,
    tables: usize,
    fns_per_table: usize,
    r: f64,
    seed: u64,
    out: *mut LshattnApproxResult,
) -> LshattnStatus {
    if cloud.is_null() || support.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let cloud = &unsafe { &*cloud }.inner;
    let support = &unsafe { &*support }.inner;
    let sd = SupportDistances::new(cloud, support);
    match run_config(cloud, &sd, &ApproxParams::Lsh { tables, fns_per_table, r }, seed) {
        Ok(report) => {
            unsafe {
                *out = LshattnApproxResult {
                    epsilon: report.epsilon,
                    flops: report.flops,
                    collisions: report.collisions.unwrap_or(0),
                };
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// One RFF approximation run against the truncated kernel.
///
/// # Safety
/// As for [`lshattn_lsh_approx`].
#[no_mangle]
pub unsafe extern "C" fn lshattn_rff_approx(
    cloud: *const LshattnCloud,
    support: *const LshattnSupport,
    n_features: usize,
    seed: u64,
    out: *mut LshattnApproxResult,
) -> LshattnStatus {
    if cloud.is_null() || support.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let cloud = &unsafe { &*cloud }.inner;
    let support = &unsafe { &*support }.inner;
    let sd = SupportDistances::new(cloud, support);
    match run_config(cloud, &sd, &ApproxParams::Rff { n_features }, seed) {
        Ok(report) => {
            unsafe {
                *out = LshattnApproxResult {
                    epsilon: report.epsilon,
                    flops: report.flops,
                    collisions: 0,
                };
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

// ---------------------------------------------------------------------------
// Attention

/// Block-diagonal LSH attention configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LshattnBlockAttnConfig {
    pub tables: usize,
    pub coord_hashes: usize,
    pub qk_aux_hashes: usize,
    pub bucket_total: f64,
    pub block_size: usize,
    pub seed: u64,
}

fn to_core_config(cfg: &LshattnBlockAttnConfig) -> BlockAttnConfig {
    BlockAttnConfig {
        tables: cfg.tables,
        coord_hashes: cfg.coord_hashes,
        qk_aux_hashes: cfg.qk_aux_hashes,
        bucket_total: cfg.bucket_total,
        block_size: cfg.block_size,
        seed: cfg.seed,
        track_coverage: false,
    }
}

unsafe fn matrix_from(ptr: *const f64, rows: usize, cols: usize) -> Option<ndarray::Array2<f64>> {
    if ptr.is_null() {
        return None;
    }
    let data = unsafe { std::slice::from_raw_parts(ptr, rows * cols) };
    ndarray::Array2::from_shape_vec((rows, cols), data.to_vec()).ok()
}

/// Exact full attention `E = D^{-1} A V`; writes the `n x v_dim` embedding
/// matrix row-major into `out`.
///
/// # Safety
/// `q`, `k` must be readable for `n * qk_dim` doubles, `v` for `n * v_dim`;
/// `out` writable for `n * v_dim`.
#[no_mangle]
pub unsafe extern "C" fn lshattn_dense_attention(
    q: *const f64,
    k: *const f64,
    v: *const f64,
    n: usize,
    qk_dim: usize,
    v_dim: usize,
    out: *mut f64,
) -> LshattnStatus {
    if out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let (Some(q), Some(k), Some(v)) = (unsafe { matrix_from(q, n, qk_dim) }, unsafe {
        matrix_from(k, n, qk_dim)
    }, unsafe { matrix_from(v, n, v_dim) }) else {
        return LshattnStatus::NullPointer;
    };
    match dense_attention(&q, &k, &v) {
        Ok(result) => {
            let out = unsafe { std::slice::from_raw_parts_mut(out, n * v_dim) };
            for (dst, src) in out.iter_mut().zip(result.embeddings.iter()) {
                *dst = *src;
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Block-diagonal LSH attention; writes the `n x v_dim` embedding matrix
/// row-major into `out` and, when `flagged` is non-NULL, the number of
/// zero-denominator rows.
///
/// # Safety
/// `q`, `k` readable for `n * qk_dim` doubles, `v` for `n * v_dim`, `coords`
/// for `n * coord_dim`; `out` writable for `n * v_dim`.
#[no_mangle]
pub unsafe extern "C" fn lshattn_block_attention(
    q: *const f64,
    k: *const f64,
    v: *const f64,
    coords: *const f64,
    n: usize,
    qk_dim: usize,
    v_dim: usize,
    coord_dim: usize,
    cfg: *const LshattnBlockAttnConfig,
    out: *mut f64,
    flagged: *mut u64,
) -> LshattnStatus {
    if cfg.is_null() || out.is_null() {
        return LshattnStatus::NullPointer;
    }
    let (Some(q), Some(k), Some(v), Some(coords)) = (
        unsafe { matrix_from(q, n, qk_dim) },
        unsafe { matrix_from(k, n, qk_dim) },
        unsafe { matrix_from(v, n, v_dim) },
        unsafe { matrix_from(coords, n, coord_dim) },
    ) else {
        return LshattnStatus::NullPointer;
    };
    let core_cfg = to_core_config(unsafe { &*cfg });
    match block_attention(&q, &k, &v, &coords, &core_cfg) {
        Ok(result) => {
            let out = unsafe { std::slice::from_raw_parts_mut(out, n * v_dim) };
            for (dst, src) in out.iter_mut().zip(result.embeddings.iter()) {
                *dst = *src;
            }
            if !flagged.is_null() {
                unsafe { *flagged = result.diagnostics.flagged_rows.len() as u64 };
            }
            LshattnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}
