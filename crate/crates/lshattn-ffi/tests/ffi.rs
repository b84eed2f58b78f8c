//! Exercise the C ABI from Rust, plus a compiled C smoke test against the
//! generated header.

use std::ffi::CStr;

use lshattn_ffi::*;

fn ok() -> LshattnStatus {
    LshattnStatus::Ok
}

#[test]
fn version_and_status_messages() {
    let version = unsafe { CStr::from_ptr(lshattn_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    for status in [
        LshattnStatus::Ok,
        LshattnStatus::NullPointer,
        LshattnStatus::InvalidInput,
        LshattnStatus::DimensionMismatch,
        LshattnStatus::IoError,
        LshattnStatus::BufferTooSmall,
    ] {
        let msg = unsafe { CStr::from_ptr(lshattn_status_message(status)) };
        assert!(!msg.to_str().unwrap().is_empty());
    }
}

#[test]
fn cloud_lifecycle_and_coords() {
    let mut status = ok();
    let cloud = unsafe { lshattn_cloud_uniform_square(50, 2.0, 7, &mut status) };
    assert_eq!(status, LshattnStatus::Ok);
    assert!(!cloud.is_null());
    assert_eq!(unsafe { lshattn_cloud_len(cloud) }, 50);
    assert_eq!(unsafe { lshattn_cloud_dim(cloud) }, 2);
    let mut coords = vec![0.0f64; 100];
    assert_eq!(
        unsafe { lshattn_cloud_coords(cloud, coords.as_mut_ptr(), coords.len()) },
        LshattnStatus::Ok
    );
    assert!(coords.iter().all(|&c| (0.0..=2.0).contains(&c)));
    // Same data back through from_coords gives the same cloud.
    let copy = unsafe { lshattn_cloud_from_coords(coords.as_ptr(), 50, 2, &mut status) };
    assert_eq!(status, LshattnStatus::Ok);
    let mut coords2 = vec![0.0f64; 100];
    assert_eq!(
        unsafe { lshattn_cloud_coords(copy, coords2.as_mut_ptr(), coords2.len()) },
        LshattnStatus::Ok
    );
    assert_eq!(coords, coords2);
    // Undersized buffer is rejected.
    assert_eq!(
        unsafe { lshattn_cloud_coords(cloud, coords.as_mut_ptr(), 10) },
        LshattnStatus::BufferTooSmall
    );
    unsafe {
        lshattn_cloud_free(cloud);
        lshattn_cloud_free(copy);
        lshattn_cloud_free(std::ptr::null_mut());
    }
}

#[test]
fn invalid_cloud_arguments_set_status() {
    let mut status = ok();
    let cloud = unsafe { lshattn_cloud_uniform_square(0, 2.0, 7, &mut status) };
    assert!(cloud.is_null());
    assert_eq!(status, LshattnStatus::InvalidInput);
    let ball = unsafe { lshattn_cloud_uniform_ball(5, 0, 7, &mut status) };
    assert!(ball.is_null());
    assert_eq!(status, LshattnStatus::InvalidInput);
}

#[test]
fn knn_support_matches_core() {
    let mut status = ok();
    let cloud = unsafe { lshattn_cloud_uniform_square(80, 1.0, 3, &mut status) };
    let support = unsafe { lshattn_knn_support(cloud, 5, &mut status) };
    assert_eq!(status, LshattnStatus::Ok);
    let len = unsafe { lshattn_support_len(support) };
    assert_eq!(len, 80 * 5);
    let mut pairs = vec![0u32; 2 * len];
    assert_eq!(
        unsafe { lshattn_support_pairs(support, pairs.as_mut_ptr(), pairs.len()) },
        LshattnStatus::Ok
    );
    let core_cloud = lshattn::geometry::gen_uniform_square(80, 1.0, 3).unwrap();
    let core_support = lshattn::geometry::knn_support(&core_cloud, 5).unwrap();
    let core_pairs: Vec<(u32, u32)> = core_support.pairs().collect();
    let ffi_pairs: Vec<(u32, u32)> =
        pairs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    assert_eq!(core_pairs, ffi_pairs);
    unsafe {
        lshattn_support_free(support);
        lshattn_cloud_free(cloud);
    }
}

#[test]
fn scalar_functions_reference_values() {
    let mut status = ok();
    let one = unsafe { lshattn_gaussian_eval(0.0, &mut status) };
    assert_eq!(one, 1.0);
    let bad = unsafe { lshattn_gaussian_eval(-1.0, &mut status) };
    assert!(bad.is_nan());
    assert_eq!(status, LshattnStatus::InvalidInput);

    let p = unsafe { lshattn_collision_prob(1.0, 1.0, &mut status) };
    assert!((p - 0.36874).abs() < 5e-5);
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(
        unsafe { lshattn_collision_prob_bounds(1.0, 1.0, &mut lo, &mut hi) },
        LshattnStatus::Ok
    );
    assert!(lo <= p && p <= hi);

    let mse = unsafe { lshattn_rff_mse_expected(1.0, 100, &mut status) };
    assert!((mse - 0.0039958).abs() < 1e-6);
}

#[test]
fn rff_features_norm_one() {
    let mut status = ok();
    let map = unsafe { lshattn_rff_new(3, 32, 11, &mut status) };
    assert_eq!(status, LshattnStatus::Ok);
    let x = [0.2, -0.4, 1.0];
    let mut features = vec![0.0f64; 32];
    assert_eq!(
        unsafe { lshattn_rff_features(map, x.as_ptr(), 3, features.as_mut_ptr(), 32) },
        LshattnStatus::Ok
    );
    let norm2: f64 = features.iter().map(|v| v * v).sum();
    assert!((norm2 - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { lshattn_rff_features(map, x.as_ptr(), 3, features.as_mut_ptr(), 8) },
        LshattnStatus::BufferTooSmall
    );
    // Odd feature counts are rejected at construction.
    let bad = unsafe { lshattn_rff_new(3, 9, 0, &mut status) };
    assert!(bad.is_null());
    assert_eq!(status, LshattnStatus::InvalidInput);
    unsafe { lshattn_rff_free(map) };
}

#[test]
fn approx_runs_match_core() {
    let mut status = ok();
    let cloud = unsafe { lshattn_cloud_uniform_square(150, 0.7, 5, &mut status) };
    let support = unsafe { lshattn_knn_support(cloud, 8, &mut status) };
    let mut result = LshattnApproxResult { epsilon: 0.0, flops: 0, collisions: 0 };
    assert_eq!(
        unsafe { lshattn_lsh_approx(cloud, support, 3, 2, 0.5, 99, &mut result) },
        LshattnStatus::Ok
    );
    let core_cloud = lshattn::geometry::gen_uniform_square(150, 0.7, 5).unwrap();
    let core_support = lshattn::geometry::knn_support(&core_cloud, 8).unwrap();
    let sd = lshattn::approx::SupportDistances::new(&core_cloud, &core_support);
    let core = lshattn::approx::run_config(
        &core_cloud,
        &sd,
        &lshattn::approx::ApproxParams::Lsh { tables: 3, fns_per_table: 2, r: 0.5 },
        99,
    )
    .unwrap();
    assert_eq!(result.epsilon, core.epsilon);
    assert_eq!(result.flops, core.flops);
    assert_eq!(Some(result.collisions), core.collisions);

    assert_eq!(
        unsafe { lshattn_rff_approx(cloud, support, 16, 4, &mut result) },
        LshattnStatus::Ok
    );
    let core_rff = lshattn::approx::run_config(
        &core_cloud,
        &sd,
        &lshattn::approx::ApproxParams::Rff { n_features: 16 },
        4,
    )
    .unwrap();
    assert_eq!(result.epsilon, core_rff.epsilon);
    assert_eq!(result.flops, core_rff.flops);
    unsafe {
        lshattn_support_free(support);
        lshattn_cloud_free(cloud);
    }
}

#[test]
fn block_attention_degenerate_matches_dense() {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let n = 60usize;
    let (dqk, dv, k2) = (4usize, 3usize, 2usize);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let coords: Vec<f64> = (0..n * k2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q: Vec<f64> = (0..n * dqk).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut k = q.clone();
    for i in 0..n {
        for j in 0..k2 {
            q[i * dqk + dqk - k2 + j] = coords[i * k2 + j];
            k[i * dqk + dqk - k2 + j] = coords[i * k2 + j];
        }
    }
    let v: Vec<f64> = (0..n * dv).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut dense = vec![0.0f64; n * dv];
    assert_eq!(
        unsafe {
            lshattn_dense_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), n, dqk, dv, dense.as_mut_ptr())
        },
        LshattnStatus::Ok
    );
    let cfg = LshattnBlockAttnConfig {
        tables: 1,
        coord_hashes: 0,
        qk_aux_hashes: 0,
        bucket_total: 1.0,
        block_size: n,
        seed: 0,
    };
    let mut approx = vec![0.0f64; n * dv];
    let mut flagged = u64::MAX;
    assert_eq!(
        unsafe {
            lshattn_block_attention(
                q.as_ptr(),
                k.as_ptr(),
                v.as_ptr(),
                coords.as_ptr(),
                n,
                dqk,
                dv,
                k2,
                &cfg,
                approx.as_mut_ptr(),
                &mut flagged,
            )
        },
        LshattnStatus::Ok
    );
    assert_eq!(flagged, 0);
    let norm: f64 = dense.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 =
        dense.iter().zip(&approx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(diff / norm <= 1e-10);
}

#[test]
fn null_pointers_are_reported() {
    let mut result = LshattnApproxResult { epsilon: 0.0, flops: 0, collisions: 0 };
    assert_eq!(
        unsafe {
            lshattn_lsh_approx(std::ptr::null(), std::ptr::null(), 1, 1, 0.5, 0, &mut result)
        },
        LshattnStatus::NullPointer
    );
    let mut out = [0.0f64; 4];
    assert_eq!(
        unsafe {
            lshattn_dense_attention(std::ptr::null(), std::ptr::null(), std::ptr::null(), 2, 1, 2, out.as_mut_ptr())
        },
        LshattnStatus::NullPointer
    );
}

// Compile and run a small C program against the generated header and the
// static library. Skipped when no C compiler is available.
#[test]
fn c_smoke_test() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|cand| {
            std::process::Command::new(cand)
                .arg("--version")
                .output()
                .map(|o| o.status.success())
                .unwrap_or(false)
        })
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping C smoke test");
        return;
    };

    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    // The static library lands in target/<profile>/ two levels up from the
    // integration-test executable.
    let mut lib_dir = std::env::current_exe().unwrap();
    lib_dir.pop();
    lib_dir.pop();
    let lib = lib_dir.join("liblshattn_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "lshattn.h"

int main(void) {
    LshattnStatus status;
    LshattnCloud *cloud = lshattn_cloud_uniform_square(100, 1.0, 3, &status);
    if (status != LshattnStatus_Ok || !cloud) return 1;
    if (lshattn_cloud_len(cloud) != 100) return 2;
    LshattnSupport *support = lshattn_knn_support(cloud, 4, &status);
    if (status != LshattnStatus_Ok) return 3;
    LshattnApproxResult result;
    if (lshattn_lsh_approx(cloud, support, 2, 1, 0.4, 7, &result) != LshattnStatus_Ok) return 4;
    if (!(result.epsilon >= 0.0)) return 5;
    double p = lshattn_collision_prob(1.0, 1.0, &status);
    if (p < 0.36 || p > 0.38) return 6;
    lshattn_support_free(support);
    lshattn_cloud_free(cloud);
    printf("epsilon=%g flops=%llu p=%g\n", result.epsilon,
           (unsigned long long)result.flops, p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let compile = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib)
        .arg("-lm")
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-o")
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "C compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "C smoke test exited {:?}", run.status.code());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("epsilon="), "stdout: {stdout}");
}
