//! Property tests for the hashing and geometry invariants.

use proptest::prelude::*;

use lshattn::geometry::{gen_uniform_square, knn_support, knn_support_grid, PointCloud};
use lshattn::lsh::{
    and_hash_codes, collision_prob, collision_prob_bounds, equal_count_bucketize,
    equal_size_blocks, sort_by_code,
};

proptest! {
    #[test]
    fn closed_form_always_within_bounds(z in 0.0f64..20.0, r in 1e-3f64..10.0) {
        let p = collision_prob(z, r).unwrap();
        let (lo, hi) = collision_prob_bounds(z, r).unwrap();
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "z={z} r={r}: {lo} {p} {hi}");
    }

    #[test]
    fn bucketize_indices_are_sorted_and_tie_stable(
        mut values in proptest::collection::vec(-100.0f64..100.0, 1..200),
        bucket_count in 1.0f64..12.0,
        duplicate in proptest::bool::ANY,
    ) {
        if duplicate {
            let clones = values.clone();
            values.extend(clones);
        }
        let idx = equal_count_bucketize(&values, bucket_count).unwrap();
        // Indices stay in range and are nondecreasing along the sorted order.
        let max_bucket = bucket_count.ceil() as u32;
        prop_assert!(idx.iter().all(|&i| i >= 1 && i <= max_bucket));
        let order = sort_by_code(&values);
        for w in order.windows(2) {
            prop_assert!(idx[w[0]] <= idx[w[1]]);
        }
        // Identical values always share a bucket.
        for a in 0..values.len() {
            for b in (a + 1)..values.len() {
                if values[a] == values[b] {
                    prop_assert_eq!(idx[a], idx[b]);
                }
            }
        }
    }

    #[test]
    fn and_codes_separate_tuples(
        base in proptest::collection::vec(-10.0f64..10.0, 2..64),
        tuple_seed in proptest::collection::vec(0u32..4, 2..64),
        counts in proptest::collection::vec(2.0f64..5.0, 1..4),
    ) {
        let n = base.len().min(tuple_seed.len());
        let base = &base[..n];
        let aux: Vec<Vec<u32>> = tuple_seed[..n]
            .iter()
            .map(|&s| {
                counts
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| 1 + (s + j as u32) % (c.ceil() as u32))
                    .collect()
            })
            .collect();
        let codes = and_hash_codes(base, &aux, &counts).unwrap();
        let delta = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - base.iter().cloned().fold(f64::INFINITY, f64::min);
        let offset = |tuple: &[u32]| -> f64 {
            let mut acc = 0.0;
            let mut radix = 1.0;
            for (j, &idx) in tuple.iter().enumerate() {
                acc += (idx as f64 - 1.0) * radix;
                radix *= counts[j];
            }
            acc * delta
        };
        for a in 0..n {
            for b in (a + 1)..n {
                if aux[a] == aux[b] {
                    // Same tuple: base distances are preserved exactly.
                    prop_assert!(
                        ((codes[a] - codes[b]).abs() - (base[a] - base[b]).abs()).abs() <= 1e-9
                    );
                } else {
                    // Different tuples: separated by at least the distance of
                    // their range starts minus the shared range width.
                    let gap = (offset(&aux[a]) - offset(&aux[b])).abs();
                    prop_assert!(
                        (codes[a] - codes[b]).abs() >= gap - delta - 1e-9,
                        "codes {} {} gap {gap} delta {delta}",
                        codes[a],
                        codes[b]
                    );
                }
            }
        }
    }

    #[test]
    fn blocks_preserve_code_order(
        codes in proptest::collection::vec(-50.0f64..50.0, 1..128),
        block_size in 1usize..20,
    ) {
        let blocks = equal_size_blocks(&codes, block_size).unwrap();
        let order = sort_by_code(&codes);
        // Block index is the sorted rank divided by the block size, so blocks
        // partition the code order into consecutive runs.
        for (rank, &item) in order.iter().enumerate() {
            prop_assert_eq!(blocks[item] as usize, rank / block_size);
        }
        let n_blocks = codes.len().div_ceil(block_size);
        for b in 0..n_blocks as u32 {
            let size = blocks.iter().filter(|&&x| x == b).count();
            let expect = if (b as usize) < n_blocks - 1 {
                block_size
            } else {
                codes.len() - (n_blocks - 1) * block_size
            };
            prop_assert_eq!(size, expect);
        }
    }

    #[test]
    fn grid_knn_equals_brute_force(
        n in 2usize..140,
        k_frac in 0.0f64..1.0,
        seed in 0u64..5000,
    ) {
        let cloud = gen_uniform_square(n, 1.0, seed).unwrap();
        let k = 1 + (k_frac * (n - 2) as f64) as usize;
        let brute = knn_support(&cloud, k).unwrap();
        let grid = knn_support_grid(&cloud, k).unwrap();
        prop_assert_eq!(brute, grid);
    }
}

// Full-scale support construction: 30k points in a side-10 square, 64
// neighbors each.
#[test]
fn knn_support_at_study_scale() {
    let cloud = gen_uniform_square(30_000, 10.0, 1).unwrap();
    let support = lshattn::geometry::knn_support_grid(&cloud, 64).unwrap();
    assert_eq!(support.len(), 30_000 * 64);
    for u in 0..cloud.len() {
        assert_eq!(support.out_degree(u), 64);
    }
}

// Larger deterministic instance of the grid/brute-force agreement.
#[test]
fn grid_knn_equals_brute_force_at_two_thousand_points() {
    let cloud = gen_uniform_square(2000, 2.58, 77).unwrap();
    for k in [1usize, 16, 64] {
        assert_eq!(
            knn_support(&cloud, k).unwrap(),
            knn_support_grid(&cloud, k).unwrap(),
            "k={k}"
        );
    }
    // Clustered duplicates exercise the tie-breaking path at scale.
    let base = gen_uniform_square(500, 0.2, 5).unwrap();
    let mut coords = Vec::new();
    for i in 0..base.len() {
        for _ in 0..3 {
            coords.extend(base.point(i).iter().copied());
        }
    }
    let cloud = PointCloud::new(ndarray::Array2::from_shape_vec((1500, 2), coords).unwrap()).unwrap();
    for k in [2usize, 7] {
        assert_eq!(
            knn_support(&cloud, k).unwrap(),
            knn_support_grid(&cloud, k).unwrap(),
            "duplicates k={k}"
        );
    }
}
