use criterion::{black_box, criterion_group, criterion_main, Criterion};

use lshattn::approx::{lsh_collision_tables, lsh_epsilon_empirical, SupportDistances};
use lshattn::attention::{block_attention, dense_attention, BlockAttnConfig};
use lshattn::geometry::{gen_uniform_square, knn_support, knn_support_grid};
use lshattn::kernels::RffMap;

fn bench_knn(c: &mut Criterion) {
    let cloud = gen_uniform_square(2000, 2.58, 1).unwrap();
    let mut group = c.benchmark_group("knn_support");
    group.sample_size(10);
    group.bench_function("brute_n2000_k64", |b| {
        b.iter(|| knn_support(black_box(&cloud), 64).unwrap())
    });
    group.bench_function("grid_n2000_k64", |b| {
        b.iter(|| knn_support_grid(black_box(&cloud), 64).unwrap())
    });
    group.finish();
}

fn bench_collision_tables(c: &mut Criterion) {
    let cloud = gen_uniform_square(3000, 3.16, 2).unwrap();
    let support = knn_support_grid(&cloud, 64).unwrap();
    let sd = SupportDistances::new(&cloud, &support);
    let mut group = c.benchmark_group("lsh");
    group.sample_size(20);
    group.bench_function("tables_n3000_m1x20_m2x3", |b| {
        b.iter(|| lsh_collision_tables(black_box(cloud.coords()), 20, 3, 0.75, 7).unwrap())
    });
    let tables = lsh_collision_tables(cloud.coords(), 20, 3, 0.75, 7).unwrap();
    group.bench_function("epsilon_n3000_support64", |b| {
        b.iter(|| lsh_epsilon_empirical(black_box(&sd), black_box(&tables)).unwrap())
    });
    group.finish();
}

fn bench_rff(c: &mut Criterion) {
    let cloud = gen_uniform_square(3000, 3.16, 3).unwrap();
    let map = RffMap::new(2, 128, 5).unwrap();
    c.bench_function("rff_features_n3000_d128", |b| {
        b.iter(|| map.features_matrix(black_box(cloud.coords())).unwrap())
    });
}

fn bench_attention(c: &mut Criterion) {
    use ndarray::Array2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let n = 2000;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let coords = gen_uniform_square(n, 2.58, 4).unwrap().coords().to_owned();
    let mut build = |cols: usize| -> Array2<f64> {
        Array2::from_shape_fn((n, cols), |_| rng.random_range(-1.0..1.0))
    };
    let q = build(10);
    let k = build(10);
    let v = build(8);
    let cfg = BlockAttnConfig {
        tables: 3,
        coord_hashes: 2,
        bucket_total: 16.0,
        block_size: 100,
        seed: 9,
        ..BlockAttnConfig::default()
    };
    let mut group = c.benchmark_group("attention");
    group.sample_size(10);
    group.bench_function("block_n2000_m1x3_b100", |b| {
        b.iter(|| block_attention(&q, &k, &v, &coords, black_box(&cfg)).unwrap())
    });
    group.bench_function("dense_n2000", |b| {
        b.iter(|| dense_attention(black_box(&q), &k, &v).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_knn, bench_collision_tables, bench_rff, bench_attention);
criterion_main!(benches);
