use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sarforge::models::{build_rdanet, ArchConfig};
use sarforge::nn::{Mode, Tensor4};
use sarforge::numerics::Prng;
use sarforge::rda::{focus_slc, RdaConfig};
use sarforge::sim::{random_scene, synthesize_echo, RadarConfig, SceneClass};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let wide = rayon::current_num_threads();
    let mut v = vec![(
        "sequential".to_string(),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if sarforge::par::is_parallel() {
        v.push((
            format!("parallel-{wide}"),
            rayon::ThreadPoolBuilder::new().num_threads(wide).build().unwrap(),
        ));
    }
    v
}

fn bench_focus(c: &mut Criterion) {
    let radar = RadarConfig::default();
    let rda = RdaConfig::desk(radar.clone());
    let mut p = Prng::new(1);
    let scene = random_scene(&radar, SceneClass::Ridge, &mut p);
    let echo = synthesize_echo(&radar, &scene, &mut p, 0.05).unwrap();
    let mut g = c.benchmark_group("rda_focus_128");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            pool.install(|| b.iter(|| focus_slc(&echo, &rda).unwrap()))
        });
    }
    g.finish();
}

fn bench_rdanet(c: &mut Criterion) {
    let arch = ArchConfig::desk();
    let mut net = build_rdanet(&arch, 0).unwrap();
    net.set_mode(Mode::Infer);
    let shape = arch.echo_shape();
    let mut p = Prng::new(2);
    let x = Tensor4::from_vec(8, shape, (0..8 * shape.len()).map(|_| p.normal()).collect()).unwrap();
    let mut g = c.benchmark_group("rdanet_forward_batch8");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            pool.install(|| b.iter(|| net.forward(&x).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_focus, bench_rdanet);
criterion_main!(benches);
