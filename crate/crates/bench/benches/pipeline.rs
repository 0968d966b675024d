use std::hint::black_box;

use bidoa::fusion::ItdScorer;
use bidoa::pipeline::{fuse, FeatureConfig, FrameProcessor};
use bidoa::scene::{synthesize, SceneConfig};
use bidoa::steering::default_directions;
use bidoa::stft::stft_analyze;
use bidoa::{Fusion, HeadModelConfig, ItdGrid, Method, MultichannelSpectrogram, SteeringDatabase, StftConfig};
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn setup() -> (SteeringDatabase, Vec<Vec<f64>>, MultichannelSpectrogram) {
    let cfg = StftConfig::default();
    let db = SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &cfg, &default_directions()).unwrap();
    let scene = SceneConfig { snr_db: Some(10.0), duration_s: 2.0, ..SceneConfig::new(vec![30.0, -90.0]) };
    let scene = synthesize(&scene, &db, &cfg).unwrap();
    let spec = stft_analyze(&scene.mixture, &cfg).unwrap();
    (db, scene.mixture, spec)
}

fn benches(c: &mut Criterion) {
    let (db, audio, spec) = setup();
    let cfg = StftConfig::default();

    let mut g = c.benchmark_group("stft");
    g.throughput(Throughput::Elements(spec.frames() as u64));
    g.bench_function("analyze_2s_4ch", |b| b.iter(|| stft_analyze(black_box(&audio), &cfg).unwrap()));
    g.finish();

    let mut g = c.benchmark_group("frame");
    g.sample_size(10);
    g.throughput(Throughput::Elements(spec.frames() as u64));
    for methods in [vec![Method::Rtf], Method::ALL.to_vec()] {
        let name = if methods.len() == 1 { "rtf_only" } else { "all_methods" };
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut p = FrameProcessor::new(&db, FeatureConfig::new(methods.clone())).unwrap();
                for l in 0..spec.frames() {
                    black_box(p.process(spec.frame(l), l >= 20).unwrap());
                }
            })
        });
    }
    g.finish();

    let mut p = FrameProcessor::new(&db, FeatureConfig::new(vec![Method::Rtf])).unwrap();
    let mut last = None;
    for l in 0..spec.frames() {
        if let Some(f) = p.process(spec.frame(l), l >= 20).unwrap() {
            last = Some(f);
        }
    }
    let features = last.expect("active frames");
    let scorer = ItdScorer::new(&cfg, ItdGrid::default(), 5.0).unwrap();
    c.bench_function("itd_scores_1801", |b| b.iter(|| scorer.scores(black_box(&features.g))));
    c.bench_function("grouped_fusion_j2", |b| {
        b.iter(|| {
            let grouping = features.grouping(black_box(0.0), 2);
            fuse(features.spectrum(Method::Rtf).unwrap(), Fusion::Grouped, &grouping, 2, db.directions())
        })
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
