//! Hot-path timings at reference scale: pair taxonomy, view blending,
//! batch sampling, and the full forward+backward training step.

use criterion::{criterion_group, criterion_main, Criterion};
use smc_core::dataset::{foreground_sampling_probs, sample_mix_indices, synth_longtail, ImageDims};
use smc_core::mixer::{
    make_training_view, sample_lambda, AugmentPolicy, MaskRect, MixOp, MixParams, MixRecord,
    Placement,
};
use smc_core::model::{ModelLayout, ModelParams};
use smc_core::pairloss::{balanced_ce, classify_pairs, smc_loss, total_loss};
use smc_core::rng;
use smc_core::tensor::Tensor;
use smc_core::Tape;
use rand::Rng;
use std::hint::black_box;

/// Mixed batch with the reference vocabulary: 128 views over 10 classes.
fn reference_records(n: usize) -> Vec<MixRecord> {
    let mut r = rng::seeded(11);
    (0..n)
        .map(|_| {
            let fg = r.random_range(0..10);
            let bg = r.random_range(0..10);
            let lambda = sample_lambda(1.0, false, &mut r);
            let mut soft_label = vec![0.0; 10];
            soft_label[fg] += lambda;
            soft_label[bg] += 1.0 - lambda;
            MixRecord {
                fg_class: fg,
                bg_class: bg,
                lambda_sampled: lambda,
                lambda_effective: lambda,
                mask_rect: MaskRect { top: 0, left: 0, height: 16, width: 16 },
                soft_label,
            }
        })
        .collect()
}

fn bench_classify_pairs(c: &mut Criterion) {
    let records = reference_records(128);
    c.bench_function("classify_pairs/128", |b| {
        b.iter(|| classify_pairs(black_box(&records)))
    });
}

fn bench_mixer(c: &mut Criterion) {
    let dims = ImageDims { c: 1, h: 28, w: 28 };
    let out = synth_longtail(3, 10.0, 30, dims, 5).expect("synth");
    let dataset = out.dataset;
    let params = MixParams {
        num_classes: 3,
        alpha: 1.0,
        full_range: false,
        mix_op: MixOp::Resize,
        policy: AugmentPolicy { pad: 4, flip_prob: 0.5, placement: Placement::BeforeMix },
    };
    let mut r = rng::seeded(6);
    c.bench_function("make_training_view/28x28", |b| {
        b.iter(|| {
            make_training_view(
                black_box(dataset.sample(0)),
                black_box(dataset.sample(35)),
                dims,
                &params,
                None,
                &mut r,
            )
        })
    });
}

fn bench_sampler(c: &mut Criterion) {
    let dims = ImageDims { c: 1, h: 8, w: 8 };
    let out = synth_longtail(10, 100.0, 500, dims, 5).expect("synth");
    let dataset = out.dataset;
    let q = foreground_sampling_probs(dataset.counts(), 1.0);
    let mut r = rng::seeded(7);
    c.bench_function("sample_mix_indices/64", |b| {
        b.iter(|| sample_mix_indices(black_box(&dataset), &q, 64, &mut r).expect("sampling"))
    });
}

/// One optimizer-step graph at reference scale: 128 views of 784 pixels
/// through the [256,128] encoder, both heads, both losses, and the
/// backward sweep.
fn bench_training_step(c: &mut Criterion) {
    let n = 128;
    let layout = ModelLayout {
        input_dim: 784,
        encoder_widths: vec![256, 128],
        head_dim: 128,
        num_classes: 10,
    };
    let mut r = rng::seeded(12);
    let params = ModelParams::init(layout, &mut r);
    let records = reference_records(n);
    let sets = classify_pairs(&records);
    let x = Tensor::matrix(n, 784, (0..n * 784).map(|_| r.random_range(0.0..1.0)).collect());
    let labels = Tensor::matrix(
        n,
        10,
        records.iter().flat_map(|rec| rec.soft_label.clone()).collect(),
    );
    let prior = vec![(0.1f64).ln(); 10];

    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    group.bench_function("forward_backward/128x784", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.leaf(&x);
            let feat = bound.encode(&mut tape, xv);
            let logits = bound.classify(&mut tape, feat);
            let z = bound.project(&mut tape, feat);
            let bce = balanced_ce(&mut tape, logits, &labels, &prior);
            let smc = smc_loss(&mut tape, z, &sets, &records, 0.1).expect("valid batch");
            let root = total_loss(&mut tape, bce, smc, 0.1);
            let vars = bound.params().to_vec();
            tape.eval_with_grad(root, &vars).expect("finite")
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_classify_pairs,
    bench_mixer,
    bench_sampler,
    bench_training_step
);
criterion_main!(benches);
