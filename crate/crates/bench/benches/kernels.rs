use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uagan::aggregation::{ua_generator_gradient, GeneratorLoss, MixtureWeights};
use uagan::federation::{decode_message, encode_message, Feedback, Message};
use uagan::Tape;
use uagan_bench::{feedback, random_matrix, rng, toy_discriminator};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64, 256] {
        let mut r = rng(1);
        let (a, b) = (random_matrix(&mut r, n, n), random_matrix(&mut r, n, n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| black_box(a.matmul(&b).unwrap())));
    }
    group.finish();
}

fn mlp_backward(c: &mut Criterion) {
    let mut r = rng(2);
    let net = toy_discriminator(&mut r);
    let x = random_matrix(&mut r, 256, 2);
    c.bench_function("toy_disc_forward_backward_256", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let (_, out) = net.forward_on(&mut tape, xv).unwrap();
            let seed = uagan::Tensor::ones(tape.value(out).shape());
            black_box(tape.backward(out, seed).unwrap())
        })
    });
}

fn ua_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("ua_generator_gradient");
    for k in [1, 4, 16] {
        let fb = feedback(&mut rng(3), k, 256);
        let weights = MixtureWeights::uniform(k).unwrap();
        let loss = GeneratorLoss { nonsaturating: true, normalize_conditional_weights: false };
        group.bench_with_input(BenchmarkId::new("sites", k), &k, |bench, _| {
            bench.iter(|| black_box(ua_generator_gradient(&fb, &weights, None, loss).unwrap()))
        });
    }
    group.finish();
}

fn codec(c: &mut Criterion) {
    let mut r = rng(4);
    let fb = feedback(&mut r, 1, 256).remove(0);
    let msg = Message::Feedback(Feedback { round: 7, batch_id: 9, site: 0, predictions: fb.predictions, gradients: fb.gradients });
    let bytes = encode_message(&msg);
    c.bench_function("encode_feedback_256", |bench| bench.iter(|| black_box(encode_message(&msg))));
    c.bench_function("decode_feedback_256", |bench| bench.iter(|| black_box(decode_message(&bytes).unwrap())));
}

criterion_group!(benches, matmul, mlp_backward, ua_gradient, codec);
criterion_main!(benches);
