use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uagan::{Adam, AdamConfig, Tape, Tensor};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// mean(log(sigmoid(tanh(a·B) ⊙ C + leaky(a·B)) + 1e-3 ... )) built from every op
/// with a smooth derivative on the sampled inputs.
fn graph(tape: &mut Tape, a: &Tensor, b: &Tensor, c: &Tensor) -> (Vec<uagan::Var>, uagan::Var) {
    let av = tape.leaf(a.clone());
    let bv = tape.leaf(b.clone());
    let cv = tape.leaf(c.clone());
    let ab = tape.matmul(av, bv).unwrap();
    let t = tape.tanh(ab);
    let prod = tape.mul(t, cv).unwrap();
    let leak = tape.leaky_relu(ab, 0.2);
    let sum = tape.add(prod, leak).unwrap();
    let wide = tape.concat(&[sum, t]).unwrap();
    let s = tape.sigmoid(wide);
    let shifted = tape.affine(s, 0.5, 0.25);
    let l = tape.log(shifted).unwrap();
    let scaled = tape.scale(l, -3.0);
    let out = tape.mean(scaled);
    (vec![av, bv, cv], out)
}

fn value(a: &Tensor, b: &Tensor, c: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let (_, out) = graph(&mut tape, a, b, c);
    tape.value(out).item()
}

#[test]
fn composite_graph_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-6;
    for _ in 0..10 {
        let inputs = [random(&mut rng, 3, 4, -1.0, 1.0), random(&mut rng, 4, 5, -1.0, 1.0), random(&mut rng, 3, 5, -2.0, 2.0)];
        let mut tape = Tape::new();
        let (vars, out) = graph(&mut tape, &inputs[0], &inputs[1], &inputs[2]);
        let mut grads = tape.backward(out, Tensor::scalar(1.0)).unwrap();
        for (which, &v) in vars.iter().enumerate() {
            let g = grads.take(v);
            for i in 0..g.len() {
                let mut up = inputs.clone();
                let mut dn = inputs.clone();
                up[which].data_mut()[i] += h;
                dn[which].data_mut()[i] -= h;
                let fd = (value(&up[0], &up[1], &up[2]) - value(&dn[0], &dn[1], &dn[2])) / (2.0 * h);
                let an = g.data()[i];
                assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-2), "input {which}[{i}]: fd {fd} vs {an}");
            }
        }
    }
}

#[test]
fn reused_nodes_accumulate_gradient() {
    // f(x) = sum(x ⊙ x) + sum(x): df/dx = 2x + 1
    let x = Tensor::vector(vec![0.5, -2.0, 3.0]);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let sq = tape.mul(xv, xv).unwrap();
    let both = tape.add(sq, xv).unwrap();
    let out = tape.sum(both);
    let g = tape.backward(out, Tensor::scalar(1.0)).unwrap();
    assert_eq!(g.wrt(xv).data(), &[2.0, -3.0, 7.0]);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = vec![Tensor::scalar(1.0)];
    let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let mut adam = Adam::new(cfg, &params);
    adam.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
    // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps).
    assert!((params[0].item() - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
}

#[test]
fn adam_matches_hand_recurrence_over_several_steps() {
    let cfg = AdamConfig { lr: 0.01, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
    let grads = [0.3, -1.2, 0.7, 0.05, -0.4];
    let mut params = vec![Tensor::vector(vec![2.0])];
    let mut adam = Adam::new(cfg, &params);
    let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
    for (t, &g) in grads.iter().enumerate() {
        adam.step(&mut params, &[Tensor::vector(vec![g])]).unwrap();
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t as i32 + 1));
        let vh = v / (1.0 - cfg.beta2.powi(t as i32 + 1));
        x -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        assert!((params[0].data()[0] - x).abs() < 1e-14, "step {t}");
    }
}
