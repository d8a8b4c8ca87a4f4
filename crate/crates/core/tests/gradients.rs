//! Analytic gradients against central finite differences in f64.

use mcdc_core::model::{build_model, ArchitectureSpec, ModelParams};
use mcdc_core::nn::{mse_loss, LayerKind, LayerParams, Node, Tensor};
use mcdc_core::train::{compute_step_gradients, discriminator_loss, discriminator_loss_grad, TrainConfig, Variant};
use mcdc_core::SeededRng;
use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Keeps the ratio meaningful when both gradients are essentially zero.
const FLOOR: f64 = 1e-6;
const SHAPES: usize = 24;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn central(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + EPS) - f(x0 - EPS)) / (2.0 * EPS)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error of input and parameter gradients of
/// `L = sum(layer(x) * r)` for a random projection `r`.
fn layer_error(layer: &LayerParams<f64>, x: &Tensor<f64>, rng: &mut SeededRng) -> f64 {
    let y = layer.forward(x).unwrap();
    let r = Tensor::<f64>::randn(y.shape().to_vec(), 1.0, rng);
    let (dx, pg) = layer.backward(x, &r, true).unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let n = central(
            |v| {
                let mut xp = x.clone();
                xp.data_mut()[i] = v;
                dot(&layer.forward(&xp).unwrap(), &r)
            },
            x.data()[i],
        );
        worst = worst.max(rel_err(dx.data()[i], n));
    }
    for i in 0..layer.weights.len() {
        let n = central(
            |v| {
                let mut l = layer.clone();
                l.weights.data_mut()[i] = v;
                dot(&l.forward(x).unwrap(), &r)
            },
            layer.weights.data()[i],
        );
        worst = worst.max(rel_err(pg.weights.data()[i], n));
    }
    for i in 0..layer.bias.len() {
        let n = central(
            |v| {
                let mut l = layer.clone();
                l.bias.data_mut()[i] = v;
                dot(&l.forward(x).unwrap(), &r)
            },
            layer.bias.data()[i],
        );
        worst = worst.max(rel_err(pg.bias.data()[i], n));
    }
    worst
}

/// Random input away from the rectifier kink.
fn off_kink(shape: Vec<usize>, rng: &mut SeededRng) -> Tensor<f64> {
    let mut t = Tensor::<f64>::randn(shape, 1.0, rng);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v = 0.05f64.copysign(*v);
        }
    }
    t
}

fn random_bias(layer: &mut LayerParams<f64>, rng: &mut SeededRng) {
    let shape = layer.bias.shape().to_vec();
    layer.bias = Tensor::randn(shape, 0.5, rng);
}

#[test]
fn dense_gradients() {
    let mut rng = SeededRng::new(11);
    for _ in 0..SHAPES {
        let (n, din, dout) = (rng.random_range(1..4), rng.random_range(1..7), rng.random_range(1..6));
        let mut l = LayerParams::<f64>::dense(din, dout, 0.2, &mut rng).unwrap();
        random_bias(&mut l, &mut rng);
        let x = Tensor::randn(vec![n, din], 1.0, &mut rng);
        let e = layer_error(&l, &x, &mut rng);
        assert!(e < TOL, "dense {n}x{din}->{dout}: {e}");
    }
}

#[test]
fn conv_gradients() {
    let mut rng = SeededRng::new(12);
    for _ in 0..SHAPES {
        let (n, cin, cout) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let mut l = LayerParams::<f64>::conv3x3(cin, cout, 0.2, &mut rng).unwrap();
        random_bias(&mut l, &mut rng);
        let x = Tensor::randn(vec![n, cin, h, w], 1.0, &mut rng);
        let e = layer_error(&l, &x, &mut rng);
        assert!(e < TOL, "conv {n}x{cin}x{h}x{w}->{cout}: {e}");
    }
}

#[test]
fn pool_gradients() {
    let mut rng = SeededRng::new(13);
    for _ in 0..SHAPES {
        let shape = vec![rng.random_range(1..3), rng.random_range(1..4), 2 * rng.random_range(1..4), 2 * rng.random_range(1..4)];
        let x = Tensor::randn(shape.clone(), 1.0, &mut rng);
        let e = layer_error(&LayerParams::avgpool2x2(), &x, &mut rng);
        assert!(e < TOL, "pool {shape:?}: {e}");
    }
}

#[test]
fn upsample_gradients() {
    let mut rng = SeededRng::new(14);
    for _ in 0..SHAPES {
        let shape = vec![rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)];
        let x = Tensor::randn(shape.clone(), 1.0, &mut rng);
        let e = layer_error(&LayerParams::upsample_nn2x(), &x, &mut rng);
        assert!(e < TOL, "upsample {shape:?}: {e}");
    }
}

#[test]
fn leaky_relu_gradients() {
    let mut rng = SeededRng::new(15);
    for _ in 0..SHAPES {
        let shape = vec![rng.random_range(1..4), rng.random_range(1..9)];
        let slope = rng.random_range(0.0..0.5);
        let x = off_kink(shape.clone(), &mut rng);
        let e = layer_error(&LayerParams::leaky_relu(slope), &x, &mut rng);
        assert!(e < TOL, "leaky relu {shape:?} slope {slope}: {e}");
    }
}

#[test]
fn mse_gradients() {
    let mut rng = SeededRng::new(16);
    for _ in 0..SHAPES {
        let shape = vec![rng.random_range(1..5), rng.random_range(1..8)];
        let p = Tensor::<f64>::randn(shape.clone(), 1.0, &mut rng);
        let t = Tensor::<f64>::randn(shape, 1.0, &mut rng);
        let (_, g) = mse_loss(&p, &t).unwrap();
        for i in 0..p.len() {
            let n = central(
                |v| {
                    let mut q = p.clone();
                    q.data_mut()[i] = v;
                    mse_loss(&q, &t).unwrap().0
                },
                p.data()[i],
            );
            assert!(rel_err(g.data()[i], n) < TOL);
        }
    }
}

#[test]
fn critic_loss_gradients() {
    let mut rng = SeededRng::new(17);
    for _ in 0..SHAPES {
        let m = rng.random_range(1..10);
        let mix: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.5)).collect();
        let blend: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g_mix, g_blend) = discriminator_loss_grad(&mix, &alpha, &blend).unwrap();
        for i in 0..m {
            let n = central(
                |v| {
                    let mut q = mix.clone();
                    q[i] = v;
                    discriminator_loss(&q, &alpha, &blend).unwrap()
                },
                mix[i],
            );
            assert!(rel_err(g_mix[i], n) < TOL);
            let n = central(
                |v| {
                    let mut q = blend.clone();
                    q[i] = v;
                    discriminator_loss(&mix, &alpha, &q).unwrap()
                },
                blend[i],
            );
            assert!(rel_err(g_blend[i], n) < TOL);
        }
    }
}

fn param_mut(model: &mut ModelParams<f64>, net: usize, node: usize, bias: bool, i: usize) -> &mut f64 {
    let seq = match net {
        0 => &mut model.encoder,
        1 => &mut model.decoder,
        _ => &mut model.discriminator,
    };
    let Node::Layer(l) = &mut seq.nodes[node] else { unreachable!() };
    let t = if bias { &mut l.bias } else { &mut l.weights };
    &mut t.data_mut()[i]
}

/// Full-step gradients for each variant: autoencoder parameters against
/// the autoencoder objective, critic parameters against the critic loss.
#[test]
fn step_gradients_match_objectives() {
    let spec = ArchitectureSpec::mlp_toy(5, vec![4], 2);
    for variant in [Variant::Baseline, Variant::Acai, Variant::Mcdc] {
        let mut rng = SeededRng::new(21);
        let model: ModelParams<f64> = build_model(&spec, &mut rng).unwrap();
        let batch = off_kink(vec![4, 5], &mut rng);
        let cfg = TrainConfig::new(variant);
        let grads = compute_step_gradients(&model, &batch, &cfg, &mut SeededRng::new(3)).unwrap();
        let losses_at = |m: &ModelParams<f64>| compute_step_gradients(m, &batch, &cfg, &mut SeededRng::new(3)).unwrap().losses;
        let nets = [
            (0, &grads.encoder, &model.encoder),
            (1, &grads.decoder, &model.decoder),
        ];
        let mut checks: Vec<(usize, usize, bool, usize, f64)> = Vec::new();
        for (net, g, seq) in nets {
            for (node, n) in seq.nodes.iter().enumerate() {
                let Node::Layer(l) = n else { continue };
                if l.kind != LayerKind::Dense {
                    continue;
                }
                for i in 0..l.weights.len().min(6) {
                    checks.push((net, node, false, i, g.nodes[node].weights.data()[i]));
                }
                checks.push((net, node, true, 0, g.nodes[node].bias.data()[0]));
            }
        }
        for (net, node, bias, i, analytic) in checks {
            let n = central(
                |v| {
                    let mut m = model.clone();
                    *param_mut(&mut m, net, node, bias, i) = v;
                    losses_at(&m).total_autoencoder
                },
                *param_mut(&mut model.clone(), net, node, bias, i),
            );
            assert!(rel_err(analytic, n) < TOL, "{variant} net {net} node {node}: {analytic} vs {n}");
        }
        if let Some(dg) = &grads.discriminator {
            for (node, n) in model.discriminator.nodes.iter().enumerate() {
                let Node::Layer(l) = n else { continue };
                if l.kind != LayerKind::Dense {
                    continue;
                }
                for i in 0..l.weights.len().min(6) {
                    let num = central(
                        |v| {
                            let mut m = model.clone();
                            *param_mut(&mut m, 2, node, false, i) = v;
                            losses_at(&m).discriminator
                        },
                        l.weights.data()[i],
                    );
                    let a = dg.nodes[node].weights.data()[i];
                    assert!(rel_err(a, num) < TOL, "{variant} critic node {node}: {a} vs {num}");
                }
            }
        } else {
            assert_eq!(variant, Variant::Baseline);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_gradient_property(seed in any::<u64>(), n in 1usize..4, din in 1usize..6, dout in 1usize..5) {
        let mut rng = SeededRng::new(seed);
        let mut l = LayerParams::<f64>::dense(din, dout, 0.2, &mut rng).unwrap();
        random_bias(&mut l, &mut rng);
        let x = Tensor::randn(vec![n, din], 1.0, &mut rng);
        prop_assert!(layer_error(&l, &x, &mut rng) < TOL);
    }

    #[test]
    fn conv_gradient_property(seed in any::<u64>(), cin in 1usize..3, cout in 1usize..3, h in 1usize..5, w in 1usize..5) {
        let mut rng = SeededRng::new(seed);
        let l = LayerParams::<f64>::conv3x3(cin, cout, 0.2, &mut rng).unwrap();
        let x = Tensor::randn(vec![1, cin, h, w], 1.0, &mut rng);
        prop_assert!(layer_error(&l, &x, &mut rng) < TOL);
    }
}
