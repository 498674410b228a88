use mmsense_core::{AdamW, OptimizerConfig};
use mmsense_tensor::{Gradients, Graph, ParamStore, Tensor};
use proptest::prelude::*;

/// Gradient of `0.5 * sum((x - c)^2)` through the graph.
fn quad_grads(store: &ParamStore<f64>, targets: &[Vec<f64>]) -> Gradients<f64> {
    let mut g = Graph::with_params(store);
    let mut total = None;
    for (i, (id, p)) in store.iter().enumerate() {
        let x = g.param(id);
        let c = g.constant(Tensor::from_f64(p.value.shape().to_vec(), &targets[i]).unwrap());
        let nc = g.scale(c, -1.0);
        let d = g.add(x, nc).unwrap();
        let sq = g.mul(d, d).unwrap();
        let s = g.sum(sq);
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s).unwrap(),
        });
    }
    let loss = g.scale(total.unwrap(), 0.5);
    g.backward(loss).unwrap()
}

/// Scalar AdamW written out longhand.
struct Oracle {
    m: f64,
    v: f64,
    t: i32,
}

impl Oracle {
    fn step(&mut self, x: f64, grad: f64, lr: f64, wd: f64, cfg: &OptimizerConfig) -> f64 {
        self.t += 1;
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad;
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad;
        let mhat = self.m / (1.0 - cfg.beta1.powi(self.t));
        let vhat = self.v / (1.0 - cfg.beta2.powi(self.t));
        let x = x - lr * wd * x;
        x - lr * mhat / (vhat.sqrt() + cfg.eps)
    }
}

#[test]
fn matches_hand_stepped_quadratic() {
    let cfg = OptimizerConfig {
        weight_decay: 0.0,
        ..OptimizerConfig::default()
    };
    let init = [1.0, -2.0, 0.25];
    let target = vec![0.5, 0.5, 0.5];
    let mut store = ParamStore::<f64>::new();
    store.add("w.weight", Tensor::from_f64([3], &init).unwrap());
    let mut opt = AdamW::new(cfg).unwrap();
    let mut oracle: Vec<Oracle> = (0..3).map(|_| Oracle { m: 0.0, v: 0.0, t: 0 }).collect();
    let mut xs = init.to_vec();
    for step in 0..25 {
        let lr = 0.05 * (1.0 + step as f64 / 10.0);
        let grads = quad_grads(&store, std::slice::from_ref(&target));
        opt.step(&mut store, &grads, lr).unwrap();
        for k in 0..3 {
            xs[k] = oracle[k].step(xs[k], xs[k] - target[k], lr, 0.0, &cfg);
        }
        let got = store.value(store.id("w.weight").unwrap()).data();
        for k in 0..3 {
            assert!(
                (got[k] - xs[k]).abs() < 1e-12,
                "step {step} elem {k}: {} vs {}",
                got[k],
                xs[k]
            );
        }
    }
}

#[test]
fn decay_skips_bias_and_norm_parameters() {
    let cfg = OptimizerConfig::default();
    let mut store = ParamStore::<f64>::new();
    for name in ["a.weight", "a.bias", "ln.gamma", "ln.beta"] {
        store.add(name, Tensor::from_f64([1], &[2.0]).unwrap());
    }
    let targets = vec![vec![1.0]; 4];
    let grads = quad_grads(&store, &targets);
    let mut opt = AdamW::new(cfg).unwrap();
    opt.step(&mut store, &grads, 0.01).unwrap();
    let mut oracles: Vec<Oracle> = (0..4).map(|_| Oracle { m: 0.0, v: 0.0, t: 0 }).collect();
    let want_decayed = oracles[0].step(2.0, 1.0, 0.01, 0.1, &cfg);
    let want_plain = oracles[1].step(2.0, 1.0, 0.01, 0.0, &cfg);
    let vals: Vec<f64> = store.iter().map(|(_, p)| p.value.data()[0]).collect();
    assert!((vals[0] - want_decayed).abs() < 1e-12);
    for v in &vals[1..] {
        assert!((v - want_plain).abs() < 1e-12);
    }
}

#[test]
fn frozen_parameters_keep_their_bits() {
    let mut store = ParamStore::<f64>::new();
    let a = store.add("a.weight", Tensor::from_f64([2], &[1.0, 2.0]).unwrap());
    let b = store.add("b.weight", Tensor::from_f64([2], &[3.0, 4.0]).unwrap());
    store.set_frozen(b, true);
    let mut opt = AdamW::new(OptimizerConfig::default()).unwrap();
    for _ in 0..3 {
        let grads = quad_grads(&store, &[vec![0.0, 0.0], vec![0.0, 0.0]]);
        opt.step(&mut store, &grads, 0.1).unwrap();
    }
    assert_eq!(store.value(b).data(), &[3.0, 4.0]);
    assert_ne!(store.value(a).data(), &[1.0, 2.0]);
}

#[test]
fn invalid_settings_are_rejected() {
    let bad = OptimizerConfig {
        beta2: 1.0,
        ..OptimizerConfig::default()
    };
    assert!(AdamW::<f32>::new(bad).is_err());
    let mut store = ParamStore::<f64>::new();
    store.add("a.weight", Tensor::from_f64([1], &[1.0]).unwrap());
    let grads = quad_grads(&store, &[vec![0.0]]);
    let mut opt = AdamW::new(OptimizerConfig::default()).unwrap();
    assert!(opt.step(&mut store, &grads, f64::NAN).is_err());
    assert!(opt.step(&mut store, &grads, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_lr_is_identity(init in proptest::collection::vec(-5.0f64..5.0, 1..8), wd in 0.0f64..0.5) {
        let cfg = OptimizerConfig { weight_decay: wd, ..OptimizerConfig::default() };
        let mut store = ParamStore::<f64>::new();
        store.add("p.weight", Tensor::from_f64([init.len()], &init).unwrap());
        let grads = quad_grads(&store, &[vec![1.0; init.len()]]);
        let mut opt = AdamW::new(cfg).unwrap();
        opt.step(&mut store, &grads, 0.0).unwrap();
        prop_assert_eq!(store.iter().next().unwrap().1.value.data(), &init[..]);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_about_lr(init in proptest::collection::vec(-5.0f64..5.0, 1..8), lr in 1e-4f64..1e-1) {
        let cfg = OptimizerConfig { weight_decay: 0.0, ..OptimizerConfig::default() };
        let mut store = ParamStore::<f64>::new();
        store.add("p.weight", Tensor::from_f64([init.len()], &init).unwrap());
        let grads = quad_grads(&store, &[vec![10.0; init.len()]]);
        let mut opt = AdamW::new(cfg).unwrap();
        opt.step(&mut store, &grads, lr).unwrap();
        for (after, before) in store.iter().next().unwrap().1.value.data().iter().zip(&init) {
            prop_assert!(((after - before).abs() - lr).abs() <= lr * 1e-6);
        }
    }
}
