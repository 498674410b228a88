mod common;

use mmsense_data::ModalityKind;
use mmsense_model::blocks::CrossAttention;
use mmsense_model::{ModelConfig, QFormer, Umip};
use mmsense_tensor::rng::seeded;
use mmsense_tensor::{Graph, ParamStore, Tensor};

fn cfg(blocks: usize) -> ModelConfig {
    ModelConfig {
        projector_blocks: blocks,
        ..common::tiny_cfg()
    }
}

fn randn(shape: [usize; 2], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut seeded(seed)).unwrap()
}

#[test]
fn zeroed_blocks_reduce_to_pooled_projection() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(3), ModalityKind::Video, &mut seeded(1)).unwrap();
    u.zero_block_outputs(&mut store).unwrap();
    let mut g = Graph::with_params(&store);
    let y = g.constant(randn([10, 16], 2));
    let t = g.constant(randn([4, 16], 3));
    let z = u.forward(&mut g, y, t).unwrap();
    let q = g.adaptive_avg_pool(y, 4).unwrap();
    let want = u.final_mlp.forward(&mut g, q).unwrap();
    assert_eq!(g.value(z), g.value(want));
}

#[test]
fn joint_kv_row_permutation_leaves_output_unchanged() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(2), ModalityKind::Video, &mut seeded(4)).unwrap();
    let feats = randn([4, 16], 5);
    let perm = [2usize, 0, 3, 1];
    let mut permuted = Vec::new();
    for &r in &perm {
        permuted.extend_from_slice(feats.row(r));
    }
    let permuted = Tensor::new([4, 16], permuted).unwrap();
    let run = |t: Tensor<f64>| {
        let mut g = Graph::with_params(&store);
        let y = g.constant(randn([8, 16], 6));
        let t = g.constant(t);
        let z = u.forward(&mut g, y, t).unwrap();
        g.value(z).clone()
    };
    let diff = run(feats).max_abs_diff(&run(permuted)).unwrap();
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn keys_and_values_are_computed_once_per_sample() {
    for blocks in [1, 2, 5] {
        let mut store = ParamStore::<f64>::new();
        let u = Umip::new(&mut store, &cfg(blocks), ModalityKind::Video, &mut seeded(1)).unwrap();
        for sample in 0..3u64 {
            let mut g = Graph::with_params(&store);
            let y = g.constant(randn([6, 16], sample));
            let t = g.constant(randn([4, 16], sample + 10));
            u.forward(&mut g, y, t).unwrap();
        }
        assert_eq!(u.kv_calls(), 3, "L = {blocks}");
    }
}

#[test]
fn single_block_is_block_then_projection() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(1), ModalityKind::Video, &mut seeded(8)).unwrap();
    let mut g = Graph::with_params(&store);
    let y = g.constant(randn([8, 16], 1));
    let t = g.constant(randn([4, 16], 2));
    let z = u.forward(&mut g, y, t).unwrap();
    let q = u.form_queries(&mut g, y, 4).unwrap();
    let (k, v) = u.kv_from_features(&mut g, t).unwrap();
    let q = u.blocks[0].forward(&mut g, q, k, v).unwrap();
    let want = u.final_mlp.forward(&mut g, q).unwrap();
    assert_eq!(g.value(z), g.value(want));
    assert!(Umip::new(
        &mut ParamStore::<f64>::new(),
        &cfg(0),
        ModalityKind::Video,
        &mut seeded(1)
    )
    .is_err());
}

#[test]
fn query_pooling_cases() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(1), ModalityKind::Video, &mut seeded(1)).unwrap();
    let mut g = Graph::with_params(&store);
    let x = randn([7, 16], 3);
    let xv = g.constant(x.clone());
    let same = u.form_queries(&mut g, xv, 7).unwrap();
    assert_eq!(g.value(same), &x);
    let c = g.constant(Tensor::full([128, 16], 0.25).unwrap());
    let q = u.form_queries(&mut g, c, 64).unwrap();
    assert_eq!(g.shape(q), &[64, 16]);
    assert!(g.value(q).data().iter().all(|&v| v == 0.25));
    assert!(u.form_queries(&mut g, xv, 8).is_err());
}

#[test]
fn kv_flattening_is_row_major() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(1), ModalityKind::Video, &mut seeded(1)).unwrap();
    store.set_value(u.k.weight, Tensor::eye(16).unwrap()).unwrap();
    u.k.zero_bias(&mut store);
    u.v.zero(&mut store).unwrap();
    let grid: Vec<f64> = (0..4 * 4 * 16).map(|i| i as f64).collect();
    let flat = Tensor::new([16, 16], grid.clone()).unwrap();
    let mut g = Graph::with_params(&store);
    let t = g.constant(flat);
    let (k, v) = u.kv_from_features(&mut g, t).unwrap();
    assert_eq!(g.shape(k), &[16, 16]);
    // grid[1][0] with w = 4 starts at element (1 * 4 + 0) * 16.
    assert_eq!(g.value(k).row(4), &grid[64..80]);
    assert!(g.value(v).data().iter().all(|&x| x == 0.0));
}

#[test]
fn zero_grid_with_zero_bias_gives_zero_kv() {
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg(1), ModalityKind::Video, &mut seeded(1)).unwrap();
    u.k.zero_bias(&mut store);
    u.v.zero_bias(&mut store);
    let mut g = Graph::with_params(&store);
    let t = g.constant(Tensor::zeros([16, 16]).unwrap());
    let (k, v) = u.kv_from_features(&mut g, t).unwrap();
    assert!(g.value(k).data().iter().chain(g.value(v).data()).all(|&x| x == 0.0));
}

#[test]
fn single_key_cross_attention_injects_the_value_row() {
    let mut store = ParamStore::<f64>::new();
    let att = CrossAttention::new(&mut store, "x", 16, 4, &mut seeded(2)).unwrap();
    store.set_value(att.o.weight, Tensor::eye(16).unwrap()).unwrap();
    att.o.zero_bias(&mut store);
    let mut g = Graph::with_params(&store);
    let q = g.constant(randn([5, 16], 1));
    let k = g.constant(randn([1, 16], 2));
    let v = randn([1, 16], 3);
    let vv = g.constant(v.clone());
    let out = att.forward(&mut g, q, k, vv).unwrap();
    for r in 0..5 {
        for (a, b) in g.value(out).row(r).iter().zip(v.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn query_bank_is_fixed_between_calls() {
    let mut store = ParamStore::<f64>::new();
    let q = QFormer::new(&mut store, &cfg(2), ModalityKind::Video, &mut seeded(1)).unwrap();
    let run = || {
        let mut g = Graph::inference(&store);
        let x = g.constant(randn([6, 16], 9));
        let z = q.forward(&mut g, x).unwrap();
        g.value(z).clone()
    };
    let a = run();
    assert_eq!(a.shape(), &[3, 16]);
    assert_eq!(a, run());
}
