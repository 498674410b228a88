use mmsense_core::corpus::TextSample;
use mmsense_core::stage2::{prepare_all, sample_loss};
use mmsense_core::train::SampleLoss;
use mmsense_core::*;
use mmsense_data::ModalityKind;
use mmsense_eval::Task;
use mmsense_model::{argmax, Arm, ModelConfig};
use mmsense_tensor::ParamStore;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        d_m: 16,
        d_llm: 32,
        heads: 2,
        universal_blocks: 1,
        projector_blocks: 1,
        decoder_layers: 1,
        ..ModelConfig::desk()
    }
}

fn tiny_run(kind: ModalityKind) -> RunConfig {
    let mut run = RunConfig::desk();
    run.data.modalities = vec![kind];
    run.model.preset = "custom".into();
    run.model.custom = Some(tiny_model());
    run.schedule.stage1.epochs = 2;
    run.schedule.stage1.warmup_epochs = 1;
    run.schedule.stage1.milestones = vec![];
    run.schedule.stage2.epochs = 1;
    run
}

fn same_store(a: &ParamStore<f32>, b: &ParamStore<f32>) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((_, p), (_, q))| {
            p.name == q.name
                && p.value
                    .data()
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(q.value.data().iter().map(|v| v.to_bits()))
        })
}

#[test]
fn accumulated_micro_batches_match_one_large_batch() {
    let run = tiny_run(ModalityKind::MmWave);
    let corpus = Corpus::build(&run).unwrap();
    let (model, store) = init_stage1(&corpus, ModalityKind::MmWave, &tiny_model()).unwrap();
    let items: Vec<_> = corpus.split.train[..64]
        .iter()
        .map(|&id| {
            (
                corpus.payload(id, ModalityKind::MmWave).unwrap(),
                corpus.action(id).unwrap(),
            )
        })
        .collect();
    let f = |g: &mut mmsense_tensor::Graph<'_, f32>, it: &(mmsense_data::Payload, usize)| {
        let l = model.logits(g, &it.0)?;
        Ok(SampleLoss {
            loss: g.cross_entropy(l, &[Some(it.1)])?,
            correct: false,
        })
    };
    let (split, _) = batch_gradients(&store, &items, 16, f).unwrap();
    let (whole, stats) = batch_gradients(&store, &items, 64, f).unwrap();
    assert_eq!(stats.count, 64);
    let mut worst = 0.0f64;
    for (id, g) in whole.iter() {
        let h = split.get(id).unwrap();
        for (a, b) in g.data().iter().zip(h.data()) {
            worst = worst.max((*a as f64 - *b as f64).abs());
        }
    }
    assert!(worst <= 1e-6, "max gradient difference {worst}");
}

#[test]
fn zero_epochs_return_the_initialisation() {
    let mut run = tiny_run(ModalityKind::MmWave);
    run.schedule.stage1.epochs = 0;
    run.schedule.stage2.epochs = 0;
    run.train.language_epochs = 0;
    let corpus = Corpus::build(&run).unwrap();
    let s1 = pretrain_tailored(&corpus, ModalityKind::MmWave, &run).unwrap();
    let (_, init1) = init_stage1(&corpus, ModalityKind::MmWave, &tiny_model()).unwrap();
    assert!(same_store(&s1.store, &init1));
    assert!(s1.history.is_empty());
    let s2 = finetune(&corpus, ModalityKind::MmWave, Arm::Umip, &run, Some(&s1.store)).unwrap();
    let (_, init2) = init_stage2(&corpus, ModalityKind::MmWave, Arm::Umip, &run, Some(&s1.store)).unwrap();
    assert!(same_store(&s2.store, &init2));
}

#[test]
fn stage1_loss_curve_is_bitwise_reproducible() {
    let run = tiny_run(ModalityKind::WifiCsi);
    let a = pretrain_tailored(&Corpus::build(&run).unwrap(), ModalityKind::WifiCsi, &run).unwrap();
    let b = pretrain_tailored(&Corpus::build(&run).unwrap(), ModalityKind::WifiCsi, &run).unwrap();
    assert_eq!(a.history.len(), 2);
    let bits = |h: &[HistoryRow]| {
        h.iter()
            .map(|r| (r.loss.to_bits(), r.metric.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.history), bits(&b.history));
    assert!(same_store(&a.store, &b.store));
}

#[test]
fn stage1_separates_clean_video_within_thirty_epochs() {
    let mut run = RunConfig::desk();
    run.data.modalities = vec![ModalityKind::Video];
    assert!(run.schedule.stage1.epochs <= 30);
    let corpus = Corpus::build(&run).unwrap();
    let out = pretrain_tailored(&corpus, ModalityKind::Video, &run).unwrap();
    eprintln!("video stage-1 validation accuracy {:.3}", out.val_accuracy);
    assert!(out.val_accuracy >= 0.95, "{}", out.val_accuracy);
}

#[test]
fn stage2_keeps_frozen_groups_bitwise() {
    let run = tiny_run(ModalityKind::MmWave);
    let corpus = Corpus::build(&run).unwrap();
    let s1 = pretrain_tailored(&corpus, ModalityKind::MmWave, &run).unwrap();
    let s2 = finetune(&corpus, ModalityKind::MmWave, Arm::Umip, &run, Some(&s1.store)).unwrap();
    assert_eq!(group_hash(&s2.store, "tailored."), group_hash(&s1.store, "tailored."));
    assert_eq!(s2.frozen.tailored.0, s2.frozen.tailored.1);
    assert_eq!(s2.frozen.universal.0, s2.frozen.universal.1);
    let (_, init) = init_stage2(&corpus, ModalityKind::MmWave, Arm::Umip, &run, Some(&s1.store)).unwrap();
    assert_ne!(group_hash(&s2.store, "projector."), group_hash(&init, "projector."));
}

#[test]
fn tailored_arms_require_stage1() {
    let run = tiny_run(ModalityKind::MmWave);
    let corpus = Corpus::build(&run).unwrap();
    let e = init_stage2(&corpus, ModalityKind::MmWave, Arm::Umip, &run, None).unwrap_err();
    assert!(e.is_config(), "{e}");
    assert!(init_stage2(&corpus, ModalityKind::MmWave, Arm::Baseline, &run, None).is_ok());
}

#[test]
fn frozen_paths_cannot_be_unfrozen() {
    for group in ["tailored", "universal"] {
        let text = format!("[train]\ntrainable = [\"{group}\", \"decoder\"]\n");
        let e = RunConfig::from_toml(&text).unwrap_err();
        assert!(e.is_config(), "{e}");
    }
    assert!(RunConfig::from_toml("[train]\narms = [\"nope\"]\n").is_err());
}

#[test]
fn every_arm_sees_the_same_split() {
    let mut run = tiny_run(ModalityKind::MmWave);
    run.schedule.stage2.epochs = 0;
    run.eval.tasks = vec![Task::Recognition];
    let ab = run_ablation(&run).unwrap();
    assert_eq!(ab.arms.len(), 3);
    let first = &ab.arms[0];
    for a in &ab.arms {
        assert_eq!(a.split_hash, first.split_hash);
        assert_eq!(a.test_hash, first.test_hash);
    }
    let labels: Vec<&str> = ab.table.rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(labels, ["Baseline", "+TailorEncoder", "+UMIP"]);
}

#[test]
fn overfits_two_samples() {
    let mut run = tiny_run(ModalityKind::MmWave);
    run.model.custom = Some(ModelConfig {
        d_m: 32,
        d_llm: 64,
        ..tiny_model()
    });
    run.optimizer.adamw.weight_decay = 0.0;
    let corpus = Corpus::build(&run).unwrap();
    let kind = ModalityKind::MmWave;
    let (pipeline, mut store) = init_stage2(&corpus, kind, Arm::Baseline, &run, None).unwrap();
    let ids = &corpus.split.train[..2];
    let inputs = prepare_all(&corpus, &pipeline, &store, ids).unwrap();
    let samples: Vec<TextSample> = corpus.text_samples(ids, kind, &[Task::Caption]).unwrap();
    let mut opt = AdamW::new(run.optimizer.adamw).unwrap();
    let mut losses = Vec::new();
    for _ in 0..100 {
        let (grads, stats) =
            batch_gradients(&store, &samples, 2, |g, s| sample_loss(&pipeline, g, &inputs[&s.id], s)).unwrap();
        losses.push(stats.loss_sum / 2.0);
        opt.step(&mut store, &grads, 2e-3).unwrap();
    }
    for (i, w) in losses.windows(2).enumerate() {
        assert!(w[1] < w[0], "loss rose at step {}: {} -> {}", i + 1, w[0], w[1]);
    }
    for s in &samples {
        let p = pipeline
            .predict(&store, &inputs[&s.id], &s.prompt, s.answer.len() + 1)
            .unwrap();
        assert_eq!(p.answer, s.answer, "caption for sequence {}", s.id);
        assert_eq!(argmax(&p.class_logits), s.action);
    }
}
