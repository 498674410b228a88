//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary so criteria execute one after another and the
//! wall-clock budgets are measured without other tests competing for the CPU.

#[path = "../../eval/tests/support/oracle.rs"]
mod meteor_oracle;
#[path = "../../model/tests/common/mod.rs"]
mod model_common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mmsense_core::ablation::{ablation_run, ArmOutcome, Stage1Cache};
use mmsense_core::run::{load_checked, train_stage1, train_stage2, OutDir};
use mmsense_core::{
    comparison_table, diagnostics, group_hash, init_stage1, init_stage2, Corpus, RunConfig, Stage1Schedule,
    Stage2Schedule,
};
use mmsense_data::dataset::{self, DatasetSpec};
use mmsense_data::{split, HeldOut, Manifest, ModalityKind, Setting};
use mmsense_eval::meteor::align;
use mmsense_eval::{meteor, meteor_tokens, Task};
use mmsense_model::{Arm, Example, ModelConfig, QFormer, Umip};
use mmsense_tensor::gradcheck::grad_check;
use mmsense_tensor::rng::seeded;
use mmsense_tensor::{ops, Graph, ParamStore, Tensor};

const SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// End-to-end finite differences, 64-bit, d_m = 16, two projector blocks.
fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (p, mut store) = model_common::build(ModalityKind::WifiCsi, Arm::Umip);
    assert_eq!((p.spec.cfg.d_m, p.spec.cfg.projector_blocks), (16, 2));
    let input = p
        .prepare(&store, &model_common::payload(ModalityKind::WifiCsi, 3))
        .unwrap();
    let id = model_common::id;
    let ex = Example::with_answer(
        &[id("what"), id("is"), id("the"), id("action")],
        &[id("waving"), id("person")],
    );
    let report = grad_check(
        &mut store,
        |g: &mut Graph<'_, f64>| {
            Ok(p.loss(g, &input, &ex, 1, None)
                .map_err(|e| mmsense_tensor::TensorError::Config(e.to_string()))?
                .total)
        },
        1e-5,
    )
    .unwrap();
    let t = start.elapsed();
    check(
        report.passed && report.max_rel_error <= 1e-5 && t < Duration::from_secs(60),
        format!(
            "max rel err {:.2e} over {} entries (<= 1e-5), {} (< 60s)",
            report.max_rel_error,
            report.entries_checked,
            secs(t)
        ),
    )
}

fn randn(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    Tensor::randn([rows, cols], 1.0, &mut seeded(seed)).unwrap()
}

/// Softmax rows, identity pooling and joint key/value permutation.
fn attention_invariants() -> Outcome {
    let start = Instant::now();
    let mut worst_sum = 0.0f64;
    for seed in 0..50 {
        let x = randn(7, 13, seed).map(|v| v * 8.0);
        let s = ops::softmax_rows(&x).unwrap();
        for r in 0..s.rows() {
            worst_sum = worst_sum.max((s.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    let mut pool_ok = true;
    for n in 1..20 {
        let x = randn(n, 5, n as u64);
        pool_ok &= ops::adaptive_avg_pool_1d(&x, n).unwrap() == x;
    }
    let cfg = ModelConfig {
        projector_blocks: 2,
        ..model_common::tiny_cfg()
    };
    let mut store = ParamStore::<f64>::new();
    let u = Umip::new(&mut store, &cfg, ModalityKind::Video, &mut seeded(4)).unwrap();
    let feats = randn(9, 16, 5);
    let perm = [4usize, 0, 8, 2, 7, 1, 3, 6, 5];
    let permuted = Tensor::new([9, 16], perm.iter().flat_map(|&r| feats.row(r).to_vec()).collect()).unwrap();
    let project = |t: Tensor<f64>| {
        let mut g = Graph::with_params(&store);
        let y = g.constant(randn(8, 16, 6));
        let t = g.constant(t);
        let z = u.forward(&mut g, y, t).unwrap();
        g.value(z).clone()
    };
    let perm_diff = project(feats).max_abs_diff(&project(permuted)).unwrap();
    let t = start.elapsed();
    check(
        worst_sum <= 1e-6 && pool_ok && perm_diff <= 1e-6 && t < Duration::from_secs(30),
        format!(
            "row-sum err {worst_sum:.1e}, pool identity {pool_ok}, permutation diff {perm_diff:.1e}, {} (< 30s)",
            secs(t)
        ),
    )
}

/// Forward-only token counts at full widths.
fn full_scale_shapes() -> Outcome {
    let expect = [
        (ModelConfig::full_mmfi(), ModalityKind::Video, 64),
        (ModelConfig::full_mmfi(), ModalityKind::Lidar, 256),
        (ModelConfig::full_mmfi(), ModalityKind::WifiCsi, 16),
    ];
    let mut seen = Vec::new();
    let mut ok = true;
    for (cfg, kind, want) in expect {
        ok &= (cfg.d_m, cfg.d_llm, cfg.projector_blocks) == (1024, 4096, 8);
        let mut store = ParamStore::<f32>::new();
        let u = Umip::new(&mut store, &cfg, kind, &mut seeded(1)).unwrap();
        let mut g = Graph::inference(&store);
        let y = g.constant(Tensor::randn([512, 1024], 1.0, &mut seeded(2)).unwrap());
        let f = g.constant(Tensor::randn([16, 1024], 1.0, &mut seeded(3)).unwrap());
        let z = u.forward(&mut g, y, f).unwrap();
        ok &= g.shape(z) == [want, 4096];
        seen.push(format!("{}={}", kind.short(), g.shape(z)[0]));
    }
    for kind in [
        ModalityKind::Depth,
        ModalityKind::Infrared,
        ModalityKind::MmWave,
        ModalityKind::Rfid,
    ] {
        let want = match kind {
            ModalityKind::Rfid => 16,
            _ => 64,
        };
        ok &= ModelConfig::full_mmfi().queries_for(kind).unwrap() == want;
    }
    ok &= ModelConfig::full_xrf55().queries_for(ModalityKind::WifiCsi).unwrap() == 256;
    let cfg = ModelConfig::full_mmfi();
    let mut store = ParamStore::<f32>::new();
    let q = QFormer::new(&mut store, &cfg, ModalityKind::Video, &mut seeded(1)).unwrap();
    let bank = store.value(q.queries).shape().to_vec();
    ok &= bank == [30, 1024];
    check(
        ok,
        format!("tokens {} (64/256/16), query bank {bank:?}", seen.join(" ")),
    )
}

fn split_sizes(spec: &DatasetSpec, setting: Setting, seed: u64) -> mmsense_data::SplitAssignment {
    split(&Manifest::from_spec(spec), setting, &HeldOut::from_spec(spec), seed).unwrap()
}

fn split_statistics() -> Outcome {
    let mmfi = dataset::mmfi();
    let r = split_sizes(&mmfi, Setting::Random, 0);
    let mut ok = (r.train.len(), r.test.len()) == (12_336, 4_112);
    for spec in [dataset::mmfi(), dataset::xrf55(), dataset::desk()] {
        let all: BTreeSet<u64> = Manifest::from_spec(&spec).entries.iter().map(|e| e.id).collect();
        for setting in Setting::ALL {
            let runs: Vec<_> = (0..3).map(|_| split_sizes(&spec, setting, 9)).collect();
            let bytes: Vec<Vec<u8>> = runs.iter().map(|s| serde_json::to_vec(s).unwrap()).collect();
            ok &= bytes.windows(2).all(|w| w[0] == w[1]);
            let train: BTreeSet<u64> = runs[0].train.iter().copied().collect();
            let test: BTreeSet<u64> = runs[0].test.iter().copied().collect();
            ok &= train.is_disjoint(&test);
            ok &= train.union(&test).copied().collect::<BTreeSet<_>>() == all;
        }
    }
    check(
        ok,
        format!(
            "MM-Fi-like random {} / {} (12336 / 4112); disjoint, covering and bitwise stable over 3 reruns",
            r.train.len(),
            r.test.len()
        ),
    )
}

fn meteor_equivalence() -> Outcome {
    let pairs = meteor_oracle::random_pairs(2024, 320);
    let mut checked = 0;
    let mut mismatches = 0;
    for (c, r) in &pairs {
        if c.is_empty() || r.is_empty() {
            continue;
        }
        let cs: Vec<&str> = c.iter().map(String::as_str).collect();
        let rs: Vec<&str> = r.iter().map(String::as_str).collect();
        let want = meteor_oracle::enumerate(&cs, &rs);
        let score = meteor_tokens(c, r).score;
        if align(c, r) != want || score != meteor_oracle::score(want.0, want.1, c.len(), r.len()) {
            mismatches += 1;
        }
        checked += 1;
    }
    let same = meteor("a b c d", "a b c d").score;
    let reversed = meteor("d c b a", "a b c d").score;
    check(
        checked >= 200 && mismatches == 0 && same == 0.9921875 && reversed == 0.5,
        format!("{checked} pairs, {mismatches} mismatches; identical {same}, reversed {reversed}"),
    )
}

/// One seed of the three-arm comparison, kept for later criteria.
struct SeedRun {
    seed: u64,
    run: RunConfig,
    arms: Vec<ArmOutcome>,
    corpus: Corpus,
}

fn desk_run(seed: u64) -> RunConfig {
    let mut run = RunConfig::desk();
    run.seed.root = seed;
    run.data.setting = Setting::CrossEnv;
    run
}

fn ablate_seed(seed: u64) -> SeedRun {
    let run = desk_run(seed);
    let corpus = Corpus::build(&run).unwrap();
    let cache = Stage1Cache::train(&corpus, &run).unwrap();
    let arms = Arm::ALL
        .iter()
        .map(|&a| ablation_run(&corpus, &run, a, &cache).unwrap())
        .collect();
    SeedRun {
        seed,
        run,
        arms,
        corpus,
    }
}

fn arm_avg(runs: &[SeedRun], arm: Arm, task: Task) -> f64 {
    let vals: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.arms
                .iter()
                .find(|a| a.arm == arm)
                .unwrap()
                .report
                .row(task)
                .unwrap()
                .avg
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn trend(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let spec = &runs[0].corpus.data.spec;
    let shape_ok = spec.num_classes() == 6
        && spec.modalities.len() == 3
        && runs.iter().all(|r| r.run.data.setting == Setting::CrossEnv);
    let base = arm_avg(runs, Arm::Baseline, Task::Recognition);
    let tail = arm_avg(runs, Arm::Tailored, Task::Recognition);
    let qa_tail = arm_avg(runs, Arm::Tailored, Task::Qa);
    let qa_umip = arm_avg(runs, Arm::Umip, Task::Qa);
    for r in runs {
        println!(
            "  seed {}:\n{}",
            r.seed,
            comparison_table(&r.arms).unwrap().to_csv().unwrap().trim_end()
        );
    }
    check(
        shape_ok && tail - base >= 0.10 && qa_umip >= qa_tail && elapsed < Duration::from_secs(30 * 60),
        format!(
            "recognition tailored {:.3} vs baseline {:.3} (margin {:+.3} >= 0.10); QA umip {:.3} vs tailored {:.3}; {} (< 30 min)",
            tail,
            base,
            tail - base,
            qa_umip,
            qa_tail,
            secs(elapsed)
        ),
    )
}

/// Checkpoints written by the stage-1 and stage-2 commands.
fn freezing_contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = OutDir::new(dir.path());
    let mut run = desk_run(5);
    run.schedule.stage1.epochs = 2;
    run.schedule.stage2.epochs = 1;
    let corpus = Corpus::build(&run).unwrap();
    train_stage1(&run, &corpus, &out).unwrap();
    let mut ok = true;
    let mut checked = 0;
    for arm in [Arm::Tailored, Arm::Umip] {
        train_stage2(&run, &corpus, arm, &out).unwrap();
        for kind in run.modalities().unwrap() {
            let s1 = load_checked(&out.stage1_ckpt(kind), &run).unwrap();
            let s2 = load_checked(&out.stage2_ckpt(arm, kind), &run).unwrap();
            let (_, init) = init_stage2(&corpus, kind, arm, &run, Some(&s1)).unwrap();
            ok &= group_hash(&s2, "tailored.") == group_hash(&s1, "tailored.");
            ok &= group_hash(&s2, "universal.") == group_hash(&init, "universal.");
            ok &= group_hash(&s2, "projector.") != group_hash(&init, "projector.");
            checked += 1;
        }
    }
    check(
        ok,
        format!("{checked} stage-2 checkpoints: tailored and universal hashes equal to their stage-1 / initial values"),
    )
}

/// Pooled video tokens of the UMIP arm, before and after stage 2.
fn alignment_direction(runs: &[SeedRun]) -> Outcome {
    let mut lines = Vec::new();
    let (mut d_sil, mut d_gap) = (0.0, 0.0);
    for r in runs {
        let kind = ModalityKind::Video;
        // Before any training: untrained tailored encoder, no stage 1, no warm-up.
        let (_, untrained) = init_stage1(&r.corpus, kind, &r.run.model.resolve().unwrap()).unwrap();
        let (p, store) = init_stage2(&r.corpus, kind, Arm::Umip, &r.run, Some(&untrained)).unwrap();
        let (sil0, gap0) = diagnostics(&p, &store, &r.corpus, &r.corpus.split.test).unwrap();
        let report = &r.arms.iter().find(|a| a.arm == Arm::Umip).unwrap().report;
        let sil1 = report.row(Task::Silhouette).unwrap().score(kind).unwrap();
        let gap1 = report.row(Task::AlignmentGap).unwrap().score(kind).unwrap();
        d_sil += (sil1 - sil0) / runs.len() as f64;
        d_gap += (gap1 - gap0) / runs.len() as f64;
        lines.push(format!(
            "seed {}: silhouette {sil0:.3} -> {sil1:.3}, gap {gap0:.4} -> {gap1:.4}",
            r.seed
        ));
    }
    check(
        d_sil >= 0.2 && d_gap < 0.0,
        format!(
            "seed-mean silhouette gain {d_sil:+.3} (>= 0.2), gap change {d_gap:+.4} (< 0); {}",
            lines.join("; ")
        ),
    )
}

fn schedule_correctness() -> Outcome {
    let s1 = Stage1Schedule::full();
    let s2 = Stage2Schedule::full();
    let reference1 = |step: u64, spe: u64| {
        let e = step as f64 / spe as f64;
        match e {
            e if e < 10.0 => 0.1 * e / 10.0,
            e if e < 60.0 => 0.1,
            e if e < 100.0 => 0.01,
            _ => 0.001,
        }
    };
    let reference2 = |step: u64| if step < 2000 { 2e-5 * step as f64 / 2000.0 } else { 2e-5 };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 + 1e-12 * b.abs();
    let mut steps = 0u64;
    let mut bad = 0u64;
    for spe in [1u64, 13, 193] {
        for step in 0..=(s1.epochs as u64 * spe) {
            bad += u64::from(!close(s1.lr_at(step, spe), reference1(step, spe)));
            steps += 1;
        }
    }
    for step in 0..=(5 * 4000u64) {
        bad += u64::from(!close(s2.lr_at(step), reference2(step)));
        steps += 1;
    }
    let boundaries = s1.lr_at(0, 7) == 0.0
        && close(s1.lr_at(35, 7), 0.05)
        && s1.lr_at(70, 7) == 0.1
        && s1.lr_at(60 * 7 - 1, 7) == 0.1
        && close(s1.lr_at(60 * 7, 7), 0.01)
        && close(s1.lr_at(100 * 7, 7), 0.001)
        && s2.lr_at(2000) == 2e-5;
    check(
        bad == 0 && boundaries,
        format!("{steps} steps checked, {bad} mismatches; boundaries {boundaries}"),
    )
}

fn report_bytes(arms: &[ArmOutcome]) -> Vec<(String, String)> {
    arms.iter()
        .map(|a| (a.report.to_json().unwrap(), a.report.to_csv().unwrap()))
        .collect()
}

fn determinism(first: &SeedRun) -> Outcome {
    let again = ablate_seed(first.seed);
    let a = report_bytes(&first.arms);
    let b = report_bytes(&again.arms);
    let table_a = comparison_table(&first.arms).unwrap().to_json().unwrap();
    let table_b = comparison_table(&again.arms).unwrap().to_json().unwrap();
    check(
        a == b && table_a == table_b,
        format!(
            "seed {}: {} reports and the comparison table byte-identical across two runs",
            first.seed,
            a.len()
        ),
    )
}

fn run_criterion(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail, ok) = match result {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("[{tag}] {n:>2}. {name}: {detail} [{}]", secs(start.elapsed()));
    ok
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results = Vec::new();
    results.push(run_criterion(1, "gradient fidelity", gradient_fidelity));
    results.push(run_criterion(
        2,
        "attention and pooling invariants",
        attention_invariants,
    ));
    results.push(run_criterion(3, "full-scale shape contract", full_scale_shapes));
    results.push(run_criterion(4, "split statistics", split_statistics));
    results.push(run_criterion(5, "METEOR oracle equivalence", meteor_equivalence));
    let start = Instant::now();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| ablate_seed(s)).collect();
    let elapsed = start.elapsed();
    results.push(run_criterion(6, "two-stage trend", || trend(&runs, elapsed)));
    results.push(run_criterion(7, "freezing contract", freezing_contract));
    results.push(run_criterion(8, "alignment diagnostic direction", || {
        alignment_direction(&runs)
    }));
    results.push(run_criterion(9, "schedule correctness", schedule_correctness));
    results.push(run_criterion(10, "determinism", || determinism(&runs[0])));
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
