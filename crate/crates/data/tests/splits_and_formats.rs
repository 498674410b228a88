use std::collections::BTreeSet;

use mmsense_data::curation::{captions_from_jsonl, qa_from_jsonl, to_jsonl, CaptionSample, QaSample, CAPTION_QUESTION};
use mmsense_data::dataset::{self, DatasetSpec};
use mmsense_data::{split, HeldOut, Manifest, ModalityKind, Setting};
use proptest::prelude::*;

fn sizes(spec: &DatasetSpec, setting: Setting) -> (usize, usize) {
    let m = Manifest::from_spec(spec);
    let s = split(&m, setting, &HeldOut::from_spec(spec), 0).unwrap();
    (s.train.len(), s.test.len())
}

#[test]
fn published_split_sizes() {
    let mmfi = dataset::mmfi();
    assert_eq!(sizes(&mmfi, Setting::Random), (12_336, 4_112));
    assert_eq!(sizes(&mmfi, Setting::CrossSub), (11_657, 4_791));
    assert_eq!(sizes(&mmfi, Setting::CrossEnv), (12_565, 3_883));
    let xrf = dataset::xrf55();
    assert_eq!(sizes(&xrf, Setting::Random), (14_850, 4_950));
    assert_eq!(sizes(&xrf, Setting::CrossSub), (14_300, 5_500));
    assert_eq!(sizes(&xrf, Setting::CrossEnv), (16_500, 3_300));
}

#[test]
fn cross_settings_separate_groups() {
    for spec in [dataset::mmfi(), dataset::xrf55(), dataset::desk()] {
        let m = Manifest::from_spec(&spec);
        for setting in [Setting::CrossSub, Setting::CrossEnv] {
            let s = split(&m, setting, &HeldOut::from_spec(&spec), 1).unwrap();
            let key = |id: &u64| {
                let e = m.get(*id).unwrap();
                if setting == Setting::CrossSub {
                    e.subject
                } else {
                    e.env
                }
            };
            let train: BTreeSet<usize> = s.train.iter().map(key).collect();
            let test: BTreeSet<usize> = s.test.iter().map(key).collect();
            assert!(train.is_disjoint(&test), "{} {setting}", spec.name);
        }
    }
}

#[test]
fn random_split_is_seeded() {
    let spec = dataset::desk();
    let m = Manifest::from_spec(&spec);
    let held = HeldOut::from_spec(&spec);
    let a = split(&m, Setting::Random, &held, 1).unwrap();
    let b = split(&m, Setting::Random, &held, 2).unwrap();
    assert_ne!(a.test, b.test);
    assert_eq!(a.hash(), split(&m, Setting::Random, &held, 1).unwrap().hash());
}

#[test]
fn odd_totals_round_toward_train() {
    let mut spec = dataset::desk();
    spec.subjects[0].sequences = 23;
    assert_eq!(sizes(&spec, Setting::Random), (144, 47));
}

fn arb_text() -> impl Strategy<Value = String> {
    "[a-zA-Z ,.'\"\\\\\u{e9}\u{4e2d}]{0,30}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_holds(n_subjects in 2usize..10, per in 1usize..30, seed in any::<u64>(), which in 0usize..3) {
        let mut spec = dataset::desk();
        spec.subjects = (0..n_subjects)
            .map(|id| mmsense_data::SubjectSpec { id, env: id % 4, sequences: per })
            .collect();
        spec.held_out_subjects = vec![0];
        spec.held_out_envs = vec![1];
        let m = Manifest::from_spec(&spec);
        let setting = Setting::ALL[which];
        let s = split(&m, setting, &HeldOut::from_spec(&spec), seed).unwrap();
        let train: BTreeSet<u64> = s.train.iter().copied().collect();
        let test: BTreeSet<u64> = s.test.iter().copied().collect();
        prop_assert!(train.is_disjoint(&test));
        let all: BTreeSet<u64> = m.entries.iter().map(|e| e.id).collect();
        let union: BTreeSet<u64> = train.union(&test).copied().collect();
        prop_assert_eq!(union, all);
        if setting == Setting::Random {
            prop_assert_eq!(s.train.len(), (3 * m.len()).div_ceil(4));
        }
        let again = split(&m, setting, &HeldOut::from_spec(&spec), seed).unwrap();
        prop_assert_eq!(serde_json::to_vec(&again).unwrap(), serde_json::to_vec(&s).unwrap());
    }

    #[test]
    fn qa_jsonl_round_trip(q in arb_text(), opts in proptest::collection::vec(arb_text(), 1..6), pick in 0usize..6, id in any::<u64>()) {
        let answer = opts[pick % opts.len()].clone();
        let rec = QaSample { sequence_id: id, modality: ModalityKind::Rfid, question: q, action_list: opts, answer };
        let text = to_jsonl(std::slice::from_ref(&rec));
        prop_assert_eq!(qa_from_jsonl(&text).unwrap(), vec![rec]);
    }

    #[test]
    fn caption_jsonl_round_trip(c in arb_text(), id in any::<u64>()) {
        let rec = CaptionSample { sequence_id: id, question: CAPTION_QUESTION.into(), caption: c };
        let text = to_jsonl(std::slice::from_ref(&rec));
        prop_assert_eq!(captions_from_jsonl(&text).unwrap(), vec![rec]);
    }
}
