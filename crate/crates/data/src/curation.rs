//! Action QA and Action Caption records.
//!
//! Both serialise as JSONL, one record per line. The question bank replaces
//! a rewriting service with a shipped list; captions come from templates over
//! (action, subject archetype).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::manifest::ManifestEntry;
use crate::modality::ModalityKind;

/// Fixed prompt for every caption record.
pub const CAPTION_QUESTION: &str = "Please give detailed descriptions of human's action.";

pub const BANK_SIZE: usize = 15;

/// Two seed-style questions followed by thirteen paraphrases. Original text.
pub const DEFAULT_QUESTIONS: [&str; BANK_SIZE] = [
    "What action is the person performing?",
    "Which activity does the subject carry out in this recording?",
    "Identify the action shown in the sensor data.",
    "Which of the listed actions is the person doing?",
    "What is the human doing in this sequence?",
    "Select the action that best matches the observed movement.",
    "Which activity is captured by the sensor?",
    "Determine the action performed by the person.",
    "What movement does the subject perform?",
    "Choose the action being carried out.",
    "Which action best describes the person's behavior?",
    "What kind of activity is taking place?",
    "Name the action the subject is performing.",
    "From the options, which action is observed?",
    "Recognize the activity of the person in the data.",
];

/// Subject archetypes used by caption templates, indexed by `subject % 4`.
pub const ARCHETYPES: [(&str, &str); 4] = [
    ("a tall adult", "steady"),
    ("a short adult", "quick"),
    ("a young person", "lively"),
    ("an older person", "careful"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionBank {
    questions: Vec<String>,
}

impl Default for QuestionBank {
    fn default() -> Self {
        Self {
            questions: DEFAULT_QUESTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl QuestionBank {
    /// Exactly [`BANK_SIZE`] unique, non-empty questions.
    pub fn new(questions: Vec<String>) -> Result<Self> {
        if questions.len() != BANK_SIZE {
            return Err(DataError::Curation(format!(
                "question bank needs {BANK_SIZE} entries, got {}",
                questions.len()
            )));
        }
        let unique: BTreeSet<&str> = questions.iter().map(|q| q.trim()).collect();
        if unique.len() != questions.len() || unique.contains("") {
            return Err(DataError::Curation(
                "question bank entries must be unique and non-empty".into(),
            ));
        }
        Ok(Self { questions })
    }

    /// One question per non-blank line.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = self.questions.join("\n");
        s.push('\n');
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaSample {
    pub sequence_id: u64,
    pub modality: ModalityKind,
    pub question: String,
    pub action_list: Vec<String>,
    pub answer: String,
}

impl QaSample {
    /// Question followed by the option list.
    pub fn prompt(&self) -> String {
        format!("{} Options: {}.", self.question, self.action_list.join(", "))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.action_list.contains(&self.answer) {
            return Err(DataError::Curation(format!(
                "sequence {}: answer `{}` not among the options",
                self.sequence_id, self.answer
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionSample {
    pub sequence_id: u64,
    pub question: String,
    pub caption: String,
}

impl CaptionSample {
    pub fn validate(&self) -> Result<()> {
        if self.question != CAPTION_QUESTION {
            return Err(DataError::Curation(format!(
                "sequence {}: caption question differs from the fixed prompt",
                self.sequence_id
            )));
        }
        Ok(())
    }
}

/// In-context caption example: question, path of the video payload, caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InContextSample {
    pub question: String,
    pub video: String,
    pub caption: String,
}

/// Draws a question uniformly from `bank`; the option list is every category
/// in canonical order.
pub fn make_qa_sample<R: Rng + ?Sized>(
    entry: &ManifestEntry,
    modality: ModalityKind,
    categories: &[String],
    bank: &QuestionBank,
    rng: &mut R,
) -> Result<QaSample> {
    if bank.is_empty() {
        return Err(DataError::Curation("question bank is empty".into()));
    }
    let answer = categories.get(entry.action).ok_or_else(|| {
        DataError::Manifest(format!(
            "sequence {}: action {} outside {} categories",
            entry.id,
            entry.action,
            categories.len()
        ))
    })?;
    let question = bank.questions[rng.gen_range(0..bank.len())].clone();
    Ok(QaSample {
        sequence_id: entry.id,
        modality,
        question,
        action_list: categories.to_vec(),
        answer: answer.clone(),
    })
}

pub trait CaptionSource {
    fn caption(&self, entry: &ManifestEntry) -> Option<String>;
}

/// Deterministic caption per (action, subject archetype).
#[derive(Debug, Clone)]
pub struct TemplateCaptions {
    pub categories: Vec<String>,
}

impl TemplateCaptions {
    pub fn new(categories: &[String]) -> Self {
        Self {
            categories: categories.to_vec(),
        }
    }

    pub fn render(&self, action: usize, subject: usize) -> Option<String> {
        let name = self.categories.get(action)?;
        let (who, manner) = ARCHETYPES[subject % ARCHETYPES.len()];
        Some(format!("{who} is {name} with {manner} movements."))
    }
}

impl CaptionSource for TemplateCaptions {
    fn caption(&self, entry: &ManifestEntry) -> Option<String> {
        self.render(entry.action, entry.subject)
    }
}

impl CaptionSource for BTreeMap<u64, String> {
    fn caption(&self, entry: &ManifestEntry) -> Option<String> {
        self.get(&entry.id).cloned()
    }
}

/// One record per sequence, reused unchanged for every modality.
pub fn make_caption_sample(entry: &ManifestEntry, source: &dyn CaptionSource) -> Result<CaptionSample> {
    let caption = source
        .caption(entry)
        .ok_or_else(|| DataError::Curation(format!("no caption for sequence {}", entry.id)))?;
    Ok(CaptionSample {
        sequence_id: entry.id,
        question: CAPTION_QUESTION.to_string(),
        caption,
    })
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DataError::Line {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Parses and validates QA records.
pub fn qa_from_jsonl(text: &str) -> Result<Vec<QaSample>> {
    let v: Vec<QaSample> = from_jsonl(text)?;
    v.iter().try_for_each(QaSample::validate)?;
    Ok(v)
}

/// Parses and validates caption records.
pub fn captions_from_jsonl(text: &str) -> Result<Vec<CaptionSample>> {
    let v: Vec<CaptionSample> = from_jsonl(text)?;
    v.iter().try_for_each(CaptionSample::validate)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;
    use crate::manifest::Manifest;
    use mmsense_tensor::rng::seeded;

    #[test]
    fn bank_invariants() {
        let b = QuestionBank::default();
        assert_eq!(b.len(), 15);
        assert_eq!(QuestionBank::from_text(&b.to_text()).unwrap(), b);
        let mut dup = b.questions().to_vec();
        dup[1] = dup[0].clone();
        assert!(QuestionBank::new(dup).is_err());
        assert!(QuestionBank::new(vec!["a".into()]).is_err());
    }

    #[test]
    fn qa_sample_contract() {
        let spec = dataset::mmfi();
        let m = Manifest::from_spec(&spec);
        let bank = QuestionBank::default();
        let e = &m.entries[40];
        let a = make_qa_sample(e, ModalityKind::Lidar, &spec.categories, &bank, &mut seeded(5)).unwrap();
        let b = make_qa_sample(e, ModalityKind::Lidar, &spec.categories, &bank, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.action_list.len(), 27);
        assert!(a.action_list.contains(&a.answer));
        assert!(a.prompt().starts_with(&a.question));
        let mut bad = e.clone();
        bad.action = 99;
        assert!(make_qa_sample(&bad, ModalityKind::Lidar, &spec.categories, &bank, &mut seeded(5)).is_err());
    }

    #[test]
    fn caption_shared_across_modalities() {
        let spec = dataset::desk();
        let m = Manifest::from_spec(&spec);
        let src = TemplateCaptions::new(&spec.categories);
        let c = make_caption_sample(&m.entries[7], &src).unwrap();
        assert_eq!(c.question, CAPTION_QUESTION);
        let again = make_caption_sample(&m.entries[7], &src).unwrap();
        assert_eq!(serde_json::to_vec(&c).unwrap(), serde_json::to_vec(&again).unwrap());
        let empty: BTreeMap<u64, String> = BTreeMap::new();
        let err = make_caption_sample(&m.entries[7], &empty).unwrap_err().to_string();
        assert!(err.contains('7'), "{err}");
    }

    #[test]
    fn template_oracle() {
        let t = TemplateCaptions::new(&["waving".to_string(), "jumping".to_string()]);
        assert_eq!(
            t.render(1, 2).unwrap(),
            "a young person is jumping with lively movements."
        );
        assert_eq!(t.render(0, 4), t.render(0, 0));
        assert!(t.render(2, 0).is_none());
    }

    #[test]
    fn jsonl_validation() {
        let qa = QaSample {
            sequence_id: 1,
            modality: ModalityKind::Video,
            question: "q".into(),
            action_list: vec!["a".into(), "b".into()],
            answer: "c".into(),
        };
        assert!(qa_from_jsonl(&to_jsonl(&[qa])).is_err());
        let cap = CaptionSample {
            sequence_id: 1,
            question: "other".into(),
            caption: "x".into(),
        };
        assert!(captions_from_jsonl(&to_jsonl(&[cap])).is_err());
    }
}
