//! A generated dataset bound to one run: split, payloads and text samples.

use mmsense_data::curation::CAPTION_QUESTION;
use mmsense_data::split::holdout;
use mmsense_data::{
    generate_synthetic, split, HeldOut, ModalityKind, NoiseProfile, Payload, SplitAssignment, SyntheticDataset,
};
use mmsense_eval::Task;
use mmsense_tensor::rng::derive_seed;

use crate::config::RunConfig;
use crate::error::{Result, TrainError};

/// Seeds of one run, each derived from the root by label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub root: u64,
    pub data: u64,
    pub split: u64,
    pub model: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Self {
            root,
            data: derive_seed(root, "data"),
            split: derive_seed(root, "split"),
            model: derive_seed(root, "model"),
        }
    }
}

/// One prompt/answer pair for stage 2 or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSample {
    pub id: u64,
    pub action: usize,
    pub task: Task,
    pub prompt: Vec<u32>,
    pub answer: Vec<u32>,
    /// Answer text before tokenisation.
    pub reference: String,
}

pub struct Corpus {
    pub data: SyntheticDataset,
    pub split: SplitAssignment,
    pub seeds: Seeds,
}

impl Corpus {
    pub fn build(run: &RunConfig) -> Result<Self> {
        let spec = run.data.spec()?;
        let seeds = Seeds::new(run.seed.root);
        let noise = NoiseProfile { scale: run.data.noise };
        let data = generate_synthetic(&spec, noise, seeds.data)?;
        let split = split(
            &data.manifest,
            run.data.setting,
            &HeldOut::from_spec(&spec),
            seeds.split,
        )?;
        Ok(Self { data, split, seeds })
    }

    pub fn classes(&self) -> usize {
        self.data.spec.num_classes()
    }

    pub fn categories(&self) -> &[String] {
        &self.data.spec.categories
    }

    pub fn payload_shape(&self, kind: ModalityKind) -> Vec<usize> {
        self.data.spec.payload_shape(kind)
    }

    pub fn action(&self, id: u64) -> Result<usize> {
        Ok(self.entry(id)?.action)
    }

    fn entry(&self, id: u64) -> Result<&mmsense_data::ManifestEntry> {
        self.data
            .manifest
            .get(id)
            .ok_or_else(|| TrainError::Config(format!("sequence {id} not in the manifest")))
    }

    pub fn payload(&self, id: u64, kind: ModalityKind) -> Result<Payload> {
        Ok(self.data.generator.render(self.entry(id)?, kind)?)
    }

    /// Stage-1 `(train, validation)` ids drawn from the training split.
    pub fn stage1_ids(&self, val_fraction: f64) -> (Vec<u64>, Vec<u64>) {
        holdout(&self.split.train, val_fraction, self.seeds.split, "stage1/validation")
    }

    /// QA and caption samples of `ids` for `kind`, in id order, QA first.
    pub fn text_samples(&self, ids: &[u64], kind: ModalityKind, tasks: &[Task]) -> Result<Vec<TextSample>> {
        let vocab = &self.data.vocab;
        let mut out = Vec::new();
        for &id in ids {
            let action = self.action(id)?;
            for &task in tasks {
                let (prompt, reference) = match task {
                    Task::Qa => {
                        let q = self
                            .data
                            .qa_sample(id, kind)
                            .ok_or_else(|| TrainError::Config(format!("no QA sample for sequence {id} / {kind}")))?;
                        (q.prompt(), q.answer.clone())
                    }
                    Task::Caption => {
                        let c = self
                            .data
                            .caption(id)
                            .ok_or_else(|| TrainError::Config(format!("no caption for sequence {id}")))?;
                        (CAPTION_QUESTION.to_string(), c.caption.clone())
                    }
                    other => return Err(TrainError::Config(format!("`{other}` has no text samples"))),
                };
                out.push(TextSample {
                    id,
                    action,
                    task,
                    prompt: vocab.encode(&prompt)?,
                    answer: vocab.encode(&reference)?,
                    reference,
                });
            }
        }
        Ok(out)
    }

    /// Longest category name in tokens.
    pub fn max_answer_tokens(&self) -> Result<usize> {
        let mut n = 0;
        for c in self.categories() {
            n = n.max(self.data.vocab.encode(c)?.len());
        }
        Ok(n)
    }
}
