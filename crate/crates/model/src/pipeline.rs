//! Per-modality assembly of the three ablation arms.
//!
//! | arm        | projector input                     | projector |
//! |------------|-------------------------------------|-----------|
//! | `baseline` | universal embeddings                | query bank |
//! | `tailored` | flattened tailored feature map      | query bank |
//! | `umip`     | universal (queries) + tailored (K,V)| injection  |
//!
//! Parameter names are grouped by prefix: `tokenizer.`, `universal.`,
//! `tailored.`, `stage1_head.`, `projector.`, `decoder.`.

use std::fmt;
use std::str::FromStr;

use mmsense_data::{ModalityKind, Payload};
use mmsense_tensor::rng::rng_for;
use mmsense_tensor::{Float, Graph, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::decoder::{DecodeOut, Decoder, DecoderConfig, Example, Stage2Loss};
use crate::error::{ModelError, Result};
use crate::projector::{Projector, QFormer, Umip};
use crate::tailored::{Stage1Head, TailoredEncoder};
use crate::tokenize::{TokenGrid, TokenLayout, Tokenizer};
use crate::universal::{word_vector, UniversalEncoder};

pub const GROUPS: [&str; 6] = [
    "tokenizer.",
    "universal.",
    "tailored.",
    "stage1_head.",
    "projector.",
    "decoder.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Baseline,
    Tailored,
    Umip,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Baseline, Arm::Tailored, Arm::Umip];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Tailored => "tailored",
            Arm::Umip => "umip",
        }
    }

    /// Row label in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Arm::Baseline => "Baseline",
            Arm::Tailored => "+TailorEncoder",
            Arm::Umip => "+UMIP",
        }
    }

    pub fn uses_universal(self) -> bool {
        self != Arm::Tailored
    }

    pub fn uses_tailored(self) -> bool {
        self != Arm::Baseline
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches('+') {
            "baseline" => Ok(Arm::Baseline),
            "tailored" | "tailorencoder" | "tailoredencoder" => Ok(Arm::Tailored),
            "umip" => Ok(Arm::Umip),
            other => Err(ModelError::Config(format!(
                "unknown arm `{other}` (baseline, tailored, umip)"
            ))),
        }
    }
}

/// Everything needed to build a pipeline besides the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub cfg: ModelConfig,
    pub kind: ModalityKind,
    pub arm: Arm,
    pub payload_shape: Vec<usize>,
    pub classes: usize,
    /// Vocabulary tokens in id order.
    pub vocab: Vec<String>,
    pub seed: u64,
}

/// Stage-1 model: tailored encoder plus classification head.
#[derive(Debug, Clone)]
pub struct Stage1Model {
    pub encoder: TailoredEncoder,
    pub head: Stage1Head,
}

impl Stage1Model {
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        kind: ModalityKind,
        payload_shape: &[usize],
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let encoder = TailoredEncoder::new(
            store,
            cfg,
            kind,
            payload_shape,
            &mut rng_for(seed, &format!("init/tailored/{}", kind.name())),
        )?;
        let head = Stage1Head::new(
            store,
            kind,
            cfg.d_m,
            classes,
            &mut rng_for(seed, &format!("init/stage1_head/{}", kind.name())),
        )?;
        Ok(Self { encoder, head })
    }

    /// `[1, C]` logits.
    pub fn logits<T: Float>(&self, g: &mut Graph<'_, T>, payload: &Payload) -> Result<Var> {
        let f = self.encoder.forward(g, payload)?;
        self.head.forward(g, f)
    }
}

/// Precomputed per-sample inputs: raw tokens and, since the tailored
/// encoder is frozen in stage 2, its feature map.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub raw: Option<TokenGrid<T>>,
    pub features: Option<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub action: usize,
    pub class_logits: Vec<f64>,
    pub answer: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub spec: PipelineSpec,
    pub tokenizer: Option<Tokenizer>,
    pub universal: Option<UniversalEncoder>,
    pub tailored: Option<TailoredEncoder>,
    pub projector: Projector,
    pub decoder: Decoder,
    /// `[vocab, d_m]` stub word vectors for tied embeddings.
    word_vecs: Option<Tensor<f64>>,
}

impl Pipeline {
    /// Builds all parameters of `spec.arm`; universal and tailored groups
    /// start frozen.
    pub fn new<T: Float>(store: &mut ParamStore<T>, spec: PipelineSpec) -> Result<Self> {
        let cfg = &spec.cfg;
        cfg.validate()?;
        let kind = spec.kind;
        let (tokenizer, universal) = if spec.arm.uses_universal() {
            let layout = TokenLayout::new(kind, &spec.payload_shape, cfg)?;
            let tok = Tokenizer::new(store, layout, cfg.d_m, &mut rng_for(spec.seed, "init/tokenizer"))?;
            let uni = UniversalEncoder::new(store, cfg.d_m, cfg.heads, cfg.universal_blocks, spec.seed)?;
            (Some(tok), Some(uni))
        } else {
            (None, None)
        };
        let tailored = if spec.arm.uses_tailored() {
            let enc = TailoredEncoder::new(
                store,
                cfg,
                kind,
                &spec.payload_shape,
                &mut rng_for(spec.seed, &format!("init/tailored/{}", kind.name())),
            )?;
            store.freeze_prefix(crate::tailored::PREFIX, true);
            Some(enc)
        } else {
            None
        };
        let mut prng = rng_for(spec.seed, "init/projector");
        let projector = match spec.arm {
            Arm::Umip => {
                let u = Umip::new(store, cfg, kind, &mut prng)?;
                if let Some(tok) = &tokenizer {
                    if tok.layout.tokens() < u.queries && tok.layout.payload_shape.get(1) != Some(&0) {
                        return Err(ModelError::Config(format!(
                            "{kind}: {} queries exceed the {} tokens of the tokenizer",
                            u.queries,
                            tok.layout.tokens()
                        )));
                    }
                }
                Projector::Umip(u)
            }
            _ => Projector::QFormer(QFormer::new(store, cfg, kind, &mut prng)?),
        };
        let decoder = Decoder::new(
            store,
            DecoderConfig {
                layers: cfg.decoder_layers,
                width: cfg.d_llm,
                heads: cfg.heads,
                max_len: cfg.max_len,
                vocab: spec.vocab.len(),
                classes: spec.classes,
                tied: cfg.tie_embeddings,
            },
            &mut rng_for(spec.seed, "init/decoder"),
        )?;
        let word_vecs = if cfg.tie_embeddings {
            let data: Vec<f64> = spec
                .vocab
                .iter()
                .flat_map(|w| word_vector(spec.seed, cfg.d_m, w))
                .collect();
            Some(Tensor::new([spec.vocab.len(), cfg.d_m], data)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            tokenizer,
            universal,
            tailored,
            projector,
            decoder,
            word_vecs,
        })
    }

    pub fn kind(&self) -> ModalityKind {
        self.spec.kind
    }

    pub fn arm(&self) -> Arm {
        self.spec.arm
    }

    /// Raw tokens and frozen tailored features for one payload.
    pub fn prepare<T: Float>(&self, store: &ParamStore<T>, payload: &Payload) -> Result<Prepared<T>> {
        let raw = match &self.tokenizer {
            Some(t) => Some(t.layout.raw(payload)?),
            None => None,
        };
        let features = match &self.tailored {
            Some(enc) => {
                let mut g = Graph::inference(store);
                let y = enc.forward(&mut g, payload)?;
                Some(g.value(y).clone())
            }
            None => None,
        };
        Ok(Prepared { raw, features })
    }

    fn universal_embeddings<T: Float>(&self, g: &mut Graph<'_, T>, input: &Prepared<T>) -> Result<Var> {
        let (tok, uni) = match (&self.tokenizer, &self.universal) {
            (Some(t), Some(u)) => (t, u),
            _ => {
                return Err(ModelError::Config(format!(
                    "{} arm has no universal encoder",
                    self.arm()
                )))
            }
        };
        let raw = input
            .raw
            .as_ref()
            .ok_or_else(|| ModelError::Config("prepared input lacks raw tokens".into()))?;
        let x = tok.forward(g, raw)?;
        uni.forward(g, x)
    }

    fn tailored_features<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        input: &Prepared<T>,
        live: Option<&Payload>,
    ) -> Result<Var> {
        match (live, &self.tailored, &input.features) {
            (Some(p), Some(enc), _) => enc.forward(g, p),
            (None, Some(_), Some(f)) => Ok(g.constant(f.clone())),
            _ => Err(ModelError::Config(format!(
                "{} arm input lacks tailored features",
                self.arm()
            ))),
        }
    }

    /// Projected modality tokens `[n', d_llm]`. With `live`, the tailored
    /// encoder runs inside `g` instead of using cached features.
    pub fn z<T: Float>(&self, g: &mut Graph<'_, T>, input: &Prepared<T>, live: Option<&Payload>) -> Result<Var> {
        match (&self.projector, self.arm()) {
            (Projector::Umip(u), _) => {
                let mut y = self.universal_embeddings(g, input)?;
                let n = g.value(y).rows();
                if n < u.queries && input.raw.as_ref().is_some_and(|r| r.empty) {
                    // A flagged empty payload has one sentinel row; repeat it.
                    y = g.index_rows(y, &vec![0; u.queries])?;
                }
                let t = self.tailored_features(g, input, live)?;
                u.forward(g, y, t)
            }
            (Projector::QFormer(q), Arm::Tailored) => {
                let t = self.tailored_features(g, input, live)?;
                q.forward(g, t)
            }
            (Projector::QFormer(q), _) => {
                let y = self.universal_embeddings(g, input)?;
                q.forward(g, y)
            }
        }
    }

    /// Decoder embedding table (tied through the projector's final MLP when
    /// configured).
    pub fn text_table<T: Float>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let tied = match &self.word_vecs {
            Some(w) => {
                let w = g.constant(w.cast());
                Some(self.projector.final_mlp().forward(g, w)?)
            }
            None => None,
        };
        self.decoder.table(g, tied)
    }

    pub fn forward<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        input: &Prepared<T>,
        ex: &Example,
        live: Option<&Payload>,
    ) -> Result<DecodeOut> {
        let z = self.z(g, input, live)?;
        let table = self.text_table(g)?;
        self.decoder.decode(g, Some(z), table, &ex.ids, ex.sep)
    }

    pub fn loss<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        input: &Prepared<T>,
        ex: &Example,
        action: usize,
        live: Option<&Payload>,
    ) -> Result<Stage2Loss> {
        let out = self.forward(g, input, ex, live)?;
        self.decoder.stage2_loss(g, &out, ex, action)
    }

    /// Classifier argmax and greedy answer for `prompt`.
    pub fn predict<T: Float>(
        &self,
        store: &ParamStore<T>,
        input: &Prepared<T>,
        prompt: &[u32],
        max_new: usize,
    ) -> Result<Prediction> {
        let mut g = Graph::inference(store);
        let z = self.z(&mut g, input, None)?;
        let table = self.text_table(&mut g)?;
        let ex = Example::prompt(prompt);
        let out = self.decoder.decode(&mut g, Some(z), table, &ex.ids, ex.sep)?;
        let logits = self.decoder.classify(&mut g, out.pooled)?;
        let class_logits: Vec<f64> = g.value(logits).to_f64_vec();
        let action = argmax(&class_logits);
        let answer = self.decoder.generate(&mut g, Some(z), table, prompt, max_new)?;
        Ok(Prediction {
            action,
            class_logits,
            answer,
        })
    }

    /// Mean over the rows of `Z`.
    pub fn pooled_tokens<T: Float>(&self, store: &ParamStore<T>, input: &Prepared<T>) -> Result<Vec<f64>> {
        let mut g = Graph::inference(store);
        let z = self.z(&mut g, input, None)?;
        let m = g.mean_rows(z)?;
        Ok(g.value(m).to_f64_vec())
    }

    /// Maps `d_m` text anchors into token space with the projector's final MLP.
    pub fn project_anchors<T: Float>(&self, store: &ParamStore<T>, anchors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.spec.cfg.d_m;
        if let Some(a) = anchors.iter().find(|a| a.len() != d) {
            return Err(ModelError::Config(format!(
                "anchor width {} differs from d_m={d}",
                a.len()
            )));
        }
        let mut g = Graph::inference(store);
        let data: Vec<T> = anchors.iter().flatten().map(|&v| T::lit(v)).collect();
        let x = g.constant(Tensor::new([anchors.len(), d], data)?);
        let y = self.projector.final_mlp().forward(&mut g, x)?;
        let v = g.value(y);
        Ok((0..v.rows())
            .map(|i| v.row(i).iter().map(|x| x.as_f64()).collect())
            .collect())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
