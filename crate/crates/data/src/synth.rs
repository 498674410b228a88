//! Synthetic multimodal sensing data.
//!
//! A six-keypoint body moves along a class-specific periodic trajectory.
//! Subjects change body scale, tempo, phase and stance; environments shift
//! the body, change sensor gain and add static clutter (image background,
//! stray points, multipath). Each modality renders the same motion and adds
//! its own measurement noise; video is the cleanest and the RF traces the
//! noisiest.

use std::collections::BTreeMap;
use std::f32::consts::PI;
use std::path::Path;

use mmsense_tensor::rng::{rng_for, Rng};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::curation::{
    make_caption_sample, make_qa_sample, to_jsonl, CaptionSample, CaptionSource, InContextSample, QaSample,
    QuestionBank, TemplateCaptions, ARCHETYPES, CAPTION_QUESTION,
};
use crate::dataset::DatasetSpec;
use crate::error::Result;
use crate::manifest::{Manifest, ManifestEntry};
use crate::modality::{Family, ModalityKind};
use crate::payload::Payload;
use crate::vocab::Vocab;

const JOINTS: usize = 6;
/// Rest pose: head, hands, pelvis, feet. x lateral, y towards the sensor, z up.
const REST: [[f32; 3]; JOINTS] = [
    [0.0, 0.0, 1.6],
    [-0.4, 0.0, 1.1],
    [0.4, 0.0, 1.1],
    [0.0, 0.0, 0.9],
    [-0.15, 0.0, 0.05],
    [0.15, 0.0, 0.05],
];
const CLUTTER_POINTS: usize = 8;

/// Multiplier on every modality's base measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub scale: f32,
}

impl NoiseProfile {
    pub const CLEAN: NoiseProfile = NoiseProfile { scale: 0.0 };
    pub const DEFAULT: NoiseProfile = NoiseProfile { scale: 1.0 };
    pub const MAX: NoiseProfile = NoiseProfile { scale: 10.0 };

    /// Noise standard deviation relative to unit signal amplitude.
    pub fn sigma(&self, kind: ModalityKind) -> f32 {
        let base = match kind {
            ModalityKind::Video => 0.05,
            ModalityKind::Depth => 0.08,
            ModalityKind::Infrared => 0.1,
            ModalityKind::Lidar => 0.04,
            ModalityKind::MmWave => 0.1,
            ModalityKind::WifiCsi => 0.3,
            ModalityKind::Rfid => 0.3,
        };
        base * self.scale
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::DEFAULT
    }
}

struct ClassMotion {
    offset: [[f32; 3]; JOINTS],
    amplitude: [[f32; 3]; JOINTS],
    phase: [f32; JOINTS],
    freq: f32,
}

struct SubjectStyle {
    scale: f32,
    tempo: f32,
    phase: f32,
    stance: f32,
}

struct EnvStyle {
    shift: [f32; 2],
    gain: f32,
    background: Vec<f32>,
    clutter: Vec<[f32; 3]>,
    multipath: Vec<f32>,
    carrier_phase: Vec<f32>,
    tx: [f32; 3],
    rx: [f32; 3],
    tag_offset: Vec<f32>,
}

fn normal(rng: &mut Rng) -> f32 {
    rng.sample::<f32, _>(StandardNormal)
}

/// Renders payloads for any sequence of a dataset. Every payload is a pure
/// function of `(seed, sequence id, modality)`.
pub struct Generator {
    spec: DatasetSpec,
    noise: NoiseProfile,
    seed: u64,
    classes: Vec<ClassMotion>,
    subjects: BTreeMap<usize, SubjectStyle>,
    envs: Vec<EnvStyle>,
}

impl Generator {
    pub fn new(spec: &DatasetSpec, noise: NoiseProfile, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(seed, "synth/classes");
        let classes = (0..spec.num_classes())
            .map(|c| {
                let mut offset = [[0.0; 3]; JOINTS];
                let mut amplitude = [[0.0; 3]; JOINTS];
                let mut phase = [0.0; JOINTS];
                for j in 0..JOINTS {
                    for a in 0..3 {
                        offset[j][a] = 0.12 * normal(&mut rng);
                        amplitude[j][a] = 0.25 * normal(&mut rng);
                    }
                    phase[j] = rng.gen_range(0.0..2.0 * PI);
                }
                ClassMotion {
                    offset,
                    amplitude,
                    phase,
                    freq: 1.0 + (c % 3) as f32 * 0.5,
                }
            })
            .collect();
        let mut rng = rng_for(seed, "synth/subjects");
        let subjects = spec
            .subjects
            .iter()
            .map(|s| {
                let style = SubjectStyle {
                    scale: rng.gen_range(0.95..1.05),
                    tempo: rng.gen_range(0.9..1.1),
                    phase: rng.gen_range(0.0..0.2),
                    stance: 0.03 * normal(&mut rng),
                };
                (s.id, style)
            })
            .collect();
        let g = &spec.geometry;
        let mut rng = rng_for(seed, "synth/envs");
        let envs = (0..spec.environments)
            .map(|_| {
                let background = smooth_field(&mut rng, g.image_size, 3);
                EnvStyle {
                    shift: [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)],
                    gain: rng.gen_range(0.9..1.1),
                    background,
                    clutter: (0..CLUTTER_POINTS)
                        .map(|_| {
                            [
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(0.0..2.0),
                            ]
                        })
                        .collect(),
                    multipath: (0..g.wifi_subcarriers).map(|_| 0.1 * normal(&mut rng)).collect(),
                    carrier_phase: (0..g.wifi_subcarriers).map(|_| 0.15 * normal(&mut rng)).collect(),
                    tx: [rng.gen_range(-1.3..-1.2), rng.gen_range(1.4..1.6), 1.0],
                    rx: [rng.gen_range(1.2..1.3), rng.gen_range(1.4..1.6), 1.0],
                    tag_offset: (0..g.rfid_tags).map(|_| 0.3 * normal(&mut rng)).collect(),
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            noise,
            seed,
            classes,
            subjects,
            envs,
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    /// Joint positions at normalised time `tau` in `[0, 1)`.
    fn pose(&self, e: &ManifestEntry, jitter: &SeqJitter, tau: f32) -> [[f32; 3]; JOINTS] {
        let c = &self.classes[e.action];
        let s = &self.subjects[&e.subject];
        let env = &self.envs[e.env];
        let mut out = [[0.0; 3]; JOINTS];
        let t = 2.0 * PI * c.freq * s.tempo * (tau + s.phase + jitter.shift);
        for j in 0..JOINTS {
            for a in 0..3 {
                let local = REST[j][a] + c.offset[j][a] + jitter.amp * c.amplitude[j][a] * (t + c.phase[j]).sin();
                out[j][a] = s.scale * local;
            }
            out[j][0] += env.shift[0] + s.stance;
            out[j][1] += env.shift[1];
        }
        out
    }

    pub fn render(&self, entry: &ManifestEntry, kind: ModalityKind) -> Result<Payload> {
        let jitter = SeqJitter::new(self.seed, entry.id);
        let mut rng = rng_for(self.seed, &format!("synth/seq/{}/{}", entry.id, kind.name()));
        let shape = self.spec.payload_shape(kind);
        let mut data = match kind.family() {
            Family::Image => self.render_image(entry, &jitter, kind),
            Family::PointSet => self.render_points(entry, &jitter, kind, &mut rng),
            Family::Temporal => self.render_trace(entry, &jitter, kind),
        };
        let sigma = self.noise.sigma(kind);
        if sigma > 0.0 {
            for v in &mut data {
                *v += sigma * normal(&mut rng);
            }
        }
        Payload::new(shape, data)
    }

    fn render_image(&self, e: &ManifestEntry, jitter: &SeqJitter, kind: ModalityKind) -> Vec<f32> {
        let frames = self.spec.frames;
        let h = self.spec.geometry.image_size;
        let ch = kind.image_channels();
        let env = &self.envs[e.env];
        let width = if kind == ModalityKind::Infrared { 0.12 } else { 0.08 } * h as f32;
        let mut out = vec![0.0f32; frames * h * h * ch];
        for f in 0..frames {
            let pose = self.pose(e, jitter, f as f32 / frames as f32);
            let px: Vec<(f32, f32, f32)> = pose
                .iter()
                .map(|p| ((p[0] + 1.0) * 0.5 * h as f32, (2.0 - p[2]) * 0.5 * h as f32, p[1]))
                .collect();
            for r in 0..h {
                for col in 0..h {
                    let mut blob = 0.0;
                    let mut near = 0.0f32;
                    let mut hands = 0.0;
                    for (j, &(u, v, depth)) in px.iter().enumerate() {
                        let d2 = (col as f32 + 0.5 - u).powi(2) + (r as f32 + 0.5 - v).powi(2);
                        let w = (-d2 / (2.0 * width * width)).exp();
                        blob += w;
                        near = near.max(w * (1.0 + depth));
                        if j == 1 || j == 2 {
                            hands += w;
                        }
                    }
                    let base = ((f * h + r) * h + col) * ch;
                    let bg = &env.background[(r * h + col) * 3..(r * h + col) * 3 + 3];
                    match kind {
                        ModalityKind::Video => {
                            out[base] = env.gain * (blob + 0.1 * bg[0]);
                            out[base + 1] = env.gain * (hands + 0.1 * bg[1]);
                            out[base + 2] = env.gain * (0.5 * near + 0.1 * bg[2]);
                        }
                        ModalityKind::Depth => out[base] = env.gain * (near + 0.3 * bg[0]),
                        _ => out[base] = env.gain * (blob + 0.2 * bg[1]),
                    }
                }
            }
        }
        out
    }

    fn render_points(&self, e: &ManifestEntry, jitter: &SeqJitter, kind: ModalityKind, rng: &mut Rng) -> Vec<f32> {
        let frames = self.spec.frames;
        let shape = self.spec.payload_shape(kind);
        let p = shape[1];
        let env = &self.envs[e.env];
        let spread = if kind == ModalityKind::Lidar { 0.05 } else { 0.08 };
        let n_clutter = p / 6;
        let mut out = Vec::with_capacity(frames * p * 3);
        for f in 0..frames {
            let pose = self.pose(e, jitter, f as f32 / frames as f32);
            let mut pts: Vec<[f32; 3]> = Vec::with_capacity(p);
            for i in 0..p {
                if i < n_clutter {
                    let c = env.clutter[i % CLUTTER_POINTS];
                    pts.push([
                        c[0] + 0.02 * normal(rng),
                        c[1] + 0.02 * normal(rng),
                        c[2] + 0.02 * normal(rng),
                    ]);
                } else {
                    let j = i % JOINTS;
                    let q = pose[j];
                    pts.push([
                        q[0] + spread * normal(rng),
                        q[1] + spread * normal(rng),
                        q[2] + spread * normal(rng),
                    ]);
                }
            }
            for i in (1..pts.len()).rev() {
                let k = rng.gen_range(0..=i);
                pts.swap(i, k);
            }
            out.extend(pts.into_iter().flatten());
        }
        out
    }

    fn render_trace(&self, e: &ManifestEntry, jitter: &SeqJitter, kind: ModalityKind) -> Vec<f32> {
        let shape = self.spec.payload_shape(kind);
        let (len, width) = (shape[0], shape[1]);
        let env = &self.envs[e.env];
        let mut out = Vec::with_capacity(len * width);
        for t in 0..len {
            let pose = self.pose(e, jitter, t as f32 / len as f32);
            for s in 0..width {
                let v = if kind == ModalityKind::WifiCsi {
                    let k = 1.0 + 0.5 * s as f32 / width as f32;
                    let sum: f32 = pose
                        .iter()
                        .map(|p| (2.0 * PI * k * (dist(p, &env.tx) + dist(p, &env.rx)) + env.carrier_phase[s]).cos())
                        .sum();
                    env.gain * (sum / JOINTS as f32 + env.multipath[s])
                } else {
                    let tag = tag_position(s, width);
                    let sum: f32 = pose.iter().map(|p| (-dist2(p, &tag) / 0.3).exp()).sum();
                    env.gain * (sum + env.tag_offset[s])
                };
                out.push(v);
            }
        }
        out
    }
}

/// Per-sequence repetition jitter, shared by every modality of the sequence.
struct SeqJitter {
    shift: f32,
    amp: f32,
}

impl SeqJitter {
    fn new(seed: u64, id: u64) -> Self {
        let mut rng = rng_for(seed, &format!("synth/seq/{id}"));
        Self {
            shift: rng.gen_range(0.0..0.1),
            amp: 1.0 + 0.1 * normal(&mut rng),
        }
    }
}

fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f32 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn dist(a: &[f32; 3], b: &[f32; 3]) -> f32 {
    dist2(a, b).sqrt()
}

/// Tags on a vertical grid one metre in front of the body.
fn tag_position(k: usize, n: usize) -> [f32; 3] {
    let cols = (n as f32).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let x = -1.0 + 2.0 * (k % cols) as f32 / (cols.max(2) - 1) as f32;
    let z = 2.0 * (k / cols) as f32 / (rows.max(2) - 1) as f32;
    [x, 1.0, z]
}

/// Low-frequency random texture `[h, h, channels]` in roughly `[-1, 1]`.
fn smooth_field(rng: &mut Rng, h: usize, channels: usize) -> Vec<f32> {
    let waves: Vec<[f32; 4]> = (0..channels * 3)
        .map(|_| {
            [
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.3..0.6),
            ]
        })
        .collect();
    let mut out = Vec::with_capacity(h * h * channels);
    for r in 0..h {
        for c in 0..h {
            for ch in 0..channels {
                let (y, x) = (r as f32 / h as f32, c as f32 / h as f32);
                let v: f32 = waves[ch * 3..ch * 3 + 3]
                    .iter()
                    .map(|w| w[3] * (2.0 * PI * (w[0] * x + w[1] * y) + w[2]).sin())
                    .sum();
                out.push(v);
            }
        }
    }
    out
}

/// Everything needed to train and evaluate on a generated dataset, minus
/// the payloads themselves (see [`Generator::render`]).
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub manifest: Manifest,
    pub qa: Vec<QaSample>,
    pub captions: Vec<CaptionSample>,
    pub in_context: Vec<InContextSample>,
    pub bank: QuestionBank,
    pub vocab: Vocab,
    pub generator: Generator,
}

/// Builds manifest, QA and caption records, vocabulary and a payload
/// generator for `spec`.
pub fn generate_synthetic(spec: &DatasetSpec, noise: NoiseProfile, seed: u64) -> Result<SyntheticDataset> {
    generate_with_bank(spec, noise, seed, QuestionBank::default())
}

pub fn generate_with_bank(
    spec: &DatasetSpec,
    noise: NoiseProfile,
    seed: u64,
    bank: QuestionBank,
) -> Result<SyntheticDataset> {
    let generator = Generator::new(spec, noise, seed)?;
    let manifest = Manifest::from_spec(spec);
    let captioner = TemplateCaptions::new(&spec.categories);
    let mut qa = Vec::with_capacity(manifest.len() * spec.modalities.len());
    let mut captions = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        for &kind in &spec.modalities {
            let mut rng = rng_for(seed, &format!("qa/{}/{}", e.id, kind.name()));
            qa.push(make_qa_sample(e, kind, &spec.categories, &bank, &mut rng)?);
        }
        captions.push(make_caption_sample(e, &captioner)?);
    }
    let in_context = in_context_samples(&manifest, &captioner);
    let vocab = build_vocab(spec, &bank);
    Ok(SyntheticDataset {
        spec: spec.clone(),
        manifest,
        qa,
        captions,
        in_context,
        bank,
        vocab,
        generator,
    })
}

/// Word vocabulary covering every prompt, option list and caption template.
pub fn build_vocab(spec: &DatasetSpec, bank: &QuestionBank) -> Vocab {
    let captioner = TemplateCaptions::new(&spec.categories);
    let mut texts: Vec<String> = vec![CAPTION_QUESTION.to_string(), "Options: a, b.".to_string()];
    texts.extend(bank.questions().iter().cloned());
    texts.extend(spec.categories.iter().cloned());
    for a in 0..spec.num_classes() {
        for s in 0..ARCHETYPES.len() {
            texts.extend(captioner.render(a, s));
        }
    }
    Vocab::build(texts.iter().map(String::as_str))
}

/// One example per category, rotating through environments and subjects.
fn in_context_samples(manifest: &Manifest, captioner: &TemplateCaptions) -> Vec<InContextSample> {
    let mut out = Vec::new();
    for a in 0..captioner.categories.len() {
        let matches: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.action == a).collect();
        if matches.is_empty() {
            continue;
        }
        let e = matches[(a * 7919) % matches.len()];
        if let Some(caption) = captioner.caption(e) {
            out.push(InContextSample {
                question: CAPTION_QUESTION.to_string(),
                video: payload_file(e.id, ModalityKind::Video),
                caption,
            });
        }
    }
    out
}

/// Relative payload path for a sequence and modality.
pub fn payload_file(id: u64, kind: ModalityKind) -> String {
    format!("payloads/{id:06}_{}.bin", kind.name())
}

impl SyntheticDataset {
    /// Writes the dataset tree under `dir`:
    /// `dataset.json`, `manifest.jsonl`, `qa.jsonl`, `captions.jsonl`,
    /// `in_context.jsonl`, `questions.txt`, `vocab.txt` and, when
    /// `payloads` is set, one payload file per sequence and modality.
    pub fn write_tree(&mut self, dir: impl AsRef<Path>, payloads: bool) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        if payloads {
            std::fs::create_dir_all(dir.join("payloads"))?;
            for i in 0..self.manifest.entries.len() {
                for &kind in &self.spec.modalities {
                    let e = &self.manifest.entries[i];
                    let rel = payload_file(e.id, kind);
                    self.generator.render(e, kind)?.write(dir.join(&rel))?;
                    self.manifest.entries[i].payloads.insert(kind, rel);
                }
            }
        }
        std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&self.spec)?)?;
        self.manifest.write(dir.join("manifest.jsonl"))?;
        std::fs::write(dir.join("qa.jsonl"), to_jsonl(&self.qa))?;
        std::fs::write(dir.join("captions.jsonl"), to_jsonl(&self.captions))?;
        std::fs::write(dir.join("in_context.jsonl"), to_jsonl(&self.in_context))?;
        std::fs::write(dir.join("questions.txt"), self.bank.to_text())?;
        self.vocab.write(dir.join("vocab.txt"))?;
        Ok(())
    }

    pub fn caption(&self, id: u64) -> Option<&CaptionSample> {
        self.captions
            .binary_search_by_key(&id, |c| c.sequence_id)
            .ok()
            .map(|i| &self.captions[i])
    }

    pub fn qa_sample(&self, id: u64, kind: ModalityKind) -> Option<&QaSample> {
        let m = self.spec.modalities.iter().position(|&k| k == kind)?;
        let i = usize::try_from(id).ok()?;
        self.qa
            .get(i * self.spec.modalities.len() + m)
            .filter(|q| q.sequence_id == id && q.modality == kind)
    }
}
