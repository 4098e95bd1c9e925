use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;

use crate::chat::{call_with_retry, ChatClient, ClientError, RetryPolicy, Transcript};
use crate::hash::derive_seed;
use crate::model::{manifest_hash, resolve_uri, DatasetManifest, ImageEntry, MatchingQuestion};
use crate::render::{concat_vertical, question_marks, render_prompts};
use crate::sft::{question_text, SYSTEM_TEXT_V1};

use super::extract::{extract_choice_with_options, EXTRACTOR_VERSION};
use super::score::{Prediction, PredictionLog};
use super::EvalError;

#[derive(Clone, Debug)]
pub struct ModelRequest {
    pub question_id: String,
    /// One raster per question image, or a single vertical stack for
    /// single-image clients.
    pub images: Vec<RgbImage>,
    pub prompt: String,
    pub labels: Vec<String>,
}

pub trait ModelClient: Sync {
    fn name(&self) -> &str;
    fn supports_multi_image(&self) -> bool;
    fn answer(&self, req: &ModelRequest) -> Result<String, ClientError>;
}

/// Rasters to show for a question, visual prompts burnt in.
pub trait ImageProvider: Sync {
    fn images(&self, q: &MatchingQuestion) -> Result<Vec<RgbImage>, String>;
}

/// Loads each question image from disk and renders the question's marks.
pub struct RenderedImages {
    root: PathBuf,
    entries: HashMap<String, ImageEntry>,
}

impl RenderedImages {
    pub fn new(manifest: &DatasetManifest, root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            entries: manifest.images.iter().map(|e| (e.image.id.clone(), e.clone())).collect(),
        }
    }
}

pub fn render_question_image(q: &MatchingQuestion, entry: &ImageEntry, raster: &RgbImage) -> Result<RgbImage, String> {
    render_prompts(raster, &question_marks(q, entry)).map_err(|e| format!("{}: {e}", entry.image.id))
}

impl ImageProvider for RenderedImages {
    fn images(&self, q: &MatchingQuestion) -> Result<Vec<RgbImage>, String> {
        q.image_ids
            .iter()
            .map(|id| {
                let entry = self.entries.get(id).ok_or_else(|| format!("unknown image {id}"))?;
                let path = resolve_uri(&self.root, &entry.image.uri);
                let raster = image::open(&path).map_err(|e| format!("{}: {e}", path.display()))?.to_rgb8();
                render_question_image(q, entry, &raster)
            })
            .collect()
    }
}

/// Black rasters of the recorded sizes; for clients that ignore pixels.
pub struct BlankImages {
    sizes: HashMap<String, (u32, u32)>,
}

impl BlankImages {
    pub fn new(manifest: &DatasetManifest) -> Self {
        Self {
            sizes: manifest.images.iter().map(|e| (e.image.id.clone(), (e.image.width, e.image.height))).collect(),
        }
    }
}

impl ImageProvider for BlankImages {
    fn images(&self, q: &MatchingQuestion) -> Result<Vec<RgbImage>, String> {
        q.image_ids
            .iter()
            .map(|id| {
                let (w, h) = self.sizes.get(id).ok_or_else(|| format!("unknown image {id}"))?;
                Ok(RgbImage::new(*w, *h))
            })
            .collect()
    }
}

/// Prompt shown to every model: the shared system text, then the question.
pub fn eval_prompt(q: &MatchingQuestion) -> String {
    format!("{SYSTEM_TEXT_V1} {}", question_text(q))
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

fn ask(q: &MatchingQuestion, client: &dyn ModelClient, images: &dyn ImageProvider, retry: &RetryPolicy) -> Prediction {
    let start = Instant::now();
    let labels = q.labels();
    let failed = |error: String, attempts: u32| Prediction {
        question_id: q.id.clone(),
        raw_text: String::new(),
        extracted: None,
        latency_ms: start.elapsed().as_millis() as u64,
        attempts,
        error: Some(error),
    };
    let mut rasters = match images.images(q) {
        Ok(r) => r,
        Err(e) => return failed(e, 0),
    };
    if !client.supports_multi_image() && rasters.len() > 1 {
        rasters = match concat_vertical(&rasters) {
            Ok(img) => vec![img],
            Err(e) => return failed(e.to_string(), 0),
        };
    }
    let req = ModelRequest {
        question_id: q.id.clone(),
        images: rasters,
        prompt: eval_prompt(q),
        labels: labels.clone(),
    };
    let out = call_with_retry(retry, |_| client.answer(&req));
    match out.result {
        Ok(text) => {
            let contents: Vec<String> = q.options.iter().map(|o| o.object.display_text()).collect();
            Prediction {
                question_id: q.id.clone(),
                extracted: extract_choice_with_options(&text, &labels, &contents),
                raw_text: text,
                latency_ms: start.elapsed().as_millis() as u64,
                attempts: out.attempts,
                error: None,
            }
        }
        Err(e) => failed(e.to_string(), out.attempts),
    }
}

/// Ask every question once. Entries follow manifest order whatever the completion order.
pub fn run_eval(
    manifest: &DatasetManifest,
    client: &dyn ModelClient,
    images: &dyn ImageProvider,
    opts: &RunOptions,
) -> Result<PredictionLog, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let entries = pool.install(|| {
        manifest
            .questions
            .par_iter()
            .map(|q| ask(q, client, images, &opts.retry))
            .collect::<Vec<_>>()
    });
    Ok(PredictionLog {
        model: client.name().to_string(),
        extractor: EXTRACTOR_VERSION.to_string(),
        manifest_hash: manifest_hash(manifest),
        entries,
    })
}

/// Knows the gold answers.
pub struct OracleClient {
    answers: HashMap<String, String>,
}

impl OracleClient {
    pub fn new(manifest: &DatasetManifest) -> Self {
        Self {
            answers: manifest.questions.iter().map(|q| (q.id.clone(), q.answer.clone())).collect(),
        }
    }
}

impl ModelClient for OracleClient {
    fn name(&self) -> &str {
        "oracle"
    }

    fn supports_multi_image(&self) -> bool {
        true
    }

    fn answer(&self, req: &ModelRequest) -> Result<String, ClientError> {
        self.answers
            .get(&req.question_id)
            .map(|a| format!("Answer: {a}"))
            .ok_or_else(|| ClientError::Malformed(format!("unknown question {}", req.question_id)))
    }
}

/// Uniform over the offered labels, seeded per question id.
pub struct RandomClient {
    seed: u64,
}

impl RandomClient {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl ModelClient for RandomClient {
    fn name(&self) -> &str {
        "random"
    }

    fn supports_multi_image(&self) -> bool {
        true
    }

    fn answer(&self, req: &ModelRequest) -> Result<String, ClientError> {
        if req.labels.is_empty() {
            return Err(ClientError::Malformed("no labels".into()));
        }
        let k = derive_seed(self.seed, &["random-client", &req.question_id]) % req.labels.len() as u64;
        Ok(format!("Answer: {}", req.labels[k as usize]))
    }
}

/// Responses recorded under `answer/{question_id}`.
pub struct ReplayModelClient {
    name: String,
    transcript: Transcript,
}

impl ReplayModelClient {
    pub fn new(name: &str, transcript: Transcript) -> Self {
        Self {
            name: name.to_string(),
            transcript,
        }
    }
}

pub fn answer_key(question_id: &str) -> String {
    format!("answer/{question_id}")
}

impl ModelClient for ReplayModelClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_multi_image(&self) -> bool {
        true
    }

    fn answer(&self, req: &ModelRequest) -> Result<String, ClientError> {
        self.transcript.replay(&answer_key(&req.question_id))
    }
}

pub struct HttpModelClient {
    chat: ChatClient,
    multi_image: bool,
}

impl HttpModelClient {
    pub fn new(chat: ChatClient, multi_image: bool) -> Self {
        Self { chat, multi_image }
    }
}

impl ModelClient for HttpModelClient {
    fn name(&self) -> &str {
        self.chat.model()
    }

    fn supports_multi_image(&self) -> bool {
        self.multi_image
    }

    fn answer(&self, req: &ModelRequest) -> Result<String, ClientError> {
        self.chat.complete(&req.prompt, &req.images)
    }
}
