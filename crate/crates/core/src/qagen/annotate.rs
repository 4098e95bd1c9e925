//! Two-step reason annotation: describe every object of a question, then ask
//! for a justification with the answer and descriptions as conditions.

use std::collections::HashMap;
use std::path::PathBuf;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chat::{call_with_retry, ChatClient, ClientError, RetryPolicy, Transcript};
use crate::model::{resolve_uri, ImageEntry, ImageRef, MatchingQuestion, ObjectReferral, SegmentedObject};
use crate::render::{question_marks, render_prompts, VisualPromptSpec};

pub const DESCRIBE_PROMPT_V1: &str = include_str!("../../assets/prompts/describe_v1.txt");
pub const JUSTIFY_PROMPT_V1: &str = include_str!("../../assets/prompts/justify_v1.txt");
pub const PROMPT_VERSION: &str = "v1";
/// Longest reason accepted before an item is flagged.
pub const MAX_REASON_CHARS: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    Query,
    Candidate,
}

pub struct DescribeRequest<'a> {
    pub question_id: &'a str,
    pub role: ObjectRole,
    /// Option label for candidates, `None` for the query.
    pub label: Option<&'a str>,
    pub image: &'a ImageRef,
    pub object: &'a SegmentedObject,
    pub prompt_spec: &'a VisualPromptSpec,
    pub prompt: String,
}

impl DescribeRequest<'_> {
    pub fn key(&self) -> String {
        format!("describe/{}/{}", self.question_id, self.object.track_id)
    }
}

pub struct JustifyRequest<'a> {
    pub question_id: &'a str,
    pub images: Vec<&'a ImageRef>,
    pub question: &'a MatchingQuestion,
    pub query_info: String,
    pub candidate_infos: Vec<(String, String)>,
    pub answer: &'a str,
    pub prompt: String,
}

impl JustifyRequest<'_> {
    pub fn key(&self) -> String {
        format!("justify/{}", self.question_id)
    }
}

/// Service that writes the object descriptions and the final reason.
/// The pipeline only ever sees the returned text.
pub trait AnnotatorClient: Sync {
    fn describe(&self, req: &DescribeRequest<'_>) -> Result<String, ClientError>;
    fn justify(&self, req: &JustifyRequest<'_>) -> Result<String, ClientError>;
}

pub fn describe_prompt(tag: u32) -> String {
    DESCRIBE_PROMPT_V1.trim_end().replace("{tag}", &tag.to_string())
}

pub fn justify_prompt(query_info: &str, candidates: &[(String, String)], answer: &str) -> String {
    let list: Vec<String> = candidates.iter().map(|(l, d)| format!("{l}. {d}")).collect();
    JUSTIFY_PROMPT_V1
        .trim_end()
        .replace("{query_info}", query_info)
        .replace("{candidate_infos}", &list.join("\n"))
        .replace("{answer}", answer)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Retries exhausted on a transport error.
    TransportFailed,
    /// The client answered with unusable text.
    ReasonInvalid,
    /// The question points at objects the manifest does not hold.
    MissingObject,
}

/// Sidecar error record for one question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub question_id: String,
    pub status: FailureKind,
    pub attempts: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    pub retry: RetryPolicy,
    pub concurrency: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

#[derive(Debug)]
pub struct AnnotationOutcome {
    pub questions: Vec<MatchingQuestion>,
    /// Sorted by question id.
    pub failures: Vec<AnnotationFailure>,
}

fn well_formed(text: &str) -> Result<String, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty text".into());
    }
    if t.chars().count() > MAX_REASON_CHARS {
        return Err(format!("longer than {MAX_REASON_CHARS} characters"));
    }
    if t.chars().any(|c| c.is_control() && c != '\n' && c != '\t') {
        return Err("control characters in text".into());
    }
    Ok(t.to_string())
}

struct Lookup<'a> {
    images: HashMap<&'a str, &'a ImageEntry>,
}

impl<'a> Lookup<'a> {
    fn new(entries: &'a [ImageEntry]) -> Self {
        Self {
            images: entries.iter().map(|e| (e.image.id.as_str(), e)).collect(),
        }
    }

    fn object(&self, image_id: &str, track_id: &str) -> Option<(&'a ImageRef, &'a SegmentedObject)> {
        let e = self.images.get(image_id)?;
        Some((&e.image, e.object(track_id)?))
    }
}

fn annotate_one(
    q: &MatchingQuestion,
    lookup: &Lookup<'_>,
    client: &dyn AnnotatorClient,
    retry: &RetryPolicy,
) -> Result<String, AnnotationFailure> {
    let fail = |status, attempts, message: String| AnnotationFailure {
        question_id: q.id.clone(),
        status,
        attempts,
        message,
    };
    let describe = |role, label: Option<&str>, r: &ObjectReferral| -> Result<String, AnnotationFailure> {
        match r {
            ObjectReferral::TextPrompt { text } => Ok(text.clone()),
            ObjectReferral::VisualPrompt {
                image_id,
                track_id,
                prompt,
            } => {
                let (image, object) = lookup.object(image_id, track_id).ok_or_else(|| {
                    fail(FailureKind::MissingObject, 0, format!("{image_id}/{track_id} not in manifest"))
                })?;
                let req = DescribeRequest {
                    question_id: &q.id,
                    role,
                    label,
                    image,
                    object,
                    prompt_spec: prompt,
                    prompt: describe_prompt(prompt.object_tag),
                };
                let out = call_with_retry(retry, |_| client.describe(&req));
                match out.result {
                    Ok(t) => well_formed(&t).map_err(|m| fail(FailureKind::ReasonInvalid, out.attempts, m)),
                    Err(ClientError::Transport(e)) => Err(fail(FailureKind::TransportFailed, out.attempts, e)),
                    Err(ClientError::Malformed(e)) => Err(fail(FailureKind::ReasonInvalid, out.attempts, e)),
                }
            }
        }
    };
    let query_info = describe(ObjectRole::Query, None, &q.query)?;
    let mut candidate_infos = Vec::with_capacity(q.options.len());
    for o in &q.options {
        candidate_infos.push((o.label.clone(), describe(ObjectRole::Candidate, Some(&o.label), &o.object)?));
    }
    let images: Vec<&ImageRef> = q
        .image_ids
        .iter()
        .filter_map(|id| lookup.images.get(id.as_str()).map(|e| &e.image))
        .collect();
    let req = JustifyRequest {
        question_id: &q.id,
        images,
        question: q,
        prompt: justify_prompt(&query_info, &candidate_infos, &q.answer),
        query_info,
        candidate_infos,
        answer: &q.answer,
    };
    let out = call_with_retry(retry, |_| client.justify(&req));
    match out.result {
        Ok(t) => well_formed(&t).map_err(|m| fail(FailureKind::ReasonInvalid, out.attempts, m)),
        Err(ClientError::Transport(e)) => Err(fail(FailureKind::TransportFailed, out.attempts, e)),
        Err(ClientError::Malformed(e)) => Err(fail(FailureKind::ReasonInvalid, out.attempts, e)),
    }
}

/// Fill `reason` on every question the client can justify.
///
/// Failed questions keep `reason = None` and get a failure record; nothing is
/// dropped and nothing else in a question changes. Calls run on up to
/// `opts.concurrency` threads; output order is input order.
pub fn annotate_reasons(
    questions: Vec<MatchingQuestion>,
    images: &[ImageEntry],
    client: &dyn AnnotatorClient,
    opts: &AnnotateOptions,
) -> AnnotationOutcome {
    let lookup = Lookup::new(images);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<String, AnnotationFailure>> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| annotate_one(q, &lookup, client, &opts.retry))
            .collect()
    });
    let mut failures = Vec::new();
    let questions = questions
        .into_iter()
        .zip(results)
        .map(|(mut q, r)| {
            match r {
                Ok(reason) => q.reason = Some(reason),
                Err(f) => failures.push(f),
            }
            q
        })
        .collect();
    failures.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    AnnotationOutcome { questions, failures }
}

/// Replays recorded responses keyed by [`DescribeRequest::key`] / [`JustifyRequest::key`].
pub struct ReplayAnnotator {
    transcript: Transcript,
}

impl ReplayAnnotator {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }
}

impl AnnotatorClient for ReplayAnnotator {
    fn describe(&self, req: &DescribeRequest<'_>) -> Result<String, ClientError> {
        self.transcript.replay(&req.key())
    }

    fn justify(&self, req: &JustifyRequest<'_>) -> Result<String, ClientError> {
        self.transcript.replay(&req.key())
    }
}

/// Annotator backed by a chat-completion endpoint. Rasters are read from
/// `image_root` and the relevant visual prompts are burnt in before sending.
pub struct HttpAnnotator {
    client: ChatClient,
    image_root: PathBuf,
    images: HashMap<String, ImageEntry>,
}

impl HttpAnnotator {
    pub fn new(client: ChatClient, image_root: PathBuf, images: &[ImageEntry]) -> Self {
        Self {
            client,
            image_root,
            images: images.iter().map(|e| (e.image.id.clone(), e.clone())).collect(),
        }
    }

    fn load(&self, image: &ImageRef) -> Result<RgbImage, ClientError> {
        let path = resolve_uri(&self.image_root, &image.uri);
        image::open(&path)
            .map(|i| i.to_rgb8())
            .map_err(|e| ClientError::Transport(format!("{}: {e}", path.display())))
    }

    fn render_question_image(&self, q: &MatchingQuestion, image: &ImageRef) -> Result<RgbImage, ClientError> {
        let raster = self.load(image)?;
        let Some(entry) = self.images.get(&image.id) else {
            return Ok(raster);
        };
        let marks = question_marks(q, entry);
        render_prompts(&raster, &marks).map_err(|e| ClientError::Malformed(e.to_string()))
    }
}

impl AnnotatorClient for HttpAnnotator {
    fn describe(&self, req: &DescribeRequest<'_>) -> Result<String, ClientError> {
        let raster = self.load(req.image)?;
        let marked = render_prompts(&raster, &[(req.object, req.prompt_spec)])
            .map_err(|e| ClientError::Malformed(e.to_string()))?;
        self.client.complete(&req.prompt, &[marked])
    }

    fn justify(&self, req: &JustifyRequest<'_>) -> Result<String, ClientError> {
        let rasters = req
            .images
            .iter()
            .map(|img| self.render_question_image(req.question, img))
            .collect::<Result<Vec<_>, _>>()?;
        self.client.complete(&req.prompt, &rasters)
    }
}
