use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use mmvm_core::chat::{ChatClient, RetryPolicy, Transcript};
use mmvm_core::eval::{
    emit_rows, parse_csv, render_question_image, run_eval, score, BlankImages, EvalReport, HttpModelClient,
    ImageProvider, LeaderboardRow, ModelClient, OracleClient, RandomClient, RenderedImages, ReplayModelClient,
    ReportFormat, RunOptions,
};
use mmvm_core::hash::derive_seed;
use mmvm_core::model::{
    load_manifest, resolve_uri, save_manifest, validate_manifest, DatasetManifest, ImageEntry,
};
use mmvm_core::ocl::{
    encode_checkpoint, pool_stream, pretrain_adapter, retrieval_accuracy, Adapter, CheckpointMeta, LossConfig,
    PretrainConfig, RetrievalReport, ToyEncoder, VisionEncoder,
};
use mmvm_core::pseudo::{build_pretrain_stream, synthetic_shapes_corpus, AugmentationConfig, CorpusImage};
use mmvm_core::qagen::coco::load_coco_videos;
use mmvm_core::qagen::synthetic::{synthetic_videos, write_frames};
use mmvm_core::qagen::{
    generate_dataset, AnnotateOptions, AnnotatorClient, GenerateConfig, HttpAnnotator, QuestionConfig, ReplayAnnotator,
    VideoAnnotation,
};
use mmvm_core::sft::{edited_image_path, mix_variants, write_records, VariantMode};
use mmvm_core::Scalar;

use crate::config::{resolve, Config};
use crate::runlog::finish;
use crate::{Cli, Command, Failure};

fn config_err(e: anyhow::Error) -> Failure {
    Failure::Config(e)
}

fn runtime(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut cfg = resolve(cli.config.as_deref(), std::env::vars()).map_err(config_err)?;
    set(&mut cfg.seed, cli.seed);
    let name = command_name(&cli.command);
    let result = match cli.command {
        Command::Selftest => return selftest(),
        Command::Generate(a) => {
            set(&mut cfg.generate.interval_seconds, a.interval);
            set(&mut cfg.generate.option_cap, a.option_cap);
            set(&mut cfg.generate.annotate, a.annotate.clone());
            set(&mut cfg.generate.transcript, a.transcript.clone());
            set(&mut cfg.generate.endpoint, a.endpoint.clone());
            set(&mut cfg.generate.model, a.model.clone());
            set(&mut cfg.generate.synthetic_videos, a.synthetic);
            cfg.check().map_err(config_err)?;
            prepare(&a.out)?;
            generate(&cfg, &a).map(|inputs| (a.out, inputs))
        }
        Command::Render(a) => {
            prepare(&a.out)?;
            render(&a.manifest, a.images.as_deref(), &a.out).map(|i| (a.out, i))
        }
        Command::Simulate(a) => {
            set(&mut cfg.simulate.pairs, a.pairs);
            cfg.check().map_err(config_err)?;
            prepare(&a.out)?;
            simulate(&cfg, &a).map(|i| (a.out, i))
        }
        Command::Pretrain(a) => {
            set(&mut cfg.pretrain.steps, a.steps);
            set(&mut cfg.pretrain.learning_rate, a.lr);
            set(&mut cfg.pretrain.temperature, a.temperature);
            set(&mut cfg.pretrain.precision, a.precision.clone());
            cfg.pretrain.cosine |= a.cosine;
            cfg.check().map_err(config_err)?;
            prepare(&a.out)?;
            let r = match cfg.pretrain.precision.as_str() {
                "f32" => pretrain::<f32>(&cfg, &a.out),
                _ => pretrain::<f64>(&cfg, &a.out),
            };
            r.map(|()| (a.out, vec![]))
        }
        Command::FormatSft(a) => {
            set(&mut cfg.sft.variant, a.variant.clone());
            set(&mut cfg.sft.p, a.p);
            let mode = sft_mode(&cfg).map_err(config_err)?;
            prepare(&a.out)?;
            format_sft(&cfg, mode, &a.manifest, a.render_images.as_deref(), &a.out).map(|i| (a.out, i))
        }
        Command::Evaluate(a) => {
            set(&mut cfg.evaluate.client, a.client.clone());
            set(&mut cfg.evaluate.transcript, a.transcript.clone());
            set(&mut cfg.evaluate.endpoint, a.endpoint.clone());
            set(&mut cfg.evaluate.model, a.model.clone());
            set(&mut cfg.evaluate.name, a.name.clone());
            set(&mut cfg.evaluate.concurrency, a.concurrency);
            cfg.evaluate.single_image |= a.single_image;
            cfg.check().map_err(config_err)?;
            prepare(&a.out)?;
            evaluate(&cfg, &a.manifest, a.images.as_deref(), &a.out).map(|i| (a.out, i))
        }
        Command::Report(a) => {
            let format: ReportFormat = a.format.parse().map_err(|e| config_err(anyhow!("{e}")))?;
            prepare(&a.out)?;
            report(&a.reports, a.csv.as_deref(), format, &a.out).map(|i| (a.out, i))
        }
    };
    let (out, inputs) = result.map_err(runtime)?;
    finish(name, &cfg, &inputs, &out).map_err(runtime)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Render(_) => "render",
        Command::Simulate(_) => "simulate",
        Command::Pretrain(_) => "pretrain",
        Command::FormatSft(_) => "format-sft",
        Command::Evaluate(_) => "evaluate",
        Command::Report(_) => "report",
        Command::Selftest => "selftest",
    }
}

fn prepare(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)
}

fn selftest() -> Result<(), Failure> {
    let checks = mmvm_core::selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<14} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        failed += !c.passed as usize;
    }
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} self-check(s) failed")));
    }
    Ok(())
}

fn manifest_root(manifest: &Path, images: Option<&Path>) -> PathBuf {
    images
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn load_checked(path: &Path) -> anyhow::Result<DatasetManifest> {
    let m = load_manifest(path).with_context(|| format!("loading {}", path.display()))?;
    let v = validate_manifest(&m);
    if let Some(first) = v.first() {
        bail!("{} has {} violation(s), first: {first:?}", path.display(), v.len());
    }
    Ok(m)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn generate(cfg: &Config, a: &crate::GenerateArgs) -> anyhow::Result<Vec<PathBuf>> {
    let g = &cfg.generate;
    let mut inputs = Vec::new();
    let (videos, frames_root): (Vec<VideoAnnotation>, PathBuf) = match &a.videos {
        Some(path) => {
            inputs.push(path.clone());
            let root = a.frames.clone().unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            (load_coco_videos(path, g.fps).with_context(|| format!("loading {}", path.display()))?, root)
        }
        None => {
            let vids = synthetic_videos(g.synthetic_videos, derive_seed(cfg.seed, &["videos"]));
            write_frames(&vids, &a.out)?;
            (vids.into_iter().map(|v| v.annotation).collect(), a.out.clone())
        }
    };
    let gen_cfg = GenerateConfig {
        interval_seconds: g.interval_seconds,
        questions: QuestionConfig {
            option_cap: (g.option_cap > 0).then_some(g.option_cap),
            contour_thickness: g.contour_thickness,
        },
        annotate: g.annotate != "off",
    };
    let opts = AnnotateOptions {
        retry: RetryPolicy {
            max_attempts: g.max_attempts,
            ..RetryPolicy::default()
        },
        concurrency: g.concurrency,
    };
    let annotator: Option<Box<dyn AnnotatorClient>> = match g.annotate.as_str() {
        "replay" => {
            let p = PathBuf::from(&g.transcript);
            inputs.push(p.clone());
            Some(Box::new(ReplayAnnotator::new(Transcript::load(&p).with_context(|| format!("loading {}", p.display()))?)))
        }
        "http" => {
            if g.endpoint.is_empty() || g.model.is_empty() {
                bail!("http annotation needs generate.endpoint and generate.model");
            }
            let chat = ChatClient::new(&g.endpoint, &g.model, Duration::from_secs(g.timeout_seconds))
                .with_api_key(std::env::var("MMVM_API_KEY").ok());
            let images: Vec<ImageEntry> = videos
                .iter()
                .flat_map(|v| v.frames.iter())
                .map(|f| ImageEntry {
                    image: f.image.clone(),
                    objects: f.objects.clone(),
                })
                .collect();
            Some(Box::new(HttpAnnotator::new(chat, frames_root.clone(), &images)))
        }
        _ => None,
    };
    let out = generate_dataset(&videos, &gen_cfg, cfg.seed, annotator.as_deref().map(|c| (c, &opts)))?;
    save_manifest(&out.manifest, &a.out.join("manifest.jsonl"))?;
    if !out.failures.is_empty() {
        log::warn!("{} question(s) could not be annotated", out.failures.len());
        write_jsonl(&a.out.join("annotation_failures.jsonl"), &out.failures)?;
    }
    log::info!(
        "{} questions over {} images from {} videos",
        out.manifest.questions.len(),
        out.manifest.images.len(),
        videos.len()
    );
    Ok(inputs)
}

fn render_edited(m: &DatasetManifest, root: &Path, out: &Path) -> anyhow::Result<()> {
    for q in &m.questions {
        for (k, id) in q.image_ids.iter().enumerate() {
            let entry = m.image(id).ok_or_else(|| anyhow!("unknown image {id}"))?;
            let path = resolve_uri(root, &entry.image.uri);
            let raster = image::open(&path).with_context(|| format!("opening {}", path.display()))?.to_rgb8();
            let edited = render_question_image(q, entry, &raster).map_err(|e| anyhow!(e))?;
            let dst = out.join(edited_image_path(&q.id, k));
            std::fs::create_dir_all(dst.parent().expect("nested path"))?;
            edited.save(&dst).with_context(|| format!("writing {}", dst.display()))?;
        }
    }
    Ok(())
}

fn render(manifest: &Path, images: Option<&Path>, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let m = load_checked(manifest)?;
    render_edited(&m, &manifest_root(manifest, images), out)?;
    Ok(vec![manifest.to_path_buf()])
}

fn augmentation(cfg: &Config, seed: u64) -> AugmentationConfig {
    let s = &cfg.simulate;
    AugmentationConfig {
        crop_scale_range: (s.crop_scale_min, s.crop_scale_max),
        resize_target: (s.resize_width > 0 && s.resize_height > 0).then_some((s.resize_width, s.resize_height)),
        hflip_prob: s.hflip_prob,
        rotation_degrees: s.rotations.clone(),
        allow_arbitrary_rotation: s.allow_arbitrary_rotation,
        min_visible_px: s.min_visible_px,
        seed,
    }
}

fn manifest_corpus(manifest: &Path, images: Option<&Path>) -> anyhow::Result<Vec<CorpusImage>> {
    let m = load_checked(manifest)?;
    let root = manifest_root(manifest, images);
    m.images
        .iter()
        .filter(|e| !e.objects.is_empty())
        .map(|e| {
            let path = resolve_uri(&root, &e.image.uri);
            let image = image::open(&path).with_context(|| format!("opening {}", path.display()))?.to_rgb8();
            Ok(CorpusImage {
                id: e.image.id.clone(),
                image,
                objects: e.objects.clone(),
            })
        })
        .collect()
}

fn simulate(cfg: &Config, a: &crate::SimulateArgs) -> anyhow::Result<Vec<PathBuf>> {
    let s = &cfg.simulate;
    let (corpus, inputs) = match &a.manifest {
        Some(p) => (manifest_corpus(p, a.images.as_deref())?, vec![p.clone()]),
        None => (
            synthetic_shapes_corpus(s.images, s.min_objects..=s.max_objects, derive_seed(cfg.seed, &["shapes"])),
            vec![],
        ),
    };
    let stream = build_pretrain_stream(&corpus, &augmentation(cfg, derive_seed(cfg.seed, &["stream"])), s.pairs)?;
    let logs: Vec<_> = stream.iter().enumerate().map(|(i, p)| p.log(i)).collect();
    write_jsonl(&a.out.join("pairs.jsonl"), &logs)?;
    if a.write_views {
        for (i, p) in stream.iter().enumerate() {
            let dir = a.out.join("views").join(format!("{i:05}"));
            std::fs::create_dir_all(&dir)?;
            p.view_a.image.save(dir.join("a.png"))?;
            p.view_b.image.save(dir.join("b.png"))?;
        }
    }
    log::info!("{} pseudo pairs from {} images", stream.len(), corpus.len());
    Ok(inputs)
}

#[derive(Serialize)]
struct RetrievalSummary {
    trained_accuracy: f64,
    control_accuracy: f64,
    trained: RetrievalJson,
    control: RetrievalJson,
    final_loss: f64,
    skipped_pairs: usize,
    base_encoder_hash: String,
    expert_encoder_hash: String,
}

#[derive(Serialize)]
struct RetrievalJson {
    pairs: usize,
    queries: usize,
    correct: usize,
    mean_candidates: f64,
}

impl From<&RetrievalReport> for RetrievalJson {
    fn from(r: &RetrievalReport) -> Self {
        Self {
            pairs: r.pairs,
            queries: r.queries,
            correct: r.correct,
            mean_candidates: r.mean_candidates,
        }
    }
}

fn pretrain<T: Scalar>(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let p = &cfg.pretrain;
    let s = &cfg.simulate;
    let corpus = synthetic_shapes_corpus(s.images, s.min_objects..=s.max_objects, derive_seed(cfg.seed, &["shapes"]));
    let stream = build_pretrain_stream(&corpus, &augmentation(cfg, derive_seed(cfg.seed, &["stream"])), s.pairs)?;
    let base = ToyEncoder::<T>::base(derive_seed(cfg.seed, &["base-encoder"]));
    let expert = ToyEncoder::<T>::expert(derive_seed(cfg.seed, &["expert-encoder"]));
    let init_seed = derive_seed(cfg.seed, &["adapter"]);
    let pcfg = PretrainConfig {
        steps: p.steps,
        learning_rate: p.learning_rate,
        momentum: p.momentum,
        loss: LossConfig {
            temperature: p.temperature,
            cosine: p.cosine,
        },
        pairs_per_step: p.pairs_per_step,
        hidden_dim: p.hidden_dim,
        seed: init_seed,
    };
    let trained = pretrain_adapter(&stream, &base, &expert, &pcfg)?;
    std::fs::write(
        out.join("adapter.ckpt"),
        encode_checkpoint(
            &trained.adapter,
            CheckpointMeta {
                seed: init_seed,
                steps: p.steps as u64,
            },
        ),
    )?;
    std::fs::write(out.join("loss.csv"), trained.trace_csv())?;

    let heldout = synthetic_shapes_corpus(
        p.heldout_images,
        p.heldout_min_objects..=p.heldout_max_objects,
        derive_seed(cfg.seed, &["heldout-shapes"]),
    )
    .into_iter()
    .map(|mut c| {
        c.id = format!("heldout-{}", c.id);
        c
    })
    .collect::<Vec<_>>();
    let test = build_pretrain_stream(&heldout, &augmentation(cfg, derive_seed(cfg.seed, &["heldout-stream"])), p.heldout_pairs)?;
    let pooled = pool_stream(&test, &base, &expert)?;
    let t = retrieval_accuracy(&pooled, &trained.adapter, p.temperature);
    let control = Adapter::<T>::init(expert.output_dim(), p.hidden_dim, base.output_dim(), derive_seed(cfg.seed, &["control"]));
    let c = retrieval_accuracy(&pooled, &control, p.temperature);
    let summary = RetrievalSummary {
        trained_accuracy: t.accuracy(),
        control_accuracy: c.accuracy(),
        trained: (&t).into(),
        control: (&c).into(),
        final_loss: trained.tail_loss(50),
        skipped_pairs: trained.skipped_pairs,
        base_encoder_hash: trained.base_hash.clone(),
        expert_encoder_hash: trained.expert_hash.clone(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(out.join("retrieval.json"), text)?;
    log::info!(
        "top-1 correspondence: trained {:.2}%, random adapter {:.2}%",
        100.0 * t.accuracy(),
        100.0 * c.accuracy()
    );
    Ok(())
}

fn sft_mode(cfg: &Config) -> anyhow::Result<VariantMode> {
    match cfg.sft.variant.as_str() {
        "mix" => Ok(VariantMode::Mix(cfg.sft.p)),
        v => v.parse().map_err(|e: String| anyhow!(e)),
    }
}

fn format_sft(
    cfg: &Config,
    mode: VariantMode,
    manifest: &Path,
    render_from: Option<&Path>,
    out: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let m = load_checked(manifest)?;
    let records = mix_variants(&m.questions, mode, derive_seed(cfg.seed, &["sft-mix"]))?;
    let mut buf = Vec::new();
    write_records(&records, &mut buf)?;
    std::fs::write(out.join("sft.jsonl"), buf)?;
    if let Some(root) = render_from {
        render_edited(&m, root, out)?;
    }
    log::info!("{} records from {} questions", records.len(), m.questions.len());
    Ok(vec![manifest.to_path_buf()])
}

fn evaluate(cfg: &Config, manifest: &Path, images: Option<&Path>, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let e = &cfg.evaluate;
    let m = load_checked(manifest)?;
    let mut inputs = vec![manifest.to_path_buf()];
    let client: Box<dyn ModelClient> = match e.client.as_str() {
        "oracle" => Box::new(OracleClient::new(&m)),
        "random" => Box::new(RandomClient::new(derive_seed(cfg.seed, &["random-client"]))),
        "replay" => {
            let p = PathBuf::from(&e.transcript);
            inputs.push(p.clone());
            Box::new(ReplayModelClient::new(&e.name, Transcript::load(&p).with_context(|| format!("loading {}", p.display()))?))
        }
        _ => {
            if e.endpoint.is_empty() || e.model.is_empty() {
                bail!("http evaluation needs evaluate.endpoint and evaluate.model");
            }
            let chat = ChatClient::new(&e.endpoint, &e.model, Duration::from_secs(e.timeout_seconds))
                .with_api_key(std::env::var("MMVM_API_KEY").ok());
            Box::new(HttpModelClient::new(chat, !e.single_image))
        }
    };
    // Only the live client looks at pixels.
    let provider: Box<dyn ImageProvider> = if e.client == "http" {
        Box::new(RenderedImages::new(&m, manifest_root(manifest, images)))
    } else {
        Box::new(BlankImages::new(&m))
    };
    let opts = RunOptions {
        concurrency: e.concurrency,
        retry: RetryPolicy {
            max_attempts: e.max_attempts,
            ..RetryPolicy::default()
        },
    };
    let log = run_eval(&m, client.as_ref(), provider.as_ref(), &opts)?;
    let mut buf = Vec::new();
    log.write(&mut buf)?;
    std::fs::write(out.join("predictions.jsonl"), buf)?;
    let report = score(&m, &log)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(out.join("report.json"), text)?;
    log::info!("{}: overall {} over {} questions", report.model, report.overall, report.total);
    Ok(inputs)
}

fn report(reports: &[PathBuf], csv: Option<&Path>, format: ReportFormat, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let (rows, inputs): (Vec<LeaderboardRow>, Vec<PathBuf>) = match csv {
        Some(p) => (parse_csv(&std::fs::read_to_string(p)?)?, vec![p.to_path_buf()]),
        None => {
            let rows = reports
                .iter()
                .map(|p| {
                    let r: EvalReport = serde_json::from_slice(&std::fs::read(p)?)
                        .with_context(|| format!("parsing {}", p.display()))?;
                    Ok(LeaderboardRow::from(&r))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            (rows, reports.to_vec())
        }
    };
    let bytes = emit_rows(&rows, format)?;
    let name = match format {
        ReportFormat::Table => "leaderboard.md",
        ReportFormat::Csv => "leaderboard.csv",
        ReportFormat::Plot => "leaderboard.png",
    };
    std::fs::write(out.join(name), &bytes)?;
    if format == ReportFormat::Table {
        print!("{}", String::from_utf8_lossy(&bytes));
    }
    Ok(inputs)
}
