//! One check per acceptance criterion. Each prints a PASS/FAIL line with its
//! measured value; the test fails if any criterion does.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use mmvm_core::eval::{
    extract_choice_with_options, run_eval, score, BlankImages, OracleClient, Prediction, PredictionLog, RandomClient,
    RunOptions,
};
use mmvm_core::hash::derive_seed;
use mmvm_core::model::{manifest_hash, option_labels, DatasetManifest, Mask, SegmentedObject};
use mmvm_core::ocl::{
    contrastive_loss, masked_average_pool, pool_stream, pretrain_adapter, retrieval_accuracy, Adapter,
    ContrastiveBatch, FeatureMap, LossConfig, ObjectEmbedding, PretrainConfig, ToyEncoder, VisionEncoder,
};
use mmvm_core::pseudo::{build_pretrain_stream, synthetic_shapes_corpus, AugmentationConfig};
use mmvm_core::qagen::synthetic::synthetic_videos;
use mmvm_core::render::{concat_vertical, default_palette, render_prompts, tag_box, VisualPromptSpec};
use mmvm_core::sft::{mix_variants, write_records, Variant, VariantMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::{cl_only, fixture_manifest, oracles};

// Tolerances and thresholds.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_TIME: Duration = Duration::from_secs(30);
const ANCHOR_TOL: f64 = 1e-10;
const POOL_TOL: f64 = 1e-12;
const OCL_MIN_ACCURACY: f64 = 0.95;
const OCL_MAX_CONTROL: f64 = 0.40;
const OCL_MAX_STEPS: usize = 2000;
const OCL_TIME: Duration = Duration::from_secs(300);
const RANDOM_BAND: (f64, f64) = (22.0, 28.0);

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let b = oracles::random_batch(&mut rng);
        let cfg = LossConfig::with_temperature([0.07, 0.5, 1.0][case % 3]);
        worst = worst.max(oracles::gradient_relative_error(&b, &cfg));
    }
    let t = start.elapsed();
    outcome(
        worst < GRAD_REL_TOL && t < GRAD_TIME,
        format!("200 batches, worst relative error {worst:.2e} (< {GRAD_REL_TOL:e}), {:.2}s", t.as_secs_f64()),
    )
}

fn loss_anchors() -> Outcome {
    let v = vec![0.4, -1.2, 0.7, 2.0];
    let emb = |t: &str| ObjectEmbedding::new(v.clone(), "x", t);
    let lone = ContrastiveBatch {
        anchor: emb("t"),
        positive: ObjectEmbedding::new(vec![3.0, 0.0, -1.0, 0.5], "y", "t"),
        negatives: vec![],
    };
    let zero = contrastive_loss(&lone, &LossConfig::default()).unwrap().loss;
    let mut worst: f64 = 0.0;
    for k in [1usize, 3, 7] {
        let b = ContrastiveBatch {
            anchor: emb("t"),
            positive: emb("t"),
            negatives: (0..k).map(|i| emb(&format!("n{i}"))).collect(),
        };
        let l = contrastive_loss(&b, &LossConfig::default()).unwrap().loss;
        worst = worst.max((l - ((k + 1) as f64).ln()).abs());
    }
    outcome(
        zero == 0.0 && worst < ANCHOR_TOL,
        format!("no negatives -> {zero}, equal logits max |loss - ln(K+1)| = {worst:.1e} for K in {{1,3,7}}"),
    )
}

fn pooling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=40u32), rng.random_range(1..=40u32));
        let stride = rng.random_range(1..=8u32);
        let channels = rng.random_range(1..=5usize);
        let cells = (w.div_ceil(stride) * h.div_ceil(stride)) as usize;
        let data: Vec<f64> = (0..cells * channels).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fm = FeatureMap::new(channels, (w, h), stride, data.clone()).unwrap();
        let bits = oracles::random_mask_bits(&mut rng, w, h);
        let got = masked_average_pool(&fm, &Mask::from_bits(w, h, bits.clone())).unwrap();
        let want = oracles::pool(channels, w, h, stride, &data, &bits);
        for (g, e) in got.iter().zip(&want) {
            worst = worst.max((g - e).abs());
        }
    }
    outcome(worst < POOL_TOL, format!("1000 cases, max deviation {worst:.1e}"))
}

fn end_to_end_ocl() -> Outcome {
    let start = Instant::now();
    let corpus = synthetic_shapes_corpus(200, 4..=8, 1);
    let mean_objects = corpus.iter().map(|c| c.objects.len()).sum::<usize>() as f64 / corpus.len() as f64;
    let stream = build_pretrain_stream(
        &corpus,
        &AugmentationConfig {
            seed: 3,
            ..AugmentationConfig::default()
        },
        2000,
    )
    .unwrap();
    let held: Vec<_> = synthetic_shapes_corpus(100, 8..=12, 2)
        .into_iter()
        .map(|mut c| {
            c.id = format!("held-{}", c.id);
            c
        })
        .collect();
    let test = build_pretrain_stream(
        &held,
        &AugmentationConfig {
            seed: 4,
            ..AugmentationConfig::default()
        },
        100,
    )
    .unwrap();
    let base = ToyEncoder::<f64>::base(10);
    let expert = ToyEncoder::<f64>::expert(20);
    let cfg = PretrainConfig {
        steps: OCL_MAX_STEPS,
        ..PretrainConfig::default()
    };
    let trained = pretrain_adapter(&stream, &base, &expert, &cfg).unwrap();
    let pooled = pool_stream(&test, &base, &expert).unwrap();
    let tau = cfg.loss.temperature;
    let t = retrieval_accuracy(&pooled, &trained.adapter, tau);
    let control = Adapter::init(expert.output_dim(), cfg.hidden_dim, base.output_dim(), 99);
    let c = retrieval_accuracy(&pooled, &control, tau);
    let elapsed = start.elapsed();
    outcome(
        t.accuracy() >= OCL_MIN_ACCURACY && c.accuracy() <= OCL_MAX_CONTROL && elapsed < OCL_TIME,
        format!(
            "{mean_objects:.1} objects/image, {} steps; held-out top-1 {:.2}% vs random adapter {:.2}% \
             ({} queries, {:.1} candidates each), {:.0}s",
            cfg.steps,
            100.0 * t.accuracy(),
            100.0 * c.accuracy(),
            t.queries,
            t.mean_candidates,
            elapsed.as_secs_f64()
        ),
    )
}

fn log_with(m: &DatasetManifest, right: usize) -> PredictionLog {
    PredictionLog {
        model: "fixture".into(),
        extractor: "tiered/1".into(),
        manifest_hash: manifest_hash(m),
        entries: m
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let pick = if i < right { q.answer.clone() } else { q.labels().into_iter().find(|l| *l != q.answer).unwrap() };
                Prediction {
                    question_id: q.id.clone(),
                    raw_text: pick.clone(),
                    extracted: Some(pick),
                    latency_ms: 0,
                    attempts: 1,
                    error: None,
                }
            })
            .collect(),
    }
}

fn scorer_fixture() -> Outcome {
    let m = fixture_manifest(1510, 4, cl_only);
    let mut pass = true;
    let mut parts = Vec::new();
    for (right, printed) in [(644usize, "42.65"), (575, "38.08")] {
        let got = score(&m, &log_with(&m, right)).unwrap().overall.to_string();
        let counts: Vec<u64> = (0..=1510).filter(|&c| oracles::percent(c, 1510) == printed).collect();
        pass &= got == printed && counts == [right as u64];
        parts.push(format!("{right}/1510 -> {got} (recount {counts:?})"));
    }
    outcome(pass, parts.join(", "))
}

fn run_generate(dir: &Path, out: &str, seed: u64) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mmvm"))
        .current_dir(dir)
        .args(["--seed", &seed.to_string(), "generate", "--synthetic", "20", "--out", out])
        .env_remove("MMVM_CONFIG")
        .env("MMVM_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let seed = 17;
    if !(run_generate(dir.path(), "a", seed) && run_generate(dir.path(), "b", seed)) {
        return outcome(false, "generate failed".into());
    }
    let a = std::fs::read(dir.path().join("a/manifest.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b/manifest.jsonl")).unwrap();
    let m = mmvm_core::model::parse_manifest(&a).unwrap();
    // same derivation the command uses for its synthetic videos
    let videos = synthetic_videos(20, derive_seed(seed, &["videos"]));
    let want: usize = videos.iter().map(|v| oracles::question_count(&v.annotation)).sum();
    outcome(
        a == b && m.questions.len() == want,
        format!("identical manifests: {}, {} questions vs enumeration {want}", a == b, m.questions.len()),
    )
}

fn rendering_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = RgbImage::from_fn(40, 30, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    let identity = render_prompts(&img, &[]).unwrap() == img;

    let ground = [1u8, 2, 3];
    let palette = default_palette(3).unwrap();
    let mut mismatched = 0usize;
    for case in 0..20 {
        let (w, h) = (rng.random_range(24..80u32), rng.random_range(24..80u32));
        let objects: Vec<SegmentedObject> = (0..3)
            .map(|i| {
                let (x0, y0) = (rng.random_range(0..w - 4), rng.random_range(0..h - 4));
                let (x1, y1) = (rng.random_range(x0 + 1..w), rng.random_range(y0 + 1..h));
                SegmentedObject {
                    track_id: format!("t{i}"),
                    frame_id: "f".into(),
                    mask: Mask::from_fn(w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y)),
                    category: None,
                }
            })
            .collect();
        let specs: Vec<VisualPromptSpec> =
            (0..3).map(|i| VisualPromptSpec::new(i + 1, palette[i as usize]).with_thickness(1 + case % 3)).collect();
        let base = RgbImage::from_pixel(w, h, Rgb(ground));
        let marks: Vec<_> = objects.iter().zip(&specs).collect();
        let out = render_prompts(&base, &marks).unwrap();
        let bands: Vec<Vec<bool>> =
            objects.iter().zip(&specs).map(|(o, s)| oracles::contour_band(&o.mask, s.contour_thickness)).collect();
        let boxes: Vec<_> = objects.iter().zip(&specs).filter_map(|(o, s)| tag_box(&o.mask, s.object_tag)).collect();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                let expected = bands.iter().any(|b| b[i]) || boxes.iter().any(|b| b.contains(x, y));
                mismatched += (expected != (out.get_pixel(x, y).0 != ground)) as usize;
            }
        }
    }

    let mut law_failures = 0;
    for _ in 0..100 {
        let imgs: Vec<RgbImage> = (0..rng.random_range(1..5))
            .map(|_| {
                let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
                RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
            })
            .collect();
        let out = concat_vertical(&imgs).unwrap();
        let mut ok = out.width() == imgs.iter().map(|i| i.width()).max().unwrap()
            && out.height() == imgs.iter().map(|i| i.height()).sum::<u32>();
        let mut top = 0;
        for img in &imgs {
            for y in 0..img.height() {
                for x in 0..out.width() {
                    let want = if x < img.width() { *img.get_pixel(x, y) } else { Rgb([0, 0, 0]) };
                    ok &= *out.get_pixel(x, top + y) == want;
                }
            }
            top += img.height();
        }
        law_failures += !ok as usize;
    }
    outcome(
        identity && mismatched == 0 && law_failures == 0,
        format!(
            "empty render identical: {identity}; {mismatched} pixels off the band/tag oracle over 20 fixtures; \
             {law_failures}/100 stacking-law failures"
        ),
    )
}

fn instruction_augmentation() -> Outcome {
    let m = fixture_manifest(220, 4, cl_only);
    let both = mix_variants(&m.questions, VariantMode::Both, 0).unwrap();
    let slots_ok = both
        .iter()
        .filter(|r| r.variant == Variant::B)
        .zip(&m.questions)
        .all(|(r, q)| r.object_slots.len() == q.options.len());

    let mut golden = m.clone();
    golden.questions.truncate(3);
    golden.questions[1].reason = Some("Same red handle, now on the left.".into());
    let mut stable = true;
    for (mode, name) in [(VariantMode::A, "sft_a.jsonl"), (VariantMode::B, "sft_b.jsonl")] {
        let mut buf = Vec::new();
        write_records(&mix_variants(&golden.questions, mode, 0).unwrap(), &mut buf).unwrap();
        stable &= std::fs::read(core_dir().join("tests/golden").join(name)).ok() == Some(buf);
    }
    outcome(
        both.len() == 440 && slots_ok && stable,
        format!("220 -> {} records, one slot per candidate: {slots_ok}, golden files match: {stable}", both.len()),
    )
}

#[derive(Deserialize)]
struct Case {
    text: String,
    n: usize,
    #[serde(default)]
    options: Vec<String>,
    expected: Option<String>,
}

fn evaluation_robustness() -> Outcome {
    let m = fixture_manifest(1000, 4, cl_only);
    let opts = RunOptions::default();
    let images = BlankImages::new(&m);
    let oracle = score(&m, &run_eval(&m, &OracleClient::new(&m), &images, &opts).unwrap()).unwrap().overall;
    let random = score(&m, &run_eval(&m, &RandomClient::new(2024), &images, &opts).unwrap()).unwrap().overall;
    let text = std::fs::read_to_string(core_dir().join("tests/fixtures/extractor_cases.jsonl")).unwrap();
    let cases: Vec<Case> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let disagreements = cases
        .iter()
        .filter(|c| extract_choice_with_options(&c.text, &option_labels(c.n), &c.options) != c.expected)
        .count();
    let r = random.as_f64();
    outcome(
        oracle.to_string() == "100.00"
            && (RANDOM_BAND.0..=RANDOM_BAND.1).contains(&r)
            && cases.len() == 50
            && disagreements == 0,
        format!(
            "oracle {oracle}, seeded random {random} on 1000 4-option questions, \
             extractor {disagreements} disagreements on {} labelled responses",
            cases.len()
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("gradient check", gradient_check),
        ("closed-form loss anchors", loss_anchors),
        ("pooling oracle", pooling_oracle),
        ("end-to-end object-level contrastive alignment", end_to_end_ocl),
        ("scorer fixture", scorer_fixture),
        ("pipeline determinism", pipeline_determinism),
        ("rendering contract", rendering_contract),
        ("instruction augmentation", instruction_augmentation),
        ("evaluation robustness", evaluation_robustness),
    ];
    let mut failed = Vec::new();
    // written past the test harness capture so the lines always show
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        writeln!(out, "{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail).unwrap();
        out.flush().unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
