// Index loops are the point of a naive reference.
#![allow(clippy::needless_range_loop)]

mod common;

use mmvm_core::model::Mask;
use mmvm_core::ocl::{
    build_batches, contrastive_loss, masked_average_pool, match_by_embedding, pool_pair, pretrain_adapter,
    train_adapter, Adapter, ContrastiveBatch, FeatureMap, LossConfig, ObjectEmbedding, PooledPair, PretrainConfig,
    ToyEncoder, VisionEncoder,
};
use mmvm_core::pseudo::{build_pretrain_stream, synthetic_shapes_corpus, AugmentationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles;

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let b = oracles::random_batch(&mut rng);
        let cfg = LossConfig {
            temperature: [0.07, 0.5, 1.0][case % 3],
            cosine: case % 2 == 1,
        };
        worst = worst.max(oracles::gradient_relative_error(&b, &cfg));
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn closed_form_anchors() {
    let v = vec![0.3, -0.2, 0.9];
    let b = ContrastiveBatch {
        anchor: ObjectEmbedding::new(v.clone(), "a", "t"),
        positive: ObjectEmbedding::new(vec![5.0, 1.0, -2.0], "b", "t"),
        negatives: vec![],
    };
    assert_eq!(contrastive_loss(&b, &LossConfig::default()).unwrap().loss, 0.0);
    for k in [1usize, 3, 7] {
        let b = ContrastiveBatch {
            anchor: ObjectEmbedding::new(v.clone(), "a", "t"),
            positive: ObjectEmbedding::new(v.clone(), "b", "t"),
            negatives: (0..k).map(|i| ObjectEmbedding::new(v.clone(), "b", &format!("n{i}"))).collect(),
        };
        let l = contrastive_loss(&b, &LossConfig::default()).unwrap().loss;
        assert!((l - ((k + 1) as f64).ln()).abs() < 1e-10);
    }
}

#[test]
fn pooling_matches_naive_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fallbacks = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=40u32), rng.random_range(1..=40u32));
        let stride = rng.random_range(1..=8u32);
        let channels = rng.random_range(1..=5usize);
        let (gw, gh) = (w.div_ceil(stride), h.div_ceil(stride));
        let data: Vec<f64> = (0..(gw * gh) as usize * channels).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fm = FeatureMap::new(channels, (w, h), stride, data.clone()).unwrap();
        let bits = oracles::random_mask_bits(&mut rng, w, h);
        let mask = Mask::from_bits(w, h, bits.clone());
        let got = masked_average_pool(&fm, &mask).unwrap();
        let want = oracles::pool(channels, w, h, stride, &data, &bits);
        if fm.select_cells(&mask).unwrap().len() == 1 {
            fallbacks += 1;
        }
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "{w}x{h}/{stride}: {got:?} vs {want:?}");
        }
    }
    assert!(fallbacks > 50, "too few single-cell cases exercised");
}

#[test]
fn adapter_matches_matrix_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let (i, hdim, o) = (rng.random_range(1..12), rng.random_range(1..12), rng.random_range(1..12));
        let mut a = Adapter::<f64>::init(i, hdim, o, seed);
        for b in a.b1.iter_mut().chain(a.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..i).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut hidden = vec![0.0; hdim];
        for r in 0..hdim {
            let mut s = a.b1[r];
            for c in 0..i {
                s += a.w1[r * i + c] * x[c];
            }
            hidden[r] = if s > 0.0 { s } else { 0.0 };
        }
        let mut want = vec![0.0; o];
        for r in 0..o {
            want[r] = a.b2[r] + (0..hdim).map(|c| a.w2[r * hdim + c] * hidden[c]).sum::<f64>();
        }
        let got = a.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}

#[test]
fn ranking_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let d = rng.random_range(1..8);
        let n = rng.random_range(1..12);
        let q = ObjectEmbedding::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), "q", "q");
        // coarse values so ties happen
        let cands: Vec<ObjectEmbedding<f64>> = (0..n)
            .map(|i| {
                ObjectEmbedding::new((0..d).map(|_| rng.random_range(-2..=2) as f64).collect(), "c", &format!("c{i}"))
            })
            .collect();
        let tau = 0.5;
        let ranked = match_by_embedding(&q, &cands, tau);
        let scores: Vec<f64> =
            cands.iter().map(|c| c.vector.iter().zip(&q.vector).map(|(a, b)| a * b).sum::<f64>() / tau).collect();
        // selection sort: repeatedly take the first maximum among the rest
        let mut left: Vec<usize> = (0..n).collect();
        let mut want = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for k in 1..left.len() {
                if scores[left[k]] > scores[left[best]] {
                    best = k;
                }
            }
            want.push(left.remove(best));
        }
        assert_eq!(ranked.iter().map(|r| r.index).collect::<Vec<_>>(), want);
    }
}

fn small_stream(n_images: usize, pairs: usize, seed: u64) -> Vec<mmvm_core::pseudo::PseudoPair> {
    let corpus = synthetic_shapes_corpus(n_images, 3..=5, seed);
    let aug = AugmentationConfig {
        seed: seed + 1,
        ..AugmentationConfig::default()
    };
    build_pretrain_stream(&corpus, &aug, pairs).unwrap()
}

#[test]
fn batches_recompose_from_encoders() {
    let stream = small_stream(3, 3, 40);
    let base = ToyEncoder::<f64>::base(1);
    let expert = ToyEncoder::<f64>::expert(2);
    let adapter = Adapter::init(expert.output_dim(), 16, base.output_dim(), 3);
    for pair in &stream {
        let batches = build_batches(pair, &base, &expert, &adapter).unwrap();
        let fa = expert.encode(&pair.view_a.image);
        let fb = base.encode(&pair.view_b.image);
        assert_eq!(batches.len(), pair.correspondence.len());
        for b in &batches {
            let track = &b.anchor.track_id;
            let xa = masked_average_pool(&fa, &pair.view_a.object(track).unwrap().mask).unwrap();
            assert_eq!(b.anchor.vector, adapter.forward(&xa).unwrap());
            let pos = masked_average_pool(&fb, &pair.view_b.object(track).unwrap().mask).unwrap();
            assert_eq!(&b.positive.track_id, track);
            assert_eq!(b.positive.vector, pos);
            // every other view-B object is a negative
            let mut neg: Vec<&str> = b.negatives.iter().map(|n| n.track_id.as_str()).collect();
            let mut want: Vec<&str> =
                pair.view_b.objects.iter().map(|o| o.track_id.as_str()).filter(|t| t != track).collect();
            neg.sort();
            want.sort();
            assert_eq!(neg, want);
        }
    }
}

#[test]
fn separable_embeddings_train_to_low_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (din, dout, classes) = (6, 8, 5);
    let prototypes: Vec<Vec<f64>> = (0..classes).map(|_| oracles::gaussianish(&mut rng, dout, 1.0)).collect();
    let pooled: Vec<PooledPair<f64>> = (0..16)
        .map(|p| {
            let anchors = (0..classes)
                .map(|k| {
                    let mut x = vec![0.0; din];
                    x[k] = 1.0;
                    x[din - 1] = rng.random_range(-0.1..0.1);
                    (format!("t{k}"), x)
                })
                .collect();
            let candidates = (0..classes)
                .map(|k| (format!("t{k}"), prototypes[k].iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()))
                .collect();
            PooledPair {
                source_id: format!("p{p}"),
                expert_name: "x".into(),
                base_name: "y".into(),
                anchors,
                candidates,
            }
        })
        .collect();
    let cfg = PretrainConfig {
        steps: 500,
        learning_rate: 0.05,
        hidden_dim: 16,
        ..PretrainConfig::default()
    };
    let (_, trace) = train_adapter(&pooled, Adapter::init(din, 16, dout, 0), &cfg).unwrap();
    let last = trace.last().unwrap().loss;
    assert!(last < 0.05, "final loss {last}");
    assert!(trace[0].loss > 1.0);
}

#[test]
fn zero_learning_rate_leaves_adapter_and_encoders_untouched() {
    let stream = small_stream(4, 4, 50);
    let base = ToyEncoder::<f64>::base(1);
    let expert = ToyEncoder::<f64>::expert(2);
    let hashes = (base.parameter_hash(), expert.parameter_hash());
    let cfg = PretrainConfig {
        steps: 5,
        learning_rate: 0.0,
        hidden_dim: 8,
        seed: 4,
        ..PretrainConfig::default()
    };
    let out = pretrain_adapter(&stream, &base, &expert, &cfg).unwrap();
    assert_eq!(out.adapter, Adapter::init(expert.output_dim(), 8, base.output_dim(), 4));
    assert_eq!((out.base_hash.clone(), out.expert_hash.clone()), hashes);
    assert_eq!((base.parameter_hash(), expert.parameter_hash()), hashes);
    // constant loss when nothing moves
    assert!(out.trace.windows(2).all(|w| w[0].batches != w[1].batches || w[0].loss == w[1].loss));

    let pooled = pool_pair(&stream[0], &base, &expert).unwrap();
    assert_eq!(pooled.anchors.len(), stream[0].correspondence.len());
}
