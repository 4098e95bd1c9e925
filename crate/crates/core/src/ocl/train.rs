use rayon::prelude::*;

use crate::pseudo::PseudoPair;
use crate::Scalar;

use super::{
    contrastive_loss, masked_average_pool, Adapter, AdapterGrads, ContrastiveBatch, LossConfig, ObjectEmbedding,
    OclError, VisionEncoder,
};

/// Pooled object features of one pseudo pair, computed once and reused every step.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledPair<T> {
    pub source_id: String,
    pub expert_name: String,
    pub base_name: String,
    /// Expert-side features of the corresponded tracks in view A.
    pub anchors: Vec<(String, Vec<T>)>,
    /// Base-side features of every object in view B.
    pub candidates: Vec<(String, Vec<T>)>,
}

pub fn pool_pair<T: Scalar>(
    pair: &PseudoPair,
    base: &dyn VisionEncoder<T>,
    expert: &dyn VisionEncoder<T>,
) -> Result<PooledPair<T>, OclError> {
    let fa = expert.encode(&pair.view_a.image);
    let fb = base.encode(&pair.view_b.image);
    let mut anchors = Vec::with_capacity(pair.correspondence.len());
    for track in &pair.correspondence {
        let obj = pair
            .view_a
            .object(track)
            .ok_or_else(|| OclError::InvalidBatch(format!("corresponded track {track} missing from view A")))?;
        anchors.push((track.clone(), masked_average_pool(&fa, &obj.mask)?));
    }
    let candidates = pair
        .view_b
        .objects
        .iter()
        .map(|o| Ok((o.track_id.clone(), masked_average_pool(&fb, &o.mask)?)))
        .collect::<Result<Vec<_>, OclError>>()?;
    Ok(PooledPair {
        source_id: pair.source_id.clone(),
        expert_name: expert.name().to_string(),
        base_name: base.name().to_string(),
        anchors,
        candidates,
    })
}

impl<T: Scalar> PooledPair<T> {
    /// Anchor track index paired with the candidate index of its positive; tracks
    /// without a positive or without any negative are skipped.
    fn usable(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.anchors.iter().enumerate().filter_map(|(i, (track, _))| {
            if self.candidates.len() < 2 {
                return None;
            }
            self.candidates.iter().position(|(t, _)| t == track).map(|j| (i, j))
        })
    }

    pub fn usable_count(&self) -> usize {
        self.usable().count()
    }

    fn batch_with_anchor(&self, anchor_track: &str, anchor: Vec<T>, positive: usize) -> ContrastiveBatch<T> {
        let emb = |(t, v): &(String, Vec<T>)| ObjectEmbedding::new(v.clone(), &self.base_name, t);
        ContrastiveBatch {
            anchor: ObjectEmbedding::new(anchor, &format!("adapter({})", self.expert_name), anchor_track),
            positive: emb(&self.candidates[positive]),
            negatives: self
                .candidates
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != positive)
                .map(|(_, c)| emb(c))
                .collect(),
        }
    }

    /// One batch per usable corresponded track, anchors passed through the adapter.
    pub fn batches(&self, adapter: &Adapter<T>) -> Result<Vec<ContrastiveBatch<T>>, OclError> {
        self.usable()
            .map(|(i, j)| {
                let (track, x) = &self.anchors[i];
                Ok(self.batch_with_anchor(track, adapter.forward(x)?, j))
            })
            .collect()
    }
}

/// Contrastive batches for a pseudo pair: view A through the expert and adapter
/// gives anchors, view B through the base encoder gives positives and negatives.
pub fn build_batches<T: Scalar>(
    pair: &PseudoPair,
    base: &dyn VisionEncoder<T>,
    expert: &dyn VisionEncoder<T>,
    adapter: &Adapter<T>,
) -> Result<Vec<ContrastiveBatch<T>>, OclError> {
    check_dims(base, expert, adapter)?;
    let pooled = pool_pair(pair, base, expert)?;
    let batches = pooled.batches(adapter)?;
    if batches.is_empty() {
        return Err(OclError::NoUsableTracks(pair.source_id.clone()));
    }
    Ok(batches)
}

fn check_dims<T: Scalar>(
    base: &dyn VisionEncoder<T>,
    expert: &dyn VisionEncoder<T>,
    adapter: &Adapter<T>,
) -> Result<(), OclError> {
    if adapter.in_dim != expert.output_dim() {
        return Err(OclError::DimensionMismatch {
            expected: expert.output_dim(),
            got: adapter.in_dim,
        });
    }
    if adapter.out_dim != base.output_dim() {
        return Err(OclError::DimensionMismatch {
            expected: base.output_dim(),
            got: adapter.out_dim,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub loss: LossConfig,
    /// Pseudo pairs consumed per step; the stream is cycled.
    pub pairs_per_step: usize,
    pub hidden_dim: usize,
    /// Adapter initialisation seed.
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1e-2,
            momentum: 0.9,
            loss: LossConfig::default(),
            pairs_per_step: 8,
            hidden_dim: 64,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn check(&self) -> Result<(), OclError> {
        let bad = |m: &str| Err(OclError::InvalidConfig(m.to_string()));
        if self.pairs_per_step == 0 {
            return bad("pairs_per_step must be >= 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.loss.temperature > 0.0) {
            return Err(OclError::NonPositiveTemperature(self.loss.temperature));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Mean loss over the step's batches, before the update.
    pub loss: f64,
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutput<T> {
    pub adapter: Adapter<T>,
    pub trace: Vec<StepRecord>,
    pub base_hash: String,
    pub expert_hash: String,
    /// Stream pairs with no usable track.
    pub skipped_pairs: usize,
}

impl<T> PretrainOutput<T> {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    /// Mean loss of the last `n` steps.
    pub fn tail_loss(&self, n: usize) -> f64 {
        let tail = &self.trace[self.trace.len().saturating_sub(n)..];
        tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64
    }
}

pub fn trace_csv(trace: &[StepRecord]) -> String {
    let mut s = String::from("step,loss,batches\n");
    for r in trace {
        s.push_str(&format!("{},{},{}\n", r.step, r.loss, r.batches));
    }
    s
}

/// SGD with momentum over pre-pooled pairs. Only the adapter changes.
pub fn train_adapter<T: Scalar>(
    pooled: &[PooledPair<T>],
    mut adapter: Adapter<T>,
    cfg: &PretrainConfig,
) -> Result<(Adapter<T>, Vec<StepRecord>), OclError> {
    cfg.check()?;
    let usable: Vec<&PooledPair<T>> = pooled.iter().filter(|p| p.usable_count() > 0).collect();
    if usable.is_empty() {
        return Err(OclError::EmptyStream);
    }
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let mu = T::from_f64_lossy(cfg.momentum);
    let mut velocity = vec![T::zero(); adapter.parameter_count()];
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let picks: Vec<&PooledPair<T>> = (0..cfg.pairs_per_step)
            .map(|j| usable[(step * cfg.pairs_per_step + j) % usable.len()])
            .collect();
        let per_pair: Vec<Result<PairGradient<T>, OclError>> =
            picks.par_iter().map(|p| pair_gradient(p, &adapter, &cfg.loss)).collect();
        let mut total = AdapterGrads::zeros_like(&adapter);
        let mut loss_sum = T::zero();
        let mut batches = 0usize;
        for r in per_pair {
            let (l, n, g) = r?;
            loss_sum += l;
            batches += n;
            total.add_assign(&g);
        }
        let mean_loss = (loss_sum / T::from_usize(batches).expect("batch count")).to_f64_lossy();
        if !mean_loss.is_finite() {
            return Err(OclError::Diverged { step });
        }
        trace.push(StepRecord {
            step,
            loss: mean_loss,
            batches,
        });
        let scale = T::one() / T::from_usize(batches).expect("batch count");
        let mut params = adapter.parameters();
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(total.flatten()) {
            *v = mu * *v + g * scale;
            *p -= lr * *v;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(OclError::Diverged { step });
        }
        adapter.set_parameters(&params)?;
    }
    Ok((adapter, trace))
}

/// Summed loss, batch count and summed parameter gradients for one pair.
type PairGradient<T> = (T, usize, AdapterGrads<T>);

fn pair_gradient<T: Scalar>(
    pair: &PooledPair<T>,
    adapter: &Adapter<T>,
    loss: &LossConfig,
) -> Result<PairGradient<T>, OclError> {
    let mut grads = AdapterGrads::zeros_like(adapter);
    let mut total = T::zero();
    let mut n = 0;
    for (i, j) in pair.usable() {
        let (track, x) = &pair.anchors[i];
        let cache = adapter.forward_cached(x)?;
        let batch = pair.batch_with_anchor(track, cache.output.clone(), j);
        let out = contrastive_loss(&batch, loss)?;
        grads.add_assign(&adapter.backward(x, &cache, &out.grad_anchor));
        total += out.loss;
        n += 1;
    }
    Ok((total, n, grads))
}

/// Pool every pair of the stream, then train a freshly initialised adapter.
/// Encoder parameter hashes are compared before and after.
pub fn pretrain_adapter<T: Scalar>(
    stream: &[PseudoPair],
    base: &dyn VisionEncoder<T>,
    expert: &dyn VisionEncoder<T>,
    cfg: &PretrainConfig,
) -> Result<PretrainOutput<T>, OclError> {
    cfg.check()?;
    let adapter = Adapter::init(expert.output_dim(), cfg.hidden_dim, base.output_dim(), cfg.seed);
    check_dims(base, expert, &adapter)?;
    let base_hash = base.parameter_hash();
    let expert_hash = expert.parameter_hash();
    let pooled = pool_stream(stream, base, expert)?;
    let skipped_pairs = pooled.iter().filter(|p| p.usable_count() == 0).count();
    let (adapter, trace) = train_adapter(&pooled, adapter, cfg)?;
    if base.parameter_hash() != base_hash || expert.parameter_hash() != expert_hash {
        return Err(OclError::EncoderMutated);
    }
    Ok(PretrainOutput {
        adapter,
        trace,
        base_hash,
        expert_hash,
        skipped_pairs,
    })
}

pub fn pool_stream<T: Scalar>(
    stream: &[PseudoPair],
    base: &dyn VisionEncoder<T>,
    expert: &dyn VisionEncoder<T>,
) -> Result<Vec<PooledPair<T>>, OclError> {
    if stream.is_empty() {
        return Err(OclError::EmptyStream);
    }
    stream.par_iter().map(|p| pool_pair(p, base, expert)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedCandidate<T> {
    pub index: usize,
    pub track_id: String,
    pub score: T,
}

/// Candidates by descending `query . candidate / temperature`; ties keep input order.
/// Non-finite scores rank last.
pub fn match_by_embedding<T: Scalar>(
    query: &ObjectEmbedding<T>,
    candidates: &[ObjectEmbedding<T>],
    temperature: f64,
) -> Vec<RankedCandidate<T>> {
    let tau = T::from_f64_lossy(temperature);
    let mut ranked: Vec<RankedCandidate<T>> = candidates
        .iter()
        .enumerate()
        .map(|(index, c)| RankedCandidate {
            index,
            track_id: c.track_id.clone(),
            score: crate::scalar::dot(&query.vector, &c.vector) / tau,
        })
        .collect();
    let key = |s: T| if s.is_nan() { T::neg_infinity() } else { s };
    ranked.sort_by(|a, b| key(b.score).partial_cmp(&key(a.score)).expect("NaN mapped away"));
    ranked
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub pairs: usize,
    pub queries: usize,
    pub correct: usize,
    /// Mean candidate count per query.
    pub mean_candidates: f64,
}

impl RetrievalReport {
    pub fn accuracy(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.correct as f64 / self.queries as f64
        }
    }
}

/// Top-1 correspondence accuracy: every corresponded track in view A, passed through
/// the adapter, is matched against all view-B candidates.
pub fn retrieval_accuracy<T: Scalar>(pooled: &[PooledPair<T>], adapter: &Adapter<T>, temperature: f64) -> RetrievalReport {
    let mut report = RetrievalReport {
        pairs: pooled.len(),
        queries: 0,
        correct: 0,
        mean_candidates: 0.0,
    };
    let mut cand_total = 0usize;
    for p in pooled {
        let candidates: Vec<ObjectEmbedding<T>> =
            p.candidates.iter().map(|(t, v)| ObjectEmbedding::new(v.clone(), &p.base_name, t)).collect();
        for (track, x) in &p.anchors {
            let Ok(q) = adapter.forward(x) else { continue };
            let q = ObjectEmbedding::new(q, &p.expert_name, track);
            let ranked = match_by_embedding(&q, &candidates, temperature);
            report.queries += 1;
            cand_total += candidates.len();
            if ranked.first().is_some_and(|r| &r.track_id == track) {
                report.correct += 1;
            }
        }
    }
    report.mean_candidates = cand_total as f64 / report.queries.max(1) as f64;
    report
}
