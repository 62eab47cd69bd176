//! Feed-forward next-intent model: per-feature embeddings, one ReLU hidden
//! layer and a softmax over [`NEXT_INTENT_COUNT`] classes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::dataset::{IntentContext, IntentDataset, IntentPair, NextIntent, CONTEXT_CARDINALITIES, NEXT_INTENT_COUNT};
use crate::error::{Error, Result};
use crate::nn::{relu_in_place, Adam, Dense, Embeddings};
use crate::SimRng;

pub const INTENT_MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntentModelConfig {
    /// Width of each feature's embedding; 1 gives scalar embeddings.
    pub embedding_dim: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep the epoch with the lowest held-out perplexity instead of the
    /// last one.
    pub keep_best: bool,
    /// Anneal the learning rate to zero along a cosine over the epochs.
    pub cosine_decay: bool,
}

impl Default for IntentModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            hidden_width: 512,
            learning_rate: 3e-3,
            epochs: 300,
            batch_size: 64,
            seed: 0,
            keep_best: false,
            cosine_decay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentModel {
    pub format_version: u32,
    pub cardinalities: Vec<usize>,
    pub embeddings: Embeddings,
    pub hidden: Dense,
    pub output: Dense,
}

/// Activations kept for the backward pass.
struct Trace {
    idx: [Option<u16>; 6],
    x: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl IntentModel {
    pub fn init(embedding_dim: usize, hidden_width: usize, rng: &mut impl Rng) -> Self {
        let embeddings = Embeddings::init(&CONTEXT_CARDINALITIES, embedding_dim, rng);
        let hidden = Dense::init(embeddings.output_dim(), hidden_width, rng);
        let output = Dense::init(hidden_width, NEXT_INTENT_COUNT, rng);
        Self {
            format_version: INTENT_MODEL_FORMAT_VERSION,
            cardinalities: CONTEXT_CARDINALITIES.to_vec(),
            embeddings,
            hidden,
            output,
        }
    }

    fn trace(&self, ctx: &IntentContext) -> Trace {
        let idx = ctx.indices().map(Some);
        let mut x = Vec::new();
        self.embeddings.lookup(&idx, &mut x);
        let mut h = Vec::new();
        self.hidden.forward(&x, &mut h);
        relu_in_place(&mut h);
        let mut probs = Vec::new();
        self.output.forward(&h, &mut probs);
        softmax_in_place(&mut probs);
        Trace { idx, x, h, probs }
    }

    /// Next-intent distribution, indexed by [`NextIntent::index`].
    pub fn probabilities(&self, ctx: &IntentContext) -> Vec<f64> {
        self.trace(ctx).probs
    }

    pub fn most_likely(&self, ctx: &IntentContext) -> NextIntent {
        let p = self.probabilities(ctx);
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        NextIntent::from_index(best).expect("output width matches class count")
    }

    /// exp(mean negative log-likelihood); infinite on an empty set.
    pub fn perplexity(&self, pairs: &[IntentPair]) -> f64 {
        self.aggregate_perplexity(&aggregate(pairs))
    }

    fn aggregate_perplexity(&self, groups: &[ContextCounts]) -> f64 {
        let n: f64 = groups.iter().map(|(_, c)| c.iter().sum::<f64>()).sum();
        if n == 0.0 {
            return f64::INFINITY;
        }
        let total: f64 = groups.iter().map(|(c, counts)| nll(&self.probabilities(c), counts)).sum();
        (total / n).exp()
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = self.embeddings.tables.iter().map(|t| vec![0.0; t.len()]).collect();
        g.push(vec![0.0; self.hidden.weights.len()]);
        g.push(vec![0.0; self.hidden.bias.len()]);
        g.push(vec![0.0; self.output.weights.len()]);
        g.push(vec![0.0; self.output.bias.len()]);
        g
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = self.embeddings.tables.iter_mut().map(Vec::as_mut_slice).collect();
        p.push(&mut self.hidden.weights);
        p.push(&mut self.hidden.bias);
        p.push(&mut self.output.weights);
        p.push(&mut self.output.bias);
        p
    }

    /// Accumulates cross-entropy gradients of one context against observed
    /// next-intent `counts`; returns the summed NLL of those observations.
    fn accumulate(&self, ctx: &IntentContext, counts: &[f64], grads: &mut [Vec<f64>], scale: f64) -> f64 {
        let t = self.trace(ctx);
        let total: f64 = counts.iter().sum();
        let dz: Vec<f64> = t.probs.iter().zip(counts).map(|(p, c)| (total * p - c) * scale).collect();
        let n = self.embeddings.tables.len();
        let (emb, rest) = grads.split_at_mut(n);
        let (hw, rest) = rest.split_at_mut(1);
        let (hb, rest) = rest.split_at_mut(1);
        let (ow, ob) = rest.split_at_mut(1);
        let mut dh = Vec::new();
        self.output.backward(&t.h, &dz, &mut ow[0], &mut ob[0], Some(&mut dh));
        for (d, &h) in dh.iter_mut().zip(&t.h) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dx = Vec::new();
        self.hidden.backward(&t.x, &dh, &mut hw[0], &mut hb[0], Some(&mut dx));
        self.embeddings.backward(&t.idx, &dx, emb);
        nll(&t.probs, counts)
    }

    /// One draw from the next-intent distribution.
    pub fn sample(&self, ctx: &IntentContext, rng: &mut impl Rng) -> NextIntent {
        sample_index(&self.probabilities(ctx), rng)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::parse("intent model", e))?;
        if model.format_version != INTENT_MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                "intent model",
                format!("unsupported format_version {}", model.format_version),
            ));
        }
        if model.cardinalities != CONTEXT_CARDINALITIES
            || model.embeddings.cardinalities != CONTEXT_CARDINALITIES
            || model.hidden.in_dim != model.embeddings.output_dim()
            || model.output.in_dim != model.hidden.out_dim
            || model.output.out_dim != NEXT_INTENT_COUNT
        {
            return Err(Error::Architecture("intent model layer shapes disagree".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A distinct context with its next-intent counts.
type ContextCounts = (IntentContext, Vec<f64>);

/// Collapses repeated contexts; the order of first appearance is kept.
fn aggregate(pairs: &[IntentPair]) -> Vec<ContextCounts> {
    let mut index = std::collections::HashMap::new();
    let mut groups: Vec<ContextCounts> = Vec::new();
    for (c, y) in pairs {
        let slot = *index.entry(*c).or_insert_with(|| {
            groups.push((*c, vec![0.0; NEXT_INTENT_COUNT]));
            groups.len() - 1
        });
        groups[slot].1[y.index()] += 1.0;
    }
    groups
}

fn nll(probs: &[f64], counts: &[f64]) -> f64 {
    probs
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0.0)
        .map(|(p, c)| -c * p.max(f64::MIN_POSITIVE).ln())
        .sum()
}

fn sample_index(p: &[f64], rng: &mut impl Rng) -> NextIntent {
    let mut u: f64 = rng.random();
    let mut pick = p.len() - 1;
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            pick = i;
            break;
        }
        u -= pi;
    }
    NextIntent::from_index(pick).expect("output width matches class count")
}

/// One draw from the model for `ctx`.
pub fn sample_intent(model: &IntentModel, ctx: &IntentContext, rng: &mut impl Rng) -> NextIntent {
    model.sample(ctx, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedIntentModel {
    pub model: IntentModel,
    pub held_out_perplexity: f64,
    pub best_epoch: usize,
    /// Held-out perplexity after each epoch.
    pub history: Vec<f64>,
}

/// Minibatch Adam on cross-entropy over distinct contexts. Returns the last
/// epoch, or with `keep_best` the epoch with the lowest held-out perplexity
/// (training perplexity when there is no held-out set).
pub fn train_intent_model(data: &IntentDataset, hp: &IntentModelConfig) -> Result<TrainedIntentModel> {
    if data.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if hp.embedding_dim == 0 || hp.hidden_width == 0 || hp.batch_size == 0 {
        return Err(Error::Config("intent model widths and batch size must be positive".into()));
    }
    let mut rng = SimRng::seed_from_u64(hp.seed);
    let mut model = IntentModel::init(hp.embedding_dim, hp.hidden_width, &mut rng);
    let mut opt = Adam::new(hp.learning_rate);
    // Contexts repeat heavily; training on (context, counts) groups gives
    // the same objective at a fraction of the cost.
    let train = aggregate(&data.train);
    let held_out = aggregate(&data.held_out);
    let select_on = if held_out.is_empty() { &train } else { &held_out };
    let mut best = (model.clone(), model.aggregate_perplexity(select_on), 0);
    let mut history = Vec::with_capacity(hp.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=hp.epochs {
        if hp.cosine_decay {
            let progress = (epoch - 1) as f64 / hp.epochs as f64;
            opt.learning_rate = hp.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let mut grads = model.zero_grads();
            let weight: f64 = batch.iter().map(|&i| train[i].1.iter().sum::<f64>()).sum();
            let mut loss = 0.0;
            for &i in batch {
                let (c, counts) = &train[i];
                loss += model.accumulate(c, counts, &mut grads, 1.0 / weight);
            }
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite intent-model loss in epoch {epoch}")));
            }
            opt.update(model.params_mut(), &grads);
        }
        let ppl = model.aggregate_perplexity(select_on);
        if !ppl.is_finite() {
            return Err(Error::Divergence(format!("non-finite perplexity after epoch {epoch}")));
        }
        tracing::debug!(epoch, perplexity = ppl, "intent model epoch");
        history.push(ppl);
        if ppl < best.1 || !hp.keep_best {
            best = (model.clone(), ppl, epoch);
        }
    }
    Ok(TrainedIntentModel {
        model: best.0,
        held_out_perplexity: best.1,
        best_epoch: best.2,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{AgentAction, UserIntent};

    fn ctx(action: AgentAction, turn: u32) -> IntentContext {
        IntentContext {
            prev_agent_action: Some(action),
            turn_count: turn,
            ..IntentContext::opening(true)
        }
    }

    #[test]
    fn untrained_model_is_a_distribution() {
        let mut rng = SimRng::seed_from_u64(0);
        let m = IntentModel::init(1, 16, &mut rng);
        let p = m.probabilities(&ctx(AgentAction::Execute, 4));
        assert_eq!(p.len(), NEXT_INTENT_COUNT);
        assert!(p.iter().all(|x| *x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let pairs = vec![(ctx(AgentAction::Execute, 4), NextIntent::Intent(UserIntent::No))];
        let ppl = m.perplexity(&pairs);
        assert!(ppl >= 1.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = SimRng::seed_from_u64(5);
        let mut m = IntentModel::init(2, 8, &mut rng);
        let c = ctx(AgentAction::OfferOneSkill, 3);
        let y = NextIntent::Intent(UserIntent::Yes);
        let mut counts = vec![0.0; NEXT_INTENT_COUNT];
        counts[y.index()] = 1.0;
        let mut grads = m.zero_grads();
        m.accumulate(&c, &counts, &mut grads, 1.0);
        let nll = |m: &IntentModel| -m.probabilities(&c)[y.index()].ln();
        let h = 1e-5;
        for (g, analytic) in grads.iter().enumerate() {
            let n = m.params_mut()[g].len();
            for i in (0..n).step_by(n.div_ceil(7).max(1)) {
                let orig = m.params_mut()[g][i];
                m.params_mut()[g][i] = orig + h;
                let up = nll(&m);
                m.params_mut()[g][i] = orig - h;
                let down = nll(&m);
                m.params_mut()[g][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-7);
                assert!(err < 1e-4, "group {g} index {i}: {numeric} vs {}", analytic[i]);
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = SimRng::seed_from_u64(1);
        let m = IntentModel::init(1, 16, &mut rng);
        let c = ctx(AgentAction::OfferOneCategory, 2);
        let mut r = SimRng::seed_from_u64(9);
        let a: Vec<_> = (0..50).map(|_| m.sample(&c, &mut r)).collect();
        let mut r = SimRng::seed_from_u64(9);
        let b: Vec<_> = (0..50).map(|_| m.sample(&c, &mut r)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let data = IntentDataset::default();
        assert!(matches!(
            train_intent_model(&data, &IntentModelConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = SimRng::seed_from_u64(2);
        let m = IntentModel::init(1, 4, &mut rng);
        assert_eq!(IntentModel::from_json(&m.to_json()).unwrap(), m);
        let mut bad = m.clone();
        bad.output = Dense::zeros(4, 3);
        assert!(IntentModel::from_json(&bad.to_json()).is_err());
    }
}
