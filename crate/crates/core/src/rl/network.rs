use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dialog::{ActionMask, AgentAction, EncoderMode, Features, StateEncoder, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, one_hot, relu_in_place, Dense, Embeddings};
use crate::SimRng;

pub const HIDDEN_UNITS: usize = 128;
pub const DROPOUT: f64 = 0.3;
pub const ACTION_COUNT: usize = AgentAction::COUNT;

pub type QValues = [f64; ACTION_COUNT];

/// Input → 128 → 128 → 8 with ReLU and dropout on both hidden layers. In
/// embedding mode each state feature is a learned scalar; in one-hot mode
/// the features are concatenated indicator blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub mode: EncoderMode,
    pub cardinalities: Vec<usize>,
    pub embeddings: Option<Embeddings>,
    pub layers: [Dense; 3],
    pub dropout: f64,
}

/// Forward activations needed by [`QNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    features: Features,
    x: Vec<f64>,
    /// Post-ReLU, post-dropout activations of the hidden layers.
    h: [Vec<f64>; 2],
    /// Dropout multipliers (1.0 everywhere in eval mode).
    masks: [Vec<f64>; 2],
    pub q: QValues,
}

/// Gradients laid out like [`QNetwork::params_mut`].
pub type Gradients = Vec<Vec<f64>>;

impl QNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Parameter groups in a fixed order: embedding tables (if any), then
    /// weights and bias of each dense layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(e) = &mut self.embeddings {
            out.extend(e.tables.iter_mut().map(Vec::as_mut_slice));
        }
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(e) = &self.embeddings {
            out.extend(e.tables.iter().map(Vec::as_slice));
        }
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out
    }

    pub fn zero_grads(&self) -> Gradients {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// The vector fed to the first dense layer.
    pub fn encode(&self, features: &Features) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        match &self.embeddings {
            Some(e) => e.lookup(features, &mut x),
            None => one_hot(features, &self.cardinalities, &mut x),
        }
        x
    }

    /// Runs the dense stack on an already-encoded input.
    pub fn forward_input(&self, x: &[f64], dropout_rng: Option<&mut SimRng>) -> Result<QValues> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.dense_forward(Features::default(), x.to_vec(), dropout_rng).q)
    }

    fn dense_forward(&self, features: Features, x: Vec<f64>, mut rng: Option<&mut SimRng>) -> ForwardCache {
        let mut h0 = Vec::new();
        self.layers[0].forward(&x, &mut h0);
        relu_in_place(&mut h0);
        let m0 = self.mask(h0.len(), rng.as_deref_mut());
        h0.iter_mut().zip(&m0).for_each(|(h, m)| *h *= m);
        let mut h1 = Vec::new();
        self.layers[1].forward(&h0, &mut h1);
        relu_in_place(&mut h1);
        let m1 = self.mask(h1.len(), rng);
        h1.iter_mut().zip(&m1).for_each(|(h, m)| *h *= m);
        let mut out = Vec::new();
        self.layers[2].forward(&h1, &mut out);
        let mut q = [0.0; ACTION_COUNT];
        q.copy_from_slice(&out);
        ForwardCache {
            features,
            x,
            h: [h0, h1],
            masks: [m0, m1],
            q,
        }
    }

    fn mask(&self, len: usize, rng: Option<&mut SimRng>) -> Vec<f64> {
        match rng {
            Some(rng) if self.dropout > 0.0 => dropout_mask(len, self.dropout, rng),
            _ => vec![1.0; len],
        }
    }

    /// Train mode (dropout active) when `dropout_rng` is given, eval mode
    /// otherwise.
    pub fn forward_cached(&self, features: &Features, dropout_rng: Option<&mut SimRng>) -> ForwardCache {
        self.dense_forward(*features, self.encode(features), dropout_rng)
    }

    /// Deterministic eval-mode Q-values.
    pub fn q_values(&self, features: &Features) -> QValues {
        self.forward_cached(features, None).q
    }

    /// Accumulates gradients of `Σ_a dq[a]·Q(s)[a]` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, dq: &QValues, grads: &mut Gradients) {
        let n_emb = self.embeddings.as_ref().map_or(0, |e| e.tables.len());
        let (emb_grads, dense_grads) = grads.split_at_mut(n_emb);
        let [g0w, g0b, g1w, g1b, g2w, g2b] = dense_grads else {
            panic!("gradient layout does not match network");
        };
        let mut d1 = Vec::new();
        self.layers[2].backward(&cache.h[1], dq, g2w, g2b, Some(&mut d1));
        gate(&mut d1, &cache.h[1], &cache.masks[1]);
        let mut d0 = Vec::new();
        self.layers[1].backward(&cache.h[0], &d1, g1w, g1b, Some(&mut d0));
        gate(&mut d0, &cache.h[0], &cache.masks[0]);
        match &self.embeddings {
            Some(e) => {
                let mut dx = Vec::new();
                self.layers[0].backward(&cache.x, &d0, g0w, g0b, Some(&mut dx));
                e.backward(&cache.features, &dx, emb_grads);
            }
            None => self.layers[0].backward(&cache.x, &d0, g0w, g0b, None),
        }
    }

    /// Copies parameters from `other`; shapes must agree.
    pub fn copy_from(&mut self, other: &QNetwork) -> Result<()> {
        let same = self.mode == other.mode
            && self.cardinalities == other.cardinalities
            && self.params().iter().map(|p| p.len()).eq(other.params().iter().map(|p| p.len()));
        if !same {
            return Err(Error::Architecture("target and online networks differ in shape".into()));
        }
        self.clone_from(other);
        Ok(())
    }

    /// Checks internal shape consistency (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let expected_in = match (&self.embeddings, self.mode) {
            (Some(e), EncoderMode::Embedding) if e.cardinalities == self.cardinalities => e.output_dim(),
            (None, EncoderMode::OneHot) => self.cardinalities.iter().sum(),
            _ => return Err(Error::Architecture("encoder mode and embeddings disagree".into())),
        };
        let dims = [
            (expected_in, HIDDEN_UNITS),
            (HIDDEN_UNITS, HIDDEN_UNITS),
            (HIDDEN_UNITS, ACTION_COUNT),
        ];
        for (l, (i, o)) in self.layers.iter().zip(dims) {
            if l.in_dim != i || l.out_dim != o || l.weights.len() != i * o || l.bias.len() != o {
                return Err(Error::Architecture(format!(
                    "layer {}x{} where {i}x{o} expected",
                    l.in_dim, l.out_dim
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Architecture(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// ReLU and dropout backward: zero where the unit was inactive or dropped,
/// rescale by the dropout multiplier elsewhere.
fn gate(d: &mut [f64], h: &[f64], mask: &[f64]) {
    for ((g, &h), &m) in d.iter_mut().zip(h).zip(mask) {
        *g = if h > 0.0 { *g * m } else { 0.0 };
    }
}

/// Fan-in scaled uniform weights, zero biases; scalar embeddings
/// ~ U(-1, 1). `input_dim` must be 7 (embedding) or the one-hot width.
pub fn init_network(encoder: &StateEncoder, input_dim: usize, seed: u64) -> Result<QNetwork> {
    let mode = if input_dim == FEATURE_COUNT {
        EncoderMode::Embedding
    } else if input_dim == encoder.one_hot_dim() {
        EncoderMode::OneHot
    } else {
        return Err(Error::Dimension {
            expected: encoder.one_hot_dim(),
            got: input_dim,
        });
    };
    let mut rng = SimRng::seed_from_u64(seed);
    let cards = encoder.cardinalities.to_vec();
    let embeddings = (mode == EncoderMode::Embedding).then(|| Embeddings::init(&cards, 1, &mut rng));
    Ok(QNetwork {
        mode,
        cardinalities: cards,
        embeddings,
        layers: [
            Dense::init(input_dim, HIDDEN_UNITS, &mut rng),
            Dense::init(HIDDEN_UNITS, HIDDEN_UNITS, &mut rng),
            Dense::init(HIDDEN_UNITS, ACTION_COUNT, &mut rng),
        ],
        dropout: DROPOUT,
    })
}

/// Highest Q among valid actions; ties go to the lowest index.
pub fn masked_argmax(q: &QValues, mask: &ActionMask) -> Result<usize> {
    let mut best: Option<usize> = None;
    for a in 0..ACTION_COUNT {
        if mask[a] && best.is_none_or(|b| q[a] > q[b]) {
            best = Some(a);
        }
    }
    best.ok_or(Error::EmptyMask)
}

/// ε-greedy: uniform over valid actions with probability ε, otherwise the
/// eval-mode masked argmax.
pub fn select_action(
    net: &QNetwork,
    features: &Features,
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    let valid: Vec<usize> = (0..ACTION_COUNT).filter(|&a| mask[a]).collect();
    if valid.is_empty() {
        return Err(Error::EmptyMask);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(valid[rng.random_range(0..valid.len())]);
    }
    masked_argmax(&net.q_values(features), mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> StateEncoder {
        StateEncoder::new(191)
    }

    fn features() -> Features {
        [Some(3), Some(1), Some(20), Some(0), Some(100), Some(1), Some(4)]
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_network(&encoder(), 7, 3).unwrap();
        let b = init_network(&encoder(), 7, 3).unwrap();
        assert_eq!(a, b);
        let c = init_network(&encoder(), 389, 3).unwrap();
        assert_eq!((c.layers[0].in_dim, c.layers[0].out_dim), (389, 128));
        assert!(init_network(&encoder(), 12, 3).is_err());
        a.validate().unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn zero_input_and_zero_weights() {
        let net = init_network(&encoder(), 7, 1).unwrap();
        let q = net.forward_input(&[0.0; 7], None).unwrap();
        assert!(q.iter().all(|v| v.is_finite()));
        let mut zero = net.clone();
        for p in zero.params_mut() {
            p.fill(0.0);
        }
        assert_eq!(zero.q_values(&features()), [0.0; 8]);
        assert!(matches!(
            net.forward_input(&[0.0; 6], None),
            Err(Error::Dimension { expected: 7, got: 6 })
        ));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let net = init_network(&encoder(), 389, 2).unwrap();
        assert_eq!(net.q_values(&features()), net.q_values(&features()));
    }

    #[test]
    fn sync_requires_same_shape() {
        let a = init_network(&encoder(), 7, 1).unwrap();
        let mut b = init_network(&encoder(), 7, 2).unwrap();
        b.copy_from(&a).unwrap();
        assert_eq!(a.q_values(&features()), b.q_values(&features()));
        let mut c = init_network(&encoder(), 389, 2).unwrap();
        assert!(c.copy_from(&a).is_err());
    }

    #[test]
    fn argmax_examples() {
        let mut q = [0.0; 8];
        q[0] = 5.0;
        q[1] = 1.0;
        assert_eq!(masked_argmax(&q, &[true; 8]).unwrap(), 0);
        q[0] = 9.0;
        q[1] = 2.0;
        let mut mask = [true; 8];
        mask[0] = false;
        assert_eq!(masked_argmax(&q, &mask).unwrap(), 1);
        assert!(matches!(masked_argmax(&q, &[false; 8]), Err(Error::EmptyMask)));
        assert_eq!(masked_argmax(&[1.0; 8], &[true; 8]).unwrap(), 0);
    }
}
