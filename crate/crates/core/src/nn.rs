//! Minimal dense-network building blocks shared by the Q-network and the
//! intent model: fully connected layers, scalar/vector embeddings, inverted
//! dropout and the Adam optimizer. Everything is `f64`.
//!
//! Parameters and gradients are exchanged as flat groups (`Vec<Vec<f64>>`)
//! so that one optimizer and one finite-difference checker serve every
//! model.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, row-major weights of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), biases zero.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        out.extend_from_slice(&self.bias);
        let nonzero: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        if nonzero.len() * 4 < x.len() {
            // One-hot style input: touch only the active columns.
            for (o, acc) in out.iter_mut().enumerate() {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                *acc += nonzero.iter().map(|&i| row[i] * x[i]).sum::<f64>();
            }
        } else {
            for (o, acc) in out.iter_mut().enumerate() {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                *acc += dot(row, x);
            }
        }
    }

    /// Accumulates parameter gradients for upstream gradient `dy`; writes
    /// the input gradient into `dx` when requested.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        dx: Option<&mut Vec<f64>>,
    ) {
        let nonzero: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        let sparse = nonzero.len() * 4 < x.len();
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_b[o] += g;
            let row = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            if sparse {
                for &i in &nonzero {
                    row[i] += g * x[i];
                }
            } else {
                for (gw, &xi) in row.iter_mut().zip(x) {
                    *gw += g * xi;
                }
            }
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(self.in_dim, 0.0);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Draws an inverted-dropout mask: kept units scaled by 1/(1-p).
pub fn dropout_mask(len: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Per-feature lookup tables of `dim`-wide vectors. A missing value
/// (`None`) maps to zeros and receives no gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub dim: usize,
    pub cardinalities: Vec<usize>,
    pub tables: Vec<Vec<f64>>,
}

impl Embeddings {
    /// Entries ~ U(-1, 1).
    pub fn init(cardinalities: &[usize], dim: usize, rng: &mut impl Rng) -> Self {
        let tables = cardinalities
            .iter()
            .map(|&c| (0..c * dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Self {
            dim,
            cardinalities: cardinalities.to_vec(),
            tables,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dim * self.cardinalities.len()
    }

    pub fn lookup(&self, values: &[Option<u16>], out: &mut Vec<f64>) {
        out.clear();
        for (f, v) in values.iter().enumerate() {
            match v {
                Some(v) => {
                    let start = *v as usize * self.dim;
                    out.extend_from_slice(&self.tables[f][start..start + self.dim]);
                }
                None => out.extend(std::iter::repeat_n(0.0, self.dim)),
            }
        }
    }

    pub fn backward(&self, values: &[Option<u16>], dx: &[f64], grads: &mut [Vec<f64>]) {
        for (f, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let start = *v as usize * self.dim;
                for d in 0..self.dim {
                    grads[f][start + d] += dx[f * self.dim + d];
                }
            }
        }
    }
}

/// Fills a one-hot encoding of categorical values.
pub fn one_hot(values: &[Option<u16>], cardinalities: &[usize], out: &mut Vec<f64>) {
    out.clear();
    out.resize(cardinalities.iter().sum(), 0.0);
    let mut offset = 0;
    for (v, c) in values.iter().zip(cardinalities) {
        if let Some(v) = v {
            out[offset + *v as usize] = 1.0;
        }
        offset += c;
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (group, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[group];
            let v = &mut self.v[group];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_matches_hand_computation() {
        let layer = Dense {
            in_dim: 2,
            out_dim: 2,
            weights: vec![1.0, 2.0, -1.0, 0.5],
            bias: vec![0.1, -0.1],
        };
        let mut out = Vec::new();
        layer.forward(&[3.0, 4.0], &mut out);
        assert_eq!(out, vec![11.1, -1.1]);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mean = dropout_mask(n, 0.3, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![5.0, -3.0];
        let mut opt = Adam::new(0.1);
        for _ in 0..2000 {
            let g = vec![x.iter().map(|v| 2.0 * v).collect::<Vec<_>>()];
            opt.update(vec![x.as_mut_slice()], &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn embedding_missing_value_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Embeddings::init(&[3, 2], 2, &mut rng);
        let mut out = Vec::new();
        e.lookup(&[Some(2), None], &mut out);
        assert_eq!(out.len(), 4);
        assert_eq!(&out[..2], &e.tables[0][4..6]);
        assert_eq!(&out[2..], &[0.0, 0.0]);
    }
}
