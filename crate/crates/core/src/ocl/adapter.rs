use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Scalar;

use super::OclError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Slope 0.01 below zero.
    LeakyRelu,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu if x < T::zero() => x * T::from_f64_lossy(0.01),
            Activation::LeakyRelu => x,
        }
    }

    fn derivative<T: Scalar>(self, x: T) -> T {
        match (self, x > T::zero()) {
            (_, true) => T::one(),
            (Activation::Relu, false) => T::zero(),
            (Activation::LeakyRelu, false) => T::from_f64_lossy(0.01),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::LeakyRelu),
            _ => None,
        }
    }
}

/// Two-layer MLP mapping expert features into the base encoder's space.
#[derive(Clone, Debug, PartialEq)]
pub struct Adapter<T> {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// `hidden_dim x in_dim`, row-major.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `out_dim x hidden_dim`, row-major.
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache<T> {
    pub pre_activation: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterGrads<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Scalar> AdapterGrads<T> {
    pub fn zeros_like(a: &Adapter<T>) -> Self {
        Self {
            w1: vec![T::zero(); a.w1.len()],
            b1: vec![T::zero(); a.b1.len()],
            w2: vec![T::zero(); a.w2.len()],
            b2: vec![T::zero(); a.b2.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }
}

impl<T: Scalar> Adapter<T> {
    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden_dim,
            out_dim,
            activation: Activation::Relu,
            w1: vec![T::zero(); hidden_dim * in_dim],
            b1: vec![T::zero(); hidden_dim],
            w2: vec![T::zero(); out_dim * hidden_dim],
            b2: vec![T::zero(); out_dim],
        }
    }

    /// Both layers set to the identity matrix (square, all dims equal).
    pub fn identity(dim: usize) -> Self {
        let mut a = Self::zeros(dim, dim, dim);
        for i in 0..dim {
            a.w1[i * dim + i] = T::one();
            a.w2[i * dim + i] = T::one();
        }
        a
    }

    /// He-uniform first layer, Glorot-uniform second layer, zero biases.
    pub fn init(in_dim: usize, hidden_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Self::zeros(in_dim, hidden_dim, out_dim);
        let b1 = (6.0 / in_dim as f64).sqrt();
        a.w1.iter_mut().for_each(|w| *w = T::from_f64_lossy(rng.random_range(-b1..b1)));
        let b2 = (6.0 / (hidden_dim + out_dim) as f64).sqrt();
        a.w2.iter_mut().for_each(|w| *w = T::from_f64_lossy(rng.random_range(-b2..b2)));
        a
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters in the order `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<T> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<(), OclError> {
        if params.len() != self.parameter_count() {
            return Err(OclError::DimensionMismatch {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<ForwardCache<T>, OclError> {
        if x.len() != self.in_dim {
            return Err(OclError::DimensionMismatch {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        let pre_activation: Vec<T> = self
            .w1
            .chunks(self.in_dim)
            .zip(&self.b1)
            .map(|(row, &b)| crate::scalar::dot(row, x) + b)
            .collect();
        let hidden: Vec<T> = pre_activation.iter().map(|&z| self.activation.apply(z)).collect();
        let output = self
            .w2
            .chunks(self.hidden_dim.max(1))
            .zip(&self.b2)
            .map(|(row, &b)| crate::scalar::dot(row, &hidden) + b)
            .collect();
        Ok(ForwardCache {
            pre_activation,
            hidden,
            output,
        })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, OclError> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Parameter gradients given the gradient of a scalar objective w.r.t. the output.
    pub fn backward(&self, x: &[T], cache: &ForwardCache<T>, grad_out: &[T]) -> AdapterGrads<T> {
        let mut g = AdapterGrads::zeros_like(self);
        let h = self.hidden_dim;
        let mut grad_hidden = vec![T::zero(); h];
        for (o, &go) in grad_out.iter().enumerate() {
            g.b2[o] = go;
            let row = &self.w2[o * h..(o + 1) * h];
            for j in 0..h {
                g.w2[o * h + j] = go * cache.hidden[j];
                grad_hidden[j] += go * row[j];
            }
        }
        for (j, (&gh, &pre)) in grad_hidden.iter().zip(&cache.pre_activation).enumerate() {
            let gz = gh * self.activation.derivative(pre);
            g.b1[j] = gz;
            for (i, &xi) in x.iter().enumerate() {
                g.w1[j * self.in_dim + i] = gz * xi;
            }
        }
        g
    }
}
