//! The classifier `f(x) = W·g(x)`: a ReLU MLP feature extractor `g` and a
//! linear head `W` whose rows are per-class weight vectors.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, NodeId};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// One affine layer; `weight` is `in×out`, `bias` is `1×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classes: usize,
}

impl ModelConfig {
    /// `input → 128 → 64` ReLU features and a linear head.
    pub fn standard(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden: alloc::vec![128],
            feature_dim: 64,
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    layers: Vec<Dense>,
    head: Tensor,
}

impl ClassifierParams {
    /// He-normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        if config.input_dim == 0 || config.feature_dim == 0 {
            return Err(invalid("model", "dimensions must be positive"));
        }
        if config.classes < 2 {
            return Err(Error::InvalidArity {
                classes: config.classes,
            });
        }
        let mut he = |fan_in: usize, rows: usize, cols: usize| {
            let sd = libm::sqrt(2.0 / fan_in as f64);
            let data = (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * sd
                })
                .collect();
            Tensor::from_vec(rows, cols, data)
        };
        let mut dims = Vec::with_capacity(config.hidden.len() + 2);
        dims.push(config.input_dim);
        dims.extend(config.hidden.iter().copied());
        dims.push(config.feature_dim);
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: he(w[0], w[0], w[1]),
                bias: Tensor::zeros(1, w[1]),
            })
            .collect();
        let head = he(config.feature_dim, config.classes, config.feature_dim);
        Self::from_parts(layers, head)
    }

    pub fn from_parts(layers: Vec<Dense>, head: Tensor) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("model", "at least one feature layer is required"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.shape() != [1, layer.output_dim()] {
                return Err(Error::ShapeMismatch {
                    context: "layer bias",
                    expected: [1, layer.output_dim()],
                    found: layer.bias.shape(),
                });
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::ShapeMismatch {
                    context: "layer chain",
                    expected: [layers[i - 1].output_dim(), layer.output_dim()],
                    found: layer.weight.shape(),
                });
            }
        }
        let feature_dim = layers[layers.len() - 1].output_dim();
        if head.cols() != feature_dim {
            return Err(Error::ShapeMismatch {
                context: "head",
                expected: [head.rows(), feature_dim],
                found: head.shape(),
            });
        }
        if head.rows() < 2 {
            return Err(Error::InvalidArity {
                classes: head.rows(),
            });
        }
        Ok(Self { layers, head })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.head.cols()
    }

    pub fn classes(&self) -> usize {
        self.head.rows()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `l × d_f`, row `j` is `w_j`.
    pub fn head(&self) -> &Tensor {
        &self.head
    }

    /// Parameter tensors in a fixed order: each layer's weight then bias, then the head.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.head);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Single-instance feature vector `g(x)`.
    pub fn extract_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Tensor::from_vec(1, x.len(), x.to_vec());
        Ok(self.features(&batch)?.into_data())
    }

    /// Batched `g(X)` for an `n × d_in` input.
    pub fn features(&self, xs: &Tensor) -> Result<Tensor> {
        if xs.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "features input",
                expected: [xs.rows(), self.input_dim()],
                found: xs.shape(),
            });
        }
        let mut h = xs.clone();
        for layer in &self.layers {
            let mut next = crate::tensor::matmul_raw(&h, &layer.weight);
            for r in 0..next.rows() {
                for (v, b) in next.row_mut(r).iter_mut().zip(layer.bias.data()) {
                    *v = (*v + b).max(0.0);
                }
            }
            h = next;
        }
        Ok(h)
    }

    /// Batched logits `g(X)·Wᵀ`.
    pub fn logits(&self, xs: &Tensor) -> Result<Tensor> {
        let a = self.features(xs)?;
        Ok(crate::tensor::matmul_nt(&a, &self.head))
    }

    pub fn probabilities(&self, xs: &Tensor) -> Result<Tensor> {
        let mut z = self.logits(xs)?;
        for r in 0..z.rows() {
            let p = math::softmax(z.row(r));
            z.row_mut(r).copy_from_slice(&p);
        }
        Ok(z)
    }

    /// Arg-max class per row.
    pub fn predict(&self, xs: &Tensor) -> Result<Vec<usize>> {
        let z = self.logits(xs)?;
        Ok((0..z.rows()).map(|r| math::argmax(z.row(r))).collect())
    }

    /// Deep copy used for stop-gradient pseudo-targets.
    pub fn snapshot_frozen(&self) -> FrozenParams {
        FrozenParams(self.clone())
    }

    /// Registers every tensor as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let layers = self
            .layers
            .iter()
            .map(|l| (g.param(l.weight.clone()), g.param(l.bias.clone())))
            .collect();
        let head = g.param(self.head.clone());
        BoundParams { layers, head }
    }
}

/// `z = W a` for a single feature vector.
pub fn logits(a: &[f64], head: &Tensor) -> Result<Vec<f64>> {
    if a.len() != head.cols() {
        return Err(Error::ShapeMismatch {
            context: "logits",
            expected: [head.rows(), head.cols()],
            found: [1, a.len()],
        });
    }
    Ok((0..head.rows()).map(|j| math::dot(head.row(j), a)).collect())
}

/// An immutable parameter snapshot. It exposes read access only and is
/// never registered in a [`Graph`], so nothing computed from it carries gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenParams(ClassifierParams);

impl FrozenParams {
    pub fn params(&self) -> &ClassifierParams {
        &self.0
    }
}

/// Graph handles for a bound [`ClassifierParams`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    layers: Vec<(NodeId, NodeId)>,
    head: NodeId,
}

impl BoundParams {
    pub fn head(&self) -> NodeId {
        self.head
    }

    /// Node ids in the same order as [`ClassifierParams::tensors`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        out.push(self.head);
        out
    }

    pub fn features(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let mut h = x;
        for &(w, b) in &self.layers {
            let lin = g.matmul(h, w);
            let shifted = g.add_row(lin, b);
            h = g.relu(shifted);
        }
        h
    }

    /// `a·Wᵀ` for an `n × d_f` feature node.
    pub fn logits(&self, g: &mut Graph, a: NodeId) -> NodeId {
        let wt = g.transpose(self.head);
        g.matmul(a, wt)
    }
}
