//! Gated message passing:
//! `H'_v = σ(ξ·W·H_v + (1 − ξ)·mean_{u∈N(v)} W·H_u)` with `ξ = σ(θ)` per layer.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::numerics::{Tape, Tensor, Var};
use crate::rng::{substream, INIT, SAMPLING};
use crate::{KmfError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GnnLayer {
    /// Square `d × d` filter.
    pub weight: Tensor,
    /// Unconstrained gate pre-activation; the gate is `σ(gate_logit)`.
    pub gate_logit: f64,
}

impl GnnLayer {
    pub fn gate(&self) -> f64 {
        crate::numerics::sigmoid(self.gate_logit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub dim: usize,
    pub layers: Vec<GnnLayer>,
}

/// Glorot-uniform filters in `±√(6 / 2d)` and zero gate logits (gate 0.5).
pub fn init_params(layers: usize, dim: usize, seed: u64) -> Result<GnnParams> {
    if dim == 0 {
        return Err(KmfError::Config("layer dimension must be positive".into()));
    }
    let bound = (6.0 / (2.0 * dim as f64)).sqrt();
    let layers = (0..layers)
        .map(|l| {
            let mut rng = substream(seed, INIT, l as u64, 0);
            let data = (0..dim * dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            GnnLayer {
                weight: Tensor::matrix(dim, dim, data).expect("square"),
                gate_logit: 0.0,
            }
        })
        .collect();
    Ok(GnnParams { dim, layers })
}

impl GnnParams {
    /// `[W₀, θ₀, W₁, θ₁, …]` with each θ as a scalar tensor.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), Tensor::scalar(l.gate_logit)])
            .collect()
    }

    pub fn from_tensors(dim: usize, tensors: &[Tensor]) -> Result<Self> {
        if !tensors.len().is_multiple_of(2) {
            return Err(KmfError::Shape(
                "parameter list must alternate weight and gate".into(),
            ));
        }
        let layers = tensors
            .chunks_exact(2)
            .map(|pair| {
                if pair[0].shape() != [dim, dim] || pair[1].len() != 1 {
                    return Err(KmfError::Shape(format!(
                        "layer shapes {:?}, {:?} for dim {dim}",
                        pair[0].shape(),
                        pair[1].shape()
                    )));
                }
                Ok(GnnLayer {
                    weight: pair[0].clone(),
                    gate_logit: pair[1].item(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Record every parameter on `tape` as trainable, in [`Self::to_tensors`] order.
    pub fn record(&self, tape: &mut Tape) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|l| {
                (
                    tape.param(l.weight.clone()),
                    tape.param(Tensor::scalar(l.gate_logit)),
                )
            })
            .collect()
    }
}

/// Neighbor lists after capping.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyIndex {
    pub neighbors: Arc<Vec<Vec<usize>>>,
    pub cap: usize,
}

impl AdjacencyIndex {
    /// Every neighbor, no sampling.
    pub fn full(adjacency: Vec<Vec<usize>>) -> Self {
        let cap = adjacency.iter().map(Vec::len).max().unwrap_or(0).max(1);
        Self {
            neighbors: Arc::new(adjacency),
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Keep all neighbors of nodes with degree `<= cap`; otherwise draw `cap`
/// without replacement from the node's `(seed, epoch, node)` sub-stream.
/// Self-loops are dropped. Sampled lists are sorted.
pub fn sample_neighbors(
    adjacency: &[Vec<usize>],
    cap: usize,
    seed: u64,
    epoch: u64,
) -> Result<AdjacencyIndex> {
    if cap == 0 {
        return Err(KmfError::Config("neighbor cap must be at least 1".into()));
    }
    let neighbors = adjacency
        .iter()
        .enumerate()
        .map(|(v, list)| {
            let list: Vec<usize> = list.iter().copied().filter(|&u| u != v).collect();
            if list.len() <= cap {
                return list;
            }
            let mut rng = substream(seed, SAMPLING, epoch, v as u64);
            let mut picked: Vec<usize> = sample(&mut rng, list.len(), cap)
                .into_iter()
                .map(|i| list[i])
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    Ok(AdjacencyIndex {
        neighbors: Arc::new(neighbors),
        cap,
    })
}

/// Record the message-passing stack on `tape`. With no layers the input is
/// returned unchanged.
pub fn forward_on_tape(
    tape: &mut Tape,
    h0: Var,
    adj: &AdjacencyIndex,
    layers: &[(Var, Var)],
) -> Result<Var> {
    let dim = tape.value(h0).cols();
    let mut h = h0;
    for &(w, theta) in layers {
        let wt = tape.value(w);
        if wt.rows() != dim || wt.cols() != dim {
            return Err(KmfError::Shape(format!(
                "filter {:?} for node dim {dim}",
                wt.shape()
            )));
        }
        let z = tape.matmul_nt(h, w)?;
        let m = tape.neighbor_mean(z, adj.neighbors.clone())?;
        let gate = tape.sigmoid(theta);
        let self_term = tape.scale_by(z, gate)?;
        let neg_gate = tape.scale(gate, -1.0);
        let one_minus = tape.add_const(neg_gate, 1.0);
        let neighbor_term = tape.scale_by(m, one_minus)?;
        let pre = tape.add(self_term, neighbor_term)?;
        h = tape.sigmoid(pre);
    }
    Ok(h)
}

/// Final node representations for an `n × d` input.
pub fn forward(h0: &Tensor, adj: &AdjacencyIndex, params: &GnnParams) -> Result<Tensor> {
    if h0.cols() != params.dim {
        return Err(KmfError::Shape(format!(
            "node dim {} vs filter dim {}",
            h0.cols(),
            params.dim
        )));
    }
    if h0.rows() != adj.len() {
        return Err(KmfError::Shape(format!(
            "{} node rows vs {} neighbor lists",
            h0.rows(),
            adj.len()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.constant(h0.clone());
    let layers: Vec<(Var, Var)> = params
        .layers
        .iter()
        .map(|l| {
            (
                tape.constant(l.weight.clone()),
                tape.constant(Tensor::scalar(l.gate_logit)),
            )
        })
        .collect();
    let out = forward_on_tape(&mut tape, x, adj, &layers)?;
    Ok(tape.value(out).clone())
}
