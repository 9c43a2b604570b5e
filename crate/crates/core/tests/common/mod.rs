//! Toy graph shared by the integration tests, plus a loop-only re-evaluation
//! of the objective that shares no code with the library's tape.
#![allow(dead_code, clippy::needless_range_loop)]

use kmf_core::gnn::{init_params, AdjacencyIndex, GnnParams};
use kmf_core::numerics::Tensor;
use kmf_core::objectives::{LossWeights, StepInputs};

pub const DIM: usize = 4;

fn wave(i: usize, a: f64, b: f64) -> f64 {
    (i as f64 * a + b).sin()
}

/// Six nodes, three classes with two nodes each, a ring with one chord, two
/// layers and two negatives per node.
pub fn toy_inputs(lambda1: f64, lambda2: f64, hinge: bool) -> StepInputs {
    let n = 6;
    let h0: Vec<f64> = (0..n * DIM).map(|i| 0.5 * wave(i, 0.71, 0.3)).collect();
    let masked: Vec<f64> = h0
        .iter()
        .enumerate()
        .map(|(i, &x)| if i % 5 == 2 { 0.0 } else { x })
        .collect();
    let adjacency = vec![
        vec![1, 5, 3],
        vec![0, 2],
        vec![1, 3],
        vec![2, 4, 0],
        vec![3, 5],
        vec![4, 0],
    ];
    let csd: Vec<f64> = (0..3 * DIM).map(|i| wave(i, 1.37, 0.9)).collect();
    StepInputs {
        h0: Tensor::matrix(n, DIM, h0).unwrap(),
        h0_masked: Tensor::matrix(n, DIM, masked).unwrap(),
        adjacency: AdjacencyIndex::full(adjacency),
        train_nodes: (0..n).collect(),
        train_targets: vec![0, 1, 2, 0, 1, 2],
        negatives: vec![
            vec![1, 2],
            vec![3, 5],
            vec![0, 4],
            vec![5, 1],
            vec![2, 3],
            vec![4, 0],
        ],
        class_csds: Tensor::matrix(3, DIM, csd).unwrap(),
        weights: LossWeights {
            lambda_contrastive: lambda1,
            lambda_geometric: lambda2,
            d_tau: 0.05,
            r_tau: 0.02,
            hinge,
        },
    }
}

/// Two layers with non-trivial gates.
pub fn toy_params(seed: u64) -> GnnParams {
    let mut p = init_params(2, DIM, seed).unwrap();
    p.layers[0].gate_logit = 0.4;
    p.layers[1].gate_logit = -0.7;
    p
}

pub struct Naive {
    pub l_c: f64,
    pub l_cl: f64,
    pub l_d: f64,
    pub l_r: f64,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn naive_forward(h0: &Tensor, adj: &[Vec<usize>], params: &GnnParams) -> Vec<Vec<f64>> {
    let n = h0.rows();
    let d = h0.cols();
    let mut h: Vec<Vec<f64>> = (0..n).map(|v| h0.row(v).to_vec()).collect();
    for layer in &params.layers {
        let xi = sig(layer.gate_logit);
        let mut z = vec![vec![0.0; d]; n];
        for v in 0..n {
            for i in 0..d {
                for j in 0..d {
                    z[v][i] += layer.weight.get(i, j) * h[v][j];
                }
            }
        }
        let mut next = vec![vec![0.0; d]; n];
        for v in 0..n {
            for i in 0..d {
                let mut m = 0.0;
                for &u in &adj[v] {
                    m += z[u][i];
                }
                if !adj[v].is_empty() {
                    m /= adj[v].len() as f64;
                }
                next[v][i] = sig(xi * z[v][i] + (1.0 - xi) * m);
            }
        }
        h = next;
    }
    h
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dotp(a, b) / (dotp(a, a).sqrt() * dotp(b, b).sqrt())
}

fn penalty(mp: f64, ml: f64, tau: f64, hinge: bool) -> f64 {
    let g = (mp - ml).abs() - tau;
    if hinge {
        g.max(0.0)
    } else {
        g.abs()
    }
}

/// Every term written out as nested loops.
pub fn naive_losses(params: &GnnParams, inputs: &StepInputs) -> Naive {
    let adj: &Vec<Vec<usize>> = &inputs.adjacency.neighbors;
    let h = naive_forward(&inputs.h0, adj, params);
    let hm = naive_forward(&inputs.h0_masked, adj, params);
    let k = inputs.class_csds.rows();
    let csd: Vec<&[f64]> = (0..k).map(|c| inputs.class_csds.row(c)).collect();
    let nt = inputs.train_nodes.len() as f64;

    let mut l_c = 0.0;
    for (i, &v) in inputs.train_nodes.iter().enumerate() {
        let scores: Vec<f64> = csd.iter().map(|s| dotp(&h[v], s)).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for c in 0..k {
            let y = if c == inputs.train_targets[i] {
                1.0
            } else {
                0.0
            };
            l_c += y * (scores[c].exp() / z).ln() / k as f64;
        }
    }
    l_c = -l_c / nt;

    let mut l_cl = 0.0;
    for (i, &v) in inputs.train_nodes.iter().enumerate() {
        for (a, b) in [(&h, &hm), (&hm, &h)] {
            let mut t = sig(dotp(&a[v], &b[v])).ln();
            for &q in &inputs.negatives[i] {
                t += (1.0 - sig(dotp(&a[v], &a[q]))).ln();
            }
            l_cl -= t;
        }
    }
    l_cl /= nt;

    let mut protos = vec![vec![0.0; h[0].len()]; k];
    let mut counts = vec![0.0; k];
    for (i, &v) in inputs.train_nodes.iter().enumerate() {
        let c = inputs.train_targets[i];
        counts[c] += 1.0;
        for j in 0..h[v].len() {
            protos[c][j] += h[v][j];
        }
    }
    for c in 0..k {
        for x in protos[c].iter_mut() {
            *x /= counts[c];
        }
    }
    let w = inputs.weights;
    let (mut l_d, mut l_r, mut pairs) = (0.0, 0.0, 0.0);
    for i in 0..k {
        for j in i + 1..k {
            l_d += penalty(
                dist(&protos[i], &protos[j]),
                dist(csd[i], csd[j]),
                w.d_tau,
                w.hinge,
            );
            l_r += penalty(
                cos(&protos[i], &protos[j]),
                cos(csd[i], csd[j]),
                w.r_tau,
                w.hinge,
            );
            pairs += 1.0;
        }
    }
    Naive {
        l_c,
        l_cl,
        l_d: l_d / pairs,
        l_r: l_r / pairs,
    }
}

pub mod bench {
    use kmf_core::kg_topics::{build_topic_neighborhood, KnowledgeGraph, TopicNeighborhood};
    use kmf_core::pipeline::synth::{synth_generate, SynthConfig, SynthData};
    use kmf_core::pipeline::train::{fit, FitResult};
    use kmf_core::pipeline::{Ablation, TrainConfig};

    pub const SEEDS: [u64; 3] = [0, 1, 2];

    /// Training settings of the planted-topic benchmark.
    pub fn config(variant: &str, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            negatives: 0,
            temperature: 5.0,
            seed,
            ablation: Ablation::variant(variant).unwrap(),
            ..TrainConfig::default()
        }
    }

    pub fn data(seed: u64) -> SynthData {
        synth_generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    pub fn neighborhoods(d: &SynthData, cfg: &TrainConfig) -> Vec<TopicNeighborhood> {
        let kg = KnowledgeGraph::from_edges(d.kg.clone());
        d.labels
            .iter()
            .map(|(c, p)| {
                build_topic_neighborhood(&kg, c, p, cfg.radius, cfg.percent, &d.table).unwrap()
            })
            .collect()
    }

    pub fn run(d: &SynthData, cfg: &TrainConfig) -> FitResult {
        fit(&d.dataset().unwrap(), &neighborhoods(d, cfg), &d.table, cfg).unwrap()
    }
}
