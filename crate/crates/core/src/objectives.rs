//! Loss terms of the joint objective
//! `L = L_c + λ₁·L_cl + λ₂·(L_d + L_r)`.
//!
//! The free functions evaluate single terms on plain values. [`evaluate`]
//! records the complete objective for one training step on a tape and returns
//! the loss breakdown together with gradients for every GNN parameter.

use serde::{Deserialize, Serialize};

use crate::gnn::{forward_on_tape, AdjacencyIndex, GnnParams};
use crate::numerics::{self, log_sigmoid, sigmoid, Tape, Tensor, Var};
use crate::rng::{substream, NEGATIVES};
use crate::{KmfError, Result};

/// `φ(a, b) = σ(a·b)`.
pub fn critic(a: &[f64], b: &[f64]) -> f64 {
    sigmoid(numerics::dot(a, b))
}

/// `−[ln φ(anchor, positive) + Σ_q ln(1 − φ(anchor, q))]`.
pub fn pair_loss(anchor: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    let pos = log_sigmoid(numerics::dot(anchor, positive));
    let neg: f64 = negatives
        .iter()
        .map(|q| log_sigmoid(-numerics::dot(anchor, q)))
        .sum();
    -(pos + neg)
}

/// Both directions for one node: negatives for the original view come from
/// the original view, negatives for the masked view from the masked view.
pub fn contrastive_pair_loss(
    original: &[f64],
    masked: &[f64],
    negatives_original: &[&[f64]],
    negatives_masked: &[&[f64]],
) -> (f64, f64) {
    (
        pair_loss(original, masked, negatives_original),
        pair_loss(masked, original, negatives_masked),
    )
}

/// Draw `q` distinct negatives for each training node from the other training
/// nodes, using the `(seed, epoch, node)` sub-stream.
pub fn sample_negatives(
    train_nodes: &[usize],
    q: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if q == 0 {
        return Ok(vec![Vec::new(); train_nodes.len()]);
    }
    let available = train_nodes.len().saturating_sub(1);
    if q > available {
        return Err(KmfError::InsufficientNegatives {
            requested: q,
            available,
        });
    }
    Ok(train_nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut rng = substream(seed, NEGATIVES, epoch, v as u64);
            rand::seq::index::sample(&mut rng, available, q)
                .into_iter()
                .map(|k| train_nodes[if k >= i { k + 1 } else { k }])
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prototype {
    pub class: usize,
    pub vector: Vec<f64>,
}

/// Mean representation of each listed class over `train_nodes`.
pub fn prototypes(
    hg: &Tensor,
    labels: &[usize],
    train_nodes: &[usize],
    classes: &[usize],
) -> Result<Vec<Prototype>> {
    classes
        .iter()
        .map(|&c| {
            let members: Vec<usize> = train_nodes
                .iter()
                .copied()
                .filter(|&v| labels[v] == c)
                .collect();
            if members.is_empty() {
                return Err(KmfError::EmptyClass(c.to_string()));
            }
            let mut vector = vec![0.0; hg.cols()];
            for &v in &members {
                for (o, x) in vector.iter_mut().zip(hg.row(v)) {
                    *o += x;
                }
            }
            vector.iter_mut().for_each(|o| *o /= members.len() as f64);
            Ok(Prototype { class: c, vector })
        })
        .collect()
}

/// Discrepancy penalty of one pair: `| |m_p − m_l| − τ |`, or the hinge
/// `max(|m_p − m_l| − τ, 0)`.
fn pair_penalty(mp: f64, ml: f64, tau: f64, hinge: bool) -> f64 {
    let gap = (mp - ml).abs() - tau;
    if hinge {
        gap.max(0.0)
    } else {
        gap.abs()
    }
}

/// `(L_d, L_r)`: mean penalty over unordered class pairs on Euclidean distance
/// and cosine similarity between prototypes, against the same quantities
/// between CSDs.
pub fn geometric_loss(
    protos: &[Vec<f64>],
    csds: &[Vec<f64>],
    d_tau: f64,
    r_tau: f64,
    hinge: bool,
) -> Result<(f64, f64)> {
    if protos.len() != csds.len() {
        return Err(KmfError::Shape(format!(
            "{} prototypes vs {} CSDs",
            protos.len(),
            csds.len()
        )));
    }
    if protos.len() < 2 {
        return Err(KmfError::Config(
            "geometric constraints need at least two seen classes".into(),
        ));
    }
    let (mut ld, mut lr, mut pairs) = (0.0, 0.0, 0usize);
    for i in 0..protos.len() {
        for j in i + 1..protos.len() {
            let dp = numerics::euclidean_distance(&protos[i], &protos[j]);
            let dl = numerics::euclidean_distance(&csds[i], &csds[j]);
            let rp = numerics::cosine_similarity(&protos[i], &protos[j])?;
            let rl = numerics::cosine_similarity(&csds[i], &csds[j])?;
            ld += pair_penalty(dp, dl, d_tau, hinge);
            lr += pair_penalty(rp, rl, r_tau, hinge);
            pairs += 1;
        }
    }
    Ok((ld / pairs as f64, lr / pairs as f64))
}

/// Prediction score `ζ = h·s`.
pub fn score(h: &[f64], csd: &[f64]) -> f64 {
    numerics::dot(h, csd)
}

/// `−(1/|V|) Σ_v (1/|C|) ln softmax(scores_v)[target_v]`, keeping the
/// per-class `1/|C|` factor.
pub fn classification_loss(scores: &Tensor, targets: &[usize]) -> Result<f64> {
    if scores.rows() != targets.len() {
        return Err(KmfError::Shape(format!(
            "{} score rows vs {} targets",
            scores.rows(),
            targets.len()
        )));
    }
    let k = scores.cols() as f64;
    let mut total = 0.0;
    for (v, &t) in targets.iter().enumerate() {
        let probs = numerics::softmax_with_temperature(scores.row(v), 1.0);
        total += probs[t].ln() / k;
    }
    Ok(-total / targets.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_c")]
    pub classification: f64,
    #[serde(rename = "L_cl")]
    pub contrastive: f64,
    #[serde(rename = "L_d")]
    pub distance: f64,
    #[serde(rename = "L_r")]
    pub direction: f64,
    #[serde(rename = "L")]
    pub total: f64,
}

/// `L_c + λ₁·L_cl + λ₂·(L_d + L_r)`.
pub fn total_loss(
    classification: f64,
    contrastive: f64,
    distance: f64,
    direction: f64,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    classification + lambda1 * contrastive + lambda2 * (distance + direction)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_contrastive: f64,
    pub lambda_geometric: f64,
    pub d_tau: f64,
    pub r_tau: f64,
    pub hinge: bool,
}

/// Everything one training step holds fixed.
#[derive(Clone, Debug)]
pub struct StepInputs {
    /// Initial node states, `n × d`.
    pub h0: Tensor,
    /// Initial states of the topic-masked view.
    pub h0_masked: Tensor,
    pub adjacency: AdjacencyIndex,
    pub train_nodes: Vec<usize>,
    /// Position of each training node's class within `class_csds`.
    pub train_targets: Vec<usize>,
    /// Negatives per training node (node indices).
    pub negatives: Vec<Vec<usize>>,
    /// CSDs of the training classes, `k × d`.
    pub class_csds: Tensor,
    pub weights: LossWeights,
}

struct Recorded {
    breakdown: LossBreakdown,
    loss: Var,
    params: Vec<(Var, Var)>,
}

fn record(tape: &mut Tape, params: &GnnParams, inputs: &StepInputs) -> Result<Recorded> {
    let n_train = inputs.train_nodes.len();
    let k = inputs.class_csds.rows();
    if n_train == 0 {
        return Err(KmfError::Split("no training nodes".into()));
    }
    if inputs.train_targets.len() != n_train || inputs.negatives.len() != n_train {
        return Err(KmfError::Shape(
            "training targets/negatives misaligned with training nodes".into(),
        ));
    }

    let vars = params.record(tape);
    let h0 = tape.constant(inputs.h0.clone());
    let hg = forward_on_tape(tape, h0, &inputs.adjacency, &vars)?;

    // Classification.
    let csd = tape.constant(inputs.class_csds.clone());
    let h_train = tape.gather_rows(hg, &inputs.train_nodes)?;
    let scores = tape.matmul_nt(h_train, csd)?;
    let logp = tape.log_softmax_rows(scores, 1.0);
    let mut onehot = Tensor::zeros(&[n_train, k]);
    let coef = -1.0 / (n_train as f64 * k as f64);
    for (v, &t) in inputs.train_targets.iter().enumerate() {
        onehot.row_mut(v)[t] = coef;
    }
    let y = tape.constant(onehot);
    let picked = tape.mul(logp, y)?;
    let l_c = tape.sum(picked);

    // Contrastive, both directions.
    let h0m = tape.constant(inputs.h0_masked.clone());
    let hgm = forward_on_tape(tape, h0m, &inputs.adjacency, &vars)?;
    let a = tape.gather_rows(hg, &inputs.train_nodes)?;
    let b = tape.gather_rows(hgm, &inputs.train_nodes)?;
    let pos = tape.row_dot(a, b)?;
    let lpos = tape.log_sigmoid(pos);
    let pos_sum = tape.sum(lpos);
    let mut terms = vec![pos_sum, pos_sum];
    let (anchors, negs): (Vec<usize>, Vec<usize>) = inputs
        .train_nodes
        .iter()
        .zip(&inputs.negatives)
        .flat_map(|(&v, qs)| qs.iter().map(move |&q| (v, q)))
        .unzip();
    if !anchors.is_empty() {
        for view in [hg, hgm] {
            let av = tape.gather_rows(view, &anchors)?;
            let qv = tape.gather_rows(view, &negs)?;
            let d = tape.row_dot(av, qv)?;
            let nd = tape.scale(d, -1.0);
            let l = tape.log_sigmoid(nd);
            terms.push(tape.sum(l));
        }
    }
    let stacked = tape.stack(&terms)?;
    let summed = tape.sum(stacked);
    let l_cl = tape.scale(summed, -1.0 / n_train as f64);

    // Geometric constraints.
    let w = inputs.weights;
    let (l_d, l_r) = if k >= 2 {
        let mut avg = Tensor::zeros(&[k, inputs.h0.rows()]);
        let mut counts = vec![0usize; k];
        for &t in &inputs.train_targets {
            counts[t] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(KmfError::EmptyClass(c.to_string()));
        }
        for (&v, &t) in inputs.train_nodes.iter().zip(&inputs.train_targets) {
            avg.row_mut(t)[v] += 1.0 / counts[t] as f64;
        }
        let avg = tape.constant(avg);
        let protos = tape.matmul(avg, hg)?;
        let rows: Vec<Var> = (0..k)
            .map(|c| tape.gather_rows(protos, &[c]))
            .collect::<Result<_>>()?;
        let (mut dist_terms, mut dir_terms) = (Vec::new(), Vec::new());
        for i in 0..k {
            for j in i + 1..k {
                let (si, sj) = (inputs.class_csds.row(i), inputs.class_csds.row(j));
                let ml_d = numerics::euclidean_distance(si, sj);
                let ml_r = numerics::cosine_similarity(si, sj)?;
                let dp = tape.euclidean(rows[i], rows[j])?;
                dist_terms.push(penalty_on_tape(tape, dp, ml_d, w.d_tau, w.hinge));
                let rp = tape.cosine(rows[i], rows[j])?;
                dir_terms.push(penalty_on_tape(tape, rp, ml_r, w.r_tau, w.hinge));
            }
        }
        let ds = tape.stack(&dist_terms)?;
        let rs = tape.stack(&dir_terms)?;
        (tape.mean(ds)?, tape.mean(rs)?)
    } else {
        if w.lambda_geometric > 0.0 {
            return Err(KmfError::Config(
                "geometric constraints need at least two training classes".into(),
            ));
        }
        let z = tape.constant(Tensor::scalar(0.0));
        (z, z)
    };

    let geo = tape.add(l_d, l_r)?;
    let geo = tape.scale(geo, w.lambda_geometric);
    let cl = tape.scale(l_cl, w.lambda_contrastive);
    let partial = tape.add(l_c, cl)?;
    let loss = tape.add(partial, geo)?;

    let breakdown = LossBreakdown {
        classification: tape.scalar(l_c),
        contrastive: tape.scalar(l_cl),
        distance: tape.scalar(l_d),
        direction: tape.scalar(l_r),
        total: tape.scalar(loss),
    };
    Ok(Recorded {
        breakdown,
        loss,
        params: vars,
    })
}

fn penalty_on_tape(tape: &mut Tape, measured: Var, target: f64, tau: f64, hinge: bool) -> Var {
    let diff = tape.add_const(measured, -target);
    let gap = tape.abs(diff);
    let shifted = tape.add_const(gap, -tau);
    if hinge {
        tape.relu(shifted)
    } else {
        tape.abs(shifted)
    }
}

/// Loss breakdown at `params`.
pub fn evaluate(params: &GnnParams, inputs: &StepInputs) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    Ok(record(&mut tape, params, inputs)?.breakdown)
}

/// Loss breakdown and gradients in [`GnnParams::to_tensors`] order.
pub fn evaluate_with_gradients(
    params: &GnnParams,
    inputs: &StepInputs,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let rec = record(&mut tape, params, inputs)?;
    let grads = tape.backward(rec.loss)?;
    let tensors = rec
        .params
        .iter()
        .flat_map(|&(w, t)| [w, t])
        .map(|v| grads.get_or_zeros(v, tape.value(v)))
        .collect();
    Ok((rec.breakdown, tensors))
}
