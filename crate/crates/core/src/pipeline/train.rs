use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, GraphDataset};
use crate::gnn::{init_params, sample_neighbors, GnnParams};
use crate::kg_topics::TopicNeighborhood;
use crate::numerics::{grad_check, AdamState, GradCheckOptions, Tensor};
use crate::objectives::{
    evaluate, evaluate_with_gradients, sample_negatives, LossBreakdown, LossWeights, StepInputs,
};
use crate::pipeline::checkpoint::Checkpoint;
use crate::pipeline::config::{SplitMode, TrainConfig};
use crate::pipeline::eval::{represent, zero_shot_accuracy};
use crate::pipeline::split::{make_split, partition_nodes, ClassSplit, NodePartition};
use crate::pipeline::{prepare, PreparedGraph};
use crate::{KmfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Loss breakdown per epoch, measured before that epoch's update.
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Validation accuracy of the kept parameters, when validation nodes exist.
    pub val_accuracy: Option<f64>,
}

/// Fixed pieces of the objective for one epoch.
pub fn step_inputs(
    prepared: &PreparedGraph,
    split: &ClassSplit,
    partition: &NodePartition,
    config: &TrainConfig,
    epoch: u64,
) -> Result<StepInputs> {
    let train_targets = partition
        .train
        .iter()
        .map(|&v| {
            split
                .train
                .iter()
                .position(|&c| c == prepared.labels[v])
                .ok_or_else(|| {
                    KmfError::Split(format!("training node {v} is not in a training class"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = split
        .train
        .iter()
        .map(|&c| prepared.csds.row(c).to_vec())
        .collect();
    Ok(StepInputs {
        h0: prepared.h0.clone(),
        h0_masked: prepared.masked_h0(config.seed, epoch),
        adjacency: sample_neighbors(&prepared.adjacency, config.neighbor_cap, config.seed, epoch)?,
        train_nodes: partition.train.clone(),
        train_targets,
        negatives: sample_negatives(&partition.train, config.negatives, config.seed, epoch)?,
        class_csds: Tensor::from_rows(&rows, prepared.dim())?,
        weights: LossWeights {
            lambda_contrastive: config.effective_lambda1(),
            lambda_geometric: config.effective_lambda2(),
            d_tau: config.geometric.d_tau,
            r_tau: config.geometric.r_tau,
            hinge: config.geometric.hinge,
        },
    })
}

/// Full-batch Adam on the joint objective. Mode II keeps the parameters with
/// the best validation accuracy (earliest on ties); mode I keeps the last.
pub fn train(
    prepared: &PreparedGraph,
    split: &ClassSplit,
    partition: &NodePartition,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if partition.train.is_empty() {
        return Err(KmfError::Split("no training nodes".into()));
    }
    let mut params = init_params(config.layers, prepared.dim(), config.seed)?;
    let mut adam = AdamState::new(config.learning_rate);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GnnParams)> = None;

    for epoch in 0..config.epochs {
        let inputs = step_inputs(prepared, split, partition, config, epoch as u64)?;
        let (losses, grads) = evaluate_with_gradients(&params, &inputs)?;
        if !losses.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(KmfError::Divergence { epoch });
        }
        metrics.push(EpochMetrics { epoch, losses });
        let mut tensors = params.to_tensors();
        adam.step(&mut tensors, &grads)?;
        params = GnnParams::from_tensors(prepared.dim(), &tensors)?;

        if split.mode == SplitMode::II {
            let hg = represent(&params, prepared)?;
            let acc = zero_shot_accuracy(
                &hg,
                &prepared.csds,
                &prepared.labels,
                &partition.val,
                &split.val,
            )?;
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, params.clone()));
            }
        }
    }

    let (best_epoch, val_accuracy) = match best {
        Some((acc, epoch, kept)) => {
            params = kept;
            (epoch, Some(acc))
        }
        None => {
            let acc = if partition.val.is_empty() {
                None
            } else {
                let hg = represent(&params, prepared)?;
                Some(zero_shot_accuracy(
                    &hg,
                    &prepared.csds,
                    &prepared.labels,
                    &partition.val,
                    &split.unseen,
                )?)
            };
            (config.epochs.saturating_sub(1), acc)
        }
    };

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            params,
            csds: prepared.csds.clone(),
            classes: prepared.classes.clone(),
            split: split.clone(),
        },
        metrics,
        best_epoch,
        val_accuracy,
    })
}

/// Result of [`fit`]: the run plus what it was trained on.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub prepared: PreparedGraph,
    pub partition: NodePartition,
    pub outcome: TrainOutcome,
}

/// Prepare, split and train in one call.
pub fn fit(
    dataset: &GraphDataset,
    nbhds: &[TopicNeighborhood],
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<FitResult> {
    let prepared = prepare(dataset, nbhds, table, config)?;
    let split = make_split(dataset.classes.len(), &config.split, config.seed)?;
    let partition = partition_nodes(
        dataset,
        &split,
        config.split.unseen_val_fraction,
        config.seed,
    );
    let outcome = train(&prepared, &split, &partition, config)?;
    Ok(FitResult {
        prepared,
        partition,
        outcome,
    })
}

/// Largest relative error between the analytic gradient of the joint
/// objective at freshly initialized parameters and central differences.
pub fn gradient_check(
    prepared: &PreparedGraph,
    split: &ClassSplit,
    partition: &NodePartition,
    config: &TrainConfig,
    opts: &GradCheckOptions,
) -> Result<f64> {
    let params = init_params(config.layers, prepared.dim(), config.seed)?;
    let inputs = step_inputs(prepared, split, partition, config, 0)?;
    let (_, grads) = evaluate_with_gradients(&params, &inputs)?;
    let loss =
        |t: &[Tensor]| Ok(evaluate(&GnnParams::from_tensors(prepared.dim(), t)?, &inputs)?.total);
    grad_check(loss, &params.to_tensors(), &grads, opts)
}

/// One `{"epoch", "L_c", "L_cl", "L_d", "L_r", "L"}` object per line.
pub fn write_metrics_jsonl(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KmfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in metrics {
        serde_json::to_writer(&mut w, m).map_err(|e| KmfError::io(path, e.into()))?;
        writeln!(w).map_err(|e| KmfError::io(path, e))?;
    }
    w.flush().map_err(|e| KmfError::io(path, e))
}
