//! Python bindings: dataset generation, topic extraction, training and
//! evaluation over the same files the `kmf` command reads.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kmf_core::corpus::load_embedding_table;
use kmf_core::kg_topics::{
    build_topic_neighborhood, load_kg, load_labels, write_neighborhoods_jsonl,
};
use kmf_core::pipeline::eval::{represent, zero_shot_accuracy};
use kmf_core::pipeline::recsys::ranking_metrics as ranking;
use kmf_core::pipeline::synth::{synth_generate, SynthConfig};
use kmf_core::pipeline::train::{fit, write_metrics_jsonl};
use kmf_core::pipeline::{
    load_inputs, partition_nodes, prepare, Ablation, Checkpoint, TrainConfig,
};
use kmf_core::KmfError;

fn err(e: KmfError) -> PyErr {
    let mut message = e.to_string();
    let mut cause = std::error::Error::source(&e);
    while let Some(c) = cause {
        message.push_str(&format!(": {c}"));
        cause = c.source();
    }
    PyValueError::new_err(message)
}

#[pyfunction]
fn softmax(values: Vec<f64>, temperature: f64) -> Vec<f64> {
    kmf_core::numerics::softmax_with_temperature(&values, temperature)
}

/// Write a planted-topic dataset to `out_dir`; returns `(nodes, edges)`.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 0, nodes_per_class = 100))]
fn synth(out_dir: &str, seed: u64, nodes_per_class: usize) -> PyResult<(usize, usize)> {
    let data = synth_generate(&SynthConfig {
        seed,
        nodes_per_class,
        ..SynthConfig::default()
    })
    .map_err(err)?;
    data.write(Path::new(out_dir)).map_err(err)?;
    Ok((data.nodes.len(), data.edges.len()))
}

/// Build every label's topic neighborhood and write them as JSON lines.
#[pyfunction]
#[pyo3(signature = (kg, labels, emb, out, radius = 2, percent = 25.0))]
fn build_topics(
    kg: &str,
    labels: &str,
    emb: &str,
    out: &str,
    radius: usize,
    percent: f64,
) -> PyResult<usize> {
    let kg = load_kg(Path::new(kg)).map_err(err)?;
    let table = load_embedding_table(Path::new(emb)).map_err(err)?;
    let nbhds = load_labels(Path::new(labels))
        .map_err(err)?
        .iter()
        .map(|(id, phrase)| build_topic_neighborhood(&kg, id, phrase, radius, percent, &table))
        .collect::<kmf_core::Result<Vec<_>>>()
        .map_err(err)?;
    write_neighborhoods_jsonl(Path::new(out), &nbhds).map_err(err)?;
    Ok(nbhds.len())
}

fn config_from(
    config: Option<&str>,
    seed: Option<u64>,
    variant: Option<&str>,
) -> PyResult<TrainConfig> {
    let mut cfg = match config {
        Some(text) => TrainConfig::from_toml_str(text).map_err(err)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = variant {
        cfg.ablation = Ablation::variant(v).map_err(err)?;
    }
    Ok(cfg)
}

/// Train on a dataset directory and write `checkpoint.kmf` and
/// `metrics.jsonl` into `out_dir`. `config` is key = value text.
#[pyfunction]
#[pyo3(signature = (dataset, topics, emb, out_dir, config = None, seed = None, variant = None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    dataset: &str,
    topics: &str,
    emb: &str,
    out_dir: &str,
    config: Option<&str>,
    seed: Option<u64>,
    variant: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config_from(config, seed, variant)?;
    let inputs =
        load_inputs(Path::new(dataset), Path::new(topics), Path::new(emb), &cfg).map_err(err)?;
    let run = fit(&inputs.dataset, &inputs.nbhds, &inputs.table, &cfg).map_err(err)?;
    let dir = Path::new(out_dir);
    std::fs::create_dir_all(dir)
        .map_err(|e| PyValueError::new_err(format!("creating {}: {e}", dir.display())))?;
    let ckpt = &run.outcome.checkpoint;
    ckpt.save(&dir.join("checkpoint.kmf")).map_err(err)?;
    write_metrics_jsonl(&dir.join("metrics.jsonl"), &run.outcome.metrics).map_err(err)?;
    let hg = represent(&ckpt.params, &run.prepared).map_err(err)?;
    let acc = zero_shot_accuracy(
        &hg,
        &run.prepared.csds,
        &run.prepared.labels,
        &run.partition.test,
        &ckpt.split.unseen,
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("hash", ckpt.hash())?;
    out.set_item("best_epoch", run.outcome.best_epoch)?;
    out.set_item("unseen_accuracy", acc)?;
    out.set_item(
        "final_loss",
        run.outcome.metrics.last().map(|m| m.losses.total),
    )?;
    Ok(out)
}

/// Zero-shot accuracy of a saved checkpoint on its unseen classes.
#[pyfunction]
fn evaluate(dataset: &str, topics: &str, emb: &str, checkpoint: &str) -> PyResult<f64> {
    let ckpt = Checkpoint::load(Path::new(checkpoint)).map_err(err)?;
    let cfg = &ckpt.config;
    let inputs =
        load_inputs(Path::new(dataset), Path::new(topics), Path::new(emb), cfg).map_err(err)?;
    let prepared = prepare(&inputs.dataset, &inputs.nbhds, &inputs.table, cfg).map_err(err)?;
    let partition = partition_nodes(
        &inputs.dataset,
        &ckpt.split,
        cfg.split.unseen_val_fraction,
        cfg.seed,
    );
    let hg = represent(&ckpt.params, &prepared).map_err(err)?;
    zero_shot_accuracy(
        &hg,
        &prepared.csds,
        &prepared.labels,
        &partition.test,
        &ckpt.split.unseen,
    )
    .map_err(err)
}

/// `(auc, hit_rate, mrr)` for one positive score and a list of negative
/// scores per query.
#[pyfunction]
#[pyo3(signature = (positives, negatives, k = 10))]
fn ranking_metrics(
    positives: Vec<f64>,
    negatives: Vec<Vec<f64>>,
    k: usize,
) -> PyResult<(f64, f64, f64)> {
    if positives.len() != negatives.len() {
        return Err(PyValueError::new_err(
            "one negative list per positive is required",
        ));
    }
    let m = ranking(&positives, &negatives, k);
    Ok((m.auc, m.hit_rate, m.mrr))
}

#[pymodule]
fn kmf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(build_topics, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_metrics, m)?)?;
    Ok(())
}
