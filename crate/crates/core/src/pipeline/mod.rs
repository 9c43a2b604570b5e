//! End-to-end orchestration: splits, training, zero-shot inference and the
//! recommendation evaluator, plus synthetic data and on-disk artifacts.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod export;
pub mod files;
pub mod recsys;
pub mod split;
pub mod synth;
pub mod train;

use crate::corpus::{compute_overlaps, EmbeddingTable, GraphDataset};
use crate::facets::{
    self, build_facets, compose_with, content_embedding, Coefficients, FacetTensor,
};
use crate::kg_topics::{build_csd, TopicNeighborhood};
use crate::numerics::Tensor;
use crate::rng::{substream, MASK};
use crate::{KmfError, Result};

pub use checkpoint::Checkpoint;
pub use config::{Ablation, GeometricConfig, SplitConfig, SplitMode, TrainConfig};
pub use files::{load_inputs, Inputs};
pub use split::{make_split, partition_nodes, ClassSplit, NodePartition};

/// Everything precomputed offline for one dataset: class descriptions,
/// initial node states and the per-node mask probabilities.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub classes: Vec<String>,
    /// `|C| × d`, one CSD per class in `classes` order.
    pub csds: Tensor,
    /// `n × d` initial node states.
    pub h0: Tensor,
    /// Facet tensors per node; empty when facets are disabled.
    pub facets: Vec<FacetTensor>,
    pub mask_probabilities: Vec<Vec<f64>>,
    pub adjacency: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    coefficients: Coefficients,
}

impl PreparedGraph {
    pub fn len(&self) -> usize {
        self.h0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.h0.cols()
    }

    /// Initial states of the topic-masked view drawn for `epoch`. Without
    /// facets there is nothing to mask and the view equals `h0`.
    pub fn masked_h0(&self, seed: u64, epoch: u64) -> Tensor {
        if self.facets.is_empty() {
            return self.h0.clone();
        }
        let mut out = Tensor::zeros(&[self.len(), self.dim()]);
        for (v, f) in self.facets.iter().enumerate() {
            let mut rng = substream(seed, MASK, epoch, v as u64);
            let mask = facets::sample_mask(&self.mask_probabilities[v], &mut rng);
            out.row_mut(v)
                .copy_from_slice(&compose_with(f, self.coefficients, Some(&mask)).vector);
        }
        out
    }
}

/// Reorder neighborhoods to follow the dataset's class list.
pub fn align_neighborhoods<'a>(
    classes: &[String],
    nbhds: &'a [TopicNeighborhood],
) -> Result<Vec<&'a TopicNeighborhood>> {
    classes
        .iter()
        .map(|c| {
            nbhds
                .iter()
                .find(|nb| &nb.label == c)
                .ok_or_else(|| KmfError::Dataset(format!("no topic neighborhood for class '{c}'")))
        })
        .collect()
}

/// Class descriptions under the configured switches: the attenuated
/// neighborhood pool, or the mean of the label's own concepts when the
/// knowledge graph is switched off.
pub fn class_descriptions(
    nbhds: &[&TopicNeighborhood],
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<Tensor> {
    let alpha = config.effective_alpha();
    let rows = nbhds
        .iter()
        .map(|nb| {
            if config.ablation.use_kg_csd {
                return Ok(build_csd(nb, alpha, table)?.vector);
            }
            let anchors = TopicNeighborhood {
                entries: nb.ring(0).cloned().collect(),
                ..(*nb).clone()
            };
            Ok(build_csd(&anchors, 1.0, table)?.vector)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows, table.dim())
}

pub fn prepare(
    dataset: &GraphDataset,
    nbhds: &[TopicNeighborhood],
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<PreparedGraph> {
    config.validate()?;
    if let Some(d) = config.dim {
        if d != table.dim() {
            return Err(KmfError::Config(format!(
                "config dim {d} but embedding table has {}",
                table.dim()
            )));
        }
    }
    let aligned = align_neighborhoods(&dataset.classes, nbhds)?;
    let owned: Vec<TopicNeighborhood> = aligned.iter().map(|nb| (*nb).clone()).collect();
    let csds = class_descriptions(&aligned, table, config)?;
    let alpha = config.effective_alpha();
    let coefficients = if config.ablation.use_temperature {
        Coefficients::Softmax {
            temperature: config.temperature,
        }
    } else {
        Coefficients::SizeRatio
    };

    let mut rows = Vec::with_capacity(dataset.len());
    let mut facet_list = Vec::new();
    let mut mask_probabilities = Vec::new();
    for node in &dataset.nodes {
        if config.ablation.use_facets {
            let overlaps = compute_overlaps(node, &owned, alpha);
            let f = build_facets(&overlaps, alpha, table)?;
            rows.push(compose_with(&f, coefficients, None).vector);
            mask_probabilities.push(facets::mask_probabilities(
                &f.weight_sums,
                config.p_m,
                config.p_tau,
            ));
            facet_list.push(f);
        } else {
            rows.push(content_embedding(&node.tokens, table));
        }
    }
    Ok(PreparedGraph {
        classes: dataset.classes.clone(),
        csds,
        h0: Tensor::from_rows(&rows, table.dim())?,
        facets: facet_list,
        mask_probabilities,
        adjacency: dataset.adjacency(),
        labels: dataset.labels(),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_topics::TopicEntry;

    fn fixture() -> (GraphDataset, Vec<TopicNeighborhood>, EmbeddingTable) {
        let mut table = EmbeddingTable::new(2);
        for (w, v) in [
            ("a", [1.0, 0.0]),
            ("b", [0.0, 1.0]),
            ("x", [2.0, 0.0]),
            ("y", [0.0, 2.0]),
            ("z", [1.0, 1.0]),
        ] {
            table.insert(w, v.to_vec()).unwrap();
        }
        let entry = |w: &str, hop| TopicEntry {
            word: w.into(),
            hop,
            score: 1.0,
        };
        let nb = |label: &str, entries| TopicNeighborhood {
            label: label.into(),
            entries,
            radius: 1,
            percent: 100.0,
            skipped: 0,
        };
        // Deliberately listed out of class order.
        let nbhds = vec![
            nb("B", vec![entry("b", 0), entry("y", 1)]),
            nb("A", vec![entry("a", 0), entry("x", 1)]),
        ];
        let toks = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        let ds = GraphDataset::new(
            vec![
                ("n0".into(), "A".into(), toks("x z")),
                ("n1".into(), "B".into(), toks("y y z")),
                ("n2".into(), "A".into(), toks("q")),
            ],
            &[("n0".into(), "n1".into())],
        )
        .unwrap();
        (ds, nbhds, table)
    }

    #[test]
    fn csd_switch() {
        let (ds, nbhds, table) = fixture();
        let config = TrainConfig::default();
        let p = prepare(&ds, &nbhds, &table, &config).unwrap();
        // A: (a + 0.8·x) / 2 = (1.3, 0).
        assert!((p.csds.get(0, 0) - 1.3).abs() < 1e-15 && p.csds.get(0, 1) == 0.0);
        let mut k = config.clone();
        k.ablation.use_kg_csd = false;
        let p = prepare(&ds, &nbhds, &table, &k).unwrap();
        assert_eq!(p.csds.row(0), &[1.0, 0.0]);
        assert_eq!(p.csds.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn facet_and_content_states() {
        let (ds, nbhds, table) = fixture();
        let config = TrainConfig::default();
        let p = prepare(&ds, &nbhds, &table, &config).unwrap();
        // n0 overlaps class A in {x}: facet 0.8·x, coefficients softmax(1/10, 0/10).
        let k0 = (0.1f64).exp() / ((0.1f64).exp() + 1.0);
        assert!((p.h0.get(0, 0) - k0 * 1.6).abs() < 1e-14);
        assert_eq!(p.h0.row(2), &[0.0, 0.0]);
        let mut t = config.clone();
        t.ablation.use_facets = false;
        let p = prepare(&ds, &nbhds, &table, &t).unwrap();
        assert_eq!(p.h0.row(0), &[1.5, 0.5]);
        assert!(p.facets.is_empty());
        assert_eq!(p.masked_h0(0, 3), p.h0);
    }

    #[test]
    fn missing_neighborhood() {
        let (ds, nbhds, table) = fixture();
        assert!(matches!(
            prepare(&ds, &nbhds[..1], &table, &TrainConfig::default()),
            Err(KmfError::Dataset(_))
        ));
    }

    #[test]
    fn masked_view_without_spread_is_identity() {
        let (ds, nbhds, table) = fixture();
        let p = prepare(&ds, &nbhds, &table, &TrainConfig::default()).unwrap();
        // Every node overlaps at most one class, so no probability is positive.
        assert_eq!(p.masked_h0(5, 0), p.h0);
    }
}
