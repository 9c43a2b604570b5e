//! Planted-topic generator.
//!
//! Each class owns a disjoint keyword vocabulary linked to its label at hop 1
//! in the generated knowledge graph. Class centroids are built from a small
//! set of shared latent attributes, so held-out classes lie in the span of
//! the trained ones. Keyword vectors sit near their class centroid. Node text
//! mixes own-class keywords, keywords of other classes (`noise`) and generic
//! background words that no label links to.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::{EmbeddingTable, GraphDataset};
use crate::rng::{substream, StreamRng, SYNTH};
use crate::{KmfError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub vocab_per_class: usize,
    pub tokens_per_node: usize,
    /// Fraction of topical tokens drawn from other classes' vocabularies.
    pub noise: f64,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub dim: usize,
    /// Number of latent attributes class centroids are mixed from.
    pub attributes: usize,
    /// Per-coordinate standard deviation of keyword vectors around their centroid.
    pub jitter: f64,
    pub background_vocab: usize,
    /// Fraction of each node's tokens drawn from the background vocabulary.
    pub background_rate: f64,
    /// Norm of background word vectors; topical centroids have norm 1.
    pub background_norm: f64,
    /// Background words are grouped into this many styles. Each node draws
    /// all its background words from one style, chosen independently of its
    /// class.
    pub styles: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            nodes_per_class: 100,
            vocab_per_class: 40,
            tokens_per_node: 40,
            noise: 0.2,
            intra_edge_prob: 0.05,
            inter_edge_prob: 0.002,
            dim: 32,
            attributes: 4,
            jitter: 0.15,
            background_vocab: 40,
            background_rate: 0.5,
            background_norm: 1.0,
            styles: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// `(id, class, text)`.
    pub nodes: Vec<(String, String, String)>,
    pub edges: Vec<(String, String)>,
    pub kg: Vec<(String, String, String)>,
    /// `(class id, label phrase)`.
    pub labels: Vec<(String, String)>,
    pub table: EmbeddingTable,
}

pub fn class_name(c: usize) -> String {
    format!("topic{c}")
}

fn keyword(c: usize, i: usize) -> String {
    format!("t{c}w{i}")
}

fn background(i: usize) -> String {
    format!("bg{i}")
}

fn gaussian(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

fn centered_gaussian(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    let mut v = gaussian(rng, n, scale);
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.classes == 0
        || cfg.nodes_per_class == 0
        || cfg.vocab_per_class == 0
        || cfg.tokens_per_node == 0
        || cfg.dim == 0
    {
        return Err(KmfError::Config("generator sizes must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.noise) || !(0.0..1.0).contains(&cfg.background_rate) {
        return Err(KmfError::Config(
            "noise and background rates must lie in [0, 1)".into(),
        ));
    }
    if cfg.background_rate > 0.0 && cfg.background_vocab == 0 {
        return Err(KmfError::Config(
            "background rate without background vocabulary".into(),
        ));
    }
    for p in [cfg.intra_edge_prob, cfg.inter_edge_prob] {
        if !(0.0..=1.0).contains(&p) {
            return Err(KmfError::Config(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
    }
    let k = if cfg.attributes == 0 {
        cfg.dim
    } else {
        cfg.attributes
    };

    // Embeddings. Every random draw is centered so that no word vector carries
    // a common offset across coordinates.
    let mut rng = substream(cfg.seed, SYNTH, 0, 0);
    let basis: Vec<Vec<f64>> = (0..k)
        .map(|_| centered_gaussian(&mut rng, cfg.dim, 1.0))
        .collect();
    let mix = |rng: &mut StreamRng| {
        let z = gaussian(rng, k, 1.0);
        let mut v = vec![0.0; cfg.dim];
        for (zi, b) in z.iter().zip(&basis) {
            for (o, x) in v.iter_mut().zip(b) {
                *o += zi * x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        v
    };
    let mut table = EmbeddingTable::new(cfg.dim);
    for c in 0..cfg.classes {
        let centroid = mix(&mut rng);
        table.insert(&class_name(c), centroid.clone())?;
        for i in 0..cfg.vocab_per_class {
            let noise = centered_gaussian(&mut rng, cfg.dim, cfg.jitter);
            table.insert(
                &keyword(c, i),
                centroid.iter().zip(noise).map(|(a, b)| a + b).collect(),
            )?;
        }
    }
    // Background words cluster around style vectors mixed from the same attributes.
    let styles = cfg.styles.clamp(1, cfg.background_vocab.max(1));
    let style_centroids: Vec<Vec<f64>> = (0..styles).map(|_| mix(&mut rng)).collect();
    for i in 0..cfg.background_vocab {
        let noise = centered_gaussian(&mut rng, cfg.dim, cfg.jitter);
        let v = style_centroids[i % styles]
            .iter()
            .zip(noise)
            .map(|(a, b)| (a + b) * cfg.background_norm)
            .collect();
        table.insert(&background(i), v)?;
    }
    let style_words = |s: usize| {
        (s..cfg.background_vocab)
            .step_by(styles)
            .collect::<Vec<_>>()
    };

    // Knowledge graph and labels.
    let mut kg = Vec::new();
    let mut labels = Vec::new();
    for c in 0..cfg.classes {
        labels.push((class_name(c), class_name(c)));
        for i in 0..cfg.vocab_per_class {
            kg.push((class_name(c), "RelatedTo".to_string(), keyword(c, i)));
        }
    }

    // Node text.
    let mut rng = substream(cfg.seed, SYNTH, 1, 0);
    let mut nodes = Vec::new();
    for c in 0..cfg.classes {
        for j in 0..cfg.nodes_per_class {
            let own_style = style_words(rng.gen_range(0..styles));
            let words: Vec<String> = (0..cfg.tokens_per_node)
                .map(|_| {
                    if rng.gen::<f64>() < cfg.background_rate {
                        return background(own_style[rng.gen_range(0..own_style.len())]);
                    }
                    let from = if cfg.classes > 1 && rng.gen::<f64>() < cfg.noise {
                        let other = rng.gen_range(0..cfg.classes - 1);
                        if other >= c {
                            other + 1
                        } else {
                            other
                        }
                    } else {
                        c
                    };
                    keyword(from, rng.gen_range(0..cfg.vocab_per_class))
                })
                .collect();
            nodes.push((format!("n{c}_{j}"), class_name(c), words.join(" ")));
        }
    }
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.shuffle(&mut rng);
    let nodes: Vec<_> = order.into_iter().map(|i| nodes[i].clone()).collect();

    // Edges.
    let mut rng = substream(cfg.seed, SYNTH, 2, 0);
    let mut edges = Vec::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let p = if nodes[a].1 == nodes[b].1 {
                cfg.intra_edge_prob
            } else {
                cfg.inter_edge_prob
            };
            if rng.gen::<f64>() < p {
                edges.push((nodes[a].0.clone(), nodes[b].0.clone()));
            }
        }
    }

    Ok(SynthData {
        nodes,
        edges,
        kg,
        labels,
        table,
    })
}

impl SynthData {
    /// Tokenize in memory: every token is kept, no stopword removal.
    pub fn dataset(&self) -> Result<GraphDataset> {
        let nodes = self
            .nodes
            .iter()
            .map(|(id, c, text)| {
                (
                    id.clone(),
                    c.clone(),
                    text.split(' ').map(String::from).collect(),
                )
            })
            .collect();
        GraphDataset::new(nodes, &self.edges)
    }

    /// Write `nodes.tsv`, `edges.tsv`, `kg.tsv`, `labels.tsv` and `emb.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| KmfError::io(dir, e))?;
        let put = |name: &str, rows: Vec<String>| -> Result<()> {
            let path = dir.join(name);
            let mut text = rows.join("\n");
            text.push('\n');
            fs::write(&path, text).map_err(|e| KmfError::io(&path, e))
        };
        put(
            "nodes.tsv",
            self.nodes
                .iter()
                .map(|(i, c, t)| format!("{i}\t{c}\t{t}"))
                .collect(),
        )?;
        put(
            "edges.tsv",
            self.edges
                .iter()
                .map(|(a, b)| format!("{a}\t{b}"))
                .collect(),
        )?;
        put(
            "kg.tsv",
            self.kg
                .iter()
                .map(|(h, r, t)| format!("{h}\t{r}\t{t}"))
                .collect(),
        )?;
        put(
            "labels.tsv",
            self.labels
                .iter()
                .map(|(c, p)| format!("{c}\t{p}"))
                .collect(),
        )?;
        self.table.write_text(&dir.join("emb.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::compute_overlaps;
    use crate::kg_topics::{build_topic_neighborhood, KnowledgeGraph};

    fn small() -> SynthConfig {
        SynthConfig {
            classes: 3,
            nodes_per_class: 10,
            vocab_per_class: 6,
            tokens_per_node: 8,
            dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_match_request() {
        let cfg = small();
        let d = synth_generate(&cfg).unwrap();
        assert_eq!(d.nodes.len(), 30);
        assert_eq!(d.kg.len(), 18);
        assert_eq!(d.labels.len(), 3);
        assert_eq!(d.table.len(), 3 + 18 + cfg.background_vocab);
        assert!(d.nodes.iter().all(|(_, _, t)| t.split(' ').count() == 8));
        let ds = d.dataset().unwrap();
        assert_eq!(ds.edges.len(), d.edges.len());
    }

    #[test]
    fn clean_generator_overlaps_own_class_only() {
        let cfg = SynthConfig {
            noise: 0.0,
            inter_edge_prob: 0.0,
            ..small()
        };
        let d = synth_generate(&cfg).unwrap();
        let kg = KnowledgeGraph::from_edges(d.kg.clone());
        let nbhds: Vec<_> = d
            .labels
            .iter()
            .map(|(c, p)| build_topic_neighborhood(&kg, c, p, 1, 100.0, &d.table).unwrap())
            .collect();
        let ds = d.dataset().unwrap();
        for node in &ds.nodes {
            let o = compute_overlaps(node, &nbhds, 0.8);
            for (c, ov) in o.per_class.iter().enumerate() {
                assert_eq!(!ov.is_empty(), c == node.label, "{}", node.id);
            }
        }
        for &(a, b) in &ds.edges {
            assert_eq!(ds.nodes[a].label, ds.nodes[b].label);
        }
    }

    #[test]
    fn byte_identical_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synth_generate(&small()).unwrap().write(d1.path()).unwrap();
        synth_generate(&small()).unwrap().write(d2.path()).unwrap();
        for f in ["nodes.tsv", "edges.tsv", "kg.tsv", "labels.tsv", "emb.txt"] {
            assert_eq!(
                fs::read(d1.path().join(f)).unwrap(),
                fs::read(d2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(synth_generate(&SynthConfig {
            noise: 1.0,
            ..small()
        })
        .is_err());
        assert!(synth_generate(&SynthConfig {
            classes: 0,
            ..small()
        })
        .is_err());
    }
}
