//! Per-node facet embeddings, their composition into a single node state, and
//! the adaptive topic masks of the augmented view.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::corpus::{ClassOverlap, EmbeddingTable, OverlapSets};
use crate::numerics::{softmax_with_temperature, Tensor};
use crate::{KmfError, Result};

/// One facet row per class plus the overlap statistics that weight them.
#[derive(Clone, Debug, PartialEq)]
pub struct FacetTensor {
    pub node: String,
    /// `|C| × d`; row `c` is zero iff the overlap with class `c` is empty.
    pub rows: Tensor,
    pub sizes: Vec<usize>,
    pub weight_sums: Vec<f64>,
    /// Distinct overlap words per class.
    pub words: Vec<BTreeSet<String>>,
}

impl FacetTensor {
    pub fn num_classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Attenuated mean of the overlap's word embeddings (each word weighted by
/// `alpha^hop`); the zero vector for an empty overlap.
pub fn facet_embedding(overlap: &ClassOverlap, alpha: f64, table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim()];
    let mut n = 0usize;
    for (word, hop) in &overlap.words {
        // Overlap words come from topic neighborhoods, which only hold embedded concepts.
        let Some(v) = table.get(word) else { continue };
        let a = alpha.powi(*hop as i32);
        for (o, x) in out.iter_mut().zip(v) {
            *o += a * x;
        }
        n += 1;
    }
    if n > 0 {
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    out
}

pub fn build_facets(
    overlaps: &OverlapSets,
    alpha: f64,
    table: &EmbeddingTable,
) -> Result<FacetTensor> {
    let rows: Vec<Vec<f64>> = overlaps
        .per_class
        .iter()
        .map(|o| facet_embedding(o, alpha, table))
        .collect();
    Ok(FacetTensor {
        node: overlaps.node.clone(),
        rows: Tensor::from_rows(&rows, table.dim())?,
        sizes: overlaps.per_class.iter().map(ClassOverlap::len).collect(),
        weight_sums: overlaps
            .per_class
            .iter()
            .map(|o| {
                o.words
                    .iter()
                    .map(|(_, h)| alpha.powi(*h as i32))
                    .fold(0.0, |s, w| s + w)
            })
            .collect(),
        words: overlaps
            .per_class
            .iter()
            .map(|o| o.words.iter().map(|(w, _)| w.clone()).collect())
            .collect(),
    })
}

/// How facet rows are weighted when composed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficients {
    /// `softmax(|O_c| / τ)` over classes.
    Softmax { temperature: f64 },
    /// `|O_c| / |∪_c O_c|`, the unsmoothed size ratio.
    SizeRatio,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositionalEmbedding {
    pub node: String,
    pub vector: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// Compose facets with temperature-softmax coefficients.
pub fn compose(
    facets: &FacetTensor,
    temperature: f64,
    mask: Option<&TopicMask>,
) -> CompositionalEmbedding {
    compose_with(facets, Coefficients::Softmax { temperature }, mask)
}

/// Compose facets, optionally under a topic mask: a masked class contributes
/// size 0 to the coefficients and a zero row.
pub fn compose_with(
    facets: &FacetTensor,
    rule: Coefficients,
    mask: Option<&TopicMask>,
) -> CompositionalEmbedding {
    let kept = |c: usize| mask.is_none_or(|m| m.keep[c]);
    let sizes: Vec<f64> = (0..facets.num_classes())
        .map(|c| if kept(c) { facets.sizes[c] as f64 } else { 0.0 })
        .collect();
    let coefficients = match rule {
        Coefficients::Softmax { temperature } => softmax_with_temperature(&sizes, temperature),
        Coefficients::SizeRatio => {
            let union: BTreeSet<&String> = (0..facets.num_classes())
                .filter(|&c| kept(c))
                .flat_map(|c| facets.words[c].iter())
                .collect();
            if union.is_empty() {
                vec![0.0; sizes.len()]
            } else {
                sizes.iter().map(|s| s / union.len() as f64).collect()
            }
        }
    };
    let mut vector = vec![0.0; facets.dim()];
    for (c, k) in coefficients.iter().enumerate() {
        if !kept(c) {
            continue;
        }
        for (o, x) in vector.iter_mut().zip(facets.rows.row(c)) {
            *o += k * x;
        }
    }
    CompositionalEmbedding {
        node: facets.node.clone(),
        vector,
        coefficients,
    }
}

/// Mean embedding of every token with a vector; the zero vector when none has one.
pub fn content_embedding(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicMask {
    /// `true` keeps the facet.
    pub keep: Vec<bool>,
    pub probabilities: Vec<f64>,
}

impl TopicMask {
    pub fn keep_all(classes: usize) -> Self {
        Self {
            keep: vec![true; classes],
            probabilities: vec![0.0; classes],
        }
    }
}

/// Removal probability per class from the node's overlap weight sums.
///
/// With `s_c = ln A_c` over the classes that overlap at all,
/// `p_c = min((s_max − s_c) / (s_max − mean(s)) · p_m, p_τ)`. Classes with no
/// overlap, and every class when all `s_c` are equal, get probability 0.
pub fn mask_probabilities(weight_sums: &[f64], p_m: f64, p_tau: f64) -> Vec<f64> {
    let present: Vec<(usize, f64)> = weight_sums
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(c, &a)| (c, a.ln()))
        .collect();
    let mut probs = vec![0.0; weight_sums.len()];
    if present.is_empty() {
        return probs;
    }
    let s_max = present
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = present.iter().map(|&(_, s)| s).sum::<f64>() / present.len() as f64;
    let spread = s_max - mean;
    if spread <= 0.0 {
        return probs;
    }
    for (c, s) in present {
        probs[c] = ((s_max - s) / spread * p_m).min(p_tau).max(0.0);
    }
    probs
}

/// Independent draws: facet `c` is kept with probability `1 − p_c`.
pub fn sample_mask<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> TopicMask {
    let keep = probabilities
        .iter()
        .map(|&p| rng.gen::<f64>() >= p)
        .collect();
    TopicMask {
        keep,
        probabilities: probabilities.to_vec(),
    }
}

const FACET_MAGIC: &[u8; 4] = b"KMFT";

/// Write facet tensors: `KMFT`, u32 version (1), u32 node count, u32 classes,
/// u32 dim, then per node: u32 id length, id bytes, `classes` u32 sizes,
/// `classes` f64 weight sums, `classes × dim` f64 rows. Little-endian.
/// Overlap word sets are not stored.
pub fn write_facets(path: &Path, facets: &[FacetTensor]) -> Result<()> {
    let (classes, dim) = facets
        .first()
        .map_or((0, 0), |f| (f.num_classes(), f.dim()));
    let mut out = Vec::new();
    out.extend_from_slice(FACET_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(facets.len() as u32).to_le_bytes());
    out.extend_from_slice(&(classes as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for f in facets {
        if f.num_classes() != classes || f.dim() != dim {
            return Err(KmfError::Shape(format!(
                "facet tensor of node '{}' has a different shape",
                f.node
            )));
        }
        out.extend_from_slice(&(f.node.len() as u32).to_le_bytes());
        out.extend_from_slice(f.node.as_bytes());
        for &s in &f.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for w in &f.weight_sums {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in f.rows.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| KmfError::io(path, e))
}

pub fn read_facets(path: &Path) -> Result<Vec<FacetTensor>> {
    let bytes = fs::read(path).map_err(|e| KmfError::io(path, e))?;
    let bad = |m: &str| KmfError::parse(path, 0, m.to_string());
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated facet file"));
        }
        let (h, t) = cur.split_at(n);
        cur = t;
        Ok(h)
    };
    if take(4)? != FACET_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != 1 {
        return Err(bad("unsupported version"));
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let classes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let node = std::str::from_utf8(take(len)?)
            .map_err(|_| bad("node id is not UTF-8"))?
            .to_string();
        let sizes = take(4 * classes)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let weight_sums = take(8 * classes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = take(8 * classes * dim)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(FacetTensor {
            node,
            rows: Tensor::matrix(classes, dim, data)?,
            sizes,
            weight_sums,
            words: vec![BTreeSet::new(); classes],
        });
    }
    Ok(out)
}
