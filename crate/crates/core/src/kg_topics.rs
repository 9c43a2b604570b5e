//! Knowledge-graph topic neighborhoods and the class semantic descriptions
//! (CSDs) pooled from them.
//!
//! A neighborhood is grown ring by ring with a breadth-first search over the
//! undirected view of the graph. Each ring is scored by cosine similarity to
//! the label embedding and cut to its top `P%` before the next ring is
//! expanded, so filtered concepts never seed further expansion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::numerics::cosine_similarity;
use crate::{KmfError, Result};

/// Canonical concept form: lowercase, whitespace runs joined by `_`.
/// ConceptNet URIs such as `/c/en/data_mining/n` reduce to `data_mining`.
pub fn normalize_concept(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(rest) = s.strip_prefix("/c/") {
        let mut parts = rest.split('/');
        let _lang = parts.next();
        s = parts.next().unwrap_or("");
    }
    s.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|p| !p.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Offline knowledge-graph snapshot: a deduplicated multigraph of concepts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: BTreeSet<String>,
    edges: Vec<(String, String, String)>,
    adjacency: HashMap<String, BTreeSet<String>>,
}

impl KnowledgeGraph {
    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut kg = Self::default();
        let mut seen = BTreeSet::new();
        for (h, r, t) in edges {
            let (h, t) = (normalize_concept(h.as_ref()), normalize_concept(t.as_ref()));
            let r = r.as_ref().trim().to_string();
            if !seen.insert((h.clone(), r.clone(), t.clone())) {
                continue;
            }
            kg.entities.insert(h.clone());
            kg.entities.insert(t.clone());
            if h != t {
                kg.adjacency.entry(h.clone()).or_default().insert(t.clone());
                kg.adjacency.entry(t.clone()).or_default().insert(h.clone());
            }
            kg.edges.push((h, r, t));
        }
        kg
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    pub fn edges(&self) -> &[(String, String, String)] {
        &self.edges
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.entities.contains(concept)
    }

    /// Neighbors in the undirected view, sorted.
    pub fn neighbors(&self, concept: &str) -> impl Iterator<Item = &str> {
        self.adjacency
            .get(concept)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }
}

/// Parse a `head⟨TAB⟩relation⟨TAB⟩tail` snapshot.
pub fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let file = fs::File::open(path).map_err(|e| KmfError::io(path, e))?;
    let mut triples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| KmfError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(KmfError::parse(
                path,
                i + 1,
                "expected head<TAB>relation<TAB>tail",
            ));
        }
        triples.push((
            cols[0].to_string(),
            cols[1].to_string(),
            cols[2].to_string(),
        ));
    }
    Ok(KnowledgeGraph::from_edges(triples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub word: String,
    pub hop: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicNeighborhood {
    /// Class id this neighborhood describes.
    pub label: String,
    /// Sorted by hop, then score descending, then word.
    pub entries: Vec<TopicEntry>,
    #[serde(skip)]
    pub radius: usize,
    #[serde(skip)]
    pub percent: f64,
    /// Concepts dropped because the embedding table has no vector for them.
    #[serde(skip)]
    pub skipped: usize,
}

impl TopicNeighborhood {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hop_map(&self) -> HashMap<&str, usize> {
        self.entries
            .iter()
            .map(|e| (e.word.as_str(), e.hop))
            .collect()
    }

    pub fn ring(&self, hop: usize) -> impl Iterator<Item = &TopicEntry> {
        self.entries.iter().filter(move |e| e.hop == hop)
    }
}

/// Number of ring members kept under a top-`percent` cut: the nearest integer
/// to `percent%` of the ring, at least one for a non-empty ring.
pub fn ring_quota(ring_size: usize, percent: f64) -> usize {
    if ring_size == 0 {
        return 0;
    }
    let q = (ring_size as f64 * percent / 100.0).round() as usize;
    q.clamp(1, ring_size)
}

/// Concepts a label links to: the whole phrase when the graph knows it,
/// otherwise every phrase component the graph knows.
pub fn link_label(kg: &KnowledgeGraph, label: &str) -> Result<Vec<String>> {
    let phrase = normalize_concept(label);
    if kg.contains(&phrase) {
        return Ok(vec![phrase]);
    }
    let parts: BTreeSet<String> = phrase
        .split('_')
        .filter(|p| !p.is_empty() && kg.contains(p))
        .map(str::to_string)
        .collect();
    if parts.is_empty() {
        return Err(KmfError::UnlinkableLabel(label.to_string()));
    }
    Ok(parts.into_iter().collect())
}

/// Embedding of a label phrase, or the mean of its components' embeddings when
/// the phrase itself is absent.
pub fn label_embedding(label: &str, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let phrase = normalize_concept(label);
    if let Some(v) = table.get(&phrase) {
        return Some(v.to_vec());
    }
    let parts: Vec<&[f64]> = phrase.split('_').filter_map(|p| table.get(p)).collect();
    if parts.is_empty() {
        return None;
    }
    let mut mean = vec![0.0; table.dim()];
    for v in &parts {
        for (m, x) in mean.iter_mut().zip(*v) {
            *m += x;
        }
    }
    let n = parts.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Some(mean)
}

/// Filtered breadth-first rings around one linked concept: concept → (hop, score).
fn expand_anchor(
    kg: &KnowledgeGraph,
    anchor: &str,
    anchor_vec: &[f64],
    radius: usize,
    percent: f64,
    table: &EmbeddingTable,
    skipped: &mut usize,
) -> BTreeMap<String, (usize, f64)> {
    let mut found = BTreeMap::new();
    found.insert(anchor.to_string(), (0, 1.0));
    let mut visited: BTreeSet<&str> = BTreeSet::from([anchor]);
    let mut frontier: Vec<&str> = vec![anchor];

    for hop in 1..=radius {
        let candidates: BTreeSet<&str> = frontier
            .iter()
            .flat_map(|c| kg.neighbors(c))
            .filter(|c| !visited.contains(c))
            .collect();
        visited.extend(candidates.iter().copied());

        let mut scored: Vec<(&str, f64)> = Vec::with_capacity(candidates.len());
        for c in candidates {
            match table.get(c).map(|v| cosine_similarity(anchor_vec, v)) {
                Some(Ok(s)) => scored.push((c, s)),
                _ => *skipped += 1,
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(ring_quota(scored.len(), percent));

        frontier = scored.iter().map(|&(c, _)| c).collect();
        for (c, s) in scored {
            found.insert(c.to_string(), (hop, s));
        }
        if frontier.is_empty() {
            break;
        }
    }
    found
}

/// Radius-`radius` topic neighborhood of a class label, each ring cut to its
/// top `percent`% by cosine similarity to the label.
///
/// A label whose phrase is not a graph concept takes the union of its
/// components' neighborhoods; a concept reached from several components keeps
/// its smallest hop and its largest score.
pub fn build_topic_neighborhood(
    kg: &KnowledgeGraph,
    class_id: &str,
    label: &str,
    radius: usize,
    percent: f64,
    table: &EmbeddingTable,
) -> Result<TopicNeighborhood> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(KmfError::Config(format!(
            "filter percentage {percent} outside (0, 100]"
        )));
    }
    let anchors = link_label(kg, label)?;
    let mut skipped = 0;
    let mut merged: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for anchor in &anchors {
        let anchor_vec = match table.get(anchor) {
            Some(v) => v.to_vec(),
            None => match label_embedding(anchor, table) {
                Some(v) => v,
                None => {
                    skipped += 1;
                    continue;
                }
            },
        };
        let found = expand_anchor(
            kg,
            anchor,
            &anchor_vec,
            radius,
            percent,
            table,
            &mut skipped,
        );
        for (word, (hop, score)) in found {
            if hop == 0 && !table.contains(&word) {
                continue;
            }
            merged
                .entry(word)
                .and_modify(|(h, s)| {
                    *h = (*h).min(hop);
                    *s = s.max(score);
                })
                .or_insert((hop, score));
        }
    }
    if skipped > 0 {
        warn!("label '{label}': {skipped} concepts skipped (no embedding)");
    }

    let mut entries: Vec<TopicEntry> = merged
        .into_iter()
        .map(|(word, (hop, score))| TopicEntry { word, hop, score })
        .collect();
    entries.sort_by(|a, b| {
        a.hop
            .cmp(&b.hop)
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(TopicNeighborhood {
        label: class_id.to_string(),
        entries,
        radius,
        percent,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsdVector {
    pub label: String,
    pub vector: Vec<f64>,
}

/// Attenuated mean of the neighborhood's embeddings: each word is weighted by
/// `alpha^hop`.
pub fn build_csd(
    nbhd: &TopicNeighborhood,
    alpha: f64,
    table: &EmbeddingTable,
) -> Result<CsdVector> {
    if nbhd.is_empty() {
        return Err(KmfError::EmptyNeighborhood(nbhd.label.clone()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KmfError::Config(format!(
            "attenuation {alpha} outside [0, 1]"
        )));
    }
    let mut sum = vec![0.0; table.dim()];
    for e in &nbhd.entries {
        let v = table.get(&e.word).ok_or_else(|| {
            KmfError::Dataset(format!("topic word '{}' has no embedding", e.word))
        })?;
        let a = alpha.powi(e.hop as i32);
        for (s, x) in sum.iter_mut().zip(v) {
            *s += a * x;
        }
    }
    let n = nbhd.len() as f64;
    Ok(CsdVector {
        label: nbhd.label.clone(),
        vector: sum.into_iter().map(|s| s / n).collect(),
    })
}

/// One `{"label", "entries"}` object per line.
pub fn write_neighborhoods_jsonl(path: &Path, nbhds: &[TopicNeighborhood]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KmfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for nb in nbhds {
        serde_json::to_writer(&mut w, nb).map_err(|e| KmfError::io(path, e.into()))?;
        writeln!(w).map_err(|e| KmfError::io(path, e))?;
    }
    w.flush().map_err(|e| KmfError::io(path, e))
}

pub fn read_neighborhoods_jsonl(path: &Path) -> Result<Vec<TopicNeighborhood>> {
    let file = fs::File::open(path).map_err(|e| KmfError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| KmfError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let nb: TopicNeighborhood =
            serde_json::from_str(&line).map_err(|e| KmfError::parse(path, i + 1, e.to_string()))?;
        out.push(TopicNeighborhood {
            radius: nb.entries.iter().map(|e| e.hop).max().unwrap_or(0),
            ..nb
        });
    }
    Ok(out)
}

/// `class_id⟨TAB⟩label phrase` rows; a single column uses the id as the phrase.
pub fn load_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| KmfError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(2, '\t');
        let id = cols.next().unwrap_or_default().trim();
        if id.is_empty() {
            return Err(KmfError::parse(path, i + 1, "empty class id"));
        }
        let phrase = cols
            .next()
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .unwrap_or(id);
        out.push((id.to_string(), phrase.to_string()));
    }
    Ok(out)
}
