//! Graph datasets, tokenization, the word-embedding table and per-class
//! overlap sets between node text and topic neighborhoods.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg_topics::{normalize_concept, TopicNeighborhood};
use crate::{KmfError, Result};

/// Stopwords used when no list is configured.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| KmfError::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Lowercase words split on every non-alphanumeric character.
pub fn raw_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Corpus-level token frequencies, counted before any filtering.
pub fn count_tokens<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for text in texts {
        for t in raw_tokens(text) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// Drops stopwords and every token whose corpus frequency is `<= min_count`.
#[derive(Clone, Debug)]
pub struct TokenFilter {
    pub counts: HashMap<String, usize>,
    pub min_count: usize,
    pub stopwords: HashSet<String>,
}

impl TokenFilter {
    pub fn fit<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        min_count: usize,
        stopwords: HashSet<String>,
    ) -> Self {
        Self {
            counts: count_tokens(texts),
            min_count,
            stopwords,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        raw_tokens(text)
            .filter(|t| !self.stopwords.contains(t))
            .filter(|t| self.counts.get(t).copied().unwrap_or(0) > self.min_count)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: String,
    /// Index into [`GraphDataset::classes`].
    pub label: usize,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub nodes: Vec<NodeRecord>,
    /// Undirected edges as dense node indices, `src < dst`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Class ids in sorted order.
    pub classes: Vec<String>,
}

impl GraphDataset {
    /// Validate and assemble a dataset. Node ids map to dense indices in the
    /// given order; duplicate edges (in either direction) collapse to one.
    pub fn new(
        nodes: Vec<(String, String, Vec<String>)>,
        edges: &[(String, String)],
    ) -> Result<Self> {
        let classes: Vec<String> = nodes
            .iter()
            .map(|(_, c, _)| c.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let class_index: HashMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut index: HashMap<String, usize> = HashMap::new();
        let mut records = Vec::with_capacity(nodes.len());
        for (id, label, tokens) in nodes {
            if index.insert(id.clone(), records.len()).is_some() {
                return Err(KmfError::Dataset(format!("duplicate node id '{id}'")));
            }
            records.push(NodeRecord {
                label: class_index[label.as_str()],
                id,
                tokens,
            });
        }

        let mut edge_set = BTreeSet::new();
        for (src, dst) in edges {
            let s = *index.get(src).ok_or_else(|| {
                KmfError::Dataset(format!("edge references unknown node id '{src}'"))
            })?;
            let d = *index.get(dst).ok_or_else(|| {
                KmfError::Dataset(format!("edge references unknown node id '{dst}'"))
            })?;
            if s == d {
                return Err(KmfError::Dataset(format!("self-loop on node '{src}'")));
            }
            edge_set.insert((s.min(d), s.max(d)));
        }

        Ok(Self {
            nodes: records,
            edges: edge_set.into_iter().collect(),
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Undirected adjacency lists, sorted.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn labels(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.label).collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| KmfError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| KmfError::io(path, e))
}

/// Read `id⟨TAB⟩label⟨TAB⟩text` rows and `src⟨TAB⟩dst` rows, tokenizing the
/// text with a filter fitted on the whole corpus.
pub fn load_dataset(
    nodes_path: &Path,
    edges_path: &Path,
    min_count: usize,
    stopwords: HashSet<String>,
) -> Result<GraphDataset> {
    let mut raw = Vec::new();
    for (i, line) in read_lines(nodes_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(label)) = (parts.next(), parts.next()) else {
            return Err(KmfError::parse(
                nodes_path,
                i + 1,
                "expected id<TAB>label<TAB>text",
            ));
        };
        if id.is_empty() || label.is_empty() {
            return Err(KmfError::parse(nodes_path, i + 1, "empty id or label"));
        }
        raw.push((
            id.to_string(),
            label.to_string(),
            parts.next().unwrap_or("").to_string(),
        ));
    }

    let filter = TokenFilter::fit(raw.iter().map(|(_, _, t)| t.as_str()), min_count, stopwords);
    let nodes = raw
        .into_iter()
        .map(|(id, label, text)| {
            let tokens = filter.tokenize(&text);
            (id, label, tokens)
        })
        .collect();

    let mut edges = Vec::new();
    for (i, line) in read_lines(edges_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(KmfError::parse(edges_path, i + 1, "expected src<TAB>dst"));
        }
        edges.push((cols[0].to_string(), cols[1].to_string()));
    }
    GraphDataset::new(nodes, &edges)
}

/// Word → vector lookup realizing the pretrained embedding function.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

const EMBEDDING_MAGIC: &[u8; 4] = b"KMFE";

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert under the normalized form of `word`.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        let word = normalize_concept(word);
        if vector.len() != self.dim {
            return Err(KmfError::EmbeddingDimension {
                word,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(KmfError::Dataset(format!(
                "non-finite embedding for '{word}'"
            )));
        }
        self.entries.insert(word, vector);
        Ok(())
    }

    /// `None` for absent words; never a zero vector.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Words in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        w.sort_unstable();
        w
    }

    /// Every vector multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(w, v)| (w.clone(), v.iter().map(|x| x * k).collect()))
                .collect(),
        }
    }

    /// Text form: a header `count dim`, then one `word v1 … vd` row per entry
    /// (tabs or spaces).
    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(KmfError::parse(path, 1, "missing `count dim` header"));
        };
        let head: Vec<&str> = header.split_whitespace().collect();
        let dim = match head.as_slice() {
            [_, d] | [d] => d.parse::<usize>().ok(),
            _ => None,
        }
        .filter(|&d| d > 0)
        .ok_or_else(|| KmfError::parse(path, 1, "header must be `count dim`"))?;

        let mut table = Self::new(dim);
        for (i, line) in lines {
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default();
            let values = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    KmfError::parse(path, i + 1, format!("bad value for '{word}': {e}"))
                })?;
            table.insert(word, values)?;
        }
        Ok(table)
    }

    /// Binary form: `KMFE`, u32 version (1), u32 dim, u64 count, then per entry
    /// u32 byte length, UTF-8 word, `dim` little-endian f64.
    pub fn parse_binary(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| KmfError::parse(path, 0, m.to_string());
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated embedding file"));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(4)? != EMBEDDING_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(bad("unsupported version"));
        }
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut table = Self::new(dim);
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let word = std::str::from_utf8(take(len)?)
                .map_err(|_| bad("word is not UTF-8"))?
                .to_string();
            let raw = take(8 * dim)?;
            let v = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table.insert(&word, v)?;
        }
        Ok(table)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| KmfError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| KmfError::io(path, e);
        writeln!(w, "{} {}", self.entries.len(), self.dim).map_err(io)?;
        for word in self.words() {
            write!(w, "{word}").map_err(io)?;
            for v in &self.entries[word] {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for word in self.words() {
            out.extend_from_slice(&(word.len() as u32).to_le_bytes());
            out.extend_from_slice(word.as_bytes());
            for v in &self.entries[word] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| KmfError::io(path, e))
    }
}

/// Load either embedding-table format, detected by the binary magic.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| KmfError::io(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        EmbeddingTable::parse_binary(&bytes, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| KmfError::parse(path, 0, "not UTF-8"))?;
        EmbeddingTable::parse_text(&text, path)
    }
}

/// Overlap of one node's words with one class's topic neighborhood.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassOverlap {
    /// `(word, hop)` pairs, sorted by word.
    pub words: Vec<(String, usize)>,
    /// Σ αʰᵒᵖ over `words`.
    pub weight_sum: f64,
}

impl ClassOverlap {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapSets {
    pub node: String,
    /// One entry per class, in class order.
    pub per_class: Vec<ClassOverlap>,
}

/// Intersect the node's distinct words with each neighborhood.
pub fn compute_overlaps(node: &NodeRecord, nbhds: &[TopicNeighborhood], alpha: f64) -> OverlapSets {
    let words: BTreeSet<&str> = node.tokens.iter().map(String::as_str).collect();
    let per_class = nbhds
        .iter()
        .map(|nb| {
            let hops = nb.hop_map();
            let matched: Vec<(String, usize)> = words
                .iter()
                .filter_map(|w| hops.get(*w).map(|&h| (w.to_string(), h)))
                .collect();
            let weight_sum = matched
                .iter()
                .map(|&(_, h)| alpha.powi(h as i32))
                .fold(0.0, |s, w| s + w);
            ClassOverlap {
                words: matched,
                weight_sum,
            }
        })
        .collect();
    OverlapSets {
        node: node.id.clone(),
        per_class,
    }
}

#[derive(Serialize, Deserialize)]
struct OverlapLine {
    node: String,
    per_class: BTreeMap<String, ClassOverlap>,
}

/// One JSON object per node: `{"node", "per_class": {class: {"words", "weight_sum"}}}`.
pub fn write_overlaps_jsonl(
    path: &Path,
    overlaps: &[OverlapSets],
    classes: &[String],
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KmfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for o in overlaps {
        let line = OverlapLine {
            node: o.node.clone(),
            per_class: classes
                .iter()
                .cloned()
                .zip(o.per_class.iter().cloned())
                .collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| KmfError::io(path, e.into()))?;
        writeln!(w).map_err(|e| KmfError::io(path, e))?;
    }
    w.flush().map_err(|e| KmfError::io(path, e))
}

pub fn read_overlaps_jsonl(path: &Path, classes: &[String]) -> Result<Vec<OverlapSets>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parsed: OverlapLine =
            serde_json::from_str(line).map_err(|e| KmfError::parse(path, i + 1, e.to_string()))?;
        let per_class = classes
            .iter()
            .map(|c| parsed.per_class.remove(c).unwrap_or_default())
            .collect();
        out.push(OverlapSets {
            node: parsed.node,
            per_class,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_topics::TopicEntry;

    fn tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_toy_dataset() {
        let nodes = tmp("a\tx\tdata mining\nb\ty\tgraphs\nc\tx\tmining graphs\n");
        let edges = tmp("a\tb\nb\tc\nc\tb\n");
        let ds = load_dataset(nodes.path(), edges.path(), 0, HashSet::new()).unwrap();
        assert_eq!((ds.len(), ds.edges.len()), (3, 2));
        assert_eq!(ds.classes, vec!["x", "y"]);
        assert_eq!(ds.nodes[2].tokens, vec!["mining", "graphs"]);
    }

    #[test]
    fn dataset_errors() {
        let nodes = tmp("a\tx\tt\nb\tx\tt\n");
        let err = load_dataset(nodes.path(), tmp("a\tzz\n").path(), 0, HashSet::new()).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");

        let dup = tmp("a\tx\tt\na\tx\tt\n");
        assert!(load_dataset(dup.path(), tmp("").path(), 0, HashSet::new()).is_err());

        let self_loop = tmp("a\ta\n");
        assert!(load_dataset(nodes.path(), self_loop.path(), 0, HashSet::new()).is_err());
    }

    #[test]
    fn tokenize_rules() {
        let filter = TokenFilter::fit(["Data Mining of Graphs"], 0, ["of".to_string()].into());
        assert_eq!(
            filter.tokenize("Data Mining of Graphs"),
            vec!["data", "mining", "graphs"]
        );
        assert!(filter.tokenize("").is_empty());

        let corpus = vec!["rare"; 20].join(" ") + " " + &vec!["common"; 21].join(" ");
        let filter = TokenFilter::fit([corpus.as_str()], 20, HashSet::new());
        assert_eq!(filter.tokenize("rare common"), vec!["common"]);
    }

    #[test]
    fn default_stopwords_cover_prepositions() {
        let sw = default_stopwords();
        for w in ["of", "for", "and", "the"] {
            assert!(sw.contains(w), "{w}");
        }
    }

    #[test]
    fn embedding_table_text_and_errors() {
        let f = tmp("2 4\nfoo 1 2 3 4\nbar\t0.5\t0\t0\t-1\n");
        let t = load_embedding_table(f.path()).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 4));
        assert_eq!(t.get("bar").unwrap(), &[0.5, 0.0, 0.0, -1.0]);
        assert!(t.get("baz").is_none());

        let bad = tmp("1 4\nfoo 1 2 3\n");
        match load_embedding_table(bad.path()) {
            Err(KmfError::EmbeddingDimension { word, .. }) => assert_eq!(word, "foo"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn embedding_table_binary_roundtrip() {
        let mut t = EmbeddingTable::new(3);
        t.insert("Data Mining", vec![0.1, -2.0, 1e-300]).unwrap();
        t.insert("x", vec![1.0, 2.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        t.write_binary(&p).unwrap();
        assert_eq!(load_embedding_table(&p).unwrap(), t);
        let p = dir.path().join("e.txt");
        t.write_text(&p).unwrap();
        assert_eq!(load_embedding_table(&p).unwrap(), t);
        assert!(t.contains("data_mining"));
    }

    fn nbhd(entries: &[(&str, usize)]) -> TopicNeighborhood {
        TopicNeighborhood {
            label: "c".into(),
            entries: entries
                .iter()
                .map(|&(w, h)| TopicEntry {
                    word: w.into(),
                    hop: h,
                    score: 1.0,
                })
                .collect(),
            radius: 2,
            percent: 100.0,
            skipped: 0,
        }
    }

    #[test]
    fn overlap_examples() {
        let node = NodeRecord {
            id: "v".into(),
            label: 0,
            tokens: vec!["a".into(), "b".into(), "b".into()],
        };
        let o = compute_overlaps(
            &node,
            &[
                nbhd(&[("b", 1), ("c", 0)]),
                nbhd(&[("z", 1)]),
                nbhd(&[("b", 2)]),
            ],
            0.8,
        );
        assert_eq!(o.per_class[0].words, vec![("b".to_string(), 1)]);
        assert!((o.per_class[0].weight_sum - 0.8).abs() < 1e-15);
        assert!(o.per_class[1].is_empty());
        assert_eq!(o.per_class[1].weight_sum, 0.0);
        assert_eq!(o.per_class[2].words, vec![("b".to_string(), 2)]);
    }

    #[test]
    fn overlaps_jsonl_roundtrip() {
        let node = NodeRecord {
            id: "v".into(),
            label: 0,
            tokens: vec!["a".into(), "b".into()],
        };
        let classes = vec!["c1".to_string(), "c2".to_string()];
        let o = vec![compute_overlaps(
            &node,
            &[nbhd(&[("b", 1)]), nbhd(&[("a", 0)])],
            0.8,
        )];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.jsonl");
        write_overlaps_jsonl(&p, &o, &classes).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(
            text.starts_with(
                r#"{"node":"v","per_class":{"c1":{"words":[["b",1]],"weight_sum":0.8}"#
            ),
            "{text}"
        );
        assert_eq!(read_overlaps_jsonl(&p, &classes).unwrap(), o);
    }
}
