use std::path::Path;

use crate::corpus::{
    default_stopwords, load_dataset, load_embedding_table, load_stopwords, EmbeddingTable,
    GraphDataset,
};
use crate::kg_topics::{read_neighborhoods_jsonl, TopicNeighborhood};
use crate::pipeline::TrainConfig;
use crate::Result;

/// A dataset directory with its topic neighborhoods and embedding table.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub dataset: GraphDataset,
    pub nbhds: Vec<TopicNeighborhood>,
    pub table: EmbeddingTable,
}

/// Read `nodes.tsv` and `edges.tsv` from `dir`, tokenizing with the
/// configured stopwords and minimum count.
pub fn load_graph(dir: &Path, config: &TrainConfig) -> Result<GraphDataset> {
    let stopwords = match &config.stopwords {
        Some(p) => load_stopwords(Path::new(p))?,
        None => default_stopwords(),
    };
    load_dataset(
        &dir.join("nodes.tsv"),
        &dir.join("edges.tsv"),
        config.min_count,
        stopwords,
    )
}

pub fn load_inputs(dir: &Path, topics: &Path, emb: &Path, config: &TrainConfig) -> Result<Inputs> {
    Ok(Inputs {
        dataset: load_graph(dir, config)?,
        nbhds: read_neighborhoods_jsonl(topics)?,
        table: load_embedding_table(emb)?,
    })
}
