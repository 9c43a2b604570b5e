//! Zero-shot cross-domain recommendation: edges touching one class are held
//! out, and each held-out link is ranked against randomly substituted fakes
//! using `s(u, v) = h_u · h_v`.

use std::str::FromStr;

use rand::seq::index::sample;
use serde::Serialize;

use crate::corpus::GraphDataset;
use crate::numerics::{dot, Tensor};
use crate::rng::{substream, RECSYS};
use crate::{KmfError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RankingMetrics {
    pub auc: f64,
    pub hit_rate: f64,
    pub mrr: f64,
    pub queries: usize,
}

/// AUC, HR@k and MRR@k for queries that each have one positive score and a
/// list of negative scores.
///
/// A positive's rank is one plus the number of negatives scoring at least as
/// high, so ties count against it. AUC counts tied pairs as one half.
pub fn ranking_metrics(positives: &[f64], negatives: &[Vec<f64>], k: usize) -> RankingMetrics {
    let (mut hits, mut rr, mut wins, mut pairs) = (0usize, 0.0, 0.0, 0usize);
    for (pos, negs) in positives.iter().zip(negatives) {
        let rank = 1 + negs.iter().filter(|&&n| n >= *pos).count();
        if rank <= k {
            hits += 1;
            rr += 1.0 / rank as f64;
        }
        for &n in negs {
            wins += if *pos > n {
                1.0
            } else if *pos == n {
                0.5
            } else {
                0.0
            };
        }
        pairs += negs.len();
    }
    let q = positives.len();
    if q == 0 {
        return RankingMetrics::default();
    }
    RankingMetrics {
        auc: if pairs == 0 { 0.0 } else { wins / pairs as f64 },
        hit_rate: hits as f64 / q as f64,
        mrr: rr / q as f64,
        queries: q,
    }
}

/// Where fake citations are drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativePool {
    /// Any node except the two endpoints.
    #[default]
    All,
    /// Nodes sharing the true target's class.
    Domain,
}

impl FromStr for NegativePool {
    type Err = KmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "domain" => Ok(Self::Domain),
            other => Err(KmfError::Config(format!("unknown negative pool '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecsysConfig {
    pub train_negatives: usize,
    pub test_negatives: usize,
    pub k: usize,
    pub seed: u64,
    pub pool: NegativePool,
}

impl Default for RecsysConfig {
    fn default() -> Self {
        Self {
            train_negatives: 5,
            test_negatives: 100,
            k: 10,
            seed: 0,
            pool: NegativePool::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecsysReport {
    pub class: String,
    pub train: RankingMetrics,
    pub test: RankingMetrics,
}

fn score_edges(
    hg: &Tensor,
    labels: &[usize],
    edges: &[(usize, usize)],
    negatives: usize,
    cfg: &RecsysConfig,
    stream: u64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = labels.len();
    let mut pos = Vec::with_capacity(edges.len());
    let mut negs = Vec::with_capacity(edges.len());
    for (i, &(u, v)) in edges.iter().enumerate() {
        let pool: Vec<usize> = (0..n)
            .filter(|&w| w != u && w != v)
            .filter(|&w| cfg.pool == NegativePool::All || labels[w] == labels[v])
            .collect();
        let mut rng = substream(cfg.seed, RECSYS, stream, i as u64);
        let fakes = sample(&mut rng, pool.len(), negatives.min(pool.len()));
        pos.push(dot(hg.row(u), hg.row(v)));
        negs.push(
            fakes
                .into_iter()
                .map(|j| dot(hg.row(u), hg.row(pool[j])))
                .collect(),
        );
    }
    (pos, negs)
}

/// Hold out every edge with an endpoint in `class`; rank each held-out target
/// against `test_negatives` fakes, and each remaining edge against
/// `train_negatives` fakes.
pub fn recsys_evaluate(
    hg: &Tensor,
    dataset: &GraphDataset,
    class: usize,
    cfg: &RecsysConfig,
) -> Result<RecsysReport> {
    let labels = dataset.labels();
    let name = dataset
        .classes
        .get(class)
        .ok_or_else(|| KmfError::Config(format!("class index {class} out of range")))?
        .clone();
    let (mut test, mut train) = (Vec::new(), Vec::new());
    for &(a, b) in &dataset.edges {
        if labels[a] == class {
            test.push((a, b));
        } else if labels[b] == class {
            test.push((b, a));
        } else {
            train.push((a, b));
        }
    }
    if test.is_empty() {
        return Err(KmfError::NoEdgesForClass(name));
    }
    let (tp, tn) = score_edges(hg, &labels, &test, cfg.test_negatives, cfg, 0);
    let (rp, rn) = score_edges(hg, &labels, &train, cfg.train_negatives, cfg, 1);
    Ok(RecsysReport {
        class: name,
        train: ranking_metrics(&rp, &rn, cfg.k),
        test: ranking_metrics(&tp, &tn, cfg.k),
    })
}
