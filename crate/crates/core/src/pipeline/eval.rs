use std::collections::HashMap;

use rand::Rng;

use crate::gnn::{forward, AdjacencyIndex, GnnParams};
use crate::numerics::{dot, Tensor};
use crate::pipeline::PreparedGraph;
use crate::rng::substream;
use crate::{KmfError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub node: String,
    /// Class index.
    pub class: usize,
}

/// Final representations of every node, aggregating over all neighbors.
pub fn represent(params: &GnnParams, prepared: &PreparedGraph) -> Result<Tensor> {
    forward(
        &prepared.h0,
        &AdjacencyIndex::full(prepared.adjacency.clone()),
        params,
    )
}

/// Arg-max of `h_v · S_c` over `targets` for each node in `nodes`; ties go to
/// the target listed first.
pub fn predict(
    hg: &Tensor,
    csds: &Tensor,
    nodes: &[usize],
    targets: &[usize],
) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(KmfError::EmptyTargetSet);
    }
    Ok(nodes
        .iter()
        .map(|&v| {
            let mut best = (targets[0], f64::NEG_INFINITY);
            for &c in targets {
                let s = dot(hg.row(v), csds.row(c));
                if s > best.1 {
                    best = (c, s);
                }
            }
            best.0
        })
        .collect())
}

/// Fraction of nodes whose predicted class matches the truth. Both lists must
/// cover the same node ids.
pub fn evaluate_accuracy(predictions: &[Prediction], truth: &[Prediction]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(KmfError::IdMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let expected: HashMap<&str, usize> = truth.iter().map(|t| (t.node.as_str(), t.class)).collect();
    if expected.len() != truth.len() {
        return Err(KmfError::IdMismatch("duplicate node id in labels".into()));
    }
    let mut correct = 0usize;
    let mut seen = std::collections::HashSet::new();
    for p in predictions {
        let Some(&c) = expected.get(p.node.as_str()) else {
            return Err(KmfError::IdMismatch(format!(
                "node '{}' has no label",
                p.node
            )));
        };
        if !seen.insert(p.node.as_str()) {
            return Err(KmfError::IdMismatch(format!(
                "node '{}' predicted twice",
                p.node
            )));
        }
        correct += usize::from(c == p.class);
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(correct as f64 / truth.len() as f64)
}

/// Fraction of `nodes` whose label equals the predicted class.
pub fn accuracy(predicted: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .zip(predicted)
        .filter(|&(&v, &p)| labels[v] == p)
        .count();
    correct as f64 / nodes.len() as f64
}

/// Zero-shot accuracy of `params` on `nodes`, choosing among `targets`.
pub fn zero_shot_accuracy(
    hg: &Tensor,
    csds: &Tensor,
    labels: &[usize],
    nodes: &[usize],
    targets: &[usize],
) -> Result<f64> {
    let predicted = predict(hg, csds, nodes, targets)?;
    Ok(accuracy(&predicted, labels, nodes))
}

/// Uniform random class from `targets` for each node.
pub fn random_guess(nodes: &[usize], targets: &[usize], seed: u64) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(KmfError::EmptyTargetSet);
    }
    let mut rng = substream(seed, "random_guess", 0, 0);
    Ok(nodes
        .iter()
        .map(|_| targets[rng.gen_range(0..targets.len())])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_target_takes_all() {
        let hg = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0]).unwrap();
        let csds = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            predict(&hg, &csds, &[0, 1, 2], &[1]).unwrap(),
            vec![1, 1, 1]
        );
        assert!(matches!(
            predict(&hg, &csds, &[0], &[]),
            Err(KmfError::EmptyTargetSet)
        ));
    }

    #[test]
    fn matching_csd_wins() {
        let hg = Tensor::matrix(1, 3, vec![0.2, 0.7, 0.1]).unwrap();
        let csds =
            Tensor::matrix(3, 3, vec![0.7, -0.2, 0.0, 0.2, 0.7, 0.1, 0.0, 0.1, -0.7]).unwrap();
        assert_eq!(predict(&hg, &csds, &[0], &[0, 1, 2]).unwrap(), vec![1]);
    }

    #[test]
    fn matches_exhaustive_table() {
        let hg = Tensor::matrix(4, 2, vec![0.3, 0.9, 0.8, 0.1, 0.5, 0.5, 0.0, 0.2]).unwrap();
        let csds = Tensor::matrix(3, 2, vec![1.0, -1.0, -0.5, 2.0, 0.4, 0.4]).unwrap();
        let targets = [2, 0, 1];
        let got = predict(&hg, &csds, &[0, 1, 2, 3], &targets).unwrap();
        for (v, &g) in got.iter().enumerate() {
            let table: Vec<f64> = targets
                .iter()
                .map(|&c| hg.get(v, 0) * csds.get(c, 0) + hg.get(v, 1) * csds.get(c, 1))
                .collect();
            let best = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = targets[table.iter().position(|&s| s == best).unwrap()];
            assert_eq!(g, first);
        }
    }

    #[test]
    fn ties_go_to_first_target() {
        let hg = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let csds = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(predict(&hg, &csds, &[0], &[1, 0]).unwrap(), vec![1]);
        assert_eq!(predict(&hg, &csds, &[0], &[0, 1]).unwrap(), vec![0]);
    }

    fn p(node: &str, class: usize) -> Prediction {
        Prediction {
            node: node.into(),
            class,
        }
    }

    #[test]
    fn accuracy_examples() {
        let truth = [p("a", 0), p("b", 1), p("c", 1), p("d", 0)];
        assert_eq!(evaluate_accuracy(&truth, &truth).unwrap(), 1.0);
        let half = [p("d", 1), p("c", 1), p("b", 0), p("a", 0)];
        assert_eq!(evaluate_accuracy(&half, &truth).unwrap(), 0.5);
        let wrong_ids = [p("a", 0), p("b", 1), p("c", 1), p("e", 0)];
        assert!(matches!(
            evaluate_accuracy(&wrong_ids, &truth),
            Err(KmfError::IdMismatch(_))
        ));
        assert!(evaluate_accuracy(&truth[..3], &truth).is_err());
    }

    #[test]
    fn random_guess_rate() {
        let n = 20_000;
        let nodes: Vec<usize> = (0..n).collect();
        let labels: Vec<usize> = (0..n).map(|v| 3 + v % 2).collect();
        let guess = random_guess(&nodes, &[3, 4], 11).unwrap();
        let acc = accuracy(&guess, &labels, &nodes);
        let sigma = (0.25 / n as f64).sqrt();
        assert!((acc - 0.5).abs() < 3.0 * sigma, "{acc}");
        assert_eq!(guess, random_guess(&nodes, &[3, 4], 11).unwrap());
    }
}
