use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::GraphDataset;
use crate::pipeline::config::{SplitConfig, SplitMode};
use crate::rng::{substream, SPLIT};
use crate::{KmfError, Result};

/// Class-level partition. All lists hold class indices in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSplit {
    pub mode: SplitMode,
    /// Seen classes whose nodes carry training labels.
    pub train: Vec<usize>,
    /// Seen classes held out for model selection (mode II).
    pub val: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl ClassSplit {
    /// `C^s`: training and validation classes.
    pub fn seen(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.train.iter().chain(&self.val).copied().collect();
        s.sort_unstable();
        s
    }
}

/// Node indices induced by a class split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePartition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Randomly assign `num_classes` classes to train / val / unseen.
pub fn make_split(num_classes: usize, spec: &SplitConfig, seed: u64) -> Result<ClassSplit> {
    let requested = spec.train + spec.val + spec.unseen;
    if requested != num_classes {
        return Err(KmfError::Split(format!(
            "split [{}/{}/{}] covers {requested} classes but the dataset has {num_classes}",
            spec.train, spec.val, spec.unseen
        )));
    }
    if spec.train == 0 || spec.unseen == 0 {
        return Err(KmfError::Split(
            "need at least one training and one unseen class".into(),
        ));
    }
    match spec.mode {
        SplitMode::I if spec.val != 0 => {
            return Err(KmfError::Split("mode I takes no validation classes".into()))
        }
        SplitMode::II if spec.val == 0 => {
            return Err(KmfError::Split("mode II needs validation classes".into()))
        }
        _ => {}
    }
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(&mut substream(seed, SPLIT, 0, 0));
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(ClassSplit {
        mode: spec.mode,
        train: sorted(&order[..spec.train]),
        val: sorted(&order[spec.train..spec.train + spec.val]),
        unseen: sorted(&order[spec.train + spec.val..]),
    })
}

/// Assign nodes by class membership. In mode I, `unseen_val_fraction` of the
/// unseen-class nodes move from test to validation.
pub fn partition_nodes(
    dataset: &GraphDataset,
    split: &ClassSplit,
    unseen_val_fraction: f64,
    seed: u64,
) -> NodePartition {
    let labels = dataset.labels();
    let of = |classes: &[usize]| -> Vec<usize> {
        (0..labels.len())
            .filter(|&v| classes.contains(&labels[v]))
            .collect()
    };
    let train = of(&split.train);
    let mut val = of(&split.val);
    let mut test = of(&split.unseen);
    if split.mode == SplitMode::I && unseen_val_fraction > 0.0 {
        let mut rng = substream(seed, SPLIT, 1, 0);
        let (held, rest): (Vec<usize>, Vec<usize>) = test
            .iter()
            .partition(|_| rng.gen::<f64>() < unseen_val_fraction);
        val = held;
        test = rest;
    }
    NodePartition { train, val, test }
}
