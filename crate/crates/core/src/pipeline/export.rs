use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::GraphDataset;
use crate::numerics::Tensor;
use crate::{KmfError, Result};

/// `id⟨TAB⟩class⟨TAB⟩v₁⟨TAB⟩…⟨TAB⟩v_d` per node.
pub fn export_embeddings(path: &Path, dataset: &GraphDataset, hg: &Tensor) -> Result<()> {
    if hg.rows() != dataset.len() {
        return Err(KmfError::Shape(format!(
            "{} representations for {} nodes",
            hg.rows(),
            dataset.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| KmfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| KmfError::io(path, e);
    for (v, node) in dataset.nodes.iter().enumerate() {
        write!(w, "{}\t{}", node.id, dataset.classes[node.label]).map_err(io)?;
        for x in hg.row(v) {
            write!(w, "\t{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
