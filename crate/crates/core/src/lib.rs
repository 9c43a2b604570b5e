//! Knowledge-aware multi-faceted (KMF) zero-shot node classification.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`kg_topics`] extracts a filtered topic neighborhood for each class label
//!    from an offline knowledge-graph snapshot and pools it into a class
//!    semantic description (CSD).
//! 2. [`corpus`] and [`facets`] intersect every node's text with each topic
//!    neighborhood, producing one facet embedding per class, and compose the
//!    facets into the initial node state. [`facets`] also draws the topic masks
//!    used for the augmented contrastive view.
//! 3. [`gnn`] runs gated message passing, [`objectives`] assembles the joint
//!    loss on a reverse-mode tape from [`numerics`], and [`pipeline`] drives
//!    training, zero-shot prediction and evaluation.

pub mod corpus;
pub mod error;
pub mod facets;
pub mod gnn;
pub mod kg_topics;
pub mod numerics;
pub mod objectives;
pub mod pipeline;
pub mod rng;

pub use error::{KmfError, Result};
