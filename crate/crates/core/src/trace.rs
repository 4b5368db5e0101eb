//! Append-only cost trace emitted by the executor and folded by the cost model.

use crate::camarray::CamEvent;
use crate::netexec::{Dataflow, LayerKind};

/// Shape of one dot-product layer execution (one image).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DotShape {
    /// Number of activation vectors (output positions).
    pub patches: usize,
    /// Number of weight vectors (output channels).
    pub kernels: usize,
    /// Flattened vector length.
    pub inputs: usize,
    pub dataflow: Dataflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PostOp {
    /// Cosine lookup, norm multiply and bias add for one output element.
    DotFinalize,
    Relu,
    MaxPool,
    AvgPool,
    BatchNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostEvent {
    /// Marks the start of one layer execution.
    Layer {
        kind: LayerKind,
        dot: Option<DotShape>,
    },
    Cam {
        rows: usize,
        event: CamEvent,
    },
    /// Online context generation for one activation vector.
    Transform {
        inputs: usize,
        hash_bits: usize,
    },
    Post {
        op: PostOp,
        elements: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub layer: usize,
    pub event: CostEvent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostTrace {
    entries: Vec<TraceEntry>,
    enabled: bool,
}

impl Default for CostTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl CostTrace {
    pub fn new() -> Self {
        Self { entries: Vec::new(), enabled: true }
    }

    /// A sink that drops every event (accuracy-only runs).
    pub fn disabled() -> Self {
        Self { entries: Vec::new(), enabled: false }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, layer: usize, event: CostEvent) {
        if self.enabled {
            self.entries.push(TraceEntry { layer, event });
        }
    }

    pub fn push_cam(&mut self, layer: usize, rows: usize, events: impl IntoIterator<Item = CamEvent>) {
        if self.enabled {
            self.entries
                .extend(events.into_iter().map(|event| TraceEntry { layer, event: CostEvent::Cam { rows, event } }));
        }
    }

    pub fn append(&mut self, other: &mut CostTrace) {
        if self.enabled {
            self.entries.append(&mut other.entries);
        } else {
            other.entries.clear();
        }
    }

    pub fn concat(mut self, mut other: CostTrace) -> CostTrace {
        self.append(&mut other);
        self
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter()
    }
}
