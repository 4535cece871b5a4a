//! FIFO memory bank of detached anchor embeddings.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CAPACITY: usize = 256;

/// One labeled anchor: its message-passing (`z`) and kernel (`w`) vectors.
/// Both are plain values, so no gradient can reach them.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub graph_id: usize,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    entries: VecDeque<BankEntry>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("memory bank capacity must be positive".into()));
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends at the back, evicting from the front once full.
    pub fn push(&mut self, entry: BankEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    /// Entries oldest first.
    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter()
    }

    /// `M x d` matrix of `z` anchors, oldest first.
    pub fn z_anchors(&self) -> Result<Tensor> {
        stack(self.entries.iter().map(|e| e.z.as_slice()))
    }

    /// `M x d` matrix of `w` anchors, oldest first.
    pub fn w_anchors(&self) -> Result<Tensor> {
        stack(self.entries.iter().map(|e| e.w.as_slice()))
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = rows.map(<[f64]>::to_vec).collect();
    Tensor::from_rows(&rows)
}
