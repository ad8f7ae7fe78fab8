//! Named parameter store and gradient accumulator.
//!
//! Layers do not own their weights; they hold [`ParamId`] handles into a
//! [`ParamStore`] owned by the model. This keeps forward passes read-only
//! (shareable across threads), lets the optimizer walk every trainable
//! tensor generically, and gives checkpoints a stable name/order for byte
//! -identical serialization.
//!
//! Non-trainable entries (batch-norm running statistics) live in the same
//! store so checkpoint averaging and save/load cover them uniformly.

use crate::tensor::Tensor;

/// Handle to one parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Ordered collection of named parameter tensors. Registration order is the
/// canonical order for optimizer state, checkpoints, and averaging.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|e| e.name == name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        debug_assert_eq!(self.entries[id.0].value.shape(), value.shape());
        self.entries[id.0].value = value;
    }

    /// In-place mutable access (optimizer steps, running-stat updates).
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Total scalar count over trainable entries.
    pub fn n_trainable_scalars(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel() as u64)
            .sum()
    }

    /// Ids in registration order (e.g. for walking optimizer state).
    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.entries.len()).map(ParamId).collect()
    }
}

/// Gradient accumulator aligned with a [`ParamStore`]: slot `i` holds the
/// gradient of the loss w.r.t. parameter `i`, zero-initialized.
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            slots: store
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0]
    }

    /// Accumulate `delta` into the slot for `id`.
    pub fn accumulate(&mut self, id: ParamId, delta: &Tensor) {
        debug_assert_eq!(self.slots[id.0].shape(), delta.shape());
        let slot = &mut self.slots[id.0];
        let dst = slot.data_mut();
        for (d, s) in dst.iter_mut().zip(delta.data()) {
            *d += s;
        }
    }

    /// Accumulate a single scalar coordinate (hot path in conv backward).
    pub fn accumulate_at(&mut self, id: ParamId, flat_index: usize, delta: f64) {
        self.slots[id.0].data_mut()[flat_index] += delta;
    }

    /// Elementwise sum with another accumulator (fixed order: self += other).
    pub fn merge(&mut self, other: &Grads) {
        debug_assert_eq!(self.slots.len(), other.slots.len());
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            let dst = a.data_mut();
            for (d, s) in dst.iter_mut().zip(b.data()) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for slot in &mut self.slots {
            for v in slot.data_mut() {
                *v *= s;
            }
        }
    }
}
