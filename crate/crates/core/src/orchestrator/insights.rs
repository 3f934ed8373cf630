use alloc::collections::VecDeque;

use crate::domain::Insight;

/// Bounded FIFO of optimization insights, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct InsightStore {
    items: VecDeque<Insight>,
    capacity: usize,
}

impl InsightStore {
    pub fn new(capacity: usize) -> Self {
        InsightStore {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest insight when full.
    pub fn push(&mut self, insight: Insight) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(insight);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Insight> {
        self.items.iter()
    }

    /// The `n` most recent insights, oldest of them first.
    pub fn recent(&self, n: usize) -> impl Iterator<Item = &Insight> {
        self.items.iter().skip(self.items.len().saturating_sub(n))
    }
}
