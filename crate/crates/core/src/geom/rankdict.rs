//! Sorted-multiset dictionary with rank and positional select.

use super::GeomError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDict {
    sorted: Vec<u64>,
}

impl RankDict {
    pub fn new(mut values: Vec<u64>) -> Self {
        values.sort_unstable();
        RankDict { sorted: values }
    }

    /// Builds from values already sorted ascending.
    pub fn from_sorted(values: Vec<u64>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        RankDict { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Number of stored values strictly less than `x`.
    pub fn rank_of(&self, x: u64) -> usize {
        self.sorted.partition_point(|&v| v < x)
    }

    /// i-th smallest value, 1-based.
    pub fn select_pos(&self, i: usize) -> Result<u64, GeomError> {
        if i == 0 || i > self.sorted.len() {
            return Err(GeomError::InvalidRange { lo: i, hi: i, len: self.sorted.len() });
        }
        Ok(self.sorted[i - 1])
    }
}
