//! Sliding-window key/value ring buffer.

/// Per-block ring buffer of the most recent `capacity` key and value rows,
/// plus the absolute index of the next token.
///
/// Entries are plain values: gradients never flow into cached rows, which
/// are replayed as constants by later chunks.
#[derive(Clone, Debug)]
pub struct KVCache {
    capacity: usize,
    key_width: usize,
    value_width: usize,
    keys: Vec<f64>,
    values: Vec<f64>,
    total_tokens_seen: usize,
}

impl KVCache {
    pub fn new(capacity: usize, key_width: usize, value_width: usize) -> Self {
        KVCache {
            capacity,
            key_width,
            value_width,
            keys: vec![0.0; capacity * key_width],
            values: vec![0.0; capacity * value_width],
            total_tokens_seen: 0,
        }
    }

    /// Absolute index of the next token to be appended.
    pub fn total_tokens_seen(&self) -> usize {
        self.total_tokens_seen
    }

    /// Number of valid entries (at most `capacity`).
    pub fn fill(&self) -> usize {
        self.total_tokens_seen.min(self.capacity)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append one token's key/value rows, evicting the oldest when full.
    pub fn append(&mut self, key_row: &[f64], value_row: &[f64]) {
        assert_eq!(key_row.len(), self.key_width, "key row width {} vs cache width {}", key_row.len(), self.key_width);
        assert_eq!(value_row.len(), self.value_width, "value row width {} vs cache width {}", value_row.len(), self.value_width);
        if self.capacity == 0 {
            self.total_tokens_seen += 1;
            return;
        }
        let slot = self.total_tokens_seen % self.capacity;
        self.keys[slot * self.key_width..(slot + 1) * self.key_width].copy_from_slice(key_row);
        self.values[slot * self.value_width..(slot + 1) * self.value_width].copy_from_slice(value_row);
        self.total_tokens_seen += 1;
    }

    /// Valid entries in chronological order along with their absolute
    /// token positions.
    pub fn snapshot(&self) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let fill = self.fill();
        let mut keys = Vec::with_capacity(fill * self.key_width);
        let mut values = Vec::with_capacity(fill * self.value_width);
        let mut positions = Vec::with_capacity(fill);
        let first = self.total_tokens_seen - fill;
        for pos in first..self.total_tokens_seen {
            let slot = pos % self.capacity.max(1);
            keys.extend_from_slice(&self.keys[slot * self.key_width..(slot + 1) * self.key_width]);
            values.extend_from_slice(&self.values[slot * self.value_width..(slot + 1) * self.value_width]);
            positions.push(pos);
        }
        (keys, values, positions)
    }

    /// Reset to the empty state (position 0).
    pub fn clear(&mut self) {
        self.total_tokens_seen = 0;
    }
}

/// Floats needed to cache keys for `depth` blocks of width `key_dim` over a
/// window of `window` tokens: `depth * key_dim * window` (values take the
/// analogous `depth * value_dim * window`).
pub fn kv_cache_floats(depth: usize, key_dim: usize, window: usize) -> u64 {
    depth as u64 * key_dim as u64 * window as u64
}
