//! Prefix-sum tree over nonnegative weights with O(log n) update and sampling.

#[derive(Clone, Debug)]
pub struct RateIndex {
    // 1-based Fenwick array
    tree: Vec<f64>,
    values: Vec<f64>,
    top_bit: usize,
}

impl RateIndex {
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &v) in values.iter().enumerate() {
            tree[i + 1] += v;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let top_bit = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        RateIndex {
            tree,
            values: values.to_vec(),
            top_bit,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.values[i];
        if delta == 0.0 {
            return;
        }
        self.values[i] = value;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    /// Sum of `values[0..end]`.
    pub fn prefix_sum(&self, end: usize) -> f64 {
        let mut j = end;
        let mut s = 0.0;
        while j > 0 {
            s += self.tree[j];
            j &= j - 1;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix_sum(self.len())
    }

    /// Exact (non-incremental) sum of all values.
    pub fn recomputed_total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Index `i` with `prefix_sum(i) ≤ target < prefix_sum(i + 1)`, skipping
    /// zero-weight entries. `target` must lie in `[0, total)`.
    pub fn find(&self, mut target: f64) -> usize {
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        // round-off can land on a zero-weight slot or past the end
        let mut i = pos.min(self.len() - 1);
        while self.values[i] == 0.0 && i > 0 {
            i -= 1;
        }
        while self.values[i] == 0.0 && i + 1 < self.len() {
            i += 1;
        }
        i
    }

    /// Rebuilds the tree from the stored values.
    pub fn rebuild(&mut self) {
        *self = RateIndex::new(&self.values);
    }
}
