use rand::Rng;

/// Weighted index sampler over a Fenwick tree: O(log n) updates and draws.
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    tree: Vec<f64>,
    weights: Vec<f64>,
    top: usize,
}

impl WeightedSampler {
    pub fn new(n: usize) -> Self {
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self {
            tree: vec![0.0; n],
            weights: vec![0.0; n],
            top,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        self.weights[i] = w;
        let mut j = i + 1;
        while j <= self.tree.len() {
            self.tree[j - 1] += delta;
            j += j & j.wrapping_neg();
        }
    }

    pub fn total(&self) -> f64 {
        let mut sum = 0.0;
        let mut j = self.tree.len();
        while j > 0 {
            sum += self.tree[j - 1];
            j &= j - 1;
        }
        sum
    }

    /// Index `i` with prefix(i) <= u < prefix(i + 1).
    fn find(&self, mut u: f64) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= self.tree.len() && self.tree[next - 1] <= u {
                pos = next;
                u -= self.tree[next - 1];
            }
            step >>= 1;
        }
        pos.min(self.tree.len() - 1)
    }

    /// Draws an index with probability proportional to its weight, or None
    /// if every weight is zero.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        let total = self.total();
        if !(total > 0.0) {
            return None;
        }
        for _ in 0..8 {
            let i = self.find(rng.gen::<f64>() * total);
            if self.weights[i] > 0.0 {
                return Some(i);
            }
        }
        // Rounding left the draw on an empty slot; settle for the heaviest.
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}
