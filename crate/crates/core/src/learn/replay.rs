use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-capacity uniform sample of a stream (reservoir sampling, Algorithm R).
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    n_seen: u64,
    rng: ChaCha8Rng,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            n_seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    /// Items offered over the buffer's lifetime.
    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Offers one item. While filling, it is always kept; afterwards it
    /// replaces a uniformly chosen slot with probability `capacity / n_seen`.
    pub fn reservoir_update(&mut self, item: T) {
        self.n_seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
            return;
        }
        let j = self.rng.gen_range(0..self.n_seen);
        if j < self.capacity as u64 {
            self.items[j as usize] = item;
        }
    }
}

impl<T: PartialEq> PartialEq for ReplayBuffer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity && self.items == other.items && self.n_seen == other.n_seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_phase_keeps_everything() {
        let mut b = ReplayBuffer::new(10, 1);
        for i in 0..10 {
            b.reservoir_update(i);
        }
        assert_eq!(b.items(), &(0..10).collect::<Vec<_>>()[..]);
        b.reservoir_update(10);
        assert_eq!(b.len(), 10);
        assert_eq!(b.n_seen(), 11);
    }

    #[test]
    fn zero_capacity_stores_nothing() {
        let mut b = ReplayBuffer::new(0, 1);
        b.reservoir_update(5);
        assert!(b.is_empty());
        assert_eq!(b.n_seen(), 1);
    }

    #[test]
    fn same_seed_same_contents() {
        let run = |seed| {
            let mut b = ReplayBuffer::new(10, seed);
            (0..100).for_each(|i| b.reservoir_update(i));
            b.items().to_vec()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
