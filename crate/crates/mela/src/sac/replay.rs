use crate::error::{Error, Result};
use rand::Rng;

/// One replay tuple. `state` and `next_state` hold the full stored
/// observation layout of the task.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Ring buffer with FIFO eviction and uniform without-replacement batch
/// sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::contract("ReplayBuffer::new", "capacity must be > 0"));
        }
        Ok(ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample of `batch` distinct transitions.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&'a Transition>> {
        if batch == 0 || batch > self.items.len() {
            return Err(Error::contract(
                "replay_sample",
                format!("batch {batch} from buffer of {}", self.items.len()),
            ));
        }
        let idx = rand::seq::index::sample(rng, self.items.len(), batch);
        Ok(idx.iter().map(|i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn t(v: f64) -> Transition {
        Transition {
            state: vec![v],
            action: vec![0.0],
            reward: v,
            next_state: vec![v],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_drops_the_oldest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.items.iter().map(|x| x.reward).collect();
        // 0 and 1 evicted; 2, 3, 4 remain (in ring order).
        let mut sorted = rewards.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..1000 {
            buf.push(t(i as f64));
            assert!(buf.len() <= 10);
        }
    }

    #[test]
    fn batch_sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for i in 0..50 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let batch = buf.sample(50, &mut rng).unwrap();
        let mut seen: Vec<f64> = batch.iter().map(|x| x.reward).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 50);
    }

    #[test]
    fn oversized_batch_rejected() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push(t(1.0));
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        assert!(buf.sample(2, &mut rng).is_err());
        assert!(buf.sample(0, &mut rng).is_err());
    }
}
