use rand::Rng;

use crate::mdp::TransitionSample;
use crate::{Error, Result};

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<TransitionSample>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 })
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

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: TransitionSample) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `batch` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<TransitionSample>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::invalid(format!(
                "cannot sample {batch} from a buffer holding {}",
                self.items.len()
            )));
        }
        Ok((0..batch).map(|_| self.items[rng.random_range(0..self.items.len())]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionSample> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(state: usize) -> TransitionSample {
        TransitionSample { state, action: 0, reward: 0.0, next_state: 0, done: false }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for s in 0..5 {
            b.push(t(s));
        }
        let mut states: Vec<usize> = b.iter().map(|x| x.state).collect();
        states.sort();
        assert_eq!(states, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_needs_enough_items() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(t(0));
        let mut rng = seeded(0);
        assert!(b.sample(2, &mut rng).is_err());
        b.push(t(1));
        let batch = b.sample(2, &mut rng).unwrap();
        assert!(batch.iter().all(|x| x.state < 2));
        assert!(ReplayBuffer::new(0).is_err());
    }
}
