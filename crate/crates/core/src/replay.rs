//! Fixed-capacity reservoir replay buffer.

use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::data::{write_samples_csv, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Sample>,
    stream_count: u64,
    frozen: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            stream_count: 0,
            frozen: false,
        }
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

    pub fn stream_count(&self) -> u64 {
        self.stream_count
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    /// Reservoir step: the n-th offered sample is kept with probability `B/n`,
    /// replacing a uniformly chosen slot.
    pub fn offer(&mut self, sample: Sample, rng: &mut impl Rng) -> Result<bool> {
        if self.frozen {
            return Err(Error::Protocol("offer to a frozen replay buffer".into()));
        }
        self.stream_count += 1;
        if self.entries.len() < self.capacity {
            self.entries.push(sample);
            return Ok(true);
        }
        let j = rng.random_range(0..self.stream_count);
        if (j as usize) < self.capacity {
            self.entries[j as usize] = sample;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Up to `k` distinct entries, uniformly without replacement.
    pub fn sample_batch(&self, k: usize, rng: &mut impl Rng) -> Vec<Sample> {
        let amount = k.min(self.entries.len());
        rand::seq::index::sample(rng, self.entries.len(), amount)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect()
    }

    /// Stops all further updates. Idempotent.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.entries {
            h.update(s.id.to_le_bytes());
            h.update([s.attr]);
            h.update((s.label as u64).to_le_bytes());
            for v in &s.features {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the contents in the dataset CSV format.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        write_samples_csv(path, &self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(id: u64) -> Sample {
        Sample {
            id,
            attr: (id % 2) as u8,
            label: (id % 3) as usize,
            features: vec![id as f64, -(id as f64)],
        }
    }

    #[test]
    fn under_capacity_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(10);
        for i in 0..5 {
            assert!(buf.offer(sample(i), &mut rng).unwrap());
        }
        assert_eq!(buf.len(), 5);
        assert_eq!(buf.stream_count(), 5);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReplayBuffer::new(7);
        for i in 0..500 {
            buf.offer(sample(i), &mut rng).unwrap();
            assert_eq!(buf.len() as u64, buf.stream_count().min(7));
        }
    }

    #[test]
    fn zero_capacity_stores_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReplayBuffer::new(0);
        for i in 0..10 {
            assert!(!buf.offer(sample(i), &mut rng).unwrap());
        }
        assert!(buf.is_empty());
        assert!(buf.sample_batch(4, &mut rng).is_empty());
    }

    #[test]
    fn frozen_buffer_rejects_offers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = ReplayBuffer::new(20);
        for i in 0..50 {
            buf.offer(sample(i), &mut rng).unwrap();
        }
        buf.freeze();
        buf.freeze();
        let before = buf.checksum();
        for i in 0..1000 {
            assert!(matches!(
                buf.offer(sample(1000 + i), &mut rng),
                Err(Error::Protocol(_))
            ));
        }
        assert_eq!(buf.checksum(), before);
        assert_eq!(buf.sample_batch(5, &mut rng).len(), 5);
    }

    #[test]
    fn sample_batch_is_distinct_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ReplayBuffer::new(30);
        for i in 0..30 {
            buf.offer(sample(i), &mut rng).unwrap();
        }
        let all = buf.sample_batch(100, &mut rng);
        let mut ids: Vec<u64> = all.iter().map(|s| s.id).collect();
        ids.sort();
        assert_eq!(ids, (0..30).collect::<Vec<_>>());

        let some = buf.sample_batch(8, &mut rng);
        let mut ids: Vec<u64> = some.iter().map(|s| s.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 8);

        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(buf.sample_batch(8, &mut a), buf.sample_batch(8, &mut b));
        assert!(ReplayBuffer::new(5).sample_batch(3, &mut a).is_empty());
    }

    #[test]
    fn dump_uses_dataset_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ReplayBuffer::new(4);
        for i in 0..4 {
            buf.offer(sample(i), &mut rng).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buffer.csv");
        buf.dump_csv(&path).unwrap();
        let back = crate::data::read_samples_csv(&path).unwrap();
        assert_eq!(back, buf.entries());
    }
}
